//! Sparse bosonic Fock-state algebra.
//!
//! A [`KetExpansion`] stores amplitudes keyed by `(basis state, ε-order)`. The
//! order is bookkeeping attached when a squeezer creates a term; the same Fock
//! basis state may therefore appear at several orders (stimulated emission and
//! pair annihilation mix photon number and ε-power). Physical amplitudes sum
//! over orders, see [`KetExpansion::amplitude`].

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Default magnitude below which amplitudes are dropped.
pub const DEFAULT_PRUNE: f64 = 1e-14;

/// Largest photon number any single mode may carry.
pub const MAX_PHOTONS_PER_MODE: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Polarization {
    H,
    V,
}

impl Polarization {
    pub fn flipped(self) -> Self {
        match self {
            Polarization::H => Polarization::V,
            Polarization::V => Polarization::H,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Polarization::H => 0,
            Polarization::V => 1,
        }
    }
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarization::H => "H",
            Polarization::V => "V",
        })
    }
}

/// One optical mode. Ordered by path, then `H < V`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModeLabel {
    pub path: u32,
    pub pol: Polarization,
}

impl ModeLabel {
    pub const fn new(path: u32, pol: Polarization) -> Self {
        Self { path, pol }
    }

    pub const fn h(path: u32) -> Self {
        Self::new(path, Polarization::H)
    }

    pub const fn v(path: u32) -> Self {
        Self::new(path, Polarization::V)
    }
}

impl fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.path, self.pol)
    }
}

/// Occupation-number basis state. Only non-zero occupations are stored, sorted by mode.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FockBasisState {
    occ: Vec<(ModeLabel, u32)>,
}

impl FockBasisState {
    pub fn vacuum() -> Self {
        Self::default()
    }

    /// Builds a state from `(mode, n)` pairs; repeated modes accumulate, zeros are dropped.
    pub fn from_occupations(items: impl IntoIterator<Item = (ModeLabel, u32)>) -> Self {
        let mut map = BTreeMap::new();
        for (m, n) in items {
            *map.entry(m).or_insert(0) += n;
        }
        Self { occ: map.into_iter().filter(|&(_, n)| n > 0).collect() }
    }

    pub fn is_vacuum(&self) -> bool {
        self.occ.is_empty()
    }

    pub fn occupation(&self, mode: ModeLabel) -> u32 {
        match self.occ.binary_search_by(|(m, _)| m.cmp(&mode)) {
            Ok(i) => self.occ[i].1,
            Err(_) => 0,
        }
    }

    pub fn with_occupation(&self, mode: ModeLabel, n: u32) -> Self {
        let mut occ = self.occ.clone();
        match occ.binary_search_by(|(m, _)| m.cmp(&mode)) {
            Ok(i) if n == 0 => {
                occ.remove(i);
            }
            Ok(i) => occ[i].1 = n,
            Err(_) if n == 0 => {}
            Err(i) => occ.insert(i, (mode, n)),
        }
        Self { occ }
    }

    pub fn total_photons(&self) -> u32 {
        self.occ.iter().map(|&(_, n)| n).sum()
    }

    /// `(n_H, n_V)` on one path.
    pub fn path_photons(&self, path: u32) -> (u32, u32) {
        (self.occupation(ModeLabel::h(path)), self.occupation(ModeLabel::v(path)))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ModeLabel, u32)> + '_ {
        self.occ.iter().copied()
    }

    /// Relabels every mode through `f`; occupations of colliding images add.
    pub fn map_modes(&self, f: impl Fn(ModeLabel) -> ModeLabel) -> Self {
        Self::from_occupations(self.occ.iter().map(|&(m, n)| (f(m), n)))
    }

    /// Drops all modes for which `keep` is false.
    pub fn restricted(&self, keep: impl Fn(ModeLabel) -> bool) -> Self {
        Self { occ: self.occ.iter().copied().filter(|&(m, _)| keep(m)).collect() }
    }
}

impl fmt::Display for FockBasisState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.occ.is_empty() {
            return f.write_str("|vac⟩");
        }
        f.write_str("|")?;
        for (i, (m, n)) in self.occ.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}_{}{}", n, m.path, m.pol)?;
        }
        f.write_str("⟩")
    }
}

/// One `(basis, amplitude, order)` entry of an expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbativeTerm<T: Scalar> {
    pub basis: FockBasisState,
    pub amplitude: Complex<T>,
    pub order: u32,
}

/// Sparse ket truncated in powers of the source efficiencies.
#[derive(Debug, Clone)]
pub struct KetExpansion<T: Scalar> {
    terms: BTreeMap<(FockBasisState, u32), Complex<T>>,
    max_order: u32,
    prune: T,
}

impl<T: Scalar> PartialEq for KetExpansion<T> {
    /// Structural equality of the stored terms; truncation settings are not compared.
    fn eq(&self, other: &Self) -> bool {
        self.terms == other.terms
    }
}

impl<T: Scalar> KetExpansion<T> {
    pub fn zero(max_order: u32) -> Self {
        Self { terms: BTreeMap::new(), max_order, prune: T::of(DEFAULT_PRUNE) }
    }

    pub fn vacuum(max_order: u32) -> Self {
        let mut k = Self::zero(max_order);
        k.terms.insert((FockBasisState::vacuum(), 0), Complex::new(T::one(), T::zero()));
        k
    }

    /// Single basis state with unit amplitude at order 0.
    pub fn basis(state: FockBasisState, max_order: u32) -> Self {
        let mut k = Self::zero(max_order);
        k.terms.insert((state, 0), Complex::new(T::one(), T::zero()));
        k
    }

    pub fn from_terms(terms: impl IntoIterator<Item = PerturbativeTerm<T>>, max_order: u32) -> Self {
        let mut k = Self::zero(max_order);
        for t in terms {
            k.accumulate(t.basis, t.order, t.amplitude);
        }
        k.pruned()
    }

    pub fn with_prune_threshold(mut self, prune: T) -> Self {
        self.prune = prune;
        self.pruned()
    }

    pub fn prune_threshold(&self) -> T {
        self.prune
    }

    pub fn max_order(&self) -> u32 {
        self.max_order
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = PerturbativeTerm<T>> + '_ {
        self.terms.iter().map(|((b, o), a)| PerturbativeTerm { basis: b.clone(), amplitude: *a, order: *o })
    }

    /// Physical amplitude of `basis`, summed over orders.
    pub fn amplitude(&self, basis: &FockBasisState) -> Complex<T> {
        self.terms
            .range((basis.clone(), 0)..=(basis.clone(), u32::MAX))
            .fold(Complex::new(T::zero(), T::zero()), |acc, (_, a)| acc + *a)
    }

    pub fn amplitude_at(&self, basis: &FockBasisState, order: u32) -> Complex<T> {
        self.terms.get(&(basis.clone(), order)).copied().unwrap_or_else(|| Complex::new(T::zero(), T::zero()))
    }

    /// Distinct basis states with their summed amplitudes.
    pub fn collapsed(&self) -> BTreeMap<FockBasisState, Complex<T>> {
        let mut out: BTreeMap<FockBasisState, Complex<T>> = BTreeMap::new();
        for ((b, _), a) in &self.terms {
            let e = out.entry(b.clone()).or_insert_with(|| Complex::new(T::zero(), T::zero()));
            *e = *e + *a;
        }
        out
    }

    pub(crate) fn accumulate(&mut self, basis: FockBasisState, order: u32, amp: Complex<T>) {
        let e = self.terms.entry((basis, order)).or_insert_with(|| Complex::new(T::zero(), T::zero()));
        *e = *e + amp;
    }

    pub(crate) fn pruned(mut self) -> Self {
        let thr = self.prune;
        self.terms.retain(|_, a| {
            let n = a.norm();
            n != T::zero() && !(n < thr)
        });
        self
    }

    pub(crate) fn empty_like(&self) -> Self {
        Self { terms: BTreeMap::new(), max_order: self.max_order, prune: self.prune }
    }

    /// Applies `f` to every term and collects the images by linearity.
    pub(crate) fn map_terms(
        &self,
        mut f: impl FnMut(&FockBasisState, u32, Complex<T>, &mut dyn FnMut(FockBasisState, u32, Complex<T>)),
    ) -> Self {
        let mut out = self.empty_like();
        for ((b, o), a) in &self.terms {
            f(b, *o, *a, &mut |nb, no, na| out.accumulate(nb, no, na));
        }
        out.pruned()
    }

    /// `â†_mode` applied term by term.
    pub fn create(&self, mode: ModeLabel) -> Self {
        self.map_terms(|b, o, a, emit| {
            let n = b.occupation(mode);
            emit(b.with_occupation(mode, n + 1), o, a * T::of(f64::from(n + 1).sqrt()));
        })
    }

    /// `â_mode` applied term by term; terms with no photon in `mode` vanish.
    pub fn annihilate(&self, mode: ModeLabel) -> Self {
        self.map_terms(|b, o, a, emit| {
            let n = b.occupation(mode);
            if n > 0 {
                emit(b.with_occupation(mode, n - 1), o, a * T::of(f64::from(n).sqrt()));
            }
        })
    }

    /// `⟨self|other⟩`, conjugate-linear in `self`.
    pub fn inner_product(&self, other: &Self) -> Complex<T> {
        let a = self.collapsed();
        let b = other.collapsed();
        let mut acc = Complex::new(T::zero(), T::zero());
        for (basis, x) in &a {
            if let Some(y) = b.get(basis) {
                acc = acc + x.conj() * *y;
            }
        }
        acc
    }

    pub fn norm_sqr(&self) -> T {
        self.inner_product(self).re
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm_sqr().sqrt();
        let mut out = self.clone();
        if n > T::zero() {
            for a in out.terms.values_mut() {
                *a = *a / n;
            }
        }
        out
    }

    pub fn scaled(&self, s: Complex<T>) -> Self {
        self.map_terms(|b, o, a, emit| emit(b.clone(), o, a * s))
    }

    pub fn plus(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.max_order = self.max_order.max(other.max_order);
        for ((b, o), a) in &other.terms {
            out.accumulate(b.clone(), *o, *a);
        }
        out.pruned()
    }

    /// Drops every term whose order exceeds `max_order`.
    pub fn truncate(&self, max_order: u32) -> Self {
        let mut out = self.clone();
        out.max_order = max_order;
        out.terms.retain(|(_, o), _| *o <= max_order);
        out
    }

    /// Serializable form, one record per `(basis, order)` entry in canonical order.
    pub fn to_records(&self) -> Vec<TermRecord> {
        self.terms
            .iter()
            .map(|((b, o), a)| TermRecord {
                modes: b.iter().map(|(m, n)| (m.path, m.pol, n)).collect(),
                re: a.re.to_f64_lossless(),
                im: a.im.to_f64_lossless(),
                order: *o,
            })
            .collect()
    }

    /// Inverse of [`to_records`](Self::to_records); `max_order` is the largest order present.
    pub fn from_records(records: &[TermRecord]) -> Self {
        let max_order = records.iter().map(|r| r.order).max().unwrap_or(0);
        Self::from_terms(
            records.iter().map(|r| PerturbativeTerm {
                basis: FockBasisState::from_occupations(
                    r.modes.iter().map(|&(p, pol, n)| (ModeLabel::new(p, pol), n)),
                ),
                amplitude: Complex::new(T::of(r.re), T::of(r.im)),
                order: r.order,
            }),
            max_order,
        )
    }
}

/// JSON shape of a single expansion term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermRecord {
    pub modes: Vec<(u32, Polarization, u32)>,
    pub re: f64,
    pub im: f64,
    pub order: u32,
}

impl<T: Scalar> Serialize for KetExpansion<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_records().serialize(s)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for KetExpansion<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let records = Vec::<TermRecord>::deserialize(d)?;
        Ok(Self::from_records(&records))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type Ket = KetExpansion<f64>;

    fn c(re: f64) -> Complex<f64> {
        Complex::new(re, 0.0)
    }

    fn single(modes: &[(ModeLabel, u32)]) -> FockBasisState {
        FockBasisState::from_occupations(modes.iter().copied())
    }

    #[test]
    fn mode_ordering_is_path_then_polarization() {
        assert!(ModeLabel::v(1) < ModeLabel::h(2));
        assert!(ModeLabel::h(3) < ModeLabel::v(3));
    }

    #[test]
    fn create_on_vacuum() {
        let k = Ket::vacuum(2).create(ModeLabel::v(1));
        assert_eq!(k.len(), 1);
        assert_eq!(k.amplitude(&single(&[(ModeLabel::v(1), 1)])), c(1.0));
    }

    #[test]
    fn create_has_bosonic_enhancement() {
        let k = Ket::basis(single(&[(ModeLabel::v(3), 1)]), 2).create(ModeLabel::v(3));
        let amp = k.amplitude(&single(&[(ModeLabel::v(3), 2)]));
        assert!((amp - c(2f64.sqrt())).norm() < 1e-15);
    }

    #[test]
    fn create_is_linear() {
        let s = Ket::from_terms(
            [
                PerturbativeTerm { basis: single(&[(ModeLabel::h(1), 1)]), amplitude: c(0.3), order: 0 },
                PerturbativeTerm { basis: FockBasisState::vacuum(), amplitude: c(0.4), order: 0 },
            ],
            2,
        );
        let k = s.create(ModeLabel::v(2));
        assert_eq!(k.len(), 2);
        assert_eq!(k.amplitude(&single(&[(ModeLabel::h(1), 1), (ModeLabel::v(2), 1)])), c(0.3));
        assert_eq!(k.amplitude(&single(&[(ModeLabel::v(2), 1)])), c(0.4));
    }

    #[test]
    fn annihilate_vacuum_is_zero() {
        assert!(Ket::vacuum(2).annihilate(ModeLabel::h(1)).is_empty());
    }

    #[test]
    fn annihilate_has_sqrt_n() {
        let k = Ket::basis(single(&[(ModeLabel::v(3), 2)]), 2).annihilate(ModeLabel::v(3));
        let amp = k.amplitude(&single(&[(ModeLabel::v(3), 1)]));
        assert!((amp - c(2f64.sqrt())).norm() < 1e-15);
    }

    #[test]
    fn annihilate_picks_the_occupied_term() {
        let s = Ket::basis(single(&[(ModeLabel::h(1), 1)]), 2).plus(&Ket::basis(single(&[(ModeLabel::v(2), 1)]), 2));
        let k = s.annihilate(ModeLabel::h(1));
        assert_eq!(k.len(), 1);
        assert_eq!(k.amplitude(&FockBasisState::vacuum()), c(1.0));
    }

    #[test]
    fn inner_products() {
        let vac = Ket::vacuum(0);
        assert_eq!(vac.inner_product(&vac), c(1.0));
        let h = Ket::basis(single(&[(ModeLabel::h(1), 1)]), 0);
        let v = Ket::basis(single(&[(ModeLabel::v(1), 1)]), 0);
        assert_eq!(h.inner_product(&v), c(0.0));
        let s = h.scaled(c(0.6)).plus(&v.scaled(c(0.8)));
        assert!((s.inner_product(&s) - c(1.0)).norm() < 1e-15);
    }

    #[test]
    fn inner_product_sums_orders() {
        let b = single(&[(ModeLabel::h(1), 1)]);
        let s = Ket::from_terms(
            [
                PerturbativeTerm { basis: b.clone(), amplitude: c(0.5), order: 1 },
                PerturbativeTerm { basis: b.clone(), amplitude: c(0.25), order: 3 },
            ],
            3,
        );
        assert_eq!(s.len(), 2);
        assert_eq!(s.amplitude(&b), c(0.75));
        assert!((s.norm_sqr() - 0.5625).abs() < 1e-15);
    }

    #[test]
    fn truncate_by_order() {
        let b = single(&[(ModeLabel::h(1), 1)]);
        let s = Ket::from_terms(
            [
                PerturbativeTerm { basis: FockBasisState::vacuum(), amplitude: c(1.0), order: 0 },
                PerturbativeTerm { basis: b.clone(), amplitude: c(0.1), order: 1 },
                PerturbativeTerm { basis: b.clone(), amplitude: c(0.001), order: 3 },
            ],
            3,
        );
        let t2 = s.truncate(2);
        assert_eq!(t2.len(), 2);
        assert_eq!(t2.amplitude_at(&b, 1), c(0.1));
        let t0 = s.truncate(0);
        assert_eq!(t0.len(), 1);
        assert_eq!(t0.amplitude(&FockBasisState::vacuum()), c(1.0));
    }

    #[test]
    fn json_shape() {
        let s = Ket::basis(single(&[(ModeLabel::v(3), 2), (ModeLabel::h(1), 1)]), 1);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"[{"modes":[[1,"H",1],[3,"V",2]],"re":1.0,"im":0.0,"order":0}]"#);
    }

    #[test]
    fn display_is_readable() {
        let b = single(&[(ModeLabel::v(3), 2), (ModeLabel::h(1), 1)]);
        assert_eq!(b.to_string(), "|1_1H,2_3V⟩");
        assert_eq!(FockBasisState::vacuum().to_string(), "|vac⟩");
    }
}
