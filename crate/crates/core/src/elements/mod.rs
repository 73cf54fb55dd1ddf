//! Optical elements acting on a [`KetExpansion`]: linearized two-mode
//! squeezers (pair sources), polarization rotators and phase shifters.

pub mod oracle;

use num_complex::Complex;
use thiserror::Error;

use crate::fock::{KetExpansion, ModeLabel, MAX_PHOTONS_PER_MODE};
use crate::scalar::Scalar;

/// Sources with `|ε|` at or above this are rejected.
pub const MAX_EPSILON: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ElementError {
    #[error("mode {mode} would hold {photons} photons (cap is {MAX_PHOTONS_PER_MODE})")]
    PerturbativeOverflow { mode: ModeLabel, photons: u32 },
    #[error("source {0}: signal and idler must be different modes")]
    SameModes(String),
    #[error("source {name}: |eps| = {magnitude} is outside the perturbative regime (< {MAX_EPSILON})")]
    EpsilonTooLarge { name: String, magnitude: f64 },
    #[error("path index must be >= 1")]
    ZeroPath,
}

/// Probabilistic pair source `exp(ε â†_s â†_i − ε* â_s â_i)`, linearized.
///
/// `epsilon = amplitude · e^{i·pump_phase}`; the polar form is what gets stored
/// so that configurations round-trip exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec<T: Scalar> {
    pub name: String,
    pub signal: ModeLabel,
    pub idler: ModeLabel,
    pub amplitude: T,
    pub pump_phase: T,
}

impl<T: Scalar> SourceSpec<T> {
    pub fn new(
        name: impl Into<String>,
        signal: ModeLabel,
        idler: ModeLabel,
        amplitude: T,
        pump_phase: T,
    ) -> Result<Self, ElementError> {
        let name = name.into();
        if signal == idler {
            return Err(ElementError::SameModes(name));
        }
        if signal.path == 0 || idler.path == 0 {
            return Err(ElementError::ZeroPath);
        }
        let magnitude = amplitude.abs().to_f64_lossless();
        if !(magnitude < MAX_EPSILON) {
            return Err(ElementError::EpsilonTooLarge { name, magnitude });
        }
        Ok(Self { name, signal, idler, amplitude, pump_phase })
    }

    pub fn epsilon(&self) -> Complex<T> {
        Complex::from_polar(self.amplitude, self.pump_phase)
    }
}

/// H↔V swap on one path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RotatorSpec {
    pub path: u32,
}

/// Phase `e^{i n φ}` on the photons of one mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSpec<T: Scalar> {
    pub mode: ModeLabel,
    pub phi: T,
}

impl<T: Scalar> PhaseSpec<T> {
    /// `phi` reduced to `[0, 2π)`.
    pub fn phi_wrapped(&self) -> T {
        let tau = T::TAU();
        let r = self.phi % tau;
        if r < T::zero() {
            r + tau
        } else {
            r
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Element<T: Scalar> {
    Source(SourceSpec<T>),
    Rotator(RotatorSpec),
    Phase(PhaseSpec<T>),
}

impl<T: Scalar> Element<T> {
    pub fn paths(&self) -> Vec<u32> {
        match self {
            Element::Source(s) => vec![s.signal.path, s.idler.path],
            Element::Rotator(r) => vec![r.path],
            Element::Phase(p) => vec![p.mode.path],
        }
    }

    pub fn apply(&self, state: &KetExpansion<T>, max_order: u32) -> Result<KetExpansion<T>, ElementError> {
        Ok(match self {
            Element::Source(s) => apply_squeezer(state, s, max_order)?,
            Element::Rotator(r) => apply_rotator(state, *r),
            Element::Phase(p) => apply_phase(state, *p),
        })
    }
}

/// `[I + ε â†_s â†_i − ε* â_s â_i] · state`, truncated at `max_order`.
///
/// Every term produced by the pair operator is one order higher than its parent.
pub fn apply_squeezer<T: Scalar>(
    state: &KetExpansion<T>,
    src: &SourceSpec<T>,
    max_order: u32,
) -> Result<KetExpansion<T>, ElementError> {
    let eps = src.epsilon();
    let (s, i) = (src.signal, src.idler);
    let mut overflow = None;
    let out = state.truncate(max_order).map_terms(|b, o, a, emit| {
        emit(b.clone(), o, a);
        if o >= max_order {
            return;
        }
        let ns = b.occupation(s);
        let ni = b.occupation(i);
        for (mode, n) in [(s, ns + 1), (i, ni + 1)] {
            if n > MAX_PHOTONS_PER_MODE && overflow.is_none() {
                overflow = Some(ElementError::PerturbativeOverflow { mode, photons: n });
            }
        }
        let up = T::of((f64::from(ns + 1) * f64::from(ni + 1)).sqrt());
        emit(b.with_occupation(s, ns + 1).with_occupation(i, ni + 1), o + 1, a * eps * up);
        if ns > 0 && ni > 0 {
            let down = T::of((f64::from(ns) * f64::from(ni)).sqrt());
            emit(b.with_occupation(s, ns - 1).with_occupation(i, ni - 1), o + 1, -(a * eps.conj() * down));
        }
    });
    match overflow {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

pub fn apply_rotator<T: Scalar>(state: &KetExpansion<T>, rot: RotatorSpec) -> KetExpansion<T> {
    state.map_terms(|b, o, a, emit| {
        let swapped = b.map_modes(|m| if m.path == rot.path { ModeLabel::new(m.path, m.pol.flipped()) } else { m });
        emit(swapped, o, a);
    })
}

pub fn apply_phase<T: Scalar>(state: &KetExpansion<T>, ph: PhaseSpec<T>) -> KetExpansion<T> {
    state.map_terms(|b, o, a, emit| {
        let n = b.occupation(ph.mode);
        let factor = Complex::from_polar(T::one(), ph.phi * T::of(f64::from(n)));
        emit(b.clone(), o, a * factor);
    })
}

/// Runs `elements` in order on the vacuum.
pub fn run_pipeline<T: Scalar>(elements: &[Element<T>], max_order: u32) -> Result<KetExpansion<T>, ElementError> {
    elements.iter().try_fold(KetExpansion::vacuum(max_order), |state, el| el.apply(&state, max_order))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{FockBasisState, Polarization};

    type Ket = KetExpansion<f64>;

    fn basis(modes: &[(ModeLabel, u32)]) -> FockBasisState {
        FockBasisState::from_occupations(modes.iter().copied())
    }

    fn src(name: &str, s: ModeLabel, i: ModeLabel, eps: f64) -> SourceSpec<f64> {
        SourceSpec::new(name, s, i, eps, 0.0).unwrap()
    }

    #[test]
    fn squeezer_on_vacuum() {
        let p1 = src("P1", ModeLabel::h(1), ModeLabel::v(3), 0.1);
        let k = apply_squeezer(&Ket::vacuum(2), &p1, 2).unwrap();
        assert_eq!(k.len(), 2);
        assert_eq!(k.amplitude(&FockBasisState::vacuum()).re, 1.0);
        let pair = basis(&[(ModeLabel::h(1), 1), (ModeLabel::v(3), 1)]);
        assert_eq!(k.amplitude_at(&pair, 1).re, 0.1);
    }

    #[test]
    fn two_sources_make_a_product() {
        let p1 = src("P1", ModeLabel::h(1), ModeLabel::v(3), 0.1);
        let p2 = src("P2", ModeLabel::h(4), ModeLabel::v(2), 0.2);
        let k = run_pipeline(&[Element::Source(p1), Element::Source(p2)], 2).unwrap();
        let four = basis(&[(ModeLabel::h(1), 1), (ModeLabel::v(3), 1), (ModeLabel::v(2), 1), (ModeLabel::h(4), 1)]);
        assert!((k.amplitude_at(&four, 2).re - 0.02).abs() < 1e-15);
        assert_eq!(k.len(), 4);
    }

    #[test]
    fn stimulated_emission_carries_sqrt2() {
        let p1 = src("P1", ModeLabel::v(1), ModeLabel::v(3), 0.1);
        let p4 = src("P4", ModeLabel::h(4), ModeLabel::v(3), 0.3);
        let k = run_pipeline(&[Element::Source(p1), Element::Source(p4)], 2).unwrap();
        let b = basis(&[(ModeLabel::v(1), 1), (ModeLabel::v(3), 2), (ModeLabel::h(4), 1)]);
        assert!((k.amplitude(&b).re - 2f64.sqrt() * 0.03).abs() < 1e-15);
    }

    #[test]
    fn annihilation_branch_acts_on_occupied_pairs() {
        let p = src("P", ModeLabel::h(1), ModeLabel::v(2), 0.1);
        let s = Ket::basis(basis(&[(ModeLabel::h(1), 1), (ModeLabel::v(2), 1)]), 1);
        let k = apply_squeezer(&s, &p, 1).unwrap();
        assert!((k.amplitude_at(&FockBasisState::vacuum(), 1).re + 0.1).abs() < 1e-15);
        let up = basis(&[(ModeLabel::h(1), 2), (ModeLabel::v(2), 2)]);
        assert!((k.amplitude(&up).re - 0.2).abs() < 1e-15);
    }

    #[test]
    fn squeezer_respects_max_order() {
        let p = src("P", ModeLabel::h(1), ModeLabel::v(2), 0.1);
        let k = apply_squeezer(&Ket::vacuum(0), &p, 0).unwrap();
        assert_eq!(k.len(), 1);
    }

    #[test]
    fn squeezer_overflow() {
        let p = src("P", ModeLabel::h(1), ModeLabel::v(2), 0.1);
        let s = Ket::basis(basis(&[(ModeLabel::h(1), 4)]), 3);
        let err = apply_squeezer(&s, &p, 3).unwrap_err();
        assert_eq!(err, ElementError::PerturbativeOverflow { mode: ModeLabel::h(1), photons: 5 });
    }

    #[test]
    fn source_validation() {
        assert!(matches!(
            SourceSpec::new("x", ModeLabel::h(1), ModeLabel::h(1), 0.1, 0.0),
            Err(ElementError::SameModes(_))
        ));
        assert!(matches!(
            SourceSpec::new("x", ModeLabel::h(1), ModeLabel::v(1), 0.5, 0.0),
            Err(ElementError::EpsilonTooLarge { .. })
        ));
        assert!(SourceSpec::new("x", ModeLabel::h(1), ModeLabel::v(1), 0.49, 0.0).is_ok());
    }

    #[test]
    fn rotator_swaps_polarization_on_its_path() {
        let s = Ket::basis(basis(&[(ModeLabel::h(1), 1)]), 0);
        let r = apply_rotator(&s, RotatorSpec { path: 1 });
        assert_eq!(r.amplitude(&basis(&[(ModeLabel::v(1), 1)])).re, 1.0);
        assert_eq!(apply_rotator(&r, RotatorSpec { path: 1 }), s);
        let other = Ket::basis(basis(&[(ModeLabel::v(2), 1)]), 0);
        assert_eq!(apply_rotator(&other, RotatorSpec { path: 1 }), other);
    }

    #[test]
    fn rotator_moves_mixed_occupations() {
        let s = Ket::basis(basis(&[(ModeLabel::h(1), 2), (ModeLabel::v(1), 1)]), 0);
        let r = apply_rotator(&s, RotatorSpec { path: 1 });
        assert_eq!(r.amplitude(&basis(&[(ModeLabel::v(1), 2), (ModeLabel::h(1), 1)])).re, 1.0);
    }

    #[test]
    fn phase_scales_with_photon_number() {
        let pi = std::f64::consts::PI;
        let one = Ket::basis(basis(&[(ModeLabel::v(3), 1)]), 0);
        let got = apply_phase(&one, PhaseSpec { mode: ModeLabel::v(3), phi: pi });
        assert!((got.amplitude(&basis(&[(ModeLabel::v(3), 1)])) + 1.0).norm() < 1e-15);

        let two = Ket::basis(basis(&[(ModeLabel::v(3), 2)]), 0);
        let got = apply_phase(&two, PhaseSpec { mode: ModeLabel::v(3), phi: pi / 2.0 });
        assert!((got.amplitude(&basis(&[(ModeLabel::v(3), 2)])) + 1.0).norm() < 1e-15);

        let vac = Ket::vacuum(0);
        assert_eq!(apply_phase(&vac, PhaseSpec { mode: ModeLabel::v(3), phi: 1.234 }), vac);
    }

    #[test]
    fn phase_wraps_for_reporting() {
        let p = PhaseSpec { mode: ModeLabel::new(3, Polarization::V), phi: -0.5f64 };
        assert!((p.phi_wrapped() - (std::f64::consts::TAU - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn works_in_single_precision() {
        let p = SourceSpec::<f32>::new("P", ModeLabel::h(1), ModeLabel::v(3), 0.1, 0.0).unwrap();
        let k = apply_squeezer(&KetExpansion::<f32>::vacuum(1), &p, 1).unwrap();
        assert_eq!(k.len(), 2);
    }
}
