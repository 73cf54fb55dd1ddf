//! Simulator and analysis toolkit for entangling independent photons by path
//! identity.
//!
//! The exact layers ([`fock`], [`elements`], [`postselect`], [`entmetrics`])
//! are generic over the floating-point [`Scalar`]; the stochastic layers
//! ([`noisemc`], [`tomography`]) work in `f64`. Concrete aliases for the common
//! precisions live at the crate root.

pub mod elements;
pub mod entmetrics;
pub mod expdsl;
pub mod fock;
pub mod linalg;
pub mod noisemc;
pub mod postselect;
pub mod scalar;
pub mod tomography;

pub use scalar::Scalar;

pub type Ket = fock::KetExpansion<f64>;
pub type Ket32 = fock::KetExpansion<f32>;
pub type Rho = postselect::TwoQubitDensityMatrix<f64>;
pub type Rho32 = postselect::TwoQubitDensityMatrix<f32>;
pub type Experiment = expdsl::ExperimentSpec<f64>;
pub type Experiment32 = expdsl::ExperimentSpec<f32>;
pub type Source = elements::SourceSpec<f64>;
pub type Analyzer = entmetrics::AnalyzerSetting<f64>;

/// Locale-free CSV float with 17 significant digits.
pub fn csv_float(x: f64) -> String {
    format!("{x:.16e}")
}
