//! Physical constants (SI, CODATA 2018).

/// Reduced Planck constant ħ in J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Planck constant h in J·s (exact).
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Boltzmann constant k_B in J/K (exact).
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Vacuum magnetic permeability μ₀ in H/m.
pub const MU_0: f64 = 1.256_637_062_12e-6;

/// Weak-coupling BCS ratio Δ₀ / (k_B T_c).
pub const BCS_GAP_RATIO: f64 = 1.76;

/// Bundle of the constants above, for callers that want to pass them around as a value.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub k_b: f64,
    pub mu_0: f64,
}

impl PhysicalConstants {
    pub const CODATA: PhysicalConstants = PhysicalConstants {
        hbar: HBAR,
        k_b: BOLTZMANN,
        mu_0: MU_0,
    };
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::CODATA
    }
}
