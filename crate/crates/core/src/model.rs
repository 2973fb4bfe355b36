//! Shared domain types: superconductor parameters, transmission traces and
//! the resonator / qubit registry records.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::{BCS_GAP_RATIO, BOLTZMANN};
use crate::error::{require_positive, Error, Result};

/// A scalar with one standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub sigma: f64,
}

impl Estimate {
    pub const fn new(value: f64, sigma: f64) -> Self {
        Self { value, sigma }
    }

    pub const fn exact(value: f64) -> Self {
        Self { value, sigma: 0.0 }
    }

    /// Fit-reliability rule shared across modules: an estimate whose standard
    /// error reaches its magnitude (or is not finite) is not trusted.
    pub fn is_reliable(&self) -> bool {
        self.value.is_finite() && self.sigma.is_finite() && self.sigma < self.value.abs()
    }

    pub fn relative_sigma(&self) -> f64 {
        self.sigma / self.value.abs()
    }
}

/// Zero-temperature weak-coupling BCS gap Δ₀ = 1.76·k_B·T_c.
pub fn delta0_from_tc(t_c: f64) -> Result<f64> {
    require_positive("T_c", t_c)?;
    Ok(BCS_GAP_RATIO * BOLTZMANN * t_c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuperconductorParams {
    pub t_c: f64,
    pub rho_n: f64,
    delta_0: f64,
    pub lambda_fit: Option<f64>,
}

impl SuperconductorParams {
    pub fn new(t_c: f64, rho_n: f64) -> Result<Self> {
        require_positive("rho_n", rho_n)?;
        Ok(Self {
            t_c,
            rho_n,
            delta_0: delta0_from_tc(t_c)?,
            lambda_fit: None,
        })
    }

    pub fn delta_0(&self) -> f64 {
        self.delta_0
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda_fit = Some(lambda);
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub power_dbm: Option<f64>,
    pub temperature_k: Option<f64>,
}

/// Complex transmission S21 sampled at strictly increasing probe frequencies.
///
/// Fields are public so that raw instrument data can be wrapped before it is
/// checked; [`ComplexTrace::new`] and [`validate_trace`] enforce the invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTrace {
    pub freq: Vec<f64>,
    pub s21: Vec<Complex64>,
    pub meta: TraceMeta,
}

pub const MIN_TRACE_LEN: usize = 8;

impl ComplexTrace {
    pub fn new(freq: Vec<f64>, s21: Vec<Complex64>, meta: TraceMeta) -> Result<Self> {
        let trace = Self { freq, s21, meta };
        let report = validate_trace(&trace);
        if report.is_clean() {
            Ok(trace)
        } else {
            Err(Error::Validation(report.to_string()))
        }
    }

    pub fn len(&self) -> usize {
        self.freq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freq.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Finding {
    LengthMismatch { freq: usize, s21: usize },
    TooShort { len: usize, min: usize },
    NonMonotonic { index: usize },
    NonFinite { index: usize },
}

impl std::fmt::Display for Finding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Finding::LengthMismatch { freq, s21 } => {
                write!(f, "length mismatch: {freq} frequencies vs {s21} samples")
            }
            Finding::TooShort { len, min } => write!(f, "trace has {len} points, need {min}"),
            Finding::NonMonotonic { index } => {
                write!(f, "frequency not strictly increasing at index {index}")
            }
            Finding::NonFinite { index } => write!(f, "non-finite sample at index {index}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.findings.iter().map(|x| x.to_string()).collect();
        f.write_str(&parts.join("; "))
    }
}

/// Reports every violation of the [`ComplexTrace`] invariants. Never fails.
pub fn validate_trace(trace: &ComplexTrace) -> ValidationReport {
    let mut findings = Vec::new();
    let n = trace.freq.len();
    if n != trace.s21.len() {
        findings.push(Finding::LengthMismatch {
            freq: n,
            s21: trace.s21.len(),
        });
    }
    let len = n.min(trace.s21.len());
    if len < MIN_TRACE_LEN {
        findings.push(Finding::TooShort {
            len,
            min: MIN_TRACE_LEN,
        });
    }
    for i in 1..n {
        if trace.freq[i].partial_cmp(&trace.freq[i - 1]) != Some(std::cmp::Ordering::Greater) {
            findings.push(Finding::NonMonotonic { index: i });
        }
    }
    for i in 0..len {
        let z = trace.s21[i];
        if !(trace.freq[i].is_finite() && z.re.is_finite() && z.im.is_finite()) {
            findings.push(Finding::NonFinite { index: i });
        }
    }
    ValidationReport { findings }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResonatorKind {
    #[serde(rename = "CPW")]
    Cpw,
    #[serde(rename = "LE")]
    Le,
}

impl std::fmt::Display for ResonatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ResonatorKind::Cpw => "CPW",
            ResonatorKind::Le => "LE",
        })
    }
}

/// Per-resonator registry entry. Frequencies in Hz, inductances in H,
/// geometry in μm (registry boundary unit).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonatorRecord {
    pub id: String,
    pub kind: ResonatorKind,
    pub gap_um: f64,
    pub thickness_um: f64,
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "f_r_sim_hz")]
    pub f_r_sim: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "f_r_meas_hz")]
    pub f_r_meas: Option<Estimate>,
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "l_g_h")]
    pub l_g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_factor: Option<Estimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_ma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_sa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_c_mag: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_tls0: Option<Estimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_other: Option<Estimate>,
}

impl ResonatorRecord {
    /// Resonator id following the `F<n>-<type>-<s>` convention.
    pub fn label(film: &str, kind: ResonatorKind, gap_um: f64) -> String {
        format!("{film}-{kind}-{gap_um}")
    }

    pub fn check(&self) -> Result<()> {
        require_positive("thickness_um", self.thickness_um)?;
        if let (Some(fs), Some(fm)) = (self.f_r_sim, self.f_r_meas) {
            if fm.value > fs {
                return Err(Error::Validation(format!(
                    "{}: measured frequency {} Hz above simulated {} Hz",
                    self.id, fm.value, fs
                )));
            }
        }
        for (name, p) in [("p_ms", self.p_ms), ("p_ma", self.p_ma), ("p_sa", self.p_sa)] {
            if let Some(p) = p {
                if !(p > 0.0 && p < 1.0) {
                    return Err(Error::Validation(format!(
                        "{}: participation ratio {name} = {p} outside (0, 1)",
                        self.id
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeStat {
    #[serde(rename = "mean_s")]
    pub mean: f64,
    #[serde(rename = "sd_s")]
    pub sd: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QubitTimeStats {
    pub t1: Option<TimeStat>,
    pub t2r: Option<TimeStat>,
    pub t2e: Option<TimeStat>,
    pub tphi: Option<TimeStat>,
}

/// Transmon registry entry. `chi_mag` and `kappa_r` are carried as metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QubitRecord {
    pub id: u32,
    #[serde(rename = "f_q_hz")]
    pub f_q: f64,
    #[serde(rename = "f_r_hz")]
    pub f_r: f64,
    #[serde(rename = "chi_mag_hz")]
    pub chi_mag: f64,
    #[serde(rename = "kappa_r_hz")]
    pub kappa_r: f64,
    #[serde(rename = "e_c_over_h_hz")]
    pub e_c_over_h: f64,
    #[serde(default)]
    pub stats: QubitTimeStats,
}

impl QubitRecord {
    pub fn e_j_over_e_c(&self) -> Result<f64> {
        Ok(crate::qubit::ej_from_transmon(self.f_q, self.e_c_over_h)? / self.e_c_over_h)
    }
}
