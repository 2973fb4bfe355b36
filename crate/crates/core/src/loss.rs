//! Loss decomposition of Q_int(n̄, T) into saturable TLS, thermal
//! quasiparticle and residual channels.
//!
//! ```text
//! 1/Q_int = 1/Q_TLS + 1/Q_QP + 1/Q_other
//! Q_TLS   = Q_TLS0 · √(1 + n̄^β2/(D·T^β1) · tanh(x)) / tanh(x)
//! Q_QP    = A_QP · e^{Δ₀/k_BT} / (sinh(x)·K₀(x)),     x = ħω/(2k_BT)
//! ```

use serde::{Deserialize, Serialize};

use crate::constants::{BOLTZMANN, HBAR};
use crate::error::{require_finite, require_positive, Error, Result};
use crate::lm::{self, LmConfig, Problem};
use crate::model::Estimate;
use crate::special::ln_sinh_k0;

/// Above this ln Q_QP the channel is treated as lossless.
const LN_Q_QP_CUTOFF: f64 = 700.0;

fn thermal_ratio(omega: f64, temperature: f64) -> f64 {
    HBAR * omega / (2.0 * BOLTZMANN * temperature)
}

/// Power- and temperature-dependent TLS quality factor.
pub fn q_tls(nbar: f64, temperature: f64, q_tls0: f64, d: f64, beta1: f64, beta2: f64, omega: f64) -> Result<f64> {
    for (name, v) in [
        ("nbar", nbar),
        ("T", temperature),
        ("Q_TLS0", q_tls0),
        ("D", d),
        ("beta1", beta1),
        ("beta2", beta2),
        ("omega", omega),
    ] {
        require_positive(name, v)?;
    }
    Ok(q_tls_unchecked(nbar, temperature, q_tls0, d, beta1, beta2, omega))
}

fn q_tls_unchecked(nbar: f64, temperature: f64, q_tls0: f64, d: f64, beta1: f64, beta2: f64, omega: f64) -> f64 {
    let th = thermal_ratio(omega, temperature).tanh();
    let saturation = nbar.powf(beta2) / (d * temperature.powf(beta1));
    q_tls0 * (1.0 + saturation * th).sqrt() / th
}

/// ln Q_QP; may exceed [`LN_Q_QP_CUTOFF`] at low temperature.
fn ln_q_qp(temperature: f64, a_qp: f64, delta_0: f64, omega: f64) -> f64 {
    let x = thermal_ratio(omega, temperature);
    a_qp.ln() + delta_0 / (BOLTZMANN * temperature) - ln_sinh_k0(x)
}

/// Thermal quasiparticle quality factor; +∞ once the channel is negligible.
pub fn q_qp(temperature: f64, a_qp: f64, delta_0: f64, omega: f64) -> Result<f64> {
    require_positive("T", temperature)?;
    require_positive("A_QP", a_qp)?;
    require_positive("Delta_0", delta_0)?;
    require_positive("omega", omega)?;
    let l = ln_q_qp(temperature, a_qp, delta_0, omega);
    Ok(if l > LN_Q_QP_CUTOFF { f64::INFINITY } else { l.exp() })
}

/// The six model parameters of the decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParams {
    pub q_tls0: f64,
    pub d: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// `None` removes the quasiparticle channel.
    pub a_qp: Option<f64>,
    pub q_other: f64,
}

impl LossParams {
    /// Inverse quality factors (TLS, QP, other) at one operating point.
    pub fn inverse_channels(&self, nbar: f64, temperature: f64, omega: f64, delta_0: f64) -> [f64; 3] {
        let tls = 1.0 / q_tls_unchecked(nbar, temperature, self.q_tls0, self.d, self.beta1, self.beta2, omega);
        let qp = match self.a_qp {
            Some(a) => {
                let l = ln_q_qp(temperature, a, delta_0, omega);
                if l > LN_Q_QP_CUTOFF {
                    0.0
                } else {
                    (-l).exp()
                }
            }
            None => 0.0,
        };
        [tls, qp, 1.0 / self.q_other]
    }

    pub fn q_total(&self, nbar: f64, temperature: f64, omega: f64, delta_0: f64) -> f64 {
        1.0 / self.inverse_channels(nbar, temperature, omega, delta_0).iter().sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossGridPoint {
    pub nbar: f64,
    pub temperature_k: f64,
    pub q_int: Estimate,
    pub power_dbm: Option<f64>,
}

impl LossGridPoint {
    fn check(&self) -> Result<()> {
        require_positive("nbar", self.nbar)?;
        require_positive("T", self.temperature_k)?;
        require_positive("Q_int", self.q_int.value)?;
        require_positive("sigma(Q_int)", self.q_int.sigma)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossFit {
    pub params: LossParams,
    pub q_tls0: Estimate,
    pub d: Estimate,
    pub beta1: Estimate,
    pub beta2: Estimate,
    pub a_qp: Option<Estimate>,
    pub q_other: Estimate,
    pub omega: f64,
    pub delta_0: f64,
    /// Names labelling the rows/columns of `correlations`.
    pub parameter_names: Vec<String>,
    pub correlations: Vec<Vec<f64>>,
    pub q_tls0_reliable: bool,
    pub q_other_reliable: bool,
    pub notes: Vec<String>,
    /// RMS of the weighted log residuals.
    pub residual_rms: f64,
    pub n_points: usize,
}

/// Total Q from a fitted parameter set.
pub fn q_total(nbar: f64, temperature: f64, fit: &LossFit) -> Result<f64> {
    require_positive("nbar", nbar)?;
    require_positive("T", temperature)?;
    Ok(fit.params.q_total(nbar, temperature, fit.omega, fit.delta_0))
}

// ---------------------------------------------------------------------------
// Photon number

/// Total line attenuation versus frequency, linearly interpolated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttenuationChain {
    /// (frequency Hz, attenuation dB), frequency ascending.
    pub table: Vec<(f64, f64)>,
}

impl AttenuationChain {
    pub fn new(mut table: Vec<(f64, f64)>) -> Result<Self> {
        if table.is_empty() {
            return Err(Error::Validation("empty attenuation table".into()));
        }
        table.sort_by(|a, b| a.0.total_cmp(&b.0));
        for &(f, db) in &table {
            require_positive("attenuation frequency", f)?;
            require_finite("attenuation", db)?;
            if db < 0.0 {
                return Err(Error::Validation(format!("negative attenuation {db} dB at {f} Hz")));
            }
        }
        if table.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Validation("duplicate frequency in attenuation table".into()));
        }
        Ok(Self { table })
    }

    pub fn atten_db(&self, f: f64) -> Result<f64> {
        let t = &self.table;
        let (lo, hi) = (t[0].0, t[t.len() - 1].0);
        if !(f >= lo && f <= hi) {
            return Err(Error::Validation(format!(
                "no attenuation data at {f} Hz (table covers {lo}–{hi} Hz)"
            )));
        }
        if t.len() == 1 {
            return Ok(t[0].1);
        }
        let k = t.partition_point(|e| e.0 <= f).clamp(1, t.len() - 1);
        let (f0, a0) = t[k - 1];
        let (f1, a1) = t[k];
        Ok(a0 + (a1 - a0) * (f - f0) / (f1 - f0))
    }
}

/// Power delivered to the device, in W.
pub fn applied_power_w(power_dbm: f64, atten_db: f64) -> f64 {
    1e-3 * 10f64.powf((power_dbm - atten_db) / 10.0)
}

/// Mean intracavity photon number n̄ = 2Q_l²P/(ħω²|Q_c|) for a hanger resonator.
pub fn photons_from_power(power_dbm: f64, chain: &AttenuationChain, f_r: f64, q_l: f64, q_c_mag: f64) -> Result<f64> {
    require_finite("power_dbm", power_dbm)?;
    require_positive("f_r", f_r)?;
    require_positive("Q_l", q_l)?;
    require_positive("|Q_c|", q_c_mag)?;
    let p = applied_power_w(power_dbm, chain.atten_db(f_r)?);
    Ok(photons_from_applied(p, f_r, q_l, q_c_mag))
}

pub fn photons_from_applied(power_w: f64, f_r: f64, q_l: f64, q_c_mag: f64) -> f64 {
    let omega = 2.0 * std::f64::consts::PI * f_r;
    2.0 * q_l * q_l * power_w / (HBAR * omega * omega * q_c_mag)
}

// ---------------------------------------------------------------------------
// Fitting

const N_PARAMS: usize = 6;
const PARAM_NAMES: [&str; N_PARAMS] = ["q_tls0", "d", "beta1", "beta2", "a_qp", "q_other"];
const IDX_BETA1: usize = 2;
const IDX_A_QP: usize = 4;

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Internal coordinates: `[ln Q_TLS0, ln D, ln β1, logit(β2/2), ln A_QP, ln Q_other]`.
fn to_params(u: &[f64; N_PARAMS], qp_enabled: bool) -> LossParams {
    LossParams {
        q_tls0: u[0].exp(),
        d: u[1].exp(),
        beta1: u[2].exp(),
        beta2: 2.0 * sigmoid(u[3]),
        a_qp: qp_enabled.then(|| u[4].exp()),
        q_other: u[5].exp(),
    }
}

struct GridProblem<'a> {
    points: &'a [LossGridPoint],
    omega: f64,
    delta_0: f64,
    /// Full internal vector; entries listed in `free` are overwritten.
    base: [f64; N_PARAMS],
    free: Vec<usize>,
    qp_enabled: bool,
}

impl GridProblem<'_> {
    fn expand(&self, p: &[f64]) -> [f64; N_PARAMS] {
        let mut u = self.base;
        for (k, &i) in self.free.iter().enumerate() {
            u[i] = p[k];
        }
        u
    }

    fn restrict(&self, u: &[f64; N_PARAMS]) -> Vec<f64> {
        self.free.iter().map(|&i| u[i]).collect()
    }
}

impl Problem for GridProblem<'_> {
    fn n_params(&self) -> usize {
        self.free.len()
    }
    fn n_residuals(&self) -> usize {
        self.points.len()
    }
    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let params = to_params(&self.expand(p), self.qp_enabled);
        for (o, pt) in out.iter_mut().zip(self.points) {
            let model = params.q_total(pt.nbar, pt.temperature_k, self.omega, self.delta_0);
            *o = (model.ln() - pt.q_int.value.ln()) / (pt.q_int.sigma / pt.q_int.value);
        }
    }
}

fn distinct(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * b.abs());
    v
}

fn best_of<'a>(
    problem: &GridProblem<'a>,
    starts: impl IntoIterator<Item = [f64; N_PARAMS]>,
) -> Option<(lm::LmSolution, [f64; N_PARAMS])> {
    // saturation parameters can drift slowly toward a bound on weak data
    let cfg = LmConfig {
        max_iter: 2000,
        ftol: 1e-12,
        ..LmConfig::default()
    };
    let mut best: Option<(lm::LmSolution, [f64; N_PARAMS])> = None;
    for u in starts {
        let p0 = problem.restrict(&u);
        if let Ok(sol) = lm::minimize(problem, &p0, &cfg) {
            if best.as_ref().is_none_or(|b| sol.cost < b.0.cost) {
                let full = problem.expand(&sol.params);
                best = Some((sol, full));
            }
        }
    }
    best
}

/// Fits the loss decomposition to a Q_int(n̄, T) grid in log(Q_int) with
/// weights (σ_Q/Q)⁻².
///
/// Stage 1 fits Q_TLS0 and Q_other on the lowest-temperature data with the
/// saturation parameters at canonical values (β1 = β2 = 1, D scanned); stage 2
/// releases all parameters on the full grid from that seed.
pub fn fit_loss_grid(grid: &[LossGridPoint], omega: f64, delta_0: f64) -> Result<LossFit> {
    require_positive("omega", omega)?;
    require_positive("Delta_0", delta_0)?;
    for p in grid {
        p.check()?;
    }
    let powers = distinct(grid.iter().map(|p| p.nbar));
    let temps = distinct(grid.iter().map(|p| p.temperature_k));
    if powers.len() < 3 {
        return Err(Error::Insufficient(format!(
            "grid spans {} photon numbers, need ≥ 3",
            powers.len()
        )));
    }
    let mut notes = vec!["fit space: log(Q_int), weights (σ_Q/Q)^-2".to_string()];
    let qp_enabled = temps.len() >= 3;
    if !qp_enabled {
        notes.push("grid insufficient for QP term: A_QP frozen out".into());
    }
    let beta1_free = temps.len() >= 2;
    if !beta1_free {
        notes.push("single temperature: beta1 fixed at 1".into());
    }

    // Stage 1: lowest temperature band.
    let t_min = temps[0];
    let low: Vec<LossGridPoint> = grid.iter().copied().filter(|p| p.temperature_k <= 1.5 * t_min).collect();
    let q_low: Vec<f64> = low.iter().map(|p| p.q_int.value).collect();
    let q_min = q_low.iter().cloned().fold(f64::INFINITY, f64::min);
    let q_max = q_low.iter().cloned().fold(0.0, f64::max);
    let (nbar_min, nbar_max) = (powers[0], powers[powers.len() - 1]);
    let a_qp_placeholder = 1e300f64.ln();
    let mut stage1 = GridProblem {
        points: &low,
        omega,
        delta_0,
        base: [q_min.ln(), 0.0, 0.0, 0.0, a_qp_placeholder, (2.0 * q_max).ln()],
        free: vec![0, 5],
        qp_enabled: false,
    };
    let mut seed: Option<(lm::LmSolution, [f64; N_PARAMS])> = None;
    let n_scan = 25;
    for k in 0..n_scan {
        // critical photon number n_c = D·T (β1 = β2 = 1) scanned across the grid
        let n_c = nbar_min * 0.1 * (100.0 * nbar_max / nbar_min).powf(k as f64 / (n_scan - 1) as f64);
        stage1.base[1] = (n_c / t_min).ln();
        if let Some(s) = best_of(&stage1, [stage1.base]) {
            if seed.as_ref().is_none_or(|b| s.0.cost < b.0.cost) {
                seed = Some(s);
            }
        }
    }
    let (_, mut u) = seed.ok_or_else(|| Error::Diverged("stage-1 loss fit did not converge".into()))?;

    // A_QP start from the excess loss at the highest temperature.
    if qp_enabled {
        let t_max = temps[temps.len() - 1];
        let params = to_params(&u, false);
        let mut excess = Vec::new();
        let mut scale = Vec::new();
        for p in grid.iter().filter(|p| p.temperature_k >= t_max * (1.0 - 1e-9)) {
            let inv = params.inverse_channels(p.nbar, p.temperature_k, omega, delta_0);
            excess.push(1.0 / p.q_int.value - inv[0] - inv[2]);
            scale.push(ln_q_qp(p.temperature_k, 1.0, delta_0, omega));
        }
        let mean_excess = excess.iter().sum::<f64>() / excess.len() as f64;
        let total = 1.0 / params.q_total(nbar_min, t_max, omega, delta_0);
        let target = if mean_excess > 0.0 { mean_excess } else { 1e-3 * total };
        // Q_QP = A_QP·exp(scale) = 1/target
        u[IDX_A_QP] = -target.ln() - scale[0];
    }

    // Stage 2: all parameters on the full grid, a few saturation starts.
    let mut free = vec![0, 1, 3, 5];
    if beta1_free {
        free.push(IDX_BETA1);
    }
    if qp_enabled {
        free.push(IDX_A_QP);
    }
    free.sort_unstable();
    let stage2 = GridProblem {
        points: grid,
        omega,
        delta_0,
        base: u,
        free,
        qp_enabled,
    };
    let mut starts = Vec::new();
    for b1 in [1.0f64, 0.5, 2.0] {
        for b2 in [1.0f64, 0.5, 1.5] {
            let mut s = u;
            s[IDX_BETA1] = b1.ln();
            s[3] = logit(b2 / 2.0);
            // keep the critical photon number at the lowest temperature
            let n_c = (u[1].exp() * t_min).max(1e-300);
            s[1] = (n_c.powf(b2) / t_min.powf(b1)).ln();
            starts.push(s);
        }
    }
    let (sol, u) = best_of(&stage2, starts).ok_or_else(|| Error::Diverged("joint loss fit did not converge".into()))?;

    let dof = sol.dof().max(1) as f64;
    let cov_free = lm::covariance(&stage2, &sol.params, sol.cost / dof);
    let mut cov = [[0.0f64; N_PARAMS]; N_PARAMS];
    for (a, &i) in stage2.free.iter().enumerate() {
        for (b, &j) in stage2.free.iter().enumerate() {
            cov[i][j] = cov_free[(a, b)];
        }
    }
    let params = to_params(&u, qp_enabled);
    let log_est = |i: usize, v: f64| Estimate::new(v, v * cov[i][i].sqrt());
    let s = sigmoid(u[3]);
    let q_tls0 = log_est(0, params.q_tls0);
    let q_other = log_est(5, params.q_other);
    let d = log_est(1, params.d);
    let beta1 = log_est(IDX_BETA1, params.beta1);
    let beta2 = Estimate::new(
        params.beta2,
        if cov[3][3].is_finite() { 2.0 * s * (1.0 - s) * cov[3][3].sqrt() } else { f64::INFINITY },
    );
    // Q_TLS0 only means something if the saturation shape is pinned down too;
    // a shape parameter stuck on a bound leaves it conditional.
    let shape_ok = [(1, d), (IDX_BETA1, beta1), (3, beta2)]
        .iter()
        .all(|(i, e)| !stage2.free.contains(i) || e.sigma.is_finite());
    let fit = LossFit {
        params,
        q_tls0,
        d,
        beta1,
        beta2,
        a_qp: params.a_qp.map(|a| log_est(IDX_A_QP, a)),
        q_other,
        omega,
        delta_0,
        parameter_names: stage2.free.iter().map(|&i| PARAM_NAMES[i].to_string()).collect(),
        correlations: lm::correlation(&cov_free),
        q_tls0_reliable: q_tls0.is_reliable() && shape_ok,
        q_other_reliable: q_other.is_reliable(),
        notes,
        residual_rms: (sol.cost / grid.len() as f64).sqrt(),
        n_points: grid.len(),
    };
    Ok(fit)
}

/// Weighted log-residual objective for a parameter set (used to check
/// reordering invariance and for diagnostics).
pub fn log_objective(grid: &[LossGridPoint], params: &LossParams, omega: f64, delta_0: f64) -> f64 {
    grid.iter()
        .map(|p| {
            let r = (params.q_total(p.nbar, p.temperature_k, omega, delta_0).ln() - p.q_int.value.ln())
                / (p.q_int.sigma / p.q_int.value);
            r * r
        })
        .sum()
}
