//! Transmon coherence analysis: decay fits, dephasing, energy relations and
//! time-series statistics.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::constants::BOLTZMANN;
use crate::error::{require_positive, Error, Result};
use crate::lm::{self, LmConfig, Problem};
use crate::model::{Estimate, TimeStat};
use crate::stats::{mean, median, sample_sd};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DecayKind {
    T1,
    T2E,
    T2R,
}

impl DecayKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DecayKind::T1 => "T1",
            DecayKind::T2E => "T2E",
            DecayKind::T2R => "T2R",
        }
    }
}

impl std::str::FromStr for DecayKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "T1" => Ok(DecayKind::T1),
            "T2E" => Ok(DecayKind::T2E),
            "T2R" => Ok(DecayKind::T2R),
            other => Err(Error::Validation(format!("unknown decay kind {other:?}"))),
        }
    }
}

/// Excited-state population versus delay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayTrace {
    pub delays: Vec<f64>,
    pub p_e: Vec<f64>,
    pub kind: DecayKind,
    pub detuning_hint: Option<f64>,
}

impl DecayTrace {
    pub fn new(delays: Vec<f64>, p_e: Vec<f64>, kind: DecayKind, detuning_hint: Option<f64>) -> Result<Self> {
        if delays.len() != p_e.len() {
            return Err(Error::Validation(format!(
                "{} delays but {} populations",
                delays.len(),
                p_e.len()
            )));
        }
        if delays.iter().chain(&p_e).any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite sample in decay trace".into()));
        }
        if let Some(i) = delays.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Validation(format!("delays not increasing at index {}", i + 1)));
        }
        Ok(Self {
            delays,
            p_e,
            kind,
            detuning_hint,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub time: Estimate,
    pub amplitude: f64,
    pub offset: f64,
    /// Ramsey beat frequencies in Hz, ascending; empty for T1/T2E.
    pub beats: Vec<Estimate>,
    pub residual_rms: f64,
}

// ---------------------------------------------------------------------------
// Exponential decay

struct ExpProblem<'a> {
    t: &'a [f64],
    y: &'a [f64],
}

impl Problem for ExpProblem<'_> {
    fn n_params(&self) -> usize {
        3
    }
    fn n_residuals(&self) -> usize {
        self.t.len()
    }
    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let rate = (-p[2]).exp();
        for i in 0..self.t.len() {
            out[i] = p[0] * (-self.t[i] * rate).exp() + p[1] - self.y[i];
        }
    }
    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) {
        let rate = (-p[2]).exp();
        for i in 0..self.t.len() {
            let e = (-self.t[i] * rate).exp();
            jac[(i, 0)] = e;
            jac[(i, 1)] = 1.0;
            jac[(i, 2)] = p[0] * e * self.t[i] * rate;
        }
    }
}

fn exp_initial(t: &[f64], y: &[f64]) -> [f64; 3] {
    let n = t.len();
    let k = (n / 6).max(2);
    let c = mean(&y[n - k..]);
    let a = mean(&y[..k.min(3)]) - c;
    // log-linear slope on points clearly above the tail
    let (mut sx, mut sy, mut sxx, mut sxy, mut m) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        let r = (y[i] - c) / a;
        if r > 0.1 && r < 0.95 {
            let l = r.ln();
            sx += t[i];
            sy += l;
            sxx += t[i] * t[i];
            sxy += t[i] * l;
            m += 1.0;
        }
    }
    let slope = if m >= 2.0 { (m * sxy - sx * sy) / (m * sxx - sx * sx) } else { f64::NAN };
    let tau = if slope.is_finite() && slope < 0.0 {
        -1.0 / slope
    } else {
        (t[0] * t[n - 1]).sqrt().max(t[n - 1] / 5.0)
    };
    [a, c, tau.ln()]
}

/// Fits p_e(τ) = a·e^{−τ/T} + c.
pub fn fit_exp_decay(trace: &DecayTrace) -> Result<DecayFit> {
    let n = trace.delays.len();
    if n < 8 {
        return Err(Error::Insufficient(format!("need ≥ 8 points, got {n}")));
    }
    let (lo, hi) = trace.p_e.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if lo == hi {
        return Err(Error::Insufficient("constant trace carries no decay".into()));
    }
    let problem = ExpProblem {
        t: &trace.delays,
        y: &trace.p_e,
    };
    let start = exp_initial(&trace.delays, &trace.p_e);
    let mut best: Option<lm::LmSolution> = None;
    for shift in [0.0, -1.0, 1.0] {
        let p0 = [start[0], start[1], start[2] + shift];
        if let Ok(sol) = lm::minimize(&problem, &p0, &LmConfig::default()) {
            if best.as_ref().is_none_or(|b| sol.cost < b.cost) {
                best = Some(sol);
            }
        }
    }
    let sol = best.ok_or_else(|| Error::Diverged("exponential fit did not converge".into()))?;
    let time = sol.params[2].exp();
    if !(time.is_finite() && time > 0.0) {
        return Err(Error::Diverged(format!("decay time {time} not positive")));
    }
    let cov = lm::covariance(&problem, &sol.params, sol.cost / sol.dof().max(1) as f64);
    Ok(DecayFit {
        time: Estimate::new(time, time * cov[(2, 2)].sqrt()),
        amplitude: sol.params[0],
        offset: sol.params[1],
        beats: Vec::new(),
        residual_rms: (sol.cost / n as f64).sqrt(),
    })
}

// ---------------------------------------------------------------------------
// Ramsey

/// Parameters: `[c, ln T, ν₁/scale, b₁, s₁, ν₂/scale, b₂, s₂, …]`.
struct RamseyProblem<'a> {
    t: &'a [f64],
    y: &'a [f64],
    beats: usize,
    nu_scale: f64,
}

impl Problem for RamseyProblem<'_> {
    fn n_params(&self) -> usize {
        2 + 3 * self.beats
    }
    fn n_residuals(&self) -> usize {
        self.t.len()
    }
    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let rate = (-p[1]).exp();
        for i in 0..self.t.len() {
            let t = self.t[i];
            let mut osc = 0.0;
            for k in 0..self.beats {
                let w = 2.0 * PI * p[2 + 3 * k] * self.nu_scale * t;
                osc += p[3 + 3 * k] * w.cos() + p[4 + 3 * k] * w.sin();
            }
            out[i] = (-t * rate).exp() * osc + p[0] - self.y[i];
        }
    }
    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) {
        let rate = (-p[1]).exp();
        for i in 0..self.t.len() {
            let t = self.t[i];
            let env = (-t * rate).exp();
            let mut osc = 0.0;
            jac[(i, 0)] = 1.0;
            for k in 0..self.beats {
                let (b, s) = (p[3 + 3 * k], p[4 + 3 * k]);
                let dw = 2.0 * PI * self.nu_scale * t;
                let w = dw * p[2 + 3 * k];
                let (sw, cw) = w.sin_cos();
                osc += b * cw + s * sw;
                jac[(i, 2 + 3 * k)] = env * (-b * sw + s * cw) * dw;
                jac[(i, 3 + 3 * k)] = env * cw;
                jac[(i, 4 + 3 * k)] = env * sw;
            }
            jac[(i, 1)] = env * osc * t * rate;
        }
    }
}

/// Amplitude spectrum |Σ y e^{−2πiνt}| on a grid of frequencies.
fn amplitude_spectrum(t: &[f64], y: &[f64], freqs: &[f64]) -> Vec<f64> {
    freqs
        .iter()
        .map(|&nu| {
            let (mut re, mut im) = (0.0, 0.0);
            for (ti, yi) in t.iter().zip(y) {
                let (s, c) = (2.0 * PI * nu * ti).sin_cos();
                re += yi * c;
                im -= yi * s;
            }
            (re * re + im * im).sqrt()
        })
        .collect()
}

struct Peak {
    freq: f64,
    height: f64,
    floor: f64,
}

fn spectral_peak(t: &[f64], y: &[f64], lo: f64, hi: f64) -> Peak {
    let duration = t[t.len() - 1] - t[0];
    let step = 0.25 / duration;
    let n = (((hi - lo) / step).floor() as usize).max(1);
    let freqs: Vec<f64> = (0..=n).map(|k| lo + k as f64 * step).collect();
    let amp = amplitude_spectrum(t, y, &freqs);
    let k = (0..amp.len()).max_by(|&a, &b| amp[a].total_cmp(&amp[b])).unwrap_or(0);
    // refine with a parabola through the neighbouring bins
    let mut freq = freqs[k];
    if k > 0 && k + 1 < amp.len() {
        let (a, b, c) = (amp[k - 1], amp[k], amp[k + 1]);
        let denom = a - 2.0 * b + c;
        if denom < 0.0 {
            freq += 0.5 * step * (a - c) / denom;
        }
    }
    // Rayleigh-distributed noise amplitudes: rms = median/√ln 2
    Peak {
        freq,
        height: amp[k],
        floor: median(&amp) / std::f64::consts::LN_2.sqrt(),
    }
}

/// Best linear coefficients [c, b₁, s₁, …] for fixed (T, ν) and the RSS.
fn linear_amplitudes(t: &[f64], y: &[f64], tau: f64, nus: &[f64]) -> (Vec<f64>, f64) {
    let n = t.len();
    let m = 1 + 2 * nus.len();
    let mut x = DMatrix::zeros(n, m);
    for i in 0..n {
        let env = (-t[i] / tau).exp();
        x[(i, 0)] = 1.0;
        for (k, nu) in nus.iter().enumerate() {
            let (s, c) = (2.0 * PI * nu * t[i]).sin_cos();
            x[(i, 1 + 2 * k)] = env * c;
            x[(i, 2 + 2 * k)] = env * s;
        }
    }
    let yv = DVector::from_column_slice(y);
    let coef = match x.clone().svd(true, true).solve(&yv, 1e-12) {
        Ok(c) => c,
        Err(_) => return (vec![0.0; m], f64::INFINITY),
    };
    let rss = (x * &coef - yv).norm_squared();
    (coef.iter().cloned().collect(), rss)
}

fn ramsey_start(t: &[f64], y: &[f64], nus: &[f64], nu_scale: f64) -> Vec<f64> {
    let duration = t[t.len() - 1] - t[0];
    let mut best = (duration, f64::INFINITY, Vec::new());
    for k in 0..=24 {
        let tau = duration * 0.05 * 200f64.powf(k as f64 / 24.0);
        let (coef, rss) = linear_amplitudes(t, y, tau, nus);
        if rss < best.1 {
            best = (tau, rss, coef);
        }
    }
    let (tau, _, coef) = best;
    let mut p = vec![coef[0], tau.ln()];
    for (k, nu) in nus.iter().enumerate() {
        p.extend([nu / nu_scale, coef[1 + 2 * k], coef[2 + 2 * k]]);
    }
    p
}

struct RamseyCandidate {
    sol: lm::LmSolution,
    beats: usize,
}

fn ramsey_fit_order(t: &[f64], y: &[f64], nus: &[f64], nu_scale: f64) -> Option<RamseyCandidate> {
    let problem = RamseyProblem {
        t,
        y,
        beats: nus.len(),
        nu_scale,
    };
    let p0 = ramsey_start(t, y, nus, nu_scale);
    lm::minimize(&problem, &p0, &LmConfig::default())
        .ok()
        .map(|sol| RamseyCandidate { sol, beats: nus.len() })
}

/// Small-sample corrected Akaike information criterion for Gaussian errors.
pub fn aicc(rss: f64, n: usize, k: usize) -> f64 {
    let n = n as f64;
    let k = k as f64;
    n * (rss / n).ln() + 2.0 * k + 2.0 * k * (k + 1.0) / (n - k - 1.0)
}

/// Margin by which the two-beat model must beat the one-beat model.
pub const RAMSEY_AICC_MARGIN: f64 = 2.0;
const RAMSEY_PEAK_FACTOR: f64 = 3.0;

/// Fits p_e(τ) = e^{−τ/T}·Σ_k (b_k cos 2πν_kτ + s_k sin 2πν_kτ) + c with one
/// or two beat components.
pub fn fit_ramsey(trace: &DecayTrace) -> Result<DecayFit> {
    let n = trace.delays.len();
    if n < 32 {
        return Err(Error::Insufficient(format!("need ≥ 32 points, got {n}")));
    }
    let hint = trace
        .detuning_hint
        .ok_or_else(|| Error::Validation("Ramsey fit needs a detuning hint".into()))?;
    require_positive("detuning_hint", hint)?;
    let t = &trace.delays;
    let y = &trace.p_e;
    let duration = t[n - 1] - t[0];
    let dt = duration / (n - 1) as f64;
    let nyquist = 0.5 / dt;
    let lo = 1.0 / duration;
    let hi = nyquist.min(3.0 * hint);
    if hi <= lo {
        return Err(Error::Insufficient("trace too short to resolve the detuning".into()));
    }

    // Remove the non-oscillating part before looking for beats.
    let baseline: Vec<f64> = match DecayTrace::new(t.clone(), y.clone(), DecayKind::T1, None)
        .and_then(|tr| fit_exp_decay(&tr))
    {
        Ok(f) => t.iter().map(|ti| f.amplitude * (-ti / f.time.value).exp() + f.offset).collect(),
        Err(_) => vec![mean(y); n],
    };
    let detrended: Vec<f64> = y.iter().zip(&baseline).map(|(a, b)| a - b).collect();
    let peak = spectral_peak(t, &detrended, lo, hi);
    if !(peak.height > 0.0 && peak.height >= RAMSEY_PEAK_FACTOR * peak.floor) {
        return Err(Error::NoOscillation(format!(
            "spectral peak {:.3e} below {RAMSEY_PEAK_FACTOR}× noise floor {:.3e}",
            peak.height, peak.floor
        )));
    }
    let nu_scale = peak.freq;

    let one = ramsey_fit_order(t, y, &[peak.freq], nu_scale)
        .ok_or_else(|| Error::Diverged("single-beat Ramsey fit did not converge".into()))?;
    let mut best = one;

    let problem1 = RamseyProblem {
        t,
        y,
        beats: 1,
        nu_scale,
    };
    let mut resid = vec![0.0; n];
    problem1.residuals(&best.sol.params, &mut resid);
    let second = spectral_peak(t, &resid, lo, hi);
    let nu1 = best.sol.params[2] * nu_scale;
    if let Some(two) = ramsey_fit_order(t, y, &[nu1, second.freq], nu_scale) {
        let a1 = aicc(best.sol.cost, n, 5);
        let a2 = aicc(two.sol.cost, n, 8);
        if a2 < a1 - RAMSEY_AICC_MARGIN {
            best = two;
        }
    }

    let problem = RamseyProblem {
        t,
        y,
        beats: best.beats,
        nu_scale,
    };
    let p = &best.sol.params;
    let cov = lm::covariance(&problem, p, best.sol.cost / best.sol.dof().max(1) as f64);
    let time = p[1].exp();
    if !(time.is_finite() && time > 0.0) {
        return Err(Error::Diverged(format!("Ramsey decay time {time} not positive")));
    }
    let mut beats: Vec<Estimate> = (0..best.beats)
        .map(|k| {
            let i = 2 + 3 * k;
            Estimate::new((p[i] * nu_scale).abs(), cov[(i, i)].sqrt() * nu_scale)
        })
        .collect();
    beats.sort_by(|a, b| a.value.total_cmp(&b.value));
    let amplitude = (0..best.beats).map(|k| p[3 + 3 * k].hypot(p[4 + 3 * k])).sum();
    Ok(DecayFit {
        time: Estimate::new(time, time * cov[(1, 1)].sqrt()),
        amplitude,
        offset: p[0],
        beats,
        residual_rms: (best.sol.cost / n as f64).sqrt(),
    })
}

/// Dispatches on the trace kind.
pub fn fit_decay(trace: &DecayTrace) -> Result<DecayFit> {
    match trace.kind {
        DecayKind::T1 | DecayKind::T2E => fit_exp_decay(trace),
        DecayKind::T2R => fit_ramsey(trace),
    }
}

// ---------------------------------------------------------------------------
// Derived quantities

/// Pure dephasing time from 1/T_φ = 1/T2E − 1/(2T1); +∞ once T2E ≥ 2·T1.
pub fn t_phi(t1: f64, t2e: f64) -> Result<f64> {
    require_positive("T1", t1)?;
    require_positive("T2E", t2e)?;
    let inv = 1.0 / t2e - 0.5 / t1;
    Ok(if inv > 0.0 { 1.0 / inv } else { f64::INFINITY })
}

/// Time-averaged quality factor 2π·f_q·T̄1.
pub fn q_bar(f_q: f64, t1_mean: f64) -> Result<f64> {
    require_positive("f_q", f_q)?;
    require_positive("T1_mean", t1_mean)?;
    Ok(2.0 * PI * f_q * t1_mean)
}

/// E_J/h from hf_q ≈ √(8E_J E_C) − E_C.
pub fn ej_from_transmon(f_q: f64, e_c_over_h: f64) -> Result<f64> {
    require_positive("f_q", f_q)?;
    require_positive("E_C/h", e_c_over_h)?;
    Ok((f_q + e_c_over_h).powi(2) / (8.0 * e_c_over_h))
}

/// Thermal fraction of broken Cooper pairs, √(2πk_BT/Δ₀)·e^{−Δ₀/k_BT}.
pub fn qp_fraction(temperature: f64, delta_0: f64) -> Result<f64> {
    require_positive("T", temperature)?;
    require_positive("Delta_0", delta_0)?;
    let kt = BOLTZMANN * temperature;
    Ok((2.0 * PI * kt / delta_0).sqrt() * (-delta_0 / kt).exp())
}

// ---------------------------------------------------------------------------
// Time series

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedFit {
    pub timestamp_s: f64,
    pub kind: DecayKind,
    pub time: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    /// (timestamp s, value s)
    pub series: Vec<(f64, f64)>,
    pub mean: f64,
    pub sd: f64,
    pub count: usize,
}

impl SeriesStats {
    fn from_series(series: Vec<(f64, f64)>) -> Option<Self> {
        if series.is_empty() {
            return None;
        }
        let values: Vec<f64> = series.iter().map(|s| s.1).collect();
        Some(Self {
            mean: mean(&values),
            sd: sample_sd(&values),
            count: series.len(),
            series,
        })
    }

    pub fn summary(&self) -> TimeStat {
        TimeStat {
            mean: self.mean,
            sd: self.sd,
            count: self.count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceStats {
    pub t1: Option<SeriesStats>,
    pub t2r: Option<SeriesStats>,
    pub t2e: Option<SeriesStats>,
    /// Finite T_φ values from paired T1/T2E fits.
    pub tphi: Option<SeriesStats>,
    /// Pairs at the lifetime limit (T2E ≥ 2·T1).
    pub tphi_unbounded: usize,
    /// Fits dropped because σ(T) ≥ T.
    pub rejected: usize,
}

impl CoherenceStats {
    /// Q̄ = 2πf_q·T̄1 with the spread of the T1 series.
    pub fn q_bar(&self, f_q: f64) -> Option<Estimate> {
        let t1 = self.t1.as_ref()?;
        let q = q_bar(f_q, t1.mean).ok()?;
        Some(Estimate::new(q, 2.0 * PI * f_q * t1.sd))
    }
}

/// Aggregates accepted fits; T1/T2E entries adjacent in time (ignoring T2R)
/// and closer than `pair_window` seconds form one T_φ sample each.
pub fn build_stats(series: &[TimedFit], pair_window: f64) -> Result<CoherenceStats> {
    if series.is_empty() {
        return Err(Error::Insufficient("empty coherence series".into()));
    }
    require_positive("pair_window", pair_window)?;
    let mut accepted: Vec<TimedFit> = series.iter().copied().filter(|f| f.time.is_reliable() && f.time.value > 0.0).collect();
    let rejected = series.len() - accepted.len();
    accepted.sort_by(|a, b| a.timestamp_s.total_cmp(&b.timestamp_s));

    let pick = |kind: DecayKind| {
        SeriesStats::from_series(
            accepted
                .iter()
                .filter(|f| f.kind == kind)
                .map(|f| (f.timestamp_s, f.time.value))
                .collect(),
        )
    };

    let echo_chain: Vec<&TimedFit> = accepted.iter().filter(|f| f.kind != DecayKind::T2R).collect();
    let mut tphi = Vec::new();
    let mut unbounded = 0;
    let mut i = 0;
    while i + 1 < echo_chain.len() {
        let (a, b) = (echo_chain[i], echo_chain[i + 1]);
        let pair = match (a.kind, b.kind) {
            (DecayKind::T1, DecayKind::T2E) => Some((a.time.value, b.time.value)),
            (DecayKind::T2E, DecayKind::T1) => Some((b.time.value, a.time.value)),
            _ => None,
        };
        match pair {
            Some((t1, t2e)) if (b.timestamp_s - a.timestamp_s).abs() < pair_window => {
                let v = t_phi(t1, t2e)?;
                if v.is_finite() {
                    tphi.push((0.5 * (a.timestamp_s + b.timestamp_s), v));
                } else {
                    unbounded += 1;
                }
                i += 2;
            }
            _ => i += 1,
        }
    }

    Ok(CoherenceStats {
        t1: pick(DecayKind::T1),
        t2r: pick(DecayKind::T2R),
        t2e: pick(DecayKind::T2E),
        tphi: SeriesStats::from_series(tphi),
        tphi_unbounded: unbounded,
        rejected,
    })
}
