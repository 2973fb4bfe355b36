//! Hanger-mode resonance fitting of complex transmission traces.
//!
//! The model is
//!
//! ```text
//! S21(f) = A·exp(i(α + 2πfτ)) · [1 − (Q_l/|Q_c|)·e^{iφ} / (1 + 2iQ_l(f/f_r − 1))]
//! ```
//!
//! Fitting follows the usual multi-step recipe: cable delay from the
//! unwrapped phase (refined so the delay-corrected data lie on a circle), an
//! algebraic circle fit, an arctangent fit of the phase around the circle
//! centre for f_r and Q_l, and finally a joint refinement of all seven
//! parameters on the complex residual.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{require_finite, require_positive, Error, Result};
use crate::lm::{self, LmConfig, Problem};
use crate::model::{validate_trace, ComplexTrace, TraceMeta};
use crate::stats::{linear_fit, median, robust_sigma, unwrap_phases};

/// The seven model parameters. Angles in rad, delay in s, frequency in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceParams {
    pub amplitude: f64,
    pub bg_phase: f64,
    pub delay: f64,
    pub q_l: f64,
    pub q_c_mag: f64,
    pub phi: f64,
    pub f_r: f64,
}

impl ResonanceParams {
    fn check(&self) -> Result<()> {
        require_finite("amplitude", self.amplitude)?;
        require_finite("bg_phase", self.bg_phase)?;
        require_finite("delay", self.delay)?;
        require_finite("phi", self.phi)?;
        require_positive("Q_l", self.q_l)?;
        require_positive("|Q_c|", self.q_c_mag)?;
        require_positive("f_r", self.f_r)
    }

    /// Diameter of the resonance circle relative to the background, Q_l/|Q_c|.
    pub fn diameter(&self) -> f64 {
        self.q_l / self.q_c_mag
    }

    pub fn linewidth(&self) -> f64 {
        self.f_r / self.q_l
    }
}

fn eval(p: &ResonanceParams, f: f64) -> Complex64 {
    let background = Complex64::from_polar(p.amplitude, p.bg_phase + 2.0 * PI * f * p.delay);
    let detuning = (f - p.f_r) / p.f_r;
    let coupling = Complex64::from_polar(p.q_l / p.q_c_mag, p.phi);
    background * (1.0 - coupling / Complex64::new(1.0, 2.0 * p.q_l * detuning))
}

/// Evaluates the resonance model at probe frequency `f`.
pub fn s21_model(p: &ResonanceParams, f: f64) -> Result<Complex64> {
    p.check()?;
    require_finite("f", f)?;
    Ok(eval(p, f))
}

/// Internal quality factor from 1/Q_int = 1/Q_l − cos φ/|Q_c|.
pub fn q_int(q_l: f64, q_c_mag: f64, phi: f64) -> Result<f64> {
    require_positive("Q_l", q_l)?;
    require_positive("|Q_c|", q_c_mag)?;
    require_finite("phi", phi)?;
    let inv = 1.0 / q_l - phi.cos() / q_c_mag;
    if inv > 0.0 {
        Ok(1.0 / inv)
    } else {
        Err(Error::Unphysical(format!(
            "overcoupled: 1/Q_l − cos(φ)/|Q_c| = {inv:e} ≤ 0"
        )))
    }
}

/// One standard error per fitted quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceSigmas {
    pub amplitude: f64,
    pub bg_phase: f64,
    pub delay: f64,
    pub q_l: f64,
    pub q_c_mag: f64,
    pub phi: f64,
    pub f_r: f64,
    pub q_int: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceFit {
    pub params: ResonanceParams,
    pub q_int: f64,
    pub sigmas: ResonanceSigmas,
    /// RMS magnitude of the complex residual.
    pub residual_rms: f64,
    pub iterations: usize,
    /// Cleared when a downstream screen rejects the trace.
    pub accepted: bool,
    pub meta: TraceMeta,
}

/// Frequency grid with uniform angular spacing around the resonance circle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpdPlan {
    pub freqs: Vec<f64>,
    pub f_r_seed: f64,
    pub q_l_seed: f64,
    pub span_linewidths: f64,
    /// Largest |θ| used, in rad.
    pub theta_max: f64,
}

pub const HPD_DEFAULT_POINTS: usize = 251;
pub const HPD_DEFAULT_SPAN: f64 = 15.0;

/// Offset f(θ) − f_r for the homophasal grid.
fn hpd_offset(f_r: f64, q_l: f64, theta: f64) -> f64 {
    -f_r * (0.5 * theta).tan() / (2.0 * q_l)
}

/// f(θ) = f_r·(1 − tan(θ/2)/(2Q_l)) on `n_points` uniformly spaced θ whose
/// extreme frequencies are `span_linewidths`·f_r/Q_l apart. Sorted ascending.
pub fn plan_hpd(f_r_seed: f64, q_l_seed: f64, n_points: usize, span_linewidths: f64) -> Result<HpdPlan> {
    require_positive("f_r_seed", f_r_seed)?;
    require_positive("Q_l_seed", q_l_seed)?;
    require_positive("span_linewidths", span_linewidths)?;
    if n_points < 3 {
        return Err(Error::domain(format!("need at least 3 points, got {n_points}")));
    }
    // f(−θm) − f(θm) = f_r·tan(θm/2)/Q_l
    let theta_max = 2.0 * (span_linewidths).atan();
    if !(theta_max < PI) {
        return Err(Error::domain("span reaches the tangent singularity at |θ| = π"));
    }
    let last = (n_points - 1) as f64;
    // θ runs from +θm down to −θm so that frequencies come out ascending;
    // the integer numerator keeps the grid exactly antisymmetric.
    let freqs: Vec<f64> = (0..n_points)
        .map(|k| {
            let frac = ((n_points - 1) as f64 - 2.0 * k as f64) / last;
            f_r_seed + hpd_offset(f_r_seed, q_l_seed, theta_max * frac)
        })
        .collect();
    if freqs.iter().any(|f| !f.is_finite() || *f <= 0.0) {
        return Err(Error::domain("HPD grid produced non-positive frequencies"));
    }
    Ok(HpdPlan {
        freqs,
        f_r_seed,
        q_l_seed,
        span_linewidths,
        theta_max,
    })
}

pub fn plan_hpd_default(f_r_seed: f64, q_l_seed: f64) -> Result<HpdPlan> {
    plan_hpd(f_r_seed, q_l_seed, HPD_DEFAULT_POINTS, HPD_DEFAULT_SPAN)
}

/// Seeds for the next (lower-power) HPD plan from the previous accepted fit.
pub fn seed_chain(previous: &ResonanceFit) -> Result<(f64, f64)> {
    if !previous.accepted {
        return Err(Error::Validation("cannot seed from a rejected fit".into()));
    }
    Ok((previous.params.f_r, previous.params.q_l))
}

// ---------------------------------------------------------------------------
// Initialization helpers

#[derive(Debug, Clone, Copy)]
pub(crate) struct Circle {
    pub center: Complex64,
    pub radius: f64,
}

/// Algebraic circle fit (Taubin), solved by Newton iteration on the
/// characteristic polynomial of the moment matrix.
pub(crate) fn fit_circle(points: &[Complex64]) -> Option<Circle> {
    let n = points.len() as f64;
    if points.len() < 3 {
        return None;
    }
    let mean = points.iter().sum::<Complex64>() / n;
    let (mut mxx, mut myy, mut mxy, mut mxz, mut myz, mut mzz) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for p in points {
        let x = p.re - mean.re;
        let y = p.im - mean.im;
        let z = x * x + y * y;
        mxx += x * x;
        myy += y * y;
        mxy += x * y;
        mxz += x * z;
        myz += y * z;
        mzz += z * z;
    }
    mxx /= n;
    myy /= n;
    mxy /= n;
    mxz /= n;
    myz /= n;
    mzz /= n;
    let mz = mxx + myy;
    let cov_xy = mxx * myy - mxy * mxy;
    let var_z = mzz - mz * mz;
    let a3 = 4.0 * mz;
    let a2 = -3.0 * mz * mz - mzz;
    let a1 = var_z * mz + 4.0 * cov_xy * mz - mxz * mxz - myz * myz;
    let a0 = mxz * (mxz * myy - myz * mxy) + myz * (myz * mxx - mxz * mxy) - var_z * cov_xy;
    let a22 = a2 + a2;
    let a33 = a3 + a3 + a3;
    let (mut x, mut y) = (0.0f64, a0);
    for _ in 0..100 {
        let dy = a1 + x * (a22 + a33 * x);
        let x_new = x - y / dy;
        if x_new == x || !x_new.is_finite() {
            break;
        }
        let y_new = a0 + x_new * (a1 + x_new * (a2 + x_new * a3));
        if y_new.abs() >= y.abs() {
            break;
        }
        x = x_new;
        y = y_new;
    }
    let det = x * x - x * mz + cov_xy;
    let cx = (mxz * (myy - x) - myz * mxy) / det / 2.0;
    let cy = (myz * (mxx - x) - mxz * mxy) / det / 2.0;
    let radius = (cx * cx + cy * cy + mz).sqrt();
    let center = Complex64::new(cx + mean.re, cy + mean.im);
    (center.re.is_finite() && center.im.is_finite() && radius.is_finite() && radius > 0.0)
        .then_some(Circle { center, radius })
}

fn circle_misfit(points: &[Complex64]) -> f64 {
    match fit_circle(points) {
        Some(c) => {
            points.iter().map(|p| ((p - c.center).norm() - c.radius).powi(2)).sum::<f64>()
        }
        None => f64::INFINITY,
    }
}

fn remove_delay(freq: &[f64], s21: &[Complex64], f_ref: f64, delay: f64) -> Vec<Complex64> {
    freq.iter()
        .zip(s21)
        .map(|(&f, &z)| z * Complex64::from_polar(1.0, -2.0 * PI * (f - f_ref) * delay))
        .collect()
}

/// Cable delay from the phase steps between adjacent off-resonant samples.
///
/// Steps are taken in order of increasing frequency spacing so that each
/// 2π ambiguity is resolved with the estimate from the finer steps; the
/// result is then refined by minimizing the circle-fit misfit of the
/// delay-corrected data.
fn estimate_delay(freq: &[f64], s21: &[Complex64], f_ref: f64) -> f64 {
    let n = freq.len();
    let quarter = n / 4;
    let mut steps: Vec<(f64, f64)> = (0..n - 1)
        .filter(|&k| k < quarter || k + 1 >= n - quarter)
        .map(|k| (freq[k + 1] - freq[k], (s21[k + 1] * s21[k].conj()).arg()))
        .collect();
    steps.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (df, dphi) in steps {
        let predicted = if sxx > 0.0 { sxy / sxx * df } else { 0.0 };
        let unwrapped = dphi + 2.0 * PI * ((predicted - dphi) / (2.0 * PI)).round();
        sxy += unwrapped * df;
        sxx += df * df;
    }
    let tau0 = if sxx > 0.0 { sxy / sxx / (2.0 * PI) } else { 0.0 };

    let span = freq[n - 1] - freq[0];
    let misfit = |tau: f64| circle_misfit(&remove_delay(freq, s21, f_ref, tau));
    // The resonance alone can tilt the phase slope by at most ~π over the span.
    let half_width = 1.0 / span;
    let n_scan = 48;
    let mut best = (tau0, misfit(tau0));
    for k in 0..=n_scan {
        let tau = tau0 - half_width + 2.0 * half_width * k as f64 / n_scan as f64;
        let m = misfit(tau);
        if m < best.1 {
            best = (tau, m);
        }
    }
    let step = 2.0 * half_width / n_scan as f64;
    lm::golden_section(misfit, best.0 - step, best.0 + step, step * 1e-9)
}

/// Phase around the circle centre: θ(f) = θ₀ + 2·atan(2Q_l(1 − f/f_r)).
struct PhaseProblem<'a> {
    freq: &'a [f64],
    theta: &'a [f64],
    f_ref: f64,
    width: f64,
}

impl PhaseProblem<'_> {
    fn unpack(&self, p: &[f64]) -> (f64, f64, f64) {
        (p[0], p[1].exp(), self.f_ref + p[2] * self.width)
    }
}

impl Problem for PhaseProblem<'_> {
    fn n_params(&self) -> usize {
        3
    }
    fn n_residuals(&self) -> usize {
        self.freq.len()
    }
    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let (theta0, q_l, f_r) = self.unpack(p);
        for i in 0..self.freq.len() {
            let model = theta0 + 2.0 * (2.0 * q_l * (f_r - self.freq[i]) / f_r).atan();
            out[i] = model - self.theta[i];
        }
    }
}

fn fit_phase(freq: &[f64], theta: &[f64]) -> Option<(f64, f64, f64)> {
    let n = freq.len();
    let mid_level = 0.5 * (theta[0] + theta[n - 1]);
    // resonance: where the phase passes its mid level
    let mut k_mid = 0;
    for k in 0..n {
        if (theta[k] - mid_level).abs() < (theta[k_mid] - mid_level).abs() {
            k_mid = k;
        }
    }
    let f_r0 = freq[k_mid];
    // local slope dθ/df = −4Q_l/f_r near resonance
    let lo = k_mid.saturating_sub(3);
    let hi = (k_mid + 4).min(n);
    let (_, slope) = linear_fit(&freq[lo..hi], &theta[lo..hi]);
    let mut q0 = (-slope * f_r0 / 4.0).abs();
    if !q0.is_finite() || q0 <= 0.0 {
        q0 = f_r0 / (freq[n - 1] - freq[0]);
    }
    let width = f_r0 / q0;
    let problem = PhaseProblem {
        freq,
        theta,
        f_ref: f_r0,
        width,
    };
    let mut best: Option<(f64, lm::LmSolution)> = None;
    for scale in [1.0, 0.3, 3.0] {
        let start = [mid_level, (q0 * scale).ln(), 0.0];
        if let Ok(sol) = lm::minimize(&problem, &start, &LmConfig::default()) {
            if best.as_ref().is_none_or(|b| sol.cost < b.0) {
                best = Some((sol.cost, sol));
            }
        }
    }
    let (_, sol) = best?;
    let (theta0, q_l, f_r) = problem.unpack(&sol.params);
    Some((theta0, q_l, f_r))
}

// ---------------------------------------------------------------------------
// Full refinement

/// Internal parameterization, every coordinate O(1):
/// `[ln A, α_ref, s, ln Q_l, ln |Q_c|, φ, u]` with the background phase taken
/// at `f_ref`, `s = 2π·τ·width_ref` and `f_r = f_ref + u·linewidth_ref`.
struct FullProblem<'a> {
    freq: &'a [f64],
    data: &'a [Complex64],
    f_ref: f64,
    span: f64,
    lw_ref: f64,
}

impl FullProblem<'_> {
    fn to_params(&self, p: &[f64]) -> ResonanceParams {
        let delay = p[2] / (2.0 * PI * self.span);
        ResonanceParams {
            amplitude: p[0].exp(),
            bg_phase: p[1] - 2.0 * PI * self.f_ref * delay,
            delay,
            q_l: p[3].exp(),
            q_c_mag: p[4].exp(),
            phi: p[5],
            f_r: self.f_ref + p[6] * self.lw_ref,
        }
    }

    fn from_params(&self, r: &ResonanceParams) -> [f64; 7] {
        [
            r.amplitude.ln(),
            r.bg_phase + 2.0 * PI * self.f_ref * r.delay,
            r.delay * 2.0 * PI * self.span,
            r.q_l.ln(),
            r.q_c_mag.ln(),
            r.phi,
            (r.f_r - self.f_ref) / self.lw_ref,
        ]
    }

    /// (S, background, N, D) at sample i.
    fn parts(&self, p: &[f64], i: usize) -> (Complex64, Complex64, Complex64, Complex64) {
        let f = self.freq[i];
        let f_r = self.f_ref + p[6] * self.lw_ref;
        let q_l = p[3].exp();
        let psi = p[1] + p[2] * (f - self.f_ref) / self.span;
        let bg = Complex64::from_polar(p[0].exp(), psi);
        let num = Complex64::from_polar((p[3] - p[4]).exp(), p[5]);
        let den = Complex64::new(1.0, 2.0 * q_l * (f - f_r) / f_r);
        (bg * (1.0 - num / den), bg, num, den)
    }
}

impl Problem for FullProblem<'_> {
    fn n_params(&self) -> usize {
        7
    }
    fn n_residuals(&self) -> usize {
        2 * self.freq.len()
    }
    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        for i in 0..self.freq.len() {
            let (s, _, _, _) = self.parts(p, i);
            let r = s - self.data[i];
            out[2 * i] = r.re;
            out[2 * i + 1] = r.im;
        }
    }
    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) {
        let i_unit = Complex64::new(0.0, 1.0);
        let q_l = p[3].exp();
        let f_r = self.f_ref + p[6] * self.lw_ref;
        for i in 0..self.freq.len() {
            let f = self.freq[i];
            let (s, bg, num, den) = self.parts(p, i);
            let nd2 = num / (den * den);
            let cols = [
                s,
                i_unit * s,
                i_unit * s * ((f - self.f_ref) / self.span),
                -bg * nd2,
                bg * num / den,
                -bg * i_unit * num / den,
                bg * nd2 * (-2.0 * i_unit * q_l * f / (f_r * f_r)) * self.lw_ref,
            ];
            for (j, c) in cols.iter().enumerate() {
                jac[(2 * i, j)] = c.re;
                jac[(2 * i + 1, j)] = c.im;
            }
        }
    }
}

fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Initial estimate of all seven parameters.
pub fn initial_guess(freq: &[f64], s21: &[Complex64]) -> Result<ResonanceParams> {
    let n = freq.len();
    let f_ref = 0.5 * (freq[0] + freq[n - 1]);
    let delay = estimate_delay(freq, s21, f_ref);
    let corrected = remove_delay(freq, s21, f_ref, delay);
    let circle = fit_circle(&corrected).ok_or(Error::NoResonance)?;
    let centred: Vec<f64> = corrected.iter().map(|z| (z - circle.center).arg()).collect();
    let theta = unwrap_phases(&centred);
    let (theta0, q_l, f_r) = fit_phase(freq, &theta).ok_or(Error::NoResonance)?;
    let off_res = circle.center + Complex64::from_polar(circle.radius, theta0 + PI);
    let amplitude = off_res.norm();
    let q_c_mag = q_l * amplitude / (2.0 * circle.radius);
    let phi = wrap_angle((1.0 - circle.center / off_res).arg());
    // corrected = raw·e^{−2πi(f−f_ref)τ}, so the background phase at f = 0 is
    // arg(off_res) − 2π f_ref τ.
    Ok(ResonanceParams {
        amplitude,
        bg_phase: off_res.arg() - 2.0 * PI * f_ref * delay,
        delay,
        q_l,
        q_c_mag,
        phi,
        f_r,
    })
}

/// Initial estimate by variable projection: for fixed (Q_l, f_r) the model
/// is linear in the complex background b and resonant weight c,
/// S = b − c/(1 + 2iQ_l(f − f_r)/f_r), so a grid over (Q_l, f_r) with a
/// 2×2 complex solve at each node finds the basin without relying on the
/// phase around a noisy circle.
pub fn projected_guess(freq: &[f64], s21: &[Complex64]) -> Option<ResonanceParams> {
    let n = freq.len();
    let f_ref = 0.5 * (freq[0] + freq[n - 1]);
    let span = freq[n - 1] - freq[0];
    let delay = estimate_delay(freq, s21, f_ref);
    let y = remove_delay(freq, s21, f_ref, delay);
    let min_df = freq.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let (q_lo, q_hi) = (0.5 * f_ref / span, (f_ref / min_df).max(f_ref / span));
    let n_q = 60;
    let sum_y: Complex64 = y.iter().sum();
    let nn = n as f64;

    // (cost, q_l, f_r, b, c)
    let mut best: Option<(f64, f64, f64, Complex64, Complex64)> = None;
    let mut g = vec![Complex64::new(0.0, 0.0); n];
    for iq in 0..n_q {
        let q_l = q_lo * (q_hi / q_lo).powf(iq as f64 / (n_q - 1) as f64);
        for &f_r in freq.iter().step_by(2) {
            for (gi, &f) in g.iter_mut().zip(freq) {
                *gi = 1.0 / Complex64::new(1.0, 2.0 * q_l * (f - f_r) / f_r);
            }
            // normal equations for y ≈ b·1 − c·g
            let sg: Complex64 = g.iter().sum();
            let sgg: f64 = g.iter().map(|v| v.norm_sqr()).sum();
            let sgy: Complex64 = g.iter().zip(&y).map(|(a, b)| a.conj() * b).sum();
            let det = nn * sgg - sg.norm_sqr();
            if !(det > 1e-12 * nn * sgg) {
                continue;
            }
            let b = (sgg * sum_y - sg * sgy) / det;
            let c = (sg.conj() * sum_y - nn * sgy) / det;
            let cost: f64 = g.iter().zip(&y).map(|(gi, yi)| (yi - b + c * gi).norm_sqr()).sum();
            if best.is_none_or(|bst| cost < bst.0) {
                best = Some((cost, q_l, f_r, b, c));
            }
        }
    }
    let (_, q_l, f_r, b, c) = best?;
    let ratio = c / b;
    if !(b.norm() > 0.0 && ratio.norm() > 0.0) {
        return None;
    }
    Some(ResonanceParams {
        amplitude: b.norm(),
        bg_phase: b.arg() - 2.0 * PI * f_ref * delay,
        delay,
        q_l,
        q_c_mag: q_l / ratio.norm(),
        phi: wrap_angle(ratio.arg()),
        f_r,
    })
}

fn dip_visible(s21: &[Complex64]) -> bool {
    let mags: Vec<f64> = s21.iter().map(|z| z.norm()).collect();
    let min = mags.iter().cloned().fold(f64::INFINITY, f64::min);
    min < 0.99 * median(&mags)
}

/// Fits a trace to the resonance model and derives Q_int.
pub fn fit_s21(trace: &ComplexTrace) -> Result<ResonanceFit> {
    let report = validate_trace(trace);
    if !report.is_clean() {
        return Err(Error::Validation(report.to_string()));
    }
    if !dip_visible(&trace.s21) {
        return Err(Error::NoResonance);
    }
    let usable = |g: &ResonanceParams| g.q_l.is_finite() && g.q_l > 0.0 && g.q_c_mag.is_finite() && g.q_c_mag > 0.0;
    let candidates: Vec<ResonanceParams> = [initial_guess(&trace.freq, &trace.s21).ok(), projected_guess(&trace.freq, &trace.s21)]
        .into_iter()
        .flatten()
        .filter(usable)
        .collect();
    let mut best: Option<Result<ResonanceFit>> = None;
    for g in &candidates {
        let r = refine(trace, g);
        best = match (best, r) {
            (None, r) => Some(r),
            (Some(Err(_)), r) => Some(r),
            (Some(Ok(a)), Ok(b)) if b.residual_rms < a.residual_rms => Some(Ok(b)),
            (keep, _) => keep,
        };
    }
    best.unwrap_or(Err(Error::NoResonance))
}

/// Joint seven-parameter refinement from a starting point.
pub fn refine(trace: &ComplexTrace, start: &ResonanceParams) -> Result<ResonanceFit> {
    let n = trace.len();
    let f_ref = 0.5 * (trace.freq[0] + trace.freq[n - 1]);
    let span = trace.freq[n - 1] - trace.freq[0];
    let problem = FullProblem {
        freq: &trace.freq,
        data: &trace.s21,
        f_ref,
        span,
        lw_ref: start.linewidth(),
    };
    let p0 = problem.from_params(start);
    let sol = lm::minimize(&problem, &p0, &LmConfig::default())?;
    let mut params = problem.to_params(&sol.params);

    let dof = (2 * n).saturating_sub(7).max(1) as f64;
    let cov = lm::covariance(&problem, &sol.params, sol.cost / dof);

    params.phi = wrap_angle(params.phi);
    if params.phi.abs() >= FRAC_PI_2 {
        return Err(Error::Unphysical(format!(
            "asymmetry phase {:.3} rad outside (−π/2, π/2)",
            params.phi
        )));
    }
    params.bg_phase = wrap_angle(params.bg_phase);
    if !(params.f_r >= trace.freq[0] && params.f_r <= trace.freq[n - 1]) {
        return Err(Error::Unphysical(format!(
            "resonance frequency {} Hz outside the trace span",
            params.f_r
        )));
    }
    let qi = q_int(params.q_l, params.q_c_mag, params.phi)?;

    let var = |i: usize| cov[(i, i)];
    let delay_scale = 1.0 / (2.0 * PI * span);
    let bg_phase_var = var(1) + (2.0 * PI * f_ref * delay_scale).powi(2) * var(2)
        - 2.0 * (2.0 * PI * f_ref * delay_scale) * cov[(1, 2)];
    // Q_int gradient in (ln Q_l, ln |Q_c|, φ)
    let g = [
        qi * qi / params.q_l,
        -qi * qi * params.phi.cos() / params.q_c_mag,
        -qi * qi * params.phi.sin() / params.q_c_mag,
    ];
    let idx = [3, 4, 5];
    let mut qi_var = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            qi_var += g[a] * g[b] * cov[(idx[a], idx[b])];
        }
    }
    let sigmas = ResonanceSigmas {
        amplitude: params.amplitude * var(0).sqrt(),
        bg_phase: bg_phase_var.max(0.0).sqrt(),
        delay: delay_scale * var(2).sqrt(),
        q_l: params.q_l * var(3).sqrt(),
        q_c_mag: params.q_c_mag * var(4).sqrt(),
        phi: var(5).sqrt(),
        f_r: problem.lw_ref * var(6).sqrt(),
        q_int: qi_var.max(0.0).sqrt(),
    };
    Ok(ResonanceFit {
        params,
        q_int: qi,
        sigmas,
        residual_rms: (sol.cost / n as f64).sqrt(),
        iterations: sol.iterations,
        accepted: true,
        meta: trace.meta,
    })
}

/// Complex residuals data − model for a fit.
pub fn fit_residuals(trace: &ComplexTrace, fit: &ResonanceFit) -> Vec<Complex64> {
    trace
        .freq
        .iter()
        .zip(&trace.s21)
        .map(|(&f, &z)| z - eval(&fit.params, f))
        .collect()
}

// ---------------------------------------------------------------------------
// Nonlinearity screen

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenResult {
    pub flagged: bool,
    /// residual_rms / off-resonant noise floor (complex RMS scale).
    pub residual_ratio: f64,
    pub noise_floor: f64,
    /// Phase steps against the sweep direction larger than the noise allows.
    pub phase_reversals: usize,
    pub reasons: Vec<String>,
}

const SCREEN_RESIDUAL_FACTOR: f64 = 5.0;
const SCREEN_PHASE_SIGMAS: f64 = 4.5;
const SCREEN_OUTER_FRACTION: f64 = 0.2;

/// Flags traces whose fit residual is far above the off-resonant noise floor,
/// or whose phase around the resonance circle runs backwards (bifurcation).
pub fn nonlinearity_screen(trace: &ComplexTrace, fit: &ResonanceFit) -> ScreenResult {
    let n = trace.len();
    let residuals = fit_residuals(trace, fit);
    let n_edge = ((SCREEN_OUTER_FRACTION * n as f64) / 2.0).ceil().max(3.0) as usize;
    // Second differences cancel smooth misfit, leaving the sample-to-sample
    // scatter; for white noise their variance is 6σ².
    let mut outer: Vec<f64> = Vec::with_capacity(4 * n_edge);
    for edge in [&residuals[..n_edge], &residuals[n - n_edge..]] {
        for w in edge.windows(3) {
            let d = w[0] - 2.0 * w[1] + w[2];
            outer.push(d.re);
            outer.push(d.im);
        }
    }
    let sigma_component = robust_sigma(&outer) / 6f64.sqrt();
    let floor = (sigma_component * 2f64.sqrt()).max(1e-9 * fit.params.amplitude);
    let residual_ratio = fit.residual_rms / floor;

    let p = &fit.params;
    let radius = 0.5 * p.diameter();
    let center = Complex64::new(1.0, 0.0) - Complex64::from_polar(radius, p.phi);
    let angles: Vec<f64> = trace
        .freq
        .iter()
        .zip(&trace.s21)
        .map(|(&f, &z)| {
            let bg = Complex64::from_polar(p.amplitude, p.bg_phase + 2.0 * PI * f * p.delay);
            (z / bg - center).arg()
        })
        .collect();
    let angles = unwrap_phases(&angles);
    let angle_noise = (floor / p.amplitude) / radius.max(1e-12);
    let tol = SCREEN_PHASE_SIGMAS * angle_noise * 2f64.sqrt();
    // The angle decreases with frequency for this model.
    let phase_reversals = angles.windows(2).filter(|w| w[1] - w[0] > tol).count();

    let mut reasons = Vec::new();
    if residual_ratio > SCREEN_RESIDUAL_FACTOR {
        reasons.push(format!(
            "residual {:.3e} is {:.1}× the off-resonant noise floor",
            fit.residual_rms, residual_ratio
        ));
    }
    if phase_reversals > 0 {
        reasons.push(format!("{phase_reversals} phase reversal(s) through resonance"));
    }
    ScreenResult {
        flagged: !reasons.is_empty(),
        residual_ratio,
        noise_floor: floor,
        phase_reversals,
        reasons,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;
    use crate::synth::{synth_s21, DuffingWarp, S21Scenario};

    fn base() -> ResonanceParams {
        ResonanceParams {
            amplitude: 1.0,
            bg_phase: 0.0,
            delay: 0.0,
            q_l: 1e4,
            q_c_mag: 2e4,
            phi: 0.0,
            f_r: 5e9,
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn on_resonance_dip() {
        let z = s21_model(&base(), 5e9).unwrap();
        assert!((z - Complex64::new(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn far_off_resonance_returns_background() {
        for f in [5e9 * 11.0, 5e9 * 0.1] {
            let z = s21_model(&base(), f).unwrap();
            assert!((z.norm() - 1.0).abs() < 1e-4);
        }
        let _ = s21_model(&base(), -9.0 * 5e9);
    }

    #[test]
    fn asymmetric_on_resonance_value() {
        let mut p = base();
        p.phi = 0.3;
        let z = s21_model(&p, 5e9).unwrap();
        let expected = Complex64::new(1.0, 0.0) - 0.5 * Complex64::from_polar(1.0, 0.3);
        assert!((z - expected).norm() < 1e-15);
    }

    #[test]
    fn model_rejects_non_finite() {
        let mut p = base();
        p.delay = f64::NAN;
        assert!(s21_model(&p, 5e9).is_err());
        p = base();
        p.q_l = 0.0;
        assert!(s21_model(&p, 5e9).is_err());
    }

    #[test]
    fn q_int_identities() {
        assert!((q_int(1e4, 2e4, 0.0).unwrap() - 2e4).abs() < 1e-9);
        assert!(rel(q_int(1e4, 2e4, FRAC_PI_2).unwrap(), 1e4) < 1e-12);
        assert!(matches!(q_int(1e4, 9e3, 0.0), Err(Error::Unphysical(_))));
    }

    #[test]
    fn hpd_theta_zero_and_quarter() {
        assert_eq!(5e9 + hpd_offset(5e9, 1e4, 0.0), 5e9);
        let f = 5e9 + hpd_offset(5e9, 1e4, FRAC_PI_2);
        assert!(rel(f, 4.99975e9) < 1e-15);
    }

    #[test]
    fn hpd_default_span_and_symmetry() {
        let plan = plan_hpd_default(5e9, 1e4).unwrap();
        assert_eq!(plan.freqs.len(), 251);
        let span = plan.freqs[250] - plan.freqs[0];
        assert!(rel(span, 15.0 * 5e9 / 1e4) < 1e-9);
        for k in 0..251 {
            let a = plan.freqs[k] - 5e9;
            let b = plan.freqs[250 - k] - 5e9;
            assert_eq!(a, -b);
        }
        assert!(plan.freqs.windows(2).all(|w| w[1] > w[0]));
        // ≈95% of the circle
        assert!((plan.theta_max / PI - 0.958).abs() < 0.01);
    }

    #[test]
    fn hpd_rejects_bad_input() {
        assert!(plan_hpd(5e9, 1e4, 2, 15.0).is_err());
        assert!(plan_hpd(5e9, 1e4, 251, f64::INFINITY).is_err());
        assert!(plan_hpd(0.0, 1e4, 251, 15.0).is_err());
        // span so wide the grid runs through zero frequency
        assert!(plan_hpd(5e9, 1.0, 251, 15.0).is_err());
    }

    #[test]
    fn seed_chain_passes_through_and_rejects() {
        let mut p = base();
        p.q_l = 2e5;
        p.q_c_mag = 4e5;
        let trace = synth_s21(&S21Scenario::noiseless(p, plan_hpd_default(5e9, 2e5).unwrap().freqs));
        let mut fit = fit_s21(&trace).unwrap();
        let (f, q) = seed_chain(&fit).unwrap();
        assert!(rel(f, 5e9) < 1e-9 && rel(q, 2e5) < 1e-6);
        fit.accepted = false;
        assert!(seed_chain(&fit).is_err());
    }

    #[test]
    fn circle_fit_exact_points() {
        let c = Complex64::new(0.3, -0.2);
        let pts: Vec<Complex64> = (0..30).map(|k| c + Complex64::from_polar(0.7, 0.1 * k as f64)).collect();
        let fit = fit_circle(&pts).unwrap();
        assert!((fit.center - c).norm() < 1e-12);
        assert!((fit.radius - 0.7).abs() < 1e-12);
    }

    #[test]
    fn zero_noise_round_trip() {
        let truth = ResonanceParams {
            amplitude: 0.8,
            bg_phase: 1.1,
            delay: 42e-9,
            q_l: 3.0e5,
            q_c_mag: 5.0e5,
            phi: -0.4,
            f_r: 6.1e9,
        };
        let trace = synth_s21(&S21Scenario::noiseless(truth, plan_hpd_default(6.1e9 * (1.0 + 1e-6), 2.5e5).unwrap().freqs));
        let fit = fit_s21(&trace).unwrap();
        let p = fit.params;
        assert!(rel(p.amplitude, truth.amplitude) < 1e-6);
        assert!((p.bg_phase - truth.bg_phase).abs() < 1e-6);
        assert!(rel(p.delay, truth.delay) < 1e-6);
        assert!(rel(p.q_l, truth.q_l) < 1e-6);
        assert!(rel(p.q_c_mag, truth.q_c_mag) < 1e-6);
        assert!((p.phi - truth.phi).abs() < 1e-6);
        assert!((p.f_r - truth.f_r).abs() < 1e-6 * truth.linewidth());
        let qi = q_int(truth.q_l, truth.q_c_mag, truth.phi).unwrap();
        assert!(rel(fit.q_int, qi) < 1e-6);
    }

    #[test]
    fn background_invariance() {
        let truth = ResonanceParams {
            amplitude: 1.0,
            bg_phase: 0.2,
            delay: 10e-9,
            q_l: 8e4,
            q_c_mag: 1.5e5,
            phi: 0.25,
            f_r: 5.5e9,
        };
        let trace = synth_s21(&S21Scenario::noiseless(truth, plan_hpd_default(5.5e9, 8e4).unwrap().freqs));
        let a = fit_s21(&trace).unwrap();
        let mut scaled = trace.clone();
        let c = Complex64::from_polar(0.37, 2.5);
        for z in &mut scaled.s21 {
            *z *= c;
        }
        let b = fit_s21(&scaled).unwrap();
        assert!(rel(b.params.q_l, a.params.q_l) < 1e-6);
        assert!(rel(b.params.q_c_mag, a.params.q_c_mag) < 1e-6);
        assert!((b.params.phi - a.params.phi).abs() < 1e-6);
        assert!(rel(b.params.f_r, a.params.f_r) < 1e-6);
        assert!(rel(b.q_int, a.q_int) < 1e-6);
        assert!(rel(b.params.amplitude, 0.37 * a.params.amplitude) < 1e-6);
    }

    #[test]
    fn noise_coverage_of_q_l() {
        let truth = ResonanceParams {
            amplitude: 1.0,
            bg_phase: -0.7,
            delay: 30e-9,
            q_l: 2e5,
            q_c_mag: 4e5,
            phi: 0.1,
            f_r: 5e9,
        };
        let freqs = plan_hpd_default(5e9, 2e5).unwrap().freqs;
        let mut inside = 0;
        for seed in 0..100 {
            let mut sc = S21Scenario::noiseless(truth, freqs.clone());
            sc.noise_sigma = 0.01;
            sc.seed = seed;
            let fit = fit_s21(&synth_s21(&sc)).unwrap();
            if (fit.params.q_l - truth.q_l).abs() <= 3.0 * fit.sigmas.q_l {
                inside += 1;
            }
        }
        assert!(inside >= 95, "{inside}/100 within 3σ");
    }

    #[test]
    fn no_dip_is_rejected() {
        let mut rng = CounterRng::new(3, 0);
        let freq: Vec<f64> = (0..100).map(|i| 5e9 + i as f64 * 1e3).collect();
        let s21 = freq.iter().map(|_| Complex64::new(1.0 + 0.001 * rng.normal(), 0.001 * rng.normal())).collect();
        let trace = ComplexTrace::new(freq, s21, TraceMeta::default()).unwrap();
        assert_eq!(fit_s21(&trace), Err(Error::NoResonance));
    }

    #[test]
    fn screen_passes_clean_and_flags_duffing() {
        let truth = ResonanceParams {
            amplitude: 1.0,
            bg_phase: 0.3,
            delay: 5e-9,
            q_l: 1e5,
            q_c_mag: 2e5,
            phi: 0.05,
            f_r: 5e9,
        };
        let freqs = plan_hpd_default(5e9, 1e5).unwrap().freqs;
        for noise in [0.0, 1e-3] {
            let mut sc = S21Scenario::noiseless(truth, freqs.clone());
            sc.noise_sigma = noise;
            let trace = synth_s21(&sc);
            let fit = fit_s21(&trace).unwrap();
            let clean = nonlinearity_screen(&trace, &fit);
            assert!(!clean.flagged, "clean trace flagged at noise {noise}: {clean:?}");

            sc.duffing = Some(DuffingWarp { strength: 2.0 });
            let warped = synth_s21(&sc);
            let verdict = match fit_s21(&warped) {
                Ok(fit) => nonlinearity_screen(&warped, &fit).flagged,
                Err(_) => true,
            };
            assert!(verdict, "Duffing trace passed the screen at noise {noise}");
        }
    }

    #[test]
    fn descending_power_chain_stays_centred() {
        // f_r drifts by 0.15 linewidth per power step; each plan is seeded from
        // the previous fit.
        let q_l = 2e5;
        let lw = 5e9 / q_l;
        let mut seed = (5e9 + 0.3 * lw, q_l * 1.1);
        for step in 0..3 {
            let truth = ResonanceParams {
                amplitude: 1.0,
                bg_phase: 0.0,
                delay: 20e-9,
                q_l,
                q_c_mag: 3e5,
                phi: 0.0,
                f_r: 5e9 - 0.15 * lw * step as f64,
            };
            let plan = plan_hpd_default(seed.0, seed.1).unwrap();
            let centre = 0.5 * (plan.freqs[0] + plan.freqs[plan.freqs.len() - 1]);
            assert!((centre - truth.f_r).abs() < lw, "step {step}");
            let mut sc = S21Scenario::noiseless(truth, plan.freqs);
            sc.noise_sigma = 0.005;
            sc.seed = step as u64;
            let fit = fit_s21(&synth_s21(&sc)).unwrap();
            seed = seed_chain(&fit).unwrap();
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]
        #[test]
        fn hpd_antisymmetry(f_r in 4.4e9f64..8.5e9, q in 1e3f64..1e7, n in 3usize..400) {
            let plan = plan_hpd(f_r, q, n, 15.0).unwrap();
            for k in 0..n {
                proptest::prop_assert_eq!(plan.freqs[k] - f_r, -(plan.freqs[n - 1 - k] - f_r));
            }
        }

        #[test]
        fn q_int_monotone_in_qc(q_l in 1e3f64..1e6, phi in -1.5f64..1.5, a in 1.0f64..10.0, b in 1.0f64..10.0) {
            let qc1 = q_l * a.min(b) * 1.01;
            let qc2 = q_l * a.max(b) * 1.01;
            if let (Ok(x), Ok(y)) = (q_int(q_l, qc1, phi), q_int(q_l, qc2, phi)) {
                proptest::prop_assert!(y <= x * (1.0 + 1e-12));
            }
        }
    }
}
