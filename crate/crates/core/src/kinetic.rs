//! Kinetic inductance: fractions from frequency shifts, geometric factors,
//! sheet inductance, penetration depth and the superfluid-response envelope.

use serde::{Deserialize, Serialize};

use crate::constants::{HBAR, MU_0};
use crate::error::{require_finite, require_positive, Error, Result};
use crate::lm::{self, LmConfig, Problem};
use crate::model::{Estimate, ResonatorRecord};
use crate::stats;

/// Default fractional σ assigned to simulated resonance frequencies.
pub const SIM_FREQ_REL_SIGMA: f64 = 0.005;

/// α = 1 − (f_meas/f_sim)².
pub fn alpha_from_freqs(f_meas: f64, f_sim: f64) -> Result<f64> {
    require_positive("f_meas", f_meas)?;
    require_positive("f_sim", f_sim)?;
    if f_meas > f_sim {
        return Err(Error::Unphysical(format!(
            "measured above simulated ({f_meas} Hz > {f_sim} Hz)"
        )));
    }
    let x = f_meas / f_sim;
    Ok(1.0 - x * x)
}

/// α = L_k/(L_k + L_g) for inductances in series.
pub fn alpha_model(l_k: f64, l_g: f64) -> Result<f64> {
    require_finite("L_k", l_k)?;
    if l_k < 0.0 {
        return Err(Error::Domain(format!("L_k must be non-negative, got {l_k}")));
    }
    require_positive("L_g", l_g)?;
    Ok(l_k / (l_k + l_g))
}

/// L_k from α at fixed L_g (inverse of [`alpha_model`]).
pub fn l_k_from_alpha(alpha: f64, l_g: f64) -> Result<f64> {
    require_positive("L_g", l_g)?;
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Domain(format!("alpha must lie in [0, 1), got {alpha}")));
    }
    Ok(l_g * alpha / (1.0 - alpha))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GFactorFit {
    /// (sheet inductance L_s, total inductance L_tot) in H.
    pub samples: Vec<(f64, f64)>,
    pub g: Estimate,
    /// Should sit near zero; a large value points at inconsistent simulations.
    pub intercept: Estimate,
}

/// Straight line through (L_s, L_tot − L_g); the slope is G(s).
pub fn fit_g_factor(samples: &[(f64, f64)], l_g: f64) -> Result<GFactorFit> {
    require_positive("L_g", l_g)?;
    if samples.len() < 3 {
        return Err(Error::Insufficient(format!(
            "G-factor fit needs ≥ 3 samples, got {}",
            samples.len()
        )));
    }
    for &(x, y) in samples {
        require_finite("L_s", x)?;
        require_finite("L_tot", y)?;
    }
    let x: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.1 - l_g).collect();
    let mx = stats::mean(&x);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if !(sxx > 0.0) || sxx <= 1e-24 * x.iter().map(|v| v * v).sum::<f64>() {
        return Err(Error::Insufficient("G-factor samples share one L_s".into()));
    }
    let (b, g) = stats::linear_fit(&x, &y);
    let n = x.len() as f64;
    let rss: f64 = x.iter().zip(&y).map(|(a, v)| (v - b - g * a).powi(2)).sum();
    let s2 = rss / (n - 2.0);
    let g_sigma = (s2 / sxx).sqrt();
    let b_sigma = (s2 * (1.0 / n + mx * mx / sxx)).sqrt();
    Ok(GFactorFit {
        samples: samples.to_vec(),
        g: Estimate::new(g, g_sigma),
        intercept: Estimate::new(b, b_sigma),
    })
}

/// Sheet kinetic inductance L_k/G from a measured/simulated frequency pair.
///
/// σ combines the frequency uncertainties (first order) with the G-factor σ.
pub fn sheet_lk(f_meas: Estimate, f_sim: Estimate, l_g: f64, g: Estimate) -> Result<Estimate> {
    require_positive("L_g", l_g)?;
    require_positive("G", g.value)?;
    require_positive("f_sim", f_sim.value)?;
    if f_meas.value == 0.0 {
        return Err(Error::Domain("alpha = 1 (zero measured frequency) is singular".into()));
    }
    let alpha = alpha_from_freqs(f_meas.value, f_sim.value)?;
    let l_sq = l_k_from_alpha(alpha, l_g)? / g.value;
    // L_sq = L_g(x⁻² − 1)/G, x = f_meas/f_sim
    let x = f_meas.value / f_sim.value;
    let rel_x = ((f_meas.sigma / f_meas.value).powi(2) + (f_sim.sigma / f_sim.value).powi(2)).sqrt();
    let d_dx = 2.0 * l_g / (x * x * g.value);
    let sigma = ((d_dx * rel_x).powi(2) + (l_sq * g.sigma / g.value).powi(2)).sqrt();
    Ok(Estimate::new(l_sq, sigma))
}

/// [`sheet_lk`] from a registry record. `sim_rel_sigma` is the fractional σ
/// assumed for the simulated frequency ([`SIM_FREQ_REL_SIGMA`] by default).
pub fn sheet_lk_from_resonator(rec: &ResonatorRecord, sim_rel_sigma: f64) -> Result<Estimate> {
    let missing = |what: &str| Error::Validation(format!("{}: missing {what}", rec.id));
    let f_sim = rec.f_r_sim.ok_or_else(|| missing("f_r_sim"))?;
    let f_meas = rec.f_r_meas.ok_or_else(|| missing("f_r_meas"))?;
    let l_g = rec.l_g.ok_or_else(|| missing("L_g"))?;
    let g = rec.g_factor.ok_or_else(|| missing("G factor"))?;
    sheet_lk(f_meas, Estimate::new(f_sim, sim_rel_sigma * f_sim), l_g, g)
}

/// μ₀λ·coth(t/λ), in H/□.
pub fn sheet_lk_model(thickness: f64, lambda: f64) -> f64 {
    MU_0 * lambda / (thickness / lambda).tanh()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaFit {
    /// (thickness in m, L_k/□ in H/□).
    pub points: Vec<(f64, Estimate)>,
    pub lambda: Estimate,
    /// Bulk limit μ₀λ.
    pub l_bulk: Estimate,
    /// Normalized residuals (model − data)/σ, in input order.
    pub residuals: Vec<f64>,
    pub reduced_chi2: f64,
}

struct LambdaProblem<'a> {
    points: &'a [(f64, Estimate)],
}

impl Problem for LambdaProblem<'_> {
    fn n_params(&self) -> usize {
        1
    }
    fn n_residuals(&self) -> usize {
        self.points.len()
    }
    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let lambda = p[0].exp();
        for (o, (t, l)) in out.iter_mut().zip(self.points) {
            *o = (sheet_lk_model(*t, lambda) - l.value) / l.sigma;
        }
    }
}

/// Weighted fit of L_k/□(t) = μ₀λ·coth(t/λ) over λ.
///
/// Points with zero σ are weighted as if they carried 1% relative error.
pub fn fit_lambda(points: &[(f64, Estimate)]) -> Result<LambdaFit> {
    if points.len() < 3 {
        return Err(Error::Insufficient(format!(
            "penetration-depth fit needs ≥ 3 points, got {}",
            points.len()
        )));
    }
    for (t, l) in points {
        require_positive("thickness", *t)?;
        require_positive("L_k/sq", l.value)?;
    }
    let t_min = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let t_max = points.iter().map(|p| p.0).fold(0.0, f64::max);
    if t_max < 4.0 * t_min {
        return Err(Error::Insufficient(format!(
            "thicknesses span a factor {:.2}, need ≥ 4",
            t_max / t_min
        )));
    }
    let weighted: Vec<(f64, Estimate)> = points
        .iter()
        .map(|&(t, l)| {
            let s = if l.sigma > 0.0 { l.sigma } else { 0.01 * l.value };
            (t, Estimate::new(l.value, s))
        })
        .collect();
    let problem = LambdaProblem { points: &weighted };

    // coarse log scan, then LM in ln λ
    let mut r = vec![0.0; points.len()];
    let mut best = (f64::INFINITY, 0.0);
    let (lo, hi) = ((t_min / 100.0).ln(), (t_max * 100.0).ln());
    for k in 0..=200 {
        let u = lo + (hi - lo) * k as f64 / 200.0;
        problem.residuals(&[u], &mut r);
        let c: f64 = r.iter().map(|v| v * v).sum();
        if c < best.0 {
            best = (c, u);
        }
    }
    let sol = lm::minimize(&problem, &[best.1], &LmConfig::default())?;
    let lambda = sol.params[0].exp();
    if t_min > 3.0 * lambda {
        return Err(Error::Insufficient(format!(
            "insufficient thin-film leverage: thinnest film {t_min:.3e} m exceeds 3λ ({lambda:.3e} m)"
        )));
    }
    let dof = sol.dof().max(1) as f64;
    let chi2 = sol.cost / dof;
    let cov = lm::covariance(&problem, &sol.params, chi2);
    let sigma = lambda * cov[(0, 0)].sqrt();
    Ok(LambdaFit {
        points: points.to_vec(),
        lambda: Estimate::new(lambda, sigma),
        l_bulk: Estimate::new(MU_0 * lambda, MU_0 * sigma),
        residuals: sol.residuals,
        reduced_chi2: chi2,
    })
}

/// Zero-temperature dirty-limit estimate √(ħρ_n/(πμ₀Δ₀)).
pub fn lambda_dirty(rho_n: f64, delta_0: f64) -> Result<f64> {
    require_positive("rho_n", rho_n)?;
    require_positive("Delta_0", delta_0)?;
    Ok((HBAR * rho_n / (std::f64::consts::PI * MU_0 * delta_0)).sqrt())
}

/// [`lambda_dirty`] with first-order propagation of ρ_n and T_c errors
/// (Δ₀ from the weak-coupling ratio, so λ ∝ √(ρ_n/T_c)).
pub fn lambda_dirty_from_tc(rho_n: Estimate, t_c: Estimate) -> Result<Estimate> {
    let delta_0 = crate::model::delta0_from_tc(t_c.value)?;
    let lambda = lambda_dirty(rho_n.value, delta_0)?;
    let rel = 0.5 * ((rho_n.sigma / rho_n.value).powi(2) + (t_c.sigma / t_c.value).powi(2)).sqrt();
    Ok(Estimate::new(lambda, lambda * rel))
}

/// Reactive conductivity σ₂ = 1/(μ₀ωλ²) in S/m.
pub fn sigma2(omega: f64, lambda: f64) -> Result<f64> {
    require_positive("omega", omega)?;
    require_positive("lambda", lambda)?;
    Ok(1.0 / (MU_0 * omega * lambda * lambda))
}

/// Slope κ of Q_int = κ·σ₂ through the origin, in Ω·m.
///
/// Assumes a constant relative scatter in Q_int, i.e. weights 1/σ₂², which
/// reduces to the mean of Q_int/σ₂.
pub fn fit_kappa_envelope(points: &[(f64, f64)]) -> Result<Estimate> {
    if points.len() < 3 {
        return Err(Error::Insufficient(format!(
            "envelope fit needs ≥ 3 points, got {}",
            points.len()
        )));
    }
    for &(s, q) in points {
        require_positive("sigma2", s)?;
        require_positive("Q_int", q)?;
    }
    let ratios: Vec<f64> = points.iter().map(|(s, q)| q / s).collect();
    let kappa = stats::mean(&ratios);
    Ok(Estimate::new(kappa, stats::sample_sd(&ratios) / (ratios.len() as f64).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LAMBDA: f64 = 1.78e-6;

    #[test]
    fn alpha_examples() {
        assert_eq!(alpha_from_freqs(5e9, 5e9).unwrap(), 0.0);
        assert!((alpha_from_freqs(4e9, 5e9).unwrap() - 0.36).abs() < 1e-15);
        assert!((alpha_from_freqs(5e9 / 2f64.sqrt(), 5e9).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(alpha_from_freqs(5.1e9, 5e9), Err(Error::Unphysical(_))));
        assert_eq!(alpha_model(0.0, 1e-9).unwrap(), 0.0);
        assert_eq!(alpha_model(1e-9, 1e-9).unwrap(), 0.5);
        assert_eq!(alpha_model(3e-9, 1e-9).unwrap(), 0.75);
        assert!(alpha_model(-1e-9, 1e-9).is_err());
    }

    #[test]
    fn g_factor_exact_line() {
        let l_g = 7.0;
        let fit = fit_g_factor(&[(0.0, l_g), (1.0, l_g + 2.0), (2.0, l_g + 4.0)], l_g).unwrap();
        assert!((fit.g.value - 2.0).abs() < 1e-12);
        assert!(fit.intercept.value.abs() < 1e-12);
        assert!(fit_g_factor(&[(0.0, 1.0), (1.0, 2.0)], 1.0).is_err());
        assert!(fit_g_factor(&[(1.0, 1.0), (1.0, 2.0), (1.0, 3.0)], 1.0).is_err());
    }

    #[test]
    fn g_factor_noisy_coverage() {
        let mut hits = 0;
        for seed in 0..100 {
            let mut rng = crate::rng::CounterRng::new(seed, 9);
            let l_g = 20e-9;
            let g = 450.0;
            let samples: Vec<(f64, f64)> = (0..8)
                .map(|k| {
                    let ls = (1.0 + k as f64) * 1e-12;
                    let lk = g * ls;
                    (ls, l_g + lk * (1.0 + 0.01 * rng.normal()))
                })
                .collect();
            let fit = fit_g_factor(&samples, l_g).unwrap();
            if (fit.g.value - g).abs() <= 3.0 * fit.g.sigma {
                hits += 1;
            }
        }
        assert!(hits >= 95, "{hits}/100");
    }

    #[test]
    fn sheet_inversion_example() {
        let fs = 6e9;
        let fm = fs / 2f64.sqrt();
        let l = sheet_lk(Estimate::exact(fm), Estimate::exact(fs), 10e-9, Estimate::exact(100.0)).unwrap();
        assert!((l.value / 100e-12 - 1.0).abs() < 1e-12);
        assert_eq!(l.sigma, 0.0);
        assert!(sheet_lk(Estimate::exact(0.0), Estimate::exact(fs), 10e-9, Estimate::exact(1.0)).is_err());
        // σ grows with the simulated-frequency floor
        let a = sheet_lk(Estimate::exact(fm), Estimate::new(fs, 0.005 * fs), 10e-9, Estimate::exact(100.0)).unwrap();
        assert!(a.sigma > 0.0);
        // d ln L/d ln x = −2/(1 − x²) = −4 at α = 0.5
        assert!((a.sigma / a.value - 4.0 * 0.005).abs() < 1e-12);
    }

    #[test]
    fn coth_values_and_limits() {
        assert!((sheet_lk_model(LAMBDA, LAMBDA) / 2.9370156704609993e-12 - 1.0).abs() < 1e-12);
        let bulk = MU_0 * LAMBDA;
        assert!((bulk / 2.2368139705735997e-12 - 1.0).abs() < 1e-12);
        let thin = LAMBDA / 200.0;
        assert!((sheet_lk_model(thin, LAMBDA) / (MU_0 * LAMBDA * LAMBDA / thin) - 1.0).abs() < 0.01);
        assert!((sheet_lk_model(3.1 * LAMBDA, LAMBDA) / bulk - 1.0).abs() < 0.01);
    }

    fn film_points(lambda: f64, thick: &[f64]) -> Vec<(f64, Estimate)> {
        thick
            .iter()
            .map(|&t| {
                let l = sheet_lk_model(t, lambda);
                (t, Estimate::new(l, 0.05 * l))
            })
            .collect()
    }

    const THICK: [f64; 8] = [21e-9, 52e-9, 131e-9, 263e-9, 480e-9, 1.09e-6, 2.0e-6, 265e-9];

    #[test]
    fn lambda_noiseless_round_trip() {
        let fit = fit_lambda(&film_points(LAMBDA, &THICK)).unwrap();
        assert!((fit.lambda.value / LAMBDA - 1.0).abs() < 1e-6);
        assert!((fit.l_bulk.value / (MU_0 * LAMBDA) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn lambda_rejects_thick_only_and_narrow_span() {
        let thick = [20e-6, 40e-6, 90e-6];
        match fit_lambda(&film_points(LAMBDA, &thick)) {
            Err(Error::Insufficient(m)) => assert!(m.contains("insufficient thin-film leverage"), "{m}"),
            other => panic!("{other:?}"),
        }
        assert!(fit_lambda(&film_points(LAMBDA, &[100e-9, 150e-9, 200e-9])).is_err());
    }

    #[test]
    fn dirty_limit() {
        let d0 = crate::model::delta0_from_tc(0.7).unwrap();
        let l = lambda_dirty(1.8e-6, d0).unwrap();
        assert!((l / 1.6813087347280397e-6 - 1.0).abs() < 1e-9);
        let l4 = lambda_dirty(4.0 * 1.8e-6, d0).unwrap();
        assert!((l4 / l - 2.0).abs() < 1e-12);
        let rho = std::f64::consts::PI * MU_0 * d0 / HBAR;
        assert!((lambda_dirty(rho, d0).unwrap() - 1.0).abs() < 1e-12);
        let e = lambda_dirty_from_tc(Estimate::new(1.8e-6, 0.01e-6), Estimate::new(0.7, 0.1)).unwrap();
        assert!((e.value - l).abs() < 1e-18);
        assert!(e.sigma / e.value > 0.07 && e.sigma / e.value < 0.073);
    }

    #[test]
    fn sigma2_values() {
        let w = 2.0 * std::f64::consts::PI * 5e9;
        let s = sigma2(w, LAMBDA).unwrap();
        assert!((s / 7994664.782475461 - 1.0).abs() < 1e-12);
        assert!((sigma2(w, LAMBDA / 2.0).unwrap() / s - 4.0).abs() < 1e-12);
        assert!((sigma2(2.0 * w, LAMBDA).unwrap() / s - 0.5).abs() < 1e-12);
        assert!((0.16 * s / 1279146.365196074 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kappa_envelope() {
        let pts: Vec<(f64, f64)> = (1..=5).map(|k| (k as f64 * 1e6, 0.16 * k as f64 * 1e6)).collect();
        let k = fit_kappa_envelope(&pts).unwrap();
        assert!((k.value - 0.16).abs() < 1e-15);
        assert!(fit_kappa_envelope(&pts[..2]).is_err());

        let mut hits = 0;
        for seed in 0..100 {
            let mut rng = crate::rng::CounterRng::new(seed, 10);
            let pts: Vec<(f64, f64)> = (0..80)
                .map(|i| {
                    let s = 2e6 + 1e5 * i as f64;
                    (s, 0.16 * s * (1.0 + 0.1 * rng.normal()))
                })
                .collect();
            let k = fit_kappa_envelope(&pts).unwrap();
            if (k.value - 0.16).abs() <= 2.0 * k.sigma {
                hits += 1;
            }
        }
        assert!(hits >= 90, "{hits}/100");
    }

    proptest! {
        #[test]
        fn alpha_inversion_identity(l_k in 0.0f64..1e-6, l_g in 1e-12f64..1e-6) {
            let a = alpha_model(l_k, l_g).unwrap();
            let back = l_k_from_alpha(a, l_g).unwrap();
            prop_assert!((back - l_k).abs() <= 1e-9 * l_k + 1e-30);
        }

        #[test]
        fn alpha_paths_agree(l_k in 0.0f64..1e-6, l_g in 1e-12f64..1e-6) {
            let fs = 6e9;
            let fm = fs * (l_g / (l_g + l_k)).sqrt();
            let a = alpha_from_freqs(fm, fs).unwrap();
            prop_assert!((a - alpha_model(l_k, l_g).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn lambda_scale_consistent(c in 0.2f64..5.0) {
            let base = fit_lambda(&film_points(LAMBDA, &THICK)).unwrap();
            let scaled: Vec<f64> = THICK.iter().map(|t| t * c).collect();
            let pts: Vec<(f64, Estimate)> = scaled
                .iter()
                .map(|&t| {
                    let l = sheet_lk_model(t, c * LAMBDA);
                    (t, Estimate::new(l, 0.05 * l))
                })
                .collect();
            let fit = fit_lambda(&pts).unwrap();
            prop_assert!((fit.lambda.value / (c * base.lambda.value) - 1.0).abs() < 1e-6);
        }
    }
}
