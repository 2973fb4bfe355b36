//! Browser bindings for three interactive operations: a resonator fit on a
//! synthetic trace, the sheet-inductance curve of a film, and the coherence
//! figures of a transmon. Every call returns a JSON string.

use wasm_bindgen::prelude::*;

pub mod ops {
    use serde::Serialize;

    use scqa::io::to_json;
    use scqa::kinetic::{lambda_dirty, sheet_lk_model};
    use scqa::model::delta0_from_tc;
    use scqa::qubit::{q_bar, t_phi};
    use scqa::s21::{fit_s21, plan_hpd_default, q_int, s21_model, ResonanceParams};
    use scqa::synth::{synth_s21, S21Scenario};

    fn js(e: impl std::fmt::Display) -> String {
        e.to_string()
    }

    #[derive(Serialize)]
    struct ResonatorOut {
        q_int_true: f64,
        q_int: f64,
        q_int_sigma: f64,
        q_l: f64,
        q_c_mag: f64,
        phi: f64,
        f_r_hz: f64,
        /// Background-normalized samples as [re, im].
        data: Vec<[f64; 2]>,
        fit: Vec<[f64; 2]>,
    }

    /// Draws a noisy trace on the default homophasal grid and fits it.
    pub fn fit_resonator(q_l: f64, q_c_mag: f64, phi: f64, noise: f64, seed: u64) -> Result<String, String> {
        let truth = ResonanceParams { amplitude: 1.0, bg_phase: 0.0, delay: 0.0, q_l, q_c_mag, phi, f_r: 5e9 };
        let q_true = q_int(q_l, q_c_mag, phi).map_err(js)?;
        let freqs = plan_hpd_default(truth.f_r, q_l).map_err(js)?.freqs;
        let mut sc = S21Scenario::noiseless(truth, freqs);
        sc.noise_sigma = noise.max(0.0);
        sc.seed = seed;
        let trace = synth_s21(&sc);
        let fit = fit_s21(&trace).map_err(js)?;
        let p = fit.params;
        // undo the fitted background so data and model sit on the unit-referenced circle
        let norm = |f: f64, z: num_complex::Complex64| {
            z / num_complex::Complex64::from_polar(p.amplitude, p.bg_phase + 2.0 * std::f64::consts::PI * f * p.delay)
        };
        let data = trace.freq.iter().zip(&trace.s21).map(|(&f, &z)| norm(f, z)).map(|z| [z.re, z.im]).collect();
        let model = trace
            .freq
            .iter()
            .map(|&f| s21_model(&p, f).map(|z| norm(f, z)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(js)?
            .into_iter()
            .map(|z| [z.re, z.im])
            .collect();
        to_json(&ResonatorOut {
            q_int_true: q_true,
            q_int: fit.q_int,
            q_int_sigma: fit.sigmas.q_int,
            q_l: p.q_l,
            q_c_mag: p.q_c_mag,
            phi: p.phi,
            f_r_hz: p.f_r,
            data,
            fit: model,
        })
        .map_err(js)
    }

    #[derive(Serialize)]
    struct FilmOut {
        /// [thickness nm, L_k per square pH]
        curve: Vec<[f64; 2]>,
        bulk_ph: f64,
        lambda_dirty_um: f64,
    }

    /// Sheet kinetic inductance versus thickness, with the dirty-limit λ
    /// implied by ρ_n (μΩ·cm) and T_c.
    pub fn film_inductance(lambda_um: f64, rho_uohm_cm: f64, t_c_k: f64) -> Result<String, String> {
        if !(lambda_um > 0.0 && lambda_um.is_finite()) {
            return Err("λ must be positive".into());
        }
        let lambda = lambda_um * 1e-6;
        let ld = lambda_dirty(rho_uohm_cm * 1e-8, delta0_from_tc(t_c_k).map_err(js)?).map_err(js)?;
        let curve = (0..=120)
            .map(|k| {
                let t_nm = 10f64.powf(1.0 + 3.0 * k as f64 / 120.0);
                [t_nm, sheet_lk_model(t_nm * 1e-9, lambda) * 1e12]
            })
            .collect();
        to_json(&FilmOut { curve, bulk_ph: scqa::constants::MU_0 * lambda * 1e12, lambda_dirty_um: ld * 1e6 }).map_err(js)
    }

    #[derive(Serialize)]
    struct CoherenceOut {
        /// `None` at the lifetime limit T2E ≥ 2·T1.
        t_phi_us: Option<f64>,
        q_bar_millions: f64,
    }

    pub fn coherence(f_q_ghz: f64, t1_us: f64, t2e_us: f64) -> Result<String, String> {
        let tp = t_phi(t1_us, t2e_us).map_err(js)?;
        let q = q_bar(f_q_ghz * 1e9, t1_us * 1e-6).map_err(js)?;
        to_json(&CoherenceOut { t_phi_us: tp.is_finite().then_some(tp), q_bar_millions: q / 1e6 }).map_err(js)
    }
}

fn to_js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = fitResonator)]
pub fn fit_resonator(q_l: f64, q_c_mag: f64, phi: f64, noise: f64, seed: u32) -> Result<String, JsError> {
    to_js(ops::fit_resonator(q_l, q_c_mag, phi, noise, seed as u64))
}

#[wasm_bindgen(js_name = filmInductance)]
pub fn film_inductance(lambda_um: f64, rho_uohm_cm: f64, t_c_k: f64) -> Result<String, JsError> {
    to_js(ops::film_inductance(lambda_um, rho_uohm_cm, t_c_k))
}

#[wasm_bindgen]
pub fn coherence(f_q_ghz: f64, t1_us: f64, t2e_us: f64) -> Result<String, JsError> {
    to_js(ops::coherence(f_q_ghz, t1_us, t2e_us))
}
