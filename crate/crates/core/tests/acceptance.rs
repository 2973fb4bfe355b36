//! Acceptance criteria, run in order with one PASS/FAIL line each.
//!
//! The criteria run sequentially inside one test so that the wall-clock
//! budgets are not distorted by other tests sharing the machine.

use std::time::{Duration, Instant};

use scqa::dataset::synth_dataset;
use scqa::kinetic::{fit_g_factor, fit_lambda, lambda_dirty, sheet_lk, sheet_lk_model};
use scqa::loss::{fit_loss_grid, LossParams};
use scqa::model::{delta0_from_tc, Estimate};
use scqa::pipeline::{run_pipeline, write_bundle, PipelineConfig};
use scqa::qubit::{ej_from_transmon, fit_ramsey, q_bar, qp_fraction, t_phi};
use scqa::reference::{QUBIT_DESIGN, QUBIT_PERFORMANCE, SI_RESONATOR_LOSS};
use scqa::rng::CounterRng;
use scqa::s21::{fit_s21, plan_hpd_default, q_int, s21_model, ResonanceParams};
use scqa::surface::{implied_tan_delta, oxide_thickness, surface_limited_q, XpsInput};
use scqa::synth::{
    default_cpw_family, ramsey_trace, reference_film_thicknesses, synth_inductance_tables, synth_loss_grid, synth_s21, Beat,
    InductanceScenario, LossScenario, S21Scenario,
};

const MU_0: f64 = scqa::constants::MU_0;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// 1
fn lambda_dirty_reproduction() -> Outcome {
    let l = lambda_dirty(1.8e-6, delta0_from_tc(0.7).unwrap()).map_err(|e| e.to_string())?;
    check((1.6e-6..=1.8e-6).contains(&l), format!("λ_dirty = {:.4} μm", l * 1e6))
}

// 2
fn bulk_sheet_inductance() -> Outcome {
    let direct = MU_0 * 1.78e-6;
    let thick_limit = sheet_lk_model(1.0, 1.78e-6);
    let ok = (2.2e-12..=2.3e-12).contains(&direct) && rel(thick_limit, direct) < 1e-12;
    check(ok, format!("μ₀λ = {:.4} pH/□", direct * 1e12))
}

fn lambda_points(seed: u64, noise: f64) -> Vec<(f64, Estimate)> {
    let data = synth_inductance_tables(&InductanceScenario {
        seed,
        lambda: 1.78e-6,
        films: reference_film_thicknesses(),
        geometries: default_cpw_family(),
        l_k_rel_sigma: noise,
    });
    data.resonators
        .iter()
        .zip(&data.tables)
        .map(|(r, tab)| {
            let g = fit_g_factor(&tab.samples, tab.l_g).unwrap().g;
            let l = sheet_lk(r.f_r_meas.unwrap(), Estimate::exact(r.f_r_sim.unwrap()), tab.l_g, g).unwrap();
            (r.thickness_um * 1e-6, l)
        })
        .collect()
}

// 3
fn lambda_round_trip() -> Outcome {
    let clean = fit_lambda(&lambda_points(0, 0.0)).map_err(|e| e.to_string())?;
    let clean_rel = rel(clean.lambda.value, 1.78e-6);
    let mut inside = 0;
    for seed in 0..100 {
        let fit = fit_lambda(&lambda_points(seed, 0.05)).map_err(|e| format!("seed {seed}: {e}"))?;
        if (fit.lambda.value - 1.78e-6).abs() <= 3.0 * fit.lambda.sigma {
            inside += 1;
        }
    }
    check(
        clean_rel < 1e-6 && inside >= 95,
        format!("noiseless rel err {clean_rel:.2e}; 5% noise within 3σ in {inside}/100"),
    )
}

// 4
fn q_bar_regression() -> Outcome {
    let mut worst: f64 = 0.0;
    for (d, p) in QUBIT_DESIGN.iter().zip(&QUBIT_PERFORMANCE) {
        let q = q_bar(d.f_q_ghz * 1e9, p.t1_us.mean * 1e-6).map_err(|e| e.to_string())?;
        worst = worst.max((q / 1e6 - p.q_bar_e6.0).abs());
    }
    check(worst <= 0.05, format!("largest |ΔQ̄| = {:.3}e6 over 11 qubits", worst))
}

// 5
fn transmon_energies() -> Outcome {
    let mut worst = 0i64;
    for d in &QUBIT_DESIGN {
        let ej = ej_from_transmon(d.f_q_ghz * 1e9, d.e_c_mhz * 1e6).map_err(|e| e.to_string())?;
        let ratio = (ej / (d.e_c_mhz * 1e6)).round() as i64;
        worst = worst.max((ratio - d.ej_over_ec as i64).abs());
    }
    check(worst <= 1, format!("largest E_J/E_C deviation {worst} over 11 qubits"))
}

// 6
fn t_phi_consistency() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for id in [2usize, 4, 5] {
        let p = QUBIT_PERFORMANCE[id - 1];
        let v = t_phi(p.t1_us.mean, p.t2e_us.mean).map_err(|e| e.to_string())?;
        let row = p.tphi_us.expect("published T_φ");
        ok &= (v - row.mean).abs() <= row.sd;
        parts.push(format!("Q{id} {v:.0} vs {:.0}±{:.0}", row.mean, row.sd));
    }
    check(ok, parts.join("; "))
}

// 7
fn surface_limit() -> Outcome {
    let q = surface_limited_q(1.3e-4, 1.6e-3).map_err(|e| e.to_string())?;
    let row = SI_RESONATOR_LOSS[0];
    let (p, qt) = (row.p_ms_e4 * 1e-4, row.q_tls0_e6.unwrap().0 * 1e6);
    let tan = implied_tan_delta(p, qt).map_err(|e| e.to_string())?;
    let closed = 1.0 / (p * qt);
    let ok = rel(q, 4.8e6) <= 0.02 && rel(tan, closed) <= 1e-6 && (tan - 1.44e-3).abs() < 0.005e-3;
    check(ok, format!("Q_surface = {:.3}e6; {} tanδ = {:.4e}", q / 1e6, row.id, tan))
}

// 8
fn oxide_thickness_check() -> Outcome {
    let x = XpsInput { i_ox: 2.402770519751739, i_m: 1.0, lambda_eff: 1.51e-9, n_m: 5.43e28, n_ox: 2.24e28 };
    let t = oxide_thickness(&x).map_err(|e| e.to_string())?;
    let zero = oxide_thickness(&XpsInput { i_ox: 0.0, ..x }).map_err(|e| e.to_string())?;
    check((t - 2.9e-9).abs() <= 0.05e-9 && zero == 0.0, format!("t_ox = {:.4} nm; I_ox = 0 gives {zero}", t * 1e9))
}

fn random_resonator(rng: &mut CounterRng) -> ResonanceParams {
    loop {
        let p = ResonanceParams {
            amplitude: rng.uniform_in(0.3, 1.5),
            bg_phase: rng.uniform_in(-3.0, 3.0),
            delay: rng.uniform_in(0.0, 100e-9),
            q_l: rng.log_uniform_in(1e3, 1e7),
            q_c_mag: rng.log_uniform_in(1e3, 1e7),
            phi: rng.uniform_in(-1.2, 1.2),
            f_r: rng.uniform_in(4e9, 8e9),
        };
        // fit_s21 requires a visible dip: min |S21| < 0.99·median |S21|
        if q_int(p.q_l, p.q_c_mag, p.phi).is_ok() {
            let freqs = plan_hpd_default(p.f_r, p.q_l).unwrap().freqs;
            let mags: Vec<f64> = freqs.iter().map(|&f| s21_model(&p, f).unwrap().norm()).collect();
            let min = mags.iter().copied().fold(f64::INFINITY, f64::min);
            if min < 0.99 * scqa::stats::median(&mags) {
                return p;
            }
        }
    }
}

// 9
fn circle_fit_round_trip() -> Outcome {
    let mut rng = CounterRng::new(2024, 11);
    let sets: Vec<ResonanceParams> = (0..200).map(|_| random_resonator(&mut rng)).collect();
    let mut exact = 0;
    let mut covered = 0;
    let mut failed = 0;
    for (k, truth) in sets.iter().enumerate() {
        let freqs = plan_hpd_default(truth.f_r, truth.q_l).unwrap().freqs;
        let clean = fit_s21(&synth_s21(&S21Scenario::noiseless(*truth, freqs.clone())));
        if let Ok(fit) = clean {
            let p = fit.params;
            // angles and delay can sit at zero; their 1e-6 is taken on a natural scale
            let ok = rel(p.amplitude, truth.amplitude) < 1e-6
                && (p.bg_phase - truth.bg_phase).abs() < 1e-6 * truth.bg_phase.abs().max(1.0)
                && (p.delay - truth.delay).abs() < 1e-6 * truth.delay.max(1e-9)
                && rel(p.q_l, truth.q_l) < 1e-6
                && rel(p.q_c_mag, truth.q_c_mag) < 1e-6
                && (p.phi - truth.phi).abs() < 1e-6 * truth.phi.abs().max(1.0)
                && rel(p.f_r, truth.f_r) < 1e-6;
            if ok {
                exact += 1;
            }
        }
        let mut sc = S21Scenario::noiseless(*truth, freqs);
        sc.seed = k as u64;
        sc.noise_sigma = 0.01;
        match fit_s21(&synth_s21(&sc)) {
            Ok(fit) => {
                let qi = q_int(truth.q_l, truth.q_c_mag, truth.phi).unwrap();
                if (fit.q_int - qi).abs() <= 3.0 * fit.sigmas.q_int {
                    covered += 1;
                }
            }
            Err(_) => failed += 1,
        }
    }
    check(
        exact == 200 && covered >= 190,
        format!("noiseless exact {exact}/200; noisy Q_int within 3σ {covered}/200 ({failed} fit errors)"),
    )
}

fn loss_scenario(seed: u64, truth: LossParams, f_r: f64) -> LossScenario {
    LossScenario {
        seed,
        truth,
        omega: 2.0 * std::f64::consts::PI * f_r,
        delta_0: delta0_from_tc(0.7).unwrap(),
        nbar: (0..15).map(|k| 10f64.powf(k as f64 * 0.5)).collect(),
        temperatures: vec![0.01, 0.05, 0.1, 0.15, 0.2, 0.25],
        q_rel_sigma: 0.02,
    }
}

// 10
fn loss_grid_round_trip() -> Outcome {
    let shape = LossParams { q_tls0: 1e6, d: 1e3, beta1: 1.0, beta2: 0.8, a_qp: Some(3e3), q_other: 2e6 };
    let mut cases: Vec<(String, LossScenario)> = Vec::new();
    for row in SI_RESONATOR_LOSS.iter() {
        if let (Some(qt), Some(qo)) = (row.q_tls0_e6, row.q_other_e6) {
            let truth = LossParams { q_tls0: qt.0 * 1e6, q_other: qo.0 * 1e6, ..shape };
            cases.push((row.id.to_string(), loss_scenario(1, truth, row.f_r_ghz * 1e9)));
        }
    }
    cases.push(("generic".into(), loss_scenario(2, shape, 5e9)));
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, sc) in &cases {
        let fit = fit_loss_grid(&synth_loss_grid(sc), sc.omega, sc.delta_0).map_err(|e| format!("{name}: {e}"))?;
        let zt = (fit.q_tls0.value - sc.truth.q_tls0).abs() / fit.q_tls0.sigma;
        let zo = (fit.q_other.value - sc.truth.q_other).abs() / fit.q_other.sigma;
        ok &= zt <= 2.0 && zo <= 2.0;
        parts.push(format!("{name} {zt:.1}σ/{zo:.1}σ"));
    }

    // residual loss far above the TLS loss on a sparse grid
    let mut weak = loss_scenario(0, LossParams { q_tls0: 3e7, q_other: 1.4e6, ..shape }, 6.14e9);
    weak.q_rel_sigma = 0.05;
    weak.nbar = (0..7).map(|k| 10f64.powi(k)).collect();
    weak.temperatures = vec![0.015, 0.05, 0.1, 0.15, 0.2];
    let wf = fit_loss_grid(&synth_loss_grid(&weak), weak.omega, weak.delta_0).map_err(|e| e.to_string())?;
    ok &= !wf.q_tls0_reliable && wf.q_other_reliable;
    parts.push(format!("weak-power flag {}", !wf.q_tls0_reliable));
    check(ok, parts.join("; "))
}

// 11
fn qp_bound() -> Outcome {
    let x = qp_fraction(0.02, delta0_from_tc(0.5).unwrap()).map_err(|e| e.to_string())?;
    check(x < 1e-19, format!("x_qp = {x:.3e}"))
}

// 12
fn ramsey_recovery() -> Outcome {
    let beats = [
        Beat { freq_hz: 17e3, amplitude: 0.25, phase: 0.0 },
        Beat { freq_hz: 95e3, amplitude: 0.25, phase: 0.0 },
    ];
    let mut rng = CounterRng::new(12, 12);
    let trace = ramsey_trace(408e-6, &beats, 401, 0.01, &mut rng);
    let fit = fit_ramsey(&trace).map_err(|e| e.to_string())?;
    if fit.beats.len() != 2 {
        return Err(format!("{} beat(s) selected", fit.beats.len()));
    }
    let z: Vec<f64> = [(fit.beats[0], 17e3), (fit.beats[1], 95e3), (fit.time, 408e-6)]
        .iter()
        .map(|(e, t)| (e.value - t).abs() / e.sigma)
        .collect();
    check(
        z.iter().all(|v| *v <= 3.0),
        format!(
            "ν = {:.2}, {:.2} kHz; T = {:.1} μs (|z| = {:.1}, {:.1}, {:.1})",
            fit.beats[0].value / 1e3,
            fit.beats[1].value / 1e3,
            fit.time.value * 1e6,
            z[0],
            z[1],
            z[2]
        ),
    )
}

// 13
fn hpd_geometry() -> Outcome {
    let (f_r, q_l) = (5.3e9, 2.7e5);
    let plan = plan_hpd_default(f_r, q_l).map_err(|e| e.to_string())?;
    let n = plan.freqs.len();
    let span = plan.freqs[n - 1] - plan.freqs[0];
    let antisym = (0..n).all(|k| plan.freqs[k] - f_r == -(plan.freqs[n - 1 - k] - f_r));
    check(
        n == 251 && rel(span, 15.0 * f_r / q_l) <= 1e-9 && antisym,
        format!("{n} points, span {:.6} linewidths, antisymmetric {antisym}", span * q_l / f_r),
    )
}

// 14
fn end_to_end_determinism() -> Outcome {
    let (ds, _) = synth_dataset(0);
    let cfg = PipelineConfig::default();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let report = run_pipeline(&ds, &cfg).map_err(|e| e.to_string())?;
        write_bundle(&report, d.path()).map_err(|e| e.to_string())?;
    }
    let mut same = true;
    for name in ["report.json", "summary.txt"] {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap();
        same &= a == b && !a.is_empty();
    }
    let size = std::fs::metadata(dirs[0].path().join("report.json")).unwrap().len();
    check(same, format!("two runs byte-identical: {same} (report {size} bytes)"))
}

#[test]
fn acceptance() {
    let ms = Duration::from_millis;
    let criteria: [(&str, Duration, fn() -> Outcome); 14] = [
        ("1 lambda_dirty reproduction", ms(1), lambda_dirty_reproduction),
        ("2 bulk sheet inductance", ms(1), bulk_sheet_inductance),
        ("3 lambda round trip", ms(10_000), lambda_round_trip),
        ("4 Q_bar regression", ms(1), q_bar_regression),
        ("5 transmon energies", ms(1), transmon_energies),
        ("6 T_phi consistency", ms(1), t_phi_consistency),
        ("7 surface limit", ms(1), surface_limit),
        ("8 oxide thickness", ms(1), oxide_thickness_check),
        ("9 circle-fit round trip", ms(60_000), circle_fit_round_trip),
        ("10 loss-grid round trip", ms(60_000), loss_grid_round_trip),
        ("11 QP bound", ms(1), qp_bound),
        ("12 Ramsey recovery", ms(5_000), ramsey_recovery),
        ("13 HPD geometry", ms(1), hpd_geometry),
        ("14 end-to-end determinism", ms(300_000), end_to_end_determinism),
    ];
    let mut failed = Vec::new();
    for (name, budget, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let took = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) => (took <= budget, d),
            Err(d) => (false, d),
        };
        let tag = if ok { "PASS" } else { "FAIL" };
        println!("{tag} {name}: {detail} [{took:.2?} / budget {budget:.0?}]");
        if !ok {
            failed.push(name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
