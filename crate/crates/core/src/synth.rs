//! Forward simulators producing synthetic data from known ground truth.
//!
//! Every generator takes an explicit seed and draws noise from
//! [`CounterRng`], each on its own stream, so outputs are bit-reproducible.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::kinetic::sheet_lk_model;
use crate::loss::{LossGridPoint, LossParams};
use crate::model::{ComplexTrace, Estimate, ResonatorKind, ResonatorRecord, TraceMeta};
use crate::qubit::{DecayKind, DecayTrace};
use crate::rng::CounterRng;
use crate::s21::ResonanceParams;

const STREAM_S21: u64 = 1;
const STREAM_LOSS: u64 = 2;
const STREAM_INDUCTANCE: u64 = 3;
const STREAM_DECAY: u64 = 4;

/// Bifurcation-style distortion: the normalized detuning y solves
/// `y = y₀ + strength/(1 + 4y²)` along an upward frequency sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DuffingWarp {
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct S21Scenario {
    pub seed: u64,
    pub truth: ResonanceParams,
    pub freqs: Vec<f64>,
    /// Standard deviation of each real and imaginary noise component.
    pub noise_sigma: f64,
    pub duffing: Option<DuffingWarp>,
    pub meta: TraceMeta,
}

impl S21Scenario {
    pub fn noiseless(truth: ResonanceParams, freqs: Vec<f64>) -> Self {
        Self {
            seed: 0,
            truth,
            freqs,
            noise_sigma: 0.0,
            duffing: None,
            meta: TraceMeta::default(),
        }
    }
}

/// Real roots of `y³ + b·y² + c·y + d`, ascending.
fn cubic_roots(b: f64, c: f64, d: f64) -> Vec<f64> {
    let shift = b / 3.0;
    let p = c - b * b / 3.0;
    let q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
    let disc = 0.25 * q * q + p * p * p / 27.0;
    let mut roots = if disc > 0.0 {
        let s = disc.sqrt();
        vec![(-0.5 * q + s).cbrt() + (-0.5 * q - s).cbrt()]
    } else {
        let r = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * r)).clamp(-1.0, 1.0);
        let base = arg.acos() / 3.0;
        (0..3)
            .map(|k| r * (base - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos())
            .collect()
    };
    for t in &mut roots {
        *t -= shift;
        for _ in 0..3 {
            let f = ((*t + b) * *t + c) * *t + d;
            let df = (3.0 * *t + 2.0 * b) * *t + c;
            if df != 0.0 {
                *t -= f / df;
            }
        }
    }
    roots.sort_by(f64::total_cmp);
    roots
}

fn warped_detuning(y0: &[f64], strength: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(y0.len());
    let mut prev: Option<f64> = None;
    for &x in y0 {
        // 4y³ − 4x·y² + y − (x + a) = 0
        let roots = cubic_roots(-x, 0.25, -0.25 * (x + strength));
        let y = match prev {
            None => roots[0],
            Some(p) => *roots
                .iter()
                .min_by(|a, b| (*a - p).abs().total_cmp(&(*b - p).abs()))
                .expect("cubic has a real root"),
        };
        out.push(y);
        prev = Some(y);
    }
    out
}

/// Samples the resonance model on the scenario grid and adds complex noise.
pub fn synth_s21(sc: &S21Scenario) -> ComplexTrace {
    let p = &sc.truth;
    let y0: Vec<f64> = sc.freqs.iter().map(|f| p.q_l * (f - p.f_r) / p.f_r).collect();
    let y = match sc.duffing {
        Some(w) => warped_detuning(&y0, w.strength),
        None => y0,
    };
    let coupling = Complex64::from_polar(p.diameter(), p.phi);
    let mut rng = CounterRng::new(sc.seed, STREAM_S21);
    let s21 = sc
        .freqs
        .iter()
        .zip(&y)
        .map(|(&f, &yk)| {
            let bg = Complex64::from_polar(
                p.amplitude,
                p.bg_phase + 2.0 * std::f64::consts::PI * f * p.delay,
            );
            let clean = bg * (1.0 - coupling / Complex64::new(1.0, 2.0 * yk));
            if sc.noise_sigma > 0.0 {
                let re = rng.normal();
                let im = rng.normal();
                clean + sc.noise_sigma * Complex64::new(re, im)
            } else {
                clean
            }
        })
        .collect();
    ComplexTrace {
        freq: sc.freqs.clone(),
        s21,
        meta: sc.meta,
    }
}

/// Loss-grid ground truth sampled on the Cartesian product of photon
/// numbers and temperatures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossScenario {
    pub seed: u64,
    pub truth: LossParams,
    pub omega: f64,
    pub delta_0: f64,
    pub nbar: Vec<f64>,
    pub temperatures: Vec<f64>,
    /// Lognormal relative scatter; also reported as each point's σ.
    pub q_rel_sigma: f64,
}

pub fn synth_loss_grid(sc: &LossScenario) -> Vec<LossGridPoint> {
    let mut rng = CounterRng::new(sc.seed, STREAM_LOSS);
    let mut grid = Vec::with_capacity(sc.nbar.len() * sc.temperatures.len());
    for &t in &sc.temperatures {
        for &n in &sc.nbar {
            let clean = sc.truth.q_total(n, t, sc.omega, sc.delta_0);
            let q = if sc.q_rel_sigma > 0.0 {
                clean * (sc.q_rel_sigma * rng.normal()).exp()
            } else {
                clean
            };
            grid.push(LossGridPoint {
                nbar: n,
                temperature_k: t,
                q_int: Estimate::new(q, sc.q_rel_sigma * q),
                power_dbm: None,
            });
        }
    }
    grid
}

/// Geometric inductance per unit length assumed for every CPW, in H/m.
pub const CPW_L_PER_M: f64 = 4.2e-7;

/// A CPW layout as an EM solver would see it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpwGeometry {
    pub gap_um: f64,
    pub width_um: f64,
    pub length_m: f64,
    /// Simulated resonance frequency with no kinetic inductance, in Hz.
    pub f_sim: f64,
}

impl CpwGeometry {
    pub fn l_g(&self) -> f64 {
        CPW_L_PER_M * self.length_m
    }

    /// Squares seen by the current: length over the transverse size w + s.
    pub fn g_factor(&self) -> f64 {
        self.length_m / ((self.width_um + self.gap_um) * 1e-6)
    }
}

/// Gap widths 2–16 μm on a 10 μm centre strip; longer gaps get shorter
/// resonators so the simulated frequencies fan out over 4–7 GHz.
pub fn default_cpw_family() -> Vec<CpwGeometry> {
    (1..=8)
        .map(|k| {
            let gap = 2.0 * k as f64;
            let f_sim = 4.0e9 + 0.4e9 * (k - 1) as f64;
            CpwGeometry {
                gap_um: gap,
                width_um: 10.0,
                // quarter wave at an effective index of √6.0
                length_m: 299_792_458.0 / (4.0 * f_sim * 6.0f64.sqrt()),
                f_sim,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InductanceScenario {
    pub seed: u64,
    pub lambda: f64,
    /// (film id, thickness in m).
    pub films: Vec<(String, f64)>,
    pub geometries: Vec<CpwGeometry>,
    /// Relative Gaussian scatter applied to each resonator's L_k; the measured
    /// frequency σ is set so it propagates back to the same relative σ.
    pub l_k_rel_sigma: f64,
}

/// Simulated inductance sweep of one geometry: (L_s, L_tot) pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InductanceTable {
    pub resonator_id: String,
    pub l_g: f64,
    pub samples: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InductanceData {
    pub resonators: Vec<ResonatorRecord>,
    pub tables: Vec<InductanceTable>,
    /// Noise-free sheet inductance per resonator, aligned with `resonators`.
    pub true_sheet_lk: Vec<f64>,
}

/// Sheet inductances probed by each simulated sweep, in H/□.
const SWEEP_L_S: [f64; 5] = [0.0, 5e-12, 10e-12, 50e-12, 100e-12];

/// Forward model for the kinetic-inductance chain: one λ for every film,
/// G ∝ length/(w + s), and f_meas = f_sim·√(L_g/(L_g + L_k)).
pub fn synth_inductance_tables(sc: &InductanceScenario) -> InductanceData {
    let mut rng = CounterRng::new(sc.seed, STREAM_INDUCTANCE);
    let mut out = InductanceData { resonators: Vec::new(), tables: Vec::new(), true_sheet_lk: Vec::new() };
    for (film, t) in &sc.films {
        let l_sq = sheet_lk_model(*t, sc.lambda);
        for geo in &sc.geometries {
            let id = ResonatorRecord::label(film, ResonatorKind::Cpw, geo.gap_um);
            let (l_g, g) = (geo.l_g(), geo.g_factor());
            let l_k_true = g * l_sq;
            let l_k = if sc.l_k_rel_sigma > 0.0 {
                (l_k_true * (1.0 + sc.l_k_rel_sigma * rng.normal())).max(0.0)
            } else {
                l_k_true
            };
            let x = (l_g / (l_g + l_k)).sqrt();
            let f_meas = geo.f_sim * x;
            // σ_L/L = 2σ_x/(x(1 − x²))
            let f_sigma = 0.5 * sc.l_k_rel_sigma * (1.0 - x * x) * f_meas;
            out.resonators.push(ResonatorRecord {
                id: id.clone(),
                kind: ResonatorKind::Cpw,
                gap_um: geo.gap_um,
                thickness_um: t * 1e6,
                f_r_sim: Some(geo.f_sim),
                f_r_meas: Some(Estimate::new(f_meas, f_sigma)),
                l_g: Some(l_g),
                g_factor: None,
                p_ms: None,
                p_ma: None,
                p_sa: None,
                q_c_mag: None,
                q_tls0: None,
                q_other: None,
            });
            out.tables.push(InductanceTable {
                resonator_id: id,
                l_g,
                samples: SWEEP_L_S.iter().map(|&ls| (ls, l_g + g * ls)).collect(),
            });
            out.true_sheet_lk.push(l_sq);
        }
    }
    out
}

/// Thicknesses of the sixteen films, in m.
pub fn reference_film_thicknesses() -> Vec<(String, f64)> {
    crate::reference::FILM_THICKNESS_UM
        .iter()
        .map(|(id, t)| (id.to_string(), t * 1e-6))
        .collect()
}

/// One cosine component of a Ramsey signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Beat {
    pub freq_hz: f64,
    pub amplitude: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayLogScenario {
    pub seed: u64,
    pub t1: f64,
    pub t2r: f64,
    pub t2e: f64,
    pub beats: Vec<Beat>,
    /// Number of T1 → T2R → T2E rounds.
    pub cycles: usize,
    /// Wall-clock time between successive traces, in s.
    pub spacing_s: f64,
    /// Fractional sinusoidal drift of every time constant over the log.
    pub drift: f64,
    /// Gaussian σ added to each p_e sample.
    pub pe_sigma: f64,
    pub points: usize,
}

impl DecayLogScenario {
    /// A qubit with the given time constants, no drift and 1% readout noise.
    pub fn steady(seed: u64, t1: f64, t2r: f64, t2e: f64, cycles: usize) -> Self {
        Self {
            seed,
            t1,
            t2r,
            t2e,
            beats: vec![Beat { freq_hz: 60e3, amplitude: 0.45, phase: 0.0 }],
            cycles,
            spacing_s: 60.0,
            drift: 0.0,
            pe_sigma: 0.01,
            points: 41,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedTrace {
    pub timestamp_s: f64,
    pub trace: DecayTrace,
}

fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

/// Ramsey samples: linear delays up to three decay times.
pub fn ramsey_trace(t2r: f64, beats: &[Beat], points: usize, pe_sigma: f64, rng: &mut CounterRng) -> DecayTrace {
    let step = 3.0 * t2r / (points - 1) as f64;
    let delays: Vec<f64> = (0..points).map(|i| i as f64 * step).collect();
    let p_e = delays
        .iter()
        .map(|&t| {
            let osc: f64 = beats
                .iter()
                .map(|b| b.amplitude * (2.0 * std::f64::consts::PI * b.freq_hz * t + b.phase).cos())
                .sum();
            0.5 + (-t / t2r).exp() * osc + pe_sigma * rng.normal()
        })
        .collect();
    let hint = beats.iter().map(|b| b.freq_hz).fold(0.0, f64::max);
    DecayTrace::new(delays, p_e, DecayKind::T2R, (hint > 0.0).then_some(hint)).expect("delays increase")
}

fn exp_trace(kind: DecayKind, tau: f64, points: usize, pe_sigma: f64, rng: &mut CounterRng) -> DecayTrace {
    let delays = log_spaced(tau / 50.0, 5.0 * tau, points);
    let (amp, off) = match kind {
        DecayKind::T2E => (0.45, 0.5),
        _ => (0.92, 0.03),
    };
    let p_e = delays.iter().map(|&t| off + amp * (-t / tau).exp() + pe_sigma * rng.normal()).collect();
    DecayTrace::new(delays, p_e, kind, None).expect("delays increase")
}

/// Interleaved T1, T2R and T2E traces, one of each per cycle.
pub fn synth_decay_log(sc: &DecayLogScenario) -> Vec<TimedTrace> {
    let mut rng = CounterRng::new(sc.seed, STREAM_DECAY);
    let mut out = Vec::with_capacity(3 * sc.cycles);
    let total = (3 * sc.cycles) as f64 * sc.spacing_s;
    let mut clock = 0.0;
    for _ in 0..sc.cycles {
        for kind in [DecayKind::T1, DecayKind::T2R, DecayKind::T2E] {
            let scale = 1.0 + sc.drift * (2.0 * std::f64::consts::PI * clock / total).sin();
            let trace = match kind {
                DecayKind::T1 => exp_trace(kind, sc.t1 * scale, sc.points, sc.pe_sigma, &mut rng),
                DecayKind::T2E => exp_trace(kind, sc.t2e * scale, sc.points, sc.pe_sigma, &mut rng),
                DecayKind::T2R => ramsey_trace(sc.t2r * scale, &sc.beats, 4 * sc.points, sc.pe_sigma, &mut rng),
            };
            out.push(TimedTrace { timestamp_s: clock, trace });
            clock += sc.spacing_s;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::s21::{plan_hpd_default, s21_model};

    fn truth() -> ResonanceParams {
        ResonanceParams {
            amplitude: 0.9,
            bg_phase: 0.4,
            delay: 12e-9,
            q_l: 5e4,
            q_c_mag: 8e4,
            phi: 0.2,
            f_r: 6e9,
        }
    }

    #[test]
    fn zero_noise_equals_model() {
        let sc = S21Scenario::noiseless(truth(), plan_hpd_default(6e9, 5e4).unwrap().freqs);
        let trace = synth_s21(&sc);
        for (f, z) in trace.freq.iter().zip(&trace.s21) {
            let m = s21_model(&sc.truth, *f).unwrap();
            assert!((z - m).norm() <= 1e-15 * m.norm().max(1.0));
        }
    }

    #[test]
    fn same_seed_same_trace() {
        let mut sc = S21Scenario::noiseless(truth(), plan_hpd_default(6e9, 5e4).unwrap().freqs);
        sc.noise_sigma = 0.01;
        sc.seed = 77;
        assert_eq!(synth_s21(&sc), synth_s21(&sc));
        let mut other = sc.clone();
        other.seed = 78;
        assert_ne!(synth_s21(&sc), synth_s21(&other));
    }

    #[test]
    fn pure_tls_grid() {
        let sc = LossScenario {
            seed: 1,
            truth: LossParams {
                q_tls0: 1e6,
                d: 10.0,
                beta1: 1.0,
                beta2: 1.0,
                a_qp: None,
                q_other: f64::INFINITY,
            },
            omega: 2.0 * std::f64::consts::PI * 5e9,
            delta_0: 1.7e-23,
            nbar: vec![1.0, 10.0, 100.0],
            temperatures: vec![0.01, 0.02],
            q_rel_sigma: 0.0,
        };
        let grid = synth_loss_grid(&sc);
        assert_eq!(grid.len(), 6);
        for p in grid {
            let tls = crate::loss::q_tls(p.nbar, p.temperature_k, 1e6, 10.0, 1.0, 1.0, sc.omega).unwrap();
            assert!((p.q_int.value / tls - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn qp_tail_slope_approaches_gap() {
        // d ln(1/Q)/d(1/T) → −Δ₀/k_B once the quasiparticle channel dominates
        let delta_0 = crate::model::delta0_from_tc(0.7).unwrap();
        let p = LossParams {
            q_tls0: 1e40,
            d: 1.0,
            beta1: 1.0,
            beta2: 1.0,
            a_qp: Some(1.0),
            q_other: 1e40,
        };
        let omega = 2.0 * std::f64::consts::PI * 5e9;
        let (t1, t2) = (0.020, 0.0205);
        let l1 = (1.0 / p.q_total(1.0, t1, omega, delta_0)).ln();
        let l2 = (1.0 / p.q_total(1.0, t2, omega, delta_0)).ln();
        let slope = (l2 - l1) / (1.0 / t2 - 1.0 / t1);
        let gap_k = delta_0 / crate::constants::BOLTZMANN;
        assert!((slope / -gap_k - 1.0).abs() < 0.02, "{slope} vs {gap_k}");
    }

    #[test]
    fn cubic_roots_known() {
        // (y − 1)(y − 2)(y − 3)
        let r = cubic_roots(-6.0, 11.0, -6.0);
        assert_eq!(r.len(), 3);
        for (a, b) in r.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let r = cubic_roots(0.0, 1.0, -2.0);
        assert_eq!(r.len(), 1);
        assert!((r[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duffing_branch_jumps() {
        let y0: Vec<f64> = (0..400).map(|i| -5.0 + 0.025 * i as f64).collect();
        let y = warped_detuning(&y0, 2.0);
        let max_step = y.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        assert!(max_step > 0.5, "no bifurcation jump, max step {max_step}");
        for (a, b) in y.iter().zip(&y0) {
            assert!(((a - b) * (1.0 + 4.0 * a * a) - 2.0).abs() < 1e-9);
        }
    }

    fn inductance(noise: f64, seed: u64) -> InductanceData {
        synth_inductance_tables(&InductanceScenario {
            seed,
            lambda: 1.78e-6,
            films: reference_film_thicknesses(),
            geometries: default_cpw_family(),
            l_k_rel_sigma: noise,
        })
    }

    fn lambda_points(data: &InductanceData) -> Vec<(f64, Estimate)> {
        data.resonators
            .iter()
            .zip(&data.tables)
            .map(|(rec, tab)| {
                let g = crate::kinetic::fit_g_factor(&tab.samples, tab.l_g).unwrap().g;
                let rec = ResonatorRecord { g_factor: Some(g), ..rec.clone() };
                (rec.thickness_um * 1e-6, crate::kinetic::sheet_lk_from_resonator(&rec, 0.0).unwrap())
            })
            .collect()
    }

    #[test]
    fn inductance_tables_round_trip() {
        let data = inductance(0.0, 0);
        let pts = lambda_points(&data);
        for ((_, l), truth) in pts.iter().zip(&data.true_sheet_lk) {
            assert!((l.value / truth - 1.0).abs() < 1e-9);
        }
        let fit = crate::kinetic::fit_lambda(&pts).unwrap();
        assert!((fit.lambda.value / 1.78e-6 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn thinnest_film_shifts_most() {
        let data = inductance(0.0, 0);
        let alpha = |r: &ResonatorRecord| crate::kinetic::alpha_from_freqs(r.f_r_meas.unwrap().value, r.f_r_sim.unwrap()).unwrap();
        let (thin, rest): (Vec<_>, Vec<_>) = data.resonators.iter().partition(|r| r.thickness_um == 0.021);
        let min_thin = thin.iter().map(|r| alpha(r)).fold(f64::INFINITY, f64::min);
        let max_rest = rest.iter().map(|r| alpha(r)).fold(0.0, f64::max);
        assert!(min_thin > max_rest);
    }

    #[test]
    fn g_factor_tracks_transverse_size() {
        let data = inductance(0.0, 0);
        let geos = default_cpw_family();
        let ratios: Vec<f64> = data
            .tables
            .iter()
            .take(geos.len())
            .zip(&geos)
            .map(|(t, g)| {
                let fit = crate::kinetic::fit_g_factor(&t.samples, t.l_g).unwrap();
                fit.g.value * (g.width_um + g.gap_um) * 1e-6 / g.length_m
            })
            .collect();
        let m = crate::stats::mean(&ratios);
        assert!(ratios.iter().all(|r| (r / m - 1.0).abs() < 0.05));
    }

    #[test]
    fn decay_log_determinism_and_lifetime_limit() {
        let sc = DecayLogScenario::steady(3, 100e-6, 150e-6, 200e-6, 4);
        let log = synth_decay_log(&sc);
        assert_eq!(log.len(), 12);
        assert_eq!(log, synth_decay_log(&sc));
        let kinds: Vec<DecayKind> = log.iter().take(3).map(|t| t.trace.kind).collect();
        assert_eq!(kinds, vec![DecayKind::T1, DecayKind::T2R, DecayKind::T2E]);

        let fits: Vec<crate::qubit::TimedFit> = log
            .iter()
            .map(|t| {
                let f = crate::qubit::fit_decay(&t.trace).unwrap();
                crate::qubit::TimedFit { timestamp_s: t.timestamp_s, kind: t.trace.kind, time: f.time }
            })
            .collect();
        // exact T2E = 2·T1 on every pair needs the noiseless truth
        let exact: Vec<crate::qubit::TimedFit> = fits
            .iter()
            .map(|f| crate::qubit::TimedFit {
                time: Estimate::new(if f.kind == DecayKind::T1 { 100e-6 } else { 200e-6 }, 1e-6),
                ..*f
            })
            .collect();
        let st = crate::qubit::build_stats(&exact, 1e3).unwrap();
        assert!(st.tphi.is_none());
        assert_eq!(st.tphi_unbounded, 4);
    }

    #[test]
    fn decay_log_means_match_truth() {
        let sc = DecayLogScenario::steady(11, 300e-6, 120e-6, 250e-6, 20);
        let fits: Vec<crate::qubit::TimedFit> = synth_decay_log(&sc)
            .iter()
            .map(|t| {
                let f = crate::qubit::fit_decay(&t.trace).unwrap();
                crate::qubit::TimedFit { timestamp_s: t.timestamp_s, kind: t.trace.kind, time: f.time }
            })
            .collect();
        let st = crate::qubit::build_stats(&fits, 1e3).unwrap();
        for (s, truth) in [(&st.t1, 300e-6), (&st.t2r, 120e-6), (&st.t2e, 250e-6)] {
            let s = s.as_ref().unwrap();
            let se = s.sd / (s.count as f64).sqrt();
            assert!((s.mean - truth).abs() <= 4.0 * se, "{} vs {truth} (se {se})", s.mean);
        }
    }
}
