//! End-to-end analysis over a [`Dataset`]: S21 fits, loss decomposition,
//! kinetic inductance and λ, surface loss, coherence statistics.
//!
//! Each record is processed on its own; a failure is captured in its
//! [`Stage`] and the remaining records carry on.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::io;
use crate::kinetic::{self, GFactorFit, LambdaFit, SIM_FREQ_REL_SIGMA};
use crate::loss::{self, LossFit, LossGridPoint};
use crate::model::{delta0_from_tc, Estimate, QubitTimeStats};
use crate::qubit::{self, CoherenceStats, DecayFit, DecayKind, TimedFit};
use crate::s21::{self, ResonanceFit, ScreenResult};
use crate::surface::{self, TanDeltaFit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Largest gap between a T1 and a T2E fit that still forms a T_φ pair.
    pub pair_window_s: f64,
    /// Fractional σ assumed for simulated resonance frequencies.
    pub sim_freq_rel_sigma: f64,
    /// Used when the dataset carries no superconductor.json.
    pub t_c_k: f64,
    /// Drop traces flagged by the nonlinearity screen from the loss grids.
    pub screen_nonlinear: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            pair_window_s: 300.0,
            sim_freq_rel_sigma: SIM_FREQ_REL_SIGMA,
            t_c_k: crate::reference::T_C_K.0,
            screen_nonlinear: true,
        }
    }
}

/// Outcome of one unit of work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage<T> {
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl<T> Stage<T> {
    fn from_result(r: Result<T>) -> Self {
        match r {
            Ok(v) => Self { ok: true, value: Some(v), error: None },
            Err(e) => Self { ok: false, value: None, error: Some(e.to_string()) },
        }
    }

    pub fn get(&self) -> Option<&T> {
        self.value.as_ref()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceReport {
    pub name: String,
    pub power_dbm: Option<f64>,
    pub temperature_k: Option<f64>,
    pub fit: Stage<ResonanceFit>,
    pub screen: Option<ScreenResult>,
    pub nbar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub grid: Vec<LossGridPoint>,
    pub fit: LossFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonatorReport {
    pub id: String,
    pub traces: Vec<TraceReport>,
    pub loss: Stage<LossReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SheetReport {
    pub id: String,
    pub thickness_m: f64,
    pub g_factor: Stage<GFactorFit>,
    pub l_k_sq_h: Stage<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KineticReport {
    pub sheets: Vec<SheetReport>,
    pub lambda: Stage<LambdaFit>,
    pub lambda_dirty_m: Stage<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceReport {
    /// (resonator id, p_MS, Q_TLS0) feeding the regression.
    pub inputs: Vec<(String, f64, Estimate)>,
    pub tan_delta: Stage<TanDeltaFit>,
    pub oxide_thickness_m: Option<Stage<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub timestamp_s: f64,
    pub kind: DecayKind,
    pub fit: Stage<DecayFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QubitReport {
    pub id: u32,
    pub fits: Vec<DecayReport>,
    pub stats: Stage<CoherenceStats>,
    pub summary: QubitTimeStats,
    pub q_bar: Option<Estimate>,
    pub e_j_over_e_c: Stage<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: PipelineConfig,
    pub resonators: Vec<ResonatorReport>,
    pub kinetic: KineticReport,
    pub surface: SurfaceReport,
    pub qubits: Vec<QubitReport>,
    /// "<stage> <record>: <error>" for every failed unit, in report order.
    pub failures: Vec<String>,
    pub notes: Vec<String>,
}

#[cfg(feature = "parallel")]
fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    items.iter().map(f).collect()
}

fn fit_trace(trace: &crate::model::ComplexTrace, screen: bool) -> (Result<ResonanceFit>, Option<ScreenResult>) {
    match s21::fit_s21(trace) {
        Ok(mut fit) => {
            let sc = s21::nonlinearity_screen(trace, &fit);
            if screen && sc.flagged {
                fit.accepted = false;
            }
            (Ok(fit), Some(sc))
        }
        Err(e) => (Err(e), None),
    }
}

fn resonator_stage(ds: &Dataset, id: &str, cfg: &PipelineConfig, delta_0: f64) -> ResonatorReport {
    let chain = ds.attenuation_chain().transpose();
    let traces = &ds.traces[id];
    let mut reports: Vec<TraceReport> = par_map(traces, |t| {
        let (fit, screen) = fit_trace(&t.trace, cfg.screen_nonlinear);
        TraceReport {
            name: t.name.clone(),
            power_dbm: t.trace.meta.power_dbm,
            temperature_k: t.trace.meta.temperature_k,
            fit: Stage::from_result(fit),
            screen,
            nbar: None,
        }
    });

    let loss = (|| -> Result<LossReport> {
        let chain = match &chain {
            Ok(Some(c)) => c,
            Ok(None) => return Err(Error::Validation("no attenuation table; photon numbers unknown".into())),
            Err(e) => return Err(e.clone()),
        };
        let mut grid = Vec::new();
        let mut freqs = Vec::new();
        for r in reports.iter_mut() {
            let Some(fit) = r.fit.get().filter(|f| f.accepted) else { continue };
            let (Some(p), Some(t)) = (r.power_dbm, r.temperature_k) else { continue };
            let q = Estimate::new(fit.q_int, fit.sigmas.q_int);
            if !(q.sigma > 0.0 && q.is_reliable()) {
                continue;
            }
            let nbar = loss::photons_from_power(p, chain, fit.params.f_r, fit.params.q_l, fit.params.q_c_mag)?;
            r.nbar = Some(nbar);
            grid.push(LossGridPoint { nbar, temperature_k: t, q_int: q, power_dbm: Some(p) });
            freqs.push(fit.params.f_r);
        }
        if freqs.is_empty() {
            return Err(Error::Insufficient("no accepted trace carries power and temperature".into()));
        }
        let omega = 2.0 * std::f64::consts::PI * crate::stats::median(&freqs);
        let fit = loss::fit_loss_grid(&grid, omega, delta_0)?;
        Ok(LossReport { grid, fit })
    })();

    ResonatorReport { id: id.to_string(), traces: reports, loss: Stage::from_result(loss) }
}

fn sheet_stage(ds: &Dataset, rec: &crate::model::ResonatorRecord, cfg: &PipelineConfig) -> SheetReport {
    let g_factor = Stage::from_result(match ds.inductance.get(&rec.id) {
        Some(tab) => kinetic::fit_g_factor(&tab.samples, tab.l_g),
        None => rec
            .g_factor
            .map(|g| GFactorFit { samples: Vec::new(), g, intercept: Estimate::exact(0.0) })
            .ok_or_else(|| Error::Validation(format!("{}: no inductance sweep and no G factor", rec.id))),
    });
    let l_k_sq_h = Stage::from_result(match g_factor.get() {
        Some(g) => {
            let mut r = rec.clone();
            r.g_factor = Some(g.g);
            kinetic::sheet_lk_from_resonator(&r, cfg.sim_freq_rel_sigma)
        }
        None => Err(Error::Insufficient("G factor unavailable".into())),
    });
    SheetReport { id: rec.id.clone(), thickness_m: rec.thickness_um * 1e-6, g_factor, l_k_sq_h }
}

fn qubit_stage(ds: &Dataset, q: &crate::model::QubitRecord, cfg: &PipelineConfig) -> QubitReport {
    let log = ds.decay.get(&q.id).map(Vec::as_slice).unwrap_or(&[]);
    let fits: Vec<DecayReport> = log
        .iter()
        .map(|t| DecayReport { timestamp_s: t.timestamp_s, kind: t.trace.kind, fit: Stage::from_result(qubit::fit_decay(&t.trace)) })
        .collect();
    let series: Vec<TimedFit> = fits
        .iter()
        .filter_map(|f| f.fit.get().map(|d| TimedFit { timestamp_s: f.timestamp_s, kind: f.kind, time: d.time }))
        .collect();
    let stats = Stage::from_result(qubit::build_stats(&series, cfg.pair_window_s));
    let summary = stats
        .get()
        .map(|s| QubitTimeStats {
            t1: s.t1.as_ref().map(|x| x.summary()),
            t2r: s.t2r.as_ref().map(|x| x.summary()),
            t2e: s.t2e.as_ref().map(|x| x.summary()),
            tphi: s.tphi.as_ref().map(|x| x.summary()),
        })
        .unwrap_or_default();
    let q_bar = stats.get().and_then(|s| s.q_bar(q.f_q));
    QubitReport { id: q.id, fits, stats, summary, q_bar, e_j_over_e_c: Stage::from_result(q.e_j_over_e_c()) }
}

/// Runs every stage. Only an invalid dataset is an error; fit failures are
/// recorded in the report.
pub fn run_pipeline(ds: &Dataset, cfg: &PipelineConfig) -> Result<Report> {
    ds.validate()?;
    if !(cfg.pair_window_s > 0.0 && cfg.sim_freq_rel_sigma >= 0.0 && cfg.t_c_k > 0.0) {
        return Err(Error::Validation("config: pair_window_s and t_c_k must be positive, sim_freq_rel_sigma non-negative".into()));
    }
    let t_c = ds.superconductor.map(|s| s.t_c_k).unwrap_or(cfg.t_c_k);
    let delta_0 = delta0_from_tc(t_c)?;
    let mut notes = vec![
        "loss fits are done in ln Q_int".to_string(),
        "nonlinear traces are flagged by a residual and phase-monotonicity screen".to_string(),
        "λ from the thin-film coth model; finite-thickness corrections not included".to_string(),
    ];

    // S21 and loss, one resonator at a time
    let with_traces: Vec<&str> = ds.traces.iter().filter(|(_, v)| !v.is_empty()).map(|(k, _)| k.as_str()).collect();
    let resonators: Vec<ResonatorReport> = par_map(&with_traces, |id| resonator_stage(ds, id, cfg, delta_0));

    // kinetic inductance
    let kinetic_recs: Vec<_> = ds.resonators.iter().filter(|r| r.f_r_sim.is_some() && r.f_r_meas.is_some() && r.l_g.is_some()).collect();
    let sheets: Vec<SheetReport> = par_map(&kinetic_recs, |r| sheet_stage(ds, r, cfg));
    let points: Vec<(f64, Estimate)> = sheets.iter().filter_map(|s| s.l_k_sq_h.get().map(|l| (s.thickness_m, *l))).collect();
    let lambda = Stage::from_result(kinetic::fit_lambda(&points));
    let lambda_dirty_m = Stage::from_result(match ds.superconductor {
        Some(s) => kinetic::lambda_dirty_from_tc(Estimate::new(s.rho_n_ohm_m, s.rho_n_sigma_ohm_m), Estimate::new(s.t_c_k, s.t_c_sigma_k)),
        None => Err(Error::Validation("no superconductor.json".into())),
    });

    // surface loss from the reliable Q_TLS0 values
    let mut inputs = Vec::new();
    for rec in &ds.resonators {
        let Some(p_ms) = rec.p_ms else { continue };
        let fitted = resonators
            .iter()
            .find(|r| r.id == rec.id)
            .and_then(|r| r.loss.get())
            .map(|l| (l.fit.q_tls0_reliable, l.fit.q_tls0));
        match (fitted, rec.q_tls0) {
            (Some((true, q)), _) => inputs.push((rec.id.clone(), p_ms, q)),
            (Some((false, _)), _) => {}
            (None, Some(q)) => inputs.push((rec.id.clone(), p_ms, q)),
            (None, None) => {}
        }
    }
    let tan_delta = Stage::from_result(surface::fit_tan_delta(&inputs.iter().map(|(_, p, q)| (*p, *q)).collect::<Vec<_>>()));
    let oxide_thickness_m = ds.xps.as_ref().map(|x| Stage::from_result(surface::oxide_thickness(x)));

    let qubits: Vec<QubitReport> = par_map(&ds.qubits, |q| qubit_stage(ds, q, cfg));

    let mut failures = Vec::new();
    for r in &resonators {
        for t in &r.traces {
            if let Some(e) = &t.fit.error {
                failures.push(format!("fit-s21 {}/{}: {e}", r.id, t.name));
            }
        }
        if let Some(e) = &r.loss.error {
            failures.push(format!("fit-loss {}: {e}", r.id));
        }
    }
    for s in &sheets {
        if let Some(e) = s.g_factor.error.as_ref().or(s.l_k_sq_h.error.as_ref()) {
            failures.push(format!("kinetic {}: {e}", s.id));
        }
    }
    if let Some(e) = &lambda.error {
        failures.push(format!("fit-lambda: {e}"));
    }
    if let Some(e) = &tan_delta.error {
        failures.push(format!("fit-tandelta: {e}"));
    }
    if let Some(Stage { error: Some(e), .. }) = &oxide_thickness_m {
        failures.push(format!("oxide: {e}"));
    }
    for q in &qubits {
        if let Some(e) = &q.stats.error {
            failures.push(format!("fit-qubit {}: {e}", q.id));
        }
    }
    let rejected: usize = resonators.iter().flat_map(|r| &r.traces).filter(|t| t.fit.get().is_some_and(|f| !f.accepted)).count();
    if rejected > 0 {
        notes.push(format!("{rejected} trace(s) rejected by the nonlinearity screen"));
    }

    Ok(Report {
        config: cfg.clone(),
        resonators,
        kinetic: KineticReport { sheets, lambda, lambda_dirty_m },
        surface: SurfaceReport { inputs, tan_delta, oxide_thickness_m },
        qubits,
        failures,
        notes,
    })
}

fn est(e: &Estimate, scale: f64, unit: &str) -> String {
    format!("{:.4} ± {:.4} {unit}", e.value * scale, e.sigma * scale)
}

/// Plain-text digest of a report.
pub fn summary_text(r: &Report) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Resonator loss");
    for res in &r.resonators {
        let accepted = res.traces.iter().filter(|t| t.fit.get().is_some_and(|f| f.accepted)).count();
        let _ = write!(s, "  {:<18} traces {accepted}/{}", res.id, res.traces.len());
        match res.loss.get() {
            Some(l) => {
                let flag = |ok: bool| if ok { "" } else { " (unreliable)" };
                let _ = writeln!(
                    s,
                    "  Q_TLS0 {}{}  Q_other {}{}",
                    est(&l.fit.q_tls0, 1e-6, "e6"),
                    flag(l.fit.q_tls0_reliable),
                    est(&l.fit.q_other, 1e-6, "e6"),
                    flag(l.fit.q_other_reliable)
                );
            }
            None => {
                let _ = writeln!(s, "  loss fit failed");
            }
        }
    }
    let _ = writeln!(s, "Kinetic inductance");
    let _ = writeln!(s, "  sheets fitted       {}/{}", r.kinetic.sheets.iter().filter(|x| x.l_k_sq_h.ok).count(), r.kinetic.sheets.len());
    match r.kinetic.lambda.get() {
        Some(l) => {
            let _ = writeln!(s, "  lambda              {}", est(&l.lambda, 1e6, "um"));
            let _ = writeln!(s, "  bulk L_k/sq         {}", est(&l.l_bulk, 1e12, "pH"));
        }
        None => {
            let _ = writeln!(s, "  lambda              failed");
        }
    }
    if let Some(l) = r.kinetic.lambda_dirty_m.get() {
        let _ = writeln!(s, "  lambda (dirty)      {}", est(l, 1e6, "um"));
    }
    let _ = writeln!(s, "Surface loss");
    match r.surface.tan_delta.get() {
        Some(t) => {
            let _ = writeln!(s, "  tan delta           {} from {} point(s)", est(&t.tan_delta, 1e3, "e-3"), t.points.len() - t.excluded.len());
        }
        None => {
            let _ = writeln!(s, "  tan delta           failed");
        }
    }
    if let Some(t) = r.surface.oxide_thickness_m.as_ref().and_then(Stage::get) {
        let _ = writeln!(s, "  oxide thickness     {:.3} nm", t * 1e9);
    }
    let _ = writeln!(s, "Qubits");
    for q in &r.qubits {
        let us = |t: &Option<crate::model::TimeStat>| match t {
            Some(t) => format!("{:.0} ± {:.0} (N={})", t.mean * 1e6, t.sd * 1e6, t.count),
            None => "-".to_string(),
        };
        let _ = writeln!(
            s,
            "  Q{:<3} T1 {}  T2R {}  T2E {}  Tphi {} us",
            q.id,
            us(&q.summary.t1),
            us(&q.summary.t2r),
            us(&q.summary.t2e),
            us(&q.summary.tphi)
        );
        if let (Some(qb), Some(ej)) = (q.q_bar, q.e_j_over_e_c.get()) {
            let _ = writeln!(s, "       Q_bar {}  E_J/E_C {:.1}", est(&qb, 1e-6, "e6"), ej);
        }
    }
    if !r.failures.is_empty() {
        let _ = writeln!(s, "Failures");
        for f in &r.failures {
            let _ = writeln!(s, "  {f}");
        }
    }
    s
}

/// Writes `report.json` and `summary.txt` into `dir`.
pub fn write_bundle(report: &Report, dir: &Path) -> Result<()> {
    io::write_json(&dir.join("report.json"), report)?;
    io::write_text(&dir.join("summary.txt"), &summary_text(report))
}
