//! On-disk dataset layout, loading with validation, and a fully synthetic
//! dataset for end-to-end runs.
//!
//! ```text
//! <root>/
//!   films.json            [{ "id", "thickness_um" }]
//!   resonators.json       resonator registry
//!   qubits.json           qubit registry
//!   superconductor.json   optional: T_c and ρ_n with σ
//!   attenuation.csv       optional: line attenuation vs frequency
//!   xps.json              optional: overlayer intensities
//!   traces/<resonator>/*.csv
//!   inductance/<resonator>.csv
//!   decay/<qubit>.csv
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::loss::{AttenuationChain, LossParams};
use crate::model::{ComplexTrace, QubitRecord, ResonatorKind, ResonatorRecord, TraceMeta};
use crate::reference;
use crate::s21::{plan_hpd_default, ResonanceParams};
use crate::surface::XpsInput;
use crate::synth::{self, Beat, DecayLogScenario, InductanceScenario, InductanceTable, S21Scenario, TimedTrace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Film {
    pub id: String,
    pub thickness_um: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Superconductor {
    pub t_c_k: f64,
    pub t_c_sigma_k: f64,
    pub rho_n_ohm_m: f64,
    pub rho_n_sigma_ohm_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTrace {
    pub name: String,
    pub trace: ComplexTrace,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub films: Vec<Film>,
    pub resonators: Vec<ResonatorRecord>,
    pub qubits: Vec<QubitRecord>,
    pub superconductor: Option<Superconductor>,
    pub attenuation: Option<Vec<(f64, f64)>>,
    pub xps: Option<XpsInput>,
    pub traces: BTreeMap<String, Vec<NamedTrace>>,
    pub inductance: BTreeMap<String, InductanceTable>,
    pub decay: BTreeMap<u32, Vec<TimedTrace>>,
}

fn csv_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    if !dir.is_dir() {
        return Ok(out);
    }
    let entries = std::fs::read_dir(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    for e in entries {
        let p = e.map_err(|e| Error::Io(e.to_string()))?.path();
        if p.extension().is_some_and(|x| x == "csv") {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn subdirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    if !dir.is_dir() {
        return Ok(out);
    }
    let entries = std::fs::read_dir(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    for e in entries {
        let p = e.map_err(|e| Error::Io(e.to_string()))?.path();
        if p.is_dir() {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn in_file<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Parse { line, msg } => Error::Parse { line, msg: format!("{}: {msg}", path.display()) },
        Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn optional_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Option<T>> {
    if path.exists() {
        io::read_json(path).map(Some)
    } else {
        Ok(None)
    }
}

impl Dataset {
    /// Reads every file under `root` and checks the registry invariants.
    pub fn load(root: &Path) -> Result<Self> {
        if !root.is_dir() {
            return Err(Error::Io(format!("{}: dataset root is not a directory", root.display())));
        }
        let mut ds = Dataset {
            films: optional_json(&root.join("films.json"))?.unwrap_or_default(),
            resonators: optional_json(&root.join("resonators.json"))?.unwrap_or_default(),
            qubits: optional_json(&root.join("qubits.json"))?.unwrap_or_default(),
            superconductor: optional_json(&root.join("superconductor.json"))?,
            xps: optional_json(&root.join("xps.json"))?,
            ..Default::default()
        };
        let att = root.join("attenuation.csv");
        if att.exists() {
            let chain = in_file(&att, io::parse_attenuation(&io::read_text(&att)?))?;
            ds.attenuation = Some(chain.table);
        }
        for dir in subdirs(&root.join("traces"))? {
            let id = dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let mut list = Vec::new();
            for f in csv_files(&dir)? {
                let trace = in_file(&f, io::parse_trace(&io::read_text(&f)?))?;
                list.push(NamedTrace { name: stem(&f), trace });
            }
            ds.traces.insert(id, list);
        }
        for f in csv_files(&root.join("inductance"))? {
            let id = stem(&f);
            let table = in_file(&f, io::parse_inductance_table(&io::read_text(&f)?, &id))?;
            ds.inductance.insert(id, table);
        }
        for f in csv_files(&root.join("decay"))? {
            let id: u32 = stem(&f)
                .parse()
                .map_err(|_| Error::Validation(format!("{}: decay log name must be a qubit id", f.display())))?;
            ds.decay.insert(id, in_file(&f, io::parse_decay_log(&io::read_text(&f)?))?);
        }
        ds.validate()?;
        Ok(ds)
    }

    pub fn is_empty(&self) -> bool {
        self.resonators.is_empty() && self.qubits.is_empty()
    }

    /// Registry invariants: unique ids, every referenced record exists,
    /// resonator records pass their own checks.
    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Validation("dataset has no resonators and no qubits".into()));
        }
        let mut films = BTreeSet::new();
        for f in &self.films {
            if !films.insert(f.id.as_str()) {
                return Err(Error::Validation(format!("duplicate film id {}", f.id)));
            }
            if !(f.thickness_um > 0.0) {
                return Err(Error::Validation(format!("film {}: thickness must be positive", f.id)));
            }
        }
        let mut res = BTreeSet::new();
        for r in &self.resonators {
            if !res.insert(r.id.as_str()) {
                return Err(Error::Validation(format!("duplicate resonator id {}", r.id)));
            }
            r.check()?;
        }
        let mut qs = BTreeSet::new();
        for q in &self.qubits {
            if !qs.insert(q.id) {
                return Err(Error::Validation(format!("duplicate qubit id {}", q.id)));
            }
            if !(q.f_q > 0.0 && q.e_c_over_h > 0.0) {
                return Err(Error::Validation(format!("qubit {}: frequencies must be positive", q.id)));
            }
        }
        for id in self.traces.keys().chain(self.inductance.keys()) {
            if !res.contains(id.as_str()) {
                return Err(Error::Validation(format!("data for unknown resonator {id}")));
            }
        }
        for id in self.decay.keys() {
            if !qs.contains(id) {
                return Err(Error::Validation(format!("decay log for unknown qubit {id}")));
            }
        }
        if let Some(t) = &self.attenuation {
            AttenuationChain::new(t.clone())?;
        }
        Ok(())
    }

    pub fn attenuation_chain(&self) -> Option<Result<AttenuationChain>> {
        self.attenuation.as_ref().map(|t| AttenuationChain::new(t.clone()))
    }

    /// Writes the dataset in the layout above, creating `root` if needed.
    pub fn write(&self, root: &Path) -> Result<()> {
        io::write_json(&root.join("films.json"), &self.films)?;
        io::write_json(&root.join("resonators.json"), &self.resonators)?;
        io::write_json(&root.join("qubits.json"), &self.qubits)?;
        if let Some(s) = &self.superconductor {
            io::write_json(&root.join("superconductor.json"), s)?;
        }
        if let Some(x) = &self.xps {
            io::write_json(&root.join("xps.json"), x)?;
        }
        if let Some(t) = &self.attenuation {
            io::write_text(&root.join("attenuation.csv"), &io::format_attenuation(t))?;
        }
        for (id, list) in &self.traces {
            for t in list {
                io::write_text(&root.join("traces").join(id).join(format!("{}.csv", t.name)), &io::format_trace(&t.trace))?;
            }
        }
        for (id, tab) in &self.inductance {
            io::write_text(&root.join("inductance").join(format!("{id}.csv")), &io::format_inductance_table(tab))?;
        }
        for (id, log) in &self.decay {
            io::write_text(&root.join("decay").join(format!("{id}.csv")), &io::format_decay_log(log))?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Synthetic dataset

/// Ground truth behind [`synth_dataset`], kept so tests can score recovery.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetTruth {
    pub lambda_m: f64,
    pub tan_delta: f64,
    /// (resonator id, loss parameters).
    pub loss: Vec<(String, LossParams)>,
    pub oxide_thickness_m: f64,
    /// (qubit id, T1, T2R, T2E) in s.
    pub qubits: Vec<(u32, f64, f64, f64)>,
}

const SYNTH_LAMBDA: f64 = 1.78e-6;
const SYNTH_TAN_DELTA: f64 = 1.6e-3;
const SYNTH_ATTEN_DB: f64 = 70.0;
const SYNTH_T_C: f64 = 0.7;

/// Photon number and Q_int reached at `power_w` on the device, solved
/// jointly since n̄ depends on Q_l and Q_int depends on n̄.
fn self_consistent(params: &LossParams, power_w: f64, t: f64, f_r: f64, q_c: f64, phi: f64, delta_0: f64) -> (f64, f64) {
    let omega = 2.0 * std::f64::consts::PI * f_r;
    let mut q_int = params.q_total(1.0, t, omega, delta_0);
    let mut nbar = 1.0;
    for _ in 0..500 {
        let q_l = 1.0 / (1.0 / q_int + phi.cos() / q_c);
        nbar = crate::loss::photons_from_applied(power_w, f_r, q_l, q_c);
        let next = params.q_total(nbar, t, omega, delta_0);
        let done = (next / q_int - 1.0).abs() < 1e-13;
        // damped: the map can oscillate where Q_TLS rises steeply
        q_int = 0.5 * (q_int + next);
        if done {
            break;
        }
    }
    (nbar, q_int)
}

/// Film registry, inductance sweeps on every film, loss sweeps on a family
/// of surface-participation ratios, and decay logs for three qubits.
pub fn synth_dataset(seed: u64) -> (Dataset, DatasetTruth) {
    let delta_0 = crate::model::delta0_from_tc(SYNTH_T_C).expect("positive T_c");
    let mut ds = Dataset {
        films: reference::FILM_THICKNESS_UM
            .iter()
            .map(|(id, t)| Film { id: id.to_string(), thickness_um: *t })
            .collect(),
        superconductor: Some(Superconductor {
            t_c_k: reference::T_C_K.0,
            t_c_sigma_k: reference::T_C_K.1,
            rho_n_ohm_m: reference::RHO_N_OHM_M.0,
            rho_n_sigma_ohm_m: reference::RHO_N_OHM_M.1,
        }),
        attenuation: Some(vec![(3e9, SYNTH_ATTEN_DB - 2.0), (9e9, SYNTH_ATTEN_DB + 2.0)]),
        xps: Some(XpsInput { i_ox: 2.402770519751739, i_m: 1.0, lambda_eff: 1.51e-9, n_m: 5.43e28, n_ox: 2.24e28 }),
        ..Default::default()
    };

    // kinetic inductance: every film × the CPW family
    let ind = synth::synth_inductance_tables(&InductanceScenario {
        seed,
        lambda: SYNTH_LAMBDA,
        films: synth::reference_film_thicknesses(),
        geometries: synth::default_cpw_family(),
        l_k_rel_sigma: 0.02,
    });
    for (rec, tab) in ind.resonators.into_iter().zip(ind.tables) {
        ds.inductance.insert(rec.id.clone(), tab);
        ds.resonators.push(rec);
    }

    // loss sweeps: TLS limit set by p_MS·tanδ
    let chain = AttenuationChain::new(ds.attenuation.clone().expect("set above")).expect("valid table");
    let mut truth_loss = Vec::new();
    let loss_devices = [(2.0, 18.8e-4, 4.35e9, 3.0e5), (6.0, 7.89e-4, 5.21e9, 4.0e5), (12.0, 4.47e-4, 6.44e9, 6.0e5), (16.0, 3.52e-4, 6.91e9, 8.0e5)];
    let powers_dbm = [-100.0, -90.0, -80.0, -70.0, -60.0, -50.0, -40.0, -30.0];
    let temps = [0.012, 0.1, 0.14, 0.18];
    for (k, &(gap, p_ms, f_r, q_c)) in loss_devices.iter().enumerate() {
        let id = ResonatorRecord::label("F8", ResonatorKind::Cpw, gap);
        let id = format!("{id}-loss");
        let params = LossParams {
            q_tls0: 1.0 / (p_ms * SYNTH_TAN_DELTA),
            d: 2e3,
            beta1: 1.0,
            beta2: 0.8,
            a_qp: Some(3e3),
            q_other: 4e6,
        };
        let mut traces = Vec::new();
        for (ti, &t) in temps.iter().enumerate() {
            for (pi, &p_dbm) in powers_dbm.iter().enumerate() {
                let p_w = crate::loss::applied_power_w(p_dbm, chain.atten_db(f_r).expect("in range"));
                let phi = 0.15;
                let (_, q_int) = self_consistent(&params, p_w, t, f_r, q_c, phi, delta_0);
                let q_l = 1.0 / (1.0 / q_int + phi.cos() / q_c);
                let truth = ResonanceParams { amplitude: 0.7, bg_phase: 0.3, delay: 40e-9, q_l, q_c_mag: q_c, phi, f_r };
                let plan = plan_hpd_default(f_r, q_l).expect("positive seeds");
                let sc = S21Scenario {
                    seed: seed ^ ((k as u64) << 32 | (ti as u64) << 16 | pi as u64),
                    truth,
                    freqs: plan.freqs,
                    noise_sigma: 2e-3,
                    duffing: None,
                    meta: TraceMeta { power_dbm: Some(p_dbm), temperature_k: Some(t) },
                };
                traces.push(NamedTrace { name: format!("t{ti}_p{pi}"), trace: synth::synth_s21(&sc) });
            }
        }
        ds.traces.insert(id.clone(), traces);
        ds.resonators.push(ResonatorRecord {
            id: id.clone(),
            kind: ResonatorKind::Cpw,
            gap_um: gap,
            thickness_um: 0.265,
            f_r_sim: None,
            f_r_meas: None,
            l_g: None,
            g_factor: None,
            p_ms: Some(p_ms),
            p_ma: None,
            p_sa: None,
            q_c_mag: Some(q_c),
            q_tls0: None,
            q_other: None,
        });
        truth_loss.push((id, params));
    }

    // qubits: design values from the tables, steady time constants
    let mut truth_q = Vec::new();
    for (n, qid) in [2u32, 4, 5].into_iter().enumerate() {
        let d = reference::QUBIT_DESIGN[(qid - 1) as usize];
        let perf = reference::QUBIT_PERFORMANCE[(qid - 1) as usize];
        let (t1, t2r, t2e) = (perf.t1_us.mean * 1e-6, perf.t2r_us.mean * 1e-6, perf.t2e_us.mean * 1e-6);
        let mut sc = DecayLogScenario::steady(seed.wrapping_add(100 + n as u64), t1, t2r, t2e, 12);
        if qid == 2 {
            sc.beats = vec![
                Beat { freq_hz: 17e3, amplitude: 0.25, phase: 0.0 },
                Beat { freq_hz: 95e3, amplitude: 0.2, phase: 0.0 },
            ];
        }
        ds.decay.insert(qid, synth::synth_decay_log(&sc));
        ds.qubits.push(QubitRecord {
            id: qid,
            f_q: d.f_q_ghz * 1e9,
            f_r: d.f_r_ghz * 1e9,
            chi_mag: d.chi_mhz * 1e6,
            kappa_r: d.kappa_mhz * 1e6,
            e_c_over_h: d.e_c_mhz * 1e6,
            stats: Default::default(),
        });
        truth_q.push((qid, t1, t2r, t2e));
    }

    let truth = DatasetTruth {
        lambda_m: SYNTH_LAMBDA,
        tan_delta: SYNTH_TAN_DELTA,
        loss: truth_loss,
        oxide_thickness_m: crate::surface::oxide_thickness(ds.xps.as_ref().expect("set above")).expect("valid input"),
        qubits: truth_q,
    };
    (ds, truth)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmpdir(tag: &str) -> PathBuf {
        let d = std::env::temp_dir().join(format!("scqa-ds-{tag}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&d);
        d
    }

    #[test]
    fn synthetic_dataset_round_trips_through_disk() {
        let (ds, _) = synth_dataset(1);
        ds.validate().unwrap();
        let dir = tmpdir("rt");
        ds.write(&dir).unwrap();
        let back = Dataset::load(&dir).unwrap();
        assert_eq!(back.films, ds.films);
        assert_eq!(back.resonators, ds.resonators);
        assert_eq!(back.qubits, ds.qubits);
        assert_eq!(back.superconductor, ds.superconductor);
        assert_eq!(back.attenuation, ds.attenuation);
        assert_eq!(back.xps, ds.xps);
        assert_eq!(back.inductance, ds.inductance);
        assert_eq!(back.decay, ds.decay);
        assert_eq!(back.traces, ds.traces);
        let dir2 = tmpdir("rt2");
        back.write(&dir2).unwrap();
        for rel in ["resonators.json", "traces/F8-CPW-2-loss/t0_p0.csv", "decay/2.csv", "attenuation.csv"] {
            assert_eq!(std::fs::read(dir.join(rel)).unwrap(), std::fs::read(dir2.join(rel)).unwrap(), "{rel}");
        }
        let _ = std::fs::remove_dir_all(dir);
        let _ = std::fs::remove_dir_all(dir2);
    }

    #[test]
    fn empty_and_inconsistent_datasets_rejected() {
        assert!(matches!(Dataset::default().validate(), Err(Error::Validation(_))));
        let (mut ds, _) = synth_dataset(1);
        ds.resonators.push(ds.resonators[0].clone());
        assert!(ds.validate().is_err());
        let (mut ds, _) = synth_dataset(1);
        ds.decay.insert(99, Vec::new());
        assert!(ds.validate().is_err());
        assert!(matches!(Dataset::load(Path::new("/nonexistent/scqa")), Err(Error::Io(_))));
    }

    #[test]
    fn photon_numbers_span_the_sweep() {
        let (ds, truth) = synth_dataset(0);
        let chain = ds.attenuation_chain().unwrap().unwrap();
        let p = &truth.loss[0].1;
        let d0 = crate::model::delta0_from_tc(SYNTH_T_C).unwrap();
        let at = |dbm: f64| self_consistent(p, crate::loss::applied_power_w(dbm, chain.atten_db(4.35e9).unwrap()), 0.012, 4.35e9, 3e5, 0.15, d0);
        let (lo, hi) = (at(-100.0).0, at(-30.0).0);
        assert!(lo < 1.0 && hi > 1e5, "{lo} {hi}");
        let q_hi = at(-30.0).1;
        let omega = 2.0 * std::f64::consts::PI * 4.35e9;
        assert!((p.q_total(hi, 0.012, omega, d0) / q_hi - 1.0).abs() < 1e-9);
    }
}
