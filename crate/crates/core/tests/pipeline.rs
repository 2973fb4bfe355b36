use scqa::dataset::{synth_dataset, Dataset};
use scqa::io;
use scqa::pipeline::{run_pipeline, write_bundle, PipelineConfig, Report};

fn within(value: f64, sigma: f64, truth: f64, k: f64) -> bool {
    (value - truth).abs() <= k * sigma
}

fn report_from_disk(seed: u64) -> (Report, scqa::dataset::DatasetTruth) {
    let (ds, truth) = synth_dataset(seed);
    let dir = tempfile::tempdir().unwrap();
    ds.write(dir.path()).unwrap();
    let loaded = Dataset::load(dir.path()).unwrap();
    (run_pipeline(&loaded, &PipelineConfig::default()).unwrap(), truth)
}

#[test]
fn synthetic_dataset_recovers_ground_truth() {
    let (r, truth) = report_from_disk(0);
    assert!(r.failures.is_empty(), "{:?}", r.failures);

    let lambda = r.kinetic.lambda.get().unwrap().lambda;
    assert!(within(lambda.value, lambda.sigma, truth.lambda_m, 3.0), "{lambda:?}");

    let tan = r.surface.tan_delta.get().unwrap().tan_delta;
    assert!(within(tan.value, tan.sigma, truth.tan_delta, 3.0), "{tan:?}");

    for (id, p) in &truth.loss {
        let res = r.resonators.iter().find(|x| &x.id == id).unwrap();
        let fit = &res.loss.get().unwrap().fit;
        assert!(fit.q_tls0_reliable && fit.q_other_reliable, "{id}");
        assert!(within(fit.q_tls0.value, fit.q_tls0.sigma, p.q_tls0, 3.0), "{id}: {:?} vs {}", fit.q_tls0, p.q_tls0);
        assert!(within(fit.q_other.value, fit.q_other.sigma, p.q_other, 3.0), "{id}: {:?}", fit.q_other);
    }

    let t_ox = *r.surface.oxide_thickness_m.as_ref().unwrap().get().unwrap();
    assert!((t_ox - truth.oxide_thickness_m).abs() < 1e-15);

    for (id, t1, t2r, t2e) in &truth.qubits {
        let q = r.qubits.iter().find(|q| q.id == *id).unwrap();
        for (stat, t) in [(q.summary.t1, t1), (q.summary.t2r, t2r), (q.summary.t2e, t2e)] {
            let s = stat.unwrap();
            let se = s.sd / (s.count as f64).sqrt();
            assert!((s.mean - t).abs() <= 4.0 * se.max(0.01 * t), "qubit {id}: {s:?} vs {t}");
        }
    }
}

#[test]
fn missing_attenuation_only_fails_loss_stage() {
    let (ds, _) = synth_dataset(5);
    let dir = tempfile::tempdir().unwrap();
    ds.write(dir.path()).unwrap();
    std::fs::remove_file(dir.path().join("attenuation.csv")).unwrap();
    let r = run_pipeline(&Dataset::load(dir.path()).unwrap(), &PipelineConfig::default()).unwrap();
    assert!(r.resonators.iter().all(|x| !x.loss.ok && x.traces.iter().all(|t| t.fit.ok)));
    assert!(r.kinetic.lambda.ok);
    assert!(r.qubits.iter().all(|q| q.stats.ok));
    // without loss fits the regression has nothing to work with
    assert!(!r.surface.tan_delta.ok);
}

#[test]
fn bundle_files_are_written_and_parse() {
    let (ds, _) = synth_dataset(2);
    let r = run_pipeline(&ds, &PipelineConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_bundle(&r, dir.path()).unwrap();
    let json: serde_json::Value = io::read_json(&dir.path().join("report.json")).unwrap();
    assert!(json["kinetic"]["lambda"]["ok"].as_bool().unwrap());
    assert!(json["qubits"][0]["summary"]["t1"]["mean_s"].is_number());
    let summary = io::read_text(&dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("lambda") && summary.contains("tan delta"));
}

#[test]
fn malformed_trace_reports_file_and_line() {
    let (ds, _) = synth_dataset(1);
    let dir = tempfile::tempdir().unwrap();
    ds.write(dir.path()).unwrap();
    let path = dir.path().join("traces/F8-CPW-2-loss/t0_p0.csv");
    let text = io::read_text(&path).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.swap(5, 6);
    io::write_text(&path, &(lines.join("\n") + "\n")).unwrap();
    let err = Dataset::load(dir.path()).unwrap_err().to_string();
    assert!(err.contains("t0_p0.csv") && err.contains("line"), "{err}");
}
