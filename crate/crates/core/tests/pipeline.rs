use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use romkit::pipeline::config::PipelineConfig;
use romkit::pipeline::{self, compare, load_bundle, offline, run_online, time_average, OnlineRequest};
use romkit::RomError;

const SMALL: &str = "
# one pulse period recorded after one period of spin-up
nx = 32
ny = 8
dt = 0.01
t_end = 1.2
record_start = 0.6
stride = 2
modes_u = 3
modes_p = 3
sweep = 1-3
nn_epochs = 1500
timing_reps = 2
";

/// SMALL with the keys in `extra` replaced.
fn small(extra: &str) -> PipelineConfig {
    let key = |l: &str| l.split('=').next().unwrap().trim().to_string();
    let over: Vec<String> = extra.lines().filter(|l| l.contains('=')).map(key).collect();
    let base: Vec<&str> = SMALL
        .lines()
        .filter(|l| !l.contains('=') || !over.contains(&key(l)))
        .collect();
    PipelineConfig::from_text(&format!("{}\n{extra}", base.join("\n")), None).unwrap()
}

/// Relative path -> bytes, skipping the report directory.
fn contents(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
            if rel == "report" {
                continue;
            }
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

#[test]
fn bundle_round_trip_and_rerun_identity() {
    let cfg = small("");
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let out = offline(&cfg, &a).unwrap();
    offline(&cfg, &b).unwrap();

    let (ca, cb) = (contents(&a), contents(&b));
    assert!(ca.contains_key("rom.json") && ca.contains_key("operators.bin"));
    assert_eq!(ca.keys().collect::<Vec<_>>(), cb.keys().collect::<Vec<_>>());
    for (k, v) in &ca {
        assert!(cb[k] == *v, "{k} differs between reruns");
    }

    let loaded = load_bundle(&a).unwrap();
    assert_eq!(loaded.config, cfg);
    assert_eq!(loaded.model, out.model);
    assert_eq!(loaded.reference, out.reference);
    assert_eq!(loaded.fom_seconds, Some(out.report.fom_seconds));

    // stage timings
    let csv = fs::read_to_string(a.join("report/timings.csv")).unwrap();
    let rows: BTreeMap<&str, f64> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let (s, t) = l.split_once(',').unwrap();
            (s, t.parse().unwrap())
        })
        .collect();
    for stage in [
        "fom",
        "lifting",
        "pod",
        "nn",
        "operators",
        "validation",
        "rom_online",
        "sweep",
    ] {
        assert!(rows.get(stage).is_some_and(|t| *t > 0.0), "stage {stage}: {csv}");
    }
    let errors = fs::read_to_string(a.join("report/errors.csv")).unwrap();
    assert_eq!(errors.lines().next(), Some("t,err_u,err_p,proj_u,proj_p"));
    assert_eq!(errors.lines().count(), out.reference.len() + 1);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("report/report.json")).unwrap()).unwrap();
    assert!(json["speedup"].as_f64().unwrap() > 0.0);
    assert_eq!(json["details"]["nn"]["reference_defaults"]["neurons"], 150);
}

#[test]
fn online_reproduces_offline_validation() {
    let cfg = small("");
    let tmp = tempfile::tempdir().unwrap();
    let out = offline(&cfg, tmp.path().join("b").as_path()).unwrap();
    let bundle = load_bundle(&tmp.path().join("b")).unwrap();

    let req = OnlineRequest {
        times: Some(out.reference.times.clone()),
        pressure: true,
        ..Default::default()
    };
    let on = run_online(&bundle, &req).unwrap();
    assert_eq!(on.report.errors.len(), out.report.errors.len());
    for (x, y) in on.report.errors.iter().zip(&out.report.errors) {
        for (p, q) in [
            (x.err_u, y.err_u),
            (x.err_p, y.err_p),
            (x.proj_u, y.proj_u),
            (x.proj_p, y.proj_p),
        ] {
            assert!((p - q).abs() <= 1e-12 * q.abs().max(1e-300), "{p} vs {q}");
        }
    }

    // training-time subset, default grid and refined step all run
    let train = OnlineRequest {
        times: Some(out.training.times.clone()),
        ..Default::default()
    };
    assert_eq!(
        run_online(&bundle, &train).unwrap().report.errors.len(),
        out.training.len()
    );
    let refined = OnlineRequest {
        dt_r: Some(cfg.dt_r / 2.0),
        ..Default::default()
    };
    let r = run_online(&bundle, &refined).unwrap();
    assert_eq!(r.set.len(), 2 * (out.reference.len() - 1) + 1);
    assert_eq!(r.report.errors.len(), out.reference.len());

    // up to 10% past the window is allowed, further is refused
    let end = *out.reference.times.last().unwrap();
    let span = end - out.reference.times[0];
    let near = OnlineRequest {
        times: Some(vec![end, end + 0.05 * span]),
        ..Default::default()
    };
    assert!(run_online(&bundle, &near).is_ok());
    let far = OnlineRequest {
        times: Some(vec![end, end + 0.2 * span]),
        ..Default::default()
    };
    assert!(matches!(run_online(&bundle, &far), Err(RomError::Argument(_))));
}

#[test]
fn velocity_only_bundle_refuses_pressure() {
    let cfg = small("modes_p = 0\nsupremizers = false\nsweep = 1,2");
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("v");
    let out = offline(&cfg, &dir).unwrap();
    assert!(out.model.velocity_only());
    let rom: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("rom.json")).unwrap()).unwrap();
    assert_eq!(rom["velocity_only"], true);

    let bundle = load_bundle(&dir).unwrap();
    let ask = OnlineRequest {
        pressure: true,
        ..Default::default()
    };
    assert!(matches!(run_online(&bundle, &ask), Err(RomError::Argument(_))));
    let ok = run_online(&bundle, &OnlineRequest::default()).unwrap();
    assert!(ok.report.errors.iter().all(|e| e.err_p.is_nan() && e.err_u.is_finite()));
}

#[test]
fn two_outlets_get_one_network_each() {
    let cfg = small("outlets = 2\nny = 8");
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("two");
    let out = offline(&cfg, &dir).unwrap();
    assert_eq!(out.nn.len(), 2);
    assert_eq!(out.model.ops.n_out, 2);
    assert!(dir.join("nn_0.json").exists() && dir.join("nn_1.json").exists());
    let m = out.report.mean();
    assert!(m.err_u.is_finite() && m.err_p.is_finite());
}

#[test]
fn failures_leave_no_bundle() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("x");
    let cfg = small("modes_u = 500");
    let err = offline(&cfg, &dir).unwrap_err();
    assert!(matches!(err.root(), RomError::Rank(_)), "{err:?}");
    assert!(format!("{err}").contains("pod"));
    assert_eq!(err.exit_code(), 3);
    assert!(!dir.exists());
    assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 0);
}

#[test]
fn version_mismatch_is_a_format_error() {
    let cfg = small("");
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("b");
    offline(&cfg, &dir).unwrap();
    let path = dir.join("rom.json");
    let text = fs::read_to_string(&path)
        .unwrap()
        .replace(pipeline::BUNDLE_FORMAT, "romkit-bundle/0");
    fs::write(&path, text).unwrap();
    assert!(matches!(load_bundle(&dir), Err(RomError::Format(_))));
}

#[test]
fn compare_identities() {
    let cfg = small("");
    let out = pipeline::run_offline(&cfg).unwrap();
    let r = &out.reference;
    let rows = compare(r, r, &out.model).unwrap();
    assert!(rows.iter().all(|e| e.err_u == 0.0 && e.err_p == 0.0));
    // reduced errors are never below the best approximation
    for e in &out.report.errors {
        assert!(e.err_u >= e.proj_u * (1.0 - 1e-9));
    }
    let avg = time_average(&rows);
    assert!(avg.proj_u > 0.0);

    let shifted = r.select(&(1..r.len()).collect::<Vec<_>>());
    let head = r.select(&(0..r.len() - 1).collect::<Vec<_>>());
    assert!(matches!(compare(&head, &shifted, &out.model), Err(RomError::Shape(_))));
    assert!(matches!(compare(r, &head, &out.model), Err(RomError::Shape(_))));
}
