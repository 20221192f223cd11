use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn spillover(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spillover"))
        .args(args)
        .env_remove("SPILLOVER_WORKERS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = spillover(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

fn json(path: &str) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Output digests recorded in a manifest, by file name.
fn output_digests(manifest: &str) -> Vec<(String, String)> {
    json(manifest)["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| (o["path"].as_str().unwrap().to_string(), o["sha256"].as_str().unwrap().to_string()))
        .collect()
}

#[test]
fn simulate_then_fit_produces_a_parameter_table() {
    let d = TempDir::new().unwrap();
    let sim = p(&d, "sim.csv");
    ok(&["simulate", "dsdm", "--n", "30", "--t", "12", "--weights", "ring", "--seed", "3", "--out", &sim]);
    assert!(Path::new(&p(&d, "sim.truth.json")).exists());
    let truth = json(&p(&d, "sim.truth.json"));
    assert_eq!(truth["rho"], 0.4);

    let fit = p(&d, "fit.json");
    ok(&[
        "dsdm",
        "--panel",
        &sim,
        "--weights",
        &p(&d, "sim.weights.csv"),
        "--estimator",
        "mle",
        "--out",
        &fit,
    ]);
    let table = fs::read_to_string(p(&d, "fit.params.csv")).unwrap();
    let names: Vec<&str> = table.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    for name in ["tau", "rho", "eta", "beta", "theta"] {
        assert!(names.contains(&name), "{name} missing from {table}");
    }
    let manifest = json(&p(&d, "fit.manifest.json"));
    assert_eq!(manifest["command"], "dsdm");
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);

    let eff = p(&d, "eff.json");
    ok(&["effects", "--fit", &fit, "--reps", "100", "--out", &eff]);
    let rows = json(&eff)["rows"].as_array().unwrap().clone();
    assert_eq!(rows.len(), 4);
    let direct = rows[0]["estimate"].as_f64().unwrap();
    let indirect = rows[1]["estimate"].as_f64().unwrap();
    let total = rows[2]["estimate"].as_f64().unwrap();
    assert!((direct + indirect - total).abs() < 1e-12);
}

#[test]
fn reruns_are_byte_identical() {
    let d = TempDir::new().unwrap();
    let sim = p(&d, "sim.csv");
    ok(&["simulate", "sdid", "--n", "24", "--t", "14", "--effect", "1", "--share", "0.3", "--out", &sim]);
    let run = |tag: &str, workers: &str| {
        let out = p(&d, &format!("sdid_{tag}.json"));
        ok(&["--workers", workers, "sdid", "--panel", &sim, "--bootstrap", "30", "--out", &out]);
        output_digests(&p(&d, &format!("sdid_{tag}.manifest.json")))
            .into_iter()
            .map(|(name, sha)| (name.replacen(tag, "", 1), sha))
            .collect::<Vec<_>>()
    };
    let a = run("a", "1");
    let b = run("b", "1");
    let c = run("c", "2");
    assert_eq!(a.len(), 4);
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn explosive_rho_is_rejected_with_the_interval() {
    let d = TempDir::new().unwrap();
    let out = spillover(&["simulate", "dsdm", "--rho", "1.5", "--out", &p(&d, "x.csv")]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("[simulate]"), "{err}");
    assert!(err.contains("rho = 1.5") && err.contains("interval"), "{err}");
    assert!(!d.path().join("x.csv").exists());
}

#[test]
fn missing_input_names_the_module() {
    let d = TempDir::new().unwrap();
    let out = spillover(&["weights", "--panel", &p(&d, "nope.csv"), "--out", &p(&d, "w.csv")]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("spillover error [spatial_weights]"));
    let out = spillover(&["dsdm", "--bogus"]);
    assert!(!out.status.success());
}

#[test]
fn help_documents_every_subcommand() {
    let out = ok(&["--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["ingest", "weights", "dsdm", "effects", "sdid", "netrisk", "simulate", "placebo"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
    assert!(text.contains("SPILLOVER_WORKERS"));
    let out = ok(&["sdid", "--help"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("[default: 200]"));
}

#[test]
fn ingest_builds_treatment_from_documents() {
    let d = TempDir::new().unwrap();
    let raw = p(&d, "raw.csv");
    let mut text = String::from("entity,quarter,roa,roe,log_assets\n");
    for (e, size) in [("A", 10.0), ("B", 11.0), ("C", 12.0)] {
        for q in ["2020Q1", "2020Q2", "2020Q3", "2020Q4"] {
            text.push_str(&format!("{e},{q},0.01,0.1,{size}\n"));
        }
    }
    fs::write(&raw, text).unwrap();
    let docs = p(&d, "docs.csv");
    fs::write(
        &docs,
        "entity,quarter,text\nA,2020Q3,We adopted generative AI tools\nC,2020Q1,a ChatGPT pilot\nZ,2020Q1,unknown bank\n",
    )
    .unwrap();
    let out = p(&d, "panel.csv");
    ok(&["ingest", "--input", &raw, "--documents", &docs, "--earliest", "2020Q2", "--out", &out]);
    let panel = fs::read_to_string(&out).unwrap();
    let treat: Vec<String> = panel
        .lines()
        .skip(1)
        .filter(|l| l.starts_with("A,"))
        .map(|l| l.split(',').nth(6).unwrap().to_string())
        .collect();
    assert_eq!(panel.lines().next().unwrap(), "entity,quarter,log_assets,mentions,roa,roe,treatment");
    assert_eq!(treat, ["0", "0", "1", "1"]);
    let report = json(&p(&d, "panel.report.json"));
    assert_eq!(report["sdid_excluded"], serde_json::json!(["C"]));
    assert!(d.path().join("panel.missing.csv").exists());
    // inputs are left untouched
    assert!(fs::read_to_string(&raw).unwrap().starts_with("entity,quarter,roa"));
}

#[test]
fn event_study_placebo_and_netrisk_write_their_tables() {
    let d = TempDir::new().unwrap();
    let sim = p(&d, "st.csv");
    ok(&[
        "simulate", "sdid", "--n", "40", "--t", "20", "--effect", "1", "--share", "0.3", "--treatment", "staggered",
        "--out", &sim,
    ]);
    let es = p(&d, "es.json");
    ok(&["sdid", "event-study", "--panel", &sim, "--bootstrap", "20", "--horizons", "-2:2", "--out", &es]);
    let series = fs::read_to_string(p(&d, "es.series.csv")).unwrap();
    assert_eq!(series.lines().next().unwrap(), "horizon,att,se,ci_lower,ci_upper,n_treated,n_cohorts");
    assert_eq!(series.lines().count(), 6);

    let sim = p(&d, "s.csv");
    ok(&["simulate", "sdid", "--n", "30", "--t", "16", "--effect", "1", "--share", "0.3", "--out", &sim]);
    let pl = p(&d, "pl.json");
    ok(&["placebo", "--panel", &sim, "--random", "--reps", "100", "--bootstrap", "0", "--out", &pl]);
    let v = json(&pl);
    assert_eq!(v["design"], "random");
    assert_eq!(v["distribution"]["draws"].as_array().unwrap().len(), 100);
    let out = spillover(&["sdid", "placebo", "--panel", &sim, "--out", &p(&d, "none.json")]);
    assert!(!out.status.success());

    let net_panel = p(&d, "n.csv");
    ok(&["simulate", "dsdm", "--n", "20", "--t", "8", "--out", &net_panel]);
    let net = p(&d, "net.json");
    ok(&["netrisk", "--panel", &net_panel, "--out", &net]);
    let v = json(&net);
    let edges = fs::read_to_string(p(&d, "net.edges.csv")).unwrap();
    assert_eq!(edges.lines().count() as u64 - 1, v["stats"]["edges"].as_u64().unwrap());
    assert!(!v["hub_ids"].as_array().unwrap().is_empty());
}
