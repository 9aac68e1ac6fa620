//! Black-box tests of the `lfdproto` binary: output shapes, determinism,
//! checkpoint resume, and the identity-vs-local-Fisher accuracy ordering.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lfdproto"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "command {:?} failed:\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

/// Class separation along coordinate 0, heavy noise along 1 and 2.
const ANISO_SYNTH: &str = r#"
[synthetic]
dim = 3
classes = 2
shots = 8
queries = 10
mean = [0.0, 0.0, 0.0]
sigma_pop = [[9.0, 0.0, 0.0], [0.0, 0.01, 0.0], [0.0, 0.0, 0.01]]
sigma_within = [[0.2, 0.0, 0.0], [0.0, 4.0, 0.0], [0.0, 0.0, 4.0]]
"#;

fn jsonl_lines(path: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn episode_outputs_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "config.toml",
        &format!("{ANISO_SYNTH}\n[episode]\ncount = 12\n"),
    );
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        run_ok(&[
            "episode",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "7",
            "--workers",
            "2",
            "--out",
            out.to_str().unwrap(),
            "--extractor",
            "lfda-shared",
        ]);
    }
    // Identical runs must agree byte-for-byte on every record; the summary
    // line may only differ in the embedded output path.
    let mut lines_a = jsonl_lines(&out_a.join("episodes.jsonl"));
    let mut lines_b = jsonl_lines(&out_b.join("episodes.jsonl"));
    assert_eq!(lines_a.len(), lines_b.len());
    for v in [&mut lines_a, &mut lines_b] {
        let n = v.len();
        v[n - 1]["config"]["out"] = serde_json::Value::Null;
    }
    assert_eq!(lines_a, lines_b, "same config and seed must reproduce outputs");

    let lines = jsonl_lines(&out_a.join("episodes.jsonl"));
    assert_eq!(lines.len(), 13, "12 records plus a summary line");
    for (i, rec) in lines[..12].iter().enumerate() {
        assert_eq!(rec["episode_id"], i);
        assert_eq!(rec["extractor"], "lfda-shared");
        assert_eq!(rec["seed"], 7);
        assert!(rec["accuracy"].as_f64().unwrap() >= 0.0);
    }
    let summary = &lines[12];
    assert_eq!(summary["summary"]["episodes"], 12);
    assert_eq!(summary["config"]["seed"], 7);
    assert_eq!(summary["config"]["command"], "episode");
}

#[test]
fn episode_reads_stored_dataset() {
    use lfdproto::datagen::{FeatureDataset, SyntheticSpec};
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec::gaussian_diag(4, 1, 1, &[4.0, 4.0], &[0.5, 0.5]);
    let ds = FeatureDataset::synthesize(&spec, 30, 11).unwrap();
    let csv = dir.path().join("data.csv");
    ds.write_csv(&csv).unwrap();

    let cfg = write_config(
        dir.path(),
        "config.toml",
        &format!(
            "dataset = {:?}\n[episode]\ncount = 5\nclasses = 3\nshots = 4\nqueries = 6\n",
            csv.to_str().unwrap()
        ),
    );
    let out = dir.path().join("out");
    run_ok(&[
        "episode",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--extractor",
        "identity",
    ]);
    let lines = jsonl_lines(&out.join("episodes.jsonl"));
    assert_eq!(lines.len(), 6);
    assert_eq!(lines[0]["C"], 3);
    assert_eq!(lines[0]["k"], 4);
    assert_eq!(lines[0]["M"], 6);
}

#[test]
fn bound_verify_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "config.toml",
        &format!("dim = 1\n{ANISO_SYNTH}\n[bound]\ntrials = 400\n"),
    );
    let out = dir.path().join("out");
    run_ok(&[
        "bound-verify",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    let payload: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("bound_report.json")).unwrap())
            .unwrap();
    let report = &payload["report"];
    assert_eq!(report["extractor"], "lfda-shared");
    assert_eq!(report["violated"], false);
    assert!(report["mc_risk"].as_f64().unwrap() <= report["bound_rhs"].as_f64().unwrap());
    assert_eq!(payload["config"]["seed"], 5);
}

#[test]
fn cov_ratio_sweep_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "config.toml",
        &format!(
            "dim = 1\n{ANISO_SYNTH}\n[sweep]\nepisodes = 10\nlambda_grid = [0.0, 0.3, 0.6]\nper_class = 60\n"
        ),
    );
    let out = dir.path().join("out");
    run_ok(&[
        "cov-ratio",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "lambda,extractor,trace_ratio,stderr");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3 * 2, "3 lambdas x {{identity, lfda-shared}}");
    assert!(rows.iter().any(|r| r.contains(",identity,")));
    assert!(rows.iter().any(|r| r.contains(",lfda-shared,")));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("sweep.meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["config"]["seed"], 3);

    // Determinism of the CSV bytes.
    let out2 = dir.path().join("out2");
    run_ok(&[
        "cov-ratio",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "3",
        "--out",
        out2.to_str().unwrap(),
    ]);
    assert_eq!(
        std::fs::read(out.join("sweep.csv")).unwrap(),
        std::fs::read(out2.join("sweep.csv")).unwrap()
    );
}

#[test]
fn train_then_resume_matches_single_run() {
    let dir = tempfile::tempdir().unwrap();
    let train_body = |iters: usize, resume: Option<&Path>| {
        let resume_line = resume
            .map(|p| format!("resume = {:?}\n", p.to_str().unwrap()))
            .unwrap_or_default();
        format!(
            "{ANISO_SYNTH}\n[train]\niterations = {iters}\ntasks_per_update = 2\n\
             step_size = 0.005\nvalidation_episodes = 4\n\
             {resume_line}\n[train.embedder]\nkind = \"linear\"\ninput = 3\noutput = 2\n"
        )
    };

    // One 6-iteration run.
    let cfg_full = write_config(dir.path(), "full.toml", &train_body(6, None));
    let out_full = dir.path().join("full");
    run_ok(&[
        "train",
        "--config",
        cfg_full.to_str().unwrap(),
        "--seed",
        "21",
        "--out",
        out_full.to_str().unwrap(),
        "--extractor",
        "lfda-shared",
    ]);

    // Three iterations, then three more resumed from the checkpoint.
    let cfg_half = write_config(dir.path(), "half.toml", &train_body(3, None));
    let out_half = dir.path().join("half");
    run_ok(&[
        "train",
        "--config",
        cfg_half.to_str().unwrap(),
        "--seed",
        "21",
        "--out",
        out_half.to_str().unwrap(),
        "--extractor",
        "lfda-shared",
    ]);
    let ckpt = out_half.join("checkpoint.json");
    let cfg_resume = write_config(dir.path(), "resume.toml", &train_body(3, Some(&ckpt)));
    let out_resume = dir.path().join("resume");
    run_ok(&[
        "train",
        "--config",
        cfg_resume.to_str().unwrap(),
        "--seed",
        "21",
        "--out",
        out_resume.to_str().unwrap(),
        "--extractor",
        "lfda-shared",
    ]);

    let trace = |p: &Path| std::fs::read_to_string(p.join("loss_trace.csv")).unwrap();
    let full_trace = trace(&out_full);
    let mut stitched = trace(&out_half);
    stitched.push_str(
        &trace(&out_resume)
            .strip_prefix("iteration,loss\n")
            .unwrap()
            .to_string(),
    );
    assert_eq!(
        full_trace, stitched,
        "resumed run must continue the exact loss trace"
    );

    let theta = |p: &Path| -> serde_json::Value {
        serde_json::from_str::<serde_json::Value>(
            &std::fs::read_to_string(p.join("checkpoint.json")).unwrap(),
        )
        .unwrap()["theta"]
            .clone()
    };
    assert_eq!(theta(&out_full), theta(&out_resume));
    let final_ckpt: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_resume.join("checkpoint.json")).unwrap())
            .unwrap();
    assert_eq!(final_ckpt["iteration"], 6);
}

#[test]
fn lfda_beats_identity_on_anisotropic_synthetic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "config.toml",
        &format!("dim = 1\nbandwidth = 50.0\n{ANISO_SYNTH}\n[episode]\ncount = 150\n"),
    );
    let mean_accuracy = |extractor: &str| -> f64 {
        let out = dir.path().join(extractor);
        run_ok(&[
            "episode",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "31",
            "--out",
            out.to_str().unwrap(),
            "--extractor",
            extractor,
        ]);
        let lines = jsonl_lines(&out.join("episodes.jsonl"));
        lines.last().unwrap()["summary"]["mean_accuracy"]
            .as_f64()
            .unwrap()
    };
    let id = mean_accuracy("identity");
    let lfda = mean_accuracy("lfda-shared");
    assert!(
        lfda > id,
        "expected the projected episodes to win: lfda {lfda} vs identity {id}"
    );
}

#[test]
fn missing_data_source_fails_cleanly() {
    let out = bin().args(["episode"]).output().unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("error:"), "stderr was: {stderr}");
}
