use augsearch::depth::load_dataset;
use augsearch::AugmentationSequence;
use augsearch_cli::config::DatasetSize;
use augsearch_cli::{Baseline, PipelineConfig};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn tiny(out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        image_size: 16,
        sim_train: DatasetSize {
            scenes: 5,
            views: 2,
        },
        sim_val: DatasetSize {
            scenes: 3,
            views: 1,
        },
        pseudo_real: DatasetSize {
            scenes: 3,
            views: 1,
        },
        baselines: vec![Baseline::None, Baseline::Handcrafted, Baseline::Learned(2)],
        output_dir: out.to_path_buf(),
        ..PipelineConfig::default()
    };
    cfg.train.epochs = 1;
    cfg.train.eval_epochs_window = 1;
    cfg.search.plateau_patience = 4;
    cfg.search.max_iterations = 50;
    cfg
}

fn write_config(dir: &Path, cfg: &PipelineConfig) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn augsearch(args: &[&str], config: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_augsearch"));
    cmd.args(args)
        .env("RUST_LOG", "warn")
        .env_remove("AUGSEARCH_THREADS");
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Data rows of a CSV, after the hash line and the header.
fn csv_rows(path: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config_sha256="));
    lines.next().unwrap();
    lines.map(str::to_string).collect()
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = augsearch(&["gen-data"], Some(&dir.path().join("nope.json")));
    assert_eq!(missing.status.code(), Some(2));

    let unknown = dir.path().join("unknown.json");
    std::fs::write(&unknown, r#"{"schema_version": 1, "img_size": 32}"#).unwrap();
    let out = augsearch(&["gen-data"], Some(&unknown));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("img_size"), "{}", stderr(&out));

    let version = dir.path().join("version.json");
    std::fs::write(&version, r#"{"schema_version": 7}"#).unwrap();
    assert_eq!(
        augsearch(&["gen-data"], Some(&version)).status.code(),
        Some(2)
    );

    let ok = write_config(dir.path(), &tiny(&dir.path().join("out")));
    let out = Command::new(env!("CARGO_BIN_EXE_augsearch"))
        .args(["gen-data", "--config"])
        .arg(&ok)
        .env("AUGSEARCH_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(augsearch(&["bogus"], None).status.code(), Some(2));
}

#[test]
fn missing_inputs_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &tiny(&dir.path().join("out")));
    let out = augsearch(&["eval-transforms"], Some(&cfg));
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("gen-data"), "{}", stderr(&out));
}

#[test]
fn gen_data_counts_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let cfg = write_config(dir.path(), &tiny(&out_dir));
    assert!(augsearch(&["gen-data"], Some(&cfg)).status.success());
    let read = |name: &str| std::fs::read(out_dir.join(name)).unwrap();
    let first: Vec<_> = ["sim_train.daug", "sim_val.daug", "pseudoreal.daug"]
        .map(read)
        .to_vec();
    assert_eq!(
        load_dataset(&out_dir.join("sim_train.daug")).unwrap().len(),
        10
    );
    assert_eq!(
        load_dataset(&out_dir.join("pseudoreal.daug"))
            .unwrap()
            .len(),
        3
    );
    assert!(augsearch(&["gen-data"], Some(&cfg)).status.success());
    let second: Vec<_> = ["sim_train.daug", "sim_val.daug", "pseudoreal.daug"]
        .map(read)
        .to_vec();
    assert_eq!(first, second);

    // A different global seed changes the data.
    assert!(augsearch(&["gen-data", "--seed", "9"], Some(&cfg))
        .status
        .success());
    assert_ne!(first[0], read("sim_train.daug"));
}

#[test]
fn paper_scale_item_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let mut cfg = tiny(&out_dir);
    cfg.image_size = 16;
    let cfg = write_config(dir.path(), &cfg);
    assert!(augsearch(&["gen-data", "--paper-scale"], Some(&cfg))
        .status
        .success());
    let len = |n: &str| load_dataset(&out_dir.join(n)).unwrap().len();
    assert_eq!(
        (
            len("sim_train.daug"),
            len("sim_val.daug"),
            len("pseudoreal.daug")
        ),
        (2000, 200, 200)
    );
}

#[test]
fn tables_and_search_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let cfg_value = tiny(&out_dir);
    let cfg = write_config(dir.path(), &cfg_value);
    for stage in ["gen-data", "eval-transforms", "search", "compare"] {
        let o = augsearch(&[stage, "--workers", "2"], Some(&cfg));
        assert!(o.status.success(), "{stage}: {}", stderr(&o));
    }
    let hash_line = format!("# config_sha256={}", cfg_value.sha256());
    let table1 = std::fs::read_to_string(out_dir.join("table1.csv")).unwrap();
    assert!(table1.starts_with(&hash_line));
    assert!(table1.lines().nth(1).unwrap() == "kind,magnitude,sim_error,pseudoreal_error");
    let rows = csv_rows(&out_dir.join("table1.csv"));
    assert_eq!(rows.len(), 11);
    assert!(rows[0].starts_with("Identity,-,"));

    let best: AugmentationSequence = std::fs::read_to_string(out_dir.join("best_sequence_k2.txt"))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert_eq!(best.len(), 2);
    let log = csv_rows(&out_dir.join("search_k2.csv"));
    assert!(!log.is_empty() && log.len() <= 50);
    assert!(!out_dir.join("search_k2.csv.partial").exists());
    // Plateau: the last `patience` evaluations did not improve the best.
    let best_col: Vec<f64> = log
        .iter()
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    if log.len() < 50 {
        let tail = &best_col[best_col.len() - 5..];
        assert!(tail.iter().all(|v| *v == tail[0]), "{tail:?}");
    }

    let table2 = csv_rows(&out_dir.join("table2.csv"));
    let names: Vec<&str> = table2
        .iter()
        .map(|r| r.split(',').next().unwrap())
        .collect();
    assert_eq!(names, ["none", "handcrafted", "learned-2"]);
    assert!(table2[2].contains(&best.render()));
}

#[test]
fn preview_pairs_and_parse_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let cfg = write_config(dir.path(), &tiny(&out_dir));
    assert!(augsearch(&["gen-data"], Some(&cfg)).status.success());

    assert!(augsearch(
        &["preview", "--sequence", "none", "--count", "2"],
        Some(&cfg)
    )
    .status
    .success());
    for i in 0..2 {
        let a = std::fs::read(out_dir.join(format!("preview/{i:03}_original.pgm"))).unwrap();
        let b = std::fs::read(out_dir.join(format!("preview/{i:03}_augmented.pgm"))).unwrap();
        assert_eq!(a, b);
    }
    assert!(!out_dir.join("preview/002_original.pgm").exists());

    let o = augsearch(
        &["preview", "--sequence", "Cutout(L,1)&Smudge(H,1)"],
        Some(&cfg),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Smudge"), "{}", stderr(&o));

    let o = augsearch(
        &["preview", "--sequence", "Invert(L,1)", "--count", "1"],
        Some(&cfg),
    );
    assert!(o.status.success());
    let a = std::fs::read(out_dir.join("preview/000_original.pgm")).unwrap();
    let b = std::fs::read(out_dir.join("preview/000_augmented.pgm")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn bc_reports_expert_and_both_policies() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let mut cfg = tiny(&out_dir);
    cfg.bc.demos = 2;
    cfg.bc.trials = 3;
    cfg.bc.learned_length = 1;
    cfg.bc.train.epochs = 1;
    cfg.bc.train.eval_epochs_window = 1;
    let cfg = write_config(dir.path(), &cfg);
    std::fs::create_dir_all(&out_dir).unwrap();
    std::fs::write(out_dir.join("best_sequence_k1.txt"), "Cutout(H,1)\n").unwrap();
    let o = augsearch(&["bc"], Some(&cfg));
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&out_dir.join("table3.csv"));
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0], "expert,-,3,3,3");
    assert!(rows[1].starts_with("none,none,"));
    assert!(rows[2].starts_with("learned,Cutout(H,1),"));
    assert!(out_dir.join("policy_learned_seed0.maug").exists());
}
