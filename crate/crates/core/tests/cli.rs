use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use umner::corpus::{parse_dataset, parse_dataset_file, Labels};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn umner<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_umner")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        if entry.file_type().unwrap().is_file() {
            fs::copy(entry.path(), to.join(entry.file_name())).unwrap();
        }
    }
}

/// Copy of the overfit fixture in a temp dir, so outputs land there.
fn overfit_workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let src = fixtures().join("overfit");
    fs::copy(src.join("train.txt"), dir.path().join("train.txt")).unwrap();
    fs::copy(src.join("overfit.conf"), dir.path().join("overfit.conf")).unwrap();
    copy_dir(&src.join("features"), &dir.path().join("features"));
    dir
}

#[test]
fn kappa_prints_four_decimals() {
    let k = fixtures().join("kappa");
    for (file, want) in [("annotation_agreement.csv", "0.7809"), ("identity.csv", "1.0000"), ("chance.csv", "0.0000")] {
        let o = umner(["kappa", "--matrix"].map(Into::into).into_iter().chain([k.join(file).into_os_string()]));
        assert!(o.status.success(), "{file}: {}", stderr(&o));
        assert_eq!(stdout(&o).trim(), want, "{file}");
    }
}

#[test]
fn kappa_rejects_malformed_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "1,2\n3,x\n").unwrap();
    let o = umner([Path::new("kappa").as_os_str(), "--matrix".as_ref(), path.as_os_str()]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error[parse]: "), "{}", stderr(&o));
}

#[test]
fn stats_requires_a_file() {
    let o = umner(["stats"]);
    assert!(!o.status.success());
    let o = umner(["stats", "--data"]);
    assert!(!o.status.success());
}

#[test]
fn stats_prints_a_column_per_file() {
    let s = fixtures().join("stats");
    let o = umner(["stats".into(), "--data".into(), s.join("train.txt"), s.join("test.txt")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("train") && text.contains("test"), "{text}");
    let per = text.lines().find(|l| l.starts_with("PER")).expect("PER row");
    assert_eq!(per.split_whitespace().skip(1).collect::<Vec<_>>(), ["3", "1"], "{text}");
}

#[test]
fn stats_reports_parse_errors_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.txt");
    fs::write(&path, "IMGID:a\nAli\tB-PERSON\n").unwrap();
    let o = umner([Path::new("stats").as_os_str(), "--data".as_ref(), path.as_os_str()]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.starts_with("error[parse]: ") && err.contains("line 2"), "{err}");
}

#[test]
fn gradcheck_passes_and_fault_fails() {
    let ok = umner(["gradcheck", "--seed", "0"]);
    assert!(ok.status.success(), "{}", stdout(&ok));
    assert!(!stdout(&ok).contains("FAIL"));

    let bad = umner(["gradcheck", "--seed", "0", "--inject-fault"]);
    assert!(!bad.status.success());
    assert!(stdout(&bad).contains("FAIL"));
}

#[test]
fn train_eval_predict_roundtrip() {
    let ws = overfit_workspace();
    let root = ws.path();
    let conf = root.join("overfit.conf");
    let o = umner([Path::new("train").as_os_str(), "--config".as_ref(), conf.as_os_str()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("train F1 100.00"), "{}", stdout(&o));
    let ckpt = root.join("out/overfit.ckpt");
    let metrics = fs::read_to_string(root.join("out/overfit.metrics")).unwrap();
    assert!(metrics.contains("[overall]\nprecision = 100.00\nrecall = 100.00\nf1 = 100.00"), "{metrics}");
    assert!(metrics.contains("[epochs]"));

    let train_txt = root.join("train.txt");
    let feats = root.join("features");
    let eval_out = root.join("eval/metrics.txt");
    let o = umner([
        "eval".as_ref(),
        "--ckpt".as_ref(),
        ckpt.as_os_str(),
        "--data".as_ref(),
        train_txt.as_os_str(),
        "--features".as_ref(),
        feats.as_os_str(),
        "--metrics-out".as_ref(),
        eval_out.as_os_str(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "P 100.00 R 100.00 F1 100.00");
    assert!(fs::read_to_string(&eval_out).unwrap().contains("command = eval"));

    // Predict on unlabelled text: strip labels from the training file.
    let gold = parse_dataset(&train_txt).unwrap();
    let bare: String = fs::read_to_string(&train_txt)
        .unwrap()
        .lines()
        .map(|l| format!("{}\n", l.split('\t').next().unwrap()))
        .collect();
    let bare_path = root.join("bare.txt");
    fs::write(&bare_path, bare).unwrap();
    let mut outputs = Vec::new();
    for name in ["p1.txt", "p2.txt"] {
        let out = root.join(name);
        let o = umner([
            "predict".as_ref(),
            "--ckpt".as_ref(),
            ckpt.as_os_str(),
            "--data".as_ref(),
            bare_path.as_os_str(),
            "--features".as_ref(),
            feats.as_os_str(),
            "--out".as_ref(),
            out.as_os_str(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        outputs.push(fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1], "prediction is not deterministic");
    let predicted = parse_dataset_file(&root.join("p1.txt"), Labels::Required).unwrap();
    assert_eq!(predicted, gold, "perfectly fit model should reproduce the gold labels");
}

#[test]
fn training_twice_gives_identical_checkpoints() {
    let a = overfit_workspace();
    let b = overfit_workspace();
    for ws in [&a, &b] {
        let conf = ws.path().join("overfit.conf");
        let o = umner([Path::new("train").as_os_str(), "--config".as_ref(), conf.as_os_str()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for file in ["out/overfit.ckpt", "out/overfit.ckpt.vocab", "out/overfit.ckpt.config"] {
        assert_eq!(fs::read(a.path().join(file)).unwrap(), fs::read(b.path().join(file)).unwrap(), "{file}");
    }
}

#[test]
fn contradictory_ablation_flags_are_config_errors() {
    let ws = overfit_workspace();
    let conf = ws.path().join("overfit.conf");
    let o = umner([
        Path::new("train").as_os_str(),
        "--config".as_ref(),
        conf.as_os_str(),
        "--text-only".as_ref(),
        "--no-visual-gate".as_ref(),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error[config]: "), "{}", stderr(&o));
    assert!(!ws.path().join("out/overfit.ckpt").exists());
}

#[test]
fn missing_feature_dir_is_reported() {
    let ws = overfit_workspace();
    fs::remove_dir_all(ws.path().join("features")).unwrap();
    let conf = ws.path().join("overfit.conf");
    let o = umner([Path::new("train").as_os_str(), "--config".as_ref(), conf.as_os_str()]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.starts_with("error[config]: ") && err.contains("feature directory"), "{err}");
}

#[test]
fn eval_with_missing_checkpoint_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let s = fixtures().join("stats").join("train.txt");
    let o = umner([
        "eval".as_ref(),
        "--ckpt".as_ref(),
        dir.path().join("none.ckpt").as_os_str(),
        "--data".as_ref(),
        s.as_os_str(),
        "--features".as_ref(),
        dir.path().as_os_str(),
    ]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.starts_with("error[io]: ") && err.contains("none.ckpt"), "{err}");
    assert_eq!(err.lines().count(), 1, "{err}");
}
