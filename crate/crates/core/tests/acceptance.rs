//! Acceptance suite. Runs every criterion in order and prints one
//! `PASS`/`FAIL` line each; exits non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use umner::autodiff::{Dropout, Graph};
use umner::checkpoint::{decode, encode, load_model, save_model};
use umner::corpus::{format_dataset, parse_dataset, parse_dataset_str, Labels, TokenSequence};
use umner::crf::{crf_log_partition, is_structural, start, stop, viterbi_decode};
use umner::features::{load_visual_features, VisualFeatureGrid, Vocabulary};
use umner::metrics::{evaluate_labels, span_prf, EntitySpan, EvaluationReport};
use umner::model::{build_variant, tiny_grad_check, Example, ForwardTrace, ModelConfig};
use umner::params::uniform;
use umner::tags::{EntityType, Tag, TAGS};
use umner::tensor::Tensor;
use umner::train::{evaluate, load_examples, train, TrainOptions};
use umner::Error;

type Outcome = std::result::Result<String, String>;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64, what: &str) -> std::result::Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || {
        format!("{what} took {:.2} s, limit {limit_s} s", elapsed.as_secs_f64())
    })
}

fn e2s(e: Error) -> String {
    e.to_string()
}

// ---- 1 -------------------------------------------------------------------

/// Score of one path written out directly from the definition.
fn path_score(e: &Tensor, t: &Tensor, l: usize, path: &[usize]) -> f64 {
    let mut s = t.get(l, path[0]);
    for (i, &y) in path.iter().enumerate() {
        s += e.get(y, i);
        if i > 0 {
            s += t.get(path[i - 1], y);
        }
    }
    s + t.get(path[path.len() - 1], l + 1)
}

/// All `l^n` paths in lexicographic order.
fn all_paths(l: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0; n];
    loop {
        out.push(cur.clone());
        let mut i = n;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            cur[i] += 1;
            if cur[i] < l {
                break;
            }
            cur[i] = 0;
        }
    }
}

fn crf_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
    let mut worst: f64 = 0.0;
    for case in 0..200 {
        let l = rng.gen_range(1..=5);
        let n = rng.gen_range(1..=6);
        let e = uniform(&[l, n], 2.0, &mut rng);
        let mut t = uniform(&[l + 2, l + 2], 2.0, &mut rng);
        for a in 0..l + 2 {
            for b in 0..l + 2 {
                if is_structural(l, a, b) {
                    t.set(a, b, f64::NEG_INFINITY);
                }
            }
        }
        assert_eq!((start(l), stop(l)), (l, l + 1));

        let paths = all_paths(l, n);
        let scores: Vec<f64> = paths.iter().map(|p| path_score(&e, &t, l, p)).collect();
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        // First path attaining the maximum is the lexicographically smallest.
        let best = paths[scores.iter().position(|&s| s == max).expect("non-empty")].clone();

        let got = crf_log_partition(&e, &t).map_err(e2s)?;
        let diff = (got - log_z).abs();
        worst = worst.max(diff);
        ensure(diff <= 1e-9, || format!("case {case} (L={l}, n={n}): log Z {got} vs enumeration {log_z}"))?;
        let decoded = viterbi_decode(&e, &t).map_err(e2s)?;
        ensure(decoded == best, || format!("case {case} (L={l}, n={n}): viterbi {decoded:?} vs argmax {best:?}"))?;
    }
    let elapsed = started.elapsed();
    within(elapsed, 5.0, "200 instances")?;
    Ok(format!(
        "200 instances, max |log Z diff| {worst:.1e}, viterbi equal on all, {:.2} s",
        elapsed.as_secs_f64()
    ))
}

// ---- 2 -------------------------------------------------------------------

fn gradient_check() -> Outcome {
    let started = Instant::now();
    let (report, _) = tiny_grad_check(0, None).map_err(e2s)?;
    let elapsed = started.elapsed();
    let worst = report.max_rel_error();
    let failing: Vec<String> = report
        .groups
        .iter()
        .filter(|g| !(g.rel_error <= 1e-4))
        .map(|g| format!("{} ({:.2e})", g.name, g.rel_error))
        .collect();
    ensure(failing.is_empty(), || format!("groups above 1e-4: {}", failing.join(", ")))?;
    within(elapsed, 60.0, "grad check")?;
    Ok(format!(
        "{} parameter groups, max rel err {worst:.2e}, {:.2} s",
        report.groups.len(),
        elapsed.as_secs_f64()
    ))
}

// ---- 3 -------------------------------------------------------------------

fn load_fixture_examples(data: &Path, features: &Path, cfg: &ModelConfig) -> std::result::Result<Vec<Example>, String> {
    let seqs = parse_dataset(data).map_err(e2s)?;
    load_examples(seqs, features, cfg).map_err(e2s)
}

fn overfit() -> Outcome {
    let dir = fixtures().join("overfit");
    let cfg = ModelConfig::tiny();
    let data = load_fixture_examples(&dir.join("train.txt"), &dir.join("features"), &cfg)?;
    ensure(data.len() == 20, || format!("fixture has {} sentences, expected 20", data.len()))?;
    let opts = TrainOptions {
        target_train_f1: Some(100.0),
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().map_err(|e| e.to_string())?;
    let started = Instant::now();
    let (a, b) = pool.install(|| -> std::result::Result<_, String> {
        let a = train(&cfg, &data, None, &opts).map_err(e2s)?;
        let b = train(&cfg, &data, None, &opts).map_err(e2s)?;
        Ok((a, b))
    })?;
    let per_run = started.elapsed() / 2;
    let last = a.history.last().expect("at least one epoch");
    ensure(last.train_f1 == 100.0, || {
        format!("train F1 {:.2} after {} epochs", last.train_f1, a.history.len())
    })?;
    ensure(a.history.len() <= 300, || format!("{} epochs", a.history.len()))?;
    ensure(a.history == b.history, || "two runs with the same seed diverged".into())?;
    ensure(encode(&a.model.params) == encode(&b.model.params), || "final parameters differ between runs".into())?;
    within(per_run, 120.0, "one training run")?;
    Ok(format!(
        "train F1 100.00 at epoch {}, identical histories and weights across 2 runs, {:.2} s per run (1 thread)",
        a.history.len(),
        per_run.as_secs_f64()
    ))
}

// ---- 4 -------------------------------------------------------------------

fn disambiguation() -> Outcome {
    let dir = fixtures().join("disambiguation");
    let base = ModelConfig {
        epochs: 150,
        ..ModelConfig::tiny()
    };
    let feats = dir.join("features");
    let train_set = load_fixture_examples(&dir.join("train.txt"), &feats, &base)?;
    let held = load_fixture_examples(&dir.join("heldout.txt"), &feats, &base)?;
    let opts = TrainOptions {
        target_train_f1: None,
    };
    let full = train(&base, &train_set, None, &opts).map_err(e2s)?;
    let full_f1 = evaluate(&full.model, &held).map_err(e2s)?.0.overall.f1() * 100.0;
    let text_cfg = ModelConfig {
        text_only: true,
        ..base
    };
    let text = train(&text_cfg, &train_set, None, &opts).map_err(e2s)?;
    let text_f1 = evaluate(&text.model, &held).map_err(e2s)?.0.overall.f1() * 100.0;
    ensure(full_f1 == 100.0, || format!("full model held-out F1 {full_f1:.2}"))?;
    ensure(text_f1 <= 60.0, || format!("text-only held-out F1 {text_f1:.2}"))?;
    Ok(format!(
        "{} held-out items after {} epochs: full F1 {full_f1:.2}, text-only F1 {text_f1:.2}",
        held.len(),
        full.selected_epoch
    ))
}

// ---- 5 -------------------------------------------------------------------

fn kappa() -> Outcome {
    let path = fixtures().join("kappa").join("annotation_agreement.csv");
    let started = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_umner"))
        .args(["kappa", "--matrix"])
        .arg(&path)
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    ensure(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())?;
    let printed = String::from_utf8_lossy(&out.stdout).trim().to_string();
    let value: f64 = printed.parse().map_err(|_| format!("unparseable output `{printed}`"))?;
    ensure((value - 0.7809).abs() <= 0.0005, || format!("printed {printed}"))?;
    within(elapsed, 1.0, "kappa")?;
    Ok(format!(
        "printed {printed} in {:.3} s; the published figure is 0.773, but the printed counts give 0.7809",
        elapsed.as_secs_f64()
    ))
}

// ---- 6 -------------------------------------------------------------------

fn check_f1_identity(r: &EvaluationReport) -> std::result::Result<(), String> {
    for p in std::iter::once(&r.overall).chain(r.per_type.values()) {
        let (pr, rc) = (p.precision(), p.recall());
        if pr + rc > 0.0 {
            let expect = 2.0 * pr * rc / (pr + rc);
            ensure((p.f1() - expect).abs() <= 1e-6, || format!("F1 {} vs 2PR/(P+R) {expect}", p.f1()))?;
        }
    }
    Ok(())
}

fn random_labels(len: usize, rng: &mut ChaCha8Rng) -> Vec<Tag> {
    (0..len).map(|_| TAGS[rng.gen_range(0..TAGS.len())]).collect()
}

fn metrics_arithmetic() -> Outcome {
    let gold = BTreeSet::from([EntitySpan::new(EntityType::Per, 0, 1), EntitySpan::new(EntityType::Loc, 2, 3)]);
    let pred = BTreeSet::from([EntitySpan::new(EntityType::Per, 0, 1), EntitySpan::new(EntityType::Org, 4, 5)]);
    let hand = span_prf(&[gold], &[pred]).map_err(e2s)?;
    let o = &hand.overall;
    ensure((o.true_positives, o.false_positives, o.false_negatives) == (1, 1, 1), || format!("{o:?}"))?;
    ensure(o.precision() == 0.5 && o.recall() == 0.5 && o.f1() == 0.5, || {
        format!("hand oracle gave {}/{}/{}", o.precision(), o.recall(), o.f1())
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let reports = 500;
    for _ in 0..reports {
        let sentences = rng.gen_range(1..6);
        let mut g = Vec::new();
        let mut p = Vec::new();
        for _ in 0..sentences {
            let len = rng.gen_range(1..10);
            g.push(random_labels(len, &mut rng));
            p.push(random_labels(len, &mut rng));
        }
        let r = evaluate_labels(&g, &p).map_err(e2s)?;
        check_f1_identity(&r)?;
    }
    Ok(format!("hand oracle 0.5/0.5/0.5 exactly; F1 identity holds on {reports} random reports"))
}

// ---- 7 -------------------------------------------------------------------

const TOKEN_CHARS: &[char] = &[
    'a', 'b', 'z', 'Q', '0', '9', '#', '@', '.', '-', '_', ':', 'ا', 'ل', 'ہ', 'ر', 'é', '😀', ' ',
];

fn random_token(rng: &mut ChaCha8Rng) -> String {
    loop {
        let len = rng.gen_range(1..8);
        let s: String = (0..len).map(|_| TOKEN_CHARS[rng.gen_range(0..TOKEN_CHARS.len())]).collect();
        // Leading or trailing spaces are not representable; a bare header-like
        // token is fine because token lines always carry a tab.
        if s.trim() == s && !s.is_empty() {
            return s;
        }
    }
}

fn random_dataset(rng: &mut ChaCha8Rng) -> Vec<TokenSequence> {
    let sentences = rng.gen_range(0..6);
    (0..sentences)
        .map(|s| {
            let len = rng.gen_range(1..9);
            let tokens = (0..len).map(|_| random_token(rng)).collect();
            let id = format!("{}_{s}", rng.gen::<u32>());
            TokenSequence::new(id, tokens, random_labels(len, rng)).expect("well-formed")
        })
        .collect()
}

fn format_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for k in 0..100 {
        let data = random_dataset(&mut rng);
        let text = format_dataset(&data).map_err(e2s)?;
        let back = parse_dataset_str(&text, Labels::Required).map_err(e2s)?;
        ensure(back == data, || format!("fixture {k} changed on roundtrip"))?;
        let path = dir.path().join(format!("set{k}.txt"));
        umner::corpus::write_dataset(&data, &path).map_err(e2s)?;
        let from_file = parse_dataset(&path).map_err(e2s)?;
        ensure(from_file == data, || format!("fixture {k} changed on file roundtrip"))?;
        ensure(format_dataset(&from_file).map_err(e2s)? == text, || format!("fixture {k} text differs"))?;
    }

    // Checkpoints: include awkward values so bit-exactness is actually tested.
    let vocab = Vocabulary::build([["Ali", "in", "Lahore"].map(String::from).as_slice()]);
    let mut model = build_variant(ModelConfig::tiny(), vocab, 3).map_err(e2s)?;
    let specials = [-0.0, f64::MIN_POSITIVE / 4.0, 1.0 / 3.0, -1e300, std::f64::consts::PI];
    if let Some((_, t)) = model.params.iter_mut().find(|(n, _)| *n == "embed/word") {
        for (slot, v) in t.data_mut().iter_mut().zip(specials) {
            *slot = v;
        }
    }
    let bytes = encode(&model.params);
    let decoded = decode(&bytes).map_err(e2s)?;
    ensure(encode(&decoded) == bytes, || "re-encoded checkpoint differs".into())?;
    for (name, t) in model.params.iter() {
        let d = decoded.get(name).ok_or_else(|| format!("`{name}` lost"))?;
        let same = d.shape() == t.shape() && d.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        ensure(same, || format!("`{name}` not bit-identical"))?;
    }
    let ckpt = dir.path().join("m.ckpt");
    save_model(&model, &ckpt).map_err(e2s)?;
    let loaded = load_model(&ckpt).map_err(e2s)?;
    ensure(encode(&loaded.params) == bytes, || "saved and loaded parameters differ".into())?;
    ensure(loaded.config == model.config && loaded.vocab == model.vocab, || "config or vocabulary changed".into())?;

    // Visual feature files.
    let grid = VisualFeatureGrid::new(uniform(&[4, 16], 1.0, &mut rng)).map_err(e2s)?;
    let good = grid.to_bytes();
    let mut bad_magic = good.clone();
    bad_magic[1] ^= 0xff;
    let magic_offset = match VisualFeatureGrid::from_bytes(&bad_magic) {
        Err(Error::Format { offset, .. }) => offset,
        other => return Err(format!("corrupted magic accepted or wrong error: {other:?}")),
    };
    ensure(magic_offset == 0, || format!("corrupted magic reported at offset {magic_offset}"))?;
    let cut = good.len() - 6;
    let trunc_offset = match VisualFeatureGrid::from_bytes(&good[..cut]) {
        Err(Error::Format { offset, .. }) => offset,
        other => return Err(format!("truncated payload accepted or wrong error: {other:?}")),
    };
    ensure(trunc_offset == cut, || format!("truncation reported at {trunc_offset}, file is {cut} bytes"))?;
    std::fs::write(dir.path().join("img.vfeat"), &good[..cut]).map_err(|e| e.to_string())?;
    let msg = load_visual_features("img", dir.path(), (4, 16)).unwrap_err().to_string();
    ensure(msg.contains("img.vfeat") && msg.contains(&format!("byte {cut}")), || {
        format!("file error lacks path or offset: {msg}")
    })?;
    Ok(format!(
        "100 dataset roundtrips identical; checkpoint bit-exact ({} bytes); vfeat magic error at offset 0, truncation at offset {cut}",
        bytes.len()
    ))
}

// ---- 8 -------------------------------------------------------------------

fn invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let words: Vec<String> = ["Asmara", "went", "to", "Lahore", "with", "UNICEF", "on", "Eid"].map(String::from).to_vec();
    let vocab = Vocabulary::build([words.as_slice()]);
    let variants = [
        ModelConfig::tiny(),
        ModelConfig {
            use_self_attention: false,
            ..ModelConfig::tiny()
        },
        ModelConfig {
            use_cross_modal: false,
            ..ModelConfig::tiny()
        },
    ];
    let passes = 1000;
    let (mut rows, mut gates) = (0usize, 0usize);
    let mut worst_sum: f64 = 0.0;
    let (mut gmin, mut gmax) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut drop = Dropout::train(0.1, ChaCha8Rng::seed_from_u64(809));
    for pass in 0..passes {
        let cfg = variants[pass % variants.len()].clone();
        let model = build_variant(cfg, vocab.clone(), rng.gen()).map_err(e2s)?;
        let len = rng.gen_range(1..12);
        let tokens: Vec<String> = (0..len)
            .map(|_| {
                if rng.gen_bool(0.2) {
                    "unseen".to_string()
                } else {
                    words[rng.gen_range(0..words.len())].clone()
                }
            })
            .collect();
        let scale = [0.1, 1.0, 10.0][rng.gen_range(0..3)];
        let grid = VisualFeatureGrid::new(uniform(&[4, 16], scale, &mut rng)).map_err(e2s)?;
        let g = Graph::new();
        let mut trace = ForwardTrace::default();
        if pass % 2 == 0 {
            model.forward_traced(&g, &model.params, &tokens, &grid, &mut drop, &mut trace)
        } else {
            model.forward_traced(&g, &model.params, &tokens, &grid, &mut Dropout::disabled(), &mut trace)
        }
        .map_err(e2s)?;
        ensure(!trace.attention.is_empty(), || "no attention weights recorded".into())?;
        for w in &trace.attention {
            for r in 0..w.rows() {
                let s: f64 = w.row(r).iter().sum();
                worst_sum = worst_sum.max((s - 1.0).abs());
                rows += 1;
                ensure((s - 1.0).abs() <= 1e-6, || format!("pass {pass}: softmax row sums to {s}"))?;
            }
        }
        if model.config.use_cross_modal {
            let gate = trace.gate.as_ref().ok_or_else(|| format!("pass {pass}: gate not recorded"))?;
            for &v in gate.data() {
                gates += 1;
                gmin = gmin.min(v);
                gmax = gmax.max(v);
                ensure(v > 0.0 && v < 1.0, || format!("pass {pass}: gate value {v}"))?;
            }
        }
    }
    Ok(format!(
        "{passes} passes: {rows} softmax rows within {worst_sum:.1e} of 1; {gates} gate values in [{gmin:.4}, {gmax:.4}]"
    ))
}

// ---- 9 -------------------------------------------------------------------

struct Expected {
    name: &'static str,
    sentences: usize,
    /// PER, LOC, ORG, MISC when known.
    counts: Option<[usize; 4]>,
    entities: usize,
}

fn run_stats(files: &[PathBuf], out: &Path) -> std::result::Result<String, String> {
    let res = Command::new(env!("CARGO_BIN_EXE_umner"))
        .arg("stats")
        .arg("--data")
        .args(files)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(res.status.success(), || String::from_utf8_lossy(&res.stderr).into_owned())?;
    std::fs::read_to_string(out).map_err(|e| e.to_string())
}

fn check_stats(text: &str, expected: &[Expected]) -> std::result::Result<(), String> {
    for want in expected {
        let name = want.name;
        let section = text
            .split(&format!("[{name}]\n"))
            .nth(1)
            .ok_or_else(|| format!("no [{name}] section"))?;
        let value = |key: &str| -> std::result::Result<usize, String> {
            section
                .lines()
                .take_while(|l| !l.is_empty())
                .find_map(|l| l.strip_prefix(&format!("{key} = ")))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| format!("[{name}] lacks `{key}`"))
        };
        if let Some(counts) = want.counts {
            for (kind, n) in EntityType::ALL.iter().zip(counts) {
                let got = value(kind.as_str())?;
                ensure(got == n, || format!("{name} {kind}: {got}, expected {n}"))?;
            }
        }
        let got = value("sentences")?;
        ensure(got == want.sentences, || format!("{name} sentences: {got}, expected {}", want.sentences))?;
        let got = value("entities")?;
        ensure(got == want.entities, || format!("{name} entities: {got}, expected {}", want.entities))?;
    }
    Ok(())
}

fn dataset_statistics() -> Outcome {
    let dir = fixtures().join("stats");
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let files: Vec<PathBuf> = ["train.txt", "val.txt", "test.txt"].iter().map(|f| dir.join(f)).collect();
    let text = run_stats(&files, &tmp.path().join("bundled.txt"))?;
    let hand = [
        Expected { name: "train", sentences: 3, counts: Some([3, 2, 2, 1]), entities: 8 },
        Expected { name: "val", sentences: 2, counts: Some([0, 1, 1, 0]), entities: 2 },
        Expected { name: "test", sentences: 1, counts: Some([1, 1, 1, 1]), entities: 4 },
    ];
    check_stats(&text, &hand)?;
    let mut detail = "bundled train/val/test match hand counts (8/2/4 entities)".to_string();

    // Official split files, when supplied: a directory holding train.txt,
    // valid.txt and test.txt.
    match std::env::var_os("UMNER_OFFICIAL_SPLITS").map(PathBuf::from) {
        Some(off) if off.is_dir() => {
            let files: Vec<PathBuf> = ["train.txt", "valid.txt", "test.txt"].iter().map(|f| off.join(f)).collect();
            let text = run_stats(&files, &tmp.path().join("official.txt"))?;
            let published = [
                Expected { name: "train", sentences: 4000, counts: Some([2255, 2076, 897, 946]), entities: 6174 },
                Expected { name: "valid", sentences: 1000, counts: None, entities: 1553 },
                Expected { name: "test", sentences: 3257, counts: None, entities: 5218 },
            ];
            check_stats(&text, &published)?;
            detail.push_str("; official splits match the published counts");
        }
        _ => detail.push_str("; official splits not supplied (set UMNER_OFFICIAL_SPLITS), that part skipped"),
    }
    Ok(detail)
}

// --------------------------------------------------------------------------

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("CRF oracle equivalence", crf_oracle),
        ("gradient verification", gradient_check),
        ("overfit capacity", overfit),
        ("multimodal disambiguation", disambiguation),
        ("kappa reproduction", kappa),
        ("metrics arithmetic", metrics_arithmetic),
        ("format fidelity", format_fidelity),
        ("normalization and bounds invariants", invariants),
        ("dataset statistics", dataset_statistics),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("PASS [{}] {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL [{}] {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
