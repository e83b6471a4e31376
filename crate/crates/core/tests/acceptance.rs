//! Acceptance suite. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits non-zero if any criterion fails. An optional argument restricts the
//! run to criteria whose id or title contains it (e.g. `C6`).

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hob2srnn::attention::{AttentionHead, AttentionMode};
use hob2srnn::data::{
    generate_synthetic, load_dataset, select, split, split_samples, NormalizationStats, Sample, SeriesShape,
    SplitSpec,
};
use hob2srnn::diffcore::{finite_diff_check, ParamRef, Tape, Tensor};
use hob2srnn::metrics::{ConfusionMatrix, MeanStd};
use hob2srnn::model::{total_loss, ForwardOutput, Hob2sRnn, ModelDims, ModelVariant, SeriesBatch};
use hob2srnn::taxonomy::Taxonomy;
use hob2srnn::training::{accuracy_at, evaluate, hierarchical_pretrain, Stage, TrainConfig};

// Gradient check
const C1_H: f64 = 1e-5;
const C1_TOL: f64 = 1e-4;
const C1_BUDGET: Duration = Duration::from_secs(60);
// Loss arithmetic
const C2_TRIPLES: usize = 100;
const C2_TOL: f64 = 1e-12;
// Attention
const C3_TOL: f64 = 1e-12;
// Overfit
const C5_EPOCHS: usize = 300;
const C5_BUDGET: Duration = Duration::from_secs(300);
// Ablation ordering
const C6_OBJECTS: usize = 600;
const C6_DIFFICULTY: f64 = 0.5;
const C6_DATA_SEED: u64 = 42;
const C6_SEEDS: u64 = 5;
const C6_EPOCHS: usize = 300;
const C6_LEVEL_EPOCHS: usize = 50;
const C6_HIDDEN: usize = 16;
const C6_FC: (usize, usize) = (8, 16);
const C6_BUDGET: Duration = Duration::from_secs(30 * 60);
// Metrics
const C7_TOL: f64 = 1e-3;
// Splits
const C9_OBJECTS: usize = 1000;
const C9_SEEDS: u64 = 10;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

type Check = fn() -> Result<Verdict, String>;

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn random_series(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

fn c1_gradient_check() -> Result<Verdict, String> {
    let start = Instant::now();
    let dims = ModelDims::new(2, 5).with_enrichment(3, 4).with_hidden(8);
    let model = Hob2sRnn::build(ModelVariant::full(), dims, 2, 17).map_err(e2s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let samples: Vec<(Tensor, Tensor)> = (0..3)
        .map(|_| (random_series(&mut rng, 3, 2), random_series(&mut rng, 2, 5)))
        .collect();
    let pairs: Vec<(&Tensor, &Tensor)> = samples.iter().map(|(r, o)| (r, o)).collect();
    let batch = SeriesBatch::new(&pairs).map_err(e2s)?;
    let targets = [0, 1, 1];
    let report = finite_diff_check(
        |tape| {
            let out = model.forward_batch(tape, &batch)?;
            total_loss(tape, &out, &targets)
        },
        &model.params(),
        C1_H,
        C1_TOL,
    )
    .map_err(e2s)?;
    let elapsed = start.elapsed();
    Ok(verdict(
        report.max_rel_error < C1_TOL && elapsed < C1_BUDGET,
        format!(
            "{} entries, max rel err {:.2e} (limit {C1_TOL:.0e}), {:.1}s (limit {}s)",
            report.entries,
            report.max_rel_error,
            elapsed.as_secs_f64(),
            C1_BUDGET.as_secs()
        ),
    ))
}

fn random_probs(rng: &mut ChaCha8Rng, rows: usize, k: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| {
            let e: Vec<f64> = (0..k).map(|_| rng.random_range(-4.0f64..4.0).exp()).collect();
            let s: f64 = e.iter().sum();
            e.iter().map(|x| x / s).collect()
        })
        .collect()
}

fn mean_ce(p: &[Vec<f64>], targets: &[usize]) -> f64 {
    p.iter().zip(targets).map(|(row, &t)| -row[t].ln()).sum::<f64>() / targets.len() as f64
}

fn c2_loss_arithmetic() -> Result<Verdict, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..C2_TRIPLES {
        let k = rng.random_range(2..8);
        let rows = rng.random_range(1..5);
        let targets: Vec<usize> = (0..rows).map(|_| rng.random_range(0..k)).collect();
        let (pr, po, pf) = (
            random_probs(&mut rng, rows, k),
            random_probs(&mut rng, rows, k),
            random_probs(&mut rng, rows, k),
        );
        let expected = 0.5 * mean_ce(&pr, &targets) + 0.5 * mean_ce(&po, &targets) + mean_ce(&pf, &targets);
        let mut tape = Tape::new();
        let mut var = |p: &[Vec<f64>]| tape.constant(Tensor::from_rows(p).unwrap());
        let (vr, vo, vf) = (var(&pr), var(&po), var(&pf));
        let out = ForwardOutput {
            p_radar: vr,
            p_optical: vo,
            p_fused: vf,
            feat_radar: vr,
            feat_optical: vo,
            feat_fused: vf,
        };
        let l = total_loss(&mut tape, &out, &targets).map_err(e2s)?;
        worst = worst.max((tape.scalar(l) - expected).abs());
    }
    Ok(verdict(
        worst <= C2_TOL,
        format!("{C2_TRIPLES} triples, max |diff| {worst:.2e} (limit {C2_TOL:.0e})"),
    ))
}

/// `vᵀ tanh(W h + b)` by plain loops.
fn score_by_hand(head: &AttentionHead, h: &[f64]) -> f64 {
    let (w, b, v) = (head.w_a.value(), head.b_a.value(), head.v.value());
    let a = w.rows();
    (0..a)
        .map(|i| {
            let pre: f64 = w.row(i).iter().zip(h).map(|(x, y)| x * y).sum::<f64>() + b.data()[i];
            v.data()[i] * pre.tanh()
        })
        .sum()
}

fn c3_attention_contracts() -> Result<Verdict, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut sum_err, mut tanh_max, mut t1_err): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for trial in 0..200 {
        let hidden = rng.random_range(1..12);
        let proj = rng.random_range(1..12);
        let steps = rng.random_range(1..30);
        let batch = rng.random_range(1..4);
        let scale = if trial % 4 == 0 { 50.0 } else { 1.0 };
        let soft = AttentionHead::new(hidden, proj, AttentionMode::Softmax, &mut rng);
        let tanh = AttentionHead::new(hidden, proj, AttentionMode::Tanh, &mut rng);
        let mut tape = Tape::new();
        let states: Vec<_> = (0..steps)
            .map(|_| {
                let t = random_series(&mut rng, batch, hidden).map(|x| scale * x);
                tape.constant(t)
            })
            .collect();
        let e = soft.scores(&mut tape, &states).map_err(e2s)?;
        let w = soft.weights(&mut tape, e).map_err(e2s)?;
        for r in 0..batch {
            sum_err = sum_err.max((tape.value(w).row(r).iter().sum::<f64>() - 1.0).abs());
        }
        let e = tanh.scores(&mut tape, &states).map_err(e2s)?;
        let w = tanh.weights(&mut tape, e).map_err(e2s)?;
        tanh_max = tape.value(w).data().iter().fold(tanh_max, |m, x| m.max(x.abs()));

        // single time stamp
        let h1: Vec<f64> = (0..hidden).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        let hv = tape.constant(Tensor::vector(h1.clone()));
        let feat = tanh.forward(&mut tape, &[hv]).map_err(e2s)?;
        let lambda = score_by_hand(&tanh, &h1).tanh();
        for (f, h) in tape.value(feat).data().iter().zip(&h1) {
            t1_err = t1_err.max((f - lambda * h).abs());
        }
    }
    Ok(verdict(
        sum_err <= C3_TOL && tanh_max <= 1.0 && t1_err <= C3_TOL,
        format!(
            "softmax |sum-1| {sum_err:.2e}, max |tanh weight| {tanh_max:.6}, T=1 feature err {t1_err:.2e} (limit {C3_TOL:.0e})"
        ),
    ))
}

fn normalized_split(samples: &[Sample], seed: u64) -> (Vec<Sample>, Vec<Sample>, Vec<Sample>) {
    let s = split_samples(samples, &SplitSpec::new(seed)).unwrap();
    let train = select(samples, &s.train);
    let stats = NormalizationStats::fit(&train).unwrap();
    (
        stats.apply(&train),
        stats.apply(&select(samples, &s.val)),
        stats.apply(&select(samples, &s.test)),
    )
}

fn bits(t: &Tensor) -> Vec<u64> {
    t.data().iter().map(|x| x.to_bits()).collect()
}

fn c4_weight_transfer() -> Result<Verdict, String> {
    let tax = Taxonomy::reunion();
    let data = generate_synthetic(66, &tax, SeriesShape::REUNION, 4, 0.5).map_err(e2s)?;
    let (train, val, _) = normalized_split(&data, 4);
    let dims = ModelDims::new(2, 5).with_enrichment(4, 4).with_hidden(6);
    let cfg = TrainConfig {
        learning_rate: 1e-2,
        epochs: 3,
        epochs_per_level: 2,
        ..TrainConfig::default()
    };
    struct Seen {
        shared: Vec<(ParamRef, Vec<u64>)>,
        classifiers: Vec<(ParamRef, Vec<u64>)>,
    }
    let mut done: Option<Seen> = None;
    let mut problems = Vec::new();
    let mut transitions = 0;
    let mut checked = 0;
    let capture = |m: &Hob2sRnn| Seen {
        shared: m.shared_params().into_iter().map(|p| { let b = bits(&p.value()); (p, b) }).collect(),
        classifiers: m.classifier_params().into_iter().map(|p| { let b = bits(&p.value()); (p, b) }).collect(),
    };
    hierarchical_pretrain(ModelVariant::full(), dims, &tax, &train, &val, &cfg, |stage, m| {
        let all: HashSet<usize> = m.params().iter().map(ParamRef::addr).collect();
        let shared: HashSet<usize> = m.shared_params().iter().map(ParamRef::addr).collect();
        let clf: HashSet<usize> = m.classifier_params().iter().map(ParamRef::addr).collect();
        if !shared.is_disjoint(&clf) || shared.union(&clf).count() != all.len() {
            problems.push(format!("{stage:?}: shared/classifier sets do not partition the parameters"));
        }
        match stage {
            Stage::LevelDone { .. } => done = Some(capture(m)),
            Stage::LevelStart { level } => {
                let Some(prev) = done.take() else { return };
                transitions += 1;
                let now = capture(m);
                let prev_set: HashSet<usize> = prev.shared.iter().map(|(p, _)| p.addr()).collect();
                if prev_set != shared {
                    problems.push(format!("level {level}: shared parameter set changed"));
                }
                for ((p0, v0), (p1, v1)) in prev.shared.iter().zip(&now.shared) {
                    checked += 1;
                    if !p0.same(p1) || v0 != v1 {
                        problems.push(format!("level {level}: shared parameter not carried over"));
                    }
                }
                for ((p0, v0), (p1, v1)) in prev.classifiers.iter().zip(&now.classifiers) {
                    if p0.same(p1) || v0 == v1 {
                        problems.push(format!("level {level}: classifier parameter not re-initialised"));
                    }
                }
                if m.clf_fused.output_dim() != tax.classes(level).len() {
                    problems.push(format!("level {level}: classifier width mismatch"));
                }
            }
        }
    })
    .map_err(e2s)?;
    Ok(verdict(
        problems.is_empty() && transitions == 2,
        if problems.is_empty() {
            format!("{transitions} level transitions, {checked} shared parameters carried by identity and value, classifiers renewed")
        } else {
            problems.join("; ")
        },
    ))
}

fn c5_overfit() -> Result<Verdict, String> {
    let start = Instant::now();
    let tax = Taxonomy::parse("class a\nclass b\nclass c\n").map_err(e2s)?;
    let data = generate_synthetic(20, &tax, SeriesShape::REUNION, 3, 0.5).map_err(e2s)?;
    let stats = NormalizationStats::fit(&data).map_err(e2s)?;
    let data = stats.apply(&data);
    let dims = ModelDims::new(2, 5).with_hidden(64);
    let cfg = TrainConfig {
        epochs: C5_EPOCHS,
        ..TrainConfig::default()
    };
    // selection on the training set itself
    let (model, reports) =
        hierarchical_pretrain(ModelVariant::full(), dims, &tax, &data, &data, &cfg, |_, _| {}).map_err(e2s)?;
    let acc = accuracy_at(&model, &data, 0).map_err(e2s)?;
    let first = reports[0].val_accuracy.iter().position(|&a| a == 1.0);
    let elapsed = start.elapsed();
    Ok(verdict(
        acc == 1.0 && elapsed < C5_BUDGET,
        format!(
            "train accuracy {:.2}% (first 100% at epoch {}), lr {}, {:.1}s (limit {}s)",
            100.0 * acc,
            first.map_or("never".into(), |e| (e + 1).to_string()),
            cfg.learning_rate,
            elapsed.as_secs_f64(),
            C5_BUDGET.as_secs()
        ),
    ))
}

fn c6_ablation_ordering() -> Result<Verdict, String> {
    let start = Instant::now();
    let tax = Taxonomy::reunion();
    let data = generate_synthetic(C6_OBJECTS, &tax, SeriesShape::REUNION, C6_DATA_SEED, C6_DIFFICULTY).map_err(e2s)?;
    let dims = ModelDims::new(2, 5).with_enrichment(C6_FC.0, C6_FC.1).with_hidden(C6_HIDDEN);
    let variants = [
        ModelVariant::no_hier_pre(),
        ModelVariant::no_att(),
        ModelVariant::softmax_att(),
        ModelVariant::full(),
    ];
    let splits: Vec<_> = (0..C6_SEEDS).map(|s| normalized_split(&data, s)).collect();
    let leaf = tax.leaf_level();
    let mut f1: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for v in variants {
        for (seed, (train, val, test)) in splits.iter().enumerate() {
            let cfg = TrainConfig {
                epochs: C6_EPOCHS,
                epochs_per_level: C6_LEVEL_EPOCHS,
                seed: seed as u64,
                ..TrainConfig::default()
            };
            let (m, _) = hierarchical_pretrain(v, dims, &tax, train, val, &cfg, |_, _| {}).map_err(e2s)?;
            let ev = evaluate(&m, test, leaf, m.n_classes()).map_err(e2s)?;
            f1.entry(v.label()).or_default().push(ev.metrics.f1);
        }
    }
    let elapsed = start.elapsed();
    let stat = |label: &str| MeanStd::of(&f1[label]).unwrap();
    let full = stat("HOb2sRNN");
    let mut violations = Vec::new();
    for other in ["noHierPre", "SoftMaxAtt", "noAtt"] {
        if full.mean < stat(other).mean {
            violations.push(other);
        }
    }
    for (label, vals) in &f1 {
        let cells: Vec<String> = vals.iter().map(|x| format!("{:.2}", 100.0 * x)).collect();
        println!("      {label:<10} F1 {}  per seed [{}]", stat(label).percent(), cells.join(", "));
    }
    Ok(verdict(
        violations.is_empty() && elapsed < C6_BUDGET,
        format!(
            "mean F1 full {:.2} vs noHierPre {:.2}, SoftMaxAtt {:.2}, noAtt {:.2}{}; {:.0}s (limit {}s)",
            100.0 * full.mean,
            100.0 * stat("noHierPre").mean,
            100.0 * stat("SoftMaxAtt").mean,
            100.0 * stat("noAtt").mean,
            if violations.is_empty() {
                String::new()
            } else {
                format!("; full below {}", violations.join(", "))
            },
            elapsed.as_secs_f64(),
            C6_BUDGET.as_secs()
        ),
    ))
}

fn c7_metrics_oracle() -> Result<Verdict, String> {
    let cm = ConfusionMatrix::from_counts(vec![vec![3, 0], vec![1, 1]]).map_err(e2s)?;
    let m = cm.metrics().map_err(e2s)?;
    let ok_values =
        (m.accuracy - 0.8).abs() < C7_TOL && (m.f1 - 0.781).abs() < C7_TOL && (m.kappa - 0.545).abs() < C7_TOL;
    let f1 = MeanStd { mean: 0.7966, std: 0.0085 }.percent();
    let kappa = MeanStd { mean: 0.772, std: 0.009 }.plain();
    let ok_format = f1 == "79.66 ± 0.85" && kappa == "0.772 ± 0.009";
    Ok(verdict(
        ok_values && ok_format,
        format!(
            "accuracy {:.4}, F1 {:.4}, kappa {:.4} (tol {C7_TOL:.0e}); formatted '{f1}' and '{kappa}'",
            m.accuracy, m.f1, m.kappa
        ),
    ))
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_hob2srnn")
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(bin())
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(e2s)?;
    if !out.status.success() {
        return Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(())
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_path_buf();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn c8_determinism() -> Result<Verdict, String> {
    let tmp = tempfile::tempdir().map_err(e2s)?;
    let data = tmp.path().join("data");
    let out = tmp.path().join("run");
    let (data_s, out_s) = (data.to_str().unwrap(), out.to_str().unwrap());
    run_cli(&["synth", "--out", data_s, "--objects", "44", "--seed", "8"])?;
    let train = [
        "train", "--data", data_s, "--out", out_s, "--seeds", "2", "--epochs", "3", "--level-epochs", "2",
        "--hidden", "6", "--fc1", "4", "--fc2", "4", "--lr", "0.01",
    ];
    run_cli(&train)?;
    let first = files_under(&out);
    fs::remove_dir_all(&out).map_err(e2s)?;
    run_cli(&train)?;
    let second = files_under(&out);
    let compared: Vec<&PathBuf> = first.keys().filter(|p| !p.ends_with("timing.jsonl")).collect();
    let differing: Vec<String> = compared
        .iter()
        .filter(|p| second.get(**p) != first.get(**p))
        .map(|p| p.display().to_string())
        .collect();
    let ckpts = compared.iter().filter(|p| p.extension().is_some_and(|e| e == "ckpt")).count();
    let logs = compared.iter().filter(|p| p.ends_with("report.log")).count();
    Ok(verdict(
        differing.is_empty() && ckpts == 2 && logs == 2 && first.len() == second.len(),
        if differing.is_empty() {
            format!("{} files byte-identical ({ckpts} checkpoints, {logs} reports)", compared.len())
        } else {
            format!("differing: {}", differing.join(", "))
        },
    ))
}

fn c9_split_protocol() -> Result<Verdict, String> {
    let tax = Taxonomy::reunion();
    let data = generate_synthetic(C9_OBJECTS, &tax, SeriesShape::REUNION, 9, 0.5).map_err(e2s)?;
    let labels: Vec<usize> = data.iter().map(|s| s.labels.leaf()).collect();
    let mut problems = Vec::new();
    for seed in 0..C9_SEEDS {
        let s = split(&labels, &SplitSpec::new(seed)).map_err(e2s)?;
        if (s.train.len(), s.val.len(), s.test.len()) != (500, 200, 300) {
            problems.push(format!("seed {seed}: sizes {}/{}/{}", s.train.len(), s.val.len(), s.test.len()));
        }
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        if all != (0..C9_OBJECTS).collect::<Vec<_>>() {
            problems.push(format!("seed {seed}: partitions overlap or miss objects"));
        }
        for c in 0..tax.leaf_classes().len() {
            let n_c = labels.iter().filter(|&&l| l == c).count() as f64;
            let count = |idx: &[usize]| idx.iter().filter(|&&i| labels[i] == c).count() as f64;
            if (count(&s.train) - 0.5 * n_c).abs() >= 1.0 || (count(&s.val) - 0.2 * n_c).abs() >= 1.0 {
                problems.push(format!("seed {seed}: class {c} not stratified"));
            }
        }
        if split(&labels, &SplitSpec::new(seed)).map_err(e2s)? != s {
            problems.push(format!("seed {seed}: not reproducible"));
        }
    }
    Ok(verdict(
        problems.is_empty(),
        if problems.is_empty() {
            format!("{C9_SEEDS} seeds on {C9_OBJECTS} objects: 500/200/300, disjoint, stratified, reproducible")
        } else {
            problems.join("; ")
        },
    ))
}

fn c10_data_round_trip() -> Result<Verdict, String> {
    let tmp = tempfile::tempdir().map_err(e2s)?;
    let dir = tmp.path().join("synth");
    run_cli(&["synth", "--out", dir.to_str().unwrap(), "--objects", "60", "--seed", "7"])?;
    let tax = Taxonomy::parse(&fs::read_to_string(dir.join("taxonomy.txt")).map_err(e2s)?).map_err(e2s)?;
    let samples = load_dataset(&dir.join("radar.csv"), &dir.join("optical.csv"), &dir.join("labels.csv"), &tax)
        .map_err(e2s)?;
    let shapes_ok = samples
        .iter()
        .all(|s| s.radar.shape() == [26, 2] && s.optical.shape() == [21, 5] && s.flatten().len() == 157);
    Ok(verdict(
        samples.len() == 60 && shapes_ok,
        format!(
            "{} objects reloaded, radar {:?}, optical {:?}, {} variables each",
            samples.len(),
            samples[0].radar.shape(),
            samples[0].optical.shape(),
            samples[0].flatten().len()
        ),
    ))
}

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let checks: [(&str, &str, Check); 10] = [
        ("C1", "full-model gradient check", c1_gradient_check),
        ("C2", "three-classifier loss arithmetic", c2_loss_arithmetic),
        ("C3", "attention weight contracts", c3_attention_contracts),
        ("C4", "weight transfer across levels", c4_weight_transfer),
        ("C5", "overfit capacity", c5_overfit),
        ("C6", "ablation ordering", c6_ablation_ordering),
        ("C7", "metrics oracle and formatting", c7_metrics_oracle),
        ("C8", "train determinism", c8_determinism),
        ("C9", "split protocol", c9_split_protocol),
        ("C10", "synthetic data round trip", c10_data_round_trip),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (id, title, check) in checks {
        if !filters.is_empty() && !filters.iter().any(|f| id == f || title.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let v = check().unwrap_or_else(|e| verdict(false, format!("error: {e}")));
        if !v.pass {
            failed += 1;
        }
        println!("[{}] {id} {title}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
