//! Acceptance suite: one PASS/FAIL line per criterion, each with its own
//! time budget. Runs the criteria one after another (no test harness) so
//! timings are not distorted by sibling tests.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::Rng as _;

use hemorisk::ann::{backprop_gradients, init_network, mse_loss, train_ann, AdamConfig, AnnArchitecture, AnnHyperparams};
use hemorisk::cohort::{generate_cohort, CohortSpec};
use hemorisk::eval::{metrics, roc_curve, run_protocol, stratified_kfold, stratified_split, ConfusionMatrix, Metric, ProtocolConfig};
use hemorisk::exec::Exec;
use hemorisk::forest::{best_split, midpoint, ForestHyperparams};
use hemorisk::model::fit_classifier;
use hemorisk::model_io::{encode_classifier, load_classifier, save_classifier};
use hemorisk::rng::stream_rng;
use hemorisk::schema::{FeatureDef, FeatureGroup};
use hemorisk::svm::{train_svm_detailed, Gamma, SvmHyperparams};
use hemorisk::{Dataset, FeatureSchema, Hyperparams, ModelKind};
use hemorisk_cli::{cmd_evaluate, cmd_generate, CommonArgs, Run};

type Outcome = Result<String, String>;
type Criterion = (&'static str, u64, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn table(rows: Vec<Vec<f64>>, labels: Vec<u8>) -> Dataset {
    let width = rows[0].len();
    let features = (0..width)
        .map(|j| FeatureDef::continuous(&format!("x{j}"), FeatureGroup::Radiographic))
        .collect();
    let schema = Arc::new(FeatureSchema::new(features, "label").unwrap());
    Dataset::from_rows(schema, rows, labels).unwrap()
}

fn default_cohort(seed: u64) -> Dataset {
    generate_cohort(&CohortSpec::default_moyamoya(seed), Arc::new(FeatureSchema::default_moyamoya())).unwrap()
}

// 1 ───────────────────────────────────────────────────────────────────────

fn gradient_check() -> Outcome {
    const H: f64 = 1e-6;
    // Central differences carry ~1e-11 of absolute rounding noise at this h,
    // so entrywise ratios are only meaningful for partials above this size.
    const ENTRY_FLOOR: f64 = 1e-5;
    let mut rng = stream_rng(2024, 0);
    let mut worst_norm = 0.0f64;
    let mut worst_entry = 0.0f64;
    let mut worst_tiny_abs = 0.0f64;
    let mut raw_entry = 0.0f64;
    let mut compared = 0usize;
    for net in 0..100u64 {
        let input = rng.random_range(1..=8);
        let depth = rng.random_range(1..=3);
        let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(1..=8)).collect();
        let arch = AnnArchitecture::new(input, hidden).map_err(|e| e.to_string())?;
        let mut model = init_network(&arch, net);
        let params: Vec<f64> = (0..model.parameter_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
        model.set_parameters(&params);
        let batch = rng.random_range(1..=6);
        let data: Vec<Vec<f64>> = (0..batch)
            .map(|_| (0..input).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let rows: Vec<&[f64]> = data.iter().map(Vec::as_slice).collect();
        let targets: Vec<f64> = (0..batch).map(|_| f64::from(rng.random_range(0..=1u8))).collect();

        let analytic = backprop_gradients(&model, &rows, &targets).map_err(|e| e.to_string())?.flatten();
        let loss = |p: &[f64]| {
            let mut m = model.clone();
            m.set_parameters(p);
            let scores: Vec<f64> = rows.iter().map(|r| m.forward(r).unwrap()).collect();
            mse_loss(&scores, &targets).unwrap()
        };
        let numeric: Vec<f64> = (0..params.len())
            .map(|k| {
                let (mut plus, mut minus) = (params.clone(), params.clone());
                plus[k] += H;
                minus[k] -= H;
                (loss(&plus) - loss(&minus)) / (2.0 * H)
            })
            .collect();

        let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
        let diff = norm(&mut analytic.iter().zip(&numeric).map(|(a, n)| a - n));
        let scale = norm(&mut analytic.iter().copied()).max(norm(&mut numeric.iter().copied()));
        if scale > 0.0 {
            worst_norm = worst_norm.max(diff / scale);
        } else {
            worst_norm = worst_norm.max(diff);
        }
        for (a, n) in analytic.iter().zip(&numeric) {
            let big = a.abs().max(n.abs());
            raw_entry = raw_entry.max((a - n).abs() / big.max(1e-7));
            if big >= ENTRY_FLOOR {
                worst_entry = worst_entry.max((a - n).abs() / big);
            } else {
                worst_tiny_abs = worst_tiny_abs.max((a - n).abs());
            }
            compared += 1;
        }
    }
    let detail = format!(
        "{compared} partials; max per-net relative error {worst_norm:.2e}, \
         max entrywise {worst_entry:.2e} (|g| >= {ENTRY_FLOOR:e}), \
         max abs error below that {worst_tiny_abs:.1e}, raw entrywise {raw_entry:.1e}"
    );
    ensure(worst_norm < 1e-5 && worst_entry < 1e-5 && worst_tiny_abs < 1e-9, || detail.clone())?;
    Ok(detail)
}

// 2 ───────────────────────────────────────────────────────────────────────

fn xor() -> Outcome {
    let data = table(
        vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]],
        vec![0, 1, 1, 0],
    );
    let hp = AnnHyperparams {
        learning_rate: 0.05,
        batch_size: 4,
        epochs: 5000,
        hidden: vec![4],
        adam: AdamConfig::default(),
    };
    let mut solved = Vec::new();
    for seed in 0..5 {
        let (model, _) = train_ann(&data, &hp, seed).map_err(|e| e.to_string())?;
        let correct = data
            .rows()
            .zip(data.labels())
            .filter(|(r, &y)| u8::from(model.forward(r).unwrap() > 0.5) == y)
            .count();
        if correct == 4 {
            solved.push(seed);
        }
    }
    ensure(!solved.is_empty(), || "no seed reached 4/4".into())?;
    Ok(format!("4/4 for seeds {solved:?}"))
}

// 3 ───────────────────────────────────────────────────────────────────────

/// Twenty points on either side of a random line, at least 0.1 away from it.
fn separable_instance(seed: u64) -> Dataset {
    let mut rng = stream_rng(seed, 3);
    loop {
        let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let (nx, ny) = (angle.cos(), angle.sin());
        let offset: f64 = rng.random_range(-0.3..0.3);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        while rows.len() < 20 {
            let p = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let d = nx * p[0] + ny * p[1] - offset;
            if d.abs() >= 0.1 {
                rows.push(p.to_vec());
                labels.push(u8::from(d > 0.0));
            }
        }
        let pos = labels.iter().filter(|&&l| l == 1).count();
        if (2..=18).contains(&pos) {
            return table(rows, labels);
        }
    }
}

fn smo() -> Outcome {
    let hp = SvmHyperparams {
        c: 100.0,
        gamma: Gamma::Value(1.0),
        tol: 1e-3,
        max_passes: 200,
    };
    let mut max_kkt = 0.0f64;
    let mut max_eq = 0.0f64;
    let mut updates = 0usize;
    for inst in 0..50u64 {
        let data = separable_instance(inst);
        let (model, sol) = train_svm_detailed(&data, &hp, inst, true).map_err(|e| e.to_string())?;
        ensure(sol.converged, || format!("instance {inst}: no convergence"))?;
        let sum: f64 = sol
            .alphas
            .iter()
            .zip(data.labels())
            .map(|(a, &l)| if l == 1 { *a } else { -*a })
            .sum();
        max_eq = max_eq.max(sum.abs());
        for (t, (row, &label)) in data.rows().zip(data.labels()).enumerate() {
            let y = if label == 1 { 1.0 } else { -1.0 };
            let yf = y * model.decision_value(row);
            let a = sol.alphas[t];
            let violation = if a <= 0.0 {
                (1.0 - yf).max(0.0)
            } else if a < hp.c {
                (yf - 1.0).abs()
            } else {
                (yf - 1.0).max(0.0)
            };
            max_kkt = max_kkt.max(violation);
            ensure(model.predict(row).0 == label, || format!("instance {inst}: row {t} misclassified"))?;
        }
        let trace = sol.trace.expect("trace requested");
        for w in trace.objective.windows(2) {
            // Allow only floating-point roundoff.
            ensure(w[1] >= w[0] - 1e-12 * w[0].abs().max(1.0), || {
                format!("instance {inst}: objective fell from {} to {}", w[0], w[1])
            })?;
        }
        ensure(trace.box_violation.iter().all(|&v| v == 0.0), || format!("instance {inst}: box violated"))?;
        updates += trace.objective.len() - 1;
    }
    ensure(max_kkt <= 1e-3, || format!("max KKT violation {max_kkt:.3e}"))?;
    ensure(max_eq < 1e-8, || format!("max |Σαy| {max_eq:.3e}"))?;
    Ok(format!(
        "max KKT violation {max_kkt:.2e}, max |Σαy| {max_eq:.1e}, {updates} monotone updates, all training rows correct"
    ))
}

// 4 ───────────────────────────────────────────────────────────────────────

fn gini(counts: [i64; 2]) -> Ratio<i64> {
    let n = counts[0] + counts[1];
    Ratio::from_integer(1) - Ratio::new(counts[0] * counts[0] + counts[1] * counts[1], n * n)
}

/// Every (feature, threshold) pair, exact rational gain; keeps the first
/// strictly best in (feature, threshold) order.
fn brute_force_split(rows: &[Vec<f64>], labels: &[u8], candidates: &[usize]) -> Option<(usize, f64, Ratio<i64>)> {
    let n = rows.len() as i64;
    let count = |pick: &dyn Fn(usize) -> bool| {
        let mut c = [0i64; 2];
        for (i, &l) in labels.iter().enumerate() {
            if pick(i) {
                c[l as usize] += 1;
            }
        }
        c
    };
    let parent = gini(count(&|_| true));
    let mut features = candidates.to_vec();
    features.sort_unstable();
    features.dedup();
    let mut best: Option<(usize, f64, Ratio<i64>)> = None;
    for &f in &features {
        let mut values: Vec<f64> = rows.iter().map(|r| r[f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let t = midpoint(w[0], w[1]);
            let left = count(&|i| rows[i][f] <= t);
            let right = count(&|i| rows[i][f] > t);
            let (nl, nr) = (left[0] + left[1], right[0] + right[1]);
            let gain = parent - Ratio::new(nl, n) * gini(left) - Ratio::new(nr, n) * gini(right);
            if gain > Ratio::from_integer(0) && best.as_ref().is_none_or(|b| gain > b.2) {
                best = Some((f, t, gain));
            }
        }
    }
    best
}

fn split_oracle() -> Outcome {
    let mut rng = stream_rng(4, 0);
    let mut found = 0;
    for inst in 0..500 {
        let n = rng.random_range(1..=12);
        let p = rng.random_range(1..=4);
        // Few distinct levels so that equal gains are common.
        let levels = rng.random_range(2..=5);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..p).map(|_| f64::from(rng.random_range(0..levels)) * 0.5).collect())
            .collect();
        let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..=1)).collect();
        let mut candidates: Vec<usize> = (0..p).collect();
        candidates.shuffle(&mut rng);
        candidates.truncate(rng.random_range(1..=p));

        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let got = best_split(&refs, &labels, &candidates);
        let want = brute_force_split(&rows, &labels, &candidates);
        match (got, want) {
            (None, None) => {}
            (Some(s), Some((f, t, g))) => {
                let g = *g.numer() as f64 / *g.denom() as f64;
                ensure(s.feature == f && s.threshold.to_bits() == t.to_bits() && (s.gain - g).abs() < 1e-12, || {
                    format!("instance {inst}: got ({}, {}, {}), want ({f}, {t}, {g})", s.feature, s.threshold, s.gain)
                })?;
                found += 1;
            }
            (got, want) => return Err(format!("instance {inst}: got {got:?}, want {want:?}")),
        }
    }
    Ok(format!("500 instances agree ({found} with a split)"))
}

// 5 ───────────────────────────────────────────────────────────────────────

fn concordance(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut num, mut pairs) = (0u64, 0u64);
    for (sp, _) in scores.iter().zip(labels).filter(|(_, &l)| l == 1) {
        for (sn, _) in scores.iter().zip(labels).filter(|(_, &l)| l == 0) {
            pairs += 1;
            num += if sp > sn {
                2
            } else if sp == sn {
                1
            } else {
                0
            };
        }
    }
    num as f64 / (2 * pairs) as f64
}

fn auc_identity() -> Outcome {
    let mut rng = stream_rng(5, 0);
    let mut worst = 0.0f64;
    let mut tied_sets = 0;
    for _ in 0..200 {
        let n = rng.random_range(2..=60);
        let levels = rng.random_range(2..=10);
        let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..=1)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..levels)) / f64::from(levels)).collect();
        let mut distinct = scores.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        if distinct.len() < n {
            tied_sets += 1;
        }
        let auc = roc_curve(&scores, &labels).map_err(|e| e.to_string())?.auc;
        worst = worst.max((auc - concordance(&scores, &labels)).abs());
    }
    ensure(worst < 1e-12, || format!("max difference {worst:.3e}"))?;
    Ok(format!("max difference {worst:.1e}; {tied_sets}/200 sets contain ties"))
}

// 6 ───────────────────────────────────────────────────────────────────────

fn class_counts(idx: &[usize], labels: &[u8]) -> [usize; 2] {
    let mut c = [0; 2];
    for &i in idx {
        c[labels[i] as usize] += 1;
    }
    c
}

fn stratification() -> Outcome {
    let mut rng = stream_rng(6, 0);
    for case in 0..100u64 {
        let n = rng.random_range(10..=400);
        let pos = rng.random_range(5..=n - 5);
        let mut labels: Vec<u8> = (0..n).map(|i| u8::from(i < pos)).collect();
        labels.shuffle(&mut rng);
        let totals = class_counts(&(0..n).collect::<Vec<_>>(), &labels);

        let plan = stratified_split(&labels, 0.2, case).map_err(|e| e.to_string())?;
        let mut all: Vec<usize> = plan.train.iter().chain(&plan.test).copied().collect();
        all.sort_unstable();
        ensure(all == (0..n).collect::<Vec<_>>(), || format!("case {case}: split is not a partition"))?;
        let test = class_counts(&plan.test, &labels);
        for c in 0..2 {
            let ideal = totals[c] as f64 * 0.2;
            ensure((test[c] as f64 - ideal).abs() <= 1.0, || {
                format!("case {case}: class {c} has {} test rows, ideal {ideal}", test[c])
            })?;
        }
        ensure(plan.test.len() == (n as f64 * 0.2).round() as usize, || format!("case {case}: test size"))?;

        let folds = stratified_kfold(&plan.train, &labels, 5, case).map_err(|e| e.to_string())?;
        let mut seen: Vec<usize> = folds.folds.concat();
        seen.sort_unstable();
        ensure(seen == plan.train, || format!("case {case}: folds do not partition the training rows"))?;
        let per_fold: Vec<[usize; 2]> = folds.folds.iter().map(|f| class_counts(f, &labels)).collect();
        for c in 0..2 {
            let lo = per_fold.iter().map(|f| f[c]).min().unwrap();
            let hi = per_fold.iter().map(|f| f[c]).max().unwrap();
            ensure(hi - lo <= 1, || format!("case {case}: class {c} fold counts span {lo}..{hi}"))?;
        }
        let sizes: Vec<usize> = folds.folds.iter().map(Vec::len).collect();
        ensure(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1, || {
            format!("case {case}: fold sizes {sizes:?}")
        })?;
    }

    let labels: Vec<u8> = (0..378).map(|i| u8::from(i < 126)).collect();
    let plan = stratified_split(&labels, 0.2, 0).map_err(|e| e.to_string())?;
    ensure(plan.train.len() == 302 && plan.test.len() == 76, || {
        format!("378/126 split gave {}/{}", plan.train.len(), plan.test.len())
    })?;
    Ok("100 datasets hold the invariants; 378 rows split 302/76".into())
}

// 7 ───────────────────────────────────────────────────────────────────────

fn ratio_value(num: u64, den: u64) -> Option<f64> {
    (den != 0).then(|| {
        let r = Ratio::new(num, den);
        *r.numer() as f64 / *r.denom() as f64
    })
}

fn metric_sweep() -> Outcome {
    let mut checked = 0;
    for n in 0..=12u64 {
        for tp in 0..=n {
            for fp in 0..=n - tp {
                for tn in 0..=n - tp - fp {
                    let fn_ = n - tp - fp - tn;
                    let m = metrics(&ConfusionMatrix { tp, fp, tn, fn_ });
                    let expected = [
                        ratio_value(tp + tn, n),
                        ratio_value(tp, tp + fn_),
                        ratio_value(tn, tn + fp),
                        ratio_value(tp, tp + fp),
                        ratio_value(tn, tn + fn_),
                    ];
                    for (metric, want) in Metric::THRESHOLD.iter().zip(expected) {
                        let got = metric.get(&m);
                        ensure(got == want, || {
                            format!("{} for tp={tp} fp={fp} tn={tn} fn={fn_}: {got:?} vs {want:?}", metric.label())
                        })?;
                    }
                    checked += 1;
                }
            }
        }
    }
    Ok(format!("{checked} confusion matrices"))
}

// 8 ───────────────────────────────────────────────────────────────────────

fn end_to_end() -> Outcome {
    let config = ProtocolConfig::default();
    let exec = Exec::sequential();
    let seeds = 0..5u64;
    let mut accuracy = [0.0f64; 3];
    let mut ann_auc = Vec::new();
    for seed in seeds.clone() {
        let data = default_cohort(seed);
        for (slot, kind) in ModelKind::ALL.into_iter().enumerate() {
            let report = run_protocol(&data, &Hyperparams::default_for(kind), None, &config, seed, &exec)
                .map_err(|e| format!("{kind} seed {seed}: {e}"))?;
            accuracy[slot] += report.mean(Metric::Accuracy).ok_or("accuracy undefined")?;
            if kind == ModelKind::Ann {
                ann_auc.push(report.roc.auc);
            }
        }
    }
    let k = seeds.count() as f64;
    accuracy.iter_mut().for_each(|a| *a /= k);
    let auc = ann_auc.iter().sum::<f64>() / k;
    let detail = format!(
        "mean accuracy ANN {:.3} / SVM {:.3} / forest {:.3}; ANN AUC {auc:.3} (per seed {})",
        accuracy[0],
        accuracy[1],
        accuracy[2],
        ann_auc.iter().map(|a| format!("{a:.3}")).collect::<Vec<_>>().join(", ")
    );
    ensure(accuracy.iter().all(|&a| a > 2.0 / 3.0) && auc >= 0.75, || detail.clone())?;
    Ok(detail)
}

// 9 ───────────────────────────────────────────────────────────────────────

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let args = |out: &str, data: Option<&Path>| CommonArgs {
        config: None,
        seed: Some(11),
        model: Some("all".into()),
        out: root.path().join(out),
        data: data.map(Path::to_path_buf),
        schema: None,
        impute: false,
        protocol: None,
    };
    cmd_generate(&Run::resolve(&args("data", None)).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let csv = root.path().join("data/dataset.csv");

    let mut runs = Vec::new();
    for (name, exec) in [
        ("seq-a", Exec::sequential()),
        ("seq-b", Exec::sequential()),
        ("par", Exec::with_threads(4)),
    ] {
        let run = Run::resolve(&args(name, Some(&csv))).map_err(|e| e.to_string())?;
        cmd_evaluate(&run, &exec).map_err(|e| e.to_string())?;
        runs.push(snapshot(&root.path().join(name)));
    }
    ensure(runs[0].iter().any(|(n, _)| n == "report.json"), || "no report.json written".into())?;
    ensure(runs[0] == runs[1], || "two sequential runs differ".into())?;
    ensure(runs[0] == runs[2], || "sequential and parallel runs differ".into())?;
    let bytes: usize = runs[0].iter().map(|(_, b)| b.len()).sum();
    Ok(format!("{} files ({bytes} bytes) identical across 3 runs", runs[0].len()))
}

// 10 ──────────────────────────────────────────────────────────────────────

fn serialization() -> Outcome {
    let data = default_cohort(3);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = stream_rng(10, 0);
    let probes: Vec<Vec<f64>> = (0..100)
        .map(|_| {
            let row = data.row(rng.random_range(0..data.n_rows()));
            row.iter().map(|v| v + rng.random_range(-0.5..0.5)).collect()
        })
        .collect();
    let hps = [
        Hyperparams::Ann(AnnHyperparams {
            epochs: 50,
            ..AnnHyperparams::default()
        }),
        Hyperparams::Svm(SvmHyperparams::default()),
        Hyperparams::Forest(ForestHyperparams::default()),
    ];
    for hp in hps {
        let kind = hp.kind();
        let (clf, _) = fit_classifier(&data, &hp, 1, &Exec::sequential()).map_err(|e| e.to_string())?;
        let path = dir.path().join(format!("{kind}.hmrk"));
        save_classifier(&clf, &path).map_err(|e| e.to_string())?;
        let back = load_classifier(&path).map_err(|e| e.to_string())?;
        ensure(encode_classifier(&back) == encode_classifier(&clf), || format!("{kind}: re-encoding differs"))?;
        for (i, p) in probes.iter().enumerate() {
            let (a, b) = (clf.predict(p).unwrap(), back.predict(p).unwrap());
            ensure(a.0 == b.0 && a.1.to_bits() == b.1.to_bits(), || format!("{kind}: probe {i} {a:?} vs {b:?}"))?;
        }
    }
    Ok("ann, svm and forest: 100 probes bit-identical after reload".into())
}

// ─────────────────────────────────────────────────────────────────────────

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("gradient check vs central differences", 10, gradient_check),
        ("XOR learnability", 5, xor),
        ("SMO validity", 30, smo),
        ("best split vs brute force", 10, split_oracle),
        ("AUC vs concordance", 5, auc_identity),
        ("stratification", 5, stratification),
        ("metric arithmetic", 5, metric_sweep),
        ("end-to-end sanity band", 60, end_to_end),
        ("evaluate determinism", 120, determinism),
        ("model round trip", 5, serialization),
    ];
    let mut failures = 0;
    for (i, (name, budget, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(budget);
        let (status, detail) = match (&outcome, in_time) {
            (Ok(d), true) => ("PASS", d.clone()),
            (Ok(d), false) => ("FAIL", format!("{d}; over the time budget")),
            (Err(e), _) => ("FAIL", e.clone()),
        };
        if status == "FAIL" {
            failures += 1;
        }
        println!(
            "{status} [{:>2}] {name}: {detail} ({:.2} s / {budget} s)",
            i + 1,
            elapsed.as_secs_f64()
        );
    }
    println!("{} of 10 criteria passed", 10 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
