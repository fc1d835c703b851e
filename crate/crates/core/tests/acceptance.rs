//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any of them fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use taskscope::cli::read_predictions;
use taskscope::evaluation::summarize_run;
use taskscope::{
    argmax, compute_metrics, info_nce, restrict_soft, softmax, union_label_spaces, Averaging,
    ClassEmbeddingTable, ConfusionMatrix, EmbeddingVector, LabelRegistry, LogitVector,
    RunArtifacts,
};

type Outcome = Result<String, String>;
type Check = (&'static str, fn() -> Outcome);

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Random logit vector plus a random proper subset that contains `probe`.
struct Case {
    logits: Vec<f64>,
    subset: Vec<usize>,
    probe: usize,
}

fn random_case(rng: &mut ChaCha8Rng) -> Case {
    let n = rng.gen_range(2..=50);
    let logits: Vec<f64> = (0..n).map(|_| rng.gen_range(-100.0..=100.0)).collect();
    let probe = rng.gen_range(0..n);
    let size = rng.gen_range(1..n);
    let mut subset: Vec<usize> = sample(rng, n - 1, size - 1)
        .into_iter()
        .map(|i| if i >= probe { i + 1 } else { i })
        .collect();
    subset.push(probe);
    subset.sort_unstable();
    Case {
        logits,
        subset,
        probe,
    }
}

const SWEEP: usize = 5000;

fn monotonicity() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut strict_cases = 0;
    for k in 0..SWEEP {
        let c = random_case(&mut rng);
        let full = softmax(&c.logits).map_err(|e| e.to_string())?;
        let sub: Vec<f64> = c.subset.iter().map(|&i| c.logits[i]).collect();
        let restricted = softmax(&sub).map_err(|e| e.to_string())?;
        let pos = c.subset.iter().position(|&i| i == c.probe).unwrap();
        let (p_f, p_s) = (full[c.probe], restricted[pos]);
        let removed: f64 = (0..c.logits.len())
            .filter(|i| !c.subset.contains(i))
            .map(|i| full[i])
            .sum();
        ensure(p_s >= p_f * (1.0 - 1e-12), || {
            format!("case {k}: {p_s} < {p_f}")
        })?;
        if removed > 1e-12 {
            strict_cases += 1;
            ensure(p_s > p_f, || {
                format!("case {k}: removed mass {removed:e} but {p_s} == {p_f}")
            })?;
        }
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(5), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "{SWEEP} cases, {strict_cases} strict, {elapsed:.2?}"
    ))
}

fn argmax_preservation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut checked = 0;
    for k in 0..SWEEP {
        let c = random_case(&mut rng);
        let full_arg = argmax(&softmax(&c.logits).map_err(|e| e.to_string())?).unwrap();
        if !c.subset.contains(&full_arg) {
            continue;
        }
        let sub: Vec<f64> = c.subset.iter().map(|&i| c.logits[i]).collect();
        let restricted_arg = c.subset[argmax(&softmax(&sub).map_err(|e| e.to_string())?).unwrap()];
        checked += 1;
        ensure(restricted_arg == full_arg, || {
            format!("case {k}: full argmax {full_arg}, restricted {restricted_arg}")
        })?;
    }
    Ok(format!(
        "{checked} cases with the argmax kept, 0 violations"
    ))
}

fn synthetic_registry(n: usize) -> LabelRegistry {
    let labels: Vec<String> = (0..n)
        .map(|i| format!(r#"{{"id":"l{i}","display_name":"L{i}","prompt":"l{i}"}}"#))
        .collect();
    LabelRegistry::from_json(&format!(
        r#"{{"labels":[{}],"tasks":[]}}"#,
        labels.join(",")
    ))
    .unwrap()
}

fn soft_limits() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let lambdas = [0.0, 0.5, 1.0, 2.0, 5.0, 10.0];
    for k in 0..100 {
        let c = random_case(&mut rng);
        let reg = synthetic_registry(c.logits.len());
        let ids: Vec<String> = c.subset.iter().map(|i| format!("l{i}")).collect();
        let space = reg
            .label_space_from_ids(&ids, taskscope::Provenance::Fallback)
            .map_err(|e| e.to_string())?;
        let logits = LogitVector {
            values: c.logits.clone(),
            space: reg.full_space(),
        };
        let soft = |lambda: f64| -> Result<Vec<f64>, String> {
            let v = restrict_soft(&logits, &space, lambda).map_err(|e| e.to_string())?;
            softmax(&v.values).map_err(|e| e.to_string())
        };
        let full = softmax(&c.logits).unwrap();
        ensure(soft(0.0)? == full, || {
            format!("case {k}: lambda=0 differs from unrestricted")
        })?;

        let sub: Vec<f64> = c.subset.iter().map(|&i| c.logits[i]).collect();
        let hard = softmax(&sub).unwrap();
        let big = soft(1e9)?;
        for (pos, &i) in c.subset.iter().enumerate() {
            ensure((big[i] - hard[pos]).abs() <= 1e-9, || {
                format!(
                    "case {k}: lambda=1e9 gives {} for class {i}, hard gives {}",
                    big[i], hard[pos]
                )
            })?;
        }

        let mut prev = soft(lambdas[0])?;
        for &lambda in &lambdas[1..] {
            let cur = soft(lambda)?;
            for &i in &c.subset {
                ensure(cur[i] >= prev[i] * (1.0 - 1e-12), || {
                    format!("case {k}: class {i} drops to {} at lambda={lambda}", cur[i])
                })?;
            }
            prev = cur;
        }
    }
    Ok("100 cases".into())
}

fn reference_runs() -> Outcome {
    let runs = [
        ("task-1_baseline", 5, 14, 35.71),
        ("task-1_restricted", 8, 14, 57.14),
        ("task-2_baseline", 3, 13, 23.08),
        ("task-2_restricted", 7, 13, 53.85),
    ];
    let mut rows = Vec::new();
    for (name, correct, total, published) in runs {
        let preds = read_predictions(&fixture(&format!("reference_runs/{name}.jsonl")))
            .map_err(|e| e.to_string())?;
        let run = RunArtifacts::from_predictions(preds, None);
        let m = summarize_run(&run, Averaging::Weighted)
            .map_err(|e| e.to_string())?
            .metrics;
        ensure(m.correct == correct && m.total == total, || {
            format!("{name}: {}/{} correct", m.correct, m.total)
        })?;
        ensure((m.accuracy * 100.0 - published).abs() <= 0.005, || {
            format!(
                "{name}: accuracy {:.4}% vs {published}%",
                m.accuracy * 100.0
            )
        })?;
        check_identities(&m).map_err(|e| format!("{name}: {e}"))?;
        rows.push(format!("{name} {}", m.render_row().replace('\t', " ")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for k in 0..500 {
        let n = rng.gen_range(2..=12);
        let labels: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
        let counts: Vec<Vec<u64>> = (0..n)
            .map(|_| {
                (0..n)
                    .map(|_| {
                        if rng.gen_bool(0.3) {
                            0
                        } else {
                            rng.gen_range(0..20)
                        }
                    })
                    .collect()
            })
            .collect();
        let cm = ConfusionMatrix::from_counts(labels, counts).unwrap();
        if cm.total() == 0 {
            continue;
        }
        let m = compute_metrics(&cm, Averaging::Weighted).map_err(|e| e.to_string())?;
        check_identities(&m).map_err(|e| format!("random matrix {k}: {e}"))?;
    }
    Ok(format!("{}; 500 random matrices", rows.join("; ")))
}

fn check_identities(m: &taskscope::MetricsReport) -> Result<(), String> {
    ensure((m.weighted_avg.recall - m.accuracy).abs() <= 1e-12, || {
        format!(
            "weighted recall {} vs accuracy {}",
            m.weighted_avg.recall, m.accuracy
        )
    })?;
    ensure(
        m.micro_avg.precision == m.accuracy && m.micro_avg.recall == m.accuracy,
        || {
            format!(
                "micro P {} / R {} vs accuracy {}",
                m.micro_avg.precision, m.micro_avg.recall, m.accuracy
            )
        },
    )
}

fn label_spaces() -> Outcome {
    let reg = LabelRegistry::load(fixture("site_registry.json")).map_err(|e| e.to_string())?;
    let t1 = reg
        .label_space_for_task("task-1")
        .map_err(|e| e.to_string())?;
    let t2 = reg
        .label_space_for_task("task-2")
        .map_err(|e| e.to_string())?;
    let union = union_label_spaces(&[t1.clone(), t2.clone()]).map_err(|e| e.to_string())?;
    let sizes = (t1.len(), t2.len(), union.len(), reg.full_space().len());
    ensure(sizes == (6, 5, 7, 18), || format!("got {sizes:?}"))?;
    Ok("task-1 6, task-2 5, union 7, full 18".into())
}

fn infonce() -> Outcome {
    let v = |x: &[f64]| EmbeddingVector::new(x.to_vec()).unwrap();
    let single = info_nce(&[(v(&[0.3, -1.2, 2.0]), v(&[1.0, 0.5, 0.1]))], 0.07)
        .map_err(|e| e.to_string())?;
    ensure(single == 0.0, || format!("N=1 gives {single}"))?;
    let pairs = [
        (v(&[1.0, 0.0]), v(&[1.0, 0.0])),
        (v(&[0.0, 1.0]), v(&[0.0, 1.0])),
    ];
    let loss = info_nce(&pairs, 1.0).map_err(|e| e.to_string())?;
    let expected = (1.0 + (-1.0f64).exp()).ln();
    ensure((loss - expected).abs() <= 1e-9, || {
        format!("identity gives {loss}, expected {expected}")
    })?;
    Ok(format!("N=1 -> 0, identity N=2 -> {loss:.12}"))
}

fn run_cli(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_taskscope"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "`taskscope {}` failed: {}",
            args[0],
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(out.stdout)
}

fn predict_args<'a>(mode: &'a str, paths: &'a [String; 4]) -> Vec<&'a str> {
    vec![
        "predict",
        "--registry",
        &paths[0],
        "--schedule",
        &paths[1],
        "--classes",
        &paths[2],
        "--clips",
        &paths[3],
        "--mode",
        mode,
    ]
}

fn fixture_paths() -> [String; 4] {
    [
        "site_registry.json",
        "site_schedule.json",
        "synthetic_classes.emb",
        "synthetic_clips.emb",
    ]
    .map(|f| fixture(f).to_string_lossy().into_owned())
}

fn near_orthogonal(classes: &ClassEmbeddingTable) -> f64 {
    let e = classes.entries();
    let mut worst: f64 = 0.0;
    for (i, a) in e.iter().enumerate() {
        for b in &e[i + 1..] {
            worst = worst.max(a.embedding.dot(&b.embedding).unwrap().abs());
        }
    }
    worst
}

fn synthetic_lift() -> Outcome {
    let started = Instant::now();
    let paths = fixture_paths();
    let classes = ClassEmbeddingTable::load(&paths[2]).map_err(|e| e.to_string())?;
    ensure(classes.dim() == 32 && classes.len() == 18, || {
        format!("{} classes of dim {}", classes.len(), classes.dim())
    })?;
    let max_cos = near_orthogonal(&classes);

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let base = dir.path().join("off.jsonl");
    let restr = dir.path().join("hard.jsonl");
    let mut off = predict_args("off", &paths);
    off.extend(["--out", base.to_str().unwrap()]);
    run_cli(&off)?;
    let mut hard = predict_args("hard", &paths);
    hard.extend(["--out", restr.to_str().unwrap()]);
    run_cli(&hard)?;
    let report: Value = serde_json::from_slice(&run_cli(&[
        "compare",
        "--baseline",
        base.to_str().unwrap(),
        "--restricted",
        restr.to_str().unwrap(),
    ])?)
    .map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();

    // the restricted run's label list is the scheduled set for that clip
    let scheduled = read_predictions(&restr).map_err(|e| e.to_string())?;
    let per_clip = report["per_clip"].as_array().ok_or("missing per_clip")?;
    let n = per_clip.len();
    let outside = per_clip
        .iter()
        .zip(&scheduled)
        .filter(|(c, p)| !p.labels.iter().any(|l| c["baseline_label"] == l.as_str()))
        .count();
    let acc = |run: &str| report[run]["metrics"]["accuracy"].as_f64().unwrap();
    let (acc_b, acc_r) = (acc("baseline"), acc("restricted"));
    let min_delta = per_clip
        .iter()
        .map(|c| c["confidence_delta"].as_f64().unwrap())
        .fold(f64::INFINITY, f64::min);

    ensure(max_cos < 0.1, || {
        format!("class embeddings not near-orthogonal: max |cos| {max_cos}")
    })?;
    ensure(n >= 50, || format!("only {n} clips"))?;
    ensure(outside * 10 >= n * 3, || {
        format!("{outside}/{n} baseline argmaxes off schedule")
    })?;
    ensure(acc_r >= acc_b, || {
        format!("accuracy {acc_r} < baseline {acc_b}")
    })?;
    ensure(min_delta > 0.0, || {
        format!("smallest confidence delta {min_delta:e}")
    })?;
    ensure(elapsed < Duration::from_secs(10), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "{n} clips, {outside} off-schedule baseline argmaxes, max |cos| between classes {max_cos:.1e}, \
         accuracy {:.2}% -> {:.2}%, min confidence delta {min_delta:.2e}, {elapsed:.2?}",
        acc_b * 100.0,
        acc_r * 100.0
    ))
}

fn determinism() -> Outcome {
    let paths = fixture_paths();
    for mode in ["off", "hard", "soft"] {
        let mut args = predict_args(mode, &paths);
        args.extend(["--lambda", "2"]);
        let a = run_cli(&args)?;
        let b = run_cli(&args)?;
        ensure(!a.is_empty() && a == b, || {
            format!("mode {mode} output differs")
        })?;
    }
    Ok("off, hard and soft runs byte-identical".into())
}

fn main() {
    let checks: [Check; 8] = [
        ("restriction monotonicity", monotonicity),
        ("argmax preservation", argmax_preservation),
        ("soft-restriction limits", soft_limits),
        ("metric arithmetic", reference_runs),
        ("label-space fixtures", label_spaces),
        ("InfoNCE diagnostic", infonce),
        ("synthetic confidence lift", synthetic_lift),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
