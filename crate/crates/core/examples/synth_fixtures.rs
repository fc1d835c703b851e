//! Regenerates `fixtures/synthetic_classes.emb` and
//! `fixtures/synthetic_clips.emb` from a fixed seed.
//!
//! Class vectors are orthonormalized random directions. Every clip mixes
//! its true class with one class that is not scheduled at the clip's
//! timestamp. For roughly 40% of clips the distractor wins by a small margin, so an unrestricted argmax lands outside the scheduled task
//! while the winning probability stays well below one. That keeps the
//! restricted confidence above the baseline one for every clip, including
//! those whose predicted label changes.
//!
//! ```text
//! cargo run -p taskscope --example synth_fixtures -- fixtures
//! ```

use std::path::PathBuf;

use chrono::{Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taskscope::{ClassEmbeddingTable, ClipRecord, ClipSet, EmbeddingVector, LabelRegistry};

const SEED: u64 = 20230501;
const DIM: usize = 32;
const CLIPS_PER_TASK: usize = 30;
const DOMINATED_SHARE: f64 = 0.4;

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; good enough for fixture noise
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn unit(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..DIM).map(|_| gaussian(rng)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..");
    let out_dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| root.join("fixtures"));
    let registry = LabelRegistry::load(root.join("fixtures/site_registry.json"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);

    let mut table = ClassEmbeddingTable::new(DIM);
    let mut class_vecs: Vec<Vec<f64>> = Vec::new();
    for label in registry.labels() {
        // Gram-Schmidt against the classes so far; 18 labels fit in 32 dims
        let mut v = unit(&mut rng);
        for prev in &class_vecs {
            let d: f64 = v.iter().zip(prev).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(prev).for_each(|(a, b)| *a -= d * b);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
        table.insert(&label.id, v.iter().map(|&x| x as f32).collect())?;
        class_vecs.push(v);
    }

    // windows in UTC: 14:00-22:30 on the scheduled day
    let windows = [
        (
            "task-1",
            Utc.with_ymd_and_hms(2023, 5, 1, 14, 0, 0).unwrap(),
        ),
        (
            "task-2",
            Utc.with_ymd_and_hms(2023, 5, 2, 14, 0, 0).unwrap(),
        ),
    ];
    let mut clips = Vec::new();
    let mut dominated = 0;
    for (task_id, start) in windows {
        let task = registry.task(task_id).expect("fixture task");
        let outside: Vec<usize> = (0..registry.len())
            .filter(|&i| !task.activity_ids.contains(&registry.labels()[i].id))
            .collect();
        for k in 0..CLIPS_PER_TASK {
            let truth_id = task.activity_ids.choose(&mut rng).unwrap();
            let truth = registry.index_of(truth_id).unwrap();
            let distractor = *outside.choose(&mut rng).unwrap();
            let (a, b) = if rng.gen_bool(DOMINATED_SHARE) {
                dominated += 1;
                (0.70, 0.74)
            } else {
                (0.75, 0.70)
            };
            let noise = unit(&mut rng);
            let raw: Vec<f32> = (0..DIM)
                .map(|d| {
                    (a * class_vecs[truth][d] + b * class_vecs[distractor][d] + 0.03 * noise[d])
                        as f32
                })
                .collect();
            let timestamp = start + Duration::minutes(15 * k as i64 + 5);
            clips.push(ClipRecord {
                clip_id: format!("{task_id}-s{k:02}"),
                timestamp,
                ground_truth: Some(truth_id.clone()),
                embedding: EmbeddingVector::from_f32(&raw)?.normalize()?,
                raw,
            });
        }
    }
    let set = ClipSet {
        dim: Some(DIM),
        clips,
    };
    std::fs::write(out_dir.join("synthetic_classes.emb"), table.to_text())?;
    std::fs::write(out_dir.join("synthetic_clips.emb"), set.to_text())?;
    eprintln!(
        "wrote {} classes and {} clips ({} distractor-dominated)",
        table.len(),
        set.len(),
        dominated
    );
    Ok(())
}
