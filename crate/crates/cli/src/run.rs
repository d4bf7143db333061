//! `train` and `compare`.

use std::fs;
use std::path::Path;

use gspace_core::data::{avg_pool_downsample, load_idx, synthetic_blobs, Dataset, Split};
use gspace_core::metrics::EpochRecord;
use gspace_core::nn::WeightVector;
use gspace_core::optim::{basis_values, gsgd_step, he_init, sgd_step, skeleton_init};
use gspace_core::scaling::{apply_scaling, ScalingVector};
use gspace_core::train::{init_rng, shuffle_rng, train, OptimizerKind, TrainConfig, TrainOutcome};
use gspace_core::{build_skeleton, checkpoint, Architecture, Error, SkeletonPlan};
use rand::seq::SliceRandom;
use serde_json::{json, Value};

use crate::config::{DataSource, InitKind, RunConfig};

pub struct Datasets {
    pub train: Dataset,
    pub test: Option<Dataset>,
}

pub fn load_data(cfg: &RunConfig) -> gspace_core::Result<Datasets> {
    let seed = cfg.train.seed;
    let (train, test) = match &cfg.data {
        DataSource::Blobs(b) => {
            let train = synthetic_blobs(
                seed,
                b.n_per_class,
                b.dim,
                b.classes,
                b.spread,
                Split::Train,
            )?;
            let test = (b.test_per_class > 0)
                .then(|| {
                    synthetic_blobs(
                        seed.wrapping_add(1),
                        b.test_per_class,
                        b.dim,
                        b.classes,
                        b.spread,
                        Split::Test,
                    )
                })
                .transpose()?;
            (train, test)
        }
        DataSource::Idx(idx) => {
            let pool = |d: Dataset| {
                if idx.downsample > 1 {
                    avg_pool_downsample(&d, idx.downsample)
                } else {
                    Ok(d)
                }
            };
            let train = pool(load_idx(
                &idx.train_images,
                &idx.train_labels,
                Split::Train,
            )?)?;
            let test = idx
                .test
                .as_ref()
                .map(|(i, l)| load_idx(i, l, Split::Test).and_then(pool))
                .transpose()?;
            (train, test)
        }
    };
    for d in std::iter::once(&train).chain(test.as_ref()) {
        if d.dim() != cfg.arch.input_dim() {
            return Err(Error::InputShape {
                expected: cfg.arch.input_dim(),
                got: d.dim(),
            });
        }
    }
    Ok(Datasets { train, test })
}

/// Initial weights before any `init_scale` is applied.
pub fn base_init(cfg: &RunConfig, plan: &SkeletonPlan) -> WeightVector {
    let mut rng = init_rng(cfg.train.seed);
    match cfg.init {
        InitKind::Skeleton => skeleton_init(&cfg.arch, plan, &mut rng),
        InitKind::He => he_init(&cfg.arch, &mut rng),
    }
}

fn scaled(arch: &Architecture, w: &WeightVector, c: f64) -> gspace_core::Result<WeightVector> {
    if c == 1.0 {
        return Ok(w.clone());
    }
    apply_scaling(arch, w, &ScalingVector::uniform(arch, c)?)
}

fn finite(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn record_json(r: &EpochRecord) -> Value {
    json!({
        "epoch": r.epoch,
        "train_loss": finite(r.train_loss),
        "train_acc": finite(r.train_acc),
        "test_loss": finite(r.test_loss),
        "test_acc": finite(r.test_acc),
        "wall_ms": r.wall_ms,
    })
}

fn config_json(cfg: &RunConfig) -> Value {
    let data = match &cfg.data {
        DataSource::Blobs(b) => json!({
            "source": "blobs",
            "n_per_class": b.n_per_class,
            "test_per_class": b.test_per_class,
            "dim": b.dim,
            "classes": b.classes,
            "spread": b.spread,
        }),
        DataSource::Idx(i) => json!({
            "source": "idx",
            "train_images": i.train_images,
            "train_labels": i.train_labels,
            "test": i.test,
            "downsample": i.downsample,
        }),
    };
    json!({
        "arch": cfg.arch.widths(),
        "optimizer": cfg.train.optimizer.to_string(),
        "learning_rate": cfg.train.learning_rate,
        "batch_size": cfg.train.batch_size,
        "epochs": cfg.train.epochs,
        "seed": cfg.train.seed,
        "loss": cfg.train.loss.to_string(),
        "lr_schedule": cfg.train.lr_schedule,
        "init": cfg.init.to_string(),
        "init_scale": cfg.init_scale,
        "data": data,
    })
}

fn arch_json(arch: &Architecture) -> Value {
    json!({
        "num_edges": arch.num_edges(),
        "num_hidden": arch.num_hidden(),
        "num_basis": arch.num_edges() - arch.num_hidden(),
        "invariant_ratio": arch.invariant_ratio(),
    })
}

fn write_json(path: &Path, value: &Value) -> gspace_core::Result<()> {
    let text = serde_json::to_string_pretty(value).expect("json values serialize");
    fs::write(path, text + "\n").map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn create_dir(dir: &Path) -> gspace_core::Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

pub fn cmd_train(cfg: &RunConfig) -> gspace_core::Result<()> {
    let data = load_data(cfg)?;
    let plan = build_skeleton(&cfg.arch);
    let init = scaled(&cfg.arch, &base_init(cfg, &plan), cfg.init_scale)?;
    let outcome = train(
        &cfg.arch,
        &cfg.train,
        &data.train,
        data.test.as_ref(),
        init,
        Some(&plan),
    )?;
    create_dir(&cfg.out_dir)?;
    let last = outcome.metrics.last().expect("initial record");
    let mut summary = json!({
        "command": "train",
        "config": config_json(cfg),
        "architecture": arch_json(&cfg.arch),
        "train_examples": data.train.len(),
        "test_examples": data.test.as_ref().map_or(0, Dataset::len),
        "final": record_json(last),
        "rejected_steps": outcome.metrics.rejected_steps,
    });
    if cfg.train.epochs > 0 {
        outcome.metrics.save_csv(&cfg.out_dir.join("metrics.csv"))?;
        checkpoint::save(
            &cfg.out_dir.join("weights.bin"),
            &cfg.arch,
            &outcome.weights,
        )?;
        summary["files"] = json!(["metrics.csv", "weights.bin", "summary.json"]);
    } else {
        summary["files"] = json!(["summary.json"]);
    }
    write_json(&cfg.out_dir.join("summary.json"), &summary)?;
    println!(
        "{} on {}: epoch {} train loss {:.6} acc {:.4}; wrote {}",
        cfg.train.optimizer,
        cfg.arch,
        last.epoch,
        last.train_loss,
        last.train_acc,
        cfg.out_dir.display()
    );
    Ok(())
}

/// Largest relative gap between two basis-value trajectories.
fn trajectory_gap(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| {
            let scale = x.abs().max(y.abs());
            if scale == 0.0 {
                0.0
            } else {
                (x - y).abs() / scale
            }
        })
        .fold(
            0.0,
            |m, g| if g.is_nan() { f64::INFINITY } else { m.max(g) },
        )
}

fn trajectory(
    cfg: &RunConfig,
    optimizer: OptimizerKind,
    plan: &SkeletonPlan,
    start: &WeightVector,
    data: &Dataset,
    batches: &[&[usize]],
) -> gspace_core::Result<Vec<Vec<f64>>> {
    let mut w = start.clone();
    let mut out = Vec::with_capacity(batches.len());
    for chunk in batches {
        let batch = data.samples(chunk);
        w = match optimizer {
            OptimizerKind::Sgd => {
                sgd_step(&cfg.arch, &w, &batch, cfg.compare.sgd_lr, cfg.train.loss)?
            }
            OptimizerKind::Gsgd => gsgd_step(
                &cfg.arch,
                &w,
                &batch,
                cfg.compare.gsgd_lr,
                plan,
                cfg.train.loss,
            )?,
        };
        out.push(basis_values(&w, plan)?);
    }
    Ok(out)
}

fn final_train_loss(o: &TrainOutcome) -> f64 {
    o.metrics.last().map_or(f64::NAN, |r| r.train_loss)
}

fn final_test_acc(o: &TrainOutcome) -> f64 {
    o.metrics.last().map_or(f64::NAN, |r| r.test_acc)
}

pub fn cmd_compare(cfg: &RunConfig) -> gspace_core::Result<()> {
    let data = load_data(cfg)?;
    let plan = build_skeleton(&cfg.arch);
    let balanced = base_init(cfg, &plan);
    let unbalanced = scaled(&cfg.arch, &balanced, cfg.compare.scale)?;
    create_dir(&cfg.out_dir)?;

    let run = |optimizer, init: &WeightVector| {
        let config = TrainConfig {
            optimizer,
            learning_rate: match optimizer {
                OptimizerKind::Sgd => cfg.compare.sgd_lr,
                OptimizerKind::Gsgd => cfg.compare.gsgd_lr,
            },
            ..cfg.train.clone()
        };
        train(
            &cfg.arch,
            &config,
            &data.train,
            data.test.as_ref(),
            init.clone(),
            Some(&plan),
        )
    };
    let mut finals = serde_json::Map::new();
    let mut outcomes = Vec::new();
    for (init_name, init) in [("balanced", &balanced), ("scaled", &unbalanced)] {
        for optimizer in [OptimizerKind::Sgd, OptimizerKind::Gsgd] {
            let outcome = run(optimizer, init)?;
            let name = format!("{optimizer}_{init_name}");
            outcome
                .metrics
                .save_csv(&cfg.out_dir.join(format!("{name}.csv")))?;
            finals.insert(
                name.clone(),
                record_json(outcome.metrics.last().expect("initial record")),
            );
            outcomes.push((name, outcome));
        }
    }
    let get = |n: &str| {
        &outcomes
            .iter()
            .find(|(k, _)| k == n)
            .expect("run present")
            .1
    };
    let delta = |init: &str| {
        let (s, g) = (get(&format!("sgd_{init}")), get(&format!("gsgd_{init}")));
        json!({
            "train_loss_sgd_minus_gsgd": finite(final_train_loss(s) - final_train_loss(g)),
            "test_acc_gsgd_minus_sgd": finite(final_test_acc(g) - final_test_acc(s)),
        })
    };

    let mut order: Vec<usize> = (0..data.train.len()).collect();
    order.shuffle(&mut shuffle_rng(cfg.train.seed));
    let batches: Vec<&[usize]> = order
        .chunks(cfg.train.batch_size)
        .cycle()
        .take(cfg.compare.trajectory_steps)
        .collect();
    let mut divergence = [0.0; 2];
    for (slot, optimizer) in divergence
        .iter_mut()
        .zip([OptimizerKind::Sgd, OptimizerKind::Gsgd])
    {
        let a = trajectory(cfg, optimizer, &plan, &balanced, &data.train, &batches)?;
        let b = trajectory(cfg, optimizer, &plan, &unbalanced, &data.train, &batches)?;
        *slot = trajectory_gap(&a, &b);
    }

    let loss_gap = |opt: &str| {
        let (a, b) = (
            final_train_loss(get(&format!("{opt}_balanced"))),
            final_train_loss(get(&format!("{opt}_scaled"))),
        );
        finite((a - b).abs() / a.abs().max(b.abs()))
    };
    let summary = json!({
        "command": "compare",
        "config": config_json(cfg),
        "architecture": arch_json(&cfg.arch),
        "compare": {
            "sgd_lr": cfg.compare.sgd_lr,
            "gsgd_lr": cfg.compare.gsgd_lr,
            "scale": cfg.compare.scale,
            "trajectory_steps": cfg.compare.trajectory_steps,
        },
        "final": finals,
        "delta": { "balanced": delta("balanced"), "scaled": delta("scaled") },
        "balanced_vs_scaled_final_loss_rel_gap": { "sgd": loss_gap("sgd"), "gsgd": loss_gap("gsgd") },
        "trajectory_divergence": { "sgd": finite(divergence[0]), "gsgd": finite(divergence[1]) },
    });
    write_json(&cfg.out_dir.join("compare.json"), &summary)?;
    println!(
        "invariant ratio H/m = {}/{} = {:.4e}",
        cfg.arch.num_hidden(),
        cfg.arch.num_edges(),
        cfg.arch.invariant_ratio()
    );
    for (name, outcome) in &outcomes {
        println!(
            "{name:>14}: final train loss {:.6}",
            final_train_loss(outcome)
        );
    }
    println!(
        "trajectory divergence over {} steps: sgd {:.3e}, gsgd {:.3e}",
        cfg.compare.trajectory_steps, divergence[0], divergence[1]
    );
    println!("wrote {}", cfg.out_dir.display());
    Ok(())
}
