//! Acceptance checks. Runs without the libtest harness so every criterion
//! prints one PASS/FAIL line; the process fails if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use common::*;
use gspace_core::data::{synthetic_blobs, Split};
use gspace_core::nn::{forward, LossSpec, Sample, Target, WeightVector};
use gspace_core::optim::{
    basis_values, gsgd_step, icr_gradients, sgd_step, skeleton_init, weight_allocation,
};
use gspace_core::paths::{
    activation_pattern, enumerate_paths, exact_rank, path_sum_output, path_value, structure_matrix,
    DEFAULT_ENUMERATION_CAP,
};
use gspace_core::scaling::{apply_scaling, ScalingVector};
use gspace_core::skeleton::{build_skeleton, verify_basis};
use gspace_core::train::{init_rng, train, OptimizerKind, TrainConfig, TrainOutcome};
use gspace_core::{Architecture, SkeletonPlan};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SMALL: [&str; 6] = ["2,1,2", "3,2", "2,2,2", "3,4,2", "2,3,2,2", "3,3,3,3"];
const DESK: &str = "49,8,8,10";

fn arch(s: &str) -> Architecture {
    Architecture::parse(s).unwrap()
}

fn all_archs() -> Vec<Architecture> {
    SMALL.iter().chain([&DESK]).map(|s| arch(s)).collect()
}

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        ok,
        detail: detail.into(),
    }
}

/// Largest `|a_k - b_k| / max(|a|_inf, |b|_inf)` between two output vectors.
fn vector_rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = a
        .iter()
        .chain(b)
        .fold(0.0f64, |acc, x| acc.max(x.abs()))
        .max(f64::MIN_POSITIVE);
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / scale)
        .fold(0.0, f64::max)
}

fn rank_theorem() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for s in SMALL {
        let a = arch(s);
        let sm = structure_matrix(&a, DEFAULT_ENUMERATION_CAP).unwrap();
        let rank = exact_rank(&sm);
        let target = a.num_edges() - a.num_hidden();
        // Independent enumeration and modular rank as a cross-check.
        let naive = naive_paths(&a);
        let lib: Vec<Vec<usize>> = enumerate_paths(&a, DEFAULT_ENUMERATION_CAP)
            .unwrap()
            .iter()
            .map(|p| p.edges().to_vec())
            .collect();
        let mut sorted_naive = naive.clone();
        sorted_naive.sort();
        let mut sorted_lib = lib;
        sorted_lib.sort();
        let oracle = rank_mod_p(a.num_edges(), &naive);
        ok &= rank == target && oracle == target && sorted_naive == sorted_lib;
        details.push(format!("{a} rank {rank}/{target}"));
    }
    outcome(ok, details.join(", "))
}

fn basis_validity() -> Outcome {
    let mut ok = true;
    let mut failing = Vec::new();
    for a in all_archs() {
        let plan = build_skeleton(&a);
        let report = verify_basis(&a, &plan);
        if !report.all_ok() {
            ok = false;
            failing.push(format!("{a}: {report:?}"));
        }
    }
    let desk = arch(DESK);
    let count = build_skeleton(&desk).num_basis();
    ok &= count == 520 && desk.num_edges() == 536 && desk.num_hidden() == 16;
    let detail = if failing.is_empty() {
        format!("all 7 architectures valid, {desk} basis count {count}")
    } else {
        failing.join("; ")
    };
    outcome(ok, detail)
}

fn scaling_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(301);
    let (mut worst_out, mut worst_path) = (0.0f64, 0.0f64);
    let mut patterns_equal = true;
    let mut guarded = 0;
    for a in all_archs() {
        let paths = enumerate_paths(&a, DEFAULT_ENUMERATION_CAP).unwrap();
        let mut done = 0;
        while done < 100 {
            let w = random_weights(&a, &mut rng);
            let x = random_input(a.input_dim(), &mut rng);
            let g =
                ScalingVector::new(random_factors(a.num_hidden(), 0.1, 10.0, &mut rng)).unwrap();
            let gw = apply_scaling(&a, &w, &g).unwrap();
            if kink_margin(&a, &w, &[&x]) < 1e-6 || kink_margin(&a, &gw, &[&x]) < 1e-6 {
                guarded += 1;
                continue;
            }
            let before = forward(&a, &w, &x).unwrap().outputs;
            let after = forward(&a, &gw, &x).unwrap().outputs;
            worst_out = worst_out.max(vector_rel_err(&before, &after));
            for p in &paths {
                worst_path = worst_path.max(rel_err(path_value(&w, p), path_value(&gw, p), 0.0));
            }
            patterns_equal &=
                activation_pattern(&a, &w, &x).unwrap() == activation_pattern(&a, &gw, &x).unwrap();
            done += 1;
        }
    }
    outcome(
        worst_out <= 1e-9 && worst_path <= 1e-10 && patterns_equal,
        format!(
            "max output rel err {worst_out:.2e}, max path rel err {worst_path:.2e}, patterns equal {patterns_equal}, {guarded} draws kink-guarded"
        ),
    )
}

fn random_batch<'a, R: Rng>(
    a: &Architecture,
    n: usize,
    loss: LossSpec,
    inputs: &'a mut Vec<Vec<f64>>,
    targets: &'a mut Vec<Vec<f64>>,
    rng: &mut R,
) -> Vec<Sample<'a>> {
    inputs.clear();
    targets.clear();
    let mut labels = Vec::new();
    for _ in 0..n {
        inputs.push(random_input(a.input_dim(), rng));
        targets.push(random_input(a.output_dim(), rng));
        labels.push(rng.gen_range(0..a.output_dim()));
    }
    inputs
        .iter()
        .zip(targets.iter())
        .zip(labels)
        .map(|((x, t), y)| Sample {
            x,
            target: match loss {
                LossSpec::MeanSquaredError => Target::Values(t),
                LossSpec::SoftmaxCrossEntropy => Target::Class(y),
            },
        })
        .collect()
}

fn icr_gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(401);
    let mut worst = 0.0f64;
    let mut guarded = 0;
    let mut points = 0;
    for s in ["2,1,2", "3,4,2"] {
        let a = arch(s);
        let plan = build_skeleton(&a);
        let mut done = 0;
        while done < 50 {
            let loss = if done % 2 == 0 {
                LossSpec::MeanSquaredError
            } else {
                LossSpec::SoftmaxCrossEntropy
            };
            let (mut xs, mut ts) = (Vec::new(), Vec::new());
            let w = random_weights(&a, &mut rng);
            let batch = random_batch(&a, 4, loss, &mut xs, &mut ts, &mut rng);
            let inputs: Vec<&[f64]> = batch.iter().map(|s| s.x).collect();
            if kink_margin(&a, &w, &inputs) < 1e-4 {
                guarded += 1;
                continue;
            }
            let Some(fd) = gspace_fd_gradient(&a, &w, &batch, &plan, loss, 1e-6) else {
                guarded += 1;
                continue;
            };
            let grad_w = gspace_core::nn::batch_gradient(&a, &w, &batch, loss).unwrap();
            let v = basis_values(&w, &plan).unwrap();
            let dv = icr_gradients(&grad_w, &w, &v, &plan).unwrap();
            for (x, y) in dv.iter().zip(&fd) {
                worst = worst.max(rel_err(*x, *y, FD_FLOOR));
            }
            done += 1;
            points += 1;
        }
    }
    outcome(
        worst <= 1e-5,
        format!("{points} points, max rel err {worst:.2e} (floor {FD_FLOOR:e}), {guarded} draws kink-guarded"),
    )
}

/// Absolute scale below which finite-difference errors are measured
/// absolutely; central differences at eps = 1e-6 carry ~1e-10 roundoff.
const FD_FLOOR: f64 = 1e-8;

fn random_ratios<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let mag = rng.gen_range(0.5f64.ln()..2.0f64.ln()).exp();
            if rng.gen_bool(0.1) {
                -mag
            } else {
                mag
            }
        })
        .collect()
}

fn round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(501);
    let mut worst = 0.0f64;
    let mut free_exact = true;
    for a in all_archs() {
        let plan = build_skeleton(&a);
        for _ in 0..100 {
            let w = random_weights(&a, &mut rng);
            let v = basis_values(&w, &plan).unwrap();
            let ratios = random_ratios(v.len(), &mut rng);
            let r = weight_allocation(&ratios, &plan).unwrap();
            free_exact &= plan.free_edges().iter().all(|&e| r[e] == 1.0);
            let moved: Vec<f64> = w.iter().zip(&r).map(|(a, b)| a * b).collect();
            let v2 = basis_values(&moved, &plan).unwrap();
            for ((after, before), ratio) in v2.iter().zip(&v).zip(&ratios) {
                worst = worst.max(rel_err(*after, before * ratio, 0.0));
            }
        }
    }
    outcome(
        worst <= 1e-12 && free_exact,
        format!("max rel err {worst:.2e}, free-skeleton ratios exactly 1: {free_exact}"),
    )
}

/// Basis values after each of `steps` steps of `step_fn` on fixed batches.
fn trajectory(
    plan: &SkeletonPlan,
    start: WeightVector,
    batches: &[Vec<Sample<'_>>],
    mut step_fn: impl FnMut(&WeightVector, &[Sample<'_>]) -> WeightVector,
) -> Vec<Vec<f64>> {
    let mut w = start;
    batches
        .iter()
        .map(|b| {
            w = step_fn(&w, b);
            basis_values(&w, plan).unwrap()
        })
        .collect()
}

fn max_traj_err(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| rel_err(*x, *y, 0.0))
        .fold(0.0, f64::max)
}

fn trajectory_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(601);
    let loss = LossSpec::SoftmaxCrossEntropy;
    let (lr_g, lr_s) = (0.05, 0.05);
    let mut worst_g = 0.0f64;
    let mut least_s = f64::INFINITY;
    let archs: Vec<Architecture> = all_archs()
        .into_iter()
        .filter(|a| a.num_hidden() > 0)
        .collect();
    for a in &archs {
        let plan = build_skeleton(a);
        let w = skeleton_init(a, &plan, &mut rng);
        let data: Vec<(Vec<f64>, usize)> = (0..80)
            .map(|_| {
                (
                    random_input(a.input_dim(), &mut rng),
                    rng.gen_range(0..a.output_dim()),
                )
            })
            .collect();
        let batches: Vec<Vec<Sample<'_>>> = data
            .chunks(8)
            .map(|c| {
                c.iter()
                    .map(|(x, y)| Sample {
                        x,
                        target: Target::Class(*y),
                    })
                    .collect()
            })
            .collect();
        let g = ScalingVector::new(random_factors(a.num_hidden(), 0.1, 10.0, &mut rng)).unwrap();
        let gw = apply_scaling(a, &w, &g).unwrap();
        let gsgd =
            |w: &WeightVector, b: &[Sample<'_>]| gsgd_step(a, w, b, lr_g, &plan, loss).unwrap();
        let t1 = trajectory(&plan, w.clone(), &batches, gsgd);
        let t2 = trajectory(&plan, gw, &batches, gsgd);
        worst_g = worst_g.max(max_traj_err(&t1, &t2));

        let c10 = apply_scaling(a, &w, &ScalingVector::uniform(a, 10.0).unwrap()).unwrap();
        let sgd = |w: &WeightVector, b: &[Sample<'_>]| sgd_step(a, w, b, lr_s, loss).unwrap();
        let s1 = trajectory(&plan, w.clone(), &batches, sgd);
        let s2 = trajectory(&plan, c10, &batches, sgd);
        least_s = least_s.min(max_traj_err(&s1, &s2));
    }
    outcome(
        worst_g <= 1e-7 && least_s >= 1e-3,
        format!(
            "G-SGD max rel gap {worst_g:.2e}; SGD (c=10) smallest per-architecture max gap {least_s:.2e} over {} architectures",
            archs.len()
        ),
    )
}

struct DeskRuns {
    gsgd_balanced: TrainOutcome,
    gsgd_unbalanced: TrainOutcome,
    sgd_balanced: TrainOutcome,
    sgd_unbalanced: TrainOutcome,
    init_balanced: WeightVector,
    init_unbalanced: WeightVector,
    plan: SkeletonPlan,
    elapsed: Duration,
}

const DESK_SEED: u64 = 2024;
const DESK_LR_GSGD: f64 = 0.01;
const DESK_LR_SGD: f64 = 0.01;

fn desk_runs() -> DeskRuns {
    let started = Instant::now();
    let a = arch(DESK);
    let plan = build_skeleton(&a);
    let data = synthetic_blobs(DESK_SEED, 100, 49, 10, 0.5, Split::Train).unwrap();
    let init_balanced = skeleton_init(&a, &plan, &mut init_rng(DESK_SEED));
    let init_unbalanced = apply_scaling(
        &a,
        &init_balanced,
        &ScalingVector::uniform(&a, 100.0).unwrap(),
    )
    .unwrap();
    let run = |optimizer, lr, init: &WeightVector| {
        let config = TrainConfig {
            optimizer,
            learning_rate: lr,
            batch_size: 64,
            epochs: 20,
            seed: DESK_SEED,
            loss: LossSpec::SoftmaxCrossEntropy,
            lr_schedule: Vec::new(),
        };
        train(&a, &config, &data, None, init.clone(), Some(&plan)).unwrap()
    };
    DeskRuns {
        gsgd_balanced: run(OptimizerKind::Gsgd, DESK_LR_GSGD, &init_balanced),
        gsgd_unbalanced: run(OptimizerKind::Gsgd, DESK_LR_GSGD, &init_unbalanced),
        sgd_balanced: run(OptimizerKind::Sgd, DESK_LR_SGD, &init_balanced),
        sgd_unbalanced: run(OptimizerKind::Sgd, DESK_LR_SGD, &init_unbalanced),
        init_balanced,
        init_unbalanced,
        plan,
        elapsed: started.elapsed(),
    }
}

fn final_loss(o: &TrainOutcome) -> f64 {
    o.metrics.last().unwrap().train_loss
}

fn free_skeleton_constancy(runs: &DeskRuns) -> Outcome {
    let pairs = [
        (&runs.init_balanced, &runs.gsgd_balanced.weights),
        (&runs.init_unbalanced, &runs.gsgd_unbalanced.weights),
    ];
    let ok = pairs.iter().all(|(before, after)| {
        runs.plan
            .free_edges()
            .iter()
            .all(|&e| before[e].to_bits() == after[e].to_bits())
    });
    let epochs = runs.gsgd_balanced.metrics.records.len() - 1;
    outcome(
        ok && epochs == 20,
        format!(
            "{} free weights bitwise unchanged after {epochs} epochs (balanced and unbalanced runs): {ok}",
            runs.plan.free_edges().len()
        ),
    )
}

/// A diverged run has no finite loss; it counts as infinitely bad.
fn loss_or_inf(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else {
        f64::INFINITY
    }
}

fn desk_experiment(runs: &DeskRuns) -> Outcome {
    let g_bal = final_loss(&runs.gsgd_balanced);
    let g_unb = final_loss(&runs.gsgd_unbalanced);
    let s_bal = final_loss(&runs.sgd_balanced);
    let s_unb = final_loss(&runs.sgd_unbalanced);
    let better = loss_or_inf(g_unb) <= loss_or_inf(s_unb);
    let g_same = g_bal.is_finite() && rel_close(g_bal, g_unb, 1e-6, 0.0);
    let s_differs = !(s_bal.is_finite() && s_unb.is_finite() && rel_close(s_bal, s_unb, 1e-6, 0.0));
    outcome(
        better && g_same && s_differs && runs.elapsed < Duration::from_secs(300),
        format!(
            "final train loss G-SGD balanced {g_bal:.6} unbalanced {g_unb:.6} (rel gap {:.2e}); SGD balanced {s_bal:.6} unbalanced {s_unb:.6}; lr {DESK_LR_GSGD}/{DESK_LR_SGD}; {:.1}s",
            rel_err(g_bal, g_unb, 0.0),
            runs.elapsed.as_secs_f64()
        ),
    )
}

fn path_sum_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(901);
    let (mut worst_lib, mut worst_naive) = (0.0f64, 0.0f64);
    for a in all_archs() {
        for _ in 0..100 {
            let w = random_weights(&a, &mut rng);
            let x = random_input(a.input_dim(), &mut rng);
            let out = forward(&a, &w, &x).unwrap().outputs;
            let lib = path_sum_output(&a, &w, &x, DEFAULT_ENUMERATION_CAP).unwrap();
            let naive = naive_path_sum(&a, &w, &x);
            worst_lib = worst_lib.max(vector_rel_err(&out, &lib));
            worst_naive = worst_naive.max(vector_rel_err(&out, &naive));
        }
    }
    outcome(
        worst_lib <= 1e-10 && worst_naive <= 1e-10,
        format!("max rel err vs library path sum {worst_lib:.2e}, vs independent path sum {worst_naive:.2e}"),
    )
}

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let started = Instant::now();
    let mut o = f();
    let took = started.elapsed();
    if took > limit {
        o.ok = false;
    }
    o.detail = format!(
        "{} [{:.2}s, limit {}s]",
        o.detail,
        took.as_secs_f64(),
        limit.as_secs()
    );
    o
}

fn main() {
    let secs = Duration::from_secs;
    let mut results: Vec<(&str, Outcome)> = vec![
        ("1 rank theorem", timed(secs(10), rank_theorem)),
        ("2 basis validity", timed(secs(30), basis_validity)),
        ("3 scaling invariance", timed(secs(30), scaling_invariance)),
        (
            "4 ICR gradient vs finite differences",
            timed(secs(60), icr_gradient_check),
        ),
        ("5 ICR/WA round trip", timed(secs(10), round_trip)),
        (
            "6 trajectory invariance",
            timed(secs(60), trajectory_invariance),
        ),
    ];
    let runs = desk_runs();
    results.push(("7 free-skeleton constancy", free_skeleton_constancy(&runs)));
    results.push(("8 desk-scale experiment", desk_experiment(&runs)));
    results.push(("9 path-sum oracle", timed(secs(30), path_sum_oracle)));

    let mut failed = 0;
    for (name, o) in &results {
        println!(
            "{} criterion {name}: {}",
            if o.ok { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.ok);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
