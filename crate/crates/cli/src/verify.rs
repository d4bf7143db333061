//! `verify` and `paths`.

use std::fs;
use std::io::Write;
use std::path::Path;

use gspace_core::nn::{batch_gradient, forward, LossSpec, Sample, Target};
use gspace_core::optim::{basis_values, icr_free_residuals, icr_gradients, weight_allocation};
use gspace_core::paths::{enumerate_paths, exact_rank, StructureMatrix};
use gspace_core::scaling::{apply_scaling, ScalingVector};
use gspace_core::skeleton::verify_basis;
use gspace_core::{build_skeleton, Architecture, Error, SkeletonPlan};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Pass => "PASS",
            Self::Fail => "FAIL",
            Self::Skipped => "SKIP",
        })
    }
}

pub struct CheckRow {
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
}

fn row(name: &'static str, ok: bool, detail: String) -> CheckRow {
    CheckRow {
        name,
        status: if ok { Status::Pass } else { Status::Fail },
        detail,
    }
}

fn rel(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn signed_weight<R: Rng>(rng: &mut R) -> f64 {
    let mag = rng.gen_range(0.2..1.5);
    if rng.gen_bool(0.5) {
        mag
    } else {
        -mag
    }
}

fn random_weights<R: Rng>(arch: &Architecture, rng: &mut R) -> Vec<f64> {
    (0..arch.num_edges()).map(|_| signed_weight(rng)).collect()
}

fn random_input<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn rank_check(arch: &Architecture, max_paths: usize) -> gspace_core::Result<CheckRow> {
    let target = arch.num_edges() - arch.num_hidden();
    match enumerate_paths(arch, max_paths) {
        Err(Error::EnumerationTooLarge { needed, cap }) => Ok(CheckRow {
            name: "rank",
            status: Status::Skipped,
            detail: format!("{needed} paths exceed the cap of {cap}"),
        }),
        Err(e) => Err(e),
        Ok(paths) => {
            let rank = exact_rank(&StructureMatrix::from_paths(arch.num_edges(), &paths));
            Ok(row(
                "rank",
                rank == target,
                format!(
                    "rank {rank}, m - H = {} - {} = {target}",
                    arch.num_edges(),
                    arch.num_hidden()
                ),
            ))
        }
    }
}

fn basis_check(arch: &Architecture, plan: &SkeletonPlan) -> CheckRow {
    let r = verify_basis(arch, plan);
    row(
        "basis",
        r.all_ok(),
        format!(
            "{} basis paths, rank {}, unique {}, coverage {}",
            r.basis_count, r.rank, r.uniqueness_ok, r.coverage_ok
        ),
    )
}

/// Outputs, basis values and activation patterns under random positive
/// scalings, skipping draws with a pre-activation within `1e-6` of a kink.
fn scaling_check(
    arch: &Architecture,
    plan: &SkeletonPlan,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> gspace_core::Result<CheckRow> {
    let (mut worst_out, mut worst_basis) = (0.0f64, 0.0f64);
    let mut patterns = true;
    let mut done = 0;
    let mut attempts = 0;
    while done < samples && attempts < 20 * samples {
        attempts += 1;
        let w = random_weights(arch, rng);
        let g: Vec<f64> = (0..arch.num_hidden())
            .map(|_| rng.gen_range(0.1f64.ln()..10.0f64.ln()).exp())
            .collect();
        let gw = apply_scaling(arch, &w, &ScalingVector::new(g)?)?;
        let x = random_input(arch.input_dim(), rng);
        let (t1, t2) = (forward(arch, &w, &x)?, forward(arch, &gw, &x)?);
        if t1.min_abs_pre_activation() < 1e-6 || t2.min_abs_pre_activation() < 1e-6 {
            continue;
        }
        let scale = t1
            .outputs
            .iter()
            .chain(&t2.outputs)
            .fold(f64::MIN_POSITIVE, |m, v| m.max(v.abs()));
        for (a, b) in t1.outputs.iter().zip(&t2.outputs) {
            worst_out = worst_out.max((a - b).abs() / scale);
        }
        let signs = |pre: &[Vec<f64>]| pre.iter().flatten().map(|&z| z > 0.0).collect::<Vec<_>>();
        patterns &= signs(&t1.pre_activations) == signs(&t2.pre_activations);
        for (a, b) in basis_values(&w, plan)?
            .iter()
            .zip(&basis_values(&gw, plan)?)
        {
            worst_basis = worst_basis.max(rel(*a, *b));
        }
        done += 1;
    }
    Ok(row(
        "scaling",
        done == samples && worst_out <= 1e-9 && worst_basis <= 1e-10 && patterns,
        format!("{done} draws: output err {worst_out:.1e}, basis err {worst_basis:.1e}, patterns equal {patterns}"),
    ))
}

fn round_trip_check(
    arch: &Architecture,
    plan: &SkeletonPlan,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> gspace_core::Result<CheckRow> {
    let mut worst = 0.0f64;
    let mut free_exact = true;
    for _ in 0..samples {
        let w = random_weights(arch, rng);
        let v = basis_values(&w, plan)?;
        let ratios: Vec<f64> = (0..v.len())
            .map(|_| signed_weight(rng).signum() * rng.gen_range(0.5f64..2.0))
            .collect();
        let r = weight_allocation(&ratios, plan)?;
        free_exact &= plan.free_edges().iter().all(|&e| r[e] == 1.0);
        let moved: Vec<f64> = w.iter().zip(&r).map(|(a, b)| a * b).collect();
        for ((after, before), ratio) in basis_values(&moved, plan)?.iter().zip(&v).zip(&ratios) {
            worst = worst.max(rel(*after, before * ratio));
        }
    }
    Ok(row(
        "icr/wa round trip",
        worst <= 1e-12 && free_exact,
        format!("{samples} draws: err {worst:.1e}, free ratios exactly 1 {free_exact}"),
    ))
}

/// The free-skeleton equations ICR does not use must still hold.
fn free_column_check(
    arch: &Architecture,
    plan: &SkeletonPlan,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> gspace_core::Result<CheckRow> {
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let w = random_weights(arch, rng);
        let xs: Vec<Vec<f64>> = (0..4)
            .map(|_| random_input(arch.input_dim(), rng))
            .collect();
        let batch: Vec<Sample<'_>> = xs
            .iter()
            .map(|x| Sample {
                x,
                target: Target::Class(rng.gen_range(0..arch.output_dim())),
            })
            .collect();
        let grad_w = batch_gradient(arch, &w, &batch, LossSpec::SoftmaxCrossEntropy)?;
        let v = basis_values(&w, plan)?;
        let grad_v = icr_gradients(&grad_w, &w, &v, plan)?;
        worst = icr_free_residuals(&grad_w, &w, &v, &grad_v, plan)
            .into_iter()
            .fold(worst, f64::max);
    }
    Ok(row(
        "icr free columns",
        worst <= 1e-8,
        format!("{samples} batches: max residual {worst:.1e}"),
    ))
}

pub fn run_checks(
    arch: &Architecture,
    max_paths: usize,
    samples: usize,
    seed: u64,
) -> gspace_core::Result<Vec<CheckRow>> {
    let plan = build_skeleton(arch);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(vec![
        rank_check(arch, max_paths)?,
        basis_check(arch, &plan),
        scaling_check(arch, &plan, samples, &mut rng)?,
        round_trip_check(arch, &plan, samples, &mut rng)?,
        free_column_check(arch, &plan, samples, &mut rng)?,
    ])
}

/// Prints the table; true when nothing failed.
pub fn cmd_verify(
    arch: &Architecture,
    max_paths: usize,
    samples: usize,
    seed: u64,
) -> gspace_core::Result<bool> {
    let rows = run_checks(arch, max_paths, samples, seed)?;
    println!(
        "verify {arch}: m = {}, H = {}, m - H = {}",
        arch.num_edges(),
        arch.num_hidden(),
        arch.num_edges() - arch.num_hidden()
    );
    println!("{:<18} {:<6} detail", "check", "status");
    for r in &rows {
        println!("{:<18} {:<6} {}", r.name, r.status.to_string(), r.detail);
    }
    Ok(rows.iter().all(|r| r.status != Status::Fail))
}

fn write_file(
    path: &Path,
    f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
) -> gspace_core::Result<()> {
    let mut buf = Vec::new();
    f(&mut buf).expect("writing to memory");
    fs::write(path, buf).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Structure-matrix triplets, and with `out` also the path list and the
/// skeleton plan.
pub fn cmd_paths(
    arch: &Architecture,
    max_paths: usize,
    out: Option<&Path>,
) -> gspace_core::Result<()> {
    let paths = enumerate_paths(arch, max_paths)?;
    let matrix = StructureMatrix::from_paths(arch.num_edges(), &paths);
    let Some(dir) = out else {
        let stdout = std::io::stdout();
        let mut lock = stdout.lock();
        return matrix.write_triplets(&mut lock).map_err(|e| Error::Io {
            path: "<stdout>".into(),
            source: e,
        });
    };
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    write_file(&dir.join("structure.txt"), |b| matrix.write_triplets(b))?;
    write_file(&dir.join("paths.txt"), |b| {
        writeln!(b, "# index nodes edges")?;
        for (j, p) in paths.iter().enumerate() {
            let edges: Vec<String> = p.edges().iter().map(usize::to_string).collect();
            writeln!(b, "{j} {p} {}", edges.join(","))?;
        }
        Ok(())
    })?;
    let plan = build_skeleton(arch);
    write_file(&dir.join("skeleton.txt"), |b| plan.write_text(b))?;
    println!(
        "{arch}: {} paths, {} edges, {} nonzeros; wrote {}",
        paths.len(),
        arch.num_edges(),
        matrix.nnz(),
        dir.display()
    );
    Ok(())
}
