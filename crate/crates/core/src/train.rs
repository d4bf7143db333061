//! Seeded minibatch training loop for SGD and G-SGD.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arch::Architecture;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{EpochRecord, Metrics};
use crate::nn::{argmax, forward, loss_value, LossSpec, WeightVector};
use crate::optim::{gsgd_step, sgd_step};
use crate::skeleton::SkeletonPlan;

/// How many times a rejected step may halve its learning rate.
pub const MAX_STEP_HALVINGS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Gsgd,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Self::Sgd),
            "gsgd" | "g-sgd" => Ok(Self::Gsgd),
            other => Err(Error::Domain(format!("unknown optimizer `{other}`"))),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Sgd => "sgd",
            Self::Gsgd => "gsgd",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub loss: LossSpec,
    /// `(epoch, multiplier)`: at the start of `epoch` (1-based) the current
    /// rate is multiplied by `multiplier`. Multipliers accumulate.
    pub lr_schedule: Vec<(usize, f64)>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Gsgd,
            learning_rate: 0.1,
            batch_size: 32,
            epochs: 10,
            seed: 0,
            loss: LossSpec::SoftmaxCrossEntropy,
            lr_schedule: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Domain(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Domain("batch_size must be at least 1".into()));
        }
        if let Some(&(e, m)) = self
            .lr_schedule
            .iter()
            .find(|&&(e, m)| e == 0 || !(m > 0.0) || !m.is_finite())
        {
            return Err(Error::Domain(format!(
                "lr_schedule entry ({e}, {m}) needs epoch >= 1 and a positive multiplier"
            )));
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (1-based).
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.lr_schedule
            .iter()
            .filter(|&&(e, _)| e <= epoch)
            .fold(self.learning_rate, |lr, &(_, m)| lr * m)
    }
}

/// Generator for weight initialisation; independent of the shuffling stream.
pub fn init_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

pub fn shuffle_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    rng
}

/// Mean loss and accuracy over a whole dataset.
pub fn evaluate(
    arch: &Architecture,
    w: &[f64],
    data: &Dataset,
    loss: LossSpec,
) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut total = 0.0;
    let mut correct = 0usize;
    for i in 0..data.len() {
        let s = data.sample(i);
        let trace = forward(arch, w, s.x)?;
        total += loss_value(&trace.outputs, s.target, loss)?;
        if argmax(&trace.outputs) == data.labels()[i] {
            correct += 1;
        }
    }
    let n = data.len() as f64;
    Ok((total / n, correct as f64 / n))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub metrics: Metrics,
    pub weights: WeightVector,
}

fn record(
    arch: &Architecture,
    w: &[f64],
    epoch: usize,
    train: &Dataset,
    test: Option<&Dataset>,
    loss: LossSpec,
    started: Instant,
) -> Result<EpochRecord> {
    let (train_loss, train_acc) = evaluate(arch, w, train, loss)?;
    let (test_loss, test_acc) = match test {
        Some(t) => evaluate(arch, w, t, loss)?,
        None => (f64::NAN, f64::NAN),
    };
    Ok(EpochRecord {
        epoch,
        train_loss,
        train_acc,
        test_loss,
        test_acc,
        wall_ms: started.elapsed().as_millis() as u64,
    })
}

/// Runs `config.epochs` passes over `train` starting from `init`.
///
/// G-SGD needs `plan`. A step rejected for crossing zero is retried with
/// half the learning rate, at most [`MAX_STEP_HALVINGS`] times.
pub fn train(
    arch: &Architecture,
    config: &TrainConfig,
    train: &Dataset,
    test: Option<&Dataset>,
    init: WeightVector,
    plan: Option<&SkeletonPlan>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.dim() != arch.input_dim() {
        return Err(Error::InputShape {
            expected: arch.input_dim(),
            got: train.dim(),
        });
    }
    if train.classes() > arch.output_dim() {
        return Err(Error::Architecture(format!(
            "{} classes do not fit {} outputs",
            train.classes(),
            arch.output_dim()
        )));
    }
    let plan = match config.optimizer {
        OptimizerKind::Gsgd => {
            let plan = plan.ok_or_else(|| Error::Domain("G-SGD needs a skeleton plan".into()))?;
            if plan.arch().widths() != arch.widths() {
                return Err(Error::DefectivePlan(format!(
                    "plan is for {}, network is {arch}",
                    plan.arch()
                )));
            }
            init.check_nonzero()?;
            Some(plan)
        }
        OptimizerKind::Sgd => None,
    };

    let started = Instant::now();
    let mut metrics = Metrics::default();
    let mut w = init;
    metrics
        .records
        .push(record(arch, &w, 0, train, test, config.loss, started)?);

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut rng = shuffle_rng(config.seed);
    for epoch in 1..=config.epochs {
        let lr = config.learning_rate_at(epoch);
        order.shuffle(&mut rng);
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch = train.samples(chunk);
            let context = |source: Error| Error::Training {
                epoch,
                step,
                source: Box::new(source),
            };
            w = match plan {
                None => sgd_step(arch, &w, &batch, lr, config.loss).map_err(context)?,
                Some(plan) => {
                    let mut eta = lr;
                    let mut halvings = 0;
                    let next = loop {
                        match gsgd_step(arch, &w, &batch, eta, plan, config.loss) {
                            Ok(next) => break next,
                            Err(Error::StepRejected(_)) if halvings < MAX_STEP_HALVINGS => {
                                halvings += 1;
                                eta *= 0.5;
                            }
                            Err(e) => return Err(context(e)),
                        }
                    };
                    if halvings > 0 {
                        metrics.rejected_steps += 1;
                    }
                    next
                }
            };
        }
        metrics
            .records
            .push(record(arch, &w, epoch, train, test, config.loss, started)?);
    }
    Ok(TrainOutcome {
        metrics,
        weights: w,
    })
}
