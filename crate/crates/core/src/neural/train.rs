use super::{CtLstm, CtLstmConfig, Mark, NeuralError, Result};
use crate::exec::Exec;
use crate::nn::{read_checkpoint, write_checkpoint, NnError, RmsProp, RmsPropConfig, Tensor};
use crate::rng::{derive_seed, seeded, split};
use log::info;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean per-event training loss over the epoch's batches.
    pub train_nll: f64,
    pub val_nll: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: CtLstmConfig,
    pub splits: [usize; 3],
    pub windows: usize,
    pub history: Vec<EpochMetrics>,
    /// Epoch (1-based) whose parameters were kept.
    pub best_epoch: usize,
    pub test_nll: f64,
    pub test_accuracy: f64,
    /// Frequency of the most common type among scored test events.
    pub test_majority_frequency: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: CtLstm,
    pub report: TrainReport,
}

const EVAL_SALT: u64 = 0xE7A1;

fn split_sizes(n: usize, split: [f64; 3]) -> [usize; 3] {
    let a = (n as f64 * split[0]).floor() as usize;
    let b = (n as f64 * split[1]).floor() as usize;
    [a, b, n - a - b]
}

fn empirical_rates(marks: &[Mark], m: usize) -> Vec<f64> {
    let span = (marks.last().map_or(0.0, |e| e.time) - marks.first().map_or(0.0, |e| e.time)).max(1e-12);
    let mut counts = vec![0usize; m];
    for e in marks {
        counts[e.kind] += 1;
    }
    // Half an event keeps unseen types away from a zero rate.
    counts.iter().map(|&c| (c as f64 + 0.5) / span).collect()
}

fn majority_frequency(marks: &[Mark], m: usize) -> f64 {
    let mut counts = vec![0usize; m];
    for e in marks.iter().skip(1) {
        counts[e.kind] += 1;
    }
    *counts.iter().max().unwrap_or(&0) as f64 / marks.len().saturating_sub(1).max(1) as f64
}

/// Fit a model on the first split, select on the second, report on the third.
pub fn train(config: &CtLstmConfig, marks: &[Mark], exec: Exec) -> Result<TrainedModel> {
    config.validate()?;
    let arch = config.architecture();
    let splits = split_sizes(marks.len(), config.split);
    let (train_m, rest) = marks.split_at(splits[0]);
    let (val_m, test_m) = rest.split_at(splits[1]);
    for (name, part, needed) in [("training", train_m, config.window), ("validation", val_m, 2), ("test", test_m, 2)] {
        if part.len() < needed {
            return Err(NeuralError::TooShort { split: name, events: part.len(), needed });
        }
    }
    let stride = config.stride.unwrap_or(config.window);
    let starts: Vec<usize> = (0..=train_m.len() - config.window).step_by(stride).collect();

    let mut model = CtLstm::new(arch, &mut seeded(config.seed), Some(&empirical_rates(train_m, arch.num_types)))?;
    let mut opt = RmsProp::new(RmsPropConfig { lr: config.lr, ..Default::default() }, model.params());
    let mut best: Option<(f64, usize, CtLstm)> = None;
    let mut history = Vec::with_capacity(config.epochs);
    let score = |model: &CtLstm, part: &[Mark]| {
        model.evaluate_stream(part, config.eval_mc_samples, &mut split(derive_seed(config.seed, EVAL_SALT), 0))
    };

    for epoch in 1..=config.epochs {
        let epoch_seed = derive_seed(config.seed, epoch as u64);
        let mut order = starts.clone();
        order.shuffle(&mut split(epoch_seed, u64::MAX - 1));
        let (mut epoch_loss, mut epoch_events) = (0.0, 0usize);
        for (b, chunk) in order.chunks(config.batch).enumerate() {
            let diverged = || NeuralError::Diverged { epoch, batch: b };
            let results = exec.map_slice(chunk, |&s| {
                let mut rng = split(epoch_seed, s as u64);
                model.nll_gradient(&train_m[s..s + config.window], config.mc_samples, &mut rng)
            });
            let mut total = 0.0;
            let mut count = 0usize;
            let mut grads: Vec<Tensor> = model.params().zeros_like();
            for r in results {
                let (loss, n, g) = r.map_err(|e| match e {
                    NeuralError::Nn(NnError::NonFinite(_)) => diverged(),
                    other => other,
                })?;
                total += loss;
                count += n;
                for (acc, gi) in grads.iter_mut().zip(&g) {
                    for (a, x) in acc.data_mut().iter_mut().zip(gi.data()) {
                        *a += x;
                    }
                }
            }
            if !total.is_finite() {
                return Err(diverged());
            }
            let inv = 1.0 / count as f64;
            for g in &mut grads {
                g.data_mut().iter_mut().for_each(|x| *x *= inv);
            }
            opt.step(model.params_mut(), &grads).map_err(|_| diverged())?;
            epoch_loss += total;
            epoch_events += count;
        }
        let val = score(&model, val_m)?;
        let metrics = EpochMetrics {
            epoch,
            train_nll: epoch_loss / epoch_events as f64,
            val_nll: val.nll_per_event(),
            val_accuracy: val.accuracy(),
        };
        info!(
            "epoch {epoch}: train nll {:.4}, val nll {:.4}, val acc {:.4}",
            metrics.train_nll, metrics.val_nll, metrics.val_accuracy
        );
        if best.as_ref().is_none_or(|(v, _, _)| metrics.val_nll < *v) {
            best = Some((metrics.val_nll, epoch, model.clone()));
        }
        history.push(metrics);
    }

    let (_, best_epoch, model) = best.expect("at least one epoch");
    let test = score(&model, test_m)?;
    let report = TrainReport {
        config: config.clone(),
        splits,
        windows: starts.len(),
        history,
        best_epoch,
        test_nll: test.nll_per_event(),
        test_accuracy: test.accuracy(),
        test_majority_frequency: majority_frequency(test_m, arch.num_types),
    };
    Ok(TrainedModel { model, report })
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    architecture: super::Architecture,
    report: Option<TrainReport>,
}

const PARAMS_FILE: &str = "params.ckpt";
const SIDECAR_FILE: &str = "model.json";

/// Write `params.ckpt` and the `model.json` sidecar into `dir`.
pub fn write_model_dir(dir: &Path, model: &CtLstm, report: Option<&TrainReport>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_checkpoint(&dir.join(PARAMS_FILE), model.params())?;
    let side = Sidecar { architecture: model.architecture(), report: report.cloned() };
    std::fs::write(dir.join(SIDECAR_FILE), serde_json::to_string_pretty(&side)?)?;
    Ok(())
}

pub fn read_model_dir(dir: &Path) -> Result<(CtLstm, Option<TrainReport>)> {
    let side: Sidecar = serde_json::from_str(&std::fs::read_to_string(dir.join(SIDECAR_FILE))?)?;
    let params = read_checkpoint(&dir.join(PARAMS_FILE))?;
    Ok((CtLstm::from_params(side.architecture, params)?, side.report))
}
