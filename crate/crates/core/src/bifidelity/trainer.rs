//! Minibatch training of an [`Operator`] with Adam, a plateau schedule and
//! best-validation checkpointing.
//!
//! A minibatch is the product of a group of trajectories and a group of time
//! positions. Branch networks then run once per velocity and trunk networks
//! once per distinct time in the batch instead of once per triplet. Each
//! epoch partitions the shuffled trajectories and shuffled time positions,
//! so every triplet is visited exactly once per epoch.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::TripletDataset;
use crate::error::{Error, Result};
use crate::nn::{mse_loss, AdamConfig, AdamState, PlateauConfig, PlateauScheduler};
use crate::operator::{Operator, QueryBlock};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopOptions {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub scheduler: PlateauConfig,
    pub adam: AdamConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingReport {
    pub history: Vec<EpochLog>,
    /// 1-based epoch whose parameters were returned; 0 means the starting point.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_at_lr_floor: bool,
}

impl TrainingReport {
    pub fn epochs_run(&self) -> usize {
        self.history.len()
    }

    /// Loss log as CSV: `epoch,train_loss,val_loss,lr`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,lr\n");
        for e in &self.history {
            out.push_str(&format!("{},{},{},{}\n", e.epoch, e.train_loss, e.val_loss, e.lr));
        }
        out
    }
}

/// A query block with aligned regression targets.
#[derive(Debug, Clone)]
pub(crate) struct Batch {
    pub block: QueryBlock,
    pub targets: Vec<f64>,
}

/// Sizes of the trajectory and time groups for a target batch size.
fn group_sizes(n_traj: usize, q: usize, batch_size: usize) -> (usize, usize) {
    if batch_size >= n_traj * q {
        return (n_traj, q);
    }
    let a = ((batch_size as f64).sqrt().ceil() as usize).clamp(1, n_traj);
    let b = batch_size.div_ceil(a).clamp(1, q);
    (a, b)
}

/// Splits `items` into `ceil(len / size)` contiguous groups of near-equal size.
fn partition(items: &[usize], size: usize) -> Vec<&[usize]> {
    let groups = items.len().div_ceil(size).max(1);
    let base = items.len() / groups;
    let extra = items.len() % groups;
    let mut out = Vec::with_capacity(groups);
    let mut start = 0;
    for g in 0..groups {
        let len = base + usize::from(g < extra);
        out.push(&items[start..start + len]);
        start += len;
    }
    out
}

/// Block over the given trajectories and time positions, deduplicating
/// velocities and times by bit pattern.
pub(crate) fn make_batch(ds: &TripletDataset, trajectories: &[usize], positions: &[usize]) -> Batch {
    let mut velocities = Vec::with_capacity(trajectories.len());
    let mut times = Vec::with_capacity(positions.len());
    let mut u_index: HashMap<u64, usize> = HashMap::new();
    let mut t_index: HashMap<u64, usize> = HashMap::new();
    let mut pairs = Vec::with_capacity(trajectories.len() * positions.len());
    let mut targets = Vec::with_capacity(pairs.capacity());
    for &i in trajectories {
        let tr = &ds.trajectories()[i];
        let r = *u_index.entry(tr.u_bar.to_bits()).or_insert_with(|| {
            velocities.push(tr.u_bar);
            velocities.len() - 1
        });
        for &j in positions {
            let t = tr.times[j];
            let c = *t_index.entry(t.to_bits()).or_insert_with(|| {
                times.push(t);
                times.len() - 1
            });
            pairs.push((r, c));
            targets.push(tr.values[j]);
        }
    }
    Batch {
        block: QueryBlock {
            velocities,
            times,
            pairs,
        },
        targets,
    }
}

pub(crate) fn full_batch(ds: &TripletDataset) -> Batch {
    let all: Vec<usize> = (0..ds.num_trajectories()).collect();
    let positions: Vec<usize> = (0..ds.q()).collect();
    make_batch(ds, &all, &positions)
}

fn epoch_batches(ds: &TripletDataset, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Batch> {
    let (a, b) = group_sizes(ds.num_trajectories(), ds.q(), batch_size);
    let mut traj: Vec<usize> = (0..ds.num_trajectories()).collect();
    let mut pos: Vec<usize> = (0..ds.q()).collect();
    traj.shuffle(rng);
    pos.shuffle(rng);
    let traj_groups = partition(&traj, a);
    let pos_groups = partition(&pos, b);
    let mut blocks: Vec<(usize, usize)> = (0..traj_groups.len())
        .flat_map(|g| (0..pos_groups.len()).map(move |h| (g, h)))
        .collect();
    blocks.shuffle(rng);
    blocks
        .into_iter()
        .map(|(g, h)| make_batch(ds, traj_groups[g], pos_groups[h]))
        .collect()
}

/// Mean squared error of `op` over a whole dataset.
pub fn dataset_mse(op: &Operator, ds: &TripletDataset) -> Result<f64> {
    let batch = full_batch(ds);
    let (pred, _) = op.forward_block(&batch.block)?;
    Ok(mse_loss(&pred, &batch.targets)?.0)
}

/// Trains `op` on `train`, selecting the parameters with the lowest loss on
/// `validation`. Fully deterministic given `opts.seed`.
pub fn fit(
    mut op: Operator,
    train: &TripletDataset,
    validation: &TripletDataset,
    opts: &LoopOptions,
) -> Result<(Operator, TrainingReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut optimizers: Vec<AdamState> = op
        .networks()
        .iter()
        .map(|net| AdamState::new(net, opts.adam))
        .collect();
    let mut scheduler = PlateauScheduler::new(opts.learning_rate, opts.scheduler);
    let val_batch = full_batch(validation);

    // the starting point competes too, which matters after a warm start
    let mut best = op.clone();
    let (start_pred, _) = op.forward_block(&val_batch.block)?;
    let start_loss = mse_loss(&start_pred, &val_batch.targets).map_or(f64::INFINITY, |(l, _)| l);
    let mut report = TrainingReport {
        best_val_loss: if start_loss.is_finite() { start_loss } else { f64::INFINITY },
        ..Default::default()
    };
    log::debug!("initial validation loss {start_loss:.3e}");
    for epoch in 1..=opts.max_epochs {
        let lr = scheduler.current_lr();
        let mut loss_sum = 0.0;
        let mut count = 0usize;
        for (b, batch) in epoch_batches(train, opts.batch_size, &mut rng).into_iter().enumerate() {
            let (pred, cache) = op.forward_block(&batch.block)?;
            let (loss, grad) = match mse_loss(&pred, &batch.targets) {
                Ok(v) if v.0.is_finite() => v,
                _ => {
                    let loss = pred.iter().zip(&batch.targets).map(|(p, t)| (p - t) * (p - t)).sum::<f64>()
                        / pred.len() as f64;
                    return Err(Error::Diverged { epoch, batch: b, loss });
                }
            };
            let grads = op.backward_block(&cache, &grad)?.into_networks();
            for ((net, state), g) in op.networks_mut().into_iter().zip(&mut optimizers).zip(&grads) {
                state.step(net, g, lr).map_err(|e| match e {
                    Error::NonFinite(_) => Error::Diverged { epoch, batch: b, loss },
                    other => other,
                })?;
            }
            loss_sum += loss * pred.len() as f64;
            count += pred.len();
        }
        let train_loss = loss_sum / count as f64;

        let (val_pred, _) = op.forward_block(&val_batch.block)?;
        let val_loss = mse_loss(&val_pred, &val_batch.targets)
            .map(|(l, _)| l)
            .map_err(|_| Error::Diverged { epoch, batch: usize::MAX, loss: f64::NAN })?;
        if val_loss < report.best_val_loss {
            report.best_val_loss = val_loss;
            report.best_epoch = epoch;
            best.clone_from(&op);
        }
        report.history.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
            lr,
        });
        log::debug!("epoch {epoch}: train {train_loss:.3e} val {val_loss:.3e} lr {lr:.1e}");

        scheduler.step(train_loss);
        if scheduler.exhausted() {
            report.stopped_at_lr_floor = true;
            break;
        }
    }
    Ok((best, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{TargetLabel, Trajectory};

    fn grid_dataset(n: usize, q: usize) -> TripletDataset {
        let trajectories = (0..n)
            .map(|i| Trajectory {
                u_bar: 0.9 + 0.2 * i as f64 / n as f64,
                times: (0..q).map(|j| j as f64 * 8.0 / q as f64).collect(),
                values: (0..q).map(|j| (i * q + j) as f64).collect(),
            })
            .collect();
        TripletDataset::new(trajectories, TargetLabel::Lift, 0.0, 8.0).unwrap()
    }

    #[test]
    fn epoch_visits_every_triplet_once() {
        let ds = grid_dataset(13, 37);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for batch_size in [1, 7, 64, 100, 10_000] {
            let mut seen: Vec<f64> = epoch_batches(&ds, batch_size, &mut rng)
                .into_iter()
                .flat_map(|b| b.targets)
                .collect();
            seen.sort_by(f64::total_cmp);
            let expected: Vec<f64> = (0..13 * 37).map(|v| v as f64).collect();
            assert_eq!(seen, expected, "batch size {batch_size}");
        }
    }

    #[test]
    fn batches_stay_near_requested_size() {
        let ds = grid_dataset(135, 300);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let batches = epoch_batches(&ds, 1024, &mut rng);
        for b in &batches {
            assert!(b.targets.len() >= 512 && b.targets.len() <= 1400, "{}", b.targets.len());
            assert_eq!(b.block.pairs.len(), b.block.velocities.len() * b.block.times.len());
        }
    }

    #[test]
    fn partition_covers_items() {
        let items: Vec<usize> = (0..10).collect();
        let parts = partition(&items, 3);
        assert_eq!(parts.len(), 4);
        assert_eq!(parts.iter().map(|p| p.len()).sum::<usize>(), 10);
        assert!(parts.iter().all(|p| p.len() >= 2 && p.len() <= 3));
    }
}
