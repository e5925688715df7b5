use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlateauConfig {
    pub factor: f64,
    /// Consecutive non-improving calls tolerated before a reduction.
    pub patience: usize,
    /// Relative improvement required to reset the patience counter.
    pub rel_threshold: f64,
    pub min_lr: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        Self {
            factor: 0.5,
            patience: 20,
            rel_threshold: 1e-4,
            min_lr: 1e-7,
        }
    }
}

/// Reduce-on-plateau learning-rate schedule.
///
/// The first observed loss becomes the baseline and counts as the first call
/// of the plateau window; afterwards a call resets the counter only when the
/// loss drops below `best * (1 - rel_threshold)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    pub config: PlateauConfig,
    current_lr: f64,
    best_loss: f64,
    epochs_since_improvement: usize,
    exhausted: bool,
}

impl PlateauScheduler {
    pub fn new(initial_lr: f64, config: PlateauConfig) -> Self {
        Self {
            config,
            current_lr: initial_lr.max(config.min_lr),
            best_loss: f64::INFINITY,
            epochs_since_improvement: 0,
            exhausted: false,
        }
    }

    pub fn current_lr(&self) -> f64 {
        self.current_lr
    }

    pub fn best_loss(&self) -> f64 {
        self.best_loss
    }

    pub fn epochs_since_improvement(&self) -> usize {
        self.epochs_since_improvement
    }

    /// True once a plateau was detected while already at `min_lr`.
    pub fn exhausted(&self) -> bool {
        self.exhausted
    }

    /// Records one validation (or epoch) loss and returns the learning rate to
    /// use next.
    pub fn step(&mut self, loss: f64) -> f64 {
        debug_assert!(loss.is_finite());
        if self.best_loss.is_infinite() {
            self.best_loss = loss;
            self.epochs_since_improvement = 1;
        } else if loss < self.best_loss * (1.0 - self.config.rel_threshold) {
            self.best_loss = loss;
            self.epochs_since_improvement = 0;
        } else {
            self.epochs_since_improvement += 1;
        }
        if self.epochs_since_improvement >= self.config.patience {
            if self.current_lr <= self.config.min_lr {
                self.exhausted = true;
            }
            self.current_lr = (self.current_lr * self.config.factor).max(self.config.min_lr);
            self.epochs_since_improvement = 0;
        }
        self.current_lr
    }
}
