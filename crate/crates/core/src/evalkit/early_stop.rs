pub const DEFAULT_PATIENCE: usize = 10;
pub const DEFAULT_MAX_EPOCHS: usize = 200;

/// Early stopping on a validation score where only strict improvements count.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopState {
    best: Option<f64>,
    best_epoch: usize,
    since_improvement: usize,
    epoch: usize,
    patience: usize,
    max_epochs: usize,
}

/// Outcome of one [`EarlyStopState::update`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EarlyStopStep {
    /// The score beat every earlier one; the caller should snapshot parameters.
    pub improved: bool,
    pub stop: bool,
}

impl Default for EarlyStopState {
    fn default() -> Self {
        Self::new(DEFAULT_PATIENCE, DEFAULT_MAX_EPOCHS)
    }
}

impl EarlyStopState {
    pub fn new(patience: usize, max_epochs: usize) -> Self {
        Self {
            best: None,
            best_epoch: 0,
            since_improvement: 0,
            epoch: 0,
            patience,
            max_epochs,
        }
    }

    /// Records the score of the next epoch.
    pub fn update(&mut self, score: f64) -> EarlyStopStep {
        self.epoch += 1;
        let improved = match self.best {
            None => !score.is_nan(),
            Some(b) => score > b,
        };
        if improved {
            self.best = Some(score);
            self.best_epoch = self.epoch;
            self.since_improvement = 0;
        } else {
            self.since_improvement += 1;
        }
        let stop = self.since_improvement >= self.patience || self.epoch >= self.max_epochs;
        EarlyStopStep { improved, stop }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    /// 1-based epoch of the best score, 0 before any update.
    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn epochs_seen(&self) -> usize {
        self.epoch
    }

    pub fn since_improvement(&self) -> usize {
        self.since_improvement
    }

    pub fn patience(&self) -> usize {
        self.patience
    }

    pub fn max_epochs(&self) -> usize {
        self.max_epochs
    }
}
