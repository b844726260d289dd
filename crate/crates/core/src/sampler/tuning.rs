//! Batch-wise adaptation of proposal scales toward a 20–25% acceptance rate.

use serde::{Deserialize, Serialize};

/// Sweeps per adaptation batch.
pub const BATCH_LEN: usize = 50;
pub const TARGET_LOW: f64 = 0.20;
pub const TARGET_HIGH: f64 = 0.25;

/// Starting value of `h`. Squared residuals behave like `σ²ᵢχ²₁`, whose Gamma
/// GLM has dispersion 2, so `2Δ` is the covariance of the IRLS fit.
pub const INITIAL_H: f64 = 2.0;

/// Starting random-walk variance for σ²: `2.38²` times the large-sample
/// posterior variance `2σ⁴/n`.
pub fn initial_f2(sigma2: f64, n: usize) -> f64 {
    2.38f64.powi(2) * 2.0 * sigma2 * sigma2 / n.max(1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MoveKind {
    Gamma,
    AlphaDelta,
    Sigma2,
    CBeta,
}

impl MoveKind {
    pub const ALL: [MoveKind; 4] = [MoveKind::Gamma, MoveKind::AlphaDelta, MoveKind::Sigma2, MoveKind::CBeta];

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counter {
    pub attempts: u64,
    pub accepts: u64,
}

impl Counter {
    pub fn record(&mut self, accepted: bool) {
        self.attempts += 1;
        self.accepts += u64::from(accepted);
    }

    pub fn rate(&self) -> Option<f64> {
        (self.attempts > 0).then(|| self.accepts as f64 / self.attempts as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningState {
    /// Covariance multiplier of the (δ, α) proposal.
    pub h: f64,
    /// Random-walk variance of the σ² proposal (half-normal prior only).
    pub f2: f64,
    /// Variance multiplier of the c_β proposal.
    pub g2: f64,
    /// Completed adaptation batches.
    pub batches: usize,
    pub batch: [Counter; 4],
    pub burn_in: [Counter; 4],
    pub post_burn: [Counter; 4],
    pub frozen: bool,
}

impl TuningState {
    pub fn starting_at(sigma2: f64, n: usize) -> Self {
        TuningState {
            f2: initial_f2(sigma2, n),
            ..TuningState::default()
        }
    }
}

impl Default for TuningState {
    fn default() -> Self {
        TuningState {
            h: INITIAL_H,
            f2: 1.0,
            g2: 1.0,
            batches: 0,
            batch: Default::default(),
            burn_in: Default::default(),
            post_burn: Default::default(),
            frozen: false,
        }
    }
}

/// Step size for batch `b` (1-based).
pub fn adaptation_step(b: usize) -> f64 {
    0.05f64.min(1.0 / (b as f64).sqrt())
}

/// Scale update for one batch acceptance rate.
pub fn adapted_scale(scale: f64, rate: f64, step: f64) -> f64 {
    if rate > TARGET_HIGH {
        scale * step.exp()
    } else if rate < TARGET_LOW {
        scale * (-step).exp()
    } else {
        scale
    }
}

impl TuningState {
    pub fn record(&mut self, kind: MoveKind, accepted: bool) {
        let i = kind.index();
        if self.frozen {
            self.post_burn[i].record(accepted);
        } else {
            self.batch[i].record(accepted);
            self.burn_in[i].record(accepted);
        }
    }

    pub fn scale(&self, kind: MoveKind) -> Option<f64> {
        match kind {
            MoveKind::AlphaDelta => Some(self.h),
            MoveKind::Sigma2 => Some(self.f2),
            MoveKind::CBeta => Some(self.g2),
            MoveKind::Gamma => None,
        }
    }

    /// Apply the batch rule to the scale tied to `kind`.
    pub fn adapt(&mut self, kind: MoveKind) {
        if self.frozen {
            return;
        }
        let Some(rate) = self.batch[kind.index()].rate() else {
            return;
        };
        let step = adaptation_step(self.batches + 1);
        let slot = match kind {
            MoveKind::AlphaDelta => &mut self.h,
            MoveKind::Sigma2 => &mut self.f2,
            MoveKind::CBeta => &mut self.g2,
            MoveKind::Gamma => return,
        };
        *slot = adapted_scale(*slot, rate, step);
    }

    /// Adapt every tuned scale, then start a new batch.
    pub fn end_batch(&mut self) {
        for kind in MoveKind::ALL {
            self.adapt(kind);
        }
        self.batches += 1;
        self.batch = Default::default();
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn post_burn_rate(&self, kind: MoveKind) -> Option<f64> {
        self.post_burn[kind.index()].rate()
    }

    pub fn burn_in_rate(&self, kind: MoveKind) -> Option<f64> {
        self.burn_in[kind.index()].rate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_application() {
        assert!(adapted_scale(1.0, 0.5, 0.05) > 1.0);
        assert_eq!(adapted_scale(1.0, 0.22, 0.05), 1.0);
        assert!(adapted_scale(1.0, 0.1, 0.05) < 1.0);
        assert_eq!(adaptation_step(1), 0.05);
        assert!((adaptation_step(1600) - 0.025).abs() < 1e-15);
    }

    #[test]
    fn batch_updates_then_freezes() {
        let mut t = TuningState::default();
        for i in 0..50 {
            t.record(MoveKind::AlphaDelta, i % 2 == 0);
            t.record(MoveKind::CBeta, i % 10 == 0);
        }
        t.end_batch();
        assert!(t.h > 1.0);
        assert!(t.g2 < 1.0);
        assert_eq!(t.f2, 1.0);
        t.freeze();
        let h = t.h;
        t.record(MoveKind::AlphaDelta, true);
        t.end_batch();
        assert_eq!(t.h, h);
        assert_eq!(t.post_burn_rate(MoveKind::AlphaDelta), Some(1.0));
    }
}
