use std::collections::VecDeque;
use std::time::Instant;

use log::debug;
use serde::{Deserialize, Serialize};

use super::{SurrogateNet, TrainingData};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Training stops as soon as the loss reaches this value.
    pub loss_target: f64,
    /// Adam epoch cap for a network trained from scratch.
    pub adam_epochs: usize,
    /// Adam epoch cap when warm-started from a previous fit.
    pub warm_adam_epochs: usize,
    pub lbfgs_history: usize,
    pub lbfgs_max_iters: usize,
    /// L-BFGS stops when the loss drops by less than this relative amount
    /// over `stagnation_window` iterations.
    pub stagnation_tol: f64,
    pub stagnation_window: usize,
    pub hidden_layers: usize,
    pub width: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            loss_target: 1e-6,
            adam_epochs: 20_000,
            warm_adam_epochs: 2_000,
            lbfgs_history: 10,
            lbfgs_max_iters: 1_000,
            stagnation_tol: 1e-10,
            stagnation_window: 10,
            hidden_layers: 3,
            width: 40,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("epsilon", self.epsilon),
            ("loss_target", self.loss_target),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("surrogate.{name} must be positive, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if self.lbfgs_history == 0 || self.stagnation_window == 0 || self.width == 0 {
            return Err(Error::Config("history, window and width must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub adam_epochs: usize,
    pub lbfgs_iters: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub wall_ms: u64,
}

impl TrainReport {
    pub fn total_iterations(&self) -> usize {
        self.adam_epochs + self.lbfgs_iters
    }
}

fn check_finite(loss: f64, adam_epochs: usize, lbfgs_iters: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::TrainingDiverged {
            adam_epochs,
            lbfgs_iters,
        })
    }
}

/// Fits `net` to `data`: full-batch Adam until the loss target or the epoch
/// cap, then L-BFGS until the target, stagnation or its cap. The current
/// parameters are the starting point; `warm` selects the smaller Adam cap.
pub fn train(net: &mut SurrogateNet, data: &TrainingData, cfg: &TrainConfig, warm: bool) -> Result<TrainReport> {
    cfg.validate()?;
    let start = Instant::now();
    let cap = if warm { cfg.warm_adam_epochs } else { cfg.adam_epochs };

    let mut x = net.params().to_vec();
    let (mut loss, mut grad) = net.loss_and_gradient_with(&x, data);
    check_finite(loss, 0, 0)?;
    let initial_loss = loss;
    let mut best = (loss, x.clone());

    // Adam
    let mut m = vec![0.0; x.len()];
    let mut v = vec![0.0; x.len()];
    let mut epochs = 0;
    while loss > cfg.loss_target && epochs < cap {
        epochs += 1;
        let bc1 = 1.0 - cfg.beta1.powi(epochs as i32);
        let bc2 = 1.0 - cfg.beta2.powi(epochs as i32);
        for i in 0..x.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            x[i] -= cfg.learning_rate * (m[i] / bc1) / ((v[i] / bc2).sqrt() + cfg.epsilon);
        }
        (loss, grad) = net.loss_and_gradient_with(&x, data);
        check_finite(loss, epochs, 0)?;
        if loss < best.0 {
            best = (loss, x.clone());
        }
        if epochs % 1000 == 0 {
            debug!("adam epoch {epochs}: loss {loss:.3e}");
        }
    }
    (loss, x) = best;

    let lbfgs_iters = if loss > cfg.loss_target {
        let (l, it) = lbfgs(net, data, cfg, &mut x, loss, epochs)?;
        loss = l;
        it
    } else {
        0
    };
    net.set_params(x)?;
    Ok(TrainReport {
        adam_epochs: epochs,
        lbfgs_iters,
        initial_loss,
        final_loss: loss,
        wall_ms: start.elapsed().as_millis() as u64,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Limited-memory BFGS with Armijo backtracking. Returns the final loss and
/// the number of accepted iterations; `x` is updated in place.
fn lbfgs(
    net: &SurrogateNet,
    data: &TrainingData,
    cfg: &TrainConfig,
    x: &mut Vec<f64>,
    mut loss: f64,
    adam_epochs: usize,
) -> Result<(f64, usize)> {
    const ARMIJO: f64 = 1e-4;
    const MAX_BACKTRACKS: usize = 40;
    let (_, mut grad) = net.loss_and_gradient_with(x, data);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.lbfgs_history);
    let mut recent: VecDeque<f64> = VecDeque::from([loss]);
    let mut iters = 0;
    while iters < cfg.lbfgs_max_iters && loss > cfg.loss_target {
        // two-loop recursion
        let mut q = grad.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let gamma = history.back().map_or(1.0, |(s, y, _)| dot(s, y) / dot(y, y));
        q.iter_mut().for_each(|qi| *qi *= gamma);
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&grad, &dir);
        if !(slope < 0.0) {
            history.clear();
            dir = grad.iter().map(|g| -g).collect();
            slope = -dot(&grad, &grad);
        }
        let mut step = if history.is_empty() {
            (1e-3 / dot(&dir, &dir).sqrt()).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            let (l, g) = net.loss_and_gradient_with(&trial, data);
            if l.is_finite() && l <= loss + ARMIJO * step * slope {
                accepted = Some((trial, l, g));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, new_loss, new_grad)) = accepted else {
            debug!("line search failed after {iters} L-BFGS iterations");
            break;
        };
        check_finite(new_loss, adam_epochs, iters)?;
        let s: Vec<f64> = trial.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = new_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).max(f64::MIN_POSITIVE) {
            if history.len() == cfg.lbfgs_history {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        *x = trial;
        grad = new_grad;
        loss = new_loss;
        iters += 1;
        if iters % 100 == 0 {
            debug!("L-BFGS iteration {iters}: loss {loss:.3e}");
        }

        recent.push_back(loss);
        if recent.len() > cfg.stagnation_window + 1 {
            recent.pop_front();
        }
        if recent.len() == cfg.stagnation_window + 1 {
            let old = recent[0];
            if (old - loss) <= cfg.stagnation_tol * old {
                debug!("L-BFGS stagnated at iteration {iters}, loss {loss:.3e}");
                break;
            }
        }
    }
    Ok((loss, iters))
}
