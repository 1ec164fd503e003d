//! Exponential localization loss over the two head matrices.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridMask;
use crate::mask::LocalizationTargets;
use crate::net::LocalizationOutput;

/// Loss coefficients. `gamma` must lie strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub alpha1: f64,
    pub alpha2: f64,
    pub gamma: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha1: 1e-5,
            alpha2: 234.0,
            gamma: 1e-4,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha1.is_finite() && self.alpha1 >= 0.0) {
            return Err(Error::InvalidConfig(format!("alpha1 = {}", self.alpha1)));
        }
        if !(self.alpha2.is_finite() && self.alpha2 >= 0.0) {
            return Err(Error::InvalidConfig(format!("alpha2 = {}", self.alpha2)));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

fn check_orders(probs: &Array2<f64>, mask: &GridMask, what: &str) -> Result<()> {
    if probs.nrows() != mask.order() || probs.ncols() != mask.order() {
        return Err(Error::ShapeMismatch(format!(
            "{what}: predicted {}x{} vs target {0}x{0}",
            probs.nrows(),
            mask.order()
        )));
    }
    Ok(())
}

/// Sum of `gamma^(2 (p_hat - p))` over all cells, evaluated as
/// `exp(2 (p_hat - p) ln gamma)`.
fn exp_term_sum(probs: &Array2<f64>, mask: &GridMask, gamma: f64) -> f64 {
    let ln_g = gamma.ln();
    probs
        .iter()
        .zip(mask.cells().iter())
        .map(|(&p_hat, &p)| (2.0 * (p_hat - f64::from(p)) * ln_g).exp())
        .sum()
}

/// Total loss for one output/target pair.
pub fn loss(
    output: &LocalizationOutput,
    targets: &LocalizationTargets,
    cfg: &LossConfig,
) -> Result<f64> {
    cfg.validate()?;
    check_orders(output.roi_probs.cells(), &targets.roi, "roi head")?;
    check_orders(output.center_probs.cells(), &targets.center, "center head")?;
    let roi = exp_term_sum(output.roi_probs.cells(), &targets.roi, cfg.gamma);
    let center = exp_term_sum(output.center_probs.cells(), &targets.center, cfg.gamma);
    Ok(cfg.alpha1 * roi + cfg.alpha2 * center)
}

/// Gradients of the loss with respect to each head entry:
/// `dL/dp_hat = 2 ln(gamma) * alpha * gamma^(2 (p_hat - p))`.
pub fn loss_gradient(
    output: &LocalizationOutput,
    targets: &LocalizationTargets,
    cfg: &LossConfig,
) -> Result<(Array2<f64>, Array2<f64>)> {
    cfg.validate()?;
    check_orders(output.roi_probs.cells(), &targets.roi, "roi head")?;
    check_orders(output.center_probs.cells(), &targets.center, "center head")?;
    let ln_g = cfg.gamma.ln();
    let grad = |probs: &Array2<f64>, mask: &GridMask, alpha: f64| {
        let mut g = Array2::zeros(probs.raw_dim());
        for ((gv, &p_hat), &p) in g.iter_mut().zip(probs.iter()).zip(mask.cells().iter()) {
            *gv = 2.0 * ln_g * alpha * (2.0 * (p_hat - f64::from(p)) * ln_g).exp();
        }
        g
    };
    Ok((
        grad(output.roi_probs.cells(), &targets.roi, cfg.alpha1),
        grad(output.center_probs.cells(), &targets.center, cfg.alpha2),
    ))
}
