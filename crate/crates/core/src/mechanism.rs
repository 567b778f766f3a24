//! Laplace noise and privacy-budget bookkeeping.

use rand::distributions::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One draw from Laplace(0, `scale`) by inverse-CDF sampling.
pub fn laplace_sample<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> Result<f64> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::invalid("scale", format!("{scale} must be positive and finite")));
    }
    let u: f64 = rng.sample::<f64, _>(Open01) - 0.5;
    Ok(-scale * u.signum() * (1.0 - 2.0 * u.abs()).ln())
}

/// Per-phase privacy budgets.
///
/// `eps1` pays for parameter selection (split over `candidates` rounds),
/// `eps2` for local projection and `eps3` for publishing projected degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetSplit {
    pub eps_total: f64,
    pub alpha: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
    /// Size of the candidate set `{1..K}` for the projection parameter.
    pub candidates: u32,
}

/// `eps3 = alpha * eps`, the remainder split evenly between selection and
/// projection.
pub fn split_budget(eps_total: f64, alpha: f64, candidates: u32) -> Result<BudgetSplit> {
    if !(eps_total > 0.0 && eps_total.is_finite()) {
        return Err(Error::invalid("eps", format!("{eps_total} must be positive")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid("alpha", format!("{alpha} must lie in (0, 1)")));
    }
    if candidates == 0 {
        return Err(Error::invalid("K", "candidate set must be non-empty"));
    }
    let rest = (1.0 - alpha) * eps_total / 2.0;
    Ok(BudgetSplit {
        eps_total,
        alpha,
        eps1: rest,
        eps2: rest,
        eps3: alpha * eps_total,
        candidates,
    })
}

impl BudgetSplit {
    /// Arbitrary per-phase budgets. Zero selection or projection budget is
    /// accepted for accounting what-ifs; `eps3` must be positive.
    pub fn custom(eps1: f64, eps2: f64, eps3: f64, candidates: u32) -> Result<Self> {
        if eps1 < 0.0 || eps2 < 0.0 || !eps1.is_finite() || !eps2.is_finite() {
            return Err(Error::invalid("eps1/eps2", "must be non-negative and finite"));
        }
        if !(eps3 > 0.0 && eps3.is_finite()) {
            return Err(Error::invalid("eps3", format!("{eps3} must be positive")));
        }
        if candidates == 0 {
            return Err(Error::invalid("K", "candidate set must be non-empty"));
        }
        let eps_total = eps1 + eps2 + eps3;
        Ok(Self { eps_total, alpha: eps3 / eps_total, eps1, eps2, eps3, candidates })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyAccount {
    /// `eps1/K + eps2 + eps3`, the end-to-end figure claimed for the
    /// pipeline.
    pub claimed_total: f64,
    /// `eps1 + eps2 + eps3`: K selection rounds at `eps1/K` each under
    /// sequential composition.
    pub composed_total: f64,
}

pub fn account_privacy(split: &BudgetSplit) -> PrivacyAccount {
    let k = split.candidates as f64;
    PrivacyAccount {
        claimed_total: split.eps1 / k + split.eps2 + split.eps3,
        composed_total: split.eps1 + split.eps2 + split.eps3,
    }
}
