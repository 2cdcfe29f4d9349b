//! Hyperparameter selection on a validation split, shared by the compare
//! and rolling drivers.

use rayon::prelude::*;

use super::{hyper_string, BaselineGrid, ResultRow};
use crate::baselines::{validate_hyperparams, BaselineSpec, LinearModel, Method};
use crate::error::{Error, Result};
use crate::estimator::{fit_adaptive_rrr, FitConfig, FittedModel, NoiseLevel};
use crate::matrix::DenseMatrix;
use crate::metrics::{score_split, MetricsReport};
use crate::LinearPredictor;

pub(crate) type Split<'a> = (&'a DenseMatrix, &'a DenseMatrix);

fn valid_mse<P: LinearPredictor>(model: &P, valid: Split<'_>) -> f64 {
    model
        .predict(valid.0)
        .and_then(|p| score_split(&p, valid.1))
        .map_or(f64::NAN, |s| s.mse)
}

pub(crate) struct AdaptiveChoice {
    pub model: FittedModel,
    pub theta: f64,
    pub delta: f64,
}

/// Fits every `(θ, δ)` candidate and keeps the one with the lowest
/// validation MSE. Candidates that fail numerically are skipped; if all of
/// them fail the first failure is returned.
pub(crate) fn select_adaptive(
    base: &FitConfig,
    sigma: NoiseLevel,
    candidates: &[(f64, f64)],
    train: Split<'_>,
    valid: Split<'_>,
) -> Result<AdaptiveChoice> {
    let fits: Vec<Result<(FittedModel, f64)>> = candidates
        .par_iter()
        .map(|&(theta, delta)| {
            let cfg = FitConfig {
                theta,
                delta,
                sigma_eps: sigma,
                ..base.clone()
            };
            let model = fit_adaptive_rrr(train.0, train.1, &cfg)?;
            let score = valid_mse(&model, valid);
            Ok((model, score))
        })
        .collect();
    let mut best: Option<(usize, FittedModel, f64)> = None;
    let mut first_err = None;
    for (i, fit) in fits.into_iter().enumerate() {
        match fit {
            Ok((model, score)) => {
                let better = match &best {
                    None => true,
                    Some((_, _, s)) => !score.is_nan() && (s.is_nan() || score < *s),
                };
                if better {
                    best = Some((i, model, score));
                }
            }
            Err(e) if e.is_numerical() => {
                first_err.get_or_insert(e);
            }
            Err(e) => return Err(e),
        }
    }
    match best {
        Some((i, model, _)) => Ok(AdaptiveChoice {
            model,
            theta: candidates[i].0,
            delta: candidates[i].1,
        }),
        None => Err(first_err.unwrap_or_else(|| Error::arg("no adaptive candidates"))),
    }
}

/// Validated baseline fit; a selected model that did not converge is an error.
pub(crate) fn select_baseline(
    grid: &BaselineGrid,
    train: Split<'_>,
    valid: Split<'_>,
) -> Result<LinearModel> {
    let specs = grid.expand();
    let v = validate_hyperparams(&specs, train, valid, |m, x, y| valid_mse(m, (x, y)))?;
    if !v.model.converged {
        return Err(Error::NonConvergence {
            method: grid.method.name().to_string(),
            iterations: v.model.iterations_used,
        });
    }
    Ok(v.model)
}

pub(crate) fn adaptive_hyper(choice: &AdaptiveChoice) -> String {
    hyper_string(&[
        ("theta", choice.theta.to_string()),
        ("delta", choice.delta.to_string()),
    ])
}

pub(crate) fn baseline_hyper(spec: &BaselineSpec) -> String {
    let mut pairs = Vec::new();
    if !matches!(spec.method, Method::Rrr | Method::Pcr) {
        pairs.push(("mu", spec.mu.to_string()));
    }
    if let Some(r) = spec.rank {
        pairs.push(("rank", r.to_string()));
    }
    hyper_string(&pairs)
}

pub(crate) fn adaptive_row(
    seed: u64,
    eta: Option<f64>,
    choice: &AdaptiveChoice,
    report: MetricsReport,
) -> ResultRow {
    ResultRow {
        seed,
        method: super::ADAPTIVE_METHOD.to_string(),
        eta,
        fold: super::Fold::None,
        k1: Some(choice.model.k1),
        k2: Some(choice.model.k2),
        hyper: adaptive_hyper(choice),
        report: Some(report),
    }
}

pub(crate) fn baseline_row(
    seed: u64,
    eta: Option<f64>,
    model: &LinearModel,
    report: MetricsReport,
) -> ResultRow {
    ResultRow {
        seed,
        method: model.spec.method.name().to_string(),
        eta,
        fold: super::Fold::None,
        k1: None,
        k2: None,
        hyper: baseline_hyper(&model.spec),
        report: Some(report),
    }
}
