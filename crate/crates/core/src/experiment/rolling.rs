use std::ops::Range;

use rayon::prelude::*;

use super::selection::{adaptive_row, baseline_row, select_adaptive, select_baseline, Split};
use super::{ExperimentConfig, Fold, ResultRow};
use crate::dataio::{load_panel_csv, make_features, rolling_splits, RollingSplit};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::metrics::{evaluate, score_split, MetricsReport};
use crate::LinearPredictor;

fn rows(m: &DenseMatrix, r: &Range<usize>) -> DenseMatrix {
    m.rows(r.start, r.len()).into_owned()
}

fn stack(parts: &[&DenseMatrix]) -> DenseMatrix {
    let cols = parts[0].ncols();
    let total: usize = parts.iter().map(|p| p.nrows()).sum();
    let mut out = DenseMatrix::zeros(total, cols);
    let mut at = 0;
    for p in parts {
        out.rows_mut(at, p.nrows()).copy_from(p);
        at += p.nrows();
    }
    out
}

/// One method's outcome on one fold, kept for gluing.
struct FoldFit {
    row: ResultRow,
    train_pred: DenseMatrix,
    test_pred: DenseMatrix,
}

fn fold_fit<P: LinearPredictor>(
    model: &P,
    train: Split<'_>,
    test: Split<'_>,
    row: ResultRow,
) -> Result<FoldFit> {
    Ok(FoldFit {
        train_pred: model.predict(train.0)?,
        test_pred: model.predict(test.0)?,
        row,
    })
}

/// Rolling backtest on a return panel: per fold, every method is fit on the
/// train window, tuned on the validation window and scored on the test
/// window. A final `all` row per method scores the concatenated folds.
pub fn run_rolling(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let rc = cfg.rolling.as_ref().expect("validated");
    let panel = load_panel_csv(&rc.panel)?;
    let features = make_features(&panel, &rc.lookbacks, rc.horizon)?;
    let (x, y) = (&features.x, &features.y);
    cfg.validate_rolling_shapes(rc.train_len, x.ncols(), y.ncols())?;
    let splits = rolling_splits(
        x.nrows(),
        rc.train_len,
        rc.valid_len,
        rc.test_len,
        rc.gap_len,
    )
    .map_err(|e| Error::Config(format!("rolling windows: {e}")))?;
    let seed = cfg.seeds()[0];
    let candidates = cfg.adaptive_candidates();

    let per_fold: Vec<Vec<FoldFit>> = splits
        .par_iter()
        .enumerate()
        .map(|(f, split): (usize, &RollingSplit)| {
            let (xt, yt) = (rows(x, &split.train), rows(y, &split.train));
            let (xv, yv) = (rows(x, &split.valid), rows(y, &split.valid));
            let (xs, ys) = (rows(x, &split.test), rows(y, &split.test));
            let (train, valid, test) = ((&xt, &yt), (&xv, &yv), (&xs, &ys));
            let choice = select_adaptive(&cfg.fit, cfg.fit.sigma_eps, &candidates, train, valid)?;
            let mut row = adaptive_row(
                seed,
                None,
                &choice,
                evaluate(&choice.model, train, test, None)?,
            );
            row.fold = Fold::Index(f);
            let mut fits = vec![fold_fit(&choice.model, train, test, row)?];
            for grid in &cfg.baselines {
                let model = select_baseline(grid, train, valid)?;
                let mut row =
                    baseline_row(seed, None, &model, evaluate(&model, train, test, None)?);
                row.fold = Fold::Index(f);
                fits.push(fold_fit(&model, train, test, row)?);
            }
            Ok(fits)
        })
        .collect::<Result<_>>()?;

    let glued_y = |pick: fn(&RollingSplit) -> &Range<usize>| {
        let parts: Vec<DenseMatrix> = splits.iter().map(|s| rows(y, pick(s))).collect();
        stack(&parts.iter().collect::<Vec<_>>())
    };
    let (y_train, y_test) = (glued_y(|s| &s.train), glued_y(|s| &s.test));
    let mut out = Vec::new();
    let methods = per_fold.first().map_or(0, Vec::len);
    for m in 0..methods {
        let fits: Vec<&FoldFit> = per_fold.iter().map(|f| &f[m]).collect();
        let glue = |pick: fn(&FoldFit) -> &DenseMatrix| {
            stack(&fits.iter().map(|f| pick(f)).collect::<Vec<_>>())
        };
        let inn = score_split(&glue(|f| &f.train_pred), &y_train)?;
        let outs = score_split(&glue(|f| &f.test_pred), &y_test)?;
        let ranks: Vec<usize> = fits
            .iter()
            .map(|f| {
                f.row
                    .report
                    .as_ref()
                    .expect("fold rows carry reports")
                    .recovered_rank
            })
            .collect();
        let mean_rank = ranks.iter().sum::<usize>() as f64 / ranks.len() as f64;
        let first = &fits[0].row;
        out.push(ResultRow {
            seed,
            method: first.method.clone(),
            eta: None,
            fold: Fold::All,
            k1: None,
            k2: None,
            hyper: String::new(),
            report: Some(MetricsReport {
                mse_in: inn.mse,
                mse_out: outs.mse,
                r2_in: inn.r2,
                r2_out: outs.r2,
                corr_out: outs.corr,
                recon_error: None,
                recovered_rank: mean_rank.round() as usize,
                gap_out_in: outs.mse - inn.mse,
                degenerate: inn.constant_y || outs.constant_y,
            }),
        });
    }
    out.extend(per_fold.into_iter().flatten().map(|f| f.row));
    Ok(out)
}
