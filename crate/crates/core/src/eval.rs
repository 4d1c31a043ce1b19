//! Evaluation metrics: SErrMin inlier percentage, median and cumulative
//! curve against a fundamental matrix, and uncertainty-filtered EPE-S.

use crate::epipolar::{serr_min, Correspondence, FundamentalMatrix, SmearVector};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::robust::{median, select_top_beta_indices};
use crate::smear::{epe_s, SmearField};

pub const DEFAULT_THRESHOLD: f64 = 3.0;

/// 50 log-spaced thresholds from 1e-3 to 1e2.
pub fn default_curve_grid() -> Vec<f64> {
    log_grid(1e-3, 1e2, 50)
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..n)
                .map(|k| 10f64.powf(a + (b - a) * k as f64 / (n - 1) as f64))
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FmEvalResult {
    pub inlier_percent: f64,
    pub median_serr: f64,
    /// `(threshold, fraction of correspondences with SErrMin ≤ threshold)`.
    pub curve: Vec<(f64, f64)>,
    pub count: usize,
}

pub fn fm_eval(
    cs: &[Correspondence],
    f: &FundamentalMatrix,
    threshold: f64,
    curve_grid: &[f64],
) -> Result<FmEvalResult> {
    if cs.is_empty() {
        return Err(Error::EmptyInput);
    }
    if threshold.is_nan() {
        return Err(Error::ConfigInvalid("threshold is NaN".into()));
    }
    let errors: Vec<f64> = cs.iter().map(|c| serr_min(c, f).0).collect();
    let n = errors.len() as f64;
    let below = |t: f64| errors.iter().filter(|&&e| e <= t).count() as f64;
    let mut grid = curve_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    Ok(FmEvalResult {
        inlier_percent: 100.0 * below(threshold) / n,
        median_serr: median(&errors),
        curve: grid.into_iter().map(|t| (t, below(t) / n)).collect(),
        count: errors.len(),
    })
}

/// Mean EPE-S over the `⌈top_fraction · N⌉` lowest-sigma pixels of `pred`
/// (ties by pixel index).
pub fn epe_s_summary(pred: &SmearField, gt: &Grid<SmearVector>, top_fraction: f64) -> Result<f64> {
    if !pred.same_shape(gt) {
        return Err(Error::DimensionMismatch(format!(
            "prediction is {}x{}, ground truth is {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(top_fraction > 0.0 && top_fraction <= 1.0) {
        return Err(Error::ConfigInvalid(format!("top fraction must be in (0, 1], got {top_fraction}")));
    }
    let n = pred.len();
    let keep = ((top_fraction * n as f64).ceil() as usize).clamp(1, n);
    let sigmas: Vec<f64> = pred.data().iter().map(|r| r.sigma).collect();
    // Selecting exactly `keep` entries: the index helper rounds, so pass an
    // exact ratio.
    let idx = select_top_beta_indices(&sigmas, keep as f64 / n as f64)?;
    let total: f64 = idx.iter().map(|&i| epe_s(pred.data()[i].smear(), gt.data()[i])).sum();
    Ok(total / idx.len() as f64)
}

/// One header line and one value line, tab separated.
pub fn fm_eval_to_tsv(r: &FmEvalResult) -> String {
    format!(
        "inlier_percent\tmedian_serr\tcount\n{}\t{}\t{}\n",
        r.inlier_percent, r.median_serr, r.count
    )
}

/// Two-column `threshold ratio` text, plottable with gnuplot.
pub fn curve_to_text(curve: &[(f64, f64)]) -> String {
    let mut out = String::from("# threshold ratio\n");
    for (t, r) in curve {
        out += &format!("{t} {r}\n");
    }
    out
}
