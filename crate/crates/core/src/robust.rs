//! Uncertainty-ranked selection, preemptive RANSAC over seven-smear samples,
//! consensus refinement and local-motion classification.

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::epipolar::{
    mul_left, mul_right, parse_f64, sampson_raw, sandwich, serr_min, serr_min_raw, Correspondence, FundamentalMatrix,
    ImagePoint, Mat3, SmearVector, TimeDirection, DEGENERATE_TOL,
};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::refine::{refine_rank2, Refined};
use crate::rng;
use crate::smear::SmearField;
use crate::solver::{ambiguous_7pt_candidates, Normalizer};
use crate::textio::{numbers, parse_usize, TextReader};

pub const DEFAULT_BETA: f64 = 0.35;
pub const DEFAULT_TAU_SE: f64 = 1.0;
pub const DEFAULT_TAU_SEG: f64 = 3.0;
pub const DEFAULT_SIGMA_GATE: f64 = 2.0;

/// Draw attempts per hypothesis before a degenerate sample is given up.
const MAX_DRAWS: usize = 10;
const REFINE_ROUNDS: usize = 3;
const REFINE_ITERS: usize = 50;
const REFINE_GRAD_TOL: f64 = 1e-12;

/// Top-β selection result. Entries are in increasing pixel-index order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Selection {
    pub points: Vec<ImagePoint>,
    pub smears: Vec<SmearVector>,
    pub indices: Vec<usize>,
}

impl Selection {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn correspondences(&self) -> Vec<Correspondence> {
        self.points
            .iter()
            .zip(&self.smears)
            .map(|(&p, &s)| Correspondence::new(p, s))
            .collect()
    }
}

/// Indices of the `round(beta · n)` smallest sigmas, ties broken by index,
/// returned in increasing index order.
pub fn select_top_beta_indices(sigmas: &[f64], beta: f64) -> Result<Vec<usize>> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::ConfigInvalid(format!("beta must be in (0, 1], got {beta}")));
    }
    let l = ((beta * sigmas.len() as f64).round() as usize).min(sigmas.len());
    let mut order: Vec<usize> = (0..sigmas.len()).collect();
    order.sort_by(|&a, &b| sigmas[a].total_cmp(&sigmas[b]).then(a.cmp(&b)));
    order.truncate(l);
    order.sort_unstable();
    Ok(order)
}

/// The `round(beta · W · H)` most confident pixels of `field`, at pixel
/// centers. Small selections are allowed; estimation rejects them.
pub fn select_top_beta(field: &SmearField, beta: f64) -> Result<Selection> {
    let sigmas: Vec<f64> = field.data().iter().map(|r| r.sigma).collect();
    let indices = select_top_beta_indices(&sigmas, beta)?;
    let mut sel = Selection::default();
    for &i in &indices {
        let (x, y) = field.coords_of(i);
        let r = field.data()[i];
        sel.points.push(ImagePoint::new(x as f64 + 0.5, y as f64 + 0.5));
        sel.smears.push(r.smear());
    }
    sel.indices = indices;
    Ok(sel)
}

/// Top-β selection over an arbitrary correspondence list.
pub fn select_top_beta_list(cs: &[Correspondence], sigmas: &[f64], beta: f64) -> Result<Selection> {
    if cs.len() != sigmas.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} correspondences but {} sigmas",
            cs.len(),
            sigmas.len()
        )));
    }
    let indices = select_top_beta_indices(sigmas, beta)?;
    Ok(Selection {
        points: indices.iter().map(|&i| cs[i].midpoint).collect(),
        smears: indices.iter().map(|&i| cs[i].half_smear).collect(),
        indices,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacConfig {
    pub tau_se: f64,
    /// Maximum number of block rounds.
    pub max_iterations: usize,
    pub early_stop_fraction: f64,
    /// Number of seven-smear samples; each contributes all its candidates.
    pub hypotheses: usize,
    pub block_size: usize,
    pub seed: u64,
    /// Survivors of the preemptive stage that are refined on their consensus
    /// sets; the lowest final truncated cost wins.
    pub refine_top: usize,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            tau_se: DEFAULT_TAU_SE,
            max_iterations: 1000,
            early_stop_fraction: 0.9,
            hypotheses: 512,
            block_size: 64,
            seed: 0,
            refine_top: 8,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        if !(self.tau_se > 0.0 && self.tau_se.is_finite()) {
            return bad(format!("tau must be > 0, got {}", self.tau_se));
        }
        if self.hypotheses == 0 {
            return bad("hypotheses must be >= 1".into());
        }
        if self.block_size == 0 {
            return bad("block size must be >= 1".into());
        }
        if self.refine_top == 0 {
            return bad("refine_top must be >= 1".into());
        }
        if self.max_iterations == 0 {
            return bad("max iterations must be >= 1".into());
        }
        if !(self.early_stop_fraction > 0.0 && self.early_stop_fraction <= 1.0) {
            return bad(format!("early stop fraction must be in (0, 1], got {}", self.early_stop_fraction));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationReport {
    pub f: FundamentalMatrix,
    pub tau_se: f64,
    pub inlier_mask: Vec<bool>,
    pub per_smear_error: Vec<f64>,
    pub directions: Vec<TimeDirection>,
    /// Block rounds run by the preemptive stage.
    pub iterations_used: usize,
    pub selected_indices: Vec<usize>,
    pub points: Vec<ImagePoint>,
    pub smears: Vec<SmearVector>,
}

impl EstimationReport {
    pub fn inlier_count(&self) -> usize {
        self.inlier_mask.iter().filter(|&&b| b).count()
    }

    pub fn median_error(&self) -> f64 {
        median(&self.per_smear_error)
    }
}

/// Median with the even-count convention "mean of the middle pair"; NaN for
/// empty input.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        let (a, b) = (v[n / 2 - 1], v[n / 2]);
        if a == b {
            a
        } else {
            a / 2.0 + b / 2.0
        }
    }
}

struct Hypothesis {
    f: Mat3,
    ft: Mat3,
}

/// All candidates of hypothesis slot `h`, or none if every draw was degenerate.
fn hypotheses_for_slot(cs: &[Correspondence], seed: u64, h: usize) -> Vec<Hypothesis> {
    let mut rng = rng::stream(seed, 1 + h as u64);
    for _ in 0..MAX_DRAWS {
        let idx = sample(&mut rng, cs.len(), 7);
        let tuple: [Correspondence; 7] = std::array::from_fn(|k| cs[idx.index(k)]);
        if let Ok(cands) = ambiguous_7pt_candidates(&tuple) {
            return cands
                .into_iter()
                .filter(|c| c.f.is_finite())
                .map(|c| Hypothesis {
                    f: *c.f.matrix(),
                    ft: c.f.matrix().transpose(),
                })
                .collect();
        }
    }
    Vec::new()
}

/// Preemptive RANSAC: every candidate of every sample is scored
/// breadth-first on blocks of a random observation order, keeping the better
/// half after each block.
fn preemptive(obs: &[([f64; 3], [f64; 3])], cs: &[Correspondence], cfg: &RansacConfig) -> Result<(Vec<Mat3>, usize)> {
    let hyps: Vec<Hypothesis> = (0..cfg.hypotheses)
        .into_par_iter()
        .map(|h| hypotheses_for_slot(cs, cfg.seed, h))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    if hyps.is_empty() {
        return Err(Error::AllHypothesesDegenerate);
    }

    let n = obs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(cfg.seed, 0));
    let tau = cfg.tau_se;
    let needed = cfg.early_stop_fraction * n as f64;

    // (score, hypothesis index); lower score is better.
    let mut alive: Vec<(f64, usize)> = (0..hyps.len()).map(|i| (0.0, i)).collect();
    let mut rounds = 0;
    let mut start = 0;
    while start < n && rounds < cfg.max_iterations {
        let block = &order[start..(start + cfg.block_size).min(n)];
        alive.par_iter_mut().for_each(|(score, i)| {
            let h = &hyps[*i];
            for &k in block {
                let (a, b) = &obs[k];
                *score += serr_min_raw(a, b, &h.f, &h.ft).0.min(tau);
            }
        });
        start += block.len();
        rounds += 1;
        alive.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        alive.truncate(alive.len().div_ceil(2));

        let best = &hyps[alive[0].1];
        let inliers = obs
            .iter()
            .filter(|(a, b)| serr_min_raw(a, b, &best.f, &best.ft).0 <= tau)
            .count();
        if inliers as f64 > needed || alive.len() == 1 {
            break;
        }
    }
    let ranked = alive.iter().take(cfg.refine_top).map(|&(_, i)| hyps[i].f).collect();
    Ok((ranked, rounds))
}

/// Sampson residual `r / sqrt(den)` of `aᵀ F b` and its gradient in the
/// row-major coefficients of `F`.
fn sampson_residual(a: &[f64; 3], b: &[f64; 3], f: &Mat3) -> Option<(f64, [f64; 9])> {
    let r = sandwich(a, f, b);
    let l = mul_right(f, b);
    let lp = mul_left(f, a);
    let den = (l[0] * l[0] + l[1] * l[1]) + (lp[0] * lp[0] + lp[1] * lp[1]);
    if den < DEGENERATE_TOL {
        return None;
    }
    let s = den.sqrt();
    let mut g = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            let mut d_den = 0.0;
            if i < 2 {
                d_den += 2.0 * l[i] * b[j];
            }
            if j < 2 {
                d_den += 2.0 * lp[j] * a[i];
            }
            g[3 * i + j] = a[i] * b[j] / s - 0.5 * r * d_den / (den * s);
        }
    }
    Some((r / s, g))
}

fn truncated_cost(obs: &[([f64; 3], [f64; 3])], f: &Mat3, tau: f64) -> f64 {
    let ft = f.transpose();
    obs.iter().map(|(a, b)| serr_min_raw(a, b, f, &ft).0.min(tau)).sum()
}

/// Minimizes the truncated SErrMin cost starting from `f`, fitting Sampson
/// residuals of the current consensus set in normalized coordinates.
fn refine_consensus(cs: &[Correspondence], obs: &[([f64; 3], [f64; 3])], f: &Mat3, tau: f64) -> Mat3 {
    let mut best = *f;
    let mut best_cost = truncated_cost(obs, &best, tau);
    for _ in 0..REFINE_ROUNDS {
        let ft = best.transpose();
        let inliers: Vec<Correspondence> = cs
            .iter()
            .zip(obs)
            .filter(|(_, (a, b))| serr_min_raw(a, b, &best, &ft).0 <= tau)
            .map(|(c, _)| *c)
            .collect();
        if inliers.len() < 7 {
            break;
        }
        let norm = Normalizer::fit(&inliers);
        let obs_n: Vec<([f64; 3], [f64; 3])> = inliers.iter().map(|c| norm.apply(c).endpoints_h()).collect();
        let Ok(start) = norm.normalize(&best) else { break };
        let residuals = |f: &Mat3, r: &mut Vec<f64>, jac: &mut Vec<[f64; 9]>| {
            let ft = f.transpose();
            for (a, b) in &obs_n {
                let fwd = sampson_raw(a, b, f, DEGENERATE_TOL);
                let bwd = sampson_raw(a, b, &ft, DEGENERATE_TOL);
                let res = if bwd < fwd { sampson_residual(b, a, f) } else { sampson_residual(a, b, f) };
                if let Some((ri, gi)) = res {
                    r.push(ri);
                    jac.push(gi);
                }
            }
        };
        let cost = |f_n: &Mat3| match norm.denormalize(f_n) {
            Ok(f) => truncated_cost(obs, f.matrix(), tau),
            Err(_) => f64::INFINITY,
        };
        let Refined { f: f_n, .. } = refine_rank2(start.matrix(), &residuals, cost, REFINE_ITERS, REFINE_GRAD_TOL);
        let Ok(candidate) = norm.denormalize(&f_n) else { break };
        let c = truncated_cost(obs, candidate.matrix(), tau);
        if c < best_cost {
            best = *candidate.matrix();
            best_cost = c;
        } else {
            break;
        }
    }
    best
}

/// Robust fundamental matrix from direction-ambiguous smears.
///
/// Deterministic in `cfg.seed` regardless of thread count.
pub fn estimate_f(points: &[ImagePoint], smears: &[SmearVector], cfg: &RansacConfig) -> Result<EstimationReport> {
    cfg.validate()?;
    if points.len() != smears.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} points but {} smears",
            points.len(),
            smears.len()
        )));
    }
    if points.len() < 7 {
        return Err(Error::InsufficientData {
            needed: 7,
            got: points.len(),
        });
    }
    let cs: Vec<Correspondence> = points
        .iter()
        .zip(smears)
        .map(|(&p, &s)| Correspondence::new(p, s))
        .collect();
    let obs: Vec<([f64; 3], [f64; 3])> = cs.iter().map(|c| c.endpoints_h()).collect();

    let (ranked, rounds) = preemptive(&obs, &cs, cfg)?;
    let refined: Vec<(f64, Mat3)> = ranked
        .par_iter()
        .map(|f| {
            let r = refine_consensus(&cs, &obs, f, cfg.tau_se);
            (truncated_cost(&obs, &r, cfg.tau_se), r)
        })
        .collect();
    // First minimum in survivor rank order wins ties.
    let best = refined
        .iter()
        .fold(None, |acc: Option<&(f64, Mat3)>, c| match acc {
            Some(b) if b.0 <= c.0 => Some(b),
            _ => Some(c),
        })
        .expect("at least one survivor");
    let f = FundamentalMatrix::new(best.1)?;

    let (per_smear_error, directions): (Vec<f64>, Vec<TimeDirection>) = cs.iter().map(|c| serr_min(c, &f)).unzip();
    Ok(EstimationReport {
        inlier_mask: per_smear_error.iter().map(|&e| e <= cfg.tau_se).collect(),
        per_smear_error,
        directions,
        f,
        tau_se: cfg.tau_se,
        iterations_used: rounds,
        selected_indices: (0..cs.len()).collect(),
        points: points.to_vec(),
        smears: smears.to_vec(),
    })
}

/// [`estimate_f`] on a selection, reporting the selection's pixel indices.
pub fn estimate_selection(sel: &Selection, cfg: &RansacConfig) -> Result<EstimationReport> {
    let mut report = estimate_f(&sel.points, &sel.smears, cfg)?;
    report.selected_indices = sel.indices.clone();
    Ok(report)
}

pub const MASK_GLOBAL: u8 = 0;
pub const MASK_LOCAL: u8 = 1;
pub const MASK_UNKNOWN: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionConfig {
    pub tau_seg: f64,
    /// Zero smears with sigma above this are [`MASK_UNKNOWN`].
    pub sigma_gate: f64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            tau_seg: DEFAULT_TAU_SEG,
            sigma_gate: DEFAULT_SIGMA_GATE,
        }
    }
}

/// Per-pixel motion mask: [`MASK_LOCAL`] where SErrMin exceeds `tau_seg`,
/// [`MASK_GLOBAL`] otherwise, [`MASK_UNKNOWN`] for gated zero smears.
pub fn classify_motion(field: &SmearField, f: &FundamentalMatrix, cfg: &MotionConfig) -> Result<Grid<u8>> {
    if !(cfg.tau_seg > 0.0) {
        return Err(Error::ConfigInvalid(format!("tau_seg must be > 0, got {}", cfg.tau_seg)));
    }
    let w = field.width();
    let data = field
        .data()
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let s = r.smear();
            if s.is_zero() && r.sigma > cfg.sigma_gate {
                return MASK_UNKNOWN;
            }
            let p = ImagePoint::new((i % w) as f64 + 0.5, (i / w) as f64 + 0.5);
            let (e, _) = serr_min(&Correspondence::new(p, s), f);
            // NaN and +inf both count as incompatible.
            if e <= cfg.tau_seg {
                MASK_GLOBAL
            } else {
                MASK_LOCAL
            }
        })
        .collect();
    Grid::from_vec(w, field.height(), data)
}

pub fn report_to_text(report: &EstimationReport) -> String {
    let mut out = report.f.to_text();
    out += &format!("INLIERS {}/{}\n", report.inlier_count(), report.inlier_mask.len());
    out += &format!("MEDIAN_SERR {}\n", report.median_error());
    for k in 0..report.inlier_mask.len() {
        let (p, s) = (report.points[k], report.smears[k]);
        out += &format!(
            "{} {} {} {} {} {} {} {}\n",
            report.selected_indices[k],
            p.x,
            p.y,
            s.u,
            s.v,
            report.per_smear_error[k],
            report.directions[k].symbol(),
            u8::from(report.inlier_mask[k])
        );
    }
    out
}

/// Parses a report. `tau_se` and `iterations_used` are not stored; they come
/// back as NaN and 0.
pub fn parse_report(text: &str) -> Result<EstimationReport> {
    let f = FundamentalMatrix::parse_text(text)?;
    let mut reader = TextReader::new(text);
    // Skip the matrix block.
    for _ in 0..4 {
        reader.expect_tokens("FMAT block")?;
    }
    let (no, rest) = reader.expect_keyword("INLIERS")?;
    let counts: Vec<&str> = rest.first().map(|t| t.split('/').collect()).unwrap_or_default();
    if rest.len() != 1 || counts.len() != 2 {
        return Err(Error::parse(no, "expected INLIERS <count>/<total>"));
    }
    let (count, total) = (parse_usize(counts[0], no)?, parse_usize(counts[1], no)?);
    let (no, rest) = reader.expect_keyword("MEDIAN_SERR")?;
    numbers(no, &rest, 1)?;

    let mut report = EstimationReport {
        f,
        tau_se: f64::NAN,
        inlier_mask: Vec::with_capacity(total),
        per_smear_error: Vec::with_capacity(total),
        directions: Vec::with_capacity(total),
        iterations_used: 0,
        selected_indices: Vec::with_capacity(total),
        points: Vec::with_capacity(total),
        smears: Vec::with_capacity(total),
    };
    for _ in 0..total {
        let (no, toks) = reader.expect_tokens("per-smear line")?;
        if toks.len() != 8 {
            return Err(Error::parse(no, format!("expected 8 fields, found {}", toks.len())));
        }
        report.selected_indices.push(parse_usize(toks[0], no)?);
        let v: Vec<f64> = toks[1..6].iter().map(|t| parse_f64(t, no)).collect::<Result<_>>()?;
        report.points.push(ImagePoint::new(v[0], v[1]));
        report.smears.push(SmearVector::new(v[2], v[3]));
        report.per_smear_error.push(v[4]);
        report.directions.push(match toks[6] {
            "+" => TimeDirection::StartToEnd,
            "-" => TimeDirection::EndToStart,
            other => return Err(Error::parse(no, format!("invalid direction {other:?}"))),
        });
        report.inlier_mask.push(match toks[7] {
            "1" => true,
            "0" => false,
            other => return Err(Error::parse(no, format!("invalid inlier flag {other:?}"))),
        });
    }
    if report.inlier_count() != count {
        return Err(Error::parse(no, "INLIERS count disagrees with per-smear flags"));
    }
    if let Some((no, _)) = reader.next_tokens() {
        return Err(Error::parse(no, "trailing data after report"));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smear::SmearRecord;

    fn field_with_sigmas(w: usize, h: usize, sigmas: &[f64]) -> SmearField {
        Grid::from_fn(w, h, |x, y| SmearRecord {
            u: 1.0,
            v: 0.5,
            sigma: sigmas[y * w + x],
        })
    }

    #[test]
    fn selection_examples() {
        let f = field_with_sigmas(2, 2, &[0.4, 0.1, 0.3, 0.2]);
        assert_eq!(select_top_beta(&f, 0.5).unwrap().indices, vec![1, 3]);
        assert_eq!(select_top_beta(&f, 1.0).unwrap().indices, vec![0, 1, 2, 3]);
        let one = select_top_beta(&f, 0.25).unwrap();
        assert_eq!(one.indices, vec![1]);
        assert_eq!(one.points, vec![ImagePoint::new(1.5, 0.5)]);
        let err = estimate_selection(&one, &RansacConfig::default()).unwrap_err();
        assert_eq!(err, Error::InsufficientData { needed: 7, got: 1 });
        assert!(matches!(select_top_beta(&f, 0.0), Err(Error::ConfigInvalid(_))));
        assert!(matches!(select_top_beta(&f, 1.5), Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn selection_ties_by_index() {
        let f = field_with_sigmas(3, 1, &[0.5, 0.5, 0.5]);
        assert_eq!(select_top_beta(&f, 0.67).unwrap().indices, vec![0, 1]);
    }

    #[test]
    fn median_convention() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn ransac_config_validation() {
        for cfg in [
            RansacConfig { tau_se: 0.0, ..Default::default() },
            RansacConfig { hypotheses: 0, ..Default::default() },
            RansacConfig { block_size: 0, ..Default::default() },
            RansacConfig { early_stop_fraction: 1.5, ..Default::default() },
        ] {
            assert!(matches!(cfg.validate(), Err(Error::ConfigInvalid(_))));
        }
    }

    #[test]
    fn sampson_residual_gradient_matches_differences() {
        let a = [0.3, -0.7, 1.0];
        let b = [0.5, 0.2, 1.0];
        let f = Mat3::new(0.1, -0.4, 0.3, 0.7, 0.2, -0.5, -0.3, 0.6, 0.05);
        let (r, g) = sampson_residual(&a, &b, &f).unwrap();
        assert!((r * r - sampson_raw(&a, &b, &f, 0.0)).abs() < 1e-15);
        let h = 1e-6;
        for k in 0..9 {
            let mut fp = f;
            let mut fm = f;
            fp[(k / 3, k % 3)] += h;
            fm[(k / 3, k % 3)] -= h;
            let num = (sampson_residual(&a, &b, &fp).unwrap().0 - sampson_residual(&a, &b, &fm).unwrap().0) / (2.0 * h);
            assert!((num - g[k]).abs() < 1e-7, "k={k} num={num} an={}", g[k]);
        }
    }
}
