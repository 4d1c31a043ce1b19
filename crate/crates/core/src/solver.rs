//! Minimal solvers on seven smears.
//!
//! Each smear gives the constraint `startᵀ F end = 0` for one of its two
//! possible time directions. The direction-ambiguous problem minimizes
//! `Σ min(|mᵢ·vec F|, |mᵢ·vec Fᵀ|)²` under `det F = 0`, `‖F‖ = 1`.
//!
//! Candidates come from running the classical seven-point algorithm on each
//! of the 64 sign assignments (the first smear's sign is fixed, since a global
//! flip is a transposition). Any real root of any assignment zeroes its own
//! seven residuals, so seven smears alone generally admit many exact
//! minimizers; [`ambiguous_7pt_candidates`] returns all of them for a robust
//! estimator to disambiguate on further data.

use nalgebra::{Matrix3, SMatrix};

use crate::epipolar::{
    normalize_rank2, sandwich, Correspondence, FundamentalMatrix, ImagePoint, Mat3, SmearVector,
    TimeDirection,
};
use crate::error::{Error, Result};
use crate::refine::{refine_rank2, Refined};

/// Null-space singular values below this fraction of the largest one count
/// as zero.
pub const NULL_SPACE_TOL: f64 = 1e-9;
/// Largest imaginary part (relative to `max(1, |re|)`) of an accepted cubic root.
pub const ROOT_IMAG_TOL: f64 = 1e-8;
/// Refinement stops once the tangent gradient norm drops below this.
pub const GRAD_TOL: f64 = 1e-10;
const MAX_REFINE_ITERS: usize = 50;
const MAX_REFINED_CANDIDATES: usize = 3;

/// The 7×9 matrix whose rows are `startᵢ ⊗ endᵢ`, so that
/// `row · vec(F) = startᵀ F end` with row-major `vec`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintMatrix {
    pub rows: [[f64; 9]; 7],
}

impl ConstraintMatrix {
    pub fn row_dot(&self, i: usize, f: &Mat3) -> f64 {
        let r = &self.rows[i];
        (0..9).map(|k| r[k] * f[(k / 3, k % 3)]).sum()
    }

    pub fn norm(&self) -> f64 {
        self.rows.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub f: FundamentalMatrix,
    /// Ambiguous seven-point objective at `f`, in input coordinates.
    pub objective: f64,
    pub directions: [TimeDirection; 7],
    /// `false` if local refinement stopped before the gradient tolerance.
    pub converged: bool,
}

pub(crate) fn kron(a: &[f64; 3], b: &[f64; 3]) -> [f64; 9] {
    let mut out = [0.0; 9];
    for j in 0..3 {
        for k in 0..3 {
            out[3 * j + k] = a[j] * b[k];
        }
    }
    out
}

pub fn build_constraint_rows(cs: &[Correspondence; 7]) -> ConstraintMatrix {
    let mut rows = [[0.0; 9]; 7];
    for (row, c) in rows.iter_mut().zip(cs) {
        let (a, b) = c.endpoints_h();
        *row = kron(&a, &b);
    }
    ConstraintMatrix { rows }
}

/// Real roots of `c[0] + c[1] x + c[2] x² + c[3] x³` after dropping
/// negligible leading coefficients, via companion-matrix eigenvalues.
fn real_poly_roots(c: [f64; 4]) -> Vec<f64> {
    let scale = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Vec::new();
    }
    let negligible = |v: f64| v.abs() <= 1e-14 * scale;
    let polish = |mut x: f64| {
        for _ in 0..3 {
            let p = ((c[3] * x + c[2]) * x + c[1]) * x + c[0];
            let dp = (3.0 * c[3] * x + 2.0 * c[2]) * x + c[1];
            if dp == 0.0 {
                break;
            }
            let nx = x - p / dp;
            if !nx.is_finite() {
                break;
            }
            x = nx;
        }
        x
    };
    if !negligible(c[3]) {
        let (a2, a1, a0) = (c[2] / c[3], c[1] / c[3], c[0] / c[3]);
        let companion = Matrix3::new(0.0, 0.0, -a0, 1.0, 0.0, -a1, 0.0, 1.0, -a2);
        return companion
            .complex_eigenvalues()
            .iter()
            .filter(|z| z.im.abs() <= ROOT_IMAG_TOL * z.re.abs().max(1.0))
            .map(|z| polish(z.re))
            .collect();
    }
    if !negligible(c[2]) {
        let disc = c[1] * c[1] - 4.0 * c[2] * c[0];
        if disc < -ROOT_IMAG_TOL * (c[1] * c[1]).max(scale * scale) {
            return Vec::new();
        }
        let sq = disc.max(0.0).sqrt();
        // Numerically stable pair.
        let q = -0.5 * (c[1] + c[1].signum() * sq);
        let mut roots = Vec::with_capacity(2);
        if q != 0.0 {
            roots.push(q / c[2]);
            roots.push(c[0] / q);
        } else {
            roots.push(0.0);
        }
        return roots.into_iter().map(polish).collect();
    }
    if !negligible(c[1]) {
        return vec![-c[0] / c[1]];
    }
    Vec::new()
}

/// Classical seven-point algorithm: the two-dimensional null space
/// `{F₁, F₂}` of `m` and the real roots of `det(αF₁ + (1-α)F₂) = 0`.
pub fn seven_point_classical(m: &ConstraintMatrix) -> Result<Vec<FundamentalMatrix>> {
    let mut a = SMatrix::<f64, 9, 9>::zeros();
    for (i, row) in m.rows.iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            a[(i, k)] = *v;
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(Error::RankDeficientConstraints(9))?;
    let s = svd.singular_values;
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    let largest = s[order[0]];
    if !(largest > 0.0) || !largest.is_finite() {
        return Err(Error::RankDeficientConstraints(9));
    }
    let null_dim = order
        .iter()
        .filter(|&&i| s[i] <= NULL_SPACE_TOL * largest)
        .count()
        .max(2);
    if null_dim > 2 {
        return Err(Error::RankDeficientConstraints(null_dim));
    }
    let basis = |idx: usize| Mat3::from_fn(|i, j| v_t[(idx, 3 * i + j)]);
    let f1 = basis(order[7]);
    let f2 = basis(order[8]);

    // det(F₂ + α(F₁ - F₂)) = c₀ + c₁α + c₂α² + c₃α³
    let d = f1 - f2;
    let p0 = f2.determinant();
    let p1 = f1.determinant();
    let pm = (f2 - d).determinant();
    let c3 = d.determinant();
    let c2 = 0.5 * (p1 + pm) - p0;
    let c1 = 0.5 * (p1 - pm) - c3;
    let coeffs = [p0, c1, c2, c3];

    let mut out = Vec::with_capacity(3);
    for alpha in real_poly_roots(coeffs) {
        if let Ok(f) = normalize_rank2(&(f2 + d * alpha)) {
            out.push(f);
        }
    }
    // A vanishing cubic term puts one root at infinity, i.e. F₁ - F₂.
    let scale = coeffs.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if c3.abs() <= 1e-14 * scale {
        if let Ok(f) = normalize_rank2(&d) {
            out.push(f);
        }
    }
    Ok(out)
}

/// `Σᵢ min(|startᵢᵀ F endᵢ|, |startᵢᵀ Fᵀ endᵢ|)²`.
///
/// Flipping any smear's sign, or transposing `F`, leaves the value unchanged
/// bit for bit.
pub fn ambiguous_objective(cs: &[Correspondence], f: &FundamentalMatrix) -> f64 {
    cs.iter()
        .map(|c| {
            let (a, b) = c.endpoints_h();
            let r = sandwich(&a, f.matrix(), &b)
                .abs()
                .min(sandwich(&b, f.matrix(), &a).abs());
            r * r
        })
        .sum()
}

/// Per-smear winning branch of the seven-point objective.
fn directions_for(cs: &[Correspondence; 7], f: &Mat3) -> [TimeDirection; 7] {
    let mut out = [TimeDirection::StartToEnd; 7];
    for (d, c) in out.iter_mut().zip(cs) {
        let (a, b) = c.endpoints_h();
        if sandwich(&b, f, &a).abs() < sandwich(&a, f, &b).abs() {
            *d = TimeDirection::EndToStart;
        }
    }
    out
}

/// Similarity transform taking points to zero centroid and RMS radius √2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Normalizer {
    pub cx: f64,
    pub cy: f64,
    pub scale: f64,
}

impl Normalizer {
    /// Fitted to both endpoints of every smear.
    pub fn fit(cs: &[Correspondence]) -> Self {
        let n = (2 * cs.len()).max(1) as f64;
        let (mut sx, mut sy) = (0.0, 0.0);
        for c in cs {
            let (s, e) = (c.start(), c.end());
            sx += s.x + e.x;
            sy += s.y + e.y;
        }
        let (cx, cy) = (sx / n, sy / n);
        let mut ss = 0.0;
        for c in cs {
            for p in [c.start(), c.end()] {
                ss += (p.x - cx).powi(2) + (p.y - cy).powi(2);
            }
        }
        let rms = (ss / n).sqrt();
        let scale = if rms > 0.0 && rms.is_finite() {
            std::f64::consts::SQRT_2 / rms
        } else {
            1.0
        };
        Self { cx, cy, scale }
    }

    pub fn apply(&self, c: &Correspondence) -> Correspondence {
        Correspondence::new(
            ImagePoint::new(
                self.scale * (c.midpoint.x - self.cx),
                self.scale * (c.midpoint.y - self.cy),
            ),
            SmearVector::new(self.scale * c.half_smear.u, self.scale * c.half_smear.v),
        )
    }

    fn t(&self) -> Mat3 {
        let s = self.scale;
        Mat3::new(s, 0.0, -s * self.cx, 0.0, s, -s * self.cy, 0.0, 0.0, 1.0)
    }

    fn t_inv(&self) -> Mat3 {
        let s = 1.0 / self.scale;
        Mat3::new(s, 0.0, self.cx, 0.0, s, self.cy, 0.0, 0.0, 1.0)
    }

    /// Normalized-coordinate matrix back to input coordinates.
    pub fn denormalize(&self, f_n: &Mat3) -> Result<FundamentalMatrix> {
        let t = self.t();
        normalize_rank2(&(t.transpose() * f_n * t))
    }

    pub fn normalize(&self, f: &Mat3) -> Result<FundamentalMatrix> {
        let ti = self.t_inv();
        normalize_rank2(&(ti.transpose() * f * ti))
    }
}

fn flip_pattern(cs: &[Correspondence; 7], assignment: u32) -> [Correspondence; 7] {
    let mut out = *cs;
    for (i, c) in out.iter_mut().enumerate().skip(1) {
        if assignment & (1 << (i - 1)) != 0 {
            *c = c.flipped();
        }
    }
    out
}

/// Every candidate from the 64 sign assignments, in enumeration order,
/// expressed in the input coordinates and scored with [`ambiguous_objective`].
pub fn ambiguous_7pt_candidates(cs: &[Correspondence; 7]) -> Result<Vec<SolverResult>> {
    let norm = Normalizer::fit(cs);
    let cs_n: [Correspondence; 7] = std::array::from_fn(|i| norm.apply(&cs[i]));
    let mut out = Vec::new();
    let mut first_err = None;
    for assignment in 0..64u32 {
        let flipped = flip_pattern(&cs_n, assignment);
        let roots = match seven_point_classical(&build_constraint_rows(&flipped)) {
            Ok(r) => r,
            Err(e) => {
                first_err.get_or_insert(e);
                continue;
            }
        };
        for root in roots {
            let Ok(f) = norm.denormalize(root.matrix()) else {
                continue;
            };
            out.push(SolverResult {
                objective: ambiguous_objective(cs, &f),
                directions: directions_for(cs, f.matrix()),
                f,
                converged: true,
            });
        }
    }
    if out.is_empty() {
        return Err(first_err.unwrap_or(Error::AllDegenerate));
    }
    Ok(out)
}

fn argmin(cands: &[SolverResult]) -> Option<&SolverResult> {
    // First minimum in enumeration order wins ties.
    cands.iter().fold(None, |best: Option<&SolverResult>, c| match best {
        Some(b) if b.objective <= c.objective => Some(b),
        _ => Some(c),
    })
}

/// Brute-force reference: the best classical seven-point root over all sign
/// assignments.
pub fn sign_enumeration_oracle(cs: &[Correspondence; 7]) -> Result<SolverResult> {
    let cands = ambiguous_7pt_candidates(cs).map_err(|e| match e {
        Error::RankDeficientConstraints(_) => Error::AllDegenerate,
        other => other,
    })?;
    Ok(argmin(&cands).cloned().expect("non-empty candidate list"))
}

/// Minimizes `objective` locally from `start`, working in normalized
/// coordinates and accepting only steps that lower the input-coordinate
/// objective.
fn refine_candidate(cs: &[Correspondence; 7], norm: &Normalizer, start: &SolverResult) -> SolverResult {
    let cs_n: [Correspondence; 7] = std::array::from_fn(|i| norm.apply(&cs[i]));
    let Ok(f_n) = norm.normalize(start.f.matrix()) else {
        return start.clone();
    };
    let residuals = |f: &Mat3, r: &mut Vec<f64>, jac: &mut Vec<[f64; 9]>| {
        for c in &cs_n {
            let (a, b) = c.endpoints_h();
            let fwd = sandwich(&a, f, &b);
            let bwd = sandwich(&b, f, &a);
            if bwd.abs() < fwd.abs() {
                r.push(bwd);
                jac.push(kron(&b, &a));
            } else {
                r.push(fwd);
                jac.push(kron(&a, &b));
            }
        }
    };
    let cost = |f_n: &Mat3| match norm.denormalize(f_n) {
        Ok(f) => ambiguous_objective(cs, &f),
        Err(_) => f64::INFINITY,
    };
    let Refined { f, converged, .. } =
        refine_rank2(f_n.matrix(), &residuals, cost, MAX_REFINE_ITERS, GRAD_TOL);
    match norm.denormalize(&f) {
        Ok(f) => {
            let objective = ambiguous_objective(cs, &f);
            if objective <= start.objective {
                SolverResult {
                    directions: directions_for(cs, f.matrix()),
                    f,
                    objective,
                    converged,
                }
            } else {
                SolverResult {
                    converged,
                    ..start.clone()
                }
            }
        }
        Err(_) => start.clone(),
    }
}

/// Direction-ambiguous seven-point solver.
///
/// The best enumeration candidates are polished by local minimization, so
/// the returned objective never exceeds [`sign_enumeration_oracle`]'s.
/// `converged == false` flags a refinement that stopped short of the
/// gradient tolerance; the best iterate is still returned.
pub fn solve_ambiguous_7pt(cs: &[Correspondence; 7]) -> Result<SolverResult> {
    let mut cands = ambiguous_7pt_candidates(cs)?;
    // Stable sort keeps enumeration order among equal objectives.
    cands.sort_by(|a, b| a.objective.total_cmp(&b.objective));
    let norm = Normalizer::fit(cs);
    let refined: Vec<SolverResult> = cands
        .iter()
        .take(MAX_REFINED_CANDIDATES)
        .map(|c| refine_candidate(cs, &norm, c))
        .collect();
    Ok(argmin(&refined).cloned().expect("at least one candidate"))
}
