//! Fundamental matrices, direction-ambiguous smear correspondences and the
//! epipolar residuals evaluated on them.
//!
//! A smear is stored as its midpoint `p` and half displacement `s`, so the two
//! endpoints are `p - s` (start) and `p + s` (end). The epipolar constraint is
//! written `startᵀ F end = 0`. Because a single blurred frame cannot reveal the
//! time direction, every residual here is evaluated for both `F` and `Fᵀ`.
//!
//! The bilinear form `aᵀ F b` is evaluated in a fixed, pairwise order so that
//! `aᵀ Fᵀ b` and `bᵀ F a` produce the same bits. That keeps the transpose and
//! per-smear sign symmetries exact rather than approximate.

use std::fmt;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Mat3 = Matrix3<f64>;
pub type Vec3 = Vector3<f64>;

/// `|det F|` bound satisfied by every normalized fundamental matrix.
pub const DET_TOL: f64 = 1e-9;
/// Frobenius-norm deviation from one allowed after normalization.
pub const NORM_TOL: f64 = 1e-12;
/// Sampson denominators and line normals below this are treated as degenerate.
pub const DEGENERATE_TOL: f64 = 1e-15;
/// Relative size of the second singular value below which a matrix is rank < 2.
pub const RANK_TOL: f64 = 1e-12;

/// Numerical thresholds used by the epipolar routines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub det: f64,
    pub norm: f64,
    pub degenerate: f64,
    pub rank: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            det: DET_TOL,
            norm: NORM_TOL,
            degenerate: DEGENERATE_TOL,
            rank: RANK_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ImagePoint {
    pub x: f64,
    pub y: f64,
}

impl ImagePoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Half of a smear's endpoint displacement. The zero vector means "no smear".
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SmearVector {
    pub u: f64,
    pub v: f64,
}

impl SmearVector {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn norm(&self) -> f64 {
        self.u.hypot(self.v)
    }

    pub fn is_zero(&self) -> bool {
        self.u == 0.0 && self.v == 0.0
    }
}

impl std::ops::Neg for SmearVector {
    type Output = SmearVector;

    fn neg(self) -> SmearVector {
        SmearVector::new(-self.u, -self.v)
    }
}

/// Which endpoint ordering a smear was assigned by the winning residual branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TimeDirection {
    /// `(p - s)ᵀ F (p + s) = 0` fits: the stored sign is the time direction.
    StartToEnd,
    /// `(p + s)ᵀ F (p - s) = 0` fits: the smear runs the other way.
    EndToStart,
}

impl TimeDirection {
    pub fn flipped(self) -> Self {
        match self {
            TimeDirection::StartToEnd => TimeDirection::EndToStart,
            TimeDirection::EndToStart => TimeDirection::StartToEnd,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            TimeDirection::StartToEnd => '+',
            TimeDirection::EndToStart => '-',
        }
    }
}

/// A smear path seen as a correspondence between its two endpoints.
///
/// `(midpoint, half_smear)` and `(midpoint, -half_smear)` describe the same
/// physical smear.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Correspondence {
    pub midpoint: ImagePoint,
    pub half_smear: SmearVector,
}

impl Correspondence {
    pub const fn new(midpoint: ImagePoint, half_smear: SmearVector) -> Self {
        Self {
            midpoint,
            half_smear,
        }
    }

    /// Builds the smear whose start and end points are given.
    pub fn from_endpoints(start: ImagePoint, end: ImagePoint) -> Self {
        Self {
            midpoint: ImagePoint::new(0.5 * (start.x + end.x), 0.5 * (start.y + end.y)),
            half_smear: SmearVector::new(0.5 * (end.x - start.x), 0.5 * (end.y - start.y)),
        }
    }

    /// Converts an optical-flow vector anchored at `source` into a smear.
    pub fn from_flow(source: ImagePoint, flow: SmearVector) -> Self {
        let end = ImagePoint::new(source.x + flow.u, source.y + flow.v);
        Self::from_endpoints(source, end)
    }

    pub fn start(&self) -> ImagePoint {
        ImagePoint::new(
            self.midpoint.x - self.half_smear.u,
            self.midpoint.y - self.half_smear.v,
        )
    }

    pub fn end(&self) -> ImagePoint {
        ImagePoint::new(
            self.midpoint.x + self.half_smear.u,
            self.midpoint.y + self.half_smear.v,
        )
    }

    /// Same smear with the opposite time direction.
    pub fn flipped(&self) -> Self {
        Self::new(self.midpoint, -self.half_smear)
    }

    /// Homogeneous start and end points `(p̄ - s̄, p̄ + s̄)`.
    pub fn endpoints_h(&self) -> ([f64; 3], [f64; 3]) {
        let p = self.midpoint;
        let s = self.half_smear;
        ([p.x - s.u, p.y - s.v, 1.0], [p.x + s.u, p.y + s.v, 1.0])
    }
}

pub fn homogenize_point(p: ImagePoint) -> Vec3 {
    Vec3::new(p.x, p.y, 1.0)
}

/// Skew-symmetric cross-product matrix `[v]×`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// A 3×3 fundamental matrix. Values built with [`FundamentalMatrix::new`]
/// are rank 2 with unit Frobenius norm; [`FundamentalMatrix::from_raw`] keeps
/// the matrix untouched.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalMatrix(Mat3);

impl FundamentalMatrix {
    /// Projects `m` onto the rank-2 unit-norm set.
    pub fn new(m: Mat3) -> Result<Self> {
        normalize_rank2(&m)
    }

    pub const fn from_raw(m: Mat3) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Row-major coefficients.
    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    pub fn from_row_major(v: &[f64; 9]) -> Self {
        Self(Mat3::from_row_slice(v))
    }

    /// Frobenius distance to `other` modulo the sign and transpose ambiguity,
    /// after scaling both to unit norm.
    pub fn ambiguity_distance(&self, other: &FundamentalMatrix) -> f64 {
        let a = self.0 / self.0.norm();
        let b = other.0 / other.0.norm();
        let bt = b.transpose();
        [
            (a - b).norm(),
            (a + b).norm(),
            (a - bt).norm(),
            (a + bt).norm(),
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min)
    }

    /// Serializes as `FMAT` followed by the nine row-major coefficients.
    pub fn to_text(&self) -> String {
        let v = self.to_row_major();
        let mut out = String::from("FMAT\n");
        for row in v.chunks(3) {
            out.push_str(&format!("{:.16e} {:.16e} {:.16e}\n", row[0], row[1], row[2]));
        }
        out
    }

    /// Parses the first `FMAT` block in `text`. Coefficients may be laid out
    /// with any whitespace.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let mut values = Vec::with_capacity(9);
        let mut found = false;
        for (no, line) in lines.by_ref() {
            let mut toks = line.split_whitespace();
            if toks.next() == Some("FMAT") {
                found = true;
                for tok in toks {
                    values.push(parse_f64(tok, no + 1)?);
                }
                break;
            }
        }
        if !found {
            return Err(Error::parse(0, "missing FMAT block"));
        }
        for (no, line) in lines {
            if values.len() >= 9 {
                break;
            }
            for tok in line.split_whitespace() {
                if values.len() >= 9 {
                    return Err(Error::parse(no + 1, "FMAT block has more than 9 values"));
                }
                values.push(parse_f64(tok, no + 1)?);
            }
        }
        if values.len() != 9 {
            return Err(Error::parse(
                0,
                format!("FMAT block has {} values, expected 9", values.len()),
            ));
        }
        let mut arr = [0.0; 9];
        arr.copy_from_slice(&values);
        Ok(Self::from_row_major(&arr))
    }
}

impl fmt::Display for FundamentalMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

pub(crate) fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| Error::parse(line, format!("invalid number {tok:?}")))
}

/// Homogeneous line `a x + b y + c = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpipolarLine {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl EpipolarLine {
    /// Signed distance of `p` to the line, in pixels.
    pub fn signed_distance(&self, p: ImagePoint) -> f64 {
        (self.a * p.x + self.b * p.y + self.c) / self.a.hypot(self.b)
    }
}

/// Which image an epipolar line is drawn in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `Fᵀ p̄`: the line holding the end point paired with start point `p`.
    Left,
    /// `F p̄`: the line holding the start point paired with end point `p`.
    Right,
}

/// `aᵀ F b`, summed diagonal first and then in transposed pairs. With this
/// order `sandwich(a, Fᵀ, b)` and `sandwich(b, F, a)` agree bit for bit.
#[inline]
pub(crate) fn sandwich(a: &[f64; 3], f: &Mat3, b: &[f64; 3]) -> f64 {
    let diag = f[(0, 0)] * (a[0] * b[0]) + f[(1, 1)] * (a[1] * b[1]) + f[(2, 2)] * (a[2] * b[2]);
    let p01 = f[(0, 1)] * (a[0] * b[1]) + f[(1, 0)] * (a[1] * b[0]);
    let p02 = f[(0, 2)] * (a[0] * b[2]) + f[(2, 0)] * (a[2] * b[0]);
    let p12 = f[(1, 2)] * (a[1] * b[2]) + f[(2, 1)] * (a[2] * b[1]);
    diag + p01 + p02 + p12
}

/// `F v`.
#[inline]
pub(crate) fn mul_right(f: &Mat3, v: &[f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (i, o) in out.iter_mut().enumerate() {
        *o = f[(i, 0)] * v[0] + f[(i, 1)] * v[1] + f[(i, 2)] * v[2];
    }
    out
}

/// `Fᵀ v`.
#[inline]
pub(crate) fn mul_left(f: &Mat3, v: &[f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (j, o) in out.iter_mut().enumerate() {
        *o = f[(0, j)] * v[0] + f[(1, j)] * v[1] + f[(2, j)] * v[2];
    }
    out
}

/// Absolute residuals of the two time-direction hypotheses:
/// `(|(p̄-s̄)ᵀ F (p̄+s̄)|, |(p̄-s̄)ᵀ Fᵀ (p̄+s̄)|)`.
pub fn ambiguous_residual_pair(c: &Correspondence, f: &FundamentalMatrix) -> (f64, f64) {
    let (a, b) = c.endpoints_h();
    (sandwich(&a, &f.0, &b).abs(), sandwich(&b, &f.0, &a).abs())
}

/// Sampson error of the ordered pair `(start, end)` under the matrix `f`.
#[inline]
pub(crate) fn sampson_raw(a: &[f64; 3], b: &[f64; 3], f: &Mat3, degenerate: f64) -> f64 {
    let num = sandwich(a, f, b);
    let l = mul_right(f, b);
    let lp = mul_left(f, a);
    let den = (l[0] * l[0] + l[1] * l[1]) + (lp[0] * lp[0] + lp[1] * lp[1]);
    if den < degenerate {
        f64::INFINITY
    } else {
        num * num / den
    }
}

/// First-order geometric error of `startᵀ F end = 0`.
///
/// Returns `+∞` when the denominator vanishes (both endpoints at epipoles) so
/// that scoring loops never abort.
pub fn sampson_error(c: &Correspondence, f: &FundamentalMatrix) -> f64 {
    sampson_error_with(c, f, &Tolerances::default())
}

pub fn sampson_error_with(c: &Correspondence, f: &FundamentalMatrix, tol: &Tolerances) -> f64 {
    let (a, b) = c.endpoints_h();
    sampson_raw(&a, &b, &f.0, tol.degenerate)
}

/// Symmetrized Sampson error: the smaller of the `F` and `Fᵀ` branches, and
/// the time direction implied by the winning branch (ties go to
/// [`TimeDirection::StartToEnd`]).
pub fn serr_min(c: &Correspondence, f: &FundamentalMatrix) -> (f64, TimeDirection) {
    let (a, b) = c.endpoints_h();
    serr_min_raw(&a, &b, &f.0, &f.0.transpose())
}

/// [`serr_min`] with a precomputed transpose, for tight scoring loops.
#[inline]
pub(crate) fn serr_min_raw(
    a: &[f64; 3],
    b: &[f64; 3],
    f: &Mat3,
    ft: &Mat3,
) -> (f64, TimeDirection) {
    let fwd = sampson_raw(a, b, f, DEGENERATE_TOL);
    let bwd = sampson_raw(a, b, ft, DEGENERATE_TOL);
    if bwd < fwd {
        (bwd, TimeDirection::EndToStart)
    } else {
        (fwd, TimeDirection::StartToEnd)
    }
}

/// Epipolar line of `p`: `F p̄` on the [`Side::Right`], `Fᵀ p̄` on the
/// [`Side::Left`].
pub fn epipolar_line(p: ImagePoint, f: &FundamentalMatrix, side: Side) -> Result<EpipolarLine> {
    let ph = [p.x, p.y, 1.0];
    let l = match side {
        Side::Right => mul_right(&f.0, &ph),
        Side::Left => mul_left(&f.0, &ph),
    };
    if l[0].abs() < DEGENERATE_TOL && l[1].abs() < DEGENERATE_TOL {
        return Err(Error::DegenerateLine);
    }
    Ok(EpipolarLine {
        a: l[0],
        b: l[1],
        c: l[2],
    })
}

/// Zeroes the smallest singular value and rescales to unit Frobenius norm.
pub fn normalize_rank2(m: &Mat3) -> Result<FundamentalMatrix> {
    normalize_rank2_with(m, &Tolerances::default())
}

pub fn normalize_rank2_with(m: &Mat3, tol: &Tolerances) -> Result<FundamentalMatrix> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::RankDeficient(f64::NAN));
    }
    let svd = m.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::RankDeficient(f64::NAN)),
    };
    let mut s = svd.singular_values;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    let (largest, second) = (s[order[0]], s[order[1]]);
    if largest < tol.rank || second <= tol.rank * largest {
        return Err(Error::RankDeficient(second));
    }
    s[order[2]] = 0.0;
    let r = u * Mat3::from_diagonal(&s) * v_t;
    Ok(FundamentalMatrix(r / r.norm()))
}
