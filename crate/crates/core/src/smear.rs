//! Smear representations and the per-pixel quantities used to supervise and
//! evaluate smear prediction: the double-angle codec, sign-agnostic end-point
//! error, forward/backward flow cross-checking, the uncertainty losses and
//! sparsification curves.

use rayon::prelude::*;

use crate::epipolar::SmearVector;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::textio::{dims_header, TextReader};

/// Cross-check threshold on the forward/backward round-trip distance, pixels.
pub const DEFAULT_EPS_CR: f64 = 1.0;
/// Variance margin of the masked loss.
pub const DEFAULT_ALPHA: f64 = 0.01;

/// Orientation-doubled smear: `s` and `-s` encode to the same value.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DoubleAngleVector {
    pub u_prime: f64,
    pub v_prime: f64,
}

impl DoubleAngleVector {
    pub const fn new(u_prime: f64, v_prime: f64) -> Self {
        Self { u_prime, v_prime }
    }

    pub fn norm(&self) -> f64 {
        self.u_prime.hypot(self.v_prime)
    }
}

/// Per-pixel smear prediction with its standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmearRecord {
    pub u: f64,
    pub v: f64,
    pub sigma: f64,
}

impl SmearRecord {
    pub fn smear(&self) -> SmearVector {
        SmearVector::new(self.u, self.v)
    }
}

/// Dense smear predictions; every sigma is strictly positive.
pub type SmearField = Grid<SmearRecord>;
/// Per-pixel displacement `(dx, dy)` in pixels.
pub type FlowField = Grid<[f64; 2]>;
/// `1` where the forward/backward flows agree, `0` otherwise.
pub type CrossCheckMap = Grid<u8>;

pub fn encode_double_angle(s: SmearVector) -> DoubleAngleVector {
    let n = s.norm();
    if n == 0.0 {
        return DoubleAngleVector::default();
    }
    DoubleAngleVector::new((s.u * s.u - s.v * s.v) / n, 2.0 * s.u * s.v / n)
}

/// Inverse of [`encode_double_angle`], returning the representative whose
/// angle lies in `(-π/2, π/2]`.
pub fn decode_double_angle(d: DoubleAngleVector) -> SmearVector {
    let mag = d.norm();
    if mag == 0.0 {
        return SmearVector::default();
    }
    let mut phi = 0.5 * d.v_prime.atan2(d.u_prime);
    if phi <= -std::f64::consts::FRAC_PI_2 {
        phi += std::f64::consts::PI;
    }
    SmearVector::new(mag * phi.cos(), mag * phi.sin())
}

/// Sign-agnostic end-point error `min(‖pred - gt‖, ‖pred + gt‖)`.
pub fn epe_s(pred: SmearVector, gt: SmearVector) -> f64 {
    let minus = (pred.u - gt.u).hypot(pred.v - gt.v);
    let plus = (pred.u + gt.u).hypot(pred.v + gt.v);
    minus.min(plus)
}

/// Bilinear flow lookup at a non-integer position, `None` outside
/// `[0, w-1] × [0, h-1]`.
fn sample_bilinear(flow: &FlowField, x: f64, y: f64) -> Option<[f64; 2]> {
    let (w, h) = (flow.width(), flow.height());
    if w == 0 || h == 0 || !(x >= 0.0 && y >= 0.0) || x > (w - 1) as f64 || y > (h - 1) as f64 {
        return None;
    }
    let x0 = (x.floor() as usize).min(w.saturating_sub(2));
    let y0 = (y.floor() as usize).min(h.saturating_sub(2));
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let f00 = flow.get(x0, y0);
    let f10 = flow.get(x1, y0);
    let f01 = flow.get(x0, y1);
    let f11 = flow.get(x1, y1);
    let mut out = [0.0; 2];
    for (k, o) in out.iter_mut().enumerate() {
        let top = f00[k] * (1.0 - fx) + f10[k] * fx;
        let bottom = f01[k] * (1.0 - fx) + f11[k] * fx;
        *o = top * (1.0 - fy) + bottom * fy;
    }
    Some(out)
}

fn warp(flow: &FlowField, p: [f64; 2]) -> Option<[f64; 2]> {
    sample_bilinear(flow, p[0], p[1]).map(|d| [p[0] + d[0], p[1] + d[1]])
}

/// Round-trip distance for one pixel; `None` if any warp leaves the image.
fn cross_check_distance(fw: &FlowField, bw: &FlowField, x: usize, y: usize) -> Option<f64> {
    let p = [x as f64, y as f64];
    let there_and_back = warp(bw, warp(fw, p)?)?;
    let back_and_there = warp(fw, warp(bw, p)?)?;
    let d1 = (p[0] - there_and_back[0]).hypot(p[1] - there_and_back[1]);
    let d2 = (back_and_there[0] - p[0]).hypot(back_and_there[1] - p[1]);
    Some(d1 + d2)
}

/// Forward-backward / backward-forward flow consistency.
///
/// Pixel coordinates are grid indices `(x, y)`. Out-of-image warps get an
/// infinite distance and mask value `0`.
pub fn cross_check(
    fw: &FlowField,
    bw: &FlowField,
    eps_cr: f64,
) -> Result<(Grid<f64>, CrossCheckMap)> {
    if !fw.same_shape(bw) {
        return Err(Error::DimensionMismatch(format!(
            "forward flow is {}x{}, backward flow is {}x{}",
            fw.width(),
            fw.height(),
            bw.width(),
            bw.height()
        )));
    }
    if !(eps_cr > 0.0) {
        return Err(Error::ConfigInvalid(format!("eps_cr must be positive, got {eps_cr}")));
    }
    let (w, h) = (fw.width(), fw.height());
    let mut dist = vec![f64::INFINITY; w * h];
    if w > 0 {
        dist.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
            for (x, d) in row.iter_mut().enumerate() {
                *d = cross_check_distance(fw, bw, x, y).unwrap_or(f64::INFINITY);
            }
        });
    }
    let mask: Vec<u8> = dist.iter().map(|&d| u8::from(d <= eps_cr)).collect();
    Ok((Grid::from_vec(w, h, dist)?, Grid::from_vec(w, h, mask)?))
}

/// Numerically stable `log(1 + exp(w))`.
pub fn softplus(w: f64) -> f64 {
    w.max(0.0) + (-w.abs()).exp().ln_1p()
}

fn sigmoid(w: f64) -> f64 {
    if w >= 0.0 {
        1.0 / (1.0 + (-w).exp())
    } else {
        let e = w.exp();
        e / (1.0 + e)
    }
}

/// Partial derivatives of a loss with respect to `(u', v', w)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossGrad {
    pub d_u: f64,
    pub d_v: f64,
    pub d_w: f64,
}

fn residual_sq(pred: DoubleAngleVector, gt: DoubleAngleVector) -> f64 {
    let du = pred.u_prime - gt.u_prime;
    let dv = pred.v_prime - gt.v_prime;
    du * du + dv * dv
}

/// Gaussian negative log-likelihood with `σ = softplus(w)`.
pub fn loss_gaussian_nll(pred: DoubleAngleVector, gt: DoubleAngleVector, w: f64) -> f64 {
    loss_gaussian_nll_sigma(pred, gt, softplus(w))
}

/// [`loss_gaussian_nll`] parameterized directly by `σ`.
pub fn loss_gaussian_nll_sigma(pred: DoubleAngleVector, gt: DoubleAngleVector, sigma: f64) -> f64 {
    let var = sigma * sigma;
    residual_sq(pred, gt) / (2.0 * var) + var.ln()
}

pub fn loss_gaussian_nll_grad(pred: DoubleAngleVector, gt: DoubleAngleVector, w: f64) -> LossGrad {
    let sigma = softplus(w);
    let var = sigma * sigma;
    let r2 = residual_sq(pred, gt);
    let d_sigma = -r2 / (var * sigma) + 2.0 / sigma;
    LossGrad {
        d_u: (pred.u_prime - gt.u_prime) / var,
        d_v: (pred.v_prime - gt.v_prime) / var,
        d_w: d_sigma * sigmoid(w),
    }
}

/// Cross-check-aware loss: the Gaussian NLL on valid pixels plus a hinge that
/// pushes the variance up on invalid ones until `1/σ² ≤ alpha`.
pub fn loss_masked(
    pred: DoubleAngleVector,
    gt: DoubleAngleVector,
    w: f64,
    m_cr: bool,
    alpha: f64,
) -> f64 {
    loss_masked_sigma(pred, gt, softplus(w), m_cr, alpha)
}

/// [`loss_masked`] parameterized directly by `σ`.
pub fn loss_masked_sigma(
    pred: DoubleAngleVector,
    gt: DoubleAngleVector,
    sigma: f64,
    m_cr: bool,
    alpha: f64,
) -> f64 {
    let var = sigma * sigma;
    let hinge = |x: f64| x.max(0.0);
    if m_cr {
        loss_gaussian_nll_sigma(pred, gt, sigma) + hinge(-alpha)
    } else {
        hinge(1.0 / var - alpha)
    }
}

pub fn loss_masked_grad(
    pred: DoubleAngleVector,
    gt: DoubleAngleVector,
    w: f64,
    m_cr: bool,
    alpha: f64,
) -> LossGrad {
    if m_cr {
        return loss_gaussian_nll_grad(pred, gt, w);
    }
    let sigma = softplus(w);
    let var = sigma * sigma;
    if 1.0 / var - alpha > 0.0 {
        LossGrad {
            d_u: 0.0,
            d_v: 0.0,
            d_w: -2.0 / (var * sigma) * sigmoid(w),
        }
    } else {
        LossGrad::default()
    }
}

/// Mean error after discarding the `⌈f·N⌉` most uncertain entries, divided by
/// the mean over all entries, for each fraction `f`.
///
/// Ties in sigma are removed in index order. At least one entry is always
/// kept. When every error is zero the curve is identically one.
pub fn sparsification_curve(
    errors: &[f64],
    sigmas: &[f64],
    fractions: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if errors.is_empty() {
        return Err(Error::EmptyInput);
    }
    if errors.len() != sigmas.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} errors, {} sigmas",
            errors.len(),
            sigmas.len()
        )));
    }
    if let Some(f) = fractions.iter().find(|f| !(0.0..1.0).contains(*f)) {
        return Err(Error::ConfigInvalid(format!("fraction {f} outside [0, 1)")));
    }
    let n = errors.len();
    // Most uncertain first; stable sort keeps index order within ties.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigmas[j].total_cmp(&sigmas[i]));

    // Suffix sums over the removal order give every curve point in O(1).
    let mut suffix = vec![0.0; n + 1];
    for k in (0..n).rev() {
        suffix[k] = suffix[k + 1] + errors[order[k]];
    }
    let full_mean = suffix[0] / n as f64;
    Ok(fractions
        .iter()
        .map(|&f| {
            let dropped = ((f * n as f64).ceil() as usize).min(n - 1);
            let mean = suffix[dropped] / (n - dropped) as f64;
            let normalized = if full_mean == 0.0 {
                1.0
            } else if dropped == 0 {
                1.0
            } else {
                mean / full_mean
            };
            (f, normalized)
        })
        .collect())
}

/// `SMEARFIELD <w> <h>` followed by one `u v sigma` line per pixel.
pub fn smear_field_to_text(field: &SmearField) -> String {
    let mut out = format!("SMEARFIELD {} {}\n", field.width(), field.height());
    for r in field.data() {
        out.push_str(&format!("{} {} {}\n", r.u, r.v, r.sigma));
    }
    out
}

pub fn parse_smear_field(text: &str) -> Result<SmearField> {
    let mut reader = TextReader::new(text);
    let (w, h) = dims_header(&mut reader, "SMEARFIELD")?;
    let mut records = Vec::with_capacity(w * h);
    for _ in 0..w * h {
        let (no, toks) = reader.expect_tokens("smear record")?;
        let v = crate::textio::numbers(no, &toks, 3)?;
        if !(v[2] > 0.0) || !v[2].is_finite() {
            return Err(Error::parse(no, format!("sigma must be positive, got {}", v[2])));
        }
        records.push(SmearRecord {
            u: v[0],
            v: v[1],
            sigma: v[2],
        });
    }
    if let Some((no, _)) = reader.next_tokens() {
        return Err(Error::parse(no, "trailing data after smear field"));
    }
    Grid::from_vec(w, h, records)
}

/// `FLOW <w> <h>` followed by one `u v` line per pixel.
pub fn flow_field_to_text(flow: &FlowField) -> String {
    let mut out = format!("FLOW {} {}\n", flow.width(), flow.height());
    for f in flow.data() {
        out.push_str(&format!("{} {}\n", f[0], f[1]));
    }
    out
}

pub fn parse_flow_field(text: &str) -> Result<FlowField> {
    let mut reader = TextReader::new(text);
    let (w, h) = dims_header(&mut reader, "FLOW")?;
    let mut data = Vec::with_capacity(w * h);
    for _ in 0..w * h {
        let (no, toks) = reader.expect_tokens("flow record")?;
        let v = crate::textio::numbers(no, &toks, 2)?;
        data.push([v[0], v[1]]);
    }
    if let Some((no, _)) = reader.next_tokens() {
        return Err(Error::parse(no, "trailing data after flow field"));
    }
    Grid::from_vec(w, h, data)
}
