//! Synthetic ground truth: camera pairs, exact fundamental matrices, smear
//! correspondences with sign flips, noise and local-motion outliers, dense
//! smear/flow fields with occlusions, and frame-average blur rendering.
//!
//! The world frame is the start camera's frame in every generated scene.

use nalgebra::Rotation3;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::epipolar::{
    epipolar_line, normalize_rank2, parse_f64, serr_min, skew, Correspondence, FundamentalMatrix, ImagePoint, Mat3, Side,
    SmearVector, Vec3,
};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::pnm::GrayImage;
use crate::rng;
use crate::smear::{FlowField, SmearField, SmearRecord};
use crate::textio::{numbers, parse_usize, TextReader};

const ORTHO_TOL: f64 = 1e-12;
/// Minimum relative translation norm for a usable camera pair.
pub const MIN_BASELINE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct CameraPose {
    pub k: Mat3,
    pub r: Mat3,
    pub t: Vec3,
}

impl CameraPose {
    pub fn new(k: Mat3, r: Mat3, t: Vec3) -> Result<Self> {
        let pose = Self { k, r, t };
        pose.validate()?;
        Ok(pose)
    }

    /// Camera with intrinsics `k` at the world origin looking down +z.
    pub fn identity(k: Mat3) -> Self {
        Self {
            k,
            r: Mat3::identity(),
            t: Vec3::zeros(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ortho = (self.r.transpose() * self.r - Mat3::identity()).amax();
        if ortho > ORTHO_TOL || (self.r.determinant() - 1.0).abs() > ORTHO_TOL {
            return Err(Error::ConfigInvalid(format!("rotation is not orthonormal (error {ortho:e})")));
        }
        let lower = self.k[(1, 0)].abs() + self.k[(2, 0)].abs() + self.k[(2, 1)].abs();
        if lower != 0.0 || self.k.determinant().abs() < 1e-12 || !self.k.iter().all(|v| v.is_finite()) {
            return Err(Error::ConfigInvalid("intrinsics must be invertible and upper-triangular".into()));
        }
        if !self.t.iter().all(|v| v.is_finite()) {
            return Err(Error::ConfigInvalid("translation is not finite".into()));
        }
        Ok(())
    }

    pub fn center(&self) -> Vec3 {
        -(self.r.transpose() * self.t)
    }

    /// Depth of a world point along the optical axis.
    pub fn depth(&self, x: &Vec3) -> f64 {
        (self.r * x + self.t).z
    }

    pub fn project(&self, x: &Vec3) -> Option<ImagePoint> {
        let h = self.k * (self.r * x + self.t);
        if h.z <= 1e-9 {
            return None;
        }
        Some(ImagePoint::new(h.x / h.z, h.y / h.z))
    }

    /// World-frame direction of the ray through `p`, scaled to unit depth.
    pub fn ray(&self, p: ImagePoint) -> Vec3 {
        let k_inv = self.k.try_inverse().unwrap_or_else(Mat3::identity);
        let d = k_inv * Vec3::new(p.x, p.y, 1.0);
        self.r.transpose() * (d / d.z)
    }

    /// World point seen at `p` at the given depth.
    pub fn backproject(&self, p: ImagePoint, depth: f64) -> Vec3 {
        self.center() + self.ray(p) * depth
    }

    /// Pose at fraction `tau` of the way to `other` (geodesic rotation,
    /// linear center and intrinsics).
    pub fn interpolate(&self, other: &CameraPose, tau: f64) -> CameraPose {
        let rel = Rotation3::from_matrix_unchecked(other.r * self.r.transpose());
        let r = Rotation3::from_scaled_axis(rel.scaled_axis() * tau).into_inner() * self.r;
        let c = self.center() * (1.0 - tau) + other.center() * tau;
        CameraPose {
            k: self.k * (1.0 - tau) + other.k * tau,
            r,
            t: -(r * c),
        }
    }
}

/// Pinhole intrinsics with square pixels and the principal point at the
/// image center.
pub fn intrinsics(focal: f64, width: usize, height: usize) -> Mat3 {
    Mat3::new(focal, 0.0, width as f64 / 2.0, 0.0, focal, height as f64 / 2.0, 0.0, 0.0, 1.0)
}

/// Fundamental matrix with `x1ᵀ F x2 = 0` for projections `x1` in `cam1`
/// and `x2` in `cam2`.
pub fn f_from_poses(cam1: &CameraPose, cam2: &CameraPose) -> Result<FundamentalMatrix> {
    let r_rel = cam2.r * cam1.r.transpose();
    let t_rel = cam2.t - r_rel * cam1.t;
    let baseline = t_rel.norm();
    if baseline <= MIN_BASELINE {
        return Err(Error::DegenerateMotion(baseline));
    }
    let k1_inv = cam1.k.try_inverse().ok_or(Error::RankDeficient(0.0))?;
    let k2_inv = cam2.k.try_inverse().ok_or(Error::RankDeficient(0.0))?;
    // Maps cam1 points to epipolar lines in cam2; transposed for our convention.
    let f21 = k2_inv.transpose() * skew(&t_rel) * r_rel * k1_inv;
    normalize_rank2(&f21.transpose())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Global,
    LocalMotion,
    Noise,
}

impl Label {
    pub fn name(self) -> &'static str {
        match self {
            Label::Global => "global",
            Label::LocalMotion => "local",
            Label::Noise => "noise",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "global" => Some(Label::Global),
            "local" => Some(Label::LocalMotion),
            "noise" => Some(Label::Noise),
            _ => None,
        }
    }
}

/// `sigma = base + slope * noise_magnitude + U(0, jitter)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaModel {
    pub base: f64,
    pub slope: f64,
    pub jitter: f64,
}

impl Default for SigmaModel {
    fn default() -> Self {
        Self {
            base: 0.2,
            slope: 1.0,
            jitter: 0.05,
        }
    }
}

impl SigmaModel {
    fn sample(&self, magnitude: f64, rng: &mut rng::Rng) -> f64 {
        self.base + self.slope * magnitude + self.jitter * rng.random::<f64>()
    }
}

/// Dense grid mode: a tilted background plane plus rectangular fronto-parallel
/// objects, some static (occluders) and some moving on their own.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseConfig {
    pub static_objects: usize,
    pub moving_objects: usize,
    /// Object side length as a fraction of the smaller image dimension.
    pub object_size: f64,
    /// Image-space displacement of moving objects, in pixels.
    pub moving_magnitude_px: f64,
    /// Maximum x/y component of the (unnormalized) background plane normal.
    pub plane_tilt: f64,
    /// Sigma added at pixels whose smear is occluded or ambiguous.
    pub occlusion_sigma: f64,
}

impl Default for DenseConfig {
    fn default() -> Self {
        Self {
            static_objects: 1,
            moving_objects: 1,
            object_size: 0.25,
            moving_magnitude_px: 20.0,
            plane_tilt: 0.3,
            occlusion_sigma: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub n_points: usize,
    pub noise_sigma_px: f64,
    pub outlier_fraction: f64,
    pub local_motion_magnitude: f64,
    /// In-plane rotation of the local-motion cluster about its center, in
    /// degrees; the magnitude is drawn from `[max/2, max]` with random sign.
    pub local_rotation_deg: f64,
    /// Minimum noise-free SErrMin of a local-motion correspondence under the
    /// global geometry; closer samples are redrawn.
    pub local_min_serr: f64,
    pub flip_probability: f64,
    pub seed: u64,
    /// Focal length in pixels; defaults to the image width.
    pub focal_px: Option<f64>,
    pub max_rotation_deg: f64,
    /// Baseline range as fractions of `mean_depth`.
    pub baseline_min: f64,
    pub baseline_max: f64,
    pub mean_depth: f64,
    /// Relative half-width of the sampled depth range.
    pub depth_spread: f64,
    pub sigma_model: SigmaModel,
    /// Grid mode. `n_points` and `outlier_fraction` are ignored when set.
    pub dense: Option<DenseConfig>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            n_points: 200,
            noise_sigma_px: 0.0,
            outlier_fraction: 0.0,
            local_motion_magnitude: 20.0,
            local_rotation_deg: 10.0,
            local_min_serr: 10.0,
            flip_probability: 0.5,
            seed: 0,
            focal_px: None,
            max_rotation_deg: 2.0,
            baseline_min: 0.02,
            baseline_max: 0.10,
            mean_depth: 10.0,
            depth_spread: 0.5,
            sigma_model: SigmaModel::default(),
            dense: None,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ConfigInvalid(msg));
        if self.width < 16 || self.height < 16 {
            return bad(format!("image must be at least 16x16, got {}x{}", self.width, self.height));
        }
        if self.dense.is_none() && self.n_points < 7 {
            return bad(format!("n_points must be >= 7, got {}", self.n_points));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return bad(format!("outlier fraction must be in [0, 1), got {}", self.outlier_fraction));
        }
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return bad(format!("flip probability must be in [0, 1], got {}", self.flip_probability));
        }
        if !(self.noise_sigma_px >= 0.0 && self.noise_sigma_px.is_finite()) {
            return bad(format!("noise sigma must be >= 0, got {}", self.noise_sigma_px));
        }
        if !(self.local_min_serr >= 0.0) {
            return bad(format!("local separation must be >= 0, got {}", self.local_min_serr));
        }
        if !(0.0..=90.0).contains(&self.local_rotation_deg) {
            return bad(format!("local rotation must be in [0, 90] degrees, got {}", self.local_rotation_deg));
        }
        if !(self.local_motion_magnitude >= 0.0 && self.local_motion_magnitude.is_finite()) {
            return bad(format!("local motion magnitude must be >= 0, got {}", self.local_motion_magnitude));
        }
        if !(0.0..=10.0).contains(&self.max_rotation_deg) {
            return bad(format!("max rotation must be in [0, 10] degrees, got {}", self.max_rotation_deg));
        }
        if !(self.baseline_min > 0.0 && self.baseline_min <= self.baseline_max && self.baseline_max <= 1.0) {
            return bad(format!(
                "baseline range must satisfy 0 < min <= max <= 1, got [{}, {}]",
                self.baseline_min, self.baseline_max
            ));
        }
        if !(self.mean_depth > 0.0 && (0.0..1.0).contains(&self.depth_spread)) {
            return bad("mean depth must be > 0 and depth spread in [0, 1)".into());
        }
        if self.focal_px.is_some_and(|f| !(f > 0.0 && f.is_finite())) {
            return bad("focal length must be > 0".into());
        }
        let s = &self.sigma_model;
        if !(s.base > 0.0 && s.slope >= 0.0 && s.jitter >= 0.0) {
            return bad("sigma model needs base > 0, slope >= 0, jitter >= 0".into());
        }
        if let Some(d) = &self.dense {
            if !(d.object_size > 0.0 && d.object_size < 0.8) {
                return bad(format!("object size must be in (0, 0.8), got {}", d.object_size));
            }
            if !(d.moving_magnitude_px >= 0.0 && d.plane_tilt >= 0.0 && d.plane_tilt < 1.0) {
                return bad("moving magnitude must be >= 0 and plane tilt in [0, 1)".into());
            }
            if !(d.occlusion_sigma >= 0.0) {
                return bad("occlusion sigma must be >= 0".into());
            }
        }
        Ok(())
    }

    fn focal(&self) -> f64 {
        self.focal_px.unwrap_or(self.width as f64)
    }
}

/// Rectangle on the plane `z = depth` (rest configuration, world frame),
/// translated by `tau * motion` at exposure time `tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub min: [f64; 2],
    pub max: [f64; 2],
    pub depth: f64,
    pub motion: Vec3,
    pub label: Label,
}

/// Analytic scene geometry for dense mode. Surface 0 is the background plane
/// `normal · X = offset`; surface `k + 1` is `objects[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSurface {
    pub plane_normal: Vec3,
    pub plane_offset: f64,
    pub objects: Vec<SceneObject>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub surface: usize,
    /// Intersection in the surface's rest configuration.
    pub rest: Vec3,
    /// Camera depth of the intersection.
    pub depth: f64,
}

impl DenseSurface {
    /// Fronto-parallel background at `depth` with no objects.
    pub fn plane(depth: f64) -> Self {
        Self {
            plane_normal: Vec3::z(),
            plane_offset: depth,
            objects: Vec::new(),
        }
    }

    pub fn motion(&self, surface: usize) -> Vec3 {
        if surface == 0 {
            Vec3::zeros()
        } else {
            self.objects[surface - 1].motion
        }
    }

    pub fn label(&self, surface: usize) -> Label {
        if surface == 0 {
            Label::Global
        } else {
            self.objects[surface - 1].label
        }
    }

    /// Intersection of the ray with a surface's (unbounded) plane; returns
    /// the ray parameter, the rest point, and whether the point lies within
    /// the surface's extent.
    fn intersect(&self, surface: usize, origin: &Vec3, dir: &Vec3, tau: f64) -> Option<(f64, Vec3, bool)> {
        if surface == 0 {
            let den = self.plane_normal.dot(dir);
            if den.abs() < 1e-15 {
                return None;
            }
            let s = (self.plane_offset - self.plane_normal.dot(origin)) / den;
            (s > 0.0).then(|| (s, origin + dir * s, true))
        } else {
            let obj = &self.objects[surface - 1];
            let m = obj.motion * tau;
            if dir.z.abs() < 1e-15 {
                return None;
            }
            let s = (obj.depth + m.z - origin.z) / dir.z;
            if s <= 0.0 {
                return None;
            }
            let rest = origin + dir * s - m;
            let inside =
                rest.x >= obj.min[0] && rest.x <= obj.max[0] && rest.y >= obj.min[1] && rest.y <= obj.max[1];
            Some((s, rest, inside))
        }
    }

    /// Nearest surface seen through pixel `p` of `cam` at exposure time `tau`.
    pub fn cast(&self, cam: &CameraPose, p: ImagePoint, tau: f64) -> Option<Hit> {
        let origin = cam.center();
        let dir = cam.ray(p);
        let mut best: Option<Hit> = None;
        for surface in 0..=self.objects.len() {
            if let Some((s, rest, true)) = self.intersect(surface, &origin, &dir, tau) {
                if best.is_none_or(|b| s < b.depth) {
                    best = Some(Hit {
                        surface,
                        rest,
                        depth: s,
                    });
                }
            }
        }
        best
    }

    /// Full-exposure displacement of the point of `surface` seen at start
    /// pixel `p`, ignoring visibility.
    fn surface_flow(&self, surface: usize, cams: (&CameraPose, &CameraPose), p: ImagePoint) -> Option<(Vec3, ImagePoint)> {
        let (c0, c1) = cams;
        let (_, rest, _) = self.intersect(surface, &c0.center(), &c0.ray(p), 0.0)?;
        let end = c1.project(&(rest + self.motion(surface)))?;
        Some((rest, end))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub width: usize,
    pub height: usize,
    pub cam_start: CameraPose,
    pub cam_end: CameraPose,
    /// Rest positions of the sampled points (empty for parsed scenes).
    pub points3d: Vec<Vec3>,
    pub f_gt: FundamentalMatrix,
    pub correspondences: Vec<Correspondence>,
    /// Noise-free, unflipped half smears (empty for parsed scenes).
    pub gt_smears: Vec<SmearVector>,
    pub labels: Vec<Label>,
    pub sigmas: Vec<f64>,
    /// Present for dense scenes; correspondences are then in row-major pixel order.
    pub dense: Option<DenseSurface>,
}

impl SyntheticScene {
    pub fn len(&self) -> usize {
        self.correspondences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.correspondences.is_empty()
    }

    /// True when correspondences cover the pixel grid in row-major order.
    pub fn is_grid(&self) -> bool {
        self.len() == self.width * self.height
    }

    /// Predicted smear field of a grid scene.
    pub fn smear_field(&self) -> Result<SmearField> {
        if !self.is_grid() {
            return Err(Error::SparseScene);
        }
        let data = self
            .correspondences
            .iter()
            .zip(&self.sigmas)
            .map(|(c, &sigma)| SmearRecord {
                u: c.half_smear.u,
                v: c.half_smear.v,
                sigma,
            })
            .collect();
        Grid::from_vec(self.width, self.height, data)
    }

    /// Noise-free smear field of a generated grid scene.
    pub fn gt_smear_field(&self) -> Result<Grid<SmearVector>> {
        if !self.is_grid() || self.gt_smears.len() != self.len() {
            return Err(Error::SparseScene);
        }
        Grid::from_vec(self.width, self.height, self.gt_smears.clone())
    }

    pub fn label_grid(&self) -> Result<Grid<Label>> {
        if !self.is_grid() {
            return Err(Error::SparseScene);
        }
        Grid::from_vec(self.width, self.height, self.labels.clone())
    }
}

fn sample_cameras(cfg: &SceneConfig) -> Result<(CameraPose, CameraPose)> {
    let mut rng = rng::stream(cfg.seed, 0);
    let k = intrinsics(cfg.focal(), cfg.width, cfg.height);
    let max = cfg.max_rotation_deg.to_radians();
    let mut angle = || if max > 0.0 { rng.random_range(-max..=max) } else { 0.0 };
    let (rx, ry, rz) = (angle(), angle(), angle());
    let r = Rotation3::from_euler_angles(rx, ry, rz).into_inner();
    let dir = loop {
        let v = Vec3::from_fn(|_, _| StandardNormal.sample(&mut rng));
        if v.norm() > 1e-3 {
            break v.normalize();
        }
    };
    let baseline = rng.random_range(cfg.baseline_min..=cfg.baseline_max) * cfg.mean_depth;
    let center = dir * baseline;
    let start = CameraPose::identity(k);
    let end = CameraPose::new(k, r, -(r * center))?;
    Ok((start, end))
}

/// Samples a scene; a pure function of `cfg`.
pub fn generate_scene(cfg: &SceneConfig) -> Result<SyntheticScene> {
    cfg.validate()?;
    let (cam_start, cam_end) = sample_cameras(cfg)?;
    let f_gt = f_from_poses(&cam_start, &cam_end)?;
    match &cfg.dense {
        None => sparse_scene(cfg, cam_start, cam_end, f_gt),
        Some(dense) => {
            let surface = sample_surface(cfg, dense, &cam_start, &f_gt);
            build_dense_scene(cfg, cam_start, cam_end, surface)
        }
    }
}

fn inside(p: ImagePoint, w: usize, h: usize) -> bool {
    p.x >= 0.0 && p.y >= 0.0 && p.x <= w as f64 && p.y <= h as f64
}

/// Unit normal of the epipolar line of start point `c` in the end image, or a
/// fallback direction at the epipole.
fn across_epipolar(c: ImagePoint, f: &FundamentalMatrix) -> [f64; 2] {
    match epipolar_line(c, f, Side::Left) {
        Ok(l) => {
            let n = l.a.hypot(l.b);
            [l.a / n, l.b / n]
        }
        Err(_) => [1.0, 0.0],
    }
}

fn rotate(p: [f64; 2], angle: f64) -> [f64; 2] {
    let (s, c) = angle.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1]]
}

fn sparse_scene(
    cfg: &SceneConfig,
    cam_start: CameraPose,
    cam_end: CameraPose,
    f_gt: FundamentalMatrix,
) -> Result<SyntheticScene> {
    let mut rng = rng::stream(cfg.seed, 1);
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let n = cfg.n_points;
    let n_out = (cfg.outlier_fraction * n as f64).round() as usize;
    let n_glob = n - n_out;
    let margin = 2.0;
    let max_attempts = 1000 * n.max(1);
    let depth_range = cfg.mean_depth * (1.0 - cfg.depth_spread)..=cfg.mean_depth * (1.0 + cfg.depth_spread);

    // (start, end, rest point, label)
    let mut samples: Vec<(ImagePoint, ImagePoint, Vec3, Label)> = Vec::with_capacity(n);
    let mut attempts = 0;
    while samples.len() < n_glob {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::ConfigInvalid("could not sample points visible in both views".into()));
        }
        let p1 = ImagePoint::new(rng.random_range(margin..w - margin), rng.random_range(margin..h - margin));
        let x = cam_start.backproject(p1, rng.random_range(depth_range.clone()));
        if let Some(p2) = cam_end.project(&x).filter(|&p| inside(p, cfg.width, cfg.height)) {
            samples.push((p1, p2, x, Label::Global));
        }
    }

    if n_out > 0 {
        let radius = 0.15 * w.min(h);
        let center = ImagePoint::new(rng.random_range(0.3 * w..0.7 * w), rng.random_range(0.3 * h..0.7 * h));
        let cluster_depth = rng.random_range(depth_range.clone());
        let center_end = cam_end
            .project(&cam_start.backproject(center, cluster_depth))
            .unwrap_or(center);
        let normal = across_epipolar(center, &f_gt);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let shift = [sign * normal[0] * cfg.local_motion_magnitude, sign * normal[1] * cfg.local_motion_magnitude];
        let max_angle = cfg.local_rotation_deg.to_radians();
        let spin = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let angle = spin * rng.random_range(0.5 * max_angle..=max_angle);
        let mut attempts = 0;
        while samples.len() < n {
            attempts += 1;
            if attempts > max_attempts {
                return Err(Error::ConfigInvalid("could not sample a visible local-motion cluster".into()));
            }
            let rr = radius * rng.random::<f64>().sqrt();
            let th = rng.random_range(0.0..std::f64::consts::TAU);
            let p1 = ImagePoint::new(center.x + rr * th.cos(), center.y + rr * th.sin());
            if !inside(p1, cfg.width, cfg.height) {
                continue;
            }
            let x = cam_start.backproject(p1, cluster_depth * rng.random_range(0.95..=1.05));
            let Some(q) = cam_end.project(&x) else { continue };
            let d = rotate([q.x - center_end.x, q.y - center_end.y], angle);
            let p2 = ImagePoint::new(center_end.x + d[0] + shift[0], center_end.y + d[1] + shift[1]);
            let separated = serr_min(&Correspondence::from_endpoints(p1, p2), &f_gt).0 >= cfg.local_min_serr;
            if separated && inside(p2, cfg.width, cfg.height) {
                samples.push((p1, p2, x, Label::LocalMotion));
            }
        }
    }

    let noise = Normal::new(0.0, cfg.noise_sigma_px).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
    let mut records = Vec::with_capacity(n);
    for (p1, p2, x, label) in samples {
        let (n1, n2) = if cfg.noise_sigma_px > 0.0 {
            (
                [noise.sample(&mut rng), noise.sample(&mut rng)],
                [noise.sample(&mut rng), noise.sample(&mut rng)],
            )
        } else {
            ([0.0; 2], [0.0; 2])
        };
        let start = ImagePoint::new(p1.x + n1[0], p1.y + n1[1]);
        let end = ImagePoint::new(p2.x + n2[0], p2.y + n2[1]);
        let mut c = Correspondence::from_endpoints(start, end);
        if rng.random::<f64>() < cfg.flip_probability {
            c = c.flipped();
        }
        let gt = SmearVector::new((p2.x - p1.x) / 2.0, (p2.y - p1.y) / 2.0);
        let magnitude = 0.5 * (n2[0] - n1[0]).hypot(n2[1] - n1[1]);
        let sigma = cfg.sigma_model.sample(magnitude, &mut rng);
        records.push((c, gt, x, label, sigma));
    }
    records.shuffle(&mut rng);

    let mut scene = SyntheticScene {
        width: cfg.width,
        height: cfg.height,
        cam_start,
        cam_end,
        points3d: Vec::with_capacity(n),
        f_gt,
        correspondences: Vec::with_capacity(n),
        gt_smears: Vec::with_capacity(n),
        labels: Vec::with_capacity(n),
        sigmas: Vec::with_capacity(n),
        dense: None,
    };
    for (c, gt, x, label, sigma) in records {
        scene.correspondences.push(c);
        scene.gt_smears.push(gt);
        scene.points3d.push(x);
        scene.labels.push(label);
        scene.sigmas.push(sigma);
    }
    Ok(scene)
}

fn sample_surface(cfg: &SceneConfig, dense: &DenseConfig, cam: &CameraPose, f_gt: &FundamentalMatrix) -> DenseSurface {
    let mut rng = rng::stream(cfg.seed, 2);
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let tilt = dense.plane_tilt;
    let mut tilt_component = || if tilt > 0.0 { rng.random_range(-tilt..=tilt) } else { 0.0 };
    let normal = Vec3::new(tilt_component(), tilt_component(), 1.0).normalize();
    let mut surface = DenseSurface {
        plane_normal: normal,
        plane_offset: normal.z * cfg.mean_depth,
        objects: Vec::new(),
    };

    // Objects sit well in front of the nearest background corner.
    let corners = [(0.0, 0.0), (w, 0.0), (0.0, h), (w, h)];
    let nearest = corners
        .iter()
        .filter_map(|&(x, y)| surface.cast(cam, ImagePoint::new(x, y), 0.0))
        .map(|hit| hit.depth)
        .fold(cfg.mean_depth, f64::min);
    let side = dense.object_size * w.min(h);
    let total = dense.static_objects + dense.moving_objects;
    for k in 0..total {
        let x0 = rng.random_range(0.1 * w..(0.9 * w - side).max(0.1 * w + 1.0));
        let y0 = rng.random_range(0.1 * h..(0.9 * h - side).max(0.1 * h + 1.0));
        let depth = 0.7 * nearest * (1.0 - 0.03 * k as f64);
        let a = cam.backproject(ImagePoint::new(x0, y0), depth);
        let b = cam.backproject(ImagePoint::new(x0 + side, y0 + side), depth);
        let moving = k >= dense.static_objects;
        let motion = if moving {
            let c = ImagePoint::new(x0 + side / 2.0, y0 + side / 2.0);
            let n = across_epipolar(c, f_gt);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let scale = sign * dense.moving_magnitude_px * depth / cam.k[(0, 0)];
            Vec3::new(n[0] * scale, n[1] * scale, 0.0)
        } else {
            Vec3::zeros()
        };
        surface.objects.push(SceneObject {
            min: [a.x.min(b.x), a.y.min(b.y)],
            max: [a.x.max(b.x), a.y.max(b.y)],
            depth,
            motion,
            label: if moving { Label::LocalMotion } else { Label::Global },
        });
    }
    surface
}

/// Solves `p + fw(p) / 2 = m` for start point `p` on `surface`.
fn midpoint_solution(
    surface: &DenseSurface,
    index: usize,
    cams: (&CameraPose, &CameraPose),
    m: ImagePoint,
) -> Option<(ImagePoint, ImagePoint, Vec3)> {
    let mut p = m;
    for _ in 0..50 {
        let (rest, end) = surface.surface_flow(index, cams, p)?;
        let next = ImagePoint::new(m.x - (end.x - p.x) / 2.0, m.y - (end.y - p.y) / 2.0);
        let step = (next.x - p.x).hypot(next.y - p.y);
        p = next;
        if step < 1e-10 {
            let (rest2, end2) = surface.surface_flow(index, cams, p).unwrap_or((rest, end));
            return Some((p, end2, rest2));
        }
    }
    None
}

/// Builds a dense grid scene from explicit cameras and geometry. Noise, flip
/// and sigma settings come from `cfg`; sampling uses `cfg.seed`.
pub fn build_dense_scene(
    cfg: &SceneConfig,
    cam_start: CameraPose,
    cam_end: CameraPose,
    surface: DenseSurface,
) -> Result<SyntheticScene> {
    let dense = cfg.dense.clone().unwrap_or_default();
    let f_gt = f_from_poses(&cam_start, &cam_end)?;
    let (w, h) = (cfg.width, cfg.height);
    let cams = (&cam_start, &cam_end);

    // Noise-free geometry per pixel: (gt smear, rest point, label).
    let geometry: Vec<(SmearVector, Vec3, Label)> = {
        use rayon::prelude::*;
        (0..w * h)
            .into_par_iter()
            .map(|i| {
                let m = ImagePoint::new((i % w) as f64 + 0.5, (i / w) as f64 + 0.5);
                let mut valid = Vec::new();
                let mut fallback = None;
                for s in 0..=surface.objects.len() {
                    let Some((p, q, rest)) = midpoint_solution(&surface, s, cams, m) else {
                        continue;
                    };
                    let smear = SmearVector::new((q.x - p.x) / 2.0, (q.y - p.y) / 2.0);
                    let start_ok = surface.cast(&cam_start, p, 0.0).is_some_and(|hit| hit.surface == s);
                    let end_ok = surface.cast(&cam_end, q, 1.0).is_some_and(|hit| hit.surface == s);
                    if start_ok && end_ok {
                        valid.push((smear, rest, surface.label(s)));
                    } else if start_ok && fallback.is_none() {
                        fallback = Some((smear, rest));
                    }
                }
                match valid.as_slice() {
                    [one] => *one,
                    [first, ..] => (first.0, first.1, Label::Noise),
                    [] => {
                        let (s, r) = fallback.unwrap_or((SmearVector::new(0.0, 0.0), Vec3::zeros()));
                        (s, r, Label::Noise)
                    }
                }
            })
            .collect()
    };

    let mut rng = rng::stream(cfg.seed, 3);
    let noise = Normal::new(0.0, cfg.noise_sigma_px).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
    let mut scene = SyntheticScene {
        width: w,
        height: h,
        cam_start,
        cam_end,
        points3d: Vec::with_capacity(w * h),
        f_gt,
        correspondences: Vec::with_capacity(w * h),
        gt_smears: Vec::with_capacity(w * h),
        labels: Vec::with_capacity(w * h),
        sigmas: Vec::with_capacity(w * h),
        dense: Some(surface),
    };
    for (i, (gt, rest, label)) in geometry.into_iter().enumerate() {
        let m = ImagePoint::new((i % w) as f64 + 0.5, (i / w) as f64 + 0.5);
        let d = if cfg.noise_sigma_px > 0.0 {
            [
                (noise.sample(&mut rng) - noise.sample(&mut rng)) / 2.0,
                (noise.sample(&mut rng) - noise.sample(&mut rng)) / 2.0,
            ]
        } else {
            [0.0; 2]
        };
        let mut s = SmearVector::new(gt.u + d[0], gt.v + d[1]);
        if rng.random::<f64>() < cfg.flip_probability {
            s = -s;
        }
        let mut sigma = cfg.sigma_model.sample(d[0].hypot(d[1]), &mut rng);
        if label == Label::Noise {
            sigma += dense.occlusion_sigma;
        }
        scene.correspondences.push(Correspondence::new(m, s));
        scene.gt_smears.push(gt);
        scene.points3d.push(rest);
        scene.labels.push(label);
        scene.sigmas.push(sigma);
    }
    Ok(scene)
}

/// Forward/backward flows of a dense scene plus the generator's own
/// visibility bookkeeping. The cross-check tests every cell both as a start
/// pixel (fw then bw) and as an end pixel (bw then fw), so the labels cover
/// both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowPair {
    pub fw: FlowField,
    pub bw: FlowField,
    /// Cells whose point is hidden at the other end of the exposure, in
    /// either direction.
    pub occluded: Grid<bool>,
    /// Round-trip error, in pixels, that the occluder's flow induces at an
    /// occluded cell (0 elsewhere). Occlusions below the cross-check
    /// threshold are invisible to it.
    pub occlusion_gap: Grid<f64>,
    /// Cells whose bilinear lookups mix samples from different surfaces.
    pub discontinuity: Grid<bool>,
    /// Cells whose forward or backward target leaves the span of cell centers.
    pub out_of_frame: Grid<bool>,
}

impl FlowPair {
    /// Cells where both round trips stay on one visible surface inside the
    /// image; exact flows are consistent there.
    pub fn consistent(&self, x: usize, y: usize) -> bool {
        !(*self.occluded.get(x, y) || *self.discontinuity.get(x, y) || *self.out_of_frame.get(x, y))
    }
}

/// Surface ids of the 2x2 bilinear footprint around continuous position `q`
/// agree.
fn uniform_footprint(ids: &Grid<usize>, q: ImagePoint) -> bool {
    let (w, h) = (ids.width(), ids.height());
    let x0 = ((q.x - 0.5).floor().max(0.0) as usize).min(w - 1);
    let y0 = ((q.y - 0.5).floor().max(0.0) as usize).min(h - 1);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let id = *ids.get(x0, y0);
    *ids.get(x1, y0) == id && *ids.get(x0, y1) == id && *ids.get(x1, y1) == id
}

/// Forward flow on the start grid and backward flow on the end grid, both by
/// ray casting. This is a continuous z-buffer: each cell takes the nearest
/// surface seen through it, so a point hidden at the other end of the
/// exposure receives the occluder's flow and fails the cross-check.
pub fn make_flow_pair(scene: &SyntheticScene) -> Result<FlowPair> {
    let surface = scene.dense.as_ref().ok_or(Error::SparseScene)?;
    let (w, h) = (scene.width, scene.height);
    let (c0, c1) = (&scene.cam_start, &scene.cam_end);
    let center = |i: usize| ImagePoint::new((i % w) as f64 + 0.5, (i / w) as f64 + 0.5);
    // Bilinear lookups need targets between the outermost cell centers.
    let in_span = |q: ImagePoint| q.x >= 0.5 && q.y >= 0.5 && q.x <= w as f64 - 0.5 && q.y <= h as f64 - 0.5;
    let dist = |a: ImagePoint, b: ImagePoint| (a.x - b.x).hypot(a.y - b.y);

    // Visible surface, moved to time 1, seen from the start/end grids.
    let start_hits: Vec<Option<(Hit, ImagePoint)>> = (0..w * h)
        .map(|i| {
            let hit = surface.cast(c0, center(i), 0.0)?;
            Some((hit, c1.project(&(hit.rest + surface.motion(hit.surface)))?))
        })
        .collect();
    let end_hits: Vec<Option<(Hit, ImagePoint)>> = (0..w * h)
        .map(|i| {
            let hit = surface.cast(c1, center(i), 1.0)?;
            Some((hit, c0.project(&hit.rest)?))
        })
        .collect();
    let ids = |hits: &[Option<(Hit, ImagePoint)>]| {
        Grid::from_vec(w, h, hits.iter().map(|h| h.map_or(usize::MAX, |(hit, _)| hit.surface)).collect())
    };
    let (start_ids, end_ids) = (ids(&start_hits)?, ids(&end_hits)?);

    let mut pair = FlowPair {
        fw: Grid::filled(w, h, [0.0; 2]),
        bw: Grid::filled(w, h, [0.0; 2]),
        occluded: Grid::filled(w, h, false),
        occlusion_gap: Grid::filled(w, h, 0.0),
        discontinuity: Grid::filled(w, h, false),
        out_of_frame: Grid::filled(w, h, false),
    };
    for i in 0..w * h {
        let p = center(i);

        if let Some((hit, q)) = start_hits[i] {
            pair.fw.data_mut()[i] = [q.x - p.x, q.y - p.y];
            if in_span(q) {
                pair.discontinuity.data_mut()[i] |= !uniform_footprint(&end_ids, q);
                if let Some(seen) = surface.cast(c1, q, 1.0).filter(|seen| seen.surface != hit.surface) {
                    pair.occluded.data_mut()[i] = true;
                    let back = c0.project(&seen.rest).map_or(f64::INFINITY, |r| dist(r, p));
                    pair.occlusion_gap.data_mut()[i] += back;
                }
            } else {
                pair.out_of_frame.data_mut()[i] = true;
            }
        } else {
            pair.out_of_frame.data_mut()[i] = true;
        }

        if let Some((hit, r)) = end_hits[i] {
            pair.bw.data_mut()[i] = [r.x - p.x, r.y - p.y];
            if in_span(r) {
                pair.discontinuity.data_mut()[i] |= !uniform_footprint(&start_ids, r);
                if let Some(seen) = surface.cast(c0, r, 0.0).filter(|seen| seen.surface != hit.surface) {
                    pair.occluded.data_mut()[i] = true;
                    let there = c1
                        .project(&(seen.rest + surface.motion(seen.surface)))
                        .map_or(f64::INFINITY, |t| dist(t, p));
                    pair.occlusion_gap.data_mut()[i] += there;
                }
            } else {
                pair.out_of_frame.data_mut()[i] = true;
            }
        } else {
            pair.out_of_frame.data_mut()[i] = true;
        }
    }
    Ok(pair)
}

/// Number of sharp frames to average for a blur whose largest displacement is
/// `s_max` pixels.
pub fn frame_count_rule(s_max: f64) -> usize {
    let two_s = if s_max.is_finite() && s_max > 0.0 { (2.0 * s_max).ceil() } else { 0.0 };
    (two_s as usize).max(15)
}

/// Per-pixel mean of `frames` plus seeded Gaussian noise, clamped to `[0, 1]`.
/// The mean is independent of frame order.
pub fn frame_average(frames: &[GrayImage], noise_sigma: f64, seed: u64) -> Result<GrayImage> {
    let first = frames.first().ok_or(Error::EmptyInput)?;
    if let Some(bad) = frames.iter().find(|f| !f.same_shape(first)) {
        return Err(Error::DimensionMismatch(format!(
            "frame {}x{} differs from {}x{}",
            bad.width(),
            bad.height(),
            first.width(),
            first.height()
        )));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::ConfigInvalid(format!("noise sigma must be >= 0, got {noise_sigma}")));
    }
    let n = frames.len() as f64;
    let mut values = Vec::with_capacity(frames.len());
    let mut out = Grid::filled(first.width(), first.height(), 0.0);
    for i in 0..first.len() {
        values.clear();
        values.extend(frames.iter().map(|f| f.data()[i]));
        values.sort_by(f64::total_cmp);
        out.data_mut()[i] = values.iter().sum::<f64>() / n;
    }
    if noise_sigma > 0.0 {
        let mut rng = rng::stream(seed, 0);
        let normal = Normal::new(0.0, noise_sigma).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        for v in out.data_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    for v in out.data_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(out)
}

fn texture(surface: usize, rest: &Vec3) -> f64 {
    if surface == 0 {
        let t = std::f64::consts::TAU;
        0.5 + 0.3 * (t * rest.x / 0.7).sin() * (t * rest.y / 0.5).cos()
    } else {
        let cell = ((rest.x / 0.3).floor() + (rest.y / 0.3).floor()) as i64;
        if cell.rem_euclid(2) == 0 {
            0.2 + 0.05 * surface as f64
        } else {
            0.8
        }
    }
}

/// Sharp frame at exposure time `tau` of a dense scene.
pub fn render_frame(scene: &SyntheticScene, tau: f64) -> Result<GrayImage> {
    let surface = scene.dense.as_ref().ok_or(Error::SparseScene)?;
    let cam = scene.cam_start.interpolate(&scene.cam_end, tau);
    Ok(Grid::from_fn(scene.width, scene.height, |x, y| {
        let p = ImagePoint::new(x as f64 + 0.5, y as f64 + 0.5);
        surface.cast(&cam, p, tau).map_or(0.0, |hit| texture(hit.surface, &hit.rest))
    }))
}

/// Blurred image of a dense scene: the average of evenly spaced sharp frames,
/// with the frame count set by the largest ground-truth displacement.
pub fn render_blurred(scene: &SyntheticScene, noise_sigma: f64, seed: u64) -> Result<GrayImage> {
    let s_max = scene.gt_smears.iter().map(|s| 2.0 * s.norm()).fold(0.0, f64::max);
    let n = frame_count_rule(s_max);
    let frames = (0..n)
        .map(|k| render_frame(scene, k as f64 / (n - 1) as f64))
        .collect::<Result<Vec<_>>>()?;
    frame_average(&frames, noise_sigma, seed)
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn scene_to_text(scene: &SyntheticScene) -> String {
    let mut out = format!("SCENE {} {} {}\n", scene.width, scene.height, scene.len());
    for cam in [&scene.cam_start, &scene.cam_end] {
        out += &format!("K {}\n", join(cam.k.transpose().iter().copied()));
        out += &format!("R {}\n", join(cam.r.transpose().iter().copied()));
        out += &format!("T {}\n", join(cam.t.iter().copied()));
    }
    out += &scene.f_gt.to_text();
    for ((c, sigma), label) in scene.correspondences.iter().zip(&scene.sigmas).zip(&scene.labels) {
        out += &format!(
            "{} {} {} {} {} {}\n",
            c.midpoint.x,
            c.midpoint.y,
            c.half_smear.u,
            c.half_smear.v,
            sigma,
            label.name()
        );
    }
    out
}

/// Parses a scene file. Dense geometry, rest points and noise-free smears are
/// not stored and come back empty.
pub fn parse_scene(text: &str) -> Result<SyntheticScene> {
    let mut reader = TextReader::new(text);
    let (no, rest) = reader.expect_keyword("SCENE")?;
    if rest.len() != 3 {
        return Err(Error::parse(no, "SCENE header needs width, height and count"));
    }
    let (width, height, count) = (parse_usize(rest[0], no)?, parse_usize(rest[1], no)?, parse_usize(rest[2], no)?);

    let mut read_cam = || -> Result<CameraPose> {
        let (no, k) = reader.expect_keyword("K")?;
        let k = Mat3::from_row_slice(&numbers(no, &k, 9)?);
        let (no, r) = reader.expect_keyword("R")?;
        let r = Mat3::from_row_slice(&numbers(no, &r, 9)?);
        let (no, t) = reader.expect_keyword("T")?;
        let t = Vec3::from_row_slice(&numbers(no, &t, 3)?);
        CameraPose::new(k, r, t).map_err(|e| Error::parse(no, e.to_string()))
    };
    let cam_start = read_cam()?;
    let cam_end = read_cam()?;

    let (no, fmat) = reader.expect_keyword("FMAT")?;
    if !fmat.is_empty() {
        return Err(Error::parse(no, "unexpected tokens after FMAT"));
    }
    let mut rows = [0.0; 9];
    for r in 0..3 {
        let (no, toks) = reader.expect_tokens("matrix row")?;
        rows[3 * r..3 * r + 3].copy_from_slice(&numbers(no, &toks, 3)?);
    }
    let f_gt = FundamentalMatrix::from_row_major(&rows);

    let mut scene = SyntheticScene {
        width,
        height,
        cam_start,
        cam_end,
        points3d: Vec::new(),
        f_gt,
        correspondences: Vec::with_capacity(count),
        gt_smears: Vec::new(),
        labels: Vec::with_capacity(count),
        sigmas: Vec::with_capacity(count),
        dense: None,
    };
    for _ in 0..count {
        let (no, toks) = reader.expect_tokens("correspondence line")?;
        if toks.len() != 6 {
            return Err(Error::parse(no, format!("expected 6 fields, found {}", toks.len())));
        }
        let v: Vec<f64> = toks[..5].iter().map(|t| parse_f64(t, no)).collect::<Result<_>>()?;
        let label = Label::parse(toks[5]).ok_or_else(|| Error::parse(no, format!("unknown label {:?}", toks[5])))?;
        if !(v[4] > 0.0) {
            return Err(Error::parse(no, "sigma must be positive"));
        }
        scene
            .correspondences
            .push(Correspondence::new(ImagePoint::new(v[0], v[1]), SmearVector::new(v[2], v[3])));
        scene.sigmas.push(v[4]);
        scene.labels.push(label);
    }
    if let Some((no, _)) = reader.next_tokens() {
        return Err(Error::parse(no, "trailing data after correspondences"));
    }
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_poses_are_degenerate() {
        let cam = CameraPose::identity(Mat3::identity());
        assert!(matches!(f_from_poses(&cam, &cam), Err(Error::DegenerateMotion(_))));
    }

    #[test]
    fn pure_translation_is_skew() {
        let c1 = CameraPose::identity(Mat3::identity());
        let c2 = CameraPose::new(Mat3::identity(), Mat3::identity(), Vec3::new(1.0, 0.0, 0.0)).unwrap();
        let f = f_from_poses(&c1, &c2).unwrap();
        let expected = FundamentalMatrix::from_row_major(&[0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0]);
        assert!(f.ambiguity_distance(&expected) < 1e-15);
    }

    #[test]
    fn frame_count_examples() {
        assert_eq!(frame_count_rule(10.0), 20);
        assert_eq!(frame_count_rule(3.0), 15);
        assert_eq!(frame_count_rule(0.0), 15);
        assert_eq!(frame_count_rule(7.5), 15);
        assert_eq!(frame_count_rule(7.6), 16);
    }

    #[test]
    fn frame_average_examples() {
        let a = Grid::filled(3, 2, 0.25);
        assert_eq!(frame_average(&[a.clone(), a.clone(), a.clone()], 0.0, 1).unwrap(), a);
        let zero = Grid::filled(3, 2, 0.0);
        let one = Grid::filled(3, 2, 1.0);
        assert_eq!(frame_average(&[zero, one], 0.0, 1).unwrap(), Grid::filled(3, 2, 0.5));
        assert!(matches!(frame_average(&[], 0.0, 1), Err(Error::EmptyInput)));
        let other = Grid::filled(2, 2, 0.0);
        assert!(matches!(frame_average(&[a, other], 0.0, 1), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn outlier_count_is_exact() {
        let cfg = SceneConfig {
            n_points: 200,
            outlier_fraction: 0.3,
            noise_sigma_px: 0.5,
            seed: 7,
            ..Default::default()
        };
        let scene = generate_scene(&cfg).unwrap();
        assert_eq!(scene.len(), 200);
        assert_eq!(scene.labels.iter().filter(|&&l| l == Label::LocalMotion).count(), 60);
    }

    #[test]
    fn noiseless_globals_are_exact() {
        let scene = generate_scene(&SceneConfig {
            seed: 3,
            ..Default::default()
        })
        .unwrap();
        for c in &scene.correspondences {
            assert!(serr_min(c, &scene.f_gt).0 <= 1e-10);
            assert!(inside(c.start(), scene.width, scene.height));
            assert!(inside(c.end(), scene.width, scene.height));
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        for cfg in [
            SceneConfig { n_points: 6, ..Default::default() },
            SceneConfig { outlier_fraction: 1.0, ..Default::default() },
            SceneConfig { flip_probability: -0.1, ..Default::default() },
            SceneConfig { noise_sigma_px: f64::NAN, ..Default::default() },
            SceneConfig { max_rotation_deg: 11.0, ..Default::default() },
        ] {
            assert!(matches!(generate_scene(&cfg), Err(Error::ConfigInvalid(_))), "{cfg:?}");
        }
    }

    #[test]
    fn interpolation_endpoints() {
        let cfg = SceneConfig::default();
        let (a, b) = sample_cameras(&cfg).unwrap();
        let at0 = a.interpolate(&b, 0.0);
        let at1 = a.interpolate(&b, 1.0);
        assert!((at0.r - a.r).amax() < 1e-12 && (at0.t - a.t).amax() < 1e-12);
        assert!((at1.r - b.r).amax() < 1e-12 && (at1.t - b.t).amax() < 1e-12);
    }

    #[test]
    fn sparse_scene_is_not_a_flow_source() {
        let scene = generate_scene(&SceneConfig::default()).unwrap();
        assert!(matches!(make_flow_pair(&scene), Err(Error::SparseScene)));
    }
}
