//! `smearfm` command-line front end.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use smearfm::eval::{curve_to_text, default_curve_grid, fm_eval, DEFAULT_THRESHOLD};
use smearfm::pnm::{decode_gray, encode_pgm16, encode_pgm8, encode_ppm};
use smearfm::render::{items_from_correspondences, parse_point_list, render_epilines, EpilineItem};
use smearfm::robust::{
    classify_motion, estimate_selection, report_to_text, select_top_beta, select_top_beta_list, MotionConfig,
    RansacConfig, Selection, DEFAULT_BETA, DEFAULT_SIGMA_GATE, DEFAULT_TAU_SE, DEFAULT_TAU_SEG, MASK_LOCAL,
    MASK_UNKNOWN,
};
use smearfm::smear::{flow_field_to_text, parse_smear_field, smear_field_to_text, SmearField};
use smearfm::synth::{
    generate_scene, make_flow_pair, parse_scene, render_blurred, scene_to_text, DenseConfig, Label, SceneConfig,
    SyntheticScene,
};
use smearfm::{Error, FundamentalMatrix, Side};

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Debug)]
struct CliError {
    code: u8,
    msg: String,
}

impl CliError {
    fn config(msg: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, msg: msg.into() }
    }

    fn runtime(msg: impl Into<String>) -> Self {
        Self { code: EXIT_RUNTIME, msg: msg.into() }
    }

    /// Core errors: configuration problems exit 2, everything else 1.
    fn core(context: &str, e: Error) -> Self {
        let code = if matches!(e, Error::ConfigInvalid(_)) { EXIT_CONFIG } else { EXIT_RUNTIME };
        Self { code, msg: format!("{context}: {e}") }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Parser)]
#[command(name = "smearfm", version, about = "Fundamental matrix estimation from motion-blur smears")]
struct Cli {
    /// Do not print the effective parameters to stderr.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-view scene with smears.
    SynthGen(SynthArgs),
    /// Estimate F from a smear field or scene file.
    Estimate(EstimateArgs),
    /// Score an F against a scene's correspondences.
    Eval(EvalArgs),
    /// Label each pixel of a smear field as global or local motion.
    Segment(SegmentArgs),
    /// Draw epipolar lines into a PPM image.
    RenderEpilines(RenderArgs),
    /// Run synth-gen, estimate and eval over a range of seeds.
    Bench(BenchArgs),
}

#[derive(Args, Clone)]
struct SceneArgs {
    #[arg(long, default_value_t = 640)]
    width: usize,
    #[arg(long, default_value_t = 480)]
    height: usize,
    /// Number of sparse correspondences (ignored with --dense).
    #[arg(long, default_value_t = 200)]
    n_points: usize,
    /// Endpoint noise, pixels.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Fraction of local-motion correspondences, in [0, 1).
    #[arg(long, default_value_t = 0.0)]
    outliers: f64,
    /// Probability of reversing a smear's time direction.
    #[arg(long, default_value_t = 0.5)]
    flip: f64,
    /// Local-motion displacement across the epipolar line, pixels.
    #[arg(long, default_value_t = 20.0)]
    local_magnitude: f64,
    /// Maximum camera rotation per axis, degrees (at most 10).
    #[arg(long, default_value_t = 2.0)]
    max_rotation: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dense grid scene (background plane plus rectangular objects).
    #[arg(long)]
    dense: bool,
    /// Moving objects in a dense scene.
    #[arg(long, default_value_t = 1)]
    moving_objects: usize,
    /// Static occluders in a dense scene.
    #[arg(long, default_value_t = 1)]
    static_objects: usize,
}

impl SceneArgs {
    fn config(&self) -> CliResult<SceneConfig> {
        check(self.width >= 16, "--width", self.width, "must be >= 16")?;
        check(self.height >= 16, "--height", self.height, "must be >= 16")?;
        check(self.dense || self.n_points >= 7, "--n-points", self.n_points, "must be >= 7")?;
        check(self.noise >= 0.0 && self.noise.is_finite(), "--noise", self.noise, "must be >= 0")?;
        check((0.0..1.0).contains(&self.outliers), "--outliers", self.outliers, "must be in [0, 1)")?;
        check((0.0..=1.0).contains(&self.flip), "--flip", self.flip, "must be in [0, 1]")?;
        check(
            self.local_magnitude >= 0.0 && self.local_magnitude.is_finite(),
            "--local-magnitude",
            self.local_magnitude,
            "must be >= 0",
        )?;
        check((0.0..=10.0).contains(&self.max_rotation), "--max-rotation", self.max_rotation, "must be in [0, 10]")?;
        let dense = self.dense.then(|| DenseConfig {
            moving_objects: self.moving_objects,
            static_objects: self.static_objects,
            ..DenseConfig::default()
        });
        let cfg = SceneConfig {
            width: self.width,
            height: self.height,
            n_points: self.n_points,
            noise_sigma_px: self.noise,
            outlier_fraction: self.outliers,
            flip_probability: self.flip,
            local_motion_magnitude: self.local_magnitude,
            max_rotation_deg: self.max_rotation,
            seed: self.seed,
            dense,
            ..SceneConfig::default()
        };
        cfg.validate().map_err(|e| CliError::core("scene", e))?;
        Ok(cfg)
    }

    fn describe(&self) -> String {
        format!(
            "width={} height={} n_points={} noise={} outliers={} flip={} local_magnitude={} max_rotation={} seed={} dense={}",
            self.width,
            self.height,
            self.n_points,
            self.noise,
            self.outliers,
            self.flip,
            self.local_magnitude,
            self.max_rotation,
            self.seed,
            self.dense
        )
    }
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    scene: SceneArgs,
    /// Scene file to write.
    #[arg(short, long)]
    output: PathBuf,
    /// Also write the smear field (dense scenes only).
    #[arg(long)]
    smear_field: Option<PathBuf>,
    /// Also write the forward ground-truth flow (dense scenes only).
    #[arg(long)]
    flow: Option<PathBuf>,
    /// Also write the backward ground-truth flow (dense scenes only).
    #[arg(long)]
    flow_bw: Option<PathBuf>,
    /// Also write the synthetic blurred image as 16-bit PGM (dense scenes only).
    #[arg(long)]
    blur: Option<PathBuf>,
    /// Intensity noise added to the blurred image.
    #[arg(long, default_value_t = 0.0)]
    blur_noise: f64,
}

#[derive(Args, Clone)]
struct RansacArgs {
    /// Fraction of lowest-sigma smears kept, in (0, 1].
    #[arg(long, default_value_t = DEFAULT_BETA)]
    beta: f64,
    /// RANSAC inlier threshold on SErrMin.
    #[arg(long, default_value_t = DEFAULT_TAU_SE)]
    tau: f64,
    /// Number of seven-smear samples.
    #[arg(long, default_value_t = 512)]
    hypotheses: usize,
    /// Observations scored per preemption round.
    #[arg(long, default_value_t = 64)]
    block_size: usize,
    /// Maximum number of preemption rounds.
    #[arg(long, default_value_t = 1000)]
    max_iterations: usize,
    /// Survivors refined on their consensus sets.
    #[arg(long, default_value_t = 8)]
    refine_top: usize,
}

impl RansacArgs {
    fn config(&self, seed: u64) -> CliResult<RansacConfig> {
        check(self.beta > 0.0 && self.beta <= 1.0, "--beta", self.beta, "must be in (0, 1]")?;
        check(self.tau > 0.0 && self.tau.is_finite(), "--tau", self.tau, "must be > 0")?;
        check(self.hypotheses >= 1, "--hypotheses", self.hypotheses, "must be >= 1")?;
        check(self.block_size >= 1, "--block-size", self.block_size, "must be >= 1")?;
        check(self.max_iterations >= 1, "--max-iterations", self.max_iterations, "must be >= 1")?;
        check(self.refine_top >= 1, "--refine-top", self.refine_top, "must be >= 1")?;
        let cfg = RansacConfig {
            tau_se: self.tau,
            hypotheses: self.hypotheses,
            block_size: self.block_size,
            max_iterations: self.max_iterations,
            refine_top: self.refine_top,
            seed,
            ..RansacConfig::default()
        };
        cfg.validate().map_err(|e| CliError::core("ransac", e))?;
        Ok(cfg)
    }

    fn describe(&self) -> String {
        format!(
            "beta={} tau={} hypotheses={} block_size={} max_iterations={} refine_top={}",
            self.beta, self.tau, self.hypotheses, self.block_size, self.max_iterations, self.refine_top
        )
    }
}

#[derive(Args)]
struct EstimateArgs {
    /// SMEARFIELD or SCENE file.
    input: PathBuf,
    /// Report file to write.
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    ransac: RansacArgs,
    /// Seed of the hypothesis sampler.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvalArgs {
    /// Scene file holding the ground-truth correspondences.
    #[arg(long)]
    scene: PathBuf,
    /// File with an FMAT block (an F file, report or scene).
    #[arg(long)]
    f: PathBuf,
    /// SErrMin threshold for the inlier percentage.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Score only correspondences with this label.
    #[arg(long, value_enum)]
    label: Option<LabelArg>,
    /// Write the cumulative error curve here.
    #[arg(long)]
    curve: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum LabelArg {
    Global,
    Local,
    Noise,
}

impl From<LabelArg> for Label {
    fn from(l: LabelArg) -> Self {
        match l {
            LabelArg::Global => Label::Global,
            LabelArg::Local => Label::LocalMotion,
            LabelArg::Noise => Label::Noise,
        }
    }
}

#[derive(Args)]
struct SegmentArgs {
    /// SMEARFIELD file or dense SCENE file.
    #[arg(long)]
    field: PathBuf,
    /// File with an FMAT block.
    #[arg(long)]
    f: PathBuf,
    /// Mask image to write (PGM: 0 global, 255 local, 128 unknown).
    #[arg(short, long)]
    output: PathBuf,
    /// SErrMin above which a pixel is local motion.
    #[arg(long, default_value_t = DEFAULT_TAU_SEG)]
    tau_seg: f64,
    /// Zero smears with sigma above this are unknown.
    #[arg(long, default_value_t = DEFAULT_SIGMA_GATE)]
    sigma_gate: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    /// Line l = Fᵀ p; contains the end point of a smear starting at p.
    Left,
    /// Line l = F p; contains the start point of a smear ending at p.
    Right,
}

#[derive(Args)]
struct RenderArgs {
    /// File with an FMAT block.
    #[arg(long)]
    f: PathBuf,
    /// Point list, one `x y` per line.
    #[arg(long, conflicts_with = "scene")]
    points: Option<PathBuf>,
    /// Scene file; each correspondence's start point is used and its end
    /// point is marked.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Which epipolar line to draw for listed points.
    #[arg(long, value_enum, default_value_t = SideArg::Left)]
    side: SideArg,
    /// Canvas width (defaults to the scene or background width).
    #[arg(long)]
    width: Option<usize>,
    /// Canvas height (defaults to the scene or background height).
    #[arg(long)]
    height: Option<usize>,
    /// PGM or PPM background image.
    #[arg(long)]
    background: Option<PathBuf>,
    /// PPM image to write.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    scene: SceneArgs,
    #[command(flatten)]
    ransac: RansacArgs,
    /// Number of consecutive seeds, starting at --seed; each seeds both the
    /// scene and the sampler.
    #[arg(long, default_value_t = 10)]
    runs: u64,
    /// SErrMin threshold for the inlier percentage.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Write the table here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn check(ok: bool, flag: &str, value: impl std::fmt::Display, rule: &str) -> CliResult {
    if ok {
        Ok(())
    } else {
        Err(CliError::config(format!("invalid {flag} {value}: {rule}")))
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::runtime(format!("cannot read {}: {e}", path.display())))
}

fn read_f(path: &Path) -> CliResult<FundamentalMatrix> {
    let text = read_text(path)?;
    FundamentalMatrix::parse_text(&text).map_err(|e| CliError::core(&path.display().to_string(), e))
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult {
    let fail = |e: std::io::Error| CliError::runtime(format!("cannot write {}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(bytes).map_err(fail)?;
    tmp.as_file().sync_all().map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}

enum SmearInput {
    Field(SmearField),
    Scene(SyntheticScene),
}

fn read_smear_input(path: &Path) -> CliResult<SmearInput> {
    let text = read_text(path)?;
    let first = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .and_then(|l| l.split_whitespace().next())
        .unwrap_or("");
    let name = path.display().to_string();
    match first {
        "SMEARFIELD" => parse_smear_field(&text).map(SmearInput::Field).map_err(|e| CliError::core(&name, e)),
        "SCENE" => parse_scene(&text).map(SmearInput::Scene).map_err(|e| CliError::core(&name, e)),
        _ => Err(CliError::runtime(format!("{name}: expected a SMEARFIELD or SCENE file"))),
    }
}

fn note(quiet: bool, msg: &str) {
    if !quiet {
        eprintln!("{msg}");
    }
}

fn cmd_synth_gen(a: &SynthArgs, quiet: bool) -> CliResult {
    let cfg = a.scene.config()?;
    check(a.blur_noise >= 0.0 && a.blur_noise.is_finite(), "--blur-noise", a.blur_noise, "must be >= 0")?;
    let dense_only = [("--smear-field", &a.smear_field), ("--flow", &a.flow), ("--flow-bw", &a.flow_bw), ("--blur", &a.blur)];
    if !a.scene.dense {
        if let Some((flag, _)) = dense_only.iter().find(|(_, p)| p.is_some()) {
            return Err(CliError::config(format!("invalid {flag}: requires --dense")));
        }
    }
    note(quiet, &format!("synth-gen: {} blur_noise={}", a.scene.describe(), a.blur_noise));
    let scene = generate_scene(&cfg).map_err(|e| CliError::core("synth-gen", e))?;
    write_atomic(&a.output, scene_to_text(&scene).as_bytes())?;
    if let Some(p) = &a.smear_field {
        let field = scene.smear_field().map_err(|e| CliError::core("synth-gen", e))?;
        write_atomic(p, smear_field_to_text(&field).as_bytes())?;
    }
    if a.flow.is_some() || a.flow_bw.is_some() {
        let pair = make_flow_pair(&scene).map_err(|e| CliError::core("synth-gen", e))?;
        if let Some(p) = &a.flow {
            write_atomic(p, flow_field_to_text(&pair.fw).as_bytes())?;
        }
        if let Some(p) = &a.flow_bw {
            write_atomic(p, flow_field_to_text(&pair.bw).as_bytes())?;
        }
    }
    if let Some(p) = &a.blur {
        let img = render_blurred(&scene, a.blur_noise, a.scene.seed).map_err(|e| CliError::core("synth-gen", e))?;
        write_atomic(p, &encode_pgm16(&img))?;
    }
    let local = scene.labels.iter().filter(|&&l| l == Label::LocalMotion).count();
    println!("correspondences={} local={}", scene.len(), local);
    Ok(())
}

fn select(input: &SmearInput, beta: f64) -> Result<Selection, Error> {
    match input {
        SmearInput::Field(f) => select_top_beta(f, beta),
        SmearInput::Scene(s) => select_top_beta_list(&s.correspondences, &s.sigmas, beta),
    }
}

fn cmd_estimate(a: &EstimateArgs, quiet: bool) -> CliResult {
    let cfg = a.ransac.config(a.seed)?;
    note(quiet, &format!("estimate: {} seed={}", a.ransac.describe(), a.seed));
    let input = read_smear_input(&a.input)?;
    let sel = select(&input, a.ransac.beta).map_err(|e| CliError::core("estimate", e))?;
    let report = estimate_selection(&sel, &cfg).map_err(|e| CliError::core("estimate", e))?;
    write_atomic(&a.output, report_to_text(&report).as_bytes())?;
    println!(
        "selected={} inliers={} median={}",
        sel.len(),
        report.inlier_count(),
        report.median_error()
    );
    Ok(())
}

fn cmd_eval(a: &EvalArgs, quiet: bool) -> CliResult {
    check(!a.threshold.is_nan() && a.threshold >= 0.0, "--threshold", a.threshold, "must be >= 0")?;
    note(quiet, &format!("eval: threshold={} curve_points=50 curve_range=[1e-3,1e2]", a.threshold));
    let f = read_f(&a.f)?;
    let scene = parse_scene(&read_text(&a.scene)?).map_err(|e| CliError::core(&a.scene.display().to_string(), e))?;
    let cs: Vec<_> = match a.label {
        Some(l) => {
            let want = Label::from(l);
            scene.correspondences.iter().zip(&scene.labels).filter(|(_, &k)| k == want).map(|(c, _)| *c).collect()
        }
        None => scene.correspondences.clone(),
    };
    let r = fm_eval(&cs, &f, a.threshold, &default_curve_grid()).map_err(|e| CliError::core("eval", e))?;
    if let Some(p) = &a.curve {
        write_atomic(p, curve_to_text(&r.curve).as_bytes())?;
    }
    println!("inliers={:.2} median={}", r.inlier_percent, r.median_serr);
    Ok(())
}

fn cmd_segment(a: &SegmentArgs, quiet: bool) -> CliResult {
    check(a.tau_seg > 0.0 && a.tau_seg.is_finite(), "--tau-seg", a.tau_seg, "must be > 0")?;
    check(!a.sigma_gate.is_nan(), "--sigma-gate", a.sigma_gate, "must be a number")?;
    note(quiet, &format!("segment: tau_seg={} sigma_gate={}", a.tau_seg, a.sigma_gate));
    let f = read_f(&a.f)?;
    let field = match read_smear_input(&a.field)? {
        SmearInput::Field(f) => f,
        SmearInput::Scene(s) => s
            .smear_field()
            .map_err(|e| CliError::core(&a.field.display().to_string(), e))?,
    };
    let cfg = MotionConfig { tau_seg: a.tau_seg, sigma_gate: a.sigma_gate };
    let mask = classify_motion(&field, &f, &cfg).map_err(|e| CliError::core("segment", e))?;
    let img = mask.map(|&m| match m {
        MASK_LOCAL => 255,
        MASK_UNKNOWN => 128,
        _ => 0,
    });
    write_atomic(&a.output, &encode_pgm8(&img))?;
    let local = mask.data().iter().filter(|&&m| m == MASK_LOCAL).count();
    let unknown = mask.data().iter().filter(|&&m| m == MASK_UNKNOWN).count();
    println!(
        "flagged={:.2}% local={} unknown={} total={}",
        100.0 * local as f64 / mask.len() as f64,
        local,
        unknown,
        mask.len()
    );
    Ok(())
}

fn cmd_render(a: &RenderArgs, quiet: bool) -> CliResult {
    let f = read_f(&a.f)?;
    let background = match &a.background {
        Some(p) => {
            let bytes = fs::read(p).map_err(|e| CliError::runtime(format!("cannot read {}: {e}", p.display())))?;
            Some(decode_gray(&bytes).map_err(|e| CliError::core(&p.display().to_string(), e))?)
        }
        None => None,
    };
    let (items, dims): (Vec<EpilineItem>, Option<(usize, usize)>) = match (&a.scene, &a.points) {
        (Some(p), _) => {
            let scene = parse_scene(&read_text(p)?).map_err(|e| CliError::core(&p.display().to_string(), e))?;
            (items_from_correspondences(&scene.correspondences, &f), Some((scene.width, scene.height)))
        }
        (None, Some(p)) => {
            let pts = parse_point_list(&read_text(p)?).map_err(|e| CliError::core(&p.display().to_string(), e))?;
            let side = match a.side {
                SideArg::Left => Side::Left,
                SideArg::Right => Side::Right,
            };
            (pts.into_iter().map(|point| EpilineItem { point, side, partner: None }).collect(), None)
        }
        (None, None) => return Err(CliError::config("invalid arguments: one of --points or --scene is required")),
    };
    let dims = dims.or(background.as_ref().map(|b| (b.width(), b.height())));
    let width = a.width.or(dims.map(|d| d.0));
    let height = a.height.or(dims.map(|d| d.1));
    let (Some(width), Some(height)) = (width, height) else {
        return Err(CliError::config("invalid arguments: --width and --height are required without a scene or background"));
    };
    check(width >= 1, "--width", width, "must be >= 1")?;
    check(height >= 1, "--height", height, "must be >= 1")?;
    note(quiet, &format!("render-epilines: width={width} height={height}"));
    let (img, stats) = render_epilines(background.as_ref(), width, height, &f, &items)
        .map_err(|e| CliError::core("render-epilines", e))?;
    write_atomic(&a.output, &encode_ppm(&img))?;
    if stats.degenerate > 0 {
        eprintln!("warning: skipped {} point(s) at an epipole", stats.degenerate);
    }
    println!("lines={} degenerate={} off_canvas={}", stats.lines, stats.degenerate, stats.off_canvas);
    Ok(())
}

fn cmd_bench(a: &BenchArgs, quiet: bool) -> CliResult {
    let base = a.scene.config()?;
    check(base.dense.is_none(), "--dense", true, "is not supported by bench")?;
    let rcfg = a.ransac.config(a.scene.seed)?;
    check(a.runs >= 1, "--runs", a.runs, "must be >= 1")?;
    check(!a.threshold.is_nan() && a.threshold >= 0.0, "--threshold", a.threshold, "must be >= 0")?;
    note(
        quiet,
        &format!("bench: {} {} runs={} threshold={}", a.scene.describe(), a.ransac.describe(), a.runs, a.threshold),
    );
    let mut out = String::from("seed\tinliers_pct\tglobal_inliers_pct\tmedian\tf_distance\n");
    let (mut total_all, mut total_global, mut total_median, mut total_dist) = (0.0, 0.0, 0.0, 0.0);
    let started = Instant::now();
    for seed in a.scene.seed..a.scene.seed + a.runs {
        let scene = generate_scene(&SceneConfig { seed, ..base.clone() }).map_err(|e| CliError::core("bench", e))?;
        let sel = select_top_beta_list(&scene.correspondences, &scene.sigmas, a.ransac.beta)
            .map_err(|e| CliError::core("bench", e))?;
        let report = estimate_selection(&sel, &RansacConfig { seed, ..rcfg.clone() })
            .map_err(|e| CliError::core("bench", e))?;
        let grid = default_curve_grid();
        let all = fm_eval(&scene.correspondences, &report.f, a.threshold, &grid).map_err(|e| CliError::core("bench", e))?;
        let globals: Vec<_> = scene
            .correspondences
            .iter()
            .zip(&scene.labels)
            .filter(|(_, &l)| l == Label::Global)
            .map(|(c, _)| *c)
            .collect();
        let global_pct = fm_eval(&globals, &report.f, a.threshold, &grid)
            .map(|r| r.inlier_percent)
            .unwrap_or(f64::NAN);
        let dist = report.f.ambiguity_distance(&scene.f_gt);
        total_all += all.inlier_percent;
        total_median += all.median_serr;
        total_dist += dist;
        total_global += global_pct;
        out += &format!("{seed}\t{:.2}\t{:.2}\t{}\t{:e}\n", all.inlier_percent, global_pct, all.median_serr, dist);
    }
    let n = a.runs as f64;
    out += &format!(
        "# mean\t{:.2}\t{:.2}\t{}\t{:e}\n",
        total_all / n,
        total_global / n,
        total_median / n,
        total_dist / n
    );
    match &a.output {
        Some(p) => write_atomic(p, out.as_bytes())?,
        None => print!("{out}"),
    }
    // Timing goes to stderr so the table stays reproducible.
    note(quiet, &format!("bench: {:.3} s per run", started.elapsed().as_secs_f64() / n));
    Ok(())
}

fn run(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::SynthGen(a) => cmd_synth_gen(a, cli.quiet),
        Command::Estimate(a) => cmd_estimate(a, cli.quiet),
        Command::Eval(a) => cmd_eval(a, cli.quiet),
        Command::Segment(a) => cmd_segment(a, cli.quiet),
        Command::RenderEpilines(a) => cmd_render(a, cli.quiet),
        Command::Bench(a) => cmd_bench(a, cli.quiet),
    }
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors, matching the config-error code.
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.msg);
            ExitCode::from(e.code)
        }
    }
}
