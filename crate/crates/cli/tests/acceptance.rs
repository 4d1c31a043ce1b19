//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Run with `cargo test -p smearfm-cli --test acceptance`.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use smearfm::epipolar::serr_min;
use smearfm::robust::{
    classify_motion, estimate_f, estimate_selection, select_top_beta_list, MotionConfig, RansacConfig,
    DEFAULT_TAU_SEG, MASK_LOCAL,
};
use smearfm::smear::{
    cross_check, decode_double_angle, encode_double_angle, epe_s, loss_gaussian_nll, loss_gaussian_nll_grad,
    loss_masked, loss_masked_grad, loss_masked_sigma, softplus, sparsification_curve, DoubleAngleVector,
    DEFAULT_ALPHA, DEFAULT_EPS_CR,
};
use smearfm::solver::{ambiguous_objective, sign_enumeration_oracle, solve_ambiguous_7pt};
use smearfm::synth::{generate_scene, make_flow_pair, DenseConfig, Label, SceneConfig, SyntheticScene};
use smearfm::{grid::Grid, rng, Correspondence, FundamentalMatrix, ImagePoint, SmearVector};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn split(scene: &SyntheticScene) -> (Vec<ImagePoint>, Vec<SmearVector>) {
    scene.correspondences.iter().map(|c| (c.midpoint, c.half_smear)).unzip()
}

fn dense_scene(seed: u64, noise: f64) -> SyntheticScene {
    generate_scene(&SceneConfig {
        width: 160,
        height: 120,
        noise_sigma_px: noise,
        seed,
        dense: Some(DenseConfig::default()),
        ..SceneConfig::default()
    })
    .expect("dense scene")
}

/// 50 noiseless scenes through the estimate path (top-35% selection, then
/// preemptive RANSAC), each timed on a single thread.
fn noiseless_recovery() -> Outcome {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let (mut ok, mut worst_dist, mut worst_time) = (0, 0.0f64, 0.0f64);
    for seed in 0..50 {
        let scene = generate_scene(&SceneConfig { n_points: 200, flip_probability: 0.5, seed, ..SceneConfig::default() })
            .unwrap();
        let started = Instant::now();
        let report = pool.install(|| {
            let sel = select_top_beta_list(&scene.correspondences, &scene.sigmas, 0.35).unwrap();
            estimate_selection(&sel, &RansacConfig { seed, ..RansacConfig::default() })
        });
        let secs = started.elapsed().as_secs_f64();
        worst_time = worst_time.max(secs);
        if let Ok(report) = report {
            let d = report.f.ambiguity_distance(&scene.f_gt);
            worst_dist = worst_dist.max(d);
            ok += usize::from(d <= 1e-4 && secs <= 2.0);
        }
    }
    outcome(
        ok == 50,
        format!("{ok}/50 within 1e-4 and 2 s (worst distance {worst_dist:.1e}, slowest run {worst_time:.2} s)"),
    )
}

fn robustness() -> Outcome {
    let results: Vec<(bool, f64, f64)> = (0..50u64)
        .into_par_iter()
        .map(|seed| {
            let scene = generate_scene(&SceneConfig {
                noise_sigma_px: 0.5,
                outlier_fraction: 0.3,
                seed,
                ..SceneConfig::default()
            })
            .unwrap();
            let (pts, sm) = split(&scene);
            let report = estimate_f(&pts, &sm, &RansacConfig { tau_se: 1.0, seed, ..RansacConfig::default() }).unwrap();
            let (mut gi, mut gt, mut oi, mut ot) = (0, 0, 0, 0);
            for (k, label) in scene.labels.iter().enumerate() {
                let inlier = report.inlier_mask[k];
                if *label == Label::Global {
                    gt += 1;
                    gi += usize::from(inlier);
                } else {
                    ot += 1;
                    oi += usize::from(inlier);
                }
            }
            let (g, o) = (gi as f64 / gt as f64, oi as f64 / ot as f64);
            (g >= 0.9 && o <= 0.1, g, o)
        })
        .collect();
    let ok = results.iter().filter(|r| r.0).count();
    let mean_g = results.iter().map(|r| r.1).sum::<f64>() / 50.0;
    let mean_o = results.iter().map(|r| r.2).sum::<f64>() / 50.0;
    outcome(
        ok >= 45,
        format!(
            "{ok}/50 trials with >=90% globals and <=10% outliers inlier (need 45; mean {:.1}% / {:.1}%)",
            100.0 * mean_g,
            100.0 * mean_o
        ),
    )
}

fn minimal_solver_oracle() -> Outcome {
    let noise_levels = [0.0, 0.3, 1.0, 3.0];
    let results: Vec<(f64, f64, f64)> = (0..100u64)
        .into_par_iter()
        .map(|k| {
            let noise = noise_levels[(k % 4) as usize];
            let scene = generate_scene(&SceneConfig {
                n_points: 7,
                noise_sigma_px: noise,
                seed: 1000 + k,
                ..SceneConfig::default()
            })
            .unwrap();
            let cs: [Correspondence; 7] = std::array::from_fn(|i| scene.correspondences[i]);
            let solved = solve_ambiguous_7pt(&cs).unwrap().objective;
            let oracle = sign_enumeration_oracle(&cs).unwrap().objective;
            (noise, solved, oracle)
        })
        .collect();
    let dominated = results.iter().filter(|(_, s, o)| *s <= o + 1e-9).count();
    let noiseless: Vec<_> = results.iter().filter(|r| r.0 == 0.0).collect();
    let exact = noiseless.iter().filter(|(_, s, o)| *s <= 1e-12 && *o <= 1e-12).count();
    outcome(
        dominated == 100 && exact == noiseless.len(),
        format!(
            "solver <= oracle + 1e-9 on {dominated}/100 tuples; noiseless both <= 1e-12 on {exact}/{}",
            noiseless.len()
        ),
    )
}

fn objective_symmetries() -> Outcome {
    let mut r = rng::stream(4, 0);
    let (mut flip_exact, mut transpose_exact) = (0, 0);
    let mut max_diff: f64 = 0.0;
    for _ in 0..10_000 {
        let cs: [Correspondence; 7] = std::array::from_fn(|_| {
            Correspondence::new(
                ImagePoint::new(r.random_range(0.0..640.0), r.random_range(0.0..480.0)),
                SmearVector::new(r.random_range(-30.0..30.0), r.random_range(-30.0..30.0)),
            )
        });
        let m: [f64; 9] = std::array::from_fn(|_| r.random_range(-1.0..1.0));
        let f = FundamentalMatrix::from_row_major(&m);
        let base = ambiguous_objective(&cs, &f);
        let mut flipped = cs;
        let mask: u8 = r.random_range(1..128);
        for (i, c) in flipped.iter_mut().enumerate() {
            if mask & (1 << i) != 0 {
                *c = c.flipped();
            }
        }
        let a = ambiguous_objective(&flipped, &f);
        let b = ambiguous_objective(&cs, &f.transpose());
        flip_exact += usize::from(a.to_bits() == base.to_bits());
        transpose_exact += usize::from(b.to_bits() == base.to_bits());
        let scale = base.abs().max(f64::MIN_POSITIVE);
        max_diff = max_diff.max((a - base).abs() / scale).max((b - base).abs() / scale);
    }
    outcome(
        flip_exact == 10_000 && transpose_exact == 10_000 && max_diff <= 1e-15,
        format!(
            "bitwise equal under row flips {flip_exact}/10000, under transpose {transpose_exact}/10000 (max relative gap {max_diff:.1e})"
        ),
    )
}

fn double_angle_codec() -> Outcome {
    let mut r = rng::stream(5, 0);
    let (mut sign_exact, mut worst_epe, mut worst_mag) = (0, 0.0f64, 0.0f64);
    for _ in 0..100_000 {
        let s = loop {
            let s = SmearVector::new(r.random_range(-100.0..100.0), r.random_range(-100.0..100.0));
            if s.norm() <= 100.0 {
                break s;
            }
        };
        let (e, en) = (encode_double_angle(s), encode_double_angle(-s));
        sign_exact += usize::from(e.u_prime.to_bits() == en.u_prime.to_bits() && e.v_prime.to_bits() == en.v_prime.to_bits());
        worst_epe = worst_epe.max(epe_s(decode_double_angle(e), s));
        if s.norm() > 0.0 {
            worst_mag = worst_mag.max((e.norm() - s.norm()).abs() / s.norm());
        }
    }
    outcome(
        sign_exact == 100_000 && worst_epe <= 1e-9 && worst_mag <= 1e-12,
        format!(
            "encode(s) = encode(-s) on {sign_exact}/100000; worst round-trip EPE-S {worst_epe:.1e}; worst magnitude error {worst_mag:.1e}"
        ),
    )
}

fn loss_gradients() -> Outcome {
    let mut r = rng::stream(6, 0);
    let h = 1e-5;
    let rel = |fd: f64, an: f64| (fd - an).abs() / an.abs().max(1e-2);
    let (mut checked, mut worst) = (0, 0.0f64);
    let mut equal_when_valid = true;
    while checked < 1000 {
        let d = |r: &mut rng::Rng| DoubleAngleVector { u_prime: r.random_range(-5.0..5.0), v_prime: r.random_range(-5.0..5.0) };
        let (pred, gt) = (d(&mut r), d(&mut r));
        let w: f64 = r.random_range(-3.0..4.0);
        let sigma = softplus(w);
        if (1.0 / (sigma * sigma) - DEFAULT_ALPHA).abs() <= 1e-3 {
            continue;
        }
        let m_cr = r.random_bool(0.5);
        let fns: [(&dyn Fn(DoubleAngleVector, f64) -> f64, smearfm::smear::LossGrad); 2] = [
            (&|p, w| loss_gaussian_nll(p, gt, w), loss_gaussian_nll_grad(pred, gt, w)),
            (&|p, w| loss_masked(p, gt, w, m_cr, DEFAULT_ALPHA), loss_masked_grad(pred, gt, w, m_cr, DEFAULT_ALPHA)),
        ];
        for (f, g) in fns {
            let du = (f(DoubleAngleVector { u_prime: pred.u_prime + h, ..pred }, w)
                - f(DoubleAngleVector { u_prime: pred.u_prime - h, ..pred }, w))
                / (2.0 * h);
            let dv = (f(DoubleAngleVector { v_prime: pred.v_prime + h, ..pred }, w)
                - f(DoubleAngleVector { v_prime: pred.v_prime - h, ..pred }, w))
                / (2.0 * h);
            let dw = (f(pred, w + h) - f(pred, w - h)) / (2.0 * h);
            worst = worst.max(rel(du, g.d_u)).max(rel(dv, g.d_v)).max(rel(dw, g.d_w));
        }
        equal_when_valid &= loss_masked(pred, gt, w, true, DEFAULT_ALPHA).to_bits()
            == loss_gaussian_nll(pred, gt, w).to_bits();
        checked += 1;
    }
    let origin = DoubleAngleVector { u_prime: 0.0, v_prime: 0.0 };
    // σ = 10 gives σ² = 1/α exactly for α = 0.01.
    let margin = loss_masked_sigma(origin, origin, 10.0, false, 0.01);
    outcome(
        worst <= 1e-5 && equal_when_valid && margin == 0.0,
        format!(
            "worst relative gradient error {worst:.1e} over 1000 points; masked = plain at m=1: {equal_when_valid}; margin loss {margin}"
        ),
    )
}

fn cross_check_criterion() -> Outcome {
    // Mutually inverse constant flows.
    let (w, h) = (40, 30);
    let fw = Grid::filled(w, h, [5.0, 0.0]);
    let bw = Grid::filled(w, h, [-5.0, 0.0]);
    let (_, mask) = cross_check(&fw, &bw, DEFAULT_EPS_CR).unwrap();
    let interior_ones = (0..h).all(|y| (5..w - 5).all(|x| *mask.get(x, y) == 1));

    // Generator scenes at zero noise.
    let stats: Vec<[usize; 6]> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let scene = dense_scene(seed, 0.0);
            let pair = make_flow_pair(&scene).unwrap();
            let (_, mask) = cross_check(&pair.fw, &pair.bw, DEFAULT_EPS_CR).unwrap();
            // [valid, agreeing, occluded, flagged, occluded at edges, flagged at edges]
            let mut s = [0usize; 6];
            for y in 0..scene.height {
                for x in 0..scene.width {
                    let zero = usize::from(*mask.get(x, y) == 0);
                    if pair.consistent(x, y) {
                        s[0] += 1;
                        s[1] += 1 - zero;
                    } else if *pair.occluded.get(x, y) && *pair.occlusion_gap.get(x, y) > DEFAULT_EPS_CR {
                        // Bilinear lookups that straddle the occluding edge
                        // blend both surfaces' flows; those are reported apart.
                        let k = if *pair.discontinuity.get(x, y) { 4 } else { 2 };
                        s[k] += 1;
                        s[k + 1] += zero;
                    }
                }
            }
            s
        })
        .collect();
    let total = stats.iter().fold([0usize; 6], |mut a, s| {
        a.iter_mut().zip(s.iter()).for_each(|(t, v)| *t += v);
        a
    });
    let [valid, agree, occ, flagged, edge, edge_flagged] = total;
    let worst_scene = stats.iter().map(|s| s[1] as f64 / s[0] as f64).fold(1.0, f64::min);
    outcome(
        interior_ones && worst_scene >= 0.99 && occ > 0 && flagged == occ,
        format!(
            "constant inverse flows all-ones interior: {interior_ones}; agreement {:.2}% (worst scene {:.2}%); occlusions flagged {flagged}/{occ} (at depth edges {edge_flagged}/{edge}, not asserted)",
            100.0 * agree as f64 / valid as f64,
            100.0 * worst_scene
        ),
    )
}

fn segmentation() -> Outcome {
    let margin = 10.0 * DEFAULT_TAU_SEG;
    let stats: Vec<(f64, f64, f64, bool)> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let scene = dense_scene(seed, 0.0);
            let field = scene.smear_field().unwrap();
            let cfg = MotionConfig::default();
            let mask = classify_motion(&field, &scene.f_gt, &cfg).unwrap();
            let mask_t = classify_motion(&field, &scene.f_gt.transpose(), &cfg).unwrap();
            let (mut tp, mut pos, mut fp, mut neg, mut sep) = (0, 0, 0, 0, f64::INFINITY);
            for (i, label) in scene.labels.iter().enumerate() {
                let local = mask.data()[i] == MASK_LOCAL;
                match label {
                    Label::LocalMotion => {
                        pos += 1;
                        tp += usize::from(local);
                        sep = sep.min(serr_min(&scene.correspondences[i], &scene.f_gt).0);
                    }
                    Label::Global => {
                        neg += 1;
                        fp += usize::from(local);
                    }
                    Label::Noise => {}
                }
            }
            (tp as f64 / pos as f64, fp as f64 / neg as f64, sep, mask == mask_t)
        })
        .collect();
    let min_recall = stats.iter().map(|s| s.0).fold(1.0, f64::min);
    let max_fpr = stats.iter().map(|s| s.1).fold(0.0, f64::max);
    let min_sep = stats.iter().map(|s| s.2).fold(f64::INFINITY, f64::min);
    let transpose_equal = stats.iter().all(|s| s.3);
    outcome(
        min_sep >= margin && min_recall >= 0.95 && max_fpr <= 0.05 && transpose_equal,
        format!(
            "20 scenes: min separation {min_sep:.1} (need {margin}); worst recall {:.1}%; worst false positives {:.2}%; mask(F) = mask(Fᵀ): {transpose_equal}",
            100.0 * min_recall,
            100.0 * max_fpr
        ),
    )
}

fn sparsification() -> Outcome {
    let fractions: Vec<f64> = (0..10).map(|k| k as f64 / 10.0).collect();
    let ok = (0..50u64)
        .into_par_iter()
        .filter(|&seed| {
            let scene = dense_scene(seed, 0.5);
            let field = scene.smear_field().unwrap();
            let gt = scene.gt_smear_field().unwrap();
            let errors: Vec<f64> = field.data().iter().zip(gt.data()).map(|(r, g)| epe_s(r.smear(), *g)).collect();
            let sigmas: Vec<f64> = field.data().iter().map(|r| r.sigma).collect();
            let curve = sparsification_curve(&errors, &sigmas, &fractions).unwrap();
            curve.windows(2).all(|w| w[1].1 <= w[0].1)
        })
        .count();
    outcome(ok >= 45, format!("{ok}/50 fields with a non-increasing curve (need 45)"))
}

fn run_cli(dir: &Path, args: &[&str]) -> (i32, Vec<u8>) {
    let out = Command::new(env!("CARGO_BIN_EXE_smearfm"))
        .current_dir(dir)
        .arg("--quiet")
        .args(args)
        .output()
        .expect("run smearfm");
    (out.status.code().unwrap_or(-1), out.stdout)
}

fn cli_determinism() -> Outcome {
    let runs: [(&str, &[&str], &[&str]); 6] = [
        (
            "synth-gen",
            &["synth-gen", "--n-points", "200", "--noise", "0.5", "--outliers", "0.3", "--seed", "7", "-o", "scene.txt"],
            &["scene.txt"],
        ),
        (
            "synth-gen --dense",
            &[
                "synth-gen", "--dense", "--width", "64", "--height", "48", "--noise", "0.5", "--seed", "3", "-o", "dense.txt",
                "--smear-field", "dense.sf", "--flow", "dense.fw", "--flow-bw", "dense.bw", "--blur", "blur.pgm",
                "--blur-noise", "0.01",
            ],
            &["dense.txt", "dense.sf", "dense.fw", "dense.bw", "blur.pgm"],
        ),
        ("estimate", &["estimate", "scene.txt", "-o", "report.txt", "--seed", "7"], &["report.txt"]),
        ("eval", &["eval", "--scene", "scene.txt", "--f", "report.txt", "--curve", "curve.txt"], &["curve.txt"]),
        ("segment", &["segment", "--field", "dense.sf", "--f", "dense.txt", "-o", "mask.pgm"], &["mask.pgm"]),
        (
            "render-epilines",
            &["render-epilines", "--f", "report.txt", "--scene", "scene.txt", "-o", "lines.ppm"],
            &["lines.ppm"],
        ),
    ];
    let bench: (&str, &[&str], &[&str]) =
        ("bench", &["bench", "--runs", "2", "--seed", "1", "--noise", "0.5", "--outliers", "0.3", "-o", "bench.tsv"], &["bench.tsv"]);
    let capture = |dir: &Path| -> Result<Vec<Vec<u8>>, String> {
        let mut out = Vec::new();
        for (name, args, files) in runs.iter().chain(std::iter::once(&bench)) {
            let (code, stdout) = run_cli(dir, args);
            if code != 0 {
                return Err(format!("{name} exited with {code}"));
            }
            out.push(stdout);
            for f in *files {
                out.push(std::fs::read(dir.join(f)).map_err(|e| format!("{name}: {f}: {e}"))?);
            }
        }
        Ok(out)
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    match (capture(a.path()), capture(b.path())) {
        (Ok(x), Ok(y)) => {
            let same = x == y;
            outcome(same, format!("7 subcommands, {} outputs byte-identical across two runs: {same}", x.len()))
        }
        (Err(e), _) | (_, Err(e)) => outcome(false, e),
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("noiseless recovery", noiseless_recovery),
        ("robustness to noise and local motion", robustness),
        ("minimal solver vs sign enumeration", minimal_solver_oracle),
        ("objective symmetries", objective_symmetries),
        ("double-angle codec", double_angle_codec),
        ("loss gradients", loss_gradients),
        ("cross-check", cross_check_criterion),
        ("segmentation", segmentation),
        ("sparsification", sparsification),
        ("CLI determinism", cli_determinism),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let o = check();
        failed += usize::from(!o.pass);
        println!(
            "{} {:>2} {name}: {} [{:.1} s]",
            if o.pass { "PASS" } else { "FAIL" },
            k + 1,
            o.detail,
            started.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
