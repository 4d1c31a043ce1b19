use proptest::prelude::*;
use smearfm::epipolar::{ambiguous_residual_pair, normalize_rank2, serr_min, Mat3};
use smearfm::eval::{default_curve_grid, epe_s_summary, fm_eval};
use smearfm::grid::Grid;
use smearfm::robust::{classify_motion, select_top_beta_indices, MotionConfig};
use smearfm::smear::{decode_double_angle, encode_double_angle, epe_s, sparsification_curve, SmearRecord};
use smearfm::solver::ambiguous_objective;
use smearfm::synth::{frame_average, generate_scene, SceneConfig};
use smearfm::{Correspondence, FundamentalMatrix, ImagePoint, SmearVector};

fn coord() -> impl Strategy<Value = f64> {
    -700.0..700.0f64
}

fn smear_component() -> impl Strategy<Value = f64> {
    -100.0..100.0f64
}

fn correspondence() -> impl Strategy<Value = Correspondence> {
    (coord(), coord(), smear_component(), smear_component())
        .prop_map(|(x, y, u, v)| Correspondence::new(ImagePoint::new(x, y), SmearVector::new(u, v)))
}

fn matrix() -> impl Strategy<Value = Mat3> {
    prop::array::uniform9(-1.0..1.0f64).prop_map(|v| Mat3::from_row_slice(&v))
}

fn fmat() -> impl Strategy<Value = FundamentalMatrix> {
    matrix().prop_filter_map("rank deficient", |m| normalize_rank2(&m).ok())
}

proptest! {
    #[test]
    fn serr_min_transpose_symmetry(c in correspondence(), f in fmat()) {
        prop_assert_eq!(serr_min(&c, &f).0.to_bits(), serr_min(&c, &f.transpose()).0.to_bits());
    }

    #[test]
    fn serr_min_sign_symmetry(c in correspondence(), f in fmat()) {
        let (e, d) = serr_min(&c, &f);
        let (ef, df) = serr_min(&c.flipped(), &f);
        prop_assert_eq!(e.to_bits(), ef.to_bits());
        // Ties keep StartToEnd on both sides.
        let (a, b) = ambiguous_residual_pair(&c, &f);
        if a != b {
            prop_assert_eq!(df, d.flipped());
        }
    }

    #[test]
    fn residual_pair_swaps_exactly(c in correspondence(), f in fmat()) {
        let (a, b) = ambiguous_residual_pair(&c, &f);
        let (fa, fb) = ambiguous_residual_pair(&c.flipped(), &f);
        prop_assert_eq!(a.to_bits(), fb.to_bits());
        prop_assert_eq!(b.to_bits(), fa.to_bits());
    }

    #[test]
    fn normalize_rank2_constraints(m in matrix(), scale in 1e-3..1e3f64) {
        if let Ok(f) = normalize_rank2(&(m * scale)) {
            prop_assert!(f.matrix().determinant().abs() <= 1e-9);
            prop_assert!((f.matrix().norm() - 1.0).abs() <= 1e-12);
            let again = normalize_rank2(f.matrix()).unwrap();
            prop_assert!((again.matrix() - f.matrix()).norm() <= 1e-12);
        }
    }

    #[test]
    fn double_angle_codec(u in smear_component(), v in smear_component()) {
        let s = SmearVector::new(u, v);
        let e = encode_double_angle(s);
        let en = encode_double_angle(-s);
        prop_assert_eq!(e.u_prime.to_bits(), en.u_prime.to_bits());
        prop_assert_eq!(e.v_prime.to_bits(), en.v_prime.to_bits());
        let n = s.norm();
        prop_assert!((e.norm() - n).abs() <= 1e-12 * n.max(f64::MIN_POSITIVE));
        prop_assert!(epe_s(decode_double_angle(e), s) <= 1e-9);
    }

    #[test]
    fn epe_s_metric_properties(a in (smear_component(), smear_component()), b in (smear_component(), smear_component())) {
        let (p, g) = (SmearVector::new(a.0, a.1), SmearVector::new(b.0, b.1));
        prop_assert_eq!(epe_s(p, g), epe_s(g, p));
        prop_assert!(epe_s(p, g) >= 0.0);
        prop_assert_eq!(epe_s(p, p), 0.0);
        prop_assert_eq!(epe_s(p, -p), 0.0);
    }

    #[test]
    fn ambiguous_objective_symmetries(cs in prop::array::uniform7(correspondence()), f in fmat(), mask in 0u8..128) {
        let base = ambiguous_objective(&cs, &f);
        let mut flipped = cs;
        for (i, c) in flipped.iter_mut().enumerate() {
            if mask & (1 << i) != 0 {
                *c = c.flipped();
            }
        }
        prop_assert_eq!(base.to_bits(), ambiguous_objective(&flipped, &f).to_bits());
        prop_assert_eq!(base.to_bits(), ambiguous_objective(&cs, &f.transpose()).to_bits());
    }

    #[test]
    fn selection_is_monotone_in_beta(sigmas in prop::collection::vec(0.01..5.0f64, 1..200), b1 in 0.01..1.0f64, b2 in 0.01..1.0f64) {
        let (lo, hi) = if b1 <= b2 { (b1, b2) } else { (b2, b1) };
        let small = select_top_beta_indices(&sigmas, lo).unwrap();
        let large = select_top_beta_indices(&sigmas, hi).unwrap();
        prop_assert!(small.iter().all(|i| large.contains(i)));
        // Every selected sigma is no larger than every unselected one.
        let max_sel = large.iter().map(|&i| sigmas[i]).fold(f64::NEG_INFINITY, f64::max);
        let min_rest = (0..sigmas.len()).filter(|i| !large.contains(i)).map(|i| sigmas[i]).fold(f64::INFINITY, f64::min);
        prop_assert!(max_sel <= min_rest);
    }

    #[test]
    fn fm_eval_invariances(cs in prop::collection::vec(correspondence(), 1..50), f in fmat()) {
        let grid = default_curve_grid();
        let r = fm_eval(&cs, &f, 3.0, &grid).unwrap();
        prop_assert_eq!(&r, &fm_eval(&cs, &f.transpose(), 3.0, &grid).unwrap());
        let flipped: Vec<_> = cs.iter().map(|c| c.flipped()).collect();
        prop_assert_eq!(&r, &fm_eval(&flipped, &f, 3.0, &grid).unwrap());
        prop_assert!((0.0..=100.0).contains(&r.inlier_percent));
        prop_assert!(r.curve.windows(2).all(|w| w[0].1 <= w[1].1));
        // At an unbounded threshold the curve counts every finite error.
        let finite = cs.iter().filter(|c| serr_min(c, &f).0.is_finite()).count() as f64 / cs.len() as f64;
        let top = fm_eval(&cs, &f, 3.0, &[f64::MAX]).unwrap().curve[0].1;
        prop_assert_eq!(top, finite);
    }

    #[test]
    fn epe_s_summary_full_fraction_is_plain_mean(data in prop::collection::vec((smear_component(), smear_component(), smear_component(), smear_component(), 0.01..3.0f64), 1..40)) {
        let n = data.len();
        let pred = Grid::from_vec(n, 1, data.iter().map(|d| SmearRecord { u: d.0, v: d.1, sigma: d.4 }).collect()).unwrap();
        let gt = Grid::from_vec(n, 1, data.iter().map(|d| SmearVector::new(d.2, d.3)).collect()).unwrap();
        let mean: f64 = data.iter().map(|d| epe_s(SmearVector::new(d.0, d.1), SmearVector::new(d.2, d.3))).sum::<f64>() / n as f64;
        let got = epe_s_summary(&pred, &gt, 1.0).unwrap();
        prop_assert!((got - mean).abs() <= 1e-12 * mean.max(1.0));
    }

    #[test]
    fn sparsification_starts_at_one_and_decreases_for_ordered_errors(mut errors in prop::collection::vec(0.0..10.0f64, 2..100)) {
        errors.sort_by(f64::total_cmp);
        let sigmas: Vec<f64> = (0..errors.len()).map(|i| i as f64).collect();
        let fr: Vec<f64> = (0..10).map(|k| k as f64 / 10.0).collect();
        let curve = sparsification_curve(&errors, &sigmas, &fr).unwrap();
        prop_assert_eq!(curve[0].1, 1.0);
        prop_assert!(curve.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-12));
    }

    #[test]
    fn motion_mask_ignores_transpose(data in prop::collection::vec((smear_component(), smear_component(), 0.01..3.0f64), 16), f in fmat()) {
        let field = Grid::from_vec(4, 4, data.iter().map(|d| SmearRecord { u: d.0 * 0.1, v: d.1 * 0.1, sigma: d.2 }).collect()).unwrap();
        let cfg = MotionConfig::default();
        prop_assert_eq!(classify_motion(&field, &f, &cfg).unwrap(), classify_motion(&field, &f.transpose(), &cfg).unwrap());
    }

    #[test]
    fn frame_average_is_permutation_invariant(frames in prop::collection::vec(prop::collection::vec(0.0..1.0f64, 6), 1..8), rot in 0usize..8) {
        let grids: Vec<_> = frames.iter().map(|f| Grid::from_vec(3, 2, f.clone()).unwrap()).collect();
        let mut shuffled = grids.clone();
        shuffled.rotate_left(rot % grids.len());
        shuffled.reverse();
        prop_assert_eq!(frame_average(&grids, 0.0, 1).unwrap(), frame_average(&shuffled, 0.0, 1).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn scenes_are_pure_functions_of_config(seed in any::<u64>(), noise in 0.0..2.0f64, outliers in 0.0..0.5f64) {
        let cfg = SceneConfig { n_points: 50, noise_sigma_px: noise, outlier_fraction: outliers, seed, ..SceneConfig::default() };
        let a = generate_scene(&cfg).unwrap();
        prop_assert_eq!(&a, &generate_scene(&cfg).unwrap());
        prop_assert_eq!(a.len(), 50);
    }

    #[test]
    fn noiseless_globals_vanish_under_ground_truth(seed in any::<u64>()) {
        let scene = generate_scene(&SceneConfig { n_points: 30, seed, ..SceneConfig::default() }).unwrap();
        for c in &scene.correspondences {
            prop_assert!(serr_min(c, &scene.f_gt).0 <= 1e-9);
            for p in [c.start(), c.end()] {
                prop_assert!(p.x >= 0.0 && p.y >= 0.0 && p.x <= scene.width as f64 && p.y <= scene.height as f64);
            }
        }
        let tuple: [Correspondence; 7] = std::array::from_fn(|i| scene.correspondences[i]);
        prop_assert!(ambiguous_objective(&tuple, &scene.f_gt) <= 1e-12);
    }
}
