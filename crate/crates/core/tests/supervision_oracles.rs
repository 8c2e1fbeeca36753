use privgaze_core::geometry::Vec3;
use privgaze_core::supervision::{
    gaussian_gt_heatmap, gaze_loss, metric_angle, metric_auc, metric_dist2d, metric_dist3d, total_loss, LossWeights,
    MetricReport,
};
use privgaze_core::Grid;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// ROC by sweeping every distinct score as a threshold (score >= t is
/// predicted positive) and integrating with the trapezoid rule.
fn roc_auc_sweep(scores: &[f64], positive: usize) -> f64 {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let negatives = (scores.len() - 1) as f64;
    let mut pts = vec![(0.0, 0.0)];
    for t in thresholds {
        let tp = if scores[positive] >= t { 1.0 } else { 0.0 };
        let fp = scores.iter().enumerate().filter(|(i, s)| *i != positive && **s >= t).count() as f64;
        pts.push((fp / negatives, tp));
    }
    pts.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0).sum()
}

fn unit(v: [f64; 3]) -> Vec3 {
    Vec3::from(v).normalize()
}

fn acos_oracle(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let na = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    let nb = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0).acos() * 180.0 / std::f64::consts::PI
}

#[test]
fn auc_matches_threshold_sweep_on_random_heatmaps() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..1000 {
        // coarse values so ties actually occur
        let levels = if trial % 2 == 0 { 5 } else { 1000 };
        let h = Grid::from_fn(8, 8, |_, _| rng.random_range(0..levels) as f64 / levels as f64);
        let (u, v) = (rng.random_range(0..8), rng.random_range(0..8));
        let got = metric_auc(&h, (u, v), (8, 8)).unwrap();
        let want = roc_auc_sweep(h.data(), v * 8 + u);
        assert!((got - want).abs() < 1e-9, "trial {trial}: {got} vs {want}");
    }
}

#[test]
fn auc_on_resized_heatmap_matches_sweep_of_the_resized_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..50 {
        let h = Grid::from_fn(8, 8, |_, _| rng.random::<f64>());
        let (u, v) = (rng.random_range(0..20), rng.random_range(0..12));
        let got = metric_auc(&h, (u, v), (20, 12)).unwrap();
        let big = h.resize_bilinear(20, 12);
        assert!((got - roc_auc_sweep(big.data(), v * 20 + u)).abs() < 1e-9);
    }
}

#[test]
fn loss_and_angle_are_consistent_over_random_unit_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut draw = || [0; 3].map(|_: i32| rng.random_range(-1.0..1.0));
    for _ in 0..10_000 {
        let (a, b) = (draw(), draw());
        let (ua, ub) = (unit(a), unit(b));
        let angle = metric_angle(&ua, &ub).unwrap();
        assert!((angle - acos_oracle(a, b)).abs() < 1e-9);
        let loss = gaze_loss(&ua, &ub).unwrap();
        assert!((loss - (1.0 - angle.to_radians().cos())).abs() < 1e-9);
    }
}

proptest! {
    #[test]
    fn auc_is_invariant_to_monotone_transforms(values in prop::collection::vec(0.0f64..1.0, 64), pos in 0usize..64) {
        let h = Grid::from_vec(8, 8, values).unwrap();
        let base = metric_auc(&h, (pos % 8, pos / 8), (8, 8)).unwrap();
        for f in [|x: f64| x.powi(3), |x: f64| x.exp(), |x: f64| 3.0 * x + 1.0] {
            prop_assert_eq!(metric_auc(&h.map(|x| f(*x)), (pos % 8, pos / 8), (8, 8)).unwrap(), base);
        }
    }

    #[test]
    fn total_loss_is_linear(a in 0.0f64..10.0, b in 0.0f64..10.0, c in 0.0f64..10.0, k in 0.0f64..5.0) {
        let w = LossWeights::default();
        let lhs = total_loss(a + k * c, b, &w);
        let rhs = total_loss(a, b, &w) + k * total_loss(c, 0.0, &w);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0));
        let lhs = total_loss(a, b + k * c, &w);
        let rhs = total_loss(a, b, &w) + k * total_loss(0.0, c, &w);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0));
    }

    #[test]
    fn gaussian_mass_grows_with_sigma(col in 0i64..64, row in 0i64..64, s in 0.2f64..10.0, ds in 0.01f64..5.0) {
        let a = gaussian_gt_heatmap(col, row, 64, s).unwrap().sum();
        let b = gaussian_gt_heatmap(col, row, 64, s + ds).unwrap().sum();
        prop_assert!(b > a);
    }

    #[test]
    fn distances_and_angles_are_symmetric(a in prop::array::uniform3(-5.0f64..5.0), b in prop::array::uniform3(-5.0f64..5.0)) {
        let (a, b) = (Vec3::from(a), Vec3::from(b));
        prop_assert_eq!(metric_dist3d(&a, &b), metric_dist3d(&b, &a));
        let oracle = ((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + (a.z - b.z).powi(2)).sqrt();
        prop_assert!((metric_dist3d(&a, &b) - oracle).abs() < 1e-9);
        prop_assume!(a.norm() > 1e-6 && b.norm() > 1e-6);
        prop_assert_eq!(metric_angle(&a, &b).unwrap(), metric_angle(&b, &a).unwrap());
    }

    #[test]
    fn dist2d_is_bounded_by_half_a_cell_diagonal_at_the_peak(x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let col = ((x * 64.0) as i64).min(63);
        let row = ((y * 64.0) as i64).min(63);
        let h = gaussian_gt_heatmap(col, row, 64, 3.0).unwrap();
        prop_assert!(metric_dist2d(&h, (x, y)) <= 2f64.sqrt() / 128.0 + 1e-12);
    }

    #[test]
    fn metric_reports_round_trip(d in 0.0f64..10.0, a in 0.0f64..180.0, u in 0.0f64..1.0, e in 0.0f64..1.5) {
        let r = MetricReport { dist_3d: d, angle_error: a, auc: u, dist_2d: e };
        prop_assert_eq!(r.to_string().parse::<MetricReport>().unwrap(), r);
    }
}
