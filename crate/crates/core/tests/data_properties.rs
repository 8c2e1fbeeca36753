use privgaze_core::data::augment::{adjust_photometric, crop};
use privgaze_core::data::{audit_blur, augment, blur_face, flip_horizontal, synth_samples, AugmentConfig, BoundingBox, GazeSample, SceneImage, SynthConfig};
use privgaze_core::pose::{normalize_keypoints, select_upper_body, JointLayout, Keypoints2D};
use proptest::prelude::*;
use std::sync::OnceLock;

fn samples() -> &'static [GazeSample] {
    static S: OnceLock<Vec<GazeSample>> = OnceLock::new();
    S.get_or_init(|| {
        let cfg = SynthConfig {
            count: 16,
            ..SynthConfig::default()
        };
        synth_samples(&cfg, 21).unwrap().into_iter().map(|(s, _)| s).collect()
    })
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

fn geometric_fields(s: &GazeSample) -> Vec<f64> {
    let mut v = vec![s.intrinsics.fx, s.intrinsics.fy, s.intrinsics.cx, s.intrinsics.cy];
    v.extend(<[f64; 4]>::from(s.head_box));
    v.extend(s.eye_2d);
    v.extend(s.eye_3d.iter());
    v.extend(s.gt_gaze.to_array());
    v.extend(s.gt_target_2d);
    v.extend(s.gt_target_3d.iter());
    v.extend(s.keypoints.joints().iter().flatten());
    v
}

fn pose() -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::vec(prop::array::uniform2(-500.0f64..500.0), 13).prop_filter("non-degenerate", |j| {
        let neck = [(j[5][0] + j[6][0]) / 2.0, (j[5][1] + j[6][1]) / 2.0];
        let hip = [(j[11][0] + j[12][0]) / 2.0, (j[11][1] + j[12][1]) / 2.0];
        (neck[0] - hip[0]).hypot(neck[1] - hip[1]) > 1.0
    })
}

fn dyadic_pose() -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::vec(prop::array::uniform2(-4096i32..4096), 13)
        .prop_map(|j| j.into_iter().map(|p| [p[0] as f64 / 8.0, p[1] as f64 / 8.0]).collect())
        .prop_filter("non-degenerate", |j: &Vec<[f64; 2]>| {
            (j[5][0] + j[6][0] - j[11][0] - j[12][0]).abs() + (j[5][1] + j[6][1] - j[11][1] - j[12][1]).abs() > 2.0
        })
}

proptest! {
    #[test]
    fn normalization_is_exactly_similarity_invariant_on_dyadic_inputs(
        j in dyadic_pose(), k in -3i32..4, tx in -512i32..512, ty in -512i32..512,
    ) {
        let a = 2f64.powi(k);
        let kp = Keypoints2D::new(JointLayout::Upper13, j.clone(), None).unwrap();
        let moved = kp.map_joints(|p| [a * p[0] + tx as f64, a * p[1] + ty as f64]).unwrap();
        prop_assert_eq!(normalize_keypoints(&kp).unwrap().joints, normalize_keypoints(&moved).unwrap().joints);
    }

    #[test]
    fn normalization_is_similarity_invariant_to_rounding(j in pose(), a in 0.1f64..10.0, t in prop::array::uniform2(-1e3f64..1e3)) {
        let kp = Keypoints2D::new(JointLayout::Upper13, j, None).unwrap();
        let moved = kp.map_joints(|p| [a * p[0] + t[0], a * p[1] + t[1]]).unwrap();
        let (x, y) = (normalize_keypoints(&kp).unwrap(), normalize_keypoints(&moved).unwrap());
        for (p, q) in x.joints.iter().zip(&y.joints) {
            prop_assert!((p[0] - q[0]).abs() < 1e-9 && (p[1] - q[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn normalization_invariants_and_round_trip(j in pose()) {
        let kp = Keypoints2D::new(JointLayout::Upper13, j.clone(), None).unwrap();
        let n = normalize_keypoints(&kp).unwrap();
        prop_assert_eq!(n.joints.len(), 13);
        prop_assert!(n.scale > 0.0);
        let neck = [(n.joints[5][0] + n.joints[6][0]) / 2.0, (n.joints[5][1] + n.joints[6][1]) / 2.0];
        let hip = [(n.joints[11][0] + n.joints[12][0]) / 2.0, (n.joints[11][1] + n.joints[12][1]) / 2.0];
        prop_assert!(neck[0].abs() < 1e-12 && neck[1].abs() < 1e-12);
        prop_assert!(((neck[0] - hip[0]).hypot(neck[1] - hip[1]) - 1.0).abs() < 1e-12);
        for (p, q) in n.denormalize().iter().zip(&j) {
            prop_assert!((p[0] - q[0]).abs() < 1e-6 && (p[1] - q[1]).abs() < 1e-6);
        }
    }

    #[test]
    fn rotation_is_not_normalized_away(j in pose(), theta in 0.3f64..2.8) {
        let kp = Keypoints2D::new(JointLayout::Upper13, j, None).unwrap();
        let (s, c) = theta.sin_cos();
        let rot = kp.map_joints(|p| [c * p[0] - s * p[1], s * p[0] + c * p[1]]).unwrap();
        let (a, b) = (normalize_keypoints(&kp).unwrap(), normalize_keypoints(&rot).unwrap());
        for (p, q) in a.joints.iter().zip(&b.joints) {
            prop_assert!((c * p[0] - s * p[1] - q[0]).abs() < 1e-9 && (s * p[0] + c * p[1] - q[1]).abs() < 1e-9);
        }
        let neck_to_hip = |n: &privgaze_core::pose::NormalizedPose| n.joints[11][1] + n.joints[12][1];
        prop_assert!((neck_to_hip(&a) - neck_to_hip(&b)).abs() > 1e-6);
    }

    #[test]
    fn flipping_twice_is_the_identity(i in 0usize..16, seed in any::<u64>()) {
        let s = augment(&samples()[i], seed, &AugmentConfig { flip_prob: 0.0, ..AugmentConfig::default() });
        let back = flip_horizontal(&flip_horizontal(&s));
        prop_assert_eq!(&back.scene, &s.scene);
        prop_assert_eq!(&back.depth, &s.depth);
        prop_assert!(close(&geometric_fields(&back), &geometric_fields(&s), 1e-6));
    }

    #[test]
    fn augmentation_preserves_sample_invariants(i in 0usize..16, seed in any::<u64>()) {
        let a = augment(&samples()[i], seed, &AugmentConfig::default());
        a.validate().unwrap();
        prop_assert_eq!(&a, &augment(&samples()[i], seed, &AugmentConfig::default()));
        // the target pixel still sees the target point
        let cloud = privgaze_core::geometry::unproject(&a.depth, &a.intrinsics).unwrap();
        let (u, v) = a.target_pixel();
        prop_assert!((cloud.point(u, v) - a.gt_target_3d).norm() < 1e-4);
        let (eu, ev) = privgaze_core::geometry::project(&a.eye_3d, &a.intrinsics).unwrap();
        prop_assert!((eu - a.eye_2d[0]).abs() < 1e-6 && (ev - a.eye_2d[1]).abs() < 1e-6);
    }

    #[test]
    fn blur_leaves_the_exterior_bit_identical(
        w in 4usize..40, h in 4usize..40, seed in any::<u64>(), b in prop::array::uniform4(0.0f64..1.0),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = (0..3 * w * h).map(|_| rng.random::<f32>()).collect();
        let img = SceneImage::new(w, h, data).unwrap();
        let (x0, x1) = (b[0].min(b[1]) * w as f64, b[0].max(b[1]) * w as f64);
        let (y0, y1) = (b[2].min(b[3]) * h as f64, b[2].max(b[3]) * h as f64);
        let bx = BoundingBox { x0, y0, x1, y1 };
        let out = blur_face(&img, &bx);
        let audit = audit_blur(&img, &out, &bx);
        prop_assert_eq!(audit.exterior_changed, 0);
    }
}

#[test]
fn flip_mirrors_gaze_x_only() {
    for s in samples() {
        let f = flip_horizontal(s);
        let (g, h) = (s.gt_gaze.to_array(), f.gt_gaze.to_array());
        assert!((h[0] + g[0]).abs() < 1e-12 && (h[1] - g[1]).abs() < 1e-12 && (h[2] - g[2]).abs() < 1e-12);
        // the person's left shoulder becomes the right one, mirrored
        let w = s.width() as f64;
        let (l, r) = (s.keypoints.joints()[5], f.keypoints.joints()[6]);
        assert!((r[0] - (w - 1.0 - l[0])).abs() < 1e-9 && r[1] == l[1]);
        f.validate().unwrap();
    }
}

#[test]
fn photometric_changes_touch_only_the_scene() {
    let s = &samples()[0];
    let mut b = s.clone();
    b.scene = adjust_photometric(&s.scene, 1.2, 0.9, 1.1);
    assert_ne!(b.scene, s.scene);
    let no_geometry = AugmentConfig {
        flip_prob: 0.0,
        crop_prob: 0.0,
        ..AugmentConfig::default()
    };
    let a = augment(s, 3, &no_geometry);
    assert_ne!(a.scene, s.scene);
    assert_eq!(a.depth, s.depth);
    assert_eq!(a.keypoints, s.keypoints);
    assert_eq!((a.gt_target_2d, a.gt_target_3d, a.gt_gaze), (s.gt_target_2d, s.gt_target_3d, s.gt_gaze));
    assert_eq!((a.head_box, a.eye_2d, a.eye_3d), (s.head_box, s.eye_2d, s.eye_3d));
}

#[test]
fn crops_that_drop_the_target_are_refused() {
    for s in samples() {
        let (tu, _) = s.target_pixel();
        let excluding = if tu > 0 { (0, 0, tu, s.height()) } else { (1, 0, s.width() - 1, s.height()) };
        assert!(crop(s, excluding).is_err());
        assert_eq!(crop(s, (0, 0, s.width(), s.height())).unwrap(), *s);
    }
}

#[test]
fn synthetic_faces_are_blurred_by_the_audit() {
    for s in samples() {
        let out = blur_face(&s.scene, &s.head_box);
        let audit = audit_blur(&s.scene, &out, &s.head_box);
        assert!(audit.passed(), "{}: {audit:?}", s.id);
    }
}

#[test]
fn upper_body_selection_drops_knees_for_synthetic_people() {
    let s = &samples()[0];
    let up = select_upper_body(&s.keypoints);
    assert_eq!(up.joints(), &s.keypoints.joints()[..13]);
}
