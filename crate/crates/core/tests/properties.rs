use proptest::prelude::*;

use posecal::calibration::{estimate_homography, extrinsics_from_homography, DetectedFrame, Observation};
use posecal::geometry::{
    decompose_pose, euler_to_rotation, project_board, rotation_to_euler, BoardSpec, CameraModel, CameraTruth,
    Distortion, Intrinsics, Pose,
};
use posecal::search::{iod, Loss, SaConfig};
use posecal::session::{format_number, is_converged, pose_match, variance_ratio, Tolerances};

fn pose_strategy() -> impl Strategy<Value = Pose> {
    (
        -1.2f64..1.2,
        -1.2f64..1.2,
        -3.1f64..3.1,
        -200.0f64..200.0,
        -200.0f64..200.0,
        300.0f64..3000.0,
    )
        .prop_map(|(a, b, c, x, y, z)| Pose::new(a, b, c, x, y, z))
}

proptest! {
    #[test]
    fn decomposition_ends_at_the_pose(p in pose_strategy()) {
        let steps = decompose_pose(&p);
        prop_assert_eq!(steps[3].to_array(), p.to_array());
        prop_assert_eq!(steps[0].to_array()[..3].to_vec(), vec![0.0; 3]);
        for s in &steps {
            prop_assert_eq!(s.to_array()[3..].to_vec(), p.to_array()[3..].to_vec());
        }
    }

    #[test]
    fn euler_angles_round_trip(a in -1.5f64..1.5, b in -1.5f64..1.5, c in -3.1f64..3.1) {
        let r = euler_to_rotation(a, b, c);
        let e = rotation_to_euler(&r);
        let back = euler_to_rotation(e.xr, e.yr, e.zr);
        prop_assert!((r - back).amax() < 1e-9);
        prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn undistortion_inverts_distortion(x in -0.4f64..0.4, y in -0.3f64..0.3) {
        let d = CameraTruth::default().distortion;
        let (xd, yd) = d.distort(x, y);
        let (ux, uy) = d.undistort(xd, yd).unwrap();
        let (rx, ry) = d.distort(ux, uy);
        prop_assert!((rx - xd).hypot(ry - yd) <= 1e-8);
        prop_assert!((ux - x).abs() < 1e-7 && (uy - y).abs() < 1e-7, "({ux}, {uy}) vs ({x}, {y})");
    }

    #[test]
    fn visible_boards_project_inside_the_image(p in pose_strategy()) {
        let truth = CameraTruth::default();
        let proj = project_board(&BoardSpec::default(), &p, &truth.model(), truth.image);
        if proj.visible {
            prop_assert_eq!(proj.corners.len(), BoardSpec::default().corner_count());
            for c in &proj.corners {
                prop_assert!(truth.image.contains(c.u, c.v, 0.0));
            }
        }
    }

    #[test]
    fn homography_pose_is_exact_without_distortion(p in pose_strategy()) {
        let model = CameraModel::new(Intrinsics::new(1068.0, 1073.0, 635.0, 355.0), Distortion::ZERO);
        let board = BoardSpec::default();
        let proj = project_board(&board, &p, &model, CameraTruth::default().image);
        prop_assume!(proj.visible);
        let frame = DetectedFrame::new(
            board,
            proj.corners.iter().map(|c| Observation { id: c.id, u: c.u, v: c.v }).collect(),
        ).unwrap();
        let h = estimate_homography(&frame).unwrap();
        let got = extrinsics_from_homography(&h, &model.intrinsics).unwrap();
        prop_assert!((got.rotation() - p.rotation()).amax() < 1e-8);
        prop_assert!((got.translation() - p.translation()).amax() < 1e-6 * p.zt);
    }

    #[test]
    fn convergence_rule_is_one_minus_ratio(prev in 1e-6f64..1e3, cur in 0.0f64..1e3, eps in 0.01f64..0.5) {
        let r = variance_ratio(prev, cur);
        prop_assert_eq!(is_converged(r, eps), 1.0 - r <= eps);
    }

    #[test]
    fn iod_is_non_negative_and_scale_free(var in 0.0f64..1e6, value in -1e4f64..1e4, s in 0.1f64..10.0) {
        let d = iod(var, value);
        prop_assert!(d >= 0.0);
        if value.abs() > 1.0 {
            // Scaling a parameter by s scales its variance by s^2.
            let scaled = iod(var * s * s, value * s);
            prop_assert!((scaled - d * s).abs() <= 1e-9 * scaled.abs().max(1.0));
        }
    }

    #[test]
    fn formatted_numbers_stay_within_rounding(v in -1e4f64..1e4) {
        let s = format_number(v);
        let back: f64 = s.parse().unwrap();
        prop_assert!((back - v).abs() <= 0.005 + 1e-9, "{v} -> {s}");
        prop_assert!(!s.ends_with('.') && s != "-0");
    }

    #[test]
    fn a_pose_matches_itself(p in pose_strategy()) {
        prop_assert!(pose_match(&p, &p, &Tolerances::default()).matched);
    }

    #[test]
    fn temperature_schedule_is_geometric(t0 in 0.5f64..5.0, cooling in 0.3f64..0.95) {
        let cfg = SaConfig { initial_temperature: t0, cooling, ..SaConfig::default() };
        let temps = cfg.temperatures();
        for w in temps.windows(2) {
            prop_assert!((w[1] / w[0] - cooling).abs() < 1e-12);
        }
        prop_assert!(temps.iter().all(|t| *t > cfg.min_temperature));
    }
}

#[test]
fn loss_names_round_trip() {
    for loss in [Loss::SumIod, Loss::MaxIod, Loss::RmsErr] {
        let s = serde_json::to_string(&loss).unwrap();
        assert_eq!(serde_json::from_str::<Loss>(&s).unwrap(), loss);
    }
}
