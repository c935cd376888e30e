mod common;

use common::{min_eigenvalue, plane_normal_oracle, unit_normal, DenseKf};
use legsafe_core::contact::{estimate_contact, ContactConfig, ContactHysteresis};
use legsafe_core::estimator::{
    build_observation, predict, update, EstimatorState, NoiseConfig, ProprioSample, StateMatrix,
};
use legsafe_core::geometry::{rotation_from_euler, Leg, PlaneParams};
use legsafe_core::kinematics::KinematicsModel;
use legsafe_core::mpc::{kkt_residuals, solve_qp, QpSettings, STATE_SIZE};
use legsafe_core::safety::{
    find_hazard_point, global_barrier, global_cbf_rows, local_cbf_rows, project_hazard, ray_distances, HazardInfo,
    SafetyConfig,
};
use legsafe_core::terrain_map::{fit_plane_pca, point_under_triangle, Cell, GridMap2p5, SupportTriangle};
use legsafe_core::GRAVITY;
use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};
use proptest::prelude::*;
use std::f64::consts::PI;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn vec3(range: f64) -> impl Strategy<Value = Vector3<f64>> {
    (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn fused_height_is_a_convex_combination(
        prior in prop::option::of((-0.5f64..0.5, 0.0f64..1.0)),
        tris in prop::collection::vec((-0.3f64..0.3, -0.3f64..0.3, -0.3f64..0.3, 0.0f64..1.0), 1..4),
    ) {
        let mut map = GridMap2p5::new(Vector2::new(-0.025, -0.025), 0.05, 1, 1).unwrap();
        if let Some((h, c)) = prior {
            map.set_cell(0, 0, Cell { height: h, valid: true, confidence: c });
        }
        // Triangles large enough to cover the single cell at the origin.
        let triangles: Vec<SupportTriangle> = tris
            .iter()
            .map(|&(z0, z1, z2, p)| {
                SupportTriangle::new(
                    [Vector3::new(-1.0, -1.0, z0), Vector3::new(1.0, -1.0, z1), Vector3::new(0.0, 1.0, z2)],
                    p,
                )
                .unwrap()
            })
            .collect();
        let before = *map.cell(0, 0);
        map.update_terrain(&triangles);
        let after = *map.cell(0, 0);

        let mut candidates: Vec<f64> = triangles.iter().map(|t| t.plane.height_at(0.0, 0.0).unwrap()).collect();
        if before.valid {
            candidates.push(before.height);
        }
        let weight: f64 = triangles.iter().map(|t| t.prob).sum::<f64>() + if before.valid { before.confidence } else { 0.0 };
        if weight > 0.0 {
            let lo = candidates.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = candidates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(after.valid);
            prop_assert!(after.height >= lo - 1e-12 && after.height <= hi + 1e-12);
            prop_assert!((0.0..=1.0).contains(&after.confidence));
        } else {
            prop_assert_eq!(after, before);
        }
    }

    #[test]
    fn point_in_triangle_matches_barycentric(
        a in vec3(1.0), b in vec3(1.0), c in vec3(1.0), p in (-1.0f64..1.0, -1.0f64..1.0),
    ) {
        let Ok(tri) = SupportTriangle::new([a, b, c], 1.0) else { return Ok(()) };
        let det = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
        prop_assume!(det.abs() > 1e-3);
        let l1 = ((b.x - p.0) * (c.y - p.1) - (c.x - p.0) * (b.y - p.1)) / det;
        let l2 = ((c.x - p.0) * (a.y - p.1) - (a.x - p.0) * (c.y - p.1)) / det;
        let l3 = 1.0 - l1 - l2;
        let margin = l1.abs().min(l2.abs()).min(l3.abs());
        prop_assume!(margin > 1e-6);
        let inside = l1 > 0.0 && l2 > 0.0 && l3 > 0.0;
        prop_assert_eq!(point_under_triangle(&Vector2::new(p.0, p.1), &tri), inside);
    }

    #[test]
    fn hysteresis_switches_only_outside_the_band(
        probs in prop::collection::vec(prop::array::uniform4(0.0f64..1.0), 1..40),
        initial in prop::array::uniform4(any::<bool>()),
    ) {
        let mut h = ContactHysteresis::new(0.05, initial);
        let mut prev = initial;
        for p in &probs {
            let next = h.update(p);
            for i in 0..4 {
                if next[i] != prev[i] {
                    if next[i] {
                        prop_assert!(p[i] >= 0.55);
                    } else {
                        prop_assert!(p[i] < 0.45);
                    }
                } else if prev[i] {
                    prop_assert!(p[i] >= 0.45);
                } else {
                    prop_assert!(p[i] < 0.55);
                }
            }
            prev = next;
        }
    }

    #[test]
    fn fused_contact_is_bounded_and_monotone_in_force(
        foot in vec3(0.3), f1 in 0.0f64..60.0, df in 0.0f64..30.0, ground in -0.2f64..0.2,
    ) {
        let cfg = ContactConfig::default();
        let plane = PlaneParams::horizontal(ground);
        for leg in Leg::ALL {
            let lo = estimate_contact(leg, &foot, f1, Some(&plane), &cfg);
            let hi = estimate_contact(leg, &foot, f1 + df, Some(&plane), &cfg);
            prop_assert!((0.0..=1.0).contains(&lo.prob));
            prop_assert!(hi.prob >= lo.prob - 1e-15);
        }
    }

    #[test]
    fn hazard_projection_moves_back_with_the_drop(
        drop1 in 0.0f64..1.0, extra in 0.0f64..1.0, sx in -2.0f64..2.0, sy in -2.0f64..2.0, ang in -PI..PI,
    ) {
        let cfg = SafetyConfig::default();
        let plane = PlaneParams::horizontal(0.0);
        let dir = Vector2::new(ang.cos(), ang.sin());
        let near = project_hazard(&Vector3::new(sx, sy, -drop1), &plane, &cfg, &dir);
        let far = project_hazard(&Vector3::new(sx, sy, -(drop1 + extra)), &plane, &cfg, &dir);
        let s = Vector2::new(sx, sy);
        prop_assert!(dir.dot(&(near - s)) <= 1e-12);
        prop_assert!(dir.dot(&far) <= dir.dot(&near) + 1e-12);
        // Pulled straight back along the ray.
        prop_assert!((near - s).perp(&dir).abs() <= 1e-12);
    }

    #[test]
    fn hazard_search_matches_brute_force(
        seed in any::<u64>(), rx in 0.5f64..2.5, ry in 0.5f64..2.5, ang in -PI..PI, robot_z in -0.3f64..0.3,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut map = GridMap2p5::new(Vector2::zeros(), 0.05, 60, 60).unwrap();
        for iy in 0..60 {
            for ix in 0..60 {
                if rng.random_bool(0.9) {
                    let h = if rng.random_bool(0.05) { rng.random_range(-1.0..1.0) } else { rng.random_range(-0.1..0.1) };
                    map.set_cell(ix, iy, Cell { height: h, valid: true, confidence: 1.0 });
                }
            }
        }
        let cfg = SafetyConfig::default();
        let robot = Vector2::new(rx, ry);
        let dir = Vector2::new(ang.cos(), ang.sin());
        let got = find_hazard_point(&map, &robot, robot_z, &dir, &cfg);

        let mut expected: Option<Vector2<f64>> = None;
        for j in 0..15 {
            let xy = robot + dir * (cfg.l_min + j as f64 * 0.05);
            let ix = ((xy.x - 0.0) / 0.05).floor();
            let iy = ((xy.y - 0.0) / 0.05).floor();
            if ix >= 0.0 && iy >= 0.0 && ix < 60.0 && iy < 60.0 {
                let c = map.cell(ix as usize, iy as usize);
                if c.valid && (c.height - robot_z).abs() > cfg.h_thr {
                    expected = Some(xy);
                    break;
                }
            }
        }
        prop_assert_eq!(ray_distances(0.05, &cfg).count(), 15);
        match expected {
            Some(xy) => {
                prop_assert!(got.found);
                prop_assert!((got.s_point.xy() - xy).norm() < 1e-9);
            }
            None => prop_assert!(!got.found),
        }
    }

    #[test]
    fn barrier_rows_are_the_discrete_decrease_condition(
        sx in -3.0f64..3.0, sy in -3.0f64..3.0, ang in -PI..PI,
        traj in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0, -0.5f64..0.5, -0.5f64..0.5), 4),
        tilt in (-0.3f64..0.3, -0.3f64..0.3), yaw in -PI..PI,
    ) {
        let cfg = SafetyConfig::default();
        let dt = 0.04;
        let horizon = traj.len() - 1;
        let mut stacked = vec![0.0; STATE_SIZE * traj.len()];
        for (k, &(x, y, roll, pitch)) in traj.iter().enumerate() {
            stacked[k * STATE_SIZE] = roll;
            stacked[k * STATE_SIZE + 1] = pitch;
            stacked[k * STATE_SIZE + 3] = x;
            stacked[k * STATE_SIZE + 4] = y;
        }
        let dir = Vector2::new(ang.cos(), ang.sin());
        let hz = HazardInfo { found: true, s_point: Vector3::new(sx, sy, -1.0), s_projected_xy: Vector2::new(sx, sy), direction_xy: dir };
        let rows = global_cbf_rows(&hz, &cfg, horizon, dt);
        prop_assert_eq!(rows.len(), horizon);
        for (k, row) in rows.iter().enumerate() {
            let h = |s: usize| global_barrier(&hz, &cfg, &Vector2::new(traj[s].0, traj[s].1)).unwrap();
            let expected = (h(k + 1) - h(k)) / dt + cfg.alpha_glob * h(k);
            prop_assert!((row.slack(&stacked) - expected).abs() < 1e-9 * (1.0 + expected.abs()));
        }

        let normal = rotation_from_euler(tilt.0, tilt.1, 0.0) * Vector3::z();
        let plane = PlaneParams::through_point(normal, Vector3::zeros()).unwrap();
        let bounds = legsafe_core::safety::attitude_bounds(&plane, yaw, &cfg).unwrap();
        let rows = local_cbf_rows(&plane, yaw, &cfg, horizon, dt).unwrap();
        prop_assert_eq!(rows.len(), 4 * horizon);
        for (j, row) in rows.iter().enumerate() {
            let (k, which) = (j / 4, j % 4);
            let h = |s: usize| bounds.barriers(traj[s].2, traj[s].3)[which];
            let expected = (h(k + 1) - h(k)) / dt + cfg.alpha_local * h(k);
            prop_assert!((row.slack(&stacked) - expected).abs() < 1e-9 * (1.0 + expected.abs()));
        }
    }

    #[test]
    fn jacobian_matches_finite_differences(q in vec3(1.2), leg in 0usize..4) {
        let kin = KinematicsModel::default();
        let leg = Leg::from_index(leg).unwrap();
        let j = kin.jacobian(leg, &q);
        let eps = 1e-6;
        for c in 0..3 {
            let mut dq = Vector3::zeros();
            dq[c] = eps;
            let fd = (kin.foot_position(leg, &(q + dq)) - kin.foot_position(leg, &(q - dq))) / (2.0 * eps);
            prop_assert!((fd - j.column(c)).amax() < 1e-8);
        }
    }

    #[test]
    fn inverse_kinematics_round_trips(q1 in -0.4f64..0.4, q2 in 0.2f64..1.2, q3 in -2.4f64..-0.8, leg in 0usize..4) {
        let kin = KinematicsModel::default();
        let leg = Leg::from_index(leg).unwrap();
        let target = kin.foot_position(leg, &Vector3::new(q1, q2, q3));
        let ik = kin.inverse(leg, &target);
        prop_assert!(ik.reachable);
        prop_assert!((kin.foot_position(leg, &ik.q) - target).norm() < 1e-9);
    }

    #[test]
    fn pca_fit_matches_the_eigen_oracle(seed in any::<u64>(), n in 3usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Vector3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), 1.0).normalize();
        let (e1, e2) = (normal.cross(&Vector3::x()).normalize(), normal.cross(&Vector3::y()).normalize());
        let pts: Vec<Vector3<f64>> = (0..n)
            .map(|_| {
                e1 * rng.random_range(-1.0..1.0) + e2 * rng.random_range(-1.0..1.0) + normal * rng.random_range(-0.01..0.01)
            })
            .collect();
        if let Ok(fit) = fit_plane_pca(&pts) {
            let oracle = plane_normal_oracle(&pts);
            prop_assert!((unit_normal(&fit) - oracle).norm() < 1e-7);
            let centroid = pts.iter().sum::<Vector3<f64>>() / n as f64;
            prop_assert!(fit.signed_distance(&centroid).abs() < 1e-12);
        }
    }

    #[test]
    fn qp_solutions_satisfy_kkt(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let qp = common::random_qp(&mut rng);
        let sol = solve_qp(&qp, &QpSettings::default()).unwrap();
        prop_assert!(kkt_residuals(&qp, &sol.x, &sol.y).max() <= 1e-6);
    }
}

fn random_sample(rng: &mut ChaCha8Rng, kin: &KinematicsModel) -> ProprioSample {
    let q = Vector3::new(0.0, 0.8, -1.6);
    let jitter = |rng: &mut ChaCha8Rng, s: f64| Vector3::new(rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s));
    let _ = kin;
    ProprioSample {
        imu_accel: Vector3::new(0.0, 0.0, GRAVITY) + jitter(rng, 2.0),
        imu_omega: jitter(rng, 0.5),
        orientation: rotation_from_euler(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(-3.0..3.0)),
        joint_angles: [q + jitter(rng, 0.2), q + jitter(rng, 0.2), q + jitter(rng, 0.2), q + jitter(rng, 0.2)],
        joint_velocities: [jitter(rng, 2.0), jitter(rng, 2.0), jitter(rng, 2.0), jitter(rng, 2.0)],
        foot_forces: [20.0; 4],
        timestamp: 0.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn filter_covariance_stays_positive_semidefinite(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kin = KinematicsModel::default();
        let cfg = NoiseConfig::default();
        let mut st = EstimatorState::new(Vector3::new(0.0, 0.0, 0.3), Vector3::zeros(), [Vector3::zeros(); 4], StateMatrix::identity() * 1e-2);
        for _ in 0..50 {
            let sample = random_sample(&mut rng, &kin);
            let stance = [rng.random_bool(0.7), rng.random_bool(0.7), rng.random_bool(0.7), rng.random_bool(0.7)];
            let pred = predict(&st, &sample, &kin, &stance, 0.002, &cfg).unwrap();
            let plane = PlaneParams::horizontal(rng.random_range(-0.05..0.05));
            let blend = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
            let obs = build_observation(&sample, &kin, Some(&plane), &blend, &pred).unwrap();
            st = update(&pred, &obs, &stance, &cfg).unwrap();
            let p = DMatrix::from_column_slice(18, 18, st.covariance.as_slice());
            prop_assert!(min_eigenvalue(&p) >= -1e-12);
            prop_assert!((&p - p.transpose()).amax() == 0.0);
        }
    }

    #[test]
    fn one_filter_step_matches_the_dense_reference(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kin = KinematicsModel::default();
        let cfg = NoiseConfig::default();
        let sample = random_sample(&mut rng, &kin);
        let stance = [rng.random_bool(0.5), rng.random_bool(0.5), rng.random_bool(0.5), rng.random_bool(0.5)];
        let m = DMatrix::<f64>::from_fn(18, 18, |_, _| rng.random_range(-0.1..0.1));
        let p0 = &m * m.transpose() + DMatrix::<f64>::identity(18, 18) * 1e-4;
        let x0 = DVector::<f64>::from_fn(18, |_, _| rng.random_range(-0.5..0.5));
        let st = EstimatorState::from_vector(&nalgebra::SVector::<f64, 18>::from_column_slice(x0.as_slice()), StateMatrix::from_column_slice(p0.as_slice()));
        let mut oracle = DenseKf { x: x0, p: p0, cfg };
        oracle.predict(&sample, &kin, &stance, 0.002);
        let pred = predict(&st, &sample, &kin, &stance, 0.002, &cfg).unwrap();
        let obs = build_observation(&sample, &kin, None, &[0.0; 4], &pred).unwrap();
        let post = update(&pred, &obs, &stance, &cfg).unwrap();
        oracle.update(&sample, &kin, None, &stance);
        prop_assert!((DVector::from_column_slice(post.to_vector().as_slice()) - &oracle.x).amax() < 1e-9);
        prop_assert!((DMatrix::from_column_slice(18, 18, post.covariance.as_slice()) - &oracle.p).amax() < 1e-9);
    }
}

#[test]
fn jacobi_oracle_diagonalises() {
    let a = Matrix3::new(4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 1.0);
    let (vals, vecs) = common::jacobi_eigen(a);
    let recon = vecs * Matrix3::from_diagonal(&vals) * vecs.transpose();
    assert!((recon - a).amax() < 1e-12);
    assert!((vecs.transpose() * vecs - Matrix3::identity()).amax() < 1e-12);
}

#[test]
fn enumeration_oracle_on_a_box() {
    // ½‖x‖² − 2x₀ + 2x₁ over the box [−1, 1]²: optimum at the corner (1, −1).
    let p = DMatrix::identity(2, 2);
    let q = DVector::from_vec(vec![-2.0, 2.0]);
    let a = DMatrix::identity(2, 2);
    let l = DVector::from_vec(vec![-1.0, -1.0]);
    let u = DVector::from_vec(vec![1.0, 1.0]);
    let qp = legsafe_core::mpc::QpProblem::new(p, q, a, l, u).unwrap();
    let (x, f) = common::qp_enumerate(&qp).unwrap();
    assert!((x - DVector::from_vec(vec![1.0, -1.0])).amax() < 1e-12);
    assert!((f - (1.0 - 4.0)).abs() < 1e-12);
}

#[test]
fn hull_of_a_square_with_interior_points() {
    let pts: Vec<Vector2<f64>> =
        [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.5, 0.5), (0.2, 0.7)].iter().map(|&(x, y)| Vector2::new(x, y)).collect();
    let hull = common::convex_hull(&pts);
    assert_eq!(hull.len(), 4);
    assert!(common::in_convex_polygon(&hull, &Vector2::new(0.5, 0.5)));
    assert!(common::in_convex_polygon(&hull, &Vector2::new(1.0, 0.5)));
    assert!(!common::in_convex_polygon(&hull, &Vector2::new(1.01, 0.5)));
}
