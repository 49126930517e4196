//! Planar perspective-n-point.
//!
//! The reference points all lie on one plane, so the pose is initialized by
//! decomposing the plane-to-image homography into `[r1 r2 t]` and projecting
//! onto the nearest rotation, then refined with Levenberg–Marquardt on the
//! pixel reprojection error. Rotation updates are axis-angle increments
//! composed on the left of the current rotation.

use super::{fit_homography, nearest_rotation, CameraIntrinsics, Correspondence, GeometryError, RigidTransform};
use nalgebra::{Matrix3, Matrix6, Rotation3, SMatrix, Vector2, Vector3, Vector6};

/// A rejected step whose predicted cost reduction is below this fraction of
/// the cost means the solver sits at a stationary point.
const STATIONARY_RTOL: f64 = 1e-10;

/// Levenberg–Marquardt schedule.
#[derive(Debug, Clone, Copy)]
pub struct PnpOptions {
    pub initial_damping: f64,
    pub damping_increase: f64,
    pub damping_decrease: f64,
    pub min_step_norm: f64,
    pub max_iterations: usize,
    /// Consecutive rejected steps before giving up.
    pub max_consecutive_failures: usize,
}

impl Default for PnpOptions {
    fn default() -> Self {
        Self {
            initial_damping: 1e-3,
            damping_increase: 10.0,
            damping_decrease: 0.1,
            min_step_norm: 1e-10,
            max_iterations: 100,
            max_consecutive_failures: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PnpSolution {
    /// World→camera transform.
    pub extrinsics: RigidTransform,
    /// Mean Euclidean reprojection error over all correspondences, pixels.
    pub mean_reprojection_error: f64,
    pub iterations: usize,
}

pub fn solve_pnp(
    correspondences: &[Correspondence],
    k: &CameraIntrinsics,
) -> Result<PnpSolution, GeometryError> {
    solve_pnp_with(correspondences, k, &PnpOptions::default())
}

pub fn solve_pnp_with(
    correspondences: &[Correspondence],
    k: &CameraIntrinsics,
    options: &PnpOptions,
) -> Result<PnpSolution, GeometryError> {
    let n = correspondences.len();
    if n < 4 {
        return Err(GeometryError::InsufficientData { needed: 4, got: n });
    }
    k.validate()?;
    if correspondences
        .iter()
        .any(|c| !c.pixel.iter().chain(c.world.iter()).all(|v| v.is_finite()))
    {
        return Err(GeometryError::InvalidArgument("non-finite correspondence".into()));
    }

    let plane = PlaneFrame::fit(correspondences)?;
    check_pixel_spread(correspondences)?;

    let initial = homography_initialization(correspondences, k, &plane)?;
    refine(correspondences, k, initial, options)
}

/// Local frame of the world plane: `world = rotation · (x, y, 0) + origin`.
struct PlaneFrame {
    rotation: Matrix3<f64>,
    origin: Vector3<f64>,
}

impl PlaneFrame {
    fn fit(correspondences: &[Correspondence]) -> Result<Self, GeometryError> {
        let n = correspondences.len() as f64;
        let origin = correspondences.iter().fold(Vector3::zeros(), |a, c| a + c.world) / n;
        let mut scatter = Matrix3::zeros();
        for c in correspondences {
            let d = c.world - origin;
            scatter += d * d.transpose();
        }
        let eig = scatter.symmetric_eigen();
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        // Singular values of the centred point matrix.
        let sv: Vec<f64> = idx.iter().map(|&i| eig.eigenvalues[i].max(0.0).sqrt()).collect();
        if !(sv[1] >= 1e-9 * sv[0]) || sv[0] == 0.0 {
            return Err(GeometryError::DegenerateConfiguration(
                "world points are collinear or coincident".into(),
            ));
        }
        if sv[2] > 1e-6 * sv[0] {
            return Err(GeometryError::InvalidArgument(
                "world points are not coplanar; only planar targets are supported".into(),
            ));
        }
        let e1: Vector3<f64> = eig.eigenvectors.column(idx[0]).into();
        let e2: Vector3<f64> = eig.eigenvectors.column(idx[1]).into();
        let e3 = e1.cross(&e2);
        Ok(Self {
            rotation: Matrix3::from_columns(&[e1, e2, e3]),
            origin,
        })
    }

    fn to_plane(&self, world: &Vector3<f64>) -> Vector2<f64> {
        let p = self.rotation.transpose() * (world - self.origin);
        Vector2::new(p.x, p.y)
    }
}

fn check_pixel_spread(correspondences: &[Correspondence]) -> Result<(), GeometryError> {
    let n = correspondences.len() as f64;
    let c = correspondences.iter().fold(Vector2::zeros(), |a, p| a + p.pixel) / n;
    let mut cov = nalgebra::Matrix2::zeros();
    for p in correspondences {
        let d = p.pixel - c;
        cov += d * d.transpose();
    }
    let eig = cov.symmetric_eigen();
    let hi = eig.eigenvalues.max().max(0.0).sqrt();
    let lo = eig.eigenvalues.min().max(0.0).sqrt();
    if !(lo >= 1e-9 * hi) || hi == 0.0 {
        return Err(GeometryError::DegenerateConfiguration(
            "image points are collinear or coincident".into(),
        ));
    }
    Ok(())
}

fn homography_initialization(
    correspondences: &[Correspondence],
    k: &CameraIntrinsics,
    plane: &PlaneFrame,
) -> Result<RigidTransform, GeometryError> {
    let src: Vec<Vector2<f64>> = correspondences.iter().map(|c| plane.to_plane(&c.world)).collect();
    let dst: Vec<Vector2<f64>> = correspondences.iter().map(|c| k.normalize_pixel(&c.pixel)).collect();
    let fit = fit_homography(&src, &dst)?;
    let h = fit.homography.matrix();

    let h1: Vector3<f64> = h.column(0).into();
    let h2: Vector3<f64> = h.column(1).into();
    let h3: Vector3<f64> = h.column(2).into();
    let mut lambda = 2.0 / (h1.norm() + h2.norm());
    // The plane origin is the centroid of the points, which must be in front.
    if h3.z * lambda < 0.0 {
        lambda = -lambda;
    }
    let r1 = h1 * lambda;
    let r2 = h2 * lambda;
    let r3 = r1.cross(&r2);
    let rotation_plane = nearest_rotation(&Matrix3::from_columns(&[r1, r2, r3]));
    let t = h3 * lambda;

    // Camera point = R_p·(plane point) + t, plane point = P_frameᵀ(world − origin).
    let rotation = rotation_plane * plane.rotation.transpose();
    let translation = t - rotation * plane.origin;
    Ok(RigidTransform { rotation, translation })
}

struct Residuals {
    values: Vec<f64>,
    cost: f64,
    behind: bool,
}

fn residuals(correspondences: &[Correspondence], k: &CameraIntrinsics, pose: &RigidTransform) -> Residuals {
    let mut values = Vec::with_capacity(2 * correspondences.len());
    let mut cost = 0.0;
    let mut behind = false;
    for c in correspondences {
        let pc = pose.apply(&c.world);
        if pc.z <= 0.0 {
            behind = true;
        }
        let uv = k.project_camera_point(&pc);
        let r = uv - c.pixel;
        cost += r.norm_squared();
        values.push(r.x);
        values.push(r.y);
    }
    Residuals { values, cost, behind }
}

fn mean_error(correspondences: &[Correspondence], k: &CameraIntrinsics, pose: &RigidTransform) -> f64 {
    correspondences
        .iter()
        .map(|c| (k.project_camera_point(&pose.apply(&c.world)) - c.pixel).norm())
        .sum::<f64>()
        / correspondences.len() as f64
}

fn apply_increment(pose: &RigidTransform, delta: &Vector6<f64>) -> RigidTransform {
    let omega = Vector3::new(delta[0], delta[1], delta[2]);
    let dr = Rotation3::new(omega).into_inner();
    RigidTransform {
        rotation: nearest_rotation(&(dr * pose.rotation)),
        translation: pose.translation + Vector3::new(delta[3], delta[4], delta[5]),
    }
}

/// Normal equations `JᵀJ` and `Jᵀr` for the increment `(ω, δt)` where
/// `p_c ← exp(ω)·R·X + t + δt`.
fn normal_equations(
    correspondences: &[Correspondence],
    k: &CameraIntrinsics,
    pose: &RigidTransform,
    res: &[f64],
) -> (Matrix6<f64>, Vector6<f64>) {
    let mut jtj = Matrix6::zeros();
    let mut jtr = Vector6::zeros();
    for (i, c) in correspondences.iter().enumerate() {
        let rx = pose.rotation * c.world;
        let p = rx + pose.translation;
        let iz = 1.0 / p.z;
        let iz2 = iz * iz;
        // d(u, v)/d(p_c)
        let dproj = SMatrix::<f64, 2, 3>::new(
            k.fx * iz,
            k.skew * iz,
            -(k.fx * p.x + k.skew * p.y) * iz2,
            0.0,
            k.fy * iz,
            -k.fy * p.y * iz2,
        );
        // d(p_c)/d(ω) = −[R·X]ₓ, d(p_c)/d(δt) = I
        let skew_rx = Matrix3::new(0.0, -rx.z, rx.y, rx.z, 0.0, -rx.x, -rx.y, rx.x, 0.0);
        let mut dp = SMatrix::<f64, 3, 6>::zeros();
        dp.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-skew_rx));
        dp.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
        let j = dproj * dp;
        let r = Vector2::new(res[2 * i], res[2 * i + 1]);
        jtj += j.transpose() * j;
        jtr += j.transpose() * r;
    }
    (jtj, jtr)
}

fn refine(
    correspondences: &[Correspondence],
    k: &CameraIntrinsics,
    initial: RigidTransform,
    options: &PnpOptions,
) -> Result<PnpSolution, GeometryError> {
    let mut pose = initial;
    let mut current = residuals(correspondences, k, &pose);
    let mut lambda = options.initial_damping;
    let mut failures = 0usize;
    let mut iterations = 0usize;
    let mut converged = false;

    while iterations < options.max_iterations {
        iterations += 1;
        if current.cost == 0.0 {
            converged = true;
            break;
        }
        let (jtj, jtr) = normal_equations(correspondences, k, &pose, &current.values);
        let mut damped = jtj;
        for d in 0..6 {
            damped[(d, d)] += lambda * jtj[(d, d)].max(f64::MIN_POSITIVE);
        }
        let step = damped.cholesky().map(|ch| ch.solve(&(-jtr)));
        let Some(step) = step else {
            lambda *= options.damping_increase;
            failures += 1;
            if failures >= options.max_consecutive_failures {
                break;
            }
            continue;
        };
        let step_norm = step.norm();
        let candidate = apply_increment(&pose, &step);
        let trial = residuals(correspondences, k, &candidate);
        if !trial.behind && trial.cost < current.cost {
            pose = candidate;
            current = trial;
            lambda *= options.damping_decrease;
            failures = 0;
            if step_norm < options.min_step_norm {
                converged = true;
                break;
            }
        } else {
            // Reduction the undamped linear model expects from this step.
            let predicted = -2.0 * step.dot(&jtr) - step.dot(&(jtj * step));
            if step_norm < options.min_step_norm || predicted <= STATIONARY_RTOL * current.cost {
                // Nothing left to gain at machine precision.
                converged = true;
                break;
            }
            lambda *= options.damping_increase;
            failures += 1;
            if failures >= options.max_consecutive_failures {
                break;
            }
        }
    }

    let solution = PnpSolution {
        extrinsics: pose,
        mean_reprojection_error: mean_error(correspondences, k, &pose),
        iterations,
    };
    if failures >= options.max_consecutive_failures && !converged {
        return Err(GeometryError::NoConvergence {
            best: Box::new(solution),
        });
    }
    if current.behind {
        return Err(GeometryError::DegenerateConfiguration(
            "solved pose places reference points behind the camera".into(),
        ));
    }
    pose.check_invariants()?;
    Ok(solution)
}
