//! Rigid and similarity transforms, quaternions, pinhole cameras, ray
//! triangulation and Umeyama alignment.
//!
//! Rotations cross module boundaries as 3x3 matrices. Quaternions only show
//! up inside [`average_quaternions`].

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::serde_util;

/// Condition-number ceiling of the 3x3 normal system in [`triangulate_rays`].
pub const MAX_RAY_CONDITION: f64 = 1e8;
/// Relative singular-value floor below which a cross-covariance is rank deficient.
pub const ALIGNMENT_RANK_TOL: f64 = 1e-10;
/// Minimum norm of the sign-aligned quaternion sum before renormalization.
pub const MIN_QUATERNION_MEAN_NORM: f64 = 1e-9;

/// Numeric thresholds used by this module, overridable from the pipeline config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct GeometryTolerances {
    pub max_ray_condition: f64,
    pub alignment_rank_tol: f64,
    pub min_quaternion_mean_norm: f64,
}

impl Default for GeometryTolerances {
    fn default() -> Self {
        Self {
            max_ray_condition: MAX_RAY_CONDITION,
            alignment_rank_tol: ALIGNMENT_RANK_TOL,
            min_quaternion_mean_norm: MIN_QUATERNION_MEAN_NORM,
        }
    }
}

/// Unit quaternion `w + xi + yj + zk`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Normalizes the given components. Returns `None` for a zero-norm input.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Option<Self> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return None;
        }
        Some(Self {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        })
    }

    pub fn from_axis_angle(axis_angle: &Vector3<f64>) -> Self {
        let q = UnitQuaternion::from_scaled_axis(*axis_angle);
        Self::from_unit(&q)
    }

    pub fn from_matrix(rotation: &Matrix3<f64>) -> Self {
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*rotation));
        Self::from_unit(&q)
    }

    fn from_unit(q: &UnitQuaternion<f64>) -> Self {
        Self {
            w: q.w,
            x: q.i,
            y: q.j,
            z: q.k,
        }
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
            self.w, self.x, self.y, self.z,
        ));
        *q.to_rotation_matrix().matrix()
    }

    pub fn dot(&self, other: &Quaternion) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn negated(&self) -> Self {
        Self {
            w: -self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    /// Angle of the relative rotation between `self` and `other`, in radians.
    /// `q` and `-q` are at distance zero.
    pub fn angle_to(&self, other: &Quaternion) -> f64 {
        let d = self.dot(other).abs().min(1.0);
        2.0 * d.acos()
    }

    pub fn same_rotation(&self, other: &Quaternion, tol: f64) -> bool {
        1.0 - self.dot(other).abs() <= tol
    }
}

/// `x -> scale * rotation * x + translation`. SE(3) when `scale == 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SimilarityTransform {
    pub scale: f64,
    #[serde(with = "serde_util::mat3")]
    pub rotation: Matrix3<f64>,
    #[serde(with = "serde_util::vec3")]
    pub translation: Vector3<f64>,
}

impl Default for SimilarityTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(scale: f64, rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            scale,
            rotation,
            translation,
        }
    }

    pub fn rigid(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self::new(1.0, rotation, translation)
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * p) + self.translation
    }

    pub fn apply_all(&self, pts: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        pts.iter().map(|p| self.apply(p)).collect()
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &SimilarityTransform) -> Self {
        Self {
            scale: self.scale * other.scale,
            rotation: self.rotation * other.rotation,
            translation: self.scale * (self.rotation * other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            scale: 1.0 / self.scale,
            rotation: rt,
            translation: -(rt * self.translation) / self.scale,
        }
    }

    pub fn is_rigid(&self) -> bool {
        self.scale == 1.0
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(Error::InvalidCamera(format!("scale {} is not positive", self.scale)));
        }
        if !is_rotation(&self.rotation, tol) {
            return Err(Error::InvalidCamera("rotation is not orthonormal".into()));
        }
        if !self.translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidCamera("translation is not finite".into()));
        }
        Ok(())
    }
}

pub fn is_rotation(m: &Matrix3<f64>, tol: f64) -> bool {
    let err = (m * m.transpose() - Matrix3::identity()).abs().max();
    err <= tol && (m.determinant() - 1.0).abs() <= tol
}

/// Rodrigues' formula.
pub fn axis_angle_to_matrix(axis_angle: &Vector3<f64>) -> Matrix3<f64> {
    *Rotation3::from_scaled_axis(*axis_angle).matrix()
}

pub fn matrix_to_axis_angle(rotation: &Matrix3<f64>) -> Vector3<f64> {
    Rotation3::from_matrix_unchecked(*rotation).scaled_axis()
}

/// Pinhole intrinsics without skew, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        Self { fx, fy, cx, cy }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// `K^-1 [u, v, 1]^T`.
    pub fn back_project(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    pub fn project(&self, p_cam: &Vector3<f64>) -> Vector2<f64> {
        Vector2::new(
            self.fx * p_cam.x / p_cam.z + self.cx,
            self.fy * p_cam.y / p_cam.z + self.cy,
        )
    }
}

/// A calibrated view at one timestep.
///
/// `world_from_cam.translation` lives in world units at the current scene
/// scale. Depth samples taken from the scene are stored in normalized units
/// and become world lengths once multiplied by `scene_scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Camera {
    pub intrinsics: Intrinsics,
    pub world_from_cam: SimilarityTransform,
    pub scene_scale: f64,
}

impl Camera {
    pub fn new(intrinsics: Intrinsics, world_from_cam: SimilarityTransform, scene_scale: f64) -> Self {
        Self {
            intrinsics,
            world_from_cam,
            scene_scale,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = &self.intrinsics;
        if !(k.fx > 0.0 && k.fy > 0.0) || !k.cx.is_finite() || !k.cy.is_finite() {
            return Err(Error::InvalidCamera(format!(
                "focal lengths must be positive (fx={}, fy={})",
                k.fx, k.fy
            )));
        }
        if self.world_from_cam.scale != 1.0 {
            return Err(Error::InvalidCamera("world_from_cam must be rigid".into()));
        }
        self.world_from_cam.validate(1e-9)?;
        if !(self.scene_scale > 0.0) || !self.scene_scale.is_finite() {
            return Err(Error::InvalidCamera(format!(
                "scene scale {} is not positive",
                self.scene_scale
            )));
        }
        Ok(())
    }

    pub fn center(&self) -> Vector3<f64> {
        self.world_from_cam.translation
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.world_from_cam.rotation
    }

    pub fn cam_from_world(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.world_from_cam.rotation.transpose() * (p - self.world_from_cam.translation)
    }

    pub fn world_from_cam(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.world_from_cam.apply(p)
    }

    /// Projects a camera-frame point to pixels.
    pub fn project_camera_point(&self, p_cam: &Vector3<f64>) -> Result<Vector2<f64>> {
        if !(p_cam.z > 0.0) {
            return Err(Error::BehindCamera { depth: p_cam.z });
        }
        Ok(self.intrinsics.project(p_cam))
    }

    pub fn project(&self, p_world: &Vector3<f64>) -> Result<Vector2<f64>> {
        self.project_camera_point(&self.cam_from_world(p_world))
    }

    /// Unprojected head position scaled into world lengths by the scene scale, still
    /// in the camera frame.
    pub fn head_in_camera(&self, u: f64, v: f64, d_coarse: f64, delta_d: f64) -> Result<Vector3<f64>> {
        Ok(self.scene_scale * unproject_head(self, u, v, d_coarse, delta_d)?)
    }
}

/// `(d_coarse + delta_d) * K^-1 [u, v, 1]^T` in the camera frame.
pub fn unproject_head(cam: &Camera, u: f64, v: f64, d_coarse: f64, delta_d: f64) -> Result<Vector3<f64>> {
    let depth = d_coarse + delta_d;
    if !(depth > 0.0) {
        return Err(Error::InvalidDepth { depth });
    }
    Ok(depth * cam.intrinsics.back_project(u, v))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    pub direction: Vector3<f64>,
}

impl Ray {
    /// Normalizes `direction`.
    pub fn new(origin: Vector3<f64>, direction: Vector3<f64>) -> Self {
        Self {
            origin,
            direction: direction.normalize(),
        }
    }

    pub fn distance_to(&self, p: &Vector3<f64>) -> f64 {
        let v = p - self.origin;
        (v - self.direction * self.direction.dot(&v)).norm()
    }

    pub fn transformed(&self, t: &SimilarityTransform) -> Ray {
        Ray::new(t.apply(&self.origin), t.rotation * self.direction)
    }

    fn sort_key(&self) -> [f64; 6] {
        [
            self.origin.x,
            self.origin.y,
            self.origin.z,
            self.direction.x,
            self.direction.y,
            self.direction.z,
        ]
    }
}

/// World-space ray through pixel `(u, v)`.
pub fn pixel_ray(cam: &Camera, u: f64, v: f64) -> Ray {
    let d_cam = cam.intrinsics.back_project(u, v);
    Ray::new(cam.center(), cam.rotation() * d_cam)
}

pub fn triangulate_rays(rays: &[Ray]) -> Result<Vector3<f64>> {
    triangulate_rays_with(rays, MAX_RAY_CONDITION)
}

/// Least-squares point closest to all rays: solves
/// `sum(I - d d^T) x = sum(I - d d^T) o`.
pub fn triangulate_rays_with(rays: &[Ray], max_condition: f64) -> Result<Vector3<f64>> {
    if rays.len() < 2 {
        return Err(Error::NeedFallback { rays: rays.len() });
    }
    // fixed summation order so the result does not depend on input order
    let mut sorted: Vec<&Ray> = rays.iter().collect();
    sorted.sort_by(|a, b| {
        let (ka, kb) = (a.sort_key(), b.sort_key());
        ka.iter()
            .zip(kb.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut a = Matrix3::zeros();
    let mut b = Vector3::zeros();
    for ray in sorted {
        let d = ray.direction;
        let proj = Matrix3::identity() - d * d.transpose();
        a += proj;
        b += proj * ray.origin;
    }

    let eig = a.symmetric_eigen();
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    let condition = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
    if !(condition <= max_condition) {
        return Err(Error::DegenerateRays { condition });
    }
    a.lu()
        .solve(&b)
        .ok_or(Error::DegenerateRays { condition })
}

pub fn average_quaternions(qs: &[Quaternion]) -> Result<Quaternion> {
    average_quaternions_with(qs, MIN_QUATERNION_MEAN_NORM)
}

/// Sign-aligns every quaternion to the first, averages, renormalizes.
///
/// Markley's eigenvector method is the usual alternative when inputs are
/// widely spread; for clustered per-view estimates the two agree closely.
pub fn average_quaternions_with(qs: &[Quaternion], min_norm: f64) -> Result<Quaternion> {
    let first = qs.first().ok_or(Error::DegenerateAverage { norm: 0.0 })?;
    let (mut w, mut x, mut y, mut z) = (0.0, 0.0, 0.0, 0.0);
    for q in qs {
        let q = if q.dot(first) < 0.0 { q.negated() } else { *q };
        w += q.w;
        x += q.x;
        y += q.y;
        z += q.z;
    }
    let n = qs.len() as f64;
    let (w, x, y, z) = (w / n, x / n, y / n, z / n);
    let norm = (w * w + x * x + y * y + z * z).sqrt();
    if !(norm >= min_norm) {
        return Err(Error::DegenerateAverage { norm });
    }
    Ok(Quaternion {
        w: w / norm,
        x: x / norm,
        y: y / norm,
        z: z / norm,
    })
}

pub fn umeyama(src: &[Vector3<f64>], dst: &[Vector3<f64>], with_scale: bool) -> Result<SimilarityTransform> {
    umeyama_with(src, dst, with_scale, ALIGNMENT_RANK_TOL)
}

/// Least-squares Sim(3) (or SE(3) when `with_scale` is false) mapping `src`
/// onto `dst`.
pub fn umeyama_with(
    src: &[Vector3<f64>],
    dst: &[Vector3<f64>],
    with_scale: bool,
    rank_tol: f64,
) -> Result<SimilarityTransform> {
    if src.len() != dst.len() {
        return Err(Error::DegenerateAlignment(format!(
            "point count mismatch ({} vs {})",
            src.len(),
            dst.len()
        )));
    }
    let n = src.len();
    if n < 3 {
        return Err(Error::DegenerateAlignment(format!("need at least 3 points, got {n}")));
    }
    let nf = n as f64;
    let mu_s = src.iter().sum::<Vector3<f64>>() / nf;
    let mu_d = dst.iter().sum::<Vector3<f64>>() / nf;

    let mut cov = Matrix3::zeros();
    let mut var_s = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let xs = s - mu_s;
        let xd = d - mu_d;
        cov += xd * xs.transpose();
        var_s += xs.norm_squared();
    }
    cov /= nf;
    var_s /= nf;

    let svd = cov.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::DegenerateAlignment("SVD failed".into())),
    };
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if !(var_s > 0.0) || !(sv[0] > 0.0) || sv[1] <= rank_tol * sv[0] {
        return Err(Error::DegenerateAlignment(
            "cross-covariance has rank below 2 (collinear or coincident points)".into(),
        ));
    }

    // the reflection fix flips the weakest direction
    let weakest = (0..3)
        .min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))
        .unwrap_or(2);
    let mut s = Matrix3::identity();
    if u.determinant() * v_t.determinant() < 0.0 {
        s[(weakest, weakest)] = -1.0;
    }
    let rotation = u * s * v_t;
    let scale = if with_scale {
        let d = svd.singular_values;
        (d[0] * s[(0, 0)] + d[1] * s[(1, 1)] + d[2] * s[(2, 2)]) / var_s
    } else {
        1.0
    };
    let translation = mu_d - scale * (rotation * mu_s);
    Ok(SimilarityTransform::new(scale, rotation, translation))
}

/// `sum ||T(src_i) - dst_i||^2`.
pub fn alignment_residual(t: &SimilarityTransform, src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> f64 {
    src.iter()
        .zip(dst)
        .map(|(s, d)| (t.apply(s) - d).norm_squared())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx_eq::*;

    mod approx_eq {
        use nalgebra::Vector3;
        pub fn close(a: &Vector3<f64>, b: &Vector3<f64>, tol: f64) -> bool {
            (a - b).amax() <= tol
        }
    }

    fn cam(fx: f64, cx: f64) -> Camera {
        Camera::new(
            Intrinsics::new(fx, fx, cx, cx),
            SimilarityTransform::identity(),
            1.0,
        )
    }

    #[test]
    fn unproject_principal_ray() {
        let p = unproject_head(&cam(1.0, 0.0), 0.0, 0.0, 2.0, 0.0).unwrap();
        assert_eq!(p, Vector3::new(0.0, 0.0, 2.0));
    }

    #[test]
    fn unproject_principal_point() {
        let p = unproject_head(&cam(500.0, 250.0), 250.0, 250.0, 3.0, 0.0).unwrap();
        assert!(close(&p, &Vector3::new(0.0, 0.0, 3.0), 1e-12));
    }

    #[test]
    fn unproject_with_residual() {
        // K^-1 [100, 0, 1] = (1, 0, 1); times d = 2
        let p = unproject_head(&cam(100.0, 0.0), 100.0, 0.0, 1.5, 0.5).unwrap();
        assert!(close(&p, &Vector3::new(2.0, 0.0, 2.0), 1e-12));
        assert_eq!(p.z, 2.0);
    }

    #[test]
    fn unproject_rejects_non_positive_depth() {
        let err = unproject_head(&cam(100.0, 0.0), 0.0, 0.0, 1.0, -1.0).unwrap_err();
        assert!(matches!(err, Error::InvalidDepth { .. }));
    }

    #[test]
    fn pixel_ray_examples() {
        let c = cam(500.0, 250.0);
        let r = pixel_ray(&c, 250.0, 250.0);
        assert_eq!(r.origin, Vector3::zeros());
        assert!(close(&r.direction, &Vector3::z(), 1e-12));

        let mut moved = c;
        moved.world_from_cam.translation = Vector3::new(1.0, 0.0, 0.0);
        let r = pixel_ray(&moved, 250.0, 250.0);
        assert_eq!(r.origin, Vector3::new(1.0, 0.0, 0.0));
        assert!(close(&r.direction, &Vector3::z(), 1e-12));

        // yaw by +90 deg about y sends the optical axis +z to +x
        let mut yawed = c;
        yawed.world_from_cam.rotation = Matrix3::new(0.0, 0.0, 1.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0);
        let r = pixel_ray(&yawed, 250.0, 250.0);
        assert!(close(&r.direction, &Vector3::x(), 1e-12));
    }

    #[test]
    fn triangulate_exact_intersections() {
        let rays = [
            Ray::new(Vector3::zeros(), Vector3::z()),
            Ray::new(Vector3::new(-1.0, 0.0, 1.0), Vector3::x()),
        ];
        let p = triangulate_rays(&rays).unwrap();
        assert!(close(&p, &Vector3::new(0.0, 0.0, 1.0), 1e-12));

        let target = Vector3::new(1.0, 2.0, 3.0);
        let origins = [
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(5.0, 0.0, 0.0),
            Vector3::new(0.0, 7.0, -1.0),
            Vector3::new(-3.0, 1.0, 9.0),
        ];
        let rays: Vec<Ray> = origins.iter().map(|o| Ray::new(*o, target - o)).collect();
        assert!(close(&triangulate_rays(&rays).unwrap(), &target, 1e-9));
    }

    #[test]
    fn triangulate_errors() {
        let one = [Ray::new(Vector3::zeros(), Vector3::z())];
        assert!(matches!(triangulate_rays(&one), Err(Error::NeedFallback { rays: 1 })));
        let parallel = [
            Ray::new(Vector3::zeros(), Vector3::z()),
            Ray::new(Vector3::x(), Vector3::z()),
        ];
        assert!(matches!(triangulate_rays(&parallel), Err(Error::DegenerateRays { .. })));
    }

    #[test]
    fn quaternion_average_examples() {
        let id = average_quaternions(&[Quaternion::IDENTITY; 5]).unwrap();
        assert!(id.same_rotation(&Quaternion::IDENTITY, 1e-15));

        let q = Quaternion::from_axis_angle(&Vector3::new(0.3, -0.2, 0.9));
        let avg = average_quaternions(&[q, q.negated()]).unwrap();
        assert!(avg.same_rotation(&q, 1e-12));

        let a = Quaternion::from_axis_angle(&Vector3::new(0.0, 0.0, 10f64.to_radians()));
        let b = Quaternion::from_axis_angle(&Vector3::new(0.0, 0.0, -10f64.to_radians()));
        let avg = average_quaternions(&[a, b]).unwrap();
        assert!(avg.angle_to(&Quaternion::IDENTITY) < 1e-9);
        assert!((avg.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quaternion_average_degenerate() {
        assert!(average_quaternions(&[]).is_err());
        // sign alignment bounds the mean norm below by 1/n, so only a raised
        // floor can trip the check
        let a = Quaternion::new(0.0, 1.0, 0.0, 0.0).unwrap();
        let b = Quaternion::new(0.0, 0.0, 1.0, 0.0).unwrap();
        let c = Quaternion::new(0.0, 0.0, -1.0, 0.0).unwrap();
        let ok = average_quaternions(&[a, b, c]).unwrap();
        assert!(ok.same_rotation(&a, 1e-12));
        let err = average_quaternions_with(&[a, b, c], 0.5).unwrap_err();
        assert!(matches!(err, Error::DegenerateAverage { .. }));
    }

    #[test]
    fn umeyama_identity_and_known_transform() {
        let src = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 2.0, 0.0),
            Vector3::new(0.3, 0.1, 1.5),
        ];
        let t = umeyama(&src, &src, true).unwrap();
        assert!((t.scale - 1.0).abs() < 1e-12);
        assert!(alignment_residual(&t, &src, &src) < 1e-20);

        let r = axis_angle_to_matrix(&Vector3::new(0.4, -1.1, 0.7));
        let known = SimilarityTransform::new(2.5, r, Vector3::new(1.0, -2.0, 3.0));
        let dst = known.apply_all(&src);
        let t = umeyama(&src, &dst, true).unwrap();
        assert!((t.scale - 2.5).abs() < 1e-9);
        assert!((t.rotation - r).amax() < 1e-9);
        assert!((t.translation - known.translation).amax() < 1e-9);

        let rigid = umeyama(&src, &dst, false).unwrap();
        assert_eq!(rigid.scale, 1.0);
        assert!(
            alignment_residual(&rigid, &src, &dst) >= alignment_residual(&t, &src, &dst)
        );
    }

    #[test]
    fn umeyama_degenerate_inputs() {
        let two = vec![Vector3::zeros(), Vector3::x()];
        assert!(umeyama(&two, &two, true).is_err());
        let line: Vec<_> = (0..5).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        assert!(matches!(umeyama(&line, &line, true), Err(Error::DegenerateAlignment(_))));
    }

    #[test]
    fn similarity_compose_inverse() {
        let a = SimilarityTransform::new(
            1.7,
            axis_angle_to_matrix(&Vector3::new(0.1, 0.2, 0.3)),
            Vector3::new(1.0, 2.0, 3.0),
        );
        let p = Vector3::new(-0.5, 0.25, 4.0);
        let back = a.inverse().apply(&a.apply(&p));
        assert!(close(&back, &p, 1e-12));
        let id = a.compose(&a.inverse());
        assert!((id.scale - 1.0).abs() < 1e-12);
        assert!(id.translation.norm() < 1e-12);
    }
}
