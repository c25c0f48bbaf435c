//! A 24-joint articulated toy skeleton.
//!
//! Joints follow the usual SMPL ordering and parent tree. The canonical frame
//! is y-up with the pelvis at the origin; the rest head-to-pelvis chain is
//! exactly 0.60 m tall at zero shape. Pose slot `j < 24` is the local
//! axis-angle rotation of joint `j` (slot 0 turns the whole body inside the
//! canonical frame); slots 24..52 stand for hands and jaw and are carried
//! along without affecting joint placement. Only `beta[0]` changes the
//! skeleton: every bone is scaled by `1 + 0.1 * beta[0]`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{axis_angle_to_matrix, is_rotation, Camera};
use crate::serde_util;

pub const NUM_POSE_SLOTS: usize = 52;
pub const NUM_SHAPE: usize = 10;
pub const NUM_JOINTS: usize = 24;
pub const PELVIS: usize = 0;
pub const HEAD: usize = 15;
pub const SHAPE_LENGTH_GAIN: f64 = 0.1;

pub const JOINT_NAMES: [&str; NUM_JOINTS] = [
    "pelvis",
    "left_hip",
    "right_hip",
    "spine1",
    "left_knee",
    "right_knee",
    "spine2",
    "left_ankle",
    "right_ankle",
    "spine3",
    "left_foot",
    "right_foot",
    "neck",
    "left_collar",
    "right_collar",
    "head",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hand",
    "right_hand",
];

const PARENTS: [i32; NUM_JOINTS] = [
    -1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21,
];

const REST_OFFSETS: [[f64; 3]; NUM_JOINTS] = [
    [0.0, 0.0, 0.0],
    [0.09, -0.08, 0.0],
    [-0.09, -0.08, 0.0],
    [0.0, 0.10, 0.0],
    [0.0, -0.40, 0.0],
    [0.0, -0.40, 0.0],
    [0.0, 0.13, 0.0],
    [0.0, -0.40, 0.0],
    [0.0, -0.40, 0.0],
    [0.0, 0.07, 0.0],
    [0.0, -0.05, 0.12],
    [0.0, -0.05, 0.12],
    [0.0, 0.20, 0.0],
    [0.07, 0.12, 0.0],
    [-0.07, 0.12, 0.0],
    [0.0, 0.10, 0.0],
    [0.12, 0.02, 0.0],
    [-0.12, 0.02, 0.0],
    [0.26, 0.0, 0.0],
    [-0.26, 0.0, 0.0],
    [0.25, 0.0, 0.0],
    [-0.25, 0.0, 0.0],
    [0.08, 0.0, 0.0],
    [-0.08, 0.0, 0.0],
];

/// Static skeleton definition, written into every scenario header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Skeleton {
    pub joint_names: Vec<String>,
    pub parent_index: Vec<i32>,
    pub bone_offsets: Vec<[f64; 3]>,
    pub head_index: usize,
    pub pelvis_index: usize,
    pub shape_length_gain: f64,
}

impl Skeleton {
    pub fn toy() -> Self {
        Self {
            joint_names: JOINT_NAMES.iter().map(|s| s.to_string()).collect(),
            parent_index: PARENTS.to_vec(),
            bone_offsets: REST_OFFSETS.to_vec(),
            head_index: HEAD,
            pelvis_index: PELVIS,
            shape_length_gain: SHAPE_LENGTH_GAIN,
        }
    }

    pub fn parent(j: usize) -> Option<usize> {
        usize::try_from(PARENTS[j]).ok()
    }

    pub fn rest_offset(j: usize) -> Vector3<f64> {
        let o = REST_OFFSETS[j];
        Vector3::new(o[0], o[1], o[2])
    }
}

/// Pose, shape, root rotation and head translation of one person, expressed
/// in whatever frame the owner documents (camera or world).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct BodyParams {
    pub theta: Vec<[f64; 3]>,
    pub beta: [f64; NUM_SHAPE],
    #[serde(with = "serde_util::mat3")]
    pub root_rotation: Matrix3<f64>,
    #[serde(with = "serde_util::vec3")]
    pub head_translation: Vector3<f64>,
}

impl Default for BodyParams {
    fn default() -> Self {
        Self {
            theta: vec![[0.0; 3]; NUM_POSE_SLOTS],
            beta: [0.0; NUM_SHAPE],
            root_rotation: Matrix3::identity(),
            head_translation: Vector3::zeros(),
        }
    }
}

impl BodyParams {
    pub fn validate(&self) -> Result<()> {
        if self.theta.len() != NUM_POSE_SLOTS {
            return Err(Error::InvalidBody(format!(
                "expected {NUM_POSE_SLOTS} pose slots, got {}",
                self.theta.len()
            )));
        }
        for (i, aa) in self.theta.iter().enumerate() {
            let n = Vector3::from(*aa).norm();
            if !n.is_finite() || n > std::f64::consts::PI + 1e-6 {
                return Err(Error::InvalidBody(format!("pose slot {i} has angle {n}")));
            }
        }
        if !self.beta.iter().all(|b| b.is_finite()) {
            return Err(Error::InvalidBody("shape is not finite".into()));
        }
        if !is_rotation(&self.root_rotation, 1e-9) {
            return Err(Error::InvalidBody("root rotation is not orthonormal".into()));
        }
        if !self.head_translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidBody("head translation is not finite".into()));
        }
        Ok(())
    }

    pub fn pose_slot(&self, j: usize) -> Vector3<f64> {
        Vector3::from(self.theta[j])
    }

    /// Re-expresses camera-frame parameters in the world frame of `cam`.
    pub fn camera_to_world(&self, cam: &Camera) -> BodyParams {
        BodyParams {
            root_rotation: cam.rotation() * self.root_rotation,
            head_translation: cam.world_from_cam(&self.head_translation),
            ..self.clone()
        }
    }
}

/// Root-relative joints: pelvis at the origin, root rotation and head
/// translation ignored.
pub fn canonical_joints(params: &BodyParams) -> Vec<Vector3<f64>> {
    let length = 1.0 + SHAPE_LENGTH_GAIN * params.beta[0];
    let mut global_rot = [Matrix3::identity(); NUM_JOINTS];
    let mut joints = vec![Vector3::zeros(); NUM_JOINTS];
    for j in 0..NUM_JOINTS {
        let local = axis_angle_to_matrix(&params.pose_slot(j));
        match Skeleton::parent(j) {
            None => {
                global_rot[j] = local;
            }
            Some(p) => {
                joints[j] = joints[p] + global_rot[p] * (length * Skeleton::rest_offset(j));
                global_rot[j] = global_rot[p] * local;
            }
        }
    }
    joints
}

/// Canonical joints rotated by `root_rotation` about the head and moved so
/// the head sits at `head_translation`.
pub fn world_joints(params: &BodyParams) -> Vec<Vector3<f64>> {
    let canon = canonical_joints(params);
    place_joints(&canon, &params.root_rotation, &params.head_translation)
}

pub fn place_joints(
    canonical: &[Vector3<f64>],
    root_rotation: &Matrix3<f64>,
    head: &Vector3<f64>,
) -> Vec<Vector3<f64>> {
    let pivot = canonical[HEAD];
    canonical
        .iter()
        .map(|c| root_rotation * (c - pivot) + head)
        .collect()
}

/// Pixel distance between the projected head and pelvis of camera-frame
/// parameters.
pub fn head_pelvis_length_2d(cam: &Camera, params: &BodyParams) -> Result<f64> {
    let joints = world_joints(params);
    let head = cam.project_camera_point(&joints[HEAD])?;
    let pelvis = cam.project_camera_point(&joints[PELVIS])?;
    Ok((head - pelvis).norm())
}
