//! Multi-view fusion of one identity at one timestep.
//!
//! Shape and canonical pose do not depend on the viewpoint and are averaged
//! directly. Root rotation is lifted into the world by each camera and then
//! averaged as a quaternion. The head is triangulated from the per-view head
//! keypoints; with a single view it falls back to the unprojected depth.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::association::GlobalIdentityMap;
use crate::bodymodel::{BodyParams, NUM_POSE_SLOTS, NUM_SHAPE};
use crate::error::{Error, Result};
use crate::geometry::{
    average_quaternions_with, pixel_ray, triangulate_rays_with, Camera, GeometryTolerances, Quaternion,
};
use crate::observation::{CameraSet, Observation};
use crate::serde_util;
use crate::tracking::Tracklet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum FusionStrategy {
    /// Averaged invariants, triangulated head.
    #[default]
    #[serde(rename = "avg+tri")]
    AvgTri,
    /// Element-wise max over views for the invariants, triangulated head.
    /// Stands in for token max-pooling, which needs the neural tokens.
    #[serde(rename = "maxpool+tri")]
    MaxPoolTri,
    /// Everything averaged, including the lifted per-view head positions.
    #[serde(rename = "only-avg")]
    OnlyAvg,
}

impl std::fmt::Display for FusionStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FusionStrategy::AvgTri => "avg+tri",
            FusionStrategy::MaxPoolTri => "maxpool+tri",
            FusionStrategy::OnlyAvg => "only-avg",
        })
    }
}

/// How per-view axis-angle pose slots are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaAveraging {
    #[default]
    AxisAngle,
    /// Per-slot quaternion mean; well defined near a half turn.
    Quaternion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct FusionConfig {
    pub strategy: FusionStrategy,
    pub theta_averaging: ThetaAveraging,
}

/// Fused state of one identity at one timestep, in the world frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FusedState {
    pub timestep: usize,
    pub theta: Vec<[f64; 3]>,
    pub beta: [f64; NUM_SHAPE],
    #[serde(with = "serde_util::mat3")]
    pub root_rotation: Matrix3<f64>,
    #[serde(with = "serde_util::vec3")]
    pub head_position: Vector3<f64>,
    pub contributing_views: BTreeSet<usize>,
}

impl FusedState {
    pub fn body(&self) -> BodyParams {
        BodyParams {
            theta: self.theta.clone(),
            beta: self.beta,
            root_rotation: self.root_rotation,
            head_translation: self.head_position,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GlobalHuman {
    pub global_id: usize,
    pub frames: Vec<FusedState>,
}

impl GlobalHuman {
    pub fn frame(&self, t: usize) -> Option<&FusedState> {
        self.frames
            .binary_search_by_key(&t, |f| f.timestep)
            .ok()
            .map(|i| &self.frames[i])
    }
}

/// One view's contribution to a fusion cell.
#[derive(Debug, Clone, Copy)]
pub struct ViewObservation<'a> {
    pub observation: &'a Observation,
    pub camera: &'a Camera,
}

fn sorted_by_view<'a>(items: &[ViewObservation<'a>]) -> Vec<ViewObservation<'a>> {
    let mut v = items.to_vec();
    v.sort_by_key(|i| (i.observation.view_id, i.observation.id));
    v
}

/// Mean pose and shape across views.
pub fn fuse_invariant(items: &[ViewObservation<'_>], averaging: ThetaAveraging) -> Result<(Vec<[f64; 3]>, [f64; NUM_SHAPE])> {
    if items.is_empty() {
        return Err(Error::Input("cannot fuse an empty observation set".into()));
    }
    let items = sorted_by_view(items);
    let n = items.len() as f64;
    // means are taken about the first sample, so identical inputs come back bit-exact
    let first = &items[0].observation.body;
    let mut beta = [0.0; NUM_SHAPE];
    for it in &items {
        for ((b, x), x0) in beta.iter_mut().zip(&it.observation.body.beta).zip(&first.beta) {
            *b += x - x0;
        }
    }
    for (b, x0) in beta.iter_mut().zip(&first.beta) {
        *b = x0 + *b / n;
    }

    let mut theta = vec![[0.0; 3]; NUM_POSE_SLOTS];
    match averaging {
        ThetaAveraging::AxisAngle => {
            for it in &items {
                for ((acc, x), x0) in theta.iter_mut().zip(&it.observation.body.theta).zip(&first.theta) {
                    for k in 0..3 {
                        acc[k] += x[k] - x0[k];
                    }
                }
            }
            for (acc, x0) in theta.iter_mut().zip(&first.theta) {
                for k in 0..3 {
                    acc[k] = x0[k] + acc[k] / n;
                }
            }
        }
        ThetaAveraging::Quaternion => {
            for (slot, out) in theta.iter_mut().enumerate() {
                let qs: Vec<Quaternion> = items
                    .iter()
                    .map(|it| Quaternion::from_axis_angle(&Vector3::from(it.observation.body.theta[slot])))
                    .collect();
                let avg = average_quaternions_with(&qs, 0.0)?;
                let aa = crate::geometry::matrix_to_axis_angle(&avg.to_matrix());
                *out = [aa.x, aa.y, aa.z];
            }
        }
    }
    Ok((theta, beta))
}

fn max_pool_invariant(items: &[ViewObservation<'_>]) -> (Vec<[f64; 3]>, [f64; NUM_SHAPE]) {
    let mut beta = [f64::NEG_INFINITY; NUM_SHAPE];
    let mut theta = vec![[f64::NEG_INFINITY; 3]; NUM_POSE_SLOTS];
    for it in items {
        for (b, x) in beta.iter_mut().zip(&it.observation.body.beta) {
            *b = b.max(*x);
        }
        for (acc, x) in theta.iter_mut().zip(&it.observation.body.theta) {
            for k in 0..3 {
                acc[k] = acc[k].max(x[k]);
            }
        }
    }
    // pooled slots can exceed a half turn; keep them valid axis-angles
    for acc in theta.iter_mut() {
        let v = Vector3::from(*acc);
        let n = v.norm();
        if n > std::f64::consts::PI {
            let c = v * (std::f64::consts::PI / n);
            *acc = [c.x, c.y, c.z];
        }
    }
    (theta, beta)
}

/// World-frame root rotation: each camera-frame rotation is lifted by its
/// camera, then quaternion-averaged.
pub fn fuse_root_rotation(items: &[ViewObservation<'_>], tol: &GeometryTolerances) -> Result<Matrix3<f64>> {
    let items = sorted_by_view(items);
    let qs: Vec<Quaternion> = items
        .iter()
        .map(|it| Quaternion::from_matrix(&(it.camera.rotation() * it.observation.body.root_rotation)))
        .collect();
    Ok(average_quaternions_with(&qs, tol.min_quaternion_mean_norm)?.to_matrix())
}

fn lifted_head(item: &ViewObservation<'_>) -> Result<Vector3<f64>> {
    let h = item.observation.head_in_camera(item.camera)?;
    Ok(item.camera.world_from_cam(&h))
}

fn averaged_head(items: &[ViewObservation<'_>]) -> Result<Vector3<f64>> {
    let mut sum = Vector3::zeros();
    for it in items {
        sum += lifted_head(it)?;
    }
    Ok(sum / items.len() as f64)
}

/// World head position by ray triangulation, or the lifted single-view
/// unprojection when only one view is present.
pub fn fuse_head_position(items: &[ViewObservation<'_>], tol: &GeometryTolerances) -> Result<Vector3<f64>> {
    let items = sorted_by_view(items);
    match items.len() {
        0 => Err(Error::Input("cannot fuse an empty observation set".into())),
        1 => lifted_head(&items[0]),
        _ => {
            let rays: Vec<_> = items
                .iter()
                .map(|it| {
                    let kp = it.observation.head_keypoint2d;
                    pixel_ray(it.camera, kp.x, kp.y)
                })
                .collect();
            match triangulate_rays_with(&rays, tol.max_ray_condition) {
                Ok(p) => Ok(p),
                Err(Error::DegenerateRays { condition }) => {
                    log::warn!("degenerate head rays (condition {condition:e}); averaging depths instead");
                    averaged_head(&items)
                }
                Err(e) => Err(e),
            }
        }
    }
}

/// Fuses one `(identity, timestep)` cell with the chosen strategy.
pub fn fuse_cell(
    timestep: usize,
    items: &[ViewObservation<'_>],
    cfg: &FusionConfig,
    tol: &GeometryTolerances,
) -> Result<FusedState> {
    let (theta, beta) = match cfg.strategy {
        FusionStrategy::MaxPoolTri => max_pool_invariant(items),
        _ => fuse_invariant(items, cfg.theta_averaging)?,
    };
    let root_rotation = fuse_root_rotation(items, tol)?;
    let head_position = match cfg.strategy {
        FusionStrategy::OnlyAvg => averaged_head(items)?,
        _ => fuse_head_position(items, tol)?,
    };
    Ok(FusedState {
        timestep,
        theta,
        beta,
        root_rotation,
        head_position,
        contributing_views: items.iter().map(|i| i.observation.view_id).collect(),
    })
}

/// Fuses every identity at every timestep it was observed, ordered by
/// `(global id, timestep)`. Tracklets missing from `ids` are skipped.
pub fn fuse_all(
    tracklets: &BTreeMap<usize, Vec<Tracklet>>,
    ids: &GlobalIdentityMap,
    cams: &CameraSet,
    cfg: &FusionConfig,
    tol: &GeometryTolerances,
) -> Result<Vec<GlobalHuman>> {
    let mut cells: BTreeMap<(usize, usize), Vec<ViewObservation<'_>>> = BTreeMap::new();
    for tr in tracklets.values().flatten() {
        let Some(gid) = ids.get(tr.view_id, tr.track_id) else {
            continue;
        };
        for (&t, obs) in &tr.frames {
            cells.entry((gid, t)).or_default().push(ViewObservation {
                observation: obs,
                camera: cams.get(obs.view_id, t)?,
            });
        }
    }

    let cells: Vec<((usize, usize), Vec<ViewObservation<'_>>)> = cells.into_iter().collect();
    let states: Vec<(usize, FusedState)> = cells
        .par_iter()
        .map(|((gid, t), items)| fuse_cell(*t, items, cfg, tol).map(|s| (*gid, s)))
        .collect::<Result<Vec<_>>>()?;

    let mut humans: Vec<GlobalHuman> = Vec::new();
    for (gid, state) in states {
        match humans.last_mut() {
            Some(h) if h.global_id == gid => h.frames.push(state),
            _ => humans.push(GlobalHuman {
                global_id: gid,
                frames: vec![state],
            }),
        }
    }
    Ok(humans)
}
