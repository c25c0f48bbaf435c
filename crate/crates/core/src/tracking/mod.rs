//! Per-view tracking: token matching between consecutive timesteps and
//! temporal displacement filtering.

pub mod sinkhorn;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bodymodel::world_joints;
use crate::error::Result;
use crate::observation::{group_by_view, CameraSet};
pub use crate::observation::Observation;

pub use sinkhorn::{harden, sinkhorn_with_dustbin, TransportPlan};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct TrackingConfig {
    pub epsilon: f64,
    pub max_iterations: usize,
    pub marginal_tolerance: f64,
    /// Token-space distance; also the dustbin cost.
    pub gamma_match: f64,
    /// Meters of mean joint displacement between kept frames.
    pub gamma_outlier: f64,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            max_iterations: 100,
            marginal_tolerance: 1e-6,
            gamma_match: 1.0,
            gamma_outlier: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameMatch {
    /// `(prev index, curr index)`, sorted by prev.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_prev: Vec<usize>,
    pub unmatched_curr: Vec<usize>,
    pub converged: bool,
}

pub fn token_cost_matrix(prev: &[Observation], curr: &[Observation]) -> DMatrix<f64> {
    DMatrix::from_fn(prev.len(), curr.len(), |i, j| prev[i].token_distance(&curr[j]))
}

/// Matches detections of two consecutive timesteps of one view.
pub fn match_consecutive(prev: &[Observation], curr: &[Observation], cfg: &TrackingConfig) -> FrameMatch {
    let cost = token_cost_matrix(prev, curr);
    match_cost_matrix(&cost, cfg)
}

/// Dustbin transport on a precomputed distance matrix, hardened and gated at
/// `gamma_match`.
pub fn match_cost_matrix(cost: &DMatrix<f64>, cfg: &TrackingConfig) -> FrameMatch {
    let (n, m) = cost.shape();
    let tp = sinkhorn_with_dustbin(
        cost,
        cfg.gamma_match,
        cfg.epsilon,
        cfg.max_iterations,
        cfg.marginal_tolerance,
    );
    if !tp.converged {
        log::debug!(
            "sinkhorn did not converge in {} iterations (marginal error {:e})",
            tp.iterations,
            tp.marginal_error
        );
    }
    let pairs: Vec<(usize, usize)> = harden(&tp.plan)
        .into_iter()
        .filter(|&(i, j)| cost[(i, j)] <= cfg.gamma_match)
        .collect();
    let mut prev_used = vec![false; n];
    let mut curr_used = vec![false; m];
    for &(i, j) in &pairs {
        prev_used[i] = true;
        curr_used[j] = true;
    }
    FrameMatch {
        unmatched_prev: (0..n).filter(|&i| !prev_used[i]).collect(),
        unmatched_curr: (0..m).filter(|&j| !curr_used[j]).collect(),
        pairs,
        converged: tp.converged,
    }
}

/// Time-indexed detections of one person in one view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Tracklet {
    pub view_id: usize,
    pub track_id: usize,
    pub frames: BTreeMap<usize, Observation>,
}

impl Tracklet {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn timesteps(&self) -> impl Iterator<Item = usize> + '_ {
        self.frames.keys().copied()
    }

    pub fn overlaps(&self, other: &Tracklet) -> bool {
        self.frames.keys().any(|t| other.frames.contains_key(t))
    }
}

/// Chains [`match_consecutive`] over the timesteps of a single view.
/// `observations` must all belong to one view.
pub fn build_tracklets(observations: &[Observation], cfg: &TrackingConfig) -> Vec<Tracklet> {
    let mut by_t: BTreeMap<usize, Vec<&Observation>> = BTreeMap::new();
    for o in observations {
        by_t.entry(o.timestep).or_default().push(o);
    }
    let Some(view_id) = observations.first().map(|o| o.view_id) else {
        return Vec::new();
    };

    let mut tracklets: Vec<Tracklet> = Vec::new();
    let open = |obs: &Observation, tracklets: &mut Vec<Tracklet>| -> usize {
        let track_id = tracklets.len();
        let mut frames = BTreeMap::new();
        frames.insert(obs.timestep, obs.clone());
        tracklets.push(Tracklet {
            view_id,
            track_id,
            frames,
        });
        track_id
    };

    // track id of each detection at the previous timestep
    let mut prev: Option<(usize, Vec<Observation>, Vec<usize>)> = None;
    for (&t, curr) in &by_t {
        let curr: Vec<Observation> = curr.iter().map(|o| (*o).clone()).collect();
        let mut ids = vec![usize::MAX; curr.len()];
        if let Some((pt, prev_obs, prev_ids)) = &prev {
            if *pt + 1 == t {
                let fm = match_consecutive(prev_obs, &curr, cfg);
                for (i, j) in fm.pairs {
                    ids[j] = prev_ids[i];
                    tracklets[prev_ids[i]].frames.insert(t, curr[j].clone());
                }
            }
        }
        for (j, obs) in curr.iter().enumerate() {
            if ids[j] == usize::MAX {
                ids[j] = open(obs, &mut tracklets);
            }
        }
        prev = Some((t, curr, ids));
    }
    tracklets
}

/// Tracks every view independently. Output is keyed by view.
pub fn track_all_views(observations: &[Observation], cfg: &TrackingConfig) -> BTreeMap<usize, Vec<Tracklet>> {
    let grouped: Vec<(usize, Vec<Observation>)> = group_by_view(observations).into_iter().collect();
    grouped
        .par_iter()
        .map(|(v, obs)| (*v, build_tracklets(obs, cfg)))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

pub fn mean_joint_displacement(a: &[nalgebra::Vector3<f64>], b: &[nalgebra::Vector3<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).sum::<f64>() / a.len() as f64
}

/// Drops frames whose world joints jumped more than `gamma_outlier` (mean
/// per-joint distance) from the last kept frame. The first frame is always
/// kept; dropped frames are discarded.
pub fn filter_outliers(tracklet: &Tracklet, cams: &CameraSet, gamma_outlier: f64) -> Result<Tracklet> {
    let mut kept = BTreeMap::new();
    let mut last: Option<Vec<nalgebra::Vector3<f64>>> = None;
    for (&t, obs) in &tracklet.frames {
        let cam = cams.get(obs.view_id, t)?;
        let joints = world_joints(&obs.world_body(cam)?);
        if let Some(prev) = &last {
            if mean_joint_displacement(&joints, prev) > gamma_outlier {
                log::debug!(
                    "view {} track {}: dropping outlier frame {t}",
                    tracklet.view_id,
                    tracklet.track_id
                );
                continue;
            }
        }
        kept.insert(t, obs.clone());
        last = Some(joints);
    }
    Ok(Tracklet {
        frames: kept,
        ..tracklet.clone()
    })
}
