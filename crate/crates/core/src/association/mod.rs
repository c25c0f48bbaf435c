//! Cross-view identity association.
//!
//! Views are linked by a k-nearest-neighbour graph over their mean camera
//! centers. For every linked pair, tracklets are compared with a weighted sum
//! of world-joint distance and canonical-joint distance averaged over their
//! shared timesteps, matched one-to-one, gated, and finally merged into global
//! identities with a conflict-aware union-find.

pub mod hungarian;

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bodymodel::{canonical_joints, world_joints};
use crate::error::Result;
use crate::observation::CameraSet;
use crate::tracking::Tracklet;

/// Which cues enter the tracklet matching cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CostMode {
    Pose,
    Position,
    #[default]
    Combined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct AssociationConfig {
    pub k: usize,
    /// Meters.
    pub gamma_reid: f64,
    pub lambda_position: f64,
    pub lambda_pose: f64,
    pub cost_mode: CostMode,
}

impl Default for AssociationConfig {
    fn default() -> Self {
        Self {
            k: 2,
            gamma_reid: 0.35,
            lambda_position: 0.8,
            lambda_pose: 0.2,
            cost_mode: CostMode::Combined,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    pub position: f64,
    pub pose: f64,
}

impl AssociationConfig {
    pub fn weights(&self) -> CostWeights {
        match self.cost_mode {
            CostMode::Combined => CostWeights {
                position: self.lambda_position,
                pose: self.lambda_pose,
            },
            CostMode::Position => CostWeights {
                position: 1.0,
                pose: 0.0,
            },
            CostMode::Pose => CostWeights {
                position: 0.0,
                pose: 1.0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ViewGraph {
    pub mean_camera_centers: BTreeMap<usize, [f64; 3]>,
    pub edges: BTreeSet<(usize, usize)>,
}

pub fn build_view_graph(cams: &CameraSet, k: usize) -> ViewGraph {
    let mut sums: BTreeMap<usize, (Vector3<f64>, usize)> = BTreeMap::new();
    for (&(v, _), cam) in cams.iter() {
        let e = sums.entry(v).or_insert((Vector3::zeros(), 0));
        e.0 += cam.center();
        e.1 += 1;
    }
    let centers: Vec<(usize, Vector3<f64>)> = sums
        .into_iter()
        .map(|(v, (s, n))| (v, s / n as f64))
        .collect();

    let k = k.min(centers.len().saturating_sub(1));
    let mut edges = BTreeSet::new();
    for (i, (vi, ci)) in centers.iter().enumerate() {
        let mut others: Vec<(f64, usize)> = centers
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, (vj, cj))| ((ci - cj).norm(), *vj))
            .collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, vj) in others.iter().take(k) {
            edges.insert((*vi.min(&vj), *vi.max(&vj)));
        }
    }
    ViewGraph {
        mean_camera_centers: centers.into_iter().map(|(v, c)| (v, [c.x, c.y, c.z])).collect(),
        edges,
    }
}

/// World and canonical joints of a tracklet, computed once.
#[derive(Debug, Clone)]
pub struct TrackletJoints {
    pub view_id: usize,
    pub track_id: usize,
    pub world: BTreeMap<usize, Vec<Vector3<f64>>>,
    pub canonical: BTreeMap<usize, Vec<Vector3<f64>>>,
}

impl TrackletJoints {
    pub fn new(tracklet: &Tracklet, cams: &CameraSet) -> Result<Self> {
        let mut world = BTreeMap::new();
        let mut canonical = BTreeMap::new();
        for (&t, obs) in &tracklet.frames {
            let cam = cams.get(obs.view_id, t)?;
            world.insert(t, world_joints(&obs.world_body(cam)?));
            canonical.insert(t, canonical_joints(&obs.body));
        }
        Ok(Self {
            view_id: tracklet.view_id,
            track_id: tracklet.track_id,
            world,
            canonical,
        })
    }
}

fn mean_distance(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).sum::<f64>() / a.len() as f64
}

/// Matching cost over the shared timesteps; `None` when there are none.
pub fn joints_cost(a: &TrackletJoints, b: &TrackletJoints, weights: CostWeights) -> Option<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for (t, wa) in &a.world {
        let Some(wb) = b.world.get(t) else { continue };
        let mut c = 0.0;
        if weights.position != 0.0 {
            c += weights.position * mean_distance(wa, wb);
        }
        if weights.pose != 0.0 {
            c += weights.pose * mean_distance(&a.canonical[t], &b.canonical[t]);
        }
        total += c;
        count += 1;
    }
    (count > 0).then(|| total / count as f64)
}

pub fn tracklet_cost(a: &Tracklet, b: &Tracklet, cams: &CameraSet, weights: CostWeights) -> Result<Option<f64>> {
    let ja = TrackletJoints::new(a, cams)?;
    let jb = TrackletJoints::new(b, cams)?;
    Ok(joints_cost(&ja, &jb, weights))
}

/// A retained cross-view match between two tracklets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrackMatch {
    pub view_a: usize,
    pub track_a: usize,
    pub view_b: usize,
    pub track_b: usize,
    pub cost: f64,
}

/// Optimal one-to-one assignment on `cost` (infinite = no overlap), keeping
/// pairs strictly below `gamma_reid`. Returns `(row, col, cost)`.
pub fn assign_and_gate(cost: &DMatrix<f64>, gamma_reid: f64) -> Vec<(usize, usize, f64)> {
    hungarian::solve(cost)
        .into_iter()
        .enumerate()
        .filter_map(|(r, c)| c.map(|c| (r, c, cost[(r, c)])))
        .filter(|&(_, _, c)| c < gamma_reid)
        .collect()
}

pub fn match_view_pair_joints(
    a: &[TrackletJoints],
    b: &[TrackletJoints],
    weights: CostWeights,
    gamma_reid: f64,
) -> Vec<TrackMatch> {
    let cost = DMatrix::from_fn(a.len(), b.len(), |i, j| {
        joints_cost(&a[i], &b[j], weights).unwrap_or(f64::INFINITY)
    });
    assign_and_gate(&cost, gamma_reid)
        .into_iter()
        .map(|(i, j, c)| TrackMatch {
            view_a: a[i].view_id,
            track_a: a[i].track_id,
            view_b: b[j].view_id,
            track_b: b[j].track_id,
            cost: c,
        })
        .collect()
}

pub fn match_view_pair(
    tracklets_a: &[Tracklet],
    tracklets_b: &[Tracklet],
    cams: &CameraSet,
    weights: CostWeights,
    gamma_reid: f64,
) -> Result<Vec<TrackMatch>> {
    let a = tracklets_a
        .iter()
        .map(|t| TrackletJoints::new(t, cams))
        .collect::<Result<Vec<_>>>()?;
    let b = tracklets_b
        .iter()
        .map(|t| TrackletJoints::new(t, cams))
        .collect::<Result<Vec<_>>>()?;
    Ok(match_view_pair_joints(&a, &b, weights, gamma_reid))
}

/// `(view, track) -> global id`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GlobalIdentityMap {
    ids: BTreeMap<(usize, usize), usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct IdentityEntry {
    view_id: usize,
    track_id: usize,
    global_id: usize,
}

impl GlobalIdentityMap {
    pub fn get(&self, view: usize, track: usize) -> Option<usize> {
        self.ids.get(&(view, track)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(usize, usize), &usize)> {
        self.ids.iter()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn num_identities(&self) -> usize {
        self.ids.values().collect::<BTreeSet<_>>().len()
    }

    pub fn insert(&mut self, view: usize, track: usize, gid: usize) {
        self.ids.insert((view, track), gid);
    }
}

impl Serialize for GlobalIdentityMap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let entries: Vec<IdentityEntry> = self
            .ids
            .iter()
            .map(|(&(view_id, track_id), &global_id)| IdentityEntry {
                view_id,
                track_id,
                global_id,
            })
            .collect();
        entries.serialize(s)
    }
}

impl<'de> Deserialize<'de> for GlobalIdentityMap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let entries = Vec::<IdentityEntry>::deserialize(d)?;
        Ok(Self {
            ids: entries
                .into_iter()
                .map(|e| ((e.view_id, e.track_id), e.global_id))
                .collect(),
        })
    }
}

/// Union-find over tracklets, consuming matches in ascending cost. A union
/// that would put two same-view tracklets with a shared timestep into one
/// identity is rejected. Identities are numbered by their smallest
/// `(view, track)` member.
pub fn merge_global_ids(tracklets: &BTreeMap<usize, Vec<Tracklet>>, matches: &[TrackMatch]) -> GlobalIdentityMap {
    let nodes: Vec<&Tracklet> = tracklets.values().flatten().collect();
    let index: BTreeMap<(usize, usize), usize> = nodes
        .iter()
        .enumerate()
        .map(|(i, t)| ((t.view_id, t.track_id), i))
        .collect();

    let mut parent: Vec<usize> = (0..nodes.len()).collect();
    let mut members: Vec<Vec<usize>> = (0..nodes.len()).map(|i| vec![i]).collect();

    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }

    let mut ordered: Vec<&TrackMatch> = matches.iter().collect();
    ordered.sort_by(|a, b| {
        a.cost
            .total_cmp(&b.cost)
            .then((a.view_a, a.track_a, a.view_b, a.track_b).cmp(&(b.view_a, b.track_a, b.view_b, b.track_b)))
    });

    for m in ordered {
        let (Some(&ia), Some(&ib)) = (index.get(&(m.view_a, m.track_a)), index.get(&(m.view_b, m.track_b))) else {
            continue;
        };
        let (ra, rb) = (find(&mut parent, ia), find(&mut parent, ib));
        if ra == rb {
            continue;
        }
        let conflict = members[ra].iter().any(|&x| {
            members[rb]
                .iter()
                .any(|&y| nodes[x].view_id == nodes[y].view_id && nodes[x].overlaps(nodes[y]))
        });
        if conflict {
            log::debug!(
                "rejecting merge of ({}, {}) and ({}, {}): same-view overlap",
                m.view_a,
                m.track_a,
                m.view_b,
                m.track_b
            );
            continue;
        }
        let (keep, drop) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[drop] = keep;
        let moved = std::mem::take(&mut members[drop]);
        members[keep].extend(moved);
    }

    let mut components: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for i in 0..nodes.len() {
        let r = find(&mut parent, i);
        let key = members[r]
            .iter()
            .map(|&x| (nodes[x].view_id, nodes[x].track_id))
            .min()
            .unwrap_or((usize::MAX, usize::MAX));
        components.entry(key).or_default().push(i);
    }

    let mut map = GlobalIdentityMap::default();
    for (gid, (_, comp)) in components.into_iter().enumerate() {
        for i in comp {
            map.insert(nodes[i].view_id, nodes[i].track_id, gid);
        }
    }
    map
}

/// Per-edge match list as emitted in the association report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EdgeMatches {
    pub view_a: usize,
    pub view_b: usize,
    pub matches: Vec<TrackMatch>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Association {
    pub graph: ViewGraph,
    pub edges: Vec<EdgeMatches>,
    pub identities: GlobalIdentityMap,
}

/// Full cross-view association of per-view tracklets.
pub fn associate(
    tracklets: &BTreeMap<usize, Vec<Tracklet>>,
    cams: &CameraSet,
    cfg: &AssociationConfig,
) -> Result<Association> {
    let graph = build_view_graph(cams, cfg.k);
    let weights = cfg.weights();

    let prepared: BTreeMap<usize, Vec<TrackletJoints>> = tracklets
        .par_iter()
        .map(|(v, ts)| {
            ts.iter()
                .map(|t| TrackletJoints::new(t, cams))
                .collect::<Result<Vec<_>>>()
                .map(|j| (*v, j))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .collect();

    let empty = Vec::new();
    let edges: Vec<EdgeMatches> = graph
        .edges
        .iter()
        .copied()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&(va, vb)| {
            let a = prepared.get(&va).unwrap_or(&empty);
            let b = prepared.get(&vb).unwrap_or(&empty);
            EdgeMatches {
                view_a: va,
                view_b: vb,
                matches: match_view_pair_joints(a, b, weights, cfg.gamma_reid),
            }
        })
        .collect();

    let all: Vec<TrackMatch> = edges.iter().flat_map(|e| e.matches.iter().copied()).collect();
    let identities = merge_global_ids(tracklets, &all);
    Ok(Association {
        graph,
        edges,
        identities,
    })
}
