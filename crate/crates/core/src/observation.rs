//! Per-view detections and the camera table they refer to.

use std::collections::BTreeMap;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bodymodel::BodyParams;
use crate::error::{Error, Result};
use crate::geometry::Camera;
use crate::serde_util;

/// One detected person in one view at one timestep.
///
/// `body` is expressed in the camera frame. Its `head_translation` is not
/// trusted on input: the head is always re-derived from the head keypoint and
/// the depth sample through [`Observation::head_in_camera`], so that scene
/// rescaling carries over to the human anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Observation {
    pub id: u64,
    pub view_id: usize,
    pub timestep: usize,
    pub token: Vec<f64>,
    pub body: BodyParams,
    #[serde(with = "serde_util::vec2")]
    pub head_keypoint2d: Vector2<f64>,
    #[serde(with = "serde_util::opt_vec2", default)]
    pub pelvis_keypoint2d: Option<Vector2<f64>>,
    /// Normalized scene units; see [`Camera`].
    pub coarse_depth: f64,
    #[serde(default)]
    pub depth_residual: f64,
    #[serde(default)]
    pub pelvis_from_coarse: bool,
}

impl Observation {
    pub fn validate(&self) -> Result<()> {
        if !self.token.iter().all(|v| v.is_finite()) {
            return Err(Error::Input(format!("observation {}: token is not finite", self.id)));
        }
        if !(self.coarse_depth > 0.0) {
            return Err(Error::Input(format!(
                "observation {}: coarse depth {} is not positive",
                self.id, self.coarse_depth
            )));
        }
        self.body
            .validate()
            .map_err(|e| Error::Input(format!("observation {}: {e}", self.id)))
    }

    pub fn head_in_camera(&self, cam: &Camera) -> Result<Vector3<f64>> {
        cam.head_in_camera(
            self.head_keypoint2d.x,
            self.head_keypoint2d.y,
            self.coarse_depth,
            self.depth_residual,
        )
    }

    /// Camera-frame body anchored at the unprojected head.
    pub fn camera_body(&self, cam: &Camera) -> Result<BodyParams> {
        Ok(BodyParams {
            head_translation: self.head_in_camera(cam)?,
            ..self.body.clone()
        })
    }

    pub fn world_body(&self, cam: &Camera) -> Result<BodyParams> {
        Ok(self.camera_body(cam)?.camera_to_world(cam))
    }

    pub fn token_distance(&self, other: &Observation) -> f64 {
        self.token
            .iter()
            .zip(&other.token)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Cameras indexed by `(view, timestep)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CameraSet {
    cams: BTreeMap<(usize, usize), Camera>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct CameraEntry {
    view_id: usize,
    timestep: usize,
    camera: Camera,
}

impl CameraSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, view: usize, t: usize, cam: Camera) {
        self.cams.insert((view, t), cam);
    }

    pub fn get(&self, view: usize, t: usize) -> Result<&Camera> {
        self.cams
            .get(&(view, t))
            .ok_or_else(|| Error::Input(format!("no camera for view {view} at timestep {t}")))
    }

    pub fn try_get(&self, view: usize, t: usize) -> Option<&Camera> {
        self.cams.get(&(view, t))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(usize, usize), &Camera)> {
        self.cams.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&(usize, usize), &mut Camera)> {
        self.cams.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.cams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cams.is_empty()
    }

    pub fn views(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.cams.keys().map(|k| k.0).collect();
        v.dedup();
        v
    }

    /// Cameras at one timestep, ordered by view.
    pub fn at_timestep(&self, t: usize) -> Vec<(usize, &Camera)> {
        self.cams
            .iter()
            .filter(|((_, ct), _)| *ct == t)
            .map(|((v, _), c)| (*v, c))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        for ((v, t), c) in &self.cams {
            c.validate()
                .map_err(|e| Error::Input(format!("camera view {v} timestep {t}: {e}")))?;
        }
        Ok(())
    }
}

impl Serialize for CameraSet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let entries: Vec<CameraEntry> = self
            .cams
            .iter()
            .map(|(&(view_id, timestep), &camera)| CameraEntry {
                view_id,
                timestep,
                camera,
            })
            .collect();
        entries.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CameraSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let entries = Vec::<CameraEntry>::deserialize(d)?;
        let mut set = CameraSet::new();
        for e in entries {
            set.insert(e.view_id, e.timestep, e.camera);
        }
        Ok(set)
    }
}

/// Groups observations by view, each list sorted by `(timestep, id)`.
pub fn group_by_view(observations: &[Observation]) -> BTreeMap<usize, Vec<Observation>> {
    let mut by_view: BTreeMap<usize, Vec<Observation>> = BTreeMap::new();
    for o in observations {
        by_view.entry(o.view_id).or_default().push(o.clone());
    }
    for list in by_view.values_mut() {
        list.sort_by_key(|o| (o.timestep, o.id));
    }
    by_view
}
