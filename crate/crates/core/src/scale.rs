//! Head-pelvis scale adjustment.
//!
//! Body models are metric; reconstructed scenes are not. Each detection whose
//! head and pelvis are both visible contributes the ratio between the
//! projected body-model head-pelvis length and the detected one. The mean of
//! these ratios rescales camera translations, scene points and the scene
//! scale, so the scene moves to meet the metric humans.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bodymodel::head_pelvis_length_2d;
use crate::error::{Error, Result};
use crate::geometry::Camera;
use crate::observation::{CameraSet, Observation};

/// Detected head-pelvis lengths below this are excluded from the ratio set.
pub const MIN_IMAGE_LENGTH_PX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RatioAggregate {
    #[default]
    Mean,
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct ScaleConfig {
    pub enabled: bool,
    pub min_image_length: f64,
    pub aggregate: RatioAggregate,
}

impl Default for ScaleConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            min_image_length: MIN_IMAGE_LENGTH_PX,
            aggregate: RatioAggregate::Mean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PairRatio {
    pub view_id: usize,
    pub timestep: usize,
    pub observation_id: u64,
    pub smpl_length: f64,
    pub image_length: f64,
    pub ratio: f64,
    /// The pelvis keypoint came from the coarse fallback.
    pub pelvis_from_coarse: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScaleReport {
    pub per_pair_ratios: Vec<PairRatio>,
    pub global_ratio: f64,
    pub input_scale: f64,
    pub adjusted_scale: f64,
}

impl ScaleReport {
    /// Report for a skipped or failed estimate: `r = 1`.
    pub fn unit(input_scale: f64) -> Self {
        Self {
            per_pair_ratios: Vec::new(),
            global_ratio: 1.0,
            input_scale,
            adjusted_scale: input_scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairOutcome {
    Ratio(PairRatio),
    Skip(SkipReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    NoPelvis,
    ShortImageLength,
    BehindCamera,
}

/// Ratio of projected to detected head-pelvis length for one detection.
pub fn pair_ratio(obs: &Observation, cam: &Camera, min_image_length: f64) -> Result<PairOutcome> {
    let Some(pelvis) = obs.pelvis_keypoint2d else {
        return Ok(PairOutcome::Skip(SkipReason::NoPelvis));
    };
    let image_length = (obs.head_keypoint2d - pelvis).norm();
    if image_length < min_image_length {
        return Ok(PairOutcome::Skip(SkipReason::ShortImageLength));
    }
    let body = obs.camera_body(cam)?;
    let smpl_length = match head_pelvis_length_2d(cam, &body) {
        Ok(l) => l,
        Err(Error::BehindCamera { .. }) => return Ok(PairOutcome::Skip(SkipReason::BehindCamera)),
        Err(e) => return Err(e),
    };
    Ok(PairOutcome::Ratio(PairRatio {
        view_id: obs.view_id,
        timestep: obs.timestep,
        observation_id: obs.id,
        smpl_length,
        image_length,
        ratio: smpl_length / image_length,
        pelvis_from_coarse: obs.pelvis_from_coarse,
    }))
}

pub fn global_ratio(ratios: &[f64], aggregate: RatioAggregate) -> Result<f64> {
    if ratios.is_empty() {
        return Err(Error::NoValidPairs);
    }
    Ok(match aggregate {
        RatioAggregate::Mean => ratios.iter().sum::<f64>() / ratios.len() as f64,
        RatioAggregate::Median => {
            let mut v = ratios.to_vec();
            v.sort_by(f64::total_cmp);
            let mid = v.len() / 2;
            if v.len() % 2 == 1 {
                v[mid]
            } else {
                0.5 * (v[mid - 1] + v[mid])
            }
        }
    })
}

/// The scene scale shared by all cameras. Cameras disagreeing by more than a
/// relative `1e-9` are rejected.
pub fn common_scene_scale(cams: &CameraSet) -> Result<f64> {
    let mut it = cams.iter().map(|(_, c)| c.scene_scale);
    let Some(first) = it.next() else {
        return Err(Error::Input("camera set is empty".into()));
    };
    for s in it {
        if (s - first).abs() > 1e-9 * first.abs() {
            return Err(Error::Input(format!(
                "cameras disagree on scene scale ({first} vs {s})"
            )));
        }
    }
    Ok(first)
}

/// Collects every valid pair and aggregates them. Observations are visited
/// in `(view, timestep, id)` order so the mean is reproducible.
pub fn estimate_scale(obs: &[Observation], cams: &CameraSet, cfg: &ScaleConfig) -> Result<ScaleReport> {
    let input_scale = common_scene_scale(cams)?;
    let mut ordered: Vec<&Observation> = obs.iter().collect();
    ordered.sort_by_key(|o| (o.view_id, o.timestep, o.id));
    let outcomes = ordered
        .par_iter()
        .map(|o| pair_ratio(o, cams.get(o.view_id, o.timestep)?, cfg.min_image_length))
        .collect::<Result<Vec<_>>>()?;
    let per_pair_ratios: Vec<PairRatio> = outcomes
        .into_iter()
        .filter_map(|o| match o {
            PairOutcome::Ratio(r) => Some(r),
            PairOutcome::Skip(_) => None,
        })
        .collect();
    let ratios: Vec<f64> = per_pair_ratios.iter().map(|p| p.ratio).collect();
    let global_ratio = global_ratio(&ratios, cfg.aggregate)?;
    Ok(ScaleReport {
        per_pair_ratios,
        global_ratio,
        input_scale,
        adjusted_scale: global_ratio * input_scale,
    })
}

/// Multiplies camera translations, scene points and scene scales by
/// `factor`. Rotations and intrinsics are untouched.
pub fn apply_scale(points: &mut [Vector3<f64>], cams: &mut CameraSet, factor: f64) -> Result<()> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(Error::Input(format!("scale factor {factor} is not positive")));
    }
    for p in points.iter_mut() {
        *p *= factor;
    }
    for (_, cam) in cams.iter_mut() {
        cam.world_from_cam.translation *= factor;
        cam.scene_scale *= factor;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bodymodel::{world_joints, BodyParams, HEAD, PELVIS};
    use crate::geometry::{axis_angle_to_matrix, Intrinsics, SimilarityTransform};
    use nalgebra::Vector2;

    fn upright_observation(cam: &Camera, head_depth: f64) -> Observation {
        let body = BodyParams {
            root_rotation: axis_angle_to_matrix(&Vector3::new(std::f64::consts::PI, 0.0, 0.0)),
            head_translation: Vector3::new(0.0, 0.0, head_depth),
            ..BodyParams::default()
        };
        let joints = world_joints(&body);
        Observation {
            id: 0,
            view_id: 0,
            timestep: 0,
            token: vec![0.0],
            head_keypoint2d: cam.project_camera_point(&joints[HEAD]).unwrap(),
            pelvis_keypoint2d: Some(cam.project_camera_point(&joints[PELVIS]).unwrap()),
            coarse_depth: head_depth / cam.scene_scale,
            depth_residual: 0.0,
            pelvis_from_coarse: false,
            body,
        }
    }

    fn camera() -> Camera {
        Camera::new(Intrinsics::new(600.0, 600.0, 320.0, 240.0), SimilarityTransform::identity(), 1.0)
    }

    #[test]
    fn matching_keypoints_give_unit_ratio() {
        let cam = camera();
        let o = upright_observation(&cam, 3.0);
        let PairOutcome::Ratio(r) = pair_ratio(&o, &cam, MIN_IMAGE_LENGTH_PX).unwrap() else {
            panic!("expected a ratio");
        };
        assert!((r.ratio - 1.0).abs() < 1e-12);
        // head-pelvis length 0.6 at 3 m with fx 600
        assert!((r.image_length - 120.0).abs() < 1e-9);
    }

    #[test]
    fn halved_detection_gives_ratio_two() {
        let cam = camera();
        let mut o = upright_observation(&cam, 3.0);
        let head = o.head_keypoint2d;
        o.pelvis_keypoint2d = Some(head + 0.5 * (o.pelvis_keypoint2d.unwrap() - head));
        let PairOutcome::Ratio(r) = pair_ratio(&o, &cam, MIN_IMAGE_LENGTH_PX).unwrap() else {
            panic!("expected a ratio");
        };
        assert!((r.ratio - 2.0).abs() < 1e-12);
    }

    #[test]
    fn half_scale_scene_is_detected() {
        // keypoints from a person 4 m away; the scene believes 2 m
        let cam = camera();
        let truth = upright_observation(&cam, 4.0);
        let mut half = cam;
        half.scene_scale = 0.5;
        let PairOutcome::Ratio(r) = pair_ratio(&truth, &half, MIN_IMAGE_LENGTH_PX).unwrap() else {
            panic!("expected a ratio");
        };
        assert!((r.ratio - 2.0).abs() < 1e-12);
    }

    #[test]
    fn skips() {
        let cam = camera();
        let mut o = upright_observation(&cam, 3.0);
        o.pelvis_keypoint2d = Some(o.head_keypoint2d + Vector2::new(1.0, 1.0));
        assert_eq!(
            pair_ratio(&o, &cam, MIN_IMAGE_LENGTH_PX).unwrap(),
            PairOutcome::Skip(SkipReason::ShortImageLength)
        );
        o.pelvis_keypoint2d = None;
        assert_eq!(
            pair_ratio(&o, &cam, MIN_IMAGE_LENGTH_PX).unwrap(),
            PairOutcome::Skip(SkipReason::NoPelvis)
        );
    }

    #[test]
    fn aggregation() {
        assert_eq!(global_ratio(&[1.0, 1.0, 1.0], RatioAggregate::Mean).unwrap(), 1.0);
        assert_eq!(global_ratio(&[1.0, 3.0], RatioAggregate::Mean).unwrap(), 2.0);
        assert_eq!(global_ratio(&[1.0, 3.0, 10.0], RatioAggregate::Median).unwrap(), 3.0);
        assert!(matches!(global_ratio(&[], RatioAggregate::Mean), Err(Error::NoValidPairs)));
        let s = [1.1, 0.9, 1.4];
        let doubled: Vec<f64> = s.iter().chain(&s).copied().collect();
        assert!((global_ratio(&s, RatioAggregate::Mean).unwrap() - global_ratio(&doubled, RatioAggregate::Mean).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn apply_scale_doubles_distances() {
        let mut cams = CameraSet::new();
        let mut c = camera();
        c.world_from_cam.translation = Vector3::new(1.0, 2.0, 3.0);
        cams.insert(0, 0, c);
        let mut pts = vec![Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 1.0, 0.0)];
        let before = (pts[0] - pts[1]).norm();
        apply_scale(&mut pts, &mut cams, 2.0).unwrap();
        assert!(((pts[0] - pts[1]).norm() - 2.0 * before).abs() < 1e-15);
        let c2 = cams.get(0, 0).unwrap();
        assert_eq!(c2.center(), Vector3::new(2.0, 4.0, 6.0));
        assert_eq!(c2.scene_scale, 2.0);
        assert_eq!(c2.intrinsics, c.intrinsics);

        let snapshot = cams.clone();
        apply_scale(&mut pts, &mut cams, 1.0).unwrap();
        assert_eq!(snapshot, cams);
    }
}
