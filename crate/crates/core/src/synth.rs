//! Seeded synthetic scenes with ground truth.
//!
//! People walk on the ground plane (y up) with Ornstein-Uhlenbeck smoothed
//! velocities while a ring of cameras looks inward. Every visible person in
//! every view yields one observation built from the true state plus noise,
//! with within-frame order shuffled and identities hidden. The randomness
//! comes from a single `ChaCha8Rng` seeded with `SynthConfig::seed`;
//! generation is single-threaded so a seed fixes the scenario bit for bit.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bodymodel::{canonical_joints, place_joints, world_joints, BodyParams, HEAD, NUM_POSE_SLOTS, NUM_SHAPE, PELVIS, SHAPE_LENGTH_GAIN};
use crate::error::{Error, Result};
use crate::geometry::{axis_angle_to_matrix, Camera, Intrinsics, SimilarityTransform};
use crate::observation::{CameraSet, Observation};
use crate::serde_util;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CameraMotion {
    #[default]
    Static,
    /// Each camera drifts along the ring at `orbit_rate` rad per frame.
    Orbit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct SynthConfig {
    pub seed: u64,
    pub timesteps: usize,
    pub views: usize,
    pub persons: usize,
    pub fps: f64,
    /// Mean walking speed in m/s.
    pub walk_speed: f64,
    /// Velocity mean reversion per frame, in (0, 1].
    pub velocity_reversion: f64,
    /// Standard deviation of the per-frame velocity innovation, m/s.
    pub step_std: f64,
    pub spawn_radius: f64,
    pub camera_motion: CameraMotion,
    pub orbit_rate: f64,
    pub ring_radius: f64,
    pub camera_height: f64,
    pub token_dim: usize,
    /// RMS distance between a person's archetype and the origin of token space.
    pub token_spread: f64,
    /// RMS norm of the per-frame token perturbation.
    pub token_noise: f64,
    pub keypoint_noise_px: f64,
    /// Per-component noise on pose slots, radians.
    pub pose_noise: f64,
    pub shape_noise: f64,
    /// Relative depth error, applied to the residual.
    pub depth_noise: f64,
    pub occlusion_rate: f64,
    /// Fraction of detections whose pelvis comes from the coarse fallback.
    pub coarse_pelvis_rate: f64,
    pub coarse_pelvis_noise_px: f64,
    pub true_scale: f64,
    /// Camera translations and scene scale are multiplied by this.
    pub scale_error: f64,
    /// Persons 0 and 1 share world joints but differ in canonical pose.
    pub identical_position_pair: bool,
    /// All persons share one pose and shape.
    pub shared_body: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            timesteps: 30,
            views: 4,
            persons: 3,
            fps: 30.0,
            walk_speed: 1.2,
            velocity_reversion: 0.1,
            step_std: 0.15,
            spawn_radius: 2.0,
            camera_motion: CameraMotion::Static,
            orbit_rate: 0.002,
            ring_radius: 6.0,
            camera_height: 1.5,
            token_dim: 16,
            token_spread: 2.0,
            token_noise: 0.05,
            keypoint_noise_px: 0.0,
            pose_noise: 0.0,
            shape_noise: 0.0,
            depth_noise: 0.0,
            occlusion_rate: 0.0,
            coarse_pelvis_rate: 0.0,
            coarse_pelvis_noise_px: 3.0,
            true_scale: 1.0,
            scale_error: 1.0,
            identical_position_pair: false,
            shared_body: false,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be positive, got {v}")))
            }
        };
        let non_negative = |field: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be non-negative, got {v}")))
            }
        };
        let rate = |field: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(field, format!("must lie in [0, 1], got {v}")))
            }
        };
        for (field, v) in [("timesteps", self.timesteps), ("views", self.views), ("persons", self.persons), ("tokenDim", self.token_dim)] {
            if v == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        positive("fps", self.fps)?;
        positive("ringRadius", self.ring_radius)?;
        positive("trueScale", self.true_scale)?;
        positive("scaleError", self.scale_error)?;
        if !(self.velocity_reversion > 0.0 && self.velocity_reversion <= 1.0) {
            return Err(Error::config("velocityReversion", "must lie in (0, 1]"));
        }
        for (field, v) in [
            ("walkSpeed", self.walk_speed),
            ("stepStd", self.step_std),
            ("spawnRadius", self.spawn_radius),
            ("orbitRate", self.orbit_rate.abs()),
            ("cameraHeight", self.camera_height.abs()),
            ("tokenSpread", self.token_spread),
            ("tokenNoise", self.token_noise),
            ("keypointNoisePx", self.keypoint_noise_px),
            ("poseNoise", self.pose_noise),
            ("shapeNoise", self.shape_noise),
            ("depthNoise", self.depth_noise),
            ("coarsePelvisNoisePx", self.coarse_pelvis_noise_px),
        ] {
            non_negative(field, v)?;
        }
        rate("occlusionRate", self.occlusion_rate)?;
        rate("coarsePelvisRate", self.coarse_pelvis_rate)?;
        if self.identical_position_pair && self.persons < 2 {
            return Err(Error::config("identicalPositionPair", "needs at least 2 persons"));
        }
        Ok(())
    }

    /// Top-level TOML keys, `key=value` overrides, then validation.
    pub fn from_toml_with(text: &str, overrides: &[String]) -> Result<Self> {
        let cfg: SynthConfig = crate::config::parse_toml(text, overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn describe() -> String {
        let body = toml::to_string_pretty(&SynthConfig::default()).unwrap_or_default();
        format!("# Scenario defaults. Every key is optional; override with --set key=value.\n# cameraMotion: static | orbit\n\n{body}")
    }
}

/// World-frame ground truth of one person.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrueHuman {
    pub person: usize,
    /// One entry per timestep; `headTranslation` is the world head position.
    pub frames: Vec<BodyParams>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IdentityLabel {
    pub observation_id: u64,
    pub person: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Scenario {
    pub config: SynthConfig,
    pub true_scale: f64,
    pub corrupted_scale: f64,
    pub true_humans: Vec<TrueHuman>,
    /// Metric cameras.
    pub true_cameras: CameraSet,
    /// Cameras as a reconstruction would report them, off by `scaleError`.
    pub cameras: CameraSet,
    #[serde(with = "serde_util::vec3_list")]
    pub true_scene_points: Vec<Vector3<f64>>,
    #[serde(with = "serde_util::vec3_list")]
    pub scene_points: Vec<Vector3<f64>>,
    pub observations: Vec<Observation>,
    pub true_identity: Vec<IdentityLabel>,
}

impl Scenario {
    pub fn true_body(&self, person: usize, t: usize) -> &BodyParams {
        &self.true_humans[person].frames[t]
    }

    pub fn true_world_joints(&self, person: usize, t: usize) -> Vec<Vector3<f64>> {
        world_joints(self.true_body(person, t))
    }

    pub fn identity_of(&self) -> BTreeMap<u64, usize> {
        self.true_identity.iter().map(|l| (l.observation_id, l.person)).collect()
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn gaussian3(rng: &mut ChaCha8Rng, sigma: f64) -> Vector3<f64> {
    Vector3::new(gaussian(rng), gaussian(rng), gaussian(rng)) * sigma
}

/// OpenCV-style camera at `center` looking at `target`, world y up.
pub fn look_at(center: Vector3<f64>, target: Vector3<f64>, intrinsics: Intrinsics, scene_scale: f64) -> Camera {
    let z = (target - center).normalize();
    let x = z.cross(&Vector3::y()).normalize();
    let y = z.cross(&x);
    Camera::new(intrinsics, SimilarityTransform::rigid(Matrix3::from_columns(&[x, y, z]), center), scene_scale)
}

pub fn default_intrinsics() -> Intrinsics {
    Intrinsics::new(600.0, 600.0, 320.0, 240.0)
}

/// Height of the pelvis above the ground for shape `beta0`.
const PELVIS_HEIGHT: f64 = 0.95;
/// Rest distance from pelvis to head along the spine.
const SPINE_LENGTH: f64 = 0.6;
/// Share of the coarse depth guess that the residual corrects.
const COARSE_DEPTH_BIAS: f64 = 0.1;

struct PersonModel {
    base_theta: Vec<[f64; 3]>,
    beta: [f64; NUM_SHAPE],
    gait_phase: f64,
    archetype: Vec<f64>,
    position: Vector2<f64>,
    velocity: Vector2<f64>,
}

fn person_model(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> PersonModel {
    let mut base_theta = vec![[0.0; 3]; NUM_POSE_SLOTS];
    for slot in base_theta.iter_mut().take(24).skip(1) {
        for v in slot.iter_mut() {
            *v = 0.15 * gaussian(rng);
        }
    }
    let mut beta = [0.0; NUM_SHAPE];
    for b in beta.iter_mut() {
        *b = 0.5 * gaussian(rng);
    }
    let component = cfg.token_spread / (cfg.token_dim as f64).sqrt();
    let archetype = (0..cfg.token_dim).map(|_| component * gaussian(rng)).collect();
    let r = cfg.spawn_radius * rng.random::<f64>().sqrt();
    let a = rng.random_range(0.0..TAU);
    let heading = rng.random_range(0.0..TAU);
    PersonModel {
        base_theta,
        beta,
        gait_phase: rng.random_range(0.0..TAU),
        archetype,
        position: Vector2::new(r * a.cos(), r * a.sin()),
        velocity: cfg.walk_speed * Vector2::new(heading.cos(), heading.sin()),
    }
}

/// World body at one timestep. Position is on the ground plane `(x, z)`.
fn body_at(model: &PersonModel, t: usize, cfg: &SynthConfig) -> BodyParams {
    let mut theta = model.base_theta.clone();
    // leg swing about the hips and knees
    let swing = 0.35 * (model.gait_phase + 2.0 * PI * 1.8 * t as f64 / cfg.fps).sin();
    theta[1][0] += swing;
    theta[2][0] -= swing;
    theta[4][0] += 0.5 * swing.abs();
    theta[5][0] += 0.5 * swing.abs();
    let heading = model.velocity.y.atan2(model.velocity.x);
    let root_rotation = axis_angle_to_matrix(&Vector3::new(0.0, -heading + PI / 2.0, 0.0));
    let length = 1.0 + SHAPE_LENGTH_GAIN * model.beta[0];
    BodyParams {
        theta,
        beta: model.beta,
        root_rotation,
        head_translation: Vector3::new(model.position.x, PELVIS_HEIGHT + SPINE_LENGTH * length, model.position.y),
    }
}

fn step(model: &mut PersonModel, rng: &mut ChaCha8Rng, cfg: &SynthConfig) {
    let dt = 1.0 / cfg.fps;
    let speed = model.velocity.norm();
    let target = if speed > 0.0 { model.velocity * (cfg.walk_speed / speed) } else { model.velocity };
    // soft pull toward the middle keeps walkers inside the ring
    let pull = -0.05 * model.position;
    let noise = Vector2::new(gaussian(rng), gaussian(rng)) * cfg.step_std;
    model.velocity += cfg.velocity_reversion * (target - model.velocity) + pull * dt + noise * dt.sqrt();
    model.position += model.velocity * dt;
}

fn camera_at(v: usize, t: usize, cfg: &SynthConfig, offsets: &[f64]) -> Camera {
    let mut angle = TAU * v as f64 / cfg.views as f64 + offsets[v];
    if cfg.camera_motion == CameraMotion::Orbit {
        angle += cfg.orbit_rate * t as f64;
    }
    let center = Vector3::new(cfg.ring_radius * angle.cos(), cfg.camera_height, cfg.ring_radius * angle.sin());
    look_at(center, Vector3::new(0.0, 1.0, 0.0), default_intrinsics(), cfg.true_scale)
}

fn perturb_rotation(r: &Matrix3<f64>, rng: &mut ChaCha8Rng, sigma: f64) -> Matrix3<f64> {
    if sigma == 0.0 {
        return *r;
    }
    r * axis_angle_to_matrix(&gaussian3(rng, sigma))
}

/// Builds a scenario. Rejects invalid configs with `Error::Config`.
pub fn generate(cfg: &SynthConfig) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let offsets: Vec<f64> = (0..cfg.views).map(|_| rng.random_range(-0.2..0.2)).collect();
    let mut models: Vec<PersonModel> = (0..cfg.persons).map(|_| person_model(&mut rng, cfg)).collect();
    if cfg.shared_body {
        let (theta, beta) = (models[0].base_theta.clone(), models[0].beta);
        for m in models.iter_mut() {
            m.base_theta = theta.clone();
            m.beta = beta;
        }
    }

    let mut true_humans: Vec<TrueHuman> = (0..cfg.persons).map(|person| TrueHuman { person, frames: Vec::with_capacity(cfg.timesteps) }).collect();
    for t in 0..cfg.timesteps {
        for (m, model) in models.iter_mut().enumerate() {
            if t > 0 {
                step(model, &mut rng, cfg);
            }
            true_humans[m].frames.push(body_at(model, t, cfg));
        }
    }
    if cfg.identical_position_pair {
        // person 1 copies person 0's world joints through a rotated pelvis
        let q = Vector3::new(0.0, 0.0, 0.9);
        let rq = axis_angle_to_matrix(&q);
        for t in 0..cfg.timesteps {
            let a = true_humans[0].frames[t].clone();
            let mut b = a.clone();
            b.theta[0] = [q.x, q.y, q.z];
            b.root_rotation = a.root_rotation * rq.transpose();
            true_humans[1].frames[t] = b;
        }
    }

    let mut true_cameras = CameraSet::new();
    let mut cameras = CameraSet::new();
    for t in 0..cfg.timesteps {
        for v in 0..cfg.views {
            let cam = camera_at(v, t, cfg, &offsets);
            let mut corrupted = cam;
            corrupted.world_from_cam.translation *= cfg.scale_error;
            corrupted.scene_scale *= cfg.scale_error;
            true_cameras.insert(v, t, cam);
            cameras.insert(v, t, corrupted);
        }
    }

    let true_scene_points: Vec<Vector3<f64>> = (-1..=1)
        .flat_map(|i| (-1..=1).map(move |k| Vector3::new(2.0 * i as f64, 0.0, 2.0 * k as f64)))
        .collect();
    let scene_points = true_scene_points.iter().map(|p| p * cfg.scale_error).collect();

    let token_component = cfg.token_noise / (cfg.token_dim as f64).sqrt();
    let px = Normal::new(0.0, cfg.keypoint_noise_px).map_err(|e| Error::config("keypointNoisePx", e.to_string()))?;
    let mut observations = Vec::new();
    let mut true_identity = Vec::new();
    let mut next_id = 0u64;
    for t in 0..cfg.timesteps {
        for v in 0..cfg.views {
            let cam = true_cameras.get(v, t)?;
            let mut frame: Vec<(usize, Observation)> = Vec::new();
            for m in 0..cfg.persons {
                let occluded = rng.random::<f64>() < cfg.occlusion_rate;
                let coarse_pelvis = rng.random::<f64>() < cfg.coarse_pelvis_rate;
                if occluded {
                    continue;
                }
                let truth = &true_humans[m].frames[t];
                let joints = place_joints(&canonical_joints(truth), &truth.root_rotation, &truth.head_translation);
                let head_cam = cam.cam_from_world(&joints[HEAD]);
                let pelvis_cam = cam.cam_from_world(&joints[PELVIS]);
                if head_cam.z <= COARSE_DEPTH_BIAS || pelvis_cam.z <= 0.0 {
                    continue;
                }
                let head_px = cam.intrinsics.project(&head_cam) + Vector2::new(px.sample(&mut rng), px.sample(&mut rng));
                let mut pelvis_px = cam.intrinsics.project(&pelvis_cam) + Vector2::new(px.sample(&mut rng), px.sample(&mut rng));
                if coarse_pelvis {
                    pelvis_px += Vector2::new(gaussian(&mut rng), gaussian(&mut rng)) * cfg.coarse_pelvis_noise_px;
                }
                let residual = COARSE_DEPTH_BIAS + cfg.depth_noise * head_cam.z * gaussian(&mut rng);

                let mut theta = truth.theta.clone();
                for slot in theta.iter_mut().take(24) {
                    for c in slot.iter_mut() {
                        *c += cfg.pose_noise * gaussian(&mut rng);
                    }
                }
                let mut beta = truth.beta;
                for b in beta.iter_mut() {
                    *b += cfg.shape_noise * gaussian(&mut rng);
                }
                let root_cam = perturb_rotation(&(cam.rotation().transpose() * truth.root_rotation), &mut rng, cfg.pose_noise);
                let token = models[m]
                    .archetype
                    .iter()
                    .map(|a| a + token_component * gaussian(&mut rng))
                    .collect();
                frame.push((
                    m,
                    Observation {
                        id: 0,
                        view_id: v,
                        timestep: t,
                        token,
                        body: BodyParams {
                            theta,
                            beta,
                            root_rotation: root_cam,
                            head_translation: head_cam * cfg.scale_error,
                        },
                        head_keypoint2d: head_px,
                        pelvis_keypoint2d: Some(pelvis_px),
                        coarse_depth: (head_cam.z - COARSE_DEPTH_BIAS) / cfg.true_scale,
                        depth_residual: residual / cfg.true_scale,
                        pelvis_from_coarse: coarse_pelvis,
                    },
                ));
            }
            frame.shuffle(&mut rng);
            for (m, mut obs) in frame {
                obs.id = next_id;
                true_identity.push(IdentityLabel { observation_id: next_id, person: m });
                next_id += 1;
                observations.push(obs);
            }
        }
    }

    Ok(Scenario {
        config: cfg.clone(),
        true_scale: cfg.true_scale,
        corrupted_scale: cfg.true_scale * cfg.scale_error,
        true_humans,
        true_cameras,
        cameras,
        true_scene_points,
        scene_points,
        observations,
        true_identity,
    })
}

/// Pairwise association quality in percent. Fields are absent when their
/// denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase")]
pub struct AssociationScore {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub true_positive: u64,
    pub false_positive: u64,
    pub true_negative: u64,
    pub false_negative: u64,
}

/// Scores a predicted observation-to-identity labelling over every pair of
/// observations from different views at the same timestep. Unlabelled
/// observations count as singletons.
pub fn score_association(predicted: &BTreeMap<u64, usize>, scenario: &Scenario) -> AssociationScore {
    let truth = scenario.identity_of();
    let mut by_t: BTreeMap<usize, Vec<&Observation>> = BTreeMap::new();
    for o in &scenario.observations {
        by_t.entry(o.timestep).or_default().push(o);
    }
    let mut s = AssociationScore::default();
    for obs in by_t.values() {
        for (i, a) in obs.iter().enumerate() {
            for b in &obs[i + 1..] {
                if a.view_id == b.view_id {
                    continue;
                }
                let same_true = truth.get(&a.id) == truth.get(&b.id);
                let same_pred = match (predicted.get(&a.id), predicted.get(&b.id)) {
                    (Some(x), Some(y)) => x == y,
                    _ => false,
                };
                match (same_pred, same_true) {
                    (true, true) => s.true_positive += 1,
                    (true, false) => s.false_positive += 1,
                    (false, false) => s.true_negative += 1,
                    (false, true) => s.false_negative += 1,
                }
            }
        }
    }
    let pct = |num: u64, den: u64| (den > 0).then(|| 100.0 * num as f64 / den as f64);
    let total = s.true_positive + s.false_positive + s.true_negative + s.false_negative;
    s.accuracy = pct(s.true_positive + s.true_negative, total);
    s.precision = pct(s.true_positive, s.true_positive + s.false_positive);
    s.recall = pct(s.true_positive, s.true_positive + s.false_negative);
    s
}
