//! End-to-end run: scale adjustment, per-view tracking, cross-view
//! association, fusion. Also the evaluation of a result against a synthetic
//! scenario and the ablation sweep over the configurable stages.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::association::{associate, CostMode, GlobalIdentityMap};
use crate::bodymodel::{world_joints, PELVIS};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::fusion::{fuse_all, FusionStrategy, GlobalHuman};
use crate::metrics::{multiview_frame_metrics, sequence_metrics, MetricsReport};
use crate::observation::{CameraSet, Observation};
use crate::scale::{apply_scale, common_scene_scale, estimate_scale, ScaleReport};
use crate::synth::{score_association, AssociationScore, Scenario};
use crate::tracking::{filter_outliers, track_all_views, Tracklet};
use crate::association::hungarian;

/// Everything the pipeline consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PipelineInput {
    pub cameras: CameraSet,
    pub observations: Vec<Observation>,
    #[serde(default, with = "crate::serde_util::vec3_list")]
    pub scene_points: Vec<Vector3<f64>>,
}

impl From<&Scenario> for PipelineInput {
    fn from(s: &Scenario) -> Self {
        Self {
            cameras: s.cameras.clone(),
            observations: s.observations.clone(),
            scene_points: s.scene_points.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ObservationLabel {
    pub observation_id: u64,
    pub view_id: usize,
    pub track_id: usize,
    pub global_id: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PipelineOutput {
    pub scale: ScaleReport,
    pub identities: GlobalIdentityMap,
    /// Observations kept by tracking, with their tracklet and identity.
    pub labels: Vec<ObservationLabel>,
    pub humans: Vec<GlobalHuman>,
    /// Cameras after scale adjustment.
    pub cameras: CameraSet,
    #[serde(with = "crate::serde_util::vec3_list")]
    pub scene_points: Vec<Vector3<f64>>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl PipelineOutput {
    pub fn label_map(&self) -> BTreeMap<u64, usize> {
        self.labels.iter().map(|l| (l.observation_id, l.global_id)).collect()
    }
}

fn stage(name: &'static str) -> impl Fn(Error) -> Error {
    move |e| Error::Pipeline {
        stage: name.to_string(),
        source: Box::new(e),
    }
}

/// Runs every stage. Failures are wrapped in [`Error::Pipeline`] naming the
/// stage.
pub fn run(input: &PipelineInput, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let mut warnings = Vec::new();
    let mut cams = input.cameras.clone();
    let mut points = input.scene_points.clone();

    let validate = stage("input");
    for (_, c) in cams.iter() {
        c.validate().map_err(&validate)?;
    }
    for o in &input.observations {
        o.validate().map_err(&validate)?;
        cams.get(o.view_id, o.timestep).map_err(&validate)?;
    }
    let mut ids = std::collections::BTreeSet::new();
    for o in &input.observations {
        if !ids.insert(o.id) {
            return Err(validate(Error::Input(format!("duplicate observation id {}", o.id))));
        }
    }

    let input_scale = if cams.is_empty() { 1.0 } else { common_scene_scale(&cams).map_err(stage("scale"))? };
    let scale = if !cfg.scale.enabled || input.observations.is_empty() {
        ScaleReport::unit(input_scale)
    } else {
        match estimate_scale(&input.observations, &cams, &cfg.scale) {
            Ok(r) => r,
            Err(Error::NoValidPairs) => {
                let msg = "no valid head-pelvis pairs; keeping the input scale".to_string();
                log::warn!("{msg}");
                warnings.push(msg);
                ScaleReport::unit(input_scale)
            }
            Err(e) => return Err(stage("scale")(e)),
        }
    };
    apply_scale(&mut points, &mut cams, scale.global_ratio).map_err(stage("scale"))?;
    log::info!("scale ratio {:.6} over {} pairs", scale.global_ratio, scale.per_pair_ratios.len());

    let raw = track_all_views(&input.observations, &cfg.tracking);
    let mut tracklets: BTreeMap<usize, Vec<Tracklet>> = BTreeMap::new();
    for (v, ts) in raw {
        let filtered = ts
            .iter()
            .map(|t| filter_outliers(t, &cams, cfg.tracking.gamma_outlier))
            .collect::<Result<Vec<_>>>()
            .map_err(stage("tracking"))?;
        tracklets.insert(v, filtered);
    }
    log::info!("{} tracklets", tracklets.values().map(Vec::len).sum::<usize>());

    let association = associate(&tracklets, &cams, &cfg.association).map_err(stage("association"))?;
    let identities = association.identities;
    log::info!("{} global identities", identities.num_identities());

    let humans = fuse_all(&tracklets, &identities, &cams, &cfg.fusion, &cfg.geometry).map_err(stage("fusion"))?;

    let mut labels = Vec::new();
    for tr in tracklets.values().flatten() {
        if let Some(gid) = identities.get(tr.view_id, tr.track_id) {
            for o in tr.frames.values() {
                labels.push(ObservationLabel {
                    observation_id: o.id,
                    view_id: tr.view_id,
                    track_id: tr.track_id,
                    global_id: gid,
                });
            }
        }
    }
    labels.sort();

    Ok(PipelineOutput {
        scale,
        identities,
        labels,
        humans,
        cameras: cams,
        scene_points: points,
        warnings,
    })
}

/// Result of scoring a pipeline output against a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Evaluation {
    pub metrics: MetricsReport,
    pub association: AssociationScore,
    /// `(globalId, person)` pairs used for the joint metrics.
    pub identity_matches: Vec<(usize, usize)>,
    pub unmatched_identities: Vec<usize>,
}

/// Matches predicted identities to true persons by shared observations.
pub fn match_identities(output: &PipelineOutput, scenario: &Scenario) -> Result<Vec<(usize, usize)>> {
    let truth = scenario.identity_of();
    let gids: Vec<usize> = output.humans.iter().map(|h| h.global_id).collect();
    let persons = scenario.true_humans.len();
    if gids.is_empty() || persons == 0 {
        return Ok(Vec::new());
    }
    let index: BTreeMap<usize, usize> = gids.iter().enumerate().map(|(i, g)| (*g, i)).collect();
    let mut overlap = DMatrix::<f64>::zeros(gids.len(), persons);
    for l in &output.labels {
        let person = *truth.get(&l.observation_id).ok_or_else(|| {
            Error::Evaluation(format!("observation {} is not part of the scenario", l.observation_id))
        })?;
        if let Some(&row) = index.get(&l.global_id) {
            overlap[(row, person)] += 1.0;
        }
    }
    let cost = overlap.map(|c| if c > 0.0 { -c } else { f64::INFINITY });
    let assignment = hungarian::solve(&cost);
    Ok(assignment
        .iter()
        .enumerate()
        .filter_map(|(r, c)| c.map(|c| (gids[r], c)))
        .collect())
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Joint metrics averaged over matched persons (sequence protocols) and over
/// timesteps (multi-view protocols), plus association scores.
pub fn evaluate(output: &PipelineOutput, scenario: &Scenario) -> Result<Evaluation> {
    let matches = match_identities(output, scenario)?;
    let humans: BTreeMap<usize, &GlobalHuman> = output.humans.iter().map(|h| (h.global_id, h)).collect();
    let mut report = MetricsReport::default();
    let (mut wa, mut w, mut rte) = (Vec::new(), Vec::new(), Vec::new());
    for &(gid, person) in &matches {
        let h = humans[&gid];
        let timesteps: Vec<usize> = h.frames.iter().map(|f| f.timestep).collect();
        if timesteps.iter().any(|&t| t >= scenario.true_humans[person].frames.len()) {
            return Err(Error::Evaluation(format!("identity {gid} has frames outside the scenario")));
        }
        let pred: Vec<_> = h.frames.iter().map(|f| world_joints(&f.body())).collect();
        let gt: Vec<_> = timesteps.iter().map(|&t| scenario.true_world_joints(person, t)).collect();
        let m = sequence_metrics(&pred, &gt, PELVIS)?;
        wa.extend(m.wa_mpjpe);
        w.extend(m.w_mpjpe);
        rte.extend(m.rte);
        report.rte_static |= m.rte_static;
        report.errors.extend(m.errors.into_iter().map(|e| format!("identity {gid}: {e}")));
    }
    report.wa_mpjpe = mean(&wa);
    report.w_mpjpe = mean(&w);
    report.rte = mean(&rte);

    let timesteps: std::collections::BTreeSet<usize> =
        output.humans.iter().flat_map(|h| h.frames.iter().map(|f| f.timestep)).collect();
    let (mut dagger, mut ga, mut pa) = (Vec::new(), Vec::new(), Vec::new());
    for t in timesteps {
        let (mut pred, mut gt) = (Vec::new(), Vec::new());
        for &(gid, person) in &matches {
            if let Some(f) = humans[&gid].frame(t) {
                pred.push(world_joints(&f.body()));
                gt.push(scenario.true_world_joints(person, t));
            }
        }
        if pred.is_empty() {
            continue;
        }
        let (mut pc, mut gc) = (Vec::new(), Vec::new());
        for (&(v, ct), cam) in output.cameras.iter() {
            if ct == t {
                if let Some(g) = scenario.true_cameras.try_get(v, ct) {
                    pc.push(*cam);
                    gc.push(*g);
                }
            }
        }
        let m = multiview_frame_metrics(&pred, &gt, &pc, &gc)?;
        dagger.extend(m.w_mpjpe_dagger);
        ga.extend(m.ga_mpjpe);
        pa.extend(m.pa_mpjpe);
        report.errors.extend(m.errors.into_iter().map(|e| format!("timestep {t}: {e}")));
    }
    report.w_mpjpe_dagger = mean(&dagger);
    report.ga_mpjpe = mean(&ga);
    report.pa_mpjpe = mean(&pa);

    let matched: std::collections::BTreeSet<usize> = matches.iter().map(|m| m.0).collect();
    Ok(Evaluation {
        metrics: report,
        association: score_association(&output.label_map(), scenario),
        identity_matches: matches,
        unmatched_identities: humans.keys().filter(|g| !matched.contains(g)).copied().collect(),
    })
}

/// One configuration of the ablation sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationVariant {
    pub name: String,
    pub config: PipelineConfig,
}

/// The stage toggles: fusion strategies, scale on/off, association cost modes.
pub fn ablation_variants(base: &PipelineConfig) -> Vec<AblationVariant> {
    let mut out = Vec::new();
    for s in [FusionStrategy::OnlyAvg, FusionStrategy::MaxPoolTri, FusionStrategy::AvgTri] {
        let mut c = *base;
        c.fusion.strategy = s;
        out.push(AblationVariant { name: format!("fusion={s}"), config: c });
    }
    for enabled in [false, true] {
        let mut c = *base;
        c.scale.enabled = enabled;
        out.push(AblationVariant {
            name: format!("scale={}", if enabled { "on" } else { "off" }),
            config: c,
        });
    }
    for (mode, name) in [(CostMode::Pose, "pose"), (CostMode::Position, "position"), (CostMode::Combined, "combined")] {
        let mut c = *base;
        c.association.cost_mode = mode;
        out.push(AblationVariant { name: format!("cost={name}"), config: c });
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: String,
    pub evaluation: Evaluation,
}

pub fn run_ablation(scenario: &Scenario, base: &PipelineConfig) -> Result<Vec<AblationRow>> {
    let input = PipelineInput::from(scenario);
    ablation_variants(base)
        .into_iter()
        .map(|v| {
            let out = run(&input, &v.config)?;
            Ok(AblationRow {
                variant: v.name,
                evaluation: evaluate(&out, scenario)?,
            })
        })
        .collect()
}

pub const ABLATION_CSV_HEADER: &str =
    "variant,waMpjpe,wMpjpe,rte,wMpjpeDagger,gaMpjpe,paMpjpe,accuracy,precision,recall";

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let f = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    let mut s = String::from(ABLATION_CSV_HEADER);
    s.push('\n');
    for r in rows {
        let m = &r.evaluation.metrics;
        let a = &r.evaluation.association;
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.variant,
            f(m.wa_mpjpe),
            f(m.w_mpjpe),
            f(m.rte),
            f(m.w_mpjpe_dagger),
            f(m.ga_mpjpe),
            f(m.pa_mpjpe),
            f(a.accuracy),
            f(a.precision),
            f(a.recall)
        ));
    }
    s
}
