//! Pipeline configuration.
//!
//! Files are TOML with one table per stage. Missing keys take their defaults,
//! unknown keys are rejected, and `section.key=value` overrides are applied
//! on top of the file before validation.

use serde::{Deserialize, Serialize};

use crate::association::AssociationConfig;
use crate::error::{Error, Result};
use crate::fusion::FusionConfig;
use crate::geometry::GeometryTolerances;
use crate::scale::ScaleConfig;
use crate::tracking::TrackingConfig;

/// How far `lambdaPosition + lambdaPose` may stray from one.
pub const LAMBDA_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub tracking: TrackingConfig,
    pub association: AssociationConfig,
    pub fusion: FusionConfig,
    pub scale: ScaleConfig,
    pub geometry: GeometryTolerances,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be positive, got {v}")))
            }
        };
        let t = &self.tracking;
        positive("tracking.epsilon", t.epsilon)?;
        positive("tracking.marginalTolerance", t.marginal_tolerance)?;
        positive("tracking.gammaMatch", t.gamma_match)?;
        positive("tracking.gammaOutlier", t.gamma_outlier)?;
        if t.max_iterations == 0 {
            return Err(Error::config("tracking.maxIterations", "must be at least 1"));
        }

        let a = &self.association;
        if a.k == 0 {
            return Err(Error::config("association.k", "must be at least 1"));
        }
        positive("association.gammaReid", a.gamma_reid)?;
        for (field, v) in [("association.lambdaPosition", a.lambda_position), ("association.lambdaPose", a.lambda_pose)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(field, format!("must lie in [0, 1], got {v}")));
            }
        }
        let sum = a.lambda_position + a.lambda_pose;
        if (sum - 1.0).abs() > LAMBDA_SUM_TOL {
            return Err(Error::config(
                "association.lambdaPosition",
                format!("lambdaPosition + lambdaPose must equal 1, got {sum}"),
            ));
        }

        positive("scale.minImageLength", self.scale.min_image_length)?;
        let g = &self.geometry;
        positive("geometry.maxRayCondition", g.max_ray_condition)?;
        positive("geometry.alignmentRankTol", g.alignment_rank_tol)?;
        positive("geometry.minQuaternionMeanNorm", g.min_quaternion_mean_norm)?;
        Ok(())
    }

    /// Parses TOML text, applies `overrides` and validates.
    pub fn from_toml_with(text: &str, overrides: &[String]) -> Result<Self> {
        let cfg: PipelineConfig = parse_toml(text, overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with(text, &[])
    }

    /// Defaults as a commented TOML document.
    pub fn describe() -> String {
        let body = toml::to_string_pretty(&PipelineConfig::default()).unwrap_or_default();
        format!(
            "# Pipeline defaults. Every key is optional; override with --set section.key=value.\n\
             # association.costMode: combined | position | pose\n\
             # fusion.strategy: avg+tri | maxpool+tri | only-avg\n\
             # fusion.thetaAveraging: axis-angle | quaternion\n\
             # scale.aggregate: mean | median\n\n{body}"
        )
    }
}

/// Parses TOML text into `T` after applying `section.key=value` overrides.
pub(crate) fn parse_toml<T: serde::de::DeserializeOwned>(text: &str, overrides: &[String]) -> Result<T> {
    let mut table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::config(error_field(&e), e.message().to_string()))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    table
        .try_into()
        .map_err(|e: toml::de::Error| Error::config(error_field(&e), e.message().to_string()))
}

fn error_field(e: &toml::de::Error) -> String {
    // toml reports unknown keys as "unknown field `x`"
    let msg = e.message();
    msg.split('`').nth(1).unwrap_or("config").to_string()
}

/// Applies `section.key=value`. The value is read as a TOML literal, falling
/// back to a bare string so `fusion.strategy=only-avg` works unquoted.
pub fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let (path, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::config(item, "override must look like section.key=value"))?;
    let path = path.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));

    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::config(path, "empty key in override path"));
    }
    let (last, parents) = keys.split_last().expect("split yields at least one key");
    let mut cur = table;
    for k in parents {
        let entry = cur
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(path, format!("`{k}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
