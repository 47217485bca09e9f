//! JSON scenario files.

use std::path::Path;

use anyhow::{bail, Context};
use boxloss::losses::DEFAULT_PUSH_ALPHA;
use boxloss::{BBox, GroundTruthSet, LossKind, PushConfig, Scenario};
use serde::{Deserialize, Serialize};

fn default_alpha() -> f64 {
    DEFAULT_PUSH_ALPHA
}

/// On-disk form of a [`Scenario`]. Boxes are `[x1, y1, x2, y2]` arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub gts: Vec<BBox>,
    pub initial_preds: Vec<BBox>,
    pub matches: Vec<usize>,
    pub loss: LossKind,
    #[serde(default = "default_alpha")]
    pub push_alpha: f64,
    #[serde(default)]
    pub dynamic_anchor: bool,
    pub steps: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub nms_threshold: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            anyhow::anyhow!("at `{path}`: {}", e.into_inner())
        })
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read scenario {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("invalid scenario {}", path.display()))
    }

    /// Checks the cross-field constraints and builds the simulator input.
    /// Errors name the offending field by JSON path.
    pub fn into_scenario(self) -> anyhow::Result<Scenario> {
        if self.gts.is_empty() {
            bail!("at `gts`: at least one ground truth is required");
        }
        if self.matches.len() != self.initial_preds.len() {
            bail!(
                "at `matches`: expected {} entries (one per initial_preds), got {}",
                self.initial_preds.len(),
                self.matches.len()
            );
        }
        if let Some((i, m)) = self
            .matches
            .iter()
            .enumerate()
            .find(|(_, m)| **m >= self.gts.len())
        {
            bail!(
                "at `matches[{i}]`: index {m} out of range for {} gts",
                self.gts.len()
            );
        }
        if self.steps == 0 {
            bail!("at `steps`: must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            bail!(
                "at `learning_rate`: must be positive, got {}",
                self.learning_rate
            );
        }
        let push = PushConfig::new(self.push_alpha).context("at `push_alpha`")?;
        if let Some(t) = self.nms_threshold {
            if !(0.0..=1.0).contains(&t) {
                bail!("at `nms_threshold`: must lie in [0, 1], got {t}");
            }
        }
        let scenario = Scenario {
            name: self.name,
            gts: GroundTruthSet::new(self.gts),
            initial_preds: self.initial_preds,
            matches: self.matches,
            loss: self.loss,
            push,
            dynamic_anchor: self.dynamic_anchor,
            steps: self.steps,
            learning_rate: self.learning_rate,
            nms_threshold: self.nms_threshold,
            seed: self.seed,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}
