//! Run configuration: one JSON document covering every stage, overridable
//! by a few common flags. Defaults are the desk-scale setup; full-scale
//! values are plain config edits.

use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use steerviz::preprocess::{PipelineConfig, SmoothingConfig};
use steerviz::saliency::SaliencyConfig;
use steerviz::synth::SceneParams;
use steerviz::training::{PretrainConfig, TrainConfig};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub scene: SceneParams,
    pub pipeline: PipelineConfig,
    pub train: TrainConfig,
    /// Convolutional pretraining before end-to-end training; `null` trains
    /// from scratch.
    pub pretrain: Option<PretrainConfig>,
    pub saliency: SaliencyConfig,
    /// Window length used by evaluate/attend/causal when chunking a dataset.
    pub eval_window: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::desk_scale();
        let mut pipeline = PipelineConfig::default();
        pipeline.target_h = train.model.encoder.input_h;
        pipeline.target_w = train.model.encoder.input_w;
        RunConfig {
            seed: 0,
            scene: SceneParams::default(),
            pipeline,
            train,
            pretrain: None,
            saliency: SaliencyConfig::default(),
            eval_window: 20,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    /// Propagates the top-level seed into the stage configs and checks
    /// cross-stage consistency.
    pub fn finalize(&mut self) -> anyhow::Result<()> {
        self.scene.seed = self.seed;
        self.train.seed = self.seed;
        if let Some(p) = &mut self.pretrain {
            p.seed = self.seed;
        }
        let enc = &self.train.model.encoder;
        if self.pipeline.target_h != enc.input_h || self.pipeline.target_w != enc.input_w {
            bail!(
                "pipeline target {}x{} does not match encoder input {}x{}",
                self.pipeline.target_w,
                self.pipeline.target_h,
                enc.input_w,
                enc.input_h
            );
        }
        if self.eval_window == 0 {
            bail!("eval_window must be at least 1");
        }
        Ok(())
    }

    pub fn set_alpha_s(&mut self, alpha: f64) {
        self.pipeline.smoothing = Some(SmoothingConfig { alpha_s: alpha });
    }
}
