use std::collections::BTreeMap;
use std::path::Path;

use candle_core::{Tensor, Var};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backbone::{load_pretrained, Backbone};
use crate::error::{Error, Result};
use crate::nn::to_f64_vec;

use super::{Model, TrainConfig};

pub const CHECKPOINT_FORMAT: &str = "sketchclip-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl StoredTensor {
    pub fn from_var(v: &Var) -> Result<Self> {
        Ok(Self {
            shape: v.dims().to_vec(),
            data: to_f64_vec(v.as_tensor())?,
        })
    }

    fn write_into(&self, name: &str, v: &Var) -> Result<()> {
        if v.dims() != self.shape.as_slice() {
            return Err(Error::Checkpoint(format!(
                "`{name}` has shape {:?} in the checkpoint but {:?} in the model",
                self.shape,
                v.dims()
            )));
        }
        let t = Tensor::from_vec(self.data.clone(), self.shape.as_slice(), v.device())?.to_dtype(v.dtype())?;
        v.set(&t)?;
        Ok(())
    }
}

/// ChaCha8 position, enough to resume the exact stream.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    /// 128-bit word position as a decimal string.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        let pos = self
            .word_pos
            .parse()
            .map_err(|_| Error::Checkpoint(format!("bad rng word position `{}`", self.word_pos)))?;
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

type Section = BTreeMap<String, StoredTensor>;

/// Versioned single-file archive of every learned parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub adapter: String,
    pub epoch: usize,
    pub config: TrainConfig,
    pub seen_categories: Vec<String>,
    pub rng_state: RngState,
    pub prompts: Section,
    pub codebook: Option<Section>,
    pub decoder: Option<Section>,
    /// Layer-norm parameters that differ from the pretrained values, stored
    /// as their tuned values.
    pub layernorm_deltas: Section,
}

fn section(vars: Vec<(String, Var)>) -> Result<Section> {
    vars.into_iter()
        .map(|(n, v)| Ok((n, StoredTensor::from_var(&v)?)))
        .collect()
}

fn restore_section(stored: &Section, vars: Vec<(String, Var)>, what: &str) -> Result<()> {
    if stored.len() != vars.len() {
        return Err(Error::Checkpoint(format!(
            "{what} section has {} tensors, model expects {}",
            stored.len(),
            vars.len()
        )));
    }
    for (name, var) in vars {
        let t = stored
            .get(&name)
            .ok_or_else(|| Error::Checkpoint(format!("{what} section lacks `{name}`")))?;
        t.write_into(&name, &var)?;
    }
    Ok(())
}

impl Checkpoint {
    pub fn capture(model: &Model, seen: &[String], epoch: usize, rng: &ChaCha8Rng) -> Result<Self> {
        let mut prompts = section(model.prompts.prompt_vars())?;
        prompts.extend(section(model.prompts.meta_vars())?);
        let base: BTreeMap<_, _> = model.pretrained_layer_norms.iter().cloned().collect();
        let mut layernorm_deltas = Section::new();
        let lns = model
            .backbone
            .layer_norm_vars(crate::backbone::Tower::Vision)
            .into_iter()
            .chain(model.backbone.layer_norm_vars(crate::backbone::Tower::Text));
        for (name, var) in lns {
            let stored = StoredTensor::from_var(&var)?;
            if base.get(&name) != Some(&stored.data) {
                layernorm_deltas.insert(name, stored);
            }
        }
        Ok(Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            adapter: model.backbone.adapter.clone(),
            epoch,
            config: model.config.clone(),
            seen_categories: seen.to_vec(),
            rng_state: RngState::capture(rng),
            prompts,
            codebook: model.codebook.as_ref().map(|c| section(c.vars())).transpose()?,
            decoder: model.decoder.as_ref().map(|d| section(d.vars())).transpose()?,
            layernorm_deltas,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let tmp = path.with_extension("json.tmp");
        let bytes = serde_json::to_vec(self)?;
        std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value = serde_json::from_slice(&bytes)?;
        let format = value.get("format").and_then(|v| v.as_str());
        if format != Some(CHECKPOINT_FORMAT) {
            return Err(Error::Checkpoint(format!("{} is not a checkpoint file", path.display())));
        }
        let version = value.get("version").and_then(|v| v.as_u64());
        if version != Some(CHECKPOINT_VERSION as u64) {
            return Err(Error::Checkpoint(format!(
                "{} has version {version:?}, expected {CHECKPOINT_VERSION}",
                path.display()
            )));
        }
        Ok(serde_json::from_value(value)?)
    }

    /// Rebuilds the model on a freshly loaded backbone.
    pub fn restore(&self, weights: Option<&Path>) -> Result<Model> {
        self.restore_on(load_pretrained(&self.adapter, weights)?)
    }

    /// Rebuilds the model on `backbone`, which must match the adapter the
    /// checkpoint was trained with.
    pub fn restore_on(&self, backbone: Backbone) -> Result<Model> {
        if backbone.adapter != self.adapter {
            return Err(Error::Checkpoint(format!(
                "checkpoint was trained on adapter `{}` but backbone is `{}`",
                self.adapter, backbone.adapter
            )));
        }
        let model = Model::new(backbone, self.config.clone())?;
        let mut vars = model.prompts.prompt_vars();
        vars.extend(model.prompts.meta_vars());
        restore_section(&self.prompts, vars, "prompts")?;
        match (&self.codebook, &model.codebook) {
            (Some(s), Some(cb)) => restore_section(s, cb.vars(), "codebook")?,
            (None, None) => {}
            _ => return Err(Error::Checkpoint("codebook section does not match config".into())),
        }
        match (&self.decoder, &model.decoder) {
            (Some(s), Some(d)) => restore_section(s, d.vars(), "decoder")?,
            (None, None) => {}
            _ => return Err(Error::Checkpoint("decoder section does not match config".into())),
        }
        let lns: BTreeMap<_, _> = model
            .backbone
            .layer_norm_vars(crate::backbone::Tower::Vision)
            .into_iter()
            .chain(model.backbone.layer_norm_vars(crate::backbone::Tower::Text))
            .collect();
        for (name, stored) in &self.layernorm_deltas {
            let var = lns
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("backbone has no layer norm `{name}`")))?;
            stored.write_into(name, var)?;
        }
        Ok(model)
    }

    pub fn rng(&self) -> Result<ChaCha8Rng> {
        self.rng_state.restore()
    }
}
