//! Binary checkpoint files.
//!
//! Layout: the 8-byte magic `PPGAGE01`, a little-endian `u32` format
//! version, a little-endian `u32` manifest length, the TOML manifest, then
//! every tensor listed in the manifest as little-endian `f32` values in
//! manifest order. Parameters and optimizer moments are kept f32-exact
//! during training, so a round trip reproduces the state bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::model::{ModelParams, NetConfig};
use super::train::TrainingState;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"PPGAGE01";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    output_shift: f64,
    output_scale: f64,
    net: NetConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    training: Option<TrainingManifest>,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainingManifest {
    epochs_done: usize,
    best_epoch: usize,
    best_selection_loss: f64,
    adam_step: u64,
    adam: AdamConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

/// Contents of a checkpoint: bare weights, or a resumable training state.
#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint {
    Model(ModelParams),
    Training(TrainingState),
}

impl Checkpoint {
    /// The weights to use for inference: the best-selection parameters of a
    /// training state.
    pub fn into_model(self) -> ModelParams {
        match self {
            Checkpoint::Model(p) => p,
            Checkpoint::Training(s) => s.best,
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let (params, training) = match self {
            Checkpoint::Model(p) => (p, None),
            Checkpoint::Training(s) => (&s.params, Some(s)),
        };
        let specs = params.param_specs();
        let mut groups: Vec<(&str, Vec<&Vec<f64>>)> = vec![("", params.arrays())];
        if let Some(s) = training {
            groups.push(("best.", s.best.arrays()));
            groups.push(("adam.m.", s.adam.first.iter().collect()));
            groups.push(("adam.v.", s.adam.second.iter().collect()));
        }
        let mut entries = Vec::new();
        let mut arrays: Vec<&Vec<f64>> = Vec::new();
        for (prefix, values) in groups {
            for (spec, v) in specs.iter().zip(values) {
                entries.push(TensorEntry { name: format!("{prefix}{}", spec.name), shape: spec.shape.clone() });
                arrays.push(v);
            }
        }
        let manifest = Manifest {
            output_shift: params.output_shift,
            output_scale: params.output_scale,
            net: params.config.clone(),
            training: training.map(|s| TrainingManifest {
                epochs_done: s.epochs_done,
                best_epoch: s.best_epoch,
                best_selection_loss: s.best_selection_loss,
                adam_step: s.adam.step,
                adam: s.adam.config,
            }),
            tensors: entries,
        };
        let text = toml::to_string(&manifest).map_err(|e| Error::Format(e.to_string()))?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        for a in arrays {
            for &v in a {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let fail = |msg: &str| Error::Format(msg.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(fail("not a checkpoint file (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let len = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
        let text = bytes.get(16..16 + len).ok_or_else(|| fail("truncated manifest"))?;
        let text = std::str::from_utf8(text).map_err(|_| fail("manifest is not UTF-8"))?;
        let manifest: Manifest = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;

        let mut params = ModelParams::zeros(&manifest.net)?;
        params.output_shift = manifest.output_shift;
        params.output_scale = manifest.output_scale;
        let specs = params.param_specs();
        let groups = if manifest.training.is_some() { 4 } else { 1 };
        if manifest.tensors.len() != specs.len() * groups {
            return Err(fail("tensor list does not match the network config"));
        }
        let mut values: Vec<Vec<f64>> = Vec::with_capacity(manifest.tensors.len());
        let mut pos = 16 + len;
        for (i, entry) in manifest.tensors.iter().enumerate() {
            let spec = &specs[i % specs.len()];
            if entry.shape != spec.shape || !entry.name.ends_with(&spec.name) {
                return Err(Error::Format(format!("unexpected tensor '{}'", entry.name)));
            }
            let n: usize = entry.shape.iter().product();
            let raw = bytes.get(pos..pos + 4 * n).ok_or_else(|| fail("truncated tensor data"))?;
            values
                .push(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64).collect());
            pos += 4 * n;
        }
        if pos != bytes.len() {
            return Err(fail("trailing bytes after tensor data"));
        }

        let mut groups = values.chunks(specs.len());
        let fill = |p: &mut ModelParams, src: &[Vec<f64>]| {
            for (dst, s) in p.arrays_mut().into_iter().zip(src) {
                dst.copy_from_slice(s);
            }
        };
        fill(&mut params, groups.next().expect("parameter group"));
        let Some(t) = manifest.training else {
            if !params.is_finite() {
                return Err(fail("non-finite parameter values"));
            }
            return Ok(Checkpoint::Model(params));
        };
        let mut best = params.clone();
        fill(&mut best, groups.next().expect("best group"));
        let adam = AdamState {
            config: t.adam,
            step: t.adam_step,
            first: groups.next().expect("first moments").to_vec(),
            second: groups.next().expect("second moments").to_vec(),
        };
        Ok(Checkpoint::Training(TrainingState {
            params,
            adam,
            epochs_done: t.epochs_done,
            best,
            best_epoch: t.best_epoch,
            best_selection_loss: t.best_selection_loss,
        }))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::train::{run_epochs, LabeledSet, TrainConfig};

    fn tiny_set() -> LabeledSet {
        let len = NetConfig::tiny().input_length;
        LabeledSet {
            waveforms: (0..12).map(|k| (0..len).map(|i| ((i * (k + 1)) as f64 * 0.3).sin()).collect()).collect(),
            labels: (0..12).map(|k| 40.0 + 3.0 * k as f64).collect(),
        }
    }

    #[test]
    fn model_round_trip_is_byte_exact() {
        let p = ModelParams::init(&NetConfig::default(), 11, 61.25, 7.5).unwrap();
        let ck = Checkpoint::Model(p.clone());
        let bytes = ck.encode().unwrap();
        assert_eq!(&bytes[..8], MAGIC);
        let back = Checkpoint::decode(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.encode().unwrap(), bytes);
    }

    #[test]
    fn training_state_round_trip_resumes_identically() {
        let set = tiny_set();
        let mut config =
            TrainConfig { epochs: 2, batch_size: 4, label_range: Some((40, 75)), ..TrainConfig::default() };
        let mut state = TrainingState::new(&NetConfig::tiny(), &set, &config, 2).unwrap();
        run_epochs(&mut state, &set, &set, &config, 2).unwrap();
        let bytes = Checkpoint::Training(state.clone()).encode().unwrap();
        let Checkpoint::Training(mut restored) = Checkpoint::decode(&bytes).unwrap() else {
            panic!("expected a training checkpoint");
        };
        assert_eq!(restored, state);
        config.epochs = 4;
        let a = run_epochs(&mut state, &set, &set, &config, 2).unwrap();
        let b = run_epochs(&mut restored, &set, &set, &config, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(state, restored);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = Checkpoint::Model(ModelParams::init(&NetConfig::tiny(), 1, 0.0, 1.0).unwrap()).encode().unwrap();
        assert!(Checkpoint::decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::decode(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(Checkpoint::decode(&extra).is_err());
    }
}
