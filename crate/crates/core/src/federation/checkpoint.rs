//! On-disk federation state: a JSON manifest plus one flat little-endian
//! array per parameter or gradient vector.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{FederationConfig, ServerState, Simulation};
use crate::error::{Error, Result};
use crate::graph::FederationData;
use crate::model::{GradientVector, ModelShape, ParamVector, PrototypeMap};
use crate::scalar::Scalar;
use crate::valuation::ValueState;

pub const CHECKPOINT_MANIFEST: &str = "manifest.json";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CheckpointManifest<T> {
    pub format_version: u32,
    pub round: usize,
    pub seed: u64,
    pub config_hash: String,
    pub config: FederationConfig<T>,
    pub shape: ModelShape,
    pub dtype: String,
    pub values: ValueState<T>,
    pub global_protos: PrototypeMap<T>,
    pub budget: T,
    pub global_grad_file: String,
    pub agents: Vec<AgentEntry<T>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AgentEntry<T> {
    pub agent_id: usize,
    pub payoff_total: T,
    pub prototypes: PrototypeMap<T>,
    pub params_file: String,
    pub upload_file: Option<String>,
}

fn dtype<T: Scalar>() -> &'static str {
    if T::WIDTH == 8 {
        "f64"
    } else {
        "f32"
    }
}

pub fn config_hash<T: Scalar>(config: &FederationConfig<T>) -> Result<String> {
    let json = serde_json::to_string(config)?;
    let digest = Sha256::digest(json.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_vector<T: Scalar>(path: &Path, len: usize) -> Result<Vec<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != len * T::WIDTH {
        return Err(Error::InvalidArgument(format!(
            "{} holds {} bytes, expected {}",
            path.display(),
            bytes.len(),
            len * T::WIDTH
        )));
    }
    Ok(bytes.chunks_exact(T::WIDTH).map(T::read_le).collect())
}

fn gradient_bytes<T: Scalar>(g: &GradientVector<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(g.len() * T::WIDTH);
    for &x in g.as_slice() {
        x.write_le(&mut out);
    }
    out
}

impl<T: Scalar> Simulation<T> {
    pub fn save_checkpoint(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let global_grad_file = "global_grad.bin".to_string();
        write_bytes(&dir.join(&global_grad_file), &gradient_bytes(&self.server.global_grad))?;
        let mut agents = Vec::with_capacity(self.agents.len());
        for a in &self.agents {
            let params_file = format!("agent_{}_params.bin", a.agent_id);
            write_bytes(&dir.join(&params_file), &a.params.to_le_bytes())?;
            let upload_file = match &a.last_upload {
                Some(u) => {
                    let name = format!("agent_{}_upload.bin", a.agent_id);
                    write_bytes(&dir.join(&name), &gradient_bytes(u))?;
                    Some(name)
                }
                None => None,
            };
            agents.push(AgentEntry {
                agent_id: a.agent_id,
                payoff_total: a.payoff_total,
                prototypes: a.prototypes.clone(),
                params_file,
                upload_file,
            });
        }
        let manifest = CheckpointManifest {
            format_version: FORMAT_VERSION,
            round: self.server.round,
            seed: self.seed,
            config_hash: config_hash(&self.config)?,
            config: self.config.clone(),
            shape: self.shape,
            dtype: dtype::<T>().to_string(),
            values: self.server.values.clone(),
            global_protos: self.server.global_protos.clone(),
            budget: self.server.budget,
            global_grad_file,
            agents,
        };
        let path = dir.join(CHECKPOINT_MANIFEST);
        write_bytes(&path, serde_json::to_string_pretty(&manifest)?.as_bytes())
    }

    /// Rebuilds a simulation from `data` and restores the saved state.
    pub fn resume(data: &FederationData, dir: &Path) -> Result<Self> {
        let path = dir.join(CHECKPOINT_MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: CheckpointManifest<T> = serde_json::from_str(&text)?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "checkpoint format {} is not supported",
                manifest.format_version
            )));
        }
        if manifest.dtype != dtype::<T>() {
            return Err(Error::Config(format!(
                "checkpoint holds {} values, simulation uses {}",
                manifest.dtype,
                dtype::<T>()
            )));
        }
        if config_hash(&manifest.config)? != manifest.config_hash {
            return Err(Error::Config("checkpoint config does not match its hash".into()));
        }
        let mut sim = Simulation::new(data, manifest.config.clone(), manifest.seed)?;
        if sim.shape != manifest.shape || sim.agents.len() != manifest.agents.len() {
            return Err(Error::Config("checkpoint does not match the supplied data".into()));
        }
        let d = sim.shape.len();
        for (agent, entry) in sim.agents.iter_mut().zip(&manifest.agents) {
            agent.params = ParamVector::unflatten(sim.shape, read_vector(&dir.join(&entry.params_file), d)?)?;
            agent.last_upload = match &entry.upload_file {
                Some(f) => Some(GradientVector::from_vec(read_vector(&dir.join(f), d)?)),
                None => None,
            };
            agent.prototypes = entry.prototypes.clone();
            agent.payoff_total = entry.payoff_total;
        }
        sim.server = ServerState {
            values: manifest.values,
            global_grad: GradientVector::from_vec(read_vector(&dir.join(&manifest.global_grad_file), d)?),
            global_protos: manifest.global_protos,
            budget: manifest.budget,
            round: manifest.round,
        };
        Ok(sim)
    }
}
