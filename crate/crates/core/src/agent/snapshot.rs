//! Saving and restoring agents, and frozen protocol snapshots.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::params::{AgentConfig, AgentParams};
use crate::error::{Error, Result};
use crate::nn::checkpoint::{load_into, read_checkpoint, write_checkpoint};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AgentMeta {
    id: usize,
    plays: u64,
    config: AgentConfig,
    label: Option<String>,
}

/// A frozen copy of an agent taken at a labelled point of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolSnapshot<T> {
    pub label: String,
    pub agent: AgentParams<T>,
}

impl<T: Scalar> ProtocolSnapshot<T> {
    pub fn capture(label: impl Into<String>, agent: &AgentParams<T>) -> Self {
        ProtocolSnapshot {
            label: label.into(),
            agent: agent.clone(),
        }
    }
}

pub fn write_agent<T: Scalar, W: Write>(out: &mut W, agent: &AgentParams<T>, label: Option<&str>) -> Result<()> {
    let meta = AgentMeta {
        id: agent.id,
        plays: agent.plays,
        config: agent.config.clone(),
        label: label.map(str::to_owned),
    };
    write_checkpoint(out, agent, serde_json::to_value(meta)?)
}

/// Reads an agent; returns the snapshot label if one was stored.
pub fn read_agent<T: Scalar, R: Read>(input: &mut R) -> Result<(AgentParams<T>, Option<String>)> {
    let (meta, tensors) = read_checkpoint::<T, _>(input)?;
    let meta: AgentMeta = serde_json::from_value(meta).map_err(|e| Error::Format(format!("agent metadata: {e}")))?;
    meta.config.validate()?;
    let mut agent = AgentParams::zeros(meta.id, meta.config);
    load_into(&mut agent, tensors)?;
    agent.plays = meta.plays;
    Ok((agent, meta.label))
}

pub fn save_agent<T: Scalar>(path: &Path, agent: &AgentParams<T>, label: Option<&str>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_agent(&mut w, agent, label)?;
    w.flush()?;
    Ok(())
}

pub fn load_agent<T: Scalar>(path: &Path) -> Result<(AgentParams<T>, Option<String>)> {
    read_agent(&mut BufReader::new(File::open(path)?))
}

pub fn save_snapshot<T: Scalar>(path: &Path, snap: &ProtocolSnapshot<T>) -> Result<()> {
    save_agent(path, &snap.agent, Some(&snap.label))
}

pub fn load_snapshot<T: Scalar>(path: &Path) -> Result<ProtocolSnapshot<T>> {
    let (agent, label) = load_agent(path)?;
    let label = label.ok_or_else(|| Error::Format(format!("{} holds no snapshot label", path.display())))?;
    Ok(ProtocolSnapshot { label, agent })
}
