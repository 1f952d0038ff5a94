//! Append-only episode log.
//!
//! Layout: the magic `SICLOPRB`, a little-endian `u32` format version, then
//! one record per episode: a `u64` payload length followed by the payload.
//! Returns are not stored; they are recomputed from the step rewards.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::env::{AgentAction, AgentEvents, JointAction, N_ACTIONS};
use crate::numcore::Matrix;
use crate::obsgraph::{CoordinationGraph, GraphInput};
use crate::trainer::{EpisodeRecord, StepRecord};

pub const REPLAY_MAGIC: &[u8; 8] = b"SICLOPRB";
pub const REPLAY_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("not a replay log")]
    BadMagic,
    #[error("replay log version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("corrupt record: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn encode_episode(record: &EpisodeRecord) -> Vec<u8> {
    let mut out = Vec::new();
    let n = record.n_agents;
    put_u32(&mut out, n as u32);
    put_u32(&mut out, record.steps.len() as u32);
    for step in &record.steps {
        let obs = &step.graph_input.observations;
        put_u32(&mut out, obs.cols() as u32);
        obs.data().iter().for_each(|&v| put_f64(&mut out, v));
        let edges = step.graph_input.graph.edges();
        put_u32(&mut out, edges.len() as u32);
        for &(i, j) in edges {
            put_u32(&mut out, i as u32);
            put_u32(&mut out, j as u32);
        }
        step.policies.iter().flatten().for_each(|&v| put_f64(&mut out, v));
        out.extend(step.action.0.iter().map(|a| a.index() as u8));
        step.rewards.iter().for_each(|&v| put_f64(&mut out, v));
        for e in &step.events {
            out.push(u8::from(e.reached_goal) | u8::from(e.collision) << 1 | u8::from(e.out_of_bounds) << 2);
            put_u32(&mut out, e.proximity_pairs);
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ReplayError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| ReplayError::Corrupt(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ReplayError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, ReplayError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")))
    }

    fn u64(&mut self) -> Result<u64, ReplayError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("eight bytes")))
    }

    fn f64(&mut self) -> Result<f64, ReplayError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("eight bytes")))
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

pub fn decode_episode(bytes: &[u8]) -> Result<EpisodeRecord, ReplayError> {
    let mut c = Cursor { bytes, pos: 0 };
    let n = c.u32()? as usize;
    let n_steps = c.u32()? as usize;
    let mut steps = Vec::with_capacity(n_steps.min(bytes.len()));
    for _ in 0..n_steps {
        let cols = c.u32()? as usize;
        let data = (0..n * cols).map(|_| c.f64()).collect::<Result<Vec<_>, _>>()?;
        let observations = Matrix::from_vec(n, cols, data).map_err(|e| ReplayError::Corrupt(e.to_string()))?;
        let n_edges = c.u32()? as usize;
        let mut edges = Vec::with_capacity(n_edges.min(bytes.len()));
        for _ in 0..n_edges {
            let (i, j) = (c.u32()? as usize, c.u32()? as usize);
            if i >= n || j >= n {
                return Err(ReplayError::Corrupt(format!("edge ({i}, {j}) out of range")));
            }
            edges.push((i, j));
        }
        let mut policies = vec![[0.0; N_ACTIONS]; n];
        for p in &mut policies {
            for v in p.iter_mut() {
                *v = c.f64()?;
            }
        }
        let action = (0..n)
            .map(|_| {
                let a = c.u8()?;
                AgentAction::from_index(a as usize).ok_or_else(|| ReplayError::Corrupt(format!("action index {a}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let rewards = (0..n).map(|_| c.f64()).collect::<Result<Vec<_>, _>>()?;
        let mut events = Vec::with_capacity(n);
        for _ in 0..n {
            let flags = c.u8()?;
            events.push(AgentEvents {
                reached_goal: flags & 1 != 0,
                collision: flags & 2 != 0,
                out_of_bounds: flags & 4 != 0,
                proximity_pairs: c.u32()?,
            });
        }
        steps.push(StepRecord {
            graph_input: GraphInput { observations, graph: CoordinationGraph::new(n, edges) },
            policies,
            action: JointAction(action),
            rewards,
            events,
        });
    }
    if !c.done() {
        return Err(ReplayError::Corrupt("trailing bytes in record".into()));
    }
    Ok(EpisodeRecord::from_steps(steps, n))
}

fn header() -> Vec<u8> {
    let mut h = REPLAY_MAGIC.to_vec();
    h.extend_from_slice(&REPLAY_VERSION.to_le_bytes());
    h
}

pub fn encode_record(record: &EpisodeRecord) -> Vec<u8> {
    let payload = encode_episode(record);
    let mut out = (payload.len() as u64).to_le_bytes().to_vec();
    out.extend(payload);
    out
}

/// Parses a whole log.
pub fn decode_log(bytes: &[u8]) -> Result<Vec<EpisodeRecord>, ReplayError> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8).map_err(|_| ReplayError::BadMagic)? != REPLAY_MAGIC {
        return Err(ReplayError::BadMagic);
    }
    let version = c.u32()?;
    if version != REPLAY_VERSION {
        return Err(ReplayError::Version { found: version, expected: REPLAY_VERSION });
    }
    let mut out = Vec::new();
    while !c.done() {
        let len = usize::try_from(c.u64()?).map_err(|_| ReplayError::Corrupt("record length".into()))?;
        out.push(decode_episode(c.take(len)?)?);
    }
    Ok(out)
}

/// Appends episodes to a log file, writing the header when the file is new
/// or empty.
pub struct ReplayLog {
    file: File,
}

impl ReplayLog {
    pub fn open(path: &Path) -> Result<Self, ReplayError> {
        let mut file = OpenOptions::new().create(true).read(true).append(true).open(path)?;
        if file.metadata()?.len() == 0 {
            file.write_all(&header())?;
        } else {
            let mut head = [0u8; 12];
            let mut reader = File::open(path)?;
            reader.read_exact(&mut head).map_err(|_| ReplayError::BadMagic)?;
            if &head[..8] != REPLAY_MAGIC {
                return Err(ReplayError::BadMagic);
            }
            let version = u32::from_le_bytes(head[8..].try_into().expect("four bytes"));
            if version != REPLAY_VERSION {
                return Err(ReplayError::Version { found: version, expected: REPLAY_VERSION });
            }
        }
        Ok(Self { file })
    }

    pub fn append(&mut self, record: &EpisodeRecord) -> Result<(), ReplayError> {
        self.file.write_all(&encode_record(record))?;
        self.file.flush()?;
        Ok(())
    }
}

pub fn read_log(path: &Path) -> Result<Vec<EpisodeRecord>, ReplayError> {
    decode_log(&std::fs::read(path)?)
}
