//! Rollout traces: in-memory records, CSV, and the `LFTR` binary layout.
//!
//! Binary layout, little-endian throughout:
//!
//! ```text
//! header  magic "LFTR" | u16 version | u16 flags (0)
//!         u32 n_envs | u32 n_steps | u32 obs_len | u32 n_actions | u32 n_terms | u32 n_state
//!         u64 seed
//! record  u64 step | u64 env | u8 done | u8 kick | 6 bytes zero
//!         f64 reward | f64 terms[n_terms] | f64 obs[obs_len] | f64 action[n_actions] | f64 state[n_state]
//! ```
//!
//! Records are ordered by step, then by position in the batch.

use std::io::{self, Read, Write};

use super::reward::{TermVector, NUM_TERMS, TERM_NAMES};

pub const MAGIC: [u8; 4] = *b"LFTR";
pub const TRACE_VERSION: u16 = 1;

/// Base and actuator quantities stored per record, ahead of the actuator positions.
pub const BASE_STATE_NAMES: [&str; 10] =
    ["vx", "vy", "vz", "roll", "pitch", "yaw", "roll_rate", "pitch_rate", "yaw_rate", "max_residual"];

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub step: u64,
    pub env: u64,
    pub done: bool,
    /// 0 none, 1 small kick, 2 large kick.
    pub kick: u8,
    pub reward: f64,
    pub terms: TermVector,
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    /// [`BASE_STATE_NAMES`] followed by the actuator positions.
    pub state: Vec<f64>,
}

/// One row of the generalized-coordinate dynamics log.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsRow {
    pub t: f64,
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub seed: u64,
    pub n_envs: usize,
    pub n_steps: usize,
    pub obs_len: usize,
    pub n_actions: usize,
    pub n_state: usize,
    pub records: Vec<TraceRecord>,
    /// Coordinates of the first environment in the batch.
    pub dynamics: Vec<DynamicsRow>,
}

impl Trace {
    /// Records of one environment, in step order.
    pub fn env_records(&self, env: u64) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(move |r| r.env == env)
    }

    /// Per-term sums over all records, weighted as logged.
    pub fn term_totals(&self) -> TermVector {
        let mut out = [0.0; NUM_TERMS];
        for r in &self.records {
            for (o, t) in out.iter_mut().zip(&r.terms) {
                *o += t;
            }
        }
        out
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(&MAGIC)?;
        w.write_all(&TRACE_VERSION.to_le_bytes())?;
        w.write_all(&0u16.to_le_bytes())?;
        for v in [self.n_envs, self.n_steps, self.obs_len, self.n_actions, NUM_TERMS, self.n_state] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        w.write_all(&self.seed.to_le_bytes())?;
        for r in &self.records {
            w.write_all(&r.step.to_le_bytes())?;
            w.write_all(&r.env.to_le_bytes())?;
            w.write_all(&[r.done as u8, r.kick, 0, 0, 0, 0, 0, 0])?;
            w.write_all(&r.reward.to_le_bytes())?;
            for x in r.terms.iter().chain(&r.obs).chain(&r.action).chain(&r.state) {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_binary(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_binary(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_binary<R: Read>(mut r: R) -> io::Result<Self> {
        let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != MAGIC {
            return Err(bad("not an LFTR trace"));
        }
        let version = read_u16(&mut r)?;
        if version != TRACE_VERSION {
            return Err(bad(&format!("unsupported trace version {version}")));
        }
        let _flags = read_u16(&mut r)?;
        let mut dims = [0usize; 6];
        for d in dims.iter_mut() {
            *d = read_u32(&mut r)? as usize;
        }
        let [n_envs, n_steps, obs_len, n_actions, n_terms, n_state] = dims;
        if n_terms != NUM_TERMS {
            return Err(bad(&format!("trace has {n_terms} reward terms, expected {NUM_TERMS}")));
        }
        let seed = read_u64(&mut r)?;
        let mut records = Vec::with_capacity(n_envs * n_steps);
        for _ in 0..n_envs * n_steps {
            let step = read_u64(&mut r)?;
            let env = read_u64(&mut r)?;
            let mut flags = [0u8; 8];
            r.read_exact(&mut flags)?;
            let reward = read_f64(&mut r)?;
            let mut terms = [0.0; NUM_TERMS];
            for t in terms.iter_mut() {
                *t = read_f64(&mut r)?;
            }
            let mut vec = |n: usize| (0..n).map(|_| read_f64(&mut r)).collect::<io::Result<Vec<f64>>>();
            let obs = vec(obs_len)?;
            let action = vec(n_actions)?;
            let state = vec(n_state)?;
            records.push(TraceRecord { step, env, done: flags[0] != 0, kick: flags[1], reward, terms, obs, action, state });
        }
        Ok(Self { seed, n_envs, n_steps, obs_len, n_actions, n_state, records, dynamics: Vec::new() })
    }

    pub fn csv_header(&self) -> String {
        let mut cols: Vec<String> = ["step", "env", "done", "kick", "reward"].iter().map(|s| s.to_string()).collect();
        cols.extend(TERM_NAMES.iter().map(|s| s.to_string()));
        cols.extend((0..self.obs_len).map(|i| format!("obs_{i}")));
        cols.extend((0..self.n_actions).map(|i| format!("action_{i}")));
        cols.extend(BASE_STATE_NAMES.iter().map(|s| s.to_string()));
        cols.extend((0..self.n_state.saturating_sub(BASE_STATE_NAMES.len())).map(|i| format!("q_act_{i}")));
        cols.join(",")
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", self.csv_header())?;
        for r in &self.records {
            write!(w, "{},{},{},{},{}", r.step, r.env, r.done as u8, r.kick, r.reward)?;
            for x in r.terms.iter().chain(&r.obs).chain(&r.action).chain(&r.state) {
                write!(w, ",{x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// `t, q_0.., qdot_0.., residual_0..` for the first environment.
    pub fn write_dynamics_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let Some(first) = self.dynamics.first() else {
            return writeln!(w, "t");
        };
        let mut cols = vec!["t".to_string()];
        cols.extend((0..first.q.len()).map(|i| format!("q_{i}")));
        cols.extend((0..first.qdot.len()).map(|i| format!("qdot_{i}")));
        cols.extend((0..first.residuals.len()).map(|i| format!("residual_{i}")));
        writeln!(w, "{}", cols.join(","))?;
        for row in &self.dynamics {
            write!(w, "{}", row.t)?;
            for x in row.q.iter().chain(&row.qdot).chain(&row.residuals) {
                write!(w, ",{x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn read_u16<R: Read>(r: &mut R) -> io::Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}
