//! Binary snapshot of all agent vectors after a round.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! magic   8 bytes  "LGTCKPT1"
//! tag     u64      algorithm (see `AlgorithmTag`)
//! round   u64
//! agents  u64      N
//! dim     u64      p (length of the model vector)
//! fields  u64      vectors stored per agent
//! then, for every agent and every field: u64 length, that many f64
//! ```

use std::io::{self, Read, Write};

use super::{AgentState, MustAgentState};

pub const MAGIC: &[u8; 8] = b"LGTCKPT1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum AlgorithmTag {
    Lsgt = 1,
    Gt = 2,
    Dsgd = 3,
    D2 = 4,
    Centralized = 5,
    Must = 6,
}

impl AlgorithmTag {
    fn from_u64(v: u64) -> Option<Self> {
        Some(match v {
            1 => Self::Lsgt,
            2 => Self::Gt,
            3 => Self::Dsgd,
            4 => Self::D2,
            5 => Self::Centralized,
            6 => Self::Must,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub tag: AlgorithmTag,
    pub round: u64,
    pub dim: u64,
    /// `agents[n][field]`.
    pub agents: Vec<Vec<Vec<f64>>>,
}

impl Checkpoint {
    pub fn from_lsgt(tag: AlgorithmTag, round: u64, states: &[AgentState]) -> Self {
        Self {
            tag,
            round,
            dim: states.first().map_or(0, |s| s.y.len() as u64),
            agents: states
                .iter()
                .map(|s| vec![s.y.clone(), s.v.clone(), s.g_last.clone()])
                .collect(),
        }
    }

    pub fn to_lsgt(&self) -> io::Result<Vec<AgentState>> {
        self.agents
            .iter()
            .map(|f| match f.as_slice() {
                [y, v, g] => Ok(AgentState {
                    y: y.clone(),
                    v: v.clone(),
                    g_last: g.clone(),
                }),
                _ => Err(invalid("expected 3 fields per agent")),
            })
            .collect()
    }

    pub fn from_must(round: u64, states: &[MustAgentState]) -> Self {
        Self {
            tag: AlgorithmTag::Must,
            round,
            dim: states
                .first()
                .map_or(0, |s| (s.theta.len() + s.x.len()) as u64),
            agents: states
                .iter()
                .map(|s| {
                    vec![
                        s.theta.clone(),
                        s.x.clone(),
                        s.z.clone(),
                        s.u.clone(),
                        s.g_theta.clone(),
                        s.g_x.clone(),
                    ]
                })
                .collect(),
        }
    }

    pub fn to_must(&self) -> io::Result<Vec<MustAgentState>> {
        self.agents
            .iter()
            .map(|f| match f.as_slice() {
                [theta, x, z, u, g_theta, g_x] => Ok(MustAgentState {
                    theta: theta.clone(),
                    x: x.clone(),
                    z: z.clone(),
                    u: u.clone(),
                    g_theta: g_theta.clone(),
                    g_x: g_x.clone(),
                }),
                _ => Err(invalid("expected 6 fields per agent")),
            })
            .collect()
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> io::Result<()> {
        let fields = self.agents.first().map_or(0, Vec::len);
        if self.agents.iter().any(|a| a.len() != fields) {
            return Err(invalid("agents carry different field counts"));
        }
        out.write_all(MAGIC)?;
        for v in [
            self.tag as u64,
            self.round,
            self.agents.len() as u64,
            self.dim,
            fields as u64,
        ] {
            out.write_all(&v.to_le_bytes())?;
        }
        for field in self.agents.iter().flatten() {
            out.write_all(&(field.len() as u64).to_le_bytes())?;
            for x in field {
                out.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> io::Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(invalid("bad checkpoint magic"));
        }
        let tag = AlgorithmTag::from_u64(read_u64(&mut input)?)
            .ok_or_else(|| invalid("unknown algorithm tag"))?;
        let round = read_u64(&mut input)?;
        let n = read_u64(&mut input)?;
        let dim = read_u64(&mut input)?;
        let fields = read_u64(&mut input)?;
        let mut agents = Vec::new();
        for _ in 0..n {
            let mut agent = Vec::new();
            for _ in 0..fields {
                let len = read_u64(&mut input)? as usize;
                let mut buf = vec![0u8; len.checked_mul(8).ok_or_else(|| invalid("length"))?];
                input.read_exact(&mut buf)?;
                agent.push(
                    buf.chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                        .collect(),
                );
            }
            agents.push(agent);
        }
        Ok(Self {
            tag,
            round,
            dim,
            agents,
        })
    }
}

fn read_u64<R: Read>(input: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn invalid(msg: &str) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.to_string())
}
