//! Flat binary container for models, optimizer states and checkpoints.
//!
//! Layout (all integers little-endian `u32`, reals little-endian `f64`):
//!
//! ```text
//! magic "ABELNET\0" | version | record count
//! per record: tag | shape length | shape… | parameter count | parameters…
//! ```
//!
//! | tag  | record              | shape                                       | parameters               |
//! |------|---------------------|---------------------------------------------|--------------------------|
//! | 0x01 | belief input layer  | units, clamped                              | bias                     |
//! | 0x02 | dense belief layer  | out, in                                     | weights (row-major), bias|
//! | 0x03 | conv belief layer   | filters, channels, height, width, kernel, stride | kernels, bias       |
//! | 0x10 | critic layer        | out, in, activation                         | weights, bias            |
//! | 0x20 | optimizer state     | kind, role, t low, t high, accumulator len  | hyperparameters, accumulators |
//! | 0x30 | iteration counter   | t low, t high                               | none                     |

use std::path::Path;

use crate::beliefnet::{
    BeliefLayer, BeliefNet, ConvBeliefLayer, DenseBeliefLayer, InputLayerParams, InputMode, MapShape,
};
use crate::discriminator::{Activation, DiscLayer, MlpDiscriminator};
use crate::error::{Error, Result};
use crate::numcore::Mat;
use crate::optim::{OptimizerKind, OptimizerState};

pub const MAGIC: &[u8; 8] = b"ABELNET\0";
pub const VERSION: u32 = 1;

pub const TAG_INPUT: u32 = 0x01;
pub const TAG_DENSE: u32 = 0x02;
pub const TAG_CONV: u32 = 0x03;
pub const TAG_DISC: u32 = 0x10;
pub const TAG_OPTIMIZER: u32 = 0x20;
pub const TAG_COUNTER: u32 = 0x30;

const ROLE_GENERATOR: u32 = 0;
const ROLE_DISCRIMINATOR: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub tag: u32,
    pub shape: Vec<u32>,
    pub params: Vec<f64>,
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit in 32 bits")))
}

fn shape_of(dims: &[usize]) -> Result<Vec<u32>> {
    dims.iter().map(|&d| to_u32(d, "dimension")).collect()
}

fn split_u64(t: u64) -> [u32; 2] {
    [t as u32, (t >> 32) as u32]
}

fn join_u64(lo: u32, hi: u32) -> u64 {
    lo as u64 | (hi as u64) << 32
}

pub fn encode(records: &[Record]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&to_u32(records.len(), "record count")?.to_le_bytes());
    for r in records {
        out.extend_from_slice(&r.tag.to_le_bytes());
        out.extend_from_slice(&to_u32(r.shape.len(), "shape length")?.to_le_bytes());
        for d in &r.shape {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.extend_from_slice(&to_u32(r.params.len(), "parameter count")?.to_le_bytes());
        for p in &r.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {} (wanted {n} more)", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<Record>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let mut records = Vec::new();
    for _ in 0..count {
        let tag = r.u32()?;
        let n = r.u32()? as usize;
        let shape = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let n = r.u32()? as usize;
        if n > bytes.len() / 8 {
            return Err(Error::Format(format!(
                "record declares {n} parameters, more than the file holds"
            )));
        }
        let params = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        records.push(Record { tag, shape, params });
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(records)
}

fn expect_shape(r: &Record, len: usize) -> Result<Vec<usize>> {
    if r.shape.len() != len {
        return Err(Error::Format(format!(
            "record tag 0x{:02x} has {} shape entries, expected {len}",
            r.tag,
            r.shape.len()
        )));
    }
    Ok(r.shape.iter().map(|&d| d as usize).collect())
}

fn split_params(r: &Record, first: usize, second: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if r.params.len() != first + second {
        return Err(Error::Format(format!(
            "record tag 0x{:02x} has {} parameters, expected {}",
            r.tag,
            r.params.len(),
            first + second
        )));
    }
    Ok((r.params[..first].to_vec(), r.params[first..].to_vec()))
}

pub fn net_records(net: &BeliefNet) -> Result<Vec<Record>> {
    let mut out = vec![Record {
        tag: TAG_INPUT,
        shape: shape_of(&[net.input_dim(), net.is_clamped() as usize])?,
        params: net.input().bias.clone(),
    }];
    for layer in net.layers() {
        out.push(match layer {
            BeliefLayer::Dense(d) => Record {
                tag: TAG_DENSE,
                shape: shape_of(&[d.weights.rows(), d.weights.cols()])?,
                params: [d.weights.as_slice(), &d.bias].concat(),
            },
            BeliefLayer::Conv(c) => {
                let s = c.input_shape();
                Record {
                    tag: TAG_CONV,
                    shape: shape_of(&[c.filters(), s.channels, s.height, s.width, c.kernel(), c.stride()])?,
                    params: [c.kernels(), c.bias()].concat(),
                }
            }
        });
    }
    Ok(out)
}

pub fn disc_records(disc: &MlpDiscriminator) -> Result<Vec<Record>> {
    disc.layers()
        .iter()
        .map(|l| {
            Ok(Record {
                tag: TAG_DISC,
                shape: vec![
                    to_u32(l.weights.rows(), "dimension")?,
                    to_u32(l.weights.cols(), "dimension")?,
                    l.activation.tag(),
                ],
                params: [l.weights.as_slice(), &l.bias].concat(),
            })
        })
        .collect()
}

pub fn optimizer_record(state: &OptimizerState, role: u32) -> Result<Record> {
    let (t, hyper, acc): (u64, Vec<f64>, Vec<f64>) = match state {
        OptimizerState::Sgd => (0, vec![], vec![]),
        OptimizerState::RmsProp {
            decay,
            eps,
            mean_square,
        } => (0, vec![*decay, *eps], mean_square.clone()),
        OptimizerState::Adam {
            beta1,
            beta2,
            eps,
            t,
            m,
            v,
        } => (*t, vec![*beta1, *beta2, *eps], [m.as_slice(), v.as_slice()].concat()),
    };
    let [lo, hi] = split_u64(t);
    Ok(Record {
        tag: TAG_OPTIMIZER,
        shape: vec![
            state.kind().tag(),
            role,
            lo,
            hi,
            to_u32(acc.len(), "accumulator length")?,
        ],
        params: [hyper, acc].concat(),
    })
}

fn decode_net(records: &[&Record]) -> Result<BeliefNet> {
    let (first, rest) = records
        .split_first()
        .ok_or_else(|| Error::Format("no belief network records".into()))?;
    if first.tag != TAG_INPUT {
        return Err(Error::Format("belief network must start with an input record".into()));
    }
    let s = expect_shape(first, 2)?;
    let (bias, _) = split_params(first, s[0], 0)?;
    let mut layers = Vec::with_capacity(rest.len());
    for r in rest {
        layers.push(match r.tag {
            TAG_DENSE => {
                let s = expect_shape(r, 2)?;
                let (w, b) = split_params(r, s[0] * s[1], s[0])?;
                BeliefLayer::Dense(DenseBeliefLayer::new(Mat::from_vec(s[0], s[1], w)?, b)?)
            }
            TAG_CONV => {
                let s = expect_shape(r, 6)?;
                let (k, b) = split_params(r, s[0] * s[1] * s[4] * s[4], s[0])?;
                BeliefLayer::Conv(ConvBeliefLayer::new(
                    MapShape::new(s[1], s[2], s[3]),
                    s[0],
                    s[4],
                    s[5],
                    k,
                    b,
                )?)
            }
            other => return Err(Error::Format(format!("unexpected tag 0x{other:02x} in belief network"))),
        });
    }
    let mut net = BeliefNet::new(InputLayerParams { bias }, layers)?;
    match s[1] {
        0 => {}
        1 => net.set_mode(InputMode::Clamped { condition: None }),
        other => return Err(Error::Format(format!("invalid clamp flag {other}"))),
    }
    Ok(net)
}

fn decode_disc(records: &[&Record]) -> Result<MlpDiscriminator> {
    let layers = records
        .iter()
        .map(|r| {
            let s = expect_shape(r, 3)?;
            let (w, b) = split_params(r, s[0] * s[1], s[0])?;
            let activation = Activation::from_tag(s[2] as u32)
                .ok_or_else(|| Error::Format(format!("unknown activation tag {}", s[2])))?;
            Ok(DiscLayer {
                weights: Mat::from_vec(s[0], s[1], w)?,
                bias: b,
                activation,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    MlpDiscriminator::new(layers)
}

fn decode_optimizer(r: &Record) -> Result<(u32, OptimizerState)> {
    let s = expect_shape(r, 5)?;
    let kind =
        OptimizerKind::from_tag(s[0] as u32).ok_or_else(|| Error::Format(format!("unknown optimizer tag {}", s[0])))?;
    let t = join_u64(s[2] as u32, s[3] as u32);
    let n = s[4];
    let p = &r.params;
    let state = match kind {
        OptimizerKind::Sgd => {
            split_params(r, 0, 0)?;
            OptimizerState::Sgd
        }
        OptimizerKind::RmsProp => {
            split_params(r, 2, n)?;
            OptimizerState::RmsProp {
                decay: p[0],
                eps: p[1],
                mean_square: p[2..].to_vec(),
            }
        }
        OptimizerKind::Adam => {
            if n % 2 != 0 {
                return Err(Error::Format("adam accumulators must come in pairs".into()));
            }
            split_params(r, 3, n)?;
            let half = n / 2;
            OptimizerState::Adam {
                beta1: p[0],
                beta2: p[1],
                eps: p[2],
                t,
                m: p[3..3 + half].to_vec(),
                v: p[3 + half..].to_vec(),
            }
        }
    };
    Ok((s[1] as u32, state))
}

/// A generator and, optionally, a critic.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    pub net: BeliefNet,
    pub disc: Option<MlpDiscriminator>,
}

/// Everything needed to resume training exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub net: BeliefNet,
    pub disc: MlpDiscriminator,
    pub gen_opt: OptimizerState,
    pub disc_opt: OptimizerState,
    pub t: u64,
}

impl ModelBundle {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut records = net_records(&self.net)?;
        if let Some(d) = &self.disc {
            records.extend(disc_records(d)?);
        }
        encode(&records)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let records = decode(bytes)?;
        let (net, disc, _, _, _) = split_records(&records)?;
        Ok(Self { net, disc })
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut records = net_records(&self.net)?;
        records.extend(disc_records(&self.disc)?);
        records.push(optimizer_record(&self.gen_opt, ROLE_GENERATOR)?);
        records.push(optimizer_record(&self.disc_opt, ROLE_DISCRIMINATOR)?);
        let [lo, hi] = split_u64(self.t);
        records.push(Record {
            tag: TAG_COUNTER,
            shape: vec![lo, hi],
            params: vec![],
        });
        encode(&records)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let records = decode(bytes)?;
        let (net, disc, gen_opt, disc_opt, t) = split_records(&records)?;
        let missing = |what: &str| Error::Format(format!("checkpoint has no {what}"));
        Ok(Self {
            net,
            disc: disc.ok_or_else(|| missing("critic"))?,
            gen_opt: gen_opt.ok_or_else(|| missing("generator optimizer"))?,
            disc_opt: disc_opt.ok_or_else(|| missing("critic optimizer"))?,
            t: t.ok_or_else(|| missing("iteration counter"))?,
        })
    }
}

type Split = (
    BeliefNet,
    Option<MlpDiscriminator>,
    Option<OptimizerState>,
    Option<OptimizerState>,
    Option<u64>,
);

fn split_records(records: &[Record]) -> Result<Split> {
    let mut net = Vec::new();
    let mut disc = Vec::new();
    let (mut gen_opt, mut disc_opt, mut t) = (None, None, None);
    for r in records {
        match r.tag {
            TAG_INPUT | TAG_DENSE | TAG_CONV => net.push(r),
            TAG_DISC => disc.push(r),
            TAG_OPTIMIZER => match decode_optimizer(r)? {
                (ROLE_GENERATOR, s) => gen_opt = Some(s),
                (ROLE_DISCRIMINATOR, s) => disc_opt = Some(s),
                (role, _) => return Err(Error::Format(format!("unknown optimizer role {role}"))),
            },
            TAG_COUNTER => {
                let s = expect_shape(r, 2)?;
                t = Some(join_u64(s[0] as u32, s[1] as u32));
            }
            other => return Err(Error::Format(format!("unknown record tag 0x{other:02x}"))),
        }
    }
    let disc = if disc.is_empty() {
        None
    } else {
        Some(decode_disc(&disc)?)
    };
    Ok((decode_net(&net)?, disc, gen_opt, disc_opt, t))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn save_model(path: impl AsRef<Path>, bundle: &ModelBundle) -> Result<()> {
    write(path.as_ref(), &bundle.to_bytes()?)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelBundle> {
    ModelBundle::from_bytes(&read(path.as_ref())?)
}

pub fn save_checkpoint(path: impl AsRef<Path>, checkpoint: &Checkpoint) -> Result<()> {
    write(path.as_ref(), &checkpoint.to_bytes()?)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&read(path.as_ref())?)
}
