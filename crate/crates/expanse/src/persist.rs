//! Bit-exact checkpoint serialization and structured experiment
//! reports.
//!
//! Checkpoint layout (all integers and floats little-endian):
//!
//! ```text
//! "EXPN"  magic, 4 bytes
//! u32     version = 1
//! u32     flags = 0
//! u32     layer count
//! per layer: u32 in, u32 out, W row-major f64, b f64
//! optional sections, each: 4-byte tag, u64 byte length, payload
//!   "MASK"  per layer: W bits packed row-major, padded to a byte,
//!           then b bits, padded to a byte
//!   "ADAM"  u64 t, f64 beta1, f64 beta2, f64 epsilon,
//!           per layer: m_W, m_b, v_W, v_b as f64 arrays
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expand::FreezeMask;
use crate::netcore::{DenseLayer, Network};
use crate::optim::{AdamState, LayerMoments};
use crate::train::StageResult;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"EXPN";
pub const CHECKPOINT_VERSION: u32 = 1;
const MASK_TAG: &[u8; 4] = b"MASK";
const ADAM_TAG: &[u8; 4] = b"ADAM";

/// Exact byte size of a checkpoint holding only the network.
pub fn checkpoint_core_size(layer_sizes: &[usize]) -> u64 {
    16 + layer_sizes
        .windows(2)
        .map(|p| 8 + 8 * (p[1] * p[0] + p[1]) as u64)
        .sum::<u64>()
}

pub fn save_checkpoint(
    path: &Path,
    net: &Network,
    mask: Option<&FreezeMask>,
    state: Option<&AdamState>,
) -> Result<()> {
    if let Some(m) = mask {
        m.check_congruent(net)?;
    }
    let write = || -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_u32::<LittleEndian>(CHECKPOINT_VERSION)?;
        w.write_u32::<LittleEndian>(0)?; // flags
        w.write_u32::<LittleEndian>(net.layers().len() as u32)?;
        for layer in net.layers() {
            w.write_u32::<LittleEndian>(layer.input_dim() as u32)?;
            w.write_u32::<LittleEndian>(layer.output_dim() as u32)?;
            for &v in layer.weights.iter() {
                w.write_f64::<LittleEndian>(v)?;
            }
            for &v in layer.bias.iter() {
                w.write_f64::<LittleEndian>(v)?;
            }
        }
        if let Some(m) = mask {
            let payload = pack_mask(m);
            w.write_all(MASK_TAG)?;
            w.write_u64::<LittleEndian>(payload.len() as u64)?;
            w.write_all(&payload)?;
        }
        if let Some(s) = state {
            let payload = pack_adam(s);
            w.write_all(ADAM_TAG)?;
            w.write_u64::<LittleEndian>(payload.len() as u64)?;
            w.write_all(&payload)?;
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

fn pack_bits(bits: impl Iterator<Item = bool>) -> Vec<u8> {
    let mut out = Vec::new();
    let mut byte = 0u8;
    let mut filled = 0;
    for bit in bits {
        if bit {
            byte |= 1 << filled;
        }
        filled += 1;
        if filled == 8 {
            out.push(byte);
            byte = 0;
            filled = 0;
        }
    }
    if filled > 0 {
        out.push(byte);
    }
    out
}

fn pack_mask(mask: &FreezeMask) -> Vec<u8> {
    let mut payload = Vec::new();
    for (w, b) in mask.layers() {
        payload.extend(pack_bits(w.iter().copied()));
        payload.extend(pack_bits(b.iter().copied()));
    }
    payload
}

fn pack_adam(state: &AdamState) -> Vec<u8> {
    let mut payload = Vec::new();
    payload.extend(state.t.to_le_bytes());
    payload.extend(state.beta1.to_le_bytes());
    payload.extend(state.beta2.to_le_bytes());
    payload.extend(state.epsilon.to_le_bytes());
    for mom in &state.moments {
        for &v in mom.m_weights.iter() {
            payload.extend(v.to_le_bytes());
        }
        for &v in mom.m_bias.iter() {
            payload.extend(v.to_le_bytes());
        }
        for &v in mom.v_weights.iter() {
            payload.extend(v.to_le_bytes());
        }
        for &v in mom.v_bias.iter() {
            payload.extend(v.to_le_bytes());
        }
    }
    payload
}

struct CountingReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> CountingReader<R> {
    fn read_exact(&mut self, buf: &mut [u8]) -> std::io::Result<()> {
        self.inner.read_exact(buf)?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn read_u32(&mut self) -> std::io::Result<u32> {
        let v = self.inner.read_u32::<LittleEndian>()?;
        self.offset += 4;
        Ok(v)
    }

    fn read_u64(&mut self) -> std::io::Result<u64> {
        let v = self.inner.read_u64::<LittleEndian>()?;
        self.offset += 8;
        Ok(v)
    }

    fn read_f64_vec(&mut self, n: usize) -> std::io::Result<Vec<f64>> {
        let mut bytes = vec![0u8; n * 8];
        self.read_exact(&mut bytes)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn load_checkpoint(
    path: &Path,
) -> Result<(Network, Option<FreezeMask>, Option<AdamState>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = CountingReader {
        inner: BufReader::new(file),
        offset: 0,
    };
    let fail = |offset: u64, message: String| Error::Checkpoint {
        path: path.into(),
        offset,
        message,
    };
    let io_fail = |r: &CountingReader<BufReader<File>>, what: &str| {
        fail(r.offset, format!("truncated while reading {what}"))
    };

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| fail(0, "truncated magic".into()))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(fail(0, format!("bad magic {magic:?}")));
    }
    let version = r.read_u32().map_err(|_| io_fail(&r, "version"))?;
    if version != CHECKPOINT_VERSION {
        return Err(fail(4, format!("unsupported version {version}")));
    }
    let _flags = r.read_u32().map_err(|_| io_fail(&r, "flags"))?;
    let layer_count = r.read_u32().map_err(|_| io_fail(&r, "layer count"))? as usize;
    if layer_count == 0 {
        return Err(fail(12, "zero layers".into()));
    }

    let mut layers = Vec::with_capacity(layer_count);
    for l in 0..layer_count {
        let input = r.read_u32().map_err(|_| io_fail(&r, &format!("layer {l} input dim")))? as usize;
        let output = r.read_u32().map_err(|_| io_fail(&r, &format!("layer {l} output dim")))? as usize;
        let w = r
            .read_f64_vec(output * input)
            .map_err(|_| io_fail(&r, &format!("layer {l} weights")))?;
        let b = r
            .read_f64_vec(output)
            .map_err(|_| io_fail(&r, &format!("layer {l} bias")))?;
        layers.push(DenseLayer {
            weights: Array2::from_shape_vec((output, input), w).expect("sized above"),
            bias: Array1::from_vec(b),
        });
    }
    let net = Network::from_layers(layers)
        .map_err(|e| fail(r.offset, format!("inconsistent layers: {e}")))?;

    let mut mask = None;
    let mut state = None;
    loop {
        let mut tag = [0u8; 4];
        match r.inner.read_exact(&mut tag) {
            Ok(()) => r.offset += 4,
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(Error::io(path, e)),
        }
        let len = r.read_u64().map_err(|_| io_fail(&r, "section length"))?;
        let mut payload = vec![0u8; len as usize];
        let tag_offset = r.offset - 12;
        r.read_exact(&mut payload)
            .map_err(|_| io_fail(&r, "section payload"))?;
        match &tag {
            t if t == MASK_TAG => {
                mask = Some(unpack_mask(&net, &payload).map_err(|m| fail(tag_offset, m))?);
            }
            t if t == ADAM_TAG => {
                state = Some(unpack_adam(&net, &payload).map_err(|m| fail(tag_offset, m))?);
            }
            t => {
                return Err(fail(
                    tag_offset,
                    format!("unknown section tag {:?}", String::from_utf8_lossy(t)),
                ));
            }
        }
    }
    Ok((net, mask, state))
}

fn unpack_bits(bytes: &[u8], n: usize) -> Vec<bool> {
    (0..n).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect()
}

fn unpack_mask(net: &Network, payload: &[u8]) -> std::result::Result<FreezeMask, String> {
    let mut cursor = 0usize;
    let mut layers = Vec::with_capacity(net.layers().len());
    for layer in net.layers() {
        let (out, inp) = layer.weights.dim();
        let w_bytes = (out * inp + 7) / 8;
        let b_bytes = (out + 7) / 8;
        if cursor + w_bytes + b_bytes > payload.len() {
            return Err("mask section too short".into());
        }
        let w_bits = unpack_bits(&payload[cursor..cursor + w_bytes], out * inp);
        cursor += w_bytes;
        let b_bits = unpack_bits(&payload[cursor..cursor + b_bytes], out);
        cursor += b_bytes;
        layers.push((
            Array2::from_shape_vec((out, inp), w_bits).expect("sized above"),
            Array1::from_vec(b_bits),
        ));
    }
    if cursor != payload.len() {
        return Err(format!("mask section has {} trailing bytes", payload.len() - cursor));
    }
    Ok(FreezeMask::from_layers(layers))
}

fn unpack_adam(net: &Network, payload: &[u8]) -> std::result::Result<AdamState, String> {
    let header = 8 + 3 * 8;
    let per_layer: usize = net
        .layers()
        .iter()
        .map(|l| 2 * 8 * (l.weights.len() + l.bias.len()))
        .sum();
    if payload.len() != header + per_layer {
        return Err(format!(
            "adam section is {} bytes, expected {}",
            payload.len(),
            header + per_layer
        ));
    }
    let f64_at = |off: usize| f64::from_le_bytes(payload[off..off + 8].try_into().unwrap());
    let t = u64::from_le_bytes(payload[0..8].try_into().unwrap());
    let beta1 = f64_at(8);
    let beta2 = f64_at(16);
    let epsilon = f64_at(24);
    let mut cursor = 32;
    let mut read_arr = |n: usize| -> Vec<f64> {
        let out = payload[cursor..cursor + 8 * n]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        cursor += 8 * n;
        out
    };
    let mut moments = Vec::with_capacity(net.layers().len());
    for layer in net.layers() {
        let (out, inp) = layer.weights.dim();
        let m_weights = Array2::from_shape_vec((out, inp), read_arr(out * inp)).unwrap();
        let m_bias = Array1::from_vec(read_arr(out));
        let v_weights = Array2::from_shape_vec((out, inp), read_arr(out * inp)).unwrap();
        let v_bias = Array1::from_vec(read_arr(out));
        moments.push(LayerMoments {
            m_weights,
            m_bias,
            v_weights,
            v_bias,
        });
    }
    Ok(AdamState {
        moments,
        t,
        beta1,
        beta2,
        epsilon,
    })
}

/// JSON report document: raw full-precision values plus the accuracies
/// formatted to two decimals the way the result tables print them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub stages: Vec<ReportStage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportStage {
    pub formatted: FormattedAccuracies,
    #[serde(flatten)]
    pub result: StageResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormattedAccuracies {
    pub exemplary: Option<String>,
    pub train: Option<String>,
    pub test: Option<String>,
}

/// `0.9809` -> `"98.09%"`.
pub fn format_accuracy(fraction: f64) -> String {
    format!("{:.2}%", fraction * 100.0)
}

impl Report {
    pub fn from_results(results: &[StageResult]) -> Report {
        Report {
            stages: results
                .iter()
                .map(|r| ReportStage {
                    formatted: FormattedAccuracies {
                        exemplary: r.exemplary.as_ref().map(|e| format_accuracy(e.accuracy)),
                        train: r.train.as_ref().map(|e| format_accuracy(e.accuracy)),
                        test: r.test.as_ref().map(|e| format_accuracy(e.accuracy)),
                    },
                    result: r.clone(),
                })
                .collect(),
        }
    }
}

pub fn write_report(results: &[StageResult], path: &Path) -> Result<()> {
    let report = Report::from_results(results);
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_report(path: &Path) -> Result<Report> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}
