use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::encoder::{GinEncoder, GinLayer, MlpBlock};
use super::objective::DgiParams;
use super::train::EmbeddingTable;
use crate::container::{strip_magic, Reader, Writer};
use crate::error::{Error, Result};
use crate::nn::{BatchNorm, Linear, Matrix};
use crate::util::fmt_g6;

pub const ENCODER_MAGIC: &[u8; 7] = b"INSPL1\0";

/// A named tensor: `name length (u32) | name | rank (u32) | dims (u64 each) | f32 data`.
struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

fn put(w: &mut Writer, name: &str, dims: &[usize], data: &[f32]) {
    debug_assert_eq!(dims.iter().product::<usize>(), data.len());
    w.u32(name.len() as u32);
    w.bytes(name.as_bytes());
    w.u32(dims.len() as u32);
    for &d in dims {
        w.u64(d as u64);
    }
    for &v in data {
        w.f32(v);
    }
}

fn put_block(w: &mut Writer, prefix: &str, b: &MlpBlock<f32>) {
    let l = &b.linear;
    put(w, &format!("{prefix}.weight"), &[l.fan_in(), l.fan_out()], l.weight.data());
    put(w, &format!("{prefix}.bias"), &[l.fan_out()], &l.bias);
    let n = b.bn.width();
    put(w, &format!("{prefix}.bn.gamma"), &[n], &b.bn.gamma);
    put(w, &format!("{prefix}.bn.beta"), &[n], &b.bn.beta);
    put(w, &format!("{prefix}.bn.running_mean"), &[n], &b.bn.running_mean);
    put(w, &format!("{prefix}.bn.running_var"), &[n], &b.bn.running_var);
}

/// Serializes encoder and discriminator weights, including batch-norm running statistics.
pub fn encode_params(p: &DgiParams<f32>) -> Vec<u8> {
    let mut w = Writer::with_magic(ENCODER_MAGIC);
    put(&mut w, "num_layers", &[], &[p.encoder.layers.len() as f32]);
    for (k, l) in p.encoder.layers.iter().enumerate() {
        put(&mut w, &format!("layer{k}.eps"), &[], &[l.eps]);
        put(&mut w, &format!("layer{k}.eps_learnable"), &[], &[if l.learn_eps { 1.0 } else { 0.0 }]);
        put_block(&mut w, &format!("layer{k}.fc1"), &l.fc1);
        put_block(&mut w, &format!("layer{k}.fc2"), &l.fc2);
    }
    put(&mut w, "disc.weight", &[p.disc.rows(), p.disc.cols()], p.disc.data());
    w.buf
}

fn parse_tensors(body: &[u8]) -> Result<HashMap<String, Tensor>> {
    let mut r = Reader::new(body);
    let mut out = HashMap::new();
    while !r.is_empty() {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::CorruptArtifact("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        if rank > 8 {
            return Err(Error::CorruptArtifact(format!("tensor {name} has rank {rank}")));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u64()? as usize);
        }
        let count: usize = dims.iter().product();
        let raw = r.take(count.checked_mul(4).ok_or_else(|| Error::CorruptArtifact("tensor too large".into()))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        if out.insert(name.clone(), Tensor { dims, data }).is_some() {
            return Err(Error::CorruptArtifact(format!("duplicate tensor {name}")));
        }
    }
    Ok(out)
}

struct Tensors(HashMap<String, Tensor>);

impl Tensors {
    fn get(&mut self, name: &str, rank: usize) -> Result<Tensor> {
        let t = self
            .0
            .remove(name)
            .ok_or_else(|| Error::CorruptArtifact(format!("missing tensor {name}")))?;
        if t.dims.len() != rank {
            return Err(Error::CorruptArtifact(format!(
                "tensor {name} has rank {}, expected {rank}",
                t.dims.len()
            )));
        }
        Ok(t)
    }

    fn scalar(&mut self, name: &str) -> Result<f32> {
        Ok(self.get(name, 0)?.data[0])
    }

    fn vector(&mut self, name: &str, len: usize) -> Result<Vec<f32>> {
        let t = self.get(name, 1)?;
        if t.dims[0] != len {
            return Err(Error::CorruptArtifact(format!("tensor {name} has length {}, expected {len}", t.dims[0])));
        }
        Ok(t.data)
    }

    fn matrix(&mut self, name: &str) -> Result<Matrix<f32>> {
        let t = self.get(name, 2)?;
        Matrix::from_vec(t.dims[0], t.dims[1], t.data)
    }

    fn block(&mut self, prefix: &str) -> Result<MlpBlock<f32>> {
        let weight = self.matrix(&format!("{prefix}.weight"))?;
        let n = weight.cols();
        let bias = self.vector(&format!("{prefix}.bias"), n)?;
        let mut bn = BatchNorm::new(n);
        bn.gamma = self.vector(&format!("{prefix}.bn.gamma"), n)?;
        bn.beta = self.vector(&format!("{prefix}.bn.beta"), n)?;
        bn.running_mean = self.vector(&format!("{prefix}.bn.running_mean"), n)?;
        bn.running_var = self.vector(&format!("{prefix}.bn.running_var"), n)?;
        Ok(MlpBlock {
            linear: Linear { weight, bias },
            bn,
        })
    }
}

pub fn decode_params(bytes: &[u8]) -> Result<DgiParams<f32>> {
    let body = strip_magic(bytes, ENCODER_MAGIC)?;
    let mut t = Tensors(parse_tensors(body)?);
    let num_layers = t.scalar("num_layers")? as usize;
    if num_layers == 0 {
        return Err(Error::CorruptArtifact("encoder without layers".into()));
    }
    let mut layers = Vec::with_capacity(num_layers);
    for k in 0..num_layers {
        let eps = t.scalar(&format!("layer{k}.eps"))?;
        let learn_eps = t.scalar(&format!("layer{k}.eps_learnable"))? != 0.0;
        let fc1 = t.block(&format!("layer{k}.fc1"))?;
        let fc2 = t.block(&format!("layer{k}.fc2"))?;
        layers.push(GinLayer { eps, learn_eps, fc1, fc2 });
    }
    let disc = t.matrix("disc.weight")?;
    for w in layers.windows(2) {
        if w[0].out_dim() != w[1].in_dim() {
            return Err(Error::CorruptArtifact("layer widths do not chain".into()));
        }
    }
    let out_dim = layers.last().expect("non-empty").out_dim();
    if disc.rows() != out_dim || disc.cols() != out_dim {
        return Err(Error::CorruptArtifact(format!(
            "discriminator {:?} for embedding width {out_dim}",
            disc.shape()
        )));
    }
    if let Some(extra) = t.0.keys().next() {
        return Err(Error::CorruptArtifact(format!("unexpected tensor {extra}")));
    }
    Ok(DgiParams {
        encoder: GinEncoder { layers },
        disc,
    })
}

pub fn save_params(p: &DgiParams<f32>, path: &Path) -> Result<()> {
    std::fs::write(path, encode_params(p)).map_err(|e| Error::io(format!("write {}", path.display()), e))
}

pub fn load_params(path: &Path) -> Result<DgiParams<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(format!("read {}", path.display()), e))?;
    decode_params(&bytes)
}

/// Writes `txId,e0..e{d-1}` with 6 significant digits.
pub fn write_embeddings_csv(table: &EmbeddingTable, path: &Path) -> Result<()> {
    let err = |e| Error::io(format!("write {}", path.display()), e);
    let mut w = BufWriter::new(File::create(path).map_err(err)?);
    write!(w, "txId").map_err(err)?;
    for c in 0..table.embeddings.cols() {
        write!(w, ",e{c}").map_err(err)?;
    }
    writeln!(w).map_err(err)?;
    for (i, id) in table.node_ids.iter().enumerate() {
        write!(w, "{id}").map_err(err)?;
        for &v in table.embeddings.row(i) {
            write!(w, ",{}", fmt_g6(v as f64)).map_err(err)?;
        }
        writeln!(w).map_err(err)?;
    }
    w.flush().map_err(err)
}

pub fn read_embeddings_csv(path: &Path, time_step: u32) -> Result<EmbeddingTable> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::MalformedRow {
        path: path.to_path_buf(),
        line: 0,
        reason: e.to_string(),
    })?;
    let malformed = |line: u64, reason: String| Error::MalformedRow {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let width = r.headers().map_err(|e| malformed(1, e.to_string()))?.len().saturating_sub(1);
    let mut ids = Vec::new();
    let mut data = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| malformed(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        ids.push(rec[0].parse::<u64>().map_err(|_| malformed(line, "bad txId".into()))?);
        for f in rec.iter().skip(1) {
            data.push(f.parse::<f32>().map_err(|_| malformed(line, format!("bad value {f:?}")))?);
        }
    }
    Ok(EmbeddingTable {
        time_step,
        embeddings: Matrix::from_vec(ids.len(), width, data)?,
        node_ids: ids,
    })
}
