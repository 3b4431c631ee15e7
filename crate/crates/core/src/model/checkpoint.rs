//! Binary checkpoint layout, version 1:
//!
//! ```text
//! ctrlsum-checkpoint v1 <model config as one-line JSON>\n
//! then per parameter, in construction order:
//! <name> <ndims> <d0> ... <dn-1>\n
//! <product(dims) little-endian f32 values, row-major>
//! ```

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{ConvSeq2Seq, ModelConfig};
use crate::error::{Error, Result};

const MAGIC: &str = "ctrlsum-checkpoint v1 ";

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl ConvSeq2Seq {
    pub fn write_checkpoint<W: Write>(&self, out: W) -> Result<()> {
        let mut out = BufWriter::new(out);
        writeln!(out, "{MAGIC}{}", serde_json::to_string(&self.config)?)?;
        for (_, p) in self.store.iter() {
            let dims: Vec<String> = p.value.shape().iter().map(usize::to_string).collect();
            writeln!(out, "{} {} {}", p.name, dims.len(), dims.join(" "))?;
            for &v in p.value.data() {
                out.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_checkpoint(fs::File::create(path)?)
    }

    pub fn read_checkpoint<R: Read>(input: R) -> Result<Self> {
        let mut input = BufReader::new(input);
        let mut header = String::new();
        input.read_line(&mut header)?;
        let json = header
            .strip_prefix(MAGIC)
            .ok_or_else(|| bad("missing checkpoint header"))?;
        let config: ModelConfig = serde_json::from_str(json.trim_end())?;
        let mut model = ConvSeq2Seq::new(config, 0)?;
        let mut seen = vec![false; model.store.len()];
        loop {
            let mut line = String::new();
            if input.read_line(&mut line)? == 0 {
                break;
            }
            let mut fields = line.split_whitespace();
            let name = fields.next().ok_or_else(|| bad("empty block header"))?;
            let ndims: usize = fields
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(format!("block {name}: bad rank")))?;
            let dims = fields
                .map(|s| {
                    s.parse::<usize>()
                        .map_err(|_| bad(format!("block {name}: bad dim {s:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            if dims.len() != ndims {
                return Err(bad(format!("block {name}: rank {ndims} with {} dims", dims.len())));
            }
            let id = model
                .store
                .id(name)
                .ok_or_else(|| bad(format!("unknown parameter {name}")))?;
            let value = &mut model.store.get_mut(id).value;
            if value.shape() != dims.as_slice() {
                return Err(bad(format!(
                    "parameter {name}: shape {dims:?}, model expects {:?}",
                    value.shape()
                )));
            }
            let mut bytes = vec![0u8; value.len() * 4];
            input
                .read_exact(&mut bytes)
                .map_err(|_| bad(format!("parameter {name}: truncated data")))?;
            for (dst, chunk) in value.data_mut().iter_mut().zip(bytes.chunks_exact(4)) {
                *dst = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
            }
            seen[id.index()] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            let name = &model.store.iter().nth(missing).unwrap().1.name;
            return Err(bad(format!("parameter {name} missing from checkpoint")));
        }
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_checkpoint(fs::File::open(path)?)
    }
}
