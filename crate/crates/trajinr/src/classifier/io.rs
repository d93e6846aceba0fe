//! Classifier model persistence: magic "INRC0001", layer widths, BN running
//! statistics, then all matrices as little-endian f32.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::inr::Mat;

use super::model::{BlockParams, EncoderClassifier};
use super::stack::StreamSelection;

pub const CLASSIFIER_MAGIC: &[u8; 8] = b"INRC0001";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(path.display().to_string(), e)
}

fn write_f32s(w: &mut impl Write, values: &[f64], path: &Path) -> Result<()> {
    for &v in values {
        w.write_all(&(v as f32).to_le_bytes()).map_err(io_err(path))?;
    }
    Ok(())
}

/// Serializes the model. All floating-point payloads are stored as f32.
pub fn write_classifier(model: &EncoderClassifier, path: &Path) -> Result<()> {
    model.validate()?;
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    w.write_all(CLASSIFIER_MAGIC).map_err(io_err(path))?;
    w.write_all(&[model.selection.bits(), model.blocks.len() as u8])
        .map_err(io_err(path))?;
    w.write_all(&(model.input_cols as u32).to_le_bytes())
        .map_err(io_err(path))?;
    for b in &model.blocks {
        w.write_all(&(b.mat.cols as u32).to_le_bytes())
            .map_err(io_err(path))?;
    }
    w.write_all(&(model.head1.cols as u32).to_le_bytes())
        .map_err(io_err(path))?;
    w.write_all(&(model.dropout as f32).to_le_bytes())
        .map_err(io_err(path))?;
    w.write_all(&(model.bn_eps as f32).to_le_bytes())
        .map_err(io_err(path))?;
    for b in &model.blocks {
        write_f32s(&mut w, &b.mat.data, path)?;
        write_f32s(&mut w, &b.gamma, path)?;
        write_f32s(&mut w, &b.beta, path)?;
        write_f32s(&mut w, &b.running_mean, path)?;
        write_f32s(&mut w, &b.running_var, path)?;
    }
    write_f32s(&mut w, &model.head1.data, path)?;
    write_f32s(&mut w, &model.head2.data, path)?;
    w.flush().map_err(io_err(path))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.offset + n > self.bytes.len() {
            return Err(Error::Format {
                offset: self.offset as u64,
                message: format!("truncated while reading {what}"),
            });
        }
        let s = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let raw = self.take(4 * n, what)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }
}

/// Reads a model written by `write_classifier`.
pub fn read_classifier(path: &Path) -> Result<EncoderClassifier> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(io_err(path))?;
    let mut c = Cursor {
        bytes: &bytes,
        offset: 0,
    };
    let magic = c.take(8, "magic")?;
    if magic != CLASSIFIER_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(magic),
                String::from_utf8_lossy(CLASSIFIER_MAGIC)
            ),
        });
    }
    let header = c.take(2, "selection/block count")?;
    let selection = StreamSelection::from_bits(header[0])?;
    let n_blocks = header[1] as usize;
    if n_blocks != 3 {
        return Err(Error::Format {
            offset: 8,
            message: format!("expected 3 encoder blocks, found {n_blocks}"),
        });
    }
    let input_cols = c.u32("input width")? as usize;
    let mut widths = Vec::with_capacity(n_blocks);
    for _ in 0..n_blocks {
        widths.push(c.u32("block width")? as usize);
    }
    let head_hidden = c.u32("head width")? as usize;
    let dropout = c.f32("dropout")? as f64;
    let bn_eps = c.f32("bn epsilon")? as f64;

    let mut blocks = Vec::with_capacity(n_blocks);
    let mut in_dim = input_cols;
    for &w in &widths {
        let data = c.f64s((in_dim + 1) * w, "block matrix")?;
        let mat = Mat {
            rows: in_dim + 1,
            cols: w,
            data,
        };
        blocks.push(BlockParams {
            mat,
            gamma: c.f64s(w, "gamma")?,
            beta: c.f64s(w, "beta")?,
            running_mean: c.f64s(w, "running mean")?,
            running_var: c.f64s(w, "running variance")?,
        });
        in_dim = w;
    }
    let head1 = Mat {
        rows: in_dim + 1,
        cols: head_hidden,
        data: c.f64s((in_dim + 1) * head_hidden, "head matrix 1")?,
    };
    let head2 = Mat {
        rows: head_hidden + 1,
        cols: 1,
        data: c.f64s(head_hidden + 1, "head matrix 2")?,
    };
    if c.offset != bytes.len() {
        return Err(Error::Format {
            offset: c.offset as u64,
            message: format!("{} trailing bytes", bytes.len() - c.offset),
        });
    }
    let model = EncoderClassifier {
        selection,
        input_cols,
        blocks,
        head1,
        head2,
        dropout,
        bn_eps,
    };
    model.validate()?;
    Ok(model)
}
