use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::{ActivationMode, InrArchitecture, InrParams, Mat};

pub const INR_MAGIC: &[u8; 8] = b"INRW0001";

/// Writes theta: magic | u32 H, L_S, L_T, L_C | u8 mode | f32 omega0, s0 |
/// matrices f32 LE row-major in stream order (spatial, temporal, combined,
/// head), bias row last.
pub fn write_inr(params: &InrParams, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path.display().to_string(), e);
    let a = &params.arch;
    w.write_all(INR_MAGIC).map_err(io_err)?;
    for v in [
        a.hidden,
        a.spatial_layers,
        a.temporal_layers,
        a.combined_layers,
    ] {
        w.write_all(&(v as u32).to_le_bytes()).map_err(io_err)?;
    }
    let mode = match a.mode {
        ActivationMode::RealGabor => 0u8,
        ActivationMode::ComplexGabor => 1u8,
    };
    w.write_all(&[mode]).map_err(io_err)?;
    w.write_all(&(a.omega0 as f32).to_le_bytes()).map_err(io_err)?;
    w.write_all(&(a.s0 as f32).to_le_bytes()).map_err(io_err)?;
    for m in params.mats() {
        for &v in &m.data {
            w.write_all(&(v as f32).to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

fn read_chunk(r: &mut impl Read, buf: &mut [u8], offset: &mut u64, what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|_| Error::Format {
        offset: *offset,
        message: format!("truncated while reading {what}"),
    })?;
    *offset += buf.len() as u64;
    Ok(())
}

fn read_header(r: &mut impl Read, offset: &mut u64) -> Result<InrArchitecture> {
    let mut magic = [0u8; 8];
    read_chunk(r, &mut magic, offset, "magic")?;
    if &magic != INR_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&magic),
                String::from_utf8_lossy(INR_MAGIC)
            ),
        });
    }
    let mut dims = [0usize; 4];
    for d in &mut dims {
        let mut b = [0u8; 4];
        read_chunk(r, &mut b, offset, "architecture header")?;
        *d = u32::from_le_bytes(b) as usize;
    }
    let mut mode_b = [0u8; 1];
    read_chunk(r, &mut mode_b, offset, "activation mode")?;
    let mode = match mode_b[0] {
        0 => ActivationMode::RealGabor,
        1 => ActivationMode::ComplexGabor,
        m => {
            return Err(Error::Format {
                offset: *offset - 1,
                message: format!("unknown activation mode byte {m}"),
            })
        }
    };
    let mut f = [0u8; 4];
    read_chunk(r, &mut f, offset, "omega0")?;
    let omega0 = f32::from_le_bytes(f) as f64;
    read_chunk(r, &mut f, offset, "s0")?;
    let s0 = f32::from_le_bytes(f) as f64;
    let arch = InrArchitecture {
        hidden: dims[0],
        spatial_layers: dims[1],
        temporal_layers: dims[2],
        combined_layers: dims[3],
        omega0,
        s0,
        mode,
    };
    arch.validate().map_err(|e| Error::Format {
        offset: 8,
        message: format!("invalid architecture header: {e}"),
    })?;
    Ok(arch)
}

/// Reads only the architecture header; matrices stay on disk.
pub fn read_inr_header(path: &Path) -> Result<InrArchitecture> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut r = BufReader::new(file);
    read_header(&mut r, &mut 0)
}

pub fn read_inr(path: &Path) -> Result<InrParams> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut r = BufReader::new(file);
    let mut offset = 0u64;
    let arch = read_header(&mut r, &mut offset)?;
    let h = arch.hidden;

    let mut read_mat = |rows: usize, cols: usize, offset: &mut u64| -> Result<Mat> {
        let mut m = Mat::zeros(rows, cols);
        let mut b = [0u8; 4];
        for v in m.data.iter_mut() {
            read_chunk(&mut r, &mut b, offset, "matrix data")?;
            *v = f32::from_le_bytes(b) as f64;
        }
        Ok(m)
    };

    let mut spatial = vec![read_mat(4, h, &mut offset)?];
    for _ in 1..arch.spatial_layers {
        spatial.push(read_mat(h + 1, h, &mut offset)?);
    }
    let mut temporal = vec![read_mat(2, h, &mut offset)?];
    for _ in 1..arch.temporal_layers {
        temporal.push(read_mat(h + 1, h, &mut offset)?);
    }
    let mut combined = vec![read_mat(2 * h + 1, h, &mut offset)?];
    for _ in 1..arch.combined_layers {
        combined.push(read_mat(h + 1, h, &mut offset)?);
    }
    let head = read_mat(h + 1, 1, &mut offset)?;

    Ok(InrParams {
        arch,
        spatial,
        temporal,
        combined,
        head,
    })
}

/// Reads an INR and fails if its header differs from the requested architecture.
pub fn read_inr_expecting(path: &Path, expected: &InrArchitecture) -> Result<InrParams> {
    let header = read_inr_header(path)?;
    if header != *expected {
        return Err(Error::Input(format!(
            "INR file {} has architecture {header:?}, expected {expected:?}",
            path.display()
        )));
    }
    read_inr(path)
}
