use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const VOLUME_MAGIC: &[u8; 8] = b"INRVOL01";

/// Grid geometry: dimensions and mm spacing per axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dims: [usize; 3],
    pub spacing: [f32; 3],
}

impl GridSpec {
    pub fn cube(n: usize) -> Self {
        GridSpec {
            dims: [n, n, n],
            spacing: [1.0, 1.0, 1.0],
        }
    }

    pub fn voxel_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// Normalized coordinate of a voxel index along one axis, in [-1, 1].
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        let n = self.dims[axis];
        if n == 1 {
            0.0
        } else {
            -1.0 + 2.0 * i as f64 / (n - 1) as f64
        }
    }
}

/// 3D intensity grid in [-1, 1], x-fastest ordering, tagged with an acquisition age.
#[derive(Clone, Debug)]
pub struct Volume {
    pub grid: GridSpec,
    pub age: f64,
    pub intensities: Vec<f32>,
}

impl Volume {
    pub fn new(grid: GridSpec, age: f64, intensities: Vec<f32>) -> Result<Self> {
        if intensities.len() != grid.voxel_count() {
            return Err(Error::dimension(
                "volume intensities vs dims",
                &[intensities.len()],
                &grid.dims,
            ));
        }
        Ok(Volume {
            grid,
            age,
            intensities,
        })
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.grid.dims[0] * (y + self.grid.dims[1] * z)
    }

    pub fn at(&self, x: usize, y: usize, z: usize) -> f32 {
        self.intensities[self.index(x, y, z)]
    }
}

/// Writes a volume: magic | u32 LE X,Y,Z | 3x f32 spacing | f64 age | f32 intensities.
pub fn write_volume(v: &Volume, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path.display().to_string(), e);
    w.write_all(VOLUME_MAGIC).map_err(io_err)?;
    for d in v.grid.dims {
        w.write_all(&(d as u32).to_le_bytes()).map_err(io_err)?;
    }
    for s in v.grid.spacing {
        w.write_all(&s.to_le_bytes()).map_err(io_err)?;
    }
    w.write_all(&v.age.to_le_bytes()).map_err(io_err)?;
    for i in &v.intensities {
        w.write_all(&i.to_le_bytes()).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

fn read_exact_at(r: &mut impl Read, buf: &mut [u8], offset: &mut u64, what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|_| Error::Format {
        offset: *offset,
        message: format!("truncated while reading {what}"),
    })?;
    *offset += buf.len() as u64;
    Ok(())
}

pub fn read_volume(path: &Path) -> Result<Volume> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut r = BufReader::new(file);
    let mut offset = 0u64;

    let mut magic = [0u8; 8];
    read_exact_at(&mut r, &mut magic, &mut offset, "magic")?;
    if &magic != VOLUME_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&magic),
                String::from_utf8_lossy(VOLUME_MAGIC)
            ),
        });
    }

    let mut dims = [0usize; 3];
    for d in &mut dims {
        let mut b = [0u8; 4];
        read_exact_at(&mut r, &mut b, &mut offset, "dims")?;
        *d = u32::from_le_bytes(b) as usize;
    }
    let voxels = dims[0]
        .checked_mul(dims[1])
        .and_then(|p| p.checked_mul(dims[2]))
        .filter(|&n| n > 0 && n <= (1 << 33))
        .ok_or_else(|| Error::Format {
            offset: 8,
            message: format!("implausible dims {dims:?}"),
        })?;

    let mut spacing = [0f32; 3];
    for s in &mut spacing {
        let mut b = [0u8; 4];
        read_exact_at(&mut r, &mut b, &mut offset, "spacing")?;
        *s = f32::from_le_bytes(b);
    }
    let mut b8 = [0u8; 8];
    read_exact_at(&mut r, &mut b8, &mut offset, "age")?;
    let age = f64::from_le_bytes(b8);

    let mut intensities = vec![0f32; voxels];
    let mut b = [0u8; 4];
    for i in intensities.iter_mut() {
        read_exact_at(&mut r, &mut b, &mut offset, "intensities")?;
        *i = f32::from_le_bytes(b);
    }
    // anything after the payload is a format violation
    if r.read(&mut b).map_err(|e| Error::io(path.display().to_string(), e))? != 0 {
        return Err(Error::Format {
            offset,
            message: "trailing bytes after intensity payload".into(),
        });
    }
    Volume::new(GridSpec { dims, spacing }, age, intensities)
}
