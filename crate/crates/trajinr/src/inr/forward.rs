use rayon::prelude::*;

use crate::diffcore::{Activation, Tape, Var};
use crate::error::{Error, Result};
use crate::phantom::{GridSpec, Volume};

use super::{InrArchitecture, InrParams, Mat};

/// Chronological age in years mapped affinely from [50, 90] to [-1, 1].
pub fn normalize_age(age: f64) -> f64 {
    (age - 70.0) / 20.0
}

/// Parameter handles of an INR inserted on a tape, in stream order.
pub struct InrParamVars {
    pub spatial: Vec<Var>,
    pub temporal: Vec<Var>,
    pub combined: Vec<Var>,
    pub head: Var,
}

impl InrParamVars {
    /// All vars in the flatten()/serialization order.
    pub fn all(&self) -> Vec<Var> {
        self.spatial
            .iter()
            .chain(self.temporal.iter())
            .chain(self.combined.iter())
            .copied()
            .chain(std::iter::once(self.head))
            .collect()
    }
}

pub fn insert_params(tape: &mut Tape, params: &InrParams) -> Result<InrParamVars> {
    let ins = |tape: &mut Tape, m: &Mat| tape.input(vec![m.rows, m.cols], m.data.clone());
    let mut spatial = Vec::with_capacity(params.spatial.len());
    for m in &params.spatial {
        spatial.push(ins(tape, m)?);
    }
    let mut temporal = Vec::with_capacity(params.temporal.len());
    for m in &params.temporal {
        temporal.push(ins(tape, m)?);
    }
    let mut combined = Vec::with_capacity(params.combined.len());
    for m in &params.combined {
        combined.push(ins(tape, m)?);
    }
    let head = ins(tape, &params.head)?;
    Ok(InrParamVars {
        spatial,
        temporal,
        combined,
        head,
    })
}

/// Taped forward pass over a batch: coords [B x 3], times [B x 1] -> [B x 1].
pub fn forward_tape(
    tape: &mut Tape,
    arch: &InrArchitecture,
    vars: &InrParamVars,
    coords: Var,
    times: Var,
) -> Result<Var> {
    forward_tape_gathered(tape, arch, vars, coords, times, None)
}

/// Like [`forward_tape`] but the temporal stream runs over `times` [K x 1]
/// of deduplicated values; `time_idx` maps each of the B points to its row in
/// `times`. Scan batches have few distinct acquisition times, so this skips
/// recomputing the temporal stream per point. `None` means the identity map
/// (K == B).
pub fn forward_tape_gathered(
    tape: &mut Tape,
    arch: &InrArchitecture,
    vars: &InrParamVars,
    coords: Var,
    times: Var,
    time_idx: Option<&[usize]>,
) -> Result<Var> {
    let gabor = Activation::Gabor {
        omega0: arch.omega0,
        s0: arch.s0,
    };
    // spatial stream: lift then residual gabor layers
    let mut ys = {
        let pre = tape.matmul_aug(vars.spatial[0], coords)?;
        tape.apply_activation(pre, gabor)?
    };
    for m in &vars.spatial[1..] {
        ys = tape.residual_layer_aug(*m, ys, gabor)?;
    }
    // temporal stream: lift then residual relu layers
    let mut yt = {
        let pre = tape.matmul_aug(vars.temporal[0], times)?;
        tape.apply_activation(pre, Activation::Relu)?
    };
    for m in &vars.temporal[1..] {
        yt = tape.residual_layer_aug(*m, yt, Activation::Relu)?;
    }
    if let Some(idx) = time_idx {
        yt = tape.gather_rows(yt, idx)?;
    }
    // combined stream: concat, merge, residual gabor layers, linear head
    let both = tape.concat_cols(ys, yt)?;
    let mut yc = {
        let pre = tape.matmul_aug(vars.combined[0], both)?;
        tape.apply_activation(pre, gabor)?
    };
    for m in &vars.combined[1..] {
        yc = tape.residual_layer_aug(*m, yc, gabor)?;
    }
    tape.matmul_aug(vars.head, yc)
}

/// Splits a time vector into its unique values (bitwise, first-seen order)
/// plus a per-entry index into them.
pub(crate) fn dedup_times(times: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut seen = std::collections::HashMap::new();
    let mut uniq = Vec::new();
    let mut idx = Vec::with_capacity(times.len());
    for &t in times {
        let next = uniq.len();
        let i = *seen.entry(t.to_bits()).or_insert(next);
        if i == next {
            uniq.push(t);
        }
        idx.push(i);
    }
    (uniq, idx)
}

// ── fast (tape-free) inference ──────────────────────────────────────────

fn aug_apply(m: &Mat, x: &[f64], batch: usize, y: &mut Vec<f64>) {
    let in_dim = m.in_dim();
    let out_dim = m.cols;
    y.clear();
    y.resize(batch * out_dim, 0.0);
    let bias = &m.data[in_dim * out_dim..];
    for bi in 0..batch {
        let xr = &x[bi * in_dim..(bi + 1) * in_dim];
        let yr = &mut y[bi * out_dim..(bi + 1) * out_dim];
        yr.copy_from_slice(bias);
        for (i, &xi) in xr.iter().enumerate() {
            let mr = &m.data[i * out_dim..(i + 1) * out_dim];
            for (yo, &mo) in yr.iter_mut().zip(mr) {
                *yo += xi * mo;
            }
        }
    }
}

fn gabor_inplace(buf: &mut [f64], omega0: f64, s0: f64) {
    for u in buf.iter_mut() {
        *u = (omega0 * *u).cos() * (-(s0 * *u) * (s0 * *u)).exp();
    }
}

fn relu_inplace(buf: &mut [f64]) {
    for u in buf.iter_mut() {
        *u = u.max(0.0);
    }
}

fn add_into(acc: &mut [f64], other: &[f64]) {
    for (a, &b) in acc.iter_mut().zip(other) {
        *a += b;
    }
}

struct Scratch {
    a: Vec<f64>,
    b: Vec<f64>,
}

fn run_stream(
    mats: &[Mat],
    input: &[f64],
    batch: usize,
    gabor: Option<(f64, f64)>,
    s: &mut Scratch,
) -> Vec<f64> {
    let activate = |buf: &mut [f64]| match gabor {
        Some((w, s0)) => gabor_inplace(buf, w, s0),
        None => relu_inplace(buf),
    };
    let mut y = Vec::new();
    aug_apply(&mats[0], input, batch, &mut y);
    activate(&mut y);
    for m in &mats[1..] {
        aug_apply(m, &y, batch, &mut s.a);
        activate(&mut s.a);
        add_into(&mut s.a, &y);
        std::mem::swap(&mut y, &mut s.a);
    }
    y
}

/// Stream activations (y_s, y_t) for a single input, tape-free.
pub fn stream_outputs(params: &InrParams, c: [f64; 3], t_norm: f64) -> (Vec<f64>, Vec<f64>) {
    let mut s = Scratch {
        a: Vec::new(),
        b: Vec::new(),
    };
    let gab = Some((params.arch.omega0, params.arch.s0));
    let ys = run_stream(&params.spatial, &c, 1, gab, &mut s);
    let yt = run_stream(&params.temporal, &[t_norm], 1, None, &mut s);
    (ys, yt)
}

/// Batched tape-free forward: coords flat [B*3], times [B] (both normalized).
pub fn inr_forward_batch(params: &InrParams, coords: &[f64], times: &[f64]) -> Result<Vec<f64>> {
    let batch = times.len();
    if coords.len() != batch * 3 {
        return Err(Error::dimension(
            "inr_forward_batch coords vs times",
            &[coords.len()],
            &[batch * 3],
        ));
    }
    if coords.iter().chain(times.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite INR input".into()));
    }
    let mut s = Scratch {
        a: Vec::new(),
        b: Vec::new(),
    };
    let gab = Some((params.arch.omega0, params.arch.s0));
    let ys = run_stream(&params.spatial, coords, batch, gab, &mut s);
    // the temporal stream only sees a handful of distinct acquisition times,
    // so evaluate it once per unique time and index into the results
    let (t_uniq, t_idx) = dedup_times(times);
    let yt = run_stream(&params.temporal, &t_uniq, t_uniq.len(), None, &mut s);
    // concat columns
    let h = params.arch.hidden;
    s.b.clear();
    s.b.reserve(batch * 2 * h);
    for bi in 0..batch {
        s.b.extend_from_slice(&ys[bi * h..(bi + 1) * h]);
        let ti = t_idx[bi];
        s.b.extend_from_slice(&yt[ti * h..(ti + 1) * h]);
    }
    let merged = std::mem::take(&mut s.b);
    let yc = run_stream(&params.combined, &merged, batch, gab, &mut s);
    let mut out = Vec::new();
    aug_apply(&params.head, &yc, batch, &mut out);
    Ok(out)
}

/// Single-point intensity f_theta(c, t); inputs normalized to [-1, 1].
pub fn inr_forward(params: &InrParams, c: [f64; 3], t_norm: f64) -> Result<f64> {
    Ok(inr_forward_batch(params, &c, &[t_norm])?[0])
}

/// Evaluates the INR on every grid voxel at the given chronological age and
/// clamps to [-1, 1]. Ages outside [50, 90] extrapolate beyond the cohort's
/// temporal range; callers should treat such volumes as extrapolations.
pub fn reconstruct_volume(params: &InrParams, age: f64, grid: &GridSpec) -> Result<Volume> {
    let t_norm = normalize_age(age);
    let [nx, ny, _nz] = grid.dims;
    let slab = nx * ny;
    let mut intensities = vec![0f32; grid.voxel_count()];
    let results: Result<Vec<()>> = intensities
        .par_chunks_mut(slab)
        .enumerate()
        .map(|(z, out)| {
            let pz = grid.coord(2, z);
            let mut coords = Vec::with_capacity(slab * 3);
            for y in 0..ny {
                let py = grid.coord(1, y);
                for x in 0..nx {
                    coords.push(grid.coord(0, x));
                    coords.push(py);
                    coords.push(pz);
                }
            }
            let times = vec![t_norm; slab];
            let vals = inr_forward_batch(params, &coords, &times)?;
            for (o, v) in out.iter_mut().zip(vals) {
                *o = v.clamp(-1.0, 1.0) as f32;
            }
            Ok(())
        })
        .collect();
    results?;
    Volume::new(*grid, age, intensities)
}
