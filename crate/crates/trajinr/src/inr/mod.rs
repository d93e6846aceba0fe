//! Semi-disentangled spatiotemporal INR: a spatial stream (Gabor activations)
//! and a temporal stream (ReLU) of residual layers, merged by concatenation
//! into a combined Gabor stream with a linear output head.

mod fit;
mod forward;
mod io;

pub use fit::{finetune_subject, pretrain_init, subject_mse, FitConfig};
pub use forward::{forward_tape, inr_forward, inr_forward_batch, reconstruct_volume, stream_outputs};
pub use io::{read_inr, read_inr_expecting, read_inr_header, write_inr, INR_MAGIC};

use rand::Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Prng;

/// Spatial-stream weight representation. Complex mode exists for parameter
/// accounting and stacking conventions; forward evaluation runs in real mode.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationMode {
    RealGabor,
    ComplexGabor,
}

/// The three parameter streams of the architecture.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stream {
    Space,
    Time,
    Combined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InrArchitecture {
    /// Hidden width H.
    pub hidden: usize,
    /// Spatial layers including the coordinate lift.
    pub spatial_layers: usize,
    /// Temporal layers including the time lift; must equal `spatial_layers`.
    pub temporal_layers: usize,
    /// Combined layers including the merge layer.
    pub combined_layers: usize,
    pub omega0: f64,
    pub s0: f64,
    pub mode: ActivationMode,
}

impl InrArchitecture {
    /// Paper-scale preset: eight residually connected layers of hidden size 512,
    /// streams separate for the first five.
    pub fn paper() -> Self {
        InrArchitecture {
            hidden: 512,
            spatial_layers: 5,
            temporal_layers: 5,
            combined_layers: 3,
            omega0: 20.0,
            s0: 10.0,
            mode: ActivationMode::RealGabor,
        }
    }

    /// Desk-scale preset: same depth at hidden size 64.
    pub fn desk() -> Self {
        InrArchitecture {
            hidden: 64,
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.spatial_layers != self.temporal_layers {
            return Err(Error::Config(format!(
                "spatial and temporal streams must merge at the same depth: {} vs {}",
                self.spatial_layers, self.temporal_layers
            )));
        }
        if self.spatial_layers < 2 || self.combined_layers < 1 || self.hidden == 0 {
            return Err(Error::Config(format!(
                "architecture needs >=2 stream layers, >=1 combined layer, hidden > 0; got L_S={}, L_C={}, H={}",
                self.spatial_layers, self.combined_layers, self.hidden
            )));
        }
        if self.omega0 <= 0.0 || self.s0 <= 0.0 {
            return Err(Error::Config("omega0 and s0 must be positive".into()));
        }
        Ok(())
    }

    /// Entries in one stream's stacked parameter matrices (lift/merge plus
    /// residual layers, bias rows included; output head excluded).
    pub fn stream_param_count(&self, stream: Stream) -> usize {
        let h = self.hidden;
        let residual = (h + 1) * h;
        let base = match stream {
            Stream::Space => (3 + 1) * h + (self.spatial_layers - 1) * residual,
            Stream::Time => (1 + 1) * h + (self.temporal_layers - 1) * residual,
            Stream::Combined => (2 * h + 1) * h + (self.combined_layers - 1) * residual,
        };
        match (stream, self.mode) {
            (Stream::Space, ActivationMode::ComplexGabor) => 2 * base,
            _ => base,
        }
    }

    /// Total parameter count including the output head.
    pub fn total_param_count(&self) -> usize {
        self.stream_param_count(Stream::Space)
            + self.stream_param_count(Stream::Time)
            + self.stream_param_count(Stream::Combined)
            + (self.hidden + 1)
    }
}

/// Dense row-major matrix in bias-row-augmented form: the first `rows - 1`
/// rows hold the weights, the final row the bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn in_dim(&self) -> usize {
        self.rows - 1
    }
}

/// Subject INR parameters theta: per-stream stacked matrices plus the head.
#[derive(Clone, Debug, PartialEq)]
pub struct InrParams {
    pub arch: InrArchitecture,
    pub spatial: Vec<Mat>,
    pub temporal: Vec<Mat>,
    pub combined: Vec<Mat>,
    pub head: Mat,
}

impl InrParams {
    /// Matrices in the fixed serialization order: spatial, temporal, combined, head.
    pub fn mats(&self) -> Vec<&Mat> {
        self.spatial
            .iter()
            .chain(self.temporal.iter())
            .chain(self.combined.iter())
            .chain(std::iter::once(&self.head))
            .collect()
    }

    pub fn mats_mut(&mut self) -> Vec<&mut Mat> {
        self.spatial
            .iter_mut()
            .chain(self.temporal.iter_mut())
            .chain(self.combined.iter_mut())
            .chain(std::iter::once(&mut self.head))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.mats().iter().map(|m| m.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for m in self.mats() {
            out.extend_from_slice(&m.data);
        }
        out
    }

    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::dimension(
                "flat parameter vector",
                &[flat.len()],
                &[self.param_count()],
            ));
        }
        let mut off = 0;
        for m in self.mats_mut() {
            let n = m.data.len();
            m.data.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }
}

/// Builds an INR with Uniform(+-1/sqrt(fan_in)) weights, Gabor-stream weights
/// additionally divided by omega0, and zero biases. Deterministic given `seed`.
pub fn build_inr(arch: &InrArchitecture, seed: u64) -> Result<InrParams> {
    arch.validate()?;
    if arch.mode == ActivationMode::ComplexGabor {
        return Err(Error::Config(
            "complex-gabor mode supports parameter accounting only; build with real_gabor".into(),
        ));
    }
    let mut rng = Prng::seed_from_u64(seed);
    let h = arch.hidden;
    let mut init = |in_dim: usize, out_dim: usize, gabor_scaled: bool| -> Mat {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let scale = if gabor_scaled { 1.0 / arch.omega0 } else { 1.0 };
        let mut m = Mat::zeros(in_dim + 1, out_dim);
        // weight rows only; the final bias row stays zero
        for r in 0..in_dim {
            for c in 0..out_dim {
                m.data[r * out_dim + c] = rng.gen_range(-bound..bound) * scale;
            }
        }
        m
    };

    let mut spatial = vec![init(3, h, true)];
    for _ in 1..arch.spatial_layers {
        spatial.push(init(h, h, true));
    }
    let mut temporal = vec![init(1, h, false)];
    for _ in 1..arch.temporal_layers {
        temporal.push(init(h, h, false));
    }
    let mut combined = vec![init(2 * h, h, true)];
    for _ in 1..arch.combined_layers {
        combined.push(init(h, h, true));
    }
    let head = init(h, 1, false);
    Ok(InrParams {
        arch: arch.clone(),
        spatial,
        temporal,
        combined,
        head,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_param_count_matches_closed_form() {
        let arch = InrArchitecture::desk();
        let p = build_inr(&arch, 1).unwrap();
        // 64*4 + 4*65*64 + 2*64 + 4*65*64 + 129*64 + 2*65*64 + 65
        let expect = 64 * 4 + 4 * 65 * 64 + 2 * 64 + 4 * 65 * 64 + 129 * 64 + 2 * 65 * 64 + 65;
        assert_eq!(p.param_count(), expect);
        assert_eq!(arch.total_param_count(), expect);
    }

    #[test]
    fn paper_scale_stream_counts_match_reported_input_sizes() {
        let real = InrArchitecture::paper();
        assert_eq!(real.stream_param_count(Stream::Time), 1_051_648);
        let within = |count: usize, reported: f64| (count as f64 / reported - 1.0).abs() < 0.01;
        assert!(within(real.stream_param_count(Stream::Time), 1.05e6));
        assert!(within(real.stream_param_count(Stream::Combined), 1.05e6));
        assert!(within(real.stream_param_count(Stream::Space), 1.05e6));

        let complex = InrArchitecture {
            mode: ActivationMode::ComplexGabor,
            ..InrArchitecture::paper()
        };
        assert!(within(complex.stream_param_count(Stream::Space), 2.10e6));
        let all = complex.stream_param_count(Stream::Space)
            + complex.stream_param_count(Stream::Time)
            + complex.stream_param_count(Stream::Combined);
        assert!(within(all, 4.20e6));
    }

    #[test]
    fn biases_start_at_zero() {
        let p = build_inr(&InrArchitecture::desk(), 2).unwrap();
        for m in p.mats() {
            let bias = &m.data[(m.rows - 1) * m.cols..];
            assert!(bias.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn build_is_deterministic() {
        let a = build_inr(&InrArchitecture::desk(), 7).unwrap();
        let b = build_inr(&InrArchitecture::desk(), 7).unwrap();
        assert_eq!(a, b);
        let c = build_inr(&InrArchitecture::desk(), 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn mismatched_stream_depths_rejected() {
        let arch = InrArchitecture {
            temporal_layers: 4,
            ..InrArchitecture::desk()
        };
        assert!(arch.validate().is_err());
    }

    #[test]
    fn complex_mode_cannot_be_built() {
        let arch = InrArchitecture {
            mode: ActivationMode::ComplexGabor,
            ..InrArchitecture::desk()
        };
        assert!(build_inr(&arch, 1).is_err());
    }
}
