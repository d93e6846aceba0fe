use crate::error::{Error, Result};

use super::tensor::Tensor;

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

/// Activation applied inside a residual layer or after a lift.
#[derive(Copy, Clone, Debug)]
pub enum Activation {
    Relu,
    /// Real Gabor wavelet: cos(omega0*u) * exp(-(s0*u)^2).
    Gabor { omega0: f64, s0: f64 },
}

/// Batch-norm mode: train computes statistics over the rows of the batch,
/// infer uses the running statistics supplied by the caller.
#[derive(Clone, Debug)]
pub enum BnMode {
    Train,
    Infer {
        running_mean: Vec<f64>,
        running_var: Vec<f64>,
    },
}

enum Op {
    Input,
    /// y = x W^T + b with W [out x in], b [out], x [B x in].
    Affine { w: usize, b: usize, x: usize },
    /// y = [x | 1] M with M [(in+1) x out] (bias row last), x [B x in].
    MatmulAug { m: usize, x: usize },
    Relu { x: usize },
    Gabor { x: usize, omega0: f64, s0: f64 },
    Add { a: usize, b: usize },
    ConcatCols { a: usize, b: usize },
    BatchNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        mean: Vec<f64>,
        var: Vec<f64>,
        eps: f64,
        train: bool,
    },
    /// Row gather: output row r is input row idx[r].
    GatherRows { x: usize, idx: Vec<usize> },
    /// Column-wise max over row segments; argmax stores winning row per (segment, col).
    SegmentMaxPool { x: usize, argmax: Vec<usize> },
    Dropout { x: usize, mask: Vec<f64> },
    BceMean { z: usize, labels: Vec<f64> },
    MseLoss { pred: usize, target: usize },
}

struct Node {
    tensor: Tensor,
    op: Op,
}

/// Wengert tape: records primitives during the forward pass and replays them
/// in exact reverse order to accumulate gradients.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn rows_cols(shape: &[usize]) -> (usize, usize) {
    match shape.len() {
        1 => (1, shape[0]),
        2 => (shape[0], shape[1]),
        _ => panic!("tape tensors are at most 2-D"),
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&mut self, shape: Vec<usize>, values: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        self.nodes.push(Node {
            tensor: Tensor {
                shape,
                values,
                grad: None,
            },
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf tensor (parameter or data).
    pub fn input(&mut self, shape: Vec<usize>, values: Vec<f64>) -> Result<Var> {
        let t = Tensor::new(shape, values)?;
        Ok(self.push(t.shape, t.values, Op::Input))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].tensor.shape
    }

    pub fn values(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].tensor.values
    }

    /// Gradient of the last `backward` call; zeros if the var is unreachable.
    pub fn grad(&self, v: Var) -> &[f64] {
        self.nodes[v.0]
            .tensor
            .grad
            .as_deref()
            .expect("backward() has not been run")
    }

    /// Scalar value of a 1-element tensor.
    pub fn scalar(&self, v: Var) -> f64 {
        debug_assert_eq!(self.nodes[v.0].tensor.len(), 1);
        self.nodes[v.0].tensor.values[0]
    }

    // ── primitives ──────────────────────────────────────────────────────

    /// y = x W^T + b with W [out x in], b vector [out], x [B x in] or [in].
    pub fn affine(&mut self, w: Var, b: Var, x: Var) -> Result<Var> {
        let (out_dim, in_dim) = rows_cols(self.shape(w));
        let (b_rows, b_cols) = rows_cols(self.shape(b));
        let (batch, x_cols) = rows_cols(self.shape(x));
        if x_cols != in_dim {
            return Err(Error::dimension("affine W vs x", self.shape(w), self.shape(x)));
        }
        if b_rows * b_cols != out_dim {
            return Err(Error::dimension("affine W vs b", self.shape(w), self.shape(b)));
        }
        let wv = &self.nodes[w.0].tensor.values;
        let bv = &self.nodes[b.0].tensor.values;
        let xv = &self.nodes[x.0].tensor.values;
        let mut y = vec![0.0; batch * out_dim];
        for bi in 0..batch {
            let xr = &xv[bi * in_dim..(bi + 1) * in_dim];
            let yr = &mut y[bi * out_dim..(bi + 1) * out_dim];
            yr.copy_from_slice(bv);
            for (o, yo) in yr.iter_mut().enumerate() {
                let wr = &wv[o * in_dim..(o + 1) * in_dim];
                let mut acc = 0.0;
                for i in 0..in_dim {
                    acc += wr[i] * xr[i];
                }
                *yo += acc;
            }
        }
        Ok(self.push(vec![batch, out_dim], y, Op::Affine { w: w.0, b: b.0, x: x.0 }))
    }

    /// y = [x | 1] M with M [(in+1) x out], bias row last; x [B x in].
    pub fn matmul_aug(&mut self, m: Var, x: Var) -> Result<Var> {
        let (m_rows, out_dim) = rows_cols(self.shape(m));
        let (batch, in_dim) = rows_cols(self.shape(x));
        if m_rows != in_dim + 1 {
            return Err(Error::dimension(
                "matmul_aug M vs x",
                self.shape(m),
                self.shape(x),
            ));
        }
        let mv = &self.nodes[m.0].tensor.values;
        let xv = &self.nodes[x.0].tensor.values;
        let mut y = vec![0.0; batch * out_dim];
        for bi in 0..batch {
            let xr = &xv[bi * in_dim..(bi + 1) * in_dim];
            let yr = &mut y[bi * out_dim..(bi + 1) * out_dim];
            yr.copy_from_slice(&mv[in_dim * out_dim..(in_dim + 1) * out_dim]);
            for (i, &xi) in xr.iter().enumerate() {
                let mr = &mv[i * out_dim..(i + 1) * out_dim];
                for (yo, &mo) in yr.iter_mut().zip(mr) {
                    *yo += xi * mo;
                }
            }
        }
        Ok(self.push(vec![batch, out_dim], y, Op::MatmulAug { m: m.0, x: x.0 }))
    }

    /// Elementwise max(0, u); subgradient at 0 is 0.
    pub fn relu(&mut self, x: Var) -> Var {
        let y: Vec<f64> = self.values(x).iter().map(|&u| u.max(0.0)).collect();
        let shape = self.shape(x).to_vec();
        self.push(shape, y, Op::Relu { x: x.0 })
    }

    /// Real Gabor wavelet activation cos(omega0*u) * exp(-(s0*u)^2).
    pub fn gabor(&mut self, x: Var, omega0: f64, s0: f64) -> Result<Var> {
        if omega0 <= 0.0 || s0 <= 0.0 {
            return Err(Error::Config(format!(
                "gabor requires omega0 > 0 and s0 > 0, got omega0={omega0}, s0={s0}"
            )));
        }
        let y: Vec<f64> = self
            .values(x)
            .iter()
            .map(|&u| (omega0 * u).cos() * (-(s0 * u) * (s0 * u)).exp())
            .collect();
        let shape = self.shape(x).to_vec();
        Ok(self.push(shape, y, Op::Gabor { x: x.0, omega0, s0 }))
    }

    pub fn apply_activation(&mut self, x: Var, act: Activation) -> Result<Var> {
        match act {
            Activation::Relu => Ok(self.relu(x)),
            Activation::Gabor { omega0, s0 } => self.gabor(x, omega0, s0),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dimension("add", self.shape(a), self.shape(b)));
        }
        let y: Vec<f64> = self
            .values(a)
            .iter()
            .zip(self.values(b))
            .map(|(&u, &v)| u + v)
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, y, Op::Add { a: a.0, b: b.0 }))
    }

    /// Residual layer y = act(W y_prev + b) + y_prev; W must be square.
    pub fn residual_layer(&mut self, w: Var, b: Var, y_prev: Var, act: Activation) -> Result<Var> {
        let (out_dim, in_dim) = rows_cols(self.shape(w));
        if out_dim != in_dim {
            return Err(Error::dimension(
                "residual layer requires square W",
                self.shape(w),
                self.shape(w),
            ));
        }
        let pre = self.affine(w, b, y_prev)?;
        let activated = self.apply_activation(pre, act)?;
        self.add(activated, y_prev)
    }

    /// Residual layer in bias-row-augmented form; M must be [(H+1) x H].
    pub fn residual_layer_aug(&mut self, m: Var, y_prev: Var, act: Activation) -> Result<Var> {
        let (m_rows, out_dim) = rows_cols(self.shape(m));
        if m_rows != out_dim + 1 {
            return Err(Error::dimension(
                "residual layer requires square weights (H+1 x H matrix)",
                self.shape(m),
                self.shape(m),
            ));
        }
        let pre = self.matmul_aug(m, y_prev)?;
        let activated = self.apply_activation(pre, act)?;
        self.add(activated, y_prev)
    }

    /// Column-wise concatenation of two matrices with equal row counts.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = rows_cols(self.shape(a));
        let (rb, cb) = rows_cols(self.shape(b));
        if ra != rb {
            return Err(Error::dimension("concat_cols", self.shape(a), self.shape(b)));
        }
        let av = &self.nodes[a.0].tensor.values;
        let bv = &self.nodes[b.0].tensor.values;
        let mut y = Vec::with_capacity(ra * (ca + cb));
        for r in 0..ra {
            y.extend_from_slice(&av[r * ca..(r + 1) * ca]);
            y.extend_from_slice(&bv[r * cb..(r + 1) * cb]);
        }
        Ok(self.push(vec![ra, ca + cb], y, Op::ConcatCols { a: a.0, b: b.0 }))
    }

    /// Row gather: returns a matrix whose row r is row `idx[r]` of `x`.
    /// Rows of `x` may be repeated or dropped; gradients scatter-add back.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let (rx, cx) = rows_cols(self.shape(x));
        if let Some(&bad) = idx.iter().find(|&&i| i >= rx) {
            return Err(Error::Input(format!(
                "gather_rows index {bad} out of range for {rx} rows"
            )));
        }
        let xv = &self.nodes[x.0].tensor.values;
        let mut y = Vec::with_capacity(idx.len() * cx);
        for &i in idx {
            y.extend_from_slice(&xv[i * cx..(i + 1) * cx]);
        }
        Ok(self.push(
            vec![idx.len(), cx],
            y,
            Op::GatherRows {
                x: x.0,
                idx: idx.to_vec(),
            },
        ))
    }

    /// Per-column standardization over the R rows of the batch, then scale/shift.
    ///
    /// Train mode computes batch statistics (requires R >= 2) and the caller can
    /// read them back via [`Tape::bn_batch_stats`] to update running statistics.
    pub fn batchnorm_rows(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mode: &BnMode,
        eps: f64,
    ) -> Result<Var> {
        let (rows, cols) = rows_cols(self.shape(x));
        let (_, gc) = rows_cols(self.shape(gamma));
        let (_, bc) = rows_cols(self.shape(beta));
        if self.nodes[gamma.0].tensor.len() != cols || self.nodes[beta.0].tensor.len() != cols {
            return Err(Error::dimension("batchnorm gamma/beta", &[gc], &[cols.max(bc)]));
        }
        let (mean, var, train) = match mode {
            BnMode::Train => {
                if rows < 2 {
                    return Err(Error::Input(format!(
                        "batch norm in train mode needs at least 2 rows, got {rows}"
                    )));
                }
                let xv = &self.nodes[x.0].tensor.values;
                let mut mean = vec![0.0; cols];
                let mut var = vec![0.0; cols];
                for r in 0..rows {
                    for c in 0..cols {
                        mean[c] += xv[r * cols + c];
                    }
                }
                mean.iter_mut().for_each(|m| *m /= rows as f64);
                for r in 0..rows {
                    for c in 0..cols {
                        let d = xv[r * cols + c] - mean[c];
                        var[c] += d * d;
                    }
                }
                var.iter_mut().for_each(|v| *v /= rows as f64);
                (mean, var, true)
            }
            BnMode::Infer {
                running_mean,
                running_var,
            } => {
                if running_mean.len() != cols || running_var.len() != cols {
                    return Err(Error::dimension(
                        "batchnorm running stats",
                        &[running_mean.len()],
                        &[cols],
                    ));
                }
                (running_mean.clone(), running_var.clone(), false)
            }
        };
        let xv = &self.nodes[x.0].tensor.values;
        let gv = &self.nodes[gamma.0].tensor.values;
        let bv = &self.nodes[beta.0].tensor.values;
        let mut y = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                let xhat = (xv[r * cols + c] - mean[c]) / (var[c] + eps).sqrt();
                y[r * cols + c] = gv[c] * xhat + bv[c];
            }
        }
        Ok(self.push(
            vec![rows, cols],
            y,
            Op::BatchNorm {
                x: x.0,
                gamma: gamma.0,
                beta: beta.0,
                mean,
                var,
                eps,
                train,
            },
        ))
    }

    /// Batch statistics recorded by a train-mode batch norm node.
    pub fn bn_batch_stats(&self, v: Var) -> Option<(&[f64], &[f64])> {
        match &self.nodes[v.0].op {
            Op::BatchNorm {
                mean, var, train, ..
            } if *train => Some((mean, var)),
            _ => None,
        }
    }

    /// Column-wise max over consecutive row segments (`seg_sizes` sums to R).
    /// Ties break to the lowest row index; backward routes to the argmax row.
    pub fn segment_maxpool(&mut self, x: Var, seg_sizes: &[usize]) -> Result<Var> {
        let (rows, cols) = rows_cols(self.shape(x));
        let total: usize = seg_sizes.iter().sum();
        if total != rows || seg_sizes.iter().any(|&s| s == 0) {
            return Err(Error::Input(format!(
                "segment sizes {seg_sizes:?} do not partition {rows} rows"
            )));
        }
        let xv = &self.nodes[x.0].tensor.values;
        let n_seg = seg_sizes.len();
        let mut y = vec![0.0; n_seg * cols];
        let mut argmax = vec![0usize; n_seg * cols];
        let mut row0 = 0;
        for (s, &size) in seg_sizes.iter().enumerate() {
            for c in 0..cols {
                let mut best = xv[row0 * cols + c];
                let mut best_r = row0;
                for r in row0 + 1..row0 + size {
                    let v = xv[r * cols + c];
                    if v > best {
                        best = v;
                        best_r = r;
                    }
                }
                y[s * cols + c] = best;
                argmax[s * cols + c] = best_r;
            }
            row0 += size;
        }
        Ok(self.push(vec![n_seg, cols], y, Op::SegmentMaxPool { x: x.0, argmax }))
    }

    /// Column maximum of a non-empty matrix, as a [1 x F] row.
    pub fn maxpool_columns(&mut self, x: Var) -> Result<Var> {
        let (rows, _) = rows_cols(self.shape(x));
        if rows == 0 || self.nodes[x.0].tensor.is_empty() {
            return Err(Error::Input("maxpool_columns on empty matrix".into()));
        }
        self.segment_maxpool(x, &[rows])
    }

    /// Inverted dropout with the given keep mask already scaled by 1/(1-p).
    pub fn dropout(&mut self, x: Var, rate: f64, rng: &mut impl rand::Rng) -> Var {
        let keep = 1.0 - rate;
        let mask: Vec<f64> = self
            .values(x)
            .iter()
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let y: Vec<f64> = self
            .values(x)
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| v * m)
            .collect();
        let shape = self.shape(x).to_vec();
        self.push(shape, y, Op::Dropout { x: x.0, mask })
    }

    /// Numerically stable mean binary cross-entropy over logits.
    pub fn bce_with_logits_mean(&mut self, z: Var, labels: &[f64]) -> Result<Var> {
        let zv = &self.nodes[z.0].tensor.values;
        if zv.len() != labels.len() {
            return Err(Error::dimension(
                "bce logits vs labels",
                self.shape(z),
                &[labels.len()],
            ));
        }
        let n = zv.len() as f64;
        let loss = zv
            .iter()
            .zip(labels)
            .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
            .sum::<f64>()
            / n;
        Ok(self.push(
            vec![1, 1],
            vec![loss],
            Op::BceMean {
                z: z.0,
                labels: labels.to_vec(),
            },
        ))
    }

    /// Mean of squared differences over all entries.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        if self.shape(pred) != self.shape(target) {
            return Err(Error::dimension(
                "mse_loss",
                self.shape(pred),
                self.shape(target),
            ));
        }
        let pv = &self.nodes[pred.0].tensor.values;
        let tv = &self.nodes[target.0].tensor.values;
        let n = pv.len() as f64;
        let loss = pv
            .iter()
            .zip(tv)
            .map(|(&p, &t)| (p - t) * (p - t))
            .sum::<f64>()
            / n;
        Ok(self.push(
            vec![1, 1],
            vec![loss],
            Op::MseLoss {
                pred: pred.0,
                target: target.0,
            },
        ))
    }

    // ── backward ────────────────────────────────────────────────────────

    /// Reverse pass from a scalar loss. Visits every node recorded up to the
    /// loss exactly once, in reverse order of recording.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].tensor.len() != 1 {
            return Err(Error::Input("backward requires a scalar loss".into()));
        }
        if !self.nodes[loss.0].tensor.values[0].is_finite() {
            return Err(Error::Numeric("non-finite loss in backward".into()));
        }
        for node in &mut self.nodes {
            node.tensor.reset_grad();
        }
        self.nodes[loss.0].tensor.grad.as_mut().unwrap()[0] = 1.0;

        for idx in (0..=loss.0).rev() {
            // Take the output grad out to satisfy the borrow checker.
            let g = self.nodes[idx].tensor.grad.take().unwrap();
            self.accumulate(idx, &g);
            self.nodes[idx].tensor.grad = Some(g);
        }
        Ok(())
    }

    fn grad_mut(&mut self, idx: usize) -> &mut [f64] {
        self.nodes[idx].tensor.grad.as_mut().unwrap()
    }

    fn accumulate(&mut self, idx: usize, g: &[f64]) {
        // Ops do not alias their output, so splitting borrows by index is safe.
        match &self.nodes[idx].op {
            Op::Input => {}
            &Op::Affine { w, b, x } => {
                let (out_dim, in_dim) = rows_cols(&self.nodes[w].tensor.shape);
                let batch = self.nodes[x].tensor.len() / in_dim;
                let xv = self.nodes[x].tensor.values.clone();
                let wv = self.nodes[w].tensor.values.clone();
                {
                    let dw = self.grad_mut(w);
                    for bi in 0..batch {
                        for o in 0..out_dim {
                            let go = g[bi * out_dim + o];
                            if go == 0.0 {
                                continue;
                            }
                            for i in 0..in_dim {
                                dw[o * in_dim + i] += go * xv[bi * in_dim + i];
                            }
                        }
                    }
                }
                {
                    let db = self.grad_mut(b);
                    for bi in 0..batch {
                        for o in 0..out_dim {
                            db[o] += g[bi * out_dim + o];
                        }
                    }
                }
                {
                    let dx = self.grad_mut(x);
                    for bi in 0..batch {
                        for o in 0..out_dim {
                            let go = g[bi * out_dim + o];
                            if go == 0.0 {
                                continue;
                            }
                            for i in 0..in_dim {
                                dx[bi * in_dim + i] += go * wv[o * in_dim + i];
                            }
                        }
                    }
                }
            }
            &Op::MatmulAug { m, x } => {
                let (m_rows, out_dim) = rows_cols(&self.nodes[m].tensor.shape);
                let in_dim = m_rows - 1;
                let batch = self.nodes[x].tensor.len() / in_dim;
                let xv = self.nodes[x].tensor.values.clone();
                let mv = self.nodes[m].tensor.values.clone();
                {
                    let dm = self.grad_mut(m);
                    for bi in 0..batch {
                        let gr = &g[bi * out_dim..(bi + 1) * out_dim];
                        for i in 0..in_dim {
                            let xi = xv[bi * in_dim + i];
                            if xi == 0.0 {
                                continue;
                            }
                            let dr = &mut dm[i * out_dim..(i + 1) * out_dim];
                            for (d, &go) in dr.iter_mut().zip(gr) {
                                *d += xi * go;
                            }
                        }
                        let dr = &mut dm[in_dim * out_dim..(in_dim + 1) * out_dim];
                        for (d, &go) in dr.iter_mut().zip(gr) {
                            *d += go;
                        }
                    }
                }
                {
                    let dx = self.grad_mut(x);
                    for bi in 0..batch {
                        let gr = &g[bi * out_dim..(bi + 1) * out_dim];
                        for i in 0..in_dim {
                            let mr = &mv[i * out_dim..(i + 1) * out_dim];
                            let mut acc = 0.0;
                            for (mo, &go) in mr.iter().zip(gr) {
                                acc += mo * go;
                            }
                            dx[bi * in_dim + i] += acc;
                        }
                    }
                }
            }
            &Op::Relu { x } => {
                let xv = self.nodes[x].tensor.values.clone();
                let dx = self.grad_mut(x);
                for (i, &u) in xv.iter().enumerate() {
                    if u > 0.0 {
                        dx[i] += g[i];
                    }
                }
            }
            &Op::Gabor { x, omega0, s0 } => {
                let xv = self.nodes[x].tensor.values.clone();
                let dx = self.grad_mut(x);
                for (i, &u) in xv.iter().enumerate() {
                    let env = (-(s0 * u) * (s0 * u)).exp();
                    let d = env * (-omega0 * (omega0 * u).sin() - 2.0 * s0 * s0 * u * (omega0 * u).cos());
                    dx[i] += g[i] * d;
                }
            }
            &Op::Add { a, b } => {
                for (d, &go) in self.grad_mut(a).iter_mut().zip(g) {
                    *d += go;
                }
                for (d, &go) in self.grad_mut(b).iter_mut().zip(g) {
                    *d += go;
                }
            }
            &Op::ConcatCols { a, b } => {
                let (ra, ca) = rows_cols(&self.nodes[a].tensor.shape);
                let (_, cb) = rows_cols(&self.nodes[b].tensor.shape);
                let cols = ca + cb;
                {
                    let da = self.grad_mut(a);
                    for r in 0..ra {
                        for c in 0..ca {
                            da[r * ca + c] += g[r * cols + c];
                        }
                    }
                }
                {
                    let db = self.grad_mut(b);
                    for r in 0..ra {
                        for c in 0..cb {
                            db[r * cb + c] += g[r * cols + ca + c];
                        }
                    }
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                mean,
                var,
                eps,
                train,
            } => {
                let (x, gamma, beta, eps, train) = (*x, *gamma, *beta, *eps, *train);
                let mean = mean.clone();
                let var = var.clone();
                let (rows, cols) = rows_cols(&self.nodes[x].tensor.shape);
                let xv = self.nodes[x].tensor.values.clone();
                let gv = self.nodes[gamma].tensor.values.clone();
                let mut xhat = vec![0.0; rows * cols];
                for r in 0..rows {
                    for c in 0..cols {
                        xhat[r * cols + c] =
                            (xv[r * cols + c] - mean[c]) / (var[c] + eps).sqrt();
                    }
                }
                {
                    let dbeta = self.grad_mut(beta);
                    for r in 0..rows {
                        for c in 0..cols {
                            dbeta[c] += g[r * cols + c];
                        }
                    }
                }
                {
                    let dgamma = self.grad_mut(gamma);
                    for r in 0..rows {
                        for c in 0..cols {
                            dgamma[c] += g[r * cols + c] * xhat[r * cols + c];
                        }
                    }
                }
                let dx = self.grad_mut(x);
                if train {
                    // Statistics are functions of x.
                    let rf = rows as f64;
                    for c in 0..cols {
                        let inv_std = 1.0 / (var[c] + eps).sqrt();
                        let mut sum_g = 0.0;
                        let mut sum_gx = 0.0;
                        for r in 0..rows {
                            sum_g += g[r * cols + c];
                            sum_gx += g[r * cols + c] * xhat[r * cols + c];
                        }
                        for r in 0..rows {
                            dx[r * cols + c] += gv[c] * inv_std
                                * (g[r * cols + c] - sum_g / rf
                                    - xhat[r * cols + c] * sum_gx / rf);
                        }
                    }
                } else {
                    for c in 0..cols {
                        let inv_std = 1.0 / (var[c] + eps).sqrt();
                        for r in 0..rows {
                            dx[r * cols + c] += g[r * cols + c] * gv[c] * inv_std;
                        }
                    }
                }
            }
            Op::GatherRows { x, idx } => {
                let (x, idx) = (*x, idx.clone());
                let (_, cols) = rows_cols(&self.nodes[x].tensor.shape);
                let dx = self.grad_mut(x);
                for (r, &i) in idx.iter().enumerate() {
                    for c in 0..cols {
                        dx[i * cols + c] += g[r * cols + c];
                    }
                }
            }
            Op::SegmentMaxPool { x, argmax } => {
                let (x, argmax) = (*x, argmax.clone());
                let (_, cols) = rows_cols(&self.nodes[x].tensor.shape);
                let dx = self.grad_mut(x);
                for (sc, &row) in argmax.iter().enumerate() {
                    let c = sc % cols;
                    dx[row * cols + c] += g[sc];
                }
            }
            Op::Dropout { x, mask } => {
                let (x, mask) = (*x, mask.clone());
                let dx = self.grad_mut(x);
                for (i, &m) in mask.iter().enumerate() {
                    dx[i] += g[i] * m;
                }
            }
            Op::BceMean { z, labels } => {
                let (z, labels) = (*z, labels.clone());
                let zv = self.nodes[z].tensor.values.clone();
                let n = zv.len() as f64;
                let dz = self.grad_mut(z);
                for (i, (&zi, &yi)) in zv.iter().zip(&labels).enumerate() {
                    let sig = 1.0 / (1.0 + (-zi).exp());
                    dz[i] += g[0] * (sig - yi) / n;
                }
            }
            &Op::MseLoss { pred, target } => {
                let pv = self.nodes[pred].tensor.values.clone();
                let tv = self.nodes[target].tensor.values.clone();
                let n = pv.len() as f64;
                {
                    let dp = self.grad_mut(pred);
                    for i in 0..pv.len() {
                        dp[i] += g[0] * 2.0 * (pv[i] - tv[i]) / n;
                    }
                }
                {
                    let dt = self.grad_mut(target);
                    for i in 0..pv.len() {
                        dt[i] -= g[0] * 2.0 * (pv[i] - tv[i]) / n;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_identity_and_hand_case() {
        let mut t = Tape::new();
        let w = t.input(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = t.input(vec![2], vec![0.0, 0.0]).unwrap();
        let x = t.input(vec![1, 2], vec![3.0, 4.0]).unwrap();
        let y = t.affine(w, b, x).unwrap();
        assert_eq!(t.values(y), &[3.0, 4.0]);

        let w2 = t.input(vec![2, 2], vec![1.0, 2.0, 0.0, 1.0]).unwrap();
        let b2 = t.input(vec![2], vec![1.0, 0.0]).unwrap();
        let x2 = t.input(vec![1, 2], vec![1.0, 1.0]).unwrap();
        let y2 = t.affine(w2, b2, x2).unwrap();
        assert_eq!(t.values(y2), &[4.0, 1.0]);
    }

    #[test]
    fn affine_shape_mismatch_names_both_shapes() {
        let mut t = Tape::new();
        let w = t.input(vec![2, 3], vec![0.0; 6]).unwrap();
        let b = t.input(vec![2], vec![0.0; 2]).unwrap();
        let x = t.input(vec![1, 2], vec![0.0; 2]).unwrap();
        let err = t.affine(w, b, x).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[1, 2]"), "{msg}");
    }

    #[test]
    fn relu_values_and_gradient() {
        let mut t = Tape::new();
        let x = t.input(vec![1, 3], vec![-3.0, 0.0, 2.0]).unwrap();
        let y = t.relu(x);
        assert_eq!(t.values(y), &[0.0, 0.0, 2.0]);

        // gradient at u=-1 is 0, at u=1 is 1
        let mut t = Tape::new();
        let x = t.input(vec![1, 2], vec![-1.0, 1.0]).unwrap();
        let y = t.relu(x);
        let target = t.input(vec![1, 2], vec![0.0, 0.0]).unwrap();
        let l = t.mse_loss(y, target).unwrap();
        t.backward(l).unwrap();
        assert_eq!(t.grad(x)[0], 0.0);
        assert!((t.grad(x)[1] - 1.0).abs() < 1e-12); // dL/dy = 2*1/2 = 1
    }

    #[test]
    fn gabor_values() {
        let mut t = Tape::new();
        let x = t.input(vec![1, 1], vec![0.0]).unwrap();
        let y = t.gabor(x, 20.0, 10.0).unwrap();
        assert_eq!(t.values(y), &[1.0]);

        // omega0=20, s0=10, u=0.1 -> cos(2)/e
        let mut t = Tape::new();
        let x = t.input(vec![1, 1], vec![0.1]).unwrap();
        let y = t.gabor(x, 20.0, 10.0).unwrap();
        let expect = (2.0f64).cos() * (-1.0f64).exp();
        assert!((t.values(y)[0] - expect).abs() < 1e-12);
        assert!((t.values(y)[0] - (-0.153_091_865_674_226_3)).abs() < 1e-12);
    }

    #[test]
    fn gabor_envelope_bound() {
        let mut t = Tape::new();
        let us: Vec<f64> = (-50..=50).map(|i| i as f64 * 0.1).collect();
        let x = t.input(vec![1, us.len()], us.clone()).unwrap();
        let y = t.gabor(x, 20.0, 1.5).unwrap();
        for (v, u) in t.values(y).iter().zip(&us) {
            assert!(v.abs() <= (-(1.5 * u) * (1.5 * u)).exp() + 1e-15);
        }
    }

    #[test]
    fn gabor_rejects_bad_config() {
        let mut t = Tape::new();
        let x = t.input(vec![1, 1], vec![0.0]).unwrap();
        assert!(matches!(t.gabor(x, 0.0, 1.0), Err(Error::Config(_))));
        assert!(matches!(t.gabor(x, 1.0, -1.0), Err(Error::Config(_))));
    }

    #[test]
    fn residual_layer_zero_weights() {
        // ReLU: output equals y_prev exactly. Gabor: y_prev + 1 elementwise.
        let mut t = Tape::new();
        let w = t.input(vec![3, 3], vec![0.0; 9]).unwrap();
        let b = t.input(vec![3], vec![0.0; 3]).unwrap();
        let y_prev = t.input(vec![1, 3], vec![0.3, -0.2, 0.9]).unwrap();
        let y = t.residual_layer(w, b, y_prev, Activation::Relu).unwrap();
        assert_eq!(t.values(y), t.values(y_prev));
        let y = t
            .residual_layer(w, b, y_prev, Activation::Gabor { omega0: 20.0, s0: 10.0 })
            .unwrap();
        for (out, inp) in t.values(y).iter().zip(&[0.3, -0.2, 0.9]) {
            assert!((out - (inp + 1.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn residual_layer_rejects_non_square() {
        let mut t = Tape::new();
        let w = t.input(vec![2, 3], vec![0.0; 6]).unwrap();
        let b = t.input(vec![2], vec![0.0; 2]).unwrap();
        let y_prev = t.input(vec![1, 3], vec![0.0; 3]).unwrap();
        assert!(t.residual_layer(w, b, y_prev, Activation::Relu).is_err());
    }

    #[test]
    fn batchnorm_hand_cases() {
        // constant column -> all zeros (variance floor)
        let mut t = Tape::new();
        let x = t.input(vec![3, 1], vec![5.0, 5.0, 5.0]).unwrap();
        let g = t.input(vec![1], vec![1.0]).unwrap();
        let b = t.input(vec![1], vec![0.0]).unwrap();
        let y = t.batchnorm_rows(x, g, b, &BnMode::Train, 1e-8).unwrap();
        for v in t.values(y) {
            assert_eq!(*v, 0.0);
        }

        // column (0,2) -> (-1,1) as eps -> 0
        let mut t = Tape::new();
        let x = t.input(vec![2, 1], vec![0.0, 2.0]).unwrap();
        let g = t.input(vec![1], vec![1.0]).unwrap();
        let b = t.input(vec![1], vec![0.0]).unwrap();
        let y = t.batchnorm_rows(x, g, b, &BnMode::Train, 1e-14).unwrap();
        assert!((t.values(y)[0] + 1.0).abs() < 1e-6);
        assert!((t.values(y)[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn batchnorm_needs_two_rows_in_train() {
        let mut t = Tape::new();
        let x = t.input(vec![1, 2], vec![0.0, 1.0]).unwrap();
        let g = t.input(vec![2], vec![1.0, 1.0]).unwrap();
        let b = t.input(vec![2], vec![0.0, 0.0]).unwrap();
        assert!(t.batchnorm_rows(x, g, b, &BnMode::Train, 1e-8).is_err());
    }

    #[test]
    fn maxpool_hand_cases() {
        let mut t = Tape::new();
        let x = t.input(vec![2, 2], vec![1.0, 5.0, 3.0, 2.0]).unwrap();
        let y = t.maxpool_columns(x).unwrap();
        assert_eq!(t.values(y), &[3.0, 5.0]);

        let single = t.input(vec![1, 3], vec![0.5, -1.0, 2.0]).unwrap();
        let y = t.maxpool_columns(single).unwrap();
        assert_eq!(t.values(y), &[0.5, -1.0, 2.0]);
    }

    #[test]
    fn maxpool_rejects_empty() {
        let mut t = Tape::new();
        let x = t.input(vec![0, 3], vec![]).unwrap();
        assert!(t.maxpool_columns(x).is_err());
    }

    #[test]
    fn bce_hand_cases() {
        let mut t = Tape::new();
        let z = t.input(vec![1, 1], vec![0.0]).unwrap();
        let l = t.bce_with_logits_mean(z, &[1.0]).unwrap();
        assert!((t.scalar(l) - std::f64::consts::LN_2).abs() < 1e-12);

        let z = t.input(vec![1, 1], vec![40.0]).unwrap();
        let l = t.bce_with_logits_mean(z, &[1.0]).unwrap();
        assert!(t.scalar(l) < 1e-15 && t.scalar(l).is_finite());

        // saturation the other way must not overflow either
        let z = t.input(vec![1, 1], vec![-700.0]).unwrap();
        let l = t.bce_with_logits_mean(z, &[0.0]).unwrap();
        assert!(t.scalar(l).is_finite());
    }

    #[test]
    fn mse_hand_cases() {
        let mut t = Tape::new();
        let a = t.input(vec![1, 2], vec![0.3, 0.7]).unwrap();
        let l = t.mse_loss(a, a).unwrap();
        assert_eq!(t.scalar(l), 0.0);

        let p = t.input(vec![1, 2], vec![0.0, 0.0]).unwrap();
        let q = t.input(vec![1, 2], vec![1.0, 1.0]).unwrap();
        let l = t.mse_loss(p, q).unwrap();
        assert_eq!(t.scalar(l), 1.0);

        let bad = t.input(vec![1, 3], vec![0.0; 3]).unwrap();
        assert!(t.mse_loss(p, bad).is_err());
    }
}
