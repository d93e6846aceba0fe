//! Row-wise set encoder with max pooling and the BCE-trained classifier head.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::diffcore::{AdamState, BnMode, Tape, Var};
use crate::error::{Error, Result};
use crate::inr::{InrParams, Mat};
use crate::rng::{rng_for, Prng};
use crate::trajectory::Label;

use super::stack::{stack_stream_params, StreamMatrix, StreamSelection};

/// Encoder/classifier hyper-parameters.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ClassifierConfig {
    /// Widths of the three row-wise blocks; must be strictly increasing.
    pub block_widths: [usize; 3],
    /// Hidden width of the classifier head.
    pub head_hidden: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl ClassifierConfig {
    pub fn desk() -> Self {
        ClassifierConfig {
            block_widths: [128, 256, 512],
            head_hidden: 64,
            dropout: 0.2,
            epochs: 100,
            batch_size: 8,
            learning_rate: 1e-3,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
        }
    }

    pub fn paper() -> Self {
        ClassifierConfig {
            block_widths: [512, 1024, 2048],
            head_hidden: 256,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [a, b, c] = self.block_widths;
        if !(a < b && b < c) {
            return Err(Error::Config(format!(
                "block widths must be strictly increasing, got {a}, {b}, {c}"
            )));
        }
        if self.head_hidden == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "head width, epochs and batch size must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout rate must be in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }
}

/// One row-wise block: augmented affine matrix plus batch-norm parameters
/// and running statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockParams {
    pub mat: Mat,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

/// Shared row map (three affine + BN + ReLU blocks), column max pool, and a
/// two-layer head producing a single logit.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderClassifier {
    pub selection: StreamSelection,
    pub input_cols: usize,
    pub blocks: Vec<BlockParams>,
    pub head1: Mat,
    pub head2: Mat,
    pub dropout: f64,
    pub bn_eps: f64,
}

fn init_mat(in_dim: usize, out_dim: usize, rng: &mut Prng) -> Mat {
    let bound = 1.0 / (in_dim as f64).sqrt();
    let mut m = Mat::zeros(in_dim + 1, out_dim);
    for r in 0..in_dim {
        for c in 0..out_dim {
            m.data[r * out_dim + c] = rng.gen_range(-bound..bound);
        }
    }
    m
}

impl EncoderClassifier {
    /// Fresh model with Uniform(+-1/sqrt(fan_in)) weights, zero biases,
    /// identity batch norm and unit running variance.
    pub fn new(
        input_cols: usize,
        selection: StreamSelection,
        config: &ClassifierConfig,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        selection.validate()?;
        if input_cols == 0 {
            return Err(Error::Config("encoder input width must be positive".into()));
        }
        let mut rng = rng_for(seed, "cls-init", 0);
        let mut blocks = Vec::with_capacity(3);
        let mut in_dim = input_cols;
        for &w in &config.block_widths {
            blocks.push(BlockParams {
                mat: init_mat(in_dim, w, &mut rng),
                gamma: vec![1.0; w],
                beta: vec![0.0; w],
                running_mean: vec![0.0; w],
                running_var: vec![1.0; w],
            });
            in_dim = w;
        }
        let head1 = init_mat(config.block_widths[2], config.head_hidden, &mut rng);
        let head2 = init_mat(config.head_hidden, 1, &mut rng);
        Ok(EncoderClassifier {
            selection,
            input_cols,
            blocks,
            head1,
            head2,
            dropout: config.dropout,
            bn_eps: config.bn_eps,
        })
    }

    /// Block output widths, in order.
    pub fn widths(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.mat.cols).collect()
    }

    pub fn latent_width(&self) -> usize {
        self.blocks.last().map(|b| b.mat.cols).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.widths();
        if w.len() != 3 || !(w[0] < w[1] && w[1] < w[2]) {
            return Err(Error::Config(format!(
                "block widths must be three strictly increasing values, got {w:?}"
            )));
        }
        if self.head2.cols != 1 {
            return Err(Error::Config("classifier head must emit a single logit".into()));
        }
        self.selection.validate()
    }

    fn trainable_mats(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for b in &self.blocks {
            out.push(b.mat.data.as_slice());
            out.push(b.gamma.as_slice());
            out.push(b.beta.as_slice());
        }
        out.push(self.head1.data.as_slice());
        out.push(self.head2.data.as_slice());
        out
    }

    /// Flattened trainable parameters (running BN stats excluded).
    pub fn flatten(&self) -> Vec<f64> {
        self.trainable_mats().concat()
    }

    pub fn trainable_count(&self) -> usize {
        self.trainable_mats().iter().map(|s| s.len()).sum()
    }

    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.trainable_count() {
            return Err(Error::dimension(
                "classifier flat parameters",
                &[flat.len()],
                &[self.trainable_count()],
            ));
        }
        let mut off = 0;
        let mut take = |dst: &mut [f64]| {
            dst.copy_from_slice(&flat[off..off + dst.len()]);
            off += dst.len();
        };
        for b in &mut self.blocks {
            take(&mut b.mat.data);
            take(&mut b.gamma);
            take(&mut b.beta);
        }
        take(&mut self.head1.data);
        take(&mut self.head2.data);
        Ok(())
    }

    /// Inserts trainable parameters as tape inputs; returns them in the same
    /// order as `flatten`.
    fn insert_params(&self, tape: &mut Tape) -> Result<Vec<Var>> {
        let mut vars = Vec::new();
        for b in &self.blocks {
            vars.push(tape.input(vec![b.mat.rows, b.mat.cols], b.mat.data.clone())?);
            vars.push(tape.input(vec![1, b.gamma.len()], b.gamma.clone())?);
            vars.push(tape.input(vec![1, b.beta.len()], b.beta.clone())?);
        }
        vars.push(tape.input(
            vec![self.head1.rows, self.head1.cols],
            self.head1.data.clone(),
        )?);
        vars.push(tape.input(
            vec![self.head2.rows, self.head2.cols],
            self.head2.data.clone(),
        )?);
        Ok(vars)
    }

    /// Taped forward pass: rows through the blocks, per-matrix max pool,
    /// head with optional dropout, one logit per matrix. Returns the logit
    /// var and the BN output vars (for running-stat updates in train mode).
    fn forward_tape(
        &self,
        tape: &mut Tape,
        params: &[Var],
        x: Var,
        segments: &[usize],
        train: bool,
        dropout_rng: Option<&mut Prng>,
    ) -> Result<(Var, Vec<Var>)> {
        let mut h = x;
        let mut bn_vars = Vec::with_capacity(self.blocks.len());
        for (bi, block) in self.blocks.iter().enumerate() {
            let mat = params[bi * 3];
            let gamma = params[bi * 3 + 1];
            let beta = params[bi * 3 + 2];
            h = tape.matmul_aug(mat, h)?;
            let mode = if train {
                BnMode::Train
            } else {
                BnMode::Infer {
                    running_mean: block.running_mean.clone(),
                    running_var: block.running_var.clone(),
                }
            };
            h = tape.batchnorm_rows(h, gamma, beta, &mode, self.bn_eps)?;
            bn_vars.push(h);
            h = tape.relu(h);
        }
        let pooled = tape.segment_maxpool(h, segments)?;
        let head1 = params[self.blocks.len() * 3];
        let head2 = params[self.blocks.len() * 3 + 1];
        let mut z = tape.matmul_aug(head1, pooled)?;
        z = tape.relu(z);
        if let Some(rng) = dropout_rng {
            z = tape.dropout(z, self.dropout, rng);
        }
        let logits = tape.matmul_aug(head2, z)?;
        Ok((logits, bn_vars))
    }
}

/// Fast row map in inference mode: affine, batch norm with running stats,
/// ReLU, repeated over the three blocks.
fn encode_row(model: &EncoderClassifier, row: &[f64], scratch: &mut Vec<f64>) -> Vec<f64> {
    let mut cur = row.to_vec();
    for block in &model.blocks {
        let (in_dim, out) = (block.mat.in_dim(), block.mat.cols);
        scratch.clear();
        scratch.extend_from_slice(&block.mat.data[in_dim * out..(in_dim + 1) * out]);
        for (i, &xi) in cur.iter().enumerate() {
            let wr = &block.mat.data[i * out..(i + 1) * out];
            for (y, &w) in scratch.iter_mut().zip(wr) {
                *y += xi * w;
            }
        }
        for c in 0..out {
            let norm = (scratch[c] - block.running_mean[c])
                / (block.running_var[c] + model.bn_eps).sqrt();
            scratch[c] = (norm * block.gamma[c] + block.beta[c]).max(0.0);
        }
        cur.clear();
        cur.extend_from_slice(scratch);
    }
    cur
}

/// Encodes a stacked matrix to its latent: every row passes through the
/// shared blocks, then a column-wise max over rows. Inference mode (running
/// BN stats, no dropout); exactly invariant to row order.
pub fn encode(model: &EncoderClassifier, matrix: &StreamMatrix) -> Result<Vec<f64>> {
    if matrix.cols != model.input_cols {
        return Err(Error::dimension(
            "encoder input width",
            &[matrix.cols],
            &[model.input_cols],
        ));
    }
    if matrix.rows == 0 {
        return Err(Error::Input("cannot encode an empty matrix".into()));
    }
    let latent_w = model.latent_width();
    let latent = matrix
        .values
        .par_chunks(matrix.cols)
        .map(|row| encode_row(model, row, &mut Vec::new()))
        .reduce(
            || vec![f64::NEG_INFINITY; latent_w],
            |mut acc, enc| {
                for (a, e) in acc.iter_mut().zip(&enc) {
                    *a = a.max(*e);
                }
                acc
            },
        );
    Ok(latent)
}

fn head_logit(model: &EncoderClassifier, latent: &[f64]) -> f64 {
    let (in1, w1) = (model.head1.in_dim(), model.head1.cols);
    let mut h: Vec<f64> = model.head1.data[in1 * w1..(in1 + 1) * w1].to_vec();
    for (i, &xi) in latent.iter().enumerate() {
        let wr = &model.head1.data[i * w1..(i + 1) * w1];
        for (y, &w) in h.iter_mut().zip(wr) {
            *y += xi * w;
        }
    }
    for v in h.iter_mut() {
        *v = v.max(0.0);
    }
    let in2 = model.head2.in_dim();
    let mut z = model.head2.data[in2];
    for (i, &hi) in h.iter().enumerate() {
        z += hi * model.head2.data[i];
    }
    z
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn label_target(label: Label) -> f64 {
    match label {
        Label::Healthy => 0.0,
        Label::AdLike => 1.0,
    }
}

/// Predicts from an already-stacked matrix. Probability is the sigmoid of
/// the logit; a tie at exactly 0.5 resolves to healthy.
pub fn classify_matrix(model: &EncoderClassifier, matrix: &StreamMatrix) -> Result<(f64, Label)> {
    if matrix.selection != model.selection {
        return Err(Error::Input(format!(
            "matrix stacked from {} but model trained on {}",
            matrix.selection.label(),
            model.selection.label()
        )));
    }
    let latent = encode(model, matrix)?;
    let p = sigmoid(head_logit(model, &latent));
    let label = if p > 0.5 { Label::AdLike } else { Label::Healthy };
    Ok((p, label))
}

/// Stacks a subject's INR parameters and classifies the trajectory.
pub fn classify_trajectory(
    model: &EncoderClassifier,
    params: &InrParams,
    subject: impl Into<String>,
) -> Result<(f64, Label)> {
    if params.arch.hidden != model.input_cols {
        return Err(Error::Input(format!(
            "INR hidden width {} does not match encoder input width {}",
            params.arch.hidden, model.input_cols
        )));
    }
    let matrix = stack_stream_params(params, model.selection, subject)?;
    classify_matrix(model, &matrix)
}

/// One epoch of training history.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
}

/// Renders history as `epoch,loss,train_acc` CSV.
pub fn history_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,loss,train_acc\n");
    for h in history {
        out.push_str(&format!("{},{:.6},{:.2}\n", h.epoch, h.loss, h.train_acc));
    }
    out
}

/// Trains the encoder/classifier with mini-batch Adam on BCE-with-logits.
/// Mini-batches are class-balanced by oversampling the minority class each
/// epoch; with a coin-flip label split the constant majority-class predictor
/// is otherwise a strong attractor that plain shuffling rarely escapes.
/// Deterministic given the seed; batch norm uses batch statistics during
/// training and accumulates running stats for inference.
pub fn train_classifier(
    items: &[(&StreamMatrix, Label)],
    config: &ClassifierConfig,
    seed: u64,
) -> Result<(EncoderClassifier, Vec<EpochStats>)> {
    config.validate()?;
    if items.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    let n_pos = items.iter().filter(|(_, l)| *l == Label::AdLike).count();
    if n_pos == 0 || n_pos == items.len() {
        return Err(Error::Input(
            "training set must contain both classes".into(),
        ));
    }
    let cols = items[0].0.cols;
    let selection = items[0].0.selection;
    for (m, _) in items {
        if m.cols != cols || m.selection != selection {
            return Err(Error::Input(
                "all training matrices must share width and stream selection".into(),
            ));
        }
    }

    let mut model = EncoderClassifier::new(cols, selection, config, seed)?;
    let mut flat = model.flatten();
    let mut adam = AdamState::new(flat.len(), config.learning_rate);
    let mut shuffle_rng = rng_for(seed, "cls-shuffle", 0);
    let mut dropout_rng = rng_for(seed, "cls-dropout", 0);
    let mut history = Vec::with_capacity(config.epochs);
    let pos: Vec<usize> = (0..items.len())
        .filter(|&i| items[i].1 == Label::AdLike)
        .collect();
    let neg: Vec<usize> = (0..items.len())
        .filter(|&i| items[i].1 == Label::Healthy)
        .collect();
    let (maj, min) = if pos.len() >= neg.len() {
        (pos, neg)
    } else {
        (neg, pos)
    };

    for epoch in 1..=config.epochs {
        let mut maj_order = maj.clone();
        let mut min_order = min.clone();
        maj_order.shuffle(&mut shuffle_rng);
        min_order.shuffle(&mut shuffle_rng);
        let mut order = Vec::with_capacity(2 * maj_order.len());
        for (k, &i) in maj_order.iter().enumerate() {
            order.push(i);
            order.push(min_order[k % min_order.len()]);
        }
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut tape = Tape::new();
            let params = model.insert_params(&mut tape)?;
            let mut rows = Vec::new();
            let mut segments = Vec::with_capacity(batch.len());
            let mut labels = Vec::with_capacity(batch.len());
            for &i in batch {
                let (m, l) = items[i];
                rows.extend_from_slice(&m.values);
                segments.push(m.rows);
                labels.push(label_target(l));
            }
            let total_rows: usize = segments.iter().sum();
            let x = tape.input(vec![total_rows, cols], rows)?;
            let (logits, bn_vars) =
                model.forward_tape(&mut tape, &params, x, &segments, true, Some(&mut dropout_rng))?;
            let loss = tape.bce_with_logits_mean(logits, &labels)?;
            // Fold batch statistics into the running stats before stepping.
            for (block, &bn) in model.blocks.iter_mut().zip(&bn_vars) {
                if let Some((mean, var)) = tape.bn_batch_stats(bn) {
                    let m = config.bn_momentum;
                    for (r, &b) in block.running_mean.iter_mut().zip(mean) {
                        *r = (1.0 - m) * *r + m * b;
                    }
                    for (r, &b) in block.running_var.iter_mut().zip(var) {
                        *r = (1.0 - m) * *r + m * b;
                    }
                }
            }
            tape.backward(loss)?;
            let mut grads = Vec::with_capacity(flat.len());
            for &p in &params {
                grads.extend_from_slice(tape.grad(p));
            }
            epoch_loss += tape.scalar(loss) * batch.len() as f64;
            adam.step(&mut flat, &grads)?;
            model.load_flat(&flat)?;
        }
        epoch_loss /= order.len() as f64;
        let mut correct = 0usize;
        for (m, l) in items {
            let (_, pred) = classify_matrix(&model, m)?;
            if pred == *l {
                correct += 1;
            }
        }
        history.push(EpochStats {
            epoch,
            loss: epoch_loss,
            train_acc: 100.0 * correct as f64 / items.len() as f64,
        });
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::grad_check;
    use crate::metrics::accuracy;
    use rand::seq::SliceRandom;

    fn tiny_config() -> ClassifierConfig {
        ClassifierConfig {
            block_widths: [6, 8, 10],
            head_hidden: 4,
            dropout: 0.0,
            epochs: 40,
            batch_size: 4,
            learning_rate: 1e-2,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
        }
    }

    fn sel_time() -> StreamSelection {
        StreamSelection::new(false, true, false).unwrap()
    }

    fn random_matrix(seed: u64, rows: usize, cols: usize, shift: f64) -> StreamMatrix {
        let mut rng = rng_for(seed, "cls-test", 0);
        StreamMatrix {
            rows,
            cols,
            values: (0..rows * cols)
                .map(|_| rng.gen_range(-1.0..1.0) + shift)
                .collect(),
            subject: format!("sub-{seed:03}"),
            selection: sel_time(),
        }
    }

    #[test]
    fn config_validation() {
        assert!(ClassifierConfig::desk().validate().is_ok());
        assert!(ClassifierConfig::paper().validate().is_ok());
        let mut bad = ClassifierConfig::desk();
        bad.block_widths = [256, 256, 512];
        assert!(bad.validate().is_err());
    }

    #[test]
    fn latent_is_exactly_permutation_invariant() {
        let model =
            EncoderClassifier::new(5, sel_time(), &tiny_config(), 3).unwrap();
        let m = random_matrix(1, 12, 5, 0.0);
        let base = encode(&model, &m).unwrap();
        let mut rng = rng_for(9, "perm", 0);
        let mut rows: Vec<Vec<f64>> = m.values.chunks(5).map(|r| r.to_vec()).collect();
        for _ in 0..20 {
            rows.shuffle(&mut rng);
            let permuted = StreamMatrix {
                values: rows.concat(),
                ..m.clone()
            };
            assert_eq!(encode(&model, &permuted).unwrap(), base);
        }
    }

    #[test]
    fn duplicated_rows_leave_latent_unchanged() {
        let model = EncoderClassifier::new(5, sel_time(), &tiny_config(), 4).unwrap();
        let m = random_matrix(2, 6, 5, 0.0);
        let base = encode(&model, &m).unwrap();
        let mut dup = m.clone();
        dup.values.extend_from_slice(&m.values[..5]);
        dup.rows += 1;
        assert_eq!(encode(&model, &dup).unwrap(), base);
    }

    #[test]
    fn single_row_latent_is_that_rows_encoding() {
        let model = EncoderClassifier::new(5, sel_time(), &tiny_config(), 5).unwrap();
        let m = random_matrix(3, 1, 5, 0.0);
        let latent = encode(&model, &m).unwrap();
        let row = encode_row(&model, &m.values, &mut Vec::new());
        assert_eq!(latent, row);
    }

    #[test]
    fn width_mismatch_rejected() {
        let model = EncoderClassifier::new(5, sel_time(), &tiny_config(), 6).unwrap();
        let m = random_matrix(4, 3, 7, 0.0);
        assert!(encode(&model, &m).is_err());
    }

    #[test]
    fn training_learns_separable_classes_and_is_deterministic() {
        let mats: Vec<(StreamMatrix, Label)> = (0..12)
            .map(|i| {
                let healthy = i % 2 == 0;
                let shift = if healthy { -0.4 } else { 0.4 };
                (
                    random_matrix(100 + i, 9 + (i as usize % 3), 5, shift),
                    if healthy { Label::Healthy } else { Label::AdLike },
                )
            })
            .collect();
        let items: Vec<(&StreamMatrix, Label)> = mats.iter().map(|(m, l)| (m, *l)).collect();
        let (model, history) = train_classifier(&items, &tiny_config(), 42).unwrap();
        assert!(history.last().unwrap().loss < history[0].loss);
        assert!(history.last().unwrap().train_acc >= 90.0);
        let (model2, history2) = train_classifier(&items, &tiny_config(), 42).unwrap();
        assert_eq!(model, model2);
        assert_eq!(history, history2);
        let csv = history_csv(&history);
        assert!(csv.starts_with("epoch,loss,train_acc\n1,"));

        // Binary accuracy flips exactly under label inversion.
        let preds: Vec<Label> = mats
            .iter()
            .map(|(m, _)| classify_matrix(&model, m).unwrap().1)
            .collect();
        let labels: Vec<Label> = mats.iter().map(|(_, l)| *l).collect();
        let inverted: Vec<Label> = labels
            .iter()
            .map(|l| match l {
                Label::Healthy => Label::AdLike,
                Label::AdLike => Label::Healthy,
            })
            .collect();
        let a = accuracy(&preds, &labels).unwrap();
        let b = accuracy(&preds, &inverted).unwrap();
        assert!((a + b - 100.0).abs() < 1e-12);
    }

    #[test]
    fn single_class_training_rejected() {
        let mats: Vec<(StreamMatrix, Label)> = (0..4)
            .map(|i| (random_matrix(i, 6, 5, 0.0), Label::Healthy))
            .collect();
        let items: Vec<(&StreamMatrix, Label)> = mats.iter().map(|(m, l)| (m, *l)).collect();
        assert!(train_classifier(&items, &tiny_config(), 1).is_err());
    }

    #[test]
    fn classify_probability_in_open_interval_and_deterministic() {
        let model = EncoderClassifier::new(5, sel_time(), &tiny_config(), 8).unwrap();
        let m = random_matrix(5, 7, 5, 0.2);
        let (p1, l1) = classify_matrix(&model, &m).unwrap();
        let (p2, l2) = classify_matrix(&model, &m).unwrap();
        assert!(p1 > 0.0 && p1 < 1.0);
        assert_eq!((p1, l1), (p2, l2));
    }

    #[test]
    fn encoder_head_bce_gradient_matches_finite_differences() {
        let config = tiny_config();
        let sel = sel_time();
        let model = EncoderClassifier::new(3, sel, &config, 11).unwrap();
        let m1 = random_matrix(21, 4, 3, -0.3);
        let m2 = random_matrix(22, 5, 3, 0.3);
        let labels = [0.0, 1.0];
        let segments = [m1.rows, m2.rows];
        let mut rows = m1.values.clone();
        rows.extend_from_slice(&m2.values);

        let loss_at = |flat: &[f64]| -> crate::error::Result<f64> {
            let mut probe = model.clone();
            probe.load_flat(flat)?;
            let mut tape = Tape::new();
            let params = probe.insert_params(&mut tape)?;
            let x = tape.input(vec![segments[0] + segments[1], 3], rows.clone())?;
            let (logits, _) = probe.forward_tape(&mut tape, &params, x, &segments, true, None)?;
            let loss = tape.bce_with_logits_mean(logits, &labels)?;
            Ok(tape.scalar(loss))
        };

        let point = model.flatten();
        let mut tape = Tape::new();
        let params = model.insert_params(&mut tape).unwrap();
        let x = tape
            .input(vec![segments[0] + segments[1], 3], rows.clone())
            .unwrap();
        let (logits, _) = model
            .forward_tape(&mut tape, &params, x, &segments, true, None)
            .unwrap();
        let loss = tape.bce_with_logits_mean(logits, &labels).unwrap();
        tape.backward(loss).unwrap();
        let mut analytic = Vec::with_capacity(point.len());
        for &p in &params {
            analytic.extend_from_slice(tape.grad(p));
        }
        let err = grad_check(loss_at, &analytic, &point, 1e-6).unwrap();
        assert!(err < 1e-5, "worst relative gradient error {err}");
    }
}
