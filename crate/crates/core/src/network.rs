//! Greedy training of the full network, greedy encoding of new samples,
//! argmax classification and the binary model format.

use std::fs;
use std::io::{self, Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use log::{debug, warn};

use crate::activations::{Activation, ActivationKind};
use crate::error::{Error, Result};
use crate::layers::{
    self, encode_dense_batch, encode_robust_batch, encode_sparse_batch, FinalTrainConfig, Layer,
    RobustTrainConfig,
};
use crate::solvers::{IrlsConfig, IstaConfig};
use crate::{all_finite, Mat, Vector};

pub const MODEL_MAGIC: &[u8; 6] = b"DRDDL1";

/// Per-feature affine map `(x - offset) * scale` applied before the first
/// layer.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureScaling {
    pub offset: Vector,
    pub scale: Vector,
}

impl FeatureScaling {
    pub fn identity(dim: usize) -> Self {
        FeatureScaling {
            offset: Vector::zeros(dim),
            scale: Vector::from_element(dim, 1.0),
        }
    }

    /// Min-max scaling of every row of `x` onto `[0, 1]`. Constant features
    /// are shifted to zero and left unscaled.
    pub fn fit_min_max(x: &Mat) -> Self {
        let dim = x.nrows();
        let mut offset = Vector::zeros(dim);
        let mut scale = Vector::from_element(dim, 1.0);
        for (i, row) in x.row_iter().enumerate() {
            let lo = row.min();
            let hi = row.max();
            offset[i] = lo;
            if hi > lo {
                scale[i] = 1.0 / (hi - lo);
            }
        }
        FeatureScaling { offset, scale }
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn apply(&self, x: &Mat) -> Mat {
        let mut out = x.clone();
        for mut col in out.column_iter_mut() {
            for i in 0..col.len() {
                col[i] = (col[i] - self.offset[i]) * self.scale[i];
            }
        }
        out
    }

    /// Inverse map, for generating raw-space samples from scaled ones.
    pub fn unapply(&self, x: &Mat) -> Mat {
        let mut out = x.clone();
        for mut col in out.column_iter_mut() {
            for i in 0..col.len() {
                col[i] = col[i] / self.scale[i] + self.offset[i];
            }
        }
        out
    }
}

/// Hyperparameters of a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSpec {
    /// Layer widths from the data side inwards, e.g. `[150, 100, 30]`.
    pub arch: Vec<usize>,
    pub lambda: f64,
    pub mu_cls: f64,
    pub activation: ActivationKind,
    pub robust: RobustTrainConfig,
    pub dense_iters: usize,
    pub final_iters: usize,
    pub ista: IstaConfig,
    pub seed: u64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        TrainSpec {
            arch: vec![150, 100, 30],
            lambda: 0.2,
            mu_cls: 1.0,
            activation: ActivationKind::Tanh,
            robust: RobustTrainConfig::default(),
            dense_iters: 30,
            final_iters: 30,
            ista: IstaConfig::default(),
            seed: 0,
        }
    }
}

/// Solver budgets for encoding new samples.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EncodeConfig {
    pub irls: IrlsConfig,
    /// `lambda` is taken from the model, not from here.
    pub ista: IstaConfig,
}

/// A trained network.
#[derive(Clone, Debug, PartialEq)]
pub struct DrddlModel {
    pub layers: Vec<Layer>,
    /// `C x k_N` map from final-layer codes to class scores.
    pub classifier: Mat,
    pub lambda: f64,
    pub mu_cls: f64,
    pub activation: Activation,
    pub num_classes: usize,
    pub input_dim: usize,
    pub scaling: FeatureScaling,
}

/// Diagnostics for one trained layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerSummary {
    pub width: usize,
    pub iterations: usize,
    pub converged: bool,
    pub final_objective: f64,
    /// Entries clamped by the inverse activation when forming this layer's
    /// input.
    pub clamped_inputs: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub layers: Vec<LayerSummary>,
}

impl DrddlModel {
    /// Assembles a model and checks the dimension chain.
    pub fn new(
        layers: Vec<Layer>,
        classifier: Mat,
        lambda: f64,
        mu_cls: f64,
        activation: Activation,
        scaling: FeatureScaling,
    ) -> Result<Self> {
        let input_dim = layers.first().map(|l| l.in_dim()).unwrap_or(0);
        let model = DrddlModel {
            num_classes: classifier.nrows(),
            layers,
            classifier,
            lambda,
            mu_cls,
            activation,
            input_dim,
            scaling,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::format("model has no layers"));
        }
        if self.layers[0].in_dim() != self.input_dim {
            return Err(Error::format(format!(
                "layer 1 expects {} inputs, model declares {}",
                self.layers[0].in_dim(),
                self.input_dim
            )));
        }
        if self.scaling.dim() != self.input_dim {
            return Err(Error::format("feature scaling does not match input dimension"));
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::format(format!(
                    "layer {} expects {} inputs but layer {} produces {}",
                    i + 2,
                    pair[1].in_dim(),
                    i + 1,
                    pair[0].out_dim()
                )));
            }
        }
        for (i, layer) in self.layers.iter().enumerate() {
            layer.validate().map_err(|e| e.in_layer(i + 1))?;
        }
        if self.layers[0].activation.kind != ActivationKind::Identity {
            return Err(Error::format("the first layer must use the identity activation"));
        }
        let last = self.layers.last().unwrap().out_dim();
        if self.classifier.ncols() != last || self.classifier.nrows() != self.num_classes {
            return Err(Error::format(format!(
                "classifier is {}x{}, expected {}x{last}",
                self.classifier.nrows(),
                self.classifier.ncols(),
                self.num_classes
            )));
        }
        if self.num_classes == 0 {
            return Err(Error::format("model has no classes"));
        }
        if !all_finite(&self.classifier) {
            return Err(Error::numerical("classifier has non-finite entries"));
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn code_dim(&self) -> usize {
        self.layers.last().map(|l| l.out_dim()).unwrap_or(0)
    }

    pub fn arch(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.out_dim()).collect()
    }
}

/// One-hot `C x n` targets from 1-based labels.
pub fn one_hot(labels: &[usize], classes: usize) -> Result<Mat> {
    let mut t = Mat::zeros(classes, labels.len());
    for (j, &c) in labels.iter().enumerate() {
        if c == 0 || c > classes {
            return Err(Error::degenerate(format!("label {c} outside 1..={classes}")));
        }
        t[(c - 1, j)] = 1.0;
    }
    Ok(t)
}

fn layer_seed(seed: u64, layer: usize) -> u64 {
    seed.wrapping_add((layer as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Greedy layer-wise training. See [`train_with_report`].
pub fn train(x: &Mat, labels: &[usize], spec: &TrainSpec) -> Result<DrddlModel> {
    train_with_report(x, labels, spec).map(|(m, _)| m)
}

/// Greedy layer-wise training.
///
/// Inputs are min-max scaled per feature. Layer 1 is the robust l1 layer,
/// layers `2..N-1` are dense, and layer `N` is the sparse discriminative
/// layer that also yields the classifier. Each layer after the first is
/// trained on the inverse activation of the previous layer's codes. A
/// single-layer network trains the final layer directly on the data.
pub fn train_with_report(
    x: &Mat,
    labels: &[usize],
    spec: &TrainSpec,
) -> Result<(DrddlModel, TrainReport)> {
    let n = x.ncols();
    if n < 2 {
        return Err(Error::degenerate("need at least two training samples"));
    }
    if labels.len() != n {
        return Err(Error::degenerate(format!(
            "{} labels for {n} samples",
            labels.len()
        )));
    }
    if spec.arch.is_empty() || spec.arch.contains(&0) {
        return Err(Error::degenerate("architecture needs at least one nonzero width"));
    }
    if !all_finite(x) {
        return Err(Error::numerical("training data has non-finite entries"));
    }
    if x.iter().all(|&v| v == 0.0) {
        return Err(Error::degenerate("training data is all zero"));
    }
    let classes = labels.iter().copied().max().unwrap_or(0);
    if classes == 0 || labels.contains(&0) {
        return Err(Error::degenerate("labels must be 1-based class ids"));
    }
    let targets = one_hot(labels, classes)?;
    if let Some(c) = (0..classes).find(|&c| targets.row(c).iter().all(|&v| v == 0.0)) {
        return Err(Error::degenerate(format!("class {} has no training samples", c + 1)));
    }

    let activation = Activation::new(spec.activation);
    let scaling = FeatureScaling::fit_min_max(x);
    let scaled = scaling.apply(x);
    let depth = spec.arch.len();
    let final_cfg = FinalTrainConfig {
        lambda: spec.lambda,
        mu_cls: spec.mu_cls,
        iters: spec.final_iters,
        ista: spec.ista,
    };
    let mut report = TrainReport::default();

    if depth == 1 {
        let fit = layers::train_final_layer(
            &scaled,
            spec.arch[0],
            &targets,
            &final_cfg,
            Activation::identity(),
            layer_seed(spec.seed, 1),
        )
        .map_err(|e| e.in_layer(1))?;
        report.layers.push(LayerSummary {
            width: spec.arch[0],
            iterations: fit.rounds,
            converged: true,
            final_objective: *fit.block_trace.last().unwrap(),
            clamped_inputs: 0,
        });
        let model = DrddlModel::new(
            vec![fit.layer],
            fit.classifier,
            spec.lambda,
            spec.mu_cls,
            activation,
            scaling,
        )?;
        return Ok((model, report));
    }

    let mut stack = Vec::with_capacity(depth);
    let first = layers::train_robust_layer(&scaled, spec.arch[0], &spec.robust, layer_seed(spec.seed, 1))
        .map_err(|e| e.in_layer(1))?;
    debug!(
        "layer 1: {} Bregman rounds, split residual {:.3e}",
        first.report.iterations, first.primal_residual
    );
    report.layers.push(LayerSummary {
        width: spec.arch[0],
        iterations: first.report.iterations,
        converged: first.report.converged,
        final_objective: first.report.final_objective(),
        clamped_inputs: 0,
    });
    stack.push(first.layer);
    let mut codes = first.codes;

    for (i, &width) in spec.arch.iter().enumerate().skip(1) {
        let index = i + 1;
        let (input, clamped) = activation.apply_inverse(&codes);
        if clamped > 0 {
            warn!("layer {index}: inverse activation clamped {clamped} entries");
        }
        let seed = layer_seed(spec.seed, index);
        if index < depth {
            let fit = layers::train_dense_layer(&input, width, spec.dense_iters, activation, seed)
                .map_err(|e| e.in_layer(index))?;
            report.layers.push(LayerSummary {
                width,
                iterations: fit.report.iterations,
                converged: fit.report.converged,
                final_objective: fit.report.final_objective(),
                clamped_inputs: clamped,
            });
            stack.push(fit.layer);
            codes = fit.codes;
        } else {
            let fit = layers::train_final_layer(&input, width, &targets, &final_cfg, activation, seed)
                .map_err(|e| e.in_layer(index))?;
            report.layers.push(LayerSummary {
                width,
                iterations: fit.rounds,
                converged: true,
                final_objective: *fit.block_trace.last().unwrap(),
                clamped_inputs: clamped,
            });
            stack.push(fit.layer);
            let model = DrddlModel::new(
                stack,
                fit.classifier,
                spec.lambda,
                spec.mu_cls,
                activation,
                scaling,
            )?;
            return Ok((model, report));
        }
    }
    unreachable!("the loop returns at the final layer")
}

/// Greedy encoding of the columns of `x` (raw feature space).
pub fn encode_batch(model: &DrddlModel, x: &Mat, cfg: &EncodeConfig) -> Result<Mat> {
    if x.nrows() != model.input_dim {
        return Err(Error::format(format!(
            "samples have {} features, model expects {}",
            x.nrows(),
            model.input_dim
        )));
    }
    let scaled = model.scaling.apply(x);
    let depth = model.depth();
    if depth == 1 {
        return encode_sparse_batch(&model.layers[0], &scaled, model.lambda, &cfg.ista)
            .map_err(|e| e.in_layer(1));
    }
    let mut codes = encode_robust_batch(&model.layers[0], &scaled, &cfg.irls).map_err(|e| e.in_layer(1))?;
    for (i, layer) in model.layers.iter().enumerate().skip(1) {
        let (input, _) = layer.activation.apply_inverse(&codes);
        codes = if i + 1 < depth {
            encode_dense_batch(layer, &input)
        } else {
            encode_sparse_batch(layer, &input, model.lambda, &cfg.ista)
        }
        .map_err(|e| e.in_layer(i + 1))?;
    }
    Ok(codes)
}

/// Greedy encoding of one sample.
pub fn encode(model: &DrddlModel, x: &Vector, cfg: &EncodeConfig) -> Result<Vector> {
    let x = Mat::from_column_slice(x.len(), 1, x.as_slice());
    Ok(encode_batch(model, &x, cfg)?.column(0).into_owned())
}

/// Scores `W z` and the 1-based index of the largest one (lowest index on
/// ties).
pub fn classify(model: &DrddlModel, z: &Vector) -> Result<(usize, Vector)> {
    if z.len() != model.code_dim() {
        return Err(Error::format(format!(
            "code has length {}, model produces {}",
            z.len(),
            model.code_dim()
        )));
    }
    let scores = &model.classifier * z;
    Ok((argmax(&scores) + 1, scores))
}

fn argmax(v: &Vector) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

/// Encodes and classifies every column of `x`.
pub fn predict_batch(model: &DrddlModel, x: &Mat, cfg: &EncodeConfig) -> Result<Vec<usize>> {
    let codes = encode_batch(model, x, cfg)?;
    let scores = &model.classifier * codes;
    Ok(scores
        .column_iter()
        .map(|c| argmax(&c.into_owned()) + 1)
        .collect())
}

fn write_mat(buf: &mut Vec<u8>, m: &Mat) {
    for &v in m.as_slice() {
        buf.write_f64::<LittleEndian>(v).unwrap();
    }
}

fn write_vec(buf: &mut Vec<u8>, v: &Vector) {
    for &x in v.as_slice() {
        buf.write_f64::<LittleEndian>(x).unwrap();
    }
}

fn dim_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::format(format!("{what} {v} does not fit in 32 bits")))
}

/// Serializes a model.
///
/// Layout, little-endian throughout:
///
/// ```text
/// "DRDDL1"
/// u32 layer count N, u32 input dim, u32 class count C
/// u8 activation (0 identity, 1 tanh, 2 sigmoid), f64 clamp eps
/// f64 lambda, f64 mu
/// N x (u32 rows, u32 cols)            dictionary shapes
/// f64[input dim] offset, f64[input dim] scale
/// N dictionaries, then the C x k_N classifier; f64, column-major
/// ```
pub fn model_to_bytes(model: &DrddlModel) -> Result<Vec<u8>> {
    model.validate()?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MODEL_MAGIC);
    buf.write_u32::<LittleEndian>(dim_u32(model.layers.len(), "layer count")?)?;
    buf.write_u32::<LittleEndian>(dim_u32(model.input_dim, "input dimension")?)?;
    buf.write_u32::<LittleEndian>(dim_u32(model.num_classes, "class count")?)?;
    buf.write_u8(model.activation.kind.code())?;
    buf.write_f64::<LittleEndian>(model.activation.clamp_eps)?;
    buf.write_f64::<LittleEndian>(model.lambda)?;
    buf.write_f64::<LittleEndian>(model.mu_cls)?;
    for layer in &model.layers {
        buf.write_u32::<LittleEndian>(dim_u32(layer.in_dim(), "layer rows")?)?;
        buf.write_u32::<LittleEndian>(dim_u32(layer.out_dim(), "layer columns")?)?;
    }
    write_vec(&mut buf, &model.scaling.offset);
    write_vec(&mut buf, &model.scaling.scale);
    for layer in &model.layers {
        write_mat(&mut buf, &layer.dictionary);
    }
    write_mat(&mut buf, &model.classifier);
    Ok(buf)
}

fn truncated(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::format("model file is truncated")
    } else {
        Error::Io(e)
    }
}

fn read_f64s(r: &mut impl Read, len: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; len];
    r.read_f64_into::<LittleEndian>(&mut out).map_err(truncated)?;
    Ok(out)
}

/// Parses a model written by [`model_to_bytes`].
pub fn model_from_bytes(bytes: &[u8]) -> Result<DrddlModel> {
    if bytes.len() < MODEL_MAGIC.len() || &bytes[..MODEL_MAGIC.len()] != MODEL_MAGIC {
        return Err(Error::format("bad magic: not a DRDDL1 model"));
    }
    let mut r = Cursor::new(&bytes[MODEL_MAGIC.len()..]);
    let n_layers = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
    let input_dim = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
    let classes = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
    let kind = r.read_u8().map_err(truncated)?;
    let kind = ActivationKind::from_code(kind)
        .ok_or_else(|| Error::format(format!("unknown activation code {kind}")))?;
    let clamp_eps = r.read_f64::<LittleEndian>().map_err(truncated)?;
    let activation = Activation::with_clamp_eps(kind, clamp_eps)
        .map_err(|_| Error::format(format!("invalid clamp eps {clamp_eps}")))?;
    let lambda = r.read_f64::<LittleEndian>().map_err(truncated)?;
    let mu_cls = r.read_f64::<LittleEndian>().map_err(truncated)?;
    if n_layers == 0 {
        return Err(Error::format("model has no layers"));
    }

    let mut shapes = Vec::with_capacity(n_layers.min(1024));
    for _ in 0..n_layers {
        let rows = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
        let cols = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
        shapes.push((rows, cols));
    }
    if shapes[0].0 != input_dim {
        return Err(Error::format(format!(
            "layer 1 has {} rows but the input dimension is {input_dim}",
            shapes[0].0
        )));
    }
    for i in 1..n_layers {
        if shapes[i].0 != shapes[i - 1].1 {
            return Err(Error::format(format!(
                "dimension chain broken at layer {}: expects {} inputs, layer {} produces {}",
                i + 1,
                shapes[i].0,
                i,
                shapes[i - 1].1
            )));
        }
    }
    let code_dim = shapes[n_layers - 1].1;
    let expected: usize = 2 * input_dim
        + shapes.iter().map(|(r, c)| r * c).sum::<usize>()
        + classes * code_dim;
    let remaining = bytes.len() - MODEL_MAGIC.len() - r.position() as usize;
    if remaining < expected * 8 {
        return Err(Error::format("model file is truncated"));
    }
    if remaining > expected * 8 {
        return Err(Error::format("trailing bytes after model data"));
    }

    let offset = Vector::from_vec(read_f64s(&mut r, input_dim)?);
    let scale = Vector::from_vec(read_f64s(&mut r, input_dim)?);
    let mut stack = Vec::with_capacity(n_layers);
    for (i, &(rows, cols)) in shapes.iter().enumerate() {
        let d = Mat::from_vec(rows, cols, read_f64s(&mut r, rows * cols)?);
        let act = if i == 0 { Activation::identity() } else { activation };
        stack.push(Layer::new(d, act).map_err(|e| e.in_layer(i + 1))?);
    }
    let classifier = Mat::from_vec(classes, code_dim, read_f64s(&mut r, classes * code_dim)?);
    let model = DrddlModel {
        layers: stack,
        classifier,
        lambda,
        mu_cls,
        activation,
        num_classes: classes,
        input_dim,
        scaling: FeatureScaling { offset, scale },
    };
    model.validate()?;
    Ok(model)
}

pub fn save_model(model: &DrddlModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, model_to_bytes(model)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<DrddlModel> {
    model_from_bytes(&fs::read(path)?)
}
