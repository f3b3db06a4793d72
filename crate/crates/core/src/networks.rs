//! The four parameterized functions of the adaptation setup: the feature
//! mapper (shared architecture for source and target), the grade classifier,
//! the domain discriminator and the Siamese same-slide head.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    global_avg_pool, global_avg_pool_backward, leaky_relu, leaky_relu_backward, relu, relu_backward, sigmoid,
    softmax_rows, BatchNorm2d, BatchNormCache, Conv2d, ConvCache, Linear, Matrix, MaxPool2d, Mode, Param,
    Parameterized, PoolCache, Tensor,
};
use crate::rng::{rng_for, Rng, TAG_INIT};

pub const NUM_CLASSES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSpec {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub pool: Option<PoolSpec>,
}

/// Architecture of all four networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    /// Side length of the square network input.
    pub input_size: usize,
    pub stages: Vec<StageSpec>,
    pub discriminator_hidden: usize,
    pub leaky_slope: f64,
}

impl ArchConfig {
    /// AlexNet-like five-stage layout at 224x224 input, F = 256.
    pub fn full() -> Self {
        let pool = Some(PoolSpec { kernel: 3, stride: 2 });
        ArchConfig {
            input_size: 224,
            stages: vec![
                StageSpec { channels: 64, kernel: 11, stride: 4, padding: 2, pool },
                StageSpec { channels: 192, kernel: 5, stride: 1, padding: 2, pool },
                StageSpec { channels: 384, kernel: 3, stride: 1, padding: 1, pool: None },
                StageSpec { channels: 256, kernel: 3, stride: 1, padding: 1, pool: None },
                StageSpec { channels: 256, kernel: 3, stride: 1, padding: 1, pool },
            ],
            discriminator_hidden: 512,
            leaky_slope: 0.2,
        }
    }

    /// The same five-stage family scaled down for 56x56 inputs so that the
    /// full two-stage pipeline trains in minutes on one CPU core.
    pub fn desk() -> Self {
        let pool = Some(PoolSpec { kernel: 2, stride: 2 });
        ArchConfig {
            input_size: 56,
            stages: vec![
                StageSpec { channels: 16, kernel: 5, stride: 2, padding: 2, pool },
                StageSpec { channels: 32, kernel: 5, stride: 1, padding: 2, pool },
                StageSpec { channels: 48, kernel: 3, stride: 1, padding: 1, pool: None },
                StageSpec { channels: 32, kernel: 3, stride: 1, padding: 1, pool: None },
                StageSpec { channels: 32, kernel: 3, stride: 1, padding: 1, pool },
            ],
            discriminator_hidden: 128,
            leaky_slope: 0.2,
        }
    }

    /// Feature dimension F: the width of the last mapper stage.
    pub fn feature_dim(&self) -> usize {
        self.stages.last().map_or(0, |s| s.channels)
    }

    pub fn with_feature_dim(mut self, f: usize) -> Self {
        if let Some(last) = self.stages.last_mut() {
            last.channels = f;
        }
        self
    }

    /// Spatial size after each stage; fails if any stage collapses the input.
    pub fn spatial_sizes(&self) -> Result<Vec<usize>> {
        if self.stages.is_empty() {
            return Err(Error::config("stages", "at least one stage is required"));
        }
        let mut size = self.input_size;
        let mut out = Vec::with_capacity(self.stages.len());
        for (i, s) in self.stages.iter().enumerate() {
            let padded = size + 2 * s.padding;
            if s.channels == 0 || s.kernel == 0 || s.stride == 0 || padded < s.kernel {
                return Err(Error::config(format!("stage{i}"), format!("invalid at spatial size {size}")));
            }
            size = (padded - s.kernel) / s.stride + 1;
            if let Some(p) = s.pool {
                if p.kernel == 0 || p.stride == 0 || size < p.kernel {
                    return Err(Error::config(format!("stage{i}"), format!("pooling invalid at spatial size {size}")));
                }
                size = (size - p.kernel) / p.stride + 1;
            }
            out.push(size);
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        self.spatial_sizes()?;
        if self.discriminator_hidden == 0 {
            return Err(Error::config("discriminator_hidden", "must be positive"));
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0) {
            return Err(Error::config("leaky_slope", "must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Stage {
    conv: Conv2d,
    bn: BatchNorm2d,
    pool: Option<MaxPool2d>,
}

/// Fully convolutional feature extractor: conv, batch norm, ReLU and optional
/// max pooling per stage, then global average pooling to an F-dim vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Mapper {
    stages: Vec<Stage>,
    input_size: usize,
}

#[derive(Debug, Clone)]
struct StageTrace {
    conv: ConvCache,
    bn: BatchNormCache,
    activated: Tensor,
    pool: Option<PoolCache>,
}

/// Intermediate values of one mapper forward pass, consumed by backward.
#[derive(Debug, Clone)]
pub struct MapperTrace {
    stages: Vec<StageTrace>,
    pooled_shape: (usize, usize, usize, usize),
}

impl Mapper {
    pub fn new(arch: &ArchConfig, rng: &mut Rng) -> Result<Self> {
        arch.validate()?;
        let mut in_c = 3;
        let stages = arch
            .stages
            .iter()
            .map(|s| {
                let conv = Conv2d::new(in_c, s.channels, s.kernel, s.stride, s.padding, rng);
                in_c = s.channels;
                Stage {
                    conv,
                    bn: BatchNorm2d::new(s.channels),
                    pool: s.pool.map(|p| MaxPool2d { kernel: p.kernel, stride: p.stride }),
                }
            })
            .collect();
        Ok(Mapper {
            stages,
            input_size: arch.input_size,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.stages.last().map_or(0, |s| s.conv.out_channels)
    }

    /// Forward pass without touching running statistics.
    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<(Matrix, MapperTrace)> {
        if x.is_empty() || x.batch == 0 {
            return Err(Error::InvalidInput("empty input batch".into()));
        }
        if x.channels != 3 || x.height != self.input_size || x.width != self.input_size {
            return Err(Error::Shape(format!(
                "mapper expects 3x{s}x{s} inputs, got {}x{}x{}",
                x.channels,
                x.height,
                x.width,
                s = self.input_size
            )));
        }
        if !x.is_finite() {
            return Err(Error::Numeric("non-finite value in mapper input".into()));
        }
        let mut traces = Vec::with_capacity(self.stages.len());
        let mut h = x.clone();
        for stage in &self.stages {
            let (z, conv) = stage.conv.forward(&h)?;
            let (mut a, bn) = stage.bn.forward(&z, mode);
            relu(&mut a);
            let (out, pool) = match &stage.pool {
                Some(p) => {
                    let (o, c) = p.forward(&a)?;
                    (o, Some(c))
                }
                None => (a.clone(), None),
            };
            traces.push(StageTrace {
                conv,
                bn,
                activated: a,
                pool,
            });
            h = out;
        }
        let feats = global_avg_pool(&h);
        if !feats.is_finite() {
            return Err(Error::Numeric("non-finite mapper features".into()));
        }
        let trace = MapperTrace {
            stages: traces,
            pooled_shape: (h.channels, h.batch, h.height, h.width),
        };
        Ok((feats, trace))
    }

    /// Fold the batch statistics recorded in a train-mode trace into the
    /// running estimates.
    pub fn update_running_stats(&mut self, trace: &MapperTrace) {
        for (stage, t) in self.stages.iter_mut().zip(&trace.stages) {
            stage.bn.update_running(&t.bn);
        }
    }

    /// Forward pass that also updates running statistics in train mode.
    pub fn map_features(&mut self, x: &Tensor, mode: Mode) -> Result<(Matrix, MapperTrace)> {
        let (f, trace) = self.forward(x, mode)?;
        if mode == Mode::Train {
            self.update_running_stats(&trace);
        }
        Ok((f, trace))
    }

    /// Accumulate parameter gradients for `d loss / d features`.
    pub fn backward(&mut self, trace: &MapperTrace, dfeats: &Matrix) {
        let mut g = global_avg_pool_backward(dfeats, trace.pooled_shape);
        for (i, (stage, t)) in self.stages.iter_mut().zip(&trace.stages).enumerate().rev() {
            if let (Some(p), Some(pc)) = (&stage.pool, &t.pool) {
                g = p.backward(pc, &g);
            }
            relu_backward(&t.activated, &mut g);
            g = stage.bn.backward(&t.bn, &g);
            match stage.conv.backward(&t.conv, &g, i > 0) {
                Some(dx) => g = dx,
                None => break,
            }
        }
    }
}

impl Parameterized for Mapper {
    fn named_params(&self) -> Vec<(String, &Param)> {
        let mut out = Vec::new();
        for (i, s) in self.stages.iter().enumerate() {
            out.push((format!("stage{i}.conv.weight"), &s.conv.weight));
            out.push((format!("stage{i}.conv.bias"), &s.conv.bias));
            out.push((format!("stage{i}.bn.gamma"), &s.bn.gamma));
            out.push((format!("stage{i}.bn.beta"), &s.bn.beta));
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::new();
        for s in &mut self.stages {
            out.push(&mut s.conv.weight);
            out.push(&mut s.conv.bias);
            out.push(&mut s.bn.gamma);
            out.push(&mut s.bn.beta);
        }
        out
    }

    fn named_buffers(&self) -> Vec<(String, &Vec<f64>)> {
        let mut out = Vec::new();
        for (i, s) in self.stages.iter().enumerate() {
            out.push((format!("stage{i}.bn.running_mean"), &s.bn.running_mean));
            out.push((format!("stage{i}.bn.running_var"), &s.bn.running_var));
        }
        out
    }

    fn buffers_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        for s in &mut self.stages {
            out.push(&mut s.bn.running_mean);
            out.push(&mut s.bn.running_var);
        }
        out
    }
}

/// Final prediction layer: a 1x1 convolution over the globally pooled map,
/// i.e. an affine map F -> 2 logits (Low, High). No normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub layer: Linear,
}

impl Classifier {
    pub fn new(feature_dim: usize, rng: &mut Rng) -> Self {
        Classifier {
            layer: Linear::new(feature_dim, NUM_CLASSES, rng),
        }
    }

    pub fn classify(&self, feats: &Matrix) -> Result<Matrix> {
        self.layer.forward(feats)
    }

    /// Returns `d loss / d features`.
    pub fn backward(&mut self, feats: &Matrix, dlogits: &Matrix) -> Matrix {
        self.layer.backward(feats, dlogits)
    }

    /// Softmax probability of the High class per row.
    pub fn high_probabilities(&self, feats: &Matrix) -> Result<Vec<f64>> {
        let probs = softmax_rows(&self.classify(feats)?);
        Ok((0..probs.rows).map(|r| probs.row(r)[1]).collect())
    }
}

impl Parameterized for Classifier {
    fn named_params(&self) -> Vec<(String, &Param)> {
        vec![
            ("classifier.weight".into(), &self.layer.weight),
            ("classifier.bias".into(), &self.layer.bias),
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.layer.weight, &mut self.layer.bias]
    }
}

/// Domain discriminator: three affine layers with leaky ReLU between them and
/// a sigmoid on the final scalar. Output 1 means "source".
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub layers: [Linear; 3],
    pub slope: f64,
}

#[derive(Debug, Clone)]
pub struct DiscriminatorTrace {
    input: Matrix,
    pre1: Matrix,
    act1: Matrix,
    pre2: Matrix,
    act2: Matrix,
    probs: Matrix,
}

impl Discriminator {
    pub fn new(feature_dim: usize, hidden: usize, slope: f64, rng: &mut Rng) -> Self {
        Discriminator {
            layers: [
                Linear::new(feature_dim, hidden, rng),
                Linear::new(hidden, hidden, rng),
                Linear::new(hidden, 1, rng),
            ],
            slope,
        }
    }

    pub fn forward(&self, feats: &Matrix) -> Result<(Matrix, DiscriminatorTrace)> {
        let pre1 = self.layers[0].forward(feats)?;
        let act1 = leaky_relu(&pre1, self.slope);
        let pre2 = self.layers[1].forward(&act1)?;
        let act2 = leaky_relu(&pre2, self.slope);
        let mut probs = self.layers[2].forward(&act2)?;
        probs.data.iter_mut().for_each(|v| *v = sigmoid(*v));
        let trace = DiscriminatorTrace {
            input: feats.clone(),
            pre1,
            act1,
            pre2,
            act2,
            probs: probs.clone(),
        };
        Ok((probs, trace))
    }

    /// Probability that each feature row came from the source domain.
    pub fn discriminate(&self, feats: &Matrix) -> Result<Matrix> {
        Ok(self.forward(feats)?.0)
    }

    /// Accumulates gradients; returns `d loss / d features`.
    pub fn backward(&mut self, trace: &DiscriminatorTrace, dprobs: &Matrix) -> Matrix {
        let dz = sigmoid_backward(&trace.probs, dprobs);
        let d2 = self.layers[2].backward(&trace.act2, &dz);
        let d2 = leaky_relu_backward(&trace.pre2, &d2, self.slope);
        let d1 = self.layers[1].backward(&trace.act1, &d2);
        let d1 = leaky_relu_backward(&trace.pre1, &d1, self.slope);
        self.layers[0].backward(&trace.input, &d1)
    }
}

fn sigmoid_backward(probs: &Matrix, dprobs: &Matrix) -> Matrix {
    Matrix {
        rows: probs.rows,
        cols: probs.cols,
        data: probs.data.iter().zip(&dprobs.data).map(|(p, g)| g * p * (1.0 - p)).collect(),
    }
}

impl Parameterized for Discriminator {
    fn named_params(&self) -> Vec<(String, &Param)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("discriminator.fc{i}.weight"), &l.weight));
            out.push((format!("discriminator.fc{i}.bias"), &l.bias));
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }
}

/// One-layer perceptron scoring a concatenated feature pair as same-slide.
#[derive(Debug, Clone, PartialEq)]
pub struct SiameseHead {
    pub layer: Linear,
}

#[derive(Debug, Clone)]
pub struct SiameseTrace {
    joined: Matrix,
    probs: Matrix,
}

impl SiameseHead {
    pub fn new(feature_dim: usize, rng: &mut Rng) -> Self {
        SiameseHead {
            layer: Linear::new(2 * feature_dim, 1, rng),
        }
    }

    pub fn forward(&self, first: &Matrix, second: &Matrix) -> Result<(Matrix, SiameseTrace)> {
        let joined = Matrix::hcat(first, second)?;
        let mut probs = self.layer.forward(&joined)?;
        probs.data.iter_mut().for_each(|v| *v = sigmoid(*v));
        Ok((
            probs.clone(),
            SiameseTrace { joined, probs },
        ))
    }

    /// Accumulates head gradients; returns gradients for both feature blocks.
    pub fn backward(&mut self, trace: &SiameseTrace, dprobs: &Matrix) -> (Matrix, Matrix) {
        let dz = sigmoid_backward(&trace.probs, dprobs);
        let dj = self.layer.backward(&trace.joined, &dz);
        dj.hsplit(dj.cols / 2)
    }
}

impl Parameterized for SiameseHead {
    fn named_params(&self) -> Vec<(String, &Param)> {
        vec![
            ("siamese_head.weight".into(), &self.layer.weight),
            ("siamese_head.bias".into(), &self.layer.bias),
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.layer.weight, &mut self.layer.bias]
    }
}

/// Intermediate values of a full Siamese evaluation.
#[derive(Debug, Clone)]
pub struct SiamesePassTrace {
    pub first: MapperTrace,
    pub second: MapperTrace,
    pub head: SiameseTrace,
}

/// Same-slide probability for each pair: both inputs go through the same
/// mapper weights, the features are concatenated and scored by the head.
pub fn siamese_forward(
    head: &SiameseHead,
    mapper: &Mapper,
    first: &Tensor,
    second: &Tensor,
    mode: Mode,
) -> Result<(Matrix, SiamesePassTrace)> {
    if first.batch != second.batch {
        return Err(Error::Shape(format!(
            "pair batches differ in size: {} vs {}",
            first.batch, second.batch
        )));
    }
    let (f1, t1) = mapper.forward(first, mode)?;
    let (f2, t2) = mapper.forward(second, mode)?;
    let (probs, th) = head.forward(&f1, &f2)?;
    Ok((
        probs,
        SiamesePassTrace {
            first: t1,
            second: t2,
            head: th,
        },
    ))
}

/// Source mapper and its classifier together: the supervised network.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceNetwork {
    pub mapper: Mapper,
    pub classifier: Classifier,
}

impl SourceNetwork {
    pub fn new(arch: &ArchConfig, seed: u64) -> Result<Self> {
        let mut rng = rng_for(seed, &[TAG_INIT, 0]);
        let mapper = Mapper::new(arch, &mut rng)?;
        let classifier = Classifier::new(arch.feature_dim(), &mut rng);
        Ok(SourceNetwork { mapper, classifier })
    }
}

impl Parameterized for SourceNetwork {
    fn named_params(&self) -> Vec<(String, &Param)> {
        let mut out = self.mapper.named_params();
        out.extend(self.classifier.named_params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = self.mapper.params_mut();
        out.extend(self.classifier.params_mut());
        out
    }

    fn named_buffers(&self) -> Vec<(String, &Vec<f64>)> {
        self.mapper.named_buffers()
    }

    fn buffers_mut(&mut self) -> Vec<&mut Vec<f64>> {
        self.mapper.buffers_mut()
    }
}

/// Every parameter set of the two-stage method.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub arch: ArchConfig,
    pub source: SourceNetwork,
    pub target: Option<Mapper>,
    pub discriminator: Option<Discriminator>,
    pub siamese_head: Option<SiameseHead>,
}

impl ModelBundle {
    pub fn new_source(arch: ArchConfig, seed: u64) -> Result<Self> {
        let source = SourceNetwork::new(&arch, seed)?;
        Ok(ModelBundle {
            arch,
            source,
            target: None,
            discriminator: None,
            siamese_head: None,
        })
    }

    /// Stage-two initialization: the target mapper becomes an exact copy of
    /// the source mapper; discriminator and head are freshly drawn.
    pub fn init_adaptation(&mut self, seed: u64) {
        let f = self.arch.feature_dim();
        let mut rng = rng_for(seed, &[TAG_INIT, 1]);
        self.target = Some(self.source.mapper.clone());
        self.discriminator = Some(Discriminator::new(
            f,
            self.arch.discriminator_hidden,
            self.arch.leaky_slope,
            &mut rng,
        ));
        self.siamese_head = Some(SiameseHead::new(f, &mut rng));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    fn tiny_arch() -> ArchConfig {
        ArchConfig {
            input_size: 12,
            stages: vec![
                StageSpec { channels: 4, kernel: 3, stride: 1, padding: 1, pool: Some(PoolSpec { kernel: 2, stride: 2 }) },
                StageSpec { channels: 6, kernel: 3, stride: 1, padding: 1, pool: None },
            ],
            discriminator_hidden: 8,
            leaky_slope: 0.2,
        }
    }

    fn batch(n: usize, size: usize, seed: u64) -> Tensor {
        use rand::Rng as _;
        let mut rng = rng_for(seed, &[]);
        let samples: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3 * size * size).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        Tensor::from_samples(&samples, 3, size, size).unwrap()
    }

    #[test]
    fn full_arch_has_feature_dim_256() {
        let a = ArchConfig::full();
        assert_eq!(a.feature_dim(), 256);
        assert_eq!(a.spatial_sizes().unwrap(), vec![27, 13, 13, 13, 6]);
        assert!(ArchConfig::desk().validate().is_ok());
    }

    #[test]
    fn map_features_returns_one_row_per_sample() {
        let arch = tiny_arch();
        let m = Mapper::new(&arch, &mut rng_for(0, &[])).unwrap();
        let (f, _) = m.forward(&batch(4, 12, 1), Mode::Eval).unwrap();
        assert_eq!((f.rows, f.cols), (4, 6));
    }

    #[test]
    fn eval_mode_maps_duplicates_identically() {
        let arch = tiny_arch();
        let m = Mapper::new(&arch, &mut rng_for(0, &[])).unwrap();
        let one = batch(1, 12, 2);
        let two = Tensor::concat_batch(&one, &one).unwrap();
        let (f, _) = m.forward(&two, Mode::Eval).unwrap();
        assert_eq!(f.row(0), f.row(1));
    }

    #[test]
    fn copied_target_matches_source_exactly() {
        let mut bundle = ModelBundle::new_source(tiny_arch(), 3).unwrap();
        bundle.init_adaptation(4);
        let x = batch(3, 12, 5);
        let (fs, _) = bundle.source.mapper.forward(&x, Mode::Eval).unwrap();
        let (ft, _) = bundle.target.as_ref().unwrap().forward(&x, Mode::Eval).unwrap();
        assert_eq!(fs, ft);
    }

    #[test]
    fn non_finite_input_is_a_numeric_error() {
        let m = Mapper::new(&tiny_arch(), &mut rng_for(0, &[])).unwrap();
        let mut x = batch(1, 12, 1);
        x.data[3] = f64::NAN;
        assert!(matches!(m.forward(&x, Mode::Eval), Err(Error::Numeric(_))));
    }

    #[test]
    fn zero_classifier_gives_uniform_softmax() {
        let mut c = Classifier::new(5, &mut rng_for(0, &[]));
        c.layer.weight.value.iter_mut().for_each(|v| *v = 0.0);
        c.layer.bias.value.iter_mut().for_each(|v| *v = 0.0);
        let feats = Matrix::from_rows(&[vec![1.0, 2.0, 3.0, 4.0, 5.0]]).unwrap();
        let logits = c.classify(&feats).unwrap();
        assert_eq!((logits.rows, logits.cols), (1, 2));
        assert_eq!(logits.data, vec![0.0, 0.0]);
        assert_eq!(c.high_probabilities(&feats).unwrap(), vec![0.5]);
    }

    #[test]
    fn classifier_rejects_wrong_feature_dim() {
        let c = Classifier::new(5, &mut rng_for(0, &[]));
        let feats = Matrix::zeros(2, 4);
        assert!(matches!(c.classify(&feats), Err(Error::Shape(_))));
    }

    #[test]
    fn positive_weight_scaling_preserves_argmax() {
        let mut c = Classifier::new(4, &mut rng_for(9, &[]));
        let feats = Matrix::from_rows(&[vec![0.3, -1.0, 2.0, 0.1], vec![-0.5, 0.2, 0.0, 1.5]]).unwrap();
        let before = c.classify(&feats).unwrap();
        for p in c.params_mut() {
            p.value.iter_mut().for_each(|v| *v *= 3.7);
        }
        let after = c.classify(&feats).unwrap();
        for r in 0..2 {
            let am = |m: &Matrix| (m.row(r)[1] > m.row(r)[0]) as u8;
            assert_eq!(am(&before), am(&after));
        }
    }

    #[test]
    fn zero_discriminator_outputs_half() {
        let mut d = Discriminator::new(4, 8, 0.2, &mut rng_for(0, &[]));
        for p in d.params_mut() {
            p.value.iter_mut().for_each(|v| *v = 0.0);
        }
        let feats = Matrix::from_rows(&vec![vec![1.0, -2.0, 3.0, 0.5]; 8]).unwrap();
        let probs = d.discriminate(&feats).unwrap();
        assert_eq!(probs.rows, 8);
        assert!(probs.data.iter().all(|&p| p == 0.5));
    }

    #[test]
    fn discriminator_outputs_lie_strictly_inside_unit_interval() {
        let d = Discriminator::new(3, 8, 0.2, &mut rng_for(1, &[]));
        let feats = Matrix::from_rows(&[vec![10.0, -10.0, 5.0], vec![0.0, 0.0, 0.0]]).unwrap();
        let probs = d.discriminate(&feats).unwrap();
        assert!(probs.data.iter().all(|&p| p > 0.0 && p < 1.0));
        assert!(d.discriminate(&Matrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn siamese_zero_head_gives_half_and_symmetric_head_is_symmetric() {
        let arch = tiny_arch();
        let mapper = Mapper::new(&arch, &mut rng_for(0, &[])).unwrap();
        let mut head = SiameseHead::new(arch.feature_dim(), &mut rng_for(1, &[]));
        let a = batch(3, 12, 2);
        let b = batch(3, 12, 3);
        let w = head.layer.weight.value.clone();
        let f = arch.feature_dim();
        head.layer.weight.value[f..].copy_from_slice(&w[..f]);
        let (p_ab, _) = siamese_forward(&head, &mapper, &a, &b, Mode::Eval).unwrap();
        let (p_ba, _) = siamese_forward(&head, &mapper, &b, &a, Mode::Eval).unwrap();
        assert_eq!(p_ab.rows, 3);
        for (x, y) in p_ab.data.iter().zip(&p_ba.data) {
            assert!((x - y).abs() < 1e-12);
        }
        head.layer.weight.value.iter_mut().for_each(|v| *v = 0.0);
        head.layer.bias.value[0] = 0.0;
        let (p0, _) = siamese_forward(&head, &mapper, &a, &b, Mode::Eval).unwrap();
        assert!(p0.data.iter().all(|&p| p == 0.5));
        let c = batch(2, 12, 4);
        assert!(matches!(siamese_forward(&head, &mapper, &a, &c, Mode::Eval), Err(Error::Shape(_))));
    }
}
