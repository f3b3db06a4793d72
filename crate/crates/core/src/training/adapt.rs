use std::fmt;
use std::str::FromStr;

use crate::checkpoint::Checkpoint;
use crate::config::KeyValueConfig;
use crate::error::{Error, Result};
use crate::ingest::{InputMode, Slide};
use crate::losses::{discriminator_loss_grad, mapping_loss_grad, siamese_loss_grad, LossReport};
use crate::networks::{siamese_forward, ModelBundle};
use crate::nn::{Adam, Matrix, Mode, Parameterized};
use crate::rng::{derive_seed, rng_for, TAG_INIT, TAG_PAIRS, TAG_SOURCE_BATCH, TAG_TARGET_BATCH};

use super::data::{all_patches, input_batch, sample_refs, PatchRef};
use super::pairs::sample_pair_batch;
use super::TrainConfig;

/// Stream offset separating stage-two augmentation seeds from stage one.
const STAGE_TWO: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdaptMode {
    AdvOnly,
    AdvPlusSiamese,
}

impl FromStr for AdaptMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adv" | "adv_only" => Ok(AdaptMode::AdvOnly),
            "adv+siamese" | "adv_plus_siamese" => Ok(AdaptMode::AdvPlusSiamese),
            _ => Err(Error::InvalidInput(format!("unknown mode `{s}` (expected adv|adv+siamese)"))),
        }
    }
}

impl fmt::Display for AdaptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AdaptMode::AdvOnly => "adv",
            AdaptMode::AdvPlusSiamese => "adv+siamese",
        })
    }
}

/// Point inside one adaptation iteration at which parameters were hashed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Before any work in the iteration.
    Start,
    /// After the feature forward passes.
    Forward,
    /// After the discriminator update.
    Discriminator,
    /// After the target mapping update.
    Mapping,
    /// After the Siamese update.
    Siamese,
}

/// Trainable-parameter hashes of every parameter set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseHashes {
    pub phase: Phase,
    pub source: String,
    pub target: String,
    pub discriminator: String,
    pub siamese_head: String,
}

#[derive(Debug, Clone)]
pub struct IterationTrace {
    pub report: LossReport,
    /// Present only when tracing is enabled.
    pub hashes: Vec<PhaseHashes>,
}

/// Stateful stage-two loop; one call to [`Adapter::step`] is one iteration.
pub struct Adapter<'a> {
    config: TrainConfig,
    mode: AdaptMode,
    bundle: ModelBundle,
    source: &'a [Slide],
    target: &'a [Slide],
    source_pool: Vec<PatchRef>,
    target_pool: Vec<PatchRef>,
    adam_discriminator: Adam,
    adam_target: Adam,
    adam_siamese: Adam,
    step: u64,
    log: Vec<LossReport>,
    trace_hashes: bool,
}

impl<'a> Adapter<'a> {
    /// The target mapper starts as an exact copy of the source mapper.
    pub fn new(
        source_ckpt: &Checkpoint,
        source_train: &'a [Slide],
        target_train: &'a [Slide],
        config: &TrainConfig,
        mode: AdaptMode,
    ) -> Result<Self> {
        config.validate()?;
        let ck_f = source_ckpt.bundle.arch.feature_dim();
        if config.arch.feature_dim() != ck_f {
            return Err(Error::config(
                "feature_dim",
                format!("config has {} but the checkpoint has {ck_f}", config.arch.feature_dim()),
            ));
        }
        if config.arch != source_ckpt.bundle.arch {
            return Err(Error::config("arch", "config architecture differs from the checkpoint"));
        }
        let source_pool = all_patches(source_train);
        let target_pool = all_patches(target_train);
        if source_pool.len() < 2 || target_pool.len() < 2 {
            return Err(Error::InvalidInput("stage two needs at least two source and two target patches".into()));
        }
        let mut bundle = source_ckpt.bundle.clone();
        bundle.init_adaptation(derive_seed(config.seed, &[TAG_INIT, 2]));
        Ok(Adapter {
            config: config.clone(),
            mode,
            bundle,
            source: source_train,
            target: target_train,
            source_pool,
            target_pool,
            adam_discriminator: Adam::new(config.adam),
            adam_target: Adam::new(config.adam),
            adam_siamese: Adam::new(config.adam),
            step: 0,
            log: Vec::new(),
            trace_hashes: false,
        })
    }

    /// Record parameter hashes around every phase of each iteration.
    pub fn with_hash_trace(mut self, on: bool) -> Self {
        self.trace_hashes = on;
        self
    }

    pub fn bundle(&self) -> &ModelBundle {
        &self.bundle
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn log(&self) -> &[LossReport] {
        &self.log
    }

    fn hashes(&self, phase: Phase) -> PhaseHashes {
        let b = &self.bundle;
        PhaseHashes {
            phase,
            source: b.source.param_hash(),
            target: b.target.as_ref().expect("initialized").param_hash(),
            discriminator: b.discriminator.as_ref().expect("initialized").param_hash(),
            siamese_head: b.siamese_head.as_ref().expect("initialized").param_hash(),
        }
    }

    /// One iteration: (i) sample equal-size source and target batches,
    /// (ii) compute source and target features, (iii) update the
    /// discriminator, (iv) update the target mapper against the frozen
    /// discriminator, (v) in Siamese mode, update the head and target mapper
    /// on a same-slide pair batch.
    pub fn step(&mut self) -> Result<IterationTrace> {
        let cfg = &self.config;
        let eps = cfg.epsilon;
        let step = self.step;
        let mut hashes = Vec::new();
        if self.trace_hashes {
            hashes.push(self.hashes(Phase::Start));
        }

        // (i)
        let size = cfg.batch_size.min(self.source_pool.len()).min(self.target_pool.len());
        let src_refs = sample_refs(&self.source_pool, size, &mut rng_for(cfg.seed, &[TAG_SOURCE_BATCH, STAGE_TWO, step]));
        let tgt_refs = sample_refs(&self.target_pool, size, &mut rng_for(cfg.seed, &[TAG_TARGET_BATCH, STAGE_TWO, step]));
        let xs = input_batch(self.source, &src_refs, &cfg.input, InputMode::Train, |i| {
            derive_seed(cfg.seed, &[TAG_SOURCE_BATCH, STAGE_TWO, step, i as u64])
        })?;
        let xt = input_batch(self.target, &tgt_refs, &cfg.input, InputMode::Train, |i| {
            derive_seed(cfg.seed, &[TAG_TARGET_BATCH, STAGE_TWO, step, i as u64])
        })?;

        // (ii) The source mapper is frozen and runs in eval mode.
        let (ys, _) = self.bundle.source.mapper.forward(&xs, Mode::Eval)?;
        let target = self.bundle.target.as_mut().expect("initialized");
        let (yt, target_trace) = target.map_features(&xt, Mode::Train)?;
        if self.trace_hashes {
            hashes.push(self.hashes(Phase::Forward));
        }

        // (iii) Features are treated as constants here.
        let disc = self.bundle.discriminator.as_mut().expect("initialized");
        disc.zero_grad();
        let feats = Matrix::vcat(&ys, &yt)?;
        let (probs, dtrace) = disc.forward(&feats)?;
        let (l_adv_d, gs, gt) = discriminator_loss_grad(&probs.data[..size], &probs.data[size..], eps)?;
        finite("discriminator", l_adv_d, step)?;
        let mut dprobs = Matrix::zeros(2 * size, 1);
        dprobs.data[..size].copy_from_slice(&gs);
        dprobs.data[size..].copy_from_slice(&gt);
        disc.backward(&dtrace, &dprobs);
        self.adam_discriminator.step(&mut [(cfg.lr_discriminator, disc.params_mut())]);
        disc.zero_grad();
        if self.trace_hashes {
            hashes.push(self.hashes(Phase::Discriminator));
        }

        // (iv) Gradients flow through the updated discriminator, which is
        // not stepped; its accumulated gradients are discarded.
        let disc = self.bundle.discriminator.as_mut().expect("initialized");
        let (dt, dtrace) = disc.forward(&yt)?;
        let (l_adv_m, gm) = mapping_loss_grad(&dt.data, eps)?;
        finite("mapping", l_adv_m, step)?;
        let dfeats = disc.backward(&dtrace, &Matrix { rows: size, cols: 1, data: gm });
        disc.zero_grad();
        let target = self.bundle.target.as_mut().expect("initialized");
        target.zero_grad();
        target.backward(&target_trace, &dfeats);
        self.adam_target.step(&mut [(cfg.lr_target, target.params_mut())]);
        target.zero_grad();
        if self.trace_hashes {
            hashes.push(self.hashes(Phase::Mapping));
        }

        // (v)
        let mut l_s = None;
        if self.mode == AdaptMode::AdvPlusSiamese {
            let pair_seed = derive_seed(cfg.seed, &[TAG_PAIRS, step]);
            let pairs = sample_pair_batch(self.target, cfg.pair_batch_size, cfg.positive_pair_fraction, pair_seed)?;
            let (xa, xb) = pairs.inputs(self.target, &cfg.input, pair_seed)?;
            let head = self.bundle.siamese_head.as_mut().expect("initialized");
            let target = self.bundle.target.as_mut().expect("initialized");
            let (p, trace) = siamese_forward(head, target, &xa, &xb, Mode::Train)?;
            target.update_running_stats(&trace.first);
            target.update_running_stats(&trace.second);
            let (loss, gp) = siamese_loss_grad(&p.data, &pairs.same_slide, eps)?;
            finite("siamese", loss, step)?;
            head.zero_grad();
            target.zero_grad();
            let (d1, d2) = head.backward(&trace.head, &Matrix { rows: pairs.len(), cols: 1, data: gp });
            target.backward(&trace.first, &d1);
            target.backward(&trace.second, &d2);
            self.adam_siamese
                .step(&mut [(cfg.lr_head, head.params_mut()), (cfg.lr_target, target.params_mut())]);
            head.zero_grad();
            target.zero_grad();
            l_s = Some(loss);
            if self.trace_hashes {
                hashes.push(self.hashes(Phase::Siamese));
            }
        }

        let report = LossReport {
            step,
            l_adv_d: Some(l_adv_d),
            l_adv_m: Some(l_adv_m),
            l_s,
            ..Default::default()
        }
        .with_derived();
        self.log.push(report.clone());
        self.step += 1;
        Ok(IterationTrace { report, hashes })
    }

    pub fn finish(self) -> Checkpoint {
        Checkpoint::new(self.config, self.bundle, self.step, &self.log)
    }

    pub fn into_parts(self) -> (Checkpoint, Vec<LossReport>) {
        let log = self.log.clone();
        (self.finish(), log)
    }
}

fn finite(name: &str, loss: f64, step: u64) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("{name} loss is {loss} at step {step}")))
    }
}

/// Stage two for `config.adapt_iterations` iterations; the last iterate is
/// returned together with the full loss log.
pub fn adapt_target(
    source_ckpt: &Checkpoint,
    source_train: &[Slide],
    target_train: &[Slide],
    config: &TrainConfig,
    mode: AdaptMode,
) -> Result<(Checkpoint, Vec<LossReport>)> {
    let mut adapter = Adapter::new(source_ckpt, source_train, target_train, config, mode)?;
    for _ in 0..config.adapt_iterations {
        adapter.step()?;
    }
    Ok(adapter.into_parts())
}
