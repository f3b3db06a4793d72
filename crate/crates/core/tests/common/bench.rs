//! The synthetic two-domain benchmark used for the directional comparison
//! of baseline, adversarial-only and adversarial + Siamese adaptation.

use histo_adapt::eval::{evaluate, EvalReport};
use histo_adapt::ingest::{split_patient_disjoint, Slide};
use histo_adapt::synth::{generate_dataset, Domain, SynthConfig};
use histo_adapt::training::{
    adapt_target, domain_probe_accuracy, train_source, AdaptMode, MapperChoice, TrainConfig,
};

/// Offset between the source and target cohort seeds.
pub const TARGET_COHORT_OFFSET: u64 = 1000;
/// Fraction of target slides used (unlabeled) for adaptation; the rest are scored.
pub const TARGET_ADAPT_FRACTION: f64 = 0.5;
pub const ADAPT_ITERATIONS: usize = 100;

#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    pub source_test: EvalReport,
    pub baseline: EvalReport,
    pub adv_only: EvalReport,
    pub adv_siamese: EvalReport,
    pub probe_before: f64,
    pub probe_after: f64,
}

pub fn bench_config(seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig::desk();
    cfg.seed = seed;
    cfg.adapt_iterations = ADAPT_ITERATIONS;
    cfg
}

pub struct Cohorts {
    pub source_train: Vec<Slide>,
    pub source_test: Vec<Slide>,
    pub target_adapt: Vec<Slide>,
    pub target_test: Vec<Slide>,
}

pub fn cohorts(synth: &SynthConfig, cfg: &TrainConfig) -> Cohorts {
    let source = generate_dataset(synth, Domain::Source).unwrap();
    let target_cfg = SynthConfig { seed: synth.seed + TARGET_COHORT_OFFSET, ..synth.clone() };
    let target = generate_dataset(&target_cfg, Domain::Target).unwrap();
    let s = split_patient_disjoint(source, cfg.split_ratio, cfg.seed).unwrap();
    let t = split_patient_disjoint(target, TARGET_ADAPT_FRACTION, cfg.seed).unwrap();
    Cohorts {
        source_train: s.train,
        source_test: s.test,
        target_adapt: t.train.iter().map(Slide::unlabeled).collect(),
        target_test: t.test,
    }
}

pub fn run_seed(seed: u64) -> SeedOutcome {
    let cfg = bench_config(seed);
    let synth = SynthConfig { seed, ..SynthConfig::default() };
    let c = cohorts(&synth, &cfg);
    let split = histo_adapt::ingest::DatasetSplit {
        train: c.source_train.clone(),
        test: c.source_test.clone(),
        ratio: cfg.split_ratio,
        seed,
    };
    let source = train_source(&split, &cfg).unwrap().checkpoint;
    let input = &cfg.input;
    let source_test = evaluate(&source.bundle, MapperChoice::Source, &c.source_test, input).unwrap();
    let baseline = evaluate(&source.bundle, MapperChoice::Source, &c.target_test, input).unwrap();
    let (adv, _) = adapt_target(&source, &c.source_train, &c.target_adapt, &cfg, AdaptMode::AdvOnly).unwrap();
    let adv_only = evaluate(&adv.bundle, MapperChoice::Target, &c.target_test, input).unwrap();
    let (sia, _) = adapt_target(&source, &c.source_train, &c.target_adapt, &cfg, AdaptMode::AdvPlusSiamese).unwrap();
    let adv_siamese = evaluate(&sia.bundle, MapperChoice::Target, &c.target_test, input).unwrap();
    let probe_before =
        domain_probe_accuracy(&source.bundle, MapperChoice::Source, &c.source_test, &c.target_test, &cfg).unwrap();
    let probe_after =
        domain_probe_accuracy(&adv.bundle, MapperChoice::Target, &c.source_test, &c.target_test, &cfg).unwrap();
    SeedOutcome {
        seed,
        source_test,
        baseline,
        adv_only,
        adv_siamese,
        probe_before,
        probe_after,
    }
}
