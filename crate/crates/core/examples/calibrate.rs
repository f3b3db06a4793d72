//! Runs the synthetic benchmark end to end and prints accuracies per seed.
//!
//! Environment: SEEDS (default "0"), ITERS (adaptation iterations),
//! EPOCHS (source epochs), LR_T, LR_D, LR_H.

use std::time::Instant;

use histo_adapt::eval::evaluate;
use histo_adapt::ingest::split_patient_disjoint;
use histo_adapt::synth::{generate_dataset, Domain, SynthConfig};
use histo_adapt::training::{adapt_target, train_source, AdaptMode, MapperChoice, TrainConfig};

fn env<T: std::str::FromStr>(k: &str, d: T) -> T {
    std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d)
}

fn main() -> histo_adapt::Result<()> {
    let seeds: Vec<u64> = std::env::var("SEEDS")
        .unwrap_or_else(|_| "0".into())
        .split(',')
        .map(|s| s.parse().unwrap())
        .collect();
    for seed in seeds {
        let t0 = Instant::now();
        let synth = SynthConfig { seed, ..SynthConfig::default() };
        let source = generate_dataset(&synth, Domain::Source)?;
        let target = generate_dataset(&SynthConfig { seed: seed + 1000, ..synth.clone() }, Domain::Target)?;
        let mut cfg = TrainConfig::desk();
        cfg.seed = seed;
        cfg.source_epochs = env("EPOCHS", cfg.source_epochs);
        cfg.adapt_iterations = env("ITERS", 200);
        cfg.lr_target = env("LR_T", cfg.lr_target);
        cfg.lr_discriminator = env("LR_D", cfg.lr_discriminator);
        cfg.lr_head = env("LR_H", cfg.lr_head);
        cfg.batch_size = env("BS", cfg.batch_size);
        cfg.pair_batch_size = env("PBS", cfg.pair_batch_size);
        let split = split_patient_disjoint(source, cfg.split_ratio, seed)?;
        let tsplit = split_patient_disjoint(target, 0.5, seed)?;
        let run = train_source(&split, &cfg)?;
        let t1 = Instant::now();
        let src = evaluate(&run.checkpoint.bundle, MapperChoice::Source, &split.test, &cfg.input)?;
        let base = evaluate(&run.checkpoint.bundle, MapperChoice::Source, &tsplit.test, &cfg.input)?;
        println!(
            "seed {seed}: source train {:.1}s epoch {} | src patch {:.3} slide {:.3} | baseline patch {:.3} slide {:.3}",
            (t1 - t0).as_secs_f64(),
            run.selected_epoch,
            src.patch_accuracy,
            src.slide_accuracy,
            base.patch_accuracy,
            base.slide_accuracy
        );
        let unl: Vec<_> = tsplit.train.iter().map(|s| s.unlabeled()).collect();
        for mode in [AdaptMode::AdvOnly, AdaptMode::AdvPlusSiamese] {
            let t = Instant::now();
            let (ck, log) = adapt_target(&run.checkpoint, &split.train, &unl, &cfg, mode)?;
            let r = evaluate(&ck.bundle, MapperChoice::Target, &tsplit.test, &cfg.input)?;
            let last = log.last().unwrap();
            println!(
                "  {mode}: {:.1}s | patch {:.3} slide {:.3} | last d {:.3} m {:.3} s {:?}",
                t.elapsed().as_secs_f64(),
                r.patch_accuracy,
                r.slide_accuracy,
                last.l_adv_d.unwrap(),
                last.l_adv_m.unwrap(),
                last.l_s
            );
        }
    }
    Ok(())
}
