use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::ingest::{InputMode, Slide};
use crate::losses::discriminator_loss_grad;
use crate::networks::{Discriminator, Mapper, ModelBundle};
use crate::nn::{Adam, Matrix, Mode, Parameterized};
use crate::rng::{rng_for, TAG_PROBE};

use super::data::{all_patches, input_batch};
use super::predict::MapperChoice;
use super::TrainConfig;

const PROBE_EPOCHS: usize = 200;
const PROBE_LR: f64 = 1e-3;

fn features(mapper: &Mapper, slides: &[Slide], config: &TrainConfig) -> Result<Vec<Vec<f64>>> {
    let refs = all_patches(slides);
    let mut out = Vec::with_capacity(refs.len());
    for chunk in refs.chunks(64) {
        let x = input_batch(slides, chunk, &config.input, InputMode::Eval, |_| 0)?;
        let (f, _) = mapper.forward(&x, Mode::Eval)?;
        out.extend((0..f.rows).map(|r| f.row(r).to_vec()));
    }
    Ok(out)
}

/// Held-out accuracy of a freshly trained domain discriminator that tells
/// source features (source mapper) from target features (`which` mapper).
///
/// Features of each domain are shuffled and halved; the probe is trained on
/// one half with full-batch steps and scored on the other. Lower means the
/// two feature distributions are harder to tell apart.
pub fn domain_probe_accuracy(
    bundle: &ModelBundle,
    which: MapperChoice,
    source: &[Slide],
    target: &[Slide],
    config: &TrainConfig,
) -> Result<f64> {
    let target_mapper = match which {
        MapperChoice::Source => &bundle.source.mapper,
        MapperChoice::Target => bundle
            .target
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("checkpoint has no target mapper".into()))?,
    };
    let mut fs = features(&bundle.source.mapper, source, config)?;
    let mut ft = features(target_mapper, target, config)?;
    if fs.len() < 2 || ft.len() < 2 {
        return Err(Error::InvalidInput("probe needs at least two patches per domain".into()));
    }
    let mut rng = rng_for(config.seed, &[TAG_PROBE]);
    fs.shuffle(&mut rng);
    ft.shuffle(&mut rng);
    let (fs_fit, fs_test) = fs.split_at(fs.len() / 2);
    let (ft_fit, ft_test) = ft.split_at(ft.len() / 2);
    let fit = Matrix::from_rows(&[fs_fit, ft_fit].concat())?;
    let test = Matrix::from_rows(&[fs_test, ft_test].concat())?;

    let mut disc = Discriminator::new(
        bundle.arch.feature_dim(),
        bundle.arch.discriminator_hidden,
        bundle.arch.leaky_slope,
        &mut rng,
    );
    let mut adam = Adam::new(config.adam);
    let n_src = fs_fit.len();
    for _ in 0..PROBE_EPOCHS {
        disc.zero_grad();
        let (p, trace) = disc.forward(&fit)?;
        let (_, gs, gt) = discriminator_loss_grad(&p.data[..n_src], &p.data[n_src..], config.epsilon)?;
        let mut dp = Matrix::zeros(fit.rows, 1);
        dp.data[..n_src].copy_from_slice(&gs);
        dp.data[n_src..].copy_from_slice(&gt);
        disc.backward(&trace, &dp);
        adam.step(&mut [(PROBE_LR, disc.params_mut())]);
    }
    let p = disc.discriminate(&test)?;
    let n_src_test = fs_test.len();
    let correct = p
        .data
        .iter()
        .enumerate()
        .filter(|&(i, &v)| (v >= 0.5) == (i < n_src_test))
        .count();
    Ok(correct as f64 / p.data.len() as f64)
}
