//! Reference evaluators written without the library's code paths.

/// Discriminator objective evaluated term by term.
pub fn discriminator_loss(ds: &[f64], dt: &[f64]) -> f64 {
    let mut a = 0.0;
    for &p in ds {
        a += -p.ln();
    }
    let mut b = 0.0;
    for &p in dt {
        b += -(1.0 - p).ln();
    }
    a / ds.len() as f64 + b / dt.len() as f64
}

pub fn mapping_loss(dt: &[f64]) -> f64 {
    dt.iter().map(|p| -p.ln()).sum::<f64>() / dt.len() as f64
}

pub fn siamese_loss(p: &[f64], y: &[f64]) -> f64 {
    p.iter()
        .zip(y)
        .map(|(&p, &y)| if y == 1.0 { -p.ln() } else { -(1.0 - p).ln() })
        .sum::<f64>()
        / p.len() as f64
}

pub fn classification_loss(logits: &[[f64; 2]], labels: &[usize]) -> f64 {
    logits
        .iter()
        .zip(labels)
        .map(|(z, &y)| {
            let m = z[0].max(z[1]);
            let lse = m + ((z[0] - m).exp() + (z[1] - m).exp()).ln();
            lse - z[y]
        })
        .sum::<f64>()
        / logits.len() as f64
}

/// Two-sided exact McNemar p-value by enumerating all 2^n assignments of the
/// n = b + c discordant pairs under the fair-coin null.
pub fn mcnemar_brute_force(b: usize, c: usize) -> f64 {
    let n = b + c;
    if n == 0 {
        return 1.0;
    }
    let k = b.max(c);
    let total = 1u64 << n;
    let hits = (0..total).filter(|m| m.count_ones() as usize >= k).count();
    (2.0 * hits as f64 / total as f64).min(1.0)
}
