//! Central finite-difference gradient checks.

use histo_adapt::nn::Parameterized;
use histo_adapt::rng::rng_for;
use rand::Rng as _;

pub const STEP: f64 = 1e-3;
pub const TOLERANCE: f64 = 1e-4;
/// Denominator floor so that two near-zero gradients do not register as a
/// large relative error.
const FLOOR: f64 = 1e-8;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

#[derive(Debug, Default, Clone)]
pub struct CheckStats {
    pub checked: usize,
    pub max_rel: f64,
    pub worst: String,
}

impl CheckStats {
    fn record(&mut self, what: String, analytic: f64, numeric: f64) {
        let rel = relative_error(analytic, numeric);
        self.checked += 1;
        if rel > self.max_rel || self.worst.is_empty() {
            self.max_rel = self.max_rel.max(rel);
            self.worst = format!("{what}: analytic {analytic:.6e} numeric {numeric:.6e}");
        }
    }

    pub fn merge(&mut self, other: CheckStats) {
        self.checked += other.checked;
        if other.max_rel >= self.max_rel {
            self.max_rel = other.max_rel;
            self.worst = other.worst;
        }
    }

    pub fn passed(&self) -> bool {
        self.checked > 0 && self.max_rel <= TOLERANCE
    }
}

/// Gradient with respect to a flat input vector.
pub fn check_inputs(name: &str, x: &[f64], analytic: &[f64], f: impl Fn(&[f64]) -> f64) -> CheckStats {
    assert_eq!(x.len(), analytic.len());
    let mut stats = CheckStats::default();
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        xp[i] = x[i] + STEP;
        let up = f(&xp);
        xp[i] = x[i] - STEP;
        let down = f(&xp);
        xp[i] = x[i];
        stats.record(format!("{name}[{i}]"), analytic[i], (up - down) / (2.0 * STEP));
    }
    stats
}

/// Gradient with respect to up to `per_param` sampled entries of every
/// parameter array. `backward` must leave the gradients of `loss` in the
/// network's parameter `grad` fields.
pub fn check_params<N: Parameterized + Clone>(
    net: &N,
    per_param: usize,
    seed: u64,
    loss: impl Fn(&N) -> f64,
    backward: impl Fn(&mut N),
) -> CheckStats {
    let mut with_grads = net.clone();
    with_grads.zero_grad();
    backward(&mut with_grads);
    let grads: Vec<(String, Vec<f64>)> = with_grads
        .named_params()
        .into_iter()
        .map(|(n, p)| (n, p.grad.clone()))
        .collect();

    let mut rng = rng_for(seed, &[]);
    let mut stats = CheckStats::default();
    for (pi, (name, grad)) in grads.iter().enumerate() {
        let picks: Vec<usize> = if grad.len() <= per_param {
            (0..grad.len()).collect()
        } else {
            (0..per_param).map(|_| rng.random_range(0..grad.len())).collect()
        };
        for ei in picks {
            let eval = |delta: f64| {
                let mut n = net.clone();
                n.params_mut()[pi].value[ei] += delta;
                loss(&n)
            };
            let numeric = (eval(STEP) - eval(-STEP)) / (2.0 * STEP);
            stats.record(format!("{name}[{ei}]"), grad[ei], numeric);
        }
    }
    stats
}
