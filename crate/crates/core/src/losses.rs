//! Training objectives. Every loss is a mini-batch mean; logarithm arguments
//! are clamped from below at [`EPSILON`]. The `*_grad` variants also return
//! the gradient with respect to the loss inputs.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::nn::{softmax_rows, Matrix};

pub const EPSILON: f64 = 1e-7;

/// `ln(max(x, eps))` and its derivative (zero inside the clamp).
fn clamped_ln(x: f64, eps: f64) -> (f64, f64) {
    if x > eps {
        (x.ln(), 1.0 / x)
    } else {
        (eps.ln(), 0.0)
    }
}

fn check_one_hot(labels: &Matrix) -> Result<()> {
    for r in 0..labels.rows {
        let row = labels.row(r);
        let ones = row.iter().filter(|&&v| v == 1.0).count();
        let zeros = row.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || ones + zeros != row.len() {
            return Err(Error::InvalidInput(format!("label row {r} is not one-hot: {row:?}")));
        }
    }
    Ok(())
}

/// Cross-entropy of softmax(logits) against one-hot labels.
pub fn classification_loss(logits: &Matrix, labels: &Matrix) -> Result<f64> {
    classification_loss_grad(logits, labels, EPSILON).map(|(l, _)| l)
}

pub fn classification_loss_grad(logits: &Matrix, labels: &Matrix, eps: f64) -> Result<(f64, Matrix)> {
    if (logits.rows, logits.cols) != (labels.rows, labels.cols) || logits.rows == 0 {
        return Err(Error::Shape(format!(
            "logits {}x{} vs labels {}x{}",
            logits.rows, logits.cols, labels.rows, labels.cols
        )));
    }
    check_one_hot(labels)?;
    let probs = softmax_rows(logits);
    let b = logits.rows as f64;
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(logits.rows, logits.cols);
    for r in 0..logits.rows {
        let p = probs.row(r);
        let y = labels.row(r);
        // d loss / d p_k, then through the softmax Jacobian.
        let dp: Vec<f64> = p
            .iter()
            .zip(y)
            .map(|(&pk, &yk)| {
                let (ln, d) = clamped_ln(pk, eps);
                loss -= yk * ln;
                -yk * d / b
            })
            .collect();
        let dot: f64 = dp.iter().zip(p).map(|(a, b)| a * b).sum();
        for (j, g) in grad.row_mut(r).iter_mut().enumerate() {
            *g = p[j] * (dp[j] - dot);
        }
    }
    Ok((loss / b, grad))
}

fn check_probs(name: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::InvalidInput(format!("{name} is empty")));
    }
    if v.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidInput(format!("{name} has values outside [0, 1]")));
    }
    Ok(())
}

/// Mean of `-ln D(source)` plus mean of `-ln(1 - D(target))`.
pub fn discriminator_loss(d_source: &[f64], d_target: &[f64]) -> Result<f64> {
    discriminator_loss_grad(d_source, d_target, EPSILON).map(|(l, _, _)| l)
}

pub fn discriminator_loss_grad(d_source: &[f64], d_target: &[f64], eps: f64) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    check_probs("d_source", d_source)?;
    check_probs("d_target", d_target)?;
    let (bs, bt) = (d_source.len() as f64, d_target.len() as f64);
    let mut loss = 0.0;
    let gs = d_source
        .iter()
        .map(|&p| {
            let (ln, d) = clamped_ln(p, eps);
            loss -= ln / bs;
            -d / bs
        })
        .collect();
    let gt = d_target
        .iter()
        .map(|&p| {
            let (ln, d) = clamped_ln(1.0 - p, eps);
            loss -= ln / bt;
            d / bt
        })
        .collect();
    Ok((loss, gs, gt))
}

/// Inverted-label generator loss: mean of `-ln D(target)`.
pub fn mapping_loss(d_target: &[f64]) -> Result<f64> {
    mapping_loss_grad(d_target, EPSILON).map(|(l, _)| l)
}

pub fn mapping_loss_grad(d_target: &[f64], eps: f64) -> Result<(f64, Vec<f64>)> {
    check_probs("d_target", d_target)?;
    let b = d_target.len() as f64;
    let mut loss = 0.0;
    let g = d_target
        .iter()
        .map(|&p| {
            let (ln, d) = clamped_ln(p, eps);
            loss -= ln / b;
            -d / b
        })
        .collect();
    Ok((loss, g))
}

/// Binary cross-entropy of same-slide probabilities against 0/1 labels.
pub fn siamese_loss(pair_probs: &[f64], pair_labels: &[f64]) -> Result<f64> {
    siamese_loss_grad(pair_probs, pair_labels, EPSILON).map(|(l, _)| l)
}

pub fn siamese_loss_grad(pair_probs: &[f64], pair_labels: &[f64], eps: f64) -> Result<(f64, Vec<f64>)> {
    check_probs("pair_probs", pair_probs)?;
    if pair_probs.len() != pair_labels.len() {
        return Err(Error::Shape(format!(
            "{} probabilities vs {} labels",
            pair_probs.len(),
            pair_labels.len()
        )));
    }
    if pair_labels.iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::InvalidInput("pair labels must be 0 or 1".into()));
    }
    let b = pair_probs.len() as f64;
    let mut loss = 0.0;
    let g = pair_probs
        .iter()
        .zip(pair_labels)
        .map(|(&p, &y)| {
            let (lp, dp) = clamped_ln(p, eps);
            let (lq, dq) = clamped_ln(1.0 - p, eps);
            loss -= (y * lp + (1.0 - y) * lq) / b;
            (-y * dp + (1.0 - y) * dq) / b
        })
        .collect();
    Ok((loss, g))
}

/// Adversarial objective used for reporting; each parameter set is still
/// optimized on its own term.
pub fn combine_adversarial(l_adv_d: f64, l_adv_m: f64) -> f64 {
    l_adv_d + l_adv_m
}

/// Total target objective: adversarial plus Siamese, unweighted.
pub fn combine_total(l_a: f64, l_s: f64) -> f64 {
    l_a + l_s
}

/// Named loss values computed at one training step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossReport {
    pub step: u64,
    pub l_c: Option<f64>,
    pub l_adv_d: Option<f64>,
    pub l_adv_m: Option<f64>,
    pub l_a: Option<f64>,
    pub l_s: Option<f64>,
    pub l_t: Option<f64>,
}

impl LossReport {
    /// Fill in the derived sums from whichever terms are present.
    pub fn with_derived(mut self) -> Self {
        if let (Some(d), Some(m)) = (self.l_adv_d, self.l_adv_m) {
            self.l_a = Some(combine_adversarial(d, m));
        }
        if let (Some(a), Some(s)) = (self.l_a, self.l_s) {
            self.l_t = Some(combine_total(a, s));
        }
        self
    }

    pub fn fields(&self) -> [(&'static str, Option<f64>); 6] {
        [
            ("l_c", self.l_c),
            ("l_adv_d", self.l_adv_d),
            ("l_adv_m", self.l_adv_m),
            ("l_a", self.l_a),
            ("l_s", self.l_s),
            ("l_t", self.l_t),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.fields().iter().all(|(_, v)| v.is_none_or(f64::is_finite))
    }

    /// One training-log record: `step=<n> <name>=<value> ...`, values printed
    /// with 17 significant digits.
    pub fn to_log_line(&self) -> String {
        let mut s = format!("step={}", self.step);
        for (name, v) in self.fields() {
            if let Some(v) = v {
                let _ = write!(s, " {name}={v:.16e}");
            }
        }
        s
    }

    pub fn parse_log_line(line: &str, line_no: usize) -> Result<Self> {
        let mut report = LossReport::default();
        let mut saw_step = false;
        for token in line.split_whitespace() {
            let (key, value) = token.split_once('=').ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("expected key=value, got `{token}`"),
            })?;
            let bad = |m: &str| Error::Parse {
                line: line_no,
                message: format!("{key}: {m}"),
            };
            if key == "step" {
                report.step = value.parse().map_err(|_| bad("not an integer"))?;
                saw_step = true;
                continue;
            }
            let v: f64 = value.parse().map_err(|_| bad("not a number"))?;
            let slot = match key {
                "l_c" => &mut report.l_c,
                "l_adv_d" => &mut report.l_adv_d,
                "l_adv_m" => &mut report.l_adv_m,
                "l_a" => &mut report.l_a,
                "l_s" => &mut report.l_s,
                "l_t" => &mut report.l_t,
                _ => return Err(bad("unknown field")),
            };
            *slot = Some(v);
        }
        if !saw_step {
            return Err(Error::Parse {
                line: line_no,
                message: "missing step".into(),
            });
        }
        Ok(report)
    }
}

/// Write a training log, one record per line.
pub fn write_log(path: &std::path::Path, log: &[LossReport]) -> Result<()> {
    let mut text = String::new();
    for r in log {
        text.push_str(&r.to_log_line());
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_log(path: &std::path::Path) -> Result<Vec<LossReport>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::data(path, format!("cannot read training log: {e}")))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| LossReport::parse_log_line(l, i + 1))
        .collect()
}
