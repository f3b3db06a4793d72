use crate::error::{Error, Result};
use crate::ingest::GradeLabel;

/// Patch votes and the resulting slide grade.
#[derive(Debug, Clone, PartialEq)]
pub struct Vote {
    pub patch_votes: Vec<GradeLabel>,
    pub slide_grade: GradeLabel,
    pub mean_high_prob: f64,
}

/// Each patch votes High iff its probability is at least 0.5; the majority
/// wins and a tie goes to High iff the mean probability is at least 0.5.
pub fn vote_slide(patch_probs: &[f64]) -> Result<Vote> {
    if patch_probs.is_empty() {
        return Err(Error::NoPatches("cannot vote over zero patches".into()));
    }
    let patch_votes: Vec<GradeLabel> = patch_probs
        .iter()
        .map(|&p| if p >= 0.5 { GradeLabel::High } else { GradeLabel::Low })
        .collect();
    let high = patch_votes.iter().filter(|&&v| v == GradeLabel::High).count();
    let low = patch_votes.len() - high;
    let mean_high_prob = patch_probs.iter().sum::<f64>() / patch_probs.len() as f64;
    let slide_grade = match high.cmp(&low) {
        std::cmp::Ordering::Greater => GradeLabel::High,
        std::cmp::Ordering::Less => GradeLabel::Low,
        std::cmp::Ordering::Equal if mean_high_prob >= 0.5 => GradeLabel::High,
        std::cmp::Ordering::Equal => GradeLabel::Low,
    };
    Ok(Vote {
        patch_votes,
        slide_grade,
        mean_high_prob,
    })
}

/// Per-slide prediction with patch probabilities aligned to grid positions.
#[derive(Debug, Clone, PartialEq)]
pub struct SlidePrediction {
    pub slide_id: String,
    pub grid_pos: Vec<(u32, u32)>,
    pub patch_probs: Vec<f64>,
    pub patch_votes: Vec<GradeLabel>,
    pub slide_grade: GradeLabel,
    pub mean_high_prob: f64,
}

impl SlidePrediction {
    pub fn new(slide_id: impl Into<String>, grid_pos: Vec<(u32, u32)>, patch_probs: Vec<f64>) -> Result<Self> {
        let slide_id = slide_id.into();
        if grid_pos.len() != patch_probs.len() {
            return Err(Error::InvalidInput(format!(
                "slide {slide_id}: {} positions for {} probabilities",
                grid_pos.len(),
                patch_probs.len()
            )));
        }
        let vote = vote_slide(&patch_probs).map_err(|_| Error::NoPatches(slide_id.clone()))?;
        Ok(SlidePrediction {
            slide_id,
            grid_pos,
            patch_probs,
            patch_votes: vote.patch_votes,
            slide_grade: vote.slide_grade,
            mean_high_prob: vote.mean_high_prob,
        })
    }
}

/// Binary confusion counts with Low as negative and High as positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tp: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tn + self.fp + self.fn_ + self.tp
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            return 0.0;
        }
        (self.tn + self.tp) as f64 / self.total() as f64
    }
}

pub fn confusion(preds: &[GradeLabel], truths: &[GradeLabel]) -> Result<ConfusionMatrix> {
    if preds.len() != truths.len() {
        return Err(Error::InvalidInput(format!(
            "{} predictions for {} labels",
            preds.len(),
            truths.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::InvalidInput("confusion over zero items".into()));
    }
    let mut m = ConfusionMatrix::default();
    for (p, t) in preds.iter().zip(truths) {
        match (p, t) {
            (GradeLabel::Low, GradeLabel::Low) => m.tn += 1,
            (GradeLabel::High, GradeLabel::Low) => m.fp += 1,
            (GradeLabel::Low, GradeLabel::High) => m.fn_ += 1,
            (GradeLabel::High, GradeLabel::High) => m.tp += 1,
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McNemarResult {
    /// First classifier correct, second wrong.
    pub b: usize,
    /// First classifier wrong, second correct.
    pub c: usize,
    pub p_value: f64,
}

/// Exact two-sided binomial p-value for `b` vs `c` discordant pairs.
pub fn mcnemar_p_value(b: usize, c: usize) -> f64 {
    let n = b + c;
    if n == 0 {
        return 1.0;
    }
    // ln C(n, k) from cumulative log factorials.
    let mut ln_fact = vec![0.0f64; n + 1];
    for i in 1..=n {
        ln_fact[i] = ln_fact[i - 1] + (i as f64).ln();
    }
    let ln_half_n = n as f64 * std::f64::consts::LN_2;
    let tail: f64 = (b.max(c)..=n)
        .map(|k| (ln_fact[n] - ln_fact[k] - ln_fact[n - k] - ln_half_n).exp())
        .sum();
    (2.0 * tail).min(1.0)
}

pub fn mcnemar(correct_a: &[bool], correct_b: &[bool]) -> Result<McNemarResult> {
    if correct_a.len() != correct_b.len() {
        return Err(Error::InvalidInput(format!(
            "paired lists differ in length: {} vs {}",
            correct_a.len(),
            correct_b.len()
        )));
    }
    let b = correct_a.iter().zip(correct_b).filter(|(&a, &b)| a && !b).count();
    let c = correct_a.iter().zip(correct_b).filter(|(&a, &b)| !a && b).count();
    Ok(McNemarResult {
        b,
        c,
        p_value: mcnemar_p_value(b, c),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use GradeLabel::{High as H, Low as L};

    #[test]
    fn votes_follow_majority_and_tie_break() {
        assert_eq!(vote_slide(&[0.9, 0.8, 0.2]).unwrap().patch_votes, vec![H, H, L]);
        assert_eq!(vote_slide(&[0.9, 0.8, 0.2]).unwrap().slide_grade, H);
        assert_eq!(vote_slide(&[0.1, 0.2, 0.3]).unwrap().slide_grade, L);
        assert_eq!(vote_slide(&[0.9, 0.2]).unwrap().slide_grade, H);
        assert_eq!(vote_slide(&[0.6, 0.1]).unwrap().slide_grade, L);
        assert_eq!(vote_slide(&[0.5, 0.5]).unwrap().slide_grade, H);
        assert!(matches!(vote_slide(&[]), Err(Error::NoPatches(_))));
    }

    #[test]
    fn confusion_examples() {
        let m = confusion(&[L, H, L], &[L, H, L]).unwrap();
        assert_eq!((m.tn, m.tp, m.accuracy()), (2, 1, 1.0));
        let m = confusion(&[H; 4], &[L; 4]).unwrap();
        assert_eq!((m.fp, m.accuracy()), (4, 0.0));
        let m = confusion(&[H, L], &[L, H]).unwrap();
        assert_eq!((m.fp, m.fn_, m.accuracy()), (1, 1, 0.0));
        assert!(confusion(&[H], &[H, L]).is_err());
    }

    #[test]
    fn mcnemar_examples() {
        assert_eq!(mcnemar_p_value(0, 0), 1.0);
        assert!((mcnemar_p_value(10, 2) - 0.038574).abs() < 1e-6);
        assert!((mcnemar_p_value(0, 5) - 0.0625).abs() < 1e-12);
        assert_eq!(mcnemar_p_value(3, 3), 1.0);
        let r = mcnemar(&[true, true, false, false], &[false, true, true, true]).unwrap();
        assert_eq!((r.b, r.c), (1, 2));
    }
}
