use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::config::fmt_f64;
use crate::error::{Error, Result};
use crate::ingest::{GradeLabel, InputSpec, Slide};
use crate::networks::ModelBundle;
use crate::training::{predict_patches, MapperChoice};

use super::stats::{confusion, mcnemar, ConfusionMatrix, McNemarResult, SlidePrediction};

const REPORT_HEADER: &str = "# evaluation report v1";
const COMPARISON_HEADER: &str = "# comparison report v1";

/// One slide's outcome inside an [`EvalReport`].
#[derive(Debug, Clone, PartialEq)]
pub struct SlideLine {
    pub slide_id: String,
    pub truth: GradeLabel,
    pub pred: GradeLabel,
    pub mean_high_prob: f64,
    pub patches: usize,
    pub high_votes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mapper: MapperChoice,
    pub patch_accuracy: f64,
    pub slide_accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub slides: Vec<SlideLine>,
}

pub fn predict_slides(
    bundle: &ModelBundle,
    which: MapperChoice,
    slides: &[Slide],
    spec: &InputSpec,
) -> Result<Vec<SlidePrediction>> {
    let probs = predict_patches(bundle, which, slides, spec)?;
    slides
        .iter()
        .zip(probs)
        .map(|(s, p)| SlidePrediction::new(&s.slide_id, s.patches.iter().map(|x| x.grid_pos).collect(), p))
        .collect()
}

/// Patch accuracy counts every patch against its slide's label.
pub fn evaluate(bundle: &ModelBundle, which: MapperChoice, slides: &[Slide], spec: &InputSpec) -> Result<EvalReport> {
    let truths = slides
        .iter()
        .map(|s| {
            s.grade
                .ok_or_else(|| Error::InvalidInput(format!("slide {} has no grade label", s.slide_id)))
        })
        .collect::<Result<Vec<_>>>()?;
    let preds = predict_slides(bundle, which, slides, spec)?;
    EvalReport::from_predictions(which, &preds, &truths)
}

impl EvalReport {
    pub fn from_predictions(mapper: MapperChoice, preds: &[SlidePrediction], truths: &[GradeLabel]) -> Result<Self> {
        let grades: Vec<GradeLabel> = preds.iter().map(|p| p.slide_grade).collect();
        let confusion = confusion(&grades, truths)?;
        let (mut hit, mut total) = (0usize, 0usize);
        let mut slides = Vec::with_capacity(preds.len());
        for (p, &t) in preds.iter().zip(truths) {
            hit += p.patch_votes.iter().filter(|&&v| v == t).count();
            total += p.patch_votes.len();
            slides.push(SlideLine {
                slide_id: p.slide_id.clone(),
                truth: t,
                pred: p.slide_grade,
                mean_high_prob: p.mean_high_prob,
                patches: p.patch_votes.len(),
                high_votes: p.patch_votes.iter().filter(|&&v| v == GradeLabel::High).count(),
            });
        }
        Ok(EvalReport {
            mapper,
            patch_accuracy: hit as f64 / total as f64,
            slide_accuracy: confusion.accuracy(),
            confusion,
            slides,
        })
    }

    pub fn n_patches(&self) -> usize {
        self.slides.iter().map(|s| s.patches).sum()
    }

    /// Per-slide correctness keyed by slide id.
    pub fn correctness(&self) -> BTreeMap<&str, bool> {
        self.slides.iter().map(|s| (s.slide_id.as_str(), s.truth == s.pred)).collect()
    }

    pub fn to_text(&self) -> String {
        let c = &self.confusion;
        let mut out = String::new();
        writeln!(out, "{REPORT_HEADER}").unwrap();
        writeln!(out, "mapper = {}", self.mapper).unwrap();
        writeln!(out, "n_slides = {}", self.slides.len()).unwrap();
        writeln!(out, "n_patches = {}", self.n_patches()).unwrap();
        writeln!(out, "patch_accuracy = {}", fmt_f64(self.patch_accuracy)).unwrap();
        writeln!(out, "slide_accuracy = {}", fmt_f64(self.slide_accuracy)).unwrap();
        writeln!(out, "confusion tn={} fp={} fn={} tp={}", c.tn, c.fp, c.fn_, c.tp).unwrap();
        for s in &self.slides {
            writeln!(
                out,
                "slide id={} truth={} pred={} mean_high_prob={} patches={} high_votes={}",
                s.slide_id,
                s.truth,
                s.pred,
                fmt_f64(s.mean_high_prob),
                s.patches,
                s.high_votes
            )
            .unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
        match lines.next() {
            Some((_, l)) if l == REPORT_HEADER => {}
            _ => return Err(parse_err(1, "missing evaluation report header")),
        }
        let mut scalars = BTreeMap::new();
        let mut conf = None;
        let mut slides = Vec::new();
        for (n, line) in lines {
            if let Some(rest) = line.strip_prefix("confusion ") {
                let f = fields(rest, n)?;
                conf = Some(ConfusionMatrix {
                    tn: num(&f, "tn", n)?,
                    fp: num(&f, "fp", n)?,
                    fn_: num(&f, "fn", n)?,
                    tp: num(&f, "tp", n)?,
                });
            } else if let Some(rest) = line.strip_prefix("slide ") {
                let f = fields(rest, n)?;
                slides.push(SlideLine {
                    slide_id: get(&f, "id", n)?.to_string(),
                    truth: grade(get(&f, "truth", n)?, n)?,
                    pred: grade(get(&f, "pred", n)?, n)?,
                    mean_high_prob: num(&f, "mean_high_prob", n)?,
                    patches: num(&f, "patches", n)?,
                    high_votes: num(&f, "high_votes", n)?,
                });
            } else if let Some((k, v)) = line.split_once('=') {
                scalars.insert(k.trim().to_string(), (n, v.trim().to_string()));
            } else {
                return Err(parse_err(n, format!("unrecognized line `{line}`")));
            }
        }
        let scalar = |k: &str| {
            scalars
                .get(k)
                .map(|(n, v)| (*n, v.as_str()))
                .ok_or_else(|| parse_err(0, format!("missing `{k}`")))
        };
        let (n, m) = scalar("mapper")?;
        let mapper = m.parse().map_err(|_| parse_err(n, format!("bad mapper `{m}`")))?;
        let float = |k: &str| -> Result<f64> {
            let (n, v) = scalar(k)?;
            v.parse().map_err(|_| parse_err(n, format!("bad number for `{k}`")))
        };
        let report = EvalReport {
            mapper,
            patch_accuracy: float("patch_accuracy")?,
            slide_accuracy: float("slide_accuracy")?,
            confusion: conf.ok_or_else(|| parse_err(0, "missing confusion line"))?,
            slides,
        };
        let (n, v) = scalar("n_slides")?;
        if v.parse::<usize>().ok() != Some(report.slides.len()) {
            return Err(parse_err(n, "n_slides does not match the slide lines"));
        }
        Ok(report)
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn fields(rest: &str, line: usize) -> Result<BTreeMap<&str, &str>> {
    rest.split_whitespace()
        .map(|kv| kv.split_once('=').ok_or_else(|| parse_err(line, format!("expected key=value, got `{kv}`"))))
        .collect()
}

fn get<'a>(f: &BTreeMap<&str, &'a str>, k: &str, line: usize) -> Result<&'a str> {
    f.get(k).copied().ok_or_else(|| parse_err(line, format!("missing field `{k}`")))
}

fn num<T: std::str::FromStr>(f: &BTreeMap<&str, &str>, k: &str, line: usize) -> Result<T> {
    get(f, k, line)?
        .parse()
        .map_err(|_| parse_err(line, format!("bad value for `{k}`")))
}

fn grade(s: &str, line: usize) -> Result<GradeLabel> {
    GradeLabel::parse(s).ok_or_else(|| parse_err(line, format!("bad grade `{s}`")))
}

/// Paired comparison of two evaluations over the same slides.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub a_slide_accuracy: f64,
    pub b_slide_accuracy: f64,
    pub mcnemar: McNemarResult,
}

impl Comparison {
    pub fn to_text(&self) -> String {
        format!(
            "{COMPARISON_HEADER}\na_slide_accuracy = {}\nb_slide_accuracy = {}\nmcnemar_b = {}\nmcnemar_c = {}\np_value = {}\n",
            fmt_f64(self.a_slide_accuracy),
            fmt_f64(self.b_slide_accuracy),
            self.mcnemar.b,
            self.mcnemar.c,
            fmt_f64(self.mcnemar.p_value)
        )
    }
}

pub fn compare(a: &EvalReport, b: &EvalReport) -> Result<Comparison> {
    let ca = a.correctness();
    let cb = b.correctness();
    if ca.len() != a.slides.len() || cb.len() != b.slides.len() {
        return Err(Error::InvalidInput("duplicate slide ids in a report".into()));
    }
    if !ca.keys().eq(cb.keys()) {
        return Err(Error::InvalidInput("reports cover different slides".into()));
    }
    let xa: Vec<bool> = ca.values().copied().collect();
    let xb: Vec<bool> = cb.values().copied().collect();
    Ok(Comparison {
        a_slide_accuracy: a.slide_accuracy,
        b_slide_accuracy: b.slide_accuracy,
        mcnemar: mcnemar(&xa, &xb)?,
    })
}

/// Accuracy summary with one row per method.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultsTable {
    /// (method, slide accuracy in [0, 1], extra columns)
    pub rows: Vec<(String, f64, Vec<(String, String)>)>,
}

impl ResultsTable {
    pub fn push(&mut self, method: impl Into<String>, accuracy: f64, extra: Vec<(String, String)>) {
        self.rows.push((method.into(), accuracy, extra));
    }

    /// Markdown table; extra columns are taken from the first row's keys.
    pub fn to_markdown(&self) -> String {
        let extra_keys: Vec<String> = self
            .rows
            .first()
            .map(|r| r.2.iter().map(|(k, _)| k.clone()).collect())
            .unwrap_or_default();
        let mut out = String::from("| Method | Accuracy (%) |");
        for k in &extra_keys {
            write!(out, " {k} |").unwrap();
        }
        out.push_str("\n|---|---|");
        for _ in &extra_keys {
            out.push_str("---|");
        }
        out.push('\n');
        for (m, acc, extra) in &self.rows {
            write!(out, "| {m} | {:.1} |", 100.0 * acc).unwrap();
            for k in &extra_keys {
                let v = extra.iter().find(|(kk, _)| kk == k).map_or("-", |(_, v)| v.as_str());
                write!(out, " {v} |").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(probs: &[(&str, GradeLabel, Vec<f64>)]) -> EvalReport {
        let preds: Vec<SlidePrediction> = probs
            .iter()
            .map(|(id, _, p)| SlidePrediction::new(*id, (0..p.len() as u32).map(|i| (0, i)).collect(), p.clone()).unwrap())
            .collect();
        let truths: Vec<GradeLabel> = probs.iter().map(|x| x.1).collect();
        EvalReport::from_predictions(MapperChoice::Target, &preds, &truths).unwrap()
    }

    #[test]
    fn perfect_probabilities_give_full_accuracy() {
        let r = report(&[("a", GradeLabel::High, vec![1.0, 1.0]), ("b", GradeLabel::Low, vec![0.0])]);
        assert_eq!((r.slide_accuracy, r.patch_accuracy), (1.0, 1.0));
    }

    #[test]
    fn all_half_probabilities_vote_high() {
        let r = report(&[
            ("a", GradeLabel::High, vec![0.5, 0.5]),
            ("b", GradeLabel::Low, vec![0.5]),
            ("c", GradeLabel::Low, vec![0.5, 0.5, 0.5]),
        ]);
        assert!(r.slides.iter().all(|s| s.pred == GradeLabel::High));
        assert!((r.slide_accuracy - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn text_round_trip() {
        let r = report(&[("a", GradeLabel::High, vec![0.3, 0.9, 0.7]), ("b", GradeLabel::Low, vec![0.1 + 0.2])]);
        let back = EvalReport::parse(&r.to_text()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn compare_counts_discordant_slides() {
        let a = report(&[("a", GradeLabel::High, vec![0.9]), ("b", GradeLabel::Low, vec![0.9])]);
        let b = report(&[("a", GradeLabel::High, vec![0.1]), ("b", GradeLabel::Low, vec![0.1])]);
        let c = compare(&a, &b).unwrap();
        assert_eq!((c.mcnemar.b, c.mcnemar.c), (1, 1));
        let other = report(&[("z", GradeLabel::High, vec![0.9]), ("b", GradeLabel::Low, vec![0.9])]);
        assert!(compare(&a, &other).is_err());
    }

    #[test]
    fn table_renders_percentages() {
        let mut t = ResultsTable::default();
        t.push("Baseline", 0.543, vec![]);
        assert!(t.to_markdown().contains("| Baseline | 54.3 |"));
    }
}
