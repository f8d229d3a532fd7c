//! Overlap (BLEU-4, ROUGE-1/2/L) and informativeness (ToolACC, ThemeACC)
//! metrics, plus cross-model dispersion.

mod entity;
mod overlap;
mod tokenize;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use entity::{entity_acc, Lexicon};
pub use overlap::{
    bleu4, lcs_len, rouge_l, rouge_l_with, rouge_n, rouge_n_with, RougeMode, BLEU_EPSILON,
};
pub use tokenize::{tokenize, TokenSequence};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{predictions} predictions but {references} references")]
    LengthMismatch {
        predictions: usize,
        references: usize,
    },
    #[error("nothing to evaluate")]
    Empty,
    #[error("dispersion needs at least two reports, got {0}")]
    TooFewReports(usize),
}

pub struct Lexicons {
    pub tools: Lexicon,
    pub themes: Lexicon,
}

/// Scores in `[0, 1]`; tables render them ×100.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub model_id: String,
    pub bleu4: f64,
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
    pub tool_acc: f64,
    pub theme_acc: f64,
    #[serde(default)]
    pub pairs: usize,
    /// Pairs whose reference mentions a tool (non-abstaining).
    #[serde(default)]
    pub tool_support: usize,
    #[serde(default)]
    pub theme_support: usize,
}

impl MetricReport {
    pub const COLUMNS: [&'static str; 6] = [
        "BLEU-4", "ROUGE-1", "ROUGE-2", "ROUGE-L", "ToolACC", "ThemeACC",
    ];

    pub fn scores(&self) -> [f64; 6] {
        [
            self.bleu4,
            self.rouge1,
            self.rouge2,
            self.rouge_l,
            self.tool_acc,
            self.theme_acc,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSpread {
    pub bleu4: f64,
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
    pub tool_acc: f64,
    pub theme_acc: f64,
}

impl MetricSpread {
    pub fn values(&self) -> [f64; 6] {
        [
            self.bleu4,
            self.rouge1,
            self.rouge2,
            self.rouge_l,
            self.tool_acc,
            self.theme_acc,
        ]
    }
}

#[derive(Debug, Clone, Copy)]
struct PairScores {
    overlap: [f64; 4],
    tool: Option<f64>,
    theme: Option<f64>,
}

fn score_pair(
    prediction: &str,
    reference: &str,
    lexicons: &Lexicons,
    mode: RougeMode,
) -> PairScores {
    let c = tokenize(prediction);
    let r = tokenize(reference);
    PairScores {
        overlap: [
            bleu4(&c, &r),
            rouge_n_with(&c, &r, 1, mode),
            rouge_n_with(&c, &r, 2, mode),
            rouge_l_with(&c, &r, mode),
        ],
        tool: entity_acc(&c, &r, &lexicons.tools),
        theme: entity_acc(&c, &r, &lexicons.themes),
    }
}

fn mean_present(values: impl Iterator<Item = Option<f64>>) -> (f64, usize) {
    let (sum, n) = values
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        (0.0, 0)
    } else {
        (sum / n as f64, n)
    }
}

/// Corpus means of the six metrics. Pairs abstaining on ToolACC/ThemeACC
/// are left out of that metric's mean; with no supporting pair it is 0.
pub fn evaluate(
    model_id: &str,
    predictions: &[String],
    references: &[String],
    lexicons: &Lexicons,
) -> Result<MetricReport, EvalError> {
    evaluate_with(
        model_id,
        predictions,
        references,
        lexicons,
        RougeMode::Recall,
    )
}

pub fn evaluate_with(
    model_id: &str,
    predictions: &[String],
    references: &[String],
    lexicons: &Lexicons,
    mode: RougeMode,
) -> Result<MetricReport, EvalError> {
    if predictions.len() != references.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            references: references.len(),
        });
    }
    if predictions.is_empty() {
        return Err(EvalError::Empty);
    }
    let scores: Vec<PairScores> = predictions
        .par_iter()
        .zip(references.par_iter())
        .map(|(p, r)| score_pair(p, r, lexicons, mode))
        .collect();
    let n = scores.len() as f64;
    let mut overlap = [0.0; 4];
    for s in &scores {
        for (acc, v) in overlap.iter_mut().zip(s.overlap) {
            *acc += v;
        }
    }
    let (tool_acc, tool_support) = mean_present(scores.iter().map(|s| s.tool));
    let (theme_acc, theme_support) = mean_present(scores.iter().map(|s| s.theme));
    Ok(MetricReport {
        model_id: model_id.to_string(),
        bleu4: overlap[0] / n,
        rouge1: overlap[1] / n,
        rouge2: overlap[2] / n,
        rouge_l: overlap[3] / n,
        tool_acc,
        theme_acc,
        pairs: scores.len(),
        tool_support,
        theme_support,
    })
}

fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Population standard deviation (divide by N) of each metric across
/// reports, on the ×100 scale.
pub fn metric_stddev(reports: &[MetricReport]) -> Result<MetricSpread, EvalError> {
    if reports.len() < 2 {
        return Err(EvalError::TooFewReports(reports.len()));
    }
    let column = |i: usize| {
        let values: Vec<f64> = reports.iter().map(|r| r.scores()[i] * 100.0).collect();
        population_std(&values)
    };
    Ok(MetricSpread {
        bleu4: column(0),
        rouge1: column(1),
        rouge2: column(2),
        rouge_l: column(3),
        tool_acc: column(4),
        theme_acc: column(5),
    })
}

/// Aligned text table, one row per report plus an optional σ row.
pub fn render_table(reports: &[MetricReport], spread: Option<&MetricSpread>) -> String {
    let mut rows: Vec<(String, [f64; 6])> = reports
        .iter()
        .map(|r| (r.model_id.clone(), r.scores().map(|v| v * 100.0)))
        .collect();
    if let Some(s) = spread {
        rows.push(("std (σ)".to_string(), s.values()));
    }
    let name_width = rows
        .iter()
        .map(|(n, _)| n.chars().count())
        .chain(std::iter::once(5))
        .max()
        .unwrap_or(5);
    let mut out = format!("{:<name_width$}", "Model");
    for c in MetricReport::COLUMNS {
        out.push_str(&format!("  {c:>8}"));
    }
    out.push('\n');
    for (name, values) in rows {
        let pad = name_width - name.chars().count();
        out.push_str(&name);
        out.push_str(&" ".repeat(pad));
        for v in values {
            out.push_str(&format!("  {v:>8.2}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lexicons() -> Lexicons {
        Lexicons {
            tools: Lexicon::tools(),
            themes: Lexicon::new(["upper body", "pair of legs"]),
        }
    }

    fn report(id: &str, s: [f64; 6]) -> MetricReport {
        MetricReport {
            model_id: id.into(),
            bleu4: s[0],
            rouge1: s[1],
            rouge2: s[2],
            rouge_l: s[3],
            tool_acc: s[4],
            theme_acc: s[5],
            pairs: 0,
            tool_support: 0,
            theme_support: 0,
        }
    }

    #[test]
    fn identical_predictions_score_one() {
        let refs = vec![
            "Use NextStep to place the upper body on the legs.".to_string(),
            "Great work, now find the pair of legs.".to_string(),
        ];
        let r = evaluate("m", &refs, &refs, &lexicons()).unwrap();
        for v in r.scores() {
            assert!((v - 1.0).abs() < 1e-12, "{r:?}");
        }
        assert_eq!((r.tool_support, r.theme_support), (1, 2));
    }

    #[test]
    fn length_mismatch() {
        let err = evaluate("m", &["a".into()], &["a".into(), "b".into()], &lexicons());
        assert_eq!(
            err.unwrap_err(),
            EvalError::LengthMismatch {
                predictions: 1,
                references: 2
            }
        );
    }

    #[test]
    fn corpus_scores_are_means_of_pair_scores() {
        let lex = lexicons();
        let preds = vec![
            "the cat sat".to_string(),
            "Call NextStep please".to_string(),
        ];
        let refs = vec![
            "the cat sat down".to_string(),
            "Call Explode and NextStep now".to_string(),
        ];
        let r = evaluate("m", &preds, &refs, &lex).unwrap();
        let pairs: Vec<_> = preds
            .iter()
            .zip(&refs)
            .map(|(p, q)| {
                let (c, t) = (tokenize(p), tokenize(q));
                [
                    bleu4(&c, &t),
                    rouge_n(&c, &t, 1),
                    rouge_n(&c, &t, 2),
                    rouge_l(&c, &t),
                ]
            })
            .collect();
        for (i, score) in r.scores()[..4].iter().enumerate() {
            let mean = (pairs[0][i] + pairs[1][i]) / 2.0;
            assert!((score - mean).abs() < 1e-12);
        }
        // only the second pair mentions tools: 1 of 2
        assert_eq!((r.tool_acc, r.tool_support), (0.5, 1));
        assert_eq!((r.theme_acc, r.theme_support), (0.0, 0));
    }

    #[test]
    fn stddev_identical_and_order_invariant() {
        let a = report("a", [0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        let b = report("b", [0.3, 0.1, 0.3, 0.2, 0.9, 0.0]);
        let c = report("c", [0.5, 0.5, 0.5, 0.5, 0.5, 0.5]);
        let same = metric_stddev(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(same.values(), [0.0; 6]);
        let x = metric_stddev(&[a.clone(), b.clone(), c.clone()]).unwrap();
        let y = metric_stddev(&[c, a.clone(), b]).unwrap();
        for (u, v) in x.values().iter().zip(y.values()) {
            assert!((u - v).abs() < 1e-9);
        }
        assert_eq!(metric_stddev(&[a]), Err(EvalError::TooFewReports(1)));
    }

    #[test]
    fn table_has_header_and_rows() {
        let t = render_table(&[report("BLOOM", [0.5407; 6])], None);
        let lines: Vec<_> = t.lines().collect();
        assert!(lines[0].starts_with("Model") && lines[0].contains("ThemeACC"));
        assert!(lines[1].starts_with("BLOOM") && lines[1].contains("54.07"));
    }
}
