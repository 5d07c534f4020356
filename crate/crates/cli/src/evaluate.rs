//! `evaluate`: ACB scores of prediction files against ground truth.

use std::path::Path;

use markloc::metric::acb_score;

use crate::error::{CliError, Result};
use crate::files::{create_dir, list_files, read_json, stem};
use crate::formats::{Prediction, Truth};
use crate::stats::{mean, std_dev};

pub const DEFAULT_LAMBDAS: [f64; 3] = [1.0, 5.0, 10.0];

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub case: String,
    pub severity: Option<f64>,
    pub truth_count: usize,
    pub pred_count: usize,
    pub lambda: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub lambda: f64,
    pub cases: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub method: String,
    /// Case-major, then lambda in the requested order.
    pub rows: Vec<ScoreRow>,
    pub aggregates: Vec<Aggregate>,
}

impl Evaluation {
    pub fn aggregate(&self, lambda: f64) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.lambda == lambda)
    }

    /// `| method | cases | ACB[λ=1] | ... |` with `mean ± std` cells.
    pub fn table(&self) -> String {
        let mut head = String::from("| method | cases |");
        let mut rule = String::from("|---|---|");
        let mut row = format!(
            "| {} | {} |",
            self.method,
            self.aggregates.first().map_or(0, |a| a.cases)
        );
        for a in &self.aggregates {
            head.push_str(&format!(" ACB[λ={}] |", a.lambda));
            rule.push_str("---|");
            row.push_str(&format!(" {:.3} ± {:.3} |", a.mean, a.std));
        }
        format!("{head}\n{rule}\n{row}\n")
    }
}

/// ACB of one prediction against one truth for each lambda.
pub fn score_centers(
    truth: &[[f64; 2]],
    predicted: &[[f64; 2]],
    lambdas: &[f64],
) -> Result<Vec<f64>> {
    lambdas
        .iter()
        .map(|&l| Ok(acb_score(truth, predicted, l)?.score))
        .collect()
}

pub fn aggregate(rows: &[ScoreRow], lambdas: &[f64]) -> Vec<Aggregate> {
    lambdas
        .iter()
        .map(|&lambda| {
            let scores: Vec<f64> = rows
                .iter()
                .filter(|r| r.lambda == lambda)
                .map(|r| r.score)
                .collect();
            Aggregate {
                lambda,
                cases: scores.len(),
                mean: mean(&scores),
                std: std_dev(&scores),
            }
        })
        .collect()
}

/// Parses `1,5,10`.
pub fn parse_lambdas(text: &str) -> Result<Vec<f64>> {
    let lambdas = text
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| *v > 0.0 && v.is_finite())
                .ok_or_else(|| CliError::BadInput(format!("bad lambda `{s}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    if lambdas.is_empty() {
        return Err(CliError::BadInput("no lambda given".into()));
    }
    Ok(lambdas)
}

/// Parses `LAMBDA=MIN`.
pub fn parse_assert(text: &str) -> Result<(f64, f64)> {
    let bad = || CliError::BadInput(format!("expected LAMBDA=MIN, got `{text}`"));
    let (l, m) = text.split_once('=').ok_or_else(bad)?;
    Ok((
        l.trim().parse().map_err(|_| bad())?,
        m.trim().parse().map_err(|_| bad())?,
    ))
}

/// Scores every truth file in `truth_dir` against `<pred_dir>/<id>.json`.
pub fn evaluate_dirs(pred_dir: &Path, truth_dir: &Path, lambdas: &[f64]) -> Result<Evaluation> {
    let truths = list_files(truth_dir, "json")?;
    if truths.is_empty() {
        return Err(CliError::BadInput(format!(
            "no truth files in {}",
            truth_dir.display()
        )));
    }
    let mut rows = Vec::new();
    let mut methods: Vec<String> = Vec::new();
    for path in &truths {
        let truth: Truth = read_json(path)?;
        let id = stem(path)?;
        let pred_path = pred_dir.join(format!("{id}.json"));
        if !pred_path.is_file() {
            return Err(CliError::BadInput(format!(
                "missing prediction {}",
                pred_path.display()
            )));
        }
        let pred: Prediction = read_json(&pred_path)?;
        let name = pred.method.name().to_owned();
        if !methods.contains(&name) {
            methods.push(name);
        }
        let scores = score_centers(&truth.centers(), &pred.centers(), lambdas)?;
        for (&lambda, score) in lambdas.iter().zip(scores) {
            rows.push(ScoreRow {
                case: id.clone(),
                severity: truth.severity,
                truth_count: truth.marks.len(),
                pred_count: pred.marks.len(),
                lambda,
                score,
            });
        }
    }
    Ok(Evaluation {
        method: methods.join("+"),
        aggregates: aggregate(&rows, lambdas),
        rows,
    })
}

/// Writes `scores.csv` and `aggregate.csv` with fixed decimals.
pub fn write_csvs(evaluation: &Evaluation, out: &Path) -> Result<()> {
    create_dir(out)?;
    let path = out.join("scores.csv");
    let csv_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CliError::Csv { path, source }
    };
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record([
        "case",
        "severity",
        "truth_count",
        "pred_count",
        "lambda",
        "score",
    ])
    .map_err(csv_err(&path))?;
    for r in &evaluation.rows {
        w.write_record([
            r.case.clone(),
            r.severity.map_or_else(String::new, |s| format!("{s:.6}")),
            r.truth_count.to_string(),
            r.pred_count.to_string(),
            format!("{}", r.lambda),
            format!("{:.6}", r.score),
        ])
        .map_err(csv_err(&path))?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;

    let path = out.join("aggregate.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(["lambda", "cases", "mean", "std"])
        .map_err(csv_err(&path))?;
    for a in &evaluation.aggregates {
        w.write_record([
            format!("{}", a.lambda),
            a.cases.to_string(),
            format!("{:.6}", a.mean),
            format!("{:.6}", a.std),
        ])
        .map_err(csv_err(&path))?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })
}

/// Fails when the mean score at `lambda` is below `min`.
pub fn check_min(evaluation: &Evaluation, lambda: f64, min: f64) -> Result<()> {
    let a = evaluation
        .aggregate(lambda)
        .ok_or_else(|| CliError::BadInput(format!("lambda {lambda} was not evaluated")))?;
    if a.mean < min {
        return Err(CliError::AssertFailed(format!(
            "mean ACB[λ={lambda}] = {:.6} < {min}",
            a.mean
        )));
    }
    Ok(())
}
