//! In-memory benchmark runs: locate and score whole suites without files.

use std::path::Path;

use markloc::benchgen::BenchmarkCase;
use markloc::par;
use markloc::raster::GrayImage;

use crate::error::Result;
use crate::evaluate::score_centers;
use crate::files::{list_files, read_json, stem};
use crate::formats::Truth;
use crate::locate::{locate_image, LocateOptions};

/// An image with its ground truth.
#[derive(Debug, Clone)]
pub struct SuiteCase {
    pub id: String,
    pub image: GrayImage,
    pub truth: Vec<[f64; 2]>,
    pub severity: Option<f64>,
}

impl SuiteCase {
    pub fn from_benchmark(id: String, case: &BenchmarkCase) -> Self {
        Self {
            id,
            image: case.image.clone(),
            truth: case.truth_centers(),
            severity: Some(case.severity),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseResult {
    pub id: String,
    pub severity: Option<f64>,
    pub truth_count: usize,
    pub pred_count: usize,
    /// One score per requested lambda.
    pub scores: Vec<f64>,
}

/// Loads `<root>/truth/*.json` and the images they reference.
pub fn load_suite(root: &Path) -> Result<Vec<SuiteCase>> {
    list_files(&root.join("truth"), "json")?
        .iter()
        .map(|path| {
            let truth: Truth = read_json(path)?;
            Ok(SuiteCase {
                id: stem(path)?,
                image: GrayImage::load(root.join(&truth.image))?,
                truth: truth.centers(),
                severity: truth.severity,
            })
        })
        .collect()
}

/// Locates and scores every case, in case order.
pub fn run_cases(
    cases: &[SuiteCase],
    options: &LocateOptions,
    lambdas: &[f64],
) -> Result<Vec<CaseResult>> {
    par::map(options.parallelism, cases, |_, case| {
        let prediction = locate_image(&case.image, &case.id, options)?;
        Ok(CaseResult {
            id: case.id.clone(),
            severity: case.severity,
            truth_count: case.truth.len(),
            pred_count: prediction.marks.len(),
            scores: score_centers(&case.truth, &prediction.centers(), lambdas)?,
        })
    })
    .into_iter()
    .collect()
}

/// Scores at lambda index `i`.
pub fn column(results: &[CaseResult], i: usize) -> Vec<f64> {
    results.iter().map(|r| r.scores[i]).collect()
}
