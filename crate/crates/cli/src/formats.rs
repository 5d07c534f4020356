//! JSON artifacts written and read by the subcommands.

use serde::{Deserialize, Serialize};

use markloc::benchgen::{BenchmarkCase, CaseParams, Distribution, HistogramBin, SuiteSpec};
use markloc::locator::{LocatedMark, RegionSummary, RsmaEstimate};
use markloc::revis::{Mark, MarkerType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Overlapping-mark locator (clustering + annealing).
    Osm,
    /// Gaussian-filter peak picking.
    Filter,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Osm => "osm",
            Method::Filter => "filter",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total: f64,
    pub regions: Vec<f64>,
}

/// One prediction file per input image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// File name of the input image.
    pub image: String,
    pub method: Method,
    pub params: serde_json::Value,
    pub marks: Vec<LocatedMark>,
    #[serde(default)]
    pub regions: Vec<RegionSummary>,
    #[serde(default)]
    pub rsma: Option<RsmaEstimate>,
    #[serde(default)]
    pub space_factor: Option<f64>,
    /// Null unless timing was requested; wall times are not reproducible.
    #[serde(default)]
    pub timing_ms: Option<Timing>,
}

impl Prediction {
    pub fn centers(&self) -> Vec<[f64; 2]> {
        self.marks.iter().map(|m| m.center()).collect()
    }
}

/// Ground truth for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub id: String,
    /// Image path relative to the suite root.
    pub image: String,
    pub marker: MarkerType,
    pub q: usize,
    #[serde(default)]
    pub severity: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub distribution: Option<Distribution>,
    #[serde(default)]
    pub params: Option<CaseParams>,
    pub marks: Vec<Mark>,
}

impl Truth {
    pub fn from_case(id: &str, image: &str, case: &BenchmarkCase) -> Self {
        Self {
            id: id.to_owned(),
            image: image.to_owned(),
            marker: case.marker,
            q: case.q,
            severity: Some(case.severity),
            seed: Some(case.seed),
            distribution: Some(case.distribution),
            params: Some(case.params),
            marks: case.truth.clone(),
        }
    }

    pub fn centers(&self) -> Vec<[f64; 2]> {
        self.marks.iter().map(|m| m.center).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestCase {
    pub id: String,
    pub image: String,
    pub truth: String,
    pub image_sha256: String,
    pub truth_sha256: String,
    pub marker: MarkerType,
    pub q: usize,
    pub distribution: Distribution,
    pub severity: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: SuiteSpec,
    pub case_count: usize,
    pub cases: Vec<ManifestCase>,
    pub severity_histogram: Vec<HistogramBin>,
}
