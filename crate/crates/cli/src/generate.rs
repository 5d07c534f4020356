//! `generate`: renders a benchmark suite with ground truth and a manifest.

use std::path::Path;

use markloc::benchgen::{case_id, generate_suite, severity_histogram, SuiteSpec};
use markloc::par::Parallelism;

use crate::error::{CliError, Result};
use crate::files::{create_dir, read_json, sha256_file, write_json};
use crate::formats::{Manifest, ManifestCase, Truth};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    /// 11 markers x 3 images x 100 marks.
    Desk,
    /// 11 markers x 9 images x {100, 400, 700} marks.
    Paper,
}

impl Preset {
    pub fn spec(self) -> SuiteSpec {
        match self {
            Preset::Desk => SuiteSpec::desk(),
            Preset::Paper => SuiteSpec::paper(),
        }
    }
}

/// Reads a suite spec; missing fields take the paper defaults.
pub fn load_spec(path: &Path) -> Result<SuiteSpec> {
    let spec: SuiteSpec = read_json(path)?;
    if spec.markers.is_empty() || spec.counts.is_empty() {
        return Err(CliError::BadInput(
            "suite spec needs markers and counts".into(),
        ));
    }
    if (spec.blobs_per_combo > 0 && spec.blob_grid.is_empty())
        || (spec.hypercube_per_combo > 0 && spec.hypercube_grid.is_empty())
    {
        return Err(CliError::BadInput("suite spec grid is empty".into()));
    }
    Ok(spec)
}

/// Writes `images/`, `truth/` and `manifest.json` under `out`.
pub fn run_generate(spec: &SuiteSpec, out: &Path, parallelism: Parallelism) -> Result<Manifest> {
    let cases = generate_suite(spec, parallelism)?;
    create_dir(&out.join("images"))?;
    create_dir(&out.join("truth"))?;
    let mut entries = Vec::with_capacity(cases.len());
    for (i, case) in cases.iter().enumerate() {
        let id = case_id(i);
        let image = format!("images/{id}.png");
        let truth = format!("truth/{id}.json");
        case.image.save_png(out.join(&image))?;
        write_json(&out.join(&truth), &Truth::from_case(&id, &image, case))?;
        entries.push(ManifestCase {
            image_sha256: sha256_file(&out.join(&image))?,
            truth_sha256: sha256_file(&out.join(&truth))?,
            id,
            image,
            truth,
            marker: case.marker,
            q: case.q,
            distribution: case.distribution,
            severity: case.severity,
            seed: case.seed,
        });
    }
    let severities: Vec<f64> = cases.iter().map(|c| c.severity).collect();
    let manifest = Manifest {
        spec: spec.clone(),
        case_count: entries.len(),
        cases: entries,
        severity_histogram: severity_histogram(&severities),
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}
