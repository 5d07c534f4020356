//! Parameter sweeps: the alpha x beta loss surface, annealing versus
//! exhaustive search, and space-factor stability.

use std::path::Path;
use std::time::Instant;

use markloc::annealer::{anneal, exhaustive_search, AnnealParams, ExhaustiveResult};
use markloc::benchgen::{chain_centers, overlapping_region};
use markloc::locator::SpaceFactor;
use markloc::objective::{LossParams, RegionEvaluator};
use markloc::par::{self, Parallelism};
use markloc::raster::{extract_regions, BinaryRegion, GrayImage, Threshold};
use markloc::revis::MarkerType;
use markloc::seed;

use crate::error::{CliError, Result};
use crate::files::create_dir;
use crate::locate::LocateOptions;
use crate::stats::{mean, std_dev};
use crate::suite::{column, run_cases, SuiteCase};

pub const THREE_MARKERS: [MarkerType; 3] = [
    MarkerType::FilledCircle,
    MarkerType::FilledSquare,
    MarkerType::FilledDiamond,
];

/// `start, start + step, ..` up to `end` inclusive.
pub fn grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    let count = ((end - start) / step + 1e-9).floor() as usize + 1;
    (0..count).map(|i| start + i as f64 * step).collect()
}

/// Parses `0.5,1,1.5` or `start:end:step`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let bad = || CliError::BadInput(format!("bad grid `{text}`"));
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(bad)
    };
    let parts: Vec<&str> = text.split(':').collect();
    let values = match parts.as_slice() {
        [a, b, c] => {
            let (a, b, c) = (num(a)?, num(b)?, num(c)?);
            if c <= 0.0 || b < a {
                return Err(bad());
            }
            grid(a, b, c)
        }
        [_] => text.split(',').map(num).collect::<Result<Vec<_>>>()?,
        _ => return Err(bad()),
    };
    if values.is_empty() {
        return Err(bad());
    }
    Ok(values)
}

/// Three radius-15 filled circles on a triangle of side 20.
pub fn three_circle_region() -> BinaryRegion {
    let centers = [
        [50.0, 50.0],
        [70.0, 50.0],
        [60.0, 50.0 + 20.0 * 0.75f64.sqrt()],
    ];
    overlapping_region(&centers, 15.0, MarkerType::FilledCircle, 2.0).expect("the circles overlap")
}

/// Largest foreground region of an image.
pub fn largest_region(image: &GrayImage) -> Result<BinaryRegion> {
    extract_regions(image, Threshold::Auto, false, 1)
        .into_iter()
        .max_by_key(|r| r.len())
        .ok_or_else(|| CliError::BadInput("image has no foreground region".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaBetaCell {
    pub alpha: f64,
    pub beta: f64,
    pub n: usize,
    pub marker: MarkerType,
    pub loss: f64,
}

/// Argmin `(n, m)` of the loss for every `(alpha, beta)`. The components
/// `f, g, h` do not depend on the weights, so one exhaustive table serves
/// the whole grid.
pub fn alpha_beta_surface(
    region: &BinaryRegion,
    space_factor: f64,
    markers: &[MarkerType],
    alphas: &[f64],
    betas: &[f64],
    seed: u64,
) -> Result<Vec<AlphaBetaCell>> {
    let params = LossParams {
        space_factor,
        ..LossParams::default()
    };
    let mut ev = RegionEvaluator::new(region, params, seed)?;
    let table = exhaustive_search(&mut ev, markers)?.table;
    let mut cells = Vec::with_capacity(alphas.len() * betas.len());
    for &alpha in alphas {
        for &beta in betas {
            // first strict minimum: smallest n, then earliest marker
            let best = table
                .iter()
                .map(|b| (b, b.total_with(alpha, beta)))
                .reduce(|a, b| if b.1 < a.1 { b } else { a })
                .expect("nonempty table");
            cells.push(AlphaBetaCell {
                alpha,
                beta,
                n: best.0.n,
                marker: best.0.marker,
                loss: best.1,
            });
        }
    }
    Ok(cells)
}

/// A region with the loss parameters it is searched under.
#[derive(Debug, Clone)]
pub struct SearchProblem {
    pub region: BinaryRegion,
    pub params: LossParams,
}

/// Chains of 7 to 16 overlapping radius-6 filled circles, each with the space
/// factor chosen so that `N0 = 15`.
pub fn chain_problems(count: usize, master_seed: u64) -> Result<Vec<SearchProblem>> {
    let mut rng_seed = master_seed;
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        rng_seed = seed::derive(rng_seed, i as u64);
        let marks = 7 + (rng_seed % 10) as usize;
        let centers = chain_centers(marks, 6.0, [100.0, 100.0], rng_seed);
        let region = overlapping_region(&centers, 6.0, MarkerType::FilledCircle, 2.0)?;
        let params = LossParams {
            alpha: 1.5,
            beta: 5.0,
            space_factor: region.len() as f64 / 15.5,
            ..LossParams::default()
        };
        out.push(SearchProblem { region, params });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaRun {
    pub problem: usize,
    pub run: usize,
    pub n: usize,
    pub loss: f64,
    pub evaluations: usize,
    pub millis: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustiveRun {
    pub problem: usize,
    pub n: usize,
    pub loss: f64,
    pub evaluations: usize,
    pub millis: f64,
}

/// Exhaustive search per problem, each on a fresh evaluator.
pub fn exhaustive_runs(
    problems: &[SearchProblem],
    markers: &[MarkerType],
    parallelism: Parallelism,
) -> Result<Vec<ExhaustiveRun>> {
    par::map(parallelism, problems, |i, p| {
        let t = Instant::now();
        let mut ev = RegionEvaluator::new(&p.region, p.params, seed::derive(0x5eed, i as u64))?;
        let ExhaustiveResult {
            best, evaluations, ..
        } = exhaustive_search(&mut ev, markers)?;
        Ok(ExhaustiveRun {
            problem: i,
            n: best.n,
            loss: best.total,
            evaluations,
            millis: t.elapsed().as_secs_f64() * 1e3,
        })
    })
    .into_iter()
    .collect()
}

/// `runs` annealing runs per problem with seeds derived from `master_seed`.
/// Evaluators share the exhaustive seed so both searches see the same loss.
pub fn sa_runs(
    problems: &[SearchProblem],
    markers: &[MarkerType],
    gamma_s: f64,
    gamma_m: f64,
    runs: usize,
    master_seed: u64,
    parallelism: Parallelism,
) -> Result<Vec<SaRun>> {
    let jobs: Vec<(usize, usize)> = (0..problems.len())
        .flat_map(|p| (0..runs).map(move |r| (p, r)))
        .collect();
    par::map(parallelism, &jobs, |_, &(pi, run)| {
        let p = &problems[pi];
        let t = Instant::now();
        let mut ev = RegionEvaluator::new(&p.region, p.params, seed::derive(0x5eed, pi as u64))?;
        let params = AnnealParams {
            gamma_s,
            gamma_m,
            seed: seed::derive_path(master_seed, &[pi as u64, run as u64]),
            ..AnnealParams::default()
        };
        let result = anneal(&mut ev, markers, &params)?;
        Ok(SaRun {
            problem: pi,
            run,
            n: result.best_n,
            loss: result.best_loss,
            evaluations: result.evaluations,
            millis: t.elapsed().as_secs_f64() * 1e3,
        })
    })
    .into_iter()
    .collect()
}

/// Aggregate of annealing against exhaustive search for one `(gamma_s, gamma_m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaSummary {
    pub gamma_s: f64,
    pub gamma_m: f64,
    /// Runs whose loss is within 1% of the exhaustive minimum.
    pub hit_rate: f64,
    /// Lowest per-problem hit rate.
    pub worst_problem_hit_rate: f64,
    pub mean_evaluation_ratio: f64,
    pub mean_sa_ms: f64,
    pub mean_exhaustive_ms: f64,
}

pub fn within_one_percent(loss: f64, optimum: f64) -> bool {
    loss <= optimum + 0.01 * optimum.abs()
}

pub fn summarize_sa(
    gamma_s: f64,
    gamma_m: f64,
    exhaustive: &[ExhaustiveRun],
    runs: &[SaRun],
) -> SaSummary {
    let hit = |r: &SaRun| within_one_percent(r.loss, exhaustive[r.problem].loss);
    let per_problem: Vec<f64> = exhaustive
        .iter()
        .map(|e| {
            let mine: Vec<&SaRun> = runs.iter().filter(|r| r.problem == e.problem).collect();
            mine.iter().filter(|r| hit(r)).count() as f64 / mine.len().max(1) as f64
        })
        .collect();
    let ratios: Vec<f64> = runs
        .iter()
        .map(|r| r.evaluations as f64 / exhaustive[r.problem].evaluations as f64)
        .collect();
    SaSummary {
        gamma_s,
        gamma_m,
        hit_rate: runs.iter().filter(|r| hit(r)).count() as f64 / runs.len().max(1) as f64,
        worst_problem_hit_rate: per_problem.iter().copied().fold(f64::INFINITY, f64::min),
        mean_evaluation_ratio: mean(&ratios),
        mean_sa_ms: mean(&runs.iter().map(|r| r.millis).collect::<Vec<_>>()),
        mean_exhaustive_ms: mean(&exhaustive.iter().map(|e| e.millis).collect::<Vec<_>>()),
    }
}

/// One row of the space-factor sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorRow {
    pub label: String,
    pub cases: usize,
    /// `(mean, std)` per lambda.
    pub scores: Vec<(f64, f64)>,
}

pub fn parse_factor(text: &str, kappa: f64) -> Result<SpaceFactor> {
    if text.trim().eq_ignore_ascii_case("rsma") {
        return Ok(SpaceFactor::Rsma { kappa });
    }
    text.trim()
        .parse::<f64>()
        .ok()
        .filter(|f| *f > 1.0 && f.is_finite())
        .map(SpaceFactor::Fixed)
        .ok_or_else(|| CliError::BadInput(format!("bad space factor `{text}`")))
}

pub fn factor_label(factor: SpaceFactor) -> String {
    match factor {
        SpaceFactor::Rsma { kappa } => format!("rsma(kappa={kappa})"),
        SpaceFactor::Fixed(f) => format!("{f}"),
    }
}

/// Locator scores over a suite for each space factor.
pub fn space_factor_sweep(
    cases: &[SuiteCase],
    factors: &[SpaceFactor],
    base: &LocateOptions,
    lambdas: &[f64],
) -> Result<Vec<FactorRow>> {
    factors
        .iter()
        .map(|&factor| {
            let mut options = base.clone();
            options.locator.space_factor = factor;
            let results = run_cases(cases, &options, lambdas)?;
            Ok(FactorRow {
                label: factor_label(factor),
                cases: results.len(),
                scores: (0..lambdas.len())
                    .map(|i| {
                        let col = column(&results, i);
                        (mean(&col), std_dev(&col))
                    })
                    .collect(),
            })
        })
        .collect()
}

pub fn write_rows(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    if let Some(dir) = path.parent() {
        create_dir(dir)?;
    }
    let err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}
