use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use markloc::baseline::{FilterConfig, KernelSize};
use markloc::benchgen::generate_suite;
use markloc::locator::LocatorConfig;
use markloc::par::Parallelism;
use markloc::raster::GrayImage;
use markloc::revis::MarkerType;
use markloc_cli::error::Result;
use markloc_cli::evaluate::{check_min, evaluate_dirs, parse_assert, parse_lambdas, write_csvs};
use markloc_cli::formats::Method;
use markloc_cli::generate::{load_spec, run_generate, Preset};
use markloc_cli::locate::{run_locate, LocateOptions};
use markloc_cli::suite::{load_suite, SuiteCase};
use markloc_cli::sweep::{
    alpha_beta_surface, chain_problems, exhaustive_runs, largest_region, parse_factor, parse_grid,
    sa_runs, space_factor_sweep, summarize_sa, three_circle_region, write_rows, SearchProblem,
    THREE_MARKERS,
};

#[derive(Parser, Debug)]
#[command(
    name = "markloc",
    version,
    about = "Locate overlapping marks in scatter images"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Locate marks in images and write one prediction JSON per image.
    Locate(LocateArgs),
    /// Generate a synthetic benchmark suite.
    Generate(GenerateArgs),
    /// Score predictions against ground truth.
    Evaluate(EvaluateArgs),
    /// Run a parameter sweep and write a CSV.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone)]
struct Workers {
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Run everything on the calling thread.
    #[arg(long)]
    sequential: bool,
}

impl Workers {
    fn apply(&self) -> Result<Parallelism> {
        #[cfg(feature = "parallel")]
        if self.threads > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(self.threads)
                .build_global()
                .map_err(|e| markloc_cli::CliError::BadInput(format!("thread pool: {e}")))?;
        }
        Ok(if self.sequential {
            Parallelism::Sequential
        } else {
            Parallelism::Parallel
        })
    }
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.1)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 1.5)]
    gamma_s: f64,
    #[arg(long, default_value_t = 1.5)]
    gamma_m: f64,
    /// `rsma` or a fixed value greater than 1.
    #[arg(long, default_value = "rsma")]
    space_factor: String,
    #[arg(long, default_value_t = 0.8)]
    kappa: f64,
    /// Comma-separated marker subset, e.g. `circle,hollow_square`.
    #[arg(long)]
    markers: Option<String>,
    /// Marks are lighter than the background.
    #[arg(long)]
    invert: bool,
}

impl ModelArgs {
    fn locator(&self, parallelism: Parallelism) -> Result<LocatorConfig> {
        let markers = match &self.markers {
            Some(list) => list
                .split(',')
                .map(|s| s.parse::<MarkerType>())
                .collect::<markloc::Result<Vec<_>>>()?,
            None => MarkerType::ALL.to_vec(),
        };
        Ok(LocatorConfig {
            alpha: self.alpha,
            beta: self.beta,
            gamma_s: self.gamma_s,
            gamma_m: self.gamma_m,
            space_factor: parse_factor(&self.space_factor, self.kappa)?,
            markers,
            seed: self.seed,
            invert: self.invert,
            parallelism,
            ..LocatorConfig::default()
        })
    }
}

#[derive(Args, Debug)]
struct LocateArgs {
    /// Image files or directories of PNGs.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Osm)]
    method: Method,
    #[command(flatten)]
    model: ModelArgs,
    /// Filter kernel size for `--method filter`; default sizes it from single marks.
    #[arg(long)]
    kernel: Option<usize>,
    /// Directory for overlay PNGs.
    #[arg(long)]
    overlay: Option<PathBuf>,
    /// Record wall times in the prediction files (makes them non-reproducible).
    #[arg(long)]
    timing: bool,
    #[command(flatten)]
    workers: Workers,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long, value_enum, conflicts_with = "spec")]
    preset: Option<Preset>,
    /// Suite spec JSON.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Overrides the spec's master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    workers: Workers,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    pred: PathBuf,
    /// Truth directory, or a suite root containing `truth/`.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, default_value = "1,5,10")]
    lambda: String,
    #[arg(long)]
    out: PathBuf,
    /// `LAMBDA=MIN`; exit 1 if the mean score is lower. Repeatable.
    #[arg(long)]
    assert_min: Vec<String>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum SweepKind {
    AlphaBeta,
    SaParams,
    SpaceFactor,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(value_enum)]
    kind: SweepKind,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Image whose largest region is swept (alpha_beta, sa_params).
    #[arg(long)]
    region: Option<PathBuf>,
    /// alpha_beta: fixed space factor.
    #[arg(long, default_value_t = 60.0)]
    space_factor: f64,
    #[arg(long, default_value = "0:3:0.1")]
    alphas: String,
    #[arg(long, default_value = "0:100:3")]
    betas: String,
    /// sa_params: space factors for `--region`.
    #[arg(long, default_value = "6:90:6")]
    space_factors: String,
    #[arg(long, default_value = "0.5,1,1.5,2")]
    gamma_s: String,
    #[arg(long, default_value = "0.5,1,1.5,2")]
    gamma_m: String,
    /// sa_params: annealing runs per region.
    #[arg(long, default_value_t = 20)]
    runs: usize,
    /// sa_params: synthesized regions when no `--region` is given.
    #[arg(long, default_value_t = 10)]
    regions: usize,
    /// space_factor: suite root; the desk preset is generated in memory otherwise.
    #[arg(long)]
    suite: Option<PathBuf>,
    #[arg(long, default_value = "rsma,10,60,150")]
    factors: String,
    #[arg(long, default_value_t = 0.8)]
    kappa: f64,
    #[arg(long, default_value = "1,5,10")]
    lambda: String,
    #[command(flatten)]
    workers: Workers,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("markloc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Locate(a) => locate(a),
        Command::Generate(a) => generate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Sweep(a) => sweep(a),
    }
}

fn locate(a: LocateArgs) -> Result<()> {
    let parallelism = a.workers.apply()?;
    let options = LocateOptions {
        method: a.method,
        locator: a.model.locator(parallelism)?,
        filter: FilterConfig {
            kernel: a.kernel.map_or(KernelSize::Rsma, KernelSize::Fixed),
            invert: a.model.invert,
            parallelism,
            ..FilterConfig::default()
        },
        overlay_dir: a.overlay,
        timing: a.timing,
        parallelism,
    };
    let written = run_locate(&a.inputs, &a.out, &options)?;
    println!(
        "wrote {} prediction file(s) to {}",
        written.len(),
        a.out.display()
    );
    Ok(())
}

fn generate(a: GenerateArgs) -> Result<()> {
    let parallelism = a.workers.apply()?;
    let mut spec = match (&a.spec, a.preset) {
        (Some(path), _) => load_spec(path)?,
        (None, Some(p)) => p.spec(),
        (None, None) => Preset::Desk.spec(),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let manifest = run_generate(&spec, &a.out, parallelism)?;
    println!(
        "generated {} case(s) in {}",
        manifest.case_count,
        a.out.display()
    );
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let lambdas = parse_lambdas(&a.lambda)?;
    let asserts = a
        .assert_min
        .iter()
        .map(|s| parse_assert(s))
        .collect::<Result<Vec<_>>>()?;
    let truth = if a.truth.join("truth").is_dir() {
        a.truth.join("truth")
    } else {
        a.truth.clone()
    };
    let evaluation = evaluate_dirs(&a.pred, &truth, &lambdas)?;
    write_csvs(&evaluation, &a.out)?;
    print!("{}", evaluation.table());
    for (lambda, min) in asserts {
        check_min(&evaluation, lambda, min)?;
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let parallelism = a.workers.apply()?;
    match a.kind {
        SweepKind::AlphaBeta => {
            let region = match &a.region {
                Some(p) => largest_region(&GrayImage::load(p)?)?,
                None => three_circle_region(),
            };
            let cells = alpha_beta_surface(
                &region,
                a.space_factor,
                &THREE_MARKERS,
                &parse_grid(&a.alphas)?,
                &parse_grid(&a.betas)?,
                a.seed,
            )?;
            let modal = mode(cells.iter().map(|c| c.n));
            let share = cells.iter().filter(|c| c.n == modal).count() as f64 / cells.len() as f64;
            write_rows(
                &a.out,
                &["alpha", "beta", "n", "marker", "loss"],
                cells.iter().map(|c| {
                    vec![
                        format!("{:.4}", c.alpha),
                        format!("{:.4}", c.beta),
                        c.n.to_string(),
                        c.marker.to_string(),
                        format!("{:.6}", c.loss),
                    ]
                }),
            )?;
            println!(
                "{} cells; modal n = {modal} on {:.1}% of the grid",
                cells.len(),
                100.0 * share
            );
        }
        SweepKind::SaParams => {
            let problems: Vec<SearchProblem> = match &a.region {
                Some(p) => {
                    let region = largest_region(&GrayImage::load(p)?)?;
                    parse_grid(&a.space_factors)?
                        .into_iter()
                        .map(|f| SearchProblem {
                            region: region.clone(),
                            params: markloc::objective::LossParams {
                                alpha: 1.5,
                                beta: 5.0,
                                space_factor: f,
                                ..Default::default()
                            },
                        })
                        .collect()
                }
                None => chain_problems(a.regions, a.seed)?,
            };
            let exhaustive = exhaustive_runs(&problems, &THREE_MARKERS, parallelism)?;
            let mut rows = Vec::new();
            for gs in parse_grid(&a.gamma_s)? {
                for gm in parse_grid(&a.gamma_m)? {
                    let runs = sa_runs(
                        &problems,
                        &THREE_MARKERS,
                        gs,
                        gm,
                        a.runs,
                        a.seed,
                        parallelism,
                    )?;
                    let s = summarize_sa(gs, gm, &exhaustive, &runs);
                    println!(
                        "gamma_s={gs} gamma_m={gm}: hit {:.1}%, evaluations {:.1}% of exhaustive, time {:.1}% of exhaustive",
                        100.0 * s.hit_rate,
                        100.0 * s.mean_evaluation_ratio,
                        100.0 * s.mean_sa_ms / s.mean_exhaustive_ms
                    );
                    rows.push(vec![
                        format!("{gs}"),
                        format!("{gm}"),
                        format!("{:.6}", s.hit_rate),
                        format!("{:.6}", s.worst_problem_hit_rate),
                        format!("{:.6}", s.mean_evaluation_ratio),
                        format!("{:.3}", s.mean_sa_ms),
                        format!("{:.3}", s.mean_exhaustive_ms),
                    ]);
                }
            }
            write_rows(
                &a.out,
                &[
                    "gamma_s",
                    "gamma_m",
                    "hit_rate",
                    "worst_region_hit_rate",
                    "evaluation_ratio",
                    "sa_ms",
                    "exhaustive_ms",
                ],
                rows,
            )?;
        }
        SweepKind::SpaceFactor => {
            let lambdas = parse_lambdas(&a.lambda)?;
            let cases: Vec<SuiteCase> = match &a.suite {
                Some(root) => load_suite(root)?,
                None => generate_suite(&Preset::Desk.spec(), parallelism)?
                    .iter()
                    .enumerate()
                    .map(|(i, c)| SuiteCase::from_benchmark(markloc::benchgen::case_id(i), c))
                    .collect(),
            };
            let factors = a
                .factors
                .split(',')
                .map(|f| parse_factor(f, a.kappa))
                .collect::<Result<Vec<_>>>()?;
            let base = LocateOptions {
                locator: LocatorConfig {
                    seed: a.seed,
                    parallelism,
                    ..LocatorConfig::default()
                },
                parallelism,
                ..LocateOptions::default()
            };
            let rows = space_factor_sweep(&cases, &factors, &base, &lambdas)?;
            let mut header = vec!["space_factor".to_owned(), "cases".to_owned()];
            for l in &lambdas {
                header.push(format!("mean_lambda_{l}"));
                header.push(format!("std_lambda_{l}"));
            }
            let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
            write_rows(
                &a.out,
                &header_refs,
                rows.iter().map(|r| {
                    let mut v = vec![r.label.clone(), r.cases.to_string()];
                    for (m, s) in &r.scores {
                        v.push(format!("{m:.6}"));
                        v.push(format!("{s:.6}"));
                    }
                    v
                }),
            )?;
            for r in &rows {
                println!(
                    "space factor {}: mean ACB[λ={}] = {:.3}",
                    r.label, lambdas[0], r.scores[0].0
                );
            }
        }
    }
    Ok(())
}

fn mode(values: impl Iterator<Item = usize>) -> usize {
    let mut counts = std::collections::BTreeMap::new();
    for v in values {
        *counts.entry(v).or_insert(0usize) += 1;
    }
    counts
        .into_iter()
        .max_by_key(|&(v, c)| (c, std::cmp::Reverse(v)))
        .map_or(0, |(v, _)| v)
}
