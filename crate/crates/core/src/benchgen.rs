//! Synthetic scatter images with ground truth and overlapping severity.
//!
//! Points are drawn from a 2-D distribution, mapped into the plot area
//! through a fixed data window per distribution and drawn as black marks on white with the glyph geometry of
//! [`crate::revis`]. The image holds only the plot area.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution as _, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{connected_regions, BinaryRegion, GrayImage, Pixel, PixelSet};
use crate::revis::{rasterize_mark, Mark, MarkerType};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    /// Isotropic Gaussian blobs with centers uniform in `[-10, 10]^2`.
    GaussianBlobs { centers: usize, std: f64 },
    /// Gaussian clusters around vertices of the square `[-sep, sep]^2`,
    /// each sheared by a random linear map.
    HypercubeClasses {
        classes: usize,
        clusters_per_class: usize,
        class_sep: f64,
    },
    /// Uniform positions with every pair of marks at least `2r + gap` apart,
    /// which makes all rasters pairwise disjoint and non-adjacent.
    UniformDisjoint { gap: f64 },
}

impl Distribution {
    /// Half-width of the square data window mapped onto the plot area.
    /// Samples outside the window are redrawn.
    pub fn window(&self) -> f64 {
        match self {
            Distribution::GaussianBlobs { .. } => 13.0,
            Distribution::HypercubeClasses { .. } => 6.0,
            Distribution::UniformDisjoint { .. } => f64::NAN,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Distribution::GaussianBlobs { .. } => "gaussian_blobs",
            Distribution::HypercubeClasses { .. } => "hypercube_classes",
            Distribution::UniformDisjoint { .. } => "uniform_disjoint",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseParams {
    pub width: usize,
    pub height: usize,
    pub margin: f64,
    pub radius: f64,
    pub stroke_width: f64,
}

impl Default for CaseParams {
    fn default() -> Self {
        Self {
            width: 480,
            height: 480,
            margin: 10.0,
            radius: 6.0,
            stroke_width: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkCase {
    pub image: GrayImage,
    pub truth: Vec<Mark>,
    pub marker: MarkerType,
    pub q: usize,
    pub severity: f64,
    pub distribution: Distribution,
    pub seed: u64,
    pub params: CaseParams,
}

impl BenchmarkCase {
    pub fn truth_centers(&self) -> Vec<[f64; 2]> {
        self.truth.iter().map(|m| m.center).collect()
    }
}

/// `1 - |union| / sum |M_i|` over per-mark rasters, evaluated as
/// `(sum - union) / sum` so rational severities round correctly.
pub fn overlap_severity(rasters: &[PixelSet]) -> f64 {
    let total: usize = rasters.iter().map(|r| r.len()).sum();
    if total == 0 {
        return 0.0;
    }
    let mut all: Vec<Pixel> = rasters.iter().flat_map(|r| r.iter().copied()).collect();
    all.sort_unstable();
    all.dedup();
    (total - all.len()) as f64 / total as f64
}

fn split_evenly(q: usize, parts: usize) -> Vec<usize> {
    (0..parts)
        .map(|i| q / parts + usize::from(i < q % parts))
        .collect()
}

fn sample_points<R: Rng>(dist: &Distribution, q: usize, rng: &mut R) -> Result<Vec<[f64; 2]>> {
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    match *dist {
        Distribution::GaussianBlobs { centers, std } => {
            if centers == 0 || !(std > 0.0 && std.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "gaussian blobs need centers >= 1 and std > 0, got {centers} / {std}"
                )));
            }
            let cs: Vec<[f64; 2]> = (0..centers)
                .map(|_| [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)])
                .collect();
            let mut pts = Vec::with_capacity(q);
            for (c, k) in cs.iter().zip(split_evenly(q, centers)) {
                for _ in 0..k {
                    pts.push(inside_window(dist.window(), rng, |rng| {
                        [
                            c[0] + std * std_normal.sample(rng),
                            c[1] + std * std_normal.sample(rng),
                        ]
                    })?);
                }
            }
            Ok(pts)
        }
        Distribution::HypercubeClasses {
            classes,
            clusters_per_class,
            class_sep,
        } => {
            let clusters = classes * clusters_per_class;
            if clusters == 0 || clusters > 4 || !(class_sep > 0.0 && class_sep.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "hypercube needs 1..=4 clusters and class_sep > 0, got {clusters} / {class_sep}"
                )));
            }
            let mut vertices = [
                [-class_sep, -class_sep],
                [class_sep, -class_sep],
                [-class_sep, class_sep],
                [class_sep, class_sep],
            ];
            vertices.shuffle(rng);
            let mut pts = Vec::with_capacity(q);
            for (v, k) in vertices.iter().zip(split_evenly(q, clusters)) {
                let a: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
                for _ in 0..k {
                    pts.push(inside_window(dist.window(), rng, |rng| {
                        let (z0, z1) = (std_normal.sample(rng), std_normal.sample(rng));
                        [v[0] + z0 * a[0] + z1 * a[2], v[1] + z0 * a[1] + z1 * a[3]]
                    })?);
                }
            }
            Ok(pts)
        }
        Distribution::UniformDisjoint { .. } => unreachable!("sampled in plot space"),
    }
}

fn inside_window<R: Rng>(
    half: f64,
    rng: &mut R,
    mut draw: impl FnMut(&mut R) -> [f64; 2],
) -> Result<[f64; 2]> {
    for _ in 0..10_000 {
        let p = draw(rng);
        if p[0].abs() <= half && p[1].abs() <= half {
            return Ok(p);
        }
    }
    Err(Error::InvalidParameter(format!(
        "distribution puts almost no mass inside the data window [-{half}, {half}]^2"
    )))
}

/// Maps `[-half, half]^2` onto the plot area, y up.
fn scale_into_plot(points: &mut [[f64; 2]], half: f64, params: &CaseParams) {
    let lo = [params.margin, params.margin];
    let hi = [
        params.width as f64 - 1.0 - params.margin,
        params.height as f64 - 1.0 - params.margin,
    ];
    for p in points.iter_mut() {
        let u = (p[0] + half) / (2.0 * half);
        let v = (p[1] + half) / (2.0 * half);
        *p = [lo[0] + u * (hi[0] - lo[0]), hi[1] - v * (hi[1] - lo[1])];
    }
}

fn sample_disjoint<R: Rng>(
    q: usize,
    gap: f64,
    params: &CaseParams,
    rng: &mut R,
) -> Result<Vec<[f64; 2]>> {
    let min_d = 2.0 * params.radius + gap;
    let lo = params.margin;
    let (hx, hy) = (
        params.width as f64 - 1.0 - params.margin,
        params.height as f64 - 1.0 - params.margin,
    );
    let mut pts: Vec<[f64; 2]> = Vec::with_capacity(q);
    let mut attempts = 0usize;
    while pts.len() < q {
        attempts += 1;
        if attempts > 10_000 * q.max(1) {
            return Err(Error::InvalidParameter(format!(
                "cannot place {q} disjoint marks in the plot area"
            )));
        }
        let c = [rng.random_range(lo..hx), rng.random_range(lo..hy)];
        if pts
            .iter()
            .all(|p| (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) >= min_d * min_d)
        {
            pts.push(c);
        }
    }
    Ok(pts)
}

/// Generates one case; deterministic in `seed`.
pub fn generate_case(
    marker: MarkerType,
    q: usize,
    distribution: Distribution,
    params: CaseParams,
    seed: u64,
) -> Result<BenchmarkCase> {
    if q == 0 {
        return Err(Error::InvalidParameter(
            "mark count must be positive".into(),
        ));
    }
    if params.width == 0 || params.height == 0 || !(params.radius >= 0.0) {
        return Err(Error::InvalidParameter("invalid canvas parameters".into()));
    }
    let mut rng = seed::rng(seed);
    let centers = match distribution {
        Distribution::UniformDisjoint { gap } => sample_disjoint(q, gap, &params, &mut rng)?,
        ref d => {
            let mut pts = sample_points(d, q, &mut rng)?;
            scale_into_plot(&mut pts, d.window(), &params);
            pts
        }
    };
    let truth: Vec<Mark> = centers
        .iter()
        .map(|&c| Mark::new(c, params.radius, marker))
        .collect();
    let rasters = truth
        .iter()
        .map(|m| rasterize_mark(m, params.stroke_width))
        .collect::<Result<Vec<_>>>()?;
    let mut image = GrayImage::filled(params.width, params.height, 255)?;
    for r in &rasters {
        image.paint(r, 0);
    }
    Ok(BenchmarkCase {
        image,
        severity: overlap_severity(&rasters),
        truth,
        marker,
        q,
        distribution,
        seed,
        params,
    })
}

/// Shape of a generated suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteSpec {
    pub markers: Vec<MarkerType>,
    pub counts: Vec<usize>,
    /// Gaussian-blob images per (count, marker).
    pub blobs_per_combo: usize,
    /// Hypercube images per (count, marker).
    pub hypercube_per_combo: usize,
    /// `(centers, std)` parameter sets cycled through by blob images.
    pub blob_grid: Vec<(usize, f64)>,
    /// `class_sep` values cycled through by hypercube images.
    pub hypercube_grid: Vec<f64>,
    pub seed: u64,
    pub params: CaseParams,
}

impl Default for SuiteSpec {
    fn default() -> Self {
        Self::paper()
    }
}

impl SuiteSpec {
    /// 11 markers x {100, 400, 700} marks x (6 blob + 3 hypercube) images.
    pub fn paper() -> Self {
        Self {
            markers: MarkerType::ALL.to_vec(),
            counts: vec![100, 400, 700],
            blobs_per_combo: 6,
            hypercube_per_combo: 3,
            blob_grid: vec![(3, 0.6), (3, 1.2), (3, 2.0), (5, 0.6), (5, 1.2), (5, 2.0)],
            hypercube_grid: vec![1.0, 1.5, 2.0],
            seed: 2023,
            params: CaseParams::default(),
        }
    }

    /// 11 markers x 100 marks x 3 images.
    pub fn desk() -> Self {
        Self {
            counts: vec![100],
            blobs_per_combo: 2,
            hypercube_per_combo: 1,
            ..Self::paper()
        }
    }

    pub fn case_count(&self) -> usize {
        self.markers.len() * self.counts.len() * (self.blobs_per_combo + self.hypercube_per_combo)
    }

    /// Every case as `(marker, q, distribution, seed)`, in suite order.
    pub fn plan(&self) -> Vec<(MarkerType, usize, Distribution, u64)> {
        let mut plan = Vec::with_capacity(self.case_count());
        let mut combo = 0usize;
        for &marker in &self.markers {
            for &q in &self.counts {
                for b in 0..self.blobs_per_combo {
                    let (centers, std) = self.blob_grid[(b + combo) % self.blob_grid.len()];
                    plan.push((marker, q, Distribution::GaussianBlobs { centers, std }));
                }
                for h in 0..self.hypercube_per_combo {
                    let class_sep = self.hypercube_grid[(h + combo) % self.hypercube_grid.len()];
                    plan.push((
                        marker,
                        q,
                        Distribution::HypercubeClasses {
                            classes: 2,
                            clusters_per_class: 2,
                            class_sep,
                        },
                    ));
                }
                combo += 1;
            }
        }
        plan.into_iter()
            .enumerate()
            .map(|(i, (m, q, d))| (m, q, d, seed::derive(self.seed, i as u64)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub marker: MarkerType,
    pub q: usize,
    pub distribution: Distribution,
    pub severity: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Counts of severities in ten bins of width 0.1.
pub fn severity_histogram(severities: &[f64]) -> Vec<HistogramBin> {
    let mut bins: Vec<HistogramBin> = (0..10)
        .map(|i| HistogramBin {
            lo: i as f64 / 10.0,
            hi: (i + 1) as f64 / 10.0,
            count: 0,
        })
        .collect();
    for &s in severities {
        let i = ((s * 10.0).floor() as usize).min(9);
        bins[i].count += 1;
    }
    bins
}

pub fn case_id(index: usize) -> String {
    format!("case_{index:04}")
}

/// Generates every case of `spec` (in parallel when enabled) in suite order.
pub fn generate_suite(
    spec: &SuiteSpec,
    parallelism: crate::par::Parallelism,
) -> Result<Vec<BenchmarkCase>> {
    let plan = spec.plan();
    crate::par::map(parallelism, &plan, |_, &(marker, q, dist, seed)| {
        generate_case(marker, q, dist, spec.params, seed)
    })
    .into_iter()
    .collect()
}

pub fn manifest_entries(cases: &[BenchmarkCase]) -> Vec<ManifestEntry> {
    cases
        .iter()
        .enumerate()
        .map(|(i, c)| ManifestEntry {
            id: case_id(i),
            marker: c.marker,
            q: c.q,
            distribution: c.distribution,
            severity: c.severity,
            seed: c.seed,
        })
        .collect()
}

/// Renders marks of one glyph and returns their union, which must be a
/// single 8-connected region.
pub fn overlapping_region(
    centers: &[[f64; 2]],
    radius: f64,
    marker: MarkerType,
    stroke_width: f64,
) -> Result<BinaryRegion> {
    let mut union = PixelSet::new();
    for &c in centers {
        union = union.union(&rasterize_mark(
            &Mark::new(c, radius, marker),
            stroke_width,
        )?);
    }
    let mut regions = connected_regions(&union);
    match regions.len() {
        0 => Err(Error::EmptyPixelSet),
        1 => Ok(regions.remove(0)),
        k => Err(Error::InvalidParameter(format!(
            "marks form {k} separate regions, expected one"
        ))),
    }
}

/// `count` mark centers grown as a random chain: each new center sits at a
/// distance in `[radius, 5/3 radius]` from a uniformly chosen earlier one, so
/// every mark overlaps its parent.
pub fn chain_centers(count: usize, radius: f64, origin: [f64; 2], seed: u64) -> Vec<[f64; 2]> {
    let mut rng = seed::rng(seed);
    let mut centers = Vec::with_capacity(count);
    if count == 0 {
        return centers;
    }
    centers.push(origin);
    while centers.len() < count {
        let parent = centers[rng.random_range(0..centers.len())];
        let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let d: f64 = rng.random_range(radius..radius * 5.0 / 3.0);
        centers.push([parent[0] + d * angle.cos(), parent[1] + d * angle.sin()]);
    }
    centers
}
