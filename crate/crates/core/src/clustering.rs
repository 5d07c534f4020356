//! Seeded k-means over pixel coordinates.
//!
//! Lloyd iterations from k-means++ seeding, run `restarts` times with derived
//! seeds; the lowest-inertia run wins, ties going to the earliest restart.

use rand::Rng;

use crate::error::{Error, Result};
use crate::par::{self, Parallelism};
use crate::raster::{BinaryRegion, Pixel};
use crate::seed;

pub const DEFAULT_RESTARTS: usize = 3;
pub const DEFAULT_MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansOptions {
    pub restarts: usize,
    pub max_iter: usize,
    pub parallelism: Parallelism,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            restarts: DEFAULT_RESTARTS,
            max_iter: DEFAULT_MAX_ITER,
            parallelism: Parallelism::Sequential,
        }
    }
}

/// A partition of a region's pixels into `n` nonempty clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub n: usize,
    pub centroids: Vec<[f64; 2]>,
    /// Cluster index per input point, in input order.
    pub assignment: Vec<usize>,
    /// Largest centroid-to-member distance per cluster.
    pub radii: Vec<f64>,
    /// Within-cluster sum of squared distances.
    pub inertia: f64,
}

impl Clustering {
    pub fn members<'a>(
        &'a self,
        points: &'a [[f64; 2]],
        k: usize,
    ) -> impl Iterator<Item = [f64; 2]> + 'a {
        self.assignment
            .iter()
            .zip(points)
            .filter(move |(&a, _)| a == k)
            .map(|(_, p)| *p)
    }
}

pub fn pixel_points(pixels: &[Pixel]) -> Vec<[f64; 2]> {
    pixels.iter().map(|p| [p.x as f64, p.y as f64]).collect()
}

/// Largest Euclidean distance from `centroid` to any of `points`.
pub fn cluster_radius(points: &[[f64; 2]], centroid: [f64; 2]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::EmptyPixelSet);
    }
    Ok(points
        .iter()
        .map(|p| dist2(*p, centroid))
        .fold(0.0, f64::max)
        .sqrt())
}

/// k-means on a region's pixel coordinates with default options.
pub fn kmeans(region: &BinaryRegion, n: usize, seed: u64) -> Result<Clustering> {
    let points = pixel_points(region.pixels().as_slice());
    kmeans_points(&points, n, seed, &KMeansOptions::default())
}

pub fn kmeans_points(
    points: &[[f64; 2]],
    n: usize,
    seed: u64,
    opts: &KMeansOptions,
) -> Result<Clustering> {
    if n < 1 || n > points.len() {
        return Err(Error::ClusterCount {
            n,
            max: points.len(),
        });
    }
    let restarts = opts.restarts.max(1);
    let runs = par::map_range(opts.parallelism, restarts, |r| {
        lloyd(points, n, seed::derive(seed, r as u64), opts.max_iter).0
    });
    let best = runs
        .into_iter()
        .reduce(|best, run| {
            if run.inertia < best.inertia {
                run
            } else {
                best
            }
        })
        .expect("at least one restart");
    Ok(best)
}

#[inline]
fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

fn plus_plus_init(points: &[[f64; 2]], n: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = seed::rng(seed);
    let mut centroids = Vec::with_capacity(n);
    centroids.push(points[rng.random_range(0..points.len())]);
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(*p, centroids[0])).collect();
    while centroids.len() < n {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    chosen = Some(i);
                    break;
                }
            }
            // rounding can leave `acc` just short of `target`
            chosen.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).expect("positive mass"))
        } else {
            // every point coincides with a chosen centroid
            rng.random_range(0..points.len())
        };
        let c = points[pick];
        centroids.push(c);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(dist2(*p, c));
        }
    }
    centroids
}

fn nearest(p: [f64; 2], centroids: &[[f64; 2]]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, c) in centroids.iter().enumerate() {
        let d = dist2(p, *c);
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

/// Moves, for every empty cluster, the point farthest from its own centroid
/// into it.
fn repair_empty(points: &[[f64; 2]], centroids: &mut [[f64; 2]], assignment: &mut [usize]) {
    let n = centroids.len();
    let mut sizes = vec![0usize; n];
    for &a in assignment.iter() {
        sizes[a] += 1;
    }
    for k in 0..n {
        if sizes[k] > 0 {
            continue;
        }
        let mut far = None;
        let mut far_d = -1.0;
        for (i, p) in points.iter().enumerate() {
            let a = assignment[i];
            if sizes[a] <= 1 {
                continue;
            }
            let d = dist2(*p, centroids[a]);
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        let i = far.expect("n <= number of points");
        sizes[assignment[i]] -= 1;
        assignment[i] = k;
        sizes[k] = 1;
        centroids[k] = points[i];
    }
}

fn means(points: &[[f64; 2]], assignment: &[usize], n: usize) -> Vec<[f64; 2]> {
    let mut acc = vec![[0.0f64; 2]; n];
    let mut count = vec![0usize; n];
    for (p, &a) in points.iter().zip(assignment) {
        acc[a][0] += p[0];
        acc[a][1] += p[1];
        count[a] += 1;
    }
    acc.iter()
        .zip(&count)
        .map(|(s, &c)| [s[0] / c as f64, s[1] / c as f64])
        .collect()
}

fn inertia(points: &[[f64; 2]], centroids: &[[f64; 2]], assignment: &[usize]) -> f64 {
    points
        .iter()
        .zip(assignment)
        .map(|(p, &a)| dist2(*p, centroids[a]))
        .sum()
}

/// One seeded Lloyd run. Also returns the inertia after every mean update.
pub(crate) fn lloyd(
    points: &[[f64; 2]],
    n: usize,
    seed: u64,
    max_iter: usize,
) -> (Clustering, Vec<f64>) {
    let mut centroids = plus_plus_init(points, n, seed);
    let mut assignment: Vec<usize> = vec![usize::MAX; points.len()];
    let mut next = vec![0usize; points.len()];
    let mut history = Vec::new();
    for _ in 0..max_iter.max(1) {
        for (slot, p) in next.iter_mut().zip(points) {
            *slot = nearest(*p, &centroids);
        }
        repair_empty(points, &mut centroids, &mut next);
        if next == assignment {
            break;
        }
        std::mem::swap(&mut assignment, &mut next);
        centroids = means(points, &assignment, n);
        history.push(inertia(points, &centroids, &assignment));
    }
    let radii = (0..n)
        .map(|k| {
            assignment
                .iter()
                .zip(points)
                .filter(|(&a, _)| a == k)
                .map(|(_, p)| dist2(*p, centroids[k]))
                .fold(0.0, f64::max)
                .sqrt()
        })
        .collect();
    let inertia = *history.last().expect("at least one iteration");
    (
        Clustering {
            n,
            centroids,
            assignment,
            radii,
            inertia,
        },
        history,
    )
}
