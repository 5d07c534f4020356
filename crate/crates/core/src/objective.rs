//! The localization loss for one connected region.
//!
//! For a cluster count `n` and marker `m` the region is clustered with
//! k-means, re-visualized, and compared pixel-wise with the original:
//!
//! ```text
//! f = |C xor V|
//! g = (n / N0) * f + n * sqrt(F)
//! h = std(cluster radii)
//! L = f + alpha * g + beta * h
//! ```
//!
//! `N0 = max(1, floor(|C| / F))` bounds the search over `n`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::clustering::{kmeans_points, pixel_points, Clustering, KMeansOptions};
use crate::error::{Error, Result};
use crate::raster::{BinaryRegion, PixelSet};
use crate::revis::{cluster_marks, for_each_mark_pixel, MarkerType};
use crate::seed;

pub const DEFAULT_STROKE_WIDTH: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParams {
    pub alpha: f64,
    pub beta: f64,
    /// Divides the region size into the largest admissible cluster count.
    pub space_factor: f64,
    /// Stroke used when re-visualizing hollow markers.
    pub stroke_width: f64,
    #[serde(skip)]
    pub kmeans: KMeansOptions,
}

impl Default for LossParams {
    fn default() -> Self {
        Self {
            alpha: 1.1,
            beta: 1.0,
            space_factor: 60.0,
            stroke_width: DEFAULT_STROKE_WIDTH,
            kmeans: KMeansOptions::default(),
        }
    }
}

impl LossParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha = {}", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta = {}", self.beta)));
        }
        if !(self.space_factor > 1.0 && self.space_factor.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "space factor must exceed 1, got {}",
                self.space_factor
            )));
        }
        Ok(())
    }

    /// Largest admissible cluster count for a region of `region_len` pixels.
    pub fn n_max(&self, region_len: usize) -> usize {
        let n = (region_len as f64 / self.space_factor).floor() as usize;
        n.clamp(1, region_len.max(1))
    }
}

/// The loss and its components for one `(n, m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub n: usize,
    pub marker: MarkerType,
    /// Symmetric-difference pixel count.
    pub f: f64,
    /// Cluster-count prior.
    pub g: f64,
    /// Spread of the cluster radii.
    pub h: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// Recombines the components under other weights.
    pub fn total_with(&self, alpha: f64, beta: f64) -> f64 {
        self.f + alpha * self.g + beta * self.h
    }
}

/// `|a xor b|`.
pub fn sym_diff_size(a: &PixelSet, b: &PixelSet) -> usize {
    a.len() + b.len() - 2 * a.intersection_len(b)
}

/// Population standard deviation.
pub fn population_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Evaluates the loss of one region, caching the k-means result per `n` so
/// that all marker types share one clustering.
///
/// The k-means seed for cluster count `n` is derived from `(seed, n)`, which
/// makes every loss value a pure function of `(region, n, m, params, seed)`.
pub struct RegionEvaluator<'a> {
    region: &'a BinaryRegion,
    points: Vec<[f64; 2]>,
    params: LossParams,
    seed: u64,
    n_max: usize,
    clusters: HashMap<usize, Clustering>,
    canvas: Canvas,
    kmeans_runs: usize,
    loss_evaluations: usize,
}

impl<'a> RegionEvaluator<'a> {
    pub fn new(region: &'a BinaryRegion, params: LossParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let points = pixel_points(region.pixels().as_slice());
        Ok(Self {
            n_max: params.n_max(region.len()),
            canvas: Canvas::new(region),
            points,
            region,
            params,
            seed,
            clusters: HashMap::new(),
            kmeans_runs: 0,
            loss_evaluations: 0,
        })
    }

    pub fn region(&self) -> &BinaryRegion {
        self.region
    }

    pub fn params(&self) -> &LossParams {
        &self.params
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    /// Number of k-means fits performed so far.
    pub fn kmeans_runs(&self) -> usize {
        self.kmeans_runs
    }

    /// Number of loss evaluations performed so far.
    pub fn loss_evaluations(&self) -> usize {
        self.loss_evaluations
    }

    /// k-means with `n` clusters; valid for `1 <= n <= |C|`.
    pub fn clustering(&mut self, n: usize) -> Result<&Clustering> {
        if n < 1 || n > self.points.len() {
            return Err(Error::ClusterCount {
                n,
                max: self.points.len(),
            });
        }
        if !self.clusters.contains_key(&n) {
            let c = kmeans_points(
                &self.points,
                n,
                seed::derive(self.seed, n as u64),
                &self.params.kmeans,
            )?;
            self.kmeans_runs += 1;
            self.clusters.insert(n, c);
        }
        Ok(&self.clusters[&n])
    }

    /// `f` for an explicit stroke width.
    pub fn symmetric_difference(
        &mut self,
        n: usize,
        marker: MarkerType,
        stroke_width: f64,
    ) -> Result<usize> {
        self.clustering(n)?;
        let clusters = &self.clusters[&n];
        self.canvas
            .sym_diff(&cluster_marks(clusters, marker), stroke_width)
    }

    pub fn loss(&mut self, n: usize, marker: MarkerType) -> Result<LossBreakdown> {
        if n < 1 || n > self.n_max {
            return Err(Error::ClusterCount { n, max: self.n_max });
        }
        let f = self.symmetric_difference(n, marker, self.params.stroke_width)? as f64;
        self.loss_evaluations += 1;
        let radii = &self.clusters[&n].radii;
        let nf = n as f64;
        let g = nf / self.n_max as f64 * f + nf * self.params.space_factor.sqrt();
        let h = population_std(radii);
        Ok(LossBreakdown {
            n,
            marker,
            f,
            g,
            h,
            total: f + self.params.alpha * g + self.params.beta * h,
        })
    }
}

/// Loss of one `(n, m)` without caching across calls.
pub fn loss(
    region: &BinaryRegion,
    n: usize,
    marker: MarkerType,
    params: &LossParams,
    seed: u64,
) -> Result<LossBreakdown> {
    RegionEvaluator::new(region, *params, seed)?.loss(n, marker)
}

/// Scratch raster around a region. Cells painted in the current pass carry
/// the current stamp, which avoids clearing between evaluations.
struct Canvas {
    origin: (i64, i64),
    width: usize,
    height: usize,
    inside: Vec<bool>,
    stamps: Vec<u32>,
    stamp: u32,
    region_len: usize,
}

impl Canvas {
    fn new(region: &BinaryRegion) -> Self {
        let bb = region.bounding_box();
        let (w, h) = (bb.width() as f64, bb.height() as f64);
        // a cluster radius never exceeds the region's diameter and every
        // centroid lies inside the bounding box
        let margin = (w * w + h * h).sqrt().ceil() as i64 + 2;
        let origin = (bb.min_x as i64 - margin, bb.min_y as i64 - margin);
        let width = bb.width() + 2 * margin as usize;
        let height = bb.height() + 2 * margin as usize;
        let mut inside = vec![false; width * height];
        for p in region.pixels() {
            let i = (p.y as i64 - origin.1) as usize * width + (p.x as i64 - origin.0) as usize;
            inside[i] = true;
        }
        Self {
            origin,
            width,
            height,
            inside,
            stamps: vec![0; width * height],
            stamp: 0,
            region_len: region.len(),
        }
    }

    fn sym_diff(&mut self, marks: &[crate::revis::Mark], stroke_width: f64) -> Result<usize> {
        self.stamp = self.stamp.wrapping_add(1);
        if self.stamp == 0 {
            self.stamps.iter_mut().for_each(|s| *s = 0);
            self.stamp = 1;
        }
        let (mut painted, mut overlap, mut outside) = (0usize, 0usize, 0usize);
        for mark in marks {
            for_each_mark_pixel(mark, stroke_width, |p| {
                let x = p.x as i64 - self.origin.0;
                let y = p.y as i64 - self.origin.1;
                if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
                    // cannot touch the region
                    outside += 1;
                    return;
                }
                let i = y as usize * self.width + x as usize;
                if self.stamps[i] != self.stamp {
                    self.stamps[i] = self.stamp;
                    painted += 1;
                    if self.inside[i] {
                        overlap += 1;
                    }
                }
            })?;
        }
        debug_assert_eq!(outside, 0);
        Ok(self.region_len + painted + outside - 2 * overlap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{connected_regions, Pixel};
    use crate::revis::{rasterize_mark, revisualize, Mark};
    use proptest::prelude::*;

    fn coded(range: std::ops::RangeInclusive<i32>) -> PixelSet {
        range.map(|i| Pixel::new(i, 0)).collect()
    }

    fn region_of(marks: &[Mark]) -> BinaryRegion {
        let set = marks.iter().fold(PixelSet::new(), |acc, m| {
            acc.union(&rasterize_mark(m, 2.0).unwrap())
        });
        let mut regions = connected_regions(&set);
        assert_eq!(regions.len(), 1);
        regions.remove(0)
    }

    #[test]
    fn sym_diff_examples() {
        let a = coded(1..=10);
        assert_eq!(sym_diff_size(&a, &a), 0);
        assert_eq!(sym_diff_size(&coded(0..=2), &coded(10..=13)), 7);
        assert_eq!(sym_diff_size(&a, &coded(6..=15)), 10);
    }

    #[test]
    fn n_max_floors_to_one() {
        let p = LossParams {
            space_factor: 30.0,
            ..LossParams::default()
        };
        assert_eq!(p.n_max(315), 10);
        assert_eq!(p.n_max(20), 1);
        assert!(LossParams {
            space_factor: 1.0,
            ..p
        }
        .validate()
        .is_err());
    }

    #[test]
    fn perfect_circle_loss() {
        let mark = Mark::new([40.0, 40.0], 10.0, MarkerType::FilledCircle);
        let region = region_of(&[mark]);
        let params = LossParams {
            alpha: 1.1,
            beta: 1.0,
            space_factor: 30.0,
            ..LossParams::default()
        };
        assert_eq!(params.n_max(region.len()), region.len() / 30);
        let b = loss(&region, 1, MarkerType::FilledCircle, &params, 3).unwrap();
        assert_eq!(b.f, 0.0);
        assert!((b.g - 30f64.sqrt()).abs() < 1e-12);
        assert_eq!(b.h, 0.0);
        assert!((b.total - 1.1 * 30f64.sqrt()).abs() < 1e-9);
        assert!((b.total - 6.025).abs() < 1e-3);
    }

    #[test]
    fn canvas_matches_set_difference() {
        let region = region_of(&[
            Mark::new([20.0, 20.0], 6.0, MarkerType::FilledSquare),
            Mark::new([27.0, 22.0], 6.0, MarkerType::FilledSquare),
        ]);
        let mut ev = RegionEvaluator::new(&region, LossParams::default(), 11).unwrap();
        for n in 1..=4 {
            for m in [
                MarkerType::FilledCircle,
                MarkerType::HollowDiamond,
                MarkerType::Plus,
            ] {
                let fast = ev.symmetric_difference(n, m, 2.0).unwrap();
                let v = revisualize(ev.clustering(n).unwrap(), m, 2.0).unwrap();
                assert_eq!(fast, sym_diff_size(region.pixels(), &v));
            }
        }
    }

    #[test]
    fn n_out_of_range_is_error() {
        let region = region_of(&[Mark::new([10.0, 10.0], 4.0, MarkerType::FilledCircle)]);
        let params = LossParams {
            space_factor: 10.0,
            ..LossParams::default()
        };
        let n_max = params.n_max(region.len());
        assert!(loss(&region, 0, MarkerType::FilledCircle, &params, 0).is_err());
        assert!(loss(&region, n_max + 1, MarkerType::FilledCircle, &params, 0).is_err());
    }

    #[test]
    fn clustering_shared_across_markers() {
        let region = region_of(&[Mark::new([10.0, 10.0], 8.0, MarkerType::FilledCircle)]);
        let mut ev = RegionEvaluator::new(
            &region,
            LossParams {
                space_factor: 10.0,
                ..LossParams::default()
            },
            0,
        )
        .unwrap();
        for m in MarkerType::ALL {
            ev.loss(3, m).unwrap();
        }
        assert_eq!(ev.kmeans_runs(), 1);
        assert_eq!(ev.loss_evaluations(), 11);
    }

    #[test]
    fn singleton_clusters_do_not_exceed_single_cluster_difference() {
        let region = region_of(&[
            Mark::new([10.0, 10.0], 3.0, MarkerType::FilledCircle),
            Mark::new([14.0, 11.0], 3.0, MarkerType::FilledCircle),
        ]);
        let mut ev = RegionEvaluator::new(&region, LossParams::default(), 5).unwrap();
        let all = region.len();
        let f_all = ev
            .symmetric_difference(all, MarkerType::FilledCircle, 2.0)
            .unwrap();
        let f_one = ev
            .symmetric_difference(1, MarkerType::FilledCircle, 2.0)
            .unwrap();
        assert_eq!(f_all, 0);
        assert!(f_all <= f_one);
    }

    proptest! {
        #[test]
        fn breakdown_invariants(
            spread in 0.3f64..1.2, dy in -1.0f64..1.0, r in 3.0f64..7.0,
            alpha in 0.0f64..3.0, beta in 0.0f64..10.0, seed in any::<u64>(), k in 0usize..11,
        ) {
            let region = region_of(&[
                Mark::new([20.0, 20.0], r, MarkerType::FilledCircle),
                Mark::new([20.0 + spread * r, 20.0 + dy], r, MarkerType::FilledCircle),
            ]);
            let params = LossParams { alpha, beta, space_factor: 8.0, ..LossParams::default() };
            let m = MarkerType::ALL[k];
            let mut ev = RegionEvaluator::new(&region, params, seed).unwrap();
            let mut prev_g = None;
            for n in 1..=ev.n_max().min(4) {
                let b = ev.loss(n, m).unwrap();
                prop_assert!(b.f >= 0.0 && b.g >= 0.0 && b.h >= 0.0);
                prop_assert!((b.total - (b.f + alpha * b.g + beta * b.h)).abs() < 1e-9);
                prop_assert!((b.total_with(alpha, 0.0) - (b.f + alpha * b.g)).abs() < 1e-12);
                if n == 1 {
                    prop_assert_eq!(b.h, 0.0);
                }
                // with f held fixed, g grows with n
                let g_fixed = n as f64 / ev.n_max() as f64 * 100.0 + n as f64 * 8f64.sqrt();
                if let Some(p) = prev_g {
                    prop_assert!(g_fixed > p);
                }
                prev_g = Some(g_fixed);
                let again = loss(&region, n, m, &params, seed).unwrap();
                prop_assert_eq!(again, b);
            }
        }
    }
}
