//! End-to-end localization: binarize, split into regions, recognize single
//! marks in advance (RSMA), anneal every multi-mark region and collect the
//! resulting marks.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::annealer::{anneal, AnnealParams, LogBase};
use crate::clustering::KMeansOptions;
use crate::error::{Error, Result};
use crate::objective::{LossParams, RegionEvaluator, DEFAULT_STROKE_WIDTH};
use crate::par::{self, Parallelism};
use crate::raster::{extract_regions, BinaryRegion, GrayImage, Threshold};
use crate::revis::{Mark, MarkerType};
use crate::seed;

/// How the space setting factor is chosen per image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceFactor {
    /// `kappa * E(S)` from the single marks of the image.
    Rsma {
        kappa: f64,
    },
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocatorConfig {
    pub threshold: Threshold,
    pub invert: bool,
    pub min_region_px: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma_s: f64,
    pub gamma_m: f64,
    pub c_sigma: f64,
    pub t_min: f64,
    pub log_base: LogBase,
    pub space_factor: SpaceFactor,
    /// Used when no region classifies as a single mark.
    pub fallback_space_factor: f64,
    /// Largest relative symmetric difference of a single mark.
    pub single_tau: f64,
    /// Anneal multi-mark regions with the RSMA marker only.
    pub restrict_marker: bool,
    pub markers: Vec<MarkerType>,
    pub seed: u64,
    pub kmeans_restarts: usize,
    #[serde(skip)]
    pub parallelism: Parallelism,
}

impl Default for LocatorConfig {
    fn default() -> Self {
        Self {
            threshold: Threshold::Auto,
            invert: false,
            min_region_px: 4,
            alpha: 1.1,
            beta: 1.0,
            gamma_s: 1.5,
            gamma_m: 1.5,
            c_sigma: 6.0,
            t_min: 0.1,
            log_base: LogBase::Natural,
            space_factor: SpaceFactor::Rsma { kappa: 0.8 },
            fallback_space_factor: 60.0,
            single_tau: 0.2,
            restrict_marker: true,
            markers: MarkerType::ALL.to_vec(),
            seed: 0,
            kmeans_restarts: crate::clustering::DEFAULT_RESTARTS,
            parallelism: Parallelism::Parallel,
        }
    }
}

/// Outcome of testing whether a region is one isolated mark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleClassification {
    pub is_single: bool,
    pub best_marker: MarkerType,
    /// `min_m f(C, 1, m) / |C|`.
    pub relative_diff: f64,
    /// Stroke that fit best (hollow markers), otherwise the default stroke.
    pub stroke_width: f64,
    pub centroid: [f64; 2],
    pub radius: f64,
    pub pixel_count: usize,
}

/// Re-visualizes the region as one mark of every candidate type and keeps
/// the closest. Hollow types are also fitted over integer strokes
/// `1..=max(1, floor(r / 2))`.
pub fn classify_single(
    region: &BinaryRegion,
    markers: &[MarkerType],
    tau: f64,
) -> Result<SingleClassification> {
    if markers.is_empty() {
        return Err(Error::EmptyMarkerSet);
    }
    let mut ev = RegionEvaluator::new(region, LossParams::default(), 0)?;
    let (centroid, radius) = {
        let c = ev.clustering(1)?;
        (c.centroids[0], c.radii[0])
    };
    let max_stroke = ((radius / 2.0).floor() as usize).max(1);
    let mut best: Option<(usize, MarkerType, f64)> = None;
    for &m in markers {
        let strokes: Vec<f64> = if m.is_hollow() {
            (1..=max_stroke).map(|w| w as f64).collect()
        } else {
            vec![DEFAULT_STROKE_WIDTH]
        };
        for w in strokes {
            let f = ev.symmetric_difference(1, m, w)?;
            if best.is_none_or(|(bf, _, _)| f < bf) {
                best = Some((f, m, w));
            }
        }
    }
    let (f, best_marker, stroke_width) = best.expect("markers nonempty");
    let relative_diff = f as f64 / region.len() as f64;
    Ok(SingleClassification {
        is_single: relative_diff <= tau,
        best_marker,
        relative_diff,
        stroke_width,
        centroid,
        radius,
        pixel_count: region.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsmaEstimate {
    pub single_mark_sizes: Vec<usize>,
    /// Mean single-mark size `E(S)`; `None` without single marks.
    pub expected_size: Option<f64>,
    /// Most frequent best marker among single marks.
    pub estimated_marker: Option<MarkerType>,
    /// Median fitted stroke of hollow single marks.
    pub estimated_stroke: f64,
    pub kappa: f64,
    pub space_factor: f64,
    /// True when no single marks were found and the fallback was used.
    pub fallback: bool,
}

/// Derives the space factor and dominant marker from already classified
/// regions.
pub fn rsma_from_classifications(
    classes: &[SingleClassification],
    kappa: f64,
    fallback_space_factor: f64,
) -> RsmaEstimate {
    let singles: Vec<&SingleClassification> = classes.iter().filter(|c| c.is_single).collect();
    let sizes: Vec<usize> = singles.iter().map(|c| c.pixel_count).collect();
    if sizes.is_empty() {
        return RsmaEstimate {
            single_mark_sizes: sizes,
            expected_size: None,
            estimated_marker: None,
            estimated_stroke: DEFAULT_STROKE_WIDTH,
            kappa,
            space_factor: fallback_space_factor,
            fallback: true,
        };
    }
    let mean = sizes.iter().sum::<usize>() as f64 / sizes.len() as f64;

    let mut votes = [0usize; 11];
    for c in &singles {
        votes[c.best_marker.index()] += 1;
    }
    // ties go to the earlier marker in the canonical order
    let modal = (0..11).fold(0, |b, i| if votes[i] > votes[b] { i } else { b });
    let marker = MarkerType::ALL[modal];

    let mut strokes: Vec<f64> = singles
        .iter()
        .filter(|c| c.best_marker.is_hollow())
        .map(|c| c.stroke_width)
        .collect();
    strokes.sort_by(f64::total_cmp);
    let stroke = if strokes.is_empty() {
        DEFAULT_STROKE_WIDTH
    } else {
        strokes[(strokes.len() - 1) / 2]
    };

    let mut space_factor = kappa * mean;
    if let Some(upper) = classes
        .iter()
        .filter(|c| !c.is_single)
        .map(|c| c.pixel_count as f64)
        .reduce(f64::min)
    {
        space_factor = space_factor.min(upper - 1e-9);
    }
    space_factor = space_factor.max(1.0 + 1e-9);

    RsmaEstimate {
        single_mark_sizes: sizes,
        expected_size: Some(mean),
        estimated_marker: Some(marker),
        estimated_stroke: stroke,
        kappa,
        space_factor,
        fallback: false,
    }
}

/// Classifies every region and estimates the marker size, type and stroke.
pub fn rsma(
    regions: &[BinaryRegion],
    markers: &[MarkerType],
    kappa: f64,
    tau: f64,
    fallback_space_factor: f64,
    parallelism: Parallelism,
) -> Result<(RsmaEstimate, Vec<SingleClassification>)> {
    if markers.is_empty() {
        return Err(Error::EmptyMarkerSet);
    }
    let classes = par::map(parallelism, regions, |_, r| {
        classify_single(r, markers, tau)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok((
        rsma_from_classifications(&classes, kappa, fallback_space_factor),
        classes,
    ))
}

/// One located mark as written to prediction files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocatedMark {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    pub marker: MarkerType,
    pub region_id: Option<usize>,
}

impl LocatedMark {
    pub fn center(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn to_mark(&self) -> Mark {
        Mark::new([self.x, self.y], self.radius, self.marker)
    }
}

/// How one region was explained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub region_id: usize,
    pub pixel_count: usize,
    pub single: bool,
    pub n_max: usize,
    pub n: usize,
    pub marker: MarkerType,
    pub loss: Option<f64>,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkSet {
    pub source_image: String,
    pub marks: Vec<LocatedMark>,
    pub regions: Vec<RegionSummary>,
    pub rsma: Option<RsmaEstimate>,
    pub space_factor: Option<f64>,
    /// Wall time per region in milliseconds, in region order.
    #[serde(skip)]
    pub region_timing_ms: Vec<f64>,
    #[serde(skip)]
    pub total_timing_ms: f64,
}

impl MarkSet {
    pub fn empty(source_image: impl Into<String>) -> Self {
        Self {
            source_image: source_image.into(),
            marks: Vec::new(),
            regions: Vec::new(),
            rsma: None,
            space_factor: None,
            region_timing_ms: Vec::new(),
            total_timing_ms: 0.0,
        }
    }

    pub fn centers(&self) -> Vec<[f64; 2]> {
        self.marks.iter().map(|m| m.center()).collect()
    }
}

struct RegionOutcome {
    marks: Vec<LocatedMark>,
    summary: RegionSummary,
    millis: f64,
}

/// Locates all marks of `image`.
pub fn locate(image: &GrayImage, source: &str, config: &LocatorConfig) -> Result<MarkSet> {
    let start = Instant::now();
    let regions = extract_regions(image, config.threshold, config.invert, config.min_region_px);
    let mut set = locate_regions(&regions, source, config)?;
    set.total_timing_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(set)
}

/// Locates marks in already extracted regions; region ids are slice indices.
pub fn locate_regions(
    regions: &[BinaryRegion],
    source: &str,
    config: &LocatorConfig,
) -> Result<MarkSet> {
    if config.markers.is_empty() {
        return Err(Error::EmptyMarkerSet);
    }
    if regions.is_empty() {
        return Ok(MarkSet::empty(source));
    }
    let kappa = match config.space_factor {
        SpaceFactor::Rsma { kappa } => kappa,
        SpaceFactor::Fixed(_) => f64::NAN,
    };
    let (estimate, classes) = rsma(
        regions,
        &config.markers,
        kappa,
        config.single_tau,
        config.fallback_space_factor,
        config.parallelism,
    )?;
    let space_factor = match config.space_factor {
        SpaceFactor::Rsma { .. } => estimate.space_factor,
        SpaceFactor::Fixed(f) => f,
    };
    let search_markers: Vec<MarkerType> = match estimate.estimated_marker {
        Some(m) if config.restrict_marker => vec![m],
        _ => config.markers.clone(),
    };
    let loss_params = LossParams {
        alpha: config.alpha,
        beta: config.beta,
        space_factor,
        stroke_width: estimate.estimated_stroke,
        kmeans: KMeansOptions {
            restarts: config.kmeans_restarts,
            ..KMeansOptions::default()
        },
    };
    loss_params.validate()?;

    let outcomes = par::map(config.parallelism, regions, |id, region| {
        let t = Instant::now();
        let class = &classes[id];
        let mut outcome = if class.is_single {
            Ok(RegionOutcome {
                marks: vec![LocatedMark {
                    x: class.centroid[0],
                    y: class.centroid[1],
                    radius: class.radius,
                    marker: class.best_marker,
                    region_id: Some(id),
                }],
                summary: RegionSummary {
                    region_id: id,
                    pixel_count: region.len(),
                    single: true,
                    n_max: loss_params.n_max(region.len()),
                    n: 1,
                    marker: class.best_marker,
                    loss: None,
                    evaluations: 0,
                },
                millis: 0.0,
            })
        } else {
            anneal_region(region, id, &loss_params, &search_markers, config)
        };
        if let Ok(o) = outcome.as_mut() {
            o.millis = t.elapsed().as_secs_f64() * 1e3;
        }
        outcome
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut set = MarkSet::empty(source);
    for o in outcomes {
        set.marks.extend(o.marks);
        set.regions.push(o.summary);
        set.region_timing_ms.push(o.millis);
    }
    set.rsma = Some(estimate);
    set.space_factor = Some(space_factor);
    Ok(set)
}

fn anneal_region(
    region: &BinaryRegion,
    id: usize,
    loss_params: &LossParams,
    markers: &[MarkerType],
    config: &LocatorConfig,
) -> Result<RegionOutcome> {
    let region_seed = seed::derive(config.seed, id as u64);
    let mut ev = RegionEvaluator::new(region, *loss_params, seed::derive(region_seed, 0))?;
    let params = AnnealParams {
        gamma_s: config.gamma_s,
        gamma_m: config.gamma_m,
        c_sigma: config.c_sigma,
        t_min: config.t_min,
        seed: seed::derive(region_seed, 1),
        log_base: config.log_base,
        initial_temperature: None,
        record_trace: false,
    };
    let result = anneal(&mut ev, markers, &params)?;
    let clusters = ev.clustering(result.best_n)?;
    let marks = clusters
        .centroids
        .iter()
        .zip(&clusters.radii)
        .map(|(c, &r)| LocatedMark {
            x: c[0],
            y: c[1],
            radius: r,
            marker: result.best_m,
            region_id: Some(id),
        })
        .collect();
    Ok(RegionOutcome {
        marks,
        summary: RegionSummary {
            region_id: id,
            pixel_count: region.len(),
            single: false,
            n_max: result.n_max,
            n: result.best_n,
            marker: result.best_m,
            loss: Some(result.best_loss),
            evaluations: result.evaluations,
        },
        millis: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{connected_regions, PixelSet};
    use crate::revis::rasterize_mark;

    fn region_of(marks: &[Mark], stroke: f64) -> BinaryRegion {
        let set = marks.iter().fold(PixelSet::new(), |acc, m| {
            acc.union(&rasterize_mark(m, stroke).unwrap())
        });
        let mut regions = connected_regions(&set);
        assert_eq!(regions.len(), 1);
        regions.remove(0)
    }

    fn image_of(marks: &[Mark], w: usize, h: usize) -> GrayImage {
        let mut img = GrayImage::filled(w, h, 255).unwrap();
        for m in marks {
            img.paint(&rasterize_mark(m, 2.0).unwrap(), 0);
        }
        img
    }

    #[test]
    fn perfect_square_is_single() {
        let region = region_of(
            &[Mark::new([20.0, 20.0], 7.0, MarkerType::FilledSquare)],
            2.0,
        );
        let c = classify_single(&region, &MarkerType::ALL, 0.2).unwrap();
        assert!(c.is_single);
        assert_eq!(c.best_marker, MarkerType::FilledSquare);
        assert_eq!(c.relative_diff, 0.0);
    }

    #[test]
    fn hollow_single_recovers_stroke() {
        let region = region_of(
            &[Mark::new([20.0, 20.0], 8.0, MarkerType::HollowCircle)],
            3.0,
        );
        let c = classify_single(&region, &MarkerType::ALL, 0.2).unwrap();
        assert!(c.is_single);
        assert_eq!(c.best_marker, MarkerType::HollowCircle);
        assert_eq!(c.stroke_width, 3.0);
    }

    #[test]
    fn bridged_dumbbell_is_not_single() {
        let a = Mark::new([10.0, 10.0], 5.0, MarkerType::FilledCircle);
        let b = Mark::new([30.0, 10.0], 5.0, MarkerType::FilledCircle);
        let mut set = rasterize_mark(&a, 2.0)
            .unwrap()
            .union(&rasterize_mark(&b, 2.0).unwrap());
        let bridge: PixelSet = (15..=25)
            .map(|x| crate::raster::Pixel::new(x, 10))
            .collect();
        set = set.union(&bridge);
        let regions = connected_regions(&set);
        assert_eq!(regions.len(), 1);
        let c = classify_single(&regions[0], &MarkerType::ALL, 0.2).unwrap();
        assert!(!c.is_single, "ratio {}", c.relative_diff);
        assert!(c.relative_diff > 0.2);
    }

    #[test]
    fn classify_rejects_empty_markers() {
        let region = region_of(&[Mark::new([5.0, 5.0], 3.0, MarkerType::FilledCircle)], 2.0);
        assert!(matches!(
            classify_single(&region, &[], 0.2),
            Err(Error::EmptyMarkerSet)
        ));
    }

    fn single(size: usize) -> SingleClassification {
        SingleClassification {
            is_single: true,
            best_marker: MarkerType::FilledCircle,
            relative_diff: 0.0,
            stroke_width: 2.0,
            centroid: [0.0, 0.0],
            radius: 5.0,
            pixel_count: size,
        }
    }

    #[test]
    fn rsma_arithmetic() {
        let same = rsma_from_classifications(&[single(120), single(120), single(120)], 0.5, 60.0);
        assert_eq!(same.expected_size, Some(120.0));
        assert_eq!(same.space_factor, 60.0);
        assert!(!same.fallback);

        let mixed = rsma_from_classifications(&[single(100), single(140)], 0.5, 60.0);
        assert_eq!(mixed.space_factor, 60.0);

        let none = rsma_from_classifications(
            &[SingleClassification {
                is_single: false,
                ..single(500)
            }],
            0.5,
            60.0,
        );
        assert!(none.fallback);
        assert_eq!(none.space_factor, 60.0);
        assert_eq!(none.estimated_marker, None);
    }

    #[test]
    fn rsma_clamps_below_smallest_multi_region() {
        let classes = [
            single(100),
            SingleClassification {
                is_single: false,
                ..single(50)
            },
        ];
        let e = rsma_from_classifications(&classes, 0.8, 60.0);
        assert!(e.space_factor < 50.0 && e.space_factor > 49.9);
    }

    #[test]
    fn five_disjoint_circles() {
        let centers = [
            [20.0, 20.0],
            [60.0, 25.0],
            [100.0, 30.0],
            [30.0, 80.0],
            [90.0, 90.0],
        ];
        let marks: Vec<Mark> = centers
            .iter()
            .map(|&c| Mark::new(c, 6.0, MarkerType::FilledCircle))
            .collect();
        let img = image_of(&marks, 120, 120);
        let set = locate(&img, "five", &LocatorConfig::default()).unwrap();
        assert_eq!(set.marks.len(), 5);
        for (m, c) in set.marks.iter().zip(&centers) {
            // regions are ordered by bounding box corner, which here matches
            let d = ((m.x - c[0]).powi(2) + (m.y - c[1]).powi(2)).sqrt();
            assert!(d < 0.5);
            assert!((m.radius - 6.0).abs() <= 0.5);
            assert_eq!(m.marker, MarkerType::FilledCircle);
        }
    }

    #[test]
    fn blank_image_gives_empty_set() {
        let img = GrayImage::filled(40, 30, 255).unwrap();
        let set = locate(&img, "blank", &LocatorConfig::default()).unwrap();
        assert!(set.marks.is_empty());
        assert!(set.regions.is_empty());
    }

    #[test]
    fn deterministic_and_scheduling_independent() {
        let marks: Vec<Mark> = [
            [20.0, 20.0],
            [27.0, 22.0],
            [60.0, 60.0],
            [66.0, 57.0],
            [63.0, 66.0],
            [100.0, 20.0],
        ]
        .iter()
        .map(|&c| Mark::new(c, 6.0, MarkerType::FilledCircle))
        .collect();
        let img = image_of(&marks, 120, 100);
        let cfg = LocatorConfig {
            seed: 5,
            ..LocatorConfig::default()
        };
        let a = locate(&img, "x", &cfg).unwrap();
        let b = locate(
            &img,
            "x",
            &LocatorConfig {
                parallelism: Parallelism::Sequential,
                ..cfg.clone()
            },
        )
        .unwrap();
        assert_eq!(a.marks, b.marks);
        assert_eq!(a.regions, b.regions);
        assert!(a.marks.len() >= a.regions.len());
        for s in &a.regions {
            assert!(s.n >= 1 && s.n <= s.n_max);
        }
    }
}
