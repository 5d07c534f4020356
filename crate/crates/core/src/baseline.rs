//! Filter-based comparator: Gaussian smoothing of the foreground indicator
//! followed by local-maximum peak picking with non-maximum suppression.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::locator::{rsma, LocatedMark, MarkSet};
use crate::par::Parallelism;
use crate::raster::{binarize, connected_regions, GrayImage, Threshold};
use crate::revis::MarkerType;

/// Kernel used when no single mark is found to size it.
pub const FALLBACK_KERNEL: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelSize {
    Fixed(usize),
    /// `round(2 * sqrt(E(S) / pi))` from the mean single-mark size.
    Rsma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub kernel: KernelSize,
    /// Defaults to half the kernel size.
    pub peak_min_distance: Option<f64>,
    pub peak_rel_threshold: f64,
    pub threshold: Threshold,
    pub invert: bool,
    pub min_region_px: usize,
    pub single_tau: f64,
    #[serde(skip)]
    pub parallelism: Parallelism,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            kernel: KernelSize::Rsma,
            peak_min_distance: None,
            peak_rel_threshold: 0.3,
            threshold: Threshold::Auto,
            invert: false,
            min_region_px: 4,
            single_tau: 0.2,
            parallelism: Parallelism::default(),
        }
    }
}

/// Odd kernel size >= 3; even sizes round up.
pub fn odd_kernel(k: usize) -> usize {
    let k = k.max(3);
    if k.is_multiple_of(2) {
        k + 1
    } else {
        k
    }
}

/// Kernel size matching a disk of area `expected_size`.
pub fn kernel_from_size(expected_size: f64) -> usize {
    odd_kernel((2.0 * (expected_size / std::f64::consts::PI).sqrt()).round() as usize)
}

/// Normalized 1-D Gaussian taps of length `k`, `sigma = k / 4`.
pub fn gaussian_taps(k: usize) -> Vec<f64> {
    let sigma = k as f64 / 4.0;
    let half = (k / 2) as f64;
    let raw: Vec<f64> = (0..k)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

/// Separable convolution with zero padding; `field` is row-major `w x h`.
pub fn smooth(field: &[f64], w: usize, h: usize, k: usize) -> Vec<f64> {
    let taps = gaussian_taps(k);
    let half = (k / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &field[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (t, &c) in taps.iter().enumerate() {
                let xs = x as isize + t as isize - half;
                if xs >= 0 && (xs as usize) < w {
                    acc += c * row[xs as usize];
                }
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (t, &c) in taps.iter().enumerate() {
                let ys = y as isize + t as isize - half;
                if ys >= 0 && (ys as usize) < h {
                    acc += c * tmp[ys as usize * w + x];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Local maxima (>= all 8 neighbours, > `rel * max`), suppressed greedily in
/// decreasing value within `min_distance`. Returns `(x, y)` in acceptance order.
pub fn find_peaks(
    map: &[f64],
    w: usize,
    h: usize,
    rel: f64,
    min_distance: f64,
) -> Vec<(usize, usize)> {
    let global = map.iter().copied().fold(0.0f64, f64::max);
    if global <= 0.0 {
        return Vec::new();
    }
    let floor = rel * global;
    let mut candidates = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = map[y * w + x];
            if v <= floor {
                continue;
            }
            let mut is_max = true;
            'nb: for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if (dx, dy) == (0, 0)
                        || nx < 0
                        || ny < 0
                        || nx as usize >= w
                        || ny as usize >= h
                    {
                        continue;
                    }
                    if map[ny as usize * w + nx as usize] > v {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                candidates.push((v, x, y));
            }
        }
    }
    // value descending, then row-major
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.2, a.1).cmp(&(b.2, b.1))));
    let d2 = min_distance * min_distance;
    let mut kept: Vec<(usize, usize)> = Vec::new();
    for (_, x, y) in candidates {
        let clear = kept.iter().all(|&(kx, ky)| {
            let (dx, dy) = (kx as f64 - x as f64, ky as f64 - y as f64);
            dx * dx + dy * dy > d2
        });
        if clear {
            kept.push((x, y));
        }
    }
    kept
}

/// Locates marks as smoothed-foreground peaks.
pub fn filter_locate(image: &GrayImage, source: &str, config: &FilterConfig) -> Result<MarkSet> {
    if !(0.0..1.0).contains(&config.peak_rel_threshold) {
        return Err(Error::InvalidParameter(format!(
            "peak_rel_threshold must lie in [0, 1), got {}",
            config.peak_rel_threshold
        )));
    }
    let (w, h) = (image.width(), image.height());
    let foreground = binarize(image, config.threshold, config.invert);
    let regions: Vec<_> = connected_regions(&foreground)
        .into_iter()
        .filter(|r| r.len() >= config.min_region_px)
        .collect();
    let mut set = MarkSet::empty(source);
    if regions.is_empty() {
        return Ok(set);
    }

    let (estimate, _) = rsma(
        &regions,
        &MarkerType::ALL,
        1.0,
        config.single_tau,
        1.0 + 1e-9,
        config.parallelism,
    )?;
    let k = match config.kernel {
        KernelSize::Fixed(k) => odd_kernel(k),
        KernelSize::Rsma => estimate
            .expected_size
            .map_or(FALLBACK_KERNEL, kernel_from_size),
    };
    let marker = estimate
        .estimated_marker
        .unwrap_or(MarkerType::FilledCircle);
    let min_distance = config.peak_min_distance.unwrap_or(k as f64 / 2.0);

    let mut label = vec![usize::MAX; w * h];
    let mut field = vec![0.0; w * h];
    for (id, region) in regions.iter().enumerate() {
        for p in region.pixels().iter() {
            let i = p.y as usize * w + p.x as usize;
            label[i] = id;
            field[i] = 1.0;
        }
    }
    let map = smooth(&field, w, h, k);
    let mut peaks = find_peaks(&map, w, h, config.peak_rel_threshold, min_distance);
    peaks.sort_by_key(|&(x, y)| (y, x));
    set.marks = peaks
        .into_iter()
        .map(|(x, y)| {
            let l = label[y * w + x];
            LocatedMark {
                x: x as f64,
                y: y as f64,
                radius: k as f64 / 2.0,
                marker,
                region_id: (l != usize::MAX).then_some(l),
            }
        })
        .collect();
    set.rsma = Some(estimate);
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::revis::{rasterize_mark, Mark};
    use proptest::prelude::*;

    fn draw(marks: &[Mark], w: usize, h: usize) -> GrayImage {
        let mut img = GrayImage::filled(w, h, 255).unwrap();
        for m in marks {
            for p in rasterize_mark(m, 2.0).unwrap().iter() {
                if p.x >= 0 && p.y >= 0 && (p.x as usize) < w && (p.y as usize) < h {
                    img.set(p.x as usize, p.y as usize, 0);
                }
            }
        }
        img
    }

    fn circle(x: f64, y: f64) -> Mark {
        Mark::new([x, y], 6.0, MarkerType::FilledCircle)
    }

    #[test]
    fn kernel_sizes_are_odd() {
        assert_eq!(odd_kernel(1), 3);
        assert_eq!(odd_kernel(10), 11);
        assert_eq!(odd_kernel(15), 15);
        // disk of radius 6 has 113 pixels -> 2 * sqrt(113 / pi) = 12.0 -> 13
        assert_eq!(kernel_from_size(113.0), 13);
        for k in [3, 5, 11, 21] {
            let t = gaussian_taps(k);
            assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(t[0], t[k - 1]);
        }
    }

    #[test]
    fn single_circle_gives_one_central_peak() {
        let img = draw(&[circle(30.0, 25.0)], 60, 50);
        let set = filter_locate(&img, "one", &FilterConfig::default()).unwrap();
        assert_eq!(set.marks.len(), 1);
        let m = set.marks[0];
        assert!((m.x - 30.0).abs() <= 1.0 && (m.y - 25.0).abs() <= 1.0);
        assert_eq!(m.region_id, Some(0));
        assert_eq!(m.marker, MarkerType::FilledCircle);
    }

    #[test]
    fn two_distant_circles_give_two_peaks() {
        let img = draw(&[circle(20.0, 30.0), circle(70.0, 30.0)], 90, 60);
        let set = filter_locate(&img, "two", &FilterConfig::default()).unwrap();
        assert_eq!(set.marks.len(), 2);
        assert!((set.marks[0].x - 20.0).abs() <= 1.0);
        assert!((set.marks[1].x - 70.0).abs() <= 1.0);
    }

    #[test]
    fn blank_image_has_no_peaks() {
        let img = GrayImage::filled(20, 20, 255).unwrap();
        assert!(filter_locate(&img, "blank", &FilterConfig::default())
            .unwrap()
            .marks
            .is_empty());
        let bad = FilterConfig {
            peak_rel_threshold: 1.5,
            ..FilterConfig::default()
        };
        assert!(filter_locate(&img, "blank", &bad).is_err());
    }

    #[test]
    fn nms_keeps_strongest_of_close_peaks() {
        let mut map = vec![0.0; 10];
        map[2] = 1.0;
        map[4] = 0.9;
        map[8] = 0.8;
        assert_eq!(find_peaks(&map, 10, 1, 0.1, 3.0), vec![(2, 0), (8, 0)]);
        assert_eq!(
            find_peaks(&map, 10, 1, 0.1, 1.0),
            vec![(2, 0), (4, 0), (8, 0)]
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn peak_count_is_translation_invariant(tx in 0usize..15, ty in 0usize..15, gap in 9.0f64..30.0) {
            let base = [circle(20.0, 20.0), circle(20.0 + gap, 24.0), circle(24.0, 20.0 + gap)];
            let shifted: Vec<Mark> = base
                .iter()
                .map(|m| circle(m.center[0] + tx as f64, m.center[1] + ty as f64))
                .collect();
            let cfg = FilterConfig { kernel: KernelSize::Fixed(9), ..FilterConfig::default() };
            let a = filter_locate(&draw(&base, 90, 90), "a", &cfg).unwrap();
            let b = filter_locate(&draw(&shifted, 90, 90), "b", &cfg).unwrap();
            prop_assert_eq!(a.marks.len(), b.marks.len());
        }
    }
}
