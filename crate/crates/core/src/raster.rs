//! Image loading, binarization and 8-connected region extraction.

use std::cmp::Ordering;
use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer pixel coordinate. The pixel's center is the point `(x, y)`.
/// Ordered row-major: by `y`, then `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pixel {
    pub x: i32,
    pub y: i32,
}

impl Pixel {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }
}

impl Ord for Pixel {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.y, self.x).cmp(&(other.y, other.x))
    }
}

impl PartialOrd for Pixel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A set of pixels stored sorted (row-major) and deduplicated.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct PixelSet(Vec<Pixel>);

impl PixelSet {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    pub fn from_sorted_unchecked(pixels: Vec<Pixel>) -> Self {
        debug_assert!(pixels.windows(2).all(|w| w[0] < w[1]));
        Self(pixels)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, p: &Pixel) -> bool {
        self.0.binary_search(p).is_ok()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Pixel> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[Pixel] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<Pixel> {
        self.0
    }

    pub fn union(&self, other: &PixelSet) -> PixelSet {
        let mut out = Vec::with_capacity(self.len() + other.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                Ordering::Less => {
                    out.push(self.0[i]);
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(other.0[j]);
                    j += 1;
                }
                Ordering::Equal => {
                    out.push(self.0[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.0[i..]);
        out.extend_from_slice(&other.0[j..]);
        PixelSet(out)
    }

    pub fn intersection_len(&self, other: &PixelSet) -> usize {
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                Ordering::Less => i += 1,
                Ordering::Greater => j += 1,
                Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }

    pub fn is_subset(&self, other: &PixelSet) -> bool {
        self.intersection_len(other) == self.len()
    }

    pub fn bounding_box(&self) -> Option<BoundingBox> {
        BoundingBox::of(&self.0)
    }
}

impl FromIterator<Pixel> for PixelSet {
    fn from_iter<I: IntoIterator<Item = Pixel>>(iter: I) -> Self {
        let mut v: Vec<Pixel> = iter.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        PixelSet(v)
    }
}

impl<'a> IntoIterator for &'a PixelSet {
    type Item = &'a Pixel;
    type IntoIter = std::slice::Iter<'a, Pixel>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Inclusive pixel bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_x: i32,
    pub min_y: i32,
    pub max_x: i32,
    pub max_y: i32,
}

impl BoundingBox {
    pub fn of(pixels: &[Pixel]) -> Option<Self> {
        let first = pixels.first()?;
        let mut bb = BoundingBox {
            min_x: first.x,
            min_y: first.y,
            max_x: first.x,
            max_y: first.y,
        };
        for p in pixels {
            bb.min_x = bb.min_x.min(p.x);
            bb.min_y = bb.min_y.min(p.y);
            bb.max_x = bb.max_x.max(p.x);
            bb.max_y = bb.max_y.max(p.y);
        }
        Some(bb)
    }

    pub fn width(&self) -> usize {
        (self.max_x - self.min_x + 1) as usize
    }

    pub fn height(&self) -> usize {
        (self.max_y - self.min_y + 1) as usize
    }
}

/// 8-bit luminance image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    values: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, values: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(Error::InvalidImage {
                width,
                height,
                len: values.len(),
            });
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    /// An image filled with one value.
    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Converts interleaved RGB to luminance with BT.601 weights.
    pub fn from_rgb(width: usize, height: usize, rgb: &[u8]) -> Result<Self> {
        if rgb.len() != width * height * 3 {
            return Err(Error::InvalidImage {
                width,
                height,
                len: rgb.len() / 3,
            });
        }
        let values = rgb
            .chunks_exact(3)
            .map(|c| luma_bt601(c[0], c[1], c[2]))
            .collect();
        Self::new(width, height, values)
    }

    /// Loads an 8-bit gray or RGB(A) PNG. Alpha is composited onto white.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|source| Error::ImageRead {
            path: path.to_path_buf(),
            source,
        })?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        match img {
            image::DynamicImage::ImageLuma8(buf) => Self::new(w, h, buf.into_raw()),
            other => {
                let rgba = other.to_rgba8();
                let values = rgba
                    .pixels()
                    .map(|p| {
                        let [r, g, b, a] = p.0;
                        let y = luma_bt601(r, g, b) as f64;
                        let a = a as f64 / 255.0;
                        (a * y + (1.0 - a) * 255.0).round() as u8
                    })
                    .collect();
                Self::new(w, h, values)
            }
        }
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        image::save_buffer(
            path,
            &self.values,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::L8,
        )
        .map_err(|source| Error::ImageWrite {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.values[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.values[y * self.width + x] = v;
    }

    /// Sets every in-bounds pixel of `pixels` to `value`.
    pub fn paint(&mut self, pixels: &PixelSet, value: u8) {
        for p in pixels {
            if p.x >= 0 && p.y >= 0 && (p.x as usize) < self.width && (p.y as usize) < self.height {
                self.set(p.x as usize, p.y as usize, value);
            }
        }
    }

    pub fn histogram(&self) -> [u64; 256] {
        let mut h = [0u64; 256];
        for &v in &self.values {
            h[v as usize] += 1;
        }
        h
    }
}

fn luma_bt601(r: u8, g: u8, b: u8) -> u8 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64).round() as u8
}

/// Binarization threshold. Pixels strictly darker than the threshold are
/// foreground.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    #[default]
    Auto,
    Fixed(u8),
}

/// Otsu's threshold `t` over a 256-bin histogram: the split `{<= t} | {> t}`
/// maximizing between-class variance. Ties keep the lowest `t`.
pub fn otsu_level(hist: &[u64; 256]) -> u8 {
    let total: u64 = hist.iter().sum();
    if total == 0 {
        return 0;
    }
    let sum_all: f64 = hist
        .iter()
        .enumerate()
        .map(|(i, &c)| i as f64 * c as f64)
        .sum();
    let (mut w0, mut sum0) = (0u64, 0.0f64);
    let (mut best_t, mut best_var) = (0u8, -1.0f64);
    for t in 0..255usize {
        w0 += hist[t];
        sum0 += t as f64 * hist[t] as f64;
        let w1 = total - w0;
        let var = if w0 == 0 || w1 == 0 {
            0.0
        } else {
            let m0 = sum0 / w0 as f64;
            let m1 = (sum_all - sum0) / w1 as f64;
            w0 as f64 * w1 as f64 * (m0 - m1) * (m0 - m1)
        };
        if var > best_var {
            best_var = var;
            best_t = t as u8;
        }
    }
    best_t
}

/// Foreground pixels of `image`. With `invert`, luminance is flipped first
/// so light marks on a dark background become foreground.
pub fn binarize(image: &GrayImage, threshold: Threshold, invert: bool) -> PixelSet {
    let lum = |v: u8| if invert { 255 - v } else { v };
    let cut: u16 = match threshold {
        Threshold::Fixed(t) => t as u16,
        Threshold::Auto => {
            let mut hist = [0u64; 256];
            for &v in image.values() {
                hist[lum(v) as usize] += 1;
            }
            otsu_level(&hist) as u16 + 1
        }
    };
    let mut out = Vec::new();
    for y in 0..image.height() {
        for x in 0..image.width() {
            if (lum(image.get(x, y)) as u16) < cut {
                out.push(Pixel::new(x as i32, y as i32));
            }
        }
    }
    PixelSet::from_sorted_unchecked(out)
}

/// A maximal 8-connected set of foreground pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryRegion {
    pixels: PixelSet,
    bbox: BoundingBox,
}

impl BinaryRegion {
    /// Wraps a nonempty pixel set. Connectivity is not checked here; see
    /// [`BinaryRegion::is_connected`].
    pub fn new(pixels: PixelSet) -> Result<Self> {
        let bbox = pixels.bounding_box().ok_or(Error::EmptyPixelSet)?;
        Ok(Self { pixels, bbox })
    }

    pub fn pixels(&self) -> &PixelSet {
        &self.pixels
    }

    pub fn bounding_box(&self) -> BoundingBox {
        self.bbox
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn is_connected(&self) -> bool {
        connected_regions(&self.pixels).len() == 1
    }
}

/// Partitions `foreground` into maximal 8-connected components, ordered by
/// `(min_y, min_x)` of their bounding boxes, then by first pixel.
pub fn connected_regions(foreground: &PixelSet) -> Vec<BinaryRegion> {
    let Some(bb) = foreground.bounding_box() else {
        return Vec::new();
    };
    let (w, h) = (bb.width(), bb.height());
    let idx = |p: &Pixel| (p.y - bb.min_y) as usize * w + (p.x - bb.min_x) as usize;
    // 0 = background, 1 = unvisited foreground, 2 = visited
    let mut grid = vec![0u8; w * h];
    for p in foreground {
        grid[idx(p)] = 1;
    }

    let mut regions = Vec::new();
    let mut queue = VecDeque::new();
    for start in foreground {
        if grid[idx(start)] != 1 {
            continue;
        }
        grid[idx(start)] = 2;
        queue.push_back(*start);
        let mut members = Vec::new();
        while let Some(p) = queue.pop_front() {
            members.push(p);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let q = Pixel::new(p.x + dx, p.y + dy);
                    if q.x < bb.min_x || q.x > bb.max_x || q.y < bb.min_y || q.y > bb.max_y {
                        continue;
                    }
                    let i = idx(&q);
                    if grid[i] == 1 {
                        grid[i] = 2;
                        queue.push_back(q);
                    }
                }
            }
        }
        members.sort_unstable();
        regions
            .push(BinaryRegion::new(PixelSet::from_sorted_unchecked(members)).expect("nonempty"));
    }
    regions.sort_by_key(|r| {
        let first = r.pixels.as_slice()[0];
        (r.bbox.min_y, r.bbox.min_x, first.y, first.x)
    });
    regions
}

/// Binarize, split into regions and drop regions smaller than
/// `min_region_px`.
pub fn extract_regions(
    image: &GrayImage,
    threshold: Threshold,
    invert: bool,
    min_region_px: usize,
) -> Vec<BinaryRegion> {
    connected_regions(&binarize(image, threshold, invert))
        .into_iter()
        .filter(|r| r.len() >= min_region_px)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(points: &[(i32, i32)]) -> PixelSet {
        points.iter().map(|&(x, y)| Pixel::new(x, y)).collect()
    }

    #[test]
    fn invalid_dimensions_rejected() {
        assert!(GrayImage::new(0, 3, vec![]).is_err());
        assert!(GrayImage::new(2, 2, vec![0; 3]).is_err());
    }

    #[test]
    fn uniform_white_auto_is_empty() {
        let img = GrayImage::filled(8, 5, 255).unwrap();
        assert!(binarize(&img, Threshold::Auto, false).is_empty());
    }

    #[test]
    fn single_black_pixel_fixed_threshold() {
        let mut img = GrayImage::filled(6, 6, 255).unwrap();
        img.set(2, 3, 0);
        assert_eq!(binarize(&img, Threshold::Fixed(128), false), set(&[(2, 3)]));
    }

    /// Brute-force Otsu: between-class variance for every split, first max.
    fn otsu_oracle(values: &[u8]) -> u8 {
        let mut best = (0u8, f64::NEG_INFINITY);
        for t in 0..255u16 {
            let (lo, hi): (Vec<f64>, Vec<f64>) = (
                values
                    .iter()
                    .filter(|&&v| v as u16 <= t)
                    .map(|&v| v as f64)
                    .collect(),
                values
                    .iter()
                    .filter(|&&v| v as u16 > t)
                    .map(|&v| v as f64)
                    .collect(),
            );
            let var = if lo.is_empty() || hi.is_empty() {
                0.0
            } else {
                let m0 = lo.iter().sum::<f64>() / lo.len() as f64;
                let m1 = hi.iter().sum::<f64>() / hi.len() as f64;
                lo.len() as f64 * hi.len() as f64 * (m0 - m1).powi(2)
            };
            if var > best.1 {
                best = (t as u8, var);
            }
        }
        best.0
    }

    #[test]
    fn bimodal_auto_selects_dark_pixels() {
        let values: Vec<u8> = (0..64).map(|i| if i % 2 == 0 { 0 } else { 255 }).collect();
        let img = GrayImage::new(8, 8, values.clone()).unwrap();
        assert_eq!(otsu_level(&img.histogram()), otsu_oracle(&values));
        let fg = binarize(&img, Threshold::Auto, false);
        assert_eq!(fg.len(), 32);
        assert!(fg.iter().all(|p| img.get(p.x as usize, p.y as usize) == 0));
    }

    #[test]
    fn otsu_matches_oracle_on_mixed_histogram() {
        let values: Vec<u8> = (0..200u32)
            .map(|i| ((i * 37) % 97 + (i % 3) * 60) as u8)
            .collect();
        let img = GrayImage::new(20, 10, values.clone()).unwrap();
        assert_eq!(otsu_level(&img.histogram()), otsu_oracle(&values));
    }

    #[test]
    fn inverted_binarization() {
        let mut img = GrayImage::filled(4, 4, 0).unwrap();
        img.set(1, 1, 255);
        assert_eq!(binarize(&img, Threshold::Auto, true), set(&[(1, 1)]));
    }

    #[test]
    fn rgb_uses_bt601() {
        let img = GrayImage::from_rgb(1, 1, &[255, 0, 0]).unwrap();
        assert_eq!(img.get(0, 0), 76);
    }

    #[test]
    fn region_examples() {
        assert!(connected_regions(&PixelSet::new()).is_empty());
        let diag = connected_regions(&set(&[(0, 0), (1, 1)]));
        assert_eq!(diag.len(), 1);
        assert_eq!(diag[0].len(), 2);
        assert_eq!(connected_regions(&set(&[(0, 0), (5, 5)])).len(), 2);
    }

    #[test]
    fn regions_sorted_by_bbox_corner() {
        let regions = connected_regions(&set(&[(9, 0), (0, 4), (3, 0), (3, 1)]));
        let corners: Vec<_> = regions
            .iter()
            .map(|r| (r.bounding_box().min_y, r.bounding_box().min_x))
            .collect();
        assert_eq!(corners, vec![(0, 3), (0, 9), (4, 0)]);
    }

    #[test]
    fn min_region_filter() {
        let mut img = GrayImage::filled(10, 10, 255).unwrap();
        img.set(0, 0, 0);
        for x in 4..7 {
            for y in 4..6 {
                img.set(x, y, 0);
            }
        }
        let regions = extract_regions(&img, Threshold::Fixed(128), false, 4);
        assert_eq!(regions.len(), 1);
        assert_eq!(regions[0].len(), 6);
    }

    #[test]
    fn binarize_idempotent_on_binary_image() {
        let values: Vec<u8> = (0..100)
            .map(|i| if (i * 7) % 5 < 2 { 0 } else { 255 })
            .collect();
        let img = GrayImage::new(10, 10, values).unwrap();
        let fg = binarize(&img, Threshold::Fixed(128), false);
        let mut again = GrayImage::filled(10, 10, 255).unwrap();
        again.paint(&fg, 0);
        assert_eq!(again, img);
        assert_eq!(binarize(&again, Threshold::Fixed(128), false), fg);
    }

    proptest! {
        #[test]
        fn regions_partition_foreground(points in proptest::collection::vec((0i32..24, 0i32..24), 0..120)) {
            let fg: PixelSet = points.iter().map(|&(x, y)| Pixel::new(x, y)).collect();
            let regions = connected_regions(&fg);
            let total: usize = regions.iter().map(|r| r.len()).sum();
            prop_assert_eq!(total, fg.len());
            let union = regions.iter().fold(PixelSet::new(), |acc, r| acc.union(r.pixels()));
            prop_assert_eq!(&union, &fg);
            for r in &regions {
                prop_assert_eq!(r.pixels().bounding_box().unwrap(), r.bounding_box());
            }
            // maximality: no pixel of one region is 8-adjacent to another region
            for (i, a) in regions.iter().enumerate() {
                for b in regions.iter().skip(i + 1) {
                    for p in a.pixels() {
                        for q in b.pixels() {
                            prop_assert!((p.x - q.x).abs() > 1 || (p.y - q.y).abs() > 1);
                        }
                    }
                }
            }
            prop_assert_eq!(connected_regions(&fg), regions);
        }
    }
}
