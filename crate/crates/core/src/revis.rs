//! Marker glyphs and re-visualization of a clustering as a pixel set.
//!
//! Every glyph is described by one radius `r`: the circle radius, the half
//! diagonal of squares and diamonds, the circumradius of triangles and the
//! arm length of the plus. Pixel `(x, y)` belongs to a glyph when the point
//! `(x, y)` lies inside it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::clustering::Clustering;
use crate::error::{Error, Result};
use crate::raster::{Pixel, PixelSet};

/// Slack for boundary points that land exactly on a glyph edge.
const EDGE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkerType {
    FilledCircle,
    HollowCircle,
    FilledSquare,
    HollowSquare,
    FilledDiamond,
    HollowDiamond,
    FilledTriangleUp,
    HollowTriangleUp,
    FilledTriangleDown,
    HollowTriangleDown,
    Plus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Circle,
    Square,
    Diamond,
    TriangleUp,
    TriangleDown,
    Plus,
}

impl MarkerType {
    pub const ALL: [MarkerType; 11] = [
        MarkerType::FilledCircle,
        MarkerType::HollowCircle,
        MarkerType::FilledSquare,
        MarkerType::HollowSquare,
        MarkerType::FilledDiamond,
        MarkerType::HollowDiamond,
        MarkerType::FilledTriangleUp,
        MarkerType::HollowTriangleUp,
        MarkerType::FilledTriangleDown,
        MarkerType::HollowTriangleDown,
        MarkerType::Plus,
    ];

    pub fn shape(self) -> Shape {
        use MarkerType::*;
        match self {
            FilledCircle | HollowCircle => Shape::Circle,
            FilledSquare | HollowSquare => Shape::Square,
            FilledDiamond | HollowDiamond => Shape::Diamond,
            FilledTriangleUp | HollowTriangleUp => Shape::TriangleUp,
            FilledTriangleDown | HollowTriangleDown => Shape::TriangleDown,
            Plus => Shape::Plus,
        }
    }

    pub fn is_hollow(self) -> bool {
        use MarkerType::*;
        matches!(
            self,
            HollowCircle | HollowSquare | HollowDiamond | HollowTriangleUp | HollowTriangleDown
        )
    }

    pub fn name(self) -> &'static str {
        use MarkerType::*;
        match self {
            FilledCircle => "filled_circle",
            HollowCircle => "hollow_circle",
            FilledSquare => "filled_square",
            HollowSquare => "hollow_square",
            FilledDiamond => "filled_diamond",
            HollowDiamond => "hollow_diamond",
            FilledTriangleUp => "filled_triangle_up",
            HollowTriangleUp => "hollow_triangle_up",
            FilledTriangleDown => "filled_triangle_down",
            HollowTriangleDown => "hollow_triangle_down",
            Plus => "plus",
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&m| m == self).expect("listed")
    }
}

impl fmt::Display for MarkerType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MarkerType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        let short = match key.as_str() {
            "circle" => Some(MarkerType::FilledCircle),
            "square" => Some(MarkerType::FilledSquare),
            "diamond" => Some(MarkerType::FilledDiamond),
            "triangle" | "triangle_up" => Some(MarkerType::FilledTriangleUp),
            "triangle_down" => Some(MarkerType::FilledTriangleDown),
            _ => None,
        };
        short
            .or_else(|| MarkerType::ALL.into_iter().find(|m| m.name() == key))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown marker `{s}`")))
    }
}

/// One mark: a glyph of `marker` type with radius `radius` at `center`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mark {
    pub center: [f64; 2],
    pub radius: f64,
    pub marker: MarkerType,
}

impl Mark {
    pub fn new(center: [f64; 2], radius: f64, marker: MarkerType) -> Self {
        Self {
            center,
            radius,
            marker,
        }
    }
}

/// Thickness of each plus bar for arm length `r`.
pub fn plus_thickness(r: f64) -> f64 {
    (r / 2.0).round().max(1.0)
}

/// Radius of the same shape after moving every edge inward by `stroke`.
fn inset_radius(shape: Shape, r: f64, stroke: f64) -> f64 {
    match shape {
        Shape::Circle => r - stroke,
        Shape::Square | Shape::Diamond => r - stroke * std::f64::consts::SQRT_2,
        // inradius of an equilateral triangle is half its circumradius
        Shape::TriangleUp | Shape::TriangleDown => r - 2.0 * stroke,
        Shape::Plus => 0.0,
    }
}

/// Point-in-shape test for an offset `(dx, dy)` from the center, image
/// coordinates (y grows downward).
#[inline]
pub fn shape_contains(shape: Shape, r: f64, dx: f64, dy: f64) -> bool {
    match shape {
        Shape::Circle => dx * dx + dy * dy <= r * r + EDGE_EPS,
        Shape::Square => {
            let a = r / std::f64::consts::SQRT_2 + EDGE_EPS;
            dx.abs() <= a && dy.abs() <= a
        }
        Shape::Diamond => dx.abs() + dy.abs() <= r + EDGE_EPS,
        Shape::TriangleUp | Shape::TriangleDown => {
            // apex up means the apex has the smaller y
            let dy = if shape == Shape::TriangleUp { dy } else { -dy };
            let h = r / 2.0 + EDGE_EPS;
            let s = 3f64.sqrt() / 2.0;
            dy <= h && (s * dx - 0.5 * dy) <= h && (-s * dx - 0.5 * dy) <= h
        }
        Shape::Plus => {
            let half = plus_thickness(r) / 2.0;
            // bars cover the half-open band [-t/2, t/2) so they are exactly t pixels thick
            let in_band = |d: f64| d >= -half - EDGE_EPS && d < half - EDGE_EPS;
            (dx.abs() <= r + EDGE_EPS && in_band(dy)) || (dy.abs() <= r + EDGE_EPS && in_band(dx))
        }
    }
}

fn validate(mark: &Mark) -> Result<()> {
    if !mark.radius.is_finite() || !mark.center[0].is_finite() || !mark.center[1].is_finite() {
        return Err(Error::NonFinite("mark"));
    }
    if mark.radius < 0.0 {
        return Err(Error::NegativeRadius(mark.radius));
    }
    Ok(())
}

fn nearest_pixel(center: [f64; 2]) -> Pixel {
    Pixel::new(center[0].round() as i32, center[1].round() as i32)
}

/// Calls `visit` for every pixel of the rasterized mark, in row-major order.
/// Degenerate glyphs that cover no pixel center yield the pixel nearest the
/// center.
pub fn for_each_mark_pixel(
    mark: &Mark,
    stroke_width: f64,
    mut visit: impl FnMut(Pixel),
) -> Result<()> {
    validate(mark)?;
    let [cx, cy] = mark.center;
    let r = mark.radius;
    if r == 0.0 {
        visit(nearest_pixel(mark.center));
        return Ok(());
    }
    let shape = mark.marker.shape();
    let inner = if mark.marker.is_hollow() {
        let inner = inset_radius(shape, r, stroke_width.max(0.0));
        (inner > 0.0).then_some(inner)
    } else {
        None
    };
    let x0 = (cx - r - 1.0).floor() as i32;
    let x1 = (cx + r + 1.0).ceil() as i32;
    let y0 = (cy - r - 1.0).floor() as i32;
    let y1 = (cy + r + 1.0).ceil() as i32;
    let mut any = false;
    for y in y0..=y1 {
        let dy = y as f64 - cy;
        for x in x0..=x1 {
            let dx = x as f64 - cx;
            if !shape_contains(shape, r, dx, dy) {
                continue;
            }
            if let Some(ri) = inner {
                // strictly inside the inset shape is the hollow interior
                if shape_contains(shape, ri - 2.0 * EDGE_EPS, dx, dy) {
                    continue;
                }
            }
            any = true;
            visit(Pixel::new(x, y));
        }
    }
    if !any {
        visit(nearest_pixel(mark.center));
    }
    Ok(())
}

/// Rasterizes one mark. `stroke_width` only affects hollow markers.
pub fn rasterize_mark(mark: &Mark, stroke_width: f64) -> Result<PixelSet> {
    let mut out = Vec::new();
    for_each_mark_pixel(mark, stroke_width, |p| out.push(p))?;
    Ok(PixelSet::from_sorted_unchecked(out))
}

/// The marks a clustering re-visualizes to: one per cluster at its centroid
/// with its radius.
pub fn cluster_marks(clusters: &Clustering, marker: MarkerType) -> Vec<Mark> {
    clusters
        .centroids
        .iter()
        .zip(&clusters.radii)
        .map(|(&c, &r)| Mark::new(c, r, marker))
        .collect()
}

/// Union of the rasters of every cluster's mark.
pub fn revisualize(
    clusters: &Clustering,
    marker: MarkerType,
    stroke_width: f64,
) -> Result<PixelSet> {
    let mut out = Vec::new();
    for mark in cluster_marks(clusters, marker) {
        for_each_mark_pixel(&mark, stroke_width, |p| out.push(p))?;
    }
    Ok(out.into_iter().collect())
}
