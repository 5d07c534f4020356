//! `locate`: one prediction JSON (and optionally an overlay PNG) per image.

use std::path::{Path, PathBuf};

use markloc::baseline::{filter_locate, FilterConfig};
use markloc::locator::{locate, LocatorConfig, MarkSet};
use markloc::par::{self, Parallelism};
use markloc::raster::GrayImage;
use markloc::revis::rasterize_mark;

use crate::error::{CliError, Result};
use crate::files::{collect_images, create_dir, file_name, stem, write_json};
use crate::formats::{Method, Prediction, Timing};

/// Gray level of overlay glyph outlines and center crosses.
const OVERLAY_LEVEL: u8 = 160;

#[derive(Debug, Clone)]
pub struct LocateOptions {
    pub method: Method,
    pub locator: LocatorConfig,
    pub filter: FilterConfig,
    pub overlay_dir: Option<PathBuf>,
    pub timing: bool,
    pub parallelism: Parallelism,
}

impl Default for LocateOptions {
    fn default() -> Self {
        Self {
            method: Method::Osm,
            locator: LocatorConfig::default(),
            filter: FilterConfig::default(),
            overlay_dir: None,
            timing: false,
            parallelism: Parallelism::Parallel,
        }
    }
}

impl LocateOptions {
    fn params_json(&self) -> serde_json::Value {
        let value = match self.method {
            Method::Osm => serde_json::to_value(&self.locator),
            Method::Filter => serde_json::to_value(&self.filter),
        };
        value.expect("configs serialize")
    }
}

/// Runs the configured method on one image.
pub fn locate_image(image: &GrayImage, name: &str, options: &LocateOptions) -> Result<Prediction> {
    let set: MarkSet = match options.method {
        Method::Osm => locate(image, name, &options.locator)?,
        Method::Filter => filter_locate(image, name, &options.filter)?,
    };
    Ok(Prediction {
        image: name.to_owned(),
        method: options.method,
        params: options.params_json(),
        timing_ms: options.timing.then(|| Timing {
            total: set.total_timing_ms,
            regions: set.region_timing_ms.clone(),
        }),
        marks: set.marks,
        regions: set.regions,
        rsma: set.rsma,
        space_factor: set.space_factor,
    })
}

/// Source image with predicted glyph outlines and center crosses drawn in gray.
pub fn overlay(image: &GrayImage, prediction: &Prediction) -> Result<GrayImage> {
    let mut out = image.clone();
    let (w, h) = (out.width() as i64, out.height() as i64);
    let mut put = |x: i64, y: i64| {
        if (0..w).contains(&x) && (0..h).contains(&y) {
            out.set(x as usize, y as usize, OVERLAY_LEVEL);
        }
    };
    for m in &prediction.marks {
        let glyph = rasterize_mark(&m.to_mark(), 1.0)?;
        for p in glyph.iter() {
            let interior = [(1, 0), (-1, 0), (0, 1), (0, -1)]
                .iter()
                .all(|&(dx, dy)| glyph.contains(&markloc::raster::Pixel::new(p.x + dx, p.y + dy)));
            if !interior {
                put(p.x as i64, p.y as i64);
            }
        }
        let (cx, cy) = (m.x.round() as i64, m.y.round() as i64);
        for d in -2..=2 {
            put(cx + d, cy);
            put(cx, cy + d);
        }
    }
    Ok(out)
}

/// Locates every input and writes `<out>/<stem>.json`; returns the written paths
/// in input order.
pub fn run_locate(inputs: &[PathBuf], out: &Path, options: &LocateOptions) -> Result<Vec<PathBuf>> {
    let images = collect_images(inputs)?;
    let mut stems: Vec<String> = images.iter().map(|p| stem(p)).collect::<Result<_>>()?;
    stems.sort();
    if let Some(dup) = stems.windows(2).find(|w| w[0] == w[1]) {
        return Err(CliError::BadInput(format!(
            "two inputs share the name `{}`",
            dup[0]
        )));
    }
    create_dir(out)?;
    if let Some(dir) = &options.overlay_dir {
        create_dir(dir)?;
    }
    par::map(options.parallelism, &images, |_, path| {
        locate_one(path, out, options)
    })
    .into_iter()
    .collect()
}

fn locate_one(path: &Path, out: &Path, options: &LocateOptions) -> Result<PathBuf> {
    let image = GrayImage::load(path).map_err(|e| CliError::BadInput(e.to_string()))?;
    let prediction = locate_image(&image, &file_name(path), options)?;
    let id = stem(path)?;
    let target = out.join(format!("{id}.json"));
    write_json(&target, &prediction)?;
    if let Some(dir) = &options.overlay_dir {
        overlay(&image, &prediction)?.save_png(dir.join(format!("{id}.png")))?;
    }
    Ok(target)
}
