use std::fmt::Write as _;
use std::path::Path;

use super::scene::Scene;
use super::splat::RenderImage;
use crate::error::{Error, Result};

pub fn write_scene_json(scene: &Scene, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(scene)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_scene_json(path: &Path) -> Result<Scene> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// One CSV row per image row, no header.
pub fn image_to_csv(image: &RenderImage) -> String {
    let mut out = String::new();
    for row in image.pixels.chunks(image.resolution) {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Binary (P5) grayscale PGM, scaled so the brightest pixel maps to 255.
pub fn image_to_pgm(image: &RenderImage) -> Vec<u8> {
    let p = image.resolution;
    let max = image.pixels.iter().copied().fold(0.0, f64::max);
    let mut header = String::new();
    let _ = write!(header, "P5\n{p} {p}\n255\n");
    let mut out = header.into_bytes();
    out.extend(image.pixels.iter().map(
        |&v| {
            if max > 0.0 {
                (v / max * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                0
            }
        },
    ));
    out
}
