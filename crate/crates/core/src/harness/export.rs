use std::fmt::Write as _;
use std::path::Path;

use crate::backbones::Point3;
use crate::data::write_file;
use crate::error::{IagError, Result};

/// Vertex colour of a zero score. A score of one maps to pure red.
pub const BASE_GRAY: u8 = 180;

/// Linear blend from gray to red.
pub fn heatmap_color(h: f64) -> [u8; 3] {
    let g = BASE_GRAY as f64;
    let red = (g + (255.0 - g) * h).round() as u8;
    let rest = (g * (1.0 - h)).round() as u8;
    [red, rest, rest]
}

/// Writes an ASCII PLY with one coloured vertex per point.
pub fn export_heatmap(coords: &[Point3], heatmap: &[f64], path: &Path) -> Result<()> {
    if coords.len() != heatmap.len() {
        return Err(IagError::Argument(format!(
            "{} points but {} heatmap values",
            coords.len(),
            heatmap.len()
        )));
    }
    if let Some(v) = heatmap.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(IagError::Argument(format!("heatmap value {v} outside [0, 1]")));
    }
    let mut out = String::with_capacity(64 * coords.len() + 256);
    out.push_str("ply\nformat ascii 1.0\ncomment affordance heatmap\n");
    let _ = writeln!(out, "element vertex {}", coords.len());
    for p in ["x", "y", "z"] {
        let _ = writeln!(out, "property float {p}");
    }
    for p in ["red", "green", "blue"] {
        let _ = writeln!(out, "property uchar {p}");
    }
    out.push_str("end_header\n");
    for (p, &h) in coords.iter().zip(heatmap) {
        let [r, g, b] = heatmap_color(h);
        let _ = writeln!(out, "{} {} {} {r} {g} {b}", p[0] as f32, p[1] as f32, p[2] as f32);
    }
    write_file(path, out.as_bytes())
}

/// Reads back a file written by [`export_heatmap`], recovering scores from
/// the green channel.
pub fn read_heatmap_ply(path: &Path) -> Result<(Vec<Point3>, Vec<f64>)> {
    let text = std::fs::read_to_string(path).map_err(|e| IagError::io(path, e))?;
    let bad = |field: &str, reason: String| IagError::format(path.display(), field, reason);
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(bad("magic", "missing `ply` line".into()));
    }
    let mut count = None;
    let mut props = Vec::new();
    for line in lines.by_ref() {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["format", fmt, ..] if *fmt != "ascii" => return Err(bad("format", format!("unsupported `{fmt}`"))),
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|e| bad("element vertex", e.to_string()))?);
            }
            ["property", _, name] => props.push(name.to_string()),
            ["end_header"] => break,
            _ => {}
        }
    }
    let count = count.ok_or_else(|| bad("element vertex", "missing".into()))?;
    let column = |name: &str| {
        props
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| bad("property", format!("missing `{name}`")))
    };
    let (x, y, z, green) = (column("x")?, column("y")?, column("z")?, column("green")?);
    let mut coords = Vec::with_capacity(count);
    let mut heat = Vec::with_capacity(count);
    for (row, line) in lines.take(count).enumerate() {
        let values: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(&format!("vertex {row}"), format!("{e}")))?;
        if values.len() != props.len() {
            return Err(bad(&format!("vertex {row}"), format!("expected {} values", props.len())));
        }
        coords.push([values[x], values[y], values[z]]);
        heat.push((1.0 - values[green] / BASE_GRAY as f64).clamp(0.0, 1.0));
    }
    if coords.len() != count {
        return Err(bad("vertex", format!("expected {count} rows, found {}", coords.len())));
    }
    Ok((coords, heat))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_are_gray_and_red() {
        assert_eq!(heatmap_color(0.0), [BASE_GRAY; 3]);
        assert_eq!(heatmap_color(1.0), [255, 0, 0]);
    }

    #[test]
    fn round_trip_within_one_level() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.ply");
        let coords: Vec<Point3> = (0..101).map(|i| [i as f64 * 0.01, -0.5, 0.25]).collect();
        let heat: Vec<f64> = (0..101).map(|i| i as f64 / 100.0).collect();
        export_heatmap(&coords, &heat, &path).unwrap();
        let (c, h) = read_heatmap_ply(&path).unwrap();
        assert_eq!(c.len(), 101);
        for (a, b) in h.iter().zip(&heat) {
            assert!((a - b).abs() <= 1.0 / 255.0);
        }
    }

    #[test]
    fn out_of_range_scores_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let err = export_heatmap(&[[0.0; 3]], &[1.5], &dir.path().join("x.ply"));
        assert!(err.is_err());
    }
}
