//! Plain-text PGM (P2) / PPM (P3) heatmaps. Output is byte-exact across
//! platforms: values are min-max normalised with integer rounding and the
//! colour table is defined arithmetically.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Result, WamError};
use crate::signal::Signal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Colormap {
    /// Grayscale PGM.
    #[default]
    Gray,
    /// Black → red → yellow → white PPM.
    Heat,
}

/// Entry `i` of the 256-entry heat table:
/// `r = min(255, 3i)`, `g = clamp(3i − 255, 0, 255)`, `b = clamp(3i − 510, 0, 255)`.
pub fn heat_colormap(i: u8) -> [u8; 3] {
    let v = 3 * i as i32;
    let c = |x: i32| x.clamp(0, 255) as u8;
    [c(v), c(v - 255), c(v - 510)]
}

/// Min-max normalisation to 0..=255; a constant map becomes all zeros.
fn normalise(values: &[f64]) -> Result<Vec<u8>> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(WamError::NonFiniteValues);
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    Ok(values
        .iter()
        .map(|&v| {
            if span > 0.0 {
                ((v - lo) / span * 255.0).round() as u8
            } else {
                0
            }
        })
        .collect())
}

/// Lays a map out as a (rows, cols, values) grid. 1D maps become a single
/// row; 3D volumes become a mosaic of axial slices, `⌈√depth⌉` per row.
fn to_grid(map: &Signal) -> (usize, usize, Vec<f64>) {
    let s = map.shape();
    match s.len() {
        1 => (1, s[0], map.data().to_vec()),
        2 => (s[0], s[1], map.data().to_vec()),
        _ => {
            let (d, h, w) = (s[0], s[1], s[2]);
            let per_row = (d as f64).sqrt().ceil() as usize;
            let tile_rows = d.div_ceil(per_row);
            let (rows, cols) = (tile_rows * h, per_row * w);
            let lo = map.data().iter().copied().fold(f64::INFINITY, f64::min);
            let mut out = vec![lo; rows * cols];
            for z in 0..d {
                let (tr, tc) = (z / per_row, z % per_row);
                for y in 0..h {
                    let src = &map.data()[(z * h + y) * w..(z * h + y + 1) * w];
                    let dst = (tr * h + y) * cols + tc * w;
                    out[dst..dst + w].copy_from_slice(src);
                }
            }
            (rows, cols, out)
        }
    }
}

pub fn render_pgm(map: &Signal) -> Result<String> {
    let (rows, cols, values) = to_grid(map);
    let pixels = normalise(&values)?;
    let mut out = format!("P2\n{cols} {rows}\n255\n");
    for row in pixels.chunks(cols) {
        let line: Vec<String> = row.iter().map(u8::to_string).collect();
        writeln!(out, "{}", line.join(" ")).unwrap();
    }
    Ok(out)
}

pub fn render_ppm(map: &Signal) -> Result<String> {
    let (rows, cols, values) = to_grid(map);
    let pixels = normalise(&values)?;
    let mut out = format!("P3\n{cols} {rows}\n255\n");
    for row in pixels.chunks(cols) {
        let line: Vec<String> = row
            .iter()
            .map(|&p| {
                let [r, g, b] = heat_colormap(p);
                format!("{r} {g} {b}")
            })
            .collect();
        writeln!(out, "{}", line.join(" ")).unwrap();
    }
    Ok(out)
}

pub fn render_heatmap(map: &Signal, colormap: Colormap, path: &Path) -> Result<()> {
    let text = match colormap {
        Colormap::Gray => render_pgm(map)?,
        Colormap::Heat => render_ppm(map)?,
    };
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_scaling() {
        let m = Signal::new(vec![2, 2], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(render_pgm(&m).unwrap(), "P2\n2 2\n255\n0 85\n170 255\n");
    }

    #[test]
    fn constant_map_is_black() {
        let m = Signal::new(vec![2, 3], vec![7.5; 6]).unwrap();
        assert_eq!(render_pgm(&m).unwrap(), "P2\n3 2\n255\n0 0 0\n0 0 0\n");
    }

    #[test]
    fn heat_table_endpoints() {
        assert_eq!(heat_colormap(0), [0, 0, 0]);
        assert_eq!(heat_colormap(85), [255, 0, 0]);
        assert_eq!(heat_colormap(170), [255, 255, 0]);
        assert_eq!(heat_colormap(255), [255, 255, 255]);
        let m = Signal::new(vec![1, 2], vec![0.0, 1.0]).unwrap();
        assert_eq!(render_ppm(&m).unwrap(), "P3\n2 1\n255\n0 0 0 255 255 255\n");
    }

    #[test]
    fn volume_mosaic_dimensions() {
        let m = Signal::new(vec![5, 2, 3], (0..30).map(f64::from).collect()).unwrap();
        let text = render_pgm(&m).unwrap();
        // 5 slices → 3 per row, 2 tile rows
        assert!(text.starts_with("P2\n9 4\n"));
    }

    #[test]
    fn rendering_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let m = Signal::new(vec![4, 4], (0..16).map(|i| (i as f64).sin()).collect()).unwrap();
        let (a, b) = (dir.path().join("a.ppm"), dir.path().join("b.ppm"));
        render_heatmap(&m, Colormap::Heat, &a).unwrap();
        render_heatmap(&m, Colormap::Heat, &b).unwrap();
        assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
    }
}
