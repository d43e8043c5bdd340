//! Similarity matrix images as binary PPM, with boundary overlays.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

const BLUE: [u8; 3] = [0, 0, 255];
const RED: [u8; 3] = [255, 0, 0];

/// P6 image of `g`: gray level `round(255 * clamp(g, 0, 1))`. Rows and
/// columns at hypothesis boundaries are drawn blue, gold ones red; red is
/// drawn last so it wins where both fall on the same frame.
pub fn render_similarity(g: &Matrix<f32>, hyp: &[usize], gold: &[usize]) -> Result<Vec<u8>> {
    let n = g.rows();
    if g.cols() != n {
        return Err(Error::NotSquare {
            rows: n,
            cols: g.cols(),
        });
    }
    let mut out = format!("P6 {n} {n} 255\n").into_bytes();
    let header = out.len();
    out.reserve(3 * n * n);
    for &v in g.as_slice() {
        let gray = (255.0 * (v as f64).clamp(0.0, 1.0)).round() as u8;
        out.extend([gray; 3]);
    }
    let pixels = &mut out[header..];
    for (marks, color) in [(hyp, BLUE), (gold, RED)] {
        for &b in marks.iter().filter(|&&b| b < n) {
            for k in 0..n {
                for idx in [b * n + k, k * n + b] {
                    pixels[3 * idx..3 * idx + 3].copy_from_slice(&color);
                }
            }
        }
    }
    Ok(out)
}

pub fn emit_similarity_plot(
    g: &Matrix<f32>,
    hyp: &[usize],
    gold: &[usize],
    path: impl AsRef<Path>,
) -> Result<()> {
    fs::write(path, render_similarity(g, hyp, gold)?)?;
    Ok(())
}
