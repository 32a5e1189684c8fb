//! Dependency-free SVG scatter plots for weight embeddings.

use crate::diagnostics::Embedding2D;
use crate::{FeatError, FeatResult};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 640.0;
const MARGIN: f64 = 40.0;

/// The three plot colors. Red and orange mark the two planted directions and
/// the neurons clustered around them; blue marks unaligned neurons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Palette {
    Red,
    Orange,
    Blue,
}

impl Palette {
    pub fn hex(self) -> &'static str {
        match self {
            Palette::Red => "#d62728",
            Palette::Orange => "#ff7f0e",
            Palette::Blue => "#1f77b4",
        }
    }

    pub fn parse(s: &str) -> FeatResult<Self> {
        match s {
            "red" => Ok(Palette::Red),
            "orange" => Ok(Palette::Orange),
            "blue" => Ok(Palette::Blue),
            other => Err(FeatError::Config(format!("unknown color '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Palette::Red => "red",
            Palette::Orange => "orange",
            Palette::Blue => "blue",
        }
    }
}

/// Colors for one scatter: one entry per embedded point, plus star markers at
/// already-embedded positions (the planted directions or cluster centers).
#[derive(Debug, Clone)]
pub struct ScatterColoring {
    pub point_colors: Vec<Palette>,
    pub stars: Vec<(f64, f64, Palette)>,
}

/// Writes `embedding` as an SVG scatter: circles for points, five-pointed
/// stars for `coloring.stars`. Output bytes are a pure function of the
/// inputs.
pub fn emit_svg_scatter(
    embedding: &Embedding2D,
    coloring: &ScatterColoring,
    path: &Path,
) -> FeatResult<()> {
    let n = embedding.points.nrows();
    if coloring.point_colors.len() != n {
        return Err(FeatError::Dimension(format!(
            "{} colors for {} points",
            coloring.point_colors.len(),
            n
        )));
    }

    let xs = embedding.points.column(0);
    let ys = embedding.points.column(1);
    let mut min_x = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    for (&x, &y) in xs.iter().zip(ys.iter()) {
        min_x = min_x.min(x);
        max_x = max_x.max(x);
        min_y = min_y.min(y);
        max_y = max_y.max(y);
    }
    for &(x, y, _) in &coloring.stars {
        min_x = min_x.min(x);
        max_x = max_x.max(x);
        min_y = min_y.min(y);
        max_y = max_y.max(y);
    }
    let span_x = (max_x - min_x).max(1e-9);
    let span_y = (max_y - min_y).max(1e-9);
    let to_px = |x: f64, y: f64| {
        let px = MARGIN + (x - min_x) / span_x * (WIDTH - 2.0 * MARGIN);
        // SVG y grows downward
        let py = HEIGHT - MARGIN - (y - min_y) / span_y * (HEIGHT - 2.0 * MARGIN);
        (px, py)
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(svg, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
    for i in 0..n {
        let (px, py) = to_px(xs[i], ys[i]);
        let _ = writeln!(
            svg,
            "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"3.5\" fill=\"{}\" fill-opacity=\"0.55\"/>",
            coloring.point_colors[i].hex()
        );
    }
    for &(x, y, color) in &coloring.stars {
        let (px, py) = to_px(x, y);
        let _ = writeln!(
            svg,
            "<path class=\"star\" d=\"{}\" fill=\"{}\" stroke=\"black\" stroke-width=\"0.8\"/>",
            star_path(px, py, 11.0),
            color.hex()
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{MARGIN}\" y=\"22\" font-family=\"sans-serif\" font-size=\"13\">stress {:.4}</text>",
        embedding.stress
    );
    let _ = writeln!(svg, "</svg>");
    std::fs::write(path, svg)?;
    Ok(())
}

/// Path data for a five-pointed star centered at (cx, cy) with outer radius r.
fn star_path(cx: f64, cy: f64, r: f64) -> String {
    let inner = 0.42 * r;
    let mut d = String::new();
    for i in 0..10 {
        let radius = if i % 2 == 0 { r } else { inner };
        let angle = std::f64::consts::PI * (-0.5 + i as f64 / 5.0);
        let x = cx + radius * angle.cos();
        let y = cy + radius * angle.sin();
        let cmd = if i == 0 { 'M' } else { 'L' };
        let _ = write!(d, "{cmd}{x:.2} {y:.2} ");
    }
    d.push('Z');
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn three_points() -> Embedding2D {
        Embedding2D {
            points: array![[0.0, 0.0], [1.0, 0.2], [-0.5, 0.9]],
            stress: 0.01,
        }
    }

    #[test]
    fn circles_and_stars_are_counted() {
        let emb = three_points();
        let coloring = ScatterColoring {
            point_colors: vec![Palette::Blue, Palette::Red, Palette::Blue],
            stars: vec![(1.0, 0.2, Palette::Red), (-0.5, 0.9, Palette::Orange)],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scatter.svg");
        emit_svg_scatter(&emb, &coloring, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.matches("<circle").count(), 3);
        assert_eq!(text.matches("class=\"star\"").count(), 2);
        assert!(text.starts_with("<svg"));
        assert!(text.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn bytes_are_deterministic() {
        let emb = three_points();
        let coloring = ScatterColoring {
            point_colors: vec![Palette::Blue; 3],
            stars: vec![(0.0, 0.0, Palette::Red)],
        };
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.svg");
        let b = dir.path().join("b.svg");
        emit_svg_scatter(&emb, &coloring, &a).unwrap();
        emit_svg_scatter(&emb, &coloring, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn only_documented_colors_appear() {
        let emb = three_points();
        let coloring = ScatterColoring {
            point_colors: vec![Palette::Red, Palette::Orange, Palette::Blue],
            stars: vec![(0.0, 0.0, Palette::Red)],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scatter.svg");
        emit_svg_scatter(&emb, &coloring, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        for piece in text.split("fill=\"").skip(1) {
            let color = piece.split('"').next().unwrap();
            assert!(
                ["#d62728", "#ff7f0e", "#1f77b4", "white", "black"].contains(&color),
                "unexpected color {color}"
            );
        }
    }

    #[test]
    fn color_count_mismatch_errors() {
        let emb = three_points();
        let coloring =
            ScatterColoring { point_colors: vec![Palette::Blue; 2], stars: vec![] };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scatter.svg");
        assert!(emit_svg_scatter(&emb, &coloring, &path).is_err());
    }
}
