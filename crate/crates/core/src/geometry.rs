//! Axis localization from ink projections, tick-range inference and the
//! affine pixel/data calibration.
//!
//! Pixel coordinates put the center of pixel `i` at `i`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{PixelRect, RasterImage};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GeometryError {
    #[error("no axis stroke found: no column/row reaches the ink-density threshold")]
    NoAxisFound,
    #[error("{axis} axis: need at least 2 numeric tick tokens, found {found}")]
    InsufficientTicks { axis: Axis, found: usize },
    #[error("{axis} axis: all tick values coincide")]
    DegenerateTicks { axis: Axis },
    #[error("degenerate axis span: {0}")]
    DegenerateAxis(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
        })
    }
}

/// Interior whitespace between each baseline and the first clean
/// column/row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    pub left: f64,
    pub bottom: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisGeometry {
    pub u_x0: f64,
    pub u_x1: f64,
    pub v_y0: f64,
    pub v_y1: f64,
    pub margins: Margins,
}

impl AxisGeometry {
    /// Geometry with zero margins.
    pub fn new(u_x0: f64, u_x1: f64, v_y0: f64, v_y1: f64) -> Self {
        Self {
            u_x0,
            u_x1,
            v_y0,
            v_y1,
            margins: Margins {
                left: 0.0,
                bottom: 0.0,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisRange {
    pub min: f64,
    pub max: f64,
    pub increment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickToken {
    pub text: String,
    pub numeric_value: Option<f64>,
    pub center: (f64, f64),
    pub bbox: PixelRect,
}

impl TickToken {
    pub fn new(text: impl Into<String>, bbox: PixelRect) -> Self {
        let text = text.into();
        Self {
            numeric_value: parse_number(&text),
            center: bbox.center(),
            text,
            bbox,
        }
    }
}

/// Parses a tick label such as `12`, `0.25`, `-3`, `1,000` or `50%`
/// (percentages become fractions).
pub fn parse_number(text: &str) -> Option<f64> {
    let t = text.trim().replace(',', "");
    if let Some(p) = t.strip_suffix('%') {
        return p.parse::<f64>().ok().filter(|v| v.is_finite()).map(|v| v / 100.0);
    }
    if t.is_empty() || !t.chars().any(|c| c.is_ascii_digit()) {
        return None;
    }
    t.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Lightness at or below this is axis ink. Colored curves stay above it.
pub const INK_LIGHTNESS: u8 = 89;
/// Lightness below this counts as non-background when sizing margins.
pub const BACKGROUND_LIGHTNESS: u8 = 230;
pub const STROKE_FRACTION: f64 = 0.5;
pub const MARGIN_FRACTION: f64 = 0.05;

pub fn locate_axes(image: &RasterImage) -> Result<AxisGeometry, GeometryError> {
    let (w, h) = (image.width(), image.height());
    let light = image.lightness_u8();
    let ink: Vec<bool> = light.iter().map(|&l| l <= INK_LIGHTNESS).collect();
    let at = |x: usize, y: usize| ink[y * w + x];

    let mut col_counts = vec![0usize; w];
    let mut row_counts = vec![0usize; h];
    for y in 0..h {
        for x in 0..w {
            if at(x, y) {
                col_counts[x] += 1;
                row_counts[y] += 1;
            }
        }
    }
    let col_ok = |x: usize| col_counts[x] as f64 >= STROKE_FRACTION * h as f64;
    let row_ok = |y: usize| row_counts[y] as f64 >= STROKE_FRACTION * w as f64;

    let c0 = (0..w).find(|&x| col_ok(x)).ok_or(GeometryError::NoAxisFound)?;
    let mut c1 = c0;
    while c1 + 1 < w && col_ok(c1 + 1) {
        c1 += 1;
    }
    let r1 = (0..h).rev().find(|&y| row_ok(y)).ok_or(GeometryError::NoAxisFound)?;
    let mut r0 = r1;
    while r0 > 0 && row_ok(r0 - 1) {
        r0 -= 1;
    }
    let u_x0 = (c0 + c1) as f64 / 2.0;
    let v_y1 = (r0 + r1) as f64 / 2.0;
    let x_thick = (r1 - r0) as f64;
    let y_thick = (c1 - c0) as f64;

    // right end: contiguous ink along the x stroke rows
    let stroke_col = |x: usize| (r0..=r1).any(|y| at(x, y));
    let mut end = c1;
    while end + 1 < w && stroke_col(end + 1) {
        end += 1;
    }
    let u_x1 = end as f64 - x_thick / 2.0;

    // top end: contiguous ink along the y stroke columns
    let stroke_row = |y: usize| (c0..=c1).any(|x| at(x, y));
    let mut top = r0;
    while top > 0 && stroke_row(top - 1) {
        top -= 1;
    }
    let v_y0 = top as f64 + y_thick / 2.0;

    if u_x1 <= u_x0 || v_y1 <= v_y0 {
        return Err(GeometryError::NoAxisFound);
    }

    let busy = |x: usize, y: usize| light[y * w + x] < BACKGROUND_LIGHTNESS;
    let (ylo, yhi) = (v_y0.ceil() as usize, v_y1.floor() as usize);
    let (xlo, xhi) = (u_x0.ceil() as usize, u_x1.floor() as usize);

    let mut left = c1 + 1;
    while left < xhi {
        let n = (ylo..=yhi).filter(|&y| busy(left, y)).count();
        if (n as f64) < MARGIN_FRACTION * (yhi - ylo + 1) as f64 {
            break;
        }
        left += 1;
    }
    let mut bottom = r0.saturating_sub(1);
    while bottom > ylo {
        let n = (xlo..=xhi).filter(|&x| busy(x, bottom)).count();
        if (n as f64) < MARGIN_FRACTION * (xhi - xlo + 1) as f64 {
            break;
        }
        bottom -= 1;
    }

    Ok(AxisGeometry {
        u_x0,
        u_x1,
        v_y0,
        v_y1,
        margins: Margins {
            left: left as f64 - u_x0,
            bottom: v_y1 - bottom as f64,
        },
    })
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Infers `[min, max]` and the tick increment from numeric tokens.
pub fn detect_ranges(tokens: &[TickToken], axis: Axis) -> Result<AxisRange, GeometryError> {
    let mut numeric: Vec<(f64, f64)> = tokens
        .iter()
        .filter_map(|t| {
            let pos = match axis {
                Axis::X => t.center.0,
                Axis::Y => -t.center.1,
            };
            t.numeric_value.map(|v| (pos, v))
        })
        .collect();
    if numeric.len() < 2 {
        return Err(GeometryError::InsufficientTicks {
            axis,
            found: numeric.len(),
        });
    }
    let mut values: Vec<f64> = numeric.iter().map(|p| p.1).collect();
    values.sort_by(f64::total_cmp);
    let span = values[values.len() - 1] - values[0];
    if span <= 0.0 {
        return Err(GeometryError::DegenerateTicks { axis });
    }
    let tol = span * 1e-9;
    values.dedup_by(|a, b| (*a - *b).abs() <= tol);

    let mut gaps: Vec<f64> = values.windows(2).map(|p| p[1] - p[0]).collect();
    gaps.sort_by(f64::total_cmp);

    // labels read in screen order should increase monotonically
    numeric.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let monotone = numeric.windows(2).all(|p| p[1].1 >= p[0].1 - tol);

    let trim = gaps.len() / 10;
    let trimmed = &gaps[trim..gaps.len() - trim];
    // histogram over gaps equal within tolerance; ties go to the smaller gap
    let mut best = (trimmed[0], 0usize);
    let mut i = 0;
    while i < trimmed.len() {
        let mut j = i;
        while j < trimmed.len() && (trimmed[j] - trimmed[i]).abs() <= tol.max(1e-12) {
            j += 1;
        }
        if j - i > best.1 {
            best = (trimmed[i], j - i);
        }
        i = j;
    }
    let regular = 2 * best.1 > trimmed.len();
    let increment = if monotone && regular {
        best.0
    } else {
        median(&gaps)
    };

    Ok(AxisRange {
        min: values[0],
        max: values[values.len() - 1],
        increment,
    })
}

/// Splits tokens into x-axis labels (first text line below the x baseline
/// with at least two numbers) and y-axis labels (left of the y baseline).
pub fn assign_tokens(tokens: &[TickToken], geom: &AxisGeometry) -> (Vec<TickToken>, Vec<TickToken>) {
    let below: Vec<&TickToken> = tokens.iter().filter(|t| t.center.1 > geom.v_y1).collect();
    let mut lines: Vec<Vec<&TickToken>> = Vec::new();
    let mut sorted = below.clone();
    sorted.sort_by(|a, b| a.center.1.total_cmp(&b.center.1).then(a.center.0.total_cmp(&b.center.0)));
    for t in sorted {
        match lines.last_mut() {
            Some(line) if line.iter().any(|o| o.bbox.y0 < t.bbox.y1 && t.bbox.y0 < o.bbox.y1) => line.push(t),
            _ => lines.push(vec![t]),
        }
    }
    let x_line = lines
        .into_iter()
        .find(|line| {
            line.iter()
                .filter(|t| t.numeric_value.is_some() && t.center.0 >= geom.u_x0 - 0.05 * (geom.u_x1 - geom.u_x0))
                .count()
                >= 2
        })
        .unwrap_or_default();
    let mut xs: Vec<TickToken> = x_line
        .into_iter()
        .filter(|t| t.center.0 >= geom.u_x0 - 0.05 * (geom.u_x1 - geom.u_x0))
        .cloned()
        .collect();
    xs.sort_by(|a, b| a.center.0.total_cmp(&b.center.0));

    let slack = 0.05 * (geom.v_y1 - geom.v_y0);
    let mut ys: Vec<TickToken> = tokens
        .iter()
        .filter(|t| t.center.0 < geom.u_x0 && t.center.1 <= geom.v_y1 + slack && t.center.1 >= geom.v_y0 - slack)
        .cloned()
        .collect();
    ys.sort_by(|a, b| b.center.1.total_cmp(&a.center.1));
    (xs, ys)
}

/// Two-sided interpolation, exact at both `f = 0` and `f = 1`.
fn lerp(a: f64, b: f64, f: f64) -> f64 {
    a * (1.0 - f) + b * f
}

/// Affine map between pixels and data coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub geom: AxisGeometry,
    pub x: AxisRange,
    pub y: AxisRange,
}

impl Calibration {
    pub fn new(geom: AxisGeometry, x: AxisRange, y: AxisRange) -> Result<Self, GeometryError> {
        if !(geom.u_x1 > geom.u_x0) {
            return Err(GeometryError::DegenerateAxis(format!(
                "u_x1 ({}) must exceed u_x0 ({})",
                geom.u_x1, geom.u_x0
            )));
        }
        if !(geom.v_y1 > geom.v_y0) {
            return Err(GeometryError::DegenerateAxis(format!(
                "v_y1 ({}) must exceed v_y0 ({})",
                geom.v_y1, geom.v_y0
            )));
        }
        if !(x.max > x.min) || !(y.max > y.min) {
            return Err(GeometryError::DegenerateAxis("empty data range".into()));
        }
        Ok(Self { geom, x, y })
    }

    pub fn t(&self, u: f64) -> f64 {
        let g = &self.geom;
        lerp(self.x.min, self.x.max, (u - g.u_x0) / (g.u_x1 - g.u_x0))
    }

    pub fn s(&self, v: f64) -> f64 {
        let g = &self.geom;
        lerp(self.y.max, self.y.min, (v - g.v_y0) / (g.v_y1 - g.v_y0))
    }

    pub fn to_data(&self, u: f64, v: f64) -> (f64, f64) {
        (self.t(u), self.s(v))
    }

    pub fn u(&self, t: f64) -> f64 {
        let g = &self.geom;
        lerp(g.u_x0, g.u_x1, (t - self.x.min) / (self.x.max - self.x.min))
    }

    pub fn v(&self, s: f64) -> f64 {
        let g = &self.geom;
        lerp(g.v_y0, g.v_y1, (self.y.max - s) / (self.y.max - self.y.min))
    }

    pub fn to_pixel(&self, t: f64, s: f64) -> (f64, f64) {
        (self.u(t), self.v(s))
    }
}

pub fn calibrate(
    u: f64,
    v: f64,
    geom: &AxisGeometry,
    x: &AxisRange,
    y: &AxisRange,
) -> Result<(f64, f64), GeometryError> {
    Ok(Calibration::new(*geom, *x, *y)?.to_data(u, v))
}
