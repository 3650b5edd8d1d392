//! Deterministic Kaplan-Meier plot rendering with a number-at-risk table.

use kmgpt_core::font::{draw_text, draw_text_vertical, text_width};
use kmgpt_core::mmpu::{GroupInfo, PlotMetadata};
use kmgpt_core::raster::{hex_color, RasterImage, Rgb};
use kmgpt_core::recon::{km_estimate, IpdRecord, RiskTable, SurvivalCurve};

use crate::SynthError;

const WHITE: Rgb = [255, 255, 255];
const BLACK: Rgb = [0, 0, 0];

/// Candidate x-axis increments, smallest first.
const NICE_STEPS: [f64; 20] = [
    1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 10.0, 12.0, 15.0, 20.0, 24.0, 25.0, 30.0, 36.0, 40.0, 48.0, 50.0, 60.0, 100.0,
    120.0,
];
const MAX_X_INTERVALS: f64 = 8.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RenderStyle {
    pub width: usize,
    /// Plot box: left, right, top, bottom pixel coordinates of the axes.
    pub left: usize,
    pub right: usize,
    pub top: usize,
    pub bottom: usize,
    pub line_width: usize,
    pub font_scale: usize,
    pub colors: Vec<Rgb>,
    pub time_unit: String,
    pub risk_table: bool,
}

impl Default for RenderStyle {
    fn default() -> Self {
        Self {
            width: 800,
            left: 150,
            right: 760,
            top: 20,
            bottom: 400,
            line_width: 3,
            font_scale: 2,
            colors: vec![[31, 119, 180], [255, 127, 14], [44, 160, 44], [214, 39, 40]],
            time_unit: "months".into(),
            risk_table: true,
        }
    }
}

impl RenderStyle {
    fn row_y(&self, g: usize) -> usize {
        self.bottom + 96 + 24 * g
    }

    fn height(&self, groups: usize) -> usize {
        if self.risk_table {
            self.row_y(groups) + 20
        } else {
            self.bottom + 80
        }
    }
}

#[derive(Debug, Clone)]
pub struct RenderedPlot {
    pub image: RasterImage,
    pub risk: RiskTable,
    pub truth: Vec<SurvivalCurve>,
    pub metadata: PlotMetadata,
}

/// Records with `time >= anchor`, i.e. still under observation there.
pub fn count_at_risk(records: &[IpdRecord], anchor: f64) -> u32 {
    records.iter().filter(|r| r.time >= anchor).count() as u32
}

/// Smallest listed increment covering `[0, max_time]` in at most eight
/// intervals; returns `(increment, x_end)`.
pub fn x_axis_for(max_time: f64) -> (f64, f64) {
    let max_time = max_time.max(1e-9);
    let step = NICE_STEPS
        .iter()
        .copied()
        .find(|s| (max_time / s).ceil() <= MAX_X_INTERVALS)
        .unwrap_or_else(|| {
            let raw = max_time / MAX_X_INTERVALS;
            let mag = 10f64.powf(raw.log10().floor());
            (raw / mag).ceil() * mag
        });
    (step, (max_time / step).ceil().max(1.0) * step)
}

fn fmt_tick(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v}")
    }
}

/// Inclusive rectangle, clipped to the image.
fn fill_rect(img: &mut RasterImage, x0: i64, y0: i64, x1: i64, y1: i64, c: Rgb) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    for y in y0.max(0)..=y1.min(h - 1) {
        for x in x0.max(0)..=x1.min(w - 1) {
            img.set(x as usize, y as usize, c);
        }
    }
}

struct Frame<'a> {
    style: &'a RenderStyle,
    x_end: f64,
}

impl Frame<'_> {
    fn u(&self, t: f64) -> f64 {
        let s = self.style;
        s.left as f64 + t / self.x_end * (s.right - s.left) as f64
    }

    fn v(&self, p: f64) -> f64 {
        let s = self.style;
        s.bottom as f64 - p * (s.bottom - s.top) as f64
    }
}

fn draw_steps(img: &mut RasterImage, frame: &Frame, curve: &SurvivalCurve, end: f64, color: Rgb) {
    let half = (frame.style.line_width / 2) as i64;
    let mut pts = vec![(0.0, 1.0)];
    for (&t, &p) in curve.step_times.iter().zip(&curve.probabilities) {
        pts.push((t, pts.last().unwrap().1));
        pts.push((t, p));
    }
    pts.push((end.max(pts.last().unwrap().0), pts.last().unwrap().1));
    for w in pts.windows(2) {
        let (ua, va) = (frame.u(w[0].0).round() as i64, frame.v(w[0].1).round() as i64);
        let (ub, vb) = (frame.u(w[1].0).round() as i64, frame.v(w[1].1).round() as i64);
        fill_rect(
            img,
            ua.min(ub) - half,
            va.min(vb) - half,
            ua.max(ub) + half,
            va.max(vb) + half,
            color,
        );
    }
}

/// Draws step curves, axis frame with ticks and numeric labels, axis titles
/// and a number-at-risk block. Output depends only on the inputs.
pub fn render_km_plot(groups: &[Vec<IpdRecord>], style: &RenderStyle) -> Result<RenderedPlot, SynthError> {
    if groups.is_empty() || groups.iter().any(Vec::is_empty) {
        return Err(SynthError::NoGroups);
    }
    let n_groups = groups.len();
    let max_time = groups.iter().flatten().map(|r| r.time).fold(0.0, f64::max);
    let (x_inc, x_end) = x_axis_for(max_time);
    let n_ticks = (x_end / x_inc).round() as usize;
    let anchors: Vec<f64> = (0..=n_ticks).map(|k| k as f64 * x_inc).collect();

    let mut img = RasterImage::filled(style.width, style.height(n_groups), WHITE);
    let frame = Frame { style, x_end };
    let color = |g: usize| style.colors[g % style.colors.len()];
    let labels: Vec<String> = groups
        .iter()
        .enumerate()
        .map(|(g, recs)| {
            let name = recs[0].group.trim();
            if name.is_empty() {
                format!("Group {}", g + 1)
            } else {
                name.to_string()
            }
        })
        .collect();

    let truth: Vec<SurvivalCurve> = groups
        .iter()
        .zip(&labels)
        .map(|(recs, label)| {
            let mut c = km_estimate(recs);
            c.group = label.clone();
            c
        })
        .collect();
    for (g, (curve, recs)) in truth.iter().zip(groups).enumerate() {
        let end = recs.iter().map(|r| r.time).fold(0.0, f64::max);
        draw_steps(&mut img, &frame, curve, end, color(g));
    }

    let (l, r, t, b) = (style.left as i64, style.right as i64, style.top as i64, style.bottom as i64);
    fill_rect(&mut img, l - 1, b - 1, r + 1, b + 1, BLACK);
    fill_rect(&mut img, l - 1, t - 1, l + 1, b + 1, BLACK);

    let fs = style.font_scale;
    let glyph_h = (8 * fs) as i64;
    for &a in &anchors {
        let u = frame.u(a).round() as i64;
        fill_rect(&mut img, u - 1, b + 2, u + 1, b + 7, BLACK);
        let s = fmt_tick(a);
        draw_text(&mut img, &s, u - text_width(&s, fs) as i64 / 2, b + 12, fs, BLACK);
    }
    for k in 0..=5 {
        let p = k as f64 * 0.2;
        let v = frame.v(p).round() as i64;
        fill_rect(&mut img, l - 7, v - 1, l - 2, v + 1, BLACK);
        let s = format!("{p:.1}");
        draw_text(&mut img, &s, l - 10 - text_width(&s, fs) as i64, v - glyph_h / 2, fs, BLACK);
    }
    let y_title = "Survival probability";
    let title_len = text_width(y_title, fs) as i64;
    draw_text_vertical(&mut img, y_title, 10, (t + b) / 2 - title_len / 2, fs, BLACK);
    let x_title = format!("Time ({})", style.time_unit);
    let cx = (l + r) / 2 - text_width(&x_title, fs) as i64 / 2;
    draw_text(&mut img, &x_title, cx, b + 40, fs, BLACK);

    let counts: Vec<Vec<u32>> = groups
        .iter()
        .map(|recs| anchors.iter().map(|&a| count_at_risk(recs, a)).collect())
        .collect();
    if style.risk_table {
        draw_text(&mut img, "Number at risk", 4, b + 70, fs, BLACK);
        for (g, row) in counts.iter().enumerate() {
            let y = style.row_y(g) as i64;
            draw_text(&mut img, &labels[g], 4, y, fs, color(g));
            for (&a, &n) in anchors.iter().zip(row) {
                let s = n.to_string();
                let u = frame.u(a).round() as i64;
                draw_text(&mut img, &s, u - text_width(&s, fs) as i64 / 2, y, fs, BLACK);
            }
        }
    }

    let risk = RiskTable {
        anchor_times: anchors,
        counts,
    };
    let metadata = PlotMetadata {
        x_start: 0.0,
        x_end,
        x_increment: x_inc,
        y_start: 0.0,
        y_end: 1.0,
        y_increment: 0.2,
        num_curves: n_groups,
        groups: labels
            .iter()
            .enumerate()
            .map(|(g, label)| GroupInfo {
                label: label.clone(),
                color_hint: Some(hex_color(color(g))),
            })
            .collect(),
        risk_table: risk.clone(),
        time_unit: style.time_unit.clone(),
    };
    Ok(RenderedPlot {
        image: img,
        risk,
        truth,
        metadata,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{generate_ipd, SynthConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn arms(seed: u64) -> Vec<Vec<IpdRecord>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ["Arm A", "Arm B"]
            .iter()
            .zip([12.0, 20.0])
            .map(|(name, med)| {
                let cfg = SynthConfig {
                    n: 150,
                    lambda: std::f64::consts::LN_2 / med,
                    eta: 0.3,
                    tau: 36.0,
                    seed: 0,
                };
                generate_ipd(&cfg, name, &mut rng)
            })
            .collect()
    }

    #[test]
    fn nice_axis() {
        assert_eq!(x_axis_for(36.0), (5.0, 40.0));
        assert_eq!(x_axis_for(24.0), (3.0, 24.0));
        assert_eq!(x_axis_for(18.2), (3.0, 21.0));
        assert_eq!(x_axis_for(108.0), (15.0, 120.0));
        assert_eq!(x_axis_for(0.5), (1.0, 1.0));
    }

    #[test]
    fn rendering_is_byte_identical() {
        let style = RenderStyle::default();
        let a = render_km_plot(&arms(3), &style).unwrap().image.encode_png().unwrap();
        let b = render_km_plot(&arms(3), &style).unwrap().image.encode_png().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn metadata_is_consistent() {
        let plot = render_km_plot(&arms(4), &RenderStyle::default()).unwrap();
        plot.metadata.check().unwrap();
        assert_eq!(plot.metadata.x_end, 40.0);
        assert_eq!(plot.metadata.groups[1].color_hint.as_deref(), Some("#ff7f0e"));
        assert_eq!(plot.truth.len(), 2);
    }

    #[test]
    fn risk_counts_match_brute_force() {
        let groups = arms(5);
        let plot = render_km_plot(&groups, &RenderStyle::default()).unwrap();
        for (g, recs) in groups.iter().enumerate() {
            for (k, &a) in plot.risk.anchor_times.iter().enumerate() {
                // subjects neither failed nor censored strictly before the anchor
                let mut n = 0;
                for r in recs {
                    let gone = r.time < a;
                    if !gone {
                        n += 1;
                    }
                }
                assert_eq!(plot.risk.counts[g][k], n);
            }
        }
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(render_km_plot(&[], &RenderStyle::default()), Err(SynthError::NoGroups)));
        assert!(render_km_plot(&[vec![]], &RenderStyle::default()).is_err());
    }

    #[test]
    fn curves_drawn_in_group_colors() {
        let plot = render_km_plot(&arms(6), &RenderStyle::default()).unwrap();
        let px = plot.image.pixels();
        assert!(px.contains(&[31, 119, 180]));
        assert!(px.contains(&[255, 127, 14]));
        // the start of every curve sits at S = 1 just right of the y axis
        let style = RenderStyle::default();
        let top = plot.image.get(style.left + 5, style.top);
        assert_ne!(top, WHITE);
    }
}
