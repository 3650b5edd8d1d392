//! Group-to-curve assignment by color.

use super::GroupInfo;
use crate::raster::{parse_hex_color, Rgb};

const NAMED: &[(&str, Rgb)] = &[
    ("black", [0, 0, 0]),
    ("gray", [128, 128, 128]),
    ("grey", [128, 128, 128]),
    ("red", [214, 39, 40]),
    ("blue", [31, 119, 180]),
    ("green", [44, 160, 44]),
    ("orange", [255, 127, 14]),
    ("purple", [148, 103, 189]),
    ("brown", [140, 86, 75]),
    ("pink", [227, 119, 194]),
    ("olive", [188, 189, 34]),
    ("cyan", [23, 190, 207]),
    ("teal", [0, 128, 128]),
    ("navy", [0, 0, 128]),
    ("magenta", [255, 0, 255]),
    ("yellow", [255, 215, 0]),
];

/// `#rrggbb`, `rrggbb` or a common color name (case-insensitive; a trailing
/// "line" or leading "dark"/"light" is ignored).
pub fn parse_color_hint(hint: &str) -> Option<Rgb> {
    let h = hint.trim().to_ascii_lowercase();
    if let Some(c) = parse_hex_color(&h) {
        return Some(c);
    }
    let core = h
        .trim_end_matches(" line")
        .trim_start_matches("dark ")
        .trim_start_matches("light ")
        .trim();
    NAMED.iter().find(|(n, _)| *n == core).map(|(_, c)| *c)
}

fn distance(a: Rgb, b: Rgb) -> f64 {
    (0..3).map(|i| (a[i] as f64 - b[i] as f64).powi(2)).sum::<f64>().sqrt()
}

/// For each group, the index of its curve color. Groups without a usable hint
/// cost nothing anywhere, so they keep the remaining curves in order.
pub fn match_groups(groups: &[GroupInfo], colors: &[Rgb]) -> Vec<usize> {
    let n = groups.len().min(colors.len());
    let cost: Vec<Vec<f64>> = groups[..n]
        .iter()
        .map(|g| {
            let hint = g.color_hint.as_deref().and_then(parse_color_hint);
            colors.iter().map(|&c| hint.map_or(0.0, |h| distance(h, c))).collect()
        })
        .collect();
    if n <= 8 {
        let mut best = (f64::INFINITY, Vec::new());
        let mut used = vec![false; colors.len()];
        let mut cur = Vec::with_capacity(n);
        search(&cost, &mut used, &mut cur, 0.0, &mut best);
        best.1
    } else {
        let mut used = vec![false; colors.len()];
        cost.iter()
            .map(|row| {
                let j = (0..colors.len())
                    .filter(|&j| !used[j])
                    .min_by(|&a, &b| row[a].total_cmp(&row[b]))
                    .expect("enough colors");
                used[j] = true;
                j
            })
            .collect()
    }
}

fn search(cost: &[Vec<f64>], used: &mut [bool], cur: &mut Vec<usize>, acc: f64, best: &mut (f64, Vec<usize>)) {
    if cur.len() == cost.len() {
        if acc < best.0 - 1e-9 {
            *best = (acc, cur.clone());
        }
        return;
    }
    let g = cur.len();
    for j in 0..used.len() {
        if !used[j] {
            used[j] = true;
            cur.push(j);
            search(cost, used, cur, acc + cost[g][j], best);
            cur.pop();
            used[j] = false;
        }
    }
}
