//! Greedy path tracing through one cluster's pixels.
//!
//! Pixels are first grouped by single linkage; components much smaller than
//! the largest one are outliers. The path starts at the leftmost (then
//! topmost) pixel and repeatedly steps to the nearest unvisited pixel whose
//! column is at most `BACKTRACK` left of the current one, falling back to
//! the nearest unvisited pixel overall when none qualifies.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub const LINK_DISTANCE: f64 = 10.0;
pub const BACKTRACK: usize = 2;
/// Components smaller than this share of the largest one are outliers.
const MIN_COMPONENT_SHARE: f64 = 0.2;
const CELL: usize = 8;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TracedPath {
    /// Indices into the input, in path order.
    pub path: Vec<usize>,
    /// Indices of discarded pixels, ascending.
    pub outliers: Vec<usize>,
}

struct Buckets {
    map: HashMap<(usize, usize), Vec<usize>>,
}

impl Buckets {
    fn new(pixels: &[(usize, usize)], members: &[usize]) -> Self {
        let mut map: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for &i in members {
            let (u, v) = pixels[i];
            map.entry((u / CELL, v / CELL)).or_default().push(i);
        }
        Self { map }
    }

    fn get(&self, cx: isize, cy: isize) -> &[usize] {
        if cx < 0 || cy < 0 {
            return &[];
        }
        self.map.get(&(cx as usize, cy as usize)).map_or(&[], |v| v.as_slice())
    }

    fn remove(&mut self, pixels: &[(usize, usize)], i: usize) {
        let (u, v) = pixels[i];
        if let Some(list) = self.map.get_mut(&(u / CELL, v / CELL)) {
            list.retain(|&j| j != i);
        }
    }
}

fn components(pixels: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let all: Vec<usize> = (0..pixels.len()).collect();
    let buckets = Buckets::new(pixels, &all);
    let reach = (LINK_DISTANCE as usize).div_ceil(CELL) as isize;
    let mut comp = vec![usize::MAX; pixels.len()];
    let mut out = Vec::new();
    for start in 0..pixels.len() {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        comp[start] = id;
        let mut members = vec![start];
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            let (u, v) = pixels[i];
            let (cx, cy) = ((u / CELL) as isize, (v / CELL) as isize);
            for gy in cy - reach..=cy + reach {
                for gx in cx - reach..=cx + reach {
                    for &j in buckets.get(gx, gy) {
                        if comp[j] == usize::MAX {
                            let d2 = (pixels[j].0 as f64 - u as f64).powi(2) + (pixels[j].1 as f64 - v as f64).powi(2);
                            if d2 <= LINK_DISTANCE * LINK_DISTANCE {
                                comp[j] = id;
                                members.push(j);
                                stack.push(j);
                            }
                        }
                    }
                }
            }
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}

/// Nearest remaining pixel to `cur` (ties by column, then row), optionally
/// restricted to columns `>= min_u`.
fn nearest(
    pixels: &[(usize, usize)],
    buckets: &Buckets,
    cur: (usize, usize),
    min_u: Option<usize>,
    max_ring: isize,
) -> Option<usize> {
    let (cx, cy) = ((cur.0 / CELL) as isize, (cur.1 / CELL) as isize);
    let mut best: Option<(usize, (usize, usize), usize)> = None;
    let key = |j: usize| {
        let (u, v) = pixels[j];
        let du = u as i64 - cur.0 as i64;
        let dv = v as i64 - cur.1 as i64;
        ((du * du + dv * dv) as usize, (u, v), j)
    };
    for ring in 0..=max_ring {
        let mut consider = |gx: isize, gy: isize| {
            for &j in buckets.get(gx, gy) {
                if min_u.is_some_and(|m| pixels[j].0 < m) {
                    continue;
                }
                let cand = key(j);
                if best.is_none_or(|b| (cand.0, cand.1) < (b.0, b.1)) {
                    best = Some(cand);
                }
            }
        };
        if ring == 0 {
            consider(cx, cy);
        } else {
            for gx in cx - ring..=cx + ring {
                consider(gx, cy - ring);
                consider(gx, cy + ring);
            }
            for gy in cy - ring + 1..=cy + ring - 1 {
                consider(cx - ring, gy);
                consider(cx + ring, gy);
            }
        }
        if let Some(b) = best {
            let reach = (ring as usize * CELL) as f64;
            if (b.0 as f64) < reach * reach {
                break;
            }
        }
    }
    best.map(|b| b.2)
}

pub fn trace_path(pixels: &[(usize, usize)]) -> TracedPath {
    if pixels.is_empty() {
        return TracedPath::default();
    }
    let comps = components(pixels);
    let largest = comps.iter().map(Vec::len).max().unwrap_or(0);
    let mut kept = Vec::new();
    let mut outliers = Vec::new();
    for c in comps {
        if (c.len() as f64) >= MIN_COMPONENT_SHARE * largest as f64 {
            kept.extend(c);
        } else {
            outliers.extend(c);
        }
    }
    kept.sort_unstable();
    outliers.sort_unstable();

    let mut buckets = Buckets::new(pixels, &kept);
    let (umax, vmax) = kept
        .iter()
        .fold((0, 0), |a, &i| (a.0.max(pixels[i].0), a.1.max(pixels[i].1)));
    let max_ring = (umax.max(vmax) / CELL + 2) as isize;

    // columns still holding unvisited pixels
    let mut per_col: HashMap<usize, usize> = HashMap::new();
    for &i in &kept {
        *per_col.entry(pixels[i].0).or_default() += 1;
    }
    let mut max_col = per_col.keys().copied().max().unwrap_or(0);

    let mut cur = *kept
        .iter()
        .min_by_key(|&&i| (pixels[i].0, pixels[i].1, i))
        .expect("non-empty");
    let mut path = Vec::with_capacity(kept.len());
    for step in 0..kept.len() {
        path.push(cur);
        buckets.remove(pixels, cur);
        let col = pixels[cur].0;
        let left = per_col.get_mut(&col).expect("tracked column");
        *left -= 1;
        if *left == 0 {
            per_col.remove(&col);
            if col == max_col {
                max_col = per_col.keys().copied().max().unwrap_or(0);
            }
        }
        if step + 1 == kept.len() {
            break;
        }
        let floor = pixels[cur].0.saturating_sub(BACKTRACK);
        let constrained = if max_col >= floor {
            nearest(pixels, &buckets, pixels[cur], Some(floor), max_ring)
        } else {
            None
        };
        cur = match constrained {
            Some(j) => j,
            None => nearest(pixels, &buckets, pixels[cur], None, max_ring).expect("pixels remain"),
        };
    }
    TracedPath { path, outliers }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pixel() {
        let t = trace_path(&[(5, 5)]);
        assert_eq!(t.path, vec![0]);
        assert!(t.outliers.is_empty());
    }

    fn staircase() -> Vec<(usize, usize)> {
        let mut px = Vec::new();
        let mut v = 10;
        for step in 0..6 {
            for u in step * 10..step * 10 + 10 {
                px.push((u, v));
            }
            // vertical drop at the end of each flat segment
            for dv in 1..=4 {
                px.push((step * 10 + 9, v + dv));
            }
            v += 4;
        }
        px
    }

    #[test]
    fn staircase_follows_column_row_order() {
        let px = staircase();
        let t = trace_path(&px);
        let got: Vec<(usize, usize)> = t.path.iter().map(|&i| px[i]).collect();
        let mut want = px.clone();
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn distant_blob_is_outlier() {
        let mut px = staircase();
        let n = px.len();
        for du in 0..3 {
            for dv in 0..3 {
                px.push((30 + du, 80 + dv));
            }
        }
        let t = trace_path(&px);
        assert_eq!(t.outliers, (n..n + 9).collect::<Vec<_>>());
        assert_eq!(t.path.len(), n);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn path_and_outliers_partition(px in proptest::collection::hash_set((0usize..120, 0usize..80), 1..200)) {
                let px: Vec<(usize, usize)> = px.into_iter().collect();
                let t = trace_path(&px);
                let mut all: Vec<usize> = t.path.iter().chain(&t.outliers).copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..px.len()).collect::<Vec<_>>());
                for &o in &t.outliers {
                    for &p in &t.path {
                        let d2 = (px[o].0 as f64 - px[p].0 as f64).powi(2) + (px[o].1 as f64 - px[p].1 as f64).powi(2);
                        prop_assert!(d2 > LINK_DISTANCE * LINK_DISTANCE);
                    }
                }
                let start = px[t.path[0]];
                prop_assert!(t.path.iter().all(|&i| px[i].0 >= start.0));
            }
        }
    }
}
