//! Neighbor-label agreement scores with inverse-squared-distance weights.
//!
//! Neighbors come from an exact uniform-grid k-NN search; distance ties are
//! broken by point index so results match a brute-force scan.

use serde::{Deserialize, Serialize};

use super::CurveError;

pub const CONSENSUS_EPS: f64 = 1e-10;
pub const DEFAULT_NEIGHBORS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsensusScore {
    pub index: usize,
    pub score: f64,
}

struct Grid {
    x0: f64,
    y0: f64,
    cell: f64,
    nx: usize,
    ny: usize,
    start: Vec<usize>,
    items: Vec<usize>,
}

impl Grid {
    fn new(points: &[(f64, f64)], per_cell: f64) -> Self {
        let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &(x, y) in points {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        let area = ((x1 - x0) * (y1 - y0)).max(1.0);
        let cell = (area * per_cell / points.len() as f64).sqrt().max(1.0);
        let nx = ((x1 - x0) / cell).floor() as usize + 1;
        let ny = ((y1 - y0) / cell).floor() as usize + 1;
        let mut counts = vec![0usize; nx * ny + 1];
        let key = |x: f64, y: f64| -> usize {
            let cx = (((x - x0) / cell).floor() as usize).min(nx - 1);
            let cy = (((y - y0) / cell).floor() as usize).min(ny - 1);
            cy * nx + cx
        };
        for &(x, y) in points {
            counts[key(x, y) + 1] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let mut fill = counts.clone();
        let mut items = vec![0usize; points.len()];
        for (i, &(x, y)) in points.iter().enumerate() {
            let k = key(x, y);
            items[fill[k]] = i;
            fill[k] += 1;
        }
        Self {
            x0,
            y0,
            cell,
            nx,
            ny,
            start: counts,
            items,
        }
    }

    fn cell_of(&self, x: f64, y: f64) -> (isize, isize) {
        (
            (((x - self.x0) / self.cell).floor() as isize).min(self.nx as isize - 1),
            (((y - self.y0) / self.cell).floor() as isize).min(self.ny as isize - 1),
        )
    }

    fn cell_items(&self, cx: isize, cy: isize) -> &[usize] {
        if cx < 0 || cy < 0 || cx >= self.nx as isize || cy >= self.ny as isize {
            return &[];
        }
        let k = cy as usize * self.nx + cx as usize;
        &self.items[self.start[k]..self.start[k + 1]]
    }
}

/// The `k` nearest other points of `i` as `(d², index)`, ascending.
fn knn(points: &[(f64, f64)], grid: &Grid, i: usize, k: usize, out: &mut Vec<(f64, usize)>) {
    out.clear();
    let (px, py) = points[i];
    let (cx, cy) = grid.cell_of(px, py);
    let max_ring = grid.nx.max(grid.ny) as isize;
    let mut ring = 0isize;
    loop {
        let visit = |gx: isize, gy: isize, out: &mut Vec<(f64, usize)>| {
            for &j in grid.cell_items(gx, gy) {
                if j != i {
                    let d2 = (points[j].0 - px).powi(2) + (points[j].1 - py).powi(2);
                    out.push((d2, j));
                }
            }
        };
        if ring == 0 {
            visit(cx, cy, out);
        } else {
            for gx in cx - ring..=cx + ring {
                visit(gx, cy - ring, out);
                visit(gx, cy + ring, out);
            }
            for gy in cy - ring + 1..=cy + ring - 1 {
                visit(cx - ring, gy, out);
                visit(cx + ring, gy, out);
            }
        }
        if out.len() >= k {
            out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            out.truncate(k);
            // anything outside the rings seen so far is at least this far
            let reach = ring as f64 * grid.cell;
            if out[k - 1].0 < reach * reach || ring > max_ring {
                return;
            }
        }
        if ring > max_ring {
            out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            return;
        }
        ring += 1;
    }
}

/// `score_i = (1/k) Σ_j I_ij / (d_ij² + ε)` over the `k` nearest neighbors,
/// with `I_ij = +1` for matching labels and `-1` otherwise.
pub fn consensus_scores(
    points: &[(f64, f64)],
    labels: &[usize],
    k: usize,
) -> Result<Vec<ConsensusScore>, CurveError> {
    assert_eq!(points.len(), labels.len(), "one label per point");
    if k == 0 || points.len() < k + 1 {
        return Err(CurveError::InsufficientNeighbors { k, n: points.len() });
    }
    let grid = Grid::new(points, 2.0 * k as f64);
    let mut buf = Vec::with_capacity(4 * k);
    Ok((0..points.len())
        .map(|i| {
            knn(points, &grid, i, k, &mut buf);
            let sum: f64 = buf
                .iter()
                .map(|&(d2, j)| {
                    let sign = if labels[j] == labels[i] { 1.0 } else { -1.0 };
                    sign / (d2 + CONSENSUS_EPS)
                })
                .sum();
            ConsensusScore {
                index: i,
                score: sum / k as f64,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oracle(points: &[(f64, f64)], labels: &[usize], k: usize) -> Vec<f64> {
        (0..points.len())
            .map(|i| {
                let mut d: Vec<(f64, usize)> = (0..points.len())
                    .filter(|&j| j != i)
                    .map(|j| ((points[i].0 - points[j].0).powi(2) + (points[i].1 - points[j].1).powi(2), j))
                    .collect();
                d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let mut s = 0.0;
                for &(d2, j) in &d[..k] {
                    let w = 1.0 / (d2 + 1e-10);
                    s += if labels[i] == labels[j] { w } else { -w };
                }
                s / k as f64
            })
            .collect()
    }

    #[test]
    fn single_same_label_neighbor() {
        let s = consensus_scores(&[(0.0, 0.0), (1.0, 0.0)], &[0, 0], 1).unwrap();
        assert!((s[0].score - 1.0 / (1.0 + 1e-10)).abs() < 1e-15);
    }

    #[test]
    fn opposite_labels_cancel() {
        let pts = [(0.0, 0.0), (1.0, 0.0), (-1.0, 0.0)];
        let s = consensus_scores(&pts, &[0, 0, 1], 2).unwrap();
        assert_eq!(s[0].score, 0.0);
    }

    #[test]
    fn five_point_fixture_matches_oracle() {
        let pts = [(0.0, 0.0), (1.0, 2.0), (3.0, 1.0), (2.0, 2.0), (0.5, 4.0)];
        let labels = [0, 1, 0, 1, 1];
        let s = consensus_scores(&pts, &labels, 3).unwrap();
        for (a, b) in s.iter().zip(oracle(&pts, &labels, 3)) {
            assert!((a.score - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn insufficient_neighbors() {
        assert_eq!(
            consensus_scores(&[(0.0, 0.0), (1.0, 1.0)], &[0, 0], 2),
            Err(CurveError::InsufficientNeighbors { k: 2, n: 2 })
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn matches_oracle(pts in proptest::collection::vec((0u16..300, 0u16..300, 0usize..3), 10..200), k in 1usize..9) {
                let points: Vec<(f64, f64)> = pts.iter().map(|p| (p.0 as f64, p.1 as f64)).collect();
                let labels: Vec<usize> = pts.iter().map(|p| p.2).collect();
                let got = consensus_scores(&points, &labels, k).unwrap();
                let want = oracle(&points, &labels, k);
                for (g, w) in got.iter().zip(&want) {
                    prop_assert!((g.score - w).abs() <= 1e-12, "{} vs {}", g.score, w);
                }
            }

            #[test]
            fn bounded_by_weight_sum(pts in proptest::collection::vec((0u16..50, 0u16..50, 0usize..2), 5..60)) {
                let points: Vec<(f64, f64)> = pts.iter().map(|p| (p.0 as f64 + 0.5 * p.2 as f64, p.1 as f64)).collect();
                let labels: Vec<usize> = pts.iter().map(|p| p.2).collect();
                let k = 4;
                let got = consensus_scores(&points, &labels, k).unwrap();
                let all_same = vec![0usize; labels.len()];
                let bound = consensus_scores(&points, &all_same, k).unwrap();
                for (g, b) in got.iter().zip(&bound) {
                    prop_assert!(g.score.abs() <= b.score * (1.0 + 1e-12));
                }
            }
        }
    }
}
