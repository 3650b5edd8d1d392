//! K-medoids on standardized HSL features.
//!
//! Pixels sharing an RGB value share features, so the search runs on unique
//! colors weighted by their pixel counts. Each restart seeds medoids
//! k-medoids++ style, alternates assignment and medoid updates, and the best
//! restart is then refined with single swaps until no swap lowers the
//! inertia.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::PixelFeature;
use super::CurveError;
use crate::raster::Rgb;

pub const RESTARTS: u64 = 5;
const MAX_ITER: usize = 100;
/// Saturation and lightness weight for enhanced images.
const ENHANCED_SCALE: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveCluster {
    pub label: usize,
    pub pixels: Vec<PixelFeature>,
    pub medoid: PixelFeature,
}

/// Labels aligned with the input features plus the medoids' feature indices
/// (ascending; label `i` belongs to `medoids[i]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub labels: Vec<usize>,
    pub medoids: Vec<usize>,
    pub inertia: f64,
}

impl Clustering {
    pub fn clusters(&self, features: &[PixelFeature]) -> Vec<CurveCluster> {
        self.medoids
            .iter()
            .enumerate()
            .map(|(label, &m)| CurveCluster {
                label,
                pixels: features
                    .iter()
                    .zip(&self.labels)
                    .filter(|(_, &l)| l == label)
                    .map(|(f, _)| *f)
                    .collect(),
                medoid: features[m],
            })
            .collect()
    }
}

fn coords(features: &[PixelFeature], enhanced: bool) -> Vec<[f64; 3]> {
    let n = features.len() as f64;
    let raw: Vec<[f64; 3]> = features.iter().map(|f| [f.h, f.s, f.l]).collect();
    let mut mean = [0.0; 3];
    for p in &raw {
        for c in 0..3 {
            mean[c] += p[c] / n;
        }
    }
    let mut sd = [0.0; 3];
    for p in &raw {
        for c in 0..3 {
            sd[c] += (p[c] - mean[c]).powi(2) / n;
        }
    }
    let sd = sd.map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 });
    let scale = if enhanced {
        [1.0, ENHANCED_SCALE, ENHANCED_SCALE]
    } else {
        [1.0; 3]
    };
    raw.iter()
        .map(|p| [0, 1, 2].map(|c| (p[c] - mean[c]) / sd[c] * scale[c]))
        .collect()
}

#[inline]
fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Nearest medoid slot for `p`; ties go to the lowest slot.
fn nearest(p: &[f64; 3], pts: &[[f64; 3]], medoids: &[usize]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (slot, &m) in medoids.iter().enumerate() {
        let d = dist(p, &pts[m]);
        if d < best.1 {
            best = (slot, d);
        }
    }
    best
}

/// Pixel-level inertia of the nearest-medoid assignment.
pub fn inertia_for_medoids(features: &[PixelFeature], enhanced: bool, medoids: &[usize]) -> f64 {
    let pts = coords(features, enhanced);
    pts.iter().map(|p| nearest(p, &pts, medoids).1).sum()
}

struct Unique {
    pts: Vec<[f64; 3]>,
    weight: Vec<f64>,
    first: Vec<usize>,
}

fn unique_colors(features: &[PixelFeature], pts: &[[f64; 3]]) -> Unique {
    let mut index: HashMap<Rgb, usize> = HashMap::new();
    let mut u = Unique {
        pts: Vec::new(),
        weight: Vec::new(),
        first: Vec::new(),
    };
    for (i, f) in features.iter().enumerate() {
        match index.get(&f.rgb) {
            Some(&j) => u.weight[j] += 1.0,
            None => {
                index.insert(f.rgb, u.pts.len());
                u.pts.push(pts[i]);
                u.weight.push(1.0);
                u.first.push(i);
            }
        }
    }
    u
}

fn total_cost(u: &Unique, medoids: &[usize]) -> f64 {
    u.pts
        .iter()
        .zip(&u.weight)
        .map(|(p, w)| w * nearest(p, &u.pts, medoids).1)
        .sum()
}

fn seed_medoids(u: &Unique, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let m = u.pts.len();
    let pick = |weights: &[f64], rng: &mut ChaCha8Rng| -> Option<usize> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return None;
        }
        let mut x = rng.random::<f64>() * total;
        for (i, w) in weights.iter().enumerate() {
            if *w > 0.0 {
                if x < *w {
                    return Some(i);
                }
                x -= w;
            }
        }
        weights.iter().rposition(|w| *w > 0.0)
    };
    let mut medoids = vec![pick(&u.weight, rng).expect("positive weights")];
    let mut dmin: Vec<f64> = (0..m).map(|i| dist(&u.pts[i], &u.pts[medoids[0]])).collect();
    while medoids.len() < k {
        let w: Vec<f64> = (0..m)
            .map(|i| if medoids.contains(&i) { 0.0 } else { u.weight[i] * dmin[i] * dmin[i] })
            .collect();
        let next = pick(&w, rng).unwrap_or_else(|| (0..m).find(|i| !medoids.contains(i)).expect("m >= k"));
        for i in 0..m {
            dmin[i] = dmin[i].min(dist(&u.pts[i], &u.pts[next]));
        }
        medoids.push(next);
    }
    medoids
}

fn alternate(u: &Unique, mut medoids: Vec<usize>) -> Vec<usize> {
    let m = u.pts.len();
    for _ in 0..MAX_ITER {
        let assign: Vec<usize> = (0..m).map(|i| nearest(&u.pts[i], &u.pts, &medoids).0).collect();
        let mut next = medoids.clone();
        for (slot, med) in next.iter_mut().enumerate() {
            let members: Vec<usize> = (0..m).filter(|&i| assign[i] == slot).collect();
            let mut best = (*med, f64::INFINITY);
            for &c in &members {
                let cost: f64 = members.iter().map(|&j| u.weight[j] * dist(&u.pts[c], &u.pts[j])).sum();
                if cost < best.1 || (cost == best.1 && c < best.0) {
                    best = (c, cost);
                }
            }
            *med = best.0;
        }
        if next == medoids {
            break;
        }
        medoids = next;
    }
    medoids
}

/// Applies improving single swaps until none remains.
fn swap_refine(u: &Unique, mut medoids: Vec<usize>) -> Vec<usize> {
    let m = u.pts.len();
    let k = medoids.len();
    let mut near = vec![(0usize, 0f64); m];
    let mut second = vec![f64::INFINITY; m];
    let refresh = |medoids: &[usize], near: &mut Vec<(usize, f64)>, second: &mut Vec<f64>| {
        for i in 0..m {
            let mut best = (0usize, f64::INFINITY);
            let mut sec = f64::INFINITY;
            for (slot, &md) in medoids.iter().enumerate() {
                let d = dist(&u.pts[i], &u.pts[md]);
                if d < best.1 {
                    sec = best.1;
                    best = (slot, d);
                } else if d < sec {
                    sec = d;
                }
            }
            near[i] = best;
            second[i] = sec;
        }
    };
    refresh(&medoids, &mut near, &mut second);
    for _ in 0..MAX_ITER {
        let td: f64 = (0..m).map(|i| u.weight[i] * near[i].1).sum();
        let tol = 1e-12 * td.max(1.0);
        let mut improved = false;
        for x in 0..m {
            if medoids.contains(&x) {
                continue;
            }
            let mut shared = 0.0;
            let mut per_slot = vec![0.0; k];
            for o in 0..m {
                let dxo = dist(&u.pts[x], &u.pts[o]);
                let (slot, dn) = near[o];
                let gain = (dxo - dn).min(0.0);
                shared += u.weight[o] * gain;
                per_slot[slot] += u.weight[o] * (dxo.min(second[o]) - dn - gain);
            }
            let (slot, delta) = per_slot
                .iter()
                .enumerate()
                .map(|(s, v)| (s, shared + v))
                .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
            if delta < -tol {
                medoids[slot] = x;
                refresh(&medoids, &mut near, &mut second);
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    medoids
}

pub fn cluster_labels(
    features: &[PixelFeature],
    k: usize,
    enhanced: bool,
    seed: u64,
) -> Result<Clustering, CurveError> {
    let n = features.len();
    if k == 0 || k > n {
        return Err(CurveError::TooFewPixels { k, n });
    }
    let pts = coords(features, enhanced);
    let u = unique_colors(features, &pts);

    let mut medoid_pixels: Vec<usize> = if u.pts.len() >= k {
        let mut best: Option<(f64, Vec<usize>)> = None;
        for r in 0..RESTARTS {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r));
            let med = alternate(&u, seed_medoids(&u, k, &mut rng));
            let cost = total_cost(&u, &med);
            if best.as_ref().is_none_or(|b| cost < b.0) {
                best = Some((cost, med));
            }
        }
        let med = swap_refine(&u, best.expect("at least one restart").1);
        med.iter().map(|&j| u.first[j]).collect()
    } else {
        // fewer colors than clusters: every color's first pixel, then the
        // lowest-index remaining pixels
        let mut med = u.first.clone();
        let mut i = 0;
        while med.len() < k {
            if !med.contains(&i) {
                med.push(i);
            }
            i += 1;
        }
        med
    };
    medoid_pixels.sort_unstable();

    let mut labels: Vec<usize> = pts.iter().map(|p| nearest(p, &pts, &medoid_pixels).0).collect();
    for (label, &m) in medoid_pixels.iter().enumerate() {
        labels[m] = label;
    }
    let inertia = pts
        .iter()
        .zip(&labels)
        .map(|(p, &l)| dist(p, &pts[medoid_pixels[l]]))
        .sum();
    Ok(Clustering {
        labels,
        medoids: medoid_pixels,
        inertia,
    })
}

pub fn cluster_curves(
    features: &[PixelFeature],
    k: usize,
    enhanced: bool,
    seed: u64,
) -> Result<Vec<CurveCluster>, CurveError> {
    Ok(cluster_labels(features, k, enhanced, seed)?.clusters(features))
}
