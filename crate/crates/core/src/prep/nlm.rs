//! Non-local means denoising. Patch distances come from integer luma and the
//! resulting weights average all three color channels.
//!
//! For each search offset the squared-difference image is box-filtered with
//! running sums, so the cost per pixel is independent of the patch size.

use rayon::prelude::*;

use crate::raster::{luma, RasterImage};

#[derive(Debug, Clone, PartialEq)]
pub struct NlmParams {
    /// Patch side length (odd).
    pub patch: usize,
    /// Search window side length (odd).
    pub search: usize,
    /// Filter strength in gray levels.
    pub h: f32,
}

impl Default for NlmParams {
    fn default() -> Self {
        Self {
            patch: 7,
            search: 21,
            h: 10.0,
        }
    }
}

const BAND: usize = 32;
// weights below exp(-CUTOFF) are treated as zero
const CUTOFF: f32 = 20.0;

pub fn nlm_denoise(image: &RasterImage, params: &NlmParams) -> RasterImage {
    assert!(params.patch % 2 == 1 && params.search % 2 == 1, "odd window sizes required");
    let (w, h) = (image.width(), image.height());
    let r = params.patch / 2;
    let big_r = params.search / 2;
    let pad = r + big_r;
    let pw = w + 2 * pad;
    let ph = h + 2 * pad;

    let reflect = |i: isize, n: usize| -> usize {
        // reflect-101 without repeating the edge pixel; clamp for tiny images
        let n = n as isize;
        let mut i = i;
        if n == 1 {
            return 0;
        }
        while i < 0 || i >= n {
            if i < 0 {
                i = -i;
            }
            if i >= n {
                i = 2 * (n - 1) - i;
            }
        }
        i as usize
    };

    let mut guide = vec![0i32; pw * ph];
    let mut color = vec![[0f32; 3]; pw * ph];
    for py in 0..ph {
        let sy = reflect(py as isize - pad as isize, h);
        for px in 0..pw {
            let sx = reflect(px as isize - pad as isize, w);
            let p = image.get(sx, sy);
            guide[py * pw + px] = luma(p).round() as i32;
            color[py * pw + px] = [p[0] as f32, p[1] as f32, p[2] as f32];
        }
    }

    let area = (params.patch * params.patch) as f32;
    let hh = params.h * params.h;
    let max_ssd = (CUTOFF * hh * area).ceil() as usize;
    let lut: Vec<f32> = (0..=max_ssd)
        .map(|d| (-(d as f32 / area) / hh).exp())
        .collect();

    let offsets: Vec<(isize, isize)> = (-(big_r as isize)..=big_r as isize)
        .flat_map(|dy| (-(big_r as isize)..=big_r as isize).map(move |dx| (dx, dy)))
        .collect();

    let bands: Vec<usize> = (0..h).step_by(BAND).collect();
    let results: Vec<Vec<[u8; 3]>> = bands
        .par_iter()
        .map(|&y0| {
            let y1 = (y0 + BAND).min(h);
            let bh = y1 - y0;
            let rows = bh + 2 * r;
            let mut acc_w = vec![0f32; bh * w];
            let mut acc_c = vec![[0f32; 3]; bh * w];
            let mut hsum = vec![0u32; rows * w];
            let mut colsum = vec![0u32; w];
            let mut diff = vec![0u32; w + 2 * r];
            for &(dx, dy) in &offsets {
                // horizontal box sums of squared differences for the band rows
                for (ri, hrow) in hsum.chunks_mut(w).enumerate() {
                    // padded row of output row (y0 + ri - r)
                    let py = y0 + ri + pad - r;
                    let qy = (py as isize + dy) as usize;
                    let base_p = py * pw + pad - r;
                    let base_q = qy * pw + (pad as isize - r as isize + dx) as usize;
                    for (k, d) in diff.iter_mut().enumerate() {
                        let a = guide[base_p + k] - guide[base_q + k];
                        *d = (a * a) as u32;
                    }
                    let mut s: u32 = diff[..2 * r + 1].iter().sum();
                    hrow[0] = s;
                    for x in 1..w {
                        s = s + diff[x + 2 * r] - diff[x - 1];
                        hrow[x] = s;
                    }
                }
                colsum.iter_mut().for_each(|c| *c = 0);
                for row in hsum.chunks(w).take(2 * r + 1) {
                    for (c, v) in colsum.iter_mut().zip(row) {
                        *c += v;
                    }
                }
                for yi in 0..bh {
                    let qy = (y0 + yi + pad) as isize + dy;
                    let qbase = qy as usize * pw + (pad as isize + dx) as usize;
                    let aw = &mut acc_w[yi * w..(yi + 1) * w];
                    let ac = &mut acc_c[yi * w..(yi + 1) * w];
                    for x in 0..w {
                        let ssd = colsum[x] as usize;
                        if ssd <= max_ssd {
                            let wt = lut[ssd];
                            let c = color[qbase + x];
                            aw[x] += wt;
                            ac[x][0] += wt * c[0];
                            ac[x][1] += wt * c[1];
                            ac[x][2] += wt * c[2];
                        }
                    }
                    if yi + 1 < bh {
                        let add = &hsum[(yi + 2 * r + 1) * w..(yi + 2 * r + 2) * w];
                        let sub = &hsum[yi * w..(yi + 1) * w];
                        for x in 0..w {
                            colsum[x] = colsum[x] + add[x] - sub[x];
                        }
                    }
                }
            }
            debug_assert_eq!(rows * w, hsum.len());
            acc_w
                .iter()
                .zip(&acc_c)
                .map(|(&wt, c)| {
                    // the zero offset always contributes weight 1
                    [
                        (c[0] / wt).round().clamp(0.0, 255.0) as u8,
                        (c[1] / wt).round().clamp(0.0, 255.0) as u8,
                        (c[2] / wt).round().clamp(0.0, 255.0) as u8,
                    ]
                })
                .collect()
        })
        .collect();

    let pixels: Vec<[u8; 3]> = results.into_iter().flatten().collect();
    RasterImage::new(w, h, pixels).expect("dimensions preserved")
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct per-pixel implementation used as an oracle.
    fn brute(image: &RasterImage, p: &NlmParams) -> RasterImage {
        let (w, h) = (image.width() as isize, image.height() as isize);
        let r = (p.patch / 2) as isize;
        let big_r = (p.search / 2) as isize;
        let refl = |i: isize, n: isize| -> isize {
            let mut i = i;
            if n == 1 {
                return 0;
            }
            while i < 0 || i >= n {
                if i < 0 {
                    i = -i;
                }
                if i >= n {
                    i = 2 * (n - 1) - i;
                }
            }
            i
        };
        let at = |x: isize, y: isize| image.get(refl(x, w) as usize, refl(y, h) as usize);
        let g = |x: isize, y: isize| luma(at(x, y)).round() as i64;
        let area = (p.patch * p.patch) as f64;
        let mut out = image.clone();
        for y in 0..h {
            for x in 0..w {
                let mut sw = 0f64;
                let mut sc = [0f64; 3];
                for dy in -big_r..=big_r {
                    for dx in -big_r..=big_r {
                        let mut ssd = 0i64;
                        for j in -r..=r {
                            for i in -r..=r {
                                let d = g(x + i, y + j) - g(x + dx + i, y + dy + j);
                                ssd += d * d;
                            }
                        }
                        let e = ssd as f64 / area / (p.h as f64 * p.h as f64);
                        if e > CUTOFF as f64 + 1e-3 {
                            continue;
                        }
                        let wt = (-e).exp();
                        let c = at(x + dx, y + dy);
                        sw += wt;
                        for k in 0..3 {
                            sc[k] += wt * c[k] as f64;
                        }
                    }
                }
                out.set(
                    x as usize,
                    y as usize,
                    [
                        (sc[0] / sw).round() as u8,
                        (sc[1] / sw).round() as u8,
                        (sc[2] / sw).round() as u8,
                    ],
                );
            }
        }
        out
    }

    fn noisy(w: usize, h: usize) -> RasterImage {
        let px = (0..w * h)
            .map(|i| {
                let x = i % w;
                let base: u8 = if x > w / 2 { 200 } else { 40 };
                let n = ((i * 2654435761usize) >> 7) % 9;
                [base + n as u8, base + (n as u8 / 2), base]
            })
            .collect();
        RasterImage::new(w, h, px).unwrap()
    }

    #[test]
    fn matches_direct_implementation() {
        let img = noisy(23, 37);
        let p = NlmParams {
            patch: 3,
            search: 7,
            h: 10.0,
        };
        let fast = nlm_denoise(&img, &p);
        let slow = brute(&img, &p);
        let worst = fast
            .pixels()
            .iter()
            .zip(slow.pixels())
            .flat_map(|(a, b)| (0..3).map(move |k| (a[k] as i32 - b[k] as i32).abs()))
            .max()
            .unwrap();
        assert!(worst <= 1, "max channel difference {worst}");
    }

    #[test]
    fn constant_image_is_fixed_point() {
        let img = RasterImage::filled(40, 40, [77, 88, 99]);
        assert_eq!(nlm_denoise(&img, &NlmParams::default()), img);
    }

    #[test]
    fn reduces_noise_variance() {
        let img = noisy(40, 40);
        let out = nlm_denoise(&img, &NlmParams::default());
        let var = |im: &RasterImage| {
            let vals: Vec<f64> = (0..40).flat_map(|y| (0..15).map(move |x| (x, y)))
                .map(|(x, y)| im.get(x, y)[0] as f64)
                .collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64
        };
        assert!(var(&out) < var(&img));
    }
}
