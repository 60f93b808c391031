//! Independent reference implementations used by the integration and acceptance tests.
#![allow(dead_code)]

use lumistack_core::graphcut::FlowNetwork;

/// Cheapest s-t cut by enumerating every side assignment of the inner nodes.
pub fn brute_force_min_cut(net: &FlowNetwork) -> f64 {
    let n = net.nodes();
    let inner: Vec<usize> = (0..n).filter(|&v| v != net.source() && v != net.sink()).collect();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << inner.len()) {
        let mut source_side = vec![false; n];
        source_side[net.source()] = true;
        for (bit, &v) in inner.iter().enumerate() {
            source_side[v] = mask >> bit & 1 == 1;
        }
        let cut: f64 = net
            .arcs()
            .iter()
            .filter(|a| source_side[a.from] && !source_side[a.to])
            .map(|a| a.capacity)
            .sum();
        best = best.min(cut);
    }
    best
}

/// `0.5 + ln|a-b| / ln K` for distinct labels.
pub fn smooth(a: u16, b: u16, k: usize) -> f64 {
    if a == b {
        0.0
    } else {
        0.5 + ((a as f64 - b as f64).abs()).ln() / (k as f64).ln()
    }
}

/// Energy of a labelling; `data[p * k + l - 1]` is the cost of label `l` at pixel `p`.
pub fn grid_energy(w: usize, h: usize, k: usize, data: &[f64], lambda: f64, labels: &[u16]) -> f64 {
    let mut e = 0.0;
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            e += data[p * k + labels[p] as usize - 1];
            if x + 1 < w {
                e += lambda * smooth(labels[p], labels[p + 1], k);
            }
            if y + 1 < h {
                e += lambda * smooth(labels[p], labels[p + w], k);
            }
        }
    }
    e
}

/// Minimum energy over all `k^(w·h)` labellings.
pub fn exhaustive_min_energy(w: usize, h: usize, k: usize, data: &[f64], lambda: f64) -> (f64, Vec<u16>) {
    let n = w * h;
    let mut labels = vec![1u16; n];
    let mut best = (f64::INFINITY, labels.clone());
    loop {
        let e = grid_energy(w, h, k, data, lambda, &labels);
        if e < best.0 {
            best = (e, labels.clone());
        }
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            if (labels[i] as usize) < k {
                labels[i] += 1;
                break;
            }
            labels[i] = 1;
            i += 1;
        }
    }
}

/// Projection angle from thin-lens image distances: with `b_ref` and `b` the image
/// distances of the reference plane and of `depth`, the epipolar line through a point
/// at `depth` has `tan θ = b_ref / b - 1`.
pub fn alpha_route_angle(focal: f64, reference: f64, depth: f64) -> f64 {
    let image_distance = |d: f64| focal * d / (d - focal);
    let b_ref = image_distance(reference);
    let b = image_distance(depth);
    (b_ref / b - 1.0).atan()
}

/// Gather formulation of masked back-projection for one scanline.
///
/// Each cell takes the value of the last splat that lands on it, where splats are
/// ordered by (depth descending, label ascending, source x ascending). The farthest
/// label splats every pixel, the others only pixels carrying their own label.
pub fn gather_painter(
    rows: &[Vec<f32>],
    labels: &[u16],
    depths: &[f64],
    slopes: &[f64],
    u_samples: usize,
) -> Vec<f32> {
    let w = labels.len();
    let half = (u_samples / 2) as i32;
    let k = depths.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| depths[b].partial_cmp(&depths[a]).unwrap().then(a.cmp(&b)));
    let rank: Vec<usize> = {
        let mut r = vec![0; k];
        for (i, &l) in order.iter().enumerate() {
            r[l] = i;
        }
        r
    };
    let background = order[0];
    let mut out = vec![f32::NAN; u_samples * w];
    for u in -half..=half {
        for x in 0..w {
            let mut best: Option<((usize, usize), f32)> = None;
            for l in 0..k {
                for x0 in 0..w {
                    if l != background && labels[x0] as usize != l + 1 {
                        continue;
                    }
                    let target = (x0 as f64 + slopes[l] * u as f64).round();
                    if target != x as f64 {
                        continue;
                    }
                    let key = (rank[l], x0);
                    if best.is_none_or(|(b, _)| key > b) {
                        best = Some((key, rows[l][x0]));
                    }
                }
            }
            out[(u + half) as usize * w + x] = best.map_or(f32::NAN, |b| b.1);
        }
    }
    out
}

pub fn psnr(a: &[f32], b: &[f32]) -> f64 {
    let mse = a.iter().zip(b).map(|(x, y)| ((x - y) as f64).powi(2)).sum::<f64>() / a.len() as f64;
    10.0 * (1.0 / mse).log10()
}
