//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

/// 1-D heat kernel (4πτ)^{-1/2} exp(-z²/4τ).
pub fn phi1(z: f64, tau: f64) -> f64 {
    (4.0 * PI * tau).powf(-0.5) * (-z * z / (4.0 * tau)).exp()
}

/// Half-space Poisson kernel for ∂t = ∂λλ + ∂xx (reflection principle).
pub fn heat_poisson_kernel(lambda: f64, x: f64, t: f64, y: f64, s: f64) -> f64 {
    let tau = t - s;
    if tau <= 0.0 {
        return 0.0;
    }
    lambda / tau * phi1(lambda, tau) * phi1(x - y, tau)
}

/// Poisson kernel of the box (0, lmax) x (-xext, xext) with Dirichlet
/// faces, by images in both directions.
pub fn boxed_heat_poisson_kernel(lambda: f64, x: f64, t: f64, y: f64, s: f64, lmax: f64, xext: f64) -> f64 {
    let tau = t - s;
    if tau <= 0.0 {
        return 0.0;
    }
    let mut lp = 0.0;
    for j in -12i32..=12 {
        let z = lambda + 2.0 * j as f64 * lmax;
        lp += z / tau * phi1(z, tau);
    }
    let mut xp = 0.0;
    for kk in -12i32..=12 {
        let sh = 4.0 * kk as f64 * xext;
        xp += phi1(x - (y + sh), tau) - phi1(x - (2.0 * xext - y + sh), tau);
    }
    lp * xp
}

/// Gauss-Legendre nodes/weights on [-1, 1] by Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        loop {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                let dp = {
                    let (mut p0, mut p1) = (1.0, z);
                    for k in 2..=n {
                        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                        p0 = p1;
                        p1 = p2;
                    }
                    n as f64 * (z * p1 - p0) / (z * z - 1.0)
                };
                xs[i] = z;
                ws[i] = 2.0 / ((1.0 - z * z) * dp * dp);
                break;
            }
        }
    }
    (xs, ws)
}

/// ∫∫ f over [a0, a1] x [b0, b1] with an n x n Gauss rule on m x m panels.
pub fn quad2(f: impl Fn(f64, f64) -> f64, a: (f64, f64), b: (f64, f64), n: usize, m: usize) -> f64 {
    let (xs, ws) = gauss_legendre(n);
    let mut acc = 0.0;
    let (ha, hb) = ((a.1 - a.0) / m as f64, (b.1 - b.0) / m as f64);
    for pa in 0..m {
        for pb in 0..m {
            let ca = a.0 + (pa as f64 + 0.5) * ha;
            let cb = b.0 + (pb as f64 + 0.5) * hb;
            for (xi, wi) in xs.iter().zip(&ws) {
                for (yj, wj) in xs.iter().zip(&ws) {
                    acc += wi * wj * f(ca + 0.5 * ha * xi, cb + 0.5 * hb * yj);
                }
            }
        }
    }
    acc * 0.25 * ha * hb
}

/// Order-1 resolvent kernel of ∂t - ∂xx on R: λ^{-2} Φ1(x, τ) e^{-τ/λ²}.
pub fn resolvent_kernel(lambda: f64, dx: f64, tau: f64) -> f64 {
    if tau <= 0.0 {
        return 0.0;
    }
    lambda.powi(-2) * phi1(dx, tau) * (-tau / (lambda * lambda)).exp()
}

/// Same kernel periodized in x with period `span`.
pub fn resolvent_kernel_periodic(lambda: f64, dx: f64, tau: f64, span: f64) -> f64 {
    (-20i32..=20).map(|p| resolvent_kernel(lambda, dx + p as f64 * span, tau)).sum()
}

/// Node offsets of the closed window |dx| <= ρ, |dt| <= ρ² on spacing (h, k).
fn window_offsets(rho: f64, h: f64, k: f64) -> (i64, i64) {
    ((rho / h + 1e-9).floor() as i64, (rho * rho / k + 1e-9).floor() as i64)
}

fn radii_list(h: f64, k: f64, nx: usize, nt: usize) -> Vec<f64> {
    let mut out = vec![0.0];
    let mut rho = h;
    loop {
        out.push(rho);
        let (a, b) = window_offsets(rho, h, k);
        if a as usize + 1 >= nx && b as usize + 1 >= nt {
            return out;
        }
        rho *= 2.0;
    }
}

/// Brute-force parabolic maximal function at one node (clipped windows).
pub fn brute_hl(g: &ndarray::Array2<f64>, h: f64, k: f64, j: usize, n: usize) -> f64 {
    let (nx, nt) = g.dim();
    let mut best = 0.0f64;
    for rho in radii_list(h, k, nx, nt) {
        let (wx, wt) = window_offsets(rho, h, k);
        let (mut s, mut c) = (0.0, 0.0);
        for jj in 0..nx as i64 {
            for nn in 0..nt as i64 {
                if (jj - j as i64).abs() <= wx && (nn - n as i64).abs() <= wt {
                    s += g[[jj as usize, nn as usize]].abs();
                    c += 1.0;
                }
            }
        }
        best = best.max(s / c);
    }
    best
}

/// Brute-force Mx Mt: all windows of 2^j consecutive nodes containing the
/// node, first along t then along x.
pub fn brute_iterated(g: &ndarray::Array2<f64>) -> ndarray::Array2<f64> {
    fn one(v: &[f64]) -> Vec<f64> {
        let n = v.len();
        let mut lens = vec![];
        let mut l = 1;
        while l < n {
            lens.push(l);
            l *= 2;
        }
        lens.push(n);
        (0..n)
            .map(|i| {
                let mut best = 0.0f64;
                for &l in &lens {
                    for a in 0..=n - l {
                        if a <= i && i < a + l {
                            best = best.max(v[a..a + l].iter().sum::<f64>() / l as f64);
                        }
                    }
                }
                best
            })
            .collect()
    }
    let (nx, nt) = g.dim();
    let mut tmp = ndarray::Array2::zeros((nx, nt));
    for j in 0..nx {
        let row: Vec<f64> = g.row(j).iter().map(|v| v.abs()).collect();
        for (n, v) in one(&row).into_iter().enumerate() {
            tmp[[j, n]] = v;
        }
    }
    let mut out = ndarray::Array2::zeros((nx, nt));
    for n in 0..nt {
        let col: Vec<f64> = tmp.column(n).to_vec();
        for (j, v) in one(&col).into_iter().enumerate() {
            out[[j, n]] = v;
        }
    }
    out
}

/// Brute-force N* and Ñ at one node from layers at heights `lambdas` with
/// λ-weights `w`; Whitney boxes (μ/2, μ] x window(μ), μ over the heights.
pub fn brute_nt(
    layers: &[ndarray::Array2<f64>],
    lambdas: &[f64],
    w: &[f64],
    h: f64,
    k: f64,
    j: usize,
    n: usize,
) -> (f64, f64) {
    let (nx, nt) = layers[0].dim();
    let (mut sup, mut rms) = (0.0f64, 0.0f64);
    for &mu in lambdas {
        let (wx, wt) = window_offsets(mu, h, k);
        let (mut num, mut den) = (0.0, 0.0);
        for (i, layer) in layers.iter().enumerate() {
            if !(lambdas[i] > mu / 2.0 && lambdas[i] <= mu) {
                continue;
            }
            for jj in 0..nx as i64 {
                for nn in 0..nt as i64 {
                    if (jj - j as i64).abs() <= wx && (nn - n as i64).abs() <= wt {
                        let v = layer[[jj as usize, nn as usize]];
                        sup = sup.max(v.abs());
                        num += w[i] * v * v;
                        den += w[i];
                    }
                }
            }
        }
        if den > 0.0 {
            rms = rms.max((num / den).sqrt());
        }
    }
    (sup, rms)
}

/// Brute-force 𝔻 at one node (diagonal excluded, clipped windows).
pub fn brute_max_diff(v: &ndarray::Array2<f64>, h: f64, k: f64, j: usize, n: usize) -> f64 {
    let (nx, nt) = v.dim();
    let mut best = 0.0f64;
    for rho in radii_list(h, k, nx, nt) {
        let (wx, wt) = window_offsets(rho, h, k);
        let (mut s, mut c) = (0.0, 0.0);
        for jj in 0..nx as i64 {
            for nn in 0..nt as i64 {
                let (dx, dt) = (jj - j as i64, nn - n as i64);
                if dx.abs() <= wx && dt.abs() <= wt && (dx, dt) != (0, 0) {
                    let d = (dx.abs() as f64) * h + ((dt.abs() as f64) * k).sqrt();
                    s += (v[[j, n]] - v[[jj as usize, nn as usize]]).abs() / d;
                    c += 1.0;
                }
            }
        }
        if c > 0.0 {
            best = best.max(s / c);
        }
    }
    best
}
