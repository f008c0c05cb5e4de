//! Maximal operators on (x, t) lattices: parabolic Hardy-Littlewood M,
//! iterated Mx Mt, non-tangential N* and Ñ over a stack of layers, and the
//! maximal differential operator 𝔻.
//!
//! Conventions: radii are 0 and the dyadic multiples of h; windows are closed,
//! |y - x| <= ρ and |s - t| <= ρ², clipped to the lattice unless the field is
//! periodic in that direction, and averages use the count of nodes inside.

use std::collections::VecDeque;

use ndarray::Array2;
use serde::Serialize;

use crate::field::{Field2, InteriorField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MaximalOp {
    Hl,
    Iterated,
    NtPointwise,
    NtIntegrated,
    MaxDiff,
}

#[derive(Debug, Clone)]
pub struct MaximalField {
    pub op: MaximalOp,
    pub values: Field2,
    /// Radii (M, 𝔻), window lengths (Mx Mt) or Whitney heights (N*, Ñ).
    pub radii: Vec<f64>,
}

/// Closed half-widths in nodes of the window of radius ρ.
pub fn half_widths(rho: f64, h: f64, k: f64) -> (usize, usize) {
    ((rho / h + 1e-9).floor() as usize, (rho * rho / k + 1e-9).floor() as usize)
}

/// Radius 0 (the node itself, the Lebesgue-point limit) followed by the
/// dyadic radii h 2^j up to the first one whose window covers the lattice.
pub fn dyadic_radii(v: &Field2) -> Vec<f64> {
    let (nx, nt) = v.data.dim();
    let mut out = vec![0.0];
    let mut rho = v.h;
    loop {
        out.push(rho);
        let (wx, wt) = half_widths(rho, v.h, v.k);
        if wx + 1 >= nx && wt + 1 >= nt {
            break;
        }
        rho *= 2.0;
    }
    out
}

/// Windowed sums of `src` over [i - w, i + w], with the number of terms.
fn box_sum_1d(src: &[f64], w: usize, periodic: bool, sums: &mut [f64], counts: &mut [usize]) {
    let n = src.len();
    if periodic && 2 * w + 1 >= n {
        let total: f64 = src.iter().sum();
        sums.iter_mut().for_each(|s| *s = total);
        counts.iter_mut().for_each(|c| *c = n);
        return;
    }
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + src[i];
    }
    for i in 0..n {
        if periodic {
            let lo = i as isize - w as isize;
            let hi = i + w;
            let mut s = 0.0;
            if lo < 0 {
                s += prefix[n] - prefix[(n as isize + lo) as usize];
                s += prefix[i + 1 + w.min(n - 1 - i)] - prefix[0];
            } else {
                s += prefix[(hi + 1).min(n)] - prefix[lo as usize];
            }
            if hi >= n {
                s += prefix[hi + 1 - n] - prefix[0];
            }
            sums[i] = s;
            counts[i] = 2 * w + 1;
        } else {
            let lo = i.saturating_sub(w);
            let hi = (i + w).min(n - 1);
            sums[i] = prefix[hi + 1] - prefix[lo];
            counts[i] = hi + 1 - lo;
        }
    }
}

/// Separable closed-window sums and node counts on an (nx, nt) array.
fn window_sums(a: &Array2<f64>, wx: usize, wt: usize, px: bool, pt: bool) -> (Array2<f64>, Array2<f64>) {
    let (nx, nt) = a.dim();
    let mut tmp = Array2::zeros((nx, nt));
    let mut ct = vec![0usize; nt];
    let mut row = vec![0.0; nt];
    let mut out_row = vec![0.0; nt];
    for j in 0..nx {
        row.iter_mut().zip(a.row(j)).for_each(|(r, &v)| *r = v);
        box_sum_1d(&row, wt, pt, &mut out_row, &mut ct);
        tmp.row_mut(j).iter_mut().zip(&out_row).for_each(|(o, &v)| *o = v);
    }
    let mut sums = Array2::zeros((nx, nt));
    let mut cx = vec![0usize; nx];
    let mut col = vec![0.0; nx];
    let mut out_col = vec![0.0; nx];
    for n in 0..nt {
        col.iter_mut().zip(tmp.column(n)).for_each(|(c, &v)| *c = v);
        box_sum_1d(&col, wx, px, &mut out_col, &mut cx);
        sums.column_mut(n).iter_mut().zip(&out_col).for_each(|(o, &v)| *o = v);
    }
    let counts = Array2::from_shape_fn((nx, nt), |(j, n)| (cx[j] * ct[n]) as f64);
    (sums, counts)
}

/// out[i] = max of src over offsets lo..=hi from i (clipped or periodic).
fn sliding_max(src: &[f64], lo: isize, hi: isize, periodic: bool, out: &mut [f64]) {
    let n = src.len() as isize;
    if periodic && hi - lo + 1 >= n {
        let m = src.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        out.iter_mut().for_each(|o| *o = m);
        return;
    }
    let at = |p: isize| -> f64 { src[p.rem_euclid(n) as usize] };
    let mut dq: VecDeque<isize> = VecDeque::new();
    let (start, end) = if periodic { (lo, n - 1 + hi) } else { (lo.max(0), (n - 1 + hi).min(n - 1)) };
    let mut next = start;
    for i in 0..n {
        let wlo = if periodic { i + lo } else { (i + lo).max(0) };
        let whi = if periodic { i + hi } else { (i + hi).min(n - 1) };
        while next <= whi.min(end) {
            let v = at(next);
            while let Some(&b) = dq.back() {
                if at(b) <= v {
                    dq.pop_back();
                } else {
                    break;
                }
            }
            dq.push_back(next);
            next += 1;
        }
        while let Some(&f) = dq.front() {
            if f < wlo {
                dq.pop_front();
            } else {
                break;
            }
        }
        out[i as usize] = dq.front().map(|&f| at(f)).unwrap_or(f64::NEG_INFINITY);
    }
}

fn window_max(a: &Array2<f64>, wx: usize, wt: usize, px: bool, pt: bool) -> Array2<f64> {
    let (nx, nt) = a.dim();
    let mut tmp = Array2::zeros((nx, nt));
    let mut row = vec![0.0; nt];
    let mut out_row = vec![0.0; nt];
    for j in 0..nx {
        row.iter_mut().zip(a.row(j)).for_each(|(r, &v)| *r = v);
        sliding_max(&row, -(wt as isize), wt as isize, pt, &mut out_row);
        tmp.row_mut(j).iter_mut().zip(&out_row).for_each(|(o, &v)| *o = v);
    }
    let mut out = Array2::zeros((nx, nt));
    let mut col = vec![0.0; nx];
    let mut out_col = vec![0.0; nx];
    for n in 0..nt {
        col.iter_mut().zip(tmp.column(n)).for_each(|(c, &v)| *c = v);
        sliding_max(&col, -(wx as isize), wx as isize, px, &mut out_col);
        out.column_mut(n).iter_mut().zip(&out_col).for_each(|(o, &v)| *o = v);
    }
    out
}

/// Average of `a` over the closed window of radius ρ about every node.
pub fn window_average(v: &Field2, rho: f64) -> Field2 {
    let (wx, wt) = half_widths(rho, v.h, v.k);
    let (s, c) = window_sums(&v.data, wx, wt, v.periodic_x, v.periodic_t);
    v.like(s / c)
}

/// M g = sup over dyadic ρ of the Δ_ρ average of |g|.
pub fn maximal_parabolic(g: &Field2) -> MaximalField {
    let abs = g.like(g.data.mapv(f64::abs));
    let radii = dyadic_radii(g);
    let mut out = Array2::zeros(g.data.dim());
    for &rho in &radii {
        let avg = window_average(&abs, rho);
        out.zip_mut_with(&avg.data, |o, &a| *o = f64::max(*o, a));
    }
    MaximalField { op: MaximalOp::Hl, values: g.like(out), radii }
}

/// Uncentred dyadic 1-d maximal function along one axis: sup over windows
/// of 2^j consecutive nodes containing the node.
fn uncentred_1d(src: &[f64], periodic: bool, out: &mut [f64]) {
    let n = src.len();
    out.iter_mut().for_each(|o| *o = 0.0);
    let mut avg = vec![0.0; n];
    let mut prefix = vec![0.0; 2 * n + 1];
    for i in 0..2 * n {
        prefix[i + 1] = prefix[i] + src[i % n];
    }
    let mut buf = vec![0.0; n];
    let mut len = 1usize;
    while len <= n {
        // avg[a] = mean of window starting at a
        for a in 0..n {
            avg[a] = if periodic || a + len <= n {
                (prefix[a + len] - prefix[a]) / len as f64
            } else {
                f64::NEG_INFINITY
            };
        }
        sliding_max(&avg, -(len as isize - 1), 0, periodic, &mut buf);
        out.iter_mut().zip(&buf).for_each(|(o, &b)| *o = f64::max(*o, b));
        if len == n {
            break;
        }
        len = (2 * len).min(n);
    }
}

/// Mx Mt g: uncentred dyadic maximal in t along each x-row, then in x along
/// each t-column.
pub fn maximal_iterated(g: &Field2) -> MaximalField {
    let (nx, nt) = g.data.dim();
    let mut tmp = Array2::zeros((nx, nt));
    let mut row = vec![0.0; nt];
    let mut out_row = vec![0.0; nt];
    for j in 0..nx {
        row.iter_mut().zip(g.data.row(j)).for_each(|(r, &v)| *r = v.abs());
        uncentred_1d(&row, g.periodic_t, &mut out_row);
        tmp.row_mut(j).iter_mut().zip(&out_row).for_each(|(o, &v)| *o = v);
    }
    let mut out = Array2::zeros((nx, nt));
    let mut col = vec![0.0; nx];
    let mut out_col = vec![0.0; nx];
    for n in 0..nt {
        col.iter_mut().zip(tmp.column(n)).for_each(|(c, &v)| *c = v);
        uncentred_1d(&col, g.periodic_x, &mut out_col);
        out.column_mut(n).iter_mut().zip(&out_col).for_each(|(o, &v)| *o = v);
    }
    let mut lengths = Vec::new();
    let mut l = 1usize;
    while l <= nt.max(nx) {
        lengths.push(l as f64);
        l *= 2;
    }
    MaximalField { op: MaximalOp::Iterated, values: g.like(out), radii: lengths }
}

/// Trapezoid dual-cell widths of an increasing sequence of heights.
pub fn layer_weights(lambdas: &[f64]) -> Vec<f64> {
    let n = lambdas.len();
    (0..n)
        .map(|i| {
            if n == 1 {
                return lambdas[0];
            }
            let lo = if i == 0 { lambdas[0] } else { lambdas[i - 1] };
            let hi = if i + 1 == n { lambdas[n - 1] } else { lambdas[i + 1] };
            0.5 * (hi - lo)
        })
        .collect()
}

enum Stored {
    Full(Array2<f64>),
    Compact(Array2<f32>),
}

impl Stored {
    fn add_to(&self, acc: &mut Array2<f64>, w: f64) {
        match self {
            Stored::Full(a) => acc.zip_mut_with(a, |o, &v| *o += w * v),
            Stored::Compact(a) => acc.zip_mut_with(a, |o, &v| *o += w * v as f64),
        }
    }
}

/// Streaming N* and Ñ over a stack of layers pushed in increasing height.
///
/// Whitney boxes are (μ/2, μ] x {|y - x| <= μ} x {|s - t| <= μ²} with μ
/// ranging over the stack heights.
pub struct NtStream {
    lambdas: Vec<f64>,
    weights: Vec<f64>,
    next: usize,
    like: Field2,
    want_star: bool,
    want_tilde: bool,
    compact: bool,
    nstar: Array2<f64>,
    ntilde: Array2<f64>,
    ring: VecDeque<(usize, Stored)>,
    acc: Array2<f64>,
    acc_weight: f64,
}

impl NtStream {
    pub fn new(lambdas: &[f64], like: &Field2) -> Self {
        Self::with_outputs(lambdas, like, true, true, false)
    }

    /// `compact` keeps the squared layers of the Ñ window in single
    /// precision.
    pub fn with_outputs(lambdas: &[f64], like: &Field2, star: bool, tilde: bool, compact: bool) -> Self {
        let mut blank = like.clone();
        blank.data = Array2::zeros((0, 0));
        let dim = like.data.dim();
        let z = |on: bool| if on { Array2::zeros(dim) } else { Array2::zeros((0, 0)) };
        NtStream {
            lambdas: lambdas.to_vec(),
            weights: layer_weights(lambdas),
            next: 0,
            like: blank,
            want_star: star,
            want_tilde: tilde,
            compact,
            nstar: z(star),
            ntilde: z(tilde),
            ring: VecDeque::new(),
            acc: z(tilde),
            acc_weight: 0.0,
        }
    }

    /// Largest stack height strictly below 2λ_i.
    fn nstar_radius(&self, i: usize) -> f64 {
        let lim = 2.0 * self.lambdas[i] * (1.0 - 1e-12);
        self.lambdas.iter().cloned().filter(|&l| l < lim).fold(self.lambdas[i], f64::max)
    }

    pub fn push(&mut self, layer: &Array2<f64>) {
        let i = self.next;
        assert!(i < self.lambdas.len(), "more layers than stack heights");
        self.next += 1;
        let (px, pt) = (self.like.periodic_x, self.like.periodic_t);
        let (h, k) = (self.like.h, self.like.k);
        if self.want_star {
            let abs = layer.mapv(f64::abs);
            let (wx, wt) = half_widths(self.nstar_radius(i), h, k);
            let m = window_max(&abs, wx, wt, px, pt);
            self.nstar.zip_mut_with(&m, |o, &v| *o = f64::max(*o, v));
        }
        if !self.want_tilde {
            return;
        }
        let mu = self.lambdas[i];
        let stored = if self.compact {
            Stored::Compact(layer.mapv(|v| (v * v) as f32))
        } else {
            Stored::Full(layer.mapv(|v| v * v))
        };
        stored.add_to(&mut self.acc, self.weights[i]);
        self.acc_weight += self.weights[i];
        self.ring.push_back((i, stored));
        while let Some((f, _)) = self.ring.front() {
            let f = *f;
            if self.lambdas[f] > 0.5 * mu * (1.0 + 1e-12) {
                break;
            }
            let (_, old) = self.ring.pop_front().unwrap();
            old.add_to(&mut self.acc, -self.weights[f]);
            self.acc_weight -= self.weights[f];
        }
        if self.ring.len() == 1 {
            // exact restart, no cancellation residue
            self.acc.fill(0.0);
            self.ring[0].1.add_to(&mut self.acc, self.weights[i]);
            self.acc_weight = self.weights[i];
        }
        let (wx, wt) = half_widths(mu, h, k);
        let (num, cnt) = window_sums(&self.acc, wx, wt, px, pt);
        let wsum = self.acc_weight;
        ndarray::Zip::from(&mut self.ntilde).and(&num).and(&cnt).for_each(|o, &s, &c| {
            let v = (s.max(0.0) / (wsum * c)).sqrt();
            if v > *o {
                *o = v;
            }
        });
    }

    pub fn finish(self) -> (MaximalField, MaximalField) {
        let like = self.like;
        let a = MaximalField {
            op: MaximalOp::NtPointwise,
            values: like.like(self.nstar),
            radii: self.lambdas.clone(),
        };
        let b = MaximalField { op: MaximalOp::NtIntegrated, values: like.like(self.ntilde), radii: self.lambdas };
        (a, b)
    }
}

fn interior_layers(u: &InteriorField) -> (Vec<f64>, Field2, Vec<Array2<f64>>) {
    let g = &u.grid;
    let lambdas: Vec<f64> = (1..=g.nl).map(|i| g.lambda(i)).collect();
    let like = Field2::zeros(g.x(0), g.t(0), g.h, g.k, g.nx, g.nt);
    let layers = (1..=g.nl)
        .map(|i| Array2::from_shape_fn((g.nx, g.nt), |(j, n)| u.data[[n, j, i]]))
        .collect();
    (lambdas, like, layers)
}

/// N* F over the grid rows λ = h, 2h, ..., lmax.
pub fn ntmax_pointwise(f: &InteriorField) -> MaximalField {
    let (lambdas, like, layers) = interior_layers(f);
    let mut s = NtStream::new(&lambdas, &like);
    layers.iter().for_each(|l| s.push(l));
    s.finish().0
}

/// Ñ F over the grid rows (root mean square on the same Whitney boxes).
pub fn ntmax_integrated(f: &InteriorField) -> MaximalField {
    let (lambdas, like, layers) = interior_layers(f);
    let mut s = NtStream::new(&lambdas, &like);
    layers.iter().for_each(|l| s.push(l));
    s.finish().1
}

/// Options for 𝔻: radius cap and the largest number of samples per axis
/// taken from a window (larger windows are strided).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MaxDiffOptions {
    pub rho_cap: f64,
    pub max_samples: usize,
}

impl Default for MaxDiffOptions {
    fn default() -> Self {
        MaxDiffOptions { rho_cap: f64::INFINITY, max_samples: usize::MAX }
    }
}

fn strided_offsets(w: usize, max_samples: usize) -> Vec<isize> {
    let full = 2 * w + 1;
    let stride = if full <= max_samples { 1 } else { full.div_ceil(max_samples) };
    let m = w / stride;
    (-(m as isize)..=m as isize).map(|o| o * stride as isize).collect()
}

/// 𝔻v = sup over dyadic ρ of the average over Δ_ρ(x, t) of
/// |v(x,t) - v(y,s)| / ‖(x - y, t - s)‖, the node itself excluded.
/// Evaluated on nodes j in `xs`, n in `ts` (other nodes are left at 0).
pub fn max_diff_on(
    v: &Field2,
    opts: MaxDiffOptions,
    xs: std::ops::Range<usize>,
    ts: std::ops::Range<usize>,
) -> MaximalField {
    let (nx, nt) = v.data.dim();
    let radii: Vec<f64> = dyadic_radii(v).into_iter().filter(|&r| r <= opts.rho_cap * (1.0 + 1e-12)).collect();
    let mut out = Array2::zeros((nx, nt));
    for &rho in &radii {
        let (wx, wt) = half_widths(rho, v.h, v.k);
        let ox = strided_offsets(wx.min(if v.periodic_x { (nx - 1) / 2 } else { nx }), opts.max_samples);
        let ot = strided_offsets(wt.min(if v.periodic_t { (nt - 1) / 2 } else { nt }), opts.max_samples);
        let inv_t: Vec<f64> = ot.iter().map(|&o| (o.unsigned_abs() as f64 * v.k).sqrt()).collect();
        for j in xs.clone() {
            for n in ts.clone() {
                let c = v.data[[j, n]];
                let mut sum = 0.0;
                let mut count = 0usize;
                for &dx in &ox {
                    let jj = j as isize + dx;
                    let jj = if v.periodic_x {
                        jj.rem_euclid(nx as isize) as usize
                    } else if jj < 0 || jj >= nx as isize {
                        continue;
                    } else {
                        jj as usize
                    };
                    let ax = dx.unsigned_abs() as f64 * v.h;
                    let row = v.data.row(jj);
                    for (q, &dt) in ot.iter().enumerate() {
                        let nn = n as isize + dt;
                        let nn = if v.periodic_t {
                            nn.rem_euclid(nt as isize) as usize
                        } else if nn < 0 || nn >= nt as isize {
                            continue;
                        } else {
                            nn as usize
                        };
                        if dx == 0 && dt == 0 {
                            continue;
                        }
                        sum += (c - row[nn]).abs() / (ax + inv_t[q]);
                        count += 1;
                    }
                }
                if count > 0 {
                    let a = sum / count as f64;
                    if a > out[[j, n]] {
                        out[[j, n]] = a;
                    }
                }
            }
        }
    }
    MaximalField { op: MaximalOp::MaxDiff, values: v.like(out), radii }
}

/// Unstrided Δ_ρ average of the difference quotient at one node of a
/// non-periodic field (diagonal excluded).
pub fn quotient_average(v: &Field2, rho: f64, j: usize, n: usize) -> f64 {
    level_average(v, rho, j, n)
}

fn level_average(v: &Field2, rho: f64, j: usize, n: usize) -> f64 {
    let (nx, nt) = v.data.dim();
    let (wx, wt) = half_widths(rho, v.h, v.k);
    let (mut sum, mut count) = (0.0, 0usize);
    for jj in j.saturating_sub(wx)..=(j + wx).min(nx - 1) {
        for nn in n.saturating_sub(wt)..=(n + wt).min(nt - 1) {
            if (jj, nn) == (j, n) {
                continue;
            }
            let d = jj.abs_diff(j) as f64 * v.h + (nn.abs_diff(n) as f64 * v.k).sqrt();
            sum += (v.data[[j, n]] - v.data[[jj, nn]]).abs() / d;
            count += 1;
        }
    }
    sum / count.max(1) as f64
}

pub fn max_diff(v: &Field2) -> MaximalField {
    let (nx, nt) = v.data.dim();
    max_diff_on(v, MaxDiffOptions::default(), 0..nx, 0..nt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(nx: usize, nt: usize, seed: u64, periodic: bool) -> Field2 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = Field2::zeros(0.0, 0.0, 0.25, 0.0625, nx, nt);
        f.data.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
        f.periodic_x = periodic;
        f.periodic_t = periodic;
        f
    }

    fn brute_window(f: &Field2, j: usize, n: usize, wx: usize, wt: usize, g: impl Fn(f64) -> f64) -> (f64, f64) {
        let (nx, nt) = f.data.dim();
        let (mut s, mut c) = (0.0, 0.0);
        let mut seen = std::collections::HashSet::new();
        for dx in -(wx as isize)..=wx as isize {
            for dt in -(wt as isize)..=wt as isize {
                let (jj, nn) = (j as isize + dx, n as isize + dt);
                let (jj, nn) = if f.periodic_x {
                    (jj.rem_euclid(nx as isize), nn.rem_euclid(nt as isize))
                } else {
                    if jj < 0 || nn < 0 || jj >= nx as isize || nn >= nt as isize {
                        continue;
                    }
                    (jj, nn)
                };
                if seen.insert((jj, nn)) {
                    s += g(f.data[[jj as usize, nn as usize]]);
                    c += 1.0;
                }
            }
        }
        (s, c)
    }

    #[test]
    fn sliding_max_matches_scan() {
        let f = random_field(1, 23, 3, false);
        let src: Vec<f64> = f.data.row(0).to_vec();
        for periodic in [false, true] {
            for (lo, hi) in [(-3isize, 3isize), (-5, 0), (0, 4), (-30, 30)] {
                let mut out = vec![0.0; 23];
                sliding_max(&src, lo, hi, periodic, &mut out);
                for i in 0..23isize {
                    let mut m = f64::NEG_INFINITY;
                    for o in lo..=hi {
                        let p = i + o;
                        if periodic {
                            m = m.max(src[p.rem_euclid(23) as usize]);
                        } else if (0..23).contains(&p) {
                            m = m.max(src[p as usize]);
                        }
                    }
                    assert_eq!(out[i as usize], m);
                }
            }
        }
    }

    #[test]
    fn window_sums_match_brute_force() {
        for periodic in [false, true] {
            let f = random_field(9, 31, 5, periodic);
            for (wx, wt) in [(1, 1), (2, 7), (5, 20)] {
                let (s, c) = window_sums(&f.data, wx, wt, periodic, periodic);
                for j in 0..9 {
                    for n in 0..31 {
                        let (bs, bc) = brute_window(&f, j, n, wx, wt, |v| v);
                        assert!((s[[j, n]] - bs).abs() < 1e-12);
                        assert_eq!(c[[j, n]], bc);
                    }
                }
            }
        }
    }

    #[test]
    fn constants_fixed() {
        let mut f = Field2::zeros(0.0, 0.0, 0.25, 0.0625, 8, 16);
        f.data.fill(2.5);
        assert!(maximal_parabolic(&f).values.data.iter().all(|&v| (v - 2.5).abs() < 1e-12));
        assert!(maximal_iterated(&f).values.data.iter().all(|&v| (v - 2.5).abs() < 1e-12));
        assert!(max_diff(&f).values.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hl_dominates_abs() {
        let f = random_field(12, 20, 9, false);
        let m = maximal_parabolic(&f);
        for (a, b) in m.values.data.iter().zip(f.data.iter()) {
            assert!(*a >= b.abs() - 1e-15);
        }
    }
}
