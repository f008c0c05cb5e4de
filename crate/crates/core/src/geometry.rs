//! Half-space grids with parabolic scaling, parabolic cubes, cones, Whitney
//! cubes and the parabolic distance to a boundary set.

use ndarray::Array2;
use serde::Serialize;

use crate::error::{LabError, Result};

const COMMENSURATE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Point2 {
    pub x: f64,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Point3 {
    pub lambda: f64,
    pub x: f64,
    pub t: f64,
}

/// ‖(x, t)‖ = |x| + |t|^{1/2}.
#[inline]
pub fn parabolic_norm(dx: f64, dt: f64) -> f64 {
    dx.abs() + dt.abs().sqrt()
}

/// Discrete half-space (0, lmax] x [-xext, xext] x [0, text] with k = h^2.
/// Row i = 0 is the boundary lambda = 0, rows 1..=nl are lambda = i h; the
/// top row nl is the truncation face.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    pub h: f64,
    pub k: f64,
    pub lmax: f64,
    pub xext: f64,
    pub text: f64,
    pub nl: usize,
    pub nx: usize,
    pub nt: usize,
}

fn steps(extent: f64, step: f64, what: &str) -> Result<usize> {
    let q = extent / step;
    let n = q.round();
    if !(extent > 0.0) || (q - n).abs() > COMMENSURATE_TOL * q.max(1.0) || n < 1.0 {
        return Err(LabError::Grid(format!(
            "{what} = {extent} is not a positive multiple of {step}"
        )));
    }
    Ok(n as usize)
}

pub fn build_grid(h: f64, lmax: f64, xext: f64, text: f64) -> Result<Grid> {
    if !(h > 0.0) {
        return Err(LabError::Grid("h must be positive".into()));
    }
    let k = h * h;
    let nl = steps(lmax, h, "lmax")?;
    let nxh = steps(xext, h, "xext")?;
    let ntk = steps(text, k, "text")?;
    Ok(Grid {
        h,
        k,
        lmax,
        xext,
        text,
        nl,
        nx: 2 * nxh + 1,
        nt: ntk + 1,
    })
}

impl Grid {
    #[inline]
    pub fn lambda(&self, i: usize) -> f64 {
        i as f64 * self.h
    }
    #[inline]
    pub fn x(&self, j: usize) -> f64 {
        -self.xext + j as f64 * self.h
    }
    #[inline]
    pub fn t(&self, n: usize) -> f64 {
        n as f64 * self.k
    }
    /// Nearest node index in x, if inside.
    pub fn x_index(&self, x: f64) -> Option<usize> {
        let q = (x + self.xext) / self.h;
        let j = q.round();
        if j < 0.0 || j as usize >= self.nx || (q - j).abs() > 1e-6 {
            None
        } else {
            Some(j as usize)
        }
    }
    pub fn t_index(&self, t: f64) -> Option<usize> {
        let q = t / self.k;
        let n = q.round();
        if n < 0.0 || n as usize >= self.nt || (q - n).abs() > 1e-6 {
            None
        } else {
            Some(n as usize)
        }
    }
    pub fn lambda_index(&self, l: f64) -> Option<usize> {
        let q = l / self.h;
        let i = q.round();
        if i < 1.0 || i as usize > self.nl || (q - i).abs() > 1e-6 {
            None
        } else {
            Some(i as usize)
        }
    }
}

/// Δ_r(x0, t0) = (x0 - r, x0 + r) x (t0 - r^2, t0 + r^2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParabolicCube {
    pub x0: f64,
    pub t0: f64,
    pub r: f64,
}

impl ParabolicCube {
    pub fn new(x0: f64, t0: f64, r: f64) -> Self {
        ParabolicCube { x0, t0, r }
    }
    /// |Δ| = (2r)^n 2r^2 with n = 1.
    pub fn measure(&self) -> f64 {
        2.0 * self.r * 2.0 * self.r * self.r
    }
    pub fn dilate(&self, c: f64) -> Self {
        ParabolicCube {
            x0: self.x0,
            t0: self.t0,
            r: c * self.r,
        }
    }
    pub fn x_range(&self) -> (f64, f64) {
        (self.x0 - self.r, self.x0 + self.r)
    }
    pub fn t_range(&self) -> (f64, f64) {
        (self.t0 - self.r * self.r, self.t0 + self.r * self.r)
    }
    /// Closed-cube membership with a relative slack for grid round-off.
    pub fn contains_closed(&self, x: f64, t: f64) -> bool {
        let e = 1e-9 * self.r.max(1e-300);
        (x - self.x0).abs() <= self.r + e && (t - self.t0).abs() <= self.r * self.r + e * self.r
    }
    /// Half-open membership [x0 - r, x0 + r) x [t0 - r^2, t0 + r^2), which
    /// makes node-cell quadrature exact for grid-aligned cubes.
    pub fn contains_half_open(&self, x: f64, t: f64) -> bool {
        let ex = 1e-9 * self.r;
        let et = 1e-9 * self.r * self.r;
        x >= self.x0 - self.r - ex
            && x < self.x0 + self.r - ex
            && t >= self.t0 - self.r * self.r - et
            && t < self.t0 + self.r * self.r - et
    }
}

/// A⁺_r(x0, t0) = (4r, x0, t0 + 16 r^2).
pub fn corkscrew_point(cube: &ParabolicCube) -> Point3 {
    Point3 {
        lambda: 4.0 * cube.r,
        x: cube.x0,
        t: cube.t0 + 16.0 * cube.r * cube.r,
    }
}

/// A⁻_r(x0, t0) = (4r, x0, t0 - 16 r^2).
pub fn corkscrew_point_backward(cube: &ParabolicCube) -> Point3 {
    Point3 {
        lambda: 4.0 * cube.r,
        x: cube.x0,
        t: cube.t0 - 16.0 * cube.r * cube.r,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConeParams {
    pub eta: f64,
    pub vertex: Point2,
}

impl ConeParams {
    pub fn contains(&self, lambda: f64, x: f64, t: f64) -> bool {
        lambda > 0.0
            && parabolic_norm(x - self.vertex.x, t - self.vertex.t) < self.eta * lambda
    }
}

/// Whitney cube of dyadic size ell: lambda in [4 ell, 8 ell), x in
/// [4 ell m, 4 ell (m+1)), t in [16 ell^2 p, 16 ell^2 (p+1)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WhitneyCube {
    pub ell: f64,
    pub m: i64,
    pub p: i64,
    /// lambda_min / ell, always 4.
    pub distance_ratio: f64,
}

impl WhitneyCube {
    pub fn lambda_range(&self) -> (f64, f64) {
        (4.0 * self.ell, 8.0 * self.ell)
    }
    pub fn x_range(&self) -> (f64, f64) {
        let s = 4.0 * self.ell;
        (s * self.m as f64, s * (self.m + 1) as f64)
    }
    pub fn t_range(&self) -> (f64, f64) {
        let s = 16.0 * self.ell * self.ell;
        (s * self.p as f64, s * (self.p + 1) as f64)
    }
    pub fn center(&self) -> Point3 {
        let (l0, l1) = self.lambda_range();
        let (x0, x1) = self.x_range();
        let (t0, t1) = self.t_range();
        Point3 {
            lambda: 0.5 * (l0 + l1),
            x: 0.5 * (x0 + x1),
            t: 0.5 * (t0 + t1),
        }
    }
    pub fn contains(&self, l: f64, x: f64, t: f64) -> bool {
        let (l0, l1) = self.lambda_range();
        let (x0, x1) = self.x_range();
        let (t0, t1) = self.t_range();
        l >= l0 && l < l1 && x >= x0 && x < x1 && t >= t0 && t < t1
    }
    /// Parabolic double about the centre: half-widths (4 ell, 4 ell, 32 ell^2).
    pub fn double_contains(&self, l: f64, x: f64, t: f64) -> bool {
        let c = self.center();
        let e = self.ell;
        (l - c.lambda).abs() < 4.0 * e && (x - c.x).abs() < 4.0 * e && (t - c.t).abs() < 32.0 * e * e
    }
}

fn node_key_eps(h: f64) -> f64 {
    1e-9 * h
}

/// Dyadic Whitney cubes covering every node with lambda in [h, lmax) of the
/// grid. Only cubes containing at least one node are returned.
pub fn whitney_decomposition(grid: &Grid) -> Vec<WhitneyCube> {
    let eps = node_key_eps(grid.h);
    let mut cubes = Vec::new();
    let lam_top = grid.lambda(grid.nl);
    let mut j: i32 = -(((lam_top / 4.0).log2().ceil()) as i32) - 1;
    loop {
        let ell = 2f64.powi(-j);
        if 8.0 * ell <= grid.h {
            break;
        }
        j += 1;
        let (l0, l1) = (4.0 * ell, 8.0 * ell);
        let has_row = (1..grid.nl).any(|i| {
            let l = grid.lambda(i) + eps;
            l >= l0 && l < l1
        });
        if !has_row {
            continue;
        }
        let sx = 4.0 * ell;
        let st = 16.0 * ell * ell;
        let m0 = ((-grid.xext + eps) / sx).floor() as i64;
        let m1 = ((grid.xext + eps) / sx).floor() as i64;
        let p1 = ((grid.text + eps) / st).floor() as i64;
        for m in m0..=m1 {
            let xa = sx * m as f64;
            let has_x = (0..grid.nx).any(|jx| {
                let x = grid.x(jx) + eps;
                x >= xa && x < xa + sx
            });
            if !has_x {
                continue;
            }
            for p in 0..=p1 {
                let ta = st * p as f64;
                let na = ((ta - eps) / grid.k).ceil().max(0.0) as usize;
                if na >= grid.nt || grid.t(na) + eps * grid.h >= ta + st {
                    continue;
                }
                cubes.push(WhitneyCube {
                    ell,
                    m,
                    p,
                    distance_ratio: 4.0,
                });
            }
        }
    }
    cubes
}

/// Per-node count of doubled cubes; returns the maximum multiplicity.
pub fn double_overlap_multiplicity(grid: &Grid, cubes: &[WhitneyCube]) -> usize {
    let eps = node_key_eps(grid.h);
    let mut best = 0;
    for i in 1..grid.nl {
        let l = grid.lambda(i) + eps;
        let rel: Vec<&WhitneyCube> = cubes
            .iter()
            .filter(|c| {
                let cc = c.center();
                (l - cc.lambda).abs() < 4.0 * c.ell
            })
            .collect();
        for jx in 0..grid.nx {
            let x = grid.x(jx) + eps;
            for n in 0..grid.nt {
                let t = grid.t(n) + eps * grid.h;
                let cnt = rel.iter().filter(|c| c.double_contains(l, x, t)).count();
                best = best.max(cnt);
            }
        }
    }
    best
}

/// Boolean mask on an (x, t) node lattice with origin (x_origin, t_origin).
#[derive(Debug, Clone)]
pub struct BoundaryMask {
    pub x_origin: f64,
    pub t_origin: f64,
    pub h: f64,
    pub k: f64,
    pub mask: Array2<bool>,
}

impl BoundaryMask {
    pub fn x(&self, j: usize) -> f64 {
        self.x_origin + j as f64 * self.h
    }
    pub fn t(&self, n: usize) -> f64 {
        self.t_origin + n as f64 * self.k
    }
    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }
}

/// Column-sorted index of the set nodes for exact parabolic distance queries.
/// Columns are scanned outward in |x - y| and pruned once |x - y| exceeds
/// the best distance found.
#[derive(Debug, Clone)]
pub struct DistanceIndex {
    x_origin: f64,
    t_origin: f64,
    h: f64,
    k: f64,
    columns: Vec<Vec<usize>>,
    nonempty: Vec<usize>,
}

impl DistanceIndex {
    pub fn new(set: &BoundaryMask) -> Result<Self> {
        let (nx, nt) = set.mask.dim();
        let mut columns = vec![Vec::new(); nx];
        for j in 0..nx {
            for n in 0..nt {
                if set.mask[[j, n]] {
                    columns[j].push(n);
                }
            }
        }
        let nonempty: Vec<usize> = (0..nx).filter(|&j| !columns[j].is_empty()).collect();
        if nonempty.is_empty() {
            return Err(LabError::EmptySet);
        }
        Ok(DistanceIndex {
            x_origin: set.x_origin,
            t_origin: set.t_origin,
            h: set.h,
            k: set.k,
            columns,
            nonempty,
        })
    }

    fn column_time_gap(&self, j: usize, t: f64) -> f64 {
        let col = &self.columns[j];
        let q = (t - self.t_origin) / self.k;
        let pos = col.partition_point(|&n| (n as f64) < q);
        let mut best = f64::INFINITY;
        if pos < col.len() {
            best = best.min((col[pos] as f64 - q).abs());
        }
        if pos > 0 {
            best = best.min((q - col[pos - 1] as f64).abs());
        }
        best * self.k
    }

    pub fn distance(&self, x: f64, t: f64) -> f64 {
        let q = (x - self.x_origin) / self.h;
        let start = self.nonempty.partition_point(|&j| (j as f64) < q);
        let mut best = f64::INFINITY;
        let mut lo = start as isize - 1;
        let mut hi = start;
        loop {
            let dl = if lo >= 0 {
                (q - self.nonempty[lo as usize] as f64).abs() * self.h
            } else {
                f64::INFINITY
            };
            let dh = if hi < self.nonempty.len() {
                (self.nonempty[hi] as f64 - q).abs() * self.h
            } else {
                f64::INFINITY
            };
            let (dx, j) = if dl <= dh {
                if dl.is_infinite() {
                    break;
                }
                let j = self.nonempty[lo as usize];
                lo -= 1;
                (dl, j)
            } else {
                let j = self.nonempty[hi];
                hi += 1;
                (dh, j)
            };
            if dx >= best {
                break;
            }
            let d = dx + self.column_time_gap(j, t).sqrt();
            best = best.min(d);
        }
        best
    }
}

/// min over set nodes of ‖(x - y, t - s)‖.
pub fn parabolic_distance(point: Point2, set: &BoundaryMask) -> Result<f64> {
    Ok(DistanceIndex::new(set)?.distance(point.x, point.t))
}
