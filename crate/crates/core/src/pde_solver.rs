//! Backward-Euler, flux-form solver for ∂t u = div_{λ,x}(A ∇_{λ,x} u) on the
//! truncated half-space box, its transpose (measure-row) solve, discrete
//! gradients and a Caccioppoli ratio.

use ndarray::{Array2, Array3};
use serde::Serialize;

use crate::coeffs::CoefficientField;
use crate::error::{LabError, Result};
use crate::field::{BoundaryField, InteriorField};
use crate::geometry::{Grid, Point3, WhitneyCube};
use crate::linalg::{BandedLu, Csr};

pub const STEP_TOL: f64 = 1e-10;
const REFINE_TARGET: f64 = 1e-13;
const MAX_REFINE: usize = 6;

/// Constant Dirichlet data on the truncation faces and the initial row.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct FaceData {
    pub lateral: f64,
    pub top: f64,
    pub initial: f64,
}

/// Unknowns are the nodes 1 <= i <= nl-1, 1 <= j <= nx-2, ordered with
/// lambda fastest. Face nodes: bottom j in [0, nx), then left column, right
/// column (rows 1..=nl), then top row (j = 1..=nx-2).
pub(crate) struct Layout {
    pub mi: usize,
    pub mj: usize,
    pub nx: usize,
    pub nl: usize,
}

impl Layout {
    pub fn new(grid: &Grid) -> Result<Self> {
        if grid.nl < 3 || grid.nx < 3 || grid.nt < 2 {
            return Err(LabError::Grid("grid too small for the solver".into()));
        }
        Ok(Layout {
            mi: grid.nl - 1,
            mj: grid.nx - 2,
            nx: grid.nx,
            nl: grid.nl,
        })
    }
    pub fn n(&self) -> usize {
        self.mi * self.mj
    }
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        (j - 1) * self.mi + (i - 1)
    }
    pub fn n_faces(&self) -> usize {
        self.nx + 2 * self.nl + self.mj
    }
    /// Face id of a non-unknown node, or None if (i, j) is an unknown.
    #[inline]
    pub fn face(&self, i: usize, j: usize) -> Option<usize> {
        if i == 0 {
            Some(j)
        } else if j == 0 {
            Some(self.nx + i - 1)
        } else if j == self.nx - 1 {
            Some(self.nx + self.nl + i - 1)
        } else if i == self.nl {
            Some(self.nx + 2 * self.nl + j - 1)
        } else {
            None
        }
    }
    pub fn is_bottom(&self, face: usize) -> bool {
        face < self.nx
    }
}

pub(crate) struct Assembled {
    pub sys: Csr,
    /// Rows: unknowns; columns: face ids; values: couplings of D (without k).
    pub bnd: Csr,
}

/// Coefficient samples along x at time t.
fn coeff_rows(coeffs: &CoefficientField, grid: &Grid, t: f64) -> [Vec<f64>; 4] {
    let mut all = vec![0.0; grid.nx];
    let mut alx = vec![0.0; grid.nx];
    let mut axl = vec![0.0; grid.nx];
    let mut axx = vec![0.0; grid.nx];
    for j in 0..grid.nx {
        let a = coeffs.eval(grid.x(j), t);
        all[j] = a[0][0];
        alx[j] = a[0][1];
        axl[j] = a[1][0];
        axx[j] = a[1][1];
    }
    [all, alx, axl, axx]
}

pub(crate) fn assemble(coeffs: &CoefficientField, grid: &Grid, lay: &Layout, t: f64) -> Assembled {
    let [all, alx, axl, axx] = coeff_rows(coeffs, grid, t);
    let h2 = grid.h * grid.h;
    let k = grid.k;
    let n = lay.n();
    let mut sys = Csr::with_capacity(n, 9 * n);
    let mut bnd = Csr::with_capacity(n, 3 * lay.mj + 6 * lay.mi);
    let mut entries: Vec<(isize, isize, f64)> = Vec::with_capacity(9);
    for j in 1..=lay.mj {
        let fxp = 0.5 * (axx[j] + axx[j + 1]);
        let fxm = 0.5 * (axx[j] + axx[j - 1]);
        let cpp = (alx[j] + axl[j + 1]) / (4.0 * h2);
        let cpm = -(alx[j] + axl[j - 1]) / (4.0 * h2);
        for i in 1..=lay.mi {
            entries.clear();
            entries.push((0, 0, -(2.0 * all[j] + fxp + fxm) / h2));
            entries.push((1, 0, all[j] / h2));
            entries.push((-1, 0, all[j] / h2));
            entries.push((0, 1, fxp / h2));
            entries.push((0, -1, fxm / h2));
            entries.push((1, 1, cpp));
            entries.push((1, -1, cpm));
            entries.push((-1, 1, -cpp));
            entries.push((-1, -1, -cpm));
            for &(di, dj, c) in &entries {
                if c == 0.0 && (di, dj) != (0, 0) {
                    continue;
                }
                let ii = (i as isize + di) as usize;
                let jj = (j as isize + dj) as usize;
                match lay.face(ii, jj) {
                    None => {
                        let v = if (di, dj) == (0, 0) { 1.0 - k * c } else { -k * c };
                        sys.push(lay.idx(ii, jj), v);
                    }
                    Some(f) => bnd.push(f, c),
                }
            }
            sys.end_row();
            bnd.end_row();
        }
    }
    Assembled { sys, bnd }
}

/// Per-step solver that reuses an LU factor while the matrix is unchanged
/// and falls back to iterative refinement against a stale factor.
pub(crate) struct StepSolver {
    lu: Option<BandedLu>,
    factored: Csr,
    bw: usize,
    pub max_residual: f64,
    pub refactors: usize,
    r: Vec<f64>,
    dx: Vec<f64>,
}

impl StepSolver {
    pub fn new(lay: &Layout) -> Self {
        StepSolver {
            lu: None,
            factored: Csr::default(),
            bw: lay.mi + 1,
            max_residual: 0.0,
            refactors: 0,
            r: vec![0.0; lay.n()],
            dx: vec![0.0; lay.n()],
        }
    }

    fn refactor(&mut self, a: &Csr) -> Result<()> {
        self.lu = Some(BandedLu::factor(a, self.bw, self.bw)?);
        self.factored = a.clone();
        self.refactors += 1;
        Ok(())
    }

    fn residual(&mut self, a: &Csr, b: &[f64], x: &[f64], transpose: bool) -> f64 {
        if transpose {
            a.matvec_t(x, &mut self.r);
        } else {
            a.matvec(x, &mut self.r);
        }
        let mut num: f64 = 0.0;
        let mut den: f64 = 0.0;
        for i in 0..b.len() {
            self.r[i] = b[i] - self.r[i];
            num = num.max(self.r[i].abs());
            den = den.max(b[i].abs());
        }
        if den == 0.0 {
            num
        } else {
            num / den
        }
    }

    /// Solve A x = b (or A^T x = b); returns the relative residual.
    pub fn solve(&mut self, a: &Csr, b: &[f64], x: &mut [f64], transpose: bool, step: usize) -> Result<f64> {
        if self.lu.is_none() {
            self.refactor(a)?;
        }
        let exact = self.factored.same_values(a);
        for attempt in 0..2 {
            let lu = self.lu.as_ref().unwrap();
            x.copy_from_slice(b);
            if transpose {
                lu.solve_transpose(x);
            } else {
                lu.solve(x);
            }
            let mut res = self.residual(a, b, x, transpose);
            let mut it = 0;
            while res > REFINE_TARGET && it < MAX_REFINE {
                let lu = self.lu.as_ref().unwrap();
                self.dx.copy_from_slice(&self.r);
                if transpose {
                    lu.solve_transpose(&mut self.dx);
                } else {
                    lu.solve(&mut self.dx);
                }
                for (xi, di) in x.iter_mut().zip(&self.dx) {
                    *xi += di;
                }
                res = self.residual(a, b, x, transpose);
                it += 1;
            }
            if res <= STEP_TOL && (it <= 2 || exact) {
                self.max_residual = self.max_residual.max(res);
                return Ok(res);
            }
            if attempt == 0 && !exact {
                self.refactor(a)?;
                continue;
            }
            if res <= STEP_TOL {
                self.max_residual = self.max_residual.max(res);
                return Ok(res);
            }
            return Err(LabError::SolverFailure {
                step,
                residual: res,
                iterations: it,
            });
        }
        unreachable!()
    }
}

fn check_inputs(coeffs: &CoefficientField, grid: &Grid) -> Result<()> {
    if coeffs.dim != 1 {
        return Err(LabError::UnsupportedDimension(coeffs.dim));
    }
    if !(coeffs.kappa > 0.0) {
        return Err(LabError::NonElliptic {
            x: 0.0,
            t: 0.0,
            xi: [1.0, 0.0],
            kappa_hat: coeffs.kappa,
        });
    }
    let _ = grid;
    Ok(())
}

fn face_value(lay: &Layout, f: &BoundaryField, faces: &FaceData, face: usize, n: usize) -> f64 {
    if lay.is_bottom(face) {
        f.data[[face, n]]
    } else if face < lay.nx + 2 * lay.nl {
        faces.lateral
    } else {
        faces.top
    }
}

/// March the forward problem for several boundary data sets sharing one
/// coefficient field, handing every time level `[[j, i]]` (faces included)
/// to `visit(set, step, layer)`. Returns the largest step residual.
pub fn march_forward_many(
    coeffs: &CoefficientField,
    fs: &[&BoundaryField],
    grid: &Grid,
    faces: FaceData,
    mut visit: impl FnMut(usize, usize, &Array2<f64>) -> Result<()>,
) -> Result<f64> {
    check_inputs(coeffs, grid)?;
    let lay = Layout::new(grid)?;
    for f in fs {
        if f.nx() != grid.nx || f.nt() != grid.nt {
            return Err(LabError::Grid("boundary data does not match the grid".into()));
        }
    }
    let n = lay.n();
    let mut prev: Vec<Vec<f64>> = fs.iter().map(|_| vec![faces.initial; n]).collect();
    let mut layer = Array2::zeros((grid.nx, grid.nl + 1));
    let mut solver = StepSolver::new(&lay);
    let mut asm: Option<Assembled> = None;
    let mut b = vec![0.0; n];
    let mut x = vec![0.0; n];
    for (s, f) in fs.iter().enumerate() {
        fill_faces(&mut layer, &lay, f, &faces, 0);
        for j in 1..=lay.mj {
            for i in 1..=lay.mi {
                layer[[j, i]] = faces.initial;
            }
        }
        visit(s, 0, &layer)?;
    }
    for step in 1..grid.nt {
        if asm.is_none() || !coeffs.time_independent() {
            asm = Some(assemble(coeffs, grid, &lay, grid.t(step)));
        }
        let a = asm.as_ref().unwrap();
        for (s, f) in fs.iter().enumerate() {
            b.copy_from_slice(&prev[s]);
            for row in 0..n {
                let mut acc = 0.0;
                for p in a.bnd.indptr[row]..a.bnd.indptr[row + 1] {
                    acc += a.bnd.values[p] * face_value(&lay, f, &faces, a.bnd.indices[p], step);
                }
                b[row] += grid.k * acc;
            }
            solver.solve(&a.sys, &b, &mut x, false, step)?;
            prev[s].copy_from_slice(&x);
            fill_faces(&mut layer, &lay, f, &faces, step);
            for j in 1..=lay.mj {
                for i in 1..=lay.mi {
                    layer[[j, i]] = x[lay.idx(i, j)];
                }
            }
            visit(s, step, &layer)?;
        }
    }
    Ok(solver.max_residual)
}

/// Stored version of [`march_forward_many`]: one interior field per data set.
pub fn solve_forward_many(
    coeffs: &CoefficientField,
    fs: &[&BoundaryField],
    grid: &Grid,
    faces: FaceData,
) -> Result<Vec<InteriorField>> {
    let mut outs: Vec<InteriorField> = fs.iter().map(|_| InteriorField::zeros(grid)).collect();
    let res = march_forward_many(coeffs, fs, grid, faces, |s, step, layer| {
        outs[s].data.index_axis_mut(ndarray::Axis(0), step).assign(layer);
        Ok(())
    })?;
    for out in outs.iter_mut() {
        out.max_step_residual = res;
        out.label = coeffs.name.clone();
    }
    Ok(outs)
}

fn fill_faces(out: &mut Array2<f64>, lay: &Layout, f: &BoundaryField, faces: &FaceData, n: usize) {
    for j in 0..lay.nx {
        out[[j, 0]] = f.data[[j, n]];
        if j > 0 && j < lay.nx - 1 {
            out[[j, lay.nl]] = faces.top;
        }
    }
    for i in 1..=lay.nl {
        out[[0, i]] = faces.lateral;
        out[[lay.nx - 1, i]] = faces.lateral;
    }
}

/// Forward solve with homogeneous truncation data (u = f on lambda = 0,
/// u = 0 on lateral/top faces and at t = 0).
pub fn solve_forward(coeffs: &CoefficientField, f: &BoundaryField, grid: &Grid) -> Result<InteriorField> {
    Ok(solve_forward_many(coeffs, &[f], grid, FaceData::default())?.remove(0))
}

pub fn solve_forward_with_faces(
    coeffs: &CoefficientField,
    f: &BoundaryField,
    grid: &Grid,
    faces: FaceData,
) -> Result<InteriorField> {
    Ok(solve_forward_many(coeffs, &[f], grid, faces)?.remove(0))
}

/// Discrete maximum-principle violation max(0, max|u| - max|f|).
pub fn max_principle_violation(u: &InteriorField, bound: f64) -> f64 {
    let m = u.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (m - bound).max(0.0)
}

/// Mass carried by the truncation faces of the measure row.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct TruncationMasses {
    pub lateral: f64,
    pub top: f64,
    pub initial: f64,
}

impl TruncationMasses {
    pub fn total(&self) -> f64 {
        self.lateral + self.top + self.initial
    }
}

/// Row of the discrete boundary-to-pole map. `g` is a density: the pole
/// value of the forward solution is Σ g f h k over bottom nodes.
#[derive(Debug, Clone)]
pub struct AdjointRow {
    pub pole: Point3,
    pub g: BoundaryField,
    pub truncation: TruncationMasses,
    pub max_residual: f64,
}

impl AdjointRow {
    pub fn mass(&self, j: usize, n: usize) -> f64 {
        self.g.data[[j, n]] * self.g.cell()
    }
    pub fn bottom_total(&self) -> f64 {
        self.g.data.sum() * self.g.cell()
    }
}

pub fn pole_indices(grid: &Grid, pole: Point3) -> Result<(usize, usize, usize)> {
    let ip = grid
        .lambda_index(pole.lambda)
        .ok_or_else(|| LabError::OutOfDomain(format!("pole lambda {} is not a grid row", pole.lambda)))?;
    let jp = grid
        .x_index(pole.x)
        .ok_or_else(|| LabError::OutOfDomain(format!("pole x {} is not a grid node", pole.x)))?;
    let np = grid
        .t_index(pole.t)
        .ok_or_else(|| LabError::OutOfDomain(format!("pole t {} is not a grid node", pole.t)))?;
    if ip < 4 || ip >= grid.nl || jp == 0 || jp + 1 >= grid.nx || np == 0 {
        return Err(LabError::OutOfDomain(format!(
            "pole ({}, {}, {}) must be an interior node with lambda >= 4h",
            pole.lambda, pole.x, pole.t
        )));
    }
    Ok((ip, jp, np))
}

/// One transpose solve sweeping backward from the pole time.
pub fn solve_adjoint_row(coeffs: &CoefficientField, pole: Point3, grid: &Grid) -> Result<AdjointRow> {
    check_inputs(coeffs, grid)?;
    let lay = Layout::new(grid)?;
    let (ip, jp, np) = pole_indices(grid, pole)?;
    let n = lay.n();
    let mut w = vec![0.0; n];
    w[lay.idx(ip, jp)] = 1.0;
    let mut z = vec![0.0; n];
    let mut face_acc = vec![0.0; lay.n_faces()];
    let mut bottom = Array2::<f64>::zeros((grid.nx, grid.nt));
    let mut trunc = TruncationMasses::default();
    let mut solver = StepSolver::new(&lay);
    let mut asm: Option<Assembled> = None;
    for step in (1..=np).rev() {
        if asm.is_none() || !coeffs.time_independent() {
            asm = Some(assemble(coeffs, grid, &lay, grid.t(step)));
        }
        let a = asm.as_ref().unwrap();
        solver.solve(&a.sys, &w, &mut z, true, step)?;
        face_acc.iter_mut().for_each(|v| *v = 0.0);
        for row in 0..n {
            let zr = z[row];
            if zr == 0.0 {
                continue;
            }
            for p in a.bnd.indptr[row]..a.bnd.indptr[row + 1] {
                face_acc[a.bnd.indices[p]] += a.bnd.values[p] * zr;
            }
        }
        for (face, v) in face_acc.iter().enumerate() {
            let m = grid.k * v;
            if lay.is_bottom(face) {
                bottom[[face, step]] = m;
            } else if face < lay.nx + 2 * lay.nl {
                trunc.lateral += m;
            } else {
                trunc.top += m;
            }
        }
        std::mem::swap(&mut w, &mut z);
    }
    trunc.initial = w.iter().sum();
    let cell = grid.h * grid.k;
    let mut g = BoundaryField::zeros(-grid.xext, 0.0, grid.h, grid.k, grid.nx, grid.nt);
    g.data = bottom.mapv(|m| m / cell);
    Ok(AdjointRow {
        pole,
        g,
        truncation: trunc,
        max_residual: solver.max_residual,
    })
}

/// Centred differences (∂λ u, ∂x u); one-sided on the truncation faces.
pub fn gradient_field(u: &InteriorField) -> (Array3<f64>, Array3<f64>) {
    let g = &u.grid;
    let (nt, nx, nl1) = u.data.dim();
    let mut dl = Array3::zeros((nt, nx, nl1));
    let mut dx = Array3::zeros((nt, nx, nl1));
    let h = g.h;
    for n in 0..nt {
        for j in 0..nx {
            for i in 0..nl1 {
                dl[[n, j, i]] = if i == 0 {
                    (u.data[[n, j, 1]] - u.data[[n, j, 0]]) / h
                } else if i + 1 == nl1 {
                    (u.data[[n, j, i]] - u.data[[n, j, i - 1]]) / h
                } else {
                    (u.data[[n, j, i + 1]] - u.data[[n, j, i - 1]]) / (2.0 * h)
                };
                dx[[n, j, i]] = if j == 0 {
                    (u.data[[n, 1, i]] - u.data[[n, 0, i]]) / h
                } else if j + 1 == nx {
                    (u.data[[n, j, i]] - u.data[[n, j - 1, i]]) / h
                } else {
                    (u.data[[n, j + 1, i]] - u.data[[n, j - 1, i]]) / (2.0 * h)
                };
            }
        }
    }
    (dl, dx)
}

fn smoothstep(s: f64) -> (f64, f64) {
    if s <= 0.0 {
        (0.0, 0.0)
    } else if s >= 1.0 {
        (1.0, 0.0)
    } else {
        (
            s * s * s * (10.0 - 15.0 * s + 6.0 * s * s),
            30.0 * s * s * (1.0 - s) * (1.0 - s),
        )
    }
}

/// Plateau bump: 1 for |d| <= a, 0 for |d| >= b, quintic ramp between.
pub fn plateau(d: f64, a: f64, b: f64) -> (f64, f64) {
    let ad = d.abs();
    let (v, dv) = smoothstep((b - ad) / (b - a));
    (v, -dv / (b - a) * d.signum())
}

/// Caccioppoli quotient on one Whitney cube with the bump psi = 1 on W,
/// supported in 2W. None when the denominator vanishes.
pub fn caccioppoli_ratio(u: &InteriorField, grad: &(Array3<f64>, Array3<f64>), cube: &WhitneyCube) -> Option<f64> {
    let g = &u.grid;
    let c = cube.center();
    let e = cube.ell;
    let (mut num, mut den) = (0.0, 0.0);
    for n in 0..g.nt {
        let (pt, dpt) = plateau(g.t(n) - c.t, 8.0 * e * e, 32.0 * e * e);
        if pt == 0.0 && dpt == 0.0 {
            continue;
        }
        for j in 0..g.nx {
            let (px, dpx) = plateau(g.x(j) - c.x, 2.0 * e, 4.0 * e);
            if px == 0.0 && dpx == 0.0 {
                continue;
            }
            for i in 1..g.nl {
                let (pl, dpl) = plateau(g.lambda(i) - c.lambda, 2.0 * e, 4.0 * e);
                let psi = pl * px * pt;
                let gl = dpl * px * pt;
                let gx = pl * dpx * pt;
                let ptt = pl * px * dpt;
                let uu = u.data[[n, j, i]];
                let du2 = grad.0[[n, j, i]].powi(2) + grad.1[[n, j, i]].powi(2);
                num += du2 * psi * psi;
                den += uu * uu * (gl * gl + gx * gx + psi.abs() * ptt.abs());
            }
        }
    }
    if den <= 0.0 {
        None
    } else {
        Some(num / den)
    }
}

/// Max Caccioppoli quotient over a cube family (zero denominators skipped).
pub fn caccioppoli_check(u: &InteriorField, cubes: &[WhitneyCube]) -> (f64, usize) {
    let grad = gradient_field(u);
    let mut best: f64 = 0.0;
    let mut skipped = 0;
    for c in cubes {
        match caccioppoli_ratio(u, &grad, c) {
            Some(r) => best = best.max(r),
            None => skipped += 1,
        }
    }
    (best, skipped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{make_coefficients, params};
    use crate::geometry::build_grid;

    fn small() -> Grid {
        build_grid(1.0 / 16.0, 1.0, 1.0, 0.5).unwrap()
    }

    #[test]
    fn constants_are_preserved() {
        let g = small();
        for (name, p) in [
            ("identity", params(&[])),
            ("skew", params(&[("delta", 0.5)])),
            ("checker", params(&[("r", 0.25), ("delta", 0.5)])),
            ("osc", params(&[("omega", 3.0), ("delta", 0.3)])),
        ] {
            let a = make_coefficients(name, &p).unwrap();
            let f = BoundaryField::on_grid(&g, |_, _| 1.0);
            let faces = FaceData { lateral: 1.0, top: 1.0, initial: 1.0 };
            let u = solve_forward_with_faces(&a, &f, &g, faces).unwrap();
            let dev = u.data.iter().fold(0.0f64, |m, v| m.max((v - 1.0).abs()));
            assert!(dev < 1e-9, "{name}: {dev}");
        }
    }

    #[test]
    fn adjoint_row_matches_forward_value() {
        let g = small();
        let a = make_coefficients("checker", &params(&[("r", 0.25), ("delta", 0.4)])).unwrap();
        let f = BoundaryField::on_grid(&g, |x, t| (3.0 * x).sin() + (t - 0.2).powi(2) + 0.1 * x * t);
        let u = solve_forward(&a, &f, &g).unwrap();
        let pole = Point3 { lambda: 0.25, x: 0.125, t: 0.375 };
        let row = solve_adjoint_row(&a, pole, &g).unwrap();
        let (ip, jp, np) = pole_indices(&g, pole).unwrap();
        let direct = u.data[[np, jp, ip]];
        let dual: f64 = (0..g.nx)
            .flat_map(|j| (0..g.nt).map(move |n| (j, n)))
            .map(|(j, n)| row.mass(j, n) * f.data[[j, n]])
            .sum();
        assert!((direct - dual).abs() < 1e-8, "{direct} vs {dual}");
        let total = row.bottom_total() + row.truncation.total();
        assert!((total - 1.0).abs() < 1e-9, "{total}");
    }

    #[test]
    fn identity_row_is_nonnegative() {
        let g = small();
        let a = make_coefficients("identity", &params(&[])).unwrap();
        let row = solve_adjoint_row(&a, Point3 { lambda: 0.25, x: 0.0, t: 0.25 }, &g).unwrap();
        let min = row.g.data.iter().fold(f64::INFINITY, |m, &v| m.min(v));
        assert!(min >= -1e-14, "{min}");
        assert!(row.max_residual <= STEP_TOL);
    }

    #[test]
    fn gradients_of_polynomials() {
        let g = small();
        let u = InteriorField::from_fn(&g, |l, x, _| 2.0 * l - x + l * l);
        let (dl, dx) = gradient_field(&u);
        for n in [0, 3] {
            for j in 1..g.nx - 1 {
                for i in 1..g.nl {
                    assert!((dl[[n, j, i]] - (2.0 + 2.0 * g.lambda(i))).abs() < 1e-10);
                    assert!((dx[[n, j, i]] + 1.0).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn pole_must_be_interior() {
        let g = small();
        let a = make_coefficients("identity", &params(&[])).unwrap();
        assert!(solve_adjoint_row(&a, Point3 { lambda: 0.125, x: 0.0, t: 0.25 }, &g).is_err());
        assert!(solve_adjoint_row(&a, Point3 { lambda: 0.25, x: 0.01, t: 0.25 }, &g).is_err());
    }
}
