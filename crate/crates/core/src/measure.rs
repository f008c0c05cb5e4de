//! Parabolic measure at the corkscrew pole, its Poisson kernel and the
//! doubling, A∞ and reverse Hölder probes.

use serde::Serialize;

use crate::coeffs::CoefficientField;
use crate::error::{LabError, Result};
use crate::field::BoundaryField;
use crate::geometry::{build_grid, Grid, ParabolicCube, Point3};
use crate::pde_solver::{solve_adjoint_row, TruncationMasses};

pub const MASS_FLOOR: f64 = 1e-8;

/// Box sizes and resolution for a measure computation around Δ₀.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MeasureSetup {
    pub h: f64,
    /// lmax in units of the pole height 16 r0.
    pub lmax_factor: f64,
    /// Lateral half-width beyond |x0| in units of r0.
    pub xext_factor: f64,
    /// Minimum cells per side of Δ₀ (2 r0 / h).
    pub min_cells: usize,
}

impl Default for MeasureSetup {
    fn default() -> Self {
        MeasureSetup {
            h: 1.0 / 64.0,
            lmax_factor: 2.0,
            xext_factor: 24.0,
            min_cells: 16,
        }
    }
}

/// A⁺_{4r0}(x0, t0) = (16 r0, x0, t0 + 256 r0^2).
pub fn measure_pole(cube: &ParabolicCube) -> Point3 {
    Point3 {
        lambda: 16.0 * cube.r,
        x: cube.x0,
        t: cube.t0 + 256.0 * cube.r * cube.r,
    }
}

/// Grid holding the pole of `cube`, with its lateral extent rounded up to
/// a whole number of cells.
pub fn measure_grid(cube: &ParabolicCube, setup: &MeasureSetup) -> Result<Grid> {
    let h = setup.h;
    if 2.0 * cube.r / h + 1e-9 < setup.min_cells as f64 {
        return Err(LabError::UnderResolved(format!(
            "cube radius {} gives {:.1} cells per side, need {}",
            cube.r,
            2.0 * cube.r / h,
            setup.min_cells
        )));
    }
    let pole = measure_pole(cube);
    let snap = |v: f64| (v / h - 1e-9).ceil() * h;
    let lmax = snap(setup.lmax_factor * pole.lambda);
    let xext = snap(cube.x0.abs() + setup.xext_factor * cube.r);
    build_grid(h, lmax, xext, pole.t)
}

/// Boundary masses ω(pole, cell) on the (x, t) node cells
/// [x_j - h/2, x_j + h/2] x (t_n - k, t_n].
#[derive(Debug, Clone, Serialize)]
pub struct MeasureEstimate {
    pub pole: Point3,
    pub cube: ParabolicCube,
    pub masses: BoundaryField,
    pub truncation_loss: f64,
    pub truncation: TruncationMasses,
    pub clip_mass: f64,
    pub max_residual: f64,
}

impl MeasureEstimate {
    pub fn total(&self) -> f64 {
        self.masses.data.sum()
    }

    /// Mass of a rectangle, with node cells weighted by fractional overlap.
    pub fn mass_of_rect(&self, xr: (f64, f64), tr: (f64, f64)) -> f64 {
        let m = &self.masses;
        let (h, k) = (m.h, m.k);
        let j0 = (((xr.0 - m.x_origin) / h) - 0.5).floor().max(0.0) as usize;
        let j1 = ((((xr.1 - m.x_origin) / h) + 0.5).ceil() as usize).min(m.nx() - 1);
        let n0 = ((tr.0 - m.t_origin) / k).floor().max(0.0) as usize;
        let n1 = ((((tr.1 - m.t_origin) / k) + 1.0).ceil() as usize).min(m.nt() - 1);
        let mut acc = 0.0;
        for j in j0..=j1 {
            let x = m.x(j);
            let fx = overlap(x - 0.5 * h, x + 0.5 * h, xr.0, xr.1) / h;
            if fx <= 0.0 {
                continue;
            }
            for n in n0..=n1 {
                let t = m.t(n);
                let ft = overlap(t - k, t, tr.0, tr.1) / k;
                if ft > 0.0 {
                    acc += fx * ft * m.data[[j, n]];
                }
            }
        }
        acc
    }

    pub fn mass_of_cube(&self, cube: &ParabolicCube) -> f64 {
        self.mass_of_rect(cube.x_range(), cube.t_range())
    }
}

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// ω(A⁺_{4r0}, ·) on the supplied grid.
pub fn parabolic_measure_on(coeffs: &CoefficientField, cube: &ParabolicCube, grid: &Grid) -> Result<MeasureEstimate> {
    let pole = measure_pole(cube);
    let row = solve_adjoint_row(coeffs, pole, grid)?;
    let cell = row.g.cell();
    let mut clip = 0.0;
    let data = row.g.data.mapv(|g| {
        let m = g * cell;
        if m < 0.0 {
            clip -= m;
            0.0
        } else {
            m
        }
    });
    let masses = row.g.like(data);
    Ok(MeasureEstimate {
        pole,
        cube: *cube,
        masses,
        truncation_loss: row.truncation.total(),
        truncation: row.truncation,
        clip_mass: clip,
        max_residual: row.max_residual,
    })
}

pub fn parabolic_measure(coeffs: &CoefficientField, cube: &ParabolicCube, setup: &MeasureSetup) -> Result<MeasureEstimate> {
    let grid = measure_grid(cube, setup)?;
    parabolic_measure_on(coeffs, cube, &grid)
}

/// Density per boundary cell.
#[derive(Debug, Clone, Serialize)]
pub struct PoissonKernel {
    pub pole: Point3,
    pub density: BoundaryField,
}

impl PoissonKernel {
    pub fn masses(&self) -> BoundaryField {
        let c = self.density.cell();
        self.density.like(self.density.data.mapv(|d| d * c))
    }
}

pub fn poisson_kernel(m: &MeasureEstimate) -> PoissonKernel {
    let c = m.masses.cell();
    PoissonKernel {
        pole: m.pole,
        density: m.masses.like(m.masses.data.mapv(|v| v / c)),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DoublingRow {
    pub r: f64,
    pub omega: f64,
    pub omega_double: f64,
    pub c: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DoublingTable {
    pub rows: Vec<DoublingRow>,
    pub max_c: f64,
    pub skipped: usize,
}

/// c(Δ) = ω(2Δ)/ω(Δ) for Δ centred at Δ₀'s centre with the given radii.
pub fn doubling_check(m: &MeasureEstimate, scales: &[f64]) -> Result<DoublingTable> {
    let d0 = m.cube;
    let mut rows = Vec::new();
    let mut max_c: f64 = 0.0;
    let mut skipped = 0;
    for &r in scales {
        if r <= 0.0 || r > d0.r * (1.0 + 1e-12) {
            return Err(LabError::BadParameter(format!("scale {r} must lie in (0, r0]")));
        }
        let q = ParabolicCube::new(d0.x0, d0.t0, r);
        let w = m.mass_of_cube(&q);
        let w2 = m.mass_of_cube(&q.dilate(2.0));
        let c = if w < MASS_FLOOR {
            skipped += 1;
            None
        } else {
            let c = w2 / w;
            max_c = max_c.max(c);
            Some(c)
        };
        rows.push(DoublingRow { r, omega: w, omega_double: w2, c });
    }
    Ok(DoublingTable { rows, max_c, skipped })
}

/// Node-membership view of Δ on the mass lattice.
fn cube_nodes(f: &BoundaryField, cube: &ParabolicCube) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for j in 0..f.nx() {
        for n in 0..f.nt() {
            if cube.contains_half_open(f.x(j), f.t(n)) {
                out.push((j, n));
            }
        }
    }
    out
}

/// Parabolic dyadic children: x split in 2, t split in 4.
pub fn dyadic_children(c: &ParabolicCube) -> Vec<ParabolicCube> {
    let r = 0.5 * c.r;
    let mut out = Vec::with_capacity(8);
    for a in [-1.0, 1.0] {
        for b in [-3.0, -1.0, 1.0, 3.0] {
            out.push(ParabolicCube::new(c.x0 + a * r, c.t0 + b * r * r, r));
        }
    }
    out
}

pub fn dyadic_family(root: &ParabolicCube, depth: usize) -> Vec<(usize, ParabolicCube)> {
    let mut out = vec![(0, *root)];
    let mut level = vec![*root];
    for d in 1..=depth {
        level = level.iter().flat_map(dyadic_children).collect();
        out.extend(level.iter().map(|c| (d, *c)));
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct AinftyRow {
    pub delta: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AinftyScan {
    pub cube: ParabolicCube,
    pub rows: Vec<AinftyRow>,
    pub probes: usize,
    pub note: &'static str,
}

impl AinftyScan {
    pub fn eps_at(&self, delta: f64) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.delta <= delta * (1.0 + 1e-12))
            .map(|r| r.eps)
            .fold(0.0, f64::max)
    }
}

pub fn default_deltas() -> Vec<f64> {
    (0..=12).map(|i| 10f64.powf(-4.0 + i as f64 / 3.0)).filter(|d| *d <= 1.0).collect()
}

/// Probes E ⊆ Δ for Δ in the dyadic family of Δ₀ (depth `depth`): the
/// dyadic descendants of Δ (up to two levels) and 32 kernel sublevel sets.
pub fn ainfty_scan(m: &MeasureEstimate, depth: usize, deltas: &[f64]) -> AinftyScan {
    let f = &m.masses;
    let mut pairs: Vec<(f64, f64)> = Vec::new();
    for (_, q) in dyadic_family(&m.cube, depth) {
        let nodes = cube_nodes(f, &q);
        if nodes.is_empty() {
            continue;
        }
        let wq: f64 = nodes.iter().map(|&(j, n)| f.data[[j, n]]).sum();
        if wq < MASS_FLOOR {
            continue;
        }
        let nq = nodes.len() as f64;
        for (d, e) in dyadic_family(&q, 2) {
            if d == 0 {
                continue;
            }
            let en = cube_nodes(f, &e);
            if en.is_empty() {
                continue;
            }
            let we: f64 = en.iter().map(|&(j, n)| f.data[[j, n]]).sum();
            pairs.push((we / wq, en.len() as f64 / nq));
        }
        let mut vals: Vec<f64> = nodes.iter().map(|&(j, n)| f.data[[j, n]]).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut acc = 0.0;
        let mut cum = Vec::with_capacity(vals.len());
        for v in &vals {
            acc += v;
            cum.push(acc);
        }
        for s in 1..=32usize {
            let cnt = (s * vals.len()) / 33;
            if cnt == 0 {
                continue;
            }
            pairs.push((cum[cnt - 1] / wq, cnt as f64 / nq));
        }
    }
    let rows = deltas
        .iter()
        .map(|&delta| AinftyRow {
            delta,
            eps: pairs.iter().filter(|p| p.0 < delta).map(|p| p.1).fold(0.0, f64::max),
        })
        .collect();
    AinftyScan {
        cube: m.cube,
        rows,
        probes: pairs.len(),
        note: "certified only on the probe family (dyadic cubes and kernel sublevel sets)",
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BpReport {
    pub p: f64,
    pub ratio: f64,
    pub flagged: usize,
}

/// sup over the dyadic family of (avg K^p)^{1/p} / avg K.
pub fn bp_check(kernel: &PoissonKernel, root: &ParabolicCube, depth: usize, p: f64) -> Result<BpReport> {
    if !(p > 1.0) {
        return Err(LabError::BadParameter(format!("p = {p} must exceed 1")));
    }
    let f = &kernel.density;
    let mut ratio: f64 = 0.0;
    let mut flagged = 0;
    let mut seen = 0;
    for (_, q) in dyadic_family(root, depth) {
        let nodes = cube_nodes(f, &q);
        if nodes.is_empty() {
            continue;
        }
        let nn = nodes.len() as f64;
        let avg = nodes.iter().map(|&(j, n)| f.data[[j, n]]).sum::<f64>() / nn;
        if avg <= 0.0 {
            flagged += 1;
            continue;
        }
        let avgp = nodes.iter().map(|&(j, n)| (f.data[[j, n]] / avg).powf(p)).sum::<f64>() / nn;
        ratio = ratio.max(avgp.powf(1.0 / p));
        seen += 1;
    }
    if seen == 0 {
        return Err(LabError::EmptySet);
    }
    Ok(BpReport { p, ratio, flagged })
}

pub const BP_EXPONENTS: [f64; 4] = [1.1, 1.25, 1.5, 2.0];

/// Scan over the standard exponents; returns the reports and the largest p
/// with ratio ≤ 10.
pub fn bp_scan(kernel: &PoissonKernel, root: &ParabolicCube, depth: usize) -> Result<(Vec<BpReport>, Option<f64>)> {
    let mut out = Vec::new();
    let mut best = None;
    for p in BP_EXPONENTS {
        let r = bp_check(kernel, root, depth, p)?;
        if r.ratio <= 10.0 {
            best = Some(p);
        }
        out.push(r);
    }
    Ok((out, best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn flat(nx: usize, nt: usize, v: f64) -> MeasureEstimate {
        let mut f = BoundaryField::zeros(-1.0, 0.0, 1.0 / 16.0, 1.0 / 256.0, nx, nt);
        f.data = Array2::from_elem((nx, nt), v);
        MeasureEstimate {
            pole: Point3 { lambda: 1.0, x: 0.0, t: 1.0 },
            cube: ParabolicCube::new(0.0, 0.5, 0.25),
            masses: f,
            truncation_loss: 0.0,
            truncation: TruncationMasses::default(),
            clip_mass: 0.0,
            max_residual: 0.0,
        }
    }

    #[test]
    fn uniform_masses_give_constant_density() {
        let m = flat(33, 257, 2e-3);
        let k = poisson_kernel(&m);
        let d = k.density.data[[3, 4]];
        assert!(k.density.data.iter().all(|v| (v - d).abs() < 1e-12 * d));
        assert!((k.masses().data.sum() - m.total()).abs() < 1e-12);
    }

    #[test]
    fn rect_mass_is_area_weighted() {
        let m = flat(33, 257, 1.0);
        let cell = m.masses.cell();
        let q = ParabolicCube::new(0.0, 0.5, 0.25);
        let w = m.mass_of_cube(&q);
        assert!((w - q.measure() / cell).abs() < 1e-9);
        let d = doubling_check(&m, &[0.25, 0.125]).unwrap();
        assert!(d.rows.iter().all(|r| (r.c.unwrap() - 8.0).abs() < 1e-9));
    }

    #[test]
    fn constant_kernel_is_reverse_holder_one() {
        let m = flat(33, 257, 1.0);
        let k = poisson_kernel(&m);
        for p in BP_EXPONENTS {
            let r = bp_check(&k, &m.cube, 2, p).unwrap();
            assert!((r.ratio - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn whole_cube_is_never_a_probe_below_one() {
        let m = flat(33, 257, 1.0);
        let s = ainfty_scan(&m, 0, &[1e-3, 0.1, 0.5, 1.0]);
        assert_eq!(s.eps_at(1e-3), 0.0);
        assert!(s.rows.windows(2).all(|w| w[0].eps <= w[1].eps));
    }
}
