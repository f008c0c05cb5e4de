//! J_{η,ε}, the weak-form identity and its three-term split, carl2 and the
//! full-gradient Carleson ratios, accumulated one time level at a time.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::coeffs::CoefficientField;
use crate::error::{LabError, Result};
use crate::field::{BoundaryField, InteriorField};
use crate::geometry::{build_grid, BoundaryMask, Grid, ParabolicCube};
use crate::pde_solver::{march_forward_many, FaceData};
use crate::setf_sawtooth::{build_cutoff_psi, prolong_mask, restrict_mask, CutoffPsi};

/// Box around Δ for the audit solves.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AuditSetup {
    pub h: f64,
    /// lmax in units of r.
    pub lmax_factor: f64,
    /// Lateral margin beyond 2Δ in units of r.
    pub x_margin: f64,
}

impl Default for AuditSetup {
    fn default() -> Self {
        AuditSetup { h: 1.0 / 64.0, lmax_factor: 5.0, x_margin: 2.0 }
    }
}

/// Grid holding (0, lmax) x 2Δ with the margin, from t = 0 to the top of 2Δ.
pub fn audit_grid(cube: &ParabolicCube, setup: &AuditSetup) -> Result<Grid> {
    let (h, r) = (setup.h, cube.r);
    let k = h * h;
    if cube.t0 - 4.0 * r * r < 0.0 {
        return Err(LabError::BadParameter(format!("2Δ starts before t = 0 (t0 = {}, r = {r})", cube.t0)));
    }
    let snap = |v: f64, s: f64| (v / s - 1e-9).ceil() * s;
    build_grid(
        h,
        snap(setup.lmax_factor * r, h),
        snap(cube.x0.abs() + (2.0 + setup.x_margin) * r, h),
        snap(cube.t0 + 4.0 * r * r, k),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum BatterySet {
    HalfBoundary,
    CubeIndicator,
    RandomCells { seed: u64 },
}

impl BatterySet {
    pub fn label(&self) -> String {
        match self {
            BatterySet::HalfBoundary => "half".into(),
            BatterySet::CubeIndicator => "cube".into(),
            BatterySet::RandomCells { seed } => format!("cells{seed}"),
        }
    }
}

pub fn default_battery(seed: u64) -> Vec<BatterySet> {
    vec![BatterySet::HalfBoundary, BatterySet::CubeIndicator, BatterySet::RandomCells { seed }]
}

/// 0/1 boundary data of a battery set. Random cells: 2Δ cut into 8 x 32
/// blocks of size r/2 x r²/4, each kept with probability 1/2.
pub fn battery_data(set: BatterySet, grid: &Grid, cube: &ParabolicCube) -> BoundaryField {
    match set {
        BatterySet::HalfBoundary => BoundaryField::on_grid(grid, |x, _| if x < cube.x0 { 1.0 } else { 0.0 }),
        BatterySet::CubeIndicator => {
            BoundaryField::on_grid(grid, |x, t| if cube.contains_half_open(x, t) { 1.0 } else { 0.0 })
        }
        BatterySet::RandomCells { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let keep: Vec<bool> = (0..8 * 32).map(|_| rng.gen_bool(0.5)).collect();
            let big = cube.dilate(2.0);
            let (xa, _) = big.x_range();
            let (ta, _) = big.t_range();
            let (bx, bt) = (cube.r / 2.0, cube.r * cube.r / 4.0);
            BoundaryField::on_grid(grid, |x, t| {
                if !big.contains_half_open(x, t) {
                    return 0.0;
                }
                let p = (((x - xa) / bx + 1e-9).floor() as usize).min(7);
                let q = (((t - ta) / bt + 1e-9).floor() as usize).min(31);
                if keep[p * 32 + q] {
                    1.0
                } else {
                    0.0
                }
            })
        }
    }
}

/// Raw sums for one Ψ.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct AuditSums {
    pub j: f64,
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
    /// ∭ |∇u|² Ψ² λ.
    pub grad_mass: f64,
    /// ∫_{2ε}^{r} ∬_{F∩Δ} |∂λ u|² λ.
    pub carl2: f64,
}

impl AuditSums {
    /// ∭ A∇u·∇(uΨ²λ) + ∂t u uΨ²λ with the product rule applied nodewise.
    pub fn signed_residual(&self) -> f64 {
        self.j - self.i1 - self.i2 - self.i3
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub eta: f64,
    pub eps: f64,
    pub r: f64,
    pub sums: AuditSums,
    pub kappa: f64,
    pub big_c: f64,
    /// |residual| / |Δ|.
    pub identity_residual: f64,
    pub j_ratio: f64,
    pub carl2_ratio: f64,
    /// |J - I1 - I2 - I3|.
    pub closure: f64,
    pub sandwich_ok: bool,
    pub carl2_ok: bool,
    /// ε < 2h.
    pub under_resolved: bool,
}

impl AuditReport {
    fn new(psi: &CutoffPsi, coeffs: &CoefficientField, h: f64, s: AuditSums) -> Self {
        let vol = psi.cube.measure();
        let res = s.signed_residual();
        let tol = 1e-12 * s.j.abs().max(1e-300);
        AuditReport {
            eta: psi.eta,
            eps: psi.eps,
            r: psi.r,
            sums: s,
            kappa: coeffs.kappa,
            big_c: coeffs.big_c,
            identity_residual: res.abs() / vol,
            j_ratio: s.j / vol,
            carl2_ratio: s.carl2 / vol,
            closure: res.abs(),
            sandwich_ok: coeffs.kappa * s.grad_mass <= s.j + tol && s.j <= coeffs.big_c * s.grad_mass + tol,
            carl2_ok: s.carl2 <= s.j / coeffs.kappa + tol,
            under_resolved: psi.eps < 2.0 * h - 1e-12,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradientRatio {
    pub cube: ParabolicCube,
    /// ∫_0^{ℓ} ∬_Δ |∇u|² λ / |Δ|.
    pub ratio: f64,
}

struct CubeSum {
    cube: ParabolicCube,
    sum: f64,
    nodes: usize,
}

/// Streaming accumulator over the time levels of one forward solve.
/// Differences follow the scheme: compact faces for A_λλ and A_xx (face
/// averaged), centred for the mixed block, backward in t. The product rule
/// is applied nodewise, so J - I1 - I2 - I3 is the product-rule defect.
pub struct AuditAccumulator<'a> {
    grid: Grid,
    coeffs: &'a CoefficientField,
    psis: &'a [CutoffPsi],
    /// F ∩ Δ on the grid lattice, `[[j, n]]`.
    f_inside: &'a BoundaryMask,
    sums: Vec<AuditSums>,
    cubes: Vec<CubeSum>,
    prev: Option<Array2<f64>>,
    lambdas: Vec<f64>,
    xs: Vec<f64>,
    coeff_rows: Option<Vec<[[f64; 2]; 2]>>,
    psi_buf: Array2<f64>,
    psi2: Array2<f64>,
}

impl<'a> AuditAccumulator<'a> {
    pub fn new(
        grid: &Grid,
        coeffs: &'a CoefficientField,
        psis: &'a [CutoffPsi],
        f_inside: &'a BoundaryMask,
        cubes: &[ParabolicCube],
    ) -> Self {
        AuditAccumulator {
            grid: grid.clone(),
            coeffs,
            psis,
            f_inside,
            sums: vec![AuditSums::default(); psis.len()],
            cubes: cubes.iter().map(|&c| CubeSum { cube: c, sum: 0.0, nodes: 0 }).collect(),
            prev: None,
            lambdas: (0..=grid.nl).map(|i| grid.lambda(i)).collect(),
            xs: (0..grid.nx).map(|j| grid.x(j)).collect(),
            coeff_rows: None,
            psi_buf: Array2::zeros((grid.nx, grid.nl + 1)),
            psi2: Array2::zeros((grid.nx, grid.nl + 1)),
        }
    }

    fn rows(&mut self, t: f64) -> Vec<[[f64; 2]; 2]> {
        if self.coeffs.time_independent() {
            if self.coeff_rows.is_none() {
                self.coeff_rows = Some(self.xs.iter().map(|&x| self.coeffs.eval(x, 0.0)).collect());
            }
            return self.coeff_rows.clone().unwrap();
        }
        self.xs.iter().map(|&x| self.coeffs.eval(x, t)).collect()
    }

    /// Time level `step` with values `[[j, i]]`.
    pub fn push(&mut self, step: usize, u: &Array2<f64>) {
        let g = self.grid.clone();
        let (h, k) = (g.h, g.k);
        let t = g.t(step);
        let w = h * h * k;
        let Some(prev) = self.prev.take() else {
            self.prev = Some(u.clone());
            return;
        };
        for c in self.cubes.iter_mut() {
            for j in 1..g.nx - 1 {
                if !c.cube.contains_half_open(g.x(j), t) {
                    continue;
                }
                c.nodes += 1;
                for i in 1..g.nl {
                    let l = g.lambda(i);
                    if l > c.cube.r * (1.0 + 1e-12) {
                        break;
                    }
                    let ul = (u[[j, i + 1]] - u[[j, i]]) / h;
                    let ux = (u[[j + 1, i]] - u[[j, i]]) / h;
                    let wl = if (l - c.cube.r).abs() < 1e-9 * h { 0.5 } else { 1.0 };
                    c.sum += (ul * ul + ux * ux) * l * wl * h;
                }
            }
        }
        let active: Vec<usize> = (0..self.psis.len())
            .filter(|&p| {
                let (ta, tb) = self.psis[p].cube.dilate(2.0).t_range();
                t >= ta - k && t <= tb + k
            })
            .collect();
        if !active.is_empty() {
            let a = self.rows(t);
            let fcol = ((t - self.f_inside.t_origin) / self.f_inside.k).round();
            for p in active {
                let psi = &self.psis[p];
                self.psis[p].layer(&self.lambdas, &self.xs, t, &mut self.psi_buf);
                self.psi2.zip_mut_with(&self.psi_buf, |o, &v| *o = v * v);
                let s = &mut self.sums[p];
                let (lo2, hi) = (2.0 * psi.eps, psi.r);
                for j in 1..g.nx - 1 {
                    let [[all, alx], [axl, axx]] = a[j];
                    let in_f = {
                        let fj = ((g.x(j) - self.f_inside.x_origin) / self.f_inside.h).round();
                        fj >= 0.0
                            && fcol >= 0.0
                            && (fj as usize) < self.f_inside.mask.dim().0
                            && (fcol as usize) < self.f_inside.mask.dim().1
                            && self.f_inside.mask[[fj as usize, fcol as usize]]
                    };
                    let live = |jj: usize| self.psi_buf.row(jj).iter().any(|&v| v != 0.0);
                    if !(in_f || live(j - 1) || live(j) || live(j + 1)) {
                        continue;
                    }
                    let axf = 0.5 * (axx + a[j + 1][1][1]);
                    for i in 1..g.nl {
                        let l = g.lambda(i);
                        let u0 = u[[j, i]];
                        let dl = (u[[j, i + 1]] - u0) / h;
                        let dx = (u[[j + 1, i]] - u0) / h;
                        if in_f && l >= lo2 - 1e-12 && l <= hi + 1e-12 {
                            s.carl2 += dl * dl * l * w;
                        }
                        let q = &self.psi2;
                        let (q0, qlp, qlm, qxp, qxm) = (q[[j, i]], q[[j, i + 1]], q[[j, i - 1]], q[[j + 1, i]], q[[j - 1, i]]);
                        if q0 == 0.0 && qlp == 0.0 && qlm == 0.0 && qxp == 0.0 && qxm == 0.0 {
                            continue;
                        }
                        let cl = (u[[j, i + 1]] - u[[j, i - 1]]) / (2.0 * h);
                        let cx = (u[[j + 1, i]] - u[[j - 1, i]]) / (2.0 * h);
                        let (ql, qx) = ((qlp - q0) / h, (qxp - q0) / h);
                        let (qcl, qcx) = ((qlp - qlm) / (2.0 * h), (qxp - qxm) / (2.0 * h));
                        let ut = (u0 - prev[[j, i]]) / k;
                        s.j += (all * dl * dl + axf * dx * dx + (alx + axl) * cx * cl) * q0 * l * w;
                        s.grad_mass += (dl * dl + dx * dx) * q0 * l * w;
                        s.i1 -= (all * dl * ql + axf * dx * qx + alx * cx * qcl + axl * cl * qcx) * u0 * l * w;
                        s.i2 -= (all * dl * qlp + alx * cx * 0.5 * (qlp + qlm)) * u0 * w;
                        s.i3 -= ut * u0 * q0 * l * w;
                    }
                }
            }
        }
        self.prev = Some(u.clone());
    }

    pub fn finish(self, h: f64) -> (Vec<AuditReport>, Vec<GradientRatio>) {
        let reports = self.psis.iter().zip(&self.sums).map(|(p, s)| AuditReport::new(p, self.coeffs, h, *s)).collect();
        let cell = self.grid.h * self.grid.k;
        let ratios = self
            .cubes
            .iter()
            .map(|c| GradientRatio {
                cube: c.cube,
                ratio: if c.nodes == 0 { 0.0 } else { c.sum * cell / (c.nodes as f64 * cell) },
            })
            .collect();
        (reports, ratios)
    }
}

fn accumulate_stored(u: &InteriorField, coeffs: &CoefficientField, psi: &CutoffPsi, f_inside: &BoundaryMask) -> AuditReport {
    let psis = std::slice::from_ref(psi);
    let mut acc = AuditAccumulator::new(&u.grid, coeffs, psis, f_inside, &[]);
    for n in 0..u.grid.nt {
        acc.push(n, &u.data.index_axis(ndarray::Axis(0), n).to_owned());
    }
    acc.finish(u.grid.h).0.remove(0)
}

fn empty_mask(grid: &Grid) -> BoundaryMask {
    BoundaryMask { x_origin: -grid.xext, t_origin: 0.0, h: grid.h, k: grid.k, mask: Array2::from_elem((grid.nx, grid.nt), false) }
}

/// ∭ A∇u·∇u Ψ² λ.
pub fn compute_j(u: &InteriorField, coeffs: &CoefficientField, psi: &CutoffPsi) -> f64 {
    accumulate_stored(u, coeffs, psi, &empty_mask(&u.grid)).sums.j
}

/// |∭ A∇u·∇(uΨ²λ) + ∂t u·uΨ²λ| / |Δ|.
pub fn identity_residual(u: &InteriorField, coeffs: &CoefficientField, psi: &CutoffPsi) -> f64 {
    accumulate_stored(u, coeffs, psi, &empty_mask(&u.grid)).identity_residual
}

pub fn decompose_j(u: &InteriorField, coeffs: &CoefficientField, psi: &CutoffPsi) -> (f64, f64, f64) {
    let s = accumulate_stored(u, coeffs, psi, &empty_mask(&u.grid)).sums;
    (s.i1, s.i2, s.i3)
}

/// Full audit of a stored solution, with carl2 over `f` ∩ Δ.
pub fn audit_stored(u: &InteriorField, coeffs: &CoefficientField, psi: &CutoffPsi, f: &BoundaryMask) -> AuditReport {
    let fm = restrict_mask(&transfer_f(f, &u.grid), &psi.cube);
    accumulate_stored(u, coeffs, psi, &fm)
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanRow {
    pub coeffs: String,
    pub set: String,
    pub r: f64,
    pub eta: f64,
    pub eps: f64,
    pub j_ratio: f64,
    pub carl2_ratio: f64,
    pub grad_ratio: f64,
    pub residual: f64,
    pub closure: f64,
    pub sandwich_ok: bool,
    pub carl2_ok: bool,
    pub skipped: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanResult {
    pub rows: Vec<ScanRow>,
    /// Full-gradient ratios per battery set over the requested cubes.
    pub gradient: Vec<(String, Vec<GradientRatio>)>,
    pub max_step_residual: f64,
}

/// The good set moved to the audit grid lattice by nearest node.
pub fn transfer_f(f: &BoundaryMask, grid: &Grid) -> BoundaryMask {
    prolong_mask(f, -grid.xext, 0.0, grid.h, grid.k, grid.nx, grid.nt)
}

/// One streamed forward solve per data set, every Ψ and every gradient
/// cube accumulated on the fly. `f` is already on the grid lattice.
pub fn audit_stream(
    coeffs: &CoefficientField,
    grid: &Grid,
    cube: &ParabolicCube,
    data: &[BoundaryField],
    psis: &[CutoffPsi],
    f: &BoundaryMask,
    grad_cubes: &[ParabolicCube],
) -> Result<(Vec<(Vec<AuditReport>, Vec<GradientRatio>)>, f64)> {
    let inside = restrict_mask(f, cube);
    let refs: Vec<&BoundaryField> = data.iter().collect();
    let mut accs: Vec<AuditAccumulator> =
        data.iter().map(|_| AuditAccumulator::new(grid, coeffs, psis, &inside, grad_cubes)).collect();
    let res = march_forward_many(coeffs, &refs, grid, FaceData::default(), |s, step, layer| {
        accs[s].push(step, layer);
        Ok(())
    })?;
    Ok((accs.into_iter().map(|a| a.finish(grid.h)).collect(), res))
}

/// Key-Lemma scan. `f` is the good set on its own lattice.
#[allow(clippy::too_many_arguments)]
pub fn key_lemma_scan(
    coeffs: &CoefficientField,
    cube: &ParabolicCube,
    etas: &[f64],
    epss: &[f64],
    battery: &[BatterySet],
    f: &BoundaryMask,
    setup: &AuditSetup,
    grad_cubes: &[ParabolicCube],
) -> Result<ScanResult> {
    let grid = audit_grid(cube, setup)?;
    let fm = transfer_f(f, &grid);
    let mut psis = Vec::new();
    let mut skipped = Vec::new();
    for &eta in etas {
        for &eps in epss {
            if eps < 2.0 * grid.h - 1e-12 {
                skipped.push((eta, eps));
                continue;
            }
            psis.push(build_cutoff_psi(&fm, cube, eta, eps)?);
        }
    }
    let data: Vec<BoundaryField> = battery.iter().map(|&s| battery_data(s, &grid, cube)).collect();
    let (out, res) = audit_stream(coeffs, &grid, cube, &data, &psis, &fm, grad_cubes)?;
    let mut rows = Vec::new();
    let mut gradient = Vec::new();
    for (set, (reports, ratios)) in battery.iter().zip(out) {
        let top = ratios.first().map(|g| g.ratio).unwrap_or(0.0);
        let row = |eta, eps| ScanRow {
            coeffs: coeffs.name.clone(),
            set: set.label(),
            r: cube.r,
            eta,
            eps,
            j_ratio: f64::NAN,
            carl2_ratio: f64::NAN,
            grad_ratio: top,
            residual: f64::NAN,
            closure: f64::NAN,
            sandwich_ok: true,
            carl2_ok: true,
            skipped: true,
        };
        for rep in reports {
            rows.push(ScanRow {
                j_ratio: rep.j_ratio,
                carl2_ratio: rep.carl2_ratio,
                residual: rep.identity_residual,
                closure: rep.closure,
                sandwich_ok: rep.sandwich_ok,
                carl2_ok: rep.carl2_ok,
                skipped: false,
                ..row(rep.eta, rep.eps)
            });
        }
        for &(eta, eps) in &skipped {
            rows.push(row(eta, eps));
        }
        gradient.push((set.label(), ratios));
    }
    Ok(ScanResult { rows, gradient, max_step_residual: res })
}

/// J/|Δ| at the smaller ε over J/|Δ| at the larger, per (set, η); None
/// when either row is missing or skipped.
pub fn epsilon_trend(rows: &[ScanRow], set: &str, eta: f64, eps_small: f64, eps_large: f64) -> Option<f64> {
    let find = |e: f64| {
        rows.iter()
            .find(|r| r.set == set && (r.eta - eta).abs() < 1e-12 && (r.eps - e).abs() < 1e-12 && !r.skipped)
            .map(|r| r.j_ratio)
    };
    let (a, b) = (find(eps_small)?, find(eps_large)?);
    if b == 0.0 {
        return if a == 0.0 { Some(1.0) } else { None };
    }
    Some(a / b)
}
