//! The good set F, κ₀ calibration, the sawtooth cutoff Ψ, the E-sets and
//! the θ checks on the sawtooth.

use ndarray::{Array2, Array3};
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::geometry::{BoundaryMask, DistanceIndex, ParabolicCube};
use crate::lab::{BoundaryLab, CriterionFields, ThetaRecord};

pub const DEFAULT_TARGET: f64 = 1e-3;
pub const KAPPA_GRID_LEN: usize = 64;
pub const KAPPA_GRID_RANGE: (f64, f64) = (1e-2, 1e4);
pub const MOLLIFIER_RADIUS: f64 = 1.0 / 2048.0;

#[derive(Debug, Clone, Serialize)]
pub struct SetFReport {
    pub cube: ParabolicCube,
    pub kappa0: f64,
    #[serde(skip)]
    pub mask: BoundaryMask,
    pub cells: usize,
    pub density: f64,
    /// Nodes failing (i)..(v), counted separately.
    pub exclusions: [usize; 5],
}

impl SetFReport {
    /// Node indices (j, n) of the F nodes.
    pub fn indices(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for ((j, n), &b) in self.mask.mask.indexed_iter() {
            if b {
                out.push((j, n));
            }
        }
        out
    }
}

/// F on the nodes of 16Δ from the five criterion fields.
pub fn build_f(cube: &ParabolicCube, kappa0: f64, crit: &CriterionFields) -> SetFReport {
    let fields = crit.fields();
    let thresholds = [kappa0 * kappa0, kappa0, kappa0, kappa0, kappa0];
    let dim = fields[0].data.dim();
    let mut mask = Array2::from_elem(dim, true);
    let mut exclusions = [0usize; 5];
    for (q, f) in fields.iter().enumerate() {
        for ((j, n), &v) in f.data.indexed_iter() {
            if !(v <= thresholds[q]) {
                exclusions[q] += 1;
                mask[[j, n]] = false;
            }
        }
    }
    let cells = mask.len();
    let bad = mask.iter().filter(|&&b| !b).count();
    let f0 = fields[0];
    SetFReport {
        cube: *cube,
        kappa0,
        mask: BoundaryMask { x_origin: f0.x_origin, t_origin: f0.t_origin, h: f0.h, k: f0.k, mask },
        cells,
        density: if cells == 0 { 0.0 } else { bad as f64 / cells as f64 },
        exclusions,
    }
}

pub fn build_f_from_lab(lab: &BoundaryLab, kappa0: f64) -> Result<SetFReport> {
    let crit = lab.criteria.as_ref().ok_or_else(|| LabError::MissingInput("criterion fields".into()))?;
    Ok(build_f(&lab.config.cube, kappa0, crit))
}

/// 64 log-spaced values in [1e-2, 1e4].
pub fn kappa_grid() -> Vec<f64> {
    let (a, b) = KAPPA_GRID_RANGE;
    let n = KAPPA_GRID_LEN;
    (0..n).map(|i| a * (b / a).powf(i as f64 / (n - 1) as f64)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Calibration {
    pub kappa0: f64,
    pub density: f64,
    pub target: f64,
    pub grid_index: usize,
    pub report: SetFReport,
}

/// Smallest grid κ₀ with density ≤ target, by bisection on the monotone grid.
pub fn calibrate_kappa0(cube: &ParabolicCube, crit: &CriterionFields, target: f64) -> Result<Calibration> {
    if !(target > 0.0 && target < 1.0) {
        return Err(LabError::BadParameter(format!("target density {target} must lie in (0, 1)")));
    }
    let grid = kappa_grid();
    let top = build_f(cube, grid[grid.len() - 1], crit);
    if top.density > target {
        return Err(LabError::TargetUnreachable { target, floor: top.density });
    }
    let (mut lo, mut hi) = (0usize, grid.len() - 1);
    let first = build_f(cube, grid[0], crit);
    if first.density <= target {
        hi = 0;
    } else {
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if build_f(cube, grid[mid], crit).density <= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    let report = build_f(cube, grid[hi], crit);
    Ok(Calibration { kappa0: grid[hi], density: report.density, target, grid_index: hi, report })
}

/// κ₀ values within a factor 2 of each other.
pub fn kappa_stable(a: f64, b: f64) -> bool {
    a > 0.0 && b > 0.0 && (a / b).max(b / a) <= 2.0
}

/// Nearest-node transfer of a mask onto another lattice; nodes outside the
/// source lattice are left out.
pub fn prolong_mask(src: &BoundaryMask, x_origin: f64, t_origin: f64, h: f64, k: f64, nx: usize, nt: usize) -> BoundaryMask {
    let (sx, st) = src.mask.dim();
    let mut mask = Array2::from_elem((nx, nt), false);
    for j in 0..nx {
        let q = ((x_origin + j as f64 * h - src.x_origin) / src.h).round();
        if q < 0.0 || q as usize >= sx {
            continue;
        }
        for n in 0..nt {
            let p = ((t_origin + n as f64 * k - src.t_origin) / src.k).round();
            if p < 0.0 || p as usize >= st {
                continue;
            }
            mask[[j, n]] = src.mask[[q as usize, p as usize]];
        }
    }
    BoundaryMask { x_origin, t_origin, h, k, mask }
}

/// The mask restricted to the half-open nodes of `cube`.
pub fn restrict_mask(src: &BoundaryMask, cube: &ParabolicCube) -> BoundaryMask {
    let mut out = src.clone();
    for ((j, n), b) in out.mask.indexed_iter_mut() {
        if *b && !cube.contains_half_open(src.x(j), src.t(n)) {
            *b = false;
        }
    }
    out
}

/// Distances to a possibly empty node set.
#[derive(Debug, Clone)]
pub struct SetDistance {
    index: Option<DistanceIndex>,
}

impl SetDistance {
    pub fn new(set: &BoundaryMask) -> Self {
        SetDistance { index: DistanceIndex::new(set).ok() }
    }
    pub fn is_empty(&self) -> bool {
        self.index.is_none()
    }
    pub fn distance(&self, x: f64, t: f64) -> f64 {
        self.index.as_ref().map(|i| i.distance(x, t)).unwrap_or(f64::INFINITY)
    }
}

fn smooth_unit_step(s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    if s >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / s).exp();
    let b = (-1.0 / (1.0 - s)).exp();
    a / (a + b)
}

/// Φ: 1 on ρ ≤ 1/16, 0 on ρ ≥ 1/8, C∞ in between.
pub fn cutoff_profile(rho: f64) -> f64 {
    1.0 - smooth_unit_step((rho - 1.0 / 16.0) * 16.0)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MollifierSpec {
    pub radius: f64,
    /// Υ ∝ (1 - ρ²)^exponent on the ball.
    pub exponent: i32,
    pub points_per_axis: usize,
}

impl Default for MollifierSpec {
    fn default() -> Self {
        MollifierSpec { radius: MOLLIFIER_RADIUS, exponent: 4, points_per_axis: 6 }
    }
}

fn mollifier_rule(spec: &MollifierSpec) -> Vec<([f64; 3], f64)> {
    let (xs, ws) = gauss_legendre(spec.points_per_axis);
    let mut out = Vec::new();
    let mut total = 0.0;
    for (a, wa) in xs.iter().zip(&ws) {
        for (b, wb) in xs.iter().zip(&ws) {
            for (c, wc) in xs.iter().zip(&ws) {
                let rho2 = a * a + b * b + c * c;
                if rho2 >= 1.0 {
                    continue;
                }
                let w = wa * wb * wc * (1.0 - rho2).powi(spec.exponent);
                total += w;
                out.push(([a * spec.radius, b * spec.radius, c * spec.radius], w));
            }
        }
    }
    for p in out.iter_mut() {
        p.1 /= total;
    }
    out
}

fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
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
                xs[i] = z;
                ws[i] = 2.0 / ((1.0 - z * z) * dp * dp);
                break;
            }
        }
    }
    (xs, ws)
}

/// Ψ_{η,ε} over the sawtooth of F ∩ Δ.
#[derive(Debug, Clone)]
pub struct CutoffPsi {
    pub eta: f64,
    pub eps: f64,
    pub r: f64,
    pub cube: ParabolicCube,
    pub mollifier: MollifierSpec,
    dist: SetDistance,
    rule: Vec<([f64; 3], f64)>,
}

pub fn build_cutoff_psi(f: &BoundaryMask, cube: &ParabolicCube, eta: f64, eps: f64) -> Result<CutoffPsi> {
    build_cutoff_psi_with(f, cube, eta, eps, MollifierSpec::default())
}

pub fn build_cutoff_psi_with(
    f: &BoundaryMask,
    cube: &ParabolicCube,
    eta: f64,
    eps: f64,
    mollifier: MollifierSpec,
) -> Result<CutoffPsi> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(LabError::BadParameter(format!("eta = {eta} must lie in (0, 1)")));
    }
    if !(eps > 0.0) {
        return Err(LabError::BadParameter(format!("eps = {eps} must be positive")));
    }
    if eps >= cube.r / 4.0 {
        return Err(LabError::CutoffWindows { eps, quarter: cube.r / 4.0 });
    }
    let inside = restrict_mask(f, cube);
    Ok(CutoffPsi {
        eta,
        eps,
        r: cube.r,
        cube: *cube,
        mollifier,
        dist: SetDistance::new(&inside),
        rule: mollifier_rule(&mollifier),
    })
}

impl CutoffPsi {
    /// Φ(λ/32r)(1 - Φ(λ/16ε)).
    pub fn lambda_factor(&self, l: f64) -> f64 {
        if l <= 0.0 {
            return 0.0;
        }
        cutoff_profile(l / (32.0 * self.r)) * (1.0 - cutoff_profile(l / (16.0 * self.eps)))
    }

    /// Parabolic distance to F ∩ Δ.
    pub fn distance(&self, x: f64, t: f64) -> f64 {
        self.dist.distance(x, t)
    }

    /// Mollified indicator of Ω_{η/2}, given d = distance(x, t).
    pub fn sawtooth_factor(&self, l: f64, x: f64, t: f64, d: f64) -> f64 {
        if !d.is_finite() || l <= 0.0 {
            return 0.0;
        }
        let le = l * self.eta;
        let rad = self.mollifier.radius;
        let spread = le * (rad + rad.sqrt()) * (1.0 + 1e-9);
        let lo = self.eta * l * (1.0 - rad) / 16.0;
        let hi = self.eta * l * (1.0 + rad) / 16.0;
        if d + spread < lo {
            return 1.0;
        }
        if d - spread >= hi {
            return 0.0;
        }
        let mut acc = 0.0;
        for &([a, b, c], w) in &self.rule {
            let mu = l * (1.0 - a);
            let y = x - le * b;
            let s = t + le * le * c;
            if self.dist.distance(y, s) < self.eta * mu / 16.0 {
                acc += w;
            }
        }
        acc.clamp(0.0, 1.0)
    }

    pub fn eval(&self, l: f64, x: f64, t: f64) -> f64 {
        let lf = self.lambda_factor(l);
        if lf == 0.0 {
            return 0.0;
        }
        lf * self.sawtooth_factor(l, x, t, self.distance(x, t))
    }

    /// Ψ on the nodes (λ_i, x_j) of one time level: `out[[j, i]]`.
    pub fn layer(&self, lambdas: &[f64], xs: &[f64], t: f64, out: &mut Array2<f64>) {
        let lf: Vec<f64> = lambdas.iter().map(|&l| self.lambda_factor(l)).collect();
        for (j, &x) in xs.iter().enumerate() {
            let tx = self.cube.dilate(2.0);
            if !tx.contains_closed(x, t) {
                out.row_mut(j).fill(0.0);
                continue;
            }
            let d = self.distance(x, t);
            for (i, &l) in lambdas.iter().enumerate() {
                out[[j, i]] = if lf[i] == 0.0 { 0.0 } else { lf[i] * self.sawtooth_factor(l, x, t, d) };
            }
        }
    }

    pub fn sample(&self, lat: &PsiLattice) -> PsiSample {
        let lambdas = lat.lambdas();
        let xs: Vec<f64> = (0..lat.nx).map(|j| lat.x(j)).collect();
        let mut values = Array3::zeros((lat.nt, lat.nx, lat.nl));
        let mut buf = Array2::zeros((lat.nx, lat.nl));
        for n in 0..lat.nt {
            self.layer(&lambdas, &xs, lat.t(n), &mut buf);
            values.index_axis_mut(ndarray::Axis(0), n).assign(&buf);
        }
        PsiSample { lattice: *lat, values }
    }
}

/// Uniform (λ, x, t) node lattice: λ_i = l0 + i hl, x_j = x0 + j h,
/// t_n = t0 + n k.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PsiLattice {
    pub l0: f64,
    pub hl: f64,
    pub nl: usize,
    pub x0: f64,
    pub h: f64,
    pub nx: usize,
    pub t0: f64,
    pub k: f64,
    pub nt: usize,
}

impl PsiLattice {
    /// Nodes covering (0, 4r] x 2Δ (closed) with spacing h, k = h².
    pub fn around(cube: &ParabolicCube, h: f64) -> Self {
        let big = cube.dilate(2.0);
        let (xa, xb) = big.x_range();
        let (ta, tb) = big.t_range();
        let k = h * h;
        let nx = ((xb - xa) / h + 1e-9).floor() as usize + 1;
        let nt = ((tb - ta) / k + 1e-9).floor() as usize + 1;
        let nl = (4.0 * cube.r / h + 1e-9).floor() as usize;
        PsiLattice { l0: h, hl: h, nl, x0: xa, h, nx, t0: ta, k, nt }
    }
    pub fn lambda(&self, i: usize) -> f64 {
        self.l0 + i as f64 * self.hl
    }
    pub fn lambdas(&self) -> Vec<f64> {
        (0..self.nl).map(|i| self.lambda(i)).collect()
    }
    pub fn x(&self, j: usize) -> f64 {
        self.x0 + j as f64 * self.h
    }
    pub fn t(&self, n: usize) -> f64 {
        self.t0 + n as f64 * self.k
    }
}

/// Ψ values indexed `[[n, j, i]]` on a [`PsiLattice`].
#[derive(Debug, Clone)]
pub struct PsiSample {
    pub lattice: PsiLattice,
    pub values: Array3<f64>,
}

pub const E1: u8 = 1;
pub const E2: u8 = 2;
pub const E3: u8 = 4;

/// E-set parameters and membership tests for one (F, η, ε, Δ).
#[derive(Debug, Clone)]
pub struct ESets {
    pub eta: f64,
    pub eps: f64,
    pub cube: ParabolicCube,
    dist: SetDistance,
}

impl ESets {
    pub fn new(f: &BoundaryMask, cube: &ParabolicCube, eta: f64, eps: f64) -> Self {
        ESets { eta, eps, cube: *cube, dist: SetDistance::new(f) }
    }

    pub fn delta(&self, x: f64, t: f64) -> f64 {
        self.dist.distance(x, t)
    }

    /// Membership bits for (λ, δ); (x, t) ∈ 2Δ is the caller's business.
    pub fn bits(&self, l: f64, delta: f64) -> u8 {
        let r = self.cube.r;
        let (lo, hi) = (self.eta * l / 32.0, self.eta * l / 8.0);
        let mut b = 0;
        if l > 0.0 && l < 4.0 * r && delta >= lo && delta <= hi {
            b |= E1;
        }
        if l > 2.0 * r && l < 4.0 * r && delta <= hi {
            b |= E2;
        }
        if l > self.eps && l < 2.0 * self.eps && delta <= hi {
            b |= E3;
        }
        b
    }

    /// λ-intervals (in λ) of E1, E2, E3 over a point at distance δ.
    pub fn intervals(&self, delta: f64) -> [(f64, f64); 3] {
        let r = self.cube.r;
        let lo = 8.0 * delta / self.eta;
        let e1 = if delta > 0.0 { (lo, (32.0 * delta / self.eta).min(4.0 * r)) } else { (0.0, 0.0) };
        let e2 = (lo.max(2.0 * r), 4.0 * r);
        let e3 = (lo.max(self.eps), 2.0 * self.eps);
        [e1, e2, e3]
    }
}

fn log_measure(iv: &[(f64, f64)]) -> f64 {
    let mut v: Vec<(f64, f64)> = iv.iter().copied().filter(|(a, b)| b > a && *b > 0.0).collect();
    v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut total = 0.0;
    let mut cur: Option<(f64, f64)> = None;
    for (a, b) in v {
        match cur {
            Some((ca, cb)) if a <= cb => cur = Some((ca, cb.max(b))),
            Some((ca, cb)) => {
                total += (cb / ca).ln();
                cur = Some((a, b));
            }
            None => cur = Some((a, b)),
        }
    }
    if let Some((ca, cb)) = cur {
        total += (cb / ca).ln();
    }
    total
}

#[derive(Debug, Clone, Serialize)]
pub struct ESetMask {
    pub eta: f64,
    pub eps: f64,
    pub cube: ParabolicCube,
    #[serde(skip)]
    pub lattice: PsiLattice,
    /// E1 | E2 | E3 bits per node, `[[n, j, i]]`; zero outside 2Δ.
    #[serde(skip)]
    pub bits: Array3<u8>,
    /// ∭ 1_{E_q} dλ dx dt / λ, exact in λ, nodal in (x, t).
    pub masses: [f64; 3],
    pub union_mass: f64,
    /// Same integrals by direct count over the λ nodes.
    pub counted: [f64; 4],
}

/// Classifies every node of `lat`; (x, t) integrals run over the half-open
/// nodes of 2Δ with weight h k.
pub fn classify_e(f: &BoundaryMask, cube: &ParabolicCube, eta: f64, eps: f64, lat: &PsiLattice) -> ESetMask {
    let e = ESets::new(f, cube, eta, eps);
    let big = cube.dilate(2.0);
    let mut bits = Array3::zeros((lat.nt, lat.nx, lat.nl));
    let mut masses = [0.0; 3];
    let mut union_mass = 0.0;
    let mut counted = [0.0; 4];
    let w = lat.h * lat.k;
    for n in 0..lat.nt {
        for j in 0..lat.nx {
            let (x, t) = (lat.x(j), lat.t(n));
            if !big.contains_closed(x, t) {
                continue;
            }
            let d = e.delta(x, t);
            let half_open = big.contains_half_open(x, t);
            if half_open {
                let iv = e.intervals(d);
                for q in 0..3 {
                    masses[q] += w * log_measure(&iv[q..q + 1]);
                }
                union_mass += w * log_measure(&iv);
            }
            for i in 0..lat.nl {
                let l = lat.lambda(i);
                let b = e.bits(l, d);
                bits[[n, j, i]] = b;
                if half_open && b != 0 {
                    let c = w * lat.hl / l;
                    for (q, bit) in [E1, E2, E3].iter().enumerate() {
                        if b & bit != 0 {
                            counted[q] += c;
                        }
                    }
                    counted[3] += c;
                }
            }
        }
    }
    ESetMask { eta, eps, cube: *cube, lattice: *lat, bits, masses, union_mass, counted }
}

/// ∭_{E1 ∪ E2 ∪ E3} dλ dx dt / λ, exact in λ, over the half-open nodes of
/// 2Δ on the mask's own lattice.
pub fn tech_mass(f: &BoundaryMask, cube: &ParabolicCube, eta: f64, eps: f64) -> f64 {
    let e = ESets::new(f, cube, eta, eps);
    let big = cube.dilate(2.0);
    let w = f.h * f.k;
    let (nx, nt) = f.mask.dim();
    let mut total = 0.0;
    for j in 0..nx {
        for n in 0..nt {
            let (x, t) = (f.x(j), f.t(n));
            if big.contains_half_open(x, t) {
                total += w * log_measure(&e.intervals(e.delta(x, t)));
            }
        }
    }
    total
}

/// log(8) 2^{n+2} |Δ| with n = 1.
pub fn tech_mass_bound(cube: &ParabolicCube) -> f64 {
    8f64.ln() * 8.0 * cube.measure()
}

#[derive(Debug, Clone, Serialize)]
pub struct DerivativeBound {
    /// (α, β, γ).
    pub multi: [u8; 3],
    /// max |∂Ψ| λ^{α+β+2γ}.
    pub c_tilde: f64,
    /// ∭ |∂Ψ| λ^{α+β+2γ-1} / |Δ| and the same with the square.
    pub carleson_p1: f64,
    pub carleson_p2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PsiReport {
    pub eta: f64,
    pub eps: f64,
    pub min: f64,
    pub max: f64,
    pub bounds: Vec<DerivativeBound>,
    /// Nodes with a nonzero discrete derivative.
    pub support_nodes: usize,
    /// Of those, nodes farther than one cell from E1 ∪ E2 ∪ E3.
    pub off_support: usize,
    /// Plateau nodes (Ψ = 1 on the full stencil) with a nonzero derivative.
    pub plateau_violations: usize,
}

const MULTI: [[u8; 3]; 9] = [
    [1, 0, 0],
    [0, 1, 0],
    [0, 0, 1],
    [2, 0, 0],
    [0, 2, 0],
    [0, 0, 2],
    [1, 1, 0],
    [1, 0, 1],
    [0, 1, 1],
];

/// Discrete derivatives of total order ≤ 2 on the interior nodes of a
/// sample. E-sets are taken with respect to F ∩ Δ, the set Ψ is built on.
pub fn verify_psi_derivatives(psi: &CutoffPsi, f: &BoundaryMask, sample: &PsiSample) -> PsiReport {
    let lat = &sample.lattice;
    let v = &sample.values;
    let inside = restrict_mask(f, &psi.cube);
    let e = ESets::new(&inside, &psi.cube, psi.eta, psi.eps);
    let big = psi.cube.dilate(2.0);
    let (hl, h, k) = (lat.hl, lat.h, lat.k);
    let halo_d = h + k.sqrt();
    let mut bounds: Vec<DerivativeBound> =
        MULTI.iter().map(|&m| DerivativeBound { multi: m, c_tilde: 0.0, carleson_p1: 0.0, carleson_p2: 0.0 }).collect();
    let mut support_nodes = 0;
    let mut off_support = 0;
    let mut plateau_violations = 0;
    let (nt, nx, nl) = v.dim();
    let w = hl * h * k / psi.cube.measure();
    let (xa, xb) = big.x_range();
    let (ta, tb) = big.t_range();
    let near_e = |l: f64, x: f64, t: f64, d: f64| -> bool {
        if x < xa - h || x > xb + h || t < ta - k || t > tb + k {
            return false;
        }
        let (dlo, dhi) = ((d - halo_d).max(0.0), d + halo_d);
        let (la, lb) = (l - hl, l + hl);
        let r = psi.cube.r;
        let e1 = la < 4.0 * r && psi.eta * la / 32.0 <= dhi && dlo <= psi.eta * lb / 8.0;
        let e2 = lb > 2.0 * r && la < 4.0 * r && dlo <= psi.eta * lb / 8.0;
        let e3 = lb > psi.eps && la < 2.0 * psi.eps && dlo <= psi.eta * lb / 8.0;
        e1 || e2 || e3
    };
    let mut dist_cache = Array2::<f64>::from_elem((nx, nt), f64::NAN);
    for n in 1..nt.saturating_sub(1) {
        for j in 1..nx.saturating_sub(1) {
            for i in 1..nl.saturating_sub(1) {
                let at = |dn: isize, dj: isize, di: isize| {
                    v[[(n as isize + dn) as usize, (j as isize + dj) as usize, (i as isize + di) as usize]]
                };
                let c = at(0, 0, 0);
                let ders = [
                    (at(0, 0, 1) - at(0, 0, -1)) / (2.0 * hl),
                    (at(0, 1, 0) - at(0, -1, 0)) / (2.0 * h),
                    (at(1, 0, 0) - at(-1, 0, 0)) / (2.0 * k),
                    (at(0, 0, 1) - 2.0 * c + at(0, 0, -1)) / (hl * hl),
                    (at(0, 1, 0) - 2.0 * c + at(0, -1, 0)) / (h * h),
                    (at(1, 0, 0) - 2.0 * c + at(-1, 0, 0)) / (k * k),
                    (at(0, 1, 1) - at(0, 1, -1) - at(0, -1, 1) + at(0, -1, -1)) / (4.0 * hl * h),
                    (at(1, 0, 1) - at(1, 0, -1) - at(-1, 0, 1) + at(-1, 0, -1)) / (4.0 * hl * k),
                    (at(1, 1, 0) - at(1, -1, 0) - at(-1, 1, 0) + at(-1, -1, 0)) / (4.0 * h * k),
                ];
                let l = lat.lambda(i);
                let mut any = false;
                for (q, d) in ders.iter().enumerate() {
                    if d.abs() <= 1e-12 {
                        continue;
                    }
                    any = true;
                    let m = MULTI[q];
                    let p = m[0] as i32 + m[1] as i32 + 2 * m[2] as i32;
                    let s = d.abs() * l.powi(p);
                    let b = &mut bounds[q];
                    b.c_tilde = b.c_tilde.max(s);
                    b.carleson_p1 += s / l * w;
                    b.carleson_p2 += s * s / l * w;
                }
                if any {
                    support_nodes += 1;
                    let mut plateau = true;
                    'outer: for dn in -1..=1 {
                        for dj in -1..=1 {
                            for di in -1..=1 {
                                if at(dn, dj, di) != 1.0 {
                                    plateau = false;
                                    break 'outer;
                                }
                            }
                        }
                    }
                    if plateau {
                        plateau_violations += 1;
                    }
                    let (x, t) = (lat.x(j), lat.t(n));
                    let d = {
                        let cached = dist_cache[[j, n]];
                        if cached.is_nan() {
                            let d = e.delta(x, t);
                            dist_cache[[j, n]] = d;
                            d
                        } else {
                            cached
                        }
                    };
                    if !near_e(l, x, t, d) {
                        off_support += 1;
                    }
                }
            }
        }
    }
    PsiReport {
        eta: psi.eta,
        eps: psi.eps,
        min: v.iter().cloned().fold(f64::INFINITY, f64::min),
        max: v.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        bounds,
        support_nodes,
        off_support,
        plateau_violations,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ThetaReport {
    pub kappa0: f64,
    /// max over F x stack of (|θ| + |θ̃|) / (κ₀ λ).
    pub c_on_f: f64,
    /// max over Ω of (|∂λθ| + |∂λθ̃|) / κ₀.
    pub c_dl_sawtooth: f64,
    /// max over Ω of (|θ| + |θ̃|) / (κ₀ λ).
    pub c_sawtooth: f64,
    pub sawtooth_nodes: usize,
}

/// θ checks against F (on 16Δ) and the aperture-one sawtooth Ω over F ∩ Δ.
pub fn verify_theta_bounds(theta: &ThetaRecord, lambdas: &[f64], f: &SetFReport) -> ThetaReport {
    let k0 = f.kappa0;
    let mut c_on_f: f64 = 0.0;
    for ((j, n), &b) in f.mask.mask.indexed_iter() {
        if b {
            c_on_f = c_on_f.max(theta.ratio_max.data[[j, n]] / k0);
        }
    }
    let inside = SetDistance::new(&restrict_mask(&f.mask, &f.cube));
    let near = &theta.near;
    let (nx, nt) = near.data.dim();
    let mut dist = Array2::zeros((nx, nt));
    for j in 0..nx {
        for n in 0..nt {
            dist[[j, n]] = inside.distance(near.x(j), near.t(n));
        }
    }
    let mut c_dl: f64 = 0.0;
    let mut c_saw: f64 = 0.0;
    let mut count = 0;
    for (s, &l) in lambdas.iter().enumerate() {
        let (dl, th) = (&theta.d_lambda[s], &theta.theta[s]);
        for j in 0..nx {
            for n in 0..nt {
                if dist[[j, n]] < l {
                    count += 1;
                    c_dl = c_dl.max(dl[[j, n]] / k0);
                    c_saw = c_saw.max(th[[j, n]] / (k0 * l));
                }
            }
        }
    }
    ThetaReport { kappa0: k0, c_on_f, c_dl_sawtooth: c_dl, c_sawtooth: c_saw, sawtooth_nodes: count }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Field2;

    fn crit_const(v: f64) -> CriterionFields {
        let f = Field2::from_fn(-1.0, -1.0, 0.125, 1.0 / 64.0, 17, 129, |_, _| v);
        CriterionFields {
            xs: 0..17,
            ts: 0..129,
            hl_grad: f.clone(),
            iterated_half: f.clone(),
            max_diff: f.clone(),
            nstar_dl: f.clone(),
            ntilde_grad: f,
        }
    }

    #[test]
    fn profile_plateaus() {
        assert_eq!(cutoff_profile(0.0), 1.0);
        assert_eq!(cutoff_profile(1.0 / 16.0), 1.0);
        assert_eq!(cutoff_profile(1.0 / 8.0), 0.0);
        assert_eq!(cutoff_profile(0.2), 0.0);
        let mut prev = 1.0;
        for i in 0..=100 {
            let v = cutoff_profile(1.0 / 16.0 + i as f64 / 1600.0);
            assert!(v <= prev + 1e-15 && (0.0..=1.0).contains(&v));
            prev = v;
        }
    }

    #[test]
    fn mollifier_rule_has_unit_mass() {
        let rule = mollifier_rule(&MollifierSpec::default());
        let s: f64 = rule.iter().map(|p| p.1).sum();
        assert!((s - 1.0).abs() < 1e-14);
        assert!(rule.iter().all(|(p, w)| *w > 0.0 && (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() < MOLLIFIER_RADIUS));
    }

    #[test]
    fn zero_fields_give_full_set() {
        let cube = ParabolicCube::new(0.0, 0.0, 0.0625);
        let c = crit_const(0.0);
        let cal = calibrate_kappa0(&cube, &c, 1e-3).unwrap();
        assert_eq!(cal.kappa0, KAPPA_GRID_RANGE.0);
        assert_eq!(cal.density, 0.0);
        assert_eq!(build_f(&cube, 0.0, &c).density, 0.0);
    }

    #[test]
    fn unreachable_target() {
        let cube = ParabolicCube::new(0.0, 0.0, 0.0625);
        let c = crit_const(1e9);
        assert!(matches!(calibrate_kappa0(&cube, &c, 1e-3), Err(LabError::TargetUnreachable { .. })));
        assert_eq!(build_f(&cube, 1e3, &c).density, 1.0);
        assert!(matches!(calibrate_kappa0(&cube, &c, 1.5), Err(LabError::BadParameter(_))));
    }

    #[test]
    fn criterion_one_uses_square() {
        let cube = ParabolicCube::new(0.0, 0.0, 0.0625);
        let mut c = crit_const(0.0);
        c.hl_grad.data.fill(4.0);
        let f = build_f(&cube, 2.0, &c);
        assert_eq!(f.density, 0.0);
        let f = build_f(&cube, 1.9, &c);
        assert_eq!(f.density, 1.0);
        assert_eq!(f.exclusions, [f.cells, 0, 0, 0, 0]);
    }

    #[test]
    fn log_measure_merges() {
        let m = log_measure(&[(1.0, 2.0), (1.5, 4.0), (8.0, 16.0), (0.0, 0.0)]);
        assert!((m - (4f64.ln() + 2f64.ln())).abs() < 1e-14);
    }

    fn full_mask(cube: &ParabolicCube, h: f64) -> BoundaryMask {
        let big = cube.dilate(16.0);
        let (xa, xb) = big.x_range();
        let (ta, tb) = big.t_range();
        let k = h * h;
        let nx = ((xb - xa) / h).round() as usize;
        let nt = ((tb - ta) / k).round() as usize;
        BoundaryMask { x_origin: xa, t_origin: ta, h, k, mask: Array2::from_elem((nx, nt), true) }
    }

    #[test]
    fn full_f_tech_mass() {
        let cube = ParabolicCube::new(0.0, 0.0, 0.25);
        let f = full_mask(&cube, 1.0 / 16.0);
        let m = tech_mass(&f, &cube, 0.5, 1.0 / 32.0);
        let want = 2.0 * 2f64.ln() * cube.dilate(2.0).measure();
        assert!((m - want).abs() < 1e-12 * want, "{m} {want}");
        assert!(m <= tech_mass_bound(&cube));
        let mut empty = f.clone();
        empty.mask.fill(false);
        assert_eq!(tech_mass(&empty, &cube, 0.5, 1.0 / 32.0), 0.0);
    }

    #[test]
    fn e_set_examples() {
        let cube = ParabolicCube::new(0.0, 0.0, 0.25);
        let f = full_mask(&cube, 1.0 / 16.0);
        let e = ESets::new(&f, &cube, 0.5, 1.0 / 32.0);
        assert_eq!(e.bits(0.2, 0.0), 0);
        assert_eq!(e.bits(0.75, 0.0), E2);
        assert_eq!(e.bits(0.05, 0.0), E3);
    }

    #[test]
    fn psi_plateau_and_support() {
        let cube = ParabolicCube::new(0.0, 0.0, 0.25);
        let f = full_mask(&cube, 1.0 / 16.0);
        let psi = build_cutoff_psi(&f, &cube, 0.5, 1.0 / 32.0).unwrap();
        assert_eq!(psi.eval(0.1, 0.0, 0.0), 1.0);
        assert_eq!(psi.eval(0.49, 0.125, 12.0 / 256.0), 1.0);
        assert_eq!(psi.eval(0.49, 0.1, 0.05), 0.0);
        assert_eq!(psi.eval(0.03, 0.0, 0.0), 0.0);
        assert_eq!(psi.eval(1.0, 0.0, 0.0), 0.0);
        assert_eq!(psi.eval(0.3, 0.45, 0.0), 0.0);
        assert!(matches!(build_cutoff_psi(&f, &cube, 0.5, 0.0625), Err(LabError::CutoffWindows { .. })));
    }

    #[test]
    fn prolongation_keeps_nodes() {
        let cube = ParabolicCube::new(0.0, 0.0, 0.25);
        let mut f = full_mask(&cube, 1.0 / 16.0);
        f.mask[[3, 5]] = false;
        let p = prolong_mask(&f, f.x_origin, f.t_origin, f.h / 2.0, f.k / 4.0, 2 * f.mask.dim().0, 4 * f.mask.dim().1);
        assert!(!p.mask[[6, 20]]);
        assert!(p.mask[[8, 20]]);
    }
}
