//! χ_{8Δ} and the two Hodge problems H∥*φ = div_x(A⊥∥ χ), H∥φ̃ = div_x(A∥⊥ χ)
//! on a periodic (x, t) torus: finite differences in x, Fourier modes in t.

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::coeffs::BlockSplit;
use crate::error::{LabError, Result};
use crate::field::Field2;
use crate::fracalc::{dt_c, energy_seminorm, frequencies, hilbert_t, ComplexSignal, EnergySeminorm};
use crate::geometry::ParabolicCube;
use crate::linalg::cyclic_tridiag_solve;

pub const HODGE_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 200;

/// Periodic lattice centred on a cube, k = h^2.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Torus {
    pub x_origin: f64,
    pub t_origin: f64,
    pub h: f64,
    pub k: f64,
    pub nx: usize,
    pub nt: usize,
}

impl Torus {
    /// Half-widths x_half r in x and t_half r^2 in t around the cube centre.
    pub fn around(cube: &ParabolicCube, h: f64, x_half: f64, t_half: f64) -> Result<Self> {
        let k = h * h;
        let nxh = (x_half * cube.r / h).round();
        let nth = (t_half * cube.r * cube.r / k).round();
        if (nxh * h - x_half * cube.r).abs() > 1e-9 * h || (nth * k - t_half * cube.r * cube.r).abs() > 1e-9 * k {
            return Err(LabError::Grid(format!("torus half-widths are not multiples of h = {h}")));
        }
        if nxh < 2.0 || nth < 2.0 {
            return Err(LabError::Grid("torus too small".into()));
        }
        Ok(Torus {
            x_origin: cube.x0 - nxh * h,
            t_origin: cube.t0 - nth * k,
            h,
            k,
            nx: 2 * nxh as usize,
            nt: 2 * nth as usize,
        })
    }
    pub fn x(&self, j: usize) -> f64 {
        self.x_origin + j as f64 * self.h
    }
    pub fn t(&self, n: usize) -> f64 {
        self.t_origin + n as f64 * self.k
    }
    pub fn x_span(&self) -> f64 {
        self.nx as f64 * self.h
    }
    pub fn t_span(&self) -> f64 {
        self.nt as f64 * self.k
    }
    pub fn field(&self, f: impl Fn(f64, f64) -> f64) -> Field2 {
        let mut v = Field2::from_fn(self.x_origin, self.t_origin, self.h, self.k, self.nx, self.nt, f);
        v.periodic_t = true;
        v.periodic_x = true;
        v
    }
    pub fn zeros(&self) -> Field2 {
        self.field(|_, _| 0.0)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CutoffChi {
    pub cube: ParabolicCube,
    pub chi: Field2,
    /// Measured r max|∂x χ| + r^2 max|∂t χ|.
    pub slope_constant: f64,
}

fn smoothstep(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

/// Tensor quintic ramp: 1 on 8Δ, 0 outside 16Δ.
pub fn chi_value(cube: &ParabolicCube, x: f64, t: f64) -> f64 {
    let r = cube.r;
    let sx = (16.0 * r - (x - cube.x0).abs()) / (8.0 * r);
    let st = (256.0 * r * r - (t - cube.t0).abs()) / (192.0 * r * r);
    smoothstep(sx) * smoothstep(st)
}

pub fn build_chi(cube: &ParabolicCube, torus: &Torus) -> Result<CutoffChi> {
    let big = cube.dilate(16.0);
    let (xa, xb) = big.x_range();
    let (ta, tb) = big.t_range();
    if xa < torus.x_origin || xb > torus.x_origin + torus.x_span() || ta < torus.t_origin || tb > torus.t_origin + torus.t_span()
    {
        return Err(LabError::OutOfDomain("16Δ exceeds the lattice".into()));
    }
    let chi = torus.field(|x, t| chi_value(cube, x, t));
    let (nx, nt) = chi.data.dim();
    let (mut gx, mut gt): (f64, f64) = (0.0, 0.0);
    for j in 0..nx {
        for n in 0..nt {
            let c = chi.data[[j, n]];
            gx = gx.max((chi.data[[(j + 1) % nx, n]] - c).abs() / torus.h);
            gt = gt.max((chi.data[[j, (n + 1) % nt]] - c).abs() / torus.k);
        }
    }
    Ok(CutoffChi {
        cube: *cube,
        slope_constant: cube.r * gx + cube.r * cube.r * gt,
        chi,
    })
}

/// H∥ = ∂t - ∂x A∥∥ ∂x (Forward) or H∥* = -∂t - ∂x A∥∥ ∂x (Adjoint).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Side {
    Forward,
    Adjoint,
}

impl Side {
    fn sign(self) -> f64 {
        match self {
            Side::Forward => 1.0,
            Side::Adjoint => -1.0,
        }
    }
}

/// Face coefficients a_{j+1/2}(t_n), stored [[j, n]].
fn face_coeffs(blocks: &BlockSplit, v: &Field2) -> Array2<f64> {
    let (nx, nt) = v.data.dim();
    let mut node = Array2::zeros((nx, nt));
    for j in 0..nx {
        for n in 0..nt {
            node[[j, n]] = blocks.a_tt(v.x(j), v.t(n));
        }
    }
    let mut face = Array2::zeros((nx, nt));
    for j in 0..nx {
        for n in 0..nt {
            face[[j, n]] = 0.5 * (node[[j, n]] + node[[(j + 1) % nx, n]]);
        }
    }
    face
}

fn apply_x(face: &Array2<f64>, v: &Array2<f64>, h: f64) -> Array2<f64> {
    let (nx, nt) = v.dim();
    let mut out = Array2::zeros((nx, nt));
    let h2 = h * h;
    for j in 0..nx {
        let jp = (j + 1) % nx;
        let jm = (j + nx - 1) % nx;
        for n in 0..nt {
            let fp = face[[j, n]] * (v[[jp, n]] - v[[j, n]]);
            let fm = face[[jm, n]] * (v[[j, n]] - v[[jm, n]]);
            out[[j, n]] = -(fp - fm) / h2;
        }
    }
    out
}

/// Discrete H∥ or H∥* applied to a periodic field.
pub fn apply_operator(blocks: &BlockSplit, side: Side, v: &Field2) -> Field2 {
    let face = face_coeffs(blocks, v);
    apply_with_faces(&face, side, v)
}

fn apply_with_faces(face: &Array2<f64>, side: Side, v: &Field2) -> Field2 {
    let dt = dt_c(&ComplexSignal::from_real(v)).re();
    let lx = apply_x(face, &v.data, v.h);
    v.like(dt * side.sign() + lx)
}

/// Bilinear form ⟨H u, w⟩ with the nodal quadrature.
pub fn form(blocks: &BlockSplit, side: Side, u: &Field2, w: &Field2) -> f64 {
    apply_operator(blocks, side, u).dot(w)
}

/// Discrete div_x of a nodal flux g: (G_{j+1/2} - G_{j-1/2})/h with
/// G_{j+1/2} = (g_j + g_{j+1})/2.
pub fn divergence_x(g: &Field2) -> Field2 {
    let (nx, nt) = g.data.dim();
    let mut out = Array2::zeros((nx, nt));
    for j in 0..nx {
        let jp = (j + 1) % nx;
        let jm = (j + nx - 1) % nx;
        for n in 0..nt {
            out[[j, n]] = 0.5 * (g.data[[jp, n]] - g.data[[jm, n]]) / g.h;
        }
    }
    g.like(out)
}

/// Zero-mode problem -D-(a D+ u) = r with mean(u) = 0, by integration.
fn solve_zero_mode(face: &[f64], r: &[Complex64], h: f64) -> Vec<Complex64> {
    let nx = r.len();
    // flux F_{j+1/2} = a D+u satisfies F_{j+1/2} - F_{j-1/2} = -h r_j
    let mut flux = vec![Complex64::new(0.0, 0.0); nx];
    for j in 1..nx {
        flux[j] = flux[j - 1] - r[j] * h;
    }
    let inv_sum: f64 = face.iter().map(|a| 1.0 / a).sum();
    let mut shift = Complex64::new(0.0, 0.0);
    for j in 0..nx {
        shift += flux[j] / face[j];
    }
    let c = -shift / inv_sum;
    let mut u = vec![Complex64::new(0.0, 0.0); nx];
    for j in 1..nx {
        u[j] = u[j - 1] + (flux[j - 1] + c) / face[j - 1] * h;
    }
    let mean = u.iter().sum::<Complex64>() / nx as f64;
    u.iter().map(|z| z - mean).collect()
}

/// Exact inverse of the t-independent operator with face coefficients
/// `face` (one column per x face), mean pinned to 0.
fn solve_frozen(face: &[f64], side: Side, rhs: &Field2) -> Result<Field2> {
    let (nx, nt) = rhs.data.dim();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(nt);
    let inv = planner.plan_fft_inverse(nt);
    let mut spec = Array2::<Complex64>::zeros((nx, nt));
    let mut buf = vec![Complex64::new(0.0, 0.0); nt];
    for j in 0..nx {
        for n in 0..nt {
            buf[n] = Complex64::new(rhs.data[[j, n]], 0.0);
        }
        fwd.process(&mut buf);
        for n in 0..nt {
            spec[[j, n]] = buf[n];
        }
    }
    let taus = frequencies(nt, rhs.k);
    let h2 = rhs.h * rhs.h;
    let a: Vec<Complex64> = (0..nx).map(|j| Complex64::new(-face[(j + nx - 1) % nx] / h2, 0.0)).collect();
    let c: Vec<Complex64> = (0..nx).map(|j| Complex64::new(-face[j] / h2, 0.0)).collect();
    let mut col = vec![Complex64::new(0.0, 0.0); nx];
    for m in 0..nt {
        for j in 0..nx {
            col[j] = spec[[j, m]];
        }
        let nyq = nt % 2 == 0 && m == nt / 2;
        if m == 0 || nyq {
            let u = solve_zero_mode(face, &col, rhs.h);
            col.copy_from_slice(&u);
        } else {
            let s = side.sign() * taus[m];
            let b: Vec<Complex64> = (0..nx)
                .map(|j| Complex64::new((face[j] + face[(j + nx - 1) % nx]) / h2, s))
                .collect();
            cyclic_tridiag_solve(&a, &b, &c, &mut col)?;
        }
        for j in 0..nx {
            spec[[j, m]] = col[j];
        }
    }
    let mut out = rhs.like(Array2::zeros((nx, nt)));
    let scale = 1.0 / nt as f64;
    for j in 0..nx {
        for n in 0..nt {
            buf[n] = spec[[j, n]];
        }
        inv.process(&mut buf);
        for n in 0..nt {
            out.data[[j, n]] = buf[n].re * scale;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct ParallelSolve {
    pub solution: Field2,
    pub residual: f64,
    pub sweeps: usize,
    pub mean: f64,
}

/// Solve H u = rhs (rhs with zero x-mean on every t row) on the torus.
/// t-dependent A∥∥ is handled by sweeps preconditioned with the t-mean.
pub fn solve_parallel(blocks: &BlockSplit, side: Side, rhs: &Field2) -> Result<ParallelSolve> {
    let face = face_coeffs(blocks, rhs);
    let (nx, nt) = rhs.data.dim();
    let mean_face: Vec<f64> = (0..nx).map(|j| face.row(j).sum() / nt as f64).collect();
    let frozen = face.rows().into_iter().all(|r| r.iter().all(|&v| v == r[0]));
    let rn = rhs.l2_sq().sqrt().max(1e-300);
    let mut u = solve_frozen(&mean_face, side, rhs)?;
    let mut sweeps = 0;
    let mut res;
    loop {
        let hu = apply_with_faces(&face, side, &u);
        let r = rhs.like(&rhs.data - &hu.data);
        res = r.l2_sq().sqrt() / rn;
        if res <= 1e-13 || frozen || sweeps >= MAX_SWEEPS {
            break;
        }
        let du = solve_frozen(&mean_face, side, &r)?;
        u.data += &du.data;
        sweeps += 1;
    }
    if res > HODGE_TOL {
        return Err(LabError::SolverFailure {
            step: 0,
            residual: res,
            iterations: sweeps,
        });
    }
    let mean = u.data.sum() / (nx * nt) as f64;
    u.data.mapv_inplace(|v| v - mean);
    Ok(ParallelSolve {
        solution: u,
        residual: res,
        sweeps,
        mean,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HodgePair {
    pub phi: Field2,
    pub phi_tilde: Field2,
    pub residual_phi: f64,
    pub residual_phi_tilde: f64,
    pub energy_phi: EnergySeminorm,
    pub energy_phi_tilde: EnergySeminorm,
    /// Energy / |Δ|.
    pub c_e_phi: f64,
    pub c_e_phi_tilde: f64,
    pub cube: ParabolicCube,
}

/// Discrete H∥ energy: ‖∂x v‖² + ‖H_t D^{1/2} v‖².
fn energy(v: &Field2) -> EnergySeminorm {
    energy_seminorm(v)
}

pub fn solve_hodge(blocks: &BlockSplit, chi: &CutoffChi) -> Result<HodgePair> {
    let c = &chi.chi;
    let g = c.like(Array2::from_shape_fn(c.data.dim(), |(j, n)| blocks.a_pt(c.x(j), c.t(n)) * c.data[[j, n]]));
    let gt = c.like(Array2::from_shape_fn(c.data.dim(), |(j, n)| blocks.a_tp(c.x(j), c.t(n)) * c.data[[j, n]]));
    let p = solve_parallel(blocks, Side::Adjoint, &divergence_x(&g))?;
    let q = solve_parallel(blocks, Side::Forward, &divergence_x(&gt))?;
    let e1 = energy(&p.solution);
    let e2 = energy(&q.solution);
    let vol = chi.cube.measure();
    Ok(HodgePair {
        c_e_phi: e1.total() / vol,
        c_e_phi_tilde: e2.total() / vol,
        energy_phi: e1,
        energy_phi_tilde: e2,
        residual_phi: p.residual,
        residual_phi_tilde: q.residual,
        phi: p.solution,
        phi_tilde: q.solution,
        cube: chi.cube,
    })
}

/// Random smooth periodic test fields: a few Fourier modes in x and t.
pub fn test_battery(torus: &Torus, count: usize, seed: u64) -> Vec<Field2> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lx, lt) = (torus.x_span(), torus.t_span());
    (0..count)
        .map(|_| {
            let modes: Vec<(f64, f64, f64, f64)> = (0..6)
                .map(|_| {
                    let p = rng.gen_range(1..=(torus.nx / 4).max(1)) as f64;
                    let q = rng.gen_range(0..=(torus.nt / 8).max(1)) as f64;
                    (p, q, rng.gen_range(-1.0..1.0), rng.gen_range(0.0..std::f64::consts::TAU))
                })
                .collect();
            torus.field(|x, t| {
                modes
                    .iter()
                    .map(|&(p, q, a, ph)| {
                        a * (std::f64::consts::TAU * (p * (x - torus.x_origin) / lx + q * (t - torus.t_origin) / lt) + ph).cos()
                    })
                    .sum()
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct InfSup {
    pub delta: f64,
    pub beta: f64,
    pub min_coercivity: f64,
}

/// β = min over the battery of form(v, T v) / (‖v‖_E ‖T v‖_E) with the
/// twisted test function T v = v - δ H_t v for H∥ and v + δ H_t v for H∥*.
/// Also reports min form(v, v)/‖∂x v‖².
pub fn inf_sup(blocks: &BlockSplit, side: Side, battery: &[Field2], delta: f64) -> InfSup {
    let sgn = match side {
        Side::Forward => -1.0,
        Side::Adjoint => 1.0,
    };
    let mut beta = f64::INFINITY;
    let mut coer = f64::INFINITY;
    for v in battery {
        let hv = hilbert_t(v);
        let tv = v.like(&v.data + &(hv.data * (sgn * delta)));
        let ev = energy(v).total().sqrt();
        let et = energy(&tv).total().sqrt();
        if ev == 0.0 || et == 0.0 {
            continue;
        }
        beta = beta.min(form(blocks, side, v, &tv) / (ev * et));
        let gx = energy(v).grad_part;
        if gx > 0.0 {
            coer = coer.min(form(blocks, side, v, v) / gx);
        }
    }
    InfSup {
        delta,
        beta,
        min_coercivity: coer,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{make_coefficients, params, split_blocks};

    fn setup(name: &str, p: &[(&str, f64)]) -> (BlockSplit, Torus, ParabolicCube) {
        let a = make_coefficients(name, &params(p)).unwrap();
        let cube = ParabolicCube::new(0.0, 0.0, 0.25);
        let torus = Torus::around(&cube, 1.0 / 8.0, 20.0, 288.0).unwrap();
        (split_blocks(&a), torus, cube)
    }

    #[test]
    fn chi_profile() {
        let (_, torus, cube) = setup("identity", &[]);
        let chi = build_chi(&cube, &torus).unwrap();
        assert_eq!(chi_value(&cube, 0.0, 0.0), 1.0);
        assert_eq!(chi_value(&cube, 16.0 * cube.r + 1e-9, 0.0), 0.0);
        assert!(chi.slope_constant <= 20.0);
        let small = Torus::around(&cube, 1.0 / 8.0, 8.0, 100.0).unwrap();
        assert!(build_chi(&cube, &small).is_err());
    }

    #[test]
    fn identity_has_trivial_hodge_pair() {
        let (b, torus, cube) = setup("identity", &[]);
        let pair = solve_hodge(&b, &build_chi(&cube, &torus).unwrap()).unwrap();
        assert!(pair.phi.max_abs() < 1e-14 && pair.phi_tilde.max_abs() < 1e-14);
    }

    #[test]
    fn skew_energy_is_quadratic_in_delta() {
        let (b1, torus, cube) = setup("skew", &[("delta", 0.25)]);
        let (b2, _, _) = setup("skew", &[("delta", 0.5)]);
        let chi = build_chi(&cube, &torus).unwrap();
        let p1 = solve_hodge(&b1, &chi).unwrap();
        let p2 = solve_hodge(&b2, &chi).unwrap();
        let ratio = p2.energy_phi.total() / p1.energy_phi.total();
        assert!((ratio - 4.0).abs() < 0.2, "{ratio}");
        assert!(p1.residual_phi < 1e-10 && p1.residual_phi_tilde < 1e-10);
    }

    #[test]
    fn time_dependent_coefficients_converge() {
        let (b, torus, cube) = setup("osc", &[("omega", 8.0), ("delta", 0.3)]);
        let chi = build_chi(&cube, &torus).unwrap();
        let pair = solve_hodge(&b, &chi).unwrap();
        assert!(pair.residual_phi <= HODGE_TOL);
        let w = &test_battery(&torus, 1, 3)[0];
        let lhs = form(&b, Side::Adjoint, &pair.phi, w);
        let rhs_flux = chi.chi.like(Array2::from_shape_fn(chi.chi.data.dim(), |(j, n)| {
            b.a_pt(chi.chi.x(j), chi.chi.t(n)) * chi.chi.data[[j, n]]
        }));
        let rhs = divergence_x(&rhs_flux).dot(w);
        let scale = apply_operator(&b, Side::Adjoint, &pair.phi).l2_sq().sqrt() * w.l2_sq().sqrt();
        assert!((lhs - rhs).abs() <= 1e-8 * scale, "{lhs} {rhs}");
    }

    #[test]
    fn hidden_coercivity() {
        let (b, torus, _) = setup("skew", &[("delta", 0.5)]);
        let bat = test_battery(&torus, 4, 11);
        for side in [Side::Forward, Side::Adjoint] {
            let s = inf_sup(&b, side, &bat, 0.5);
            assert!(s.beta > 0.0, "{side:?} {}", s.beta);
            assert!(s.min_coercivity >= 1.0 - 1e-9);
        }
    }
}
