//! Resolvents P_λ = (1 + λ²H∥)^{-m} and P*_λ by causal backward-Euler
//! marching in t with a periodic tridiagonal solve in x per step.

use ndarray::Array2;
use serde::Serialize;

use crate::coeffs::BlockSplit;
use crate::error::{LabError, Result};
use crate::field::Field2;
use crate::hodge::{HodgePair, Side};
use crate::linalg::CyclicFactor;

pub const BURN_IN_TOL: f64 = 1e-8;

/// Burn-in length 10 λ² ln(1/tol).
pub fn burn_in(lambda: f64, tol: f64) -> f64 {
    10.0 * lambda * lambda * (1.0 / tol).ln()
}

/// Log-spaced λ values, `per_decade` per decade, from lo up to hi inclusive.
pub fn stack_lambdas(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let n = ((hi / lo).log10() * per_decade as f64).ceil().max(1.0) as usize;
    (0..=n)
        .map(|i| lo * (hi / lo).powf(i as f64 / n as f64))
        .collect()
}

struct StepMatrix {
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
}

/// Rows of (1 + λ²/k + λ² L_n) with L = -D-(a D+): periodic in x, or
/// zero-flux at the ends otherwise.
fn step_matrix(blocks: &BlockSplit, v: &Field2, lambda: f64, t: f64) -> StepMatrix {
    let nx = v.nx();
    let l2 = lambda * lambda;
    let h2 = v.h * v.h;
    let node: Vec<f64> = (0..nx).map(|j| blocks.a_tt(v.x(j), t)).collect();
    let face: Vec<f64> = (0..nx)
        .map(|j| {
            if j + 1 < nx {
                0.5 * (node[j] + node[j + 1])
            } else if v.periodic_x {
                0.5 * (node[j] + node[0])
            } else {
                0.0
            }
        })
        .collect();
    let mut a = vec![0.0; nx];
    let mut b = vec![0.0; nx];
    let mut c = vec![0.0; nx];
    for j in 0..nx {
        let fm = if j > 0 {
            face[j - 1]
        } else if v.periodic_x {
            face[nx - 1]
        } else {
            0.0
        };
        let fp = face[j];
        a[j] = -l2 * fm / h2;
        c[j] = -l2 * fp / h2;
        b[j] = 1.0 + l2 / v.k + l2 * (fm + fp) / h2;
    }
    StepMatrix { a, b, c }
}

enum Solver {
    Cyclic(CyclicFactor),
    Plain(StepMatrix),
}

impl Solver {
    fn new(m: StepMatrix, periodic: bool) -> Result<Self> {
        if periodic {
            Ok(Solver::Cyclic(CyclicFactor::new(&m.a, &m.b, &m.c)?))
        } else {
            Ok(Solver::Plain(m))
        }
    }
    fn solve(&self, d: &mut [f64], scratch: &mut Vec<f64>) -> Result<()> {
        match self {
            Solver::Cyclic(f) => {
                f.solve(d);
                Ok(())
            }
            Solver::Plain(m) => crate::linalg::tridiag_solve(&m.a, &m.b, &m.c, d, scratch),
        }
    }
}

/// One order-1 solve of (1 + λ² H) w = v (Forward) or (1 + λ² H*) w = v
/// (Adjoint, marching backward in t).
pub fn resolve_once(blocks: &BlockSplit, side: Side, lambda: f64, v: &Field2) -> Result<Field2> {
    if !(lambda > 0.0) {
        return Err(LabError::BadParameter(format!("lambda = {lambda} must be positive")));
    }
    let (nx, nt) = v.data.dim();
    let nb = (burn_in(lambda, BURN_IN_TOL) / v.k).ceil() as usize;
    if !v.periodic_t && nb >= nt {
        return Err(LabError::BurnIn {
            burn_in: burn_in(lambda, BURN_IN_TOL),
            available: nt as f64 * v.k,
        });
    }
    let frozen = blocks.field().a_tt_time_independent();
    let coupling = lambda * lambda / v.k;
    let mut fixed: Option<Solver> = None;
    if frozen {
        fixed = Some(Solver::new(step_matrix(blocks, v, lambda, v.t(0)), v.periodic_x)?);
    }
    let mut out = v.like(Array2::zeros((nx, nt)));
    let mut w = vec![0.0; nx];
    let mut d = vec![0.0; nx];
    let mut scratch = Vec::with_capacity(nx);
    let total = if v.periodic_t { nb + nt } else { nt };
    let start = if v.periodic_t { (nt - nb % nt) % nt } else { 0 };
    for step in 0..total {
        let off = (start + step) % nt;
        let n = match side {
            Side::Forward => off,
            Side::Adjoint => nt - 1 - off,
        };
        for j in 0..nx {
            d[j] = v.data[[j, n]] + coupling * w[j];
        }
        match &fixed {
            Some(s) => s.solve(&mut d, &mut scratch)?,
            None => Solver::new(step_matrix(blocks, v, lambda, v.t(n)), v.periodic_x)?.solve(&mut d, &mut scratch)?,
        }
        w.copy_from_slice(&d);
        if !v.periodic_t || step >= nb {
            for j in 0..nx {
                out.data[[j, n]] = w[j];
            }
        }
    }
    if !v.periodic_t {
        // burn-in discarded: entry-side columns carry no valid data
        let keep: Vec<usize> = match side {
            Side::Forward => (nb..nt).collect(),
            Side::Adjoint => (0..nt - nb).collect(),
        };
        let mut cropped = Array2::zeros((nx, keep.len()));
        for (c, &n) in keep.iter().enumerate() {
            cropped.column_mut(c).assign(&out.data.column(n));
        }
        let t0 = v.t(keep[0]);
        let mut f = v.like(cropped);
        f.t_origin = t0;
        return Ok(f);
    }
    Ok(out)
}

/// w_1, ..., w_m with w_i = (1 + λ²H)^{-i} v.
pub fn resolvent_chain(blocks: &BlockSplit, side: Side, lambda: f64, m: usize, v: &Field2) -> Result<Vec<Field2>> {
    if m == 0 {
        return Err(LabError::BadParameter("resolvent order must be >= 1".into()));
    }
    let mut out: Vec<Field2> = Vec::with_capacity(m);
    for i in 0..m {
        let src = if i == 0 { v } else { &out[i - 1] };
        let w = resolve_once(blocks, side, lambda, src)?;
        out.push(w);
    }
    Ok(out)
}

pub fn apply_resolvent(blocks: &BlockSplit, side: Side, lambda: f64, m: usize, v: &Field2) -> Result<Field2> {
    Ok(resolvent_chain(blocks, side, lambda, m, v)?.pop().unwrap())
}

/// ∂λ P_λ v = -(2m/λ)(w - P̃ w) with w = P_λ v and P̃ the order-1 resolvent.
pub fn d_lambda_resolvent(blocks: &BlockSplit, side: Side, lambda: f64, m: usize, v: &Field2) -> Result<Field2> {
    let w = apply_resolvent(blocks, side, lambda, m, v)?;
    let pw = resolve_once(blocks, side, lambda, &w)?;
    Ok(w.like((&w.data - &pw.data) * (-2.0 * m as f64 / lambda)))
}

/// All stack quantities of one side at one λ.
#[derive(Debug, Clone)]
pub struct StackLayer {
    pub lambda: f64,
    pub side: Side,
    pub m: usize,
    /// (1 + λ²H)^{-(m-1)} v (v itself when m = 1).
    pub w_prev: Field2,
    /// P_λ v.
    pub w: Field2,
    /// P̃ P_λ v.
    pub pw: Field2,
}

impl StackLayer {
    pub fn compute(blocks: &BlockSplit, side: Side, lambda: f64, m: usize, v: &Field2) -> Result<Self> {
        let mut chain = resolvent_chain(blocks, side, lambda, m, v)?;
        let w = chain.pop().unwrap();
        let w_prev = chain.pop().unwrap_or_else(|| v.clone());
        let pw = resolve_once(blocks, side, lambda, &w)?;
        Ok(StackLayer { lambda, side, m, w_prev, w, pw })
    }
    fn scale(&self) -> f64 {
        -2.0 * self.m as f64 / self.lambda
    }
    /// ∂λ P_λ v.
    pub fn d_lambda(&self) -> Field2 {
        self.w.like((&self.w.data - &self.pw.data) * self.scale())
    }
    /// λ H P_λ v = (w_{m-1} - w)/λ.
    pub fn lambda_h(&self) -> Field2 {
        self.w.like((&self.w_prev.data - &self.w.data) / self.lambda)
    }
    /// λ² H ∂λ P_λ v = -(2m/λ)(w_{m-1} - 2w + P̃w).
    pub fn lambda2_h_d_lambda(&self) -> Field2 {
        let d = &self.w_prev.data - &(&self.w.data * 2.0) + &self.pw.data;
        self.w.like(d * self.scale())
    }
    /// λ ∇x ∂λ P_λ v by centred differences.
    pub fn lambda_grad_d_lambda(&self) -> Field2 {
        let d = self.d_lambda();
        let g = grad_x(&d);
        g.like(g.data.mapv(|v| v * self.lambda))
    }
    /// v - P_λ v.
    pub fn theta(&self, v: &Field2) -> Field2 {
        v.like(&v.data - &self.w.data)
    }
}

/// Centred x-difference (periodic or one-sided at the ends).
pub fn grad_x(v: &Field2) -> Field2 {
    let (nx, nt) = v.data.dim();
    let mut out = Array2::zeros((nx, nt));
    for j in 0..nx {
        let (jm, jp, w) = if v.periodic_x {
            ((j + nx - 1) % nx, (j + 1) % nx, 2.0 * v.h)
        } else if j == 0 {
            (0, 1, v.h)
        } else if j + 1 == nx {
            (j - 1, j, v.h)
        } else {
            (j - 1, j + 1, 2.0 * v.h)
        };
        for n in 0..nt {
            out[[j, n]] = (v.data[[jp, n]] - v.data[[jm, n]]) / w;
        }
    }
    v.like(out)
}

/// θ_λ = φ - P*_λ φ and θ̃_λ = φ̃ - P_λ φ̃.
pub fn theta(blocks: &BlockSplit, lambda: f64, m: usize, hodge: &HodgePair) -> Result<(Field2, Field2)> {
    let a = apply_resolvent(blocks, Side::Adjoint, lambda, m, &hodge.phi)?;
    let b = apply_resolvent(blocks, Side::Forward, lambda, m, &hodge.phi_tilde)?;
    Ok((
        hodge.phi.like(&hodge.phi.data - &a.data),
        hodge.phi_tilde.like(&hodge.phi_tilde.data - &b.data),
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelFit {
    pub lambda: f64,
    pub m: usize,
    pub source: (f64, f64),
    /// Least-squares fit of log K against the envelope shape.
    pub c_fit: f64,
    pub big_c_fit: f64,
    /// Smallest C with K <= C env(c_env) everywhere, c_env = c_fit / 2.
    pub big_c_envelope: f64,
    pub causality_mass: f64,
    pub points: usize,
}

/// Envelope shape λ^{-2m} τ^{m-3/2} e^{-τ/λ²} (n = 1) without the x factor.
pub fn envelope_shape(lambda: f64, m: usize, tau: f64) -> f64 {
    lambda.powi(-2 * m as i32) * tau.powf(m as f64 - 1.5) * (-tau / (lambda * lambda)).exp()
}

/// Kernel columns for point sources on a periodic lattice `like`, with a
/// log-linear fit against the Gaussian envelope.
pub fn kernel_gaussian_probe(
    blocks: &BlockSplit,
    side: Side,
    lambda: f64,
    m: usize,
    like: &Field2,
    sources: &[(f64, f64)],
) -> Result<Vec<KernelFit>> {
    let mut fits = Vec::new();
    let (nx, nt) = like.data.dim();
    for &(y, s) in sources {
        let (js, ns) = like
            .index_of(y, s)
            .ok_or_else(|| LabError::OutOfDomain(format!("source ({y}, {s}) is not a lattice node")))?;
        let mut v = like.like(Array2::zeros((nx, nt)));
        v.data[[js, ns]] = 1.0 / (like.h * like.k);
        let k = apply_resolvent(blocks, side, lambda, m, &v)?;
        let peak = k.data.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let mut total = 0.0;
        let mut wrong = 0.0;
        let mut pts: Vec<(f64, f64, f64)> = Vec::new();
        for j in 0..nx {
            let mut dx = (j as f64 - js as f64) * like.h;
            if like.periodic_x {
                let span = nx as f64 * like.h;
                dx -= span * (dx / span).round();
            }
            for n in 0..nt {
                let val = k.data[[j, n]];
                total += val.abs();
                let lag = match side {
                    Side::Forward => n as isize - ns as isize,
                    Side::Adjoint => ns as isize - n as isize,
                };
                if lag < 0 {
                    wrong += val.abs();
                    continue;
                }
                let tau = (lag as f64 + 0.5) * like.k;
                if val > 1e-6 * peak && lag > 0 {
                    pts.push((dx * dx / tau, val, tau));
                }
            }
        }
        let (c_fit, big_c_fit) = fit_envelope(&pts, lambda, m);
        let c_env = 0.5 * c_fit.max(0.0);
        let big_c_envelope = pts
            .iter()
            .map(|&(z, val, tau)| val / (envelope_shape(lambda, m, tau) * (-c_env * z).exp()))
            .fold(0.0, f64::max);
        fits.push(KernelFit {
            lambda,
            m,
            source: (y, s),
            c_fit,
            big_c_fit,
            big_c_envelope,
            causality_mass: if total > 0.0 { wrong / total } else { 0.0 },
            points: pts.len(),
        });
    }
    Ok(fits)
}

fn fit_envelope(pts: &[(f64, f64, f64)], lambda: f64, m: usize) -> (f64, f64) {
    if pts.len() < 2 {
        return (f64::NAN, f64::NAN);
    }
    let n = pts.len() as f64;
    let (mut sz, mut sy, mut szz, mut szy) = (0.0, 0.0, 0.0, 0.0);
    for &(z, val, tau) in pts {
        let y = (val / envelope_shape(lambda, m, tau)).ln();
        sz += z;
        sy += y;
        szz += z * z;
        szy += z * y;
    }
    let slope = (n * szy - sz * sy) / (n * szz - sz * sz);
    let icpt = (sy - slope * sz) / n;
    (-slope, icpt.exp())
}
