//! Boundary laboratory: Hodge pair on a torus around a cube, the resolvent
//! stack streamed layer by layer, and everything the good-set, square
//! function and θ checks consume.

use std::ops::Range;

use ndarray::{s, Array2};
use serde::Serialize;

use crate::coeffs::BlockSplit;
use crate::error::Result;
use crate::field::Field2;
use crate::fracalc::hilbert_half_derivative_t;
use crate::geometry::ParabolicCube;
use crate::hodge::{build_chi, solve_hodge, HodgePair, Side, Torus};
use crate::maximal::{max_diff_on, maximal_iterated, maximal_parabolic, MaxDiffOptions, NtStream};
use crate::resolvent::{grad_x, stack_lambdas, StackLayer};
use crate::squares::{SquareAccumulator, SquareReport};

#[derive(Debug, Clone, Serialize)]
pub struct LabConfig {
    pub cube: ParabolicCube,
    pub h: f64,
    /// Torus half-widths in units of r and r².
    pub x_half: f64,
    pub t_half: f64,
    pub per_decade: usize,
    /// Stack covers [h, stack_top r].
    pub stack_top: f64,
    pub m: usize,
    pub maxdiff: MaxDiffOptions,
    pub set_f: bool,
    pub squares: bool,
    pub compact: bool,
}

impl LabConfig {
    pub fn new(cube: ParabolicCube, h: f64) -> Self {
        LabConfig {
            cube,
            h,
            x_half: 20.0,
            t_half: 288.0,
            per_decade: 32,
            stack_top: 4.0,
            m: 2,
            maxdiff: MaxDiffOptions { rho_cap: 2.0 * cube.r, max_samples: 17 },
            set_f: true,
            squares: true,
            compact: true,
        }
    }
}

/// Torus index ranges of the half-open nodes of a cube.
pub fn cube_ranges(torus: &Torus, cube: &ParabolicCube) -> (Range<usize>, Range<usize>) {
    let xs: Vec<usize> = (0..torus.nx).filter(|&j| {
        let x = torus.x(j);
        x >= cube.x0 - cube.r - 1e-9 * torus.h && x < cube.x0 + cube.r - 1e-9 * torus.h
    }).collect();
    let ts: Vec<usize> = (0..torus.nt).filter(|&n| {
        let t = torus.t(n);
        t >= cube.t0 - cube.r * cube.r - 1e-9 * torus.k && t < cube.t0 + cube.r * cube.r - 1e-9 * torus.k
    }).collect();
    let r = |v: &[usize]| v.first().map(|&a| a..v[v.len() - 1] + 1).unwrap_or(0..0);
    (r(&xs), r(&ts))
}

/// Torus index ranges of the nodes with |x - x0| <= hx and |t - t0| <= ht.
pub fn closed_ranges(torus: &Torus, x0: f64, t0: f64, hx: f64, ht: f64) -> (Range<usize>, Range<usize>) {
    let xs: Vec<usize> = (0..torus.nx).filter(|&j| (torus.x(j) - x0).abs() <= hx + 1e-9 * torus.h).collect();
    let ts: Vec<usize> = (0..torus.nt).filter(|&n| (torus.t(n) - t0).abs() <= ht + 1e-9 * torus.k).collect();
    let r = |v: &[usize]| v.first().map(|&a| a..v[v.len() - 1] + 1).unwrap_or(0..0);
    (r(&xs), r(&ts))
}

fn crop(f: &Field2, xs: &Range<usize>, ts: &Range<usize>) -> Field2 {
    let mut out = Field2::zeros(f.x(xs.start), f.t(ts.start), f.h, f.k, xs.len(), ts.len());
    out.data.assign(&f.data.slice(s![xs.clone(), ts.clone()]));
    out
}

/// The five good-set quantities on the nodes of 16Δ.
#[derive(Debug, Clone)]
pub struct CriterionFields {
    pub xs: Range<usize>,
    pub ts: Range<usize>,
    /// M(|∇φ|²) + M(|∇φ̃|²).
    pub hl_grad: Field2,
    /// Mx Mt(|H_t D^{1/2} φ|) + Mx Mt(|H_t D^{1/2} φ̃|).
    pub iterated_half: Field2,
    /// 𝔻φ + 𝔻φ̃.
    pub max_diff: Field2,
    /// N*(∂λ P*φ) + N*(∂λ P φ̃).
    pub nstar_dl: Field2,
    /// Ñ(∇x P*φ) + Ñ(∇x P φ̃).
    pub ntilde_grad: Field2,
}

impl CriterionFields {
    pub fn fields(&self) -> [&Field2; 5] {
        [&self.hl_grad, &self.iterated_half, &self.max_diff, &self.nstar_dl, &self.ntilde_grad]
    }
}

/// Stored θ data for the sawtooth checks.
#[derive(Debug, Clone)]
pub struct ThetaRecord {
    /// max over the stack of (|θ_λ| + |θ̃_λ|)/λ on 16Δ.
    pub ratio_max: Field2,
    /// Lattice of the neighbourhood Δ dilated by the stack top.
    pub near: Field2,
    /// |∂λθ_λ| + |∂λθ̃_λ| per stack height on `near`.
    pub d_lambda: Vec<Array2<f64>>,
    /// |θ_λ| + |θ̃_λ| per stack height on `near`.
    pub theta: Vec<Array2<f64>>,
}

#[derive(Debug, Clone)]
pub struct BoundaryLab {
    pub config: LabConfig,
    pub torus: Torus,
    pub lambdas: Vec<f64>,
    pub hodge: HodgePair,
    pub criteria: Option<CriterionFields>,
    pub squares: Vec<SquareReport>,
    pub theta: Option<ThetaRecord>,
}

fn abs_sum(a: &Field2, b: &Field2) -> Array2<f64> {
    let mut out = a.data.mapv(f64::abs);
    out.zip_mut_with(&b.data, |o, &v| *o += v.abs());
    out
}

pub fn run_lab(blocks: &BlockSplit, cfg: &LabConfig) -> Result<BoundaryLab> {
    let cube = cfg.cube;
    let torus = Torus::around(&cube, cfg.h, cfg.x_half, cfg.t_half)?;
    let chi = build_chi(&cube, &torus)?;
    let hodge = solve_hodge(blocks, &chi)?;
    drop(chi);
    let lambdas = stack_lambdas(cfg.h, cfg.stack_top * cube.r, cfg.per_decade);
    let big = cube.dilate(16.0);
    let (xs, ts) = cube_ranges(&torus, &big);
    let top = lambdas[lambdas.len() - 1];
    let (nxs, nts) = closed_ranges(&torus, cube.x0, cube.t0, cube.r + top, cube.r * cube.r + top * top);

    let mut squares = if cfg.squares { Some(SquareAccumulator::new(&lambdas, cube)?) } else { None };
    let like = &hodge.phi;
    let mut streams = if cfg.set_f {
        Some([
            NtStream::with_outputs(&lambdas, like, true, false, cfg.compact),
            NtStream::with_outputs(&lambdas, like, true, false, cfg.compact),
            NtStream::with_outputs(&lambdas, like, false, true, cfg.compact),
            NtStream::with_outputs(&lambdas, like, false, true, cfg.compact),
        ])
    } else {
        None
    };
    let mut ratio_max = Array2::<f64>::zeros((xs.len(), ts.len()));
    let mut near_dl = Vec::new();
    let mut near_theta = Vec::new();

    for (i, &l) in lambdas.iter().enumerate() {
        let adj = StackLayer::compute(blocks, Side::Adjoint, l, cfg.m, &hodge.phi)?;
        let fwd = StackLayer::compute(blocks, Side::Forward, l, cfg.m, &hodge.phi_tilde)?;
        if let Some(acc) = squares.as_mut() {
            acc.add(i, &adj, &fwd, &hodge.phi, &hodge.phi_tilde);
        }
        if let Some(st) = streams.as_mut() {
            let da = adj.d_lambda();
            let df = fwd.d_lambda();
            st[0].push(&da.data);
            st[1].push(&df.data);
            st[2].push(&grad_x(&adj.w).data);
            st[3].push(&grad_x(&fwd.w).data);
            let th = abs_sum(&adj.theta(&hodge.phi), &fwd.theta(&hodge.phi_tilde));
            let sub = th.slice(s![xs.clone(), ts.clone()]);
            ratio_max.zip_mut_with(&sub, |o, &v| *o = o.max(v / l));
            near_theta.push(th.slice(s![nxs.clone(), nts.clone()]).to_owned());
            let d = abs_sum(&da, &df);
            near_dl.push(d.slice(s![nxs.clone(), nts.clone()]).to_owned());
        }
    }

    let mut criteria = None;
    let mut theta = None;
    if let Some(st) = streams {
        let [s0, s1, s2, s3] = st;
        let sum2 = |a: NtStream, b: NtStream, star: bool| {
            let (a0, a1) = a.finish();
            let (b0, b1) = b.finish();
            let (x, y) = if star { (a0.values, b0.values) } else { (a1.values, b1.values) };
            x.like(&x.data + &y.data)
        };
        let nstar = sum2(s0, s1, true);
        let ntilde = sum2(s2, s3, false);
        let sq = |v: &Field2| {
            let g = grad_x(v);
            g.like(g.data.mapv(|a| a * a))
        };
        let m1 = maximal_parabolic(&sq(&hodge.phi)).values;
        let m2 = maximal_parabolic(&sq(&hodge.phi_tilde)).values;
        let i1 = maximal_iterated(&hilbert_half_derivative_t(&hodge.phi)).values;
        let i2 = maximal_iterated(&hilbert_half_derivative_t(&hodge.phi_tilde)).values;
        let d1 = max_diff_on(&hodge.phi, cfg.maxdiff, xs.clone(), ts.clone()).values;
        let d2 = max_diff_on(&hodge.phi_tilde, cfg.maxdiff, xs.clone(), ts.clone()).values;
        let add = |a: &Field2, b: &Field2| crop(&a.like(&a.data + &b.data), &xs, &ts);
        criteria = Some(CriterionFields {
            hl_grad: add(&m1, &m2),
            iterated_half: add(&i1, &i2),
            max_diff: add(&d1, &d2),
            nstar_dl: crop(&nstar, &xs, &ts),
            ntilde_grad: crop(&ntilde, &xs, &ts),
            xs: xs.clone(),
            ts: ts.clone(),
        });
        let ratio = crop(&hodge.phi, &xs, &ts).like(ratio_max);
        theta = Some(ThetaRecord {
            ratio_max: ratio,
            near: crop(&hodge.phi, &nxs, &nts),
            d_lambda: near_dl,
            theta: near_theta,
        });
    }

    Ok(BoundaryLab {
        config: cfg.clone(),
        torus,
        lambdas,
        hodge,
        criteria,
        squares: squares.map(|a| a.finish()).unwrap_or_default(),
        theta,
    })
}

/// max over the stack of ‖P_λ 1 - 1‖∞ on both sides.
pub fn conservation_defect(blocks: &BlockSplit, torus: &Torus, lambdas: &[f64], m: usize) -> Result<f64> {
    let one = torus.field(|_, _| 1.0);
    let mut worst = 0.0f64;
    for &l in lambdas {
        for side in [Side::Forward, Side::Adjoint] {
            let w = crate::resolvent::apply_resolvent(blocks, side, l, m, &one)?;
            worst = worst.max(w.data.iter().fold(0.0f64, |a, v| a.max((v - 1.0).abs())));
        }
    }
    Ok(worst)
}
