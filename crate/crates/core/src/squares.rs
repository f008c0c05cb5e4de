//! Square-function integrals over a λ stack and Carleson norms of
//! half-space densities.

use serde::Serialize;

use crate::coeffs::BlockSplit;
use crate::error::{LabError, Result};
use crate::field::{Field2, InteriorField};
use crate::geometry::ParabolicCube;
use crate::hodge::{HodgePair, Side};
use crate::resolvent::StackLayer;

pub const MIN_PER_DECADE: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SquareKind {
    I,
    Ii,
    Iii,
    Iv,
    Square1,
}

impl SquareKind {
    pub const ALL: [SquareKind; 5] = [SquareKind::I, SquareKind::Ii, SquareKind::Iii, SquareKind::Iv, SquareKind::Square1];

    pub fn label(self) -> &'static str {
        match self {
            SquareKind::I => "i",
            SquareKind::Ii => "ii",
            SquareKind::Iii => "iii",
            SquareKind::Iv => "iv",
            SquareKind::Square1 => "square1",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SquareReport {
    pub kind: SquareKind,
    pub value: f64,
    pub cube: ParabolicCube,
    pub ratio: f64,
    /// |full - half-density| λ-quadrature difference.
    pub quadrature_error: f64,
}

/// Points per decade of an increasing log-spaced stack.
pub fn stack_density(lambdas: &[f64]) -> f64 {
    if lambdas.len() < 2 {
        return 0.0;
    }
    (lambdas.len() - 1) as f64 / (lambdas[lambdas.len() - 1] / lambdas[0]).log10()
}

/// Streaming accumulation of (i)-(iv) and square1, one stack height at a
/// time, with log-midpoint weights and a half-density companion sum.
#[derive(Debug, Clone)]
pub struct SquareAccumulator {
    lambdas: Vec<f64>,
    dlog: f64,
    cube: ParabolicCube,
    full: [f64; 5],
    half: [f64; 5],
}

fn sq_sum(f: &Field2) -> f64 {
    f.l2_sq()
}

impl SquareAccumulator {
    pub fn new(lambdas: &[f64], cube: ParabolicCube) -> Result<Self> {
        let got = stack_density(lambdas);
        if got + 1e-9 < MIN_PER_DECADE as f64 {
            return Err(LabError::StackTooSparse { required: MIN_PER_DECADE, got });
        }
        let dlog = (lambdas[lambdas.len() - 1] / lambdas[0]).ln() / (lambdas.len() - 1) as f64;
        Ok(SquareAccumulator { lambdas: lambdas.to_vec(), dlog, cube, full: [0.0; 5], half: [0.0; 5] })
    }

    /// Integrands at stack index `i` from the adjoint layer on φ and the
    /// forward layer on φ̃.
    pub fn add(&mut self, i: usize, adj: &StackLayer, fwd: &StackLayer, phi: &Field2, phi_tilde: &Field2) {
        let l = self.lambdas[i];
        let vals = [
            sq_sum(&adj.d_lambda()) + sq_sum(&fwd.d_lambda()),
            sq_sum(&adj.lambda_grad_d_lambda()) + sq_sum(&fwd.lambda_grad_d_lambda()),
            sq_sum(&adj.lambda_h()) + sq_sum(&fwd.lambda_h()),
            sq_sum(&adj.lambda2_h_d_lambda()) + sq_sum(&fwd.lambda2_h_d_lambda()),
            (sq_sum(&adj.theta(phi)) + sq_sum(&fwd.theta(phi_tilde))) / (l * l),
        ];
        self.add_values(i, vals);
    }

    /// Adds already integrated (x, t) values of the five integrands.
    pub fn add_values(&mut self, i: usize, vals: [f64; 5]) {
        for (q, v) in vals.iter().enumerate() {
            self.full[q] += v * self.dlog;
            if i % 2 == 0 {
                self.half[q] += v * 2.0 * self.dlog;
            }
        }
    }

    pub fn finish(&self) -> Vec<SquareReport> {
        let vol = self.cube.measure();
        SquareKind::ALL
            .iter()
            .enumerate()
            .map(|(q, &kind)| SquareReport {
                kind,
                value: self.full[q],
                cube: self.cube,
                ratio: self.full[q] / vol,
                quadrature_error: (self.full[q] - self.half[q]).abs(),
            })
            .collect()
    }
}

/// All five square functionals of a Hodge pair over a stack, computed layer
/// by layer.
pub fn square_suite(blocks: &BlockSplit, hodge: &HodgePair, lambdas: &[f64], m: usize) -> Result<Vec<SquareReport>> {
    let mut acc = SquareAccumulator::new(lambdas, hodge.cube)?;
    for (i, &l) in lambdas.iter().enumerate() {
        let adj = StackLayer::compute(blocks, Side::Adjoint, l, m, &hodge.phi)?;
        let fwd = StackLayer::compute(blocks, Side::Forward, l, m, &hodge.phi_tilde)?;
        acc.add(i, &adj, &fwd, &hodge.phi, &hodge.phi_tilde);
    }
    Ok(acc.finish())
}

pub fn square_functional(
    kind: SquareKind,
    blocks: &BlockSplit,
    hodge: &HodgePair,
    lambdas: &[f64],
    m: usize,
) -> Result<SquareReport> {
    Ok(square_suite(blocks, hodge, lambdas, m)?.into_iter().find(|r| r.kind == kind).unwrap())
}

pub fn square1_functional(blocks: &BlockSplit, hodge: &HodgePair, lambdas: &[f64], m: usize) -> Result<SquareReport> {
    square_functional(SquareKind::Square1, blocks, hodge, lambdas, m)
}

#[derive(Debug, Clone, Serialize)]
pub struct CarlesonReport {
    pub density: String,
    pub sup: f64,
    pub argmax: ParabolicCube,
    pub ratios: Vec<(ParabolicCube, f64)>,
}

/// ∫_0^ℓ ∬_Δ density dλ dx dt / |Δ ∩ grid| with ℓ = r(Δ): piecewise-linear
/// in λ between rows, half-open node cells in (x, t).
pub fn carleson_ratio(density: &InteriorField, cube: &ParabolicCube) -> Option<f64> {
    let g = &density.grid;
    let ell = cube.r;
    let mut cells = Vec::new();
    for n in 0..g.nt {
        for j in 0..g.nx {
            if cube.contains_half_open(g.x(j), g.t(n)) {
                cells.push((n, j));
            }
        }
    }
    if cells.is_empty() {
        return None;
    }
    let top = ell.min(g.lmax);
    let full = (top / g.h + 1e-9).floor() as usize;
    let frac = top / g.h - full as f64;
    let mut total = 0.0;
    for &(n, j) in &cells {
        let row = |i: usize| density.data[[n, j, i.min(g.nl)]];
        let mut s = 0.0;
        for i in 0..full {
            s += 0.5 * (row(i) + row(i + 1)) * g.h;
        }
        if frac > 1e-9 && full < g.nl {
            let end = row(full) + frac * (row(full + 1) - row(full));
            s += 0.5 * (row(full) + end) * frac * g.h;
        }
        total += s;
    }
    let cell = g.h * g.k;
    Some(total * cell / (cells.len() as f64 * cell))
}

pub fn carleson_norm(density: &InteriorField, cubes: &[ParabolicCube], id: &str) -> CarlesonReport {
    let mut ratios = Vec::new();
    let mut sup = 0.0;
    let mut argmax = cubes.first().copied().unwrap_or(ParabolicCube::new(0.0, 0.0, 0.0));
    for c in cubes {
        if let Some(r) = carleson_ratio(density, c) {
            if r > sup || ratios.is_empty() {
                sup = r;
                argmax = *c;
            }
            ratios.push((*c, r));
        }
    }
    CarlesonReport { density: id.to_string(), sup, argmax, ratios }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_grid;
    use crate::measure::dyadic_family;

    #[test]
    fn linear_density_closed_form() {
        let g = build_grid(1.0 / 16.0, 1.0, 1.0, 2.0).unwrap();
        let d = InteriorField::from_fn(&g, |l, _, _| l);
        let root = ParabolicCube::new(0.0, 1.0, 0.5);
        let cubes: Vec<_> = dyadic_family(&root, 2).into_iter().map(|(_, c)| c).collect();
        let rep = carleson_norm(&d, &cubes, "lambda");
        for (c, r) in &rep.ratios {
            assert!((r - c.r * c.r / 2.0).abs() < 1e-12, "{} {}", c.r, r);
        }
        assert!((rep.sup - 0.125).abs() < 1e-12);
        let z = InteriorField::zeros(&g);
        assert_eq!(carleson_norm(&z, &cubes, "zero").sup, 0.0);
    }

    #[test]
    fn sparse_stack_rejected() {
        let l: Vec<f64> = (0..10).map(|i| 0.01 * 10f64.powf(i as f64 / 8.0)).collect();
        assert!(matches!(
            SquareAccumulator::new(&l, ParabolicCube::new(0.0, 0.0, 1.0)),
            Err(LabError::StackTooSparse { .. })
        ));
    }
}
