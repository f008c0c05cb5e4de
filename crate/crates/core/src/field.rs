//! Sampled fields on boundary (x, t) lattices and on the half-space grid.

use ndarray::{Array2, Array3};
use serde::Serialize;

use crate::geometry::Grid;

/// Scalar samples on an (x, t) node lattice; `data[[j, n]]` sits at
/// (x_origin + j h, t_origin + n k).
#[derive(Debug, Clone, Serialize)]
pub struct Field2 {
    pub x_origin: f64,
    pub t_origin: f64,
    pub h: f64,
    pub k: f64,
    #[serde(skip)]
    pub data: Array2<f64>,
    /// Time direction is periodic (spectral operators and resolvent wrap).
    pub periodic_t: bool,
    /// Periodic in x (used by the boundary lab torus).
    pub periodic_x: bool,
    /// Width of the smooth taper margin applied at each end in t, if any.
    pub taper: f64,
}

pub type BoundaryField = Field2;
pub type TimeSignalField = Field2;

impl Field2 {
    pub fn zeros(x_origin: f64, t_origin: f64, h: f64, k: f64, nx: usize, nt: usize) -> Self {
        Field2 {
            x_origin,
            t_origin,
            h,
            k,
            data: Array2::zeros((nx, nt)),
            periodic_t: false,
            periodic_x: false,
            taper: 0.0,
        }
    }
    pub fn like(&self, data: Array2<f64>) -> Self {
        Field2 {
            x_origin: self.x_origin,
            t_origin: self.t_origin,
            h: self.h,
            k: self.k,
            data,
            periodic_t: self.periodic_t,
            periodic_x: self.periodic_x,
            taper: self.taper,
        }
    }
    pub fn from_fn(
        x_origin: f64,
        t_origin: f64,
        h: f64,
        k: f64,
        nx: usize,
        nt: usize,
        f: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let mut out = Self::zeros(x_origin, t_origin, h, k, nx, nt);
        for j in 0..nx {
            let x = x_origin + j as f64 * h;
            for n in 0..nt {
                out.data[[j, n]] = f(x, t_origin + n as f64 * k);
            }
        }
        out
    }
    /// Boundary samples on the lambda = 0 face of a grid.
    pub fn on_grid(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        Self::from_fn(-grid.xext, 0.0, grid.h, grid.k, grid.nx, grid.nt, f)
    }
    pub fn nx(&self) -> usize {
        self.data.dim().0
    }
    pub fn nt(&self) -> usize {
        self.data.dim().1
    }
    #[inline]
    pub fn x(&self, j: usize) -> f64 {
        self.x_origin + j as f64 * self.h
    }
    #[inline]
    pub fn t(&self, n: usize) -> f64 {
        self.t_origin + n as f64 * self.k
    }
    pub fn cell(&self) -> f64 {
        self.h * self.k
    }
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
    /// Sum of squares times the cell measure.
    pub fn l2_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>() * self.cell()
    }
    pub fn dot(&self, other: &Field2) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * self.cell()
    }
    pub fn index_of(&self, x: f64, t: f64) -> Option<(usize, usize)> {
        let qj = (x - self.x_origin) / self.h;
        let qn = (t - self.t_origin) / self.k;
        let (j, n) = (qj.round(), qn.round());
        if j < 0.0 || n < 0.0 || (qj - j).abs() > 1e-6 || (qn - n).abs() > 1e-6 {
            return None;
        }
        let (j, n) = (j as usize, n as usize);
        if j >= self.nx() || n >= self.nt() {
            None
        } else {
            Some((j, n))
        }
    }
}

/// Values on every node of a [`Grid`], indexed `[[n, j, i]]` = (t_n, x_j,
/// lambda_i), including the boundary row i = 0 and the truncation faces.
#[derive(Debug, Clone)]
pub struct InteriorField {
    pub grid: Grid,
    pub data: Array3<f64>,
    pub label: String,
    pub max_step_residual: f64,
}

impl InteriorField {
    pub fn zeros(grid: &Grid) -> Self {
        InteriorField {
            grid: grid.clone(),
            data: Array3::zeros((grid.nt, grid.nx, grid.nl + 1)),
            label: String::new(),
            max_step_residual: 0.0,
        }
    }
    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(grid);
        for n in 0..grid.nt {
            for j in 0..grid.nx {
                for i in 0..=grid.nl {
                    out.data[[n, j, i]] = f(grid.lambda(i), grid.x(j), grid.t(n));
                }
            }
        }
        out
    }
    pub fn at(&self, lambda: f64, x: f64, t: f64) -> Option<f64> {
        let i = (lambda / self.grid.h).round();
        if i < 0.0 || i as usize > self.grid.nl {
            return None;
        }
        let j = self.grid.x_index(x)?;
        let n = self.grid.t_index(t)?;
        Some(self.data[[n, j, i as usize]])
    }
}

/// Horizontal layers at arbitrary heights lambda_0 < lambda_1 < ..., each an
/// (x, t) array on a shared lattice.
#[derive(Debug, Clone)]
pub struct LayerStack {
    pub lambdas: Vec<f64>,
    pub x_origin: f64,
    pub t_origin: f64,
    pub h: f64,
    pub k: f64,
    pub layers: Vec<Array2<f64>>,
}

impl LayerStack {
    /// Rows 1..=nl of an interior field at a fixed set of time indices.
    pub fn from_interior(u: &InteriorField) -> Self {
        let g = &u.grid;
        let mut layers = Vec::with_capacity(g.nl);
        let mut lambdas = Vec::with_capacity(g.nl);
        for i in 1..=g.nl {
            let mut a = Array2::zeros((g.nx, g.nt));
            for n in 0..g.nt {
                for j in 0..g.nx {
                    a[[j, n]] = u.data[[n, j, i]];
                }
            }
            layers.push(a);
            lambdas.push(g.lambda(i));
        }
        LayerStack {
            lambdas,
            x_origin: -g.xext,
            t_origin: 0.0,
            h: g.h,
            k: g.k,
            layers,
        }
    }
    pub fn dims(&self) -> (usize, usize) {
        self.layers.first().map(|a| a.dim()).unwrap_or((0, 0))
    }
}
