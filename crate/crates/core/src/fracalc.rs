//! Fourier multipliers in t: D_t^{1/2} (symbol i|τ|^{1/2}), the Hilbert
//! transform H_t (symbol -i sgn τ) and the energy seminorm.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::field::Field2;

/// Complex samples sharing a real field's lattice metadata.
#[derive(Debug, Clone)]
pub struct ComplexSignal {
    pub x_origin: f64,
    pub t_origin: f64,
    pub h: f64,
    pub k: f64,
    pub data: Array2<Complex64>,
}

impl ComplexSignal {
    pub fn from_real(v: &Field2) -> Self {
        ComplexSignal {
            x_origin: v.x_origin,
            t_origin: v.t_origin,
            h: v.h,
            k: v.k,
            data: v.data.mapv(|a| Complex64::new(a, 0.0)),
        }
    }
    pub fn re(&self) -> Array2<f64> {
        self.data.mapv(|z| z.re)
    }
    pub fn im(&self) -> Array2<f64> {
        self.data.mapv(|z| z.im)
    }
    pub fn max_abs_diff(&self, other: &ComplexSignal) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .fold(0.0, |m, (a, b)| m.max((a - b).norm()))
    }
}

/// Angular frequencies in FFT order for nt samples of spacing k.
pub fn frequencies(nt: usize, k: f64) -> Vec<f64> {
    let period = nt as f64 * k;
    (0..nt)
        .map(|m| {
            let mm = if m <= nt / 2 { m as f64 } else { m as f64 - nt as f64 };
            2.0 * PI * mm / period
        })
        .collect()
}

fn is_nyquist(m: usize, nt: usize) -> bool {
    nt % 2 == 0 && m == nt / 2
}

/// Apply a multiplier row by row (each x row is one periodic signal in t).
pub fn apply_multiplier(v: &ComplexSignal, symbol: impl Fn(f64, bool) -> Complex64) -> ComplexSignal {
    let (nx, nt) = v.data.dim();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(nt);
    let inv = planner.plan_fft_inverse(nt);
    let taus = frequencies(nt, v.k);
    let mult: Vec<Complex64> = (0..nt).map(|m| symbol(taus[m], is_nyquist(m, nt))).collect();
    let mut out = v.clone();
    let mut buf = vec![Complex64::new(0.0, 0.0); nt];
    let scale = 1.0 / nt as f64;
    for j in 0..nx {
        for n in 0..nt {
            buf[n] = v.data[[j, n]];
        }
        fwd.process(&mut buf);
        for (b, m) in buf.iter_mut().zip(&mult) {
            *b *= m * scale;
        }
        inv.process(&mut buf);
        for n in 0..nt {
            out.data[[j, n]] = buf[n];
        }
    }
    out
}

pub fn half_derivative_symbol(tau: f64) -> Complex64 {
    Complex64::new(0.0, tau.abs().sqrt())
}

pub fn hilbert_symbol(tau: f64, nyquist: bool) -> Complex64 {
    if tau == 0.0 || nyquist {
        Complex64::new(0.0, 0.0)
    } else {
        Complex64::new(0.0, -tau.signum())
    }
}

pub fn half_derivative_c(v: &ComplexSignal) -> ComplexSignal {
    apply_multiplier(v, |tau, _| half_derivative_symbol(tau))
}

pub fn hilbert_c(v: &ComplexSignal) -> ComplexSignal {
    apply_multiplier(v, hilbert_symbol)
}

/// Spectral ∂t (symbol iτ, Nyquist dropped).
pub fn dt_c(v: &ComplexSignal) -> ComplexSignal {
    apply_multiplier(v, |tau, ny| if ny { Complex64::new(0.0, 0.0) } else { Complex64::new(0.0, tau) })
}

/// D_t^{1/2} v. The output of a real signal is purely imaginary.
pub fn half_derivative_t(v: &Field2) -> ComplexSignal {
    half_derivative_c(&ComplexSignal::from_real(v))
}

/// H_t v; real in, real out.
pub fn hilbert_t(v: &Field2) -> Field2 {
    v.like(hilbert_c(&ComplexSignal::from_real(v)).re())
}

/// H_t D_t^{1/2} v. The symbol |τ|^{1/2} sgn τ is real and odd, so a real
/// signal goes to a purely imaginary one; the imaginary part is returned.
pub fn hilbert_half_derivative_t(v: &Field2) -> Field2 {
    let w = apply_multiplier(&ComplexSignal::from_real(v), |tau, ny| {
        hilbert_symbol(tau, ny) * half_derivative_symbol(tau)
    });
    v.like(w.im())
}

/// Multiply by a quintic ramp over `margin` at both ends of the t window and
/// flag the field as periodic.
pub fn taper_t(v: &mut Field2, margin: f64) {
    let nt = v.nt();
    let span = (nt as f64) * v.k;
    for n in 0..nt {
        let s = n as f64 * v.k;
        let d = s.min(span - s);
        let w = smoothstep(d / margin);
        v.data.column_mut(n).mapv_inplace(|a| a * w);
    }
    v.taper = margin;
    v.periodic_t = true;
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

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnergySeminorm {
    pub grad_part: f64,
    pub half_part: f64,
}

impl EnergySeminorm {
    pub fn total(&self) -> f64 {
        self.grad_part + self.half_part
    }
}

/// ‖∂x v‖² (forward differences; wrapped when periodic in x) and
/// ‖D^{1/2}v‖², both summed over the untapered core.
pub fn energy_seminorm(v: &Field2) -> EnergySeminorm {
    let (nx, nt) = v.data.dim();
    let core = |n: usize| {
        if v.taper <= 0.0 {
            return true;
        }
        let s = n as f64 * v.k;
        let span = nt as f64 * v.k;
        s >= v.taper && s <= span - v.taper
    };
    let cell = v.h * v.k;
    let mut grad = 0.0;
    let jmax = if v.periodic_x { nx } else { nx - 1 };
    for j in 0..jmax {
        let jp = (j + 1) % nx;
        for n in 0..nt {
            if core(n) {
                let d = (v.data[[jp, n]] - v.data[[j, n]]) / v.h;
                grad += d * d * cell;
            }
        }
    }
    let dh = half_derivative_t(v);
    let mut half = 0.0;
    for j in 0..nx {
        for n in 0..nt {
            if core(n) {
                half += dh.data[[j, n]].norm_sqr() * cell;
            }
        }
    }
    EnergySeminorm {
        grad_part: grad,
        half_part: half,
    }
}

/// Σ_τ |τ| |v̂(τ)|² scaled to match the nodal quadrature of |D^{1/2}v|².
pub fn half_energy_parseval(v: &Field2) -> f64 {
    let (nx, nt) = v.data.dim();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(nt);
    let taus = frequencies(nt, v.k);
    let mut buf = vec![Complex64::new(0.0, 0.0); nt];
    let mut acc = 0.0;
    for j in 0..nx {
        for n in 0..nt {
            buf[n] = Complex64::new(v.data[[j, n]], 0.0);
        }
        fwd.process(&mut buf);
        for (b, tau) in buf.iter().zip(&taus) {
            acc += tau.abs() * b.norm_sqr();
        }
    }
    acc * v.h * v.k / nt as f64
}
