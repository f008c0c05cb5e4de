//! Coefficient families A(x, t) for the half-space operator, ellipticity
//! sampling and the block split.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{LabError, Result};

/// 2x2 matrix indexed (lambda, x): row/column 0 is the normal direction.
pub type Mat2 = [[f64; 2]; 2];

pub const EXACT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Family {
    Identity,
    Skew { delta: f64 },
    Checker { r: f64, delta: f64 },
    Osc { omega: f64, delta: f64 },
    Constant { a: Mat2 },
}

#[derive(Debug, Clone, Serialize)]
pub struct CoefficientField {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    pub dim: usize,
    pub family: Family,
    pub kappa: f64,
    pub big_c: f64,
}

/// Sample points and direction count used by [`verify_ellipticity`].
#[derive(Debug, Clone)]
pub struct Sampler {
    pub x_range: (f64, f64),
    pub t_range: (f64, f64),
    pub nx: usize,
    pub nt: usize,
    pub directions: usize,
}

impl Default for Sampler {
    fn default() -> Self {
        Sampler {
            x_range: (-4.0, 4.0),
            t_range: (-4.0, 4.0),
            nx: 65,
            nt: 65,
            directions: 10_000,
        }
    }
}

impl Sampler {
    pub fn points(&self) -> Vec<(f64, f64)> {
        let lin = |(a, b): (f64, f64), n: usize, i: usize| {
            if n <= 1 {
                0.5 * (a + b)
            } else {
                a + (b - a) * i as f64 / (n - 1) as f64
            }
        };
        let mut pts = Vec::with_capacity(self.nx * self.nt);
        for i in 0..self.nx {
            for j in 0..self.nt {
                pts.push((lin(self.x_range, self.nx, i), lin(self.t_range, self.nt, j)));
            }
        }
        pts
    }
}

fn checker_sign(x: f64, t: f64, r: f64) -> f64 {
    let cell = (x / r).floor() as i64 + (t / (r * r)).floor() as i64;
    if cell.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

impl Family {
    fn eval(&self, x: f64, t: f64) -> Mat2 {
        match *self {
            Family::Identity => [[1.0, 0.0], [0.0, 1.0]],
            Family::Skew { delta } => [[1.0, delta], [-delta, 1.0]],
            Family::Checker { r, delta } => {
                let s = checker_sign(x, t, r) * delta;
                [[1.0, s], [-s, 1.0]]
            }
            Family::Osc { omega, delta } => {
                let d = 1.0 + delta * (omega * x).sin() * (omega * t).sin();
                [[d, delta], [-delta, d]]
            }
            Family::Constant { a } => a,
        }
    }
}

impl CoefficientField {
    /// A(x, t). There is no lambda argument: coefficients are independent of
    /// the normal variable.
    pub fn eval(&self, x: f64, t: f64) -> Mat2 {
        self.family.eval(x, t)
    }

    pub fn time_independent(&self) -> bool {
        !matches!(self.family, Family::Checker { .. } | Family::Osc { .. })
    }

    /// True when the tangential block A_xx does not depend on t.
    pub fn a_tt_time_independent(&self) -> bool {
        !matches!(self.family, Family::Osc { .. })
    }
}

fn param(params: &BTreeMap<String, f64>, key: &str, family: &str) -> Result<f64> {
    params.get(key).copied().ok_or_else(|| {
        LabError::BadParameter(format!("family `{family}` requires parameter `{key}`"))
    })
}

fn check_known(params: &BTreeMap<String, f64>, allowed: &[&str], family: &str) -> Result<()> {
    for k in params.keys() {
        if !allowed.contains(&k.as_str()) {
            return Err(LabError::BadParameter(format!(
                "family `{family}` has no parameter `{k}`"
            )));
        }
    }
    for (k, v) in params {
        if !v.is_finite() {
            return Err(LabError::BadParameter(format!("parameter `{k}` is not finite")));
        }
    }
    Ok(())
}

/// Instantiate a built-in family and attach its sampled ellipticity constants.
pub fn make_coefficients(name: &str, params: &BTreeMap<String, f64>) -> Result<CoefficientField> {
    make_coefficients_with(name, params, &Sampler::default())
}

pub fn make_coefficients_with(
    name: &str,
    params: &BTreeMap<String, f64>,
    sampler: &Sampler,
) -> Result<CoefficientField> {
    let family = match name {
        "identity" => {
            check_known(params, &[], name)?;
            Family::Identity
        }
        "skew" => {
            check_known(params, &["delta"], name)?;
            Family::Skew {
                delta: param(params, "delta", name)?,
            }
        }
        "checker" => {
            check_known(params, &["r", "delta"], name)?;
            let r = param(params, "r", name)?;
            if r <= 0.0 {
                return Err(LabError::BadParameter("checker cell scale r must be > 0".into()));
            }
            Family::Checker {
                r,
                delta: param(params, "delta", name)?,
            }
        }
        "osc" => {
            check_known(params, &["omega", "delta"], name)?;
            Family::Osc {
                omega: param(params, "omega", name)?,
                delta: param(params, "delta", name)?,
            }
        }
        "constant" => {
            check_known(params, &["a11", "a12", "a21", "a22"], name)?;
            Family::Constant {
                a: [
                    [param(params, "a11", name)?, param(params, "a12", name)?],
                    [param(params, "a21", name)?, param(params, "a22", name)?],
                ],
            }
        }
        other => return Err(LabError::UnknownFamily(other.to_string())),
    };
    let mut field = CoefficientField {
        name: name.to_string(),
        params: params.clone(),
        dim: 1,
        family,
        kappa: 1.0,
        big_c: 1.0,
    };
    let (kappa, big_c) = verify_ellipticity(&field, sampler)?;
    field.kappa = kappa;
    field.big_c = big_c;
    Ok(field)
}

/// Sampled (kappa_hat, bigC_hat). For each sample point the Rayleigh quotient
/// is minimised over `directions` unit vectors on the half circle; the
/// bilinear magnitude |A xi . zeta| is maximised with zeta aligned to A xi.
pub fn verify_ellipticity(field: &CoefficientField, sampler: &Sampler) -> Result<(f64, f64)> {
    if field.dim != 1 {
        return Err(LabError::UnsupportedDimension(field.dim));
    }
    let nd = sampler.directions.max(1);
    let dirs: Vec<[f64; 2]> = (0..nd)
        .map(|i| {
            let th = PI * i as f64 / nd as f64;
            [th.cos(), th.sin()]
        })
        .collect();
    let mut kappa = f64::INFINITY;
    let mut big_c: f64 = 0.0;
    let mut witness = (0.0, 0.0, [1.0, 0.0]);
    for (x, t) in sampler.points() {
        let a = field.eval(x, t);
        for xi in &dirs {
            let ax = [
                a[0][0] * xi[0] + a[0][1] * xi[1],
                a[1][0] * xi[0] + a[1][1] * xi[1],
            ];
            let q = xi[0] * ax[0] + xi[1] * ax[1];
            if q < kappa {
                kappa = q;
                witness = (x, t, *xi);
            }
            big_c = big_c.max((ax[0] * ax[0] + ax[1] * ax[1]).sqrt());
        }
    }
    if kappa <= EXACT_TOL {
        return Err(LabError::NonElliptic {
            x: witness.0,
            t: witness.1,
            xi: witness.2,
            kappa_hat: kappa,
        });
    }
    Ok((kappa, big_c))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Blocks {
    pub a_pp: f64,
    pub a_pt: f64,
    pub a_tp: f64,
    pub a_tt: f64,
}

impl Blocks {
    pub fn reassemble(&self) -> Mat2 {
        [[self.a_pp, self.a_pt], [self.a_tp, self.a_tt]]
    }
}

/// Block view of a coefficient field: A_⊥⊥, A_⊥∥, A_∥⊥, A_∥∥.
#[derive(Debug, Clone)]
pub struct BlockSplit {
    field: CoefficientField,
}

impl BlockSplit {
    pub fn at(&self, x: f64, t: f64) -> Blocks {
        let a = self.field.eval(x, t);
        Blocks {
            a_pp: a[0][0],
            a_pt: a[0][1],
            a_tp: a[1][0],
            a_tt: a[1][1],
        }
    }
    pub fn a_pp(&self, x: f64, t: f64) -> f64 {
        self.at(x, t).a_pp
    }
    pub fn a_pt(&self, x: f64, t: f64) -> f64 {
        self.at(x, t).a_pt
    }
    pub fn a_tp(&self, x: f64, t: f64) -> f64 {
        self.at(x, t).a_tp
    }
    pub fn a_tt(&self, x: f64, t: f64) -> f64 {
        self.at(x, t).a_tt
    }
    pub fn field(&self) -> &CoefficientField {
        &self.field
    }
}

pub fn split_blocks(field: &CoefficientField) -> BlockSplit {
    BlockSplit {
        field: field.clone(),
    }
}

/// Convenience: parameter map from pairs.
pub fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// The standard family set: identity, skew(0.5), checker(1/8, 0.5),
/// osc(8, 0.3).
pub fn builtin_families() -> Vec<CoefficientField> {
    [
        ("identity", params(&[])),
        ("skew", params(&[("delta", 0.5)])),
        ("checker", params(&[("r", 0.125), ("delta", 0.5)])),
        ("osc", params(&[("omega", 8.0), ("delta", 0.3)])),
    ]
    .iter()
    .map(|(n, p)| make_coefficients(n, p).expect("built-in families are elliptic"))
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_constants() {
        let f = make_coefficients("identity", &params(&[])).unwrap();
        assert!((f.kappa - 1.0).abs() < EXACT_TOL);
        assert!((f.big_c - 1.0).abs() < EXACT_TOL);
    }

    #[test]
    fn skew_half_has_unit_kappa() {
        let f = make_coefficients("skew", &params(&[("delta", 0.5)])).unwrap();
        assert!((f.kappa - 1.0).abs() < 1e-12);
    }

    #[test]
    fn skew_one_norm() {
        let f = make_coefficients("skew", &params(&[("delta", 1.0)])).unwrap();
        assert!((f.kappa - 1.0).abs() < 1e-12);
        assert!((f.big_c - 2f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn osc_kappa_floor() {
        let f = make_coefficients("osc", &params(&[("omega", 8.0), ("delta", 0.3)])).unwrap();
        assert!(f.kappa >= 0.7 - 1e-12);
        assert!(f.kappa < 0.75);
    }

    #[test]
    fn upper_triangular_is_rejected_with_witness() {
        let p = params(&[("a11", 1.0), ("a12", 2.0), ("a21", 0.0), ("a22", 1.0)]);
        match make_coefficients("constant", &p) {
            Err(LabError::NonElliptic { xi, .. }) => {
                assert!((xi[0] + xi[1]).abs() < 1e-6);
            }
            other => panic!("expected NonElliptic, got {other:?}"),
        }
    }

    #[test]
    fn unknown_family() {
        assert!(matches!(
            make_coefficients("nope", &params(&[])),
            Err(LabError::UnknownFamily(_))
        ));
    }

    #[test]
    fn skew_blocks() {
        let f = make_coefficients("skew", &params(&[("delta", 0.3)])).unwrap();
        let b = split_blocks(&f).at(0.2, 0.7);
        assert_eq!(b.a_pt, 0.3);
        assert_eq!(b.a_tp, -0.3);
        assert_eq!(b.a_pp, 1.0);
        assert_eq!(b.a_tt, 1.0);
    }

    #[test]
    fn checker_flips_sign() {
        let f = make_coefficients("checker", &params(&[("r", 0.25), ("delta", 0.5)])).unwrap();
        assert_eq!(f.eval(0.1, 0.01)[0][1], 0.5);
        assert_eq!(f.eval(0.3, 0.01)[0][1], -0.5);
        assert_eq!(f.eval(0.1, 0.07)[0][1], -0.5);
    }
}
