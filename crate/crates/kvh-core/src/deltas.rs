//! Finite-index models of generalized delta distributions.
//!
//! The families δ^a are represented at finite index k by Gaussian bumps
//! G^a_k(x) = k^a e^{−a(kx)²/2}/(2π)^{a/2} or by boxes of height k^a and
//! width 1/k. Products with a + b = 1 collapse to an ordinary delta model;
//! the residual reports measure how fast the weak identities set in. The
//! square-root-delta ridge diagnostic checks the phase-space orthonormality
//! of two quantized tori.

use num_complex::Complex64;
use serde::Serialize;

use crate::eigen::{
    eval_phase_space, gl64, ActionAngleChart, Scheme, SemiclassicalEigenfunction, WaveBranch,
};
use crate::error::{KvhError, Result};
use crate::systems::SeparableWell;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeltaFamily {
    Step,
    Gaussian,
}

#[derive(Debug, Clone, Copy)]
pub struct GeneralizedDelta {
    pub family: DeltaFamily,
    pub a: f64,
    pub k: f64,
}

impl GeneralizedDelta {
    pub fn new(family: DeltaFamily, a: f64, k: f64) -> Self {
        assert!(a > 0.0 && a <= 1.0, "exponent must lie in (0, 1]");
        assert!(k > 0.0, "index must be positive");
        Self { family, a, k }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let GeneralizedDelta { a, k, .. } = *self;
        match self.family {
            DeltaFamily::Gaussian => {
                let u = k * x;
                k.powf(a) * (-a * u * u / 2.0).exp() / (2.0 * std::f64::consts::PI).powf(a / 2.0)
            }
            DeltaFamily::Step => {
                if x.abs() <= 0.5 / k {
                    k.powf(a)
                } else {
                    0.0
                }
            }
        }
    }
}

/// Gauss-Legendre integral of f over [a, b].
fn gl_integral(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut s = 0.0;
    for &(t, w) in gl64() {
        s += w * f(mid + half * t);
    }
    s * half
}

/// Integral of f against the product G^a_k·G^b_k over its support.
fn product_integral(family: DeltaFamily, a: f64, b: f64, k: f64, f: &dyn Fn(f64) -> f64) -> f64 {
    let da = GeneralizedDelta::new(family, a, k);
    let db = GeneralizedDelta::new(family, b, k);
    match family {
        DeltaFamily::Gaussian => {
            // effective decay exp(-(a+b)(kx)^2/2); 10/k covers it to ~1e-22
            let r = 10.0 / k;
            let g = |x: f64| f(x) * da.eval(x) * db.eval(x);
            gl_integral(-r, 0.0, g) + gl_integral(0.0, r, g)
        }
        DeltaFamily::Step => {
            let r = 0.5 / k;
            gl_integral(-r, r, |x| f(x) * da.eval(x) * db.eval(x))
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProductIdentityReport {
    pub residual: f64,
    pub product_mass: f64,
}

/// How far ∫ f·δ^a_k·δ^b_k dx is from f(0) times the finite-k product mass.
/// Only defined for exponent sums a + b = 1.
pub fn product_identity_residual(
    family: DeltaFamily,
    a: f64,
    b: f64,
    k: f64,
    f: &dyn Fn(f64) -> f64,
) -> Result<ProductIdentityReport> {
    if (a + b - 1.0).abs() > 1e-12 {
        return Err(KvhError::ExponentSumInvalid { a, b });
    }
    let mass = product_integral(family, a, b, k, &|_x| 1.0);
    let val = product_integral(family, a, b, k, f);
    Ok(ProductIdentityReport {
        residual: (val - f(0.0) * mass).abs(),
        product_mass: mass,
    })
}

#[derive(Debug, Clone, Copy, Serialize, serde::Deserialize)]
pub struct LadderEntry {
    pub k: f64,
    pub residual: f64,
    pub product_mass: f64,
}

pub fn product_identity_ladder(
    family: DeltaFamily,
    a: f64,
    b: f64,
    ks: &[f64],
    f: &dyn Fn(f64) -> f64,
) -> Result<Vec<LadderEntry>> {
    ks.iter()
        .map(|&k| {
            product_identity_residual(family, a, b, k, f).map(|r| LadderEntry {
                k,
                residual: r.residual,
                product_mass: r.product_mass,
            })
        })
        .collect()
}

pub fn ladder_json(entries: &[LadderEntry]) -> String {
    serde_json::to_string_pretty(entries).expect("ladder serialization")
}

/// Ridge eigenfunction model with a square-root-delta profile in the action:
/// branch amplitude on the frozen chart times |∂J/∂p|^{1/2} times
/// G^{1/2}_k(J(x,p) − J₀). The amplitude (2(ξ₊−ξ₋))^{−1/2} makes the k → ∞
/// diagonal limit of the Gram entry equal to one.
struct RidgeState {
    eig: SemiclassicalEigenfunction,
    ridge: GeneralizedDelta,
}

impl RidgeState {
    fn new(chart: &ActionAngleChart, k: f64) -> Self {
        let n = (chart.j / chart.hbar - 0.5).round().max(0.0) as usize;
        let a_plus = 1.0 / (2.0 * (chart.xi_plus - chart.xi_minus)).sqrt();
        let eig = SemiclassicalEigenfunction {
            chart: chart.clone(),
            scheme: Scheme::Ebk,
            n,
            a_plus: Complex64::new(a_plus, 0.0),
            nu: 0,
        };
        Self { eig, ridge: GeneralizedDelta::new(DeltaFamily::Gaussian, 0.5, k) }
    }

    fn value(&self, x: f64, p: f64, j_local: f64, djdp_abs: f64) -> Complex64 {
        let r = self.ridge.eval(j_local - self.eig.chart.j);
        if r == 0.0 {
            return Complex64::ZERO;
        }
        let branch = if self.eig.chart.in_allowed(x) {
            if p >= 0.0 {
                WaveBranch::Plus
            } else {
                WaveBranch::Minus
            }
        } else {
            WaveBranch::Forbidden
        };
        match eval_phase_space(&self.eig, x, branch) {
            Ok(v) => v * djdp_abs.sqrt() * r,
            Err(_) => Complex64::ZERO,
        }
    }
}

/// Discrete phase-space inner product of two square-root-delta ridge models
/// on the given axes; approaches δ_{J₀J₁} as the ridge index grows.
pub fn sqrt_delta_orthonormality(
    well: &SeparableWell,
    chart0: &ActionAngleChart,
    chart1: &ActionAngleChart,
    k: f64,
    xs: &[f64],
    ps: &[f64],
) -> Result<Complex64> {
    if xs.len() < 2 || ps.len() < 2 {
        return Err(KvhError::AxisMismatch { axis: "ridge grid needs at least 2 points per axis" });
    }
    let dx = xs[1] - xs[0];
    let dp = ps[1] - ps[0];
    let s0 = RidgeState::new(chart0, k);
    let s1 = RidgeState::new(chart1, k);
    let (_, umin) = well.minimum();
    let edge = well.u(well.domain.0).min(well.u(well.domain.1));
    let e_hi = umin + (edge - umin) * (1.0 - 1e-9);
    // ridge support: both Gaussians are ~1e-22 beyond 10/k from their centers
    let reach = 10.0 / k;
    let (j0, j1) = (chart0.j, chart1.j);
    let mut acc = Complex64::ZERO;
    for &x in xs {
        for &p in ps {
            let e = p * p / (2.0 * well.m) + well.u(x);
            if e >= e_hi {
                continue;
            }
            let j = crate::eigen::action_of_energy(well, e).unwrap_or(f64::NAN);
            if !j.is_finite() {
                continue;
            }
            if (j - j0).abs() > reach && (j - j1).abs() > reach {
                continue;
            }
            let omega = crate::eigen::omega_of_energy(well, e)?;
            if omega <= 0.0 {
                continue;
            }
            let djdp = (p / (well.m * omega)).abs();
            let v0 = s0.value(x, p, j, djdp);
            let v1 = s1.value(x, p, j, djdp);
            acc += v0.conj() * v1;
        }
    }
    Ok(acc * dx * dp)
}
