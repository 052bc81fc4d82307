//! Hamiltonian systems: fields over phase space and single-well potentials.
//!
//! Two views of the same dynamics. `HamiltonianField` is the general one,
//! a set of closures H, ∂H/∂x, ∂H/∂p accepting complex momentum so the
//! forbidden-region branches can be evaluated directly. `SeparableWell`
//! specializes to H = p²/2m + U(x) on a confining interval, which is where
//! turning points, momentum branches and action integrals make sense.

use crate::error::{KvhError, Result};
use num_complex::Complex64;
use std::sync::Arc;

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type FieldFn = Arc<dyn Fn(f64, f64, Complex64) -> Complex64 + Send + Sync>;
pub type RealFieldFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// Analytic second partials of H along real phase-space points.
///
/// Optional. The variational (tangent-map) equations need ∂²H; when these are
/// absent the integrator falls back to five-point finite differences of the
/// supplied first partials.
#[derive(Clone)]
pub struct SecondPartials {
    pub d2h_dx2: RealFieldFn,
    pub d2h_dxdp: RealFieldFn,
    pub d2h_dp2: RealFieldFn,
}

/// H(t, x, p) with its first partials, ℏ, and a time-dependence flag.
#[derive(Clone)]
pub struct HamiltonianField {
    h: FieldFn,
    dh_dx: FieldFn,
    dh_dp: FieldFn,
    second: Option<SecondPartials>,
    pub hbar: f64,
    pub time_dependent: bool,
}

impl HamiltonianField {
    pub fn new(h: FieldFn, dh_dx: FieldFn, dh_dp: FieldFn, hbar: f64, time_dependent: bool) -> Self {
        assert!(hbar > 0.0, "hbar must be positive");
        Self { h, dh_dx, dh_dp, second: None, hbar, time_dependent }
    }

    pub fn with_second_partials(mut self, second: SecondPartials) -> Self {
        self.second = Some(second);
        self
    }

    pub fn h(&self, t: f64, x: f64, p: Complex64) -> Complex64 {
        (self.h)(t, x, p)
    }

    pub fn dh_dx(&self, t: f64, x: f64, p: Complex64) -> Complex64 {
        (self.dh_dx)(t, x, p)
    }

    pub fn dh_dp(&self, t: f64, x: f64, p: Complex64) -> Complex64 {
        (self.dh_dp)(t, x, p)
    }

    /// Second partials at a real phase-space point, analytic if supplied,
    /// otherwise five-point central differences of the first partials.
    pub fn second_partials_real(&self, t: f64, x: f64, p: f64) -> (f64, f64, f64) {
        if let Some(s) = &self.second {
            return ((s.d2h_dx2)(t, x, p), (s.d2h_dxdp)(t, x, p), (s.d2h_dp2)(t, x, p));
        }
        let hx = step_for(x);
        let hp = step_for(p);
        let pc = Complex64::new(p, 0.0);
        let d5 = |f: &dyn Fn(f64) -> f64, c: f64, h: f64| {
            (f(c - 2.0 * h) - 8.0 * f(c - h) + 8.0 * f(c + h) - f(c + 2.0 * h)) / (12.0 * h)
        };
        let dxx = d5(&|u| self.dh_dx(t, u, pc).re, x, hx);
        let dxp = d5(&|u| self.dh_dx(t, x, Complex64::new(u, 0.0)).re, p, hp);
        let dpp = d5(&|u| self.dh_dp(t, x, Complex64::new(u, 0.0)).re, p, hp);
        (dxx, dxp, dpp)
    }
}

fn step_for(v: f64) -> f64 {
    // balances truncation against rounding for a 4th-order stencil
    let scale = v.abs().max(1.0);
    scale * 1e-3
}

/// The Lagrangian associated with the Hamiltonian, L = p·∂H/∂p − H,
/// evaluated at a real phase-space point.
pub fn lagrangian(field: &HamiltonianField, t: f64, x: f64, p: f64) -> f64 {
    let pc = Complex64::new(p, 0.0);
    (pc * field.dh_dp(t, x, pc) - field.h(t, x, pc)).re
}

/// A confining single-minimum potential well, H = p²/2m + U(x).
#[derive(Clone)]
pub struct SeparableWell {
    pub m: f64,
    pub hbar: f64,
    pub domain: (f64, f64),
    u: RealFn,
    du_dx: RealFn,
    d2u_dx2: Option<RealFn>,
}

impl SeparableWell {
    pub fn new(m: f64, hbar: f64, domain: (f64, f64), u: RealFn, du_dx: RealFn) -> Self {
        assert!(m > 0.0 && hbar > 0.0 && domain.0 < domain.1);
        Self { m, hbar, domain, u, du_dx, d2u_dx2: None }
    }

    pub fn with_d2u(mut self, d2u: RealFn) -> Self {
        self.d2u_dx2 = Some(d2u);
        self
    }

    pub fn u(&self, x: f64) -> f64 {
        (self.u)(x)
    }

    pub fn du_dx(&self, x: f64) -> f64 {
        (self.du_dx)(x)
    }

    /// U″(x): analytic when supplied, else a five-point stencil on U′.
    pub fn d2u_dx2(&self, x: f64) -> f64 {
        if let Some(d2) = &self.d2u_dx2 {
            return d2(x);
        }
        let h = step_for(x);
        ((self.du_dx)(x - 2.0 * h) - 8.0 * (self.du_dx)(x - h) + 8.0 * (self.du_dx)(x + h)
            - (self.du_dx)(x + 2.0 * h))
            / (12.0 * h)
    }

    /// Position of the interior minimum (bisection on U′ after a coarse scan).
    pub fn minimum(&self) -> (f64, f64) {
        let (a, b) = self.domain;
        let n = 256;
        let h = (b - a) / n as f64;
        let mut lo = a;
        let mut hi = b;
        let mut prev = self.du_dx(a);
        for i in 1..=n {
            let x = a + i as f64 * h;
            let cur = self.du_dx(x);
            if prev <= 0.0 && cur > 0.0 || prev < 0.0 && cur >= 0.0 {
                lo = x - h;
                hi = x;
                break;
            }
            prev = cur;
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if self.du_dx(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-14 * (1.0 + mid.abs()) {
                break;
            }
        }
        let xm = 0.5 * (lo + hi);
        (xm, self.u(xm))
    }

    /// The general field view of this well (h = p²/2m + U, exact second partials).
    pub fn field(&self) -> HamiltonianField {
        let m = self.m;
        let u = self.u.clone();
        let du = self.du_dx.clone();
        let well = self.clone();
        let h: FieldFn = Arc::new(move |_t, x, p: Complex64| p * p / (2.0 * m) + u(x));
        let dh_dx: FieldFn = Arc::new(move |_t, x, _p| Complex64::new(du(x), 0.0));
        let dh_dp: FieldFn = Arc::new(move |_t, _x, p: Complex64| p / m);
        let second = SecondPartials {
            d2h_dx2: Arc::new(move |_t, x, _p| well.d2u_dx2(x)),
            d2h_dxdp: Arc::new(|_t, _x, _p| 0.0),
            d2h_dp2: Arc::new(move |_t, _x, _p| 1.0 / m),
        };
        HamiltonianField::new(h, dh_dx, dh_dp, self.hbar, false).with_second_partials(second)
    }
}

/// Left and right turning points of the orbit at energy E.
pub fn turning_points(well: &SeparableWell, e: f64) -> Result<(f64, f64)> {
    let (xm, umin) = well.minimum();
    if e <= umin {
        return Err(KvhError::EnergyBelowWell { energy: e, min: umin });
    }
    let (a, b) = well.domain;
    if e >= well.u(a).min(well.u(b)) {
        return Err(KvhError::EnergyAboveWell { energy: e });
    }
    let xi_minus = bisect_u_equals(well, e, a, xm, true);
    let xi_plus = bisect_u_equals(well, e, xm, b, false);
    Ok((xi_minus, xi_plus))
}

/// Root of U(x) − E on a monotone flank, coarse scan then bisection to 1e-12.
fn bisect_u_equals(well: &SeparableWell, e: f64, a: f64, b: f64, descending: bool) -> f64 {
    let n = 256;
    let h = (b - a) / n as f64;
    let mut lo = a;
    let mut hi = b;
    let mut prev = well.u(a) - e;
    for i in 1..=n {
        let x = a + i as f64 * h;
        let cur = well.u(x) - e;
        if prev.signum() != cur.signum() || cur == 0.0 {
            lo = x - h;
            hi = x;
            break;
        }
        prev = cur;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f = well.u(mid) - e;
        let above = if descending { f > 0.0 } else { f < 0.0 };
        if above {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// The two momentum branches at (E, x): real ±√(2m(E−U)) in the allowed
/// region, purely imaginary ±i√(2m(U−E)) beyond the turning points.
pub fn momentum_branches(well: &SeparableWell, e: f64, x: f64) -> (Complex64, Complex64) {
    let v = 2.0 * well.m * (e - well.u(x));
    if v >= 0.0 {
        let p = v.sqrt();
        (Complex64::new(p, 0.0), Complex64::new(-p, 0.0))
    } else {
        let p = (-v).sqrt();
        (Complex64::new(0.0, p), Complex64::new(0.0, -p))
    }
}

/// Built-in catalog addressable by name; parameters are (m, omega) for "ho"
/// and (lambda, m) for "quartic".
pub fn catalog(name: &str, params: &[(String, f64)], hbar: f64) -> Option<SeparableWell> {
    let get = |key: &str, default: f64| {
        params
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| *v)
            .unwrap_or(default)
    };
    match name {
        "ho" => {
            let m = get("m", 1.0);
            let omega = get("omega", 1.0);
            let x_char = (hbar / (m * omega)).sqrt();
            let dom = 20.0 * x_char;
            let u: RealFn = Arc::new(move |x| 0.5 * m * omega * omega * x * x);
            let du: RealFn = Arc::new(move |x| m * omega * omega * x);
            let d2: RealFn = Arc::new(move |_| m * omega * omega);
            Some(SeparableWell::new(m, hbar, (-dom, dom), u, du).with_d2u(d2))
        }
        "quartic" => {
            let m = get("m", 1.0);
            let lambda = get("lambda", 1.0);
            // U'' vanishes at the minimum, so the harmonic length rule is
            // useless here; (hbar^2 / m lambda)^{1/6} is the quartic analogue
            let x_char = (hbar * hbar / (m * lambda)).powf(1.0 / 6.0);
            let dom = 20.0 * x_char;
            let u: RealFn = Arc::new(move |x| 0.25 * lambda * x.powi(4));
            let du: RealFn = Arc::new(move |x| lambda * x.powi(3));
            let d2: RealFn = Arc::new(move |x| 3.0 * lambda * x * x);
            Some(SeparableWell::new(m, hbar, (-dom, dom), u, du).with_d2u(d2))
        }
        _ => None,
    }
}
