//! Action-angle charts, torus quantization, and JWKB eigenfunctions.
//!
//! A chart packages one energy shell of a separable well: action J, energy E,
//! frequency ω, turning points, Maslov index. Quantized charts carry the
//! eigenfunction data needed for phase-space and configuration-space
//! evaluation, including the exponentially damped tails beyond the turning
//! points.

use std::f64::consts::{FRAC_PI_4, PI};
use std::sync::OnceLock;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{KvhError, Result};
use crate::systems::{turning_points, SeparableWell};

/// Quantization rule for the action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    BohrSommerfeld,
    Ebk,
}

/// Momentum sign sheet in the classically allowed region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Plus,
    Minus,
}

/// Evaluation sheet for phase-space amplitudes: the two allowed branches plus
/// the evanescent continuation outside the turning points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaveBranch {
    Plus,
    Minus,
    Forbidden,
}

/// Which side of the turning points a configuration-space point sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Allowed,
    Forbidden,
}

/// Amplitude convention: unit L2 norm on configuration space (default), or
/// the bare a₊ = 1 convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    UnitNorm,
    UnitAmplitude,
}

/// Half-width multiplier for the turning-point exclusion window, in units of
/// the Airy scale returned by [`airy_scale`].
pub const WINDOW_MULTIPLIER: f64 = 2.0;

/// Grid size used when fixing the unit-norm amplitude numerically.
const NORM_GRID_POINTS: usize = 8001;

// ---------------------------------------------------------------------------
// Gauss-Legendre quadrature

fn legendre_pd(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, x);
    for j in 2..=n {
        let jf = j as f64;
        let pj = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = pj;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut t = (PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..60 {
            let (p, dp) = legendre_pd(n, t);
            let dt = p / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_pd(n, t);
        out.push((t, 2.0 / ((1.0 - t * t) * dp * dp)));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

static GL64: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
static GL32: OnceLock<Vec<(f64, f64)>> = OnceLock::new();

pub(crate) fn gl64() -> &'static [(f64, f64)] {
    GL64.get_or_init(|| gauss_legendre(64))
}

fn gl32() -> &'static [(f64, f64)] {
    GL32.get_or_init(|| gauss_legendre(32))
}

/// ∫ₐᵇ f(x) dx under the substitution x = a + (b−a)sin²φ, which absorbs an
/// inverse-square-root (or square-root) endpoint singularity at either end.
fn sin2_quad(a: f64, b: f64, nodes: &[(f64, f64)], f: impl Fn(f64) -> f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let span = b - a;
    let mut s = 0.0;
    for &(t, w) in nodes {
        let phi = FRAC_PI_4 * (t + 1.0);
        let sp = phi.sin();
        let x = a + span * sp * sp;
        s += w * f(x) * span * (2.0 * phi).sin();
    }
    s * FRAC_PI_4
}

/// Coarse/fine pair on the same integral; the gap estimates the quadrature
/// error for self-checks.
pub fn quad_residual(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    (sin2_quad(a, b, gl64(), &f) - sin2_quad(a, b, gl32(), &f)).abs()
}

// ---------------------------------------------------------------------------
// Action-angle machinery

fn p_allowed(well: &SeparableWell, e: f64, x: f64) -> f64 {
    (2.0 * well.m * (e - well.u(x))).max(0.0).sqrt()
}

fn p_forbidden(well: &SeparableWell, e: f64, x: f64) -> f64 {
    (2.0 * well.m * (well.u(x) - e)).max(0.0).sqrt()
}

/// J(E) = (1/π)∫√(2m(E−U)) dx between the turning points.
pub fn action_of_energy(well: &SeparableWell, e: f64) -> Result<f64> {
    let (xm, xp) = turning_points(well, e)?;
    Ok(sin2_quad(xm, xp, gl64(), |x| p_allowed(well, e, x)) / PI)
}

pub(crate) fn omega_of_energy(well: &SeparableWell, e: f64) -> Result<f64> {
    Ok(2.0 * PI / period_of_energy(well, e)?)
}

fn period_of_energy(well: &SeparableWell, e: f64) -> Result<f64> {
    let (xm, xp) = turning_points(well, e)?;
    let m = well.m;
    Ok(2.0 * sin2_quad(xm, xp, gl64(), |x| m / p_allowed(well, e, x).max(1e-300)))
}

/// Frequency of the zero-action orbit, √(U″(x_min)/m).
fn omega_floor(well: &SeparableWell) -> f64 {
    let (xmin, _) = well.minimum();
    (well.d2u_dx2(xmin).max(0.0) / well.m).sqrt()
}

fn action_capacity(well: &SeparableWell) -> (f64, f64, f64) {
    let (_, umin) = well.minimum();
    let edge = well.u(well.domain.0).min(well.u(well.domain.1));
    let e_hi = umin + (edge - umin) * (1.0 - 1e-9);
    let j_cap = action_of_energy(well, e_hi).unwrap_or(f64::INFINITY);
    (umin, e_hi, j_cap)
}

/// Invert J(E) by bisection; also returns ω = 2π/T at the solution.
pub fn energy_of_action(well: &SeparableWell, j: f64) -> Result<(f64, f64)> {
    let (umin, e_hi, j_cap) = action_capacity(well);
    if !(0.0..=j_cap).contains(&j) {
        return Err(KvhError::ActionOutOfRange { action: j, lo: 0.0, hi: j_cap });
    }
    if j == 0.0 {
        return Ok((umin, omega_floor(well)));
    }
    let (mut lo, mut hi) = (umin, e_hi);
    for _ in 0..120 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if action_of_energy(well, mid)? > j {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let e = 0.5 * (lo + hi);
    Ok((e, 2.0 * PI / period_of_energy(well, e)?))
}

/// One energy shell of a separable well in action-angle form.
#[derive(Clone)]
pub struct ActionAngleChart {
    pub well: SeparableWell,
    pub j: f64,
    pub e: f64,
    pub omega: f64,
    pub xi_minus: f64,
    pub xi_plus: f64,
    pub maslov: u32,
    pub hbar: f64,
}

impl ActionAngleChart {
    pub fn from_action(well: &SeparableWell, j: f64) -> Result<Self> {
        let (e, omega) = energy_of_action(well, j)?;
        let (xi_minus, xi_plus) = if j == 0.0 {
            let (xmin, _) = well.minimum();
            (xmin, xmin)
        } else {
            turning_points(well, e)?
        };
        Ok(Self {
            well: well.clone(),
            j,
            e,
            omega,
            xi_minus,
            xi_plus,
            maslov: 2,
            hbar: well.hbar,
        })
    }

    pub fn from_energy(well: &SeparableWell, e: f64) -> Result<Self> {
        let j = action_of_energy(well, e)?;
        let (xi_minus, xi_plus) = turning_points(well, e)?;
        Ok(Self {
            well: well.clone(),
            j,
            e,
            omega: 2.0 * PI / period_of_energy(well, e)?,
            xi_minus,
            xi_plus,
            maslov: 2,
            hbar: well.hbar,
        })
    }

    /// |p|(x) on the allowed sheet.
    pub fn p_abs(&self, x: f64) -> f64 {
        p_allowed(&self.well, self.e, x)
    }

    /// |Im p|(x) on the evanescent sheet.
    pub fn p_tilde(&self, x: f64) -> f64 {
        p_forbidden(&self.well, self.e, x)
    }

    pub fn in_allowed(&self, x: f64) -> bool {
        x >= self.xi_minus && x <= self.xi_plus
    }

    pub fn in_domain(&self, x: f64) -> bool {
        x >= self.well.domain.0 && x <= self.well.domain.1
    }

    /// Exclusion intervals around the two turning points, half-width
    /// mult · airy_scale.
    pub fn turning_windows(&self, mult: f64) -> [(f64, f64); 2] {
        let dm = mult * airy_scale(&self.well, self.xi_minus);
        let dp = mult * airy_scale(&self.well, self.xi_plus);
        [
            (self.xi_minus - dm, self.xi_minus + dm),
            (self.xi_plus - dp, self.xi_plus + dp),
        ]
    }

    pub fn in_turning_window(&self, x: f64, mult: f64) -> bool {
        self.turning_windows(mult)
            .iter()
            .any(|&(lo, hi)| x > lo && x < hi)
    }
}

/// Airy length (ℏ²/(m|U′(ξ)|))^{1/3} at a turning point ξ; the JWKB forms
/// break down within a few of these.
pub fn airy_scale(well: &SeparableWell, xi: f64) -> f64 {
    let du = well.du_dx(xi).abs().max(1e-300);
    (well.hbar * well.hbar / (well.m * du)).powf(1.0 / 3.0)
}

/// W₋(x) = ∫_{ξ₋}^x |p| dx′ or W₊(x) = ∫_x^{ξ₊} |p| dx′.
pub fn hamilton_principal_w(chart: &ActionAngleChart, x: f64, branch: Branch) -> Result<f64> {
    if !chart.in_allowed(x) {
        return Err(KvhError::OutsideAllowedRegion {
            x,
            xi_minus: chart.xi_minus,
            xi_plus: chart.xi_plus,
        });
    }
    let w = chart.well.clone();
    let e = chart.e;
    Ok(match branch {
        Branch::Minus => sin2_quad(chart.xi_minus, x, gl64(), |t| p_allowed(&w, e, t)),
        Branch::Plus => sin2_quad(x, chart.xi_plus, gl64(), |t| p_allowed(&w, e, t)),
    })
}

/// W̃(x) = ∫ |Im p| dx′ from the nearest turning point out to x.
pub fn forbidden_action_wtilde(chart: &ActionAngleChart, x: f64) -> Result<f64> {
    if x > chart.xi_minus && x < chart.xi_plus {
        return Err(KvhError::InsideAllowedRegion {
            x,
            xi_minus: chart.xi_minus,
            xi_plus: chart.xi_plus,
        });
    }
    let w = chart.well.clone();
    let e = chart.e;
    Ok(if x >= chart.xi_plus {
        sin2_quad(chart.xi_plus, x, gl64(), |t| p_forbidden(&w, e, t))
    } else {
        sin2_quad(x, chart.xi_minus, gl64(), |t| p_forbidden(&w, e, t))
    })
}

// ---------------------------------------------------------------------------
// Quantized eigenfunctions

#[derive(Clone)]
pub struct SemiclassicalEigenfunction {
    pub chart: ActionAngleChart,
    pub scheme: Scheme,
    pub n: usize,
    pub a_plus: Complex64,
    pub nu: i64,
}

/// One configuration-space sample: the value, which side of the turning
/// points it came from, and whether it sits inside an exclusion window
/// (where the stationary-phase amplitude is unreliable and may blow up).
#[derive(Debug, Clone, Copy)]
pub struct ConfigValue {
    pub value: Complex64,
    pub region: Region,
    pub in_window: bool,
}

impl ConfigValue {
    pub fn flag(&self) -> &'static str {
        if self.in_window {
            "window"
        } else {
            match self.region {
                Region::Allowed => "allowed",
                Region::Forbidden => "forbidden",
            }
        }
    }
}

pub fn quantize(well: &SeparableWell, scheme: Scheme, n: usize) -> Result<SemiclassicalEigenfunction> {
    quantize_with(well, scheme, n, Normalization::UnitNorm)
}

pub fn quantize_with(
    well: &SeparableWell,
    scheme: Scheme,
    n: usize,
    norm: Normalization,
) -> Result<SemiclassicalEigenfunction> {
    let maslov = 2u32;
    let j = match scheme {
        Scheme::BohrSommerfeld => well.hbar * n as f64,
        Scheme::Ebk => well.hbar * (n as f64 + maslov as f64 / 4.0),
    };
    if j == 0.0 {
        // zero-radius orbit: no normalizable state to build on it
        let (_, _, j_cap) = action_capacity(well);
        return Err(KvhError::ActionOutOfRange { action: 0.0, lo: 0.0, hi: j_cap });
    }
    let chart = ActionAngleChart::from_action(well, j)?;
    let mut eig = SemiclassicalEigenfunction {
        chart,
        scheme,
        n,
        a_plus: Complex64::new(1.0, 0.0),
        nu: 0,
    };
    if norm == Normalization::UnitNorm {
        eig.a_plus = Complex64::new(unit_norm_amplitude(&eig), 0.0);
    }
    Ok(eig)
}

/// Phase-space amplitude on the requested sheet, excluding the δ(J−J₀)
/// support factor and the e^{−iEt/ℏ} evolution factor.
pub fn eval_phase_space(
    eig: &SemiclassicalEigenfunction,
    x: f64,
    branch: WaveBranch,
) -> Result<Complex64> {
    let chart = &eig.chart;
    if !chart.in_domain(x) {
        return Err(KvhError::OutOfDomain { x, p: f64::NAN });
    }
    let hbar = chart.hbar;
    let caustic_offset = match eig.scheme {
        Scheme::Ebk => FRAC_PI_4,
        Scheme::BohrSommerfeld => 0.0,
    };
    let parity = if eig.n % 2 == 0 { 1.0 } else { -1.0 };
    match branch {
        WaveBranch::Plus | WaveBranch::Minus => {
            if !chart.in_allowed(x) {
                return Err(KvhError::RegionMismatch {
                    x,
                    branch: if branch == WaveBranch::Plus { "plus" } else { "minus" },
                });
            }
            Ok(match branch {
                WaveBranch::Plus => {
                    let w = hamilton_principal_w(chart, x, Branch::Plus)?;
                    eig.a_plus * Complex64::from_polar(1.0, w / hbar + caustic_offset)
                }
                _ => {
                    let w = hamilton_principal_w(chart, x, Branch::Minus)?;
                    parity * eig.a_plus * Complex64::from_polar(1.0, w / hbar - caustic_offset)
                }
            })
        }
        WaveBranch::Forbidden => {
            if chart.in_allowed(x) && x != chart.xi_minus && x != chart.xi_plus {
                return Err(KvhError::RegionMismatch { x, branch: "forbidden" });
            }
            let side = if x >= chart.xi_plus { 1.0 } else { parity };
            let wt = forbidden_action_wtilde(chart, x)?;
            Ok(side * eig.a_plus * (-wt / hbar).exp())
        }
    }
}

/// Branch-summed configuration-space value with the |∂p/∂J|^{1/2} = (mω/|p|)^{1/2}
/// amplitude. Points inside the turning-point windows come back flagged.
pub fn eval_config_space(eig: &SemiclassicalEigenfunction, x: f64) -> Result<ConfigValue> {
    let chart = &eig.chart;
    if !chart.in_domain(x) {
        return Err(KvhError::OutOfDomain { x, p: f64::NAN });
    }
    let hbar = chart.hbar;
    let m = chart.well.m;
    let caustic_offset = match eig.scheme {
        Scheme::Ebk => FRAC_PI_4,
        Scheme::BohrSommerfeld => 0.0,
    };
    let in_window = chart.in_turning_window(x, WINDOW_MULTIPLIER);
    if chart.in_allowed(x) {
        let p = chart.p_abs(x);
        let amp = (m * chart.omega / p).sqrt();
        let w = hamilton_principal_w(chart, x, Branch::Plus)?;
        let value = 2.0 * eig.a_plus * (w / hbar - caustic_offset).cos() * amp;
        Ok(ConfigValue { value, region: Region::Allowed, in_window })
    } else {
        let pt = chart.p_tilde(x);
        let amp = (m * chart.omega / pt).sqrt();
        let parity = if eig.n % 2 == 0 { 1.0 } else { -1.0 };
        let side = if x > chart.xi_plus { 1.0 } else { parity };
        let wt = forbidden_action_wtilde(chart, x)?;
        let value = side * eig.a_plus * (-wt / hbar).exp() * amp;
        Ok(ConfigValue { value, region: Region::Forbidden, in_window })
    }
}

/// Uniform sampling grid across the well's domain used for norm fixing.
pub fn norm_grid(well: &SeparableWell) -> Vec<f64> {
    let (a, b) = well.domain;
    let n = NORM_GRID_POINTS;
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn unit_norm_amplitude(eig: &SemiclassicalEigenfunction) -> f64 {
    let xs = norm_grid(&eig.chart.well);
    let dx = xs[1] - xs[0];
    let mut sum = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let cv = match eval_config_space(eig, x) {
            Ok(cv) => cv,
            Err(_) => continue,
        };
        if cv.in_window || !cv.value.is_finite() {
            continue;
        }
        let w = if i == 0 || i == xs.len() - 1 { 0.5 } else { 1.0 };
        sum += w * cv.value.norm_sqr() * dx;
    }
    if sum > 0.0 {
        1.0 / sum.sqrt()
    } else {
        1.0
    }
}

/// CSV table of the eigenfunction on the given abscissas:
/// x, Re φ, Im φ, region flag.
pub fn config_table_csv(eig: &SemiclassicalEigenfunction, xs: &[f64]) -> Result<String> {
    let mut out = String::from("x,re_phi,im_phi,region_flag\n");
    for &x in xs {
        let cv = eval_config_space(eig, x)?;
        out.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{}\n",
            x,
            cv.value.re,
            cv.value.im,
            cv.flag()
        ));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Spectra

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumRow {
    pub sector: String,
    pub n_or_nu: i64,
    pub j: f64,
    pub e_or_freq: f64,
}

/// Semiclassical levels n = 0..n_max, plus (optionally) the ladder of
/// classical-mode lines ν·ℏω(Jₙ) on each quantized torus, both signs of ν.
pub fn spectrum(
    well: &SeparableWell,
    scheme: Scheme,
    n_max: usize,
    include_classical: bool,
    nu_range: (i64, i64),
) -> Result<Vec<SpectrumRow>> {
    let mut rows = Vec::new();
    let (_, umin) = well.minimum();
    for n in 0..=n_max {
        let j = match scheme {
            Scheme::BohrSommerfeld => well.hbar * n as f64,
            Scheme::Ebk => well.hbar * (n as f64 + 0.5),
        };
        if j == 0.0 {
            rows.push(SpectrumRow {
                sector: "degenerate".into(),
                n_or_nu: n as i64,
                j: 0.0,
                e_or_freq: umin,
            });
            continue;
        }
        let (e, omega) = energy_of_action(well, j)?;
        rows.push(SpectrumRow {
            sector: "semiclassical".into(),
            n_or_nu: n as i64,
            j,
            e_or_freq: e,
        });
        if include_classical {
            for nu in nu_range.0..=nu_range.1 {
                rows.push(SpectrumRow {
                    sector: "classical".into(),
                    n_or_nu: nu,
                    j,
                    e_or_freq: nu as f64 * omega * well.hbar,
                });
            }
        }
    }
    Ok(rows)
}

pub fn spectrum_csv(rows: &[SpectrumRow]) -> String {
    let mut out = String::from("sector,n_or_nu,J,E_or_freq\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.16e},{:.16e}\n",
            r.sector, r.n_or_nu, r.j, r.e_or_freq
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::catalog;

    fn ho() -> SeparableWell {
        catalog("ho", &[], 1.0).unwrap()
    }

    fn quartic() -> SeparableWell {
        catalog("quartic", &[], 1.0).unwrap()
    }

    #[test]
    fn gl_rule_integrates_polynomials_exactly() {
        let nodes = gl64();
        let mut s = 0.0;
        for &(t, w) in nodes {
            s += w * t.powi(10);
        }
        assert!((s - 2.0 / 11.0).abs() < 1e-14, "x^10 moment: {s}");
        let n32 = gl32();
        assert_eq!(n32.len(), 32);
        let f = |x: f64| (1.5 * x).cos();
        let a = sin2_quad(-1.0, 1.0, nodes, f);
        let b = sin2_quad(-1.0, 1.0, n32, f);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn ho_action_is_energy_over_omega() {
        let j = action_of_energy(&ho(), 2.0).unwrap();
        assert!((j - 2.0).abs() < 1e-12, "J = {j}");
    }

    #[test]
    fn quartic_action_golden_value() {
        let j = action_of_energy(&quartic(), 1.0).unwrap();
        assert!((j - 1.1128357888987642).abs() < 1e-10, "J = {j:.16e}");
    }

    #[test]
    fn energy_of_action_round_trips() {
        let w = ho();
        let (e, om) = energy_of_action(&w, 0.5).unwrap();
        assert!((e - 0.5).abs() < 1e-10 && (om - 1.0).abs() < 1e-10);

        let q = quartic();
        let j1 = action_of_energy(&q, 1.0).unwrap();
        let (e1, _) = energy_of_action(&q, j1).unwrap();
        assert!((e1 - 1.0).abs() < 1e-8, "E = {e1}");

        let (e0, om0) = energy_of_action(&q, 0.0).unwrap();
        assert!(e0.abs() < 1e-30);
        assert!(om0.abs() < 1e-12); // U''(0) = 0 for the pure quartic

        let (eh, omh) = energy_of_action(&w, 0.0).unwrap();
        assert!(eh.abs() < 1e-12 && (omh - 1.0).abs() < 1e-6);
    }

    #[test]
    fn action_out_of_range_rejected() {
        match energy_of_action(&ho(), 1e9) {
            Err(KvhError::ActionOutOfRange { hi, .. }) => assert!(hi < 1e9),
            other => panic!("expected ActionOutOfRange, got {other:?}"),
        }
    }

    #[test]
    fn quantize_ho_examples() {
        let w = ho();
        let e0 = quantize(&w, Scheme::Ebk, 0).unwrap();
        assert!((e0.chart.j - 0.5).abs() < 1e-12);
        assert!((e0.chart.e - 0.5).abs() < 1e-10);
        assert_eq!(e0.chart.maslov, 2);
        assert_eq!(e0.nu, 0);

        let b3 = quantize(&w, Scheme::BohrSommerfeld, 3).unwrap();
        assert!((b3.chart.j - 3.0).abs() < 1e-12);
        assert!((b3.chart.e - 3.0).abs() < 1e-10);

        match quantize(&w, Scheme::BohrSommerfeld, 0) {
            Err(KvhError::ActionOutOfRange { action, .. }) => assert_eq!(action, 0.0),
            Err(other) => panic!("expected ActionOutOfRange, got {other:?}"),
            Ok(_) => panic!("expected ActionOutOfRange, got Ok"),
        }
    }

    #[test]
    fn quantize_quartic_golden_level() {
        let q = quartic();
        let e0 = quantize_with(&q, Scheme::Ebk, 0, Normalization::UnitAmplitude).unwrap();
        assert!((e0.chart.e - 0.34412685086782834).abs() < 1e-9, "E0 = {:.16e}", e0.chart.e);
        assert!((e0.chart.omega - 0.91767160231420895).abs() < 1e-9);
        assert!((e0.chart.xi_plus - 1.0831650487756142).abs() < 1e-9);
    }

    #[test]
    fn w_split_and_total() {
        let w = ho();
        let chart = ActionAngleChart::from_action(&w, 0.5).unwrap();
        let wm = hamilton_principal_w(&chart, 0.0, Branch::Minus).unwrap();
        assert!((wm - FRAC_PI_4).abs() < 1e-12, "W- = {wm}");
        let w0 = hamilton_principal_w(&chart, chart.xi_minus, Branch::Minus).unwrap();
        assert!(w0.abs() < 1e-12);
        for &x in &[-0.6, -0.1, 0.3, 0.55] {
            let a = hamilton_principal_w(&chart, x, Branch::Minus).unwrap();
            let b = hamilton_principal_w(&chart, x, Branch::Plus).unwrap();
            assert!((a + b - PI * chart.j).abs() < 1e-11, "W-+W+ at {x}");
        }
        match hamilton_principal_w(&chart, 5.0, Branch::Plus) {
            Err(KvhError::OutsideAllowedRegion { .. }) => {}
            other => panic!("expected OutsideAllowedRegion, got {other:?}"),
        }
    }

    #[test]
    fn quartic_w_golden_values() {
        let q = quartic();
        let c0 = ActionAngleChart::from_action(&q, 0.5).unwrap();
        let wm = hamilton_principal_w(&c0, 0.5 * c0.xi_plus, Branch::Minus).unwrap();
        assert!((wm - 1.2318676903182751).abs() < 1e-10, "W- = {wm:.16e}");
        let wt = forbidden_action_wtilde(&c0, 1.5 * c0.xi_plus).unwrap();
        assert!((wt - 0.52820395767066217).abs() < 1e-10, "Wt = {wt:.16e}");
    }

    #[test]
    fn wtilde_hyperbolic_closed_form() {
        // HO J=1/2 at x = √(2J)·cosh θ with cosh θ = 2:
        // ∫|Im p| reduces to J(sinh θ cosh θ − θ)
        let w = ho();
        let chart = ActionAngleChart::from_action(&w, 0.5).unwrap();
        let th = 2f64.acosh();
        let x = (2.0 * chart.j).sqrt() * 2.0;
        let wt = forbidden_action_wtilde(&chart, x).unwrap();
        let closed = chart.j * (th.sinh() * th.cosh() - th);
        assert!((wt - closed).abs() < 1e-12, "Wt = {wt:.16e} vs {closed:.16e}");
        assert!((wt - 1.0735718591064689).abs() < 1e-12);

        let z = forbidden_action_wtilde(&chart, chart.xi_plus).unwrap();
        assert!(z.abs() < 1e-13);
        match forbidden_action_wtilde(&chart, 0.1) {
            Err(KvhError::InsideAllowedRegion { .. }) => {}
            other => panic!("expected InsideAllowedRegion, got {other:?}"),
        }
    }

    #[test]
    fn wtilde_monotone_away_from_turning_point() {
        let q = quartic();
        let chart = ActionAngleChart::from_action(&q, 3.5).unwrap();
        let mut prev = 0.0;
        for k in 1..=8 {
            let x = chart.xi_plus * (1.0 + 0.1 * k as f64);
            let wt = forbidden_action_wtilde(&chart, x).unwrap();
            assert!(wt > prev);
            prev = wt;
        }
    }

    #[test]
    fn phase_space_values_at_turning_point_and_continuity() {
        let w = ho();
        let e0 = quantize_with(&w, Scheme::Ebk, 0, Normalization::UnitAmplitude).unwrap();
        let v = eval_phase_space(&e0, e0.chart.xi_plus, WaveBranch::Plus).unwrap();
        let want = Complex64::from_polar(1.0, FRAC_PI_4);
        assert!((v - want).norm() < 1e-12, "v = {v}");

        // odd state: the minus-branch amplitude at ξ- is (-1)^n times the
        // plus-branch amplitude at ξ+, with conjugate phase offset
        let e1 = quantize_with(&w, Scheme::Ebk, 1, Normalization::UnitAmplitude).unwrap();
        let vp = eval_phase_space(&e1, e1.chart.xi_plus, WaveBranch::Plus).unwrap();
        let vm = eval_phase_space(&e1, e1.chart.xi_minus, WaveBranch::Minus).unwrap();
        let wm_full = hamilton_principal_w(&e1.chart, e1.chart.xi_minus, Branch::Minus).unwrap();
        assert!(wm_full.abs() < 1e-12);
        assert!((vm - (-vp.conj())).norm() < 1e-12, "vm = {vm}, vp = {vp}");

        match eval_phase_space(&e0, 4.0, WaveBranch::Plus) {
            Err(KvhError::RegionMismatch { branch: "plus", .. }) => {}
            other => panic!("expected RegionMismatch, got {other:?}"),
        }
        match eval_phase_space(&e0, 0.0, WaveBranch::Forbidden) {
            Err(KvhError::RegionMismatch { branch: "forbidden", .. }) => {}
            other => panic!("expected RegionMismatch, got {other:?}"),
        }
    }

    #[test]
    fn forbidden_amplitude_decays_toward_domain_edge() {
        let w = ho();
        let e0 = quantize_with(&w, Scheme::Ebk, 0, Normalization::UnitAmplitude).unwrap();
        let mut prev = 1.0;
        for k in 1..=6 {
            let x = e0.chart.xi_plus + 0.5 * k as f64;
            let v = eval_phase_space(&e0, x, WaveBranch::Forbidden).unwrap();
            assert!(v.norm() < prev);
            prev = v.norm();
        }
    }

    #[test]
    fn config_space_center_value_and_goldens() {
        let w = ho();
        let e0 = quantize_with(&w, Scheme::Ebk, 0, Normalization::UnitAmplitude).unwrap();
        let cv = eval_config_space(&e0, 0.0).unwrap();
        assert!((cv.value.re - 2.0).abs() < 1e-10, "phi(0) = {}", cv.value);
        assert_eq!(cv.region, Region::Allowed);

        let e1 = quantize_with(&w, Scheme::Ebk, 1, Normalization::UnitAmplitude).unwrap();
        let a = eval_config_space(&e1, 0.5).unwrap().value.re;
        assert!((a - 1.1707363615721750).abs() < 1e-10, "phi(0.5) = {a:.16e}");
        let b = eval_config_space(&e1, 2.2).unwrap().value.re;
        assert!((b - 0.56815433856817460).abs() < 1e-10, "phi(2.2) = {b:.16e}");
        assert_eq!(eval_config_space(&e1, 2.2).unwrap().region, Region::Forbidden);
    }

    #[test]
    fn quartic_waveform_table() {
        let q = quartic();
        let e3 = quantize_with(&q, Scheme::Ebk, 3, Normalization::UnitAmplitude).unwrap();
        let xp = e3.chart.xi_plus;
        assert!((xp - 2.0720201978920482).abs() < 1e-9);
        let table = [
            (0.3 * xp, -1.4490839523285640),
            (0.6 * xp, 0.86646321266654266),
            (-0.45 * xp, 0.48732294732350284),
            (1.25 * xp, 0.21491073148906192),
            (1.5 * xp, 0.013276574643401288),
            (-1.35 * xp, -0.080976066540051732),
        ];
        for (x, want) in table {
            let got = eval_config_space(&e3, x).unwrap().value.re;
            assert!((got - want).abs() < 2e-9, "phi({x}) = {got:.16e}, want {want:.16e}");
        }
    }

    #[test]
    fn parity_on_grid_both_schemes() {
        let q = quartic();
        for (scheme, n) in [(Scheme::Ebk, 2), (Scheme::Ebk, 3), (Scheme::BohrSommerfeld, 2), (Scheme::BohrSommerfeld, 3)] {
            let eig = quantize_with(&q, scheme, n, Normalization::UnitAmplitude).unwrap();
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            for k in 1..=20 {
                let x = 0.13 * k as f64;
                let a = eval_config_space(&eig, x).unwrap();
                let b = eval_config_space(&eig, -x).unwrap();
                if a.in_window || !a.value.is_finite() {
                    continue;
                }
                let diff = (b.value - sign * a.value).norm();
                assert!(diff < 1e-9 * (1.0 + a.value.norm()), "parity at x={x}: {diff}");
            }
        }
    }

    #[test]
    fn magnitude_jump_at_turning_point_is_sqrt2() {
        let w = ho();
        let e2 = quantize_with(&w, Scheme::Ebk, 2, Normalization::UnitAmplitude).unwrap();
        let xi = e2.chart.xi_plus;
        let eps = 1e-7 * xi;
        let inside = eval_config_space(&e2, xi - eps).unwrap().value.norm();
        let outside = eval_config_space(&e2, xi + eps).unwrap().value.norm();
        let ratio = inside / outside;
        assert!((ratio - 2f64.sqrt()).abs() < 1e-3, "ratio = {ratio}");
    }

    #[test]
    fn unit_norm_is_self_consistent() {
        let w = ho();
        let e2 = quantize(&w, Scheme::Ebk, 2).unwrap();
        let xs = norm_grid(&w);
        let dx = xs[1] - xs[0];
        let mut sum = 0.0;
        for &x in &xs {
            let cv = eval_config_space(&e2, x).unwrap();
            if cv.in_window || !cv.value.is_finite() {
                continue;
            }
            sum += cv.value.norm_sqr() * dx;
        }
        assert!((sum - 1.0).abs() < 1e-6, "norm^2 = {sum}");
    }

    #[test]
    fn ebk_phase_loop_closes() {
        let w = ho();
        for n in 0..6 {
            let eig = quantize_with(&w, Scheme::Ebk, n, Normalization::UnitAmplitude).unwrap();
            let loops = (2.0 * PI * eig.chart.j / eig.chart.hbar - PI * eig.chart.maslov as f64 / 2.0)
                / (2.0 * PI);
            assert!((loops - loops.round()).abs() < 1e-10, "n={n}: {loops}");
        }
    }

    #[test]
    fn spectrum_rows_and_csv() {
        let w = ho();
        let rows = spectrum(&w, Scheme::Ebk, 3, false, (0, 0)).unwrap();
        assert_eq!(rows.len(), 4);
        for (n, r) in rows.iter().enumerate() {
            assert_eq!(r.sector, "semiclassical");
            assert!((r.e_or_freq - (n as f64 + 0.5)).abs() < 1e-9);
        }

        let rows = spectrum(&w, Scheme::BohrSommerfeld, 3, false, (0, 0)).unwrap();
        assert_eq!(rows[0].sector, "degenerate");
        assert!(rows[0].e_or_freq.abs() < 1e-12);
        for n in 1..=3 {
            assert!((rows[n].e_or_freq - n as f64).abs() < 1e-9);
        }

        let rows = spectrum(&w, Scheme::BohrSommerfeld, 1, true, (-2, 2)).unwrap();
        let classical: Vec<&SpectrumRow> = rows.iter().filter(|r| r.sector == "classical").collect();
        assert_eq!(classical.len(), 5);
        let freqs: Vec<f64> = classical.iter().map(|r| r.e_or_freq).collect();
        for (k, want) in (-2..=2).enumerate() {
            assert!((freqs[k] - want as f64).abs() < 1e-9);
            assert!((classical[k].j - 1.0).abs() < 1e-12);
        }

        let csv = spectrum_csv(&rows);
        assert!(csv.starts_with("sector,n_or_nu,J,E_or_freq\n"));
        assert_eq!(csv.lines().count(), rows.len() + 1);
    }

    #[test]
    fn bs_and_ebk_differ_by_half_quantum() {
        let w = ho();
        for n in 1..=5 {
            let b = quantize_with(&w, Scheme::BohrSommerfeld, n, Normalization::UnitAmplitude).unwrap();
            let e = quantize_with(&w, Scheme::Ebk, n, Normalization::UnitAmplitude).unwrap();
            let gap = e.chart.e - b.chart.e;
            assert!((gap - 0.5).abs() < 1e-9, "gap at n={n}: {gap}");
        }
    }

    #[test]
    fn chart_action_recompute_matches() {
        for well in [ho(), quartic()] {
            for &j in &[0.5, 1.5, 3.5, 7.0] {
                let chart = ActionAngleChart::from_action(&well, j).unwrap();
                let back = action_of_energy(&well, chart.e).unwrap();
                assert!((back - j).abs() < 1e-9 * j.max(1.0), "J round trip: {back} vs {j}");
                assert!(chart.omega > 0.0);
            }
        }
    }

    #[test]
    fn quadrature_self_check_small_residual() {
        let q = quartic();
        for &e in &[0.3, 1.0, 4.0] {
            let (xm, xp) = turning_points(&q, e).unwrap();
            let r = quad_residual(xm, xp, |x| p_allowed(&q, e, x));
            assert!(r < 1e-10, "residual {r} at E={e}");
        }
    }

    #[test]
    fn config_table_has_flags() {
        // n large enough that the Airy windows do not swallow the well
        let w = ho();
        let e10 = quantize(&w, Scheme::Ebk, 10).unwrap();
        let xi = e10.chart.xi_plus;
        let csv = config_table_csv(&e10, &[0.0, xi, 8.0]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "x,re_phi,im_phi,region_flag");
        assert!(lines[1].ends_with(",allowed"), "{}", lines[1]);
        assert!(lines[2].ends_with(",window"), "{}", lines[2]);
        assert!(lines[3].ends_with(",forbidden"), "{}", lines[3]);
    }
}
