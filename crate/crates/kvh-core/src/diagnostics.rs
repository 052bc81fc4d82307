//! Inner products, physical-density checks, Gram matrices, and the exact
//! quantum harmonic-oscillator reference.
//!
//! The density functions quantify the apparent paradox of the transported
//! wave: |ψ|² alone is not the physical phase-space density. The corrected
//! f = |ψ|² + ∂_p(p|ψ|²) + ℏ·Im{ψ*, ψ} differs from |ψ|² by terms that
//! integrate to zero over momentum in the sharp-ridge limit, and the reports
//! here measure how fast that limit is approached on finite grids.

use crate::eigen::{airy_scale, eval_config_space, quantize, Scheme, SemiclassicalEigenfunction};
use crate::error::{KvhError, Result};
use crate::propagators::{uniform_axis, ConfigGrid, PhaseSpaceGrid, P_BOUNDARY_LIMIT};
use crate::systems::catalog;
use num_complex::Complex64;
use serde::Serialize;
use std::collections::BTreeMap;

/// Highest Hermite index the scaled recurrence is warranted for.
pub const MAX_HERMITE_INDEX: usize = 200;

/// 4th-order first derivative of a sampled line: central stencils inside,
/// one-sided 4th-order closures on the outermost two nodes of each end.
fn d4_line<T>(f: &[T], h: f64) -> Vec<T>
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    let n = f.len();
    assert!(n >= 7, "4th-order stencils need at least seven nodes");
    let c = 1.0 / (12.0 * h);
    let mut d = Vec::with_capacity(n);
    for i in 0..n {
        let v = if i >= 2 && i + 2 < n {
            f[i - 2] * c + f[i - 1] * (-8.0 * c) + f[i + 1] * (8.0 * c) + f[i + 2] * (-c)
        } else if i < 2 {
            f[i] * (-25.0 * c)
                + f[i + 1] * (48.0 * c)
                + f[i + 2] * (-36.0 * c)
                + f[i + 3] * (16.0 * c)
                + f[i + 4] * (-3.0 * c)
        } else {
            f[i] * (25.0 * c)
                + f[i - 1] * (-48.0 * c)
                + f[i - 2] * (36.0 * c)
                + f[i - 3] * (-16.0 * c)
                + f[i - 4] * (3.0 * c)
        };
        d.push(v);
    }
    d
}

fn trapezoid_weight(i: usize, n: usize) -> f64 {
    if i == 0 || i == n - 1 {
        0.5
    } else {
        1.0
    }
}

/// The physical density f, its deviation δf from |ψ|², and the per-x
/// momentum integrals of δf, plain and weighted by the test-function
/// catalog {1, x, p, x², p², xp}.
#[derive(Debug, Clone, Serialize)]
pub struct DensityReport {
    pub x_axis: Vec<f64>,
    pub p_axis: Vec<f64>,
    /// f(x, p) rows indexed by x.
    pub f_grid: Vec<Vec<f64>>,
    pub delta_f_grid: Vec<Vec<f64>>,
    /// ∫δf dp at each x (trapezoid).
    pub integral_delta_f_per_x: Vec<f64>,
    /// ∫g·δf dp at each x, keyed by the test-function name.
    pub weighted_integrals: BTreeMap<String, Vec<f64>>,
    /// Largest real part the (purely imaginary) Poisson bracket carried
    /// before it was discarded.
    pub max_imag_residue: f64,
}

impl DensityReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("density report serializes")
    }

    /// Largest |∫δf dp| over x for the named weight ("1" is the plain one).
    pub fn max_weighted(&self, name: &str) -> Option<f64> {
        self.weighted_integrals
            .get(name)
            .map(|v| v.iter().fold(0.0f64, |a, &b| a.max(b.abs())))
    }
}

/// f = |ψ|² + ∂_p(p|ψ|²) + ℏ·Im{ψ*, ψ} with {ψ*, ψ} = ∂ₓψ*·∂_pψ − ∂_pψ*·∂ₓψ,
/// every derivative a 4th-order stencil. Requires the same momentum-boundary
/// decay as the projection: the correction terms are surface-free only when
/// nothing lives at the p edges.
pub fn physical_density(grid: &PhaseSpaceGrid) -> Result<DensityReport> {
    grid.validate()?;
    let (nx, np) = (grid.nx(), grid.np());
    let mut worst = 0.0f64;
    for ix in 0..nx {
        worst = worst.max(grid.values[ix * np].norm());
        worst = worst.max(grid.values[ix * np + np - 1].norm());
    }
    if worst > P_BOUNDARY_LIMIT {
        return Err(KvhError::BoundaryLeak { magnitude: worst, limit: P_BOUNDARY_LIMIT });
    }
    let (dx, dp) = (grid.dx(), grid.dp());

    // d/dx runs across rows; work column by column
    let mut dpsi_dx = vec![Complex64::new(0.0, 0.0); nx * np];
    let mut col = vec![Complex64::new(0.0, 0.0); nx];
    for ip in 0..np {
        for ix in 0..nx {
            col[ix] = grid.values[ix * np + ip];
        }
        for (ix, v) in d4_line(&col, dx).into_iter().enumerate() {
            dpsi_dx[ix * np + ip] = v;
        }
    }

    let mut f_grid = Vec::with_capacity(nx);
    let mut delta_f_grid = Vec::with_capacity(nx);
    let mut integral = Vec::with_capacity(nx);
    let names = ["1", "x", "p", "x2", "p2", "xp"];
    let mut weighted: BTreeMap<String, Vec<f64>> =
        names.iter().map(|n| (n.to_string(), Vec::with_capacity(nx))).collect();
    let mut residue = 0.0f64;
    let hbar = grid.hbar;

    for ix in 0..nx {
        let x = grid.x_axis[ix];
        let row = &grid.values[ix * np..(ix + 1) * np];
        let dpsi_dp = d4_line(row, dp);
        let dens: Vec<f64> = row.iter().map(|v| v.norm_sqr()).collect();
        let p_dens: Vec<f64> =
            dens.iter().zip(&grid.p_axis).map(|(&d, &p)| p * d).collect();
        let dp_p_dens = d4_line(&p_dens, dp);
        let mut f_row = Vec::with_capacity(np);
        let mut df_row = Vec::with_capacity(np);
        for ip in 0..np {
            // {psi*, psi} is purely imaginary; its real part is rounding noise
            let a = dpsi_dx[ix * np + ip];
            let b = dpsi_dp[ip];
            let bracket = a.conj() * b - b.conj() * a;
            residue = residue.max(bracket.re.abs());
            let df = dp_p_dens[ip] + hbar * bracket.im;
            df_row.push(df);
            f_row.push(dens[ip] + df);
        }
        let mut plain = 0.0;
        let mut sums = [0.0f64; 6];
        for ip in 0..np {
            let p = grid.p_axis[ip];
            let w = trapezoid_weight(ip, np) * dp;
            let v = df_row[ip] * w;
            plain += v;
            sums[0] += v;
            sums[1] += x * v;
            sums[2] += p * v;
            sums[3] += x * x * v;
            sums[4] += p * p * v;
            sums[5] += x * p * v;
        }
        integral.push(plain);
        for (name, s) in names.iter().zip(sums) {
            weighted.get_mut(*name).unwrap().push(s);
        }
        f_grid.push(f_row);
        delta_f_grid.push(df_row);
    }
    debug_assert!(residue < 1e-12, "Poisson bracket grew a real part: {residue:e}");
    Ok(DensityReport {
        x_axis: grid.x_axis.clone(),
        p_axis: grid.p_axis.clone(),
        f_grid,
        delta_f_grid,
        integral_delta_f_per_x: integral,
        weighted_integrals: weighted,
        max_imag_residue: residue,
    })
}

/// Trapezoidal ⟨a|b⟩ = ∫a*·b dx over a shared axis.
pub fn inner_product_config(a: &ConfigGrid, b: &ConfigGrid) -> Result<Complex64> {
    if a.x_axis.len() != b.x_axis.len()
        || a.x_axis.iter().zip(&b.x_axis).any(|(u, v)| (u - v).abs() > 1e-12)
    {
        return Err(KvhError::AxisMismatch { axis: "x" });
    }
    let n = a.x_axis.len();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        acc += a.values[i].conj() * b.values[i] * trapezoid_weight(i, n);
    }
    Ok(acc * a.dx())
}

/// Trapezoidal ⟨A|B⟩ = ∬A*·B dx dp over shared axes.
pub fn inner_product_phase(a: &PhaseSpaceGrid, b: &PhaseSpaceGrid) -> Result<Complex64> {
    if a.x_axis.len() != b.x_axis.len()
        || a.x_axis.iter().zip(&b.x_axis).any(|(u, v)| (u - v).abs() > 1e-12)
    {
        return Err(KvhError::AxisMismatch { axis: "x" });
    }
    if a.p_axis.len() != b.p_axis.len()
        || a.p_axis.iter().zip(&b.p_axis).any(|(u, v)| (u - v).abs() > 1e-12)
    {
        return Err(KvhError::AxisMismatch { axis: "p" });
    }
    let (nx, np) = (a.nx(), a.np());
    let mut acc = Complex64::new(0.0, 0.0);
    for ix in 0..nx {
        let wx = trapezoid_weight(ix, nx);
        for ip in 0..np {
            let w = wx * trapezoid_weight(ip, np);
            acc += a.values[ix * np + ip].conj() * b.values[ix * np + ip] * w;
        }
    }
    Ok(acc * a.dx() * a.dp())
}

/// Unit-normalized Hermite-Gaussian eigenfunction of the quantum harmonic
/// oscillator, built by the scaled three-term recurrence
/// hₙ₊₁ = ξ√(2/(n+1))·hₙ − √(n/(n+1))·hₙ₋₁ on hₙ = Hₙ(ξ)e^{−ξ²/2}/√(2ⁿn!√π),
/// with the Gaussian factor carried in log form so deep tails neither
/// underflow the start of the recurrence nor overflow its growth.
pub fn exact_ho_eigenfunction(
    m: f64,
    omega: f64,
    hbar: f64,
    n: usize,
    x_axis: Vec<f64>,
) -> Result<ConfigGrid> {
    assert!(n <= MAX_HERMITE_INDEX, "recurrence warranted only for n <= 200");
    assert!(m > 0.0 && omega > 0.0 && hbar > 0.0);
    let alpha = (m * omega / hbar).sqrt();
    let quarter = (m * omega / (std::f64::consts::PI * hbar)).powf(0.25);
    let values: Vec<Complex64> = x_axis
        .iter()
        .map(|&x| {
            let xi = alpha * x;
            let mut shift = 0.0f64;
            let mut vm = 0.0f64;
            let mut v = 1.0f64;
            for j in 0..n {
                let jv = j as f64;
                let next =
                    xi * (2.0 / (jv + 1.0)).sqrt() * v - (jv / (jv + 1.0)).sqrt() * vm;
                vm = v;
                v = next;
                if v.abs() > 1e100 {
                    v *= 1e-100;
                    vm *= 1e-100;
                    shift += 100.0 * std::f64::consts::LN_10;
                }
            }
            Complex64::new(quarter * v * (shift - 0.5 * xi * xi).exp(), 0.0)
        })
        .collect();
    ConfigGrid::new(x_axis, values, 0.0, hbar)
}

/// How a JWKB harmonic-oscillator eigenfunction compares against the exact
/// quantum one: quantized vs exact energy, and the relative L2 distance of
/// the waveforms away from the turning points.
#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub n: usize,
    pub scheme: String,
    pub m: f64,
    pub omega: f64,
    pub hbar: f64,
    pub energy_semiclassical: f64,
    pub energy_exact: f64,
    pub energy_error: f64,
    /// Masked, dual-normalized relative L2 distance of the waveforms.
    pub rel_l2_error: f64,
    /// Half-width of each exclusion window, in x units.
    pub window_radius: f64,
    pub kept_fraction: f64,
}

impl CompareReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("compare report serializes")
    }
}

/// Exclusion half-width used by the waveform comparison: two Airy lengths
/// with the conventional length (ℏ²/(2m|U′|))^{1/3}, i.e. 2^{2/3} of the
/// library's δ_tp scale.
pub const COMPARISON_WINDOW_DELTA_TP: f64 = 1.587401051968199;

const COMPARISON_POINTS: usize = 40_001;

/// Compare the semiclassical harmonic-oscillator eigenfunction to the exact
/// Hermite-Gaussian. Both waveforms are restricted to the points farther
/// than the window radius from either turning point, unit-normalized on
/// that common set, and differenced in L2. EBK energies are exact for this
/// well; Bohr-Sommerfeld sits exactly ℏω/2 low.
pub fn compare_to_exact(
    m: f64,
    omega: f64,
    hbar: f64,
    n: usize,
    scheme: Scheme,
) -> Result<CompareReport> {
    let well = catalog("ho", &[("m".to_string(), m), ("omega".to_string(), omega)], hbar)
        .expect("catalog has the harmonic oscillator");
    let eig = quantize(&well, scheme, n)?;
    let xi = eig.chart.xi_plus;
    let x0 = (hbar / (m * omega)).sqrt();
    let radius = COMPARISON_WINDOW_DELTA_TP * airy_scale(&well, xi);
    let span = (xi + 8.0 * x0).min(well.domain.1 * (1.0 - 1e-12));
    let axis = uniform_axis(-span, span, COMPARISON_POINTS);
    let h = axis[1] - axis[0];
    let exact = exact_ho_eigenfunction(m, omega, hbar, n, axis.clone())?;
    let mut jwkb_kept = Vec::new();
    let mut exact_kept = Vec::new();
    for (i, &x) in axis.iter().enumerate() {
        if (x.abs() - xi).abs() < radius {
            continue;
        }
        jwkb_kept.push(eval_config_space(&eig, x)?.value.re);
        exact_kept.push(exact.values[i].re);
    }
    let kept_fraction = jwkb_kept.len() as f64 / axis.len() as f64;
    let sj = (jwkb_kept.iter().map(|v| v * v).sum::<f64>() * h).sqrt();
    let se = (exact_kept.iter().map(|v| v * v).sum::<f64>() * h).sqrt();
    let rel = (jwkb_kept
        .iter()
        .zip(&exact_kept)
        .map(|(j, e)| (j / sj - e / se).powi(2))
        .sum::<f64>()
        * h)
        .sqrt();
    let energy_exact = hbar * omega * (n as f64 + 0.5);
    Ok(CompareReport {
        n,
        scheme: match scheme {
            Scheme::Ebk => "ebk".to_string(),
            Scheme::BohrSommerfeld => "bohr-sommerfeld".to_string(),
        },
        m,
        omega,
        hbar,
        energy_semiclassical: eig.chart.e,
        energy_exact,
        energy_error: eig.chart.e - energy_exact,
        rel_l2_error: rel,
        window_radius: radius,
        kept_fraction,
    })
}

const GRAM_POINTS: usize = 120_001;

/// Gram matrix of JWKB eigenfunctions under the configuration-space inner
/// product, with the turning-point windows handled consistently: each state
/// is unit-normalized on its own windows-excluded set (default window
/// multiplier), and each entry integrates over the complement of the union
/// of the two states' windows, so the diagonal is exactly 1. Plain
/// Riemann-sum quadrature over the shared well domain.
pub fn orthonormality_matrix(
    eigs: &[SemiclassicalEigenfunction],
) -> Result<Vec<Vec<Complex64>>> {
    assert!(!eigs.is_empty(), "need at least one state");
    let well = &eigs[0].chart.well;
    for e in eigs {
        let w = &e.chart.well;
        assert!(
            (w.m - well.m).abs() < 1e-12
                && (w.hbar - well.hbar).abs() < 1e-12
                && (w.domain.0 - well.domain.0).abs() < 1e-12
                && (w.domain.1 - well.domain.1).abs() < 1e-12,
            "Gram matrix needs a common well"
        );
    }
    let axis = uniform_axis(well.domain.0, well.domain.1, GRAM_POINTS);
    let h = axis[1] - axis[0];
    let mut vals: Vec<Vec<Complex64>> = Vec::with_capacity(eigs.len());
    let mut masks: Vec<Vec<bool>> = Vec::with_capacity(eigs.len());
    for eig in eigs {
        let mut v = vec![Complex64::new(0.0, 0.0); axis.len()];
        let mut mask = vec![false; axis.len()];
        for (i, &x) in axis.iter().enumerate() {
            if eig.chart.in_turning_window(x, 2.0) {
                continue;
            }
            mask[i] = true;
            v[i] = eval_config_space(eig, x)?.value;
        }
        let norm = (v
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| m)
            .map(|(u, _)| u.norm_sqr())
            .sum::<f64>()
            * h)
            .sqrt();
        for u in &mut v {
            *u /= norm;
        }
        vals.push(v);
        masks.push(mask);
    }
    let k = eigs.len();
    let mut gram = vec![vec![Complex64::new(0.0, 0.0); k]; k];
    for i in 0..k {
        for j in 0..k {
            let mut acc = Complex64::new(0.0, 0.0);
            for idx in 0..axis.len() {
                if masks[i][idx] && masks[j][idx] {
                    acc += vals[i][idx].conj() * vals[j][idx];
                }
            }
            gram[i][j] = acc * h;
        }
    }
    Ok(gram)
}
