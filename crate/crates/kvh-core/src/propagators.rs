//! Semi-Lagrangian propagators on phase-space and configuration grids.
//!
//! Five transport rules share one mechanism: trace the characteristic through
//! each output node backward to the initial time, interpolate the initial
//! grid there, and multiply by a kernel weight built from the accumulated
//! action and the tangent map. In canonical coordinates the flow is
//! area-preserving, so det ∂z₀/∂z stays 1; it is computed from the tangent
//! map anyway and enters the weights as written, doubling as an integration
//! diagnostic.

use crate::characteristics::{integrate, IntegrateOptions, Trajectory};
use crate::deltas::{DeltaFamily, GeneralizedDelta};
use crate::eigen::{
    self, action_of_energy, energy_of_action, forbidden_action_wtilde, hamilton_principal_w,
    Branch, Scheme, SemiclassicalEigenfunction,
};
use crate::error::{KvhError, Result};
use crate::systems::HamiltonianField;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_4;

/// |values| allowed at the p-axis edges before projection refuses to drop
/// the momentum-divergence surface term.
pub const P_BOUNDARY_LIMIT: f64 = 1e-10;

/// Below this magnitude a tangent entry counts as zero when classifying
/// caustic crossings.
const CAUSTIC_TOL: f64 = 1e-12;

const AXIS_TOL: f64 = 1e-12;

/// Which transport rule the backward-trace weight implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropagatorKind {
    /// Plain advection of the scalar value, weight 1.
    Scalar,
    /// Density advection, weight |det ∂z₀/∂z|.
    Lve,
    /// Half-density advection, weight (det ∂z₀/∂z)^{1/2}.
    Kvn,
    /// Half-density with the Lagrangian phase e^{iΔS/ℏ}.
    KvhPhaseSpace,
    /// Lagrangian phase with the configuration-space Jacobian factor
    /// |∂x/∂x₀|^{1/2} and a branch phase per caustic crossing.
    KvhSemiclassical,
}

/// Interpolation rule for reading the initial grid at traced-back points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    /// Catmull-Rom bicubic, exact through quadratics.
    #[default]
    Bicubic,
    /// Bilinear, for debugging and for fields too rough for cubics.
    Linear,
}

#[derive(Debug, Clone, Copy)]
pub struct PropagateOptions {
    pub rtol: f64,
    pub atol: f64,
    pub interpolation: Interpolation,
    /// Explicit validity box (x_lo, x_hi, p_lo, p_hi). When absent the data
    /// box is inflated by the excursion of trial trajectories.
    pub validity: Option<(f64, f64, f64, f64)>,
    /// Worker threads for the per-node traces (they are independent).
    pub threads: usize,
}

impl Default for PropagateOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            interpolation: Interpolation::Bicubic,
            validity: None,
            threads: 1,
        }
    }
}

/// Evenly spaced axis with exact endpoints.
pub fn uniform_axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "an axis needs at least two nodes");
    assert!(hi > lo, "axis endpoints must be increasing");
    let step = (hi - lo) / (n - 1) as f64;
    let mut v: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
    v[n - 1] = hi;
    v
}

fn check_axis(axis: &[f64], name: &'static str) -> Result<f64> {
    if axis.len() < 2 {
        return Err(KvhError::AxisMismatch { axis: name });
    }
    let step = (axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64;
    if !(step > 0.0) || !step.is_finite() {
        return Err(KvhError::AxisMismatch { axis: name });
    }
    let tol = AXIS_TOL * step.abs().max(1.0);
    for w in axis.windows(2) {
        if (w[1] - w[0] - step).abs() > tol {
            return Err(KvhError::AxisMismatch { axis: name });
        }
    }
    Ok(step)
}

fn axes_agree(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(u, v)| (u - v).abs() <= AXIS_TOL)
}

/// ψ(t, z) sampled on a rectangular phase-space grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpaceGrid {
    pub x_axis: Vec<f64>,
    pub p_axis: Vec<f64>,
    /// Row-major: values[ix * p_axis.len() + ip].
    pub values: Vec<Complex64>,
    pub t: f64,
    pub hbar: f64,
}

impl PhaseSpaceGrid {
    pub fn new(
        x_axis: Vec<f64>,
        p_axis: Vec<f64>,
        values: Vec<Complex64>,
        t: f64,
        hbar: f64,
    ) -> Result<Self> {
        let grid = Self { x_axis, p_axis, values, t, hbar };
        grid.validate()?;
        Ok(grid)
    }

    /// Re-checks the construction invariants (uniform increasing axes, the
    /// value count, finiteness). Deserialized grids should pass through this.
    pub fn validate(&self) -> Result<()> {
        check_axis(&self.x_axis, "x")?;
        check_axis(&self.p_axis, "p")?;
        if self.values.len() != self.x_axis.len() * self.p_axis.len() {
            return Err(KvhError::AxisMismatch { axis: "values" });
        }
        if !self.t.is_finite() || !self.hbar.is_finite() || self.hbar <= 0.0 {
            return Err(KvhError::AxisMismatch { axis: "values" });
        }
        if self.values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(KvhError::AxisMismatch { axis: "values" });
        }
        Ok(())
    }

    pub fn zeros(x_axis: Vec<f64>, p_axis: Vec<f64>, t: f64, hbar: f64) -> Result<Self> {
        let n = x_axis.len() * p_axis.len();
        Self::new(x_axis, p_axis, vec![Complex64::new(0.0, 0.0); n], t, hbar)
    }

    pub fn nx(&self) -> usize {
        self.x_axis.len()
    }

    pub fn np(&self) -> usize {
        self.p_axis.len()
    }

    pub fn dx(&self) -> f64 {
        (self.x_axis[self.nx() - 1] - self.x_axis[0]) / (self.nx() - 1) as f64
    }

    pub fn dp(&self) -> f64 {
        (self.p_axis[self.np() - 1] - self.p_axis[0]) / (self.np() - 1) as f64
    }

    pub fn idx(&self, ix: usize, ip: usize) -> usize {
        ix * self.np() + ip
    }

    pub fn value(&self, ix: usize, ip: usize) -> Complex64 {
        self.values[ix * self.p_axis.len() + ip]
    }

    pub fn set_value(&mut self, ix: usize, ip: usize, v: Complex64) {
        let k = self.idx(ix, ip);
        self.values[k] = v;
    }

    fn sample(&self, ix: i64, ip: i64) -> Complex64 {
        // zero padding outside the data box
        if ix < 0 || ip < 0 || ix >= self.nx() as i64 || ip >= self.np() as i64 {
            Complex64::new(0.0, 0.0)
        } else {
            self.values[ix as usize * self.np() + ip as usize]
        }
    }

    /// Interpolated value at an arbitrary point, zero outside the data box.
    pub fn interpolate(&self, x: f64, p: f64, interp: Interpolation) -> Complex64 {
        let fx = (x - self.x_axis[0]) / self.dx();
        let fp = (p - self.p_axis[0]) / self.dp();
        let (nx, np) = (self.nx() as f64, self.np() as f64);
        if fx < -2.0 || fx > nx + 1.0 || fp < -2.0 || fp > np + 1.0 {
            return Complex64::new(0.0, 0.0);
        }
        match interp {
            Interpolation::Linear => {
                let ix = fx.floor();
                let ip = fp.floor();
                let (sx, sp) = (fx - ix, fp - ip);
                let (ix, ip) = (ix as i64, ip as i64);
                self.sample(ix, ip) * ((1.0 - sx) * (1.0 - sp))
                    + self.sample(ix + 1, ip) * (sx * (1.0 - sp))
                    + self.sample(ix, ip + 1) * ((1.0 - sx) * sp)
                    + self.sample(ix + 1, ip + 1) * (sx * sp)
            }
            Interpolation::Bicubic => {
                let ix = fx.floor();
                let ip = fp.floor();
                let wx = catmull_rom_weights(fx - ix);
                let wp = catmull_rom_weights(fp - ip);
                let (ix, ip) = (ix as i64, ip as i64);
                let mut acc = Complex64::new(0.0, 0.0);
                for (a, wa) in wx.iter().enumerate() {
                    if *wa == 0.0 {
                        continue;
                    }
                    let mut row = Complex64::new(0.0, 0.0);
                    for (b, wb) in wp.iter().enumerate() {
                        row += self.sample(ix - 1 + a as i64, ip - 1 + b as i64) * *wb;
                    }
                    acc += row * *wa;
                }
                acc
            }
        }
    }

    /// Phase-space L2 norm, trapezoidal in both axes.
    pub fn l2_norm(&self) -> f64 {
        let (nx, np) = (self.nx(), self.np());
        let mut acc = 0.0;
        for ix in 0..nx {
            let wx = if ix == 0 || ix == nx - 1 { 0.5 } else { 1.0 };
            for ip in 0..np {
                let wp = if ip == 0 || ip == np - 1 { 0.5 } else { 1.0 };
                acc += wx * wp * self.values[ix * np + ip].norm_sqr();
            }
        }
        (acc * self.dx() * self.dp()).sqrt()
    }

    /// Plain cell-sum mass, Σ|values|·cell area. The conserved quantity of
    /// density advection.
    pub fn mass(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).sum::<f64>() * self.dx() * self.dp()
    }

    /// CSV dump (x, p, re, im), row-major. Meant for small grids.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,p,re,im\n");
        for (ix, &x) in self.x_axis.iter().enumerate() {
            for (ip, &p) in self.p_axis.iter().enumerate() {
                let v = self.values[ix * self.np() + ip];
                out.push_str(&format!("{:.16e},{:.16e},{:.16e},{:.16e}\n", x, p, v.re, v.im));
            }
        }
        out
    }

    /// Flat little-endian layout: counts (u64 nx, np), axis endpoints, time
    /// and ℏ as f64, then row-major re/im pairs.
    pub fn to_binary(&self) -> Vec<u8> {
        let (nx, np) = (self.nx(), self.np());
        let mut out = Vec::with_capacity(16 + 48 + 16 * nx * np);
        out.extend_from_slice(&(nx as u64).to_le_bytes());
        out.extend_from_slice(&(np as u64).to_le_bytes());
        for v in [
            self.x_axis[0],
            self.x_axis[nx - 1],
            self.p_axis[0],
            self.p_axis[np - 1],
            self.t,
            self.hbar,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.re.to_le_bytes());
            out.extend_from_slice(&v.im.to_le_bytes());
        }
        out
    }

    pub fn from_binary(bytes: &[u8]) -> Result<Self> {
        let (head, rest) = read_header(bytes, 2, 6)?;
        let (nx, np) = (head.0[0] as usize, head.0[1] as usize);
        let [x_lo, x_hi, p_lo, p_hi, t, hbar] = <[f64; 6]>::try_from(&head.1[..]).unwrap();
        if nx < 2 || np < 2 || !(x_hi > x_lo) || !(p_hi > p_lo) {
            return Err(KvhError::AxisMismatch { axis: "values" });
        }
        let values = read_complex_payload(rest, nx * np)?;
        Self::new(uniform_axis(x_lo, x_hi, nx), uniform_axis(p_lo, p_hi, np), values, t, hbar)
    }
}

/// ψ(t, x) sampled on a configuration-space grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigGrid {
    pub x_axis: Vec<f64>,
    pub values: Vec<Complex64>,
    pub t: f64,
    pub hbar: f64,
}

impl ConfigGrid {
    pub fn new(x_axis: Vec<f64>, values: Vec<Complex64>, t: f64, hbar: f64) -> Result<Self> {
        let grid = Self { x_axis, values, t, hbar };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        check_axis(&self.x_axis, "x")?;
        if self.values.len() != self.x_axis.len() {
            return Err(KvhError::AxisMismatch { axis: "values" });
        }
        if !self.t.is_finite() || !self.hbar.is_finite() || self.hbar <= 0.0 {
            return Err(KvhError::AxisMismatch { axis: "values" });
        }
        if self.values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(KvhError::AxisMismatch { axis: "values" });
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_axis[self.x_axis.len() - 1] - self.x_axis[0]) / (self.x_axis.len() - 1) as f64
    }

    /// Configuration-space L2 norm, trapezoidal.
    pub fn l2_norm(&self) -> f64 {
        let n = self.x_axis.len();
        let mut acc = 0.0;
        for (i, v) in self.values.iter().enumerate() {
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            acc += w * v.norm_sqr();
        }
        (acc * self.dx()).sqrt()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,re,im\n");
        for (i, &x) in self.x_axis.iter().enumerate() {
            let v = self.values[i];
            out.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", x, v.re, v.im));
        }
        out
    }

    pub fn to_binary(&self) -> Vec<u8> {
        let n = self.x_axis.len();
        let mut out = Vec::with_capacity(8 + 32 + 16 * n);
        out.extend_from_slice(&(n as u64).to_le_bytes());
        for v in [self.x_axis[0], self.x_axis[n - 1], self.t, self.hbar] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.re.to_le_bytes());
            out.extend_from_slice(&v.im.to_le_bytes());
        }
        out
    }

    pub fn from_binary(bytes: &[u8]) -> Result<Self> {
        let (head, rest) = read_header(bytes, 1, 4)?;
        let n = head.0[0] as usize;
        let [x_lo, x_hi, t, hbar] = <[f64; 4]>::try_from(&head.1[..]).unwrap();
        if n < 2 || !(x_hi > x_lo) {
            return Err(KvhError::AxisMismatch { axis: "values" });
        }
        let values = read_complex_payload(rest, n)?;
        Self::new(uniform_axis(x_lo, x_hi, n), values, t, hbar)
    }
}

#[allow(clippy::type_complexity)]
fn read_header(bytes: &[u8], n_u64: usize, n_f64: usize) -> Result<((Vec<u64>, Vec<f64>), &[u8])> {
    let need = 8 * (n_u64 + n_f64);
    if bytes.len() < need {
        return Err(KvhError::AxisMismatch { axis: "values" });
    }
    let mut counts = Vec::with_capacity(n_u64);
    let mut floats = Vec::with_capacity(n_f64);
    for i in 0..n_u64 {
        counts.push(u64::from_le_bytes(bytes[8 * i..8 * i + 8].try_into().unwrap()));
    }
    for i in 0..n_f64 {
        let off = 8 * (n_u64 + i);
        floats.push(f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()));
    }
    Ok(((counts, floats), &bytes[need..]))
}

fn read_complex_payload(bytes: &[u8], count: usize) -> Result<Vec<Complex64>> {
    if bytes.len() != 16 * count {
        return Err(KvhError::AxisMismatch { axis: "values" });
    }
    let mut values = Vec::with_capacity(count);
    for i in 0..count {
        let re = f64::from_le_bytes(bytes[16 * i..16 * i + 8].try_into().unwrap());
        let im = f64::from_le_bytes(bytes[16 * i + 8..16 * i + 16].try_into().unwrap());
        values.push(Complex64::new(re, im));
    }
    Ok(values)
}

fn catmull_rom_weights(s: f64) -> [f64; 4] {
    let s2 = s * s;
    let s3 = s2 * s;
    [
        0.5 * (-s3 + 2.0 * s2 - s),
        0.5 * (3.0 * s3 - 5.0 * s2 + 2.0),
        0.5 * (-3.0 * s3 + 4.0 * s2 + s),
        0.5 * (s3 - s2),
    ]
}

fn det2(m: [[f64; 2]; 2]) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// Normalized cross-correlation ⟨a, b⟩ / (‖a‖·‖b‖) over matching axes.
pub fn correlation(a: &PhaseSpaceGrid, b: &PhaseSpaceGrid) -> Result<Complex64> {
    if !axes_agree(&a.x_axis, &b.x_axis) {
        return Err(KvhError::AxisMismatch { axis: "x" });
    }
    if !axes_agree(&a.p_axis, &b.p_axis) {
        return Err(KvhError::AxisMismatch { axis: "p" });
    }
    let (nx, np) = (a.nx(), a.np());
    let mut acc = Complex64::new(0.0, 0.0);
    for ix in 0..nx {
        let wx = if ix == 0 || ix == nx - 1 { 0.5 } else { 1.0 };
        for ip in 0..np {
            let wp = if ip == 0 || ip == np - 1 { 0.5 } else { 1.0 };
            acc += a.values[ix * np + ip].conj() * b.values[ix * np + ip] * (wx * wp);
        }
    }
    Ok(acc * a.dx() * a.dp() / (a.l2_norm() * b.l2_norm()))
}

fn in_box(b: &(f64, f64, f64, f64), x: f64, p: f64) -> bool {
    x >= b.0 && x <= b.1 && p >= b.2 && p <= b.3
}

/// Data box inflated by the excursion of nine trial trajectories (corners,
/// edge midpoints, center) plus a 10% margin.
fn inflated_validity_box(
    field: &HamiltonianField,
    grid: &PhaseSpaceGrid,
    t1: f64,
    iopts: &IntegrateOptions,
) -> Result<(f64, f64, f64, f64)> {
    let (x_lo, x_hi) = (grid.x_axis[0], grid.x_axis[grid.nx() - 1]);
    let (p_lo, p_hi) = (grid.p_axis[0], grid.p_axis[grid.np() - 1]);
    let xm = 0.5 * (x_lo + x_hi);
    let pm = 0.5 * (p_lo + p_hi);
    let probes = [
        (x_lo, p_lo),
        (x_lo, pm),
        (x_lo, p_hi),
        (xm, p_lo),
        (xm, pm),
        (xm, p_hi),
        (x_hi, p_lo),
        (x_hi, pm),
        (x_hi, p_hi),
    ];
    let (mut a, mut b, mut c, mut d) = (x_lo, x_hi, p_lo, p_hi);
    for z in probes {
        let traj = integrate(field, z, t1, grid.t, iopts)?;
        for pt in &traj.points {
            a = a.min(pt.x);
            b = b.max(pt.x);
            c = c.min(pt.p);
            d = d.max(pt.p);
        }
    }
    let (mx, mp) = (0.1 * (b - a) + 1e-9, 0.1 * (d - c) + 1e-9);
    Ok((a - mx, b + mx, c - mp, d + mp))
}

/// Branch data for the semiclassical weight: the forward Jacobian entry
/// ∂x/∂x₀ at the arrival time and the number of times it crossed zero.
///
/// The trajectory is stored backward (t1 down to t0). With M(τ) = ∂z(τ)/∂z(t1)
/// and m = M(t0), the forward map from t0 is K(τ) = M(τ)·m⁻¹, whose (0,0)
/// entry starts at 1 and vanishes at each caustic.
fn semiclassical_branch(traj: &Trajectory) -> Result<(f64, usize)> {
    let pts = &traj.points;
    let m = pts.last().unwrap().tangent;
    let det = det2(m);
    let k00_of = |mt: [[f64; 2]; 2]| (mt[0][0] * m[1][1] - mt[0][1] * m[1][0]) / det;
    let mut crossings = 0usize;
    let mut last_sign = 0i8;
    for pt in pts.iter().rev() {
        let k00 = k00_of(pt.tangent);
        let s = if k00.abs() <= CAUSTIC_TOL {
            0
        } else if k00 > 0.0 {
            1
        } else {
            -1
        };
        if s == 0 {
            if last_sign != 0 {
                crossings += 1;
            }
            last_sign = 0;
        } else {
            if last_sign != 0 && s != last_sign {
                crossings += 1;
            }
            last_sign = s;
        }
    }
    let arrival = pts.first().unwrap();
    let k00 = k00_of(arrival.tangent);
    if k00.abs() <= CAUSTIC_TOL {
        return Err(KvhError::CausticUnresolved { t: arrival.t, k00 });
    }
    Ok((k00, crossings))
}

fn propagate_row(
    field: &HamiltonianField,
    grid: &PhaseSpaceGrid,
    t1: f64,
    kind: PropagatorKind,
    opts: &PropagateOptions,
    iopts: &IntegrateOptions,
    vbox: &(f64, f64, f64, f64),
    x: f64,
    out: &mut [Complex64],
) -> Result<()> {
    let hbar = grid.hbar;
    for (ip, &p) in grid.p_axis.iter().enumerate() {
        let traj = integrate(field, (x, p), t1, grid.t, iopts)?;
        for pt in &traj.points {
            if !in_box(vbox, pt.x, pt.p) {
                return Err(KvhError::OutOfDomain { x: pt.x, p: pt.p });
            }
        }
        let end = traj.points.last().unwrap();
        let det = end.det_tangent();
        // the stored action ran t1 -> t0; the kernel wants the forward ΔS
        let ds = -end.action;
        let psi0 = grid.interpolate(end.x, end.p, opts.interpolation);
        let weight = match kind {
            PropagatorKind::Scalar => Complex64::new(1.0, 0.0),
            PropagatorKind::Lve => Complex64::new(det.abs(), 0.0),
            PropagatorKind::Kvn => Complex64::new(det.abs().sqrt(), 0.0),
            PropagatorKind::KvhPhaseSpace => {
                Complex64::from_polar(det.abs().sqrt(), ds / hbar)
            }
            PropagatorKind::KvhSemiclassical => {
                let (k00, crossings) = semiclassical_branch(&traj)?;
                // one quarter phase back per caustic crossing, the same
                // convention as the stationary-wave turning points
                let phase = ds / hbar - FRAC_PI_4 * crossings as f64;
                let mag = det.abs() * k00.abs().sqrt();
                if det >= 0.0 {
                    Complex64::from_polar(mag, phase)
                } else {
                    Complex64::from_polar(mag, phase + std::f64::consts::PI)
                }
            }
        };
        out[ip] = psi0 * weight;
    }
    Ok(())
}

/// Evolve a phase-space grid from grid.t to t1 under the chosen transport
/// rule, one backward characteristic per node. t1 = grid.t returns the input
/// unchanged (no interpolation touches the values).
pub fn propagate(
    field: &HamiltonianField,
    grid: &PhaseSpaceGrid,
    t1: f64,
    kind: PropagatorKind,
    opts: &PropagateOptions,
) -> Result<PhaseSpaceGrid> {
    grid.validate()?;
    if t1 == grid.t {
        return Ok(grid.clone());
    }
    let mut iopts =
        IntegrateOptions { rtol: opts.rtol, atol: opts.atol, ..IntegrateOptions::default() };
    if kind == PropagatorKind::KvhSemiclassical {
        // dense enough sampling that no caustic crossing can hide in one step
        iopts.max_step = (t1 - grid.t).abs() / 32.0;
    }
    let vbox = match opts.validity {
        Some(b) => b,
        None => inflated_validity_box(field, grid, t1, &iopts)?,
    };
    let np = grid.np();
    let mut values = vec![Complex64::new(0.0, 0.0); grid.nx() * np];
    let threads = opts.threads.max(1).min(grid.nx());
    if threads == 1 {
        for (ix, &x) in grid.x_axis.iter().enumerate() {
            propagate_row(
                field,
                grid,
                t1,
                kind,
                opts,
                &iopts,
                &vbox,
                x,
                &mut values[ix * np..(ix + 1) * np],
            )?;
        }
    } else {
        let rows_per = grid.nx().div_ceil(threads);
        let results: Vec<Result<()>> = std::thread::scope(|scope| {
            let handles: Vec<_> = values
                .chunks_mut(rows_per * np)
                .enumerate()
                .map(|(chunk, slab)| {
                    let iopts = iopts;
                    let vbox = vbox;
                    scope.spawn(move || -> Result<()> {
                        for (row, out) in slab.chunks_mut(np).enumerate() {
                            let ix = chunk * rows_per + row;
                            propagate_row(
                                field,
                                grid,
                                t1,
                                kind,
                                opts,
                                &iopts,
                                &vbox,
                                grid.x_axis[ix],
                                out,
                            )?;
                        }
                        Ok(())
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("propagate worker panicked")).collect()
        });
        for r in results {
            r?;
        }
    }
    PhaseSpaceGrid::new(grid.x_axis.clone(), grid.p_axis.clone(), values, t1, grid.hbar)
}

/// ψ(t, x) = ∫ψ(t, x, p) dp by trapezoidal quadrature along each x row.
/// Requires the values to have decayed at the p edges, otherwise the
/// momentum-divergence surface term discarded by the projection would
/// actually contribute.
pub fn project_to_config(grid: &PhaseSpaceGrid) -> Result<ConfigGrid> {
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
    let dp = grid.dp();
    let values: Vec<Complex64> = (0..nx)
        .map(|ix| {
            let mut acc = Complex64::new(0.0, 0.0);
            for ip in 0..np {
                let w = if ip == 0 || ip == np - 1 { 0.5 } else { 1.0 };
                acc += grid.values[ix * np + ip] * w;
            }
            acc * dp
        })
        .collect();
    ConfigGrid::new(grid.x_axis.clone(), values, grid.t, grid.hbar)
}

/// What the forward trace saw: how many branches the image carries (a single
/// one, by the caustic-free precondition), the image interval, and the
/// smallest |∂x/∂x₀| met at arrival (the margin to the nearest focus).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BranchMetadata {
    pub branch_count: usize,
    pub image_span: (f64, f64),
    pub min_stretch: f64,
}

/// Single-branch configuration-space transport: forward-trace the
/// characteristics seeded on the initial momentum field p₀(x) = ∂ₓS(t0, x),
/// carry e^{iΔS/ℏ}·|∂x₀/∂x|^{1/2}, and resample the image onto a uniform
/// axis. Fails with the crossing time as soon as ∂x/∂x₀ (taken along the
/// seeded manifold) reaches zero, where the single-phase form breaks down.
pub fn propagate_config(
    field: &HamiltonianField,
    psi0: &ConfigGrid,
    p0_field: &dyn Fn(f64) -> f64,
    t1: f64,
    opts: &PropagateOptions,
) -> Result<(ConfigGrid, BranchMetadata)> {
    psi0.validate()?;
    let n = psi0.x_axis.len();
    if t1 == psi0.t {
        let meta = BranchMetadata {
            branch_count: 1,
            image_span: (psi0.x_axis[0], psi0.x_axis[n - 1]),
            min_stretch: 1.0,
        };
        return Ok((psi0.clone(), meta));
    }
    let iopts =
        IntegrateOptions { rtol: opts.rtol, atol: opts.atol, ..IntegrateOptions::default() };
    let hbar = psi0.hbar;
    let mut image: Vec<(f64, Complex64)> = Vec::with_capacity(n);
    let mut min_stretch = f64::INFINITY;
    for (i, &x0) in psi0.x_axis.iter().enumerate() {
        let p0 = p0_field(x0);
        let h = 1e-6 * (1.0 + x0.abs());
        let dp0 = (p0_field(x0 + h) - p0_field(x0 - h)) / (2.0 * h);
        let traj = integrate(field, (x0, p0), psi0.t, t1, &iopts)?;
        // ∂x/∂x₀ along the manifold δz₀ = (1, p₀'(x₀)) δx₀
        let mut prev: Option<(f64, f64)> = None;
        for pt in &traj.points {
            let d = pt.tangent[0][0] + pt.tangent[0][1] * dp0;
            if d.abs() <= CAUSTIC_TOL {
                return Err(KvhError::CausticReached { t: pt.t });
            }
            if let Some((tp, dprev)) = prev {
                if (d > 0.0) != (dprev > 0.0) {
                    let tc = tp + (pt.t - tp) * dprev / (dprev - d);
                    return Err(KvhError::CausticReached { t: tc });
                }
            }
            prev = Some((pt.t, d));
        }
        let end = traj.points.last().unwrap();
        let d_end = end.tangent[0][0] + end.tangent[0][1] * dp0;
        min_stretch = min_stretch.min(d_end.abs());
        let value =
            psi0.values[i] * Complex64::from_polar(1.0 / d_end.abs().sqrt(), end.action / hbar);
        image.push((end.x, value));
    }
    if image[0].0 > image[n - 1].0 {
        image.reverse();
    }
    // a caustic-free branch maps the axis monotonically; anything else means
    // a focus slipped between samples
    if image.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(KvhError::CausticReached { t: t1 });
    }
    let axis = uniform_axis(image[0].0, image[n - 1].0, n);
    let values: Vec<Complex64> = axis
        .iter()
        .map(|&x| {
            let j = match image.partition_point(|(xi, _)| *xi <= x) {
                0 => 0,
                k if k >= n => n - 2,
                k => k - 1,
            };
            let (xa, va) = image[j];
            let (xb, vb) = image[j + 1];
            let s = ((x - xa) / (xb - xa)).clamp(0.0, 1.0);
            va * (1.0 - s) + vb * s
        })
        .collect();
    let meta = BranchMetadata {
        branch_count: 1,
        image_span: (image[0].0, image[n - 1].0),
        min_stretch,
    };
    Ok((ConfigGrid::new(axis, values, t1, hbar)?, meta))
}

/// Largest ridge index that still leaves the mollified eigen-ridge at least
/// six p-cells wide where the torus moves fastest (the well minimum).
pub fn max_ridge_index(eig: &SemiclassicalEigenfunction, dp: f64) -> f64 {
    let chart = &eig.chart;
    let (xm, _) = chart.well.minimum();
    let p_max = chart.p_abs(xm).max(f64::MIN_POSITIVE);
    chart.well.m * chart.omega / (p_max * dp)
}

/// Finite-width phase-space eigenfunction: the δ(J − J₀) ridge mollified by
/// the index-k Gaussian model, carrying the stationary JWKB wave.
///
/// Pointwise: ψ(x, p) = v(x, sgn p)·|∂J/∂p|^{1/2}·G¹_k(J(x, p) − J₀), with
/// J(x, p) the action of the torus through (x, p) and |∂J/∂p| = |p|/(mω)
/// evaluated on that torus. The sheet values are the conjugate pair
/// v(x, ±) = a₊·e^{∓i(W₊(x)/ℏ − π/4)} in the allowed region (the right-moving
/// sheet advances its phase with x, so the transported phase matches the
/// accumulated ∫p dx along the flow) and the shared decaying tail
/// (±1)ⁿ·a₊·e^{−W̃(x)/ℏ} beyond the turning points. Their p-integral
/// reproduces the configuration-space wave 2a₊·cos(W₊/ℏ − π/4)·(mω/|p|)^{1/2}
/// as the ridge narrows.
pub fn eigen_ridge(
    eig: &SemiclassicalEigenfunction,
    x_axis: Vec<f64>,
    p_axis: Vec<f64>,
    k: f64,
) -> Result<PhaseSpaceGrid> {
    assert!(k > 0.0, "ridge index must be positive");
    let chart = &eig.chart;
    let well = &chart.well;
    let hbar = chart.hbar;
    let m = well.m;
    let j0 = chart.j;
    let caustic_offset = match eig.scheme {
        Scheme::Ebk => FRAC_PI_4,
        Scheme::BohrSommerfeld => 0.0,
    };
    let parity = if eig.n % 2 == 0 { 1.0 } else { -1.0 };
    let delta = GeneralizedDelta::new(DeltaFamily::Gaussian, 1.0, k);
    // the Gaussian model is dead beyond 12/k; bracket the live band in energy
    // once so off-ridge nodes cost one Hamiltonian evaluation each
    let reach = 12.0 / k;
    let umin = well.minimum().1;
    let e_lo = if j0 - reach <= 0.0 {
        umin
    } else {
        energy_of_action(well, j0 - reach)?.0
    };
    let e_hi = match energy_of_action(well, j0 + reach) {
        Ok((e, _)) => e,
        // ridge tail runs into the edge of the chartable well; cap there
        Err(_) => well.u(well.domain.0).min(well.u(well.domain.1)),
    };
    let np = p_axis.len();
    let mut values = vec![Complex64::new(0.0, 0.0); x_axis.len() * np];
    for (ix, &x) in x_axis.iter().enumerate() {
        let ux = well.u(x);
        let allowed = chart.in_allowed(x);
        // the x-dependent sheet factors are p-independent; hoist them
        let mut v_up = Complex64::new(0.0, 0.0);
        let mut v_dn = Complex64::new(0.0, 0.0);
        let mut have_v = false;
        for (ip, &p) in p_axis.iter().enumerate() {
            if p == 0.0 {
                continue; // |∂J/∂p|^{1/2} vanishes with p
            }
            let e = p * p / (2.0 * m) + ux;
            if e <= umin || e < e_lo || e > e_hi {
                continue;
            }
            let j = action_of_energy(well, e)?;
            let g = delta.eval(j - j0);
            if g == 0.0 {
                continue;
            }
            if !have_v {
                if allowed {
                    let w = hamilton_principal_w(chart, x, Branch::Plus)?;
                    let theta = w / hbar - caustic_offset;
                    v_up = eig.a_plus * Complex64::from_polar(1.0, -theta);
                    v_dn = eig.a_plus * Complex64::from_polar(1.0, theta);
                } else {
                    let side = if x >= chart.xi_plus { 1.0 } else { parity };
                    let wt = forbidden_action_wtilde(chart, x)?;
                    let tail = side * eig.a_plus * (-wt / hbar).exp();
                    v_up = tail;
                    v_dn = tail;
                }
                have_v = true;
            }
            let omega = eigen::omega_of_energy(well, e)?;
            let amp = (p.abs() / (m * omega)).sqrt();
            let v = if p > 0.0 { v_up } else { v_dn };
            values[ix * np + ip] = v * amp * g;
        }
    }
    PhaseSpaceGrid::new(x_axis, p_axis, values, 0.0, hbar)
}

/// Minimum-uncertainty blob centered at (x̄, p̄) with the symmetrized plane
/// wave e^{i[p̄(x − x̄) − x̄(p − p̄)]/ℏ}, unit phase-space L2 norm.
pub fn gaussian_blob(
    x_axis: Vec<f64>,
    p_axis: Vec<f64>,
    center: (f64, f64),
    sigma: (f64, f64),
    t: f64,
    hbar: f64,
) -> Result<PhaseSpaceGrid> {
    assert!(sigma.0 > 0.0 && sigma.1 > 0.0, "blob widths must be positive");
    let (xc, pc) = center;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * sigma.0 * sigma.1).sqrt();
    let np = p_axis.len();
    let mut values = vec![Complex64::new(0.0, 0.0); x_axis.len() * np];
    for (ix, &x) in x_axis.iter().enumerate() {
        let gx = (-((x - xc) * (x - xc)) / (4.0 * sigma.0 * sigma.0)).exp();
        for (ip, &p) in p_axis.iter().enumerate() {
            let gp = (-((p - pc) * (p - pc)) / (4.0 * sigma.1 * sigma.1)).exp();
            let phase = (pc * (x - xc) - xc * (p - pc)) / hbar;
            values[ix * np + ip] = Complex64::from_polar(norm * gx * gp, phase);
        }
    }
    PhaseSpaceGrid::new(x_axis, p_axis, values, t, hbar)
}
