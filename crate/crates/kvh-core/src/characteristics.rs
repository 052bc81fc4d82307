//! Characteristic curves of the transport equations: Hamilton's equations
//! integrated jointly with the accumulated action dS/dt = p·∂H/∂p − H and the
//! tangent map Ṁ = A(t)·M, where A is the linearization of the flow. The same
//! curves underlie the LVE, KvN and KvH propagators; the tangent entry
//! M₀₀ = ∂x/∂x₀|_{p₀} carries the caustic structure.

use crate::error::{KvhError, Result};
use crate::systems::{HamiltonianField, SeparableWell};
use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub x: f64,
    pub p: f64,
    /// Accumulated ΔS from the start of the trajectory.
    pub action: f64,
    /// M = ∂(x,p)/∂(x₀,p₀), row-major.
    pub tangent: [[f64; 2]; 2],
}

impl TrajectoryPoint {
    pub fn det_tangent(&self) -> f64 {
        self.tangent[0][0] * self.tangent[1][1] - self.tangent[0][1] * self.tangent[1][0]
    }
}

#[derive(Clone)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    /// The field the trajectory was integrated in (kept so caustic refinement
    /// and diagnostics can re-evaluate the dynamics).
    pub field: HamiltonianField,
}

#[derive(Debug, Clone, Copy)]
pub struct IntegrateOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Optional cap on |h|; useful when the caller wants dense output.
    pub max_step: f64,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-12, max_steps: 2_000_000, max_step: f64::INFINITY }
    }
}

/// Joint state: x, p, S, M00, M01, M10, M11.
type State = [f64; 7];

fn rhs(field: &HamiltonianField, t: f64, y: &State) -> State {
    let (x, p) = (y[0], y[1]);
    let pc = Complex64::new(p, 0.0);
    let hp = field.dh_dp(t, x, pc).re;
    let hx = field.dh_dx(t, x, pc).re;
    let (hxx, hxp, hpp) = field.second_partials_real(t, x, p);
    let l = p * hp - field.h(t, x, pc).re;
    // A = [[hxp, hpp], [-hxx, -hxp]]
    let (m00, m01, m10, m11) = (y[3], y[4], y[5], y[6]);
    [
        hp,
        -hx,
        l,
        hxp * m00 + hpp * m10,
        hxp * m01 + hpp * m11,
        -hxx * m00 - hxp * m10,
        -hxx * m01 - hxp * m11,
    ]
}

// Dormand-Prince 5(4) tableau
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrate Hamilton's equations with action and tangent map from t0 to t1
/// (either direction). The state at every accepted step is stored, final time
/// exactly t1.
pub fn integrate(
    field: &HamiltonianField,
    z0: (f64, f64),
    t0: f64,
    t1: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    let mut points = Vec::new();
    let mut y: State = [z0.0, z0.1, 0.0, 1.0, 0.0, 0.0, 1.0];
    let mut t = t0;
    points.push(to_point(t, &y));
    if t1 == t0 {
        return Ok(Trajectory { points, field: field.clone() });
    }
    let dir = (t1 - t0).signum();
    let span = (t1 - t0).abs();
    let mut h = (span / 100.0).min(opts.max_step).max(1e-10) * dir;
    let mut k1 = rhs(field, t, &y);
    let min_step = span * 1e-14;
    for _ in 0..opts.max_steps {
        if (t - t1) * dir >= 0.0 {
            break;
        }
        if (t + h - t1) * dir > 0.0 {
            h = t1 - t;
        }
        let mut k = [[0.0; 7]; 7];
        k[0] = k1;
        for s in 1..7 {
            let mut ys = y;
            for (j, kj) in k.iter().enumerate().take(s) {
                let a = A[s - 1][j];
                if a != 0.0 {
                    for i in 0..7 {
                        ys[i] += h * a * kj[i];
                    }
                }
            }
            k[s] = rhs(field, t + C[s] * h, &ys);
        }
        let mut y5 = y;
        let mut err = [0.0; 7];
        for (s, ks) in k.iter().enumerate() {
            for i in 0..7 {
                y5[i] += h * B5[s] * ks[i];
                err[i] += h * (B5[s] - B4[s]) * ks[i];
            }
        }
        let mut norm = 0.0;
        for i in 0..7 {
            let sc = opts.atol + opts.rtol * y[i].abs().max(y5[i].abs());
            norm += (err[i] / sc).powi(2);
        }
        norm = (norm / 7.0).sqrt();
        if norm <= 1.0 {
            t += h;
            y = y5;
            k1 = k[6]; // FSAL
            points.push(to_point(t, &y));
        }
        let factor = if norm == 0.0 { 5.0 } else { (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0) };
        h = (h * factor).clamp(-opts.max_step, opts.max_step);
        if h.abs() < min_step {
            return Err(KvhError::StepFailure {
                t,
                reason: format!("step size underflow ({:.3e})", h.abs()),
            });
        }
    }
    if (t - t1) * dir < 0.0 {
        return Err(KvhError::StepFailure { t, reason: "max step count exceeded".into() });
    }
    Ok(Trajectory { points, field: field.clone() })
}

fn to_point(t: f64, y: &State) -> TrajectoryPoint {
    TrajectoryPoint {
        t,
        x: y[0],
        p: y[1],
        action: y[2],
        tangent: [[y[3], y[4]], [y[5], y[6]]],
    }
}

/// |∂x/∂x₀|^{1/2} per stored point, with the indices at which that tangent
/// entry changes sign or touches zero (the caustic markers).
pub fn van_vleck_factor(traj: &Trajectory) -> (Vec<f64>, Vec<usize>) {
    let values: Vec<f64> = traj.points.iter().map(|pt| pt.tangent[0][0].abs().sqrt()).collect();
    let mut markers = Vec::new();
    let mut last_sign = 0i8;
    for (i, pt) in traj.points.iter().enumerate() {
        let s = zero_aware_sign(pt.tangent[0][0]);
        if s == 0 {
            if last_sign != 0 {
                markers.push(i);
            }
            last_sign = 0;
        } else {
            if last_sign != 0 && s != last_sign {
                markers.push(i);
            }
            last_sign = s;
        }
    }
    (values, markers)
}

fn zero_aware_sign(v: f64) -> i8 {
    if v.abs() <= 1e-12 {
        0
    } else if v > 0.0 {
        1
    } else {
        -1
    }
}

/// Number of caustic crossings (sign changes of ∂x/∂x₀, zero touches counted
/// once) along the trajectory. One full period of a bound 1D orbit gives 2.
pub fn maslov_count(traj: &Trajectory) -> usize {
    van_vleck_factor(traj).1.len()
}

/// Bisection-refined caustic crossing times, 1e-10 absolute in t. Between the
/// two bracketing stored points, the tangent is re-propagated from the earlier
/// one and composed with its stored map.
pub fn caustic_times(traj: &Trajectory) -> Result<Vec<f64>> {
    let (_, markers) = van_vleck_factor(traj);
    let mut out = Vec::new();
    for &idx in &markers {
        if idx == 0 {
            continue;
        }
        let a = &traj.points[idx - 1];
        let b = &traj.points[idx];
        if b.tangent[0][0].abs() <= 1e-12 {
            out.push(b.t);
            continue;
        }
        let m_at = |t: f64| -> Result<f64> {
            let seg = integrate(
                &traj.field,
                (a.x, a.p),
                a.t,
                t,
                &IntegrateOptions { rtol: 1e-12, atol: 1e-14, ..Default::default() },
            )?;
            let m = seg.points.last().unwrap().tangent;
            // compose with the map accumulated up to the bracket start
            Ok(m[0][0] * a.tangent[0][0] + m[0][1] * a.tangent[1][0])
        };
        let (mut lo, mut hi) = (a.t, b.t);
        let f_lo = a.tangent[0][0];
        for _ in 0..60 {
            if (hi - lo).abs() < 1e-10 {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let f_mid = m_at(mid)?;
            if f_mid == 0.0 {
                lo = mid;
                hi = mid;
                break;
            }
            if (f_mid > 0.0) == (f_lo > 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        out.push(0.5 * (lo + hi));
    }
    Ok(out)
}

/// Fixed-step 4th-order symplectic splitting (Forest-Ruth composition) for
/// separable wells, with exact shear tangents and Simpson-rule action. An
/// independent cross-check on the adaptive integrator.
pub fn symplectic_cross_check(
    well: &SeparableWell,
    z0: (f64, f64),
    t0: f64,
    t1: f64,
    n_steps: usize,
) -> TrajectoryPoint {
    let theta = 1.0 / (2.0 - 2f64.powf(1.0 / 3.0));
    let w1 = theta;
    let w0 = 1.0 - 2.0 * theta;
    let drifts = [w1 / 2.0, (w0 + w1) / 2.0, (w0 + w1) / 2.0, w1 / 2.0];
    let kicks = [w1, w0, w1];
    let h = (t1 - t0) / n_steps as f64;
    let m = well.m;
    let (mut x, mut p) = z0;
    let mut s = 0.0;
    let mut mm = [[1.0, 0.0], [0.0, 1.0]];
    for _ in 0..n_steps {
        // dS = ∫p dx − H dt; kicks move no x, so ∫p dx is a sum over drifts
        // and H is taken at the step start (conserved up to the bounded
        // O(h^4) oscillation of the splitting)
        let h0 = p * p / (2.0 * m) + well.u(x);
        for stage in 0..4 {
            let tau = drifts[stage] * h;
            x += tau * p / m;
            s += tau * p * p / m;
            mm = mat_mul([[1.0, tau / m], [0.0, 1.0]], mm);
            if stage < 3 {
                let tau_k = kicks[stage] * h;
                p -= tau_k * well.du_dx(x);
                mm = mat_mul([[1.0, 0.0], [-tau_k * well.d2u_dx2(x), 1.0]], mm);
            }
        }
        s -= h0 * h;
    }
    TrajectoryPoint { t: t1, x, p, action: s, tangent: mm }
}

fn mat_mul(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]
}

impl Trajectory {
    /// CSV with 17 significant digits: t, x, p, S, M00, M01, M10, M11.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x,p,S,M00,M01,M10,M11\n");
        for pt in &self.points {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                pt.t,
                pt.x,
                pt.p,
                pt.action,
                pt.tangent[0][0],
                pt.tangent[0][1],
                pt.tangent[1][0],
                pt.tangent[1][1],
            ));
        }
        out
    }
}
