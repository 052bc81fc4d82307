//! The six command bodies. Each returns Ok or a classified error; artifact
//! files land in the resolved output directory and their paths are printed.

use kvh_core::diagnostics::{compare_to_exact, physical_density};
use kvh_core::eigen::{
    self, eval_phase_space, hamilton_principal_w, quantize, ActionAngleChart, Branch, WaveBranch,
};
use kvh_core::propagators::{
    eigen_ridge, gaussian_blob, project_to_config, propagate, PhaseSpaceGrid, PropagateOptions,
    PropagatorKind,
};
use serde::Serialize;
use std::path::{Path, PathBuf};

use crate::config::{Format, Resolved};
use crate::CliError;

fn write_artifact(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes)
        .map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn table_format(format: Format) -> Result<Format, CliError> {
    if format == Format::Bin {
        return Err(CliError::config(
            "binary format applies to grid artifacts; tables support csv or json".to_string(),
        ));
    }
    Ok(format)
}

// ---------------------------------------------------------------------------
// spectrum

pub fn cmd_spectrum(
    cfg: &Resolved,
    n_max: usize,
    include_classical: bool,
    nu_range: &str,
) -> Result<(), CliError> {
    let format = table_format(cfg.format)?;
    let (lo, hi) = parse_nu_range(nu_range)?;
    let rows = eigen::spectrum(&cfg.well, cfg.scheme, n_max, include_classical, (lo, hi))
        .map_err(CliError::numerical)?;
    let path = cfg.artifact_path(&format!("spectrum.{}", format.extension()))?;
    let payload = match format {
        Format::Csv => eigen::spectrum_csv(&rows),
        _ => serde_json::to_string_pretty(&rows).expect("spectrum rows serialize"),
    };
    write_artifact(&path, payload.as_bytes())?;
    for r in &rows {
        println!("{} n={} J={:.12} E={:.12}", r.sector, r.n_or_nu, r.j, r.e_or_freq);
    }
    Ok(())
}

fn parse_nu_range(text: &str) -> Result<(i64, i64), CliError> {
    let (a, b) = text
        .split_once(':')
        .ok_or_else(|| CliError::config(format!("nu range '{text}': want lo:hi")))?;
    let lo: i64 = a
        .parse()
        .map_err(|_| CliError::config(format!("nu range lo '{a}' is not an integer")))?;
    let hi: i64 = b
        .parse()
        .map_err(|_| CliError::config(format!("nu range hi '{b}' is not an integer")))?;
    if lo > hi {
        return Err(CliError::config(format!("nu range {lo}:{hi} is empty")));
    }
    Ok((lo, hi))
}

// ---------------------------------------------------------------------------
// eigenfunction

#[derive(Serialize)]
struct ConfigRow {
    x: f64,
    re_phi: f64,
    im_phi: f64,
    region_flag: &'static str,
}

#[derive(Serialize)]
struct PhaseRow {
    x: f64,
    /// Angle variable ω·(traversal time from the left turning point);
    /// meaningful on the allowed region only.
    theta: f64,
    /// Forbidden-region decay exponent W̃/ℏ; meaningful outside the
    /// turning points only.
    vartheta: f64,
    abs_plus: f64,
    phase_plus: f64,
    abs_minus: f64,
    phase_minus: f64,
}

pub fn cmd_eigenfunction(cfg: &Resolved, n: usize, space: &str) -> Result<(), CliError> {
    let format = table_format(cfg.format)?;
    let eig = quantize(&cfg.well, cfg.scheme, n).map_err(CliError::numerical)?;
    let xs = cfg.x_points();
    match space {
        "config" => {
            let path = cfg.artifact_path(&format!("eigenfunction.{}", format.extension()))?;
            match format {
                Format::Csv => {
                    let table =
                        eigen::config_table_csv(&eig, &xs).map_err(CliError::numerical)?;
                    write_artifact(&path, table.as_bytes())?;
                }
                _ => {
                    let mut rows = Vec::with_capacity(xs.len());
                    for &x in &xs {
                        let cv = eigen::eval_config_space(&eig, x).map_err(CliError::numerical)?;
                        rows.push(ConfigRow {
                            x,
                            re_phi: cv.value.re,
                            im_phi: cv.value.im,
                            region_flag: cv.flag(),
                        });
                    }
                    let payload =
                        serde_json::to_string_pretty(&rows).expect("rows serialize");
                    write_artifact(&path, payload.as_bytes())?;
                }
            }
        }
        "phase" => {
            let rows = phase_table(&eig, &xs)?;
            let path = cfg.artifact_path(&format!("eigenfunction.{}", format.extension()))?;
            match format {
                Format::Csv => {
                    let mut out = String::from(
                        "x,theta,vartheta,abs_plus,phase_plus,abs_minus,phase_minus\n",
                    );
                    for r in &rows {
                        out.push_str(&format!(
                            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                            r.x, r.theta, r.vartheta, r.abs_plus, r.phase_plus, r.abs_minus,
                            r.phase_minus
                        ));
                    }
                    write_artifact(&path, out.as_bytes())?;
                }
                _ => {
                    let payload =
                        serde_json::to_string_pretty(&rows).expect("rows serialize");
                    write_artifact(&path, payload.as_bytes())?;
                }
            }
        }
        other => {
            return Err(CliError::config(format!(
                "unknown space '{other}', want config or phase"
            )))
        }
    }
    println!(
        "n={} scheme={:?} J={:.12} E={:.12}",
        n, cfg.scheme, eig.chart.j, eig.chart.e
    );
    Ok(())
}

/// Two-branch amplitude table. The angle variable is recovered from the
/// energy sensitivity of the principal function, θ = ω·∂W₊/∂E at fixed x,
/// by a centered difference between neighboring energy shells.
fn phase_table(
    eig: &kvh_core::eigen::SemiclassicalEigenfunction,
    xs: &[f64],
) -> Result<Vec<PhaseRow>, CliError> {
    let chart = &eig.chart;
    let hbar = chart.hbar;
    let de = 1e-6 * chart.e.abs().max(1.0);
    let shells = if chart.j > 1e-12 {
        let lower = ActionAngleChart::from_energy(&chart.well, chart.e - de);
        let upper = ActionAngleChart::from_energy(&chart.well, chart.e + de);
        match (lower, upper) {
            (Ok(l), Ok(u)) => Some((l, u)),
            _ => None,
        }
    } else {
        None
    };
    let mut rows = Vec::with_capacity(xs.len());
    for &x in xs {
        let mut row = PhaseRow {
            x,
            theta: f64::NAN,
            vartheta: f64::NAN,
            abs_plus: f64::NAN,
            phase_plus: f64::NAN,
            abs_minus: f64::NAN,
            phase_minus: f64::NAN,
        };
        if chart.in_allowed(x) {
            let plus = eval_phase_space(eig, x, WaveBranch::Plus).map_err(CliError::numerical)?;
            let minus =
                eval_phase_space(eig, x, WaveBranch::Minus).map_err(CliError::numerical)?;
            row.abs_plus = plus.norm();
            row.phase_plus = plus.arg();
            row.abs_minus = minus.norm();
            row.phase_minus = minus.arg();
            if let Some((lower, upper)) = &shells {
                if lower.in_allowed(x) && upper.in_allowed(x) {
                    let wl = hamilton_principal_w(lower, x, Branch::Plus)
                        .map_err(CliError::numerical)?;
                    let wu = hamilton_principal_w(upper, x, Branch::Plus)
                        .map_err(CliError::numerical)?;
                    row.theta = chart.omega * (wu - wl) / (2.0 * de);
                }
            }
        } else {
            let fv =
                eval_phase_space(eig, x, WaveBranch::Forbidden).map_err(CliError::numerical)?;
            row.abs_plus = fv.norm();
            row.phase_plus = fv.arg();
            row.vartheta =
                kvh_core::eigen::forbidden_action_wtilde(chart, x).map_err(CliError::numerical)?
                    / hbar;
        }
        rows.push(row);
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// initial-state specs

pub enum Initial {
    Gaussian { xbar: f64, pbar: f64, sx: f64, sp: f64 },
    EigenRidge { n: usize, k: f64 },
    File(PathBuf),
}

pub fn parse_initial(text: &str) -> Result<Initial, CliError> {
    let (head, tail) = text
        .split_once(':')
        .ok_or_else(|| CliError::config(format!("initial spec '{text}': want kind:args")))?;
    let nums = |want: usize| -> Result<Vec<f64>, CliError> {
        let vals: Result<Vec<f64>, _> = tail.split(',').map(str::parse::<f64>).collect();
        let vals = vals.map_err(|_| {
            CliError::config(format!("initial spec '{text}': non-numeric argument"))
        })?;
        if vals.len() != want {
            return Err(CliError::config(format!(
                "initial spec '{text}': want {want} arguments, got {}",
                vals.len()
            )));
        }
        Ok(vals)
    };
    match head {
        "gaussian" => {
            let v = nums(4)?;
            if v[2] <= 0.0 || v[3] <= 0.0 {
                return Err(CliError::config(format!(
                    "initial spec '{text}': widths must be positive"
                )));
            }
            Ok(Initial::Gaussian { xbar: v[0], pbar: v[1], sx: v[2], sp: v[3] })
        }
        "eigen_ridge" => {
            let (n_text, k_text) = tail.split_once(',').ok_or_else(|| {
                CliError::config(format!("initial spec '{text}': want eigen_ridge:n,k"))
            })?;
            let n: usize = n_text.parse().map_err(|_| {
                CliError::config(format!("initial spec '{text}': level '{n_text}' is not a non-negative integer"))
            })?;
            let k: f64 = k_text.parse().map_err(|_| {
                CliError::config(format!("initial spec '{text}': index '{k_text}' is not a number"))
            })?;
            if !(k > 0.0) {
                return Err(CliError::config(format!(
                    "initial spec '{text}': ridge index must be positive"
                )));
            }
            Ok(Initial::EigenRidge { n, k })
        }
        "file" => Ok(Initial::File(PathBuf::from(tail))),
        other => Err(CliError::config(format!(
            "unknown initial kind '{other}', want gaussian, eigen_ridge, or file"
        ))),
    }
}

fn load_phase_grid(path: &Path) -> Result<PhaseSpaceGrid, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    if path.extension().and_then(|e| e.to_str()) == Some("bin") {
        PhaseSpaceGrid::from_binary(&bytes).map_err(CliError::numerical)
    } else {
        let text = String::from_utf8(bytes)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }
}

fn build_initial(cfg: &Resolved, spec: &Initial) -> Result<PhaseSpaceGrid, CliError> {
    let grid = match spec {
        Initial::Gaussian { xbar, pbar, sx, sp } => gaussian_blob(
            cfg.x_points(),
            cfg.p_points(),
            (*xbar, *pbar),
            (*sx, *sp),
            0.0,
            cfg.hbar,
        )
        .map_err(CliError::numerical)?,
        Initial::EigenRidge { n, k } => {
            let eig = quantize(&cfg.well, cfg.scheme, *n).map_err(CliError::numerical)?;
            eigen_ridge(&eig, cfg.x_points(), cfg.p_points(), *k).map_err(CliError::numerical)?
        }
        Initial::File(path) => {
            let grid = load_phase_grid(path)?;
            if (grid.hbar - cfg.hbar).abs() > 1e-15 * cfg.hbar.max(1.0) {
                return Err(CliError::config(format!(
                    "grid {} carries hbar = {}, configuration says {}",
                    path.display(),
                    grid.hbar,
                    cfg.hbar
                )));
            }
            grid
        }
    };
    Ok(grid)
}

// ---------------------------------------------------------------------------
// propagate

#[derive(Serialize)]
struct ConservationReport {
    kind: String,
    t0: f64,
    t1: f64,
    l2_norm_before: f64,
    l2_norm_after: f64,
    mass_before: f64,
    mass_after: f64,
}

fn parse_kind(text: &str) -> Result<PropagatorKind, CliError> {
    match text.to_ascii_lowercase().as_str() {
        "scalar" => Ok(PropagatorKind::Scalar),
        "lve" => Ok(PropagatorKind::Lve),
        "kvn" => Ok(PropagatorKind::Kvn),
        "kvh-ps" | "kvh-phase-space" => Ok(PropagatorKind::KvhPhaseSpace),
        "kvh-sc" | "kvh-semiclassical" => Ok(PropagatorKind::KvhSemiclassical),
        other => Err(CliError::config(format!(
            "unknown propagator '{other}', want scalar, lve, kvn, kvh-ps, or kvh-sc"
        ))),
    }
}

fn write_phase_grid(cfg: &Resolved, name: &str, grid: &PhaseSpaceGrid) -> Result<PathBuf, CliError> {
    let path = cfg.artifact_path(&format!("{name}.{}", cfg.format.extension()))?;
    match cfg.format {
        Format::Csv => write_artifact(&path, grid.to_csv().as_bytes())?,
        Format::Json => write_artifact(
            &path,
            serde_json::to_string(grid).expect("grid serializes").as_bytes(),
        )?,
        Format::Bin => write_artifact(&path, &grid.to_binary())?,
    }
    Ok(path)
}

pub fn cmd_propagate(cfg: &Resolved, kind: &str, t1: f64, initial: &str) -> Result<(), CliError> {
    let kind = parse_kind(kind)?;
    if !t1.is_finite() {
        return Err(CliError::config(format!("target time {t1} is not finite")));
    }
    let spec = parse_initial(initial)?;
    let grid = build_initial(cfg, &spec)?;
    let field = cfg.well.field();
    let opts = PropagateOptions {
        rtol: cfg.rtol,
        atol: cfg.atol,
        threads: cfg.threads,
        ..Default::default()
    };
    let evolved = propagate(&field, &grid, t1, kind, &opts).map_err(CliError::numerical)?;
    write_phase_grid(cfg, "evolved", &evolved)?;
    let report = ConservationReport {
        kind: format!("{kind:?}"),
        t0: grid.t,
        t1: evolved.t,
        l2_norm_before: grid.l2_norm(),
        l2_norm_after: evolved.l2_norm(),
        mass_before: grid.mass(),
        mass_after: evolved.mass(),
    };
    let path = cfg.artifact_path("conservation.json")?;
    write_artifact(
        &path,
        serde_json::to_string_pretty(&report).expect("report serializes").as_bytes(),
    )?;
    println!(
        "L2 norm {:.12e} -> {:.12e}",
        report.l2_norm_before, report.l2_norm_after
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// project

pub fn cmd_project(cfg: &Resolved, input: &Path) -> Result<(), CliError> {
    let grid = load_phase_grid(input)?;
    let projected = project_to_config(&grid).map_err(CliError::numerical)?;
    let path = cfg.artifact_path(&format!("projected.{}", cfg.format.extension()))?;
    match cfg.format {
        Format::Csv => write_artifact(&path, projected.to_csv().as_bytes())?,
        Format::Json => write_artifact(
            &path,
            serde_json::to_string(&projected).expect("grid serializes").as_bytes(),
        )?,
        Format::Bin => write_artifact(&path, &projected.to_binary())?,
    }
    println!("config-space L2 norm {:.12e}", projected.l2_norm());
    Ok(())
}

// ---------------------------------------------------------------------------
// density-check

pub fn cmd_density_check(cfg: &Resolved, initial: &str) -> Result<(), CliError> {
    let spec = parse_initial(initial)?;
    let grid = build_initial(cfg, &spec)?;
    let report = physical_density(&grid).map_err(CliError::numerical)?;
    let path = cfg.artifact_path("density.json")?;
    write_artifact(&path, report.to_json().as_bytes())?;
    for name in ["1", "x", "p", "x2", "p2", "xp"] {
        let m = report.max_weighted(name).unwrap_or(f64::NAN);
        println!("max |int g delta_f dp| over x, g = {name:<3}: {m:.6e}");
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// compare

pub fn cmd_compare(cfg: &Resolved, n: usize) -> Result<(), CliError> {
    if cfg.system_name != "ho" {
        return Err(CliError::config(format!(
            "compare is defined against the exact harmonic oscillator; system is '{}'",
            cfg.system_name
        )));
    }
    let get = |key: &str, default: f64| {
        cfg.params
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| *v)
            .unwrap_or(default)
    };
    let report = compare_to_exact(get("m", 1.0), get("omega", 1.0), cfg.hbar, n, cfg.scheme)
        .map_err(CliError::numerical)?;
    let path = cfg.artifact_path("compare.json")?;
    write_artifact(&path, report.to_json().as_bytes())?;
    println!(
        "n={} scheme={} E_semi={:.12} E_exact={:.12} rel_L2={:.6e}",
        report.n, report.scheme, report.energy_semiclassical, report.energy_exact,
        report.rel_l2_error
    );
    Ok(())
}

