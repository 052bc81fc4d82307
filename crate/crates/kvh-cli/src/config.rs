//! Run configuration: JSON file, flag overrides, validation.

use clap::Args;
use kvh_core::eigen::Scheme;
use kvh_core::systems::{catalog, SeparableWell};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::CliError;

/// Global flags; every one of them overrides the corresponding config-file
/// field when both are given.
#[derive(Args, Debug, Clone)]
pub struct Overrides {
    /// System name from the catalog (ho | quartic)
    #[arg(long, global = true)]
    pub system: Option<String>,
    /// Comma-separated system parameters, e.g. m=1,omega=2
    #[arg(long, global = true)]
    pub params: Option<String>,
    /// Planck constant
    #[arg(long, global = true)]
    pub hbar: Option<f64>,
    /// Output directory (created if missing)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Artifact format: csv | json | bin
    #[arg(long, global = true)]
    pub format: Option<String>,
    /// JSON run-configuration file; flags win over its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for grid propagation
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Quantization scheme: bs | ebk
    #[arg(long, global = true)]
    pub scheme: Option<String>,
    /// x-axis spec min:max:count
    #[arg(long = "x-grid", global = true, allow_hyphen_values = true)]
    pub x_grid: Option<String>,
    /// p-axis spec min:max:count
    #[arg(long = "p-grid", global = true, allow_hyphen_values = true)]
    pub p_grid: Option<String>,
}

#[derive(Serialize, Deserialize, Debug, Clone, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub system: SystemSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub scheme: Option<String>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Serialize, Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub hbar: Option<f64>,
}

impl Default for SystemSection {
    fn default() -> Self {
        Self { name: None, params: BTreeMap::new(), hbar: None }
    }
}

#[derive(Serialize, Deserialize, Debug, Clone, Default)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default)]
    pub x: Option<AxisSpec>,
    #[serde(default)]
    pub p: Option<AxisSpec>,
}

#[derive(Serialize, Deserialize, Debug, Clone, Copy)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

#[derive(Serialize, Deserialize, Debug, Clone, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub directory: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Bin,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Bin => "bin",
        }
    }
}

/// Everything a command needs, after defaults, file, and flags are merged.
pub struct Resolved {
    pub well: SeparableWell,
    pub system_name: String,
    pub params: Vec<(String, f64)>,
    pub hbar: f64,
    pub scheme: Scheme,
    pub x_axis: AxisSpec,
    pub p_axis: AxisSpec,
    pub rtol: f64,
    pub atol: f64,
    pub out_dir: PathBuf,
    pub format: Format,
    pub threads: usize,
}

fn parse_params(text: &str) -> Result<Vec<(String, f64)>, CliError> {
    let mut out = Vec::new();
    for piece in text.split(',').filter(|p| !p.is_empty()) {
        let (k, v) = piece
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("bad parameter entry '{piece}', want key=value")))?;
        let value: f64 = v
            .parse()
            .map_err(|_| CliError::config(format!("parameter '{k}' has non-numeric value '{v}'")))?;
        out.push((k.trim().to_string(), value));
    }
    Ok(out)
}

fn parse_axis(text: &str, which: &str) -> Result<AxisSpec, CliError> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::config(format!("{which} axis spec '{text}': want min:max:count")));
    }
    let min: f64 = parts[0]
        .parse()
        .map_err(|_| CliError::config(format!("{which} axis min '{}' is not a number", parts[0])))?;
    let max: f64 = parts[1]
        .parse()
        .map_err(|_| CliError::config(format!("{which} axis max '{}' is not a number", parts[1])))?;
    let count: usize = parts[2]
        .parse()
        .map_err(|_| CliError::config(format!("{which} axis count '{}' is not an integer", parts[2])))?;
    Ok(AxisSpec { min, max, count })
}

fn parse_scheme(text: &str) -> Result<Scheme, CliError> {
    match text.to_ascii_lowercase().as_str() {
        "bs" | "bohr-sommerfeld" => Ok(Scheme::BohrSommerfeld),
        "ebk" => Ok(Scheme::Ebk),
        other => Err(CliError::config(format!("unknown scheme '{other}', want bs or ebk"))),
    }
}

fn parse_format(text: &str) -> Result<Format, CliError> {
    match text.to_ascii_lowercase().as_str() {
        "csv" => Ok(Format::Csv),
        "json" => Ok(Format::Json),
        "bin" | "binary" => Ok(Format::Bin),
        other => Err(CliError::config(format!("unknown format '{other}', want csv, json, or bin"))),
    }
}

fn check_axis(spec: AxisSpec, which: &str) -> Result<AxisSpec, CliError> {
    if !spec.min.is_finite() || !spec.max.is_finite() || spec.min >= spec.max {
        return Err(CliError::config(format!(
            "{which} axis [{}, {}] is not a finite increasing interval",
            spec.min, spec.max
        )));
    }
    if spec.count < 16 {
        return Err(CliError::config(format!(
            "{which} axis count {} is below the minimum of 16",
            spec.count
        )));
    }
    Ok(spec)
}

impl Overrides {
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let file: RunConfig = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    CliError::config(format!("cannot read config {}: {e}", path.display()))
                })?;
                serde_json::from_str(&text).map_err(|e| {
                    CliError::config(format!("config {}: {e}", path.display()))
                })?
            }
            None => RunConfig::default(),
        };

        let system_name = self
            .system
            .clone()
            .or(file.system.name.clone())
            .unwrap_or_else(|| "ho".to_string());
        let hbar = self.hbar.or(file.system.hbar).unwrap_or(1.0);
        if !(hbar > 0.0) || !hbar.is_finite() {
            return Err(CliError::config(format!("hbar must be positive, got {hbar}")));
        }

        // file params first, flag params on top
        let mut params: BTreeMap<String, f64> = file.system.params.clone();
        if let Some(text) = &self.params {
            for (k, v) in parse_params(text)? {
                params.insert(k, v);
            }
        }
        let param_list: Vec<(String, f64)> = params.into_iter().collect();
        let well = catalog(&system_name, &param_list, hbar)
            .ok_or_else(|| CliError::config(format!("unknown system '{system_name}'")))?;

        let scheme_text = self
            .scheme
            .clone()
            .or(file.scheme.clone())
            .unwrap_or_else(|| "ebk".to_string());
        let scheme = parse_scheme(&scheme_text)?;

        let default_axis = AxisSpec { min: -6.0, max: 6.0, count: 129 };
        let x_axis = match &self.x_grid {
            Some(text) => parse_axis(text, "x")?,
            None => file.grid.x.unwrap_or(default_axis),
        };
        let p_axis = match &self.p_grid {
            Some(text) => parse_axis(text, "p")?,
            None => file.grid.p.unwrap_or(default_axis),
        };
        let x_axis = check_axis(x_axis, "x")?;
        let p_axis = check_axis(p_axis, "p")?;

        let format_text = self
            .format
            .clone()
            .or(file.output.format.clone())
            .unwrap_or_else(|| "csv".to_string());
        let format = parse_format(&format_text)?;
        let out_dir = self
            .out
            .clone()
            .or(file.output.directory.clone())
            .unwrap_or_else(|| PathBuf::from("."));

        let rtol = *file.tolerances.get("rtol").unwrap_or(&1e-10);
        let atol = *file.tolerances.get("atol").unwrap_or(&1e-12);
        let threads = self.threads.unwrap_or(1).max(1);

        Ok(Resolved {
            well,
            system_name,
            params: param_list,
            hbar,
            scheme,
            x_axis,
            p_axis,
            rtol,
            atol,
            out_dir,
            format,
            threads,
        })
    }
}

impl Resolved {
    pub fn x_points(&self) -> Vec<f64> {
        kvh_core::propagators::uniform_axis(self.x_axis.min, self.x_axis.max, self.x_axis.count)
    }

    pub fn p_points(&self) -> Vec<f64> {
        kvh_core::propagators::uniform_axis(self.p_axis.min, self.p_axis.max, self.p_axis.count)
    }

    /// Create the output directory (if needed) and return `name` inside it.
    pub fn artifact_path(&self, name: &str) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(&self.out_dir).map_err(|e| {
            CliError::config(format!("cannot create {}: {e}", self.out_dir.display()))
        })?;
        Ok(self.out_dir.join(name))
    }
}
