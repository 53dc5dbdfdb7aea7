//! Scenario runner: config ingestion, sweep expansion, per-point execution and persistence.

mod output;
pub mod sequence;
pub mod sideband;
pub mod transmon;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::device::{Device, DeviceSpec};
use crate::dispersive::mls_model;
use crate::error::{Error, Result};
use crate::evolve::{IntegratorConfig, Method};

pub use output::{format_number, write_csv};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    StarkError,
    RabiSweep,
    GeometricShift,
    Spectrum,
    SidebandPi,
    Cnot,
    FidelityVsKappa,
    DispersiveReport,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::StarkError => "stark-error",
            Scenario::RabiSweep => "rabi-sweep",
            Scenario::GeometricShift => "geometric-shift",
            Scenario::Spectrum => "spectrum",
            Scenario::SidebandPi => "sideband-pi",
            Scenario::Cnot => "cnot",
            Scenario::FidelityVsKappa => "fidelity-vs-kappa",
            Scenario::DispersiveReport => "dispersive-report",
        }
    }

    /// Result columns, after the sweep coordinates.
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            Scenario::StarkError => sideband::STARK_COLUMNS,
            Scenario::SidebandPi => sideband::SIDEBAND_COLUMNS,
            Scenario::RabiSweep => transmon::RABI_COLUMNS,
            Scenario::GeometricShift => transmon::SHIFT_COLUMNS,
            Scenario::Spectrum => transmon::SPECTRUM_COLUMNS,
            Scenario::Cnot => sequence::CNOT_COLUMNS,
            Scenario::FidelityVsKappa => sequence::KAPPA_COLUMNS,
            Scenario::DispersiveReport => sequence::REPORT_COLUMNS,
        }
    }

    /// Default parameters as JSON, used to resolve sweep paths under `params`.
    fn default_params(self) -> Value {
        let v = match self {
            Scenario::StarkError => serde_json::to_value(sideband::SidebandParams::stark_error()),
            Scenario::SidebandPi => serde_json::to_value(sideband::SidebandParams::sideband_pi()),
            Scenario::RabiSweep => serde_json::to_value(transmon::RabiParams::default()),
            Scenario::GeometricShift | Scenario::Spectrum => serde_json::to_value(transmon::HarmonicParams::default()),
            Scenario::Cnot => serde_json::to_value(sequence::CnotParams::default()),
            Scenario::FidelityVsKappa => serde_json::to_value(sequence::KappaParams::default()),
            Scenario::DispersiveReport => Ok(Value::Object(Default::default())),
        };
        v.expect("parameter defaults serialize")
    }

    /// Checks that a params object deserializes for this scenario.
    fn check_params(self, params: &Value) -> Result<()> {
        fn check<T: serde::de::DeserializeOwned>(v: &Value) -> Result<()> {
            parse_at::<T>(v.clone(), "params").map(|_| ())
        }
        match self {
            Scenario::StarkError | Scenario::SidebandPi => check::<sideband::SidebandParams>(params),
            Scenario::RabiSweep => check::<transmon::RabiParams>(params),
            Scenario::GeometricShift | Scenario::Spectrum => check::<transmon::HarmonicParams>(params),
            Scenario::Cnot => check::<sequence::CnotParams>(params),
            Scenario::FidelityVsKappa => check::<sequence::KappaParams>(params),
            Scenario::DispersiveReport => check::<sequence::ReportParams>(params),
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        <Scenario as clap::ValueEnum>::from_str(s, false).map_err(|_| Error::config("scenario", format!("unknown scenario `{s}`")))
    }
}

/// Values of one sweep axis. Exactly one of the three forms is given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    /// Dotted path into `device` or `params`, e.g. `device.g_ge.1` or `params.delta_phi`.
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    /// [from, to, count], evenly spaced.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linspace: Option<(f64, f64, usize)>,
    /// [from, to, count], geometrically spaced; both ends positive.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logspace: Option<(f64, f64, usize)>,
}

impl SweepAxis {
    pub fn grid(&self, at: &str) -> Result<Vec<f64>> {
        let forms = [self.values.is_some(), self.linspace.is_some(), self.logspace.is_some()];
        if forms.iter().filter(|&&b| b).count() != 1 {
            return Err(Error::config(at, "give exactly one of `values`, `linspace`, `logspace`"));
        }
        let grid = if let Some(v) = &self.values {
            v.clone()
        } else if let Some((a, b, n)) = self.linspace {
            spaced(a, b, n, at)?
        } else {
            let (a, b, n) = self.logspace.expect("checked above");
            if !(a > 0.0 && b > 0.0) {
                return Err(Error::config(at, "logspace ends must be positive"));
            }
            spaced(a.ln(), b.ln(), n, at)?.into_iter().map(f64::exp).collect()
        };
        if grid.is_empty() {
            return Err(Error::config(at, "empty grid"));
        }
        if let Some(x) = grid.iter().find(|x| !x.is_finite()) {
            return Err(Error::config(at, format!("non-finite grid value {x}")));
        }
        Ok(grid)
    }
}

fn spaced(a: f64, b: f64, n: usize, at: &str) -> Result<Vec<f64>> {
    match n {
        0 => Err(Error::config(at, "count must be at least 1")),
        1 => Ok(vec![a]),
        _ => Ok((0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Optional; must agree with the scenario requested on the command line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
    pub device: DeviceSpec,
    /// Axes combine as a Cartesian product, first axis slowest.
    #[serde(default)]
    pub sweep: Vec<SweepAxis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default = "empty_object")]
    pub params: Value,
}

fn empty_object() -> Value {
    Value::Object(Default::default())
}

fn parse_at<T: serde::de::DeserializeOwned>(v: Value, prefix: &str) -> Result<T> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let inner = e.path().to_string();
        let path = if inner == "." || inner.is_empty() {
            prefix.to_string()
        } else if prefix.is_empty() {
            inner
        } else {
            format!("{prefix}.{inner}")
        };
        Error::config(path, e.inner().to_string())
    })
}

/// One grid point: the sweep coordinates and the resolved inputs.
#[derive(Clone, Debug)]
pub struct Point {
    pub index: usize,
    pub coords: Vec<f64>,
    pub device: DeviceSpec,
    pub params: Value,
}

/// A parsed and checked configuration bound to a scenario.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub scenario: Scenario,
    pub config: ScenarioConfig,
    /// Merged parameter object (defaults overlaid by the config).
    pub params: Value,
    pub axes: Vec<(String, Vec<f64>)>,
    pub digest: String,
}

impl Resolved {
    /// Parses JSON text, rejecting unknown fields and unknown sweep paths.
    pub fn parse(text: &str, scenario: Option<Scenario>) -> Result<Self> {
        let raw: Value = serde_json::from_str(text).map_err(|e| Error::config("", format!("invalid JSON: {e}")))?;
        let config: ScenarioConfig = parse_at(raw, "")?;
        Self::from_config(config, scenario)
    }

    pub fn from_config(config: ScenarioConfig, scenario: Option<Scenario>) -> Result<Self> {
        let scenario = match (scenario, config.scenario) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::config("scenario", format!("config names `{}` but `{}` was requested", b.name(), a.name())))
            }
            (Some(a), _) | (None, Some(a)) => a,
            (None, None) => return Err(Error::config("scenario", "no scenario given")),
        };
        config.integrator.validate().map_err(|e| Error::config("integrator", e.to_string()))?;
        if !config.params.is_object() {
            return Err(Error::config("params", "must be an object"));
        }
        let mut params = scenario.default_params();
        merge(&mut params, &config.params);
        scenario.check_params(&params)?;
        let device_value = serde_json::to_value(&config.device)?;
        let mut axes = Vec::new();
        for (i, axis) in config.sweep.iter().enumerate() {
            let at = format!("sweep.{i}");
            check_path(scenario, &axis.path, &device_value, &params).map_err(|m| Error::config(format!("{at}.path"), m))?;
            axes.push((axis.path.clone(), axis.grid(&at)?));
        }
        let canonical = serde_json::to_string(&serde_json::json!({
            "scenario": scenario,
            "device": device_value,
            "sweep": config.sweep,
            "integrator": config.integrator,
            "params": params,
        }))?;
        let digest = hex(&Sha256::digest(canonical.as_bytes()));
        Ok(Self {
            scenario,
            config,
            params,
            axes,
            digest,
        })
    }

    pub fn with_method(mut self, method: Method) -> Result<Self> {
        self.config.integrator.method = method;
        Self::from_config(self.config, Some(self.scenario))
    }

    /// Expands the sweep; per-point resolution errors are kept per point.
    pub fn points(&self) -> Vec<std::result::Result<Point, (Vec<f64>, Error)>> {
        let mut coords: Vec<Vec<f64>> = vec![Vec::new()];
        for (_, grid) in &self.axes {
            coords = coords
                .into_iter()
                .flat_map(|c| {
                    grid.iter().map(move |&x| {
                        let mut c = c.clone();
                        c.push(x);
                        c
                    })
                })
                .collect();
        }
        coords
            .into_iter()
            .enumerate()
            .map(|(index, c)| self.point(index, &c).map_err(|e| (c, e)))
            .collect()
    }

    fn point(&self, index: usize, coords: &[f64]) -> Result<Point> {
        let mut device = serde_json::to_value(&self.config.device)?;
        let mut params = self.params.clone();
        for ((path, _), &x) in self.axes.iter().zip(coords) {
            let (root, rest) = path.split_once('.').expect("checked at parse time");
            let target = if root == "device" { &mut device } else { &mut params };
            let slot = lookup_mut(target, rest).expect("checked at parse time");
            *slot = sweep_value(slot, x);
        }
        Ok(Point {
            index,
            coords: coords.to_vec(),
            device: parse_at(device, "device")?,
            params,
        })
    }

    /// Physics-validity warnings over every grid point; hard errors for invalid inputs.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings: Vec<String> = Vec::new();
        for p in self.points() {
            let p = p.map_err(|(_, e)| e)?;
            for w in point_warnings(self.scenario, &p)? {
                if !warnings.contains(&w) {
                    warnings.push(w);
                }
            }
        }
        Ok(warnings)
    }
}

/// Keeps integer fields integral so that counts such as `levels` can be swept.
fn sweep_value(current: &Value, x: f64) -> Value {
    let integral = current.is_u64() || current.is_i64();
    if integral && x.fract() == 0.0 && x.abs() < 9.0e15 {
        if x >= 0.0 {
            return Value::from(x as u64);
        }
        return Value::from(x as i64);
    }
    serde_json::json!(x)
}

fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

fn lookup_mut<'a>(v: &'a mut Value, path: &str) -> Option<&'a mut Value> {
    path.split('.').try_fold(v, |cur, key| match cur {
        Value::Object(m) => m.get_mut(key),
        Value::Array(a) => key.parse::<usize>().ok().and_then(|i| a.get_mut(i)),
        _ => None,
    })
}

fn check_path(scenario: Scenario, path: &str, device: &Value, params: &Value) -> std::result::Result<(), String> {
    let (root, rest) = path.split_once('.').ok_or_else(|| format!("`{path}` must start with `device.` or `params.`"))?;
    let mut target = match root {
        "device" => device.clone(),
        "params" => params.clone(),
        _ => return Err(format!("`{path}` must start with `device.` or `params.`")),
    };
    match lookup_mut(&mut target, rest) {
        Some(v) if v.is_number() || (root == "device" && rest.starts_with("T1.") && v.is_null()) => {}
        Some(_) => return Err(format!("`{path}` does not name a numeric field")),
        None => return Err(format!("unknown parameter path `{path}`")),
    }
    if scenario == Scenario::FidelityVsKappa && !(path == "device.kappa" || path.starts_with("device.T1.")) {
        return Err(format!("{} sweeps only `device.kappa` or `device.T1.<k>`", scenario.name()));
    }
    Ok(())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Flux excursions (transmon, |φ_i| + amplitude) a point will reach.
fn flux_excursions(scenario: Scenario, p: &Point) -> Result<Vec<(usize, String, f64)>> {
    let phi = |k: usize| p.device.transmons.get(k).map_or(0.0, |t| t.phi.abs());
    Ok(match scenario {
        Scenario::StarkError | Scenario::SidebandPi => {
            let q: sideband::SidebandParams = parse_at(p.params.clone(), "params")?;
            vec![(q.target, "params.envelope.A".into(), phi(q.target) + q.envelope.amplitude.abs())]
        }
        Scenario::RabiSweep => {
            let q: transmon::RabiParams = parse_at(p.params.clone(), "params")?;
            vec![(0, "params.delta_phi".into(), phi(0) + q.delta_phi.abs())]
        }
        Scenario::GeometricShift | Scenario::Spectrum => {
            let q: transmon::HarmonicParams = parse_at(p.params.clone(), "params")?;
            q.operating_points
                .iter()
                .map(|op| (0, "params.delta_phi".to_string(), op.abs() + q.delta_phi.abs()))
                .collect()
        }
        Scenario::Cnot | Scenario::FidelityVsKappa => crate::pulses::UENT_TIMINGS
            .iter()
            .zip([0usize, 1, usize::MAX, 1, 0])
            .filter(|(_, k)| *k != usize::MAX)
            .map(|((a, ..), k)| (k, "device.transmons".to_string(), phi(k) + a))
            .collect(),
        Scenario::DispersiveReport => Vec::new(),
    })
}

fn point_warnings(scenario: Scenario, p: &Point) -> Result<Vec<String>> {
    for (k, at, reach) in flux_excursions(scenario, p)? {
        if reach >= 0.5 {
            return Err(Error::config(
                at,
                format!("transmon {k}: |φ_i| + Δφ = {reach:.4} reaches the band edge 0.5 (E_J would vanish)"),
            ));
        }
    }
    let device = Device::new(p.device.clone()).map_err(|e| Error::config("device", e.to_string()))?;
    let mut out: Vec<String> = device.warnings().to_vec();
    for (k, t) in device.transmons.iter().enumerate() {
        let delta = t.splitting(0) - device.spec.omega_r;
        let g = device.spec.g_ge[k];
        let g_crit = delta.abs() / 2.0;
        if g.abs() > g_crit {
            out.push(format!(
                "transmon {k}: g/2π = {:.4} GHz exceeds g_crit/2π = |Δ|/2 = {:.4} GHz (Δ/2π = {:.4} GHz); dispersive predictions break down",
                g, g_crit, delta
            ));
        }
    }
    match mls_model(&device) {
        Ok(m) => out.extend(m.warnings),
        Err(e) => out.push(format!("dispersive model unavailable: {e}")),
    }
    Ok(out)
}

/// Everything one grid point produced.
#[derive(Clone, Debug, Default, Serialize)]
pub struct PointOutput {
    pub rows: Vec<Vec<f64>>,
    pub summary: Value,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PointRecord {
    pub index: usize,
    pub coords: Vec<f64>,
    pub status: String,
    pub summary: Value,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunRecord {
    pub scenario: Scenario,
    pub code_version: String,
    pub config_digest: String,
    pub threads: usize,
    pub axes: Vec<String>,
    pub columns: Vec<String>,
    pub validation_warnings: Vec<String>,
    pub points: Vec<PointRecord>,
    pub failures: usize,
    pub wall_clock_s: f64,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub record: RunRecord,
    pub outputs: Vec<std::result::Result<PointOutput, String>>,
    pub csv_path: Option<PathBuf>,
    pub json_path: Option<PathBuf>,
}

/// Runs every grid point on a pool of `threads` workers.
pub fn run(resolved: &Resolved, threads: usize, out_dir: Option<&Path>) -> Result<RunOutcome> {
    let start = Instant::now();
    let validation_warnings = resolved.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::config("threads", e.to_string()))?;
    let points = resolved.points();
    let outputs: Vec<std::result::Result<PointOutput, String>> = pool.install(|| {
        let ok: Vec<Point> = points.iter().filter_map(|p| p.as_ref().ok().cloned()).collect();
        let mut done = run_points(resolved.scenario, &ok, &resolved.config.integrator).into_iter();
        points
            .iter()
            .map(|p| match p {
                Ok(_) => done.next().expect("one result per point").map_err(|e| e.to_string()),
                Err((_, e)) => Err(e.to_string()),
            })
            .collect()
    });
    let records: Vec<PointRecord> = points
        .iter()
        .zip(&outputs)
        .enumerate()
        .map(|(index, (p, o))| {
            let coords = match p {
                Ok(p) => p.coords.clone(),
                Err((c, _)) => c.clone(),
            };
            match o {
                Ok(o) => PointRecord {
                    index,
                    coords,
                    status: "ok".into(),
                    summary: o.summary.clone(),
                    warnings: o.warnings.clone(),
                },
                Err(e) => PointRecord {
                    index,
                    coords,
                    status: format!("error: {e}"),
                    summary: Value::Null,
                    warnings: Vec::new(),
                },
            }
        })
        .collect();
    let failures = records.iter().filter(|r| r.status != "ok").count();
    let mut record = RunRecord {
        scenario: resolved.scenario,
        code_version: CODE_VERSION.into(),
        config_digest: resolved.digest.clone(),
        threads: threads.max(1),
        axes: resolved.axes.iter().map(|(p, _)| p.clone()).collect(),
        columns: resolved.scenario.columns().iter().map(|s| s.to_string()).collect(),
        validation_warnings,
        points: records,
        failures,
        wall_clock_s: 0.0,
    };
    let (mut csv_path, mut json_path) = (None, None);
    let dir = out_dir.map(Path::to_path_buf).or_else(|| resolved.config.output.clone());
    if let Some(dir) = dir {
        std::fs::create_dir_all(&dir)?;
        let csv = dir.join(format!("{}.csv", resolved.scenario.name()));
        let mut f = std::io::BufWriter::new(std::fs::File::create(&csv)?);
        write_csv(&mut f, resolved, &outputs, &record)?;
        csv_path = Some(csv);
        record.wall_clock_s = start.elapsed().as_secs_f64();
        let json = dir.join(format!("{}.json", resolved.scenario.name()));
        std::fs::write(&json, serde_json::to_string_pretty(&record)?)?;
        json_path = Some(json);
    } else {
        record.wall_clock_s = start.elapsed().as_secs_f64();
    }
    Ok(RunOutcome {
        record,
        outputs,
        csv_path,
        json_path,
    })
}

fn run_points(scenario: Scenario, points: &[Point], cfg: &IntegratorConfig) -> Vec<Result<PointOutput>> {
    let cfg = *cfg;
    let each = |f: fn(&Point, IntegratorConfig) -> Result<PointOutput>| -> Vec<Result<PointOutput>> {
        points.par_iter().map(|p| f(p, cfg)).collect()
    };
    match scenario {
        Scenario::StarkError => each(sideband::stark_error_point),
        Scenario::SidebandPi => each(sideband::sideband_pi_point),
        Scenario::RabiSweep => each(transmon::rabi_point),
        Scenario::GeometricShift => each(transmon::shift_point),
        Scenario::Spectrum => each(transmon::spectrum_point),
        Scenario::Cnot => each(sequence::cnot_point),
        Scenario::DispersiveReport => each(sequence::report_point),
        Scenario::FidelityVsKappa => sequence::kappa_points(points, cfg),
    }
}

/// Deserializes the scenario parameters of a point.
pub(crate) fn params_of<T: serde::de::DeserializeOwned>(p: &Point) -> Result<T> {
    parse_at(p.params.clone(), "params")
}

/// Process exit code for an error raised before any point ran (2) or during the run (3).
pub fn exit_code(e: &Error, during_run: bool) -> i32 {
    match e {
        Error::Config { .. } | Error::Json(_) => 2,
        _ if !during_run => 2,
        _ => 3,
    }
}
