//! Run configuration: a JSON file with command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use cdqaoa::expand::Orders;
use cdqaoa::matching::MatchConfig;
use cdqaoa::model::{InstanceSpec, TwoLevelNorm};
use cdqaoa::optim::AscentConfig;
use cdqaoa::oracle::OracleConfig;
use cdqaoa::schedule::{ProfileSpec, ScheduleSpec};
use cdqaoa::sim::{Drive, EvolveConfig};
use serde::{Deserialize, Serialize};

/// Gamma and beta lists, inline or loaded from a file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnglesInput {
    pub gammas: Vec<f64>,
    pub betas: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// Derive angles for every (p, s0) and simulate them.
    Derive,
    /// Continuous CD and adiabatic evolution for every (T, s0).
    Evolve,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub mode: SweepMode,
    pub s0: Vec<f64>,
    #[serde(rename = "T")]
    pub times: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { mode: SweepMode::Derive, s0: vec![0.0], times: vec![1.0, 2.0, 4.0, 8.0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub instance: Option<InstanceSpec>,
    pub schedule: Option<ScheduleSpec>,
    pub p: Vec<usize>,
    pub orders: Orders,
    /// Alpha source name from the registry; `numeric` unless set.
    pub alpha: String,
    pub alpha_params: BTreeMap<String, f64>,
    pub matcher: MatchConfig,
    pub ascent: AscentConfig,
    pub evolve: EvolveConfig,
    /// `statevector`, `fermion`, or `auto` (fermion for rings).
    pub simulator: String,
    /// Ring size for the fermion simulator when larger than the instance.
    pub fermion_size: Option<usize>,
    pub seed: u64,
    pub angles: Option<AnglesInput>,
    /// Angle file (JSON `{gammas, betas}` or CSV with `gamma,beta` columns).
    pub angles_file: Option<PathBuf>,
    /// Points of the lambda grid for `alpha`.
    pub grid_points: usize,
    /// `derive`: simulate the derived angles.
    pub simulate: bool,
    /// `simulate`: gradient ascent from the supplied or derived angles.
    pub optimize: bool,
    /// `simulate`: drives for schedule evolution.
    pub drives: Vec<Drive>,
    /// `simulate`: Bloch trajectory samples per layer (two-level only).
    pub trajectory_samples: Option<usize>,
    pub sweep: SweepConfig,
    pub oracle: OracleConfig,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            instance: None,
            schedule: None,
            p: Vec::new(),
            orders: Orders::default(),
            alpha: "numeric".into(),
            alpha_params: BTreeMap::new(),
            matcher: MatchConfig::default(),
            ascent: AscentConfig::default(),
            evolve: EvolveConfig::default(),
            simulator: "auto".into(),
            fermion_size: None,
            seed: 0,
            angles: None,
            angles_file: None,
            grid_points: 20,
            simulate: false,
            optimize: false,
            drives: vec![Drive::FULL, Drive::ADIABATIC],
            trajectory_samples: None,
            sweep: SweepConfig::default(),
            oracle: OracleConfig::default(),
            out: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn instance(&self) -> anyhow::Result<&InstanceSpec> {
        self.instance.as_ref().context("no instance given (use --instance)")
    }

    pub fn schedule(&self) -> anyhow::Result<&ScheduleSpec> {
        self.schedule.as_ref().context("no schedule given (use --schedule)")
    }

    /// Angles from `angles` or `angles_file`.
    pub fn load_angles(&self) -> anyhow::Result<Option<AnglesInput>> {
        if let Some(a) = &self.angles {
            return Ok(Some(a.clone()));
        }
        let Some(path) = &self.angles_file else {
            return Ok(None);
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        if path.extension().is_some_and(|e| e == "csv") {
            return read_angles_csv(&text).map(Some);
        }
        let v: serde_json::Value = serde_json::from_str(&text)?;
        // Accept a bare angle set or a report that carries one.
        let a = v.get("angles").unwrap_or(&v);
        Ok(Some(serde_json::from_value(a.clone()).context("angle file needs gammas and betas")?))
    }
}

fn read_angles_csv(text: &str) -> anyhow::Result<AnglesInput> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).with_context(|| format!("CSV lacks a {name} column"));
    let (gi, bi) = (col("gamma")?, col("beta")?);
    let mut out = AnglesInput { gammas: Vec::new(), betas: Vec::new() };
    for rec in rdr.records() {
        let rec = rec?;
        out.gammas.push(rec[gi].trim().parse()?);
        out.betas.push(rec[bi].trim().parse()?);
    }
    Ok(out)
}

/// Reads inline JSON, a JSON file, or a shorthand.
fn json_or_file<T: serde::de::DeserializeOwned>(arg: &str) -> anyhow::Result<Option<T>> {
    if arg.trim_start().starts_with('{') {
        return Ok(Some(serde_json::from_str(arg)?));
    }
    let path = Path::new(arg);
    if arg.ends_with(".json") || path.is_file() {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {arg}"))?;
        return Ok(Some(serde_json::from_str(&text).with_context(|| format!("parsing {arg}"))?));
    }
    Ok(None)
}

fn num<T: std::str::FromStr>(s: &str, what: &str) -> anyhow::Result<T> {
    s.parse().map_err(|_| anyhow::anyhow!("bad {what} {s:?}"))
}

/// `two_level`, `two_level_bloch`, `ring:N`, `regular:N:D:SEED`,
/// `maxcut:0-1,1-2,...`, inline JSON, or a JSON file.
pub fn parse_instance(arg: &str) -> anyhow::Result<InstanceSpec> {
    if let Some(spec) = json_or_file(arg)? {
        return Ok(spec);
    }
    let parts: Vec<&str> = arg.split(':').collect();
    Ok(match parts.as_slice() {
        ["two_level"] => InstanceSpec::TwoLevel { normalization: TwoLevelNorm::Ising },
        ["two_level_bloch"] => InstanceSpec::TwoLevel { normalization: TwoLevelNorm::Bloch },
        ["ring", n] => InstanceSpec::IsingRing { n: num(n, "ring size")? },
        ["regular", n, d, seed] => {
            InstanceSpec::RandomRegular { n: num(n, "vertex count")?, degree: num(d, "degree")?, seed: num(seed, "seed")? }
        }
        ["maxcut", edges] => {
            let edges = edges
                .split(',')
                .map(|e| {
                    let (a, b) = e.split_once('-').with_context(|| format!("edge {e:?} is not i-j"))?;
                    Ok((num(a, "vertex")?, num(b, "vertex")?))
                })
                .collect::<anyhow::Result<_>>()?;
            InstanceSpec::MaxCut { edges }
        }
        _ => bail!("unrecognized instance {arg:?}"),
    })
}

/// `linear`, `linear_sine:S0`, `smoothstep`, `smoothstep_sine:S0`,
/// `power:R`, with an optional `@T` suffix; or inline JSON / a JSON file.
pub fn parse_schedule(arg: &str) -> anyhow::Result<ScheduleSpec> {
    if let Some(spec) = json_or_file(arg)? {
        return Ok(spec);
    }
    let (body, total) = match arg.split_once('@') {
        Some((b, t)) => (b, num(t, "total time")?),
        None => (arg, 1.0),
    };
    let (form, param) = match body.split_once(':') {
        Some((f, p)) => (f, Some(num::<f64>(p, "schedule parameter")?)),
        None => (body, None),
    };
    let sine = |s0: Option<f64>| ProfileSpec::named("sine", &[("s0", s0.unwrap_or(0.0))]);
    let zero = ProfileSpec::named("zero", &[]);
    let (lambda, s) = match (form, param) {
        ("linear", None) => (ProfileSpec::named("linear", &[]), zero),
        ("linear_sine", p) => (ProfileSpec::named("linear", &[]), sine(p)),
        ("smoothstep", None) => (ProfileSpec::named("smoothstep", &[]), zero),
        ("smoothstep_sine", p) => (ProfileSpec::named("smoothstep", &[]), sine(p)),
        ("power", Some(r)) => (ProfileSpec::named("power", &[("r", r)]), zero),
        _ => bail!("unrecognized schedule {arg:?}"),
    };
    Ok(ScheduleSpec { total_time: total, lambda, s })
}

/// `3` or `1,2,4,8` or `2..=6`.
pub fn parse_p_list(arg: &str) -> anyhow::Result<Vec<usize>> {
    if let Some((a, b)) = arg.split_once("..=") {
        let (a, b): (usize, usize) = (num(a, "depth")?, num(b, "depth")?);
        return Ok((a..=b).collect());
    }
    arg.split(',').map(|s| num(s.trim(), "depth")).collect()
}

/// `BCH,MAGNUS`, e.g. `4,3`.
pub fn parse_orders(arg: &str) -> anyhow::Result<Orders> {
    let (b, m) = arg.split_once(',').context("orders are BCH,MAGNUS")?;
    Ok(Orders::new(num(b, "BCH order")?, num(m, "Magnus order")?)?)
}
