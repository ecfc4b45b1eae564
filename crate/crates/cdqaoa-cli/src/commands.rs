use std::sync::Arc;

use anyhow::{bail, Context};
use cdqaoa::agp::{default_closed_form, AlphaProfile, AlphaRegistry, AlphaSource, ClosedAlpha};
use cdqaoa::matching::{derive_angles, reverse_protocol, AngleSet, MatchReport};
use cdqaoa::model::{InstanceKind, ProblemInstance};
use cdqaoa::optim::gradient_ascent;
use cdqaoa::oracle::run_all;
use cdqaoa::schedule::{ProfileRegistry, ProfileSpec, ScheduleShape, ScheduleSpec};
use cdqaoa::sim::{bloch_trajectory, qaoa_state_compiled, Compiled, Drive, FermionSim, SimInput, Simulator, SimulatorRegistry};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{AnglesInput, RunConfig, SweepMode};
use crate::output::{value_digest, Sink};

/// Numerical check that ran to completion but did not hold; exit code 3.
#[derive(Debug)]
pub struct ContractFailure(pub String);

impl std::fmt::Display for ContractFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ContractFailure {}

/// Agreement required between numeric and closed-form alpha.
pub const ALPHA_AGREEMENT: f64 = 1e-8;

fn alpha_source(cfg: &RunConfig, inst: &ProblemInstance) -> anyhow::Result<Arc<dyn AlphaSource>> {
    Ok(AlphaRegistry::default().build(&cfg.alpha, inst, &cfg.alpha_params)?)
}

fn simulator(cfg: &RunConfig, inst: &ProblemInstance) -> anyhow::Result<Arc<dyn Simulator>> {
    let is_ring = matches!(inst.kind, InstanceKind::IsingRing(_));
    match cfg.simulator.as_str() {
        "auto" if is_ring => Ok(Arc::new(FermionSim { size: cfg.fermion_size })),
        "auto" => Ok(SimulatorRegistry::default().get("statevector")?),
        "fermion" => Ok(Arc::new(FermionSim { size: cfg.fermion_size })),
        name => Ok(SimulatorRegistry::default().get(name)?),
    }
}

fn warn_all(context: &str, warnings: &[String]) {
    for w in warnings {
        eprintln!("warning ({context}): {w}");
    }
}

#[derive(Serialize)]
struct AlphaRow {
    lambda: f64,
    numeric: f64,
    closed: Option<f64>,
    difference: Option<f64>,
}

pub fn alpha(cfg: &RunConfig) -> anyhow::Result<()> {
    let inst = cfg.instance()?.build()?;
    let sink = Sink::new("alpha", cfg);
    let numeric = AlphaRegistry::default().build("numeric", &inst, &cfg.alpha_params)?;
    let closed: Option<Arc<dyn AlphaSource>> = if cfg.alpha != "numeric" {
        Some(alpha_source(cfg, &inst)?)
    } else {
        default_closed_form(&inst).map(|f| Arc::new(ClosedAlpha(f)) as Arc<dyn AlphaSource>)
    };
    let grid = cdqaoa::agp::unit_grid(cfg.grid_points.max(1));
    let num = AlphaProfile::sample(&inst, numeric.as_ref(), &grid)?;
    let rows: Vec<AlphaRow> = num
        .grid
        .iter()
        .map(|&(l, a)| {
            let c = closed.as_ref().map(|c| c.alpha(l));
            AlphaRow { lambda: l, numeric: a, closed: c, difference: c.map(|c| c - a) }
        })
        .collect();
    sink.csv("", &rows)?;
    let worst = rows.iter().filter_map(|r| r.difference).fold(0.0f64, |m, d| m.max(d.abs()));
    if worst > ALPHA_AGREEMENT {
        let name = closed.map(|c| c.name()).unwrap_or_default();
        return Err(ContractFailure(format!(
            "closed form {name} disagrees with numeric alpha by {worst:.3e} (allowed {ALPHA_AGREEMENT:e})"
        ))
        .into());
    }
    Ok(())
}

#[derive(Serialize)]
struct Derived {
    p: usize,
    ratio: Option<f64>,
    report: MatchReport,
}

#[derive(Serialize)]
struct AngleRow {
    p: usize,
    q: usize,
    gamma: f64,
    beta: f64,
    tau: f64,
    step_error: f64,
    bch_ok: bool,
    magnus_ok: bool,
}

fn simulate_angles(cfg: &RunConfig, inst: &ProblemInstance, g: &[f64], b: &[f64]) -> anyhow::Result<f64> {
    let sim = simulator(cfg, inst)?;
    Ok(sim.run(inst, &SimInput::Angles { gammas: g, betas: b })?.ratio)
}

fn derive_one(cfg: &RunConfig, inst: &ProblemInstance, shape: &ScheduleShape, p: usize) -> anyhow::Result<Derived> {
    let alpha = alpha_source(cfg, inst)?;
    let mut report = derive_angles(inst, shape, p, cfg.orders, alpha.as_ref(), &cfg.matcher)?;
    report.provenance.seed = Some(cfg.seed);
    let ratio = if cfg.simulate {
        Some(simulate_angles(cfg, inst, &report.angles.gammas, &report.angles.betas)?)
    } else {
        None
    };
    Ok(Derived { p, ratio, report })
}

fn depths(cfg: &RunConfig) -> anyhow::Result<&[usize]> {
    if cfg.p.is_empty() {
        bail!("no depth given (use --p)");
    }
    if cfg.p.contains(&0) {
        bail!("depth must be at least 1");
    }
    Ok(&cfg.p)
}

pub fn derive(cfg: &RunConfig) -> anyhow::Result<()> {
    let inst = cfg.instance()?.build()?;
    let shape = cfg.schedule()?.shape(&ProfileRegistry::default())?;
    let sink = Sink::new("derive", cfg);
    let results: Vec<Derived> =
        depths(cfg)?.par_iter().map(|&p| derive_one(cfg, &inst, &shape, p)).collect::<anyhow::Result<_>>()?;
    for d in &results {
        warn_all(&format!("p={}", d.p), &d.report.warnings);
    }
    let rows: Vec<AngleRow> = results
        .iter()
        .flat_map(|d| {
            let a = &d.report.angles;
            (0..a.p).map(move |q| AngleRow {
                p: d.p,
                q: q + 1,
                gamma: a.gammas[q],
                beta: a.betas[q],
                tau: a.taus[q],
                step_error: a.step_errors[q],
                bch_ok: d.report.validity[q].bch_ok,
                magnus_ok: d.report.validity[q].magnus_ok,
            })
        })
        .collect();
    sink.json(cfg, &results)?;
    if cfg.out.is_some() {
        sink.csv("", &rows)?;
    }
    Ok(())
}

fn require_angles(cfg: &RunConfig) -> anyhow::Result<AnglesInput> {
    cfg.load_angles()?.context("no angles given (use --angles or the angles config field)")
}

pub fn reverse(cfg: &RunConfig) -> anyhow::Result<()> {
    let inst = cfg.instance()?.build()?;
    let angles = require_angles(cfg)?;
    let alpha = alpha_source(cfg, &inst)?;
    let report = reverse_protocol(&inst, &angles.gammas, &angles.betas, cfg.orders, alpha.as_ref(), &cfg.matcher)?;
    warn_all("reverse", &report.warnings);
    Sink::new("reverse", cfg).json(cfg, &report)
}

/// One simulation record.
#[derive(Clone, Debug, Serialize)]
pub struct SimRecord {
    pub instance: String,
    /// Digest of the angles or schedule that were simulated.
    pub input_digest: String,
    pub ratio: f64,
    #[serde(rename = "T")]
    pub total_time: f64,
    pub p: Option<usize>,
    pub method: String,
}

#[derive(Serialize)]
struct Simulated {
    records: Vec<SimRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    optimized: Option<Optimized>,
}

#[derive(Serialize)]
struct Optimized {
    start_ratio: f64,
    ratio: f64,
    iterations: usize,
    converged: bool,
    grad_norm: f64,
    angles: AngleSet,
}

#[derive(Serialize)]
struct TrajectoryRow {
    x: f64,
    y: f64,
    z: f64,
}

/// Gradient ascent on the statevector ratio over `[gammas, betas]`.
fn optimize(cfg: &RunConfig, inst: &ProblemInstance, start: &AnglesInput) -> anyhow::Result<Optimized> {
    let comp = Compiled::new(inst)?;
    let p = start.gammas.len();
    let f = |x: &[f64]| -> f64 {
        let (g, b) = x.split_at(p);
        qaoa_state_compiled(&comp, g, b).and_then(|s| comp.ratio(&s)).unwrap_or(f64::NAN)
    };
    let x0: Vec<f64> = start.gammas.iter().chain(&start.betas).copied().collect();
    let start_ratio = f(&x0);
    let r = gradient_ascent(&f, &x0, &cfg.ascent);
    if !r.f.is_finite() {
        return Err(ContractFailure("objective became non-finite during ascent".into()).into());
    }
    let (g, b) = r.x.split_at(p);
    Ok(Optimized {
        start_ratio,
        ratio: r.f,
        iterations: r.iters,
        converged: r.converged,
        grad_norm: r.grad_norm,
        angles: AngleSet::from_angles(g.to_vec(), b.to_vec())?,
    })
}

fn drive_name(d: &Drive) -> &'static str {
    match (d.include_cd, d.include_s) {
        (true, true) => "cd",
        (false, false) => "adiabatic",
        (true, false) => "cd_only",
        (false, true) => "s_only",
    }
}

pub fn simulate(cfg: &RunConfig) -> anyhow::Result<()> {
    let inst = cfg.instance()?.build()?;
    let sink = Sink::new("simulate", cfg);
    let mut angles = cfg.load_angles()?;
    if angles.is_none() && cfg.optimize {
        // Warm start from angles derived on the given schedule.
        let &[p] = depths(cfg)? else { bail!("optimization needs a single depth") };
        let shape = cfg.schedule()?.shape(&ProfileRegistry::default())?;
        let d = derive_one(cfg, &inst, &shape, p)?;
        angles = Some(AnglesInput { gammas: d.report.angles.gammas, betas: d.report.angles.betas });
    }
    let mut records = Vec::new();
    let mut optimized = None;
    if let Some(a) = &angles {
        let set = AngleSet::from_angles(a.gammas.clone(), a.betas.clone())?;
        let sim = simulator(cfg, &inst)?;
        let ratio = sim.run(&inst, &SimInput::Angles { gammas: &a.gammas, betas: &a.betas })?.ratio;
        records.push(SimRecord {
            instance: inst.name(),
            input_digest: value_digest(a),
            ratio,
            total_time: set.equivalent_t,
            p: Some(set.p),
            method: format!("qaoa/{}", sim.name()),
        });
        if cfg.optimize {
            let o = optimize(cfg, &inst, a)?;
            records.push(SimRecord {
                instance: inst.name(),
                input_digest: value_digest(&(&o.angles.gammas, &o.angles.betas)),
                ratio: o.ratio,
                total_time: o.angles.equivalent_t,
                p: Some(o.angles.p),
                method: "qaoa/optimized".into(),
            });
            optimized = Some(o);
        }
        if let Some(samples) = cfg.trajectory_samples {
            let final_angles = optimized.as_ref().map(|o| (&o.angles.gammas, &o.angles.betas));
            let (g, b) = final_angles.unwrap_or((&a.gammas, &a.betas));
            let rows: Vec<TrajectoryRow> =
                bloch_trajectory(&inst, g, b, samples)?.into_iter().map(|[x, y, z]| TrajectoryRow { x, y, z }).collect();
            sink.csv("_trajectory", &rows)?;
        }
    } else {
        let spec = cfg.schedule()?;
        let sched = spec.build(&ProfileRegistry::default())?;
        let alpha = alpha_source(cfg, &inst)?;
        let sim = simulator(cfg, &inst)?;
        let runs: Vec<(Drive, f64)> = cfg
            .drives
            .par_iter()
            .map(|&drive| {
                let input = SimInput::Schedule { sched: &sched, alpha: alpha.as_ref(), drive, cfg: cfg.evolve };
                Ok((drive, sim.run(&inst, &input)?.ratio))
            })
            .collect::<anyhow::Result<_>>()?;
        for (drive, ratio) in runs {
            records.push(SimRecord {
                instance: inst.name(),
                input_digest: value_digest(spec),
                ratio,
                total_time: spec.total_time,
                p: None,
                method: format!("{}/{}", drive_name(&drive), sim.name()),
            });
        }
    }
    sink.json(cfg, &Simulated { records, optimized })
}

pub fn oracle(cfg: &RunConfig) -> anyhow::Result<()> {
    let report = run_all(&cfg.oracle)?;
    for c in &report.checks {
        let tag = if c.passed { "pass" } else { "FAIL" };
        eprintln!("{tag} {:<9} {:<32} measured {:.4e} expected {:.4e}", c.suite, c.name, c.measured, c.expected);
    }
    Sink::new("oracle", cfg).json(cfg, &report)?;
    let bad: Vec<String> = report.failures().map(|c| format!("{} {}: {}", c.suite, c.name, c.detail)).collect();
    if !bad.is_empty() {
        return Err(ContractFailure(format!("{} oracle checks failed:\n{}", bad.len(), bad.join("\n"))).into());
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
struct SweepRow {
    p: Option<usize>,
    s0: f64,
    #[serde(rename = "T")]
    total_time: f64,
    ratio: f64,
    adiabatic_ratio: Option<f64>,
    total_error: Option<f64>,
    warnings: usize,
}

fn with_s0(spec: &ScheduleSpec, s0: f64) -> ScheduleSpec {
    ScheduleSpec { s: ProfileSpec::named("sine", &[("s0", s0)]), ..spec.clone() }
}

pub fn sweep(cfg: &RunConfig) -> anyhow::Result<()> {
    let inst = cfg.instance()?.build()?;
    let base = cfg.schedule()?.clone();
    let reg = ProfileRegistry::default();
    let sink = Sink::new("sweep", cfg);
    let mut rows: Vec<SweepRow> = match cfg.sweep.mode {
        SweepMode::Derive => {
            let grid: Vec<(usize, f64)> =
                depths(cfg)?.iter().flat_map(|&p| cfg.sweep.s0.iter().map(move |&s| (p, s))).collect();
            let sim_cfg = RunConfig { simulate: true, ..cfg.clone() };
            grid.par_iter()
                .map(|&(p, s0)| {
                    let shape = with_s0(&base, s0).shape(&reg)?;
                    let d = derive_one(&sim_cfg, &inst, &shape, p)?;
                    Ok(SweepRow {
                        p: Some(p),
                        s0,
                        total_time: d.report.angles.equivalent_t,
                        ratio: d.ratio.expect("simulated"),
                        adiabatic_ratio: None,
                        total_error: Some(d.report.total_error),
                        warnings: d.report.warnings.len(),
                    })
                })
                .collect::<anyhow::Result<_>>()?
        }
        SweepMode::Evolve => {
            let grid: Vec<(f64, f64)> =
                cfg.sweep.times.iter().flat_map(|&t| cfg.sweep.s0.iter().map(move |&s| (t, s))).collect();
            let alpha = alpha_source(cfg, &inst)?;
            let sim = simulator(cfg, &inst)?;
            grid.par_iter()
                .map(|&(t, s0)| {
                    let sched = ScheduleSpec { total_time: t, ..with_s0(&base, s0) }.build(&reg)?;
                    let run = |drive| -> anyhow::Result<f64> {
                        let input = SimInput::Schedule { sched: &sched, alpha: alpha.as_ref(), drive, cfg: cfg.evolve };
                        Ok(sim.run(&inst, &input)?.ratio)
                    };
                    Ok(SweepRow {
                        p: None,
                        s0,
                        total_time: t,
                        ratio: run(Drive::FULL)?,
                        adiabatic_ratio: Some(run(Drive::ADIABATIC)?),
                        total_error: None,
                        warnings: 0,
                    })
                })
                .collect::<anyhow::Result<_>>()?
        }
    };
    // Merge order is the sort key, independent of worker scheduling.
    rows.sort_by(|a, b| a.p.cmp(&b.p).then(a.s0.total_cmp(&b.s0)).then(a.total_time.total_cmp(&b.total_time)));
    sink.csv("", &rows)?;
    if cfg.out.is_some() {
        sink.json(cfg, &rows)?;
    }
    Ok(())
}
