//! Forward map (schedule, p) -> (angles, T) and reverse map angles -> schedule.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::agp::AlphaSource;
use crate::error::{Error, Result};
use crate::expand::{magnus_integrals, ExpansionBasis, Orders};
use crate::model::ProblemInstance;
use crate::optim::{nelder_mead, NelderMeadConfig};
use crate::pauli::norm;
use crate::quad::GaussLegendre;
use crate::schedule::{MonotoneCubic, PinnedCubic, Schedule, ScheduleShape, ScheduleSpec};

/// Closed-form step from the lowest-order matching.
///
/// `tau = -2 (s + lambda_dot alpha) / (lambda (1 - lambda))`, `gamma = tau lambda`,
/// `beta = tau (1 - lambda)`.
pub fn closed_form_step(lambda_bar: f64, lambda_dot: f64, s_bar: f64, alpha_bar: f64) -> Result<(f64, f64, f64)> {
    closed_form_from_drive(lambda_bar, s_bar + lambda_dot * alpha_bar)
}

fn closed_form_from_drive(lambda_bar: f64, drive: f64) -> Result<(f64, f64, f64)> {
    const EPS: f64 = 1e-3;
    if !(EPS..=1.0 - EPS).contains(&lambda_bar) {
        return Err(Error::EdgeSingularity(lambda_bar));
    }
    if !(drive < 0.0) {
        return Err(Error::NoMatching(drive));
    }
    let tau = -2.0 * drive / (lambda_bar * (1.0 - lambda_bar));
    Ok((tau, tau * lambda_bar, tau * (1.0 - lambda_bar)))
}

/// The 2p angles plus matched step durations and residual errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleSet {
    pub p: usize,
    pub gammas: Vec<f64>,
    pub betas: Vec<f64>,
    pub taus: Vec<f64>,
    pub step_errors: Vec<f64>,
    #[serde(rename = "T")]
    pub equivalent_t: f64,
}

impl AngleSet {
    /// Angles without matched durations (taus default to `gamma + beta`).
    pub fn from_angles(gammas: Vec<f64>, betas: Vec<f64>) -> Result<Self> {
        if gammas.len() != betas.len() || gammas.is_empty() {
            return Err(Error::Validation("gammas and betas must be nonempty and of equal length".into()));
        }
        let taus: Vec<f64> = gammas.iter().zip(&betas).map(|(g, b)| g + b).collect();
        let p = gammas.len();
        Ok(Self { p, equivalent_t: taus.iter().sum(), gammas, betas, taus, step_errors: vec![0.0; p] })
    }

    pub fn check(&self) -> Result<()> {
        let p = self.p;
        if [self.gammas.len(), self.betas.len(), self.taus.len(), self.step_errors.len()]
            .iter()
            .any(|&l| l != p)
        {
            return Err(Error::Validation("angle set lengths disagree with p".into()));
        }
        let sum: f64 = self.taus.iter().sum();
        if (sum - self.equivalent_t).abs() > 1e-12 * sum.abs().max(1.0) {
            return Err(Error::Contract("equivalent T differs from the sum of taus".into()));
        }
        Ok(())
    }

    /// Interleaved `[gamma_1, beta_1, gamma_2, ...]`.
    pub fn flat(&self) -> Vec<f64> {
        self.gammas.iter().zip(&self.betas).flat_map(|(g, b)| [*g, *b]).collect()
    }

    pub fn from_flat(x: &[f64]) -> Result<Self> {
        Self::from_angles(x.iter().step_by(2).copied().collect(), x.iter().skip(1).step_by(2).copied().collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Validity {
    pub bch_ok: bool,
    pub magnus_ok: bool,
}

/// Norms entering the perturbative criteria, `sqrt(norm_sq)` of each operator.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct OperatorNorms {
    pub comm: f64,
    pub target: f64,
    pub simple: f64,
}

impl OperatorNorms {
    pub fn of(inst: &ProblemInstance) -> Result<Self> {
        Ok(Self { comm: norm(&inst.comm)?, target: norm(&inst.h_target)?, simple: norm(&inst.h_simple)? })
    }
}

/// Margin that turns "much smaller than" into a predicate.
pub const VALIDITY_MARGIN: f64 = 0.2;

/// BCH criterion: third-order BCH terms small against the second-order one,
/// both in the angles and in the schedule form `|c/3(1-l)| + |c/3l|` with
/// `c = s + lambda_dot alpha`. Magnus criterion: second-order term small
/// against the first, `lambda_dot tau^3 |C| / 12 < 0.2 tau (|H_T| + |H_S|)`
/// with `tau = gamma + beta`.
pub fn validity_check(
    gamma: f64,
    beta: f64,
    lambda_bar: f64,
    lambda_dot: f64,
    s_bar: f64,
    alpha_bar: f64,
    norms: &OperatorNorms,
) -> Validity {
    let m = VALIDITY_MARGIN;
    let angle_form = (gamma * gamma * beta / 12.0).abs() + (beta * beta * gamma / 12.0).abs()
        < m * (gamma * beta / 2.0).abs();
    let c = s_bar + lambda_dot * alpha_bar;
    let sched_form = (c / (3.0 * (1.0 - lambda_bar))).abs() + (c / (3.0 * lambda_bar)).abs() < m;
    let tau = gamma + beta;
    let magnus_ok = lambda_dot.abs() * tau.powi(3) * norms.comm / 12.0 < m * tau.abs() * (norms.target + norms.simple);
    Validity { bch_ok: angle_form && sched_form, magnus_ok }
}

/// Settings of the forward and reverse matching.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    pub simplex: NelderMeadConfig,
    /// Bracket for the outer search on `T`.
    pub t_bracket: (f64, f64),
    /// Relative tolerance of the searches on `T`.
    pub t_rel_tol: f64,
    /// Endpoint clamp for `lambda_bar` in the closed-form seed.
    pub lambda_clamp: (f64, f64),
    /// Steps with larger minimized error are flagged in the report.
    pub error_ceiling: f64,
    /// Adjacent-angle jump that marks reverse input as non-smooth.
    pub smooth_threshold: f64,
    /// Levenberg-Marquardt iterations of the reverse map; 0 keeps the lowest-order fit.
    pub reverse_iterations: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            simplex: NelderMeadConfig::default(),
            t_bracket: (0.1, 200.0),
            t_rel_tol: 1e-4,
            lambda_clamp: (0.02, 0.98),
            error_ceiling: 0.5,
            smooth_threshold: 0.5,
            reverse_iterations: 30,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Reverse,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Provenance {
    pub instance: String,
    pub orders: Orders,
    pub alpha: String,
    pub optimizer: MatchConfig,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatchReport {
    pub direction: Direction,
    pub angles: AngleSet,
    pub schedule: ScheduleSpec,
    pub validity: Vec<Validity>,
    pub total_error: f64,
    /// Per-step residuals of the fitted schedule (reverse direction only):
    /// fitted minus implied interval averages of `lambda` and `s`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lambda_residuals: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub s_residuals: Vec<f64>,
    pub warnings: Vec<String>,
    pub provenance: Provenance,
}

#[derive(Clone, Copy, Debug)]
struct Step {
    gamma: f64,
    beta: f64,
    tau: f64,
    error: f64,
}

#[derive(Clone, Debug)]
struct Candidate {
    t: f64,
    total: f64,
    steps: Option<Vec<Step>>,
}

/// Largest angle mismatch for which the reverse keeps the consistent fit.
pub const REVERSE_ACCEPT: f64 = 1e-2;

/// Interior steps shorter than this fraction of `T` are rejected.
pub const TAU_FLOOR: f64 = 1e-4;

/// Per-instance state shared by all steps and all candidate `T`.
pub struct Matcher<'a> {
    inst: &'a ProblemInstance,
    alpha: &'a dyn AlphaSource,
    basis: ExpansionBasis,
    orders: Orders,
    cfg: MatchConfig,
    norms: OperatorNorms,
    gl: GaussLegendre,
}

impl<'a> Matcher<'a> {
    pub fn new(inst: &'a ProblemInstance, alpha: &'a dyn AlphaSource, orders: Orders, cfg: MatchConfig) -> Result<Self> {
        Ok(Self {
            inst,
            alpha,
            basis: ExpansionBasis::new(inst, orders)?,
            orders,
            cfg,
            norms: OperatorNorms::of(inst)?,
            gl: GaussLegendre::new(16),
        })
    }

    pub fn basis(&self) -> &ExpansionBasis {
        &self.basis
    }

    fn averages(&self, sched: &Schedule, t0: f64, tau: f64) -> (f64, f64, f64) {
        let lam = self.gl.integrate(t0, t0 + tau, |t| sched.lambda(t)) / tau;
        let s = self.gl.integrate(t0, t0 + tau, |t| sched.s(t)) / tau;
        let cd = self.alpha.integral(sched.lambda(t0), sched.lambda(t0 + tau)) / tau;
        (lam, s, cd)
    }

    fn omega(&self, sched: &Schedule, t0: f64, tau: f64, out: &mut [f64]) -> Result<()> {
        let ints = magnus_integrals(sched, self.alpha, t0, tau, self.orders.magnus)?;
        self.basis.magnus_coeffs(&ints, out);
        Ok(())
    }

    fn error_at(&self, sched: &Schedule, gamma: f64, beta: f64, t0: f64, tau: f64, scratch: &mut [Vec<f64>; 2]) -> f64 {
        let [om, z] = scratch;
        om.resize(self.basis.len(), 0.0);
        if self.omega(sched, t0, tau, om).is_err() {
            return f64::INFINITY;
        }
        self.basis.error(gamma, beta, om, tau, z)
    }

    /// Closed-form seed for `tau` by fixed-point iteration.
    fn seed_tau(&self, sched: &Schedule, t0: f64, floor: f64, rem: f64) -> f64 {
        let (lo, hi) = self.cfg.lambda_clamp;
        let mut tau = rem;
        for _ in 0..30 {
            let (l, s, cd) = self.averages(sched, t0, tau);
            match closed_form_from_drive(l.clamp(lo, hi), s + cd) {
                Ok((t, _, _)) => {
                    let t = t.clamp(floor, rem);
                    let done = (t - tau).abs() < 1e-10 * tau;
                    tau = t;
                    if done {
                        break;
                    }
                }
                Err(_) => break,
            }
        }
        tau
    }

    /// Best angles for a fixed step `[t0, t0 + tau]`.
    fn angles_at(&self, sched: &Schedule, t0: f64, tau: f64) -> Step {
        let mut om = vec![0.0; self.basis.len()];
        if self.omega(sched, t0, tau, &mut om).is_err() {
            return Step { gamma: 0.0, beta: 0.0, tau, error: f64::INFINITY };
        }
        let (l, _, _) = self.averages(sched, t0, tau);
        let mut z = Vec::new();
        let m = nelder_mead(|x| self.basis.error(x[0], x[1], &om, tau, &mut z), &[tau * l, tau * (1.0 - l)], &self.cfg.simplex);
        Step { gamma: m.x[0], beta: m.x[1], tau, error: m.f }
    }

    /// Local minimum of the step error in `tau` strictly inside `(floor, rem)`,
    /// found by walking downhill in `ln tau` from the closed-form seed and
    /// refining by golden section. `None` when the error keeps falling
    /// toward either end.
    fn interior_step(&self, sched: &Schedule, t0: f64, rem: f64) -> Option<Step> {
        let floor = TAU_FLOOR * sched.total_time;
        if rem <= floor * 1.5 {
            return None;
        }
        let (xf, xr) = (floor.ln(), rem.ln());
        let h = 0.25f64;
        let eval = |x: f64| self.angles_at(sched, t0, x.exp());
        let x0 = self.seed_tau(sched, t0, floor, rem).ln().clamp(xf + 0.5 * h, xr - 0.5 * h);
        let mut mid = (x0, eval(x0));
        let up_x = (x0 + h).min(xr);
        let dn_x = (x0 - h).max(xf);
        let (up, dn) = ((up_x, eval(up_x)), (dn_x, eval(dn_x)));
        let (mut a, mut c);
        if up.1.error < mid.1.error {
            // Walk toward longer steps.
            a = mid;
            mid = up;
            loop {
                if mid.0 >= xr {
                    return None;
                }
                let nx = (mid.0 + h).min(xr);
                let next = (nx, eval(nx));
                if next.1.error >= mid.1.error {
                    c = next;
                    break;
                }
                a = mid;
                mid = next;
            }
        } else if dn.1.error < mid.1.error {
            c = mid;
            mid = dn;
            loop {
                if mid.0 <= xf {
                    return None;
                }
                let nx = (mid.0 - h).max(xf);
                let next = (nx, eval(nx));
                if next.1.error >= mid.1.error {
                    a = next;
                    break;
                }
                c = mid;
                mid = next;
            }
        } else {
            a = dn;
            c = up;
        }
        // Golden section on [a, c] around mid.
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let (mut lo, mut hi) = (a.0, c.0);
        let mut best = mid;
        let (mut x1, mut x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
        let (mut f1, mut f2) = (eval(x1), eval(x2));
        while hi - lo > 1e-7 {
            if f1.error <= f2.error {
                hi = x2;
                (x2, f2) = (x1, f1);
                x1 = hi - g * (hi - lo);
                f1 = eval(x1);
            } else {
                lo = x1;
                (x1, f1) = (x2, f2);
                x2 = lo + g * (hi - lo);
                f2 = eval(x2);
            }
            for (x, f) in [(x1, f1), (x2, f2)] {
                if f.error < best.1.error {
                    best = (x, f);
                }
            }
        }
        let st = best.1;
        (st.tau > floor * 1.0001 && st.tau < rem * (1.0 - 1e-7) && st.error.is_finite()).then_some(st)
    }

    /// Serial march at fixed `T`: interior minima while they exist, then one
    /// step over the remainder. Stops after `limit + 1` steps.
    fn march(&self, shape: &ScheduleShape, total: f64, limit: usize) -> Result<Vec<Step>> {
        let sched = shape.at(total)?;
        let mut steps = Vec::new();
        let mut t0 = 0.0;
        while total - t0 > 1e-12 * total && steps.len() <= limit {
            let st = match self.interior_step(&sched, t0, total - t0) {
                Some(st) => st,
                None => self.angles_at(&sched, t0, total - t0),
            };
            t0 += st.tau;
            steps.push(st);
        }
        Ok(steps)
    }

    /// Exactly `p` steps at fixed `T`: `p - 1` interior minima, then the
    /// remainder. `None` if an interior minimum is missing or fills `T`.
    fn march_p(&self, shape: &ScheduleShape, total: f64, p: usize) -> Result<Option<Vec<Step>>> {
        let sched = shape.at(total)?;
        let mut steps = Vec::with_capacity(p);
        let mut t0 = 0.0;
        for _ in 1..p {
            match self.interior_step(&sched, t0, total - t0) {
                Some(st) => {
                    t0 += st.tau;
                    steps.push(st);
                }
                None => return Ok(None),
            }
        }
        let rem = total - t0;
        if rem <= TAU_FLOOR * total {
            return Ok(None);
        }
        steps.push(self.angles_at(&sched, t0, rem));
        Ok(Some(steps))
    }

    /// Forward matching at depth `p`. For each candidate `T` the march takes
    /// `p - 1` locally optimal steps and closes with the remainder, and `T`
    /// minimizes the total error. For `p >= 2` only the window where the free
    /// march itself closes in `p` steps is admitted: beyond it the closing
    /// step overshoots its own optimum and truncated series match spuriously.
    /// At `p = 1` the search also covers a geometric scan of the whole bracket.
    pub fn derive(&self, shape: &ScheduleShape, p: usize) -> Result<MatchReport> {
        if p == 0 {
            return Err(Error::Validation("p must be at least 1".into()));
        }
        shape.check_endpoints()?;
        let hi = self.cfg.t_bracket.1;
        let eval = |t: f64| -> Result<Candidate> {
            let steps = self.march_p(shape, t, p)?;
            let total = steps.as_ref().map_or(f64::INFINITY, |s| s.iter().map(|st| st.error).sum());
            Ok(Candidate { t, total, steps })
        };
        let t_min = self.first_feasible(shape, p)?;
        let ratio = 1.15f64;

        // Geometric scan until the total error has clearly turned upward.
        let mut grid = vec![eval(t_min)?];
        let mut k_best = 0;
        loop {
            let t = grid.last().unwrap().t * ratio;
            if t > hi || grid.len() - 1 >= k_best + 4 {
                break;
            }
            grid.push(eval(t)?);
            if grid.last().unwrap().total < grid[k_best].total {
                k_best = grid.len() - 1;
            }
        }
        let mut warnings = Vec::new();
        if k_best + 1 >= grid.len() && grid.last().unwrap().t * ratio > hi {
            warnings.push(format!("total error still decreasing at the bracket end T = {hi}"));
        }
        let scan = self.refine(&eval, &grid, k_best)?;
        let mut best = if p == 1 { scan.clone() } else { Candidate { t: scan.t, total: f64::INFINITY, steps: None } };

        // Window of exact step count, sampled uniformly then refined.
        if let Some(t_edge) = self.count_edge(shape, t_min, p)? {
            if t_edge > t_min * (1.0 + self.cfg.t_rel_tol) {
                let n = 8;
                let win: Vec<Candidate> = (0..=n)
                    .map(|i| eval(t_min + (t_edge - t_min) * i as f64 / n as f64))
                    .collect::<Result<_>>()?;
                let k = (0..win.len()).min_by(|&a, &b| win[a].total.total_cmp(&win[b].total)).unwrap();
                let cand = self.refine(&eval, &win, k)?;
                if cand.total < best.total {
                    best = cand;
                }
            }
        }
        if !best.total.is_finite() && scan.steps.is_some() {
            warnings.push("no T where the free march closes in exactly p steps; closing step overshoots".into());
            best = scan;
        }
        let Some(steps) = best.steps else {
            return Err(Error::InfeasibleDepth(format!("no feasible T found for p = {p}")));
        };
        self.report(shape, best.t, &steps, warnings)
    }

    /// Smallest `T` admitting `p - 1` interior steps: geometric scan up from
    /// the bracket start, then bisection.
    fn first_feasible(&self, shape: &ScheduleShape, p: usize) -> Result<f64> {
        let (lo, hi) = self.cfg.t_bracket;
        let feasible = |t: f64| -> Result<bool> { Ok(self.march_p(shape, t, p)?.is_some()) };
        if feasible(lo)? {
            return Ok(lo);
        }
        let (mut a, mut b) = (lo, lo);
        loop {
            b *= 1.15;
            if b > hi {
                return Err(Error::InfeasibleDepth(format!(
                    "no T in [{lo}, {hi}] admits {} locally matched steps",
                    p - 1
                )));
            }
            if feasible(b)? {
                break;
            }
            a = b;
        }
        while b - a > self.cfg.t_rel_tol * a {
            let m = 0.5 * (a + b);
            if feasible(m)? {
                b = m;
            } else {
                a = m;
            }
        }
        Ok(b)
    }

    /// Golden section on the neighbours of `pts[k]`; returns the best point seen.
    fn refine<F>(&self, eval: &F, pts: &[Candidate], k: usize) -> Result<Candidate>
    where
        F: Fn(f64) -> Result<Candidate>,
    {
        let mut best = pts[k].clone();
        let (mut a, mut b) = (pts[k.saturating_sub(1)].t, pts.get(k + 1).map_or(pts[k].t, |c| c.t));
        if b <= a {
            return Ok(best);
        }
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let (mut x1, mut x2) = (b - g * (b - a), a + g * (b - a));
        let (mut f1, mut f2) = (eval(x1)?, eval(x2)?);
        while b - a > self.cfg.t_rel_tol * a {
            if f1.total <= f2.total {
                b = x2;
                (x2, f2) = (x1, f1.clone());
                x1 = b - g * (b - a);
                f1 = eval(x1)?;
            } else {
                a = x1;
                (x1, f1) = (x2, f2.clone());
                x2 = a + g * (b - a);
                f2 = eval(x2)?;
            }
            for f in [&f1, &f2] {
                if f.total < best.total {
                    best = f.clone();
                }
            }
        }
        Ok(best)
    }

    /// `sup { T >= t_min : free march uses at most p steps }`, by scan and bisection.
    fn count_edge(&self, shape: &ScheduleShape, t_min: f64, p: usize) -> Result<Option<f64>> {
        let hi = self.cfg.t_bracket.1;
        let fits = |t: f64| -> Result<bool> { Ok(self.march(shape, t, p)?.len() <= p) };
        if !fits(t_min)? {
            return Ok(None);
        }
        let (mut a, mut b) = (t_min, t_min);
        loop {
            b *= 1.15;
            if b > hi {
                return Ok(None);
            }
            if !fits(b)? {
                break;
            }
            a = b;
        }
        while b - a > self.cfg.t_rel_tol * a {
            let m = 0.5 * (a + b);
            if fits(m)? {
                a = m;
            } else {
                b = m;
            }
        }
        Ok(Some(a))
    }

    fn report(&self, shape: &ScheduleShape, total: f64, steps: &[Step], mut warnings: Vec<String>) -> Result<MatchReport> {
        let sched = shape.at(total)?;
        let mut validity = Vec::with_capacity(steps.len());
        let mut t0 = 0.0;
        for (q, st) in steps.iter().enumerate() {
            let (l, s, cd) = self.averages(&sched, t0, st.tau);
            let ldot = (sched.lambda(t0 + st.tau) - sched.lambda(t0)) / st.tau;
            let abar = if ldot != 0.0 { cd / ldot } else { 0.0 };
            validity.push(validity_check(st.gamma, st.beta, l, ldot, s, abar, &self.norms));
            if st.error > self.cfg.error_ceiling {
                warnings.push(format!("step {} error {:.3e} exceeds ceiling", q + 1, st.error));
            }
            t0 += st.tau;
        }
        let taus: Vec<f64> = steps.iter().map(|s| s.tau).collect();
        let angles = AngleSet {
            p: steps.len(),
            gammas: steps.iter().map(|s| s.gamma).collect(),
            betas: steps.iter().map(|s| s.beta).collect(),
            step_errors: steps.iter().map(|s| s.error).collect(),
            equivalent_t: taus.iter().sum(),
            taus,
        };
        Ok(MatchReport {
            direction: Direction::Forward,
            total_error: angles.step_errors.iter().sum(),
            angles,
            schedule: sched.to_spec(),
            validity,
            lambda_residuals: Vec::new(),
            s_residuals: Vec::new(),
            warnings,
            provenance: self.provenance(),
        })
    }

    fn provenance(&self) -> Provenance {
        Provenance {
            instance: self.inst.name(),
            orders: self.orders,
            alpha: self.alpha.name(),
            optimizer: self.cfg.clone(),
            seed: None,
        }
    }

    /// Matched steps for a fixed total time (no search on `T`).
    pub fn march_fixed(&self, shape: &ScheduleShape, total: f64, limit: usize) -> Result<MatchReport> {
        let steps = self.march(shape, total, limit)?;
        self.report(shape, total, &steps, Vec::new())
    }

    /// Reverse map: continuous schedule implied by a smooth angle set.
    pub fn reverse(&self, gammas: &[f64], betas: &[f64]) -> Result<MatchReport> {
        reverse_with(self, gammas, betas)
    }
}

/// Forward matching with a fresh [`Matcher`].
pub fn derive_angles(
    inst: &ProblemInstance,
    shape: &ScheduleShape,
    p: usize,
    orders: Orders,
    alpha: &dyn AlphaSource,
    cfg: &MatchConfig,
) -> Result<MatchReport> {
    Matcher::new(inst, alpha, orders, cfg.clone())?.derive(shape, p)
}

/// Reverse matching with a fresh [`Matcher`].
///
/// The piecewise lowest-order fit (`tau = gamma + beta`, interval averages of
/// `lambda` and `s`) seeds a least-squares solve for the schedule on which the
/// forward march at `orders` returns the given angles. That consistent fit is
/// kept when it reproduces every angle within [`REVERSE_ACCEPT`]; otherwise
/// the lowest-order fit is returned with a warning.
pub fn reverse_protocol(
    inst: &ProblemInstance,
    gammas: &[f64],
    betas: &[f64],
    orders: Orders,
    alpha: &dyn AlphaSource,
    cfg: &MatchConfig,
) -> Result<MatchReport> {
    Matcher::new(inst, alpha, orders, cfg.clone())?.reverse(gammas, betas)
}

fn interval_average(f: &dyn Fn(f64) -> f64, a: f64, b: f64, gl: &GaussLegendre) -> f64 {
    gl.integrate(a, b, f) / (b - a)
}

/// Schedule parameters of the reverse fit: monotone `lambda` knots at fixed
/// unit-time positions, the pinned cubic `s(u) = u (1 - u) (a + b u)`, and `T`.
#[derive(Clone, Debug)]
struct ReverseParams {
    xs: Vec<f64>,
    ys: Vec<f64>,
    s: (f64, f64),
    total: f64,
}

impl ReverseParams {
    fn shape(&self) -> Result<ScheduleShape> {
        let mut knots = vec![(0.0, 0.0)];
        let mut prev = 0.0f64;
        for (&x, &y) in self.xs.iter().zip(&self.ys) {
            prev = y.clamp(prev, 1.0);
            knots.push((x, prev));
        }
        knots.push((1.0, 1.0));
        let (a, b) = self.s;
        Ok(ScheduleShape::new(Arc::new(MonotoneCubic::new(&knots)?), Arc::new(PinnedCubic { a, b })))
    }

    fn flat(&self) -> Vec<f64> {
        let mut v = self.ys.clone();
        v.extend([self.s.0, self.s.1, self.total.ln()]);
        v
    }

    fn with_flat(&self, v: &[f64]) -> Self {
        let n = self.ys.len();
        Self { xs: self.xs.clone(), ys: v[..n].to_vec(), s: (v[n], v[n + 1]), total: v[n + 2].exp() }
    }
}

/// Piecewise lowest-order fit: interval averages `lambda = gamma / (gamma + beta)`
/// and `s = -gamma beta / (2 tau) - <lambda_dot alpha>` over `tau = gamma + beta`.
fn lowest_order_fit(m: &Matcher<'_>, gammas: &[f64], betas: &[f64], clamped: &mut bool) -> Result<ReverseParams> {
    let p = gammas.len();
    let taus: Vec<f64> = gammas.iter().zip(betas).map(|(g, b)| g + b).collect();
    let total: f64 = taus.iter().sum();
    let gl = &m.gl;
    let mut bounds = vec![0.0];
    for t in &taus {
        bounds.push(bounds.last().unwrap() + t / total);
    }
    *bounds.last_mut().unwrap() = 1.0;
    let mut target: Vec<f64> = gammas.iter().zip(&taus).map(|(g, t)| g / t).collect();
    let mut running = 0.0f64;
    for v in target.iter_mut() {
        let c = v.clamp(running, 1.0);
        *clamped |= c != *v;
        *v = c;
        running = c;
    }
    let mids: Vec<f64> = (0..p).map(|q| 0.5 * (bounds[q] + bounds[q + 1])).collect();
    let mut prm = ReverseParams { xs: mids, ys: target.clone(), s: (0.0, 0.0), total };
    let mut fit = prm.shape()?;
    // Adjust knot values so interval averages of the interpolant match.
    for _ in 0..50 {
        let mut worst = 0.0f64;
        for q in 0..p {
            let avg = interval_average(&|u| fit.lambda.value(u), bounds[q], bounds[q + 1], gl);
            let d = target[q] - avg;
            worst = worst.max(d.abs());
            prm.ys[q] += d;
        }
        let mut prev = 0.0f64;
        for v in prm.ys.iter_mut() {
            *v = v.clamp(prev, 1.0);
            prev = *v;
        }
        fit = prm.shape()?;
        if worst < 1e-12 {
            break;
        }
    }
    let s_implied: Vec<f64> = (0..p)
        .map(|q| {
            let cd = m.alpha.integral(fit.lambda.value(bounds[q]), fit.lambda.value(bounds[q + 1]));
            -gammas[q] * betas[q] / (2.0 * taus[q]) - cd / taus[q]
        })
        .collect();
    // Least squares for the two cubic coefficients on interval averages.
    let basis_avg = |k: i32, q: usize| interval_average(&|u| u * (1.0 - u) * u.powi(k), bounds[q], bounds[q + 1], gl);
    let (mut a11, mut a12, mut a22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for q in 0..p {
        let (x0, x1) = (basis_avg(0, q), basis_avg(1, q));
        a11 += x0 * x0;
        a12 += x0 * x1;
        a22 += x1 * x1;
        r1 += x0 * s_implied[q];
        r2 += x1 * s_implied[q];
    }
    let det = a11 * a22 - a12 * a12;
    prm.s = if p >= 2 && det.abs() > 1e-14 * (a11 * a22).max(1e-300) {
        ((r1 * a22 - r2 * a12) / det, (a11 * r2 - a12 * r1) / det)
    } else {
        (r1 / a11, 0.0)
    };
    Ok(prm)
}

/// Forward march of exactly `p` steps on `sched`: free interior minima, then
/// the remainder. A missing interior minimum falls back to `fallback[q]`.
fn march_like_forward(m: &Matcher<'_>, sched: &Schedule, fallback: &[f64]) -> Vec<Step> {
    let p = fallback.len();
    let total = sched.total_time;
    let mut t0 = 0.0;
    let mut out = Vec::with_capacity(p);
    for (q, &tau) in fallback.iter().enumerate() {
        let rem = total - t0;
        let st = if rem <= TAU_FLOOR * total {
            Step { gamma: 0.0, beta: 0.0, tau: 0.0, error: f64::INFINITY }
        } else if q + 1 == p {
            m.angles_at(sched, t0, rem)
        } else {
            m.interior_step(sched, t0, rem).unwrap_or_else(|| m.angles_at(sched, t0, tau.min(rem)))
        };
        t0 += st.tau;
        out.push(st);
    }
    out
}

fn angle_residuals(steps: &[Step], gammas: &[f64], betas: &[f64]) -> DVector<f64> {
    DVector::from_iterator(
        2 * steps.len(),
        steps.iter().zip(gammas.iter().zip(betas)).flat_map(|(s, (g, b))| [s.gamma - g, s.beta - b]),
    )
}

type Evaluation = (Vec<Step>, DVector<f64>);

/// Levenberg-Marquardt on the schedule parameters with a forward-difference
/// Jacobian of the angle residuals.
fn levenberg_marquardt(
    eval: &dyn Fn(&ReverseParams) -> Option<Evaluation>,
    start: ReverseParams,
    iterations: usize,
) -> Option<(ReverseParams, Vec<Step>, DVector<f64>)> {
    let (mut steps, mut r) = eval(&start)?;
    let mut prm = start;
    let mut mu = 1e-3;
    for _ in 0..iterations {
        if r.amax() < 1e-9 {
            break;
        }
        let x = DVector::from_vec(prm.flat());
        let n = x.len();
        let mut jac = DMatrix::zeros(r.len(), n);
        for k in 0..n {
            let h = 1e-6 * (1.0 + x[k].abs());
            let mut xk = x.clone();
            xk[k] += h;
            if let Some((_, rk)) = eval(&prm.with_flat(xk.as_slice())) {
                jac.set_column(k, &((rk - &r) / h));
            }
        }
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let mut accepted = false;
        while mu < 1e8 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += mu * jtj[(k, k)].max(1e-12);
            }
            let Some(dx) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                mu *= 10.0;
                continue;
            };
            let trial = prm.with_flat((&x + dx).as_slice());
            match eval(&trial) {
                Some((st, rt)) if rt.norm() < r.norm() => {
                    (prm, steps, r) = (trial, st, rt);
                    mu = (mu * 0.3).max(1e-12);
                    accepted = true;
                    break;
                }
                _ => mu *= 10.0,
            }
        }
        if !accepted {
            break;
        }
    }
    Some((prm, steps, r))
}

fn reverse_with(m: &Matcher<'_>, gammas: &[f64], betas: &[f64]) -> Result<MatchReport> {
    let angles = AngleSet::from_angles(gammas.to_vec(), betas.to_vec())?;
    let p = angles.p;
    if let Some(q) = angles.taus.iter().position(|&t| !(t > 0.0)) {
        return Err(Error::Validation(format!("degenerate step {}: gamma + beta <= 0", q + 1)));
    }
    let mut warnings = Vec::new();
    let jump = |v: &[f64]| v.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    if jump(gammas).max(jump(betas)) > m.cfg.smooth_threshold {
        warnings.push("angles are not smooth; the fitted schedule may be poor".into());
    }
    let mut clamped = false;
    let lowest = lowest_order_fit(m, gammas, betas, &mut clamped)?;
    if clamped {
        warnings.push("implied lambda is not monotone in [0, 1]; fitting a clamped monotone version".into());
    }
    let fallback = angles.taus.clone();
    let eval = |prm: &ReverseParams| -> Option<(Vec<Step>, DVector<f64>)> {
        let sched = prm.shape().ok()?.at(prm.total).ok()?;
        let steps = march_like_forward(m, &sched, &fallback);
        let r = angle_residuals(&steps, gammas, betas);
        r.iter().all(|v| v.is_finite()).then_some((steps, r))
    };
    // The forward march on the fitted schedule must reproduce the angles.
    // Start from the lowest-order fit, then from a linear ramp if that stalls.
    let mut cur = levenberg_marquardt(&eval, lowest.clone(), m.cfg.reverse_iterations);
    if cur.as_ref().map_or(true, |c| c.2.amax() > 1e-6) {
        let ramp = ReverseParams { ys: lowest.xs.clone(), s: (0.0, 0.0), ..lowest.clone() };
        if let Some(alt) = levenberg_marquardt(&eval, ramp, m.cfg.reverse_iterations) {
            if cur.as_ref().map_or(true, |c| alt.2.norm() < c.2.norm()) {
                cur = Some(alt);
            }
        }
    }
    let (prm, steps) = match cur {
        Some((fitted, steps, r)) if r.amax() <= REVERSE_ACCEPT => (fitted, steps),
        other => {
            if let Some((_, _, r)) = other {
                warnings.push(format!(
                    "no schedule reproduces the angles (closest misses by {:.3e}); returning the lowest-order fit",
                    r.amax()
                ));
            } else {
                warnings.push("forward march failed on the fitted schedule; returning the lowest-order fit".into());
            }
            let steps = angles.taus.iter().map(|&tau| Step { gamma: 0.0, beta: 0.0, tau, error: 0.0 }).collect();
            (lowest.clone(), steps)
        }
    };
    let shape = prm.shape()?;
    let sched = shape.at(prm.total)?;
    let taus: Vec<f64> = steps.iter().map(|s: &Step| s.tau).collect();
    let total: f64 = taus.iter().sum();
    let gl = &m.gl;
    let lowest_shape = lowest.shape()?;
    let (mut lambda_residuals, mut s_residuals) = (Vec::with_capacity(p), Vec::with_capacity(p));
    let mut step_errors = Vec::with_capacity(p);
    let mut validity = Vec::with_capacity(p);
    let mut scratch = [Vec::new(), Vec::new()];
    let mut t0 = 0.0;
    for q in 0..p {
        let tau = taus[q];
        let (u0, u1) = (t0 / total, (t0 + tau) / total);
        // Departure from the piecewise lowest-order fit on the final steps.
        lambda_residuals.push(
            interval_average(&|u| shape.lambda.value(u), u0, u1, gl)
                - interval_average(&|u| lowest_shape.lambda.value(u), u0, u1, gl),
        );
        s_residuals.push(
            interval_average(&|u| shape.s.value(u), u0, u1, gl) - interval_average(&|u| lowest_shape.s.value(u), u0, u1, gl),
        );
        step_errors.push(m.error_at(&sched, gammas[q], betas[q], t0, tau, &mut scratch));
        let (l, s, cd) = m.averages(&sched, t0, tau);
        let ldot = (sched.lambda(t0 + tau) - sched.lambda(t0)) / tau;
        let abar = if ldot != 0.0 { cd / ldot } else { 0.0 };
        validity.push(validity_check(gammas[q], betas[q], l, ldot, s, abar, &m.norms));
        t0 += tau;
    }
    let angles = AngleSet { step_errors, taus, equivalent_t: total, ..angles };
    Ok(MatchReport {
        direction: Direction::Reverse,
        total_error: angles.step_errors.iter().sum(),
        angles,
        schedule: sched.to_spec(),
        validity,
        lambda_residuals,
        s_residuals,
        warnings,
        provenance: m.provenance(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agp::{ClosedAlpha, ClosedForm, NumericAlpha};
    use crate::model::TwoLevelNorm;

    #[test]
    fn closed_form_examples() {
        let (t, g, b) = closed_form_step(0.5, 1.0, 0.0, -0.01).unwrap();
        assert!((t - 0.08).abs() < 1e-15 && (g - 0.04).abs() < 1e-15 && (b - 0.04).abs() < 1e-15);
        let (t, g, b) = closed_form_step(0.25, 1.0, 0.0, -0.01).unwrap();
        assert!((t - 0.02 / 0.1875).abs() < 1e-15);
        assert!((g - t * 0.25).abs() < 1e-15 && (b - 0.08).abs() < 1e-12);
        assert!(matches!(closed_form_step(0.5, 1.0, 0.02, -0.01), Err(Error::NoMatching(_))));
        assert!(matches!(closed_form_step(0.0, 1.0, 0.0, -0.01), Err(Error::EdgeSingularity(_))));
    }

    #[test]
    fn validity_examples() {
        let inst = ProblemInstance::ising_ring(8).unwrap();
        let n = OperatorNorms::of(&inst).unwrap();
        let v = validity_check(0.01, 0.01, 0.5, 0.01, 0.0, -0.2, &n);
        assert!(v.bch_ok && v.magnus_ok);
        assert!(!validity_check(1.5, 1.5, 0.5, 0.01, 0.0, -0.2, &n).bch_ok);
        assert!(!validity_check(0.01, 0.01, 0.01, 0.01, -0.05, -0.2, &n).bch_ok);
    }

    #[test]
    fn lowest_order_matching_reproduces_closed_form() {
        // With BCH order 2 and Magnus order 1 the optimum is the closed-form step.
        let inst = ProblemInstance::ising_ring(8).unwrap();
        let alpha = NumericAlpha::new(&inst).unwrap();
        let m = Matcher::new(&inst, &alpha, Orders::new(2, 1).unwrap(), MatchConfig::default()).unwrap();
        let sched = ScheduleShape::linear().at(20.0).unwrap();
        let st = m.interior_step(&sched, 8.0, 12.0).unwrap();
        let (l, s, cd) = m.averages(&sched, 8.0, st.tau);
        let (tau, g, b) = closed_form_from_drive(l, s + cd).unwrap();
        assert!(st.error < 1e-8, "error {}", st.error);
        assert!((st.tau - tau).abs() < 1e-6 && (st.gamma - g).abs() < 1e-6 && (st.beta - b).abs() < 1e-6);
    }

    #[test]
    fn symmetric_single_step_reverse() {
        let inst = ProblemInstance::two_level(TwoLevelNorm::Ising).unwrap();
        let alpha = ClosedAlpha(ClosedForm::TwoLevel);
        let lowest = MatchConfig { reverse_iterations: 0, ..MatchConfig::default() };
        let r = reverse_protocol(&inst, &[0.3], &[0.3], Orders::default(), &alpha, &lowest).unwrap();
        assert!((r.angles.equivalent_t - 0.6).abs() < 1e-15);
        let reg = crate::schedule::ProfileRegistry::default();
        let sched = r.schedule.build(&reg).unwrap();
        assert!((sched.lambda(0.3) - 0.5).abs() < 1e-9);
        assert!(reverse_protocol(&inst, &[0.3, -0.5], &[0.3, 0.2], Orders::default(), &alpha, &MatchConfig::default()).is_err());
    }

    #[test]
    fn angle_set_flat_roundtrip() {
        let a = AngleSet::from_angles(vec![0.1, 0.2], vec![0.3, 0.4]).unwrap();
        assert_eq!(a.flat(), vec![0.1, 0.3, 0.2, 0.4]);
        assert_eq!(AngleSet::from_flat(&a.flat()).unwrap(), a);
        a.check().unwrap();
    }
}
