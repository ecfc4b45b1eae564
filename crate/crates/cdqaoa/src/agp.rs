//! First-order variational adiabatic gauge potential coefficient `alpha(lambda)`.

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{InstanceKind, ProblemInstance};
use crate::pauli::{commutator, norm_sq, trace_product, PauliSum, C64};
use crate::quad::GaussLegendre;

const DEGENERATE_TOL: f64 = 1e-14;

/// `alpha(lambda) = norm_sq([H, dH]) / norm_sq([[H, dH], H])` evaluated from
/// Pauli sums at a single point.
pub fn alpha_numeric(inst: &ProblemInstance, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let h = {
        let mut h = inst.h_target.scale_re(lambda);
        h.add_scaled(&inst.h_simple, C64::new(1.0 - lambda, 0.0))?;
        h
    };
    let dh = &inst.h_target - &inst.h_simple;
    let g = commutator(&h, &dh)?;
    let num = norm_sq(&g)?;
    let den = norm_sq(&commutator(&g, &h)?)?;
    if den.abs() < DEGENERATE_TOL {
        return Err(Error::DegenerateCommutator);
    }
    Ok(num / den)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Validation(format!("lambda = {lambda} outside [0, 1]")));
    }
    Ok(())
}

/// Closed forms available for cross-validation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "form")]
pub enum ClosedForm {
    /// `-1 / (16 (1-l)^2 + l^2)`.
    TwoLevel,
    /// Closed ring formula `-((1-l)^2 + l^2) / (8((1-l)^2 + l^2)^2 + 8 l^2 (1-l)^2)`.
    Chain,
    /// Closed triangle-free `nu`-regular formula.
    Regular { nu: u32 },
    /// Trace ratio worked out for triangle-free `nu`-regular graphs with
    /// `H_T = -ZZ/2` per edge: `-1 / (16 (1-l)^2 + (3 nu - 2) l^2)`.
    RegularTrace { nu: u32 },
}

pub fn alpha_closed(form: ClosedForm, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let l = lambda;
    let m = 1.0 - l;
    Ok(match form {
        ClosedForm::TwoLevel => -1.0 / (16.0 * m * m + l * l),
        ClosedForm::Chain => {
            let q = m * m + l * l;
            -q / (8.0 * q * q + 8.0 * l * l * m * m)
        }
        ClosedForm::Regular { nu } => {
            let v = nu as f64;
            let num = -32.0 * m * m - 8.0 * (3.0 * v - 2.0) * l * l;
            let q = m * m + 4.0 * (3.0 * v - 2.0) * l * l;
            let den = 256.0 * q * q
                + 256.0 * l * l * m * m * (v - 1.0)
                + 96.0 * (v - 1.0) * (v - 2.0) * l.powi(4);
            num / den
        }
        ClosedForm::RegularTrace { nu } => -1.0 / (16.0 * m * m + (3.0 * nu as f64 - 2.0) * l * l),
    })
}

/// Warns (as an error value) when a regular-graph form is applied to a graph with triangles.
pub fn check_closed_applicable(form: ClosedForm, inst: &ProblemInstance) -> Result<()> {
    if matches!(form, ClosedForm::Regular { .. } | ClosedForm::RegularTrace { .. }) && inst.has_triangle() {
        return Err(Error::Contract("regular-graph alpha assumes no triangles".into()));
    }
    Ok(())
}

/// A source of `alpha(lambda)` used by the Magnus generator and the simulators.
pub trait AlphaSource: Send + Sync + Debug {
    fn alpha(&self, lambda: f64) -> f64;
    fn name(&self) -> String;
    /// `int_{l0}^{l1} alpha(l) dl`, 16-point Gauss-Legendre by default.
    fn integral(&self, l0: f64, l1: f64) -> f64 {
        thread_local! {
            static GL16: GaussLegendre = GaussLegendre::new(16);
        }
        GL16.with(|g| g.integrate(l0, l1, |l| self.alpha(l.clamp(0.0, 1.0))))
    }
}

/// Trace-ratio alpha precompiled as a rational function of `lambda`.
///
/// `[H, dH] = -[H_T, H_S]` does not depend on `lambda`, and
/// `[[H, dH], H] = -(lambda [C, H_T] + (1 - lambda) [C, H_S])` with
/// `C = [H_T, H_S]`, so the denominator is a quadratic form in
/// `(lambda, 1 - lambda)`.
#[derive(Clone, Debug)]
pub struct NumericAlpha {
    num: f64,
    a: f64,
    b: f64,
    c: f64,
}

impl NumericAlpha {
    pub fn new(inst: &ProblemInstance) -> Result<Self> {
        let num = norm_sq(&inst.comm)?;
        let ct = commutator(&inst.comm, &inst.h_target)?;
        let cs = commutator(&inst.comm, &inst.h_simple)?;
        let a = trace_product(&ct, &ct)?.re;
        let b = trace_product(&ct, &cs)?.re;
        let c = trace_product(&cs, &cs)?.re;
        if num.abs() < DEGENERATE_TOL {
            return Err(Error::DegenerateCommutator);
        }
        Ok(Self { num, a, b, c })
    }

    pub fn coefficients(&self) -> (f64, f64, f64, f64) {
        (self.num, self.a, self.b, self.c)
    }
}

impl AlphaSource for NumericAlpha {
    fn alpha(&self, l: f64) -> f64 {
        let m = 1.0 - l;
        self.num / (l * l * self.a + 2.0 * l * m * self.b + m * m * self.c)
    }
    fn name(&self) -> String {
        "numeric".into()
    }
}

#[derive(Clone, Debug)]
pub struct ClosedAlpha(pub ClosedForm);

impl AlphaSource for ClosedAlpha {
    fn alpha(&self, l: f64) -> f64 {
        alpha_closed(self.0, l.clamp(0.0, 1.0)).unwrap_or(f64::NAN)
    }
    fn name(&self) -> String {
        match self.0 {
            ClosedForm::TwoLevel => "closed_two_level".into(),
            ClosedForm::Chain => "closed_chain".into(),
            ClosedForm::Regular { nu } => format!("closed_regular_{nu}"),
            ClosedForm::RegularTrace { nu } => format!("closed_regular_trace_{nu}"),
        }
    }
}

/// Identically zero; turns the counterdiabatic term off.
#[derive(Clone, Debug)]
pub struct NoAlpha;

impl AlphaSource for NoAlpha {
    fn alpha(&self, _l: f64) -> f64 {
        0.0
    }
    fn name(&self) -> String {
        "none".into()
    }
    fn integral(&self, _l0: f64, _l1: f64) -> f64 {
        0.0
    }
}

/// The closed form that corresponds to an instance family, if any.
pub fn default_closed_form(inst: &ProblemInstance) -> Option<ClosedForm> {
    match &inst.kind {
        InstanceKind::TwoLevel(crate::model::TwoLevelNorm::Ising) => Some(ClosedForm::TwoLevel),
        InstanceKind::TwoLevel(_) => None,
        InstanceKind::IsingRing(_) => Some(ClosedForm::Chain),
        InstanceKind::MaxCutGraph(_) => {
            inst.regular_degree().map(|nu| ClosedForm::Regular { nu: nu as u32 })
        }
    }
}

type AlphaCtor = fn(&ProblemInstance, &BTreeMap<String, f64>) -> Result<Arc<dyn AlphaSource>>;

/// Name-to-constructor table for alpha sources.
pub struct AlphaRegistry {
    methods: BTreeMap<&'static str, AlphaCtor>,
}

fn nu_param(inst: &ProblemInstance, p: &BTreeMap<String, f64>) -> Result<u32> {
    match p.get("nu") {
        Some(v) => Ok(*v as u32),
        None => inst
            .regular_degree()
            .map(|d| d as u32)
            .ok_or_else(|| Error::Validation("graph is not regular; pass nu".into())),
    }
}

impl Default for AlphaRegistry {
    fn default() -> Self {
        let mut r = Self { methods: BTreeMap::new() };
        r.register("numeric", |inst, _| Ok(Arc::new(NumericAlpha::new(inst)?)));
        r.register("none", |_, _| Ok(Arc::new(NoAlpha)));
        r.register("closed_two_level", |_, _| Ok(Arc::new(ClosedAlpha(ClosedForm::TwoLevel))));
        r.register("closed_chain", |_, _| Ok(Arc::new(ClosedAlpha(ClosedForm::Chain))));
        r.register("closed_regular", |inst, p| {
            Ok(Arc::new(ClosedAlpha(ClosedForm::Regular { nu: nu_param(inst, p)? })))
        });
        r.register("closed_regular_trace", |inst, p| {
            Ok(Arc::new(ClosedAlpha(ClosedForm::RegularTrace { nu: nu_param(inst, p)? })))
        });
        r
    }
}

impl AlphaRegistry {
    pub fn register(&mut self, name: &'static str, ctor: AlphaCtor) {
        self.methods.insert(name, ctor);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.methods.keys().copied().collect()
    }

    pub fn build(
        &self,
        name: &str,
        inst: &ProblemInstance,
        params: &BTreeMap<String, f64>,
    ) -> Result<Arc<dyn AlphaSource>> {
        let ctor = self
            .methods
            .get(name)
            .ok_or_else(|| Error::Validation(format!("unknown alpha method {name:?}")))?;
        ctor(inst, params)
    }
}

/// Sampled `alpha` on a strictly increasing grid.
#[derive(Clone, Debug, Serialize)]
pub struct AlphaProfile {
    pub instance: String,
    pub method: String,
    pub grid: Vec<(f64, f64)>,
}

impl AlphaProfile {
    pub fn sample(inst: &ProblemInstance, source: &dyn AlphaSource, lambdas: &[f64]) -> Result<Self> {
        if lambdas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation("lambda grid must increase strictly".into()));
        }
        for &l in lambdas {
            check_lambda(l)?;
        }
        let grid: Vec<(f64, f64)> = lambdas.iter().map(|&l| (l, source.alpha(l))).collect();
        if let Some(&(l, a)) = grid.iter().find(|(_, a)| *a > 0.0) {
            return Err(Error::Contract(format!("alpha({l}) = {a} is positive")));
        }
        Ok(Self { instance: inst.name(), method: source.name(), grid })
    }
}

/// Uniform grid `0, 1/n, ..., 1`.
pub fn unit_grid(n: usize) -> Vec<f64> {
    (0..=n).map(|k| k as f64 / n as f64).collect()
}

/// Convenience: the `i alpha [H_T, H_S]` gauge potential as a Pauli sum.
pub fn gauge_potential(inst: &ProblemInstance, alpha: f64) -> PauliSum {
    inst.comm.scale(C64::new(0.0, alpha))
}
