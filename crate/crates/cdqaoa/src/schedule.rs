//! Continuous annealing schedules `(T, lambda(t), s(t))`.
//!
//! Shapes live on unit time `u = t / T`. A [`Profile`] is one named shape;
//! [`ProfileRegistry`] maps form names to constructors so configs can pick
//! shapes at runtime.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A scalar function of unit time with its derivative.
pub trait Profile: Send + Sync + Debug {
    fn value(&self, u: f64) -> f64;
    /// `d value / du`.
    fn derivative(&self, u: f64) -> f64;
    fn spec(&self) -> ProfileSpec;
}

/// JSON form of a profile: either `{form, params}` or `{knots}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileSpec {
    Named {
        form: String,
        #[serde(default)]
        params: BTreeMap<String, f64>,
    },
    Knots {
        knots: Vec<(f64, f64)>,
    },
}

impl ProfileSpec {
    pub fn named(form: &str, params: &[(&str, f64)]) -> Self {
        ProfileSpec::Named {
            form: form.to_string(),
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }
}

fn param(params: &BTreeMap<String, f64>, key: &str) -> Result<f64> {
    params
        .get(key)
        .copied()
        .ok_or_else(|| Error::Validation(format!("missing schedule parameter {key:?}")))
}

#[derive(Debug, Clone, Copy)]
pub struct Linear;

impl Profile for Linear {
    fn value(&self, u: f64) -> f64 {
        u
    }
    fn derivative(&self, _u: f64) -> f64 {
        1.0
    }
    fn spec(&self) -> ProfileSpec {
        ProfileSpec::named("linear", &[])
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Smoothstep;

impl Profile for Smoothstep {
    fn value(&self, u: f64) -> f64 {
        u * u * (3.0 - 2.0 * u)
    }
    fn derivative(&self, u: f64) -> f64 {
        6.0 * u * (1.0 - u)
    }
    fn spec(&self) -> ProfileSpec {
        ProfileSpec::named("smoothstep", &[])
    }
}

/// Edge-slowing power law `lambda = 1/2 + sign(2u-1) |2u-1|^r / 2`.
#[derive(Debug, Clone, Copy)]
pub struct PowerLaw {
    pub r: f64,
}

impl Profile for PowerLaw {
    fn value(&self, u: f64) -> f64 {
        let x = 2.0 * u - 1.0;
        0.5 + 0.5 * x.signum() * x.abs().powf(self.r)
    }
    fn derivative(&self, u: f64) -> f64 {
        let x = (2.0 * u - 1.0).abs();
        if x == 0.0 {
            return if self.r < 1.0 { f64::INFINITY } else if self.r == 1.0 { 1.0 } else { 0.0 };
        }
        self.r * x.powf(self.r - 1.0)
    }
    fn spec(&self) -> ProfileSpec {
        ProfileSpec::named("power", &[("r", self.r)])
    }
}

/// `s0 sin(pi u)`.
#[derive(Debug, Clone, Copy)]
pub struct Sine {
    pub s0: f64,
}

impl Profile for Sine {
    fn value(&self, u: f64) -> f64 {
        self.s0 * (PI * u).sin()
    }
    fn derivative(&self, u: f64) -> f64 {
        self.s0 * PI * (PI * u).cos()
    }
    fn spec(&self) -> ProfileSpec {
        ProfileSpec::named("sine", &[("s0", self.s0)])
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Constant {
    pub c: f64,
}

impl Profile for Constant {
    fn value(&self, _u: f64) -> f64 {
        self.c
    }
    fn derivative(&self, _u: f64) -> f64 {
        0.0
    }
    fn spec(&self) -> ProfileSpec {
        if self.c == 0.0 {
            ProfileSpec::named("zero", &[])
        } else {
            ProfileSpec::named("constant", &[("c", self.c)])
        }
    }
}

/// Cubic pinned to zero at both ends: `u (1 - u) (a + b u)`.
#[derive(Debug, Clone, Copy)]
pub struct PinnedCubic {
    pub a: f64,
    pub b: f64,
}

impl Profile for PinnedCubic {
    fn value(&self, u: f64) -> f64 {
        u * (1.0 - u) * (self.a + self.b * u)
    }
    fn derivative(&self, u: f64) -> f64 {
        (1.0 - 2.0 * u) * (self.a + self.b * u) + u * (1.0 - u) * self.b
    }
    fn spec(&self) -> ProfileSpec {
        ProfileSpec::named("pinned_cubic", &[("a", self.a), ("b", self.b)])
    }
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch-Carlson slopes).
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ms: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(knots: &[(f64, f64)]) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::Validation("interpolant needs at least two knots".into()));
        }
        let xs: Vec<f64> = knots.iter().map(|k| k.0).collect();
        let ys: Vec<f64> = knots.iter().map(|k| k.1).collect();
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation("knot abscissae must increase strictly".into()));
        }
        let n = xs.len();
        let d: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])).collect();
        let mut ms = vec![0.0; n];
        ms[0] = d[0];
        ms[n - 1] = d[n - 2];
        for i in 1..n - 1 {
            ms[i] = if d[i - 1] * d[i] <= 0.0 { 0.0 } else { 0.5 * (d[i - 1] + d[i]) };
        }
        for i in 0..n - 1 {
            if d[i] == 0.0 {
                ms[i] = 0.0;
                ms[i + 1] = 0.0;
                continue;
            }
            let (a, b) = (ms[i] / d[i], ms[i + 1] / d[i]);
            let h = a * a + b * b;
            if h > 9.0 {
                let t = 3.0 / h.sqrt();
                ms[i] = t * a * d[i];
                ms[i + 1] = t * b * d[i];
            }
        }
        Ok(Self { xs, ys, ms })
    }

    fn locate(&self, x: f64) -> usize {
        let n = self.xs.len();
        match self.xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(n - 2),
        }
    }

    pub fn knots(&self) -> Vec<(f64, f64)> {
        self.xs.iter().copied().zip(self.ys.iter().copied()).collect()
    }
}

impl Profile for MonotoneCubic {
    fn value(&self, u: f64) -> f64 {
        let i = self.locate(u);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (u - self.xs[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.ys[i]
            + (t3 - 2.0 * t2 + t) * h * self.ms[i]
            + (-2.0 * t3 + 3.0 * t2) * self.ys[i + 1]
            + (t3 - t2) * h * self.ms[i + 1]
    }
    fn derivative(&self, u: f64) -> f64 {
        let i = self.locate(u);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (u - self.xs[i]) / h;
        let t2 = t * t;
        ((6.0 * t2 - 6.0 * t) * self.ys[i]
            + (3.0 * t2 - 4.0 * t + 1.0) * h * self.ms[i]
            + (-6.0 * t2 + 6.0 * t) * self.ys[i + 1]
            + (3.0 * t2 - 2.0 * t) * h * self.ms[i + 1])
            / h
    }
    fn spec(&self) -> ProfileSpec {
        ProfileSpec::Knots { knots: self.knots() }
    }
}

type Constructor = fn(&BTreeMap<String, f64>) -> Result<Arc<dyn Profile>>;

/// Name-to-constructor table for profile forms.
pub struct ProfileRegistry {
    forms: BTreeMap<&'static str, Constructor>,
}

impl Default for ProfileRegistry {
    fn default() -> Self {
        let mut r = Self { forms: BTreeMap::new() };
        r.register("linear", |_| Ok(Arc::new(Linear)));
        r.register("smoothstep", |_| Ok(Arc::new(Smoothstep)));
        r.register("power", |p| {
            let r = param(p, "r")?;
            if r <= 0.0 {
                return Err(Error::Validation("power exponent must be positive".into()));
            }
            Ok(Arc::new(PowerLaw { r }))
        });
        r.register("sine", |p| Ok(Arc::new(Sine { s0: param(p, "s0")? })));
        r.register("zero", |_| Ok(Arc::new(Constant { c: 0.0 })));
        r.register("constant", |p| Ok(Arc::new(Constant { c: param(p, "c")? })));
        r.register("pinned_cubic", |p| {
            Ok(Arc::new(PinnedCubic { a: param(p, "a")?, b: param(p, "b")? }))
        });
        r
    }
}

impl ProfileRegistry {
    pub fn register(&mut self, name: &'static str, ctor: Constructor) {
        self.forms.insert(name, ctor);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.forms.keys().copied().collect()
    }

    pub fn build(&self, spec: &ProfileSpec) -> Result<Arc<dyn Profile>> {
        match spec {
            ProfileSpec::Named { form, params } => {
                let ctor = self
                    .forms
                    .get(form.as_str())
                    .ok_or_else(|| Error::Validation(format!("unknown schedule form {form:?}")))?;
                ctor(params)
            }
            ProfileSpec::Knots { knots } => Ok(Arc::new(MonotoneCubic::new(knots)?)),
        }
    }
}

/// Shapes of `lambda` and `s` on unit time, independent of `T`.
#[derive(Clone, Debug)]
pub struct ScheduleShape {
    pub lambda: Arc<dyn Profile>,
    pub s: Arc<dyn Profile>,
}

impl ScheduleShape {
    pub fn new(lambda: Arc<dyn Profile>, s: Arc<dyn Profile>) -> Self {
        Self { lambda, s }
    }

    pub fn linear() -> Self {
        Self::new(Arc::new(Linear), Arc::new(Constant { c: 0.0 }))
    }

    pub fn linear_sine(s0: f64) -> Self {
        Self::new(Arc::new(Linear), Arc::new(Sine { s0 }))
    }

    pub fn at(&self, total_time: f64) -> Result<Schedule> {
        Schedule::new(total_time, self.clone())
    }

    /// Endpoint conditions `lambda(0)=0`, `lambda(1)=1`, `s(0)=s(1)=0`.
    pub fn check_endpoints(&self) -> Result<()> {
        let ok = self.lambda.value(0.0).abs() < 1e-9
            && (self.lambda.value(1.0) - 1.0).abs() < 1e-9
            && self.s.value(0.0).abs() < 1e-9
            && self.s.value(1.0).abs() < 1e-9;
        if ok {
            Ok(())
        } else {
            Err(Error::Validation("schedule shape violates endpoint conditions".into()))
        }
    }
}

/// A shape stretched to a definite total time.
#[derive(Clone, Debug)]
pub struct Schedule {
    pub total_time: f64,
    pub shape: ScheduleShape,
}

impl Schedule {
    pub fn new(total_time: f64, shape: ScheduleShape) -> Result<Self> {
        if !(total_time > 0.0 && total_time.is_finite()) {
            return Err(Error::Validation(format!("total time {total_time} must be positive")));
        }
        Ok(Self { total_time, shape })
    }

    fn unit(&self, t: f64) -> f64 {
        (t / self.total_time).clamp(0.0, 1.0)
    }

    pub fn lambda(&self, t: f64) -> f64 {
        self.shape.lambda.value(self.unit(t))
    }

    pub fn lambda_dot(&self, t: f64) -> f64 {
        self.shape.lambda.derivative(self.unit(t)) / self.total_time
    }

    pub fn s(&self, t: f64) -> f64 {
        self.shape.s.value(self.unit(t))
    }

    pub fn s_dot(&self, t: f64) -> f64 {
        self.shape.s.derivative(self.unit(t)) / self.total_time
    }

    pub fn to_spec(&self) -> ScheduleSpec {
        ScheduleSpec {
            total_time: self.total_time,
            lambda: self.shape.lambda.spec(),
            s: self.shape.s.spec(),
        }
    }
}

/// JSON schedule file `{T, lambda, s}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    #[serde(rename = "T")]
    pub total_time: f64,
    pub lambda: ProfileSpec,
    #[serde(default = "zero_spec")]
    pub s: ProfileSpec,
}

fn zero_spec() -> ProfileSpec {
    ProfileSpec::named("zero", &[])
}

impl ScheduleSpec {
    pub fn shape(&self, registry: &ProfileRegistry) -> Result<ScheduleShape> {
        Ok(ScheduleShape::new(registry.build(&self.lambda)?, registry.build(&self.s)?))
    }

    pub fn build(&self, registry: &ProfileRegistry) -> Result<Schedule> {
        Schedule::new(self.total_time, self.shape(registry)?)
    }
}
