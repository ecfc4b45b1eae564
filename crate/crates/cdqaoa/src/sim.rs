//! Statevector and free-fermion simulators for QAOA circuits and continuous
//! counterdiabatic evolution.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agp::AlphaSource;
use crate::error::{Error, Result};
use crate::model::{InstanceKind, ProblemInstance};
use crate::pauli::{PauliTerm, C64};
use crate::schedule::Schedule;

pub const STATEVECTOR_CAP: usize = 20;
/// Tolerated drift of the norm before renormalization.
pub const NORM_DRIFT_TOL: f64 = 1e-8;

const I: C64 = C64::new(0.0, 1.0);

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    pub n_qubits: usize,
    pub amps: Vec<C64>,
}

impl StateVector {
    /// `|+>^n`, the maximal eigenstate of a positive transverse field.
    pub fn plus(n_qubits: usize) -> Result<Self> {
        check_cap(n_qubits)?;
        let dim = 1usize << n_qubits;
        let a = C64::new(1.0 / (dim as f64).sqrt(), 0.0);
        Ok(Self { n_qubits, amps: vec![a; dim] })
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    fn renormalize(&mut self) -> Result<()> {
        let n = self.norm();
        if (n - 1.0).abs() > NORM_DRIFT_TOL {
            return Err(Error::Contract(format!("norm drifted to {n}")));
        }
        self.amps.iter_mut().for_each(|a| *a /= n);
        Ok(())
    }

    /// `<psi|D|psi>` for a real diagonal.
    pub fn diagonal_expectation(&self, d: &[f64]) -> f64 {
        self.amps.iter().zip(d).map(|(a, v)| a.norm_sqr() * v).sum()
    }

    /// `|<a|b>|^2`.
    pub fn fidelity(&self, other: &Self) -> f64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum::<C64>().norm_sqr()
    }
}

fn check_cap(n: usize) -> Result<()> {
    if n > STATEVECTOR_CAP {
        return Err(Error::Resource(format!("{n} qubits exceeds the statevector cap {STATEVECTOR_CAP}")));
    }
    Ok(())
}

/// Precomputed pieces of an instance in the computational basis.
#[derive(Clone, Debug)]
pub struct Compiled {
    pub n_qubits: usize,
    target: Vec<f64>,
    objective: Vec<f64>,
    /// Per-qubit transverse field strength of `H_S`.
    field: Vec<f64>,
    /// `[H_T, H_S]` as (flip mask, phase per index, coefficient).
    comm: Vec<(PauliTerm, C64)>,
    obj_max: Option<f64>,
}

fn real_diagonal(sum: &crate::pauli::PauliSum, what: &str) -> Result<Vec<f64>> {
    let d = sum.diagonal().map_err(|_| Error::Validation(format!("{what} must be diagonal")))?;
    Ok(d.iter().map(|c| c.re).collect())
}

impl Compiled {
    pub fn new(inst: &ProblemInstance) -> Result<Self> {
        let n = inst.n_qubits;
        check_cap(n)?;
        let mut field = vec![0.0; n];
        for (t, c) in inst.h_simple.iter() {
            if t.z_mask != 0 || t.x_mask.count_ones() != 1 || c.im != 0.0 {
                return Err(Error::Validation("H_S must be a sum of single-qubit X terms".into()));
            }
            field[t.x_mask.trailing_zeros() as usize] = c.re;
        }
        Ok(Self {
            n_qubits: n,
            target: real_diagonal(&inst.h_target, "H_T")?,
            objective: real_diagonal(&inst.objective, "objective")?,
            field,
            comm: inst.comm.iter().map(|(t, c)| (*t, *c)).collect(),
            obj_max: inst.obj_max,
        })
    }

    pub fn objective(&self, psi: &StateVector) -> f64 {
        psi.diagonal_expectation(&self.objective)
    }

    pub fn ratio(&self, psi: &StateVector) -> Result<f64> {
        let max = self.obj_max.ok_or_else(|| Error::Validation("objective maximum unknown".into()))?;
        Ok(self.objective(psi) / max)
    }

    fn apply_target_phase(&self, psi: &mut StateVector, gamma: f64) {
        for (a, d) in psi.amps.iter_mut().zip(&self.target) {
            *a *= C64::from_polar(1.0, gamma * d);
        }
    }

    fn apply_field_rotation(&self, psi: &mut StateVector, beta: f64) {
        for (q, h) in self.field.iter().enumerate() {
            let (s, c) = (beta * h).sin_cos();
            let bit = 1usize << q;
            for i in 0..psi.amps.len() {
                if i & bit == 0 {
                    let (a, b) = (psi.amps[i], psi.amps[i | bit]);
                    psi.amps[i] = c * a + I * s * b;
                    psi.amps[i | bit] = I * s * a + c * b;
                }
            }
        }
    }

    /// `out = i H psi` with `H = l H_T + (1 - l) H_S + i g [H_T, H_S]`.
    fn rhs(&self, lambda: f64, g: f64, psi: &[C64], out: &mut [C64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut v = psi[i] * (lambda * self.target[i]);
            for (q, h) in self.field.iter().enumerate() {
                v += psi[i ^ (1 << q)] * ((1.0 - lambda) * h);
            }
            *o = v;
        }
        if g != 0.0 {
            for (t, c) in &self.comm {
                let cs = c * I * g;
                for (i, amp) in psi.iter().enumerate() {
                    out[i ^ t.x_mask as usize] += cs * t.apply_phase(i as u64) * amp;
                }
            }
        }
        out.iter_mut().for_each(|o| *o *= I);
    }
}

/// QAOA state: from `|+>^n` apply `e^{i gamma_q H_T}` then `e^{i beta_q H_S}`.
pub fn qaoa_state(inst: &ProblemInstance, gammas: &[f64], betas: &[f64]) -> Result<StateVector> {
    qaoa_state_compiled(&Compiled::new(inst)?, gammas, betas)
}

pub fn qaoa_state_compiled(c: &Compiled, gammas: &[f64], betas: &[f64]) -> Result<StateVector> {
    if gammas.len() != betas.len() {
        return Err(Error::Validation("gammas and betas differ in length".into()));
    }
    let mut psi = StateVector::plus(c.n_qubits)?;
    for (g, b) in gammas.iter().zip(betas) {
        c.apply_target_phase(&mut psi, *g);
        c.apply_field_rotation(&mut psi, *b);
    }
    psi.renormalize()?;
    Ok(psi)
}

/// Which parts of the commutator drive are switched on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Drive {
    pub include_cd: bool,
    pub include_s: bool,
}

impl Drive {
    pub const FULL: Drive = Drive { include_cd: true, include_s: true };
    pub const ADIABATIC: Drive = Drive { include_cd: false, include_s: false };

    fn coefficient(&self, sched: &Schedule, alpha: &dyn AlphaSource, t: f64) -> f64 {
        let mut g = 0.0;
        if self.include_s {
            g += sched.s(t);
        }
        if self.include_cd {
            g += sched.lambda_dot(t) * alpha.alpha(sched.lambda(t));
        }
        g
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolveConfig {
    pub steps: usize,
    /// Also integrate with half the steps and report the difference.
    pub error_estimate: bool,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self { steps: 10_000, error_estimate: true }
    }
}

#[derive(Clone, Debug)]
pub struct Evolved<S> {
    pub state: S,
    /// Richardson-style estimate `|psi_n - psi_{n/2}| / 15`, zero when disabled.
    pub error_estimate: f64,
    /// RK4 steps actually taken (the configured count, doubled while the norm drifts).
    pub steps: usize,
}

fn rk4_generic<S, F>(y0: &S, t0: f64, t1: f64, steps: usize, mut rhs: F) -> S
where
    S: Clone + VecLike,
    F: FnMut(f64, &S, &mut S),
{
    let h = (t1 - t0) / steps as f64;
    let mut y = y0.clone();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (y.clone(), y.clone(), y.clone(), y.clone(), y.clone());
    for n in 0..steps {
        let t = t0 + n as f64 * h;
        rhs(t, &y, &mut k1);
        tmp.axpy_from(&y, 0.5 * h, &k1);
        rhs(t + 0.5 * h, &tmp, &mut k2);
        tmp.axpy_from(&y, 0.5 * h, &k2);
        rhs(t + 0.5 * h, &tmp, &mut k3);
        tmp.axpy_from(&y, h, &k3);
        rhs(t + h, &tmp, &mut k4);
        y.rk4_combine(h, &k1, &k2, &k3, &k4);
    }
    y
}

trait VecLike {
    fn axpy_from(&mut self, y: &Self, h: f64, k: &Self);
    fn rk4_combine(&mut self, h: f64, k1: &Self, k2: &Self, k3: &Self, k4: &Self);
    fn dist(&self, other: &Self) -> f64;
}

impl VecLike for Vec<C64> {
    fn axpy_from(&mut self, y: &Self, h: f64, k: &Self) {
        for ((o, a), b) in self.iter_mut().zip(y).zip(k) {
            *o = a + b * h;
        }
    }

    fn rk4_combine(&mut self, h: f64, k1: &Self, k2: &Self, k3: &Self, k4: &Self) {
        for i in 0..self.len() {
            self[i] += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0);
        }
    }

    fn dist(&self, other: &Self) -> f64 {
        self.iter().zip(other).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
    }
}

impl VecLike for [C64; 2] {
    fn axpy_from(&mut self, y: &Self, h: f64, k: &Self) {
        *self = [y[0] + k[0] * h, y[1] + k[1] * h];
    }

    fn rk4_combine(&mut self, h: f64, k1: &Self, k2: &Self, k3: &Self, k4: &Self) {
        for i in 0..2 {
            self[i] += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0);
        }
    }

    fn dist(&self, other: &Self) -> f64 {
        ((self[0] - other[0]).norm_sqr() + (self[1] - other[1]).norm_sqr()).sqrt()
    }
}

fn check_steps(sched: &Schedule, steps: usize) -> Result<()> {
    if steps < 2 || sched.total_time / steps as f64 <= 1e-12 {
        return Err(Error::Numerical("RK4 step size underflow".into()));
    }
    Ok(())
}

/// Continuous evolution `dpsi/dt = i H(t) psi` from `|+>^n` under
/// `lambda H_T + (1 - lambda) H_S + i (s + lambda_dot alpha) [H_T, H_S]`,
/// fixed-step RK4 (step count doubled until the norm holds) with a halving
/// error estimate.
pub fn cd_evolve(
    inst: &ProblemInstance,
    sched: &Schedule,
    alpha: &dyn AlphaSource,
    drive: Drive,
    cfg: &EvolveConfig,
) -> Result<Evolved<StateVector>> {
    cd_evolve_compiled(&Compiled::new(inst)?, sched, alpha, drive, cfg)
}

pub fn cd_evolve_compiled(
    c: &Compiled,
    sched: &Schedule,
    alpha: &dyn AlphaSource,
    drive: Drive,
    cfg: &EvolveConfig,
) -> Result<Evolved<StateVector>> {
    check_steps(sched, cfg.steps)?;
    let psi0 = StateVector::plus(c.n_qubits)?;
    let run = |steps: usize| {
        rk4_generic(&psi0.amps, 0.0, sched.total_time, steps, |t, y, out| {
            c.rhs(sched.lambda(t), drive.coefficient(sched, alpha, t), y, out)
        })
    };
    let (full, steps) = refine_until_normalized(cfg.steps, run, |v| v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt());
    let error_estimate = if cfg.error_estimate { full.dist(&run(steps / 2)) / 15.0 } else { 0.0 };
    let mut state = StateVector { n_qubits: c.n_qubits, amps: full };
    state.renormalize()?;
    Ok(Evolved { state, error_estimate, steps })
}

/// Doublings of the step count tried before the drift is reported.
pub const MAX_REFINEMENTS: usize = 6;

/// Runs with `steps`, doubling while the norm drifts by more than `NORM_DRIFT_TOL`.
fn refine_until_normalized<S, R, N>(mut steps: usize, run: R, norm: N) -> (S, usize)
where
    R: Fn(usize) -> S,
    N: Fn(&S) -> f64,
{
    let mut y = run(steps);
    for _ in 0..MAX_REFINEMENTS {
        if (norm(&y) - 1.0).abs() <= NORM_DRIFT_TOL {
            break;
        }
        steps *= 2;
        y = run(steps);
    }
    (y, steps)
}

/// Approximation ratio `<objective> / obj_max`.
pub fn approximation_ratio(inst: &ProblemInstance, psi: &StateVector) -> Result<f64> {
    if psi.n_qubits != inst.n_qubits {
        return Err(Error::Dimension(psi.n_qubits, inst.n_qubits));
    }
    Compiled::new(inst)?.ratio(psi)
}

/// Momentum-space state of the transverse Ising ring after Jordan-Wigner.
///
/// Mode `k = (2m - 1) pi / N`, `m = 1..N/2`, with amplitudes on
/// `(|0_k 0_-k>, |1_k 1_-k>)`. Every mode starts in `(1, 0)`, which is `|+>^N`.
#[derive(Clone, Debug, PartialEq)]
pub struct FermionModes {
    pub n: usize,
    pub ks: Vec<f64>,
    pub amps: Vec<[C64; 2]>,
}

/// Coefficients of a ring Hamiltonian `a sum ZZ + h sum X + g sum (YZ + ZY)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RingCoeffs {
    pub zz: f64,
    pub x: f64,
    pub yz: f64,
}

impl RingCoeffs {
    /// `lambda H_T + (1 - lambda) H_S + i g [H_T, H_S]` for the ring of disagrees.
    pub fn annealing(lambda: f64, g: f64) -> Self {
        Self { zz: -0.5 * lambda, x: 1.0 - lambda, yz: g }
    }
}

/// 2x2 block of a ring Hamiltonian at momentum `k` (identity offsets dropped).
pub fn mode_block(c: RingCoeffs, k: f64) -> [[C64; 2]; 2] {
    let (s, co) = k.sin_cos();
    let off = C64::new(4.0 * c.yz * s, -2.0 * c.zz * s);
    [
        [C64::new(2.0 * c.x, 0.0), off],
        [off.conj(), C64::new(4.0 * c.zz * co - 2.0 * c.x, 0.0)],
    ]
}

fn mat_vec(m: &[[C64; 2]; 2], v: &[C64; 2]) -> [C64; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

/// `e^{i theta M} v` for a Hermitian 2x2 `M`.
fn expi_2x2(m: &[[C64; 2]; 2], theta: f64, v: &[C64; 2]) -> [C64; 2] {
    let h0 = 0.5 * (m[0][0].re + m[1][1].re);
    let hz = 0.5 * (m[0][0].re - m[1][1].re);
    let (hx, hy) = (m[1][0].re, m[1][0].im);
    let r = (hx * hx + hy * hy + hz * hz).sqrt();
    let phase = C64::from_polar(1.0, theta * h0);
    let (s, c) = (theta * r).sin_cos();
    if r == 0.0 {
        return [v[0] * phase, v[1] * phase];
    }
    // (h . sigma) v / r
    let nv = [
        (v[0] * hz + v[1] * C64::new(hx, -hy)) / r,
        (v[0] * C64::new(hx, hy) - v[1] * hz) / r,
    ];
    [phase * (v[0] * c + I * s * nv[0]), phase * (v[1] * c + I * s * nv[1])]
}

impl FermionModes {
    pub fn initial(n: usize) -> Result<Self> {
        if n < 4 || n % 2 == 1 {
            return Err(Error::Validation(format!("ring size must be even and >= 4, got {n}")));
        }
        let ks = (1..=n / 2).map(|m| (2 * m - 1) as f64 * PI / n as f64).collect();
        Ok(Self { n, ks, amps: vec![[C64::new(1.0, 0.0), C64::default()]; n / 2] })
    }

    /// `<sum_i Z_i Z_{i+1}>`.
    pub fn zz_sum(&self) -> f64 {
        let unit = RingCoeffs { zz: 1.0, x: 0.0, yz: 0.0 };
        self.ks
            .iter()
            .zip(&self.amps)
            .map(|(k, v)| {
                let hv = mat_vec(&mode_block(unit, *k), v);
                (v[0].conj() * hv[0] + v[1].conj() * hv[1]).re
            })
            .sum()
    }

    /// Number of cut edges `N/2 - <sum ZZ>/2`.
    pub fn objective(&self) -> f64 {
        0.5 * self.n as f64 - 0.5 * self.zz_sum()
    }

    /// Ratio against the maximum cut `N` of the even ring.
    pub fn ratio(&self) -> f64 {
        self.objective() / self.n as f64
    }

    pub fn max_norm_drift(&self) -> f64 {
        self.amps.iter().map(|v| ((v[0].norm_sqr() + v[1].norm_sqr()).sqrt() - 1.0).abs()).fold(0.0, f64::max)
    }

    fn renormalize(&mut self) -> Result<()> {
        let d = self.max_norm_drift();
        if d > NORM_DRIFT_TOL {
            return Err(Error::Contract(format!("mode norm drifted by {d}")));
        }
        for v in &mut self.amps {
            let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
            v[0] /= n;
            v[1] /= n;
        }
        Ok(())
    }
}

/// QAOA on the ring of disagrees via exact 2x2 exponentials per mode.
pub fn fermion_qaoa(n: usize, gammas: &[f64], betas: &[f64]) -> Result<FermionModes> {
    if gammas.len() != betas.len() {
        return Err(Error::Validation("gammas and betas differ in length".into()));
    }
    let mut modes = FermionModes::initial(n)?;
    let target = RingCoeffs::annealing(1.0, 0.0);
    let simple = RingCoeffs::annealing(0.0, 0.0);
    let ks = modes.ks.clone();
    modes.amps.par_iter_mut().zip(ks.par_iter()).for_each(|(v, k)| {
        let (mt, ms) = (mode_block(target, *k), mode_block(simple, *k));
        for (g, b) in gammas.iter().zip(betas) {
            *v = expi_2x2(&mt, *g, v);
            *v = expi_2x2(&ms, *b, v);
        }
    });
    modes.renormalize()?;
    Ok(modes)
}

/// Continuous ring evolution, RK4 per mode in parallel.
pub fn fermion_evolve(
    n: usize,
    sched: &Schedule,
    alpha: &dyn AlphaSource,
    drive: Drive,
    cfg: &EvolveConfig,
) -> Result<Evolved<FermionModes>> {
    check_steps(sched, cfg.steps)?;
    let mut modes = FermionModes::initial(n)?;
    let run = |k: f64, y0: &[C64; 2], steps: usize| {
        rk4_generic(y0, 0.0, sched.total_time, steps, |t, y, out| {
            let m = mode_block(RingCoeffs::annealing(sched.lambda(t), drive.coefficient(sched, alpha, t)), k);
            let hv = mat_vec(&m, y);
            *out = [I * hv[0], I * hv[1]];
        })
    };
    let results: Vec<([C64; 2], f64, usize)> = modes
        .ks
        .par_iter()
        .zip(modes.amps.par_iter())
        .map(|(k, y0)| {
            let (full, steps) =
                refine_until_normalized(cfg.steps, |st| run(*k, y0, st), |v| (v[0].norm_sqr() + v[1].norm_sqr()).sqrt());
            let err = if cfg.error_estimate { full.dist(&run(*k, y0, steps / 2)) / 15.0 } else { 0.0 };
            (full, err, steps)
        })
        .collect();
    let (mut err, mut steps) = (0.0f64, 0usize);
    for (v, (r, e, st)) in modes.amps.iter_mut().zip(results) {
        *v = r;
        err = err.max(e);
        steps = steps.max(st);
    }
    modes.renormalize()?;
    Ok(Evolved { state: modes, error_estimate: err, steps })
}

/// Points `(x, y, z)` of the effective spin of the two-qubit pair:
/// `x = <(X0 + X1)/2>`, `y = <(Y0 Z1 + Z0 Y1)/2>`, `z = <Z0 Z1>`, sampled
/// `samples` times within each unitary.
pub fn bloch_trajectory(inst: &ProblemInstance, gammas: &[f64], betas: &[f64], samples: usize) -> Result<Vec<[f64; 3]>> {
    if !matches!(inst.kind, InstanceKind::TwoLevel(_)) {
        return Err(Error::Validation("Bloch trajectory needs the two-level instance".into()));
    }
    if gammas.len() != betas.len() || samples == 0 {
        return Err(Error::Validation("need equal-length angles and at least one sample".into()));
    }
    let c = Compiled::new(inst)?;
    let ops: Vec<crate::pauli::PauliSum> = [("XI", "IX", 0.5), ("YZ", "ZY", 0.5), ("ZZ", "II", 1.0)]
        .iter()
        .map(|(a, b, w)| {
            let mut s = crate::pauli::PauliSum::from_label(a, *w)?;
            if *b != "II" {
                s.add_scaled(&crate::pauli::PauliSum::from_label(b, *w)?, C64::new(1.0, 0.0))?;
            }
            Ok(s)
        })
        .collect::<Result<_>>()?;
    let point = |psi: &StateVector| -> [f64; 3] {
        let mut out = [0.0; 3];
        for (o, op) in out.iter_mut().zip(&ops) {
            let mut hpsi = vec![C64::default(); psi.amps.len()];
            op.apply_add(&psi.amps, &mut hpsi, C64::new(1.0, 0.0));
            *o = psi.amps.iter().zip(&hpsi).map(|(a, b)| a.conj() * b).sum::<C64>().re;
        }
        out
    };
    let mut psi = StateVector::plus(2)?;
    let mut pts = vec![point(&psi)];
    for (g, b) in gammas.iter().zip(betas) {
        for j in 0..samples {
            let mut p = psi.clone();
            c.apply_target_phase(&mut p, g * (j + 1) as f64 / samples as f64);
            pts.push(point(&p));
        }
        c.apply_target_phase(&mut psi, *g);
        for j in 0..samples {
            let mut p = psi.clone();
            c.apply_field_rotation(&mut p, b * (j + 1) as f64 / samples as f64);
            pts.push(point(&p));
        }
        c.apply_field_rotation(&mut psi, *b);
    }
    Ok(pts)
}

/// What a simulator is asked to evaluate.
#[derive(Clone, Debug)]
pub enum SimInput<'a> {
    Angles { gammas: &'a [f64], betas: &'a [f64] },
    Schedule { sched: &'a Schedule, alpha: &'a dyn AlphaSource, drive: Drive, cfg: EvolveConfig },
}

#[derive(Clone, Debug, Serialize)]
pub struct SimOutcome {
    pub ratio: f64,
    pub objective: f64,
    pub error_estimate: f64,
}

/// A backend that turns an instance plus angles or a schedule into a ratio.
pub trait Simulator: Send + Sync {
    fn name(&self) -> &'static str;
    fn run(&self, inst: &ProblemInstance, input: &SimInput<'_>) -> Result<SimOutcome>;
}

#[derive(Debug, Default)]
pub struct StatevectorSim;

impl Simulator for StatevectorSim {
    fn name(&self) -> &'static str {
        "statevector"
    }

    fn run(&self, inst: &ProblemInstance, input: &SimInput<'_>) -> Result<SimOutcome> {
        let c = Compiled::new(inst)?;
        let (psi, err) = match input {
            SimInput::Angles { gammas, betas } => (qaoa_state_compiled(&c, gammas, betas)?, 0.0),
            SimInput::Schedule { sched, alpha, drive, cfg } => {
                let e = cd_evolve_compiled(&c, sched, *alpha, *drive, cfg)?;
                (e.state, e.error_estimate)
            }
        };
        Ok(SimOutcome { ratio: c.ratio(&psi)?, objective: c.objective(&psi), error_estimate: err })
    }
}

/// Free fermions; ring instances only, any even size through [`FermionSim::with_size`].
#[derive(Debug, Default)]
pub struct FermionSim {
    /// Overrides the ring size of the instance (for sizes beyond the Pauli algebra).
    pub size: Option<usize>,
}

impl FermionSim {
    pub fn with_size(n: usize) -> Self {
        Self { size: Some(n) }
    }
}

impl Simulator for FermionSim {
    fn name(&self) -> &'static str {
        "fermion"
    }

    fn run(&self, inst: &ProblemInstance, input: &SimInput<'_>) -> Result<SimOutcome> {
        let InstanceKind::IsingRing(n0) = inst.kind else {
            return Err(Error::Validation("fermion simulator needs a ring instance".into()));
        };
        let n = self.size.unwrap_or(n0);
        let (modes, err) = match input {
            SimInput::Angles { gammas, betas } => (fermion_qaoa(n, gammas, betas)?, 0.0),
            SimInput::Schedule { sched, alpha, drive, cfg } => {
                let e = fermion_evolve(n, sched, *alpha, *drive, cfg)?;
                (e.state, e.error_estimate)
            }
        };
        Ok(SimOutcome { ratio: modes.ratio(), objective: modes.objective(), error_estimate: err })
    }
}

pub struct SimulatorRegistry {
    sims: BTreeMap<&'static str, Arc<dyn Simulator>>,
}

impl Default for SimulatorRegistry {
    fn default() -> Self {
        let mut r = Self { sims: BTreeMap::new() };
        r.register(Arc::new(StatevectorSim));
        r.register(Arc::new(FermionSim::default()));
        r
    }
}

impl SimulatorRegistry {
    pub fn register(&mut self, sim: Arc<dyn Simulator>) {
        self.sims.insert(sim.name(), sim);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.sims.keys().copied().collect()
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Simulator>> {
        self.sims
            .get(name)
            .cloned()
            .ok_or_else(|| Error::Validation(format!("unknown simulator '{name}'; known: {:?}", self.names())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agp::{ClosedAlpha, ClosedForm, NoAlpha, NumericAlpha};
    use crate::dense::{expi_hermitian, sum_matrix};
    use crate::model::TwoLevelNorm;
    use crate::schedule::ScheduleShape;
    use nalgebra::DVector;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn plus_state_on_ring() {
        let inst = ProblemInstance::ising_ring(6).unwrap();
        let psi = qaoa_state(&inst, &[], &[]).unwrap();
        let c = Compiled::new(&inst).unwrap();
        assert!((c.objective(&psi) - 3.0).abs() < 1e-12);
        assert!((approximation_ratio(&inst, &psi).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bloch_quarter_turn_is_exact() {
        let inst = ProblemInstance::two_level(TwoLevelNorm::Bloch).unwrap();
        let psi = qaoa_state(&inst, &[FRAC_PI_4], &[FRAC_PI_4]).unwrap();
        assert!((approximation_ratio(&inst, &psi).unwrap() - 1.0).abs() < 1e-12);
        let traj = bloch_trajectory(&inst, &[FRAC_PI_4], &[FRAC_PI_4], 8).unwrap();
        assert_eq!(traj[0], [1.0, 0.0, 0.0].map(|v: f64| v));
        let end = traj.last().unwrap();
        assert!(end[0].abs() < 1e-12 && end[1].abs() < 1e-12 && (end[2].abs() - 1.0).abs() < 1e-12);
        let still = bloch_trajectory(&inst, &[0.0, 0.0], &[0.0, 0.0], 4).unwrap();
        assert!(still.iter().all(|p| p == &still[0]));
    }

    #[test]
    fn qaoa_matches_dense_exponentials() {
        let inst = ProblemInstance::maxcut(&[(0, 1), (1, 2), (2, 3), (0, 3), (0, 2)]).unwrap();
        let (gs, bs) = ([0.37, -0.81, 1.3], [0.52, 0.11, -0.66]);
        let psi = qaoa_state(&inst, &gs, &bs).unwrap();
        let (ht, hs) = (sum_matrix(&inst.h_target).unwrap(), sum_matrix(&inst.h_simple).unwrap());
        let mut v = DVector::from_element(16, C64::new(0.25, 0.0));
        for (g, b) in gs.iter().zip(&bs) {
            v = expi_hermitian(&ht, *g) * v;
            v = expi_hermitian(&hs, *b) * v;
        }
        let ov: C64 = psi.amps.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
        assert!((ov.norm_sqr() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn fermion_qaoa_matches_statevector() {
        let inst = ProblemInstance::ising_ring(8).unwrap();
        let (gs, bs) = ([0.3, 0.7, -0.2], [0.9, 0.4, 0.25]);
        let sv = Compiled::new(&inst).unwrap().objective(&qaoa_state(&inst, &gs, &bs).unwrap());
        let ff = fermion_qaoa(8, &gs, &bs).unwrap().objective();
        assert!((sv - ff).abs() < 1e-10, "{sv} vs {ff}");
    }

    #[test]
    fn fermion_evolution_matches_statevector() {
        let inst = ProblemInstance::ising_ring(8).unwrap();
        let alpha = NumericAlpha::new(&inst).unwrap();
        let sched = ScheduleShape::linear_sine(-0.1).at(2.0).unwrap();
        let cfg = EvolveConfig { steps: 2000, error_estimate: false };
        let sv = cd_evolve(&inst, &sched, &alpha, Drive::FULL, &cfg).unwrap().state;
        let ff = fermion_evolve(8, &sched, &alpha, Drive::FULL, &cfg).unwrap().state;
        let a = Compiled::new(&inst).unwrap().objective(&sv);
        assert!((a - ff.objective()).abs() < 1e-8, "{a} vs {}", ff.objective());
    }

    #[test]
    fn two_level_cd_is_exact() {
        let inst = ProblemInstance::two_level(TwoLevelNorm::Ising).unwrap();
        let alpha = ClosedAlpha(ClosedForm::TwoLevel);
        let sched = ScheduleShape::linear().at(0.5).unwrap();
        let e = cd_evolve(&inst, &sched, &alpha, Drive::FULL, &EvolveConfig::default()).unwrap();
        assert!((approximation_ratio(&inst, &e.state).unwrap() - 1.0).abs() < 1e-9);
        assert!(e.error_estimate < 1e-9);
        let ad = cd_evolve(&inst, &sched, &NoAlpha, Drive::ADIABATIC, &EvolveConfig::default()).unwrap();
        assert!(approximation_ratio(&inst, &ad.state).unwrap() < 0.99);
    }

    #[test]
    fn registry_lookup() {
        let reg = SimulatorRegistry::default();
        assert_eq!(reg.names(), vec!["fermion", "statevector"]);
        assert!(reg.get("tensor").is_err());
        let inst = ProblemInstance::two_level(TwoLevelNorm::Ising).unwrap();
        let input = SimInput::Angles { gammas: &[0.1], betas: &[0.2] };
        assert!(reg.get("fermion").unwrap().run(&inst, &input).is_err());
    }
}
