//! Effective generators of one QAOA step (BCH) and of a stretch of
//! counterdiabatic evolution (Magnus), and the matching error between them.
//!
//! Conventions: a QAOA step is `U = exp(i beta H_S) exp(i gamma H_T)` and
//! continuous evolution solves `d psi/dt = i H(t) psi`, so both generators are
//! Hermitian operators `G` with `U = exp(iG)`.
//!
//! Every BCH term is a right-nested commutator word. A word `L1 L2 ... Lk`
//! over the letters `S` (for `H_S`) and `T` (for `H_T`) stands for the
//! Hermitian operator `W = i[L1, i[L2, ... Lk]]`, and its contribution to `Z`
//! is `c * gamma^{#T} * beta^{#S} * W` with `c` the classical BCH coefficient.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::agp::AlphaSource;
use crate::error::{Error, Result};
use crate::model::ProblemInstance;
use crate::pauli::{commutator, PauliSum, C64};
use crate::quad::GaussLegendre;
use crate::schedule::Schedule;

pub const MAX_BCH_ORDER: usize = 5;
pub const MAX_MAGNUS_ORDER: usize = 3;

/// BCH coefficients of `log(e^X e^Y)` through fifth order, with `X -> S`, `Y -> T`.
pub const BCH_WORDS: [(f64, &str); 12] = [
    (1.0, "S"),
    (1.0, "T"),
    (0.5, "ST"),
    (1.0 / 12.0, "SST"),
    (1.0 / 12.0, "TTS"),
    (-1.0 / 24.0, "TSST"),
    (-1.0 / 720.0, "TTTTS"),
    (-1.0 / 720.0, "SSSST"),
    (1.0 / 360.0, "STTTS"),
    (1.0 / 360.0, "TSSST"),
    (1.0 / 120.0, "TSTST"),
    (1.0 / 120.0, "STSTS"),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Orders {
    pub bch: usize,
    pub magnus: usize,
}

impl Default for Orders {
    fn default() -> Self {
        Self { bch: 4, magnus: 3 }
    }
}

impl Orders {
    pub fn new(bch: usize, magnus: usize) -> Result<Self> {
        let o = Self { bch, magnus };
        o.validate()?;
        Ok(o)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_BCH_ORDER).contains(&self.bch) {
            return Err(Error::Validation(format!("BCH order {} outside 1..=5", self.bch)));
        }
        if !(1..=MAX_MAGNUS_ORDER).contains(&self.magnus) {
            return Err(Error::Validation(format!("Magnus order {} outside 1..=3", self.magnus)));
        }
        Ok(())
    }
}

/// Per-order generator terms and their sum.
#[derive(Clone, Debug, Serialize)]
pub struct GeneratorSeries {
    pub terms_by_order: Vec<PauliSum>,
    pub total: PauliSum,
    pub order: usize,
}

impl GeneratorSeries {
    fn from_orders(terms_by_order: Vec<PauliSum>) -> Result<Self> {
        let n = terms_by_order[0].n_qubits();
        let mut total = PauliSum::zero(n);
        for t in &terms_by_order {
            total.add_scaled(t, C64::new(1.0, 0.0))?;
        }
        Ok(Self { order: terms_by_order.len(), terms_by_order, total })
    }
}

fn letter_op<'a>(inst: &'a ProblemInstance, c: char) -> &'a PauliSum {
    if c == 'S' {
        &inst.h_simple
    } else {
        &inst.h_target
    }
}

/// Hermitian operator of a commutator word.
pub fn word_operator(inst: &ProblemInstance, word: &str) -> Result<PauliSum> {
    let letters: Vec<char> = word.chars().collect();
    let mut acc = letter_op(inst, *letters.last().unwrap()).clone();
    for &c in letters.iter().rev().skip(1) {
        acc = commutator(letter_op(inst, c), &acc)?.scale(C64::new(0.0, 1.0));
    }
    Ok(acc)
}

fn word_coefficient(coef: f64, word: &str, gamma: f64, beta: f64) -> f64 {
    let nt = word.chars().filter(|&c| c == 'T').count() as i32;
    let ns = word.len() as i32 - nt;
    coef * gamma.powi(nt) * beta.powi(ns)
}

fn check_finite(vals: &[f64]) -> Result<()> {
    if vals.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Validation("non-finite expansion parameter".into()))
    }
}

/// BCH generator `Z` of `exp(i beta H_S) exp(i gamma H_T)` through `order`.
pub fn bch_generator(inst: &ProblemInstance, gamma: f64, beta: f64, order: usize) -> Result<GeneratorSeries> {
    bch_generator_with(inst, gamma, beta, order, &BCH_WORDS)
}

/// `bch_generator` over an explicit word table (the oracle injects faults here).
pub fn bch_generator_with(
    inst: &ProblemInstance,
    gamma: f64,
    beta: f64,
    order: usize,
    words: &[(f64, &str)],
) -> Result<GeneratorSeries> {
    if !(1..=MAX_BCH_ORDER).contains(&order) {
        return Err(Error::Validation(format!("BCH order {order} outside 1..=5")));
    }
    check_finite(&[gamma, beta])?;
    let mut by_order = vec![PauliSum::zero(inst.n_qubits); order];
    for (coef, word) in words.iter().filter(|(_, w)| w.len() <= order) {
        let c = word_coefficient(*coef, word, gamma, beta);
        if c != 0.0 {
            by_order[word.len() - 1].add_scaled(&word_operator(inst, word)?, C64::new(c, 0.0))?;
        }
    }
    GeneratorSeries::from_orders(by_order)
}

/// Scalar time integrals of the coefficient functions
/// `f = (lambda, 1 - lambda, s + lambda_dot alpha)` over one interval.
#[derive(Clone, Debug, Default)]
pub struct MagnusIntegrals {
    /// `int f_j`.
    pub first: [f64; 3],
    /// `int_{t2 < t1} f_j(t1) f_k(t2)`.
    pub second: [[f64; 3]; 3],
    /// `int_{t3 < t2 < t1} f_j(t1) f_k(t2) f_l(t3)`.
    pub third: [[[f64; 3]; 3]; 3],
}

struct Rules {
    gl8: GaussLegendre,
    gl16: GaussLegendre,
}

fn rules() -> &'static Rules {
    static R: OnceLock<Rules> = OnceLock::new();
    R.get_or_init(|| Rules { gl8: GaussLegendre::new(8), gl16: GaussLegendre::new(16) })
}

#[inline]
fn coeff_fns(sched: &Schedule, alpha: &dyn AlphaSource, t: f64) -> [f64; 3] {
    let l = sched.lambda(t);
    [l, 1.0 - l, sched.s(t) + sched.lambda_dot(t) * alpha.alpha(l.clamp(0.0, 1.0))]
}

pub fn check_interval(sched: &Schedule, t0: f64, tau: f64) -> Result<()> {
    if !(tau > 0.0) {
        return Err(Error::Validation(format!("step duration {tau} must be positive")));
    }
    let t = sched.total_time;
    if t0 < -1e-12 * t || t0 + tau > t * (1.0 + 1e-9) {
        return Err(Error::Validation(format!(
            "interval [{t0}, {}] outside schedule [0, {t}]",
            t0 + tau
        )));
    }
    Ok(())
}

/// Quadrature of the Magnus integrals. The counterdiabatic part of the first
/// order term is integrated in `lambda` as `int alpha dl`; nested integrals use
/// 8 Gauss-Legendre nodes per dimension over the collapsed simplex
/// `t1 = t0 + tau a`, `t2 = t0 + tau a b`, `t3 = t0 + tau a b c`.
pub fn magnus_integrals(
    sched: &Schedule,
    alpha: &dyn AlphaSource,
    t0: f64,
    tau: f64,
    order: usize,
) -> Result<MagnusIntegrals> {
    check_interval(sched, t0, tau)?;
    let r = rules();
    let t1 = t0 + tau;
    let mut out = MagnusIntegrals::default();
    let lam_int = r.gl16.integrate(t0, t1, |t| sched.lambda(t));
    let s_int = r.gl16.integrate(t0, t1, |t| sched.s(t));
    let (l0, l1) = (sched.lambda(t0), sched.lambda(t1));
    out.first = [lam_int, tau - lam_int, s_int + alpha.integral(l0, l1)];
    if order < 2 {
        return Ok(out);
    }
    let g = &r.gl8;
    let n = g.nodes.len();
    for i in 0..n {
        let a = g.nodes[i];
        let f1 = coeff_fns(sched, alpha, t0 + tau * a);
        for m in 0..n {
            let b = g.nodes[m];
            let tb = t0 + tau * a * b;
            let f2 = coeff_fns(sched, alpha, tb);
            let w2 = g.weights[i] * g.weights[m] * tau * tau * a;
            for j in 0..3 {
                for k in 0..3 {
                    out.second[j][k] += w2 * f1[j] * f2[k];
                }
            }
            if order < 3 {
                continue;
            }
            // Inner integral int_{t0}^{t2} f_l.
            let mut inner = [0.0; 3];
            for q in 0..n {
                let f3 = coeff_fns(sched, alpha, t0 + tau * a * b * g.nodes[q]);
                for l in 0..3 {
                    inner[l] += g.weights[q] * f3[l];
                }
            }
            let w3 = w2 * tau * a * b;
            for j in 0..3 {
                for k in 0..3 {
                    let fjk = w3 * f1[j] * f2[k];
                    for l in 0..3 {
                        out.third[j][k][l] += fjk * inner[l];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Structure constants of the Magnus series in terms of the fixed operators
/// `O = (H_T, H_S, C)` with `C = i[H_T, H_S]`:
/// `Omega_2 = sum_{j<k} m2[j][k] P_jk` with `P_jk = i[O_j, O_k]`, and
/// `Omega_3 = sum_{j, k<l} m3[j][k][l] Q_jkl` with `Q_jkl = i[O_j, P_kl]`.
pub fn magnus_structure(ints: &MagnusIntegrals) -> ([[f64; 3]; 3], [[[f64; 3]; 3]; 3]) {
    let mut m2 = [[0.0; 3]; 3];
    for j in 0..3 {
        for k in j + 1..3 {
            m2[j][k] = 0.5 * (ints.second[j][k] - ints.second[k][j]);
        }
    }
    // Omega_3 = (1/6) sum_{jkl} K_jkl (Q_jkl + Q_lkj), Q antisymmetric in its last pair.
    let mut m3 = [[[0.0; 3]; 3]; 3];
    let mut add = |j: usize, k: usize, l: usize, v: f64| {
        if k < l {
            m3[j][k][l] += v;
        } else if l < k {
            m3[j][l][k] -= v;
        }
    };
    for j in 0..3 {
        for k in 0..3 {
            for l in 0..3 {
                let v = ints.third[j][k][l] / 6.0;
                add(j, k, l, v);
                add(l, k, j, v);
            }
        }
    }
    (m2, m3)
}

fn magnus_ops(inst: &ProblemInstance) -> Result<([PauliSum; 3], [[Option<PauliSum>; 3]; 3])> {
    let o = [inst.h_target.clone(), inst.h_simple.clone(), inst.cd_operator()];
    let mut p: [[Option<PauliSum>; 3]; 3] = Default::default();
    for j in 0..3 {
        for k in j + 1..3 {
            p[j][k] = Some(if (j, k) == (0, 1) {
                o[2].clone()
            } else {
                commutator(&o[j], &o[k])?.scale(C64::new(0.0, 1.0))
            });
        }
    }
    Ok((o, p))
}

/// Magnus generator of the counterdiabatic evolution over `[t0, t0 + tau]`.
pub fn magnus_generator(
    inst: &ProblemInstance,
    sched: &Schedule,
    alpha: &dyn AlphaSource,
    t0: f64,
    tau: f64,
    order: usize,
) -> Result<GeneratorSeries> {
    if !(1..=MAX_MAGNUS_ORDER).contains(&order) {
        return Err(Error::Validation(format!("Magnus order {order} outside 1..=3")));
    }
    check_finite(&[t0, tau])?;
    let ints = magnus_integrals(sched, alpha, t0, tau, order)?;
    let (o, p) = magnus_ops(inst)?;
    let n = inst.n_qubits;
    let mut by_order = vec![PauliSum::zero(n); order];
    for j in 0..3 {
        by_order[0].add_scaled(&o[j], C64::new(ints.first[j], 0.0))?;
    }
    let (m2, m3) = magnus_structure(&ints);
    if order >= 2 {
        for j in 0..3 {
            for k in j + 1..3 {
                by_order[1].add_scaled(p[j][k].as_ref().unwrap(), C64::new(m2[j][k], 0.0))?;
            }
        }
    }
    if order >= 3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in k + 1..3 {
                    if m3[j][k][l] != 0.0 {
                        let q = commutator(&o[j], p[k][l].as_ref().unwrap())?.scale(C64::new(0.0, 1.0));
                        by_order[2].add_scaled(&q, C64::new(m3[j][k][l], 0.0))?;
                    }
                }
            }
        }
    }
    GeneratorSeries::from_orders(by_order)
}

/// `e = sqrt(|tr((Z - Omega)^2)| / 2^n) / tau`, from explicit Pauli sums
/// (trace over the symmetry sector when the instance has one, identity
/// component dropped).
#[allow(clippy::too_many_arguments)]
pub fn step_error(
    inst: &ProblemInstance,
    gamma: f64,
    beta: f64,
    sched: &Schedule,
    alpha: &dyn AlphaSource,
    t0: f64,
    tau: f64,
    orders: Orders,
) -> Result<f64> {
    orders.validate()?;
    if !(tau > 0.0) {
        return Err(Error::Validation(format!("step duration {tau} must be positive")));
    }
    let z = bch_generator(inst, gamma, beta, orders.bch)?;
    let om = magnus_generator(inst, sched, alpha, t0, tau, orders.magnus)?;
    let d = &z.total - &om.total;
    Ok(inst.phase_free_product(&d, &d)?.abs().sqrt() / tau)
}

/// Key of an operator in the compiled basis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BasisKey {
    Word(&'static str),
    Cd,
    P(usize, usize),
    Q(usize, usize, usize),
}

/// Every operator that can appear in `Z` or `Omega` up to the given orders,
/// with its Gram matrix `G_ab = tr(B_a B_b) / 2^n` (sector trace if any, identity parts removed). Generators become
/// coefficient vectors and the error a quadratic form, so matching never
/// touches Pauli sums after construction.
#[derive(Clone, Debug)]
pub struct ExpansionBasis {
    pub orders: Orders,
    ops: Vec<PauliSum>,
    keys: Vec<BasisKey>,
    gram: Vec<f64>,
    /// `(basis index, sign, BCH word index)` for each word up to the BCH order.
    words: Vec<(usize, f64, usize)>,
    o_idx: [(usize, f64); 3],
    p_idx: [[(usize, f64); 3]; 3],
    q_idx: [[[(usize, f64); 3]; 3]; 3],
}

impl ExpansionBasis {
    pub fn new(inst: &ProblemInstance, orders: Orders) -> Result<Self> {
        orders.validate()?;
        let mut ops: Vec<PauliSum> = Vec::new();
        let mut keys = Vec::new();
        let mut intern = |op: PauliSum, key: BasisKey| -> (usize, f64) {
            for (i, e) in ops.iter().enumerate() {
                if *e == op {
                    return (i, 1.0);
                }
                if e.len() == op.len() && (e + &op).is_empty() {
                    return (i, -1.0);
                }
            }
            ops.push(op);
            keys.push(key);
            (ops.len() - 1, 1.0)
        };
        let mut words = Vec::new();
        for (wi, (_, w)) in BCH_WORDS.iter().enumerate() {
            if w.len() <= orders.bch {
                let (i, s) = intern(word_operator(inst, w)?, BasisKey::Word(w));
                words.push((i, s, wi));
            }
        }
        let (o, p) = magnus_ops(inst)?;
        let o_idx = [
            intern(o[0].clone(), BasisKey::Word("T")),
            intern(o[1].clone(), BasisKey::Word("S")),
            intern(o[2].clone(), BasisKey::Cd),
        ];
        let mut p_idx = [[(0, 0.0); 3]; 3];
        let mut q_idx = [[[(0, 0.0); 3]; 3]; 3];
        if orders.magnus >= 2 {
            for j in 0..3 {
                for k in j + 1..3 {
                    p_idx[j][k] = intern(p[j][k].clone().unwrap(), BasisKey::P(j, k));
                }
            }
        }
        if orders.magnus >= 3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in k + 1..3 {
                        let q = commutator(&o[j], p[k][l].as_ref().unwrap())?.scale(C64::new(0.0, 1.0));
                        q_idx[j][k][l] = intern(q, BasisKey::Q(j, k, l));
                    }
                }
            }
        }
        let nb = ops.len();
        let mut gram = vec![0.0; nb * nb];
        for a in 0..nb {
            for b in a..nb {
                let g = inst.phase_free_product(&ops[a], &ops[b])?;
                gram[a * nb + b] = g;
                gram[b * nb + a] = g;
            }
        }
        Ok(Self { orders, ops, keys, gram, words, o_idx, p_idx, q_idx })
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn keys(&self) -> &[BasisKey] {
        &self.keys
    }

    /// Coefficients of the BCH generator.
    pub fn bch_coeffs(&self, gamma: f64, beta: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for &(i, sign, wi) in &self.words {
            let (c, w) = BCH_WORDS[wi];
            out[i] += sign * word_coefficient(c, w, gamma, beta);
        }
    }

    /// Coefficients of the Magnus generator from precomputed integrals.
    pub fn magnus_coeffs(&self, ints: &MagnusIntegrals, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..3 {
            let (i, s) = self.o_idx[j];
            out[i] += s * ints.first[j];
        }
        let (m2, m3) = magnus_structure(ints);
        if self.orders.magnus >= 2 {
            for j in 0..3 {
                for k in j + 1..3 {
                    let (i, s) = self.p_idx[j][k];
                    out[i] += s * m2[j][k];
                }
            }
        }
        if self.orders.magnus >= 3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in k + 1..3 {
                        let (i, s) = self.q_idx[j][k][l];
                        out[i] += s * m3[j][k][l];
                    }
                }
            }
        }
    }

    /// `sqrt(|v^T G v|)`.
    pub fn norm_of(&self, v: &[f64]) -> f64 {
        let nb = self.ops.len();
        let mut acc = 0.0;
        for a in 0..nb {
            if v[a] == 0.0 {
                continue;
            }
            let row = &self.gram[a * nb..(a + 1) * nb];
            acc += v[a] * row.iter().zip(v).map(|(g, x)| g * x).sum::<f64>();
        }
        acc.abs().sqrt()
    }

    /// Matching error for given BCH parameters against precomputed Magnus coefficients.
    pub fn error(&self, gamma: f64, beta: f64, omega: &[f64], tau: f64, scratch: &mut Vec<f64>) -> f64 {
        scratch.resize(self.ops.len(), 0.0);
        self.bch_coeffs(gamma, beta, scratch);
        for (z, o) in scratch.iter_mut().zip(omega) {
            *z -= o;
        }
        self.norm_of(scratch) / tau
    }

    /// Rebuild an explicit operator from coefficients.
    pub fn assemble(&self, coeffs: &[f64]) -> Result<PauliSum> {
        let mut s = PauliSum::zero(self.ops[0].n_qubits());
        for (op, c) in self.ops.iter().zip(coeffs) {
            if *c != 0.0 {
                s.add_scaled(op, C64::new(*c, 0.0))?;
            }
        }
        Ok(s)
    }

    /// Norms of `C = i[H_T,H_S]`, `H_T`, `H_S` (used by the validity criteria).
    pub fn operator_norms(&self) -> (f64, f64, f64) {
        let nb = self.ops.len();
        let g = |i: usize| self.gram[i * nb + i].sqrt();
        (g(self.o_idx[2].0), g(self.o_idx[0].0), g(self.o_idx[1].0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agp::{NoAlpha, NumericAlpha};
    use crate::model::TwoLevelNorm;
    use crate::schedule::{Constant, ScheduleShape};
    use std::sync::Arc;

    #[test]
    fn zero_gamma_leaves_only_driver() {
        let inst = ProblemInstance::ising_ring(6).unwrap();
        let z = bch_generator(&inst, 0.0, 0.37, 5).unwrap();
        assert_eq!(z.total, inst.h_simple.scale_re(0.37));
        for t in &z.terms_by_order[1..] {
            assert!(t.is_empty());
        }
    }

    #[test]
    fn second_order_coefficient() {
        let inst = ProblemInstance::two_level(TwoLevelNorm::Ising).unwrap();
        let z = bch_generator(&inst, 0.1, 0.1, 2).unwrap();
        // Z_2 = c [H_T, H_S] with c = -0.005 i.
        let expect = inst.comm.scale(C64::new(0.0, -0.005));
        assert!((&z.terms_by_order[1] - &expect).max_abs_coeff() < 1e-16);
    }

    #[test]
    fn two_level_third_order_pattern() {
        let inst = ProblemInstance::two_level(TwoLevelNorm::Bloch).unwrap();
        let (g, b) = (std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_4);
        let z = bch_generator(&inst, g, b, 3).unwrap().total;
        let x = z.coeff_of("XI").unwrap().re;
        // YY equals -ZZ on the XX = +1 sector that contains |++>.
        let zz = z.coeff_of("ZZ").unwrap().re - z.coeff_of("YY").unwrap().re;
        let yz = z.coeff_of("YZ").unwrap().re;
        assert!((x - 0.5 * (b - g * g * b / 3.0)).abs() < 1e-14);
        assert!((zz - (g - g * b * b / 3.0)).abs() < 1e-14);
        assert!((yz - 0.5 * g * b).abs() < 1e-14);
        assert!(z.is_hermitian());
    }

    #[test]
    fn constant_schedule_has_no_higher_terms() {
        let inst = ProblemInstance::ising_ring(6).unwrap();
        let shape = ScheduleShape::new(Arc::new(Constant { c: 0.3 }), Arc::new(Constant { c: 0.0 }));
        let sched = shape.at(2.0).unwrap();
        let om = magnus_generator(&inst, &sched, &NoAlpha, 0.5, 0.7, 3).unwrap();
        let expect = &inst.h_target.scale_re(0.3 * 0.7) + &inst.h_simple.scale_re(0.7 * 0.7);
        assert!((&om.total - &expect).max_abs_coeff() < 1e-13);
    }

    #[test]
    fn linear_second_order_leading_term() {
        // Linear lambda, s = 0, no CD term: Omega_2 = i (lambda_dot tau^3 / 12) [H_T, H_S].
        let inst = ProblemInstance::two_level(TwoLevelNorm::Ising).unwrap();
        let sched = ScheduleShape::linear().at(3.0).unwrap();
        let tau = 0.4;
        let om = magnus_generator(&inst, &sched, &NoAlpha, 1.0, tau, 2).unwrap();
        let expect = inst.comm.scale(C64::new(0.0, tau.powi(3) / (12.0 * 3.0)));
        let diff = &om.terms_by_order[1] - &expect;
        assert!(diff.max_abs_coeff() < 1e-14, "{}", om.terms_by_order[1]);
    }

    #[test]
    fn compiled_basis_matches_pauli_path() {
        let inst = ProblemInstance::ising_ring(8).unwrap();
        let alpha = NumericAlpha::new(&inst).unwrap();
        let sched = ScheduleShape::linear_sine(-0.05).at(5.0).unwrap();
        for orders in [Orders::new(2, 1).unwrap(), Orders::new(4, 3).unwrap(), Orders::new(5, 3).unwrap()] {
            let basis = ExpansionBasis::new(&inst, orders).unwrap();
            let (g, b, t0, tau) = (0.21, 0.33, 1.1, 0.6);
            let direct = step_error(&inst, g, b, &sched, &alpha, t0, tau, orders).unwrap();
            let ints = magnus_integrals(&sched, &alpha, t0, tau, orders.magnus).unwrap();
            let mut om = vec![0.0; basis.len()];
            basis.magnus_coeffs(&ints, &mut om);
            let fast = basis.error(g, b, &om, tau, &mut Vec::new());
            assert!((direct - fast).abs() < 1e-10 * direct.max(1.0), "{orders:?}: {direct} vs {fast}");
            let omega = magnus_generator(&inst, &sched, &alpha, t0, tau, orders.magnus).unwrap();
            assert!((&basis.assemble(&om).unwrap() - &omega.total).max_abs_coeff() < 1e-12);
        }
    }

    #[test]
    fn bad_orders_rejected() {
        let inst = ProblemInstance::two_level(TwoLevelNorm::Ising).unwrap();
        assert!(bch_generator(&inst, 0.1, 0.1, 6).is_err());
        assert!(bch_generator(&inst, 0.1, 0.1, 0).is_err());
        let sched = ScheduleShape::linear().at(1.0).unwrap();
        assert!(magnus_generator(&inst, &sched, &NoAlpha, 0.0, 0.5, 4).is_err());
        assert!(magnus_generator(&inst, &sched, &NoAlpha, 0.8, 0.5, 2).is_err());
        assert!(step_error(&inst, 0.1, 0.1, &sched, &NoAlpha, 0.0, 0.0, Orders::default()).is_err());
    }
}
