//! Dense-matrix oracle suites: BCH and Magnus truncation exponents, trace
//! identities and cross-simulator agreement, each producing named checks.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agp::{AlphaSource, NumericAlpha};
use crate::dense::{expi_hermitian, log_unitary, loglog_slope, normalized_distance, sum_matrix, time_ordered, CMat};
use crate::error::{Error, Result};
use crate::expand::{bch_generator_with, magnus_generator, word_operator, BCH_WORDS};
use crate::model::{cd_hamiltonian, ProblemInstance, TwoLevelNorm};
use crate::pauli::{commutator, trace_product, PauliSum, PauliTerm, C64, DENSE_CAP};
use crate::schedule::ScheduleShape;
use crate::sim::{cd_evolve, fermion_evolve, fermion_qaoa, qaoa_state, Drive, EvolveConfig};

/// Allowed deviation of a fitted truncation exponent.
pub const EXPONENT_TOL: f64 = 0.3;
/// Agreement required between statevector and free-fermion objectives.
pub const CROSS_SIM_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Largest instance handed to the dense oracles.
    pub max_qubits: usize,
    /// Largest ring in the cross-simulator suite.
    pub max_ring: usize,
    pub seed: u64,
    /// Flip the sign of this BCH word before checking (fault injection).
    #[serde(default)]
    pub flip_bch_word: Option<String>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { max_qubits: 4, max_ring: 14, seed: 7, flip_bch_word: None }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleCheck {
    pub suite: String,
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct OracleReport {
    pub checks: Vec<OracleCheck>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &OracleCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn check(suite: &str, name: String, measured: f64, expected: f64, tolerance: f64, detail: String) -> OracleCheck {
    OracleCheck {
        suite: suite.into(),
        name,
        passed: (measured - expected).abs() <= tolerance,
        measured,
        expected,
        tolerance,
        detail,
    }
}

/// Small instances for the dense suites, at most `max_qubits` qubits.
pub fn dense_instances(max_qubits: usize) -> Result<Vec<ProblemInstance>> {
    if max_qubits > DENSE_CAP {
        return Err(Error::Resource(format!("{max_qubits} qubits exceeds the dense oracle cap {DENSE_CAP}")));
    }
    let mut out = vec![ProblemInstance::two_level(TwoLevelNorm::Bloch)?];
    if max_qubits >= 4 {
        out.push(ProblemInstance::ising_ring(4)?);
        // Triangle plus pendant vertex.
        out.push(ProblemInstance::maxcut(&[(0, 1), (1, 2), (0, 2), (2, 3)])?);
    }
    if max_qubits >= 6 {
        out.push(ProblemInstance::ising_ring(6)?);
    }
    Ok(out)
}

/// Word table with the named word's sign flipped.
fn word_table(flip: Option<&str>) -> Result<Vec<(f64, &'static str)>> {
    if let Some(w) = flip {
        if !BCH_WORDS.iter().any(|(_, x)| *x == w) {
            return Err(Error::Validation(format!("unknown BCH word {w}")));
        }
    }
    Ok(BCH_WORDS.iter().map(|&(c, w)| if Some(w) == flip { (-c, w) } else { (c, w) }).collect())
}

const BCH_EPS: [f64; 4] = [0.16, 0.08, 0.04, 0.02];
const BETA_RATIO: f64 = 0.7;

/// Distance between the dense logarithm of one QAOA layer and the truncated
/// BCH generator, for each scale in `BCH_EPS`.
pub fn bch_residuals(inst: &ProblemInstance, order: usize, words: &[(f64, &str)]) -> Result<Vec<f64>> {
    let (hs, ht) = (sum_matrix(&inst.h_simple)?, sum_matrix(&inst.h_target)?);
    BCH_EPS
        .iter()
        .map(|&eps| {
            let (g, b) = (eps, BETA_RATIO * eps);
            let u = expi_hermitian(&hs, b) * expi_hermitian(&ht, g);
            let z = bch_generator_with(inst, g, b, order, words)?;
            Ok(normalized_distance(&log_unitary(&u)?, &sum_matrix(&z.total)?))
        })
        .collect()
}

/// Words of length `order` whose coefficients disagree with the dense
/// logarithm, found by least squares on the residual of the truncation one
/// order below.
fn blame_words(inst: &ProblemInstance, order: usize, words: &[(f64, &str)]) -> Result<Vec<String>> {
    let eps = BCH_EPS[BCH_EPS.len() - 1];
    let (g, b) = (eps, BETA_RATIO * eps);
    let (hs, ht) = (sum_matrix(&inst.h_simple)?, sum_matrix(&inst.h_target)?);
    let u = expi_hermitian(&hs, b) * expi_hermitian(&ht, g);
    let z = bch_generator_with(inst, g, b, order, words)?;
    let resid = log_unitary(&u)? - sum_matrix(&z.total)?;
    let cands: Vec<(f64, &str)> = words.iter().filter(|(_, w)| w.len() == order).copied().collect();
    let mats: Vec<CMat> = cands
        .iter()
        .map(|(_, w)| {
            let nt = w.chars().filter(|&c| c == 'T').count() as i32;
            Ok(sum_matrix(&word_operator(inst, w)?)? * C64::new(g.powi(nt) * b.powi(w.len() as i32 - nt), 0.0))
        })
        .collect::<Result<_>>()?;
    let k = mats.len();
    let dot = |a: &CMat, b: &CMat| (a.adjoint() * b).trace().re;
    let gram = DMatrix::from_fn(k, k, |i, j| dot(&mats[i], &mats[j]));
    let rhs = DVector::from_fn(k, |i, _| dot(&mats[i], &resid));
    let x = gram.svd(true, true).solve(&rhs, 1e-12).map_err(|e| Error::Numerical(e.into()))?;
    Ok(cands
        .iter()
        .zip(x.iter())
        .filter(|((c, _), dx)| dx.abs() > 0.25 * c.abs())
        .map(|((c, w), dx)| format!("{w} (coefficient {c:+.6}, dense log wants {:+.6})", c + dx))
        .collect())
}

/// First order above `order` whose exact BCH terms do not vanish on the
/// instance; the normalized truncation residual scales as `eps^m` with it.
/// Six when none up to five.
fn next_nonvanishing_order(inst: &ProblemInstance, order: usize) -> Result<usize> {
    let full = bch_generator_with(inst, 1.0, BETA_RATIO, 5, &BCH_WORDS)?;
    Ok((order + 1..=5)
        .find(|&m| crate::pauli::norm_sq(&full.terms_by_order[m - 1]).map_or(true, |v| v > 1e-20))
        .unwrap_or(6))
}

/// Truncation exponent of the BCH generator: residual ~ eps^m with `m`
/// the first omitted order that does not vanish.
pub fn bch_suite(cfg: &OracleConfig) -> Result<Vec<OracleCheck>> {
    let words = word_table(cfg.flip_bch_word.as_deref())?;
    let mut out = Vec::new();
    for inst in dense_instances(cfg.max_qubits)? {
        let mut first_bad = None;
        for order in 1..=5 {
            let r = bch_residuals(&inst, order, &words)?;
            let slope = loglog_slope(&BCH_EPS, &r);
            let expected = next_nonvanishing_order(&inst, order)? as f64;
            let mut c = check(
                "bch",
                format!("{} order {order}", inst.name()),
                slope,
                expected,
                EXPONENT_TOL,
                format!("residuals {}", sci(&r)),
            );
            if !c.passed && first_bad.is_none() {
                first_bad = Some(order);
                let slope_order = slope.round().max(1.0) as usize;
                let blamed = blame_words(&inst, slope_order.min(order), &words)?;
                if !blamed.is_empty() {
                    c.detail = format!("wrong term: {}; {}", blamed.join(", "), c.detail);
                }
            }
            out.push(c);
        }
    }
    Ok(out)
}

const MAGNUS_TAUS: [f64; 4] = [0.2, 0.1, 0.05, 0.025];

/// Predicted exponent of the propagator error after truncating the Magnus
/// series at `order`: 3 for the first term alone, 5 once the second is
/// included (for a smooth generator the series about the interval midpoint
/// is odd in `tau`, so the third and fourth terms both enter at `tau^5`).
pub fn magnus_predicted_power(order: usize) -> f64 {
    match order {
        1 => 3.0,
        _ => 5.0,
    }
}

/// Normalized distance between the truncated Magnus propagator and a fine
/// time-ordered RK4 propagator, for each step in `MAGNUS_TAUS`. The
/// infidelity `1 - |tr(U^dag V)| / d` is the square of this at leading order.
pub fn magnus_errors(inst: &ProblemInstance, order: usize) -> Result<Vec<f64>> {
    let shape = ScheduleShape::linear_sine(-0.3);
    let sched = shape.at(1.0)?;
    let alpha = NumericAlpha::new(inst)?;
    let hamiltonian = |t: f64| -> Result<CMat> {
        let l = sched.lambda(t);
        sum_matrix(&cd_hamiltonian(inst, l, sched.lambda_dot(t), sched.s(t), alpha.alpha(l))?)
    };
    hamiltonian(0.0)?;
    MAGNUS_TAUS
        .iter()
        .map(|&tau| {
            let t0 = 0.3;
            let exact = time_ordered(|t| hamiltonian(t).expect("checked above"), t0, t0 + tau, 200);
            let om = magnus_generator(inst, &sched, &alpha, t0, tau, order)?;
            let approx = expi_hermitian(&sum_matrix(&om.total)?, 1.0);
            Ok(normalized_distance(&exact, &approx))
        })
        .collect()
}

/// Exponent of the truncated Magnus propagator error under step halving.
pub fn magnus_suite(cfg: &OracleConfig) -> Result<Vec<OracleCheck>> {
    let mut out = Vec::new();
    for inst in dense_instances(cfg.max_qubits)? {
        for order in 1..=3 {
            let e = magnus_errors(&inst, order)?;
            let slope = loglog_slope(&MAGNUS_TAUS, &e);
            out.push(check(
                "magnus",
                format!("{} order {order}", inst.name()),
                slope,
                magnus_predicted_power(order),
                EXPONENT_TOL,
                format!("propagator errors {}", sci(&e)),
            ));
        }
    }
    Ok(out)
}

fn random_sum(n: usize, terms: usize, rng: &mut ChaCha8Rng) -> Result<PauliSum> {
    let mask = (1u64 << n) - 1;
    let v = (0..terms)
        .map(|_| {
            let t = PauliTerm::new(n, rng.gen::<u64>() & mask, rng.gen::<u64>() & mask)?;
            Ok((t, C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))))
        })
        .collect::<Result<Vec<_>>>()?;
    PauliSum::from_terms(n, v)
}

/// Symbolic traces and commutators against dense matrices.
pub fn trace_suite(cfg: &OracleConfig) -> Result<Vec<OracleCheck>> {
    if cfg.max_qubits > DENSE_CAP {
        return Err(Error::Resource(format!("{} qubits exceeds the dense oracle cap {DENSE_CAP}", cfg.max_qubits)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst_tr = 0.0f64;
    let mut worst_comm = 0.0f64;
    for n in 1..=cfg.max_qubits.max(1) {
        for _ in 0..8 {
            let (a, b) = (random_sum(n, 6, &mut rng)?, random_sum(n, 6, &mut rng)?);
            let (ma, mb) = (sum_matrix(&a)?, sum_matrix(&b)?);
            let dense = (&ma * &mb).trace() / C64::new((1u64 << n) as f64, 0.0);
            worst_tr = worst_tr.max((trace_product(&a, &b)? - dense).norm());
            let c = sum_matrix(&commutator(&a, &b)?)?;
            worst_comm = worst_comm.max(normalized_distance(&c, &(&ma * &mb - &mb * &ma)));
        }
    }
    Ok(vec![
        check("trace", "normalized trace of products".into(), worst_tr, 0.0, 1e-12, format!("max |diff| {worst_tr:.2e}")),
        check("trace", "commutators".into(), worst_comm, 0.0, 1e-12, format!("max distance {worst_comm:.2e}")),
    ])
}

/// Statevector against free-fermion objectives on rings up to `max_ring`.
pub fn simulator_suite(cfg: &OracleConfig) -> Result<Vec<OracleCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();
    let evolve = EvolveConfig { steps: 2000, error_estimate: false };
    for n in (4..=cfg.max_ring).step_by(2) {
        let inst = ProblemInstance::ising_ring(n)?;
        let p = 3;
        let g: Vec<f64> = (0..p).map(|_| rng.gen_range(0.0..1.5)).collect();
        let b: Vec<f64> = (0..p).map(|_| rng.gen_range(0.0..1.5)).collect();
        let sv = crate::sim::approximation_ratio(&inst, &qaoa_state(&inst, &g, &b)?)?;
        let fm = fermion_qaoa(n, &g, &b)?.ratio();
        out.push(check(
            "cross-sim",
            format!("ring {n} qaoa"),
            (sv - fm).abs(),
            0.0,
            CROSS_SIM_TOL,
            format!("statevector {sv:.12} fermion {fm:.12}"),
        ));
        if n <= 10 {
            let sched = ScheduleShape::linear_sine(-0.05).at(2.0)?;
            let alpha = NumericAlpha::new(&inst)?;
            let sv = crate::sim::approximation_ratio(&inst, &cd_evolve(&inst, &sched, &alpha, Drive::FULL, &evolve)?.state)?;
            let fm = fermion_evolve(n, &sched, &alpha, Drive::FULL, &evolve)?.state.ratio();
            out.push(check(
                "cross-sim",
                format!("ring {n} cd evolution"),
                (sv - fm).abs(),
                0.0,
                CROSS_SIM_TOL,
                format!("statevector {sv:.12} fermion {fm:.12}"),
            ));
        }
    }
    Ok(out)
}

/// Every suite; a cap violation surfaces as `Error::Resource`.
pub fn run_all(cfg: &OracleConfig) -> Result<OracleReport> {
    let mut checks = bch_suite(cfg)?;
    checks.extend(magnus_suite(cfg)?);
    checks.extend(trace_suite(cfg)?);
    checks.extend(simulator_suite(cfg)?);
    Ok(OracleReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponent_suites_pass() {
        let cfg = OracleConfig::default();
        let checks: Vec<_> = bch_suite(&cfg).unwrap().into_iter().chain(magnus_suite(&cfg).unwrap()).collect();
        assert_eq!(checks.len(), 3 * 5 + 3 * 3);
        for c in &checks {
            assert!(c.passed, "{} {}: {} vs {} ({})", c.suite, c.name, c.measured, c.expected, c.detail);
        }
    }

    #[test]
    fn vanishing_fourth_order_on_two_level() {
        let inst = ProblemInstance::two_level(TwoLevelNorm::Bloch).unwrap();
        assert_eq!(next_nonvanishing_order(&inst, 3).unwrap(), 5);
        let ring = ProblemInstance::ising_ring(4).unwrap();
        assert_eq!(next_nonvanishing_order(&ring, 3).unwrap(), 4);
    }

    #[test]
    fn flipped_word_is_named() {
        let cfg = OracleConfig { flip_bch_word: Some("SST".into()), ..Default::default() };
        let checks = bch_suite(&cfg).unwrap();
        let bad: Vec<_> = checks.iter().filter(|c| !c.passed).collect();
        assert!(!bad.is_empty());
        assert!(bad.iter().any(|c| c.detail.contains("wrong term: SST")), "{:#?}", bad);
        assert!(checks.iter().filter(|c| c.name.ends_with("order 2")).all(|c| c.passed));
    }

    #[test]
    fn unknown_word_rejected() {
        let cfg = OracleConfig { flip_bch_word: Some("QQ".into()), ..Default::default() };
        assert!(matches!(bch_suite(&cfg), Err(Error::Validation(_))));
    }

    #[test]
    fn dense_cap_enforced() {
        let cfg = OracleConfig { max_qubits: DENSE_CAP + 1, ..Default::default() };
        assert!(matches!(run_all(&cfg), Err(Error::Resource(_))));
        assert!(matches!(trace_suite(&cfg), Err(Error::Resource(_))));
    }

    #[test]
    fn trace_and_simulator_suites_pass() {
        let cfg = OracleConfig { max_ring: 8, ..Default::default() };
        for c in trace_suite(&cfg).unwrap().iter().chain(simulator_suite(&cfg).unwrap().iter()) {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
