//! Sparse Pauli-string algebra.
//!
//! A term `(x_mask, z_mask)` denotes the Hermitian string `i^{|x&z|} X^x Z^z`,
//! so a qubit set in both masks carries `Y = i X Z`. Under this convention
//! `Z X = i Y`. Qubit `j` is bit `j` of both masks and of computational-basis
//! indices; in string form the leftmost character is qubit 0.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Coefficients below this magnitude are dropped after every arithmetic pass.
pub const PRUNE_TOL: f64 = 1e-14;
/// Largest qubit count accepted by [`PauliSum::to_matrix`] unless overridden.
pub const DENSE_CAP: usize = 12;
pub const MAX_QUBITS: usize = 64;

const I_POW: [C64; 4] = [
    C64::new(1.0, 0.0),
    C64::new(0.0, 1.0),
    C64::new(-1.0, 0.0),
    C64::new(0.0, -1.0),
];

fn i_pow(k: i64) -> C64 {
    I_POW[k.rem_euclid(4) as usize]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PauliTerm {
    pub n_qubits: usize,
    pub x_mask: u64,
    pub z_mask: u64,
}

impl PauliTerm {
    pub fn new(n_qubits: usize, x_mask: u64, z_mask: u64) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(Error::Validation(format!("n_qubits = {n_qubits} out of range")));
        }
        let full = mask_of(n_qubits);
        if (x_mask | z_mask) & !full != 0 {
            return Err(Error::Validation("mask has bits beyond n_qubits".into()));
        }
        Ok(Self { n_qubits, x_mask, z_mask })
    }

    pub fn identity(n_qubits: usize) -> Self {
        Self { n_qubits, x_mask: 0, z_mask: 0 }
    }

    pub fn is_identity(&self) -> bool {
        self.x_mask == 0 && self.z_mask == 0
    }

    /// Parse a string over `IXYZ`, leftmost character is qubit 0.
    pub fn parse(s: &str) -> Result<Self> {
        let n = s.chars().count();
        let (mut x, mut z) = (0u64, 0u64);
        for (j, c) in s.chars().enumerate() {
            match c {
                'I' => {}
                'X' => x |= 1 << j,
                'Z' => z |= 1 << j,
                'Y' => {
                    x |= 1 << j;
                    z |= 1 << j;
                }
                _ => return Err(Error::Validation(format!("bad Pauli character {c:?}"))),
            }
        }
        Self::new(n, x, z)
    }

    /// Single-qubit or few-qubit term from `(qubit, letter)` pairs.
    pub fn from_ops(n_qubits: usize, ops: &[(usize, char)]) -> Result<Self> {
        let mut chars = vec!['I'; n_qubits];
        for &(q, c) in ops {
            if q >= n_qubits {
                return Err(Error::Validation(format!("qubit {q} out of range")));
            }
            chars[q] = c;
        }
        Self::parse(&chars.into_iter().collect::<String>())
    }

    pub fn label(&self) -> String {
        (0..self.n_qubits)
            .map(|j| {
                let (x, z) = ((self.x_mask >> j) & 1, (self.z_mask >> j) & 1);
                match (x, z) {
                    (0, 0) => 'I',
                    (1, 0) => 'X',
                    (0, 1) => 'Z',
                    _ => 'Y',
                }
            })
            .collect()
    }

    pub fn weight(&self) -> u32 {
        (self.x_mask | self.z_mask).count_ones()
    }

    /// True when the two strings anticommute.
    pub fn anticommutes(&self, other: &Self) -> bool {
        ((self.x_mask & other.z_mask).count_ones() + (self.z_mask & other.x_mask).count_ones()) % 2
            == 1
    }

    /// Action on a basis state: `P|i> = phase |i ^ x>`.
    #[inline]
    pub fn apply_phase(&self, index: u64) -> C64 {
        let k = (self.x_mask & self.z_mask).count_ones() as i64
            + 2 * (index & self.z_mask).count_ones() as i64;
        i_pow(k)
    }
}

fn mask_of(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

fn product_unchecked(a: &PauliTerm, b: &PauliTerm) -> (PauliTerm, C64) {
    let x = a.x_mask ^ b.x_mask;
    let z = a.z_mask ^ b.z_mask;
    let k = (a.x_mask & a.z_mask).count_ones() as i64 + (b.x_mask & b.z_mask).count_ones() as i64
        - (x & z).count_ones() as i64
        + 2 * (a.z_mask & b.x_mask).count_ones() as i64;
    (PauliTerm { n_qubits: a.n_qubits, x_mask: x, z_mask: z }, i_pow(k))
}

/// Product of two strings: `a * b = phase * term` with phase in {±1, ±i}.
pub fn multiply(a: &PauliTerm, b: &PauliTerm) -> Result<(PauliTerm, C64)> {
    if a.n_qubits != b.n_qubits {
        return Err(Error::Dimension(a.n_qubits, b.n_qubits));
    }
    Ok(product_unchecked(a, b))
}

impl fmt::Display for PauliTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Hermiticity class of a sum, judged from its coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Hermiticity {
    Hermitian,
    AntiHermitian,
    Zero,
    Mixed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PauliSum {
    n_qubits: usize,
    terms: BTreeMap<PauliTerm, C64>,
}

impl PauliSum {
    pub fn zero(n_qubits: usize) -> Self {
        Self { n_qubits, terms: BTreeMap::new() }
    }

    pub fn identity(n_qubits: usize) -> Self {
        Self::from_term(PauliTerm::identity(n_qubits), C64::new(1.0, 0.0))
    }

    pub fn from_term(term: PauliTerm, coeff: C64) -> Self {
        let mut s = Self::zero(term.n_qubits);
        s.add_term(term, coeff);
        s.prune(PRUNE_TOL);
        s
    }

    /// Parse `"XZI"` style label with a real coefficient.
    pub fn from_label(label: &str, coeff: f64) -> Result<Self> {
        Ok(Self::from_term(PauliTerm::parse(label)?, C64::new(coeff, 0.0)))
    }

    pub fn from_terms<I>(n_qubits: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (PauliTerm, C64)>,
    {
        let mut s = Self::zero(n_qubits);
        for (t, c) in terms {
            if t.n_qubits != n_qubits {
                return Err(Error::Dimension(n_qubits, t.n_qubits));
            }
            s.add_term(t, c);
        }
        s.prune(PRUNE_TOL);
        Ok(s)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PauliTerm, &C64)> {
        self.terms.iter()
    }

    pub fn coeff(&self, term: &PauliTerm) -> C64 {
        self.terms.get(term).copied().unwrap_or_default()
    }

    pub fn coeff_of(&self, label: &str) -> Result<C64> {
        Ok(self.coeff(&PauliTerm::parse(label)?))
    }

    fn add_term(&mut self, term: PauliTerm, c: C64) {
        *self.terms.entry(term).or_default() += c;
    }

    /// Drop coefficients with magnitude below `tol`.
    pub fn prune(&mut self, tol: f64) {
        self.terms.retain(|_, c| c.norm() >= tol);
    }

    fn check_dims(&self, other: &Self) -> Result<()> {
        if self.n_qubits != other.n_qubits {
            return Err(Error::Dimension(self.n_qubits, other.n_qubits));
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_dims(other)?;
        let mut out = self.clone();
        for (t, c) in &other.terms {
            out.add_term(*t, *c);
        }
        out.prune(PRUNE_TOL);
        Ok(out)
    }

    pub fn add_scaled(&mut self, other: &Self, scale: C64) -> Result<()> {
        self.check_dims(other)?;
        for (t, c) in &other.terms {
            self.add_term(*t, c * scale);
        }
        self.prune(PRUNE_TOL);
        Ok(())
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = Self::zero(self.n_qubits);
        for (t, c) in &self.terms {
            out.terms.insert(*t, c * s);
        }
        out.prune(PRUNE_TOL);
        out
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.check_dims(other)?;
        let mut out = Self::zero(self.n_qubits);
        for (ta, ca) in &self.terms {
            for (tb, cb) in &other.terms {
                let (t, ph) = product_unchecked(ta, tb);
                out.add_term(t, ca * cb * ph);
            }
        }
        out.prune(PRUNE_TOL);
        Ok(out)
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zero(self.n_qubits);
        for (t, c) in &self.terms {
            out.terms.insert(*t, c.conj());
        }
        out
    }

    pub fn hermiticity(&self) -> Hermiticity {
        let tol = PRUNE_TOL.sqrt();
        let scale = self.terms.values().map(|c| c.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return Hermiticity::Zero;
        }
        let real = self.terms.values().all(|c| c.im.abs() <= tol * scale);
        let imag = self.terms.values().all(|c| c.re.abs() <= tol * scale);
        match (real, imag) {
            (true, _) => Hermiticity::Hermitian,
            (false, true) => Hermiticity::AntiHermitian,
            _ => Hermiticity::Mixed,
        }
    }

    pub fn is_hermitian(&self) -> bool {
        matches!(self.hermiticity(), Hermiticity::Hermitian | Hermiticity::Zero)
    }

    /// Real parts of the coefficients, for sums known to be Hermitian.
    pub fn real_coeffs(&self) -> impl Iterator<Item = (&PauliTerm, f64)> {
        self.terms.iter().map(|(t, c)| (t, c.re))
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Write the sum as dense 2^n x 2^n matrix; refuses above `cap` qubits.
    pub fn to_matrix_capped(&self, cap: usize) -> Result<DMatrix<C64>> {
        if self.n_qubits > cap {
            return Err(Error::Resource(format!(
                "dense export of {} qubits exceeds cap {cap}",
                self.n_qubits
            )));
        }
        let dim = 1usize << self.n_qubits;
        let mut m = DMatrix::<C64>::zeros(dim, dim);
        for (t, c) in &self.terms {
            for col in 0..dim as u64 {
                let row = (col ^ t.x_mask) as usize;
                m[(row, col as usize)] += c * t.apply_phase(col);
            }
        }
        Ok(m)
    }

    pub fn to_matrix(&self) -> Result<DMatrix<C64>> {
        self.to_matrix_capped(DENSE_CAP)
    }

    /// `out += scale * self |psi>` on a full statevector.
    pub fn apply_add(&self, psi: &[C64], out: &mut [C64], scale: C64) {
        for (t, c) in &self.terms {
            let cs = c * scale;
            for (i, amp) in psi.iter().enumerate() {
                let j = i ^ t.x_mask as usize;
                out[j] += cs * t.apply_phase(i as u64) * amp;
            }
        }
    }

    /// True when every term is diagonal (Z and identity only).
    pub fn is_diagonal(&self) -> bool {
        self.terms.keys().all(|t| t.x_mask == 0)
    }

    /// Diagonal of a Z-only sum in the computational basis.
    pub fn diagonal(&self) -> Result<Vec<C64>> {
        if !self.is_diagonal() {
            return Err(Error::Contract("sum has off-diagonal terms".into()));
        }
        if self.n_qubits > 30 {
            return Err(Error::Resource("diagonal too large".into()));
        }
        let dim = 1usize << self.n_qubits;
        let mut d = vec![C64::default(); dim];
        for (t, c) in &self.terms {
            for (i, v) in d.iter_mut().enumerate() {
                *v += c * t.apply_phase(i as u64);
            }
        }
        Ok(d)
    }
}

/// `AB - BA`. Only anticommuting pairs contribute, each as `2 * a * b * P_a P_b`.
pub fn commutator(a: &PauliSum, b: &PauliSum) -> Result<PauliSum> {
    a.check_dims(b)?;
    let mut out = PauliSum::zero(a.n_qubits);
    for (ta, ca) in &a.terms {
        for (tb, cb) in &b.terms {
            if ta.anticommutes(tb) {
                let (t, ph) = product_unchecked(ta, tb);
                out.add_term(t, 2.0 * ca * cb * ph);
            }
        }
    }
    out.prune(PRUNE_TOL);
    Ok(out)
}

/// `[A,[A,...,[A,B]...]]` with `depth` copies of `A`.
pub fn nested_commutator(a: &PauliSum, b: &PauliSum, depth: usize) -> Result<PauliSum> {
    if depth == 0 {
        return Err(Error::Validation("nested commutator depth must be >= 1".into()));
    }
    let mut acc = commutator(a, b)?;
    for _ in 1..depth {
        acc = commutator(a, &acc)?;
    }
    Ok(acc)
}

/// `i [A, B]`, Hermitian whenever `A` and `B` are.
pub fn hermitian_commutator(a: &PauliSum, b: &PauliSum) -> Result<PauliSum> {
    Ok(commutator(a, b)?.scale(C64::new(0.0, 1.0)))
}

/// Normalized trace `tr(AB) / 2^n`. Both maps are sorted, so a merge join
/// over common strings suffices (`P^2 = I` for every Hermitian string).
pub fn trace_product(a: &PauliSum, b: &PauliSum) -> Result<C64> {
    a.check_dims(b)?;
    let mut ia = a.terms.iter().peekable();
    let mut ib = b.terms.iter().peekable();
    let mut acc = C64::default();
    while let (Some((ta, ca)), Some((tb, cb))) = (ia.peek(), ib.peek()) {
        match ta.cmp(tb) {
            std::cmp::Ordering::Less => {
                ia.next();
            }
            std::cmp::Ordering::Greater => {
                ib.next();
            }
            std::cmp::Ordering::Equal => {
                acc += **ca * **cb;
                ia.next();
                ib.next();
            }
        }
    }
    Ok(acc)
}

/// `tr(A^2) / 2^n`: nonnegative for Hermitian, nonpositive for anti-Hermitian.
pub fn norm_sq(a: &PauliSum) -> Result<f64> {
    match a.hermiticity() {
        Hermiticity::Mixed => Err(Error::Contract(
            "norm_sq needs a Hermitian or anti-Hermitian sum".into(),
        )),
        _ => Ok(trace_product(a, a)?.re),
    }
}

/// Frobenius-style norm `sqrt(|norm_sq|)`.
pub fn norm(a: &PauliSum) -> Result<f64> {
    Ok(norm_sq(a)?.abs().sqrt())
}

impl Add for &PauliSum {
    type Output = PauliSum;
    fn add(self, rhs: &PauliSum) -> PauliSum {
        self.try_add(rhs).expect("qubit count mismatch in PauliSum addition")
    }
}

impl Sub for &PauliSum {
    type Output = PauliSum;
    fn sub(self, rhs: &PauliSum) -> PauliSum {
        self.try_add(&rhs.scale_re(-1.0))
            .expect("qubit count mismatch in PauliSum subtraction")
    }
}

impl Mul for &PauliSum {
    type Output = PauliSum;
    fn mul(self, rhs: &PauliSum) -> PauliSum {
        self.try_mul(rhs).expect("qubit count mismatch in PauliSum product")
    }
}

impl Neg for &PauliSum {
    type Output = PauliSum;
    fn neg(self) -> PauliSum {
        self.scale_re(-1.0)
    }
}

impl fmt::Display for PauliSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (t, c)) in self.terms.iter().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            write!(f, "({:.6}{:+.6}i) {}", c.re, c.im, t)?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct TermRecord {
    paulis: String,
    re: f64,
    im: f64,
}

impl Serialize for PauliSum {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let recs: Vec<TermRecord> = self
            .terms
            .iter()
            .map(|(t, c)| TermRecord { paulis: t.label(), re: c.re, im: c.im })
            .collect();
        recs.serialize(s)
    }
}

impl<'de> Deserialize<'de> for PauliSum {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let recs = Vec::<TermRecord>::deserialize(d)?;
        let first = recs
            .first()
            .ok_or_else(|| D::Error::custom("empty Pauli sum has no qubit count"))?;
        let n = first.paulis.chars().count();
        let mut terms = Vec::with_capacity(recs.len());
        for r in &recs {
            let t = PauliTerm::parse(&r.paulis).map_err(D::Error::custom)?;
            terms.push((t, C64::new(r.re, r.im)));
        }
        PauliSum::from_terms(n, terms).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> PauliTerm {
        PauliTerm::parse(s).unwrap()
    }

    #[test]
    fn single_qubit_products() {
        assert_eq!(multiply(&t("X"), &t("X")).unwrap(), (t("I"), C64::new(1.0, 0.0)));
        assert_eq!(multiply(&t("Z"), &t("X")).unwrap(), (t("Y"), C64::new(0.0, 1.0)));
        assert_eq!(multiply(&t("X"), &t("Z")).unwrap(), (t("Y"), C64::new(0.0, -1.0)));
        assert_eq!(multiply(&t("ZZ"), &t("XI")).unwrap(), (t("YZ"), C64::new(0.0, 1.0)));
        assert_eq!(multiply(&t("Y"), &t("Y")).unwrap(), (t("I"), C64::new(1.0, 0.0)));
        assert!(matches!(multiply(&t("X"), &t("XX")), Err(Error::Dimension(1, 2))));
    }

    #[test]
    fn identity_is_neutral() {
        for s in ["XYZ", "IIY", "ZZX"] {
            assert_eq!(multiply(&t(s), &t("III")).unwrap(), (t(s), C64::new(1.0, 0.0)));
        }
    }

    #[test]
    fn commutator_examples() {
        let zz = PauliSum::from_label("ZZ", 1.0).unwrap();
        let x0 = PauliSum::from_label("XI", 1.0).unwrap();
        let c = commutator(&zz, &x0).unwrap();
        assert_eq!(c.len(), 1);
        assert!((c.coeff_of("YZ").unwrap() - C64::new(0.0, 2.0)).norm() < 1e-15);
        assert!(commutator(&zz, &zz).unwrap().is_empty());
        let id = PauliSum::identity(2);
        assert!(nested_commutator(&id, &x0, 3).unwrap().is_empty());
    }

    #[test]
    fn traces() {
        let x = PauliSum::from_label("X", 1.0).unwrap();
        let y = PauliSum::from_label("Y", 1.0).unwrap();
        assert!((trace_product(&x, &x).unwrap().re - 1.0).abs() < 1e-15);
        assert!(trace_product(&x, &y).unwrap().norm() < 1e-15);
        let a = &PauliSum::from_label("XI", 2.0).unwrap() + &PauliSum::from_label("ZZ", 3.0).unwrap();
        assert!((trace_product(&a, &a).unwrap().re - 13.0).abs() < 1e-12);
        assert!((norm_sq(&x).unwrap() - 1.0).abs() < 1e-15);
        assert!((norm_sq(&y.scale(C64::new(0.0, 1.0))).unwrap() + 1.0).abs() < 1e-15);
        let mixed = &x + &y.scale(C64::new(0.0, 1.0));
        assert!(matches!(norm_sq(&mixed), Err(Error::Contract(_))));
    }

    #[test]
    fn dense_export() {
        let id = PauliSum::identity(2).to_matrix().unwrap();
        assert_eq!(id, DMatrix::identity(4, 4));
        let x = PauliSum::from_label("X", 1.0).unwrap().to_matrix().unwrap();
        assert_eq!(x[(0, 1)], C64::new(1.0, 0.0));
        assert_eq!(x[(1, 0)], C64::new(1.0, 0.0));
        assert_eq!(x[(0, 0)], C64::default());
        let big = PauliSum::identity(13);
        assert!(matches!(big.to_matrix(), Err(Error::Resource(_))));
    }

    #[test]
    fn json_roundtrip() {
        let a = &PauliSum::from_label("XIZ", 0.5).unwrap() + &PauliSum::from_label("YYI", -2.0).unwrap();
        let s = serde_json::to_string(&a).unwrap();
        assert!(s.contains("\"paulis\":\"XIZ\""));
        let b: PauliSum = serde_json::from_str(&s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn prune_drops_small() {
        let mut a = PauliSum::from_label("X", 1.0).unwrap();
        a.add_scaled(&PauliSum::from_label("Z", 1.0).unwrap(), C64::new(1e-16, 0.0)).unwrap();
        assert_eq!(a.len(), 1);
    }
}
