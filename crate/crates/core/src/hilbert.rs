//! Spin ⊗ boson state space in the `Jx`-diagonal basis.
//!
//! The canonical product basis is `|m, n⟩` with `Jx|m⟩ = m|m⟩` and
//! `a†a|n⟩ = n|n⟩`, indexed spin-major: `(m + J)(n_max + 1) + n`. Spin-only
//! and Fock-only operators live on the degenerate bases `(J, 0)` and
//! `(0, n_max)`, so Kronecker products of the two land in the full basis
//! with the canonical ordering.

use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::str::FromStr;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

/// Tolerance used when deriving [`OperatorFlags`].
pub const FLAG_TOL: f64 = 1e-12;

/// Tolerance on the displaced-vacuum Poisson tail above the cutoff.
pub const DISPLACEMENT_TAIL_TOL: f64 = 1e-10;

/// An exact half-integer, stored as twice its value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct HalfInteger(i64);

impl HalfInteger {
    pub const ZERO: HalfInteger = HalfInteger(0);
    pub const HALF: HalfInteger = HalfInteger(1);

    pub const fn from_twice(twice: i64) -> Self {
        HalfInteger(twice)
    }

    pub const fn from_int(value: i64) -> Self {
        HalfInteger(2 * value)
    }

    /// Spin quantum number `J = N/2` for `N` atoms.
    pub const fn from_atoms(n_atoms: u32) -> Self {
        HalfInteger(n_atoms as i64)
    }

    pub const fn twice(self) -> i64 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }

    pub const fn is_integer(self) -> bool {
        self.0 % 2 == 0
    }

    pub const fn abs(self) -> Self {
        HalfInteger(self.0.abs())
    }

    /// Same parity as `other` (both integer or both half-odd).
    pub const fn same_parity(self, other: HalfInteger) -> bool {
        (self.0 - other.0) % 2 == 0
    }

    pub const fn offset(self, steps: i64) -> Self {
        HalfInteger(self.0 + 2 * steps)
    }

    /// `2m + 1`, always an integer.
    pub const fn twice_plus_one(self) -> i64 {
        self.0 + 1
    }

    /// Magnetic quantum numbers `-J, -J+1, ..., J` for this spin.
    pub fn magnetic_values(self) -> impl DoubleEndedIterator<Item = HalfInteger> + Clone {
        let j = self.0;
        (0..=j.max(-1)).map(move |i| HalfInteger(2 * i - j))
    }
}

impl fmt::Display for HalfInteger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

impl FromStr for HalfInteger {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidParameter(format!("not a half-integer: {s:?}"));
        if let Some((num, den)) = s.split_once('/') {
            let num: i64 = num.trim().parse().map_err(|_| bad())?;
            match den.trim() {
                "2" => Ok(HalfInteger(num)),
                "1" => Ok(HalfInteger(2 * num)),
                _ => Err(bad()),
            }
        } else if let Ok(v) = s.parse::<i64>() {
            Ok(HalfInteger(2 * v))
        } else {
            let v: f64 = s.parse().map_err(|_| bad())?;
            let twice = 2.0 * v;
            if twice.is_finite() && (twice - twice.round()).abs() < 1e-12 {
                Ok(HalfInteger(twice.round() as i64))
            } else {
                Err(bad())
            }
        }
    }
}

impl TryFrom<String> for HalfInteger {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<HalfInteger> for String {
    fn from(h: HalfInteger) -> String {
        h.to_string()
    }
}

/// Truncated product space (spin `J`) ⊗ (Fock states `0..=n_max`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpinBosonBasis {
    j: HalfInteger,
    n_max: usize,
}

impl SpinBosonBasis {
    pub fn new(j: HalfInteger, n_max: usize) -> Result<Self> {
        if j.twice() < 0 {
            return Err(Error::InvalidParameter(format!("J must be non-negative, got {j}")));
        }
        Ok(SpinBosonBasis { j, n_max })
    }

    /// Spin factor alone (`n_max = 0`).
    pub fn spin_only(j: HalfInteger) -> Result<Self> {
        Self::new(j, 0)
    }

    /// Fock factor alone (`J = 0`).
    pub fn fock_only(n_max: usize) -> Self {
        SpinBosonBasis { j: HalfInteger::ZERO, n_max }
    }

    pub fn j(&self) -> HalfInteger {
        self.j
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn spin_dim(&self) -> usize {
        self.j.twice() as usize + 1
    }

    pub fn fock_dim(&self) -> usize {
        self.n_max + 1
    }

    pub fn dim(&self) -> usize {
        self.spin_dim() * self.fock_dim()
    }

    pub fn spin_factor(&self) -> SpinBosonBasis {
        SpinBosonBasis { j: self.j, n_max: 0 }
    }

    pub fn fock_factor(&self) -> SpinBosonBasis {
        SpinBosonBasis::fock_only(self.n_max)
    }

    /// Position of `m` in the spin factor, `m + J`.
    pub fn spin_index(&self, m: HalfInteger) -> Result<usize> {
        if !m.same_parity(self.j) || m.twice().abs() > self.j.twice() {
            return Err(Error::IndexOutOfRange(format!("m = {m} for J = {}", self.j)));
        }
        Ok(((m.twice() + self.j.twice()) / 2) as usize)
    }

    /// Canonical index of `|m, n⟩`.
    pub fn index(&self, m: HalfInteger, n: usize) -> Result<usize> {
        let s = self.spin_index(m)?;
        if n > self.n_max {
            return Err(Error::IndexOutOfRange(format!("n = {n} above cutoff {}", self.n_max)));
        }
        Ok(s * self.fock_dim() + n)
    }

    /// Inverse of [`SpinBosonBasis::index`].
    pub fn label(&self, index: usize) -> Result<(HalfInteger, usize)> {
        if index >= self.dim() {
            return Err(Error::IndexOutOfRange(format!("index {index} >= dim {}", self.dim())));
        }
        let s = index / self.fock_dim();
        let n = index % self.fock_dim();
        Ok((HalfInteger::from_twice(2 * s as i64 - self.j.twice()), n))
    }

    pub fn labels(&self) -> impl Iterator<Item = (HalfInteger, usize)> + '_ {
        self.j
            .magnetic_values()
            .flat_map(move |m| (0..=self.n_max).map(move |n| (m, n)))
    }

    fn check_same(&self, other: &SpinBosonBasis) -> Result<()> {
        if self != other {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorFlags {
    pub hermitian: bool,
    pub unitary: bool,
    pub diagonal: bool,
}

/// Dense complex operator tied to a basis.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    basis: SpinBosonBasis,
    entries: DMatrix<C64>,
    flags: OperatorFlags,
}

impl OperatorMatrix {
    pub fn new(basis: SpinBosonBasis, entries: DMatrix<C64>) -> Result<Self> {
        if entries.nrows() != basis.dim() || entries.ncols() != basis.dim() {
            return Err(Error::DimensionMismatch { expected: basis.dim(), found: entries.nrows() });
        }
        let mut op = OperatorMatrix { basis, entries, flags: OperatorFlags::default() };
        op.refresh_flags();
        Ok(op)
    }

    pub(crate) fn from_parts(basis: SpinBosonBasis, entries: DMatrix<C64>) -> Self {
        debug_assert_eq!(entries.nrows(), basis.dim());
        let mut op = OperatorMatrix { basis, entries, flags: OperatorFlags::default() };
        op.refresh_flags();
        op
    }

    pub fn zeros(basis: SpinBosonBasis) -> Self {
        let d = basis.dim();
        Self::from_parts(basis, DMatrix::zeros(d, d))
    }

    pub fn identity(basis: SpinBosonBasis) -> Self {
        let d = basis.dim();
        let mut op = Self::from_parts(basis, DMatrix::identity(d, d));
        op.flags.unitary = true;
        op
    }

    pub fn from_real_diagonal(basis: SpinBosonBasis, diag: impl IntoIterator<Item = f64>) -> Result<Self> {
        let values: Vec<C64> = diag.into_iter().map(|v| C64::new(v, 0.0)).collect();
        if values.len() != basis.dim() {
            return Err(Error::DimensionMismatch { expected: basis.dim(), found: values.len() });
        }
        Ok(Self::from_parts(basis, DMatrix::from_diagonal(&DVector::from_vec(values))))
    }

    fn refresh_flags(&mut self) {
        self.flags.hermitian = self.hermiticity_error() <= FLAG_TOL;
        self.flags.diagonal = self.off_diagonal_max() <= FLAG_TOL;
        self.flags.unitary = false;
    }

    /// Checks `U†U = 1` and records the result in the flags.
    pub fn verify_unitary(&mut self) -> f64 {
        let err = self.unitarity_error();
        self.flags.unitary = err <= FLAG_TOL;
        err
    }

    pub fn basis(&self) -> &SpinBosonBasis {
        &self.basis
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<C64> {
        self.entries
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn flags(&self) -> OperatorFlags {
        self.flags
    }

    pub fn is_hermitian(&self) -> bool {
        self.flags.hermitian
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.entries[(row, col)]
    }

    /// `⟨m, n| O |m', n'⟩`.
    pub fn element(&self, bra: (HalfInteger, usize), ket: (HalfInteger, usize)) -> Result<C64> {
        let r = self.basis.index(bra.0, bra.1)?;
        let c = self.basis.index(ket.0, ket.1)?;
        Ok(self.entries[(r, c)])
    }

    pub fn hermiticity_error(&self) -> f64 {
        let n = self.entries.nrows();
        let mut err = 0.0f64;
        for c in 0..n {
            for r in c..n {
                err = err.max((self.entries[(r, c)] - self.entries[(c, r)].conj()).norm());
            }
        }
        err
    }

    pub fn unitarity_error(&self) -> f64 {
        let prod = self.entries.adjoint() * &self.entries;
        max_abs(&(prod - DMatrix::<C64>::identity(self.dim(), self.dim())))
    }

    fn off_diagonal_max(&self) -> f64 {
        let mut err = 0.0f64;
        for (idx, v) in self.entries.iter().enumerate() {
            let (r, c) = (idx % self.entries.nrows(), idx / self.entries.nrows());
            if r != c {
                err = err.max(v.norm());
            }
        }
        err
    }

    pub fn adjoint(&self) -> OperatorMatrix {
        let mut out = Self::from_parts(self.basis, self.entries.adjoint());
        out.flags.unitary = self.flags.unitary;
        out
    }

    pub fn scale(&self, factor: C64) -> OperatorMatrix {
        Self::from_parts(self.basis, &self.entries * factor)
    }

    pub fn scale_real(&self, factor: f64) -> OperatorMatrix {
        self.scale(C64::new(factor, 0.0))
    }

    /// `self ⊗ fock`, where `self` lives on a spin factor and `fock` on a Fock factor.
    pub fn kron(&self, fock: &OperatorMatrix) -> Result<OperatorMatrix> {
        if self.basis.n_max() != 0 || fock.basis.j() != HalfInteger::ZERO {
            return Err(Error::InvalidParameter(
                "kron expects a spin-factor operator on the left and a Fock-factor operator on the right".into(),
            ));
        }
        let basis = SpinBosonBasis::new(self.basis.j(), fock.basis.n_max())?;
        Ok(Self::from_parts(basis, self.entries.kronecker(&fock.entries)))
    }

    /// Lift a spin-factor operator to the product basis with cutoff `n_max`.
    pub fn spin_to_product(&self, n_max: usize) -> Result<OperatorMatrix> {
        self.kron(&OperatorMatrix::identity(SpinBosonBasis::fock_only(n_max)))
    }

    /// Lift a Fock-factor operator to the product basis with spin `j`.
    pub fn fock_to_product(&self, j: HalfInteger) -> Result<OperatorMatrix> {
        OperatorMatrix::identity(SpinBosonBasis::spin_only(j)?).kron(self)
    }

    pub fn apply(&self, state: &StateVector) -> Result<DVector<C64>> {
        self.basis.check_same(state.basis())?;
        Ok(&self.entries * state.amplitudes())
    }

    /// `⟨ψ|O|ψ⟩`.
    pub fn expectation(&self, state: &StateVector) -> Result<C64> {
        let v = self.apply(state)?;
        Ok(state.amplitudes().dotc(&v))
    }

    pub fn try_add(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        self.basis.check_same(&other.basis)?;
        Ok(Self::from_parts(self.basis, &self.entries + &other.entries))
    }

    pub fn try_sub(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        self.basis.check_same(&other.basis)?;
        Ok(Self::from_parts(self.basis, &self.entries - &other.entries))
    }

    pub fn try_mul(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        self.basis.check_same(&other.basis)?;
        let mut out = Self::from_parts(self.basis, &self.entries * &other.entries);
        out.flags.unitary = self.flags.unitary && other.flags.unitary;
        Ok(out)
    }

    /// Max-norm distance to `other`.
    pub fn max_diff(&self, other: &OperatorMatrix) -> Result<f64> {
        self.basis.check_same(&other.basis)?;
        Ok(max_abs(&(&self.entries - &other.entries)))
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.entries)
    }
}

impl Add for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn add(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        self.try_add(rhs).expect("operator bases differ")
    }
}

impl Sub for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn sub(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        self.try_sub(rhs).expect("operator bases differ")
    }
}

impl Mul for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        self.try_mul(rhs).expect("operator bases differ")
    }
}

pub(crate) fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.norm()))
}

/// Normalized amplitude vector over a [`SpinBosonBasis`].
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    basis: SpinBosonBasis,
    amplitudes: DVector<C64>,
}

impl StateVector {
    /// Normalizes `amplitudes`; fails on a zero vector or wrong length.
    pub fn new(basis: SpinBosonBasis, amplitudes: DVector<C64>) -> Result<Self> {
        if amplitudes.len() != basis.dim() {
            return Err(Error::DimensionMismatch { expected: basis.dim(), found: amplitudes.len() });
        }
        let norm = amplitudes.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::InvalidParameter("state vector has zero or non-finite norm".into()));
        }
        Ok(StateVector { basis, amplitudes: amplitudes.unscale(norm) })
    }

    /// Wraps amplitudes without renormalizing (propagation output).
    pub(crate) fn from_raw(basis: SpinBosonBasis, amplitudes: DVector<C64>) -> Self {
        debug_assert_eq!(amplitudes.len(), basis.dim());
        StateVector { basis, amplitudes }
    }

    pub fn basis(&self) -> &SpinBosonBasis {
        &self.basis
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> DVector<C64> {
        self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn amplitude(&self, m: HalfInteger, n: usize) -> Result<C64> {
        Ok(self.amplitudes[self.basis.index(m, n)?])
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        self.basis.check_same(&other.basis)?;
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    pub fn fidelity(&self, other: &StateVector) -> Result<f64> {
        Ok(self.inner(other)?.norm_sqr())
    }

    /// Probability of each photon number, summed over spin.
    pub fn photon_distribution(&self) -> Vec<f64> {
        let fd = self.basis.fock_dim();
        let mut p = vec![0.0; fd];
        for (i, a) in self.amplitudes.iter().enumerate() {
            p[i % fd] += a.norm_sqr();
        }
        p
    }
}

/// Collective spin operators in the `Jx`-diagonal basis.
#[derive(Clone, Debug)]
pub struct SpinOperators {
    pub jx: OperatorMatrix,
    pub jy: OperatorMatrix,
    pub jz: OperatorMatrix,
    /// Raises the `Jx` eigenvalue by one: `J+ = Jz − iJy`.
    pub jplus: OperatorMatrix,
    /// `J− = J+† = Jz + iJy`.
    pub jminus: OperatorMatrix,
}

/// `⟨m+1| J+ |m⟩ = √(J(J+1) − m(m+1))`.
pub fn ladder_element(j: HalfInteger, m: HalfInteger) -> f64 {
    let (j, m) = (j.value(), m.value());
    (j * (j + 1.0) - m * (m + 1.0)).max(0.0).sqrt()
}

pub fn spin_operators(j: HalfInteger) -> Result<SpinOperators> {
    if j.twice() < 1 {
        return Err(Error::InvalidParameter(format!("spin operators need J >= 1/2, got {j}")));
    }
    let basis = SpinBosonBasis::spin_only(j)?;
    let d = basis.spin_dim();
    let ms: Vec<HalfInteger> = j.magnetic_values().collect();

    let jx = OperatorMatrix::from_real_diagonal(basis, ms.iter().map(|m| m.value()))?;
    let mut up = DMatrix::<C64>::zeros(d, d);
    for (i, &m) in ms.iter().enumerate().take(d - 1) {
        up[(i + 1, i)] = C64::new(ladder_element(j, m), 0.0);
    }
    let down = up.transpose();
    let half = C64::new(0.5, 0.0);
    let jz = (&up + &down) * half;
    let jy = (&up - &down) * C64::new(0.0, 0.5);
    Ok(SpinOperators {
        jx,
        jy: OperatorMatrix::from_parts(basis, jy),
        jz: OperatorMatrix::from_parts(basis, jz),
        jplus: OperatorMatrix::from_parts(basis, up),
        jminus: OperatorMatrix::from_parts(basis, down),
    })
}

/// Projector onto `Jx = m` on the spin factor.
pub fn spin_projector(j: HalfInteger, m: HalfInteger) -> Result<OperatorMatrix> {
    let basis = SpinBosonBasis::spin_only(j)?;
    let idx = basis.spin_index(m)?;
    OperatorMatrix::from_real_diagonal(basis, (0..basis.spin_dim()).map(|i| if i == idx { 1.0 } else { 0.0 }))
}

#[derive(Clone, Debug)]
pub struct BosonOperators {
    pub a: OperatorMatrix,
    pub adag: OperatorMatrix,
    pub number: OperatorMatrix,
}

pub fn boson_operators(n_max: usize) -> Result<BosonOperators> {
    if n_max < 1 {
        return Err(Error::InvalidParameter("boson operators need n_max >= 1".into()));
    }
    let basis = SpinBosonBasis::fock_only(n_max);
    let d = basis.dim();
    let mut a = DMatrix::<C64>::zeros(d, d);
    for n in 1..d {
        a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    let adag = a.adjoint();
    Ok(BosonOperators {
        number: OperatorMatrix::from_real_diagonal(basis, (0..d).map(|n| n as f64))?,
        a: OperatorMatrix::from_parts(basis, a),
        adag: OperatorMatrix::from_parts(basis, adag),
    })
}

/// `P(N > n_max)` for `N ~ Poisson(mean)`.
pub fn poisson_tail(mean: f64, n_max: usize) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    let ln_mean = mean.ln();
    // ln pmf(n) = -mean + n ln(mean) - ln n!
    let mut ln_fact = (1..=n_max + 1).map(|i| (i as f64).ln()).sum::<f64>();
    let mut n = n_max + 1;
    let mut tail = 0.0;
    loop {
        let term = (-mean + n as f64 * ln_mean - ln_fact).exp();
        tail += term;
        if (n as f64 > mean && term < 1e-18 * tail.max(1e-300)) || n > n_max + 10_000 {
            break;
        }
        n += 1;
        ln_fact += (n as f64).ln();
    }
    tail.min(1.0)
}

/// Smallest cutoff whose Poisson tail at `mean` is below `tol`.
pub fn poisson_cutoff(mean: f64, tol: f64) -> usize {
    let mut n = mean.ceil() as usize;
    while poisson_tail(mean, n) >= tol {
        n += 1;
    }
    n
}

/// Precomputed spectral data for `exp(β (a† − a))` at a fixed cutoff.
#[derive(Clone, Debug)]
pub struct FockDisplacer {
    n_max: usize,
    vectors: DMatrix<C64>,
    values: DVector<f64>,
}

impl FockDisplacer {
    pub fn new(n_max: usize) -> Self {
        let d = n_max + 1;
        // K = i(a† − a) is hermitian and a† − a = −iK.
        let mut k = DMatrix::<C64>::zeros(d, d);
        for n in 1..d {
            let s = (n as f64).sqrt();
            k[(n, n - 1)] = C64::new(0.0, s);
            k[(n - 1, n)] = C64::new(0.0, -s);
        }
        let eig = k.symmetric_eigen();
        FockDisplacer { n_max, vectors: eig.eigenvectors, values: eig.eigenvalues }
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// `exp(β (a† − a))` on the truncated Fock space.
    pub fn displacement(&self, beta: f64) -> DMatrix<C64> {
        let mut scaled = self.vectors.clone();
        for (c, lam) in self.values.iter().enumerate() {
            let phase = C64::from_polar(1.0, -beta * lam);
            scaled.column_mut(c).iter_mut().for_each(|v| *v *= phase);
        }
        scaled * self.vectors.adjoint()
    }
}

/// Block-diagonal `exp(Λ (a† − a))` with `Λ = β(Jx)`.
///
/// Each `Jx = m` block is the single-mode displacement with amplitude `β(m)`.
/// Fails with `CutoffTooSmall` if the displaced vacuum of the largest
/// amplitude leaks more than [`DISPLACEMENT_TAIL_TOL`] above the cutoff.
pub fn displacement_operator(
    j: HalfInteger,
    n_max: usize,
    beta_of_m: impl Fn(HalfInteger) -> f64,
) -> Result<OperatorMatrix> {
    let basis = SpinBosonBasis::new(j, n_max)?;
    let betas: Vec<f64> = j.magnetic_values().map(&beta_of_m).collect();
    if betas.iter().any(|b| !b.is_finite()) {
        return Err(Error::InvalidParameter("displacement amplitude must be finite".into()));
    }
    let mean = betas.iter().fold(0.0f64, |acc, b| acc.max(b * b));
    if poisson_tail(mean, n_max) >= DISPLACEMENT_TAIL_TOL {
        return Err(Error::CutoffTooSmall {
            n_max,
            required: poisson_cutoff(mean, DISPLACEMENT_TAIL_TOL),
        });
    }
    let displacer = FockDisplacer::new(n_max);
    let fd = basis.fock_dim();
    let mut entries = DMatrix::<C64>::zeros(basis.dim(), basis.dim());
    for (s, &beta) in betas.iter().enumerate() {
        let block = if beta == 0.0 { DMatrix::identity(fd, fd) } else { displacer.displacement(beta) };
        entries.view_mut((s * fd, s * fd), (fd, fd)).copy_from(&block);
    }
    let mut op = OperatorMatrix::from_parts(basis, entries);
    op.verify_unitary();
    Ok(op)
}

/// Single basis state `|m, n⟩`.
pub fn basis_state(basis: &SpinBosonBasis, m: HalfInteger, n: usize) -> Result<StateVector> {
    let idx = basis.index(m, n)?;
    let mut amps = DVector::<C64>::zeros(basis.dim());
    amps[idx] = ONE;
    Ok(StateVector::from_raw(*basis, amps))
}

/// Unitary change between the `Jx`-diagonal and `Jz`-diagonal spin bases.
///
/// Column `i` of [`SpinBasisChange::matrix`] is `|Jz = −J + i⟩` written in
/// the `Jx` basis, with Condon–Shortley phases for `Jx + iJy`.
#[derive(Clone, Debug)]
pub struct SpinBasisChange {
    j: HalfInteger,
    columns: DMatrix<C64>,
}

impl SpinBasisChange {
    pub fn new(j: HalfInteger) -> Result<Self> {
        let ops = spin_operators(j)?;
        let d = j.twice() as usize + 1;
        let eig = ops.jz.entries().clone().symmetric_eigen();
        let lowest = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("non-empty spin space");
        let mut v: DVector<C64> = eig.eigenvectors.column(lowest).into_owned();
        // Fix the global phase: largest component real positive.
        let (imax, _) = v.iter().enumerate().fold((0, 0.0), |acc, (i, c)| if c.norm() > acc.1 + 1e-12 { (i, c.norm()) } else { acc });
        let phase = v[imax] / v[imax].norm();
        v /= phase;

        let raise = ops.jx.entries() + ops.jy.entries() * C64::new(0.0, 1.0);
        let mut columns = DMatrix::<C64>::zeros(d, d);
        columns.set_column(0, &v);
        for (i, mz) in j.magnetic_values().enumerate().take(d - 1) {
            let next = &raise * columns.column(i);
            let norm = ladder_element(j, mz);
            columns.set_column(i + 1, &(next / C64::new(norm, 0.0)));
        }
        Ok(SpinBasisChange { j, columns })
    }

    pub fn j(&self) -> HalfInteger {
        self.j
    }

    /// Columns are `Jz` eigenvectors in the `Jx` basis.
    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.columns
    }

    fn product(&self, n_max: usize) -> DMatrix<C64> {
        self.columns.kronecker(&DMatrix::<C64>::identity(n_max + 1, n_max + 1))
    }

    /// `|Jz = mz, n⟩` expressed in the canonical `Jx` basis.
    pub fn jz_state(&self, basis: &SpinBosonBasis, mz: HalfInteger, n: usize) -> Result<StateVector> {
        if basis.j() != self.j {
            return Err(Error::InvalidParameter(format!("basis J = {} but converter built for J = {}", basis.j(), self.j)));
        }
        let s = basis.spin_index(mz)?;
        if n > basis.n_max() {
            return Err(Error::IndexOutOfRange(format!("n = {n} above cutoff {}", basis.n_max())));
        }
        let mut amps = DVector::<C64>::zeros(basis.dim());
        let fd = basis.fock_dim();
        for r in 0..basis.spin_dim() {
            amps[r * fd + n] = self.columns[(r, s)];
        }
        Ok(StateVector::from_raw(*basis, amps))
    }

    /// Amplitudes in the `Jz ⊗ Fock` basis (same canonical ordering with `m → mz`).
    pub fn to_jz(&self, state: &StateVector) -> Result<DVector<C64>> {
        if state.basis().j() != self.j {
            return Err(Error::InvalidParameter("spin mismatch in basis change".into()));
        }
        Ok(self.product(state.basis().n_max()).adjoint() * state.amplitudes())
    }

    /// Inverse of [`SpinBasisChange::to_jz`].
    pub fn from_jz(&self, basis: &SpinBosonBasis, amplitudes: &DVector<C64>) -> Result<StateVector> {
        if basis.j() != self.j || amplitudes.len() != basis.dim() {
            return Err(Error::DimensionMismatch { expected: basis.dim(), found: amplitudes.len() });
        }
        Ok(StateVector::from_raw(*basis, self.product(basis.n_max()) * amplitudes))
    }
}
