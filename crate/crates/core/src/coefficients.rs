//! Fourier coefficients `Ω_n^m(β)` of the oscillating displacement operator.
//!
//! ```text
//! e^{β(a e^{-iωt} − a† e^{iωt})} = Ω_n̂^0 + Σ_{m>0} Ω_n̂^m a^m e^{-imωt} + (−1)^m e^{imωt} a†^m Ω_n̂^m
//! Ω_n^m(β) = β^m e^{-β²/2} L_n^m(β²) n!/(n+m)!
//! ```
//!
//! Everything is assembled in the log domain so that `n` up to ~10³ neither
//! overflows the Laguerre values nor underflows the factorial ratio.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::hilbert::{OperatorMatrix, SpinBosonBasis, C64};

/// Associated Laguerre polynomial `L_n^m(x)` by upward recurrence in `n`.
pub fn laguerre_assoc(n: usize, m: usize, x: f64) -> f64 {
    let alpha = m as f64;
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 1.0 + alpha - x;
    for k in 1..n {
        let k = k as f64;
        let next = ((2.0 * k + 1.0 + alpha - x) * cur - (k + alpha) * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// `ln(n!/(n+m)!)` as a sum of `m` reciprocal factors.
fn ln_factorial_ratio(n: usize, m: usize) -> f64 {
    -(1..=m).map(|i| ((n + i) as f64).ln()).sum::<f64>()
}

/// `sign · exp(ln_mag)` for `β^m e^{-β²/2} L_n^m(β²) · exp(ln_extra)`.
fn assemble(n: usize, m: usize, beta: f64, ln_extra: f64) -> f64 {
    let lag = laguerre_assoc(n, m, beta * beta);
    if lag == 0.0 {
        return 0.0;
    }
    if beta == 0.0 {
        return if m == 0 { lag * ln_extra.exp() } else { 0.0 };
    }
    let mut sign = lag.signum();
    if beta < 0.0 && m % 2 == 1 {
        sign = -sign;
    }
    let ln_mag = m as f64 * beta.abs().ln() - 0.5 * beta * beta + lag.abs().ln() + ln_extra;
    sign * ln_mag.exp()
}

/// `Ω_n^m(β)`.
pub fn omega_coeff(n: usize, m: usize, beta: f64) -> f64 {
    assemble(n, m, beta, ln_factorial_ratio(n, m))
}

/// `⟨row| e^{β(a − a†)} |col⟩` of the untruncated operator.
///
/// Above the diagonal this is `Ω_n^p √((n+p)!/n!)`; below it picks up the
/// `(−1)^p` of the creation-side Fourier terms.
pub fn displacement_element(row: usize, col: usize, beta: f64) -> f64 {
    let (n, p) = if row <= col { (row, col - row) } else { (col, row - col) };
    let v = assemble(n, p, beta, 0.5 * ln_factorial_ratio(n, p));
    if row > col && p % 2 == 1 {
        -v
    } else {
        v
    }
}

/// Exact matrix elements of `e^{β(a − a†)}` restricted to `0..=n_max`.
pub fn displacement_block(n_max: usize, beta: f64) -> DMatrix<C64> {
    let d = n_max + 1;
    DMatrix::from_fn(d, d, |r, c| C64::new(displacement_element(r, c, beta), 0.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmegaCoefficient {
    pub n: usize,
    pub m: usize,
    pub beta: f64,
    pub value: f64,
}

impl OmegaCoefficient {
    pub fn evaluate(n: usize, m: usize, beta: f64) -> Self {
        OmegaCoefficient { n, m, beta, value: omega_coeff(n, m, beta) }
    }
}

/// All `(n, m, β)` combinations, `β` outermost.
pub fn omega_table(
    ns: impl IntoIterator<Item = usize> + Clone,
    ms: impl IntoIterator<Item = usize> + Clone,
    betas: &[f64],
) -> Vec<OmegaCoefficient> {
    let mut out = Vec::new();
    for &beta in betas {
        for m in ms.clone() {
            for n in ns.clone() {
                out.push(OmegaCoefficient::evaluate(n, m, beta));
            }
        }
    }
    out
}

/// Diagonal `Ω_n̂^m(β)` acting on the Fock factor of `basis`.
pub fn omega_diag_operator(basis: &SpinBosonBasis, m: usize, beta: f64) -> Result<OperatorMatrix> {
    let fd = basis.fock_dim();
    let diag: Vec<f64> = (0..basis.dim()).map(|i| omega_coeff(i % fd, m, beta)).collect();
    OperatorMatrix::from_real_diagonal(*basis, diag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{boson_operators, HalfInteger};

    #[test]
    fn laguerre_low_orders() {
        for m in 0..5 {
            for &x in &[0.0, 0.5, 3.0, 7.5] {
                assert_eq!(laguerre_assoc(0, m, x), 1.0);
                assert!((laguerre_assoc(1, m, x) - (1.0 + m as f64 - x)).abs() < 1e-14);
                let mf = m as f64;
                let explicit = (mf + 2.0) * (mf + 1.0) / 2.0 - (mf + 2.0) * x + x * x / 2.0;
                assert!((laguerre_assoc(2, m, x) - explicit).abs() < 1e-12);
            }
        }
        assert!((laguerre_assoc(1, 0, 0.25) - 0.75).abs() < 1e-15);
        assert!((laguerre_assoc(2, 1, 4.0) + 1.0).abs() < 1e-14);
    }

    #[test]
    fn laguerre_against_explicit_sum() {
        // L_n^m(x) = Σ_i (−1)^i C(n+m, n−i) x^i / i!
        fn explicit(n: usize, m: usize, x: f64) -> f64 {
            let mut total = 0.0;
            for i in 0..=n {
                let mut binom = 1.0;
                for t in 0..(n - i) {
                    binom *= (n + m - t) as f64 / (t + 1) as f64;
                }
                let mut xi = 1.0;
                for t in 1..=i {
                    xi *= x / t as f64;
                }
                total += if i % 2 == 0 { binom * xi } else { -binom * xi };
            }
            total
        }
        for n in 0..12 {
            for m in 0..6 {
                for &x in &[0.25, 1.0, 3.0] {
                    let a = laguerre_assoc(n, m, x);
                    let b = explicit(n, m, x);
                    assert!((a - b).abs() < 1e-10 * b.abs().max(1.0), "n={n} m={m} x={x}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn omega_identity_and_vacuum_rows() {
        for n in 0..50 {
            assert_eq!(omega_coeff(n, 0, 0.0), 1.0);
            assert_eq!(omega_coeff(n, 3, 0.0), 0.0);
        }
        for m in 0..8 {
            for &beta in &[0.5f64, 1.0, 1.7] {
                let fact: f64 = (1..=m).map(|i| i as f64).product();
                let expected = beta.powi(m as i32) * (-beta * beta / 2.0).exp() / fact;
                assert!((omega_coeff(0, m, beta) - expected).abs() < 1e-14);
            }
        }
        assert!((omega_coeff(0, 1, 1.0) - 0.60653).abs() < 1e-5);
    }

    #[test]
    fn omega_zero_is_bounded() {
        for n in 0..400 {
            for &beta in &[0.3, 1.0, 1.2, 3f64.sqrt(), 5f64.sqrt(), 3.0] {
                let v = omega_coeff(n, 0, beta);
                assert!(v.abs() <= 1.0 + 1e-12, "n={n} beta={beta}: {v}");
            }
        }
    }

    #[test]
    fn no_overflow_at_large_n() {
        for &n in &[0usize, 10, 170, 171, 500, 1000] {
            for m in [0usize, 1, 7, 25, 50] {
                for &beta in &[0.1, 1.0, 2.0, 3.0] {
                    let v = omega_coeff(n, m, beta);
                    assert!(v.is_finite(), "n={n} m={m} beta={beta}");
                }
            }
        }
    }

    #[test]
    fn diag_operator_entries() {
        let basis = SpinBosonBasis::new(HalfInteger::from_int(1), 6).unwrap();
        let id = omega_diag_operator(&basis, 0, 0.0).unwrap();
        assert!(id.max_diff(&OperatorMatrix::identity(basis)).unwrap() == 0.0);
        let op = omega_diag_operator(&basis, 2, 1.3).unwrap();
        assert!(op.flags().diagonal);
        for (i, (_, n)) in basis.labels().enumerate() {
            assert_eq!(op.get(i, i).re, omega_coeff(n, 2, 1.3));
        }
    }

    #[test]
    fn omega_times_power_of_a_reproduces_block_elements() {
        let n_max = 30;
        let beta = 1.1;
        let fock = SpinBosonBasis::fock_only(n_max);
        let a = boson_operators(n_max).unwrap().a;
        let block = displacement_block(n_max, beta);
        for m in 0..6 {
            let omega = omega_diag_operator(&fock, m, beta).unwrap();
            let mut prod = omega.clone();
            for _ in 0..m {
                prod = &prod * &a;
            }
            for n in 0..=(n_max - m) {
                assert!((prod.get(n, n + m).re - block[(n, n + m)].re).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn table_shape() {
        let t = omega_table(0..3, 0..2, &[0.5, 1.0]);
        assert_eq!(t.len(), 12);
        assert_eq!(t[0], OmegaCoefficient::evaluate(0, 0, 0.5));
    }
}
