//! Dicke Hamiltonian in every frame used by the dispersive analysis.
//!
//! Frames, from the lab outwards (`λ = (g/ω) Jx`, `χ = g²/ω`):
//!
//! ```text
//! H   = ω₀ Jz + ω a†a + g Jx (a + a†)
//! H'  = e^{λ(a†−a)} H e^{−λ(a†−a)}  = (ω₀/2)(e^{(g/ω)(a−a†)} J− + h.c.) + ω a†a − χ Jx²
//! H₂  = (ω₀/2)[e^{(g/ω)(a e^{−iωt} − a† e^{iωt})} J− + h.c.] − χ Jx²
//! H₃  = (ω₀/2) e^{(g/ω)(a e^{−iωt} − a† e^{iωt})} e^{iχ(2Jx+1)t} J− + h.c.
//! ```
//!
//! The dressing unitary that removes the linear coupling is
//! `e^{λ(a†−a)}`; see [`crate::propagate::FrameDressing`] for the
//! composition back to the lab frame.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::coefficients::{displacement_block, omega_diag_operator};
use crate::error::{Error, Result};
use crate::hilbert::{
    boson_operators, ladder_element, poisson_cutoff, spin_operators, spin_projector, HalfInteger, OperatorMatrix, SpinBosonBasis,
    C64, ZERO,
};
use crate::propagate::TimeDependentOperator;

/// Default `|g²/ω² − k|` accepted by the exact-resonance builders.
pub const DEFAULT_RESONANCE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Frame {
    Lab,
    Displaced,
    InteractionH2,
    InteractionH3,
    EffectiveDsc,
    EffectiveHalfInteger,
    EffectiveLmg,
}

impl Frame {
    pub const ALL: [Frame; 7] = [
        Frame::Lab,
        Frame::Displaced,
        Frame::InteractionH2,
        Frame::InteractionH3,
        Frame::EffectiveDsc,
        Frame::EffectiveHalfInteger,
        Frame::EffectiveLmg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Frame::Lab => "lab",
            Frame::Displaced => "displaced",
            Frame::InteractionH2 => "h2",
            Frame::InteractionH3 => "h3",
            Frame::EffectiveDsc => "effective-dsc",
            Frame::EffectiveHalfInteger => "effective-half-integer",
            Frame::EffectiveLmg => "effective-lmg",
        }
    }

    /// Frames whose rotating part includes `−χ Jx²`.
    pub fn rotates_jx2(self) -> bool {
        matches!(self, Frame::InteractionH3 | Frame::EffectiveDsc | Frame::EffectiveHalfInteger)
    }

    /// Frames in the interaction picture of `ω a†a`.
    pub fn rotates_mode(self) -> bool {
        !matches!(self, Frame::Lab | Frame::Displaced)
    }

    pub fn is_displaced(self) -> bool {
        self != Frame::Lab
    }
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Frame {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Frame::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown frame {s:?}")))
    }
}

impl TryFrom<String> for Frame {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Frame> for String {
    fn from(f: Frame) -> String {
        f.name().to_string()
    }
}

/// Physical parameters plus the Fock cutoff. Frequencies share the unit of `omega`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub omega: f64,
    pub omega0: f64,
    pub g: f64,
    pub j: HalfInteger,
    pub n_max: usize,
    pub frame: Frame,
}

impl ModelConfig {
    /// Lab-frame configuration with `ω = 1`.
    pub fn new(j: HalfInteger, g: f64, omega0: f64, n_max: usize) -> Self {
        ModelConfig { omega: 1.0, omega0, g, j, n_max, frame: Frame::Lab }
    }

    pub fn with_frame(mut self, frame: Frame) -> Self {
        self.frame = frame;
        self
    }

    pub fn with_n_max(mut self, n_max: usize) -> Self {
        self.n_max = n_max;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.omega.is_finite() && self.omega0.is_finite() && self.g.is_finite();
        if !finite || self.omega <= 0.0 {
            return Err(Error::InvalidParameter(format!("omega must be positive and finite, got {}", self.omega)));
        }
        if self.omega0 < 0.0 || self.g < 0.0 {
            return Err(Error::InvalidParameter("omega0 and g must be non-negative".into()));
        }
        if self.j.twice() < 1 {
            return Err(Error::InvalidParameter(format!("J must be at least 1/2, got {}", self.j)));
        }
        Ok(())
    }

    pub fn basis(&self) -> Result<SpinBosonBasis> {
        SpinBosonBasis::new(self.j, self.n_max)
    }

    /// Displacement amplitude per unit `Jx`, `g/ω`.
    pub fn beta(&self) -> f64 {
        self.g / self.omega
    }

    /// Prefactor of the `Jx²` term, `g²/ω`.
    pub fn chi(&self) -> f64 {
        self.g * self.g / self.omega
    }

    /// `g²/ω²`, the resonance index when integer.
    pub fn resonance_ratio(&self) -> f64 {
        self.beta() * self.beta()
    }

    pub fn nearest_k(&self) -> u32 {
        self.resonance_ratio().round() as u32
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    /// Photon extent of a resonant chain above its base Fock state.
    pub fn chain_extent(&self, k: u32) -> usize {
        let j2 = self.j.twice() * self.j.twice();
        let m_min2 = if self.j.is_integer() { 0 } else { 1 };
        (k as i64 * (j2 - m_min2) / 4) as usize
    }

    /// Fock cutoff for dynamics starting at `n_init` photons in `Jx = 0`.
    ///
    /// Displaced frames: `n_init + chain extent + ceil(β²J² + 6βJ)`. Lab-frame
    /// states are those chain states displaced by up to `βJ`, so with
    /// `r = √(n_init + extent) + βJ` the lab frame needs `ceil(r² + 3r) + 6`.
    pub fn required_cutoff(&self, n_init: usize) -> usize {
        self.required_cutoff_spread(n_init, 0.0)
    }

    /// As [`required_cutoff`](Self::required_cutoff) for an initial state with
    /// weight on `|Jx| ≤ m_spread`. Such a lab state starts displaced by up to
    /// `β m_spread` away from the displaced-frame vacuum, which adds to `r`.
    pub fn required_cutoff_spread(&self, n_init: usize, m_spread: f64) -> usize {
        let bj = self.beta() * self.j.value();
        let bm = self.beta() * m_spread.abs();
        let top = n_init + self.chain_extent(self.nearest_k());
        let ring = |r: f64| (r * r + 3.0 * r).ceil() as usize + 6;
        if self.frame == Frame::Lab {
            // small r: the coherent part's Poisson tail outgrows the ring
            let coherent = poisson_cutoff((bj + bm).powi(2), 1e-9) + 1;
            ring((top as f64).sqrt() + bj + bm).max(coherent)
        } else {
            let base = top + (bj * bj + 6.0 * bj).ceil() as usize;
            if bm == 0.0 {
                base
            } else {
                base.max(ring((top as f64).sqrt() + bm))
            }
        }
    }

    pub fn check_cutoff(&self, n_init: usize) -> Result<()> {
        let required = self.required_cutoff(n_init);
        if self.n_max < required {
            return Err(Error::CutoffTooSmall { n_max: self.n_max, required });
        }
        Ok(())
    }

    /// The resonance index `k` with `|g²/ω² − k| ≤ tol`.
    pub fn resonance(&self, tol: f64) -> Result<ResonanceIndex> {
        let ratio = self.resonance_ratio();
        let k = ratio.round();
        if k < 1.0 || (ratio - k).abs() > tol {
            return Err(Error::OffResonance { ratio, tol });
        }
        Ok(ResonanceIndex(k as u32))
    }
}

/// Positive integer `k` with `g = ω√k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ResonanceIndex(u32);

impl ResonanceIndex {
    pub fn new(k: u32) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("resonance index must be positive".into()));
        }
        Ok(ResonanceIndex(k))
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

/// `H = ω₀ Jz + ω a†a + g Jx (a + a†)`.
pub fn build_dicke(cfg: &ModelConfig) -> Result<OperatorMatrix> {
    cfg.validate()?;
    cfg.with_frame(Frame::Lab).check_cutoff(0)?;
    let spin = spin_operators(cfg.j)?;
    let bos = boson_operators(cfg.n_max.max(1))?;
    let n_max = cfg.n_max;
    if n_max == 0 {
        return Err(Error::CutoffTooSmall { n_max, required: 1 });
    }
    let quad = &bos.a + &bos.adag;
    let h = spin.jz.spin_to_product(n_max)?.scale_real(cfg.omega0);
    let h = &h + &bos.number.fock_to_product(cfg.j)?.scale_real(cfg.omega);
    let h = &h + &spin.jx.kron(&quad)?.scale_real(cfg.g);
    Ok(h)
}

/// Shared pieces of `H'`, `H₂`, `H₃`: ladder weights and the photon factor
/// `e^{(g/ω)(a − a†)}` from its exact matrix elements.
#[derive(Clone, Debug)]
struct DressedLadder {
    basis: SpinBosonBasis,
    omega: f64,
    chi: f64,
    half_omega0: f64,
    /// `m` for each spin index.
    m_values: Vec<f64>,
    /// `⟨m|J−|m+1⟩` for spin index `s` (lower state `m = −J + s`).
    ladder: Vec<f64>,
    photon: DMatrix<f64>,
}

impl DressedLadder {
    fn new(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        cfg.with_frame(Frame::Displaced).check_cutoff(0)?;
        let basis = cfg.basis()?;
        let ms: Vec<HalfInteger> = cfg.j.magnetic_values().collect();
        let photon = displacement_block(cfg.n_max, cfg.beta()).map(|c| c.re);
        Ok(DressedLadder {
            basis,
            omega: cfg.omega,
            chi: cfg.chi(),
            half_omega0: 0.5 * cfg.omega0,
            m_values: ms.iter().map(|m| m.value()).collect(),
            ladder: ms.iter().take(ms.len() - 1).map(|&m| ladder_element(cfg.j, m)).collect(),
            photon,
        })
    }

    fn fock_dim(&self) -> usize {
        self.basis.fock_dim()
    }

    /// Dense matrix with `E(t)_{nn'} = E₀_{nn'} e^{iωt(n−n')}` on every `(m, m+1)` block,
    /// the block weighted by `coupling(s)`, plus `diag(s, n)` on the diagonal.
    fn assemble(&self, t: f64, coupling: impl Fn(usize) -> C64, diag: impl Fn(usize, usize) -> f64) -> DMatrix<C64> {
        let fd = self.fock_dim();
        let dim = self.basis.dim();
        let mut h = DMatrix::<C64>::zeros(dim, dim);
        let rot: Vec<C64> = (0..fd).map(|n| C64::from_polar(1.0, self.omega * t * n as f64)).collect();
        for s in 0..self.ladder.len() {
            let c = coupling(s);
            if c == ZERO {
                continue;
            }
            let (r0, c0) = (s * fd, (s + 1) * fd);
            for col in 0..fd {
                for row in 0..fd {
                    let v = c * rot[row] * rot[col].conj() * self.photon[(row, col)];
                    h[(r0 + row, c0 + col)] = v;
                    h[(c0 + col, r0 + row)] = v.conj();
                }
            }
        }
        for s in 0..self.m_values.len() {
            for n in 0..fd {
                h[(s * fd + n, s * fd + n)] += C64::new(diag(s, n), 0.0);
            }
        }
        h
    }

    /// `out += Σ_s c_s (|s⟩⟨s+1| ⊗ E(t) + h.c.) v`.
    fn apply_ladder(&self, t: f64, coupling: impl Fn(usize) -> C64, v: &DVector<C64>, out: &mut DVector<C64>) {
        let fd = self.fock_dim();
        let rot: Vec<C64> = (0..fd).map(|n| C64::from_polar(1.0, self.omega * t * n as f64)).collect();
        let mut w = vec![ZERO; fd];
        let mut u = vec![ZERO; fd];
        for s in 0..self.ladder.len() {
            let c = coupling(s);
            if c == ZERO {
                continue;
            }
            let (lo, hi) = (s * fd, (s + 1) * fd);
            // lower block row: c R E₀ R† v_{s+1}
            for n in 0..fd {
                w[n] = rot[n].conj() * v[hi + n];
                u[n] = ZERO;
            }
            for col in 0..fd {
                let wc = w[col];
                if wc == ZERO {
                    continue;
                }
                let column = self.photon.column(col);
                for row in 0..fd {
                    u[row] += wc * column[row];
                }
            }
            for n in 0..fd {
                out[lo + n] += c * rot[n] * u[n];
            }
            // upper block row: c* R E₀ᵀ R† v_s
            for n in 0..fd {
                w[n] = rot[n].conj() * v[lo + n];
            }
            for col in 0..fd {
                let column = self.photon.column(col);
                let mut acc = ZERO;
                for row in 0..fd {
                    acc += w[row] * column[row];
                }
                out[hi + col] += c.conj() * rot[col] * acc;
            }
        }
    }

    fn ladder_norm(&self) -> f64 {
        2.0 * self.half_omega0 * self.ladder.iter().fold(0.0f64, |a, &b| a.max(b))
    }
}

/// `H' = (ω₀/2)(e^{(g/ω)(a−a†)} J− + h.c.) + ω a†a − (g²/ω) Jx²`.
pub fn build_displaced(cfg: &ModelConfig) -> Result<OperatorMatrix> {
    let parts = DressedLadder::new(cfg)?;
    let h = parts.assemble(
        0.0,
        |s| C64::new(parts.half_omega0 * parts.ladder[s], 0.0),
        |s, n| parts.omega * n as f64 - parts.chi * parts.m_values[s].powi(2),
    );
    OperatorMatrix::new(parts.basis, h)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InteractionKind {
    /// Interaction picture of `ω a†a`.
    H2,
    /// Additionally the interaction picture of `−(g²/ω) Jx²`.
    H3,
}

/// Time-dependent `H₂(t)` or `H₃(t)`; constant blocks are precomputed and
/// only phase factors are applied per evaluation.
#[derive(Clone, Debug)]
pub struct InteractionHamiltonian {
    kind: InteractionKind,
    parts: DressedLadder,
}

impl InteractionHamiltonian {
    pub fn kind(&self) -> InteractionKind {
        self.kind
    }

    /// Mode period `2π/ω`.
    pub fn period(&self) -> f64 {
        2.0 * PI / self.parts.omega
    }

    pub fn at(&self, t: f64) -> OperatorMatrix {
        let p = &self.parts;
        let h = p.assemble(t, |s| self.coupling(s, t), |s, _| self.diag(s));
        OperatorMatrix::from_parts(p.basis, h)
    }

    fn coupling(&self, s: usize, t: f64) -> C64 {
        let p = &self.parts;
        let c = p.half_omega0 * p.ladder[s];
        match self.kind {
            InteractionKind::H2 => C64::new(c, 0.0),
            InteractionKind::H3 => C64::from_polar(c, p.chi * (2.0 * p.m_values[s] + 1.0) * t),
        }
    }

    fn diag(&self, s: usize) -> f64 {
        match self.kind {
            InteractionKind::H2 => -self.parts.chi * self.parts.m_values[s].powi(2),
            InteractionKind::H3 => 0.0,
        }
    }
}

impl TimeDependentOperator for InteractionHamiltonian {
    fn basis(&self) -> &SpinBosonBasis {
        &self.parts.basis
    }

    fn matrix_at(&self, t: f64) -> OperatorMatrix {
        self.at(t)
    }

    fn apply_at(&self, t: f64, v: &DVector<C64>, out: &mut DVector<C64>) {
        let p = &self.parts;
        let fd = p.fock_dim();
        for s in 0..p.m_values.len() {
            let d = self.diag(s);
            for n in 0..fd {
                out[s * fd + n] = v[s * fd + n] * d;
            }
        }
        p.apply_ladder(t, |s| self.coupling(s, t), v, out);
    }

    fn norm_bound(&self) -> f64 {
        let p = &self.parts;
        let jmax = p.m_values.last().copied().unwrap_or(0.0);
        let diag = match self.kind {
            InteractionKind::H2 => p.chi * jmax * jmax,
            InteractionKind::H3 => 0.0,
        };
        p.ladder_norm() + diag
    }
}

/// `H₂(t) = (ω₀/2)[e^{(g/ω)(a e^{−iωt} − a† e^{iωt})} J− + h.c.] − (g²/ω) Jx²`.
pub fn build_h2(cfg: &ModelConfig) -> Result<InteractionHamiltonian> {
    Ok(InteractionHamiltonian { kind: InteractionKind::H2, parts: DressedLadder::new(cfg)? })
}

/// `H₃(t) = (ω₀/2) e^{(g/ω)(a e^{−iωt} − a† e^{iωt})} e^{i(g²/ω)(2Jx+1)t} J− + h.c.`
pub fn build_h3(cfg: &ModelConfig) -> Result<InteractionHamiltonian> {
    Ok(InteractionHamiltonian { kind: InteractionKind::H3, parts: DressedLadder::new(cfg)? })
}

/// Photon-number change accompanying `|m+1⟩ → |m⟩` at resonance `k`: `(2m+1)k`.
pub fn resonant_photon_shift(m: HalfInteger, k: u32) -> i64 {
    m.twice_plus_one() * k as i64
}

/// Photon factor attached to `P_m J− P_{m+1}` in the secular Hamiltonian:
/// `Ω^Δ a^Δ` for `Δ > 0`, `(−1)^Δ a†^{|Δ|} Ω^{|Δ|}` for `Δ < 0`, `Ω^0` for `Δ = 0`.
fn secular_photon_factor(n_max: usize, shift: i64, beta: f64) -> Result<OperatorMatrix> {
    let fock = SpinBosonBasis::fock_only(n_max);
    let p = shift.unsigned_abs() as usize;
    let omega = omega_diag_operator(&fock, p, beta)?;
    if p == 0 {
        return Ok(omega);
    }
    if p > n_max {
        return Ok(OperatorMatrix::zeros(fock));
    }
    let bos = boson_operators(n_max)?;
    let ladder = if shift > 0 { &bos.a } else { &bos.adag };
    let mut power = OperatorMatrix::identity(fock);
    for _ in 0..p {
        power = &power * ladder;
    }
    if shift > 0 {
        Ok(&omega * &power)
    } else {
        let sign = if p % 2 == 1 { -1.0 } else { 1.0 };
        Ok((&power * &omega).scale_real(sign))
    }
}

/// Secular average of `H₃` at `g = ω√k`, for any `J`.
///
/// Every transition `m+1 → m` keeps the Fourier component of photon shift
/// `Δ = (2m+1)k`; the term `P_J J−` is absent because nothing lowers into
/// `Jx = J` from above.
pub fn build_effective_resonant(cfg: &ModelConfig, k: u32) -> Result<OperatorMatrix> {
    cfg.validate()?;
    ResonanceIndex::new(k)?;
    let spin = spin_operators(cfg.j)?;
    let basis = cfg.basis()?;
    let mut h = OperatorMatrix::zeros(basis);
    let ms: Vec<HalfInteger> = cfg.j.magnetic_values().collect();
    for pair in ms.windows(2) {
        let (m, m_up) = (pair[0], pair[1]);
        let spin_part = &(&spin_projector(cfg.j, m)? * &spin.jminus) * &spin_projector(cfg.j, m_up)?;
        let photon = secular_photon_factor(cfg.n_max, resonant_photon_shift(m, k), cfg.beta())?;
        let term = spin_part.kron(&photon)?.scale_real(0.5 * cfg.omega0);
        h = &(&h + &term) + &term.adjoint();
    }
    Ok(h)
}

/// Resonant deep-strong-coupling Hamiltonian for integer `J` at `g = ω√k`.
pub fn build_effective_dsc(cfg: &ModelConfig, k: u32) -> Result<OperatorMatrix> {
    cfg.validate()?;
    if !cfg.j.is_integer() {
        return Err(Error::NotInteger(cfg.j));
    }
    let ratio = cfg.resonance_ratio();
    if (ratio - k as f64).abs() > DEFAULT_RESONANCE_TOL {
        return Err(Error::OffResonance { ratio, tol: DEFAULT_RESONANCE_TOL });
    }
    build_effective_resonant(cfg, k)
}

/// `(ω₀/2) Ω_n̂^0 (P_{−1/2} J− P_{1/2} + P_{1/2} J+ P_{−1/2})`, any `g`.
pub fn build_effective_half_integer(cfg: &ModelConfig) -> Result<OperatorMatrix> {
    cfg.validate()?;
    if cfg.j.is_integer() {
        return Err(Error::NotHalfInteger(cfg.j));
    }
    let spin = spin_operators(cfg.j)?;
    let lo = spin_projector(cfg.j, HalfInteger::from_twice(-1))?;
    let up = spin_projector(cfg.j, HalfInteger::from_twice(1))?;
    let spin_part = &(&lo * &spin.jminus) * &up;
    let omega = omega_diag_operator(&SpinBosonBasis::fock_only(cfg.n_max), 0, cfg.beta())?;
    let term = spin_part.kron(&omega)?.scale_real(0.5 * cfg.omega0);
    Ok(&term + &term.adjoint())
}

/// `ω₀ Ω_n̂^0 Jz − (g²/ω) Jx²`: an LMG Hamiltonian in every Fock block.
pub fn build_effective_lmg(cfg: &ModelConfig) -> Result<OperatorMatrix> {
    cfg.validate()?;
    let spin = spin_operators(cfg.j)?;
    let omega = omega_diag_operator(&SpinBosonBasis::fock_only(cfg.n_max), 0, cfg.beta())?;
    let precession = spin.jz.kron(&omega)?.scale_real(cfg.omega0);
    let twist = (&spin.jx * &spin.jx).spin_to_product(cfg.n_max)?.scale_real(cfg.chi());
    Ok(&precession - &twist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::omega_coeff;
    use crate::hilbert::displacement_operator;

    fn hi(s: &str) -> HalfInteger {
        s.parse().unwrap()
    }

    fn sorted_eigs(op: &OperatorMatrix) -> Vec<f64> {
        let mut v: Vec<f64> = op.entries().clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn frame_names_round_trip() {
        for f in Frame::ALL {
            assert_eq!(f.name().parse::<Frame>().unwrap(), f);
        }
        assert!("rotating".parse::<Frame>().is_err());
    }

    #[test]
    fn cutoff_heuristic() {
        let cfg = ModelConfig::new(HalfInteger::from_int(2), 1.0, 0.1, 10).with_frame(Frame::Displaced);
        // k = 1, chain extent 4, ceil(4 + 12) = 16
        assert_eq!(cfg.required_cutoff(0), 20);
        assert!(matches!(build_displaced(&cfg), Err(Error::CutoffTooSmall { required: 20, .. })));
        // lab frame: r = 2 + 2, ceil(16 + 12) + 6
        assert_eq!(cfg.with_frame(Frame::Lab).required_cutoff(0), 34);
        assert!(matches!(build_dicke(&cfg), Err(Error::CutoffTooSmall { required: 34, .. })));
        let cfg = ModelConfig::new(HalfInteger::from_int(4), 1.0, 0.01, 0);
        assert_eq!(cfg.required_cutoff(0), 94);
        let cfg = ModelConfig::new(hi("3/2"), 1.0, 0.1, 0);
        assert_eq!(cfg.chain_extent(1), 2);
        let cfg = ModelConfig::new(HalfInteger::from_int(1), 5f64.sqrt(), 0.1, 60);
        assert_eq!(cfg.chain_extent(cfg.nearest_k()), 5);
        assert!(cfg.check_cutoff(0).is_ok());
        // |Jz = 0⟩ has weight on Jx = ±2: r = 2 + 1.2·2 + 1.2·2 = 6.8, ceil(46.24 + 20.4) + 6
        let cfg = ModelConfig::new(HalfInteger::from_int(2), 1.2, 0.01, 0);
        assert_eq!(cfg.required_cutoff_spread(0, 2.0), 73);
        assert_eq!(cfg.required_cutoff_spread(0, 0.0), cfg.required_cutoff(0));
    }

    #[test]
    fn resonance_detection() {
        let cfg = ModelConfig::new(HalfInteger::from_int(1), 5f64.sqrt(), 0.1, 60);
        assert_eq!(cfg.resonance(DEFAULT_RESONANCE_TOL).unwrap().get(), 5);
        let off = ModelConfig { g: 1.2, ..cfg };
        assert!(matches!(off.resonance(DEFAULT_RESONANCE_TOL), Err(Error::OffResonance { .. })));
        let tiny = ModelConfig { g: 0.05, ..cfg };
        assert!(tiny.resonance(0.1).is_err());
    }

    #[test]
    fn dicke_trivial_limits() {
        let cfg = ModelConfig::new(HalfInteger::from_int(1), 0.0, 0.0, 6);
        let h = build_dicke(&cfg).unwrap();
        assert!(h.flags().diagonal);
        for (i, (_, n)) in h.basis().labels().enumerate() {
            assert_eq!(h.get(i, i).re, n as f64);
        }

        let cfg = ModelConfig::new(HalfInteger::HALF, 0.4, 0.3, 12);
        let h = build_dicke(&cfg).unwrap();
        assert_eq!(h.dim(), 26);
        assert_eq!(h.hermiticity_error(), 0.0);
        // ⟨−1/2, 0| H |−1/2, 1⟩ = g·(−1/2)
        let e = h.element((hi("-1/2"), 0), (hi("-1/2"), 1)).unwrap();
        assert!((e.re + 0.2).abs() < 1e-15);
        // ⟨−1/2, n| H |1/2, n⟩ = ω₀/2
        let e = h.element((hi("-1/2"), 3), (hi("1/2"), 3)).unwrap();
        assert!((e.re - 0.15).abs() < 1e-15);
    }

    #[test]
    fn displaced_is_diagonal_without_qubit_frequency() {
        let cfg = ModelConfig::new(HalfInteger::from_int(2), 5f64.sqrt(), 0.0, 70);
        let h = build_displaced(&cfg).unwrap();
        assert!(h.flags().diagonal);
        for (i, (m, n)) in h.basis().labels().enumerate() {
            let expected = n as f64 - 5.0 * m.value() * m.value();
            assert!((h.get(i, i).re - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn displaced_reduces_to_bare_model_at_zero_coupling() {
        let cfg = ModelConfig::new(hi("3/2"), 0.0, 0.37, 8);
        let a = build_displaced(&cfg).unwrap();
        let b = build_dicke(&cfg).unwrap();
        assert!(a.max_diff(&b).unwrap() < 1e-14);
    }

    /// Interior block of `D H D†` against the closed-form `H'`.
    #[test]
    fn displaced_equals_conjugated_lab_hamiltonian() {
        let j = HalfInteger::from_int(1);
        let (g, omega0) = (1.3, 0.4);
        let n_big = 90;
        let big = ModelConfig::new(j, g, omega0, n_big);
        let h = build_dicke(&big).unwrap();
        let d = displacement_operator(j, n_big, |m| g * m.value()).unwrap();
        let conj = &(&d * &h) * &d.adjoint();

        let n_small = 40;
        let small = ModelConfig::new(j, g, omega0, n_small);
        let hp = build_displaced(&small).unwrap();
        let basis_big = big.basis().unwrap();
        let mut err = 0.0f64;
        for (r, (m1, n1)) in hp.basis().labels().enumerate() {
            for (c, (m2, n2)) in hp.basis().labels().enumerate() {
                if n1 > 30 || n2 > 30 {
                    continue;
                }
                let rb = basis_big.index(m1, n1).unwrap();
                let cb = basis_big.index(m2, n2).unwrap();
                err = err.max((conj.get(rb, cb) - hp.get(r, c)).norm());
            }
        }
        assert!(err < 1e-8, "max deviation {err:e}");
    }

    #[test]
    fn lab_and_displaced_spectra_agree_without_qubit_frequency() {
        let cfg = ModelConfig::new(HalfInteger::from_int(1), 1.0, 0.0, 60);
        let lab = sorted_eigs(&build_dicke(&cfg).unwrap());
        let disp = sorted_eigs(&build_displaced(&cfg).unwrap());
        for i in 0..20 {
            assert!((lab[i] - disp[i]).abs() < 1e-8, "{i}: {} vs {}", lab[i], disp[i]);
        }
        // ωn − (g²/ω)m²: lowest is −1 twice (m = ±1, n = 0)
        assert!((disp[0] + 1.0).abs() < 1e-12 && (disp[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn h2_at_zero_and_limits() {
        let cfg = ModelConfig::new(HalfInteger::from_int(1), 1.1, 0.2, 30);
        let h2 = build_h2(&cfg).unwrap();
        let hp = build_displaced(&cfg).unwrap();
        let num = boson_operators(30).unwrap().number.fock_to_product(cfg.j).unwrap();
        assert!(h2.at(0.0).max_diff(&(&hp - &num)).unwrap() < 1e-14);

        let h3 = build_h3(&cfg).unwrap();
        let jx = spin_operators(cfg.j).unwrap().jx.spin_to_product(30).unwrap();
        let jx2 = (&jx * &jx).scale_real(cfg.chi());
        assert!(h3.at(0.0).max_diff(&(&h2.at(0.0) + &jx2)).unwrap() < 1e-14);

        for &t in &[0.3, 1.7, 5.2] {
            assert_eq!(h2.at(t).hermiticity_error(), 0.0);
            assert_eq!(h3.at(t).hermiticity_error(), 0.0);
            let shifted = h2.at(t + h2.period());
            assert!(shifted.max_diff(&h2.at(t)).unwrap() < 1e-12);
        }

        let quiet = ModelConfig { omega0: 0.0, ..cfg };
        let h2q = build_h2(&quiet).unwrap();
        assert!(h2q.at(2.3).max_diff(&jx2.scale_real(-1.0)).unwrap() < 1e-14);
        assert_eq!(build_h3(&quiet).unwrap().at(1.1).max_abs(), 0.0);
    }

    #[test]
    fn apply_matches_dense_evaluation() {
        let cfg = ModelConfig::new(hi("3/2"), 0.9, 0.3, 20);
        for h in [build_h2(&cfg).unwrap(), build_h3(&cfg).unwrap()] {
            let v = DVector::from_fn(h.basis().dim(), |i, _| C64::new((0.3 * i as f64).sin(), (0.7 * i as f64).cos()));
            for &t in &[0.0, 0.41, 3.3] {
                let mut out = DVector::zeros(v.len());
                h.apply_at(t, &v, &mut out);
                let dense = h.at(t).entries() * &v;
                assert!((out - dense).camax() < 1e-12);
            }
        }
    }

    #[test]
    fn h2_period_average_is_lmg() {
        let cfg = ModelConfig::new(HalfInteger::from_int(2), 0.07, 0.01, 12);
        let h2 = build_h2(&cfg).unwrap();
        let samples = 64;
        let mut acc = OperatorMatrix::zeros(cfg.basis().unwrap());
        for i in 0..samples {
            acc = &acc + &h2.at(h2.period() * i as f64 / samples as f64);
        }
        let avg = acc.scale_real(1.0 / samples as f64);
        let lmg = build_effective_lmg(&cfg).unwrap();
        assert!(avg.max_diff(&lmg).unwrap() < 1e-6);
    }

    #[test]
    fn effective_dsc_j2_k1_chain_pattern() {
        let cfg = ModelConfig::new(HalfInteger::from_int(2), 1.0, 0.1, 12);
        let h = build_effective_dsc(&cfg, 1).unwrap();
        assert_eq!(h.hermiticity_error(), 0.0);
        let chain = [(-2, 4), (-1, 1), (0, 0), (1, 1), (2, 4)];
        let idx = |(m, n): (i64, usize)| h.basis().index(HalfInteger::from_int(m), n).unwrap();
        for w in chain.windows(2) {
            assert!(h.get(idx(w[0]), idx(w[1])).norm() > 1e-4);
        }
        // nothing else couples to the n = 0 chain
        let members: Vec<usize> = chain.iter().map(|&c| idx(c)).collect();
        for &r in &members {
            for c in 0..h.dim() {
                if !members.contains(&c) {
                    assert_eq!(h.get(r, c), ZERO);
                }
            }
        }
        // the 1 → 0 step: (ω₀/2) Ω_0^1 √1 ⟨0|J−|1⟩
        let expected = 0.05 * omega_coeff(0, 1, 1.0) * 6f64.sqrt();
        assert!((h.get(idx((0, 0)), idx((1, 1))).re - expected).abs() < 1e-14);
        // creation side (−1)^k sign, k = 1
        assert!((h.get(idx((-1, 1)), idx((0, 0))).re + expected).abs() < 1e-14);
    }

    #[test]
    fn effective_dsc_errors_and_trivial_limit() {
        let cfg = ModelConfig::new(hi("3/2"), 1.0, 0.1, 8);
        assert!(matches!(build_effective_dsc(&cfg, 1), Err(Error::NotInteger(_))));
        let cfg = ModelConfig::new(HalfInteger::from_int(1), 1.2, 0.1, 8);
        assert!(matches!(build_effective_dsc(&cfg, 1), Err(Error::OffResonance { .. })));
        let cfg = ModelConfig::new(HalfInteger::from_int(1), 1.0, 0.0, 8);
        assert_eq!(build_effective_dsc(&cfg, 1).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn effective_dsc_j1_k5_three_state_chain() {
        let cfg = ModelConfig::new(HalfInteger::from_int(1), 5f64.sqrt(), 0.1, 12);
        let h = build_effective_dsc(&cfg, 5).unwrap();
        let idx = |m: i64, n: usize| h.basis().index(HalfInteger::from_int(m), n).unwrap();
        let up = h.get(idx(0, 0), idx(1, 5));
        let down = h.get(idx(0, 0), idx(-1, 5));
        assert!((up.norm() - down.norm()).abs() < 1e-15);
        // 3×3 block: |0,0⟩ couples with strength c to both sides; eigenvalues 0, ±√2 c
        let c = up.norm();
        let ids = [idx(-1, 5), idx(0, 0), idx(1, 5)];
        let block = DMatrix::from_fn(3, 3, |r, s| h.get(ids[r], ids[s]));
        let mut ev: Vec<f64> = block.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] + 2f64.sqrt() * c).abs() < 1e-14);
        assert!(ev[1].abs() < 1e-14);
        assert!((ev[2] - 2f64.sqrt() * c).abs() < 1e-14);
    }

    #[test]
    fn half_integer_effective_structure() {
        let cfg = ModelConfig::new(hi("3/2"), 1.37, 0.1, 6);
        let h = build_effective_half_integer(&cfg).unwrap();
        let num = boson_operators(6).unwrap().number.fock_to_product(cfg.j).unwrap();
        let comm = &(&h * &num) - &(&num * &h);
        assert!(comm.max_abs() < 1e-15);
        for n in 0..=6 {
            for m in ["-3/2", "3/2"] {
                let r = h.basis().index(hi(m), n).unwrap();
                assert!((0..h.dim()).all(|c| h.get(r, c) == ZERO));
            }
            let e = h.element((hi("-1/2"), n), (hi("1/2"), n)).unwrap();
            assert!((e.re - 0.05 * 2.0 * omega_coeff(n, 0, 1.37)).abs() < 1e-15);
        }
        let err = build_effective_half_integer(&ModelConfig::new(HalfInteger::from_int(1), 1.0, 0.1, 4));
        assert!(matches!(err, Err(Error::NotHalfInteger(_))));

        // J = 1/2: single-qubit Rabi effective model (ω₀/2) Ω_n^0 σ_z-like coupling
        let cfg = ModelConfig::new(HalfInteger::HALF, 0.8, 0.2, 4);
        let h = build_effective_half_integer(&cfg).unwrap();
        let full_jz = spin_operators(cfg.j).unwrap().jz;
        let omega = omega_diag_operator(&SpinBosonBasis::fock_only(4), 0, 0.8).unwrap();
        let expected = full_jz.kron(&omega).unwrap().scale_real(0.2);
        assert!(h.max_diff(&expected).unwrap() < 1e-15);
    }

    #[test]
    fn lmg_blocks() {
        let cfg = ModelConfig::new(HalfInteger::from_int(2), 0.0, 0.02, 3);
        let h = build_effective_lmg(&cfg).unwrap();
        let jz = spin_operators(cfg.j).unwrap().jz.spin_to_product(3).unwrap().scale_real(0.02);
        assert!(h.max_diff(&jz).unwrap() < 1e-15);

        let beta = 0.3;
        let cfg = ModelConfig::new(HalfInteger::from_int(2), beta, 0.02, 3);
        let h = build_effective_lmg(&cfg).unwrap();
        let e0 = h.element((HalfInteger::ZERO, 0), (HalfInteger::from_int(1), 0)).unwrap().re;
        let e1 = h.element((HalfInteger::ZERO, 1), (HalfInteger::from_int(1), 1)).unwrap().re;
        assert!((e1 / e0 - (1.0 - beta * beta)).abs() < 1e-13);
        // Fock blocks do not talk to each other
        for (r, (_, n1)) in h.basis().labels().enumerate() {
            for (c, (_, n2)) in h.basis().labels().enumerate() {
                if n1 != n2 {
                    assert_eq!(h.get(r, c), ZERO);
                }
            }
        }
    }
}
