//! Closed-form depopulation predictions near `g² = kω²`, numerical
//! extraction of `P_min` and oscillation frequency from survival curves, and
//! resonance scans that put the two side by side.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonians::{build_dicke, ModelConfig};
use crate::hilbert::{basis_state, HalfInteger};
use crate::propagate::{static_survival, TimeGrid, TimeSeries};

/// Environment variable capping the worker count of parallel scans.
pub const THREADS_ENV: &str = "DICKE_THREADS";

/// `4ω²ω₀² (g/ω)^{2k} e^{−g²/ω²} / k!`
pub fn resonance_gap(g: f64, k: u32, omega: f64, omega0: f64) -> f64 {
    let beta = g / omega;
    let ln_fact: f64 = (1..=k).map(|i| (i as f64).ln()).sum();
    let ln_beta_pow = if beta == 0.0 { f64::NEG_INFINITY } else { 2.0 * k as f64 * beta.abs().ln() };
    4.0 * omega * omega * omega0 * omega0 * (ln_beta_pow - beta * beta - ln_fact).exp()
}

/// `g² − kω²`, snapped to zero within the round-off of squaring `g = ω√k`.
fn detuning(g: f64, k: u32, omega: f64) -> f64 {
    let target = k as f64 * omega * omega;
    let d = g * g - target;
    if d.abs() <= 8.0 * f64::EPSILON * target {
        0.0
    } else {
        d
    }
}

/// `Δ²/(Δ² + gap)` with `Δ = g² − kω²`.
pub fn pmin_analytic(g: f64, k: u32, omega: f64, omega0: f64) -> f64 {
    let d = detuning(g, k, omega);
    if d == 0.0 {
        return 0.0;
    }
    d * d / (d * d + resonance_gap(g, k, omega, omega0))
}

/// `½√(Δ² + gap)`.
pub fn shifted_frequency(detuning: f64, gap: f64) -> f64 {
    0.5 * (detuning * detuning + gap).sqrt()
}

/// Shifted oscillation frequency near the `k`-th resonance.
///
/// The survival probability oscillates at twice this angular frequency;
/// [`oscillation_frequency`] reports numerical values on the same scale.
pub fn freq_analytic(g: f64, k: u32, omega: f64, omega0: f64) -> f64 {
    shifted_frequency(detuning(g, k, omega), resonance_gap(g, k, omega, omega0))
}

/// Minimum of `P(t)`, skipping the first 1% of samples.
pub fn p_min(p: &TimeSeries) -> f64 {
    let skip = p.values.len() / 100;
    p.values[skip..].iter().copied().fold(f64::INFINITY, f64::min)
}

/// Centered moving average over `width` samples (shrinking at the ends).
pub fn moving_average(values: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    let mut prefix = Vec::with_capacity(values.len() + 1);
    prefix.push(0.0);
    for v in values {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..values.len())
        .map(|i| {
            let (a, b) = (i.saturating_sub(half), (i + half + 1).min(values.len()));
            (prefix[b] - prefix[a]) / (b - a) as f64
        })
        .collect()
}

/// Dips of `P(t)` after averaging out micromotion over `window` time units.
///
/// A local minimum counts when it lies below `depth` and the averaged curve
/// climbs at least `prominence` above it on both sides before dropping lower.
/// Returns `(t, averaged P)` pairs.
pub fn principal_minima(p: &TimeSeries, window: f64, depth: f64, prominence: f64) -> Vec<(f64, f64)> {
    let width = ((window / p.grid.spacing()).round() as usize).max(1);
    let s = moving_average(&p.values, width);
    let mut out = Vec::new();
    for i in 1..s.len().saturating_sub(1) {
        if !(s[i] < s[i - 1] && s[i] <= s[i + 1]) || s[i] >= depth {
            continue;
        }
        let left = s[..i].iter().rev().take_while(|&&v| v >= s[i]).fold(s[i], |m, &v| m.max(v));
        let right = s[i + 1..].iter().take_while(|&&v| v >= s[i]).fold(s[i], |m, &v| m.max(v));
        if left.min(right) - s[i] >= prominence {
            out.push((p.grid.time(i), s[i]));
        }
    }
    out
}

/// Angular frequency of the strongest spectral line of `values` below `max_angular`.
///
/// The signal is mean-subtracted, Hann-windowed and zero-padded eightfold; the
/// peak is refined by a parabola through the log power of its neighbours.
/// Lines slower than two cycles per record are ignored. `None` for a flat signal.
pub fn spectral_peak(values: &[f64], dt: f64, max_angular: f64) -> Option<f64> {
    let n = values.len();
    if n < 4 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let nfft = (n.next_power_of_two() * 8).max(64);
    let mut buf: Vec<Complex<f64>> = values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let w = 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos();
            Complex::new((v - mean) * w, 0.0)
        })
        .collect();
    buf.resize(nfft, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(nfft).process(&mut buf);
    let power: Vec<f64> = buf[..nfft / 2].iter().map(|c| c.norm_sqr()).collect();

    let bin = 2.0 * PI / (nfft as f64 * dt);
    let record = n as f64 * dt;
    let lo = ((2.0 * 2.0 * PI / record) / bin).ceil() as usize;
    let hi = ((max_angular / bin).floor() as usize).min(power.len() - 2);
    if lo.max(1) > hi {
        return None;
    }
    let (peak, &best) =
        power.iter().enumerate().take(hi + 1).skip(lo.max(1)).max_by(|a, b| a.1.total_cmp(b.1))?;
    if best <= 1e-30 * n as f64 {
        return None;
    }
    let (a, b, c) = (power[peak - 1].max(1e-300).ln(), best.ln(), power[peak + 1].max(1e-300).ln());
    let denom = a - 2.0 * b + c;
    let shift = if denom.abs() > 0.0 { (0.5 * (a - c) / denom).clamp(-0.5, 0.5) } else { 0.0 };
    Some((peak as f64 + shift) * bin)
}

/// Dominant oscillation of a survival curve, halved to match [`freq_analytic`].
pub fn oscillation_frequency(p: &TimeSeries, max_angular: f64) -> Option<f64> {
    spectral_peak(&p.values, p.grid.spacing(), max_angular).map(|w| 0.5 * w)
}

/// Thread pool sized by `DICKE_THREADS` (all cores when unset or invalid).
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let threads = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanSettings {
    pub j: HalfInteger,
    pub omega0: f64,
    /// `None` picks the cutoff heuristic of [`ModelConfig::required_cutoff`].
    pub n_max: Option<usize>,
    /// Lower bound on the horizon, in mode cycles.
    pub horizon_cycles: f64,
    /// The horizon is stretched to cover at least this many predicted oscillations.
    pub min_periods: f64,
    pub samples_per_cycle: usize,
    /// Upper edge of the frequency search band for the survival curve, in units of ω.
    pub max_angular: f64,
}

impl ScanSettings {
    pub fn new(j: HalfInteger, omega0: f64) -> Self {
        ScanSettings {
            j,
            omega0,
            n_max: None,
            horizon_cycles: 0.0,
            min_periods: 8.0,
            samples_per_cycle: 8,
            max_angular: 0.5,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub k: u32,
    pub g_values: Vec<f64>,
    pub p_min_numeric: Vec<f64>,
    pub p_min_analytic: Vec<f64>,
    /// `NaN` where the survival curve has no resolvable oscillation.
    pub freq_numeric: Vec<f64>,
    pub freq_analytic: Vec<f64>,
    pub horizons: Vec<f64>,
    pub n_max: Vec<usize>,
}

fn scan_cutoff(settings: &ScanSettings, k: u32, g: f64) -> usize {
    settings.n_max.unwrap_or_else(|| {
        ModelConfig::new(settings.j, g, settings.omega0, 1).required_cutoff(0).max(4 * k as usize + 8)
    })
}

/// Survival curve of `|Jx=0, n=0⟩` under the lab-frame Hamiltonian for one scan point.
pub fn scan_point_survival(settings: &ScanSettings, k: u32, g: f64) -> Result<TimeSeries> {
    let cfg = ModelConfig::new(settings.j, g, settings.omega0, scan_cutoff(settings, k, g));
    let h = build_dicke(&cfg)?;
    let psi0 = basis_state(h.basis(), HalfInteger::ZERO, 0)?;
    let predicted = 2.0 * freq_analytic(g, k, cfg.omega, settings.omega0);
    let horizon = (settings.horizon_cycles * cfg.period()).max(settings.min_periods * 2.0 * PI / predicted);
    let cycles = horizon / cfg.period();
    let samples = ((cycles * settings.samples_per_cycle as f64).ceil() as usize).max(256) + 1;
    let grid = TimeGrid::new(0.0, horizon, samples)?;
    static_survival(&h, &psi0, &grid)
}

/// Exact `P_min` and oscillation frequency at every `g`, paired with the
/// closed forms. Points run in parallel; results keep grid order.
pub fn scan_resonance(settings: &ScanSettings, k: u32, g_grid: &[f64]) -> Result<ScanResult> {
    if k == 0 {
        return Err(Error::InvalidParameter("resonance index k must be at least 1".into()));
    }
    let pool = worker_pool()?;
    let points: Vec<Result<(f64, f64, f64, usize)>> = pool.install(|| {
        g_grid
            .par_iter()
            .map(|&g| {
                let p = scan_point_survival(settings, k, g)?;
                let freq = oscillation_frequency(&p, settings.max_angular).unwrap_or(f64::NAN);
                Ok((p_min(&p), freq, p.grid.t_end, scan_cutoff(settings, k, g)))
            })
            .collect()
    });
    let mut out = ScanResult { k, ..Default::default() };
    for (&g, point) in g_grid.iter().zip(points) {
        let (pmin, freq, horizon, n_max) = point?;
        out.g_values.push(g);
        out.p_min_numeric.push(pmin);
        out.p_min_analytic.push(pmin_analytic(g, k, 1.0, settings.omega0));
        out.freq_numeric.push(freq);
        out.freq_analytic.push(freq_analytic(g, k, 1.0, settings.omega0));
        out.horizons.push(horizon);
        out.n_max.push(n_max);
    }
    Ok(out)
}

/// How the coupling bound counts the atoms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundReading {
    /// `(g/ω)² N² ≤ 0.1` with `N = 2J`
    #[default]
    AtomNumber,
    /// `(g/ω)² J² ≤ 0.1`
    SpinLength,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidityBounds {
    pub ok: bool,
    /// Largest ω₀ with `2ω₀J ≤ 0.1ω`.
    pub omega0_bound: f64,
    /// Largest g allowed by the coupling bound.
    pub g_bound: f64,
    /// `ω₀ / omega0_bound`; at most 1 inside the regime.
    pub omega0_margin: f64,
    /// `g / g_bound`
    pub g_margin: f64,
}

/// Perturbative-regime bounds `2ω₀J ≲ 0.1ω` and `(g/ω)² N² ≲ 0.1`.
pub fn validity_bounds(j: HalfInteger, omega: f64, omega0: f64, g: f64, reading: BoundReading) -> ValidityBounds {
    let two_j = j.twice() as f64;
    let omega0_bound = if two_j == 0.0 { f64::INFINITY } else { 0.1 * omega / two_j };
    let count = match reading {
        BoundReading::AtomNumber => two_j,
        BoundReading::SpinLength => j.value(),
    };
    let g_bound = if count == 0.0 { f64::INFINITY } else { omega * 0.1f64.sqrt() / count };
    let omega0_margin = omega0 / omega0_bound;
    let g_margin = g / g_bound;
    ValidityBounds { ok: omega0_margin <= 1.0 && g_margin <= 1.0, omega0_bound, g_bound, omega0_margin, g_margin }
}

/// `√(ω₀ω/N)`
pub fn g_crit(omega: f64, omega0: f64, n_atoms: u32) -> f64 {
    (omega0 * omega / n_atoms as f64).sqrt()
}
