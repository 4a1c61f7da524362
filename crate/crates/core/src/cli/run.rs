//! `simulate` and `compare` as library calls: propagate, stream observables,
//! collect diagnostics. Nothing here touches the filesystem.

use serde::{Deserialize, Serialize};

use super::config::{EffectiveChoice, InitBasis, RunConfig};
use crate::analysis::{freq_analytic, pmin_analytic};
use crate::error::{Error, Result};
use crate::hamiltonians::{
    build_dicke, build_displaced, build_effective_dsc, build_effective_half_integer, build_effective_lmg,
    build_effective_resonant, build_h2, build_h3, Frame, ModelConfig, DEFAULT_RESONANCE_TOL,
};
use crate::hilbert::{basis_state, OperatorMatrix, SpinBasisChange, StateVector};
use crate::propagate::{
    evolve_static_with, evolve_timedep, jz_expectation, photon_probability_at_most, SpectralPropagator, StaticMethod,
    StepControl, TimeDependentOperator, TimeGrid, DENSE_DIM_LIMIT,
};

/// Largest `|‖ψ‖ − 1|` a run may report.
pub const NORM_DRIFT_LIMIT: f64 = 1e-8;
/// Largest `‖H − H†‖` a run may report.
pub const HERMITICITY_LIMIT: f64 = 1e-12;
/// Largest population allowed in the top [`TAIL_LEVELS`] Fock levels.
pub const TAIL_MASS_LIMIT: f64 = 1e-6;
pub const TAIL_LEVELS: usize = 2;

/// The effective model actually run after resolving [`EffectiveChoice::Auto`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EffectiveModel {
    Dsc { k: u32 },
    Resonant { k: u32 },
    HalfInteger,
    Lmg,
    TwoLevel { k: u32 },
    QubitFree,
}

impl EffectiveModel {
    /// Frame the effective Hamiltonian lives in; `None` for closed forms and
    /// for the `ω₀ = 0` reference, which runs in the exact frame.
    pub fn frame(self) -> Option<Frame> {
        match self {
            EffectiveModel::Dsc { .. } | EffectiveModel::Resonant { .. } => Some(Frame::EffectiveDsc),
            EffectiveModel::HalfInteger => Some(Frame::EffectiveHalfInteger),
            EffectiveModel::Lmg => Some(Frame::EffectiveLmg),
            EffectiveModel::TwoLevel { .. } | EffectiveModel::QubitFree => None,
        }
    }

    pub fn name(self) -> String {
        match self {
            EffectiveModel::Dsc { k } => format!("dsc(k={k})"),
            EffectiveModel::Resonant { k } => format!("resonant(k={k})"),
            EffectiveModel::HalfInteger => "half-integer".into(),
            EffectiveModel::Lmg => "lmg".into(),
            EffectiveModel::TwoLevel { k } => format!("two-level(k={k})"),
            EffectiveModel::QubitFree => "qubit-free".into(),
        }
    }
}

/// Picks the effective model for `cfg`; see [`EffectiveChoice::Auto`].
pub fn resolve_effective(cfg: &RunConfig) -> Result<EffectiveModel> {
    let g = cfg.coupling()?;
    let ratio = g * g;
    let k = cfg.k.unwrap_or_else(|| ratio.round().max(1.0) as u32);
    let on_resonance = (ratio - k as f64).abs() <= DEFAULT_RESONANCE_TOL;
    Ok(match cfg.effective_model {
        EffectiveChoice::Auto if ratio < 0.25 => EffectiveModel::Lmg,
        EffectiveChoice::Auto if on_resonance && cfg.j.is_integer() => EffectiveModel::Dsc { k },
        EffectiveChoice::Auto if on_resonance => EffectiveModel::Resonant { k },
        EffectiveChoice::Auto if !cfg.j.is_integer() => EffectiveModel::HalfInteger,
        EffectiveChoice::Auto => EffectiveModel::TwoLevel { k },
        EffectiveChoice::Dsc => EffectiveModel::Dsc { k },
        EffectiveChoice::Resonant => EffectiveModel::Resonant { k },
        EffectiveChoice::HalfInteger => EffectiveModel::HalfInteger,
        EffectiveChoice::Lmg => EffectiveModel::Lmg,
        EffectiveChoice::TwoLevel => EffectiveModel::TwoLevel { k },
        EffectiveChoice::QubitFree => EffectiveModel::QubitFree,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub method: String,
    pub hermiticity_error: f64,
    pub norm_drift: f64,
    /// Max over samples of the population in the top Fock levels of the propagated state.
    pub cutoff_tail_mass: f64,
    pub final_step: Option<f64>,
    pub step_change: Option<f64>,
}

impl Diagnostics {
    /// Contract violations, if any.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.norm_drift <= NORM_DRIFT_LIMIT) {
            out.push(format!("norm drift {:e} > {:e}", self.norm_drift, NORM_DRIFT_LIMIT));
        }
        if !(self.hermiticity_error <= HERMITICITY_LIMIT) {
            out.push(format!("hermiticity error {:e} > {:e}", self.hermiticity_error, HERMITICITY_LIMIT));
        }
        if !(self.cutoff_tail_mass <= TAIL_MASS_LIMIT) {
            out.push(format!("cutoff tail mass {:e} > {:e}", self.cutoff_tail_mass, TAIL_MASS_LIMIT));
        }
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunDiagnostics {
    pub exact: Diagnostics,
    pub effective: Option<Diagnostics>,
}

impl RunDiagnostics {
    pub fn violations(&self) -> Vec<String> {
        let mut out = self.exact.violations();
        if let Some(eff) = &self.effective {
            out.extend(eff.violations().into_iter().map(|v| format!("effective: {v}")));
        }
        out
    }
}

/// Lab-frame observables on the sample grid.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Observables {
    pub survival: Vec<f64>,
    pub photon_cdf: [Vec<f64>; 3],
    pub jz: Vec<f64>,
}

impl Observables {
    fn with_capacity(n: usize) -> Self {
        Observables {
            survival: Vec::with_capacity(n),
            photon_cdf: std::array::from_fn(|_| Vec::with_capacity(n)),
            jz: Vec::with_capacity(n),
        }
    }

    fn record(&mut self, psi0: &StateVector, lab: &StateVector) {
        let overlap = psi0.amplitudes().dotc(lab.amplitudes());
        self.survival.push(overlap.norm_sqr().min(1.0));
        for (level, cdf) in self.photon_cdf.iter_mut().enumerate() {
            cdf.push(photon_probability_at_most(lab, level));
        }
        self.jz.push(jz_expectation(lab));
    }
}

/// A finished run: resolved configuration, sample times, named columns.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub config: RunConfig,
    pub model: ModelConfig,
    pub effective: Option<EffectiveModel>,
    pub times: Vec<f64>,
    pub columns: Vec<(String, Vec<f64>)>,
    pub diagnostics: RunDiagnostics,
}

impl RunOutput {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }
}

/// Exact model, initial state and grid for `cfg`, with the cutoff filled in
/// and checked.
pub fn prepare(cfg: &RunConfig) -> Result<(RunConfig, ModelConfig, StateVector, TimeGrid)> {
    let g = cfg.coupling()?;
    if !matches!(cfg.frame, Frame::Lab | Frame::Displaced | Frame::InteractionH2 | Frame::InteractionH3) {
        return Err(Error::InvalidParameter(format!(
            "exact runs use frame lab, displaced, h2 or h3, got {}",
            cfg.frame
        )));
    }
    if cfg.samples_per_cycle == 0 || !(cfg.horizon_cycles > 0.0) {
        return Err(Error::InvalidParameter("need samples_per_cycle >= 1 and horizon_cycles > 0".into()));
    }
    let probe = ModelConfig::new(cfg.j, g, cfg.omega0, 1).with_frame(cfg.frame);
    let m_spread = match cfg.init_basis {
        InitBasis::X => cfg.initial_m().value(),
        InitBasis::Z => cfg.j.value(),
    };
    let required = probe.required_cutoff_spread(cfg.init_n, m_spread);
    let n_max = cfg.n_max.unwrap_or(required);
    if n_max < required {
        return Err(Error::CutoffTooSmall { n_max, required });
    }
    let model = probe.with_n_max(n_max);
    model.validate()?;
    let basis = model.basis()?;
    let psi0 = match cfg.init_basis {
        InitBasis::X => basis_state(&basis, cfg.initial_m(), cfg.init_n)?,
        InitBasis::Z => SpinBasisChange::new(cfg.j)?.jz_state(&basis, cfg.initial_m(), cfg.init_n)?,
    };
    let grid = TimeGrid::from_cycles(model.omega, cfg.t_start_cycles, cfg.horizon_cycles, cfg.samples_per_cycle)?;
    let mut resolved = cfg.clone();
    resolved.n_max = Some(n_max);
    resolved.init_m = Some(cfg.initial_m());
    Ok((resolved, model, psi0, grid))
}

fn tail_mass(state: &StateVector) -> f64 {
    let p = state.photon_distribution();
    p[p.len().saturating_sub(TAIL_LEVELS)..].iter().sum()
}

fn norm_error(state: &StateVector) -> f64 {
    (state.norm() - 1.0).abs()
}

/// Static evolution in the frame of `model`, streamed through `visit` as
/// (time, inner-frame state) pairs.
fn stream_static(
    h: &OperatorMatrix,
    start: &StateVector,
    grid: &TimeGrid,
    mut visit: impl FnMut(f64, &StateVector) -> Result<()>,
) -> Result<String> {
    if h.dim() <= DENSE_DIM_LIMIT {
        SpectralPropagator::new(h)?.for_each_state(start, grid, |_, t, s| visit(t, s))?;
        return Ok("eigen".into());
    }
    let traj = evolve_static_with(h, start, grid, StaticMethod::Auto)?;
    for (t, s) in grid.times().zip(&traj.states) {
        visit(t, s)?;
    }
    Ok(traj.diagnostics.method)
}

/// Runs `model` from the lab-frame state `psi0`, recording lab-frame
/// observables against `psi0`.
fn run_model(
    model: &ModelConfig,
    build: impl FnOnce(&ModelConfig) -> Result<OperatorMatrix>,
    psi0: &StateVector,
    grid: &TimeGrid,
) -> Result<(Observables, Diagnostics)> {
    let dressing = crate::propagate::FrameDressing::new(model)?;
    let start = dressing.to_inner(psi0)?;
    let mut obs = Observables::with_capacity(grid.n_samples);
    let mut diag = Diagnostics::default();
    let mut visit = |t: f64, inner: &StateVector| -> Result<()> {
        diag.norm_drift = diag.norm_drift.max(norm_error(inner));
        diag.cutoff_tail_mass = diag.cutoff_tail_mass.max(tail_mass(inner));
        let lab = if model.frame == Frame::Lab { inner.clone() } else { dressing.to_lab(inner, t)? };
        diag.norm_drift = diag.norm_drift.max(norm_error(&lab));
        obs.record(psi0, &lab);
        Ok(())
    };
    match model.frame {
        Frame::InteractionH2 | Frame::InteractionH3 => {
            let hfun = if model.frame == Frame::InteractionH2 { build_h2(model)? } else { build_h3(model)? };
            diag.hermiticity_error = hfun.matrix_at(grid.t_start).hermiticity_error();
            let traj = evolve_timedep(&hfun, &start, grid, &StepControl::for_mode(model.omega))?;
            for (t, s) in grid.times().zip(&traj.states) {
                visit(t, s)?;
            }
            diag.method = traj.diagnostics.method;
            diag.final_step = traj.diagnostics.final_step;
            diag.step_change = traj.diagnostics.step_change;
        }
        _ => {
            let h = build(model)?;
            diag.hermiticity_error = h.hermiticity_error();
            diag.method = stream_static(&h, &start, grid, &mut visit)?;
        }
    }
    Ok((obs, diag))
}

fn exact_builder(frame: Frame) -> fn(&ModelConfig) -> Result<OperatorMatrix> {
    match frame {
        Frame::Displaced => build_displaced,
        _ => build_dicke,
    }
}

fn run_effective(
    which: EffectiveModel,
    model: &ModelConfig,
    psi0: &StateVector,
    grid: &TimeGrid,
) -> Result<(Observables, Option<Diagnostics>)> {
    if let EffectiveModel::TwoLevel { k } = which {
        let (g, omega, omega0) = (model.g, model.omega, model.omega0);
        let depth = 1.0 - pmin_analytic(g, k, omega, omega0);
        let freq = freq_analytic(g, k, omega, omega0);
        let survival: Vec<f64> = grid.times().map(|t| 1.0 - depth * (freq * t).sin().powi(2)).collect();
        let nan = vec![f64::NAN; survival.len()];
        return Ok((
            Observables { survival, photon_cdf: [nan.clone(), nan.clone(), nan.clone()], jz: nan },
            None,
        ));
    }
    if which == EffectiveModel::QubitFree {
        let free = ModelConfig { omega0: 0.0, ..*model };
        let (obs, diag) = run_model(&free, exact_builder(free.frame), psi0, grid)?;
        return Ok((obs, Some(diag)));
    }
    let frame = which.frame().expect("matrix models carry a frame");
    let eff = model.with_frame(frame);
    let (obs, diag) = match which {
        EffectiveModel::Dsc { k } => run_model(&eff, |c| build_effective_dsc(c, k), psi0, grid)?,
        EffectiveModel::Resonant { k } => run_model(&eff, |c| build_effective_resonant(c, k), psi0, grid)?,
        EffectiveModel::HalfInteger => run_model(&eff, build_effective_half_integer, psi0, grid)?,
        _ => run_model(&eff, build_effective_lmg, psi0, grid)?,
    };
    Ok((obs, Some(diag)))
}

/// Exact evolution, optionally overlaid with the effective model.
///
/// Columns: `P`, `photon_cdf_0..2`, `Jz`, and with `with_effective` the same
/// names suffixed `_effective`.
pub fn simulate(cfg: &RunConfig, with_effective: bool) -> Result<RunOutput> {
    let (config, model, psi0, grid) = prepare(cfg)?;
    let effective = if with_effective { Some(resolve_effective(&config)?) } else { None };
    let (exact, exact_diag) = run_model(&model, exact_builder(model.frame), &psi0, &grid)?;
    let mut columns = named_columns(exact, "");
    let mut diagnostics = RunDiagnostics { exact: exact_diag, effective: None };
    if let Some(which) = effective {
        let (obs, diag) = run_effective(which, &model, &psi0, &grid)?;
        columns.extend(named_columns(obs, "_effective"));
        diagnostics.effective = diag;
    }
    Ok(RunOutput { config, model, effective, times: grid.times().collect(), columns, diagnostics })
}

fn named_columns(obs: Observables, suffix: &str) -> Vec<(String, Vec<f64>)> {
    let [c0, c1, c2] = obs.photon_cdf;
    vec![
        (format!("P{suffix}"), obs.survival),
        (format!("photon_cdf_0{suffix}"), c0),
        (format!("photon_cdf_1{suffix}"), c1),
        (format!("photon_cdf_2{suffix}"), c2),
        (format!("Jz{suffix}"), obs.jz),
    ]
}

/// Exact against effective survival with the running maximum of their difference.
pub fn compare(cfg: &RunConfig) -> Result<RunOutput> {
    let sim = simulate(cfg, true)?;
    let take = |name: &str| sim.column(name).map(<[f64]>::to_vec).unwrap_or_default();
    let exact = take("P");
    let effective = take("P_effective");
    let mut running = 0.0f64;
    let max_diff: Vec<f64> = exact
        .iter()
        .zip(&effective)
        .map(|(a, b)| {
            running = running.max((a - b).abs());
            running
        })
        .collect();
    let columns = vec![
        ("P_exact".to_string(), exact),
        ("P_effective".to_string(), effective),
        ("max_diff".to_string(), max_diff),
        ("photon_cdf_1_exact".to_string(), take("photon_cdf_1")),
        ("photon_cdf_1_effective".to_string(), take("photon_cdf_1_effective")),
        ("photon_cdf_2_exact".to_string(), take("photon_cdf_2")),
        ("photon_cdf_2_effective".to_string(), take("photon_cdf_2_effective")),
    ];
    Ok(RunOutput { columns, ..sim })
}

/// Largest `|a − b|` over two columns.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::HalfInteger;

    fn cfg(text: &str) -> RunConfig {
        RunConfig::from_table(text.parse().unwrap()).unwrap()
    }

    #[test]
    fn qubit_free_run_is_stationary() {
        let c = cfg("j = 1\ng = 1.3\nomega0 = 0.0\nhorizon_cycles = 3.0");
        let out = compare(&c).unwrap();
        for (a, b) in out.column("P_exact").unwrap().iter().zip(out.column("P_effective").unwrap()) {
            assert!((a - 1.0).abs() < 1e-10 && (b - 1.0).abs() < 1e-10);
        }
        assert!(out.diagnostics.violations().is_empty(), "{:?}", out.diagnostics);
    }

    #[test]
    fn frames_agree_in_the_lab() {
        let base = "j = 1\ng = 1.0\nomega0 = 0.2\nhorizon_cycles = 2.0\nn_max = 30\nsamples_per_cycle = 8\n";
        let lab = simulate(&cfg(base), false).unwrap();
        for frame in ["displaced", "h2", "h3"] {
            let other = simulate(&cfg(&format!("{base}frame = \"{frame}\"")), false).unwrap();
            for name in ["P", "photon_cdf_1", "Jz"] {
                let d = max_abs_diff(lab.column(name).unwrap(), other.column(name).unwrap());
                assert!(d < 1e-5, "{frame} {name}: {d}");
            }
        }
    }

    #[test]
    fn auto_effective_choice() {
        let pick = |t: &str| resolve_effective(&cfg(t)).unwrap();
        assert_eq!(pick("j = 1\ng_squared = 5.0"), EffectiveModel::Dsc { k: 5 });
        assert_eq!(pick("j = \"3/2\"\ng = 1.0"), EffectiveModel::Resonant { k: 1 });
        assert_eq!(pick("j = \"3/2\"\ng = 1.2"), EffectiveModel::HalfInteger);
        assert_eq!(pick("j = 2\ng = 1.2"), EffectiveModel::TwoLevel { k: 1 });
        assert_eq!(pick("j = 4\ng_squared = 0.0025"), EffectiveModel::Lmg);
        assert_eq!(pick("j = 2\ng = 1.8\nk = 3"), EffectiveModel::TwoLevel { k: 3 });
    }

    #[test]
    fn cutoff_and_frame_errors() {
        let c = cfg("j = 4\ng = 1.0\nn_max = 5");
        assert!(matches!(simulate(&c, false), Err(Error::CutoffTooSmall { .. })));
        let c = cfg("j = 1\ng = 1.0\nframe = \"effective-lmg\"");
        assert!(matches!(simulate(&c, false), Err(Error::InvalidParameter(_))));
        let c = cfg("j = 1\ng = 1.2\neffective_model = \"dsc\"");
        assert!(matches!(simulate(&c, true), Err(Error::OffResonance { .. })));
    }

    #[test]
    fn jz_initial_state() {
        let c = cfg("j = 1\ng = 1.2\nomega0 = 0.01\ninit_basis = \"z\"\nhorizon_cycles = 1.0\ninit_m = 1");
        let out = simulate(&c, false).unwrap();
        assert!((out.column("Jz").unwrap()[0] - 1.0).abs() < 1e-10);
        assert_eq!(out.config.n_max, Some(out.model.n_max));
        assert_eq!(out.model.j, HalfInteger::from_int(1));
    }
}
