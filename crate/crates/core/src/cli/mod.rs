//! Command-line front end. Every data file is written next to a JSON manifest.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration error, 3 convergence
//! or cutoff failure (including a manifest whose diagnostics break the
//! propagation contracts).

pub mod config;
pub mod output;
pub mod run;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use toml::{Table, Value};

use crate::analysis::{scan_resonance, ScanSettings};
use crate::chains::{build_chain_graph, full_chain_graph, Coupling};
use crate::coefficients::omega_table;
use crate::error::Error;
use crate::hilbert::HalfInteger;
use config::{load_config_file, merge, preset, presets, RunConfig};
use output::{output_path, write_columns, write_rows, write_text, RunManifest};
use run::{compare, simulate, RunOutput};

#[derive(Debug, Parser)]
#[command(name = "dicke", version, about = "Dicke-model dynamics in the dispersive regimes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact evolution of P(t), photon-number probabilities and <Jz>.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Add the effective-model columns for direct overlay.
        #[arg(long)]
        effective: bool,
    },
    /// Exact against effective survival probability.
    Compare {
        #[command(flatten)]
        run: RunArgs,
    },
    /// P_min and oscillation frequency across a resonance, numerics against closed forms.
    Scan(ScanArgs),
    /// Dispersive chains of the resonant effective Hamiltonian as JSON and DOT.
    Chains(ChainArgs),
    /// Table of the coefficients Omega_n^m(beta).
    Coeffs(CoeffArgs),
    /// List the figure presets.
    Presets,
}

#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    /// Directory for data files and manifests.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// File stem; defaults to the preset or command name.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Named figure preset (see `dicke presets`).
    #[arg(long)]
    pub preset: Option<String>,
    /// Flat TOML file, or a manifest JSON from an earlier run. Overrides the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Total spin, e.g. 4 or 3/2.
    #[arg(long = "J")]
    pub j: Option<String>,
    #[arg(long)]
    pub g: Option<f64>,
    #[arg(long)]
    pub g_squared: Option<f64>,
    #[arg(long)]
    pub omega0: Option<f64>,
    #[arg(long)]
    pub n_max: Option<i64>,
    /// lab, displaced, h2 or h3.
    #[arg(long)]
    pub frame: Option<String>,
    #[arg(long)]
    pub t_start_cycles: Option<f64>,
    #[arg(long)]
    pub horizon_cycles: Option<f64>,
    #[arg(long)]
    pub samples_per_cycle: Option<i64>,
    #[arg(long)]
    pub init_m: Option<String>,
    #[arg(long)]
    pub init_n: Option<i64>,
    /// x for |Jx=m,n>, z for |Jz=m,n>.
    #[arg(long)]
    pub init_basis: Option<String>,
    /// auto, dsc, resonant, half-integer, lmg, two-level or qubit-free.
    #[arg(long)]
    pub effective_model: Option<String>,
    #[arg(long)]
    pub k: Option<i64>,
    #[command(flatten)]
    pub out: OutArgs,
}

impl RunArgs {
    fn overrides(&self) -> Table {
        let mut t = Table::new();
        let mut put = |key: &str, v: Option<Value>| {
            if let Some(v) = v {
                t.insert(key.into(), v);
            }
        };
        put("j", self.j.clone().map(Value::String));
        put("g", self.g.map(Value::Float));
        put("g_squared", self.g_squared.map(Value::Float));
        put("omega0", self.omega0.map(Value::Float));
        put("n_max", self.n_max.map(Value::Integer));
        put("frame", self.frame.clone().map(Value::String));
        put("t_start_cycles", self.t_start_cycles.map(Value::Float));
        put("horizon_cycles", self.horizon_cycles.map(Value::Float));
        put("samples_per_cycle", self.samples_per_cycle.map(Value::Integer));
        put("init_m", self.init_m.clone().map(Value::String));
        put("init_n", self.init_n.map(Value::Integer));
        put("init_basis", self.init_basis.clone().map(Value::String));
        put("effective_model", self.effective_model.clone().map(Value::String));
        put("k", self.k.map(Value::Integer));
        t
    }

    /// Preset, then config file, then flags.
    pub fn resolve(&self) -> crate::Result<RunConfig> {
        let mut table = match &self.preset {
            Some(name) => preset(name)?.table,
            None => Table::new(),
        };
        if let Some(path) = &self.config {
            merge(&mut table, load_config_file(path)?);
        }
        merge(&mut table, self.overrides());
        // a coupling given on a later layer replaces the other spelling
        if self.g.is_some() && self.g_squared.is_none() {
            table.remove("g_squared");
        } else if self.g_squared.is_some() && self.g.is_none() {
            table.remove("g");
        }
        RunConfig::from_table(table)
    }
}

#[derive(Debug, Clone, Args)]
pub struct ScanArgs {
    #[arg(long = "J", default_value = "1")]
    pub j: String,
    #[arg(long, default_value_t = 1)]
    pub k: u32,
    /// Defaults to sqrt(k) - 0.1.
    #[arg(long)]
    pub g_min: Option<f64>,
    /// Defaults to sqrt(k) + 0.1.
    #[arg(long)]
    pub g_max: Option<f64>,
    #[arg(long, default_value_t = 21)]
    pub points: usize,
    #[arg(long, default_value_t = 0.01)]
    pub omega0: f64,
    /// Minimum horizon; each point runs at least eight predicted oscillations.
    #[arg(long, default_value_t = 0.0)]
    pub horizon_cycles: f64,
    #[arg(long)]
    pub n_max: Option<usize>,
    #[arg(long, default_value_t = 8)]
    pub samples_per_cycle: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ChainArgs {
    #[arg(long = "J")]
    pub j: String,
    #[arg(long, default_value_t = 1, conflicts_with = "off_resonant")]
    pub k: u32,
    /// Graph for g away from every resonance.
    #[arg(long)]
    pub off_resonant: bool,
    /// Export only the chain through (m_min, n_base).
    #[arg(long)]
    pub n_base: Option<usize>,
    /// Largest photon number in the table; defaults to the top of the n_base = 0 chain plus 4.
    #[arg(long)]
    pub n_max: Option<usize>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CoeffArgs {
    /// Photon numbers: `3`, `0,1,5`, `0..=10` or `0..10`.
    #[arg(long, default_value = "0..=10")]
    pub n: String,
    /// Photon shifts, same syntax as --n.
    #[arg(long, default_value = "0")]
    pub m: String,
    /// Comma-separated values; `sqrt(x)` is accepted.
    #[arg(long, default_value = "1")]
    pub beta: String,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug)]
enum Failure {
    Model(Error),
    Io(std::io::Error),
    /// Files were written but their diagnostics break the contracts.
    Contract(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Model(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e)
    }
}

impl Failure {
    fn exit_code(&self) -> i32 {
        match self {
            Failure::Io(_) => 1,
            Failure::Model(Error::CutoffTooSmall { .. } | Error::StepTooLarge { .. } | Error::NormDrift { .. }) => 3,
            Failure::Model(_) => 2,
            Failure::Contract(_) => 3,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Model(e @ Error::CutoffTooSmall { required, .. }) => format!("{e} (try --n-max {required})"),
            Failure::Model(e) => e.to_string(),
            Failure::Io(e) => format!("i/o: {e}"),
            Failure::Contract(v) => format!("diagnostics out of contract: {v}"),
        }
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.exit_code()
        }
    }
}

pub fn main() -> i32 {
    run_from(std::env::args_os())
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Simulate { run, effective } => cmd_run("simulate", &run, |c| simulate(c, effective)),
        Command::Compare { run } => cmd_run("compare", &run, compare),
        Command::Scan(args) => cmd_scan(&args),
        Command::Chains(args) => cmd_chains(&args),
        Command::Coeffs(args) => cmd_coeffs(&args),
        Command::Presets => {
            for p in presets()? {
                println!("{:<10} {}", p.name, p.description);
            }
            Ok(())
        }
    }
}

fn prepare_dir(out: &OutArgs) -> Result<(), Failure> {
    std::fs::create_dir_all(&out.out_dir)?;
    Ok(())
}

fn stem(out: &OutArgs, fallback: &str) -> String {
    out.name.clone().unwrap_or_else(|| fallback.to_string())
}

fn to_json<T: serde::Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

fn cmd_run(command: &str, args: &RunArgs, go: impl FnOnce(&RunConfig) -> crate::Result<RunOutput>) -> Result<(), Failure> {
    let start = Instant::now();
    let cfg = args.resolve()?;
    let out = go(&cfg)?;
    prepare_dir(&args.out)?;
    let stem = stem(&args.out, args.preset.as_deref().unwrap_or(command));
    let csv_path = output_path(&args.out.out_dir, &stem, ".csv");
    let mut header = vec!["t"];
    header.extend(out.columns.iter().map(|(n, _)| n.as_str()));
    let mut cols: Vec<&[f64]> = vec![&out.times];
    cols.extend(out.columns.iter().map(|(_, v)| v.as_slice()));
    write_columns(&csv_path, &header, &cols)?;

    let mut manifest = RunManifest::new(command, args.preset.clone(), to_json(&out.config));
    manifest.model = Some(to_json(&out.model));
    manifest.effective_model = out.effective.map(|e| e.name());
    manifest.diagnostics = to_json(&out.diagnostics);
    manifest.outputs.push(display(&csv_path));
    let violations = out.diagnostics.violations();
    if !violations.is_empty() {
        manifest.status = format!("failed: {}", violations.join("; "));
    }
    manifest.wall_time_seconds = start.elapsed().as_secs_f64();
    let manifest_path = output_path(&args.out.out_dir, &stem, ".manifest.json");
    manifest.write(&manifest_path)?;

    let p = out.column("P").or_else(|| out.column("P_exact")).unwrap_or(&[]);
    let p_min = p.iter().copied().fold(f64::INFINITY, f64::min);
    println!("wrote {} and {}", csv_path.display(), manifest_path.display());
    print!("n_max = {}, samples = {}, min P = {p_min:.6}", out.model.n_max, out.times.len());
    if let Some(d) = out.column("max_diff").and_then(|d| d.last()) {
        print!(", max |P_exact - P_effective| = {d:.3e}");
    }
    println!();
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Failure::Contract(violations.join("; ")))
    }
}

fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect(),
    }
}

fn parse_spin(text: &str) -> Result<HalfInteger, Failure> {
    Ok(text.parse::<HalfInteger>()?)
}

fn cmd_scan(args: &ScanArgs) -> Result<(), Failure> {
    let start = Instant::now();
    let j = parse_spin(&args.j)?;
    let centre = (args.k as f64).sqrt();
    let (lo, hi) = (args.g_min.unwrap_or(centre - 0.1), args.g_max.unwrap_or(centre + 0.1));
    if args.points == 0 || !(lo > 0.0) || hi < lo {
        return Err(Error::InvalidParameter(format!("need points >= 1 and 0 < g_min <= g_max, got {lo}..{hi}")).into());
    }
    let mut settings = ScanSettings::new(j, args.omega0);
    settings.n_max = args.n_max;
    settings.horizon_cycles = args.horizon_cycles;
    settings.samples_per_cycle = args.samples_per_cycle.max(1);
    let result = scan_resonance(&settings, args.k, &linspace(lo, hi, args.points))?;

    prepare_dir(&args.out)?;
    let stem = stem(&args.out, "scan");
    let csv_path = output_path(&args.out.out_dir, &stem, ".csv");
    write_columns(
        &csv_path,
        &["g", "pmin_num", "pmin_ana", "freq_num", "freq_ana"],
        &[&result.g_values, &result.p_min_numeric, &result.p_min_analytic, &result.freq_numeric, &result.freq_analytic],
    )?;
    let mut config = to_json(&settings);
    config["k"] = args.k.into();
    config["g_min"] = lo.into();
    config["g_max"] = hi.into();
    config["points"] = args.points.into();
    let mut manifest = RunManifest::new("scan", None, config);
    manifest.diagnostics = serde_json::json!({ "horizons": result.horizons, "n_max": result.n_max });
    manifest.outputs.push(display(&csv_path));
    manifest.wall_time_seconds = start.elapsed().as_secs_f64();
    let manifest_path = output_path(&args.out.out_dir, &stem, ".manifest.json");
    manifest.write(&manifest_path)?;
    println!("wrote {} and {}", csv_path.display(), manifest_path.display());
    for i in 0..result.g_values.len() {
        println!(
            "g = {:.6}  P_min {:.5} (closed form {:.5})  freq {:.6} (closed form {:.6})",
            result.g_values[i],
            result.p_min_numeric[i],
            result.p_min_analytic[i],
            result.freq_numeric[i],
            result.freq_analytic[i]
        );
    }
    Ok(())
}

fn cmd_chains(args: &ChainArgs) -> Result<(), Failure> {
    let start = Instant::now();
    let j = parse_spin(&args.j)?;
    let coupling = if args.off_resonant { Coupling::OffResonant } else { Coupling::Resonant(args.k) };
    let base = if j.is_integer() { 0.0 } else { 0.25 };
    let chain_top = (args.k as f64 * (j.value() * j.value() - base)).round() as usize;
    let n_max = args.n_max.unwrap_or(chain_top + args.n_base.unwrap_or(0) + 4);
    let graph = match (args.n_base, coupling) {
        (Some(n_base), Coupling::Resonant(k)) => build_chain_graph(j, k, n_base, n_max)?,
        (Some(_), Coupling::OffResonant) => {
            return Err(Error::InvalidParameter("--n-base needs a resonant coupling".into()).into())
        }
        (None, c) => full_chain_graph(j, c, n_max)?,
    };
    prepare_dir(&args.out)?;
    let stem = stem(&args.out, "chains");
    let json_path = output_path(&args.out.out_dir, &stem, ".json");
    let dot_path = output_path(&args.out.out_dir, &stem, ".dot");
    let json = graph.to_json().map_err(std::io::Error::other)?;
    write_text(&json_path, &(json + "\n"))?;
    write_text(&dot_path, &graph.to_dot())?;
    let config = serde_json::json!({
        "j": j.to_string(),
        "coupling": to_json(&coupling),
        "n_base": args.n_base,
        "n_max": n_max,
    });
    let mut manifest = RunManifest::new("chains", None, config);
    manifest.diagnostics = serde_json::json!({
        "nodes": graph.nodes.len(),
        "edges": graph.edges.len(),
        "components": graph.components.len(),
    });
    manifest.outputs = vec![display(&json_path), display(&dot_path)];
    manifest.wall_time_seconds = start.elapsed().as_secs_f64();
    let manifest_path = output_path(&args.out.out_dir, &stem, ".manifest.json");
    manifest.write(&manifest_path)?;
    println!("wrote {}, {} and {}", json_path.display(), dot_path.display(), manifest_path.display());
    for c in graph.components.iter().filter(|c| c.len() > 1) {
        let labels: Vec<String> = c.iter().map(|n| format!("({}, {})", n.m, n.n)).collect();
        println!("{}", labels.join(" - "));
    }
    Ok(())
}

/// `3`, `0,1,5`, `2..=6` or `2..6`.
pub fn parse_index_list(text: &str) -> crate::Result<Vec<usize>> {
    let bad = || Error::InvalidParameter(format!("cannot read index list {text:?}"));
    let num = |s: &str| s.trim().parse::<usize>().map_err(|_| bad());
    let mut out = Vec::new();
    for part in text.split(',') {
        if let Some((a, b)) = part.split_once("..=") {
            out.extend(num(a)?..=num(b)?);
        } else if let Some((a, b)) = part.split_once("..") {
            out.extend(num(a)?..num(b)?);
        } else {
            out.push(num(part)?);
        }
    }
    Ok(out)
}

/// Comma-separated reals; `sqrt(x)` allowed.
pub fn parse_real_list(text: &str) -> crate::Result<Vec<f64>> {
    text.split(',')
        .map(|part| {
            let p = part.trim();
            let value = match p.strip_prefix("sqrt(").and_then(|r| r.strip_suffix(')')) {
                Some(inner) => inner.trim().parse::<f64>().map(f64::sqrt),
                None => p.parse::<f64>(),
            };
            value.map_err(|_| Error::InvalidParameter(format!("cannot read number {p:?}")))
        })
        .collect()
}

fn cmd_coeffs(args: &CoeffArgs) -> Result<(), Failure> {
    let start = Instant::now();
    let ns = parse_index_list(&args.n)?;
    let ms = parse_index_list(&args.m)?;
    let betas = parse_real_list(&args.beta)?;
    let table = omega_table(ns.iter().copied(), ms.iter().copied(), &betas);
    let rows: Vec<Vec<String>> = table
        .iter()
        .map(|c| vec![c.n.to_string(), c.m.to_string(), output::format_value(c.beta), output::format_value(c.value)])
        .collect();
    prepare_dir(&args.out)?;
    let stem = stem(&args.out, "coeffs");
    let csv_path = output_path(&args.out.out_dir, &stem, ".csv");
    write_rows(&csv_path, &["n", "m", "beta", "value"], &rows)?;
    let config = serde_json::json!({ "n": ns, "m": ms, "beta": betas });
    let mut manifest = RunManifest::new("coeffs", None, config);
    manifest.outputs.push(display(&csv_path));
    manifest.wall_time_seconds = start.elapsed().as_secs_f64();
    manifest.write(&output_path(&args.out.out_dir, &stem, ".manifest.json"))?;
    // a closed stdout (e.g. piped into `head`) only ends the echo
    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(stdout, "n,m,beta,value");
    for c in &table {
        if writeln!(stdout, "{},{},{},{:.12}", c.n, c.m, c.beta, c.value).is_err() {
            break;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_and_real_lists() {
        assert_eq!(parse_index_list("3").unwrap(), vec![3]);
        assert_eq!(parse_index_list("0,2..4,7..=8").unwrap(), vec![0, 2, 3, 7, 8]);
        assert!(parse_index_list("a").is_err());
        let b = parse_real_list("1, sqrt(5),0.5").unwrap();
        assert_eq!(b, vec![1.0, 5f64.sqrt(), 0.5]);
        assert!(parse_real_list("sqrt(x)").is_err());
    }

    #[test]
    fn layering_flags_over_preset() {
        let cli = Cli::try_parse_from(["dicke", "simulate", "--preset", "fig2a", "--g", "2.0", "--J", "3/2"]).unwrap();
        let Command::Simulate { run, .. } = cli.command else { panic!() };
        let cfg = run.resolve().unwrap();
        assert_eq!(cfg.g, Some(2.0));
        assert_eq!(cfg.g_squared, None);
        assert_eq!(cfg.j, HalfInteger::from_twice(3));
        assert_eq!(cfg.omega0, 0.1);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run_from(["dicke", "simulate", "--preset", "nope"]), 2);
        assert_eq!(run_from(["dicke", "frobnicate"]), 2);
        assert_eq!(Failure::from(Error::CutoffTooSmall { n_max: 1, required: 9 }).exit_code(), 3);
        assert_eq!(Failure::Contract("x".into()).exit_code(), 3);
    }
}
