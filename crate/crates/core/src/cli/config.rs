//! Run configuration: flat TOML tables, named presets, and flag overrides.
//!
//! Layers are merged key by key: preset, then config file, then flags.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize};
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::hamiltonians::Frame;
use crate::hilbert::HalfInteger;

/// Pinned figure presets.
pub const PRESETS_TOML: &str = include_str!("presets.toml");

fn half_integer_flex<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<HalfInteger, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Text(String),
        Int(i64),
        Float(f64),
    }
    let text = match Raw::deserialize(d)? {
        Raw::Text(s) => s,
        Raw::Int(i) => i.to_string(),
        Raw::Float(f) => f.to_string(),
    };
    text.parse().map_err(serde::de::Error::custom)
}

fn half_integer_flex_opt<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<HalfInteger>, D::Error> {
    half_integer_flex(d).map(Some)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitBasis {
    /// `|Jx = m, n⟩`
    #[default]
    X,
    /// `|Jz = m, n⟩`
    Z,
}

impl FromStr for InitBasis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "x" | "jx" => Ok(InitBasis::X),
            "z" | "jz" => Ok(InitBasis::Z),
            other => Err(Error::InvalidParameter(format!("init basis must be x or z, got {other:?}"))),
        }
    }
}

/// Which approximate model to overlay on the exact run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EffectiveChoice {
    /// LMG for `g²/ω² < 1/4`, otherwise the resonant chain model at resonance,
    /// the half-integer model off resonance for half-integer `J`, and the
    /// closed-form two-level curve off resonance for integer `J`.
    #[default]
    Auto,
    Dsc,
    Resonant,
    HalfInteger,
    Lmg,
    TwoLevel,
    /// Exact evolution with `ω₀ = 0`.
    QubitFree,
}

impl EffectiveChoice {
    pub const NAMES: [&'static str; 7] = ["auto", "dsc", "resonant", "half-integer", "lmg", "two-level", "qubit-free"];

    pub fn name(self) -> &'static str {
        match self {
            EffectiveChoice::Auto => "auto",
            EffectiveChoice::Dsc => "dsc",
            EffectiveChoice::Resonant => "resonant",
            EffectiveChoice::HalfInteger => "half-integer",
            EffectiveChoice::Lmg => "lmg",
            EffectiveChoice::TwoLevel => "two-level",
            EffectiveChoice::QubitFree => "qubit-free",
        }
    }
}

impl fmt::Display for EffectiveChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EffectiveChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::NAMES
            .iter()
            .position(|n| *n == s.trim())
            .map(|i| {
                [
                    EffectiveChoice::Auto,
                    EffectiveChoice::Dsc,
                    EffectiveChoice::Resonant,
                    EffectiveChoice::HalfInteger,
                    EffectiveChoice::Lmg,
                    EffectiveChoice::TwoLevel,
                    EffectiveChoice::QubitFree,
                ][i]
            })
            .ok_or_else(|| Error::InvalidParameter(format!("unknown effective model {s:?} (expected one of {:?})", Self::NAMES)))
    }
}

/// Everything needed to reproduce one `simulate`/`compare` run. Frequencies in units of ω.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(deserialize_with = "half_integer_flex")]
    pub j: HalfInteger,
    pub g: Option<f64>,
    /// Alternative to `g` for exact resonances, e.g. `g_squared = 5`.
    pub g_squared: Option<f64>,
    pub omega0: f64,
    /// Derived from the cutoff heuristic when absent.
    pub n_max: Option<usize>,
    /// Frame used for the exact propagation; results are always reported in the lab frame.
    pub frame: Frame,
    pub t_start_cycles: f64,
    pub horizon_cycles: f64,
    pub samples_per_cycle: usize,
    /// `0` for integer `J`, `−1/2` otherwise.
    #[serde(deserialize_with = "half_integer_flex_opt")]
    pub init_m: Option<HalfInteger>,
    pub init_n: usize,
    pub init_basis: InitBasis,
    pub effective_model: EffectiveChoice,
    /// Resonance index; nearest integer to `g²/ω²` when absent.
    pub k: Option<u32>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            j: HalfInteger::from_int(1),
            g: None,
            g_squared: None,
            omega0: 0.1,
            n_max: None,
            frame: Frame::Lab,
            t_start_cycles: 0.0,
            horizon_cycles: 20.0,
            samples_per_cycle: 16,
            init_m: None,
            init_n: 0,
            init_basis: InitBasis::X,
            effective_model: EffectiveChoice::Auto,
            k: None,
        }
    }
}

impl RunConfig {
    pub fn coupling(&self) -> Result<f64> {
        match (self.g, self.g_squared) {
            (Some(_), Some(_)) => Err(Error::InvalidParameter("set only one of g and g_squared".into())),
            (Some(g), None) => Ok(g),
            (None, Some(g2)) if g2 >= 0.0 => Ok(g2.sqrt()),
            (None, Some(g2)) => Err(Error::InvalidParameter(format!("g_squared must be non-negative, got {g2}"))),
            (None, None) => Err(Error::InvalidParameter("coupling missing: set g or g_squared".into())),
        }
    }

    pub fn initial_m(&self) -> HalfInteger {
        match self.init_m {
            Some(m) => m,
            None if self.j.is_integer() => HalfInteger::ZERO,
            None => HalfInteger::from_twice(-1),
        }
    }

    pub fn from_table(table: Table) -> Result<Self> {
        RunConfig::deserialize(Value::Table(table)).map_err(|e| Error::InvalidParameter(format!("config: {e}")))
    }

    pub fn to_table(&self) -> Table {
        match Value::try_from(self) {
            Ok(Value::Table(t)) => t,
            _ => Table::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Preset {
    pub name: String,
    pub description: String,
    pub table: Table,
}

impl Preset {
    pub fn config(&self) -> Result<RunConfig> {
        RunConfig::from_table(self.table.clone())
    }
}

fn parse_toml(text: &str, origin: &str) -> Result<Table> {
    text.parse::<Table>().map_err(|e| Error::InvalidParameter(format!("{origin}: {e}")))
}

pub fn presets_version() -> i64 {
    parse_toml(PRESETS_TOML, "presets").ok().and_then(|t| t.get("version").and_then(Value::as_integer)).unwrap_or(0)
}

/// All presets in file order.
pub fn presets() -> Result<Vec<Preset>> {
    let table = parse_toml(PRESETS_TOML, "presets")?;
    let mut out = Vec::new();
    for (name, value) in table {
        let Value::Table(mut t) = value else { continue };
        let description = match t.remove("description") {
            Some(Value::String(s)) => s,
            _ => String::new(),
        };
        out.push(Preset { name, description, table: t });
    }
    Ok(out)
}

pub fn preset(name: &str) -> Result<Preset> {
    presets()?.into_iter().find(|p| p.name == name).ok_or_else(|| {
        let names: Vec<String> = presets().unwrap_or_default().into_iter().map(|p| p.name).collect();
        Error::InvalidParameter(format!("unknown preset {name:?}; available: {}", names.join(", ")))
    })
}

/// Config file contents as a table: flat TOML, or the `config` object of a run manifest.
pub fn load_config_file(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidParameter(format!("cannot read {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let json: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?;
        let cfg = json.get("config").cloned().unwrap_or(json);
        let cfg: RunConfig = serde_json::from_value(cfg)
            .map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?;
        return Ok(cfg.to_table());
    }
    parse_toml(&text, &path.display().to_string())
}

/// Overwrites `base` with every key of `over`.
pub fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        base.insert(k, v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse() {
        let all = presets().unwrap();
        let names: Vec<&str> = all.iter().map(|p| p.name.as_str()).collect();
        for expected in ["fig2a", "fig2b", "fig2c", "fig3a", "fig3b", "fig4a_j1", "fig4a_j2", "fig5a", "fig5b", "fig5c", "fig5d"] {
            assert!(names.contains(&expected), "{expected}");
        }
        for p in &all {
            let cfg = p.config().unwrap();
            cfg.coupling().unwrap();
            assert!(!p.description.is_empty());
        }
        assert!(presets_version() >= 1);
        let fig2a = preset("fig2a").unwrap().config().unwrap();
        assert_eq!(fig2a.j, HalfInteger::from_int(1));
        assert!((fig2a.coupling().unwrap() - 5f64.sqrt()).abs() < 1e-15);
        assert!(preset("nope").is_err());
    }

    #[test]
    fn flat_table_round_trip() {
        let text = "j = \"3/2\"\ng = 1.0\nomega0 = 0.05\nframe = \"h3\"\ninit_basis = \"z\"\ninit_m = \"1/2\"\n";
        let cfg = RunConfig::from_table(text.parse().unwrap()).unwrap();
        assert_eq!(cfg.j, HalfInteger::from_twice(3));
        assert_eq!(cfg.frame, Frame::InteractionH3);
        assert_eq!(cfg.init_basis, InitBasis::Z);
        assert_eq!(RunConfig::from_table(cfg.to_table()).unwrap(), cfg);
        let cfg = RunConfig::from_table("j = 4\ng_squared = 0.0025".parse().unwrap()).unwrap();
        assert_eq!(cfg.j, HalfInteger::from_int(4));
        assert!((cfg.coupling().unwrap() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn bad_configs_rejected() {
        assert!(RunConfig::from_table("jj = 1".parse().unwrap()).is_err());
        assert!(RunConfig::from_table("j = \"1/3\"".parse().unwrap()).is_err());
        let both = RunConfig::from_table("g = 1.0\ng_squared = 1.0".parse().unwrap()).unwrap();
        assert!(both.coupling().is_err());
        assert!(RunConfig::default().coupling().is_err());
        assert!("sideways".parse::<EffectiveChoice>().is_err());
        assert_eq!("two-level".parse::<EffectiveChoice>().unwrap(), EffectiveChoice::TwoLevel);
    }

    #[test]
    fn layering() {
        let mut base = preset("fig2a").unwrap().table;
        merge(&mut base, "omega0 = 0.01".parse().unwrap());
        let cfg = RunConfig::from_table(base).unwrap();
        assert_eq!(cfg.omega0, 0.01);
        assert!((cfg.coupling().unwrap() - 5f64.sqrt()).abs() < 1e-15);
    }
}
