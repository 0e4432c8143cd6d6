//! Run configuration: a line-oriented `key = value` format with `[section]`
//! headers and `#` comments.
//!
//! ```text
//! [problem]
//! preset = cantilever-2x1
//! formulation = wasserstein
//!
//! [ambiguity]
//! m = 0.5
//! ```
//!
//! Parsing fills every default, so [`RunConfig::to_text`] writes a complete
//! canonical file that parses back to the same value.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::optimizer::DescentConfig;

use super::presets::{build_preset, default_resolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormulationKind {
    Deterministic,
    Mean,
    Wasserstein,
    Moment,
    Cvar,
    CvarDro,
}

impl FormulationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Deterministic => "deterministic",
            Self::Mean => "mean",
            Self::Wasserstein => "wasserstein",
            Self::Moment => "moment",
            Self::Cvar => "cvar",
            Self::CvarDro => "cvar_dro",
        }
    }
}

impl FromStr for FormulationKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "deterministic" => Self::Deterministic,
            "mean" => Self::Mean,
            "wasserstein" => Self::Wasserstein,
            "moment" => Self::Moment,
            "cvar" => Self::Cvar,
            "cvar_dro" => Self::CvarDro,
            other => return Err(format!("unknown formulation `{other}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSection {
    pub preset: String,
    pub formulation: FormulationKind,
    pub nx: usize,
    pub ny: usize,
    /// Absolute target volume; for risk-constrained runs the starting volume.
    pub target_volume: f64,
    /// Cone filter radius in element widths.
    pub filter_radius: f64,
    pub seed: u64,
    pub volume_penalty: f64,
    /// Weight of the compliance added to a target-displacement cost.
    pub compliance_weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguitySection {
    pub sigma2: f64,
    pub eps: f64,
    pub m: Option<f64>,
    pub m1: Option<f64>,
    pub m2: Option<f64>,
    pub beta: Option<f64>,
    pub threshold: Option<f64>,
    pub gamma: f64,
    /// Samples of the nominal or reference law per iteration.
    pub samples: usize,
    /// Kernel samples per nominal atom per iteration.
    pub inner_samples: usize,
    pub frozen: bool,
    /// Karhunen-Loeve modes of the modulus field.
    pub modes: usize,
    pub correlation_length: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSection {
    pub dir: String,
    pub pgm: bool,
    pub vtk: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemSection,
    pub ambiguity: AmbiguitySection,
    pub optimizer: DescentConfig,
    pub output: OutputSection,
}

const SECTIONS: &[&str] = &["problem", "ambiguity", "optimizer", "output"];

struct Entry {
    value: String,
    line: usize,
}

struct Fields {
    map: BTreeMap<(String, String), Entry>,
    last_line: usize,
}

impl Fields {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut section: Option<String> = None;
        let mut last_line = 0;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            last_line = line;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| cfg_err(line, "unterminated section header"))?
                    .trim();
                if !SECTIONS.contains(&name) {
                    return Err(cfg_err(line, format!("unknown section `[{name}]`")));
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| cfg_err(line, format!("expected `key = value`, found `{content}`")))?;
            let sec = section
                .clone()
                .ok_or_else(|| cfg_err(line, "key outside of any section"))?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if value.is_empty() {
                return Err(cfg_err(line, format!("empty value for `{key}`")));
            }
            if let Some(prev) = map.insert((sec.clone(), key.clone()), Entry { value, line }) {
                return Err(cfg_err(line, format!("duplicate key `{sec}.{key}` (first on line {})", prev.line)));
            }
        }
        Ok(Self { map, last_line })
    }

    fn take<T: FromStr>(&mut self, section: &str, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.map.remove(&(section.to_string(), key.to_string())) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse::<T>()
                .map(Some)
                .map_err(|err| cfg_err(e.line, format!("invalid value `{}` for `{section}.{key}`: {err}", e.value))),
        }
    }

    fn or<T: FromStr>(&mut self, section: &str, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.take(section, key)?.unwrap_or(default))
    }

    fn line_of(&self, section: &str, key: &str) -> usize {
        self.map
            .get(&(section.to_string(), key.to_string()))
            .map_or(self.last_line, |e| e.line)
    }
}

fn cfg_err(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

/// `none` or a positive number.
struct OptionalF64(Option<f64>);

impl FromStr for OptionalF64 {
    type Err = std::num::ParseFloatError;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s == "none" {
            Ok(Self(None))
        } else {
            s.parse().map(|v| Self(Some(v)))
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut f = Fields::parse(text)?;
        let preset_line = f.line_of("problem", "preset");
        let preset: String = f
            .take("problem", "preset")?
            .ok_or_else(|| cfg_err(preset_line, "missing required key `problem.preset`"))?;
        let (dnx, dny) = default_resolution(&preset).map_err(|e| cfg_err(preset_line, e.to_string()))?;
        let form_line = f.line_of("problem", "formulation");
        let formulation: FormulationKind = f
            .take("problem", "formulation")?
            .ok_or_else(|| cfg_err(form_line, "missing required key `problem.formulation`"))?;
        let nx = f.or("problem", "nx", dnx)?;
        let ny = f.or("problem", "ny", dny)?;
        let defaults = build_preset(&preset, nx, ny).map_err(|e| cfg_err(preset_line, e.to_string()))?;
        let problem = ProblemSection {
            target_volume: f.or("problem", "target_volume", defaults.volume)?,
            filter_radius: f.or("problem", "filter_radius", 1.5)?,
            seed: f.or("problem", "seed", 0)?,
            volume_penalty: f.or("problem", "volume_penalty", if preset == "gripper-1x1" { 1e-2 } else { 0.0 })?,
            compliance_weight: f.or("problem", "compliance_weight", if preset == "gripper-1x1" { 1e-2 } else { 0.0 })?,
            preset,
            formulation,
            nx,
            ny,
        };

        let a = "ambiguity";
        let ambiguity = AmbiguitySection {
            sigma2: f.or(a, "sigma2", defaults.default_sigma2)?,
            eps: f.or(a, "eps", defaults.default_eps)?,
            m: f.take(a, "m")?,
            m1: f.take(a, "m1")?,
            m2: f.take(a, "m2")?,
            beta: f.take(a, "beta")?,
            threshold: f.take(a, "threshold")?,
            gamma: f.or(a, "gamma", crate::dro::SOFTPLUS_SHARPNESS)?,
            samples: f.or(a, "samples", 10)?,
            inner_samples: f.or(a, "inner_samples", 10)?,
            frozen: f.or(a, "frozen", false)?,
            modes: f.or(a, "modes", 10)?,
            correlation_length: f.or(a, "correlation_length", 0.02)?,
            amplitude: f.or(a, "amplitude", 100.0)?,
        };
        let required: &[(&str, bool)] = match formulation {
            FormulationKind::Wasserstein => &[("m", ambiguity.m.is_some())],
            FormulationKind::Moment => &[("m1", ambiguity.m1.is_some()), ("m2", ambiguity.m2.is_some())],
            FormulationKind::Cvar => &[("beta", ambiguity.beta.is_some()), ("threshold", ambiguity.threshold.is_some())],
            FormulationKind::CvarDro => &[
                ("m", ambiguity.m.is_some()),
                ("beta", ambiguity.beta.is_some()),
                ("threshold", ambiguity.threshold.is_some()),
            ],
            _ => &[],
        };
        if let Some((key, _)) = required.iter().find(|(_, present)| !present) {
            return Err(cfg_err(
                f.last_line,
                format!("formulation `{}` requires `ambiguity.{key}`", formulation.as_str()),
            ));
        }

        let o = "optimizer";
        let d = DescentConfig::default();
        let optimizer = DescentConfig {
            iterations: f.or(o, "iterations", d.iterations)?,
            step_design: f.or(o, "step_design", d.step_design)?,
            step_lambda: f.or(o, "step_lambda", d.step_lambda)?,
            step_tau: f.or(o, "step_tau", d.step_tau)?,
            step_s: f.or(o, "step_s", d.step_s)?,
            step_alpha: f.or(o, "step_alpha", d.step_alpha)?,
            decay_t0: f.or(o, "decay_t0", OptionalF64(d.decay_t0))?.0,
            restoration: f.or(o, "restoration", d.restoration)?,
            restoration_clip: f.or(o, "restoration_clip", d.restoration_clip)?,
            normalize_design_step: f.or(o, "normalize_design_step", d.normalize_design_step)?,
            active_tol: f.or(o, "active_tol", d.active_tol)?,
        };
        let output = OutputSection {
            dir: f.or("output", "dir", "out".to_string())?,
            pgm: f.or("output", "pgm", true)?,
            vtk: f.or("output", "vtk", true)?,
        };
        if let Some(((sec, key), e)) = f.map.iter().min_by_key(|(_, e)| e.line) {
            return Err(cfg_err(e.line, format!("unknown key `{key}` in [{sec}]")));
        }
        optimizer
            .validate()
            .map_err(|e| cfg_err(f.last_line, e.to_string()))?;
        Ok(Self {
            problem,
            ambiguity,
            optimizer,
            output,
        })
    }

    /// Canonical text with every field written out.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let p = &self.problem;
        let _ = writeln!(s, "[problem]");
        let _ = writeln!(s, "preset = {}", p.preset);
        let _ = writeln!(s, "formulation = {}", p.formulation.as_str());
        let _ = writeln!(s, "nx = {}", p.nx);
        let _ = writeln!(s, "ny = {}", p.ny);
        let _ = writeln!(s, "target_volume = {}", p.target_volume);
        let _ = writeln!(s, "filter_radius = {}", p.filter_radius);
        let _ = writeln!(s, "seed = {}", p.seed);
        let _ = writeln!(s, "volume_penalty = {}", p.volume_penalty);
        let _ = writeln!(s, "compliance_weight = {}", p.compliance_weight);

        let a = &self.ambiguity;
        let _ = writeln!(s, "\n[ambiguity]");
        let _ = writeln!(s, "sigma2 = {}", a.sigma2);
        let _ = writeln!(s, "eps = {}", a.eps);
        for (key, v) in [("m", a.m), ("m1", a.m1), ("m2", a.m2), ("beta", a.beta), ("threshold", a.threshold)] {
            if let Some(v) = v {
                let _ = writeln!(s, "{key} = {v}");
            }
        }
        let _ = writeln!(s, "gamma = {}", a.gamma);
        let _ = writeln!(s, "samples = {}", a.samples);
        let _ = writeln!(s, "inner_samples = {}", a.inner_samples);
        let _ = writeln!(s, "frozen = {}", a.frozen);
        let _ = writeln!(s, "modes = {}", a.modes);
        let _ = writeln!(s, "correlation_length = {}", a.correlation_length);
        let _ = writeln!(s, "amplitude = {}", a.amplitude);

        let o = &self.optimizer;
        let _ = writeln!(s, "\n[optimizer]");
        let _ = writeln!(s, "iterations = {}", o.iterations);
        let _ = writeln!(s, "step_design = {}", o.step_design);
        let _ = writeln!(s, "step_lambda = {}", o.step_lambda);
        let _ = writeln!(s, "step_tau = {}", o.step_tau);
        let _ = writeln!(s, "step_s = {}", o.step_s);
        let _ = writeln!(s, "step_alpha = {}", o.step_alpha);
        match o.decay_t0 {
            Some(t) => {
                let _ = writeln!(s, "decay_t0 = {t}");
            }
            None => {
                let _ = writeln!(s, "decay_t0 = none");
            }
        }
        let _ = writeln!(s, "restoration = {}", o.restoration);
        let _ = writeln!(s, "restoration_clip = {}", o.restoration_clip);
        let _ = writeln!(s, "normalize_design_step = {}", o.normalize_design_step);
        let _ = writeln!(s, "active_tol = {}", o.active_tol);

        let _ = writeln!(s, "\n[output]");
        let _ = writeln!(s, "dir = {}", self.output.dir);
        let _ = writeln!(s, "pgm = {}", self.output.pgm);
        let _ = writeln!(s, "vtk = {}", self.output.vtk);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MINIMAL: &str = "[problem]\npreset = cantilever-2x1\nformulation = deterministic\n";

    #[test]
    fn minimal_config_fills_defaults_and_round_trips() {
        let cfg = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!((cfg.problem.nx, cfg.problem.ny), (60, 30));
        assert_eq!(cfg.problem.target_volume, 0.6);
        assert_eq!(cfg.optimizer, DescentConfig::default());
        let text = cfg.to_text();
        let again = RunConfig::parse(&text).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_text(), text);
    }

    #[test]
    fn bridge_defaults_to_its_volume() {
        let cfg = RunConfig::parse("[problem]\npreset = bridge-1x2\nformulation = deterministic\n").unwrap();
        assert_eq!(cfg.problem.target_volume, 0.245);
    }

    #[test]
    fn missing_radius_is_named() {
        let err = RunConfig::parse("[problem]\npreset = cantilever-2x1\nformulation = wasserstein\n").unwrap_err();
        assert!(err.to_string().contains("`ambiguity.m`"), "{err}");
    }

    #[test]
    fn unknown_key_reports_its_line() {
        let text = format!("{MINIMAL}\n[optimizer]\niterations = 3\nstep_sizes = 2\n");
        match RunConfig::parse(&text) {
            Err(Error::Config { line, message }) => {
                assert_eq!(line, 7);
                assert!(message.contains("step_sizes"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn type_mismatch_reports_its_line() {
        let text = "[problem]\npreset = cantilever-2x1\nformulation = mean\nnx = ten\n";
        match RunConfig::parse(text) {
            Err(Error::Config { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_and_orphan_keys_are_rejected() {
        assert!(RunConfig::parse("[problem]\npreset = mast-T\npreset = mast-T\n").is_err());
        assert!(RunConfig::parse("preset = mast-T\n").is_err());
        assert!(RunConfig::parse("[solver]\n").is_err());
    }

    proptest! {
        #[test]
        fn canonical_text_is_a_fixed_point(
            m in proptest::option::of(0.0f64..1e3),
            step in 1e-6f64..1.0,
            t0 in proptest::option::of(1.0f64..500.0),
            seed in any::<u64>(),
            frozen in any::<bool>(),
            form in 0usize..4,
        ) {
            let formulation = ["deterministic", "mean", "wasserstein", "moment"][form];
            let mut text = format!(
                "[problem]\npreset = lbeam-1x1\nformulation = {formulation}\nseed = {seed}\n[ambiguity]\nm1 = 1\nm2 = 2\nfrozen = {frozen}\n"
            );
            if let Some(m) = m {
                text.push_str(&format!("m = {m}\n"));
            } else if formulation == "wasserstein" {
                text.push_str("m = 0\n");
            }
            text.push_str(&format!("[optimizer]\nstep_design = {step}\n"));
            if let Some(t0) = t0 {
                text.push_str(&format!("decay_t0 = {t0}\n"));
            } else {
                text.push_str("decay_t0 = none\n");
            }
            let cfg = RunConfig::parse(&text).unwrap();
            let canonical = cfg.to_text();
            let back = RunConfig::parse(&canonical).unwrap();
            prop_assert_eq!(&back, &cfg);
            prop_assert_eq!(back.to_text(), canonical);
        }
    }
}
