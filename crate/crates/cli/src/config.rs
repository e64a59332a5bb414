//! Declarative run description.
//!
//! A run file names the hardware profile, models, sparsity configs (explicitly or
//! as sweeps), batch sizes and outputs. Relative paths resolve against the run
//! file's directory. Command-line flags override the file field by field; list
//! flags replace the file's list rather than extending it, except `--engine-map`,
//! whose overrides apply after the file's.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use serde::Deserialize;
use sparsity_roofline::report::{OutputFormat, SvgOptions};
use sparsity_roofline::roofline::EngineMap;
use sparsity_roofline::sparsecost::{
    sparsity_sweep, DTypeWidths, SparsityConfig, SparsityPattern,
};

use crate::args::RunArgs;

pub const DEFAULT_OUT: &str = "sparsity-roofline-out";

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub hw: PathBuf,
    pub models: Vec<PathBuf>,
    pub configs: Vec<SparsityConfig>,
    pub batches: Vec<u64>,
    pub widths: DTypeWidths,
    pub engine_map: EngineMap,
    pub out: PathBuf,
    pub formats: Vec<OutputFormat>,
    pub svg: SvgOptions,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    hw: Option<PathBuf>,
    #[serde(default)]
    models: Vec<PathBuf>,
    #[serde(default)]
    sparsity: Vec<String>,
    #[serde(default)]
    sweep: Vec<RawSweep>,
    #[serde(default)]
    batch: Vec<u64>,
    widths: Option<RawWidths>,
    #[serde(default)]
    engine_map: Vec<String>,
    out: Option<PathBuf>,
    #[serde(default)]
    format: Vec<String>,
    svg_width: Option<u32>,
    svg_height: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWidths {
    value_bytes: Option<u64>,
    index_bytes: Option<u64>,
    pointer_bytes: Option<u64>,
}

/// Patterns crossed with a level schedule. N:M patterns have a fixed level and
/// contribute one config each.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    patterns: Vec<String>,
    levels: Option<Vec<f64>>,
    start: Option<f64>,
    steps: Option<usize>,
}

impl RawSweep {
    fn expand(&self) -> anyhow::Result<Vec<SparsityConfig>> {
        let levels = match (&self.levels, self.start, self.steps) {
            (Some(l), None, None) => l.clone(),
            (None, Some(start), Some(steps)) => sparsity_sweep(start, steps)?,
            (None, None, None) => Vec::new(),
            _ => bail!("a sweep takes either `levels` or both `start` and `steps`"),
        };
        let mut out = Vec::new();
        for text in &self.patterns {
            let pattern: SparsityPattern = text.parse()?;
            match pattern {
                SparsityPattern::Dense => out.push(SparsityConfig::dense()),
                SparsityPattern::NofM { .. } => out.push(SparsityConfig::from_parts(pattern, 0.0)?),
                _ => {
                    ensure!(!levels.is_empty(), "sweep over {pattern} has no levels");
                    for &level in &levels {
                        out.push(SparsityConfig::new(pattern, level)?);
                    }
                }
            }
        }
        Ok(out)
    }
}

fn resolve(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

impl RunConfig {
    /// Merges the optional run file named by `args.config` with the flags in `args`.
    pub fn from_args(args: &RunArgs) -> anyhow::Result<Self> {
        Self::load(args, true)
    }

    /// Like [`RunConfig::from_args`] but allows an empty config list, for commands
    /// that take their configs from another input.
    pub fn from_args_without_configs(args: &RunArgs) -> anyhow::Result<Self> {
        Self::load(args, false)
    }

    fn load(args: &RunArgs, need_configs: bool) -> anyhow::Result<Self> {
        let (raw, base) = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading run file {}", path.display()))?;
                let raw: RawRun = toml::from_str(&text)
                    .with_context(|| format!("parsing run file {}", path.display()))?;
                let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
                (raw, base)
            }
            None => (RawRun::default(), PathBuf::new()),
        };
        Self::merge(raw, &base, args, need_configs).with_context(|| match &args.config {
            Some(p) => format!("run configuration {}", p.display()),
            None => "run configuration".to_string(),
        })
    }

    fn merge(raw: RawRun, base: &Path, args: &RunArgs, need_configs: bool) -> anyhow::Result<Self> {
        let hw = match (&args.hw, raw.hw) {
            (Some(p), _) => p.clone(),
            (None, Some(p)) => resolve(base, p),
            (None, None) => bail!("no hardware profile given (--hw)"),
        };

        let models = if args.models.is_empty() {
            raw.models.into_iter().map(|p| resolve(base, p)).collect()
        } else {
            args.models.clone()
        };
        ensure!(!models.is_empty(), "no model spec given (--model)");

        let configs = if args.sparsity.is_empty() {
            let mut configs = Vec::new();
            for text in &raw.sparsity {
                configs.push(text.parse::<SparsityConfig>()?);
            }
            for sweep in &raw.sweep {
                configs.extend(sweep.expand()?);
            }
            configs
        } else {
            args.sparsity.clone()
        };
        ensure!(
            !need_configs || !configs.is_empty(),
            "no sparsity config given (--sparsity)"
        );
        let mut seen = HashSet::new();
        for c in &configs {
            ensure!(
                seen.insert((c.pattern(), c.level_key())),
                "sparsity config {c} is listed twice"
            );
        }

        let batches = match (args.batches.is_empty(), raw.batch.is_empty()) {
            (false, _) => args.batches.clone(),
            (true, false) => raw.batch,
            (true, true) => vec![1],
        };
        ensure!(batches.iter().all(|&b| b > 0), "batch sizes must be positive");
        let mut seen = HashSet::new();
        for b in &batches {
            ensure!(seen.insert(*b), "batch size {b} is listed twice");
        }

        let file_widths = raw.widths.unwrap_or_default();
        let default = DTypeWidths::default();
        let widths = DTypeWidths::new(
            args.value_bytes
                .or(file_widths.value_bytes)
                .unwrap_or(default.value_bytes),
            args.index_bytes
                .or(file_widths.index_bytes)
                .unwrap_or(default.index_bytes),
            args.pointer_bytes
                .or(file_widths.pointer_bytes)
                .unwrap_or(default.pointer_bytes),
        )?;

        let mut engine_map = EngineMap::default();
        for o in raw.engine_map.iter().chain(&args.engine_map) {
            engine_map.apply_override(o)?;
        }

        let out = match (&args.out, raw.out) {
            (Some(p), _) => p.clone(),
            (None, Some(p)) => resolve(base, p),
            (None, None) => PathBuf::from(DEFAULT_OUT),
        };

        let mut formats = if args.format.is_empty() {
            let mut f = Vec::new();
            for text in &raw.format {
                f.push(text.parse::<OutputFormat>()?);
            }
            f
        } else {
            args.format.clone()
        };
        if formats.is_empty() {
            formats.push(OutputFormat::Csv);
        }
        formats.sort_by_key(|f| f.extension());
        formats.dedup();

        let mut svg = SvgOptions::default();
        if let Some(w) = args.width.or(raw.svg_width) {
            svg.width = w;
        }
        if let Some(h) = args.height.or(raw.svg_height) {
            svg.height = h;
        }
        ensure!(svg.width >= 200 && svg.height >= 150, "svg must be at least 200x150");

        Ok(Self {
            hw,
            models,
            configs,
            batches,
            widths,
            engine_map,
            out,
            formats,
            svg,
        })
    }

    pub fn wants(&self, format: OutputFormat) -> bool {
        self.formats.contains(&format)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args() -> RunArgs {
        RunArgs {
            hw: Some("hw.toml".into()),
            models: vec!["m.json".into()],
            sparsity: vec!["nm:2:4".parse().unwrap()],
            ..RunArgs::default()
        }
    }

    #[test]
    fn flags_alone_are_enough() {
        let run = RunConfig::merge(RawRun::default(), Path::new(""), &args(), true).unwrap();
        assert_eq!(run.batches, vec![1]);
        assert_eq!(run.formats, vec![OutputFormat::Csv]);
        assert_eq!(run.widths, DTypeWidths::default());
        assert_eq!(run.out, PathBuf::from(DEFAULT_OUT));
    }

    #[test]
    fn sweeps_expand_in_order() {
        let raw: RawRun = toml::from_str(
            r#"
            hw = "hw.toml"
            models = ["m.json"]
            sparsity = ["dense"]
            [[sweep]]
            patterns = ["block:2x2", "block:4x4"]
            start = 0.5
            steps = 2
            [[sweep]]
            patterns = ["nm:2:4", "nm:1:4"]
            "#,
        )
        .unwrap();
        let run = RunConfig::merge(raw, Path::new("scen"), &RunArgs::default(), true).unwrap();
        let names: Vec<String> = run.configs.iter().map(|c| c.to_string()).collect();
        assert_eq!(
            names,
            [
                "dense",
                "block:2x2:0.5",
                "block:2x2:0.75",
                "block:4x4:0.5",
                "block:4x4:0.75",
                "nm:2:4",
                "nm:1:4"
            ]
        );
        assert_eq!(run.hw, Path::new("scen/hw.toml"));
        assert_eq!(run.models, vec![Path::new("scen/m.json")]);
    }

    #[test]
    fn flags_override_file() {
        let raw: RawRun = toml::from_str(
            r#"
            hw = "a.toml"
            models = ["x.json"]
            sparsity = ["unstructured:0.5"]
            batch = [1, 32]
            engine_map = ["unstructured=matrix"]
            [widths]
            index_bytes = 2
            "#,
        )
        .unwrap();
        let mut a = args();
        a.batches = vec![8];
        a.value_bytes = Some(1);
        let run = RunConfig::merge(raw, Path::new(""), &a, true).unwrap();
        assert_eq!(run.hw, Path::new("hw.toml"));
        assert_eq!(run.batches, vec![8]);
        assert_eq!(run.widths, DTypeWidths::new(1, 2, 4).unwrap());
        assert_eq!(run.configs.len(), 1);
        assert_eq!(
            run.engine_map
                .engine_for(SparsityPattern::Unstructured)
                .unwrap()
                .as_str(),
            "matrix"
        );
    }

    #[test]
    fn rejects_incomplete_or_duplicated_runs() {
        let mut a = args();
        a.hw = None;
        assert!(RunConfig::merge(RawRun::default(), Path::new(""), &a, true).is_err());

        let mut a = args();
        a.sparsity = vec!["nm:2:4".parse().unwrap(), "nm:2:4".parse().unwrap()];
        assert!(RunConfig::merge(RawRun::default(), Path::new(""), &a, true).is_err());

        let mut a = args();
        a.batches = vec![0];
        assert!(RunConfig::merge(RawRun::default(), Path::new(""), &a, true).is_err());

        let bad: Result<RawRun, _> = toml::from_str("hw = \"a\"\nbogus = 1\n");
        assert!(bad.is_err());
    }

    #[test]
    fn sweep_needs_levels_for_leveled_patterns() {
        let sweep = RawSweep {
            patterns: vec!["unstructured".into()],
            levels: None,
            start: None,
            steps: None,
        };
        assert!(sweep.expand().is_err());
        let sweep = RawSweep {
            patterns: vec!["unstructured".into()],
            levels: Some(vec![0.5]),
            start: Some(0.5),
            steps: None,
        };
        assert!(sweep.expand().is_err());
    }
}
