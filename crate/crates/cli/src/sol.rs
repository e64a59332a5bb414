//! Speedup tables and Sparsity Roofline series.

use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use rayon::prelude::*;
use sparsity_roofline::hwmodel::{load_profile, HardwareProfile};
use sparsity_roofline::netgraph::{load_model_spec, ModelGraph};
use sparsity_roofline::report::{
    assemble_series, emit, fmt_sig6, load_accuracy, LabeledPoint, OutputFormat, RooflineChart,
};
use sparsity_roofline::roofline::{model_sol, speedup_at_sol, ModelSol, SpeedupRecord};
use sparsity_roofline::sparsecost::SparsityConfig;

use crate::output::{write_output, Field, Table};
use crate::{failure, Classify, CliResult, Failure, RunConfig};

/// Inputs of a run, loaded once.
pub struct Loaded {
    pub profile: HardwareProfile,
    pub graphs: Vec<ModelGraph>,
}

impl Loaded {
    pub fn from_run(run: &RunConfig) -> CliResult<Self> {
        let profile = load_profile(&run.hw)
            .with_context(|| format!("hardware profile {}", run.hw.display()))
            .fail(Failure::Config)?;
        let mut graphs = Vec::with_capacity(run.models.len());
        let mut names = HashSet::new();
        for path in &run.models {
            let g = load_model_spec(path)
                .with_context(|| format!("model spec {}", path.display()))
                .fail(Failure::Config)?;
            if !names.insert(g.name.clone()) {
                return Err(failure(
                    Failure::Config,
                    anyhow!("model name `{}` appears in more than one spec ({})", g.name, path.display()),
                ));
            }
            graphs.push(g);
        }
        Ok(Self { profile, graphs })
    }
}

/// One (model, batch, config) evaluation.
pub struct Cell {
    pub sparse: ModelSol,
    pub speedup: SpeedupRecord,
}

/// Evaluates every (model, batch, config) cell of `run`, in that nesting order.
/// Cells run in parallel; the result order never depends on scheduling.
pub fn evaluate(run: &RunConfig, loaded: &Loaded) -> CliResult<Vec<Cell>> {
    let pairs: Vec<(&ModelGraph, u64)> = loaded
        .graphs
        .iter()
        .flat_map(|g| run.batches.iter().map(move |&b| (g, b)))
        .collect();
    let eval = |g: &ModelGraph, batch: u64, config: SparsityConfig| {
        g.with_batch(batch)
            .and_then(|g| model_sol(&g, config, &loaded.profile, run.widths, &run.engine_map))
            .with_context(|| format!("model `{}` at batch {batch} under {config}", g.name))
    };

    let dense: Vec<ModelSol> = pairs
        .par_iter()
        .map(|&(g, b)| eval(g, b, SparsityConfig::dense()))
        .collect::<anyhow::Result<_>>()
        .fail(Failure::Config)?;

    let jobs: Vec<(usize, SparsityConfig)> = (0..pairs.len())
        .flat_map(|p| run.configs.iter().map(move |&c| (p, c)))
        .collect();
    jobs.par_iter()
        .map(|&(p, config)| {
            let (g, b) = pairs[p];
            let sparse = eval(g, b, config)?;
            let speedup = speedup_at_sol(&dense[p], &sparse)?;
            Ok(Cell { sparse, speedup })
        })
        .collect::<anyhow::Result<_>>()
        .fail(Failure::Config)
}

pub const SPEEDUP_COLUMNS: &[&str] = &[
    "model",
    "pattern",
    "level",
    "batch",
    "engine",
    "dense_sol_s",
    "sparse_sol_s",
    "speedup",
];

pub const LAYER_COLUMNS: &[&str] = &[
    "model",
    "pattern",
    "level",
    "batch",
    "layer",
    "layer_config",
    "m",
    "k",
    "n",
    "engine",
    "flops",
    "weight_value_bytes",
    "index_bytes",
    "input_feature_bytes",
    "output_feature_bytes",
    "total_bytes",
    "ai",
    "bound",
    "sol_s",
];

fn cell_key(r: &SpeedupRecord) -> Vec<Field> {
    vec![
        r.model.as_str().into(),
        r.config.pattern().to_string().into(),
        r.config.level().into(),
        r.batch.into(),
    ]
}

pub fn speedup_table<'a>(
    records: impl IntoIterator<Item = &'a SpeedupRecord>,
    run: &RunConfig,
) -> Table {
    let mut t = Table::new(SPEEDUP_COLUMNS);
    for r in records {
        let engine = run
            .engine_map
            .engine_for(r.config.pattern())
            .map(|e| e.as_str().to_string())
            .ok();
        let mut row = cell_key(r);
        row.extend([
            engine.into(),
            r.dense_sol_s.into(),
            r.sparse_sol_s.into(),
            r.speedup.into(),
        ]);
        t.push(row);
    }
    t
}

pub fn layer_table(cells: &[Cell]) -> Table {
    let mut t = Table::new(LAYER_COLUMNS);
    for c in cells {
        for l in &c.sparse.per_layer {
            let mut row = cell_key(&c.speedup);
            row.extend([
                l.id.as_str().into(),
                l.config.to_string().into(),
                l.shape.m.into(),
                l.shape.k.into(),
                l.shape.n.into(),
                l.sol.engine.as_str().into(),
                l.cost.flops.into(),
                l.cost.weight_value_bytes.into(),
                l.cost.index_bytes.into(),
                l.cost.input_feature_bytes.into(),
                l.cost.output_feature_bytes.into(),
                l.cost.total_bytes.into(),
                l.sol.ai.into(),
                l.sol.bound.as_str().into(),
                l.sol.latency_s.into(),
            ]);
            t.push(row);
        }
    }
    t
}

/// Each cell as one point at its whole-model intensity and SoL throughput.
fn roofline_svg(cells: &[Cell], loaded: &Loaded, run: &RunConfig) -> anyhow::Result<String> {
    let points = cells
        .iter()
        .map(|c| {
            let flops: u64 = c.sparse.per_layer.iter().map(|l| l.cost.flops).sum();
            let bytes: u64 = c.sparse.per_layer.iter().map(|l| l.cost.total_bytes).sum();
            LabeledPoint {
                label: format!("{} {} b{}", c.sparse.model, c.sparse.config, c.sparse.batch),
                ai: flops as f64 / bytes as f64,
                flops_per_s: flops as f64 / c.sparse.total_latency_s,
            }
        })
        .collect();
    let chart = RooflineChart {
        profile: &loaded.profile,
        engines: loaded.profile.engines().map(|(e, _)| e).collect(),
        points,
    };
    Ok(chart.render_svg(&run.svg)?)
}

/// Per-layer SoL tables and per-model speedups for every cell of `run`.
pub fn cmd_sol(run: &RunConfig, out: &mut dyn Write) -> CliResult<Vec<PathBuf>> {
    let loaded = Loaded::from_run(run)?;
    let cells = evaluate(run, &loaded)?;
    let speedups = speedup_table(cells.iter().map(|c| &c.speedup), run);
    let layers = layer_table(&cells);

    let mut written = Vec::new();
    let mut put = |name: &str, bytes: anyhow::Result<Vec<u8>>| -> CliResult<()> {
        let bytes = bytes.fail(Failure::Output)?;
        written.push(write_output(&run.out, name, &bytes).fail(Failure::Output)?);
        Ok(())
    };
    for &format in &run.formats {
        match format {
            OutputFormat::Csv => {
                put("speedup.csv", speedups.to_csv())?;
                put("layers.csv", layers.to_csv())?;
            }
            OutputFormat::Json => {
                put("speedup.json", speedups.to_json())?;
                put("layers.json", layers.to_json())?;
            }
            OutputFormat::Svg => {
                put("roofline.svg", roofline_svg(&cells, &loaded, run).map(String::into_bytes))?;
            }
        }
    }

    for c in &cells {
        let r = &c.speedup;
        writeln!(
            out,
            "{} batch {} {}: speedup {} (dense {} s, sparse {} s)",
            r.model,
            r.batch,
            r.config,
            fmt_sig6(r.speedup),
            fmt_sig6(r.dense_sol_s),
            fmt_sig6(r.sparse_sol_s)
        )
        .fail(Failure::Output)?;
    }
    Ok(written)
}

/// Speedups joined with accuracy, emitted as `series.{csv,json,svg}` plus an
/// `unjoined.csv` listing speedups that had no accuracy record.
pub fn cmd_sparsity_roofline(
    run: &RunConfig,
    accuracy: &Path,
    out: &mut dyn Write,
) -> CliResult<Vec<PathBuf>> {
    if run.batches.len() != 1 {
        return Err(failure(
            Failure::Config,
            anyhow!(
                "sparsity-roofline takes exactly one batch size, got {}",
                run.batches.len()
            ),
        ));
    }
    let loaded = Loaded::from_run(run)?;
    let records = load_accuracy(accuracy)
        .with_context(|| format!("accuracy file {}", accuracy.display()))
        .fail(Failure::Data)?;
    let cells = evaluate(run, &loaded)?;
    let speedups: Vec<SpeedupRecord> = cells.into_iter().map(|c| c.speedup).collect();
    let set = assemble_series(&speedups, &records)
        .with_context(|| format!("joining speedups with {}", accuracy.display()))
        .fail(Failure::Data)?;

    std::fs::create_dir_all(&run.out)
        .with_context(|| format!("creating {}", run.out.display()))
        .fail(Failure::Output)?;
    let mut written = Vec::new();
    for &format in &run.formats {
        let path = run.out.join(format!("series.{}", format.extension()));
        let result = emit(&set.series, format, &path, &run.svg);
        if let Err(e @ sparsity_roofline::Error::Io { .. }) = result {
            return Err(failure(Failure::Output, e.into()));
        }
        result.fail(Failure::Data)?;
        log::info!("wrote {}", path.display());
        written.push(path);
    }

    let bytes = speedup_table(&set.unjoined, run).to_csv().fail(Failure::Output)?;
    written.push(write_output(&run.out, "unjoined.csv", &bytes).fail(Failure::Output)?);
    for r in &set.unjoined {
        log::warn!("no accuracy for {} {} (speedup {})", r.model, r.config, fmt_sig6(r.speedup));
    }

    let points: usize = set.series.iter().map(|s| s.points.len()).sum();
    writeln!(
        out,
        "{} series, {} points, {} speedups without accuracy",
        set.series.len(),
        points,
        set.unjoined.len()
    )
    .fail(Failure::Output)?;
    for s in &set.series {
        let xs: Vec<String> = s.points.iter().map(|p| fmt_sig6(p.speedup)).collect();
        writeln!(out, "{}: speedup {}", s.name(), xs.join(" ")).fail(Failure::Output)?;
    }
    Ok(written)
}
