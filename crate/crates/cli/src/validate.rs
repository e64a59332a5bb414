//! Measured latencies against their speed-of-light bounds.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use rayon::prelude::*;
use sparsity_roofline::report::{fmt_sig6, OutputFormat};
use sparsity_roofline::roofline::{
    check_under_roof, load_measurements, measured_speedup, model_sol, percent_of_sol,
    roofline_point, Measurement, ModelSol, Scope, PERCENT_OF_SOL_TOLERANCE,
};
use sparsity_roofline::sparsecost::{CostBreakdown, PatternKind, SparsityConfig};
use sparsity_roofline::Error;

use crate::output::{write_output, Table};
use crate::sol::Loaded;
use crate::{failure, Classify, CliResult, Failure, RunConfig};

/// Speedups whose relative difference is below this are reported as equal.
pub const SPEEDUP_EQUALITY_RTOL: f64 = 1e-9;

pub const REPORT_COLUMNS: &[&str] = &[
    "scope",
    "pattern",
    "level",
    "engine",
    "flops",
    "bytes",
    "ai",
    "sol_s",
    "measured_s",
    "percent_of_sol",
    "achieved_flops_per_s",
    "roof_flops_per_s",
    "status",
];

pub const SPEEDUP_COLUMNS: &[&str] = &[
    "scope",
    "pattern",
    "level",
    "dense_percent_of_sol",
    "sparse_percent_of_sol",
    "percent_gap",
    "predicted_speedup",
    "measured_speedup",
    "relation",
];

/// One measurement checked against its bound.
#[derive(Debug, Clone)]
pub struct Checked {
    pub measurement: Measurement,
    pub sol_s: f64,
    pub percent_of_sol: f64,
    pub achieved_flops_per_s: f64,
    pub violation: Option<String>,
}

/// How a measured speedup relates to the predicted one.
pub fn relation(predicted: f64, measured: f64) -> &'static str {
    if ((measured - predicted) / predicted).abs() <= SPEEDUP_EQUALITY_RTOL {
        "equal"
    } else if measured < predicted {
        "below"
    } else {
        "above"
    }
}

fn scope_cost(sol: &ModelSol, scope: &Scope) -> Option<(CostBreakdown, Option<String>, f64)> {
    match scope {
        Scope::Model => {
            let mut c = CostBreakdown::default();
            for l in &sol.per_layer {
                c.flops += l.cost.flops;
                c.total_bytes += l.cost.total_bytes;
            }
            Some((c, None, sol.total_latency_s))
        }
        Scope::Layer(id) => sol
            .layer(id)
            .map(|l| (l.cost, Some(l.sol.engine.as_str().to_string()), l.sol.latency_s)),
    }
}

/// Checks every measurement against the model's SoL and writes `validate.*` and
/// `speedup_check.*`. Physically impossible measurements are reported and then
/// fail the command.
pub fn cmd_validate(run: &RunConfig, measurements: &Path, out: &mut dyn Write) -> CliResult<Vec<PathBuf>> {
    let one = |what: &str, n: usize| {
        if n == 1 {
            Ok(())
        } else {
            Err(failure(Failure::Config, anyhow!("validate takes exactly one {what}, got {n}")))
        }
    };
    one("model", run.models.len())?;
    one("batch size", run.batches.len())?;
    let loaded = Loaded::from_run(run)?;
    let graph = loaded.graphs[0].with_batch(run.batches[0]).fail(Failure::Config)?;
    let ms = load_measurements(measurements)
        .with_context(|| format!("measurement file {}", measurements.display()))
        .fail(Failure::Data)?;
    if ms.is_empty() {
        return Err(failure(
            Failure::Data,
            anyhow!("measurement file {} has no rows", measurements.display()),
        ));
    }

    let mut configs: Vec<SparsityConfig> = vec![SparsityConfig::dense()];
    for m in &ms {
        let key = (m.config.pattern(), m.config.level_key());
        if !configs.iter().any(|c| (c.pattern(), c.level_key()) == key) {
            configs.push(m.config);
        }
    }
    let sols: Vec<ModelSol> = configs
        .par_iter()
        .map(|&c| {
            model_sol(&graph, c, &loaded.profile, run.widths, &run.engine_map)
                .with_context(|| format!("model `{}` under {c}", graph.name))
        })
        .collect::<anyhow::Result<_>>()
        .fail(Failure::Config)?;
    let sol_for = |c: &SparsityConfig| {
        let i = configs
            .iter()
            .position(|x| x.pattern() == c.pattern() && x.level_key() == c.level_key())
            .expect("every measured config was evaluated");
        &sols[i]
    };

    let mut report = Table::new(REPORT_COLUMNS);
    let mut checked = Vec::with_capacity(ms.len());
    for m in &ms {
        let sol = sol_for(&m.config);
        let (cost, engine, sol_s) = scope_cost(sol, &m.scope).ok_or_else(|| {
            failure(
                Failure::Data,
                anyhow!(
                    "measurement scope `{}` is not a layer of model `{}`",
                    m.scope,
                    graph.name
                ),
            )
        })?;
        let point = roofline_point(&cost, m).fail(Failure::Data)?;
        let fraction = sol_s / m.measured_latency_s;
        let mut violation = match &m.scope {
            Scope::Model => percent_of_sol(sol, m).err(),
            Scope::Layer(id) => percent_of_sol(sol.layer(id).expect("scope resolved"), m).err(),
        };
        let mut roof = None;
        if let Scope::Layer(id) = &m.scope {
            let e = sol.layer(id).expect("scope resolved").sol.engine;
            roof = Some(loaded.profile.roof_throughput(e, point.ai).fail(Failure::Config)?);
            if violation.is_none() {
                violation = check_under_roof(&point, &loaded.profile, e).err();
            }
        }
        let status = match &violation {
            None => "ok",
            Some(Error::FasterThanLight { .. }) => "faster_than_sol",
            Some(Error::AboveRoof { .. }) => "above_roof",
            Some(_) => "invalid",
        };
        report.push(vec![
            m.scope.to_string().into(),
            m.config.pattern().to_string().into(),
            m.config.level().into(),
            engine.into(),
            cost.flops.into(),
            cost.total_bytes.into(),
            point.ai.into(),
            sol_s.into(),
            m.measured_latency_s.into(),
            fraction.into(),
            point.achieved_flops_per_s.into(),
            roof.into(),
            status.into(),
        ]);
        writeln!(
            out,
            "{} {}: {}% of SoL, achieved {} FLOP/s{}",
            m.scope,
            m.config,
            fmt_sig6(fraction * 100.0),
            fmt_sig6(point.achieved_flops_per_s),
            if status == "ok" { String::new() } else { format!(" [{status}]") }
        )
        .fail(Failure::Output)?;
        checked.push(Checked {
            measurement: m.clone(),
            sol_s,
            percent_of_sol: fraction,
            achieved_flops_per_s: point.achieved_flops_per_s,
            violation: violation.map(|e| e.to_string()),
        });
    }

    // dense measurement per scope, for the speedup comparison
    let dense: BTreeMap<&Scope, &Checked> = checked
        .iter()
        .filter(|c| c.measurement.config.pattern().kind() == PatternKind::Dense)
        .map(|c| (&c.measurement.scope, c))
        .collect();
    let mut speedups = Table::new(SPEEDUP_COLUMNS);
    for c in &checked {
        let m = &c.measurement;
        if m.config.pattern().kind() == PatternKind::Dense {
            continue;
        }
        let Some(d) = dense.get(&m.scope) else {
            continue;
        };
        let predicted = d.sol_s / c.sol_s;
        let measured = measured_speedup(d.measurement.measured_latency_s, m.measured_latency_s)
            .fail(Failure::Data)?;
        let rel = relation(predicted, measured);
        speedups.push(vec![
            m.scope.to_string().into(),
            m.config.pattern().to_string().into(),
            m.config.level().into(),
            d.percent_of_sol.into(),
            c.percent_of_sol.into(),
            (c.percent_of_sol - d.percent_of_sol).into(),
            predicted.into(),
            measured.into(),
            rel.into(),
        ]);
        let verb = match rel {
            "equal" => "equals",
            "below" => "exceeds",
            _ => "falls short of",
        };
        writeln!(
            out,
            "{} {}: predicted speedup {} {} measured speedup {} (dense {}% of SoL, sparse {}%)",
            m.scope,
            m.config,
            fmt_sig6(predicted),
            verb,
            fmt_sig6(measured),
            fmt_sig6(d.percent_of_sol * 100.0),
            fmt_sig6(c.percent_of_sol * 100.0)
        )
        .fail(Failure::Output)?;
    }

    let mut written = Vec::new();
    for &format in &run.formats {
        let (r, s) = match format {
            OutputFormat::Csv => (report.to_csv(), speedups.to_csv()),
            OutputFormat::Json => (report.to_json(), speedups.to_json()),
            OutputFormat::Svg => continue,
        };
        let ext = format.extension();
        for (name, bytes) in [("validate", r), ("speedup_check", s)] {
            let bytes = bytes.fail(Failure::Output)?;
            written.push(write_output(&run.out, &format!("{name}.{ext}"), &bytes).fail(Failure::Output)?);
        }
    }

    let bad: Vec<String> = checked
        .iter()
        .filter_map(|c| {
            c.violation
                .as_ref()
                .map(|v| format!("{} {}: {v}", c.measurement.scope, c.measurement.config))
        })
        .collect();
    if !bad.is_empty() {
        return Err(failure(
            Failure::Physical,
            anyhow!(
                "{} measurement(s) exceed the speed-of-light bound by more than {}%:\n  {}",
                bad.len(),
                PERCENT_OF_SOL_TOLERANCE * 100.0,
                bad.join("\n  ")
            ),
        ));
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::relation;

    #[test]
    fn relation_is_symmetric_about_equality() {
        assert_eq!(relation(2.0, 2.0), "equal");
        assert_eq!(relation(2.0, 2.0 * (1.0 + 1e-12)), "equal");
        assert_eq!(relation(2.0, 1.5), "below");
        assert_eq!(relation(2.0, 2.5), "above");
    }
}
