//! Speed-of-light latency, per-model aggregation, speedup, and validation against
//! measured runtimes.
//!
//! Per layer the speed-of-light (SoL) latency is
//! `max(flops / peak_flops[engine], bytes / peak_mem_bw)`. A model's SoL latency is
//! the in-order sum over its matmul layers, and the speedup at SoL is
//! `dense_total / sparse_total`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::hwmodel::{EngineClass, HardwareProfile};
use crate::netgraph::{MatmulShape, ModelGraph};
use crate::sparsecost::{
    bytes_moved, instantiate, CostBreakdown, DTypeWidths, PatternKind, SparsityConfig,
    SparsityPattern,
};

/// Measured latencies may undercut the SoL bound by this fraction before the data is
/// declared inconsistent (timing jitter).
pub const PERCENT_OF_SOL_TOLERANCE: f64 = 0.01;

/// Tolerance for achieved throughput above the roof.
pub const ROOF_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Bound {
    MemoryBound,
    ComputeBound,
}

impl Bound {
    pub fn as_str(self) -> &'static str {
        match self {
            Bound::MemoryBound => "memory",
            Bound::ComputeBound => "compute",
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which engine executes each pattern family.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EngineMap(BTreeMap<PatternKind, EngineClass>);

impl Default for EngineMap {
    /// Dense and block run on matrix units, unstructured (CSR) on scalar cores, and
    /// N:M on sparse matrix units.
    fn default() -> Self {
        Self(BTreeMap::from([
            (PatternKind::Dense, EngineClass::MatrixUnit),
            (PatternKind::Unstructured, EngineClass::ScalarCore),
            (PatternKind::Block, EngineClass::MatrixUnit),
            (PatternKind::NofM, EngineClass::SparseMatrixUnit),
        ]))
    }
}

impl EngineMap {
    pub fn set(&mut self, kind: PatternKind, engine: EngineClass) {
        self.0.insert(kind, engine);
    }

    pub fn engine_for(&self, pattern: SparsityPattern) -> Result<EngineClass> {
        self.0.get(&pattern.kind()).copied().ok_or_else(|| {
            Error::InvalidArgument(format!("no engine mapped for pattern `{}`", pattern.kind()))
        })
    }

    /// Applies one `pattern=engine` override, e.g. `unstructured=matrix`.
    pub fn apply_override(&mut self, text: &str) -> Result<()> {
        let (kind, engine) = text.split_once('=').ok_or_else(|| {
            Error::InvalidArgument(format!("engine override `{text}` is not pattern=engine"))
        })?;
        self.set(kind.parse()?, engine.parse()?);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (PatternKind, EngineClass)> + '_ {
        self.0.iter().map(|(&k, &e)| (k, e))
    }
}

impl FromStr for EngineMap {
    type Err = Error;

    /// Default map with comma-separated overrides applied.
    fn from_str(s: &str) -> Result<Self> {
        let mut map = Self::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            map.apply_override(part)?;
        }
        Ok(map)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolResult {
    pub latency_s: f64,
    pub ai: f64,
    pub bound: Bound,
    pub engine: EngineClass,
    pub flops: u64,
    pub bytes: u64,
}

/// One layer's SoL evaluation with its inputs kept for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSol {
    pub id: String,
    pub shape: MatmulShape,
    pub config: SparsityConfig,
    pub cost: CostBreakdown,
    pub sol: SolResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSol {
    pub model: String,
    pub batch: u64,
    pub config: SparsityConfig,
    pub per_layer: Vec<LayerSol>,
    pub total_latency_s: f64,
}

impl ModelSol {
    pub fn layer(&self, id: &str) -> Option<&LayerSol> {
        self.per_layer.iter().find(|l| l.id == id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedupRecord {
    pub model: String,
    pub batch: u64,
    pub config: SparsityConfig,
    pub dense_sol_s: f64,
    pub sparse_sol_s: f64,
    pub speedup: f64,
}

/// What a measurement refers to.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scope {
    Model,
    Layer(String),
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Model => f.write_str("model"),
            Scope::Layer(id) => f.write_str(id),
        }
    }
}

impl From<&str> for Scope {
    fn from(s: &str) -> Self {
        if s == "model" {
            Scope::Model
        } else {
            Scope::Layer(s.to_string())
        }
    }
}

/// An externally measured latency.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub scope: Scope,
    pub config: SparsityConfig,
    pub measured_latency_s: f64,
}

impl Measurement {
    pub fn new(scope: impl Into<Scope>, config: SparsityConfig, measured_latency_s: f64) -> Result<Self> {
        if !(measured_latency_s.is_finite() && measured_latency_s > 0.0) {
            return Err(Error::invalid_field(
                "latency",
                format!("measured latency must be positive, got {measured_latency_s}"),
            ));
        }
        Ok(Self {
            scope: scope.into(),
            config,
            measured_latency_s,
        })
    }
}

#[derive(serde::Deserialize)]
struct MeasurementRow {
    scope: String,
    pattern: String,
    level: f64,
    latency_ms: f64,
}

/// Reads a measurement CSV with header `scope,pattern,level,latency_ms`.
pub fn load_measurements(path: impl AsRef<Path>) -> Result<Vec<Measurement>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_measurements(file, &path.display().to_string())
}

pub fn parse_measurements(reader: impl Read, context: &str) -> Result<Vec<Measurement>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<MeasurementRow>().enumerate() {
        let at = |message: String| Error::ParseLine {
            context: context.to_string(),
            line: i + 2,
            message,
        };
        let row = row.map_err(|e| at(e.to_string()))?;
        let pattern: SparsityPattern = row.pattern.parse().map_err(|e: Error| at(e.to_string()))?;
        let config = SparsityConfig::new(pattern, row.level).map_err(|e| at(e.to_string()))?;
        let m = Measurement::new(row.scope.as_str(), config, row.latency_ms * 1e-3)
            .map_err(|e| at(e.to_string()))?;
        if !seen.insert((m.scope.clone(), pattern, config.level_key())) {
            return Err(Error::Duplicate {
                what: "measurement",
                key: format!("{},{},{}", row.scope, pattern, row.level),
            });
        }
        out.push(m);
    }
    Ok(out)
}

/// Anything that carries a speed-of-light latency.
pub trait SolLatency {
    fn sol_latency_s(&self) -> f64;
}

impl SolLatency for SolResult {
    fn sol_latency_s(&self) -> f64 {
        self.latency_s
    }
}

impl SolLatency for LayerSol {
    fn sol_latency_s(&self) -> f64 {
        self.sol.latency_s
    }
}

impl SolLatency for ModelSol {
    fn sol_latency_s(&self) -> f64 {
        self.total_latency_s
    }
}

/// FLOPs per byte moved.
pub fn arithmetic_intensity(flops: f64, bytes: f64) -> Result<f64> {
    if bytes == 0.0 {
        return Err(Error::UndefinedIntensity);
    }
    if !(bytes > 0.0 && flops >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "flops and bytes must be non-negative, got {flops} and {bytes}"
        )));
    }
    Ok(flops / bytes)
}

/// Per-layer speed-of-light latency. Ties at the knee classify as compute-bound.
pub fn sol_latency(
    cost: &CostBreakdown,
    profile: &HardwareProfile,
    engine: EngineClass,
) -> Result<SolResult> {
    let peak = profile.peak_flops(engine)?;
    let compute_s = cost.flops as f64 / peak;
    let memory_s = cost.total_bytes as f64 / profile.peak_mem_bw();
    let (latency_s, bound) = if compute_s >= memory_s {
        (compute_s, Bound::ComputeBound)
    } else {
        (memory_s, Bound::MemoryBound)
    };
    Ok(SolResult {
        latency_s,
        ai: arithmetic_intensity(cost.flops as f64, cost.total_bytes as f64)?,
        bound,
        engine,
        flops: cost.flops,
        bytes: cost.total_bytes,
    })
}

/// SoL of every matmul layer under `config`, summed in layer order.
///
/// Non-prunable layers are costed as dense on the dense engine, so the dense
/// baseline and every sparse variant cover the same layer set.
pub fn model_sol(
    graph: &ModelGraph,
    config: SparsityConfig,
    profile: &HardwareProfile,
    widths: DTypeWidths,
    engine_map: &EngineMap,
) -> Result<ModelSol> {
    let dense = SparsityConfig::dense();
    let mut per_layer = Vec::with_capacity(graph.layers.len());
    for (layer, shape) in graph.lowered()? {
        let layer_config = if layer.prunable { config } else { dense };
        let evaluate = || -> Result<LayerSol> {
            let engine = engine_map.engine_for(layer_config.pattern())?;
            let inst = instantiate(layer_config, shape)?;
            let cost = bytes_moved(&inst, widths)?;
            let sol = sol_latency(&cost, profile, engine)?;
            Ok(LayerSol {
                id: layer.id.clone(),
                shape,
                config: layer_config,
                cost,
                sol,
            })
        };
        per_layer.push(evaluate().map_err(|e| e.in_layer(&layer.id))?);
    }
    let total_latency_s = per_layer.iter().map(|l| l.sol.latency_s).sum();
    Ok(ModelSol {
        model: graph.name.clone(),
        batch: graph.batch,
        config,
        per_layer,
        total_latency_s,
    })
}

/// Ratio of dense to sparse SoL latency; above 1 is a speedup.
pub fn speedup_at_sol(dense: &ModelSol, sparse: &ModelSol) -> Result<SpeedupRecord> {
    for (name, v) in [("dense", dense.total_latency_s), ("sparse", sparse.total_latency_s)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "{name} SoL latency must be positive, got {v}"
            )));
        }
    }
    Ok(SpeedupRecord {
        model: sparse.model.clone(),
        batch: sparse.batch,
        config: sparse.config,
        dense_sol_s: dense.total_latency_s,
        sparse_sol_s: sparse.total_latency_s,
        speedup: dense.total_latency_s / sparse.total_latency_s,
    })
}

/// Fraction of speed-of-light achieved by a measured run, `sol / measured`.
///
/// Fails when the measurement beats the SoL bound by more than
/// [`PERCENT_OF_SOL_TOLERANCE`].
pub fn percent_of_sol(sol: &impl SolLatency, measured: &Measurement) -> Result<f64> {
    let measured_s = measured.measured_latency_s;
    if !(measured_s.is_finite() && measured_s > 0.0) {
        return Err(Error::invalid_field("latency", "must be positive"));
    }
    let sol_s = sol.sol_latency_s();
    let fraction = sol_s / measured_s;
    if fraction > 1.0 + PERCENT_OF_SOL_TOLERANCE {
        return Err(Error::FasterThanLight {
            sol_s,
            measured_s,
            fraction,
        });
    }
    Ok(fraction)
}

/// Ratio of two measured latencies, dense over sparse.
pub fn measured_speedup(dense_measured_s: f64, sparse_measured_s: f64) -> Result<f64> {
    if !(dense_measured_s > 0.0 && sparse_measured_s > 0.0) {
        return Err(Error::InvalidArgument(
            "measured latencies must be positive".into(),
        ));
    }
    Ok(dense_measured_s / sparse_measured_s)
}

/// A measured kernel placed on the classic Roofline plot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RooflinePoint {
    pub ai: f64,
    pub achieved_flops_per_s: f64,
}

pub fn roofline_point(cost: &CostBreakdown, measured: &Measurement) -> Result<RooflinePoint> {
    if !(measured.measured_latency_s > 0.0) {
        return Err(Error::invalid_field("latency", "must be positive"));
    }
    Ok(RooflinePoint {
        ai: arithmetic_intensity(cost.flops as f64, cost.total_bytes as f64)?,
        achieved_flops_per_s: cost.flops as f64 / measured.measured_latency_s,
    })
}

/// Flags points that sit above the roof by more than [`ROOF_TOLERANCE`].
pub fn check_under_roof(
    point: &RooflinePoint,
    profile: &HardwareProfile,
    engine: EngineClass,
) -> Result<()> {
    let roof = profile.roof_throughput(engine, point.ai)?;
    if point.achieved_flops_per_s > roof * (1.0 + ROOF_TOLERANCE) {
        return Err(Error::AboveRoof {
            engine,
            ai: point.ai,
            achieved: point.achieved_flops_per_s,
            roof,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::{LayerKind, LayerSpec};

    fn toy() -> HardwareProfile {
        HardwareProfile::new(
            "toy",
            [
                (EngineClass::ScalarCore, 1.0e12),
                (EngineClass::MatrixUnit, 1.6e13),
            ],
            1.0e11,
        )
        .unwrap()
    }

    fn cost(flops: u64, bytes: u64) -> CostBreakdown {
        CostBreakdown {
            flops,
            total_bytes: bytes,
            input_feature_bytes: bytes,
            ..Default::default()
        }
    }

    fn raw(id: &str, m: u64, k: u64, n: u64) -> LayerSpec {
        LayerSpec::new(id, LayerKind::RawMatmul { m, k, n_per_sample: n }, true)
    }

    #[test]
    fn intensity_cases() {
        assert_eq!(arithmetic_intensity(0.0, 1024.0).unwrap(), 0.0);
        assert_eq!(arithmetic_intensity(77.0, 77.0).unwrap(), 1.0);
        assert!(matches!(arithmetic_intensity(1.0, 0.0), Err(Error::UndefinedIntensity)));
    }

    #[test]
    fn table_intensity_matches_hand_computation() {
        let shape = MatmulShape::new(3072, 768, 6272).unwrap();
        let mut inst = instantiate(SparsityConfig::block(32, 32, 0.5).unwrap(), shape).unwrap();
        inst.stored_nnz = 1_950_000;
        inst.index_elements = 1_950_000 / 1024;
        let c = bytes_moved(&inst, DTypeWidths::default()).unwrap();
        let by_hand_bytes = 1_950_000.0 * 2.0
            + (1904.0 * 4.0 + 97.0 * 4.0)
            + 6272.0 * 768.0 * 2.0
            + 3072.0 * 6272.0 * 2.0;
        let ai = arithmetic_intensity(c.flops as f64, c.total_bytes as f64).unwrap();
        assert_eq!(c.total_bytes as f64, by_hand_bytes);
        assert!((ai - 24.4608e9 / by_hand_bytes).abs() < 1e-12 * ai);
    }

    #[test]
    fn sol_examples() {
        let p = toy();
        let r = sol_latency(&cost(1_000_000_000, 1_000_000_000), &p, EngineClass::ScalarCore).unwrap();
        assert!((r.latency_s - 0.01).abs() < 1e-15);
        assert_eq!(r.bound, Bound::MemoryBound);
        let r = sol_latency(&cost(1_000_000_000_000, 1_000_000_000), &p, EngineClass::ScalarCore).unwrap();
        assert!((r.latency_s - 1.0).abs() < 1e-15);
        assert_eq!(r.bound, Bound::ComputeBound);
        // exactly at the scalar knee (10 FLOP/byte)
        let r = sol_latency(&cost(10_000, 1_000), &p, EngineClass::ScalarCore).unwrap();
        assert_eq!(r.bound, Bound::ComputeBound);
        assert_eq!(r.ai, 10.0);
    }

    #[test]
    fn missing_engine_peak() {
        let p = HardwareProfile::new("s", [(EngineClass::ScalarCore, 1.0)], 1.0).unwrap();
        assert!(matches!(
            sol_latency(&cost(1, 1), &p, EngineClass::MatrixUnit),
            Err(Error::MissingEngine(_))
        ));
    }

    #[test]
    fn model_sums_and_singleton() {
        let p = toy();
        let w = DTypeWidths::default();
        let map = EngineMap::default();
        let cfg = SparsityConfig::unstructured(0.5).unwrap();
        let one = ModelGraph::new("one", 1, vec![raw("a", 64, 64, 8)]).unwrap();
        let two = ModelGraph::new("two", 1, vec![raw("a", 64, 64, 8), raw("b", 64, 64, 8)]).unwrap();
        let s1 = model_sol(&one, cfg, &p, w, &map).unwrap();
        let s2 = model_sol(&two, cfg, &p, w, &map).unwrap();
        assert_eq!(s1.total_latency_s, s1.per_layer[0].sol.latency_s);
        assert_eq!(s2.total_latency_s, 2.0 * s1.total_latency_s);
    }

    #[test]
    fn mixed_model_has_both_boundedness_classes() {
        // a wide square GEMM is compute-bound; a skinny matrix-vector product is not
        let g = ModelGraph::new(
            "mixed",
            1,
            vec![raw("gemm", 4096, 4096, 4096), raw("gemv", 4096, 4096, 1)],
        )
        .unwrap();
        let s = model_sol(&g, SparsityConfig::dense(), &toy(), DTypeWidths::default(), &EngineMap::default()).unwrap();
        let bounds: Vec<Bound> = s.per_layer.iter().map(|l| l.sol.bound).collect();
        assert_eq!(bounds, vec![Bound::ComputeBound, Bound::MemoryBound]);
    }

    #[test]
    fn non_prunable_layers_stay_dense() {
        let mut frozen = raw("head", 10, 64, 1);
        frozen.prunable = false;
        let g = ModelGraph::new("m", 1, vec![raw("a", 64, 64, 8), frozen]).unwrap();
        let s = model_sol(&g, SparsityConfig::block(4, 4, 0.5).unwrap(), &toy(), DTypeWidths::default(), &EngineMap::default()).unwrap();
        assert_eq!(s.per_layer[1].config, SparsityConfig::dense());
        assert_eq!(s.per_layer[1].sol.engine, EngineClass::MatrixUnit);
    }

    #[test]
    fn instantiation_errors_name_the_layer() {
        let g = ModelGraph::new("m", 1, vec![raw("odd", 6, 64, 8)]).unwrap();
        let err = model_sol(&g, SparsityConfig::block(4, 4, 0.5).unwrap(), &toy(), DTypeWidths::default(), &EngineMap::default()).unwrap_err();
        assert!(matches!(err, Error::Layer { ref id, .. } if id == "odd"), "{err}");
    }

    fn fake_sol(total: f64) -> ModelSol {
        ModelSol {
            model: "m".into(),
            batch: 1,
            config: SparsityConfig::unstructured(0.5).unwrap(),
            per_layer: vec![],
            total_latency_s: total,
        }
    }

    #[test]
    fn speedup_examples() {
        assert_eq!(speedup_at_sol(&fake_sol(2e-3), &fake_sol(1e-3)).unwrap().speedup, 2.0);
        assert_eq!(speedup_at_sol(&fake_sol(1e-3), &fake_sol(1e-3)).unwrap().speedup, 1.0);
        assert_eq!(speedup_at_sol(&fake_sol(1e-3), &fake_sol(2e-3)).unwrap().speedup, 0.5);
        assert!(speedup_at_sol(&fake_sol(0.0), &fake_sol(1e-3)).is_err());
        assert!(speedup_at_sol(&fake_sol(1e-3), &fake_sol(-1.0)).is_err());
    }

    #[test]
    fn percent_of_sol_examples() {
        let cfg = SparsityConfig::dense();
        let m = |s| Measurement::new("model", cfg, s).unwrap();
        assert_eq!(percent_of_sol(&fake_sol(0.5e-3), &m(1.0e-3)).unwrap(), 0.5);
        assert_eq!(percent_of_sol(&fake_sol(1.0e-3), &m(1.0e-3)).unwrap(), 1.0);
        // within jitter tolerance
        assert!(percent_of_sol(&fake_sol(1.005e-3), &m(1.0e-3)).is_ok());
        assert!(matches!(
            percent_of_sol(&fake_sol(1.02e-3), &m(1.0e-3)),
            Err(Error::FasterThanLight { .. })
        ));
        assert!(Measurement::new("model", cfg, 0.0).is_err());
    }

    #[test]
    fn roofline_point_examples() {
        let cfg = SparsityConfig::dense();
        let block = roofline_point(&cost(24_460_800_000, 1), &Measurement::new("l", cfg, 0.613e-3).unwrap()).unwrap();
        assert!((block.achieved_flops_per_s / 39.9e12 - 1.0).abs() < 0.02);
        let unstr = roofline_point(&cost(15_429_120_000, 1), &Measurement::new("l", cfg, 3.526e-3).unwrap()).unwrap();
        assert!((unstr.achieved_flops_per_s / 4.4e12 - 1.0).abs() < 0.02);
        let unit = roofline_point(&cost(1_000_000_000, 1), &Measurement::new("l", cfg, 1.0).unwrap()).unwrap();
        assert_eq!(unit.achieved_flops_per_s, 1e9);
    }

    #[test]
    fn roof_check_flags_violations() {
        let p = toy();
        let ok = RooflinePoint { ai: 5.0, achieved_flops_per_s: 5.0e11 };
        assert!(check_under_roof(&ok, &p, EngineClass::ScalarCore).is_ok());
        let bad = RooflinePoint { ai: 5.0, achieved_flops_per_s: 5.1e11 };
        assert!(matches!(check_under_roof(&bad, &p, EngineClass::ScalarCore), Err(Error::AboveRoof { .. })));
    }

    #[test]
    fn engine_map_overrides() {
        let map: EngineMap = "unstructured=matrix, nm=matrix".parse().unwrap();
        assert_eq!(map.engine_for(SparsityPattern::Unstructured).unwrap(), EngineClass::MatrixUnit);
        assert_eq!(map.engine_for(SparsityPattern::NofM { n_keep: 2, m_group: 4 }).unwrap(), EngineClass::MatrixUnit);
        assert_eq!(map.engine_for(SparsityPattern::Dense).unwrap(), EngineClass::MatrixUnit);
        assert!("unstructured".parse::<EngineMap>().is_err());
        assert!("blocky=matrix".parse::<EngineMap>().is_err());
    }

    #[test]
    fn measurements_parse_and_reject_duplicates() {
        let text = "scope,pattern,level,latency_ms\nmodel,dense,0,2.0\nfc, block:32x32 ,0.5,0.613\n";
        let ms = parse_measurements(text.as_bytes(), "m.csv").unwrap();
        assert_eq!(ms.len(), 2);
        assert_eq!(ms[0].scope, Scope::Model);
        assert!((ms[1].measured_latency_s - 0.613e-3).abs() < 1e-15);
        assert_eq!(ms[1].config.to_string(), "block:32x32:0.5");

        let dup = "scope,pattern,level,latency_ms\nmodel,dense,0,2\nmodel,dense,0,3\n";
        assert!(matches!(
            parse_measurements(dup.as_bytes(), "m.csv"),
            Err(Error::Duplicate { .. })
        ));
        let bad = "scope,pattern,level,latency_ms\nmodel,dense,0,-1\n";
        assert!(matches!(
            parse_measurements(bad.as_bytes(), "m.csv"),
            Err(Error::ParseLine { line: 2, .. })
        ));
    }
}
