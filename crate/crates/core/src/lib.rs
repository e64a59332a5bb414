//! Analytical speed-of-light model for sparse neural network inference.
//!
//! Given a hardware profile and a network lowered to matrix multiplies, the crate
//! predicts per-layer and per-model speed-of-light latency under dense, unstructured
//! (CSR), block (BSR) and N:M sparsity, the resulting speedup over dense, and joins
//! those speedups with externally measured accuracy to form Sparsity Roofline plots.
//!
//! ```
//! use sparsity_roofline::prelude::*;
//!
//! let profile = HardwareProfile::new(
//!     "toy",
//!     [(EngineClass::ScalarCore, 1.0e12), (EngineClass::MatrixUnit, 1.6e13)],
//!     1.0e11,
//! )?;
//! let layer = LayerSpec::new(
//!     "fc1",
//!     LayerKind::Linear { in_features: 768, out_features: 3072, tokens_per_sample: 196 },
//!     true,
//! );
//! let graph = ModelGraph::new("mlp", 1, vec![layer])?;
//! let widths = DTypeWidths::default();
//! let engines = EngineMap::default();
//! let dense = model_sol(&graph, SparsityConfig::dense(), &profile, widths, &engines)?;
//! let sparse = model_sol(&graph, "nm:2:4".parse()?, &profile, widths, &engines)?;
//! let record = speedup_at_sol(&dense, &sparse)?;
//! assert!(record.speedup > 1.0);
//! # Ok::<(), sparsity_roofline::Error>(())
//! ```

pub mod error;
pub mod hwmodel;
pub mod mmio;
pub mod netgraph;
pub mod report;
pub mod roofline;
pub mod sparsecost;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::error::{Error, Result};
    pub use crate::hwmodel::{load_profile, EngineClass, HardwareProfile};
    pub use crate::mmio::{
        block_occupancy, instance_from_pattern, read_matrix_market, traffic_breakdown,
        BlockOccupancy, SparsePattern, TrafficBreakdown,
    };
    pub use crate::netgraph::{load_model_spec, lower_layer, LayerKind, LayerSpec, MatmulShape, ModelGraph};
    pub use crate::report::{
        assemble_series, emit, load_accuracy, AccuracyRecord, OutputFormat, Series, SeriesPoint,
        SeriesSet, SvgOptions,
    };
    pub use crate::roofline::{
        arithmetic_intensity, load_measurements, model_sol, percent_of_sol, roofline_point, sol_latency,
        speedup_at_sol, Bound, EngineMap, Measurement, ModelSol, Scope, SolResult,
        SpeedupRecord,
    };
    pub use crate::sparsecost::{
        bytes_moved, flops, instantiate, sparsity_sweep, CostBreakdown, DTypeWidths,
        FormatInstance, SparsityConfig, SparsityPattern,
    };
}
