use crate::error::Result;
use crate::netgraph::ModelGraph;
use crate::sparsecost::{bytes_moved, instantiate, DTypeWidths, SparsityConfig};

/// Weight-side versus feature-side traffic of one layer, in bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerTraffic {
    pub id: String,
    /// Stored values plus index metadata.
    pub weight_bytes: u64,
    /// Input (`n*k`) plus output (`m*n`) features.
    pub feature_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrafficBreakdown {
    pub model: String,
    pub batch: u64,
    pub per_layer: Vec<LayerTraffic>,
    pub weight_bytes: u64,
    pub feature_bytes: u64,
}

impl TrafficBreakdown {
    /// Fraction of all traffic spent on features.
    pub fn feature_share(&self) -> f64 {
        self.feature_bytes as f64 / (self.feature_bytes + self.weight_bytes) as f64
    }
}

/// Splits each layer's traffic into weight and feature bytes at `batch`.
/// Non-prunable layers are counted dense.
pub fn traffic_breakdown(
    graph: &ModelGraph,
    config: SparsityConfig,
    widths: DTypeWidths,
    batch: u64,
) -> Result<TrafficBreakdown> {
    let graph = graph.with_batch(batch)?;
    let mut per_layer = Vec::with_capacity(graph.layers.len());
    for (layer, shape) in graph.lowered()? {
        let layer_config = if layer.prunable {
            config
        } else {
            SparsityConfig::dense()
        };
        let cost = instantiate(layer_config, shape)
            .and_then(|inst| bytes_moved(&inst, widths))
            .map_err(|e| e.in_layer(&layer.id))?;
        per_layer.push(LayerTraffic {
            id: layer.id.clone(),
            weight_bytes: cost.weight_bytes(),
            feature_bytes: cost.feature_bytes(),
        });
    }
    Ok(TrafficBreakdown {
        model: graph.name.clone(),
        batch,
        weight_bytes: per_layer.iter().map(|l| l.weight_bytes).sum(),
        feature_bytes: per_layer.iter().map(|l| l.feature_bytes).sum(),
        per_layer,
    })
}
