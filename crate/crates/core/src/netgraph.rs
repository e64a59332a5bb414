//! Network descriptions and their lowering to matrix-multiply shapes.
//!
//! Convolutions lower as implicit GEMM: the weight is `c_out x (c_in*kh*kw)` and the
//! dense operand has one column per output spatial location per sample. No im2col
//! buffer is charged.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `m x k` sparse (weight) operand times `k x n` dense operand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MatmulShape {
    pub m: u64,
    pub k: u64,
    pub n: u64,
}

impl MatmulShape {
    pub fn new(m: u64, k: u64, n: u64) -> Result<Self> {
        for (name, v) in [("m", m), ("k", k), ("n", n)] {
            if v == 0 {
                return Err(Error::InvalidGeometry(format!("{name} must be >= 1")));
            }
        }
        Ok(Self { m, k, n })
    }

    /// Number of weight elements, `m * k`.
    pub fn weight_elements(&self) -> Result<u64> {
        self.m.checked_mul(self.k).ok_or(Error::Overflow("m*k"))
    }
}

fn one() -> u64 {
    1
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    Conv {
        c_in: u64,
        c_out: u64,
        kernel_h: u64,
        kernel_w: u64,
        #[serde(default = "one")]
        stride: u64,
        #[serde(default)]
        padding: u64,
        in_h: u64,
        in_w: u64,
        /// Only 1 is supported; grouped and depthwise convolutions are rejected.
        #[serde(default = "one")]
        groups: u64,
    },
    Linear {
        in_features: u64,
        out_features: u64,
        #[serde(default = "one")]
        tokens_per_sample: u64,
    },
    RawMatmul {
        m: u64,
        k: u64,
        n_per_sample: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub id: String,
    #[serde(flatten)]
    pub kind: LayerKind,
    #[serde(default = "yes")]
    pub prunable: bool,
}

impl LayerSpec {
    pub fn new(id: impl Into<String>, kind: LayerKind, prunable: bool) -> Self {
        Self {
            id: id.into(),
            kind,
            prunable,
        }
    }

    fn validate(&self) -> Result<()> {
        let dims: Vec<(&str, u64)> = match &self.kind {
            LayerKind::Conv {
                c_in,
                c_out,
                kernel_h,
                kernel_w,
                stride,
                in_h,
                in_w,
                groups,
                ..
            } => {
                if *groups != 1 {
                    return Err(Error::InvalidGeometry(format!(
                        "grouped/depthwise convolution (groups = {groups}) is not supported"
                    )));
                }
                vec![
                    ("c_in", *c_in),
                    ("c_out", *c_out),
                    ("kernel_h", *kernel_h),
                    ("kernel_w", *kernel_w),
                    ("stride", *stride),
                    ("in_h", *in_h),
                    ("in_w", *in_w),
                ]
            }
            LayerKind::Linear {
                in_features,
                out_features,
                tokens_per_sample,
            } => vec![
                ("in_features", *in_features),
                ("out_features", *out_features),
                ("tokens_per_sample", *tokens_per_sample),
            ],
            LayerKind::RawMatmul { m, k, n_per_sample } => {
                vec![("m", *m), ("k", *k), ("n_per_sample", *n_per_sample)]
            }
        };
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::invalid_field(name, "must be >= 1"));
            }
        }
        lower_layer(self, 1).map(|_| ())
    }
}

/// Output extent of a convolution along one axis, or `None` when the kernel does
/// not fit into the padded input.
pub fn conv_output_extent(input: u64, kernel: u64, stride: u64, padding: u64) -> Option<u64> {
    let padded = input.checked_add(padding.checked_mul(2)?)?;
    if stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Lowers one layer to its matmul shape for the given batch size.
pub fn lower_layer(layer: &LayerSpec, batch: u64) -> Result<MatmulShape> {
    if batch == 0 {
        return Err(Error::InvalidArgument("batch must be >= 1".into()));
    }
    let mul = |a: u64, b: u64| a.checked_mul(b).ok_or(Error::Overflow("lowered shape"));
    match &layer.kind {
        LayerKind::Conv {
            c_in,
            c_out,
            kernel_h,
            kernel_w,
            stride,
            padding,
            in_h,
            in_w,
            ..
        } => {
            let out_h = conv_output_extent(*in_h, *kernel_h, *stride, *padding).unwrap_or(0);
            let out_w = conv_output_extent(*in_w, *kernel_w, *stride, *padding).unwrap_or(0);
            if out_h < 1 || out_w < 1 {
                return Err(Error::InvalidGeometry(format!(
                    "convolution output is {out_h}x{out_w} for input {in_h}x{in_w}, \
                     kernel {kernel_h}x{kernel_w}, stride {stride}, padding {padding}"
                )));
            }
            let k = mul(mul(*c_in, *kernel_h)?, *kernel_w)?;
            let n = mul(mul(batch, out_h)?, out_w)?;
            MatmulShape::new(*c_out, k, n)
        }
        LayerKind::Linear {
            in_features,
            out_features,
            tokens_per_sample,
        } => MatmulShape::new(*out_features, *in_features, mul(batch, *tokens_per_sample)?),
        LayerKind::RawMatmul { m, k, n_per_sample } => {
            MatmulShape::new(*m, *k, mul(batch, *n_per_sample)?)
        }
    }
}

/// An ordered list of matmul layers evaluated at one batch size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelGraph {
    pub name: String,
    pub batch: u64,
    pub layers: Vec<LayerSpec>,
}

impl ModelGraph {
    pub fn new(name: impl Into<String>, batch: u64, layers: Vec<LayerSpec>) -> Result<Self> {
        let graph = Self {
            name: name.into(),
            batch,
            layers,
        };
        graph.validate()?;
        Ok(graph)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let graph: ModelGraph = serde_json::from_str(text).map_err(|e| Error::Parse {
            context: "model spec".into(),
            message: e.to_string(),
        })?;
        graph.validate()?;
        Ok(graph)
    }

    fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::invalid_field("batch", "must be >= 1"));
        }
        let mut seen = HashSet::new();
        for layer in &self.layers {
            if !seen.insert(layer.id.as_str()) {
                return Err(Error::Duplicate {
                    what: "layer id",
                    key: layer.id.clone(),
                });
            }
            layer.validate().map_err(|e| e.in_layer(&layer.id))?;
        }
        if !self.layers.iter().any(|l| l.prunable) {
            return Err(Error::InvalidArgument(format!(
                "model `{}` has no prunable layers",
                self.name
            )));
        }
        Ok(())
    }

    /// Same graph evaluated at a different batch size.
    pub fn with_batch(&self, batch: u64) -> Result<Self> {
        if batch == 0 {
            return Err(Error::invalid_field("batch", "must be >= 1"));
        }
        Ok(Self {
            batch,
            ..self.clone()
        })
    }

    /// Every layer lowered at this graph's batch size, in order.
    pub fn lowered(&self) -> Result<Vec<(&LayerSpec, MatmulShape)>> {
        self.layers
            .iter()
            .map(|l| {
                lower_layer(l, self.batch)
                    .map(|s| (l, s))
                    .map_err(|e| e.in_layer(&l.id))
            })
            .collect()
    }
}

/// Reads and validates a JSON model spec.
pub fn load_model_spec(path: impl AsRef<Path>) -> Result<ModelGraph> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ModelGraph::from_json_str(&text).map_err(|e| match e {
        Error::Parse { message, .. } => Error::Parse {
            context: path.display().to_string(),
            message,
        },
        other => other,
    })
}
