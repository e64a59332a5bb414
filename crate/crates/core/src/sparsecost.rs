//! Stored-element counts, FLOPs, and itemized memory traffic of one sparse matmul.
//!
//! Traffic follows `values + n*k + m*n + index data`, where the index data depends on
//! the storage format:
//!
//! | pattern      | format | index entries     | pointer entries | packed bits/nnz |
//! |--------------|--------|-------------------|-----------------|-----------------|
//! | dense        | -      | 0                 | 0               | 0               |
//! | unstructured | CSR    | nnz               | m + 1           | 0               |
//! | block bh x bw| BSR    | nonzero blocks    | m/bh + 1        | 0               |
//! | N:M          | hw N:M | 0                 | 0               | ceil(log2 M)    |
//!
//! A multiply-accumulate counts as 2 FLOPs.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::netgraph::MatmulShape;

/// Tolerance used when an N:M level is supplied explicitly.
const NOFM_LEVEL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SparsityPattern {
    Dense,
    Unstructured,
    Block { b_h: u64, b_w: u64 },
    NofM { n_keep: u32, m_group: u32 },
}

/// Pattern family, used to pick an engine independent of block or group sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PatternKind {
    Dense,
    Unstructured,
    Block,
    NofM,
}

impl PatternKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PatternKind::Dense => "dense",
            PatternKind::Unstructured => "unstructured",
            PatternKind::Block => "block",
            PatternKind::NofM => "nm",
        }
    }
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PatternKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dense" => Ok(PatternKind::Dense),
            "unstructured" | "csr" => Ok(PatternKind::Unstructured),
            "block" | "bsr" => Ok(PatternKind::Block),
            "nm" | "n:m" | "nofm" => Ok(PatternKind::NofM),
            other => Err(Error::InvalidConfig(format!("unknown pattern kind `{other}`"))),
        }
    }
}

impl SparsityPattern {
    pub fn kind(&self) -> PatternKind {
        match self {
            SparsityPattern::Dense => PatternKind::Dense,
            SparsityPattern::Unstructured => PatternKind::Unstructured,
            SparsityPattern::Block { .. } => PatternKind::Block,
            SparsityPattern::NofM { .. } => PatternKind::NofM,
        }
    }
}

/// Label without a level: `dense`, `unstructured`, `block:4x4`, `nm:2:4`.
impl fmt::Display for SparsityPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SparsityPattern::Dense => f.write_str("dense"),
            SparsityPattern::Unstructured => f.write_str("unstructured"),
            SparsityPattern::Block { b_h, b_w } => write!(f, "block:{b_h}x{b_w}"),
            SparsityPattern::NofM { n_keep, m_group } => write!(f, "nm:{n_keep}:{m_group}"),
        }
    }
}

impl FromStr for SparsityPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::InvalidConfig(format!("cannot parse sparsity pattern `{s}`"));
        let pattern = match parts.as_slice() {
            ["dense"] => SparsityPattern::Dense,
            ["unstructured"] => SparsityPattern::Unstructured,
            ["block", dims] => {
                let (h, w) = dims.split_once(['x', 'X']).ok_or_else(bad)?;
                SparsityPattern::Block {
                    b_h: h.parse().map_err(|_| bad())?,
                    b_w: w.parse().map_err(|_| bad())?,
                }
            }
            ["nm", n, m] => SparsityPattern::NofM {
                n_keep: n.parse().map_err(|_| bad())?,
                m_group: m.parse().map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        };
        pattern.validate()?;
        Ok(pattern)
    }
}

impl SparsityPattern {
    fn validate(&self) -> Result<()> {
        match *self {
            SparsityPattern::Block { b_h, b_w } if b_h == 0 || b_w == 0 => Err(
                Error::InvalidConfig(format!("block dims must be >= 1, got {b_h}x{b_w}")),
            ),
            SparsityPattern::NofM { n_keep, m_group } if n_keep == 0 || n_keep >= m_group => {
                Err(Error::InvalidConfig(format!(
                    "N:M requires 1 <= N < M, got {n_keep}:{m_group}"
                )))
            }
            _ => Ok(()),
        }
    }
}

/// A sparsity pattern together with its level (fraction of zero weights).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsityConfig {
    pattern: SparsityPattern,
    level: f64,
}

impl SparsityConfig {
    pub fn new(pattern: SparsityPattern, level: f64) -> Result<Self> {
        pattern.validate()?;
        if !(0.0..1.0).contains(&level) {
            return Err(Error::InvalidConfig(format!(
                "sparsity level must be in [0, 1), got {level}"
            )));
        }
        match pattern {
            SparsityPattern::Dense if level != 0.0 => Err(Error::InvalidConfig(format!(
                "dense requires level 0, got {level}"
            ))),
            SparsityPattern::NofM { n_keep, m_group } => {
                let implied = nofm_level(n_keep, m_group);
                if (level - implied).abs() > NOFM_LEVEL_TOL {
                    Err(Error::InvalidConfig(format!(
                        "{pattern} implies level {implied}, got {level}"
                    )))
                } else {
                    Ok(Self {
                        pattern,
                        level: implied,
                    })
                }
            }
            _ => Ok(Self { pattern, level }),
        }
    }

    pub fn dense() -> Self {
        Self {
            pattern: SparsityPattern::Dense,
            level: 0.0,
        }
    }

    pub fn unstructured(level: f64) -> Result<Self> {
        Self::new(SparsityPattern::Unstructured, level)
    }

    pub fn block(b_h: u64, b_w: u64, level: f64) -> Result<Self> {
        Self::new(SparsityPattern::Block { b_h, b_w }, level)
    }

    pub fn nofm(n_keep: u32, m_group: u32) -> Result<Self> {
        let pattern = SparsityPattern::NofM { n_keep, m_group };
        pattern.validate()?;
        Self::new(pattern, nofm_level(n_keep, m_group))
    }

    /// Builds a config from a pattern label and a level. The level is ignored for
    /// patterns that fix it (dense, N:M).
    pub fn from_parts(pattern: SparsityPattern, level: f64) -> Result<Self> {
        match pattern {
            SparsityPattern::NofM { n_keep, m_group } => Self::nofm(n_keep, m_group),
            SparsityPattern::Dense => Ok(Self::dense()),
            _ => Self::new(pattern, level),
        }
    }

    pub fn pattern(&self) -> SparsityPattern {
        self.pattern
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    /// Integer key for joining on level; levels equal to 6 decimals compare equal.
    pub fn level_key(&self) -> i64 {
        level_key(self.level)
    }
}

pub fn level_key(level: f64) -> i64 {
    (level * 1e6).round() as i64
}

fn nofm_level(n_keep: u32, m_group: u32) -> f64 {
    1.0 - f64::from(n_keep) / f64::from(m_group)
}

/// `dense`, `unstructured:0.875`, `block:4x4:0.875`, `nm:2:4`.
impl fmt::Display for SparsityConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.pattern {
            SparsityPattern::Dense | SparsityPattern::NofM { .. } => write!(f, "{}", self.pattern),
            _ => write!(f, "{}:{}", self.pattern, self.level),
        }
    }
}

impl FromStr for SparsityConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = |why: &str| Error::InvalidConfig(format!("cannot parse `{s}`: {why}"));
        if s == "dense" {
            return Ok(Self::dense());
        }
        if s.starts_with("nm:") {
            return match s.parse::<SparsityPattern>()? {
                SparsityPattern::NofM { n_keep, m_group } => Self::nofm(n_keep, m_group),
                _ => Err(bad("expected nm:N:M")),
            };
        }
        let (pattern, level) = s
            .rsplit_once(':')
            .ok_or_else(|| bad("missing sparsity level"))?;
        let level: f64 = level.parse().map_err(|_| bad("level is not a number"))?;
        let pattern: SparsityPattern = pattern.parse()?;
        Self::new(pattern, level)
    }
}

/// Bytes per stored element of each kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DTypeWidths {
    pub value_bytes: u64,
    pub index_bytes: u64,
    pub pointer_bytes: u64,
}

impl Default for DTypeWidths {
    /// Half-precision values with 32-bit column indices and row pointers.
    fn default() -> Self {
        Self {
            value_bytes: 2,
            index_bytes: 4,
            pointer_bytes: 4,
        }
    }
}

impl DTypeWidths {
    pub fn new(value_bytes: u64, index_bytes: u64, pointer_bytes: u64) -> Result<Self> {
        for (name, v) in [
            ("value_bytes", value_bytes),
            ("index_bytes", index_bytes),
            ("pointer_bytes", pointer_bytes),
        ] {
            if v == 0 {
                return Err(Error::invalid_field(name, "must be >= 1"));
            }
        }
        Ok(Self {
            value_bytes,
            index_bytes,
            pointer_bytes,
        })
    }
}

/// Concrete storage of one weight matrix under a sparsity config.
///
/// Built by [`instantiate`] (from a level) or
/// [`crate::mmio::instance_from_pattern`] (from an explicit pattern).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormatInstance {
    pub config: SparsityConfig,
    pub shape: MatmulShape,
    /// Stored weight values, including zero fill inside kept blocks.
    pub stored_nnz: u64,
    pub index_elements: u64,
    pub pointer_elements: u64,
    /// Packed metadata bits per stored value (N:M only).
    pub index_bits_per_nnz: u32,
}

/// FLOPs and bytes moved by one (Sp)MM, itemized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CostBreakdown {
    pub flops: u64,
    pub weight_value_bytes: u64,
    pub index_bytes: u64,
    pub input_feature_bytes: u64,
    pub output_feature_bytes: u64,
    pub total_bytes: u64,
}

impl CostBreakdown {
    /// Weight values plus index metadata.
    pub fn weight_bytes(&self) -> u64 {
        self.weight_value_bytes + self.index_bytes
    }

    /// Input and output feature traffic, which pruning cannot reduce.
    pub fn feature_bytes(&self) -> u64 {
        self.input_feature_bytes + self.output_feature_bytes
    }
}

pub(crate) fn round_half_up_clamped(x: f64, max: u64) -> u64 {
    let r = (x + 0.5).floor();
    if r <= 0.0 {
        0
    } else if r >= max as f64 {
        max
    } else {
        r as u64
    }
}

fn incompatible(config: &SparsityConfig, shape: &MatmulShape, reason: String) -> Error {
    Error::Incompatible {
        config: config.to_string(),
        m: shape.m,
        k: shape.k,
        reason,
    }
}

/// Metadata bits needed to address one slot inside a group of `m_group`.
pub fn nofm_index_bits(m_group: u32) -> u32 {
    // ceil(log2(m_group)) for m_group >= 2
    u32::BITS - (m_group - 1).leading_zeros()
}

/// Derives stored-element counts for `config` applied to a weight of `shape`.
pub fn instantiate(config: SparsityConfig, shape: MatmulShape) -> Result<FormatInstance> {
    let total = shape.weight_elements()?;
    let keep = 1.0 - config.level;
    let mut inst = FormatInstance {
        config,
        shape,
        stored_nnz: 0,
        index_elements: 0,
        pointer_elements: 0,
        index_bits_per_nnz: 0,
    };
    match config.pattern {
        SparsityPattern::Dense => {
            inst.stored_nnz = total;
        }
        SparsityPattern::Unstructured => {
            inst.stored_nnz = round_half_up_clamped(keep * total as f64, total);
            inst.index_elements = inst.stored_nnz;
            inst.pointer_elements = shape.m + 1;
        }
        SparsityPattern::Block { b_h, b_w } => {
            if shape.m % b_h != 0 || shape.k % b_w != 0 {
                return Err(incompatible(
                    &config,
                    &shape,
                    format!("block {b_h}x{b_w} must divide the weight dimensions"),
                ));
            }
            let block_rows = shape.m / b_h;
            let block_total = block_rows * (shape.k / b_w);
            let blocks = round_half_up_clamped(keep * block_total as f64, block_total);
            inst.stored_nnz = blocks * b_h * b_w;
            inst.index_elements = blocks;
            inst.pointer_elements = block_rows + 1;
        }
        SparsityPattern::NofM { n_keep, m_group } => {
            if shape.k % u64::from(m_group) != 0 {
                return Err(incompatible(
                    &config,
                    &shape,
                    format!("group size {m_group} must divide k"),
                ));
            }
            inst.stored_nnz = total / u64::from(m_group) * u64::from(n_keep);
            inst.index_bits_per_nnz = nofm_index_bits(m_group);
        }
    }
    Ok(inst)
}

/// `2 * stored_nnz * n`.
pub fn flops(inst: &FormatInstance) -> Result<u64> {
    inst.stored_nnz
        .checked_mul(inst.shape.n)
        .and_then(|v| v.checked_mul(2))
        .ok_or(Error::Overflow("flops"))
}

/// Itemized traffic of one (Sp)MM under perfect caching.
pub fn bytes_moved(inst: &FormatInstance, widths: DTypeWidths) -> Result<CostBreakdown> {
    let ovf = |what| move || Error::Overflow(what);
    let MatmulShape { m, k, n } = inst.shape;
    let weight_value_bytes = inst
        .stored_nnz
        .checked_mul(widths.value_bytes)
        .ok_or_else(ovf("weight bytes"))?;
    let packed_bits = inst
        .stored_nnz
        .checked_mul(u64::from(inst.index_bits_per_nnz))
        .ok_or_else(ovf("index bits"))?;
    let index_bytes = inst
        .index_elements
        .checked_mul(widths.index_bytes)
        .and_then(|a| {
            inst.pointer_elements
                .checked_mul(widths.pointer_bytes)
                .and_then(|b| a.checked_add(b))
        })
        .and_then(|a| a.checked_add(packed_bits.div_ceil(8)))
        .ok_or_else(ovf("index bytes"))?;
    let input_feature_bytes = n
        .checked_mul(k)
        .and_then(|v| v.checked_mul(widths.value_bytes))
        .ok_or_else(ovf("input feature bytes"))?;
    let output_feature_bytes = m
        .checked_mul(n)
        .and_then(|v| v.checked_mul(widths.value_bytes))
        .ok_or_else(ovf("output feature bytes"))?;
    let total_bytes = [index_bytes, input_feature_bytes, output_feature_bytes]
        .into_iter()
        .try_fold(weight_value_bytes, |acc, v| acc.checked_add(v))
        .ok_or_else(ovf("total bytes"))?;
    Ok(CostBreakdown {
        flops: flops(inst)?,
        weight_value_bytes,
        index_bytes,
        input_feature_bytes,
        output_feature_bytes,
        total_bytes,
    })
}

/// Levels reached by halving the remaining nonzeros at every step.
pub fn sparsity_sweep(start_level: f64, steps: usize) -> Result<Vec<f64>> {
    if !(start_level > 0.0 && start_level < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "start level must be in (0, 1), got {start_level}"
        )));
    }
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be >= 1".into()));
    }
    let mut levels = Vec::with_capacity(steps);
    let mut s = start_level;
    for _ in 0..steps {
        levels.push(s);
        s += (1.0 - s) / 2.0;
    }
    Ok(levels)
}
