use crate::error::{Error, Result};
use crate::netgraph::MatmulShape;
use crate::sparsecost::{nofm_index_bits, FormatInstance, SparsityConfig, SparsityPattern};

use super::SparsePattern;

/// How many `b_h x b_w` tiles hold at least one nonzero, and how full they are.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockOccupancy {
    pub b_h: usize,
    pub b_w: usize,
    pub nonzero_blocks: usize,
    /// `nnz / (nonzero_blocks * b_h * b_w)`; 1.0 when there are no nonzero blocks.
    pub fill_ratio: f64,
}

impl BlockOccupancy {
    pub fn stored_elements(&self) -> usize {
        self.nonzero_blocks * self.b_h * self.b_w
    }
}

pub fn block_occupancy(p: &SparsePattern, b_h: usize, b_w: usize) -> Result<BlockOccupancy> {
    if b_h == 0 || b_w == 0 || p.nrows() % b_h != 0 || p.ncols() % b_w != 0 {
        return Err(Error::Incompatible {
            config: format!("block:{b_h}x{b_w}"),
            m: p.nrows() as u64,
            k: p.ncols() as u64,
            reason: "block dims must divide the matrix dimensions".into(),
        });
    }
    let block_cols = p.ncols() / b_w;
    let mut blocks: Vec<usize> = p
        .coords()
        .iter()
        .map(|&(r, c)| (r / b_h) * block_cols + c / b_w)
        .collect();
    blocks.sort_unstable();
    blocks.dedup();
    let nonzero_blocks = blocks.len();
    let fill_ratio = if nonzero_blocks == 0 {
        1.0
    } else {
        p.nnz() as f64 / (nonzero_blocks * b_h * b_w) as f64
    };
    Ok(BlockOccupancy {
        b_h,
        b_w,
        nonzero_blocks,
        fill_ratio,
    })
}

/// Exact storage counts for `p` stored under `config`'s format.
///
/// The returned instance has `n = 1`; use [`FormatInstance::with_dense_columns`] to
/// attach the dense operand width of the layer it belongs to. Its level is the
/// pattern's own fraction of zeros (dense and N:M keep their fixed levels).
pub fn instance_from_pattern(p: &SparsePattern, config: SparsityConfig) -> Result<FormatInstance> {
    let (m, k) = (p.nrows() as u64, p.ncols() as u64);
    let shape = MatmulShape::new(m, k, 1)?;
    let total = m * k;
    let nnz = p.nnz() as u64;
    let observed_level = || -> Result<f64> {
        if nnz == 0 {
            return Err(Error::InvalidConfig(
                "an empty pattern has no representable sparsity level".into(),
            ));
        }
        Ok(p.level())
    };
    let mut inst = FormatInstance {
        config,
        shape,
        stored_nnz: 0,
        index_elements: 0,
        pointer_elements: 0,
        index_bits_per_nnz: 0,
    };
    match config.pattern() {
        SparsityPattern::Dense => {
            inst.stored_nnz = total;
        }
        SparsityPattern::Unstructured => {
            inst.config = SparsityConfig::new(config.pattern(), observed_level()?)?;
            inst.stored_nnz = nnz;
            inst.index_elements = nnz;
            inst.pointer_elements = m + 1;
        }
        SparsityPattern::Block { b_h, b_w } => {
            let occ = block_occupancy(p, b_h as usize, b_w as usize)?;
            inst.config = SparsityConfig::new(config.pattern(), observed_level()?)?;
            inst.stored_nnz = occ.stored_elements() as u64;
            inst.index_elements = occ.nonzero_blocks as u64;
            inst.pointer_elements = m / b_h + 1;
        }
        SparsityPattern::NofM { n_keep, m_group } => {
            let group = m_group as usize;
            if p.ncols() % group != 0 {
                return Err(Error::Incompatible {
                    config: config.to_string(),
                    m,
                    k,
                    reason: format!("group size {m_group} must divide k"),
                });
            }
            check_nofm(p, n_keep, group)?;
            inst.stored_nnz = total / u64::from(m_group) * u64::from(n_keep);
            inst.index_bits_per_nnz = nofm_index_bits(m_group);
        }
    }
    Ok(inst)
}

/// Every aligned group of `group` columns in a row may hold at most `n_keep` nonzeros.
fn check_nofm(p: &SparsePattern, n_keep: u32, group: usize) -> Result<()> {
    // coords are sorted row-major, so each (row, group) run is contiguous
    let mut current: Option<(usize, usize)> = None;
    let mut count = 0usize;
    for &(r, c) in p.coords() {
        let key = (r, c / group);
        if current == Some(key) {
            count += 1;
        } else {
            current = Some(key);
            count = 1;
        }
        if count > n_keep as usize {
            return Err(Error::NofMViolation {
                row: key.0,
                group: key.1,
                count,
                n_keep,
            });
        }
    }
    Ok(())
}

impl FormatInstance {
    /// Same storage with the dense operand set to `n` columns.
    pub fn with_dense_columns(mut self, n: u64) -> Result<Self> {
        self.shape = MatmulShape::new(self.shape.m, self.shape.k, n)?;
        Ok(self)
    }
}
