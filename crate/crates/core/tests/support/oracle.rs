//! Explicit CSR/BSR construction from a dense mask, used as an independent check
//! on the counting formulas.

#![allow(dead_code)]

pub struct Csr {
    pub values: Vec<f32>,
    pub col_idx: Vec<usize>,
    pub row_ptr: Vec<usize>,
}

pub struct Bsr {
    /// Block contents, row-major within each block, zero-filled.
    pub values: Vec<f32>,
    pub block_col_idx: Vec<usize>,
    pub block_row_ptr: Vec<usize>,
}

pub fn build_csr(m: usize, k: usize, mask: &[bool]) -> Csr {
    let mut csr = Csr {
        values: Vec::new(),
        col_idx: Vec::new(),
        row_ptr: vec![0],
    };
    for r in 0..m {
        for c in 0..k {
            if mask[r * k + c] {
                csr.values.push(1.0);
                csr.col_idx.push(c);
            }
        }
        csr.row_ptr.push(csr.values.len());
    }
    csr
}

pub fn build_bsr(m: usize, k: usize, mask: &[bool], bh: usize, bw: usize) -> Bsr {
    assert!(m % bh == 0 && k % bw == 0);
    let mut bsr = Bsr {
        values: Vec::new(),
        block_col_idx: Vec::new(),
        block_row_ptr: vec![0],
    };
    for br in 0..m / bh {
        for bc in 0..k / bw {
            let mut tile = Vec::with_capacity(bh * bw);
            for i in 0..bh {
                for j in 0..bw {
                    let on = mask[(br * bh + i) * k + bc * bw + j];
                    tile.push(if on { 1.0 } else { 0.0 });
                }
            }
            if tile.iter().any(|&v| v != 0.0) {
                bsr.values.extend(tile);
                bsr.block_col_idx.push(bc);
            }
        }
        bsr.block_row_ptr.push(bsr.block_col_idx.len());
    }
    bsr
}
