//! Counting formulas checked against explicitly materialized CSR/BSR arrays.

mod support;

use proptest::prelude::*;
use sparsity_roofline::prelude::*;
use support::oracle::{build_bsr, build_csr};

fn mask_case() -> impl Strategy<Value = (usize, usize, usize, usize, Vec<bool>)> {
    (1usize..=4, 1usize..=4)
        .prop_flat_map(|(bh, bw)| (Just(bh), Just(bw), 1..=16 / bh, 1..=16 / bw))
        .prop_flat_map(|(bh, bw, mb, kb)| {
            let (m, k) = (bh * mb, bw * kb);
            (
                Just(m),
                Just(k),
                Just(bh),
                Just(bw),
                prop::collection::vec(prop::bool::weighted(0.3), m * k),
            )
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn csr_counts_match_materialized_arrays((m, k, _bh, _bw, mask) in mask_case()) {
        let csr = build_csr(m, k, &mask);
        let p = SparsePattern::from_mask(m, k, &mask).unwrap();
        prop_assume!(p.nnz() > 0);
        let inst = instance_from_pattern(&p, SparsityConfig::unstructured(0.0).unwrap()).unwrap();
        prop_assert_eq!(inst.stored_nnz as usize, csr.values.len());
        prop_assert_eq!(inst.index_elements as usize, csr.col_idx.len());
        prop_assert_eq!(inst.pointer_elements as usize, csr.row_ptr.len());

        let level = 1.0 - csr.values.len() as f64 / (m * k) as f64;
        let by_level = instantiate(
            SparsityConfig::unstructured(level).unwrap(),
            MatmulShape::new(m as u64, k as u64, 1).unwrap(),
        ).unwrap();
        prop_assert_eq!(by_level.stored_nnz as usize, csr.values.len());
        prop_assert_eq!(by_level.index_elements as usize, csr.col_idx.len());
        prop_assert_eq!(by_level.pointer_elements as usize, csr.row_ptr.len());
    }

    #[test]
    fn bsr_counts_match_materialized_arrays((m, k, bh, bw, mask) in mask_case()) {
        let bsr = build_bsr(m, k, &mask, bh, bw);
        let p = SparsePattern::from_mask(m, k, &mask).unwrap();
        prop_assume!(p.nnz() > 0);
        let inst = instance_from_pattern(&p, SparsityConfig::block(bh as u64, bw as u64, 0.0).unwrap()).unwrap();
        prop_assert_eq!(inst.stored_nnz as usize, bsr.values.len());
        prop_assert_eq!(inst.index_elements as usize, bsr.block_col_idx.len());
        prop_assert_eq!(inst.pointer_elements as usize, bsr.block_row_ptr.len());

        let total_blocks = (m / bh) * (k / bw);
        let level = 1.0 - bsr.block_col_idx.len() as f64 / total_blocks as f64;
        let by_level = instantiate(
            SparsityConfig::block(bh as u64, bw as u64, level).unwrap(),
            MatmulShape::new(m as u64, k as u64, 1).unwrap(),
        ).unwrap();
        prop_assert_eq!(by_level.stored_nnz as usize, bsr.values.len());
        prop_assert_eq!(by_level.index_elements as usize, bsr.block_col_idx.len());
        prop_assert_eq!(by_level.pointer_elements as usize, bsr.block_row_ptr.len());
    }
}
