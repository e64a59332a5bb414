//! Corpus statistics for pruned weight matrices in MatrixMarket format.

use std::ffi::OsStr;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use rayon::prelude::*;
use sparsity_roofline::mmio::{block_occupancy, read_matrix_market, SparsePattern};
use sparsity_roofline::report::fmt_sig6;

use crate::output::{write_output, Table};
use crate::{failure, Classify, CliResult, Failure};

pub const DEFAULT_BLOCKS: [(usize, usize); 5] = [(2, 2), (4, 4), (8, 8), (16, 16), (32, 32)];

pub const COLUMNS: &[&str] = &[
    "file",
    "rows",
    "cols",
    "nnz",
    "level",
    "b_h",
    "b_w",
    "nonzero_blocks",
    "fill_ratio",
    "stored_elements",
];

/// `*.mtx` files directly inside `dir`, sorted by name.
pub fn list_matrices(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let is_mtx = path
            .extension()
            .and_then(OsStr::to_str)
            .is_some_and(|e| e.eq_ignore_ascii_case("mtx"));
        if is_mtx && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Appends one row per block size. Block sizes that do not tile the matrix get
/// empty occupancy columns.
pub fn push_rows(t: &mut Table, name: &str, p: &SparsePattern, blocks: &[(usize, usize)]) {
    for &(bh, bw) in blocks {
        let occ = block_occupancy(p, bh, bw).ok();
        if occ.is_none() {
            log::warn!("{name}: {bh}x{bw} blocks do not tile {}x{}", p.nrows(), p.ncols());
        }
        t.push(vec![
            name.into(),
            p.nrows().into(),
            p.ncols().into(),
            p.nnz().into(),
            p.level().into(),
            bh.into(),
            bw.into(),
            occ.map(|o| o.nonzero_blocks).into(),
            occ.map(|o| o.fill_ratio).into(),
            occ.map(|o| o.stored_elements()).into(),
        ]);
    }
}

/// Writes `matrices.csv` for every readable file in `dir`. Unreadable files are
/// listed in `matrix_errors.csv` and make the command fail after the partial
/// results are written.
pub fn cmd_profile_matrices(
    dir: &Path,
    blocks: &[(usize, usize)],
    out_dir: &Path,
    out: &mut dyn Write,
) -> CliResult<Vec<PathBuf>> {
    let files = list_matrices(dir).fail(Failure::Data)?;
    if files.is_empty() {
        return Err(failure(
            Failure::Data,
            anyhow!("no .mtx files in {}", dir.display()),
        ));
    }
    let parsed: Vec<_> = files.par_iter().map(read_matrix_market).collect();

    let mut table = Table::new(COLUMNS);
    let mut errors = Table::new(&["file", "error"]);
    for (path, result) in files.iter().zip(parsed) {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        match result {
            Ok(p) => {
                push_rows(&mut table, &name, &p, blocks);
                writeln!(
                    out,
                    "{name}: {}x{} nnz {} level {}",
                    p.nrows(),
                    p.ncols(),
                    p.nnz(),
                    fmt_sig6(p.level())
                )
                .fail(Failure::Output)?;
            }
            Err(e) => {
                log::error!("{name}: {e}");
                errors.push(vec![name.into(), e.to_string().into()]);
            }
        }
    }

    let mut written = Vec::new();
    let bytes = table.to_csv().fail(Failure::Output)?;
    written.push(write_output(out_dir, "matrices.csv", &bytes).fail(Failure::Output)?);
    let err_path = out_dir.join("matrix_errors.csv");
    if errors.is_empty() {
        // a stale listing from an earlier run would contradict this one
        if err_path.exists() {
            std::fs::remove_file(&err_path)
                .with_context(|| format!("removing {}", err_path.display()))
                .fail(Failure::Output)?;
        }
        return Ok(written);
    }
    let bytes = errors.to_csv().fail(Failure::Output)?;
    written.push(write_output(out_dir, "matrix_errors.csv", &bytes).fail(Failure::Output)?);
    Err(failure(
        Failure::Data,
        anyhow!(
            "{} of {} matrix files could not be read (see {})",
            errors.len(),
            files.len(),
            err_path.display()
        ),
    ))
}
