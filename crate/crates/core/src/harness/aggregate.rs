//! Mean and spread of metrics across seeds.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::metrics::{read_table, MetricsTable};
use crate::error::{Error, Result};
use crate::numerics::{mean, std_dev};

/// Files matching `pattern`, sorted.
pub fn expand_glob(pattern: &str) -> Result<Vec<PathBuf>> {
    let paths = glob::glob(pattern).map_err(|e| Error::Config(format!("bad glob `{pattern}`: {e}")))?;
    let mut out: Vec<PathBuf> = paths.filter_map(std::result::Result::ok).filter(|p| p.is_file()).collect();
    out.sort();
    Ok(out)
}

/// Aligns tables on `timestep` and reports `<col>_mean`, `<col>_std` and
/// `<col>_n` for every other column; cells with no value in any table stay empty.
pub fn aggregate_tables(tables: &[MetricsTable]) -> Result<MetricsTable> {
    let first = tables.first().ok_or_else(|| Error::EmptyInput("no metrics files to aggregate".into()))?;
    if tables.iter().any(|t| t.header != first.header) {
        return Err(Error::Config("metrics files have different columns".into()));
    }
    let ts = first
        .column("timestep")
        .ok_or_else(|| Error::Config("metrics files have no timestep column".into()))?;
    let value_cols: Vec<usize> = (0..first.header.len()).filter(|&c| c != ts && first.header[c] != "iteration").collect();

    // timestep -> column -> samples
    let mut grid: BTreeMap<u64, Vec<Vec<f64>>> = BTreeMap::new();
    for t in tables {
        for row in &t.rows {
            let Some(step) = row[ts] else { continue };
            let cell = grid.entry(step as u64).or_insert_with(|| vec![Vec::new(); value_cols.len()]);
            for (k, &c) in value_cols.iter().enumerate() {
                if let Some(v) = row[c] {
                    cell[k].push(v);
                }
            }
        }
    }

    let mut header = vec!["timestep".to_string()];
    for &c in &value_cols {
        let name = &first.header[c];
        header.extend([format!("{name}_mean"), format!("{name}_std"), format!("{name}_n")]);
    }
    let rows = grid
        .into_iter()
        .map(|(step, cols)| {
            let mut row = vec![Some(step as f64)];
            for samples in cols {
                if samples.is_empty() {
                    row.extend([None, None, Some(0.0)]);
                } else {
                    row.extend([Some(mean(&samples)), Some(std_dev(&samples)), Some(samples.len() as f64)]);
                }
            }
            row
        })
        .collect();
    Ok(MetricsTable { header, rows })
}

pub fn aggregate_files(paths: &[PathBuf]) -> Result<MetricsTable> {
    let tables = paths.iter().map(|p| read_table(p)).collect::<Result<Vec<_>>>()?;
    aggregate_tables(&tables)
}

pub fn aggregate_glob(pattern: &str, out: &Path) -> Result<usize> {
    let files = expand_glob(pattern)?;
    let table = aggregate_files(&files)?;
    super::metrics::write_table(out, &table)?;
    Ok(files.len())
}
