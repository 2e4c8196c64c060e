//! Metrics rows and their CSV layout.
//!
//! Columns, in order:
//! `iteration, timestep, eval_return, train_return, surrogate, value_loss, sym_loss`,
//! then `value_dist_<t>` for every declared transform, `nsrr_<t>` for every
//! reflection (adaptive loss only), the estimator columns `m_<lo>_<hi>`,
//! `b_<lo>_<hi>`, `b_<q>` (fitting only) and `m_err_<lo>_<hi>`, `m_err_mean`
//! (fitting with ground truth only). Missing values are empty cells.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::symmetry::{RelationGraph, TransformKind, TransformSpec};

/// Which optional column groups a run writes.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSchema {
    pub transforms: Vec<String>,
    /// Transform indices that get an NSRR column.
    pub nsrr_transforms: Vec<usize>,
    /// `(lo, hi)` pairs and single slots of the estimators, when fitting is logged.
    pub estimators: Option<(Vec<(usize, usize)>, Vec<usize>)>,
    /// Ground-truth slopes per pair, when the scenario declares them.
    pub ground_truth: Option<Vec<f64>>,
}

impl MetricsSchema {
    pub fn new(
        specs: &[TransformSpec],
        with_nsrr: bool,
        graph: Option<&RelationGraph>,
        ground_truth: Option<Vec<f64>>,
    ) -> Self {
        let nsrr_transforms = if with_nsrr {
            specs
                .iter()
                .enumerate()
                .filter(|(_, s)| s.kind == TransformKind::Reflection)
                .map(|(j, _)| j)
                .collect()
        } else {
            Vec::new()
        };
        Self {
            transforms: specs.iter().map(|s| s.name.clone()).collect(),
            nsrr_transforms,
            estimators: graph.map(|g| (g.pairs.clone(), g.singles.clone())),
            ground_truth: graph.and(ground_truth),
        }
    }

    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = [
            "iteration",
            "timestep",
            "eval_return",
            "train_return",
            "surrogate",
            "value_loss",
            "sym_loss",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        h.extend(self.transforms.iter().map(|t| format!("value_dist_{t}")));
        h.extend(self.nsrr_transforms.iter().map(|&j| format!("nsrr_{}", self.transforms[j])));
        if let Some((pairs, singles)) = &self.estimators {
            h.extend(pairs.iter().map(|(lo, hi)| format!("m_{lo}_{hi}")));
            h.extend(pairs.iter().map(|(lo, hi)| format!("b_{lo}_{hi}")));
            h.extend(singles.iter().map(|q| format!("b_{q}")));
            if self.ground_truth.is_some() {
                h.extend(pairs.iter().map(|(lo, hi)| format!("m_err_{lo}_{hi}")));
                h.push("m_err_mean".into());
            }
        }
        h
    }

    fn row(&self, r: &MetricsRecord) -> Result<Vec<String>> {
        let n_t = self.transforms.len();
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Shape(format!("metrics record has the wrong number of {what} values")))
            }
        };
        check(r.value_dist.as_ref().map_or(true, |v| v.len() == n_t), "value distance")?;
        check(r.nsrr.as_ref().map_or(true, |v| v.len() == n_t), "NSRR")?;
        let mut row = vec![r.iteration.to_string(), r.timestep.to_string()];
        for v in [r.eval_return, r.train_return, r.surrogate, r.value_loss, r.sym_loss] {
            row.push(cell(v));
        }
        for j in 0..n_t {
            row.push(cell(r.value_dist.as_ref().map(|v| v[j])));
        }
        for &j in &self.nsrr_transforms {
            row.push(cell(r.nsrr.as_ref().map(|v| v[j])));
        }
        if let Some((pairs, singles)) = &self.estimators {
            let np = pairs.len();
            let ns = singles.len();
            check(r.nu.as_ref().map_or(true, |v| v.len() == 2 * np + ns), "estimator")?;
            for k in 0..2 * np + ns {
                row.push(cell(r.nu.as_ref().map(|v| v[k])));
            }
            if let Some(truth) = &self.ground_truth {
                let errs: Option<Vec<f64>> = r
                    .nu
                    .as_ref()
                    .map(|nu| nu[..np].iter().zip(truth).map(|(m, t)| (m - t).abs()).collect());
                for p in 0..np {
                    row.push(cell(errs.as_ref().map(|e| e[p])));
                }
                row.push(cell(errs.map(|e| e.iter().sum::<f64>() / np.max(1) as f64)));
            }
        }
        Ok(row)
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One logging event.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsRecord {
    pub iteration: u64,
    pub timestep: u64,
    pub eval_return: Option<f64>,
    pub train_return: Option<f64>,
    pub surrogate: Option<f64>,
    pub value_loss: Option<f64>,
    pub sym_loss: Option<f64>,
    pub value_dist: Option<Vec<f64>>,
    /// Indexed by transform; only the reflection entries are written.
    pub nsrr: Option<Vec<f64>>,
    /// Estimators flattened as pair slopes, pair biases, single biases.
    pub nu: Option<Vec<f64>>,
}

/// Appending CSV writer; the header is written once for a new file.
pub struct MetricsWriter {
    schema: MetricsSchema,
    out: csv::Writer<File>,
    last_timestep: Option<u64>,
}

impl MetricsWriter {
    pub fn create(path: &Path, schema: MetricsSchema) -> Result<Self> {
        let mut out = csv::Writer::from_writer(File::create(path)?);
        out.write_record(schema.header())?;
        out.flush()?;
        Ok(Self {
            schema,
            out,
            last_timestep: None,
        })
    }

    /// Reopens `path` keeping only rows up to `iteration`; the header must match `schema`.
    pub fn resume(path: &Path, schema: MetricsSchema, iteration: u64) -> Result<Self> {
        let table = read_table(path)?;
        if table.header != schema.header() {
            return Err(Error::Config(format!("{} was written with a different column layout", path.display())));
        }
        let mut w = Self::create(path, schema)?;
        for row in table.rows.iter().filter(|r| r[0].map_or(false, |it| it <= iteration as f64)) {
            let cells: Vec<String> = row.iter().map(|v| cell(*v)).collect();
            w.out.write_record(&cells)?;
            w.last_timestep = row[1].map(|t| t as u64);
        }
        w.out.flush()?;
        Ok(w)
    }

    pub fn schema(&self) -> &MetricsSchema {
        &self.schema
    }

    pub fn write(&mut self, record: &MetricsRecord) -> Result<()> {
        if let Some(last) = self.last_timestep {
            if record.timestep <= last {
                return Err(Error::Domain(format!(
                    "metrics timestep {} does not follow {last}",
                    record.timestep
                )));
            }
        }
        self.out.write_record(self.schema.row(record)?)?;
        self.out.flush()?;
        self.last_timestep = Some(record.timestep);
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        self.out.into_inner().map_err(|e| Error::Io(e.into_error()))?.flush()?;
        Ok(())
    }
}

/// A metrics file read back as numbers; empty cells are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl MetricsTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// `(timestep, value)` for every row where the column is filled.
    pub fn series(&self, name: &str) -> Vec<(f64, f64)> {
        let (Some(c), Some(t)) = (self.column(name), self.column("timestep")) else {
            return Vec::new();
        };
        self.rows
            .iter()
            .filter_map(|r| Some((r[t]?, r[c]?)))
            .collect()
    }
}

pub fn read_table(path: &Path) -> Result<MetricsTable> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|c| {
                if c.is_empty() {
                    Ok(None)
                } else {
                    c.parse::<f64>()
                        .map(Some)
                        .map_err(|_| Error::Domain(format!("{}: non-numeric cell `{c}`", path.display())))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(MetricsTable { header, rows })
}

/// Writes `table` with the same conventions as [`MetricsWriter`].
pub fn write_table(path: &Path, table: &MetricsTable) -> Result<()> {
    let mut out = csv::Writer::from_path(path)?;
    out.write_record(&table.header)?;
    for row in &table.rows {
        out.write_record(row.iter().map(|v| cell(*v)))?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::triangle_transforms;
    use crate::symmetry::extract_relation_graph;

    fn record(iteration: u64) -> MetricsRecord {
        MetricsRecord {
            iteration,
            timestep: iteration * 10,
            eval_return: Some(1.5),
            value_dist: Some(vec![0.1; 5]),
            nsrr: Some(vec![0.25; 5]),
            nu: Some(vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.5, 0.5, 0.5]),
            ..Default::default()
        }
    }

    #[test]
    fn single_record_gives_two_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let specs = triangle_transforms([1.0; 3]);
        let mut w = MetricsWriter::create(&path, MetricsSchema::new(&specs, false, None, None)).unwrap();
        w.write(&record(1)).unwrap();
        w.finish().unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(!text.contains("m_0_1") && !text.contains("nsrr"));
        assert!(text.lines().nth(1).unwrap().starts_with("1,10,1.5,,,,,0.1,"));
    }

    #[test]
    fn optional_groups_follow_the_schema() {
        let specs = triangle_transforms([1.0; 3]);
        let graph = extract_relation_graph(&specs).unwrap();
        let fit = MetricsSchema::new(&specs, true, Some(&graph), None).header();
        assert!(fit.contains(&"m_0_1".to_string()) && !fit.iter().any(|h| h.starts_with("m_err")));
        // three reflections on the triangle
        assert_eq!(fit.iter().filter(|h| h.starts_with("nsrr_")).count(), 3);
        let truth = MetricsSchema::new(&specs, true, Some(&graph), Some(vec![2.0; 3])).header();
        assert!(truth.contains(&"m_err_mean".to_string()));
        // ground truth without fitting has nothing to score
        let none = MetricsSchema::new(&specs, true, None, Some(vec![2.0; 3])).header();
        assert!(!none.iter().any(|h| h.starts_with("m_")));
    }

    #[test]
    fn target_error_is_computed_per_pair() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let specs = triangle_transforms([1.0; 3]);
        let graph = extract_relation_graph(&specs).unwrap();
        let schema = MetricsSchema::new(&specs, true, Some(&graph), Some(vec![2.0, 1.0, 0.5]));
        let mut w = MetricsWriter::create(&path, schema).unwrap();
        w.write(&record(1)).unwrap();
        w.finish().unwrap();
        let t = read_table(&path).unwrap();
        let row = &t.rows[0];
        assert_eq!(row[t.column("m_err_0_1").unwrap()], Some(1.0));
        assert_eq!(row[t.column("m_err_mean").unwrap()], Some(0.5));
    }

    #[test]
    fn timesteps_must_increase_and_resume_truncates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let specs = triangle_transforms([1.0; 3]);
        let schema = MetricsSchema::new(&specs, false, None, None);
        let mut w = MetricsWriter::create(&path, schema.clone()).unwrap();
        for i in 1..=4 {
            w.write(&record(i)).unwrap();
        }
        assert!(w.write(&record(2)).is_err());
        w.finish().unwrap();
        let mut w = MetricsWriter::resume(&path, schema, 2).unwrap();
        assert!(w.write(&record(2)).is_err());
        w.write(&record(3)).unwrap();
        w.finish().unwrap();
        let t = read_table(&path).unwrap();
        let its: Vec<f64> = t.rows.iter().map(|r| r[0].unwrap()).collect();
        assert_eq!(its, vec![1.0, 2.0, 3.0]);
    }
}
