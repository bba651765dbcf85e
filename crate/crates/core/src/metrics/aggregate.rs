use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

use super::Metric;

/// Per-step values of one metric for one clip under one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub variant: String,
    pub metric: Metric,
    pub clip_id: String,
    pub per_step: Vec<f64>,
}

/// One `(variant, metric, t)` cell: mean and population std over clips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub variant: String,
    pub metric: Metric,
    pub t: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AggregateTable {
    pub rows: Vec<AggregateRow>,
}

/// Mean and population std per step. `first_t` labels the first step, so with
/// `t_p` observed frames it is `t_p + 1`.
///
/// Every variant must cover the same clips, and each (variant, metric) pair
/// one series per clip with a common horizon. Sums run in clip-id order, so
/// the result does not depend on the order of `series`.
fn clip_set<'a>(group: &BTreeMap<&'a str, &[f64]>) -> BTreeSet<&'a str> {
    group.keys().copied().collect()
}

pub fn aggregate(series: &[MetricSeries], first_t: usize) -> Result<AggregateTable> {
    if series.is_empty() {
        return Err(Error::Argument("no metric series to aggregate".into()));
    }
    let mut variants: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<(&str, Metric), BTreeMap<&str, &[f64]>> = BTreeMap::new();
    for s in series {
        if !variants.contains(&s.variant.as_str()) {
            variants.push(&s.variant);
        }
        let group = groups.entry((&s.variant, s.metric)).or_default();
        if group.insert(&s.clip_id, &s.per_step).is_some() {
            return Err(Error::Argument(format!(
                "clip {} appears twice for {} {}",
                s.clip_id, s.variant, s.metric
            )));
        }
    }

    let reference = clip_set(groups.values().next().expect("non-empty"));
    let mut rows = Vec::new();
    for &variant in &variants {
        for metric in Metric::ALL {
            let Some(group) = groups.get(&(variant, metric)) else { continue };
            if clip_set(group) != reference {
                return Err(Error::Argument(format!(
                    "{variant} {metric} is evaluated on a different clip set"
                )));
            }
            let horizon = group.values().next().expect("non-empty").len();
            if let Some((clip, _)) = group.iter().find(|(_, v)| v.len() != horizon) {
                return Err(Error::Shape(format!(
                    "{variant} {metric}: clip {clip} has a different horizon"
                )));
            }
            let n = group.len() as f64;
            for step in 0..horizon {
                let mean = group.values().map(|v| v[step]).sum::<f64>() / n;
                let var = group.values().map(|v| (v[step] - mean).powi(2)).sum::<f64>() / n;
                rows.push(AggregateRow {
                    variant: variant.to_string(),
                    metric,
                    t: first_t + step,
                    mean,
                    std: var.sqrt(),
                });
            }
        }
    }
    Ok(AggregateTable { rows })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        if let csv::ErrorKind::Io(source) = e.into_kind() {
            return Error::io(path, source);
        }
        unreachable!("is_io_error implies an Io kind");
    }
    Error::parse(path, e.to_string())
}

impl AggregateTable {
    pub const HEADER: [&'static str; 5] = ["variant", "metric", "t", "mean", "std"];

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows at the given time steps only; every step must be present.
    pub fn at_times(&self, ts: &[usize]) -> Result<AggregateTable> {
        let have: BTreeSet<usize> = self.rows.iter().map(|r| r.t).collect();
        if let Some(t) = ts.iter().find(|t| !have.contains(t)) {
            return Err(Error::Argument(format!(
                "time step t = {t} is outside the evaluated range {:?}..={:?}",
                have.first(),
                have.last()
            )));
        }
        Ok(AggregateTable {
            rows: self.rows.iter().filter(|r| ts.contains(&r.t)).cloned().collect(),
        })
    }

    pub fn variants(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.variant) {
                out.push(r.variant.clone());
            }
        }
        out
    }

    pub fn metrics(&self) -> Vec<Metric> {
        let set: BTreeSet<Metric> = self.rows.iter().map(|r| r.metric).collect();
        set.into_iter().collect()
    }

    /// `(t, mean, std)` for one variant and metric, ordered by `t`.
    pub fn curve(&self, variant: &str, metric: Metric) -> Vec<(usize, f64, f64)> {
        let mut c: Vec<_> = self
            .rows
            .iter()
            .filter(|r| r.variant == variant && r.metric == metric)
            .map(|r| (r.t, r.mean, r.std))
            .collect();
        c.sort_by_key(|p| p.0);
        c
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record(Self::HEADER).expect("in-memory write");
        for r in &self.rows {
            w.serialize(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<AggregateTable> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
        if header.iter().ne(Self::HEADER) {
            return Err(Error::parse(
                path,
                format!(
                    "expected header {}, found {}",
                    Self::HEADER.join(","),
                    header.iter().collect::<Vec<_>>().join(",")
                ),
            ));
        }
        let rows = r
            .deserialize()
            .collect::<std::result::Result<Vec<AggregateRow>, _>>()
            .map_err(|e| csv_error(path, e))?;
        Ok(AggregateTable { rows })
    }
}

#[derive(Serialize, Deserialize)]
struct SeriesRecord {
    variant: String,
    metric: Metric,
    clip_id: String,
    t: usize,
    value: f64,
}

/// Long-format per-clip dump: `variant,metric,clip_id,t,value`.
pub fn write_series_csv(path: &Path, series: &[MetricSeries], first_t: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for s in series {
        for (i, &value) in s.per_step.iter().enumerate() {
            w.serialize(SeriesRecord {
                variant: s.variant.clone(),
                metric: s.metric,
                clip_id: s.clip_id.clone(),
                t: first_t + i,
                value,
            })
            .map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Inverse of [`write_series_csv`]; also returns the first `t`.
pub fn read_series_csv(path: &Path) -> Result<(Vec<MetricSeries>, usize)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut out: Vec<MetricSeries> = Vec::new();
    let mut first_t = usize::MAX;
    for rec in r.deserialize::<SeriesRecord>() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        first_t = first_t.min(rec.t);
        match out.last_mut() {
            Some(s) if s.variant == rec.variant && s.metric == rec.metric && s.clip_id == rec.clip_id => {
                s.per_step.push(rec.value)
            }
            _ => out.push(MetricSeries {
                variant: rec.variant,
                metric: rec.metric,
                clip_id: rec.clip_id,
                per_step: vec![rec.value],
            }),
        }
    }
    if out.is_empty() {
        return Err(Error::parse(path, "no rows"));
    }
    Ok((out, first_t))
}
