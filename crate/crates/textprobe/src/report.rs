//! Aggregation of stored probe results into count/mean/min/max tables with
//! high-similarity counts and rates, and CSV rendering.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scoring::classify_high_similarity;
use crate::store::ProbeResult;
use crate::RougeConfig;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no records selected for aggregation")]
    EmptySelection,
    #[error("model {0} has no family mapping")]
    UnmappedModel(String),
    #[error("failed to write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupBy {
    Model,
    TextType,
    MaxTokens,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub group: String,
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub high_count: usize,
    pub high_rate: f64,
}

/// Display rounding: 3 decimal places, half away from zero.
pub fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

fn rows_from_groups(
    groups: BTreeMap<(u64, String), Vec<f64>>,
    rouge: &RougeConfig,
) -> Vec<AggregateRow> {
    groups
        .into_iter()
        .map(|((_, group), recalls)| {
            let count = recalls.len();
            let mean = recalls.iter().sum::<f64>() / count as f64;
            let min = recalls.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = recalls.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let high_count = recalls
                .iter()
                .filter(|r| classify_high_similarity(**r, rouge))
                .count();
            AggregateRow {
                group,
                count,
                mean,
                min,
                max,
                high_count,
                high_rate: high_count as f64 / count as f64,
            }
        })
        .collect()
}

/// One row per group, sorted by group key; recall is the aggregated score.
pub fn aggregate(
    records: &[&ProbeResult],
    group_by: GroupBy,
    rouge: &RougeConfig,
) -> Result<Vec<AggregateRow>, ReportError> {
    if records.is_empty() {
        return Err(ReportError::EmptySelection);
    }
    let mut groups: BTreeMap<(u64, String), Vec<f64>> = BTreeMap::new();
    for r in records {
        let key = match group_by {
            GroupBy::Model => (0, r.model_id.clone()),
            GroupBy::TextType => (0, r.text_type.to_string()),
            GroupBy::MaxTokens => {
                let mt = r.completion.params.max_tokens;
                (mt as u64, mt.to_string())
            }
        };
        groups.entry(key).or_default().push(r.score.recall);
    }
    Ok(rows_from_groups(groups, rouge))
}

/// Aggregate across all parameter scales of a model family.
pub fn rate_table(
    records: &[&ProbeResult],
    families: &BTreeMap<String, String>,
    rouge: &RougeConfig,
) -> Result<Vec<AggregateRow>, ReportError> {
    if records.is_empty() {
        return Err(ReportError::EmptySelection);
    }
    let mut groups: BTreeMap<(u64, String), Vec<f64>> = BTreeMap::new();
    for r in records {
        let family = families
            .get(&r.model_id)
            .ok_or_else(|| ReportError::UnmappedModel(r.model_id.clone()))?;
        groups
            .entry((0, family.clone()))
            .or_default()
            .push(r.score.recall);
    }
    Ok(rows_from_groups(groups, rouge))
}

/// Mean recall per (row group, column group); used for the model x
/// max_tokens heatmap.
pub fn mean_matrix(
    records: &[&ProbeResult],
) -> (Vec<String>, Vec<String>, Vec<Vec<f64>>) {
    let mut cells: BTreeMap<(String, u32), (f64, usize)> = BTreeMap::new();
    for r in records {
        let cell = cells
            .entry((r.model_id.clone(), r.completion.params.max_tokens))
            .or_insert((0.0, 0));
        cell.0 += r.score.recall;
        cell.1 += 1;
    }
    let mut models: Vec<String> = cells.keys().map(|(m, _)| m.clone()).collect();
    models.dedup();
    let mut tokens: Vec<u32> = cells.keys().map(|(_, t)| *t).collect();
    tokens.sort_unstable();
    tokens.dedup();
    let matrix = models
        .iter()
        .map(|m| {
            tokens
                .iter()
                .map(|t| {
                    cells
                        .get(&(m.clone(), *t))
                        .map(|(sum, n)| sum / *n as f64)
                        .unwrap_or(f64::NAN)
                })
                .collect()
        })
        .collect();
    let token_labels = tokens.iter().map(|t| t.to_string()).collect();
    (models, token_labels, matrix)
}

/// Render rows as CSV: a header then one line per row, numeric fields at
/// 3 decimal places, deterministic order.
pub fn emit_csv(rows: &[AggregateRow], path: &Path) -> Result<(), ReportError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["group", "count", "mean", "min", "max", "high_count", "high_rate"])?;
    for row in rows {
        writer.write_record([
            row.group.clone(),
            row.count.to_string(),
            format!("{:.3}", round3(row.mean)),
            format!("{:.3}", round3(row.min)),
            format!("{:.3}", round3(row.max)),
            row.high_count.to_string(),
            format!("{:.3}", round3(row.high_rate)),
        ])?;
    }
    writer.flush().map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(())
}

/// Parse a CSV produced by `emit_csv` back into rows.
pub fn parse_csv(path: &Path) -> Result<Vec<AggregateRow>, ReportError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        rows.push(AggregateRow {
            group: record[0].to_string(),
            count: record[1].parse().unwrap_or(0),
            mean: record[2].parse().unwrap_or(f64::NAN),
            min: record[3].parse().unwrap_or(f64::NAN),
            max: record[4].parse().unwrap_or(f64::NAN),
            high_count: record[5].parse().unwrap_or(0),
            high_rate: record[6].parse().unwrap_or(f64::NAN),
        });
    }
    Ok(rows)
}
