//! Spearman rank correlation between objective metrics and DMOS, split by
//! model type, with trade-off table export.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::study::ModelType;

#[derive(Debug, Error, PartialEq)]
pub enum CorrelationError {
    #[error("non-finite value at index {0}")]
    NonFiniteValue(usize),
    #[error("inputs differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("correlation undefined: constant ranks")]
    Undefined,
    #[error("no {0} rows in table")]
    MissingSubset(ModelType),
    #[error("no direction known for metric {0:?}")]
    UnknownDirection(String),
    #[error("table has no metric columns")]
    NoMetrics,
    #[error("duplicate stimulus id {0:?}")]
    DuplicateStimulus(String),
    #[error("row {row}: {message}")]
    BadRow { row: usize, message: String },
    #[error("csv: {0}")]
    Csv(String),
    #[error("directions: {0}")]
    Directions(String),
}

impl From<csv::Error> for CorrelationError {
    fn from(e: csv::Error) -> Self {
        CorrelationError::Csv(e.to_string())
    }
}

pub type Result<T, E = CorrelationError> = std::result::Result<T, E>;

/// Ascending 1-based ranks; ties get the mean of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Result<Vec<f64>> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(CorrelationError::NonFiniteValue(i));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j hold ranks i+1..=j
        let rank = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    Ok(ranks)
}

/// Spearman's rank correlation: Pearson correlation of average ranks.
pub fn srcc(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(CorrelationError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(CorrelationError::TooFewPoints(x.len()));
    }
    let rx = average_ranks(x)?;
    let ry = average_ranks(y)?;
    // Average ranks always have mean (n + 1) / 2.
    let mean = (x.len() + 1) as f64 / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        let (da, db) = (a - mean, b - mean);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(CorrelationError::Undefined);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    HigherBetter,
    LowerBetter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricInfo {
    pub direction: Direction,
    pub intrusive: bool,
    pub embedding_based: bool,
}

fn is_embedding_metric(name: &str) -> bool {
    name.starts_with("fad:") || name.starts_with("mse:")
}

impl MetricInfo {
    /// Defaults for the metric names produced by the `metrics` pipeline.
    pub fn infer(name: &str) -> Option<Self> {
        let direction = match name {
            "si-sdr" | "sdr" | "sir" | "sar" => Direction::HigherBetter,
            "mrstft" => Direction::LowerBetter,
            n if is_embedding_metric(n) => Direction::LowerBetter,
            _ => return None,
        };
        Some(Self { direction, intrusive: true, embedding_based: is_embedding_metric(name) })
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DirectionEntry {
    Bare(Direction),
    Full { direction: Direction, intrusive: Option<bool>, embedding_based: Option<bool> },
}

/// Parses a directions sidecar: a JSON object mapping metric name to either a
/// direction string (`"higher_better"` / `"lower_better"`) or an object with
/// `direction` and optional `intrusive` (default true) and `embedding_based`
/// (default: name starts with `fad:` or `mse:`).
pub fn parse_directions(json: &str) -> Result<BTreeMap<String, MetricInfo>> {
    let raw: BTreeMap<String, DirectionEntry> =
        serde_json::from_str(json).map_err(|e| CorrelationError::Directions(e.to_string()))?;
    Ok(raw
        .into_iter()
        .map(|(name, entry)| {
            let info = match entry {
                DirectionEntry::Bare(direction) => {
                    MetricInfo { direction, intrusive: true, embedding_based: is_embedding_metric(&name) }
                }
                DirectionEntry::Full { direction, intrusive, embedding_based } => MetricInfo {
                    direction,
                    intrusive: intrusive.unwrap_or(true),
                    embedding_based: embedding_based.unwrap_or_else(|| is_embedding_metric(&name)),
                },
            };
            (name, info)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub stimulus_id: String,
    pub model_label: String,
    pub model_type: ModelType,
    pub dmos: f64,
    /// One value per entry of [`MetricTable::metric_names`].
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricTable {
    pub metric_names: Vec<String>,
    pub rows: Vec<MetricRow>,
}

const FIXED_COLUMNS: [&str; 4] = ["stimulus_id", "model_label", "model_type", "dmos"];

impl MetricTable {
    /// Reads `stimulus_id,model_label,model_type,dmos,<metric columns…>`.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
        if header.len() < 4 || header[..4] != FIXED_COLUMNS {
            return Err(CorrelationError::Csv(format!("header must start with {}", FIXED_COLUMNS.join(","))));
        }
        let metric_names = header[4..].to_vec();
        if metric_names.is_empty() {
            return Err(CorrelationError::NoMetrics);
        }
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            let row = i + 2;
            let bad = |message: String| CorrelationError::BadRow { row, message };
            let number = |s: &str, col: &str| -> Result<f64> {
                s.parse::<f64>().map_err(|_| bad(format!("{col}: {s:?} is not a number")))
            };
            let model_type: ModelType = rec[2].parse().map_err(|e| bad(format!("{e}")))?;
            if model_type == ModelType::Gold {
                return Err(bad("gold rows carry no metric values".into()));
            }
            rows.push(MetricRow {
                stimulus_id: rec[0].to_owned(),
                model_label: rec[1].to_owned(),
                model_type,
                dmos: number(&rec[3], "dmos")?,
                values: metric_names.iter().enumerate().map(|(k, n)| number(&rec[4 + k], n)).collect::<Result<_>>()?,
            });
        }
        Ok(Self { metric_names, rows })
    }

    pub fn count(&self, model_type: ModelType) -> usize {
        self.rows.iter().filter(|r| r.model_type == model_type).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub metric_name: String,
    /// `None` when the correlation is undefined (constant ranks).
    pub srcc_disc: Option<f64>,
    pub srcc_gen: Option<f64>,
    pub intrusive: bool,
    pub embedding_based: bool,
}

fn subset_srcc(rows: &[&MetricRow], k: usize, sign: f64) -> Result<Option<f64>> {
    let metric: Vec<f64> = rows.iter().map(|r| r.values[k]).collect();
    let dmos: Vec<f64> = rows.iter().map(|r| r.dmos).collect();
    match srcc(&metric, &dmos) {
        Ok(r) => Ok(Some(sign * r)),
        Err(CorrelationError::Undefined) => Ok(None),
        Err(e) => Err(e),
    }
}

/// SRCC between each metric and DMOS over the discriminative and generative
/// subsets. Coefficients of lower-is-better metrics are negated so that larger
/// always means better agreement. Metrics missing from `directions` fall back
/// to [`MetricInfo::infer`].
pub fn tradeoff_table(table: &MetricTable, directions: &BTreeMap<String, MetricInfo>) -> Result<Vec<TradeoffRow>> {
    let mut seen = BTreeSet::new();
    for r in &table.rows {
        if !seen.insert(r.stimulus_id.as_str()) {
            return Err(CorrelationError::DuplicateStimulus(r.stimulus_id.clone()));
        }
    }
    let mut rows: Vec<&MetricRow> = table.rows.iter().collect();
    rows.sort_by(|a, b| a.stimulus_id.cmp(&b.stimulus_id));
    let disc: Vec<&MetricRow> = rows.iter().copied().filter(|r| r.model_type == ModelType::Discriminative).collect();
    let gen: Vec<&MetricRow> = rows.iter().copied().filter(|r| r.model_type == ModelType::Generative).collect();
    if disc.is_empty() {
        return Err(CorrelationError::MissingSubset(ModelType::Discriminative));
    }
    if gen.is_empty() {
        return Err(CorrelationError::MissingSubset(ModelType::Generative));
    }

    table
        .metric_names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let info = directions
                .get(name)
                .copied()
                .or_else(|| MetricInfo::infer(name))
                .ok_or_else(|| CorrelationError::UnknownDirection(name.clone()))?;
            let sign = match info.direction {
                Direction::HigherBetter => 1.0,
                Direction::LowerBetter => -1.0,
            };
            Ok(TradeoffRow {
                metric_name: name.clone(),
                srcc_disc: subset_srcc(&disc, k, sign)?,
                srcc_gen: subset_srcc(&gen, k, sign)?,
                intrusive: info.intrusive,
                embedding_based: info.embedding_based,
            })
        })
        .collect()
}

/// CSV with empty fields for undefined coefficients.
pub fn write_tradeoff_csv<W: Write>(out: W, rows: &[TradeoffRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["metric_name", "srcc_disc", "srcc_gen", "intrusive", "embedding_based"])?;
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.metric_name.clone(),
            fmt(r.srcc_disc),
            fmt(r.srcc_gen),
            r.intrusive.to_string(),
            r.embedding_based.to_string(),
        ])?;
    }
    w.flush().map_err(|e| CorrelationError::Csv(e.to_string()))
}

const SVG_SIZE: f64 = 520.0;
const SVG_MARGIN: f64 = 60.0;

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Scatter of `srcc_disc` (x) against `srcc_gen` (y) over [−1, 1]². Intrusive
/// metrics are blue, non-intrusive orange; embedding-based metrics are drawn as
/// stars, others as circles. The best metric on each axis gets a larger marker.
/// Rows with an undefined coefficient are left out.
pub fn tradeoff_svg(rows: &[TradeoffRow]) -> String {
    let plot = SVG_SIZE - 2.0 * SVG_MARGIN;
    let px = |v: f64| SVG_MARGIN + (v + 1.0) / 2.0 * plot;
    let py = |v: f64| SVG_SIZE - SVG_MARGIN - (v + 1.0) / 2.0 * plot;
    let points: Vec<(&TradeoffRow, f64, f64)> =
        rows.iter().filter_map(|r| Some((r, r.srcc_disc?, r.srcc_gen?))).collect();
    let best_x = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let best_y = points.iter().map(|p| p.2).fold(f64::NEG_INFINITY, f64::max);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_SIZE}" height="{SVG_SIZE}" viewBox="0 0 {SVG_SIZE} {SVG_SIZE}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for t in [-1.0, -0.5, 0.0, 0.5, 1.0] {
        let _ = writeln!(
            s,
            r##"<line x1="{x}" y1="{y0}" x2="{x}" y2="{y1}" stroke="#ddd"/><line x1="{x0}" y1="{y}" x2="{x1}" y2="{y}" stroke="#ddd"/>"##,
            x = px(t),
            y = py(t),
            x0 = px(-1.0),
            x1 = px(1.0),
            y0 = py(-1.0),
            y1 = py(1.0),
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{t}</text>"#, px(t), py(-1.0) + 16.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{t}</text>"#, px(-1.0) - 6.0, py(t) + 4.0);
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">SRCC discriminative</text>"#,
        SVG_SIZE / 2.0,
        SVG_SIZE - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">SRCC generative</text>"#,
        SVG_SIZE / 2.0,
        SVG_SIZE / 2.0
    );
    for (row, x, y) in &points {
        let color = if row.intrusive { "#1f77b4" } else { "#ff7f0e" };
        let scale = if *x == best_x || *y == best_y { 1.8 } else { 1.0 };
        let (cx, cy) = (px(*x), py(*y));
        if row.embedding_based {
            let _ = writeln!(
                s,
                r#"<text x="{cx}" y="{}" fill="{color}" font-size="{}" text-anchor="middle">*</text>"#,
                cy + 7.0 * scale,
                20.0 * scale
            );
        } else {
            let _ = writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="{}" fill="{color}"/>"#, 4.0 * scale);
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, cx + 8.0, cy - 6.0, escape_xml(&row.metric_name));
    }
    s.push_str("</svg>\n");
    s
}
