//! Job manifests and batch metric computation.
//!
//! A manifest is a CSV with the columns
//! `stimulus_id,reference,estimate,model_label,model_type` plus optional
//! `interference` (`;`-separated paths) and `ref_emb:<enc>` / `est_emb:<enc>`
//! columns holding `EMB1` files. Relative paths resolve against the manifest's
//! directory.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::audio::{load_wav, mixdown_mono, AudioBuffer, AudioError};
use crate::bsseval::{bss_eval_sources, si_sdr, BssEvalError, ProjectionConfig};
use crate::embedding::{embedding_mse, fad_song2song, read_embeddings, EmbeddingError, Ridge};
use crate::spectral::{mr_stft_loss, MrStftConfig, SpectralError};
use crate::study::{ModelType, StudyError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),
    #[error("metric {0} listed twice")]
    DuplicateMetric(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("{stimulus}: {metric} needs interference references")]
    MissingInterference { stimulus: String, metric: String },
    #[error("{stimulus}: no {column} file for {metric}")]
    MissingEmbedding { stimulus: String, metric: String, column: String },
    #[error("{stimulus}: embedding file {path} has encoder {found:?}, expected {expected:?}")]
    EncoderMismatch { stimulus: String, path: PathBuf, found: String, expected: String },
    #[error("{stimulus}: {path}: {source}")]
    Audio { stimulus: String, path: PathBuf, source: AudioError },
    #[error("{stimulus}: {source}")]
    BssEval { stimulus: String, source: BssEvalError },
    #[error("{stimulus}: {source}")]
    Spectral { stimulus: String, source: SpectralError },
    #[error("{stimulus}: {source}")]
    Embedding { stimulus: String, source: EmbeddingError },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MetricSpec {
    SiSdr,
    Sdr,
    Sir,
    Sar,
    MrStft,
    Fad(String),
    Mse(String),
}

impl FromStr for MetricSpec {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || PipelineError::UnknownMetric(s.to_owned());
        let encoder = |e: &str| if e.is_empty() { Err(unknown()) } else { Ok(e.to_owned()) };
        match s.trim() {
            "si-sdr" => Ok(MetricSpec::SiSdr),
            "sdr" => Ok(MetricSpec::Sdr),
            "sir" => Ok(MetricSpec::Sir),
            "sar" => Ok(MetricSpec::Sar),
            "mrstft" => Ok(MetricSpec::MrStft),
            t => match t.split_once(':') {
                Some(("fad", e)) => Ok(MetricSpec::Fad(encoder(e)?)),
                Some(("mse", e)) => Ok(MetricSpec::Mse(encoder(e)?)),
                _ => Err(unknown()),
            },
        }
    }
}

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricSpec::SiSdr => f.write_str("si-sdr"),
            MetricSpec::Sdr => f.write_str("sdr"),
            MetricSpec::Sir => f.write_str("sir"),
            MetricSpec::Sar => f.write_str("sar"),
            MetricSpec::MrStft => f.write_str("mrstft"),
            MetricSpec::Fad(e) => write!(f, "fad:{e}"),
            MetricSpec::Mse(e) => write!(f, "mse:{e}"),
        }
    }
}

/// Parses a comma-separated metric list, keeping the given order.
pub fn parse_metric_list(list: &str) -> Result<Vec<MetricSpec>> {
    let mut out: Vec<MetricSpec> = Vec::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let m: MetricSpec = item.parse()?;
        if out.contains(&m) {
            return Err(PipelineError::DuplicateMetric(m.to_string()));
        }
        out.push(m);
    }
    if out.is_empty() {
        return Err(PipelineError::UnknownMetric(list.to_owned()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub stimulus_id: String,
    pub reference: PathBuf,
    pub estimate: PathBuf,
    pub model_label: String,
    pub model_type: ModelType,
    pub interference: Vec<PathBuf>,
    /// Encoder name → embedding file.
    pub ref_emb: BTreeMap<String, PathBuf>,
    pub est_emb: BTreeMap<String, PathBuf>,
}

const REQUIRED: [&str; 5] = ["stimulus_id", "reference", "estimate", "model_label", "model_type"];

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRow>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let in_file = |e: csv::Error| PipelineError::Manifest(format!("{}: {e}", path.display()));
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(in_file)?;
    let header: Vec<String> = reader.headers().map_err(in_file)?.iter().map(str::to_owned).collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let required: Vec<usize> = REQUIRED
        .iter()
        .map(|n| col(n).ok_or_else(|| PipelineError::Manifest(format!("missing column {n:?}"))))
        .collect::<Result<_>>()?;
    let interference_col = col("interference");
    let resolve = |p: &str| -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };

    let mut rows = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let field = |k: usize| rec.get(required[k]).unwrap_or("");
        let stimulus_id = field(0).to_owned();
        if stimulus_id.is_empty() || field(3).is_empty() {
            return Err(PipelineError::Manifest(format!("line {line}: empty stimulus_id or model_label")));
        }
        if !seen.insert(stimulus_id.clone()) {
            return Err(PipelineError::Manifest(format!("line {line}: duplicate stimulus_id {stimulus_id:?}")));
        }
        let model_type: ModelType =
            field(4).parse().map_err(|e: StudyError| PipelineError::Manifest(format!("line {line}: {e}")))?;
        let interference = interference_col
            .and_then(|c| rec.get(c))
            .map(|s| s.split(';').map(str::trim).filter(|p| !p.is_empty()).map(resolve).collect())
            .unwrap_or_default();
        let mut ref_emb = BTreeMap::new();
        let mut est_emb = BTreeMap::new();
        for (h, value) in header.iter().zip(rec.iter()) {
            if value.is_empty() {
                continue;
            }
            if let Some(enc) = h.strip_prefix("ref_emb:") {
                ref_emb.insert(enc.to_owned(), resolve(value));
            } else if let Some(enc) = h.strip_prefix("est_emb:") {
                est_emb.insert(enc.to_owned(), resolve(value));
            }
        }
        rows.push(ManifestRow {
            stimulus_id,
            reference: resolve(field(1)),
            estimate: resolve(field(2)),
            model_label: field(3).to_owned(),
            model_type,
            interference,
            ref_emb,
            est_emb,
        });
    }
    Ok(rows)
}

/// Writes a manifest with absolute paths; column set is the union over rows.
pub fn write_manifest<W: Write>(out: W, rows: &[ManifestRow]) -> Result<()> {
    let encoders_ref: std::collections::BTreeSet<&String> = rows.iter().flat_map(|r| r.ref_emb.keys()).collect();
    let encoders_est: std::collections::BTreeSet<&String> = rows.iter().flat_map(|r| r.est_emb.keys()).collect();
    let with_interf = rows.iter().any(|r| !r.interference.is_empty());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = REQUIRED.iter().map(|s| s.to_string()).collect();
    if with_interf {
        header.push("interference".into());
    }
    header.extend(encoders_ref.iter().map(|e| format!("ref_emb:{e}")));
    header.extend(encoders_est.iter().map(|e| format!("est_emb:{e}")));
    w.write_record(&header)?;
    let show = |p: &Path| p.display().to_string();
    for r in rows {
        let mut rec = vec![
            r.stimulus_id.clone(),
            show(&r.reference),
            show(&r.estimate),
            r.model_label.clone(),
            r.model_type.to_string(),
        ];
        if with_interf {
            rec.push(r.interference.iter().map(|p| show(p)).collect::<Vec<_>>().join(";"));
        }
        rec.extend(encoders_ref.iter().map(|e| r.ref_emb.get(*e).map(|p| show(p)).unwrap_or_default()));
        rec.extend(encoders_est.iter().map(|e| r.est_emb.get(*e).map(|p| show(p)).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsOptions {
    pub projection: ProjectionConfig,
    pub mrstft: MrStftConfig,
    pub ridge: Ridge,
}


fn load_mono(stimulus: &str, path: &Path) -> Result<AudioBuffer> {
    let wrap = |source| PipelineError::Audio { stimulus: stimulus.to_owned(), path: path.to_path_buf(), source };
    mixdown_mono(&load_wav(path).map_err(wrap)?).map_err(wrap)
}

fn load_embedding(
    row: &ManifestRow,
    metric: &MetricSpec,
    encoder: &str,
    reference: bool,
) -> Result<crate::embedding::EmbeddingSequence> {
    let (map, column) = if reference { (&row.ref_emb, "ref_emb") } else { (&row.est_emb, "est_emb") };
    let path = map.get(encoder).ok_or_else(|| PipelineError::MissingEmbedding {
        stimulus: row.stimulus_id.clone(),
        metric: metric.to_string(),
        column: format!("{column}:{encoder}"),
    })?;
    let seq = read_embeddings(path)
        .map_err(|source| PipelineError::Embedding { stimulus: row.stimulus_id.clone(), source })?;
    if seq.encoder_id() != encoder {
        return Err(PipelineError::EncoderMismatch {
            stimulus: row.stimulus_id.clone(),
            path: path.clone(),
            found: seq.encoder_id().to_owned(),
            expected: encoder.to_owned(),
        });
    }
    Ok(seq)
}

/// Values of `metrics` for one manifest row, in the order given.
pub fn compute_row(row: &ManifestRow, metrics: &[MetricSpec], options: &MetricsOptions) -> Result<Vec<f64>> {
    let id = row.stimulus_id.as_str();
    let needs_audio = metrics.iter().any(|m| !matches!(m, MetricSpec::Fad(_) | MetricSpec::Mse(_)));
    let needs_bss = metrics.iter().any(|m| matches!(m, MetricSpec::Sdr | MetricSpec::Sir | MetricSpec::Sar));
    for m in metrics {
        if matches!(m, MetricSpec::Sir | MetricSpec::Sar) && row.interference.is_empty() {
            return Err(PipelineError::MissingInterference { stimulus: id.to_owned(), metric: m.to_string() });
        }
    }

    let audio = if needs_audio {
        Some((load_mono(id, &row.reference)?, load_mono(id, &row.estimate)?))
    } else {
        None
    };
    let bss = match (&audio, needs_bss) {
        (Some((reference, estimate)), true) => {
            let interference: Vec<AudioBuffer> =
                row.interference.iter().map(|p| load_mono(id, p)).collect::<Result<_>>()?;
            Some(
                bss_eval_sources(estimate, reference, &interference, &options.projection)
                    .map_err(|source| PipelineError::BssEval { stimulus: id.to_owned(), source })?,
            )
        }
        _ => None,
    };

    metrics
        .iter()
        .map(|m| {
            let bss_err = |source| PipelineError::BssEval { stimulus: id.to_owned(), source };
            let emb_err = |source| PipelineError::Embedding { stimulus: id.to_owned(), source };
            Ok(match m {
                MetricSpec::SiSdr => {
                    let (r, e) = audio.as_ref().expect("audio loaded");
                    si_sdr(e, r).map_err(bss_err)?
                }
                MetricSpec::Sdr => bss.expect("bss computed").sdr,
                MetricSpec::Sir => bss.and_then(|b| b.sir).expect("interference checked"),
                MetricSpec::Sar => bss.and_then(|b| b.sar).expect("interference checked"),
                MetricSpec::MrStft => {
                    let (r, e) = audio.as_ref().expect("audio loaded");
                    mr_stft_loss(e, r, &options.mrstft)
                        .map_err(|source| PipelineError::Spectral { stimulus: id.to_owned(), source })?
                        .total
                }
                MetricSpec::Fad(enc) => {
                    let r = load_embedding(row, m, enc, true)?;
                    let e = load_embedding(row, m, enc, false)?;
                    fad_song2song(&r, &e, options.ridge).map_err(emb_err)?
                }
                MetricSpec::Mse(enc) => {
                    let r = load_embedding(row, m, enc, true)?;
                    let e = load_embedding(row, m, enc, false)?;
                    embedding_mse(&r, &e).map_err(emb_err)?
                }
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricTableRow {
    pub stimulus_id: String,
    pub model_label: String,
    pub model_type: ModelType,
    pub values: Vec<f64>,
}

/// Computes every row in parallel; the result is sorted by stimulus id.
pub fn compute_table(rows: &[ManifestRow], metrics: &[MetricSpec], options: &MetricsOptions) -> Result<Vec<MetricTableRow>> {
    let mut out = rows
        .par_iter()
        .map(|row| {
            Ok(MetricTableRow {
                stimulus_id: row.stimulus_id.clone(),
                model_label: row.model_label.clone(),
                model_type: row.model_type,
                values: compute_row(row, metrics, options)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| a.stimulus_id.cmp(&b.stimulus_id));
    Ok(out)
}

/// Writes `stimulus_id,model_label,model_type[,dmos],<metrics…>`. Floats use
/// the shortest representation that round-trips. When `dmos` is given every
/// row must have an entry.
pub fn write_metric_table<W: Write>(
    out: W,
    rows: &[MetricTableRow],
    metrics: &[MetricSpec],
    dmos: Option<&BTreeMap<String, f64>>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["stimulus_id".to_owned(), "model_label".into(), "model_type".into()];
    if dmos.is_some() {
        header.push("dmos".into());
    }
    header.extend(metrics.iter().map(ToString::to_string));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.stimulus_id.clone(), r.model_label.clone(), r.model_type.to_string()];
        if let Some(d) = dmos {
            let v = d
                .get(&r.stimulus_id)
                .ok_or_else(|| PipelineError::Manifest(format!("no DMOS for stimulus {:?}", r.stimulus_id)))?;
            rec.push(v.to_string());
        }
        rec.extend(r.values.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_names_round_trip() {
        let list = parse_metric_list("si-sdr, sdr,sir,sar,mrstft,fad:clap,mse:music2latent").unwrap();
        assert_eq!(list.len(), 7);
        assert_eq!(list[6], MetricSpec::Mse("music2latent".into()));
        let joined: Vec<String> = list.iter().map(ToString::to_string).collect();
        assert_eq!(joined.join(","), "si-sdr,sdr,sir,sar,mrstft,fad:clap,mse:music2latent");
        assert!(matches!(parse_metric_list("sdr,pesq"), Err(PipelineError::UnknownMetric(_))));
        assert!(matches!(parse_metric_list("fad:"), Err(PipelineError::UnknownMetric(_))));
        assert!(matches!(parse_metric_list("sdr,sdr"), Err(PipelineError::DuplicateMetric(_))));
    }

    #[test]
    fn manifest_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        std::fs::write(
            &path,
            "stimulus_id,reference,estimate,model_label,model_type,interference,ref_emb:clap,est_emb:clap\n\
             s1,r.wav,/abs/e.wav,HTDemucs,discriminative,a.wav;b.wav,r.emb1,\n",
        )
        .unwrap();
        let rows = read_manifest(&path).unwrap();
        assert_eq!(rows[0].reference, dir.path().join("r.wav"));
        assert_eq!(rows[0].estimate, PathBuf::from("/abs/e.wav"));
        assert_eq!(rows[0].interference.len(), 2);
        assert_eq!(rows[0].ref_emb.len(), 1);
        assert!(rows[0].est_emb.is_empty());

        let mut buf = Vec::new();
        write_manifest(&mut buf, &rows).unwrap();
        std::fs::write(&path, &buf).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), rows);

        std::fs::write(&path, "stimulus_id,reference\ns,r\n").unwrap();
        assert!(matches!(read_manifest(&path), Err(PipelineError::Manifest(_))));
    }
}
