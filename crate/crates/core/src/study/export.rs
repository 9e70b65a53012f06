//! Ratings CSV: `stimulus_id,model_label,model_type,participant_id,rating,timestamp,group_id`
//! with an optional trailing `retained` column.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{ModelLabel, ModelType, RatingRecord};

pub const RATINGS_HEADER: [&str; 7] =
    ["stimulus_id", "model_label", "model_type", "participant_id", "rating", "timestamp", "group_id"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportRow {
    pub stimulus_id: String,
    pub model_label: ModelLabel,
    pub model_type: ModelType,
    pub participant_id: String,
    pub rating: u8,
    pub timestamp: u64,
    pub group_id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retained: Option<bool>,
}

impl ExportRow {
    pub fn record(&self) -> RatingRecord {
        RatingRecord {
            participant_id: self.participant_id.clone(),
            stimulus_id: self.stimulus_id.clone(),
            rating: self.rating,
            timestamp: self.timestamp,
            group_id: self.group_id,
        }
    }
}

/// Writes the header and rows. The `retained` column is emitted when
/// `with_retained` is set; rows lacking a flag then get an empty field.
pub fn write_ratings_csv<W: Write>(out: W, rows: &[ExportRow], with_retained: bool) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = RATINGS_HEADER.to_vec();
    if with_retained {
        header.push("retained");
    }
    w.write_record(&header)?;
    for r in rows {
        let mut fields = vec![
            r.stimulus_id.clone(),
            r.model_label.to_string(),
            r.model_type.to_string(),
            r.participant_id.clone(),
            r.rating.to_string(),
            r.timestamp.to_string(),
            r.group_id.to_string(),
        ];
        if with_retained {
            fields.push(r.retained.map(|b| b.to_string()).unwrap_or_default());
        }
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows by header name; a `retained` column is optional.
pub fn read_ratings_csv<R: Read>(input: R) -> csv::Result<Vec<ExportRow>> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input).deserialize().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, retained: Option<bool>) -> ExportRow {
        ExportRow {
            stimulus_id: id.into(),
            model_label: ModelLabel::MelRoFoSmallBigVgan,
            model_type: ModelType::Generative,
            participant_id: "p,1".into(),
            rating: 4,
            timestamp: 1_700_000_000_000,
            group_id: 2,
            retained,
        }
    }

    #[test]
    fn round_trip_with_quoting() {
        let rows = vec![row("a", Some(true)), row("b", Some(false))];
        let mut buf = Vec::new();
        write_ratings_csv(&mut buf, &rows, true).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("stimulus_id,model_label,model_type,participant_id,rating,timestamp,group_id,retained\n"));
        assert!(text.contains("\"p,1\""));
        assert_eq!(read_ratings_csv(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn plain_schema() {
        let rows = vec![row("a", None)];
        let mut buf = Vec::new();
        write_ratings_csv(&mut buf, &rows, false).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), RATINGS_HEADER.join(","));
        assert_eq!(read_ratings_csv(&buf[..]).unwrap(), rows);
    }
}
