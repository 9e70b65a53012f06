//! Degradation Category Rating study: stimulus grouping, participant
//! screening, DMOS aggregation and bootstrap intervals of the median.

mod export;
mod stats;

pub use export::{read_ratings_csv, write_ratings_csv, ExportRow, RATINGS_HEADER};
pub use stats::{bootstrap_median_ci, median, BootstrapConfig};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StudyError {
    #[error("study has no stimuli")]
    NoStimuli,
    #[error("invalid study config: {0}")]
    InvalidConfig(String),
    #[error("duplicate stimulus id {0:?}")]
    DuplicateStimulus(String),
    #[error("need {needed} distinct references for gold pairs, only {available} available")]
    NotEnoughGoldCandidates { needed: usize, available: usize },
    #[error("stimulus {0:?} has no rating from a retained participant")]
    UnratedStimulus(String),
    #[error("rating {0} outside the 1..=5 scale")]
    RatingOutOfRange(u8),
    #[error("bootstrap needs at least one value")]
    EmptyInput,
    #[error("unknown model label {0:?}")]
    UnknownModelLabel(String),
    #[error("unknown model type {0:?}")]
    UnknownModelType(String),
}

pub type Result<T, E = StudyError> = std::result::Result<T, E>;

/// Five-point DCR scale, best first.
pub const DCR_SCALE: [(u8, &str); 5] = [
    (5, "Degradation is inaudible"),
    (4, "Degradation is audible but not annoying"),
    (3, "Degradation is slightly annoying"),
    (2, "Degradation is annoying"),
    (1, "Degradation is very annoying"),
];

/// Gold ratings below this value count against a participant.
pub const GOLD_PASS_RATING: u8 = 4;
/// A participant with more sub-threshold gold ratings than this is excluded.
pub const MAX_FAILED_GOLD: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelType {
    Discriminative,
    Generative,
    Gold,
}

impl ModelType {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelType::Discriminative => "discriminative",
            ModelType::Generative => "generative",
            ModelType::Gold => "gold",
        }
    }
}

impl fmt::Display for ModelType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelType {
    type Err = StudyError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "discriminative" | "disc" => Ok(ModelType::Discriminative),
            "generative" | "gen" => Ok(ModelType::Generative),
            "gold" => Ok(ModelType::Gold),
            _ => Err(StudyError::UnknownModelType(s.to_owned())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelLabel {
    #[serde(rename = "HTDemucs")]
    HtDemucs,
    #[serde(rename = "MelRoFo(L)")]
    MelRoFoLarge,
    #[serde(rename = "MelRoFo(S)")]
    MelRoFoSmall,
    #[serde(rename = "MelRoFo(S)+BigVGAN")]
    MelRoFoSmallBigVgan,
    #[serde(rename = "SGMSVS")]
    Sgmsvs,
    #[serde(rename = "GOLD")]
    Gold,
}

impl ModelLabel {
    pub const ALL: [ModelLabel; 6] = [
        ModelLabel::HtDemucs,
        ModelLabel::MelRoFoLarge,
        ModelLabel::MelRoFoSmall,
        ModelLabel::MelRoFoSmallBigVgan,
        ModelLabel::Sgmsvs,
        ModelLabel::Gold,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelLabel::HtDemucs => "HTDemucs",
            ModelLabel::MelRoFoLarge => "MelRoFo(L)",
            ModelLabel::MelRoFoSmall => "MelRoFo(S)",
            ModelLabel::MelRoFoSmallBigVgan => "MelRoFo(S)+BigVGAN",
            ModelLabel::Sgmsvs => "SGMSVS",
            ModelLabel::Gold => "GOLD",
        }
    }

    pub fn model_type(self) -> ModelType {
        match self {
            ModelLabel::HtDemucs | ModelLabel::MelRoFoLarge | ModelLabel::MelRoFoSmall => ModelType::Discriminative,
            ModelLabel::MelRoFoSmallBigVgan | ModelLabel::Sgmsvs => ModelType::Generative,
            ModelLabel::Gold => ModelType::Gold,
        }
    }
}

impl fmt::Display for ModelLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelLabel {
    type Err = StudyError;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_ascii_lowercase();
        ModelLabel::ALL
            .into_iter()
            .find(|l| l.as_str().to_ascii_lowercase() == key)
            .ok_or_else(|| StudyError::UnknownModelLabel(s.to_owned()))
    }
}

/// A reference/test pair presented in one DCR trial.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StimulusPair {
    pub id: String,
    pub reference_path: String,
    pub test_path: String,
    pub model_label: ModelLabel,
    pub model_type: ModelType,
}

impl StimulusPair {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(StudyError::InvalidConfig("empty stimulus id".into()));
        }
        if self.model_label.model_type() != self.model_type {
            return Err(StudyError::InvalidConfig(format!(
                "{}: model type {} does not match label {}",
                self.id, self.model_type, self.model_label
            )));
        }
        if self.model_type == ModelType::Gold && self.reference_path != self.test_path {
            return Err(StudyError::InvalidConfig(format!("{}: gold pair must compare a reference with itself", self.id)));
        }
        Ok(())
    }

    pub fn gold(id: impl Into<String>, reference_path: impl Into<String>) -> Self {
        let path = reference_path.into();
        Self {
            id: id.into(),
            reference_path: path.clone(),
            test_path: path,
            model_label: ModelLabel::Gold,
            model_type: ModelType::Gold,
        }
    }
}

fn default_group_count() -> usize {
    3
}
fn default_gold_per_group() -> usize {
    5
}
fn default_ratings_target() -> usize {
    12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub stimuli: Vec<StimulusPair>,
    #[serde(default = "default_group_count")]
    pub group_count: usize,
    #[serde(default = "default_gold_per_group")]
    pub gold_per_group: usize,
    /// Desired ratings per stimulus; informational, not enforced.
    #[serde(default = "default_ratings_target")]
    pub ratings_per_stimulus_target: usize,
    #[serde(default)]
    pub rng_seed: u64,
}

impl StudyConfig {
    pub fn new(stimuli: Vec<StimulusPair>, rng_seed: u64) -> Self {
        Self {
            stimuli,
            group_count: default_group_count(),
            gold_per_group: default_gold_per_group(),
            ratings_per_stimulus_target: default_ratings_target(),
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stimuli.is_empty() {
            return Err(StudyError::NoStimuli);
        }
        if self.group_count == 0 {
            return Err(StudyError::InvalidConfig("group_count must be at least 1".into()));
        }
        let mut seen = BTreeSet::new();
        for s in &self.stimuli {
            s.validate()?;
            if s.model_type == ModelType::Gold {
                return Err(StudyError::InvalidConfig(format!(
                    "{}: gold pairs are generated from the references, not listed",
                    s.id
                )));
            }
            if !seen.insert(s.id.as_str()) {
                return Err(StudyError::DuplicateStimulus(s.id.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub id: usize,
    /// Test stimulus ids, in shuffled assignment order.
    pub stimuli: Vec<String>,
    pub gold: Vec<StimulusPair>,
}

impl Group {
    pub fn session_len(&self) -> usize {
        self.stimuli.len() + self.gold.len()
    }

    /// Every trial id of the group (test and gold) in a seeded random order.
    pub fn presentation_order(&self, seed: u64) -> Vec<String> {
        let mut ids: Vec<String> = self.stimuli.iter().cloned().chain(self.gold.iter().map(|g| g.id.clone())).collect();
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        ids
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAssignment {
    pub groups: Vec<Group>,
}

impl GroupAssignment {
    pub fn gold_ids(&self) -> BTreeSet<String> {
        self.groups.iter().flat_map(|g| g.gold.iter().map(|p| p.id.clone())).collect()
    }
}

/// Shuffles the stimuli into `group_count` groups whose sizes differ by at most
/// one (the larger groups come last) and appends `gold_per_group`
/// reference/reference pairs to every group. Gold references are drawn without
/// replacement across all groups.
pub fn build_groups(config: &StudyConfig) -> Result<GroupAssignment> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);

    let mut ids: Vec<String> = config.stimuli.iter().map(|s| s.id.clone()).collect();
    ids.sort();
    ids.shuffle(&mut rng);

    let references: BTreeSet<&str> = config.stimuli.iter().map(|s| s.reference_path.as_str()).collect();
    let mut references: Vec<&str> = references.into_iter().collect();
    let needed = config.group_count * config.gold_per_group;
    if references.len() < needed {
        return Err(StudyError::NotEnoughGoldCandidates { needed, available: references.len() });
    }
    references.shuffle(&mut rng);

    let g = config.group_count;
    let base = ids.len() / g;
    let extra = ids.len() % g;
    let mut remaining = ids.into_iter();
    let groups = (0..g)
        .map(|k| {
            let size = base + usize::from(k >= g - extra);
            let stimuli: Vec<String> = remaining.by_ref().take(size).collect();
            let gold = references[k * config.gold_per_group..(k + 1) * config.gold_per_group]
                .iter()
                .enumerate()
                .map(|(j, r)| StimulusPair::gold(format!("gold-{k}-{j}"), *r))
                .collect();
            Group { id: k, stimuli, gold }
        })
        .collect();
    Ok(GroupAssignment { groups })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Screening {
    Retained,
    Excluded,
}

/// Excludes a participant who rated gold pairs below 4 more than three times.
pub fn screen_participant(gold_ratings: &[u8]) -> Screening {
    if gold_ratings.iter().filter(|&&r| r < GOLD_PASS_RATING).count() > MAX_FAILED_GOLD {
        Screening::Excluded
    } else {
        Screening::Retained
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub participant_id: String,
    pub stimulus_id: String,
    pub rating: u8,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
    pub group_id: usize,
}

impl RatingRecord {
    pub fn validate(&self) -> Result<()> {
        if (1..=5).contains(&self.rating) {
            Ok(())
        } else {
            Err(StudyError::RatingOutOfRange(self.rating))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantReport {
    pub participant_id: String,
    pub decision: Screening,
    pub gold_ratings: usize,
    pub gold_below_threshold: usize,
    pub rating_count: usize,
    /// Population variance of all of the participant's ratings.
    pub rating_variance: f64,
}

/// Applies [`screen_participant`] to every participant, using only their gold
/// ratings for the decision. Reports are keyed and sorted by participant id.
pub fn screen_participants(records: &[RatingRecord], gold_ids: &BTreeSet<String>) -> Vec<ParticipantReport> {
    let mut by_participant: BTreeMap<&str, (Vec<u8>, Vec<u8>)> = BTreeMap::new();
    for r in records {
        let entry = by_participant.entry(&r.participant_id).or_default();
        if gold_ids.contains(&r.stimulus_id) {
            entry.0.push(r.rating);
        }
        entry.1.push(r.rating);
    }
    by_participant
        .into_iter()
        .map(|(pid, (gold, all))| {
            let n = all.len() as f64;
            let mean = all.iter().map(|&r| f64::from(r)).sum::<f64>() / n;
            let var = all.iter().map(|&r| (f64::from(r) - mean).powi(2)).sum::<f64>() / n;
            log::debug!("participant {pid}: {} ratings, variance {var:.3}", all.len());
            ParticipantReport {
                participant_id: pid.to_owned(),
                decision: screen_participant(&gold),
                gold_ratings: gold.len(),
                gold_below_threshold: gold.iter().filter(|&&r| r < GOLD_PASS_RATING).count(),
                rating_count: all.len(),
                rating_variance: var,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmosSummary {
    pub stimulus_id: String,
    pub dmos: f64,
    pub n: usize,
    pub median: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Per-stimulus mean rating over retained participants, for every id in
/// `stimuli`. Ratings of other stimuli (gold pairs included) are ignored.
/// Output is sorted by stimulus id.
pub fn compute_dmos(
    records: &[RatingRecord],
    retained: &BTreeSet<String>,
    stimuli: &[String],
    bootstrap: &BootstrapConfig,
) -> Result<Vec<DmosSummary>> {
    let mut ratings: BTreeMap<&str, Vec<u8>> = stimuli.iter().map(|s| (s.as_str(), Vec::new())).collect();
    for r in records {
        if !retained.contains(&r.participant_id) {
            continue;
        }
        if let Some(v) = ratings.get_mut(r.stimulus_id.as_str()) {
            r.validate()?;
            v.push(r.rating);
        }
    }
    ratings
        .into_iter()
        .enumerate()
        .map(|(i, (id, mut values))| {
            if values.is_empty() {
                return Err(StudyError::UnratedStimulus(id.to_owned()));
            }
            values.sort_unstable();
            let n = values.len();
            let sum: u64 = values.iter().map(|&v| u64::from(v)).sum();
            let as_f64: Vec<f64> = values.iter().map(|&v| f64::from(v)).collect();
            let (ci_low, ci_high) = bootstrap_median_ci(
                &as_f64,
                bootstrap.resamples,
                bootstrap.confidence,
                bootstrap.seed.wrapping_add(i as u64),
            )?;
            Ok(DmosSummary {
                stimulus_id: id.to_owned(),
                dmos: sum as f64 / n as f64,
                n,
                median: median(&as_f64),
                ci_low,
                ci_high,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stimuli(n: usize, songs: usize) -> Vec<StimulusPair> {
        let labels = [
            ModelLabel::HtDemucs,
            ModelLabel::MelRoFoLarge,
            ModelLabel::MelRoFoSmall,
            ModelLabel::MelRoFoSmallBigVgan,
            ModelLabel::Sgmsvs,
        ];
        (0..n)
            .map(|i| {
                let label = labels[i % labels.len()];
                StimulusPair {
                    id: format!("s{i:03}"),
                    reference_path: format!("ref/song{:02}.wav", i % songs),
                    test_path: format!("est/{i:03}.wav"),
                    model_label: label,
                    model_type: label.model_type(),
                }
            })
            .collect()
    }

    #[test]
    fn paper_group_sizes() {
        let a = build_groups(&StudyConfig::new(stimuli(250, 50), 7)).unwrap();
        let sizes: Vec<usize> = a.groups.iter().map(|g| g.stimuli.len()).collect();
        assert_eq!(sizes, vec![83, 83, 84]);
        let sessions: Vec<usize> = a.groups.iter().map(Group::session_len).collect();
        assert_eq!(sessions, vec![88, 88, 89]);
        let gold_refs: BTreeSet<&str> =
            a.groups.iter().flat_map(|g| g.gold.iter().map(|p| p.reference_path.as_str())).collect();
        assert_eq!(gold_refs.len(), 15);
    }

    #[test]
    fn single_group_and_determinism() {
        let mut cfg = StudyConfig::new(stimuli(10, 10), 1);
        cfg.group_count = 1;
        let a = build_groups(&cfg).unwrap();
        assert_eq!(a.groups[0].stimuli.len(), 10);
        assert_eq!(build_groups(&cfg).unwrap(), a);
        cfg.rng_seed = 2;
        assert_ne!(build_groups(&cfg).unwrap(), a);
    }

    #[test]
    fn gold_shortage() {
        let cfg = StudyConfig::new(stimuli(30, 4), 0);
        assert_eq!(build_groups(&cfg), Err(StudyError::NotEnoughGoldCandidates { needed: 15, available: 4 }));
    }

    #[test]
    fn config_validation() {
        assert_eq!(build_groups(&StudyConfig::new(vec![], 0)), Err(StudyError::NoStimuli));
        let mut s = stimuli(20, 20);
        s[1].id = s[0].id.clone();
        assert!(matches!(build_groups(&StudyConfig::new(s, 0)), Err(StudyError::DuplicateStimulus(_))));
        let mut s = stimuli(20, 20);
        s[0].model_type = ModelType::Generative;
        assert!(matches!(build_groups(&StudyConfig::new(s, 0)), Err(StudyError::InvalidConfig(_))));
    }

    #[test]
    fn screening_boundary() {
        assert_eq!(screen_participant(&[5, 5, 5, 5, 5]), Screening::Retained);
        assert_eq!(screen_participant(&[3, 3, 3, 5, 5]), Screening::Retained);
        assert_eq!(screen_participant(&[3, 3, 3, 3, 5]), Screening::Excluded);
    }

    fn rec(p: &str, s: &str, rating: u8) -> RatingRecord {
        RatingRecord { participant_id: p.into(), stimulus_id: s.into(), rating, timestamp: 0, group_id: 0 }
    }

    #[test]
    fn dmos_means() {
        let retained: BTreeSet<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
        let records = vec![rec("a", "x", 4), rec("b", "x", 5), rec("a", "y", 5), rec("c", "y", 1), rec("a", "gold-0-0", 1)];
        let out = compute_dmos(&records, &retained, &["x".into(), "y".into()], &BootstrapConfig::default()).unwrap();
        assert_eq!(out[0].stimulus_id, "x");
        assert_eq!(out[0].dmos, 4.5);
        assert_eq!(out[1].dmos, 5.0);
        assert_eq!((out[1].ci_low, out[1].median, out[1].ci_high), (5.0, 5.0, 5.0));
        assert_eq!(
            compute_dmos(&records, &retained, &["z".into()], &BootstrapConfig::default()),
            Err(StudyError::UnratedStimulus("z".into()))
        );
    }

    #[test]
    fn screening_ignores_test_ratings() {
        let gold: BTreeSet<String> = ["g1", "g2", "g3", "g4"].iter().map(|s| s.to_string()).collect();
        let mut records: Vec<RatingRecord> = gold.iter().map(|g| rec("p", g, 5)).collect();
        records.extend((0..20).map(|i| rec("p", &format!("t{i}"), 1)));
        let report = screen_participants(&records, &gold);
        assert_eq!(report[0].decision, Screening::Retained);
        assert_eq!(report[0].gold_ratings, 4);
        assert_eq!(report[0].rating_count, 24);
    }

    #[test]
    fn label_parsing() {
        assert_eq!("MelRoFo(S) + BigVGAN".parse::<ModelLabel>().unwrap(), ModelLabel::MelRoFoSmallBigVgan);
        assert_eq!("sgmsvs".parse::<ModelLabel>().unwrap(), ModelLabel::Sgmsvs);
        assert!("demucs".parse::<ModelLabel>().is_err());
        assert_eq!(serde_json::to_string(&ModelLabel::MelRoFoLarge).unwrap(), "\"MelRoFo(L)\"");
    }
}
