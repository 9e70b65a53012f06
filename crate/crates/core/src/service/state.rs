//! In-memory study state rebuilt from the journal.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::journal::Event;
use crate::study::{
    compute_dmos, screen_participants, BootstrapConfig, DmosSummary, ExportRow, GroupAssignment, ParticipantReport,
    RatingRecord, Screening, StimulusPair, StudyConfig, StudyError,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Session {
    pub session_id: String,
    pub study_id: String,
    pub group_id: usize,
    pub participant_id: String,
    pub trial_order: Vec<String>,
    pub cursor: usize,
}

impl Session {
    pub fn is_complete(&self) -> bool {
        self.cursor == self.trial_order.len()
    }
}

#[derive(Debug, Clone)]
pub struct StudyState {
    pub study_id: String,
    pub config: StudyConfig,
    pub groups: GroupAssignment,
    pub audio: BTreeMap<String, String>,
    /// Test and gold pairs by id.
    pub pairs: BTreeMap<String, StimulusPair>,
    pub sessions: BTreeMap<String, Session>,
    /// Accepted ratings in acceptance order.
    pub ratings: Vec<RatingRecord>,
}

impl StudyState {
    pub fn new(study_id: String, config: StudyConfig, groups: GroupAssignment, audio: BTreeMap<String, String>) -> Self {
        let pairs = config
            .stimuli
            .iter()
            .cloned()
            .chain(groups.groups.iter().flat_map(|g| g.gold.iter().cloned()))
            .map(|p| (p.id.clone(), p))
            .collect();
        Self { study_id, config, groups, audio, pairs, sessions: BTreeMap::new(), ratings: Vec::new() }
    }

    /// Group for a new session of `participant_id`: the group with the fewest
    /// sessions among those the participant has not joined yet, ties broken by a
    /// draw seeded from the study seed and the session count.
    pub fn choose_group(&self, participant_id: &str) -> Option<usize> {
        let mut counts = vec![0usize; self.groups.groups.len()];
        let mut joined = BTreeSet::new();
        for s in self.sessions.values() {
            counts[s.group_id] += 1;
            if s.participant_id == participant_id {
                joined.insert(s.group_id);
            }
        }
        let min = (0..counts.len()).filter(|g| !joined.contains(g)).map(|g| counts[g]).min()?;
        let tied: Vec<usize> = (0..counts.len()).filter(|g| !joined.contains(g) && counts[*g] == min).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.session_seed());
        Some(tied[rng.random_range(0..tied.len())])
    }

    /// Seed for whatever the next session needs drawn.
    pub fn session_seed(&self) -> u64 {
        self.config.rng_seed ^ (self.sessions.len() as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }

    pub fn trial_order(&self, group_id: usize) -> Vec<String> {
        self.groups.groups[group_id].presentation_order(self.session_seed().rotate_left(17))
    }

    /// Applies a session or rating event. Study creation is handled by [`StudyState::new`].
    pub fn apply(&mut self, event: &Event) -> Result<(), String> {
        match event {
            Event::StudyCreated { .. } => Err("study already created".into()),
            Event::SessionCreated { session_id, participant_id, group_id, trial_order, .. } => {
                if *group_id >= self.groups.groups.len() {
                    return Err(format!("session {session_id}: unknown group {group_id}"));
                }
                self.sessions.insert(
                    session_id.clone(),
                    Session {
                        session_id: session_id.clone(),
                        study_id: self.study_id.clone(),
                        group_id: *group_id,
                        participant_id: participant_id.clone(),
                        trial_order: trial_order.clone(),
                        cursor: 0,
                    },
                );
                Ok(())
            }
            Event::RatingAccepted { session_id, trial_index, stimulus_id, rating, timestamp } => {
                let session =
                    self.sessions.get_mut(session_id).ok_or_else(|| format!("rating for unknown session {session_id}"))?;
                if *trial_index != session.cursor || session.trial_order.get(*trial_index) != Some(stimulus_id) {
                    return Err(format!("session {session_id}: rating for trial {trial_index} out of sequence"));
                }
                session.cursor += 1;
                self.ratings.push(RatingRecord {
                    participant_id: session.participant_id.clone(),
                    stimulus_id: stimulus_id.clone(),
                    rating: *rating,
                    timestamp: *timestamp,
                    group_id: session.group_id,
                });
                Ok(())
            }
        }
    }

    pub fn screening(&self) -> Vec<ParticipantReport> {
        screen_participants(&self.ratings, &self.groups.gold_ids())
    }

    pub fn export_rows(&self) -> Vec<ExportRow> {
        let retained: BTreeMap<String, bool> =
            self.screening().into_iter().map(|r| (r.participant_id, r.decision == Screening::Retained)).collect();
        self.ratings
            .iter()
            .map(|r| {
                let pair = &self.pairs[&r.stimulus_id];
                ExportRow {
                    stimulus_id: r.stimulus_id.clone(),
                    model_label: pair.model_label,
                    model_type: pair.model_type,
                    participant_id: r.participant_id.clone(),
                    rating: r.rating,
                    timestamp: r.timestamp,
                    group_id: r.group_id,
                    retained: retained.get(&r.participant_id).copied(),
                }
            })
            .collect()
    }

    /// DMOS over retained participants. With `partial`, stimuli without any
    /// retained rating are skipped instead of failing.
    pub fn dmos(&self, partial: bool) -> Result<Vec<DmosSummary>, StudyError> {
        let retained: BTreeSet<String> = self
            .screening()
            .into_iter()
            .filter(|r| r.decision == Screening::Retained)
            .map(|r| r.participant_id)
            .collect();
        let mut stimuli: Vec<String> = self.config.stimuli.iter().map(|s| s.id.clone()).collect();
        if partial {
            let rated: BTreeSet<&str> = self
                .ratings
                .iter()
                .filter(|r| retained.contains(&r.participant_id))
                .map(|r| r.stimulus_id.as_str())
                .collect();
            stimuli.retain(|s| rated.contains(s.as_str()));
        }
        let bootstrap = BootstrapConfig { seed: self.config.rng_seed, ..BootstrapConfig::default() };
        compute_dmos(&self.ratings, &retained, &stimuli, &bootstrap)
    }
}
