//! Possession/pass data model: ingestion types, outcome mapping, and the
//! duration filter that yields the default analysis set.
//!
//! A dataset is a list of possessions, each carrying its ordered pass
//! events, plus per-team rosters. Ingestion validates the chain property
//! (every pass starts where the previous one ended), strictly increasing
//! pass times, and roster membership; offending possessions are rejected
//! and accounted for instead of silently dropped.

mod outcome;
mod parse;

pub use outcome::OutcomeMapping;
pub use parse::{parse_dataset, parse_roster, write_events_csv, write_roster_csv};
pub(crate) use parse::round_ms;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tactical position labels used by the roster file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Position {
    PG,
    SG,
    SF,
    PF,
    C,
}

impl Position {
    /// All positions in their conventional order.
    pub const ALL: [Position; 5] = [
        Position::PG,
        Position::SG,
        Position::SF,
        Position::PF,
        Position::C,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Position::PG => "PG",
            Position::SG => "SG",
            Position::SF => "SF",
            Position::PF => "PF",
            Position::C => "C",
        }
    }

    pub fn parse(s: &str) -> Result<Position> {
        match s {
            "PG" => Ok(Position::PG),
            "SG" => Ok(Position::SG),
            "SF" => Ok(Position::SF),
            "PF" => Ok(Position::PF),
            "C" => Ok(Position::C),
            other => Err(Error::Roster(format!("unknown position {other:?}"))),
        }
    }

    /// Index into [`Position::ALL`].
    pub fn index(self) -> usize {
        match self {
            Position::PG => 0,
            Position::SG => 1,
            Position::SF => 2,
            Position::PF => 3,
            Position::C => 4,
        }
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One rostered player.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlayerRef {
    pub player_id: String,
    pub team_id: String,
    pub position: Position,
}

/// A completed pass. `t` is the offset in seconds from possession start,
/// stored at millisecond precision.
#[derive(Debug, Clone, PartialEq)]
pub struct PassEvent {
    pub t: f64,
    pub passer: String,
    pub receiver: String,
}

/// Court half in which the possession started.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StartHalf {
    Defensive,
    Offensive,
}

/// Whether the possession started with the ball in play or out of bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StartBall {
    Inside,
    Offside,
}

/// One team possession with its ordered pass chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Possession {
    pub possession_id: String,
    pub game_id: String,
    pub team_id: String,
    /// Total possession length in seconds.
    pub duration: f64,
    /// Shot clock value when the possession started, on the 0.5s grid.
    pub shot_clock_start: f64,
    pub start_half: StartHalf,
    pub start_ball: StartBall,
    /// Player holding (or inbounding) the ball at t = 0.
    pub initial_carrier: String,
    /// Raw outcome code as annotated; resolved via [`OutcomeMapping`].
    pub outcome_raw: String,
    pub passes: Vec<PassEvent>,
}

impl Possession {
    /// Ball path as a node sequence: the initial carrier followed by the
    /// receiver of each pass in order. Players may repeat.
    pub fn node_sequence(&self) -> Vec<&str> {
        let mut seq = Vec::with_capacity(self.passes.len() + 1);
        seq.push(self.initial_carrier.as_str());
        seq.extend(self.passes.iter().map(|p| p.receiver.as_str()));
        seq
    }
}

/// Resolved possession outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Outcome {
    Positive,
    Negative,
    Neutral,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Positive => "positive",
            Outcome::Negative => "negative",
            Outcome::Neutral => "neutral",
        }
    }
}

/// Labels for the two defensive-half possession classes that make up the
/// default analysis set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum PossessionType {
    BallIn,
    BallOut,
}

impl PossessionType {
    pub const BOTH: [PossessionType; 2] = [PossessionType::BallIn, PossessionType::BallOut];

    pub fn as_str(self) -> &'static str {
        match self {
            PossessionType::BallIn => "ball_in",
            PossessionType::BallOut => "ball_out",
        }
    }
}

impl fmt::Display for PossessionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A row-level problem found during ingestion. The possession named here
/// is rejected from the parsed dataset.
#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub possession_id: String,
    pub line: u64,
    pub message: String,
}

/// Ingestion bookkeeping: sources, hashes, and loss accounting. The counts
/// satisfy `possessions_in == possessions (accepted) + rejected_possessions`.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub events_path: String,
    pub roster_path: String,
    pub events_sha256: String,
    pub roster_sha256: String,
    /// Distinct possession ids seen in the events file.
    pub possessions_in: usize,
    /// PASS rows seen in the events file.
    pub passes_in: usize,
    pub rejected_possessions: usize,
    pub violations: Vec<Violation>,
    /// Non-fatal notices (e.g. shot clock values snapped by more than 0.25s).
    pub warnings: Vec<Violation>,
}

/// A parsed and validated dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub possessions: Vec<Possession>,
    /// Players per team, in roster file order.
    pub rosters: BTreeMap<String, Vec<PlayerRef>>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn position_index(&self) -> PositionIndex {
        PositionIndex::from_rosters(&self.rosters)
    }
}

/// Lookup from (team, player) to position, plus the reverse direction.
#[derive(Debug, Clone, Default)]
pub struct PositionIndex {
    by_player: BTreeMap<(String, String), Position>,
}

impl PositionIndex {
    pub fn from_rosters(rosters: &BTreeMap<String, Vec<PlayerRef>>) -> Self {
        let mut by_player = BTreeMap::new();
        for (team, players) in rosters {
            for p in players {
                by_player.insert((team.clone(), p.player_id.clone()), p.position);
            }
        }
        PositionIndex { by_player }
    }

    pub fn position(&self, team_id: &str, player_id: &str) -> Option<Position> {
        self.by_player
            .get(&(team_id.to_string(), player_id.to_string()))
            .copied()
    }

    /// Player ids of the given position on one team, in index order.
    pub fn players_of(&self, team_id: &str, position: Position) -> Vec<&str> {
        self.by_player
            .iter()
            .filter(|((t, _), p)| t == team_id && **p == position)
            .map(|((_, player), _)| player.as_str())
            .collect()
    }

    /// Every (team, player) pair in the index, sorted.
    pub fn players(&self) -> impl Iterator<Item = (&str, &str, Position)> {
        self.by_player
            .iter()
            .map(|((t, p), pos)| (t.as_str(), p.as_str(), *pos))
    }
}

/// One possession retained by the filter, labeled with its class.
#[derive(Debug, Clone)]
pub struct AnalysisEntry {
    pub possession: Possession,
    pub possession_type: PossessionType,
}

/// Counts for the four (start half x start ball) classes of the retained set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CategoryCounts {
    pub defensive_out: usize,
    pub defensive_in: usize,
    pub offensive_out: usize,
    pub offensive_in: usize,
}

impl CategoryCounts {
    pub fn total(&self) -> usize {
        self.defensive_out + self.defensive_in + self.offensive_out + self.offensive_in
    }
}

/// Exclusion accounting for [`filter_and_categorize`].
#[derive(Debug, Clone, Serialize)]
pub struct FilterLog {
    pub input: usize,
    pub min_duration_s: f64,
    pub below_min_duration: usize,
    /// Possessions meeting the duration threshold, by category.
    pub categories: CategoryCounts,
    pub retained: usize,
    /// Passes carried by the retained possessions.
    pub passes_retained: usize,
    /// Offensive-half possessions excluded from the default analysis set.
    pub offensive_excluded: usize,
    /// Size of the default (defensive-half) analysis set.
    pub analysis: usize,
}

/// The default analysis set: defensive-half possessions at least one
/// window long, split into ball-in and ball-out classes.
#[derive(Debug, Clone)]
pub struct AnalysisSet {
    pub entries: Vec<AnalysisEntry>,
    pub log: FilterLog,
}

impl AnalysisSet {
    pub fn of_type(&self, t: PossessionType) -> impl Iterator<Item = &AnalysisEntry> {
        self.entries.iter().filter(move |e| e.possession_type == t)
    }
}

/// Drops possessions shorter than `min_duration`, counts the four start
/// categories among the remainder, and keeps the defensive-half ones as
/// the analysis set. Applying the filter to its own output is a no-op.
pub fn filter_and_categorize(dataset: &Dataset, min_duration: f64) -> AnalysisSet {
    let mut log = FilterLog {
        input: dataset.possessions.len(),
        min_duration_s: min_duration,
        below_min_duration: 0,
        categories: CategoryCounts::default(),
        retained: 0,
        passes_retained: 0,
        offensive_excluded: 0,
        analysis: 0,
    };
    let mut entries = Vec::new();
    for p in &dataset.possessions {
        if p.duration < min_duration - 1e-9 {
            log.below_min_duration += 1;
            continue;
        }
        log.retained += 1;
        log.passes_retained += p.passes.len();
        match (p.start_half, p.start_ball) {
            (StartHalf::Defensive, StartBall::Offside) => {
                log.categories.defensive_out += 1;
                entries.push(AnalysisEntry {
                    possession: p.clone(),
                    possession_type: PossessionType::BallOut,
                });
            }
            (StartHalf::Defensive, StartBall::Inside) => {
                log.categories.defensive_in += 1;
                entries.push(AnalysisEntry {
                    possession: p.clone(),
                    possession_type: PossessionType::BallIn,
                });
            }
            (StartHalf::Offensive, StartBall::Offside) => {
                log.categories.offensive_out += 1;
                log.offensive_excluded += 1;
            }
            (StartHalf::Offensive, StartBall::Inside) => {
                log.categories.offensive_in += 1;
                log.offensive_excluded += 1;
            }
        }
    }
    log.analysis = entries.len();
    AnalysisSet { entries, log }
}
