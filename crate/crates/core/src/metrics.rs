//! Flow involvement metrics.
//!
//! Two unit levels share one pair of definitions. At play level the unit
//! is a possession: a subject is involved when it appears anywhere on the
//! ball path, and in between when it receives one pass and makes the
//! next. At graphlet level the unit is a single window and both events
//! must fall inside it. Flow centrality (FC) is the fraction of units
//! with involvement, flow betweenness (FB) the fraction with betweenness,
//! so FB <= FC holds by construction.
//!
//! Position subjects use "any rostered player of that position" semantics
//! since a lineup may field the same position more than once.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use serde::Serialize;

use crate::data::{
    AnalysisSet, Outcome, OutcomeMapping, Position, PositionIndex, Possession, PossessionType,
};
use crate::error::{Error, Result};
use crate::stats::{
    chi2_independence_corrected, odds_ratio, wilson_interval, ContingencyTable, TestResult,
};
use crate::window::{build_windows, ClockKey, Snapshot, TemporalGraph, WindowConfig};

/// Whose involvement is being measured.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Subject {
    Player { team_id: String, player_id: String },
    Position(Position),
}

impl Subject {
    pub fn player(team_id: impl Into<String>, player_id: impl Into<String>) -> Self {
        Subject::Player { team_id: team_id.into(), player_id: player_id.into() }
    }

    pub fn position(position: Position) -> Self {
        Subject::Position(position)
    }

    pub fn kind_str(&self) -> &'static str {
        match self {
            Subject::Player { .. } => "player",
            Subject::Position(_) => "position",
        }
    }

    /// Stable output label: `team:player` or the position abbreviation.
    pub fn label(&self) -> String {
        match self {
            Subject::Player { team_id, player_id } => format!("{team_id}:{player_id}"),
            Subject::Position(p) => p.as_str().to_string(),
        }
    }
}

/// The two flow metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MetricKind {
    Fc,
    Fb,
}

impl MetricKind {
    pub const BOTH: [MetricKind; 2] = [MetricKind::Fc, MetricKind::Fb];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Fc => "FC",
            MetricKind::Fb => "FB",
        }
    }
}

/// Unit of observation for a metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum UnitLevel {
    Play,
    Graphlet,
}

impl UnitLevel {
    pub const BOTH: [UnitLevel; 2] = [UnitLevel::Play, UnitLevel::Graphlet];

    pub fn as_str(self) -> &'static str {
        match self {
            UnitLevel::Play => "play",
            UnitLevel::Graphlet => "graphlet",
        }
    }
}

fn node_matches(subject: &Subject, team_id: &str, node: &str, index: &PositionIndex) -> bool {
    match subject {
        Subject::Player { team_id: t, player_id } => t == team_id && player_id == node,
        Subject::Position(pos) => index.position(team_id, node) == Some(*pos),
    }
}

/// Subject appears on the possession's ball path (carrier or either end
/// of any pass).
pub fn involved_in_play(subject: &Subject, possession: &Possession, index: &PositionIndex) -> bool {
    possession
        .node_sequence()
        .iter()
        .any(|n| node_matches(subject, &possession.team_id, n, index))
}

/// Subject receives one pass and makes the next within the possession.
pub fn between_in_play(subject: &Subject, possession: &Possession, index: &PositionIndex) -> bool {
    possession.passes.windows(2).any(|w| {
        node_matches(subject, &possession.team_id, &w[0].receiver, index)
            && node_matches(subject, &possession.team_id, &w[1].passer, index)
    })
}

/// Subject appears in the window's node set (the start carrier counts
/// even when no pass touches them).
pub fn involved_in_window(subject: &Subject, snapshot: &Snapshot, index: &PositionIndex) -> bool {
    snapshot
        .nodes()
        .iter()
        .any(|n| node_matches(subject, &snapshot.team_id, n, index))
}

/// Subject receives one pass and makes the next, both inside the window.
/// Cross-window chains do not count.
pub fn between_in_window(subject: &Subject, snapshot: &Snapshot, index: &PositionIndex) -> bool {
    snapshot.passes.windows(2).any(|w| {
        node_matches(subject, &snapshot.team_id, &w[0].receiver, index)
            && node_matches(subject, &snapshot.team_id, &w[1].passer, index)
    })
}

fn fraction<T>(items: &[T], what: &str, pred: impl Fn(&T) -> bool) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::Undefined(format!("no {what}; the fraction is undefined")));
    }
    Ok(items.iter().filter(|x| pred(x)).count() as f64 / items.len() as f64)
}

/// Fraction of possessions in which the subject is involved.
pub fn flow_centrality_play(
    subject: &Subject,
    possessions: &[&Possession],
    index: &PositionIndex,
) -> Result<f64> {
    fraction(possessions, "possessions", |p| involved_in_play(subject, p, index))
}

/// Fraction of possessions in which the subject is in between.
pub fn flow_betweenness_play(
    subject: &Subject,
    possessions: &[&Possession],
    index: &PositionIndex,
) -> Result<f64> {
    fraction(possessions, "possessions", |p| between_in_play(subject, p, index))
}

/// Fraction of the given windows satisfying the metric, pooled without
/// regard to which possession each window came from.
pub fn adapted_metric(
    subject: &Subject,
    snapshots: &[Snapshot],
    kind: MetricKind,
    index: &PositionIndex,
) -> Result<f64> {
    fraction(snapshots, "windows", |s| match kind {
        MetricKind::Fc => involved_in_window(subject, s, index),
        MetricKind::Fb => between_in_window(subject, s, index),
    })
}

/// Per-possession window fraction, averaged over possessions. Unlike the
/// pooled form this never exceeds the play-level value: each possession
/// contributes at most its play-level indicator.
pub fn adapted_metric_possession_mean(
    subject: &Subject,
    graphs: &[TemporalGraph],
    kind: MetricKind,
    index: &PositionIndex,
) -> Result<f64> {
    if graphs.is_empty() {
        return Err(Error::Undefined(
            "no possessions; the adapted mean is undefined".to_string(),
        ));
    }
    let mut sum = 0.0;
    for g in graphs {
        sum += adapted_metric(subject, &g.snapshots, kind, index).map_err(|_| {
            Error::InvalidInput(format!("possession {} has no windows", g.possession_id))
        })?;
    }
    Ok(sum / graphs.len() as f64)
}

/// FB over FC at matching level and unit set. `None` when FC is 0: a
/// never-involved subject has no defined ratio, which is not the same
/// as a ratio of 0.
pub fn fb_fc_ratio(fb: f64, fc: f64) -> Option<f64> {
    if fc == 0.0 {
        None
    } else {
        Some(fb / fc)
    }
}

/// A proportion with its Wilson 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProportionPoint {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: u64,
}

fn proportion_point(hits: u64, n: u64) -> ProportionPoint {
    let (ci_low, ci_high) = wilson_interval(hits, n);
    ProportionPoint { mean: hits as f64 / n as f64, ci_low, ci_high, n }
}

/// One shot-clock value of a metric series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesPoint {
    pub clock: ClockKey,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: u64,
}

/// Window-level metric against the shot clock, one point per clock value
/// that has at least one window, ordered by descending clock.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    pub subject: Subject,
    pub metric: MetricKind,
    pub points: Vec<SeriesPoint>,
}

pub fn metric_series(
    subject: &Subject,
    snapshots: &[Snapshot],
    kind: MetricKind,
    index: &PositionIndex,
) -> MetricSeries {
    let mut by_clock: BTreeMap<ClockKey, (u64, u64)> = BTreeMap::new();
    for s in snapshots {
        let hit = match kind {
            MetricKind::Fc => involved_in_window(subject, s, index),
            MetricKind::Fb => between_in_window(subject, s, index),
        };
        let cell = by_clock.entry(s.clock_key()).or_insert((0, 0));
        cell.0 += hit as u64;
        cell.1 += 1;
    }
    let points = by_clock
        .iter()
        .rev()
        .map(|(clock, &(hits, n))| {
            let p = proportion_point(hits, n);
            SeriesPoint { clock: *clock, mean: p.mean, ci_low: p.ci_low, ci_high: p.ci_high, n }
        })
        .collect();
    MetricSeries { subject: subject.clone(), metric: kind, points }
}

/// Play-level and pooled window-level values of both metrics over one
/// game's units, each with its Wilson interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GameAggregate {
    pub play_fc: ProportionPoint,
    pub play_fb: ProportionPoint,
    pub adapted_fc: ProportionPoint,
    pub adapted_fb: ProportionPoint,
}

pub fn game_aggregate(
    subject: &Subject,
    possessions: &[&Possession],
    snapshots: &[Snapshot],
    index: &PositionIndex,
) -> Result<GameAggregate> {
    if possessions.is_empty() || snapshots.is_empty() {
        return Err(Error::Undefined(
            "game aggregate needs at least one possession and one window".to_string(),
        ));
    }
    let count = |hits: usize, n: usize| proportion_point(hits as u64, n as u64);
    let play_fc = possessions.iter().filter(|p| involved_in_play(subject, p, index)).count();
    let play_fb = possessions.iter().filter(|p| between_in_play(subject, p, index)).count();
    let win_fc = snapshots.iter().filter(|s| involved_in_window(subject, s, index)).count();
    let win_fb = snapshots.iter().filter(|s| between_in_window(subject, s, index)).count();
    Ok(GameAggregate {
        play_fc: count(play_fc, possessions.len()),
        play_fb: count(play_fb, possessions.len()),
        adapted_fc: count(win_fc, snapshots.len()),
        adapted_fb: count(win_fb, snapshots.len()),
    })
}

/// A retained possession with its classified outcome and built windows:
/// the unit record every downstream metric consumes.
#[derive(Debug, Clone)]
pub struct ScoredPossession {
    pub possession: Possession,
    pub possession_type: PossessionType,
    pub outcome: Outcome,
    pub windows: Vec<Snapshot>,
}

/// Classifies outcomes and builds windows for every entry of an analysis
/// set. Entry order is preserved.
pub fn score_analysis_set(
    set: &AnalysisSet,
    mapping: &OutcomeMapping,
    config: &WindowConfig,
) -> Result<Vec<ScoredPossession>> {
    set.entries
        .iter()
        .map(|e| {
            let outcome = mapping.classify_possession(&e.possession)?;
            let graph = build_windows(&e.possession, config)?;
            Ok(ScoredPossession {
                possession: e.possession.clone(),
                possession_type: e.possession_type,
                outcome,
                windows: graph.snapshots,
            })
        })
        .collect()
}

/// One unit-level observation of one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct InvolvementRecord {
    pub unit: UnitLevel,
    pub subject: Subject,
    pub possession_id: String,
    /// Window index for graphlet units.
    pub window: Option<usize>,
    pub involved: bool,
    /// Implies `involved`.
    pub between: bool,
    pub outcome: Outcome,
    pub possession_type: PossessionType,
    /// Shot clock at window start, graphlet units only.
    pub shot_clock: Option<ClockKey>,
}

/// One record per unit for the subject at the requested level.
pub fn involvement_records(
    subject: &Subject,
    set: &[ScoredPossession],
    level: UnitLevel,
    index: &PositionIndex,
) -> Vec<InvolvementRecord> {
    let mut out = Vec::new();
    for sp in set {
        match level {
            UnitLevel::Play => {
                let involved = involved_in_play(subject, &sp.possession, index);
                let between = involved && between_in_play(subject, &sp.possession, index);
                out.push(InvolvementRecord {
                    unit: level,
                    subject: subject.clone(),
                    possession_id: sp.possession.possession_id.clone(),
                    window: None,
                    involved,
                    between,
                    outcome: sp.outcome,
                    possession_type: sp.possession_type,
                    shot_clock: None,
                });
            }
            UnitLevel::Graphlet => {
                for s in &sp.windows {
                    let involved = involved_in_window(subject, s, index);
                    let between = involved && between_in_window(subject, s, index);
                    out.push(InvolvementRecord {
                        unit: level,
                        subject: subject.clone(),
                        possession_id: sp.possession.possession_id.clone(),
                        window: Some(s.k),
                        involved,
                        between,
                        outcome: sp.outcome,
                        possession_type: sp.possession_type,
                        shot_clock: Some(s.clock_key()),
                    });
                }
            }
        }
    }
    out
}

/// Observation granularity for the position comparison groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum KwUnit {
    /// One 0/1 observation per rostered player of the position per unit.
    Player,
    /// One 0/1 observation per position per unit (any player counts).
    Position,
}

impl KwUnit {
    pub fn as_str(self) -> &'static str {
        match self {
            KwUnit::Player => "player",
            KwUnit::Position => "position",
        }
    }
}

fn play_metric_set(possession: &Possession, kind: MetricKind) -> BTreeSet<&str> {
    match kind {
        MetricKind::Fc => possession.node_sequence().into_iter().collect(),
        MetricKind::Fb => possession
            .passes
            .windows(2)
            .map(|w| w[0].receiver.as_str())
            .collect(),
    }
}

fn window_metric_set(snapshot: &Snapshot, kind: MetricKind) -> BTreeSet<&str> {
    match kind {
        MetricKind::Fc => snapshot.nodes(),
        MetricKind::Fb => snapshot
            .passes
            .windows(2)
            .map(|w| w[0].receiver.as_str())
            .collect(),
    }
}

/// Indicator groups for the cross-position comparison, one group per
/// position in `Position::ALL` order.
pub fn position_indicator_groups(
    set: &[ScoredPossession],
    level: UnitLevel,
    kind: MetricKind,
    unit: KwUnit,
    index: &PositionIndex,
) -> Vec<Vec<f64>> {
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); Position::ALL.len()];
    let mut push_unit = |team_id: &str, members: &BTreeSet<&str>| {
        for (gi, pos) in Position::ALL.iter().enumerate() {
            let players = index.players_of(team_id, *pos);
            match unit {
                KwUnit::Player => {
                    for player in players {
                        groups[gi].push(members.contains(player) as u64 as f64);
                    }
                }
                KwUnit::Position => {
                    let any = players.iter().any(|p| members.contains(*p));
                    groups[gi].push(any as u64 as f64);
                }
            }
        }
    };
    for sp in set {
        match level {
            UnitLevel::Play => {
                let members = play_metric_set(&sp.possession, kind);
                push_unit(&sp.possession.team_id, &members);
            }
            UnitLevel::Graphlet => {
                for s in &sp.windows {
                    let members = window_metric_set(s, kind);
                    push_unit(&s.team_id, &members);
                }
            }
        }
    }
    groups
}

/// Involvement-by-outcome test for one position / type / level / metric.
/// `counts` rows are (involved, not involved), columns (negative,
/// positive); neutral units are excluded. `chi2` is absent when the
/// table degenerates (a zero row or column), `odds` when there are no
/// units at all.
#[derive(Debug, Clone)]
pub struct AssociationResult {
    pub position: Position,
    pub possession_type: PossessionType,
    pub level: UnitLevel,
    pub metric: MetricKind,
    pub counts: [[u64; 2]; 2],
    pub n: u64,
    pub chi2: Option<TestResult>,
    pub odds: Option<TestResult>,
}

/// Runs the involvement-by-outcome tests for every possession type,
/// metric, and position at the given level. Row order is fixed: type,
/// then metric, then position.
pub fn outcome_association_suite(
    set: &[ScoredPossession],
    level: UnitLevel,
    index: &PositionIndex,
) -> Result<Vec<AssociationResult>> {
    let mut out = Vec::new();
    for possession_type in PossessionType::BOTH {
        for metric in MetricKind::BOTH {
            for position in Position::ALL {
                let mut counts = [[0u64; 2]; 2];
                for sp in set.iter().filter(|sp| sp.possession_type == possession_type) {
                    let col = match sp.outcome {
                        Outcome::Negative => 0,
                        Outcome::Positive => 1,
                        Outcome::Neutral => continue,
                    };
                    let positions_of = |members: &BTreeSet<&str>, team: &str| {
                        index
                            .players_of(team, position)
                            .iter()
                            .any(|p| members.contains(*p))
                    };
                    match level {
                        UnitLevel::Play => {
                            let members = play_metric_set(&sp.possession, metric);
                            let row = !positions_of(&members, &sp.possession.team_id) as usize;
                            counts[row][col] += 1;
                        }
                        UnitLevel::Graphlet => {
                            for s in &sp.windows {
                                let members = window_metric_set(s, metric);
                                let row = !positions_of(&members, &s.team_id) as usize;
                                counts[row][col] += 1;
                            }
                        }
                    }
                }
                let n: u64 = counts.iter().flatten().sum();
                let table = ContingencyTable::new(vec![counts[0].to_vec(), counts[1].to_vec()])?;
                let chi2 = match chi2_independence_corrected(&table) {
                    Ok(r) => Some(r),
                    Err(Error::DegenerateTable(_)) => None,
                    Err(e) => return Err(e),
                };
                let odds = if n > 0 { Some(odds_ratio(&table)?) } else { None };
                out.push(AssociationResult {
                    position,
                    possession_type,
                    level,
                    metric,
                    counts,
                    n,
                    chi2,
                    odds,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{PassEvent, PlayerRef, StartBall, StartHalf};
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    const TEAM: &str = "t1";

    /// Two players per position: pg1, pg2, sg1, ..., c2.
    fn index() -> PositionIndex {
        let mut rosters = BTreeMap::new();
        let mut players = Vec::new();
        for pos in Position::ALL {
            for i in 1..=2 {
                players.push(PlayerRef {
                    player_id: format!("{}{}", pos.as_str().to_lowercase(), i),
                    team_id: TEAM.to_string(),
                    position: pos,
                });
            }
        }
        rosters.insert(TEAM.to_string(), players);
        PositionIndex::from_rosters(&rosters)
    }

    fn possession(id: &str, carrier: &str, chain: &[(&str, &str)], duration: f64) -> Possession {
        let passes = chain
            .iter()
            .enumerate()
            .map(|(i, (from, to))| PassEvent {
                t: (i + 1) as f64,
                passer: from.to_string(),
                receiver: to.to_string(),
            })
            .collect();
        Possession {
            possession_id: id.to_string(),
            game_id: "g1".to_string(),
            team_id: TEAM.to_string(),
            duration,
            shot_clock_start: 24.0,
            start_half: StartHalf::Defensive,
            start_ball: StartBall::Inside,
            initial_carrier: carrier.to_string(),
            outcome_raw: "made_2pt".to_string(),
            passes,
        }
    }

    fn scored(p: Possession, t: PossessionType, outcome: Outcome) -> ScoredPossession {
        let windows = build_windows(&p, &WindowConfig::default()).unwrap().snapshots;
        ScoredPossession { possession: p, possession_type: t, outcome, windows }
    }

    #[test]
    fn play_level_fractions_match_direct_counts() {
        let idx = index();
        let ps = vec![
            possession("p1", "pg1", &[("pg1", "sg1"), ("sg1", "sf1")], 8.0),
            possession("p2", "sg1", &[("sg1", "pf1")], 8.0),
            possession("p3", "c1", &[], 8.0),
            possession("p4", "pg2", &[("pg2", "c2"), ("c2", "pg2"), ("pg2", "sf2")], 8.0),
        ];
        let refs: Vec<&Possession> = ps.iter().collect();
        let sg1 = Subject::player(TEAM, "sg1");
        assert_eq!(flow_centrality_play(&sg1, &refs, &idx).unwrap(), 0.5);
        assert_eq!(flow_betweenness_play(&sg1, &refs, &idx).unwrap(), 0.25);
        // A silent initial carrier with no passes still counts as involved.
        let c1 = Subject::player(TEAM, "c1");
        assert_eq!(flow_centrality_play(&c1, &refs, &idx).unwrap(), 0.25);
        assert_eq!(flow_betweenness_play(&c1, &refs, &idx).unwrap(), 0.0);
        // Position-level: either PG counts.
        let pg = Subject::position(Position::PG);
        assert_eq!(flow_centrality_play(&pg, &refs, &idx).unwrap(), 0.5);
        assert_eq!(flow_betweenness_play(&pg, &refs, &idx).unwrap(), 0.25);
        let never = Subject::player(TEAM, "nobody");
        assert_eq!(flow_centrality_play(&never, &refs, &idx).unwrap(), 0.0);
    }

    #[test]
    fn empty_unit_sets_are_undefined() {
        let idx = index();
        let s = Subject::position(Position::PG);
        assert_eq!(flow_centrality_play(&s, &[], &idx).unwrap_err().kind(), "undefined");
        assert_eq!(adapted_metric(&s, &[], MetricKind::Fc, &idx).unwrap_err().kind(), "undefined");
        assert!(adapted_metric_possession_mean(&s, &[], MetricKind::Fc, &idx).is_err());
    }

    #[test]
    fn one_or_zero_pass_possessions_have_no_between() {
        let idx = index();
        let ps = vec![
            possession("p1", "pg1", &[], 8.0),
            possession("p2", "pg1", &[("pg1", "sg1")], 8.0),
        ];
        let refs: Vec<&Possession> = ps.iter().collect();
        for pos in Position::ALL {
            let s = Subject::position(pos);
            assert_eq!(flow_betweenness_play(&s, &refs, &idx).unwrap(), 0.0);
        }
    }

    #[test]
    fn window_involvement_dilutes_play_involvement() {
        let idx = index();
        // 10 windows (10.5s at 6s/0.5s); the only pass (t = 1.0) lies in
        // windows 0..=2, whose starts are at or before it.
        let p = possession("p1", "pg1", &[("pg1", "sg1")], 10.5);
        let g = build_windows(&p, &WindowConfig::default()).unwrap();
        assert_eq!(g.snapshots.len(), 10);
        let pg1 = Subject::player(TEAM, "pg1");
        // pg1 is the carrier of windows starting at t <= 1.0 and an
        // endpoint of the pass in the windows containing t = 1.0.
        let pooled = adapted_metric(&pg1, &g.snapshots, MetricKind::Fc, &idx).unwrap();
        assert_eq!(pooled, 0.3);
        let refs = vec![&p];
        assert_eq!(flow_centrality_play(&pg1, &refs, &idx).unwrap(), 1.0);
        let mean =
            adapted_metric_possession_mean(&pg1, &[g.clone()], MetricKind::Fc, &idx).unwrap();
        assert_eq!(mean, pooled);
        // sg1 holds the ball from t = 1.0 on: carrier of every later
        // window, involved everywhere.
        let sg1 = Subject::player(TEAM, "sg1");
        assert_eq!(adapted_metric(&sg1, &g.snapshots, MetricKind::Fc, &idx).unwrap(), 1.0);
    }

    #[test]
    fn window_betweenness_needs_both_events_inside() {
        let idx = index();
        let mut p = possession("p1", "pg1", &[("pg1", "sg1"), ("sg1", "sf1")], 12.0);
        // Reception at 1.0, next pass at 8.0: never in one 6s window.
        p.passes[1].t = 8.0;
        let g = build_windows(&p, &WindowConfig::default()).unwrap();
        let sg1 = Subject::player(TEAM, "sg1");
        assert_eq!(adapted_metric(&sg1, &g.snapshots, MetricKind::Fb, &idx).unwrap(), 0.0);
        assert!(between_in_play(&sg1, &p, &idx));
        // Pull the second pass close: some window holds both.
        p.passes[1].t = 3.0;
        let g = build_windows(&p, &WindowConfig::default()).unwrap();
        let fb = adapted_metric(&sg1, &g.snapshots, MetricKind::Fb, &idx).unwrap();
        assert!(fb > 0.0);
        let fc = adapted_metric(&sg1, &g.snapshots, MetricKind::Fc, &idx).unwrap();
        assert!(fb <= fc);
    }

    #[test]
    fn ratio_is_missing_exactly_when_fc_is_zero() {
        assert_eq!(fb_fc_ratio(0.2, 0.8), Some(0.25));
        assert_eq!(fb_fc_ratio(0.5, 0.5), Some(1.0));
        assert_eq!(fb_fc_ratio(0.0, 0.0), None);
        assert_eq!(fb_fc_ratio(0.0, 0.4), Some(0.0));
    }

    #[test]
    fn series_points_are_descending_with_wilson_bounds() {
        let idx = index();
        let ps = vec![
            possession("p1", "pg1", &[("pg1", "sg1")], 8.0),
            possession("p2", "pg2", &[], 7.0),
        ];
        let mut snaps = Vec::new();
        for p in &ps {
            snaps.extend(build_windows(p, &WindowConfig::default()).unwrap().snapshots);
        }
        let s = metric_series(&Subject::position(Position::PG), &snaps, MetricKind::Fc, &idx);
        assert!(!s.points.is_empty());
        for w in s.points.windows(2) {
            assert!(w[0].clock > w[1].clock);
        }
        for pt in &s.points {
            assert!(pt.n > 0);
            assert!(pt.ci_low <= pt.mean && pt.mean <= pt.ci_high);
        }
        // Both possessions start at clock 24, so the first point pools 2.
        assert_eq!(s.points[0].clock, ClockKey::from_secs(24.0));
        assert_eq!(s.points[0].n, 2);
        assert_eq!(s.points[0].mean, 1.0);
    }

    #[test]
    fn game_aggregate_saturates_and_zeroes() {
        let idx = index();
        let p = possession("p1", "pg1", &[("pg1", "sg1"), ("sg1", "pg1")], 6.0);
        let g = build_windows(&p, &WindowConfig::default()).unwrap();
        let refs = vec![&p];
        let pg1 = Subject::player(TEAM, "pg1");
        let agg = game_aggregate(&pg1, &refs, &g.snapshots, &idx).unwrap();
        assert_eq!(agg.play_fc.mean, 1.0);
        assert_eq!(agg.play_fb.mean, 0.0);
        assert_eq!(agg.adapted_fc.mean, 1.0);
        assert_eq!(agg.adapted_fc.n, 1);
        let absent = Subject::player(TEAM, "c2");
        let agg = game_aggregate(&absent, &refs, &g.snapshots, &idx).unwrap();
        assert_eq!(agg.play_fc.mean, 0.0);
        assert_eq!(agg.adapted_fb.mean, 0.0);
        // sg1 receives then returns the ball inside the only window.
        let sg1 = Subject::player(TEAM, "sg1");
        let agg = game_aggregate(&sg1, &refs, &g.snapshots, &idx).unwrap();
        assert_eq!(agg.play_fb.mean, 1.0);
        assert_eq!(agg.adapted_fb.mean, 1.0);
        assert!(game_aggregate(&sg1, &[], &[], &idx).is_err());
    }

    #[test]
    fn records_carry_unit_keys_and_respect_the_implication() {
        let idx = index();
        let set = vec![
            scored(
                possession("p1", "pg1", &[("pg1", "sg1"), ("sg1", "sf1")], 7.0),
                PossessionType::BallIn,
                Outcome::Positive,
            ),
            scored(
                possession("p2", "c1", &[], 6.0),
                PossessionType::BallOut,
                Outcome::Negative,
            ),
        ];
        let sg1 = Subject::player(TEAM, "sg1");
        let play = involvement_records(&sg1, &set, UnitLevel::Play, &idx);
        assert_eq!(play.len(), 2);
        assert!(play[0].involved && play[0].between);
        assert_eq!(play[0].window, None);
        assert_eq!(play[0].shot_clock, None);
        assert!(!play[1].involved && !play[1].between);

        let win = involvement_records(&sg1, &set, UnitLevel::Graphlet, &idx);
        let total_windows: usize = set.iter().map(|sp| sp.windows.len()).sum();
        assert_eq!(win.len(), total_windows);
        for r in &win {
            assert!(r.involved || !r.between);
            assert!(r.window.is_some());
            assert!(r.shot_clock.is_some());
        }
    }

    #[test]
    fn indicator_groups_by_player_and_by_position() {
        let idx = index();
        let set = vec![scored(
            possession("p1", "pg1", &[("pg1", "pg2"), ("pg2", "sg1")], 6.0),
            PossessionType::BallIn,
            Outcome::Positive,
        )];
        let by_player =
            position_indicator_groups(&set, UnitLevel::Play, MetricKind::Fc, KwUnit::Player, &idx);
        // Two players per position, one unit: PG group [1, 1], SG [1, 0].
        assert_eq!(by_player[0], vec![1.0, 1.0]);
        assert_eq!(by_player[1], vec![1.0, 0.0]);
        assert_eq!(by_player[4], vec![0.0, 0.0]);
        let by_pos = position_indicator_groups(
            &set,
            UnitLevel::Play,
            MetricKind::Fc,
            KwUnit::Position,
            &idx,
        );
        assert_eq!(by_pos[0], vec![1.0]);
        assert_eq!(by_pos[1], vec![1.0]);
        assert_eq!(by_pos[2], vec![0.0]);
        // FB at play level: pg2 is the only interior node.
        let fb = position_indicator_groups(
            &set,
            UnitLevel::Play,
            MetricKind::Fb,
            KwUnit::Player,
            &idx,
        );
        assert_eq!(fb[0], vec![0.0, 1.0]);
        assert_eq!(fb[1], vec![0.0, 0.0]);
    }

    #[test]
    fn association_suite_counts_and_order() {
        let idx = index();
        // 8 ball-in possessions: SG involved iff outcome negative, a
        // perfect association. Neutral rows must vanish.
        let mut set = Vec::new();
        for i in 0..4 {
            set.push(scored(
                possession(&format!("n{i}"), "pg1", &[("pg1", "sg1")], 6.0),
                PossessionType::BallIn,
                Outcome::Negative,
            ));
        }
        for i in 0..4 {
            set.push(scored(
                possession(&format!("p{i}"), "pg1", &[("pg1", "sf1")], 6.0),
                PossessionType::BallIn,
                Outcome::Positive,
            ));
        }
        set.push(scored(
            possession("x", "sg1", &[], 6.0),
            PossessionType::BallIn,
            Outcome::Neutral,
        ));
        let rows = outcome_association_suite(&set, UnitLevel::Play, &idx).unwrap();
        // 2 types x 2 metrics x 5 positions.
        assert_eq!(rows.len(), 20);
        let sg = rows
            .iter()
            .find(|r| {
                r.position == Position::SG
                    && r.possession_type == PossessionType::BallIn
                    && r.metric == MetricKind::Fc
            })
            .unwrap();
        assert_eq!(sg.counts, [[4, 0], [0, 4]]);
        assert_eq!(sg.n, 8);
        let or = sg.odds.as_ref().unwrap();
        assert!(or.statistic > 1.0);
        // PG appears in every non-neutral possession: involvement row is
        // constant, the table degenerates, odds still defined via the
        // zero-cell correction.
        let pg = rows
            .iter()
            .find(|r| {
                r.position == Position::PG
                    && r.possession_type == PossessionType::BallIn
                    && r.metric == MetricKind::Fc
            })
            .unwrap();
        assert_eq!(pg.counts, [[4, 4], [0, 0]]);
        assert!(pg.chi2.is_none());
        assert!(pg.odds.is_some());
        // No ball-out possessions at all: n = 0 rows skip both tests.
        let out_row = rows
            .iter()
            .find(|r| r.possession_type == PossessionType::BallOut)
            .unwrap();
        assert_eq!(out_row.n, 0);
        assert!(out_row.chi2.is_none() && out_row.odds.is_none());
        // Fixed ordering: type, then metric, then position.
        assert_eq!(rows[0].possession_type, PossessionType::BallIn);
        assert_eq!(rows[0].metric, MetricKind::Fc);
        assert_eq!(rows[0].position, Position::PG);
        assert_eq!(rows[5].metric, MetricKind::Fb);
        assert_eq!(rows[10].possession_type, PossessionType::BallOut);
    }

    #[test]
    fn association_direction_matches_the_row_convention() {
        let idx = index();
        // SG involved in 1 of 4 negative and 3 of 4 positive units:
        // involvement leans positive, so with columns (negative,
        // positive) the odds ratio must come out below 1.
        let mut set = Vec::new();
        for i in 0..4 {
            let carrier = if i == 0 { "sg1" } else { "pg1" };
            set.push(scored(
                possession(&format!("n{i}"), carrier, &[], 6.0),
                PossessionType::BallIn,
                Outcome::Negative,
            ));
        }
        for i in 0..4 {
            let carrier = if i == 0 { "pg1" } else { "sg1" };
            set.push(scored(
                possession(&format!("p{i}"), carrier, &[], 6.0),
                PossessionType::BallIn,
                Outcome::Positive,
            ));
        }
        let rows = outcome_association_suite(&set, UnitLevel::Play, &idx).unwrap();
        let sg = rows
            .iter()
            .find(|r| r.position == Position::SG && r.metric == MetricKind::Fc)
            .unwrap();
        assert_eq!(sg.counts, [[1, 3], [3, 1]]);
        let or = sg.odds.as_ref().unwrap();
        assert!((or.statistic - 1.0 / 9.0).abs() < 1e-12);
    }

    /// Random chain possessions over the ten-player roster.
    fn chain_strategy() -> impl Strategy<Value = Possession> {
        let player = 0usize..10;
        (player, proptest::collection::vec(0usize..9, 0..8), 0u32..1000).prop_map(
            |(first, hops, salt)| {
                let ids: Vec<String> = Position::ALL
                    .iter()
                    .flat_map(|p| {
                        (1..=2).map(move |i| format!("{}{}", p.as_str().to_lowercase(), i))
                    })
                    .collect();
                let mut chain = Vec::new();
                let mut current = first;
                for hop in hops {
                    // Skip over the current player so passer != receiver.
                    let next = (current + 1 + (hop % 9)) % 10;
                    chain.push((ids[current].clone(), ids[next].clone()));
                    current = next;
                }
                let duration = 6.0 + (salt % 80) as f64 * 0.1;
                let passes = chain
                    .iter()
                    .enumerate()
                    .map(|(i, (from, to))| PassEvent {
                        // Spread passes over the usable span.
                        t: (i + 1) as f64 * duration / (chain.len() + 1) as f64,
                        passer: from.clone(),
                        receiver: to.clone(),
                    })
                    .collect();
                Possession {
                    possession_id: format!("p{salt}"),
                    game_id: "g1".to_string(),
                    team_id: TEAM.to_string(),
                    duration,
                    shot_clock_start: 24.0,
                    start_half: StartHalf::Defensive,
                    start_ball: StartBall::Inside,
                    initial_carrier: ids[first].clone(),
                    outcome_raw: "made_2pt".to_string(),
                    passes,
                }
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn betweenness_never_exceeds_centrality(
            ps in proptest::collection::vec(chain_strategy(), 1..12),
        ) {
            let idx = index();
            let refs: Vec<&Possession> = ps.iter().collect();
            let mut snaps = Vec::new();
            let mut graphs = Vec::new();
            for p in &ps {
                let g = build_windows(p, &WindowConfig::default()).unwrap();
                snaps.extend(g.snapshots.clone());
                graphs.push(g);
            }
            for pos in Position::ALL {
                let s = Subject::position(pos);
                let fc = flow_centrality_play(&s, &refs, &idx).unwrap();
                let fb = flow_betweenness_play(&s, &refs, &idx).unwrap();
                prop_assert!(fb <= fc + 1e-12);
                let afc = adapted_metric(&s, &snaps, MetricKind::Fc, &idx).unwrap();
                let afb = adapted_metric(&s, &snaps, MetricKind::Fb, &idx).unwrap();
                prop_assert!(afb <= afc + 1e-12);
                // Possession-mean adapted values sit under play values.
                let mfc = adapted_metric_possession_mean(&s, &graphs, MetricKind::Fc, &idx).unwrap();
                let mfb = adapted_metric_possession_mean(&s, &graphs, MetricKind::Fb, &idx).unwrap();
                prop_assert!(mfc <= fc + 1e-12, "adapted FC mean {mfc} > play {fc}");
                prop_assert!(mfb <= fb + 1e-12, "adapted FB mean {mfb} > play {fb}");
            }
        }

        #[test]
        fn position_fc_dominates_every_member_player(
            ps in proptest::collection::vec(chain_strategy(), 1..10),
        ) {
            let idx = index();
            let refs: Vec<&Possession> = ps.iter().collect();
            for pos in Position::ALL {
                let s = Subject::position(pos);
                let pos_fc = flow_centrality_play(&s, &refs, &idx).unwrap();
                for player in idx.players_of(TEAM, pos) {
                    let p = Subject::player(TEAM, player);
                    let player_fc = flow_centrality_play(&p, &refs, &idx).unwrap();
                    prop_assert!(pos_fc >= player_fc - 1e-12);
                }
            }
        }

        #[test]
        fn metrics_invariant_under_position_preserving_relabel(
            ps in proptest::collection::vec(chain_strategy(), 1..8),
        ) {
            let idx = index();
            // Swap the two players inside each position: pg1 <-> pg2 etc.
            let rename = |id: &str| -> String {
                let (stem, num) = id.split_at(id.len() - 1);
                format!("{stem}{}", if num == "1" { "2" } else { "1" })
            };
            let renamed: Vec<Possession> = ps
                .iter()
                .map(|p| {
                    let mut q = p.clone();
                    q.initial_carrier = rename(&q.initial_carrier);
                    for pass in &mut q.passes {
                        pass.passer = rename(&pass.passer);
                        pass.receiver = rename(&pass.receiver);
                    }
                    q
                })
                .collect();
            let refs: Vec<&Possession> = ps.iter().collect();
            let renamed_refs: Vec<&Possession> = renamed.iter().collect();
            for pos in Position::ALL {
                let s = Subject::position(pos);
                let a = flow_centrality_play(&s, &refs, &idx).unwrap();
                let b = flow_centrality_play(&s, &renamed_refs, &idx).unwrap();
                prop_assert_eq!(a, b);
                let a = flow_betweenness_play(&s, &refs, &idx).unwrap();
                let b = flow_betweenness_play(&s, &renamed_refs, &idx).unwrap();
                prop_assert_eq!(a, b);
            }
        }
    }
}
