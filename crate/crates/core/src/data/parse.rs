//! CSV ingestion and emission for the long-format events file and the
//! roster file.
//!
//! The events file mixes two row kinds under one header: a `POSS` row
//! carries possession-level fields, and the `PASS` rows that share its
//! `possession_id` carry the pass chain. Ingestion is lossless in the
//! accounting sense: every possession id seen ends up either in the
//! dataset or in the rejection list with the row numbers that doomed it.

use std::collections::{BTreeMap, BTreeSet};
use std::io;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::data::{
    Dataset, PassEvent, PlayerRef, Position, Possession, Provenance, StartBall, StartHalf,
    Violation,
};
use crate::error::{Error, Result};

/// Required events file header, in emission order.
pub const EVENT_COLUMNS: [&str; 13] = [
    "row_type",
    "game_id",
    "possession_id",
    "team_id",
    "duration_s",
    "shot_clock_start_s",
    "start_half",
    "start_ball",
    "initial_carrier",
    "outcome_raw",
    "pass_t_s",
    "passer",
    "receiver",
];

/// Required roster file header.
pub const ROSTER_COLUMNS: [&str; 3] = ["team_id", "player_id", "position"];

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Snaps a time in seconds to the millisecond grid all event times live on.
pub(crate) fn round_ms(t: f64) -> f64 {
    (t * 1000.0).round() / 1000.0
}

/// Parses the two input files into a validated [`Dataset`]. Structural
/// problems (missing columns, unreadable files, roster duplicates) fail
/// the whole parse; per-possession invariant violations reject only the
/// offending possession and are reported in the provenance.
pub fn parse_dataset(events_path: &Path, roster_path: &Path) -> Result<Dataset> {
    let events_bytes = std::fs::read(events_path).map_err(|e| Error::io(events_path, e))?;
    let roster_bytes = std::fs::read(roster_path).map_err(|e| Error::io(roster_path, e))?;
    let rosters = parse_roster_bytes(&roster_bytes, roster_path)?;
    let mut provenance = Provenance {
        events_path: events_path.display().to_string(),
        roster_path: roster_path.display().to_string(),
        events_sha256: sha256_hex(&events_bytes),
        roster_sha256: sha256_hex(&roster_bytes),
        possessions_in: 0,
        passes_in: 0,
        rejected_possessions: 0,
        violations: vec![],
        warnings: vec![],
    };
    let possessions = parse_events_bytes(&events_bytes, events_path, &rosters, &mut provenance)?;
    Ok(Dataset { possessions, rosters, provenance })
}

pub fn parse_roster(path: &Path) -> Result<BTreeMap<String, Vec<PlayerRef>>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_roster_bytes(&bytes, path)
}

fn parse_roster_bytes(bytes: &[u8], path: &Path) -> Result<BTreeMap<String, Vec<PlayerRef>>> {
    let mut reader = csv::Reader::from_reader(bytes);
    check_header(&mut reader, &ROSTER_COLUMNS, path)?;
    let mut rosters: BTreeMap<String, Vec<PlayerRef>> = BTreeMap::new();
    let mut seen: BTreeSet<(String, String)> = BTreeSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let team_id = field(&record, 0);
        let player_id = field(&record, 1);
        let position = field(&record, 2);
        if team_id.is_empty() || player_id.is_empty() {
            return Err(Error::Roster(format!(
                "{}:{line}: empty team_id or player_id",
                path.display()
            )));
        }
        let position = Position::parse(&position)
            .map_err(|e| Error::Roster(format!("{}:{line}: {e}", path.display())))?;
        if !seen.insert((team_id.clone(), player_id.clone())) {
            return Err(Error::Roster(format!(
                "{}:{line}: duplicate roster entry for player {player_id:?} on team {team_id:?}",
                path.display()
            )));
        }
        rosters
            .entry(team_id.clone())
            .or_default()
            .push(PlayerRef { player_id, team_id, position });
    }
    Ok(rosters)
}

fn field(record: &csv::StringRecord, idx: usize) -> String {
    record.get(idx).unwrap_or("").trim().to_string()
}

fn check_header<R: io::Read>(
    reader: &mut csv::Reader<R>,
    expected: &[&str],
    path: &Path,
) -> Result<()> {
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?;
    let found: Vec<&str> = headers.iter().map(str::trim).collect();
    let missing: Vec<&str> = expected
        .iter()
        .filter(|c| !found.contains(c))
        .copied()
        .collect();
    if !missing.is_empty() {
        return Err(Error::Schema(format!(
            "{}: missing column(s): {}",
            path.display(),
            missing.join(", ")
        )));
    }
    let unknown: Vec<&str> = found
        .iter()
        .filter(|c| !expected.contains(c))
        .copied()
        .collect();
    if !unknown.is_empty() {
        return Err(Error::Schema(format!(
            "{}: unknown column(s): {}",
            path.display(),
            unknown.join(", ")
        )));
    }
    Ok(())
}

/// Possession-level fields taken from a POSS row.
struct Header {
    game_id: String,
    team_id: String,
    duration: f64,
    shot_clock_start: f64,
    start_half: StartHalf,
    start_ball: StartBall,
    initial_carrier: String,
    outcome_raw: String,
}

#[derive(Default)]
struct Draft {
    header: Option<Header>,
    header_line: u64,
    passes: Vec<(PassEvent, u64)>,
    violations: Vec<String>,
}

fn parse_events_bytes(
    bytes: &[u8],
    path: &Path,
    rosters: &BTreeMap<String, Vec<PlayerRef>>,
    provenance: &mut Provenance,
) -> Result<Vec<Possession>> {
    let mut reader = csv::Reader::from_reader(bytes);
    check_header(&mut reader, &EVENT_COLUMNS, path)?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name).unwrap();
    let c_row_type = col("row_type");
    let c_game = col("game_id");
    let c_poss = col("possession_id");
    let c_team = col("team_id");
    let c_duration = col("duration_s");
    let c_clock = col("shot_clock_start_s");
    let c_half = col("start_half");
    let c_ball = col("start_ball");
    let c_carrier = col("initial_carrier");
    let c_outcome = col("outcome_raw");
    let c_t = col("pass_t_s");
    let c_passer = col("passer");
    let c_receiver = col("receiver");

    // Drafts keyed by possession id, kept in first-appearance order.
    let mut order: Vec<String> = Vec::new();
    let mut drafts: BTreeMap<String, Draft> = BTreeMap::new();

    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let possession_id = field(&record, c_poss);
        if possession_id.is_empty() {
            return Err(Error::Schema(format!(
                "{}:{line}: row without possession_id",
                path.display()
            )));
        }
        let draft = drafts.entry(possession_id.clone()).or_insert_with(|| {
            order.push(possession_id.clone());
            Draft::default()
        });
        match field(&record, c_row_type).as_str() {
            "POSS" => {
                if draft.header.is_some() {
                    draft
                        .violations
                        .push(format!("line {line}: duplicate POSS row"));
                    continue;
                }
                draft.header_line = line;
                match parse_header(&record, line, c_game, c_team, c_duration, c_clock, c_half, c_ball, c_carrier, c_outcome) {
                    Ok((header, snap_warning)) => {
                        if let Some(w) = snap_warning {
                            provenance.warnings.push(Violation {
                                possession_id: possession_id.clone(),
                                line,
                                message: w,
                            });
                        }
                        draft.header = Some(header);
                    }
                    Err(msg) => draft.violations.push(msg),
                }
            }
            "PASS" => {
                provenance.passes_in += 1;
                let t = match parse_f64(&record, c_t, "pass_t_s", line) {
                    Ok(v) => v,
                    Err(msg) => {
                        draft.violations.push(msg);
                        continue;
                    }
                };
                let passer = field(&record, c_passer);
                let receiver = field(&record, c_receiver);
                if passer.is_empty() || receiver.is_empty() {
                    draft
                        .violations
                        .push(format!("line {line}: PASS row with empty passer or receiver"));
                    continue;
                }
                if t < 0.0 {
                    draft
                        .violations
                        .push(format!("line {line}: pass_t_s {t} is negative"));
                    continue;
                }
                if passer == receiver {
                    draft
                        .violations
                        .push(format!("line {line}: passer equals receiver ({passer:?})"));
                    continue;
                }
                draft
                    .passes
                    .push((PassEvent { t: round_ms(t), passer, receiver }, line));
            }
            other => {
                draft
                    .violations
                    .push(format!("line {line}: unknown row_type {other:?}"));
            }
        }
    }

    provenance.possessions_in = order.len();
    let team_players: BTreeMap<&str, BTreeSet<&str>> = rosters
        .iter()
        .map(|(team, players)| {
            (
                team.as_str(),
                players.iter().map(|p| p.player_id.as_str()).collect(),
            )
        })
        .collect();

    let mut possessions = Vec::new();
    for possession_id in order {
        let mut draft = drafts.remove(&possession_id).unwrap();
        validate_draft(&mut draft, &team_players);
        if draft.violations.is_empty() {
            let header = draft.header.unwrap();
            possessions.push(Possession {
                possession_id,
                game_id: header.game_id,
                team_id: header.team_id,
                duration: header.duration,
                shot_clock_start: header.shot_clock_start,
                start_half: header.start_half,
                start_ball: header.start_ball,
                initial_carrier: header.initial_carrier,
                outcome_raw: header.outcome_raw,
                passes: draft.passes.into_iter().map(|(p, _)| p).collect(),
            });
        } else {
            provenance.rejected_possessions += 1;
            for message in draft.violations {
                provenance.violations.push(Violation {
                    possession_id: possession_id.clone(),
                    line: draft.header_line,
                    message,
                });
            }
        }
    }
    Ok(possessions)
}

#[allow(clippy::too_many_arguments)]
fn parse_header(
    record: &csv::StringRecord,
    line: u64,
    c_game: usize,
    c_team: usize,
    c_duration: usize,
    c_clock: usize,
    c_half: usize,
    c_ball: usize,
    c_carrier: usize,
    c_outcome: usize,
) -> std::result::Result<(Header, Option<String>), String> {
    let game_id = field(record, c_game);
    let team_id = field(record, c_team);
    let initial_carrier = field(record, c_carrier);
    let outcome_raw = field(record, c_outcome);
    for (name, value) in [
        ("game_id", &game_id),
        ("team_id", &team_id),
        ("initial_carrier", &initial_carrier),
        ("outcome_raw", &outcome_raw),
    ] {
        if value.is_empty() {
            return Err(format!("line {line}: POSS row with empty {name}"));
        }
    }
    let duration = parse_f64(record, c_duration, "duration_s", line)?;
    if duration < 0.0 {
        return Err(format!("line {line}: duration_s {duration} is negative"));
    }
    let duration = round_ms(duration);
    let clock_raw = parse_f64(record, c_clock, "shot_clock_start_s", line)?;
    // Legal values live on the 0.5s grid in [0.5, 24]; snap and clamp,
    // warning when the adjustment is larger than grid rounding noise.
    let snapped = ((clock_raw * 2.0).round() / 2.0).clamp(0.5, 24.0);
    let snap_warning = if (snapped - clock_raw).abs() > 0.25 + 1e-9 {
        Some(format!(
            "line {line}: shot_clock_start_s {clock_raw} snapped to {snapped}"
        ))
    } else {
        None
    };
    let start_half = match field(record, c_half).as_str() {
        "DEF" => StartHalf::Defensive,
        "OFF" => StartHalf::Offensive,
        other => return Err(format!("line {line}: unknown start_half {other:?}")),
    };
    let start_ball = match field(record, c_ball).as_str() {
        "IN" => StartBall::Inside,
        "OUT" => StartBall::Offside,
        other => return Err(format!("line {line}: unknown start_ball {other:?}")),
    };
    Ok((
        Header {
            game_id,
            team_id,
            duration,
            shot_clock_start: snapped,
            start_half,
            start_ball,
            initial_carrier,
            outcome_raw,
        },
        snap_warning,
    ))
}

fn parse_f64(
    record: &csv::StringRecord,
    idx: usize,
    name: &str,
    line: u64,
) -> std::result::Result<f64, String> {
    let raw = field(record, idx);
    if raw.is_empty() {
        return Err(format!("line {line}: empty {name}"));
    }
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("line {line}: {name} {raw:?} is not a finite number")),
    }
}

fn validate_draft(draft: &mut Draft, team_players: &BTreeMap<&str, BTreeSet<&str>>) {
    let header = match &draft.header {
        Some(h) => h,
        None => {
            draft
                .violations
                .push("PASS rows without a POSS header row".to_string());
            return;
        }
    };
    for (pass, line) in &draft.passes {
        if pass.t > header.duration + 1e-9 {
            draft.violations.push(format!(
                "line {line}: pass_t_s {} exceeds possession duration {}",
                pass.t, header.duration
            ));
        }
    }
    for window in draft.passes.windows(2) {
        let (a, la) = (&window[0].0, window[0].1);
        let (b, lb) = (&window[1].0, window[1].1);
        if b.t <= a.t {
            draft.violations.push(format!(
                "line {lb}: pass_t_s {} does not increase over line {la} ({})",
                b.t, a.t
            ));
        }
        if b.passer != a.receiver {
            draft.violations.push(format!(
                "line {lb}: chain broken: passer {:?} but previous receiver {:?}",
                b.passer, a.receiver
            ));
        }
    }
    if let Some((first, line)) = draft.passes.first() {
        if first.passer != header.initial_carrier {
            draft.violations.push(format!(
                "line {line}: chain broken: first passer {:?} but initial carrier {:?}",
                first.passer, header.initial_carrier
            ));
        }
    }
    match team_players.get(header.team_id.as_str()) {
        None => {
            draft
                .violations
                .push(format!("team {:?} not present in roster", header.team_id));
        }
        Some(players) => {
            if !players.contains(header.initial_carrier.as_str()) {
                draft.violations.push(format!(
                    "initial carrier {:?} not on roster of team {:?}",
                    header.initial_carrier, header.team_id
                ));
            }
            for (pass, line) in &draft.passes {
                for player in [&pass.passer, &pass.receiver] {
                    if !players.contains(player.as_str()) {
                        draft.violations.push(format!(
                            "line {line}: player {:?} not on roster of team {:?}",
                            player, header.team_id
                        ));
                    }
                }
            }
        }
    }
}

/// Writes possessions in the long events format. Each possession emits a
/// POSS row followed by its PASS rows in chain order.
pub fn write_events_csv<W: io::Write>(possessions: &[Possession], w: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    let wrap = |e: csv::Error| Error::Csv { path: "<events writer>".to_string(), source: e };
    writer.write_record(EVENT_COLUMNS).map_err(wrap)?;
    for p in possessions {
        let half = match p.start_half {
            StartHalf::Defensive => "DEF",
            StartHalf::Offensive => "OFF",
        };
        let ball = match p.start_ball {
            StartBall::Inside => "IN",
            StartBall::Offside => "OUT",
        };
        writer
            .write_record([
                "POSS",
                &p.game_id,
                &p.possession_id,
                &p.team_id,
                &format!("{:.3}", p.duration),
                &format!("{:.1}", p.shot_clock_start),
                half,
                ball,
                &p.initial_carrier,
                &p.outcome_raw,
                "",
                "",
                "",
            ])
            .map_err(wrap)?;
        for pass in &p.passes {
            writer
                .write_record([
                    "PASS",
                    &p.game_id,
                    &p.possession_id,
                    &p.team_id,
                    "",
                    "",
                    "",
                    "",
                    "",
                    "",
                    &format!("{:.3}", pass.t),
                    &pass.passer,
                    &pass.receiver,
                ])
                .map_err(wrap)?;
        }
    }
    writer.flush().map_err(|e| Error::Io { path: "<events writer>".to_string(), source: e })?;
    Ok(())
}

pub fn write_roster_csv<W: io::Write>(
    rosters: &BTreeMap<String, Vec<PlayerRef>>,
    w: W,
) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    let wrap = |e: csv::Error| Error::Csv { path: "<roster writer>".to_string(), source: e };
    writer.write_record(ROSTER_COLUMNS).map_err(wrap)?;
    for players in rosters.values() {
        for p in players {
            writer
                .write_record([&p.team_id, &p.player_id, p.position.as_str()])
                .map_err(wrap)?;
        }
    }
    writer.flush().map_err(|e| Error::Io { path: "<roster writer>".to_string(), source: e })?;
    Ok(())
}
