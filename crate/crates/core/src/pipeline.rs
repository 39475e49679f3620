//! Run orchestration: configuration handling, data loading, and the row
//! assembly behind each CLI subcommand. Every product of a run is built
//! here as a vector of flat rows so the same data can be written as CSV
//! or JSON, and `report.json` can bundle all of them with provenance.
//!
//! Output is deterministic byte for byte: all grouping uses ordered maps,
//! row orders are fixed, floats are printed in shortest round-trip form,
//! and nothing depends on wall-clock time.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::data::{
    filter_and_categorize, parse_dataset, write_events_csv, write_roster_csv, Dataset, FilterLog,
    Outcome, OutcomeMapping, Position, PositionIndex, PossessionType, Provenance,
};
use crate::error::{Error, Result};
use crate::graphlet::{
    build_profiles, individual_profiles, state_entropy, GraphletClass, GraphletProfile,
};
use crate::metrics::{
    fb_fc_ratio, game_aggregate, metric_series, outcome_association_suite,
    position_indicator_groups, score_analysis_set, KwUnit, MetricKind, ScoredPossession, Subject,
    UnitLevel,
};
use crate::stats::{
    chi2_independence_corrected, eta_squared_ci, kruskal_wallis, sequential_profile_scan,
    ContingencyTable, ScanCorrection,
};
use crate::synth::{generate, SynthConfig};
use crate::window::{ClockKey, Snapshot, WindowConfig};

/// Serialization target for the tabular outputs. `report.json` and
/// `ingest.json` are always JSON regardless of this setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn parse(s: &str) -> Result<OutputFormat> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Config(format!(
                "unknown format {other:?}; expected csv or json"
            ))),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

/// Which possession classes a run analyzes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TypeFilter {
    BallIn,
    BallOut,
    Both,
}

impl TypeFilter {
    pub fn parse(s: &str) -> Result<TypeFilter> {
        match s {
            "ball-in" | "ball_in" => Ok(TypeFilter::BallIn),
            "ball-out" | "ball_out" => Ok(TypeFilter::BallOut),
            "both" => Ok(TypeFilter::Both),
            other => Err(Error::Config(format!(
                "unknown possession type {other:?}; expected ball-in, ball-out, or both"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TypeFilter::BallIn => "ball-in",
            TypeFilter::BallOut => "ball-out",
            TypeFilter::Both => "both",
        }
    }

    /// Possession types covered by this filter, in fixed output order.
    pub fn selected(self) -> Vec<PossessionType> {
        match self {
            TypeFilter::BallIn => vec![PossessionType::BallIn],
            TypeFilter::BallOut => vec![PossessionType::BallOut],
            TypeFilter::Both => PossessionType::BOTH.to_vec(),
        }
    }

    pub fn includes(self, t: PossessionType) -> bool {
        self.selected().contains(&t)
    }
}

/// Full configuration of a run. Precedence: defaults, then a key=value
/// config file (explicit path or the TEMPORAL_FLOW_CONFIG fallback),
/// then command-line flags.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub events: Option<PathBuf>,
    pub roster: Option<PathBuf>,
    /// Outcome-code mapping file; the builtin mapping when absent.
    pub outcome_map: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub format: OutputFormat,
    pub type_filter: TypeFilter,
    pub alpha: f64,
    pub seed: u64,
    pub resamples: usize,
    pub window_s: f64,
    pub step_s: f64,
    /// Holm-adjust each scan family instead of raw sequential stopping.
    pub holm: bool,
    /// Observation unit for the rank tests of position involvement.
    pub kw_unit: KwUnit,
    /// Also emit the per-window snapshot dump.
    pub snapshots: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            events: None,
            roster: None,
            outcome_map: None,
            out_dir: PathBuf::from("out"),
            format: OutputFormat::Csv,
            type_filter: TypeFilter::Both,
            alpha: 0.05,
            seed: 0,
            resamples: 2000,
            window_s: 6.0,
            step_s: 0.5,
            holm: false,
            kw_unit: KwUnit::Player,
            snapshots: false,
        }
    }
}

/// Name of the environment variable consulted for a config file when no
/// explicit --config path is given.
pub const CONFIG_ENV: &str = "TEMPORAL_FLOW_CONFIG";

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_flag(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(Error::Config(format!(
            "invalid value {other:?} for {key}; expected true or false"
        ))),
    }
}

impl RunConfig {
    /// Applies one key=value setting. Keys mirror the CLI flag names.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "events" => self.events = Some(PathBuf::from(value)),
            "roster" => self.roster = Some(PathBuf::from(value)),
            "outcome_map" => self.outcome_map = Some(PathBuf::from(value)),
            "out" => self.out_dir = PathBuf::from(value),
            "format" => self.format = OutputFormat::parse(value.trim())?,
            "type" => self.type_filter = TypeFilter::parse(value.trim())?,
            "alpha" => self.alpha = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "resamples" => self.resamples = parse_num(key, value)?,
            "window_s" => self.window_s = parse_num(key, value)?,
            "step_s" => self.step_s = parse_num(key, value)?,
            "holm" => self.holm = parse_flag(key, value)?,
            "kw_unit" => {
                self.kw_unit = match value.trim() {
                    "player" => KwUnit::Player,
                    "position" => KwUnit::Position,
                    other => {
                        return Err(Error::Config(format!(
                            "invalid value {other:?} for kw_unit; expected player or position"
                        )))
                    }
                }
            }
            "snapshots" => self.snapshots = parse_flag(key, value)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies a key=value config file. Blank lines and lines starting
    /// with '#' are skipped; everything after the first '=' is the value.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "{}:{}: expected key=value, got {line:?}",
                    path.display(),
                    lineno + 1
                ))
            })?;
            self.apply_kv(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Builds the base configuration before command-line overrides: the
    /// defaults, plus the config file at `config_path` if given, else the
    /// file named by TEMPORAL_FLOW_CONFIG if that variable is set.
    pub fn load_base(config_path: Option<&Path>) -> Result<RunConfig> {
        let mut config = RunConfig::default();
        let env_path = std::env::var(CONFIG_ENV).ok().filter(|s| !s.is_empty());
        let path = config_path
            .map(Path::to_path_buf)
            .or_else(|| env_path.map(PathBuf::from));
        if let Some(path) = path {
            config.apply_file(&path)?;
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha must be in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.resamples < 2 {
            return Err(Error::Config(format!(
                "resamples must be at least 2, got {}",
                self.resamples
            )));
        }
        WindowConfig::new(self.window_s, self.step_s)?;
        Ok(())
    }

    fn scan_correction(&self) -> ScanCorrection {
        if self.holm {
            ScanCorrection::Holm
        } else {
            ScanCorrection::None
        }
    }
}

/// Parsed, filtered, outcome-classified, and windowed input, shared by
/// all stages of one run. `scored` always holds both possession types;
/// stages narrow it with the run's type filter.
#[derive(Debug)]
pub struct LoadedData {
    pub dataset: Dataset,
    pub scored: Vec<ScoredPossession>,
    pub log: FilterLog,
    pub index: PositionIndex,
    pub window: WindowConfig,
    pub mapping_source: String,
}

impl LoadedData {
    /// Clones the scored possessions of one type, preserving order.
    pub fn of_type(&self, t: PossessionType) -> Vec<ScoredPossession> {
        self.scored
            .iter()
            .filter(|sp| sp.possession_type == t)
            .cloned()
            .collect()
    }

    /// Clones the scored possessions covered by the filter, in input
    /// order (not grouped by type).
    pub fn selected(&self, filter: TypeFilter) -> Vec<ScoredPossession> {
        self.scored
            .iter()
            .filter(|sp| filter.includes(sp.possession_type))
            .cloned()
            .collect()
    }
}

/// Loads and prepares everything a run needs. Possessions shorter than
/// one window are excluded, so the duration floor is the window length.
pub fn load(config: &RunConfig) -> Result<LoadedData> {
    let events = config
        .events
        .as_deref()
        .ok_or_else(|| Error::Config("no events file; pass --events or set events=".into()))?;
    let roster = config
        .roster
        .as_deref()
        .ok_or_else(|| Error::Config("no roster file; pass --roster or set roster=".into()))?;
    let dataset = parse_dataset(events, roster)?;
    let mapping = match &config.outcome_map {
        Some(path) => OutcomeMapping::from_path(path)?,
        None => OutcomeMapping::builtin(),
    };
    let window = WindowConfig::new(config.window_s, config.step_s)?;
    let set = filter_and_categorize(&dataset, config.window_s);
    let scored = score_analysis_set(&set, &mapping, &window)?;
    let index = dataset.position_index();
    Ok(LoadedData {
        scored,
        log: set.log,
        index,
        window,
        mapping_source: mapping.source().to_string(),
        dataset,
    })
}

/// Validation and accounting summary written by the ingest stage.
#[derive(Debug, Clone, Serialize)]
pub struct IngestReport {
    pub provenance: Provenance,
    pub outcome_source: String,
    pub filter: FilterLog,
    /// Analysis-set possessions per type.
    pub possession_types: BTreeMap<&'static str, usize>,
    /// Analysis-set possessions per classified outcome.
    pub outcomes: BTreeMap<&'static str, usize>,
    /// Windows over the whole analysis set.
    pub snapshots: usize,
    pub teams: usize,
    pub players: usize,
}

pub fn ingest_report(data: &LoadedData) -> IngestReport {
    let mut possession_types = BTreeMap::new();
    let mut outcomes = BTreeMap::new();
    let mut snapshots = 0;
    for sp in &data.scored {
        *possession_types.entry(sp.possession_type.as_str()).or_insert(0) += 1;
        *outcomes.entry(sp.outcome.as_str()).or_insert(0) += 1;
        snapshots += sp.windows.len();
    }
    IngestReport {
        provenance: data.dataset.provenance.clone(),
        outcome_source: data.mapping_source.clone(),
        filter: data.log.clone(),
        possession_types,
        outcomes,
        snapshots,
        teams: data.dataset.rosters.len(),
        players: data.dataset.rosters.values().map(Vec::len).sum(),
    }
}

/// One row of a tabular output; `HEADER` and `record` define its CSV
/// form, Serialize its JSON form.
pub trait TableRow: Serialize {
    const HEADER: &'static [&'static str];
    fn record(&self) -> Vec<String>;
}

fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

fn fmt_opt<T: std::fmt::Display>(x: &Option<T>) -> String {
    x.as_ref().map(|v| v.to_string()).unwrap_or_default()
}

/// Graphlet class distribution for one (type, position, clock) cell.
/// Position is empty for the macro (all-window) profile. Every cell
/// emits all ten class rows so downstream joins never miss zeros.
#[derive(Debug, Clone, Serialize)]
pub struct ProfileRow {
    pub possession_type: &'static str,
    pub shot_clock_s: f64,
    pub position: &'static str,
    pub class: &'static str,
    pub count: u64,
    pub frequency: f64,
}

impl TableRow for ProfileRow {
    const HEADER: &'static [&'static str] = &[
        "possession_type",
        "shot_clock_s",
        "position",
        "class",
        "count",
        "frequency",
    ];

    fn record(&self) -> Vec<String> {
        vec![
            self.possession_type.to_string(),
            fmt_f64(self.shot_clock_s),
            self.position.to_string(),
            self.class.to_string(),
            self.count.to_string(),
            fmt_f64(self.frequency),
        ]
    }
}

/// State entropy for one (type, position, clock) cell, in bits.
#[derive(Debug, Clone, Serialize)]
pub struct EntropyRow {
    pub possession_type: &'static str,
    pub shot_clock_s: f64,
    pub position: &'static str,
    pub entropy_bits: f64,
    pub n_windows: u64,
}

impl TableRow for EntropyRow {
    const HEADER: &'static [&'static str] = &[
        "possession_type",
        "shot_clock_s",
        "position",
        "entropy_bits",
        "n_windows",
    ];

    fn record(&self) -> Vec<String> {
        vec![
            self.possession_type.to_string(),
            fmt_f64(self.shot_clock_s),
            self.position.to_string(),
            fmt_f64(self.entropy_bits),
            self.n_windows.to_string(),
        ]
    }
}

fn typed_snapshots(data: &LoadedData, t: PossessionType) -> Vec<&Snapshot> {
    data.scored
        .iter()
        .filter(|sp| sp.possession_type == t)
        .flat_map(|sp| sp.windows.iter())
        .collect()
}

/// Per-clock profile cells for one type: the macro profile first, then
/// one entry per position, clocks descending within each.
fn profile_cells<'a>(
    snapshots: &[&'a Snapshot],
    index: &PositionIndex,
) -> Result<Vec<(&'static str, BTreeMap<ClockKey, GraphletProfile>)>> {
    let mut cells = Vec::with_capacity(1 + Position::ALL.len());
    cells.push(("", build_profiles(snapshots.iter().copied(), Snapshot::clock_key)?));
    for position in Position::ALL {
        let profiles = individual_profiles(snapshots.iter().copied(), position, index)?;
        cells.push((position.as_str(), profiles));
    }
    Ok(cells)
}

pub fn profile_rows(data: &LoadedData, filter: TypeFilter) -> Result<Vec<ProfileRow>> {
    let mut rows = Vec::new();
    for t in filter.selected() {
        let snapshots = typed_snapshots(data, t);
        if snapshots.is_empty() {
            continue;
        }
        for (position, profiles) in profile_cells(&snapshots, &data.index)? {
            for (clock, profile) in profiles.iter().rev() {
                let total = profile.total();
                for class in GraphletClass::ALL {
                    let count = profile.count(class);
                    rows.push(ProfileRow {
                        possession_type: t.as_str(),
                        shot_clock_s: clock.as_secs(),
                        position,
                        class: class.label(),
                        count,
                        frequency: count as f64 / total as f64,
                    });
                }
            }
        }
    }
    Ok(rows)
}

pub fn entropy_rows(data: &LoadedData, filter: TypeFilter) -> Result<Vec<EntropyRow>> {
    let mut rows = Vec::new();
    for t in filter.selected() {
        let snapshots = typed_snapshots(data, t);
        if snapshots.is_empty() {
            continue;
        }
        for (position, profiles) in profile_cells(&snapshots, &data.index)? {
            for (clock, profile) in profiles.iter().rev() {
                rows.push(EntropyRow {
                    possession_type: t.as_str(),
                    shot_clock_s: clock.as_secs(),
                    position,
                    entropy_bits: state_entropy(profile)?,
                    n_windows: profile.total(),
                });
            }
        }
    }
    Ok(rows)
}

/// Sequential scan outcome for one starting clock value: the first later
/// clock whose macro profile differs at the run's alpha, if any.
#[derive(Debug, Clone, Serialize)]
pub struct ScanRow {
    pub possession_type: &'static str,
    pub shot_clock_s: f64,
    pub first_diff_s: Option<f64>,
    pub p_value: Option<f64>,
    pub comparisons: u64,
}

impl TableRow for ScanRow {
    const HEADER: &'static [&'static str] = &[
        "possession_type",
        "shot_clock_s",
        "first_diff_s",
        "p_value",
        "comparisons",
    ];

    fn record(&self) -> Vec<String> {
        vec![
            self.possession_type.to_string(),
            fmt_f64(self.shot_clock_s),
            fmt_opt(&self.first_diff_s),
            fmt_opt(&self.p_value),
            self.comparisons.to_string(),
        ]
    }
}

pub fn scan_rows(data: &LoadedData, config: &RunConfig, filter: TypeFilter) -> Result<Vec<ScanRow>> {
    let mut rows = Vec::new();
    for t in filter.selected() {
        let snapshots = typed_snapshots(data, t);
        if snapshots.is_empty() {
            continue;
        }
        let profiles = build_profiles(snapshots.iter().copied(), Snapshot::clock_key)?;
        let ordered: Vec<(ClockKey, GraphletProfile)> = profiles.into_iter().rev().collect();
        let entries = sequential_profile_scan(&ordered, config.alpha, config.scan_correction())?;
        for entry in entries {
            rows.push(ScanRow {
                possession_type: t.as_str(),
                shot_clock_s: entry.clock.as_secs(),
                first_diff_s: entry.first_diff.map(ClockKey::as_secs),
                p_value: entry.p_at_diff,
                comparisons: entry.comparisons as u64,
            });
        }
    }
    Ok(rows)
}

/// One flow-metric value. Overall rows leave `shot_clock_s` empty; the
/// per-clock series rows fill it. FBFC rows carry no interval, and their
/// mean is empty when FC is zero (the ratio is undefined there).
#[derive(Debug, Clone, Serialize)]
pub struct MetricRow {
    pub subject: String,
    pub subject_kind: &'static str,
    pub level: &'static str,
    pub possession_type: &'static str,
    pub metric: &'static str,
    pub shot_clock_s: Option<f64>,
    pub mean: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub n: u64,
}

impl TableRow for MetricRow {
    const HEADER: &'static [&'static str] = &[
        "subject",
        "subject_kind",
        "level",
        "possession_type",
        "metric",
        "shot_clock_s",
        "mean",
        "ci_low",
        "ci_high",
        "n",
    ];

    fn record(&self) -> Vec<String> {
        vec![
            self.subject.clone(),
            self.subject_kind.to_string(),
            self.level.to_string(),
            self.possession_type.to_string(),
            self.metric.to_string(),
            fmt_opt(&self.shot_clock_s),
            fmt_opt(&self.mean),
            fmt_opt(&self.ci_low),
            fmt_opt(&self.ci_high),
            self.n.to_string(),
        ]
    }
}

const RATIO_METRIC: &str = "FBFC";

/// All subjects of a run: the five positions, then every rostered player
/// in roster order.
fn subjects(data: &LoadedData) -> Vec<Subject> {
    let mut out: Vec<Subject> = Position::ALL.iter().map(|p| Subject::position(*p)).collect();
    for (team, players) in &data.dataset.rosters {
        for p in players {
            out.push(Subject::player(team.clone(), p.player_id.clone()));
        }
    }
    out
}

pub fn metric_rows(data: &LoadedData, filter: TypeFilter) -> Result<Vec<MetricRow>> {
    let mut rows = Vec::new();
    for t in filter.selected() {
        let typed = data.of_type(t);
        if typed.is_empty() {
            continue;
        }
        let possessions: Vec<_> = typed.iter().map(|sp| &sp.possession).collect();
        let snapshots: Vec<Snapshot> =
            typed.iter().flat_map(|sp| sp.windows.iter().cloned()).collect();
        for subject in subjects(data) {
            let agg = game_aggregate(&subject, &possessions, &snapshots, &data.index)?;
            let label = subject.label();
            let kind = subject.kind_str();
            let point_row = |level: &'static str, metric: &'static str, p: crate::metrics::ProportionPoint| MetricRow {
                subject: label.clone(),
                subject_kind: kind,
                level,
                possession_type: t.as_str(),
                metric,
                shot_clock_s: None,
                mean: Some(p.mean),
                ci_low: Some(p.ci_low),
                ci_high: Some(p.ci_high),
                n: p.n,
            };
            rows.push(point_row("play", MetricKind::Fc.as_str(), agg.play_fc));
            rows.push(point_row("play", MetricKind::Fb.as_str(), agg.play_fb));
            rows.push(MetricRow {
                subject: label.clone(),
                subject_kind: kind,
                level: "play",
                possession_type: t.as_str(),
                metric: RATIO_METRIC,
                shot_clock_s: None,
                mean: fb_fc_ratio(agg.play_fb.mean, agg.play_fc.mean),
                ci_low: None,
                ci_high: None,
                n: agg.play_fc.n,
            });
            rows.push(point_row("graphlet", MetricKind::Fc.as_str(), agg.adapted_fc));
            rows.push(point_row("graphlet", MetricKind::Fb.as_str(), agg.adapted_fb));
            rows.push(MetricRow {
                subject: label.clone(),
                subject_kind: kind,
                level: "graphlet",
                possession_type: t.as_str(),
                metric: RATIO_METRIC,
                shot_clock_s: None,
                mean: fb_fc_ratio(agg.adapted_fb.mean, agg.adapted_fc.mean),
                ci_low: None,
                ci_high: None,
                n: agg.adapted_fc.n,
            });
            // Per-clock series only for positions; per-player curves are
            // large and derivable on demand.
            if matches!(subject, Subject::Position(_)) {
                for kind_m in MetricKind::BOTH {
                    let series = metric_series(&subject, &snapshots, kind_m, &data.index);
                    for p in series.points {
                        rows.push(MetricRow {
                            subject: label.clone(),
                            subject_kind: kind,
                            level: "graphlet",
                            possession_type: t.as_str(),
                            metric: kind_m.as_str(),
                            shot_clock_s: Some(p.clock.as_secs()),
                            mean: Some(p.mean),
                            ci_low: Some(p.ci_low),
                            ci_high: Some(p.ci_high),
                            n: p.n,
                        });
                    }
                }
            }
        }
    }
    Ok(rows)
}

/// Per-game position aggregate, the unit behind game-level comparisons.
#[derive(Debug, Clone, Serialize)]
pub struct GameMetricRow {
    pub game_id: String,
    pub position: &'static str,
    pub possession_type: &'static str,
    pub level: &'static str,
    pub metric: &'static str,
    pub mean: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub n: u64,
}

impl TableRow for GameMetricRow {
    const HEADER: &'static [&'static str] = &[
        "game_id",
        "position",
        "possession_type",
        "level",
        "metric",
        "mean",
        "ci_low",
        "ci_high",
        "n",
    ];

    fn record(&self) -> Vec<String> {
        vec![
            self.game_id.clone(),
            self.position.to_string(),
            self.possession_type.to_string(),
            self.level.to_string(),
            self.metric.to_string(),
            fmt_opt(&self.mean),
            fmt_opt(&self.ci_low),
            fmt_opt(&self.ci_high),
            self.n.to_string(),
        ]
    }
}

pub fn game_metric_rows(data: &LoadedData, filter: TypeFilter) -> Result<Vec<GameMetricRow>> {
    let mut rows = Vec::new();
    for t in filter.selected() {
        let typed = data.of_type(t);
        let mut by_game: BTreeMap<&str, Vec<&ScoredPossession>> = BTreeMap::new();
        for sp in &typed {
            by_game.entry(sp.possession.game_id.as_str()).or_default().push(sp);
        }
        for (game_id, game) in by_game {
            let possessions: Vec<_> = game.iter().map(|sp| &sp.possession).collect();
            let snapshots: Vec<Snapshot> =
                game.iter().flat_map(|sp| sp.windows.iter().cloned()).collect();
            if snapshots.is_empty() {
                continue;
            }
            for position in Position::ALL {
                let subject = Subject::position(position);
                let agg = game_aggregate(&subject, &possessions, &snapshots, &data.index)?;
                let mut push = |level: &'static str,
                                metric: &'static str,
                                mean: Option<f64>,
                                ci: Option<(f64, f64)>,
                                n: u64| {
                    rows.push(GameMetricRow {
                        game_id: game_id.to_string(),
                        position: position.as_str(),
                        possession_type: t.as_str(),
                        level,
                        metric,
                        mean,
                        ci_low: ci.map(|c| c.0),
                        ci_high: ci.map(|c| c.1),
                        n,
                    });
                };
                let fc = agg.play_fc;
                let fb = agg.play_fb;
                push("play", "FC", Some(fc.mean), Some((fc.ci_low, fc.ci_high)), fc.n);
                push("play", "FB", Some(fb.mean), Some((fb.ci_low, fb.ci_high)), fb.n);
                push("play", RATIO_METRIC, fb_fc_ratio(fb.mean, fc.mean), None, fc.n);
                let fc = agg.adapted_fc;
                let fb = agg.adapted_fb;
                push("graphlet", "FC", Some(fc.mean), Some((fc.ci_low, fc.ci_high)), fc.n);
                push("graphlet", "FB", Some(fb.mean), Some((fb.ci_low, fb.ci_high)), fb.n);
                push("graphlet", RATIO_METRIC, fb_fc_ratio(fb.mean, fc.mean), None, fc.n);
            }
        }
    }
    Ok(rows)
}

/// One statistical test. `flags` is a semicolon-joined list of validity
/// warnings and corrections applied.
#[derive(Debug, Clone, Serialize)]
pub struct TestRow {
    pub test_kind: &'static str,
    pub scope: String,
    pub statistic: Option<f64>,
    pub df: Option<u64>,
    pub p_value: Option<f64>,
    pub effect: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub n: u64,
    pub flags: String,
}

impl TableRow for TestRow {
    const HEADER: &'static [&'static str] = &[
        "test_kind",
        "scope",
        "statistic",
        "df",
        "p_value",
        "effect",
        "ci_low",
        "ci_high",
        "n",
        "flags",
    ];

    fn record(&self) -> Vec<String> {
        vec![
            self.test_kind.to_string(),
            self.scope.clone(),
            fmt_opt(&self.statistic),
            fmt_opt(&self.df),
            fmt_opt(&self.p_value),
            fmt_opt(&self.effect),
            fmt_opt(&self.ci_low),
            fmt_opt(&self.ci_high),
            self.n.to_string(),
            self.flags.clone(),
        ]
    }
}

fn join_flags(flags: &[crate::stats::Flag]) -> String {
    flags.iter().map(|f| f.as_str()).collect::<Vec<_>>().join(";")
}

fn result_row(scope: String, r: &crate::stats::TestResult) -> TestRow {
    TestRow {
        test_kind: r.kind.as_str(),
        scope,
        statistic: Some(r.statistic),
        df: r.df,
        p_value: Some(r.p_value),
        effect: r.effect,
        ci_low: r.ci95.map(|c| c.0),
        ci_high: r.ci95.map(|c| c.1),
        n: r.n,
        flags: join_flags(&r.flags),
    }
}

/// Outcome-by-type table over the full analysis set: rows ball-in and
/// ball-out, columns negative and positive, neutral possessions dropped.
fn outcome_by_type_row(data: &LoadedData) -> Result<Option<TestRow>> {
    let mut table = [[0u64; 2]; 2];
    for sp in &data.scored {
        let row = match sp.possession_type {
            PossessionType::BallIn => 0,
            PossessionType::BallOut => 1,
        };
        let col = match sp.outcome {
            Outcome::Negative => 0,
            Outcome::Positive => 1,
            Outcome::Neutral => continue,
        };
        table[row][col] += 1;
    }
    if table[0].iter().sum::<u64>() == 0 || table[1].iter().sum::<u64>() == 0 {
        return Ok(None);
    }
    let table = ContingencyTable::new(table.iter().map(|r| r.to_vec()).collect())?;
    match chi2_independence_corrected(&table) {
        Ok(r) => Ok(Some(result_row("outcome_by_type".to_string(), &r))),
        Err(Error::DegenerateTable(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn test_rows(data: &LoadedData, config: &RunConfig, filter: TypeFilter) -> Result<Vec<TestRow>> {
    let mut rows = Vec::new();
    if filter == TypeFilter::Both {
        if let Some(row) = outcome_by_type_row(data)? {
            rows.push(row);
        }
    }

    // Rank tests: do the five positions differ in involvement, per
    // level, metric, and type.
    for level in UnitLevel::BOTH {
        for metric in MetricKind::BOTH {
            for t in filter.selected() {
                let typed = data.of_type(t);
                if typed.is_empty() {
                    continue;
                }
                let groups =
                    position_indicator_groups(&typed, level, metric, config.kw_unit, &data.index);
                if groups.iter().any(Vec::is_empty) {
                    continue;
                }
                let kw = kruskal_wallis(&groups)?;
                let eta = eta_squared_ci(&groups, config.resamples, config.seed)?;
                let scope = format!(
                    "positions/{}/{}/{}",
                    level.as_str(),
                    metric.as_str(),
                    t.as_str()
                );
                rows.push(TestRow {
                    test_kind: kw.kind.as_str(),
                    scope,
                    statistic: Some(kw.statistic),
                    df: kw.df,
                    p_value: Some(kw.p_value),
                    effect: Some(eta.estimate),
                    ci_low: Some(eta.ci95.0),
                    ci_high: Some(eta.ci95.1),
                    n: kw.n,
                    flags: join_flags(&kw.flags),
                });
            }
        }
    }

    // Involvement-by-outcome association per position, with the odds
    // ratio alongside each contingency test.
    let selected = data.selected(filter);
    for level in UnitLevel::BOTH {
        for assoc in outcome_association_suite(&selected, level, &data.index)? {
            if assoc.n == 0 {
                continue;
            }
            let scope = format!(
                "involvement/{}/{}/{}/{}",
                level.as_str(),
                assoc.metric.as_str(),
                assoc.possession_type.as_str(),
                assoc.position.as_str()
            );
            match &assoc.chi2 {
                Some(r) => rows.push(result_row(scope.clone(), r)),
                None => rows.push(TestRow {
                    test_kind: "chi2",
                    scope: scope.clone(),
                    statistic: None,
                    df: None,
                    p_value: None,
                    effect: None,
                    ci_low: None,
                    ci_high: None,
                    n: assoc.n,
                    flags: "degenerate_table".to_string(),
                }),
            }
            if let Some(r) = &assoc.odds {
                rows.push(result_row(scope, r));
            }
        }
    }
    Ok(rows)
}

/// One window of the optional snapshot dump.
#[derive(Debug, Clone, Serialize)]
pub struct SnapshotRow {
    pub possession_id: String,
    pub k: u64,
    pub t_start_s: f64,
    pub shot_clock_s: f64,
    pub carrier: String,
    pub pass_count: u64,
    /// Window node set, semicolon-joined in lexical order.
    pub node_ids: String,
}

impl TableRow for SnapshotRow {
    const HEADER: &'static [&'static str] = &[
        "possession_id",
        "k",
        "t_start_s",
        "shot_clock_s",
        "carrier",
        "pass_count",
        "node_ids",
    ];

    fn record(&self) -> Vec<String> {
        vec![
            self.possession_id.clone(),
            self.k.to_string(),
            fmt_f64(self.t_start_s),
            fmt_f64(self.shot_clock_s),
            self.carrier.clone(),
            self.pass_count.to_string(),
            self.node_ids.clone(),
        ]
    }
}

pub fn snapshot_rows(data: &LoadedData, filter: TypeFilter) -> Vec<SnapshotRow> {
    let mut rows = Vec::new();
    for sp in &data.scored {
        if !filter.includes(sp.possession_type) {
            continue;
        }
        for s in &sp.windows {
            rows.push(SnapshotRow {
                possession_id: s.possession_id.clone(),
                k: s.k as u64,
                t_start_s: s.t_start,
                shot_clock_s: s.shot_clock_at_start,
                carrier: s.carrier_at_start.clone(),
                pass_count: s.passes.len() as u64,
                node_ids: s.nodes().into_iter().collect::<Vec<_>>().join(";"),
            });
        }
    }
    rows
}

/// Everything a full run produces, bundled for `report.json`.
#[derive(Debug, Clone, Serialize)]
pub struct ReportBundle {
    /// Crate version that produced the bundle.
    pub version: &'static str,
    pub config: RunConfig,
    pub ingest: IngestReport,
    pub profiles: Vec<ProfileRow>,
    pub entropy: Vec<EntropyRow>,
    pub scan: Vec<ScanRow>,
    pub metrics: Vec<MetricRow>,
    pub game_metrics: Vec<GameMetricRow>,
    pub tests: Vec<TestRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshots: Option<Vec<SnapshotRow>>,
}

pub fn report_bundle(data: &LoadedData, config: &RunConfig) -> Result<ReportBundle> {
    let filter = config.type_filter;
    Ok(ReportBundle {
        version: env!("CARGO_PKG_VERSION"),
        config: config.clone(),
        ingest: ingest_report(data),
        profiles: profile_rows(data, filter)?,
        entropy: entropy_rows(data, filter)?,
        scan: scan_rows(data, config, filter)?,
        metrics: metric_rows(data, filter)?,
        game_metrics: game_metric_rows(data, filter)?,
        tests: test_rows(data, config, filter)?,
        snapshots: config.snapshots.then(|| snapshot_rows(data, filter)),
    })
}

pub fn rows_to_csv<R: TableRow>(rows: &[R]) -> Result<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| Error::Csv {
        path: "<csv writer>".to_string(),
        source: e,
    };
    writer.write_record(R::HEADER).map_err(wrap)?;
    for row in rows {
        writer.write_record(row.record()).map_err(wrap)?;
    }
    writer.into_inner().map_err(|e| Error::Io {
        path: "<csv writer>".to_string(),
        source: e.into_error(),
    })
}

pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| Error::Data(format!("json serialization failed: {e}")))?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn rows_bytes<R: TableRow>(rows: &[R], format: OutputFormat) -> Result<Vec<u8>> {
    match format {
        OutputFormat::Csv => rows_to_csv(rows),
        OutputFormat::Json => to_json(&rows),
    }
}

/// Writes bytes to `path`, creating parent directories and syncing the
/// file so reruns compare complete outputs.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let wrap = |e: std::io::Error| Error::Io {
        path: path.display().to_string(),
        source: e,
    };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(wrap)?;
        }
    }
    let mut file = File::create(path).map_err(wrap)?;
    file.write_all(bytes).map_err(wrap)?;
    file.sync_all().map_err(wrap)?;
    Ok(())
}

fn write_rows<R: TableRow>(
    out_dir: &Path,
    stem: &str,
    rows: &[R],
    format: OutputFormat,
    written: &mut Vec<PathBuf>,
) -> Result<()> {
    let path = out_dir.join(format!("{stem}.{}", format.extension()));
    write_file(&path, &rows_bytes(rows, format)?)?;
    written.push(path);
    Ok(())
}

pub fn cmd_ingest(config: &RunConfig) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let data = load(config)?;
    let path = config.out_dir.join("ingest.json");
    write_file(&path, &to_json(&ingest_report(&data))?)?;
    Ok(vec![path])
}

pub fn cmd_profiles(config: &RunConfig) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let data = load(config)?;
    let filter = config.type_filter;
    let mut written = Vec::new();
    write_rows(&config.out_dir, "profiles", &profile_rows(&data, filter)?, config.format, &mut written)?;
    write_rows(&config.out_dir, "entropy", &entropy_rows(&data, filter)?, config.format, &mut written)?;
    if config.snapshots {
        write_rows(&config.out_dir, "snapshots", &snapshot_rows(&data, filter), config.format, &mut written)?;
    }
    Ok(written)
}

pub fn cmd_scan(config: &RunConfig) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let data = load(config)?;
    let mut written = Vec::new();
    write_rows(&config.out_dir, "scan", &scan_rows(&data, config, config.type_filter)?, config.format, &mut written)?;
    Ok(written)
}

pub fn cmd_metrics(config: &RunConfig) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let data = load(config)?;
    let filter = config.type_filter;
    let mut written = Vec::new();
    write_rows(&config.out_dir, "metrics", &metric_rows(&data, filter)?, config.format, &mut written)?;
    write_rows(&config.out_dir, "game_metrics", &game_metric_rows(&data, filter)?, config.format, &mut written)?;
    Ok(written)
}

pub fn cmd_tests(config: &RunConfig) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let data = load(config)?;
    let mut written = Vec::new();
    write_rows(&config.out_dir, "tests", &test_rows(&data, config, config.type_filter)?, config.format, &mut written)?;
    Ok(written)
}

pub fn cmd_report(config: &RunConfig) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let data = load(config)?;
    let bundle = report_bundle(&data, config)?;
    let mut written = Vec::new();
    let out = &config.out_dir;
    write_file(&out.join("ingest.json"), &to_json(&bundle.ingest)?)?;
    written.push(out.join("ingest.json"));
    write_rows(out, "profiles", &bundle.profiles, config.format, &mut written)?;
    write_rows(out, "entropy", &bundle.entropy, config.format, &mut written)?;
    write_rows(out, "scan", &bundle.scan, config.format, &mut written)?;
    write_rows(out, "metrics", &bundle.metrics, config.format, &mut written)?;
    write_rows(out, "game_metrics", &bundle.game_metrics, config.format, &mut written)?;
    write_rows(out, "tests", &bundle.tests, config.format, &mut written)?;
    if let Some(snapshots) = &bundle.snapshots {
        write_rows(out, "snapshots", snapshots, config.format, &mut written)?;
    }
    let report_path = out.join("report.json");
    write_file(&report_path, &to_json(&bundle)?)?;
    written.push(report_path);
    Ok(written)
}

/// Generates a synthetic dataset seeded by the run config and writes it
/// as an events/roster file pair ready for re-ingestion.
pub fn cmd_synth(config: &RunConfig, n_possessions: Option<usize>) -> Result<Vec<PathBuf>> {
    let synth = SynthConfig {
        seed: config.seed,
        n_possessions: n_possessions.unwrap_or(SynthConfig::default().n_possessions),
        ..SynthConfig::default()
    };
    let dataset = generate(&synth)?;
    let mut events = Vec::new();
    write_events_csv(&dataset.possessions, &mut events)?;
    let mut roster = Vec::new();
    write_roster_csv(&dataset.rosters, &mut roster)?;
    let events_path = config.out_dir.join("events.csv");
    let roster_path = config.out_dir.join("roster.csv");
    write_file(&events_path, &events)?;
    write_file(&roster_path, &roster)?;
    Ok(vec![events_path, roster_path])
}
