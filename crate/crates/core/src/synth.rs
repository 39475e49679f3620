//! Seeded synthetic possession generator.
//!
//! Possessions are drawn from a three-phase Poisson passing process: the
//! shot clock is split at two configurable boundaries and each phase has
//! its own pass rate, so datasets can be generated with known regime
//! changes for the scan and entropy machinery to recover. Receiver choice
//! follows a position-bias matrix, outcomes follow a Bernoulli model that
//! can optionally depend on one position's involvement.
//!
//! Every possession runs on its own RNG substream derived from the seed,
//! so output is reproducible bit for bit and independent of generation
//! order.

use std::collections::BTreeMap;

use rand::distributions::WeightedIndex;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;

use crate::data::{
    round_ms, Dataset, PassEvent, PlayerRef, Position, Possession, Provenance, StartBall,
    StartHalf,
};
use crate::error::{Error, Result};

/// Outcome model: neutral with probability `p_neutral`, otherwise
/// positive with probability `p_positive`, shifted by `delta` when the
/// bias position touches the ball during the possession.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeModel {
    pub p_positive: f64,
    pub p_neutral: f64,
    pub involvement_bias: Option<InvolvementBias>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InvolvementBias {
    pub position: Position,
    /// Added to `p_positive` when the position is involved.
    pub delta: f64,
}

impl Default for OutcomeModel {
    fn default() -> Self {
        OutcomeModel { p_positive: 0.35, p_neutral: 0.04, involvement_bias: None }
    }
}

/// Generator parameters. Phase 1 covers shot clock values above
/// `phase_bounds.0`, phase 2 the values down to `phase_bounds.1`, phase 3
/// the rest; `pass_rates` are passes per second in each phase.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_possessions: usize,
    pub n_teams: usize,
    pub players_per_position: usize,
    pub possessions_per_game: usize,
    pub duration_min: f64,
    pub duration_max: f64,
    /// Shot clock at possession start, on the 0.5s grid.
    pub shot_clock_start: f64,
    /// (upper, lower) shot-clock phase boundaries, strictly decreasing
    /// inside (6, 24).
    pub phase_bounds: (f64, f64),
    pub pass_rates: [f64; 3],
    /// Row i: probability distribution over the receiver's position when
    /// a player of position i passes. Rows sum to 1.
    pub position_bias: [[f64; 5]; 5],
    /// Relative weight of each position as initial carrier.
    pub carrier_weights: [f64; 5],
    /// Probability a possession starts with an inbound (ball out).
    pub p_ball_out: f64,
    /// Probability a possession starts in the offensive half.
    pub p_offensive_half: f64,
    pub outcome: OutcomeModel,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            n_possessions: 200,
            n_teams: 2,
            players_per_position: 2,
            possessions_per_game: 50,
            duration_min: 6.5,
            duration_max: 16.0,
            shot_clock_start: 24.0,
            phase_bounds: (19.5, 10.5),
            pass_rates: [0.3, 0.7, 0.4],
            position_bias: [[0.2; 5]; 5],
            carrier_weights: [0.4, 0.25, 0.15, 0.1, 0.1],
            p_ball_out: 0.65,
            p_offensive_half: 0.12,
            outcome: OutcomeModel::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n_teams == 0 || self.players_per_position == 0 || self.possessions_per_game == 0 {
            return fail("team, player, and game counts must be positive".to_string());
        }
        if !(self.duration_min.is_finite() && self.duration_max.is_finite())
            || self.duration_min > self.duration_max
        {
            return fail(format!(
                "duration range [{}, {}] is invalid",
                self.duration_min, self.duration_max
            ));
        }
        // Inbound passes land in [0.2, 1.2]; keep them inside the span.
        if self.duration_min < 1.5 {
            return fail(format!("duration_min must be at least 1.5s, got {}", self.duration_min));
        }
        if !(self.shot_clock_start > 0.0 && self.shot_clock_start <= 24.0)
            || (self.shot_clock_start * 2.0).fract().abs() > 1e-9
        {
            return fail(format!(
                "shot_clock_start must lie on the 0.5s grid in (0, 24], got {}",
                self.shot_clock_start
            ));
        }
        if self.duration_max > self.shot_clock_start {
            return fail(format!(
                "duration_max {} exceeds the starting shot clock {}",
                self.duration_max, self.shot_clock_start
            ));
        }
        let (b1, b2) = self.phase_bounds;
        if !(b1 > b2 && b2 > 6.0 && b1 < 24.0) {
            return fail(format!(
                "phase bounds must satisfy 24 > {b1} > {b2} > 6"
            ));
        }
        if self.pass_rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return fail(format!("pass rates must be non-negative, got {:?}", self.pass_rates));
        }
        for (i, row) in self.position_bias.iter().enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return fail(format!("position_bias row {i} has a negative entry"));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return fail(format!("position_bias row {i} sums to {sum}, expected 1"));
            }
        }
        if self.carrier_weights.iter().any(|w| !w.is_finite() || *w < 0.0)
            || self.carrier_weights.iter().sum::<f64>() <= 0.0
        {
            return fail("carrier_weights need a positive total".to_string());
        }
        for (name, p) in [
            ("p_ball_out", self.p_ball_out),
            ("p_offensive_half", self.p_offensive_half),
            ("p_positive", self.outcome.p_positive),
            ("p_neutral", self.outcome.p_neutral),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("{name} must be in [0, 1], got {p}"));
            }
        }
        if let Some(b) = self.outcome.involvement_bias {
            if !(-1.0..=1.0).contains(&b.delta) {
                return fail(format!("involvement bias delta must be in [-1, 1], got {}", b.delta));
            }
        }
        Ok(())
    }
}

fn phase_index(clock: f64, bounds: (f64, f64)) -> usize {
    if clock > bounds.0 {
        0
    } else if clock > bounds.1 {
        1
    } else {
        2
    }
}

/// Next pass time after `t`, under the phase-wise exponential process.
/// Crossing into a new phase restarts the draw at the boundary, which by
/// memorylessness makes each phase an exact Poisson stretch.
fn next_pass_time(
    rng: &mut ChaCha12Rng,
    mut t: f64,
    duration: f64,
    clock_start: f64,
    bounds: (f64, f64),
    rates: [f64; 3],
) -> Option<f64> {
    loop {
        let clock = clock_start - t;
        let phase = phase_index(clock, bounds);
        let phase_end = match phase {
            0 => clock_start - bounds.0,
            1 => clock_start - bounds.1,
            _ => f64::INFINITY,
        };
        let rate = rates[phase];
        if rate > 0.0 {
            let dt = Exp::new(rate).expect("rate is positive").sample(rng);
            if t + dt < phase_end.min(duration) {
                return Some(t + dt);
            }
        }
        if phase_end >= duration {
            return None;
        }
        t = phase_end;
    }
}

struct Team {
    id: String,
    /// Player ids grouped by position, `Position::ALL` order.
    by_position: [Vec<String>; 5],
}

/// Generates a dataset from the config. Identical configs produce
/// identical datasets; each possession consumes its own RNG substream.
pub fn generate(config: &SynthConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rosters: BTreeMap<String, Vec<PlayerRef>> = BTreeMap::new();
    let mut teams = Vec::new();
    for ti in 1..=config.n_teams {
        let team_id = format!("t{ti}");
        let mut players = Vec::new();
        let mut by_position: [Vec<String>; 5] = Default::default();
        for (pi, pos) in Position::ALL.iter().enumerate() {
            for i in 1..=config.players_per_position {
                let player_id = format!("{}{}", pos.as_str().to_lowercase(), i);
                players.push(PlayerRef {
                    player_id: player_id.clone(),
                    team_id: team_id.clone(),
                    position: *pos,
                });
                by_position[pi].push(player_id);
            }
        }
        rosters.insert(team_id.clone(), players);
        teams.push(Team { id: team_id, by_position });
    }
    let position_of = |player: &str, team: &Team| -> usize {
        team.by_position
            .iter()
            .position(|ids| ids.iter().any(|id| id == player))
            .expect("generated players are always rostered")
    };
    let carrier_dist =
        WeightedIndex::new(config.carrier_weights).expect("validated positive total");
    let bias_dists: Vec<WeightedIndex<f64>> = config
        .position_bias
        .iter()
        .map(|row| WeightedIndex::new(row).expect("validated row sums"))
        .collect();

    let mut possessions = Vec::with_capacity(config.n_possessions);
    let mut passes_in = 0usize;
    for i in 0..config.n_possessions {
        let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
        rng.set_stream(i as u64 + 1);
        let team = &teams[i % teams.len()];
        let duration = round_ms(rng.gen_range(config.duration_min..=config.duration_max));
        let start_half = if rng.gen::<f64>() < config.p_offensive_half {
            StartHalf::Offensive
        } else {
            StartHalf::Defensive
        };
        let ball_out = rng.gen::<f64>() < config.p_ball_out;
        let carrier_pos = carrier_dist.sample(&mut rng);
        let carrier_ids = &team.by_position[carrier_pos];
        let initial_carrier = carrier_ids[rng.gen_range(0..carrier_ids.len())].clone();

        let mut passes: Vec<PassEvent> = Vec::new();
        let mut holder = initial_carrier.clone();
        let mut t = 0.0;
        let receive = |rng: &mut ChaCha12Rng, from: &str| -> String {
            let from_pos = position_of(from, team);
            let to_pos = bias_dists[from_pos].sample(rng);
            let pool: Vec<&String> = team.by_position[to_pos]
                .iter()
                .filter(|id| id.as_str() != from)
                .collect();
            if pool.is_empty() {
                // Receiver position resolved to the passer alone; fall
                // back to any teammate.
                let all: Vec<&String> = team
                    .by_position
                    .iter()
                    .flatten()
                    .filter(|id| id.as_str() != from)
                    .collect();
                all[rng.gen_range(0..all.len())].clone()
            } else {
                pool[rng.gen_range(0..pool.len())].clone()
            }
        };
        if ball_out {
            // The inbound pass puts the ball in play.
            t = rng.gen_range(0.2..=1.2);
            let to = receive(&mut rng, &holder);
            passes.push(PassEvent { t, passer: holder.clone(), receiver: to.clone() });
            holder = to;
        }
        while let Some(tp) = next_pass_time(
            &mut rng,
            t,
            duration,
            config.shot_clock_start,
            config.phase_bounds,
            config.pass_rates,
        ) {
            t = tp;
            let mut t_ms = round_ms(tp);
            // The millisecond grid may collide under sub-ms gaps.
            if let Some(prev) = passes.last() {
                if t_ms <= prev.t {
                    t_ms = round_ms(prev.t + 0.001);
                }
            }
            if t_ms >= duration - 1e-9 {
                break;
            }
            let to = receive(&mut rng, &holder);
            passes.push(PassEvent { t: t_ms, passer: holder.clone(), receiver: to.clone() });
            holder = to;
        }
        for p in &mut passes {
            // Stored times are already on the grid; normalize the inbound
            // time drawn above.
            p.t = round_ms(p.t);
        }
        passes_in += passes.len();

        let involved = config.outcome.involvement_bias.map(|b| {
            let target = b.position.index();
            position_of(&initial_carrier, team) == target
                || passes.iter().any(|p| position_of(&p.receiver, team) == target)
        });
        let outcome_raw = if rng.gen::<f64>() < config.outcome.p_neutral {
            "period_end"
        } else {
            let mut p = config.outcome.p_positive;
            if let (Some(true), Some(b)) = (involved, config.outcome.involvement_bias) {
                p = (p + b.delta).clamp(0.0, 1.0);
            }
            if rng.gen::<f64>() < p {
                "made_2pt"
            } else {
                "turnover"
            }
        };

        possessions.push(Possession {
            possession_id: format!("s{i:05}"),
            game_id: format!("g{}", i / config.possessions_per_game + 1),
            team_id: team.id.clone(),
            duration,
            shot_clock_start: config.shot_clock_start,
            start_half,
            start_ball: if ball_out { StartBall::Offside } else { StartBall::Inside },
            initial_carrier,
            outcome_raw: outcome_raw.to_string(),
            passes,
        });
    }

    Ok(Dataset {
        possessions,
        rosters,
        provenance: Provenance {
            events_path: format!("synth:seed={}", config.seed),
            roster_path: format!("synth:seed={}", config.seed),
            events_sha256: String::new(),
            roster_sha256: String::new(),
            possessions_in: config.n_possessions,
            passes_in,
            rejected_possessions: 0,
            violations: Vec::new(),
            warnings: Vec::new(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{filter_and_categorize, parse_dataset, write_events_csv, write_roster_csv};
    use crate::graphlet::{build_profiles, state_entropy, GraphletClass};
    use crate::stats::{sequential_profile_scan, ScanCorrection};
    use crate::window::{build_windows, ClockKey, WindowConfig};

    #[test]
    fn identical_seeds_reproduce_the_dataset() {
        let config = SynthConfig { n_possessions: 60, ..SynthConfig::default() };
        let a = generate(&config).unwrap();
        let b = generate(&config).unwrap();
        assert_eq!(a.possessions, b.possessions);
        assert_eq!(a.rosters, b.rosters);
        let other = generate(&SynthConfig { seed: 1, ..config }).unwrap();
        assert_ne!(a.possessions, other.possessions);
    }

    #[test]
    fn generated_data_round_trips_through_the_parser() {
        let config = SynthConfig { n_possessions: 150, seed: 3, ..SynthConfig::default() };
        let ds = generate(&config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let events = dir.path().join("events.csv");
        let roster = dir.path().join("roster.csv");
        write_events_csv(&ds.possessions, std::fs::File::create(&events).unwrap()).unwrap();
        write_roster_csv(&ds.rosters, std::fs::File::create(&roster).unwrap()).unwrap();
        let parsed = parse_dataset(&events, &roster).unwrap();
        assert!(parsed.provenance.violations.is_empty());
        assert!(parsed.provenance.warnings.is_empty());
        assert_eq!(parsed.provenance.rejected_possessions, 0);
        assert_eq!(parsed.possessions, ds.possessions);
        assert_eq!(parsed.rosters, ds.rosters);
        assert_eq!(parsed.provenance.passes_in, ds.provenance.passes_in);
    }

    #[test]
    fn zero_rates_give_single_carrier_possessions_and_pure_g1() {
        let config = SynthConfig {
            n_possessions: 80,
            pass_rates: [0.0, 0.0, 0.0],
            p_ball_out: 0.0,
            carrier_weights: [1.0, 0.0, 0.0, 0.0, 0.0],
            ..SynthConfig::default()
        };
        let ds = generate(&config).unwrap();
        let wc = WindowConfig::default();
        let mut snaps = Vec::new();
        for p in &ds.possessions {
            assert!(p.passes.is_empty());
            assert!(p.initial_carrier.starts_with("pg"));
            snaps.extend(build_windows(p, &wc).unwrap().snapshots);
        }
        let profiles = build_profiles(snaps.iter(), |_| ()).unwrap();
        let profile = &profiles[&()];
        assert_eq!(profile.count(GraphletClass::G1), profile.total());
        assert_eq!(state_entropy(profile).unwrap(), 0.0);
    }

    #[test]
    fn ball_out_possessions_always_open_with_an_inbound_pass() {
        let config = SynthConfig {
            n_possessions: 50,
            pass_rates: [0.0, 0.0, 0.0],
            p_ball_out: 1.0,
            ..SynthConfig::default()
        };
        let ds = generate(&config).unwrap();
        for p in &ds.possessions {
            assert_eq!(p.passes.len(), 1);
            assert_eq!(p.passes[0].passer, p.initial_carrier);
            assert!(p.passes[0].t >= 0.2 && p.passes[0].t <= 1.2);
            assert_eq!(p.start_ball, StartBall::Offside);
        }
        let set = filter_and_categorize(&ds, 6.0);
        assert_eq!(set.log.categories.defensive_in, 0);
        assert!(set.log.categories.offensive_out + set.log.categories.defensive_out > 0);
    }

    #[test]
    fn per_phase_pass_rates_converge_to_the_configured_rates() {
        let config = SynthConfig {
            n_possessions: 1500,
            seed: 11,
            duration_min: 16.0,
            duration_max: 20.0,
            phase_bounds: (18.0, 12.0),
            pass_rates: [0.1, 0.6, 0.3],
            p_ball_out: 0.0,
            p_offensive_half: 0.0,
            ..SynthConfig::default()
        };
        let ds = generate(&config).unwrap();
        // Phase spans in possession time: [0, 6), [6, 12), [12, D).
        let mut time = [0.0f64; 3];
        let mut count = [0u64; 3];
        for p in &ds.possessions {
            time[0] += 6.0;
            time[1] += 6.0;
            time[2] += p.duration - 12.0;
            for pass in &p.passes {
                let phase = if pass.t < 6.0 {
                    0
                } else if pass.t < 12.0 {
                    1
                } else {
                    2
                };
                count[phase] += 1;
            }
        }
        for i in 0..3 {
            let empirical = count[i] as f64 / time[i];
            let expected = config.pass_rates[i];
            let rel = (empirical - expected).abs() / expected;
            assert!(
                rel < 0.05,
                "phase {i}: empirical {empirical:.4} vs {expected} (rel {rel:.3})"
            );
        }
    }

    /// Profiles keyed by shot clock from half-second windows, descending.
    fn clock_profiles(
        ds: &Dataset,
        wc: &WindowConfig,
    ) -> Vec<(ClockKey, crate::graphlet::GraphletProfile)> {
        let mut snaps = Vec::new();
        for p in &ds.possessions {
            snaps.extend(build_windows(p, wc).unwrap().snapshots);
        }
        let map = build_profiles(snaps.iter(), |s| s.clock_key()).unwrap();
        map.into_iter().rev().collect()
    }

    #[test]
    fn scan_recovers_both_planted_phase_boundaries() {
        // Half-second windows are pure-phase, so the profile shifts at
        // exactly the boundary clock keys 18 and 12.
        let config = SynthConfig {
            n_possessions: 400,
            seed: 5,
            duration_min: 18.5,
            duration_max: 19.5,
            phase_bounds: (18.0, 12.0),
            pass_rates: [0.04, 1.6, 0.04],
            p_ball_out: 0.0,
            p_offensive_half: 0.0,
            ..SynthConfig::default()
        };
        let ds = generate(&config).unwrap();
        let wc = WindowConfig::new(0.5, 0.5).unwrap();
        let profiles = clock_profiles(&ds, &wc);
        let entries = sequential_profile_scan(&profiles, 0.05, ScanCorrection::None).unwrap();
        let diff_from = |clock: f64| {
            entries
                .iter()
                .find(|e| e.clock == ClockKey::from_secs(clock))
                .unwrap()
                .first_diff
                .unwrap()
        };
        let upper = diff_from(18.5);
        assert!(
            upper == ClockKey::from_secs(18.0) || upper == ClockKey::from_secs(17.5),
            "upper boundary found at {upper}"
        );
        let lower = diff_from(12.5);
        assert!(
            lower == ClockKey::from_secs(12.0) || lower == ClockKey::from_secs(11.5),
            "lower boundary found at {lower}"
        );
    }

    #[test]
    fn mid_phase_diversity_raises_then_lowers_entropy() {
        // Six-second windows starting at clocks 24 / 18 / 12 sit entirely
        // inside one phase each; the middle phase has the diverse rate.
        let config = SynthConfig {
            n_possessions: 300,
            seed: 9,
            duration_min: 18.5,
            duration_max: 19.5,
            phase_bounds: (18.0, 12.0),
            pass_rates: [0.02, 0.35, 0.02],
            p_ball_out: 0.0,
            p_offensive_half: 0.0,
            ..SynthConfig::default()
        };
        let ds = generate(&config).unwrap();
        let profiles = clock_profiles(&ds, &WindowConfig::default());
        let entropy_at = |clock: f64| {
            let key = ClockKey::from_secs(clock);
            let p = profiles.iter().find(|(k, _)| *k == key).unwrap();
            state_entropy(&p.1).unwrap()
        };
        let (start, mid, end) = (entropy_at(24.0), entropy_at(18.0), entropy_at(12.0));
        assert!(mid > start + 0.2, "start {start:.3} mid {mid:.3}");
        assert!(mid > end + 0.2, "mid {mid:.3} end {end:.3}");
    }

    #[test]
    fn involvement_bias_shifts_outcomes_for_the_target_position() {
        let config = SynthConfig {
            n_possessions: 800,
            seed: 21,
            outcome: OutcomeModel {
                p_positive: 0.3,
                p_neutral: 0.0,
                involvement_bias: Some(InvolvementBias { position: Position::SG, delta: 0.4 }),
            },
            ..SynthConfig::default()
        };
        let ds = generate(&config).unwrap();
        let idx = ds.position_index();
        let mut with = (0u64, 0u64);
        let mut without = (0u64, 0u64);
        for p in &ds.possessions {
            let involved = p
                .node_sequence()
                .iter()
                .any(|n| idx.position(&p.team_id, n) == Some(Position::SG));
            let positive = p.outcome_raw == "made_2pt";
            let cell = if involved { &mut with } else { &mut without };
            cell.0 += positive as u64;
            cell.1 += 1;
        }
        assert!(with.1 > 100 && without.1 > 100, "both arms need data");
        let rate_with = with.0 as f64 / with.1 as f64;
        let rate_without = without.0 as f64 / without.1 as f64;
        assert!(
            rate_with - rate_without > 0.25,
            "involved {rate_with:.3} vs not {rate_without:.3}"
        );
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let base = SynthConfig::default();
        let cases: Vec<SynthConfig> = vec![
            SynthConfig { phase_bounds: (10.5, 19.5), ..base.clone() },
            SynthConfig { phase_bounds: (25.0, 10.0), ..base.clone() },
            SynthConfig { phase_bounds: (19.5, 5.0), ..base.clone() },
            SynthConfig { pass_rates: [0.3, -0.1, 0.3], ..base.clone() },
            SynthConfig { duration_min: 18.0, duration_max: 12.0, ..base.clone() },
            SynthConfig { duration_min: 1.0, duration_max: 12.0, ..base.clone() },
            SynthConfig { duration_max: 25.0, ..base.clone() },
            SynthConfig { shot_clock_start: 23.7, ..base.clone() },
            SynthConfig { carrier_weights: [0.0; 5], ..base.clone() },
            SynthConfig { p_ball_out: 1.5, ..base.clone() },
            SynthConfig {
                position_bias: {
                    let mut m = [[0.2; 5]; 5];
                    m[2][0] = 0.5;
                    m
                },
                ..base.clone()
            },
            SynthConfig {
                outcome: OutcomeModel {
                    p_positive: 0.3,
                    p_neutral: 0.0,
                    involvement_bias: Some(InvolvementBias {
                        position: Position::C,
                        delta: 1.5,
                    }),
                },
                ..base.clone()
            },
        ];
        for (i, c) in cases.iter().enumerate() {
            assert!(generate(c).is_err(), "case {i} should fail validation");
        }
        assert!(base.validate().is_ok());
    }
}
