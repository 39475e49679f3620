//! Sliding-window decomposition of possessions.
//!
//! A possession of duration `D` is cut into overlapping windows of fixed
//! duration `w` advancing by step `s`: window `k` covers `[k*s, k*s + w)`.
//! Every window must fit inside the possession, so the window count is
//! `floor((D - w) / s) + 1` and possessions shorter than one window are
//! rejected. Each window also carries the shot clock value at its start,
//! `shot_clock_start - k*s`, which is the key used to group windows into
//! profiles downstream.

use std::collections::BTreeSet;
use std::fmt;

use crate::data::{PassEvent, Possession};
use crate::error::{Error, Result};

/// Window geometry. `duration` must be a positive integer multiple of
/// `step`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct WindowConfig {
    pub duration: f64,
    pub step: f64,
}

impl WindowConfig {
    pub fn new(duration: f64, step: f64) -> Result<Self> {
        if !(duration.is_finite() && duration > 0.0) || !(step.is_finite() && step > 0.0) {
            return Err(Error::Config(format!(
                "window duration and step must be positive, got {duration} / {step}"
            )));
        }
        let ratio = duration / step;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return Err(Error::Config(format!(
                "window duration {duration} is not an integer multiple of step {step}"
            )));
        }
        Ok(WindowConfig { duration, step })
    }
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig { duration: 6.0, step: 0.5 }
    }
}

/// A shot clock (or time) value keyed at millisecond resolution so it can
/// be used as an exact grouping key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClockKey(i64);

impl ClockKey {
    pub fn from_secs(s: f64) -> Self {
        ClockKey((s * 1000.0).round() as i64)
    }

    pub fn as_secs(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    pub fn millis(self) -> i64 {
        self.0
    }
}

impl fmt::Display for ClockKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 % 1000 == 0 {
            write!(f, "{}", self.0 / 1000)
        } else if self.0 % 100 == 0 {
            write!(f, "{:.1}", self.as_secs())
        } else {
            write!(f, "{:.3}", self.as_secs())
        }
    }
}

impl serde::Serialize for ClockKey {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.as_secs())
    }
}

/// One window of a possession: the passes it contains plus the carrier
/// and shot clock at its start.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub possession_id: String,
    pub game_id: String,
    pub team_id: String,
    /// 0-based window index within the possession.
    pub k: usize,
    pub t_start: f64,
    pub t_end: f64,
    /// Passes with `t_start <= t < t_end`, in chain order.
    pub passes: Vec<PassEvent>,
    /// Player holding the ball when the window opens.
    pub carrier_at_start: String,
    pub shot_clock_at_start: f64,
    /// Set when the computed shot clock is below one window duration,
    /// which cannot happen for a possession that respects the clock.
    pub clock_flag: bool,
}

impl Snapshot {
    /// All players appearing in the window: the carrier at start plus
    /// both endpoints of every pass.
    pub fn nodes(&self) -> BTreeSet<&str> {
        let mut set = BTreeSet::new();
        set.insert(self.carrier_at_start.as_str());
        for p in &self.passes {
            set.insert(p.passer.as_str());
            set.insert(p.receiver.as_str());
        }
        set
    }

    pub fn clock_key(&self) -> ClockKey {
        ClockKey::from_secs(self.shot_clock_at_start)
    }
}

/// All windows of one possession, indexed contiguously from 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalGraph {
    pub possession_id: String,
    pub snapshots: Vec<Snapshot>,
}

/// Number of windows for a possession of the given duration, or an error
/// when not even one window fits.
pub fn window_count(duration: f64, config: &WindowConfig) -> Result<usize> {
    let span = duration - config.duration;
    if span < -1e-9 {
        return Err(Error::Data(format!(
            "possession duration {duration} is shorter than one window ({})",
            config.duration
        )));
    }
    Ok((span.max(0.0) / config.step + 1e-9).floor() as usize + 1)
}

/// Shot clock at the start of window `k`.
pub fn shot_clock_at(possession: &Possession, k: usize, config: &WindowConfig) -> f64 {
    possession.shot_clock_start - k as f64 * config.step
}

/// Player in possession of the ball at time `t`: the receiver of the last
/// pass strictly before `t`, or the initial carrier when no pass precedes
/// it. Constant between consecutive pass times.
pub fn carrier_at<'a>(possession: &'a Possession, t: f64) -> &'a str {
    let idx = possession.passes.partition_point(|p| p.t < t);
    if idx == 0 {
        &possession.initial_carrier
    } else {
        &possession.passes[idx - 1].receiver
    }
}

/// Cuts one possession into its full set of windows.
pub fn build_windows(possession: &Possession, config: &WindowConfig) -> Result<TemporalGraph> {
    let count = window_count(possession.duration, config).map_err(|e| {
        Error::Data(format!("possession {}: {e}", possession.possession_id))
    })?;
    let mut snapshots = Vec::with_capacity(count);
    for k in 0..count {
        let t_start = k as f64 * config.step;
        let t_end = t_start + config.duration;
        let lo = possession.passes.partition_point(|p| p.t < t_start);
        let hi = possession.passes.partition_point(|p| p.t < t_end);
        let clock = shot_clock_at(possession, k, config);
        snapshots.push(Snapshot {
            possession_id: possession.possession_id.clone(),
            game_id: possession.game_id.clone(),
            team_id: possession.team_id.clone(),
            k,
            t_start,
            t_end,
            passes: possession.passes[lo..hi].to_vec(),
            carrier_at_start: carrier_at(possession, t_start).to_string(),
            shot_clock_at_start: clock,
            clock_flag: clock < config.duration - 1e-9,
        });
    }
    Ok(TemporalGraph { possession_id: possession.possession_id.clone(), snapshots })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{StartBall, StartHalf};
    use proptest::prelude::*;

    fn chain(duration: f64, shot_clock_start: f64, times: &[f64]) -> Possession {
        // Players cycle a -> b -> c -> a ... so the chain property holds.
        let names = ["a", "b", "c"];
        let passes = times
            .iter()
            .enumerate()
            .map(|(i, &t)| PassEvent {
                t,
                passer: names[i % 3].to_string(),
                receiver: names[(i + 1) % 3].to_string(),
            })
            .collect();
        Possession {
            possession_id: "P1".to_string(),
            game_id: "G1".to_string(),
            team_id: "T1".to_string(),
            duration,
            shot_clock_start,
            start_half: StartHalf::Defensive,
            start_ball: StartBall::Offside,
            initial_carrier: "a".to_string(),
            outcome_raw: "made_2pt".to_string(),
            passes,
        }
    }

    #[test]
    fn exact_window_duration_gives_one_window() {
        let p = chain(6.0, 24.0, &[]);
        let g = build_windows(&p, &WindowConfig::default()).unwrap();
        assert_eq!(g.snapshots.len(), 1);
        assert_eq!(g.snapshots[0].t_start, 0.0);
        assert_eq!(g.snapshots[0].t_end, 6.0);
        assert_eq!(g.snapshots[0].shot_clock_at_start, 24.0);
    }

    #[test]
    fn duration_12_3_gives_13_windows() {
        let p = chain(12.3, 24.0, &[]);
        let g = build_windows(&p, &WindowConfig::default()).unwrap();
        assert_eq!(g.snapshots.len(), 13);
        assert_eq!(g.snapshots[0].t_start, 0.0);
        assert_eq!(g.snapshots[12].t_start, 6.0);
    }

    #[test]
    fn too_short_possession_is_an_error() {
        let p = chain(5.9, 24.0, &[]);
        let err = build_windows(&p, &WindowConfig::default()).unwrap_err();
        assert!(err.to_string().contains("P1"));
    }

    #[test]
    fn boundary_pass_belongs_to_the_window_that_starts_at_or_before_it() {
        let p = chain(12.0, 24.0, &[6.0]);
        let g = build_windows(&p, &WindowConfig::default()).unwrap();
        // Window [0, 6) excludes a pass at exactly 6.0; [0.5, 6.5) includes it.
        assert!(g.snapshots[0].passes.is_empty());
        assert_eq!(g.snapshots[1].passes.len(), 1);
        assert_eq!(g.snapshots[12].passes.len(), 1);
    }

    #[test]
    fn shot_clock_counts_down_by_step() {
        let p = chain(9.0, 24.0, &[]);
        let g = build_windows(&p, &WindowConfig::default()).unwrap();
        assert_eq!(g.snapshots[0].shot_clock_at_start, 24.0);
        assert_eq!(g.snapshots[5].shot_clock_at_start, 21.5);
        assert!(g.snapshots.iter().all(|s| !s.clock_flag));
    }

    #[test]
    fn clock_below_one_window_is_flagged_not_dropped() {
        let p = chain(7.0, 6.5, &[]);
        let g = build_windows(&p, &WindowConfig::default()).unwrap();
        let clocks: Vec<f64> = g.snapshots.iter().map(|s| s.shot_clock_at_start).collect();
        assert_eq!(clocks, vec![6.5, 6.0, 5.5]);
        let flags: Vec<bool> = g.snapshots.iter().map(|s| s.clock_flag).collect();
        assert_eq!(flags, vec![false, false, true]);
    }

    #[test]
    fn carrier_follows_the_chain() {
        let p = chain(10.0, 24.0, &[2.0, 4.5]);
        assert_eq!(carrier_at(&p, 0.0), "a");
        assert_eq!(carrier_at(&p, 2.0), "a");
        assert_eq!(carrier_at(&p, 2.001), "b");
        assert_eq!(carrier_at(&p, 4.5), "b");
        assert_eq!(carrier_at(&p, 5.0), "c");
    }

    #[test]
    fn carrier_at_start_matches_first_window_passer() {
        let p = chain(12.0, 24.0, &[0.4, 3.2, 7.1]);
        let g = build_windows(&p, &WindowConfig::default()).unwrap();
        for s in &g.snapshots {
            if let Some(first) = s.passes.first() {
                assert_eq!(first.passer, s.carrier_at_start);
            }
        }
    }

    #[test]
    fn config_rejects_non_multiple_duration() {
        assert!(WindowConfig::new(6.0, 0.5).is_ok());
        assert!(WindowConfig::new(0.5, 0.5).is_ok());
        assert!(WindowConfig::new(6.2, 0.5).is_err());
        assert!(WindowConfig::new(-6.0, 0.5).is_err());
        assert!(WindowConfig::new(6.0, 0.0).is_err());
    }

    #[test]
    fn clock_key_formats_on_the_grid() {
        assert_eq!(ClockKey::from_secs(24.0).to_string(), "24");
        assert_eq!(ClockKey::from_secs(10.5).to_string(), "10.5");
        assert_eq!(ClockKey::from_secs(9.25).to_string(), "9.250");
        assert_eq!(ClockKey::from_secs(10.5).as_secs(), 10.5);
    }

    proptest! {
        #[test]
        fn count_matches_step_enumeration(duration in 6.0f64..30.0) {
            let config = WindowConfig::default();
            let formula = window_count(duration, &config).unwrap();
            let mut enumerated = 0usize;
            let mut k = 0usize;
            loop {
                let t_end = k as f64 * config.step + config.duration;
                if t_end <= duration + 1e-9 {
                    enumerated += 1;
                    k += 1;
                } else {
                    break;
                }
            }
            prop_assert_eq!(formula, enumerated);
        }

        #[test]
        fn windows_nest_and_stay_inside_the_possession(duration in 6.0f64..30.0) {
            let p = chain((duration * 1000.0).round() / 1000.0, 24.0, &[]);
            let g = build_windows(&p, &WindowConfig::default()).unwrap();
            for (i, s) in g.snapshots.iter().enumerate() {
                prop_assert_eq!(s.k, i);
                prop_assert!((s.t_end - s.t_start - 6.0).abs() < 1e-12);
                prop_assert!(s.t_end <= p.duration + 1e-9);
            }
            for pair in g.snapshots.windows(2) {
                prop_assert!((pair[1].t_start - pair[0].t_start - 0.5).abs() < 1e-12);
            }
        }

        #[test]
        fn pass_membership_matches_the_interval_rule(
            duration in 8.0f64..24.0,
            raw_times in proptest::collection::vec(0.0f64..1.0, 1..10),
        ) {
            let duration = (duration * 1000.0).round() / 1000.0;
            // Spread raw fractions into strictly increasing ms-rounded times.
            let mut times: Vec<f64> = raw_times
                .iter()
                .map(|f| ((f * duration) * 1000.0).round() / 1000.0)
                .collect();
            times.sort_by(|a, b| a.partial_cmp(b).unwrap());
            times.dedup();
            let p = chain(duration, 24.0, &times);
            let g = build_windows(&p, &WindowConfig::default()).unwrap();
            for pass in &p.passes {
                for s in &g.snapshots {
                    let inside = s.passes.iter().any(|q| q.t == pass.t);
                    let expected = s.t_start <= pass.t && pass.t < s.t_end;
                    prop_assert_eq!(inside, expected);
                }
            }
        }

        #[test]
        fn carrier_is_constant_between_passes(
            times in proptest::collection::vec(0.5f64..9.5, 1..6),
            probe in 0.0f64..1.0,
        ) {
            let mut times = times;
            times.sort_by(|a, b| a.partial_cmp(b).unwrap());
            times.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
            let p = chain(10.0, 24.0, &times);
            // Probe a random point in each inter-pass interval.
            let mut boundaries = vec![0.0];
            boundaries.extend(&times);
            boundaries.push(10.0);
            for pair in boundaries.windows(2) {
                let (lo, hi) = (pair[0], pair[1]);
                if hi - lo < 1e-6 {
                    continue;
                }
                let t1 = lo + (hi - lo) * 0.25 * probe.max(0.01);
                let t2 = lo + (hi - lo) * 0.99;
                // Both probes sit strictly after lo's pass, at or before hi's.
                prop_assert_eq!(carrier_at(&p, lo + 1e-9), carrier_at(&p, t1.max(lo + 1e-9)));
                prop_assert_eq!(carrier_at(&p, t1.max(lo + 1e-9)), carrier_at(&p, t2));
            }
        }
    }
}
