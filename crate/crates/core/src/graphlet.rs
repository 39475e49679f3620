//! Graphlet classification of windows.
//!
//! The pass chain inside a window, read as a node sequence starting at
//! the carrier, is relabeled by order of first appearance: the carrier
//! becomes 1, the first new player 2, and so on. Windows with up to
//! three passes fall into exactly nine patterns (`1`, `12`, `121`,
//! `123`, `1212`, `1213`, `1231`, `1232`, `1234`); windows with four or
//! more passes share the residual `other` class. Profiles count classes
//! per grouping key, and state entropy summarizes a profile in bits.

use std::collections::BTreeMap;

use crate::data::{PositionIndex, Position};
use crate::error::{Error, Result};
use crate::window::{ClockKey, Snapshot};

/// The ten window classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
pub enum GraphletClass {
    G1,
    G12,
    G121,
    G123,
    G1212,
    G1213,
    G1231,
    G1232,
    G1234,
    Other,
}

impl GraphletClass {
    pub const ALL: [GraphletClass; 10] = [
        GraphletClass::G1,
        GraphletClass::G12,
        GraphletClass::G121,
        GraphletClass::G123,
        GraphletClass::G1212,
        GraphletClass::G1213,
        GraphletClass::G1231,
        GraphletClass::G1232,
        GraphletClass::G1234,
        GraphletClass::Other,
    ];

    pub fn label(self) -> &'static str {
        match self {
            GraphletClass::G1 => "1",
            GraphletClass::G12 => "12",
            GraphletClass::G121 => "121",
            GraphletClass::G123 => "123",
            GraphletClass::G1212 => "1212",
            GraphletClass::G1213 => "1213",
            GraphletClass::G1231 => "1231",
            GraphletClass::G1232 => "1232",
            GraphletClass::G1234 => "1234",
            GraphletClass::Other => "other",
        }
    }

    pub fn index(self) -> usize {
        GraphletClass::ALL.iter().position(|c| *c == self).unwrap()
    }
}

/// Result of classifying one window. `pass_count` is kept so the
/// residual class stays inspectable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Classification {
    pub class: GraphletClass,
    pub pass_count: usize,
}

/// Classifies a window from its pass chain. The chain inside the window
/// must be connected: the first passer is the carrier at window start and
/// every later pass starts where the previous one ended.
pub fn classify(snapshot: &Snapshot) -> Result<Classification> {
    let chain_err = |detail: String| {
        Error::Classification(format!(
            "possession {} window {}: {detail}",
            snapshot.possession_id, snapshot.k
        ))
    };
    if let Some(first) = snapshot.passes.first() {
        if first.passer != snapshot.carrier_at_start {
            return Err(chain_err(format!(
                "first passer {:?} is not the carrier {:?}",
                first.passer, snapshot.carrier_at_start
            )));
        }
    }
    for pair in snapshot.passes.windows(2) {
        if pair[1].passer != pair[0].receiver {
            return Err(chain_err(format!(
                "passer {:?} does not continue from receiver {:?}",
                pair[1].passer, pair[0].receiver
            )));
        }
    }
    let pass_count = snapshot.passes.len();
    if pass_count >= 4 {
        return Ok(Classification { class: GraphletClass::Other, pass_count });
    }
    // Node sequence relabeled by first appearance.
    let mut names: Vec<&str> = vec![snapshot.carrier_at_start.as_str()];
    names.extend(snapshot.passes.iter().map(|p| p.receiver.as_str()));
    let mut seen: Vec<&str> = Vec::with_capacity(4);
    let mut pattern = [0u8; 4];
    for (i, name) in names.iter().enumerate() {
        let label = match seen.iter().position(|s| s == name) {
            Some(idx) => idx + 1,
            None => {
                seen.push(name);
                seen.len()
            }
        };
        pattern[i] = label as u8;
    }
    let class = match &pattern[..names.len()] {
        [1] => GraphletClass::G1,
        [1, 2] => GraphletClass::G12,
        [1, 2, 1] => GraphletClass::G121,
        [1, 2, 3] => GraphletClass::G123,
        [1, 2, 1, 2] => GraphletClass::G1212,
        [1, 2, 1, 3] => GraphletClass::G1213,
        [1, 2, 3, 1] => GraphletClass::G1231,
        [1, 2, 3, 2] => GraphletClass::G1232,
        [1, 2, 3, 4] => GraphletClass::G1234,
        other => {
            // Unreachable for a valid chain (no self-pass, labels appear
            // in order); kept as a guard against malformed snapshots.
            return Err(chain_err(format!("unrecognized pattern {other:?}")));
        }
    };
    Ok(Classification { class, pass_count })
}

/// Class counts under one grouping key.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GraphletProfile {
    counts: [u64; 10],
    total: u64,
}

impl GraphletProfile {
    pub fn add(&mut self, class: GraphletClass) {
        self.counts[class.index()] += 1;
        self.total += 1;
    }

    pub fn merge(&mut self, other: &GraphletProfile) {
        for (a, b) in self.counts.iter_mut().zip(other.counts.iter()) {
            *a += b;
        }
        self.total += other.total;
    }

    pub fn count(&self, class: GraphletClass) -> u64 {
        self.counts[class.index()]
    }

    pub fn counts(&self) -> &[u64; 10] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Relative frequencies in class order; `None` for an empty profile.
    pub fn frequencies(&self) -> Option<[f64; 10]> {
        if self.total == 0 {
            return None;
        }
        let mut out = [0.0; 10];
        for (o, c) in out.iter_mut().zip(self.counts.iter()) {
            *o = *c as f64 / self.total as f64;
        }
        Some(out)
    }
}

/// Groups snapshots by `key_fn` and counts their classes. Classification
/// errors abort the build.
pub fn build_profiles<'a, K, I, F>(snapshots: I, key_fn: F) -> Result<BTreeMap<K, GraphletProfile>>
where
    K: Ord,
    I: IntoIterator<Item = &'a Snapshot>,
    F: Fn(&Snapshot) -> K,
{
    let mut out: BTreeMap<K, GraphletProfile> = BTreeMap::new();
    for snapshot in snapshots {
        let class = classify(snapshot)?.class;
        out.entry(key_fn(snapshot)).or_default().add(class);
    }
    Ok(out)
}

/// Shannon entropy in bits of a probability vector. Zero-probability
/// entries contribute nothing.
pub fn entropy_bits<I: IntoIterator<Item = f64>>(probs: I) -> f64 {
    let mut h = 0.0;
    for p in probs {
        if p > 0.0 {
            h -= p * p.log2();
        }
    }
    h
}

/// Entropy of a profile's class distribution. An empty profile has no
/// distribution, so it is an error rather than a silent zero.
pub fn state_entropy(profile: &GraphletProfile) -> Result<f64> {
    match profile.frequencies() {
        Some(freqs) => Ok(entropy_bits(freqs)),
        None => Err(Error::Undefined(
            "state entropy of an empty profile".to_string(),
        )),
    }
}

/// Per-shot-clock profiles for one position, counting only windows whose
/// node set contains at least one rostered player of that position.
/// Sparse clock values simply have no entry.
pub fn individual_profiles<'a, I>(
    snapshots: I,
    position: Position,
    index: &PositionIndex,
) -> Result<BTreeMap<ClockKey, GraphletProfile>>
where
    I: IntoIterator<Item = &'a Snapshot>,
{
    let relevant = snapshots.into_iter().filter(|s| {
        s.nodes()
            .iter()
            .any(|n| index.position(&s.team_id, n) == Some(position))
    });
    build_profiles(relevant, |s| s.clock_key())
}
