//! Outcome code resolution. Raw annotation codes are free-form strings;
//! a mapping table turns them into the three-valued [`Outcome`].

use std::collections::BTreeMap;
use std::path::Path;

use crate::data::{Outcome, Possession};
use crate::error::{Error, Result};

/// Built-in code table used when no mapping file is supplied.
const BUILTIN: &[(&str, Outcome)] = &[
    ("made_2pt", Outcome::Positive),
    ("made_3pt", Outcome::Positive),
    ("made_ft", Outcome::Positive),
    ("and_one", Outcome::Positive),
    ("foul_drawn", Outcome::Positive),
    ("missed_2pt", Outcome::Negative),
    ("missed_3pt", Outcome::Negative),
    ("turnover", Outcome::Negative),
    ("offensive_foul", Outcome::Negative),
    ("shot_clock_violation", Outcome::Negative),
    ("out_of_bounds", Outcome::Negative),
    ("travel", Outcome::Negative),
    ("period_end", Outcome::Neutral),
    ("half_end", Outcome::Neutral),
    ("game_end", Outcome::Neutral),
];

/// Table mapping raw outcome codes to resolved outcomes.
///
/// A mapping file is a two-column CSV with header `outcome_raw,outcome`
/// where `outcome` is one of `positive`, `negative`, `neutral`
/// (case-insensitive). Codes not present in the table are an error,
/// never a silent default.
#[derive(Debug, Clone)]
pub struct OutcomeMapping {
    map: BTreeMap<String, Outcome>,
    source: String,
}

impl OutcomeMapping {
    pub fn builtin() -> Self {
        OutcomeMapping {
            map: BUILTIN
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
            source: "builtin".to_string(),
        }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::Reader::from_reader(bytes.as_slice());
        let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
        let expect = ["outcome_raw", "outcome"];
        if headers.iter().collect::<Vec<_>>() != expect {
            return Err(Error::Schema(format!(
                "outcome mapping {} must have header {:?}, found {:?}",
                path.display(),
                expect.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut map = BTreeMap::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::csv(path, e))?;
            let raw = record.get(0).unwrap_or("").trim().to_string();
            let value = record.get(1).unwrap_or("").trim().to_ascii_lowercase();
            if raw.is_empty() {
                return Err(Error::Mapping(format!(
                    "empty outcome_raw in mapping {}",
                    path.display()
                )));
            }
            let outcome = match value.as_str() {
                "positive" => Outcome::Positive,
                "negative" => Outcome::Negative,
                "neutral" => Outcome::Neutral,
                other => {
                    return Err(Error::Mapping(format!(
                        "code {raw:?} maps to unknown outcome {other:?} (expected positive, negative, or neutral)"
                    )))
                }
            };
            map.insert(raw, outcome);
        }
        Ok(OutcomeMapping { map, source: path.display().to_string() })
    }

    /// Where this table came from: `builtin` or a file path.
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn classify(&self, outcome_raw: &str) -> Result<Outcome> {
        self.map.get(outcome_raw.trim()).copied().ok_or_else(|| {
            Error::Mapping(format!(
                "unknown outcome code {:?} (mapping source: {})",
                outcome_raw, self.source
            ))
        })
    }

    pub fn classify_possession(&self, p: &Possession) -> Result<Outcome> {
        self.classify(&p.outcome_raw).map_err(|e| {
            Error::Mapping(format!("possession {}: {e}", p.possession_id))
        })
    }
}
