//! Query lists in JSON:
//! `[{"kind":"window","s":"101","t":7}, {"kind":"cum","b":3,"t":12},
//!   {"kind":"linear","t":7,"weights":{"110":1,"011":1}}]`.
//!
//! `t` may be left out to ask at every round where the query is defined.
//! An optional `name` replaces the default label.

use std::collections::BTreeMap;
use std::path::Path;

use longsynth_core::{QuerySpec, SuffixKey};
use serde::Deserialize;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum QueryEntry {
    Window { s: String, t: Option<usize>, name: Option<String> },
    Cum { b: usize, t: Option<usize>, name: Option<String> },
    Linear { weights: BTreeMap<String, f64>, t: Option<usize>, name: Option<String> },
}

/// A query at one round, with the label it is reported under.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedQuery {
    pub label: String,
    pub spec: QuerySpec,
}

impl NamedQuery {
    pub fn t(&self) -> usize {
        self.spec.round()
    }
}

pub fn parse_queries(json: &str) -> Result<Vec<QueryEntry>> {
    Ok(serde_json::from_str(json)?)
}

pub fn read_queries(path: &Path) -> Result<Vec<QueryEntry>> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| HarnessError::Read { path: path.to_owned(), source })?;
    parse_queries(&text)
}

fn rounds(t: Option<usize>, first: usize, horizon: usize) -> Result<Vec<usize>> {
    match t {
        Some(t) if t > horizon => {
            Err(HarnessError::input(format!("query round {t} is past the horizon {horizon}")))
        }
        Some(t) => Ok(vec![t]),
        None => Ok((first.max(1)..=horizon).collect()),
    }
}

fn key(s: &str) -> Result<SuffixKey> {
    s.parse().map_err(|e| HarnessError::input(format!("suffix '{s}': {e}")))
}

/// Resolves entries against a horizon, one [`NamedQuery`] per round.
pub fn expand(entries: &[QueryEntry], horizon: usize) -> Result<Vec<NamedQuery>> {
    let mut out = Vec::new();
    for (index, entry) in entries.iter().enumerate() {
        match entry {
            QueryEntry::Window { s, t, name } => {
                let suffix = key(s)?;
                let label = name.clone().unwrap_or_else(|| format!("window:{s}"));
                for t in rounds(*t, suffix.k(), horizon)? {
                    out.push(NamedQuery { label: label.clone(), spec: QuerySpec::window(suffix, t)? });
                }
            }
            QueryEntry::Cum { b, t, name } => {
                let label = name.clone().unwrap_or_else(|| format!("cum:{b}"));
                for t in rounds(*t, 1, horizon)? {
                    out.push(NamedQuery { label: label.clone(), spec: QuerySpec::cumulative(*b, t)? });
                }
            }
            QueryEntry::Linear { weights, t, name } => {
                let weights = weights
                    .iter()
                    .map(|(s, &w)| Ok((key(s)?, w)))
                    .collect::<Result<Vec<_>>>()?;
                let Some(k) = weights.first().map(|(s, _)| s.k()) else {
                    return Err(HarnessError::input("linear query without weights"));
                };
                let label = name.clone().unwrap_or_else(|| format!("linear:{index}"));
                for t in rounds(*t, k, horizon)? {
                    out.push(NamedQuery {
                        label: label.clone(),
                        spec: QuerySpec::linear(k, t, weights.clone())?,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Every length-`k` suffix at every round `k..=T`.
pub fn default_window_queries(k: usize, horizon: usize) -> Result<Vec<NamedQuery>> {
    let mut out = Vec::new();
    for t in k..=horizon {
        for s in SuffixKey::all(k)? {
            out.push(NamedQuery { label: format!("window:{s}"), spec: QuerySpec::window(s, t)? });
        }
    }
    Ok(out)
}

/// `c_b^t` for every `1 ≤ b ≤ t ≤ T`.
pub fn default_cumulative_queries(horizon: usize) -> Result<Vec<NamedQuery>> {
    let mut out = Vec::new();
    for t in 1..=horizon {
        for b in 1..=t {
            out.push(NamedQuery { label: format!("cum:{b}"), spec: QuerySpec::cumulative(b, t)? });
        }
    }
    Ok(out)
}
