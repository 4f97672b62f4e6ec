//! Synthetic ground-truth panels for experiments.

use std::fmt;
use std::str::FromStr;

use longsynth_core::LongitudinalDataset;
use rand::Rng;
use serde::Serialize;

use crate::error::{HarnessError, Result};

/// Two-state chain: `initial` is `Pr[x^1 = 1]`, `stay` is `Pr[1 → 1]` and
/// `entry` is `Pr[0 → 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarkovParams {
    pub initial: f64,
    pub stay: f64,
    pub entry: f64,
}

impl MarkovParams {
    /// Monthly poverty-like dynamics: about 12% in state 1, spells that
    /// last several months on average.
    pub const POVERTY: MarkovParams = MarkovParams { initial: 0.12, stay: 0.85, entry: 0.02 };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimKind {
    AllOnes,
    Bernoulli { p: f64 },
    Markov(MarkovParams),
}

impl SimKind {
    fn validate(&self) -> Result<()> {
        let probs: &[f64] = match self {
            SimKind::AllOnes => &[],
            SimKind::Bernoulli { p } => &[*p],
            SimKind::Markov(m) => &[m.initial, m.stay, m.entry],
        };
        if probs.iter().all(|p| (0.0..=1.0).contains(p)) {
            Ok(())
        } else {
            Err(HarnessError::input("probabilities must lie in [0, 1]"))
        }
    }
}

impl fmt::Display for SimKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimKind::AllOnes => f.write_str("all-ones"),
            SimKind::Bernoulli { p } => write!(f, "bernoulli:{p}"),
            SimKind::Markov(m) if *m == MarkovParams::POVERTY => f.write_str("markov"),
            SimKind::Markov(m) => write!(f, "markov:{},{},{}", m.initial, m.stay, m.entry),
        }
    }
}

/// `all-ones`, `bernoulli:P`, `markov` or `markov:INITIAL,STAY,ENTRY`.
impl FromStr for SimKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = s.split_once(':').unwrap_or((s, ""));
        let num = |x: &str| {
            x.trim().parse::<f64>().map_err(|_| HarnessError::input(format!("bad number '{x}'")))
        };
        let kind = match (name, arg) {
            ("all-ones", "") => SimKind::AllOnes,
            ("bernoulli", p) => SimKind::Bernoulli { p: num(p)? },
            ("markov", "") => SimKind::Markov(MarkovParams::POVERTY),
            ("markov", rest) => {
                let v = rest.split(',').map(num).collect::<Result<Vec<f64>>>()?;
                let [initial, stay, entry] = v[..] else {
                    return Err(HarnessError::input("markov takes INITIAL,STAY,ENTRY"));
                };
                SimKind::Markov(MarkovParams { initial, stay, entry })
            }
            _ => return Err(HarnessError::input(format!("unknown dataset kind '{s}'"))),
        };
        kind.validate()?;
        Ok(kind)
    }
}

/// Draws an `n × horizon` panel. Rows are generated one after another, so
/// a fixed seed gives a fixed panel.
pub fn simulate_dataset<R: Rng + ?Sized>(
    kind: SimKind,
    n: usize,
    horizon: usize,
    rng: &mut R,
) -> Result<LongitudinalDataset> {
    if n == 0 || horizon == 0 {
        return Err(HarnessError::input("n and T must be at least 1"));
    }
    kind.validate()?;
    let mut rows = vec![vec![0u8; horizon]; n];
    for row in rows.iter_mut() {
        match kind {
            SimKind::AllOnes => row.fill(1),
            SimKind::Bernoulli { p } => row.iter_mut().for_each(|x| *x = u8::from(rng.gen_bool(p))),
            SimKind::Markov(m) => {
                let mut state = rng.gen_bool(m.initial);
                for x in row.iter_mut() {
                    *x = u8::from(state);
                    state = rng.gen_bool(if state { m.stay } else { m.entry });
                }
            }
        }
    }
    Ok(LongitudinalDataset::from_rows(&rows)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn sim(kind: SimKind, seed: u64) -> LongitudinalDataset {
        simulate_dataset(kind, 200, 6, &mut ChaCha20Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn degenerate_kinds() {
        assert!(sim(SimKind::AllOnes, 0).rows().iter().flatten().all(|&b| b == 1));
        assert!(sim(SimKind::Bernoulli { p: 0.0 }, 0).rows().iter().flatten().all(|&b| b == 0));
    }

    #[test]
    fn same_seed_same_panel() {
        let kind = SimKind::Markov(MarkovParams::POVERTY);
        assert_eq!(sim(kind, 4), sim(kind, 4));
        assert_ne!(sim(kind, 4), sim(kind, 5));
    }

    #[test]
    fn parse_and_display() {
        for s in ["all-ones", "bernoulli:0.3", "markov", "markov:0.5,0.9,0.1"] {
            assert_eq!(s.parse::<SimKind>().unwrap().to_string(), s);
        }
        assert!("bernoulli:1.5".parse::<SimKind>().is_err());
        assert!("markov:0.1,0.2".parse::<SimKind>().is_err());
        assert!("zipf".parse::<SimKind>().is_err());
    }

    #[test]
    fn markov_marginal_is_near_stationary() {
        let ds = simulate_dataset(
            SimKind::Markov(MarkovParams::POVERTY),
            20_000,
            12,
            &mut ChaCha20Rng::seed_from_u64(1),
        )
        .unwrap();
        let ones: usize = ds.rows().iter().flatten().map(|&b| b as usize).sum();
        let frac = ones as f64 / (20_000.0 * 12.0);
        // stationary share is 0.02 / (0.02 + 0.15) ≈ 0.118
        assert!((frac - 0.118).abs() < 0.01, "{frac}");
    }
}
