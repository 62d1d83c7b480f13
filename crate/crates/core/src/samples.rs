//! Transition samples and the sampled Bellman operators built from them.
//!
//! Two kinds of samples exist. *Simple* samples carry `n ≥ 1` successor
//! states drawn from `P(s, a, ·)`; the estimated operator averages the value
//! over them. *Expectation* samples carry the full successor distribution and
//! give the exact expectation at the sampled state.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{read_file, RalpError, Result};
use crate::value::ValueFunction;

const DISTRIBUTION_TOL: f64 = 1e-12;

/// A successor state, or the end of an episode (valued at zero).
#[derive(Debug, Clone, PartialEq)]
pub enum NextState {
    State(Vec<f64>),
    Terminal,
}

impl NextState {
    pub fn value(&self, v: &ValueFunction) -> Result<f64> {
        match self {
            NextState::State(s) => v.value_at(s),
            NextState::Terminal => Ok(0.0),
        }
    }

    pub fn state(&self) -> Option<&[f64]> {
        match self {
            NextState::State(s) => Some(s),
            NextState::Terminal => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Successors {
    /// `n` successors drawn i.i.d.
    Sampled(Vec<NextState>),
    /// Explicit successor distribution.
    Distribution(Vec<(NextState, f64)>),
}

impl Successors {
    /// Pairs of (successor, weight) with weights summing to one.
    pub fn weighted(&self) -> Vec<(&NextState, f64)> {
        match self {
            Successors::Sampled(s) => {
                let w = 1.0 / s.len() as f64;
                s.iter().map(|n| (n, w)).collect()
            }
            Successors::Distribution(d) => d.iter().map(|(n, p)| (n, *p)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleKind {
    Simple,
    Expectation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub successors: Successors,
}

impl SampleRecord {
    pub fn simple(state: Vec<f64>, action: usize, reward: f64, successors: Vec<NextState>) -> Self {
        Self { state, action, reward, successors: Successors::Sampled(successors) }
    }

    pub fn expectation(state: Vec<f64>, action: usize, reward: f64, distribution: Vec<(NextState, f64)>) -> Self {
        Self { state, action, reward, successors: Successors::Distribution(distribution) }
    }
}

/// A validated set of samples of a single kind.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    kind: SampleKind,
    records: Vec<SampleRecord>,
}

/// The result of applying a sampled Bellman operator at one record.
#[derive(Debug, Clone, PartialEq)]
pub struct Backup {
    pub state: Vec<f64>,
    pub action: usize,
    pub value: f64,
}

fn state_key(state: &[f64], action: usize) -> (Vec<u64>, usize) {
    // -0.0 and 0.0 denote the same state
    (state.iter().map(|x| (x + 0.0).to_bits()).collect(), action)
}

impl SampleSet {
    pub fn new(kind: SampleKind, records: Vec<SampleRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            match (&r.successors, kind) {
                (Successors::Sampled(s), SampleKind::Simple) => {
                    if s.is_empty() {
                        return Err(RalpError::invalid(format!("record {i}: no sampled successors")));
                    }
                }
                (Successors::Distribution(d), SampleKind::Expectation) => {
                    if d.is_empty() || d.iter().any(|(_, p)| !(0.0..=1.0).contains(p)) {
                        return Err(RalpError::invalid(format!("record {i}: invalid successor distribution")));
                    }
                    let total: f64 = d.iter().map(|(_, p)| p).sum();
                    if (total - 1.0).abs() > DISTRIBUTION_TOL {
                        return Err(RalpError::invalid(format!(
                            "record {i}: successor distribution sums to {total}"
                        )));
                    }
                }
                _ => {
                    return Err(RalpError::invalid(format!(
                        "record {i} does not match the {kind:?} sample kind"
                    )))
                }
            }
            if !r.reward.is_finite() || r.state.iter().any(|x| !x.is_finite()) {
                return Err(RalpError::invalid(format!("record {i}: non-finite state or reward")));
            }
            if !seen.insert(state_key(&r.state, r.action)) {
                return Err(RalpError::invalid(format!(
                    "record {i}: duplicate (state, action) pair {:?}/{}",
                    r.state, r.action
                )));
            }
        }
        Ok(Self { kind, records })
    }

    pub fn kind(&self) -> SampleKind {
        self.kind
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn max_reward(&self) -> Option<f64> {
        self.records.iter().map(|r| r.reward).reduce(f64::max)
    }

    /// Distinct source states in first-appearance order.
    pub fn source_states(&self) -> Vec<Vec<f64>> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for r in &self.records {
            if seen.insert(state_key(&r.state, 0)) {
                out.push(r.state.clone());
            }
        }
        out
    }

    /// Applies the estimated (simple samples) or expected (expectation
    /// samples) Bellman operator at every record.
    pub fn backup(&self, v: &ValueFunction, discount: f64) -> Result<Vec<Backup>> {
        self.records
            .iter()
            .map(|r| {
                let mut expected = 0.0;
                for (next, w) in r.successors.weighted() {
                    expected += w * next.value(v)?;
                }
                Ok(Backup { state: r.state.clone(), action: r.action, value: r.reward + discount * expected })
            })
            .collect()
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&read_file(path)?)
    }

    /// Parses the sample file format.
    ///
    /// ```text
    /// kind simple
    /// # state; action; reward; n; successor_1; ...; successor_n
    /// 4; 0; 0; 1; 5
    /// kind expectation
    /// # state; action; reward; k; p_1 @ successor_1; ...
    /// 4; 0; 0; 2; 0.5 @ 5; 0.5 @ terminal
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let mut kind = None;
        let mut records = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let loc = format!("sample line {}", lineno + 1);
            if let Some(k) = line.strip_prefix("kind") {
                kind = Some(match k.trim() {
                    "simple" => SampleKind::Simple,
                    "expectation" => SampleKind::Expectation,
                    other => return Err(RalpError::parse(&loc, format!("unknown sample kind {other:?}"))),
                });
                continue;
            }
            let kind = kind.ok_or_else(|| RalpError::parse(&loc, "records must follow a `kind` line"))?;
            let fields: Vec<&str> = line.split(';').map(str::trim).collect();
            if fields.len() < 5 {
                return Err(RalpError::parse(&loc, "expected state; action; reward; n; successors..."));
            }
            let state = parse_vector(fields[0], &loc)?;
            let action = fields[1].parse().map_err(|_| RalpError::parse(&loc, "bad action id"))?;
            let reward = fields[2].parse().map_err(|_| RalpError::parse(&loc, "bad reward"))?;
            let n: usize = fields[3].parse().map_err(|_| RalpError::parse(&loc, "bad successor count"))?;
            if fields.len() - 4 != n {
                return Err(RalpError::parse(
                    &loc,
                    format!("declared {n} successors but found {}", fields.len() - 4),
                ));
            }
            let succ = &fields[4..];
            let successors = match kind {
                SampleKind::Simple => {
                    Successors::Sampled(succ.iter().map(|f| parse_next(f, &loc)).collect::<Result<_>>()?)
                }
                SampleKind::Expectation => Successors::Distribution(
                    succ.iter()
                        .map(|f| {
                            let (p, s) = f
                                .split_once('@')
                                .ok_or_else(|| RalpError::parse(&loc, "expected `p @ successor`"))?;
                            let p: f64 =
                                p.trim().parse().map_err(|_| RalpError::parse(&loc, "bad probability"))?;
                            Ok((parse_next(s, &loc)?, p))
                        })
                        .collect::<Result<_>>()?,
                ),
            };
            records.push(SampleRecord { state, action, reward, successors });
        }
        let kind = kind.ok_or_else(|| RalpError::parse("sample file", "missing `kind` line"))?;
        Self::new(kind, records)
    }

    /// Serializes in the sample file format. Numbers use the shortest
    /// representation that parses back to the same bits.
    pub fn to_text(&self) -> String {
        let vec = |s: &[f64]| s.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        let next = |n: &NextState| match n {
            NextState::State(s) => vec(s),
            NextState::Terminal => "terminal".to_string(),
        };
        let mut out = String::new();
        let _ = writeln!(
            out,
            "kind {}",
            match self.kind {
                SampleKind::Simple => "simple",
                SampleKind::Expectation => "expectation",
            }
        );
        for r in &self.records {
            let succ: Vec<String> = match &r.successors {
                Successors::Sampled(s) => s.iter().map(next).collect(),
                Successors::Distribution(d) => d.iter().map(|(n, p)| format!("{p:?} @ {}", next(n))).collect(),
            };
            let _ = writeln!(
                out,
                "{}; {}; {:?}; {}; {}",
                vec(&r.state),
                r.action,
                r.reward,
                succ.len(),
                succ.join("; ")
            );
        }
        out
    }
}

fn parse_vector(s: &str, loc: &str) -> Result<Vec<f64>> {
    let v: Vec<f64> = s
        .split_whitespace()
        .map(|x| x.parse().map_err(|_| RalpError::parse(loc, format!("bad number {x:?}"))))
        .collect::<Result<_>>()?;
    if v.is_empty() {
        return Err(RalpError::parse(loc, "empty state vector"));
    }
    Ok(v)
}

fn parse_next(s: &str, loc: &str) -> Result<NextState> {
    if s.trim() == "terminal" {
        Ok(NextState::Terminal)
    } else {
        Ok(NextState::State(parse_vector(s, loc)?))
    }
}

/// `min_k v(s_k) − (L̂v)(s_k, a_k)`; `v` is ε-transitive-feasible on the
/// samples iff the margin is at least `−ε`.
pub fn feasibility_margin(backups: &[Backup], v: &ValueFunction) -> Result<f64> {
    let mut margin = f64::INFINITY;
    for b in backups {
        margin = margin.min(v.value_at(&b.state)? - b.value);
    }
    Ok(margin)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tab(values: &[f64]) -> ValueFunction {
        ValueFunction::Tabular(values.to_vec())
    }

    #[test]
    fn estimated_operator_averages_successors() {
        let s = SampleSet::new(
            SampleKind::Simple,
            vec![SampleRecord::simple(vec![1.0], 0, 1.0, vec![
                NextState::State(vec![2.0]),
                NextState::State(vec![3.0]),
            ])],
        )
        .unwrap();
        let b = s.backup(&tab(&[0.0, 4.0, 6.0]), 0.9).unwrap();
        assert!((b[0].value - 5.5).abs() < 1e-12);
    }

    #[test]
    fn deterministic_successor_gives_reward() {
        let s = SampleSet::new(
            SampleKind::Simple,
            vec![SampleRecord::simple(vec![1.0], 0, 2.5, vec![NextState::State(vec![2.0])])],
        )
        .unwrap();
        assert_eq!(s.backup(&tab(&[9.0, 0.0]), 0.9).unwrap()[0].value, 2.5);
    }

    #[test]
    fn expected_operator_examples() {
        let point = SampleSet::new(
            SampleKind::Expectation,
            vec![SampleRecord::expectation(vec![1.0], 0, 0.0, vec![(NextState::State(vec![2.0]), 1.0)])],
        )
        .unwrap();
        assert!((point.backup(&tab(&[0.0, 2.0]), 0.9).unwrap()[0].value - 1.8).abs() < 1e-12);
        let uniform = SampleSet::new(
            SampleKind::Expectation,
            vec![SampleRecord::expectation(vec![1.0], 0, 1.0, vec![
                (NextState::State(vec![1.0]), 0.5),
                (NextState::State(vec![2.0]), 0.5),
            ])],
        )
        .unwrap();
        assert_eq!(uniform.backup(&tab(&[0.0, 10.0]), 0.5).unwrap()[0].value, 3.5);
    }

    #[test]
    fn empirical_frequencies_match_distribution() {
        let draws = [2.0, 3.0, 2.0, 2.0, 3.0];
        let simple = SampleSet::new(
            SampleKind::Simple,
            vec![SampleRecord::simple(vec![1.0], 0, 0.3, draws.iter().map(|&d| NextState::State(vec![d])).collect())],
        )
        .unwrap();
        let expect = SampleSet::new(
            SampleKind::Expectation,
            vec![SampleRecord::expectation(vec![1.0], 0, 0.3, vec![
                (NextState::State(vec![2.0]), 0.6),
                (NextState::State(vec![3.0]), 0.4),
            ])],
        )
        .unwrap();
        let v = tab(&[1.0, -2.0, 7.0]);
        let a = simple.backup(&v, 0.95).unwrap()[0].value;
        let b = expect.backup(&v, 0.95).unwrap()[0].value;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        let empty = SampleRecord::simple(vec![1.0], 0, 0.0, vec![]);
        assert!(SampleSet::new(SampleKind::Simple, vec![empty]).is_err());
        let bad = SampleRecord::expectation(vec![1.0], 0, 0.0, vec![(NextState::Terminal, 0.9)]);
        assert!(SampleSet::new(SampleKind::Expectation, vec![bad]).is_err());
        let r = SampleRecord::simple(vec![1.0], 0, 0.0, vec![NextState::Terminal]);
        assert!(SampleSet::new(SampleKind::Simple, vec![r.clone(), r.clone()]).is_err());
        assert!(SampleSet::new(SampleKind::Expectation, vec![r]).is_err());
    }

    #[test]
    fn margin_of_shifted_values() {
        let s = SampleSet::new(
            SampleKind::Simple,
            vec![SampleRecord::simple(vec![1.0], 0, 1.0, vec![NextState::State(vec![1.0])])],
        )
        .unwrap();
        // v* = 10 for the self loop with γ = 0.9; shifting down by 1 costs (1 − γ).
        let v = tab(&[9.0]);
        let m = feasibility_margin(&s.backup(&v, 0.9).unwrap(), &v).unwrap();
        assert!((m + 0.1).abs() < 1e-12);
    }

    #[test]
    fn text_format_round_trip() {
        let text = "kind expectation\n1 2; 0; -1.5; 2; 0.25 @ 3 4; 0.75 @ terminal\n";
        let s = SampleSet::parse(text).unwrap();
        assert_eq!(SampleSet::parse(&s.to_text()).unwrap(), s);
        let err = SampleSet::parse("kind simple\n1; 0; 0; 2; 3\n").unwrap_err().to_string();
        assert!(err.contains("declared 2"), "{err}");
        assert!(SampleSet::parse("1; 0; 0; 1; 3\n").is_err());
    }
}
