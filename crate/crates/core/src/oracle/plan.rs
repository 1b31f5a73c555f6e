//! Fixed attack plans and their line-oriented text form.
//!
//! ```text
//! A 4
//! A 5
//! V
//! A 4
//! DECODE H.M->0
//! DECODE H.H->1
//! ```
//!
//! `A n` accesses line `n`, `F n` flushes it, `V` lets the victim run. Each
//! `DECODE` line maps the latency trace of the whole prefix (one character
//! per action: `.` none, `H` hit, `1` L1 hit, `2` L2 hit, `M` miss) to the
//! guessed secret (an address, or `none` for a victim that did not access).

use std::fmt;
use std::str::FromStr;

use super::OracleError;
use crate::cache::LatencyClass;
use crate::env::{Action, Observed, Secret};

/// Per-action latency feedback over a plan prefix.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Trace(pub Vec<Observed>);

impl Trace {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn observed_char(o: Observed) -> char {
    match o {
        Observed::None => '.',
        Observed::Latency(LatencyClass::Hit) => 'H',
        Observed::Latency(LatencyClass::L1Hit) => '1',
        Observed::Latency(LatencyClass::L2Hit) => '2',
        Observed::Latency(LatencyClass::Miss) => 'M',
    }
}

fn char_observed(c: char) -> Option<Observed> {
    Some(match c {
        '.' => Observed::None,
        'H' => Observed::Latency(LatencyClass::Hit),
        '1' => Observed::Latency(LatencyClass::L1Hit),
        '2' => Observed::Latency(LatencyClass::L2Hit),
        'M' => Observed::Latency(LatencyClass::Miss),
        _ => return None,
    })
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &o in &self.0 {
            write!(f, "{}", observed_char(o))?;
        }
        Ok(())
    }
}

impl FromStr for Trace {
    type Err = char;

    fn from_str(s: &str) -> Result<Self, char> {
        s.chars()
            .map(|c| char_observed(c).ok_or(c))
            .collect::<Result<Vec<_>, _>>()
            .map(Trace)
    }
}

/// Non-guess prefix plus a table from observed trace to guessed secret.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AttackPlan {
    pub prefix: Vec<Action>,
    pub decode: Vec<(Trace, Secret)>,
}

impl AttackPlan {
    pub fn guess_for(&self, trace: &Trace) -> Option<Secret> {
        self.decode
            .iter()
            .find(|(t, _)| t == trace)
            .map(|(_, s)| *s)
    }

    pub fn to_text(&self) -> String {
        self.to_string()
    }

    pub fn parse(text: &str) -> Result<Self, OracleError> {
        text.parse()
    }
}

impl fmt::Display for AttackPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for action in &self.prefix {
            match action {
                Action::Access(a) => writeln!(f, "A {a}")?,
                Action::Flush(a) => writeln!(f, "F {a}")?,
                Action::Trigger => writeln!(f, "V")?,
                Action::Guess(_) => return Err(fmt::Error),
            }
        }
        for (trace, secret) in &self.decode {
            writeln!(f, "DECODE {trace}->{secret}")?;
        }
        Ok(())
    }
}

impl FromStr for AttackPlan {
    type Err = OracleError;

    fn from_str(text: &str) -> Result<Self, OracleError> {
        let mut plan = AttackPlan::default();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |message: String| OracleError::Parse {
                line: line_no,
                message,
            };
            if let Some(rest) = line.strip_prefix("DECODE ") {
                let (trace, secret) = rest
                    .split_once("->")
                    .ok_or_else(|| err("DECODE needs `trace->secret`".into()))?;
                let trace: Trace = trace
                    .parse()
                    .map_err(|c| err(format!("bad trace character {c:?}")))?;
                if trace.len() != plan.prefix.len() {
                    return Err(err(format!(
                        "trace has {} entries, prefix has {} actions",
                        trace.len(),
                        plan.prefix.len()
                    )));
                }
                let secret = secret
                    .parse()
                    .map_err(|_| err(format!("bad secret {secret:?}")))?;
                plan.decode.push((trace, secret));
                continue;
            }
            if !plan.decode.is_empty() {
                return Err(err("actions must precede DECODE lines".into()));
            }
            let action = match line.split_once(' ') {
                None if line == "V" => Action::Trigger,
                Some(("A", n)) => Action::Access(n.parse().map_err(|_| err(format!("bad address {n:?}")))?),
                Some(("F", n)) => Action::Flush(n.parse().map_err(|_| err(format!("bad address {n:?}")))?),
                _ => return Err(err(format!("unrecognized line {line:?}"))),
            };
            plan.prefix.push(action);
        }
        Ok(plan)
    }
}
