//! Policy selector strings and their resolution against an instance.
//!
//! Grammar: `ftva[:good-first|:uniform]`, `priority:lagrangian[:LAMBDA]`,
//! `priority:list:S>S>...`, `twoclass[:{S,S,...}|{S,...}]`. States are
//! 0-based.

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::lp::index::{lagrangian_indices, priority_order};
use crate::lp::relax::{policy_from_occupation, OccupationMeasure};
use crate::model::{Instance, ModelKind};
use crate::policy::ftva::{FtvaPlan, TieBreak};
use crate::policy::priority::PriorityPolicy;
use crate::scalar::{positive, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub enum PolicySelector {
    Ftva(TieBreak),
    /// Lagrangian priority; `None` uses the relaxation's budget multiplier.
    Lagrangian(Option<f64>),
    List(Vec<usize>),
    /// Two classes; `None` splits by whether the optimal single-armed
    /// policy ever activates the state.
    TwoClass(Option<(Vec<usize>, Vec<usize>)>),
}

impl PolicySelector {
    pub fn is_ftva(&self) -> bool {
        matches!(self, PolicySelector::Ftva(_))
    }
}

impl fmt::Display for PolicySelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[usize], sep: &str| v.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(sep);
        match self {
            PolicySelector::Ftva(TieBreak::GoodFirst) => write!(f, "ftva"),
            PolicySelector::Ftva(tb) => write!(f, "ftva:{tb}"),
            PolicySelector::Lagrangian(None) => write!(f, "priority:lagrangian"),
            PolicySelector::Lagrangian(Some(l)) => write!(f, "priority:lagrangian:{l}"),
            PolicySelector::List(order) => write!(f, "priority:list:{}", join(order, ">")),
            PolicySelector::TwoClass(None) => write!(f, "twoclass"),
            PolicySelector::TwoClass(Some((a, b))) => {
                write!(f, "twoclass:{{{}}}|{{{}}}", join(a, ","), join(b, ","))
            }
        }
    }
}

impl Serialize for PolicySelector {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

fn unknown(s: &str) -> Error {
    Error::UnknownPolicy(s.to_string())
}

fn states(list: &str, sep: char, whole: &str) -> Result<Vec<usize>> {
    list.split(sep)
        .map(|t| t.trim().parse::<usize>().map_err(|_| unknown(whole)))
        .collect()
}

fn braced(part: &str, whole: &str) -> Result<Vec<usize>> {
    let inner = part
        .trim()
        .strip_prefix('{')
        .and_then(|p| p.strip_suffix('}'))
        .ok_or_else(|| unknown(whole))?;
    states(inner, ',', whole)
}

impl FromStr for PolicySelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "ftva" || s == "ftva-ct" {
            return Ok(PolicySelector::Ftva(TieBreak::GoodFirst));
        }
        if let Some(tb) = s.strip_prefix("ftva:") {
            return Ok(PolicySelector::Ftva(tb.parse()?));
        }
        if s == "priority:lagrangian" {
            return Ok(PolicySelector::Lagrangian(None));
        }
        if let Some(l) = s.strip_prefix("priority:lagrangian:") {
            let l: f64 = l.parse().map_err(|_| unknown(s))?;
            return Ok(PolicySelector::Lagrangian(Some(l)));
        }
        if let Some(order) = s.strip_prefix("priority:list:") {
            return Ok(PolicySelector::List(states(order, '>', s)?));
        }
        if s == "twoclass" {
            return Ok(PolicySelector::TwoClass(None));
        }
        if let Some(spec) = s.strip_prefix("twoclass:") {
            let (a, b) = spec.split_once('|').ok_or_else(|| unknown(s))?;
            return Ok(PolicySelector::TwoClass(Some((braced(a, s)?, braced(b, s)?))));
        }
        Err(unknown(s))
    }
}

/// A selector bound to an instance.
#[derive(Debug, Clone, PartialEq)]
pub enum ResolvedPolicy<T> {
    Ftva { plan: FtvaPlan<T>, tiebreak: TieBreak },
    Priority(PriorityPolicy),
}

/// Binds `selector` to `instance`, using the solved relaxation for FTVA
/// plans, the default multiplier and the default two-class split.
pub fn resolve<T: Scalar>(
    selector: &PolicySelector,
    instance: &Instance<T>,
    measure: &OccupationMeasure<T>,
) -> Result<ResolvedPolicy<T>> {
    if let PolicySelector::Ftva(tiebreak) = selector {
        return Ok(ResolvedPolicy::Ftva {
            plan: FtvaPlan::from_occupation(measure),
            tiebreak: *tiebreak,
        });
    }
    let unsupported = |kind| Error::UnsupportedPolicy {
        policy: selector.to_string(),
        kind,
    };
    if instance.kind() != ModelKind::Dt {
        return Err(unsupported("ct"));
    }
    if !instance.is_homogeneous() {
        return Err(unsupported("heterogeneous"));
    }
    let model = instance.model().as_dt().expect("kind checked");
    let n = model.n_states();
    let priority = match selector {
        PolicySelector::Ftva(_) => unreachable!(),
        PolicySelector::Lagrangian(lambda) => {
            let lambda = lambda.map_or(measure.budget_dual, T::lit);
            let idx = lagrangian_indices(model, lambda)?;
            PriorityPolicy::strict(&priority_order(&idx), n)?
        }
        PolicySelector::List(order) => PriorityPolicy::strict(order, n)?,
        PolicySelector::TwoClass(Some((a, b))) => PriorityPolicy::new(vec![a.clone(), b.clone()], n)?,
        PolicySelector::TwoClass(None) => {
            let pol = policy_from_occupation(measure.homogeneous());
            let (a, b): (Vec<usize>, Vec<usize>) = (0..n).partition(|&s| positive(pol.prob(s, 1)));
            PriorityPolicy::new(vec![a, b], n)?
        }
    };
    Ok(ResolvedPolicy::Priority(priority))
}
