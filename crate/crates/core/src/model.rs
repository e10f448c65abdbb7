//! Single-armed MDP models, restless bandit instances and the built-in
//! benchmark instances.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Binary action set: index 0 is passive, 1 is active.
pub const ACTIONS: [usize; 2] = [0, 1];

/// Discrete-time arm: `transition[s][a][s']` and `reward[s][a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtModel<T> {
    transition: Vec<[Vec<T>; 2]>,
    reward: Vec<[T; 2]>,
}

impl<T: Scalar> DtModel<T> {
    /// Builds a model after checking only the tensor shapes. Numerical
    /// invariants are reported by [`Instance::validate`].
    pub fn new(transition: Vec<[Vec<T>; 2]>, reward: Vec<[T; 2]>) -> Result<Self> {
        let n = transition.len();
        if n == 0 {
            return Err(Error::Malformed {
                field: "transition".into(),
                message: "at least one state is required".into(),
            });
        }
        if reward.len() != n {
            return Err(Error::Malformed {
                field: "reward".into(),
                message: format!("expected {n} rows, found {}", reward.len()),
            });
        }
        for (s, rows) in transition.iter().enumerate() {
            for (a, row) in rows.iter().enumerate() {
                if row.len() != n {
                    return Err(Error::Malformed {
                        field: "transition".into(),
                        message: format!("row ({s},{a}) has {} entries, expected {n}", row.len()),
                    });
                }
            }
        }
        Ok(Self { transition, reward })
    }

    pub fn n_states(&self) -> usize {
        self.transition.len()
    }

    #[inline]
    pub fn p(&self, s: usize, a: usize, next: usize) -> T {
        self.transition[s][a][next]
    }

    #[inline]
    pub fn row(&self, s: usize, a: usize) -> &[T] {
        &self.transition[s][a]
    }

    #[inline]
    pub fn r(&self, s: usize, a: usize) -> T {
        self.reward[s][a]
    }

    pub fn rewards(&self) -> &[[T; 2]] {
        &self.reward
    }

    pub fn transitions(&self) -> &[[Vec<T>; 2]] {
        &self.transition
    }

    pub fn r_max(&self) -> T {
        r_max_of(&self.reward)
    }

    /// Same model with every reward shifted by `c`.
    pub fn shift_rewards(&self, c: T) -> Self {
        Self {
            transition: self.transition.clone(),
            reward: self.reward.iter().map(|r| [r[0] + c, r[1] + c]).collect(),
        }
    }

    /// Relabels states so that old state `s` becomes `perm[s]`.
    pub fn permute(&self, perm: &[usize]) -> Self {
        let n = self.n_states();
        let mut transition = vec![[vec![T::zero(); n], vec![T::zero(); n]]; n];
        let mut reward = vec![[T::zero(); 2]; n];
        for s in 0..n {
            for a in ACTIONS {
                for s2 in 0..n {
                    transition[perm[s]][a][perm[s2]] = self.transition[s][a][s2];
                }
                reward[perm[s]][a] = self.reward[s][a];
            }
        }
        Self { transition, reward }
    }

    fn check(&self, prefix: &str, report: &mut ValidationReport) {
        let tol = T::model_tol();
        for (s, rows) in self.transition.iter().enumerate() {
            for (a, row) in rows.iter().enumerate() {
                let mut sum = T::zero();
                for (s2, &p) in row.iter().enumerate() {
                    if !p.is_finite() || p < T::zero() {
                        report.push(
                            format!("{prefix}transition[{s}][{a}][{s2}]"),
                            format!("negative or non-finite probability {p}"),
                        );
                    }
                    sum = sum + p;
                }
                if (sum - T::one()).abs() > tol {
                    report.push(
                        format!("{prefix}transition[{s}][{a}]"),
                        format!("row (s={s}, a={a}) sums to {sum}, expected 1"),
                    );
                }
            }
        }
        check_rewards(&self.reward, prefix, "reward", report);
    }
}

/// Continuous-time arm: off-diagonal rates `rates[s][a][s']` and reward
/// rates. The diagonal is always stored as zero; the total outflow
/// `G(s,a)` is derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtModel<T> {
    rates: Vec<[Vec<T>; 2]>,
    reward_rate: Vec<[T; 2]>,
}

impl<T: Scalar> CtModel<T> {
    /// Accepts a diagonal of either zero or `-G(s,a)`; anything else is a
    /// malformed-field error. The stored diagonal is zero.
    pub fn new(mut rates: Vec<[Vec<T>; 2]>, reward_rate: Vec<[T; 2]>) -> Result<Self> {
        let n = rates.len();
        if n == 0 {
            return Err(Error::Malformed {
                field: "rates".into(),
                message: "at least one state is required".into(),
            });
        }
        if reward_rate.len() != n {
            return Err(Error::Malformed {
                field: "reward".into(),
                message: format!("expected {n} rows, found {}", reward_rate.len()),
            });
        }
        for (s, rows) in rates.iter_mut().enumerate() {
            for (a, row) in rows.iter_mut().enumerate() {
                if row.len() != n {
                    return Err(Error::Malformed {
                        field: "rates".into(),
                        message: format!("row ({s},{a}) has {} entries, expected {n}", row.len()),
                    });
                }
                let off: T = row.iter().enumerate().filter(|&(j, _)| j != s).map(|(_, &g)| g).sum();
                let diag = row[s];
                let tol = T::model_tol();
                if diag.abs() > tol && (diag + off).abs() > tol {
                    return Err(Error::Malformed {
                        field: "rates".into(),
                        message: format!(
                            "diagonal ({s},{a}) = {diag} is neither 0 nor the negated outflow {}",
                            -off
                        ),
                    });
                }
                row[s] = T::zero();
            }
        }
        Ok(Self { rates, reward_rate })
    }

    pub fn n_states(&self) -> usize {
        self.rates.len()
    }

    /// Off-diagonal rate, or `-G(s,a)` on the diagonal.
    #[inline]
    pub fn g(&self, s: usize, a: usize, next: usize) -> T {
        if s == next {
            -self.total_rate(s, a)
        } else {
            self.rates[s][a][next]
        }
    }

    /// `G(s,a)`, the total rate of leaving `s` under `a`.
    #[inline]
    pub fn total_rate(&self, s: usize, a: usize) -> T {
        self.rates[s][a].iter().copied().sum()
    }

    /// Off-diagonal rate row (diagonal entry is zero).
    #[inline]
    pub fn rate_row(&self, s: usize, a: usize) -> &[T] {
        &self.rates[s][a]
    }

    #[inline]
    pub fn r(&self, s: usize, a: usize) -> T {
        self.reward_rate[s][a]
    }

    pub fn rewards(&self) -> &[[T; 2]] {
        &self.reward_rate
    }

    pub fn r_max(&self) -> T {
        r_max_of(&self.reward_rate)
    }

    /// Maximum total outflow rate over all state-action pairs.
    pub fn g_max(&self) -> T {
        let mut best = T::zero();
        for s in 0..self.n_states() {
            for a in ACTIONS {
                best = best.max(self.total_rate(s, a));
            }
        }
        best
    }

    pub fn permute(&self, perm: &[usize]) -> Self {
        let n = self.n_states();
        let mut rates = vec![[vec![T::zero(); n], vec![T::zero(); n]]; n];
        let mut reward_rate = vec![[T::zero(); 2]; n];
        for s in 0..n {
            for a in ACTIONS {
                for s2 in 0..n {
                    rates[perm[s]][a][perm[s2]] = self.rates[s][a][s2];
                }
                reward_rate[perm[s]][a] = self.reward_rate[s][a];
            }
        }
        Self { rates, reward_rate }
    }

    pub fn shift_rewards(&self, c: T) -> Self {
        Self {
            rates: self.rates.clone(),
            reward_rate: self.reward_rate.iter().map(|r| [r[0] + c, r[1] + c]).collect(),
        }
    }

    fn check(&self, prefix: &str, report: &mut ValidationReport) {
        for (s, rows) in self.rates.iter().enumerate() {
            for (a, row) in rows.iter().enumerate() {
                for (s2, &g) in row.iter().enumerate() {
                    if s2 == s {
                        continue;
                    }
                    if !g.is_finite() {
                        report.push(format!("{prefix}rates[{s}][{a}][{s2}]"), format!("non-finite rate {g}"));
                    } else if g < T::zero() {
                        report.push(format!("{prefix}rates[{s}][{a}][{s2}]"), format!("negative rate {g}"));
                    }
                }
            }
        }
        check_rewards(&self.reward_rate, prefix, "reward", report);
    }
}

fn r_max_of<T: Scalar>(reward: &[[T; 2]]) -> T {
    reward
        .iter()
        .flat_map(|r| r.iter())
        .fold(T::zero(), |m, &x| m.max(x.abs()))
}

fn check_rewards<T: Scalar>(reward: &[[T; 2]], prefix: &str, name: &str, report: &mut ValidationReport) {
    for (s, r) in reward.iter().enumerate() {
        for (a, &x) in r.iter().enumerate() {
            if !x.is_finite() {
                report.push(format!("{prefix}{name}[{s}][{a}]"), format!("non-finite reward {x}"));
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArmModel<T> {
    Dt(DtModel<T>),
    Ct(CtModel<T>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Dt,
    Ct,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Dt => "dt",
            ModelKind::Ct => "ct",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dt" => Ok(ModelKind::Dt),
            "ct" => Ok(ModelKind::Ct),
            other => Err(Error::Config(format!("unknown model kind `{other}` (dt or ct)"))),
        }
    }
}

impl<T: Scalar> ArmModel<T> {
    pub fn kind(&self) -> ModelKind {
        match self {
            ArmModel::Dt(_) => ModelKind::Dt,
            ArmModel::Ct(_) => ModelKind::Ct,
        }
    }

    pub fn n_states(&self) -> usize {
        match self {
            ArmModel::Dt(m) => m.n_states(),
            ArmModel::Ct(m) => m.n_states(),
        }
    }

    pub fn r(&self, s: usize, a: usize) -> T {
        match self {
            ArmModel::Dt(m) => m.r(s, a),
            ArmModel::Ct(m) => m.r(s, a),
        }
    }

    pub fn r_max(&self) -> T {
        match self {
            ArmModel::Dt(m) => m.r_max(),
            ArmModel::Ct(m) => m.r_max(),
        }
    }

    pub fn as_dt(&self) -> Option<&DtModel<T>> {
        match self {
            ArmModel::Dt(m) => Some(m),
            ArmModel::Ct(_) => None,
        }
    }

    pub fn as_ct(&self) -> Option<&CtModel<T>> {
        match self {
            ArmModel::Ct(m) => Some(m),
            ArmModel::Dt(_) => None,
        }
    }

    pub fn shift_rewards(&self, c: T) -> Self {
        match self {
            ArmModel::Dt(m) => ArmModel::Dt(m.shift_rewards(c)),
            ArmModel::Ct(m) => ArmModel::Ct(m.shift_rewards(c)),
        }
    }

    fn check(&self, prefix: &str, report: &mut ValidationReport) {
        match self {
            ArmModel::Dt(m) => m.check(prefix, report),
            ArmModel::Ct(m) => m.check(prefix, report),
        }
    }
}

/// One arm type of a (possibly heterogeneous) instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmType<T> {
    pub beta: T,
    pub model: ArmModel<T>,
}

/// Restless bandit instance without a fixed number of arms.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance<T> {
    alpha: T,
    types: Vec<ArmType<T>>,
}

impl<T: Scalar> Instance<T> {
    /// Homogeneous instance (one type with `beta = 1`), validated.
    pub fn homogeneous(model: ArmModel<T>, alpha: T) -> Result<Self> {
        Self::heterogeneous(vec![ArmType { beta: T::one(), model }], alpha)
    }

    /// Multi-type instance, validated.
    pub fn heterogeneous(types: Vec<ArmType<T>>, alpha: T) -> Result<Self> {
        let inst = Self::from_parts(types, alpha);
        let report = inst.validate();
        if report.is_pass() {
            Ok(inst)
        } else {
            Err(Error::Validation(report))
        }
    }

    /// Builds without validation; use [`Instance::validate`] to inspect.
    pub fn from_parts(types: Vec<ArmType<T>>, alpha: T) -> Self {
        Self { alpha, types }
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn types(&self) -> &[ArmType<T>] {
        &self.types
    }

    pub fn n_types(&self) -> usize {
        self.types.len()
    }

    pub fn is_homogeneous(&self) -> bool {
        self.types.len() == 1
    }

    /// Model of the first (or only) type.
    pub fn model(&self) -> &ArmModel<T> {
        &self.types[0].model
    }

    pub fn kind(&self) -> ModelKind {
        self.types[0].model.kind()
    }

    /// Largest |r| over every type.
    pub fn r_max(&self) -> T {
        self.types.iter().fold(T::zero(), |m, t| m.max(t.model.r_max()))
    }

    /// Collects every violated invariant with its location.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let tol = T::model_tol();
        if !(self.alpha > T::zero() && self.alpha < T::one()) {
            report.push("alpha", format!("budget fraction {} outside (0,1)", self.alpha));
        }
        if self.types.is_empty() {
            report.push("types", "at least one arm type is required".to_string());
            return report;
        }
        let kind = self.types[0].model.kind();
        let mut beta_sum = T::zero();
        for (k, ty) in self.types.iter().enumerate() {
            let prefix = if self.types.len() == 1 {
                String::new()
            } else {
                format!("types[{k}].")
            };
            if !(ty.beta > T::zero()) || ty.beta > T::one() + tol {
                report.push(
                    format!("{prefix}beta"),
                    format!("type fraction {} outside (0,1]", ty.beta),
                );
            }
            if ty.model.kind() != kind {
                report.push(
                    format!("{prefix}kind"),
                    "all types must share one model kind".to_string(),
                );
            }
            beta_sum = beta_sum + ty.beta;
            ty.model.check(&prefix, &mut report);
        }
        if (beta_sum - T::one()).abs() > tol {
            report.push("types", format!("type fractions sum to {beta_sum}, expected 1"));
        }
        report
    }

    /// Number of active arms `alpha*N`, rejecting non-integral budgets.
    pub fn budget(&self, n_arms: usize) -> Result<usize> {
        integral_count("alpha", self.alpha.as_f64(), n_arms)
    }

    /// Arms per type `beta_k*N`, rejecting non-integral counts.
    pub fn type_counts(&self, n_arms: usize) -> Result<Vec<usize>> {
        self.types
            .iter()
            .enumerate()
            .map(|(k, t)| integral_count(&format!("beta[{k}]"), t.beta.as_f64(), n_arms))
            .collect()
    }

    /// Same instance with states relabelled by `perm` in every type.
    pub fn permute_states(&self, perm: &[usize]) -> Self {
        let types = self
            .types
            .iter()
            .map(|t| ArmType {
                beta: t.beta,
                model: match &t.model {
                    ArmModel::Dt(m) => ArmModel::Dt(m.permute(perm)),
                    ArmModel::Ct(m) => ArmModel::Ct(m.permute(perm)),
                },
            })
            .collect();
        Self::from_parts(types, self.alpha)
    }
}

fn integral_count(what: &str, frac: f64, n: usize) -> Result<usize> {
    let value = frac * n as f64;
    let rounded = value.round();
    if (value - rounded).abs() > 1e-9 * (1.0 + value.abs()) {
        return Err(Error::Divisibility {
            what: what.to_string(),
            value,
            n,
        });
    }
    Ok(rounded as usize)
}

/// Location-tagged invariant violations.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

impl ValidationReport {
    pub fn is_pass(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, location: impl Into<String>, message: String) {
        self.violations.push(Violation {
            location: location.into(),
            message,
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_pass() {
            return f.write_str("pass");
        }
        for v in &self.violations {
            writeln!(f, "  {}: {}", v.location, v.message)?;
        }
        Ok(())
    }
}

/// Stochastic single-armed policy `probs[s] = [pi(0|s), pi(1|s)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmPolicy<T> {
    probs: Vec<[T; 2]>,
}

impl<T: Scalar> ArmPolicy<T> {
    pub fn new(probs: Vec<[T; 2]>) -> Result<Self> {
        let tol = T::model_tol();
        for (s, row) in probs.iter().enumerate() {
            if row[0] < -tol || row[1] < -tol || (row[0] + row[1] - T::one()).abs() > tol {
                return Err(Error::Malformed {
                    field: "probs".into(),
                    message: format!("row {s} = [{}, {}] is not a distribution", row[0], row[1]),
                });
            }
        }
        Ok(Self { probs })
    }

    /// Deterministic policy from an action per state.
    pub fn deterministic(actions: &[usize]) -> Self {
        Self {
            probs: actions
                .iter()
                .map(|&a| {
                    if a == 1 {
                        [T::zero(), T::one()]
                    } else {
                        [T::one(), T::zero()]
                    }
                })
                .collect(),
        }
    }

    /// The all-one policy.
    pub fn all_active(n_states: usize) -> Self {
        Self::deterministic(&vec![1; n_states])
    }

    pub fn n_states(&self) -> usize {
        self.probs.len()
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> T {
        self.probs[s][a]
    }

    pub fn rows(&self) -> &[[T; 2]] {
        &self.probs
    }

    pub fn permute(&self, perm: &[usize]) -> Self {
        let mut probs = vec![[T::zero(); 2]; self.probs.len()];
        for (s, row) in self.probs.iter().enumerate() {
            probs[perm[s]] = *row;
        }
        Self { probs }
    }
}

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 3] = ["example2", "example4", "example2-ct"];

const EXAMPLE2_P0: [[f64; 3]; 3] = [
    [0.02232142, 0.10229283, 0.87538575],
    [0.03426605, 0.17175704, 0.79397691],
    [0.52324756, 0.45523298, 0.02151947],
];
const EXAMPLE2_P1: [[f64; 3]; 3] = [
    [0.14874601, 0.30435809, 0.54689589],
    [0.56845754, 0.41117331, 0.02036915],
    [0.25265570, 0.27310439, 0.4742399],
];
const EXAMPLE2_R1: [f64; 3] = [0.37401552, 0.11740814, 0.07866135];

const EXAMPLE4_P_RIGHT: [f64; 8] = [0.1; 8];
const EXAMPLE4_P_LEFT: [f64; 8] = [1.0, 1.0, 0.48, 0.47, 0.46, 0.45, 0.44, 0.43];

/// Three-state counterexample to the global attractor property.
///
/// The published rows are rounded to eight decimals and some miss 1 by
/// 1e-8, so each row is rescaled by its sum.
pub fn example2<T: Scalar>() -> DtModel<T> {
    let normalized = |row: &[f64; 3]| -> Vec<T> {
        let total: f64 = row.iter().sum();
        row.iter().map(|&p| T::lit(p / total)).collect()
    };
    let transition = (0..3)
        .map(|s| [normalized(&EXAMPLE2_P0[s]), normalized(&EXAMPLE2_P1[s])])
        .collect();
    let reward = EXAMPLE2_R1.iter().map(|&r| [T::zero(), T::lit(r)]).collect();
    DtModel::new(transition, reward).expect("example2 shape")
}

/// Eight-state cycle where the preferred action moves right.
pub fn example4<T: Scalar>() -> DtModel<T> {
    let n = 8;
    let mut transition = vec![[vec![T::zero(); n], vec![T::zero(); n]]; n];
    for s in 0..n {
        let preferred = if s < 4 { 1 } else { 0 };
        for a in ACTIONS {
            let row = &mut transition[s][a];
            if a == preferred {
                let p = T::lit(EXAMPLE4_P_RIGHT[s]);
                row[(s + 1) % n] = row[(s + 1) % n] + p;
                row[s] = row[s] + T::one() - p;
            } else {
                let p = T::lit(EXAMPLE4_P_LEFT[s]);
                let left = s.saturating_sub(1);
                row[left] = row[left] + p;
                row[s] = row[s] + T::one() - p;
            }
        }
    }
    let mut reward = vec![[T::zero(); 2]; n];
    reward[7][0] = T::lit(EXAMPLE4_P_RIGHT[7]);
    DtModel::new(transition, reward).expect("example4 shape")
}

/// Continuous-time twin of example2: off-diagonal probabilities become rates.
pub fn example2_ct<T: Scalar>() -> CtModel<T> {
    let off_diagonal = |row: &[f64; 3], s: usize| -> Vec<T> {
        (0..3)
            .map(|j| if j == s { T::zero() } else { T::lit(row[j]) })
            .collect()
    };
    let rates = (0..3)
        .map(|s| [off_diagonal(&EXAMPLE2_P0[s], s), off_diagonal(&EXAMPLE2_P1[s], s)])
        .collect();
    CtModel::new(rates, example2::<T>().rewards().to_vec()).expect("example2-ct shape")
}

/// Looks up a built-in instance by name.
pub fn builtin<T: Scalar>(name: &str) -> Result<Instance<T>> {
    match name {
        "example2" => Instance::homogeneous(ArmModel::Dt(example2()), T::lit(0.4)),
        "example4" => Instance::homogeneous(ArmModel::Dt(example4()), T::lit(0.5)),
        "example2-ct" => Instance::homogeneous(ArmModel::Ct(example2_ct()), T::lit(0.4)),
        other => Err(Error::UnknownInstance(other.to_string())),
    }
}
