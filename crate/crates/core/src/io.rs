//! JSON instance files.
//!
//! ```json
//! { "kind": "dt", "n_states": 3, "alpha": 0.4,
//!   "transition": [[[..], [..]], ...], "reward": [[r0, r1], ...] }
//! ```
//!
//! Continuous-time files use `"kind": "ct"` and `"rates"` instead of
//! `"transition"`. Heterogeneous files put the model fields inside
//! `"types": [{ "beta": 0.5, "n_states": .., ... }]`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ArmModel, ArmPolicy, ArmType, CtModel, DtModel, Instance, ModelKind};
use crate::scalar::Scalar;

#[derive(Debug, Default)]
struct RawModel {
    n_states: Option<usize>,
    transition: Option<Vec<Vec<Vec<f64>>>>,
    rates: Option<Vec<Vec<Vec<f64>>>>,
    reward: Option<Vec<Vec<f64>>>,
}

macro_rules! model_fields {
    ($(#[$m:meta])* struct $name:ident { $($extra:tt)* }) => {
        $(#[$m])*
        struct $name {
            $($extra)*
            #[serde(default, skip_serializing_if = "Option::is_none")]
            n_states: Option<usize>,
            #[serde(default, skip_serializing_if = "Option::is_none")]
            transition: Option<Vec<Vec<Vec<f64>>>>,
            #[serde(default, skip_serializing_if = "Option::is_none")]
            rates: Option<Vec<Vec<Vec<f64>>>>,
            #[serde(default, skip_serializing_if = "Option::is_none")]
            reward: Option<Vec<Vec<f64>>>,
        }

        impl $name {
            fn take_model(&mut self) -> RawModel {
                RawModel {
                    n_states: self.n_states.take(),
                    transition: self.transition.take(),
                    rates: self.rates.take(),
                    reward: self.reward.take(),
                }
            }

            fn put_model(&mut self, m: RawModel) {
                self.n_states = m.n_states;
                self.transition = m.transition;
                self.rates = m.rates;
                self.reward = m.reward;
            }
        }
    };
}

model_fields! {
    #[derive(Debug, Default, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct RawType {
        beta: Option<f64>,
    }
}

model_fields! {
    #[derive(Debug, Default, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct RawInstance {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default)]
        kind: Option<ModelKind>,
        #[serde(default)]
        alpha: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        types: Option<Vec<RawType>>,
    }
}

/// Parses and validates an instance from JSON text.
pub fn parse_instance<T: Scalar>(text: &str) -> Result<Instance<T>> {
    let mut raw: RawInstance = serde_json::from_str(text)?;
    let kind = raw.kind.ok_or_else(|| Error::MissingField("kind".into()))?;
    let alpha = raw.alpha.ok_or_else(|| Error::MissingField("alpha".into()))?;
    let types = match raw.types.take() {
        Some(types) => {
            if types.is_empty() {
                return Err(Error::Malformed {
                    field: "types".into(),
                    message: "empty type list".into(),
                });
            }
            types
                .into_iter()
                .enumerate()
                .map(|(k, mut t)| {
                    let beta = t.beta.ok_or_else(|| Error::MissingField(format!("types[{k}].beta")))?;
                    Ok(ArmType {
                        beta: T::lit(beta),
                        model: model_from_raw(kind, t.take_model(), &format!("types[{k}]."))?,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
        None => vec![ArmType {
            beta: T::one(),
            model: model_from_raw(kind, raw.take_model(), "")?,
        }],
    };
    let inst = Instance::from_parts(types, T::lit(alpha));
    let report = inst.validate();
    if report.is_pass() {
        Ok(inst)
    } else {
        Err(Error::Validation(report))
    }
}

pub fn load_instance<T: Scalar>(path: impl AsRef<Path>) -> Result<Instance<T>> {
    let text = std::fs::read_to_string(path)?;
    parse_instance(&text)
}

/// Resolves a built-in name, otherwise reads the path.
pub fn resolve_instance<T: Scalar>(reference: &str) -> Result<Instance<T>> {
    let name = reference.strip_prefix("builtin:").unwrap_or(reference);
    if crate::model::BUILTIN_NAMES.contains(&name) {
        crate::model::builtin(name)
    } else if Path::new(reference).exists() {
        load_instance(reference)
    } else {
        Err(Error::UnknownInstance(reference.to_string()))
    }
}

pub fn instance_to_json<T: Scalar>(inst: &Instance<T>) -> String {
    let kind = inst.kind();
    let (model, types) = if inst.is_homogeneous() {
        (model_to_raw(&inst.types()[0].model), None)
    } else {
        let types = inst
            .types()
            .iter()
            .map(|t| {
                let mut raw = RawType {
                    beta: Some(t.beta.as_f64()),
                    ..Default::default()
                };
                raw.put_model(model_to_raw(&t.model));
                raw
            })
            .collect();
        (RawModel::default(), Some(types))
    };
    let mut raw = RawInstance {
        kind: Some(kind),
        alpha: Some(inst.alpha().as_f64()),
        types,
        ..Default::default()
    };
    raw.put_model(model);
    serde_json::to_string_pretty(&raw).expect("instance serializes")
}

pub fn save_instance<T: Scalar>(inst: &Instance<T>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, instance_to_json(inst))?;
    Ok(())
}

/// Policy file: `{ "probs": [[p0, p1], ...] }`.
pub fn load_policy<T: Scalar>(path: impl AsRef<Path>) -> Result<ArmPolicy<T>> {
    #[derive(Deserialize)]
    struct RawPolicy {
        probs: Vec<[f64; 2]>,
    }
    let raw: RawPolicy = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    ArmPolicy::new(raw.probs.into_iter().map(|[a, b]| [T::lit(a), T::lit(b)]).collect())
}

fn model_from_raw<T: Scalar>(kind: ModelKind, raw: RawModel, prefix: &str) -> Result<ArmModel<T>> {
    let n_states = raw
        .n_states
        .ok_or_else(|| Error::MissingField(format!("{prefix}n_states")))?;
    let reward = raw
        .reward
        .ok_or_else(|| Error::MissingField(format!("{prefix}reward")))?;
    let reward = pairs(reward, n_states, &format!("{prefix}reward"))?;
    match kind {
        ModelKind::Dt => {
            let t = raw
                .transition
                .ok_or_else(|| Error::MissingField(format!("{prefix}transition")))?;
            let t = tensor(t, n_states, &format!("{prefix}transition"))?;
            Ok(ArmModel::Dt(DtModel::new(t, reward)?))
        }
        ModelKind::Ct => {
            let g = raw.rates.ok_or_else(|| Error::MissingField(format!("{prefix}rates")))?;
            let g = tensor(g, n_states, &format!("{prefix}rates"))?;
            Ok(ArmModel::Ct(CtModel::new(g, reward)?))
        }
    }
}

fn tensor<T: Scalar>(raw: Vec<Vec<Vec<f64>>>, n: usize, field: &str) -> Result<Vec<[Vec<T>; 2]>> {
    if raw.len() != n {
        return Err(Error::Malformed {
            field: field.into(),
            message: format!("expected {n} states, found {}", raw.len()),
        });
    }
    raw.into_iter()
        .enumerate()
        .map(|(s, rows)| {
            if rows.len() != 2 {
                return Err(Error::Malformed {
                    field: field.into(),
                    message: format!("state {s} has {} actions, expected 2", rows.len()),
                });
            }
            let mut it = rows.into_iter().map(|row| {
                if row.len() != n {
                    Err(Error::Malformed {
                        field: field.into(),
                        message: format!("state {s} row has {} entries, expected {n}", row.len()),
                    })
                } else {
                    Ok(row.into_iter().map(T::lit).collect::<Vec<T>>())
                }
            });
            let r0 = it.next().expect("two rows")?;
            let r1 = it.next().expect("two rows")?;
            Ok([r0, r1])
        })
        .collect()
}

fn pairs<T: Scalar>(raw: Vec<Vec<f64>>, n: usize, field: &str) -> Result<Vec<[T; 2]>> {
    if raw.len() != n {
        return Err(Error::Malformed {
            field: field.into(),
            message: format!("expected {n} states, found {}", raw.len()),
        });
    }
    raw.into_iter()
        .enumerate()
        .map(|(s, r)| match r.as_slice() {
            [r0, r1] => Ok([T::lit(*r0), T::lit(*r1)]),
            _ => Err(Error::Malformed {
                field: field.into(),
                message: format!("state {s} has {} entries, expected 2", r.len()),
            }),
        })
        .collect()
}

fn model_to_raw<T: Scalar>(model: &ArmModel<T>) -> RawModel {
    let pairs = |r: &[[T; 2]]| -> Vec<Vec<f64>> { r.iter().map(|x| vec![x[0].as_f64(), x[1].as_f64()]).collect() };
    match model {
        ArmModel::Dt(m) => RawModel {
            n_states: Some(m.n_states()),
            transition: Some(
                m.transitions()
                    .iter()
                    .map(|rows| {
                        rows.iter()
                            .map(|row| row.iter().map(|p| p.as_f64()).collect())
                            .collect()
                    })
                    .collect(),
            ),
            rates: None,
            reward: Some(pairs(m.rewards())),
        },
        ArmModel::Ct(m) => RawModel {
            n_states: Some(m.n_states()),
            transition: None,
            rates: Some(
                (0..m.n_states())
                    .map(|s| {
                        (0..2)
                            .map(|a| m.rate_row(s, a).iter().map(|g| g.as_f64()).collect())
                            .collect()
                    })
                    .collect(),
            ),
            reward: Some(pairs(m.rewards())),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin;

    #[test]
    fn example2_round_trips_through_json() {
        let inst = builtin::<f64>("example2").unwrap();
        let text = instance_to_json(&inst);
        let back: Instance<f64> = parse_instance(&text).unwrap();
        assert_eq!(back, inst);
        assert_eq!(instance_to_json(&back), text);
    }

    #[test]
    fn ct_round_trip() {
        let inst = builtin::<f64>("example2-ct").unwrap();
        let back: Instance<f64> = parse_instance(&instance_to_json(&inst)).unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn missing_alpha_is_named() {
        let text = r#"{ "kind": "dt", "n_states": 1,
            "transition": [[[1.0], [1.0]]], "reward": [[0.0, 1.0]] }"#;
        let err = parse_instance::<f64>(text).unwrap_err();
        assert!(matches!(err, Error::MissingField(ref f) if f == "alpha"), "{err}");
        assert!(err.to_string().contains("alpha"));
    }

    #[test]
    fn parse_error_carries_position() {
        let err = parse_instance::<f64>("{\n  \"kind\": \"dt\",\n  \"alpha\": ,\n}").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn validation_failure_is_an_error() {
        let text = r#"{ "kind": "dt", "n_states": 1, "alpha": 0.5,
            "transition": [[[0.9], [1.0]]], "reward": [[0.0, 1.0]] }"#;
        assert!(matches!(parse_instance::<f64>(text), Err(Error::Validation(_))));
    }

    #[test]
    fn heterogeneous_two_copies() {
        let m = builtin::<f64>("example2").unwrap();
        let inst = Instance::heterogeneous(
            vec![
                ArmType {
                    beta: 0.5,
                    model: m.model().clone(),
                },
                ArmType {
                    beta: 0.5,
                    model: m.model().clone(),
                },
            ],
            0.4,
        )
        .unwrap();
        let text = instance_to_json(&inst);
        assert!(text.contains("\"types\""));
        let back: Instance<f64> = parse_instance(&text).unwrap();
        assert_eq!(back.n_types(), 2);
        assert!(back.validate().is_pass());
        assert_eq!(back, inst);
    }

    #[test]
    fn unknown_field_rejected() {
        let text = r#"{ "kind": "dt", "n_states": 1, "alpha": 0.5, "alpah": 1,
            "transition": [[[1.0], [1.0]]], "reward": [[0.0, 1.0]] }"#;
        assert!(matches!(parse_instance::<f64>(text), Err(Error::Parse { .. })));
    }
}
