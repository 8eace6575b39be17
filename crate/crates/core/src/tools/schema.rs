//! Parameter schemas for curated tools.
//!
//! A [`Schema`] is both the documentation sent to clients (rendered as JSON
//! Schema by [`Schema::to_json`]) and the validator applied before a tool
//! runs, so the advertised constraints are exactly the enforced ones.

use std::fmt;

use serde_json::{json, Map, Value};

#[derive(Debug, Clone, PartialEq)]
pub enum Schema {
    Number {
        minimum: Option<f64>,
        maximum: Option<f64>,
        /// Dynamic range documented for the client but enforced by the
        /// engine, e.g. "exclusive scalar range of the active reader".
        range_hint: Option<&'static str>,
    },
    Integer {
        minimum: Option<i64>,
        maximum: Option<i64>,
    },
    Boolean,
    String {
        min_length: usize,
        choices: Option<Vec<&'static str>>,
    },
    /// Fixed-length array with a schema per position.
    Tuple(Vec<Schema>),
    Array {
        items: Box<Schema>,
        min_items: usize,
        max_items: Option<usize>,
    },
    /// Closed object: unknown properties are rejected.
    Object(Vec<Param>),
    /// Exactly one alternative must match.
    OneOf(Vec<Schema>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: &'static str,
    pub schema: Schema,
    pub required: bool,
    pub description: &'static str,
}

impl Param {
    pub fn required(name: &'static str, schema: Schema, description: &'static str) -> Self {
        Param {
            name,
            schema,
            required: true,
            description,
        }
    }

    pub fn optional(name: &'static str, schema: Schema, description: &'static str) -> Self {
        Param {
            name,
            schema,
            required: false,
            description,
        }
    }
}

/// A value that does not satisfy a schema.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Location, e.g. `value` or `points[1][2]`; empty for the root.
    pub path: String,
    pub reason: String,
}

impl Violation {
    /// The top-level parameter the violation belongs to.
    pub fn parameter(&self) -> &str {
        let end = self.path.find(['[', '.']).unwrap_or(self.path.len());
        &self.path[..end]
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "invalid arguments: {}", self.reason)
        } else {
            write!(f, "invalid argument `{}`: {}", self.path, self.reason)
        }
    }
}

fn kind_of(value: &Value) -> &'static str {
    match value {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn child_path(base: &str, key: &str) -> String {
    if base.is_empty() {
        key.to_string()
    } else {
        format!("{base}.{key}")
    }
}

impl Schema {
    pub fn number() -> Self {
        Schema::Number {
            minimum: None,
            maximum: None,
            range_hint: None,
        }
    }

    pub fn bounded(minimum: f64, maximum: f64) -> Self {
        Schema::Number {
            minimum: Some(minimum),
            maximum: Some(maximum),
            range_hint: None,
        }
    }

    pub fn string() -> Self {
        Schema::String {
            min_length: 1,
            choices: None,
        }
    }

    pub fn choice(choices: &[&'static str]) -> Self {
        Schema::String {
            min_length: 0,
            choices: Some(choices.to_vec()),
        }
    }

    /// JSON Schema (2020-12) form.
    pub fn to_json(&self) -> Value {
        match self {
            Schema::Number {
                minimum,
                maximum,
                range_hint,
            } => {
                let mut obj = Map::new();
                obj.insert("type".into(), json!("number"));
                if let Some(min) = minimum {
                    obj.insert("minimum".into(), json!(min));
                }
                if let Some(max) = maximum {
                    obj.insert("maximum".into(), json!(max));
                }
                if let Some(hint) = range_hint {
                    obj.insert("x-valueRange".into(), json!(hint));
                }
                Value::Object(obj)
            }
            Schema::Integer { minimum, maximum } => {
                let mut obj = Map::new();
                obj.insert("type".into(), json!("integer"));
                if let Some(min) = minimum {
                    obj.insert("minimum".into(), json!(min));
                }
                if let Some(max) = maximum {
                    obj.insert("maximum".into(), json!(max));
                }
                Value::Object(obj)
            }
            Schema::Boolean => json!({"type": "boolean"}),
            Schema::String {
                min_length,
                choices,
            } => {
                let mut obj = Map::new();
                obj.insert("type".into(), json!("string"));
                if *min_length > 0 {
                    obj.insert("minLength".into(), json!(min_length));
                }
                if let Some(choices) = choices {
                    obj.insert("enum".into(), json!(choices));
                }
                Value::Object(obj)
            }
            Schema::Tuple(items) => json!({
                "type": "array",
                "prefixItems": items.iter().map(Schema::to_json).collect::<Vec<_>>(),
                "items": false,
                "minItems": items.len(),
                "maxItems": items.len(),
            }),
            Schema::Array {
                items,
                min_items,
                max_items,
            } => {
                let mut obj = Map::new();
                obj.insert("type".into(), json!("array"));
                obj.insert("items".into(), items.to_json());
                obj.insert("minItems".into(), json!(min_items));
                if let Some(max) = max_items {
                    obj.insert("maxItems".into(), json!(max));
                }
                Value::Object(obj)
            }
            Schema::Object(params) => object_schema(params),
            Schema::OneOf(options) => json!({
                "oneOf": options.iter().map(Schema::to_json).collect::<Vec<_>>(),
            }),
        }
    }

    pub fn validate(&self, value: &Value) -> Result<(), Violation> {
        self.validate_at(value, "")
    }

    fn validate_at(&self, value: &Value, path: &str) -> Result<(), Violation> {
        let fail = |reason: String| {
            Err(Violation {
                path: path.to_string(),
                reason,
            })
        };
        let mismatch = |expected: &str| fail(format!("expected {expected}, got {}", kind_of(value)));
        match self {
            Schema::Number {
                minimum, maximum, ..
            } => {
                let Some(x) = value.as_f64().filter(|_| value.is_number()) else {
                    return mismatch("a number");
                };
                check_bounds(x, *minimum, *maximum).or_else(fail)
            }
            Schema::Integer { minimum, maximum } => {
                let Some(x) = value.as_f64().filter(|_| value.is_number()) else {
                    return mismatch("an integer");
                };
                if x.fract() != 0.0 {
                    return fail(format!("expected an integer, got {x}"));
                }
                check_bounds(x, minimum.map(|m| m as f64), maximum.map(|m| m as f64)).or_else(fail)
            }
            Schema::Boolean => {
                if value.is_boolean() {
                    Ok(())
                } else {
                    mismatch("a boolean")
                }
            }
            Schema::String {
                min_length,
                choices,
            } => {
                let Some(s) = value.as_str() else {
                    return mismatch("a string");
                };
                if s.chars().count() < *min_length {
                    return fail(format!("must have at least {min_length} character(s)"));
                }
                match choices {
                    Some(choices) if !choices.contains(&s) => {
                        fail(format!("'{s}' is not one of {}", choices.join(", ")))
                    }
                    _ => Ok(()),
                }
            }
            Schema::Tuple(items) => {
                let Some(arr) = value.as_array() else {
                    return mismatch(&format!("an array of {} items", items.len()));
                };
                if arr.len() != items.len() {
                    return fail(format!("expected exactly {} items, got {}", items.len(), arr.len()));
                }
                for (i, (schema, item)) in items.iter().zip(arr).enumerate() {
                    schema.validate_at(item, &format!("{path}[{i}]"))?;
                }
                Ok(())
            }
            Schema::Array {
                items,
                min_items,
                max_items,
            } => {
                let Some(arr) = value.as_array() else {
                    return mismatch("an array");
                };
                if arr.len() < *min_items {
                    return fail(format!("expected at least {min_items} items, got {}", arr.len()));
                }
                if let Some(max) = max_items {
                    if arr.len() > *max {
                        return fail(format!("expected at most {max} items, got {}", arr.len()));
                    }
                }
                for (i, item) in arr.iter().enumerate() {
                    items.validate_at(item, &format!("{path}[{i}]"))?;
                }
                Ok(())
            }
            Schema::Object(params) => {
                let Some(obj) = value.as_object() else {
                    return mismatch("an object");
                };
                validate_object(params, obj, path)
            }
            Schema::OneOf(options) => {
                let mut errors = Vec::new();
                let mut matched = 0;
                for option in options {
                    match option.validate_at(value, path) {
                        Ok(()) => matched += 1,
                        Err(v) => errors.push(v),
                    }
                }
                match matched {
                    1 => Ok(()),
                    0 if errors.len() == 1 => Err(errors.remove(0)),
                    0 => {
                        // report the alternative whose type matched, if any
                        if let Some(deep) = errors.iter().find(|v| !v.reason.starts_with("expected ")) {
                            return Err(deep.clone());
                        }
                        fail(format!(
                            "does not match any accepted form ({})",
                            errors.iter().map(|v| v.reason.as_str()).collect::<Vec<_>>().join("; ")
                        ))
                    }
                    _ => fail("matches more than one accepted form".into()),
                }
            }
        }
    }
}

fn check_bounds(x: f64, minimum: Option<f64>, maximum: Option<f64>) -> Result<(), String> {
    if let Some(min) = minimum {
        if x < min {
            return Err(format!("{x} is below the minimum {min}"));
        }
    }
    if let Some(max) = maximum {
        if x > max {
            return Err(format!("{x} is above the maximum {max}"));
        }
    }
    Ok(())
}

pub(crate) fn object_schema(params: &[Param]) -> Value {
    let mut properties = Map::new();
    for p in params {
        let mut prop = p.schema.to_json();
        if let Value::Object(obj) = &mut prop {
            obj.insert("description".into(), json!(p.description));
        }
        properties.insert(p.name.to_string(), prop);
    }
    let required: Vec<&str> = params.iter().filter(|p| p.required).map(|p| p.name).collect();
    json!({
        "type": "object",
        "properties": properties,
        "required": required,
        "additionalProperties": false,
    })
}

pub(crate) fn validate_object(
    params: &[Param],
    obj: &Map<String, Value>,
    path: &str,
) -> Result<(), Violation> {
    for p in params {
        match obj.get(p.name) {
            Some(v) => p.schema.validate_at(v, &child_path(path, p.name))?,
            None if p.required => {
                return Err(Violation {
                    path: child_path(path, p.name),
                    reason: "required parameter is missing".into(),
                })
            }
            None => {}
        }
    }
    if let Some(extra) = obj.keys().find(|k| !params.iter().any(|p| p.name == k.as_str())) {
        return Err(Violation {
            path: child_path(path, extra),
            reason: "unexpected parameter".into(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> Vec<Param> {
        vec![
            Param::required("value", Schema::number(), "isovalue"),
            Param::optional("bins", Schema::Integer { minimum: Some(1), maximum: Some(10) }, "bins"),
            Param::optional(
                "points",
                Schema::Array {
                    items: Box::new(Schema::Tuple(vec![Schema::number(), Schema::bounded(0.0, 1.0)])),
                    min_items: 2,
                    max_items: None,
                },
                "points",
            ),
        ]
    }

    fn check(args: Value) -> Result<(), Violation> {
        Schema::Object(params()).validate(&args)
    }

    #[test]
    fn accepts_conforming_arguments() {
        check(json!({"value": 0.4})).unwrap();
        check(json!({"value": 1, "bins": 3.0, "points": [[0, 0.5], [1, 1]]})).unwrap();
    }

    #[test]
    fn names_the_offending_parameter() {
        let v = check(json!({"value": "abc"})).unwrap_err();
        assert_eq!(v.parameter(), "value");
        assert!(v.to_string().contains("`value`"));
        assert_eq!(check(json!({})).unwrap_err().parameter(), "value");
        assert_eq!(check(json!({"value": 1, "extra": 1})).unwrap_err().parameter(), "extra");
        assert_eq!(check(json!({"value": 1, "bins": 0})).unwrap_err().parameter(), "bins");
        assert_eq!(check(json!({"value": 1, "bins": 2.5})).unwrap_err().parameter(), "bins");
        let v = check(json!({"value": 1, "points": [[0, 0.5], [1, 1.5]]})).unwrap_err();
        assert_eq!(v.path, "points[1][1]");
        assert_eq!(v.parameter(), "points");
    }

    #[test]
    fn one_of_picks_the_matching_branch() {
        let schema = Schema::OneOf(vec![
            Schema::string(),
            Schema::Object(vec![Param::required("family", Schema::choice(&["radial"]), "f")]),
        ]);
        schema.validate(&json!("data.json")).unwrap();
        schema.validate(&json!({"family": "radial"})).unwrap();
        let v = schema.validate(&json!({"family": "cone"})).unwrap_err();
        assert!(v.reason.contains("not one of"), "{v}");
        assert!(schema.validate(&json!(3)).is_err());
    }

    #[test]
    fn json_form_lists_required_and_descriptions() {
        let wire = Schema::Object(params()).to_json();
        assert_eq!(wire["required"], json!(["value"]));
        assert_eq!(wire["additionalProperties"], json!(false));
        assert_eq!(wire["properties"]["bins"]["minimum"], json!(1));
        assert_eq!(wire["properties"]["value"]["description"], json!("isovalue"));
        assert_eq!(wire["properties"]["points"]["items"]["prefixItems"][1]["maximum"], json!(1.0));
    }
}
