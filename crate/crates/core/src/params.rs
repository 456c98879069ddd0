//! Scalar parameter values and canonical parameter sets.
//!
//! Both the state parameters of an executing statechart state and the
//! environment snapshot taken alongside it are `ParameterSet`s. Equality is
//! canonical: keys are kept sorted and decimals are normalized, so two sets
//! that serialize to the same JSON are equal and hash identically.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Largest number of significant digits a [`Decimal`] may carry. Keeps the
/// JSON round-trip through `f64` exact.
const MAX_DECIMAL_DIGITS: u32 = 15;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParamError {
    #[error("invalid decimal literal `{0}`")]
    InvalidDecimal(String),
    #[error("parameter key must be non-empty")]
    EmptyKey,
    #[error("duplicate parameter key `{0}`")]
    DuplicateKey(String),
    #[error("unsupported parameter value for `{key}`: {reason}")]
    UnsupportedValue { key: String, reason: String },
    #[error("expected `key=value`, got `{0}`")]
    MalformedAssignment(String),
}

/// Exact base-10 number, `mantissa * 10^-scale`, normalized so the mantissa
/// has no trailing zeros unless `scale == 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Decimal {
    mantissa: i64,
    scale: u32,
}

impl Decimal {
    pub fn new(mantissa: i64, scale: u32) -> Result<Self, ParamError> {
        let mut d = Decimal { mantissa, scale };
        while d.scale > 0 && d.mantissa % 10 == 0 {
            d.mantissa /= 10;
            d.scale -= 1;
        }
        let digits = d
            .mantissa
            .unsigned_abs()
            .checked_ilog10()
            .map_or(1, |l| l + 1);
        if digits.max(d.scale) > MAX_DECIMAL_DIGITS {
            return Err(ParamError::InvalidDecimal(format!("{mantissa}e-{scale}")));
        }
        Ok(d)
    }

    pub fn mantissa(&self) -> i64 {
        self.mantissa
    }

    pub fn scale(&self) -> u32 {
        self.scale
    }

    pub fn to_f64(&self) -> f64 {
        self.mantissa as f64 / 10f64.powi(self.scale as i32)
    }

    /// Recovers the decimal a JSON float denotes. `f64`'s `Display` prints the
    /// shortest round-tripping representation without exponent.
    pub fn from_f64(value: f64) -> Result<Self, ParamError> {
        if !value.is_finite() {
            return Err(ParamError::InvalidDecimal(value.to_string()));
        }
        value.to_string().parse()
    }
}

impl FromStr for Decimal {
    type Err = ParamError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ParamError::InvalidDecimal(s.to_string());
        let (negative, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
        if int_part.is_empty() || !int_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        if !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let frac_part = frac_part.trim_end_matches('0');
        let int_part = int_part.trim_start_matches('0');
        let digits = format!("{int_part}{frac_part}");
        if digits.len() > MAX_DECIMAL_DIGITS as usize {
            return Err(bad());
        }
        let magnitude: i64 = if digits.is_empty() {
            0
        } else {
            digits.parse().map_err(|_| bad())?
        };
        let mantissa = if negative { -magnitude } else { magnitude };
        Decimal::new(mantissa, frac_part.len() as u32)
    }
}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.mantissa < 0 { "-" } else { "" };
        let magnitude = self.mantissa.unsigned_abs();
        if self.scale == 0 {
            return write!(f, "{sign}{magnitude}.0");
        }
        let pow = 10u64.pow(self.scale);
        write!(
            f,
            "{sign}{}.{:0width$}",
            magnitude / pow,
            magnitude % pow,
            width = self.scale as usize
        )
    }
}

/// A single parameter value. Continuous readings must be discretized before
/// they get here; decimals are exact.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Decimal(Decimal),
    Token(String),
}

impl Value {
    pub fn token(s: impl Into<String>) -> Self {
        Value::Token(s.into())
    }

    pub fn as_token(&self) -> Option<&str> {
        match self {
            Value::Token(t) => Some(t),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Value::Bool(b) => serde_json::Value::Bool(*b),
            Value::Int(i) => serde_json::Value::from(*i),
            Value::Decimal(d) => serde_json::Number::from_f64(d.to_f64())
                .map(serde_json::Value::Number)
                .unwrap_or(serde_json::Value::Null),
            Value::Token(t) => serde_json::Value::String(t.clone()),
        }
    }

    pub fn from_json(key: &str, v: &serde_json::Value) -> Result<Self, ParamError> {
        let unsupported = |reason: &str| ParamError::UnsupportedValue {
            key: key.to_string(),
            reason: reason.to_string(),
        };
        match v {
            serde_json::Value::Bool(b) => Ok(Value::Bool(*b)),
            serde_json::Value::String(s) => Ok(Value::Token(s.clone())),
            serde_json::Value::Number(n) => {
                if let Some(i) = n.as_i64() {
                    Ok(Value::Int(i))
                } else if let Some(f) = n.as_f64() {
                    if n.is_u64() {
                        return Err(unsupported("integer out of range"));
                    }
                    Ok(Value::Decimal(Decimal::from_f64(f)?))
                } else {
                    Err(unsupported("number out of range"))
                }
            }
            serde_json::Value::Null => Err(unsupported("null")),
            serde_json::Value::Array(_) => Err(unsupported("array")),
            serde_json::Value::Object(_) => Err(unsupported("object")),
        }
    }

    /// Parses the textual form used on the command line: `true`/`false`,
    /// integers, decimals containing a `.`, anything else is a token.
    pub fn parse_literal(s: &str) -> Value {
        match s {
            "true" => return Value::Bool(true),
            "false" => return Value::Bool(false),
            _ => {}
        }
        if let Ok(i) = s.parse::<i64>() {
            return Value::Int(i);
        }
        if s.contains('.') {
            if let Ok(d) = s.parse::<Decimal>() {
                return Value::Decimal(d);
            }
        }
        Value::Token(s.to_string())
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Decimal(d) => write!(f, "{d}"),
            Value::Token(t) => f.write_str(t),
        }
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

impl From<i64> for Value {
    fn from(i: i64) -> Self {
        Value::Int(i)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Token(s.to_string())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Token(s)
    }
}

impl From<Decimal> for Value {
    fn from(d: Decimal) -> Self {
        Value::Decimal(d)
    }
}

/// Ordered key/value mapping in canonical (ascending key) order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParameterSet {
    entries: BTreeMap<String, Value>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a set from pairs, rejecting empty and duplicate keys.
    pub fn from_pairs<K, V, I>(pairs: I) -> Result<Self, ParamError>
    where
        K: Into<String>,
        V: Into<Value>,
        I: IntoIterator<Item = (K, V)>,
    {
        let mut set = ParameterSet::new();
        for (k, v) in pairs {
            let k = k.into();
            if k.is_empty() {
                return Err(ParamError::EmptyKey);
            }
            if set.entries.contains_key(&k) {
                return Err(ParamError::DuplicateKey(k));
            }
            set.entries.insert(k, v.into());
        }
        Ok(set)
    }

    /// Inserts or replaces a value.
    pub fn set(&mut self, key: impl Into<String>, value: impl Into<Value>) {
        self.entries.insert(key.into(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.get(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Object(
            self.entries
                .iter()
                .map(|(k, v)| (k.clone(), v.to_json()))
                .collect(),
        )
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self, ParamError> {
        let obj = v.as_object().ok_or_else(|| ParamError::UnsupportedValue {
            key: String::new(),
            reason: "parameter set must be a JSON object".into(),
        })?;
        let mut set = ParameterSet::new();
        for (k, v) in obj {
            if k.is_empty() {
                return Err(ParamError::EmptyKey);
            }
            set.entries.insert(k.clone(), Value::from_json(k, v)?);
        }
        Ok(set)
    }

    /// Canonical compact JSON: sorted keys, no whitespace.
    pub fn canonical_json(&self) -> String {
        self.to_json().to_string()
    }

    /// Parses `key=value` assignments as given on a command line.
    pub fn from_assignments<S: AsRef<str>>(items: &[S]) -> Result<Self, ParamError> {
        let pairs = items
            .iter()
            .map(|item| {
                let item = item.as_ref();
                item.split_once('=')
                    .map(|(k, v)| (k.to_string(), Value::parse_literal(v)))
                    .ok_or_else(|| ParamError::MalformedAssignment(item.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        ParameterSet::from_pairs(pairs)
    }
}

impl serde::Serialize for ParameterSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> serde::Deserialize<'de> for ParameterSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(deserializer)?;
        ParameterSet::from_json(&v).map_err(serde::de::Error::custom)
    }
}
