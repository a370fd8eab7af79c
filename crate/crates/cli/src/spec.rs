//! Run specifications: a named fixture or an explicit engine configuration.

use std::fmt;
use std::fs;
use std::path::Path;

use diagnostic_interp::{EngineConfig, Error, Fixture};
use serde_json::{Map, Value};

/// Keys that make a spec explicit.
const EXPLICIT_KEYS: [&str; 3] = ["space", "model_a", "model_b"];
/// Keys allowed next to `fixture`.
const FIXTURE_KEYS: [&str; 4] = ["fixture", "seed", "lambda", "max_queries"];

#[derive(Debug)]
pub enum SpecError {
    /// The document is not valid JSON.
    Syntax {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    Invalid(String),
    Engine(Error),
    Io(String),
}

impl fmt::Display for SpecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpecError::Syntax {
                path,
                line,
                column,
                message,
            } => write!(f, "{path}: malformed JSON at line {line}, column {column}: {message}"),
            SpecError::Invalid(msg) => write!(f, "invalid run spec: {msg}"),
            SpecError::Engine(e) => e.fmt(f),
            SpecError::Io(msg) => f.write_str(msg),
        }
    }
}

impl From<Error> for SpecError {
    fn from(e: Error) -> Self {
        SpecError::Engine(e)
    }
}

#[derive(Clone, Debug)]
pub enum RunSpec {
    Fixture {
        fixture: Fixture,
        seed: Option<u64>,
        lambda: Option<f64>,
        max_queries: Option<usize>,
    },
    Explicit {
        config: Box<EngineConfig>,
        /// Sweep the whole space instead of sampling.
        complete: bool,
    },
}

impl RunSpec {
    pub fn load(path: &Path) -> Result<Self, SpecError> {
        let text = fs::read_to_string(path).map_err(|e| SpecError::Io(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, SpecError> {
        let value: Value = serde_json::from_str(text).map_err(|e| SpecError::Syntax {
            path: origin.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let Value::Object(mut map) = value else {
            return Err(SpecError::Invalid("expected a JSON object".into()));
        };
        let explicit: Vec<&str> = EXPLICIT_KEYS.into_iter().filter(|k| map.contains_key(*k)).collect();
        match (map.contains_key("fixture"), explicit.is_empty()) {
            (true, false) => Err(SpecError::Invalid(format!(
                "give either \"fixture\" or an explicit space and models, not both (found {})",
                explicit.join(", ")
            ))),
            (false, true) => Err(SpecError::Invalid(
                "expected \"fixture\" or an explicit \"space\", \"model_a\" and \"model_b\"".into(),
            )),
            (true, true) => Self::fixture_spec(map),
            (false, false) => {
                let complete = match map.remove("complete") {
                    None => false,
                    Some(Value::Bool(b)) => b,
                    Some(other) => return Err(SpecError::Invalid(format!("\"complete\" must be a boolean, got {other}"))),
                };
                let config: EngineConfig =
                    serde_json::from_value(Value::Object(map)).map_err(|e| SpecError::Invalid(e.to_string()))?;
                Ok(RunSpec::Explicit {
                    config: Box::new(config),
                    complete,
                })
            }
        }
    }

    fn fixture_spec(map: Map<String, Value>) -> Result<Self, SpecError> {
        if let Some(key) = map.keys().find(|k| !FIXTURE_KEYS.contains(&k.as_str())) {
            return Err(SpecError::Invalid(format!(
                "unknown key \"{key}\" in a fixture spec; allowed: {}",
                FIXTURE_KEYS.join(", ")
            )));
        }
        let field = |key: &str| map.get(key).filter(|v| !v.is_null());
        let fixture = match field("fixture") {
            Some(Value::String(name)) => name.parse::<Fixture>()?,
            _ => return Err(SpecError::Invalid("\"fixture\" must be a string".into())),
        };
        let seed = field("seed")
            .map(|v| v.as_u64().ok_or_else(|| SpecError::Invalid("\"seed\" must be a non-negative integer".into())))
            .transpose()?;
        let lambda = field("lambda")
            .map(|v| v.as_f64().ok_or_else(|| SpecError::Invalid("\"lambda\" must be a number".into())))
            .transpose()?;
        let max_queries = field("max_queries")
            .map(|v| {
                v.as_u64()
                    .map(|n| n as usize)
                    .ok_or_else(|| SpecError::Invalid("\"max_queries\" must be a non-negative integer".into()))
            })
            .transpose()?;
        Ok(RunSpec::Fixture {
            fixture,
            seed,
            lambda,
            max_queries,
        })
    }
}
