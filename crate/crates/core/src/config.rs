//! Run configuration: a flat file of `key = value` lines or a JSON object.
//! Unknown keys are rejected with the line they appear on.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<String>,
    pub rhs: Option<String>,
    /// Binary scores file; metadata is read from the same path plus `.json`.
    pub scores: Option<String>,
    /// `random:n:d`, `spiked:n:d:heavy` or `gaussian:n:d`.
    pub synthetic: Option<String>,
    pub output: Option<String>,
    pub report: Option<String>,
    pub csv: Option<String>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub threads: Option<usize>,
    pub kind: Option<String>,
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub d: Option<usize>,
    pub p: Option<f64>,
    pub eps: Option<f64>,
    pub delta: Option<f64>,
    pub theta: Option<f64>,
    pub gamma: Option<f64>,
    pub m1: Option<usize>,
    pub m2: Option<usize>,
    pub m3: Option<usize>,
    pub lambda: Option<f64>,
    pub batch: Option<usize>,
    pub iters: Option<usize>,
    pub alpha: Option<f64>,
    pub mode: Option<String>,
    pub variant: Option<String>,
    pub check: Option<String>,
    pub rounding: Option<String>,
    pub heavy: Option<usize>,
    pub tolerance: Option<f64>,
    pub lowbits: Option<bool>,
}

impl RunConfig {
    /// Parses JSON when the first non-blank character is `{`, otherwise
    /// `key = value` lines with `#` comments.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            return serde_json::from_str(text).map_err(|e| Error::parse(e.line(), e.column(), e.to_string()));
        }
        let mut map = Map::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("");
            if body.trim().is_empty() {
                continue;
            }
            let Some(eq) = body.find('=') else {
                let col = body.len() - body.trim_start().len() + 1;
                return Err(Error::parse(line, col, "expected `key = value`"));
            };
            let key = body[..eq].trim();
            let value = body[eq + 1..].trim();
            let key_col = body.len() - body.trim_start().len() + 1;
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(Error::parse(line, key_col, format!("bad key '{key}'")));
            }
            if map.contains_key(key) {
                return Err(Error::parse(line, key_col, format!("duplicate key '{key}'")));
            }
            let value_col = eq + 2 + (body[eq + 1..].len() - body[eq + 1..].trim_start().len());
            // Check each key on its own so errors carry the right position.
            // Bare values that fail as numbers or booleans are retried as strings.
            let check = |v: &Value| {
                let mut single = Map::new();
                single.insert(key.to_string(), v.clone());
                serde_json::from_value::<RunConfig>(Value::Object(single))
            };
            let mut parsed = scalar(value);
            if let Err(e) = check(&parsed) {
                let as_text = Value::String(value.to_string());
                if e.to_string().starts_with("unknown field") || parsed.is_string() || check(&as_text).is_err() {
                    let col = if e.to_string().starts_with("unknown field") {
                        key_col
                    } else {
                        value_col
                    };
                    return Err(Error::parse(line, col, e.to_string()));
                }
                parsed = as_text;
            }
            map.insert(key.to_string(), parsed);
        }
        Ok(serde_json::from_value(Value::Object(map))?)
    }

    /// Fills every unset field from `base`.
    pub fn or(self, base: RunConfig) -> RunConfig {
        macro_rules! pick {
            ($($f:ident),*) => { RunConfig { $($f: self.$f.or(base.$f)),* } };
        }
        pick!(
            input, rhs, scores, synthetic, output, report, csv, seed, trials, threads, kind, m, n, d, p, eps, delta, theta, gamma, m1, m2,
            m3, lambda, batch, iters, alpha, mode, variant, check, rounding, heavy, tolerance, lowbits
        )
    }
}

fn scalar(v: &str) -> Value {
    let unquoted = v.strip_prefix('"').and_then(|s| s.strip_suffix('"'));
    if let Some(s) = unquoted {
        return Value::String(s.to_string());
    }
    match v {
        "true" => return Value::Bool(true),
        "false" => return Value::Bool(false),
        _ => {}
    }
    if let Ok(i) = v.parse::<u64>() {
        return Value::from(i);
    }
    if let Ok(f) = v.parse::<f64>() {
        if f.is_finite() {
            return Value::from(f);
        }
    }
    Value::String(v.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_value_and_json_agree() {
        let kv = RunConfig::parse("# demo\nseed = 7\neps = 0.25\nkind = less-ind-rows\nlowbits = true\n").unwrap();
        let js = RunConfig::parse(r#"{"seed": 7, "eps": 0.25, "kind": "less-ind-rows", "lowbits": true}"#).unwrap();
        assert_eq!(kv, js);
        assert_eq!(kv.seed, Some(7));
    }

    #[test]
    fn unknown_key_names_line() {
        match RunConfig::parse("seed = 1\n\n  colour = red\n") {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (3, 3)),
            other => panic!("{other:?}"),
        }
        assert!(RunConfig::parse(r#"{"seed": 1, "colour": 2}"#).is_err());
    }

    #[test]
    fn bad_value_and_missing_equals() {
        match RunConfig::parse("m = lots\n") {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (1, 5)),
            other => panic!("{other:?}"),
        }
        assert!(matches!(RunConfig::parse("seed\n"), Err(Error::Parse { line: 1, .. })));
        assert_eq!(RunConfig::parse("input = 42\n").unwrap().input.as_deref(), Some("42"));
        assert!(matches!(RunConfig::parse("seed=1\nseed=2\n"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn flags_win() {
        let file = RunConfig {
            seed: Some(1),
            eps: Some(0.5),
            ..Default::default()
        };
        let flags = RunConfig {
            seed: Some(9),
            ..Default::default()
        };
        let merged = flags.or(file);
        assert_eq!((merged.seed, merged.eps), (Some(9), Some(0.5)));
    }
}
