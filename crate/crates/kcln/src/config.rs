//! Flat `key = value` run configuration files.
//!
//! The file carries the same options as the command-line flags; flags win
//! when both are given. Keys are validated against a fixed schema and
//! unknown keys are rejected, so typos fail loudly instead of silently
//! falling back to defaults.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Path,
    Real,
    Int,
    Bool,
    Enum(&'static [&'static str]),
    RealList,
    IntList,
}

/// The schema: every accepted key with its value kind.
const SCHEMA: &[(&str, Kind)] = &[
    ("nodes", Kind::Path),
    ("edges", Kind::Path),
    ("vocab", Kind::Path),
    ("advice", Kind::Path),
    ("checkpoint", Kind::Path),
    ("log", Kind::Path),
    ("out_dir", Kind::Path),
    ("dump_masks", Kind::Path),
    ("alpha", Kind::Real),
    ("lr", Kind::Real),
    ("z", Kind::Real),
    ("train_fraction", Kind::Real),
    ("sample_fraction", Kind::Real),
    ("epoch_fraction", Kind::Real),
    ("label_noise", Kind::Real),
    ("feature_noise", Kind::Real),
    ("edge_density", Kind::Real),
    ("layers", Kind::Int),
    ("hidden", Kind::Int),
    ("epochs", Kind::Int),
    ("seed", Kind::Int),
    ("split_seed", Kind::Int),
    ("patience", Kind::Int),
    ("jobs", Kind::Int),
    ("entities", Kind::Int),
    ("features", Kind::Int),
    ("relations", Kind::Int),
    ("labels", Kind::Int),
    ("rules", Kind::Int),
    ("symmetrize", Kind::Bool),
    ("tie_layers", Kind::Bool),
    ("corrupt_advice", Kind::Bool),
    ("mode", Kind::Enum(&["gated", "combined-loss"])),
    ("protocol", Kind::Enum(&["samples", "epochs", "alpha"])),
    ("on", Kind::Enum(&["train", "test", "all"])),
    ("fractions", Kind::RealList),
    ("alphas", Kind::RealList),
    ("seeds", Kind::IntList),
];

/// Parsed, schema-checked key/value pairs from a config file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

fn kind_of(key: &str) -> Option<Kind> {
    SCHEMA.iter().find(|(k, _)| *k == key).map(|&(_, kind)| kind)
}

fn check_value(kind: Kind, value: &str) -> bool {
    match kind {
        Kind::Path => !value.is_empty(),
        Kind::Real => value.parse::<f64>().is_ok(),
        Kind::Int => value.parse::<u64>().is_ok(),
        Kind::Bool => matches!(value, "true" | "false"),
        Kind::Enum(options) => options.contains(&value),
        Kind::RealList => value.split(',').all(|v| v.trim().parse::<f64>().is_ok()),
        Kind::IntList => value.split(',').all(|v| v.trim().parse::<u64>().is_ok()),
    }
}

/// Parse `key = value` lines; `#` comments and blank lines are ignored.
pub fn parse_config(text: &str, path: &str) -> Result<RunConfig> {
    let mut values = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: path.into(),
            line: lineno,
            msg: "expected key = value".into(),
        })?;
        let key = key.trim();
        let value = value.trim();
        let kind = kind_of(key).ok_or_else(|| Error::Parse {
            path: path.into(),
            line: lineno,
            msg: format!("unknown key '{key}'"),
        })?;
        if !check_value(kind, value) {
            return Err(Error::Parse {
                path: path.into(),
                line: lineno,
                msg: format!("invalid value '{value}' for key '{key}'"),
            });
        }
        if values.insert(key.to_string(), value.to_string()).is_some() {
            return Err(Error::Parse {
                path: path.into(),
                line: lineno,
                msg: format!("duplicate key '{key}'"),
            });
        }
    }
    Ok(RunConfig { values })
}

impl RunConfig {
    pub fn get(&self, key: &str) -> Option<&str> {
        debug_assert!(kind_of(key).is_some(), "unknown config key '{key}'");
        self.values.get(key).map(String::as_str)
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key).map(|v| v.parse().unwrap())
    }

    pub fn get_usize(&self, key: &str) -> Option<usize> {
        self.get(key).map(|v| v.parse().unwrap())
    }

    pub fn get_u64(&self, key: &str) -> Option<u64> {
        self.get(key).map(|v| v.parse().unwrap())
    }

    pub fn get_bool(&self, key: &str) -> Option<bool> {
        self.get(key).map(|v| v == "true")
    }

    pub fn get_f64_list(&self, key: &str) -> Option<Vec<f64>> {
        self.get(key)
            .map(|v| v.split(',').map(|x| x.trim().parse().unwrap()).collect())
    }

    pub fn get_u64_list(&self, key: &str) -> Option<Vec<u64>> {
        self.get(key)
            .map(|v| v.split(',').map(|x| x.trim().parse().unwrap()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_comments_and_blanks() {
        let cfg = parse_config(
            "# run settings\nalpha = 0.5\nlayers=10\n\nseeds = 1, 2, 3  # five runs\nmode = gated\n",
            "run.cfg",
        )
        .unwrap();
        assert_eq!(cfg.get_f64("alpha"), Some(0.5));
        assert_eq!(cfg.get_usize("layers"), Some(10));
        assert_eq!(cfg.get_u64_list("seeds"), Some(vec![1, 2, 3]));
        assert_eq!(cfg.get("mode"), Some("gated"));
        assert_eq!(cfg.get("advice"), None);
    }

    #[test]
    fn unknown_key_rejected() {
        let err = parse_config("alhpa = 0.5\n", "run.cfg").unwrap_err();
        match err {
            Error::Parse { line, msg, .. } => {
                assert_eq!(line, 1);
                assert!(msg.contains("alhpa"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_value_type_rejected() {
        assert!(parse_config("layers = ten\n", "c").is_err());
        assert!(parse_config("mode = turbo\n", "c").is_err());
        assert!(parse_config("fractions = 0.1,x\n", "c").is_err());
    }

    #[test]
    fn duplicate_key_rejected() {
        assert!(parse_config("alpha = 0.5\nalpha = 0.6\n", "c").is_err());
    }

    #[test]
    fn missing_equals_rejected() {
        assert!(parse_config("alpha 0.5\n", "c").is_err());
    }
}
