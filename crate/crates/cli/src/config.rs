//! Config file handling and flag/file/default resolution.
//!
//! Config files are TOML with one section per subcommand. Precedence,
//! highest first: command-line flag, config file entry, built-in
//! default. Every resolved value is echoed into the run manifest, so
//! a manifest doubles as a config file that reproduces the run.

use std::path::Path;

use crate::error::{CliError, CliResult};

/// Load one subcommand's section from a config file. No file or no
/// section yields an empty table.
pub fn load_section(path: Option<&Path>, section: &str) -> CliResult<toml::Table> {
    let Some(path) = path else {
        return Ok(toml::Table::new());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
    let doc: toml::Table = text
        .parse()
        .map_err(|e| CliError::usage(format!("config {} is not valid TOML: {e}", path.display())))?;
    match doc.get(section) {
        None => Ok(toml::Table::new()),
        Some(toml::Value::Table(t)) => Ok(t.clone()),
        Some(other) => Err(CliError::usage(format!(
            "config {}: [{section}] must be a table, found {}",
            path.display(),
            other.type_str()
        ))),
    }
}

/// Merges flags, a config section, and defaults, recording every
/// resolved value for the manifest.
pub struct Resolver {
    section: &'static str,
    file: toml::Table,
    resolved: toml::Table,
}

impl Resolver {
    pub fn new(section: &'static str, file: toml::Table) -> Self {
        Resolver {
            section,
            file,
            resolved: toml::Table::new(),
        }
    }

    fn missing(&self, key: &str) -> CliError {
        CliError::usage(format!(
            "missing --{key}; pass the flag or set `{key}` in the [{}] config section",
            self.section
        ))
    }

    fn wrong_type(&self, key: &str, want: &str, got: &toml::Value) -> CliError {
        CliError::usage(format!(
            "config entry [{}] {key} must be a {want}, found {}",
            self.section,
            got.type_str()
        ))
    }

    pub fn string(
        &mut self,
        key: &str,
        flag: Option<&str>,
        default: Option<&str>,
    ) -> CliResult<String> {
        let value = match (flag, self.file.get(key)) {
            (Some(v), _) => v.to_string(),
            (None, Some(toml::Value::String(v))) => v.clone(),
            (None, Some(other)) => return Err(self.wrong_type(key, "string", other)),
            (None, None) => default.ok_or_else(|| self.missing(key))?.to_string(),
        };
        self.resolved
            .insert(key.to_string(), toml::Value::String(value.clone()));
        Ok(value)
    }

    /// Like [`Resolver::string`] but absent everywhere is fine; the
    /// manifest records only present values.
    pub fn opt_string(&mut self, key: &str, flag: Option<&str>) -> CliResult<Option<String>> {
        let value = match (flag, self.file.get(key)) {
            (Some(v), _) => Some(v.to_string()),
            (None, Some(toml::Value::String(v))) => Some(v.clone()),
            (None, Some(other)) => return Err(self.wrong_type(key, "string", other)),
            (None, None) => None,
        };
        if let Some(v) = &value {
            self.resolved
                .insert(key.to_string(), toml::Value::String(v.clone()));
        }
        Ok(value)
    }

    pub fn usize(&mut self, key: &str, flag: Option<usize>, default: Option<usize>) -> CliResult<usize> {
        let value = match (flag, self.file.get(key)) {
            (Some(v), _) => v,
            (None, Some(&toml::Value::Integer(v))) if v >= 0 => v as usize,
            (None, Some(other)) => return Err(self.wrong_type(key, "non-negative integer", other)),
            (None, None) => default.ok_or_else(|| self.missing(key))?,
        };
        self.resolved
            .insert(key.to_string(), toml::Value::Integer(value as i64));
        Ok(value)
    }

    pub fn u64(&mut self, key: &str, flag: Option<u64>, default: Option<u64>) -> CliResult<u64> {
        let value = match (flag, self.file.get(key)) {
            (Some(v), _) => v,
            (None, Some(&toml::Value::Integer(v))) if v >= 0 => v as u64,
            (None, Some(other)) => return Err(self.wrong_type(key, "non-negative integer", other)),
            (None, None) => default.ok_or_else(|| self.missing(key))?,
        };
        self.resolved
            .insert(key.to_string(), toml::Value::Integer(value as i64));
        Ok(value)
    }

    pub fn f64(&mut self, key: &str, flag: Option<f64>, default: Option<f64>) -> CliResult<f64> {
        let value = match (flag, self.file.get(key)) {
            (Some(v), _) => v,
            (None, Some(&toml::Value::Float(v))) => v,
            (None, Some(&toml::Value::Integer(v))) => v as f64,
            (None, Some(other)) => return Err(self.wrong_type(key, "number", other)),
            (None, None) => default.ok_or_else(|| self.missing(key))?,
        };
        self.resolved
            .insert(key.to_string(), toml::Value::Float(value));
        Ok(value)
    }

    pub fn opt_f64(&mut self, key: &str, flag: Option<f64>) -> CliResult<Option<f64>> {
        let value = match (flag, self.file.get(key)) {
            (Some(v), _) => Some(v),
            (None, Some(&toml::Value::Float(v))) => Some(v),
            (None, Some(&toml::Value::Integer(v))) => Some(v as f64),
            (None, Some(other)) => return Err(self.wrong_type(key, "number", other)),
            (None, None) => None,
        };
        if let Some(v) = value {
            self.resolved.insert(key.to_string(), toml::Value::Float(v));
        }
        Ok(value)
    }

    pub fn bool(&mut self, key: &str, flag: Option<bool>, default: bool) -> CliResult<bool> {
        let value = match (flag, self.file.get(key)) {
            (Some(v), _) => v,
            (None, Some(&toml::Value::Boolean(v))) => v,
            (None, Some(other)) => return Err(self.wrong_type(key, "boolean", other)),
            (None, None) => default,
        };
        self.resolved
            .insert(key.to_string(), toml::Value::Boolean(value));
        Ok(value)
    }

    /// Echo a value the command derived itself (e.g. an inferred
    /// keyword) so the manifest captures it.
    pub fn record_string(&mut self, key: &str, value: &str) {
        self.resolved
            .insert(key.to_string(), toml::Value::String(value.to_string()));
    }

    /// The fully resolved section for the manifest.
    pub fn into_resolved(self) -> toml::Table {
        self.resolved
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(text: &str) -> toml::Table {
        text.parse().unwrap()
    }

    #[test]
    fn precedence_is_flag_file_default() {
        let mut r = Resolver::new("edit", table("alpha = 0.5\nseed = 9"));
        assert_eq!(r.f64("alpha", Some(0.25), Some(0.04)).unwrap(), 0.25);
        assert_eq!(r.u64("seed", None, Some(0)).unwrap(), 9);
        assert_eq!(r.usize("steps", None, Some(100)).unwrap(), 100);
        let resolved = r.into_resolved();
        assert_eq!(resolved["alpha"], toml::Value::Float(0.25));
        assert_eq!(resolved["seed"], toml::Value::Integer(9));
        assert_eq!(resolved["steps"], toml::Value::Integer(100));
    }

    #[test]
    fn missing_required_value_is_a_usage_error() {
        let mut r = Resolver::new("edit", toml::Table::new());
        let err = r.string("source", None, None).unwrap_err();
        let CliError::Usage(msg) = err else {
            panic!("expected usage error");
        };
        assert!(msg.contains("--source") && msg.contains("[edit]"), "got {msg}");
    }

    #[test]
    fn wrong_config_type_is_a_usage_error() {
        let mut r = Resolver::new("edit", table("alpha = \"high\""));
        assert!(matches!(
            r.f64("alpha", None, Some(0.04)).unwrap_err(),
            CliError::Usage(_)
        ));
    }

    #[test]
    fn section_loading_isolates_subcommands() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "[edit]\nalpha = 0.1\n\n[bench]\nseeds = 5\n").unwrap();
        let edit = load_section(Some(&path), "edit").unwrap();
        assert_eq!(edit["alpha"], toml::Value::Float(0.1));
        assert!(edit.get("seeds").is_none());
        let eval = load_section(Some(&path), "eval").unwrap();
        assert!(eval.is_empty());
    }
}
