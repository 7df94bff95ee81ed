use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Mass,
    Count,
    Rating,
    Categorical,
    Derived,
    Response,
}

impl ColumnKind {
    pub fn is_numeric_feature(self) -> bool {
        matches!(
            self,
            ColumnKind::Mass | ColumnKind::Count | ColumnKind::Rating | ColumnKind::Derived
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default)]
    pub units: String,
    #[serde(default)]
    pub range: Option<(f64, f64)>,
    #[serde(default)]
    pub expected_na: usize,
    /// Declared value set; required for categorical columns.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
    /// Source categorical column of a one-hot indicator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl ColumnSpec {
    pub fn numeric(name: &str, kind: ColumnKind, units: &str, range: Option<(f64, f64)>, na: usize) -> Self {
        ColumnSpec {
            name: name.to_string(),
            kind,
            units: units.to_string(),
            range,
            expected_na: na,
            levels: Vec::new(),
            source: None,
        }
    }

    pub fn categorical(name: &str, levels: &[&str]) -> Self {
        ColumnSpec {
            name: name.to_string(),
            kind: ColumnKind::Categorical,
            units: String::new(),
            range: None,
            expected_na: 0,
            levels: levels.iter().map(|s| s.to_string()).collect(),
            source: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((lo, hi)) = self.range {
            if !(lo <= hi) {
                return Err(Error::Schema(format!(
                    "column '{}' has range min {lo} above max {hi}",
                    self.name
                )));
            }
        }
        if self.kind == ColumnKind::Categorical && self.levels.is_empty() {
            return Err(Error::Schema(format!(
                "categorical column '{}' declares no levels",
                self.name
            )));
        }
        Ok(())
    }

    pub fn level_index(&self, level: &str) -> Option<usize> {
        self.levels.iter().position(|l| l == level)
    }
}

/// Names of the columns that make up the mandatory row key.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyColumns {
    pub year: String,
    pub region: String,
    pub planting: String,
    pub clone_id: String,
}

impl Default for KeyColumns {
    fn default() -> Self {
        KeyColumns {
            year: "Year".into(),
            region: "Trial Region".into(),
            planting: "Planting".into(),
            clone_id: "Clone".into(),
        }
    }
}

pub fn default_missing_tokens() -> Vec<String> {
    ["", "NA", "na", "N/A"].iter().map(|s| s.to_string()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    #[serde(default)]
    pub keys: KeyColumns,
    pub columns: Vec<ColumnSpec>,
    #[serde(default = "default_missing_tokens")]
    pub missing_tokens: Vec<String>,
}

impl Schema {
    pub fn new(columns: Vec<ColumnSpec>) -> Result<Self> {
        let s = Schema {
            keys: KeyColumns::default(),
            columns,
            missing_tokens: default_missing_tokens(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.columns {
            c.validate()?;
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("column '{}' declared twice", c.name)));
            }
        }
        if self.columns.iter().filter(|c| c.kind == ColumnKind::Response).count() > 1 {
            return Err(Error::Schema("more than one response column declared".into()));
        }
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn response(&self) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.kind == ColumnKind::Response)
    }

    pub fn is_missing_token(&self, cell: &str) -> bool {
        let t = cell.trim();
        self.missing_tokens.iter().any(|m| m == t)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let s: Schema = serde_json::from_str(&text)?;
        s.validate()?;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverted_range_rejected() {
        let c = ColumnSpec::numeric("x", ColumnKind::Mass, "", Some((5.0, 1.0)), 0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn categorical_needs_levels() {
        let mut c = ColumnSpec::categorical("Trial Region", &[]);
        assert!(c.validate().is_err());
        c.levels.push("HER".into());
        assert!(c.validate().is_ok());
    }

    #[test]
    fn duplicate_names_rejected() {
        let a = ColumnSpec::numeric("x", ColumnKind::Mass, "", None, 0);
        assert!(Schema::new(vec![a.clone(), a]).is_err());
    }
}
