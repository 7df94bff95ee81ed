//! Family-agnostic hyperparameter values and typed accessors.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One hyperparameter value as it appears in a grid or config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
    List(Vec<i64>),
}

impl Param {
    fn rank(&self) -> u8 {
        match self {
            Param::Null => 0,
            Param::Bool(_) => 1,
            Param::Int(_) | Param::Float(_) => 2,
            Param::Text(_) => 3,
            Param::List(_) => 4,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Param::Int(i) => Some(*i as f64),
            Param::Float(f) => Some(*f),
            _ => None,
        }
    }

    /// Total order used for deterministic tie-breaking.
    pub fn total_cmp(&self, other: &Param) -> Ordering {
        match (self, other) {
            (Param::Bool(a), Param::Bool(b)) => a.cmp(b),
            (Param::Text(a), Param::Text(b)) => a.cmp(b),
            (Param::List(a), Param::List(b)) => a.cmp(b),
            (a, b) if a.rank() == 2 && b.rank() == 2 => {
                a.as_f64().unwrap().total_cmp(&b.as_f64().unwrap())
            }
            (a, b) => a.rank().cmp(&b.rank()),
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Param::Null => f.write_str("none"),
            Param::Bool(b) => write!(f, "{b}"),
            Param::Int(i) => write!(f, "{i}"),
            Param::Float(x) => write!(f, "{x}"),
            Param::Text(s) => f.write_str(s),
            Param::List(v) => {
                let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "({})", parts.join(","))
            }
        }
    }
}

impl From<f64> for Param {
    fn from(v: f64) -> Self {
        Param::Float(v)
    }
}

impl From<i64> for Param {
    fn from(v: i64) -> Self {
        Param::Int(v)
    }
}

impl From<&str> for Param {
    fn from(v: &str) -> Self {
        Param::Text(v.to_string())
    }
}

pub type Hyperparams = BTreeMap<String, Param>;

/// Lexicographic comparison of two hyperparameter assignments (keys in sorted order).
pub fn compare_hyperparams(a: &Hyperparams, b: &Hyperparams) -> Ordering {
    let mut ia = a.iter();
    let mut ib = b.iter();
    loop {
        match (ia.next(), ib.next()) {
            (None, None) => return Ordering::Equal,
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some((ka, va)), Some((kb, vb))) => {
                let o = ka.cmp(kb).then_with(|| va.total_cmp(vb));
                if o != Ordering::Equal {
                    return o;
                }
            }
        }
    }
}

pub fn describe(h: &Hyperparams) -> String {
    h.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
}

/// Typed reader over a hyperparameter map that rejects keys nobody asked for.
pub(crate) struct Reader<'a> {
    family: &'static str,
    map: &'a Hyperparams,
    used: Vec<&'a str>,
}

impl<'a> Reader<'a> {
    pub fn new(family: &'static str, map: &'a Hyperparams) -> Self {
        Reader {
            family,
            map,
            used: Vec::new(),
        }
    }

    fn take(&mut self, key: &str) -> Option<&'a Param> {
        let (k, v) = self.map.get_key_value(key)?;
        self.used.push(k.as_str());
        Some(v)
    }

    fn err(&self, msg: String) -> Error {
        Error::hyper(self.family, msg)
    }

    pub fn f64(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.take(key) {
            None => Ok(default),
            Some(p) => p
                .as_f64()
                .ok_or_else(|| self.err(format!("'{key}' must be a number, got {p}"))),
        }
    }

    pub fn usize(&mut self, key: &str, default: usize) -> Result<usize> {
        match self.take(key) {
            None => Ok(default),
            Some(Param::Int(i)) if *i >= 0 => Ok(*i as usize),
            Some(p) => Err(self.err(format!("'{key}' must be a nonnegative integer, got {p}"))),
        }
    }

    /// Integer or null (unlimited).
    pub fn opt_usize(&mut self, key: &str, default: Option<usize>) -> Result<Option<usize>> {
        match self.take(key) {
            None => Ok(default),
            Some(Param::Null) => Ok(None),
            Some(Param::Int(i)) if *i >= 0 => Ok(Some(*i as usize)),
            Some(Param::Text(s)) if s == "none" => Ok(None),
            Some(p) => Err(self.err(format!("'{key}' must be an integer or null, got {p}"))),
        }
    }

    pub fn bool(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.take(key) {
            None => Ok(default),
            Some(Param::Bool(b)) => Ok(*b),
            Some(p) => Err(self.err(format!("'{key}' must be a boolean, got {p}"))),
        }
    }

    pub fn list(&mut self, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        match self.take(key) {
            None => Ok(default.to_vec()),
            Some(Param::List(v)) if v.iter().all(|&x| x > 0) => Ok(v.iter().map(|&x| x as usize).collect()),
            Some(Param::Int(i)) if *i > 0 => Ok(vec![*i as usize]),
            Some(p) => Err(self.err(format!("'{key}' must be a list of positive integers, got {p}"))),
        }
    }

    /// A number, or the text "1/d" meaning one over the feature count.
    pub fn gamma(&mut self, key: &str, n_features: usize) -> Result<f64> {
        let v = match self.take(key) {
            None => 1.0 / n_features.max(1) as f64,
            Some(Param::Text(s)) if s == "1/d" || s == "scale" => 1.0 / n_features.max(1) as f64,
            Some(p) => p
                .as_f64()
                .ok_or_else(|| self.err(format!("'{key}' must be a number or \"1/d\", got {p}")))?,
        };
        Ok(v)
    }

    /// Features per split: "sqrt" (default), "all", a count, or a fraction in (0, 1].
    pub fn max_features(&mut self, key: &str, n_features: usize) -> Result<usize> {
        let d = n_features.max(1);
        let v = match self.take(key) {
            None => ((d as f64).sqrt() as usize).max(1),
            Some(Param::Text(s)) if s == "sqrt" => ((d as f64).sqrt() as usize).max(1),
            Some(Param::Text(s)) if s == "all" => d,
            Some(Param::Null) => d,
            Some(Param::Int(i)) if *i >= 1 => (*i as usize).min(d),
            Some(Param::Float(f)) if *f > 0.0 && *f <= 1.0 => ((f * d as f64) as usize).max(1),
            Some(p) => return Err(self.err(format!("'{key}' must be \"sqrt\", \"all\", a count or a fraction, got {p}"))),
        };
        Ok(v)
    }

    /// Keys with a given prefix, stripped of it.
    pub fn prefixed(&mut self, prefix: &str) -> Hyperparams {
        let mut out = Hyperparams::new();
        for (k, v) in self.map {
            if let Some(rest) = k.strip_prefix(prefix) {
                self.used.push(k.as_str());
                out.insert(rest.to_string(), v.clone());
            }
        }
        out
    }

    pub fn finish(self) -> Result<()> {
        for k in self.map.keys() {
            if !self.used.contains(&k.as_str()) {
                return Err(self.err(format!("unknown hyperparameter '{k}'")));
            }
        }
        Ok(())
    }

    pub fn check(&self, ok: bool, msg: &str) -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(self.err(msg.to_string()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_values_map_to_variants() {
        let h: Hyperparams = serde_json::from_str(r#"{"a":null,"b":3,"c":0.5,"d":"1/d","e":[64,32],"f":true}"#).unwrap();
        assert_eq!(h["a"], Param::Null);
        assert_eq!(h["b"], Param::Int(3));
        assert_eq!(h["c"], Param::Float(0.5));
        assert_eq!(h["d"], Param::Text("1/d".into()));
        assert_eq!(h["e"], Param::List(vec![64, 32]));
        assert_eq!(h["f"], Param::Bool(true));
        let back: Hyperparams = serde_json::from_str(&serde_json::to_string(&h).unwrap()).unwrap();
        assert_eq!(back, h);
    }

    #[test]
    fn lexicographic_order() {
        let a: Hyperparams = [("c".into(), Param::Float(0.1)), ("gamma".into(), Param::Float(1.0))].into();
        let b: Hyperparams = [("c".into(), Param::Int(1)), ("gamma".into(), Param::Float(0.01))].into();
        assert_eq!(compare_hyperparams(&a, &b), Ordering::Less);
        assert_eq!(Param::Null.total_cmp(&Param::Int(3)), Ordering::Less);
    }

    #[test]
    fn unknown_keys_rejected() {
        let h: Hyperparams = [("k".into(), Param::Int(3)), ("kk".into(), Param::Int(1))].into();
        let mut r = Reader::new("knn", &h);
        assert_eq!(r.usize("k", 5).unwrap(), 3);
        assert!(r.finish().is_err());
    }
}
