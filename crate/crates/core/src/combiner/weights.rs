use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// `match_0 .. match_{n-1}`, `length`, `lm`.
pub fn feature_names(num_systems: usize) -> Vec<String> {
    (0..num_systems)
        .map(|s| format!("match_{s}"))
        .chain(["length".to_string(), "lm".to_string()])
        .collect()
}

/// Named linear-model weights.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector {
    names: Vec<String>,
    values: Vec<f64>,
}

impl WeightVector {
    pub fn new(names: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if names.len() != values.len() {
            return Err(Error::LengthMismatch(format!(
                "{} weight names for {} values",
                names.len(),
                values.len()
            )));
        }
        Ok(WeightVector { names, values })
    }

    /// The same weight for every match feature.
    pub fn for_systems(num_systems: usize, matches: f64, length: f64, lm: f64) -> Self {
        let mut values = vec![matches; num_systems];
        values.extend([length, lm]);
        WeightVector {
            names: feature_names(num_systems),
            values,
        }
    }

    pub fn zeros(num_systems: usize) -> Self {
        Self::for_systems(num_systems, 0.0, 0.0, 0.0)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dot(&self, features: &[f64]) -> f64 {
        self.values.iter().zip(features).map(|(w, f)| w * f).sum()
    }

    /// `self + gamma * direction`.
    pub fn stepped(&self, direction: &[f64], gamma: f64) -> Self {
        WeightVector {
            names: self.names.clone(),
            values: self.values.iter().zip(direction).map(|(w, d)| w + gamma * d).collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        WeightVector {
            names: self.names.clone(),
            values: self.values.iter().map(|w| w * c).collect(),
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (n, v) in self.names.iter().zip(&self.values) {
            writeln!(out, "{n}\t{v}").unwrap();
        }
        out
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut names = Vec::new();
        let mut values = Vec::new();
        for (no, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (n, v) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(origin, no + 1, "expected name<TAB>value"))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::parse(origin, no + 1, format!("not a number: {v:?}")))?;
            if !v.is_finite() {
                return Err(Error::parse(origin, no + 1, "weight is not finite"));
            }
            names.push(n.to_string());
            values.push(v);
        }
        Ok(WeightVector { names, values })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }

    /// Checks the names against the feature layout for `num_systems` systems.
    pub fn check_layout(&self, num_systems: usize) -> Result<()> {
        if self.names != feature_names(num_systems) {
            return Err(Error::invalid(format!(
                "weights [{}] do not match the features of {num_systems} systems",
                self.names.join(", ")
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_round_trip() {
        let w = WeightVector::for_systems(3, 1.0, -1.5, 0.1);
        assert_eq!(w.names(), ["match_0", "match_1", "match_2", "length", "lm"]);
        let back = WeightVector::parse(&w.render(), Path::new("w")).unwrap();
        assert_eq!(back, w);
        assert!(WeightVector::parse("match_0 1", Path::new("w")).is_err());
        assert!(w.check_layout(3).is_ok());
        assert!(w.check_layout(2).is_err());
    }

    #[test]
    fn dot_and_step() {
        let w = WeightVector::for_systems(1, 2.0, 0.0, 1.0);
        assert_eq!(w.dot(&[1.0, 5.0, -2.0]), 0.0);
        assert_eq!(w.stepped(&[1.0, 0.0, 0.0], 0.5).values(), [2.5, 0.0, 1.0]);
    }
}
