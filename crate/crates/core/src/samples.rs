//! The sample-set currency shared by every uncertainty method.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodTag {
    BnnMcmc,
    BnnVi,
    Bootstrap,
    DeepEnsemble,
    McDropout,
    GpMcmc,
}

impl MethodTag {
    pub const ALL: [MethodTag; 6] = [
        MethodTag::BnnMcmc,
        MethodTag::BnnVi,
        MethodTag::Bootstrap,
        MethodTag::DeepEnsemble,
        MethodTag::McDropout,
        MethodTag::GpMcmc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodTag::BnnMcmc => "bnn-mcmc",
            MethodTag::BnnVi => "bnn-vi",
            MethodTag::Bootstrap => "bootstrap",
            MethodTag::DeepEnsemble => "deep-ensemble",
            MethodTag::McDropout => "mc-dropout",
            MethodTag::GpMcmc => "gp-mcmc",
        }
    }

    /// Row label used in rendered tables.
    pub fn display_name(self) -> &'static str {
        match self {
            MethodTag::BnnMcmc => "BNN-MCMC",
            MethodTag::BnnVi => "BNN-VI",
            MethodTag::Bootstrap => "Bootstrap",
            MethodTag::DeepEnsemble => "DE",
            MethodTag::McDropout => "MC Dropout",
            MethodTag::GpMcmc => "GP",
        }
    }

    /// Stable integer label for seed derivation.
    pub fn stream_id(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for MethodTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodTag::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

/// `S × m` matrix of sampled class-1 probabilities, stored row-major
/// (one row per posterior or ensemble draw, one column per evaluation point).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilitySampleSet {
    values: Vec<f64>,
    draws: usize,
    points: usize,
    pub method: MethodTag,
    pub meta: BTreeMap<String, serde_json::Value>,
}

impl ProbabilitySampleSet {
    pub fn from_rows(rows: Vec<Vec<f64>>, method: MethodTag) -> Result<Self> {
        let draws = rows.len();
        let points = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != points) {
            return Err(Error::Data("sample rows have unequal lengths".into()));
        }
        Self::from_flat(rows.into_iter().flatten().collect(), draws, points, method)
    }

    pub fn from_flat(values: Vec<f64>, draws: usize, points: usize, method: MethodTag) -> Result<Self> {
        if draws < 2 {
            return Err(Error::Data(format!("sample set needs at least 2 draws, got {draws}")));
        }
        if values.len() != draws * points {
            return Err(Error::Data("sample matrix size mismatch".into()));
        }
        if let Some(i) = values.iter().position(|&v| !(v > 0.0 && v < 1.0)) {
            return Err(Error::Data(format!(
                "sample entry {} at draw {}, point {} is outside (0, 1)",
                values[i],
                i / points.max(1),
                i % points.max(1)
            )));
        }
        Ok(ProbabilitySampleSet { values, draws, points, method, meta: BTreeMap::new() })
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.meta.insert(key.to_string(), value.into());
        self
    }

    pub fn num_draws(&self) -> usize {
        self.draws
    }

    pub fn num_points(&self) -> usize {
        self.points
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.points..(s + 1) * self.points]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.draws).map(|s| self.values[s * self.points + j]).collect()
    }

    /// Posterior predictive mean per evaluation point.
    pub fn column_means(&self) -> Vec<f64> {
        (0..self.points).map(|j| pairwise_sum(&self.column(j)) / self.draws as f64).collect()
    }

    /// Keeps only the columns in `range`.
    pub fn slice_points(&self, range: std::ops::Range<usize>) -> ProbabilitySampleSet {
        let mut values = Vec::with_capacity(self.draws * range.len());
        for s in 0..self.draws {
            values.extend_from_slice(&self.row(s)[range.clone()]);
        }
        ProbabilitySampleSet {
            values,
            draws: self.draws,
            points: range.len(),
            method: self.method,
            meta: self.meta.clone(),
        }
    }

    /// CSV dump, one row per draw, 17 significant digits.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for s in 0..self.draws {
            let line: Vec<String> = self.row(s).iter().map(|&v| crate::simulator::fmt17(v)).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Binary dump: `u64` draws, `u64` points, then row-major little-endian `f64`.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(16 + 8 * self.values.len());
        buf.write_all(&(self.draws as u64).to_le_bytes()).unwrap();
        buf.write_all(&(self.points as u64).to_le_bytes()).unwrap();
        for v in &self.values {
            buf.write_all(&v.to_le_bytes()).unwrap();
        }
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn read_binary(path: &Path, method: MethodTag) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let bad = || Error::Parse { path: path.into(), msg: "truncated sample dump".into() };
        let word = |i: usize| -> Result<[u8; 8]> {
            bytes.get(i * 8..i * 8 + 8).and_then(|b| b.try_into().ok()).ok_or_else(bad)
        };
        let draws = u64::from_le_bytes(word(0)?) as usize;
        let points = u64::from_le_bytes(word(1)?) as usize;
        if bytes.len() != 16 + 8 * draws * points {
            return Err(bad());
        }
        let values = (0..draws * points).map(|k| word(k + 2).map(f64::from_le_bytes)).collect::<Result<_>>()?;
        Self::from_flat(values, draws, points, method)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_checks_invariants() {
        assert!(ProbabilitySampleSet::from_rows(vec![vec![0.5]], MethodTag::BnnMcmc).is_err());
        assert!(ProbabilitySampleSet::from_rows(vec![vec![0.5], vec![1.0]], MethodTag::BnnMcmc).is_err());
        assert!(ProbabilitySampleSet::from_rows(vec![vec![0.5], vec![f64::NAN]], MethodTag::BnnMcmc).is_err());
        let s = ProbabilitySampleSet::from_rows(vec![vec![0.2, 0.4], vec![0.4, 0.6]], MethodTag::BnnMcmc).unwrap();
        assert_eq!(s.column(1), vec![0.4, 0.6]);
        assert!((s.column_means()[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn tags_round_trip_through_strings() {
        for m in MethodTag::ALL {
            assert_eq!(m.as_str().parse::<MethodTag>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.as_str()));
        }
        assert!("nuts".parse::<MethodTag>().is_err());
    }

    #[test]
    fn binary_dump_round_trips() {
        let s = ProbabilitySampleSet::from_rows(vec![vec![0.1, 0.2, 0.3], vec![0.9, 0.8, 0.7]], MethodTag::GpMcmc).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.bin");
        s.write_binary(&p).unwrap();
        assert_eq!(ProbabilitySampleSet::read_binary(&p, MethodTag::GpMcmc).unwrap(), s);
        s.write_csv(&dir.path().join("s.csv")).unwrap();
    }
}
