//! Longitudinal datasets in long format, with CSV round-tripping.
//!
//! A dataset is an ordered list of subjects; each subject carries
//! time-constant covariates, a non-decreasing time grid and one response
//! per time point. The CSV layout is `id,time,y,<covariate...>` with one
//! row per observation.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};

use crate::persist::fmt_g17;
use crate::{Error, Result};

/// One subject's covariates, observation times and responses.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub id: String,
    /// Aligned with [`LongitudinalDataset::covariate_names`].
    pub covariates: Vec<f64>,
    pub times: Vec<f64>,
    pub y: Vec<f64>,
}

/// Ordered subjects sharing one covariate vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalDataset {
    covariate_names: Vec<String>,
    subjects: Vec<SubjectRecord>,
}

impl LongitudinalDataset {
    /// Builds a dataset, checking every structural invariant: at least one
    /// subject, per-subject non-decreasing finite times, responses of the
    /// same length with no missing entries, covariates matching the shared
    /// name list.
    pub fn new(covariate_names: Vec<String>, subjects: Vec<SubjectRecord>) -> Result<Self> {
        if subjects.is_empty() {
            return Err(Error::InvalidData("dataset has no subjects".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for name in &covariate_names {
            if name.is_empty() || name.contains(',') {
                return Err(Error::InvalidData(format!("bad covariate name {name:?}")));
            }
            if !seen.insert(name.clone()) {
                return Err(Error::InvalidData(format!("duplicate covariate {name:?}")));
            }
        }
        for s in &subjects {
            if s.id.is_empty() || s.id.contains(',') {
                return Err(Error::InvalidData(format!("bad subject id {:?}", s.id)));
            }
            if s.covariates.len() != covariate_names.len() {
                return Err(Error::InvalidData(format!(
                    "subject {}: {} covariates, expected {}",
                    s.id,
                    s.covariates.len(),
                    covariate_names.len()
                )));
            }
            if s.times.is_empty() {
                return Err(Error::InvalidData(format!(
                    "subject {}: needs at least one observation",
                    s.id
                )));
            }
            if s.times.len() != s.y.len() {
                return Err(Error::InvalidData(format!(
                    "subject {}: {} times but {} responses",
                    s.id,
                    s.times.len(),
                    s.y.len()
                )));
            }
            if s.times.iter().any(|t| !t.is_finite()) || s.y.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!(
                    "subject {}: non-finite time or response",
                    s.id
                )));
            }
            if s.covariates.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!(
                    "subject {}: non-finite covariate",
                    s.id
                )));
            }
            if s.times.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::InvalidData(format!(
                    "subject {}: times must be non-decreasing",
                    s.id
                )));
            }
        }
        Ok(Self {
            covariate_names,
            subjects,
        })
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn covariate_index(&self, name: &str) -> Option<usize> {
        self.covariate_names.iter().position(|n| n == name)
    }

    pub fn subjects(&self) -> &[SubjectRecord] {
        &self.subjects
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    /// Total observation count across subjects.
    pub fn n_obs(&self) -> usize {
        self.subjects.iter().map(|s| s.times.len()).sum()
    }

    /// Z-scores the named covariates in place (population sd over
    /// subjects). Zero-variance covariates are left centered only.
    pub fn standardize(&mut self, names: &[String]) -> Result<()> {
        for name in names {
            let idx = self
                .covariate_index(name)
                .ok_or_else(|| Error::InvalidData(format!("unknown covariate {name:?}")))?;
            let vals: Vec<f64> = self.subjects.iter().map(|s| s.covariates[idx]).collect();
            let m = crate::math::mean(&vals);
            let sd = crate::math::sample_variance(&vals).sqrt();
            for s in &mut self.subjects {
                s.covariates[idx] -= m;
                if sd > 0.0 {
                    s.covariates[idx] /= sd;
                }
            }
        }
        Ok(())
    }

    /// Writes the long-format CSV. Numbers use 17 significant digits so
    /// the file round-trips bit-exactly.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "id,time,y")?;
        for name in &self.covariate_names {
            write!(w, ",{name}")?;
        }
        writeln!(w)?;
        for s in &self.subjects {
            for (t, y) in s.times.iter().zip(&s.y) {
                write!(w, "{},{},{}", s.id, fmt_g17(*t), fmt_g17(*y))?;
                for c in &s.covariates {
                    write!(w, ",{}", fmt_g17(*c))?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }

    /// Reads a long-format CSV. Rows are grouped by id in order of first
    /// appearance; covariates must be constant within a subject.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let reader = BufReader::new(r);
        let mut lines = reader.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Parse { line: 1, message: "empty file".into() })?;
        let header = header?;
        let cols: Vec<&str> = header.trim_end().split(',').collect();
        if cols.len() < 3 || cols[0] != "id" || cols[1] != "time" || cols[2] != "y" {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header starting id,time,y, got {header:?}"),
            });
        }
        let covariate_names: Vec<String> = cols[3..].iter().map(|s| s.to_string()).collect();
        let n_cov = covariate_names.len();

        let mut order: Vec<String> = Vec::new();
        let mut by_id: BTreeMap<String, SubjectRecord> = BTreeMap::new();
        for (lineno, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.trim_end().split(',').collect();
            if parts.len() != 3 + n_cov {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: format!("expected {} fields, got {}", 3 + n_cov, parts.len()),
                });
            }
            let parse = |s: &str, what: &str| -> Result<f64> {
                s.parse::<f64>().map_err(|_| Error::Parse {
                    line: lineno + 1,
                    message: format!("cannot parse {what} value {s:?}"),
                })
            };
            let id = parts[0].to_string();
            let time = parse(parts[1], "time")?;
            let y = parse(parts[2], "y")?;
            let mut covs = Vec::with_capacity(n_cov);
            for (k, raw) in parts[3..].iter().enumerate() {
                covs.push(parse(raw, &covariate_names[k])?);
            }
            match by_id.get_mut(&id) {
                Some(rec) => {
                    if rec
                        .covariates
                        .iter()
                        .zip(&covs)
                        .any(|(a, b)| (a - b).abs() > 0.0)
                    {
                        return Err(Error::Parse {
                            line: lineno + 1,
                            message: format!("subject {id}: covariates change over time"),
                        });
                    }
                    rec.times.push(time);
                    rec.y.push(y);
                }
                None => {
                    order.push(id.clone());
                    by_id.insert(
                        id.clone(),
                        SubjectRecord {
                            id,
                            covariates: covs,
                            times: vec![time],
                            y: vec![y],
                        },
                    );
                }
            }
        }
        let subjects: Vec<SubjectRecord> = order
            .into_iter()
            .map(|id| by_id.remove(&id).expect("id recorded on insert"))
            .collect();
        Self::new(covariate_names, subjects)
    }
}
