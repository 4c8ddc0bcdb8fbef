//! On-disk formats: chain CSVs, posterior-summary tables, run manifests
//! and content digests. Every float is written with 17 significant digits
//! so all files round-trip exactly.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::ParameterSummary;
use crate::{Error, Result};

/// Shortest text form that parses back to the same f64: 17 significant
/// digits, trimmed of redundant trailing zeros in the mantissa.
pub fn fmt_g17(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        // Integral values print plainly; cheap to parse and stable.
        return format!("{x:.1}");
    }
    let mut s = format!("{x:.16e}");
    if let Some(epos) = s.find('e') {
        let (mant, exp) = s.split_at(epos);
        let trimmed = mant.trim_end_matches('0').trim_end_matches('.');
        s = format!("{trimmed}{exp}");
    }
    s
}

/// Hex SHA-256 of a byte slice.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

/// Hex SHA-256 of a file's contents.
pub fn digest_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// Quotes a header field when it contains a comma (covariance entries are
/// named like `Sigma_b[1,2]`).
fn quote_field(name: &str) -> String {
    if name.contains(',') || name.contains('"') {
        format!("\"{}\"", name.replace('"', "\"\""))
    } else {
        name.to_string()
    }
}

/// Splits one CSV line honoring double-quoted fields.
fn split_quoted(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut in_quotes = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' if in_quotes && chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            '"' => in_quotes = !in_quotes,
            ',' if !in_quotes => fields.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    fields.push(cur);
    fields
}

/// Writes one chain's retained draws: header of canonical parameter names,
/// one row per retained iteration.
pub fn write_chain_csv<W: Write>(mut w: W, names: &[String], draws: &[Vec<f64>]) -> Result<()> {
    let header: Vec<String> = names.iter().map(|n| quote_field(n)).collect();
    writeln!(w, "{}", header.join(","))?;
    let rows = draws.first().map_or(0, Vec::len);
    for row in 0..rows {
        let mut line = String::new();
        for (k, col) in draws.iter().enumerate() {
            if k > 0 {
                line.push(',');
            }
            line.push_str(&fmt_g17(col[row]));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Reads a chain CSV back into (names, per-parameter columns).
pub fn read_chain_csv<R: Read>(r: R) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let reader = BufReader::new(r);
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 1, message: "empty chain file".into() })?;
    let names: Vec<String> = split_quoted(header?.trim_end());
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (lineno, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.trim_end().split(',').collect();
        if parts.len() != names.len() {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!("expected {} fields, got {}", names.len(), parts.len()),
            });
        }
        for (k, raw) in parts.iter().enumerate() {
            cols[k].push(raw.parse::<f64>().map_err(|_| Error::Parse {
                line: lineno + 1,
                message: format!("cannot parse draw {raw:?}"),
            })?);
        }
    }
    Ok((names, cols))
}

/// Posterior-summary table as CSV.
pub fn write_summary_csv<W: Write>(mut w: W, rows: &[ParameterSummary]) -> Result<()> {
    writeln!(w, "parameter,mean,sd,ci_lower,ci_upper,rhat")?;
    for r in rows {
        let rhat = r.rhat.map_or(String::from(""), fmt_g17);
        writeln!(
            w,
            "{},{},{},{},{},{}",
            quote_field(&r.name),
            fmt_g17(r.mean),
            fmt_g17(r.sd),
            fmt_g17(r.ci_lower),
            fmt_g17(r.ci_upper),
            rhat
        )?;
    }
    Ok(())
}

/// Writes per-subject posterior-mean random effects: one row per subject,
/// columns `b[i]`, `u[i]`, `a[i]` as present.
pub fn write_effects_csv<W: Write>(
    mut w: W,
    ids: &[String],
    effects: &[crate::modelspec::SubjectEffects],
) -> Result<()> {
    let dims = effects.first().map_or((0, 0, 0), |e| (e.b.len(), e.u.len(), e.a.len()));
    let mut header = vec!["subject".to_string()];
    for i in 0..dims.0 {
        header.push(format!("b[{i}]"));
    }
    for i in 0..dims.1 {
        header.push(format!("u[{i}]"));
    }
    for i in 0..dims.2 {
        header.push(format!("a[{i}]"));
    }
    writeln!(w, "{}", header.join(","))?;
    for (id, e) in ids.iter().zip(effects) {
        let mut line = id.clone();
        for v in e.b.iter().chain(e.u.iter()).chain(e.a.iter()) {
            line.push(',');
            line.push_str(&fmt_g17(*v));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Reads an effects CSV back into ids and per-subject effect vectors.
pub fn read_effects_csv<R: Read>(
    r: R,
) -> Result<(Vec<String>, Vec<crate::modelspec::SubjectEffects>)> {
    use nalgebra::DVector;
    let reader = BufReader::new(r);
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 1, message: "empty effects file".into() })?;
    let cols: Vec<String> = header?.trim_end().split(',').map(str::to_string).collect();
    if cols.first().map(String::as_str) != Some("subject") {
        return Err(Error::Parse {
            line: 1,
            message: "effects header must start with `subject`".into(),
        });
    }
    let nb = cols.iter().filter(|c| c.starts_with("b[")).count();
    let nu = cols.iter().filter(|c| c.starts_with("u[")).count();
    let na = cols.iter().filter(|c| c.starts_with("a[")).count();
    let mut ids = Vec::new();
    let mut effects = Vec::new();
    for (lineno, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.trim_end().split(',').collect();
        if parts.len() != 1 + nb + nu + na {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!("expected {} fields, got {}", 1 + nb + nu + na, parts.len()),
            });
        }
        let values: Vec<f64> = parts[1..]
            .iter()
            .map(|s| {
                s.parse::<f64>().map_err(|_| Error::Parse {
                    line: lineno + 1,
                    message: format!("cannot parse effect value {s:?}"),
                })
            })
            .collect::<Result<_>>()?;
        ids.push(parts[0].to_string());
        effects.push(crate::modelspec::SubjectEffects {
            b: DVector::from_row_slice(&values[..nb]),
            u: DVector::from_row_slice(&values[nb..nb + nu]),
            a: DVector::from_row_slice(&values[nb + nu..]),
        });
    }
    Ok((ids, effects))
}

/// Reproducibility record written once per output directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    pub input_digests: BTreeMap<String, String>,
    pub timings_ms: BTreeMap<String, u64>,
}

impl RunManifest {
    pub fn new(command: &str, config_hash: String, seed: u64) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("aldrm".to_string(), env!("CARGO_PKG_VERSION").to_string());
        Self {
            command: command.to_string(),
            config_hash,
            seed,
            versions,
            input_digests: BTreeMap::new(),
            timings_ms: BTreeMap::new(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}
