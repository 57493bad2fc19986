//! Capture histories of observed animals and the counts every likelihood consumes.
//!
//! Only animals detected at least once are stored. The number of animals
//! never seen is `N - M` and is never materialized.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary detection matrix: one row per observed individual, one column per occasion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawHistory", into = "RawHistory")]
pub struct CaptureHistory {
    k: usize,
    rows: Vec<Vec<u8>>,
}

#[derive(Serialize, Deserialize)]
struct RawHistory {
    #[serde(rename = "K")]
    k: usize,
    histories: Vec<Vec<u8>>,
}

impl TryFrom<RawHistory> for CaptureHistory {
    type Error = Error;

    fn try_from(raw: RawHistory) -> Result<Self> {
        CaptureHistory::new(raw.k, raw.histories)
    }
}

impl From<CaptureHistory> for RawHistory {
    fn from(h: CaptureHistory) -> Self {
        RawHistory {
            k: h.k,
            histories: h.rows,
        }
    }
}

/// On-disk dataset encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    /// `{"K": int, "histories": [[0|1, ...], ...]}`
    Json,
    /// One row per individual, `K` comma-separated 0/1 columns, no header.
    Csv,
}

impl Format {
    /// Picks the format from a file extension (`.csv` is CSV, anything else JSON).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Json,
        }
    }
}

impl CaptureHistory {
    pub fn new(k: usize, rows: Vec<Vec<u8>>) -> Result<Self> {
        if k == 0 {
            return Err(Error::Validation(
                "number of occasions K must be >= 1".into(),
            ));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::Validation(format!(
                    "row {i} has length {} but K = {k}",
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|&&v| v > 1) {
                return Err(Error::Validation(format!(
                    "row {i} contains non-binary entry {v}"
                )));
            }
            if row.iter().all(|&v| v == 0) {
                return Err(Error::Validation(format!(
                    "row {i} is all zeros: unobserved individual stored"
                )));
            }
        }
        Ok(Self { k, rows })
    }

    /// Builds a history whose `i`-th individual is caught on the first `counts[i]` occasions.
    ///
    /// Useful when only per-individual capture counts matter (the `M0` and `Mh` likelihoods).
    pub fn from_capture_counts(k: usize, counts: &[u64]) -> Result<Self> {
        let rows = counts
            .iter()
            .map(|&c| {
                if c as usize > k {
                    Err(Error::Validation(format!(
                        "capture count {c} exceeds K = {k}"
                    )))
                } else {
                    Ok((0..k).map(|j| u8::from((j as u64) < c)).collect())
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(k, rows)
    }

    pub fn occasions(&self) -> usize {
        self.k
    }

    pub fn rows(&self) -> &[Vec<u8>] {
        &self.rows
    }

    pub fn observed(&self) -> usize {
        self.rows.len()
    }

    pub fn summarize(&self) -> SufficientStats {
        let k = self.k;
        let mut n_j = vec![0u64; k];
        let mut f_j = vec![0u64; k];
        let mut y_i_dot = Vec::with_capacity(self.rows.len());
        for row in &self.rows {
            let mut y = 0u64;
            for (j, &v) in row.iter().enumerate() {
                n_j[j] += u64::from(v);
                y += u64::from(v);
            }
            f_j[y as usize - 1] += 1;
            y_i_dot.push(y);
        }
        SufficientStats {
            m: self.rows.len() as u64,
            k: k as u64,
            n_dot: n_j.iter().sum(),
            n_j,
            y_i_dot,
            f_j,
        }
    }

    pub fn load(path: &Path, format: Format) -> Result<Self> {
        match format {
            Format::Json => Self::from_json_reader(fs::File::open(path)?),
            Format::Csv => Self::from_csv_reader(fs::File::open(path)?, None),
        }
    }

    pub fn store(&self, path: &Path, format: Format) -> Result<()> {
        let mut file = fs::File::create(path)?;
        match format {
            Format::Json => self.to_json_writer(&mut file),
            Format::Csv => self.to_csv_writer(&mut file),
        }
    }

    pub fn from_json_reader<R: Read>(reader: R) -> Result<Self> {
        Ok(serde_json::from_reader(reader)?)
    }

    pub fn to_json_writer<W: Write>(&self, mut writer: W) -> Result<()> {
        serde_json::to_writer(&mut writer, self)?;
        writer.write_all(b"\n")?;
        Ok(())
    }

    /// Reads the header-less CSV encoding. `K` is taken from `expected_k` when
    /// given, otherwise from the first row; an empty file needs `expected_k`.
    pub fn from_csv_reader<R: Read>(reader: R, expected_k: Option<usize>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            let row = record
                .iter()
                .map(|field| match field {
                    "0" => Ok(0u8),
                    "1" => Ok(1u8),
                    other => Err(Error::Validation(format!(
                        "row {i}: entry {other:?} is not 0 or 1"
                    ))),
                })
                .collect::<Result<Vec<u8>>>()?;
            rows.push(row);
        }
        let k = match (expected_k, rows.first()) {
            (Some(k), _) => k,
            (None, Some(first)) => first.len(),
            (None, None) => {
                return Err(Error::Validation(
                    "empty CSV dataset: number of occasions cannot be inferred".into(),
                ))
            }
        };
        Self::new(k, rows)
    }

    pub fn to_csv_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(writer);
        for row in &self.rows {
            wtr.write_record(row.iter().map(|v| if *v == 1 { "1" } else { "0" }))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Every count the likelihoods consume.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SufficientStats {
    /// Distinct animals observed at least once (`M_{K+1}`).
    pub m: u64,
    /// Number of occasions.
    pub k: u64,
    /// Total captures over all occasions.
    pub n_dot: u64,
    /// Captures per occasion, length `K`.
    pub n_j: Vec<u64>,
    /// Captures per observed individual, length `m`.
    pub y_i_dot: Vec<u64>,
    /// `f_j[j-1]` = individuals caught on exactly `j` occasions, `j = 1..=K`.
    pub f_j: Vec<u64>,
}

impl SufficientStats {
    /// Recaptures `r = n_dot - m`.
    pub fn recaptures(&self) -> u64 {
        self.n_dot - self.m
    }

    /// Checks the internal count identities.
    pub fn validate(&self) -> Result<()> {
        let k = self.k as usize;
        let bad = |msg: &str| Err(Error::Validation(msg.to_string()));
        if k == 0 || self.n_j.len() != k || self.f_j.len() != k {
            return bad("count vectors must have length K >= 1");
        }
        if self.y_i_dot.len() as u64 != self.m {
            return bad("y_i_dot must have one entry per observed individual");
        }
        if self.f_j.iter().sum::<u64>() != self.m {
            return bad("frequency counts must sum to M");
        }
        if self.n_j.iter().any(|&n| n > self.m) {
            return bad("per-occasion captures cannot exceed M");
        }
        if self.y_i_dot.iter().any(|&y| y == 0 || y > self.k) {
            return bad("per-individual captures must lie in 1..=K");
        }
        let weighted: u64 = self
            .f_j
            .iter()
            .enumerate()
            .map(|(j, &f)| (j as u64 + 1) * f)
            .sum();
        if self.n_j.iter().sum::<u64>() != self.n_dot
            || self.y_i_dot.iter().sum::<u64>() != self.n_dot
            || weighted != self.n_dot
        {
            return bad("total captures disagree across n_j, y_i_dot and f_j");
        }
        Ok(())
    }
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "probability must lie in [0, 1], got {p}"
        )))
    }
}

fn check_occasions(k: usize) -> Result<()> {
    if k == 0 {
        Err(Error::InvalidArgument(
            "number of occasions K must be >= 1".into(),
        ))
    } else {
        Ok(())
    }
}

/// Simulates `M0`: every animal is detected independently with probability `p` on each occasion.
pub fn simulate_m0(n_true: u64, p: f64, k: usize, seed: u64) -> Result<CaptureHistory> {
    check_probability(p)?;
    check_occasions(k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n_true)
        .map(|_| {
            (0..k)
                .map(|_| u8::from(rng.gen_bool(p)))
                .collect::<Vec<u8>>()
        })
        .filter(|row| row.contains(&1))
        .collect();
    CaptureHistory::new(k, rows)
}

/// Simulates `Mh`: each animal draws `p_i ~ Beta(alpha, beta)` once, then `K` Bernoulli(`p_i`) detections.
pub fn simulate_mh(
    n_true: u64,
    alpha: f64,
    beta: f64,
    k: usize,
    seed: u64,
) -> Result<CaptureHistory> {
    if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "Beta shapes must be positive, got alpha={alpha}, beta={beta}"
        )));
    }
    check_occasions(k)?;
    let dist = Beta::new(alpha, beta)
        .map_err(|e| Error::InvalidArgument(format!("Beta({alpha}, {beta}): {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n_true)
        .map(|_| {
            let p: f64 = dist.sample(&mut rng);
            (0..k)
                .map(|_| u8::from(rng.gen::<f64>() < p))
                .collect::<Vec<u8>>()
        })
        .filter(|row| row.contains(&1))
        .collect();
    CaptureHistory::new(k, rows)
}
