//! Output artifacts: commented CSV files, PGM images, return normalization
//! and run reports.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use anyhow::{ensure, Context, Result};
use serde::{Deserialize, Serialize};

/// Write `rows` as CSV preceded by a `# config_hash=... seed=...` line.
pub fn write_csv<T: Serialize>(path: &Path, config_hash: &str, seed: Option<u64>, rows: &[T]) -> Result<()> {
    let mut f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    match seed {
        Some(s) => writeln!(f, "# config_hash={config_hash} seed={s}")?,
        None => writeln!(f, "# config_hash={config_hash} seed=all")?,
    }
    let mut w = csv::Writer::from_writer(f);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a CSV written by [`write_csv`], skipping the comment line.
pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Linear 8-bit scaling used for a PGM image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PgmScale {
    pub min: f64,
    pub max: f64,
}

/// Binary PGM of a row-major grid, mapped linearly from `[min, max]` to
/// `[0, 255]`. A constant grid maps to 0.
pub fn write_pgm(path: &Path, width: usize, height: usize, values: &[f64]) -> Result<PgmScale> {
    ensure!(values.len() == width * height, "grid has {} values, expected {}", values.len(), width * height);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let pixels: Vec<u8> = values
        .iter()
        .map(|v| if span > 0.0 { (255.0 * (v - min) / span).round() as u8 } else { 0 })
        .collect();
    let mut f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write!(f, "P5\n{width} {height}\n255\n")?;
    f.write_all(&pixels)?;
    Ok(PgmScale { min, max })
}

/// Affine score range used to normalize returns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub score_min: f64,
    pub score_max: f64,
}

impl NormalizationSpec {
    pub fn new(score_min: f64, score_max: f64) -> Result<Self> {
        let s = Self { score_min, score_max };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.score_max > self.score_min,
            "score_max {} must exceed score_min {}",
            self.score_max,
            self.score_min
        );
        Ok(())
    }

    /// Range for tasks scored as success plus a bonus for finishing early:
    /// `max = 1 + (1 − k / max_steps)` with `min = 0`.
    pub fn success_bonus(expert_steps: f64, max_steps: f64) -> Result<Self> {
        ensure!(max_steps > 0.0, "max_steps must be positive");
        Self::new(0.0, 1.0 + (1.0 - expert_steps / max_steps))
    }
}

/// `(r − min) / (max − min)`, not clamped.
pub fn normalize_return(r: f64, spec: &NormalizationSpec) -> Result<f64> {
    spec.validate()?;
    Ok((r - spec.score_min) / (spec.score_max - spec.score_min))
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub n_rollouts: usize,
    pub mean_return: f64,
    pub std_return: f64,
    pub success_rate: f64,
    pub normalized: f64,
    /// `normalized × 100`, the usual table display scale.
    pub normalized_x100: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean_return: f64,
    pub std_return: f64,
    pub mean_success: f64,
    pub mean_normalized: f64,
    pub std_normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub per_seed: Vec<SeedResult>,
    pub aggregate: Aggregate,
    /// Loss and evaluation trace files that fed this report.
    pub traces: Vec<String>,
    pub wall_clock_secs: f64,
}

impl RunReport {
    pub fn new(per_seed: Vec<SeedResult>, traces: Vec<String>, wall_clock_secs: f64) -> Self {
        let aggregate = Self::aggregate_of(&per_seed);
        Self {
            per_seed,
            aggregate,
            traces,
            wall_clock_secs,
        }
    }

    pub fn aggregate_of(rows: &[SeedResult]) -> Aggregate {
        let returns: Vec<f64> = rows.iter().map(|r| r.mean_return).collect();
        let norm: Vec<f64> = rows.iter().map(|r| r.normalized).collect();
        let succ: Vec<f64> = rows.iter().map(|r| r.success_rate).collect();
        let (mean_return, std_return) = mean_std(&returns);
        let (mean_normalized, std_normalized) = mean_std(&norm);
        Aggregate {
            mean_return,
            std_return,
            mean_success: mean_std(&succ).0,
            mean_normalized,
            std_normalized,
        }
    }

    /// True when the stored aggregate equals a fresh recomputation.
    pub fn is_consistent(&self) -> bool {
        Self::aggregate_of(&self.per_seed) == self.aggregate
    }
}
