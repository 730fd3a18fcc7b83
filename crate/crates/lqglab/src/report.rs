//! Report plumbing: deterministic JSON output, atomic file writes, z-scores,
//! and order-independent (pairwise) summation.

use crate::error::Result;
use serde::Serialize;
use std::io::Write;
use std::path::Path;

/// Pairwise summation: associativity-fixed reduction so results do not
/// depend on accumulation order or thread count.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Sample variance (denominator n-1).
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&sq) / (xs.len() - 1) as f64
}

/// Standard error of the mean.
pub fn standard_error(xs: &[f64]) -> f64 {
    (sample_variance(xs) / xs.len() as f64).sqrt()
}

/// Half-width of the 95% normal confidence interval for the mean.
pub fn ci95_half_width(xs: &[f64]) -> f64 {
    1.959_963_984_540_054 * standard_error(xs)
}

/// z-score of an empirical mean against an analytic target.
pub fn z_score(empirical_mean: f64, target: f64, se: f64) -> f64 {
    if se == 0.0 {
        if empirical_mean == target {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (empirical_mean - target) / se
    }
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    if v.is_empty() {
        f64::NAN
    } else if v.len() % 2 == 1 {
        v[v.len() / 2]
    } else {
        0.5 * (v[v.len() / 2 - 1] + v[v.len() / 2])
    }
}

/// Serialize a report to pretty JSON with the artifact version stamped in.
pub fn to_json<T: Serialize>(report: &T) -> Result<String> {
    #[derive(Serialize)]
    struct Versioned<'a, T: Serialize> {
        artifact_version: &'static str,
        #[serde(flatten)]
        body: &'a T,
    }
    Ok(serde_json::to_string_pretty(&Versioned {
        artifact_version: env!("CARGO_PKG_VERSION"),
        body: report,
    })?)
}

/// Write a file atomically: write to a sibling temp file, then rename.
pub fn atomic_write(path: &Path, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("out")
    ));
    {
        let mut f = std::fs::File::create(&tmp)?;
        write(&mut f)?;
        f.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Write a JSON report atomically.
pub fn save_json<T: Serialize>(path: &Path, report: &T) -> Result<()> {
    let text = to_json(report)?;
    atomic_write(path, |w| {
        w.write_all(text.as_bytes())?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

/// Write CSV rows atomically (header plus rows of float columns).
pub fn save_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    atomic_write(path, |w| {
        writeln!(w, "{}", header.join(","))?;
        for row in rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_matches_naive_on_small_inputs() {
        let xs: Vec<f64> = (0..101).map(|k| (k as f64) * 0.1 - 3.0).collect();
        let naive: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - naive).abs() < 1e-9);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn stats_helpers() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert!((sample_variance(&xs) - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(median(&xs), 2.5);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    }
}
