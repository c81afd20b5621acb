use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;

/// Least-squares fit of log g = intercept + slope · log t.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    /// Points used.
    pub points: usize,
    /// Points in the window dropped for a non-positive value.
    pub excluded: usize,
}

/// Fits the points `(t, g)` with `lo ≤ t ≤ hi`. Non-positive `g` (or `t`)
/// cannot be logged and is excluded; at least 10 points must remain.
pub fn fit_rate(points: &[(f64, f64)], lo: f64, hi: f64) -> Result<RateFit, HarnessError> {
    let in_window = points.iter().filter(|(t, _)| *t >= lo && *t <= hi);
    let mut excluded = 0;
    let mut xy = Vec::new();
    for &(t, g) in in_window {
        if t > 0.0 && g > 0.0 && g.is_finite() {
            xy.push((t.ln(), g.ln()));
        } else {
            excluded += 1;
        }
    }
    let n = xy.len();
    if n < 10 {
        return Err(HarnessError::TooFewPoints(n));
    }
    let nf = n as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(HarnessError::Csv("all points share one t".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xy.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let stderr = (ssr / (nf - 2.0) / sxx).sqrt();
    Ok(RateFit { slope, stderr, intercept, points: n, excluded })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileFit {
    pub path: PathBuf,
    pub fit: RateFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRateReport {
    pub column: String,
    pub window: (f64, f64),
    pub files: Vec<FileFit>,
    /// Fit of the across-file mean at the `t` values present in every file.
    pub mean_curve: RateFit,
}

fn read_column(path: &Path, time: &str, column: &str) -> Result<Vec<(f64, f64)>, HarnessError> {
    let csv_err = |e: csv::Error| HarnessError::Csv(format!("{}: {e}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| HarnessError::Csv(format!("{}: no column `{name}`", path.display())))
    };
    let (ti, ci) = (find(time)?, find(column)?);
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let parse = |k: usize| {
            record[k]
                .parse::<f64>()
                .map_err(|_| HarnessError::Csv(format!("{}: bad number `{}`", path.display(), &record[k])))
        };
        out.push((parse(ti)?, parse(ci)?));
    }
    Ok(out)
}

/// Fits `column` against the `t` column of each trajectory CSV and of their
/// pointwise mean.
pub fn fit_rate_csv(paths: &[PathBuf], column: &str, lo: f64, hi: f64) -> Result<CsvRateReport, HarnessError> {
    if paths.is_empty() {
        return Err(HarnessError::Csv("no trajectory files given".into()));
    }
    let series = paths
        .iter()
        .map(|p| read_column(p, "t", column))
        .collect::<Result<Vec<_>, _>>()?;
    let files = paths
        .iter()
        .zip(&series)
        .map(|(p, s)| Ok(FileFit { path: p.clone(), fit: fit_rate(s, lo, hi)? }))
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let lookup: Vec<HashMap<u64, f64>> = series
        .iter()
        .map(|s| s.iter().map(|&(t, g)| (t.to_bits(), g)).collect())
        .collect();
    let mut mean = Vec::new();
    for &(t, _) in &series[0] {
        let values: Option<Vec<f64>> = lookup.iter().map(|m| m.get(&t.to_bits()).copied()).collect();
        if let Some(v) = values {
            mean.push((t, v.iter().sum::<f64>() / v.len() as f64));
        }
    }
    Ok(CsvRateReport {
        column: column.into(),
        window: (lo, hi),
        files,
        mean_curve: fit_rate(&mean, lo, hi)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_laws() {
        let a: Vec<(f64, f64)> = (1..=1000).map(|t| (t as f64, 3.0 / t as f64)).collect();
        let fit = fit_rate(&a, 1.0, 1000.0).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-6);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-9);
        let b: Vec<(f64, f64)> = (1..=1000).map(|t| (t as f64, (t as f64).powf(-0.2))).collect();
        assert!((fit_rate(&b, 1.0, 1000.0).unwrap().slope + 0.2).abs() < 1e-6);
    }

    #[test]
    fn nonpositive_values_are_counted() {
        let mut a: Vec<(f64, f64)> = (1..=20).map(|t| (t as f64, 1.0 / t as f64)).collect();
        a[3].1 = 0.0;
        a[4].1 = -1.0;
        let fit = fit_rate(&a, 1.0, 20.0).unwrap();
        assert_eq!((fit.points, fit.excluded), (18, 2));
    }

    #[test]
    fn window_needs_ten_points() {
        let a: Vec<(f64, f64)> = (1..=20).map(|t| (t as f64, 1.0)).collect();
        assert!(matches!(fit_rate(&a, 1.0, 9.0), Err(HarnessError::TooFewPoints(9))));
    }
}
