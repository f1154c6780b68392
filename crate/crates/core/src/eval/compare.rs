use super::sweep::{mean, num, sample_std};
use crate::{Error, Result};
use std::fmt::Write as _;

/// Metric of both formulations for one shared seed; `delta = manifold − euclidean`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedRow {
    pub seed: u64,
    pub euclidean: f64,
    pub manifold: f64,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairedSummary {
    pub metric: String,
    pub rows: Vec<PairedRow>,
    pub mean_delta: f64,
    /// Sample standard deviation of the deltas over `√n`; NaN for one seed.
    pub std_error: f64,
}

impl PairedSummary {
    /// Per-seed rows, then a `mean` row carrying the mean delta and its
    /// standard error.
    pub fn to_csv(&self) -> String {
        let mut out = format!("seed,euclidean_{m},manifold_{m},delta,std_error\n", m = self.metric);
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},", r.seed, num(r.euclidean), num(r.manifold), num(r.delta));
        }
        let e = mean(&self.rows.iter().map(|r| r.euclidean).collect::<Vec<_>>());
        let m = mean(&self.rows.iter().map(|r| r.manifold).collect::<Vec<_>>());
        let _ = writeln!(out, "mean,{},{},{},{}", num(e), num(m), num(self.mean_delta), num(self.std_error));
        out
    }
}

/// Pairs per-seed metrics of the two formulations. Both arms must cover the
/// same seeds in the same order.
pub fn compare_formulations(metric: &str, euclidean: &[(u64, f64)], manifold: &[(u64, f64)]) -> Result<PairedSummary> {
    if euclidean.is_empty() {
        return Err(Error::config("formulation comparison needs at least one seed"));
    }
    let es: Vec<u64> = euclidean.iter().map(|p| p.0).collect();
    let ms: Vec<u64> = manifold.iter().map(|p| p.0).collect();
    if es != ms {
        return Err(Error::config(format!("seed mismatch between arms: euclidean {es:?}, manifold {ms:?}")));
    }
    let rows: Vec<PairedRow> = euclidean
        .iter()
        .zip(manifold)
        .map(|(&(seed, e), &(_, m))| PairedRow {
            seed,
            euclidean: e,
            manifold: m,
            delta: m - e,
        })
        .collect();
    let deltas: Vec<f64> = rows.iter().map(|r| r.delta).collect();
    Ok(PairedSummary {
        metric: metric.to_string(),
        mean_delta: mean(&deltas),
        std_error: sample_std(&deltas) / (deltas.len() as f64).sqrt(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_arms_have_zero_delta() {
        let a = [(0, 0.3), (1, 0.5)];
        let s = compare_formulations("error", &a, &a).unwrap();
        assert_eq!(s.mean_delta, 0.0);
        assert_eq!(s.std_error, 0.0);
    }

    #[test]
    fn seed_mismatch_is_rejected() {
        let e = compare_formulations("error", &[(0, 1.0)], &[(1, 1.0)]).unwrap_err();
        assert!(matches!(e, Error::Config(_)));
    }

    #[test]
    fn csv_has_rows_and_mean() {
        let s = compare_formulations("error", &[(0, 1.0), (1, 2.0)], &[(0, 1.5), (1, 2.0)]).unwrap();
        let csv = s.to_csv();
        assert_eq!(csv.lines().next().unwrap(), "seed,euclidean_error,manifold_error,delta,std_error");
        assert_eq!(csv.lines().last().unwrap(), "mean,1.5,1.75,0.25,0.25");
    }
}
