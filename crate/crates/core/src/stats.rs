//! Distances, goodness of fit and scaling fits. Floating point lives here
//! only; everything in [`crate::oracle`] is exact.

use std::collections::BTreeMap;

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Counts of observed values.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EmpiricalDist {
    pub counts: BTreeMap<u64, u64>,
    pub total: u64,
}

impl EmpiricalDist {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: u64) {
        *self.counts.entry(value).or_default() += 1;
        self.total += 1;
    }

    pub fn merge(&mut self, other: &EmpiricalDist) {
        for (v, c) in &other.counts {
            *self.counts.entry(*v).or_default() += c;
        }
        self.total += other.total;
    }

    pub fn probability(&self, value: u64) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.counts.get(&value).copied().unwrap_or(0) as f64 / self.total as f64
    }

    pub fn mean(&self) -> f64 {
        if self.total == 0 {
            return f64::NAN;
        }
        self.counts.iter().map(|(v, c)| *v as f64 * *c as f64).sum::<f64>() / self.total as f64
    }

    pub fn to_pmf(&self) -> BTreeMap<u64, f64> {
        self.counts.keys().map(|&v| (v, self.probability(v))).collect()
    }
}

impl FromIterator<u64> for EmpiricalDist {
    fn from_iter<I: IntoIterator<Item = u64>>(iter: I) -> Self {
        let mut d = EmpiricalDist::new();
        for v in iter {
            d.add(v);
        }
        d
    }
}

fn tvd_maps(a: &BTreeMap<u64, f64>, b: &BTreeMap<u64, f64>) -> f64 {
    let mut sum = 0.0;
    for (k, pa) in a {
        sum += (pa - b.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, pb) in b {
        if !a.contains_key(k) {
            sum += pb.abs();
        }
    }
    (0.5 * sum).clamp(0.0, 1.0)
}

/// Total variation distance between an empirical distribution and a
/// reference pmf, over the union of supports.
pub fn tvd(emp: &EmpiricalDist, reference: &BTreeMap<u64, f64>) -> f64 {
    tvd_maps(&emp.to_pmf(), reference)
}

pub fn tvd_empirical(a: &EmpiricalDist, b: &EmpiricalDist) -> f64 {
    tvd_maps(&a.to_pmf(), &b.to_pmf())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson's test of `counts` against equal expected cell counts.
pub fn chi_square_uniform(counts: &[u64]) -> Result<ChiSquare> {
    let cells = counts.len();
    let total: u64 = counts.iter().sum();
    if cells < 2 || total < 10 * cells as u64 {
        return Err(Error::InsufficientSamples(format!(
            "{total} samples over {cells} cells; need at least 2 cells and 10 samples per cell"
        )));
    }
    let expected = total as f64 / cells as f64;
    let statistic = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum();
    let dof = cells - 1;
    let dist = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
    Ok(ChiSquare {
        statistic,
        dof,
        p_value: dist.sf(statistic),
    })
}

/// Least-squares slope of `ln(mean)` against `ln(n)`.
pub fn fit_exponent(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::InvalidParams(format!(
            "an exponent fit needs at least 3 sizes, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(n, m)| !(n > 0.0 && m > 0.0)) {
        return Err(Error::InvalidParams("exponent fit needs positive sizes and means".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParams("exponent fit needs distinct sizes".into()));
    }
    Ok(sxy / sxx)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanCi {
    pub mean: f64,
    /// 1.96 standard errors.
    pub half_width: f64,
    /// Set for a single sample, where the width is reported as 0.
    pub degenerate: bool,
}

pub fn mean_ci(samples: &[f64]) -> Result<MeanCi> {
    if samples.is_empty() {
        return Err(Error::InsufficientSamples("no samples".into()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() == 1 {
        return Ok(MeanCi {
            mean,
            half_width: 0.0,
            degenerate: true,
        });
    }
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    Ok(MeanCi {
        mean,
        half_width: 1.96 * var.sqrt() / n.sqrt(),
        degenerate: false,
    })
}

/// True when strictly more than half of the votes pass.
pub fn majority(votes: &[bool]) -> bool {
    2 * votes.iter().filter(|&&v| v).count() > votes.len()
}

/// Median of a non-empty slice (mean of the middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}
