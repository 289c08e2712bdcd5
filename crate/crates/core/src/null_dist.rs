//! Behaviour of the statistics under uniformity: closed-form moments, the
//! weighted chi-square limit, and Monte Carlo critical values.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::rng::{replicate_rng, uniform_unit, Purpose};
use crate::specfun::{dim_kp, gamma_kp, GegenbauerTable};
use crate::stein_statistic::{c_kp, CoefficientSequence, SampleSet};

/// `Σ_k w_k Z_k` with independent `Z_k ~ χ²_{dof_k}`.
#[derive(Debug, Clone)]
pub struct ChiSquareMixture {
    weights: Vec<f64>,
    dofs: Vec<u64>,
    gammas: Vec<Option<Gamma<f64>>>,
}

impl ChiSquareMixture {
    pub fn new(terms: Vec<(f64, u64)>) -> Result<Self> {
        let mut weights = Vec::with_capacity(terms.len());
        let mut dofs = Vec::with_capacity(terms.len());
        let mut gammas = Vec::with_capacity(terms.len());
        for (w, d) in terms {
            if !w.is_finite() || w < 0.0 {
                return domain(format!("mixture weight must be finite and non-negative, got {w}"));
            }
            if d == 0 {
                return domain("mixture degrees of freedom must be positive");
            }
            let g = if w > 0.0 {
                Some(Gamma::new(d as f64 / 2.0, 2.0).map_err(|e| Error::Numeric(e.to_string()))?)
            } else {
                None
            };
            weights.push(w);
            dofs.push(d);
            gammas.push(g);
        }
        Ok(Self { weights, dofs, gammas })
    }

    /// Null limit of a Sobolev statistic: weights `b_k γ_{k,p}`, dofs `d_{k,p}`.
    pub fn for_coefficients(coeffs: &CoefficientSequence) -> Result<Self> {
        let p = coeffs.p();
        let terms = coeffs
            .coeffs()
            .iter()
            .enumerate()
            .map(|(i, &b)| Ok((b * gamma_kp(i + 1, p), dim_kp(i + 1, p)?)))
            .collect::<Result<_>>()?;
        Self::new(terms)
    }

    /// Null limit of `T_n(λ)` truncated at `order`.
    pub fn stein(p: usize, lambda: f64, order: usize) -> Result<Self> {
        Self::for_coefficients(&CoefficientSequence::stein_with_order(p, lambda, order)?)
    }

    pub fn terms(&self) -> impl Iterator<Item = (f64, u64)> + '_ {
        self.weights.iter().copied().zip(self.dofs.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        self.terms().map(|(w, d)| w * d as f64).sum()
    }

    pub fn variance(&self) -> f64 {
        self.terms().map(|(w, d)| 2.0 * w * w * d as f64).sum()
    }

    /// One draw of the mixture.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.weights
            .iter()
            .zip(&self.gammas)
            .filter_map(|(w, g)| g.as_ref().map(|g| w * g.sample(rng)))
            .sum()
    }

    /// `m` draws on the per-replicate streams of `seed`.
    pub fn sample_many(&self, m: usize, seed: u64) -> Vec<f64> {
        (0..m)
            .into_par_iter()
            .map(|r| self.sample(&mut replicate_rng(seed, Purpose::Limit, r as u64)))
            .collect()
    }
}

/// Mean and variance of the `T_n(λ)` null limit.
pub fn limit_moments(p: usize, lambda: f64, order: usize) -> Result<(f64, f64)> {
    let mix = ChiSquareMixture::stein(p, lambda, order)?;
    Ok((mix.mean(), mix.variance()))
}

/// Exact null mean `Σ_k b_k C_k(1)` of a Sobolev statistic, valid for every `n`.
pub fn null_mean(coeffs: &CoefficientSequence) -> f64 {
    let ones = GegenbauerTable::new(coeffs.p(), coeffs.order()).values_at_one();
    coeffs.coeffs().iter().zip(&ones[1..]).map(|(b, c)| b * c).sum()
}

/// Exact null variance `Σ_k 2 ((n-1)/n) (b_k γ_k)^2 d_k` of a Sobolev statistic.
pub fn null_variance(coeffs: &CoefficientSequence, n: usize) -> Result<f64> {
    if n < 2 {
        return domain(format!("null variance needs n >= 2, got {n}"));
    }
    let p = coeffs.p();
    let factor = 2.0 * (n as f64 - 1.0) / n as f64;
    coeffs
        .coeffs()
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            let w = b * gamma_kp(i + 1, p);
            Ok(factor * w * w * dim_kp(i + 1, p)? as f64)
        })
        .sum()
}

/// Null mean of `T_n(λ)`; coincides with [`crate::stein_statistic::d_n`].
pub fn finite_n_mean_h0(p: usize, lambda: f64, order: usize) -> Result<f64> {
    Ok(null_mean(&CoefficientSequence::stein_with_order(p, lambda, order)?))
}

/// Null variance of `T_n(λ)` at sample size `n`.
pub fn finite_n_variance_h0(n: usize, p: usize, lambda: f64, order: usize) -> Result<f64> {
    if n < 2 {
        return domain(format!("null variance needs n >= 2, got {n}"));
    }
    let factor = 2.0 * (n as f64 - 1.0) / n as f64;
    (1..=order)
        .map(|k| {
            let w = c_kp(k, p, lambda)? * gamma_kp(k, p);
            Ok(factor * w * w * dim_kp(k, p)? as f64)
        })
        .sum()
}

/// `n` independent uniform points on `S^{p-1}`.
pub fn uniform_sample<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> SampleSet {
    let mut data = vec![0.0; n * p];
    for row in data.chunks_exact_mut(p) {
        uniform_unit(rng, row);
    }
    SampleSet::from_parts_unchecked(n, p, data)
}

/// The uniform sample used by null replicate `replicate` of a run seeded with `seed`.
pub fn null_replicate(n: usize, p: usize, seed: u64, replicate: usize) -> SampleSet {
    uniform_sample(n, p, &mut replicate_rng(seed, Purpose::Null, replicate as u64))
}

/// Evaluates `statistic` on `m` seeded uniform samples, in replicate order.
pub fn null_draws<F>(statistic: F, n: usize, p: usize, m: usize, seed: u64) -> Result<Vec<f64>>
where
    F: Fn(&SampleSet) -> Result<f64> + Sync,
{
    (0..m)
        .into_par_iter()
        .map(|r| {
            statistic(&null_replicate(n, p, seed, r)).map_err(|e| Error::Replicate {
                replicate: r,
                source: Box::new(e),
            })
        })
        .collect()
}

/// The `⌈(1-α) M⌉`-th order statistic of `draws`.
pub fn upper_quantile(draws: &[f64], alpha: f64) -> Result<f64> {
    if draws.is_empty() {
        return domain("no draws to take a quantile of");
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return domain(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    let m = draws.len();
    let rank = (((1.0 - alpha) * m as f64) - 1e-9).ceil().max(1.0) as usize;
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[rank.min(m) - 1])
}

/// A Monte Carlo critical value together with everything needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalValueTable {
    pub statistic: String,
    pub n: usize,
    pub p: usize,
    pub lambda: Option<f64>,
    pub alpha: f64,
    #[serde(rename = "M")]
    pub m: usize,
    pub seed: u64,
    pub critical_value: f64,
}

impl CriticalValueTable {
    pub fn write_csv<W: Write>(tables: &[CriticalValueTable], w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for t in tables {
            wtr.serialize(t).map_err(csv_err)?;
        }
        if tables.is_empty() {
            wtr.write_record(["statistic", "n", "p", "lambda", "alpha", "M", "seed", "critical_value"])
                .map_err(csv_err)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Vec<CriticalValueTable>> {
        csv::Reader::from_reader(r)
            .deserialize()
            .map(|row| row.map_err(csv_err))
            .collect()
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("{other:?}")),
    }
}

/// Critical value of `statistic` at level `alpha` from `m` null replicates.
pub fn mc_critical_value<F>(
    name: &str,
    lambda: Option<f64>,
    statistic: F,
    n: usize,
    p: usize,
    m: usize,
    alpha: f64,
    seed: u64,
) -> Result<CriticalValueTable>
where
    F: Fn(&SampleSet) -> Result<f64> + Sync,
{
    if m < 100 {
        return domain(format!("at least 100 replicates are required, got {m}"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return domain(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    let draws = null_draws(statistic, n, p, m, seed)?;
    Ok(CriticalValueTable {
        statistic: name.to_string(),
        n,
        p,
        lambda,
        alpha,
        m,
        seed,
        critical_value: upper_quantile(&draws, alpha)?,
    })
}

/// Add-one Monte Carlo p-value `(1 + #{draws ≥ observed}) / (M + 1)`.
pub fn p_value_mc(observed: f64, null_draws: &[f64]) -> Result<f64> {
    if null_draws.is_empty() {
        return domain("p-value needs at least one null draw");
    }
    let exceed = null_draws.iter().filter(|&&d| d >= observed).count();
    Ok((1 + exceed) as f64 / (null_draws.len() + 1) as f64)
}
