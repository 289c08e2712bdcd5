//! Large-sample behaviour of `T_n(λ)` under a fixed alternative: the drift
//! function `z`, the limit `τ` of `T_n / n`, the fluctuation variance `σ²`,
//! the covariance kernels `K` and `K'`, and the resulting power approximation.

use rayon::prelude::*;
use statrs::function::erf::erfc;

use crate::alternatives::AlternativeModel;
use crate::error::{domain, Error, Result};
use crate::rng::{replicate_rng, Purpose};
use crate::specfun::{gamma_kp, linearization_coeff, m_kp, GegenbauerTable};
use crate::stein_statistic::{c_kp, dot, norm, truncation_order, DEFAULT_TOL};

/// Gegenbauer coefficients `β_0..=β_K` of a zonal density about the axis `μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlternativeHarmonics {
    p: usize,
    betas: Vec<f64>,
    axis: Vec<f64>,
}

impl AlternativeHarmonics {
    pub fn new(p: usize, betas: Vec<f64>, axis: Vec<f64>) -> Result<Self> {
        if axis.len() != p {
            return domain(format!("axis has length {} but p = {p}", axis.len()));
        }
        if (norm(&axis) - 1.0).abs() > 1e-9 {
            return domain("axis must be a unit vector");
        }
        if betas.is_empty() || betas.iter().any(|b| !b.is_finite()) {
            return domain("coefficients must be finite and non-empty");
        }
        Ok(Self { p, betas, axis })
    }

    /// Coefficients of a rotationally symmetric model up to degree `order`.
    pub fn from_model(model: &AlternativeModel, order: usize) -> Result<Self> {
        let betas = model
            .betas(order)?
            .ok_or_else(|| Error::Domain(format!("{} is not rotationally symmetric", model.spec())))?;
        let axis = match model.rotationally_symmetric() {
            Some((mu, _)) => mu.to_vec(),
            None => {
                let mut e = vec![0.0; model.p()];
                e[0] = 1.0;
                e
            }
        };
        Self::new(model.p(), betas, axis)
    }

    /// Coefficients up to twice the truncation order at `λ`, enough for `σ²`.
    pub fn for_lambda(model: &AlternativeModel, lambda: f64) -> Result<Self> {
        Self::from_model(model, 2 * truncation_order(model.p(), lambda, DEFAULT_TOL)?)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn axis(&self) -> &[f64] {
        &self.axis
    }

    pub fn order(&self) -> usize {
        self.betas.len() - 1
    }
}

fn check_unit(s: &[f64], p: usize) -> Result<()> {
    if s.len() != p || (norm(s) - 1.0).abs() > 1e-9 {
        return domain("evaluation point must be a unit vector of the model dimension");
    }
    Ok(())
}

/// `Σ_{k≥1} β_k m_{k,p}(λ) γ_{k,p} (-k)(k+p-2) C_k(μᵀs)`.
pub fn z_value(h: &AlternativeHarmonics, lambda: f64, s: &[f64]) -> Result<f64> {
    check_unit(s, h.p)?;
    ZField::new(h, lambda, h.order())?.at_dot(dot(&h.axis, s))
}

/// Coefficients of `z` as a zonal function, reusable over many points.
#[derive(Debug, Clone)]
pub struct ZField {
    table: GegenbauerTable,
    coeffs: Vec<f64>,
}

impl ZField {
    pub fn new(h: &AlternativeHarmonics, lambda: f64, order: usize) -> Result<Self> {
        let order = order.min(h.order());
        let p = h.p;
        let coeffs = (0..=order)
            .map(|k| {
                if k == 0 {
                    return Ok(0.0);
                }
                let e = -((k * (k + p - 2)) as f64);
                Ok(h.betas[k] * m_kp(k, p, lambda)? * gamma_kp(k, p) * e)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { table: GegenbauerTable::new(p, order), coeffs })
    }

    pub fn at_dot(&self, u: f64) -> Result<f64> {
        let mut buf = vec![0.0; self.coeffs.len()];
        self.table.fill(u.clamp(-1.0, 1.0), &mut buf);
        Ok(self.coeffs.iter().zip(&buf).map(|(a, b)| a * b).sum())
    }
}

/// `τ = Σ_{k≥1} (β_k γ_k)² c_k(λ) C_k(1)`, the almost-sure limit of `T_n/n`.
pub fn tau_rotsym(h: &AlternativeHarmonics, lambda: f64) -> Result<f64> {
    let order = h.order().min(truncation_order(h.p, lambda, DEFAULT_TOL)?);
    let ones = GegenbauerTable::new(h.p, order).values_at_one();
    (1..=order)
        .map(|k| Ok((h.betas[k] * gamma_kp(k, h.p)).powi(2) * c_kp(k, h.p, lambda)? * ones[k]))
        .sum()
}

/// `Ψ(t, x) = Δ e^{λ tᵀx}` from its Gegenbauer series truncated at `order`.
pub fn psi(p: usize, lambda: f64, t: &[f64], x: &[f64], order: usize) -> Result<f64> {
    check_unit(t, p)?;
    check_unit(x, p)?;
    let u = dot(t, x).clamp(-1.0, 1.0);
    let mut buf = vec![0.0; order + 1];
    GegenbauerTable::new(p, order).fill(u, &mut buf);
    (1..=order)
        .map(|k| Ok(m_kp(k, p, lambda)? * -((k * (k + p - 2)) as f64) * buf[k]))
        .sum()
}

/// Closed form `(λ²(1-u²) - λ(p-1)u) e^{λu}` of `Ψ` at `u = tᵀx`.
#[inline]
pub fn psi_closed(p: usize, lambda: f64, u: f64) -> f64 {
    (lambda * lambda * (1.0 - u * u) - lambda * (p as f64 - 1.0) * u) * (lambda * u).exp()
}

/// Null covariance kernel `K(s,t) = Σ_k c_k(λ) C_k(sᵀt)` at `dot = sᵀt`.
pub fn kernel_k(p: usize, lambda: f64, dot: f64, order: usize) -> Result<f64> {
    if !(-1.0..=1.0).contains(&dot) {
        return domain(format!("inner product must lie in [-1, 1], got {dot}"));
    }
    let mut buf = vec![0.0; order + 1];
    GegenbauerTable::new(p, order).fill(dot, &mut buf);
    (1..=order).map(|k| Ok(c_kp(k, p, lambda)? * buf[k])).sum()
}

/// Draws `m` points from `model` on the stream of `seed`.
pub(crate) fn model_draws(model: &AlternativeModel, m: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..m)
        .into_par_iter()
        .map(|r| {
            let mut out = vec![0.0; model.p()];
            model.draw(&mut replicate_rng(seed, Purpose::Field, r as u64), &mut out);
            out
        })
        .collect()
}

/// Monte Carlo estimate of `K'(s, t_i)` for a batch of points `t_i`, all
/// sharing the same `m` model draws.
///
/// The centring uses the closed-form `z` when harmonics are given and the
/// Monte Carlo means of `Ψ` otherwise.
pub fn kernel_kprime_mc_batch(
    model: &AlternativeModel,
    harmonics: Option<&AlternativeHarmonics>,
    lambda: f64,
    s: &[f64],
    ts: &[Vec<f64>],
    m: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let p = model.p();
    check_unit(s, p)?;
    for t in ts {
        check_unit(t, p)?;
    }
    if m < 2 {
        return domain("Monte Carlo kernel needs at least two draws");
    }
    let draws = model_draws(model, m, seed);
    let psi_s: Vec<f64> = draws.iter().map(|x| psi_closed(p, lambda, dot(s, x))).collect();
    let z_s = match harmonics {
        Some(h) => Some((ZField::new(h, lambda, h.order())?, h.axis.clone())),
        None => None,
    };
    let mean_s = psi_s.iter().sum::<f64>() / m as f64;
    let zs = match &z_s {
        Some((f, axis)) => f.at_dot(dot(axis, s))?,
        None => mean_s,
    };
    ts.par_iter()
        .map(|t| {
            let (mut cross, mut mean_t) = (0.0, 0.0);
            for (x, ps) in draws.iter().zip(&psi_s) {
                let pt = psi_closed(p, lambda, dot(t, x));
                cross += ps * pt;
                mean_t += pt;
            }
            let zt = match &z_s {
                Some((f, axis)) => f.at_dot(dot(axis, t))?,
                None => mean_t / m as f64,
            };
            Ok(cross / m as f64 - zs * zt)
        })
        .collect()
}

/// Monte Carlo estimate of `K'(s, t)` from `m` draws of `model`.
pub fn kernel_kprime_mc(
    model: &AlternativeModel,
    harmonics: Option<&AlternativeHarmonics>,
    lambda: f64,
    s: &[f64],
    t: &[f64],
    m: usize,
    seed: u64,
) -> Result<f64> {
    Ok(kernel_kprime_mc_batch(model, harmonics, lambda, s, &[t.to_vec()], m, seed)?[0])
}

/// `ξ_{k1,k2}(s,s) = E[C_{k1}(sᵀX) C_{k2}(sᵀX)]`, through the linearization
/// `C_{k1} C_{k2} = Σ_ℓ L(ℓ) C_{k1+k2-2ℓ}` and `E[C_m(sᵀX)] = β_m γ_m C_m(μᵀs)`.
pub fn xi_diag(h: &AlternativeHarmonics, k1: usize, k2: usize, s: &[f64]) -> Result<f64> {
    check_unit(s, h.p)?;
    if k1 + k2 > h.order() {
        return domain(format!(
            "degrees {k1} + {k2} exceed the available harmonic order {}",
            h.order()
        ));
    }
    let u = dot(&h.axis, s).clamp(-1.0, 1.0);
    let mut buf = vec![0.0; k1 + k2 + 1];
    GegenbauerTable::new(h.p, k1 + k2).fill(u, &mut buf);
    (0..=k1.min(k2))
        .map(|ell| {
            let m = k1 + k2 - 2 * ell;
            Ok(linearization_coeff(k1, k2, ell, h.p)? * h.betas[m] * gamma_kp(m, h.p) * buf[m])
        })
        .sum()
}

/// `σ² = 4 Var(Σ_k a_k C_k(μᵀX))` with `a_k = γ_k c_k(λ) β_k`, evaluated
/// through `ξ_{k1,k2}(μ,μ)`.
pub fn sigma2_rotsym(h: &AlternativeHarmonics, lambda: f64) -> Result<f64> {
    let order = truncation_order(h.p, lambda, DEFAULT_TOL)?;
    if 2 * order > h.order() {
        return domain(format!(
            "σ² at λ={lambda} needs harmonics up to degree {}, have {}",
            2 * order,
            h.order()
        ));
    }
    let p = h.p;
    let a = sigma_weights(h, lambda, order)?;
    let ones = GegenbauerTable::new(p, order).values_at_one();
    let mean: f64 = (1..=order).map(|k| a[k] * h.betas[k] * gamma_kp(k, p) * ones[k]).sum();
    let axis = h.axis.clone();
    let mut second = 0.0;
    for k1 in 1..=order {
        for k2 in 1..=order {
            second += a[k1] * a[k2] * xi_diag(h, k1, k2, &axis)?;
        }
    }
    let sigma2 = 4.0 * (second - mean * mean);
    if sigma2 < -1e-8 * (1.0 + 4.0 * second.abs()) {
        return Err(Error::Numeric(format!(
            "σ² evaluated to {sigma2}; the truncation is too aggressive"
        )));
    }
    Ok(sigma2.max(0.0))
}

/// `a_k = γ_k c_k(λ) β_k` for `k = 0..=order` (`a_0 = 0`).
pub fn sigma_weights(h: &AlternativeHarmonics, lambda: f64, order: usize) -> Result<Vec<f64>> {
    (0..=order.min(h.order()))
        .map(|k| {
            if k == 0 {
                Ok(0.0)
            } else {
                Ok(gamma_kp(k, h.p) * c_kp(k, h.p, lambda)? * h.betas[k])
            }
        })
        .collect()
}

/// Upper tail `1 - Φ(x)` of the standard normal.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// `1 - Φ(√n (c_n/n - τ) / σ)`, the asymptotic power of the level test with critical value `c_n`.
pub fn power_approx(c_n: f64, n: usize, tau: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return domain(format!("sigma must be positive, got {sigma}"));
    }
    let nf = n as f64;
    Ok(normal_sf(nf.sqrt() / sigma * (c_n / nf - tau)))
}
