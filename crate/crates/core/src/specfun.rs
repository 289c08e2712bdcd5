//! Special functions and combinatorial constants shared by every other module.
//!
//! Everything here is a pure function of its arguments. Large magnitudes
//! (Bessel values at λ ≳ 100, the Stein coefficients built from their
//! squares) are carried in log space and only exponentiated at the end.

use crate::error::{domain, Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Largest exponent we are willing to pass to `exp` without overflowing.
const MAX_LN: f64 = 709.0;

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !x.is_finite() || x <= 0.0 {
        return domain(format!("ln_gamma requires a finite positive argument, got {x}"));
    }
    Ok(ln_gamma_unchecked(x))
}

pub(crate) fn ln_gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        // Γ(x) = Γ(x + 1) / x keeps the Lanczos sum in its accurate range.
        return ln_gamma_unchecked(x + 1.0) - x.ln();
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEFFS[0];
    for (i, &c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Log of the modified Bessel function of the first kind, `ln I_ν(x)`.
///
/// Ascending power series `Σ (x/2)^{ν+2m} / (m! Γ(ν+m+1))`, with the
/// `(x/2)^ν / Γ(ν+1)` prefactor kept in log space and the running sum
/// rescaled whenever it grows large. Returns `-inf` for `x = 0, ν > 0`.
pub fn ln_bessel_i(nu: f64, x: f64) -> Result<f64> {
    if !nu.is_finite() || nu < 0.0 {
        return domain(format!("Bessel order must be finite and non-negative, got {nu}"));
    }
    if !x.is_finite() || x < 0.0 {
        return domain(format!("Bessel argument must be finite and non-negative, got {x}"));
    }
    if x == 0.0 {
        return Ok(if nu == 0.0 { 0.0 } else { f64::NEG_INFINITY });
    }
    let ln_prefactor = nu * (0.5 * x).ln() - ln_gamma_unchecked(nu + 1.0);
    let q = 0.25 * x * x;
    let mut term = 1.0_f64;
    let mut sum = 1.0_f64;
    let mut ln_scale = 0.0_f64;
    let mut m = 0.0_f64;
    loop {
        let ratio = q / ((m + 1.0) * (nu + m + 1.0));
        term *= ratio;
        sum += term;
        m += 1.0;
        if ratio < 1.0 && term < 1e-16 * sum {
            break;
        }
        if sum > 1e280 {
            sum *= 1e-280;
            term *= 1e-280;
            ln_scale += 280.0 * std::f64::consts::LN_10;
        }
        if m > 1.0e6 {
            return Err(Error::Numeric(format!(
                "Bessel series for nu={nu}, x={x} did not converge"
            )));
        }
    }
    Ok(ln_prefactor + ln_scale + sum.ln())
}

/// Modified Bessel function of the first kind `I_ν(x)`.
pub fn bessel_i(nu: f64, x: f64) -> Result<f64> {
    let ln = ln_bessel_i(nu, x)?;
    checked_exp(ln, || format!("I_{nu}({x})"))
}

fn checked_exp(ln: f64, what: impl FnOnce() -> String) -> Result<f64> {
    if ln > MAX_LN {
        return Err(Error::Range(format!(
            "{} overflows double precision (log magnitude {ln:.3})",
            what()
        )));
    }
    Ok(ln.exp())
}

/// The Gegenbauer parameter `(p - 2) / 2` attached to dimension `p`.
#[inline]
pub fn gegenbauer_alpha(p: usize) -> f64 {
    (p as f64 - 2.0) / 2.0
}

fn check_dim(p: usize) -> Result<()> {
    if p < 2 {
        return domain(format!("dimension must be at least 2, got {p}"));
    }
    Ok(())
}

/// `C_k^{(p-2)/2}(u)`; for `p = 2` the Chebyshev polynomial `cos(k arccos u)`.
pub fn gegenbauer(k: usize, p: usize, u: f64) -> Result<f64> {
    check_dim(p)?;
    if !(-1.0..=1.0).contains(&u) {
        return domain(format!("Gegenbauer argument must lie in [-1, 1], got {u}"));
    }
    if p == 2 {
        return Ok((k as f64 * u.acos()).cos());
    }
    let mut buf = vec![0.0; k + 1];
    GegenbauerTable::new(p, k).fill(u, &mut buf);
    Ok(buf[k])
}

/// Precomputed three-term recurrence for `C_0..=C_K` at a fixed dimension.
///
/// `C_k = a_k u C_{k-1} - b_k C_{k-2}` with `a_k = 2(k+α-1)/k` and
/// `b_k = (k+2α-2)/k`; for `p = 2` the Chebyshev recurrence `a_k = 2, b_k = 1`.
#[derive(Debug, Clone)]
pub struct GegenbauerTable {
    p: usize,
    c1: f64,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl GegenbauerTable {
    pub fn new(p: usize, max_degree: usize) -> Self {
        let alpha = gegenbauer_alpha(p);
        let mut a = vec![0.0; max_degree + 1];
        let mut b = vec![0.0; max_degree + 1];
        for k in 2..=max_degree {
            let kf = k as f64;
            if p == 2 {
                a[k] = 2.0;
                b[k] = 1.0;
            } else {
                a[k] = 2.0 * (kf + alpha - 1.0) / kf;
                b[k] = (kf + 2.0 * alpha - 2.0) / kf;
            }
        }
        let c1 = if p == 2 { 1.0 } else { 2.0 * alpha };
        Self { p, c1, a, b }
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn max_degree(&self) -> usize {
        self.a.len() - 1
    }

    /// Writes `C_0(u), .., C_{out.len()-1}(u)` into `out`.
    #[inline]
    pub fn fill(&self, u: f64, out: &mut [f64]) {
        debug_assert!(out.len() <= self.a.len());
        if out.is_empty() {
            return;
        }
        out[0] = 1.0;
        if out.len() == 1 {
            return;
        }
        out[1] = self.c1 * u;
        for k in 2..out.len() {
            out[k] = self.a[k] * u * out[k - 1] - self.b[k] * out[k - 2];
        }
    }

    /// Adds `weight * C_k(u)` to `acc[k]` for `k = 1..acc.len()`, where
    /// `acc[0]` corresponds to degree 1.
    #[inline]
    pub fn accumulate(&self, u: f64, weight: f64, acc: &mut [f64]) {
        let kmax = acc.len();
        if kmax == 0 {
            return;
        }
        let mut prev2 = 1.0;
        let mut prev1 = self.c1 * u;
        acc[0] += weight * prev1;
        for k in 2..=kmax {
            let cur = self.a[k] * u * prev1 - self.b[k] * prev2;
            acc[k - 1] += weight * cur;
            prev2 = prev1;
            prev1 = cur;
        }
    }

    /// `C_k(1)` for `k = 0..=max_degree`.
    pub fn values_at_one(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.a.len()];
        self.fill(1.0, &mut out);
        out
    }
}

/// Funk–Hecke constant `γ_{k,p}`.
pub fn gamma_kp(k: usize, p: usize) -> f64 {
    if p == 2 {
        if k == 0 {
            1.0
        } else {
            0.5
        }
    } else {
        let pf = p as f64;
        (pf - 2.0) / (2.0 * k as f64 + pf - 2.0)
    }
}

fn binomial(n: i64, r: i64) -> Option<u64> {
    if r < 0 || n < r {
        return Some(0);
    }
    let r = r.min(n - r) as u128;
    let n = n as u128;
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    u64::try_from(acc).ok()
}

/// Dimension of the degree-`k` space of spherical harmonics on `S^{p-1}`.
pub fn dim_kp(k: usize, p: usize) -> Result<u64> {
    check_dim(p)?;
    let (k, p) = (k as i64, p as i64);
    let overflow = || Error::Range(format!("d_{{{k},{p}}} exceeds 64 bits"));
    let first = binomial(p + k - 3, p - 2).ok_or_else(overflow)?;
    let second = binomial(p + k - 2, p - 2).ok_or_else(overflow)?;
    first.checked_add(second).ok_or_else(overflow)
}

/// Surface area `ω_m` of the unit sphere `S^m ⊂ R^{m+1}`.
pub fn surface_measure(m: usize) -> f64 {
    let h = (m as f64 + 1.0) / 2.0;
    (std::f64::consts::LN_2 + h * std::f64::consts::PI.ln() - ln_gamma_unchecked(h)).exp()
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !lambda.is_finite() || lambda < 0.0 {
        return domain(format!("tuning parameter must be finite and positive, got {lambda}"));
    }
    Ok(())
}

/// `ln m_{k,p}(λ)`; `-inf` when the coefficient vanishes (`λ = 0`, `k ≥ 1`).
pub fn ln_m_kp(k: usize, p: usize, lambda: f64) -> Result<f64> {
    check_dim(p)?;
    check_lambda(lambda)?;
    if lambda == 0.0 {
        return Ok(if k == 0 { 0.0 } else { f64::NEG_INFINITY });
    }
    if p == 2 {
        let factor = if k == 0 { 0.0 } else { std::f64::consts::LN_2 };
        return Ok(factor + ln_bessel_i(k as f64, lambda)?);
    }
    let nu = gegenbauer_alpha(p);
    Ok(nu * (2.0 / lambda).ln()
        + ln_gamma_unchecked(nu)
        + (k as f64 + nu).ln()
        + ln_bessel_i(nu + k as f64, lambda)?)
}

/// Gegenbauer coefficient `m_{k,p}(λ)` of `u ↦ e^{λu}`.
pub fn m_kp(k: usize, p: usize, lambda: f64) -> Result<f64> {
    let ln = ln_m_kp(k, p, lambda)?;
    checked_exp(ln, || format!("m_{{{k},{p}}}({lambda})"))
}

/// Linearization coefficient `L^{(p)}_{k1,k2}(ℓ)` in
/// `C_{k1} C_{k2} = Σ_ℓ L(ℓ) C_{k1+k2-2ℓ}`.
pub fn linearization_coeff(k1: usize, k2: usize, ell: usize, p: usize) -> Result<f64> {
    check_dim(p)?;
    let kmin = k1.min(k2);
    if ell > kmin {
        return domain(format!("linearization index {ell} exceeds min({k1}, {k2})"));
    }
    if p == 2 {
        let mut v = 0.0;
        if ell == 0 {
            v += 0.5;
        }
        if ell == kmin {
            v += 0.5;
        }
        return Ok(v);
    }
    let a = gegenbauer_alpha(p);
    let lg = ln_gamma_unchecked;
    let lfact = |n: usize| lg(n as f64 + 1.0);
    let lpoch = |x: f64, n: usize| lg(x + n as f64) - lg(x);
    let s = k1 + k2;
    let (sf, lf) = (s as f64, ell as f64);
    let ln = ((sf + a - 2.0 * lf) / (sf + a - lf)).ln() + lfact(s - 2 * ell)
        - lfact(ell)
        - lfact(k1 - ell)
        - lfact(k2 - ell)
        + lpoch(a, ell)
        + lpoch(a, k1 - ell)
        + lpoch(a, k2 - ell)
        + lpoch(2.0 * a, s - ell)
        - lpoch(a, s - ell)
        - lpoch(2.0 * a, s - 2 * ell);
    Ok(ln.exp())
}
