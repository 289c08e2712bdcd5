//! Samples on the sphere, Gegenbauer weight sequences and every statistic
//! the power studies compare: the Stein statistic `T_n(λ)`, its dKSD and
//! softmax relatives, and the Rayleigh and Bingham baselines.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::specfun::{
    gegenbauer_alpha, ln_bessel_i, ln_gamma_unchecked, m_kp, GegenbauerTable,
};

/// Default relative tolerance for series truncation.
pub const DEFAULT_TOL: f64 = 1e-12;
/// Smallest truncation order ever used.
pub const MIN_ORDER: usize = 8;
/// Truncation orders beyond this are treated as a pathological `λ`.
pub const MAX_ORDER: usize = 400;

const UNIT_TOL: f64 = 1e-12;
/// Tolerance on row norms accepted when reading data files.
pub const INPUT_UNIT_TOL: f64 = 1e-6;

/// `n` unit vectors in `R^p`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    n: usize,
    p: usize,
    data: Vec<f64>,
}

impl SampleSet {
    /// Wraps row-major data, rejecting rows that are not unit length within `1e-12`.
    pub fn new(p: usize, data: Vec<f64>) -> Result<Self> {
        Self::check_shape(p, &data)?;
        let bad: Vec<usize> = data
            .chunks_exact(p)
            .enumerate()
            .filter(|(_, r)| (norm(r) - 1.0).abs() > UNIT_TOL)
            .map(|(i, _)| i)
            .collect();
        if !bad.is_empty() {
            return domain(format!("rows {bad:?} are not unit vectors"));
        }
        Ok(Self { n: data.len() / p, p, data })
    }

    /// Projects every row onto the sphere; zero rows are rejected.
    pub fn normalized(p: usize, mut data: Vec<f64>) -> Result<Self> {
        Self::check_shape(p, &data)?;
        for (i, row) in data.chunks_exact_mut(p).enumerate() {
            let r = norm(row);
            if !(r > 0.0) || !r.is_finite() {
                return domain(format!("row {i} cannot be normalized"));
            }
            row.iter_mut().for_each(|v| *v /= r);
        }
        Ok(Self { n: data.len() / p, p, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return domain("rows have differing lengths");
        }
        Self::new(p, rows.concat())
    }

    fn check_shape(p: usize, data: &[f64]) -> Result<()> {
        if p < 2 {
            return domain(format!("dimension must be at least 2, got {p}"));
        }
        if data.is_empty() || data.len() % p != 0 {
            return domain(format!("data of length {} is not a non-empty n x {p} array", data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return domain("sample contains non-finite values");
        }
        Ok(())
    }

    pub(crate) fn from_parts_unchecked(n: usize, p: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), n * p);
        Self { n, p, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.p)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Sample mean vector.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.p];
        for r in self.rows() {
            m.iter_mut().zip(r).for_each(|(a, b)| *a += b);
        }
        m.iter_mut().for_each(|a| *a /= self.n as f64);
        m
    }

    /// Applies `x ↦ Qx` to every row for a row-major `p × p` matrix `Q`.
    pub fn transformed(&self, q: &[f64]) -> Result<Self> {
        if q.len() != self.p * self.p {
            return domain("transformation matrix has the wrong shape");
        }
        let mut data = vec![0.0; self.data.len()];
        for (src, dst) in self.rows().zip(data.chunks_exact_mut(self.p)) {
            mat_vec(q, src, dst);
        }
        Self::normalized(self.p, data)
    }

    /// Reads one observation per CSV row. A first row that is not numeric is
    /// taken as a header; `#` starts a comment line. Rows whose norm is off
    /// by more than `1e-6` are refused unless `normalize` is set; accepted
    /// rows are rescaled to exact unit length.
    pub fn read_csv<R: std::io::Read>(r: R, normalize: bool) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(r);
        let mut data = Vec::new();
        let mut p = 0;
        let mut lines = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(crate::null_dist::csv_err)?;
            let line = rec.position().map_or(i as u64 + 1, |pos| pos.line());
            let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
            let row = match parsed {
                Ok(row) => row,
                Err(_) if i == 0 => continue,
                Err(e) => return Err(Error::Parse(format!("line {line}: {e}"))),
            };
            if p == 0 {
                p = row.len();
            } else if row.len() != p {
                return Err(Error::Parse(format!("line {line}: expected {p} columns, found {}", row.len())));
            }
            data.extend(row);
            lines.push(line);
        }
        if data.is_empty() {
            return Err(Error::Parse("no observations found".into()));
        }
        if p < 2 {
            return Err(Error::Parse(format!("observations need at least 2 coordinates, found {p}")));
        }
        let norms: Vec<f64> = data.chunks_exact(p).map(norm).collect();
        let bad: Vec<u64> = norms
            .iter()
            .zip(&lines)
            .filter(|(r, _)| {
                if normalize {
                    !(**r > 0.0 && r.is_finite())
                } else {
                    !((*r - 1.0).abs() <= INPUT_UNIT_TOL)
                }
            })
            .map(|(_, l)| *l)
            .collect();
        if !bad.is_empty() {
            let what = if normalize { "cannot be normalized" } else { "are not unit vectors (use normalization to project them)" };
            return Err(Error::Parse(format!("rows on lines {bad:?} {what}")));
        }
        Self::normalized(p, data)
    }

    /// Writes one observation per row, without a header.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        for r in self.rows() {
            wtr.serialize(r).map_err(crate::null_dist::csv_err)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// The rows with indices in `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.p);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self::from_parts_unchecked(idx.len(), self.p, data)
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn mat_vec(q: &[f64], x: &[f64], out: &mut [f64]) {
    let p = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = dot(&q[i * p..(i + 1) * p], x);
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return domain(format!("tuning parameter must be finite and positive, got {lambda}"));
    }
    Ok(())
}

fn check_degree(k: usize) -> Result<()> {
    if k == 0 {
        return domain("degree 0 carries no weight in the statistic");
    }
    Ok(())
}

fn exp_or_range(ln: f64, what: impl FnOnce() -> String) -> Result<f64> {
    if ln > 709.0 {
        return Err(Error::Range(format!("{} overflows (log magnitude {ln:.2})", what())));
    }
    Ok(ln.exp())
}

/// Stein coefficient `c_{k,p}(λ)` of `T_n(λ)`, evaluated from its closed form.
pub fn c_kp(k: usize, p: usize, lambda: f64) -> Result<f64> {
    check_degree(k)?;
    check_lambda(lambda)?;
    if p < 2 {
        return domain(format!("dimension must be at least 2, got {p}"));
    }
    let kf = k as f64;
    let ln = if p == 2 {
        std::f64::consts::LN_2 + 4.0 * kf.ln() + 2.0 * ln_bessel_i(kf, lambda)?
    } else {
        let pf = p as f64;
        let nu = gegenbauer_alpha(p);
        (pf - 3.0) * std::f64::consts::LN_2
            + (2.0 - pf) * lambda.ln()
            + (pf - 2.0).ln()
            + (kf + nu).ln()
            + 2.0 * (ln_gamma_unchecked(nu) + (kf * (kf + pf - 2.0)).ln() + ln_bessel_i(nu + kf, lambda)?)
    };
    exp_or_range(ln, || format!("c_{{{k},{p}}}({lambda})"))
}

/// dKSD coefficient `m_{k,p}(λ) (k(k+p-2))^2`.
pub fn c_dksd(k: usize, p: usize, lambda: f64) -> Result<f64> {
    check_degree(k)?;
    check_lambda(lambda)?;
    let e = (k * (k + p - 2)) as f64;
    Ok(m_kp(k, p, lambda)? * e * e)
}

/// Softmax coefficient `m_{k,p}(λ)`.
pub fn softmax_weights(k: usize, p: usize, lambda: f64) -> Result<f64> {
    check_degree(k)?;
    check_lambda(lambda)?;
    m_kp(k, p, lambda)
}

/// Smallest `K ≥ 8` at which `b_K C_K(1)` is negligible against the partial
/// sum `Σ_{k≤K} b_k C_k(1)`.
pub fn truncation_order_by(
    p: usize,
    tol: f64,
    mut b: impl FnMut(usize) -> Result<f64>,
) -> Result<usize> {
    if !(tol > 0.0) {
        return domain(format!("truncation tolerance must be positive, got {tol}"));
    }
    let ones = GegenbauerTable::new(p, MAX_ORDER).values_at_one();
    let mut partial = 0.0;
    for k in 1..=MAX_ORDER {
        let term = b(k)? * ones[k];
        partial += term;
        if k >= MIN_ORDER && (term == 0.0 || term < tol * partial) {
            return Ok(k);
        }
    }
    Err(Error::Range(format!(
        "series did not reach relative tolerance {tol} within {MAX_ORDER} terms"
    )))
}

/// Truncation order of the Stein coefficients at `(p, λ)`.
pub fn truncation_order(p: usize, lambda: f64, tol: f64) -> Result<usize> {
    check_lambda(lambda)?;
    truncation_order_by(p, tol, |k| c_kp(k, p, lambda))
}

/// Which closed form generated a [`CoefficientSequence`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Stein,
    Dksd,
    Softmax,
    Custom,
}

/// Nonnegative Gegenbauer weights `b_1..b_K` of a Sobolev statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSequence {
    family: Family,
    lambda: f64,
    p: usize,
    coeffs: Vec<f64>,
}

impl CoefficientSequence {
    fn generated(
        family: Family,
        p: usize,
        lambda: f64,
        tol: f64,
        f: fn(usize, usize, f64) -> Result<f64>,
    ) -> Result<Self> {
        check_lambda(lambda)?;
        let k = truncation_order_by(p, tol, |k| f(k, p, lambda))?;
        Self::generated_to(family, p, lambda, k, f)
    }

    fn generated_to(
        family: Family,
        p: usize,
        lambda: f64,
        order: usize,
        f: fn(usize, usize, f64) -> Result<f64>,
    ) -> Result<Self> {
        let coeffs = (1..=order).map(|k| f(k, p, lambda)).collect::<Result<_>>()?;
        Ok(Self { family, lambda, p, coeffs })
    }

    pub fn stein(p: usize, lambda: f64, tol: f64) -> Result<Self> {
        Self::generated(Family::Stein, p, lambda, tol, c_kp)
    }

    /// Stein weights at a caller-chosen truncation order.
    pub fn stein_with_order(p: usize, lambda: f64, order: usize) -> Result<Self> {
        check_lambda(lambda)?;
        if order == 0 {
            return domain("truncation order must be at least 1");
        }
        Self::generated_to(Family::Stein, p, lambda, order, c_kp)
    }

    pub fn dksd(p: usize, lambda: f64, tol: f64) -> Result<Self> {
        Self::generated(Family::Dksd, p, lambda, tol, c_dksd)
    }

    pub fn softmax(p: usize, lambda: f64, tol: f64) -> Result<Self> {
        Self::generated(Family::Softmax, p, lambda, tol, softmax_weights)
    }

    pub fn custom(p: usize, coeffs: Vec<f64>) -> Result<Self> {
        if p < 2 {
            return domain(format!("dimension must be at least 2, got {p}"));
        }
        if coeffs.is_empty() {
            return domain("coefficient sequence must be non-empty");
        }
        if coeffs.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return domain("coefficients must be finite and non-negative");
        }
        Ok(Self { family: Family::Custom, lambda: f64::NAN, p, coeffs })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Truncation order `K`.
    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    /// `b_1..b_K`; index 0 holds degree 1.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }
}

/// The λ-free sums `A_k = (1/n) Σ_{i,j} C_k(X_i^T X_j)` for `k = 1..K`.
///
/// The off-diagonal part is kept separately so that tuning and the large-λ
/// regime can use it without cancelling against the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct GegenbauerGram {
    n: usize,
    p: usize,
    pair_sums: Vec<f64>,
    at_one: Vec<f64>,
}

impl GegenbauerGram {
    pub fn new(sample: &SampleSet, order: usize) -> Result<Self> {
        if order == 0 {
            return domain("Gram order must be at least 1");
        }
        let (n, p) = (sample.n(), sample.p());
        if p <= 3 && n >= 4 * order {
            return Self::via_harmonics(sample, order);
        }
        Ok(Self::pairwise(sample, order))
    }

    fn pairwise(sample: &SampleSet, order: usize) -> Self {
        let (n, p) = (sample.n(), sample.p());
        let table = GegenbauerTable::new(p, order);
        let mut pair_sums = vec![0.0; order];
        for i in 1..n {
            let xi = sample.row(i);
            for j in 0..i {
                let u = dot(xi, sample.row(j)).clamp(-1.0, 1.0);
                table.accumulate(u, 1.0, &mut pair_sums);
            }
        }
        let at_one = table.values_at_one()[1..].to_vec();
        Self { n, p, pair_sums, at_one }
    }

    /// Same sums for `p ∈ {2, 3}` in `O(n K²)` through the addition theorem:
    /// `Σ_{i,j} C_k(X_i^T X_j) = Σ_m (Σ_i Y_{k,m}(X_i))²` with real harmonics
    /// scaled so that `Σ_m Y_{k,m}² = C_k(1) = 1`. [`GegenbauerGram::new`]
    /// switches to it once `n ≥ 4K`.
    pub fn via_harmonics(sample: &SampleSet, order: usize) -> Result<Self> {
        if order == 0 {
            return domain("Gram order must be at least 1");
        }
        let (n, p) = (sample.n(), sample.p());
        let mut full = vec![0.0; order];
        match p {
            2 => {
                let mut re = vec![0.0; order];
                let mut im = vec![0.0; order];
                for r in sample.rows() {
                    let (x, y) = (r[0], r[1]);
                    let (mut a, mut b) = (1.0, 0.0);
                    for k in 0..order {
                        (a, b) = (a * x - b * y, a * y + b * x);
                        re[k] += a;
                        im[k] += b;
                    }
                }
                for k in 0..order {
                    full[k] = re[k] * re[k] + im[k] * im[k];
                }
            }
            3 => {
                // Schmidt semi-normalised associated Legendre functions with the
                // sin^m θ factor moved into Re/Im (x + iy)^m.
                let (sqrt_int, dim) = harmonic_layout(order);
                let mut acc = vec![0.0; dim];
                let mut q = vec![0.0; (order + 1) * (order + 1)];
                let mut w = vec![(0.0, 0.0); order + 1];
                for r in sample.rows() {
                    let (x, y, z) = (r[0], r[1], r[2]);
                    w[0] = (1.0, 0.0);
                    for m in 1..=order {
                        let (a, b) = w[m - 1];
                        w[m] = (a * x - b * y, a * y + b * x);
                    }
                    let mut qmm = 1.0;
                    for m in 0..=order {
                        if m >= 2 {
                            qmm *= ((2 * m - 1) as f64 / (2 * m) as f64).sqrt();
                        }
                        q[m * (order + 1) + m] = qmm;
                        if m < order {
                            q[m * (order + 1) + m + 1] = sqrt_int[2 * m + 1] * z * qmm;
                        }
                        for k in m + 2..=order {
                            let row = m * (order + 1);
                            let a = (2 * k - 1) as f64 * z * q[row + k - 1];
                            let b = sqrt_int[(k - 1) * (k - 1) - m * m] * q[row + k - 2];
                            q[row + k] = (a - b) / sqrt_int[k * k - m * m];
                        }
                    }
                    let mut idx = 0;
                    for k in 1..=order {
                        acc[idx] += q[k];
                        idx += 1;
                        for m in 1..=k {
                            let v = q[m * (order + 1) + k];
                            acc[idx] += v * w[m].0;
                            acc[idx + 1] += v * w[m].1;
                            idx += 2;
                        }
                    }
                }
                let mut idx = 0;
                for (k, f) in full.iter_mut().enumerate() {
                    let width = 2 * (k + 1) + 1;
                    *f = acc[idx..idx + width].iter().map(|v| v * v).sum();
                    idx += width;
                }
            }
            _ => return domain(format!("harmonic Gram is implemented for p = 2, 3, got p = {p}")),
        }
        let at_one = GegenbauerTable::new(p, order).values_at_one()[1..].to_vec();
        let nf = n as f64;
        let pair_sums = full.iter().zip(&at_one).map(|(f, c)| (f - nf * c) / 2.0).collect();
        Ok(Self { n, p, pair_sums, at_one })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn order(&self) -> usize {
        self.pair_sums.len()
    }

    /// `A_k` for `k = 1..=K`; index 0 holds degree 1.
    pub fn a(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.pair_sums
            .iter()
            .zip(&self.at_one)
            .map(|(s, c)| (2.0 * s + n * c) / n)
            .collect()
    }

    /// `Σ_{i<j} C_k(X_i^T X_j)`; index 0 holds degree 1.
    pub fn pair_sums(&self) -> &[f64] {
        &self.pair_sums
    }

    /// `C_k(1)` for `k = 1..=K`.
    pub fn at_one(&self) -> &[f64] {
        &self.at_one
    }

    /// `Σ_k b_k A_k` over the leading `b.len()` degrees.
    pub fn statistic(&self, b: &[f64]) -> Result<f64> {
        if b.len() > self.order() {
            return domain(format!(
                "coefficient order {} exceeds Gram order {}",
                b.len(),
                self.order()
            ));
        }
        let n = self.n as f64;
        Ok(b.iter()
            .zip(self.pair_sums.iter().zip(&self.at_one))
            .map(|(b, (s, c))| b * (2.0 * s + n * c) / n)
            .sum())
    }

    /// Off-diagonal part `(2/n) Σ_k b_k Σ_{i<j} C_k(X_i^T X_j)` of the statistic.
    pub fn off_diagonal(&self, b: &[f64]) -> Result<f64> {
        if b.len() > self.order() {
            return domain("coefficient order exceeds Gram order");
        }
        let n = self.n as f64;
        Ok(2.0 / n * b.iter().zip(&self.pair_sums).map(|(b, s)| b * s).sum::<f64>())
    }
}

/// `sqrt(i)` for `i ≤ K²` and the number of degree-1..=K harmonics on S².
fn harmonic_layout(order: usize) -> (Vec<f64>, usize) {
    let top = (order + 1) * (order + 1);
    ((0..=top).map(|i| (i as f64).sqrt()).collect(), order * (order + 2))
}

/// `Σ_k b_k A_k` for the given weights.
pub fn sobolev_statistic(sample: &SampleSet, coeffs: &CoefficientSequence) -> Result<f64> {
    if coeffs.p() != sample.p() {
        return domain(format!(
            "coefficients are for p={} but the sample has p={}",
            coeffs.p(),
            sample.p()
        ));
    }
    GegenbauerGram::new(sample, coeffs.order())?.statistic(coeffs.coeffs())
}

/// `T_n(λ)` with the default truncation.
pub fn t_n(sample: &SampleSet, lambda: f64) -> Result<f64> {
    sobolev_statistic(sample, &CoefficientSequence::stein(sample.p(), lambda, DEFAULT_TOL)?)
}

/// Normalisation of the dKSD statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DksdScaling {
    /// `(1/n^2) Σ_{i,j}`, the V-statistic.
    #[default]
    VStatistic,
    /// `(1/n) Σ_{i,j}`, the same scaling as `T_n`.
    Sobolev,
}

pub fn dksd_statistic(sample: &SampleSet, lambda: f64, scaling: DksdScaling) -> Result<f64> {
    let v = sobolev_statistic(sample, &CoefficientSequence::dksd(sample.p(), lambda, DEFAULT_TOL)?)?;
    Ok(match scaling {
        DksdScaling::VStatistic => v / sample.n() as f64,
        DksdScaling::Sobolev => v,
    })
}

/// `T_n(λ)` for `p = 2` straight from its integral definition, with a
/// 4096-point trapezoid rule over the circle.
pub fn t_n_bruteforce_p2(sample: &SampleSet, lambda: f64) -> Result<f64> {
    if sample.p() != 2 {
        return domain(format!("circle oracle needs p = 2, got p = {}", sample.p()));
    }
    check_lambda(lambda)?;
    const NODES: usize = 4096;
    let angles: Vec<f64> = sample.rows().map(|r| r[1].atan2(r[0])).collect();
    let mut total = 0.0;
    for i in 0..NODES {
        let theta = 2.0 * std::f64::consts::PI * i as f64 / NODES as f64;
        let s: f64 = angles
            .iter()
            .map(|phi| {
                let (sn, cs) = (theta - phi).sin_cos();
                (lambda * lambda * sn * sn - lambda * cs) * (lambda * cs).exp()
            })
            .sum();
        total += s * s;
    }
    Ok(total / NODES as f64 / sample.n() as f64)
}

/// `Σ_{k≤K} c_{k,p}(λ) C_k(1)`, the diagonal contribution to `T_n(λ)`.
pub fn d_n(p: usize, lambda: f64, order: usize) -> Result<f64> {
    let ones = GegenbauerTable::new(p, order).values_at_one();
    (1..=order).map(|k| Ok(c_kp(k, p, lambda)? * ones[k])).sum()
}

/// Rayleigh statistic `n p ‖X̄‖²`.
pub fn rayleigh(sample: &SampleSet) -> f64 {
    let m = sample.mean();
    (sample.n() * sample.p()) as f64 * dot(&m, &m)
}

/// Bingham statistic `(n p (p+2) / 2) (tr S² - 1/p)` with `S` the scatter matrix.
pub fn bingham(sample: &SampleSet) -> f64 {
    let (n, p) = (sample.n(), sample.p());
    let mut s = vec![0.0; p * p];
    for r in sample.rows() {
        for a in 0..p {
            for b in a..p {
                s[a * p + b] += r[a] * r[b];
            }
        }
    }
    let mut tr2 = 0.0;
    for a in 0..p {
        for b in a..p {
            let v = s[a * p + b] / n as f64;
            tr2 += if a == b { v * v } else { 2.0 * v * v };
        }
    }
    let (nf, pf) = (n as f64, p as f64);
    (nf * pf * (pf + 2.0) / 2.0) * (tr2 - 1.0 / pf)
}

/// Largest inner product between two distinct observations.
pub fn max_pair(sample: &SampleSet) -> Result<f64> {
    if sample.n() < 2 {
        return domain("max_pair needs at least two observations");
    }
    let mut best = f64::NEG_INFINITY;
    for i in 1..sample.n() {
        for j in 0..i {
            best = best.max(dot(sample.row(i), sample.row(j)));
        }
    }
    Ok(best.clamp(-1.0, 1.0))
}
