//! Distributions on the sphere used as alternatives in power studies:
//! densities, samplers and Gegenbauer coefficients of the rotationally
//! symmetric ones.
//!
//! Densities are taken with respect to the uniform probability measure, so
//! the uniform law has density 1.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{domain, Error, Result};
use crate::null_dist::uniform_sample;
use crate::quadrature::GaussLegendre;
use crate::specfun::{gamma_kp, gegenbauer_alpha, ln_bessel_i, ln_m_kp, surface_measure, GegenbauerTable};
use crate::stein_statistic::{dot, mat_vec, norm, SampleSet};

const GRID_POINTS: usize = 4096;
const QUAD_NODES: usize = 200;

/// Declarative description of a distribution, as found in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlternativeSpec {
    Uniform,
    /// von Mises–Fisher, density `∝ e^{κ μᵀx}`.
    Vmf {
        kappa: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mu: Option<Vec<f64>>,
    },
    /// Density `∝ ((1-ρ²) / (1 - 2ρ μᵀx + ρ²))^p` with `ρ = ρ(κ)`.
    CauchyLike {
        kappa: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mu: Option<Vec<f64>>,
    },
    /// Watson, density `∝ e^{κ (μᵀx)²}`.
    Watson {
        kappa: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mu: Option<Vec<f64>>,
    },
    /// Small circle, density `∝ e^{-κ (e_1ᵀx - ν)²}`.
    SmallCircle { kappa: f64, nu: f64 },
    /// `(1-q) vMF(e_1, κ) + q vMF(-e_1, κ)`.
    VmfMixturePoles {
        q: f64,
        #[serde(default = "default_pole_kappa")]
        kappa: f64,
    },
    /// `k` copies of a small circle law rotated in the `(2,3)`-plane.
    SmallCircleMixture {
        k: usize,
        #[serde(default = "default_circle_kappa")]
        kappa: f64,
    },
    /// `k` projected normals `N(4e_1, Σ)` rotated in the `(1,2)`-plane.
    ProjNormalMixture { k: usize },
    /// Equal mixture of `vMF(±e_j, κ)`, `j = 1..p`.
    MultiVmf { kappa: f64 },
}

fn default_pole_kappa() -> f64 {
    2.0
}

fn default_circle_kappa() -> f64 {
    10.0
}

impl fmt::Display for AlternativeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlternativeSpec::Uniform => write!(f, "Unif"),
            AlternativeSpec::Vmf { kappa, .. } => write!(f, "vMF({kappa})"),
            AlternativeSpec::CauchyLike { kappa, .. } => write!(f, "Ca({kappa})"),
            AlternativeSpec::Watson { kappa, .. } => write!(f, "W({kappa})"),
            AlternativeSpec::SmallCircle { kappa, nu } => write!(f, "SC({kappa},{nu})"),
            AlternativeSpec::VmfMixturePoles { q, .. } => write!(f, "vMFM({q})"),
            AlternativeSpec::SmallCircleMixture { k, .. } => write!(f, "SCM({k})"),
            AlternativeSpec::ProjNormalMixture { k } => write!(f, "projNM({k})"),
            AlternativeSpec::MultiVmf { kappa } => write!(f, "MvMF({kappa})"),
        }
    }
}

/// `ρ(κ) = (2κ + 1 - √(4κ + 1)) / (2κ)` of the Cauchy-like family.
pub fn cauchy_rho(kappa: f64) -> f64 {
    (2.0 * kappa + 1.0 - (4.0 * kappa + 1.0).sqrt()) / (2.0 * kappa)
}

/// Shape of a zonal profile `g`, evaluated in log space.
#[derive(Clone)]
pub enum Profile {
    Constant,
    /// `e^{κu}`
    Exponential { kappa: f64 },
    /// `e^{κu²}`
    Axial { kappa: f64 },
    /// `((1-ρ²)/(1-2uρ+ρ²))^power`
    CauchyLike { rho: f64, power: f64 },
    /// `e^{-κ(u-ν)²}`
    SmallCircle { kappa: f64, nu: f64 },
    /// Any non-negative bounded function.
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Constant => write!(f, "Constant"),
            Profile::Exponential { kappa } => write!(f, "Exponential({kappa})"),
            Profile::Axial { kappa } => write!(f, "Axial({kappa})"),
            Profile::CauchyLike { rho, power } => write!(f, "CauchyLike({rho}, {power})"),
            Profile::SmallCircle { kappa, nu } => write!(f, "SmallCircle({kappa}, {nu})"),
            Profile::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl Profile {
    fn ln_value(&self, u: f64) -> f64 {
        match self {
            Profile::Constant => 0.0,
            Profile::Exponential { kappa } => kappa * u,
            Profile::Axial { kappa } => kappa * u * u,
            Profile::CauchyLike { rho, power } => {
                power * ((1.0 - rho * rho) / (1.0 - 2.0 * u * rho + rho * rho)).ln()
            }
            Profile::SmallCircle { kappa, nu } => -kappa * (u - nu).powi(2),
            Profile::Custom(g) => g(u).ln(),
        }
    }

    /// An upper bound of `ln g` on `[-1, 1]`, used to keep exponentials in range.
    fn ln_peak(&self) -> f64 {
        match self {
            Profile::Constant => 0.0,
            Profile::Exponential { kappa } => kappa.max(-kappa),
            Profile::Axial { kappa } => kappa.max(0.0),
            Profile::CauchyLike { rho, power } => {
                let u = if *rho >= 0.0 { 1.0 } else { -1.0 };
                power * ((1.0 - rho * rho) / (1.0 - 2.0 * u * rho + rho * rho)).ln()
            }
            Profile::SmallCircle { .. } => 0.0,
            Profile::Custom(_) => (0..=1000)
                .map(|i| self.ln_value(-1.0 + i as f64 / 500.0))
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// `∫_0^π h(θ) sin^{p-2}θ dθ · ω_{p-2}/ω_{p-1}`, the uniform-measure average
/// of a zonal function `x ↦ h(arccos μᵀx)`.
fn zonal_average(gl: &GaussLegendre, p: usize, mut h: impl FnMut(f64) -> f64) -> f64 {
    let ratio = surface_measure(p - 2) / surface_measure(p - 1);
    ratio * gl.integrate(0.0, PI, |th| h(th) * th.sin().powi(p as i32 - 2))
}

/// A normalized zonal density `u ↦ g(u) / Z` on `S^{p-1}`.
#[derive(Debug, Clone)]
pub struct AngularFunction {
    p: usize,
    profile: Profile,
    ln_norm: f64,
}

impl AngularFunction {
    pub fn new(profile: Profile, p: usize) -> Result<Self> {
        if p < 2 {
            return domain(format!("dimension must be at least 2, got {p}"));
        }
        let peak = profile.ln_peak();
        if !peak.is_finite() {
            return domain("angular function is unbounded or identically zero");
        }
        let integral = |nodes: usize| {
            zonal_average(GaussLegendre::shared(nodes), p, |th| (profile.ln_value(th.cos()) - peak).exp())
        };
        let (coarse, fine) = (integral(QUAD_NODES), integral(2 * QUAD_NODES));
        if !(fine > 0.0) || !fine.is_finite() {
            return Err(Error::Numeric("angular function cannot be normalized".into()));
        }
        if (coarse - fine).abs() > 1e-8 * fine {
            return Err(Error::Numeric(format!(
                "normalizing constant unstable under node doubling ({coarse} vs {fine})"
            )));
        }
        Ok(Self { p, profile, ln_norm: peak + fine.ln() })
    }

    /// Uses a known normalizing constant instead of quadrature.
    fn with_ln_norm(profile: Profile, p: usize, ln_norm: f64) -> Self {
        Self { p, profile, ln_norm }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    /// Density at `u = μᵀx` with respect to the uniform probability measure.
    pub fn density(&self, u: f64) -> f64 {
        (self.profile.ln_value(u) - self.ln_norm).exp()
    }

    /// Projection coefficient `β_k` with `density(u) = Σ_k β_k C_k(u)`.
    pub fn beta_k(&self, k: usize) -> Result<f64> {
        let table = GegenbauerTable::new(self.p, k);
        let mut buf = vec![0.0; k + 1];
        let mut inner = |nodes: usize| {
            zonal_average(GaussLegendre::shared(nodes), self.p, |th| {
                let u = th.cos();
                table.fill(u, &mut buf);
                self.density(u) * buf[k]
            })
        };
        let (coarse, fine) = (inner(QUAD_NODES), inner(2 * QUAD_NODES));
        let scale = gamma_kp(k, self.p) * table.values_at_one()[k];
        if (coarse - fine).abs() > 1e-8 * (fine.abs() + 1e-6) {
            return Err(Error::Numeric(format!(
                "projection onto degree {k} unstable under node doubling"
            )));
        }
        Ok(coarse / scale)
    }

    /// Mean and CDF helpers for `t = μᵀX` under this law.
    pub fn mean_t(&self) -> f64 {
        let gl = GaussLegendre::shared(2 * QUAD_NODES);
        zonal_average(&gl, self.p, |th| th.cos() * self.density(th.cos()))
    }

    /// `P(μᵀX ≤ t)`.
    pub fn cdf_t(&self, t: f64) -> f64 {
        let t = t.clamp(-1.0, 1.0);
        let gl = GaussLegendre::shared(2 * QUAD_NODES);
        let ratio = surface_measure(self.p - 2) / surface_measure(self.p - 1);
        // t ≤ u ⇔ θ ≥ arccos t.
        let lo = t.acos();
        1.0 - ratio * gl.integrate(0.0, lo, |th| self.density(th.cos()) * th.sin().powi(self.p as i32 - 2))
    }
}

/// Projection coefficient of `g` onto `C_k` (free-function form).
pub fn beta_k_numeric(g: &AngularFunction, k: usize) -> Result<f64> {
    g.beta_k(k)
}

/// Closed-form Gegenbauer coefficient `β_k` of the `vMF(κ)` density.
pub fn beta_k_vmf(k: usize, p: usize, kappa: f64) -> Result<f64> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return domain(format!("concentration must be positive, got {kappa}"));
    }
    Ok((ln_vmf_constant(p, kappa)? + ln_m_kp(k, p, kappa)?).exp())
}

/// `ln(κ^{(p-2)/2} ω_{p-1} / ((2π)^{p/2} I_{(p-2)/2}(κ)))`.
fn ln_vmf_constant(p: usize, kappa: f64) -> Result<f64> {
    let nu = gegenbauer_alpha(p);
    Ok(nu * kappa.ln() + surface_measure(p - 1).ln()
        - (p as f64 / 2.0) * (2.0 * PI).ln()
        - ln_bessel_i(nu, kappa)?)
}

/// Inverse-CDF sampler for `θ = arccos(μᵀX)` on a fixed grid.
#[derive(Debug, Clone)]
struct ThetaSampler {
    cdf: Vec<f64>,
}

impl ThetaSampler {
    fn new(g: &AngularFunction) -> Self {
        let peak = g.profile.ln_peak();
        let h = PI / (GRID_POINTS - 1) as f64;
        let dens: Vec<f64> = (0..GRID_POINTS)
            .map(|i| {
                let th = i as f64 * h;
                (g.profile.ln_value(th.cos()) - peak).exp() * th.sin().powi(g.p as i32 - 2)
            })
            .collect();
        let mut cdf = vec![0.0; GRID_POINTS];
        for i in 1..GRID_POINTS {
            cdf[i] = cdf[i - 1] + 0.5 * h * (dens[i - 1] + dens[i]);
        }
        let total = cdf[GRID_POINTS - 1];
        cdf.iter_mut().for_each(|c| *c /= total);
        Self { cdf }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let v: f64 = rng.random();
        let i = self.cdf.partition_point(|&c| c < v).clamp(1, GRID_POINTS - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let frac = if c1 > c0 { (v - c0) / (c1 - c0) } else { 0.5 };
        (i as f64 - 1.0 + frac) * PI / (GRID_POINTS - 1) as f64
    }
}

/// Writes `cos θ · μ + sin θ · ξ` into `out`, `ξ` uniform on the subsphere orthogonal to `μ`.
fn tangent_normal<R: Rng + ?Sized>(rng: &mut R, mu: &[f64], theta: f64, out: &mut [f64]) {
    loop {
        for v in out.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let d = dot(out, mu);
        out.iter_mut().zip(mu).for_each(|(v, m)| *v -= d * m);
        let r = norm(out);
        if r > 1e-12 {
            let (s, c) = theta.sin_cos();
            out.iter_mut().zip(mu).for_each(|(v, m)| *v = c * m + s * *v / r);
            let r = norm(out);
            out.iter_mut().for_each(|v| *v /= r);
            return;
        }
    }
}

/// Row-major `p × p` rotation by `alpha` in the `(i, j)`-plane (1-based axes).
pub fn rotation_matrix(i: usize, j: usize, alpha: f64, p: usize) -> Result<Vec<f64>> {
    if i == 0 || j == 0 || i > p || j > p || i >= j {
        return domain(format!("invalid rotation plane ({i}, {j}) in dimension {p}"));
    }
    let mut r = vec![0.0; p * p];
    for d in 0..p {
        r[d * p + d] = 1.0;
    }
    let (a, b) = (i - 1, j - 1);
    let (s, c) = alpha.sin_cos();
    r[a * p + a] = c;
    r[a * p + b] = -s;
    r[b * p + a] = s;
    r[b * p + b] = c;
    Ok(r)
}

fn transpose(m: &[f64], p: usize) -> Vec<f64> {
    let mut t = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            t[j * p + i] = m[i * p + j];
        }
    }
    t
}

fn unit(p: usize, axis: usize, sign: f64) -> Vec<f64> {
    let mut e = vec![0.0; p];
    e[axis] = sign;
    e
}

#[derive(Debug, Clone)]
struct ProjectedNormal {
    mean: Vec<f64>,
    sd: Vec<f64>,
    rotations: Vec<Vec<f64>>,
    inverse_rotations: Vec<Vec<f64>>,
    ln_const: f64,
}

impl ProjectedNormal {
    fn new(p: usize, k: usize) -> Result<Self> {
        let mut mean = vec![0.0; p];
        mean[0] = 4.0;
        let mut sd = vec![1.0; p];
        sd[p - 1] = 10f64.sqrt();
        let mut rotations = Vec::with_capacity(k);
        for j in 1..=k {
            rotations.push(rotation_matrix(1, 2, j as f64 / k as f64 * 2.0 * PI, p)?);
        }
        let inverse_rotations = rotations.iter().map(|r| transpose(r, p)).collect();
        let ln_det: f64 = sd.iter().map(|s| 2.0 * s.ln()).sum();
        let ln_const = surface_measure(p - 1).ln() - 0.5 * p as f64 * (2.0 * PI).ln() - 0.5 * ln_det;
        Ok(Self { mean, sd, rotations, inverse_rotations, ln_const })
    }

    /// Density of the unrotated projected normal at `x`: the push-forward of
    /// `N(m, Σ)` under `y ↦ y/‖y‖`, i.e. `∫_0^∞ r^{p-1} φ_Σ(r x) dr` w.r.t. surface measure.
    fn base_density(&self, x: &[f64]) -> f64 {
        let p = x.len();
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        for d in 0..p {
            let w = 1.0 / (self.sd[d] * self.sd[d]);
            a += w * x[d] * x[d];
            b += w * x[d] * self.mean[d];
            c += w * self.mean[d] * self.mean[d];
        }
        let radial = radial_moment(p - 1, a, b);
        (self.ln_const - 0.5 * c).exp() * radial
    }

    fn density(&self, x: &[f64]) -> f64 {
        let mut y = vec![0.0; x.len()];
        let k = self.rotations.len() as f64;
        self.inverse_rotations
            .iter()
            .map(|r| {
                mat_vec(r, x, &mut y);
                self.base_density(&y)
            })
            .sum::<f64>()
            / k
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let p = out.len();
        let mut y = vec![0.0; p];
        loop {
            for d in 0..p {
                let z: f64 = rng.sample(StandardNormal);
                y[d] = self.mean[d] + self.sd[d] * z;
            }
            let r = norm(&y);
            if r > 1e-300 {
                y.iter_mut().for_each(|v| *v /= r);
                break;
            }
        }
        let j = rng.random_range(0..self.rotations.len());
        mat_vec(&self.rotations[j], &y, out);
        let r = norm(out);
        out.iter_mut().for_each(|v| *v /= r);
    }
}

/// `∫_0^∞ r^j e^{-a r²/2 + b r} dr`, from the error-function closed form at
/// `j = 0` and the recurrence `a I_j = (j-1) I_{j-2} + b I_{j-1}` (plus one at `j = 1`).
/// For `b < 0` the recurrence cancels: the error stays below `1e-10` of the
/// mirrored value `I_j(a, |b|)`, which is all the projected-normal density needs.
fn radial_moment(j: usize, a: f64, b: f64) -> f64 {
    let s = (2.0 * a).sqrt();
    let i0 = (PI / (2.0 * a)).sqrt() * (b * b / (2.0 * a)).exp() * erfc(-b / s);
    if j == 0 {
        return i0;
    }
    let (mut prev, mut cur) = (i0, (1.0 + b * i0) / a);
    for m in 2..=j {
        let next = ((m - 1) as f64 * prev + b * cur) / a;
        prev = cur;
        cur = next;
    }
    cur
}

#[derive(Debug, Clone)]
enum Built {
    Uniform,
    Zonal {
        angular: AngularFunction,
        sampler: ThetaSampler,
        /// (cumulative weight, axis) pairs; a single entry for non-mixtures.
        components: Vec<(f64, f64, Vec<f64>)>,
    },
    ProjNormal(ProjectedNormal),
}

/// A constructed, sampleable distribution on `S^{p-1}`.
#[derive(Debug, Clone)]
pub struct AlternativeModel {
    spec: AlternativeSpec,
    p: usize,
    built: Built,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return domain(format!("{name} must be finite and positive, got {v}"));
    }
    Ok(())
}

fn resolve_axis(mu: &Option<Vec<f64>>, p: usize) -> Result<Vec<f64>> {
    match mu {
        None => Ok(unit(p, 0, 1.0)),
        Some(m) if m.len() != p => domain(format!("axis has length {} but p = {p}", m.len())),
        Some(m) => {
            let r = norm(m);
            if !(r > 0.0) || !r.is_finite() {
                return domain("axis must be a non-zero finite vector");
            }
            if (r - 1.0).abs() > 1e-6 {
                return domain(format!("axis must have unit length, got norm {r}"));
            }
            Ok(m.iter().map(|v| v / r).collect())
        }
    }
}

impl AlternativeModel {
    pub fn new(spec: AlternativeSpec, p: usize) -> Result<Self> {
        if p < 2 {
            return domain(format!("dimension must be at least 2, got {p}"));
        }
        let zonal = |angular: AngularFunction, components: Vec<(f64, Vec<f64>)>| {
            let sampler = ThetaSampler::new(&angular);
            let mut acc = 0.0;
            let components = components
                .into_iter()
                .map(|(w, axis)| {
                    acc += w;
                    (w, acc, axis)
                })
                .collect();
            Built::Zonal { angular, sampler, components }
        };
        let vmf = |kappa: f64| -> Result<AngularFunction> {
            Ok(AngularFunction::with_ln_norm(
                Profile::Exponential { kappa },
                p,
                -ln_vmf_constant(p, kappa)?,
            ))
        };
        let built = match &spec {
            AlternativeSpec::Uniform => Built::Uniform,
            AlternativeSpec::Vmf { kappa, mu } => {
                check_positive("kappa", *kappa)?;
                zonal(vmf(*kappa)?, vec![(1.0, resolve_axis(mu, p)?)])
            }
            AlternativeSpec::CauchyLike { kappa, mu } => {
                check_positive("kappa", *kappa)?;
                let profile = Profile::CauchyLike { rho: cauchy_rho(*kappa), power: p as f64 };
                zonal(AngularFunction::new(profile, p)?, vec![(1.0, resolve_axis(mu, p)?)])
            }
            AlternativeSpec::Watson { kappa, mu } => {
                if !kappa.is_finite() {
                    return domain("kappa must be finite");
                }
                zonal(
                    AngularFunction::new(Profile::Axial { kappa: *kappa }, p)?,
                    vec![(1.0, resolve_axis(mu, p)?)],
                )
            }
            AlternativeSpec::SmallCircle { kappa, nu } => {
                check_positive("kappa", *kappa)?;
                if !(0.0..=1.0).contains(nu) {
                    return domain(format!("nu must lie in [0, 1], got {nu}"));
                }
                let profile = Profile::SmallCircle { kappa: *kappa, nu: *nu };
                zonal(AngularFunction::new(profile, p)?, vec![(1.0, unit(p, 0, 1.0))])
            }
            AlternativeSpec::VmfMixturePoles { q, kappa } => {
                check_positive("kappa", *kappa)?;
                if !(*q > 0.0 && *q < 1.0) {
                    return domain(format!("q must lie in (0, 1), got {q}"));
                }
                zonal(vmf(*kappa)?, vec![(1.0 - q, unit(p, 0, 1.0)), (*q, unit(p, 0, -1.0))])
            }
            AlternativeSpec::SmallCircleMixture { k, kappa } => {
                check_positive("kappa", *kappa)?;
                if *k == 0 {
                    return domain("mixture needs at least one component");
                }
                if p < 3 {
                    return domain("rotations in the (2,3)-plane need p >= 3");
                }
                let e1 = unit(p, 0, 1.0);
                let mut comps = Vec::with_capacity(*k);
                let mut axis = vec![0.0; p];
                for j in 1..=*k {
                    let r = rotation_matrix(2, 3, j as f64 / *k as f64 * 2.0 * PI, p)?;
                    mat_vec(&r, &e1, &mut axis);
                    comps.push((1.0 / *k as f64, axis.clone()));
                }
                let profile = Profile::SmallCircle { kappa: *kappa, nu: 0.0 };
                zonal(AngularFunction::new(profile, p)?, comps)
            }
            AlternativeSpec::ProjNormalMixture { k } => {
                if *k == 0 {
                    return domain("mixture needs at least one component");
                }
                Built::ProjNormal(ProjectedNormal::new(p, *k)?)
            }
            AlternativeSpec::MultiVmf { kappa } => {
                check_positive("kappa", *kappa)?;
                let w = 1.0 / (2 * p) as f64;
                let comps = (0..p)
                    .flat_map(|j| [(w, unit(p, j, 1.0)), (w, unit(p, j, -1.0))])
                    .collect();
                zonal(vmf(*kappa)?, comps)
            }
        };
        Ok(Self { spec, p, built })
    }

    pub fn spec(&self) -> &AlternativeSpec {
        &self.spec
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Density at the unit vector `x` with respect to the uniform probability measure.
    pub fn density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.p {
            return domain(format!("point has length {} but p = {}", x.len(), self.p));
        }
        if (norm(x) - 1.0).abs() > 1e-9 {
            return domain("density is only defined on the unit sphere");
        }
        Ok(match &self.built {
            Built::Uniform => 1.0,
            Built::Zonal { angular, components, .. } => components
                .iter()
                .map(|(w, _, axis)| w * angular.density(dot(axis, x).clamp(-1.0, 1.0)))
                .sum(),
            Built::ProjNormal(pn) => pn.density(x),
        })
    }

    /// Symmetry axis and angular function, for rotationally symmetric models.
    pub fn rotationally_symmetric(&self) -> Option<(&[f64], &AngularFunction)> {
        match &self.built {
            Built::Zonal { angular, components, .. } if components.len() == 1 => {
                Some((components[0].2.as_slice(), angular))
            }
            _ => None,
        }
    }

    /// Gegenbauer coefficients `β_0..=β_K` of a rotationally symmetric density.
    pub fn betas(&self, order: usize) -> Result<Option<Vec<f64>>> {
        if let Built::Uniform = self.built {
            let mut b = vec![0.0; order + 1];
            b[0] = 1.0;
            return Ok(Some(b));
        }
        let Some((_, angular)) = self.rotationally_symmetric() else {
            return Ok(None);
        };
        let betas = match self.spec {
            AlternativeSpec::Vmf { kappa, .. } => {
                (0..=order).map(|k| beta_k_vmf(k, self.p, kappa)).collect::<Result<_>>()?
            }
            _ => (0..=order).map(|k| angular.beta_k(k)).collect::<Result<_>>()?,
        };
        Ok(Some(betas))
    }

    /// Writes one draw into `out`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match &self.built {
            Built::Uniform => crate::rng::uniform_unit(rng, out),
            Built::Zonal { sampler, components, .. } => {
                let axis = if components.len() == 1 {
                    &components[0].2
                } else {
                    let v: f64 = rng.random::<f64>() * components.last().map_or(1.0, |c| c.1);
                    let i = components.partition_point(|c| c.1 <= v).min(components.len() - 1);
                    &components[i].2
                };
                let theta = sampler.draw(rng);
                tangent_normal(rng, axis, theta, out);
            }
            Built::ProjNormal(pn) => pn.draw(rng, out),
        }
    }

    /// `n` independent draws.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<SampleSet> {
        if n == 0 {
            return domain("sample size must be at least 1");
        }
        if let Built::Uniform = self.built {
            return Ok(uniform_sample(n, self.p, rng));
        }
        let mut data = vec![0.0; n * self.p];
        for row in data.chunks_exact_mut(self.p) {
            self.draw(rng, row);
        }
        Ok(SampleSet::from_parts_unchecked(n, self.p, data))
    }
}
