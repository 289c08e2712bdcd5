//! Fields on the sphere `S²` behind the drift and correlation pictures:
//! `√n |z(s)|`, the null correlation `ρ(s,t)` and the correlation `ρ'(s,t)`
//! under a fixed von Mises–Fisher alternative, on a longitude/latitude grid
//! with Hammer equal-area coordinates.

use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alternatives::{AlternativeModel, AlternativeSpec};
use crate::asymptotics::{model_draws, psi_closed, AlternativeHarmonics, ZField};
use crate::error::{domain, Result};
use crate::null_dist::csv_err;
use crate::specfun::GegenbauerTable;
use crate::stein_statistic::{c_kp, dot, norm};

/// Number of series terms used for `z` and `K`.
pub const SERIES_TERMS: usize = 100;
/// Monte Carlo draws for `ρ'`.
pub const KPRIME_DRAWS: usize = 10_000;

const LON_TOL: f64 = 1e-12;

/// Equal-area Hammer coordinates of `(lon, lat)`, inside the ellipse with
/// semi-axes `2√2` and `√2`.
pub fn hammer_project(lon: f64, lat: f64) -> Result<(f64, f64)> {
    if !(lon.abs() <= PI + LON_TOL) || !(lat.abs() <= FRAC_PI_2 + LON_TOL) {
        return domain(format!("(lon, lat) = ({lon}, {lat}) is outside [-π, π] × [-π/2, π/2]"));
    }
    let d = (1.0 + lat.cos() * (lon / 2.0).cos()).sqrt();
    Ok((2.0 * SQRT_2 * lat.cos() * (lon / 2.0).sin() / d, SQRT_2 * lat.sin() / d))
}

/// Unit vector at `(lon, lat)`. The map is centred on `(0, -1, 0)` with
/// north `(0, 0, 1)` and east `(1, 0, 0)`.
pub fn lonlat_to_unit(lon: f64, lat: f64) -> [f64; 3] {
    [lat.cos() * lon.sin(), -lat.cos() * lon.cos(), lat.sin()]
}

/// A regular longitude/latitude grid, both ranges including their endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereGrid {
    n_lon: usize,
    n_lat: usize,
    lonlat: Vec<(f64, f64)>,
    points: Vec<[f64; 3]>,
}

impl Default for SphereGrid {
    /// 181 × 91, a two-degree grid.
    fn default() -> Self {
        Self::new(181, 91).expect("default resolution is valid")
    }
}

impl SphereGrid {
    pub fn new(n_lon: usize, n_lat: usize) -> Result<Self> {
        if n_lon < 2 || n_lat < 2 {
            return domain(format!("grid needs at least 2 × 2 points, got {n_lon} × {n_lat}"));
        }
        let mut lonlat = Vec::with_capacity(n_lon * n_lat);
        for j in 0..n_lat {
            let lat = -FRAC_PI_2 + PI * j as f64 / (n_lat - 1) as f64;
            for i in 0..n_lon {
                lonlat.push((-PI + 2.0 * PI * i as f64 / (n_lon - 1) as f64, lat));
            }
        }
        let points = lonlat.iter().map(|&(lon, lat)| lonlat_to_unit(lon, lat)).collect();
        Ok(Self { n_lon, n_lat, lonlat, points })
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.n_lon, self.n_lat)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `(lon, lat)` of every point, latitude-major.
    pub fn lonlat(&self) -> &[(f64, f64)] {
        &self.lonlat
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    /// Index of the grid point closest to `x`.
    pub fn nearest(&self, x: &[f64]) -> usize {
        let mut best = 0;
        for (i, p) in self.points.iter().enumerate() {
            if dot(p, x) > dot(&self.points[best], x) {
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    /// `√n |z(s)|` under the alternative.
    AbsZ,
    /// `ρ(s, t)` under uniformity.
    RhoNull,
    /// `ρ'(s, t)` under the alternative.
    RhoAlt,
}

/// Everything that determines a field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRequest {
    pub kind: FieldKind,
    /// Concentration of the von Mises–Fisher alternative.
    pub kappa: f64,
    pub mu: [f64; 3],
    pub lambda: f64,
    pub n: usize,
    pub t_ref: [f64; 3],
    pub seed: u64,
}

impl FieldRequest {
    /// Map-centre mean `(0,-1,0)`, reference point at the north pole, `n = 100`.
    pub fn new(kind: FieldKind, kappa: f64, lambda: f64) -> Self {
        Self { kind, kappa, mu: [0.0, -1.0, 0.0], lambda, n: 100, t_ref: [0.0, 0.0, 1.0], seed: 1 }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return domain(format!("lambda must be positive, got {}", self.lambda));
        }
        if self.kind != FieldKind::RhoNull && !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return domain(format!("kappa must be non-negative, got {}", self.kappa));
        }
        for (name, v) in [("mu", &self.mu), ("t_ref", &self.t_ref)] {
            if (norm(v) - 1.0).abs() > 1e-9 {
                return domain(format!("{name} must be a unit vector"));
            }
        }
        if self.kind == FieldKind::AbsZ && self.n == 0 {
            return domain("n must be positive");
        }
        Ok(())
    }

    /// The alternative; `κ = 0` is the uniform law.
    fn model(&self) -> Result<AlternativeModel> {
        if self.kappa == 0.0 {
            return AlternativeModel::new(AlternativeSpec::Uniform, 3);
        }
        AlternativeModel::new(AlternativeSpec::Vmf { kappa: self.kappa, mu: Some(self.mu.to_vec()) }, 3)
    }
}

/// Field values on a grid, in the grid's point order.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub grid: SphereGrid,
    pub values: Vec<f64>,
}

/// `K(s,t) = Σ_{k=1}^{100} c_k(λ) C_k(sᵀt)` as a function of `sᵀt`.
struct NullKernel {
    table: GegenbauerTable,
    coeffs: Vec<f64>,
}

impl NullKernel {
    fn new(lambda: f64) -> Result<Self> {
        let coeffs = (0..=SERIES_TERMS)
            .map(|k| if k == 0 { Ok(0.0) } else { c_kp(k, 3, lambda) })
            .collect::<Result<_>>()?;
        Ok(Self { table: GegenbauerTable::new(3, SERIES_TERMS), coeffs })
    }

    fn at(&self, u: f64) -> f64 {
        let mut buf = vec![0.0; SERIES_TERMS + 1];
        self.table.fill(u.clamp(-1.0, 1.0), &mut buf);
        self.coeffs.iter().zip(&buf).map(|(c, b)| c * b).sum()
    }
}

/// Null correlation `ρ` at `u = sᵀt`.
pub fn rho_null_at_dot(lambda: f64, u: f64) -> Result<f64> {
    let k = NullKernel::new(lambda)?;
    Ok(k.at(u) / k.at(1.0))
}

/// Evaluates the requested field on `grid`. Only `S²` is supported.
pub fn field_grid(req: &FieldRequest, grid: &SphereGrid) -> Result<FieldGrid> {
    req.validate()?;
    let values = match req.kind {
        FieldKind::AbsZ => {
            let model = req.model()?;
            let h = AlternativeHarmonics::from_model(&model, SERIES_TERMS)?;
            let z = ZField::new(&h, req.lambda, SERIES_TERMS)?;
            let scale = (req.n as f64).sqrt();
            grid.points
                .par_iter()
                .map(|s| Ok(scale * z.at_dot(dot(&req.mu, s))?.abs()))
                .collect::<Result<Vec<f64>>>()?
        }
        FieldKind::RhoNull => {
            let k = NullKernel::new(req.lambda)?;
            let k1 = k.at(1.0);
            grid.points.par_iter().map(|s| k.at(dot(s, &req.t_ref)) / k1).collect()
        }
        FieldKind::RhoAlt => rho_alt(req, grid)?,
    };
    Ok(FieldGrid { grid: grid.clone(), values })
}

/// `ρ'(s,t) = K'(s,t) / √(K'(s,s) K'(t,t))` with `K'` estimated from
/// `KPRIME_DRAWS` draws and centred by the series for `z`.
fn rho_alt(req: &FieldRequest, grid: &SphereGrid) -> Result<Vec<f64>> {
    let model = req.model()?;
    let h = AlternativeHarmonics::from_model(&model, SERIES_TERMS)?;
    let z = ZField::new(&h, req.lambda, SERIES_TERMS)?;
    let draws = model_draws(&model, KPRIME_DRAWS, req.seed);
    let m = KPRIME_DRAWS as f64;
    let lambda = req.lambda;
    let psi_t: Vec<f64> = draws.iter().map(|x| psi_closed(3, lambda, dot(&req.t_ref, x))).collect();
    let zt = z.at_dot(dot(&req.mu, &req.t_ref))?;
    let ktt = psi_t.iter().map(|v| v * v).sum::<f64>() / m - zt * zt;
    grid.points
        .par_iter()
        .map(|s| {
            let zs = z.at_dot(dot(&req.mu, s))?;
            let (mut cross, mut sq) = (0.0, 0.0);
            for (x, pt) in draws.iter().zip(&psi_t) {
                let ps = psi_closed(3, lambda, dot(s, x));
                cross += ps * pt;
                sq += ps * ps;
            }
            let kst = cross / m - zs * zt;
            let kss = sq / m - zs * zs;
            Ok(kst / (kss * ktt).sqrt())
        })
        .collect()
}

/// One exported grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRow {
    pub lon: f64,
    pub lat: f64,
    pub hammer_x: f64,
    pub hammer_y: f64,
    pub value: f64,
}

/// Writes `lon,lat,hammer_x,hammer_y,value` rows, one per grid point.
pub fn export_field<W: Write>(field: &FieldGrid, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    if field.values.is_empty() {
        wtr.write_record(["lon", "lat", "hammer_x", "hammer_y", "value"]).map_err(csv_err)?;
    }
    for (&(lon, lat), &value) in field.grid.lonlat.iter().zip(&field.values) {
        let (hammer_x, hammer_y) = hammer_project(lon, lat)?;
        wtr.serialize(FieldRow { lon, lat, hammer_x, hammer_y, value }).map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_field<R: Read>(r: R) -> Result<Vec<FieldRow>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(csv_err))
        .collect()
}
