//! Choosing `λ` by maximizing the standardized mean shift
//! `(E_{H1}[T_n(λ)] - E_{H0}[T_n(λ)]) / sd_{H0}[T_n(λ)]`, estimated either
//! from an independent pilot sample or by K-fold splitting of the data.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{domain, Error, Result};
use crate::specfun::{dim_kp, gamma_kp, GegenbauerTable};
use crate::stein_statistic::{c_kp, dot, truncation_order, GegenbauerGram, SampleSet, DEFAULT_TOL};

/// Candidate values of `λ`, strictly increasing and positive.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaGrid {
    values: Vec<f64>,
}

impl Default for LambdaGrid {
    /// `{i/10 : i = 1..=300}`.
    fn default() -> Self {
        Self { values: (1..=300).map(|i| i as f64 / 10.0).collect() }
    }
}

impl LambdaGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return domain("lambda grid must be non-empty");
        }
        if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return domain("lambda grid values must be finite and positive");
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return domain("lambda grid must be strictly increasing");
        }
        Ok(Self { values })
    }

    /// `{i · step : i = 1..=count}`.
    pub fn regular(step: f64, count: usize) -> Result<Self> {
        Self::new((1..=count).map(|i| i as f64 * step).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max(&self) -> f64 {
        *self.values.last().expect("grid is non-empty")
    }
}

/// λ-free ingredients of the score estimated from a pilot sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotEstimate {
    p: usize,
    n_target: usize,
    n_pilot: usize,
    /// `(1/(N(N-1))) Σ_{i≠j} C_k(Y_iᵀY_j)` for `k = 1..=K`.
    offdiag: Vec<f64>,
    at_one: Vec<f64>,
}

impl PilotEstimate {
    fn from_pair_sums(p: usize, n_target: usize, n_pilot: usize, pair_sums: &[f64], at_one: &[f64]) -> Self {
        let pairs = n_pilot as f64 * (n_pilot as f64 - 1.0);
        Self {
            p,
            n_target,
            n_pilot,
            offdiag: pair_sums.iter().map(|s| 2.0 * s / pairs).collect(),
            at_one: at_one.to_vec(),
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n_target(&self) -> usize {
        self.n_target
    }

    pub fn n_pilot(&self) -> usize {
        self.n_pilot
    }

    pub fn order(&self) -> usize {
        self.offdiag.len()
    }

    /// Off-diagonal means `U_k`; index 0 holds degree 1.
    pub fn offdiag(&self) -> &[f64] {
        &self.offdiag
    }

    /// The same estimate for another target sample size.
    pub fn with_target(&self, n_target: usize) -> Result<Self> {
        if n_target < 2 {
            return domain(format!("target sample size must be at least 2, got {n_target}"));
        }
        Ok(Self { n_target, ..self.clone() })
    }

    /// `Ā_k = (n-1) U_k + C_k(1)`; index 0 holds degree 1.
    pub fn abar(&self) -> Vec<f64> {
        let n1 = self.n_target as f64 - 1.0;
        self.offdiag.iter().zip(&self.at_one).map(|(u, c)| n1 * u + c).collect()
    }
}

/// Pilot estimate of `E[A_k]` at sample size `n_target`, for `k = 1..=order`.
pub fn abar(pilot: &SampleSet, n_target: usize, order: usize) -> Result<PilotEstimate> {
    if pilot.n() < 2 {
        return domain(format!("pilot sample needs at least 2 points, got {}", pilot.n()));
    }
    if n_target < 2 {
        return domain(format!("target sample size must be at least 2, got {n_target}"));
    }
    let gram = GegenbauerGram::new(pilot, order)?;
    Ok(PilotEstimate::from_pair_sums(pilot.p(), n_target, pilot.n(), gram.pair_sums(), gram.at_one()))
}

/// Truncation order that covers every value of `grid`.
pub fn grid_order(p: usize, grid: &LambdaGrid) -> Result<usize> {
    truncation_order(p, grid.max(), DEFAULT_TOL)
}

/// Standardized mean shift at `λ`:
/// `(Σ_k c_k(λ) Ā_k - E_{H0}[T_n]) / sd_{H0}[T_n]`.
pub fn q_score(lambda: f64, est: &PilotEstimate) -> Result<f64> {
    let table = ScoreTable::new(est.p, &LambdaGrid::new(vec![lambda])?, est.order())?;
    Ok(table.scores(est)?[0])
}

/// Stein coefficients and null variances on a grid, computed once.
#[derive(Debug, Clone)]
pub struct ScoreTable {
    p: usize,
    lambdas: Vec<f64>,
    order: usize,
    coeffs: Vec<Vec<f64>>,
    /// `Σ_k 2 (c_k γ_k)² d_k`, the limiting null variance.
    limit_var: Vec<f64>,
}

impl ScoreTable {
    pub fn new(p: usize, grid: &LambdaGrid, order: usize) -> Result<Self> {
        let dims: Vec<f64> = (1..=order).map(|k| dim_kp(k, p).map(|d| d as f64)).collect::<Result<_>>()?;
        let mut coeffs = Vec::with_capacity(grid.values.len());
        let mut limit_var = Vec::with_capacity(grid.values.len());
        for &lambda in &grid.values {
            let c: Vec<f64> = (1..=order).map(|k| c_kp(k, p, lambda)).collect::<Result<_>>()?;
            let v = c
                .iter()
                .enumerate()
                .map(|(i, ck)| 2.0 * (ck * gamma_kp(i + 1, p)).powi(2) * dims[i])
                .sum();
            coeffs.push(c);
            limit_var.push(v);
        }
        Ok(Self { p, lambdas: grid.values.clone(), order, coeffs, limit_var })
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// `c_1(λ_i), …, c_K(λ_i)`.
    pub fn coeffs(&self, i: usize) -> &[f64] {
        &self.coeffs[i]
    }

    /// Null standard deviation of `T_n(λ_i)`.
    pub fn null_sd(&self, i: usize, n: usize) -> f64 {
        let n = n as f64;
        (self.limit_var[i] * (n - 1.0) / n).sqrt()
    }

    /// Scores of every grid value.
    ///
    /// The numerator is formed as `(n-1) Σ_k c_k U_k` rather than as the
    /// difference of two large sums.
    pub fn scores(&self, est: &PilotEstimate) -> Result<Vec<f64>> {
        if est.p != self.p {
            return domain("pilot estimate and score table have different dimensions");
        }
        let order = self.order.min(est.order());
        let n = est.n_target as f64;
        self.coeffs
            .iter()
            .zip(&self.limit_var)
            .zip(&self.lambdas)
            .map(|((c, v), lambda)| {
                let var = v * (n - 1.0) / n;
                if !(var > 0.0) {
                    return Err(Error::Numeric(format!("null variance vanishes at λ={lambda}")));
                }
                let shift: f64 = c[..order].iter().zip(&est.offdiag).map(|(c, u)| c * u).sum();
                Ok((n - 1.0) * shift / var.sqrt())
            })
            .collect()
    }
}

/// Index of the largest score; ties go to the smallest index.
pub fn argmax_first(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

/// `λ` on `grid` maximizing the pilot score, with that score.
pub fn select_lambda_tilde(pilot: &SampleSet, n_target: usize, grid: &LambdaGrid) -> Result<(f64, f64)> {
    let order = grid_order(pilot.p(), grid)?;
    let est = abar(pilot, n_target, order)?;
    let scores = ScoreTable::new(pilot.p(), grid, order)?.scores(&est)?;
    let i = argmax_first(&scores);
    Ok((grid.values[i], scores[i]))
}

/// Outcome of K-fold selection.
#[derive(Debug, Clone, PartialEq)]
pub struct KFoldSelection {
    pub index: usize,
    pub lambda: f64,
    /// Across-fold mean score of every grid value.
    pub mean_scores: Vec<f64>,
}

/// Selects `λ` from the data alone: the sample is randomly split into
/// `folds` parts, each part is scored with its complement as pilot (target
/// size the part's size), and the grid value with the largest mean score wins.
pub fn select_lambda_kfold<R: Rng + ?Sized>(
    sample: &SampleSet,
    folds: usize,
    table: &ScoreTable,
    rng: &mut R,
) -> Result<KFoldSelection> {
    let n = sample.n();
    if folds < 2 {
        return domain(format!("at least 2 folds are required, got {folds}"));
    }
    if n < folds {
        return domain(format!("{folds} folds need at least as many points, got {n}"));
    }
    if n - n.div_ceil(folds) < 2 {
        return domain("every complement must hold at least two points");
    }
    let order = table.order;
    let p = sample.p();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut fold_of = vec![0usize; n];
    let mut sizes = vec![0usize; folds];
    for (pos, &i) in perm.iter().enumerate() {
        let f = pos * folds / n;
        fold_of[i] = f;
        sizes[f] += 1;
    }

    // One pass over all pairs: total sums, per-point row sums, within-fold sums.
    let gtable = GegenbauerTable::new(p, order);
    let mut total = vec![0.0; order];
    let mut rows = vec![0.0; n * order];
    let mut within = vec![0.0; folds * order];
    let mut buf = vec![0.0; order + 1];
    for i in 1..n {
        for j in 0..i {
            let u = dot(sample.row(i), sample.row(j)).clamp(-1.0, 1.0);
            gtable.fill(u, &mut buf);
            let c = &buf[1..];
            for k in 0..order {
                total[k] += c[k];
                rows[i * order + k] += c[k];
                rows[j * order + k] += c[k];
            }
            if fold_of[i] == fold_of[j] {
                let w = &mut within[fold_of[i] * order..(fold_of[i] + 1) * order];
                w.iter_mut().zip(c).for_each(|(a, b)| *a += b);
            }
        }
    }
    let at_one = gtable.values_at_one()[1..].to_vec();

    let mut mean_scores = vec![0.0; table.lambdas.len()];
    let mut complement = vec![0.0; order];
    for f in 0..folds {
        complement.copy_from_slice(&total);
        for i in (0..n).filter(|&i| fold_of[i] == f) {
            complement.iter_mut().zip(&rows[i * order..(i + 1) * order]).for_each(|(a, r)| *a -= r);
        }
        complement
            .iter_mut()
            .zip(&within[f * order..(f + 1) * order])
            .for_each(|(a, w)| *a += w);
        let target = sizes[f].max(2);
        let est = PilotEstimate::from_pair_sums(p, target, n - sizes[f], &complement, &at_one);
        for (m, s) in mean_scores.iter_mut().zip(table.scores(&est)?) {
            *m += s / folds as f64;
        }
    }
    let i = argmax_first(&mean_scores);
    Ok(KFoldSelection { index: i, lambda: table.lambdas[i], mean_scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alternatives::{AlternativeModel, AlternativeSpec};
    use crate::asymptotics::AlternativeHarmonics;
    use crate::null_dist::uniform_sample;
    use crate::rng::{replicate_rng, Purpose};

    fn rng(i: u64) -> rand_chacha::ChaCha8Rng {
        replicate_rng(17, Purpose::Other(i), 0)
    }

    fn draw(spec: AlternativeSpec, p: usize, n: usize, seed: u64) -> SampleSet {
        AlternativeModel::new(spec, p).unwrap().sample(n, &mut rng(seed)).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert_eq!(LambdaGrid::default().values().len(), 300);
        assert_eq!(LambdaGrid::default().max(), 30.0);
        assert!(LambdaGrid::new(vec![]).is_err());
        assert!(LambdaGrid::new(vec![1.0, 1.0]).is_err());
        assert!(LambdaGrid::new(vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn abar_examples() {
        let same = SampleSet::new(3, vec![0.0, 0.0, 1.0].repeat(5)).unwrap();
        let est = abar(&same, 40, 6).unwrap();
        let ones = GegenbauerTable::new(3, 6).values_at_one();
        for (k, a) in est.abar().iter().enumerate() {
            assert!((a - 40.0 * ones[k + 1]).abs() < 1e-12 * a.abs());
        }
        assert!(abar(&SampleSet::new(3, vec![0.0, 0.0, 1.0]).unwrap(), 10, 4).is_err());
    }

    #[test]
    fn abar_under_uniformity() {
        let x = uniform_sample(2000, 3, &mut rng(1));
        let est = abar(&x, 50, 4).unwrap();
        let ones = GegenbauerTable::new(3, 4).values_at_one();
        for (k, &u) in est.offdiag().iter().enumerate() {
            // Var of a U-statistic with a degenerate kernel: 2 Var(C_k) / (N(N-1)).
            let var_ck = gamma_kp(k + 1, 3) * ones[k + 1];
            let se = (2.0 * var_ck / (2000.0 * 1999.0)).sqrt();
            assert!(u.abs() < 3.5 * se, "k={} u={u} se={se}", k + 1);
        }
    }

    #[test]
    fn abar_matches_closed_form_for_vmf() {
        // E[C_k(XᵀY)] = (γ_k β_k C_k(1))² for independent X, Y from a zonal law.
        let spec = AlternativeSpec::Vmf { kappa: 5.0, mu: None };
        let model = AlternativeModel::new(spec.clone(), 3).unwrap();
        let h = AlternativeHarmonics::from_model(&model, 4).unwrap();
        let x = model.sample(10_000, &mut rng(2)).unwrap();
        let est = abar(&x, 50, 1).unwrap();
        let want = (gamma_kp(1, 3) * h.betas()[1]).powi(2);
        // Non-degenerate U-statistic: Var ≈ 4 Var(E[C_1(XᵀY)|X]) / N.
        let mean = x.mean();
        let proj: Vec<f64> = x.rows().map(|r| dot(r, &mean)).collect();
        let pm = proj.iter().sum::<f64>() / 1e4;
        let pv = proj.iter().map(|v| (v - pm).powi(2)).sum::<f64>() / 1e4;
        let se = (4.0 * pv / 1e4).sqrt();
        assert!((est.offdiag()[0] - want).abs() < 3.0 * se, "{} vs {want}", est.offdiag()[0]);
    }

    #[test]
    fn scores_under_uniformity_are_small() {
        let x = uniform_sample(1000, 3, &mut rng(3));
        let grid = LambdaGrid::default();
        let order = grid_order(3, &grid).unwrap();
        let est = abar(&x, 50, order).unwrap();
        let scores = ScoreTable::new(3, &grid, order).unwrap().scores(&est).unwrap();
        assert!(scores.iter().all(|s| s.abs() < 4.0), "{:?}", scores.iter().fold(0.0f64, |a, b| a.max(b.abs())));
    }

    #[test]
    fn q_score_matches_table_and_definition() {
        let x = draw(AlternativeSpec::Vmf { kappa: 1.0, mu: None }, 3, 300, 4);
        let order = 40;
        let est = abar(&x, 50, order).unwrap();
        let lambda = 2.3;
        let q = q_score(lambda, &est).unwrap();
        // Direct evaluation of the displayed definition.
        let coeffs = crate::stein_statistic::CoefficientSequence::stein_with_order(3, lambda, order).unwrap();
        let tbar: f64 = coeffs.coeffs().iter().zip(est.abar()).map(|(c, a)| c * a).sum();
        let mean0 = crate::null_dist::null_mean(&coeffs);
        let var0 = crate::null_dist::null_variance(&coeffs, 50).unwrap();
        let want = (tbar - mean0) / var0.sqrt();
        assert!((q - want).abs() < 1e-8 * want.abs(), "{q} vs {want}");
    }

    #[test]
    fn vmf_prefers_smallest_lambda() {
        let x = draw(AlternativeSpec::Vmf { kappa: 0.5, mu: None }, 3, 10_000, 5);
        let (lambda, _) = select_lambda_tilde(&x, 50, &LambdaGrid::default()).unwrap();
        assert_eq!(lambda, 0.1);
    }

    #[test]
    fn multimodal_prefers_large_lambda() {
        let x = draw(AlternativeSpec::MultiVmf { kappa: 30.0 }, 3, 10_000, 6);
        let (lambda, _) = select_lambda_tilde(&x, 50, &LambdaGrid::default()).unwrap();
        assert!(lambda > 4.0, "{lambda}");
    }

    #[test]
    fn single_point_grid_and_determinism() {
        let x = draw(AlternativeSpec::Watson { kappa: 1.0, mu: None }, 3, 400, 7);
        let grid = LambdaGrid::new(vec![2.5]).unwrap();
        assert_eq!(select_lambda_tilde(&x, 50, &grid).unwrap().0, 2.5);
        let a = select_lambda_tilde(&x, 50, &LambdaGrid::default()).unwrap();
        let b = select_lambda_tilde(&x, 50, &LambdaGrid::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn argmax_ties_and_scale_invariance() {
        assert_eq!(argmax_first(&[1.0, 3.0, 3.0, 2.0]), 1);
        let x = draw(AlternativeSpec::Watson { kappa: 2.0, mu: None }, 3, 500, 8);
        let grid = LambdaGrid::default();
        let order = grid_order(3, &grid).unwrap();
        let est = abar(&x, 50, order).unwrap();
        let scores = ScoreTable::new(3, &grid, order).unwrap().scores(&est).unwrap();
        let scaled: Vec<f64> = scores.iter().map(|s| 7.5 * s).collect();
        assert_eq!(argmax_first(&scores), argmax_first(&scaled));
    }

    #[test]
    fn grid_refinement_is_stable() {
        let x = draw(AlternativeSpec::MultiVmf { kappa: 30.0 }, 3, 2000, 9);
        let coarse = LambdaGrid::default();
        let fine = LambdaGrid::regular(0.05, 600).unwrap();
        let order = grid_order(3, &coarse).unwrap();
        let est = abar(&x, 50, order).unwrap();
        let sc = ScoreTable::new(3, &coarse, order).unwrap().scores(&est).unwrap();
        let sf = ScoreTable::new(3, &fine, order).unwrap().scores(&est).unwrap();
        // Shared grid points score identically, and the refined maximum is close.
        for i in 0..300 {
            assert!((sc[i] - sf[2 * i + 1]).abs() <= 1e-12 * sc[i].abs());
        }
        let (mc, mf) = (sc[argmax_first(&sc)], sf[argmax_first(&sf)]);
        assert!(mf >= mc * (1.0 - 1e-12) && (mf - mc) / mc < 1e-3, "{mc} vs {mf}");
    }

    #[test]
    fn kfold_matches_direct_complement_pilots() {
        let x = draw(AlternativeSpec::Vmf { kappa: 1.0, mu: None }, 3, 37, 10);
        let grid = LambdaGrid::new(vec![0.5, 1.0, 3.0, 8.0]).unwrap();
        let order = grid_order(3, &grid).unwrap();
        let table = ScoreTable::new(3, &grid, order).unwrap();
        let sel = select_lambda_kfold(&x, 5, &table, &mut rng(11)).unwrap();

        // Rebuild the same partition and score each complement from scratch.
        let mut perm: Vec<usize> = (0..37).collect();
        perm.shuffle(&mut rng(11));
        let mut want = vec![0.0; 4];
        for f in 0..5 {
            let in_fold: Vec<usize> = perm.iter().enumerate().filter(|(pos, _)| pos * 5 / 37 == f).map(|(_, &i)| i).collect();
            let rest: Vec<usize> = (0..37).filter(|i| !in_fold.contains(i)).collect();
            let est = abar(&x.select(&rest), in_fold.len(), order).unwrap();
            for (w, s) in want.iter_mut().zip(table.scores(&est).unwrap()) {
                *w += s / 5.0;
            }
        }
        for (a, b) in sel.mean_scores.iter().zip(&want) {
            assert!((a - b).abs() < 1e-9 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn kfold_edge_cases() {
        let x = draw(AlternativeSpec::Vmf { kappa: 1.0, mu: None }, 3, 12, 12);
        let grid = LambdaGrid::new(vec![0.5, 1.0, 2.0]).unwrap();
        let table = ScoreTable::new(3, &grid, grid_order(3, &grid).unwrap()).unwrap();
        let loo = select_lambda_kfold(&x, 12, &table, &mut rng(13)).unwrap();
        assert!(grid.values().contains(&loo.lambda));
        assert!(select_lambda_kfold(&x, 13, &table, &mut rng(13)).is_err());
        assert!(select_lambda_kfold(&x, 1, &table, &mut rng(13)).is_err());
        let a = select_lambda_kfold(&x, 4, &table, &mut rng(14)).unwrap();
        let b = select_lambda_kfold(&x, 4, &table, &mut rng(14)).unwrap();
        assert_eq!(a, b);
    }
}
