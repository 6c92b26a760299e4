//! Gaussian mixture modelling of pooled trajectory data and regression of a
//! mean trajectory with per-axis spread.
//!
//! Rows are `(t, ...outputs)` with time in column 0. A joint 7-D layout
//! `(t, px, py, pz, ux, uy, uz)` couples position and orientation tangent
//! columns in one mixture; a separate 4-D + 4-D layout is available for
//! comparison. Conditioning on time yields the mean trajectory and, per output
//! axis, the total (within-component plus between-component) variance.

use nalgebra::{DMatrix, DVector, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::preprocess::{to_tangent_space, AlignedDataset};
use crate::quaternion::UnitQuaternion;

/// Relative ridge added to every covariance: `eps = COV_RIDGE_REL * v` where
/// `v` is the mean per-dimension sample variance of the training data.
pub const COV_RIDGE_REL: f64 = 1e-8;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone)]
pub struct GmmModel {
    priors: Vec<f64>,
    means: Vec<DVector<f64>>,
    covariances: Vec<DMatrix<f64>>,
    dim: usize,
}

/// Per-iteration record of an EM run. `log_likelihoods[j]` is the mean
/// per-sample log-likelihood under the parameters after `j` update steps.
#[derive(Debug, Clone)]
pub struct EmReport {
    pub log_likelihoods: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl GmmModel {
    pub fn new(
        priors: Vec<f64>,
        means: Vec<DVector<f64>>,
        covariances: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        if priors.is_empty() || priors.len() != means.len() || priors.len() != covariances.len() {
            return Err(Error::Validation(
                "mixture needs matching, non-empty priors/means/covariances".to_string(),
            ));
        }
        let dim = means[0].len();
        if dim == 0
            || means.iter().any(|m| m.len() != dim)
            || covariances
                .iter()
                .any(|c| c.nrows() != dim || c.ncols() != dim)
        {
            return Err(Error::Validation(
                "mixture parameter dimensions disagree".to_string(),
            ));
        }
        let total: f64 = priors.iter().sum();
        if priors.iter().any(|p| !(*p > 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!(
                "priors must be positive and sum to 1 (sum {total})"
            )));
        }
        Ok(Self {
            priors,
            means,
            covariances,
            dim,
        })
    }

    pub fn component_count(&self) -> usize {
        self.priors.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn covariances(&self) -> &[DMatrix<f64>] {
        &self.covariances
    }
}

fn logsumexp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

struct ComponentPdf {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    log_norm: f64, // -(d ln 2pi + ln det) / 2
    mean: DVector<f64>,
}

impl ComponentPdf {
    fn new(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Option<Self> {
        let chol = nalgebra::Cholesky::new(cov.clone())?;
        let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Some(Self {
            log_norm: -0.5 * (mean.len() as f64 * LN_2PI + log_det),
            chol,
            mean: mean.clone(),
        })
    }

    fn log_pdf(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.mean;
        let q = d.dot(&self.chol.solve(&d));
        self.log_norm - 0.5 * q
    }
}

/// Builds per-component Cholesky factors, escalating the ridge if a factor
/// fails. Returns the factors and how many escalations were needed.
fn factorize(
    means: &[DVector<f64>],
    covs: &mut [DMatrix<f64>],
    eps: f64,
) -> Result<(Vec<ComponentPdf>, usize)> {
    let mut pdfs = Vec::with_capacity(means.len());
    let mut escalations = 0;
    for (mean, cov) in means.iter().zip(covs.iter_mut()) {
        let mut attempt = 0;
        loop {
            match ComponentPdf::new(mean, cov) {
                Some(pdf) => {
                    pdfs.push(pdf);
                    break;
                }
                None => {
                    attempt += 1;
                    escalations += 1;
                    if attempt > 12 {
                        return Err(Error::DegenerateData(
                            "covariance stayed non-positive-definite after repeated ridging"
                                .to_string(),
                        ));
                    }
                    let bump = eps.max(1e-12) * 10f64.powi(attempt);
                    for i in 0..cov.nrows() {
                        cov[(i, i)] += bump;
                    }
                }
            }
        }
    }
    Ok((pdfs, escalations))
}

/// Log responsibilities and mean per-sample log-likelihood for fixed
/// parameters. `resp[(i, k)] = p(component k | x_i)`.
fn responsibilities(
    data: &DMatrix<f64>,
    priors: &[f64],
    pdfs: &[ComponentPdf],
) -> (DMatrix<f64>, f64) {
    let n = data.nrows();
    let h = priors.len();
    let mut resp = DMatrix::zeros(n, h);
    let mut ll = 0.0;
    let mut logw = vec![0.0; h];
    for i in 0..n {
        let x = DVector::from_iterator(data.ncols(), data.row(i).iter().cloned());
        for k in 0..h {
            logw[k] = priors[k].ln() + pdfs[k].log_pdf(&x);
        }
        let lse = logsumexp(&logw);
        ll += lse;
        for k in 0..h {
            resp[(i, k)] = (logw[k] - lse).exp();
        }
    }
    (resp, ll / n as f64)
}

/// Time-stratified k-means initialization: seeds one center per equal-width
/// time bin (column 0), then runs Lloyd iterations. All tie-breaking and
/// reseeding is driven by the caller's RNG, so results depend only on the
/// data and the seed.
fn kmeans_init(
    data: &DMatrix<f64>,
    components: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<DVector<f64>>, Vec<usize>) {
    let n = data.nrows();
    let d = data.ncols();
    let row = |i: usize| DVector::from_iterator(d, data.row(i).iter().cloned());

    let (t_min, t_max) = data
        .column(0)
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| {
            (lo.min(t), hi.max(t))
        });
    let span = (t_max - t_min).max(f64::MIN_POSITIVE);

    let mut sums: Vec<DVector<f64>> = vec![DVector::zeros(d); components];
    let mut counts = vec![0usize; components];
    for i in 0..n {
        let t = data[(i, 0)];
        let bin = (((t - t_min) / span * components as f64) as usize).min(components - 1);
        sums[bin] += row(i);
        counts[bin] += 1;
    }
    let mut centers: Vec<DVector<f64>> = (0..components)
        .map(|k| {
            if counts[k] > 0 {
                &sums[k] / counts[k] as f64
            } else {
                row(rng.gen_range(0..n))
            }
        })
        .collect();

    let mut assignment = vec![0usize; n];
    for _ in 0..50 {
        let mut changed = false;
        for i in 0..n {
            let x = row(i);
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (k, c) in centers.iter().enumerate() {
                let dist = (&x - c).norm_squared();
                if dist < best_d {
                    best_d = dist;
                    best = k;
                }
            }
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        let mut new_sums: Vec<DVector<f64>> = vec![DVector::zeros(d); components];
        let mut new_counts = vec![0usize; components];
        for i in 0..n {
            new_sums[assignment[i]] += row(i);
            new_counts[assignment[i]] += 1;
        }
        for k in 0..components {
            if new_counts[k] > 0 {
                centers[k] = &new_sums[k] / new_counts[k] as f64;
            } else {
                centers[k] = row(rng.gen_range(0..n));
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    (centers, assignment)
}

/// Fits a Gaussian mixture by expectation maximization.
///
/// Initialization is k-means seeded from time-stratified bins; every
/// covariance update adds a small relative ridge so components cannot
/// collapse to singular matrices. Convergence is declared when the mean
/// per-sample log-likelihood improves by less than `tol` between iterations.
/// The same data and seed always produce bit-identical results.
pub fn fit_em(
    data: &DMatrix<f64>,
    components: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<(GmmModel, EmReport)> {
    let n = data.nrows();
    let d = data.ncols();
    if components == 0 {
        return Err(Error::Validation("need at least one component".to_string()));
    }
    if d == 0 || n < 2 {
        return Err(Error::Validation(format!(
            "need at least 2 samples of positive dimension, got {n} x {d}"
        )));
    }
    if components > n {
        return Err(Error::Validation(format!(
            "cannot fit {components} components to {n} samples"
        )));
    }
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::Validation(
            "tolerance must be positive and max_iter nonzero".to_string(),
        ));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("data contains non-finite values".to_string()));
    }

    let row = |i: usize| DVector::from_iterator(d, data.row(i).iter().cloned());
    let grand_mean = {
        let mut m = DVector::zeros(d);
        for i in 0..n {
            m += row(i);
        }
        m / n as f64
    };
    let mean_var = {
        let mut v = 0.0;
        for i in 0..n {
            v += (row(i) - &grand_mean).norm_squared();
        }
        v / (n as f64 * d as f64)
    };
    let eps = if mean_var > 1e-300 {
        COV_RIDGE_REL * mean_var
    } else {
        1e-12
    };
    let global_cov = {
        let mut c = DMatrix::zeros(d, d);
        for i in 0..n {
            let delta = row(i) - &grand_mean;
            c += &delta * delta.transpose();
        }
        c /= n as f64;
        for i in 0..d {
            c[(i, i)] += eps;
        }
        c
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (centers, assignment) = kmeans_init(data, components, &mut rng);

    // Initial parameters from the k-means partition.
    let mut priors = vec![0.0f64; components];
    let mut means = centers;
    let mut covs: Vec<DMatrix<f64>> = vec![DMatrix::zeros(d, d); components];
    let mut counts = vec![0usize; components];
    for i in 0..n {
        counts[assignment[i]] += 1;
    }
    for k in 0..components {
        priors[k] = (counts[k].max(1)) as f64;
        if counts[k] < 2 {
            covs[k] = global_cov.clone();
            continue;
        }
        let mut c = DMatrix::zeros(d, d);
        for i in 0..n {
            if assignment[i] == k {
                let delta = row(i) - &means[k];
                c += &delta * delta.transpose();
            }
        }
        c /= counts[k] as f64;
        for i in 0..d {
            c[(i, i)] += eps;
        }
        covs[k] = c;
    }
    let prior_sum: f64 = priors.iter().sum();
    priors.iter_mut().for_each(|p| *p /= prior_sum);

    let mut history: Vec<f64> = Vec::with_capacity(max_iter);
    let mut converged = false;
    let mut collapse_events = 0usize;

    for _ in 0..max_iter {
        let (pdfs, escalations) = factorize(&means, &mut covs, eps)?;
        collapse_events += escalations;
        let (resp, ll) = responsibilities(data, &priors, &pdfs);
        if let Some(&prev) = history.last() {
            if (ll - prev).abs() < tol {
                history.push(ll);
                converged = true;
                break;
            }
        }
        history.push(ll);

        // M-step.
        for k in 0..components {
            let nk: f64 = (0..n).map(|i| resp[(i, k)]).sum();
            if nk < 1e-10 * n as f64 {
                // Dead component: reseed on a random sample with broad spread.
                collapse_events += 1;
                if collapse_events > 3 * components {
                    return Err(Error::DegenerateData(
                        "mixture components keep collapsing; data cannot support this many \
                         components"
                            .to_string(),
                    ));
                }
                means[k] = row(rng.gen_range(0..n));
                covs[k] = global_cov.clone();
                priors[k] = 1.0 / n as f64;
                continue;
            }
            let mut mu = DVector::zeros(d);
            for i in 0..n {
                mu += row(i) * resp[(i, k)];
            }
            mu /= nk;
            let mut c = DMatrix::zeros(d, d);
            for i in 0..n {
                let delta = row(i) - &mu;
                c += &delta * delta.transpose() * resp[(i, k)];
            }
            c /= nk;
            for i in 0..d {
                c[(i, i)] += eps;
            }
            priors[k] = nk / n as f64;
            means[k] = mu;
            covs[k] = c;
        }
        let s: f64 = priors.iter().sum();
        priors.iter_mut().for_each(|p| *p /= s);
    }

    let iterations = history.len();
    let model = GmmModel::new(priors, means, covs)?;
    Ok((
        model,
        EmReport {
            log_likelihoods: history,
            converged,
            iterations,
        },
    ))
}

/// Conditions the mixture on time (column 0), returning the conditional mean
/// and the per-axis total variance of the remaining columns.
///
/// The variance combines each component's conditional variance with the
/// spread of the component means (law of total variance), so disagreement
/// between components shows up as increased variance.
pub fn gmr_condition(model: &GmmModel, t: f64) -> Result<(DVector<f64>, DVector<f64>)> {
    let d = model.dim;
    if d < 2 {
        return Err(Error::Validation(
            "conditioning needs at least one output dimension".to_string(),
        ));
    }
    if !t.is_finite() {
        return Err(Error::Validation(format!("query time {t} is not finite")));
    }
    let h = model.component_count();
    let out = d - 1;

    let mut log_w = vec![0.0; h];
    let mut cond_mean = vec![DVector::zeros(out); h];
    let mut cond_var = vec![DVector::zeros(out); h];
    for k in 0..h {
        let mu = &model.means[k];
        let cov = &model.covariances[k];
        let s_tt = cov[(0, 0)];
        let dt = t - mu[0];
        log_w[k] = model.priors[k].ln() - 0.5 * (LN_2PI + s_tt.ln() + dt * dt / s_tt);
        for m in 0..out {
            let s_ot = cov[(m + 1, 0)];
            cond_mean[k][m] = mu[m + 1] + s_ot * dt / s_tt;
            cond_var[k][m] = (cov[(m + 1, m + 1)] - s_ot * s_ot / s_tt).max(0.0);
        }
    }
    let lse = logsumexp(&log_w);
    let mut mean: DVector<f64> = DVector::zeros(out);
    let mut second: DVector<f64> = DVector::zeros(out);
    for k in 0..h {
        let w = (log_w[k] - lse).exp();
        for m in 0..out {
            mean[m] += w * cond_mean[k][m];
            second[m] += w * (cond_var[k][m] + cond_mean[k][m] * cond_mean[k][m]);
        }
    }
    let mut var = DVector::zeros(out);
    for m in 0..out {
        var[m] = (second[m] - mean[m] * mean[m]).max(0.0);
    }
    Ok((mean, var))
}

/// Pools an aligned dataset into joint rows `(t, px, py, pz, ux, uy, uz)`,
/// demonstrations concatenated in order.
pub fn pool_joint(dataset: &AlignedDataset) -> Result<DMatrix<f64>> {
    let tangents = to_tangent_space(&dataset.quaternions)?;
    let m = dataset.grid_len();
    let n = dataset.demo_count() * m;
    let mut data = DMatrix::zeros(n, 7);
    for (k, (pos, tan)) in dataset.positions.iter().zip(&tangents).enumerate() {
        for i in 0..m {
            let r = k * m + i;
            data[(r, 0)] = dataset.grid[i];
            data[(r, 1)] = pos[i].x;
            data[(r, 2)] = pos[i].y;
            data[(r, 3)] = pos[i].z;
            data[(r, 4)] = tan[i].x;
            data[(r, 5)] = tan[i].y;
            data[(r, 6)] = tan[i].z;
        }
    }
    Ok(data)
}

/// Pools `(t, px, py, pz)` rows.
pub fn pool_positions(dataset: &AlignedDataset) -> DMatrix<f64> {
    let m = dataset.grid_len();
    let n = dataset.demo_count() * m;
    let mut data = DMatrix::zeros(n, 4);
    for (k, pos) in dataset.positions.iter().enumerate() {
        for i in 0..m {
            let r = k * m + i;
            data[(r, 0)] = dataset.grid[i];
            data[(r, 1)] = pos[i].x;
            data[(r, 2)] = pos[i].y;
            data[(r, 3)] = pos[i].z;
        }
    }
    data
}

/// Pools `(t, ux, uy, uz)` rows from the tangent-space projection.
pub fn pool_tangents(dataset: &AlignedDataset) -> Result<DMatrix<f64>> {
    let tangents = to_tangent_space(&dataset.quaternions)?;
    let m = dataset.grid_len();
    let n = dataset.demo_count() * m;
    let mut data = DMatrix::zeros(n, 4);
    for (k, tan) in tangents.iter().enumerate() {
        for i in 0..m {
            let r = k * m + i;
            data[(r, 0)] = dataset.grid[i];
            data[(r, 1)] = tan[i].x;
            data[(r, 2)] = tan[i].y;
            data[(r, 3)] = tan[i].z;
        }
    }
    Ok(data)
}

/// Mean trajectory with per-axis standard deviations on a time grid.
/// Axis order everywhere: x, y, z translation, then x, y, z rotation.
#[derive(Debug, Clone)]
pub struct TrajectoryDistribution {
    pub grid: Vec<f64>,
    pub mean_positions: Vec<Vector3<f64>>,
    pub mean_quaternions: Vec<UnitQuaternion>,
    /// Per-axis standard deviation `(sx, sy, sz, srx, sry, srz)`; rotational
    /// entries are in tangent-space radians (half rotation angle).
    pub stddev: Vec<Vector6<f64>>,
}

/// Regresses the mean trajectory and spread from a joint 7-D mixture.
pub fn build_distribution_joint(
    model: &GmmModel,
    grid: &[f64],
) -> Result<TrajectoryDistribution> {
    if model.dim() != 7 {
        return Err(Error::Validation(format!(
            "joint regression needs a 7-dimensional mixture, got {}",
            model.dim()
        )));
    }
    let mut mean_positions = Vec::with_capacity(grid.len());
    let mut mean_quaternions = Vec::with_capacity(grid.len());
    let mut stddev = Vec::with_capacity(grid.len());
    for &t in grid {
        let (mean, var) = gmr_condition(model, t)?;
        mean_positions.push(Vector3::new(mean[0], mean[1], mean[2]));
        mean_quaternions.push(UnitQuaternion::exp(&Vector3::new(mean[3], mean[4], mean[5])));
        stddev.push(Vector6::new(
            var[0].sqrt(),
            var[1].sqrt(),
            var[2].sqrt(),
            var[3].sqrt(),
            var[4].sqrt(),
            var[5].sqrt(),
        ));
    }
    Ok(TrajectoryDistribution {
        grid: grid.to_vec(),
        mean_positions,
        mean_quaternions,
        stddev,
    })
}

/// Same as [`build_distribution_joint`] but from separate position and
/// orientation mixtures (each 4-D).
pub fn build_distribution_separate(
    position_model: &GmmModel,
    orientation_model: &GmmModel,
    grid: &[f64],
) -> Result<TrajectoryDistribution> {
    if position_model.dim() != 4 || orientation_model.dim() != 4 {
        return Err(Error::Validation(
            "separate regression needs two 4-dimensional mixtures".to_string(),
        ));
    }
    let mut mean_positions = Vec::with_capacity(grid.len());
    let mut mean_quaternions = Vec::with_capacity(grid.len());
    let mut stddev = Vec::with_capacity(grid.len());
    for &t in grid {
        let (pm, pv) = gmr_condition(position_model, t)?;
        let (om, ov) = gmr_condition(orientation_model, t)?;
        mean_positions.push(Vector3::new(pm[0], pm[1], pm[2]));
        mean_quaternions.push(UnitQuaternion::exp(&Vector3::new(om[0], om[1], om[2])));
        stddev.push(Vector6::new(
            pv[0].sqrt(),
            pv[1].sqrt(),
            pv[2].sqrt(),
            ov[0].sqrt(),
            ov[1].sqrt(),
            ov[2].sqrt(),
        ));
    }
    Ok(TrajectoryDistribution {
        grid: grid.to_vec(),
        mean_positions,
        mean_quaternions,
        stddev,
    })
}

/// Across-demonstration sample standard deviation (n-1 in the denominator) of
/// position and tangent coordinates at every grid point. Needs at least two
/// demonstrations.
pub fn empirical_stddev(dataset: &AlignedDataset) -> Result<Vec<Vector6<f64>>> {
    let k = dataset.demo_count();
    if k < 2 {
        return Err(Error::Validation(format!(
            "empirical spread needs at least 2 demonstrations, got {k}"
        )));
    }
    let tangents = to_tangent_space(&dataset.quaternions)?;
    let m = dataset.grid_len();
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let mut mean = [0.0f64; 6];
        for d in 0..k {
            let p = dataset.positions[d][i];
            let u = tangents[d][i];
            for (a, v) in [p.x, p.y, p.z, u.x, u.y, u.z].into_iter().enumerate() {
                mean[a] += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= k as f64);
        let mut var = [0.0f64; 6];
        for d in 0..k {
            let p = dataset.positions[d][i];
            let u = tangents[d][i];
            for (a, v) in [p.x, p.y, p.z, u.x, u.y, u.z].into_iter().enumerate() {
                let delta = v - mean[a];
                var[a] += delta * delta;
            }
        }
        out.push(Vector6::from_iterator(
            var.iter().map(|v| (v / (k - 1) as f64).sqrt()),
        ));
    }
    Ok(out)
}
