//! End-to-end learning pipeline: align demonstrations, fit the mixture,
//! regress the mean trajectory and spread, derive stiffness profiles, fit the
//! movement primitive, and package everything as a bundle.

use crate::bundle::{
    config_hash, DistributionData, DmpModelData, EmSummary, GmmData, LearnSummary, ModelLayout,
    PipelineConfig, ProfileData, ReproductionErrors, SkillBundle, VarianceSource,
    BUNDLE_FORMAT_VERSION,
};
use crate::dmp::{self, DmpModel, GoalOverride, Trajectory};
use crate::error::{Error, Result};
use crate::gmm::{
    build_distribution_joint, build_distribution_separate, empirical_stddev, fit_em, pool_joint,
    pool_positions, pool_tangents, TrajectoryDistribution,
};
use crate::preprocess::{time_align, Demonstration};
use crate::stiffness::{build_profiles, StiffnessProfile};

/// Runs the whole learning pipeline. Deterministic: the same demonstrations
/// and configuration always yield an identical bundle.
pub fn learn_skill(demos: &[Demonstration], config: &PipelineConfig) -> Result<SkillBundle> {
    config.validate()?;
    let aligned = time_align(demos, config.t_scale, config.samples)?;

    let (gmm_data, mut distribution, em) = match config.model_layout {
        ModelLayout::Joint => {
            let data = pool_joint(&aligned)?;
            let (model, report) = fit_em(
                &data,
                config.components,
                config.seed,
                config.em_max_iter,
                config.em_tol,
            )?;
            let dist = build_distribution_joint(&model, &aligned.grid)?;
            let em = vec![EmSummary {
                name: "joint".to_string(),
                iterations: report.iterations,
                converged: report.converged,
                final_log_likelihood: *report.log_likelihoods.last().unwrap(),
            }];
            (
                GmmData::Joint {
                    model: (&model).into(),
                },
                dist,
                em,
            )
        }
        ModelLayout::Separate => {
            let pos_data = pool_positions(&aligned);
            let tan_data = pool_tangents(&aligned)?;
            let (pos_model, pos_report) = fit_em(
                &pos_data,
                config.components,
                config.seed,
                config.em_max_iter,
                config.em_tol,
            )?;
            let (ori_model, ori_report) = fit_em(
                &tan_data,
                config.components,
                config.seed,
                config.em_max_iter,
                config.em_tol,
            )?;
            let dist = build_distribution_separate(&pos_model, &ori_model, &aligned.grid)?;
            let em = vec![
                EmSummary {
                    name: "position".to_string(),
                    iterations: pos_report.iterations,
                    converged: pos_report.converged,
                    final_log_likelihood: *pos_report.log_likelihoods.last().unwrap(),
                },
                EmSummary {
                    name: "orientation".to_string(),
                    iterations: ori_report.iterations,
                    converged: ori_report.converged,
                    final_log_likelihood: *ori_report.log_likelihoods.last().unwrap(),
                },
            ];
            (
                GmmData::Separate {
                    position: (&pos_model).into(),
                    orientation: (&ori_model).into(),
                },
                dist,
                em,
            )
        }
    };

    if config.variance_source == VarianceSource::Empirical {
        distribution.stddev = empirical_stddev(&aligned)?;
    }

    let (profile, degenerate_axes) =
        build_profiles(&distribution, &config.bounds, config.smoothing_window)?;
    let model = dmp::fit(
        &distribution,
        &profile,
        &config.gains,
        config.basis_count,
        &config.bounds,
    )?;
    let reproduction = reproduction_errors(&model, &distribution, &profile)?;

    let mut stddev_min = [f64::INFINITY; 6];
    let mut stddev_max = [f64::NEG_INFINITY; 6];
    for row in &distribution.stddev {
        for a in 0..6 {
            stddev_min[a] = stddev_min[a].min(row[a]);
            stddev_max[a] = stddev_max[a].max(row[a]);
        }
    }
    let v6 = |v: &nalgebra::Vector6<f64>| [v[0], v[1], v[2], v[3], v[4], v[5]];

    Ok(SkillBundle {
        format_version: BUNDLE_FORMAT_VERSION,
        config: config.clone(),
        config_hash: config_hash(config),
        summary: LearnSummary {
            demo_count: demos.len(),
            em,
            stddev_min,
            stddev_max,
            degenerate_axes,
            stiffness_start: v6(&profile.start()),
            stiffness_goal: v6(&profile.goal()),
            reproduction,
        },
        gmm: gmm_data,
        distribution: DistributionData::from(&distribution),
        stiffness: ProfileData::from(&profile),
        dmp: DmpModelData::from(&model),
    })
}

/// Rolls the fitted primitive out at (at most) millisecond resolution chosen
/// so reference grid nodes land exactly on rollout rows, then scores the
/// match at those nodes.
pub fn reproduction_errors(
    model: &DmpModel,
    distribution: &TrajectoryDistribution,
    profile: &StiffnessProfile,
) -> Result<ReproductionErrors> {
    let m = distribution.grid.len();
    let step = distribution.grid[1] - distribution.grid[0];
    let substeps = (step / 1e-3).ceil().max(1.0) as usize;
    let dt = step / substeps as f64;
    let traj = dmp::rollout(model, dt, None)?;

    let mut pos_sq = 0.0;
    let mut ang_sq = 0.0;
    let mut k_sq = 0.0;
    for i in 0..m {
        let r = (i * substeps).min(traj.len() - 1);
        pos_sq += (traj.positions[r] - distribution.mean_positions[i]).norm_squared();
        let ang = traj.quaternions[r].rotation_angle_to(&distribution.mean_quaternions[i]);
        ang_sq += ang * ang;
        for a in 0..6 {
            let e = (traj.stiffness[r][a] - profile.stiffness[i][a])
                / model.bounds.axis(a).range();
            k_sq += e * e;
        }
    }
    let extent = (0..3)
        .map(|a| {
            let lo = distribution
                .mean_positions
                .iter()
                .map(|p| p[a])
                .fold(f64::INFINITY, f64::min);
            let hi = distribution
                .mean_positions
                .iter()
                .map(|p| p[a])
                .fold(f64::NEG_INFINITY, f64::max);
            hi - lo
        })
        .fold(0.0, f64::max);
    Ok(ReproductionErrors {
        position_rmse: (pos_sq / m as f64).sqrt(),
        position_extent: extent,
        orientation_rmse: (ang_sq / m as f64).sqrt(),
        stiffness_rmse_ratio: (k_sq / (6.0 * m as f64)).sqrt(),
    })
}

/// Rolls a stored skill out toward (possibly overridden) goals.
pub fn generalize(bundle: &SkillBundle, overrides: &GoalOverride, dt: f64) -> Result<Trajectory> {
    let model = bundle.model()?;
    dmp::rollout(&model, dt, Some(overrides))
}

/// Convenience wrapper returning the parsed trajectory reference of a bundle
/// at its native grid resolution.
pub fn bundle_reference(bundle: &SkillBundle) -> Result<Trajectory> {
    let distribution = bundle.distribution()?;
    let profile = bundle.profile()?;
    if distribution.grid.len() != profile.grid.len() {
        return Err(Error::Validation(
            "bundle distribution and stiffness grids disagree".to_string(),
        ));
    }
    Ok(Trajectory {
        t: distribution.grid.clone(),
        positions: distribution.mean_positions.clone(),
        quaternions: distribution.mean_quaternions.clone(),
        stiffness: profile.stiffness.clone(),
    })
}
