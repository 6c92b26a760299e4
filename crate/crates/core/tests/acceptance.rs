//! End-to-end checks of the library's externally guaranteed properties.
//!
//! Each numbered criterion below prints exactly one PASS/FAIL line (run with
//! `--nocapture` to see them on success); the test fails if any criterion
//! fails, after all lines have printed.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use nalgebra::{DMatrix, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use impdmp_core::bundle::{PipelineConfig, VarianceSource};
use impdmp_core::dmp::{rollout, BasisSet, DmpModel, Gains, GoalOverride, Trajectory};
use impdmp_core::gmm::{fit_em, COV_RIDGE_REL};
use impdmp_core::pipeline::{bundle_reference, learn_skill};
use impdmp_core::quaternion::UnitQuaternion;
use impdmp_core::stiffness::{stiffness_indicator, AxisBounds, StiffnessBounds};
use impdmp_core::synthetic::{pouring_demos, SyntheticConfig, VarianceShape};
use impdmp_core::vic::{simulate, Disturbance, Pose, SimBody, SimOptions, SimTrace, Wrench};

/// Early-return failure with a formatted reason.
macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !($cond) {
            return Err(format!($($arg)+));
        }
    };
}

#[test]
fn acceptance_criteria() {
    type Criterion = (&'static str, fn() -> Result<String, String>);
    let criteria: [Criterion; 9] = [
        ("1. quaternion map round-trips", c1_map_inverses),
        ("2. stiffness indicator endpoints", c2_indicator_endpoints),
        ("3. EM monotonicity and closed form", c3_em_correctness),
        ("4. imitation fidelity", c4_imitation_fidelity),
        ("5. goal generalization", c5_goal_generalization),
        ("6. stiffness generalization", c6_stiffness_generalization),
        ("7. disturbance-rejection ordering", c7_disturbance_ordering),
        ("8. zero-forcing convergence", c8_zero_forcing),
        ("9. byte determinism", c9_determinism),
    ];

    let mut failures = Vec::new();
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let text = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".to_string());
            Err(format!("panic: {text}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {name} — {detail}"),
            Err(reason) => {
                println!("FAIL {name} — {reason}");
                failures.push(name);
            }
        }
    }
    assert!(failures.is_empty(), "criteria failed: {failures:?}");
}

/// The dataset and learner settings shared by the fidelity and
/// generalization criteria: 8 pouring-style demonstrations aligned to 11 s,
/// 500 grid samples, 6 mixture components, 30 basis functions. Per-node
/// sample spread feeds the stiffness map (the mixture's blended variance has
/// component-boundary bumps that are judged by eye, not tracked to 1%).
fn standard_config() -> PipelineConfig {
    PipelineConfig {
        t_scale: 11.0,
        samples: 500,
        components: 6,
        basis_count: 30,
        variance_source: VarianceSource::Empirical,
        ..PipelineConfig::default()
    }
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-12);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx.sqrt() * syy.sqrt()).max(1e-300)
}

/// 10 000 tangent vectors with norm below pi - 0.01 and 10 000 unit
/// quaternions with w > 0.01 must round-trip through the exponential and
/// logarithmic maps with error below 1e-9, in under a second.
fn c1_map_inverses() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(42);

    let mut max_tangent = 0.0f64;
    for _ in 0..10_000 {
        let dir = loop {
            let v = Vector3::new(gauss(&mut rng), gauss(&mut rng), gauss(&mut rng));
            if v.norm() > 1e-6 {
                break v.normalize();
            }
        };
        let radius = rng.gen::<f64>() * (std::f64::consts::PI - 0.01);
        let u = dir * radius;
        let back = UnitQuaternion::exp(&u)
            .log()
            .map_err(|e| format!("log failed for |u| = {radius}: {e}"))?;
        max_tangent = max_tangent.max((back - u).norm());
    }
    ensure!(
        max_tangent < 1e-9,
        "tangent round-trip error {max_tangent:.3e} is not below 1e-9"
    );

    let mut max_orientation = 0.0f64;
    let mut drawn = 0usize;
    while drawn < 10_000 {
        let q = match UnitQuaternion::new(
            gauss(&mut rng),
            gauss(&mut rng),
            gauss(&mut rng),
            gauss(&mut rng),
        ) {
            Ok(q) if q.w.abs() > 0.01 => {
                if q.w < 0.0 {
                    -q
                } else {
                    q
                }
            }
            _ => continue,
        };
        drawn += 1;
        let u = q.log().map_err(|e| format!("log failed: {e}"))?;
        let back = UnitQuaternion::exp(&u);
        max_orientation = max_orientation.max(q.rotation_angle_to(&back));
    }
    ensure!(
        max_orientation < 1e-9,
        "orientation round-trip error {max_orientation:.3e} is not below 1e-9"
    );

    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 1.0, "round-trips took {secs:.2} s (limit 1 s)");
    Ok(format!(
        "max tangent error {max_tangent:.1e}, max orientation error {max_orientation:.1e}, {secs:.2} s"
    ))
}

/// On 1000 random spread series the mapped stiffness must hit k_max exactly
/// at the smallest spread and k_min at the largest (to 1e-9), with the
/// default bound pairs 200/550 N/m and 10/20 N·m/rad, and must never order
/// against the spread (larger spread, smaller stiffness).
fn c2_indicator_endpoints() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let translational = AxisBounds::new(200.0, 550.0).map_err(|e| e.to_string())?;
    let rotational = AxisBounds::new(10.0, 20.0).map_err(|e| e.to_string())?;

    for series_idx in 0..1000usize {
        let n = 20 + series_idx % 180;
        let scale = 10f64.powf(rng.gen::<f64>() * 4.0 - 2.0);
        let spread: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * scale).collect();
        let bounds = if series_idx % 2 == 0 {
            &translational
        } else {
            &rotational
        };
        let k = stiffness_indicator(&spread, bounds)
            .map_err(|e| format!("series {series_idx}: {e}"))?;

        let argmin = (0..n).min_by(|&a, &b| spread[a].total_cmp(&spread[b])).unwrap();
        let argmax = (0..n).max_by(|&a, &b| spread[a].total_cmp(&spread[b])).unwrap();
        ensure!(
            (k[argmin] - bounds.max).abs() <= 1e-9,
            "series {series_idx}: stiffness at the calmest sample is {} not {}",
            k[argmin],
            bounds.max
        );
        ensure!(
            (k[argmax] - bounds.min).abs() <= 1e-9,
            "series {series_idx}: stiffness at the wildest sample is {} not {}",
            k[argmax],
            bounds.min
        );

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| spread[a].total_cmp(&spread[b]));
        for pair in order.windows(2) {
            ensure!(
                k[pair[0]] >= k[pair[1]] - 1e-9,
                "series {series_idx}: stiffness rises with spread ({} -> {})",
                k[pair[0]],
                k[pair[1]]
            );
        }
    }
    Ok("1000 series: endpoints exact to 1e-9, ordering never inverted".to_string())
}

/// Mixture fitting must never decrease the per-sample log-likelihood across
/// iterations on 100 random clustered datasets, and a single-component fit
/// must equal the closed-form sample statistics (with the documented
/// diagonal regularizer) to 1e-9.
fn c3_em_correctness() -> Result<String, String> {
    let mut worst_drop = 0.0f64;
    for t in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + t);
        let dim = 2 + (t as usize) % 3;
        let components = 1 + (t as usize) % 4;
        let n = 80 + (t as usize * 13) % 160;
        let centers: Vec<Vec<f64>> = (0..components)
            .map(|_| (0..dim).map(|_| rng.gen::<f64>() * 6.0 - 3.0).collect())
            .collect();
        let scales: Vec<f64> = (0..components).map(|_| 0.2 + rng.gen::<f64>()).collect();
        let mut data = DMatrix::zeros(n, dim);
        for i in 0..n {
            let c = i % components;
            for j in 0..dim {
                data[(i, j)] = centers[c][j] + scales[c] * gauss(&mut rng);
            }
        }
        let (_, report) = fit_em(&data, components, t, 80, 1e-12)
            .map_err(|e| format!("dataset {t} ({n}x{dim}, {components} comps): {e}"))?;
        for w in report.log_likelihoods.windows(2) {
            let drop = w[0] - w[1];
            worst_drop = worst_drop.max(drop);
            ensure!(
                drop <= 1e-9,
                "dataset {t}: log-likelihood fell by {drop:.3e} in one iteration"
            );
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let (n, dim) = (300usize, 3usize);
    let mut data = DMatrix::zeros(n, dim);
    for i in 0..n {
        for j in 0..dim {
            data[(i, j)] = gauss(&mut rng) * (1.0 + j as f64) + j as f64;
        }
    }
    let (model, _) = fit_em(&data, 1, 0, 50, 1e-10).map_err(|e| e.to_string())?;
    ensure!(
        (model.priors()[0] - 1.0).abs() <= 1e-12,
        "single-component prior is {}",
        model.priors()[0]
    );
    let mut mean = vec![0.0f64; dim];
    for i in 0..n {
        for j in 0..dim {
            mean[j] += data[(i, j)];
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = vec![vec![0.0f64; dim]; dim];
    for i in 0..n {
        for a in 0..dim {
            for b in 0..dim {
                cov[a][b] += (data[(i, a)] - mean[a]) * (data[(i, b)] - mean[b]);
            }
        }
    }
    let mut total_var = 0.0;
    for a in 0..dim {
        for row in cov.iter_mut() {
            row[a] /= n as f64;
        }
    }
    for a in 0..dim {
        total_var += cov[a][a];
    }
    let eps = COV_RIDGE_REL * total_var / dim as f64;
    let mut worst_stat = 0.0f64;
    for j in 0..dim {
        worst_stat = worst_stat.max((model.means()[0][j] - mean[j]).abs());
    }
    for a in 0..dim {
        for b in 0..dim {
            let expected = cov[a][b] + if a == b { eps } else { 0.0 };
            worst_stat = worst_stat.max((model.covariances()[0][(a, b)] - expected).abs());
        }
    }
    ensure!(
        worst_stat <= 1e-9,
        "single-component stats deviate from closed form by {worst_stat:.3e}"
    );
    Ok(format!(
        "100 datasets monotone (worst one-step drop {worst_drop:.1e}), closed-form match to {worst_stat:.1e}"
    ))
}

/// Learning from the 8-demo pouring set (11 s, 500 samples, 6 components,
/// 30 bases) must reproduce its own reference: position RMSE under 1% of
/// the workspace extent, orientation RMSE under 0.02 rad, stiffness RMSE
/// under 1% of each axis' bound range, all inside 30 s.
fn c4_imitation_fidelity() -> Result<String, String> {
    let start = Instant::now();
    let demos = pouring_demos(&SyntheticConfig::default()).map_err(|e| e.to_string())?;
    ensure!(demos.len() == 8, "expected 8 demos, got {}", demos.len());
    let bundle = learn_skill(&demos, &standard_config()).map_err(|e| e.to_string())?;
    let r = &bundle.summary.reproduction;
    ensure!(
        r.position_rmse < 0.01 * r.position_extent,
        "position RMSE {:.4} m is not below 1% of the {:.3} m extent",
        r.position_rmse,
        r.position_extent
    );
    ensure!(
        r.orientation_rmse < 0.02,
        "orientation RMSE {:.4} rad is not below 0.02 rad",
        r.orientation_rmse
    );
    ensure!(
        r.stiffness_rmse_ratio < 0.01,
        "stiffness RMSE is {:.3}% of the bound ranges, not below 1%",
        100.0 * r.stiffness_rmse_ratio
    );
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 30.0, "learning took {secs:.1} s (limit 30 s)");
    Ok(format!(
        "position {:.2}% of extent, orientation {:.4} rad, stiffness {:.2}% of range, {:.1} s",
        100.0 * r.position_rmse / r.position_extent,
        r.orientation_rmse,
        100.0 * r.stiffness_rmse_ratio,
        secs
    ))
}

/// Moving the position goal by up to 0.15 m per axis (three new targets)
/// must keep every axis' time-normalized shape within 2% and land within
/// 1e-3 m of each new goal.
fn c5_goal_generalization() -> Result<String, String> {
    let demos = pouring_demos(&SyntheticConfig::default()).map_err(|e| e.to_string())?;
    let bundle = learn_skill(&demos, &standard_config()).map_err(|e| e.to_string())?;
    let model = bundle.model().map_err(|e| e.to_string())?;
    let base = rollout(&model, 1e-3, None).map_err(|e| e.to_string())?;

    let shifts = [
        Vector3::new(0.15, 0.0, 0.0),
        Vector3::new(0.0, 0.15, -0.15),
        Vector3::new(0.0, -0.15, -0.15),
    ];
    let mut worst_shape = 0.0f64;
    let mut worst_end = 0.0f64;
    for shift in shifts {
        let goal = model.goal_position + shift;
        let over = GoalOverride {
            position: Some(goal),
            ..Default::default()
        };
        let moved = rollout(&model, 1e-3, Some(&over)).map_err(|e| e.to_string())?;
        ensure!(moved.len() == base.len(), "row counts differ between rollouts");
        for a in 0..3 {
            let span_base = model.goal_position[a] - model.start_position[a];
            let span_new = goal[a] - model.start_position[a];
            ensure!(
                span_base.abs() > 0.02 && span_new.abs() > 0.02,
                "axis {a} span too small for a normalized comparison"
            );
            for i in 0..base.len() {
                let cb = (base.positions[i][a] - model.start_position[a]) / span_base;
                let cm = (moved.positions[i][a] - model.start_position[a]) / span_new;
                worst_shape = worst_shape.max((cb - cm).abs());
            }
        }
        worst_end = worst_end.max((moved.positions.last().unwrap() - goal).norm());
    }
    ensure!(
        worst_shape <= 0.02,
        "normalized shapes diverge by {worst_shape:.4} (limit 0.02)"
    );
    ensure!(
        worst_end < 1e-3,
        "a rollout misses its shifted goal by {worst_end:.2e} m"
    );
    Ok(format!(
        "3 shifted goals: worst shape deviation {worst_shape:.1e}, worst endpoint miss {worst_end:.1e} m"
    ))
}

/// Scaling the stiffness goal by 1.5 (the dipped-variance dataset leaves
/// room inside the bounds) must reach the scaled goal while keeping each
/// axis' profile shape correlated above 0.99 with the learned reference.
fn c6_stiffness_generalization() -> Result<String, String> {
    let demos = pouring_demos(&SyntheticConfig {
        shape: VarianceShape::Dipped,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    // Goal scaling multiplies the encoder's terminal residual by the span
    // ratio (about 4.6x here), so this scenario gets twice the basis
    // resolution to land within a thousandth of the bound range.
    let config = PipelineConfig {
        basis_count: 60,
        ..standard_config()
    };
    let bundle = learn_skill(&demos, &config).map_err(|e| e.to_string())?;
    let model = bundle.model().map_err(|e| e.to_string())?;
    let profile = bundle.profile().map_err(|e| e.to_string())?;

    let scaled_goal = model.goal_stiffness * 1.5;
    for a in 0..6 {
        let axis = model.bounds.axis(a);
        ensure!(
            axis.contains(scaled_goal[a]),
            "scaled goal {:.1} leaves the bounds on axis {a} (dataset precondition)",
            scaled_goal[a]
        );
        ensure!(
            (model.goal_stiffness[a] - model.start_stiffness[a]).abs() > 0.05 * axis.range(),
            "axis {a} has no stiffness span to correlate against"
        );
    }

    let step = profile.grid[1] - profile.grid[0];
    let substeps = (step / 1e-3).ceil().max(1.0) as usize;
    let dt = step / substeps as f64;
    let over = GoalOverride {
        stiffness: Some(scaled_goal),
        ..Default::default()
    };
    let traj = rollout(&model, dt, Some(&over)).map_err(|e| e.to_string())?;

    let m = profile.grid.len();
    ensure!(
        traj.stiffness.len() > (m - 1) * substeps,
        "rollout too short to sample at the reference nodes"
    );
    let mut min_corr = 1.0f64;
    for a in 0..6 {
        let reference: Vec<f64> = (0..m).map(|i| profile.stiffness[i][a]).collect();
        let scaled: Vec<f64> = (0..m).map(|i| traj.stiffness[i * substeps][a]).collect();
        min_corr = min_corr.min(pearson(&reference, &scaled));
    }
    ensure!(
        min_corr > 0.99,
        "profile shape correlation dropped to {min_corr:.4} (limit 0.99)"
    );

    let end = traj.stiffness.last().unwrap();
    let mut worst_end = 0.0f64;
    for a in 0..6 {
        worst_end = worst_end.max((end[a] - scaled_goal[a]).abs() / model.bounds.axis(a).range());
    }
    ensure!(
        worst_end < 1e-3,
        "endpoint misses the scaled stiffness goal by {worst_end:.2e} of the bound range"
    );
    Ok(format!(
        "1.5x goal inside bounds, min shape correlation {min_corr:.5}, endpoint within {worst_end:.1e} of range"
    ))
}

/// Under a constant 5 N side force from 1 s to 10 s of an 11 s hold, mean
/// tracking error must order soft > variable >= stiff, and the variable run
/// must match whichever constant mode it is sitting in to 15% inside the
/// early (200 N/m) and late (550 N/m) windows. Each run under 10 s.
fn c7_disturbance_ordering() -> Result<String, String> {
    let step = 0.01;
    let samples = 1101usize;
    let grid: Vec<f64> = (0..samples).map(|i| i as f64 * step).collect();
    let schedule = |t: f64| -> f64 {
        if t <= 5.0 {
            200.0
        } else if t >= 6.0 {
            550.0
        } else {
            let s = t - 5.0;
            200.0 + 350.0 * (s * s * (3.0 - 2.0 * s))
        }
    };
    let hold = |k_of_t: &dyn Fn(f64) -> f64| -> Trajectory {
        Trajectory {
            t: grid.clone(),
            positions: vec![Vector3::zeros(); samples],
            quaternions: vec![UnitQuaternion::IDENTITY; samples],
            stiffness: grid
                .iter()
                .map(|&t| {
                    let k = k_of_t(t);
                    Vector6::new(k, k, k, 15.0, 15.0, 15.0)
                })
                .collect(),
        }
    };
    let soft = hold(&|_| 200.0);
    let stiff = hold(&|_| 550.0);
    let variable = hold(&schedule);

    let disturbance = Disturbance {
        t_on: 1.0,
        t_off: 10.0,
        wrench: Wrench {
            force: Vector3::new(5.0, 0.0, 0.0),
            torque: Vector3::zeros(),
        },
    };
    let body = SimBody::at_rest(Pose {
        position: Vector3::zeros(),
        orientation: UnitQuaternion::IDENTITY,
    });
    let options = SimOptions::default();

    let run = |reference: &Trajectory| -> Result<SimTrace, String> {
        let t0 = Instant::now();
        let trace =
            simulate(reference, &body, std::slice::from_ref(&disturbance), &options)
                .map_err(|e| e.to_string())?;
        let secs = t0.elapsed().as_secs_f64();
        if secs >= 10.0 {
            return Err(format!("one simulation took {secs:.1} s (limit 10 s)"));
        }
        Ok(trace)
    };
    let trace_soft = run(&soft)?;
    let trace_stiff = run(&stiff)?;
    let trace_variable = run(&variable)?;

    let window_error = |trace: &SimTrace, lo: f64, hi: f64| trace.mean_abs_error_between(lo, hi)[0];
    let e_soft = window_error(&trace_soft, 1.0, 10.0);
    let e_variable = window_error(&trace_variable, 1.0, 10.0);
    let e_stiff = window_error(&trace_stiff, 1.0, 10.0);
    ensure!(
        e_soft > e_variable && e_variable >= e_stiff,
        "error ordering violated: 200 N/m {e_soft:.5}, variable {e_variable:.5}, 550 N/m {e_stiff:.5}"
    );

    let early_variable = window_error(&trace_variable, 1.5, 4.5);
    let early_soft = window_error(&trace_soft, 1.5, 4.5);
    ensure!(
        (early_variable - early_soft).abs() <= 0.15 * early_soft,
        "early window: variable {early_variable:.5} vs soft mode {early_soft:.5} beyond 15%"
    );
    let late_variable = window_error(&trace_variable, 6.5, 9.5);
    let late_stiff = window_error(&trace_stiff, 6.5, 9.5);
    ensure!(
        (late_variable - late_stiff).abs() <= 0.15 * late_stiff,
        "late window: variable {late_variable:.5} vs stiff mode {late_stiff:.5} beyond 15%"
    );
    Ok(format!(
        "window means: 200 N/m {:.1} mm > variable {:.1} mm >= 550 N/m {:.1} mm; mode windows match within 15%",
        1e3 * e_soft,
        1e3 * e_variable,
        1e3 * e_stiff
    ))
}

/// With every forcing weight at zero, all three transformation systems must
/// settle on their goals without ever overshooting by more than 0.1% of
/// their spans.
fn c8_zero_forcing() -> Result<String, String> {
    let s = 5;
    let wide = AxisBounds::new(1.0, 1e4).map_err(|e| e.to_string())?;
    let model = DmpModel {
        gains: Gains::default(),
        tau: 1.5,
        basis: BasisSet::uniform_in_time(s, 6.0, 0.8).map_err(|e| e.to_string())?,
        weights_position: vec![vec![0.0; s]; 3],
        weights_orientation: vec![vec![0.0; s]; 3],
        weights_stiffness: vec![vec![0.0; s]; 6],
        start_position: Vector3::zeros(),
        goal_position: Vector3::new(0.3, -0.2, 0.5),
        start_orientation: UnitQuaternion::IDENTITY,
        goal_orientation: UnitQuaternion::exp(&Vector3::new(0.1, 0.55, -0.2)),
        start_stiffness: Vector6::repeat(100.0),
        goal_stiffness: Vector6::new(500.0, 400.0, 300.0, 150.0, 220.0, 180.0),
        start_rate_position: Vector3::zeros(),
        start_rate_orientation: Vector3::zeros(),
        start_rate_stiffness: Vector6::zeros(),
        bounds: StiffnessBounds {
            translational: wide,
            rotational: wide,
        },
    };
    let traj = rollout(&model, 1e-3, None).map_err(|e| e.to_string())?;

    let mut worst_overshoot = 0.0f64;
    for a in 0..3 {
        let span = model.goal_position[a] - model.start_position[a];
        for p in &traj.positions {
            let past = (p[a] - model.goal_position[a]) * span.signum() / span.abs();
            worst_overshoot = worst_overshoot.max(past);
        }
    }
    for a in 0..6 {
        let span = model.goal_stiffness[a] - model.start_stiffness[a];
        for k in &traj.stiffness {
            let past = (k[a] - model.goal_stiffness[a]) * span.signum() / span.abs();
            worst_overshoot = worst_overshoot.max(past);
        }
    }
    let e0 = (model.goal_orientation * model.start_orientation.conjugate())
        .log()
        .map_err(|e| e.to_string())?
        * 2.0;
    let direction = e0.normalize();
    for q in &traj.quaternions {
        let e = (model.goal_orientation * q.conjugate())
            .log()
            .map_err(|e| e.to_string())?
            * 2.0;
        worst_overshoot = worst_overshoot.max(-e.dot(&direction) / e0.norm());
    }
    ensure!(
        worst_overshoot <= 1e-3,
        "a system overshoots its goal by {:.3}% of the span",
        100.0 * worst_overshoot
    );

    let end_pos = (traj.positions.last().unwrap() - model.goal_position).norm();
    let end_ang = traj
        .quaternions
        .last()
        .unwrap()
        .rotation_angle_to(&model.goal_orientation);
    let end_k = (traj.stiffness.last().unwrap() - model.goal_stiffness).abs().max();
    ensure!(
        end_pos < 1e-3 && end_ang < 1e-3 && end_k < 1.0,
        "systems did not settle (pos {end_pos:.1e} m, ang {end_ang:.1e} rad, stiffness {end_k:.1e})"
    );
    Ok(format!(
        "worst overshoot {:.4}% of span; settled to {end_pos:.1e} m / {end_ang:.1e} rad",
        100.0 * worst_overshoot.max(0.0)
    ))
}

/// The same demonstrations, settings, and seed must produce byte-identical
/// bundles, and repeated simulations of the learned reference must produce
/// bit-identical traces.
fn c9_determinism() -> Result<String, String> {
    let demos = pouring_demos(&SyntheticConfig::default()).map_err(|e| e.to_string())?;
    let config = standard_config();
    let first = learn_skill(&demos, &config).map_err(|e| e.to_string())?;
    let second = learn_skill(&demos, &config).map_err(|e| e.to_string())?;
    let bytes_first = serde_json::to_vec(&first).map_err(|e| e.to_string())?;
    let bytes_second = serde_json::to_vec(&second).map_err(|e| e.to_string())?;
    ensure!(
        bytes_first == bytes_second,
        "two identical learn runs serialized differently"
    );

    let reference = bundle_reference(&first).map_err(|e| e.to_string())?;
    let step = reference.t[1] - reference.t[0];
    let dt = step / (step / 1e-3).round().max(1.0);
    let body = SimBody::at_rest(Pose {
        position: reference.positions[0],
        orientation: reference.quaternions[0],
    });
    let options = SimOptions {
        dt,
        ..Default::default()
    };
    let disturbance = Disturbance {
        t_on: 2.0,
        t_off: 6.0,
        wrench: Wrench {
            force: Vector3::new(3.0, -2.0, 1.0),
            torque: Vector3::new(0.0, 0.1, 0.0),
        },
    };
    let trace_a = simulate(&reference, &body, std::slice::from_ref(&disturbance), &options)
        .map_err(|e| e.to_string())?;
    let trace_b = simulate(&reference, &body, std::slice::from_ref(&disturbance), &options)
        .map_err(|e| e.to_string())?;
    ensure!(trace_a.t.len() == trace_b.t.len(), "trace lengths differ");
    for i in 0..trace_a.t.len() {
        let same = trace_a.t[i].to_bits() == trace_b.t[i].to_bits()
            && trace_a.position_error[i] == trace_b.position_error[i]
            && trace_a.orientation_error[i] == trace_b.orientation_error[i]
            && trace_a.wrench[i].force == trace_b.wrench[i].force
            && trace_a.wrench[i].torque == trace_b.wrench[i].torque
            && trace_a.stiffness[i] == trace_b.stiffness[i]
            && trace_a.body_positions[i] == trace_b.body_positions[i];
        ensure!(same, "trace rows diverge at index {i}");
    }
    Ok(format!(
        "bundles identical ({} bytes), traces identical ({} rows)",
        bytes_first.len(),
        trace_a.t.len()
    ))
}
