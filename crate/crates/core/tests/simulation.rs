use ndarray::{s, Array1};
use rayon::prelude::*;
use ted_core::linalg::inverse;
use ted_core::model::increments;
use ted_core::sim::{simulate_paths, BetaRegime, DgpSpec, OuParams};
use ted_core::truncation::{truncate, truncated_fraction, truncation_levels};

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let k = v.len() as f64;
    let m = v.iter().sum::<f64>() / k;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (k - 1.0);
    (m, var.sqrt())
}

#[test]
fn exact_linear_model_is_recovered_by_path_regression() {
    let mut spec = DgpSpec::new(5, 4000, 21).with_regime(BetaRegime::Constant).without_jumps();
    spec.ou_nu.vol = 0.0;
    spec.ou_xi.vol = 0.0;
    let sim = simulate_paths(&spec).unwrap();
    let incr = increments(&sim.panel);
    let beta = inverse(incr.dx.t().dot(&incr.dx).view()).unwrap().dot(&incr.dx.t().dot(&incr.dy));
    // Residual scale ν ≤ 0.15, covariate variance ξ ≥ 0.3, inverse AR(1)
    // correlation diagonal ≤ (1 + ρ²)/(1 − ρ²).
    let sd = 0.15 / (0.3f64 * 4000.0).sqrt() * ((1.0 + 0.64) / (1.0 - 0.64f64)).sqrt();
    for j in 0..5 {
        assert!((beta[j] - sim.true_integrated_beta[j]).abs() < 5.0 * sd, "coordinate {j}: {}", beta[j]);
    }
}

#[test]
fn active_integrated_betas_average_drift_midpoint() {
    let reps = 1000;
    let vals: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let sim = simulate_paths(&DgpSpec::new(100, 4000, 50_000 + r as u64)).unwrap();
            let t = &sim.true_integrated_beta;
            assert!(t.slice(s![5..]).iter().all(|v| *v == 0.0));
            t.slice(s![..5]).mean().unwrap()
        })
        .collect();
    let (m, sd) = mean_sd(&vals);
    let se = sd / (reps as f64).sqrt();
    // Left-Riemann mean of 1 + 0.05 t on the grid i / 4000.
    let expected = 1.0 + 0.05 * (3999.0 / 2.0) / 4000.0;
    assert!((m - expected).abs() < 3.0 * se, "mean {m}, expected {expected}, se {se}");
}

#[test]
fn volatility_factor_mean_reverts() {
    let means: Vec<f64> = (0..100)
        .into_par_iter()
        .map(|r| {
            let sim = simulate_paths(&DgpSpec::new(2, 4000, 700 + r as u64)).unwrap();
            sim.xi_path.iter().sum::<f64>() / sim.xi_path.len() as f64
        })
        .collect();
    let (m, sd) = mean_sd(&means);
    assert!((m - 0.3).abs() < 5.0 * sd, "mean {m}, sd {sd}");
}

#[test]
fn beta_path_keeps_exact_sparsity() {
    let spec = DgpSpec { record_paths: true, ..DgpSpec::new(20, 1000, 3) };
    let sim = simulate_paths(&spec).unwrap();
    let path = sim.true_beta_path.unwrap();
    for row in path.rows() {
        assert_eq!(row.iter().filter(|v| **v != 0.0).count(), spec.s_p);
        assert!(row.slice(s![spec.s_p..]).iter().all(|v| *v == 0.0));
    }
}

#[test]
fn realized_variance_tracks_integrated_variance() {
    (0..100).into_par_iter().for_each(|r| {
        let sim = simulate_paths(&DgpSpec::new(3, 4000, 900 + r as u64).without_jumps()).unwrap();
        let incr = increments(&sim.panel);
        let rv: f64 = incr.dx.column(0).iter().map(|d| d * d).sum();
        let iv: f64 = sim.xi_path[..4000].iter().sum::<f64>() / 4000.0;
        assert!((rv / iv - 1.0).abs() < 0.1, "rep {r}: rv {rv}, iv {iv}");
    });
}

#[test]
fn jump_free_panels_are_rarely_truncated() {
    (0..100).into_par_iter().for_each(|r| {
        let sim = simulate_paths(&DgpSpec::new(5, 4000, 1300 + r as u64).without_jumps()).unwrap();
        let raw = increments(&sim.panel);
        let trunc = truncate(&raw, &truncation_levels(&raw).unwrap()).unwrap();
        let f = truncated_fraction(&raw, &trunc);
        assert!(f < 0.01, "rep {r}: fraction {f}");
    });
}

#[test]
fn truncation_targets_simulated_jumps() {
    // With one covariate the jump sizes are comparable to u_n; seeds 7..27
    // are pooled so enough jumps exceed 2 u_n.
    let (mut big, mut hit) = (0, 0);
    for seed in 7..27 {
        let sim = simulate_paths(&DgpSpec::new(1, 4000, seed)).unwrap();
        let raw = increments(&sim.panel);
        let levels = truncation_levels(&raw).unwrap();
        let trunc = truncate(&raw, &levels).unwrap();
        let jump_steps: Vec<usize> = sim.y_jump_steps().map(|j| j.step).collect();

        let zeroed: Vec<usize> = (0..raw.n()).filter(|&i| raw.dy[i] != 0.0 && trunc.dy[i] == 0.0).collect();
        for &i in &zeroed {
            assert!(jump_steps.contains(&i) || raw.dy[i].abs() > levels.u_n, "seed {seed} step {i}");
        }
        // Zeroed steps without a jump are large diffusion moves, which are rare.
        let unexplained = zeroed.iter().filter(|i| !jump_steps.contains(i)).count();
        assert!(unexplained * 100 < raw.n(), "seed {seed}: {unexplained} zeroed steps have no jump");

        for j in sim.y_jump_steps().filter(|j| j.size.abs() > 2.0 * levels.u_n) {
            big += 1;
            hit += usize::from(trunc.dy[j.step] == 0.0);
        }
    }
    assert!(big >= 10, "only {big} large jumps");
    assert!(hit * 10 >= big * 9, "{hit} of {big} large jumps zeroed");
}

#[test]
fn zero_size_jumps_leave_paths_unchanged() {
    let base = DgpSpec::new(4, 500, 5);
    let a = simulate_paths(&DgpSpec { jump_sd: 0.0, ..base.clone() }).unwrap();
    let b = simulate_paths(&base.without_jumps()).unwrap();
    assert_eq!(a.panel, b.panel);
}

#[test]
fn constant_regime_truth_is_the_constant() {
    let spec = DgpSpec::new(10, 800, 2).with_regime(BetaRegime::Constant);
    let sim = simulate_paths(&spec).unwrap();
    let mut expected = Array1::zeros(10);
    expected.slice_mut(s![..spec.s_p]).fill(1.0);
    assert_eq!(sim.true_integrated_beta, expected);
}

#[test]
fn flat_ou_parameters_give_deterministic_factor() {
    let spec = DgpSpec { ou_xi: OuParams::new(5.0, 0.3, 0.0, 0.3), ..DgpSpec::new(2, 100, 1) };
    let sim = simulate_paths(&spec).unwrap();
    assert!(sim.xi_path.iter().all(|v| (*v - 0.3).abs() < 1e-15));
}
