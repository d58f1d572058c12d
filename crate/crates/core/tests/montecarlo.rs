use rand::Rng;

use seqsamp::bvpe::BvpeConfig;
use seqsamp::engine::{final_sample_size, SchemeParams};
use seqsamp::montecarlo::*;
use seqsamp::mrpe::MrpeConfig;
use seqsamp::stats::RunningStats;

fn moments(pop: Population, draws: usize) -> RunningStats {
    let mut rng = substream(123, 0, 0);
    (0..draws).map(|_| pop.sample(&mut rng)).collect()
}

#[test]
fn normal_generator_moments() {
    let n = 1_000_000;
    let s = moments(
        Population::Normal {
            mu: 5.0,
            sigma: 2.0,
        },
        n,
    );
    let se_mean = 2.0 / (n as f64).sqrt();
    // Var(S²) = 2σ⁴/(n−1) for normal data.
    let se_var = (2.0 * 16.0 / (n as f64 - 1.0)).sqrt();
    assert!((s.mean() - 5.0).abs() < 5.0 * se_mean, "mean {}", s.mean());
    assert!(
        (s.variance().unwrap() - 4.0).abs() < 5.0 * se_var,
        "var {:?}",
        s.variance()
    );
}

#[test]
fn negexp_generator_moments() {
    let n = 1_000_000;
    let s = moments(
        Population::NegExp {
            mu: 5.0,
            sigma: 2.0,
        },
        n,
    );
    let se_mean = 2.0 / (n as f64).sqrt();
    // Exponential kurtosis is 9, so Var(S²) ≈ 8σ⁴/n.
    let se_var = (8.0 * 16.0 / n as f64).sqrt();
    assert!((s.mean() - 7.0).abs() < 5.0 * se_mean, "mean {}", s.mean());
    assert!(
        (s.variance().unwrap() - 4.0).abs() < 5.0 * se_var,
        "var {:?}",
        s.variance()
    );
    assert!(s.min() > 5.0);
}

#[test]
fn degenerate_population_stops_at_pilot() {
    for (rho, k) in [(1.0, 1), (0.8, 5), (0.5, 2)] {
        let scheme = SchemeParams::with_pilot_stages(rho, k, 20 / k).unwrap();
        let mut sc = Scenario::mrpe(5.0, 0.0, MrpeConfig::new(100.0, 0.04, scheme).unwrap());
        sc.n_star = 100.0;
        let out = simulate_mrpe_grid(&SimPlan::new(vec![sc], 50, 1)).unwrap();
        let n = final_sample_size(scheme.m(), rho) as f64;
        assert_eq!(out[0].n_bar, n);
        assert_eq!(out[0].se_n_bar, 0.0);
    }
}

#[test]
fn shared_streams_give_zero_estimator_variance() {
    let scheme = SchemeParams::with_pilot_stages(0.8, 2, 4).unwrap();
    let sc = Scenario::bvpe(5.0, 2.0, BvpeConfig::new(0.02, scheme).unwrap());
    let mut plan = SimPlan::new(vec![sc], 2, 9);
    plan.keying = StreamKeying::Shared;
    let out = simulate_bvpe_grid(&plan).unwrap();
    assert_eq!(out[0].estimator_variance, Some(0.0));
    assert_eq!(out[0].se_n_bar, 0.0);
}

#[test]
fn zero_w_stream_stops_at_pilot_stages() {
    let scheme = SchemeParams::new(0.8, 5, 21).unwrap();
    let g = simulate_generic(&GenericPlan {
        kind: GenericKind::NormalMrpe,
        n_star: 400.0,
        scheme,
        replications: 20,
        master_seed: 3,
        workers: None,
        zero_stream: true,
    })
    .unwrap();
    assert_eq!(g.t1_bar, 4.0);
    assert_eq!(g.se_kt1, 0.0);
    assert_eq!(g.se_t2, 0.0);
}

#[test]
fn summaries_do_not_depend_on_worker_count() {
    let scenarios: Vec<Scenario> = mrpe_reference_grid().into_iter().step_by(4).collect();
    let run = |workers| {
        let mut plan = SimPlan::new(scenarios.clone(), 500, 42);
        plan.workers = Some(workers);
        serde_json::to_string(&simulate_mrpe_grid(&plan).unwrap()).unwrap()
    };
    let one = run(1);
    assert_eq!(one, run(2));
    assert_eq!(one, run(7));
    let mut plan = SimPlan::new(scenarios.clone(), 500, 43);
    plan.workers = Some(2);
    assert_ne!(
        one,
        serde_json::to_string(&simulate_mrpe_grid(&plan).unwrap()).unwrap()
    );
}

#[test]
fn substreams_look_uniform() {
    // Pooled first draws of many substreams.
    let n = 200_000;
    let mean = (0..n)
        .map(|r| substream(1, 2, r).random::<f64>())
        .sum::<f64>()
        / n as f64;
    assert!((mean - 0.5).abs() < 5.0 * (1.0 / 12.0f64).sqrt() / (n as f64).sqrt());
}

#[test]
fn normal_grid_tracks_its_asymptotics() {
    let rows = simulate_mrpe_grid(&SimPlan::new(mrpe_reference_grid(), 10_000, 2021)).unwrap();
    for s in &rows {
        let r = s.second_order_ref;
        let slack = 3.0 * s.se_n_bar;
        assert!(
            s.n_bar_minus_n_star >= r - slack && s.n_bar_minus_n_star <= r + 1.0 + slack,
            "{} at n* = {}: {} outside [{r} - 3se, {r} + 1 + 3se]",
            s.label,
            s.n_star,
            s.n_bar_minus_n_star
        );
        assert!(
            (s.phi_bar - s.expected_phi).abs() <= 3.0 * s.se_phi_bar,
            "{} at n* = {}: phi {} vs {} (se {})",
            s.label,
            s.n_star,
            s.phi_bar,
            s.expected_phi,
            s.se_phi_bar
        );
        assert!(s.se_n_bar > 0.0);
        let xi = s.xi_hat.unwrap();
        let omega = s.omega_hat_over_c.unwrap();
        assert!((omega - 2.0 * s.n_star * (xi - 1.0)).abs() < 1e-8 * s.n_star);
        let (xl, ol) = (s.xi_hat_loss.unwrap(), s.omega_hat_over_c_loss.unwrap());
        assert!((ol - 2.0 * s.n_star * (xl - 1.0)).abs() < 1e-8 * s.n_star);
    }
}

#[test]
fn generic_scheme_sits_one_below_the_procedure_constant() {
    // k·t₁ counts one observation fewer than the procedure's preliminary size.
    let scheme = SchemeParams::new(1.0, 2, 21).unwrap();
    let g = simulate_generic(&GenericPlan {
        kind: GenericKind::NexpBvpe,
        n_star: 200.0,
        scheme,
        replications: 20_000,
        master_seed: 11,
        workers: None,
        zero_stream: false,
    })
    .unwrap();
    let target = g.eta_ref - 1.0;
    assert!(
        (g.kt1_minus_rho_n_star - target).abs() < 4.0 * g.se_kt1,
        "{} vs {target} (se {})",
        g.kt1_minus_rho_n_star,
        g.se_kt1
    );
}

#[test]
fn exponential_grid_tracks_its_asymptotics() {
    let rows = simulate_bvpe_grid(&SimPlan::new(bvpe_reference_grid(), 10_000, 2021)).unwrap();
    for s in &rows {
        let r = s.second_order_ref;
        let slack = 3.0 * s.se_n_bar;
        assert!(
            s.n_bar_minus_n_star >= r - slack && s.n_bar_minus_n_star <= r + 1.0 + slack,
            "{} at n* = {}: {} outside [{r} - 3se, {r} + 1 + 3se]",
            s.label,
            s.n_star,
            s.n_bar_minus_n_star
        );
        let v = s.estimator_variance.unwrap() / s.design_value.powi(2);
        if s.n_star >= 400.0 {
            assert!((0.9..=1.1).contains(&v), "{} variance ratio {v}", s.label);
        }
    }
}
