mod common;

use common::{density, density_mixture, enumerate_cells, experiment, normalize, sim_truth};
use netspill_core::em::{
    e_step, estimate_means, fit, m_step_rates, parametric_bootstrap, FitConfig, MeanPopulation, RateBounds, RateMode,
};
use netspill_core::graph::{generate_er, ErrorRates};
use netspill_core::mixture::{
    FamilyKind, MismeasureParams, Mixture, MixtureData, ModelParams, OutcomeFamily, PosteriorRow,
};
use netspill_core::sim::heterogeneous_networks;
use netspill_core::{BetaBinomialPrior, Condition, ExperimentDesign};

fn small_fixture() -> (
    Mixture,
    ModelParams,
    netspill_core::DirectedGraph,
    Vec<bool>,
    BetaBinomialPrior,
) {
    let g = generate_er(6, 0.35, 21).unwrap();
    let t = vec![true, false, true, false, false, true];
    let y = vec![0.4, -0.2, 1.3, 0.1, 0.9, 0.7];
    let prior = BetaBinomialPrior::new(0.3, 0.2, 5).unwrap();
    let design = ExperimentDesign::new(t.clone(), 0.5, y).unwrap();
    let mix = Mixture::new(MixtureData::from_network(&design, &g, prior).unwrap(), None).unwrap();
    let params = ModelParams {
        family: OutcomeFamily::gaussian([0.0, 0.2, 0.5, 0.9], [0.1, 0.0, -0.05, 0.1], 0.3).unwrap(),
        mismeasure: MismeasureParams::new(0.2, 0.1).unwrap(),
    };
    (mix, params, g, t, prior)
}

#[test]
fn responsibilities_follow_bayes_rule() {
    let (mix, params, g, t, prior) = small_fixture();
    let y = mix.data().outcomes().to_vec();
    let es = e_step(&mix, &params).unwrap();
    let rates = ErrorRates { p: 0.2, q: 0.1 };
    for i in 0..6 {
        let mut cells = enumerate_cells(&g, &t, i, rates, &prior);
        normalize(&mut cells);
        for c in 0..4 {
            for d in 0..6 {
                cells[c][d] *= density(&params.family, y[i], c, d as f64);
            }
        }
        normalize(&mut cells);
        for c in Condition::ALL {
            for d in 0..6 {
                assert!((es.gamma[i].get(c, d) - cells[c.index()][d]).abs() < 1e-12);
            }
        }
    }
    assert!((es.log_likelihood - mix.log_likelihood(&params).unwrap()).abs() < 1e-12);
}

#[test]
fn plug_in_means_match_dense_sum() {
    let (mix, params, g, t, prior) = small_fixture();
    let rates = ErrorRates { p: 0.2, q: 0.1 };
    let mut all = [0.0; 4];
    let mut pos = [0.0; 4];
    let mut pos_mass = 0.0;
    for i in 0..6 {
        let mut cells = enumerate_cells(&g, &t, i, rates, &prior);
        normalize(&mut cells);
        for d in 0..6 {
            let w: f64 = (0..4).map(|c| cells[c][d]).sum();
            for c in Condition::ALL {
                let m = params.family.mean(c, d as f64);
                all[c.index()] += w * m / 6.0;
                if d > 0 {
                    pos[c.index()] += w * m;
                }
            }
            if d > 0 {
                pos_mass += w;
            }
        }
    }
    let got = estimate_means(&mix, &params, MeanPopulation::All).unwrap();
    let got_pos = estimate_means(&mix, &params, MeanPopulation::PositiveDegree).unwrap();
    for c in 0..4 {
        assert!((got[c] - all[c]).abs() < 1e-12);
        assert!((got_pos[c] - pos[c] / pos_mass).abs() < 1e-12);
    }
}

#[test]
fn correct_network_pushes_rates_to_the_lower_bound() {
    // Responsibilities concentrated on the observed (condition, degree).
    let nets = heterogeneous_networks(1, 80, 0.05, 0.01, 4).unwrap();
    let e = experiment(nets[0].clone(), &sim_truth(), 0.25, ErrorRates { p: 0.0, q: 0.0 }, 5);
    let mix = density_mixture(&e, Some(1e-8));
    let tau = mix.tau(&MismeasureParams::new(0.1, 0.01).unwrap()).unwrap();
    let gamma: Vec<PosteriorRow> = tau
        .rows
        .iter()
        .zip(mix.data().subjects())
        .map(|(row, s)| {
            let mut r = row.clone();
            r.unexposed
                .iter_mut()
                .chain(r.exposed.iter_mut())
                .for_each(|v| *v = 0.0);
            let d = s.observed_degree();
            let c = s.observed_condition();
            if c.indirect() {
                r.exposed[d] = 1.0;
            } else {
                r.unexposed[d] = 1.0;
            }
            r
        })
        .collect();
    let bounds = RateBounds::default();
    let step = m_step_rates(
        &mix,
        &mix.aggregate_by_key(&gamma),
        &MismeasureParams::new(0.1, 0.01).unwrap(),
        &bounds,
        &RateMode::Free,
    );
    assert!(step.params.p <= 1e-3, "{:?}", step.params);
    assert!(step.params.q <= 1e-3, "{:?}", step.params);
}

#[test]
fn converged_fit_is_a_fixed_point() {
    let nets = heterogeneous_networks(1, 120, 0.04, 0.01, 9).unwrap();
    let e = experiment(nets[0].clone(), &sim_truth(), 0.25, ErrorRates { p: 0.2, q: 0.2 }, 10);
    let mix = density_mixture(&e, Some(1e-8));
    let config = FitConfig {
        n_starts: 2,
        rel_tol: 1e-12,
        max_iters: 2000,
        ..FitConfig::default()
    };
    let r = fit(&mix, &config).unwrap();
    assert!(r.converged);
    let again = fit(
        &mix,
        &FitConfig {
            n_starts: 1,
            init: Some(r.params),
            ..config
        },
    )
    .unwrap();
    assert!(again.iterations <= 3, "{}", again.iterations);
    assert!((again.log_likelihood - r.log_likelihood).abs() < 1e-6);
    for c in 0..4 {
        assert!((again.means[c] - r.means[c]).abs() < 1e-4);
    }
}

#[test]
fn plain_and_accelerated_em_reach_the_same_optimum() {
    let nets = heterogeneous_networks(1, 100, 0.05, 0.01, 13).unwrap();
    let e = experiment(nets[0].clone(), &sim_truth(), 0.25, ErrorRates { p: 0.25, q: 0.25 }, 14);
    let mix = density_mixture(&e, Some(1e-8));
    let base = FitConfig {
        n_starts: 1,
        rel_tol: 1e-12,
        max_iters: 5000,
        ..FitConfig::default()
    };
    let fast = fit(&mix, &base).unwrap();
    let slow = fit(
        &mix,
        &FitConfig {
            accelerate: false,
            ..base
        },
    )
    .unwrap();
    assert!(fast.iterations <= slow.iterations);
    assert!((fast.log_likelihood - slow.log_likelihood).abs() < 1e-5 * slow.log_likelihood.abs());
    for w in slow.loglik_trace.windows(2) {
        assert!(w[1] >= w[0] - 1e-9);
    }
}

#[test]
fn binomial_fit_runs_on_scores() {
    let truth = OutcomeFamily::binomial([-1.0, -0.5, 0.0, 0.5], [0.1, 0.1, 0.1, 0.1], 5).unwrap();
    let nets = heterogeneous_networks(1, 120, 0.04, 0.01, 2).unwrap();
    let e = experiment(nets[0].clone(), &truth, 0.3, ErrorRates { p: 0.1, q: 0.1 }, 3);
    assert!(e
        .design
        .outcomes
        .iter()
        .all(|&y| y.fract() == 0.0 && (0.0..=5.0).contains(&y)));
    let mix = density_mixture(&e, Some(1e-8));
    let r = fit(
        &mix,
        &FitConfig {
            family: FamilyKind::Binomial { trials: 5 },
            n_starts: 2,
            ..FitConfig::default()
        },
    )
    .unwrap();
    assert!(r.means.iter().all(|m| (0.0..=5.0).contains(m)));
    assert!(r.loglik_trace.windows(2).all(|w| w[1] >= w[0] - 1e-9));
}

#[test]
fn fits_are_deterministic() {
    let nets = heterogeneous_networks(1, 80, 0.05, 0.01, 6).unwrap();
    let e = experiment(nets[0].clone(), &sim_truth(), 0.25, ErrorRates { p: 0.2, q: 0.2 }, 7);
    let mix = density_mixture(&e, Some(1e-8));
    let config = FitConfig {
        n_starts: 3,
        seed: 99,
        ..FitConfig::default()
    };
    let a = fit(&mix, &config).unwrap();
    let b = fit(&mix, &config).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.loglik_trace, b.loglik_trace);
}

fn bootstrap_fixture(n: usize) -> (Mixture, FitConfig) {
    // Mean degree 3 and balanced assignment keep every condition populated.
    let nets = heterogeneous_networks(1, n, 3.0 / (n - 1) as f64, 0.01, 17).unwrap();
    let e = experiment(nets[0].clone(), &sim_truth(), 0.5, ErrorRates { p: 0.2, q: 0.2 }, 18);
    let mix = density_mixture(&e, Some(1e-8));
    let config = FitConfig {
        n_starts: 1,
        rate_mode: RateMode::Fixed {
            rates: MismeasureParams::new(0.2, 0.2 * e.truth_graph.density()).unwrap(),
        },
        ..FitConfig::default()
    };
    (mix, config)
}

#[test]
fn bootstrap_is_deterministic_given_seed() {
    let (mix, config) = bootstrap_fixture(100);
    let r = fit(&mix, &config).unwrap();
    let a = parametric_bootstrap(&mix, &r, &config, 20, 5).unwrap();
    let b = parametric_bootstrap(&mix, &r, &config, 20, 5).unwrap();
    assert_eq!(a, b);
    let c = parametric_bootstrap(&mix, &r, &config, 20, 6).unwrap();
    assert_ne!(a.estimates, c.estimates);
    for k in 0..3 {
        assert!(a.contrasts_ci[k][0] <= a.contrasts_ci[k][1]);
    }
}

#[test]
fn bootstrap_error_shrinks_with_sample_size() {
    let se = |n: usize| {
        let (mix, config) = bootstrap_fixture(n);
        let r = fit(&mix, &config).unwrap();
        parametric_bootstrap(&mix, &r, &config, 100, 1).unwrap().means_se
    };
    let small = se(100);
    let large = se(400);
    // Four times the subjects should roughly halve the errors.
    for c in 0..4 {
        let ratio = large[c] / small[c];
        assert!((0.3..0.8).contains(&ratio), "condition {c}: {ratio}");
    }
}

#[test]
fn bootstrap_collapses_without_noise() {
    // Known exact network and negligible outcome noise: every replicate
    // reproduces the fitted means.
    let (mix, config) = bootstrap_fixture(100);
    let config = FitConfig {
        rate_mode: RateMode::Fixed {
            rates: MismeasureParams::new(0.0, 0.0).unwrap(),
        },
        ..config
    };
    let mut r = fit(&mix, &config).unwrap();
    if let OutcomeFamily::Gaussian { sigma2, .. } = &mut r.params.family {
        *sigma2 = 1e-12;
    }
    let b = parametric_bootstrap(&mix, &r, &config, 20, 3).unwrap();
    for c in 0..4 {
        assert!(b.means_se[c] < 1e-5, "{c}: {}", b.means_se[c]);
    }
}
