//! Whole-chain behavior: determinism, retained-draw invariants, and the
//! no-missing variant's indifference to career histories.

use corsa::gibbs::{run_chain, GibbsConfig, ModelVariant, PosteriorDraws};
use corsa::panel::CareerSequence;
use corsa::synthgen::{generate, GeneratorConfig};

fn desk_config(seed: u64) -> GeneratorConfig {
    GeneratorConfig {
        n_disciplines: 2,
        n_runners: 24,
        n_years: 8,
        n_groups_true: 2,
        discipline_names: None,
        pi: vec![0.5, 0.5],
        lambda1: vec![0.85, 0.4],
        lambda2: vec![0.05, 0.3],
        delta: vec![0.9, 0.5, 0.8, 0.7],
        a_hat: vec![115.0, 140.0, 250.0, 235.0],
        sigma_r: vec![3.0, 0.4, 0.4, 2.0],
        psi_r: vec![0.8, 0.0, 0.0, 0.8],
        min_obs: 2,
        base_year: 2006,
        seed,
    }
}

fn fit(
    seed: u64,
    variant: ModelVariant,
    careers_override: Option<Vec<CareerSequence>>,
) -> PosteriorDraws {
    let (panel, _, _) = generate(&desk_config(7)).unwrap();
    let careers = careers_override.unwrap_or_else(|| panel.derive_careers().unwrap());
    run_chain(
        panel,
        careers,
        variant,
        GibbsConfig {
            n_groups: 4,
            iterations: 60,
            keep: 20,
            seed,
            init_hyper: None,
        },
    )
    .unwrap()
}

fn draws_equal(a: &PosteriorDraws, b: &PosteriorDraws) -> bool {
    a.draws.len() == b.draws.len()
        && a.draws.iter().zip(b.draws.iter()).all(|(x, y)| {
            x.allocation == y.allocation
                && x.params.sigma_r == y.params.sigma_r
                && x.params.psi_r == y.params.psi_r
                && x.params.pi == y.params.pi
                && x.params.chain == y.params.chain
                && x.params.part == y.params.part
                && x.params.a_hat == y.params.a_hat
                && x.states == y.states
        })
}

#[test]
fn same_seed_reproduces_bit_identical_draws() {
    let a = fit(42, ModelVariant::Complete, None);
    let b = fit(42, ModelVariant::Complete, None);
    assert!(draws_equal(&a, &b));
    let c = fit(43, ModelVariant::Complete, None);
    assert!(!draws_equal(&a, &c));
}

#[test]
fn retained_draws_satisfy_model_invariants() {
    for variant in ModelVariant::ALL {
        let out = fit(11, variant, None);
        assert_eq!(out.draws.len(), 20);
        for draw in &out.draws {
            // Covariances positive definite.
            assert!(draw.params.sigma_r.clone().cholesky().is_some());
            assert!(draw.params.psi_r.clone().cholesky().is_some());
            // Weights on the simplex.
            let total: f64 = draw.params.pi.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert!(draw.params.pi.iter().all(|&w| w > 0.0));
            // Probabilities present exactly per variant, inside (0, 1).
            assert_eq!(draw.params.chain.is_some(), variant.uses_chain());
            assert_eq!(draw.params.part.is_some(), variant.uses_participation());
            if let Some(c) = &draw.params.chain {
                assert!(c
                    .lambda1
                    .iter()
                    .chain(c.lambda2.iter())
                    .all(|&v| v > 0.0 && v < 1.0));
            }
            if let Some(d) = &draw.params.part {
                assert!(d.raw().iter().all(|&v| v > 0.0 && v < 1.0));
            }
            // Labels in range, filled components bounded by G.
            assert!(draw.allocation.iter().all(|&g| g < out.n_groups));
            assert!(draw.g_plus() <= out.n_groups);
            // States finite.
            for a_t in &draw.states.a {
                assert!(a_t.iter().all(|v| v.is_finite()));
            }
        }
        // The trace covers every sweep.
        assert_eq!(out.trace.len(), 60);
        assert!(out.trace.iter().all(|r| r.g_plus <= out.n_groups));
    }
}

#[test]
fn no_missing_fit_ignores_career_histories() {
    // Permuting careers across runners leaves the no-missing fit
    // bit-identical: its allocation weights contain no pattern term.
    let (panel, _, _) = generate(&desk_config(7)).unwrap();
    let careers = panel.derive_careers().unwrap();
    let mut rotated = careers.clone();
    rotated.rotate_left(1);
    assert_ne!(careers, rotated);
    let a = fit(99, ModelVariant::NoMissing, Some(careers));
    let b = fit(99, ModelVariant::NoMissing, Some(rotated));
    assert!(draws_equal(&a, &b));

    // The complete fit does depend on them.
    let (panel2, _, _) = generate(&desk_config(7)).unwrap();
    let careers2 = panel2.derive_careers().unwrap();
    let mut rotated2 = careers2.clone();
    rotated2.rotate_left(1);
    let c = fit(99, ModelVariant::Complete, Some(careers2));
    // Rotated careers are inconsistent with the masks, so the complete
    // variant must reject them when counting.
    let (panel3, _, _) = generate(&desk_config(7)).unwrap();
    let err = corsa::gibbs::run_chain(
        panel3,
        rotated2,
        ModelVariant::Complete,
        GibbsConfig {
            n_groups: 4,
            iterations: 5,
            keep: 2,
            seed: 99,
            init_hyper: None,
        },
    );
    assert!(err.is_err());
    drop(c);
}

#[test]
fn failing_step_reports_iteration_and_step() {
    // A panel whose first-year values are constant still fits (p0 floor),
    // but an impossible keep/iterations combination must be rejected up
    // front.
    let (panel, _, _) = generate(&desk_config(3)).unwrap();
    let careers = panel.derive_careers().unwrap();
    let err = run_chain(
        panel,
        careers,
        ModelVariant::Complete,
        GibbsConfig {
            n_groups: 4,
            iterations: 5,
            keep: 10,
            seed: 1,
            init_hyper: None,
        },
    )
    .unwrap_err();
    assert!(err.to_string().contains("keep"), "{err}");
}
