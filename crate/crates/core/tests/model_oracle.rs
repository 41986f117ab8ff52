//! Model checks against independently coded references.

use proptest::prelude::*;
use stnn::dataset::{Provenance, Relation, RelationSet, SeriesTensor};
use stnn::model::{
    decode, dynamics_step, gradients, init_model, loss, LatentState, ModelVariant, Penalties, StnnParameters,
};
use stnn::numerics::{Matrix, RngState};
use stnn::training::{grad_check, random_instance};

/// Scalar-loop evaluation of the objective, written without any matrix helpers.
#[allow(clippy::too_many_arguments)]
fn oracle_loss(
    x: &SeriesTensor,
    z: &LatentState,
    p: &StnnParameters,
    rel: &RelationSet,
    variant: ModelVariant,
    lambda: f64,
    gamma: f64,
    pairs: Option<&[usize]>,
) -> (f64, f64, f64, f64) {
    let (n, m, nl) = (x.series(), x.dims(), p.theta0.rows());
    let steps = x.steps();
    let pair_list: Vec<usize> = pairs.map_or((0..steps - 1).collect(), |p| p.to_vec());
    let recon_steps: Vec<usize> = match pairs {
        None => (0..steps).collect(),
        Some(p) => p.iter().flat_map(|&t| vec![t, t + 1]).collect(),
    };
    let mut recon = 0.0;
    for &s in &recon_steps {
        for i in 0..n {
            for j in 0..m {
                let mut pred = p.decoder_bias[j];
                for k in 0..nl {
                    pred += z.slices[s].get(i, k) * p.decoder_weight.get(k, j);
                }
                let d = pred - x.value(s, i, j);
                recon += d * d;
            }
        }
    }
    recon /= (recon_steps.len() * n * m) as f64;

    let mut dynamics = 0.0;
    for &t in &pair_list {
        let zt = &z.slices[t];
        for i in 0..n {
            for k in 0..nl {
                let mut a = 0.0;
                for q in 0..nl {
                    a += zt.get(i, q) * p.theta0.get(q, k);
                }
                for r in 0..rel.len() {
                    for j in 0..n {
                        let w = rel.matrix(r).get(i, j);
                        let mix = match variant {
                            ModelVariant::Stnn => w,
                            ModelVariant::StnnR => w * p.gammas.as_ref().unwrap()[r].get(i, j),
                            ModelVariant::StnnD => p.gammas.as_ref().unwrap()[r].get(i, j),
                            ModelVariant::StnnDynamicGate => {
                                let g = p.gate.as_ref().unwrap();
                                let mut u = g.biases[r];
                                for q in 0..nl {
                                    u += g.weights.get(r, q) * zt.get(i, q);
                                }
                                w / (1.0 + (-u).exp())
                            }
                        };
                        for q in 0..nl {
                            a += mix * zt.get(j, q) * p.thetas[r].get(q, k);
                        }
                    }
                }
                let d = z.slices[t + 1].get(i, k) - a.tanh();
                dynamics += d * d;
            }
        }
    }
    dynamics /= pair_list.len() as f64;

    let l1 = if variant.uses_gammas() {
        p.gammas.as_ref().unwrap().iter().flat_map(|g| g.as_slice().iter()).map(|v| v.abs()).sum()
    } else {
        0.0
    };
    (recon, dynamics, l1, recon + lambda * dynamics + gamma * l1)
}

#[test]
fn loss_matches_scalar_oracle_for_every_variant() {
    for (k, variant) in ModelVariant::ALL.into_iter().enumerate() {
        let inst = random_instance(4, 2, 3, 6, 2, variant, 100 + k as u64).unwrap();
        for pairs in [None, Some(&[0usize, 3, 3, 4][..])] {
            let got = loss(
                &inst.x,
                &inst.latent,
                &inst.params,
                &inst.relations,
                variant,
                Penalties { lambda: 0.7, gamma: 0.3 },
                pairs,
            )
            .unwrap();
            let (r, d, l, t) = oracle_loss(&inst.x, &inst.latent, &inst.params, &inst.relations, variant, 0.7, 0.3, pairs);
            assert!((got.reconstruction - r).abs() < 1e-12, "{variant}");
            assert!((got.dynamics - d).abs() < 1e-12, "{variant}");
            assert!((got.l1_gamma - l).abs() < 1e-12, "{variant}");
            assert!((got.total - t).abs() < 1e-12, "{variant}");
            assert!((got.total - (got.reconstruction + 0.7 * got.dynamics + 0.3 * got.l1_gamma)).abs() < 1e-12);
        }
    }
}

#[test]
fn perfect_fit_has_zero_loss_and_gradient() {
    let one = Matrix::filled(1, 1, 1.0);
    let params = StnnParameters {
        theta0: one.clone(),
        thetas: vec![],
        decoder_weight: one,
        decoder_bias: vec![0.0],
        gammas: None,
        gate: None,
    };
    let x = SeriesTensor::new(2, 1, 1, vec![0.0, 0.0]).unwrap();
    let z = LatentState::zeros(2, 1, 1);
    let rel = RelationSet::empty(1);
    let pen = Penalties { lambda: 1.0, gamma: 0.0 };
    let l = loss(&x, &z, &params, &rel, ModelVariant::Stnn, pen, None).unwrap();
    assert_eq!((l.reconstruction, l.dynamics, l.total), (0.0, 0.0, 0.0));
    let g = gradients(&x, &z, &params, &rel, ModelVariant::Stnn, pen, None).unwrap();
    assert_eq!(g.norm(), 0.0);
}

#[test]
fn trajectory_on_the_model_leaves_only_the_penalty() {
    let inst = random_instance(3, 2, 2, 5, 1, ModelVariant::StnnD, 5).unwrap();
    let mut z = inst.latent.clone();
    for t in 1..z.steps() {
        z.slices[t] = dynamics_step(&z.slices[t - 1], &inst.params, &inst.relations, ModelVariant::StnnD).unwrap();
    }
    let slices: Vec<Matrix> = z.slices.iter().map(|s| decode(s, &inst.params).unwrap()).collect();
    let x = SeriesTensor::from_slices(&slices).unwrap();
    let l = loss(&x, &z, &inst.params, &inst.relations, ModelVariant::StnnD, Penalties { lambda: 2.0, gamma: 0.1 }, None)
        .unwrap();
    assert!(l.reconstruction < 1e-28 && l.dynamics < 1e-28);
    assert!((l.total - 0.1 * l.l1_gamma).abs() < 1e-12);
}

#[test]
fn objective_argument_errors() {
    let inst = random_instance(3, 1, 2, 4, 1, ModelVariant::Stnn, 1).unwrap();
    let pen = Penalties { lambda: 1.0, gamma: 0.0 };
    let call = |pairs: Option<&[usize]>, pen: Penalties| {
        loss(&inst.x, &inst.latent, &inst.params, &inst.relations, ModelVariant::Stnn, pen, pairs)
    };
    assert!(call(Some(&[]), pen).is_err());
    assert!(call(Some(&[3]), pen).is_err());
    assert!(call(None, Penalties { lambda: -1.0, gamma: 0.0 }).is_err());
    assert!(loss(&inst.x, &inst.latent, &inst.params, &inst.relations, ModelVariant::StnnR, pen, None).is_err());
}

#[test]
fn finite_differences_agree_for_every_variant() {
    for (k, variant) in ModelVariant::ALL.into_iter().enumerate() {
        let err = grad_check(4, 2, 3, 6, 2, variant, 1.0, 0.1, 7 + k as u64).unwrap();
        assert!(err < 1e-5, "{variant}: relative error {err:e}");
    }
}

#[test]
fn refining_with_l1_is_smooth_away_from_zero() {
    let err = grad_check(4, 2, 3, 6, 2, ModelVariant::StnnR, 1.0, 0.1, 31).unwrap();
    assert!(err < 1e-5, "{err:e}");
}

#[test]
fn without_dynamics_weight_transitions_get_no_gradient() {
    for variant in ModelVariant::ALL {
        let inst = random_instance(4, 2, 3, 6, 2, variant, 77).unwrap();
        let g = gradients(
            &inst.x,
            &inst.latent,
            &inst.params,
            &inst.relations,
            variant,
            Penalties { lambda: 0.0, gamma: 0.0 },
            Some(&[1, 2]),
        )
        .unwrap();
        assert!(g.params.theta0.as_slice().iter().all(|&v| v == 0.0));
        assert!(g.params.thetas.iter().all(|t| t.as_slice().iter().all(|&v| v == 0.0)));
        assert!(grad_check(4, 2, 3, 6, 2, variant, 0.0, 0.0, 77).unwrap() < 1e-5);
    }
}

fn random_state(rng: &mut RngState, n: usize, nl: usize) -> Matrix {
    Matrix::from_fn(n, nl, |_, _| rng.normal(0.0, 1.0))
}

fn random_relations(rng: &mut RngState, n: usize, count: usize) -> RelationSet {
    RelationSet::new(
        n,
        (0..count)
            .map(|r| Relation {
                label: format!("r{r}"),
                matrix: Matrix::from_fn(n, n, |i, j| if i != j && rng.uniform() < 0.5 { rng.uniform() } else { 0.0 }),
                provenance: Provenance::Raw,
            })
            .collect(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unit_refinement_and_prior_copy_reduce_to_plain(seed in any::<u64>(), n in 1usize..6, nl in 1usize..4, count in 0usize..3) {
        let mut rng = RngState::new(seed);
        let rel = random_relations(&mut rng, n, count);
        let (_, mut params) = init_model(n, 1, nl, &rel, ModelVariant::Stnn, 2, &mut rng).unwrap();
        params.thetas.iter_mut().for_each(|t| *t = Matrix::from_fn(nl, nl, |_, _| rng.normal(0.0, 1.0)));
        let zt = random_state(&mut rng, n, nl);
        let plain = dynamics_step(&zt, &params, &rel, ModelVariant::Stnn).unwrap();

        params.gammas = Some(vec![Matrix::filled(n, n, 1.0); count]);
        let refined = dynamics_step(&zt, &params, &rel, ModelVariant::StnnR).unwrap();
        prop_assert!(plain.max_abs_diff(&refined) <= 1e-15);

        params.gammas = Some(rel.relations().iter().map(|r| r.matrix.clone()).collect());
        let discovered = dynamics_step(&zt, &params, &rel, ModelVariant::StnnD).unwrap();
        prop_assert!(plain.max_abs_diff(&discovered) <= 1e-15);

        prop_assert!(plain.as_slice().iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn no_relations_is_the_non_spatial_model(seed in any::<u64>(), n in 1usize..6, nl in 1usize..4) {
        let mut rng = RngState::new(seed);
        let rel = RelationSet::empty(n);
        let (_, params) = init_model(n, 2, nl, &rel, ModelVariant::Stnn, 2, &mut rng).unwrap();
        let zt = random_state(&mut rng, n, nl);
        let expected = zt.matmul(&params.theta0).unwrap().map_tanh();
        prop_assert!(dynamics_step(&zt, &params, &rel, ModelVariant::Stnn).unwrap().max_abs_diff(&expected) <= 1e-15);
    }

    #[test]
    fn dynamics_are_permutation_equivariant(seed in any::<u64>(), n in 2usize..7, variant_idx in 0usize..4) {
        let variant = ModelVariant::ALL[variant_idx];
        let mut rng = RngState::new(seed);
        let rel = random_relations(&mut rng, n, 2);
        let (_, mut params) = init_model(n, 1, 3, &rel, variant, 2, &mut rng).unwrap();
        if let Some(g) = &mut params.gammas {
            g.iter_mut().for_each(|m| *m = Matrix::from_fn(n, n, |_, _| rng.normal(0.0, 1.0)));
        }
        if let Some(g) = &mut params.gate {
            g.weights = Matrix::from_fn(2, 3, |_, _| rng.normal(0.0, 1.0));
        }
        let zt = random_state(&mut rng, n, 3);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.index(i + 1));
        }
        let mut permuted_params = params.clone();
        if let Some(g) = &mut permuted_params.gammas {
            g.iter_mut().for_each(|m| *m = m.permute_symmetric(&perm));
        }
        let direct = dynamics_step(&zt.permute_rows(&perm), &permuted_params, &rel.permuted(&perm), variant).unwrap();
        let after = dynamics_step(&zt, &params, &rel, variant).unwrap().permute_rows(&perm);
        prop_assert!(direct.max_abs_diff(&after) <= 1e-12);
    }
}
