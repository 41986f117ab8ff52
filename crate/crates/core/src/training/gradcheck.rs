use crate::dataset::{Provenance, Relation, RelationSet, SeriesTensor};
use crate::error::Result;
use crate::model::{
    gradients, loss, DynamicGateParams, LatentState, ModelVariant, Penalties, StnnParameters,
};
use crate::numerics::{Matrix, RngState};

use super::{gradient_blocks, sample_pairs, state_blocks_mut};

const STEP: f64 = 1e-6;

/// A random, well-conditioned problem for derivative checks.
#[derive(Debug, Clone)]
pub struct GradCheckInstance {
    pub x: SeriesTensor,
    pub relations: RelationSet,
    pub latent: LatentState,
    pub params: StnnParameters,
    pub variant: ModelVariant,
}

/// Random instance with O(1) entries. Relation weights are kept at least 0.2 away from zero so
/// that the L1 term is differentiable at the checked point.
pub fn random_instance(
    series: usize,
    dims: usize,
    latent_dim: usize,
    steps: usize,
    relation_count: usize,
    variant: ModelVariant,
    seed: u64,
) -> Result<GradCheckInstance> {
    let mut rng = RngState::new(seed);
    let x = SeriesTensor::new(
        steps,
        series,
        dims,
        (0..steps * series * dims).map(|_| rng.uniform()).collect(),
    )?;
    let relations = RelationSet::new(
        series,
        (0..relation_count)
            .map(|r| Relation {
                label: format!("r{r}"),
                matrix: Matrix::from_fn(series, series, |i, j| {
                    if i != j && rng.uniform() < 0.6 {
                        0.2 + rng.uniform()
                    } else {
                        0.0
                    }
                }),
                provenance: Provenance::Raw,
            })
            .collect(),
    )?;
    let mut normal = |rows: usize, cols: usize, std: f64| Matrix::from_fn(rows, cols, |_, _| rng.normal(0.0, std));
    let latent = LatentState {
        slices: (0..steps).map(|_| normal(series, latent_dim, 0.5)).collect(),
    };
    let theta0 = normal(latent_dim, latent_dim, 0.5);
    let thetas = (0..relation_count).map(|_| normal(latent_dim, latent_dim, 0.5)).collect();
    let decoder_weight = normal(latent_dim, dims, 0.5);
    let decoder_bias = normal(1, dims, 0.1).into_vec();
    let gammas = variant.uses_gammas().then(|| {
        (0..relation_count)
            .map(|_| normal(series, series, 0.5).map(|v| v.signum() * (0.2 + v.abs())))
            .collect()
    });
    let gate = variant.uses_gate().then(|| DynamicGateParams {
        weights: normal(relation_count, latent_dim, 0.5),
        biases: normal(1, relation_count, 0.5).into_vec(),
    });
    let params = StnnParameters {
        theta0,
        thetas,
        decoder_weight,
        decoder_bias,
        gammas,
        gate,
    };
    Ok(GradCheckInstance {
        x,
        relations,
        latent,
        params,
        variant,
    })
}

/// Largest relative discrepancy `|a − f| / max(1e-8, |a| + |f|)` between analytic gradients
/// `a` and central differences `f` (step 1e-6), over every latent and parameter entry.
/// Both the full objective and a sampled pair set are checked.
#[allow(clippy::too_many_arguments)]
pub fn grad_check(
    series: usize,
    dims: usize,
    latent_dim: usize,
    steps: usize,
    relation_count: usize,
    variant: ModelVariant,
    lambda: f64,
    gamma: f64,
    seed: u64,
) -> Result<f64> {
    let inst = random_instance(series, dims, latent_dim, steps, relation_count, variant, seed)?;
    let penalties = Penalties { lambda, gamma };
    let pairs = sample_pairs(steps, steps, &mut RngState::new(seed ^ 0x5eed))?;
    let full = check_instance(&inst, penalties, None)?;
    let sampled = check_instance(&inst, penalties, Some(&pairs))?;
    Ok(full.max(sampled))
}

pub(crate) fn check_instance(inst: &GradCheckInstance, penalties: Penalties, pairs: Option<&[usize]>) -> Result<f64> {
    let analytic = gradients(
        &inst.x,
        &inst.latent,
        &inst.params,
        &inst.relations,
        inst.variant,
        penalties,
        pairs,
    )?;
    let analytic_blocks: Vec<Vec<f64>> = gradient_blocks(&analytic).iter().map(|b| b.to_vec()).collect();

    let mut latent = inst.latent.clone();
    let mut params = inst.params.clone();
    let block_lens: Vec<usize> = state_blocks_mut(&mut latent, &mut params).iter().map(|b| b.len()).collect();
    let mut worst = 0.0f64;
    for (b, &len) in block_lens.iter().enumerate() {
        for (k, &a) in analytic_blocks[b].iter().enumerate().take(len) {
            let original = state_blocks_mut(&mut latent, &mut params)[b][k];
            state_blocks_mut(&mut latent, &mut params)[b][k] = original + STEP;
            let plus = loss(&inst.x, &latent, &params, &inst.relations, inst.variant, penalties, pairs)?.total;
            state_blocks_mut(&mut latent, &mut params)[b][k] = original - STEP;
            let minus = loss(&inst.x, &latent, &params, &inst.relations, inst.variant, penalties, pairs)?.total;
            state_blocks_mut(&mut latent, &mut params)[b][k] = original;

            let numeric = (plus - minus) / (2.0 * STEP);
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
