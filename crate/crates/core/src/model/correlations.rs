use std::ops::Range;

use super::dynamics::gate_values;
use super::{LatentState, ModelVariant, StnnParameters};
use crate::dataset::RelationSet;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Learned relation matrices and, per series, the relation with the largest row weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Correlations {
    pub matrices: Vec<(String, Matrix)>,
    pub dominant: Vec<usize>,
}

/// Index of the relation whose row `i` carries the most absolute weight (first on ties).
fn dominant_per_row(matrices: &[&Matrix], n: usize) -> Vec<usize> {
    (0..n)
        .map(|i| {
            let mut best = (0, f64::NEG_INFINITY);
            for (r, m) in matrices.iter().enumerate() {
                let weight: f64 = m.row(i).iter().map(|v| v.abs()).sum();
                if weight > best.1 {
                    best = (r, weight);
                }
            }
            best.0
        })
        .collect()
}

/// Effective relation matrices of a model with learned relation weights:
/// `Γ^(r)` for [`ModelVariant::StnnD`], `W^(r) ⊙ Γ^(r)` for [`ModelVariant::StnnR`].
pub fn extract_correlations(
    params: &StnnParameters,
    relations: &RelationSet,
    variant: ModelVariant,
) -> Result<Correlations> {
    if !variant.uses_gammas() {
        return Err(Error::State(format!(
            "{variant} has no learned relation weights to extract"
        )));
    }
    params.validate(relations, variant)?;
    let gammas = params.gammas.as_ref().expect("validated");
    let matrices: Vec<(String, Matrix)> = relations
        .relations()
        .iter()
        .zip(gammas)
        .map(|(rel, g)| {
            let m = match variant {
                ModelVariant::StnnR => rel.matrix.hadamard(g),
                _ => Ok(g.clone()),
            }?;
            Ok((rel.label.clone(), m))
        })
        .collect::<Result<_>>()?;
    let refs: Vec<&Matrix> = matrices.iter().map(|(_, m)| m).collect();
    let dominant = dominant_per_row(&refs, relations.n());
    Ok(Correlations { matrices, dominant })
}

/// For a gated model, the dominant relation of every series at every time step in `range`.
pub fn gate_dominance(
    latent: &LatentState,
    params: &StnnParameters,
    relations: &RelationSet,
    range: Range<usize>,
) -> Result<Vec<Vec<usize>>> {
    let gate = params
        .gate
        .as_ref()
        .ok_or_else(|| Error::State("model has no dynamic gate".into()))?;
    if range.end > latent.steps() {
        return Err(Error::Argument(format!(
            "time range {range:?} outside 0..{}",
            latent.steps()
        )));
    }
    range
        .map(|t| {
            let gates = gate_values(&latent.slices[t], gate);
            let gated: Vec<Matrix> = gates
                .iter()
                .enumerate()
                .map(|(r, s)| Matrix::from_fn(relations.n(), relations.n(), |i, j| relations.matrix(r).get(i, j) * s[i]))
                .collect();
            let refs: Vec<&Matrix> = gated.iter().collect();
            Ok(dominant_per_row(&refs, relations.n()))
        })
        .collect()
}
