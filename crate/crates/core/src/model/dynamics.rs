use super::{DynamicGateParams, ModelVariant, StnnParameters};
use crate::dataset::RelationSet;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[inline]
pub(crate) fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Gate values `σ(w_r · Z_t^i + b_r)`, indexed `[r][i]` by relation and receiving series.
pub(crate) fn gate_values(zt: &Matrix, gate: &DynamicGateParams) -> Vec<Vec<f64>> {
    (0..gate.biases.len())
        .map(|r| {
            let w = gate.weights.row(r);
            (0..zt.rows())
                .map(|i| {
                    let u: f64 = zt.row(i).iter().zip(w).map(|(z, w)| z * w).sum();
                    logistic(u + gate.biases[r])
                })
                .collect()
        })
        .collect()
}

fn scale_rows(w: &Matrix, factors: &[f64]) -> Matrix {
    Matrix::from_fn(w.rows(), w.cols(), |i, j| w.get(i, j) * factors[i])
}

/// Per-relation gated matrices: row `i` of `W^(r)` scaled by the gate of receiving series `i`.
pub fn dynamic_gate(zt: &Matrix, gate: Option<&DynamicGateParams>, relations: &RelationSet) -> Result<Vec<Matrix>> {
    let gate = gate.ok_or_else(|| Error::State("dynamic gate parameters missing".into()))?;
    if gate.biases.len() != relations.len() || gate.weights.cols() != zt.cols() {
        return Err(Error::shape(
            "dynamic_gate",
            gate.weights.shape(),
            (relations.len(), zt.cols()),
        ));
    }
    if zt.rows() != relations.n() {
        return Err(Error::shape("dynamic_gate", zt.shape(), (relations.n(), relations.n())));
    }
    Ok(gate_values(zt, gate)
        .iter()
        .enumerate()
        .map(|(r, s)| scale_rows(relations.matrix(r), s))
        .collect())
}

/// Effective aggregation matrices `M^(r)` for the variant at latent state `zt`.
pub fn mixing_matrices(
    zt: &Matrix,
    params: &StnnParameters,
    relations: &RelationSet,
    variant: ModelVariant,
) -> Result<Vec<Matrix>> {
    match variant {
        ModelVariant::Stnn => Ok(relations.relations().iter().map(|r| r.matrix.clone()).collect()),
        ModelVariant::StnnR => gammas(params, variant)?
            .iter()
            .zip(relations.relations())
            .map(|(g, rel)| rel.matrix.hadamard(g))
            .collect(),
        ModelVariant::StnnD => Ok(gammas(params, variant)?.to_vec()),
        ModelVariant::StnnDynamicGate => dynamic_gate(zt, params.gate.as_ref(), relations),
    }
}

fn gammas(params: &StnnParameters, variant: ModelVariant) -> Result<&[Matrix]> {
    params
        .gammas
        .as_deref()
        .ok_or_else(|| Error::State(format!("{variant} needs relation weights")))
}

/// Forward quantities of one transition, kept for back-propagation.
pub(crate) struct StepCache {
    pub mixing: Vec<Matrix>,
    /// `M^(r) Z_t`.
    pub mixed: Vec<Matrix>,
    /// Gate values per relation when the variant is gated.
    pub gates: Option<Vec<Vec<f64>>>,
    /// `tanh` of the pre-activation.
    pub output: Matrix,
}

pub(crate) fn forward(
    zt: &Matrix,
    params: &StnnParameters,
    relations: &RelationSet,
    variant: ModelVariant,
) -> Result<StepCache> {
    let latent = params.latent_dim();
    if zt.shape() != (relations.n(), latent) {
        return Err(Error::shape("dynamics_step", zt.shape(), (relations.n(), latent)));
    }
    if params.thetas.len() != relations.len() {
        return Err(Error::Validation(format!(
            "{} relation transitions for {} relations",
            params.thetas.len(),
            relations.len()
        )));
    }
    let gates = match variant {
        ModelVariant::StnnDynamicGate => {
            let gate = params
                .gate
                .as_ref()
                .ok_or_else(|| Error::State("dynamic gate parameters missing".into()))?;
            Some(gate_values(zt, gate))
        }
        _ => None,
    };
    let mixing = match &gates {
        Some(g) => g
            .iter()
            .enumerate()
            .map(|(r, s)| scale_rows(relations.matrix(r), s))
            .collect(),
        None => mixing_matrices(zt, params, relations, variant)?,
    };
    let mut pre = zt.matmul(&params.theta0)?;
    let mut mixed = Vec::with_capacity(mixing.len());
    for (m, theta) in mixing.iter().zip(&params.thetas) {
        let y = m.matmul(zt)?;
        pre.add_scaled(&y.matmul(theta)?, 1.0)?;
        mixed.push(y);
    }
    Ok(StepCache {
        mixing,
        mixed,
        gates,
        output: pre.map_tanh(),
    })
}

/// One latent transition `tanh(Z_t Θ0 + Σ_r M^(r) Z_t Θ^(r))`.
pub fn dynamics_step(
    zt: &Matrix,
    params: &StnnParameters,
    relations: &RelationSet,
    variant: ModelVariant,
) -> Result<Matrix> {
    forward(zt, params, relations, variant).map(|c| c.output)
}

/// Linear decoder shared across series: `Z_t W_d + 1 bᵀ`.
pub fn decode(zt: &Matrix, params: &StnnParameters) -> Result<Matrix> {
    let mut out = zt.matmul(&params.decoder_weight)?;
    for i in 0..out.rows() {
        for (v, b) in out.row_mut(i).iter_mut().zip(&params.decoder_bias) {
            *v += b;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Provenance, RelationSet};
    use crate::model::init_model;
    use crate::numerics::RngState;

    fn scalar_params(theta0: f64, thetas: &[f64]) -> StnnParameters {
        StnnParameters {
            theta0: Matrix::filled(1, 1, theta0),
            thetas: thetas.iter().map(|&t| Matrix::filled(1, 1, t)).collect(),
            decoder_weight: Matrix::filled(1, 1, 1.0),
            decoder_bias: vec![0.0],
            gammas: None,
            gate: None,
        }
    }

    #[test]
    fn zero_state_maps_to_zero() {
        let rel = RelationSet::single("w", Matrix::filled(3, 3, 1.0 / 3.0), Provenance::NormalizedRaw).unwrap();
        let (_, params) = init_model(3, 1, 2, &rel, ModelVariant::Stnn, 3, &mut RngState::new(1)).unwrap();
        let out = dynamics_step(&Matrix::zeros(3, 2), &params, &rel, ModelVariant::Stnn).unwrap();
        assert_eq!(out, Matrix::zeros(3, 2));
    }

    #[test]
    fn scalar_without_relations() {
        let params = scalar_params(1.0, &[]);
        let out = dynamics_step(&Matrix::filled(1, 1, 0.5), &params, &RelationSet::empty(1), ModelVariant::Stnn).unwrap();
        assert!((out.get(0, 0) - 0.4621171573).abs() < 1e-10);
    }

    #[test]
    fn swap_relation_exchanges_states() {
        let w = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let rel = RelationSet::single("w", w, Provenance::Raw).unwrap();
        let params = scalar_params(0.0, &[1.0]);
        let (a, b) = (0.3, -1.2);
        let z = Matrix::from_rows(&[vec![a], vec![b]]).unwrap();
        let out = dynamics_step(&z, &params, &rel, ModelVariant::Stnn).unwrap();
        assert_eq!(out.as_slice(), &[f64::tanh(b), f64::tanh(a)]);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let params = scalar_params(1.0, &[]);
        let err = dynamics_step(&Matrix::zeros(2, 1), &params, &RelationSet::empty(1), ModelVariant::Stnn);
        assert!(matches!(err, Err(Error::Shape { .. })));
    }

    #[test]
    fn gate_cases() {
        let w = Matrix::from_rows(&[vec![0.0, 0.5, 0.5], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let rel = RelationSet::single("w", w.clone(), Provenance::NormalizedRaw).unwrap();
        let z = Matrix::from_fn(3, 2, |i, j| (i as f64) - (j as f64) * 0.7);
        let gate = DynamicGateParams::zeros(1, 2);
        let out = dynamic_gate(&z, Some(&gate), &rel).unwrap();
        assert_eq!(out[0], w.scale(0.5));

        let saturated = DynamicGateParams {
            weights: Matrix::zeros(1, 2),
            biases: vec![800.0],
        };
        let out = dynamic_gate(&z, Some(&saturated), &rel).unwrap();
        assert_eq!(out[0], w);

        assert!(matches!(dynamic_gate(&z, None, &rel), Err(Error::State(_))));

        let one = RelationSet::single("w", Matrix::filled(1, 1, 1.0), Provenance::Raw).unwrap();
        let single = DynamicGateParams {
            weights: Matrix::filled(1, 1, 1.0),
            biases: vec![0.0],
        };
        let out = dynamic_gate(&Matrix::zeros(1, 1), Some(&single), &one).unwrap();
        assert_eq!(out[0].get(0, 0), 0.5);
    }

    #[test]
    fn decode_cases() {
        let mut params = scalar_params(1.0, &[]);
        params.decoder_weight = Matrix::from_rows(&[vec![0.1, -0.3], vec![0.7, 0.2]]).unwrap();
        params.decoder_bias = vec![2.5, 2.5];
        let out = decode(&Matrix::zeros(3, 2), &params).unwrap();
        assert_eq!(out, Matrix::filled(3, 2, 2.5));

        params.decoder_weight = Matrix::identity(2);
        params.decoder_bias = vec![0.0, 0.0];
        let z = Matrix::from_fn(3, 2, |i, j| i as f64 * 0.5 - j as f64);
        assert_eq!(decode(&z, &params).unwrap(), z);

        let mut rng = RngState::new(4);
        params.decoder_weight = Matrix::from_fn(2, 3, |_, _| rng.normal(0.0, 1.0));
        params.decoder_bias = vec![0.1, -0.2, 0.3];
        let z = Matrix::from_fn(4, 2, |_, _| rng.normal(0.0, 1.0));
        let got = decode(&z, &params).unwrap();
        for i in 0..4 {
            for j in 0..3 {
                let dot = z.get(i, 0) * params.decoder_weight.get(0, j) + z.get(i, 1) * params.decoder_weight.get(1, j);
                assert!((got.get(i, j) - (dot + params.decoder_bias[j])).abs() < 1e-12);
            }
        }
    }
}
