use serde::{Deserialize, Serialize};

use super::dynamics::{decode, forward};
use super::{LatentState, ModelVariant, StnnParameters};
use crate::dataset::{RelationSet, SeriesTensor};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Weights of the dynamics term (`lambda`) and of the L1 penalty on relation weights (`gamma`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Penalties {
    pub lambda: f64,
    pub gamma: f64,
}

/// Objective split into its terms. `total = reconstruction + λ·dynamics + γ·l1_gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub reconstruction: f64,
    pub dynamics: f64,
    pub l1_gamma: f64,
    pub total: f64,
}

/// Gradient of the objective with the same layout as the learnable state.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub latent: LatentState,
    pub params: StnnParameters,
}

impl Gradients {
    pub fn norm(&self) -> f64 {
        let latent: f64 = self.latent.slices.iter().map(Matrix::sum_squares).sum();
        let params: f64 = super::blocks(&self.params)
            .iter()
            .flat_map(|b| b.iter())
            .map(|v| v * v)
            .sum();
        (latent + params).sqrt()
    }
}

/// Time steps and pairs an evaluation covers.
struct Selection {
    /// Reconstruction time steps, with multiplicity.
    recon: Vec<usize>,
    /// Pair start indices `t` for transitions `(Z_t, Z_{t+1})`.
    pairs: Vec<usize>,
}

fn select(steps: usize, pairs: Option<&[usize]>) -> Result<Selection> {
    if steps < 2 {
        return Err(Error::Argument("objective needs at least two time steps".into()));
    }
    match pairs {
        None => Ok(Selection {
            recon: (0..steps).collect(),
            pairs: (0..steps - 1).collect(),
        }),
        Some([]) => Err(Error::Argument("empty pair set".into())),
        Some(p) => {
            if let Some(&bad) = p.iter().find(|&&t| t + 1 >= steps) {
                return Err(Error::Argument(format!("pair start {bad} outside 0..{}", steps - 1)));
            }
            let mut sorted = p.to_vec();
            sorted.sort_unstable();
            Ok(Selection {
                recon: sorted.iter().flat_map(|&t| [t, t + 1]).collect(),
                pairs: sorted,
            })
        }
    }
}

fn check_inputs(
    x: &SeriesTensor,
    z: &LatentState,
    params: &StnnParameters,
    relations: &RelationSet,
    variant: ModelVariant,
    penalties: Penalties,
) -> Result<()> {
    if !(penalties.lambda >= 0.0 && penalties.gamma >= 0.0) {
        return Err(Error::Argument("lambda and gamma must be non-negative".into()));
    }
    if z.steps() != x.steps() || z.series() != x.series() || z.latent_dim() != params.latent_dim() {
        return Err(Error::shape(
            "latent state",
            (z.steps(), z.series()),
            (x.steps(), x.series()),
        ));
    }
    if params.dims() != x.dims() {
        return Err(Error::shape("decoder", params.decoder_weight.shape(), (params.latent_dim(), x.dims())));
    }
    params.validate(relations, variant)
}

fn l1(params: &StnnParameters, variant: ModelVariant) -> f64 {
    match (&params.gammas, variant.uses_gammas()) {
        (Some(g), true) => g.iter().map(Matrix::abs_sum).sum(),
        _ => 0.0,
    }
}

/// Evaluates the objective. With `pairs = None` the full window is used; otherwise the
/// reconstruction term covers both endpoints of every sampled pair and the dynamics term the
/// pairs themselves.
pub fn loss(
    x: &SeriesTensor,
    z: &LatentState,
    params: &StnnParameters,
    relations: &RelationSet,
    variant: ModelVariant,
    penalties: Penalties,
    pairs: Option<&[usize]>,
) -> Result<LossBreakdown> {
    check_inputs(x, z, params, relations, variant, penalties)?;
    let sel = select(x.steps(), pairs)?;

    let mut recon = 0.0;
    for &s in &sel.recon {
        let pred = decode(&z.slices[s], params)?;
        recon += pred
            .as_slice()
            .iter()
            .zip(x.step(s))
            .map(|(p, o)| (p - o) * (p - o))
            .sum::<f64>();
    }
    let reconstruction = recon / (sel.recon.len() * x.width()) as f64;

    let mut dyn_sum = 0.0;
    for &t in &sel.pairs {
        let next = forward(&z.slices[t], params, relations, variant)?.output;
        dyn_sum += z.slices[t + 1].sub(&next)?.sum_squares();
    }
    let dynamics = dyn_sum / sel.pairs.len() as f64;
    let l1_gamma = l1(params, variant);
    Ok(LossBreakdown {
        reconstruction,
        dynamics,
        l1_gamma,
        total: reconstruction + penalties.lambda * dynamics + penalties.gamma * l1_gamma,
    })
}

/// Analytic gradient of [`loss`] with respect to every latent slice and parameter block.
/// The L1 term contributes `γ·sign(Γ)` with `sign(0) = 0`.
pub fn gradients(
    x: &SeriesTensor,
    z: &LatentState,
    params: &StnnParameters,
    relations: &RelationSet,
    variant: ModelVariant,
    penalties: Penalties,
    pairs: Option<&[usize]>,
) -> Result<Gradients> {
    check_inputs(x, z, params, relations, variant, penalties)?;
    let sel = select(x.steps(), pairs)?;
    let mut grad = Gradients {
        latent: LatentState::zeros(z.steps(), z.series(), z.latent_dim()),
        params: params.zeros_like(),
    };

    // Reconstruction: mean squared error over the selected steps and all n·m entries.
    let recon_scale = 2.0 / (sel.recon.len() * x.width()) as f64;
    for &s in &sel.recon {
        let zs = &z.slices[s];
        let mut err = decode(zs, params)?;
        for (e, o) in err.as_mut_slice().iter_mut().zip(x.step(s)) {
            *e = recon_scale * (*e - o);
        }
        grad.latent.slices[s].add_scaled(&err.matmul_t(&params.decoder_weight)?, 1.0)?;
        grad.params.decoder_weight.add_scaled(&zs.t_matmul(&err)?, 1.0)?;
        for i in 0..err.rows() {
            for (b, e) in grad.params.decoder_bias.iter_mut().zip(err.row(i)) {
                *b += e;
            }
        }
    }

    if penalties.lambda > 0.0 {
        let dyn_scale = 2.0 * penalties.lambda / sel.pairs.len() as f64;
        for &t in &sel.pairs {
            accumulate_transition(&mut grad, z, t, params, relations, variant, dyn_scale)?;
        }
    }

    if variant.uses_gammas() && penalties.gamma > 0.0 {
        if let (Some(g), Some(dg)) = (&params.gammas, &mut grad.params.gammas) {
            for (gm, dgm) in g.iter().zip(dg.iter_mut()) {
                for (v, d) in gm.as_slice().iter().zip(dgm.as_mut_slice()) {
                    if *v != 0.0 {
                        *d += penalties.gamma * v.signum();
                    }
                }
            }
        }
    }
    Ok(grad)
}

/// Adds the gradient of `scale/2 · ‖Z_{t+1} − g(Z_t)‖²`.
fn accumulate_transition(
    grad: &mut Gradients,
    z: &LatentState,
    t: usize,
    params: &StnnParameters,
    relations: &RelationSet,
    variant: ModelVariant,
    scale: f64,
) -> Result<()> {
    let zt = &z.slices[t];
    let cache = forward(zt, params, relations, variant)?;
    let diff = z.slices[t + 1].sub(&cache.output)?;
    grad.latent.slices[t + 1].add_scaled(&diff, scale)?;

    // Back through tanh: dL/dA = -scale·diff ⊙ (1 - g²).
    let mut upstream = diff;
    for (u, g) in upstream.as_mut_slice().iter_mut().zip(cache.output.as_slice()) {
        *u *= -scale * (1.0 - g * g);
    }

    grad.params.theta0.add_scaled(&zt.t_matmul(&upstream)?, 1.0)?;
    let mut dzt = upstream.matmul_t(&params.theta0)?;

    for r in 0..cache.mixing.len() {
        let mixing = &cache.mixing[r];
        grad.params.thetas[r].add_scaled(&cache.mixed[r].t_matmul(&upstream)?, 1.0)?;
        let dmixed = upstream.matmul_t(&params.thetas[r])?;
        dzt.add_scaled(&mixing.t_matmul(&dmixed)?, 1.0)?;
        let dmixing = dmixed.matmul_t(zt)?;
        let prior = relations.matrix(r);
        match variant {
            ModelVariant::Stnn => {}
            ModelVariant::StnnR => {
                let dg = &mut grad.params.gammas.as_mut().expect("validated")[r];
                dg.add_scaled(&dmixing.hadamard(prior)?, 1.0)?;
            }
            ModelVariant::StnnD => {
                let dg = &mut grad.params.gammas.as_mut().expect("validated")[r];
                dg.add_scaled(&dmixing, 1.0)?;
            }
            ModelVariant::StnnDynamicGate => {
                let gates = &cache.gates.as_ref().expect("gated forward")[r];
                let gate = params.gate.as_ref().expect("validated");
                let dgate = grad.params.gate.as_mut().expect("validated");
                for (i, &s) in gates.iter().enumerate() {
                    let ds: f64 = dmixing.row(i).iter().zip(prior.row(i)).map(|(a, w)| a * w).sum();
                    let du = ds * s * (1.0 - s);
                    if du == 0.0 {
                        continue;
                    }
                    dgate.biases[r] += du;
                    for (k, dw) in dgate.weights.row_mut(r).iter_mut().enumerate() {
                        *dw += du * zt.get(i, k);
                    }
                    for (dz, w) in dzt.row_mut(i).iter_mut().zip(gate.weights.row(r)) {
                        *dz += du * w;
                    }
                }
            }
        }
    }
    grad.latent.slices[t].add_scaled(&dzt, 1.0)?;
    Ok(())
}
