//! Central-finite-difference verification of reverse-mode gradients.

use crate::error::{Error, Result};
use crate::numerics::graph::{NodeId, Tape};
use crate::numerics::tensor::Tensor;

/// Compare reverse-mode gradients against central finite differences.
///
/// `build` receives a fresh tape plus one parameter node per entry of
/// `params` and returns the scalar loss node. Every parameter coordinate
/// is perturbed by `±eps` and the difference quotient is compared to the
/// analytic gradient. Returns the worst error, relative with the
/// denominator floored at 1 so near-zero gradients are judged absolutely.
pub fn grad_check<F>(mut build: F, params: &[Tensor], eps: f64) -> Result<f64>
where
    F: FnMut(&mut Tape, &[NodeId]) -> Result<NodeId>,
{
    if eps <= 0.0 {
        return Err(Error::Contract(format!("grad_check eps must be > 0, got {eps}")));
    }

    let eval = |build: &mut F, values: &[Tensor]| -> Result<(f64, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = values.iter().map(|t| tape.param(t.clone())).collect();
        let loss = build(&mut tape, &ids)?;
        let grads = tape.backward(loss)?;
        let per_param = ids
            .iter()
            .map(|&id| grads.get(id).expect("param registered").clone())
            .collect();
        Ok((tape.value(loss).item()?, per_param))
    };

    let (_, analytic) = eval(&mut build, params)?;

    let mut max_err: f64 = 0.0;
    for (pi, p) in params.iter().enumerate() {
        for j in 0..p.numel() {
            let mut perturbed = |delta: f64| -> Result<f64> {
                let mut data = p.data().to_vec();
                data[j] += delta;
                let mut values = params.to_vec();
                values[pi] = Tensor::new(p.shape().to_vec(), data)?;
                let mut tape = Tape::new();
                let ids: Vec<NodeId> = values.iter().map(|t| tape.param(t.clone())).collect();
                let loss = build(&mut tape, &ids)?;
                tape.value(loss).item()
            };
            let fd = (perturbed(eps)? - perturbed(-eps)?) / (2.0 * eps);
            let ad = analytic[pi].data()[j];
            let err = (ad - fd).abs() / ad.abs().max(fd.abs()).max(1.0);
            if err > max_err {
                max_err = err;
            }
        }
    }
    Ok(max_err)
}
