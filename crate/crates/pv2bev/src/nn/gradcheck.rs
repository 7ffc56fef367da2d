//! Finite-difference verification of the analytic gradients.

use super::{mse_loss, NnError, Sequential, Tensor};

/// Central-difference comparison against a flat list of analytic gradients.
///
/// `loss_at(i, delta)` must evaluate the loss with flat parameter `i`
/// perturbed by `delta` and then restore it. Relative error per parameter is
/// `|a - n| / max(|a|, |n|, 1e-8)`; the maximum over all parameters is
/// returned.
pub fn max_rel_error_central(
    eps: f64,
    analytic: &[f64],
    mut loss_at: impl FnMut(usize, f64) -> Result<f64, NnError>,
) -> Result<f64, NnError> {
    let mut max_rel: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let l_plus = loss_at(i, eps)?;
        let l_minus = loss_at(i, -eps)?;
        let numeric = (l_plus - l_minus) / (2.0 * eps);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        max_rel = max_rel.max(rel);
    }
    Ok(max_rel)
}

/// Checks every parameter of `net` against central differences of the MSE
/// loss at (`input`, `target`). Returns the maximum relative error.
pub fn grad_check(
    net: &mut Sequential,
    input: &Tensor,
    target: &Tensor,
    eps: f64,
) -> Result<f64, NnError> {
    net.zero_grads();
    let out = net.forward(input)?;
    let (_, gloss) = mse_loss(&out, target)?;
    net.backward(&gloss)?;
    let analytic: Vec<f64> = net
        .grads()
        .iter()
        .flat_map(|g| g.data().iter().copied())
        .collect();
    max_rel_error_central(eps, &analytic, |i, delta| {
        perturb_flat(net, i, delta);
        let result = net
            .infer(input)
            .and_then(|out| mse_loss(&out, target))
            .map(|(l, _)| l);
        perturb_flat(net, i, -delta);
        result
    })
}

fn perturb_flat(net: &mut Sequential, flat: usize, delta: f64) {
    let mut offset = 0;
    for p in net.params_mut() {
        if flat < offset + p.len() {
            p.data_mut()[flat - offset] += delta;
            return;
        }
        offset += p.len();
    }
    panic!("flat parameter index {flat} out of range {offset}");
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Conv2d, Dense, Flatten, GlobalAvgPool, InitKind, Relu};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Tensor {
        Tensor::vector((0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
    }

    #[test]
    fn linear_net_is_exact_to_rounding() {
        // Quadratic loss of a linear map: central differences are exact up to
        // floating-point noise.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut net = Sequential::new(vec![Box::new(Dense::new(
            4,
            3,
            InitKind::XavierUniform,
            &mut rng,
        ))]);
        let x = random_vector(&mut rng, 4);
        let t = random_vector(&mut rng, 3);
        let err = grad_check(&mut net, &x, &t, 1e-5).unwrap();
        assert!(err < 1e-9, "err = {err}");
    }

    #[test]
    fn dense_relu_dense_net_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut net = Sequential::new(vec![
            Box::new(Dense::new(5, 8, InitKind::HeUniform, &mut rng)),
            Box::new(Relu::new()),
            Box::new(Dense::new(8, 3, InitKind::XavierUniform, &mut rng)),
        ]);
        let t = random_vector(&mut rng, 3);
        // Resample until no pre-activation sits within 1e-3 of the ReLU kink.
        let err = loop {
            let x = random_vector(&mut rng, 5);
            let out = net.forward(&x).unwrap();
            if net.min_abs_preactivation() < 1e-3 {
                continue;
            }
            drop(out);
            break grad_check(&mut net, &x, &t, 1e-5).unwrap();
        };
        assert!(err < 1e-4, "err = {err}");
    }

    #[test]
    fn conv_pool_head_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut net = Sequential::new(vec![
            Box::new(Conv2d::new(2, 3, 2, &mut rng)),
            Box::new(Relu::new()),
            Box::new(GlobalAvgPool::new()),
            Box::new(Flatten::new()),
            Box::new(Dense::new(3, 2, InitKind::XavierUniform, &mut rng)),
        ]);
        let t = random_vector(&mut rng, 2);
        let err = loop {
            let x = Tensor::from_vec(
                &[2, 7, 9],
                (0..126).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
            )
            .unwrap();
            net.forward(&x).unwrap();
            if net.min_abs_preactivation() < 1e-3 {
                continue;
            }
            break grad_check(&mut net, &x, &t, 1e-5).unwrap();
        };
        assert!(err < 1e-4, "err = {err}");
    }

    #[test]
    fn zero_upstream_gradient_zeroes_parameter_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut net = Sequential::new(vec![
            Box::new(Dense::new(3, 4, InitKind::HeUniform, &mut rng)),
            Box::new(Relu::new()),
            Box::new(Dense::new(4, 2, InitKind::XavierUniform, &mut rng)),
        ]);
        net.zero_grads();
        let x = random_vector(&mut rng, 3);
        let out = net.forward(&x).unwrap();
        net.backward(&Tensor::zeros(out.shape())).unwrap();
        for g in net.grads() {
            assert!(g.data().iter().all(|&v| v == 0.0));
        }
    }
}
