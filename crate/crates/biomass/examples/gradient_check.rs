//! Verify every layer's analytic gradient against central finite
//! differences in double precision.
//!
//! ```bash
//! cargo run --example gradient_check
//! ```

use biomass::nn::gradcheck::{finite_difference, max_relative_error};
use biomass::nn::{weighted_rmse, weighted_rmse_with_grad, BatchNorm, Dense, Head, Mode};
use biomass::rng::rng_from_seed;
use biomass::tensor::Tensor;

fn probe(y: &Tensor<f64>, c: &Tensor<f64>) -> f64 {
    y.data().iter().zip(c.data()).map(|(a, b)| a * b).sum()
}

fn main() -> biomass::Result<()> {
    let mut rng = rng_from_seed(3);

    // dense layer, gradient with respect to its weights
    let dense = Dense::<f64>::new(6, 5, &mut rng);
    let x = Tensor::<f64>::uniform(&[4, 6], -1.0, 1.0, &mut rng);
    let c = Tensor::<f64>::uniform(&[4, 5], -1.0, 1.0, &mut rng);
    let mut run = dense.clone();
    run.forward(&x, true)?;
    run.backward(&c)?;
    let fd = finite_difference(
        &mut |w: &Tensor<f64>| {
            let mut d = dense.clone();
            d.weight = w.clone();
            d.forward(&x, false).map(|y| probe(&y, &c))
        },
        &dense.weight,
        1e-5,
    )?;
    println!(
        "dense weight        max relative error {:.3e}",
        max_relative_error(run.grad_weight.as_ref().unwrap(), &fd)
    );

    // batch norm in train mode, gradient with respect to the input
    let mut bn = BatchNorm::<f64>::new(5);
    bn.gamma = Tensor::uniform(&[5], 0.5, 1.5, &mut rng);
    let xb = Tensor::<f64>::uniform(&[6, 5], -2.0, 2.0, &mut rng);
    let cb = Tensor::<f64>::uniform(&[6, 5], -1.0, 1.0, &mut rng);
    let mut run = bn.clone();
    run.forward(&xb, Mode::Train, true)?;
    let gx = run.backward(&cb)?;
    let fd = finite_difference(
        &mut |v: &Tensor<f64>| bn.clone().forward(v, Mode::Train, false).map(|y| probe(&y, &cb)),
        &xb,
        1e-5,
    )?;
    println!(
        "batchnorm input     max relative error {:.3e}",
        max_relative_error(&gx, &fd)
    );

    // whole head through softmax and the weighted RMSE loss
    let head = Head::<f64>::new(6, &[5, 4], &mut rng)?;
    let xh = Tensor::<f64>::uniform(&[4, 6], -1.0, 1.0, &mut rng);
    let mut target = Tensor::<f64>::uniform(&[4, 4], 0.05, 0.95, &mut rng);
    for row in target.data_mut().chunks_mut(4) {
        let s: f64 = row.iter().sum();
        for v in row.iter_mut() {
            *v /= s;
        }
    }
    let weights = Tensor::from_vec(&[4], vec![1.0, 1.5, 1.0, 1.5])?;

    let mut run = head.clone();
    let probs = run.forward(&xh, Mode::Train, true)?;
    let (_, grad) = weighted_rmse_with_grad(&probs, &target, &weights)?;
    run.backward(&grad)?;

    let mut worst: f64 = 0.0;
    for slot in 0..head.num_slots() {
        let mut probe_head = head.clone();
        let at = probe_head.slots_mut()[slot].param.clone();
        let name = probe_head.slots_mut()[slot].name.clone();
        let fd = finite_difference(
            &mut |v: &Tensor<f64>| {
                let mut h = head.clone();
                *h.slots_mut()[slot].param = v.clone();
                let p = h.forward(&xh, Mode::Train, false)?;
                weighted_rmse(&p, &target, &weights)
            },
            &at,
            1e-5,
        )?;
        let analytic = run.slots_mut()[slot].grad.clone().unwrap();
        let err = max_relative_error(&analytic, &fd);
        println!("head {name:<18} max relative error {err:.3e}");
        worst = worst.max(err);
    }

    assert!(worst <= 1e-4, "gradient check failed: {worst}");
    println!("\nall gradients agree with finite differences within 1e-4");
    Ok(())
}
