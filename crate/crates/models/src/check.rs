//! Finite-difference checks of the full architectures at reduced size.

use kinchain_nn::{grad_check, GradCheckConfig, GradCheckReport, ModelGraph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::arch::{specs_for, Architecture, Network, Task};
use crate::error::Result;
use crate::train::loss_for;

/// D×H×W used for checks: 4×12×16 volumes, or 8 frames of 12×16 for the CNN-LSTM.
pub fn reduced_dims(network: Network) -> [usize; 3] {
    match network {
        Network::Conv3d => [4, 12, 16],
        Network::CnnLstm => [8, 12, 16],
    }
}

/// Builds `task` for `arch` in 64-bit at reduced size and compares its
/// backward pass against central differences on a batch of two.
pub fn check_gradients(task: Task, arch: Architecture, seed: u64, samples: usize) -> Result<GradCheckReport> {
    let [d, h, w] = reduced_dims(arch.network);
    let specs = specs_for(task, arch, d, h, w)?;
    let mut model = ModelGraph::<f64>::new(&[d, h, w, 1], &specs, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    // nonzero biases keep relu inputs away from exact zeros
    for p in model.params_mut() {
        for v in p.data_mut() {
            *v += rng.gen_range(-0.05..0.05);
        }
    }
    let batch = 2;
    let x: Vec<f64> = (0..batch * d * h * w).map(|_| rng.gen_range(0.0..1.0)).collect();
    let x = Tensor::new(vec![batch, d, h, w, 1], x)?;
    let k = task.outputs();
    let target = match task {
        Task::Count => {
            let mut t = vec![0.0; batch * k];
            for b in 0..batch {
                t[b * k + rng.gen_range(0..k)] = 1.0;
            }
            t
        }
        _ => (0..batch * k).map(|_| rng.gen_range(0.0..1.5)).collect(),
    };
    let target = Tensor::new(vec![batch, k], target)?;
    let cfg = GradCheckConfig {
        samples,
        seed,
        ..GradCheckConfig::default()
    };
    Ok(grad_check(&mut model, &x, &target, loss_for(task), &cfg)?)
}
