use kinchain_nn::{
    grad_check, GradCheckConfig, LayerSpec, Loss, ModelGraph, Optimizer, OptimizerKind, Tensor,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn onehot(rng: &mut ChaCha8Rng, batch: usize, k: usize) -> Tensor<f64> {
    let mut t = vec![0.0; batch * k];
    for b in 0..batch {
        t[b * k + rng.gen_range(0..k)] = 1.0;
    }
    Tensor::new(vec![batch, k], t).unwrap()
}

fn check(specs: &[LayerSpec], input: &[usize], loss: Loss, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = ModelGraph::<f64>::new(input, specs, seed).unwrap();
    // break the all-zero bias symmetry so relu kinks are not clustered
    for p in model.params_mut() {
        for v in p.data_mut() {
            *v += rng.gen_range(-0.05..0.05);
        }
    }
    let batch = 2;
    let mut shape = vec![batch];
    shape.extend_from_slice(input);
    let x = random_tensor(&mut rng, shape);
    let k = model.output_shape()[0];
    let target = match loss {
        Loss::CrossEntropy => onehot(&mut rng, batch, k),
        Loss::SumSquared => random_tensor(&mut rng, vec![batch, k]),
    };
    let report = grad_check(
        &mut model,
        &x,
        &target,
        loss,
        &GradCheckConfig {
            seed,
            ..GradCheckConfig::default()
        },
    )
    .unwrap();
    assert!(report.checked > 0);
    report.max_rel_error
}

#[test]
fn tiny_conv3d_counter() {
    let specs = [
        LayerSpec::Conv3d {
            filters: 3,
            kernel: [3, 3, 3],
            stride: [1, 1, 1],
            padding: [1, 1, 1],
        },
        LayerSpec::Relu,
        LayerSpec::MaxPool3d { window: [2, 2, 2] },
        LayerSpec::Flatten { keep: 0 },
        LayerSpec::Dense { units: 6 },
        LayerSpec::Softmax,
    ];
    let err = check(&specs, &[4, 6, 8, 1], Loss::CrossEntropy, 1);
    assert!(err <= 1e-4, "{err}");
}

#[test]
fn affine_model_is_exact() {
    let specs = [
        LayerSpec::Flatten { keep: 0 },
        LayerSpec::Dense { units: 5 },
        LayerSpec::Dense { units: 3 },
    ];
    let err = check(&specs, &[2, 3], Loss::SumSquared, 2);
    assert!(err <= 1e-7, "{err}");
}

#[test]
fn relu_away_from_kinks() {
    let specs = [
        LayerSpec::Dense { units: 8 },
        LayerSpec::Relu,
        LayerSpec::Dense { units: 3 },
    ];
    let err = check(&specs, &[5], Loss::SumSquared, 3);
    assert!(err <= 1e-5, "{err}");
}

#[test]
fn grad_check_restores_parameters() {
    let specs = [LayerSpec::Dense { units: 2 }, LayerSpec::Softmax];
    let mut model = ModelGraph::<f64>::new(&[3], &specs, 0).unwrap();
    let before: Vec<Vec<f64>> = model.params().iter().map(|p| p.data().to_vec()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = random_tensor(&mut rng, vec![1, 3]);
    let t = onehot(&mut rng, 1, 2);
    let r = grad_check(&mut model, &x, &t, Loss::CrossEntropy, &GradCheckConfig::default()).unwrap();
    assert_eq!(r.checked, 8);
    let after: Vec<Vec<f64>> = model.params().iter().map(|p| p.data().to_vec()).collect();
    assert_eq!(before, after);
}

fn layer_zoo(kind: usize) -> (Vec<LayerSpec>, Vec<usize>, Loss) {
    match kind {
        0 => (
            vec![
                LayerSpec::Conv3d {
                    filters: 2,
                    kernel: [2, 3, 3],
                    stride: [1, 2, 1],
                    padding: [0, 1, 1],
                },
                LayerSpec::Relu,
                LayerSpec::Flatten { keep: 0 },
                LayerSpec::Dense { units: 4 },
                LayerSpec::Softmax,
            ],
            vec![3, 5, 4, 2],
            Loss::CrossEntropy,
        ),
        1 => (
            vec![
                LayerSpec::Conv2d {
                    filters: 3,
                    kernel: [3, 3],
                    stride: [1, 1],
                    padding: [1, 1],
                },
                LayerSpec::MaxPool2d { window: [2, 2] },
                LayerSpec::Flatten { keep: 1 },
                LayerSpec::Lstm { hidden: 4 },
                LayerSpec::Dense { units: 3 },
                LayerSpec::Softmax,
            ],
            vec![3, 4, 4, 1],
            Loss::CrossEntropy,
        ),
        2 => (
            vec![
                LayerSpec::Lstm { hidden: 5 },
                LayerSpec::Dense { units: 3 },
            ],
            vec![4, 3],
            Loss::SumSquared,
        ),
        _ => (
            vec![
                LayerSpec::MaxPool3d { window: [1, 2, 2] },
                LayerSpec::Flatten { keep: 0 },
                LayerSpec::Dense { units: 6 },
                LayerSpec::Relu,
                LayerSpec::Dense { units: 2 },
            ],
            vec![2, 4, 4, 2],
            Loss::SumSquared,
        ),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn every_layer_passes_gradient_checks(seed in 0u64..1_000_000, kind in 0usize..4) {
        let (specs, input, loss) = layer_zoo(kind);
        let err = check(&specs, &input, loss, seed);
        prop_assert!(err <= 1e-4, "kind {} seed {} err {}", kind, seed, err);
    }
}

fn train(lr: f64, seed: u64, epochs: usize) -> Vec<Vec<f32>> {
    let specs = [
        LayerSpec::Conv2d {
            filters: 2,
            kernel: [3, 3],
            stride: [1, 1],
            padding: [1, 1],
        },
        LayerSpec::Relu,
        LayerSpec::Flatten { keep: 0 },
        LayerSpec::Dense { units: 3 },
        LayerSpec::Softmax,
    ];
    let mut model = ModelGraph::<f32>::new(&[4, 4, 1], &specs, seed).unwrap();
    let mut opt = Optimizer::new(OptimizerKind::adam(lr));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..epochs {
        let x: Vec<f32> = (0..2 * 16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut t = vec![0.0f32; 6];
        t[rng.gen_range(0..3)] = 1.0;
        t[3 + rng.gen_range(0..3)] = 1.0;
        model.zero_grad();
        let y = model.forward(Tensor::new(vec![2, 4, 4, 1], x).unwrap()).unwrap();
        let (_, g) = Loss::CrossEntropy
            .evaluate(&y, &Tensor::new(vec![2, 3], t).unwrap())
            .unwrap();
        model.backward(g).unwrap();
        opt.step(&mut model.params_mut()).unwrap();
    }
    model.params().iter().map(|p| p.data().to_vec()).collect()
}

#[test]
fn zero_learning_rate_leaves_parameters_bit_identical() {
    let init = train(0.0, 4, 0);
    assert_eq!(train(0.0, 4, 25), init);
    assert_ne!(train(0.01, 4, 25), init);
}

#[test]
fn training_is_deterministic() {
    assert_eq!(train(0.01, 8, 30), train(0.01, 8, 30));
}
