use super::*;
use crate::Rng;

fn t64(shape: &[usize], data: Vec<f64>) -> Tensor<f64> {
    Tensor::from_vec(shape, data).unwrap()
}

fn var64(shape: &[usize], data: Vec<f64>) -> Tensor<f64> {
    Tensor::var(shape, data).unwrap()
}

#[test]
fn conv2d_one_by_one_scaling() {
    let x = t64(&[1, 1, 3, 3], vec![1.0; 9]);
    let w = t64(&[1, 1, 1, 1], vec![2.0]);
    let y = x.conv2d(&w, None, 1, 0, 1).unwrap();
    assert_eq!(y.shape(), &[1, 1, 3, 3]);
    assert!(y.to_vec().iter().all(|&v| v == 2.0));
}

#[test]
fn conv2d_shape_arithmetic() {
    let mut rng = Rng::new(0);
    let x = Tensor::<f32>::rand_uniform(&[1, 16, 8, 8], -1.0, 1.0, &mut rng);
    let w = Tensor::<f32>::rand_uniform(&[32, 16, 3, 3], -1.0, 1.0, &mut rng);
    let y = x.conv2d(&w, None, 1, 1, 1).unwrap();
    assert_eq!(y.shape(), &[1, 32, 8, 8]);
    // stride 2 halves
    let y2 = x.conv2d(&w, None, 2, 1, 1).unwrap();
    assert_eq!(y2.shape(), &[1, 32, 4, 4]);
}

#[test]
fn conv2d_shape_errors_name_dimension() {
    let x = Tensor::<f32>::zeros(&[1, 6, 4, 4]);
    let w = Tensor::<f32>::zeros(&[4, 3, 3, 3]);
    // 6 channels with groups 1 but kernel expects 3
    let err = x.conv2d(&w, None, 1, 1, 1).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("kernel input dim"), "got: {msg}");
    // non-divisible groups
    let err = x.conv2d(&w, None, 1, 1, 4).unwrap_err();
    assert!(err.to_string().contains("not divisible"), "got: {err}");
}

/// Brute-force correlation, independent of the im2col path.
#[allow(clippy::too_many_arguments)]
fn conv_naive(
    x: &[f64],
    w: &[f64],
    n: usize,
    c_in: usize,
    h: usize,
    wd: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    pad: usize,
    groups: usize,
) -> Vec<f64> {
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (wd + 2 * pad - k) / stride + 1;
    let (ci_g, co_g) = (c_in / groups, c_out / groups);
    let mut out = vec![0.0; n * c_out * ho * wo];
    for ni in 0..n {
        for o in 0..c_out {
            let g = o / co_g;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = 0.0;
                    for ci in 0..ci_g {
                        let c = g * ci_g + ci;
                        for ki in 0..k {
                            for kj in 0..k {
                                let iy = (oy * stride + ki) as isize - pad as isize;
                                let ix = (ox * stride + kj) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += x[((ni * c_in + c) * h + iy as usize) * wd + ix as usize]
                                    * w[((o * ci_g + ci) * k + ki) * k + kj];
                            }
                        }
                    }
                    out[((ni * c_out + o) * ho + oy) * wo + ox] = acc;
                }
            }
        }
    }
    out
}

#[test]
fn conv2d_matches_naive_loop_including_groups() {
    let mut rng = Rng::new(42);
    for &(n, c_in, h, c_out, k, stride, pad, groups) in &[
        (2usize, 4usize, 6usize, 6usize, 3usize, 1usize, 1usize, 2usize),
        (1, 8, 5, 8, 3, 2, 1, 8), // depthwise
        (1, 3, 7, 5, 1, 1, 0, 1),
        (2, 6, 4, 4, 3, 1, 1, 2),
    ] {
        let x = Tensor::<f64>::rand_uniform(&[n, c_in, h, h], -1.0, 1.0, &mut rng);
        let w = Tensor::<f64>::rand_uniform(&[c_out, c_in / groups, k, k], -1.0, 1.0, &mut rng);
        let y = x.conv2d(&w, None, stride, pad, groups).unwrap();
        let expect = conv_naive(
            &x.to_vec(),
            &w.to_vec(),
            n,
            c_in,
            h,
            h,
            c_out,
            k,
            stride,
            pad,
            groups,
        );
        let got = y.to_vec();
        assert_eq!(got.len(), expect.len());
        for (a, b) in got.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12, "conv mismatch: {a} vs {b}");
        }
    }
}

#[test]
fn conv2d_grad_check() {
    let check = grad_check_seeded(
        |inp| {
            inp[0]
                .conv2d(&inp[1], Some(&inp[2]), 1, 1, 1)?
                .sum_all()
        },
        &[&[1, 2, 4, 4], &[3, 2, 3, 3], &[3]],
        1e-5,
        7,
    )
    .unwrap();
    assert!(check.max_rel_err < 1e-6, "{check:?}");

    // strided + grouped
    let check = grad_check_seeded(
        |inp| inp[0].conv2d(&inp[1], None, 2, 1, 2)?.sum_all(),
        &[&[2, 4, 5, 5], &[6, 2, 3, 3]],
        1e-5,
        8,
    )
    .unwrap();
    assert!(check.max_rel_err < 1e-6, "{check:?}");
}

#[test]
fn batch_norm_identity_on_standardized_input() {
    // per-channel mean 0, var 1 (eval stats (0,1)) passes through up to eps
    let x = t64(&[1, 1, 1, 4], vec![-1.5, -0.5, 0.5, 1.5]);
    // normalize to exactly mean 0 var 1
    let m = 0.0;
    let v = (1.5f64 * 1.5 + 0.5 * 0.5) * 2.0 / 4.0;
    let xn: Vec<f64> = x.to_vec().iter().map(|&a| (a - m) / v.sqrt()).collect();
    let x = t64(&[1, 1, 1, 4], xn.clone());
    let gamma = t64(&[1], vec![1.0]);
    let beta = t64(&[1], vec![0.0]);
    let rm = t64(&[1], vec![0.0]);
    let rv = t64(&[1], vec![1.0]);
    let y = x
        .batch_norm(&gamma, &beta, &rm, &rv, 1e-5, 0.1, false)
        .unwrap();
    for (a, b) in y.to_vec().iter().zip(&xn) {
        assert!((a - b).abs() < 1e-4, "{a} vs {b}");
    }
}

#[test]
fn batch_norm_gamma_zero_yields_beta() {
    let mut rng = Rng::new(1);
    let x = Tensor::<f64>::rand_uniform(&[2, 3, 4, 4], -2.0, 2.0, &mut rng);
    let gamma = t64(&[3], vec![0.0; 3]);
    let beta = t64(&[3], vec![0.5, -1.0, 2.0]);
    let rm = t64(&[3], vec![0.0; 3]);
    let rv = t64(&[3], vec![1.0; 3]);
    for training in [false, true] {
        let y = x
            .batch_norm(&gamma, &beta, &rm, &rv, 1e-5, 0.1, training)
            .unwrap();
        let out = y.to_vec();
        for c in 0..3 {
            for i in 0..16 {
                for n in 0..2 {
                    let v = out[(n * 3 + c) * 16 + i];
                    assert!((v - beta.to_vec()[c]).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn batch_norm_grad_check_training_mode() {
    let check = grad_check_seeded(
        |inp| {
            let rm = Tensor::zeros(&[3]);
            let rv = Tensor::full(&[3], 1.0);
            // weight by a fixed random probe so the loss actually depends on
            // the input (sums of normalized squares are nearly constant)
            let probe = Tensor::rand_uniform(&[2, 3, 3, 3], -1.0, 1.0, &mut Rng::new(99));
            inp[0]
                .batch_norm(&inp[1], &inp[2], &rm, &rv, 1e-5, 0.1, true)?
                .mul(&probe)?
                .sum_all()
        },
        &[&[2, 3, 3, 3], &[3], &[3]],
        1e-5,
        11,
    )
    .unwrap();
    assert!(check.max_rel_err < 1e-6, "{check:?}");
}

#[test]
fn batch_norm_updates_running_stats() {
    let x = t64(&[1, 1, 1, 2], vec![1.0, 3.0]); // mean 2, biased var 1, unbiased 2
    let gamma = t64(&[1], vec![1.0]);
    let beta = t64(&[1], vec![0.0]);
    let rm = t64(&[1], vec![0.0]);
    let rv = t64(&[1], vec![1.0]);
    x.batch_norm(&gamma, &beta, &rm, &rv, 1e-5, 0.1, true).unwrap();
    assert!((rm.to_vec()[0] - 0.2).abs() < 1e-12);
    assert!((rv.to_vec()[0] - (0.9 + 0.1 * 2.0)).abs() < 1e-12);
}

#[test]
fn activation_values() {
    let x = t64(&[5], vec![0.0, -1.0, 2.0, 0.0, 0.0]);
    let silu = x.silu().unwrap().to_vec();
    assert_eq!(silu[0], 0.0);
    let sig = x.sigmoid().unwrap().to_vec();
    assert_eq!(sig[0], 0.5);
    let relu = x.relu().unwrap().to_vec();
    assert_eq!(relu[1], 0.0);
    assert_eq!(relu[2], 2.0);
}

#[test]
fn silu_derivative_at_zero_is_half() {
    let x = var64(&[1], vec![0.0]);
    let tape = Tape::new();
    tape.watch(&x);
    let y = x.silu().unwrap().sum_all().unwrap();
    y.backward().unwrap();
    assert!((x.grad().unwrap()[0] - 0.5).abs() < 1e-15);
}

#[test]
fn unknown_activation_kind_rejected() {
    assert!("gelu".parse::<ActKind>().is_err());
    assert_eq!("relu".parse::<ActKind>().unwrap(), ActKind::Relu);
}

#[test]
fn softmax_uniform_row() {
    let x = t64(&[1, 4], vec![3.0; 4]);
    let y = x.softmax(1).unwrap().to_vec();
    for v in y {
        assert!((v - 0.25).abs() < 1e-15);
    }
}

#[test]
fn softmax_rows_sum_to_one() {
    let mut rng = Rng::new(5);
    for _ in 0..20 {
        let x = Tensor::<f64>::rand_uniform(&[3, 7], -30.0, 30.0, &mut rng);
        let y = x.softmax(1).unwrap();
        let data = y.to_vec();
        for r in 0..3 {
            let s: f64 = data[r * 7..(r + 1) * 7].iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "row sum {s}");
        }
    }
}

#[test]
fn concat_channel_axis() {
    let a = Tensor::<f32>::zeros(&[1, 2, 4, 4]);
    let b = Tensor::<f32>::zeros(&[1, 3, 4, 4]);
    let y = Tensor::concat(1, &[&a, &b]).unwrap();
    assert_eq!(y.shape(), &[1, 5, 4, 4]);
    let err = Tensor::concat(4, &[&a, &b]).unwrap_err();
    assert!(matches!(err, crate::Error::Axis { .. }));
}

#[test]
fn backward_of_sum_is_ones_and_square_is_2x() {
    let x = var64(&[2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, -1.0]);
    let tape = Tape::new();
    tape.watch(&x);
    let loss = x.sum_all().unwrap();
    loss.backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![1.0; 6]);

    x.zero_grad();
    let tape = Tape::new();
    tape.watch(&x);
    let loss = x.mul(&x).unwrap().sum_all().unwrap();
    loss.backward().unwrap();
    let g = x.grad().unwrap();
    for (gi, xi) in g.iter().zip(x.to_vec()) {
        assert!((gi - 2.0 * xi).abs() < 1e-15);
    }
}

#[test]
fn backward_accumulates_until_zeroed() {
    let x = var64(&[2], vec![1.0, 2.0]);
    for i in 1..=3 {
        let tape = Tape::new();
        tape.watch(&x);
        x.sum_all().unwrap().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![i as f64; 2]);
    }
    x.zero_grad();
    assert!(x.grad().is_none());
}

#[test]
fn backward_rejects_non_scalar_and_detached() {
    let x = var64(&[2], vec![1.0, 2.0]);
    let tape = Tape::new();
    tape.watch(&x);
    let y = x.mul_scalar(2.0).unwrap();
    assert!(matches!(
        y.backward(),
        Err(crate::Error::NonScalarLoss { numel: 2 })
    ));
    // constant chain: no tape anywhere
    let z = t64(&[1], vec![3.0]).mul_scalar(2.0).unwrap();
    assert!(matches!(z.backward(), Err(crate::Error::DetachedGraph)));
}

#[test]
fn tape_is_single_use() {
    let x = var64(&[1], vec![2.0]);
    let tape = Tape::new();
    tape.watch(&x);
    let y = x.square().unwrap().sum_all().unwrap();
    y.backward().unwrap();
    // The same tape cannot be replayed.
    let err = y.backward().unwrap_err();
    assert!(matches!(err, crate::Error::TapeConsumed));
}

#[test]
fn grad_check_linear_map_is_exact() {
    let check = grad_check_seeded(
        |inp| inp[0].mul_scalar(3.0)?.sum_all(),
        &[&[4, 4]],
        1e-5,
        3,
    )
    .unwrap();
    assert!(check.max_rel_err < 1e-10, "{check:?}");
}

#[test]
fn grad_check_relu_away_from_kink() {
    // resample inputs with |x| < 10*eps before probing
    let eps = 1e-5;
    let mut rng = Rng::new(9);
    let mut data: Vec<f64> = (0..32).map(|_| rng.uniform(-1.0, 1.0)).collect();
    for v in &mut data {
        if v.abs() < 10.0 * eps {
            *v = 10.0 * eps;
        }
    }
    let x = var64(&[32], data);
    let check = grad_check(|inp| inp[0].relu()?.sum_all(), &[x], eps).unwrap();
    assert!(check.max_rel_err < 1e-6, "{check:?}");
}

#[test]
fn primitive_family_grad_checks() {
    // elementwise binary with broadcasting
    let check = grad_check_seeded(
        |i| i[0].mul(&i[1])?.add(&i[2])?.sum_all(),
        &[&[2, 3, 2, 2], &[3, 1, 1], &[2, 2]],
        1e-5,
        21,
    )
    .unwrap();
    assert!(check.max_rel_err < 1e-6, "mul/add: {check:?}");

    let check = grad_check_seeded(
        |i| {
            let d = i[0].add_scalar(3.0)?; // keep denominator away from 0
            i[1].div(&d)?.sum_all()
        },
        &[&[4], &[2, 4]],
        1e-5,
        22,
    )
    .unwrap();
    assert!(check.max_rel_err < 1e-6, "div: {check:?}");

    let check = grad_check_seeded(
        |i| i[0].sub(&i[1])?.square()?.sum_all(),
        &[&[3, 3], &[3, 3]],
        1e-5,
        23,
    )
    .unwrap();
    assert!(check.max_rel_err < 1e-6, "sub: {check:?}");

    // min/max away from ties
    let check = grad_check_seeded(
        |i| {
            let shifted = i[1].add_scalar(0.01)?;
            i[0].min_elem(&shifted)?
                .add(&i[0].max_elem(&shifted)?)?
                .sum_all()
        },
        &[&[8], &[8]],
        1e-6,
        24,
    )
    .unwrap();
    assert!(check.max_rel_err < 1e-5, "min/max: {check:?}");

    // unary chain
    let check = grad_check_seeded(
        |i| {
            i[0].sigmoid()?
                .mul_scalar(2.0)?
                .exp()?
                .atan()?
                .silu()?
                .sum_all()
        },
        &[&[3, 4]],
        1e-5,
        25,
    )
    .unwrap();
    assert!(check.max_rel_err < 1e-6, "unary chain: {check:?}");

    // sqrt away from zero
    let check = grad_check_seeded(
        |i| i[0].square()?.add_scalar(0.5)?.sqrt()?.sum_all(),
        &[&[6]],
        1e-5,
        26,
    )
    .unwrap();
    assert!(check.max_rel_err < 1e-6, "sqrt: {check:?}");

    // reductions
    let check = grad_check_seeded(
        |i| i[0].mean_axes(&[0, 2])?.square()?.sum_all(),
        &[&[2, 3, 4]],
        1e-5,
        27,
    )
    .unwrap();
    assert!(check.max_rel_err < 1e-6, "mean_axes: {check:?}");

    // shape ops
    let check = grad_check_seeded(
        |i| {
            let p = i[0].permute(&[1, 0, 2])?.reshape(&[6, 2])?;
            let parts = p.split(0, &[2, 4])?;
            let c = Tensor::concat(0, &[&parts[1], &parts[0]])?;
            c.square()?.sum_all()
        },
        &[&[2, 3, 2]],
        1e-5,
        28,
    )
    .unwrap();
    assert!(check.max_rel_err < 1e-6, "shape ops: {check:?}");

    // matmul 2d and batched
    let check = grad_check_seeded(
        |i| i[0].matmul(&i[1])?.square()?.sum_all(),
        &[&[3, 4], &[4, 2]],
        1e-5,
        29,
    )
    .unwrap();
    assert!(check.max_rel_err < 1e-6, "matmul: {check:?}");
    let check = grad_check_seeded(
        |i| i[0].matmul(&i[1])?.sum_all(),
        &[&[2, 3, 4], &[2, 4, 2]],
        1e-5,
        30,
    )
    .unwrap();
    assert!(check.max_rel_err < 1e-6, "batched matmul: {check:?}");

    // softmax
    let check = grad_check_seeded(
        |i| i[0].softmax(1)?.square()?.sum_all(),
        &[&[3, 5]],
        1e-5,
        31,
    )
    .unwrap();
    assert!(check.max_rel_err < 1e-6, "softmax: {check:?}");

    // pooling / upsampling (pool probed away from ties by construction)
    let check = grad_check_seeded(
        |i| i[0].max_pool2d(3, 1, 1)?.sum_all(),
        &[&[1, 2, 5, 5]],
        1e-6,
        32,
    )
    .unwrap();
    assert!(check.max_rel_err < 1e-5, "max_pool: {check:?}");
    let check = grad_check_seeded(
        |i| i[0].upsample_nearest2d(2)?.square()?.sum_all(),
        &[&[1, 2, 3, 3]],
        1e-5,
        33,
    )
    .unwrap();
    assert!(check.max_rel_err < 1e-6, "upsample: {check:?}");

    // bce with logits
    let check = grad_check_seeded(
        |i| {
            let tgt = Tensor::full(&[2, 4], 0.3);
            i[0].bce_with_logits(&tgt)?.mean_all()
        },
        &[&[2, 4]],
        1e-5,
        34,
    )
    .unwrap();
    assert!(check.max_rel_err < 1e-6, "bce: {check:?}");

    // gather_cells
    let check = grad_check_seeded(
        |i| {
            i[0].gather_cells(&[(0, 0, 1, 1), (0, 1, 0, 2), (0, 0, 1, 1)])?
                .square()?
                .sum_all()
        },
        &[&[1, 2, 3, 2, 3]],
        1e-5,
        35,
    )
    .unwrap();
    assert!(check.max_rel_err < 1e-6, "gather_cells: {check:?}");

    // clamp interior
    let check = grad_check_seeded(
        |i| i[0].mul_scalar(0.4)?.clamp(-0.9, 0.9)?.square()?.sum_all(),
        &[&[6]],
        1e-5,
        36,
    )
    .unwrap();
    assert!(check.max_rel_err < 1e-6, "clamp: {check:?}");
}

#[test]
fn max_pool_tie_break_lowest_index() {
    let x = var64(&[1, 1, 2, 2], vec![1.0, 1.0, 1.0, 1.0]);
    let tape = Tape::new();
    tape.watch(&x);
    let y = x.max_pool2d(2, 1, 0).unwrap();
    assert_eq!(y.shape(), &[1, 1, 1, 1]);
    y.sum_all().unwrap().backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn upsample_values() {
    let x = t64(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
    let y = x.upsample_nearest2d(2).unwrap();
    assert_eq!(y.shape(), &[1, 1, 4, 4]);
    let v = y.to_vec();
    assert_eq!(v[0], 1.0);
    assert_eq!(v[3], 2.0);
    assert_eq!(v[15], 4.0);
}

#[test]
fn determinism_same_seed_same_bits() {
    let run = || -> Vec<f32> {
        let mut rng = Rng::new(1234);
        let x = Tensor::<f32>::rand_uniform(&[2, 3, 8, 8], -1.0, 1.0, &mut rng);
        let w = Tensor::<f32>::rand_uniform(&[4, 3, 3, 3], -0.5, 0.5, &mut rng);
        let y = x
            .conv2d(&w, None, 1, 1, 1)
            .unwrap()
            .silu()
            .unwrap()
            .max_pool2d(2, 2, 0)
            .unwrap();
        y.to_vec()
    };
    let a = run();
    let b = run();
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
}

#[test]
fn mac_counter_tracks_conv_cost() {
    let x = Tensor::<f32>::zeros(&[1, 4, 8, 8]);
    let w = Tensor::<f32>::zeros(&[8, 4, 3, 3]);
    macs::reset();
    x.conv2d(&w, None, 1, 1, 1).unwrap();
    assert_eq!(macs::take(), (8 * 4 * 3 * 3 * 8 * 8) as u64);
}

#[test]
fn split_sizes_must_match_axis() {
    let x = Tensor::<f32>::zeros(&[2, 5]);
    assert!(x.split(1, &[2, 2]).is_err());
    let parts = x.split(1, &[2, 3]).unwrap();
    assert_eq!(parts[0].shape(), &[2, 2]);
    assert_eq!(parts[1].shape(), &[2, 3]);
}

#[test]
fn grad_flows_only_to_requires_grad_leaves() {
    let x = var64(&[2], vec![1.0, 2.0]);
    let k = t64(&[2], vec![3.0, 4.0]); // constant
    let tape = Tape::new();
    tape.watch(&x);
    x.mul(&k).unwrap().sum_all().unwrap().backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![3.0, 4.0]);
    assert!(k.grad().is_none());
}
