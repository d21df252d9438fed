use proptest::prelude::*;

use super::*;
use crate::rng::{normal_tensor, stream};

fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

/// Checks d(sum(out ∘ r))/d(x) against finite differences, where `build`
/// maps a leaf to an output and `r` is a fixed random readout.
fn check_primitive(x: &Tensor, seed: u64, build: impl Fn(&mut Tape, Var) -> Var) {
    let readout = |tape: &mut Tape, out: Var, seed: u64| {
        let shape = tape.value(out).shape().to_vec();
        let r = tape.leaf(normal_tensor(&shape, &mut stream(seed, "readout")));
        let prod = tape.mul(out, r).unwrap();
        tape.sum(prod)
    };
    let mut tape = Tape::new();
    let leaf = tape.leaf(x.clone());
    let out = build(&mut tape, leaf);
    let loss = readout(&mut tape, out, seed);
    let analytic = tape.backward(loss).unwrap().wrt(leaf).unwrap();
    let numeric = finite_diff(
        |probe| {
            let mut tape = Tape::new();
            let leaf = tape.leaf(probe.clone());
            let out = build(&mut tape, leaf);
            let loss = readout(&mut tape, out, seed);
            tape.value(loss).data()[0]
        },
        x,
        1e-5,
    )
    .unwrap();
    for (a, n) in analytic.data().iter().zip(numeric.data()) {
        assert!(relative_error(*a, *n) < 1e-4, "analytic {a} vs numeric {n}");
    }
}

#[test]
fn sum_gradient_is_ones() {
    let mut tape = Tape::new();
    let x = tape.leaf(t(&[3], &[1.0, -2.0, 5.0]));
    let loss = tape.sum(x);
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.wrt(x).unwrap().data(), &[1.0, 1.0, 1.0]);
}

#[test]
fn square_gradient() {
    let mut tape = Tape::new();
    let x = tape.leaf(t(&[2], &[1.0, 2.0]));
    let sq = tape.mul(x, x).unwrap();
    let loss = tape.sum(sq);
    assert_eq!(tape.backward(loss).unwrap().wrt(x).unwrap().data(), &[2.0, 4.0]);
}

#[test]
fn non_scalar_loss_is_rejected() {
    let mut tape = Tape::new();
    let x = tape.leaf(t(&[2], &[1.0, 2.0]));
    assert!(tape.backward(x).is_err());
}

#[test]
fn unused_leaf_has_no_gradient() {
    let mut tape = Tape::new();
    let x = tape.leaf(t(&[1], &[1.0]));
    let y = tape.leaf(t(&[1], &[2.0]));
    let loss = tape.sum(x);
    assert!(tape.backward(loss).unwrap().wrt(y).is_none());
}

#[test]
fn finite_diff_of_sum_and_square() {
    let x = t(&[4], &[0.3, -1.0, 2.0, 7.0]);
    let g = finite_diff(|v| v.sum(), &x, 1e-4).unwrap();
    assert!(g.data().iter().all(|v| (v - 1.0).abs() < 1e-9));
    let g = finite_diff(|v| v.data()[0] * v.data()[0], &t(&[1], &[3.0]), 1e-3).unwrap();
    assert!((g.data()[0] - 6.0).abs() < 1e-6);
}

#[test]
fn finite_diff_rejects_bad_step_and_non_finite() {
    let x = t(&[1], &[1.0]);
    assert!(finite_diff(|v| v.sum(), &x, 0.0).is_err());
    assert!(finite_diff(|v| v.sum(), &x, -1e-3).is_err());
    assert!(finite_diff(|_| f64::NAN, &x, 1e-3).is_err());
}

#[test]
fn relaxed_spike_gradient_is_surrogate_derivative() {
    let xs = [-1.5, -0.2, 0.0, 0.7, 3.0];
    let mut tape = Tape::new();
    let x = tape.leaf(t(&[5], &xs));
    let s = tape.spike(x, 0.5, 2.0, SpikeMode::Relaxed);
    let loss = tape.sum(s);
    let g = tape.backward(loss).unwrap().wrt(x).unwrap();
    for (gi, xi) in g.data().iter().zip(xs) {
        assert_eq!(*gi, surrogate_grad(xi - 0.5, 2.0));
    }
}

#[test]
fn spiking_mode_is_hard_forward_with_surrogate_backward() {
    let mut tape = Tape::new();
    let x = tape.leaf(t(&[3], &[0.5, 1.0, 1.5]));
    let s = tape.spike(x, 1.0, 2.0, SpikeMode::Spiking);
    assert_eq!(tape.value(s).data(), &[0.0, 1.0, 1.0]);
    let loss = tape.sum(s);
    let g = tape.backward(loss).unwrap().wrt(x).unwrap();
    assert_eq!(g.data()[1], 1.0);
    assert_eq!(g.data()[0], surrogate_grad(-0.5, 2.0));
}

#[test]
fn surrogate_midpoint_and_limits() {
    assert_eq!(surrogate(0.0, 2.0), 0.5);
    assert!(surrogate(50.0, 2.0) > 0.99);
    assert!(surrogate(-50.0, 2.0) < 0.01);
    assert_eq!(surrogate_grad(0.0, 2.0), 1.0);
}

#[test]
fn spiking_gradcheck_is_refused() {
    assert!(gradcheck(0, 1e-4, SpikeMode::Spiking).is_err());
}

#[test]
fn network_gradcheck_passes_for_five_seeds() {
    for seed in 0..5 {
        for h in [1e-3, 1e-4] {
            let r = gradcheck(seed, h, SpikeMode::Relaxed).unwrap();
            assert!(r.passes(1e-4), "{r:?}");
            if h == 1e-4 {
                assert!(r.max_elementwise_error < 1e-4, "{r:?}");
            }
            assert!(r.coordinates > 100);
        }
    }
}

#[test]
fn mode_parses() {
    assert_eq!("relaxed".parse::<SpikeMode>().unwrap(), SpikeMode::Relaxed);
    assert!("soft".parse::<SpikeMode>().is_err());
}

fn small(seed: u64, shape: &[usize]) -> Tensor {
    normal_tensor(shape, &mut stream(seed, "primitive"))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(5))]

    #[test]
    fn conv2d_backward_matches(seed in 0u64..1000) {
        let w = small(seed + 1, &[2, 2, 3, 3]);
        let b = small(seed + 2, &[2]);
        check_primitive(&small(seed, &[2, 2, 4, 5]), seed, |tape, x| {
            let w = tape.leaf(w.clone());
            let b = tape.leaf(b.clone());
            tape.conv2d(x, w, Some(b), 1, 1).unwrap()
        });
        // gradient with respect to the weights
        let x = small(seed, &[2, 4, 5]);
        check_primitive(&w, seed, |tape, w| {
            let x = tape.leaf(x.clone());
            tape.conv2d(x, w, None, 2, 1).unwrap()
        });
    }

    #[test]
    fn batchnorm_backward_matches(seed in 0u64..1000) {
        let gamma = small(seed + 1, &[3]);
        let beta = small(seed + 2, &[3]);
        check_primitive(&small(seed, &[2, 3, 2, 2]), seed, |tape, x| {
            let g = tape.leaf(gamma.clone());
            let b = tape.leaf(beta.clone());
            tape.batchnorm_eval(x, g, b, &[0.1, -0.2, 0.0], &[1.0, 0.5, 2.0], 1e-5).unwrap()
        });
        let x = small(seed, &[3, 2, 2]);
        check_primitive(&gamma, seed, |tape, g| {
            let x = tape.leaf(x.clone());
            let b = tape.leaf(beta.clone());
            tape.batchnorm_eval(x, g, b, &[0.0; 3], &[1.0; 3], 1e-5).unwrap()
        });
    }

    #[test]
    fn broadcast_backward_matches(seed in 0u64..1000) {
        let other = small(seed + 1, &[1, 3, 1, 2]);
        check_primitive(&small(seed, &[2, 3, 4, 2]), seed, |tape, x| {
            let o = tape.leaf(other.clone());
            let p = tape.mul(x, o).unwrap();
            tape.add(p, o).unwrap()
        });
        let x = small(seed, &[2, 3, 4, 2]);
        check_primitive(&other, seed, |tape, o| {
            let x = tape.leaf(x.clone());
            let p = tape.mul(x, o).unwrap();
            tape.sub(p, o).unwrap()
        });
    }

    #[test]
    fn maxpool_backward_matches(seed in 0u64..1000) {
        check_primitive(&small(seed, &[2, 3, 4]), seed, |tape, x| tape.maxpool(x, &[2]).unwrap());
    }

    #[test]
    fn relaxed_lif_backward_matches(seed in 0u64..1000) {
        let p = LifParams::default();
        check_primitive(&small(seed, &[4, 2, 3]), seed, |tape, x| {
            tape.lif(x, &p, SpikeMode::Relaxed).unwrap()
        });
    }

    #[test]
    fn linear_sigmoid_and_loss_backward_match(seed in 0u64..1000) {
        let w = small(seed + 1, &[3, 6]);
        let b = small(seed + 2, &[3]);
        let target = small(seed + 3, &[3]).map(|v| v * 3.0);
        check_primitive(&small(seed, &[2, 3]), seed, |tape, x| {
            let w = tape.leaf(w.clone());
            let b = tape.leaf(b.clone());
            let y = tape.linear(x, w, b).unwrap();
            let s = tape.sigmoid(y);
            let l = tape.smooth_l1(y, &target).unwrap();
            let l = tape.reshape(l, &[1]).unwrap();
            let m = tape.mean(s);
            let z = tape.add(l, m).unwrap();
            let z = tape.scale(z, 2.0);
            let stacked = tape.stack(&[z, z]).unwrap();
            tape.select(stacked, 1).unwrap()
        });
    }
}

#[test]
fn maxpool_routes_to_first_argmax() {
    let mut tape = Tape::new();
    let x = tape.leaf(t(&[1, 3], &[2.0, 2.0, 1.0]));
    let m = tape.maxpool(x, &[1]).unwrap();
    let loss = tape.sum(m);
    let g = tape.backward(loss).unwrap().wrt(x).unwrap();
    assert_eq!(g.data(), &[1.0, 0.0, 0.0]);
}

#[test]
#[ignore]
fn dump_gradcheck() {
    for seed in 0..5 {
        for h in [1e-2, 3e-3, 1e-3, 1e-4, 1e-5] {
            let r = gradcheck(seed, h, SpikeMode::Relaxed).unwrap();
            println!("{seed} {h:e} {:.3e} {} elem {:.3e}", r.max_rel_error, r.worst, r.max_elementwise_error);
        }
    }
}
