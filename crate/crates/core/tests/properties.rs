#![allow(clippy::needless_range_loop)]

use proptest::prelude::*;

use kac::basis::{BsplineBasis, RbfGrid};
use kac::heads::{kac_forward_factored, ClassifierHead, FactoredKacWeights, Head, HeadSpec, KacHead, LayerNormParams};
use kac::numerics::{argmax, softmax_rows, Matrix, Rng};

fn matrix(rng: &mut Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_vec(r, c, (0..r * c).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matmul_is_associative(seed in any::<u64>(), a in 1usize..6, b in 1usize..6, c in 1usize..6, d in 1usize..6) {
        let mut rng = Rng::new(seed);
        let (x, y, z) = (matrix(&mut rng, a, b), matrix(&mut rng, b, c), matrix(&mut rng, c, d));
        let left = x.matmul(&y).unwrap().matmul(&z).unwrap();
        let right = x.matmul(&y.matmul(&z).unwrap()).unwrap();
        for (l, r) in left.as_slice().iter().zip(right.as_slice()) {
            prop_assert!((l - r).abs() <= 1e-12);
        }
    }

    #[test]
    fn softmax_rows_are_distributions(seed in any::<u64>(), rows in 1usize..5, cols in 1usize..8, shift in -50.0f64..50.0) {
        let mut rng = Rng::new(seed);
        let m = matrix(&mut rng, rows, cols).scale(10.0).unwrap();
        let s = softmax_rows(&m);
        let shifted = Matrix::from_vec(rows, cols, m.as_slice().iter().map(|v| v + shift).collect()).unwrap();
        let t = softmax_rows(&shifted);
        for r in 0..rows {
            let sum: f64 = s.row(r).iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(s.row(r).iter().all(|&p| p > 0.0 && p <= 1.0));
            for (a, b) in s.row(r).iter().zip(t.row(r)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rbf_values_and_symmetry(n in 1usize..10, half in 0.5f64..4.0, sigma in 0.5f64..2.0, x in -6.0f64..6.0) {
        let grid = RbfGrid::new(n, -half, half, sigma).unwrap();
        let v = grid.eval(x);
        prop_assert!(v.iter().all(|&p| p > 0.0 && p <= 1.0));
        let mirrored = grid.eval(-x);
        for i in 0..n {
            prop_assert_eq!(v[i], mirrored[n - 1 - i]);
        }
        for (i, &c) in grid.centers().iter().enumerate() {
            prop_assert_eq!(grid.eval(c)[i], 1.0);
        }
    }

    #[test]
    fn bspline_partition_of_unity(degree in 1usize..5, intervals in 1usize..6, t in 0.0f64..1.0) {
        let basis = BsplineBasis::uniform(degree, intervals, -2.0, 2.0).unwrap();
        let (lo, hi) = basis.interval();
        let x = lo + t * (hi - lo);
        let sum: f64 = basis.eval(x).iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn factored_and_consolidated_logits_agree(seed in any::<u64>(), n in 1usize..17, nb in 1usize..9, classes in 1usize..11) {
        let mut rng = Rng::new(seed);
        let grid = RbfGrid::new(nb, -2.0, 2.0, 1.0).unwrap();
        let mut ln = LayerNormParams::new(n, true);
        for g in ln.gain.iter_mut() { *g = rng.uniform(0.5, 1.5); }
        for b in ln.bias.iter_mut() { *b = rng.uniform(-0.5, 0.5); }
        let fw = FactoredKacWeights::new(matrix(&mut rng, classes, n), matrix(&mut rng, nb, classes)).unwrap();
        let head = KacHead::from_parts(grid.clone(), ln.clone(), fw.consolidate(), vec![classes]).unwrap();
        let f: Vec<f64> = (0..n).map(|_| rng.normal() * 3.0).collect();
        let a = head.forward(&f).unwrap();
        let b = kac_forward_factored(&fw, &grid, &ln, &f).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn expansion_leaves_old_logits_bit_identical(seed in any::<u64>(), kind in 0usize..4, blocks in proptest::collection::vec(1usize..4, 1..5)) {
        let spec = [
            HeadSpec::kac_default(),
            HeadSpec::Linear,
            HeadSpec::bspline_default(true),
            HeadSpec::Mlp { num_basis: 2, frozen: false },
        ][kind].clone();
        let mut rng = Rng::new(seed);
        let n = 5;
        let mut head: ClassifierHead = spec.build(n, &mut rng).unwrap();
        let f: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let mut total = 0;
        for b in blocks.iter() {
            let before = head.forward(&f).unwrap();
            head.expand_classes(*b, &mut rng).unwrap();
            total += b;
            let after = head.forward(&f).unwrap();
            prop_assert_eq!(after.len(), total);
            for (x, y) in before.iter().zip(&after) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        prop_assert_eq!(head.task_blocks(), &blocks[..]);
    }

    #[test]
    fn argmax_is_scale_invariant(seed in any::<u64>(), len in 1usize..12, scale in 0.01f64..100.0) {
        let mut rng = Rng::new(seed);
        let v: Vec<f64> = (0..len).map(|_| rng.normal()).collect();
        let scaled: Vec<f64> = v.iter().map(|x| x * scale).collect();
        prop_assert_eq!(argmax(&v), argmax(&scaled));
    }

    /// The gradient reaching `W[c, p N + i]` is exactly the upstream value
    /// times `phi_i` at the normalized input, so basis functions far from
    /// the input receive vanishing updates.
    #[test]
    fn kac_weight_gradient_is_local(seed in any::<u64>(), n in 1usize..6) {
        let mut rng = Rng::new(seed);
        let grid = RbfGrid::new(4, -2.0, 2.0, 1.0).unwrap();
        let mut head = KacHead::new(n, grid.clone(), LayerNormParams::new(n, true));
        head.expand_classes(3, &mut rng).unwrap();
        let f: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let up = [rng.normal(), rng.normal(), rng.normal()];
        let g = head.backward(&f, &up).unwrap();
        let x = kac::heads::layer_norm(head.layer_norm(), &f).unwrap();
        for c in 0..3 {
            for p in 0..n {
                let phi = grid.eval(x[p]);
                for i in 0..4 {
                    prop_assert_eq!(g.d_weights.get(c, p * 4 + i), up[c] * phi[i]);
                }
            }
        }
    }
}
