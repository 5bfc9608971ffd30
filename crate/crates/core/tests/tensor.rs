mod common;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use common::{normal_matrix, rng};
use syhgt_core::tensor::finite_difference_check;
use syhgt_core::{Matrix, Result, Tape, Var};

const ROWS: usize = 5;
const COLS: usize = 7;
const EPS: f64 = 1e-6;
const TOL: f64 = 1e-5;

type Build = fn(&mut Tape, &[Var], &mut ChaCha8Rng) -> Result<Var>;

/// Contracts a primitive's output with fixed random weights so every
/// output entry reaches the loss with a distinct factor. Weights are
/// scaled by `1/sqrt(len)` to keep the loss O(1), where central
/// differences are limited by truncation rather than round-off.
fn project(tape: &mut Tape, out: Var, rng: &mut ChaCha8Rng) -> Result<Var> {
    let (r, c) = tape.value(out).shape();
    let w = tape.constant(normal_matrix(r, c, rng).scale(1.0 / ((r * c) as f64).sqrt()));
    let weighted = tape.mul(out, w)?;
    tape.sum(weighted)
}

fn check(name: &str, leaves: usize, leaf_shape: (usize, usize), build: Build) {
    for seed in 0..100 {
        let mut rng = rng(seed);
        let mut tape = Tape::new();
        let vars: Vec<Var> = (0..leaves)
            .map(|_| tape.param(normal_matrix(leaf_shape.0, leaf_shape.1, &mut rng)))
            .collect();
        let out = build(&mut tape, &vars, &mut rng).unwrap();
        let loss = project(&mut tape, out, &mut rng).unwrap();
        let report = finite_difference_check(&mut tape, &vars, loss, EPS).unwrap();
        assert!(
            report.max_relative_error < TOL,
            "{name} seed {seed}: {:e} at {:?} {:?}",
            report.max_relative_error,
            report.worst,
            report.worst_values
        );
    }
}

#[test]
fn matmul_gradients() {
    check("matmul", 2, (ROWS, COLS), |t, v, _| {
        let bt = t.constant(Matrix::identity(COLS));
        let b = t.matmul(v[1], bt)?;
        let tr = t.constant(normal_matrix(COLS, ROWS, &mut common::rng(99)));
        let left = t.matmul(v[0], tr)?;
        t.matmul(left, b)
    });
}

#[test]
fn elementwise_gradients() {
    check("add", 2, (ROWS, COLS), |t, v, _| t.add(v[0], v[1]));
    check("mul", 2, (ROWS, COLS), |t, v, _| t.mul(v[0], v[1]));
    check("scale", 1, (ROWS, COLS), |t, v, _| t.scale(v[0], -1.7));
    check("exp", 1, (ROWS, COLS), |t, v, _| t.exp(v[0]));
    check("relu", 1, (ROWS, COLS), |t, v, _| t.relu(v[0]));
}

#[test]
fn softmax_gradients() {
    check("row_softmax", 1, (ROWS, COLS), |t, v, _| {
        t.row_softmax(v[0])
    });
    check("segment_softmax", 1, (ROWS, COLS), |t, v, _| {
        t.segment_softmax(v[0], &[2, 0, 2, 1, 2])
    });
    check("softmax_cross_entropy", 1, (1, COLS), |t, v, _| {
        t.softmax_cross_entropy(v[0], &[false, true, true, true, false, true, true], 3)
    });
}

#[test]
fn indexing_gradients() {
    check("gather_rows", 1, (ROWS, COLS), |t, v, _| {
        t.gather_rows(v[0], &[4, 0, 0, 2, 4, 4])
    });
    check("scatter_add_rows", 1, (ROWS, COLS), |t, v, _| {
        t.scatter_add_rows(v[0], &[1, 1, 0, 3, 1], 4)
    });
    check("add_rows_at", 2, (ROWS, COLS), |t, v, _| {
        let upd = t.gather_rows(v[1], &[0, 1])?;
        t.add_rows_at(v[0], upd, &[3, 1])
    });
    check("concat_rows", 2, (ROWS, COLS), |t, v, _| {
        t.concat_rows(&[v[1], v[0], v[1]])
    });
    check("mean_rows", 1, (ROWS, COLS), |t, v, _| {
        t.mean_rows(v[0], vec![vec![0, 1, 2], vec![4], vec![3, 4]])
    });
}

#[test]
fn typed_matmul_gradients() {
    check("typed_matmul", 3, (COLS - 1, COLS - 1), |t, v, rng| {
        let input = t.param(normal_matrix(ROWS, COLS - 1, rng));
        let types: Vec<usize> = (0..ROWS).map(|_| rng.random_range(0..3)).collect();
        let out = t.typed_matmul(input, &types, v, 2)?;
        let plain = t.typed_matmul(input, &types, v, 1)?;
        let a = project(t, out, rng)?;
        let b = project(t, plain, rng)?;
        t.add(a, b)
    });
}

#[test]
fn reductions_gradients() {
    check("sum", 1, (ROWS, COLS), |t, v, _| {
        let sq = t.mul(v[0], v[0])?;
        t.sum(sq)
    });
    check("mean", 1, (ROWS, COLS), |t, v, _| {
        let sq = t.mul(v[0], v[0])?;
        t.mean(sq)
    });
}

#[test]
fn row_softmax_rows_sum_to_one() {
    for seed in 0..100 {
        let m = normal_matrix(ROWS, COLS, &mut rng(seed)).scale(10.0);
        for row in m.row_softmax().as_slice().chunks(COLS) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn replay_is_bit_identical() {
    let mut rng = rng(5);
    let mut tape = Tape::new();
    let a = tape.param(normal_matrix(ROWS, COLS, &mut rng));
    let b = tape.param(normal_matrix(COLS, ROWS, &mut rng));
    let ab = tape.matmul(a, b).unwrap();
    let s = tape.row_softmax(ab).unwrap();
    let e = tape.exp(s).unwrap();
    let loss = tape.sum(e).unwrap();
    let first = tape.value(loss).clone();
    let first_grads = tape.backward(loss).unwrap().get(a).cloned().unwrap();
    tape.replay().unwrap();
    tape.replay().unwrap();
    assert_eq!(
        tape.value(loss).as_slice()[0].to_bits(),
        first.as_slice()[0].to_bits()
    );
    let again = tape.backward(loss).unwrap().get(a).cloned().unwrap();
    assert!(again
        .as_slice()
        .iter()
        .zip(first_grads.as_slice())
        .all(|(x, y)| x.to_bits() == y.to_bits()));
}
