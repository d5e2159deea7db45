mod common;

use ndarray::Array2;
use tgrn_core::nn::Tape;

#[test]
fn every_op_layer_and_family_matches_finite_differences() {
    let checks = common::gradcheck::all_checks();
    let failing: Vec<_> = checks.iter().filter(|(_, e)| !(*e < 1e-4)).collect();
    assert!(failing.is_empty(), "gradient mismatches: {failing:?}");
    assert!(checks.iter().any(|(n, _)| n == "model:gcrn-gru:link:carried"));
}

#[test]
fn sum_backward_is_ones() {
    let tape = Tape::<f64>::new();
    let x = tape.var(Array2::from_elem((3, 2), 0.7)).unwrap();
    let s = tape.sum(x).unwrap();
    let g = tape.backward(s).unwrap();
    assert_eq!(g.get(x).unwrap(), &Array2::<f64>::ones((3, 2)));
}

#[test]
fn mse_of_identical_inputs_has_zero_gradient() {
    let tape = Tape::<f64>::new();
    let x = tape.var(Array2::from_shape_fn((2, 3), |(i, j)| (i * 3 + j) as f64)).unwrap();
    let l = tape.mse(x, x).unwrap();
    let g = tape.backward(l).unwrap();
    assert!(g.get(x).unwrap().iter().all(|&v| v == 0.0));
}
