mod common;

use common::gradcheck::{check_inputs, check_params};
use common::random_matrix;
use histo_adapt::losses::{classification_loss, classification_loss_grad, siamese_loss, siamese_loss_grad, EPSILON};
use histo_adapt::networks::Classifier;
use histo_adapt::nn::Matrix;
use histo_adapt::rng::rng_for;

#[test]
fn classifier_parameters_match_finite_differences() {
    let clf = Classifier::new(6, &mut rng_for(1, &[]));
    let feats = random_matrix(5, 6, 2);
    let labels = Matrix::from_rows(&(0..5).map(|i| if i % 2 == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] }).collect::<Vec<_>>()).unwrap();
    let stats = check_params(
        &clf,
        8,
        3,
        |c| classification_loss(&c.classify(&feats).unwrap(), &labels).unwrap(),
        |c| {
            let (_, g) = classification_loss_grad(&c.classify(&feats).unwrap(), &labels, EPSILON).unwrap();
            c.backward(&feats, &g);
        },
    );
    assert!(stats.passed(), "{stats:?}");
}

#[test]
fn siamese_loss_gradient_matches_finite_differences() {
    let p = [0.1, 0.9, 0.5, 0.3];
    let y = [1.0, 0.0, 1.0, 0.0];
    let (_, g) = siamese_loss_grad(&p, &y, EPSILON).unwrap();
    let stats = check_inputs("siamese.probs", &p, &g, |v| siamese_loss(v, &y).unwrap());
    assert!(stats.passed(), "{stats:?}");
}
