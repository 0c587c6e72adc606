mod support;

use mpnas_core::predictor::{
    backward, forward, init_params, mse_loss, Activation, GcnConfig, Mode,
};
use mpnas_core::seed;
use rand::Rng;
use support::fd_oracle::{central_differences, max_relative_error};
use support::graphs::random_encoded_graph;

#[test]
fn analytic_gradients_match_central_differences_over_twenty_seeds() {
    let config = GcnConfig {
        num_hidden_layers: 2,
        width: 32,
        dropout_rate: 0.0,
        activation: Activation::Relu,
    };
    for s in 0..20 {
        let mut rng = seed::rng(seed::derive(0x6772_6164, s));
        let params = init_params(&config, 14, &mut rng).unwrap();
        let graphs: Vec<_> = (0..4).map(|_| random_encoded_graph(8, &mut rng)).collect();
        let batch: Vec<_> = graphs.iter().collect();
        let targets: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (preds, trace) = forward(&params, &batch, Mode::Eval, None).unwrap();
        let (_, dl) = mse_loss(&preds, &targets).unwrap();
        let grads = backward(&trace, &params, &dl).unwrap();
        let fd = central_differences(&params, &batch, &targets, 1e-6);
        use mpnas_core::predictor::Parameters;
        let err = max_relative_error(grads.values(), &fd);
        assert!(err < 1e-4, "seed {s}: max relative error {err:e}");
    }
}
