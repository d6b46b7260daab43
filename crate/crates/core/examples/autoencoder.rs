//! Trains the fusion autoencoder on standardized stand-in features, shows the
//! loss curve, checks gradients and round-trips the model through text.

use nalgebra::DMatrix;
use pcsfusion::autoencoder::{train_autoencoder, AeConfig, AeModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> pcsfusion::Result<()> {
    // 123 correlated inputs driven by 5 hidden factors
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mixing = DMatrix::<f64>::from_fn(5, 123, |_, _| rng.random_range(-1.0..1.0));
    let factors = DMatrix::from_fn(200, 5, |_, _| rng.random_range(-1.0..1.0));
    let noise = DMatrix::from_fn(200, 123, |_, _| 0.1 * rng.random_range(-1.0..1.0));
    let mut x = factors * mixing + noise;
    for j in 0..x.ncols() {
        let mean = x.column(j).mean();
        let std = x.column(j).variance().sqrt();
        x.column_mut(j).apply(|v| *v = (*v - mean) / std);
    }

    let config = AeConfig { layer_sizes: vec![123, 64, 16], epochs: 40, ..Default::default() };
    let check = AeModel::init(&config)?.gradient_check(&x.rows(0, 8).into_owned(), 300, 1);
    println!("gradient check, max relative error: {check:.2e}");

    let model = train_autoencoder(&x, &config)?;
    for (epoch, loss) in model.loss_curve.iter().enumerate().step_by(5) {
        println!("epoch {epoch:>3}: reconstruction mse {loss:.4}");
    }
    let latent = model.encode_matrix(&x)?;
    println!("latent shape {} x {}", latent.nrows(), latent.ncols());

    let restored = AeModel::from_text(&model.to_text())?;
    println!("text round trip preserves the model: {}", restored == model);
    Ok(())
}
