//! LASSO, ridge and linear SVR on a sparse synthetic problem, with
//! hyperparameters picked by inner cross-validation.

use nalgebra::DMatrix;
use pcsfusion::eval::metrics;
use pcsfusion::regress::{fit, fit_lasso_path, select_hyperparams, Grids, HyperParams, RegressorKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> pcsfusion::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (n, p) = (240, 30);
    let x = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
    let y: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.4 * x[(i, 0)] - 0.3 * x[(i, 7)] + 0.2 * x[(i, 19)] + 0.1 * rng.random_range(-1.0..1.0))
        .collect();
    let (train, test) = (0..180, 180..n);
    let x_train = x.rows_range(train.clone()).into_owned();
    let x_test = x.rows_range(test.clone()).into_owned();
    let (y_train, y_test) = (&y[train], &y[test]);

    println!("LASSO path, nonzero weights per lambda:");
    let lambdas = [0.3, 0.1, 0.03, 0.01, 0.001];
    for (lambda, model) in lambdas.iter().zip(fit_lasso_path(&x_train, y_train, &lambdas)?) {
        println!("  lambda {lambda:<6} -> {:>2} nonzero", p - model.sparsity());
    }

    let grids = Grids { svr_iterations: 5000, ..Default::default() };
    println!("\nregressor  chosen                   rmse    cc     mape%");
    for kind in [RegressorKind::Lasso, RegressorKind::Ridge, RegressorKind::Svr] {
        let (params, _) = select_hyperparams(kind, &grids, &x_train, y_train, 5, 0)?;
        let model = fit(kind, &params, &grids, &x_train, y_train)?;
        let m = metrics(y_test, &model.predict(&x_test)?)?;
        let chosen = match params {
            HyperParams::Lambda(l) => format!("lambda {l:.2e}"),
            HyperParams::Svr { c, epsilon } => format!("C {c:.2}, eps {epsilon}"),
        };
        println!("{:<10} {chosen:<24} {:.4}  {:.3}  {:.2}", kind.label(), m.rmse, m.cc, m.mape);
    }
    Ok(())
}
