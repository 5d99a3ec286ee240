use procontrol::numkit::*;
use procontrol::oracle::*;
fn main() {
    let setup = SetupFunction::fnn(vec![6]);
    let features: Vec<Vec<f64>> = (0..40).map(|i| vec![0.1 + i as f64 * 0.02]).collect();
    let labels: Vec<Vec<f64>> = features.iter().map(|u| vec![u[0] * u[0]]).collect();
    let dataset = Dataset::regression(features, labels).unwrap();
    for iters in [400, 1500, 4000] {
        let mut spec = TrainingSpec::default();
        spec.optimizer.max_iterations = iters;
        spec.max_rounds = 1;
        spec.acceptance_rmse = 1e-9;
        match coordinate(&dataset, &AdditionalData::default(), &spec, &setup) {
            Err(OracleError::AcceptanceNotReached { best_metric, .. }) => {
                println!("iters {iters}: test rmse {best_metric:.2e}");
            }
            other => println!("iters {iters}: {other:?}"),
        }
    }
}
