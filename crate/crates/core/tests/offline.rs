//! Offline mode on a fixed ZDT1 design, scored by the true problem after optimization.

use spread_core::diffusion::TrainConfig;
use spread_core::metrics::hypervolume;
use spread_core::offline::{offline_run, Dataset, OfflineConfig, SurrogateConfig};
use spread_core::pareto::non_dominated_sort;
use spread_core::problems::{latin_hypercube, Objective, Problem};
use spread_core::rng;

#[test]
fn beats_the_best_of_the_dataset_without_touching_the_problem() {
    let p = Problem::from_name("zdt1").unwrap();
    let x = latin_hypercube(p.bounds(), 5000, &mut rng::stream(11, "offline-data"));
    let y = p.values_batch(&x).unwrap();
    let r = p.ref_point().to_vec();

    // HV of the dataset's own non-dominated subset
    let fronts = non_dominated_sort(&y);
    let hv_data = hypervolume(&y.select_rows(&fronts[0]), &r).unwrap();

    let ds = Dataset::new(x, y, Some(p.bounds().to_vec())).unwrap();
    let cfg = OfflineConfig {
        n: 100,
        steps: 200,
        hidden: 64,
        train: TrainConfig {
            epochs: 100,
            ..Default::default()
        },
        surrogate: SurrogateConfig {
            epochs: 200,
            ..Default::default()
        },
        ref_point: Some(r.clone()),
        ..Default::default()
    };
    let out = offline_run(&ds, &cfg, Some(&p as &dyn Objective), 1).unwrap();
    assert_eq!(out.true_calls_during_optimization, 0);
    let yt = out.y_true.expect("truth given");
    let hv = hypervolume(&yt, &r).unwrap();
    assert!(hv > hv_data, "true HV {hv} vs dataset best {hv_data}");
}
