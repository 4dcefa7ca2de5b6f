mod common;

use common::{gradcheck_toy, toy};
use gdsrec::trainer::Task;

#[test]
fn rating_objective_gradients_match_finite_differences() {
    for seed in 0..10 {
        let mut t = toy(seed);
        let report = gradcheck_toy(&mut t, Task::Rating, 1e-5);
        assert!(report.max_rel_error < 1e-4, "seed {seed}: {report:?}");
        assert_eq!(report.coordinates, t.model.store.num_scalars());
    }
}

#[test]
fn ranking_objective_gradients_match_finite_differences() {
    for seed in 100..110 {
        let mut t = toy(seed);
        let report = gradcheck_toy(&mut t, Task::Ranking, 1e-5);
        assert!(report.max_rel_error < 1e-4, "seed {seed}: {report:?}");
    }
}
