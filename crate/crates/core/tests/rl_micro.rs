mod common;

use aoi_mdp::rl::micro::MicroConfig;

#[test]
fn q_learning_reaches_enumerated_optimum() {
    let run = common::train_micro(&MicroConfig::default(), 5000, 11);
    assert!(
        (run.greedy - run.optimum).abs() <= 0.05 * run.optimum.abs(),
        "greedy {} optimum {}",
        run.greedy,
        run.optimum
    );
}

#[test]
fn enumeration_matches_hand_plan_on_adjacent_start() {
    // Starting on the node with all data ready, waiting one step and then
    // staying collects everything in the first epoch: 3 units, one exchange.
    let cfg = MicroConfig { start: [2, 2], ..MicroConfig::default() };
    let opt = common::micro_optimum(&cfg);
    let area = 0.5 * (2.0 * 5.0 + 5.0) * 5.0;
    let stay = 30.0 - 0.2 - 0.1 * area;
    assert!(opt >= stay - 1e-12);
}
