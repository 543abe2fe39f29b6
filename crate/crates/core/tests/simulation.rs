use querybuilder_core::eval::{simulated_user_experiment, SimulationConfig};

#[test]
fn feedback_round_improves_ndcg() {
    let report = simulated_user_experiment(&SimulationConfig::default()).unwrap();
    println!("{}", report.to_text());
    assert!(report.gain >= 0.03, "{}", report.to_text());
}
