use std::sync::Arc;

use lbhe::boundary::NormalDerivatives;
use lbhe::config::{Placement, SimulationConfig};
use lbhe::harness::{solution_by_name, Experiment};
use lbhe::solver::Simulation;

fn example1(size: usize) -> SimulationConfig {
    Experiment::example1().config_for(size)
}

fn sim(cfg: &SimulationConfig) -> Simulation {
    let exact = solution_by_name(&cfg.solution.name, &cfg.u, cfg.source).unwrap();
    Simulation::new(cfg, exact).unwrap()
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / x.abs().max(1.0)).fold(0.0, f64::max)
}

#[test]
fn corner_values_do_not_depend_on_wall_choice() {
    let mut cfg = example1(20);
    cfg.u = vec![0.1, 0.3];
    let s = sim(&cfg);
    let shape = s.grid().shape().to_vec();
    let corners = [[0, 0], [shape[0] - 1, 0], [0, shape[1] - 1], [shape[0] - 1, shape[1] - 1]];
    for c in corners {
        let node = s.grid().node_of(&c);
        let a = s.fullway_values(node, 0).unwrap();
        let b = s.fullway_values(node, 1).unwrap();
        assert!(max_rel(&a, &b) < 1e-12, "corner {c:?}: {a:?} vs {b:?}");
    }
}

#[test]
fn substitution_matches_direct_datum_for_exact_data() {
    let mut cfg = example1(10);
    let a = sim(&cfg);
    cfg.boundary.normal_derivatives = NormalDerivatives::Datum;
    let b = sim(&cfg);
    let node = a.grid().node_of(&[0, 4]);
    let (va, vb) = (a.fullway_values(node, 0).unwrap(), b.fullway_values(node, 0).unwrap());
    assert!(max_rel(&va, &vb) < 1e-12);
}

#[test]
fn zero_normal_velocity_needs_datum_mode() {
    let mut cfg = example1(10);
    cfg.u = vec![0.0, 0.2];
    let exact = solution_by_name("example1", &cfg.u, cfg.source).unwrap();
    assert!(Simulation::new(&cfg, Arc::clone(&exact)).and_then(|mut s| s.step()).is_err());
    cfg.boundary.normal_derivatives = NormalDerivatives::Datum;
    let mut s = Simulation::new(&cfg, exact).unwrap();
    assert!(s.run_steps(5, 0).divergence.is_none());
}

#[test]
fn full_way_closure_is_consistent_under_refinement() {
    let errors: Vec<f64> = [10, 20, 40]
        .iter()
        .map(|&n| {
            let mut cfg = example1(n);
            cfg.end_time = 1.0;
            let exact = solution_by_name("example1", &cfg.u, cfg.source).unwrap();
            let mut s = Simulation::new(&cfg, Arc::clone(&exact)).unwrap();
            s.run_until(cfg.end_time, 0).unwrap();
            s.rmse(exact.as_ref())
        })
        .collect();
    assert!(errors[0] / errors[1] > 8.0 && errors[1] / errors[2] > 8.0, "{errors:?}");
}

#[test]
fn half_way_nodes_sit_at_cell_centres() {
    let mut cfg = example1(10);
    cfg.boundary.placement = Placement::HalfWay;
    let s = sim(&cfg);
    assert_eq!(s.grid().shape(), &[10, 10]);
    let mut x = [0.0; 2];
    s.grid().position(0, &mut x);
    assert!((x[0] - 0.05).abs() < 1e-15 && (x[1] - 0.05).abs() < 1e-15);
}

#[test]
fn injected_nan_is_reported_at_the_next_step() {
    let mut s = sim(&example1(10));
    s.populations_mut()[17] = f64::NAN;
    let report = s.run_steps(10, 0);
    let div = report.divergence.expect("divergence");
    assert_eq!(div.step, 1);
    assert_eq!(report.steps, 0);
}

#[test]
fn shipped_configs_parse() {
    for name in ["example1.json", "example2-periodic.json"] {
        let path = format!("{}/../../configs/{name}", env!("CARGO_MANIFEST_DIR"));
        let text = std::fs::read_to_string(&path).unwrap();
        SimulationConfig::from_json(&text).unwrap();
    }
}
