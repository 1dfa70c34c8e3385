mod common;

use std::sync::Arc;

use common::stamping_oracle;
use gridstate::noise::plan_targets;
use gridstate::tracking::{load_stream, StreamOptions};
use gridstate::*;
use nalgebra::DVector;

fn case14() -> Arc<NetworkModel> {
    Arc::new(NetworkModel::new(cases::builtin("case14").unwrap()))
}

fn stream(model: &NetworkModel, opts: &StreamOptions) -> Vec<MeasurementSet> {
    load_stream(model, &ErrorChainConfig::default(), opts).unwrap().into_iter().map(|(_, ms)| ms).collect()
}

#[test]
fn power_flow_meets_the_schedule() {
    let mut net = cases::builtin("case14").unwrap();
    let reference = net.reference();
    for b in &mut net.buses {
        b.load *= 1.1;
    }
    for g in net.generators.iter_mut().filter(|g| g.bus != reference) {
        g.power *= 1.1;
    }
    let out = solve_power_flow(&net, &net.case_state(), &PowerFlowOptions::default()).unwrap();
    let (y, _, _) = stamping_oracle(&net);
    let v = DVector::from_vec(out.state.v.clone());
    let i = &y * &v;
    for (k, bus) in net.buses.iter().enumerate() {
        let s = v[k] * i[k].conj();
        let gen: num_complex::Complex64 = net.generators.iter().filter(|g| g.in_service && g.bus == k).map(|g| g.power).sum();
        let sched = gen - bus.load;
        if bus.is_reference {
            assert!((v[k].norm() - 1.06).abs() < 1e-9);
            continue;
        }
        assert!((s.re - sched.re).abs() < 1e-8, "bus {k}: P {} vs {}", s.re, sched.re);
        match bus.bus_type {
            BusType::Pq => assert!((s.im - sched.im).abs() < 1e-8, "bus {k}: Q {} vs {}", s.im, sched.im),
            _ => {
                let set = net.generators.iter().find(|g| g.bus == k).unwrap().voltage_setpoint;
                assert!((v[k].norm() - set).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn constant_stream_settles_immediately() {
    let model = case14();
    let ms = stream(&model, &StreamOptions { steps: 1, ..Default::default() }).remove(0);
    let report = run_trajectory(&[ms.clone(), ms.clone(), ms], model, &TrackerOptions::default()).unwrap();
    assert_eq!(report.steps.len(), 3);
    assert!(report.change_points().is_empty());
    for s in &report.steps[1..] {
        assert!(s.warm);
        assert!(s.iters <= 2, "step {} took {} iterations", s.step, s.iters);
        assert!(s.d2_prev.unwrap() < 1e-12);
    }
}

#[test]
fn single_step_is_a_multistart() {
    let model = case14();
    let ms = stream(&model, &StreamOptions { steps: 1, seed: 3, ..Default::default() }).remove(0);
    let opts = TrackerOptions { seed: 9, ..Default::default() };
    let report = run_trajectory(&[ms.clone()], model.clone(), &opts).unwrap();
    let prob = EstimationProblem::new(model, ms).unwrap();
    let cold = multistart(&prob, opts.restarts, opts.seed, &opts.wls).unwrap();
    assert_eq!(report.steps[0].cost, cold.cost);
    assert_eq!(report.states[0], cold.state);
    assert!(!report.steps[0].warm);
    assert!(report.steps[0].d2_prev.is_none());
}

#[test]
fn smooth_stream_has_no_change_points() {
    let model = case14();
    let ms = stream(&model, &StreamOptions { steps: 8, seed: 2, ..Default::default() });
    let report = run_trajectory(&ms, model, &TrackerOptions::default()).unwrap();
    assert!(report.change_points().is_empty(), "{:?}", report.change_points());
    assert!(report.steps[1..].iter().all(|s| s.warm && !s.possible_multivalued));
}

#[test]
fn jump_is_one_change_point() {
    let model = case14();
    let ms = stream(&model, &StreamOptions { steps: 8, seed: 4, jump_at: Some(5), ..Default::default() });
    let report = run_trajectory(&ms, model, &TrackerOptions::default()).unwrap();
    assert_eq!(report.change_points(), vec![5]);
    assert!(!report.steps[5].warm);
    assert!(report.steps[6].warm);
}

#[test]
fn warm_steps_agree_with_cold_solves() {
    let model = case14();
    let ms = stream(&model, &StreamOptions { steps: 6, seed: 1, ..Default::default() });
    let opts = TrackerOptions::default();
    let report = run_trajectory(&ms, model.clone(), &opts).unwrap();
    for (k, m) in ms.iter().enumerate().skip(1) {
        let prob = EstimationProblem::new(model.clone(), m.clone()).unwrap();
        let cold = estimate_wls(&prob, &StateVector::flat(prob.n_buses()), &opts.wls).unwrap();
        let warm = &report.steps[k];
        assert!(warm.iters < cold.iterations, "step {k}: {} vs {}", warm.iters, cold.iterations);
        assert!((warm.cost - cold.cost).abs() <= 1e-6, "step {k}: {} vs {}", warm.cost, cold.cost);
    }
}

#[test]
fn trajectory_is_deterministic() {
    let model = case14();
    let opts = StreamOptions { steps: 5, seed: 8, jump_at: Some(3), ..Default::default() };
    let a = run_trajectory(&stream(&model, &opts), model.clone(), &TrackerOptions::default()).unwrap();
    let b = run_trajectory(&stream(&model, &opts), model, &TrackerOptions::default()).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.states, b.states);
}

#[test]
fn stream_states_follow_the_load() {
    let model = case14();
    let opts = StreamOptions { steps: 4, seed: 6, jump_at: Some(2), ..Default::default() };
    let out = load_stream(&model, &ErrorChainConfig::zero(), &opts).unwrap();
    let targets = plan_targets(&model, MeasurementPlan::Scada);
    for (truth, ms) in &out {
        // With the chain switched off the data are exact.
        let exact = MeasurementSet::exact(&model, truth, &targets).unwrap();
        let diff = exact.digest().iter().zip(ms.digest()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-12, "{diff}");
    }
    let lo = |k: usize| out[k].0.v.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min);
    assert!(lo(2) < lo(1) - 0.01);
}

#[test]
fn empty_stream_is_an_error() {
    assert!(run_trajectory(&[], case14(), &TrackerOptions::default()).is_err());
}
