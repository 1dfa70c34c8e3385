mod common;

use std::sync::Arc;

use common::*;
use gridstate::noise::inject_faults;
use gridstate::robust::ORACLE_LIMIT;
use gridstate::*;
use proptest::prelude::*;
use rand::Rng;

use MeasurementKind::*;

/// A small network with up to 12 selection binaries, noisy measurements
/// and a few gross errors.
fn small_instance(seed: u64) -> (EstimationProblem, usize) {
    let mut r = rng(seed);
    let n = r.gen_range(2..=4);
    let net = random_network(seed, n, false);
    let truth = random_state(&mut r, n);
    let model = Arc::new(NetworkModel::new(net));
    let mut pool = Vec::new();
    for k in 0..n {
        pool.extend([(VMag, k), (PInj, k), (QInj, k)]);
    }
    for l in 0..model.n_branches() {
        pool.extend([(PFrom, l), (QFrom, l)]);
    }
    let count = r.gen_range(5..=pool.len().min(11));
    let mut targets: Vec<_> = (0..count).map(|_| pool.swap_remove(r.gen_range(0..pool.len()))).collect();
    if r.gen_bool(0.5) {
        targets.push((VPhasor, model.reference()));
    }
    let clean = MeasurementSet::exact(&model, &truth, &targets).unwrap();
    let ms = inject_faults(&clean, 0.2, seed).unwrap();
    let total = ms.l_scada() + 2 * ms.l_pmu();
    let d = total - r.gen_range(0..=3.min(total - 1));
    (EstimationProblem::new(model, ms).unwrap(), d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn branch_and_bound_matches_enumeration(seed in any::<u64>()) {
        let (prob, d) = small_instance(seed);
        prop_assume!(prob.ms.len() <= 12);
        let opts = RobustOptions::default();
        let o = enumerate_oracle(&prob, d, &opts).unwrap();
        let r = solve_robust(&prob, d, &opts).unwrap();
        prop_assert!((r.cost - o.cost).abs() <= 1e-6 * o.cost.max(1.0), "cost {} vs {}", r.cost, o.cost);
        prop_assert_eq!(r.mask, o.mask);
    }

    #[test]
    fn selection_weight_meets_budget(seed in any::<u64>()) {
        let (prob, d) = small_instance(seed);
        let r = solve_robust(&prob, d, &RobustOptions::default()).unwrap();
        prop_assert_eq!(r.mask.weight(&prob), d);
        let at_least = RobustOptions { budget_mode: BudgetMode::AtLeast, ..Default::default() };
        let r2 = solve_robust(&prob, d, &at_least).unwrap();
        prop_assert!(r2.mask.weight(&prob) >= d);
        prop_assert!(r2.cost <= r.cost + 1e-9 * r.cost.max(1.0));
    }
}

#[test]
fn oracle_refuses_large_instances() {
    let net = cases::builtin("case14").unwrap();
    let truth = net.case_state();
    let model = Arc::new(NetworkModel::new(net));
    let targets: Vec<_> = (0..14).flat_map(|k| [(PInj, k), (QInj, k)]).collect();
    let prob = EstimationProblem::new(model.clone(), MeasurementSet::exact(&model, &truth, &targets).unwrap()).unwrap();
    assert!(prob.ms.len() > ORACLE_LIMIT);
    assert!(matches!(enumerate_oracle(&prob, 27, &RobustOptions::default()), Err(Error::TooManyBinaries { .. })));
}

#[test]
fn robust_is_deterministic() {
    let (prob, d) = small_instance(42);
    let a = solve_robust(&prob, d, &RobustOptions::default()).unwrap();
    let b = solve_robust(&prob, d, &RobustOptions::default()).unwrap();
    assert_eq!(a.mask, b.mask);
    assert_eq!(a.cost.to_bits(), b.cost.to_bits());
}

#[test]
fn per_bus_grouping_keeps_whole_buses() {
    let net = cases::builtin("case14").unwrap();
    let truth = net.case_state();
    let model = Arc::new(NetworkModel::new(net));
    let targets: Vec<_> = (0..14).flat_map(|k| [(VMag, k), (PInj, k), (QInj, k)]).collect();
    let mut ms = MeasurementSet::exact(&model, &truth, &targets).unwrap();
    ms.entries[7].value.re += 5.0;
    let prob = EstimationProblem::new(model, ms).unwrap();
    let opts = RobustOptions { grouping: Grouping::PerBus, budget_mode: BudgetMode::AtLeast, ..Default::default() };
    let r = solve_robust(&prob, 39, &opts).unwrap();
    for bus in 0..14 {
        let sel: Vec<bool> = (0..3).map(|i| r.mask.selected[3 * bus + i]).collect();
        assert!(sel.iter().all(|s| *s == sel[0]), "bus {bus}: {sel:?}");
    }
    assert!(!r.mask.selected[7]);
}

#[test]
fn lasso_drops_gross_errors() {
    let net = cases::builtin("case14").unwrap();
    let truth = net.case_state();
    let model = Arc::new(NetworkModel::new(net));
    let targets = gridstate::noise::plan_targets(&model, gridstate::noise::MeasurementPlan::Scada);
    let mut ms = MeasurementSet::exact(&model, &truth, &targets).unwrap();
    ms.entries[10].value.re += 3.0;
    let prob = EstimationProblem::new(model, ms).unwrap();
    let out = solve_lasso(&prob, 0.1, &RobustOptions::default()).unwrap();
    assert_eq!(out.selection[10], 0.0);
    assert!(metrics(&out.estimate.state, &truth).unwrap().dinf < 1e-3);
    assert!(solve_lasso(&prob, 0.0, &RobustOptions::default()).is_err());
}
