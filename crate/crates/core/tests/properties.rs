use gridcast::baselines::{dp_solve, is_contiguous_in_rate_order, kmeans_1d, BaselineConfig};
use gridcast::experiment::{run_solver, SolverConfig, SolverId};
use gridcast::instance::{selection_cost, within_budget};
use gridcast::oracle::exact_solve;
use gridcast::scenario::{random_instance, RandomSpec, Radio};
use gridcast::solvers::plain_greedy_selection;
use gridcast::{evaluate_plan, plan_from_selection, selection_from_plan, utility, ProblemInstance};
use proptest::prelude::*;

fn instance(n: usize, l: usize, m: usize, seed: u64) -> ProblemInstance {
    random_instance(&RandomSpec::new(n, l, m), seed).expect("valid random instance")
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_solver_is_feasible(n in 1usize..=8, l in 1usize..=20, m in 1usize..=6, seed in any::<u64>()) {
        let inst = instance(n, l, m, seed);
        let cfg = SolverConfig::default();
        for id in SolverId::SCALABLE {
            let r = run_solver(id, &inst, &cfg).unwrap();
            let eval = evaluate_plan(&inst, &r.plan).unwrap();
            prop_assert!(eval.feasible, "{id}: {eval:?}");
            prop_assert!(close(eval.utility, r.utility), "{id}: {} vs {}", eval.utility, r.utility);
            prop_assert!(close(eval.latency_s, r.latency_s), "{id}");
            prop_assert!(within_budget(r.latency_s, inst.budget()), "{id}");
        }
    }

    #[test]
    fn optimum_dominates_every_solver(n in 1usize..=4, l in 1usize..=5, m in 1usize..=3, seed in any::<u64>()) {
        let inst = instance(n, l, m, seed);
        let opt = exact_solve(&inst).unwrap();
        prop_assert!(within_budget(selection_cost(&inst, &opt.opt_selection), inst.budget()));
        prop_assert_eq!(utility(&inst, &opt.opt_selection), opt.opt_utility);
        let cfg = SolverConfig::default();
        for id in SolverId::SCALABLE {
            let r = run_solver(id, &inst, &cfg).unwrap();
            prop_assert!(r.utility <= opt.opt_utility + 1e-9, "{id}: {} > {}", r.utility, opt.opt_utility);
        }
        let bound = 1.0 - (-0.5f64).exp();
        let greedy = run_solver(SolverId::Greedy, &inst, &cfg).unwrap();
        prop_assert!(greedy.utility >= bound * opt.opt_utility - 1e-9);
    }

    #[test]
    fn refinement_never_hurts(n in 1usize..=8, l in 1usize..=30, m in 1usize..=8, seed in any::<u64>()) {
        let inst = instance(n, l, m, seed);
        let plain = utility(&inst, &plain_greedy_selection(&inst));
        let cfg = SolverConfig::default();
        for id in [SolverId::Greedy, SolverId::GreedyAccel] {
            let r = run_solver(id, &inst, &cfg).unwrap();
            prop_assert!(r.utility >= plain - 1e-9, "{id}: {} < {plain}", r.utility);
        }
    }

    #[test]
    fn lazy_matches_standard(n in 1usize..=10, l in 1usize..=40, m in 1usize..=14, seed in any::<u64>()) {
        let inst = instance(n, l, m, seed);
        let cfg = SolverConfig::default();
        let a = run_solver(SolverId::Greedy, &inst, &cfg).unwrap();
        let b = run_solver(SolverId::GreedyAccel, &inst, &cfg).unwrap();
        prop_assert_eq!(a.utility, b.utility);
        prop_assert_eq!(a.selection, b.selection);
    }

    #[test]
    fn dp_groups_are_contiguous(n in 1usize..=10, l in 1usize..=15, m in 1usize..=6, seed in any::<u64>()) {
        let inst = instance(n, l, m, seed);
        let cfg = BaselineConfig::default();
        for fair in [false, true] {
            let r = dp_solve(&inst, &cfg, fair);
            prop_assert!(is_contiguous_in_rate_order(&inst, &r.plan), "fair={fair}");
            prop_assert!(r.plan.n_groups() <= cfg.dp_max_groups);
        }
    }

    #[test]
    fn solvers_are_deterministic(n in 1usize..=6, l in 1usize..=15, m in 1usize..=5, seed in any::<u64>()) {
        let inst = instance(n, l, m, seed);
        let cfg = SolverConfig::default();
        for id in SolverId::SCALABLE {
            let a = run_solver(id, &inst, &cfg).unwrap();
            let b = run_solver(id, &inst, &cfg).unwrap();
            prop_assert_eq!(&a.selection, &b.selection, "{}", id);
            prop_assert_eq!(&a.plan, &b.plan, "{}", id);
            prop_assert_eq!(a.utility, b.utility, "{}", id);
        }
    }

    #[test]
    fn canonical_plan_round_trips(n in 1usize..=6, l in 1usize..=15, m in 1usize..=5, seed in any::<u64>()) {
        let inst = instance(n, l, m, seed);
        let sel = run_solver(SolverId::Greedy, &inst, &SolverConfig::default()).unwrap().selection;
        let plan = plan_from_selection(&inst, &sel).unwrap();
        prop_assert_eq!(evaluate_plan(&inst, &plan).unwrap().utility, utility(&inst, &sel));
        let back = selection_from_plan(&inst, &plan).unwrap();
        prop_assert_eq!(utility(&inst, &back), utility(&inst, &sel));
    }

    #[test]
    fn snr_decreases_with_distance(d in 1.0f64..2000.0, step in 0.001f64..500.0) {
        let radio = Radio::default();
        prop_assert!(radio.snr_db(d + step) < radio.snr_db(d));
    }

    #[test]
    fn kmeans_labels_nearest_center(values in prop::collection::vec(0.0f64..500.0, 1..30), k in 1usize..6, seed in any::<u64>()) {
        let labels = kmeans_1d(&values, k, seed);
        prop_assert_eq!(labels.len(), values.len());
        prop_assert!(labels.iter().all(|&c| c < k));
        // at convergence each point sits with its nearest cluster mean
        let mut centers = Vec::new();
        for c in 0..k {
            let members: Vec<f64> = values.iter().zip(&labels).filter(|(_, &lab)| lab == c).map(|(&v, _)| v).collect();
            if !members.is_empty() {
                centers.push(members.iter().sum::<f64>() / members.len() as f64);
            }
        }
        for (&v, &c) in values.iter().zip(&labels) {
            let members: Vec<f64> = values.iter().zip(&labels).filter(|(_, &lab)| lab == c).map(|(&x, _)| x).collect();
            let own = (v - members.iter().sum::<f64>() / members.len() as f64).abs();
            let best = centers.iter().map(|&m| (v - m).abs()).fold(f64::INFINITY, f64::min);
            prop_assert!(own <= best + 1e-6, "{v}: own {own} best {best}");
        }
    }
}
