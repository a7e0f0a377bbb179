mod common;

use common::*;
use kspoa::design::{solve_q_k, solve_q_zeta};
use kspoa::dynamics::{async_best_response, round_robin, GroupSizeDistribution, StopRule};
use kspoa::equilibrium::exact_spoa;
use kspoa::game::{random_game, GameFile, JointAction, RandomGameConfig, WelfareRule, WelfareSpec};
use kspoa::labels::{binom, coalition_census, deviation_coefficients, deviation_sum, enumerate_labels, Label};
use kspoa::lp::{solve, LinearProgram, Scalar};
use kspoa::poa::{solve_p_k, solve_p_zeta, solve_primal_d};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn welfare_table(n: usize) -> impl Strategy<Value = WelfareRule> {
    prop::collection::vec(0.05f64..3.0, n).prop_map(|v| {
        let mut t = vec![0.0];
        t.extend(v);
        WelfareRule::new(t).unwrap()
    })
}

fn tiny_game(agents: usize) -> RandomGameConfig {
    RandomGameConfig {
        resources: 4,
        agents,
        min_actions: 1,
        max_actions: 3,
        inclusion_probability: 0.5,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn census_sums_to_binomial(n in 1usize..=12, seed in any::<u64>()) {
        let labels = enumerate_labels(n).unwrap();
        prop_assert_eq!(labels.len() as u128, binom(n as u64 + 3, 3).unwrap() - 1);
        let label = labels.labels()[(seed % labels.len() as u64) as usize];
        for zeta in 1..=n {
            prop_assert_eq!(coalition_census(n, zeta, &label).unwrap(), binom(n as u64, zeta as u64).unwrap());
        }
    }

    #[test]
    fn deviation_sum_is_linear(n in 1usize..=7, f in prop::collection::vec(-2.0f64..2.0, 8), g in prop::collection::vec(-2.0f64..2.0, 8)) {
        let (f, g) = (&f[..=n], &g[..=n]);
        let h: Vec<f64> = f.iter().zip(g).map(|(a, b)| 2.0 * a - b).collect();
        for label in enumerate_labels(n).unwrap().iter() {
            for zeta in 1..=n {
                let lhs = deviation_sum(n, zeta, label, &h).unwrap();
                let rhs = 2.0 * deviation_sum(n, zeta, label, f).unwrap() - deviation_sum(n, zeta, label, g).unwrap();
                prop_assert!((lhs - rhs).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zeta_n_moves_every_agent(n in 1usize..=9, e in 0usize..4, x in 0usize..4, o in 0usize..4) {
        prop_assume!(e + x + o >= 1 && e + x + o <= n);
        let c = deviation_coefficients(n, n, &Label::new(e, x, o)).unwrap();
        prop_assert_eq!(c[x + o], 1);
    }

    #[test]
    fn bound_is_monotone_and_exact_at_n(n in 1usize..=6, w in welfare_table(6)) {
        let w = w.truncated(n).unwrap();
        let mut prev = 0.0;
        for k in 1..=n {
            let b = solve_p_k(n, &w, k).unwrap();
            prop_assert!(b.spoa >= prev - 1e-9);
            prop_assert!(b.spoa <= 1.0 + 1e-9);
            prev = b.spoa;
        }
        prop_assert!((prev - 1.0).abs() < 1e-6);
    }

    #[test]
    fn strong_duality(n in 1usize..=5, w in welfare_table(5), k in 1usize..=5) {
        prop_assume!(k <= n);
        let w = w.truncated(n).unwrap();
        let p = solve_p_k(n, &w, k).unwrap();
        let d = solve_primal_d(n, &w, k).unwrap();
        prop_assert!((p.rho_star - d.objective).abs() <= 1e-6 * p.rho_star.max(1.0));
        let (norm, slack) = d.feasibility(&w).unwrap();
        prop_assert!(norm.abs() < 1e-9 && slack > -1e-9);
    }

    #[test]
    fn bound_is_sound_on_random_games(n in 1usize..=4, w in welfare_table(4), seed in any::<u64>(), k in 1usize..=4) {
        prop_assume!(k <= n);
        let w = w.truncated(n).unwrap();
        let g = random_game(&tiny_game(n), seed).unwrap();
        let bound = solve_p_k(n, &w, k).unwrap().spoa;
        prop_assert!(exact_spoa(&g, &w, k).unwrap() >= bound - 1e-7);
    }

    #[test]
    fn design_bounds_are_ordered(n in 1usize..=5, w in welfare_table(5), k in 1usize..=5) {
        prop_assume!(k <= n);
        let w = w.truncated(n).unwrap();
        let spoa = solve_p_k(n, &w, k).unwrap().spoa;
        let upper = solve_q_k(n, &w, k).unwrap().spoa_upper;
        let mut lower = 0.0f64;
        for z in 1..=k {
            let designed = 1.0 / solve_q_zeta(n, &w, z).unwrap().rho_tilde;
            prop_assert!(1.0 / solve_p_zeta(n, &w, z).unwrap().rho <= designed + 1e-7);
            lower = lower.max(designed);
        }
        prop_assert!(spoa <= upper + 1e-7, "{} > {}", spoa, upper);
        prop_assert!(lower <= upper + 1e-7, "{} > {}", lower, upper);
    }

    #[test]
    fn float_and_exact_simplex_agree(
        c in prop::collection::vec(-3i32..=3, 3),
        rows in prop::collection::vec((prop::collection::vec(-3i32..=3, 3), 0i32..=6), 1..6),
    ) {
        let mut lp = LinearProgram::minimize(c.iter().map(|v| *v as f64).collect());
        for (a, b) in &rows {
            lp.add_le(a.iter().map(|v| *v as f64).collect(), *b as f64);
        }
        // Keep the program bounded.
        lp.add_le(vec![1.0, 1.0, 1.0], 10.0);
        let f = solve(&lp).unwrap();
        let e = solve(&lp.to_exact()).unwrap();
        prop_assert_eq!(f.status, e.status);
        if f.is_optimal() {
            prop_assert!((f.objective - e.objective.to_f64()).abs() < 1e-9);
            prop_assert!(lp.max_violation(&f.x) < 1e-9);
        }
    }

    #[test]
    fn dynamics_are_monotone_and_absorbing(n in 1usize..=4, seed in any::<u64>(), zeta in 1usize..=4) {
        prop_assume!(zeta <= n);
        let w = kspoa::game::builtin_welfare("exp5", n).unwrap();
        let g = random_game(&tiny_game(n), seed).unwrap();
        let p = GroupSizeDistribution::delta(zeta).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a0 = JointAction::random(&g, &mut rng);
        let tr = async_best_response(&g, &w, &w, &p, a0, 60, StopRule::FixedHorizon, &mut rng).unwrap();
        let mut evals = 0;
        for pair in tr.steps.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            prop_assert!(b.welfare >= a.welfare - 1e-12);
            if b.changed {
                prop_assert!(b.welfare > a.welfare);
            }
            evals += b.group.iter().map(|&i| g.num_actions(i) as u64).product::<u64>();
            prop_assert_eq!(b.cum_evals, evals);
        }
        let rr = round_robin(&g, &w, &w, zeta, None, tr.final_action.clone(), &mut rng).unwrap();
        prop_assert!(naive_is_ksne(&g, &w, &rr.final_action, zeta));
        // Once at a zeta-strong equilibrium, groups of size at most zeta never move.
        let mixed = GroupSizeDistribution::new(vec![1.0 / zeta as f64; zeta]).unwrap();
        let after = async_best_response(&g, &w, &w, &mixed, rr.final_action.clone(), 40, StopRule::FixedHorizon, &mut rng).unwrap();
        prop_assert!(after.steps.iter().all(|s| !s.changed));
        prop_assert_eq!(after.final_action, rr.final_action);
    }

    #[test]
    fn game_file_round_trips(n in 1usize..=4, seed in any::<u64>()) {
        let g = random_game(&tiny_game(n), seed).unwrap();
        let file = GameFile::new(&g, WelfareSpec::named("exp5"));
        let text = serde_json::to_string(&file).unwrap();
        let back: GameFile = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(&back, &file);
        prop_assert_eq!(back.game().unwrap(), g);
    }
}
