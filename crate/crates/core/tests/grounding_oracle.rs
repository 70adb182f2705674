mod support;

use fuzzy_zsl::autodiff::Graph;
use fuzzy_zsl::fol::{builtin_axioms, parse_axiom, validate, Signature};
use fuzzy_zsl::fuzzy::FuzzyConfig;
use fuzzy_zsl::grounding::{eval_formula, Status};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{oracle, random_formula, World};

const TOL: f64 = 1e-9;

fn random_config<R: Rng>(rng: &mut R) -> FuzzyConfig {
    let ps = [1.0, 2.0, 4.0, 6.0];
    FuzzyConfig {
        p_forall: ps[rng.gen_range(0..4)],
        p_exists: ps[rng.gen_range(0..4)],
        clamp_eps: 1e-4,
    }
}

fn random_world<R: Rng>(rng: &mut R) -> World {
    let n = rng.gen_range(1..=6);
    let classes = rng.gen_range(1..=4);
    let q = rng.gen_range(1..=3);
    World::random(rng, n, classes, q, 3, 4)
}

#[test]
fn random_knowledge_bases_match_the_loop_evaluator() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let sig = Signature::standard();
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    let mut unusual = 0;
    let mut nested = 0;
    while checked < 100 {
        let world = random_world(&mut rng);
        let cfg = random_config(&mut rng);
        let axioms: Vec<_> = (0..3)
            .map(|i| {
                let text = format!("axiom r{i}: {}", random_formula(&mut rng, 3));
                let ax = parse_axiom(&text).unwrap_or_else(|e| panic!("{text}: {e}"));
                assert!(
                    validate(&ax.formula, &sig).is_empty(),
                    "generated an invalid formula: {text}"
                );
                ax
            })
            .collect();
        for ax in &axioms {
            let mut g = Graph::new();
            let env = world.env(&mut g);
            let got = eval_formula(&mut g, &ax.formula, &env, &cfg).unwrap();
            let (want, status) = oracle(&world, &ax.formula, &cfg);
            assert_eq!(got.status, status, "{ax}");
            unusual += usize::from(status != Status::Normal);
            nested += usize::from(ax.formula.depth() > 2);
            let diff = (g.value(got.value).item() - want).abs();
            worst = worst.max(diff);
            assert!(diff <= TOL, "{ax}: engine {} oracle {want}", g.value(got.value).item());
        }
        checked += 1;
    }
    assert!(worst <= TOL);
    assert!(unusual > 5, "only {unusual} vacuous or excluded cases");
    assert!(nested > 50, "only {nested} nested formulas");
}

#[test]
fn builtin_axioms_match_the_loop_evaluator() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..25 {
        let world = random_world(&mut rng);
        let cfg = random_config(&mut rng);
        for ax in builtin_axioms() {
            let mut g = Graph::new();
            let env = world.env(&mut g);
            let got = eval_formula(&mut g, &ax.formula, &env, &cfg).unwrap();
            let (want, status) = oracle(&world, &ax.formula, &cfg);
            assert_eq!(got.status, status, "{}", ax.name);
            assert!((g.value(got.value).item() - want).abs() <= TOL, "{}", ax.name);
        }
    }
}
