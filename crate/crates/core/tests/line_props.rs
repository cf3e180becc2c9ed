//! Line-engine properties: the heavy/light ⊕-decomposition is exact on
//! random instances for any guess, the intermediate bound N·√OUT holds with
//! a small constant on the hard families, and the adversarial family
//! separates the line engine from the classic plans.

mod common;

use joinagg::driver::{evaluate, Algorithm};
use joinagg::generators::{
    gen_line_adversarial, gen_line_hard, gen_random_line, Family, GeneratorSpec,
};
use joinagg::line::{kmv_estimate_line, run_line};
use joinagg::oracle::brute_force;
use joinagg::semiring::{Counting, SumProd};

#[test]
fn decomposition_exact_on_random_lines_for_any_guess() {
    for seed in 0..120u64 {
        let spec = GeneratorSpec {
            family: Family::RandomLine,
            n: 40,
            out: 0,
            k: 2 + (seed as usize % 4),
            seed,
        };
        let g = gen_random_line(&spec);
        let oracle = brute_force(&g.query, &g.instance, &Counting).unwrap();
        for guess in [0u64, 1, 3, 9, 10_000] {
            let (rs, _) = run_line(&g.query, &g.instance, &Counting, guess).unwrap();
            assert!(
                common::same_result(&oracle, &rs),
                "seed {seed} guess {guess}"
            );
        }
        // Exactness is semiring-generic; spot-check with exact rationals.
        let rat = common::to_rational(&g.instance);
        let oracle = brute_force(&g.query, &rat, &SumProd).unwrap();
        let (rs, _) = run_line(&g.query, &rat, &SumProd, 3).unwrap();
        assert!(common::same_result(&oracle, &rs), "seed {seed} rational");
    }
}

#[test]
fn intermediate_bound_on_hard_lines() {
    // With OUT~ = OUT the engine stays within a small multiple of N·√OUT.
    for (k, n, out) in [(2, 6_000, 400), (3, 9_000, 2_500), (4, 8_000, 900)] {
        let g = gen_line_hard(k, n, out, 3).unwrap();
        let realized = g.realized_out.unwrap();
        let (_, stats) = evaluate(
            &g.query,
            &g.instance,
            &Counting,
            Some(realized),
            Algorithm::Line,
        )
        .unwrap();
        let n_real = g.instance.input_size() as f64;
        let bound = 10.0 * n_real * (realized as f64).sqrt();
        assert!(
            (stats.max_intermediate_rows as f64) <= bound,
            "k={k}: {} rows > 10·N·√OUT = {bound}",
            stats.max_intermediate_rows
        );
    }
}

#[test]
fn adversarial_family_separates_the_engines() {
    let g = gen_line_adversarial(3, 6_000, 200, 21).unwrap();
    let realized = g.realized_out.unwrap();
    let n = g.instance.input_size() as f64;

    let (rs_y, yann) = evaluate(
        &g.query,
        &g.instance,
        &Counting,
        None,
        Algorithm::Yannakakis,
    )
    .unwrap();
    let (rs_l, line) = evaluate(
        &g.query,
        &g.instance,
        &Counting,
        Some(realized),
        Algorithm::Line,
    )
    .unwrap();
    assert!(common::same_result(&rs_y, &rs_l));
    assert!(
        yann.max_intermediate_rows as f64 >= 0.1 * n * realized as f64,
        "classic should blow up: {} rows",
        yann.max_intermediate_rows
    );
    assert!(
        (line.max_intermediate_rows as f64) <= 10.0 * n * (realized as f64).sqrt(),
        "line engine should stay near N·√OUT: {} rows",
        line.max_intermediate_rows
    );
}

#[test]
fn kmv_is_deterministic_and_tracks_out() {
    let g = gen_line_hard(3, 3_000, 2_500, 5).unwrap();
    let a = kmv_estimate_line(&g.query, &g.instance, 64, 9).unwrap();
    let b = kmv_estimate_line(&g.query, &g.instance, 64, 9).unwrap();
    assert_eq!(a, b);
    let realized = g.realized_out.unwrap() as f64;
    assert!(
        (a as f64) >= realized / 2.0 && (a as f64) <= realized * 2.0,
        "estimate {a} vs true {realized}"
    );
}
