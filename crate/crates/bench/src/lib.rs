//! Benchmark fixtures: pre-generated instances shared by the criterion
//! benches so setup cost stays out of the measurements.

use joinagg::generators::{gen_line_adversarial, gen_line_hard, gen_star_hard, Generated};

pub fn star_instance() -> Generated {
    gen_star_hard(3, 3_000, 1_000, 42).expect("star generator")
}

pub fn line_instance() -> Generated {
    gen_line_hard(3, 6_000, 2_500, 42).expect("line generator")
}

pub fn adversarial_instance() -> Generated {
    gen_line_adversarial(3, 4_000, 100, 42).expect("adversarial generator")
}
