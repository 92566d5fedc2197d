//! Randomized checks of the matrix inequalities behind the dominance results.
//! The plain statements fail on generic inputs; the sandwiched forms hold.

use stochcmp::asymptotics::{check_lemma2, check_lemma2_sandwich, check_lemma3, check_lemma3_sandwich, lemma2_slack};
use stochcmp::linalg::Mat;
use stochcmp::stats::RngStream;

fn main() -> stochcmp::Result<()> {
    let root = RngStream::new(2024, 0);
    for lambda in [0.0, 0.1] {
        println!("{}", check_lemma2(&mut root.derive(1), 4, 2, lambda, 500)?);
        println!("{}", check_lemma2_sandwich(&mut root.derive(2), 4, 2, lambda, 500)?);
        println!("{}", check_lemma3(&mut root.derive(3), 4, 2, lambda, 500)?);
        println!("{}", check_lemma3_sandwich(&mut root.derive(4), 4, 2, lambda, 500)?);
    }
    // smallest counterexample: Q1 = I, Q3 = e1, Q2 = all-ones
    let q1 = Mat::identity(2, 2);
    let q2 = Mat::from_element(2, 2, 1.0);
    let q3 = Mat::from_column_slice(2, 1, &[1.0, 0.0]);
    println!("2×2 counterexample slack: {:.4}", lemma2_slack(&q1, &q2, &q3, 0.0)?);
    Ok(())
}
