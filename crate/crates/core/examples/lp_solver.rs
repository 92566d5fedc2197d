//! The dense simplex solver on a small production-planning LP.

use stochcmp::optim::{lp_solve, LpProblem};

fn main() {
    // max 3x + 5y  s.t.  x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18
    let mut lp = LpProblem::new(vec![-3.0, -5.0]);
    lp.le(vec![1.0, 0.0], 4.0).le(vec![0.0, 2.0], 12.0).le(vec![3.0, 2.0], 18.0);
    let s = lp_solve(&lp, 100);
    println!("{:?}: x = {:.3?}, objective = {:.3} after {} pivots", s.status, s.x, -s.objective, s.iterations);
}
