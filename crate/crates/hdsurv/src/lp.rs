//! Dense two-phase primal simplex for the linear programs used by the
//! censored quantile regression estimator and the Dantzig selector.
//!
//! Solves min c'x subject to Ax {<=,=,>=} b, x >= 0. Bland's rule is used
//! for both the entering and leaving choices, so the method terminates on
//! degenerate problems at the cost of speed; problem sizes here are small
//! enough that this does not matter.

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct LpProblem {
    /// Objective coefficients; variables are implicitly non-negative.
    pub objective: Vec<f64>,
    pub constraints: Vec<(Vec<f64>, Constraint, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Unbounded,
    Infeasible,
}

struct Tableau {
    /// m rows of [coefficients.., rhs].
    rows: Vec<Vec<f64>>,
    /// Reduced-cost row, same layout; rhs slot holds -objective.
    cost: Vec<f64>,
    basis: Vec<usize>,
    nvars: usize,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let piv = self.rows[row][col];
        let inv = 1.0 / piv;
        for v in self.rows[row].iter_mut() {
            *v *= inv;
        }
        let pivot_row = self.rows[row].clone();
        for (r, target) in self.rows.iter_mut().enumerate() {
            if r == row {
                continue;
            }
            let factor = target[col];
            if factor != 0.0 {
                for (t, p) in target.iter_mut().zip(&pivot_row) {
                    *t -= factor * p;
                }
                target[col] = 0.0;
            }
        }
        let factor = self.cost[col];
        if factor != 0.0 {
            for (t, p) in self.cost.iter_mut().zip(&pivot_row) {
                *t -= factor * p;
            }
            self.cost[col] = 0.0;
        }
        self.basis[row] = col;
    }

    /// Bland's rule iteration until optimal or unbounded. `allowed` limits
    /// entering candidates (used to keep artificials out in phase 2).
    fn iterate(&mut self, allowed: usize) -> bool {
        loop {
            let enter = (0..allowed).find(|&j| self.cost[j] < -PIVOT_TOL);
            let Some(enter) = enter else {
                return true;
            };
            let mut leave: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for i in 0..self.rows.len() {
                let a = self.rows[i][enter];
                if a > PIVOT_TOL {
                    let ratio = self.rows[i][self.nvars] / a;
                    let better = ratio < best_ratio - 1e-12
                        || (ratio < best_ratio + 1e-12
                            && leave.map_or(true, |l| self.basis[i] < self.basis[l]));
                    if better {
                        best_ratio = ratio.min(best_ratio);
                        leave = Some(i);
                    }
                }
            }
            let Some(leave) = leave else {
                return false;
            };
            self.pivot(leave, enter);
        }
    }

    fn price_out_basis(&mut self, costs: &[f64]) {
        self.cost = vec![0.0; self.nvars + 1];
        self.cost[..costs.len()].copy_from_slice(costs);
        for (i, &b) in self.basis.clone().iter().enumerate() {
            let c = self.cost[b];
            if c != 0.0 {
                let row = self.rows[i].clone();
                for (t, p) in self.cost.iter_mut().zip(&row) {
                    *t -= c * p;
                }
                self.cost[b] = 0.0;
            }
        }
    }
}

pub fn solve(problem: &LpProblem) -> Result<LpOutcome> {
    let n = problem.objective.len();
    let m = problem.constraints.len();
    for (i, (coeffs, _, _)) in problem.constraints.iter().enumerate() {
        if coeffs.len() != n {
            return Err(Error::validation(format!(
                "constraint {i} has {} coefficients, expected {n}",
                coeffs.len()
            )));
        }
    }
    if problem
        .objective
        .iter()
        .chain(problem.constraints.iter().flat_map(|(c, _, b)| {
            c.iter().chain(std::iter::once(b))
        }))
        .any(|v| !v.is_finite())
    {
        return Err(Error::validation("linear program contains non-finite data"));
    }

    // Normalize to b >= 0, then count slack/artificial columns.
    let mut norm: Vec<(Vec<f64>, Constraint, f64)> = Vec::with_capacity(m);
    for (coeffs, kind, b) in &problem.constraints {
        if *b < 0.0 {
            let flipped = match kind {
                Constraint::Le => Constraint::Ge,
                Constraint::Ge => Constraint::Le,
                Constraint::Eq => Constraint::Eq,
            };
            norm.push((coeffs.iter().map(|v| -v).collect(), flipped, -b));
        } else {
            norm.push((coeffs.clone(), *kind, *b));
        }
    }
    let n_slack = norm
        .iter()
        .filter(|(_, k, _)| *k != Constraint::Eq)
        .count();
    let n_art = norm
        .iter()
        .filter(|(_, k, _)| *k != Constraint::Le)
        .count();
    let nvars = n + n_slack + n_art;

    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut slack_at = n;
    let mut art_at = n + n_slack;
    for (coeffs, kind, b) in &norm {
        let mut row = vec![0.0; nvars + 1];
        row[..n].copy_from_slice(coeffs);
        row[nvars] = *b;
        match kind {
            Constraint::Le => {
                row[slack_at] = 1.0;
                basis.push(slack_at);
                slack_at += 1;
            }
            Constraint::Ge => {
                row[slack_at] = -1.0;
                slack_at += 1;
                row[art_at] = 1.0;
                basis.push(art_at);
                art_at += 1;
            }
            Constraint::Eq => {
                row[art_at] = 1.0;
                basis.push(art_at);
                art_at += 1;
            }
        }
        rows.push(row);
    }

    let mut tab = Tableau {
        rows,
        cost: vec![0.0; nvars + 1],
        basis,
        nvars,
    };

    let art_start = n + n_slack;
    if n_art > 0 {
        let mut phase1 = vec![0.0; nvars];
        for c in phase1.iter_mut().skip(art_start) {
            *c = 1.0;
        }
        tab.price_out_basis(&phase1);
        tab.iterate(nvars);
        let phase1_obj = -tab.cost[nvars];
        if phase1_obj > FEAS_TOL {
            return Ok(LpOutcome::Infeasible);
        }
        // Drive remaining artificials out of the basis; rows with no real
        // pivot candidate are redundant and dropped.
        let mut r = 0;
        while r < tab.rows.len() {
            if tab.basis[r] >= art_start {
                let col = (0..art_start).find(|&j| tab.rows[r][j].abs() > PIVOT_TOL);
                match col {
                    Some(col) => tab.pivot(r, col),
                    None => {
                        tab.rows.remove(r);
                        tab.basis.remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
        for row in tab.rows.iter_mut() {
            for v in row.iter_mut().skip(art_start).take(n_art) {
                *v = 0.0;
            }
        }
    }

    let mut phase2 = vec![0.0; nvars];
    phase2[..n].copy_from_slice(&problem.objective);
    tab.price_out_basis(&phase2);
    if !tab.iterate(art_start) {
        return Ok(LpOutcome::Unbounded);
    }

    let mut x = vec![0.0; n];
    for (i, &b) in tab.basis.iter().enumerate() {
        if b < n {
            x[b] = tab.rows[i][tab.nvars].max(0.0);
        }
    }
    let objective = problem
        .objective
        .iter()
        .zip(&x)
        .map(|(c, v)| c * v)
        .sum();
    Ok(LpOutcome::Optimal { x, objective })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn optimal(outcome: LpOutcome) -> (Vec<f64>, f64) {
        match outcome {
            LpOutcome::Optimal { x, objective } => (x, objective),
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn two_variable_maximization() {
        // max x1 + x2 (as min of the negation) over x1 + 2 x2 <= 4, x1 <= 3.
        let p = LpProblem {
            objective: vec![-1.0, -1.0],
            constraints: vec![
                (vec![1.0, 2.0], Constraint::Le, 4.0),
                (vec![1.0, 0.0], Constraint::Le, 3.0),
            ],
        };
        let (x, obj) = optimal(solve(&p).unwrap());
        assert!((x[0] - 3.0).abs() < 1e-9);
        assert!((x[1] - 0.5).abs() < 1e-9);
        assert!((obj + 3.5).abs() < 1e-9);
    }

    #[test]
    fn equality_and_ge_constraints() {
        let p = LpProblem {
            objective: vec![1.0, 1.0],
            constraints: vec![
                (vec![1.0, 1.0], Constraint::Eq, 5.0),
                (vec![1.0, 0.0], Constraint::Le, 2.0),
                (vec![0.0, 1.0], Constraint::Ge, 1.0),
            ],
        };
        let (x, obj) = optimal(solve(&p).unwrap());
        assert!((obj - 5.0).abs() < 1e-9);
        assert!((x[0] + x[1] - 5.0).abs() < 1e-9);
        assert!(x[0] <= 2.0 + 1e-9);
    }

    #[test]
    fn detects_infeasible() {
        let p = LpProblem {
            objective: vec![1.0],
            constraints: vec![
                (vec![1.0], Constraint::Ge, 2.0),
                (vec![1.0], Constraint::Le, 1.0),
            ],
        };
        assert_eq!(solve(&p).unwrap(), LpOutcome::Infeasible);
    }

    #[test]
    fn detects_unbounded() {
        let p = LpProblem {
            objective: vec![-1.0, 0.0],
            constraints: vec![(vec![-1.0, 1.0], Constraint::Le, 1.0)],
        };
        assert_eq!(solve(&p).unwrap(), LpOutcome::Unbounded);
    }

    #[test]
    fn negative_rhs_is_normalized() {
        // -x <= -3 is x >= 3.
        let p = LpProblem {
            objective: vec![1.0],
            constraints: vec![(vec![-1.0], Constraint::Le, -3.0)],
        };
        let (x, obj) = optimal(solve(&p).unwrap());
        assert!((x[0] - 3.0).abs() < 1e-9);
        assert!((obj - 3.0).abs() < 1e-9);
    }

    #[test]
    fn beale_degenerate_example_terminates() {
        // Cycles under the classic most-negative rule; Bland terminates at
        // objective -1/20.
        let p = LpProblem {
            objective: vec![-0.75, 150.0, -0.02, 6.0],
            constraints: vec![
                (vec![0.25, -60.0, -0.04, 9.0], Constraint::Le, 0.0),
                (vec![0.5, -90.0, -0.02, 3.0], Constraint::Le, 0.0),
                (vec![0.0, 0.0, 1.0, 0.0], Constraint::Le, 1.0),
            ],
        };
        let (_, obj) = optimal(solve(&p).unwrap());
        assert!((obj + 0.05).abs() < 1e-9);
    }

    #[test]
    fn redundant_equality_rows_dropped() {
        let p = LpProblem {
            objective: vec![1.0, 2.0],
            constraints: vec![
                (vec![1.0, 1.0], Constraint::Eq, 3.0),
                (vec![2.0, 2.0], Constraint::Eq, 6.0),
            ],
        };
        let (x, obj) = optimal(solve(&p).unwrap());
        assert!((x[0] - 3.0).abs() < 1e-9 && x[1].abs() < 1e-9);
        assert!((obj - 3.0).abs() < 1e-9);
    }
}
