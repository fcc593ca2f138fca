//! Thin wrapper over `minilp` so the rest of the crate never touches the
//! solver types directly.

use minilp::{ComparisonOp, OptimizationDirection, Problem, Variable};

use crate::error::{ReachError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug)]
pub struct LinearProgram {
    maximize: bool,
    objective: Vec<f64>,
    bounds: Vec<(f64, f64)>,
    constraints: Vec<(Vec<(usize, f64)>, Cmp, f64)>,
}

#[derive(Clone, Debug)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn optimal(self) -> Option<(Vec<f64>, f64)> {
        match self {
            LpOutcome::Optimal { x, objective } => Some((x, objective)),
            _ => None,
        }
    }
}

impl LinearProgram {
    pub fn maximize() -> Self {
        Self::with_direction(true)
    }

    pub fn minimize() -> Self {
        Self::with_direction(false)
    }

    fn with_direction(maximize: bool) -> Self {
        LinearProgram {
            maximize,
            objective: Vec::new(),
            bounds: Vec::new(),
            constraints: Vec::new(),
        }
    }

    /// Adds a variable and returns its column index.
    pub fn var(&mut self, objective: f64, lo: f64, hi: f64) -> usize {
        self.objective.push(objective);
        self.bounds.push((lo, hi));
        self.objective.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn constraint(&mut self, terms: Vec<(usize, f64)>, cmp: Cmp, rhs: f64) {
        self.constraints.push((terms, cmp, rhs));
    }

    /// Dense helper: `Σ coeffs[i]·x[vars[i]] cmp rhs`.
    pub fn dense(&mut self, vars: &[usize], coeffs: &[f64], cmp: Cmp, rhs: f64) {
        let terms = vars.iter().copied().zip(coeffs.iter().copied()).collect();
        self.constraint(terms, cmp, rhs);
    }

    pub fn solve(&self) -> Result<LpOutcome> {
        let dir = if self.maximize {
            OptimizationDirection::Maximize
        } else {
            OptimizationDirection::Minimize
        };
        let mut problem = Problem::new(dir);
        let vars: Vec<Variable> = self
            .objective
            .iter()
            .zip(&self.bounds)
            .map(|(&c, &b)| problem.add_var(c, b))
            .collect();
        for (terms, cmp, rhs) in &self.constraints {
            if !rhs.is_finite() || terms.iter().any(|(_, c)| !c.is_finite()) {
                return Err(ReachError::NumericalFailure(
                    "non-finite LP coefficient".into(),
                ));
            }
            let expr: Vec<(Variable, f64)> = terms
                .iter()
                .filter(|(_, c)| *c != 0.0)
                .map(|&(i, c)| (vars[i], c))
                .collect();
            let op = match cmp {
                Cmp::Le => ComparisonOp::Le,
                Cmp::Ge => ComparisonOp::Ge,
                Cmp::Eq => ComparisonOp::Eq,
            };
            if expr.is_empty() {
                let ok = match cmp {
                    Cmp::Le => 0.0 <= *rhs + 1e-12,
                    Cmp::Ge => 0.0 >= *rhs - 1e-12,
                    Cmp::Eq => rhs.abs() <= 1e-12,
                };
                if !ok {
                    return Ok(LpOutcome::Infeasible);
                }
                continue;
            }
            problem.add_constraint(expr.as_slice(), op, *rhs);
        }
        match problem.solve() {
            Ok(sol) => {
                let x: Vec<f64> = vars.iter().map(|&v| *sol.var_value(v)).collect();
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(ReachError::NumericalFailure(
                        "LP returned a non-finite solution".into(),
                    ));
                }
                Ok(LpOutcome::Optimal {
                    x,
                    objective: sol.objective(),
                })
            }
            Err(minilp::Error::Infeasible) => Ok(LpOutcome::Infeasible),
            Err(minilp::Error::Unbounded) => Ok(LpOutcome::Unbounded),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_max() {
        // max x + y s.t. x + 2y <= 4, 3x + y <= 6
        let mut lp = LinearProgram::maximize();
        let x = lp.var(1.0, 0.0, f64::INFINITY);
        let y = lp.var(1.0, 0.0, f64::INFINITY);
        lp.dense(&[x, y], &[1.0, 2.0], Cmp::Le, 4.0);
        lp.dense(&[x, y], &[3.0, 1.0], Cmp::Le, 6.0);
        let (sol, obj) = lp.solve().unwrap().optimal().unwrap();
        assert!((obj - 2.8).abs() < 1e-9);
        assert!((sol[0] - 1.6).abs() < 1e-9);
    }

    #[test]
    fn infeasible() {
        let mut lp = LinearProgram::minimize();
        let x = lp.var(0.0, -1.0, 1.0);
        lp.dense(&[x], &[1.0], Cmp::Ge, 2.0);
        assert!(matches!(lp.solve().unwrap(), LpOutcome::Infeasible));
    }
}
