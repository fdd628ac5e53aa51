//! Dense two-phase simplex for the small linear programs used throughout
//! (matrix games, support enumeration, frequency and exit plans).
//!
//! Bland's rule picks the entering variable. The ratio test prefers large
//! pivots among near-ties and breaks remaining ties by Bland's rule.

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-11;
const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
struct Constraint {
    coeffs: Vec<f64>,
    rel: Relation,
    rhs: f64,
}

/// `maximize c·x` subject to linear constraints, with `x ≥ 0` unless a
/// variable is declared free.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    objective: Vec<f64>,
    free: Vec<bool>,
    rows: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal {
        x: Vec<f64>,
        value: f64,
    },
    Infeasible,
    Unbounded,
    /// Pivot budget exhausted; indicates numerical trouble.
    Stalled,
}

impl LpOutcome {
    pub fn optimal(self) -> Option<(Vec<f64>, f64)> {
        match self {
            LpOutcome::Optimal { x, value } => Some((x, value)),
            _ => None,
        }
    }
}

impl LinearProgram {
    pub fn maximize(objective: Vec<f64>) -> Self {
        let n = objective.len();
        LinearProgram {
            objective,
            free: vec![false; n],
            rows: Vec::new(),
        }
    }

    pub fn vars(&self) -> usize {
        self.objective.len()
    }

    pub fn set_free(&mut self, var: usize) {
        self.free[var] = true;
    }

    pub fn constrain(&mut self, coeffs: Vec<f64>, rel: Relation, rhs: f64) {
        assert_eq!(coeffs.len(), self.vars(), "constraint width");
        self.rows.push(Constraint { coeffs, rel, rhs });
    }

    pub fn solve(&self) -> LpOutcome {
        let n = self.vars();
        // Column layout: original (split for free vars), slacks, artificials.
        let mut col_of = Vec::with_capacity(n);
        let mut ncols = 0;
        for j in 0..n {
            col_of.push(ncols);
            ncols += if self.free[j] { 2 } else { 1 };
        }
        let structural = ncols;
        let m = self.rows.len();

        let mut rows: Vec<(Vec<f64>, Relation, f64)> = Vec::with_capacity(m);
        for c in &self.rows {
            let mut coeffs = vec![0.0; structural];
            for j in 0..n {
                coeffs[col_of[j]] = c.coeffs[j];
                if self.free[j] {
                    coeffs[col_of[j] + 1] = -c.coeffs[j];
                }
            }
            let (coeffs, rel, rhs) = if c.rhs < 0.0 {
                let flipped = match c.rel {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
                (coeffs.iter().map(|v| -v).collect(), flipped, -c.rhs)
            } else {
                (coeffs, c.rel, c.rhs)
            };
            rows.push((coeffs, rel, rhs));
        }

        let slack_count = rows.iter().filter(|r| r.1 != Relation::Eq).count();
        let art_count = rows.iter().filter(|r| r.1 != Relation::Le).count();
        let total = structural + slack_count + art_count;
        let rhs_col = total;
        let mut tab = vec![vec![0.0; total + 1]; m];
        let mut basis = vec![0; m];
        let mut artificial = vec![false; total];
        let mut next_slack = structural;
        let mut next_art = structural + slack_count;
        for (r, (coeffs, rel, rhs)) in rows.iter().enumerate() {
            tab[r][..structural].copy_from_slice(coeffs);
            tab[r][rhs_col] = *rhs;
            match rel {
                Relation::Le => {
                    tab[r][next_slack] = 1.0;
                    basis[r] = next_slack;
                    next_slack += 1;
                }
                Relation::Ge => {
                    tab[r][next_slack] = -1.0;
                    next_slack += 1;
                    tab[r][next_art] = 1.0;
                    artificial[next_art] = true;
                    basis[r] = next_art;
                    next_art += 1;
                }
                Relation::Eq => {
                    tab[r][next_art] = 1.0;
                    artificial[next_art] = true;
                    basis[r] = next_art;
                    next_art += 1;
                }
            }
        }

        let scale = rows.iter().map(|r| r.2.abs()).fold(1.0_f64, f64::max);

        if art_count > 0 {
            let cost: Vec<f64> = artificial
                .iter()
                .map(|&a| if a { -1.0 } else { 0.0 })
                .collect();
            let allowed = vec![true; total];
            match run_simplex(&mut tab, &mut basis, &cost, &allowed) {
                Ok(()) => {}
                Err(Stop::Unbounded) => unreachable!("phase one is bounded"),
                Err(Stop::Stalled) => return LpOutcome::Stalled,
            }
            let infeasibility: f64 = (0..m)
                .filter(|&r| artificial[basis[r]])
                .map(|r| tab[r][rhs_col])
                .sum();
            if infeasibility > 1e-9 * scale {
                return LpOutcome::Infeasible;
            }
            // Drive remaining zero-level artificials out of the basis where possible.
            for r in 0..m {
                if !artificial[basis[r]] {
                    continue;
                }
                let entering = (0..total)
                    .filter(|&j| !artificial[j])
                    .max_by(|&a, &b| tab[r][a].abs().total_cmp(&tab[r][b].abs()));
                if let Some(j) = entering {
                    if tab[r][j].abs() > 1e-9 {
                        pivot(&mut tab, &mut basis, r, j);
                    }
                }
            }
        }

        let mut cost = vec![0.0; total];
        for j in 0..n {
            cost[col_of[j]] = self.objective[j];
            if self.free[j] {
                cost[col_of[j] + 1] = -self.objective[j];
            }
        }
        let allowed: Vec<bool> = artificial.iter().map(|&a| !a).collect();
        match run_simplex(&mut tab, &mut basis, &cost, &allowed) {
            Ok(()) => {}
            Err(Stop::Unbounded) => return LpOutcome::Unbounded,
            Err(Stop::Stalled) => return LpOutcome::Stalled,
        }

        let mut values = vec![0.0; total];
        for r in 0..m {
            values[basis[r]] = tab[r][rhs_col];
        }
        let x: Vec<f64> = (0..n)
            .map(|j| {
                let pos = values[col_of[j]];
                if self.free[j] {
                    pos - values[col_of[j] + 1]
                } else {
                    pos
                }
            })
            .collect();
        let value = x.iter().zip(&self.objective).map(|(a, b)| a * b).sum();
        LpOutcome::Optimal { x, value }
    }
}

enum Stop {
    Unbounded,
    Stalled,
}

fn run_simplex(
    tab: &mut [Vec<f64>],
    basis: &mut [usize],
    cost: &[f64],
    allowed: &[bool],
) -> Result<(), Stop> {
    let m = tab.len();
    let total = cost.len();
    let rhs_col = total;
    let mut is_basic = vec![false; total];
    for &b in basis.iter() {
        is_basic[b] = true;
    }
    for _ in 0..MAX_PIVOTS {
        // Bland: lowest-index column with positive reduced cost.
        let mut entering = None;
        for j in 0..total {
            if !allowed[j] || is_basic[j] {
                continue;
            }
            let mut d = cost[j];
            for r in 0..m {
                d -= cost[basis[r]] * tab[r][j];
            }
            if d > COST_TOL {
                entering = Some(j);
                break;
            }
        }
        let Some(j) = entering else {
            return Ok(());
        };
        // Ratio test; among near-ties the largest pivot wins, then the
        // lowest basic index.
        let mut leaving: Option<(usize, f64)> = None;
        for r in 0..m {
            let a = tab[r][j];
            if a <= PIVOT_TOL {
                continue;
            }
            let ratio = tab[r][rhs_col] / a;
            leaving = match leaving {
                None => Some((r, ratio)),
                Some((best, best_ratio)) => {
                    let better = if ratio < best_ratio - 1e-12 {
                        true
                    } else if ratio <= best_ratio + 1e-12 {
                        a > tab[best][j] || (a == tab[best][j] && basis[r] < basis[best])
                    } else {
                        false
                    };
                    if better {
                        Some((r, ratio))
                    } else {
                        Some((best, best_ratio))
                    }
                }
            };
        }
        let Some((r, _)) = leaving else {
            return Err(Stop::Unbounded);
        };
        is_basic[basis[r]] = false;
        is_basic[j] = true;
        pivot(tab, basis, r, j);
    }
    Err(Stop::Stalled)
}

fn pivot(tab: &mut [Vec<f64>], basis: &mut [usize], r: usize, j: usize) {
    let width = tab[r].len();
    let p = tab[r][j];
    for k in 0..width {
        tab[r][k] /= p;
    }
    tab[r][j] = 1.0;
    let pivot_row = tab[r].clone();
    for (i, row) in tab.iter_mut().enumerate() {
        if i == r {
            continue;
        }
        let f = row[j];
        if f == 0.0 {
            continue;
        }
        for k in 0..width {
            row[k] -= f * pivot_row[k];
            if row[k].abs() < 1e-15 {
                row[k] = 0.0;
            }
        }
        row[j] = 0.0;
    }
    // Clamp tiny negative right-hand sides caused by rounding.
    let rhs = width - 1;
    for row in tab.iter_mut() {
        if row[rhs] < 0.0 && row[rhs] > -1e-12 {
            row[rhs] = 0.0;
        }
    }
    basis[r] = j;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_problem() {
        // max 3x + 5y, x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), 36
        let mut lp = LinearProgram::maximize(vec![3.0, 5.0]);
        lp.constrain(vec![1.0, 0.0], Relation::Le, 4.0);
        lp.constrain(vec![0.0, 2.0], Relation::Le, 12.0);
        lp.constrain(vec![3.0, 2.0], Relation::Le, 18.0);
        let (x, v) = lp.solve().optimal().unwrap();
        assert!((x[0] - 2.0).abs() < 1e-12 && (x[1] - 6.0).abs() < 1e-12);
        assert!((v - 36.0).abs() < 1e-12);
    }

    #[test]
    fn nearly_equal_columns_stay_stable() {
        // Row player of [[0.375, 0.375 + 2^-16], [-0.625, -0.625]]: value 0.375.
        let m = [[0.375, 0.3750152587890625], [-0.625, -0.625]];
        let mut lp = LinearProgram::maximize(vec![0.0, 0.0, 1.0]);
        lp.set_free(2);
        for c in 0..2 {
            lp.constrain(vec![m[0][c], m[1][c], -1.0], Relation::Ge, 0.0);
        }
        lp.constrain(vec![1.0, 1.0, 0.0], Relation::Eq, 1.0);
        let (x, v) = lp.solve().optimal().unwrap();
        assert!((v - 0.375).abs() < 1e-12 && (x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equality_and_ge_rows() {
        // min x + y s.t. x + y ≥ 1, x − y = 0.5
        let mut lp = LinearProgram::maximize(vec![-1.0, -1.0]);
        lp.constrain(vec![1.0, 1.0], Relation::Ge, 1.0);
        lp.constrain(vec![1.0, -1.0], Relation::Eq, 0.5);
        let (x, v) = lp.solve().optimal().unwrap();
        assert!((x[0] - 0.75).abs() < 1e-12 && (x[1] - 0.25).abs() < 1e-12);
        assert!((v + 1.0).abs() < 1e-12);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let mut lp = LinearProgram::maximize(vec![1.0]);
        lp.constrain(vec![1.0], Relation::Le, 1.0);
        lp.constrain(vec![1.0], Relation::Ge, 2.0);
        assert_eq!(lp.solve(), LpOutcome::Infeasible);

        let mut lp = LinearProgram::maximize(vec![1.0, 0.0]);
        lp.constrain(vec![1.0, -1.0], Relation::Le, 1.0);
        assert_eq!(lp.solve(), LpOutcome::Unbounded);
    }

    #[test]
    fn free_variable_can_go_negative() {
        // max t s.t. t ≤ -3 with t free
        let mut lp = LinearProgram::maximize(vec![1.0]);
        lp.set_free(0);
        lp.constrain(vec![1.0], Relation::Le, -3.0);
        let (x, _) = lp.solve().optimal().unwrap();
        assert!((x[0] + 3.0).abs() < 1e-12);
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::maximize(vec![1.0, 2.0]);
        lp.constrain(vec![1.0, 1.0], Relation::Eq, 1.0);
        lp.constrain(vec![2.0, 2.0], Relation::Eq, 2.0);
        let (x, v) = lp.solve().optimal().unwrap();
        assert!((x[1] - 1.0).abs() < 1e-12);
        assert!((v - 2.0).abs() < 1e-12);
    }
}
