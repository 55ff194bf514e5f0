//! Small dense two-phase simplex solver for the exact reference paths
//! (hinge-loss LPs on tiny instances and the finite-class fair LP).
//!
//! Every variable is non-negative. Problems are minimized.

const TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct LinearProgram {
    objective: Vec<f64>,
    rows: Vec<(Vec<f64>, Relation, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

impl LinearProgram {
    /// Minimize `objective . x` over `x >= 0`.
    pub fn minimize(objective: Vec<f64>) -> Self {
        LinearProgram { objective, rows: Vec::new() }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn constrain(&mut self, coeffs: Vec<f64>, rel: Relation, rhs: f64) {
        assert_eq!(coeffs.len(), self.objective.len(), "constraint width");
        self.rows.push((coeffs, rel, rhs));
    }

    pub fn solve(&self) -> LpOutcome {
        Tableau::build(self).run(&self.objective)
    }
}

struct Tableau {
    m: usize,
    n_struct: usize,
    n_cols: usize,
    first_artificial: usize,
    // m rows of n_cols + 1 entries; last entry is the rhs
    a: Vec<Vec<f64>>,
    basis: Vec<usize>,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let m = lp.rows.len();
        let n_struct = lp.n_vars();
        let mut rows: Vec<(Vec<f64>, Relation, f64)> = lp
            .rows
            .iter()
            .map(|(c, r, b)| {
                if *b < 0.0 {
                    let flipped = match r {
                        Relation::Le => Relation::Ge,
                        Relation::Ge => Relation::Le,
                        Relation::Eq => Relation::Eq,
                    };
                    (c.iter().map(|v| -v).collect(), flipped, -b)
                } else {
                    (c.clone(), *r, *b)
                }
            })
            .collect();
        let n_slack = rows.iter().filter(|r| r.1 != Relation::Eq).count();
        let n_art = rows.iter().filter(|r| r.1 != Relation::Le).count();
        let first_artificial = n_struct + n_slack;
        let n_cols = first_artificial + n_art;
        let mut a = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        let (mut s, mut t) = (n_struct, first_artificial);
        for (coeffs, rel, rhs) in rows.drain(..) {
            let mut row = vec![0.0; n_cols + 1];
            row[..n_struct].copy_from_slice(&coeffs);
            row[n_cols] = rhs;
            match rel {
                Relation::Le => {
                    row[s] = 1.0;
                    basis.push(s);
                    s += 1;
                }
                Relation::Ge => {
                    row[s] = -1.0;
                    s += 1;
                    row[t] = 1.0;
                    basis.push(t);
                    t += 1;
                }
                Relation::Eq => {
                    row[t] = 1.0;
                    basis.push(t);
                    t += 1;
                }
            }
            a.push(row);
        }
        Tableau { m, n_struct, n_cols, first_artificial, a, basis }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.a[r][c];
        for v in self.a[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.a[r].clone();
        for (i, row) in self.a.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
        self.basis[r] = c;
    }

    /// Minimizes `cost . x` over the current tableau, entering only columns
    /// below `allowed`. Returns false if unbounded.
    fn optimize(&mut self, cost: &[f64], allowed: usize) -> bool {
        let rhs = self.n_cols;
        let mut degenerate_run = 0usize;
        let mut bland = false;
        for _ in 0..50_000 {
            // reduced costs d_j = c_j - c_B . column_j
            let mut enter = None;
            let mut best = -TOL;
            for j in 0..allowed {
                if self.basis.contains(&j) {
                    continue;
                }
                let mut d = cost[j];
                for (i, row) in self.a.iter().enumerate() {
                    d -= cost[self.basis[i]] * row[j];
                }
                if d < -TOL {
                    if bland {
                        enter = Some(j);
                        break;
                    }
                    if d < best {
                        best = d;
                        enter = Some(j);
                    }
                }
            }
            let Some(c) = enter else { return true };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let v = self.a[i][c];
                if v > TOL {
                    let ratio = self.a[i][rhs] / v;
                    let better = match leave {
                        None => true,
                        Some((l, r)) => {
                            ratio < r - TOL || (ratio <= r + TOL && self.basis[i] < self.basis[l])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((r, ratio)) = leave else { return false };
            if ratio <= TOL {
                degenerate_run += 1;
                if degenerate_run > 50 {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
            }
            self.pivot(r, c);
        }
        log::warn!("simplex pivot cap reached");
        true
    }

    fn run(mut self, objective: &[f64]) -> LpOutcome {
        let rhs = self.n_cols;
        if self.first_artificial < self.n_cols {
            let mut phase1 = vec![0.0; self.n_cols];
            for v in phase1.iter_mut().skip(self.first_artificial) {
                *v = 1.0;
            }
            self.optimize(&phase1, self.n_cols);
            let infeas: f64 = (0..self.m)
                .filter(|&i| self.basis[i] >= self.first_artificial)
                .map(|i| self.a[i][rhs])
                .sum();
            if infeas > 1e-7 {
                return LpOutcome::Infeasible;
            }
            // drive zero-valued artificials out of the basis
            for i in 0..self.m {
                if self.basis[i] >= self.first_artificial {
                    if let Some(c) = (0..self.first_artificial)
                        .find(|&j| !self.basis.contains(&j) && self.a[i][j].abs() > TOL)
                    {
                        self.pivot(i, c);
                    }
                }
            }
        }
        let mut cost = vec![0.0; self.n_cols];
        cost[..self.n_struct].copy_from_slice(objective);
        if !self.optimize(&cost, self.first_artificial) {
            return LpOutcome::Unbounded;
        }
        let mut x = vec![0.0; self.n_struct];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < self.n_struct {
                x[b] = self.a[i][rhs].max(0.0);
            }
        }
        let value = x.iter().zip(objective).map(|(a, b)| a * b).sum();
        LpOutcome::Optimal { x, value }
    }
}
