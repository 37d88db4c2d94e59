//! Inequality-form LP solved through its standard-form dual.
//!
//! For `min c'x s.t. A x <= b` with free `x`, the dual
//! `min b'y s.t. A'y = -c, y >= 0` is in the shape a textbook two-phase
//! tableau simplex wants. The optimal tableau gives both the row multipliers
//! (the dual basic values) and the primal point (the simplex multipliers of
//! the dual's equality rows). Bland's rule keeps degenerate problems finite
//! and deterministic.

use nalgebra::{DMatrix, DVector};

use super::{ConvexError, KktResiduals, SolveResult, SolveStatus, Tolerances};

/// `minimize c'x  s.t.  A x <= b`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub cost_vector: DVector<f64>,
    pub ineq_matrix: DMatrix<f64>,
    pub ineq_vector: DVector<f64>,
}

impl LinearProgram {
    pub fn new(cost_vector: DVector<f64>, ineq_matrix: DMatrix<f64>, ineq_vector: DVector<f64>) -> Self {
        Self {
            cost_vector,
            ineq_matrix,
            ineq_vector,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.cost_vector.len()
    }

    pub fn num_ineq(&self) -> usize {
        self.ineq_vector.len()
    }

    pub fn validate(&self) -> Result<(), ConvexError> {
        let n = self.num_vars();
        if self.ineq_matrix.ncols() != n || self.ineq_matrix.nrows() != self.num_ineq() {
            return Err(ConvexError::Dimension(format!(
                "inequality block is {}x{} with {} right-hand sides, expected {n} columns",
                self.ineq_matrix.nrows(),
                self.ineq_matrix.ncols(),
                self.num_ineq()
            )));
        }
        let finite = self.cost_vector.iter().all(|v| v.is_finite())
            && self.ineq_matrix.iter().all(|v| v.is_finite())
            && self.ineq_vector.iter().all(|v| v.is_finite());
        if !finite {
            return Err(ConvexError::NonFinite);
        }
        Ok(())
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        self.cost_vector.dot(x)
    }

    /// KKT residuals with stationarity `c + A' lambda = 0`.
    pub fn kkt_residuals(&self, x: &DVector<f64>, lambda: &DVector<f64>) -> KktResiduals {
        let grad = &self.cost_vector + self.ineq_matrix.tr_mul(lambda);
        let slack = &self.ineq_vector - &self.ineq_matrix * x;
        KktResiduals {
            primal: slack.iter().fold(0.0_f64, |acc, s| acc.max(-s)),
            stationarity: grad.amax(),
            dual_sign: lambda.iter().fold(0.0_f64, |acc, l| acc.max(-l)),
            complementarity: lambda.iter().zip(slack.iter()).fold(0.0_f64, |acc, (l, s)| acc.max((l * s).abs())),
        }
    }
}

pub fn solve_lp(p: &LinearProgram) -> Result<SolveResult, ConvexError> {
    solve_lp_with(p, &Tolerances::default())
}

pub fn solve_lp_with(p: &LinearProgram, tol: &Tolerances) -> Result<SolveResult, ConvexError> {
    p.validate()?;
    Ok(solve_validated(p, tol))
}

enum Phase {
    Optimal,
    Unbounded,
    MaxIter,
}

/// Dense tableau `[B^{-1} A | B^{-1} rhs]` over the dual variables followed
/// by one artificial column per row.
struct Tableau {
    t: DMatrix<f64>,
    basis: Vec<usize>,
    /// Number of structural (dual) columns.
    structural: usize,
    /// +1/-1 applied to each equality row to make its right-hand side >= 0.
    row_sign: Vec<f64>,
    iterations: usize,
}

const PIVOT_EPS: f64 = 1e-11;

impl Tableau {
    fn rows(&self) -> usize {
        self.t.nrows()
    }

    fn rhs_col(&self) -> usize {
        self.t.ncols() - 1
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let ncols = self.rhs_col();
        let mut red = cost.to_vec();
        for (i, &bv) in self.basis.iter().enumerate() {
            let cb = cost[bv];
            if cb == 0.0 {
                continue;
            }
            for (j, r) in red.iter_mut().enumerate().take(ncols) {
                *r -= cb * self.t[(i, j)];
            }
        }
        red
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let ncols = self.t.ncols();
        let piv = self.t[(row, col)];
        for j in 0..ncols {
            self.t[(row, j)] /= piv;
        }
        for i in 0..self.rows() {
            if i == row {
                continue;
            }
            let f = self.t[(i, col)];
            if f == 0.0 {
                continue;
            }
            for j in 0..ncols {
                let v = self.t[(row, j)];
                self.t[(i, j)] -= f * v;
            }
        }
        self.basis[row] = col;
    }

    fn optimize(&mut self, cost: &[f64], allowed: impl Fn(usize) -> bool, cap: usize) -> Phase {
        let cscale = cost.iter().fold(1.0_f64, |a, c| a.max(c.abs()));
        loop {
            let red = self.reduced_costs(cost);
            // Bland: lowest-index improving column.
            let Some(enter) = (0..self.rhs_col()).find(|&j| allowed(j) && red[j] < -1e-11 * cscale) else {
                return Phase::Optimal;
            };
            self.iterations += 1;
            if self.iterations > cap {
                return Phase::MaxIter;
            }
            let rhs = self.rhs_col();
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows() {
                let a = self.t[(i, enter)];
                if a <= PIVOT_EPS {
                    continue;
                }
                let ratio = self.t[(i, rhs)].max(0.0) / a;
                let better = match leave {
                    None => true,
                    Some((li, lr)) => {
                        ratio < lr - 1e-14 * lr.abs().max(1.0)
                            || (ratio <= lr + 1e-14 * lr.abs().max(1.0) && self.basis[i] < self.basis[li])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
            match leave {
                None => return Phase::Unbounded,
                Some((row, _)) => self.pivot(row, enter),
            }
        }
    }
}

fn solve_validated(p: &LinearProgram, tol: &Tolerances) -> SolveResult {
    let n = p.num_vars();
    let m = p.num_ineq();
    let cap = tol.iteration_factor * (m + n).max(1);
    let fail = |status, it| SolveResult::failed(n, m, 0, status, it);

    if n == 0 {
        let feasible = p.ineq_vector.iter().all(|b| *b >= -tol.feasibility);
        let status = if feasible { SolveStatus::Optimal } else { SolveStatus::Infeasible };
        return SolveResult {
            primal: DVector::zeros(0),
            duals: DVector::zeros(m),
            eq_duals: DVector::zeros(0),
            status,
            objective: 0.0,
            iterations: 0,
        };
    }

    // Dual rows: sum_j A[j,i] y_j = -c_i.
    let ncols = m + n + 1;
    let mut t = DMatrix::zeros(n, ncols);
    let mut row_sign = vec![1.0; n];
    for i in 0..n {
        let rhs = -p.cost_vector[i];
        let s = if rhs < 0.0 { -1.0 } else { 1.0 };
        row_sign[i] = s;
        for j in 0..m {
            t[(i, j)] = s * p.ineq_matrix[(j, i)];
        }
        t[(i, m + i)] = 1.0;
        t[(i, ncols - 1)] = s * rhs;
    }
    let mut tab = Tableau {
        t,
        basis: (m..m + n).collect(),
        structural: m,
        row_sign,
        iterations: 0,
    };

    let mut phase1 = vec![0.0; m + n];
    phase1[m..].iter_mut().for_each(|c| *c = 1.0);
    match tab.optimize(&phase1, |_| true, cap) {
        Phase::Optimal => {}
        Phase::Unbounded | Phase::MaxIter => return fail(SolveStatus::MaxIter, tab.iterations),
    }
    let infeas: f64 = tab
        .basis
        .iter()
        .enumerate()
        .filter(|(_, &bv)| bv >= m)
        .map(|(i, _)| tab.t[(i, ncols - 1)])
        .sum();
    if infeas > 1e-9 * (1.0 + p.cost_vector.amax()) {
        // Dual infeasible: the primal is either infeasible or unbounded.
        let status = if primal_feasible(p, tol) {
            SolveStatus::Unbounded
        } else {
            SolveStatus::Infeasible
        };
        return fail(status, tab.iterations);
    }

    // Pivot zero-level artificials out where a structural column allows it;
    // rows where none does are redundant and stay inert.
    for i in 0..n {
        if tab.basis[i] < m {
            continue;
        }
        if let Some(j) = (0..m).find(|&j| tab.t[(i, j)].abs() > 1e-9) {
            tab.pivot(i, j);
        }
    }

    let mut cost2 = vec![0.0; m + n];
    cost2[..m].copy_from_slice(p.ineq_vector.as_slice());
    let structural = tab.structural;
    match tab.optimize(&cost2, |j| j < structural, cap) {
        Phase::Optimal => {}
        Phase::Unbounded => return fail(SolveStatus::Infeasible, tab.iterations),
        Phase::MaxIter => return fail(SolveStatus::MaxIter, tab.iterations),
    }

    let mut duals = DVector::zeros(m);
    for (i, &bv) in tab.basis.iter().enumerate() {
        if bv < m {
            duals[bv] = tab.t[(i, ncols - 1)].max(0.0);
        }
    }
    let red = tab.reduced_costs(&cost2);
    let mut x = DVector::from_fn(n, |i, _| -tab.row_sign[i] * red[m + i]);

    // Where the basis is fully structural the primal point solves the
    // basic rows exactly; re-solve to shed accumulated pivoting error.
    if tab.basis.iter().all(|&bv| bv < m) {
        let gb = DMatrix::from_fn(n, n, |r, c| p.ineq_matrix[(tab.basis[r], c)]);
        let hb = DVector::from_fn(n, |r, _| p.ineq_vector[tab.basis[r]]);
        if let Some(sol) = gb.lu().solve(&hb) {
            if sol.iter().all(|v| v.is_finite()) {
                x = sol;
            }
        }
    }

    let mut res = SolveResult {
        objective: p.objective(&x),
        primal: x,
        duals,
        eq_duals: DVector::zeros(0),
        status: SolveStatus::Optimal,
        iterations: tab.iterations,
    };
    let kkt = p.kkt_residuals(&res.primal, &res.duals);
    let scale = p.cost_vector.amax() + p.ineq_vector.amax() + p.ineq_matrix.amax();
    if !kkt.within(tol, scale) {
        log::debug!("lp: KKT certificate failed ({kkt:?})");
        res.status = SolveStatus::MaxIter;
    }
    res
}

/// Phase-one check: `min t  s.t.  A x - t <= b, -t <= 0` has a feasible,
/// bounded dual, so this never recurses further.
fn primal_feasible(p: &LinearProgram, tol: &Tolerances) -> bool {
    let n = p.num_vars();
    let m = p.num_ineq();
    let mut a = DMatrix::zeros(m + 1, n + 1);
    a.view_mut((0, 0), (m, n)).copy_from(&p.ineq_matrix);
    for i in 0..m {
        a[(i, n)] = -1.0;
    }
    a[(m, n)] = -1.0;
    let mut b = DVector::zeros(m + 1);
    b.rows_mut(0, m).copy_from(&p.ineq_vector);
    let mut c = DVector::zeros(n + 1);
    c[n] = 1.0;
    let aux = LinearProgram::new(c, a, b);
    let res = solve_validated(&aux, tol);
    res.status == SolveStatus::Optimal && res.objective <= tol.feasibility * (1.0 + p.ineq_vector.amax())
}
