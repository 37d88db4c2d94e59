//! Goldfarb–Idnani dual active-set QP solver.
//!
//! The solver starts from the unconstrained minimizer and adds the most
//! violated row at every outer iteration, dropping rows whose multipliers
//! would turn negative. The factorization `J = L^{-T} Q`, `R` is updated with
//! Givens rotations, so every iteration costs `O(n^2)` after one Cholesky.
//!
//! Singular (positive semidefinite) cost matrices are handled by proximal
//! point iterations on `H + sigma I`, each solved by the same routine.

use nalgebra::{DMatrix, DVector};

use super::{ConvexError, KktResiduals, SolveResult, SolveStatus, Tolerances};

/// `minimize 1/2 x'Hx + c'x  s.t.  A x <= b,  E x = d`.
#[derive(Debug, Clone)]
pub struct QuadraticProgram {
    pub cost_matrix: DMatrix<f64>,
    pub cost_vector: DVector<f64>,
    pub ineq_matrix: DMatrix<f64>,
    pub ineq_vector: DVector<f64>,
    pub eq_matrix: DMatrix<f64>,
    pub eq_vector: DVector<f64>,
}

impl QuadraticProgram {
    pub fn new(cost_matrix: DMatrix<f64>, cost_vector: DVector<f64>) -> Self {
        let n = cost_vector.len();
        Self {
            cost_matrix,
            cost_vector,
            ineq_matrix: DMatrix::zeros(0, n),
            ineq_vector: DVector::zeros(0),
            eq_matrix: DMatrix::zeros(0, n),
            eq_vector: DVector::zeros(0),
        }
    }

    pub fn with_inequalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.ineq_matrix = a;
        self.ineq_vector = b;
        self
    }

    pub fn with_equalities(mut self, e: DMatrix<f64>, d: DVector<f64>) -> Self {
        self.eq_matrix = e;
        self.eq_vector = d;
        self
    }

    pub fn num_vars(&self) -> usize {
        self.cost_vector.len()
    }

    pub fn num_ineq(&self) -> usize {
        self.ineq_vector.len()
    }

    pub fn num_eq(&self) -> usize {
        self.eq_vector.len()
    }

    pub fn validate(&self, tol: &Tolerances) -> Result<(), ConvexError> {
        let n = self.num_vars();
        let h = &self.cost_matrix;
        if h.nrows() != n || h.ncols() != n {
            return Err(ConvexError::Dimension(format!(
                "cost matrix is {}x{}, cost vector has {n} entries",
                h.nrows(),
                h.ncols()
            )));
        }
        if self.ineq_matrix.ncols() != n || self.ineq_matrix.nrows() != self.num_ineq() {
            return Err(ConvexError::Dimension(format!(
                "inequality block is {}x{} with {} right-hand sides, expected {n} columns",
                self.ineq_matrix.nrows(),
                self.ineq_matrix.ncols(),
                self.num_ineq()
            )));
        }
        if self.eq_matrix.ncols() != n || self.eq_matrix.nrows() != self.num_eq() {
            return Err(ConvexError::Dimension(format!(
                "equality block is {}x{} with {} right-hand sides, expected {n} columns",
                self.eq_matrix.nrows(),
                self.eq_matrix.ncols(),
                self.num_eq()
            )));
        }
        let finite = h.iter().all(|v| v.is_finite())
            && self.cost_vector.iter().all(|v| v.is_finite())
            && self.ineq_matrix.iter().all(|v| v.is_finite())
            && self.eq_matrix.iter().all(|v| v.is_finite())
            && self.eq_vector.iter().all(|v| v.is_finite())
            && self.ineq_vector.iter().all(|v| !v.is_nan() && *v != f64::NEG_INFINITY);
        if !finite {
            return Err(ConvexError::NonFinite);
        }
        let asym = asymmetry(h);
        if asym > tol.symmetry * h.amax().max(1.0) {
            return Err(ConvexError::NotSymmetric(asym));
        }
        Ok(())
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.cost_matrix * x)) + self.cost_vector.dot(x)
    }

    /// Residuals of the KKT conditions for `x` with inequality multipliers
    /// `lambda` and equality multipliers `mu` (stationarity
    /// `H x + c + A' lambda + E' mu = 0`).
    pub fn kkt_residuals(&self, x: &DVector<f64>, lambda: &DVector<f64>, mu: &DVector<f64>) -> KktResiduals {
        let grad = &self.cost_matrix * x + &self.cost_vector + self.ineq_matrix.tr_mul(lambda) + self.eq_matrix.tr_mul(mu);
        let slack = &self.ineq_vector - &self.ineq_matrix * x;
        let mut primal = slack.iter().fold(0.0_f64, |acc, s| acc.max(-s));
        if self.num_eq() > 0 {
            let eq = &self.eq_matrix * x - &self.eq_vector;
            primal = primal.max(eq.amax());
        }
        let dual_sign = lambda.iter().fold(0.0_f64, |acc, l| acc.max(-l));
        let complementarity = lambda
            .iter()
            .zip(slack.iter())
            .filter(|(l, _)| **l != 0.0)
            .fold(0.0_f64, |acc, (l, s)| acc.max((l * s).abs()));
        KktResiduals {
            primal,
            stationarity: grad.amax(),
            dual_sign,
            complementarity,
        }
    }

    fn data_scale(&self) -> f64 {
        self.cost_vector.amax().max(self.cost_matrix.amax())
    }
}

fn asymmetry(h: &DMatrix<f64>) -> f64 {
    let n = h.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((h[(i, j)] - h[(j, i)]).abs());
        }
    }
    worst
}

/// Solves a QP with the default tolerances.
///
/// Infeasible problems are reported through [`SolveStatus::Infeasible`];
/// malformed or nonconvex input is an error.
pub fn solve_qp(p: &QuadraticProgram) -> Result<SolveResult, ConvexError> {
    solve_qp_with(p, &Tolerances::default())
}

pub fn solve_qp_with(p: &QuadraticProgram, tol: &Tolerances) -> Result<SolveResult, ConvexError> {
    p.validate(tol)?;
    match FactoredQp::new(p.cost_matrix.clone()) {
        Ok(f) => Ok(f.solve_problem(p, tol)),
        Err(_) => solve_semidefinite(p, tol),
    }
}

/// A strictly convex cost matrix with its Cholesky-derived inverse factor,
/// reusable across solves that only change the linear term or the rows.
#[derive(Debug, Clone)]
pub struct FactoredQp {
    h: DMatrix<f64>,
    /// `L^{-T}` where `H = L L'`.
    j0: DMatrix<f64>,
}

impl FactoredQp {
    /// Factors `h`; fails with [`ConvexError::NotPsd`] unless `h` is
    /// numerically positive definite.
    pub fn new(h: DMatrix<f64>) -> Result<Self, ConvexError> {
        let n = h.nrows();
        let chol = h.clone().cholesky().ok_or(ConvexError::NotPsd(0.0))?;
        let l = chol.l();
        let dmin = (0..n).map(|i| l[(i, i)]).fold(f64::INFINITY, f64::min);
        let dmax = (0..n).map(|i| l[(i, i)]).fold(0.0_f64, f64::max);
        if n > 0 && dmin <= 1e-7 * dmax.max(1e-300) {
            return Err(ConvexError::NotPsd(dmin * dmin));
        }
        let linv = l.solve_lower_triangular(&DMatrix::identity(n, n)).ok_or(ConvexError::NotPsd(0.0))?;
        Ok(Self { h, j0: linv.transpose() })
    }

    pub fn cost_matrix(&self) -> &DMatrix<f64> {
        &self.h
    }

    /// Solves the QP whose cost matrix is the factored one. Dimensions are
    /// trusted; use [`solve_qp`] for validated input.
    pub fn solve_problem(&self, p: &QuadraticProgram, tol: &Tolerances) -> SolveResult {
        let mut res = self.solve(&p.cost_vector, &p.ineq_matrix, &p.ineq_vector, &p.eq_matrix, &p.eq_vector, tol);
        certify(p, &mut res, tol);
        res
    }

    pub fn solve(
        &self,
        c: &DVector<f64>,
        a: &DMatrix<f64>,
        b: &DVector<f64>,
        e: &DMatrix<f64>,
        d: &DVector<f64>,
        tol: &Tolerances,
    ) -> SolveResult {
        DualActiveSet::new(&self.h, &self.j0, c, a, b, e, d).run(tol)
    }
}

/// Downgrades an "optimal" result whose KKT residuals are out of tolerance.
fn certify(p: &QuadraticProgram, res: &mut SolveResult, tol: &Tolerances) {
    if res.status != SolveStatus::Optimal {
        return;
    }
    let kkt = p.kkt_residuals(&res.primal, &res.duals, &res.eq_duals);
    let scale = p.data_scale() + res.primal.amax() * p.cost_matrix.amax();
    if !kkt.within(tol, scale) {
        log::debug!("qp: KKT certificate failed ({kkt:?}), reporting max_iter");
        res.status = SolveStatus::MaxIter;
    }
    res.objective = p.objective(&res.primal);
}

fn solve_semidefinite(p: &QuadraticProgram, tol: &Tolerances) -> Result<SolveResult, ConvexError> {
    let n = p.num_vars();
    let eig = p.cost_matrix.clone().symmetric_eigen();
    let min_eig = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let max_eig = eig.eigenvalues.iter().copied().fold(0.0_f64, |a, v| a.max(v.abs()));
    if min_eig < -1e-10 * max_eig.max(1.0) {
        return Err(ConvexError::NotPsd(min_eig));
    }
    let sigma = 1e-4 * max_eig.max(1.0);
    let h_reg = &p.cost_matrix + DMatrix::identity(n, n) * sigma;
    let factored = FactoredQp::new(h_reg)?;
    let mut x = DVector::zeros(n);
    let cap = 200 * tol.iteration_factor * (n + p.num_ineq() + p.num_eq()).max(1);
    let mut total = 0;
    let mut last = SolveResult::failed(n, p.num_ineq(), p.num_eq(), SolveStatus::MaxIter, 0);
    for _ in 0..cap {
        let c = &p.cost_vector - &x * sigma;
        let res = factored.solve(&c, &p.ineq_matrix, &p.ineq_vector, &p.eq_matrix, &p.eq_vector, tol);
        total += res.iterations;
        if res.status != SolveStatus::Optimal {
            let mut res = res;
            res.iterations = total;
            return Ok(res);
        }
        let step = (&res.primal - &x).amax();
        x = res.primal.clone();
        last = res;
        if step <= 1e-13 * (1.0 + x.amax()) {
            break;
        }
    }
    last.iterations = total;
    // Converged iterates satisfy the original KKT system up to sigma * step.
    certify(p, &mut last, tol);
    Ok(last)
}

/// One solve of the Goldfarb–Idnani method.
struct DualActiveSet<'a> {
    h: &'a DMatrix<f64>,
    c: &'a DVector<f64>,
    a: &'a DMatrix<f64>,
    b: &'a DVector<f64>,
    e: &'a DMatrix<f64>,
    d: &'a DVector<f64>,
    n: usize,
    j: DMatrix<f64>,
    r: DMatrix<f64>,
    /// Active constraints in insertion order. Indices `< m` are inequality
    /// rows, `m + k` is equality row `k`.
    active: Vec<usize>,
    /// Multipliers of `active` in the `n'x >= b'` convention.
    u: Vec<f64>,
    /// Sign applied to each active equality row when it was added.
    eq_sign: Vec<f64>,
    x: DVector<f64>,
}

enum StepOutcome {
    Added,
    Infeasible,
}

impl<'a> DualActiveSet<'a> {
    fn new(
        h: &'a DMatrix<f64>,
        j0: &DMatrix<f64>,
        c: &'a DVector<f64>,
        a: &'a DMatrix<f64>,
        b: &'a DVector<f64>,
        e: &'a DMatrix<f64>,
        d: &'a DVector<f64>,
    ) -> Self {
        let n = c.len();
        let j = j0.clone();
        // x0 = -H^{-1} c = -J J' c
        let x = -(&j * j.tr_mul(c));
        Self {
            h,
            c,
            a,
            b,
            e,
            d,
            n,
            j,
            r: DMatrix::zeros(n, n),
            active: Vec::with_capacity(n),
            u: Vec::with_capacity(n),
            eq_sign: vec![1.0; d.len()],
            x,
        }
    }

    fn m(&self) -> usize {
        self.b.len()
    }

    /// Normal `n_p` and offset `b_p` of constraint `idx` in the
    /// `n_p' x >= b_p` convention.
    fn constraint(&self, idx: usize) -> (DVector<f64>, f64) {
        let m = self.m();
        if idx < m {
            (-self.a.row(idx).transpose(), -self.b[idx])
        } else {
            let k = idx - m;
            let s = self.eq_sign[k];
            (self.e.row(k).transpose() * s, self.d[k] * s)
        }
    }

    fn run(mut self, tol: &Tolerances) -> SolveResult {
        let m = self.m();
        let meq = self.d.len();
        let cap = tol.iteration_factor * (m + meq + self.n).max(1);
        let mut iterations = 0;

        for k in 0..meq {
            let row = self.e.row(k);
            let resid = row.dot(&self.x.transpose()) - self.d[k];
            if resid > 0.0 {
                self.eq_sign[k] = -1.0;
            }
            match self.add_constraint(m + k, &mut iterations, cap) {
                Some(StepOutcome::Added) => {}
                Some(StepOutcome::Infeasible) => return SolveResult::failed(self.n, m, meq, SolveStatus::Infeasible, iterations),
                None => return SolveResult::failed(self.n, m, meq, SolveStatus::MaxIter, iterations),
            }
        }

        let row_norms: Vec<f64> = (0..m).map(|i| self.a.row(i).amax()).collect();
        loop {
            iterations += 1;
            if iterations > cap {
                return SolveResult::failed(self.n, m, meq, SolveStatus::MaxIter, iterations);
            }
            let xmax = self.x.amax();
            let mut worst: Option<(usize, f64)> = None;
            for i in 0..m {
                if self.b[i] == f64::INFINITY || self.active.contains(&i) {
                    continue;
                }
                let viol = self.a.row(i).dot(&self.x.transpose()) - self.b[i];
                let thresh = 1e-11 * (1.0 + self.b[i].abs() + row_norms[i] * xmax);
                if viol > thresh && worst.is_none_or(|(_, w)| viol > w) {
                    worst = Some((i, viol));
                }
            }
            let Some((p, _)) = worst else { break };
            match self.add_constraint(p, &mut iterations, cap) {
                Some(StepOutcome::Added) => {}
                Some(StepOutcome::Infeasible) => return SolveResult::failed(self.n, m, meq, SolveStatus::Infeasible, iterations),
                None => return SolveResult::failed(self.n, m, meq, SolveStatus::MaxIter, iterations),
            }
        }

        let mut duals = DVector::zeros(m);
        let mut eq_duals = DVector::zeros(meq);
        for (slot, &idx) in self.active.iter().enumerate() {
            if idx < m {
                duals[idx] = self.u[slot].max(0.0);
            } else {
                let k = idx - m;
                eq_duals[k] = -self.u[slot] * self.eq_sign[k];
            }
        }
        let objective = 0.5 * self.x.dot(&(self.h * &self.x)) + self.c.dot(&self.x);
        SolveResult {
            primal: self.x,
            duals,
            eq_duals,
            status: SolveStatus::Optimal,
            objective,
            iterations,
        }
    }

    /// Drives constraint `p` into the active set, dropping blocking rows as
    /// needed. Returns `None` when the iteration cap is hit.
    fn add_constraint(&mut self, p: usize, iterations: &mut usize, cap: usize) -> Option<StepOutcome> {
        let m = self.m();
        let is_eq = p >= m;
        let (np, bp) = self.constraint(p);
        let mut u_new = 0.0;
        loop {
            *iterations += 1;
            if *iterations > cap {
                return None;
            }
            let q = self.active.len();
            let dvec = self.j.tr_mul(&np);
            let d2_norm = dvec.rows(q, self.n - q).norm();
            let z_is_zero = d2_norm <= 1e-12 * dvec.norm().max(1e-300);
            let z = if z_is_zero {
                DVector::zeros(self.n)
            } else {
                self.j.columns(q, self.n - q) * dvec.rows(q, self.n - q)
            };
            let rdir = self.back_substitute(&dvec);

            // Partial step: largest dual step before an active inequality
            // multiplier hits zero. Ties go to the lowest row index.
            let mut t1 = f64::INFINITY;
            let mut block: Option<usize> = None;
            for (slot, &idx) in self.active.iter().enumerate() {
                if idx >= m || rdir[slot] <= 1e-14 {
                    continue;
                }
                let ratio = self.u[slot] / rdir[slot];
                let better = match block {
                    None => true,
                    Some(b) => ratio < t1 || (ratio == t1 && idx < self.active[b]),
                };
                if better {
                    t1 = ratio;
                    block = Some(slot);
                }
            }

            let slack = np.dot(&self.x) - bp;
            let t2 = if z_is_zero { f64::INFINITY } else { (-slack / z.dot(&np)).max(0.0) };

            let t = t1.min(t2);
            if !t.is_finite() {
                if is_eq && slack.abs() <= 1e-9 * (1.0 + bp.abs()) {
                    // Redundant equality already satisfied.
                    return Some(StepOutcome::Added);
                }
                return Some(StepOutcome::Infeasible);
            }

            if !t2.is_finite() {
                for slot in 0..q {
                    self.u[slot] -= t * rdir[slot];
                }
                u_new += t;
                let slot = block.expect("finite t1 implies a blocking row");
                self.drop_slot(slot);
                continue;
            }

            self.x += &z * t;
            for slot in 0..q {
                self.u[slot] -= t * rdir[slot];
            }
            u_new += t;

            if t2 <= t1 {
                self.push_active(p, u_new, dvec);
                return Some(StepOutcome::Added);
            }
            let slot = block.expect("t1 < t2 implies a blocking row");
            self.drop_slot(slot);
        }
    }

    /// `R^{-1} d[0..q]` for the current upper-triangular `R`.
    fn back_substitute(&self, dvec: &DVector<f64>) -> Vec<f64> {
        let q = self.active.len();
        let mut out = vec![0.0; q];
        for i in (0..q).rev() {
            let mut s = dvec[i];
            for k in (i + 1)..q {
                s -= self.r[(i, k)] * out[k];
            }
            out[i] = s / self.r[(i, i)];
        }
        out
    }

    fn push_active(&mut self, p: usize, u_new: f64, mut dvec: DVector<f64>) {
        let q = self.active.len();
        // Zero d[q+1..n] with Givens rotations, applying them to J's columns.
        for i in (q + 1..self.n).rev() {
            let (a, b) = (dvec[i - 1], dvec[i]);
            if b == 0.0 {
                continue;
            }
            let h = a.hypot(b);
            let (cs, sn) = (a / h, b / h);
            dvec[i - 1] = h;
            dvec[i] = 0.0;
            rotate_columns(&mut self.j, i - 1, i, cs, sn);
        }
        for i in 0..=q {
            self.r[(i, q)] = dvec[i];
        }
        self.active.push(p);
        self.u.push(u_new);
    }

    fn drop_slot(&mut self, slot: usize) {
        let q = self.active.len();
        self.active.remove(slot);
        self.u.remove(slot);
        // Shift the columns of R left past the removed one.
        for col in slot..q - 1 {
            for row in 0..q {
                self.r[(row, col)] = self.r[(row, col + 1)];
            }
        }
        for row in 0..q {
            self.r[(row, q - 1)] = 0.0;
        }
        // Restore triangularity: R has subdiagonal entries (k+1, k).
        for k in slot..q - 1 {
            let (a, b) = (self.r[(k, k)], self.r[(k + 1, k)]);
            if b == 0.0 {
                continue;
            }
            let h = a.hypot(b);
            let (cs, sn) = (a / h, b / h);
            for col in k..q - 1 {
                let (x, y) = (self.r[(k, col)], self.r[(k + 1, col)]);
                self.r[(k, col)] = cs * x + sn * y;
                self.r[(k + 1, col)] = -sn * x + cs * y;
            }
            rotate_columns(&mut self.j, k, k + 1, cs, sn);
        }
    }
}

fn rotate_columns(j: &mut DMatrix<f64>, c0: usize, c1: usize, cs: f64, sn: f64) {
    let n = j.nrows();
    for row in 0..n {
        let (x, y) = (j[(row, c0)], j[(row, c1)]);
        j[(row, c0)] = cs * x + sn * y;
        j[(row, c1)] = -sn * x + cs * y;
    }
}
