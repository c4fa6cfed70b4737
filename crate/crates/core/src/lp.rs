//! Linear programs and a dense two-phase primal simplex with bounded
//! variables, sized for the few-thousand-variable problems built here.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feasibility tolerance for accepted solutions.
pub const FEAS_TOL: f64 = 1e-7;

const PIVOT_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-9;
/// Consecutive degenerate pivots before switching to Bland's rule.
const STALL_LIMIT: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs = self.activity(x);
        match self.relation {
            Relation::Le => (lhs - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - lhs).max(0.0),
            Relation::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// `optimize c·x` subject to sparse rows and per-variable bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    pub num_vars: usize,
    pub sense: Sense,
    pub objective: Vec<(usize, f64)>,
    pub constraints: Vec<Constraint>,
    /// `[lo, hi]` per variable; `hi` may be `f64::INFINITY`.
    pub bounds: Vec<(f64, f64)>,
}

impl LpProblem {
    pub fn new(num_vars: usize, sense: Sense) -> Self {
        LpProblem {
            num_vars,
            sense,
            objective: Vec::new(),
            constraints: Vec::new(),
            bounds: vec![(0.0, f64::INFINITY); num_vars],
        }
    }

    pub fn set_objective(&mut self, coeffs: Vec<(usize, f64)>) {
        self.objective = coeffs;
    }

    pub fn add_constraint(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        self.constraints.push(Constraint { coeffs, relation, rhs });
    }

    pub fn set_bounds(&mut self, var: usize, lo: f64, hi: f64) {
        self.bounds[var] = (lo, hi);
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Lp(msg));
        if self.bounds.len() != self.num_vars {
            return bad(format!("{} bounds for {} variables", self.bounds.len(), self.num_vars));
        }
        for &(j, c) in &self.objective {
            if j >= self.num_vars || !c.is_finite() {
                return bad(format!("objective entry ({j}, {c}) is malformed"));
            }
        }
        for (r, row) in self.constraints.iter().enumerate() {
            if !row.rhs.is_finite() {
                return bad(format!("row {r} has rhs {}", row.rhs));
            }
            for &(j, a) in &row.coeffs {
                if j >= self.num_vars || !a.is_finite() {
                    return bad(format!("row {r} entry ({j}, {a}) is malformed"));
                }
            }
        }
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            if !lo.is_finite() || hi.is_nan() || hi < lo {
                return bad(format!("variable {j} has bounds [{lo}, {hi}]"));
            }
        }
        Ok(())
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective.iter().map(|&(j, c)| c * x[j]).sum()
    }

    /// Largest row or bound violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.constraints.iter().map(|c| c.violation(x)).fold(0.0, f64::max);
        let bounds = self
            .bounds
            .iter()
            .zip(x)
            .map(|(&(lo, hi), &v)| (lo - v).max(v - hi).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    /// CPLEX LP text layout, for cross-checking with external solvers.
    pub fn to_lp_format(&self) -> String {
        fn terms(out: &mut String, coeffs: &[(usize, f64)]) {
            if coeffs.is_empty() {
                out.push_str(" 0 x0");
            }
            for &(j, a) in coeffs {
                let sign = if a < 0.0 { '-' } else { '+' };
                let _ = write!(out, " {sign} {} x{j}", a.abs());
            }
        }
        let mut out = String::new();
        out.push_str(match self.sense {
            Sense::Maximize => "Maximize\n obj:",
            Sense::Minimize => "Minimize\n obj:",
        });
        terms(&mut out, &self.objective);
        out.push_str("\nSubject To\n");
        for (r, row) in self.constraints.iter().enumerate() {
            let _ = write!(out, " c{r}:");
            terms(&mut out, &row.coeffs);
            let rel = match row.relation {
                Relation::Le => "<=",
                Relation::Eq => "=",
                Relation::Ge => ">=",
            };
            let _ = writeln!(out, " {rel} {}", row.rhs);
        }
        out.push_str("Bounds\n");
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            if hi.is_finite() {
                let _ = writeln!(out, " {lo} <= x{j} <= {hi}");
            } else {
                let _ = writeln!(out, " x{j} >= {lo}");
            }
        }
        out.push_str("End\n");
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub values: Vec<f64>,
    pub objective_value: f64,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// Dense tableau. Row `m` is the objective row holding reduced costs; all
/// nonbasic variables sit at 0 in their (possibly complemented) coordinate.
struct Tableau {
    m: usize,
    cols: usize,
    a: Vec<f64>,
    rhs: Vec<f64>,
    /// Reduced costs for maximization and the current objective constant.
    d: Vec<f64>,
    z: f64,
    upper: Vec<f64>,
    flipped: Vec<bool>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    /// Columns barred from entering (artificials after phase 1).
    barred: Vec<bool>,
}

enum Outcome {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.cols + j]
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let cols = self.cols;
        let p = self.a[r * cols + q];
        let inv = 1.0 / p;
        for v in &mut self.a[r * cols..(r + 1) * cols] {
            *v *= inv;
        }
        self.rhs[r] *= inv;
        let pivot_row: Vec<f64> = self.a[r * cols..(r + 1) * cols].to_vec();
        let pivot_rhs = self.rhs[r];
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.a[i * cols + q];
            if f != 0.0 {
                let row = &mut self.a[i * cols..(i + 1) * cols];
                for (v, &pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[q] = 0.0;
                self.rhs[i] -= f * pivot_rhs;
            }
        }
        let f = self.d[q];
        if f != 0.0 {
            for (v, &pv) in self.d.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.d[q] = 0.0;
            self.z += f * pivot_rhs;
        }
        let leaving = self.basis[r];
        self.is_basic[leaving] = false;
        self.basis[r] = q;
        self.is_basic[q] = true;
    }

    /// Substitute `y_j = u_j - y_j'` for a nonbasic column.
    fn complement_nonbasic(&mut self, j: usize) {
        let u = self.upper[j];
        for i in 0..self.m {
            let idx = i * self.cols + j;
            let t = self.a[idx];
            self.rhs[i] -= t * u;
            self.a[idx] = -t;
        }
        self.z += self.d[j] * u;
        self.d[j] = -self.d[j];
        self.flipped[j] = !self.flipped[j];
    }

    /// Substitute `y_B = u_B - y_B'` for the basic variable of row `r`.
    fn complement_basic(&mut self, r: usize) {
        let b = self.basis[r];
        let u = self.upper[b];
        for (j, v) in self.a[r * self.cols..(r + 1) * self.cols].iter_mut().enumerate() {
            if j != b {
                *v = -*v;
            }
        }
        self.rhs[r] = u - self.rhs[r];
        self.flipped[b] = !self.flipped[b];
    }

    fn run(&mut self, max_iter: usize) -> Result<Outcome> {
        let mut degenerate = 0usize;
        for _ in 0..max_iter {
            let bland = degenerate >= STALL_LIMIT;
            let mut q = None;
            let mut best = OPT_TOL;
            for j in 0..self.cols {
                if self.is_basic[j] || self.barred[j] || self.upper[j] <= 0.0 {
                    continue;
                }
                let dj = self.d[j];
                if dj > best {
                    q = Some(j);
                    if bland {
                        break;
                    }
                    best = dj;
                }
            }
            let Some(q) = q else {
                return Ok(Outcome::Optimal);
            };

            // Ratio test; `None` row means the entering variable hits its bound.
            let mut limit = self.upper[q];
            let mut leave: Option<(usize, bool)> = None;
            for i in 0..self.m {
                let t = self.at(i, q);
                let (ratio, to_upper) = if t > PIVOT_TOL {
                    (self.rhs[i].max(0.0) / t, false)
                } else if t < -PIVOT_TOL && self.upper[self.basis[i]].is_finite() {
                    ((self.upper[self.basis[i]] - self.rhs[i]).max(0.0) / -t, true)
                } else {
                    continue;
                };
                let better = match leave {
                    _ if ratio < limit - 1e-12 => true,
                    Some((l, _)) if ratio <= limit + 1e-12 => {
                        if bland {
                            self.basis[i] < self.basis[l]
                        } else {
                            t.abs() > self.at(l, q).abs()
                        }
                    }
                    _ => false,
                };
                if better {
                    limit = ratio.min(limit);
                    leave = Some((i, to_upper));
                }
            }
            if !limit.is_finite() {
                return Ok(Outcome::Unbounded);
            }
            if limit <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            match leave {
                None => self.complement_nonbasic(q),
                Some((r, to_upper)) => {
                    if to_upper {
                        self.complement_basic(r);
                    }
                    self.pivot(r, q);
                }
            }
        }
        Err(Error::Lp(format!("simplex did not converge in {max_iter} iterations")))
    }

    fn drop_row(&mut self, r: usize) {
        let cols = self.cols;
        self.a.drain(r * cols..(r + 1) * cols);
        self.rhs.remove(r);
        let b = self.basis.remove(r);
        self.is_basic[b] = false;
        self.m -= 1;
    }
}

/// Solves `problem`; malformed input is rejected before solving.
pub fn solve_lp(problem: &LpProblem) -> Result<LpSolution> {
    problem.validate()?;
    let n = problem.num_vars;
    let sign = match problem.sense {
        Sense::Maximize => 1.0,
        Sense::Minimize => -1.0,
    };
    let lo: Vec<f64> = problem.bounds.iter().map(|b| b.0).collect();

    // Shift to y = x - lo >= 0 and orient rows to a nonnegative rhs.
    let mut rows: Vec<(Vec<f64>, Relation, f64)> = Vec::with_capacity(problem.constraints.len());
    for c in &problem.constraints {
        let mut dense = vec![0.0; n];
        for &(j, a) in &c.coeffs {
            dense[j] += a;
        }
        let mut rhs = c.rhs - dense.iter().zip(&lo).map(|(a, l)| a * l).sum::<f64>();
        let mut rel = c.relation;
        if rhs < 0.0 {
            rhs = -rhs;
            dense.iter_mut().for_each(|a| *a = -*a);
            rel = match rel {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
        rows.push((dense, rel, rhs));
    }
    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.1 != Relation::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != Relation::Le).count();
    let cols = n + n_slack + n_art;

    let mut upper = vec![f64::INFINITY; cols];
    for j in 0..n {
        upper[j] = problem.bounds[j].1 - lo[j];
    }
    let mut t = Tableau {
        m,
        cols,
        a: vec![0.0; m * cols],
        rhs: vec![0.0; m],
        d: vec![0.0; cols],
        z: 0.0,
        upper,
        flipped: vec![false; cols],
        basis: vec![0; m],
        is_basic: vec![false; cols],
        barred: vec![false; cols],
    };
    let mut next_slack = n;
    let mut next_art = n + n_slack;
    let mut is_art = vec![false; cols];
    for (i, (dense, rel, rhs)) in rows.into_iter().enumerate() {
        t.a[i * cols..i * cols + n].copy_from_slice(&dense);
        t.rhs[i] = rhs;
        match rel {
            Relation::Le => {
                t.a[i * cols + next_slack] = 1.0;
                t.basis[i] = next_slack;
                next_slack += 1;
            }
            Relation::Ge => {
                t.a[i * cols + next_slack] = -1.0;
                next_slack += 1;
                t.a[i * cols + next_art] = 1.0;
                t.basis[i] = next_art;
                is_art[next_art] = true;
                next_art += 1;
            }
            Relation::Eq => {
                t.a[i * cols + next_art] = 1.0;
                t.basis[i] = next_art;
                is_art[next_art] = true;
                next_art += 1;
            }
        }
    }
    for &b in &t.basis {
        t.is_basic[b] = true;
    }
    let max_iter = 50 * (m + cols) + 1000;

    // Phase 1: maximize -Σ artificials.
    if n_art > 0 {
        for i in 0..m {
            if is_art[t.basis[i]] {
                for j in 0..cols {
                    if !is_art[j] {
                        t.d[j] += t.a[i * cols + j];
                    }
                }
                t.z -= t.rhs[i];
            }
        }
        t.run(max_iter)?;
        let scale = 1.0 + problem.constraints.iter().map(|c| c.rhs.abs()).fold(0.0, f64::max);
        if t.z < -FEAS_TOL * scale {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                values: vec![],
                objective_value: f64::NAN,
            });
        }
        // Drive remaining artificials out of the basis or drop their rows.
        let mut r = 0;
        while r < t.m {
            if is_art[t.basis[r]] {
                let q = (0..cols)
                    .filter(|&j| !is_art[j] && !t.is_basic[j])
                    .max_by(|&a, &b| t.at(r, a).abs().total_cmp(&t.at(r, b).abs()))
                    .filter(|&j| t.at(r, j).abs() > PIVOT_TOL);
                match q {
                    Some(q) => {
                        t.pivot(r, q);
                        r += 1;
                    }
                    None => t.drop_row(r),
                }
            } else {
                r += 1;
            }
        }
        for j in 0..cols {
            if is_art[j] {
                t.barred[j] = true;
            }
        }
    }

    // Phase 2 objective in current coordinates.
    let mut c = vec![0.0; cols];
    for &(j, v) in &problem.objective {
        c[j] += sign * v;
    }
    t.z = 0.0;
    for j in 0..cols {
        if t.flipped[j] {
            t.z += c[j] * t.upper[j];
            c[j] = -c[j];
        }
    }
    t.d = c.clone();
    for i in 0..t.m {
        let cb = c[t.basis[i]];
        if cb != 0.0 {
            for j in 0..cols {
                t.d[j] -= cb * t.a[i * cols + j];
            }
            t.z += cb * t.rhs[i];
        }
    }
    for i in 0..t.m {
        t.d[t.basis[i]] = 0.0;
    }
    if let Outcome::Unbounded = t.run(max_iter)? {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            values: vec![],
            objective_value: sign * f64::INFINITY,
        });
    }

    let mut y = vec![0.0; cols];
    for i in 0..t.m {
        y[t.basis[i]] = t.rhs[i];
    }
    let values: Vec<f64> = (0..n)
        .map(|j| {
            let yj = if t.flipped[j] { t.upper[j] - y[j] } else { y[j] };
            let (l, h) = problem.bounds[j];
            (l + yj).clamp(l, h)
        })
        .collect();
    let viol = problem.max_violation(&values);
    if viol > FEAS_TOL {
        return Err(Error::Lp(format!("solution violates constraints by {viol:e}")));
    }
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective_value: problem.objective_at(&values),
        values,
    })
}
