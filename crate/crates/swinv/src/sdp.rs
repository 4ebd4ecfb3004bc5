//! Declarative builder for linear-matrix-inequality problems and the adapter
//! to the conic solver (Clarabel behind a triplet interface).
//!
//! The builder stays a dumb compiler: it knows scalar slots, symmetric-matrix
//! slots, affine LMI blocks, linear equalities/inequalities and a linear
//! objective. Bisection loops and modelling decisions live in the calling
//! modules. Returned points are always re-verified by eigenvalue checks:
//! solver status alone is never trusted.

use crate::{Error, Result};
use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;
use std::io::Write;

/// Handle to a scalar decision variable.
#[derive(Debug, Clone, Copy)]
pub struct ScalarVar(pub(crate) usize);

/// Handle to a symmetric matrix variable, stored as its upper triangle in
/// column-major order: slot of entry (r, c), r ≤ c, is `base + c(c+1)/2 + r`.
#[derive(Debug, Clone, Copy)]
pub struct MatVar {
    base: usize,
    pub dim: usize,
}

impl MatVar {
    pub fn slot(&self, r: usize, c: usize) -> usize {
        let (r, c) = if r <= c { (r, c) } else { (c, r) };
        self.base + c * (c + 1) / 2 + r
    }

    pub fn num_slots(&self) -> usize {
        self.dim * (self.dim + 1) / 2
    }

    /// Scalar slot of the k-th upper-triangle entry.
    pub fn nth_slot(&self, k: usize) -> usize {
        self.base + k
    }

    /// Symmetric basis matrix for a slot: `E_rc = e_r e_cᵀ + e_c e_rᵀ` off
    /// the diagonal, `e_r e_rᵀ` on it.
    pub fn basis(&self, k: usize) -> DMatrix<f64> {
        let mut idx = 0;
        for c in 0..self.dim {
            for r in 0..=c {
                if idx == k {
                    let mut e = DMatrix::zeros(self.dim, self.dim);
                    e[(r, c)] = 1.0;
                    e[(c, r)] = 1.0;
                    return e;
                }
                idx += 1;
            }
        }
        panic!("basis index out of range");
    }
}

/// Handle to a vector variable: `dim` consecutive scalar slots.
#[derive(Debug, Clone, Copy)]
pub struct VecVar {
    base: usize,
    pub dim: usize,
}

impl VecVar {
    pub fn slot(&self, k: usize) -> usize {
        self.base + k
    }
}

/// One affine LMI block `C₀ + Σ_k x_k C_k ⪰ 0`.
#[derive(Debug, Clone)]
pub struct LmiBlock {
    pub dim: usize,
    pub constant: DMatrix<f64>,
    terms: BTreeMap<usize, DMatrix<f64>>,
}

impl LmiBlock {
    pub fn new(dim: usize) -> Self {
        LmiBlock {
            dim,
            constant: DMatrix::zeros(dim, dim),
            terms: BTreeMap::new(),
        }
    }

    pub fn add_constant(&mut self, m: &DMatrix<f64>) {
        self.constant += symmetrized(m);
    }

    /// Accumulate `coeff · x_slot` into the block.
    pub fn add_term(&mut self, slot: usize, coeff: &DMatrix<f64>) {
        let sym = symmetrized(coeff);
        if sym.amax() == 0.0 {
            return;
        }
        self.terms
            .entry(slot)
            .and_modify(|m| *m += &sym)
            .or_insert(sym);
    }

    /// Contribution of a symmetric matrix variable through a linear matrix
    /// map: `map` receives each symmetric basis element of `var`.
    pub fn add_matvar(&mut self, var: &MatVar, map: impl Fn(&DMatrix<f64>) -> DMatrix<f64>) {
        for k in 0..var.num_slots() {
            let coeff = map(&var.basis(k));
            self.add_term(var.base + k, &coeff);
        }
    }

    /// Contribution of a vector variable: `map` receives each unit index.
    pub fn add_vecvar(&mut self, var: &VecVar, map: impl Fn(usize) -> DMatrix<f64>) {
        for k in 0..var.dim {
            let coeff = map(k);
            self.add_term(var.slot(k), &coeff);
        }
    }

    /// Evaluate the block at a point.
    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for (&slot, coeff) in &self.terms {
            m += coeff * x[slot];
        }
        m
    }
}

fn symmetrized(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Linear constraint `Σ a_k x_k (cmp) rhs`.
#[derive(Debug, Clone)]
struct LinearRow {
    coeffs: Vec<(usize, f64)>,
    rhs: f64,
}

/// A conic feasibility/minimization problem over scalar, vector and
/// symmetric-matrix variables.
#[derive(Debug, Default)]
pub struct ConeProgram {
    nvars: usize,
    objective: Vec<(usize, f64)>,
    blocks: Vec<LmiBlock>,
    equalities: Vec<LinearRow>,
    /// rows with `Σ a_k x_k ≥ rhs`
    inequalities: Vec<LinearRow>,
}

/// Solver outcome classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericFailure,
}

/// Re-verified solution of a [`ConeProgram`].
#[derive(Debug, Clone)]
pub struct SolverReport {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Worst LMI violation at the returned point, normalized by block norm.
    pub max_residual: f64,
}

impl SolverReport {
    pub fn scalar(&self, v: ScalarVar) -> f64 {
        self.x[v.0]
    }

    pub fn vector(&self, v: &VecVar) -> DVector<f64> {
        DVector::from_fn(v.dim, |k, _| self.x[v.slot(k)])
    }

    pub fn matrix(&self, v: &MatVar) -> DMatrix<f64> {
        DMatrix::from_fn(v.dim, v.dim, |r, c| self.x[v.slot(r, c)])
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

impl ConeProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn scalar(&mut self) -> ScalarVar {
        let v = ScalarVar(self.nvars);
        self.nvars += 1;
        v
    }

    pub fn vector(&mut self, dim: usize) -> VecVar {
        let v = VecVar {
            base: self.nvars,
            dim,
        };
        self.nvars += dim;
        v
    }

    pub fn sym_matrix(&mut self, dim: usize) -> MatVar {
        let v = MatVar {
            base: self.nvars,
            dim,
        };
        self.nvars += v.num_slots();
        v
    }

    pub fn add_lmi(&mut self, block: LmiBlock) {
        self.blocks.push(block);
    }

    pub fn add_equality(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) {
        self.equalities.push(LinearRow { coeffs, rhs });
    }

    /// `Σ a_k x_k ≥ rhs`
    pub fn add_inequality(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) {
        self.inequalities.push(LinearRow { coeffs, rhs });
    }

    /// Add `weight · x_slot` to the (minimized) linear objective.
    pub fn minimize(&mut self, slot: usize, weight: f64) {
        self.objective.push((slot, weight));
    }

    /// Convenience: minimize the trace of a symmetric matrix variable.
    pub fn minimize_trace(&mut self, v: &MatVar) {
        for k in 0..v.dim {
            self.minimize(v.slot(k, k), 1.0);
        }
    }

    fn objective_vector(&self) -> Vec<f64> {
        let mut q = vec![0.0; self.nvars];
        for &(slot, w) in &self.objective {
            q[slot] += w;
        }
        q
    }

    /// Compile to the standard form `A x + s = b, s ∈ K` and run the conic
    /// solver. The returned point is re-verified by eigenvalue checks.
    pub fn solve(&self) -> Result<SolverReport> {
        let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
        let mut b: Vec<f64> = Vec::new();
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        let mut row = 0usize;

        if !self.equalities.is_empty() {
            for eq in &self.equalities {
                for &(slot, a) in &eq.coeffs {
                    triplets.push((row, slot, a));
                }
                b.push(eq.rhs);
                row += 1;
            }
            cones.push(SupportedConeT::ZeroConeT(self.equalities.len()));
        }
        if !self.inequalities.is_empty() {
            // Σ a x ≥ rhs  ->  s = Σ a x − rhs ≥ 0  ->  (−a)·x + s = −rhs
            for ineq in &self.inequalities {
                for &(slot, a) in &ineq.coeffs {
                    triplets.push((row, slot, -a));
                }
                b.push(-ineq.rhs);
                row += 1;
            }
            cones.push(SupportedConeT::NonnegativeConeT(self.inequalities.len()));
        }
        for block in &self.blocks {
            // s = svec(C₀ + Σ x_k C_k) ∈ PSD  ->  −svec(C_k)·x + s = svec(C₀)
            let packed = block.dim * (block.dim + 1) / 2;
            for (&slot, coeff) in &block.terms {
                for (offset, val) in svec(coeff) {
                    if val != 0.0 {
                        triplets.push((row + offset, slot, -val));
                    }
                }
            }
            for (offset, val) in svec(&block.constant) {
                if b.len() <= row + offset {
                    b.resize(row + packed, 0.0);
                }
                b[row + offset] = val;
            }
            b.resize(row + packed, 0.0);
            row += packed;
            cones.push(SupportedConeT::PSDTriangleConeT(block.dim));
        }
        b.resize(row, 0.0);

        let a_mat = csc_from_triplets(row, self.nvars, &triplets);
        let p_mat = CscMatrix::<f64>::zeros((self.nvars, self.nvars));
        let q = self.objective_vector();
        let settings = DefaultSettings {
            verbose: false,
            max_iter: 200,
            tol_gap_abs: 1e-10,
            tol_gap_rel: 1e-10,
            tol_feas: 1e-10,
            ..DefaultSettings::default()
        };
        let mut solver = DefaultSolver::new(&p_mat, &q, &a_mat, &b, &cones, settings);
        solver.solve();
        let sol = &solver.solution;

        let status = match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                SolveStatus::Infeasible
            }
            _ => SolveStatus::NumericFailure,
        };
        let x = sol.x.clone();
        let mut max_residual: f64 = 0.0;
        let mut status = status;
        if status == SolveStatus::Optimal {
            for block in &self.blocks {
                let val = block.eval(&x);
                let scale = 1.0 + val.norm();
                let min_eig = crate::numerics::min_symmetric_eigenvalue(&val);
                let violation = (-min_eig).max(0.0) / scale;
                max_residual = max_residual.max(violation);
            }
            for eq in &self.equalities {
                let lhs: f64 = eq.coeffs.iter().map(|&(s, a)| a * x[s]).sum();
                let scale = 1.0 + eq.rhs.abs();
                max_residual = max_residual.max((lhs - eq.rhs).abs() / scale);
            }
            // independent re-verification: never trust solver status blindly
            if max_residual > 1e-7 {
                status = SolveStatus::NumericFailure;
            }
        }
        Ok(SolverReport {
            status,
            x,
            objective: sol.obj_val,
            max_residual,
        })
    }

    /// Expect feasibility: maps non-optimal outcomes to errors.
    pub fn solve_expect(&self, what: &str) -> Result<SolverReport> {
        let report = self.solve()?;
        match report.status {
            SolveStatus::Optimal => Ok(report),
            SolveStatus::Infeasible => Err(Error::Infeasible(what.into())),
            SolveStatus::NumericFailure => Err(Error::NumericFailure(format!(
                "{what}: solver residual {:.3e}",
                report.max_residual
            ))),
        }
    }

    /// Dump the compiled problem in a plain sparse-triplet text format for
    /// offline cross-checking with an external solver.
    ///
    /// Format: a header line `nvars <n>`, one `obj <slot> <weight>` line per
    /// objective entry, then per constraint group `eq`/`ineq`/`lmi <dim>`
    /// with `row col value` triplets (constants keyed as col = -1).
    pub fn dump_triplets(&self, path: &std::path::Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "nvars {}", self.nvars)?;
        for &(slot, w) in &self.objective {
            writeln!(f, "obj {slot} {w:.17e}")?;
        }
        for eq in &self.equalities {
            write!(f, "eq")?;
            for &(slot, a) in &eq.coeffs {
                write!(f, " {slot}:{a:.17e}")?;
            }
            writeln!(f, " rhs:{:.17e}", eq.rhs)?;
        }
        for ineq in &self.inequalities {
            write!(f, "ineq")?;
            for &(slot, a) in &ineq.coeffs {
                write!(f, " {slot}:{a:.17e}")?;
            }
            writeln!(f, " rhs:{:.17e}", ineq.rhs)?;
        }
        for block in &self.blocks {
            writeln!(f, "lmi {}", block.dim)?;
            for r in 0..block.dim {
                for c in r..block.dim {
                    let v = block.constant[(r, c)];
                    if v != 0.0 {
                        writeln!(f, "{r} {c} -1 {v:.17e}")?;
                    }
                }
            }
            for (&slot, coeff) in &block.terms {
                for r in 0..block.dim {
                    for c in r..block.dim {
                        let v = coeff[(r, c)];
                        if v != 0.0 {
                            writeln!(f, "{r} {c} {slot} {v:.17e}")?;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Scaled upper-triangle packing used by the PSD cone: column-major, entries
/// above the diagonal multiplied by √2.
fn svec(m: &DMatrix<f64>) -> Vec<(usize, f64)> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    let mut idx = 0;
    for c in 0..n {
        for r in 0..=c {
            let v = if r == c {
                m[(r, c)]
            } else {
                (m[(r, c)] + m[(c, r)]) * std::f64::consts::FRAC_1_SQRT_2
            };
            out.push((idx, v));
            idx += 1;
        }
    }
    out
}

fn csc_from_triplets(m: usize, n: usize, triplets: &[(usize, usize, f64)]) -> CscMatrix<f64> {
    let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for &(r, c, v) in triplets {
        by_col[c].push((r, v));
    }
    let mut colptr = Vec::with_capacity(n + 1);
    let mut rowval = Vec::with_capacity(triplets.len());
    let mut nzval = Vec::with_capacity(triplets.len());
    colptr.push(0);
    for col in by_col.iter_mut() {
        col.sort_by_key(|&(r, _)| r);
        // merge duplicates
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(col.len());
        for &(r, v) in col.iter() {
            if let Some(last) = merged.last_mut() {
                if last.0 == r {
                    last.1 += v;
                    continue;
                }
            }
            merged.push((r, v));
        }
        for (r, v) in merged {
            rowval.push(r);
            nzval.push(v);
        }
        colptr.push(rowval.len());
    }
    CscMatrix::new(m, n, colptr, rowval, nzval)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_lp_as_sdp() {
        // minimize x s.t. [x] ⪰ [1]
        let mut prog = ConeProgram::new();
        let x = prog.scalar();
        let mut block = LmiBlock::new(1);
        block.add_constant(&DMatrix::from_row_slice(1, 1, &[-1.0]));
        block.add_term(x.0, &DMatrix::from_row_slice(1, 1, &[1.0]));
        prog.add_lmi(block);
        prog.minimize(x.0, 1.0);
        let report = prog.solve().unwrap();
        assert!(report.is_optimal());
        assert!((report.scalar(x) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn matrix_feasibility() {
        // S ⪰ I with 2x2 variable; identity is admissible
        let mut prog = ConeProgram::new();
        let s = prog.sym_matrix(2);
        let mut block = LmiBlock::new(2);
        block.add_constant(&(-DMatrix::<f64>::identity(2, 2)));
        block.add_matvar(&s, |e| e.clone());
        prog.add_lmi(block);
        let report = prog.solve().unwrap();
        assert!(report.is_optimal());
        let sval = report.matrix(&s);
        assert!(crate::numerics::min_symmetric_eigenvalue(&sval) >= 1.0 - 1e-6);
    }

    #[test]
    fn lyapunov_lmi() {
        // AᵀP + PA ⪯ -I for A = -I: P = I works, so feasible
        let a = -DMatrix::<f64>::identity(2, 2);
        let mut prog = ConeProgram::new();
        let p = prog.sym_matrix(2);
        let mut block = LmiBlock::new(2);
        block.add_constant(&(-DMatrix::<f64>::identity(2, 2)));
        block.add_matvar(&p, |e| -(a.transpose() * e + e * &a));
        prog.add_lmi(block);
        let mut pd = LmiBlock::new(2);
        pd.add_matvar(&p, |e| e.clone());
        prog.add_lmi(pd);
        let report = prog.solve().unwrap();
        assert!(report.is_optimal());
        let pv = report.matrix(&p);
        let lyap = a.transpose() * &pv + &pv * a;
        assert!(crate::numerics::min_symmetric_eigenvalue(&(-lyap - DMatrix::identity(2, 2))) > -1e-7);
    }

    #[test]
    fn infeasible_toy_is_reported() {
        // [x] ⪰ [1] and [−x] ⪰ [1] cannot both hold
        let mut prog = ConeProgram::new();
        let x = prog.scalar();
        for sign in [1.0, -1.0] {
            let mut block = LmiBlock::new(1);
            block.add_constant(&DMatrix::from_row_slice(1, 1, &[-1.0]));
            block.add_term(x.0, &DMatrix::from_row_slice(1, 1, &[sign]));
            prog.add_lmi(block);
        }
        let report = prog.solve().unwrap();
        assert_eq!(report.status, SolveStatus::Infeasible);
    }

    #[test]
    fn equality_and_inequality_rows() {
        // min y s.t. x + y = 2, y ≥ x, x ≥ 0.5  ->  x = y = 1
        let mut prog = ConeProgram::new();
        let x = prog.scalar();
        let y = prog.scalar();
        prog.add_equality(vec![(x.0, 1.0), (y.0, 1.0)], 2.0);
        prog.add_inequality(vec![(y.0, 1.0), (x.0, -1.0)], 0.0);
        prog.add_inequality(vec![(x.0, 1.0)], 0.5);
        prog.minimize(y.0, 1.0);
        let report = prog.solve().unwrap();
        assert!(report.is_optimal());
        assert!((report.scalar(x) - 1.0).abs() < 1e-6);
        assert!((report.scalar(y) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn warm_feasible_point_passes_verifier() {
        let mut prog = ConeProgram::new();
        let s = prog.sym_matrix(3);
        let mut block = LmiBlock::new(3);
        block.add_constant(&(-DMatrix::<f64>::identity(3, 3) * 0.5));
        block.add_matvar(&s, |e| e.clone());
        prog.add_lmi(block.clone());
        // inject S = I as a candidate point and check the residual verifier
        let mut x = vec![0.0; 6];
        let sv = s;
        for k in 0..3 {
            x[sv.slot(k, k)] = 1.0;
        }
        let val = block.eval(&x);
        assert!(crate::numerics::min_symmetric_eigenvalue(&val) > 0.0);
    }
}
