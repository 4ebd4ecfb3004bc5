//! Local optimization of the translated-norm centers `c_i` by sequential
//! convexification.
//!
//! The coupled dwell-time program is an LMI for fixed centers but bilinear
//! once the `c_i` become variables (they enter the lifted forms `𝒫_i`
//! quadratically).  The path-following method linearizes the block
//! constraints around the current solution, takes a small step bounded
//! element-wise by `δ` in `(P_i, c_i)`, re-solves the exact program at the
//! new centers, and repeats until the objective `f = Σ Tr M_ij` stops
//! improving.  Warm-starting at the per-mode equilibria is effective because
//! the optimal centers approach them as the dwell time grows.

use nalgebra::{DMatrix, DVector};

use crate::dwell::{
    augmented_form, balance_level, dwell_certificate, dwell_lmi, length_scale, DwellCertificate,
    DwellVariables,
};
use crate::error::Error;
use crate::numerics;
use crate::sdp::{ConeProgram, LmiBlock, SolveStatus};
use crate::system::{Mode, SwitchedAffineSystem};
use crate::Result;

/// Default element-wise step bound.
pub const DEFAULT_STEP_BOUND: f64 = 1e-1;
/// Default relative-improvement stopping threshold.
pub const DEFAULT_PRECISION: f64 = 1e-3;
/// Default iteration cap.
pub const DEFAULT_MAX_ITERATIONS: usize = 200;

/// Current iterate of the center optimization.
#[derive(Debug, Clone)]
pub struct PathFollowState {
    /// Completed iterations (0 = warm start only).
    pub iteration: usize,
    /// Feasible solution of the coupled program at the current centers.
    pub vars: DwellVariables,
    /// Objective value `Σ Tr M_ij` after every exact re-solve, including the
    /// warm start.
    pub objective_history: Vec<f64>,
    /// Centers after every exact re-solve, including the warm start.
    pub center_history: Vec<Vec<DVector<f64>>>,
    /// Element-wise bound on the `(P_i, c_i)` step.
    pub step_bound: f64,
    /// Relative-improvement stopping threshold.
    pub precision: f64,
}

/// Outcome of the full center optimization.
#[derive(Debug, Clone)]
pub struct PathFollowResult {
    /// Certificate at the optimized centers (safety radius included).
    pub certificate: DwellCertificate,
    /// Objective after every exact re-solve, warm start first.
    pub objective_history: Vec<f64>,
    /// Centers after every exact re-solve, warm start first.
    pub center_history: Vec<Vec<DVector<f64>>>,
    /// Iterations actually performed.
    pub iterations: usize,
}

/// Evaluate the block-valued constraint functions
///
/// ```text
/// h_ij = [−Q_ij + D   T(d_ij)]
///        [T(d_ij)ᵀ    M_ij   ]
/// ```
///
/// at the given solution tuple; all blocks are positive semidefinite exactly
/// when the tuple is feasible.
pub fn h_blocks(
    system: &SwitchedAffineSystem,
    vars: &DwellVariables,
) -> Result<Vec<Vec<DMatrix<f64>>>> {
    let m = system.modes.len();
    let aug_exps: Vec<DMatrix<f64>> = system
        .modes
        .iter()
        .map(|mode| numerics::augmented_exponential(mode, vars.tau))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let p_i = augmented_form(&vars.p[i], &vars.centers[i]);
        let mut row = Vec::with_capacity(m);
        for j in 0..m {
            let q = if i == j {
                let aug = numerics::augmented_matrix(&system.modes[i]);
                aug.transpose() * &p_i + &p_i * &aug
            } else {
                let p_j = augmented_form(&vars.p[j], &vars.centers[j]);
                aug_exps[i].transpose() * &p_i * &aug_exps[i] - p_j
            };
            row.push(assemble_block(&q, &vars.d[i][j], &vars.m[i][j], 1.0));
        }
        out.push(row);
    }
    Ok(out)
}

/// Directional derivative of every `h_ij` with respect to the center `c_k`
/// in direction `w` (the dependence is through the lifted forms `𝒫_i`).
pub fn dh_dc(
    system: &SwitchedAffineSystem,
    vars: &DwellVariables,
    k: usize,
    w: &DVector<f64>,
) -> Result<Vec<Vec<DMatrix<f64>>>> {
    let n = system.dim;
    let m = system.modes.len();
    let dim = 2 * n + 1;
    let aug_exps: Vec<DMatrix<f64>> = system
        .modes
        .iter()
        .map(|mode| numerics::augmented_exponential(mode, vars.tau))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let mut row = Vec::with_capacity(m);
        for j in 0..m {
            let mut dq = DMatrix::zeros(n + 1, n + 1);
            if i == j {
                if k == i {
                    let dp = lift_center_derivative(&vars.p[i], &vars.centers[i], w);
                    let aug = numerics::augmented_matrix(&system.modes[i]);
                    dq = aug.transpose() * &dp + &dp * &aug;
                }
            } else {
                if k == i {
                    let dp = lift_center_derivative(&vars.p[i], &vars.centers[i], w);
                    dq += aug_exps[i].transpose() * &dp * &aug_exps[i];
                }
                if k == j {
                    dq -= lift_center_derivative(&vars.p[j], &vars.centers[j], w);
                }
            }
            let mut full = DMatrix::zeros(dim, dim);
            full.view_mut((0, 0), (n + 1, n + 1)).copy_from(&(-dq));
            row.push(full);
        }
        out.push(row);
    }
    Ok(out)
}

/// Derivative of the lifted form `𝒫(P, c)` with respect to `c` in
/// direction `w`.
fn lift_center_derivative(p: &DMatrix<f64>, c: &DVector<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let n = p.nrows();
    let pw = p * w;
    let mut out = DMatrix::zeros(n + 1, n + 1);
    for r in 0..n {
        out[(r, n)] = -pw[r];
        out[(n, r)] = -pw[r];
    }
    out[(n, n)] = 2.0 * c.dot(&pw);
    out
}

/// Assemble `[−Q + level·D, T; Tᵀ, M]` with the T-row carrying the negated
/// ellipsoid center (the convention under which the Schur complement of the
/// block recovers the quadratic inequality at center `d`).
fn assemble_block(
    q: &DMatrix<f64>,
    d_center: &DVector<f64>,
    m_mat: &DMatrix<f64>,
    level: f64,
) -> DMatrix<f64> {
    let n = m_mat.nrows();
    let dim = 2 * n + 1;
    let mut h = DMatrix::zeros(dim, dim);
    h.view_mut((0, 0), (n + 1, n + 1)).copy_from(&(-q));
    h[(n, n)] += level;
    for r in 0..n {
        h[(r, n + 1 + r)] = 1.0;
        h[(n + 1 + r, r)] = 1.0;
        h[(n, n + 1 + r)] = -d_center[r];
        h[(n + 1 + r, n)] = -d_center[r];
    }
    h.view_mut((n + 1, n + 1), (n, n)).copy_from(m_mat);
    h
}

/// Solve the linearized subproblem around the current solution: minimize
/// `Σ Tr M̂_ij` over increments `(ΔP_i, ĉ_i)` bounded element-wise by the
/// step bound and free `(M̂_ij, d̂_ij)`, with every block constraint expanded
/// to first order.  Returns the center increments (the new centers are
/// `c_i − ĉ_i`) and the linearized objective value.  An infeasible
/// subproblem is retried with the bound halved, up to five times.
pub fn linearized_step(
    system: &SwitchedAffineSystem,
    vars: &DwellVariables,
    step_bound: f64,
) -> Result<(Vec<DVector<f64>>, f64)> {
    let mut delta = step_bound;
    let mut last_err = None;
    for _ in 0..=5 {
        match linearized_step_at(system, vars, delta) {
            Ok(out) => return Ok(out),
            Err(e) => last_err = Some(e),
        }
        delta /= 2.0;
    }
    Err(Error::Stall(format!(
        "linearized subproblem stayed infeasible down to step bound {delta:.3e}: {}",
        last_err.map(|e| e.to_string()).unwrap_or_default()
    )))
}

fn linearized_step_at(
    system: &SwitchedAffineSystem,
    vars: &DwellVariables,
    step_bound: f64,
) -> Result<(Vec<DVector<f64>>, f64)> {
    let n = system.dim;
    let m = system.modes.len();
    let tau = vars.tau;

    // the solve runs in rescaled coordinates x̂ = x/L with the ellipsoid
    // level renormalized to ρ, exactly as in the coupled program, so that
    // all block entries have comparable magnitudes
    let scale = length_scale(system, &vars.centers);
    let rho = balance_level(vars);
    let scaled_modes: Vec<Mode> = system
        .modes
        .iter()
        .map(|mode| Mode {
            a: mode.a.clone(),
            b: &mode.b / scale,
        })
        .collect();
    let scaled_system = SwitchedAffineSystem {
        dim: n,
        modes: scaled_modes,
    };
    let p_s: Vec<DMatrix<f64>> = vars.p.iter().map(|p| p * (scale * scale * rho)).collect();
    let c_s: Vec<DVector<f64>> = vars.centers.iter().map(|c| c / scale).collect();
    // element-wise step bounds transported into the scaled variables
    let p_box = step_bound * scale * scale * rho;
    let c_box = step_bound / scale;

    let aug_exps: Vec<DMatrix<f64>> = scaled_system
        .modes
        .iter()
        .map(|mode| numerics::augmented_exponential(mode, tau))
        .collect::<Result<_>>()?;

    let mut prog = ConeProgram::new();
    let dp_vars: Vec<_> = (0..m).map(|_| prog.sym_matrix(n)).collect();
    let u_vars: Vec<_> = (0..m).map(|_| prog.vector(n)).collect();
    let mut mh_vars = Vec::with_capacity(m);
    let mut dh_vars = Vec::with_capacity(m);
    for _ in 0..m {
        mh_vars.push((0..m).map(|_| prog.sym_matrix(n)).collect::<Vec<_>>());
        dh_vars.push((0..m).map(|_| prog.vector(n)).collect::<Vec<_>>());
    }

    // box constraints on the (P, c) increments
    for i in 0..m {
        for k in 0..dp_vars[i].num_slots() {
            let slot = dp_vars[i].nth_slot(k);
            if step_bound == 0.0 {
                prog.add_equality(vec![(slot, 1.0)], 0.0);
            } else {
                prog.add_inequality(vec![(slot, 1.0)], -p_box);
                prog.add_inequality(vec![(slot, -1.0)], -p_box);
            }
        }
        for k in 0..n {
            let slot = u_vars[i].slot(k);
            if step_bound == 0.0 {
                prog.add_equality(vec![(slot, 1.0)], 0.0);
            } else {
                prog.add_inequality(vec![(slot, 1.0)], -c_box);
                prog.add_inequality(vec![(slot, -1.0)], -c_box);
            }
        }
        // the stepped norm matrix stays positive definite
        let mut pd = LmiBlock::new(n);
        pd.add_constant(&(&p_s[i] - DMatrix::<f64>::identity(n, n) * 1e-9));
        pd.add_matvar(&dp_vars[i], |e| e.clone());
        prog.add_lmi(pd);
    }

    for i in 0..m {
        for j in 0..m {
            let dim = 2 * n + 1;
            let mut block = LmiBlock::new(dim);

            // constant part: current −Q_ij + ρD and the identity rows of T
            let p_i = augmented_form(&p_s[i], &c_s[i]);
            let q0 = if i == j {
                let aug = numerics::augmented_matrix(&scaled_system.modes[i]);
                aug.transpose() * &p_i + &p_i * &aug
            } else {
                let p_j = augmented_form(&p_s[j], &c_s[j]);
                aug_exps[i].transpose() * &p_i * &aug_exps[i] - p_j
            };
            let mut c0 = DMatrix::zeros(dim, dim);
            c0.view_mut((0, 0), (n + 1, n + 1)).copy_from(&(-&q0));
            c0[(n, n)] += rho;
            for r in 0..n {
                c0[(r, n + 1 + r)] = 1.0;
                c0[(n + 1 + r, r)] = 1.0;
            }
            block.add_constant(&c0);

            let corner = move |q: &DMatrix<f64>| {
                let mut full = DMatrix::zeros(dim, dim);
                full.view_mut((0, 0), (n + 1, n + 1)).copy_from(&(-q));
                full
            };

            // first-order terms in the norm-matrix increments ΔP
            if i == j {
                let aug = numerics::augmented_matrix(&scaled_system.modes[i]);
                let ci = c_s[i].clone();
                block.add_matvar(&dp_vars[i], move |e| {
                    let pe = augmented_form(e, &ci);
                    corner(&(aug.transpose() * &pe + &pe * &aug))
                });
            } else {
                let fi = aug_exps[i].clone();
                let ci = c_s[i].clone();
                block.add_matvar(&dp_vars[i], move |e| {
                    corner(&(fi.transpose() * augmented_form(e, &ci) * &fi))
                });
                let cj = c_s[j].clone();
                block.add_matvar(&dp_vars[j], move |e| -corner(&augmented_form(e, &cj)));
            }

            // first-order terms in the center increments: the update is
            // c_i ← c_i − ĉ_i, so the perturbation enters with sign −ĉ_i
            let touched: Vec<usize> = if i == j { vec![i] } else { vec![i, j] };
            for k in touched {
                let p_k = p_s[k].clone();
                let c_k = c_s[k].clone();
                let deriv_owner = (i, j, k);
                let aug = numerics::augmented_matrix(&scaled_system.modes[i]);
                let fi = aug_exps[i].clone();
                block.add_vecvar(&u_vars[k], move |r| {
                    let mut w = DVector::zeros(n);
                    w[r] = 1.0;
                    let dp = lift_center_derivative(&p_k, &c_k, &w);
                    let (bi, bj, bk) = deriv_owner;
                    let dq = if bi == bj {
                        aug.transpose() * &dp + &dp * &aug
                    } else if bk == bi {
                        fi.transpose() * &dp * &fi
                    } else {
                        -&dp
                    };
                    // h + ∂h/∂c·(−ĉ) ⪰ 0 and ∂h/∂c = −∂Q/∂c on the corner
                    -corner(&dq)
                });
            }

            // exact terms in the coupling variables
            block.add_vecvar(&dh_vars[i][j], |k| {
                let mut full = DMatrix::zeros(dim, dim);
                full[(n, n + 1 + k)] = 1.0;
                full[(n + 1 + k, n)] = 1.0;
                full
            });
            block.add_matvar(&mh_vars[i][j], |e| {
                let mut full = DMatrix::zeros(dim, dim);
                full.view_mut((n + 1, n + 1), (n, n)).copy_from(e);
                full
            });
            prog.add_lmi(block);
            prog.minimize_trace(&mh_vars[i][j]);
        }
    }

    let report = prog.solve()?;
    if report.status != SolveStatus::Optimal {
        return Err(Error::Infeasible(format!(
            "linearized subproblem not solved at step bound {step_bound:.3e} (status {:?})",
            report.status
        )));
    }
    let increments: Vec<DVector<f64>> = u_vars
        .iter()
        .map(|v| report.vector(v) * scale)
        .collect();
    let f_hat = report.objective * scale * scale * rho;
    Ok((increments, f_hat))
}

/// Run the full center optimization: warm start at the equilibria, then
/// alternate linearized steps and exact re-solves until the objective change
/// falls below `precision` relatively, the centers stall, or the iteration
/// cap is hit.
pub fn optimize_centers(
    system: &SwitchedAffineSystem,
    tau: f64,
    step_bound: f64,
    precision: f64,
    max_iterations: usize,
) -> Result<PathFollowResult> {
    if step_bound <= 0.0 {
        return Err(Error::InvalidParameter(
            "step bound must be positive".into(),
        ));
    }
    if precision <= 0.0 {
        return Err(Error::InvalidParameter("precision must be positive".into()));
    }
    let centers = system.equilibria()?;
    let vars = dwell_lmi(system, tau, &centers)?;
    let mut state = PathFollowState {
        iteration: 0,
        objective_history: vec![vars.objective],
        center_history: vec![centers],
        vars,
        step_bound,
        precision,
    };

    for _ in 0..max_iterations {
        if path_follow_step(system, &mut state)? {
            let certificate =
                dwell_certificate(system, tau, Some(state.center_history.last().unwrap()))?;
            return Ok(PathFollowResult {
                certificate,
                objective_history: state.objective_history,
                center_history: state.center_history,
                iterations: state.iteration,
            });
        }
    }
    Err(Error::IterationCap(max_iterations))
}

/// One iteration: linearized step, center update, exact re-solve.  Returns
/// `true` once the stopping test is met.  If the exact re-solve worsens the
/// objective, the step bound is halved and the iteration retried; persistent
/// worsening terminates the optimization at the current point.
pub fn path_follow_step(
    system: &SwitchedAffineSystem,
    state: &mut PathFollowState,
) -> Result<bool> {
    let f_current = state.vars.objective;
    let mut delta = state.step_bound;
    for _ in 0..=5 {
        let (increments, f_hat) = linearized_step(system, &state.vars, delta)?;
        let new_centers: Vec<DVector<f64>> = state
            .vars
            .centers
            .iter()
            .zip(&increments)
            .map(|(c, u)| c - u)
            .collect();
        let new_vars = dwell_lmi(system, state.vars.tau, &new_centers)?;
        if new_vars.objective <= f_current * (1.0 + 1e-6) {
            let f_new = new_vars.objective;
            state.iteration += 1;
            state.objective_history.push(f_new);
            state.center_history.push(new_centers);
            state.vars = new_vars;
            return Ok((f_new - f_hat).abs() <= state.precision * f_new);
        }
        delta /= 2.0;
    }
    // no descending step exists within the shrunken box: locally optimal
    Ok(true)
}
