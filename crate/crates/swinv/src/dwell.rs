//! Dwell-time machinery: quadratic multiple-Lyapunov certificates, minimum
//! dwell-time estimation, the coupled LMIs producing translated norms
//! ṽ_i(x) = √((x−c_i)ᵀP_i(x−c_i)), the safety radius R_X with sets
//! X_i = {ṽ_i ≤ R_X}, membership tests for the bounding region V, and the
//! τ-sweep diagnostics.
//!
//! Block structures, with ξ = [xᵀ 1]ᵀ the augmented state:
//!
//! ```text
//! 𝒫_i = [P_i      −P_i c_i   ]     𝒜_i = [A_i  b_i]     ℰ_ij = [W_ij        −W_ij d_ij     ]
//!       [−c_iᵀP_i  c_iᵀP_ic_i]           [0    0  ]            [−d_ijᵀW_ij   d_ijᵀW_ijd_ij−1]
//! ```
//!
//! so that ξᵀ𝒫_iξ = ṽ_i(x)² and 𝔼_ij = {x | ξᵀℰ_ijξ ≤ 0} is the ellipsoid
//! (x−d_ij)ᵀW_ij(x−d_ij) ≤ 1.

use crate::numerics;
use crate::sdp::{ConeProgram, LmiBlock, MatVar, SolveStatus, VecVar};
use crate::system::SwitchedAffineSystem;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// 𝒫(P, c): augmented quadratic form with ξᵀ𝒫ξ = (x−c)ᵀP(x−c).
pub fn augmented_form(p: &DMatrix<f64>, c: &DVector<f64>) -> DMatrix<f64> {
    let n = p.nrows();
    let mut out = DMatrix::zeros(n + 1, n + 1);
    out.view_mut((0, 0), (n, n)).copy_from(p);
    let pc = p * c;
    for r in 0..n {
        out[(r, n)] = -pc[r];
        out[(n, r)] = -pc[r];
    }
    out[(n, n)] = c.dot(&pc);
    out
}

/// ℰ(W, d): augmented form whose non-positive sublevel set is the ellipsoid
/// (x−d)ᵀW(x−d) ≤ 1.
pub fn ellipsoid_form(w: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
    let n = w.nrows();
    let mut out = DMatrix::zeros(n + 1, n + 1);
    out.view_mut((0, 0), (n, n)).copy_from(w);
    let wd = w * d;
    for r in 0..n {
        out[(r, n)] = -wd[r];
        out[(n, r)] = -wd[r];
    }
    out[(n, n)] = d.dot(&wd) - 1.0;
    out
}

/// Mode-wise Lyapunov feasibility of the classical dwell-time conditions:
/// ∃ P̃_i ≻ 0 with A_iᵀP̃_i + P̃_iA_i ≺ 0 and
/// e^{A_iᵀτ} P̃_j e^{A_iτ} ⪯ P̃_i for all i ≠ j.
pub fn dwell_stability_feasible(system: &SwitchedAffineSystem, tau: f64) -> Result<bool> {
    if tau < 0.0 {
        return Err(Error::InvalidParameter("dwell time must be non-negative".into()));
    }
    let n = system.dim;
    let m = system.modes.len();
    // a non-Hurwitz mode has no quadratic Lyapunov function of its own, so
    // the per-mode flow condition is infeasible at every dwell time
    if system
        .modes
        .iter()
        .any(|mode| crate::system::spectral_abscissa(&mode.a) >= 0.0)
    {
        return Ok(false);
    }
    let mut prog = ConeProgram::new();
    let pvars: Vec<MatVar> = (0..m).map(|_| prog.sym_matrix(n)).collect();
    let exps: Vec<DMatrix<f64>> = system
        .modes
        .iter()
        .map(|mode| numerics::matrix_exponential(&mode.a, tau))
        .collect::<Result<_>>()?;

    for (i, mode) in system.modes.iter().enumerate() {
        // normalization P̃_i ⪰ I pins the scale-invariant problem
        let mut lower = LmiBlock::new(n);
        lower.add_constant(&(-DMatrix::<f64>::identity(n, n)));
        lower.add_matvar(&pvars[i], |e| e.clone());
        prog.add_lmi(lower);

        let a = &mode.a;
        let mut flow = LmiBlock::new(n);
        flow.add_constant(&(-DMatrix::<f64>::identity(n, n) * 1e-7));
        flow.add_matvar(&pvars[i], |e| -(a.transpose() * e + e * a));
        prog.add_lmi(flow);

        for j in 0..m {
            if i == j {
                continue;
            }
            // P̃_i − e^{A_iᵀτ} P̃_j e^{A_iτ} ⪰ 0
            let ei = &exps[i];
            let mut jump = LmiBlock::new(n);
            jump.add_matvar(&pvars[i], |e| e.clone());
            jump.add_matvar(&pvars[j], |e| -(ei.transpose() * e * ei));
            prog.add_lmi(jump);
        }
    }
    let report = prog.solve()?;
    match report.status {
        SolveStatus::Optimal => Ok(true),
        SolveStatus::Infeasible => Ok(false),
        SolveStatus::NumericFailure => Err(Error::NumericFailure(format!(
            "dwell feasibility test at tau={tau} is indeterminate"
        ))),
    }
}

/// Quadratic-certificate estimate of the minimum dwell-time (an upper bound
/// on the true one), by bisection over the feasibility test.
pub fn min_dwell_time(system: &SwitchedAffineSystem, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("bisection tolerance must be positive".into()));
    }
    for (i, mode) in system.modes.iter().enumerate() {
        if crate::system::spectral_abscissa(&mode.a) >= 0.0 {
            return Err(Error::NonHurwitz(i + 1));
        }
    }
    if system.modes.len() == 1 {
        return Ok(0.0);
    }
    if dwell_stability_feasible(system, 0.0)? {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    let mut doublings = 0;
    while !dwell_stability_feasible(system, hi)? {
        hi *= 2.0;
        doublings += 1;
        if doublings > 30 {
            return Err(Error::BracketExhausted(format!(
                "no feasible dwell time found up to tau={hi}"
            )));
        }
    }
    let mut lo = if hi > 1.0 { hi / 2.0 } else { 0.0 };
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if dwell_stability_feasible(system, mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Solution of the coupled dwell LMIs together with the derived safety
/// radius.
#[derive(Debug, Clone)]
pub struct DwellCertificate {
    pub tau: f64,
    pub p: Vec<DMatrix<f64>>,
    pub centers: Vec<DVector<f64>>,
    /// M_ij indexed [i][j]; W_ij = M_ij⁻¹ shapes the ellipsoid 𝔼_ij.
    pub m: Vec<Vec<DMatrix<f64>>>,
    pub d: Vec<Vec<DVector<f64>>>,
    /// Σ_ij Tr M_ij, the minimized proxy objective.
    pub objective: f64,
    /// Safety radius: X_i = {x | (x−c_i)ᵀP_i(x−c_i) ≤ R_X²}.
    pub r_x: f64,
    /// Certified contraction rate of each translated norm along its own
    /// mode's linear flow (diagnostic, min over modes).
    pub kappa_tilde: f64,
}

impl DwellCertificate {
    pub fn num_modes(&self) -> usize {
        self.p.len()
    }

    /// ṽ_i(x) = √((x−c_i)ᵀP_i(x−c_i)).
    pub fn translated_norm(&self, i: usize, x: &DVector<f64>) -> f64 {
        let d = x - &self.centers[i];
        d.dot(&(&self.p[i] * &d)).max(0.0).sqrt()
    }

    pub fn in_safety_set(&self, i: usize, x: &DVector<f64>, tol: f64) -> bool {
        self.translated_norm(i, x) <= self.r_x + tol
    }

    pub fn in_safety_union(&self, x: &DVector<f64>, tol: f64) -> bool {
        (0..self.num_modes()).any(|i| self.in_safety_set(i, x, tol))
    }
}

/// Raw variables of the coupled LMI problem, before the safety radius has
/// been computed.
#[derive(Debug, Clone)]
pub struct DwellVariables {
    pub tau: f64,
    pub p: Vec<DMatrix<f64>>,
    pub centers: Vec<DVector<f64>>,
    pub m: Vec<Vec<DMatrix<f64>>>,
    pub d: Vec<Vec<DVector<f64>>>,
    pub objective: f64,
}

/// Solve the coupled LMI problem at fixed centers:
///
/// ```text
/// min Σ_ij Tr M_ij   s.t.   [−Q_ij + D   T(d_ij)] ⪰ 0   ∀(i,j),
///                           [T(d_ij)ᵀ    M_ij   ]
/// ```
///
/// with Q_ii = 𝒜_iᵀ𝒫_i + 𝒫_i𝒜_i, Q_ij = e^{𝒜_iᵀτ}𝒫_i e^{𝒜_iτ} − 𝒫_j (i≠j),
/// T(d_ij) = [I; d_ijᵀ] and D = diag(0,…,0,1).
pub fn dwell_lmi(
    system: &SwitchedAffineSystem,
    tau: f64,
    centers: &[DVector<f64>],
) -> Result<DwellVariables> {
    // The coupled blocks mix the quadratic forms 𝒫_i (small when the
    // equilibria are far from the origin) with the coupling matrices M_ij
    // (correspondingly large).  Solve in rescaled coordinates x̂ = x/L so
    // that both live at comparable magnitudes; the problem is equivalent
    // under the congruence ξ ↦ diag(L·I, 1)ξ, which leaves every quadratic
    // value and the feasible set invariant.
    let scale = length_scale(system, centers);
    let scaled_system = SwitchedAffineSystem {
        dim: system.dim,
        modes: system
            .modes
            .iter()
            .map(|mode| crate::system::Mode {
                a: mode.a.clone(),
                b: &mode.b / scale,
            })
            .collect(),
    };
    let scaled_centers: Vec<DVector<f64>> = centers.iter().map(|c| c / scale).collect();
    let mut joint = dwell_lmi_direct(&scaled_system, tau, &scaled_centers, None, 1.0)?;
    // re-solve with the ellipsoid level renormalized so that the norm
    // matrices and coupling matrices have comparable magnitudes inside each
    // block; this sharpens the small corner of the solution considerably
    let rho = balance_level(&joint);
    if !(0.1..=10.0).contains(&rho) {
        if let Ok(balanced) = dwell_lmi_direct(&scaled_system, tau, &scaled_centers, None, rho) {
            joint = balanced;
        }
    }
    // polish: with the norms fixed the remaining program in (M_ij, d_ij) is
    // much better conditioned, and the joint solve often leaves the coupling
    // ellipsoids away from their restricted optimum
    let hat = match dwell_lmi_direct(&scaled_system, tau, &scaled_centers, Some(&joint.p), rho) {
        Ok(polished) if polished.objective <= joint.objective => polished,
        _ => joint,
    };
    Ok(DwellVariables {
        tau,
        p: hat.p.iter().map(|p| p / (scale * scale)).collect(),
        centers: centers.to_vec(),
        m: hat
            .m
            .iter()
            .map(|row| row.iter().map(|mm| mm * (scale * scale)).collect())
            .collect(),
        d: hat
            .d
            .iter()
            .map(|row| row.iter().map(|dd| dd * scale).collect())
            .collect(),
        objective: hat.objective * scale * scale,
    })
}

/// Ellipsoid-level renormalization √(‖M‖/‖P‖) that balances the two scales
/// inside each coupled block.
pub(crate) fn balance_level(vars: &DwellVariables) -> f64 {
    let p_scale = vars.p.iter().map(|p| p.norm()).fold(0.0, f64::max);
    let m_scale = vars
        .m
        .iter()
        .flat_map(|row| row.iter().map(|mm| mm.norm()))
        .fold(0.0, f64::max);
    if p_scale > 0.0 && m_scale.is_finite() && m_scale > 0.0 {
        (m_scale / p_scale).sqrt()
    } else {
        1.0
    }
}

/// Characteristic length of the problem data, used to balance the coupled
/// LMI blocks.
pub(crate) fn length_scale(system: &SwitchedAffineSystem, centers: &[DVector<f64>]) -> f64 {
    let mut scale: f64 = 1.0;
    for c in centers {
        scale = scale.max(c.norm());
    }
    if let Ok(eq) = system.equilibria() {
        for e in &eq {
            scale = scale.max(e.norm());
        }
    }
    scale
}

/// Solve the coupled program with the ellipsoid level normalized to ρ
/// instead of 1: the variables become P′ = ρP, M′ = M/ρ (exactly equivalent
/// problem), and a ρ near √(‖M‖/‖P‖) balances each block internally.
/// Returned variables are always at the ρ = 1 normalization.
fn dwell_lmi_direct(
    system: &SwitchedAffineSystem,
    tau: f64,
    centers: &[DVector<f64>],
    fixed_p: Option<&[DMatrix<f64>]>,
    rho: f64,
) -> Result<DwellVariables> {
    let n = system.dim;
    let m = system.modes.len();
    if centers.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "{} centers supplied for {} modes",
            centers.len(),
            m
        )));
    }
    let mut prog = ConeProgram::new();
    let fixed_p: Option<Vec<DMatrix<f64>>> =
        fixed_p.map(|ps| ps.iter().map(|p| p * rho).collect());
    let fixed_p = fixed_p.as_deref();
    let pvars: Vec<MatVar> = match fixed_p {
        None => (0..m).map(|_| prog.sym_matrix(n)).collect(),
        Some(_) => Vec::new(),
    };
    let mut mvars: Vec<Vec<MatVar>> = Vec::with_capacity(m);
    let mut dvars: Vec<Vec<VecVar>> = Vec::with_capacity(m);
    for _ in 0..m {
        mvars.push((0..m).map(|_| prog.sym_matrix(n)).collect());
        dvars.push((0..m).map(|_| prog.vector(n)).collect());
    }
    let aug_exps: Vec<DMatrix<f64>> = system
        .modes
        .iter()
        .map(|mode| numerics::augmented_exponential(mode, tau))
        .collect::<Result<_>>()?;

    // 𝒫_i is linear in P_i at fixed c_i
    let lift = |e: &DMatrix<f64>, c: &DVector<f64>| augmented_form(e, c);

    for i in 0..m {
        if fixed_p.is_none() {
            // P_i ⪰ small·I keeps the translated norms genuine norms
            let mut pd = LmiBlock::new(n);
            pd.add_constant(&(-DMatrix::<f64>::identity(n, n) * 1e-9));
            pd.add_matvar(&pvars[i], |e| e.clone());
            prog.add_lmi(pd);
        }

        for j in 0..m {
            let dim = 2 * n + 1;
            let mut block = LmiBlock::new(dim);
            let mut c0 = DMatrix::zeros(dim, dim);
            c0[(n, n)] = rho; // ρ·D
            for r in 0..n {
                // identity part of T(d_ij)
                c0[(r, n + 1 + r)] = 1.0;
                c0[(n + 1 + r, r)] = 1.0;
            }

            let ci = centers[i].clone();
            let cj = centers[j].clone();
            // −Q_ij embedded in the top-left (n+1)×(n+1) corner
            let corner = move |q: &DMatrix<f64>| {
                let mut mfull = DMatrix::zeros(dim, dim);
                mfull.view_mut((0, 0), (n + 1, n + 1)).copy_from(&(-q));
                mfull
            };
            if i == j {
                let aug = numerics::augmented_matrix(&system.modes[i]);
                let qof = move |pe: &DMatrix<f64>| aug.transpose() * pe + pe * &aug;
                match fixed_p {
                    None => block.add_matvar(&pvars[i], move |e| corner(&qof(&lift(e, &ci)))),
                    Some(p) => c0 += corner(&qof(&lift(&p[i], &ci))),
                }
            } else {
                let fi = aug_exps[i].clone();
                let fj = fi.clone();
                match fixed_p {
                    None => {
                        let ci2 = ci.clone();
                        block.add_matvar(&pvars[i], move |e| {
                            corner(&(fi.transpose() * lift(e, &ci2) * &fi))
                        });
                        block.add_matvar(&pvars[j], move |e| -corner(&lift(e, &cj)));
                    }
                    Some(p) => {
                        let q = fj.transpose() * lift(&p[i], &ci) * &fj - lift(&p[j], &cj);
                        c0 += corner(&q);
                    }
                }
            }
            block.add_constant(&c0);
            block.add_vecvar(&dvars[i][j], |k| {
                let mut mfull = DMatrix::zeros(dim, dim);
                mfull[(n, n + 1 + k)] = 1.0;
                mfull[(n + 1 + k, n)] = 1.0;
                mfull
            });
            block.add_matvar(&mvars[i][j], |e| {
                let mut mfull = DMatrix::zeros(dim, dim);
                mfull.view_mut((n + 1, n + 1), (n, n)).copy_from(e);
                mfull
            });
            prog.add_lmi(block);
            prog.minimize_trace(&mvars[i][j]);
        }
    }

    let report = prog.solve()?;
    match report.status {
        SolveStatus::Optimal => {}
        // infeasibility cannot occur for tau above the feasibility threshold
        // with free centers; treat both bad outcomes as numeric failure
        _ => {
            return Err(Error::NumericFailure(format!(
                "coupled dwell LMIs did not solve at tau={tau} (status {:?})",
                report.status
            )))
        }
    }
    let p: Vec<DMatrix<f64>> = match fixed_p {
        None => pvars.iter().map(|v| report.matrix(v) / rho).collect(),
        Some(p) => p.iter().map(|pi| pi / rho).collect(),
    };
    let msol: Vec<Vec<DMatrix<f64>>> = mvars
        .iter()
        .map(|row| row.iter().map(|v| report.matrix(v) * rho).collect())
        .collect();
    // the block variable enters as T = [I; dᵀ], whose Schur complement
    // subtracts the quadratic centred at −d; store the ellipsoid centre
    let dsol: Vec<Vec<DVector<f64>>> = dvars
        .iter()
        .map(|row| row.iter().map(|v| -report.vector(v)).collect())
        .collect();
    Ok(DwellVariables {
        tau,
        p,
        centers: centers.to_vec(),
        m: msol,
        d: dsol,
        objective: report.objective * rho,
    })
}

/// Safety radius via min γ s.t. β_ij ℰ_ij − 𝒫_j + γD ⪰ 0 with
/// W_ij = M_ij⁻¹; R_X = √γ.
pub fn safety_radius(vars: &DwellVariables) -> Result<f64> {
    // Same coordinate rescaling as in the coupled solve: the safety level γ
    // is invariant under x̂ = x/L, and balancing 𝒫 against ℰ keeps the
    // minimization well conditioned.
    let mut scale: f64 = 1.0;
    for c in &vars.centers {
        scale = scale.max(c.norm());
    }
    for row in &vars.d {
        for dd in row {
            scale = scale.max(dd.norm());
        }
    }
    let hat = DwellVariables {
        tau: vars.tau,
        p: vars.p.iter().map(|p| p * (scale * scale)).collect(),
        centers: vars.centers.iter().map(|c| c / scale).collect(),
        m: vars
            .m
            .iter()
            .map(|row| row.iter().map(|mm| mm / (scale * scale)).collect())
            .collect(),
        d: vars
            .d
            .iter()
            .map(|row| row.iter().map(|dd| dd / scale).collect())
            .collect(),
        objective: vars.objective / (scale * scale),
    };
    safety_radius_direct(&hat)
}

fn safety_radius_direct(vars: &DwellVariables) -> Result<f64> {
    // level normalization: replacing P by ρP rescales the optimal γ to ργ
    // (β absorbs the factor), so solve at unit norm-matrix magnitude and
    // unscale afterwards
    let p_scale = vars.p.iter().map(|p| p.norm()).fold(0.0, f64::max);
    if !(p_scale.is_finite() && p_scale > 0.0) {
        return Err(Error::CertificateInconsistency(
            "norm matrices are zero or not finite".into(),
        ));
    }
    let n = vars.p[0].nrows();
    let m = vars.p.len();
    let mut prog = ConeProgram::new();
    let gamma = prog.scalar();
    prog.add_inequality(vec![(gamma.0, 1.0)], 0.0);
    for i in 0..m {
        for j in 0..m {
            let beta = prog.scalar();
            prog.add_inequality(vec![(beta.0, 1.0)], 0.0);
            let w = crate::numerics::spd_inverse(&vars.m[i][j]).map_err(|_| {
                Error::CertificateInconsistency(
                    "coupling matrix is numerically singular; cannot form its ellipsoid".into(),
                )
            })?;
            let e_form = ellipsoid_form(&w, &vars.d[i][j]);
            let e_norm = e_form.norm().max(f64::MIN_POSITIVE);
            let p_form = augmented_form(&vars.p[j], &vars.centers[j]) / p_scale;
            let mut block = LmiBlock::new(n + 1);
            block.add_constant(&(-&p_form));
            block.add_term(beta.0, &(e_form / e_norm));
            let mut dmat = DMatrix::zeros(n + 1, n + 1);
            dmat[(n, n)] = 1.0;
            block.add_term(gamma.0, &dmat);
            prog.add_lmi(block);
        }
    }
    prog.minimize(gamma.0, 1.0);
    let report = prog.solve()?;
    if report.status != SolveStatus::Optimal {
        return Err(Error::CertificateInconsistency(format!(
            "safety-radius program did not solve (status {:?})",
            report.status
        )));
    }
    Ok((report.scalar(gamma) * p_scale).max(0.0).sqrt())
}

/// Contraction rate of v_i(x)=√(xᵀP_ix) along the linear part of mode i:
/// largest κ̃_i with A_iᵀP_i + P_iA_i ⪯ −2κ̃_iP_i, minimized over modes.
fn certified_contraction(system: &SwitchedAffineSystem, p: &[DMatrix<f64>]) -> f64 {
    let mut kappa = f64::INFINITY;
    for (mode, pi) in system.modes.iter().zip(p.iter()) {
        let inv_sqrt = match crate::numerics::spd_inverse(pi) {
            Ok(inv) => crate::numerics::spd_sqrt(&inv),
            Err(_) => return 0.0,
        };
        let lyap = mode.a.transpose() * pi + pi * &mode.a;
        let reduced = &inv_sqrt * lyap * &inv_sqrt;
        let lam = crate::numerics::min_symmetric_eigenvalue(&(-reduced));
        kappa = kappa.min(lam / 2.0);
    }
    kappa.max(0.0)
}

/// Full pipeline at fixed centers (defaults to the per-mode equilibria):
/// coupled LMIs, safety radius, contraction diagnostic.
pub fn dwell_certificate(
    system: &SwitchedAffineSystem,
    tau: f64,
    centers: Option<&[DVector<f64>]>,
) -> Result<DwellCertificate> {
    let default_centers;
    let centers = match centers {
        Some(c) => c,
        None => {
            default_centers = system.equilibria()?;
            &default_centers
        }
    };
    let vars = dwell_lmi(system, tau, centers)?;
    let r_x = safety_radius(&vars)?;
    let kappa_tilde = certified_contraction(system, &vars.p);
    Ok(DwellCertificate {
        tau: vars.tau,
        p: vars.p,
        centers: vars.centers,
        m: vars.m,
        d: vars.d,
        objective: vars.objective,
        r_x,
        kappa_tilde,
    })
}

/// Re-derive the augmented inequalities from the solved block form by Schur
/// complement (W_ij = M_ij⁻¹) and check them by eigenvalue margins. Returns
/// the worst (most negative) normalized margin.
pub fn schur_reconstruction_margin(
    system: &SwitchedAffineSystem,
    vars: &DwellVariables,
) -> Result<f64> {
    let m = vars.p.len();
    let mut worst = f64::INFINITY;
    let aug_exps: Vec<DMatrix<f64>> = system
        .modes
        .iter()
        .map(|mode| numerics::augmented_exponential(mode, vars.tau))
        .collect::<Result<_>>()?;
    for i in 0..m {
        let p_i = augmented_form(&vars.p[i], &vars.centers[i]);
        for j in 0..m {
            let w = crate::numerics::spd_inverse(&vars.m[i][j])?;
            let e_form = ellipsoid_form(&w, &vars.d[i][j]);
            let lhs = if i == j {
                let aug = numerics::augmented_matrix(&system.modes[i]);
                aug.transpose() * &p_i + &p_i * aug
            } else {
                let f = &aug_exps[i];
                let p_j = augmented_form(&vars.p[j], &vars.centers[j]);
                f.transpose() * &p_i * f - p_j
            };
            // augmented flow/jump inequality: lhs ⪯ −ℰ_ij; the eigenvalue
            // margin is meaningful relative to the magnitude of the data
            // being subtracted (backward-error normalization)
            let scale = 1.0 + lhs.norm() + e_form.norm();
            let slack = -(lhs + e_form);
            worst = worst.min(crate::numerics::min_symmetric_eigenvalue(&slack) / scale);
        }
    }
    Ok(worst)
}

/// Analytic per-pair radii
///
/// ```text
/// R_ij = (e^{−κτ} ṽ_j(c_i) + κ⁻¹(1−e^{−κτ}) v_i(A_ic_i + b_i)) / (e^{−κ̃τ} − e^{−κτ})
/// ```
///
/// valid for rate-κ norms and any 0 < κ̃ < κ; R_X = max_ij R_ij.
pub fn r_ij_analytic(
    system: &SwitchedAffineSystem,
    p: &[DMatrix<f64>],
    centers: &[DVector<f64>],
    kappa: f64,
    kappa_tilde: f64,
    tau: f64,
) -> Result<(DMatrix<f64>, f64)> {
    if !(kappa_tilde > 0.0 && kappa_tilde < kappa) {
        return Err(Error::InvalidParameter(format!(
            "contraction split requires 0 < κ̃ < κ, got κ̃={kappa_tilde}, κ={kappa}"
        )));
    }
    let m = system.modes.len();
    let vnorm = |p: &DMatrix<f64>, x: &DVector<f64>| x.dot(&(p * x)).max(0.0).sqrt();
    let denom = (-kappa_tilde * tau).exp() - (-kappa * tau).exp();
    let mut out = DMatrix::zeros(m, m);
    for i in 0..m {
        let drift = &system.modes[i].a * &centers[i] + &system.modes[i].b;
        let vi_drift = vnorm(&p[i], &drift);
        for j in 0..m {
            let vj_ci = vnorm(&p[j], &(&centers[i] - &centers[j]));
            let num = (-kappa * tau).exp() * vj_ci
                + (1.0 - (-kappa * tau).exp()) / kappa * vi_drift;
            out[(i, j)] = num / denom;
        }
    }
    let r_x = out.max();
    Ok((out, r_x))
}

/// Witness that a point belongs to the bounding region: flowing backwards
/// for time `t` along mode `j` lands inside the safety set X_i.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MembershipWitness {
    pub i: usize,
    pub j: usize,
    pub t: f64,
}

/// Grid test of the bounding-region membership condition
///
/// ```text
/// (x − e^{A_jt}(c_i − x_ej) − x_ej)ᵀ e^{−A_jᵀt} P_i e^{−A_jt} (…) ≤ R_X²
/// ```
///
/// over t ∈ {0, τ/m, …, τ} and all mode pairs. A `None` result is
/// conclusive only up to the grid resolution: thin slivers of V between
/// grid points can be missed.
pub fn membership_v(
    system: &SwitchedAffineSystem,
    cert: &DwellCertificate,
    x: &DVector<f64>,
    m_grid: usize,
) -> Result<Option<MembershipWitness>> {
    if m_grid < 2 {
        return Err(Error::InvalidParameter("time grid needs at least 2 points".into()));
    }
    let equilibria = system.equilibria()?;
    let nm = system.modes.len();
    let r2 = cert.r_x * cert.r_x;
    for step in 0..=m_grid {
        let t = cert.tau * step as f64 / m_grid as f64;
        for j in 0..nm {
            let fwd = numerics::matrix_exponential(&system.modes[j].a, t)?;
            let bwd = numerics::matrix_exponential(&system.modes[j].a, -t)?;
            for i in 0..nm {
                let shift = &fwd * (&cert.centers[i] - &equilibria[j]) + &equilibria[j];
                let y = &bwd * (x - &shift);
                let q = y.dot(&(&cert.p[i] * &y));
                if q <= r2 + 1e-9 * (1.0 + r2) {
                    return Ok(Some(MembershipWitness { i, j, t }));
                }
            }
        }
    }
    Ok(None)
}

/// Polyline export of the safety-set ellipses and a rasterized trace of the
/// bounding region boundary (2-D systems only). Returns (label, points).
pub fn region_boundaries(
    system: &SwitchedAffineSystem,
    cert: &DwellCertificate,
    samples: usize,
    raster: &RasterSpec,
) -> Result<Vec<(String, Vec<(f64, f64)>)>> {
    if system.dim != 2 {
        return Err(Error::InvalidParameter(
            "boundary export is only defined for planar systems".into(),
        ));
    }
    let mut out = Vec::new();
    for (i, (p, c)) in cert.p.iter().zip(cert.centers.iter()).enumerate() {
        let shape = crate::numerics::spd_sqrt(&crate::numerics::spd_inverse(p)?);
        let mut line = Vec::with_capacity(samples + 1);
        for k in 0..=samples {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / samples as f64;
            let u = DVector::from_vec(vec![theta.cos(), theta.sin()]);
            let x = c + &shape * u * cert.r_x;
            line.push((x[0], x[1]));
        }
        out.push((format!("X_{}", i + 1), line));
    }
    let grid = rasterize_region(system, cert, raster)?;
    out.push(("V_boundary".to_string(), grid.boundary_points()));
    Ok(out)
}

/// Fixed evaluation grid for rasterized area estimates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RasterSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub cells: usize,
    /// membership time-grid resolution
    pub time_grid: usize,
}

impl RasterSpec {
    /// Grid covering all safety ellipses with 40% slack, suitable for a
    /// single certificate; cross-τ comparisons must reuse one spec.
    pub fn covering(cert: &DwellCertificate, cells: usize) -> Self {
        let mut x_min = f64::INFINITY;
        let mut x_max = f64::NEG_INFINITY;
        let mut y_min = f64::INFINITY;
        let mut y_max = f64::NEG_INFINITY;
        for (p, c) in cert.p.iter().zip(cert.centers.iter()) {
            // axis extents of the ellipse (x−c)ᵀP(x−c) = R²: R·√((P⁻¹)_kk)
            if let Ok(pinv) = crate::numerics::spd_inverse(p) {
                let rx = cert.r_x * pinv[(0, 0)].max(0.0).sqrt();
                let ry = cert.r_x * pinv[(1, 1)].max(0.0).sqrt();
                x_min = x_min.min(c[0] - 1.4 * rx);
                x_max = x_max.max(c[0] + 1.4 * rx);
                y_min = y_min.min(c[1] - 1.4 * ry);
                y_max = y_max.max(c[1] + 1.4 * ry);
            }
        }
        RasterSpec {
            x_min,
            x_max,
            y_min,
            y_max,
            cells,
            time_grid: 40,
        }
    }
}

/// Boolean raster of bounding-region membership.
pub struct RegionRaster {
    pub spec: RasterSpec,
    pub inside: Vec<bool>,
}

impl RegionRaster {
    pub fn cell_area(&self) -> f64 {
        let dx = (self.spec.x_max - self.spec.x_min) / self.spec.cells as f64;
        let dy = (self.spec.y_max - self.spec.y_min) / self.spec.cells as f64;
        dx * dy
    }

    pub fn area(&self) -> f64 {
        self.inside.iter().filter(|&&b| b).count() as f64 * self.cell_area()
    }

    fn at(&self, ix: usize, iy: usize) -> bool {
        self.inside[iy * self.spec.cells + ix]
    }

    /// Cell centers that are inside but have an outside 4-neighbor.
    pub fn boundary_points(&self) -> Vec<(f64, f64)> {
        let nc = self.spec.cells;
        let dx = (self.spec.x_max - self.spec.x_min) / nc as f64;
        let dy = (self.spec.y_max - self.spec.y_min) / nc as f64;
        let mut pts = Vec::new();
        for iy in 0..nc {
            for ix in 0..nc {
                if !self.at(ix, iy) {
                    continue;
                }
                let edge = ix == 0
                    || iy == 0
                    || ix == nc - 1
                    || iy == nc - 1
                    || !self.at(ix - 1, iy)
                    || !self.at(ix + 1, iy)
                    || !self.at(ix, iy - 1)
                    || !self.at(ix, iy + 1);
                if edge {
                    pts.push((
                        self.spec.x_min + (ix as f64 + 0.5) * dx,
                        self.spec.y_min + (iy as f64 + 0.5) * dy,
                    ));
                }
            }
        }
        pts
    }
}

/// Evaluate bounding-region membership on the raster grid (parallel over
/// rows).
pub fn rasterize_region(
    system: &SwitchedAffineSystem,
    cert: &DwellCertificate,
    spec: &RasterSpec,
) -> Result<RegionRaster> {
    use rayon::prelude::*;
    let nc = spec.cells;
    let dx = (spec.x_max - spec.x_min) / nc as f64;
    let dy = (spec.y_max - spec.y_min) / nc as f64;
    let rows: Vec<Result<Vec<bool>>> = (0..nc)
        .into_par_iter()
        .map(|iy| {
            let y = spec.y_min + (iy as f64 + 0.5) * dy;
            let mut row = Vec::with_capacity(nc);
            for ix in 0..nc {
                let x = spec.x_min + (ix as f64 + 0.5) * dx;
                let pt = DVector::from_vec(vec![x, y]);
                row.push(membership_v(system, cert, &pt, spec.time_grid)?.is_some());
            }
            Ok(row)
        })
        .collect();
    let mut inside = Vec::with_capacity(nc * nc);
    for row in rows {
        inside.extend(row?);
    }
    Ok(RegionRaster {
        spec: spec.clone(),
        inside,
    })
}

/// One row of a dwell-time sweep.
#[derive(Debug, Clone, Serialize)]
pub struct TauRow {
    pub tau: f64,
    pub feasible: bool,
    pub r_x: Option<f64>,
    pub objective: Option<f64>,
    pub error: Option<String>,
}

/// Per-τ pipeline (feasibility, certificate at equilibrium centers, safety
/// radius). R_X is expected to shrink with τ; deviations are flagged by the
/// caller, never asserted here.
pub fn tau_sweep(system: &SwitchedAffineSystem, taus: &[f64]) -> Result<Vec<TauRow>> {
    use rayon::prelude::*;
    taus.par_iter()
        .map(|&tau| {
            let feasible = dwell_stability_feasible(system, tau)?;
            if !feasible {
                return Ok(TauRow {
                    tau,
                    feasible,
                    r_x: None,
                    objective: None,
                    error: None,
                });
            }
            match dwell_certificate(system, tau, None) {
                Ok(cert) => Ok(TauRow {
                    tau,
                    feasible,
                    r_x: Some(cert.r_x),
                    objective: Some(cert.objective),
                    error: None,
                }),
                Err(e) => Ok(TauRow {
                    tau,
                    feasible,
                    r_x: None,
                    objective: None,
                    error: Some(e.to_string()),
                }),
            }
        })
        .collect()
}

/// Boundary sample of the coupling ellipsoid 𝔼_ij = {(x−d)ᵀW(x−d) ≤ 1}.
pub fn coupling_boundary(
    vars: &DwellVariables,
    i: usize,
    j: usize,
    directions: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    let w = crate::numerics::spd_inverse(&vars.m[i][j])?;
    let winv = crate::numerics::spd_inverse(&w)?;
    let half = crate::numerics::spd_sqrt(&winv);
    Ok(directions
        .iter()
        .map(|u| &vars.d[i][j] + &half * (u / u.norm()))
        .collect())
}
