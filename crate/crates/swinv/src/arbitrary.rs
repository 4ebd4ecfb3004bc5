//! Outer approximations of the minimal forward invariant set under
//! arbitrary switching.
//!
//! Two certificate families are produced:
//! * ellipsoids `K_Q = {x | (x−c)ᵀ S⁻¹ (x−c) ≤ 1}` from a common-quadratic
//!   decay condition plus a Schur-complement drift bound, minimizing Tr(S);
//! * polynomial sublevel sets `K_SOS = {x | V(x) ≤ r}` from a sum-of-squares
//!   program over a dense monomial basis, minimizing the level `r`.

use crate::poly::{self, Exponents, Poly};
use crate::sdp::{ConeProgram, LmiBlock, SolveStatus};
use crate::system::SwitchedAffineSystem;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Invariant ellipsoid `(x−c)ᵀ S⁻¹ (x−c) ≤ 1` together with the decay rate
/// it was certified at.
#[derive(Debug, Clone)]
pub struct EllipsoidSet {
    pub center: DVector<f64>,
    pub shape: DMatrix<f64>,
    pub kappa: f64,
}

impl EllipsoidSet {
    /// Weighted norm v(x) = √(xᵀ S⁻¹ x).
    pub fn norm(&self, x: &DVector<f64>) -> Result<f64> {
        let sinv = crate::numerics::spd_inverse(&self.shape)?;
        Ok((x.dot(&(&sinv * x))).max(0.0).sqrt())
    }

    /// Membership value (x−c)ᵀ S⁻¹ (x−c); the set is the ≤ 1 sublevel.
    pub fn level(&self, x: &DVector<f64>) -> Result<f64> {
        let d = x - &self.center;
        let sinv = crate::numerics::spd_inverse(&self.shape)?;
        Ok(d.dot(&(&sinv * &d)))
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> Result<bool> {
        Ok(self.level(x)? <= 1.0 + tol)
    }

    /// Points on the boundary, parameterized by directions: c + S^{1/2} u
    /// for unit vectors u.
    pub fn boundary_points(&self, directions: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        let half = crate::numerics::spd_sqrt(&self.shape);
        Ok(directions
            .iter()
            .map(|u| {
                let un = u / u.norm();
                &self.center + &half * un
            })
            .collect())
    }
}

/// Common-quadratic-decay ellipsoid: minimize Tr(S) subject to, for every
/// mode i,
///
/// ```text
/// S A_iᵀ + A_i S ⪯ −2κ S,      [κ²      (A_i c + b_i)ᵀ]
///                               [A_i c + b_i        S  ] ⪰ 0.
/// ```
pub fn ellipsoid_invariant(system: &SwitchedAffineSystem, kappa: f64) -> Result<EllipsoidSet> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "decay rate must be positive and finite, got {kappa}"
        )));
    }
    let n = system.dim;
    let mut prog = ConeProgram::new();
    let s = prog.sym_matrix(n);
    let c = prog.vector(n);

    for mode in &system.modes {
        let a = &mode.a;
        // −(S Aᵀ + A S) − 2κ S ⪰ 0
        let mut decay = LmiBlock::new(n);
        decay.add_matvar(&s, |e| -(e * a.transpose() + a * e) - e * (2.0 * kappa));
        prog.add_lmi(decay);

        // Schur block: [[κ², (Ac+b)ᵀ], [Ac+b, S]] ⪰ 0
        let mut schur = LmiBlock::new(n + 1);
        let mut c0 = DMatrix::zeros(n + 1, n + 1);
        c0[(0, 0)] = kappa * kappa;
        for r in 0..n {
            c0[(r + 1, 0)] = mode.b[r];
            c0[(0, r + 1)] = mode.b[r];
        }
        schur.add_constant(&c0);
        schur.add_matvar(&s, |e| {
            let mut m = DMatrix::zeros(n + 1, n + 1);
            m.view_mut((1, 1), (n, n)).copy_from(e);
            m
        });
        schur.add_vecvar(&c, |k| {
            // c_k contributes A e_k into the off-diagonal border
            let col = a.column(k);
            let mut m = DMatrix::zeros(n + 1, n + 1);
            for r in 0..n {
                m[(r + 1, 0)] = col[r];
                m[(0, r + 1)] = col[r];
            }
            m
        });
        prog.add_lmi(schur);
    }

    // keep S strictly positive definite
    let mut pd = LmiBlock::new(n);
    pd.add_constant(&(-DMatrix::<f64>::identity(n, n) * 1e-8));
    pd.add_matvar(&s, |e| e.clone());
    prog.add_lmi(pd);

    prog.minimize_trace(&s);
    let report = prog.solve_expect("ellipsoid certificate")?;
    let shape = report.matrix(&s);
    let center = report.vector(&c);
    if !crate::numerics::is_positive_definite(&shape, 0.0) {
        return Err(Error::NumericFailure(
            "recovered shape matrix is not positive definite".into(),
        ));
    }
    Ok(EllipsoidSet {
        center,
        shape,
        kappa,
    })
}

/// Feasibility of the decay condition alone at a given rate, with the
/// normalization S ⪰ I.
fn quadratic_decay_feasible(system: &SwitchedAffineSystem, kappa: f64) -> Result<bool> {
    let n = system.dim;
    let mut prog = ConeProgram::new();
    let s = prog.sym_matrix(n);
    let mut lower = LmiBlock::new(n);
    lower.add_constant(&(-DMatrix::<f64>::identity(n, n)));
    lower.add_matvar(&s, |e| e.clone());
    prog.add_lmi(lower);
    for mode in &system.modes {
        let a = &mode.a;
        let mut decay = LmiBlock::new(n);
        decay.add_matvar(&s, |e| -(e * a.transpose() + a * e) - e * (2.0 * kappa));
        prog.add_lmi(decay);
    }
    let report = prog.solve()?;
    match report.status {
        SolveStatus::Optimal => Ok(true),
        SolveStatus::Infeasible => Ok(false),
        SolveStatus::NumericFailure => Err(Error::NumericFailure(format!(
            "decay feasibility test at rate {kappa} did not converge"
        ))),
    }
}

/// Largest decay rate κ (within `tol`) admitting a common quadratic
/// certificate, by bisection on `[0, min_i |spectral abscissa(A_i)|]`.
pub fn max_quadratic_decay(system: &SwitchedAffineSystem, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(
            "bisection tolerance must be positive".into(),
        ));
    }
    let mut hi = f64::INFINITY;
    for mode in &system.modes {
        let alpha = crate::system::spectral_abscissa(&mode.a);
        if alpha >= 0.0 {
            return Err(Error::NoCommonQuadratic);
        }
        hi = hi.min(-alpha);
    }
    let probe = (tol * 1e-3).min(hi * 1e-6).max(f64::MIN_POSITIVE);
    if !quadratic_decay_feasible(system, probe)? {
        return Err(Error::NoCommonQuadratic);
    }
    let mut lo = probe;
    if quadratic_decay_feasible(system, hi)? {
        return Ok(hi);
    }
    let mut hi = hi;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if quadratic_decay_feasible(system, mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Radius of the invariant ball in the weighted norm v(x) = √(xᵀS⁻¹x):
/// `R = max_i v(A_i c + b_i) / κ`. The set `{v(x − c) ≤ R}` is forward
/// invariant whenever the decay condition holds for the recentered system.
pub fn theoretic_radius(
    system: &SwitchedAffineSystem,
    shape: &DMatrix<f64>,
    center: &DVector<f64>,
    kappa: f64,
) -> Result<f64> {
    if !(kappa > 0.0) {
        return Err(Error::InvalidParameter(
            "decay rate must be positive".into(),
        ));
    }
    let sinv = crate::numerics::spd_inverse(shape)?;
    let mut b_max: f64 = 0.0;
    for mode in &system.modes {
        let drift = &mode.a * center + &mode.b;
        let v = drift.dot(&(&sinv * &drift)).max(0.0).sqrt();
        b_max = b_max.max(v);
    }
    Ok(b_max / kappa)
}

/// Serializable polynomial certificate for the sublevel set `{V ≤ r}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SosCertificate {
    pub degree: u32,
    pub beta: f64,
    pub epsilon: f64,
    pub level: f64,
    /// Exponent tuples of the monomial basis of V (total degree 1..=degree).
    pub exponents: Vec<Exponents>,
    /// Coefficients of V aligned with `exponents`.
    pub coefficients: Vec<f64>,
    /// Gram matrix (dense, row-major) certifying V − ε‖x‖_d^d is SOS.
    pub gram_positivity: Vec<Vec<f64>>,
    /// Per-mode Gram matrices certifying the decay constraint.
    pub gram_decay: Vec<Vec<Vec<f64>>>,
}

impl SosCertificate {
    pub fn polynomial(&self) -> Poly {
        let mut p = Poly::zero();
        for (alpha, &coeff) in self.exponents.iter().zip(self.coefficients.iter()) {
            p.add_term(alpha.clone(), coeff);
        }
        p
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        self.exponents
            .iter()
            .zip(self.coefficients.iter())
            .map(|(alpha, &c)| c * poly::eval_monomial(alpha, x))
            .sum()
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        self.eval(x) <= self.level + tol
    }

    /// Degree-d homogeneous part of V.
    pub fn homogeneous_part(&self) -> Poly {
        let mut p = Poly::zero();
        for (alpha, &c) in self.exponents.iter().zip(self.coefficients.iter()) {
            if alpha.iter().sum::<u32>() == self.degree {
                p.add_term(alpha.clone(), c);
            }
        }
        p
    }
}

/// Expand `z(x)ᵀ G z(x)` symbolically: returns, per product exponent tuple,
/// the list of (row, col, weight) Gram entries contributing to it. Weight is
/// 2 for off-diagonal slots (stored once), 1 on the diagonal.
fn gram_expansion(basis: &[Exponents]) -> BTreeMap<Exponents, Vec<(usize, usize, f64)>> {
    let mut map: BTreeMap<Exponents, Vec<(usize, usize, f64)>> = BTreeMap::new();
    for j in 0..basis.len() {
        for k in j..basis.len() {
            let alpha = poly::mul_exponents(&basis[j], &basis[k]);
            let w = if j == k { 1.0 } else { 2.0 };
            map.entry(alpha).or_default().push((j, k, w));
        }
    }
    map
}

/// Sum-of-squares certificate: minimize `r` over polynomials V of total
/// degree `d` (no constant term) subject to, per mode i,
///
/// ```text
/// V(x) − ε Σ_j x_j^d                       is SOS,
/// −∇V(x)ᵀ(A_i x + b_i) − β (V(x) − r)      is SOS.
/// ```
pub fn sos_invariant(
    system: &SwitchedAffineSystem,
    degree: u32,
    beta: f64,
    epsilon: f64,
) -> Result<SosCertificate> {
    if degree < 2 || degree % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "certificate degree must be even and at least 2, got {degree}"
        )));
    }
    if !(epsilon > 0.0) || beta < 0.0 {
        return Err(Error::InvalidParameter(
            "margin must be positive and multiplier non-negative".into(),
        ));
    }
    let n = system.dim;
    let half = degree / 2;
    let v_basis = poly::monomials_in_range(n, 1, degree);
    let pos_basis = poly::monomials_in_range(n, 1, half);
    let dec_basis = poly::monomials_in_range(n, 0, half);

    let mut prog = ConeProgram::new();
    let v_coeff = prog.vector(v_basis.len());
    let r = prog.scalar();
    let slot_of: BTreeMap<Exponents, usize> = v_basis
        .iter()
        .enumerate()
        .map(|(k, a)| (a.clone(), v_coeff.slot(k)))
        .collect();

    // positivity constraint: V − ε Σ x_j^d = z₁ᵀ G₀ z₁
    let g0 = prog.sym_matrix(pos_basis.len());
    let mut pos_block = LmiBlock::new(pos_basis.len());
    pos_block.add_matvar(&g0, |e| e.clone());
    prog.add_lmi(pos_block);
    let pos_map = gram_expansion(&pos_basis);
    let mut pos_alphas: std::collections::BTreeSet<Exponents> = pos_map.keys().cloned().collect();
    pos_alphas.extend(v_basis.iter().cloned());
    for alpha in &pos_alphas {
        // Σ w G₀[j,k] − v_alpha = −ε [alpha = d·e_j]
        let mut coeffs: Vec<(usize, f64)> = Vec::new();
        if let Some(entries) = pos_map.get(alpha) {
            for &(j, k, w) in entries {
                coeffs.push((g0.slot(j, k), w));
            }
        }
        if let Some(&slot) = slot_of.get(alpha) {
            coeffs.push((slot, -1.0));
        }
        let is_axis_power = alpha.iter().filter(|&&e| e > 0).count() == 1
            && alpha.iter().sum::<u32>() == degree;
        let rhs = if is_axis_power { -epsilon } else { 0.0 };
        prog.add_equality(coeffs, rhs);
    }

    // decay constraints, one Gram matrix per mode
    let dec_map = gram_expansion(&dec_basis);
    let mut gram_vars = Vec::new();
    for mode in &system.modes {
        let g = prog.sym_matrix(dec_basis.len());
        let mut block = LmiBlock::new(dec_basis.len());
        block.add_matvar(&g, |e| e.clone());
        prog.add_lmi(block);

        // coefficients of p_i = −∇Vᵀ(A_i x + b_i) − βV + βr as linear maps
        // of (v, r), keyed by exponent tuple
        let mut lin: BTreeMap<Exponents, Vec<(usize, f64)>> = BTreeMap::new();
        for (kv, alpha) in v_basis.iter().enumerate() {
            let slot = v_coeff.slot(kv);
            for j in 0..n {
                if alpha[j] == 0 {
                    continue;
                }
                let deg_j = alpha[j] as f64;
                let mut da = alpha.clone();
                da[j] -= 1;
                // × (A_i x)_j
                for l in 0..n {
                    let a_jl = mode.a[(j, l)];
                    if a_jl == 0.0 {
                        continue;
                    }
                    let mut beta_exp = da.clone();
                    beta_exp[l] += 1;
                    lin.entry(beta_exp).or_default().push((slot, -deg_j * a_jl));
                }
                // × b_j
                if mode.b[j] != 0.0 {
                    lin.entry(da).or_default().push((slot, -deg_j * mode.b[j]));
                }
            }
            lin.entry(alpha.clone()).or_default().push((slot, -beta));
        }
        lin.entry(vec![0; n]).or_default().push((r.0, beta));

        let mut alphas: std::collections::BTreeSet<Exponents> = dec_map.keys().cloned().collect();
        alphas.extend(lin.keys().cloned());
        for alpha in &alphas {
            // Σ w G[j,k] − (linear part) = 0
            let mut coeffs: Vec<(usize, f64)> = Vec::new();
            if let Some(entries) = dec_map.get(alpha) {
                for &(j, k, w) in entries {
                    coeffs.push((g.slot(j, k), w));
                }
            }
            if let Some(parts) = lin.get(alpha) {
                for &(slot, a) in parts {
                    coeffs.push((slot, -a));
                }
            }
            prog.add_equality(coeffs, 0.0);
        }
        gram_vars.push(g);
    }

    prog.add_inequality(vec![(r.0, 1.0)], 0.0);
    prog.minimize(r.0, 1.0);
    let report = prog.solve_expect("polynomial certificate")?;

    let dump = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
        (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
            .collect()
    };
    Ok(SosCertificate {
        degree,
        beta,
        epsilon,
        level: report.scalar(r),
        exponents: v_basis.clone(),
        coefficients: (0..v_basis.len())
            .map(|k| report.x[v_coeff.slot(k)])
            .collect(),
        gram_positivity: dump(&report.matrix(&g0)),
        gram_decay: gram_vars.iter().map(|g| dump(&report.matrix(g))).collect(),
    })
}

/// Result of scanning the decay multiplier over a finite grid.
#[derive(Debug, Clone, Serialize)]
pub struct BetaProfile {
    pub entries: Vec<BetaEntry>,
    pub best_beta: f64,
    pub best_level: f64,
    /// True when the feasible levels are not unimodal in β; callers should
    /// not assume the grid minimum is a global one.
    pub non_unimodal: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BetaEntry {
    pub beta: f64,
    pub level: Option<f64>,
}

/// Run the certificate construction for each β on the grid and keep the one
/// with the smallest level.
pub fn sos_beta_search(
    system: &SwitchedAffineSystem,
    degree: u32,
    epsilon: f64,
    grid: &[f64],
) -> Result<(SosCertificate, BetaProfile)> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("multiplier grid is empty".into()));
    }
    use rayon::prelude::*;
    let results: Vec<(f64, Result<SosCertificate>)> = grid
        .par_iter()
        .map(|&beta| (beta, sos_invariant(system, degree, beta, epsilon)))
        .collect();

    let mut entries = Vec::new();
    let mut best: Option<SosCertificate> = None;
    for (beta, res) in results {
        match res {
            Ok(cert) => {
                entries.push(BetaEntry {
                    beta,
                    level: Some(cert.level),
                });
                if best.as_ref().map_or(true, |b| cert.level < b.level) {
                    best = Some(cert);
                }
            }
            // a multiplier the solver rejects (infeasible or numerically
            // hopeless) is a data point of the profile, not a failure of
            // the sweep
            Err(Error::Infeasible(_)) | Err(Error::NumericFailure(_)) => {
                entries.push(BetaEntry { beta, level: None })
            }
            Err(e) => return Err(e),
        }
    }
    let best = best.ok_or_else(|| {
        Error::Infeasible("no multiplier on the grid admits a certificate".into())
    })?;
    let levels: Vec<f64> = entries.iter().filter_map(|e| e.level).collect();
    let non_unimodal = {
        // count descent→ascent→descent patterns; a unimodal profile has at
        // most one sign change in the successive differences
        let mut changes = 0;
        let mut last_sign = 0i8;
        for w in levels.windows(2) {
            let s = if w[1] > w[0] {
                1
            } else if w[1] < w[0] {
                -1
            } else {
                0
            };
            if s != 0 {
                if last_sign != 0 && s != last_sign {
                    changes += 1;
                }
                last_sign = s;
            }
        }
        changes > 1
    };
    let profile = BetaProfile {
        best_beta: best.beta,
        best_level: best.level,
        entries,
        non_unimodal,
    };
    Ok((best, profile))
}

/// Certified decay rate κ = β/d of the linearized flow, cross-checked by
/// sampling the homogeneous part on the unit sphere.
pub fn homogeneous_decay(
    system: &SwitchedAffineSystem,
    cert: &SosCertificate,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let kappa = cert.beta / cert.degree as f64;
    if cert.beta == 0.0 {
        return Ok(0.0);
    }
    let vh = cert.homogeneous_part();
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = system.dim;
    for _ in 0..samples {
        let mut x = DVector::from_fn(n, |_, _| {
            let v: f64 = StandardNormal.sample(&mut rng);
            v
        });
        let norm = x.norm();
        if norm < 1e-12 {
            continue;
        }
        x /= norm;
        let val = vh.eval(&x);
        let grad = vh.gradient_at(&x);
        let scale = 1.0 + val.abs();
        for mode in &system.modes {
            let lie = grad.dot(&(&mode.a * &x));
            if lie > -cert.beta * val + 1e-6 * scale {
                return Err(Error::CertificateInconsistency(format!(
                    "homogeneous decay violated at a sampled direction: \
                     derivative {lie:.6e} vs bound {:.6e}",
                    -cert.beta * val
                )));
            }
        }
    }
    Ok(kappa)
}
