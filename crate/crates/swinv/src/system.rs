//! Switched affine systems, switching signals, per-mode equilibria and the
//! sampled Filippov equilibrium set.
//!
//! Mode indices are 1-based in every external interface (files, reports,
//! witnesses); internal vectors are 0-based.

use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// One affine mode `ẋ = A x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl Mode {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Self {
        Mode { a, b }
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Vector field value `A x + b`.
    pub fn field(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b
    }
}

/// A switched affine system: the mode family and the shared state dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedAffineSystem {
    pub modes: Vec<Mode>,
    pub dim: usize,
}

/// JSON schema of a system-spec file: row-major matrices, IEEE-754 doubles.
#[derive(Debug, Serialize, Deserialize)]
pub struct SystemSpec {
    pub modes: Vec<ModeSpec>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModeSpec {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl SwitchedAffineSystem {
    /// Validate raw matrices into a system, reporting every violated
    /// invariant at once.
    pub fn new(modes: Vec<Mode>) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::EmptySystem);
        }
        let dim = modes[0].dim();
        let mut violations = Vec::new();
        for (k, mode) in modes.iter().enumerate() {
            let idx = k + 1;
            if mode.a.nrows() != mode.a.ncols() {
                violations.push(format!(
                    "mode {idx}: A is {}x{}, not square",
                    mode.a.nrows(),
                    mode.a.ncols()
                ));
            }
            if mode.b.len() != mode.a.nrows() {
                violations.push(format!(
                    "mode {idx}: b has length {}, expected {}",
                    mode.b.len(),
                    mode.a.nrows()
                ));
            }
            if mode.a.nrows() != dim {
                violations.push(format!(
                    "mode {idx}: dimension {} differs from mode 1 ({dim})",
                    mode.a.nrows()
                ));
            }
            if mode.a.iter().any(|x| !x.is_finite()) || mode.b.iter().any(|x| !x.is_finite()) {
                violations.push(format!("mode {idx}: non-finite entry"));
            }
        }
        if !violations.is_empty() {
            return Err(Error::DimensionMismatch(violations.join("; ")));
        }
        Ok(SwitchedAffineSystem { modes, dim })
    }

    /// Build from `(rows-of-A, b)` pairs; convenience for tests and docs.
    pub fn from_rows(raw: &[(Vec<Vec<f64>>, Vec<f64>)]) -> Result<Self> {
        let modes = raw
            .iter()
            .map(|(a_rows, b)| {
                let nr = a_rows.len();
                let nc = a_rows.first().map(|r| r.len()).unwrap_or(0);
                if a_rows.iter().any(|r| r.len() != nc) {
                    return Err(Error::DimensionMismatch("ragged matrix rows".into()));
                }
                let flat: Vec<f64> = a_rows.iter().flatten().cloned().collect();
                Ok(Mode::new(
                    DMatrix::from_row_slice(nr, nc, &flat),
                    DVector::from_column_slice(b),
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        SwitchedAffineSystem::new(modes)
    }

    pub fn from_spec(spec: &SystemSpec) -> Result<Self> {
        let raw: Vec<(Vec<Vec<f64>>, Vec<f64>)> = spec
            .modes
            .iter()
            .map(|m| (m.a.clone(), m.b.clone()))
            .collect();
        Self::from_rows(&raw)
    }

    pub fn to_spec(&self) -> SystemSpec {
        SystemSpec {
            modes: self
                .modes
                .iter()
                .map(|m| ModeSpec {
                    a: (0..m.a.nrows())
                        .map(|r| m.a.row(r).iter().cloned().collect())
                        .collect(),
                    b: m.b.iter().cloned().collect(),
                })
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn mode(&self, idx0: usize) -> &Mode {
        &self.modes[idx0]
    }

    /// Per-mode equilibria `x_ei = -A_i^{-1} b_i`, in mode order.
    pub fn equilibria(&self) -> Result<Vec<DVector<f64>>> {
        self.modes
            .iter()
            .enumerate()
            .map(|(k, m)| mode_equilibrium(m).map_err(|e| match e {
                Error::SingularMode { cond, .. } => Error::SingularMode { mode: k + 1, cond },
                other => other,
            }))
            .collect()
    }
}

/// Equilibrium of one affine mode, `x_e = -A^{-1} b`.
pub fn mode_equilibrium(mode: &Mode) -> Result<DVector<f64>> {
    let svd = mode.a.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= 1e-12 * smax.max(1.0) {
        return Err(Error::SingularMode {
            mode: 1,
            cond: if smin > 0.0 { smax / smin } else { f64::INFINITY },
        });
    }
    mode.a
        .clone()
        .lu()
        .solve(&(-&mode.b))
        .ok_or(Error::SingularMode {
            mode: 1,
            cond: smax / smin,
        })
}

/// Outcome of sampling the Filippov equilibrium set over the unit simplex.
#[derive(Debug, Clone)]
pub struct FilippovSample {
    /// Equilibria of sampled convex combinations, `-(Σλ_i A_i)^{-1}(Σλ_i b_i)`.
    pub points: Vec<DVector<f64>>,
    /// Barycentric weights whose combination was singular and got skipped.
    pub singular_samples: Vec<Vec<f64>>,
}

/// Sample `Fil₀(F)` on the uniform barycentric grid of resolution `k` over
/// the simplex of mode weights (all λ with components in {0, 1/k, …, 1}).
///
/// The simplex here is over the M mode weights; singular combinations are
/// skipped and reported, not fatal.
pub fn filippov_equilibria(system: &SwitchedAffineSystem, resolution: usize) -> FilippovSample {
    let m = system.num_modes();
    let mut points = Vec::new();
    let mut singular = Vec::new();
    for weights in simplex_grid(m, resolution.max(1)) {
        let mut a = DMatrix::<f64>::zeros(system.dim(), system.dim());
        let mut b = DVector::<f64>::zeros(system.dim());
        for (lam, mode) in weights.iter().zip(system.modes()) {
            a += *lam * &mode.a;
            b += *lam * &mode.b;
        }
        let combo = Mode::new(a, b);
        match mode_equilibrium(&combo) {
            Ok(x) => points.push(x),
            Err(_) => singular.push(weights),
        }
    }
    FilippovSample {
        points,
        singular_samples: singular,
    }
}

/// All barycentric grid points with components in {0, 1/k, ..., 1} summing to 1.
fn simplex_grid(m: usize, k: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut counts = vec![0usize; m];
    fn rec(counts: &mut Vec<usize>, idx: usize, left: usize, k: usize, out: &mut Vec<Vec<f64>>) {
        if idx == counts.len() - 1 {
            counts[idx] = left;
            out.push(counts.iter().map(|&c| c as f64 / k as f64).collect());
            return;
        }
        for c in 0..=left {
            counts[idx] = c;
            rec(counts, idx + 1, left - c, k, out);
        }
    }
    rec(&mut counts, 0, k, k, &mut out);
    out
}

/// Spectral abscissa `max Re λ(A)`; the matrix is Hurwitz iff this is < 0.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Piecewise-constant, right-continuous switching signal starting at t₀ = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingSignal {
    /// Strictly increasing switch times; `breakpoints[0] == 0`.
    breakpoints: Vec<f64>,
    /// 1-based mode index active on `[breakpoints[k], breakpoints[k+1])`.
    values: Vec<usize>,
    /// Dwell-time the signal was tagged with at construction (0 = arbitrary).
    tau: f64,
}

impl SwitchingSignal {
    /// Build a signal; `values[k]` is active from `breakpoints[k]`.
    /// Tagging a dwell-time `tau > 0` rejects any gap shorter than `tau`.
    pub fn new(breakpoints: Vec<f64>, values: Vec<usize>, tau: f64) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints[0] != 0.0 {
            return Err(Error::InvalidSignal("breakpoints must start at t = 0".into()));
        }
        if breakpoints.len() != values.len() {
            return Err(Error::InvalidSignal(format!(
                "{} breakpoints vs {} values",
                breakpoints.len(),
                values.len()
            )));
        }
        if values.iter().any(|&v| v == 0) {
            return Err(Error::InvalidSignal("mode indices are 1-based".into()));
        }
        for k in 1..breakpoints.len() {
            let gap = breakpoints[k] - breakpoints[k - 1];
            if gap <= 0.0 {
                return Err(Error::InvalidSignal("breakpoints must strictly increase".into()));
            }
            if tau > 0.0 && gap < tau {
                return Err(Error::InvalidSignal(format!(
                    "gap {gap} at breakpoint {k} violates dwell-time {tau}"
                )));
            }
            if values[k] == values[k - 1] {
                return Err(Error::InvalidSignal(format!(
                    "value does not change at breakpoint {k}"
                )));
            }
        }
        Ok(SwitchingSignal {
            breakpoints,
            values,
            tau,
        })
    }

    /// Constant signal at a single mode.
    pub fn constant(mode: usize) -> Self {
        SwitchingSignal {
            breakpoints: vec![0.0],
            values: vec![mode],
            tau: 0.0,
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[usize] {
        &self.values
    }

    pub fn dwell_tau(&self) -> f64 {
        self.tau
    }

    /// 1-based active mode at time `t` (right-continuous convention).
    pub fn mode_at(&self, t: f64) -> Result<usize> {
        if t < 0.0 || !t.is_finite() {
            return Err(Error::SignalUndefined(t));
        }
        let idx = match self
            .breakpoints
            .binary_search_by(|bp| bp.partial_cmp(&t).unwrap())
        {
            Ok(k) => k,
            Err(k) => k - 1,
        };
        Ok(self.values[idx])
    }

    /// Switching instants strictly inside `(0, horizon]`.
    pub fn switch_times(&self, horizon: f64) -> Vec<f64> {
        self.breakpoints
            .iter()
            .skip(1)
            .cloned()
            .filter(|&t| t <= horizon)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn example1() -> SwitchedAffineSystem {
        SwitchedAffineSystem::from_rows(&[
            (vec![vec![-1.0, -1.0], vec![0.0, -1.0]], vec![-1.0, -1.0]),
            (vec![vec![-1.0, 0.0], vec![-1.0, -1.0]], vec![-1.0, -1.0]),
        ])
        .unwrap()
    }

    #[test]
    fn validate_consistent_system() {
        let sys = example1();
        assert_eq!(sys.num_modes(), 2);
        assert_eq!(sys.dim(), 2);
    }

    #[test]
    fn validate_rejects_dimension_mismatch() {
        let err = SwitchedAffineSystem::from_rows(&[(
            vec![vec![-1.0, 0.0], vec![0.0, -1.0]],
            vec![1.0, 2.0, 3.0],
        )])
        .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }

    #[test]
    fn validate_rejects_empty() {
        assert!(matches!(
            SwitchedAffineSystem::new(vec![]).unwrap_err(),
            Error::EmptySystem
        ));
    }

    #[test]
    fn equilibrium_by_hand() {
        // A = [[-1,-1],[0,-1]], b = (-1,-1): solve Ax = -b -> x = (0, -1)
        let sys = example1();
        let xe = mode_equilibrium(sys.mode(0)).unwrap();
        assert_relative_eq!(xe[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(xe[1], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn equilibrium_origin_for_linear_mode() {
        let mode = Mode::new(-DMatrix::identity(3, 3), DVector::zeros(3));
        let xe = mode_equilibrium(&mode).unwrap();
        assert!(xe.norm() < 1e-14);
    }

    #[test]
    fn equilibrium_example4_mode1() {
        let mode = Mode::new(
            DMatrix::from_row_slice(2, 2, &[-5.0, 1.0, -1.0, -4.0]),
            DVector::from_vec(vec![-50.0, -10.0]),
        );
        let xe = mode_equilibrium(&mode).unwrap();
        assert_relative_eq!(xe[0], -10.0, epsilon = 1e-10);
        assert_relative_eq!(xe[1], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn singular_mode_reports_condition() {
        let mode = Mode::new(DMatrix::zeros(2, 2), DVector::from_vec(vec![1.0, 0.0]));
        assert!(matches!(
            mode_equilibrium(&mode).unwrap_err(),
            Error::SingularMode { .. }
        ));
    }

    #[test]
    fn equilibrium_residual_invariant() {
        let sys = example1();
        for mode in sys.modes() {
            let xe = mode_equilibrium(mode).unwrap();
            let res = (&mode.a * &xe + &mode.b).norm();
            let bound = 1e-10 * (mode.a.norm() * xe.norm() + mode.b.norm());
            assert!(res <= bound.max(1e-14));
        }
    }

    #[test]
    fn filippov_single_mode_is_equilibrium() {
        let sys = SwitchedAffineSystem::from_rows(&[(
            vec![vec![-2.0, 0.0], vec![0.0, -1.0]],
            vec![2.0, 3.0],
        )])
        .unwrap();
        let fil = filippov_equilibria(&sys, 4);
        assert_eq!(fil.points.len(), 1);
        let xe = mode_equilibrium(sys.mode(0)).unwrap();
        assert_relative_eq!(fil.points[0], xe, epsilon = 1e-12);
    }

    #[test]
    fn filippov_example1_midpoint() {
        let sys = example1();
        let fil = filippov_equilibria(&sys, 2); // λ in {0, 0.5, 1}
        assert_eq!(fil.points.len(), 3);
        // endpoints are the mode equilibria
        let must_contain = [
            DVector::from_vec(vec![0.0, -1.0]),
            DVector::from_vec(vec![-1.0, 0.0]),
        ];
        for target in &must_contain {
            assert!(fil.points.iter().any(|p| (p - target).norm() < 1e-10));
        }
        // midpoint: invert (A1 + A2)/2 = [[-1, -0.5], [-0.5, -1]] by hand
        let mid_a = DMatrix::from_row_slice(2, 2, &[-1.0, -0.5, -0.5, -1.0]);
        let expect = mid_a.lu().solve(&DVector::from_vec(vec![1.0, 1.0])).unwrap();
        assert!(fil.points.iter().any(|p| (p - &expect).norm() < 1e-10));
        // each sampled point solves 0 ∈ F(y) at its own weights: residual check
        for p in &fil.points {
            let r1 = sys.mode(0).field(p);
            let r2 = sys.mode(1).field(p);
            // some convex combination of the two residuals vanishes
            // (collinearity through the origin in the 1-simplex case)
            let det = r1[0] * r2[1] - r1[1] * r2[0];
            assert!(det.abs() < 1e-9);
        }
    }

    #[test]
    fn filippov_identical_modes_degenerate() {
        let a = vec![vec![-1.0, 0.2], vec![0.0, -3.0]];
        let b = vec![1.0, 1.0];
        let sys =
            SwitchedAffineSystem::from_rows(&[(a.clone(), b.clone()), (a, b)]).unwrap();
        let fil = filippov_equilibria(&sys, 5);
        let first = &fil.points[0];
        assert!(fil.points.iter().all(|p| (p - first).norm() < 1e-10));
    }

    #[test]
    fn filippov_resolution_one_gives_vertices() {
        let sys = example1();
        let fil = filippov_equilibria(&sys, 1);
        let eq = sys.equilibria().unwrap();
        assert_eq!(fil.points.len(), 2);
        for xe in &eq {
            assert!(fil.points.iter().any(|p| (p - xe).norm() < 1e-10));
        }
    }

    #[test]
    fn spectral_abscissa_cases() {
        assert_relative_eq!(spectral_abscissa(&(-DMatrix::identity(2, 2))), -1.0);
        // λ² + λ + 10 -> Re = -0.5
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -10.0, -1.0]);
        assert_relative_eq!(spectral_abscissa(&a), -0.5, epsilon = 1e-12);
        // λ² + 0.5λ + 0.1 -> Re = -0.25
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -0.1, -0.5]);
        assert_relative_eq!(spectral_abscissa(&a), -0.25, epsilon = 1e-12);
    }

    #[test]
    fn signal_dwell_tag_rejects_short_gaps() {
        assert!(SwitchingSignal::new(vec![0.0, 1.0, 1.5], vec![1, 2, 1], 1.0).is_err());
        assert!(SwitchingSignal::new(vec![0.0, 1.0, 2.5], vec![1, 2, 1], 1.0).is_ok());
    }

    #[test]
    fn signal_lookup_right_continuous() {
        let sig = SwitchingSignal::new(vec![0.0, 1.0], vec![1, 2], 0.0).unwrap();
        assert_eq!(sig.mode_at(0.0).unwrap(), 1);
        assert_eq!(sig.mode_at(0.999).unwrap(), 1);
        assert_eq!(sig.mode_at(1.0).unwrap(), 2);
        assert!(sig.mode_at(-0.1).is_err());
    }
}
