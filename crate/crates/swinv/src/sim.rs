//! Exact trajectory evaluation, random signal generation, reachable-set
//! sampling, and Monte-Carlo verification of invariance, ultimate
//! boundedness, and decay rates.
//!
//! Within one mode interval the flow of `ẋ = A_i x + b_i` is evaluated
//! through the augmented matrix exponential, so trajectories are exact up to
//! the accuracy of the exponential kernel — there is no integration error to
//! tune against.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;

use crate::dwell::{membership_v, DwellCertificate};
use crate::error::Error;
use crate::numerics;
use crate::system::{SwitchedAffineSystem, SwitchingSignal};
use crate::Result;

/// A sampled trajectory: `states[k]` is the exact state at `times[k]`, and
/// `modes[k]` is the active (1-based) mode on `[times[k], times[k+1])`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub modes: Vec<usize>,
}

/// Exact state at time `t` under a switching signal, composed over the
/// signal's intervals in order.
pub fn flow(
    system: &SwitchedAffineSystem,
    signal: &SwitchingSignal,
    x0: &DVector<f64>,
    t: f64,
) -> Result<DVector<f64>> {
    if t < 0.0 || !t.is_finite() {
        return Err(Error::SignalUndefined(t));
    }
    let mut x = x0.clone();
    let mut now = 0.0;
    let bps = signal.breakpoints();
    let vals = signal.values();
    for k in 0..bps.len() {
        let seg_end = if k + 1 < bps.len() { bps[k + 1].min(t) } else { t };
        if seg_end <= now {
            continue;
        }
        let mode_idx = vals[k];
        let mode = system
            .modes
            .get(mode_idx - 1)
            .ok_or_else(|| Error::InvalidSignal(format!("mode {mode_idx} out of range")))?;
        x = numerics::mode_flow(mode, &x, seg_end - now)?;
        now = seg_end;
        if now >= t {
            break;
        }
    }
    Ok(x)
}

/// Sample a trajectory on a uniform grid of `steps` intervals over
/// `[0, horizon]`, augmented with every switching instant (set membership at
/// the switching points is the discrete invariant worth checking exactly).
pub fn trajectory(
    system: &SwitchedAffineSystem,
    signal: &SwitchingSignal,
    x0: &DVector<f64>,
    horizon: f64,
    steps: usize,
) -> Result<Trajectory> {
    if steps == 0 || horizon <= 0.0 {
        return Err(Error::InvalidParameter(
            "trajectory needs a positive horizon and at least one step".into(),
        ));
    }
    let mut times: Vec<f64> = (0..=steps)
        .map(|k| horizon * k as f64 / steps as f64)
        .collect();
    for &bp in signal.breakpoints() {
        if bp > 0.0 && bp < horizon {
            times.push(bp);
        }
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let mut states = Vec::with_capacity(times.len());
    let mut modes = Vec::with_capacity(times.len());
    let mut x = x0.clone();
    let mut prev_t = 0.0;
    for (k, &t) in times.iter().enumerate() {
        if k > 0 {
            // advance exactly across [prev_t, t]; the grid contains every
            // breakpoint, so the active mode is constant on the interval
            let mode_idx = signal.mode_at(prev_t)?;
            x = numerics::mode_flow(&system.modes[mode_idx - 1], &x, t - prev_t)?;
        }
        states.push(x.clone());
        modes.push(signal.mode_at(t)?);
        prev_t = t;
    }
    Ok(Trajectory {
        times,
        states,
        modes,
    })
}

/// Draw a random signal from the dwell-time class: gaps are
/// `τ + Exponential` (mean `τ`, or a horizon-scaled mean for the arbitrary
/// class `τ = 0`), consecutive modes never repeat, and the same seed always
/// reproduces the same signal.
pub fn random_dwell_signal(
    num_modes: usize,
    horizon: f64,
    tau: f64,
    seed: u64,
) -> Result<SwitchingSignal> {
    if num_modes == 0 {
        return Err(Error::InvalidParameter("need at least one mode".into()));
    }
    if tau < 0.0 || horizon <= 0.0 {
        return Err(Error::InvalidParameter(
            "dwell time must be non-negative and the horizon positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if num_modes == 1 {
        return Ok(SwitchingSignal::constant(1));
    }
    // arbitrary class: no dwell floor beyond a numeric gap, switches on a
    // horizon-scaled mean so ensembles stay a sensible size
    let shift = if tau > 0.0 { tau } else { 1e-6 };
    let mean = if tau > 0.0 { tau } else { horizon / 8.0 };
    let exp = Exp::new(1.0 / mean).map_err(|e| Error::InvalidParameter(e.to_string()))?;

    let mut breakpoints = vec![0.0];
    let mut values = vec![rng.gen_range(1..=num_modes)];
    let mut t = 0.0;
    loop {
        t += shift + exp.sample(&mut rng);
        if t >= horizon {
            break;
        }
        let prev = *values.last().unwrap();
        let mut next = rng.gen_range(1..=num_modes - 1);
        if next >= prev {
            next += 1; // uniform over the other modes
        }
        breakpoints.push(t);
        values.push(next);
    }
    SwitchingSignal::new(breakpoints, values, tau)
}

/// Sample the reachable set `K(t)` from the origin: `n` exact flows under
/// `n` independent random arbitrary-switching signals.
pub fn reachable_sample(
    system: &SwitchedAffineSystem,
    t: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<DVector<f64>>> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    let horizon = t.max(1e-9);
    let x0 = DVector::zeros(system.dim);
    (0..n)
        .into_par_iter()
        .map(|k| {
            let signal = random_dwell_signal(
                system.modes.len(),
                horizon,
                0.0,
                seed.wrapping_add(k as u64),
            )?;
            flow(system, &signal, &x0, t)
        })
        .collect()
}

/// A point that left the set: trajectory index, time, state, and the excess
/// of the membership level over the tolerance.
#[derive(Debug, Clone)]
pub struct ViolationWitness {
    pub trajectory: usize,
    pub time: f64,
    pub state: DVector<f64>,
    pub excess: f64,
}

/// Monte-Carlo invariance report.
#[derive(Debug, Clone)]
pub struct InvarianceReport {
    /// Trajectories checked.
    pub tested: usize,
    /// Samples with a positive excess.
    pub violations: usize,
    /// Largest excess observed (0 when none).
    pub max_excursion: f64,
    /// First violation per offending trajectory, sorted by trajectory index.
    pub witnesses: Vec<ViolationWitness>,
}

/// Flow every initial point under its paired signal and test set membership
/// at every sample.  `level` is the set's membership function: `≤ tol`
/// means inside.  Violations are data, not errors.
pub fn verify_invariance<F>(
    system: &SwitchedAffineSystem,
    runs: &[(DVector<f64>, SwitchingSignal)],
    horizon: f64,
    steps: usize,
    level: F,
    tol: f64,
) -> Result<InvarianceReport>
where
    F: Fn(&DVector<f64>) -> f64 + Sync,
{
    let outcomes: Vec<Option<ViolationWitness>> = runs
        .par_iter()
        .enumerate()
        .map(|(idx, (x0, signal))| {
            let traj = trajectory(system, signal, x0, horizon, steps)?;
            let mut worst: Option<ViolationWitness> = None;
            for (t, x) in traj.times.iter().zip(&traj.states) {
                let excess = level(x) - tol;
                if excess > 0.0 {
                    match &mut worst {
                        Some(w) => w.excess = w.excess.max(excess),
                        None => {
                            worst = Some(ViolationWitness {
                                trajectory: idx,
                                time: *t,
                                state: x.clone(),
                                excess,
                            })
                        }
                    }
                }
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;

    let witnesses: Vec<ViolationWitness> = outcomes.into_iter().flatten().collect();
    let max_excursion = witnesses.iter().map(|w| w.excess).fold(0.0, f64::max);
    Ok(InvarianceReport {
        tested: runs.len(),
        violations: witnesses.len(),
        max_excursion,
        witnesses,
    })
}

/// Per-trajectory outcome of the ultimate-boundedness check.
#[derive(Debug, Clone)]
pub struct UgubOutcome {
    /// First sample time with membership in the bounding region, if any.
    pub entry_time: Option<f64>,
    /// Sample times after entry at which membership failed.
    pub exits: Vec<f64>,
    /// The run exceeded the divergence cutoff.
    pub diverged: bool,
}

/// Ultimate-boundedness report over an ensemble.
#[derive(Debug, Clone)]
pub struct UgubReport {
    pub outcomes: Vec<UgubOutcome>,
}

impl UgubReport {
    pub fn all_entered(&self) -> bool {
        self.outcomes
            .iter()
            .all(|o| o.entry_time.is_some() && !o.diverged)
    }

    pub fn post_entry_exits(&self) -> usize {
        self.outcomes.iter().map(|o| o.exits.len()).sum()
    }
}

/// Flow an ensemble under dwell-respecting signals, recording the first
/// entry into the bounding region and any post-entry exits (the certified
/// prediction is that there are none).
pub fn verify_ugub(
    system: &SwitchedAffineSystem,
    cert: &DwellCertificate,
    runs: &[(DVector<f64>, SwitchingSignal)],
    horizon: f64,
    steps: usize,
    membership_grid: usize,
) -> Result<UgubReport> {
    let outcomes: Vec<UgubOutcome> = runs
        .par_iter()
        .map(|(x0, signal)| {
            let cutoff = 1e6 * (1.0 + x0.norm());
            let traj = trajectory(system, signal, x0, horizon, steps)?;
            let mut entry_time = None;
            let mut exits = Vec::new();
            let mut diverged = false;
            for (t, x) in traj.times.iter().zip(&traj.states) {
                if x.norm() > cutoff {
                    diverged = true;
                    break;
                }
                let inside = membership_v(system, cert, x, membership_grid)?.is_some();
                match (inside, entry_time) {
                    (true, None) => entry_time = Some(*t),
                    (false, Some(_)) => exits.push(*t),
                    _ => {}
                }
            }
            Ok(UgubOutcome {
                entry_time,
                exits,
                diverged,
            })
        })
        .collect::<Result<_>>()?;
    Ok(UgubReport { outcomes })
}

/// Least-squares exponential decay fit.
#[derive(Debug, Clone, Copy)]
pub struct DecayFit {
    /// Fitted rate: distance ≈ C·e^{−κ̂ t}.
    pub kappa: f64,
    /// Root-mean-square residual of the log-linear fit.
    pub residual: f64,
    /// Samples used.
    pub samples: usize,
}

/// Fit a decay rate to the pre-entry segments of an ensemble: regress
/// `log dist(x(t))` on `t` over all samples with distance above `floor` and
/// report the negated slope.
pub fn decay_estimate<F>(trajectories: &[Trajectory], dist: F, floor: f64) -> Result<DecayFit>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let mut ts = Vec::new();
    let mut logs = Vec::new();
    for traj in trajectories {
        for (t, x) in traj.times.iter().zip(&traj.states) {
            let d = dist(x);
            if d > floor {
                ts.push(*t);
                logs.push(d.ln());
            }
        }
    }
    if ts.len() < 2 {
        return Err(Error::InvalidParameter(
            "decay fit needs at least two samples outside the set".into(),
        ));
    }
    let n = ts.len() as f64;
    let tbar = ts.iter().sum::<f64>() / n;
    let lbar = logs.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (t, l) in ts.iter().zip(&logs) {
        sxx += (t - tbar) * (t - tbar);
        sxy += (t - tbar) * (l - lbar);
    }
    if sxx <= 0.0 {
        return Err(Error::InvalidParameter(
            "decay fit needs samples at distinct times".into(),
        ));
    }
    let slope = sxy / sxx;
    let mut ss = 0.0;
    for (t, l) in ts.iter().zip(&logs) {
        let pred = lbar + slope * (t - tbar);
        ss += (l - pred) * (l - pred);
    }
    Ok(DecayFit {
        kappa: -slope,
        residual: (ss / n).sqrt(),
        samples: ts.len(),
    })
}

/// Inner products ⟨outward normal, A_i x + b_i⟩ at boundary samples: all
/// non-positive is consistent with invariance; a positive value pinpoints
/// where the mode-`i` field exits the set.
#[derive(Debug, Clone)]
pub struct NagumoReport {
    /// `worst[i]` = the largest inner product over samples for mode i+1.
    pub worst: Vec<f64>,
    /// `(sample index, mode index 1-based, inner product)` for every
    /// positive product, sorted.
    pub outward: Vec<(usize, usize, f64)>,
}

impl NagumoReport {
    pub fn consistent_with_invariance(&self, tol: f64) -> bool {
        self.worst.iter().all(|&v| v <= tol)
    }
}

/// Evaluate the boundary tangency test at explicit `(point, outward normal)`
/// samples of a convex set's boundary.
pub fn nagumo_check(
    system: &SwitchedAffineSystem,
    boundary: &[(DVector<f64>, DVector<f64>)],
) -> NagumoReport {
    let m = system.modes.len();
    let mut worst = vec![f64::NEG_INFINITY; m];
    let mut outward = Vec::new();
    for (k, (x, normal)) in boundary.iter().enumerate() {
        for (i, mode) in system.modes.iter().enumerate() {
            let field = &mode.a * x + &mode.b;
            let ip = normal.dot(&field);
            if ip > worst[i] {
                worst[i] = ip;
            }
            if ip > 0.0 {
                outward.push((k, i + 1, ip));
            }
        }
    }
    if boundary.is_empty() {
        worst = vec![0.0; m];
    }
    outward.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    NagumoReport { worst, outward }
}
