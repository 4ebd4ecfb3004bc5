//! Batch front door: parse a system spec, run one analysis, write versioned
//! JSON/CSV artifacts.  Exit codes: 0 success, 1 infeasibility, 2 usage or
//! I/O trouble, 3 numeric failure.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use swinv::arbitrary::{self, EllipsoidSet};
use swinv::dwell::{self, RasterSpec};
use swinv::error::Error;
use swinv::io::{self, Report};
use swinv::pathfollow;
use swinv::sim;
use swinv::system::{SwitchedAffineSystem, SwitchingSignal};
use swinv::Result;

#[derive(Parser)]
#[command(
    name = "swinv",
    version,
    about = "Certified invariant sets and bounding regions for switched affine systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// System-spec JSON file (modes with row-major A and b).
    #[arg(long)]
    system: PathBuf,
    /// Output directory for artifacts.
    #[arg(short, long, default_value = "out")]
    output: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Trace-minimal invariant ellipsoid under arbitrary switching.
    InvariantEllipsoid {
        #[command(flatten)]
        common: Common,
        /// Certified decay rate κ of the common quadratic norm.
        #[arg(long)]
        kappa: f64,
        /// Level-set sample grid resolution (2-D systems, 0 to skip).
        #[arg(long, default_value_t = 120)]
        grid: usize,
    },
    /// Sum-of-squares invariant sublevel set under arbitrary switching.
    InvariantSos {
        #[command(flatten)]
        common: Common,
        /// Even total degree of the polynomial certificate.
        #[arg(long, default_value_t = 4)]
        degree: u32,
        /// Multiplier grid, comma-separated; the best level wins.
        #[arg(long, default_value = "1.0")]
        beta: String,
        /// Positivity margin ε of the certificate.
        #[arg(long, default_value_t = 1e-2)]
        epsilon: f64,
        /// Level-set sample grid resolution (2-D systems, 0 to skip).
        #[arg(long, default_value_t = 120)]
        grid: usize,
    },
    /// Invariant-ball radius bound from the decay rate and drift.
    TheoreticRadius {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        kappa: f64,
    },
    /// Minimum dwell time certified by quadratic norms (bisection).
    MinDwell {
        #[command(flatten)]
        common: Common,
        /// Bisection tolerance on τ.
        #[arg(long, default_value_t = 0.01)]
        tol: f64,
    },
    /// Dwell-time certificate: per-mode norms, coupling ellipsoids, safety
    /// radius, and bounding-region boundary data.
    DwellCert {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tau: f64,
        /// Boundary samples per safety ellipse.
        #[arg(long, default_value_t = 256)]
        samples: usize,
        /// Raster cells per axis for the bounding-region trace.
        #[arg(long, default_value_t = 160)]
        cells: usize,
        /// Also render the boundary polylines to an SVG.
        #[arg(long)]
        svg: bool,
    },
    /// Safety radius R_X at a given dwell time.
    SafetyRadius {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tau: f64,
    },
    /// Test a point against the bounding region of a stored certificate.
    Membership {
        #[command(flatten)]
        common: Common,
        /// Dwell-certificate JSON produced by `dwell-cert` or `path-follow`.
        #[arg(long)]
        cert: PathBuf,
        /// Point, comma-separated coordinates.
        #[arg(long, allow_hyphen_values = true)]
        point: String,
        /// Flow-time grid resolution of the membership test.
        #[arg(long, default_value_t = 64)]
        grid: usize,
    },
    /// Center optimization: sequence of linearized steps shrinking the
    /// coupling-ellipsoid objective.
    PathFollow {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tau: f64,
        /// Element-wise trust-region bound on each increment.
        #[arg(long, default_value_t = 0.1)]
        step: f64,
        /// Relative objective precision for convergence.
        #[arg(long, default_value_t = 1e-3)]
        precision: f64,
        #[arg(long, default_value_t = 200)]
        max_iterations: usize,
    },
    /// Certificate pipeline over a τ grid, with rasterized region areas on
    /// a shared grid.
    TauSweep {
        #[command(flatten)]
        common: Common,
        /// Dwell times, comma-separated.
        #[arg(long)]
        taus: String,
        /// Raster cells per axis (0 skips the area computation).
        #[arg(long, default_value_t = 160)]
        cells: usize,
    },
    /// Exact trajectories under random or constant switching signals.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// `random` or `constant:<mode>`.
        #[arg(long, default_value = "random")]
        signal: String,
        /// Dwell time of the random signal class (0 = arbitrary).
        #[arg(long, default_value_t = 0.0)]
        tau: f64,
        /// Number of trajectories.
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 20.0)]
        horizon: f64,
        /// Uniform sample grid intervals (switching instants are added).
        #[arg(long, default_value_t = 400)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Initial state, comma-separated (default: origin).
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<String>,
    },
    /// Sample the reachable set from the origin at a fixed time.
    Reachable {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        time: f64,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Monte-Carlo check of a stored certificate: invariance for
    /// ellipsoid/SOS sets, ultimate boundedness for dwell certificates.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Certificate JSON from invariant-ellipsoid, invariant-sos,
        /// dwell-cert, or path-follow.
        #[arg(long)]
        cert: PathBuf,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 20.0)]
        horizon: f64,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Boundary tangency test of the mode fields on a stored ellipsoid.
    Nagumo {
        #[command(flatten)]
        common: Common,
        /// Ellipsoid-certificate JSON.
        #[arg(long)]
        cert: PathBuf,
        /// Boundary samples (2-D systems).
        #[arg(long, default_value_t = 720)]
        samples: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
}

fn main() {
    if let Ok(threads) = std::env::var("SWINV_THREADS") {
        if let Ok(threads) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global();
        }
    }
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn parse_floats(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidParameter(format!("`{s}`: {e}")))
        })
        .collect()
}

fn parse_point(text: &str, dim: usize) -> Result<DVector<f64>> {
    let coords = parse_floats(text)?;
    if coords.len() != dim {
        return Err(Error::InvalidParameter(format!(
            "point has {} coordinates, system dimension is {dim}",
            coords.len()
        )));
    }
    Ok(DVector::from_vec(coords))
}

fn circle_directions(samples: usize) -> Vec<DVector<f64>> {
    (0..samples)
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / samples as f64;
            DVector::from_vec(vec![theta.cos(), theta.sin()])
        })
        .collect()
}

/// Level-set samples of a scalar field over a centered bounding box.
fn sample_levelset<F>(center: &DVector<f64>, halfwidth: f64, grid: usize, f: F) -> Vec<(f64, f64, f64)>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let mut out = Vec::with_capacity(grid * grid);
    for iy in 0..grid {
        for ix in 0..grid {
            let x = center[0] - halfwidth + 2.0 * halfwidth * ix as f64 / (grid - 1) as f64;
            let y = center[1] - halfwidth + 2.0 * halfwidth * iy as f64 / (grid - 1) as f64;
            let p = DVector::from_vec(vec![x, y]);
            out.push((x, y, f(&p)));
        }
    }
    out
}

/// Initial points on the boundary of a stored set plus dwell-respecting
/// random signals, one per point.
fn boundary_runs(
    boundary: Vec<DVector<f64>>,
    num_modes: usize,
    horizon: f64,
    tau: f64,
    seed: u64,
) -> Result<Vec<(DVector<f64>, SwitchingSignal)>> {
    boundary
        .into_iter()
        .enumerate()
        .map(|(k, x)| {
            let signal = sim::random_dwell_signal(num_modes, horizon, tau, seed ^ (k as u64))?;
            Ok((x, signal))
        })
        .collect()
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::InvariantEllipsoid { common, kappa, grid } => {
            let sys = io::read_system(&common.system)?;
            let set = arbitrary::ellipsoid_invariant(&sys, kappa)?;
            let trace = set.shape.trace();
            io::write_json(
                &common.output.join("ellipsoid.json"),
                &io::EllipsoidArtifact::from_set(&set),
            )?;
            if sys.dim == 2 && grid > 1 {
                let halfwidth = 1.5 * set.shape.trace().sqrt();
                let samples = sample_levelset(&set.center, halfwidth, grid, |x| {
                    set.level(x).unwrap_or(f64::NAN)
                });
                io::write_levelset_csv(&common.output.join("ellipsoid_levelset.csv"), &samples)?;
            }
            println!(
                "trace(S) = {:.6}, center = {:?}",
                trace,
                set.center.as_slice()
            );
            Ok(())
        }
        Command::InvariantSos {
            common,
            degree,
            beta,
            epsilon,
            grid,
        } => {
            let sys = io::read_system(&common.system)?;
            let betas = parse_floats(&beta)?;
            let (cert, profile) = arbitrary::sos_beta_search(&sys, degree, epsilon, &betas)?;
            io::write_json(&common.output.join("sos.json"), &io::SosArtifact::from_cert(&cert))?;
            io::write_json(
                &common.output.join("sos_report.json"),
                &Report::new("invariant-sos")
                    .set("degree", degree)
                    .set("epsilon", epsilon)
                    .set("level", cert.level)
                    .set("beta", cert.beta)
                    .set(
                        "profile",
                        profile
                            .entries
                            .iter()
                            .map(|e| serde_json::json!({"beta": e.beta, "level": e.level}))
                            .collect::<Vec<_>>(),
                    ),
            )?;
            if sys.dim == 2 && grid > 1 {
                let halfwidth = 2.0;
                let origin = DVector::zeros(2);
                let samples = sample_levelset(&origin, halfwidth, grid, |x| cert.eval(x));
                io::write_levelset_csv(&common.output.join("sos_levelset.csv"), &samples)?;
            }
            println!("level r = {:.6} at degree {degree}, beta = {}", cert.level, cert.beta);
            Ok(())
        }
        Command::TheoreticRadius { common, kappa } => {
            let sys = io::read_system(&common.system)?;
            let set = arbitrary::ellipsoid_invariant(&sys, kappa)?;
            let radius = arbitrary::theoretic_radius(&sys, &set.shape, &set.center, kappa)?;
            io::write_json(
                &common.output.join("theoretic_radius.json"),
                &Report::new("theoretic-radius")
                    .set("kappa", kappa)
                    .set("radius", radius)
                    .set("center", set.center.as_slice()),
            )?;
            println!("invariant-ball radius R = {radius:.6} at kappa = {kappa}");
            Ok(())
        }
        Command::MinDwell { common, tol } => {
            let sys = io::read_system(&common.system)?;
            let tau_min = dwell::min_dwell_time(&sys, tol)?;
            io::write_json(
                &common.output.join("min_dwell.json"),
                &Report::new("min-dwell").set("tol", tol).set("tau_min", tau_min),
            )?;
            println!("tau_min = {tau_min:.4} (tol {tol})");
            Ok(())
        }
        Command::DwellCert {
            common,
            tau,
            samples,
            cells,
            svg,
        } => {
            let sys = io::read_system(&common.system)?;
            let cert = dwell::dwell_certificate(&sys, tau, None)?;
            io::write_json(
                &common.output.join("dwell.json"),
                &io::DwellArtifact::from_cert(&cert),
            )?;
            if sys.dim == 2 && cells > 1 {
                let spec = RasterSpec::covering(&cert, cells);
                let polylines = dwell::region_boundaries(&sys, &cert, samples, &spec)?;
                io::write_polyline_csv(&common.output.join("regions.csv"), &polylines)?;
                if svg {
                    io::write_atomic(
                        &common.output.join("regions.svg"),
                        io::polylines_to_svg(&polylines).as_bytes(),
                    )?;
                }
            }
            println!(
                "R_X = {:.4}, objective = {:.6e}, kappa_tilde = {:.4}",
                cert.r_x, cert.objective, cert.kappa_tilde
            );
            Ok(())
        }
        Command::SafetyRadius { common, tau } => {
            let sys = io::read_system(&common.system)?;
            let cert = dwell::dwell_certificate(&sys, tau, None)?;
            io::write_json(
                &common.output.join("safety_radius.json"),
                &Report::new("safety-radius")
                    .set("tau", tau)
                    .set("r_x", cert.r_x)
                    .set("objective", cert.objective),
            )?;
            println!("R_X = {:.4} at tau = {tau}", cert.r_x);
            Ok(())
        }
        Command::Membership {
            common,
            cert,
            point,
            grid,
        } => {
            let sys = io::read_system(&common.system)?;
            let artifact: io::DwellArtifact = io::read_json(&cert)?;
            let cert = artifact.to_cert()?;
            let x = parse_point(&point, sys.dim)?;
            let witness = dwell::membership_v(&sys, &cert, &x, grid)?;
            let mut report = Report::new("membership")
                .set("point", x.as_slice())
                .set("inside", witness.is_some());
            if let Some(w) = &witness {
                report = report.set(
                    "witness",
                    serde_json::json!({"i": w.i, "j": w.j, "t": w.t}),
                );
            }
            io::write_json(&common.output.join("membership.json"), &report)?;
            println!(
                "{}",
                if witness.is_some() {
                    "inside the bounding region"
                } else {
                    "outside the bounding region"
                }
            );
            Ok(())
        }
        Command::PathFollow {
            common,
            tau,
            step,
            precision,
            max_iterations,
        } => {
            let sys = io::read_system(&common.system)?;
            let result = pathfollow::optimize_centers(&sys, tau, step, precision, max_iterations)?;
            io::write_json(
                &common.output.join("dwell.json"),
                &io::DwellArtifact::from_cert(&result.certificate),
            )?;
            io::write_iteration_csv(
                &common.output.join("iterations.csv"),
                &result.objective_history,
                &result.center_history,
            )?;
            io::write_json(
                &common.output.join("path_follow.json"),
                &Report::new("path-follow")
                    .set("tau", tau)
                    .set("iterations", result.iterations)
                    .set("objective", result.certificate.objective)
                    .set(
                        "centers",
                        result
                            .certificate
                            .centers
                            .iter()
                            .map(|c| c.as_slice().to_vec())
                            .collect::<Vec<_>>(),
                    ),
            )?;
            println!(
                "converged in {} iterations, objective = {:.6e}",
                result.iterations, result.certificate.objective
            );
            for (i, c) in result.certificate.centers.iter().enumerate() {
                println!("c_{} = {:?}", i + 1, c.as_slice());
            }
            Ok(())
        }
        Command::TauSweep { common, taus, cells } => {
            let sys = io::read_system(&common.system)?;
            let taus = parse_floats(&taus)?;
            let rows = dwell::tau_sweep(&sys, &taus)?;
            // areas on one shared grid so they are comparable across τ
            let mut areas: Vec<Option<f64>> = vec![None; rows.len()];
            if sys.dim == 2 && cells > 1 {
                let mut certs = Vec::new();
                for row in &rows {
                    certs.push(if row.feasible && row.error.is_none() {
                        Some(dwell::dwell_certificate(&sys, row.tau, None)?)
                    } else {
                        None
                    });
                }
                let mut shared: Option<RasterSpec> = None;
                for cert in certs.iter().flatten() {
                    let s = RasterSpec::covering(cert, cells);
                    shared = Some(match shared {
                        None => s,
                        Some(acc) => RasterSpec {
                            x_min: acc.x_min.min(s.x_min),
                            x_max: acc.x_max.max(s.x_max),
                            y_min: acc.y_min.min(s.y_min),
                            y_max: acc.y_max.max(s.y_max),
                            cells,
                            time_grid: acc.time_grid.max(s.time_grid),
                        },
                    });
                }
                if let Some(spec) = &shared {
                    for (slot, cert) in areas.iter_mut().zip(&certs) {
                        if let Some(cert) = cert {
                            *slot = Some(dwell::rasterize_region(&sys, cert, spec)?.area());
                        }
                    }
                }
            }
            let entries: Vec<serde_json::Value> = rows
                .iter()
                .zip(&areas)
                .map(|(row, area)| {
                    serde_json::json!({
                        "tau": row.tau,
                        "feasible": row.feasible,
                        "r_x": row.r_x,
                        "objective": row.objective,
                        "area": area,
                        "error": row.error,
                    })
                })
                .collect();
            io::write_json(
                &common.output.join("tau_sweep.json"),
                &Report::new("tau-sweep").set("rows", entries),
            )?;
            for (row, area) in rows.iter().zip(&areas) {
                println!(
                    "tau = {:>7.3}: feasible = {}, R_X = {}, area = {}",
                    row.tau,
                    row.feasible,
                    row.r_x.map_or("-".into(), |v| format!("{v:.4}")),
                    area.map_or("-".into(), |v| format!("{v:.4}")),
                );
            }
            Ok(())
        }
        Command::Simulate {
            common,
            signal,
            tau,
            n,
            horizon,
            steps,
            seed,
            x0,
        } => {
            let sys = io::read_system(&common.system)?;
            let x0 = match &x0 {
                Some(text) => parse_point(text, sys.dim)?,
                None => DVector::zeros(sys.dim),
            };
            for k in 0..n {
                let sig = if let Some(mode) = signal.strip_prefix("constant:") {
                    let mode: usize = mode
                        .parse()
                        .map_err(|_| Error::InvalidParameter(format!("bad mode `{mode}`")))?;
                    if mode == 0 || mode > sys.modes.len() {
                        return Err(Error::InvalidParameter(format!("mode {mode} out of range")));
                    }
                    SwitchingSignal::constant(mode)
                } else if signal == "random" {
                    sim::random_dwell_signal(sys.modes.len(), horizon, tau, seed.wrapping_add(k as u64))?
                } else {
                    return Err(Error::InvalidParameter(format!(
                        "unknown signal kind `{signal}` (use `random` or `constant:<mode>`)"
                    )));
                };
                let traj = sim::trajectory(&sys, &sig, &x0, horizon, steps)?;
                io::write_trajectory_csv(&common.output.join(format!("traj_{k:03}.csv")), &traj)?;
            }
            println!("wrote {n} trajectories to {}", common.output.display());
            Ok(())
        }
        Command::Reachable { common, time, n, seed } => {
            let sys = io::read_system(&common.system)?;
            let cloud = sim::reachable_sample(&sys, time, n, seed)?;
            let mut out = String::new();
            for k in 1..=sys.dim {
                if k > 1 {
                    out.push(',');
                }
                out.push_str(&format!("x{k}"));
            }
            out.push('\n');
            for x in &cloud {
                let row: Vec<String> = x.iter().map(|v| format!("{v:.16e}")).collect();
                out.push_str(&row.join(","));
                out.push('\n');
            }
            io::write_atomic(&common.output.join("reachable.csv"), out.as_bytes())?;
            println!("sampled {} reachable points at t = {time}", cloud.len());
            Ok(())
        }
        Command::Verify {
            common,
            cert,
            n,
            horizon,
            steps,
            seed,
            tol,
        } => {
            let sys = io::read_system(&common.system)?;
            let value: serde_json::Value = io::read_json(&cert)?;
            let kind = value
                .get("kind")
                .and_then(|k| k.as_str())
                .ok_or_else(|| Error::InvalidParameter("certificate lacks a `kind` field".into()))?
                .to_string();
            let report = match kind.as_str() {
                "invariant-ellipsoid" => {
                    let set = serde_json::from_value::<io::EllipsoidArtifact>(value)?.to_set()?;
                    verify_ellipsoid(&sys, &set, n, horizon, steps, seed, tol)?
                }
                "invariant-sos" => {
                    let cert = serde_json::from_value::<io::SosArtifact>(value)?.to_cert();
                    verify_sos(&sys, &cert, n, horizon, steps, seed, tol)?
                }
                "dwell-certificate" => {
                    let cert = serde_json::from_value::<io::DwellArtifact>(value)?.to_cert()?;
                    verify_dwell(&sys, &cert, n, horizon, steps, seed)?
                }
                other => {
                    return Err(Error::InvalidParameter(format!(
                        "cannot verify certificate kind `{other}`"
                    )))
                }
            };
            io::write_json(&common.output.join("verify.json"), &report)?;
            Ok(())
        }
        Command::Nagumo {
            common,
            cert,
            samples,
            tol,
        } => {
            let sys = io::read_system(&common.system)?;
            let artifact: io::EllipsoidArtifact = io::read_json(&cert)?;
            let set = artifact.to_set()?;
            if sys.dim != 2 {
                return Err(Error::InvalidParameter(
                    "boundary sampling is only defined for planar systems".into(),
                ));
            }
            let sinv = swinv::numerics::spd_inverse(&set.shape)?;
            let boundary: Vec<(DVector<f64>, DVector<f64>)> = set
                .boundary_points(&circle_directions(samples))?
                .into_iter()
                .map(|x| {
                    let normal = &sinv * (&x - &set.center);
                    (x, normal)
                })
                .collect();
            let report = sim::nagumo_check(&sys, &boundary);
            let ok = report.consistent_with_invariance(tol);
            io::write_json(
                &common.output.join("nagumo.json"),
                &Report::new("nagumo")
                    .set("samples", samples)
                    .set("tol", tol)
                    .set("consistent", ok)
                    .set("worst_products", &report.worst)
                    .set("outward_count", report.outward.len()),
            )?;
            println!(
                "{} (worst inner products per mode: {:?})",
                if ok { "consistent with invariance" } else { "outward field detected" },
                report.worst
            );
            Ok(())
        }
    }
}

fn verify_ellipsoid(
    sys: &SwitchedAffineSystem,
    set: &EllipsoidSet,
    n: usize,
    horizon: f64,
    steps: usize,
    seed: u64,
    tol: f64,
) -> Result<Report> {
    if sys.dim != 2 {
        return Err(Error::InvalidParameter(
            "verification sampling is only defined for planar systems".into(),
        ));
    }
    let boundary = set.boundary_points(&circle_directions(n))?;
    let runs = boundary_runs(boundary, sys.modes.len(), horizon, 0.0, seed)?;
    let report = sim::verify_invariance(sys, &runs, horizon, steps, |x| {
        set.level(x).map_or(f64::INFINITY, |v| v - 1.0)
    }, tol)?;
    println!(
        "{} trajectories, {} violations, max excursion {:.3e}",
        report.tested, report.violations, report.max_excursion
    );
    Ok(Report::new("verify-invariance")
        .set("certificate", "invariant-ellipsoid")
        .set("tested", report.tested)
        .set("violations", report.violations)
        .set("max_excursion", report.max_excursion))
}

fn verify_sos(
    sys: &SwitchedAffineSystem,
    cert: &swinv::arbitrary::SosCertificate,
    n: usize,
    horizon: f64,
    steps: usize,
    seed: u64,
    tol: f64,
) -> Result<Report> {
    if sys.dim != 2 {
        return Err(Error::InvalidParameter(
            "verification sampling is only defined for planar systems".into(),
        ));
    }
    // boundary by radial bisection from the origin (V(0) = 0 ≤ r)
    let boundary: Vec<DVector<f64>> = circle_directions(n)
        .into_iter()
        .map(|u| {
            let mut lo = 0.0;
            let mut hi = 1.0;
            while cert.eval(&(&u * hi)) < cert.level && hi < 1e6 {
                hi *= 2.0;
            }
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if cert.eval(&(&u * mid)) < cert.level {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            &u * lo
        })
        .collect();
    let runs = boundary_runs(boundary, sys.modes.len(), horizon, 0.0, seed)?;
    let report = sim::verify_invariance(sys, &runs, horizon, steps, |x| cert.eval(x) - cert.level, tol)?;
    println!(
        "{} trajectories, {} violations, max excursion {:.3e}",
        report.tested, report.violations, report.max_excursion
    );
    Ok(Report::new("verify-invariance")
        .set("certificate", "invariant-sos")
        .set("tested", report.tested)
        .set("violations", report.violations)
        .set("max_excursion", report.max_excursion))
}

fn verify_dwell(
    sys: &SwitchedAffineSystem,
    cert: &swinv::dwell::DwellCertificate,
    n: usize,
    horizon: f64,
    steps: usize,
    seed: u64,
) -> Result<Report> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    // start well outside the safety sets: a box several radii wide around
    // the certificate centers
    let spread = cert
        .centers
        .iter()
        .map(|c| c.norm())
        .fold(cert.r_x, f64::max);
    let runs: Vec<(DVector<f64>, SwitchingSignal)> = (0..n)
        .map(|k| {
            let x0 = DVector::from_fn(sys.dim, |_, _| rng.gen_range(-4.0 * spread..4.0 * spread));
            let signal =
                sim::random_dwell_signal(sys.modes.len(), horizon, cert.tau, seed ^ (k as u64))?;
            Ok((x0, signal))
        })
        .collect::<Result<_>>()?;
    let report = sim::verify_ugub(sys, cert, &runs, horizon, steps, 48)?;
    let entered = report.outcomes.iter().filter(|o| o.entry_time.is_some()).count();
    let diverged = report.outcomes.iter().filter(|o| o.diverged).count();
    println!(
        "{} trajectories, {} entered the bounding region, {} post-entry exits, {} diverged",
        report.outcomes.len(),
        entered,
        report.post_entry_exits(),
        diverged
    );
    Ok(Report::new("verify-ugub")
        .set("certificate", "dwell-certificate")
        .set("tested", report.outcomes.len())
        .set("entered", entered)
        .set("post_entry_exits", report.post_entry_exits())
        .set("diverged", diverged)
        .set("all_entered", report.all_entered()))
}
