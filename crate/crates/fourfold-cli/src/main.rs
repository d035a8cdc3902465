//! Command-line driver for the fourfold geometry engine.
//!
//! One binary, seven subcommands: pointwise curvature reports, Aubin
//! deformation cross-checks, conformal covariance sampling, principal
//! eigenpair classification, constant-curvature normalization, the full
//! ball-deformation construction, and a seeded verification suite.
//!
//! Every run emits a single JSON summary (stdout by default) carrying a
//! schema version and a conventions block, so downstream tooling never has
//! to guess index or sign conventions. Identical config and seed produce
//! byte-identical output; there are no timestamps.
//!
//! Exit codes: 0 success, 2 hypothesis failure (for example Φ ≥ 0 or a
//! residual over tolerance), 1 internal error.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use fourfold::aubin::{
    conformal_error_scaling_check, deform_metric, deformed_curvature_closed, DeformationSpec,
};
use fourfold::catalog::{metric_by_name, scalar_by_name, METRIC_NAMES};
use fourfold::chart::{make_chart, ChartSpec, Topology};
use fourfold::conformal::{
    bach_covariance_residual, covariance_residual, modified_laplacian_apply, product_field,
    ConformalFactor,
};
use fourfold::curvature::{bach_ricci_form, bach_weyl_form, curvature_bundle, tensor_norm2};
use fourfold::error::GeomError;
use fourfold::jet::ScalarField;
use fourfold::pipeline::{
    bump_profile, radial_factor, radial_profile, run_construction, verify_profile,
    ConstructionParams,
};
use fourfold::spectral::{
    dense_principal_eigenvalue, minimize_and_normalize, sign_trichotomy, TrichotomySign,
};
use fourfold::taylor::Taylor;
use fourfold::tol;

const SCHEMA_VERSION: &str = "1.0";
const TAU: f64 = std::f64::consts::TAU;

#[derive(Parser, Debug)]
#[command(
    name = "fourfold",
    version,
    about = "Curvature, Aubin deformation, and scalar-Bach normalization on closed 4-manifolds"
)]
struct Cli {
    /// TOML config file; explicit flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// JSON summary destination; "-" writes to stdout.
    #[arg(long, global = true)]
    out: Option<String>,
    /// Seed for randomized sampling; fixed seed means reproducible output.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Thread budget for per-ball work units.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Pointwise curvature bundle: scalar, Ricci norm, Bach by both formulas.
    Curvature {
        #[arg(long, default_value = "euclidean")]
        metric: String,
        /// Catalog parameters for the metric (comma list).
        #[arg(long, default_value = "")]
        metric_params: String,
        /// Explicit evaluation points "x0,x1,x2,x3"; repeatable.
        #[arg(long)]
        at: Vec<String>,
        /// Number of seeded random points when --at is absent.
        #[arg(long, default_value_t = 20)]
        points: usize,
    },
    /// Aubin deformation g + df⊗df: closed-form curvature against direct jets.
    Deform {
        #[arg(long, default_value = "euclidean")]
        metric: String,
        #[arg(long, default_value = "")]
        metric_params: String,
        /// Catalog scalar profile for f.
        #[arg(long, default_value = "sin-sum")]
        f: String,
        #[arg(long, default_value = "")]
        f_params: String,
        #[arg(long, default_value_t = 1.0)]
        k: f64,
        #[arg(long, default_value_t = 20)]
        points: usize,
    },
    /// Conformal covariance of the Bach tensor and the modified Laplacian.
    Conformal {
        #[arg(long, default_value = "bach-positive-torus")]
        metric: String,
        #[arg(long, default_value = "")]
        metric_params: String,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
    },
    /// Principal eigenpair and sign trichotomy of −6Δ + S + t|B|^{1/2}.
    Eigen {
        #[arg(long, default_value = "bach-positive-torus")]
        metric: String,
        #[arg(long, default_value = "")]
        metric_params: String,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        /// Periodic grid resolution "n0,n1,n2,n3".
        #[arg(long, default_value = "6,6,6,6")]
        resolution: String,
        /// Cross-check μ against a dense solve (small grids only).
        #[arg(long, default_value_t = false)]
        dense: bool,
    },
    /// Normalize a negative-class metric to S + t|B|^{1/2} ≡ −1.
    Normalize {
        #[arg(long, default_value = "shear-torus")]
        metric: String,
        #[arg(long, default_value = "")]
        metric_params: String,
        #[arg(long, default_value_t = 0.02)]
        t: f64,
        #[arg(long, default_value = "6,6,6,6")]
        resolution: String,
    },
    /// Full ball-deformation construction driving Φ_M < 0.
    Construct {
        #[arg(long, default_value = "shear-torus")]
        metric: String,
        #[arg(long, default_value = "")]
        metric_params: String,
        #[arg(long, default_value_t = 0.02)]
        t: f64,
        /// Number of deformation balls; 0 evaluates the base total only.
        #[arg(long, default_value_t = 1)]
        balls: usize,
        #[arg(long, default_value_t = 0.25)]
        radius: f64,
        /// Well depth multiplier ν.
        #[arg(long, default_value_t = 1.0)]
        nu: f64,
        /// Profile floor offset δ (well bottom sits at 1 − δ... (1 − δ)).
        #[arg(long, default_value_t = 0.2)]
        delta: f64,
        /// Candidate deformation scales, comma list.
        #[arg(long, default_value = "0.7,1.5,4.0")]
        k_candidates: String,
        /// First ball center "x0,x1,x2,x3".
        #[arg(long, default_value = "0.9,1.1,1.3,0.7")]
        center: String,
        /// Gauss-Legendre points per radial panel on the ball grids.
        #[arg(long, default_value_t = 16)]
        ball_panels: usize,
        /// Angular resolution "ns,nxi1,nxi2" on the ball grids.
        #[arg(long, default_value = "4,12,12")]
        ball_angular: String,
        /// Periodic box resolution for the global assembly.
        #[arg(long, default_value = "8,8,8,8")]
        box_resolution: String,
        /// CSV destination for radial profiles of |B̄|, S̄, F^B.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Sample count for the radial CSV.
        #[arg(long, default_value_t = 64)]
        profile_samples: usize,
    },
    /// Seeded verification suites; exit 2 if any residual exceeds tolerance.
    Verify {
        /// One of: bach-forms, covariance, aubin, scaling, profile,
        /// trichotomy, all.
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 8)]
        trials: usize,
    },
}

/// Tolerances used for the CLI's own pass/fail judgments. Library-internal
/// gates keep their compiled defaults; these govern the report verdicts.
#[derive(Serialize, Deserialize, Clone, Debug)]
#[serde(default)]
struct Tolerances {
    cross: f64,
    alg: f64,
    aubin: f64,
    norm: f64,
    bach_floor: f64,
    eig: f64,
    zero: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            cross: tol::CROSS_TOL,
            alg: tol::ALG_TOL,
            aubin: 1e-8,
            norm: tol::NORM_TOL,
            bach_floor: tol::BACH_FLOOR,
            eig: tol::EIG_TOL,
            zero: tol::ZERO_TOL,
        }
    }
}

impl Tolerances {
    /// Environment overrides: FOURFOLD_CROSS_TOL, FOURFOLD_ALG_TOL,
    /// FOURFOLD_AUBIN_TOL, FOURFOLD_NORM_TOL, FOURFOLD_BACH_FLOOR,
    /// FOURFOLD_EIG_TOL, FOURFOLD_ZERO_TOL.
    fn apply_env(&mut self) {
        let read = |name: &str, slot: &mut f64| {
            if let Ok(v) = std::env::var(name) {
                if let Ok(x) = v.parse::<f64>() {
                    if x > 0.0 {
                        *slot = x;
                    }
                }
            }
        };
        read("FOURFOLD_CROSS_TOL", &mut self.cross);
        read("FOURFOLD_ALG_TOL", &mut self.alg);
        read("FOURFOLD_AUBIN_TOL", &mut self.aubin);
        read("FOURFOLD_NORM_TOL", &mut self.norm);
        read("FOURFOLD_BACH_FLOOR", &mut self.bach_floor);
        read("FOURFOLD_EIG_TOL", &mut self.eig);
        read("FOURFOLD_ZERO_TOL", &mut self.zero);
    }
}

/// Optional TOML config: top-level seed/out/threads plus a [tolerances]
/// table. Flags override the file; the file overrides the environment.
#[derive(Deserialize, Default, Debug)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    out: Option<String>,
    threads: Option<usize>,
    #[serde(default)]
    tolerances: Option<TolerancePatch>,
}

#[derive(Deserialize, Default, Debug)]
#[serde(deny_unknown_fields)]
struct TolerancePatch {
    cross: Option<f64>,
    alg: Option<f64>,
    aubin: Option<f64>,
    norm: Option<f64>,
    bach_floor: Option<f64>,
    eig: Option<f64>,
    zero: Option<f64>,
}

/// Conventions echoed into every artifact; convention mismatches are the
/// dominant failure mode when results cross tool boundaries.
fn conventions() -> Value {
    json!({
        "signature": "riemannian (+,+,+,+)",
        "christoffel": "Γ^k_ij = ½ g^{kl}(∂_i g_jl + ∂_j g_il − ∂_l g_ij)",
        "ricci": "Ric_jk = R^m_mjk; unit round S⁴ has scalar curvature 12",
        "bach": "Ricci form; cross-checked against the Weyl form ∇^k∇^l W + ½ Ric·W",
        "conformal": "power convention g̃ = u²g, u > 0; exponential g̃ = e^{2u}g where stated",
        "mixed_curvature": "F^B = S + t·|B|^{1/2} with the pointwise tensor norm",
        "units": "coordinate lengths; curvature scales as inverse length squared",
    })
}

#[derive(Serialize)]
struct Summary {
    schema_version: &'static str,
    command: String,
    conventions: Value,
    seed: u64,
    threads: usize,
    tolerances: Tolerances,
    status: String,
    failure: Option<Value>,
    result: Value,
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    let file_cfg = match cli.config.as_ref() {
        Some(path) => match fs::read_to_string(path) {
            Ok(text) => match toml::from_str::<FileConfig>(&text) {
                Ok(cfg) => cfg,
                Err(e) => {
                    eprintln!("config parse error in {}: {e}", path.display());
                    return ExitCode::from(1);
                }
            },
            Err(e) => {
                eprintln!("cannot read config {}: {e}", path.display());
                return ExitCode::from(1);
            }
        },
        None => FileConfig::default(),
    };

    let mut tols = Tolerances::default();
    tols.apply_env();
    if let Some(patch) = &file_cfg.tolerances {
        let take = |slot: &mut f64, v: Option<f64>| {
            if let Some(x) = v {
                if x > 0.0 {
                    *slot = x;
                }
            }
        };
        take(&mut tols.cross, patch.cross);
        take(&mut tols.alg, patch.alg);
        take(&mut tols.aubin, patch.aubin);
        take(&mut tols.norm, patch.norm);
        take(&mut tols.bach_floor, patch.bach_floor);
        take(&mut tols.eig, patch.eig);
        take(&mut tols.zero, patch.zero);
    }

    let seed = cli.seed.or(file_cfg.seed).unwrap_or(7);
    let out = cli.out.or(file_cfg.out).unwrap_or_else(|| "-".into());
    let threads = cli.threads.or(file_cfg.threads).unwrap_or(1);
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();

    let command_name = command_name(&cli.command);
    let (result, status, failure, code) = match dispatch(&cli.command, seed, &tols) {
        Ok((value, pass)) => {
            if pass {
                (value, "ok".to_string(), None, 0u8)
            } else {
                (
                    value,
                    "hypothesis-failed".to_string(),
                    Some(json!({"kind": "tolerance-exceeded",
                                "detail": "a reported residual or verdict is out of contract"})),
                    2u8,
                )
            }
        }
        Err(e) => {
            let (kind, code) = classify(&e);
            (
                Value::Null,
                if code == 2 { "hypothesis-failed".into() } else { "error".into() },
                Some(json!({"kind": kind, "detail": e.to_string()})),
                code,
            )
        }
    };

    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        command: command_name,
        conventions: conventions(),
        seed,
        threads,
        tolerances: tols,
        status,
        failure,
        result,
    };
    let text = match serde_json::to_string_pretty(&summary) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("serialization error: {e}");
            return ExitCode::from(1);
        }
    };
    if out == "-" {
        println!("{text}");
    } else if let Err(e) = fs::write(&out, text + "\n") {
        eprintln!("cannot write {out}: {e}");
        return ExitCode::from(1);
    }
    ExitCode::from(code)
}

fn command_name(c: &Command) -> String {
    match c {
        Command::Curvature { .. } => "curvature",
        Command::Deform { .. } => "deform",
        Command::Conformal { .. } => "conformal",
        Command::Eigen { .. } => "eigen",
        Command::Normalize { .. } => "normalize",
        Command::Construct { .. } => "construct",
        Command::Verify { .. } => "verify",
    }
    .into()
}

/// Hypothesis-level failures exit 2; everything else is an internal error.
fn classify(e: &GeomError) -> (&'static str, u8) {
    match e {
        GeomError::PhiNotNegative { .. } => ("phi-not-negative", 2),
        GeomError::BachVanishes { .. } => ("bach-vanishes", 2),
        GeomError::AllCandidatesDegenerate => ("all-candidates-degenerate", 2),
        GeomError::HypothesisFailed(_) => ("hypothesis-failed", 2),
        GeomError::PositivityLost { .. } => ("positivity-lost", 2),
        GeomError::DescentStalled => ("descent-stalled", 2),
        GeomError::NoConvergence { .. } => ("no-convergence", 2),
        GeomError::FactorNotPositive { .. } => ("factor-not-positive", 2),
        GeomError::InfeasibleDelta { .. } => ("infeasible-delta", 2),
        _ => ("internal", 1),
    }
}

fn dispatch(cmd: &Command, seed: u64, tols: &Tolerances) -> Result<(Value, bool), GeomError> {
    match cmd {
        Command::Curvature { metric, metric_params, at, points } => {
            cmd_curvature(metric, metric_params, at, *points, seed, tols)
        }
        Command::Deform { metric, metric_params, f, f_params, k, points } => {
            cmd_deform(metric, metric_params, f, f_params, *k, *points, seed, tols)
        }
        Command::Conformal { metric, metric_params, trials, t } => {
            cmd_conformal(metric, metric_params, *trials, *t, seed, tols)
        }
        Command::Eigen { metric, metric_params, t, resolution, dense } => {
            cmd_eigen(metric, metric_params, *t, resolution, *dense, tols)
        }
        Command::Normalize { metric, metric_params, t, resolution } => {
            cmd_normalize(metric, metric_params, *t, resolution, tols)
        }
        Command::Construct {
            metric,
            metric_params,
            t,
            balls,
            radius,
            nu,
            delta,
            k_candidates,
            center,
            ball_panels,
            ball_angular,
            box_resolution,
            csv,
            profile_samples,
        } => cmd_construct(
            metric,
            metric_params,
            *t,
            *balls,
            *radius,
            *nu,
            *delta,
            k_candidates,
            center,
            *ball_panels,
            ball_angular,
            box_resolution,
            csv.as_deref(),
            *profile_samples,
        ),
        Command::Verify { suite, trials } => cmd_verify(suite, *trials, seed, tols),
    }
}

fn parse_f64_list(text: &str) -> Result<Vec<f64>, GeomError> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| GeomError::InvalidChartSpec(format!("bad number '{s}' in list")))
        })
        .collect()
}

fn parse_usize_list(text: &str) -> Result<Vec<usize>, GeomError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| GeomError::InvalidChartSpec(format!("bad count '{s}' in list")))
        })
        .collect()
}

fn parse_point(text: &str) -> Result<[f64; 4], GeomError> {
    let v = parse_f64_list(text)?;
    if v.len() != 4 {
        return Err(GeomError::InvalidChartSpec(format!(
            "point '{text}' needs exactly 4 coordinates"
        )));
    }
    Ok([v[0], v[1], v[2], v[3]])
}

fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 4]> {
    (0..n)
        .map(|_| {
            [
                rng.gen_range(0.0..TAU),
                rng.gen_range(0.0..TAU),
                rng.gen_range(0.0..TAU),
                rng.gen_range(0.0..TAU),
            ]
        })
        .collect()
}

/// Positive analytic conformal factor 1 + a·sin(x¹+φ₁)cos x² + b·sin(x³+x⁴+φ₂)
/// with |a| + |b| < 0.7, seeded per trial.
fn random_positive_factor(rng: &mut ChaCha8Rng) -> ScalarField {
    let a = rng.gen_range(0.05..0.34);
    let b = rng.gen_range(0.05..0.34);
    let p1 = rng.gen_range(0.0..TAU);
    let p2 = rng.gen_range(0.0..TAU);
    ScalarField::analytic("seeded-factor", 4, move |x| {
        let order = x[0].order();
        let mut s1 = x[1].clone();
        s1.add_assign_const(p1);
        let mut s2 = x[2].add(&x[3]);
        s2.add_assign_const(p2);
        let mut out = Taylor::constant(4, order, 1.0);
        out = out.add(&s1.sin().mul(&x[2].cos()).scale(a));
        out.add(&s2.sin().scale(b))
    })
}

fn cmd_curvature(
    metric: &str,
    metric_params: &str,
    at: &[String],
    points: usize,
    seed: u64,
    tols: &Tolerances,
) -> Result<(Value, bool), GeomError> {
    let g = metric_by_name(metric, &parse_f64_list(metric_params)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<[f64; 4]> = if at.is_empty() {
        random_points(&mut rng, points)
            .into_iter()
            .map(|mut p| {
                p.iter_mut().skip(g.dim).for_each(|c| *c = 0.0);
                p
            })
            .collect()
    } else {
        at.iter().map(|s| parse_point(s)).collect::<Result<_, _>>()?
    };

    let mut rows = Vec::new();
    let mut max_rel = 0.0f64;
    for &p in &pts {
        let b = curvature_bundle(&g.jet(p, 4)?)?;
        let d = b.dim;
        let ginv: Vec<f64> = b.ginv.iter().map(|t| t.value()).collect();
        let ric: Vec<f64> = b.ricci.iter().map(|t| t.value()).collect();
        let ricci_norm = tensor_norm2(&ric, 2, d, &ginv).sqrt();
        let mut row = json!({
            "at": p.to_vec(),
            "scalar": b.scalar.value(),
            "ricci_norm": ricci_norm,
        });
        if d == 4 {
            let br = bach_ricci_form(&b)?;
            let bw = bach_weyl_form(&b)?;
            let mut diff = 0.0f64;
            for i in 0..4 {
                for j in 0..4 {
                    diff = diff.max((br.value(i, j) - bw.value(i, j)).abs());
                }
            }
            let rel = diff / (1.0 + br.norm());
            max_rel = max_rel.max(rel);
            row["bach_norm"] = json!(br.norm());
            row["bach_forms_rel_diff"] = json!(rel);
        }
        rows.push(row);
    }
    let pass = max_rel <= tols.cross;
    Ok((
        json!({
            "metric": metric,
            "points": rows,
            "max_bach_forms_rel_diff": max_rel,
            "pass": pass,
        }),
        pass,
    ))
}

#[allow(clippy::too_many_arguments)]
fn cmd_deform(
    metric: &str,
    metric_params: &str,
    f: &str,
    f_params: &str,
    k: f64,
    points: usize,
    seed: u64,
    tols: &Tolerances,
) -> Result<(Value, bool), GeomError> {
    let g = metric_by_name(metric, &parse_f64_list(metric_params)?)?;
    let field = scalar_by_name(f, &parse_f64_list(f_params)?)?;
    let spec = DeformationSpec::new(field, k, "cli-deform")?;
    let gbar = deform_metric(&g, &spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = random_points(&mut rng, points);

    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for &p in &pts {
        let closed = deformed_curvature_closed(&g, &spec, p)?;
        let direct = curvature_bundle(&gbar.jet(p, 2)?)?;
        let scal_rel = (closed.scalar_closed - direct.scalar.value()).abs()
            / (1.0 + direct.scalar.value().abs());
        let mut ric_rel = 0.0f64;
        let mut scale = 0.0f64;
        for (c, t) in closed.ricci_closed.iter().zip(&direct.ricci) {
            ric_rel = ric_rel.max((c - t.value()).abs());
            scale = scale.max(t.value().abs());
        }
        let ric_rel = ric_rel / (1.0 + scale);
        worst = worst.max(scal_rel).max(ric_rel);
        rows.push(json!({
            "at": p.to_vec(),
            "scalar_closed": closed.scalar_closed,
            "scalar_rel": scal_rel,
            "ricci_rel": ric_rel,
        }));
    }
    let pass = worst <= tols.aubin;
    Ok((
        json!({
            "metric": metric,
            "profile": f,
            "k": k,
            "points": rows,
            "max_rel": worst,
            "pass": pass,
        }),
        pass,
    ))
}

fn cmd_conformal(
    metric: &str,
    metric_params: &str,
    trials: usize,
    t: f64,
    seed: u64,
    tols: &Tolerances,
) -> Result<(Value, bool), GeomError> {
    let g = metric_by_name(metric, &parse_f64_list(metric_params)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phi = scalar_by_name("trig-mix", &[0.5])?;

    let mut bach_max = 0.0f64;
    let mut lap_max = 0.0f64;
    for _ in 0..trials {
        let u = random_positive_factor(&mut rng);
        let c = ConformalFactor::power(u);
        let p = random_points(&mut rng, 1)[0];
        bach_max = bach_max.max(bach_covariance_residual(&g, &c, p)?);
        let res = covariance_residual(&g, &c, t, &phi, p)?;
        let phi_u = product_field(&phi, &c.u);
        let scale = modified_laplacian_apply(&g, t, &phi_u, p)?.abs();
        lap_max = lap_max.max(res / (1.0 + scale));
    }
    let pass = bach_max <= tols.cross && lap_max <= tols.cross;
    Ok((
        json!({
            "metric": metric,
            "trials": trials,
            "t": t,
            "bach_covariance_max": bach_max,
            "laplacian_covariance_max": lap_max,
            "pass": pass,
        }),
        pass,
    ))
}

fn grid_from(resolution: &str) -> Result<fourfold::chart::ChartGrid, GeomError> {
    let res = parse_usize_list(resolution)?;
    make_chart(&ChartSpec {
        topology: Topology::PeriodicBox,
        extents: vec![TAU; res.len()],
        resolution: res,
    })
}

fn cmd_eigen(
    metric: &str,
    metric_params: &str,
    t: f64,
    resolution: &str,
    dense: bool,
    tols: &Tolerances,
) -> Result<(Value, bool), GeomError> {
    let g = metric_by_name(metric, &parse_f64_list(metric_params)?)?;
    let grid = grid_from(resolution)?;
    let tri = sign_trichotomy(&g, &grid, t)?;
    let sign = match tri.sign {
        TrichotomySign::Negative => "negative",
        TrichotomySign::Zero => "zero",
        TrichotomySign::Positive => "positive",
    };
    let mut result = json!({
        "metric": metric,
        "t": t,
        "resolution": resolution,
        "mu": tri.mu,
        "sign": sign,
        "residual": tri.eigen.residual,
        "iterations": tri.eigen.iterations,
    });
    let mut pass = tri.eigen.residual <= tols.eig * (1.0 + tri.mu.abs());
    if dense {
        let op = fourfold::spectral::assemble_operator(&g, &grid, t)?;
        let mu_dense = dense_principal_eigenvalue(&op);
        let gap = (tri.mu - mu_dense).abs() / (1.0 + mu_dense.abs());
        result["mu_dense"] = json!(mu_dense);
        result["dense_rel_gap"] = json!(gap);
        pass = pass && gap <= tols.cross;
    }
    result["pass"] = json!(pass);
    Ok((result, pass))
}

fn cmd_normalize(
    metric: &str,
    metric_params: &str,
    t: f64,
    resolution: &str,
    tols: &Tolerances,
) -> Result<(Value, bool), GeomError> {
    let g = metric_by_name(metric, &parse_f64_list(metric_params)?)?;
    let grid = grid_from(resolution)?;
    let rep = minimize_and_normalize(&g, &grid, t)?;
    let v_min = rep.v.iter().cloned().fold(f64::INFINITY, f64::min);
    let v_max = rep.v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let pass = rep.deviation <= tols.norm && rep.k < 0.0;
    Ok((
        json!({
            "metric": metric,
            "t": t,
            "resolution": resolution,
            "el_constant": rep.k,
            "mu": rep.mu,
            "el_residual": rep.el_residual,
            "deviation": rep.deviation,
            "newton_iterations": rep.newton_iterations,
            "descent_iterations": rep.descent_iterations,
            "v_min": v_min,
            "v_max": v_max,
            "pass": pass,
        }),
        pass,
    ))
}

#[allow(clippy::too_many_arguments)]
fn cmd_construct(
    metric: &str,
    metric_params: &str,
    t: f64,
    balls: usize,
    radius: f64,
    nu: f64,
    delta: f64,
    k_candidates: &str,
    center: &str,
    ball_panels: usize,
    ball_angular: &str,
    box_resolution: &str,
    csv: Option<&std::path::Path>,
    profile_samples: usize,
) -> Result<(Value, bool), GeomError> {
    let g = metric_by_name(metric, &parse_f64_list(metric_params)?)?;
    let ks = parse_f64_list(k_candidates)?;
    let ang = parse_usize_list(ball_angular)?;
    if ang.len() != 3 {
        return Err(GeomError::InvalidChartSpec("ball angular needs 3 counts".into()));
    }
    let params = ConstructionParams {
        center: parse_point(center)?,
        radius,
        nu,
        delta,
        ball_count: balls,
        k_candidates: ks.clone(),
        extents: vec![TAU; 4],
        ball_panels,
        ball_angular: [ang[0], ang[1], ang[2]],
        box_resolution: parse_usize_list(box_resolution)?,
    };

    let outcome = run_construction(&g, t, &params);

    // The radial CSV is useful on failure paths too: it plots the profile
    // of the attempted deformation, using the chosen k when one exists.
    let mut csv_note = Value::Null;
    if let Some(path) = csv {
        let k_plot = outcome
            .as_ref()
            .map(|r| r.k_chosen)
            .unwrap_or_else(|_| ks.first().copied().unwrap_or(1.0));
        let profile = bump_profile(delta)?;
        let psi = radial_factor(&profile, params.center, radius, nu, None)?;
        let samples =
            radial_profile(&g, &psi, k_plot, t, params.center, radius, profile_samples)?;
        let mut text = String::from("rho,bach_bar,scalar_bar,mixed\n");
        for s in &samples {
            text.push_str(&format!("{:e},{:e},{:e},{:e}\n", s.rho, s.bach_bar, s.scalar_bar, s.mixed));
        }
        fs::write(path, text).map_err(|e| {
            GeomError::InvalidChartSpec(format!("cannot write csv {}: {e}", path.display()))
        })?;
        csv_note = json!({"path": path.display().to_string(), "rows": samples.len(), "k": k_plot});
    }

    let report = outcome?;
    let pass = report.success && report.phi_value < 0.0;
    Ok((
        json!({
            "metric": metric,
            "t": t,
            "balls": balls,
            "radius": radius,
            "nu": nu,
            "delta": delta,
            "k_candidates": ks,
            "phi_value": report.phi_value,
            "min_bach_norm": report.min_bach_norm,
            "k_chosen": report.k_chosen,
            "per_ball": report.per_ball,
            "complement": report.complement,
            "bound_samples": report
                .bound_samples
                .iter()
                .map(|s| json!({"k": s.k, "q": s.q}))
                .collect::<Vec<_>>(),
            "normalization": {
                "el_constant": report.normalization.k,
                "mu": report.normalization.mu,
                "el_residual": report.normalization.el_residual,
                "deviation": report.normalization.deviation,
                "newton_iterations": report.normalization.newton_iterations,
            },
            "success": report.success,
            "csv": csv_note,
        }),
        pass,
    ))
}

fn cmd_verify(
    suite: &str,
    trials: usize,
    seed: u64,
    tols: &Tolerances,
) -> Result<(Value, bool), GeomError> {
    let mut checks: Vec<Value> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all = suite == "all";

    if all || suite == "bach-forms" {
        let names = ["euclidean", "sphere", "product-spheres", "conformally-flat", "bach-positive-torus"];
        let mut worst = 0.0f64;
        for name in names {
            let g = metric_by_name(name, &[])?;
            for &p in &random_points(&mut rng, trials) {
                let b = curvature_bundle(&g.jet(p, 4)?)?;
                let br = bach_ricci_form(&b)?;
                let bw = bach_weyl_form(&b)?;
                let mut diff = 0.0f64;
                for i in 0..4 {
                    for j in 0..4 {
                        diff = diff.max((br.value(i, j) - bw.value(i, j)).abs());
                    }
                }
                worst = worst.max(diff / (1.0 + br.norm()));
            }
        }
        push_check(&mut checks, "bach-two-formula-agreement", worst, tols.cross);
    }

    if all || suite == "covariance" {
        let g = metric_by_name("bach-positive-torus", &[])?;
        let phi = scalar_by_name("trig-mix", &[0.5])?;
        let mut bach_max = 0.0f64;
        let mut lap_max = 0.0f64;
        for _ in 0..trials {
            let u = random_positive_factor(&mut rng);
            let c = ConformalFactor::power(u);
            let p = random_points(&mut rng, 1)[0];
            bach_max = bach_max.max(bach_covariance_residual(&g, &c, p)?);
            let t = rng.gen_range(0.2..2.0);
            let res = covariance_residual(&g, &c, t, &phi, p)?;
            let phi_u = product_field(&phi, &c.u);
            let scale = modified_laplacian_apply(&g, t, &phi_u, p)?.abs();
            lap_max = lap_max.max(res / (1.0 + scale));
        }
        push_check(&mut checks, "bach-conformal-covariance", bach_max, tols.cross);
        push_check(&mut checks, "modified-laplacian-covariance", lap_max, tols.cross);
    }

    if all || suite == "aubin" {
        let g = metric_by_name("euclidean", &[])?;
        let f = scalar_by_name("sin-sum", &[0.3])?;
        let spec = DeformationSpec::new(f, 1.0, "verify-aubin")?;
        let gbar = deform_metric(&g, &spec);
        let mut worst = 0.0f64;
        for &p in &random_points(&mut rng, trials) {
            let closed = deformed_curvature_closed(&g, &spec, p)?;
            let direct = curvature_bundle(&gbar.jet(p, 2)?)?;
            worst = worst.max(
                (closed.scalar_closed - direct.scalar.value()).abs()
                    / (1.0 + direct.scalar.value().abs()),
            );
        }
        push_check(&mut checks, "aubin-closed-form-scalar", worst, tols.aubin);
    }

    if all || suite == "scaling" {
        let g = metric_by_name("euclidean", &[])?;
        let mut worst = 0.0f64;
        for _ in 0..trials.min(5) {
            let psi = random_positive_factor(&mut rng);
            let k = rng.gen_range(0.3..2.0);
            let p = random_points(&mut rng, 1)[0];
            worst = worst.max(conformal_error_scaling_check(&g, &psi, k, p)?);
        }
        push_check(&mut checks, "conformal-error-scaling", worst, tols.cross);
    }

    if all || suite == "profile" {
        let mut worst = 0.0f64;
        for delta in [0.1, 0.2, 0.3] {
            let prof = bump_profile(delta)?;
            match verify_profile(&prof, 10_000) {
                Ok(()) => {}
                Err(_) => worst = 1.0,
            }
        }
        push_check(&mut checks, "bump-profile-six-properties", worst, 0.5);
    }

    if all || suite == "trichotomy" {
        let g = metric_by_name("bach-positive-torus", &[])?;
        let grid = grid_from("4,4,4,4")?;
        let base = sign_trichotomy(&g, &grid, 1.0)?;
        let mut class_flips = 0.0f64;
        for _ in 0..3 {
            let u = random_positive_factor(&mut rng);
            let scaled = fourfold::conformal::conformal_metric(&g, &ConformalFactor::power(u));
            let tri = sign_trichotomy(&scaled, &grid, 1.0)?;
            if tri.sign != base.sign {
                class_flips += 1.0;
            }
        }
        push_check(&mut checks, "trichotomy-class-invariance", class_flips, 0.5);
        let op = fourfold::spectral::assemble_operator(&g, &grid, 1.0)?;
        let mu_dense = dense_principal_eigenvalue(&op);
        let gap = (base.mu - mu_dense).abs() / (1.0 + mu_dense.abs());
        push_check(&mut checks, "principal-eigenvalue-dense-oracle", gap, tols.cross);
    }

    if checks.is_empty() {
        return Err(GeomError::InvalidChartSpec(format!("unknown verify suite '{suite}'")));
    }
    let pass = checks.iter().all(|c| c["pass"].as_bool().unwrap_or(false));
    Ok((
        json!({
            "suite": suite,
            "trials": trials,
            "metrics_available": METRIC_NAMES,
            "checks": checks,
            "pass": pass,
        }),
        pass,
    ))
}

fn push_check(checks: &mut Vec<Value>, name: &str, residual: f64, tolerance: f64) {
    checks.push(json!({
        "name": name,
        "residual": residual,
        "tolerance": tolerance,
        "pass": residual <= tolerance,
    }));
}
