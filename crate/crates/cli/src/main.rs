//! Command-line driver for the LC-geometry toolkit: structure checks,
//! chains/null-chains/fiber flows, Kropina geodesics, path projections,
//! exact model-space computations and the worked-example verifier.
//!
//! Exit codes: 0 success, 1 I/O or parse failure, 2 mathematical
//! precondition failure, 3 verification failure.

mod verify;

use std::fs;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lcgeo_core::curves::{
    kropina_geodesic_dim3, project_to_paths, ChainContext, CurveError, ElData, IntegratorConfig,
    Trajectory,
};
use lcgeo_core::fefferman::{
    build_fefferman_projective, build_patterson_walker, pullback_patterson_walker, PwBranch,
};
use lcgeo_core::lc::{LcStructure, PointM, SampleBox};
use lcgeo_core::linalg::halton_points;
use lcgeo_core::model::{self, parse_rat, ModelTangent, PcLine, Rat};
use lcgeo_core::projective::{christoffels_from_fij, ChristoffelField, ProjectiveError};

#[derive(Parser)]
#[command(
    name = "lcgeo",
    about = "Lagrangian-contact geometry: Fefferman metrics, chains and Kropina geodesics",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Report integrability and projectivity of a structure file.
    Check(CheckArgs),
    /// Evaluate the Fefferman metric of a structure at a point.
    Metric(MetricArgs),
    /// Integrate a chain (projected null geodesic) from a transverse direction.
    Chain(ChainArgs),
    /// Integrate a null-chain from a contact-null direction.
    NullChain(NullChainArgs),
    /// Integrate a fiber flow line (projects to a point).
    Kflow(KflowArgs),
    /// Integrate the dimension-3 Kropina Euler-Lagrange system.
    KropinaGeodesic(KropinaArgs),
    /// Project a trajectory to the path space and report ODE residuals.
    ProjectPaths(ProjectArgs),
    /// Exact computations in the homogeneous model.
    #[command(subcommand)]
    Model(ModelCommand),
    /// Re-derive the dimension-3 worked example end to end.
    VerifyExample(VerifyArgs),
    /// Compare the Patterson-Walker pullback with the projective Fefferman metric.
    PwCompare(PwArgs),
}

#[derive(Args)]
struct CheckArgs {
    /// Structure file: { "n": int, "f": [["expr", ...], ...] }
    #[arg(long)]
    structure: String,
    /// Half-width of the integrability sampling box.
    #[arg(long, default_value_t = 0.8)]
    box_half_width: f64,
    /// Number of low-discrepancy sample points.
    #[arg(long, default_value_t = 128)]
    samples: usize,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct MetricArgs {
    #[arg(long)]
    structure: String,
    /// Point as comma-separated coordinates x1..xn,u,p1..pn with optional s.
    #[arg(long, allow_hyphen_values = true)]
    at: String,
    /// Write the coefficient expressions as a metric JSON file.
    #[arg(long)]
    dump: Option<String>,
}

#[derive(Args, Clone)]
struct IntegrationFlags {
    #[arg(long, default_value_t = 1e-10)]
    rel_tol: f64,
    #[arg(long, default_value_t = 1e-12)]
    abs_tol: f64,
    #[arg(long, default_value_t = 0.02)]
    max_step: f64,
    #[arg(long, default_value_t = 200000)]
    max_steps: usize,
}

impl IntegrationFlags {
    fn config(&self) -> IntegratorConfig {
        IntegratorConfig {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_step: self.max_step,
            max_steps: self.max_steps,
            ..IntegratorConfig::default()
        }
    }
}

#[derive(Args)]
struct ChainArgs {
    #[arg(long)]
    structure: String,
    /// Base point x1..xn,u,p1..pn (initial-value mode).
    #[arg(long, allow_hyphen_values = true)]
    at: Option<String>,
    /// Transverse direction (initial-value mode).
    #[arg(long, allow_hyphen_values = true)]
    dir: Option<String>,
    /// Integrate one chain per listed direction (semicolon-separated
    /// coordinate lists) instead of a single --dir.
    #[arg(long, allow_hyphen_values = true)]
    dir_sweep: Option<String>,
    /// Fiber base point of the lift.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    s0: f64,
    /// Integration interval a,b of the curve parameter.
    #[arg(long, allow_hyphen_values = true)]
    tspan: Option<String>,
    /// Two-point mode (n = 1): left endpoint x,y,p.
    #[arg(long, allow_hyphen_values = true)]
    from: Option<String>,
    /// Two-point mode (n = 1): right endpoint x,y,p.
    #[arg(long, allow_hyphen_values = true)]
    to: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
    #[command(flatten)]
    integ: IntegrationFlags,
}

#[derive(Args)]
struct NullChainArgs {
    #[arg(long)]
    structure: String,
    #[arg(long, allow_hyphen_values = true)]
    at: String,
    #[arg(long, allow_hyphen_values = true)]
    dir: String,
    /// Lift parameter indexing the null-chain family.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    k: f64,
    /// Integrate one curve per listed lift parameter instead.
    #[arg(long, allow_hyphen_values = true)]
    k_sweep: Option<String>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    s0: f64,
    #[arg(long, allow_hyphen_values = true)]
    tspan: String,
    #[arg(long)]
    out: Option<String>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
    #[command(flatten)]
    integ: IntegrationFlags,
}

#[derive(Args)]
struct KflowArgs {
    #[arg(long)]
    structure: String,
    #[arg(long, allow_hyphen_values = true)]
    at: String,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    s0: f64,
    #[arg(long, allow_hyphen_values = true)]
    tspan: String,
    #[arg(long)]
    out: Option<String>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
    #[command(flatten)]
    integ: IntegrationFlags,
}

#[derive(Args)]
struct KropinaArgs {
    #[arg(long)]
    structure: String,
    /// Integration range a,b in x.
    #[arg(long, allow_hyphen_values = true)]
    x_range: String,
    /// Initial-value mode: y,y',p,p' at x = a.
    #[arg(long, allow_hyphen_values = true)]
    init: Option<String>,
    /// Two-point mode: y,p at x = a.
    #[arg(long, allow_hyphen_values = true)]
    from: Option<String>,
    /// Two-point mode: y,p at x = b.
    #[arg(long, allow_hyphen_values = true)]
    to: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
    #[command(flatten)]
    integ: IntegrationFlags,
}

#[derive(Args)]
struct ProjectArgs {
    #[arg(long)]
    structure: String,
    /// Trajectory file in the JSON format written by the curve commands.
    #[arg(long)]
    traj: String,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand)]
enum ModelCommand {
    /// Classify a model tangent vector given by its blocks (X, Y, z).
    Classify(ModelTangentArgs),
    /// Sample the model chain through a transverse tangent.
    Chain(ModelCurveArgs),
    /// Sample a model null-chain (generic contact-null tangent).
    NullChain(ModelNullChainArgs),
    /// Decide how two model points can be connected.
    Connect(ModelConnectArgs),
}

#[derive(Args)]
struct ModelTangentArgs {
    #[arg(long)]
    n: usize,
    /// X block, comma-separated rationals (n entries).
    #[arg(long, allow_hyphen_values = true)]
    x: String,
    /// Y block, comma-separated rationals (n entries).
    #[arg(long, allow_hyphen_values = true)]
    y: String,
    /// z block entry.
    #[arg(long, allow_hyphen_values = true)]
    z: String,
    /// Base line spanning vectors; defaults to the origin.
    #[arg(long, allow_hyphen_values = true)]
    base_plus: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    base_minus: Option<String>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ModelCurveArgs {
    #[command(flatten)]
    tangent: ModelTangentArgs,
    #[arg(long, default_value = "-1,1", allow_hyphen_values = true)]
    tspan: String,
    #[arg(long, default_value_t = 50)]
    steps: usize,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct ModelNullChainArgs {
    #[command(flatten)]
    curve: ModelCurveArgs,
    /// Family parameter multiplying the plus spanner.
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    pa: String,
    /// Family parameter multiplying the minus spanner.
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    pb: String,
}

#[derive(Args)]
struct ModelConnectArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, allow_hyphen_values = true)]
    l1_plus: String,
    #[arg(long, allow_hyphen_values = true)]
    l1_minus: String,
    #[arg(long, allow_hyphen_values = true)]
    l2_plus: String,
    #[arg(long, allow_hyphen_values = true)]
    l2_minus: String,
    /// Which chain arc to sample (0 or 1).
    #[arg(long, default_value_t = 0)]
    arc: usize,
    #[arg(long, default_value_t = 50)]
    steps: usize,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    json: bool,
    /// Regression guard: replace the leading coefficient of the defining
    /// function (the checks must then fail).
    #[arg(long, allow_hyphen_values = true)]
    perturb: Option<f64>,
}

#[derive(Args)]
struct PwArgs {
    /// Christoffel file: { "m": int, "gamma": { "c,a,b": "expr" } }.
    #[arg(long)]
    gamma: String,
    #[arg(long, default_value_t = 100)]
    points: usize,
    #[arg(long)]
    json: bool,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn io(message: impl Into<String>) -> Failure {
        Failure { code: 1, message: message.into() }
    }

    fn math(message: impl Into<String>) -> Failure {
        Failure { code: 2, message: message.into() }
    }

    fn verification(message: impl Into<String>) -> Failure {
        Failure { code: 3, message: message.into() }
    }
}

fn curve_failure(err: CurveError) -> Failure {
    match err {
        CurveError::Classification { .. }
        | CurveError::TransversalityLost { .. }
        | CurveError::SingularMetric { .. }
        | CurveError::NotDimensionThree { .. }
        | CurveError::NotProjectable(_)
        | CurveError::Projective(_)
        | CurveError::ShootingFailed(_)
        | CurveError::MaxSteps { .. } => Failure::math(err.to_string()),
        other => Failure::io(other.to_string()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Check(args) => cmd_check(args),
        Command::Metric(args) => cmd_metric(args),
        Command::Chain(args) => cmd_chain(args),
        Command::NullChain(args) => cmd_null_chain(args),
        Command::Kflow(args) => cmd_kflow(args),
        Command::KropinaGeodesic(args) => cmd_kropina(args),
        Command::ProjectPaths(args) => cmd_project(args),
        Command::Model(sub) => cmd_model(sub),
        Command::VerifyExample(args) => cmd_verify(args),
        Command::PwCompare(args) => cmd_pw_compare(args),
    }
}

fn load_structure(path: &str) -> Result<LcStructure, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::io(format!("cannot read `{path}`: {e}")))?;
    LcStructure::from_json(&text).map_err(|e| Failure::io(format!("{path}: {e}")))
}

fn load_gamma(path: &str) -> Result<ChristoffelField, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::io(format!("cannot read `{path}`: {e}")))?;
    ChristoffelField::from_json(&text).map_err(|e| Failure::io(format!("{path}: {e}")))
}

fn parse_floats(s: &str, what: &str) -> Result<Vec<f64>, Failure> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::io(format!("bad {what} `{s}`: {e}")))
}

fn parse_pair(s: &str, what: &str) -> Result<(f64, f64), Failure> {
    let v = parse_floats(s, what)?;
    if v.len() != 2 {
        return Err(Failure::io(format!("{what} must have two entries")));
    }
    Ok((v[0], v[1]))
}

fn parse_rats(s: &str, what: &str) -> Result<Vec<Rat>, Failure> {
    s.split(',')
        .map(parse_rat)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::io(format!("bad {what} `{s}`: {e}")))
}

fn point_m(s: &LcStructure, coords: &str) -> Result<PointM, Failure> {
    let v = parse_floats(coords, "point")?;
    PointM::from_coords(s.n(), &v).map_err(|e| Failure::io(e.to_string()))
}


/// Write to stdout, treating a closed pipe (e.g. `| head`) as success.
fn print_out(content: &str) {
    use std::io::Write;
    let mut out = std::io::stdout();
    if let Err(e) = out.write_all(content.as_bytes()) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: cannot write to stdout: {e}");
        std::process::exit(1);
    }
}

fn write_or_print(out: &Option<String>, content: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, content)
            .map_err(|e| Failure::io(format!("cannot write `{path}`: {e}"))),
        None => {
            print_out(content);
            Ok(())
        }
    }
}

fn emit_trajectory(
    traj: &Trajectory,
    out: &Option<String>,
    format: OutputFormat,
) -> Result<(), Failure> {
    if let Some(note) = &traj.note {
        eprintln!("note: {note}");
    }
    let content = match format {
        OutputFormat::Csv => traj.to_csv(),
        OutputFormat::Json => traj.to_json(),
    };
    write_or_print(out, &content)
}

fn cmd_check(args: CheckArgs) -> Result<(), Failure> {
    let s = load_structure(&args.structure)?;
    let sbox = SampleBox::centered(s.dim(), args.box_half_width, args.samples);
    let max_defect = s.max_defect(&sbox);
    let integrable = max_defect.map(|m| m <= 1e-10).unwrap_or(false);
    let projective = christoffels_from_fij(&s);
    let (is_projective, gamma_json) = match &projective {
        Ok(gamma) => (
            true,
            Some(serde_json::from_str::<serde_json::Value>(&gamma.to_json()).unwrap()),
        ),
        Err(ProjectiveError::NotProjective(_)) => (false, None),
        Err(e) => return Err(Failure::io(e.to_string())),
    };
    let report = serde_json::json!({
        "n": s.n(),
        "integrable": integrable,
        "max_defect": max_defect,
        "projective": is_projective,
        "connection": gamma_json,
    });
    if args.json {
        print_out(&serde_json::to_string_pretty(&report).unwrap());
        print_out("\n");
    } else {
        let mut text = format!("n = {}\n", s.n());
        match max_defect {
            Some(m) => text.push_str(&format!("integrable: {integrable} (max defect {m:.3e})\n")),
            None => text.push_str("integrable: undetermined (defect not evaluable on the box)\n"),
        }
        text.push_str(&format!("projective: {is_projective}\n"));
        if let Ok(gamma) = &projective {
            text.push_str(&format!("recovered christoffel symbols:\n{}\n", gamma.to_json()));
        }
        print_out(&text);
    }
    Ok(())
}

fn cmd_metric(args: MetricArgs) -> Result<(), Failure> {
    let s = load_structure(&args.structure)?;
    let g = lcgeo_core::fefferman::build_fefferman(&s);
    let mut point = parse_floats(&args.at, "point")?;
    if point.len() == 2 * s.n() + 1 {
        point.push(0.0);
    }
    if point.len() != g.dim() {
        return Err(Failure::io(format!(
            "point must have {} (or {}) coordinates",
            g.dim(),
            g.dim() - 1
        )));
    }
    let m = g.eval(&point).map_err(|e| Failure::math(e.to_string()))?;
    let mut text = String::new();
    for row in &m {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:+.12e}")).collect();
        text.push_str(&cells.join(" "));
        text.push('\n');
    }
    print_out(&text);
    if let Some(path) = &args.dump {
        fs::write(path, g.to_json())
            .map_err(|e| Failure::io(format!("cannot write `{path}`: {e}")))?;
    }
    Ok(())
}

fn cmd_chain(args: ChainArgs) -> Result<(), Failure> {
    let s = load_structure(&args.structure)?;
    match (&args.from, &args.to) {
        (Some(from), Some(to)) => {
            // two-point mode through the dimension-3 Euler-Lagrange system
            if s.n() != 1 {
                return Err(Failure::math(
                    "two-point chain mode requires a 3-dimensional structure".to_string(),
                ));
            }
            let a = parse_floats(from, "--from")?;
            let b = parse_floats(to, "--to")?;
            if a.len() != 3 || b.len() != 3 {
                return Err(Failure::io("--from/--to must be x,y,p triples".to_string()));
            }
            let data = ElData::TwoPoint { ya: a[1], pa: a[2], yb: b[1], pb: b[2] };
            let mut traj = kropina_geodesic_dim3(&s, &data, (a[0], b[0]), &args.integ.config())
                .map_err(curve_failure)?;
            traj.kind = lcgeo_core::curves::CurveKind::Chain;
            emit_trajectory(&traj, &args.out, args.format)
        }
        (None, None) => {
            let at = args
                .at
                .as_ref()
                .ok_or_else(|| Failure::io("--at is required".to_string()))?;
            let tspan = args
                .tspan
                .as_ref()
                .ok_or_else(|| Failure::io("--tspan is required".to_string()))?;
            let dirs: Vec<Vec<f64>> = match (&args.dir, &args.dir_sweep) {
                (Some(dir), None) => vec![parse_floats(dir, "direction")?],
                (None, Some(sweep)) => sweep
                    .split(';')
                    .map(|d| parse_floats(d, "direction"))
                    .collect::<Result<_, _>>()?,
                _ => {
                    return Err(Failure::io(
                        "give exactly one of --dir or --dir-sweep".to_string(),
                    ))
                }
            };
            let q = point_m(&s, at)?;
            let tspan = parse_pair(tspan, "tspan")?;
            let ctx = ChainContext::new(s);
            let many = dirs.len() > 1;
            for (idx, v) in dirs.iter().enumerate() {
                let traj = ctx
                    .chain(&q, v, args.s0, tspan, &args.integ.config())
                    .map_err(curve_failure)?;
                let out = match (&args.out, many) {
                    (Some(base), true) => Some(format!("{base}.dir{idx}")),
                    (other, _) => other.clone(),
                };
                emit_trajectory(&traj, &out, args.format)?;
            }
            Ok(())
        }
        _ => Err(Failure::io(
            "two-point mode needs both --from and --to".to_string(),
        )),
    }
}

fn cmd_null_chain(args: NullChainArgs) -> Result<(), Failure> {
    let s = load_structure(&args.structure)?;
    let q = point_m(&s, &args.at)?;
    let v = parse_floats(&args.dir, "direction")?;
    let tspan = parse_pair(&args.tspan, "tspan")?;
    let ctx = ChainContext::new(s);
    let cfg = args.integ.config();
    let ks: Vec<f64> = match &args.k_sweep {
        Some(list) => parse_floats(list, "k sweep")?,
        None => vec![args.k],
    };
    for (idx, k) in ks.iter().enumerate() {
        let traj = ctx
            .null_chain(&q, &v, *k, args.s0, tspan, &cfg)
            .map_err(curve_failure)?;
        let out = match (&args.out, ks.len()) {
            (Some(base), 1) => Some(base.clone()),
            (Some(base), _) => Some(format!("{base}.k{idx}")),
            (None, _) => None,
        };
        emit_trajectory(&traj, &out, args.format)?;
    }
    Ok(())
}

fn cmd_kflow(args: KflowArgs) -> Result<(), Failure> {
    let s = load_structure(&args.structure)?;
    let q = point_m(&s, &args.at)?;
    let tspan = parse_pair(&args.tspan, "tspan")?;
    let ctx = ChainContext::new(s);
    let traj = ctx
        .k_flow(&q, args.s0, tspan, &args.integ.config())
        .map_err(curve_failure)?;
    emit_trajectory(&traj, &args.out, args.format)
}

fn cmd_kropina(args: KropinaArgs) -> Result<(), Failure> {
    let s = load_structure(&args.structure)?;
    let x_range = parse_pair(&args.x_range, "x range")?;
    let data = match (&args.init, &args.from, &args.to) {
        (Some(init), None, None) => {
            let v = parse_floats(init, "--init")?;
            if v.len() != 4 {
                return Err(Failure::io("--init must be y,y',p,p'".to_string()));
            }
            ElData::Initial { y: v[0], yd: v[1], p: v[2], pd: v[3] }
        }
        (None, Some(from), Some(to)) => {
            let a = parse_floats(from, "--from")?;
            let b = parse_floats(to, "--to")?;
            if a.len() != 2 || b.len() != 2 {
                return Err(Failure::io("--from/--to must be y,p pairs".to_string()));
            }
            ElData::TwoPoint { ya: a[0], pa: a[1], yb: b[0], pb: b[1] }
        }
        _ => {
            return Err(Failure::io(
                "give either --init or both --from and --to".to_string(),
            ))
        }
    };
    let traj =
        kropina_geodesic_dim3(&s, &data, x_range, &args.integ.config()).map_err(curve_failure)?;
    emit_trajectory(&traj, &args.out, args.format)
}

fn cmd_project(args: ProjectArgs) -> Result<(), Failure> {
    let s = load_structure(&args.structure)?;
    let text = fs::read_to_string(&args.traj)
        .map_err(|e| Failure::io(format!("cannot read `{}`: {e}", args.traj)))?;
    let traj: Trajectory =
        serde_json::from_str(&text).map_err(|e| Failure::io(format!("{}: {e}", args.traj)))?;
    let ctx = ChainContext::new(s);
    let proj = project_to_paths(&ctx, &traj).map_err(curve_failure)?;
    if args.json {
        let content = serde_json::to_string_pretty(&proj).unwrap();
        write_or_print(&args.out, &content)?;
    } else {
        let mut content = String::from("t");
        for name in &proj.coords {
            content.push(',');
            content.push_str(name);
        }
        content.push_str(",residual\n");
        for smp in &proj.samples {
            content.push_str(&format!("{}", smp.t));
            for v in &smp.base {
                content.push_str(&format!(",{v}"));
            }
            content.push_str(&format!(",{}\n", smp.residual));
        }
        write_or_print(&args.out, &content)?;
        eprintln!(
            "max |residual| = {:.3e} over {} samples ({} skipped)",
            proj.max_abs_residual,
            proj.samples.len(),
            proj.skipped_samples
        );
    }
    Ok(())
}

fn model_tangent(args: &ModelTangentArgs) -> Result<(PcLine, ModelTangent), Failure> {
    let n = args.n;
    let x = parse_rats(&args.x, "X block")?;
    let y = parse_rats(&args.y, "Y block")?;
    let z = parse_rat(&args.z).map_err(|e| Failure::io(e.to_string()))?;
    if x.len() != n || y.len() != n {
        return Err(Failure::io("X and Y blocks must have n entries".to_string()));
    }
    let base = match (&args.base_plus, &args.base_minus) {
        (Some(p), Some(m)) => {
            let vp = parse_rats(p, "base plus spanner")?;
            let vm = parse_rats(m, "base minus spanner")?;
            PcLine::new(n, vp, vm).map_err(|e| Failure::math(e.to_string()))?
        }
        (None, None) => PcLine::origin(n),
        _ => {
            return Err(Failure::io(
                "give both --base-plus and --base-minus or neither".to_string(),
            ))
        }
    };
    let w = ModelTangent::from_blocks(base.clone(), &x, &y, z)
        .map_err(|e| Failure::math(e.to_string()))?;
    Ok((base, w))
}

fn model_curve_csv(curve: &model::ModelCurve, tspan: (f64, f64), steps: usize) -> String {
    let n = curve.n;
    let mut out = String::from("t");
    for i in 0..n + 2 {
        out.push_str(&format!(",vp_{i}"));
    }
    for i in 0..n + 2 {
        out.push_str(&format!(",vm_{i}"));
    }
    out.push('\n');
    for (t, vp, vm) in curve.sample_f64(tspan.0, tspan.1, steps) {
        out.push_str(&format!("{t}"));
        for v in vp.iter().chain(vm.iter()) {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

fn cmd_model(sub: ModelCommand) -> Result<(), Failure> {
    match sub {
        ModelCommand::Classify(args) => {
            let (_, w) = model_tangent(&args)?;
            let kind = w.classify();
            if args.json {
                println!("{}", serde_json::json!({ "kind": kind.name() }));
            } else {
                println!("{}", kind.name());
            }
            Ok(())
        }
        ModelCommand::Chain(args) => {
            let (base, w) = model_tangent(&args.tangent)?;
            let curve = model::model_chain(&base, &w).map_err(|e| Failure::math(e.to_string()))?;
            let tspan = parse_pair(&args.tspan, "tspan")?;
            let csv = model_curve_csv(&curve, tspan, args.steps);
            write_or_print(&args.out, &csv)
        }
        ModelCommand::NullChain(args) => {
            let (base, w) = model_tangent(&args.curve.tangent)?;
            let pa = parse_rat(&args.pa).map_err(|e| Failure::io(e.to_string()))?;
            let pb = parse_rat(&args.pb).map_err(|e| Failure::io(e.to_string()))?;
            let curve = model::model_null_chain(&base, &w, &pa, &pb)
                .map_err(|e| Failure::math(e.to_string()))?;
            let tspan = parse_pair(&args.curve.tspan, "tspan")?;
            let csv = model_curve_csv(&curve, tspan, args.curve.steps);
            write_or_print(&args.curve.out, &csv)
        }
        ModelCommand::Connect(args) => {
            let l1 = PcLine::new(
                args.n,
                parse_rats(&args.l1_plus, "l1 plus")?,
                parse_rats(&args.l1_minus, "l1 minus")?,
            )
            .map_err(|e| Failure::math(e.to_string()))?;
            let l2 = PcLine::new(
                args.n,
                parse_rats(&args.l2_plus, "l2 plus")?,
                parse_rats(&args.l2_minus, "l2 minus")?,
            )
            .map_err(|e| Failure::math(e.to_string()))?;
            let decision = model::connect(&l1, &l2).map_err(|e| Failure::math(e.to_string()))?;
            let (kind, curve) = match &decision {
                model::Connection::Chain { arcs } => {
                    if args.arc > 1 {
                        return Err(Failure::io("--arc must be 0 or 1".to_string()));
                    }
                    ("chain", Some(&arcs[args.arc]))
                }
                model::Connection::NullChainFamily { representative } => {
                    ("null_chain_family", Some(representative))
                }
                model::Connection::Degenerate { .. } => ("degenerate", None),
            };
            if args.json {
                println!("{}", serde_json::json!({ "connection": kind }));
            } else {
                println!("connection: {kind}");
            }
            if let Some(curve) = curve {
                if args.out.is_some() {
                    let csv = model_curve_csv(curve, (0.0, 1.0), args.steps);
                    write_or_print(&args.out, &csv)?;
                }
            }
            Ok(())
        }
    }
}

fn cmd_verify(args: VerifyArgs) -> Result<(), Failure> {
    let report = verify::verify_example(args.perturb);
    if args.json {
        print_out(&serde_json::to_string_pretty(&report).unwrap());
        print_out("\n");
    } else {
        print!("{}", verify::render_text(&report));
    }
    if report.pass {
        Ok(())
    } else {
        let failing = report.first_failure().expect("some check failed");
        Err(Failure::verification(format!(
            "check `{}` failed (value {:.3e})",
            failing.id, failing.value
        )))
    }
}

fn cmd_pw_compare(args: PwArgs) -> Result<(), Failure> {
    let gamma = load_gamma(&args.gamma)?;
    let n = gamma.m() - 1;
    let d = 2 * n + 2;
    let g_pw = build_patterson_walker(&gamma);
    let g_proj = build_fefferman_projective(&gamma);
    let pts = halton_points(d, args.points, &vec![-0.8; d], &vec![0.8; d]);
    let mut worst: f64 = 0.0;
    for branch in [PwBranch::Plus, PwBranch::Minus] {
        for q in &pts {
            let (_, normalized, _) = pullback_patterson_walker(&g_pw, q, branch)
                .map_err(|e| Failure::math(e.to_string()))?;
            let want = g_proj.eval(q).map_err(|e| Failure::math(e.to_string()))?;
            for a in 0..d {
                for b in 0..d {
                    worst = worst.max((normalized[a][b] - want[a][b]).abs());
                }
            }
        }
    }
    let pass = worst <= 1e-10;
    if args.json {
        println!(
            "{}",
            serde_json::json!({
                "points": args.points,
                "max_deviation": worst,
                "conformal_factor": "-y_{n+1} = -(+/-)e^{-2s}",
                "pass": pass,
            })
        );
    } else {
        println!("pullback of the Patterson-Walker metric vs projective Fefferman metric");
        println!(
            "max |deviation| over {} points x 2 branches (after the -y_{{n+1}} conformal \
             normalization): {worst:.3e}",
            args.points
        );
    }
    if pass {
        Ok(())
    } else {
        Err(Failure::verification(format!(
            "pullback deviates by {worst:.3e} > 1e-10"
        )))
    }
}
