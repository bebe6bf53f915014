//! `haar-factor`: run the constructions, write certificates, replay them.
//!
//! Reports go to stdout (or `--output`) as JSON; a one-line summary goes to
//! stderr. Exit codes: 0 success, 1 verification failure, 2 input error,
//! 3 infeasible within the Haar depth.

use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use haar_factor::dyadic::DyadicInterval;
use haar_factor::error::Error;
use haar_factor::factorization::{default_tol, factor_identity_with_tol};
use haar_factor::figure::{cover_figure, family_figure};
use haar_factor::generators::{generate, GeneratorKind, GeneratorSpec};
use haar_factor::haar::{h1_norm, leaf_profile, sl_inf_norm_sq, square_function_pieces, HaarVector};
use haar_factor::jones::{check_jones, reiterate, IntervalFamily};
use haar_factor::operator::OperatorMatrix;
use haar_factor::primarity::factor_primary_with_tol;
use haar_factor::quasi_diag::{gamlen_gaudet_children, quasi_diagonalize, Side};
use haar_factor::rational::{format_rational, parse_rational, Rational};
use haar_factor::verify::{verify_certificate, Certificate, CertificateBody};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "haar-factor", version, about = "Factorization certificates for operators on the Haar system in SL-infinity")]
struct Cli {
    /// Write the report here instead of stdout.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    /// Worker threads for the parallel parts.
    #[arg(long, global = true, env = "HAAR_FACTOR_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// SL-infinity and H1 norms of a Haar vector file.
    Norms { input: PathBuf },
    /// Check (J1)-(J4) for an interval family; exit 1 if violated.
    CheckJones { input: PathBuf },
    /// Compose an inner family with a selector whose members are inner indices.
    Reiterate {
        #[arg(long)]
        inner: PathBuf,
        #[arg(long)]
        selector: PathBuf,
    },
    /// The high-frequency cover of the chosen halves of some parent blocks.
    BuildGg(CoverArgs),
    /// Run the quasi-diagonalization and write its certificate.
    Diagonalize {
        #[command(flatten)]
        source: OperatorSource,
        /// Lower bound on the diagonal ratio of T (exact rational).
        #[arg(long, value_parser = rational)]
        delta: Rational,
        /// Error budget (exact rational).
        #[arg(long, value_parser = rational)]
        eta: Rational,
        /// Generations of the target Haar tree.
        #[arg(long)]
        index_depth: u32,
    },
    /// Factor the identity through T and write the certificate.
    Factor {
        #[command(flatten)]
        source: OperatorSource,
        /// Lower bound on the diagonal ratio of T (exact rational).
        #[arg(long, value_parser = rational)]
        delta: Rational,
        /// Error budget (exact rational).
        #[arg(long, value_parser = rational)]
        eta: Rational,
        /// Generations of the target Haar tree.
        #[arg(long)]
        index_depth: u32,
        /// Allowed residual norm (exact rational).
        #[arg(long, value_parser = rational)]
        tol: Option<Rational>,
        /// Include the matrices R and S in the certificate.
        #[arg(long)]
        emit_matrices: bool,
    },
    /// Factor the identity through T or Id - T and write the certificate.
    Primary {
        #[command(flatten)]
        source: OperatorSource,
        /// Error budget (exact rational).
        #[arg(long, value_parser = rational)]
        eta: Rational,
        /// Generations of the target Haar tree.
        #[arg(long)]
        index_depth: u32,
        #[arg(long, value_parser = rational)]
        tol: Option<Rational>,
        #[arg(long)]
        emit_matrices: bool,
    },
    /// Replay a certificate against an operator file.
    Verify {
        #[arg(long)]
        operator: PathBuf,
        #[arg(long)]
        certificate: PathBuf,
    },
    /// Write an operator matrix from a generator spec.
    Generate(GenerateArgs),
    /// SVG of one cover step, from a family or from explicit parent blocks.
    Figure {
        /// Family file; draws the step that produced `--index` (default: last index).
        #[arg(long, conflicts_with_all = ["blocks", "side", "m"])]
        family: Option<PathBuf>,
        /// Ordering number of the index to draw.
        #[arg(long, requires = "family")]
        index: Option<u64>,
        #[command(flatten)]
        cover: OptionalCover,
    },
}

#[derive(Args)]
struct CoverArgs {
    /// JSON array of parent intervals `[{"n":..,"k":..}, ..]`.
    #[arg(long)]
    blocks: PathBuf,
    #[arg(long, value_enum)]
    side: SideArg,
    /// Generation of the cover.
    #[arg(long)]
    m: u32,
}

#[derive(Args)]
struct OptionalCover {
    #[arg(long)]
    blocks: Option<PathBuf>,
    #[arg(long, value_enum)]
    side: Option<SideArg>,
    #[arg(long)]
    m: Option<u32>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    Left,
    Right,
}

impl From<SideArg> for Side {
    fn from(side: SideArg) -> Side {
        match side {
            SideArg::Left => Side::Left,
            SideArg::Right => Side::Right,
        }
    }
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct OperatorSource {
    /// Operator matrix JSON.
    #[arg(long)]
    operator: Option<PathBuf>,
    /// Generator spec JSON.
    #[arg(long)]
    spec: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    /// Generator spec JSON; the flags below are ignored when given.
    #[arg(long, conflicts_with_all = ["kind", "depth"])]
    spec: Option<PathBuf>,
    #[arg(long, value_enum, required_unless_present = "spec")]
    kind: Option<KindArg>,
    #[arg(long, required_unless_present = "spec")]
    depth: Option<u32>,
    #[arg(long, value_parser = rational, default_value = "1")]
    delta: Rational,
    #[arg(long, value_parser = rational, default_value = "0")]
    mass: Rational,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Identity,
    ScaledDiagonal,
    RandomLargeDiagonal,
    HaarMultiplier,
    LevelShift,
    ProjectionMask,
}

impl From<KindArg> for GeneratorKind {
    fn from(kind: KindArg) -> GeneratorKind {
        match kind {
            KindArg::Identity => GeneratorKind::Identity,
            KindArg::ScaledDiagonal => GeneratorKind::ScaledDiagonal,
            KindArg::RandomLargeDiagonal => GeneratorKind::RandomLargeDiagonal,
            KindArg::HaarMultiplier => GeneratorKind::HaarMultiplier,
            KindArg::LevelShift => GeneratorKind::LevelShift,
            KindArg::ProjectionMask => GeneratorKind::ProjectionMask,
        }
    }
}

fn rational(text: &str) -> Result<Rational, String> {
    parse_rational(text).map_err(|e| e.to_string())
}

/// What a command produced, before it is written out.
struct Report {
    body: String,
    summary: String,
    code: u8,
}

impl Report {
    fn json(value: &Value, summary: String, passed: bool) -> Self {
        Report {
            body: serde_json::to_string_pretty(value).expect("reports serialize") + "\n",
            summary,
            code: if passed { 0 } else { 1 },
        }
    }
}

/// Command failure with its exit code.
struct Failure {
    code: u8,
    message: String,
    report: Option<Value>,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        let code = match &error {
            Error::Infeasible(_) => 3,
            e if e.is_input_error() => 2,
            _ => 1,
        };
        let report = match &error {
            Error::Infeasible(r) => Some(json!({ "infeasible": r })),
            _ => None,
        };
        Failure {
            code,
            message: error.to_string(),
            report,
        }
    }
}

fn input_error(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
        report: None,
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn load_operator(source: &OperatorSource) -> Result<OperatorMatrix, Failure> {
    match (&source.operator, &source.spec) {
        (Some(path), _) => Ok(OperatorMatrix::from_json(&read(path)?)?),
        (None, Some(path)) => {
            let spec: GeneratorSpec = serde_json::from_str(&read(path)?).map_err(Error::from)?;
            Ok(generate(&spec)?)
        }
        (None, None) => Err(input_error("an operator source is required")),
    }
}

fn load_blocks(path: &Path) -> Result<Vec<DyadicInterval>, Failure> {
    Ok(serde_json::from_str(&read(path)?).map_err(Error::from)?)
}

/// A construction that ran out of depth is exit 3, not an input error.
fn construction(error: Error) -> Failure {
    let budget = matches!(error, Error::DepthBudget { .. });
    let mut failure = Failure::from(error);
    if budget {
        failure.code = 3;
    }
    failure
}

fn sealed(t: &OperatorMatrix, body: CertificateBody, summary: String) -> Report {
    let cert = Certificate::seal(t, body);
    let status = if cert.verified { "verified" } else { "NOT verified" };
    Report {
        body: cert.to_json() + "\n",
        summary: format!("{summary}; certificate {status}"),
        code: if cert.verified { 0 } else { 1 },
    }
}

fn run(command: Command) -> Result<Report, Failure> {
    match command {
        Command::Norms { input } => {
            let f = HaarVector::from_json(&read(&input)?)?;
            let norm = sl_inf_norm_sq(&f);
            let h1 = h1_norm(&f);
            let profile = leaf_profile(&f, f.depth() + 1)?;
            let pieces = square_function_pieces(&f);
            let min = profile.values.iter().min().cloned().unwrap_or_default();
            let value = json!({
                "sl_inf_norm_sq": format_rational(&norm),
                "h1_norm": h1,
                "leaf_profile": {
                    "depth": profile.depth,
                    "leaves": profile.values.len(),
                    "pieces": pieces.len(),
                    "max": format_rational(&profile.max()),
                    "min": format_rational(&min),
                },
            });
            let summary = format!("sl_inf_norm_sq {norm}, h1 {:.12} ± {:.1e}", h1.value, h1.error);
            Ok(Report::json(&value, summary, true))
        }
        Command::CheckJones { input } => {
            let family = IntervalFamily::from_json(&read(&input)?)?;
            let report = check_jones(&family);
            let summary = match (&report.satisfied, &report.kappa) {
                (true, Some(k)) => format!("satisfied, kappa {k}"),
                _ => format!("violated: {} witness(es)", report.violations.len()),
            };
            let passed = report.satisfied;
            Ok(Report::json(&json!(report), summary, passed))
        }
        Command::Reiterate { inner, selector } => {
            let a = IntervalFamily::from_json(&read(&inner)?)?;
            let b = IntervalFamily::from_json(&read(&selector)?)?;
            let composed = reiterate(&a, &b)?;
            let report = check_jones(&composed.family);
            let product = &composed.kappa_a * &composed.kappa_b;
            let within = report.satisfied && report.kappa.as_ref().is_some_and(|k| k <= &product);
            let summary = format!(
                "composed kappa {} against kappa_a * kappa_b = {product}",
                report.kappa.as_ref().map_or("unbounded".to_string(), |k| k.to_string())
            );
            Ok(Report::json(&json!({ "reiteration": composed, "report": report }), summary, within))
        }
        Command::BuildGg(args) => {
            let parents = load_blocks(&args.blocks)?;
            let cover = gamlen_gaudet_children(&parents, args.side.into(), args.m)?;
            let summary = format!("{} parents, cover of {} intervals at generation {}", parents.len(), cover.len(), args.m);
            let side = match args.side {
                SideArg::Left => "left",
                SideArg::Right => "right",
            };
            Ok(Report::json(&json!({ "parents": parents, "side": side, "m": args.m, "cover": cover }), summary, true))
        }
        Command::Diagonalize { source, delta, eta, index_depth } => {
            let t = load_operator(&source)?;
            let diag = quasi_diagonalize(&t, &delta, &eta, index_depth).map_err(construction)?;
            let freqs: Vec<u32> = diag.certificate.steps.iter().map(|s| s.frequency).collect();
            let summary = format!("{} blocks, frequencies {freqs:?}", freqs.len());
            Ok(sealed(&t, CertificateBody::Diagonalization(diag), summary))
        }
        Command::Factor { source, delta, eta, index_depth, tol, emit_matrices } => {
            let t = load_operator(&source)?;
            let tol = tol.unwrap_or_else(default_tol);
            let mut result = factor_identity_with_tol(&t, &delta, &eta, index_depth, &tol).map_err(construction)?;
            if !emit_matrices {
                result = result.without_matrices();
            }
            let summary = format!(
                "contraction {}, norm product bound {}, residual^2 {}",
                result.contraction, result.norm_product_bound, result.residual
            );
            Ok(sealed(&t, CertificateBody::Factorization(result), summary))
        }
        Command::Primary { source, eta, index_depth, tol, emit_matrices } => {
            let t = load_operator(&source)?;
            let tol = tol.unwrap_or_else(default_tol);
            let mut result = factor_primary_with_tol(&t, &eta, index_depth, &tol).map_err(construction)?;
            if !emit_matrices {
                result = result.without_matrices();
            }
            let summary = format!("choice {:?}, norm product bound {}", result.choice, result.norm_product_bound);
            Ok(sealed(&t, CertificateBody::Primarity(result), summary))
        }
        Command::Verify { operator, certificate } => {
            let t = OperatorMatrix::from_json(&read(&operator)?)?;
            let cert = Certificate::from_json(&read(&certificate)?)?;
            let replay = verify_certificate(&t, &cert);
            let failed: Vec<&str> = replay.report.failures().iter().map(|c| c.name.as_str()).collect();
            let summary = format!(
                "stored {}, recomputed {}, reproduced {}{}",
                replay.stored,
                replay.report.passed,
                replay.reproduced,
                if failed.is_empty() { String::new() } else { format!("; failing: {}", failed.join(", ")) }
            );
            let passed = replay.report.passed && replay.reproduced;
            Ok(Report::json(&json!(replay), summary, passed))
        }
        Command::Generate(args) => {
            let spec = match &args.spec {
                Some(path) => serde_json::from_str(&read(path)?).map_err(Error::from)?,
                None => GeneratorSpec::new(args.kind.expect("required by clap").into(), args.depth.expect("required by clap"))
                    .delta(args.delta)
                    .mass(args.mass)
                    .seed(args.seed),
            };
            let t = generate(&spec)?;
            Ok(Report {
                body: t.to_json() + "\n",
                summary: format!("{:?} at depth {}, {} entries, digest {}", spec.kind, spec.depth, t.entry_count(), t.digest()),
                code: 0,
            })
        }
        Command::Figure { family, index, cover } => {
            let svg = match family {
                Some(path) => {
                    let family = IntervalFamily::from_json(&read(&path)?)?;
                    family_figure(&family, index.map(DyadicInterval::from_ordering))?
                }
                None => {
                    let (Some(blocks), Some(side), Some(m)) = (cover.blocks, cover.side, cover.m) else {
                        return Err(input_error("figure needs --family, or --blocks with --side and --m"));
                    };
                    cover_figure(&load_blocks(&blocks)?, side.into(), m)?
                }
            };
            Ok(Report {
                body: svg,
                summary: "figure written".into(),
                code: 0,
            })
        }
    }
}

fn emit(output: Option<&Path>, body: &str) -> Result<(), Failure> {
    match output {
        Some(path) => fs::write(path, body).map_err(|e| input_error(format!("{}: {e}", path.display()))),
        None => match std::io::stdout().lock().write_all(body.as_bytes()) {
            Err(e) if e.kind() != ErrorKind::BrokenPipe => Err(input_error(format!("stdout: {e}"))),
            _ => Ok(()),
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("haar-factor: cannot size the thread pool: {e}");
        }
    }
    let output = cli.output.clone();
    let code = match run(cli.command).and_then(|report| {
        emit(output.as_deref(), &report.body)?;
        Ok(report)
    }) {
        Ok(report) => {
            eprintln!("{}", report.summary);
            report.code
        }
        Err(failure) => {
            if let Some(report) = &failure.report {
                let text = serde_json::to_string_pretty(report).expect("reports serialize") + "\n";
                let _ = emit(output.as_deref(), &text);
            }
            eprintln!("haar-factor: {}", failure.message);
            failure.code
        }
    };
    ExitCode::from(code)
}
