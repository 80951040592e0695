use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;
use tensor_ident::decomposer::{multistart_decompose, SolverConfig};
use tensor_ident::fourfold::{fit_segre_embedding, random_fourfold, FitProblem, FIT_NULLSPACE_DIM};
use tensor_ident::linalg::DEFAULT_RANK_TOL;
use tensor_ident::multilinear::{assemble, random_decomposition, Shape3, Tensor3};
use tensor_ident::pipeline::{contact_check, verify_unidentifiability, PipelineConfig};
use tensor_ident::secant::{
    classify_balance, generic_rank, terracini_dimension, Parametrization, SegreVeronese,
};
use tensor_ident::tangential::{fiber_count, random_tangential_projection, FiberConfig};
use tensor_ident::{Error, Seed};

#[derive(Parser)]
#[command(
    name = "tensor-ident",
    version,
    about = "Identifiability experiments for complex tensors"
)]
struct Cli {
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Write the full JSON report here.
    #[arg(long, global = true)]
    json_out: Option<PathBuf>,
    /// Number of random starts (decomposer and fiber solver).
    #[arg(long, global = true)]
    starts: Option<usize>,
    /// Relative singular-value threshold for numerical rank.
    #[arg(long, global = true, default_value_t = DEFAULT_RANK_TOL)]
    rank_tol: f64,
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    /// The (3,1,1) Segre-Veronese fourfold in C^40.
    Abstract,
    /// The fourfold through eight random points of P^2 x P^5 x P^5.
    Fourfold,
}

#[derive(Subcommand)]
enum Command {
    /// Dimension of the k-th secant variety by Terracini's lemma.
    SecantDim {
        n1: usize,
        n2: usize,
        n3: usize,
        #[arg(long)]
        k: usize,
        /// Segre-Veronese degrees (default 1 1 1).
        #[arg(long, num_args = 3)]
        degrees: Option<Vec<usize>>,
    },
    /// Smallest k whose secant variety fills the ambient space.
    GenericRank { n1: usize, n2: usize, n3: usize },
    /// Balanced/unbalanced classification of P^a1 x P^a2 x P^a3.
    Balance {
        a1: usize,
        a2: usize,
        a3: usize,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Fit a Segre embedding P^2 x P^1 -> P^5 through eight random point pairs.
    FitSegre {
        /// JSON file with fields `p` (points of C^6) and `q` (points of C^3).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Build the fourfold through eight random points of P^2 x P^5 x P^5.
    BuildY,
    /// Degree of the tangential projection from seven tangent spaces.
    TangentialDegree {
        #[arg(long, value_enum, default_value_t = Model::Abstract)]
        model: Model,
    },
    /// Count inequivalent rank-k decompositions of a tensor.
    Decompose {
        #[arg(long)]
        k: usize,
        /// Tensor JSON file; without it a random rank-k tensor is used.
        #[arg(long, conflicts_with = "shape")]
        tensor: Option<PathBuf>,
        /// Shape of the random tensor.
        #[arg(long, num_args = 3, default_values_t = [3, 6, 6])]
        shape: Vec<usize>,
    },
    /// Run the full non-identifiability pipeline on P^2 x P^5 x P^5, k = 8.
    VerifyTheorem,
    /// Tangent spaces along the fourfold stay in the span of eight tangent spaces.
    ContactCheck,
}

struct Outcome {
    pass: bool,
    summary: String,
    json: String,
}

fn outcome<T: Serialize>(pass: bool, summary: String, report: &T) -> Result<Outcome, Error> {
    Ok(Outcome {
        pass,
        summary,
        json: serde_json::to_string_pretty(report)?,
    })
}

fn shape3(n: &[usize]) -> Result<Shape3, Error> {
    Shape3::new(n[0], n[1], n[2])
}

fn run(cli: &Cli) -> Result<Outcome, Error> {
    let seed = Seed(cli.seed);
    let tol = cli.rank_tol;
    match &cli.command {
        Command::SecantDim {
            n1,
            n2,
            n3,
            k,
            degrees,
        } => {
            let degrees = match degrees {
                Some(d) => [d[0], d[1], d[2]],
                None => [1, 1, 1],
            };
            let param = SegreVeronese::new([*n1, *n2, *n3], degrees)?;
            let sd = terracini_dimension(&param, *k, seed, tol)?;
            let summary = format!(
                "{}\nprojective dimension {} (expected {}, defect {})",
                sd.projective_dim, sd.projective_dim, sd.expected_projective_dim, sd.defect
            );
            outcome(true, summary, &sd)
        }
        Command::GenericRank { n1, n2, n3 } => {
            let gr = generic_rank(Shape3::new(*n1, *n2, *n3)?, seed, tol)?;
            let summary = format!(
                "generic rank {} (expected {}), defective steps {:?}",
                gr.rank,
                gr.expected_rank,
                gr.defective_steps()
            );
            outcome(true, summary, &gr)
        }
        Command::Balance { a1, a2, a3, k } => {
            let mut a = [*a1, *a2, *a3];
            a.sort_unstable();
            let b = classify_balance(a, *k)?;
            let mut summary = format!(
                "{}, threshold {}, identifiability bound {}",
                if b.balanced { "balanced" } else { "unbalanced" },
                b.threshold,
                b.identifiability_bound
            );
            if let Some(id) = b.identifiable {
                summary += &format!(", k identifiable: {id}");
            }
            outcome(true, summary, &b)
        }
        Command::FitSegre { input } => {
            let fp = match input {
                Some(path) => serde_json::from_str::<FitProblem>(&std::fs::read_to_string(path)?)?,
                None => FitProblem::random(8, &mut seed.child("fit-data").rng()),
            };
            let fp = FitProblem::new(fp.p, fp.q)?;
            let fit = fit_segre_embedding(&fp, &mut seed.child("fit").rng())?;
            let pass = fit.nullspace_dim == FIT_NULLSPACE_DIM && fit.max_residual() < 1e-8;
            let summary = format!(
                "nullspace dimension {}, max residual {:.2e}, condition {:.2e}",
                fit.nullspace_dim,
                fit.max_residual(),
                fit.condition
            );
            outcome(pass, summary, &fit)
        }
        Command::BuildY => {
            let y = random_fourfold(seed)?;
            let summary = format!(
                "span affine dimension {}, fit nullspaces {} {}, max anchor distance {:.2e}",
                y.span_rank.rank,
                y.fit_b.nullspace_dim,
                y.fit_c.nullspace_dim,
                y.max_anchor_distance()
            );
            Ok(Outcome {
                pass: true,
                summary,
                json: y.to_json()?,
            })
        }
        Command::TangentialDegree { model } => {
            let cfg = FiberConfig {
                num_starts: cli.starts.unwrap_or(FiberConfig::default().num_starts),
                ..FiberConfig::default()
            };
            let fourfold;
            let abstract_model = SegreVeronese::model_311();
            let param: &dyn Parametrization = match model {
                Model::Abstract => &abstract_model,
                Model::Fourfold => {
                    fourfold = random_fourfold(seed.child("fourfold"))?;
                    &fourfold
                }
            };
            let tp = random_tangential_projection(param, 7, seed.child("centers"), tol)?;
            let fr = fiber_count(param, &tp, seed.child("fiber"), &cfg)?;
            let reduced = fr.all_reduced(cfg.reduced_tol);
            let summary = format!(
                "{} fiber points, all reduced: {reduced}, max residual {:.2e}, starts used {}",
                fr.count, fr.residual_max, fr.starts_used
            );
            outcome(fr.count >= 6 && reduced, summary, &fr)
        }
        Command::Decompose { k, tensor, shape } => {
            let t = match tensor {
                Some(path) => Tensor3::read(path)?,
                None => {
                    let d =
                        random_decomposition(shape3(shape)?, *k, &mut seed.child("tensor").rng());
                    assemble(&d)?
                }
            };
            let cfg = SolverConfig {
                num_starts: cli.starts.unwrap_or(SolverConfig::default().num_starts),
                seed: cli.seed,
                ..SolverConfig::default()
            };
            let r = multistart_decompose(&t, *k, &cfg)?;
            let summary = format!(
                "{} distinct decompositions from {} successes of {} starts, basins {:?}",
                r.distinct_count,
                r.successes,
                r.starts_used,
                r.classes
                    .iter()
                    .map(|c| c.members_found)
                    .collect::<Vec<_>>()
            );
            outcome(r.distinct_count > 0, summary, &r)
        }
        Command::VerifyTheorem => {
            let mut cfg = PipelineConfig {
                rank_tol: tol,
                ..PipelineConfig::default()
            };
            if let Some(n) = cli.starts {
                cfg.solver.num_starts = n;
            }
            let r = verify_unidentifiability(cli.seed, &cfg)?;
            let summary = r
                .verdict
                .stages
                .iter()
                .map(|s| {
                    format!(
                        "{} {}: {}",
                        if s.pass { "PASS" } else { "FAIL" },
                        s.name,
                        s.detail
                    )
                })
                .collect::<Vec<_>>()
                .join("\n");
            outcome(r.verdict.pass, summary, &r)
        }
        Command::ContactCheck => {
            let r = contact_check(cli.seed, tol)?;
            let summary = format!(
                "({}, {}), negative control {}, single tangent space {}",
                r.dim_eight_tangent_span,
                r.dim_augmented_span,
                r.negative_control_dim,
                r.single_tangent_dim
            );
            outcome(r.pass, summary, &r)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
    {
        // only fails if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match run(&cli) {
        Ok(out) => {
            if let Some(path) = &cli.json_out {
                if let Err(e) = std::fs::write(path, &out.json) {
                    eprintln!("error: cannot write {}: {e}", path.display());
                    return ExitCode::from(1);
                }
            }
            if !cli.quiet {
                println!("{}", out.summary);
            }
            ExitCode::from(if out.pass { 0 } else { 1 })
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Structural(_) => 2,
                _ => 1,
            })
        }
    }
}
