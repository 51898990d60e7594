//! `arbo`: compile, inspect, validate and score decision-tree models.
//!
//! Exit codes: 0 success, 1 domain failure (invalid matrix, failed check,
//! backend disagreement), 2 usage or input error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use arbo::ensemble::{
    run_bench, Aggregation, Backend, EnsembleModel, EnsembleScorer, ScorerOptions,
};
use arbo::generate::{
    generate_random_tree, random_input, rng_from_seed, GeneratorParams, LeafKind,
};
use arbo::inference::{
    first_argmax, margins, test_phase, traversal_phase, Activation, SoftSelector,
};
use arbo::io::{
    load_bit_matrix, load_dataset_csv, load_model, save_dataset_csv, to_document_string, Model,
};
use arbo::selfcheck::{replay, run_selfcheck, Corruption, Reproducer, SelfCheckConfig};
use arbo::tensorize::{compile, decode_structure, ternary_form, Ordering, Skeleton, TreeTuple};
use arbo::validate::{check_complement_pairs, check_four_rules};
use arbo::{Dataset, Error, FeatureVector, LeafValue, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::json;

#[derive(Parser)]
#[command(name = "arbo", version, about = "Decision trees as bitvector matrices")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a tree document into a tuple document.
    Compile {
        tree: PathBuf,
        #[arg(long, default_value = "bfs")]
        ordering: Ordering,
        #[command(flatten)]
        out: Output,
    },
    /// Recover the tree from a tuple or ternary document, or print the shape
    /// encoded by a matrix document.
    Decode {
        model: PathBuf,
        #[command(flatten)]
        out: Output,
    },
    /// Convert between tree, tuple and ternary documents.
    Export {
        model: PathBuf,
        #[arg(long, value_enum)]
        to: ExportKind,
        /// Internal-node order used when compiling a tree.
        #[arg(long, default_value = "bfs")]
        ordering: Ordering,
        #[command(flatten)]
        out: Output,
    },
    /// Check whether the structure matrix of a document encodes a tree.
    Validate { model: PathBuf },
    /// Score rows with a tree, tuple, ternary or ensemble document.
    Predict(PredictArgs),
    /// Time scoring backends on an ensemble after verifying them against
    /// classic traversal.
    Bench(BenchArgs),
    /// Run the randomized property suite on fuzzed trees.
    Selfcheck(SelfcheckArgs),
    /// Write a random ensemble (and optionally random rows).
    Synth(SynthArgs),
}

#[derive(Args)]
struct Output {
    /// Write to this file instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportKind {
    Tree,
    Tuple,
    Ternary,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// CSV file with a header naming the schema's features.
    #[arg(long, conflicts_with = "x")]
    data: Option<PathBuf>,
    /// One comma-separated numeric input, e.g. `2,1,2,2`.
    #[arg(long, allow_hyphen_values = true)]
    x: Option<String>,
    #[arg(long, default_value = "matrix")]
    backend: Backend,
    /// binarized-relu, relu, scaled-relu(<alpha>) or rectified-quadratic.
    #[arg(long, default_value = "binarized-relu")]
    activation: Activation,
    /// Leaf selector for the soft backend.
    #[arg(long, value_enum, default_value = "softmax")]
    selector: SelectorKind,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Print the test and traversal phases of a single-tree model for `--x`.
    #[arg(long, requires = "x")]
    trace: bool,
    /// Write the `row,leaf,value` CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectorKind {
    Softmax,
    Sparsemax,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    model: PathBuf,
    /// CSV rows to score. Without it, `--rows` random rows are drawn.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    rows: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "classic,matrix,bitwise,ternary"
    )]
    backends: Vec<Backend>,
    /// Timed repetitions per backend; the median is reported.
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelfcheckArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, default_value_t = 16)]
    max_leaves: usize,
    #[arg(long, default_value_t = 16)]
    inputs: usize,
    /// Flip one bit of every compiled B before checking.
    #[arg(long)]
    corrupt: bool,
    #[arg(long, default_value_t = 0, requires = "corrupt")]
    corrupt_row: usize,
    #[arg(long, default_value_t = 0, requires = "corrupt")]
    corrupt_col: usize,
    /// Where to write the reproducer on failure.
    #[arg(long, default_value = "selfcheck-repro.arbo.json")]
    reproducer: PathBuf,
    /// Re-run a reproducer instead of fuzzing.
    #[arg(long)]
    replay: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    trees: usize,
    #[arg(long, default_value_t = 16)]
    leaves: usize,
    #[arg(long, default_value_t = 8)]
    features: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Mix in oblique and categorical tests.
    #[arg(long)]
    mixed: bool,
    /// Number of random rows written to `--data-out`.
    #[arg(long, default_value_t = 0)]
    rows: usize,
    #[arg(long, requires = "rows")]
    data_out: Option<PathBuf>,
    #[command(flatten)]
    out: Output,
}

/// Outcome of a command that ran to completion.
enum Outcome {
    Ok,
    /// The command worked but found a problem.
    Failed,
}

fn emit(text: &str, out: &Output) -> Result<()> {
    match &out.output {
        Some(path) => fs::write(path, text).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

fn tuple_of(model: Model, ordering: Ordering) -> Result<TreeTuple> {
    match model {
        Model::Tree(t) => compile(&t, ordering),
        Model::Tuple(t) => Ok(t),
        Model::Ternary(t) => t.to_tuple(),
        other => Err(Error::Input(format!(
            "expected a tree, tuple or ternary document, got {}",
            other.kind()
        ))),
    }
}

fn shape_text(s: &Skeleton) -> String {
    match s {
        Skeleton::Leaf { row } => format!("L{row}"),
        Skeleton::Split {
            column,
            left,
            right,
        } => {
            format!("(c{column} {} {})", shape_text(left), shape_text(right))
        }
    }
}

fn cmd_compile(path: &Path, ordering: Ordering, out: &Output) -> Result<Outcome> {
    let tuple = match load_model(path)? {
        Model::Tree(t) => compile(&t, ordering)?,
        other => {
            return Err(Error::Input(format!(
                "compile expects a tree document, got {}",
                other.kind()
            )))
        }
    };
    info!(
        "compiled {} leaves, {} internal nodes",
        tuple.n_leaves(),
        tuple.n_internal()
    );
    emit(&to_document_string(&Model::Tuple(tuple))?, out)?;
    Ok(Outcome::Ok)
}

fn cmd_decode(path: &Path, out: &Output) -> Result<Outcome> {
    match load_model(path)? {
        Model::Matrix(b) => {
            let s = decode_structure(&b)?;
            let v = json!({
                "shape": shape_text(&s),
                "columns_bfs": s.columns_bfs(),
                "columns_preorder": s.columns_preorder(),
            });
            emit(&pretty(&v), out)?;
        }
        Model::Ensemble(_) => {
            return Err(Error::Input("decode expects a single-tree document".into()))
        }
        other => {
            let tree = tuple_of(other, Ordering::Bfs)?.to_tree()?;
            emit(&to_document_string(&Model::Tree(tree))?, out)?;
        }
    }
    Ok(Outcome::Ok)
}

fn cmd_export(path: &Path, to: ExportKind, ordering: Ordering, out: &Output) -> Result<Outcome> {
    let model = load_model(path)?;
    let converted = match to {
        ExportKind::Tree => match model {
            Model::Tree(t) => Model::Tree(t),
            other => Model::Tree(tuple_of(other, ordering)?.to_tree()?),
        },
        ExportKind::Tuple => Model::Tuple(tuple_of(model, ordering)?),
        ExportKind::Ternary => Model::Ternary(ternary_form(&tuple_of(model, ordering)?)),
    };
    emit(&to_document_string(&converted)?, out)?;
    Ok(Outcome::Ok)
}

fn cmd_validate(path: &Path) -> Result<Outcome> {
    let b = load_bit_matrix(path)?;
    let report = check_four_rules(&b)?;
    let v = json!({
        "valid": report.valid,
        "violations": report.violations.iter().map(|v| json!({
            "rule": v.rule.to_string(),
            "columns": v.columns,
            "rows": v.rows,
            "message": v.message,
        })).collect::<Vec<_>>(),
        "rank": report.rank,
        "columns": b.cols(),
        "augmented_det_nonzero": report.augmented_det_nonzero,
        "no_complement_pairs": check_complement_pairs(&b),
    });
    print!("{}", pretty(&v));
    Ok(if report.valid {
        Outcome::Ok
    } else {
        Outcome::Failed
    })
}

fn parse_x(text: &str) -> Result<FeatureVector> {
    let values = text
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Input(format!("`{s}` is not a number")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureVector::numeric(values))
}

fn as_ensemble(model: Model) -> Result<EnsembleModel> {
    match model {
        Model::Ensemble(e) => Ok(e),
        other => {
            let tuple = tuple_of(other, Ordering::Bfs)?;
            let aggregation = if tuple.is_regression() {
                Aggregation::Sum
            } else {
                Aggregation::Vote
            };
            EnsembleModel::new(tuple.schema().clone(), vec![tuple], vec![1.0], aggregation)
        }
    }
}

fn trace(
    tuple: &TreeTuple,
    x: &FeatureVector,
    activation: &Activation,
) -> Result<serde_json::Value> {
    tuple.schema().check(x)?;
    let m = margins(tuple, x)?;
    let h = test_phase(tuple, x, activation)?;
    let b = traversal_phase(tuple.bits(), &h)?;
    let leaf = first_argmax(&b)?;
    let value = tuple.values()[leaf].evaluate(x)?;
    Ok(json!({
        "margins": m,
        "activations": h,
        "leaf_scores": b,
        "leaf": leaf,
        "value": value,
    }))
}

fn cmd_predict(args: &PredictArgs) -> Result<Outcome> {
    let model = load_model(&args.model)?;
    if args.trace {
        let x = parse_x(args.x.as_deref().expect("clap requires --x with --trace"))?;
        let tuple = tuple_of(model, Ordering::Bfs)?;
        print!("{}", pretty(&trace(&tuple, &x, &args.activation)?));
        return Ok(Outcome::Ok);
    }
    let ensemble = as_ensemble(model)?;
    let rows = match (&args.data, &args.x) {
        (Some(path), _) => load_dataset_csv(path, ensemble.schema())?.rows,
        (None, Some(x)) => vec![parse_x(x)?],
        (None, None) => return Err(Error::Input("predict needs --data or --x".into())),
    };
    let selector = match args.selector {
        SelectorKind::Softmax => SoftSelector::Softmax {
            temperature: args.temperature,
        },
        SelectorKind::Sparsemax => SoftSelector::WeightedSparsemax { weights: vec![] },
    };
    let options = ScorerOptions {
        activation: args.activation.clone(),
        selector,
    };
    let scorer = EnsembleScorer::new(&ensemble, args.backend, options)?;
    let outputs = scorer.score_rows(&rows, args.workers)?;
    let mut text = String::from("row,leaf,value\n");
    for (row, o) in outputs.iter().enumerate() {
        // One leaf index per tree, `;`-separated; empty for blended backends.
        let leaves = o
            .leaves
            .as_ref()
            .map(|l| l.iter().map(usize::to_string).collect::<Vec<_>>().join(";"))
            .unwrap_or_default();
        let value = match o.value {
            LeafValue::Real(v) => v.to_string(),
            LeafValue::Class(c) => c.to_string(),
        };
        text.push_str(&format!("{row},{leaves},{value}\n"));
    }
    emit(
        &text,
        &Output {
            output: args.out.clone(),
        },
    )?;
    Ok(Outcome::Ok)
}

fn cmd_bench(args: &BenchArgs) -> Result<Outcome> {
    let ensemble = match load_model(&args.model)? {
        Model::Ensemble(e) => e,
        other => as_ensemble(other)?,
    };
    let dataset = match &args.data {
        Some(path) => load_dataset_csv(path, ensemble.schema())?,
        None => {
            let params = GeneratorParams::default();
            let mut rng = rng_from_seed(args.seed);
            Dataset {
                schema: ensemble.schema().clone(),
                rows: (0..args.rows)
                    .map(|_| random_input(&mut rng, ensemble.schema(), &params))
                    .collect(),
            }
        }
    };
    info!(
        "benchmarking {} trees on {} rows",
        ensemble.len(),
        dataset.len()
    );
    let report = run_bench(&ensemble, &dataset, &args.backends, args.reps, args.workers)?;
    let v = serde_json::to_value(&report).map_err(|e| Error::Input(e.to_string()))?;
    emit(
        &pretty(&v),
        &Output {
            output: args.out.clone(),
        },
    )?;
    Ok(Outcome::Ok)
}

fn cmd_selfcheck(args: &SelfcheckArgs) -> Result<Outcome> {
    if let Some(path) = &args.replay {
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        let repro = Reproducer::from_json_str(&text)?;
        return Ok(match replay(&repro)? {
            Some(f) => {
                println!(
                    "{}",
                    json!({"reproduced": true, "property": f.property, "detail": f.detail})
                );
                Outcome::Failed
            }
            None => {
                println!("{}", json!({"reproduced": false}));
                Outcome::Ok
            }
        });
    }
    let config = SelfCheckConfig {
        seed: args.seed,
        count: args.count,
        max_leaves: args.max_leaves,
        inputs_per_tree: args.inputs,
        corruption: args.corrupt.then_some(Corruption {
            row: args.corrupt_row,
            col: args.corrupt_col,
        }),
    };
    let report = run_selfcheck(&config)?;
    let mut v = serde_json::to_value(&report).map_err(|e| Error::Input(e.to_string()))?;
    if let Some(repro) = &report.reproducer {
        fs::write(&args.reproducer, repro.to_json_string()?).map_err(|e| Error::Io {
            path: args.reproducer.clone(),
            source: e,
        })?;
        v["reproducer"] = json!(args.reproducer.display().to_string());
    }
    print!("{}", pretty(&v));
    Ok(if report.passed {
        Outcome::Ok
    } else {
        Outcome::Failed
    })
}

fn cmd_synth(args: &SynthArgs) -> Result<Outcome> {
    let params = if args.mixed {
        GeneratorParams::mixed()
    } else {
        GeneratorParams::default()
    };
    let params = GeneratorParams {
        leaf_kind: LeafKind::Real,
        ..params
    };
    let schema = params.schema(args.features);
    let mut rng = rng_from_seed(args.seed);
    let trees = (0..args.trees)
        .map(|k| {
            let seed = args.seed.wrapping_mul(1_000_003).wrapping_add(k as u64);
            compile(
                &generate_random_tree(seed, args.leaves, args.features, &params)?,
                Ordering::Bfs,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let ensemble = EnsembleModel::sum(schema.clone(), trees)?;
    if let Some(path) = &args.data_out {
        let dataset = Dataset {
            rows: (0..args.rows)
                .map(|_| random_input(&mut rng, &schema, &params))
                .collect(),
            schema,
        };
        save_dataset_csv(path, &dataset)?;
    }
    emit(&to_document_string(&Model::Ensemble(ensemble))?, &args.out)?;
    Ok(Outcome::Ok)
}

fn run(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Compile {
            tree,
            ordering,
            out,
        } => cmd_compile(tree, *ordering, out),
        Command::Decode { model, out } => cmd_decode(model, out),
        Command::Export {
            model,
            to,
            ordering,
            out,
        } => cmd_export(model, *to, *ordering, out),
        Command::Validate { model } => cmd_validate(model),
        Command::Predict(args) => cmd_predict(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Selfcheck(args) => cmd_selfcheck(args),
        Command::Synth(args) => cmd_synth(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("arbo: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 1 })
        }
    }
}
