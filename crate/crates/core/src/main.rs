use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use umner::autodiff::Fault;
use umner::checkpoint::{load_model, save_model};
use umner::config::load_run_config;
use umner::corpus::{parse_dataset, parse_dataset_file, write_predictions, Labels, TokenSequence};
use umner::kappa::{cohens_kappa, ConfusionMatrix};
use umner::metrics::{dataset_stats, format_stats_table, SplitStats};
use umner::model::{tiny_grad_check, Example, Model, TINY_CHECK_EPS};
use umner::report::MetricsDocument;
use umner::tags::EntityType;
use umner::train::{evaluate, load_examples, predict_all, train, TrainOptions};
use umner::{Error, Result};

#[derive(Parser)]
#[command(name = "umner", version, about = "Multimodal named entity recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a config file.
    Train(TrainArgs),
    /// Score a checkpoint on labelled data.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        metrics_out: Option<PathBuf>,
    },
    /// Tag sentences and write them in the dataset format.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Entity counts per split.
    Stats {
        #[arg(long, required = true, num_args = 1..)]
        data: Vec<PathBuf>,
        /// Also write the counts as `key = value` lines.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cohen's kappa of a CSV confusion matrix.
    Kappa {
        #[arg(long)]
        matrix: PathBuf,
    },
    /// Finite-difference check of every parameter group of a tiny model.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Corrupt the sigmoid derivative (negative control).
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    no_self_attn: bool,
    #[arg(long)]
    no_cross_modal: bool,
    #[arg(long)]
    no_visual_gate: bool,
    #[arg(long)]
    text_only: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.kind());
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Train(args) => cmd_train(args),
        Command::Eval {
            ckpt,
            data,
            features,
            metrics_out,
        } => cmd_eval(&ckpt, &data, &features, metrics_out.as_deref()),
        Command::Predict {
            ckpt,
            data,
            features,
            out,
        } => cmd_predict(&ckpt, &data, &features, &out),
        Command::Stats { data, out } => cmd_stats(&data, out.as_deref()),
        Command::Kappa { matrix } => {
            let m = ConfusionMatrix::from_csv_file(&matrix)?;
            println!("{:.4}", cohens_kappa(&m)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Gradcheck { seed, inject_fault } => {
            let fault = inject_fault.then_some(Fault::SigmoidDerivative);
            let (report, margin) = tiny_grad_check(seed, fault)?;
            println!("{report}");
            if report.passed() {
                return Ok(ExitCode::SUCCESS);
            }
            if margin < 10.0 * TINY_CHECK_EPS {
                println!("note: a ReLU input is {margin:.1e} from zero at this seed; finite differences may straddle the kink");
            }
            Ok(ExitCode::FAILURE)
        }
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

fn require_dir(dir: &Path) -> Result<()> {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(Error::Config(format!("feature directory {} does not exist", dir.display())))
    }
}

fn nonempty(data: Vec<TokenSequence>, path: &Path) -> Result<Vec<TokenSequence>> {
    if data.is_empty() {
        return Err(Error::contract(format!("{} contains no sentences", path.display())));
    }
    Ok(data)
}

fn cmd_train(args: TrainArgs) -> Result<ExitCode> {
    let mut rc = load_run_config(&args.config)?;
    let m = &mut rc.model;
    m.use_self_attention &= !args.no_self_attn;
    m.use_cross_modal &= !args.no_cross_modal;
    m.use_visual_gate &= !args.no_visual_gate;
    m.text_only |= args.text_only;
    m.validate()?;
    rc.check_inputs()?;
    for out in [Some(&rc.checkpoint), rc.metrics.as_ref()].into_iter().flatten() {
        ensure_parent(out)?;
    }

    let load = |path: &Path| -> Result<Vec<Example>> {
        let data = nonempty(parse_dataset(path)?, path)?;
        load_examples(data, &rc.features, &rc.model)
    };
    let train_set = load(&rc.train)?;
    let val = rc.val.as_deref().map(load).transpose()?;
    let test = rc.test.as_deref().map(load).transpose()?;

    let opts = TrainOptions {
        target_train_f1: rc.target_train_f1,
    };
    let outcome = train(&rc.model, &train_set, val.as_deref(), &opts)?;
    save_model(&outcome.model, &rc.checkpoint)?;

    let (scored_name, scored) = match (&test, &val) {
        (Some(t), _) => ("test", t),
        (None, Some(v)) => ("val", v),
        _ => ("train", &train_set),
    };
    let started = Instant::now();
    let (report, _) = evaluate(&outcome.model, scored)?;
    let doc = MetricsDocument {
        command: "train".into(),
        variant: rc.model.variant_name(),
        seed: rc.model.seed,
        parameter_count: outcome.model.parameter_count(),
        wall_clock_seconds: outcome.seconds,
        inference_seconds: Some(started.elapsed().as_secs_f64()),
        data: Some(scored_name.into()),
        report,
        loss_curve: outcome.history.clone(),
        selected_epoch: Some(outcome.selected_epoch),
        config: rc.model.clone(),
    };
    if let Some(path) = &rc.metrics {
        doc.write(path)?;
    }
    let sel = outcome.selected();
    println!(
        "trained {} epochs ({}); saved epoch {} to {} (train F1 {:.2}); {} F1 {:.2}",
        outcome.history.len(),
        doc.variant,
        sel.epoch,
        rc.checkpoint.display(),
        sel.train_f1,
        scored_name,
        doc.report.overall.f1() * 100.0
    );
    Ok(ExitCode::SUCCESS)
}

fn load_for_inference(ckpt: &Path, data: &Path, features: &Path, labels: Labels) -> Result<(Model, Vec<Example>)> {
    require_dir(features)?;
    let model = load_model(ckpt)?;
    let seqs = nonempty(parse_dataset_file(data, labels)?, data)?;
    let examples = load_examples(seqs, features, &model.config)?;
    Ok((model, examples))
}

fn cmd_eval(ckpt: &Path, data: &Path, features: &Path, metrics_out: Option<&Path>) -> Result<ExitCode> {
    let started = Instant::now();
    let (model, examples) = load_for_inference(ckpt, data, features, Labels::Required)?;
    let infer = Instant::now();
    let (report, _) = evaluate(&model, &examples)?;
    let inference = infer.elapsed().as_secs_f64();
    let doc = MetricsDocument {
        command: "eval".into(),
        variant: model.config.variant_name(),
        seed: model.config.seed,
        parameter_count: model.parameter_count(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        inference_seconds: Some(inference),
        data: Some(data.display().to_string()),
        report,
        loss_curve: Vec::new(),
        selected_epoch: None,
        config: model.config.clone(),
    };
    match metrics_out {
        Some(path) => {
            ensure_parent(path)?;
            doc.write(path)?;
            let o = &doc.report.overall;
            println!(
                "P {:.2} R {:.2} F1 {:.2}",
                o.precision() * 100.0,
                o.recall() * 100.0,
                o.f1() * 100.0
            );
        }
        None => print!("{}", doc.render()),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_predict(ckpt: &Path, data: &Path, features: &Path, out: &Path) -> Result<ExitCode> {
    let (model, examples) = load_for_inference(ckpt, data, features, Labels::Optional)?;
    let predictions = predict_all(&model, &examples)?;
    ensure_parent(out)?;
    let seqs: Vec<TokenSequence> = examples.into_iter().map(|e| e.seq).collect();
    write_predictions(&seqs, &predictions, out)?;
    println!("wrote {} sentences to {}", seqs.len(), out.display());
    Ok(ExitCode::SUCCESS)
}

fn split_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn stats_text(stats: &[SplitStats]) -> String {
    let mut out = String::new();
    for s in stats {
        out.push_str(&format!("[{}]\n", s.name));
        for kind in EntityType::ALL {
            out.push_str(&format!("{} = {}\n", kind, s.count(kind)));
        }
        out.push_str(&format!("entities = {}\nsentences = {}\ntokens = {}\n\n", s.total_entities(), s.sentences, s.tokens));
    }
    out
}

fn cmd_stats(paths: &[PathBuf], out: Option<&Path>) -> Result<ExitCode> {
    let splits = paths
        .iter()
        .map(|p| Ok((split_name(p), parse_dataset(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let stats = dataset_stats(&splits);
    let mut stdout = std::io::stdout().lock();
    write!(stdout, "{}", format_stats_table(&stats)).map_err(|e| Error::io("<stdout>", e))?;
    if let Some(path) = out {
        std::fs::write(path, stats_text(&stats)).map_err(|e| Error::io(path, e))?;
    }
    Ok(ExitCode::SUCCESS)
}
