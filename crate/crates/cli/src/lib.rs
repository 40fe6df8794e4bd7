//! Command-line front end for the segmentation toolkit.

pub mod args;
pub mod commands;
pub mod settings;

use std::ffi::OsString;
use std::path::Path;

use clap::error::ErrorKind;
use clap::Parser;

use seqseg_core::Error;

use args::{Cli, Command};
use commands::Ctx;
use settings::{fingerprint, Overrides, Settings};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Exit status for a failed command.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        Error::Numerical(_) => EXIT_NUMERICAL,
        _ => EXIT_DATA,
    }
}

fn overrides(cli: &Cli) -> Overrides {
    let mut o = Overrides::default();
    o.set("seed", cli.seed);
    match &cli.command {
        Command::Train(a) => {
            o.model(&a.model);
            o.train(&a.train);
            o.set("left_context", a.left_ctx);
            o.set("right_context", a.right_ctx);
        }
        Command::Segment(a) => o.infer(&a.infer),
        Command::Bench(a) => o.infer(&a.infer),
        Command::Gradcheck(a) => o.model(&a.model),
        _ => {}
    }
    o
}

fn execute(cli: &Cli) -> seqseg_core::Result<()> {
    let base = match cli.command {
        Command::Gradcheck(_) => commands::gradcheck_base(),
        _ => Settings::default(),
    };
    let settings = base.resolve(cli.config.as_deref(), &overrides(cli))?;
    let name = cli.command.name();
    if !cli.quiet {
        eprintln!(
            "config fingerprint {name} sha256:{}",
            fingerprint(
                name,
                &format!("{:?}", cli.command.without_settings()),
                &settings
            )
        );
    }
    let ctx = Ctx {
        settings,
        workers: cli.workers.max(1),
        quiet: cli.quiet,
    };
    match &cli.command {
        Command::Synth(a) => commands::synth(&ctx, a),
        Command::Convert(a) => commands::convert(&ctx, a),
        Command::Vocab(a) => commands::vocab(&ctx, a),
        Command::Train(a) => commands::train_cmd(&ctx, a),
        Command::Segment(a) => commands::segment(&ctx, a),
        Command::Eval(a) => commands::eval(&ctx, a),
        Command::Bench(a) => commands::bench(&ctx, a),
        Command::Aggregate(a) => commands::aggregate(&ctx, a),
        Command::Gradcheck(a) => commands::gradcheck(&ctx, a),
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .try_init();
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// What a completed smoke run produced.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SmokeOutcome {
    /// Eval report file contents, fixed strategy first.
    pub eval_reports: Vec<String>,
    pub bench_rows: usize,
    pub steps: Vec<usize>,
}

/// Runs synth, convert, vocab, train, segment, eval and bench end to end
/// in `dir` on a tiny configuration.
pub fn pipeline_smoke(dir: &Path) -> Result<SmokeOutcome, String> {
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let stage = |name: &str, args: &[&str], outputs: &[String]| -> Result<(), String> {
        let mut argv = vec![
            "seqseg".to_string(),
            name.to_string(),
            "--quiet".into(),
            "--seed".into(),
            "7".into(),
        ];
        argv.extend(args.iter().map(|s| s.to_string()));
        let code = run(&argv);
        if code != EXIT_OK {
            return Err(format!("stage `{name}` exited with status {code}"));
        }
        for o in outputs {
            let len = std::fs::metadata(o).map(|m| m.len()).unwrap_or(0);
            if len == 0 {
                return Err(format!("stage `{name}` left {o} empty"));
            }
        }
        Ok(())
    };
    let (all, train, test, vocab) = (
        p("all.jsonl"),
        p("train.jsonl"),
        p("test.jsonl"),
        p("vocab.txt"),
    );
    let (model, baseline) = (p("model.json"), p("baseline.json"));
    let model_flags = [
        "--d-model",
        "16",
        "--layers",
        "1",
        "--heads",
        "2",
        "--d-ff",
        "32",
        "--max-seq-len",
        "96",
        "--epochs",
        "3",
        "--batch-size",
        "4",
        "--lr",
        "0.005",
    ];

    stage(
        "synth",
        &["--out", &all, "--docs", "16"],
        std::slice::from_ref(&all),
    )?;
    stage(
        "convert",
        &[
            "--input",
            &all,
            "--format",
            "records",
            "--out",
            &train,
            "--test-docs",
            "4",
            "--test-out",
            &test,
        ],
        &[train.clone(), test.clone()],
    )?;
    stage(
        "vocab",
        &["--corpus", &train, "--size", "200", "--out", &vocab],
        std::slice::from_ref(&vocab),
    )?;
    let mut args = vec!["--corpus", &train, "--vocab", &vocab, "--out", &model];
    args.extend(model_flags);
    stage("train", &args, std::slice::from_ref(&model))?;
    let mut args = vec![
        "--corpus", &train, "--vocab", &vocab, "--out", &baseline, "--head", "cls",
    ];
    args.extend(model_flags);
    args.extend(["--left-ctx", "24", "--right-ctx", "24"]);
    stage("train", &args, std::slice::from_ref(&baseline))?;

    let mut eval_reports = Vec::new();
    for strategy in ["fixed", "adaptive"] {
        let pred = p(&format!("pred_{strategy}.jsonl"));
        let report = p(&format!("eval_{strategy}.json"));
        stage(
            "segment",
            &[
                "--model",
                &model,
                "--vocab",
                &vocab,
                "--corpus",
                &test,
                "--out",
                &pred,
                "--strategy",
                strategy,
                "--step",
                "3",
            ],
            std::slice::from_ref(&pred),
        )?;
        stage(
            "eval",
            &["--pred", &pred, "--corpus", &test, "--out", &report],
            std::slice::from_ref(&report),
        )?;
        eval_reports
            .push(std::fs::read_to_string(&report).map_err(|e| format!("stage `eval`: {e}"))?);
    }

    let bench_out = p("bench.json");
    let steps = vec![1, 3, 5];
    stage(
        "bench",
        &[
            "--model",
            &model,
            "--baseline",
            &baseline,
            "--vocab",
            &vocab,
            "--corpus",
            &test,
            "--steps",
            "1,3,5",
            "--out",
            &bench_out,
            "--left-ctx",
            "24",
            "--right-ctx",
            "24",
        ],
        std::slice::from_ref(&bench_out),
    )?;
    let text = std::fs::read_to_string(&bench_out).map_err(|e| format!("stage `bench`: {e}"))?;
    let report: seqseg_core::eval::BenchReport =
        serde_json::from_str(&text).map_err(|e| format!("stage `bench`: {e}"))?;
    Ok(SmokeOutcome {
        eval_reports,
        bench_rows: report.rows.len(),
        steps,
    })
}
