use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};
use gdsrec::cli::{self, CliError};
use gdsrec::config::{ConfigError, RunConfig, KEYS};
use gdsrec::synth::SynthConfig;

fn with_overrides(cmd: Command) -> Command {
    KEYS.iter().fold(cmd, |cmd, key| {
        cmd.arg(
            Arg::new(*key)
                .long(*key)
                .value_name("VALUE")
                .help_heading("Config overrides"),
        )
    })
}

fn overrides(m: &ArgMatches) -> Vec<(String, String)> {
    KEYS.iter()
        .filter_map(|k| m.get_one::<String>(k).map(|v| (k.to_string(), v.clone())))
        .collect()
}

fn run_config(m: &ArgMatches) -> Result<RunConfig, CliError> {
    let mut cfg = match m.get_one::<PathBuf>("config") {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for (k, v) in overrides(m) {
        cfg.set(&k, &v)?;
    }
    if let Some(t) = m.get_one::<usize>("threads") {
        cfg.train.threads = *t;
    }
    Ok(cfg)
}

fn command() -> Command {
    let config_arg = Arg::new("config")
        .long("config")
        .value_name("FILE")
        .value_parser(clap::value_parser!(PathBuf))
        .help("key=value configuration file");
    let run_arg = Arg::new("run")
        .long("run")
        .value_name("DIR")
        .required(true)
        .value_parser(clap::value_parser!(PathBuf))
        .help("directory written by `train`");
    let count = |name: &'static str, help: &'static str| {
        Arg::new(name)
            .long(name)
            .required(true)
            .value_parser(clap::value_parser!(usize))
            .help(help)
    };
    Command::new("gdsrec")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Social recommendation with attention over rating and trust graphs")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("threads")
                .long("threads")
                .global(true)
                .value_parser(clap::value_parser!(usize))
                .help("worker threads for training and evaluation"),
        )
        .subcommand(with_overrides(
            Command::new("stats")
                .about("Summarize a dataset and its relationship graph")
                .arg(config_arg.clone())
                .arg(
                    Arg::new("export")
                        .long("export")
                        .value_name("FILE")
                        .value_parser(clap::value_parser!(PathBuf))
                        .help("write `<user> <neighbor> <T>` lines"),
                ),
        ))
        .subcommand(with_overrides(
            Command::new("train")
                .about("Train a model and write a run directory")
                .arg(config_arg.clone())
                .arg(
                    Arg::new("quiet")
                        .long("quiet")
                        .action(ArgAction::SetTrue)
                        .help("do not print per-epoch lines"),
                ),
        ))
        .subcommand(with_overrides(
            Command::new("evaluate")
                .about("Evaluate a trained run on its test split")
                .arg(run_arg.clone()),
        ))
        .subcommand(
            Command::new("predict")
                .about("Predict one (user, item) pair")
                .arg(run_arg)
                .arg(Arg::new("user").long("user").required(true))
                .arg(Arg::new("item").long("item").required(true)),
        )
        .subcommand(
            Command::new("synth")
                .about("Write a synthetic dataset with planted communities")
                .arg(count("users", "number of users"))
                .arg(count("items", "number of items"))
                .arg(count("ratings", "number of ratings"))
                .arg(count("trust", "number of directed trust edges"))
                .arg(
                    Arg::new("seed")
                        .long("seed")
                        .default_value("0")
                        .value_parser(clap::value_parser!(u64)),
                )
                .arg(
                    Arg::new("communities")
                        .long("communities")
                        .value_parser(clap::value_parser!(usize)),
                )
                .arg(
                    Arg::new("selection_strength")
                        .long("selection_strength")
                        .value_parser(clap::value_parser!(f64))
                        .help("how strongly community affinity drives which pairs get rated; 0 is uniform"),
                )
                .arg(
                    Arg::new("out")
                        .long("out")
                        .required(true)
                        .value_parser(clap::value_parser!(PathBuf)),
                ),
        )
}

fn dispatch(m: &ArgMatches) -> Result<(), CliError> {
    match m.subcommand() {
        Some(("stats", sub)) => {
            let cfg = run_config(sub)?;
            let export = sub.get_one::<PathBuf>("export");
            print!("{}", cli::cmd_stats(&cfg, export.map(PathBuf::as_path))?);
        }
        Some(("train", sub)) => {
            let cfg = run_config(sub)?;
            let quiet = sub.get_flag("quiet");
            let outcome = cli::cmd_train(&cfg, |rec| {
                if !quiet {
                    eprintln!("{}", rec.log_line());
                }
            })?;
            print!("{}", outcome.report.to_record());
            println!("out_dir={}", outcome.out_dir.display());
        }
        Some(("evaluate", sub)) => {
            let run = sub.get_one::<PathBuf>("run").expect("required");
            let mut ov = overrides(sub);
            if let Some(t) = sub.get_one::<usize>("threads") {
                ov.push(("threads".into(), t.to_string()));
            }
            print!("{}", cli::cmd_evaluate(run, &ov)?.to_record());
        }
        Some(("predict", sub)) => {
            let run = sub.get_one::<PathBuf>("run").expect("required");
            let user = sub.get_one::<String>("user").expect("required");
            let item = sub.get_one::<String>("item").expect("required");
            println!("{}", cli::cmd_predict(run, user, item)?);
        }
        Some(("synth", sub)) => {
            let n = |k: &str| *sub.get_one::<usize>(k).expect("required");
            let mut cfg = SynthConfig::new(
                n("users"),
                n("items"),
                n("ratings"),
                n("trust"),
                *sub.get_one::<u64>("seed").expect("defaulted"),
            );
            if let Some(c) = sub.get_one::<usize>("communities") {
                cfg.communities = *c;
            }
            if let Some(b) = sub.get_one::<f64>("selection_strength") {
                cfg.selection_strength = *b;
            }
            let out = sub.get_one::<PathBuf>("out").expect("required");
            let data = cli::cmd_synth(&cfg, out)?;
            println!("ratings={}", data.ratings.len());
            println!("trust_pairs={}", data.trust.len());
            println!("out_dir={}", out.display());
        }
        _ => return Err(CliError::Config(ConfigError::Invalid("missing subcommand".into()))),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = match command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
