use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use chsnn::config::RunConfig;
use chsnn::experiment::{compare_networks, evaluate_network, load_checkpoint, load_dataset, run_train};
use chsnn::Error;
use clap::{Arg, ArgAction, ArgMatches, Command};

fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

/// Every config key doubles as a `--flag value` override.
fn with_config_flags(cmd: Command) -> Command {
    let cmd = cmd.arg(
        Arg::new("config")
            .long("config")
            .short('c')
            .value_name("FILE")
            .help("key = value config file; flags override it"),
    );
    RunConfig::KEYS.iter().fold(cmd, |cmd, key| {
        cmd.arg(
            Arg::new(*key)
                .long(flag_name(key))
                .value_name("VALUE")
                .help_heading("Config overrides"),
        )
    })
}

fn checkpoint_arg(id: &'static str, long: &'static str) -> Arg {
    Arg::new(id)
        .long(long)
        .value_name("FILE")
        .required(true)
        .value_parser(clap::value_parser!(PathBuf))
}

fn cli() -> Command {
    Command::new("chsnn")
        .about("Dynamic sparse training for spiking neural networks")
        .subcommand_required(true)
        .args_override_self(true)
        .arg_required_else_help(true)
        .subcommand(
            with_config_flags(Command::new("train").about("Train a network and write CSV logs, checkpoint and summary"))
                .arg(Arg::new("quiet").long("quiet").short('q').action(ArgAction::SetTrue)),
        )
        .subcommand(
            with_config_flags(Command::new("eval").about("Evaluate a checkpoint on the configured test set"))
                .arg(checkpoint_arg("checkpoint", "checkpoint")),
        )
        .subcommand(
            with_config_flags(Command::new("compare").about("Compare two checkpoints on the configured test set"))
                .arg(checkpoint_arg("a", "a"))
                .arg(checkpoint_arg("b", "b"))
                .arg(
                    Arg::new("csv")
                        .long("csv")
                        .value_name("FILE")
                        .value_parser(clap::value_parser!(PathBuf))
                        .help("also write the table as CSV"),
                ),
        )
        .subcommand(
            Command::new("inspect-mask")
                .about("Dump the edge list of one layer of a checkpoint")
                .arg(checkpoint_arg("checkpoint", "checkpoint"))
                .arg(
                    Arg::new("layer")
                        .long("layer")
                        .default_value("0")
                        .value_parser(clap::value_parser!(usize)),
                )
                .arg(
                    Arg::new("output")
                        .long("output")
                        .short('o')
                        .value_parser(clap::value_parser!(PathBuf)),
                ),
        )
}

fn config_from(m: &ArgMatches) -> chsnn::Result<RunConfig> {
    let mut cfg = match m.get_one::<String>("config") {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for key in RunConfig::KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)
                .map_err(|e| Error::Config(format!("--{}: {e}", flag_name(key))))?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn train(m: &ArgMatches) -> chsnn::Result<()> {
    let cfg = config_from(m)?;
    let quiet = m.get_flag("quiet");
    let (outcome, files) = run_train(&cfg, |e| {
        if !quiet {
            eprintln!(
                "epoch {:>3}  loss {:.4}  acc {:.4}  sparsity {:.4}  zeta {:.4}  sops {}",
                e.epoch, e.loss, e.accuracy, e.energy.link_sparsity, e.zeta, e.energy.sops
            );
        }
    })?;
    let s = &outcome.summary;
    println!("accuracy {:.4}", s.accuracy);
    println!("link_sparsity {:.6}", s.link_sparsity);
    println!("overall_link_sparsity {:.6}", s.overall_link_sparsity);
    println!("node_sparsity {:.6}", s.node_sparsity);
    println!("sops {}", s.energy.sops);
    println!("energy_joules {:e}", s.energy.energy_joules);
    println!("metrics {}", files.metrics.display());
    println!("checkpoint {}", files.checkpoint.display());
    Ok(())
}

fn eval(m: &ArgMatches) -> chsnn::Result<()> {
    let cfg = config_from(m)?;
    let net = load_checkpoint(m.get_one::<PathBuf>("checkpoint").unwrap())?;
    let test = load_dataset(&cfg.test_images, &cfg.test_labels, cfg.test_limit)?;
    let ev = evaluate_network(&net, &test, cfg.seed_encode, cfg.pj_per_sop)?;
    println!("accuracy {:.4}", ev.accuracy);
    println!("overall_link_sparsity {:.6}", ev.overall_link_sparsity);
    println!("{}", ev.energy.to_json());
    Ok(())
}

fn compare(m: &ArgMatches) -> chsnn::Result<()> {
    let cfg = config_from(m)?;
    let a = load_checkpoint(m.get_one::<PathBuf>("a").unwrap())?;
    let b = load_checkpoint(m.get_one::<PathBuf>("b").unwrap())?;
    let test = load_dataset(&cfg.test_images, &cfg.test_labels, cfg.test_limit)?;
    let cmp = compare_networks(&a, &b, &test, cfg.seed_encode, cfg.pj_per_sop)?;
    print!("{}", cmp.to_table());
    println!("energy ratio b/a {:.4}", 1.0 / cmp.energy_ratio);
    if let Some(path) = m.get_one::<PathBuf>("csv") {
        fs::write(path, cmp.to_csv())?;
    }
    Ok(())
}

fn inspect_mask(m: &ArgMatches) -> chsnn::Result<()> {
    let net = load_checkpoint(m.get_one::<PathBuf>("checkpoint").unwrap())?;
    let l = *m.get_one::<usize>("layer").unwrap();
    if l >= net.layers().len() {
        return Err(Error::Config(format!(
            "layer {l} out of range; the network has {} layers",
            net.layers().len()
        )));
    }
    let edges = net.layer(l).mask().to_edge_list();
    match m.get_one::<PathBuf>("output") {
        Some(path) => fs::write(path, edges)?,
        None => print!("{edges}"),
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::IsolatedNodes(_) | Error::InvalidParameter(_) => 1,
        Error::Io(_) | Error::BadMagic { .. } | Error::Truncated { .. } | Error::CountMismatch { .. } => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match matches.subcommand() {
        Some(("train", m)) => train(m),
        Some(("eval", m)) => eval(m),
        Some(("compare", m)) => compare(m),
        Some(("inspect-mask", m)) => inspect_mask(m),
        _ => unreachable!("subcommand is required"),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
