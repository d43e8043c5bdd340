//! `sea`: command-line driver for the spoken term discovery pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{value_parser, Arg, ArgAction, ArgMatches, Command};

use sea_core::bench::{run_experiment, ExperimentSpec};
use sea_core::config::{PipelineConfig, CONFIG_KEYS};
use sea_core::pipeline::{Pipeline, RunOptions, Stage, StageStatus};
use sea_core::synth::{gen_synthetic_corpus, SynthConfig};

fn cli() -> Command {
    let mut cmd = Command::new("sea")
        .about("Unsupervised spoken term discovery with a self-expressing autoencoder")
        .subcommand_required(true)
        .args_override_self(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("config")
                .long("config")
                .global(true)
                .value_name("PATH")
                .value_parser(value_parser!(PathBuf))
                .help("key = value configuration file; command-line keys win"),
        )
        .arg(
            Arg::new("jobs")
                .long("jobs")
                .global(true)
                .value_name("N")
                .value_parser(value_parser!(usize))
                .help("worker threads for per-utterance stages (0 = all cores)"),
        )
        .arg(
            Arg::new("force")
                .long("force")
                .global(true)
                .action(ArgAction::SetTrue)
                .help("rerun stages whose outputs already exist"),
        );
    for (key, help) in CONFIG_KEYS {
        cmd = cmd.arg(
            Arg::new(*key)
                .long(*key)
                .global(true)
                .value_name("VALUE")
                .help(*help),
        );
    }
    for stage in Stage::ALL {
        cmd = cmd.subcommand(Command::new(stage.name()).about(format!("run the {} stage", stage.name())));
    }
    cmd.subcommand(Command::new("pipeline").about("run every stage in order"))
        .subcommand(
            Command::new("plot")
                .about("write a similarity-matrix image of one utterance")
                .arg(Arg::new("utt").long("utt").required(true).value_name("UTT_ID"))
                .arg(
                    Arg::new("out")
                        .long("out")
                        .required(true)
                        .value_name("PATH")
                        .value_parser(value_parser!(PathBuf)),
                ),
        )
        .subcommand(
            Command::new("synth")
                .about("generate a synthetic corpus with gold alignments")
                .arg(
                    Arg::new("out")
                        .long("out")
                        .required(true)
                        .value_name("DIR")
                        .value_parser(value_parser!(PathBuf)),
                )
                .arg(
                    Arg::new("num-phones")
                        .long("num-phones")
                        .value_parser(value_parser!(usize))
                        .default_value("2"),
                )
                .arg(
                    Arg::new("num-utts")
                        .long("num-utts")
                        .value_parser(value_parser!(usize))
                        .default_value("50"),
                ),
        )
        .subcommand(
            Command::new("experiment")
                .about("run an experiment spec and check its bounds")
                .arg(
                    Arg::new("spec")
                        .required(true)
                        .value_name("SPEC")
                        .value_parser(value_parser!(PathBuf)),
                )
                .arg(
                    Arg::new("out")
                        .long("out")
                        .required(true)
                        .value_name("DIR")
                        .value_parser(value_parser!(PathBuf)),
                ),
        )
}

/// Config file first, then every `--key value` given on the command line.
fn build_config(m: &ArgMatches) -> Result<PipelineConfig> {
    let mut cfg = match m.get_one::<PathBuf>("config") {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    for (key, _) in CONFIG_KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    Ok(cfg)
}

fn report(results: &[(Stage, StageStatus)]) {
    for (stage, status) in results {
        let s = match status {
            StageStatus::Ran => "done",
            StageStatus::Skipped => "skipped (output exists)",
        };
        println!("{}: {s}", stage.name());
    }
}

fn run(m: &ArgMatches) -> Result<()> {
    let (name, sub) = m.subcommand().expect("subcommand is required");
    let cfg = build_config(sub)?;
    let opts = RunOptions {
        jobs: sub.get_one::<usize>("jobs").copied().unwrap_or(0),
        force: sub.get_flag("force"),
    };
    match name {
        "pipeline" => {
            let pipe = Pipeline::new(cfg, opts)?;
            report(&pipe.run_all()?);
            let metrics = pipe.path(Stage::Evaluate.output());
            if metrics.exists() {
                print!("{}", std::fs::read_to_string(metrics)?);
            }
        }
        "plot" => {
            let pipe = Pipeline::new(cfg, opts)?;
            let utt = sub.get_one::<String>("utt").expect("required");
            let out = sub.get_one::<PathBuf>("out").expect("required");
            pipe.plot_utterance(utt, out)?;
            println!("wrote {}", out.display());
        }
        "synth" => {
            let out = sub.get_one::<PathBuf>("out").expect("required");
            let synth = SynthConfig {
                num_phones: *sub.get_one("num-phones").expect("defaulted"),
                num_utts: *sub.get_one("num-utts").expect("defaulted"),
                seed: cfg.sea.rng_seed as u64,
                ..SynthConfig::default()
            };
            let (_, files) = gen_synthetic_corpus(&synth, out)?;
            let conf = out.join("sea.conf");
            std::fs::write(
                &conf,
                "manifest = manifest.tsv\nphones = gold.phn\nwords = gold.wrd\nworkdir = work\n",
            )
            .with_context(|| format!("writing {}", conf.display()))?;
            println!("wrote {} and {}", files.manifest.display(), conf.display());
        }
        "experiment" => {
            let spec = ExperimentSpec::load(sub.get_one::<PathBuf>("spec").expect("required"))?;
            let out = sub.get_one::<PathBuf>("out").expect("required");
            let result = run_experiment(&spec, out);
            let report = sea_core::bench::report_path(out);
            if report.exists() {
                print!("{}", std::fs::read_to_string(report)?);
            }
            result?;
        }
        stage => {
            let stage = Stage::from_name(stage).expect("subcommands mirror stages");
            let pipe = Pipeline::new(cfg, opts)?;
            report(&[(stage, pipe.run_stage(stage)?)]);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    match run(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_definition_is_consistent() {
        cli().debug_assert();
    }

    #[test]
    fn command_line_overrides_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let conf = dir.path().join("c.conf");
        std::fs::write(&conf, "hidden_dim = 32\ntau = 3\n").unwrap();
        let m = cli()
            .try_get_matches_from([
                "sea",
                "segment",
                "--config",
                conf.to_str().unwrap(),
                "--tau",
                "4",
            ])
            .unwrap();
        let cfg = build_config(m.subcommand().unwrap().1).unwrap();
        assert_eq!(cfg.sea.hidden_dim, 32);
        assert_eq!(cfg.seg.tau, 4);
    }
}
