//! Command-line grammar. Every configuration key gets its own flag
//! (`fiber_length` becomes `--fiber-length`) on every subcommand.

use std::path::PathBuf;

use clap::{Arg, ArgAction, ArgMatches, Command};
use qkdsim_core::params::KEYS;
use qkdsim_core::Config;

/// A parsed invocation: which subcommand, and how to build its configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandRequest {
    pub subcommand: String,
    pub config_path: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// `(key, value)` in the order given; applied after the config file.
    pub overrides: Vec<(String, String)>,
    pub seed: Option<u64>,
    pub extra: Extra,
}

/// Subcommand-specific options.
#[derive(Debug, Clone, PartialEq)]
pub enum Extra {
    Simulate,
    Keyrate { tally_file: Option<PathBuf>, n_pulses: Option<f64> },
    EfficiencyCurve { from: f64, to: f64, points: usize },
    Optimize { n_pulses: f64 },
    Calibrate { target_qber: f64 },
}

pub fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

fn common_args(cmd: Command) -> Command {
    let defaults = Config::default();
    let mut cmd = cmd
        .arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .value_parser(clap::value_parser!(PathBuf))
                .help("key = value configuration file applied over the defaults"),
        )
        .arg(
            Arg::new("out")
                .long("out")
                .value_name("DIR")
                .default_value(".")
                .value_parser(clap::value_parser!(PathBuf))
                .help("output directory"),
        )
        .arg(
            Arg::new("seed")
                .long("seed")
                .value_name("N")
                .value_parser(clap::value_parser!(u64))
                .help("random seed; overrides rng_seed"),
        )
        .arg(
            Arg::new("set")
                .long("set")
                .value_name("KEY=VALUE")
                .action(ArgAction::Append)
                .help("set any configuration key (repeatable)"),
        );
    for key in KEYS {
        let default = defaults.get(key.name).expect("listed key");
        cmd = cmd.arg(
            Arg::new(key.name)
                .long(flag_name(key.name))
                .value_name("VALUE")
                .allow_negative_numbers(true)
                .help_heading("Configuration")
                .help(format!("{} [default: {default}; {}]", key.description, key.provenance)),
        );
    }
    cmd
}

pub fn command() -> Command {
    Command::new("qkdsim")
        .about("Stabilized decoy-state BB84 link simulator with finite-key distillation")
        .subcommand_required(false)
        .arg_required_else_help(false)
        .subcommand(common_args(
            Command::new("simulate").about("run a closed-loop session; writes telemetry.csv, keys.csv, summary.txt"),
        ))
        .subcommand(common_args(
            Command::new("keyrate")
                .about("distill one block from a tally file or from expected counts; writes keyrate.csv")
                .arg(
                    Arg::new("tally-file")
                        .long("tally-file")
                        .value_name("CSV")
                        .value_parser(clap::value_parser!(PathBuf))
                        .help("CSV with columns class,sent,sifted,errors and classes mu, nu1, nu2"),
                )
                .arg(
                    Arg::new("n-pulses")
                        .long("n-pulses")
                        .value_name("N")
                        .value_parser(clap::value_parser!(f64))
                        .help("pulses in the expected block [default: one distillation interval]"),
                ),
        ))
        .subcommand(common_args(
            Command::new("efficiency-curve")
                .about("finite-key efficiency over a log grid of block sizes; writes efficiency_curve.csv")
                .arg(Arg::new("from").long("from").default_value("1e9").value_parser(clap::value_parser!(f64)))
                .arg(Arg::new("to").long("to").default_value("1e15").value_parser(clap::value_parser!(f64)))
                .arg(
                    Arg::new("points")
                        .long("points")
                        .default_value("20")
                        .value_parser(clap::value_parser!(usize)),
                ),
        ))
        .subcommand(common_args(
            Command::new("optimize")
                .about("search source intensities and probabilities; writes optimization.txt, best_config.conf")
                .arg(
                    Arg::new("n-pulses")
                        .long("n-pulses")
                        .default_value("1.2e12")
                        .value_parser(clap::value_parser!(f64))
                        .help("block size the key rate is optimized for"),
                ),
        ))
        .subcommand(common_args(
            Command::new("calibrate")
                .about("solve intrinsic_misalignment_error for a target signal QBER; writes calibrated.conf")
                .arg(
                    Arg::new("target-qber")
                        .long("target-qber")
                        .default_value("0.0385")
                        .value_parser(clap::value_parser!(f64)),
                ),
        ))
}

/// Builds the request from matched arguments. Returns `None` without a subcommand.
pub fn request(matches: &ArgMatches) -> Option<CommandRequest> {
    let (name, m) = matches.subcommand()?;
    let mut overrides = Vec::new();
    // flags first in key order, then --set in the order given
    for key in KEYS {
        if let Some(v) = m.get_one::<String>(key.name) {
            overrides.push((key.name.to_string(), v.clone()));
        }
    }
    for kv in m.get_many::<String>("set").into_iter().flatten() {
        let (k, v) = kv.split_once('=').unwrap_or((kv.as_str(), ""));
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    let f = |id: &str| *m.get_one::<f64>(id).expect("defaulted");
    let extra = match name {
        "simulate" => Extra::Simulate,
        "keyrate" => Extra::Keyrate {
            tally_file: m.get_one::<PathBuf>("tally-file").cloned(),
            n_pulses: m.get_one::<f64>("n-pulses").copied(),
        },
        "efficiency-curve" => Extra::EfficiencyCurve {
            from: f("from"),
            to: f("to"),
            points: *m.get_one::<usize>("points").expect("defaulted"),
        },
        "optimize" => Extra::Optimize { n_pulses: f("n-pulses") },
        "calibrate" => Extra::Calibrate {
            target_qber: f("target-qber"),
        },
        _ => unreachable!("clap rejects unknown subcommands"),
    };
    Some(CommandRequest {
        subcommand: name.to_string(),
        config_path: m.get_one::<PathBuf>("config").cloned(),
        out_dir: m.get_one::<PathBuf>("out").cloned().expect("defaulted"),
        overrides,
        seed: m.get_one::<u64>("seed").copied(),
        extra,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Option<CommandRequest> {
        let m = command().try_get_matches_from(std::iter::once("qkdsim").chain(args.iter().copied())).unwrap();
        request(&m)
    }

    #[test]
    fn duration_and_seed() {
        let r = parse(&["simulate", "--duration", "129600", "--seed", "7"]).unwrap();
        assert_eq!(r.subcommand, "simulate");
        assert_eq!(r.seed, Some(7));
        assert_eq!(r.overrides, [("duration".to_string(), "129600".to_string())]);
    }

    #[test]
    fn no_subcommand() {
        assert!(parse(&[]).is_none());
    }

    #[test]
    fn negative_values_reach_validation() {
        let r = parse(&["simulate", "--mu", "-1"]).unwrap();
        assert_eq!(r.overrides, [("mu".to_string(), "-1".to_string())]);
    }

    #[test]
    fn set_follows_flags() {
        let r = parse(&["keyrate", "--set", "mu=0.4", "--fiber-length", "20"]).unwrap();
        assert_eq!(r.overrides[0].0, "fiber_length");
        assert_eq!(r.overrides[1], ("mu".to_string(), "0.4".to_string()));
    }

    #[test]
    fn every_key_has_a_flag() {
        let cmd = command();
        let sim = cmd.find_subcommand("simulate").unwrap();
        for key in KEYS {
            assert!(sim.get_arguments().any(|a| a.get_long() == Some(flag_name(key.name).as_str())));
        }
    }
}
