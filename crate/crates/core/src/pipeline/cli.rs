use std::path::PathBuf;

use super::commands::{cmd_encode, cmd_eval, cmd_gradcheck, cmd_infer, cmd_nds, cmd_synth, cmd_train_toy};
use super::config::RunConfig;
use crate::error::{Error, Result};

pub const COMMANDS: [&str; 7] = ["synth", "encode", "train-toy", "infer", "eval", "gradcheck", "nds"];

pub const USAGE: &str = "usage: anchorfree3d <synth|encode|train-toy|infer|eval|gradcheck|nds> \
[--config PATH] [--seed N] [--out DIR] [--key value ...]";

#[derive(Debug, Clone, PartialEq)]
pub struct Invocation {
    pub command: String,
    pub config: Option<PathBuf>,
    /// `(key, value)` overrides in command-line order; dashes in keys become
    /// underscores and a flag without a value means `true`.
    pub overrides: Vec<(String, String)>,
}

pub fn parse_args(args: &[String]) -> Result<Invocation> {
    let (command, rest) = args.split_first().ok_or_else(|| Error::Config(USAGE.into()))?;
    if !COMMANDS.contains(&command.as_str()) {
        return Err(Error::Config(format!("unknown command `{command}`\n{USAGE}")));
    }
    let mut config = None;
    let mut overrides = Vec::new();
    let mut i = 0;
    while i < rest.len() {
        let key = rest[i]
            .strip_prefix("--")
            .ok_or_else(|| Error::Config(format!("expected `--key`, got `{}`", rest[i])))?
            .replace('-', "_");
        let value = match rest.get(i + 1) {
            Some(v) if !v.starts_with("--") => {
                i += 2;
                v.clone()
            }
            _ => {
                i += 1;
                "true".to_string()
            }
        };
        if key == "config" {
            config = Some(PathBuf::from(value));
        } else {
            overrides.push((key, value));
        }
    }
    Ok(Invocation {
        command: command.clone(),
        config,
        overrides,
    })
}

/// Runs one command, sending `key=value` log lines to `log`. Returns the
/// process exit code.
pub fn run(args: &[String], log: &mut dyn FnMut(&str)) -> Result<i32> {
    let inv = parse_args(args)?;
    let cfg = RunConfig::load(inv.config.as_deref(), &inv.overrides)?;
    log(&format!("command={} seed={} out={}", inv.command, cfg.seed, cfg.out.display()));
    match inv.command.as_str() {
        "synth" => cmd_synth(&cfg, log)?,
        "encode" => cmd_encode(&cfg, log)?,
        "train-toy" => {
            cmd_train_toy(&cfg, log)?;
        }
        "infer" => {
            cmd_infer(&cfg, log)?;
        }
        "eval" => {
            cmd_eval(&cfg, log)?;
        }
        "gradcheck" => {
            let report = cmd_gradcheck(&cfg, log)?;
            for line in report.to_table().lines() {
                log(line);
            }
            if !report.passed() {
                log(&format!("event=gradcheck_failed failures={}", report.failures().len()));
                return Ok(2);
            }
        }
        "nds" => {
            cmd_nds(&cfg, log)?;
        }
        _ => unreachable!("command validated by parse_args"),
    }
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn flags_and_overrides() {
        let inv = parse_args(&args("infer --config run.cfg --seed 3 --oracle-head --out /tmp/x --max-detections 9")).unwrap();
        assert_eq!(inv.command, "infer");
        assert_eq!(inv.config, Some(PathBuf::from("run.cfg")));
        assert_eq!(
            inv.overrides,
            vec![
                ("seed".into(), "3".into()),
                ("oracle_head".into(), "true".into()),
                ("out".into(), "/tmp/x".into()),
                ("max_detections".into(), "9".into()),
            ]
        );
    }

    #[test]
    fn bad_invocations() {
        assert!(parse_args(&[]).is_err());
        assert!(parse_args(&args("fly")).is_err());
        assert!(parse_args(&args("synth seed 3")).is_err());
    }
}
