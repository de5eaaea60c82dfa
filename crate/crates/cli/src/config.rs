//! Merges a JSON config file into the argument list.
//!
//! The file is an object whose keys are long flag names (`-` or `_`
//! separated). A key named after a subcommand may hold an object with
//! flags for that subcommand only. Values from the file are inserted
//! before the command-line arguments, so the command line wins.

use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::CommandFactory;
use serde_json::{Map, Value};

use crate::Cli;

const VALUE_FLAGS: [&str; 4] = ["--config", "--jobs", "--seed", "--log-level"];

/// Position of the subcommand token and the `--config` path, if any.
fn scan(args: &[String]) -> (Option<usize>, Option<String>) {
    let mut sub = None;
    let mut config = None;
    let mut i = 1;
    while i < args.len() {
        let a = &args[i];
        if a == "--" {
            break;
        }
        if let Some(v) = a.strip_prefix("--config=") {
            config = Some(v.to_string());
        } else if a == "--config" {
            config = args.get(i + 1).cloned();
            i += 1;
        } else if VALUE_FLAGS.contains(&a.as_str()) {
            i += 1;
        } else if !a.starts_with('-') && sub.is_none() {
            sub = Some(i);
        }
        i += 1;
    }
    (sub, config)
}

fn long_flags(cmd: &clap::Command) -> Vec<String> {
    cmd.get_arguments().filter_map(|a| a.get_long().map(str::to_string)).collect()
}

fn push_value(out: &mut Vec<String>, flag: &str, value: &Value) -> Result<()> {
    match value {
        Value::Null | Value::Bool(false) => {}
        Value::Bool(true) => out.push(format!("--{flag}")),
        Value::String(s) => out.extend([format!("--{flag}"), s.clone()]),
        Value::Number(n) => out.extend([format!("--{flag}"), n.to_string()]),
        Value::Array(items) => {
            for item in items {
                if item.is_array() || item.is_object() {
                    bail!("config key {flag:?}: nested arrays and objects are not flag values");
                }
                push_value(out, flag, item)?;
            }
        }
        Value::Object(_) => bail!("config key {flag:?}: objects are not flag values"),
    }
    Ok(())
}

fn expand(map: &Map<String, Value>, sub: &str, top_level: bool, out: &mut Vec<String>) -> Result<()> {
    let root = Cli::command();
    let sub_cmd = root.find_subcommand(sub).with_context(|| format!("unknown subcommand {sub:?}"))?;
    let mine: Vec<String> = long_flags(&root).into_iter().chain(long_flags(sub_cmd)).collect();
    let anywhere: Vec<String> = root.get_subcommands().flat_map(long_flags).collect();
    let sub_names: Vec<String> = root.get_subcommands().map(|c| c.get_name().to_string()).collect();
    for (key, value) in map {
        let flag = key.replace('_', "-");
        if flag == "config" {
            bail!("config files cannot include other config files");
        }
        if top_level && sub_names.contains(key) {
            match value {
                Value::Object(inner) if key == sub => expand(inner, sub, false, out)?,
                Value::Object(_) => {}
                _ => bail!("config key {key:?} names a subcommand and must hold an object"),
            }
        } else if mine.contains(&flag) {
            push_value(out, &flag, value)?;
        } else if !(top_level && anywhere.contains(&flag)) {
            bail!("unknown config key {key:?} for subcommand {sub:?}");
        }
    }
    Ok(())
}

/// Returns `args` with the config file's flags inserted right after the
/// subcommand and the remaining arguments moved behind them.
pub fn merge_config(args: Vec<String>) -> Result<Vec<String>> {
    let (sub_pos, config) = scan(&args);
    let (Some(pos), Some(path)) = (sub_pos, config) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(Path::new(&path)).with_context(|| format!("reading config {path}"))?;
    let value: Value = serde_json::from_str(&text).with_context(|| format!("parsing config {path}"))?;
    let Value::Object(map) = value else {
        bail!("config {path}: top level must be a JSON object");
    };
    let sub = args[pos].clone();
    let mut from_file = Vec::new();
    expand(&map, &sub, true, &mut from_file)?;
    let mut out = vec![args[0].clone(), sub];
    out.extend(from_file);
    out.extend(args[1..pos].iter().cloned());
    out.extend(args[pos + 1..].iter().cloned());
    Ok(out)
}
