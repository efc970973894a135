//! `--config FILE` expansion.
//!
//! Each `key=value` line becomes `--key value`, inserted right after the
//! subcommand so that flags given on the command line come later and win.

use std::ffi::OsString;
use std::fs;

use lrccs::{Error, Result};

pub const SUBCOMMANDS: &[&str] = &["simulate", "mask", "measure", "recon", "eval"];

/// Flags that take no value; `true` turns them on and `false` leaves them off.
pub const SWITCHES: &[&str] = &["components", "check-model"];

pub fn parse_config(text: &str) -> Result<Vec<OsString>> {
    let mut flags = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::InvalidParameter(format!("config line {}: expected key=value", i + 1))
        })?;
        let key = key.trim().trim_start_matches("--");
        let value = value.trim();
        if key.is_empty() || key == "config" {
            return Err(Error::InvalidParameter(format!(
                "config line {}: invalid key {key:?}",
                i + 1
            )));
        }
        if SWITCHES.contains(&key) {
            match value {
                "true" => flags.push(format!("--{key}").into()),
                "false" => {}
                _ => {
                    return Err(Error::InvalidParameter(format!(
                        "config line {}: {key} takes true or false, got {value:?}",
                        i + 1
                    )))
                }
            }
        } else {
            flags.push(format!("--{key}").into());
            flags.push(value.into());
        }
    }
    Ok(flags)
}

/// Replaces `--config FILE` (or `--config=FILE`) in `args` with the file's flags.
pub fn expand_config(mut args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(pos) = args
        .iter()
        .position(|a| a == "--config" || a.to_string_lossy().starts_with("--config="))
    else {
        return Ok(args);
    };
    let flag = args.remove(pos).to_string_lossy().into_owned();
    let path = match flag.strip_prefix("--config=") {
        Some(p) => OsString::from(p),
        None if pos < args.len() => args.remove(pos),
        None => return Err(Error::InvalidParameter("--config needs a file path".into())),
    };
    let text = fs::read_to_string(&path).map_err(|e| {
        Error::InvalidParameter(format!(
            "cannot read config {}: {e}",
            path.to_string_lossy()
        ))
    })?;
    let flags = parse_config(&text)?;
    let at = args
        .iter()
        .skip(1)
        .position(|a| SUBCOMMANDS.iter().any(|s| a == s))
        .map_or(args.len(), |i| i + 2);
    args.splice(at..at, flags);
    Ok(args)
}
