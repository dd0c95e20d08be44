//! `--config` files: `key = value` lines seeding subcommand flags.

use std::ffi::OsString;
use std::path::Path;

use clap::Command;
use ctdenoise::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
}

/// Parses `key = value` lines. `#` starts a comment; quotes around values
/// are dropped; `_` in keys reads as `-`.
pub fn parse(text: &str) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::InvalidParams(format!("config line {}: expected key = value", no + 1))
        })?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(Error::InvalidParams(format!("config line {}: empty key", no + 1)));
        }
        let v = v.trim();
        let value = v
            .strip_prefix('"')
            .and_then(|s| s.strip_suffix('"'))
            .unwrap_or(v)
            .to_string();
        out.push(Entry { key, value });
    }
    Ok(out)
}

fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}

fn given_on_command_line(args: &[OsString], long: &str, short: Option<char>) -> bool {
    args.iter().any(|a| {
        let s = a.to_string_lossy();
        s == format!("--{long}")
            || s.starts_with(&format!("--{long}="))
            || short.is_some_and(|c| s.starts_with(&format!("-{c}")) && !s.starts_with("--"))
    })
}

/// Rewrites `argv`, inserting the flags of the subcommand's `--config` file
/// right after the subcommand name unless the same flag is already given.
pub fn expand_args(cmd: &Command, argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(pos) = argv
        .iter()
        .position(|a| cmd.find_subcommand(a.to_string_lossy().as_ref()).is_some())
    else {
        return Ok(argv);
    };
    let sub = cmd
        .find_subcommand(argv[pos].to_string_lossy().as_ref())
        .expect("position found by the same lookup");
    let user = &argv[pos + 1..];
    let Some(path) = config_path(user) else {
        return Ok(argv);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;

    let mut injected: Vec<OsString> = Vec::new();
    for entry in parse(&text)? {
        if entry.key == "config" {
            return Err(Error::InvalidParams("config files cannot include other config files".into()));
        }
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(entry.key.as_str()))
            .ok_or_else(|| {
                Error::InvalidParams(format!(
                    "unknown key '{}' in {} for '{}'",
                    entry.key,
                    path.display(),
                    sub.get_name()
                ))
            })?;
        if given_on_command_line(user, &entry.key, arg.get_short()) {
            continue;
        }
        if arg.get_action().takes_values() {
            injected.push(format!("--{}={}", entry.key, entry.value).into());
        } else {
            match entry.value.as_str() {
                "true" => injected.push(format!("--{}", entry.key).into()),
                "false" => {}
                other => {
                    return Err(Error::InvalidParams(format!(
                        "key '{}' takes true or false, got '{other}'",
                        entry.key
                    )))
                }
            }
        }
    }
    let mut out = argv[..=pos].to_vec();
    out.extend(injected);
    out.extend_from_slice(user);
    Ok(out)
}
