//! `key = value` config files, expanded into flags.
//!
//! Config values are spliced into the argument list right after the
//! subcommand, ahead of the user's own flags. Every subcommand lets a later
//! occurrence of a flag override an earlier one, so command-line flags win.
//! Keys may use `_` or `-`; keys that no subcommand accepts are rejected, keys
//! that only other subcommands accept are skipped.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;

use clap::Command;

#[derive(Debug)]
pub enum ConfigError {
    /// Malformed file or unknown key: a usage problem.
    Usage(String),
    /// The file could not be read.
    Io(String),
}

pub fn parse(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected `key = value`", i + 1))?;
        let key = key.trim().replace('_', "-");
        if key.is_empty() {
            return Err(format!("line {}: empty key", i + 1));
        }
        out.push((key, value.trim().to_string()));
    }
    Ok(out)
}

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--" {
            return None;
        }
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(v.into());
        }
    }
    None
}

fn longs(cmd: &Command) -> BTreeSet<String> {
    cmd.get_arguments()
        .filter_map(|a| a.get_long().map(str::to_string))
        .collect()
}

fn all_longs(cmd: &Command, acc: &mut BTreeSet<String>) {
    acc.extend(longs(cmd));
    for sub in cmd.get_subcommands() {
        all_longs(sub, acc);
    }
}

/// Position just past the (possibly nested) subcommand name, with the
/// matching command definition.
fn subcommand_end<'a>(args: &[OsString], root: &'a Command) -> Option<(usize, &'a Command)> {
    let mut cmd = root;
    let mut i = 1;
    let mut found = None;
    while i < args.len() {
        let s = args[i].to_string_lossy();
        if s == "--config" {
            i += 2;
            continue;
        }
        if s.starts_with('-') {
            if found.is_some() {
                break;
            }
            i += 1;
            continue;
        }
        match cmd.find_subcommand(s.as_ref()) {
            Some(sub) => {
                cmd = sub;
                found = Some((i + 1, sub));
                i += 1;
            }
            None => break,
        }
    }
    found
}

/// Returns `args` with config-file values inserted as flags.
pub fn expand(args: Vec<OsString>, root: &Command) -> Result<Vec<OsString>, ConfigError> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path)
        .map_err(|e| ConfigError::Io(format!("cannot read config {}: {e}", path.to_string_lossy())))?;
    let entries =
        parse(&text).map_err(|e| ConfigError::Usage(format!("config {}: {e}", path.to_string_lossy())))?;
    let mut known = BTreeSet::new();
    all_longs(root, &mut known);
    for (key, _) in &entries {
        if !known.contains(key) || key == "config" {
            return Err(ConfigError::Usage(format!("config {}: unknown key `{key}`", path.to_string_lossy())));
        }
    }
    let Some((at, sub)) = subcommand_end(&args, root) else {
        return Ok(args);
    };
    let accepted = longs(sub);
    let inserted: Vec<OsString> = entries
        .into_iter()
        .filter(|(k, _)| accepted.contains(k))
        .map(|(k, v)| format!("--{k}={v}").into())
        .collect();
    let mut out = args[..at].to_vec();
    out.extend(inserted);
    out.extend_from_slice(&args[at..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pairs_and_comments() {
        let p = parse("# hyperparameters\nmax_depth = 4\n\n eta=0.1 # step\n").unwrap();
        assert_eq!(p, vec![("max-depth".into(), "4".into()), ("eta".into(), "0.1".into())]);
        assert!(parse("oops").is_err());
        assert!(parse(" = 3").is_err());
    }
}
