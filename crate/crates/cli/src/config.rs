//! `--config` files and output headers.
//!
//! A config file is flat TOML whose keys are long flag names (`_` and `-`
//! interchangeable). Its values are spliced into the argument list right
//! after the subcommand, ahead of the user's own flags, so flags given on
//! the command line win.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

const GLOBAL_WITH_VALUE: [&str; 2] = ["--config", "--seed"];
const NESTED: [&str; 1] = ["gen"];

/// Returns `args` with the config file's flags inserted, or unchanged when
/// no `--config` is given.
pub fn expand(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let strings: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let Some(path) = config_path(&strings) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {path}"))?;
    let flags = flags_from_toml(&text).with_context(|| format!("parsing config {path}"))?;
    let at = insertion_point(&strings);
    let mut out = args;
    out.splice(at..at, flags.into_iter().map(OsString::from));
    Ok(out)
}

fn config_path(args: &[String]) -> Option<String> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = a.strip_prefix("--config=") {
            return Some(v.to_string());
        }
    }
    None
}

// index just past the subcommand path (`gen` takes a second token)
fn insertion_point(args: &[String]) -> usize {
    let mut i = 1;
    let mut path_left: Option<usize> = None;
    while i < args.len() {
        let a = &args[i];
        if GLOBAL_WITH_VALUE.contains(&a.as_str()) {
            i += 2;
            continue;
        }
        if a.starts_with('-') {
            i += 1;
            continue;
        }
        let left = path_left.unwrap_or(if NESTED.contains(&a.as_str()) { 2 } else { 1 }) - 1;
        if left == 0 {
            return i + 1;
        }
        path_left = Some(left);
        i += 1;
    }
    args.len()
}

fn flags_from_toml(text: &str) -> Result<Vec<String>> {
    let table: toml::Table = text.parse()?;
    let mut out = Vec::new();
    for (key, value) in table {
        let flag = format!("--{}", if key == "N" { key } else { key.replace('_', "-") });
        match value {
            toml::Value::Boolean(true) => out.push(flag),
            toml::Value::Boolean(false) => {}
            toml::Value::Array(items) => {
                let parts = items.iter().map(scalar).collect::<Result<Vec<_>>>()?;
                out.push(format!("{flag}={}", parts.join(",")));
            }
            other => out.push(format!("{flag}={}", scalar(&other)?)),
        }
    }
    Ok(out)
}

fn scalar(v: &toml::Value) -> Result<String> {
    Ok(match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => f.to_string(),
        toml::Value::Boolean(b) => b.to_string(),
        other => bail!("unsupported config value {other}"),
    })
}

/// The effective configuration as JSON and its SHA-256 digest.
pub fn effective<T: Serialize>(cfg: &T) -> (String, String) {
    let json = serde_json::to_string(cfg).expect("config serializes");
    let digest = Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
    (json, digest)
}

/// Comment lines opening every output file.
pub fn header<T: Serialize>(cfg: &T) -> String {
    let (json, digest) = effective(cfg);
    format!("rieszcap {} config={digest}\nconfig: {json}", env!("CARGO_PKG_VERSION"))
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn owned(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn insertion_after_subcommand_path() {
        assert_eq!(insertion_point(&owned(&["rz", "--seed", "3", "capacity", "--p", "1"])), 4);
        assert_eq!(insertion_point(&owned(&["rz", "gen", "sphere", "--d", "1"])), 3);
        assert_eq!(insertion_point(&owned(&["rz", "--config", "c.toml", "gen", "ifs"])), 5);
        assert_eq!(insertion_point(&owned(&["rz", "verify", "gotz"])), 2);
    }

    #[test]
    fn toml_to_flags() {
        let flags = flags_from_toml("p = 0.5\nexact_sphere = true\nallow_nonconverged = false\ndepths = [8, 10]\nN = 100\n").unwrap();
        assert!(flags.contains(&"--p=0.5".to_string()));
        assert!(flags.contains(&"--exact-sphere".to_string()));
        assert!(flags.contains(&"--depths=8,10".to_string()));
        assert!(flags.contains(&"--N=100".to_string()));
        assert!(!flags.iter().any(|f| f.contains("allow")));
        assert!(flags_from_toml("x = { a = 1 }").is_err());
    }

    #[test]
    fn header_is_stable() {
        let a = header(&("x", 1));
        assert_eq!(a, header(&("x", 1)));
        assert_ne!(a, header(&("x", 2)));
        assert!(a.starts_with("rieszcap "));
    }
}
