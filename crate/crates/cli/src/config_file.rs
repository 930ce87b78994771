//! `key=value` config files, spliced into the argument list ahead of the
//! real flags so that anything given on the command line takes precedence.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use crate::args::SWITCHES;
use crate::error::{CliError, CliResult};

/// Turns the contents of a config file into flag arguments.
pub fn parse(text: &str) -> CliResult<Vec<OsString>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("config line {}: expected key=value, got `{line}`", i + 1))
        })?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let value = value.trim().trim_matches('"');
        if key.is_empty() {
            return Err(CliError::Usage(format!("config line {}: empty key", i + 1)));
        }
        if key == "config" {
            return Err(CliError::Usage("config files cannot include other config files".into()));
        }
        if SWITCHES.contains(&key.as_str()) {
            match value.to_ascii_lowercase().as_str() {
                "true" | "1" | "yes" | "on" => out.push(OsString::from(format!("--{key}"))),
                "false" | "0" | "no" | "off" => {}
                other => {
                    return Err(CliError::Usage(format!(
                        "config line {}: `{key}` expects true or false, got `{other}`",
                        i + 1
                    )))
                }
            }
        } else {
            out.push(OsString::from(format!("--{key}")));
            out.push(OsString::from(value));
        }
    }
    Ok(out)
}

/// Finds `--config PATH` (or `--config=PATH`) and inserts the file's flags
/// right after the subcommand.
pub fn expand(args: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = args.get(i + 1).cloned();
            if path.is_none() {
                return Err(CliError::Usage("--config needs a path".into()));
            }
            break;
        }
        if let Some(p) = s.strip_prefix("--config=") {
            path = Some(OsString::from(p));
            break;
        }
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let path = Path::new(&path);
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let extra = parse(&text)?;
    let at = 2.min(args.len());
    let mut out = args[..at].to_vec();
    out.extend(extra);
    out.extend_from_slice(&args[at..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strs(v: &[OsString]) -> Vec<String> {
        v.iter().map(|s| s.to_string_lossy().into_owned()).collect()
    }

    #[test]
    fn parses_pairs_switches_and_comments() {
        let got = parse("# c\nlr = 0.5\nhidden_units=32\nfixed-tradeoff=true\nhas_header=false\n\n").unwrap();
        assert_eq!(strs(&got), ["--lr", "0.5", "--hidden-units", "32", "--fixed-tradeoff"]);
        assert!(parse("novalue").is_err());
        assert!(parse("fixed-tradeoff=maybe").is_err());
        assert!(parse("config=x").is_err());
    }
}
