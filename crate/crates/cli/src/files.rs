//! Small on-disk formats used between subcommands.

use anyhow::{bail, Context, Result};
use lobhawk::events::MidChange;
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::Path;

/// `seq,before,after` in half-ticks, one row per retained event.
pub fn write_mids(path: &Path, seqs: &[u64], mids: &[MidChange]) -> Result<()> {
    let mut s = String::from("seq,before,after\n");
    for (q, m) in seqs.iter().zip(mids) {
        let _ = writeln!(s, "{q},{},{}", m.before, m.after);
    }
    std::fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

pub fn read_mids(path: &Path) -> Result<Vec<MidChange>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1).filter(|(_, l)| !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            bail!("{}:{}: expected seq,before,after", path.display(), i + 1);
        }
        let p = |s: &str| s.trim().parse::<i64>().with_context(|| format!("{}:{}: bad number {s:?}", path.display(), i + 1));
        out.push(MidChange { before: p(cols[1])?, after: p(cols[2])? });
    }
    Ok(out)
}

/// `time,type` rows with one-based type codes.
pub fn write_pairs(path: &Path, events: &[(f64, usize)]) -> Result<()> {
    let mut s = String::from("time,type\n");
    for (t, k) in events {
        let _ = writeln!(s, "{t},{}", k + 1);
    }
    std::fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(v)?).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mids_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("mids.csv");
        let mids = vec![MidChange { before: 10, after: 12 }, MidChange { before: 12, after: 12 }];
        write_mids(&p, &[3, 4], &mids).unwrap();
        assert_eq!(read_mids(&p).unwrap(), mids);
    }
}
