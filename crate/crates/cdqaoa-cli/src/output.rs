//! Self-describing outputs: every JSON and CSV file carries the digest of
//! the configuration that produced it.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

/// SHA-256 of the canonical JSON of `(command, config)`, output path excluded.
pub fn config_digest(command: &str, cfg: &RunConfig) -> String {
    let mut canon = cfg.clone();
    canon.out = None;
    let text = serde_json::to_string(&(command, &canon)).expect("config serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Digest of any serializable value, for record fields naming their inputs.
pub fn value_digest<T: Serialize>(v: &T) -> String {
    let text = serde_json::to_string(v).expect("value serializes");
    hex::encode(&Sha256::digest(text.as_bytes())[..8])
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    command: &'a str,
    config_digest: &'a str,
    config: &'a RunConfig,
    result: &'a T,
}

/// Where the primary JSON goes and where its companion CSV goes.
pub struct Sink {
    pub command: String,
    pub digest: String,
    json: Option<PathBuf>,
}

impl Sink {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        Self { command: command.into(), digest: config_digest(command, cfg), json: cfg.out.clone() }
    }

    /// Writes the JSON envelope to `--out`, or to stdout without one.
    pub fn json<T: Serialize>(&self, cfg: &RunConfig, result: &T) -> anyhow::Result<()> {
        let env = Envelope { command: &self.command, config_digest: &self.digest, config: cfg, result };
        let text = serde_json::to_string_pretty(&env)?;
        match &self.json {
            Some(p) if p.extension().is_some_and(|e| e == "csv") => {
                let p = p.with_extension("json");
                std::fs::write(&p, text + "\n").with_context(|| format!("writing {}", p.display()))?
            }
            Some(p) => std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
            None => println!("{text}"),
        }
        Ok(())
    }

    /// Writes a CSV table next to the JSON (same stem, `.csv`, or with
    /// `suffix` appended to the stem). Without `--out` the table goes to stdout.
    pub fn csv<R: Serialize>(&self, suffix: &str, rows: &[R]) -> anyhow::Result<()> {
        match &self.json {
            Some(p) => {
                let path = sibling(p, suffix);
                let f = File::create(&path).with_context(|| format!("writing {}", path.display()))?;
                self.write_csv(f, rows)
            }
            None => self.write_csv(std::io::stdout().lock(), rows),
        }
    }

    fn write_csv<W: Write, R: Serialize>(&self, mut w: W, rows: &[R]) -> anyhow::Result<()> {
        writeln!(w, "# command: {}", self.command)?;
        writeln!(w, "# config_digest: {}", self.digest)?;
        let mut wr = csv::Writer::from_writer(w);
        for r in rows {
            wr.serialize(r)?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn sibling(p: &Path, suffix: &str) -> PathBuf {
    let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    p.with_file_name(format!("{stem}{suffix}.csv"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_ignores_out_but_not_content() {
        let a = RunConfig::default();
        let b = RunConfig { out: Some("x.json".into()), ..Default::default() };
        let c = RunConfig { seed: 3, ..Default::default() };
        assert_eq!(config_digest("derive", &a), config_digest("derive", &b));
        assert_ne!(config_digest("derive", &a), config_digest("derive", &c));
        assert_ne!(config_digest("derive", &a), config_digest("reverse", &a));
        assert_eq!(config_digest("derive", &a).len(), 64);
    }

    #[test]
    fn sibling_paths() {
        assert_eq!(sibling(Path::new("/t/run.json"), ""), PathBuf::from("/t/run.csv"));
        assert_eq!(sibling(Path::new("/t/run.json"), "_traj"), PathBuf::from("/t/run_traj.csv"));
    }
}
