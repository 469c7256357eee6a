use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use csma_core::sim::{run_experiment, ExperimentConfig};
use csma_core::{Error, Result};

use crate::RunArgs;

const DEFAULT_OUT_DIR: &str = "csma-out";

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub config_path: PathBuf,
    /// SHA-256 of the config with object keys sorted and whitespace removed.
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub artifact_version: &'static str,
    pub started_at_unix: f64,
    pub finished_at_unix: f64,
    pub runs: Vec<RunEntry>,
}

#[derive(Debug, Serialize)]
pub struct RunEntry {
    pub seed: u64,
    pub metrics: PathBuf,
    pub summary: PathBuf,
}

fn canonical(v: &Value) -> Value {
    match v {
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            Value::Object(keys.into_iter().map(|k| (k.clone(), canonical(&m[k]))).collect())
        }
        Value::Array(a) => Value::Array(a.iter().map(canonical).collect()),
        other => other.clone(),
    }
}

pub fn config_hash(text: &str) -> Result<String> {
    let v: Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let bytes = serde_json::to_vec(&canonical(&v))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

pub fn cmd_run(args: &RunArgs) -> Result<()> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let cfg = ExperimentConfig::from_json(&text)?;
    let hash = config_hash(&text)?;
    let base = args.seed.unwrap_or(cfg.seed);
    let seeds: Vec<u64> = (0..args.seeds).map(|k| base.wrapping_add(k)).collect();
    let out = args.out.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    fs::create_dir_all(&out)?;
    let started = now();

    let runs: Vec<Result<RunEntry>> = seeds
        .par_iter()
        .map(|&seed| {
            let mut c = cfg.clone();
            c.seed = seed;
            let metrics = out.join(format!("seed-{seed}.jsonl"));
            let summary_path = out.join(format!("seed-{seed}.summary.json"));
            let mut w = BufWriter::new(File::create(&metrics)?);
            let summary = run_experiment(&c, &mut w)?;
            std::io::Write::flush(&mut w)?;
            fs::write(&summary_path, serde_json::to_string_pretty(&summary)? + "\n")?;
            eprintln!("seed {seed}: {} epochs, final max Q/t {:.4}", summary.epochs, summary.final_max_queue_rate);
            Ok(RunEntry { seed, metrics, summary: summary_path })
        })
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;

    let manifest = RunManifest {
        config_path: args.config.clone(),
        config_hash: hash,
        seeds,
        output_dir: out.clone(),
        artifact_version: env!("CARGO_PKG_VERSION"),
        started_at_unix: started,
        finished_at_unix: now(),
        runs,
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(out.join("manifest.json"), text.clone() + "\n")?;
    crate::emit(&text)
}
