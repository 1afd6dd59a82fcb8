use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use uavmec::evo::{self, EvoOutcome};
use uavmec::ObjectivePoint;

use crate::output::{fmt_f64, fmt_opt, unix_now, CsvTable, OutputSet, RunManifest};
use crate::{load_config, progress, RunArgs};

pub const ARCHIVE_SCHEMA: &str = "uavmec-archive/1";
pub const MANIFEST_SCHEMA: &str = "uavmec-manifest/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveRecord {
    pub index: usize,
    pub f1: f64,
    pub f2: f64,
    pub weight: [f64; 2],
    pub generation: usize,
    pub task_index: usize,
    /// Relative to the run directory.
    pub checkpoint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveFile {
    pub schema: String,
    pub hv_reference: ObjectivePoint,
    pub eval_seeds: Vec<u64>,
    pub entries: Vec<ArchiveRecord>,
}

impl ArchiveFile {
    pub fn read(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join("archive.json");
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn points(&self) -> Vec<ObjectivePoint> {
        self.entries.iter().map(|e| ObjectivePoint::new(e.f1, e.f2)).collect()
    }
}

pub struct TrainReport {
    pub out: PathBuf,
    pub outcome: EvoOutcome,
    pub manifest: RunManifest,
}

pub fn cmd_train(args: &RunArgs) -> Result<TrainReport> {
    let loaded = load_config(args)?;
    let cfg = &loaded.cfg;
    let started = unix_now();
    let mut out = OutputSet::create(&loaded.out).map_err(|e| crate::ConfigProblem(format!("{e:#}")))?;
    clear_checkpoints(&loaded.out)?;

    let n_gen = cfg.evo.generations;
    let outcome = evo::run_observed(&cfg.evo, &cfg.env_config(), &cfg.learner(), cfg.seed, args.workers, &mut |g, a, hv| {
        progress(args.quiet, || format!("generation {g}/{n_gen}: archive {} hypervolume {hv:.6e}", a.len()))
    })?;

    out.write("config.toml", cfg.to_toml_string()?.as_bytes())?;
    out.write_csv("metrics.csv", &metrics_table(&outcome))?;
    out.write_csv("training.csv", &training_table(&outcome))?;
    out.write_csv("hypervolume.csv", &hv_table(&outcome))?;
    out.write_csv("archive_history.csv", &history_table(&outcome))?;

    let mut entries = Vec::with_capacity(outcome.archive.len());
    for (i, e) in outcome.archive.entries().iter().enumerate() {
        let rel = format!("checkpoints/archive_{i:03}.emot");
        out.write(&rel, &e.task.to_checkpoint().to_bytes())?;
        entries.push(ArchiveRecord {
            index: i,
            f1: e.point.f1,
            f2: e.point.f2,
            weight: e.weight.as_array(),
            generation: e.generation,
            task_index: e.task_index,
            checkpoint: rel,
        });
    }
    for (i, m) in outcome.population.iter().enumerate() {
        out.write(&format!("checkpoints/population_{i:03}.emot"), &m.task.to_checkpoint().to_bytes())?;
    }
    let archive = ArchiveFile {
        schema: ARCHIVE_SCHEMA.into(),
        hv_reference: outcome.hv_reference,
        eval_seeds: outcome.eval_seeds.clone(),
        entries,
    };
    out.write_json("archive.json", &archive)?;

    let mut extra = serde_json::Map::new();
    extra.insert("hv_reference".into(), serde_json::to_value(outcome.hv_reference)?);
    extra.insert("final_hypervolume".into(), serde_json::to_value(outcome.hv_history.last())?);
    extra.insert("workers".into(), args.workers.into());
    let manifest = RunManifest {
        schema: MANIFEST_SCHEMA.into(),
        command: "train".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: loaded.config_sha256.clone(),
        seed: cfg.seed,
        started_unix: started,
        finished_unix: 0,
        files: Vec::new(),
        extra,
    };
    let manifest = out.finish("manifest.json", manifest)?;
    Ok(TrainReport { out: loaded.out, outcome, manifest })
}

/// Drops checkpoints left by an earlier run in the same directory.
fn clear_checkpoints(root: &Path) -> Result<()> {
    let dir = root.join("checkpoints");
    if !dir.is_dir() {
        return Ok(());
    }
    for entry in fs::read_dir(&dir)? {
        let p = entry?.path();
        if p.extension().is_some_and(|x| x == "emot") {
            fs::remove_file(&p)?;
        }
    }
    Ok(())
}

fn metrics_table(o: &EvoOutcome) -> CsvTable {
    let mut t = CsvTable::new(
        "uavmec-metrics",
        &["generation", "task_index", "w1", "w2", "weighted_return", "f1", "f2", "archive_size", "hypervolume", "sparsity"],
        &["-", "-", "-", "-", "scaled", "s", "J", "-", "s*J", "-"],
    );
    for r in &o.generations {
        t.push(vec![
            r.generation.to_string(),
            r.task_index.to_string(),
            fmt_f64(r.weight[0]),
            fmt_f64(r.weight[1]),
            fmt_f64(r.weighted_return),
            fmt_f64(r.f1),
            fmt_f64(r.f2),
            r.archive_size.to_string(),
            fmt_f64(r.hypervolume),
            fmt_opt(r.sparsity),
        ]);
    }
    t
}

fn training_table(o: &EvoOutcome) -> CsvTable {
    let mut t = CsvTable::new(
        "uavmec-training",
        &["generation", "task_index", "iteration", "f1", "f2", "surrogate", "policy_loss", "value_loss", "kl", "indicator"],
        &["-", "-", "-", "s", "J", "-", "-", "-", "nat", "bool"],
    );
    for r in &o.training {
        let s = &r.log.stats;
        t.push(vec![
            r.generation.to_string(),
            r.task_index.to_string(),
            r.iteration.to_string(),
            fmt_f64(r.log.objectives[0]),
            fmt_f64(r.log.objectives[1]),
            fmt_f64(s.surrogate),
            fmt_f64(s.policy_loss),
            fmt_f64(s.value_loss),
            fmt_f64(s.kl),
            u8::from(s.indicator).to_string(),
        ]);
    }
    t
}

fn hv_table(o: &EvoOutcome) -> CsvTable {
    let mut t = CsvTable::new(
        "uavmec-hypervolume",
        &["generation", "archive_size", "hypervolume", "sparsity"],
        &["-", "-", "s*J", "-"],
    );
    for (g, (pts, hv)) in o.archive_history.iter().zip(&o.hv_history).enumerate() {
        t.push(vec![g.to_string(), pts.len().to_string(), fmt_f64(*hv), fmt_opt(evo::sparsity(pts))]);
    }
    t
}

fn history_table(o: &EvoOutcome) -> CsvTable {
    let mut t = CsvTable::new("uavmec-archive-history", &["generation", "f1", "f2"], &["-", "s", "J"]);
    for (g, pts) in o.archive_history.iter().enumerate() {
        for p in pts {
            t.push(vec![g.to_string(), fmt_f64(p.f1), fmt_f64(p.f2)]);
        }
    }
    t
}
