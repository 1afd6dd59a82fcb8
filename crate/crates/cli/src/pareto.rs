use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use uavmec::evo::{hypervolume_clipped, pareto_analysis, sparsity};
use uavmec::{ExperimentConfig, ObjectivePoint};

use crate::output::{fmt_f64, fmt_opt, unix_now, CsvTable, OutputSet, RunManifest};
use crate::train::{ArchiveFile, MANIFEST_SCHEMA};
use crate::{progress, ConfigProblem, ParetoArgs};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    /// Archive indices (the `index` field of `archive.json`), sorted by `f1`.
    pub members: Vec<usize>,
    pub polyline: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoFile {
    pub schema: String,
    pub k: usize,
    pub hv_reference: ObjectivePoint,
    pub clusters: Vec<ClusterRecord>,
}

/// Writes `pareto/front.json` and `pareto/summary.csv` inside the run directory.
pub fn cmd_pareto(args: &ParetoArgs) -> Result<PathBuf> {
    let started = unix_now();
    let cfg_path = args.run.join("config.toml");
    let text = fs::read_to_string(&cfg_path).with_context(|| format!("reading {}", cfg_path.display()))?;
    let cfg = ExperimentConfig::from_toml_str(&text).map_err(|e| ConfigProblem(format!("{}: {e}", cfg_path.display())))?;
    let archive = ArchiveFile::read(&args.run)?;
    if archive.entries.is_empty() {
        bail!("archive in {} is empty", args.run.display());
    }
    let k = args.k.unwrap_or(cfg.evo.kmeans_k);
    if k == 0 {
        return Err(ConfigProblem("k must be at least 1".into()).into());
    }
    let points = archive.points();
    let front = pareto_analysis(&points, k);
    let clusters = front
        .clusters
        .into_iter()
        .map(|c| ClusterRecord {
            members: c.members.iter().map(|&i| archive.entries[i].index).collect(),
            polyline: c.polyline,
        })
        .collect::<Vec<_>>();
    let hv = hypervolume_clipped(&points, &archive.hv_reference);
    let sp = sparsity(&points);

    let dir = args.run.join("pareto");
    let mut out = OutputSet::create(&dir)?;
    let n_clusters = clusters.len();
    out.write_json(
        "front.json",
        &ParetoFile { schema: "uavmec-pareto/1".into(), k, hv_reference: archive.hv_reference, clusters },
    )?;
    let mut summary = CsvTable::new(
        "uavmec-pareto-summary",
        &["n_points", "n_clusters", "hypervolume", "sparsity", "ref_f1", "ref_f2"],
        &["-", "-", "s*J", "-", "s", "J"],
    );
    summary.push(vec![
        points.len().to_string(),
        n_clusters.to_string(),
        fmt_f64(hv),
        fmt_opt(sp),
        fmt_f64(archive.hv_reference.f1),
        fmt_f64(archive.hv_reference.f2),
    ]);
    out.write_csv("summary.csv", &summary)?;
    progress(args.quiet, || format!("{} points in {n_clusters} clusters, hypervolume {hv:.6e}", points.len()));
    out.finish(
        "manifest.json",
        RunManifest {
            schema: MANIFEST_SCHEMA.into(),
            command: "pareto".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: crate::config_hash(&cfg)?,
            seed: cfg.seed,
            started_unix: started,
            finished_unix: 0,
            files: Vec::new(),
            extra: serde_json::Map::new(),
        },
    )?;
    Ok(dir)
}
