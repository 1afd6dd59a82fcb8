use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use uavmec::baselines::{self, BaselineKind, BaselineParams};
use uavmec::env::{episode_objectives, EpisodeLedger, UavMecEnv};
use uavmec::mopg::train::evaluate_ledgers;
use uavmec::mopg::{TaskTuple, ACTION_DIM};
use uavmec::nn::Checkpoint;

use crate::output::{fmt_f64, unix_now, CsvTable, OutputSet, RunManifest};
use crate::train::MANIFEST_SCHEMA;
use crate::{load_config, progress, BaselineArgs, EvaluateArgs, Loaded};

/// Per-slot trace: one row for the initial pose, then one per slot.
pub fn trajectory_table(ledger: &EpisodeLedger) -> CsvTable {
    let mut t = CsvTable::new(
        "uavmec-trajectory",
        &["clock", "x", "y", "accepted", "d_slot", "e_slot", "wait_slot", "sched_slot", "fly_energy", "penalized"],
        &["slot", "m", "m", "gd ids", "s", "J", "s", "s", "J", "bool"],
    );
    let (x0, y0) = ledger.initial_pose.map_or((0.0, 0.0), |p| (p.x, p.y));
    let zero = fmt_f64(0.0);
    t.push(vec![
        "0".into(),
        fmt_f64(x0),
        fmt_f64(y0),
        String::new(),
        zero.clone(),
        zero.clone(),
        zero.clone(),
        zero.clone(),
        zero,
        "0".into(),
    ]);
    for s in &ledger.slots {
        let ids: Vec<String> = s.accepted.iter().map(|i| i.to_string()).collect();
        t.push(vec![
            (s.clock + 1).to_string(),
            fmt_f64(s.pose.x),
            fmt_f64(s.pose.y),
            ids.join(";"),
            fmt_f64(s.delay),
            fmt_f64(s.energy),
            fmt_f64(s.wait),
            fmt_f64(s.sched_accrued),
            fmt_f64(s.flight_energy),
            u8::from(s.penalized).to_string(),
        ]);
    }
    t
}

fn seeds_or_default(seeds: &[u64], loaded: &Loaded) -> Vec<u64> {
    if seeds.is_empty() {
        loaded.cfg.evo.eval_seeds(loaded.cfg.seed)
    } else {
        seeds.to_vec()
    }
}

fn manifest(command: &str, loaded: &Loaded, started: u64, extra: serde_json::Map<String, serde_json::Value>) -> RunManifest {
    RunManifest {
        schema: MANIFEST_SCHEMA.into(),
        command: command.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: loaded.config_sha256.clone(),
        seed: loaded.cfg.seed,
        started_unix: started,
        finished_unix: 0,
        files: Vec::new(),
        extra,
    }
}

fn resolve(path: &Path, run_dir: &Path) -> PathBuf {
    if path.is_relative() && !path.exists() {
        let alt = run_dir.join(path);
        if alt.exists() {
            return alt;
        }
    }
    path.to_path_buf()
}

/// Loads a checkpoint and checks it fits the configured environment.
pub fn load_task(path: &Path, loaded: &Loaded) -> Result<TaskTuple> {
    let bytes = fs::read(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
    let ck = Checkpoint::from_bytes(&bytes).with_context(|| format!("decoding {}", path.display()))?;
    let task = TaskTuple::from_checkpoint(ck, loaded.cfg.ppo.lr)?;
    let want = loaded.cfg.env.observation_dim();
    if task.policy.obs_dim() != want || task.policy.act_dim() != ACTION_DIM {
        bail!(
            "checkpoint {} expects {} observations and {} actions; the config gives {} and {}",
            path.display(),
            task.policy.obs_dim(),
            task.policy.act_dim(),
            want,
            ACTION_DIM
        );
    }
    Ok(task)
}

/// Writes `eval/<label>/summary.csv` (seed, f1, f2) and one trajectory per seed.
pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<PathBuf> {
    let loaded = load_config(&args.run)?;
    let started = unix_now();
    let seeds = seeds_or_default(&args.seeds, &loaded);
    let (label, ledgers) = match (&args.baseline, &args.checkpoint) {
        (Some(kind), _) => {
            let l = baselines::baseline_ledgers(*kind, BaselineParams::default(), &loaded.cfg.env_config(), &seeds)?;
            (kind.to_string(), l)
        }
        (None, Some(ck)) => {
            let path = resolve(ck, &loaded.out);
            let task = load_task(&path, &loaded)?;
            let mut env = UavMecEnv::new(loaded.cfg.env_config())?;
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "policy".into());
            (stem, evaluate_ledgers(&task.policy, &mut env, &seeds)?)
        }
        (None, None) => bail!("either --checkpoint or --baseline is required"),
    };
    let label = args.label.clone().unwrap_or(label);
    let dir = loaded.out.join("eval").join(&label);
    let mut out = OutputSet::create(&dir)?;
    let mut summary = CsvTable::new("uavmec-evaluation", &["seed", "f1", "f2"], &["-", "s", "J"]);
    for (seed, ledger) in seeds.iter().zip(&ledgers) {
        let (f1, f2) = episode_objectives(ledger)?;
        summary.push(vec![seed.to_string(), fmt_f64(f1), fmt_f64(f2)]);
        out.write_csv(&format!("trajectory_{seed}.csv"), &trajectory_table(ledger))?;
        progress(args.run.quiet, || format!("{label} seed {seed}: f1 {f1:.6e} s, f2 {f2:.6e} J"));
    }
    out.write_csv("summary.csv", &summary)?;
    let mut extra = serde_json::Map::new();
    extra.insert("label".into(), label.into());
    out.finish("manifest.json", manifest("evaluate", &loaded, started, extra))?;
    Ok(dir)
}

/// Writes `baselines/per_seed.csv` and `baselines/summary.csv`.
pub fn cmd_baseline(args: &BaselineArgs) -> Result<PathBuf> {
    let loaded = load_config(&args.run)?;
    let started = unix_now();
    let seeds = seeds_or_default(&args.seeds, &loaded);
    let kinds: Vec<BaselineKind> = match args.kind {
        Some(k) => vec![k],
        None => BaselineKind::ALL.to_vec(),
    };
    let dir = loaded.out.join("baselines");
    let mut out = OutputSet::create(&dir)?;
    let mut per_seed = CsvTable::new("uavmec-baseline-seeds", &["kind", "seed", "f1", "f2"], &["-", "-", "s", "J"]);
    let mut summary = CsvTable::new("uavmec-baseline-summary", &["kind", "f1", "f2"], &["-", "s", "J"]);
    for kind in kinds {
        let ledgers = baselines::baseline_ledgers(kind, BaselineParams::default(), &loaded.cfg.env_config(), &seeds)?;
        for (seed, l) in seeds.iter().zip(&ledgers) {
            let (f1, f2) = episode_objectives(l)?;
            per_seed.push(vec![kind.to_string(), seed.to_string(), fmt_f64(f1), fmt_f64(f2)]);
        }
        let m = uavmec::mopg::train::mean_objectives(&ledgers)?;
        summary.push(vec![kind.to_string(), fmt_f64(m[0]), fmt_f64(m[1])]);
        progress(args.run.quiet, || format!("{kind}: f1 {:.6e} s, f2 {:.6e} J", m[0], m[1]));
    }
    out.write_csv("per_seed.csv", &per_seed)?;
    out.write_csv("summary.csv", &summary)?;
    out.finish("manifest.json", manifest("baseline", &loaded, started, serde_json::Map::new()))?;
    Ok(dir)
}
