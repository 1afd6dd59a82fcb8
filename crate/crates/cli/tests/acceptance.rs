//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use uavmec::baselines::{evaluate_baseline, BaselineKind, BaselineParams};
use uavmec::env::{EnvConfig, UavMecEnv};
use uavmec::evo::{dominates, hypervolume};
use uavmec::model::{compute_energy, propulsion_power, uplink_rate, ChannelParams, ComputeParams, ComputeTask, PropulsionParams};
use uavmec::mopg::ppo::{critic_loss_grad, ppo_policy_loss_grad, weighted_advantages, PolicyGrads};
use uavmec::mopg::tdl::{gaussian_kl, mean_step_kl, tdl_loss_grad, tdl_targets, tdl_targets_from_advantages};
use uavmec::mopg::train::collect;
use uavmec::mopg::{TaskTuple, WeightVector};
use uavmec::nn::{GaussianPolicy, TransitionBatch};
use uavmec::scheduler::{sa_schedule, schedule_cost, sjf_schedule, QueueEntry, SaConfig, Schedule, SchedulerKind};
use uavmec::{seed, ExperimentConfig, ObjectivePoint};
use uavmec_cli::{cmd_train, RunArgs};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn desk_config_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml")
}

fn desk_args(out: &Path, seed_: u64, scheduler: SchedulerKind) -> RunArgs {
    RunArgs { out: Some(out.to_path_buf()), seed: Some(seed_), scheduler: Some(scheduler), ..RunArgs::new(desk_config_path()) }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn formula_pins() -> Outcome {
    let p0 = propulsion_power(0.0, &PropulsionParams::default());
    let rate = uplink_rate(1.0, &ChannelParams { bandwidth_hz: 1e7, ..ChannelParams::default() });
    let task = ComputeTask::new(0, 1e6, 1000.0, 0.0).unwrap();
    let e = compute_energy(&task, &ComputeParams { kappa: 1e-28, cpu_hz: 1e9, ..ComputeParams::default() });
    let pass = (p0 - 168.4842).abs() <= 1e-6 && rate == 1e7 && (e - 0.1).abs() <= 1e-12;
    outcome(pass, format!("P(0) = {p0:.7} W, rate = {rate} bit/s, E_comp = {e:.15} J"))
}

fn brute_force(q: &[QueueEntry]) -> f64 {
    fn rec(q: &[QueueEntry], order: &mut Vec<usize>, used: &mut [bool], best: &mut f64) {
        if order.len() == q.len() {
            let c = schedule_cost(q, &Schedule::new(order.clone()).unwrap()).unwrap();
            *best = best.min(c);
            return;
        }
        for i in 0..q.len() {
            if !used[i] {
                used[i] = true;
                order.push(i);
                rec(q, order, used, best);
                order.pop();
                used[i] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    rec(q, &mut Vec::new(), &mut vec![false; q.len()], &mut best);
    best
}

fn scheduler_optimality() -> Outcome {
    let mut sa_hits = 0;
    let mut sjf_hits = 0;
    for trial in 0..100u64 {
        let mut rng = seed::rng(seed::derive(7, "sa-acceptance", &[trial]));
        let q: Vec<QueueEntry> = (0..8)
            .map(|i| {
                let p = rng.random_range(0.1..5.0);
                QueueEntry { task: ComputeTask::new(i, 1e6, 1000.0, 0.0).unwrap(), enqueue_time: 0.0, processing_time: p }
            })
            .collect();
        let opt = brute_force(&q);
        let sa = schedule_cost(&q, &sa_schedule(&q, &SaConfig { rng_seed: trial, ..SaConfig::default() }).unwrap()).unwrap();
        let sjf = schedule_cost(&q, &sjf_schedule(&q).unwrap()).unwrap();
        sa_hits += usize::from((sa - opt).abs() <= 1e-9 * opt.max(1.0));
        sjf_hits += usize::from((sjf - opt).abs() <= 1e-9 * opt.max(1.0));
    }
    outcome(sa_hits >= 95 && sjf_hits == 100, format!("SA optimal {sa_hits}/100 (need 95), SJF optimal {sjf_hits}/100"))
}

/// A batch of real environment transitions for a random small network.
fn real_batch(k: u64) -> (TaskTuple, TransitionBatch, ExperimentConfig) {
    let cfg = ExperimentConfig::desk();
    let env_cfg = cfg.env_config();
    let mut rng = seed::rng(seed::derive(11, "acc-net", &[k]));
    let hidden = [4 + rng.random_range(0..6usize), 4 + rng.random_range(0..6usize)];
    let w = rng.random_range(0.0..1.0);
    let task = TaskTuple::new_random(
        WeightVector::new([w, 1.0 - w]).unwrap(),
        env_cfg.observation_dim(),
        &hidden,
        cfg.tdl.phi,
        cfg.ppo.lr,
        &mut rng,
    )
    .unwrap();
    let mut learner = cfg.learner();
    learner.ppo.steps_per_iter = 30;
    let mut env = UavMecEnv::new(EnvConfig { horizon: 30, ..env_cfg }).unwrap();
    let (batch, _) = collect(&task, &mut env, &learner, seed::derive(11, "acc-batch", &[k])).unwrap();
    (task, batch, cfg)
}

fn gradient_correctness() -> Outcome {
    let mut worst = [0.0f64; 3];
    let h = 1e-5;
    for k in 0..5u64 {
        let (task, batch, cfg) = real_batch(k);
        let mut rng = seed::rng(seed::derive(11, "acc-fd", &[k]));
        let idx: Vec<usize> = (0..batch.len()).collect();
        // Move off the behaviour policy so ratios differ from one.
        let mut p = task.policy.clone();
        p.mean_net.params_mut().iter_mut().for_each(|x| *x += rng.random_range(-0.05..0.05));
        let adv: Vec<f64> = (0..batch.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let surrogate = |q: &GaussianPolicy| ppo_policy_loss_grad(q, &batch, &idx, &adv, cfg.ppo.clip_eps, 0.01).unwrap();
        let targets = tdl_targets(&batch, &task.weight, &task.critic, cfg.env.reward.discounts, cfg.ppo.gae_lambda, &cfg.tdl).unwrap();
        let regression = |q: &GaussianPolicy| tdl_loss_grad(q, &batch, &idx, &targets).unwrap();
        let g_s = surrogate(&p);
        let g_r = regression(&p);
        for (slot, g, f) in [(0usize, &g_s, &surrogate as &dyn Fn(&GaussianPolicy) -> PolicyGrads), (1, &g_r, &regression)] {
            for _ in 0..20 {
                let head = rng.random_bool(0.5);
                let n = if head { g.g_mean.len() } else { g.g_std.len() };
                let i = rng.random_range(0..n);
                let (mut a, mut c) = (p.clone(), p.clone());
                let (pa, pc) = if head {
                    (&mut a.mean_net.params_mut()[i], &mut c.mean_net.params_mut()[i])
                } else {
                    (&mut a.std_net.params_mut()[i], &mut c.std_net.params_mut()[i])
                };
                *pa += h;
                *pc -= h;
                let num = (f(&a).loss - f(&c).loss) / (2.0 * h);
                let ana = if head { g.g_mean[i] } else { g.g_std[i] };
                worst[slot] = worst[slot].max(rel_err(ana, num));
            }
        }
        let ret: Vec<[f64; 2]> = (0..batch.len()).map(|_| [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]).collect();
        let (_, gc) = critic_loss_grad(&task.critic, &batch.obs, &ret, &idx).unwrap();
        for _ in 0..20 {
            let i = rng.random_range(0..gc.len());
            let (mut a, mut c) = (task.critic.clone(), task.critic.clone());
            a.net.params_mut()[i] += h;
            c.net.params_mut()[i] -= h;
            let num = (critic_loss_grad(&a, &batch.obs, &ret, &idx).unwrap().0
                - critic_loss_grad(&c, &batch.obs, &ret, &idx).unwrap().0)
                / (2.0 * h);
            worst[2] = worst[2].max(rel_err(gc[i], num));
        }
    }
    outcome(
        worst.iter().all(|w| *w <= 1e-4),
        format!(
            "max relative error: surrogate {:.2e}, regression {:.2e}, critic {:.2e} (5 nets x 20 params)",
            worst[0], worst[1], worst[2]
        ),
    )
}

fn tdl_kl_budget() -> Outcome {
    let mut worst = 0.0f64;
    let mut full_worst = 0.0f64;
    let mut steps = 0;
    let mut positive = 0;
    let mut alpha = 0.0;
    for k in 0..10u64 {
        let (task, batch, cfg) = real_batch(100 + k);
        alpha = cfg.tdl.kl_budget;
        // Same advantages the update uses, in both target modes.
        let (adv, _) = weighted_advantages(&task, &batch, cfg.env.reward.discounts, cfg.ppo.gae_lambda, true).unwrap();
        positive += adv.iter().filter(|a| **a > 0.0).count();
        for indicator in [false, true] {
            let targets = tdl_targets_from_advantages(&batch, &adv, &cfg.tdl, indicator).unwrap();
            for (t, tg) in targets.iter().enumerate() {
                worst = worst.max(mean_step_kl(&batch.old_means[t], &batch.old_stds[t], tg));
                let sd: Vec<f64> = tg.var.iter().map(|v| v.sqrt().max(1e-12)).collect();
                full_worst = full_worst.max(gaussian_kl(&batch.old_means[t], &batch.old_stds[t], &tg.mean, &sd));
                steps += 1;
            }
        }
    }
    outcome(
        worst <= alpha + 1e-6,
        format!(
            "max mean-step KL {worst:.3e} <= {alpha} over {steps} targets ({positive} with positive advantage); \
             diagnostic KL to the full target incl. variance: {full_worst:.3e}"
        ),
    )
}

fn pairwise_nondominated(points: &[ObjectivePoint]) -> bool {
    points.iter().all(|p| points.iter().all(|q| !dominates(q, p)))
}

fn monte_carlo_hv(points: &[ObjectivePoint], r: &ObjectivePoint, samples: usize, seed_: u64) -> f64 {
    let lo = [points.iter().map(|p| p.f1).fold(f64::INFINITY, f64::min), points.iter().map(|p| p.f2).fold(f64::INFINITY, f64::min)];
    let mut rng = seed::rng(seed_);
    let mut hit = 0usize;
    for _ in 0..samples {
        let x = rng.random_range(lo[0]..r.f1);
        let y = rng.random_range(lo[1]..r.f2);
        if points.iter().any(|p| p.f1 <= x && p.f2 <= y) {
            hit += 1;
        }
    }
    hit as f64 / samples as f64 * (r.f1 - lo[0]) * (r.f2 - lo[1])
}

fn hypervolume_oracle() -> Outcome {
    let mut worst = 0.0f64;
    for k in 0..10u64 {
        let mut rng = seed::rng(seed::derive(5, "hv-front", &[k]));
        let n = rng.random_range(1..=20);
        let pts: Vec<ObjectivePoint> =
            (0..n).map(|_| ObjectivePoint::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0))).collect();
        let r = ObjectivePoint::new(11.0, 11.0);
        let exact = hypervolume(&pts, &r).unwrap();
        let mc = monte_carlo_hv(&pts, &r, 1_000_000, k);
        worst = worst.max((exact - mc).abs() / exact);
    }
    outcome(worst <= 0.01, format!("max |sweep - MC| / sweep = {worst:.2e} over 10 fronts, 1e6 samples each"))
}

fn final_weighted_return(r: &uavmec_cli::train::TrainReport) -> f64 {
    let last = r.outcome.generations.iter().map(|g| g.generation).max().unwrap();
    let rows: Vec<f64> = r.outcome.generations.iter().filter(|g| g.generation == last).map(|g| g.weighted_return).collect();
    rows.iter().sum::<f64>() / rows.len() as f64
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64;
    (m, var.sqrt())
}

fn main() {
    let root = tempfile::tempdir().unwrap();
    let mut results: Vec<(&str, Outcome, f64)> = Vec::new();
    let mut run = |name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t0 = Instant::now();
        let o = f();
        let secs = t0.elapsed().as_secs_f64();
        println!("{} {name}: {} [{secs:.1}s]", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((name, o, secs));
    };

    run("formula-pins", &mut formula_pins);
    run("sa-scheduler-optimality", &mut scheduler_optimality);
    run("gradient-correctness", &mut gradient_correctness);
    run("tdl-kl-budget", &mut tdl_kl_budget);

    let desk_a = root.path().join("desk-a");
    let report = cmd_train(&desk_args(&desk_a, 0, SchedulerKind::Sa)).expect("desk run");
    run("archive-invariants", &mut || {
        let o = &report.outcome;
        let nd = o.archive_history.iter().all(|pts| pairwise_nondominated(pts));
        let mono = o.hv_history.windows(2).all(|w| w[1] >= w[0]);
        let gens = o.hv_history.len();
        let hv: Vec<String> = o.hv_history.iter().map(|h| format!("{h:.4e}")).collect();
        outcome(
            nd && mono && gens == 11 && report.outcome.archive.is_mutually_nondominated(),
            format!("{gens} archive snapshots (warm-up + 10 generations), non-dominated: {nd}, HV non-decreasing: {mono} [{}]", hv.join(", ")),
        )
    });
    run("learning-efficacy", &mut || {
        let cfg = ExperimentConfig::desk();
        let rw = evaluate_baseline(BaselineKind::RandomWalk, BaselineParams::default(), &cfg.env_config(), &report.outcome.eval_seeds)
            .unwrap();
        let rw = ObjectivePoint::new(rw[0], rw[1]);
        let pts = report.outcome.archive.points();
        let distinct: Vec<&ObjectivePoint> =
            pts.iter().enumerate().filter(|(i, p)| !pts[..*i].contains(p)).map(|(_, p)| p).collect();
        let dominated = pts.iter().filter(|p| dominates(&rw, p)).count();
        outcome(
            distinct.len() >= 2 && dominated == 0,
            format!(
                "{} distinct archive points, {dominated} dominated by random-walk ({:.2} s, {:.1} J) on {} eval seeds",
                distinct.len(),
                rw.f1,
                rw.f2,
                report.outcome.eval_seeds.len()
            ),
        )
    });
    run("hypervolume-oracle", &mut hypervolume_oracle);
    run("determinism", &mut || {
        let desk_b = root.path().join("desk-b");
        cmd_train(&desk_args(&desk_b, 0, SchedulerKind::Sa)).expect("second desk run");
        let same = |f: &str| std::fs::read(desk_a.join(f)).unwrap() == std::fs::read(desk_b.join(f)).unwrap();
        let (m, a) = (same("metrics.csv"), same("archive.json"));
        outcome(m && a, format!("metrics.csv identical: {m}, archive.json identical: {a}"))
    });
    run("scheduler-ablation", &mut || {
        let mut sa = Vec::new();
        let mut fcfs = Vec::new();
        for s in 0..5u64 {
            sa.push(final_weighted_return(&cmd_train(&desk_args(&root.path().join(format!("sa-{s}")), s, SchedulerKind::Sa)).unwrap()));
            fcfs.push(final_weighted_return(
                &cmd_train(&desk_args(&root.path().join(format!("fcfs-{s}")), s, SchedulerKind::Fcfs)).unwrap(),
            ));
        }
        let (ms, ss) = mean_std(&sa);
        let (mf, sf) = mean_std(&fcfs);
        let pooled = ((ss * ss + sf * sf) / 2.0).sqrt();
        outcome(ms >= mf - pooled, format!("SA {ms:.4} vs FCFS {mf:.4}, pooled std {pooled:.4} (5 seeds)"))
    });

    let failed = results.iter().filter(|r| !r.1.pass).count();
    let total: f64 = results.iter().map(|r| r.2).sum();
    println!("{} of {} criteria passed in {total:.1}s", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
