//! Acceptance checks, one line per criterion.
//!
//! Runs without the libtest harness so every line is printed whether it
//! passes or not. Exits non-zero when a hard criterion fails.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::OnceLock;
use std::time::Instant;

use cacheprobe::cache::SnapshotScope;
use cacheprobe::env::{ActionKind, Secret};
use cacheprobe::experiment::{run_train, ExperimentConfig, Mode};
use cacheprobe::oracle::{label_trace, replay, replay_branches, search, AttackPlan, Episode};
use cacheprobe::ppo::{
    compute_gae, loss_and_grad, sample_action, LossCoeffs, Params, PolicySpec, Sample, TrainReport,
};
use cacheprobe::{preset, AttackEnv, EnvConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BIN: &str = env!("CARGO_BIN_EXE_cacheprobe");

struct Outcome {
    pass: bool,
    detail: String,
}

/// Number, name, whether a failure is fatal, and the check itself.
type Criterion = (u32, &'static str, bool, fn() -> Outcome);

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn main() -> ExitCode {
    // Optional criterion numbers to run, e.g. `cargo test --test acceptance -- 3 7`.
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [Criterion; 10] = [
        (1, "oracle finds a no1 plan", true, oracle_no1),
        (2, "oracle finds a no3 plan", true, oracle_no3),
        (3, "detector matches independent labels", true, detector_equivalence),
        (4, "trigger and guess steps are never penalized", true, exemption),
        (5, "epochs hold exactly 3000 actions", true, epoch_accounting),
        (6, "no1 training converges", true, convergence),
        (7, "gradients and GAE are numerically correct", true, numerics),
        (8, "train output is deterministic", true, determinism),
        (9, "no1 baseline useless ratio in 15-50%", false, useless_trend),
        (10, "modes differ only by the useless penalty", true, single_toggle),
    ];
    let mut failed = 0;
    for (n, name, hard, check) in criteria {
        if !filter.is_empty() && !filter.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let out = check();
        let tag = match (out.pass, hard) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "SOFT-FAIL",
        };
        println!(
            "[{tag}] {n:>2} {name}: {} ({:.1} s)",
            out.detail,
            start.elapsed().as_secs_f64()
        );
        if !out.pass && hard {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn oracle_no1() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let plan_path = dir.path().join("no1.txt");
    let start = Instant::now();
    let run = Command::new(BIN)
        .args(["oracle", "no1", "--max-len", "10", "--out"])
        .arg(&plan_path)
        .output()
        .expect("cli runs");
    let secs = start.elapsed().as_secs_f64();
    let stdout = String::from_utf8_lossy(&run.stdout);
    if !run.status.success() {
        return outcome(false, format!("cli exited with {}: {stdout}", run.status));
    }
    // Re-check the written plan independently of the cli's own replay.
    let cfg = preset("no1").unwrap();
    let plan: AttackPlan = std::fs::read_to_string(&plan_path).unwrap().parse().unwrap();
    let accuracy = replay(&plan, &cfg).unwrap();
    let secrets = cfg.secret_domain().len();
    let decoded: std::collections::HashSet<Secret> = plan.decode.iter().map(|(_, s)| *s).collect();
    let pass = accuracy == 1.0
        && secrets == 4
        && decoded.len() == 4
        && stdout.contains("replay accuracy: 1\n")
        && secs < 60.0;
    outcome(
        pass,
        format!(
            "length {}, accuracy {accuracy} over {secrets} secrets, {secs:.2} s",
            plan.prefix.len()
        ),
    )
}

fn oracle_no3() -> Outcome {
    let cfg = preset("no3").unwrap();
    match search(&cfg, 10) {
        Ok(Some(plan)) => {
            let accuracy = replay(&plan, &cfg).unwrap();
            outcome(
                accuracy == 1.0 && plan.prefix.len() <= 10,
                format!("length {}, accuracy {accuracy}", plan.prefix.len()),
            )
        }
        other => outcome(false, format!("search returned {other:?}")),
    }
}

/// Random legal actions with guesses kept rare so episodes run long.
struct Rollout {
    episodes: Vec<Episode>,
    steps: Vec<StepRecord>,
}

struct StepRecord {
    kind: ActionKind,
    useless: bool,
    reward: f64,
    correct: Option<bool>,
    truncated: bool,
}

fn random_rollout(cfg: &EnvConfig, steps: usize, seed: u64) -> Rollout {
    let mut env = AttackEnv::new(cfg.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = env.legal_actions().len();
    let n_probe = n - cfg.secret_domain().len();
    let mut out = Rollout {
        episodes: Vec::new(),
        steps: Vec::with_capacity(steps),
    };
    let mut actions = Vec::new();
    let mut secret = env.secret();
    for _ in 0..steps {
        let index = if rng.gen_bool(0.85) {
            rng.gen_range(0..n_probe)
        } else {
            rng.gen_range(0..n)
        };
        let action = env.legal_actions()[index];
        let r = env.step(action).unwrap();
        actions.push(action);
        out.steps.push(StepRecord {
            kind: action.kind(),
            useless: r.info.useless,
            reward: r.reward,
            correct: r.info.guess_correct,
            truncated: r.info.truncated,
        });
        if r.done {
            out.episodes.push(Episode {
                secret,
                actions: std::mem::take(&mut actions),
            });
            env.reset_episode();
            secret = env.secret();
        }
    }
    if !actions.is_empty() {
        out.episodes.push(Episode { secret, actions });
    }
    out
}

const TRACE_PRESETS: [&str; 4] = ["no1", "no3", "no5", "no15"];
const TRACE_STEPS: usize = 15_000;

fn trace_configs() -> Vec<(String, EnvConfig)> {
    let mut out = Vec::new();
    for name in TRACE_PRESETS {
        for scope in [SnapshotScope::Full, SnapshotScope::LinesOnly] {
            let mut cfg = preset(name).unwrap();
            cfg.snapshot_scope = scope;
            cfg.useless_penalty_enabled = true;
            out.push((format!("{name}/{scope:?}"), cfg));
        }
    }
    out
}

fn detector_equivalence() -> Outcome {
    let (mut total, mut mismatches, mut useless) = (0usize, 0usize, 0usize);
    for (i, (_, cfg)) in trace_configs().iter().enumerate() {
        let run = random_rollout(cfg, TRACE_STEPS, 100 + i as u64);
        let labels = label_trace(cfg, &run.episodes).unwrap();
        let flat: Vec<bool> = labels.into_iter().flatten().collect();
        total += run.steps.len();
        mismatches += run.steps.len().abs_diff(flat.len());
        for (s, &l) in run.steps.iter().zip(&flat) {
            mismatches += usize::from(s.useless != l);
            useless += usize::from(l);
        }
    }
    outcome(
        total >= 100_000 && mismatches == 0,
        format!("{total} actions, {useless} useless, {mismatches} mismatches"),
    )
}

fn exemption() -> Outcome {
    let (mut exempt_steps, mut violations) = (0usize, 0usize);
    for (i, (_, cfg)) in trace_configs().iter().enumerate() {
        let rw = &cfg.rewards;
        let run = random_rollout(cfg, TRACE_STEPS, 100 + i as u64);
        for s in &run.steps {
            // Rebuild the reward without any useless component and demand an
            // exact match on trigger and guess steps.
            let expected = match (s.kind, s.correct) {
                (ActionKind::Guess, Some(true)) => rw.r_correct,
                (ActionKind::Guess, _) => rw.r_wrong,
                (ActionKind::Trigger, _) if s.truncated => rw.r_step + rw.r_wrong,
                (ActionKind::Trigger, _) => rw.r_step,
                _ => continue,
            };
            exempt_steps += 1;
            if s.useless || s.reward != expected {
                violations += 1;
            }
        }
    }
    outcome(
        violations == 0 && exempt_steps > 0,
        format!("{exempt_steps} trigger/guess steps, {violations} carrying a penalty"),
    )
}

fn epoch_accounting() -> Outcome {
    let mut checked = 0;
    let mut bad = Vec::new();
    for (name, policy_seed) in [("no1", 1u64), ("no3", 2), ("no13", 3), ("no17", 4)] {
        let cfg = preset(name).unwrap();
        let mut env = AttackEnv::new(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(policy_seed);
        let n = env.legal_actions().len();
        let mut epochs = 0;
        while epochs < 5 {
            let r = env.step_index(rng.gen_range(0..n)).unwrap();
            if r.done {
                env.reset_episode();
            }
            if env.epoch_complete() {
                let e = env.epoch_stats();
                epochs += 1;
                checked += 1;
                let rate = e.correct_rate();
                if e.total_actions != 3000 || !(0.0..=1.0).contains(&rate) {
                    bad.push(format!("{name}: {} actions, rate {rate}", e.total_actions));
                }
            }
        }
    }
    outcome(bad.is_empty(), format!("{checked} epochs checked; bad: {bad:?}"))
}

/// One default no1 training per mode and seed 0..3, shared by the
/// convergence and trend criteria.
struct NoOneRun {
    mode: Mode,
    seed: u64,
    report: TrainReport,
}

fn no1_runs() -> &'static [NoOneRun] {
    static RUNS: OnceLock<Vec<NoOneRun>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let cfg = ExperimentConfig::from_preset("no1").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let jobs: Vec<(Mode, u64)> = Mode::ALL
            .iter()
            .flat_map(|&m| (0..3).map(move |s| (m, s)))
            .collect();
        std::thread::scope(|scope| {
            let handles: Vec<_> = jobs
                .iter()
                .map(|&(mode, seed)| {
                    let cfg = &cfg;
                    let out = dir.path().join(format!("{mode}-{seed}"));
                    scope.spawn(move || NoOneRun {
                        mode,
                        seed,
                        report: run_train(cfg, mode, seed, &out, false).expect("training runs"),
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        })
    })
}

fn convergence() -> Outcome {
    let cfg = ExperimentConfig::from_preset("no1").unwrap();
    let runs = no1_runs();
    let mut lines = Vec::new();
    let mut pass = true;
    for mode in Mode::ALL {
        let mut good = 0;
        for run in runs.iter().filter(|r| r.mode == mode) {
            let (r, seed) = (&run.report, run.seed);
            // Re-check the extracted branches with the oracle directly.
            let accuracy = replay_branches(&r.extracted_plans, &cfg.env).unwrap();
            let ok = r.converged && r.epochs_run <= 999 && accuracy == 1.0 && r.wall_time < 1800.0;
            good += usize::from(ok);
            lines.push(format!(
                "{mode}/{seed}: {} in {} epochs, plans {accuracy}",
                if r.converged { "converged" } else { "not converged" },
                r.epochs_run
            ));
        }
        pass &= good >= 2;
    }
    outcome(pass, lines.join("; "))
}

fn numerics() -> Outcome {
    let coeffs = LossCoeffs {
        clip_ratio: 0.2,
        value_coef: 0.5,
        entropy_coef: 0.01,
    };
    let mut worst: f64 = 0.0;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let obs_dim = rng.gen_range(2..6);
        let n_actions = rng.gen_range(2..5);
        let mut spec = PolicySpec::new(obs_dim, n_actions).with_hidden(rng.gen_range(3..7));
        spec.shared_trunk = seed % 2 == 1;
        let mut params = Params::init(&spec, &mut rng);
        for w in params.data.iter_mut() {
            *w *= 2.5;
        }
        let mask = vec![true; n_actions];
        let obs: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..obs_dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let samples: Vec<(usize, f64, f64, f64)> = obs
            .iter()
            .map(|o| {
                let (logits, _) = params.forward(o);
                let (a, lp) = sample_action(&logits, &mask, &mut rng);
                (a, lp + rng.gen_range(-0.4..0.4), rng.gen_range(-1.5..1.5), rng.gen_range(-1.0..1.0))
            })
            .collect();
        let batch: Vec<Sample> = obs
            .iter()
            .zip(&samples)
            .map(|(o, &(action, old_log_prob, advantage, ret))| Sample {
                obs: o,
                action,
                old_log_prob,
                advantage,
                ret,
            })
            .collect();
        let mut grad = vec![0.0; params.len()];
        loss_and_grad(&params, &batch, &mask, coeffs, Some(&mut grad));
        let h = 1e-6;
        let mut probe = params.clone();
        let (mut diff, mut norm_a, mut norm_b) = (0.0, 0.0, 0.0);
        for i in 0..grad.len() {
            let w = probe.data[i];
            probe.data[i] = w + h;
            let up = loss_and_grad(&probe, &batch, &mask, coeffs, None).total;
            probe.data[i] = w - h;
            let down = loss_and_grad(&probe, &batch, &mask, coeffs, None).total;
            probe.data[i] = w;
            let fd = (up - down) / (2.0 * h);
            diff += (grad[i] - fd).powi(2);
            norm_a += grad[i] * grad[i];
            norm_b += fd * fd;
        }
        worst = worst.max(diff.sqrt() / f64::max(norm_a, norm_b).sqrt());
    }
    let (adv, _) = compute_gae(&[0.0, 1.0], &[0.5, 0.5], &[false, true], 0.0, 0.99, 0.95);
    // Hand recursion: delta_1 = 1 - 0.5, delta_0 = 0 + 0.99 * 0.5 - 0.5,
    // A_0 = delta_0 + 0.99 * 0.95 * A_1.
    let a1 = 1.0 - 0.5;
    let a0 = (0.99 * 0.5 - 0.5) + 0.99 * 0.95 * a1;
    let gae_err = f64::max((adv[0] - a0).abs(), (adv[1] - a1).abs())
        .max((a0 - 0.46525_f64).abs());
    outcome(
        worst <= 1e-4 && gae_err <= 1e-9,
        format!("worst gradient rel error {worst:.2e}, GAE error {gae_err:.1e} (A = {:.5}, {:.5})", adv[0], adv[1]),
    )
}

fn metric_columns(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|line| match line.rfind(',') {
            Some(i) => line[..i].to_string(),
            None => line.to_string(),
        })
        .collect()
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut epochs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = Command::new(BIN)
            .args(["train", "--preset", "no1", "--seed", "0", "--mode", "proposal", "--out"])
            .arg(&out)
            .output()
            .expect("cli runs");
        if !status.status.success() {
            return outcome(false, format!("run {run} failed: {}", String::from_utf8_lossy(&status.stderr)));
        }
        epochs.push(metric_columns(&out.join("epochs.csv")));
    }
    let same = epochs[0] == epochs[1];
    outcome(
        same && epochs[0].len() > 1,
        format!("{} epoch rows, identical: {same}", epochs[0].len() - 1),
    )
}

fn useless_trend() -> Outcome {
    let results: Vec<&TrainReport> = no1_runs()
        .iter()
        .filter(|r| r.mode == Mode::Baseline)
        .map(|r| &r.report)
        .collect();
    let ratios: Vec<f64> = results.iter().map(|r| 100.0 * r.useless_ratio).collect();
    let pass = ratios.iter().all(|r| (15.0..=50.0).contains(r));
    outcome(pass, format!("useless % per seed: {ratios:.2?}"))
}

fn single_toggle() -> Outcome {
    let (mut steps, mut penalized, mut bad) = (0usize, 0usize, 0usize);
    for (i, (_, cfg)) in trace_configs().iter().enumerate() {
        let mut base_cfg = cfg.clone();
        base_cfg.useless_penalty_enabled = false;
        let proposal = random_rollout(cfg, 5_000, 500 + i as u64);
        let baseline = random_rollout(&base_cfg, 5_000, 500 + i as u64);
        if proposal.episodes != baseline.episodes {
            bad += 1;
            continue;
        }
        let r_useless = cfg.rewards.r_useless;
        for (p, b) in proposal.steps.iter().zip(&baseline.steps) {
            steps += 1;
            let attacker = matches!(p.kind, ActionKind::Access | ActionKind::Flush);
            let expected = if attacker && p.useless { r_useless } else { 0.0 };
            penalized += usize::from(expected != 0.0);
            if p.useless != b.useless || (p.reward - b.reward - expected).abs() > 1e-12 {
                bad += 1;
            }
        }
    }
    outcome(
        bad == 0 && penalized > 0,
        format!("{steps} paired steps, {penalized} penalized, {bad} mismatches"),
    )
}
