use crate::gen::Objective;
use crate::tasks::policy::Policy;
use crate::tasks::reach::ReachConfig;
use crate::tasks::rollout::{eval_episode, evaluate, summarize, PolicyController};
use crate::{rng, Error, Result};
use std::fmt::Write as _;
use std::time::Instant;

/// One trained policy entering a sweep. `policy` is `None` when its
/// checkpoint could not be found.
pub struct SweepArm<'a> {
    pub objective: Objective,
    pub train_seed: u64,
    pub policy: Option<&'a Policy>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub ks: Vec<usize>,
    pub eval_seeds: Vec<u64>,
    pub episodes: usize,
    /// Batch-1 sampler calls timed per (objective, k); 0 skips timing.
    pub timing_calls: usize,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::config("k list must be non-empty with every k ≥ 1"));
        }
        if self.eval_seeds.is_empty() || self.episodes == 0 {
            return Err(Error::config("sweeps need at least one evaluation seed and episode"));
        }
        Ok(())
    }
}

/// Success of one (objective, k, training seed, evaluation seed) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub objective: Objective,
    pub k: usize,
    pub train_seed: u64,
    pub eval_seed: u64,
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_steps: f64,
    pub clamp_events: usize,
}

/// Mean over all rows of an (objective, k) pair; `std_success` is the sample
/// standard deviation of the per-training-seed means.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepAggregate {
    pub objective: Objective,
    pub k: usize,
    pub seeds: usize,
    pub episodes: usize,
    pub mean_success: f64,
    pub std_success: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimingRow {
    pub objective: Objective,
    pub k: usize,
    pub calls: usize,
    pub ms_per_call: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub aggregates: Vec<SweepAggregate>,
    pub timing: Vec<TimingRow>,
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation; NaN below two values.
pub(crate) fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub(crate) fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x}")
    }
}

impl SweepResult {
    pub fn aggregate(&self, objective: Objective, k: usize) -> Option<&SweepAggregate> {
        self.aggregates.iter().find(|a| a.objective == objective && a.k == k)
    }

    /// Per-seed rows followed by aggregate rows (`train_seed = eval_seed = all`).
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "objective,k,train_seed,eval_seed,episodes,successes,success_rate,std_success,seeds,mean_steps,clamp_events\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},,1,{},{}",
                r.objective,
                r.k,
                r.train_seed,
                r.eval_seed,
                r.episodes,
                r.successes,
                num(r.success_rate),
                num(r.mean_steps),
                r.clamp_events
            );
        }
        for a in &self.aggregates {
            let rows: Vec<&SweepRow> = self.rows.iter().filter(|r| r.objective == a.objective && r.k == a.k).collect();
            let successes: usize = rows.iter().map(|r| r.successes).sum();
            let steps = mean(&rows.iter().map(|r| r.mean_steps).collect::<Vec<_>>());
            let clamps: usize = rows.iter().map(|r| r.clamp_events).sum();
            let _ = writeln!(
                out,
                "{},{},all,all,{},{},{},{},{},{},{}",
                a.objective,
                a.k,
                a.episodes,
                successes,
                num(a.mean_success),
                num(a.std_success),
                a.seeds,
                num(steps),
                clamps
            );
        }
        out
    }

    pub fn timing_csv(&self) -> String {
        let mut out = String::from("objective,k,calls,ms_per_call\n");
        for t in &self.timing {
            let _ = writeln!(out, "{},{},{},{}", t.objective, t.k, t.calls, num(t.ms_per_call));
        }
        out
    }
}

/// Mean wall-clock of the sampler loop for one batch-1 call, excluding the
/// observation encoding.
pub fn time_sampler(policy: &Policy, k: usize, calls: usize, seed: u64) -> Result<f64> {
    let task = policy.task();
    let (_, scene, mut env, _) = eval_episode(task, seed, 0);
    let obs = crate::tasks::reach::Observation {
        cloud: scene.observe(task, &mut env)?,
        proprio: scene.start(),
    };
    let window = vec![&obs; policy.config().t_obs];
    let cond = policy.conditioning(&[window])?;
    let mut rngs = vec![rng::stream(seed, rng::EVAL, u64::MAX)];
    let t0 = Instant::now();
    for _ in 0..calls {
        policy.sample_chunks(&cond, k, &mut rngs)?;
    }
    Ok(t0.elapsed().as_secs_f64() * 1e3 / calls.max(1) as f64)
}

/// Evaluates every arm at every k on the same episode set per evaluation seed.
pub fn sweep_k(arms: &[SweepArm<'_>], task: &ReachConfig, cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    if arms.is_empty() {
        return Err(Error::config("sweep has no trained policies"));
    }
    let mut policies = Vec::with_capacity(arms.len());
    for a in arms {
        let p = a.policy.ok_or_else(|| {
            Error::config(format!("missing checkpoint for {} training seed {}", a.objective, a.train_seed))
        })?;
        if p.config().objective != a.objective {
            return Err(Error::config(format!(
                "checkpoint for {} seed {} holds a {} policy",
                a.objective,
                a.train_seed,
                p.config().objective
            )));
        }
        policies.push(p);
    }

    let mut rows = Vec::new();
    for (a, p) in arms.iter().zip(&policies) {
        for &k in &cfg.ks {
            let ctrl = PolicyController { policy: p, k };
            for &eval_seed in &cfg.eval_seeds {
                let s = summarize(&evaluate(&ctrl, task, eval_seed, cfg.episodes)?);
                rows.push(SweepRow {
                    objective: a.objective,
                    k,
                    train_seed: a.train_seed,
                    eval_seed,
                    episodes: s.episodes,
                    successes: s.successes,
                    success_rate: s.success_rate,
                    mean_steps: s.mean_steps,
                    clamp_events: s.clamp_events,
                });
            }
        }
    }

    let mut objectives: Vec<Objective> = Vec::new();
    for a in arms {
        if !objectives.contains(&a.objective) {
            objectives.push(a.objective);
        }
    }
    let mut aggregates = Vec::new();
    let mut timing = Vec::new();
    for &o in &objectives {
        for &k in &cfg.ks {
            let cell: Vec<&SweepRow> = rows.iter().filter(|r| r.objective == o && r.k == k).collect();
            let mut seeds: Vec<u64> = cell.iter().map(|r| r.train_seed).collect();
            seeds.sort_unstable();
            seeds.dedup();
            let per_seed: Vec<f64> = seeds
                .iter()
                .map(|s| mean(&cell.iter().filter(|r| r.train_seed == *s).map(|r| r.success_rate).collect::<Vec<_>>()))
                .collect();
            aggregates.push(SweepAggregate {
                objective: o,
                k,
                seeds: seeds.len(),
                episodes: cell.iter().map(|r| r.episodes).sum(),
                mean_success: mean(&cell.iter().map(|r| r.success_rate).collect::<Vec<_>>()),
                std_success: sample_std(&per_seed),
            });
            if cfg.timing_calls > 0 {
                let idx = arms.iter().position(|a| a.objective == o).expect("objective has an arm");
                timing.push(TimingRow {
                    objective: o,
                    k,
                    calls: cfg.timing_calls,
                    ms_per_call: time_sampler(policies[idx], k, cfg.timing_calls, cfg.eval_seeds[0])?,
                });
            }
        }
    }
    Ok(SweepResult { rows, aggregates, timing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::Formulation;
    use crate::tasks::policy::PolicyConfig;

    fn tiny_policy(objective: Objective) -> (ReachConfig, Policy) {
        let task = ReachConfig {
            max_steps: 3,
            ..ReachConfig::default()
        };
        let cfg = PolicyConfig {
            encoder_hidden: vec![8],
            encoder_out: 8,
            hidden: vec![16],
            ..PolicyConfig::new(objective, Formulation::Euclidean)
        };
        let p = Policy::new(cfg, task.clone(), 0).unwrap();
        (task, p)
    }

    #[test]
    fn single_k_gives_single_rows_and_identical_seeds_agree() {
        let (task, p) = tiny_policy(Objective::Cfm);
        let arms = [
            SweepArm { objective: Objective::Cfm, train_seed: 0, policy: Some(&p) },
            SweepArm { objective: Objective::Cfm, train_seed: 1, policy: Some(&p) },
        ];
        let cfg = SweepConfig { ks: vec![2], eval_seeds: vec![9], episodes: 4, timing_calls: 0 };
        let r = sweep_k(&arms, &task, &cfg).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert_eq!(r.aggregates.len(), 1);
        assert_eq!(r.aggregates[0].seeds, 2);
        let (a, b) = (&r.rows[0], &r.rows[1]);
        assert_eq!((a.successes, a.mean_steps, a.clamp_events), (b.successes, b.mean_steps, b.clamp_events));
        assert_eq!(r.to_csv(), sweep_k(&arms, &task, &cfg).unwrap().to_csv());
        assert_eq!(r.to_csv().lines().count(), 4);
    }

    #[test]
    fn missing_checkpoint_is_a_config_error() {
        let (task, _) = tiny_policy(Objective::Ddim);
        let arms = [SweepArm { objective: Objective::Ddim, train_seed: 0, policy: None }];
        let cfg = SweepConfig { ks: vec![1], eval_seeds: vec![0], episodes: 1, timing_calls: 0 };
        assert!(matches!(sweep_k(&arms, &task, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn std_matches_hand_value() {
        assert!((sample_std(&[1.0, 2.0, 4.0]) - (7.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(sample_std(&[1.0]).is_nan());
    }
}
