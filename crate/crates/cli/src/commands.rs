use crate::settings::{parse_pair, read_kv_file, Settings};
use crate::Common;
use mflow::eval::{compare_formulations, emit_grid, episode_csv, run_manifest, sweep_k, write_json, SweepArm, SweepConfig};
use mflow::gen::{Formulation, Objective};
use mflow::nn::{content_hash, Checkpoint, Module};
use mflow::tasks::circle::{init_circle_network, run_circle_experiment, train_circle_into, CircleConfig};
use mflow::tasks::rollout::{evaluate, summarize, ExpertReplay, PolicyController};
use mflow::tasks::train::{TrainConfig, TrainRun};
use mflow::tasks::{Augment, Dataset, Policy, PolicyConfig, ReachConfig};
use mflow::{Error, Result};
use serde_json::json;
use std::path::{Path, PathBuf};

fn csv_of<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn reach_train_defaults() -> Vec<(&'static str, String)> {
    let t = TrainConfig::default();
    let p = PolicyConfig::new(Objective::Cfm, Formulation::Euclidean);
    let opt = |x: Option<f64>| x.map_or("none".to_string(), |v| v.to_string());
    vec![
        ("task", "reach2d".into()),
        ("seed", "0".into()),
        ("out", "runs/train".into()),
        ("dataset", String::new()),
        ("resume", String::new()),
        ("objective", "cfm".into()),
        ("formulation", "euclidean".into()),
        ("steps", t.steps.to_string()),
        ("batch_size", t.batch_size.to_string()),
        ("lr", t.lr.to_string()),
        ("weight_decay", t.weight_decay.to_string()),
        ("warmup", t.warmup.to_string()),
        ("ema_decay", opt(t.ema_decay)),
        ("grad_clip", opt(t.grad_clip)),
        ("point_jitter", t.augment.point_jitter.to_string()),
        ("proprio_pos", t.augment.proprio_pos.to_string()),
        ("proprio_rot_deg", t.augment.proprio_rot.to_degrees().round().to_string()),
        ("t_obs", p.t_obs.to_string()),
        ("t_pred", p.t_pred.to_string()),
        ("encoder_hidden", csv_of(&p.encoder_hidden)),
        ("encoder_out", p.encoder_out.to_string()),
        ("hidden", csv_of(&p.hidden)),
        ("log_every", "500".into()),
        ("stop_after", "none".into()),
    ]
}

fn circle_defaults(extra: &[(&'static str, &str)]) -> Vec<(&'static str, String)> {
    let c = CircleConfig::new(Formulation::Euclidean);
    let mut d = vec![
        ("seed", "0".to_string()),
        ("epochs", c.epochs.to_string()),
        ("batches_per_epoch", c.batches_per_epoch.to_string()),
        ("batch_size", c.batch_size.to_string()),
        ("lr", c.lr.to_string()),
        ("hidden", csv_of(&c.hidden)),
        ("eval_samples", c.eval_samples.to_string()),
        ("k", c.k.to_string()),
        ("grid_cells", c.grid_cells.to_string()),
        ("grid_extent", c.grid_extent.to_string()),
        ("angle_bins", c.angle_bins.to_string()),
    ];
    d.extend(extra.iter().map(|(k, v)| (*k, v.to_string())));
    d
}

fn defaults(command: &str, task: &str) -> Result<Vec<(&'static str, String)>> {
    let s = |v: &str| v.to_string();
    Ok(match (command, task) {
        ("gen-demos", _) => vec![
            ("seed", s("0")),
            ("out", s("demos")),
            ("episodes", s("100")),
            ("multimodal", s("false")),
        ],
        ("train", "reach2d") => reach_train_defaults(),
        ("train", "circle") => circle_defaults(&[
            ("task", "circle"),
            ("out", "runs/circle-train"),
            ("objective", "cfm"),
            ("formulation", "euclidean"),
            ("log_every", "500"),
        ]),
        ("eval", _) => vec![
            ("seed", s("0")),
            ("out", s("runs/eval")),
            ("checkpoint", String::new()),
            ("policy", s("learned")),
            ("episodes", s("100")),
            ("k", s("50")),
            ("multimodal", s("false")),
            ("objective", String::new()),
            ("formulation", String::new()),
        ],
        ("sweep-k", _) => vec![
            ("seed", s("0")),
            ("out", s("runs/sweep")),
            ("checkpoints", String::new()),
            ("k", s("1,2,4,8,16,50")),
            ("eval_seeds", String::new()),
            ("episodes", s("100")),
            ("timing_calls", s("20")),
        ],
        ("compare-formulations", "circle") => circle_defaults(&[
            ("task", "circle"),
            ("out", "runs/compare"),
            ("seeds", ""),
        ]),
        ("compare-formulations", "reach2d") => vec![
            ("task", s("reach2d")),
            ("seed", s("0")),
            ("out", s("runs/compare")),
            ("euclidean", String::new()),
            ("manifold", String::new()),
            ("k", s("50")),
            ("episodes", s("100")),
        ],
        ("circle", _) => circle_defaults(&[("out", "runs/circle"), ("formulation", "euclidean")]),
        (_, t) => return Err(Error::config(format!("unknown task `{t}` (expected reach2d or circle)"))),
    })
}

fn flag_pairs(c: &Common) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut push = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            out.push((k.to_string(), v));
        }
    };
    push("seed", c.seed.map(|s| s.to_string()));
    push("out", c.out.as_ref().map(|p| p.display().to_string()));
    push("k", c.k.clone());
    push("objective", c.objective.clone());
    push("formulation", c.formulation.clone());
    out
}

pub fn run(command: &str, c: &Common) -> Result<()> {
    let file = match &c.config {
        Some(p) => read_kv_file(p)?,
        None => Vec::new(),
    };
    let sets = c.set.iter().map(|s| parse_pair(s)).collect::<Result<Vec<_>>>()?;
    let flags = flag_pairs(c);
    let default_task = if command == "compare-formulations" { "circle" } else { "reach2d" };
    let task = file
        .iter()
        .chain(&sets)
        .rev()
        .find(|(k, _)| k == "task")
        .map_or(default_task.to_string(), |(_, v)| v.clone());

    let mut s = Settings::with_defaults(&defaults(command, &task)?);
    s.apply(&file, "config file")?;
    s.apply(&sets, "--set")?;
    s.apply(&flags, "flags")?;
    let seed: u64 = s.get("seed")?;
    println!("mflow {command}\nmaster seed: {seed}\nresolved config:\n{}", s.render());

    let out = PathBuf::from(s.required("out")?);
    std::fs::create_dir_all(&out)?;
    match (command, task.as_str()) {
        ("gen-demos", _) => gen_demos(&s, seed, &out),
        ("train", "circle") => train_circle(&s, seed, &out),
        ("train", _) => train_reach(&s, seed, &out),
        ("eval", _) => eval(&s, seed, &out),
        ("sweep-k", _) => sweep(&s, seed, &out),
        ("compare-formulations", "circle") => compare_circle(&s, seed, &out),
        ("compare-formulations", _) => compare_reach(&s, seed, &out),
        ("circle", _) => circle(&s, seed, &out),
        _ => unreachable!("clap only accepts known commands"),
    }
}

/// Writes `manifest.json` into `out`: command, resolved config, seeds,
/// hashes of inputs and outputs.
fn manifest(command: &str, s: &Settings, seeds: &[u64], inputs: &[&Path], out: &Path, outputs: &[&str]) -> Result<()> {
    let mut m = run_manifest(command, s.to_json(), seeds, inputs)?;
    let mut hashes = serde_json::Map::new();
    for name in outputs {
        let bytes = std::fs::read(out.join(name))?;
        hashes.insert(name.to_string(), json!(content_hash(&bytes)));
    }
    m["outputs"] = serde_json::Value::Object(hashes);
    write_json(&out.join("manifest.json"), &m)
}

/// Input files are user-supplied paths: a missing one is invalid input.
fn existing(path: impl Into<PathBuf>, what: &str) -> Result<PathBuf> {
    let path = path.into();
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::config(format!("{what} {} does not exist", path.display())))
    }
}

fn gen_demos(s: &Settings, seed: u64, out: &Path) -> Result<()> {
    let task = if s.get::<bool>("multimodal")? { ReachConfig::multimodal() } else { ReachConfig::default() };
    let data = Dataset::generate(&task, s.get("episodes")?, seed)?;
    let path = out.join("demos.bin");
    let hash = data.save(&path)?;
    manifest("gen-demos", s, &[seed], &[], out, &["demos.bin", "demos.json"])?;
    println!(
        "wrote {} episodes ({} samples) to {} [{hash}]",
        data.episodes.len(),
        data.sample_index().len(),
        path.display()
    );
    Ok(())
}

fn loss_csv(losses: &[f64]) -> String {
    let mut csv = String::from("step,loss\n");
    for (i, l) in losses.iter().enumerate() {
        csv.push_str(&format!("{i},{l}\n"));
    }
    csv
}

fn policy_config(s: &Settings) -> Result<PolicyConfig> {
    let cfg = PolicyConfig {
        t_obs: s.get("t_obs")?,
        t_pred: s.get("t_pred")?,
        objective: s.get("objective")?,
        formulation: s.get("formulation")?,
        encoder_hidden: s.list("encoder_hidden")?,
        encoder_out: s.get("encoder_out")?,
        hidden: s.list("hidden")?,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn train_config(s: &Settings) -> Result<TrainConfig> {
    let cfg = TrainConfig {
        steps: s.get("steps")?,
        batch_size: s.get("batch_size")?,
        lr: s.get("lr")?,
        weight_decay: s.get("weight_decay")?,
        warmup: s.get("warmup")?,
        ema_decay: s.optional("ema_decay")?,
        grad_clip: s.optional("grad_clip")?,
        augment: Augment {
            point_jitter: s.get("point_jitter")?,
            proprio_pos: s.get("proprio_pos")?,
            proprio_rot: s.get::<f64>("proprio_rot_deg")?.to_radians(),
        },
    };
    cfg.validate()?;
    Ok(cfg)
}

fn train_reach(s: &Settings, seed: u64, out: &Path) -> Result<()> {
    let data_path = existing(s.required("dataset")?, "dataset")?;
    let data = Dataset::load(&data_path)?;
    let resume = s.str("resume");
    let mut run = if resume.is_empty() {
        TrainRun::new(policy_config(s)?, data.task.clone(), train_config(s)?, seed)?
    } else {
        println!("resuming from {resume}; model and schedule settings come from the checkpoint");
        TrainRun::from_checkpoint(Checkpoint::load(&existing(resume, "checkpoint")?)?)?
    };
    let log_every: usize = s.get("log_every")?;
    // Stops early without shortening the schedule, so a resumed run continues
    // exactly where an uninterrupted one would be.
    let stop = s.optional::<usize>("stop_after")?.map_or(run.config.steps, |n| n.min(run.config.steps));
    let index = data.sample_index();
    let ckpt_path = out.join("checkpoint.bin");
    let mut failure = None;
    while run.step_count() < stop {
        let step = run.step_count();
        match run.step(&data, &index) {
            Ok(loss) => {
                if log_every > 0 && step % log_every == 0 {
                    eprintln!("step {step} loss {loss:.6}");
                }
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    // The failed step left the weights untouched, so this is the last good state.
    run.to_checkpoint()?.save(&ckpt_path)?;
    std::fs::write(out.join("loss.csv"), loss_csv(&run.losses))?;
    let mut inputs = vec![data_path.as_path()];
    if !resume.is_empty() {
        inputs.push(Path::new(resume));
    }
    manifest("train", s, &[run.seed], &inputs, out, &["checkpoint.bin", "loss.csv"])?;
    if let Some(e) = failure {
        eprintln!("training aborted; last good checkpoint (step {}) saved to {}", run.step_count(), ckpt_path.display());
        return Err(e);
    }
    println!("trained {} steps; checkpoint {}", run.step_count(), ckpt_path.display());
    Ok(())
}

fn circle_config(s: &Settings, formulation: Formulation) -> Result<CircleConfig> {
    let cfg = CircleConfig {
        formulation,
        epochs: s.get("epochs")?,
        batches_per_epoch: s.get("batches_per_epoch")?,
        batch_size: s.get("batch_size")?,
        lr: s.get("lr")?,
        hidden: s.list("hidden")?,
        eval_samples: s.get("eval_samples")?,
        k: s.get("k")?,
        grid_cells: s.get("grid_cells")?,
        grid_extent: s.get("grid_extent")?,
        angle_bins: s.get("angle_bins")?,
        ..CircleConfig::new(formulation)
    };
    cfg.validate()?;
    Ok(cfg)
}

fn train_circle(s: &Settings, seed: u64, out: &Path) -> Result<()> {
    if s.get::<Objective>("objective")? != Objective::Cfm {
        return Err(Error::config("the circle task is trained with flow matching only"));
    }
    let cfg = circle_config(s, s.get("formulation")?)?;
    let log_every: usize = s.get("log_every")?;
    let mut net = init_circle_network(&cfg, seed);
    let mut losses = Vec::new();
    let result = train_circle_into(&cfg, seed, &mut net, |step, loss| {
        losses.push(loss);
        if log_every > 0 && step % log_every == 0 {
            eprintln!("step {step} loss {loss:.6}");
        }
    });
    let ckpt = Checkpoint {
        descriptor: net.config().descriptor(),
        metadata: json!({"task": "circle", "formulation": cfg.formulation, "seed": seed, "step": losses.len()}).to_string(),
        params: net.params().into_iter().cloned().collect(),
        ema: None,
        optimizer: None,
    };
    let path = out.join("checkpoint.bin");
    ckpt.save(&path)?;
    std::fs::write(out.join("loss.csv"), loss_csv(&losses))?;
    manifest("train", s, &[seed], &[], out, &["checkpoint.bin", "loss.csv"])?;
    result?;
    println!("trained {} steps; checkpoint {}", losses.len(), path.display());
    Ok(())
}

fn load_run(path: &Path) -> Result<(TrainRun, Policy)> {
    let run = TrainRun::from_checkpoint(Checkpoint::load(&existing(path, "checkpoint")?)?)?;
    let policy = run.eval_policy()?;
    Ok((run, policy))
}

fn eval(s: &Settings, seed: u64, out: &Path) -> Result<()> {
    let episodes: usize = s.get("episodes")?;
    if episodes == 0 {
        return Err(Error::config("episodes must be at least 1"));
    }
    let k: usize = s.get("k")?;
    let (results, inputs) = match s.str("policy") {
        "expert" => {
            let task = if s.get::<bool>("multimodal")? { ReachConfig::multimodal() } else { ReachConfig::default() };
            (evaluate(&ExpertReplay { task: task.clone() }, &task, seed, episodes)?, vec![])
        }
        "learned" => {
            let path = existing(s.required("checkpoint")?, "checkpoint")?;
            let (_, policy) = load_run(&path)?;
            let pc = policy.config();
            for (key, actual) in [("objective", pc.objective.name()), ("formulation", pc.formulation.name())] {
                let wanted = s.str(key);
                if !wanted.is_empty() && wanted != actual {
                    return Err(Error::config(format!("{key} `{wanted}` requested but the checkpoint holds `{actual}`")));
                }
            }
            let ctrl = PolicyController { policy: &policy, k };
            (evaluate(&ctrl, policy.task(), seed, episodes)?, vec![path])
        }
        other => return Err(Error::config(format!("policy must be `learned` or `expert`, got `{other}`"))),
    };
    std::fs::write(out.join("episodes.csv"), episode_csv(&results))?;
    let inputs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    manifest("eval", s, &[seed], &inputs, out, &["episodes.csv"])?;
    let sum = summarize(&results);
    println!("success rate {} over {} episodes", sum.success_rate, sum.episodes);
    Ok(())
}

fn sweep(s: &Settings, seed: u64, out: &Path) -> Result<()> {
    let paths: Vec<PathBuf> = s.list("checkpoints")?;
    if paths.is_empty() {
        return Err(Error::config("`checkpoints` is required (comma-separated paths)"));
    }
    let loaded = paths.iter().map(|p| load_run(p)).collect::<Result<Vec<_>>>()?;
    let task = loaded[0].1.task().clone();
    if loaded.iter().any(|(_, p)| *p.task() != task) {
        return Err(Error::config("all checkpoints in a sweep must share one task configuration"));
    }
    let arms: Vec<SweepArm<'_>> = loaded
        .iter()
        .map(|(run, p)| SweepArm { objective: p.config().objective, train_seed: run.seed, policy: Some(p) })
        .collect();
    let mut eval_seeds: Vec<u64> = s.list("eval_seeds")?;
    if eval_seeds.is_empty() {
        eval_seeds.push(seed);
    }
    let cfg = SweepConfig {
        ks: s.list("k")?,
        eval_seeds: eval_seeds.clone(),
        episodes: s.get("episodes")?,
        timing_calls: s.get("timing_calls")?,
    };
    let result = sweep_k(&arms, &task, &cfg)?;
    std::fs::write(out.join("sweep.csv"), result.to_csv())?;
    std::fs::write(out.join("timing.csv"), result.timing_csv())?;
    let inputs: Vec<&Path> = paths.iter().map(PathBuf::as_path).collect();
    manifest("sweep-k", s, &eval_seeds, &inputs, out, &["sweep.csv", "timing.csv"])?;
    for a in &result.aggregates {
        println!("{} k={}: success {:.3} (std {:.3}, {} seeds)", a.objective, a.k, a.mean_success, a.std_success, a.seeds);
    }
    Ok(())
}

fn seed_list(s: &Settings, seed: u64) -> Result<Vec<u64>> {
    let seeds: Vec<u64> = s.list("seeds")?;
    Ok(if seeds.is_empty() { vec![seed, seed + 1, seed + 2] } else { seeds })
}

fn compare_circle(s: &Settings, seed: u64, out: &Path) -> Result<()> {
    let seeds = seed_list(s, seed)?;
    let mut arms = [Vec::new(), Vec::new()];
    let mut written = Vec::new();
    for &sd in &seeds {
        for (arm, f) in arms.iter_mut().zip([Formulation::Euclidean, Formulation::Manifold]) {
            let r = run_circle_experiment(&circle_config(s, f)?, sd)?;
            let name = format!("grid_{f}_{sd}.csv");
            std::fs::write(out.join(&name), emit_grid(&r.grid))?;
            written.push(name);
            eprintln!("{f} seed {sd}: mean angle error {:.4} deg", r.mean_error_deg);
            arm.push((sd, r.mean_error_deg));
        }
    }
    let summary = compare_formulations("mean_angle_error_deg", &arms[0], &arms[1])?;
    std::fs::write(out.join("compare.csv"), summary.to_csv())?;
    written.push("compare.csv".into());
    let names: Vec<&str> = written.iter().map(String::as_str).collect();
    manifest("compare-formulations", s, &seeds, &[], out, &names)?;
    println!("mean delta (manifold - euclidean) {:.4} deg, std error {:.4}", summary.mean_delta, summary.std_error);
    Ok(())
}

fn compare_reach(s: &Settings, seed: u64, out: &Path) -> Result<()> {
    let k: usize = s.get("k")?;
    let episodes: usize = s.get("episodes")?;
    let mut arms = [Vec::new(), Vec::new()];
    let mut all_paths = Vec::new();
    for (arm, (key, f)) in arms.iter_mut().zip([("euclidean", Formulation::Euclidean), ("manifold", Formulation::Manifold)]) {
        let paths: Vec<PathBuf> = s.list(key)?;
        if paths.is_empty() {
            return Err(Error::config(format!("`{key}` needs at least one checkpoint")));
        }
        for p in paths {
            let (run, policy) = load_run(&p)?;
            if policy.config().formulation != f {
                return Err(Error::config(format!("{} is not a {f} policy", p.display())));
            }
            let res = evaluate(&PolicyController { policy: &policy, k }, policy.task(), seed, episodes)?;
            arm.push((run.seed, summarize(&res).success_rate));
            all_paths.push(p);
        }
    }
    let summary = compare_formulations("success_rate", &arms[0], &arms[1])?;
    std::fs::write(out.join("compare.csv"), summary.to_csv())?;
    let inputs: Vec<&Path> = all_paths.iter().map(PathBuf::as_path).collect();
    let seeds: Vec<u64> = arms[0].iter().map(|a| a.0).collect();
    manifest("compare-formulations", s, &seeds, &inputs, out, &["compare.csv"])?;
    println!("mean delta (manifold - euclidean) {:.4}, std error {:.4}", summary.mean_delta, summary.std_error);
    Ok(())
}

fn circle(s: &Settings, seed: u64, out: &Path) -> Result<()> {
    let f: Formulation = s.get("formulation")?;
    let r = run_circle_experiment(&circle_config(s, f)?, seed)?;
    let summary = format!(
        "formulation,seed,mean_error_deg,max_error_deg,eval_samples,train_seconds\n{f},{seed},{},{},{},{}\n",
        r.mean_error_deg,
        r.max_error_deg,
        r.errors_deg.len(),
        r.train_seconds
    );
    std::fs::write(out.join("summary.csv"), summary)?;
    std::fs::write(out.join("grid.csv"), emit_grid(&r.grid))?;
    std::fs::write(out.join("loss.csv"), loss_csv(&r.losses))?;
    manifest("circle", s, &[seed], &[], out, &["summary.csv", "grid.csv", "loss.csv"])?;
    println!("{f}: mean angle error {:.4} deg (max {:.4}) over {} samples", r.mean_error_deg, r.max_error_deg, r.errors_deg.len());
    Ok(())
}
