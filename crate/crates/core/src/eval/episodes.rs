use super::sweep::num;
use crate::tasks::rollout::{summarize, RolloutResult};
use std::fmt::Write as _;

/// One row per episode followed by an `all` row holding the column means
/// (success rate, mean steps, ...) and the total clamp count.
pub fn episode_csv(results: &[RolloutResult]) -> String {
    let mut out = String::from("episode,success,steps,clamp_events,final_pos_error,final_rot_error_deg,mode\n");
    for r in results {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.episode,
            r.success as u8,
            r.steps,
            r.clamp_events,
            num(r.final_pos_error),
            num(r.final_rot_error_deg),
            r.mode
        );
    }
    let s = summarize(results);
    let n = results.len().max(1) as f64;
    let mean = |f: fn(&RolloutResult) -> f64| results.iter().map(f).sum::<f64>() / n;
    let _ = writeln!(
        out,
        "all,{},{},{},{},{},{}",
        num(s.success_rate),
        num(s.mean_steps),
        s.clamp_events,
        num(mean(|r| r.final_pos_error)),
        num(mean(|r| r.final_rot_error_deg)),
        num(mean(|r| r.mode as f64))
    );
    out
}
