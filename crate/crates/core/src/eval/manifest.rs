use crate::nn::file_hash;
use crate::Result;
use std::path::Path;

/// Writes `value` as pretty JSON to `path` with a trailing newline.
pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Run manifest written next to a result CSV: command, resolved config,
/// seeds and the content hash of every checkpoint the results depend on.
pub fn run_manifest(
    command: &str,
    config: serde_json::Value,
    seeds: &[u64],
    checkpoints: &[&Path],
) -> Result<serde_json::Value> {
    let mut hashes = serde_json::Map::new();
    for p in checkpoints {
        hashes.insert(p.display().to_string(), serde_json::Value::String(file_hash(p)?));
    }
    Ok(serde_json::json!({
        "command": command,
        "crate_version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "seeds": seeds,
        "checkpoints": hashes,
    }))
}
