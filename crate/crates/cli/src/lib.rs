//! Library side of the `augsearch` command-line tool.

pub mod config;
pub mod pipeline;

pub use config::{Baseline, ConfigError, PipelineConfig};
pub use pipeline::Run;

/// Worker count: the flag wins, otherwise available cores capped by the
/// `AUGSEARCH_THREADS` value.
pub fn resolve_workers(flag: Option<usize>, env: Option<&str>) -> Result<usize, ConfigError> {
    if let Some(n) = flag {
        if n == 0 {
            return Err(ConfigError("--workers must be positive".into()));
        }
        return Ok(n);
    }
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    match env {
        None => Ok(cores),
        Some(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(cores.min(n)),
            _ => Err(ConfigError(format!(
                "AUGSEARCH_THREADS must be a positive integer, got {v:?}"
            ))),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worker_resolution() {
        assert_eq!(resolve_workers(Some(5), Some("2")).unwrap(), 5);
        assert_eq!(resolve_workers(None, Some("1")).unwrap(), 1);
        assert!(resolve_workers(None, Some("0")).is_err());
        assert!(resolve_workers(None, Some("many")).is_err());
        assert!(resolve_workers(Some(0), None).is_err());
        assert!(resolve_workers(None, None).unwrap() >= 1);
    }
}
