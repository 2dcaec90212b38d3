//! Command-line pipeline over `gcnx-core`: `train`, `explain`, `metrics`
//! and `mine`. Every artifact carries the tool version, a hash of the
//! effective configuration (output locations excluded) and the seed.

pub mod args;
pub mod commands;
pub mod error;
pub mod provenance;
pub mod render;

pub use args::{Cli, Command};
pub use error::{CliError, CliResult};

/// Caps the rayon pool at `GCNX_THREADS` workers when set.
pub fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("GCNX_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("GCNX_THREADS must be a positive integer, got '{value}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}

/// Runs one subcommand and returns human-readable summary lines.
pub fn run(cli: &Cli) -> CliResult<Vec<String>> {
    match &cli.command {
        Command::Train(a) => {
            let s = commands::cmd_train(a)?;
            let mut lines = vec![
                format!("checkpoint: {}", s.checkpoint.display()),
                format!("log: {}", s.log.display()),
                format!("best epoch: {}", s.best_epoch),
            ];
            if let Some(t) = &s.test {
                lines.push(format!("test accuracy: {:.4} ({} molecules)", t.accuracy, t.n));
            }
            Ok(lines)
        }
        Command::Explain(a) => {
            let s = commands::cmd_explain(a)?;
            let mut lines = vec![format!("heatmaps: {} ({} records)", s.heatmaps.display(), s.records)];
            if !s.renderings.is_empty() {
                lines.push(format!("renderings: {} SVG files", s.renderings.len()));
            }
            Ok(lines)
        }
        Command::Metrics(a) => {
            let s = commands::cmd_metrics(a)?;
            let mut lines = vec![format!("metrics: {}", s.csv.display())];
            for r in &s.reports {
                lines.push(format!(
                    "{:<14} fidelity {:.3}  contrastivity {:.1}  sparsity {:.1}",
                    r.method, r.fidelity, r.contrastivity_mean, r.sparsity_mean
                ));
            }
            Ok(lines)
        }
        Command::Mine(a) => {
            let s = commands::cmd_mine(a)?;
            let mut lines = vec![format!("mining: {}", s.csv.display())];
            for (rank, r) in s.report.records.iter().enumerate() {
                lines.push(format!(
                    "{:>2}. {:<20} R_e {:.3}  R_p {:.3}",
                    rank + 1,
                    r.subgraph.rendering,
                    r.r_e,
                    r.r_p
                ));
            }
            lines.push(format!("average R_p: {:.3}", s.report.average_r_p));
            Ok(lines)
        }
    }
}
