//! Shared plumbing for the command-line tools.

use std::process::ExitCode;

use anyhow::{bail, Context, Result};

/// Rejects empty grids and grids with zero or repeated entries out of order.
pub fn check_grid(grid: &[usize]) -> Result<()> {
    if grid.is_empty() || grid.contains(&0) {
        bail!("grid values must be positive");
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        bail!("grid must be strictly increasing");
    }
    Ok(())
}

/// Fixes the size of the global worker pool; `None` keeps the default.
pub fn init_threads(threads: Option<usize>) -> Result<usize> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(rayon::current_num_threads())
}

/// Maps a run result and its failed-cell count to a process exit code.
pub fn finish(result: Result<usize>) -> ExitCode {
    match result {
        Ok(0) => ExitCode::SUCCESS,
        Ok(n) => {
            eprintln!("{n} cell(s) errored");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {}", render(&e));
            ExitCode::FAILURE
        }
    }
}

/// Joins the error chain, skipping causes already quoted by their parent.
fn render(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_are_checked() {
        assert!(check_grid(&[512, 1024, 2048]).is_ok());
        assert!(check_grid(&[512, 0]).is_err());
        assert!(check_grid(&[1024, 512]).is_err());
        assert!(check_grid(&[]).is_err());
    }
}
