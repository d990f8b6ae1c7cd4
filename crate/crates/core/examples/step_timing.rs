//! Average wall time of one solver step on the Taylor–Green convergence setup.
//!
//! `cargo run --release -p epm-core --example step_timing -- [dx] [steps]`

use std::time::Instant;

use epm_core::experiments::taylor_green::{build_solver, TaylorGreenRun};
use epm_core::Preset;

fn main() -> epm_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let dx: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.01);
    let steps: u32 = args.next().and_then(|s| s.parse().ok()).unwrap_or(12);
    let run = TaylorGreenRun::<f64>::convergence(Preset::GeneralizedSpike, dx, 2);
    let (solver, system) = build_solver(&run)?;
    let n = system.len();
    let mut state = solver.initial_state(system)?;
    let start = Instant::now();
    for _ in 0..steps {
        state = solver.advance(&state)?;
    }
    println!(
        "{n} particles, h = {:.5}: {:?} per step, {} neighbor rebuilds",
        run.h,
        start.elapsed() / steps,
        solver.neighbor_rebuilds()
    );
    Ok(())
}
