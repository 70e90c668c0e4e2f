//! Writes a simulated sample as CSV to stdout.
//!
//! Usage: `simulate_csv [n] [seed]` (defaults 1000 and 0).

use cfclass_core::simulation::{generate_dgp, DgpConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1000);
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let sim = generate_dgp(&DgpConfig {
        n,
        seed,
        ..Default::default()
    })?;
    sim.dataset.write_csv(std::io::stdout().lock())?;
    Ok(())
}
