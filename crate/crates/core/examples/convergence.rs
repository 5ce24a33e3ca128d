//! Convergence study through the experiment harness, written to CSV.

use commuteproj::harness::{run, ExperimentConfig};

fn main() -> commuteproj::Result<()> {
    // cube-kuhn with three refinements and the frequency-1 trig field
    let mut cfg = ExperimentConfig::for_command("convergence");
    cfg.p_sweep = Some((0, 1));
    let rep = run("convergence", &cfg)?;
    print!("{}", rep.render());
    rep.write_csv(std::io::stdout())?;
    Ok(())
}
