use excursus::eigen::solve_eigenfunctions;
use excursus::spec::Preset;

fn main() -> excursus::Result<()> {
    let spec = Preset::Ou { theta: 1.0 }.build()?;
    let alpha = 0.5;
    let pair = solve_eigenfunctions(&spec, alpha, spec.window())?;

    println!("{:>6} {:>14} {:>14} {:>14}", "x", "g1", "g2", "u(x, 0)");
    for x in [-2.0, -1.0, 0.0, 1.0, 2.0] {
        println!("{x:>6.2} {:>14.6e} {:>14.6e} {:>14.6e}", pair.g1(x), pair.g2(x), pair.resolvent_density(x, 0.0));
    }
    let drift = pair.wronskian_deviation().into_iter().fold(0.0, f64::max);
    println!("largest relative change of the Wronskian across the grid: {drift:.2e}");
    println!("E^1 exp(-{alpha} T_0) = {:.6}", pair.hitting_laplace(1.0, 0.0));
    Ok(())
}
