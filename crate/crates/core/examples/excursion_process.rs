use excursus::ppp::{ExcursionProcess, ProcessOptions};
use excursus::rng::stream;
use excursus::spec::Preset;

fn main() -> excursus::Result<()> {
    let spec = Preset::BmDrift { mu: 0.5 }.build()?;
    let process = ExcursionProcess::new(&spec, 0.0, ProcessOptions::new(0.01, 1e-3))?;
    println!("rate per unit level: {:.5}, escaping part {:.5}", process.intensity(-1.0), process.escape_rate(-1.0));

    // excursions of length > 0.01 indexed by level, down to the one that never returns
    let points = process.sample(&mut stream(7, 0))?;
    for p in &points {
        println!(
            "level {:+.4}  {} steps{}",
            p.level,
            p.excursion.values.len(),
            if p.escaped { "  escapes" } else { "" }
        );
    }
    Ok(())
}
