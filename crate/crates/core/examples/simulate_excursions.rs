use excursus::pathsim::{extract_excursions, running_minimum, sample_path};
use excursus::rng::stream;
use excursus::spec::Preset;

fn main() -> excursus::Result<()> {
    let spec = Preset::Brownian.build()?;
    let mut rng = stream(2024, 0);
    let path = sample_path(&spec, 0.0, 1e-3, 5.0, &mut rng)?;

    let m = running_minimum(&path, |v| spec.scale(v));
    let last = m.h.len() - 1;
    println!("H_5 = {:.4}, reached at ρ = {:.4}", m.h[last], m.rho);

    let excursions = extract_excursions(&path, 0.01)?;
    println!("{} excursions longer than 0.01 above the running minimum", excursions.len());
    for e in excursions.iter().take(8) {
        println!("  start {:.3}  level {:+.4}  duration {:.3}", e.u, e.level, e.duration);
    }
    Ok(())
}
