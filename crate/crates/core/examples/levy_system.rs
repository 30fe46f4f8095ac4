use excursus::ppp::{verify_levy_system, Functional, LevyConfig, Weight};
use excursus::spec::Preset;

fn main() -> excursus::Result<()> {
    let spec = Preset::BmDrift { mu: 0.5 }.build()?;
    let cases = [
        (Weight::Discount, Functional::Longer),
        (Weight::Before(1.0), Functional::Height(0.6)),
        (Weight::Discount, Functional::DiscountedLength(1.0)),
    ];
    for (weight, functional) in cases {
        let cfg = LevyConfig::new(0.0, weight, functional, 0.01, 5000, 1e-3, 3);
        let r = verify_levy_system(&spec, &cfg)?;
        println!("{weight:?} {functional:?}: {:.4} ± {:.4} vs {:.4} (z = {:+.2})", r.lhs, r.se_lhs, r.rhs, r.z_score);
    }
    Ok(())
}
