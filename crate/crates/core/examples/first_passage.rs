use excursus::densities::{bm_hitting_cdf, PassageDensity};
use excursus::spec::Preset;

fn main() -> excursus::Result<()> {
    let mu = 0.5;
    let spec = Preset::BmDrift { mu }.build()?;
    let pd = PassageDensity::new(&spec);

    // density of T_0 from x = 1, and its running integral against the closed-form CDF
    let (x, y, dt) = (1.0, 0.0, 0.01);
    let mut mass = 0.0;
    let mut prev = 0.0;
    for i in 1..=300 {
        let t = i as f64 * dt;
        let f = pd.density(t, x, y)?;
        mass += 0.5 * (prev + f) * dt;
        prev = f;
        if i % 50 == 0 {
            println!("t = {t:.2}  f = {f:.6}  ∫f = {mass:.5}  P(T_0 ≤ t) = {:.5}", bm_hitting_cdf(mu, t, x, y));
        }
    }
    Ok(())
}
