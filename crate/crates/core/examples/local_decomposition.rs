use excursus::decomp::verify_local_decomposition;
use excursus::spec::Preset;

fn main() -> excursus::Result<()> {
    let spec = Preset::Brownian.build()?;
    let r = verify_local_decomposition(&spec, 0.0, 1.0, 20_000, 1e-3, 5)?;
    println!("(H, ρ, X) histogram  p = {:.3}", r.triple.p_value);
    println!("H_1 marginal         p = {:.3}", r.min_marginal.p_value);
    println!("ρ_1 arcsine          p = {:.3}", r.argmin_marginal.p_value);
    if let (Some(pre), Some(post)) = (&r.pre_bridge, &r.post_bridge) {
        println!("pre / post bridges   p = {:.3} / {:.3}", pre.p_value, post.p_value);
    }
    println!("{}", if r.passes(0.01) { "consistent" } else { "rejected" });
    Ok(())
}
