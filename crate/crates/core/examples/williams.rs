use excursus::decomp::{williams_laplace, williams_sample, MinimumLaw};
use excursus::rng::par_samples;
use excursus::spec::Preset;
use excursus::stats::Welford;

fn main() -> excursus::Result<()> {
    let spec = Preset::BmDrift { mu: 0.5 }.build()?;
    let law = MinimumLaw::new(&spec, 0.0)?;

    let draws = par_samples(4000, 99, |_, rng| williams_sample(&law, 1e-3, 0.01, rng))
        .into_iter()
        .collect::<excursus::Result<Vec<_>>>()?;
    let gamma: Welford = draws.iter().map(|s| s.gamma).collect();
    let laplace: Welford = draws.iter().map(|s| (-s.rho).exp()).collect();

    // −γ is Exp(1) for this drift
    println!("E γ = {:.4} ± {:.4}", gamma.mean(), gamma.se());
    println!("E e^(-ρ) = {:.4} ± {:.4}, quadrature {:.4}", laplace.mean(), laplace.se(), williams_laplace(&spec, 0.0, 1.0)?);
    Ok(())
}
