use excursus::harness::{run, ExperimentConfig};

fn main() -> excursus::Result<()> {
    let cfg = ExperimentConfig {
        spec: "bm-drift:mu=0.5".into(),
        seed: Some(17),
        n: Some(2000),
        menu: vec!["hitting-laplace".into(), "williams-minimum".into(), "bridges".into()],
        ..Default::default()
    };
    let manifest = run(&cfg)?;
    for check in &manifest.checks {
        println!("{}", check.line());
    }
    println!("all passed: {}", manifest.passed);
    Ok(())
}
