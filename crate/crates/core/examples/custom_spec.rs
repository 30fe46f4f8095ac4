use excursus::eigen::{ruin_function, solve_eigenfunctions};
use excursus::spec::{parse_spec_text, Form, Interval, SpecBuilder};

fn main() -> excursus::Result<()> {
    // dX = tanh(X) dt + dW: transient upwards, drift vanishing at the origin
    let spec = SpecBuilder::new(Form::sde(f64::tanh, |_| 1.0), Interval::real_line()).window(-8.0, 8.0).build()?;
    let pair = solve_eigenfunctions(&spec, 1.0, spec.window())?;
    let ruin = ruin_function(&spec, 0.0)?;
    for x in [0.5, 1.0, 2.0] {
        println!("x = {x}: E e^(-T_0) = {:.5}, P(T_0 < ∞) = {:.5}", pair.hitting_laplace(x, 0.0), ruin.hitting_probability(x, 0.0));
    }

    let text = "# killed OU\nkind = ou\ntheta = 0.8\nkill_rate_expr = 0.1 * x * x\n";
    let ou = parse_spec_text(text)?;
    println!("{} is conservative: {}", ou.name(), ou.is_conservative());
    Ok(())
}
