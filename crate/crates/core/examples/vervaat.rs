use excursus::rng::stream;
use excursus::vervaat::{sample_bridge01, verify_forward, verify_round_trip, vervaat_forward, vervaat_inverse};

fn main() -> excursus::Result<()> {
    let mut rng = stream(11, 0);
    let bridge = sample_bridge01(1000, &mut rng)?;
    let (k, ties) = bridge.argmin();
    let excursion = vervaat_forward(&bridge);
    println!("bridge min {:.4} at step {k} ({ties} ties); excursion min {:.1}", bridge.min(), excursion.min());

    // cutting the excursion where the bridge had its minimum gives the bridge back
    let back = vervaat_inverse(&excursion, 1.0 - k as f64 / 1000.0)?;
    let gap = back.values.iter().zip(&bridge.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("round trip deviation {gap:.1e}");

    let fwd = verify_forward(1000, 2000, 3)?;
    println!("midpoint of Ψ(bridge) vs the excursion law: p = {:.3}", fwd.p_value);
    let rt = verify_round_trip(1000, 2000, 3)?;
    println!("round trip: index exact {}, midpoint p = {:.3}", rt.index_exact, rt.midpoint.p_value);
    Ok(())
}
