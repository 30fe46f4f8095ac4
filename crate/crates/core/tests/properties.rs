use excursus::densities::bm_hitting_cdf;
use excursus::eigen::solve_eigenfunctions;
use excursus::spec::Preset;
use excursus::vervaat::{vervaat_forward, vervaat_inverse, LoopPath};
use proptest::prelude::*;

/// Walk with the given steps, shifted so that it ends at zero.
fn loop_from(steps: &[f64]) -> LoopPath {
    let drift = steps.iter().sum::<f64>() / steps.len() as f64;
    let mut values = vec![0.0];
    for s in steps {
        values.push(values.last().unwrap() + s - drift);
    }
    *values.last_mut().unwrap() = 0.0;
    LoopPath::new(values).unwrap()
}

proptest! {
    #[test]
    fn forward_image_is_a_nonnegative_loop(steps in prop::collection::vec(-1.0f64..1.0, 2..200)) {
        let e = vervaat_forward(&loop_from(&steps));
        prop_assert_eq!(e.values[0], 0.0);
        prop_assert_eq!(*e.values.last().unwrap(), 0.0);
        prop_assert!(e.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn inverse_undoes_forward(steps in prop::collection::vec(-1.0f64..1.0, 2..200)) {
        let w = loop_from(&steps);
        let n = w.steps();
        let (k, _) = w.argmin();
        prop_assume!(k > 0 && k < n);
        let back = vervaat_inverse(&vervaat_forward(&w), (n - k) as f64 / n as f64).unwrap();
        let scale = w.values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (a, b) in back.values.iter().zip(&w.values) {
            prop_assert!((a - b).abs() <= 8.0 * f64::EPSILON * scale);
        }
    }

    #[test]
    fn ou_resolvent_is_symmetric(x in -2.0f64..2.0, y in -2.0f64..2.0, alpha in 0.1f64..3.0) {
        let spec = Preset::Ou { theta: 1.0 }.build().unwrap();
        let pair = solve_eigenfunctions(&spec, alpha, spec.window()).unwrap();
        let (a, b) = (pair.resolvent_density(x, y), pair.resolvent_density(y, x));
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()));
        prop_assert!(a > 0.0);
    }

    #[test]
    fn hitting_cdf_grows_in_time(mu in -2.0f64..2.0, d in 0.01f64..3.0, t in 0.01f64..5.0) {
        let a = bm_hitting_cdf(mu, t, d, 0.0);
        let b = bm_hitting_cdf(mu, 1.5 * t, d, 0.0);
        prop_assert!((0.0..=1.0).contains(&a) && b >= a - 1e-15);
    }
}
