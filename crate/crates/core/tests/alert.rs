use fcw_redteam_core::alert::{classify_dv, driver_updates, safe_distance, simulate_driver, WarningLight};
use fcw_redteam_core::G;
use proptest::prelude::*;

fn light() -> impl Strategy<Value = WarningLight> {
    prop_oneof![Just(WarningLight::Green), Just(WarningLight::Yellow), Just(WarningLight::Red)]
}

/// Light sequences with long runs, so the driver actually toggles.
fn runs() -> impl Strategy<Value = Vec<WarningLight>> {
    prop::collection::vec((light(), 1usize..40), 1..12)
        .prop_map(|v| v.into_iter().flat_map(|(l, n)| std::iter::repeat_n(l, n)).collect())
}

proptest! {
    #[test]
    fn classes_partition_the_plane(d in -10.0..200.0f64, v in -40.0..40.0f64) {
        let l = classify_dv(d, v);
        let green = v >= 0.0;
        let red = v < 0.0 && d <= safe_distance(v);
        let yellow = v < 0.0 && d > safe_distance(v);
        prop_assert_eq!([green, yellow, red].iter().filter(|&&b| b).count(), 1);
        let want = if green { WarningLight::Green } else if red { WarningLight::Red } else { WarningLight::Yellow };
        prop_assert_eq!(l, want);
    }

    #[test]
    fn safe_distance_closed_form(v in -40.0..0.0f64) {
        let want = 1.2 * v.abs() + v * v / (0.8 * G);
        prop_assert!((safe_distance(v) - want).abs() <= 1e-12 * (1.0 + want));
    }

    #[test]
    fn boundary_curve_separates_red_and_yellow(d in 0.1..75.0f64) {
        let u = fcw_redteam_core::surrogate::u_curve(d).unwrap();
        prop_assert_eq!(classify_dv(d, u - 1e-6), WarningLight::Red);
        prop_assert_eq!(classify_dv(d, u + 1e-6), WarningLight::Yellow);
    }

    #[test]
    fn braking_toggles_after_exactly_h_same_lights(lights in runs(), h in 1u32..30) {
        let upd = driver_updates(&lights, h);
        let mut prev = false;
        for k in 0..lights.len() {
            if upd[k] != prev {
                // Length of the run of identical lights ending at k.
                let run = lights[..=k].iter().rev().take_while(|&&l| l == lights[k]).count();
                prop_assert_eq!(run, h as usize, "toggle at {}", k);
                prop_assert_eq!(upd[k], lights[k] == WarningLight::Red);
            }
            prev = upd[k];
        }
        let shifted = simulate_driver(&lights, h);
        prop_assert!(!shifted[0]);
        prop_assert_eq!(&shifted[1..], &upd[..lights.len() - 1]);
    }
}

#[test]
fn long_red_run_starts_braking_after_reaction_time() {
    let mut lights = vec![WarningLight::Green; 10];
    lights.extend(vec![WarningLight::Red; 30]);
    let b = simulate_driver(&lights, 24);
    let first = b.iter().position(|&x| x).unwrap();
    assert_eq!(first, 10 + 24);
}
