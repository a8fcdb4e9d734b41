use fmpinn::fdm::{fdm_solve, FdmOptions};
use fmpinn::problems::{example_1d_two_scale, Problem};
use proptest::prelude::*;

fn options() -> FdmOptions {
    FdmOptions {
        allow_underresolved: true,
        ..FdmOptions::default()
    }
}

fn rough_2d(amplitude: f64, freq: f64, forcing: f64) -> Problem {
    Problem::from_toml_str(&format!(
        r#"
name = "rough"
lo = [0.0, 0.0]
hi = [1.0, 1.0]
coefficient = "2 + {amplitude}*sin({freq}*x1)*cos({freq}*x2)"
forcing = "{forcing}"
boundary = "0"
test_h = 0.0625
"#
    ))
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn nonnegative_forcing_gives_nonnegative_solution(a in 0.0..1.9f64, k in 1.0..20.0f64, f in 0.0..10.0f64) {
        let field = fdm_solve(&rough_2d(a, k, f), 1.0 / 16.0, &options()).unwrap();
        let min = field.values().iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert!(min >= -1e-10, "{}", min);
    }

    #[test]
    fn solution_is_linear_in_forcing(a in 0.0..1.9f64, k in 1.0..20.0f64, f in 0.5..10.0f64) {
        let one = fdm_solve(&rough_2d(a, k, 1.0), 1.0 / 16.0, &options()).unwrap();
        let scaled = fdm_solve(&rough_2d(a, k, f), 1.0 / 16.0, &options()).unwrap();
        for (u, v) in one.values().iter().zip(scaled.values()) {
            prop_assert!((f * u - v).abs() <= 1e-8 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn resolved_grids_track_the_closed_form(inv_eps in 2u32..=10) {
        let eps = 1.0 / f64::from(inv_eps);
        let problem = example_1d_two_scale(eps).unwrap();
        let h = eps / 64.0;
        let field = fdm_solve(&problem, h, &FdmOptions::default()).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..field.len() {
            let x = field.node(i);
            let exact = problem.exact(&x).unwrap().unwrap();
            num += (field.values()[i] - exact).powi(2);
            den += exact * exact;
        }
        let rel = (num / den).sqrt();
        prop_assert!(rel < 1e-3, "eps {}: REL {}", eps, rel);
    }
}
