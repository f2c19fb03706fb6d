use proptest::prelude::*;

use warpopt::warps::{logistic, sigmoid_forward, sigmoid_jacobian_diag, sigmoid_second_deriv_diag, SigmoidalWarp};

fn central(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn jacobian_matches_differences(x in prop::collection::vec(-8.0f64..8.0, 1..5), s in 0.05f64..4.0) {
        let w = SigmoidalWarp::uniform(x.len(), s).unwrap();
        let j = sigmoid_jacobian_diag(&x, &w).unwrap();
        for (i, &xi) in x.iter().enumerate() {
            let fd = central(|t| logistic(s * t), xi, 1e-5);
            prop_assert!((fd - j[i]).abs() <= 1e-8 * s.max(1.0), "{} vs {}", fd, j[i]);
        }
    }

    #[test]
    fn second_derivative_matches_differences(x in prop::collection::vec(-8.0f64..8.0, 1..5), s in 0.05f64..4.0) {
        let w = SigmoidalWarp::uniform(x.len(), s).unwrap();
        let h = sigmoid_second_deriv_diag(&x, &w).unwrap();
        for (i, &xi) in x.iter().enumerate() {
            // derivative of s·y(1−y)
            let fd = central(|t| { let y = logistic(s * t); s * y * (1.0 - y) }, xi, 1e-5);
            prop_assert!((fd - h[i]).abs() <= 1e-7 * (s * s).max(1.0), "{} vs {}", fd, h[i]);
        }
    }

    #[test]
    fn forward_stays_in_the_open_cube(x in prop::collection::vec(-1e6f64..1e6, 1..5), s in 1e-3f64..1e3) {
        let w = SigmoidalWarp::uniform(x.len(), s).unwrap();
        let y = sigmoid_forward(&x, &w).unwrap().into_inner();
        prop_assert!(y.iter().all(|v| *v > 0.0 && *v < 1.0));
    }
}
