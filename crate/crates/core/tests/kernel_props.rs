use approx::assert_relative_eq;
use proptest::prelude::*;
use stefan_core::kernel::{abel_constant_integral, abel_row, eval_k, eval_k_t, eval_k_z, layer_mass};

proptest! {
    #[test]
    fn kernel_is_even_and_positive(z in -20.0f64..20.0, t in 1e-3f64..10.0) {
        let a = eval_k(z, t).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert_eq!(a, eval_k(-z, t).unwrap());
        prop_assert_eq!(eval_k_z(z, t).unwrap(), -eval_k_z(-z, t).unwrap());
    }

    #[test]
    fn derivatives_match_finite_differences(z in -4.0f64..4.0, t in 0.05f64..4.0) {
        let h = 1e-5;
        let dz = (eval_k(z + h, t).unwrap() - eval_k(z - h, t).unwrap()) / (2.0 * h);
        let dt = (eval_k(z, t + h).unwrap() - eval_k(z, t - h).unwrap()) / (2.0 * h);
        let scale = 1.0 / t;
        prop_assert!((dz - eval_k_z(z, t).unwrap()).abs() <= 1e-6 * scale);
        prop_assert!((dt - eval_k_t(z, t).unwrap()).abs() <= 1e-6 * scale * scale);
    }

    #[test]
    fn heat_equation_holds(z in -4.0f64..4.0, t in 0.05f64..4.0) {
        let h = 1e-4;
        let kzz = (eval_k(z + h, t).unwrap() - 2.0 * eval_k(z, t).unwrap() + eval_k(z - h, t).unwrap()) / (h * h);
        prop_assert!((kzz - eval_k_t(z, t).unwrap()).abs() <= 1e-5 / (t * t));
    }

    #[test]
    fn layer_mass_is_a_distribution(a in -5.0f64..5.0, z in -5.0f64..5.0, t in 1e-3f64..5.0) {
        let m = layer_mass(a, z, t).unwrap();
        prop_assert!((0.0..=1.0).contains(&m));
        prop_assert!(layer_mass(a + 0.1, z, t).unwrap() >= m);
        prop_assert!((m + layer_mass(-a, -z, t).unwrap() - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn abel_weights_integrate_linear_functions(
        steps in proptest::collection::vec(0.01f64..1.0, 1..40),
        c0 in -3.0f64..3.0,
        c1 in -3.0f64..3.0,
    ) {
        let mut grid = vec![0.0];
        for h in &steps {
            grid.push(grid.last().unwrap() + h);
        }
        let target = *grid.last().unwrap();
        let row = abel_row(&grid, target).unwrap();
        let f: Vec<f64> = grid.iter().map(|&t| c0 + c1 * t).collect();
        // int_0^T (c0 + c1 tau) (T - tau)^(-1/2) = 2 c0 sqrt T + (4/3) c1 T^(3/2)
        let exact = c0 * abel_constant_integral(target) + 4.0 / 3.0 * c1 * target.powf(1.5);
        prop_assert!((row.apply(&f) - exact).abs() <= 1e-11 * (1.0 + exact.abs()));
        prop_assert!(row.weights.iter().all(|&w| w > 0.0));
    }
}

#[test]
fn nonpositive_time_is_rejected() {
    assert!(eval_k(0.0, 0.0).is_err());
    assert!(eval_k_z(0.0, -1.0).is_err());
    assert!(eval_k_t(0.0, f64::NAN).is_err());
    assert!(layer_mass(0.0, 0.0, 0.0).is_err());
}

#[test]
fn abel_row_leaves_later_nodes_unweighted() {
    let grid = [0.0, 0.1, 0.3, 0.35, 0.6];
    let row = abel_row(&grid, 0.3).unwrap();
    assert_eq!(&row.weights[3..], &[0.0, 0.0]);
    assert_relative_eq!(row.weights.iter().sum::<f64>(), abel_constant_integral(0.3), max_relative = 1e-14);
    assert!(abel_row(&grid, 0.2).is_err());
    assert!(abel_row(&[0.1, 0.2], 0.2).is_err());
}
