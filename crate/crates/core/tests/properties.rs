use proptest::prelude::*;

use rfkde::harness::{diagonal_check, kolmogorov_sf, ks_test, ReplicateMatrix};
use rfkde::lattice::{enumerate_window, lex_compare};
use rfkde::mixing::{m_n, quantile_function, shell_count};
use rfkde::{naive_density_estimate, Kernel, KernelFamily, KernelSpec, LatticeWindow, MixingSequence, SortedSample, TailDistribution};

fn kernel_strategy() -> impl Strategy<Value = Kernel> {
    (0usize..5, 0.2f64..3.0).prop_map(|(i, r)| {
        let family = [
            KernelFamily::Uniform,
            KernelFamily::Triangular,
            KernelFamily::Epanechnikov,
            KernelFamily::Quartic,
            KernelFamily::TruncatedGaussian,
        ][i];
        Kernel::new(KernelSpec::with_radius(family, r)).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn sweep_matches_naive(
        kernel in kernel_strategy(),
        values in prop::collection::vec(-5.0f64..5.0, 1..1000),
        points in prop::collection::vec(-6.0f64..6.0, 0..20),
        b in 0.01f64..2.0,
    ) {
        let sorted = SortedSample::new(&values);
        let naive = naive_density_estimate(&values, &kernel, b, &points);
        for (x, want) in points.iter().zip(naive) {
            let got = sorted.density_at(&kernel, b, *x);
            prop_assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()), "x={x} got={got} want={want}");
        }
    }

    #[test]
    fn sweep_matches_naive_at_window_edges(
        values in prop::collection::vec(-2i32..2, 1..200),
        points in prop::collection::vec(-4i32..4, 1..10),
    ) {
        // values and points on a grid of the bandwidth so many sites sit exactly on the support edge
        let b = 0.25;
        let values: Vec<f64> = values.iter().map(|&v| v as f64 * b).collect();
        let kernel = Kernel::uniform();
        let sorted = SortedSample::new(&values);
        for &p in &points {
            let x = p as f64 * b / 2.0;
            let want = naive_density_estimate(&values, &kernel, b, &[x])[0];
            prop_assert!((sorted.density_at(&kernel, b, x) - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn scale_equivariance(
        kernel in kernel_strategy(),
        values in prop::collection::vec(-3.0f64..3.0, 1..300),
        x in -3.0f64..3.0,
        b in 0.05f64..1.0,
        a in prop::sample::select(vec![0.5f64, 2.0, 4.0, 0.25, 8.0]),
    ) {
        let scaled: Vec<f64> = values.iter().map(|v| a * v).collect();
        let f = SortedSample::new(&values).density_at(&kernel, b, x);
        let g = SortedSample::new(&scaled).density_at(&kernel, a * b, a * x);
        prop_assert!((g - f / a).abs() <= 1e-12 * (1.0 + f.abs()), "{g} vs {}", f / a);
    }

    #[test]
    fn ks_distance_in_unit_interval(
        samples in prop::collection::vec(-10.0f64..10.0, 100..400),
        variance in 0.01f64..10.0,
    ) {
        let r = ks_test(&samples, variance).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.distance));
        prop_assert!((0.0..=1.0).contains(&r.p_value));
    }

    #[test]
    fn kolmogorov_sf_nonincreasing(a in 0.0f64..4.0, b in 0.0f64..4.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(kolmogorov_sf(hi) <= kolmogorov_sf(lo) + 1e-12);
    }

    #[test]
    fn correlation_matrix_well_formed(
        rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 100..200),
        weights in prop::collection::vec(-1.0f64..1.0, 3),
    ) {
        let m = ReplicateMatrix::from_rows(&rows).unwrap();
        let dc = diagonal_check(&m).unwrap();
        for i in 0..3 {
            prop_assert_eq!(dc.correlation[i][i], 1.0);
            for j in 0..3 {
                prop_assert!((-1.0..=1.0).contains(&dc.correlation[i][j]));
                prop_assert_eq!(dc.covariance[i][j], dc.covariance[j][i]);
            }
        }
        // positive semidefinite along a random direction
        let q: f64 = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| weights[i] * dc.covariance[i][j] * weights[j]).sum();
        prop_assert!(q >= -1e-10);
    }

    #[test]
    fn m_n_nonincreasing_in_b(q in 2.5f64..8.0, b1 in 1e-6f64..0.9, b2 in 1e-6f64..0.9) {
        let seq = MixingSequence::power_law(1.0, q).unwrap();
        let (lo, hi) = if b1 <= b2 { (b1, b2) } else { (b2, b1) };
        prop_assert!(m_n(&seq, 1, hi).unwrap() <= m_n(&seq, 1, lo).unwrap());
    }

    #[test]
    fn quantile_nonincreasing(values in prop::collection::vec(-5.0f64..5.0, 1..50), u in 0.0f64..1.0, v in 0.0f64..1.0) {
        let dist = TailDistribution::Empirical { values };
        let (lo, hi) = if u <= v { (u, v) } else { (v, u) };
        prop_assert!(quantile_function(&dist, hi) <= quantile_function(&dist, lo));
    }

    #[test]
    fn empirical_quantile_right_continuous(values in prop::collection::vec(-5.0f64..5.0, 1..30), j in 0usize..30) {
        let n = values.len();
        let j = j % n;
        let dist = TailDistribution::Empirical { values };
        let u = j as f64 / n as f64;
        prop_assert_eq!(quantile_function(&dist, u), quantile_function(&dist, u + 1e-12));
    }
}

#[test]
fn shell_sums_telescope_exhaustively() {
    for d in 1..=4u32 {
        let mut total: u128 = 0;
        for k in 1..=50u64 {
            total += shell_count(d, k);
            assert_eq!(total, (2 * k as u128 + 1).pow(d) - 1);
        }
    }
}

#[test]
fn enumeration_sorted_exhaustive() {
    for (d, n) in [(1, 1000), (2, 100), (3, 40), (5, 10)] {
        let w = LatticeWindow::new(d, n).unwrap();
        let sites = enumerate_window(&w);
        assert_eq!(sites.len(), w.site_count());
        assert!(sites.windows(2).all(|p| lex_compare(&p[0], &p[1]).unwrap().is_lt()));
    }
}
