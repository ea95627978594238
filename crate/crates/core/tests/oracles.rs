//! Exact analysis checked against independent routes: closed forms,
//! brute-force enumeration and the power-iteration estimate.

use mixea_core::chain::{
    asymptotic_hitting_time, build_chain, build_lumped_chain, check_spectral_radius,
    convergence_rate, hitting_time_vector, lumped_kernel, spectral_radius, AnalysisReport,
    HittingTimes,
};
use mixea_core::mutate::{per_bit_flip, single_bit_flip, MutationKernel, Operator};
use mixea_core::space::{Landscape, LandscapeSpec};

/// `Σ_{j=i}^{n-1} n / (n - j)`: expected single-flip time from level `i`.
fn coupon_collector(n: u32, level: u32) -> f64 {
    (level..n).map(|j| f64::from(n) / f64::from(n - j)).sum()
}

fn builtin_pairs(n_max: u32) -> Vec<(String, Landscape, MutationKernel)> {
    let mut out = Vec::new();
    for n in [2, 5, 8, 9, 10].into_iter().filter(|&n| n <= n_max) {
        for l in [
            Landscape::onemax(n).unwrap(),
            Landscape::staircase(n).unwrap(),
        ] {
            for k in [
                single_bit_flip(n).unwrap(),
                per_bit_flip(n, 1.0 / f64::from(n)).unwrap(),
                per_bit_flip(n, 0.1).unwrap(),
                per_bit_flip(n, 0.9).unwrap(),
            ] {
                out.push((
                    format!("{} n={n} {}", l.spec().kind_name(), k.label),
                    l.clone(),
                    k,
                ));
            }
        }
    }
    let knap = Landscape::knapsack_example1();
    for k in [
        single_bit_flip(10).unwrap(),
        per_bit_flip(10, 0.1).unwrap(),
        per_bit_flip(10, 0.9).unwrap(),
    ] {
        out.push((format!("knapsack {}", k.label), knap.clone(), k));
    }
    out
}

#[test]
fn onemax_hitting_times_match_coupon_collector() {
    for n in [1, 4, 10] {
        let l = Landscape::onemax(n).unwrap();
        let c = build_chain(&single_bit_flip(n).unwrap(), &l).unwrap();
        let HittingTimes::Finite { m, residual } = hitting_time_vector(&c) else {
            panic!("onemax has no traps");
        };
        assert!(residual <= 1e-8);
        for (&x, &mx) in c.non_optimal().iter().zip(&m) {
            let want = coupon_collector(n, x.count_ones());
            assert!(
                (mx - want).abs() <= 1e-9 * want,
                "n={n} x={x}: {mx} vs {want}"
            );
            assert!(mx >= 1.0);
        }
    }
    assert!((coupon_collector(10, 9) - 10.0).abs() < 1e-15);
}

#[test]
fn onemax_radius_rate_and_time() {
    let l = Landscape::onemax(10).unwrap();
    let c = build_chain(&single_bit_flip(10).unwrap(), &l).unwrap();
    assert!((spectral_radius(&c) - 0.9).abs() < 1e-15);
    assert!((asymptotic_hitting_time(&c) - 10.0).abs() < 1e-9);
    let r = convergence_rate(spectral_radius(&c)).unwrap();
    assert!(r > 0.1 && r < 1.0 / 9.0);
}

#[test]
fn knapsack_local_optimum_waits_for_a_full_flip() {
    let l = Landscape::knapsack_example1();
    let c = build_chain(&per_bit_flip(10, 0.1).unwrap(), &l).unwrap();
    let times = hitting_time_vector(&c);
    let m = times.finite().unwrap();
    let trap = 0b11_1111_1110;
    let pos = c.non_optimal().iter().position(|&x| x == trap).unwrap();
    // the optimum (1,0,…,0) is the only improvement: flip all ten bits
    let want = 1.0 / 0.1f64.powi(10);
    assert!((m[pos] - want).abs() <= 1e-6 * want, "{} vs {want}", m[pos]);
}

#[test]
fn max_diagonal_matches_power_iteration() {
    for (name, l, k) in builtin_pairs(10) {
        let c = build_chain(&k, &l).unwrap();
        let check = check_spectral_radius(&c).unwrap();
        assert!(
            check.oracle.converged,
            "{name}: power iteration did not converge"
        );
        assert!(
            check.agrees(),
            "{name}: {} vs {}",
            check.diagonal,
            check.oracle.estimate
        );
    }
}

#[test]
fn sandwich_and_residual_on_builtins() {
    for (name, l, k) in builtin_pairs(10) {
        let c = build_chain(&k, &l).unwrap();
        let report = AnalysisReport::analyze(&c).unwrap();
        if let HittingTimes::Finite { m, residual } = &report.times {
            let scale = report.times.max().max(1.0);
            assert!(*residual <= 1e-8 * scale, "{name}: residual {residual}");
            assert!(
                report.times.min() <= report.hitting_t * (1.0 + 1e-12),
                "{name}"
            );
            assert!(
                report.hitting_t <= report.times.max() * (1.0 + 1e-12),
                "{name}"
            );
            assert!(m.iter().all(|&v| v >= 1.0 - 1e-9), "{name}");
        } else {
            assert!(report.rho_t >= 1.0 - 1e-12, "{name}");
            assert!(!report.traps.is_empty(), "{name}");
        }
    }
}

/// Level transition probabilities counted over every target bitstring.
fn brute_force_level_kernel(n: u32, op: Operator) -> Vec<Vec<f64>> {
    let k = op.kernel(n).unwrap();
    (0..=n)
        .map(|i| {
            let x = (1usize << i) - 1;
            let mut row = vec![0.0; n as usize + 1];
            for y in 0..1usize << n {
                row[y.count_ones() as usize] += k.prob(x, y);
            }
            row
        })
        .collect()
}

#[test]
fn lumped_kernel_matches_enumeration() {
    for op in [
        Operator::SingleBitFlip,
        Operator::PerBitFlip { p: 0.125 },
        Operator::PerBitFlip { p: 0.7 },
    ] {
        let want = brute_force_level_kernel(8, op);
        let got = lumped_kernel(8, op).unwrap();
        for (i, row) in want.iter().enumerate() {
            for (j, &w) in row.iter().enumerate() {
                assert!((got.matrix.get(i, j) - w).abs() < 1e-14, "{op:?} {i}->{j}");
            }
        }
    }
}

#[test]
fn lumped_and_full_chains_agree() {
    let cases: [(LandscapeSpec, Operator); 4] = [
        (LandscapeSpec::Onemax { n: 10 }, Operator::SingleBitFlip),
        (
            LandscapeSpec::Onemax { n: 10 },
            Operator::PerBitFlip { p: 0.1 },
        ),
        (
            LandscapeSpec::Staircase { n: 10 },
            Operator::PerBitFlip { p: 0.1 },
        ),
        (LandscapeSpec::Staircase { n: 9 }, Operator::SingleBitFlip),
    ];
    for (spec, op) in cases {
        let l = Landscape::build(spec.clone()).unwrap();
        let full = build_chain(&op.kernel(l.n()).unwrap(), &l).unwrap();
        let lumped = build_lumped_chain(&l.level_fitness().unwrap(), op).unwrap();
        assert!((spectral_radius(&full) - spectral_radius(&lumped)).abs() < 1e-9);
        let (ft, lt) = (hitting_time_vector(&full), hitting_time_vector(&lumped));
        match (ft.finite(), lt.finite()) {
            (Some(fm), Some(lm)) => {
                for (&x, &v) in full.non_optimal().iter().zip(fm) {
                    let level = x.count_ones() as usize;
                    let pos = lumped
                        .non_optimal()
                        .iter()
                        .position(|&s| s == level)
                        .unwrap();
                    assert!((v - lm[pos]).abs() <= 1e-9 * v.max(1.0), "{spec:?} x={x}");
                }
            }
            (None, None) => {}
            _ => panic!("{spec:?}: lumped and full disagree on finiteness"),
        }
    }
}

#[test]
fn staircase_per_bit_radius_by_enumeration() {
    // worst state by direct count of improving children, independent of
    // the diagonal rule
    for n in [8u32, 10] {
        let l = Landscape::staircase(n).unwrap();
        let p = 1.0 / f64::from(n);
        let c = build_chain(&per_bit_flip(n, p).unwrap(), &l).unwrap();
        let mut worst: f64 = 0.0;
        for &x in c.non_optimal() {
            let improve: f64 = (0..1usize << n)
                .filter(|&y| l.fitness(y) > l.fitness(x))
                .map(|y| {
                    let h = (x ^ y).count_ones() as i32;
                    p.powi(h) * (1.0 - p).powi(n as i32 - h)
                })
                .sum();
            worst = worst.max(1.0 - improve);
        }
        assert!((spectral_radius(&c) - worst).abs() < 1e-12);
    }
}
