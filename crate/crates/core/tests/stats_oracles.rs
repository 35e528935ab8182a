//! Statistics checked against brute-force and closed-form oracles.

use proptest::prelude::*;
use rema_core::stats::{average_ranks, digamma, spearman, welch_t};

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, left: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..left.len() {
            let v = left.remove(i);
            prefix.push(v);
            rec(prefix, left, out);
            prefix.pop();
            left.insert(i, v);
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut (0..n).collect(), &mut out);
    out
}

/// Rank by counting: 1 + #smaller + (#equal − 1) / 2.
fn oracle_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|a| {
            let less = x.iter().filter(|b| *b < a).count() as f64;
            let eq = x.iter().filter(|b| *b == a).count() as f64;
            1.0 + less + (eq - 1.0) / 2.0
        })
        .collect()
}

fn oracle_rho(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (oracle_ranks(x), oracle_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let sxy: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

#[test]
fn spearman_matches_exhaustive_permutation_oracle() {
    for n in 3..=6 {
        let x: Vec<f64> = (0..n).map(|i| i as f64 * 1.5 - 2.0).collect();
        let perms = permutations(n);
        let null: Vec<f64> = perms
            .iter()
            .map(|p| {
                let y: Vec<f64> = p.iter().map(|&i| i as f64).collect();
                oracle_rho(&x, &y)
            })
            .collect();
        let mut seen: Vec<(f64, f64, f64)> = Vec::new();
        for p in &perms {
            let y: Vec<f64> = p.iter().map(|&i| (i as f64).exp()).collect();
            let s = spearman(&x, &y).unwrap();
            let rho = oracle_rho(&x, &y);
            assert!((s.rho - rho).abs() < 1e-12, "n={n} {p:?}");
            // closed form without ties
            let d2: f64 = p.iter().enumerate().map(|(i, &r)| (i as f64 - r as f64).powi(2)).sum();
            let nf = n as f64;
            assert!((s.rho - (1.0 - 6.0 * d2 / (nf * (nf * nf - 1.0)))).abs() < 1e-12);
            let exact_p = null.iter().filter(|r| r.abs() >= rho.abs() - 1e-12).count() as f64 / null.len() as f64;
            seen.push((rho.abs(), s.p_value, exact_p));
        }
        // the t-approximation orders outcomes the same way as the exact null
        for a in &seen {
            for b in &seen {
                if a.0 > b.0 + 1e-9 {
                    assert!(a.1 <= b.1 && a.2 <= b.2, "n={n}: {a:?} vs {b:?}");
                }
            }
        }
    }
}

#[test]
fn tied_ranks_match_counting_oracle() {
    let cases: [&[f64]; 4] = [&[1.0, 1.0, 2.0], &[3.0, 1.0, 3.0, 3.0, 0.0], &[5.0; 4], &[2.0, -1.0, 2.0, -1.0, 7.0, 2.0]];
    for x in cases {
        assert_eq!(average_ranks(x), oracle_ranks(x), "{x:?}");
    }
    let acc = [0.2, 0.2, 0.9];
    let rel = [0.3, 0.1, 0.5];
    assert!((spearman(&acc, &rel).unwrap().rho - oracle_rho(&acc, &rel)).abs() < 1e-12);
}

#[test]
fn welch_reference_case() {
    let w = welch_t(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
    assert!((w.t_stat + 3.674_234_614_174_767).abs() < 1e-6);
    assert!((w.dof.unwrap() - 4.0).abs() < 1e-6);
    assert!((w.p_two_sided - 0.021_311_641_128_756_727).abs() < 1e-9);
}

proptest! {
    #[test]
    fn digamma_recurrence(x in 1e-3f64..1e4) {
        let lhs = digamma(x + 1.0).unwrap();
        let rhs = digamma(x).unwrap() + 1.0 / x;
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
    }

    #[test]
    fn spearman_agrees_with_oracle_on_random_ties(
        v in proptest::collection::vec((0u8..4, 0u8..4), 3..9)
    ) {
        let x: Vec<f64> = v.iter().map(|p| p.0 as f64).collect();
        let y: Vec<f64> = v.iter().map(|p| p.1 as f64).collect();
        if let Ok(s) = spearman(&x, &y) {
            prop_assert!((s.rho - oracle_rho(&x, &y)).abs() < 1e-12);
        }
    }
}
