use mobility_core::metrics::{bleu, hit_rate_at_k, jsd, kl_divergence, tvd, BleuOptions, Smoothing};
use proptest::prelude::*;

fn normalize(w: &[f64]) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

fn dist(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    // Some zero weights so disjoint supports come up.
    prop::collection::vec(prop_oneof![Just(0.0), 0.01f64..1.0], n)
        .prop_filter("non-zero mass", |w| w.iter().sum::<f64>() > 0.0)
        .prop_map(|w| normalize(&w))
}

fn pair(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..=max).prop_flat_map(|n| (dist(n..n + 1), dist(n..n + 1)))
}

/// Largest probability gap over all events.
fn tvd_by_events(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len();
    (0u32..1 << n)
        .map(|mask| {
            (0..n)
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| p[i] - q[i])
                .sum::<f64>()
                .abs()
        })
        .fold(0.0, f64::max)
}

fn entropy2(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|x| x * x.log2()).sum::<f64>()
}

/// JS divergence as the entropy gap of the mixture, then the square root.
fn jsd_by_entropy(p: &[f64], q: &[f64]) -> f64 {
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| (a + b) / 2.0).collect();
    (entropy2(&m) - (entropy2(p) + entropy2(q)) / 2.0).max(0.0).sqrt()
}

fn kl2(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * (a / b).log2()).sum()
}

fn count_in(hay: &[Vec<u8>], needle: &[u8]) -> usize {
    hay.iter().filter(|g| g.as_slice() == needle).count()
}

/// Textbook BLEU on explicit n-gram lists: clipped precision per order,
/// product of precisions to the 1/N, times the brevity penalty.
fn bleu_by_lists(c: &[u8], r: &[u8], max_n: usize, eps: Option<f64>) -> f64 {
    let mut prod = 1.0;
    for n in 1..=max_n {
        let cg: Vec<Vec<u8>> = if c.len() >= n { c.windows(n).map(<[u8]>::to_vec).collect() } else { vec![] };
        let rg: Vec<Vec<u8>> = if r.len() >= n { r.windows(n).map(<[u8]>::to_vec).collect() } else { vec![] };
        let mut seen: Vec<&Vec<u8>> = Vec::new();
        let mut clipped = 0;
        for g in &cg {
            if !seen.contains(&g) {
                seen.push(g);
                clipped += count_in(&cg, g).min(count_in(&rg, g));
            }
        }
        let num = if clipped == 0 {
            match eps {
                None => return 0.0,
                Some(e) => e,
            }
        } else {
            clipped as f64
        };
        prod *= num / cg.len().max(1) as f64;
    }
    let bp = if c.len() > r.len() { 1.0 } else { (1.0 - r.len() as f64 / c.len() as f64).exp() };
    bp * prod.powf(1.0 / max_n as f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn tvd_matches_event_oracle((p, q) in pair(10)) {
        let v = tvd(&p, &q).unwrap();
        prop_assert!((v - tvd_by_events(&p, &q)).abs() < 1e-9);
        prop_assert_eq!(v, tvd(&q, &p).unwrap());
        prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
    }

    #[test]
    fn jsd_matches_entropy_oracle((p, q) in pair(10)) {
        let v = jsd(&p, &q, 2.0).unwrap();
        prop_assert!((v - jsd_by_entropy(&p, &q)).abs() < 1e-9, "{} vs {}", v, jsd_by_entropy(&p, &q));
        prop_assert!((v - jsd(&q, &p, 2.0).unwrap()).abs() < 1e-15);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        // Squared value is the mean KL to the mixture.
        let m: Vec<f64> = p.iter().zip(&q).map(|(a, b)| (a + b) / 2.0).collect();
        prop_assert!((v * v - (0.5 * kl2(&p, &m) + 0.5 * kl2(&q, &m))).abs() < 1e-9);
        prop_assert!((kl_divergence(&p, &m, 2.0).unwrap() - kl2(&p, &m)).abs() < 1e-9);
    }

    #[test]
    fn bleu_matches_list_oracle(
        c in prop::collection::vec(0u8..4, 1..10),
        r in prop::collection::vec(0u8..4, 1..10),
        max_n in 1usize..5,
        smooth in prop::option::of(0.01f64..0.5),
    ) {
        let opts = BleuOptions { max_n, smoothing: smooth.map_or(Smoothing::None, Smoothing::Epsilon) };
        let v = bleu(&c, &r, &opts).unwrap();
        prop_assert!((v - bleu_by_lists(&c, &r, max_n, smooth)).abs() < 1e-9);
    }

    #[test]
    fn bleu_ignores_relabeling(
        c in prop::collection::vec(0u8..5, 1..12),
        r in prop::collection::vec(0u8..5, 1..12),
        shift in 1u8..5,
    ) {
        let relabel = |s: &[u8]| -> Vec<u8> { s.iter().map(|x| (x + shift) % 5 + 10).collect() };
        let opts = BleuOptions { max_n: 4, smoothing: Smoothing::Epsilon(0.1) };
        prop_assert_eq!(bleu(&c, &r, &opts).unwrap(), bleu(&relabel(&c), &relabel(&r), &opts).unwrap());
    }

    #[test]
    fn hit_rate_matches_position_oracle(
        cases in prop::collection::vec((prop::collection::vec(0u8..10, 1..10), 0u8..10), 1..20),
        k in 1usize..11,
    ) {
        let rankings: Vec<Vec<u8>> = cases.iter().map(|c| c.0.clone()).collect();
        let truths: Vec<u8> = cases.iter().map(|c| c.1).collect();
        let hits = cases.iter().filter(|(r, t)| r.iter().position(|x| x == t).is_some_and(|i| i < k)).count();
        let v = hit_rate_at_k(&rankings, &truths, k).unwrap();
        prop_assert!((v - hits as f64 / cases.len() as f64).abs() < 1e-9);
    }
}

#[test]
fn worked_values() {
    assert!((tvd(&[0.7, 0.3], &[0.5, 0.5]).unwrap() - 0.2).abs() < 1e-12);
    assert!((jsd(&[0.5, 0.5], &[1.0, 0.0], 2.0).unwrap() - 0.5579).abs() < 1e-4);
    assert_eq!(jsd(&[1.0, 0.0], &[0.0, 1.0], 2.0).unwrap(), 1.0);
    assert_eq!(tvd(&[0.25; 4], &[0.25; 4]).unwrap(), 0.0);
}
