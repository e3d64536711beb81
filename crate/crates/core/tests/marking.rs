use lcfem::adapt::{mark_bandwidth, mark_dorfler, mark_fixed};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Indicator vectors with frequent ties.
fn random_theta(rng: &mut StdRng) -> Vec<f64> {
    let m = rng.random_range(1..=12);
    if rng.random_bool(0.5) {
        (0..m).map(|_| rng.random_range(0..6) as f64).collect()
    } else {
        (0..m).map(|_| rng.random_range(0.0..10.0)).collect()
    }
}

fn fixed_oracle(theta: &[f64], nu: f64) -> Vec<usize> {
    let k = ((nu * theta.len() as f64).ceil() as usize).max(1);
    (0..theta.len())
        .filter(|&i| {
            let better = (0..theta.len())
                .filter(|&j| theta[j] > theta[i] || (theta[j] == theta[i] && j < i))
                .count();
            better < k
        })
        .collect()
}

fn bandwidth_oracle(theta: &[f64], nu: f64) -> Vec<usize> {
    let max = theta.iter().cloned().fold(f64::MIN, f64::max);
    (0..theta.len())
        .filter(|&i| theta[i] >= (1.0 - nu) * max)
        .collect()
}

fn sum_sq(theta: &[f64], set: &[usize]) -> f64 {
    set.iter().map(|&i| theta[i] * theta[i]).sum()
}

/// Smallest cardinality of any subset reaching the bulk goal, by enumeration.
fn dorfler_min_size(theta: &[f64], nu: f64) -> usize {
    let m = theta.len();
    let goal = (1.0 - nu) * sum_sq(theta, &(0..m).collect::<Vec<_>>());
    (1u32..(1 << m))
        .filter(|mask| {
            let set: Vec<usize> = (0..m).filter(|&i| mask & (1 << i) != 0).collect();
            sum_sq(theta, &set) >= goal
        })
        .map(|mask| mask.count_ones() as usize)
        .min()
        .unwrap()
}

#[test]
fn strategies_match_brute_force_on_random_vectors() {
    let mut rng = StdRng::seed_from_u64(7);
    for _ in 0..1000 {
        let theta = random_theta(&mut rng);
        if theta.iter().all(|&t| t == 0.0) {
            continue;
        }
        let nu = rng.random_range(0.01..0.99);
        assert_eq!(
            mark_fixed(&theta, nu).unwrap(),
            fixed_oracle(&theta, nu),
            "{theta:?} {nu}"
        );
        assert_eq!(
            mark_bandwidth(&theta, nu).unwrap(),
            bandwidth_oracle(&theta, nu),
            "{theta:?} {nu}"
        );

        let d = mark_dorfler(&theta, nu).unwrap();
        let total = sum_sq(&theta, &(0..theta.len()).collect::<Vec<_>>());
        assert!(sum_sq(&theta, &d) >= (1.0 - nu) * total);
        assert_eq!(d.len(), dorfler_min_size(&theta, nu), "{theta:?} {nu}");
        let smallest = *d
            .iter()
            .min_by(|&&a, &&b| theta[a].total_cmp(&theta[b]).then(b.cmp(&a)))
            .unwrap();
        let dropped: Vec<usize> = d.iter().copied().filter(|&i| i != smallest).collect();
        assert!(sum_sq(&theta, &dropped) < (1.0 - nu) * total);
        // marked cells dominate unmarked ones
        for i in 0..theta.len() {
            if !d.contains(&i) {
                assert!(d
                    .iter()
                    .all(|&j| theta[j] > theta[i] || (theta[j] == theta[i] && j < i)));
            }
        }
    }
}

proptest! {
    #[test]
    fn bandwidth_is_scale_invariant(theta in prop::collection::vec(0.0f64..100.0, 1..40), nu in 0.01f64..0.99, s in 1e-3f64..1e3) {
        prop_assume!(theta.iter().any(|&t| t > 0.0));
        let scaled: Vec<f64> = theta.iter().map(|t| t * s).collect();
        let a = mark_bandwidth(&theta, nu).unwrap();
        let b = mark_bandwidth(&scaled, nu).unwrap();
        // scaling can move a value across the threshold only by rounding
        let max = theta.iter().cloned().fold(f64::MIN, f64::max);
        let near = theta.iter().any(|&t| ((t - (1.0 - nu) * max) / max).abs() < 1e-12);
        prop_assume!(!near);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn fixed_is_invariant_under_monotone_maps(theta in prop::collection::vec(-5.0f64..5.0, 1..40), nu in 0.01f64..0.99) {
        let mapped: Vec<f64> = theta.iter().map(|t| t.exp() + 3.0 * t).collect();
        prop_assert_eq!(mark_fixed(&theta, nu).unwrap(), mark_fixed(&mapped, nu).unwrap());
    }

    #[test]
    fn all_strategies_mark_something(theta in prop::collection::vec(0.0f64..10.0, 1..40), nu in 0.01f64..0.99) {
        prop_assume!(theta.iter().any(|&t| t > 0.0));
        let argmax = (0..theta.len()).fold(0, |b, i| if theta[i] > theta[b] { i } else { b });
        for marked in [mark_fixed(&theta, nu).unwrap(), mark_bandwidth(&theta, nu).unwrap(), mark_dorfler(&theta, nu).unwrap()] {
            prop_assert!(!marked.is_empty());
            prop_assert!(marked.contains(&argmax));
        }
    }
}
