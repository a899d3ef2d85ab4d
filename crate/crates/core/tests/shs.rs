use proptest::prelude::*;

use shs_core::numerics::Matrix;
use shs_core::rng::{replica_seed, splitmix64};
use shs_core::shs::{sample_skeleton, scenarios_from_channels, ScenarioSet, SensorChannel};

fn channel(name: &str, idx: usize, rho: f64) -> SensorChannel {
    let mut row = vec![0.0; 4];
    row[idx] = 1.0;
    SensorChannel { name: name.into(), row, delivery_ratio: rho, noise_std: 0.01 }
}

#[test]
fn two_channel_probabilities() {
    let set = scenarios_from_channels(&[channel("d1", 0, 0.99), channel("d2", 2, 0.995)]).unwrap();
    let p = set.probabilities();
    let want = [0.99 * 0.995, 0.99 * 0.005, 0.01 * 0.995, 0.01 * 0.005];
    for (a, b) in p.iter().zip(want) {
        assert!((a - b).abs() < 1e-16);
    }
    assert!((p[0] - 0.98505).abs() < 1e-15 && (p[1] - 0.00495).abs() < 1e-15 && (p[3] - 0.00005).abs() < 1e-15);
    assert_eq!(set.scenarios[1].up, vec!["d1".to_string()]);
    assert_eq!(set.scenarios[2].up, vec!["d2".to_string()]);
    assert_eq!(set.scenarios[3].outputs(), 0);
    assert_eq!(set.max_outputs(), 2);
}

proptest! {
    #[test]
    fn probabilities_form_a_distribution(rhos in prop::collection::vec(0.01f64..=1.0, 1..=4)) {
        let chans: Vec<_> = rhos.iter().enumerate().map(|(k, &r)| channel(&k.to_string(), k % 4, r)).collect();
        let set = scenarios_from_channels(&chans).unwrap();
        let total: f64 = set.probabilities().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(set.scenarios[0].outputs() == chans.len());
        for (k, s) in set.scenarios.iter().enumerate() {
            prop_assert_eq!(s.index, k + 1);
            prop_assert!(s.probability > 0.0);
        }
    }

    #[test]
    fn skeleton_is_reproducible(seed in any::<u64>()) {
        let set = scenarios_from_channels(&[channel("a", 0, 0.7), channel("b", 2, 0.6)]).unwrap();
        prop_assert_eq!(sample_skeleton(&set, 50, seed), sample_skeleton(&set, 50, seed));
    }
}

#[test]
fn skeleton_frequencies_match_probabilities() {
    let set = scenarios_from_channels(&[channel("a", 0, 0.7), channel("b", 2, 0.6)]).unwrap();
    let draws = 100_000;
    let path = sample_skeleton(&set, draws, 3);
    for (i, p) in set.probabilities().iter().enumerate() {
        let f = path.iter().filter(|&&x| x == i).count() as f64 / draws as f64;
        assert!((f - p).abs() < 5.0 * (p * (1.0 - p) / draws as f64).sqrt(), "scenario {i}: {f} vs {p}");
    }
}

#[test]
fn seeds_are_decorrelated() {
    assert_eq!(splitmix64(0), 0xe220a8397b1dcdaf);
    let seeds: std::collections::BTreeSet<u64> = (0..1000).map(|r| replica_seed(42, r)).collect();
    assert_eq!(seeds.len(), 1000);
    assert_ne!(replica_seed(1, 0), replica_seed(2, 0));
}

#[test]
fn channel_validation() {
    assert!(scenarios_from_channels(&[]).is_err());
    assert!(scenarios_from_channels(&[channel("a", 0, 0.0)]).is_err());
    assert!(scenarios_from_channels(&[channel("a", 0, 1.2)]).is_err());
    let mut c = channel("a", 0, 0.9);
    c.row = vec![0.0; 4];
    assert!(scenarios_from_channels(&[c]).is_err());
    assert!(ScenarioSet::from_parts(2, vec![(Matrix::identity(2, 2), Matrix::identity(2, 2), 0.5)]).is_err());
}

#[test]
fn sigma_override_broadcasts() {
    let mut set = scenarios_from_channels(&[channel("a", 0, 0.9), channel("b", 2, 0.9)]).unwrap();
    set.override_sigma(1, &[0.5]).unwrap();
    assert_eq!(set.scenarios[0].sigma, Matrix::identity(2, 2) * 0.5);
    assert!(set.override_sigma(9, &[0.1]).is_err());
    assert!(set.override_sigma(2, &[0.1, 0.2, 0.3]).is_err());
}
