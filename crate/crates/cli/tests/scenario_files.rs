use std::path::Path;

use banditq::scenario::{load_bundled, PolicyEntry, ProcessEntry, Scenario};
use banditq::{load_scenario, write_scenario};
use proptest::prelude::*;

#[test]
fn noiseless_fixture() {
    let s = load_bundled("appendix-a-noiseless").unwrap();
    assert_eq!(s.environment.queues, 5);
    assert_eq!(s.environment.arrivals, ProcessEntry::Bernoulli { rates: vec![0.25, 0.2, 0.15, 0.1, 0.05] });
    assert_eq!(s.environment.services, ProcessEntry::Bernoulli { rates: vec![0.9, 0.85, 0.8, 0.59, 0.39] });
    assert_eq!(s.policies.len(), 8);
    assert_eq!((s.horizon, s.reps), (2_000_000, 20));
}

#[test]
fn ar1_fixture() {
    let s = load_bundled("appendix-a-ar1").unwrap();
    assert_eq!(s.environment.arrivals, ProcessEntry::Bernoulli { rates: vec![0.25, 0.2, 0.15, 0.1, 0.05] });
    assert_eq!(
        s.environment.services,
        ProcessEntry::Ar1Bernoulli { rates: vec![0.9, 0.85, 0.8, 0.59, 0.39], phi: 0.999, sd: 0.005 }
    );
    assert_eq!(s.policies.len(), 9);
    let labels: Vec<String> = s.descriptors().unwrap().into_iter().map(|d| d.label).collect();
    assert!(labels.contains(&"MaxWeightGT".to_string()));
    assert!(labels.contains(&"SSMW-0".to_string()));
}

#[test]
fn bundled_files_match_disk() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    for name in ["appendix-a-noiseless", "appendix-a-ar1"] {
        let from_disk = load_scenario(&dir.join(format!("{name}.toml"))).unwrap();
        assert_eq!(from_disk, load_bundled(name).unwrap());
    }
}

fn fixture_text() -> String {
    banditq::scenario::bundled("appendix-a-noiseless").unwrap().to_string()
}

#[test]
fn missing_queue_count_is_rejected() {
    let text = fixture_text().replace("K = 5\n", "");
    let err = Scenario::from_toml(&text, Path::new("x.toml")).unwrap_err().to_string();
    assert!(err.contains("K"), "{err}");
}

#[test]
fn unknown_keys_are_rejected() {
    let text = fixture_text().replace("reps = 20\n", "reps = 20\nrepz = 3\n");
    let err = Scenario::from_toml(&text, Path::new("x.toml")).unwrap_err().to_string();
    assert!(err.contains("repz"), "{err}");
    assert!(err.contains("line"), "parse errors carry a location: {err}");
}

#[test]
fn validation_names_the_field() {
    let cases = [
        ("reps = 20\n", "reps = 0\n", "reps"),
        ("horizon = 2000000\n", "horizon = 0\n", "horizon"),
        ("name = \"maxweight\"\n", "name = \"maxweightt\"\n", "policies.name"),
    ];
    for (from, to, field) in cases {
        let text = fixture_text().replacen(from, to, 1);
        let err = Scenario::from_toml(&text, Path::new("x.toml")).unwrap_err().to_string();
        assert!(err.contains(field), "{err}");
    }
    let mut s = load_bundled("appendix-a-noiseless").unwrap();
    s.policies.clear();
    assert!(s.validate().unwrap_err().to_string().contains("policies"));
    let mut s = load_bundled("appendix-a-noiseless").unwrap();
    s.policies[1].label = Some("MaxWeight".into());
    assert!(s.validate().is_err());
}

#[test]
fn write_then_load() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.toml");
    let s = load_bundled("appendix-a-ar1").unwrap();
    write_scenario(&path, &s).unwrap();
    assert_eq!(load_scenario(&path).unwrap(), s);
}

fn process() -> impl Strategy<Value = ProcessEntry> {
    let rates = prop::collection::vec(0.0f64..=1.0, 3);
    prop_oneof![
        rates.clone().prop_map(|rates| ProcessEntry::Bernoulli { rates }),
        (rates.clone(), -1.0f64..1.0, 0.0f64..0.1).prop_map(|(rates, phi, sd)| ProcessEntry::Ar1Bernoulli { rates, phi, sd }),
        prop::collection::vec(prop::collection::vec(0.0f64..=1.0, 3), 1..4).prop_map(|rows| ProcessEntry::Trace { rows }),
    ]
}

fn policy() -> impl Strategy<Value = PolicyEntry> {
    (
        prop::sample::select(vec!["maxweight", "maxweight-gt", "lp-randomized", "softmw", "ssmw", "ssmw-plus"]),
        prop::option::of(0.5f64..4.0),
        0.0f64..0.5,
    )
        .prop_map(|(name, bound, delta)| PolicyEntry { name: name.into(), label: None, bound, delta, alpha: None })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn round_trip(
        horizon in 1usize..1_000_000,
        reps in 1usize..50,
        seed in 0..=i64::MAX as u64,
        noise_seed in 0..=i64::MAX as u64,
        stride in 1usize..100,
        crn in any::<bool>(),
        arrivals in process(),
        services in process(),
        policies in prop::collection::vec(policy(), 1..4),
    ) {
        let policies: Vec<PolicyEntry> = policies
            .into_iter()
            .enumerate()
            .map(|(i, p)| PolicyEntry { label: Some(format!("P{i}")), ..p })
            .collect();
        let s = Scenario {
            name: "random".into(),
            horizon,
            reps,
            base_seed: seed,
            output_dir: "out".into(),
            stride,
            common_random_numbers: crn,
            save_records: false,
            noise_file: None,
            environment: banditq::scenario::EnvironmentEntry { queues: 3, bound: 1.0, noise_seed, arrivals, services },
            policies,
        };
        prop_assume!(s.validate().is_ok());
        let back = Scenario::from_toml(&s.to_toml().unwrap(), Path::new("mem")).unwrap();
        prop_assert_eq!(back, s);
    }
}
