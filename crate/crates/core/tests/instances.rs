use brokerage_core::distributions::Sign;
use brokerage_core::instances::{
    make_lattice_instance_full, make_lattice_instance_limited, make_smooth_instance, InstanceFile, InstanceSpec,
    PairFamily, SignSource,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn flat_smooth_instance_has_constant_market_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let inst = make_smooth_instance(2000, 2, &mut rng, 0.0, PairFamily::default()).unwrap();
    assert!(inst.market_values().iter().all(|&m| m == 0.5));
    assert!(inst.validate().is_empty());
}

#[test]
fn given_signs_fix_the_market_values() {
    let signs = vec![Sign::Plus, Sign::Minus, Sign::Minus, Sign::Plus];
    let inst = make_lattice_instance_full(4 * 4 * 4, 1, SignSource::Given(signs.clone())).unwrap();
    let layout = inst.lattice().unwrap();
    assert_eq!((layout.side, layout.repeats), (4, 16));
    for t in 1..=inst.effective_horizon() {
        let block = ((t - 1) / layout.repeats) as usize;
        assert_eq!(inst.context(t), &[block as f64 / 4.0]);
        let above = inst.market_value(t) > 0.5;
        assert_eq!(above, signs[block] == Sign::Plus);
    }
    assert!(make_lattice_instance_full(64, 1, SignSource::Given(vec![Sign::Plus])).is_err());
}

#[test]
fn horizons_below_one_block_per_axis_are_rejected() {
    assert!(make_lattice_instance_full(3, 1, SignSource::Given(vec![])).is_err());
    assert!(make_lattice_instance_limited(31, 1, SignSource::Given(vec![])).is_err());
}

#[test]
fn instance_files_rebuild_the_same_rounds() {
    for spec in [
        InstanceSpec::LatticeFull { signs: None },
        InstanceSpec::LatticeLimited { signs: None },
        InstanceSpec::Smooth { roughness: 0.7, family: PairFamily::default() },
    ] {
        let inst = spec.build(3000, 2, 17).unwrap();
        let file = InstanceFile::describe(&spec, &inst, 17, true);
        let json = serde_json::to_string(&file).unwrap();
        let back: InstanceFile = serde_json::from_str(&json).unwrap();
        let rebuilt = back.instantiate().unwrap();
        assert_eq!(rebuilt.contexts(), inst.contexts());
        assert_eq!(rebuilt.market_values(), inst.market_values());
        assert_eq!(rebuilt.pair_of_round(), inst.pair_of_round());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lattice_instances_validate(horizon in 64u64..30_000, dim in 1usize..=3, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let full = make_lattice_instance_full(horizon, dim, SignSource::Random(&mut rng)).unwrap();
        prop_assert!(full.validate().is_empty(), "{:?}", full.validate());
        prop_assert!(full.effective_horizon() <= horizon);
        let layout = full.lattice().unwrap();
        prop_assert_eq!(layout.blocks() * layout.repeats, full.effective_horizon());
        prop_assert!((layout.epsilon - (layout.repeats as f64).powf(-0.5)).abs() < 1e-15);
        if horizon >= 1 << (dim + 4) {
            let limited = make_lattice_instance_limited(horizon, dim, SignSource::Random(&mut rng)).unwrap();
            prop_assert!(limited.validate().is_empty(), "{:?}", limited.validate());
            let layout = limited.lattice().unwrap();
            prop_assert!((layout.epsilon - (layout.repeats as f64).powf(-0.25)).abs() < 1e-15);
        }
    }

    #[test]
    fn smooth_instances_validate(
        horizon in 1u64..5000,
        dim in 1usize..=3,
        seed in any::<u64>(),
        roughness in 0.0f64..=1.0,
        split in any::<bool>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let family = if split {
            PairFamily::SplitWindow { half_width: 0.15, block: 0.05 }
        } else {
            PairFamily::default()
        };
        let inst = make_smooth_instance(horizon, dim, &mut rng, roughness, family).unwrap();
        prop_assert_eq!(inst.effective_horizon(), horizon);
        prop_assert!(inst.validate().is_empty(), "{:?}", inst.validate());
        prop_assert!(inst.market_values().iter().all(|m| (0.2..=0.8).contains(m)));
    }
}
