mod common;

use common::{lattice_for, random_field, random_geometry, simulate, ALL_PERIODIC};
use proptest::prelude::*;
use slbm::{
    comm_stats, loop_balance, make_partition, order_hilbert, order_lexicographic,
    renumber_within_chunks, run_partitioned, Periodicity, SparseLattice, TrtParams, Variant,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn variants_agree(seed in 0u64..10_000, nx in 4usize..10, ny in 4usize..10, nz in 4usize..10,
                      steps in 0usize..12, omega in 0.6f64..1.9) {
        let g = random_geometry(seed, [nx, ny, nz], 0.3);
        let l = lattice_for(&g, ALL_PERIODIC);
        let params = TrtParams::new(omega, 0.25, [1e-5, 0.0, -3e-6]).unwrap();
        let init = random_field(&l, seed);
        let reference = simulate(&l, Variant::OsNt, params, init.clone(), 2 * steps).macroscopic();
        for v in &Variant::ALL[1..] {
            let m = simulate(&l, *v, params, init.clone(), 2 * steps).macroscopic();
            prop_assert!(reference.max_relative_difference(&m) <= 1e-10);
        }
    }

    #[test]
    fn renumbering_preserves_ghosts(seed in 0u64..10_000, parts in 1usize..9) {
        let g = random_geometry(seed, [10, 9, 8], 0.3);
        let hil = order_hilbert(&g);
        prop_assume!(parts <= hil.len());
        let map = make_partition(&hil, parts).unwrap();
        let renum = renumber_within_chunks(&hil, &map.chunk_bounds).unwrap();
        let a = SparseLattice::build(&g, &hil, ALL_PERIODIC).unwrap();
        let b = SparseLattice::build(&g, &renum, ALL_PERIODIC).unwrap();
        let ca = comm_stats(&a, &map).unwrap();
        let cb = comm_stats(&b, &map).unwrap();
        prop_assert!(ca.is_symmetric() && cb.is_symmetric());
        prop_assert_eq!(ca.partitions, cb.partitions);
    }

    #[test]
    fn chunk_sizes_balanced(n in 1usize..500, parts in 1usize..64) {
        let g = random_geometry(n as u64, [8, 8, 8], 0.2);
        let o = order_lexicographic(&g, 1).unwrap();
        prop_assume!(parts <= o.len());
        let sizes = make_partition(&o, parts).unwrap().sizes();
        let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        prop_assert!(hi - lo <= 1);
        prop_assert_eq!(sizes.iter().sum::<usize>(), o.len());
    }

    #[test]
    fn loop_balance_within_bounds(r in 0.0f64..=1.0) {
        for v in Variant::ALL {
            let b = loop_balance(v, r).unwrap();
            prop_assert!(b.bounds[0] <= b.b_l && b.b_l <= b.bounds[1]);
        }
    }
}

#[test]
fn partitioned_channel_matches_single() {
    let g = slbm::make_channel(64, 16, 16).unwrap();
    let o = order_hilbert(&g);
    let params = TrtParams::new(1.1, 0.25, [1e-5, 0.0, 0.0]).unwrap();
    for v in [Variant::OsNt, Variant::OsNtR, Variant::AaR, Variant::AaRp] {
        let l = SparseLattice::build(&g, &o, Periodicity::default()).unwrap();
        let single = slbm::kernels::run_lattice(&l, v, params, 4, 20).unwrap();
        let reference = slbm::macroscopic(&single.field, &params);
        let part = run_partitioned(&g, &o, params, v, 4, 4, 20).unwrap();
        assert!(reference.max_relative_difference(&part.macroscopic) <= 1e-10);
    }
}
