use std::collections::BTreeSet;

use patrol_core::decentral::{
    run_cloud_protocol, run_seq_protocol, CloudSchedule, CommGraph, ComputeModel, DropoutModel, SeqOptions, SeqRoute,
};
use patrol_core::policy::{count_policies, enumerate_policies, merge_times, DEFAULT_EXPANSION_CAP};
use patrol_core::props::{random_instance, sample_submodularity, InstanceSpec};
use patrol_core::{AgentId, GraphBuilder, RewardFunction, TIME_EPS};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn reward() -> impl Strategy<Value = RewardFunction> {
    prop_oneof![
        (0.01f64..5.0).prop_map(RewardFunction::exponential),
        (0.01f64..5.0).prop_map(RewardFunction::linear),
        (0.01f64..5.0, 0.05f64..1.0).prop_map(|(w, p)| RewardFunction::power(w, p)),
    ]
}

/// Connected graph given as a spanning tree plus extra edges, with edge times.
fn weighted_graph() -> impl Strategy<Value = (usize, Vec<(u32, u32, f64)>)> {
    (2usize..9).prop_flat_map(|n| {
        let tree = (1..n as u32).map(|i| (0..i).prop_map(move |p| (p, i))).collect::<Vec<_>>();
        let extra = prop::collection::vec((0..n as u32, 0..n as u32), 0..n);
        let times = prop::collection::vec(0.1f64..5.0, 3 * n);
        (Just(n), tree, extra, times).prop_map(|(n, tree, extra, times)| {
            let pairs: BTreeSet<(u32, u32)> = tree
                .into_iter()
                .chain(extra.into_iter().filter(|(a, b)| a != b).map(|(a, b)| (a.min(b), a.max(b))))
                .collect();
            (n, pairs.into_iter().zip(times.into_iter().cycle()).map(|((a, b), t)| (a, b, t)).collect())
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn travel_times_obey_triangle_inequality((n, edges) in weighted_graph()) {
        let a = AgentId(0);
        let mut b = GraphBuilder::new(n).edges(edges.iter().map(|&(u, v, _)| (u, v)));
        for &(u, v, t) in &edges {
            b = b.time(a, u, v, t);
        }
        let g = b.build().unwrap();
        for u in g.nodes() {
            for v in g.nodes() {
                let uv = g.shortest_travel_time(a, u, v).unwrap().unwrap();
                prop_assert!((uv - g.shortest_travel_time(a, v, u).unwrap().unwrap()).abs() < 1e-9);
                for w in g.nodes() {
                    let uw = g.shortest_travel_time(a, u, w).unwrap().unwrap();
                    let vw = g.shortest_travel_time(a, v, w).unwrap().unwrap();
                    prop_assert!(uw <= uv + vw + 1e-9);
                }
            }
        }
    }

    #[test]
    fn reset_rewards_start_at_zero_and_grow(f in reward(), a in 0.0f64..100.0, b in 0.0f64..100.0) {
        prop_assert_eq!(f.eval(0.0), 0.0);
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(f.eval(lo) >= 0.0);
        prop_assert!(f.eval(lo) <= f.eval(hi));
    }

    #[test]
    fn merging_visit_times_is_idempotent(raw in prop::collection::vec(0.0f64..10.0, 0..30), dups in 0usize..5) {
        let mut times = raw.clone();
        times.extend(raw.iter().take(dups).map(|t| t + TIME_EPS / 2.0));
        merge_times(&mut times);
        let once = times.clone();
        merge_times(&mut times);
        prop_assert_eq!(&once, &times);
        prop_assert!(once.windows(2).all(|w| w[1] - w[0] > TIME_EPS));
    }

    #[test]
    fn enumeration_is_canonical_and_counted(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = InstanceSpec { agents: (1, 1), steps: (1, 4), max_product: u128::MAX, ..Default::default() };
        let inst = random_instance(&mut rng, &spec).unwrap();
        let a = AgentId(0);
        let ps = enumerate_policies(&inst.world, a, inst.horizon, DEFAULT_EXPANSION_CAP).unwrap();
        prop_assert_eq!(ps.len() as u64, count_policies(&inst.world, a, inst.horizon, DEFAULT_EXPANSION_CAP).unwrap());
        prop_assert!(ps.windows(2).all(|w| w[0].canonical_cmp(&w[1]).is_lt()));
        for p in &ps {
            prop_assert!(p.validate(&inst.world).is_ok());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn augmented_utility_is_monotone_submodular(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = InstanceSpec { agents: (2, 4), steps: (1, 2), ..Default::default() };
        let inst = random_instance(&mut rng, &spec).unwrap();
        let rep = sample_submodularity(&inst, &mut rng, 50).unwrap();
        prop_assert_eq!(rep.monotonicity_violations, 0);
        prop_assert_eq!(rep.submodularity_violations, 0, "worst gap {}", rep.worst_gap);
    }

    #[test]
    fn more_dropped_hops_never_add_information(
        seed in any::<u64>(),
        base in prop::collection::btree_set(0usize..6, 0..4),
        more in prop::collection::btree_set(0usize..6, 0..3),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = InstanceSpec { agents: (4, 4), steps: (1, 2), ..Default::default() };
        let inst = random_instance(&mut rng, &spec).unwrap();
        let ids: Vec<AgentId> = (0..4).map(AgentId).collect();
        let comm = CommGraph::path(&ids).unwrap();
        // there and back again so that later hops can repair earlier losses
        let route = SeqRoute::new(&comm, [0, 1, 2, 3, 2, 1, 0].map(AgentId).to_vec()).unwrap();
        let run = |hops: BTreeSet<usize>| {
            let opts = SeqOptions { dropout: DropoutModel::Pattern { hops }, ..Default::default() };
            run_seq_protocol(&inst.world, &route, &inst.feasible, &inst.importance, &opts).unwrap()
        };
        let fewer = run(base.clone());
        let superset = run(base.union(&more).copied().collect());
        prop_assert!(superset.info.edges.is_subset(&fewer.info.edges));
        prop_assert!(superset.omega <= fewer.omega);
        prop_assert!(fewer.info.respects_order(&route.first_visit_order()));
    }

    #[test]
    fn longer_cloud_computations_never_add_information(
        seed in any::<u64>(),
        short in prop::collection::vec(0.0f64..3.0, 4),
        extra in prop::collection::vec(0.0f64..3.0, 4),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = InstanceSpec { agents: (4, 4), steps: (1, 2), ..Default::default() };
        let inst = random_instance(&mut rng, &spec).unwrap();
        let ids: Vec<AgentId> = (0..4).map(AgentId).collect();
        let run = |d: Vec<f64>| {
            let mut sched = CloudSchedule::back_to_back(&ids);
            sched.compute = ComputeModel::Fixed { durations: ids.iter().copied().zip(d).collect() };
            run_cloud_protocol(&inst.world, &sched, &inst.feasible, &inst.importance).unwrap()
        };
        let quick = run(short.clone());
        let slow = run(short.iter().zip(&extra).map(|(a, b)| a + b).collect());
        prop_assert!(slow.info.edges.is_subset(&quick.info.edges));
        prop_assert!(slow.omega <= quick.omega);
    }
}
