mod common;

use common::*;
use nnident::eval::CompiledNetwork;
use nnident::experiment::{random_clonesfree_network, WeightDistribution};
use nnident::{Builtin, Network, Nonlinearity};
use proptest::prelude::*;
use rand::Rng;

fn max_output_gap(a: &Network, b: &Network, rho: &Nonlinearity, pts: &[Vec<f64>]) -> f64 {
    let ca = CompiledNetwork::new(a).unwrap();
    let cb = CompiledNetwork::new(b).unwrap();
    pts.iter()
        .flat_map(|x| ca.eval(rho, x).into_iter().zip(cb.eval(rho, x)).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

fn merge_all(mut net: Network) -> Network {
    while let Some((keep, drop)) = net.find_clone_pairs().into_iter().next() {
        net = net.merge_clone_pair(&keep, &drop).unwrap();
    }
    net
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn levels_increase_along_edges(seed in any::<u64>()) {
        let net = random_dag(&mut rng(seed), 10);
        let lv = net.levels().unwrap();
        prop_assert_eq!(lv.len(), net.node_count());
        for (s, d) in net.edges().keys() {
            prop_assert!(lv[d] > lv[s]);
        }
    }

    #[test]
    fn ancestor_subnetwork_is_idempotent(seed in any::<u64>()) {
        let mut r = rng(seed);
        let net = random_dag(&mut r, 10);
        let ids: Vec<_> = net.node_ids().filter(|v| !net.is_input(v)).cloned().collect();
        let k = r.gen_range(1..=ids.len());
        let set = ids[..k].to_vec();
        let once = net.ancestor_subnetwork(&set).unwrap();
        let twice = once.ancestor_subnetwork(&set).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn clone_merge_preserves_outputs(seed in any::<u64>()) {
        let mut r = rng(seed);
        let net = random_dag(&mut r, 8);
        let Some((cloned, v, c)) = with_clone(&net, &mut r) else { return Ok(()) };
        prop_assert!(cloned.find_clone_pairs().contains(&(v.clone(), c.clone()))
            || cloned.find_clone_pairs().contains(&(c.clone(), v.clone())));
        let merged = cloned.merge_clone_pair(&v, &c).unwrap();
        let pts = uniform_points(&mut r, 100, net.inputs().len(), -3.0, 3.0);
        for b in Builtin::all_default() {
            let rho = Nonlinearity::Builtin(b);
            prop_assert!(max_output_gap(&cloned, &merged, &rho, &pts) <= 1e-12, "{b}");
        }
    }

    #[test]
    fn exhaustive_merging_leaves_no_clones(seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut net = random_dag(&mut r, 8);
        for _ in 0..3 {
            if let Some((n, _, _)) = with_clone(&net, &mut r) {
                net = n;
            }
        }
        let merged = merge_all(net.clone());
        prop_assert!(merged.find_clone_pairs().is_empty());
        let pts = uniform_points(&mut r, 100, net.inputs().len(), -3.0, 3.0);
        prop_assert!(max_output_gap(&net, &merged, &Nonlinearity::Builtin(Builtin::Tanh), &pts) <= 1e-12);
    }

    #[test]
    fn layered_round_trip_is_exact(seed in any::<u64>(), w1 in 1usize..4, w2 in 1usize..4) {
        let net = random_clonesfree_network(seed, &[2, w1, w2, 1], &WeightDistribution::default()).unwrap();
        let (form, labels) = net.to_layered().unwrap();
        let back = Network::from_layered(&form, &labels[0]).unwrap();
        let pts = uniform_points(&mut rng(seed ^ 1), 50, 2, -3.0, 3.0);
        prop_assert_eq!(max_output_gap(&net, &back, &Nonlinearity::Builtin(Builtin::Tanh), &pts), 0.0);
    }
}
