use num_traits::{Signed, Zero};
use pgcomplex::census::rank;
use pgcomplex::coords::{
    canonical_weighted, flip_to_qcd, flip_to_qcd_with, product_bound_check, ptolemy_flip, random_lambda, random_qe_cycle,
    random_quasi_triangulation, telescoping_sum,
};
use pgcomplex::orient::orientation_from_pairing;
use pgcomplex::pairing::project_pi;
use pgcomplex::screens::{random_filtered_screen, random_point};
use pgcomplex::strata::{all_nests, canonical_nest, enumerate_stratum_graphs, validate_nest};
use pgcomplex::{Fatgraph, Q};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

fn instance(seed: u64) -> (ChaCha8Rng, Fatgraph, Vec<Q>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 2 * rng.gen_range(1..=3);
    let m = rng.gen_range(0..=2);
    let g = random_quasi_triangulation(&mut rng, n + (m % 2), m).unwrap();
    let l = random_lambda(&mut rng, &g);
    (rng, g, l)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn canonical_form_ignores_labels(seed in any::<u64>()) {
        let (mut rng, g, _) = instance(seed);
        let mut perm: Vec<usize> = (0..g.n_half()).collect();
        perm.shuffle(&mut rng);
        let h = g.relabel(&perm);
        let (a, b) = (g.canonical_form().unwrap(), h.canonical_form().unwrap());
        prop_assert_eq!(a.code, b.code);
        prop_assert_eq!(a.aut, b.aut);
    }

    #[test]
    fn flips_are_involutions(seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let (_, g, l) = instance(seed);
        let e = pick.index(g.n_edges());
        if let Ok((g2, l2)) = ptolemy_flip(&g, &l, e) {
            let (g3, l3) = ptolemy_flip(&g2, &l2, e).unwrap();
            prop_assert_eq!(l3, l);
            prop_assert!(g3.same_structure(&g.reverse_edge(e)));
        }
    }

    #[test]
    fn telescoping_and_product_bound(seed in any::<u64>()) {
        let (mut rng, g, l) = instance(seed);
        let c = random_qe_cycle(&mut rng, &g);
        let (a, b) = telescoping_sum(&g, &l, &c).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!(product_bound_check(&g, &l).unwrap());
    }

    #[test]
    fn flip_order_does_not_matter(seed in any::<u64>(), order in any::<u64>()) {
        let (_, g, l) = instance(seed);
        let r = flip_to_qcd(&g, &l).unwrap();
        prop_assert!(r.x.iter().all(|x| x.is_positive()));
        let mut orng = ChaCha8Rng::seed_from_u64(order);
        let s = flip_to_qcd_with(&g, &l, |c| c[orng.gen_range(0..c.len())]).unwrap();
        let w = |q: &Fatgraph, x: &[Q]| canonical_weighted(q, x, &vec![0; q.n_half()]).unwrap();
        prop_assert_eq!(w(&r.qcd, &r.x), w(&s.qcd, &s.x));
    }

    #[test]
    fn projections_are_realizable(seed in any::<u64>()) {
        let (mut rng, g, _) = instance(seed);
        let g = g.punctured_vertices().is_empty().then_some(g);
        prop_assume!(g.is_some());
        let g = g.unwrap();
        let f = random_filtered_screen(&mut rng, &g, 4);
        let pt = random_point(&mut rng, &f);
        let p = project_pi(&pt).unwrap();
        prop_assert!(p.pg_membership());
        prop_assert!(p.supported_by(g.surface_type().unwrap()));
        let (o, _) = orientation_from_pairing(&p).unwrap();
        prop_assert!(o.is_realizable());
        let total: Q = p.weights.iter().flatten().fold(Q::zero(), |a, b| a + b);
        prop_assert_eq!(total, Q::from_integer(p.components.len().into()));
    }

    #[test]
    fn canonical_nest_is_least(idx in any::<prop::sample::Index>()) {
        let gs = enumerate_stratum_graphs(4);
        let g = &gs[idx.index(gs.len())];
        let fs = canonical_nest(g);
        prop_assert!(validate_nest(g, &fs.f).is_ok());
        for f in all_nests(g, 3) {
            prop_assert!((0..f.f.len()).all(|x| fs.f[x] <= f.f[x]));
        }
    }

    #[test]
    fn rank_is_transpose_invariant(entries in prop::collection::vec((0usize..6, 0usize..5, -3i64..=3), 0..20)) {
        let m: BTreeMap<(usize, usize), i64> = entries.iter().map(|&(i, j, v)| ((i, j), v)).collect();
        let t: BTreeMap<(usize, usize), i64> = m.iter().map(|(&(i, j), &v)| ((j, i), v)).collect();
        let r = rank(6, 5, &m);
        prop_assert_eq!(r, rank(5, 6, &t));
        prop_assert!(r <= 5);
    }
}
