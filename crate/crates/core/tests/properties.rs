use num_rational::BigRational;
use proptest::prelude::*;

use esf_core::measure::{
    labeled_set_partition_pmf_exact, refined_esf_ln_pmf, refined_esf_pmf_exact, vandermonde_check, MutationParams,
};
use esf_core::partitions::{
    enumerate_labeled_set_partitions, matrix_to_multipartition, multipartition_to_matrix, set_partition_to_multipartition,
    union, LabeledBlock, LabeledSetPartition, MultiplePartition, YoungDiagram,
};
use esf_core::rng::seeded;
use esf_core::samplers::hoppe_urn_sample;

fn diagram() -> impl Strategy<Value = YoungDiagram> {
    prop::collection::vec(1usize..6, 0..5).prop_map(|rows| YoungDiagram::from_unsorted(rows).unwrap())
}

fn multipartition() -> impl Strategy<Value = MultiplePartition> {
    prop::collection::vec(diagram(), 1..4).prop_map(|c| MultiplePartition::new(c).unwrap())
}

fn rational() -> impl Strategy<Value = BigRational> {
    (1i64..20, 1i64..8).prop_map(|(a, b)| BigRational::new(a.into(), b.into()))
}

/// A labeled set partition of `0..n` from a random block assignment.
fn labeled_set_partition(k: usize) -> impl Strategy<Value = LabeledSetPartition> {
    prop::collection::vec((0usize..4, 0..k), 1..8).prop_map(move |assign| {
        let n = assign.len();
        let mut blocks: Vec<LabeledBlock> = Vec::new();
        let mut block_of = std::collections::BTreeMap::new();
        for (e, (b, class)) in assign.into_iter().enumerate() {
            let idx = *block_of.entry(b).or_insert_with(|| {
                blocks.push(LabeledBlock { class, elements: Vec::new() });
                blocks.len() - 1
            });
            blocks[idx].elements.push(e);
        }
        LabeledSetPartition::new(n, blocks).unwrap()
    })
}

proptest! {
    #[test]
    fn matrix_round_trip(p in multipartition()) {
        let m = multipartition_to_matrix(&p);
        prop_assert_eq!(matrix_to_multipartition(&m), p.clone());
        let total: usize = (1..=m.n()).map(|j| (0..m.k()).map(|l| j * m.get(j, l)).sum::<usize>()).sum();
        prop_assert_eq!(total, p.n());
    }

    #[test]
    fn display_parse_round_trip(p in multipartition()) {
        let back: MultiplePartition = p.to_string().parse().unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn union_keeps_size_and_ignores_order(p in multipartition()) {
        let u = union(&p);
        prop_assert_eq!(u.size(), p.n());
        prop_assert!(u.rows().windows(2).all(|w| w[0] >= w[1]));
        let mut comps = p.components().to_vec();
        comps.reverse();
        prop_assert_eq!(union(&MultiplePartition::new(comps).unwrap()), u);
    }

    #[test]
    fn vandermonde_for_random_parameters(ts in prop::collection::vec(rational(), 1..4), n in 0usize..9) {
        let theta = MutationParams::from_rationals(ts).unwrap();
        prop_assert!(vandermonde_check(n, &theta).unwrap());
    }

    #[test]
    fn set_partitions_project_to_valid_multipartitions(s in labeled_set_partition(3)) {
        let p = set_partition_to_multipartition(&s, 3).unwrap();
        prop_assert_eq!(p.n(), s.n());
        prop_assert_eq!(p.components().iter().map(|c| c.num_rows()).sum::<usize>(), s.blocks().len());
    }

    #[test]
    fn set_partition_law_is_exchangeable(s in labeled_set_partition(2), shift in 0usize..8) {
        let thetas = [BigRational::new(2.into(), 3.into()), BigRational::new(5.into(), 2.into())];
        let n = s.n();
        let sigma: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
        let moved = s.relabel(&sigma).unwrap();
        prop_assert_eq!(
            labeled_set_partition_pmf_exact(&s, &thetas).unwrap(),
            labeled_set_partition_pmf_exact(&moved, &thetas).unwrap()
        );
    }

    #[test]
    fn float_pmf_tracks_exact(p in multipartition(), ts in prop::collection::vec(rational(), 3)) {
        let k = p.k();
        let exact = refined_esf_pmf_exact(&p, &ts[..k]).unwrap();
        let floats: Vec<f64> = ts[..k].iter().map(esf_core::measure::ratio_to_f64).collect();
        let ln = refined_esf_ln_pmf(&p, &floats).unwrap();
        let e = esf_core::measure::ratio_to_f64(&exact);
        prop_assert!((ln.exp() - e).abs() <= 1e-10 * e);
    }

    #[test]
    fn urn_output_is_consistent(n in 1usize..40, seed in any::<u64>()) {
        let theta = MutationParams::from_f64(vec![0.4, 1.1, 2.0]).unwrap();
        let (p, s) = hoppe_urn_sample(n, &theta, &mut seeded(seed));
        prop_assert_eq!(p.n(), n);
        prop_assert_eq!(set_partition_to_multipartition(&s, 3).unwrap(), p);
    }
}

#[test]
fn set_partition_law_sums_per_multipartition() {
    // the set-partition law pushed forward equals the refined law
    let thetas = [BigRational::new(1.into(), 2.into()), BigRational::new(3.into(), 1.into())];
    let mut law = std::collections::BTreeMap::<MultiplePartition, BigRational>::new();
    for s in enumerate_labeled_set_partitions(5, 2) {
        let p = set_partition_to_multipartition(&s, 2).unwrap();
        *law.entry(p).or_insert_with(|| BigRational::new(0.into(), 1.into())) +=
            labeled_set_partition_pmf_exact(&s, &thetas).unwrap();
    }
    for (p, v) in law {
        assert_eq!(v, refined_esf_pmf_exact(&p, &thetas).unwrap(), "{p}");
    }
}
