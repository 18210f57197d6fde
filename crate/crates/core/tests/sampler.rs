mod common;

use common::*;
use kfgraph::models::{powerlaw_family, PowerLawParams};
use kfgraph::sampler::{
    generate, generate_hypergraph, generate_with_types, hypergraph_of, one_edge_per_hyperedge, ordered_tuples,
    percolate_edges, sample_types, tau_matrix, SamplerConfig, SamplerVariant,
};
use kfgraph::{to_hyperkernel, AtomShape, Hyperkernel, KernelFamily, TypeSpace};
use proptest::prelude::*;

fn constants(cs: &[(usize, f64)]) -> KernelFamily {
    KernelFamily::constants(cs.iter().map(|&(r, c)| (AtomShape::clique(r), c)).collect()).unwrap()
}

#[test]
fn same_seed_same_graph() {
    let fam = constants(&[(2, 0.8), (3, 0.3)]);
    let a = generate(&fam, 5000, &SamplerConfig::with_seed(11)).unwrap();
    let b = generate(&fam, 5000, &SamplerConfig::with_seed(11)).unwrap();
    let c = generate(&fam, 5000, &SamplerConfig::with_seed(12)).unwrap();
    assert_eq!(a.multi_edges(), b.multi_edges());
    assert_eq!(a.types(), b.types());
    assert_ne!(a.multi_edges(), c.multi_edges());
}

#[test]
fn finite_types_are_binomial() {
    let space = TypeSpace::finite(vec![0.3, 0.7]).unwrap();
    let n = 20_000;
    let t = sample_types(n, &space, 4);
    let zeros = t.x.iter().filter(|&&x| x == 0.0).count() as f64;
    let sd = (n as f64 * 0.3 * 0.7).sqrt();
    assert!((zeros - 0.3 * n as f64).abs() <= 4.0 * sd);
    assert!(t.x.iter().all(|&x| x == 0.0 || x == 1.0));
}

#[test]
fn interval_types_are_uniform() {
    let n = 20_000;
    let mut x = sample_types(n, &TypeSpace::unit_interval(64, 1.0).unwrap(), 9).x;
    assert!(x.iter().all(|&v| v > 0.0 && v <= 1.0));
    x.sort_by(f64::total_cmp);
    let d = x
        .iter()
        .enumerate()
        .map(|(i, &v)| (v - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - v).abs()))
        .fold(0.0, f64::max);
    // 1.63 / sqrt(n) is the 1% Kolmogorov critical value
    assert!(d < 1.63 / (n as f64).sqrt(), "KS distance {d}");
}

#[test]
fn edge_density_and_atom_counts() {
    let n = 200_000;
    let g = generate(&constants(&[(2, 0.5), (3, 1.0 / 3.0)]), n, &SamplerConfig::with_seed(3)).unwrap();
    let en = g.multi_edges().len() as f64 / n as f64;
    assert!((en - 1.5).abs() < 0.02, "{en}");
    check_atom_count_chi_square(500, 0.5, 200).unwrap();
    check_vertex_total(100_000, 2).unwrap();
}

#[test]
fn thinning_matches_per_tuple_sampler() {
    check_thinning_tv(40_000).unwrap();
}

#[test]
fn bernoulli_oracle_on_tiny_graphs() {
    let fam = constants(&[(2, 0.3)]);
    let cfg = |s| SamplerConfig {
        variant: SamplerVariant::PerTupleBernoulli,
        ..SamplerConfig::with_seed(s)
    };
    let trials = 20_000;
    let mut total = 0.0;
    for s in 0..trials {
        let g = generate_with_types(&fam, vec![0.0; 4], &cfg(s)).unwrap();
        assert!(g.multi_edges().len() <= 12);
        total += g.multi_edges().len() as f64;
    }
    // 12 ordered pairs, each present with probability 0.3 / 4
    let mean = total / trials as f64;
    assert!((mean - 0.9).abs() < 0.03, "{mean}");
    assert!(generate(&fam, 11, &cfg(0)).is_err());
}

#[test]
fn ordered_tuple_enumeration() {
    assert_eq!(ordered_tuples(4, 2).len(), 12);
    assert_eq!(ordered_tuples(5, 3).len(), 60);
    let t = ordered_tuples(4, 3);
    assert!(t.iter().all(|v| v[0] != v[1] && v[1] != v[2] && v[0] != v[2]));
}

#[test]
fn clique_and_star_views() {
    let hk = Hyperkernel::constants(&[(2, 0.5), (3, 0.4)]).unwrap();
    let h = generate_hypergraph(&hk, 3000, &SamplerConfig::with_seed(5)).unwrap();
    let cl = h.clique_edges();
    let st = h.star_edges();
    assert!(st.iter().all(|e| cl.binary_search(e).is_ok()));
    let sizes = |edges: &[(u32, u32)]| {
        let mut s = bfs_component_sizes(h.n, edges);
        s.sort_unstable();
        s
    };
    assert_eq!(sizes(&cl), sizes(&st));
    let g = generate(&constants(&[(2, 0.7)]), 2000, &SamplerConfig::with_seed(5)).unwrap();
    let h2 = hypergraph_of(&g);
    assert_eq!(h2.clique_edges(), h2.star_edges());
    assert_eq!(h2.clique_edges(), g.simple_edges());
}

#[test]
fn one_edge_per_hyperedge_is_uniform() {
    let g = generate_with_types(&constants(&[(3, 0.05)]), vec![0.0; 3], &SamplerConfig::with_seed(0)).unwrap();
    let mut h = hypergraph_of(&g);
    let mut seed = 1;
    while h.len() != 1 {
        h = hypergraph_of(&generate_with_types(&constants(&[(3, 0.05)]), vec![0.0; 3], &SamplerConfig::with_seed(seed)).unwrap());
        seed += 1;
    }
    let mut r = rng(8);
    let mut counts = [0u64; 3];
    let draws = 30_000;
    for _ in 0..draws {
        let e = one_edge_per_hyperedge(&h, &mut r);
        assert_eq!(e.len(), 1);
        counts[match e[0] {
            (0, 1) => 0,
            (0, 2) => 1,
            (1, 2) => 2,
            other => panic!("{other:?}"),
        }] += 1;
    }
    let exp = draws as f64 / 3.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - exp).powi(2) / exp).sum();
    // 2 degrees of freedom, 0.1% level
    assert!(chi2 < 13.8, "{counts:?}");
}

#[test]
fn tau_matrix_of_constants() {
    let c = 0.2;
    let n = 30;
    let hk = Hyperkernel::constants(&[(2, 0.5), (3, c)]).unwrap();
    let tm = tau_matrix(&hk, &vec![0.0; n]).unwrap();
    let nf = n as f64;
    // 2 * 0.5 from edges, 2 (n-2)/n * c from triangles through the pair
    let want = 1.0 + 2.0 * (nf - 2.0) / nf * c;
    for i in 0..n {
        assert_eq!(tm[i * n + i], 0.0);
        for j in 0..n {
            if i != j {
                assert!((tm[i * n + j] - want).abs() < 1e-12, "{} vs {want}", tm[i * n + j]);
                assert_eq!(tm[i * n + j], tm[j * n + i]);
            }
        }
    }
}

#[test]
fn tau_discrepancy_shrinks_with_n() {
    check_tau_discrepancy(&[200, 400, 800], 10).unwrap();
}

#[test]
fn powerlaw_edge_density() {
    let p = PowerLawParams::new(1.0, 0.5, 3.0).unwrap();
    let fam = powerlaw_family(&p, 512).unwrap();
    let want = kfgraph::edge_density(&fam).unwrap();
    let n = 200_000;
    let en = generate(&fam, n, &SamplerConfig::with_seed(21)).unwrap().multi_edges().len() as f64 / n as f64;
    assert!((en / want - 1.0).abs() < 0.05, "{en} vs {want}");
    assert!(to_hyperkernel(&fam).is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn edge_percolation_keeps_half(seed in any::<u64>()) {
        let g = generate(&constants(&[(2, 1.0), (3, 0.2)]), 20_000, &SamplerConfig::with_seed(seed)).unwrap();
        let m = g.simple_edges().len() as f64;
        let k = percolate_edges(&g, 0.5, seed ^ 1).unwrap().simple_edges().len() as f64;
        prop_assert!((k - m / 2.0).abs() <= 4.0 * (m / 4.0).sqrt(), "{} of {}", k, m);
        let all = percolate_edges(&g, 1.0, 0).unwrap();
        prop_assert_eq!(all.simple_edges(), g.simple_edges());
        prop_assert_eq!(percolate_edges(&g, 0.0, 0).unwrap().simple_edges().len(), 0);
    }

    #[test]
    fn simple_edges_are_sorted_and_unique(seed in any::<u64>(), n in 2usize..400) {
        let g = generate(&constants(&[(2, 2.0), (4, 0.05)]), n, &SamplerConfig::with_seed(seed)).unwrap();
        let e = g.simple_edges();
        prop_assert!(e.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(e.iter().all(|&(a, b)| a < b && (b as usize) < n));
        let deg: usize = g.degrees().iter().sum();
        prop_assert_eq!(deg, 2 * e.len());
    }
}
