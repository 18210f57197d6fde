mod common;

use common::*;
use kfgraph::models::{powerlaw_family, PowerLawParams};
use kfgraph::{
    edge_density, edge_kernel, integrability_report, irreducibility_check, symmetrize, to_hyperkernel, truncate,
    AtomShape, FamilyEntry, KernelFamily, KernelFunction, SmallGraph, TypeSpace,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn permutations(r: usize) -> Vec<Vec<usize>> {
    if r == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(r - 1) {
        for pos in 0..r {
            let mut q = p.clone();
            q.insert(pos, r - 1);
            out.push(q);
        }
    }
    out
}

fn brute_automorphisms(g: &SmallGraph) -> Vec<Vec<usize>> {
    permutations(g.n())
        .into_iter()
        .filter(|p| g.edges().iter().all(|&(a, b)| g.has_edge(p[a], p[b])))
        .collect()
}

fn tuples(k: usize, r: usize) -> Vec<Vec<usize>> {
    (0..k.pow(r as u32))
        .map(|mut i| {
            let mut t = vec![0; r];
            for slot in t.iter_mut().rev() {
                *slot = i % k;
                i /= k;
            }
            t
        })
        .collect()
}

fn eval_at(k: &KernelFunction, t: &[usize]) -> f64 {
    k.eval(&t.iter().map(|&v| v as f64).collect::<Vec<_>>())
}

fn shapes() -> Vec<AtomShape> {
    vec![
        AtomShape::clique(2),
        AtomShape::clique(3),
        AtomShape::new(SmallGraph::path(2)).unwrap(),
        AtomShape::new(SmallGraph::path(3)).unwrap(),
        AtomShape::new(SmallGraph::star(3)).unwrap(),
        AtomShape::new(SmallGraph::cycle(4)).unwrap(),
        AtomShape::clique(4),
    ]
}

/// A random family of 1-4 atoms with raw (unsymmetrized) block tables.
fn random_family(seed: u64, zeros: bool) -> KernelFamily {
    let mut g = rng(seed);
    let k = g.random_range(1..=3usize);
    let mut w: Vec<f64> = (0..k).map(|_| g.random_range(0.2..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    let all = shapes();
    let entries = (0..g.random_range(1..=4))
        .map(|_| {
            let shape = all[g.random_range(0..all.len())].clone();
            let vals = (0..k.pow(shape.r() as u32))
                .map(|_| if zeros && g.random_bool(0.4) { 0.0 } else { g.random_range(0.0..1.0) })
                .collect();
            FamilyEntry::new(shape, KernelFunction::block_table(k, vals))
        })
        .collect();
    KernelFamily::new(TypeSpace::finite(w).unwrap(), entries).unwrap()
}

#[test]
fn automorphism_counts_match_brute_force() {
    let mut g = rng(3);
    for _ in 0..200 {
        let n = g.random_range(1..=7usize);
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if g.random_bool(0.5) {
                    edges.push((a, b));
                }
            }
        }
        let sg = SmallGraph::new(n, &edges).unwrap();
        let Ok(shape) = AtomShape::new(sg.clone()) else {
            assert!(!sg.is_connected());
            continue;
        };
        assert_eq!(shape.aut_count(), brute_automorphisms(&sg).len() as f64, "{edges:?}");
    }
}

#[test]
fn canonical_form_is_relabel_invariant() {
    let mut g = rng(4);
    for _ in 0..200 {
        let n = g.random_range(2..=7usize);
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if g.random_bool(0.4) {
                    edges.push((a, b));
                }
            }
        }
        let sg = SmallGraph::new(n, &edges).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut g);
        assert_eq!(sg.canonical().0, sg.relabel(&perm).canonical().0);
    }
}

#[test]
fn disconnected_atoms_are_rejected() {
    assert!(AtomShape::new(SmallGraph::new(4, &[(0, 1), (2, 3)]).unwrap()).is_err());
}

#[test]
fn symmetrize_matches_orbit_average() {
    for seed in 0..30 {
        let fam = random_family(seed, false);
        let k = fam.space().num_types().unwrap();
        let sym = symmetrize(&fam);
        for (e, s) in fam.entries().iter().zip(sym.entries()) {
            let auts = brute_automorphisms(e.shape.graph());
            for t in tuples(k, e.shape.r()) {
                let avg = auts
                    .iter()
                    .map(|p| eval_at(&e.kernel, &p.iter().map(|&i| t[i]).collect::<Vec<_>>()))
                    .sum::<f64>()
                    / auts.len() as f64;
                assert!((eval_at(&s.kernel, &t) - avg).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn powerlaw_truncation_pointwise() {
    let p = PowerLawParams::new(1.0, 1.0, 3.0).unwrap();
    let fam = powerlaw_family(&p, 12).unwrap();
    let nodes = fam.grid().nodes;
    let levels = [1.0, 2.0, 3.0, 10.0, 100.0, 1e4];
    let value = |f: &KernelFamily, r: usize, t: &[usize]| -> f64 {
        let xs: Vec<f64> = t.iter().map(|&i| nodes[i]).collect();
        f.entries().iter().filter(|e| e.shape.r() == r).map(|e| e.kernel.eval(&xs)).sum()
    };
    let truncs: Vec<KernelFamily> = levels.iter().map(|&m| truncate(&fam, m).unwrap()).collect();
    for r in [2, 3] {
        for t in tuples(nodes.len(), r) {
            let full = value(&fam, r, &t);
            let mut last = 0.0;
            for (m, tf) in levels.iter().zip(&truncs) {
                let v = value(tf, r, &t);
                assert!(v <= full + 1e-12 && v <= *m + 1e-12);
                assert!(v >= last - 1e-12, "r={r} {t:?} M={m}");
                if (r as f64) <= *m {
                    assert!((v - full.min(*m)).abs() < 1e-12);
                }
                last = v;
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn edge_kernel_symmetric_nonnegative_consistent(seed in any::<u64>()) {
        let fam = symmetrize(&random_family(seed, true));
        let ek = edge_kernel(&fam).unwrap();
        let grid = fam.grid();
        let m = grid.len();
        let mut half = 0.0;
        for a in 0..m {
            for b in 0..m {
                prop_assert!(ek.at(a, b) >= 0.0);
                prop_assert!((ek.at(a, b) - ek.at(b, a)).abs() <= 1e-13 * ek.at(a, b).max(1.0));
                half += 0.5 * grid.weights[a] * grid.weights[b] * ek.at(a, b);
            }
        }
        let xi = integrability_report(&fam).unwrap().xi_e;
        prop_assert!((half - xi).abs() <= 1e-8 * xi.max(1e-300), "{} vs {}", half, xi);
        prop_assert!((ek.xi_e() - xi).abs() <= 1e-8 * xi.max(1e-300));
    }

    #[test]
    fn clique_replacement_never_lowers_edge_density(seed in any::<u64>()) {
        let fam = symmetrize(&random_family(seed, false));
        let before = edge_density(&fam).unwrap();
        let after = edge_density(to_hyperkernel(&fam).unwrap().family()).unwrap();
        prop_assert!(after >= before - 1e-12 * before);
        let cliques = fam.entries().iter().all(|e| e.shape.is_clique());
        if cliques {
            prop_assert!((after - before).abs() <= 1e-12 * before);
        } else {
            prop_assert!(after > before * (1.0 + 1e-12));
        }
    }

    #[test]
    fn symmetrize_is_idempotent(seed in any::<u64>()) {
        let once = symmetrize(&random_family(seed, true));
        let twice = symmetrize(&once);
        let k = once.space().num_types().unwrap();
        for (a, b) in once.entries().iter().zip(twice.entries()) {
            for t in tuples(k, a.shape.r()) {
                prop_assert!((eval_at(&a.kernel, &t) - eval_at(&b.kernel, &t)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn irreducibility_ignores_type_labels(seed in any::<u64>()) {
        let fam = random_family(seed, true);
        let k = fam.space().num_types().unwrap();
        let TypeSpace::Finite { weights } = fam.space() else { unreachable!() };
        let mut g = rng(seed ^ 0x5eed);
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(&mut g);
        let new_w: Vec<f64> = (0..k).map(|i| weights[perm[i]]).collect();
        let entries = fam
            .entries()
            .iter()
            .map(|e| {
                let vals = tuples(k, e.shape.r())
                    .iter()
                    .map(|t| eval_at(&e.kernel, &t.iter().map(|&i| perm[i]).collect::<Vec<_>>()))
                    .collect();
                FamilyEntry::new(e.shape.clone(), KernelFunction::block_table(k, vals))
            })
            .collect();
        let relabelled = KernelFamily::new(TypeSpace::finite(new_w).unwrap(), entries).unwrap();
        prop_assert_eq!(irreducibility_check(&fam).unwrap(), irreducibility_check(&relabelled).unwrap());
    }
}
