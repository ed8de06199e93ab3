mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{count, random_monotone_set};
use scfem::estimation::grid_gram;
use scfem::index_set::IndexSet;
use scfem::nodes::{gauss_legendre, NodeFamily};
use scfem::sparse_grid::SparseGrid;

fn family(flag: bool) -> NodeFamily {
    if flag {
        NodeFamily::Leja
    } else {
        NodeFamily::ClenshawCurtis
    }
}

fn random_set(seed: u64, dim: usize, size: usize) -> IndexSet {
    random_monotone_set(&mut ChaCha8Rng::seed_from_u64(seed), dim, size)
}

fn point(dim: usize, raw: &[f64]) -> Vec<f64> {
    raw[..dim].to_vec()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn basis_is_partition_of_unity(
        seed in any::<u64>(), dim in 1usize..=3, size in 1usize..=12, leja in any::<bool>(),
        y in proptest::collection::vec(-1.0f64..=1.0, 3),
    ) {
        let grid = SparseGrid::new(&random_set(seed, dim, size), family(leja));
        let s: f64 = grid.expansion().basis_at(&point(dim, &y)).iter().sum();
        prop_assert!((s - 1.0).abs() < 1e-11, "sum {}", s);
    }

    #[test]
    fn basis_is_cardinal(seed in any::<u64>(), dim in 1usize..=3, size in 1usize..=12, leja in any::<bool>()) {
        let grid = SparseGrid::new(&random_set(seed, dim, size), family(leja));
        let e = grid.expansion();
        for p in 0..grid.len() {
            let l = e.basis_at(&grid.coords(p));
            for (q, v) in l.iter().enumerate() {
                let want = if p == q { 1.0 } else { 0.0 };
                prop_assert!((v - want).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn reproduces_monomials_of_the_index_set(
        seed in any::<u64>(), dim in 1usize..=3, size in 1usize..=12, leja in any::<bool>(),
        y in proptest::collection::vec(-1.0f64..=1.0, 3), pick in any::<usize>(),
    ) {
        let set = random_set(seed, dim, size);
        let fam = family(leja);
        let nu = set.iter().nth(pick % set.len()).unwrap().clone();
        let mono = |z: &[f64]| (0..dim).map(|m| z[m].powi(nu[m] as i32 - 1)).product::<f64>();
        let grid = SparseGrid::new(&set, fam);
        let values: Vec<f64> = grid.all_coords().iter().map(|z| mono(z)).collect();
        let y = point(dim, &y);
        let got = grid.expansion().evaluate(&values, &y);
        prop_assert!((got - mono(&y)).abs() < 1e-10, "{} vs {}", got, mono(&y));
    }

    #[test]
    fn gram_matches_tensor_quadrature(seed in any::<u64>(), dim in 1usize..=2, size in 1usize..=6, leja in any::<bool>()) {
        let set = random_set(seed, dim, size);
        let fam = family(leja);
        let grid = SparseGrid::new(&set, fam);
        let n = grid.len();
        let lambda = grid_gram(&grid).unwrap();
        let e = grid.expansion();
        let rules: Vec<(Vec<f64>, Vec<f64>)> =
            (0..dim).map(|m| gauss_legendre(count(fam, set.max_level(m)) + 1)).collect();
        let mut oracle = vec![0.0; n * n];
        let mut idx = vec![0usize; dim];
        'quad: loop {
            let y: Vec<f64> = (0..dim).map(|m| rules[m].0[idx[m]]).collect();
            let w: f64 = (0..dim).map(|m| rules[m].1[idx[m]]).product();
            let l = e.basis_at(&y);
            for i in 0..n {
                for j in 0..n {
                    oracle[i * n + j] += w * l[i] * l[j];
                }
            }
            for m in 0..dim {
                idx[m] += 1;
                if idx[m] < rules[m].0.len() {
                    continue 'quad;
                }
                idx[m] = 0;
            }
            break;
        }
        for (a, b) in lambda.iter().zip(&oracle) {
            prop_assert!((a - b).abs() < 1e-11, "{} vs {}", a, b);
        }
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(lambda[i * n + j], lambda[j * n + i]);
            }
        }
    }
}

#[test]
fn grid_sizes_of_isotropic_sets() {
    // levels {ν : |ν|₁ ≤ 3} in two dimensions
    let set = IndexSet::from_raw(&[&[1, 1], &[2, 1], &[1, 2], &[3, 1], &[2, 2], &[1, 3]]).unwrap();
    assert_eq!(SparseGrid::new(&set, NodeFamily::Leja).len(), 6);
    assert_eq!(SparseGrid::new(&set, NodeFamily::ClenshawCurtis).len(), 13);
}
