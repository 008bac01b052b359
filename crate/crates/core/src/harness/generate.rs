//! Seeded random tensors.

use rand::Rng;

use crate::formats::SparseMatrix;

/// Random matrix with nonzero values: integers in ±9 or floats in ±1.
pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, density: f64, float: bool) -> SparseMatrix {
    let mut t = Vec::new();
    for r in 0..rows as u32 {
        for c in 0..cols as u32 {
            if rng.gen_bool(density) {
                t.push((r, c, value(rng, float)));
            }
        }
    }
    SparseMatrix::from_triples(rows, cols, t).expect("generated coordinates are unique")
}

fn value<R: Rng>(rng: &mut R, float: bool) -> u32 {
    if float {
        let mut x = 0.0f32;
        while x == 0.0 {
            x = rng.gen_range(-1.0..1.0);
        }
        x.to_bits()
    } else {
        let x = rng.gen_range(1..=9) * if rng.gen_bool(0.5) { -1 } else { 1 };
        x as u32
    }
}

/// Directed graph without self-loops. Entry `(d, s)` is edge `s -> d`
/// with an integer weight in `1..=max_weight`.
pub fn random_graph<R: Rng>(rng: &mut R, n: usize, density: f64, max_weight: u32) -> SparseMatrix {
    let mut t = Vec::new();
    for s in 0..n as u32 {
        for d in 0..n as u32 {
            if s != d && rng.gen_bool(density) {
                t.push((d, s, rng.gen_range(1..=max_weight)));
            }
        }
    }
    SparseMatrix::from_triples(n, n, t).expect("generated coordinates are unique")
}

/// Dense vector of nonzero values.
pub fn dense_vector<R: Rng>(rng: &mut R, n: usize, float: bool) -> Vec<u32> {
    (0..n).map(|_| value(rng, float)).collect()
}

/// Vector whose entries are nonzero with probability `density`.
pub fn sparse_vector<R: Rng>(rng: &mut R, n: usize, density: f64, float: bool) -> Vec<u32> {
    (0..n)
        .map(|_| if rng.gen_bool(density) { value(rng, float) } else { 0 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn graphs_have_no_self_loops() {
        let g = random_graph(&mut ChaCha8Rng::seed_from_u64(1), 40, 0.3, 5);
        assert!(g.to_triples().iter().all(|&(d, s, w)| d != s && (1..=5).contains(&w)));
    }

    #[test]
    fn same_seed_same_matrix() {
        let a = random_matrix(&mut ChaCha8Rng::seed_from_u64(9), 30, 20, 0.2, true);
        let b = random_matrix(&mut ChaCha8Rng::seed_from_u64(9), 30, 20, 0.2, true);
        assert_eq!(a, b);
        assert!(a.to_triples().iter().all(|t| t.2 != 0));
    }
}
