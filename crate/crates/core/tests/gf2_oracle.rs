//! Bit-packed GF(2) arithmetic against plain `Vec<Vec<u8>>` loops.

use mawc::gf2::{BitMatrix, BitVector};
use mawc::rng::stream;
use rand::Rng;

type Dense = Vec<Vec<u8>>;

fn dense(m: &BitMatrix) -> Dense {
    (0..m.rows())
        .map(|i| (0..m.cols()).map(|j| m.get(i, j) as u8).collect())
        .collect()
}

fn dense_mul_vec(a: &Dense, x: &[u8]) -> Vec<u8> {
    a.iter()
        .map(|row| row.iter().zip(x).fold(0, |acc, (r, v)| acc ^ (r & v)))
        .collect()
}

fn dense_mul(a: &Dense, b: &Dense, inner: usize, cols: usize) -> Dense {
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| (0..inner).fold(0, |acc, t| acc ^ (row[t] & b[t][j])))
                .collect()
        })
        .collect()
}

fn dense_rank(mut m: Dense, cols: usize) -> usize {
    let mut rank = 0;
    for c in 0..cols {
        let Some(pivot) = (rank..m.len()).find(|&r| m[r][c] == 1) else {
            continue;
        };
        m.swap(rank, pivot);
        for r in 0..m.len() {
            if r != rank && m[r][c] == 1 {
                let pivot_row = m[rank].clone();
                for (x, p) in m[r].iter_mut().zip(pivot_row) {
                    *x ^= p;
                }
            }
        }
        rank += 1;
    }
    rank
}

#[test]
fn matches_scalar_oracle_on_random_instances() {
    let mut rng = stream(100, &[0]);
    for i in 0..1000 {
        let rows = rng.random_range(1..=64);
        let inner = rng.random_range(1..=64);
        let cols = rng.random_range(1..=64);
        let a = BitMatrix::random(rows, inner, &mut stream(100, &[1, i]));
        let b = BitMatrix::random(inner, cols, &mut stream(100, &[2, i]));
        let x = BitVector::random(inner, &mut stream(100, &[3, i]));
        let (da, db) = (dense(&a), dense(&b));

        assert_eq!(
            a.mul_vec(&x).unwrap().to_bits(),
            dense_mul_vec(&da, &x.to_bits()),
            "instance {i}"
        );
        assert_eq!(
            dense(&a.mul_mat(&b).unwrap()),
            dense_mul(&da, &db, inner, cols),
            "instance {i}"
        );
        assert_eq!(a.rank(), dense_rank(da.clone(), inner), "instance {i}");

        let t = a.transpose();
        assert_eq!(t.rank(), a.rank());
        for (r, row) in da.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                assert_eq!(t.get(c, r) as u8, v);
            }
        }

        let kernel = a.kernel_basis();
        assert_eq!(kernel.len(), inner - a.rank(), "instance {i}");
        for v in &kernel {
            assert!(a.mul_vec(v).unwrap().is_zero());
        }
        assert_eq!(
            dense_rank(kernel.iter().map(|v| v.to_bits()).collect(), inner),
            kernel.len()
        );

        let y = BitVector::random(inner, &mut stream(100, &[4, i]));
        let expect: u8 = x
            .to_bits()
            .iter()
            .zip(y.to_bits())
            .fold(0, |acc, (p, q)| acc ^ (p & q));
        assert_eq!(x.dot(&y).unwrap() as u8, expect);
        let dist = x
            .to_bits()
            .iter()
            .zip(y.to_bits())
            .filter(|(p, q)| *p != q)
            .count();
        assert_eq!(x.hamming_distance(&y).unwrap(), dist);
    }
}

#[test]
fn column_space_membership_matches_rank_test() {
    let mut rng = stream(101, &[0]);
    for i in 0..300 {
        let rows = rng.random_range(1..=20);
        let cols = rng.random_range(1..=20);
        let a = BitMatrix::random(rows, cols, &mut stream(101, &[1, i]));
        let v = BitVector::random(rows, &mut stream(101, &[2, i]));
        let extended = a
            .hstack(&BitMatrix::from_columns(rows, std::slice::from_ref(&v)).unwrap())
            .unwrap();
        assert_eq!(
            a.column_space_contains(&v).unwrap(),
            extended.rank() == a.rank()
        );
        let image = a
            .mul_vec(&BitVector::random(cols, &mut stream(101, &[3, i])))
            .unwrap();
        assert!(a.column_space_contains(&image).unwrap());
    }
}
