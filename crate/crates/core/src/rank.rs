//! Exact rank of integer matrices.
//!
//! [`exact_rank`] runs fraction-free (Bareiss) elimination. Intermediate
//! values are minors of the input, so every division is exact; the
//! elimination runs on `i128` and restarts on arbitrary-precision integers if
//! any product would overflow.
//!
//! [`ModularRowSpace`] maintains a reduced echelon basis over the prime field
//! `F_p` with `p = 2³¹ − 1` and accepts rows incrementally. Its rank never
//! exceeds the rational rank, so reaching full column rank modulo `p` is an
//! exact certificate of full rational rank.

use num_bigint::BigInt;
use num_traits::Zero;

pub fn exact_rank(rows: &[Vec<i64>]) -> usize {
    let Some(cols) = rows.first().map(Vec::len) else {
        return 0;
    };
    assert!(rows.iter().all(|r| r.len() == cols), "ragged matrix");
    let small: Vec<Vec<i128>> = rows
        .iter()
        .map(|r| r.iter().map(|&v| v as i128).collect())
        .collect();
    match bareiss_i128(small, cols) {
        Some(rank) => rank,
        None => {
            let big: Vec<Vec<BigInt>> = rows
                .iter()
                .map(|r| r.iter().map(|&v| BigInt::from(v)).collect())
                .collect();
            bareiss_big(big, cols)
        }
    }
}

fn bareiss_i128(mut a: Vec<Vec<i128>>, cols: usize) -> Option<usize> {
    let nrows = a.len();
    let mut prev: i128 = 1;
    let mut rank = 0;
    for c in 0..cols {
        if rank == nrows {
            break;
        }
        let Some(p) = (rank..nrows).find(|&i| a[i][c] != 0) else {
            continue;
        };
        a.swap(rank, p);
        let pivot = a[rank][c];
        let (top, rest) = a.split_at_mut(rank + 1);
        let pivot_row = &top[rank];
        for row in rest.iter_mut() {
            let lead = row[c];
            for j in c + 1..cols {
                let val = pivot
                    .checked_mul(row[j])?
                    .checked_sub(lead.checked_mul(pivot_row[j])?)?;
                debug_assert_eq!(val % prev, 0, "Bareiss division must be exact");
                row[j] = val / prev;
            }
            row[c] = 0;
        }
        prev = pivot;
        rank += 1;
    }
    Some(rank)
}

fn bareiss_big(mut a: Vec<Vec<BigInt>>, cols: usize) -> usize {
    let nrows = a.len();
    let mut prev = BigInt::from(1);
    let mut rank = 0;
    for c in 0..cols {
        if rank == nrows {
            break;
        }
        let Some(p) = (rank..nrows).find(|&i| !a[i][c].is_zero()) else {
            continue;
        };
        a.swap(rank, p);
        let pivot = a[rank][c].clone();
        let (top, rest) = a.split_at_mut(rank + 1);
        let pivot_row = &top[rank];
        for row in rest.iter_mut() {
            let lead = row[c].clone();
            for j in c + 1..cols {
                let val = &pivot * &row[j] - &lead * &pivot_row[j];
                debug_assert!((&val % &prev).is_zero());
                row[j] = val / &prev;
            }
            row[c] = BigInt::zero();
        }
        prev = pivot;
        rank += 1;
    }
    rank
}

const MODULUS: u64 = (1 << 31) - 1;

fn inv_mod(a: u64) -> u64 {
    // Fermat: a^(p-2)
    let mut base = a % MODULUS;
    let mut exp = MODULUS - 2;
    let mut acc = 1u64;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * base % MODULUS;
        }
        base = base * base % MODULUS;
        exp >>= 1;
    }
    acc
}

fn to_field(v: i64) -> u64 {
    v.rem_euclid(MODULUS as i64) as u64
}

/// Row space over `F_{2³¹−1}` built one row at a time.
#[derive(Debug, Clone)]
pub struct ModularRowSpace {
    cols: usize,
    // Normalized basis rows (pivot entry 1), paired with their pivot column.
    basis: Vec<(usize, Vec<u64>)>,
    pivot_of_col: Vec<Option<usize>>,
}

impl ModularRowSpace {
    pub fn new(cols: usize) -> Self {
        Self {
            cols,
            basis: Vec::new(),
            pivot_of_col: vec![None; cols],
        }
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_full(&self) -> bool {
        self.basis.len() == self.cols
    }

    /// Adds a row; returns whether it enlarged the space.
    pub fn insert(&mut self, row: &[i64]) -> bool {
        assert_eq!(row.len(), self.cols);
        if self.is_full() {
            return false;
        }
        let mut v: Vec<u64> = row.iter().map(|&x| to_field(x)).collect();
        for c in 0..self.cols {
            if v[c] == 0 {
                continue;
            }
            if let Some(b) = self.pivot_of_col[c] {
                let factor = v[c];
                let (_, brow) = &self.basis[b];
                for j in c..self.cols {
                    if brow[j] != 0 {
                        v[j] = (v[j] + MODULUS - factor * brow[j] % MODULUS) % MODULUS;
                    }
                }
            } else {
                let inv = inv_mod(v[c]);
                for x in v[c..].iter_mut() {
                    *x = *x * inv % MODULUS;
                }
                self.pivot_of_col[c] = Some(self.basis.len());
                self.basis.push((c, v));
                return true;
            }
        }
        false
    }
}

/// Rank modulo `2³¹ − 1`; a lower bound on the rational rank.
pub fn modular_rank(rows: &[Vec<i64>]) -> usize {
    let Some(cols) = rows.first().map(Vec::len) else {
        return 0;
    };
    let mut space = ModularRowSpace::new(cols);
    for r in rows {
        space.insert(r);
        if space.is_full() {
            break;
        }
    }
    space.rank()
}
