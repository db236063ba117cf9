//! Dense complex LU factorization with partial (row) pivoting.

use num_complex::Complex64;

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<Complex64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![Complex64::new(0.0, 0.0); n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.n + col]
    }

    pub fn add(&mut self, row: usize, col: usize, value: Complex64) {
        self.data[row * self.n + col] += value;
    }

    pub fn set(&mut self, row: usize, col: usize, value: Complex64) {
        self.data[row * self.n + col] = value;
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.n)
            .map(|r| {
                self.data[r * self.n..(r + 1) * self.n]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Factorization failed because a pivot fell below the singularity threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularPivot {
    pub column: usize,
    pub pivot: f64,
}

/// `P·A = L·U` with unit-diagonal `L` stored below the diagonal of `lu`.
#[derive(Debug, Clone)]
pub struct LuFactors {
    lu: DenseMatrix,
    perm: Vec<usize>,
    min_pivot: f64,
    max_pivot: f64,
}

impl LuFactors {
    /// Factor `a`. A pivot whose magnitude is at most `n·ε·max|A|` is
    /// treated as zero.
    pub fn factor(mut a: DenseMatrix) -> Result<Self, SingularPivot> {
        let n = a.n;
        let threshold = (n.max(1) as f64) * f64::EPSILON * a.max_abs();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut min_pivot = f64::INFINITY;
        let mut max_pivot: f64 = 0.0;

        for k in 0..n {
            let (p, mag) = (k..n)
                .map(|r| (r, a.get(r, k).norm()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if mag <= threshold || mag == 0.0 {
                return Err(SingularPivot { column: k, pivot: mag });
            }
            if p != k {
                for c in 0..n {
                    a.data.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
            }
            min_pivot = min_pivot.min(mag);
            max_pivot = max_pivot.max(mag);

            let pivot = a.get(k, k);
            for r in k + 1..n {
                let factor = a.get(r, k) / pivot;
                if factor == Complex64::new(0.0, 0.0) {
                    continue;
                }
                a.set(r, k, factor);
                for c in k + 1..n {
                    let v = a.get(k, c);
                    a.data[r * n + c] -= factor * v;
                }
            }
        }

        Ok(Self {
            lu: a,
            perm,
            min_pivot,
            max_pivot,
        })
    }

    /// Ratio of the largest to the smallest pivot magnitude (≥ 1).
    pub fn pivot_ratio(&self) -> f64 {
        if self.lu.n == 0 {
            1.0
        } else {
            self.max_pivot / self.min_pivot
        }
    }

    pub fn min_pivot(&self) -> f64 {
        self.min_pivot
    }

    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.lu.n;
        assert_eq!(b.len(), n, "right-hand side length mismatch");
        let mut x: Vec<Complex64> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let mut acc = x[r];
            for (c, xc) in x.iter().enumerate().take(r) {
                acc -= self.lu.get(r, c) * xc;
            }
            x[r] = acc;
        }
        for r in (0..n).rev() {
            let mut acc = x[r];
            for (c, xc) in x.iter().enumerate().skip(r + 1) {
                acc -= self.lu.get(r, c) * xc;
            }
            x[r] = acc / self.lu.get(r, r);
        }
        x
    }
}
