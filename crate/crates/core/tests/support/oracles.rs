//! Reference computations that share no code with the library: dense
//! Gauss-Jordan algebra, brute-force sandwich covariances over all pairs
//! of observations, and finite differences.

use nalgebra::DMatrix;

pub type Mat = Vec<Vec<f64>>;

pub fn transpose(a: &Mat) -> Mat {
    let (r, c) = (a.len(), a[0].len());
    (0..c).map(|j| (0..r).map(|i| a[i][j]).collect()).collect()
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (n, m, p) = (a.len(), b.len(), b[0].len());
    (0..n)
        .map(|i| (0..p).map(|j| (0..m).map(|k| a[i][k] * b[k][j]).sum()).collect())
        .collect()
}

/// Gauss-Jordan inversion with partial pivoting.
pub fn invert(a: &Mat) -> Mat {
    let n = a.len();
    let mut m: Mat = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap();
        m.swap(col, piv);
        let d = m[col][col];
        assert!(d.abs() > 1e-14, "singular matrix in oracle");
        for v in m[col].iter_mut() {
            *v /= d;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for c in 0..2 * n {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

pub fn ols_beta(x: &Mat, y: &[f64]) -> Vec<f64> {
    let xt = transpose(x);
    let xty: Mat = matmul(&xt, &y.iter().map(|v| vec![*v]).collect());
    matmul(&invert(&matmul(&xt, x)), &xty).into_iter().map(|r| r[0]).collect()
}

pub fn residuals(x: &Mat, y: &[f64]) -> Vec<f64> {
    let b = ols_beta(x, y);
    x.iter()
        .zip(y)
        .map(|(row, yi)| yi - row.iter().zip(&b).map(|(a, c)| a * c).sum::<f64>())
        .collect()
}

/// (X'X)⁻¹ [Σᵢ Σⱼ w(i,j) xᵢ eᵢ eⱼ xⱼ'] (X'X)⁻¹ by explicit double sum.
pub fn sandwich(x: &Mat, y: &[f64], w: impl Fn(usize, usize) -> f64) -> Mat {
    let e = residuals(x, y);
    let k = x[0].len();
    let n = x.len();
    let mut meat = vec![vec![0.0; k]; k];
    for i in 0..n {
        for j in 0..n {
            let wij = w(i, j);
            if wij == 0.0 {
                continue;
            }
            for a in 0..k {
                for b in 0..k {
                    meat[a][b] += wij * x[i][a] * e[i] * e[j] * x[j][b];
                }
            }
        }
    }
    let bread = invert(&matmul(&transpose(x), x));
    matmul(&matmul(&bread, &meat), &bread)
}

pub fn hc0(x: &Mat, y: &[f64]) -> Mat {
    sandwich(x, y, |i, j| if i == j { 1.0 } else { 0.0 })
}

pub fn one_way<A: PartialEq>(x: &Mat, y: &[f64], a: &[A]) -> Mat {
    sandwich(x, y, |i, j| if a[i] == a[j] { 1.0 } else { 0.0 })
}

pub fn two_way<A: PartialEq, B: PartialEq>(x: &Mat, y: &[f64], a: &[A], b: &[B]) -> Mat {
    sandwich(x, y, |i, j| {
        let sa = a[i] == a[j];
        let sb = b[i] == b[j];
        (sa as u8 + sb as u8) as f64 - (sa && sb) as u8 as f64
    })
}

/// Largest entrywise difference relative to the largest entry of `oracle`.
pub fn rel_diff(lib: &DMatrix<f64>, oracle: &Mat) -> f64 {
    let scale = oracle.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut worst = 0.0_f64;
    for (i, row) in oracle.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            worst = worst.max((lib[(i, j)] - v).abs());
        }
    }
    worst / scale
}

pub fn to_dmatrix(a: &Mat) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), a[0].len(), |i, j| a[i][j])
}

pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Observed orders log₂(eₖ/eₖ₊₁) for errors at step sizes that halve.
pub fn orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0].abs() / w[1].abs()).log2()).collect()
}
