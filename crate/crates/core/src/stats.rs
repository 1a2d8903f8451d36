//! Linear regression with robust and clustered covariance, plus the small
//! set of tests used by the analytics modules.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, Normal, StudentsT};

use crate::error::{Error, Result};

/// Below this sample size p-values use the t distribution.
pub const NORMAL_APPROX_MIN_N: usize = 200;

const COLLINEAR_TOL: f64 = 1e-10;

/// Two-sided p-value for a t statistic with `df` residual degrees of freedom.
pub fn two_sided_p(t: f64, n: usize, df: usize) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let tail = if n >= NORMAL_APPROX_MIN_N || df == 0 {
        Normal::standard().sf(t.abs())
    } else {
        StudentsT::new(0.0, 1.0, df as f64).expect("df > 0").sf(t.abs())
    };
    (2.0 * tail).min(1.0)
}

/// Checks that the columns of `x` are linearly independent. On failure the
/// error names the first dependent column and the columns it is spanned by.
pub fn check_full_rank(x: &DMatrix<f64>, names: &[String]) -> Result<()> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut accepted: Vec<usize> = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let scale = col.norm();
        let mut r = col.clone();
        for q in &basis {
            let proj = q.dot(&r);
            r -= q * proj;
        }
        if scale == 0.0 || r.norm() <= COLLINEAR_TOL * scale.max(1.0) {
            let mut culprits = vec![names[j].clone()];
            if scale > 0.0 && !accepted.is_empty() {
                let a = DMatrix::from_columns(&accepted.iter().map(|&i| x.column(i)).collect::<Vec<_>>());
                if let Ok(coef) = a.svd(true, true).solve(&col, 1e-12) {
                    culprits.extend(
                        accepted
                            .iter()
                            .zip(coef.iter())
                            .filter(|(_, c)| c.abs() > 1e-8)
                            .map(|(&i, _)| names[i].clone()),
                    );
                }
            }
            return Err(Error::Singular(culprits));
        }
        basis.push(r.normalize());
        accepted.push(j);
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct OlsFit {
    pub names: Vec<String>,
    pub beta: DVector<f64>,
    pub residuals: DVector<f64>,
    pub xtx_inv: DMatrix<f64>,
    pub n: usize,
    pub r2: f64,
}

/// Ordinary least squares of `y` on the columns of `x`.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>, names: &[String]) -> Result<OlsFit> {
    if x.nrows() != y.len() || names.len() != x.ncols() {
        return Err(Error::InvalidArgument("design, outcome and names disagree in size".into()));
    }
    if x.nrows() < x.ncols() {
        return Err(Error::InvalidArgument(format!(
            "{} observations for {} regressors",
            x.nrows(),
            x.ncols()
        )));
    }
    check_full_rank(x, names)?;
    let xtx = x.transpose() * x;
    let xtx_inv = xtx
        .try_inverse()
        .ok_or_else(|| Error::Singular(names.to_vec()))?;
    let beta = &xtx_inv * (x.transpose() * y);
    let residuals = y - x * &beta;
    let mean = y.mean();
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ssr = residuals.norm_squared();
    let r2 = if sst > 0.0 { 1.0 - ssr / sst } else { f64::NAN };
    Ok(OlsFit {
        names: names.to_vec(),
        beta,
        residuals,
        xtx_inv,
        n: x.nrows(),
        r2,
    })
}

fn sandwich(bread: &DMatrix<f64>, meat: &DMatrix<f64>) -> DMatrix<f64> {
    bread * meat * bread
}

/// HC0: (X'X)⁻¹ (Σ eᵢ² xᵢxᵢ') (X'X)⁻¹.
pub fn hc0(x: &DMatrix<f64>, fit: &OlsFit) -> DMatrix<f64> {
    let k = x.ncols();
    let mut meat = DMatrix::zeros(k, k);
    for i in 0..x.nrows() {
        let xi = x.row(i).transpose();
        meat += &xi * xi.transpose() * fit.residuals[i].powi(2);
    }
    sandwich(&fit.xtx_inv, &meat)
}

/// Cluster-robust covariance without small-sample correction:
/// (X'X)⁻¹ (Σ_g X_g'e_g e_g'X_g) (X'X)⁻¹.
pub fn cluster_vcov<K: Ord>(x: &DMatrix<f64>, fit: &OlsFit, clusters: &[K]) -> DMatrix<f64> {
    let k = x.ncols();
    let mut scores: BTreeMap<&K, DVector<f64>> = BTreeMap::new();
    for (i, g) in clusters.iter().enumerate() {
        let s = scores.entry(g).or_insert_with(|| DVector::zeros(k));
        *s += x.row(i).transpose() * fit.residuals[i];
    }
    let mut meat = DMatrix::zeros(k, k);
    for s in scores.values() {
        meat += s * s.transpose();
    }
    sandwich(&fit.xtx_inv, &meat)
}

/// Two-way clustered covariance V_a + V_b − V_ab, where V_ab clusters on the
/// intersection. If the sum is not positive semi-definite its negative
/// eigenvalues are set to zero; the flag reports whether that happened.
pub fn two_way_vcov<A: Ord + Clone, B: Ord + Clone>(
    x: &DMatrix<f64>,
    fit: &OlsFit,
    a: &[A],
    b: &[B],
) -> (DMatrix<f64>, bool) {
    let both: Vec<(A, B)> = a.iter().cloned().zip(b.iter().cloned()).collect();
    let v = cluster_vcov(x, fit, a) + cluster_vcov(x, fit, b) - cluster_vcov(x, fit, &both);
    let sym = (&v + v.transpose()) * 0.5;
    let eig = sym.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return (sym, false);
    }
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let fixed = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    (fixed, true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub t: f64,
    pub p: f64,
}

/// Coefficient table for a fit under the given covariance matrix.
pub fn coefficients(fit: &OlsFit, vcov: &DMatrix<f64>) -> Vec<Coefficient> {
    let df = fit.n.saturating_sub(fit.beta.len());
    fit.names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let se = vcov[(j, j)].max(0.0).sqrt();
            let estimate = fit.beta[j];
            let t = if se > 0.0 {
                estimate / se
            } else if estimate == 0.0 {
                0.0
            } else {
                f64::INFINITY.copysign(estimate)
            };
            Coefficient {
                name: name.clone(),
                estimate,
                se,
                t,
                p: two_sided_p(t, fit.n, df),
            }
        })
        .collect()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator); 0 for a single value.
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    pub p: f64,
    pub n: usize,
}

/// Pearson correlation with the usual t-test of zero correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation> {
    let n = x.len();
    if n != y.len() || n < 3 {
        return Err(Error::InvalidArgument("correlation needs two equal series of length ≥ 3".into()));
    }
    let (mx, my) = (mean(x), mean(y));
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::InvalidArgument("correlation undefined for a constant series".into()));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = n - 2;
    let t = if r.abs() < 1.0 {
        r * (df as f64 / (1.0 - r * r)).sqrt()
    } else {
        f64::INFINITY.copysign(r)
    };
    Ok(Correlation {
        r,
        p: two_sided_p(t, n, df),
        n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anova {
    pub f: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub p: f64,
}

/// One-way ANOVA across groups.
pub fn anova_oneway(groups: &[Vec<f64>]) -> Result<Anova> {
    let groups: Vec<&Vec<f64>> = groups.iter().filter(|g| !g.is_empty()).collect();
    let n: usize = groups.iter().map(|g| g.len()).sum();
    let k = groups.len();
    if k < 2 || n <= k {
        return Err(Error::InvalidArgument("ANOVA needs ≥ 2 non-empty groups and more observations than groups".into()));
    }
    let grand = groups.iter().flat_map(|g| g.iter()).sum::<f64>() / n as f64;
    let ssb: f64 = groups.iter().map(|g| g.len() as f64 * (mean(g) - grand).powi(2)).sum();
    let ssw: f64 = groups
        .iter()
        .map(|g| {
            let m = mean(g);
            g.iter().map(|x| (x - m).powi(2)).sum::<f64>()
        })
        .sum();
    let (df_between, df_within) = (k - 1, n - k);
    let f = (ssb / df_between as f64) / (ssw / df_within as f64);
    let p = if f.is_finite() {
        FisherSnedecor::new(df_between as f64, df_within as f64)
            .expect("positive df")
            .sf(f)
    } else {
        0.0
    };
    Ok(Anova {
        f,
        df_between,
        df_within,
        p,
    })
}
