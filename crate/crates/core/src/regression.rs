//! Least-squares projections onto polynomial path features.
//!
//! Conditional expectations in the backward recursion are approximated by
//! projecting onto `1` and the monomials (up to a degree) of a few scalar
//! path features. Columns are centred and scaled before the normal equations
//! are formed; constant columns are dropped (they are spanned by the
//! intercept) and a ridge of `ridge · trace(G)` keeps near-collinear columns
//! harmless. Because the intercept is never penalised, every projection
//! preserves the sample mean of its target.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::path::PathView;

type FeatureFn = dyn Fn(PathView<'_>) -> f64 + Send + Sync;

/// A scalar feature of a path prefix.
#[derive(Clone)]
pub enum PathFeature {
    Terminal(usize),
    RunningIntegral(usize),
    RunningMax(usize),
    Custom { name: String, f: Arc<FeatureFn> },
}

impl PathFeature {
    pub fn custom(name: impl Into<String>, f: impl Fn(PathView<'_>) -> f64 + Send + Sync + 'static) -> Self {
        PathFeature::Custom {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    pub fn name(&self) -> String {
        match self {
            PathFeature::Terminal(c) => format!("terminal[{c}]"),
            PathFeature::RunningIntegral(c) => format!("integral[{c}]"),
            PathFeature::RunningMax(c) => format!("max[{c}]"),
            PathFeature::Custom { name, .. } => name.clone(),
        }
    }

    pub fn eval(&self, p: PathView<'_>) -> f64 {
        match self {
            PathFeature::Terminal(c) => p.terminal()[*c],
            PathFeature::RunningIntegral(c) => p.running_integral(*c),
            PathFeature::RunningMax(c) => p.running_max(*c),
            PathFeature::Custom { f, .. } => f(p),
        }
    }
}

impl fmt::Debug for PathFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Features plus the maximal monomial degree.
#[derive(Debug, Clone)]
pub struct RegressionBasis {
    features: Vec<PathFeature>,
    degree: usize,
    monomials: Vec<Vec<usize>>,
}

impl RegressionBasis {
    pub fn new(features: Vec<PathFeature>, degree: usize) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::InvalidConfig("regression basis needs at least one feature".into()));
        }
        if degree == 0 {
            return Err(Error::InvalidConfig("regression degree must be at least 1".into()));
        }
        let mut monomials = Vec::new();
        let mut current = Vec::new();
        fn extend(start: usize, nf: usize, left: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            for i in start..nf {
                current.push(i);
                out.push(current.clone());
                if left > 1 {
                    extend(i, nf, left - 1, current, out);
                }
                current.pop();
            }
        }
        extend(0, features.len(), degree, &mut current, &mut monomials);
        monomials.sort_by_key(|m| m.len());
        Ok(Self {
            features,
            degree,
            monomials,
        })
    }

    /// Terminal value and running integral of every component, degree 2.
    pub fn default_for(dim: usize) -> Self {
        Self::with_degree(dim, 2)
    }

    pub fn with_degree(dim: usize, degree: usize) -> Self {
        let mut features: Vec<PathFeature> = (0..dim).map(PathFeature::Terminal).collect();
        features.extend((0..dim).map(PathFeature::RunningIntegral));
        Self::new(features, degree.max(1)).expect("non-empty basis")
    }

    pub fn features(&self) -> &[PathFeature] {
        &self.features
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of non-constant regressors.
    pub fn width(&self) -> usize {
        self.monomials.len()
    }

    /// Appends the monomials of the features at `p` to `out`.
    pub fn design_row(&self, p: PathView<'_>, out: &mut Vec<f64>) {
        let values: Vec<f64> = self.features.iter().map(|f| f.eval(p)).collect();
        out.extend(
            self.monomials
                .iter()
                .map(|m| m.iter().map(|&i| values[i]).product::<f64>()),
        );
    }
}

/// A fitted projection operator for one time step.
#[derive(Debug, Clone)]
pub struct Projection {
    n: usize,
    width: usize,
    // standardized design, n × width
    design: Vec<f64>,
    eigvecs: DMatrix<f64>,
    inv_eig: Vec<f64>,
    condition: f64,
    dropped: usize,
}

impl Projection {
    /// Intercept-only projection: the sample mean.
    pub fn mean_only(n: usize) -> Self {
        Self {
            n,
            width: 0,
            design: Vec::new(),
            eigvecs: DMatrix::zeros(0, 0),
            inv_eig: Vec::new(),
            condition: 1.0,
            dropped: 0,
        }
    }

    /// Fits from a raw row-major `n × p` design.
    pub fn fit(raw: &[f64], n: usize, p: usize, step: usize, ridge: f64, max_condition: f64) -> Result<Self> {
        debug_assert_eq!(raw.len(), n * p);
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularRegression {
                step,
                condition: f64::INFINITY,
                limit: max_condition,
            });
        }
        let nf = n as f64;
        let mut keep = Vec::new();
        let mut centres = Vec::new();
        let mut scales = Vec::new();
        for j in 0..p {
            let col = (0..n).map(|i| raw[i * p + j]);
            let m = col.clone().sum::<f64>() / nf;
            let var = col.map(|v| (v - m) * (v - m)).sum::<f64>() / nf;
            let sd = var.sqrt();
            if sd > 1e-10 * (1.0 + m.abs()) {
                keep.push(j);
                centres.push(m);
                scales.push(sd);
            }
        }
        let width = keep.len();
        let dropped = p - width;
        if width == 0 {
            return Ok(Self {
                dropped,
                ..Self::mean_only(n)
            });
        }
        let mut design = Vec::with_capacity(n * width);
        for i in 0..n {
            for (c, &j) in keep.iter().enumerate() {
                design.push((raw[i * p + j] - centres[c]) / scales[c]);
            }
        }
        let mut gram = DMatrix::<f64>::zeros(width, width);
        for row in design.chunks_exact(width) {
            for a in 0..width {
                for b in a..width {
                    gram[(a, b)] += row[a] * row[b];
                }
            }
        }
        for a in 0..width {
            for b in a..width {
                let v = gram[(a, b)] / nf;
                gram[(a, b)] = v;
                gram[(b, a)] = v;
            }
        }
        let lambda = ridge * gram.trace();
        let eig = SymmetricEigen::new(gram);
        let ev: Vec<f64> = eig.eigenvalues.iter().map(|v| v.max(0.0)).collect();
        let max_ev = ev.iter().copied().fold(0.0, f64::max);
        let min_ev = ev.iter().copied().fold(f64::INFINITY, f64::min);
        let condition = if min_ev > 0.0 { max_ev / min_ev } else { f64::INFINITY };
        let ridged = (max_ev + lambda) / (min_ev + lambda);
        if !(ridged <= max_condition) {
            return Err(Error::SingularRegression {
                step,
                condition: ridged,
                limit: max_condition,
            });
        }
        Ok(Self {
            n,
            width,
            design,
            eigvecs: eig.eigenvectors,
            inv_eig: ev.iter().map(|v| 1.0 / (v + lambda)).collect(),
            condition,
            dropped,
        })
    }

    /// Condition number of the standardized Gram matrix before ridging.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// Number of columns dropped as constant.
    pub fn dropped(&self) -> usize {
        self.dropped
    }

    /// Fitted values of the least-squares projection of `y`.
    pub fn project(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.n);
        let nf = self.n as f64;
        let ybar = y.iter().sum::<f64>() / nf;
        if self.width == 0 {
            return vec![ybar; self.n];
        }
        let w = self.width;
        let mut b = vec![0.0; w];
        for (row, yi) in self.design.chunks_exact(w).zip(y) {
            let r = yi - ybar;
            for (bj, xj) in b.iter_mut().zip(row) {
                *bj += xj * r;
            }
        }
        b.iter_mut().for_each(|v| *v /= nf);
        // beta = V diag(1 / (λ_k + ridge)) Vᵀ b
        let mut coeffs = vec![0.0; w];
        for k in 0..w {
            let proj: f64 = (0..w).map(|j| self.eigvecs[(j, k)] * b[j]).sum();
            let scaled = proj * self.inv_eig[k];
            for (j, c) in coeffs.iter_mut().enumerate() {
                *c += self.eigvecs[(j, k)] * scaled;
            }
        }
        self.design
            .chunks_exact(w)
            .map(|row| ybar + row.iter().zip(&coeffs).map(|(x, c)| x * c).sum::<f64>())
            .collect()
    }
}
