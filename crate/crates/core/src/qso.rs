//! The quadratic stochastic operator as a cubic stochastic array.

use crate::error::{check_dim, QsoError, Result};
use crate::simplex::{needs_renormalization, Density, SignedVector};
use crate::tol;

/// A validated cubic array `q[i][j][k]`, stochastic in `k` for every pair
/// `(i, j)`, acting bilinearly by
/// `Q(x, y)_k = sum_{i,j} x_i y_j q[i][j][k]`.
///
/// Storage is dense and row-major by `(i, j)`: the column `q[i][j][.]`
/// occupies `d` consecutive entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Qso {
    dim: usize,
    q: Vec<f64>,
    symmetric: bool,
    max_renormalization: f64,
}

impl Qso {
    /// Validates a flat row-major array of length `dim^3`.
    ///
    /// Entries in `[-1e-12, 0)` are clamped; each `(i, j)` column must sum to
    /// one within `1e-9` and is then renormalized exactly. When
    /// `symmetric_required` holds, mirrored entries must agree within `1e-12`
    /// and are averaged so the stored array is exactly symmetric.
    pub fn from_flat(dim: usize, mut q: Vec<f64>, symmetric_required: bool) -> Result<Self> {
        if dim == 0 {
            return Err(QsoError::InvalidParameter("dimension must be >= 1".into()));
        }
        check_dim(dim * dim * dim, q.len())?;
        let idx = |i: usize, j: usize, k: usize| (i * dim + j) * dim + k;
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    let v = &mut q[idx(i, j, k)];
                    if !v.is_finite() {
                        return Err(QsoError::NonFiniteEntry { i, j, k });
                    }
                    if *v < 0.0 {
                        if *v < -tol::CLAMP {
                            return Err(QsoError::NegativeEntry { i, j, k, value: *v });
                        }
                        *v = 0.0;
                    }
                }
            }
        }
        if symmetric_required {
            for i in 0..dim {
                for j in (i + 1)..dim {
                    for k in 0..dim {
                        let a = q[idx(i, j, k)];
                        let b = q[idx(j, i, k)];
                        let gap = (a - b).abs();
                        if gap > tol::IDENTITY {
                            return Err(QsoError::AsymmetricEntry { i, j, k, gap });
                        }
                        if gap > 0.0 {
                            let m = 0.5 * (a + b);
                            q[idx(i, j, k)] = m;
                            q[idx(j, i, k)] = m;
                        }
                    }
                }
            }
        }
        let mut max_renormalization = 0.0f64;
        for i in 0..dim {
            for j in 0..dim {
                let col = &mut q[idx(i, j, 0)..idx(i, j, 0) + dim];
                let sum: f64 = col.iter().sum();
                let dev = (sum - 1.0).abs();
                if dev > tol::CONSTRUCTION {
                    return Err(QsoError::RowNotStochastic { i, j, sum });
                }
                max_renormalization = max_renormalization.max(dev);
                if needs_renormalization(sum, dim) {
                    for v in col.iter_mut() {
                        *v /= sum;
                    }
                }
            }
        }
        Ok(Self {
            dim,
            q,
            symmetric: symmetric_required,
            max_renormalization,
        })
    }

    /// Builds from a closure `(i, j, k) -> q_ijk`; used by the constructors.
    pub(crate) fn from_fn(
        dim: usize,
        symmetric: bool,
        f: impl Fn(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut q = Vec::with_capacity(dim * dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    q.push(f(i, j, k));
                }
            }
        }
        Self::from_flat(dim, q, symmetric)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Largest `|sum_k q_ijk - 1|` divided out during validation.
    pub fn max_renormalization(&self) -> f64 {
        self.max_renormalization
    }

    pub fn entry(&self, i: usize, j: usize, k: usize) -> f64 {
        self.q[(i * self.dim + j) * self.dim + k]
    }

    /// The output distribution `q[i][j][.]`, i.e. `Q(e_i, e_j)`.
    pub fn column(&self, i: usize, j: usize) -> &[f64] {
        let start = (i * self.dim + j) * self.dim;
        &self.q[start..start + self.dim]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.q
    }

    /// Nested `q[i][j][k]` copy, the layout of the operator file format.
    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.column(i, j).to_vec()).collect())
            .collect()
    }

    fn bilinear(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (j, &yj) in y.iter().enumerate() {
                let c = xi * yj;
                if c == 0.0 {
                    continue;
                }
                for (o, &qv) in out.iter_mut().zip(self.column(i, j)) {
                    *o += c * qv;
                }
            }
        }
        out
    }

    /// `Q(x, y)` for densities.
    pub fn apply(&self, x: &Density, y: &Density) -> Result<Density> {
        check_dim(self.dim, x.dim())?;
        check_dim(self.dim, y.dim())?;
        Ok(Density::normalized(self.bilinear(x.values(), y.values())))
    }

    /// `Q(w, y)` for a signed first argument, extended by bilinearity.
    pub fn apply_signed(&self, w: &SignedVector, y: &Density) -> Result<SignedVector> {
        check_dim(self.dim, w.dim())?;
        check_dim(self.dim, y.dim())?;
        Ok(SignedVector::from_raw(
            self.bilinear(w.values(), y.values()),
        ))
    }

    /// `Q(x, y)` for arbitrary signed arguments.
    pub fn apply_signed_pair(&self, x: &SignedVector, y: &SignedVector) -> Result<SignedVector> {
        check_dim(self.dim, x.dim())?;
        check_dim(self.dim, y.dim())?;
        Ok(SignedVector::from_raw(
            self.bilinear(x.values(), y.values()),
        ))
    }

    /// The diagonal map `f -> Q(f, f)`.
    pub fn diag(&self, f: &Density) -> Result<Density> {
        self.apply(f, f)
    }

    /// `[f, Q(f), ..., Q^n(f)]`.
    pub fn iterate(&self, f: &Density, n: usize) -> Result<Vec<Density>> {
        check_dim(self.dim, f.dim())?;
        let mut out = Vec::with_capacity(n + 1);
        out.push(f.clone());
        for _ in 0..n {
            let next = self.diag(out.last().expect("nonempty"))?;
            out.push(next);
        }
        Ok(out)
    }

    /// `Q^n(f)` without keeping the trajectory.
    pub fn iterate_to(&self, f: &Density, n: usize) -> Result<Density> {
        check_dim(self.dim, f.dim())?;
        let mut x = f.clone();
        for _ in 0..n {
            x = self.diag(&x)?;
        }
        Ok(x)
    }

    /// Whether `Q(ftilde, gtilde) >= Q(f, g)` entrywise, given
    /// `ftilde >= f >= 0` and `gtilde >= g >= 0`.
    pub fn check_monotone(
        &self,
        f: &Density,
        g: &Density,
        ftilde: &SignedVector,
        gtilde: &SignedVector,
    ) -> Result<bool> {
        let fs = f.to_signed();
        let gs = g.to_signed();
        if !ftilde.dominates(&fs)? || !gtilde.dominates(&gs)? {
            return Err(QsoError::PreconditionViolated(
                "dominating arguments must satisfy ftilde >= f and gtilde >= g".into(),
            ));
        }
        let big = self.apply_signed_pair(ftilde, gtilde)?;
        let small = self.apply(f, g)?;
        Ok(big
            .values()
            .iter()
            .zip(small.values())
            .all(|(a, b)| *a >= *b - tol::IDENTITY))
    }
}
