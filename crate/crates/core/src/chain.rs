//! The nonhomogeneous Markov chain associated with an operator and a seed
//! density: `P_f^{[n,n+1]}(h) = Q(Q^n(f), h)` and its time-window products.

use crate::error::{check_dim, QsoError, Result};
use crate::qso::Qso;
use crate::simplex::{l1_distance, Density, SignedVector};
use crate::tol;

/// Column-stochastic `d x d` matrix stored as its columns; column `j` is the
/// image of the vertex `e_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    columns: Vec<Density>,
}

impl StochasticMatrix {
    pub fn from_columns(columns: Vec<Density>) -> Result<Self> {
        let d = columns.len();
        if d == 0 {
            return Err(QsoError::InvalidParameter("empty matrix".into()));
        }
        for c in &columns {
            check_dim(d, c.dim())?;
        }
        Ok(Self { columns })
    }

    /// Builds from entries `m[k][j]` (row `k`, column `j`); every column must
    /// be a density within the construction tolerance.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        for r in rows {
            check_dim(d, r.len())?;
        }
        let columns = (0..d)
            .map(|j| Density::new(rows.iter().map(|r| r[j]).collect()))
            .collect::<Result<Vec<_>>>()?;
        Self::from_columns(columns)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            columns: (0..dim).map(|j| Density::vertex(dim, j)).collect(),
        }
    }

    /// `v 1^T`: every column equals `v`.
    pub fn rank_one(v: &Density) -> Self {
        Self {
            columns: vec![v.clone(); v.dim()],
        }
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Density] {
        &self.columns
    }

    pub fn column(&self, j: usize) -> &Density {
        &self.columns[j]
    }

    /// Entry in row `k`, column `j`.
    pub fn entry(&self, k: usize, j: usize) -> f64 {
        self.columns[j].values()[k]
    }

    fn combine(&self, weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (w, col) in weights.iter().zip(&self.columns) {
            if *w == 0.0 {
                continue;
            }
            for (o, c) in out.iter_mut().zip(col.values()) {
                *o += w * c;
            }
        }
        out
    }

    pub fn apply(&self, x: &Density) -> Result<Density> {
        check_dim(self.dim(), x.dim())?;
        Ok(Density::normalized(self.combine(x.values())))
    }

    pub fn apply_signed(&self, w: &SignedVector) -> Result<SignedVector> {
        check_dim(self.dim(), w.dim())?;
        Ok(SignedVector::from_raw(self.combine(w.values())))
    }

    /// The composition `self ∘ rhs` (apply `rhs` first).
    pub fn compose(&self, rhs: &StochasticMatrix) -> Result<StochasticMatrix> {
        check_dim(self.dim(), rhs.dim())?;
        Ok(StochasticMatrix {
            columns: rhs
                .columns
                .iter()
                .map(|c| Density::normalized(self.combine(c.values())))
                .collect(),
        })
    }

    /// `M^n`; `n = 0` gives the identity.
    pub fn power(&self, n: usize) -> StochasticMatrix {
        let mut acc = StochasticMatrix::identity(self.dim());
        for _ in 0..n {
            acc = self.compose(&acc).expect("same dimension");
        }
        acc
    }

    /// Largest entrywise difference to another matrix.
    pub fn max_abs_diff(&self, other: &StochasticMatrix) -> Result<f64> {
        check_dim(self.dim(), other.dim())?;
        Ok(self
            .columns
            .iter()
            .zip(&other.columns)
            .flat_map(|(a, b)| {
                a.values()
                    .iter()
                    .zip(b.values())
                    .map(|(x, y)| (x - y).abs())
            })
            .fold(0.0, f64::max))
    }

    /// Rows `m[k][.]`, the CSV layout.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|k| (0..self.dim()).map(|j| self.entry(k, j)).collect())
            .collect()
    }
}

/// `P_f = Q(f, .)`: column `j` is `Q(f, e_j)`, entry `(k, j)` is
/// `sum_i f_i q[i][j][k]`.
pub fn transition_matrix(q: &Qso, f: &Density) -> Result<StochasticMatrix> {
    check_dim(q.dim(), f.dim())?;
    let d = q.dim();
    let columns = (0..d)
        .map(|j| {
            let mut out = vec![0.0; d];
            for (i, &fi) in f.values().iter().enumerate() {
                if fi == 0.0 {
                    continue;
                }
                for (o, &v) in out.iter_mut().zip(q.column(i, j)) {
                    *o += fi * v;
                }
            }
            Density::normalized(out)
        })
        .collect();
    Ok(StochasticMatrix { columns })
}

/// The product `P_f^{[m,n]} = T_{n-1} ... T_m` with
/// `T_k = transition_matrix(Q, Q^k(f))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainWindow {
    pub seed: Density,
    pub m: usize,
    pub n: usize,
    pub product: StochasticMatrix,
    /// `Q^m(f), ..., Q^{n-1}(f)`.
    pub trajectory: Vec<Density>,
}

pub fn window(q: &Qso, seed: &Density, m: usize, n: usize) -> Result<ChainWindow> {
    if m > n {
        return Err(QsoError::InvalidRange { m, n });
    }
    check_dim(q.dim(), seed.dim())?;
    let mut state = q.iterate_to(seed, m)?;
    let mut product = StochasticMatrix::identity(q.dim());
    let mut trajectory = Vec::with_capacity(n - m);
    for _ in m..n {
        let step = transition_matrix(q, &state)?;
        product = step.compose(&product)?;
        let next = q.diag(&state)?;
        trajectory.push(std::mem::replace(&mut state, next));
    }
    Ok(ChainWindow {
        seed: seed.clone(),
        m,
        n,
        product,
        trajectory,
    })
}

/// Walks `P_f^{[0,1]}, P_f^{[0,2]}, ...` reusing each product.
#[derive(Debug, Clone)]
pub struct ChainStepper<'a> {
    q: &'a Qso,
    state: Density,
    product: StochasticMatrix,
    steps: usize,
}

impl<'a> ChainStepper<'a> {
    pub fn new(q: &'a Qso, seed: &Density) -> Result<Self> {
        check_dim(q.dim(), seed.dim())?;
        Ok(Self {
            q,
            state: seed.clone(),
            product: StochasticMatrix::identity(q.dim()),
            steps: 0,
        })
    }

    /// Advances one step and returns `P_f^{[0,n]}` for the new `n`.
    pub fn advance(&mut self) -> Result<&StochasticMatrix> {
        let step = transition_matrix(self.q, &self.state)?;
        self.product = step.compose(&self.product)?;
        self.state = self.q.diag(&self.state)?;
        self.steps += 1;
        Ok(&self.product)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// `Q^n(f)` for the current `n`.
    pub fn state(&self) -> &Density {
        &self.state
    }

    pub fn product(&self) -> &StochasticMatrix {
        &self.product
    }
}

/// `P_f^n` for a `Q`-invariant seed, where the chain is homogeneous.
pub fn homogeneous_window(q: &Qso, f: &Density, n: usize) -> Result<StochasticMatrix> {
    let residual = l1_distance(&q.diag(f)?, f)?;
    if residual > tol::CONSTRUCTION {
        return Err(QsoError::NotInvariantSeed { residual });
    }
    Ok(transition_matrix(q, f)?.power(n))
}
