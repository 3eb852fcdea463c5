//! Densities on a finite index set and the l1 geometry of the simplex.
//!
//! A [`Density`] is a point of the probability simplex in `d` coordinates; a
//! [`SignedVector`] holds differences of densities and other signed
//! combinations. The module also provides the Dirichlet sampler and the
//! derivative-free search engine used for every supremum over densities in
//! the crate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;

use crate::error::{check_dim, QsoError, Result};
use crate::tol;

/// A nonnegative vector whose entries sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    values: Vec<f64>,
}

impl Density {
    /// Validates and renormalizes `values`.
    ///
    /// Entries in `[-1e-12, 0)` are clamped to zero; the sum must lie within
    /// `1e-9` of one and is then divided out exactly.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(QsoError::InvalidDensity("empty vector".into()));
        }
        let mut values = values;
        for (i, v) in values.iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(QsoError::InvalidDensity(format!(
                    "non-finite entry at index {}",
                    i + 1
                )));
            }
            if *v < 0.0 {
                if *v < -tol::CLAMP {
                    return Err(QsoError::InvalidDensity(format!(
                        "negative entry {} at index {}",
                        v,
                        i + 1
                    )));
                }
                *v = 0.0;
            }
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > tol::CONSTRUCTION {
            return Err(QsoError::InvalidDensity(format!(
                "entries sum to {sum}, expected 1"
            )));
        }
        Ok(Self::renormalize(values, sum))
    }

    /// Builds a density from a vector that is a density up to rounding, as
    /// produced by stochastic arithmetic inside the crate.
    pub(crate) fn normalized(mut values: Vec<f64>) -> Self {
        for v in values.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let sum: f64 = values.iter().sum();
        debug_assert!(sum > 0.0, "normalized() on a vector with no mass");
        Self::renormalize(values, sum)
    }

    fn renormalize(mut values: Vec<f64>, sum: f64) -> Self {
        if needs_renormalization(sum, values.len()) {
            for v in values.iter_mut() {
                *v /= sum;
            }
        }
        Self { values }
    }

    /// The vertex `e_i` of the simplex (zero-based `i`).
    pub fn vertex(dim: usize, i: usize) -> Self {
        assert!(i < dim, "vertex index {i} out of range for dim {dim}");
        let mut values = vec![0.0; dim];
        values[i] = 1.0;
        Self { values }
    }

    /// The barycenter `(1/d, ..., 1/d)`.
    pub fn uniform(dim: usize) -> Self {
        assert!(dim > 0);
        Self {
            values: vec![1.0 / dim as f64; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Convex combination `a * self + (1 - a) * other`.
    pub fn mix(&self, other: &Density, a: f64) -> Result<Density> {
        check_dim(self.dim(), other.dim())?;
        if !(0.0..=1.0).contains(&a) {
            return Err(QsoError::InvalidParameter(format!(
                "mixing weight {a} outside [0, 1]"
            )));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + (1.0 - a) * y)
            .collect();
        Ok(Density::normalized(values))
    }

    pub fn to_signed(&self) -> SignedVector {
        SignedVector {
            values: self.values.clone(),
        }
    }

    /// Indices carrying positive mass.
    pub fn support(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Whether a sum deviates from one by more than accumulated rounding.
/// Sums already within `d` ulps are left alone so renormalization is
/// idempotent.
pub(crate) fn needs_renormalization(sum: f64, len: usize) -> bool {
    (sum - 1.0).abs() > len as f64 * f64::EPSILON
}

/// A finite real vector; carries elements of `D - D` and other signed data.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedVector {
    values: Vec<f64>,
}

impl SignedVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(QsoError::InvalidParameter(format!(
                "non-finite entry at index {}",
                i + 1
            )));
        }
        Ok(Self { values })
    }

    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            values: vec![0.0; dim],
        }
    }

    /// `u - v` for two densities.
    pub fn difference(u: &Density, v: &Density) -> Result<Self> {
        check_dim(u.dim(), v.dim())?;
        Ok(Self {
            values: u.values.iter().zip(&v.values).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn sub(&self, other: &SignedVector) -> Result<Self> {
        check_dim(self.dim(), other.dim())?;
        Ok(Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn add(&self, other: &SignedVector) -> Result<Self> {
        check_dim(self.dim(), other.dim())?;
        Ok(Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn positive_part(&self) -> Self {
        Self {
            values: self.values.iter().map(|v| v.max(0.0)).collect(),
        }
    }

    pub fn negative_part(&self) -> Self {
        Self {
            values: self.values.iter().map(|v| (-v).max(0.0)).collect(),
        }
    }

    /// Entrywise `self >= other`.
    pub fn dominates(&self, other: &SignedVector) -> Result<bool> {
        check_dim(self.dim(), other.dim())?;
        Ok(self.values.iter().zip(&other.values).all(|(a, b)| a >= b))
    }
}

/// `sum_i |u_i - v_i|`.
pub fn l1_distance(u: &Density, v: &Density) -> Result<f64> {
    check_dim(u.dim(), v.dim())?;
    Ok(l1_slices(u.values(), v.values()))
}

pub(crate) fn l1_slices(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Entrywise minimum `u ∧ v`.
pub fn meet(u: &Density, v: &Density) -> Result<SignedVector> {
    check_dim(u.dim(), v.dim())?;
    Ok(SignedVector {
        values: u
            .values
            .iter()
            .zip(&v.values)
            .map(|(a, b)| a.min(*b))
            .collect(),
    })
}

/// Normalized positive and negative parts of `u - v`.
///
/// `gplus = (u - u∧v) / (1 - ||u∧v||)` and likewise `gminus` with `v`, so
/// that `gplus - gminus = (u - v) / (1 - ||u∧v||)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gimel {
    pub gplus: Density,
    pub gminus: Density,
    /// The normalizer `1 - ||u∧v||_1`.
    pub scale: f64,
}

pub fn gimel(u: &Density, v: &Density) -> Result<Gimel> {
    let distance = l1_distance(u, v)?;
    if distance <= tol::IDENTITY {
        return Err(QsoError::DegenerateDifference { distance });
    }
    let m = meet(u, v)?;
    let scale = 1.0 - m.l1_norm();
    let plus = u
        .values
        .iter()
        .zip(m.values())
        .map(|(a, b)| (a - b) / scale)
        .collect();
    let minus = v
        .values
        .iter()
        .zip(m.values())
        .map(|(a, b)| (a - b) / scale)
        .collect();
    Ok(Gimel {
        gplus: Density::normalized(plus),
        gminus: Density::normalized(minus),
        scale,
    })
}

/// Draws from the symmetric Dirichlet distribution `Dir(alpha * 1_d)`.
pub fn sample_density(dim: usize, alpha: f64, rng_seed: u64) -> Result<Density> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    sample_density_with(&mut rng, dim, alpha)
}

/// As [`sample_density`] but drawing from a caller-owned generator.
pub fn sample_density_with<R: Rng + ?Sized>(
    rng: &mut R,
    dim: usize,
    alpha: f64,
) -> Result<Density> {
    if dim == 0 {
        return Err(QsoError::InvalidParameter("dimension must be >= 1".into()));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(QsoError::InvalidParameter(format!(
            "Dirichlet concentration must be positive, got {alpha}"
        )));
    }
    if dim == 1 {
        return Ok(Density { values: vec![1.0] });
    }
    let gamma = Gamma::new(alpha, 1.0)
        .map_err(|e| QsoError::InvalidParameter(format!("gamma({alpha}): {e}")))?;
    let values: Vec<f64> = (0..dim).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = values.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        Ok(Density::normalized(values))
    } else {
        // Every gamma draw underflowed (tiny alpha): the Dirichlet law is then
        // concentrated on vertices, so return a uniformly chosen one.
        Ok(Density::vertex(dim, rng.random_range(0..dim)))
    }
}

/// Result of a search over the simplex. `value` is a lower bound on the
/// supremum of the objective.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexMax {
    pub value: f64,
    pub argmax: Density,
}

const LINE_SEARCH_ITERS: usize = 40;
const MAX_SWEEPS: usize = 50;
const SWEEP_IMPROVEMENT: f64 = 1e-10;

/// Start points used by [`maximize_over_simplex`]: all vertices, all
/// midpoints of vertex pairs, then `starts` Dirichlet(1) draws. The draws for
/// `starts = k` are a prefix of those for `starts = k + 1`.
pub fn search_candidates(dim: usize, starts: usize, rng_seed: u64) -> Result<Vec<Density>> {
    if dim == 0 {
        return Err(QsoError::InvalidParameter("dimension must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(dim + dim * (dim - 1) / 2 + starts);
    out.extend((0..dim).map(|i| Density::vertex(dim, i)));
    for i in 0..dim {
        for j in (i + 1)..dim {
            let mut v = vec![0.0; dim];
            v[i] = 0.5;
            v[j] = 0.5;
            out.push(Density { values: v });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    for _ in 0..starts {
        out.push(sample_density_with(&mut rng, dim, 1.0)?);
    }
    Ok(out)
}

/// Pairwise mass-transfer hill climbing from `start`.
///
/// Each move shifts mass `t in [-f_i, f_j]` from coordinate `j` to `i`, with
/// `t` chosen by golden-section search plus the two endpoints. Sweeps over all
/// pairs repeat until a sweep improves the objective by less than `1e-10`.
pub fn refine<F>(phi: &F, start: &Density) -> Result<SimplexMax>
where
    F: Fn(&Density) -> Result<f64> + ?Sized,
{
    let dim = start.dim();
    let mut current = start.clone();
    let mut best = phi(&current)?;
    for _ in 0..MAX_SWEEPS {
        let before = best;
        for i in 0..dim {
            for j in (i + 1)..dim {
                let lo = -current.values[i];
                let hi = current.values[j];
                if hi - lo <= 0.0 {
                    continue;
                }
                let at = |t: f64| -> Result<(f64, Density)> {
                    let mut v = current.values.clone();
                    v[i] += t;
                    v[j] -= t;
                    let cand = Density::normalized(v);
                    Ok((phi(&cand)?, cand))
                };
                let mut local_best: Option<(f64, Density)> = None;
                let mut consider = |pair: (f64, Density)| {
                    if local_best.as_ref().is_none_or(|(b, _)| pair.0 > *b) {
                        local_best = Some(pair);
                    }
                };
                consider(at(lo)?);
                consider(at(hi)?);
                let golden = 0.5 * (5f64.sqrt() - 1.0);
                let (mut a, mut b) = (lo, hi);
                let mut c = b - golden * (b - a);
                let mut d = a + golden * (b - a);
                let mut fc = at(c)?;
                let mut fd = at(d)?;
                for _ in 0..LINE_SEARCH_ITERS {
                    if fc.0 >= fd.0 {
                        b = d;
                        d = c;
                        fd = fc;
                        c = b - golden * (b - a);
                        fc = at(c)?;
                    } else {
                        a = c;
                        c = d;
                        fc = fd;
                        d = a + golden * (b - a);
                        fd = at(d)?;
                    }
                }
                consider(fc);
                consider(fd);
                if let Some((val, cand)) = local_best {
                    if val > best {
                        best = val;
                        current = cand;
                    }
                }
            }
        }
        if best - before < SWEEP_IMPROVEMENT {
            break;
        }
    }
    Ok(SimplexMax {
        value: best,
        argmax: current,
    })
}

/// Best objective value over refined candidates; ties keep the earliest
/// candidate so results do not depend on scheduling.
pub fn maximize_from<F>(phi: &F, candidates: &[Density]) -> Result<SimplexMax>
where
    F: Fn(&Density) -> Result<f64> + Sync + ?Sized,
{
    let refined: Vec<SimplexMax> = candidates
        .par_iter()
        .map(|c| refine(phi, c))
        .collect::<Result<_>>()?;
    let mut it = refined.into_iter();
    let mut best = it
        .next()
        .ok_or_else(|| QsoError::InvalidParameter("no search candidates".into()))?;
    for r in it {
        if r.value > best.value {
            best = r;
        }
    }
    Ok(best)
}

/// Lower bound on `sup_{f in D} phi(f)` by multi-start pairwise hill climbing.
pub fn maximize_over_simplex<F>(
    phi: F,
    dim: usize,
    starts: usize,
    rng_seed: u64,
) -> Result<SimplexMax>
where
    F: Fn(&Density) -> Result<f64> + Sync,
{
    let candidates = search_candidates(dim, starts, rng_seed)?;
    maximize_from(&phi, &candidates)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(v: &[f64]) -> Density {
        Density::new(v.to_vec()).unwrap()
    }

    #[test]
    fn density_construction_clamps_and_rejects() {
        let x = Density::new(vec![-1e-13, 0.5, 0.5]).unwrap();
        assert_eq!(x.values()[0], 0.0);
        assert!(Density::new(vec![-0.01, 1.01]).is_err());
        assert!(Density::new(vec![0.5, 0.4]).is_err());
        assert!(Density::new(vec![f64::NAN, 1.0]).is_err());
        assert!(Density::new(vec![]).is_err());
        let y = Density::new(vec![0.5 + 4e-10, 0.5]).unwrap();
        assert!((y.values().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn l1_distance_examples() {
        let u = d(&[0.5, 0.5]);
        assert_eq!(l1_distance(&u, &u).unwrap(), 0.0);
        assert_eq!(
            l1_distance(&Density::vertex(2, 0), &Density::vertex(2, 1)).unwrap(),
            2.0
        );
        assert_eq!(l1_distance(&u, &d(&[0.25, 0.75])).unwrap(), 0.5);
        assert!(matches!(
            l1_distance(&u, &Density::uniform(3)),
            Err(QsoError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn meet_examples() {
        let u = d(&[0.7, 0.3]);
        let v = d(&[0.4, 0.6]);
        let m = meet(&u, &v).unwrap();
        assert_eq!(m.values(), &[0.4, 0.3]);
        assert!((m.l1_norm() - 0.7).abs() < 1e-15);
        assert_eq!(meet(&u, &u).unwrap().values(), u.values());
        let z = meet(&Density::vertex(2, 0), &Density::vertex(2, 1)).unwrap();
        assert_eq!(z.l1_norm(), 0.0);
    }

    #[test]
    fn gimel_examples() {
        let e1 = Density::vertex(2, 0);
        let e2 = Density::vertex(2, 1);
        let g = gimel(&e1, &e2).unwrap();
        assert_eq!(g.gplus, e1);
        assert_eq!(g.gminus, e2);

        let g = gimel(&d(&[0.7, 0.3]), &d(&[0.4, 0.6])).unwrap();
        assert!(l1_distance(&g.gplus, &e1).unwrap() < 1e-12);
        assert!(l1_distance(&g.gminus, &e2).unwrap() < 1e-12);

        assert!(matches!(
            gimel(&e1, &e1),
            Err(QsoError::DegenerateDifference { .. })
        ));
    }

    #[test]
    fn gimel_reconstruction_random() {
        for seed in 0..50 {
            let u = sample_density(5, 1.0, 2 * seed).unwrap();
            let v = sample_density(5, 1.0, 2 * seed + 1).unwrap();
            let g = gimel(&u, &v).unwrap();
            // Recompute (u - v) / (1 - ||u ∧ v||) directly.
            let mn: f64 = u
                .values()
                .iter()
                .zip(v.values())
                .map(|(a, b)| a.min(*b))
                .sum();
            for k in 0..5 {
                let want = (u.values()[k] - v.values()[k]) / (1.0 - mn);
                let got = g.gplus.values()[k] - g.gminus.values()[k];
                assert!((want - got).abs() < 1e-12, "seed {seed} k {k}");
            }
        }
    }

    #[test]
    fn sampling_edge_cases() {
        assert_eq!(sample_density(1, 0.3, 9).unwrap().values(), &[1.0]);
        let x = sample_density(3, 1.0, 42).unwrap();
        assert!((x.values().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(sample_density(0, 1.0, 0).is_err());
        assert!(sample_density(3, 0.0, 0).is_err());
        assert!(sample_density(3, -1.0, 0).is_err());
        let tiny = sample_density(4, 1e-300, 3).unwrap();
        assert!((tiny.values().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampling_is_reproducible() {
        let a = sample_density(6, 0.7, 123).unwrap();
        let b = sample_density(6, 0.7, 123).unwrap();
        let bits = |x: &Density| x.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn dirichlet_mean_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 100_000;
        let mut mean = [0.0; 4];
        for _ in 0..n {
            let x = sample_density_with(&mut rng, 4, 1.0).unwrap();
            for (m, v) in mean.iter_mut().zip(x.values()) {
                *m += v / n as f64;
            }
        }
        for m in mean {
            assert!((m - 0.25).abs() < 0.01, "mean {m}");
        }
    }

    #[test]
    fn maximize_constant_and_opposite_vertex() {
        let r = maximize_over_simplex(|_| Ok(3.5), 3, 2, 0).unwrap();
        assert_eq!(r.value, 3.5);

        let e1 = Density::vertex(3, 0);
        let r = maximize_over_simplex(|f| l1_distance(f, &e1), 3, 4, 1).unwrap();
        assert!((r.value - 2.0).abs() < 1e-12);
        assert!(r.argmax.values()[0] < 1e-12);
    }

    #[test]
    fn maximize_propagates_errors() {
        let r = maximize_over_simplex(|_| Err(QsoError::InvalidParameter("boom".into())), 2, 1, 0);
        assert!(r.is_err());
    }

    #[test]
    fn maximize_is_monotone_in_starts() {
        // A bumpy objective with several local maxima.
        let phi = |f: &Density| -> Result<f64> {
            let v = f.values();
            Ok((7.0 * v[0]).sin() * (5.0 * v[1]).cos() + (11.0 * v[2] * v[3]).sin())
        };
        let mut last = f64::NEG_INFINITY;
        for starts in [0, 1, 3, 8] {
            let r = maximize_over_simplex(phi, 4, starts, 77).unwrap();
            assert!(r.value >= last);
            last = r.value;
        }
    }

    #[test]
    fn candidate_prefix_property() {
        let a = search_candidates(4, 3, 5).unwrap();
        let b = search_candidates(4, 6, 5).unwrap();
        assert_eq!(&b[..a.len()], &a[..]);
    }
}
