//! Named operators, the convex perturbation towards a constant operator,
//! random samplers and the partition coarsening map.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chain::StochasticMatrix;
use crate::error::{check_dim, QsoError, Result};
use crate::metrics::hat_du_exact;
use crate::qso::Qso;
use crate::simplex::{sample_density_with, Density};

/// Constant operator `Q(f, g) = (sum f)(sum g) anchor`.
pub fn make_q_diamond(anchor: &Density) -> Result<Qso> {
    let v = anchor.values();
    Qso::from_fn(anchor.dim(), true, |_, _, k| v[k])
}

/// Nonsymmetric projection `Q(f, g) = f (sum g)`.
pub fn make_q_flat(dim: usize) -> Result<Qso> {
    Qso::from_fn(dim, false, |i, _, k| if k == i { 1.0 } else { 0.0 })
}

/// Nonsymmetric projection `Q(f, g) = g (sum f)`.
pub fn make_q_sharp(dim: usize) -> Result<Qso> {
    Qso::from_fn(dim, false, |_, j, k| if k == j { 1.0 } else { 0.0 })
}

/// `Q(f, g) = ((sum g) P f + (sum f) P g) / 2`, i.e.
/// `q[i][j][k] = (P_ki + P_kj) / 2`.
pub fn make_markov_averaging(p: &StochasticMatrix) -> Result<Qso> {
    Qso::from_fn(p.dim(), true, |i, j, k| {
        0.5 * (p.entry(k, i) + p.entry(k, j))
    })
}

/// Two-block operator with blocks `B1 = {0..split}` and `B2 = {split..dim}`.
///
/// The output is `h1 = h 1_{B1} / sum_{B1} h` whenever either argument index
/// lies in `B1`, and `h2 = h 1_{B2} / sum_{B2} h` when both lie in `B2`. `h`
/// must be nonnegative with positive mass on each block.
pub fn make_block_example(dim: usize, split: usize, h: &[f64]) -> Result<Qso> {
    if split == 0 || split >= dim {
        return Err(QsoError::InvalidParameter(format!(
            "split must satisfy 1 <= split < dim, got split={split}, dim={dim}"
        )));
    }
    check_dim(dim, h.len())?;
    if h.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(QsoError::InvalidParameter(
            "h must be finite and nonnegative".into(),
        ));
    }
    let m1: f64 = h[..split].iter().sum();
    let m2: f64 = h[split..].iter().sum();
    if m1 <= 0.0 || m2 <= 0.0 {
        return Err(QsoError::InvalidParameter(
            "h needs positive mass on both blocks".into(),
        ));
    }
    Qso::from_fn(dim, true, |i, j, k| {
        let both_in_b2 = i >= split && j >= split;
        match (both_in_b2, k >= split) {
            (false, false) => h[k] / m1,
            (true, true) => h[k] / m2,
            _ => 0.0,
        }
    })
}

/// The default two-block instance: `dim = 4`, `split = 2`, uniform `h`.
pub fn default_block_example() -> Qso {
    make_block_example(4, 2, &[1.0; 4]).expect("valid default parameters")
}

/// `(1 - eps) Q + eps Q_diamond(anchor)`, for `0 < eps < 1`.
pub fn perturb(q: &Qso, epsilon: f64, anchor: &Density) -> Result<Qso> {
    check_dim(q.dim(), anchor.dim())?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(QsoError::InvalidParameter(format!(
            "perturbation radius must lie in (0, 1), got {epsilon}"
        )));
    }
    let v = anchor.values();
    Qso::from_fn(q.dim(), q.is_symmetric(), |i, j, k| {
        (1.0 - epsilon) * q.entry(i, j, k) + epsilon * v[k]
    })
}

/// Random symmetric operator: every column `q[i][j][.]` with `i <= j` is an
/// independent `Dir(alpha)` draw, mirrored to `(j, i)`.
pub fn sample_qso(dim: usize, alpha: f64, rng_seed: u64) -> Result<Qso> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    sample_qso_with(&mut rng, dim, alpha)
}

pub fn sample_qso_with<R: Rng + ?Sized>(rng: &mut R, dim: usize, alpha: f64) -> Result<Qso> {
    if dim == 0 {
        return Err(QsoError::InvalidParameter("dimension must be >= 1".into()));
    }
    let mut q = vec![0.0; dim * dim * dim];
    for i in 0..dim {
        for j in i..dim {
            let col = sample_density_with(rng, dim, alpha)?;
            q[(i * dim + j) * dim..(i * dim + j + 1) * dim].copy_from_slice(col.values());
            q[(j * dim + i) * dim..(j * dim + i + 1) * dim].copy_from_slice(col.values());
        }
    }
    Qso::from_flat(dim, q, true)
}

/// Random column-stochastic matrix with `Dir(alpha)` columns.
pub fn sample_stochastic_matrix(dim: usize, alpha: f64, rng_seed: u64) -> Result<StochasticMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let cols = (0..dim)
        .map(|_| sample_density_with(&mut rng, dim, alpha))
        .collect::<Result<Vec<_>>>()?;
    StochasticMatrix::from_columns(cols)
}

/// A partition of fine indices `0..fine_dim` into ordered blocks, with a
/// positive measure on every fine cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    fine_dim: usize,
    blocks: Vec<Vec<usize>>,
    weights: Vec<f64>,
    block_of: Vec<usize>,
}

impl Partition {
    pub fn new(fine_dim: usize, blocks: Vec<Vec<usize>>, weights: Vec<f64>) -> Result<Self> {
        if fine_dim == 0 {
            return Err(QsoError::InvalidPartition(
                "fine dimension must be >= 1".into(),
            ));
        }
        if weights.len() != fine_dim {
            return Err(QsoError::InvalidPartition(format!(
                "expected {fine_dim} cell weights, found {}",
                weights.len()
            )));
        }
        if let Some(c) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(QsoError::InvalidPartition(format!(
                "cell {} has non-positive weight {}",
                c + 1,
                weights[c]
            )));
        }
        let mut block_of = vec![usize::MAX; fine_dim];
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(QsoError::InvalidPartition(format!(
                    "block {} is empty",
                    b + 1
                )));
            }
            for &c in block {
                if c >= fine_dim {
                    return Err(QsoError::InvalidPartition(format!(
                        "cell {} out of range 1..={fine_dim}",
                        c + 1
                    )));
                }
                if block_of[c] != usize::MAX {
                    return Err(QsoError::InvalidPartition(format!(
                        "cell {} appears in more than one block",
                        c + 1
                    )));
                }
                block_of[c] = b;
            }
        }
        if let Some(c) = block_of.iter().position(|b| *b == usize::MAX) {
            return Err(QsoError::InvalidPartition(format!(
                "cell {} is not covered",
                c + 1
            )));
        }
        Ok(Self {
            fine_dim,
            blocks,
            weights,
            block_of,
        })
    }

    /// Contiguous blocks with unit weights.
    pub fn unit(fine_dim: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        Self::new(fine_dim, blocks, vec![1.0; fine_dim])
    }

    pub fn singletons(fine_dim: usize) -> Self {
        Self::unit(fine_dim, (0..fine_dim).map(|c| vec![c]).collect()).expect("valid")
    }

    pub fn one_block(fine_dim: usize) -> Self {
        Self::unit(fine_dim, vec![(0..fine_dim).collect()]).expect("valid")
    }

    pub fn fine_dim(&self) -> usize {
        self.fine_dim
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn block_of(&self, cell: usize) -> usize {
        self.block_of[cell]
    }

    pub fn block_weight(&self, b: usize) -> f64 {
        self.blocks[b].iter().map(|&c| self.weights[c]).sum()
    }

    /// Piecewise-constant fine density of block `b`: `mu_c / mu(B_b)` on its
    /// cells, zero elsewhere.
    pub fn lift_block(&self, b: usize) -> Density {
        let total = self.block_weight(b);
        let mut v = vec![0.0; self.fine_dim];
        for &c in &self.blocks[b] {
            v[c] = self.weights[c] / total;
        }
        Density::normalized(v)
    }

    /// Block masses of a fine density.
    pub fn coarsen_density(&self, f: &Density) -> Result<Density> {
        check_dim(self.fine_dim, f.dim())?;
        let mut v = vec![0.0; self.num_blocks()];
        for (c, x) in f.values().iter().enumerate() {
            v[self.block_of[c]] += x;
        }
        Ok(Density::normalized(v))
    }
}

/// The coarsened operator on block indices:
/// `q̄[I][J][K] = sum_{i in I, j in J, k in K} w_i w_j q[i][j][k]` with
/// `w_c = mu_c / mu(block of c)`.
pub fn coarsen(q: &Qso, part: &Partition) -> Result<Qso> {
    check_dim(part.fine_dim(), q.dim())?;
    let k_dim = part.num_blocks();
    let rel: Vec<f64> = (0..part.fine_dim())
        .map(|c| part.weights()[c] / part.block_weight(part.block_of(c)))
        .collect();
    let mut out = vec![0.0; k_dim * k_dim * k_dim];
    for (bi, bl_i) in part.blocks().iter().enumerate() {
        for (bj, bl_j) in part.blocks().iter().enumerate() {
            let dst = &mut out[(bi * k_dim + bj) * k_dim..(bi * k_dim + bj + 1) * k_dim];
            for &i in bl_i {
                for &j in bl_j {
                    let w = rel[i] * rel[j];
                    for (k, v) in q.column(i, j).iter().enumerate() {
                        dst[part.block_of(k)] += w * v;
                    }
                }
            }
        }
    }
    Qso::from_flat(k_dim, out, q.is_symmetric())
}

/// `(coarse, fine)` uniform bilinear distances before and after coarsening.
/// Coarsening never increases the distance.
pub fn coarsen_lipschitz_check(q1: &Qso, q2: &Qso, part: &Partition) -> Result<(f64, f64)> {
    let fine = hat_du_exact(q1, q2)?.value;
    let coarse = hat_du_exact(&coarsen(q1, part)?, &coarsen(q2, part)?)?.value;
    Ok((coarse, fine))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex::{l1_distance, sample_density};

    fn max_entry_diff(a: &Qso, b: &Qso) -> f64 {
        a.as_flat()
            .iter()
            .zip(b.as_flat())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn diamond_examples() {
        let q = make_q_diamond(&Density::vertex(2, 0)).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(q.column(i, j), &[1.0, 0.0]);
            }
        }
        assert!(q.is_symmetric());
    }

    #[test]
    fn flat_sharp_examples() {
        let flat = make_q_flat(3).unwrap();
        let sharp = make_q_sharp(3).unwrap();
        assert!(!flat.is_symmetric() && !sharp.is_symmetric());
        let x = sample_density(3, 1.0, 1).unwrap();
        let y = sample_density(3, 1.0, 2).unwrap();
        assert!(l1_distance(&flat.apply(&x, &y).unwrap(), &x).unwrap() < 1e-15);
        assert!(l1_distance(&sharp.apply(&x, &y).unwrap(), &y).unwrap() < 1e-15);
        assert_eq!(make_q_flat(1).unwrap(), make_q_sharp(1).unwrap());
    }

    #[test]
    fn averaging_with_identity() {
        let q = make_markov_averaging(&StochasticMatrix::identity(3)).unwrap();
        assert_eq!(q.column(0, 1), &[0.5, 0.5, 0.0]);
        let x = sample_density(3, 1.0, 3).unwrap();
        let y = sample_density(3, 1.0, 4).unwrap();
        let want = x.mix(&y, 0.5).unwrap();
        assert!(l1_distance(&q.apply(&x, &y).unwrap(), &want).unwrap() < 1e-15);
    }

    #[test]
    fn block_example_structure() {
        let q = make_block_example(5, 2, &[1.0, 3.0, 1.0, 1.0, 2.0]).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let col = q.column(i, j);
                let b2_mass: f64 = col[2..].iter().sum();
                if i >= 2 && j >= 2 {
                    assert_eq!(b2_mass, 1.0);
                } else {
                    assert_eq!(b2_mass, 0.0);
                    assert!((col[1] - 0.75).abs() < 1e-15);
                }
            }
        }
        // f supported in B1 maps everything to h1.
        let f = Density::new(vec![0.3, 0.7, 0.0, 0.0, 0.0]).unwrap();
        let g = sample_density(5, 1.0, 9).unwrap();
        let h1 = Density::new(vec![0.25, 0.75, 0.0, 0.0, 0.0]).unwrap();
        assert!(l1_distance(&q.apply(&f, &g).unwrap(), &h1).unwrap() < 1e-15);

        assert!(make_block_example(4, 0, &[1.0; 4]).is_err());
        assert!(make_block_example(4, 4, &[1.0; 4]).is_err());
        assert!(make_block_example(4, 2, &[1.0, 1.0, 0.0, 0.0]).is_err());
        assert!(make_block_example(4, 2, &[1.0; 3]).is_err());
    }

    #[test]
    fn block_example_trajectory_is_constant_in_b2() {
        let q = default_block_example();
        let f = Density::new(vec![0.0, 0.0, 0.4, 0.6]).unwrap();
        let h2 = Density::new(vec![0.0, 0.0, 0.5, 0.5]).unwrap();
        let traj = q.iterate(&f, 6).unwrap();
        for x in &traj[1..] {
            assert!(l1_distance(x, &h2).unwrap() < 1e-15);
        }
    }

    #[test]
    fn perturb_is_affine_and_close() {
        let v = Density::uniform(4);
        let diamond = make_q_diamond(&v).unwrap();
        for s in 0..100 {
            let q = sample_qso(4, 1.0, s).unwrap();
            let p = perturb(&q, 0.1, &v).unwrap();
            for ((a, b), c) in p.as_flat().iter().zip(q.as_flat()).zip(diamond.as_flat()) {
                assert!((a - (0.9 * b + 0.1 * c)).abs() < 1e-15);
            }
            assert!(hat_du_exact(&q, &p).unwrap().value <= 0.2 + 1e-12);
        }
        let q = sample_qso(3, 1.0, 0).unwrap();
        assert!(perturb(&q, 0.0, &Density::uniform(3)).is_err());
        assert!(perturb(&q, 1.0, &Density::uniform(3)).is_err());
        assert!(perturb(&q, 0.5, &Density::uniform(2)).is_err());
    }

    #[test]
    fn perturb_of_symmetrized_flat() {
        // (Q_flat + Q_sharp) / 2 is the averaging operator of the identity.
        let sym = make_markov_averaging(&StochasticMatrix::identity(3)).unwrap();
        let v = Density::vertex(3, 2);
        let p = perturb(&sym, 0.5, &v).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    let want = 0.5 * sym.entry(i, j, k) + 0.5 * v.values()[k];
                    assert!((p.entry(i, j, k) - want).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn sample_qso_examples() {
        let one = sample_qso(1, 0.5, 4).unwrap();
        assert_eq!(one.as_flat(), &[1.0]);
        for s in 0..1000 {
            let q = sample_qso(6, 1.0, s).unwrap();
            assert!(Qso::from_flat(6, q.as_flat().to_vec(), true).is_ok());
        }
        assert!(sample_qso(0, 1.0, 0).is_err());
        assert!(sample_qso(3, 0.0, 0).is_err());
    }

    #[test]
    fn sample_qso_concentrates_for_large_alpha() {
        let d = 3;
        let n = 10_000;
        let mut mean = vec![0.0; d];
        for s in 0..n {
            let q = sample_qso(d, 200.0, s).unwrap();
            for (m, v) in mean.iter_mut().zip(q.column(0, 1)) {
                *m += v / n as f64;
            }
        }
        for m in mean {
            assert!((m - 1.0 / d as f64).abs() < 0.01);
        }
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::unit(3, vec![vec![0, 1], vec![2]]).is_ok());
        assert!(Partition::unit(3, vec![vec![0, 1], vec![]]).is_err());
        assert!(Partition::unit(3, vec![vec![0, 1], vec![1, 2]]).is_err());
        assert!(Partition::unit(3, vec![vec![0, 1]]).is_err());
        assert!(Partition::unit(3, vec![vec![0, 1, 3]]).is_err());
        assert!(Partition::new(2, vec![vec![0, 1]], vec![1.0, 0.0]).is_err());
        assert!(Partition::new(2, vec![vec![0, 1]], vec![1.0]).is_err());
    }

    #[test]
    fn coarsen_singleton_and_one_block() {
        let q = sample_qso(5, 1.0, 3).unwrap();
        let same = coarsen(&q, &Partition::singletons(5)).unwrap();
        let bits = |x: &Qso| x.as_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&same), bits(&q));
        let one = coarsen(&q, &Partition::one_block(5)).unwrap();
        assert_eq!(one.as_flat(), &[1.0]);
        assert!(coarsen(&q, &Partition::singletons(4)).is_err());
    }

    #[test]
    fn coarsen_matches_direct_evaluation() {
        let part = Partition::unit(6, vec![vec![0, 1, 2], vec![3, 4, 5]]).unwrap();
        let weighted = Partition::new(
            6,
            vec![vec![0, 4], vec![1, 2, 5], vec![3]],
            vec![1.0, 2.0, 0.5, 3.0, 1.5, 1.0],
        )
        .unwrap();
        for s in 0..20 {
            let q = sample_qso(6, 0.8, s).unwrap();
            for p in [&part, &weighted] {
                let c = coarsen(&q, p).unwrap();
                for bi in 0..p.num_blocks() {
                    for bj in 0..p.num_blocks() {
                        let out = q.apply(&p.lift_block(bi), &p.lift_block(bj)).unwrap();
                        let sums = p.coarsen_density(&out).unwrap();
                        for bk in 0..p.num_blocks() {
                            assert!((c.entry(bi, bj, bk) - sums.values()[bk]).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn coarsen_commutes_with_perturbation() {
        let part = Partition::new(
            5,
            vec![vec![0, 3], vec![1, 2, 4]],
            vec![1.0, 2.0, 3.0, 0.5, 1.0],
        )
        .unwrap();
        for s in 0..20 {
            let q = sample_qso(5, 1.0, s).unwrap();
            let v = sample_density(5, 1.0, 500 + s).unwrap();
            let lhs = coarsen(&perturb(&q, 0.3, &v).unwrap(), &part).unwrap();
            let rhs = perturb(
                &coarsen(&q, &part).unwrap(),
                0.3,
                &part.coarsen_density(&v).unwrap(),
            )
            .unwrap();
            assert!(max_entry_diff(&lhs, &rhs) < 1e-12);
        }
    }

    #[test]
    fn coarsen_lipschitz_examples() {
        let part = Partition::unit(6, vec![vec![0, 1], vec![2, 3, 4], vec![5]]).unwrap();
        let q = sample_qso(6, 1.0, 1).unwrap();
        assert_eq!(coarsen_lipschitz_check(&q, &q, &part).unwrap(), (0.0, 0.0));
        let q2 = sample_qso(6, 1.0, 2).unwrap();
        let (coarse, fine) = coarsen_lipschitz_check(&q, &q2, &Partition::one_block(6)).unwrap();
        assert!(coarse < 1e-15);
        assert!(fine > 0.0);
    }
}
