//! Mixing diagnostics for the associated chains.
//!
//! The central quantity is
//! `delta_n = sup_{f,g,h} ||P_f^{[0,n]} g - P_f^{[0,n]} h||_1`, which is
//! non-increasing in `n`. An operator is norm quasi-mixing iff some
//! `delta_n < 2`; then `delta_{jn} <= 2 (1 - eps/2)^j` with
//! `eps = 2 - delta_n`.
//!
//! Only two routes produce certificates: the exact vertex formula for
//! `delta_1`, and an exact combinatorial witness of two disjoint absorbing
//! supports (which forces `delta_n = 2` for every `n`). Search-based
//! estimates of `delta_n`, `n >= 2`, are lower bounds and only ever lower
//! confidence. A grid mode with an explicit Lipschitz remainder certifies
//! `delta_n < 2` for `d <= 3`, `n <= 4`.

use std::fmt;
use std::fmt::Write as _;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::chain::{window, ChainStepper, StochasticMatrix};
use crate::constructions::make_q_diamond;
use crate::error::{QsoError, Result};
use crate::metrics::{format_vector, hat_du_exact};
use crate::qso::Qso;
use crate::simplex::{
    l1_distance, l1_slices, refine, sample_density_with, search_candidates, Density,
};

/// Margin below 2 required of `delta_1` for a certificate.
pub const CERTIFY_MARGIN: f64 = 1e-9;
/// Estimates must fall below `2 - LIKELY_MARGIN` for a `LikelyYes` verdict.
pub const LIKELY_MARGIN: f64 = 0.05;
/// Largest dimension and horizon accepted by [`grid_certify`].
pub const GRID_MAX_DIM: usize = 3;
pub const GRID_MAX_HORIZON: usize = 4;

/// `max_{i<j} ||col_i - col_j||_1`, the sup over density pairs of
/// `||M g - M h||_1`.
pub fn delta_coeff(m: &StochasticMatrix) -> f64 {
    delta_coeff_with_witness(m).0
}

pub fn delta_coeff_with_witness(m: &StochasticMatrix) -> (f64, (usize, usize)) {
    let cols = m.columns();
    let mut best = (0.0, (0, 0));
    for i in 0..cols.len() {
        for j in (i + 1)..cols.len() {
            let v = l1_slices(cols[i].values(), cols[j].values());
            if v > best.0 {
                best = (v, (i, j));
            }
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Delta1 {
    pub value: f64,
    /// `(m, i, j)`: seed vertex and the argument pair, zero-based.
    pub witness: (usize, usize, usize),
}

/// Exact `delta_1 = max_{m, i<j} sum_k |q[m][i][k] - q[m][j][k]|`.
pub fn delta1_exact(q: &Qso) -> Delta1 {
    let d = q.dim();
    let mut best = Delta1 {
        value: 0.0,
        witness: (0, 0, 0),
    };
    for m in 0..d {
        for i in 0..d {
            for j in (i + 1)..d {
                let v = l1_slices(q.column(m, i), q.column(m, j));
                if v > best.value {
                    best = Delta1 {
                        value: v,
                        witness: (m, i, j),
                    };
                }
            }
        }
    }
    best
}

fn delta_at(q: &Qso, f: &Density, n: usize) -> Result<f64> {
    let mut s = ChainStepper::new(q, f)?;
    for _ in 1..n {
        s.advance()?;
    }
    Ok(delta_coeff(s.advance()?))
}

/// `[delta(P_f^{[0,1]}), ..., delta(P_f^{[0,horizon]})]` for one seed.
pub fn seed_delta_trajectory(q: &Qso, f: &Density, horizon: usize) -> Result<Vec<f64>> {
    let mut s = ChainStepper::new(q, f)?;
    (0..horizon)
        .map(|_| Ok(delta_coeff(s.advance()?)))
        .collect()
}

/// Lower-bound estimates of `delta_1, ..., delta_horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaProfile {
    /// `estimates[n - 1]` bounds `delta_n` from below.
    pub estimates: Vec<f64>,
    /// Seed density attaining each estimate.
    pub argmax: Vec<Density>,
}

impl DeltaProfile {
    pub fn at(&self, n: usize) -> f64 {
        self.estimates[n - 1]
    }

    pub fn horizon(&self) -> usize {
        self.estimates.len()
    }
}

/// Search-based profile of `delta_n` for `n = 1..=horizon`.
///
/// Seeds are refined by hill climbing separately for every horizon; all
/// refined seeds then form one shared pool and each `delta_n` estimate is the
/// best pool value at that horizon. Since `delta(P_f^{[0,n]})` is
/// non-increasing in `n` for every fixed seed, the pooled estimates are
/// non-increasing too.
pub fn delta_profile(
    q: &Qso,
    horizon: usize,
    starts: usize,
    rng_seed: u64,
) -> Result<DeltaProfile> {
    if horizon == 0 {
        return Err(QsoError::InvalidParameter("horizon must be >= 1".into()));
    }
    let candidates = search_candidates(q.dim(), starts, rng_seed)?;
    let mut pool = candidates.clone();
    for n in 1..=horizon {
        let objective = |f: &Density| delta_at(q, f, n);
        let refined = candidates
            .par_iter()
            .map(|c| refine(&objective, c).map(|r| r.argmax))
            .collect::<Result<Vec<_>>>()?;
        pool.extend(refined);
    }
    pool_profile(q, &pool, horizon)
}

fn pool_profile(q: &Qso, pool: &[Density], horizon: usize) -> Result<DeltaProfile> {
    let trajectories = pool
        .par_iter()
        .map(|f| seed_delta_trajectory(q, f, horizon))
        .collect::<Result<Vec<_>>>()?;
    let mut estimates = vec![f64::NEG_INFINITY; horizon];
    let mut argmax = vec![pool[0].clone(); horizon];
    for (f, traj) in pool.iter().zip(&trajectories) {
        for n in 0..horizon {
            if traj[n] > estimates[n] {
                estimates[n] = traj[n];
                argmax[n] = f.clone();
            }
        }
    }
    Ok(DeltaProfile { estimates, argmax })
}

/// Lower bound on `delta_n`: the `n`-th entry of [`delta_profile`].
pub fn delta_n_estimate(q: &Qso, n: usize, starts: usize, rng_seed: u64) -> Result<f64> {
    Ok(delta_profile(q, n, starts, rng_seed)?.at(n))
}

/// Exact witness that the operator is not norm quasi-mixing.
///
/// `seed_set` is closed under the operator (`q[a][b]` is supported in it for
/// all `a, b` in it), so any seed supported there keeps its trajectory there.
/// Every transition matrix along such a trajectory maps densities supported
/// in `block_a` (resp. `block_b`) to densities supported in the same block;
/// the blocks are disjoint, so `delta_n = 2` for every `n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockWitness {
    pub seed_vertex: usize,
    pub seed_set: Vec<usize>,
    pub block_a: Vec<usize>,
    pub block_b: Vec<usize>,
}

/// Searches for a [`BlockWitness`].
///
/// Every closed set contains the closure of one of its vertices, and a
/// smaller seed set only removes transitions, so it suffices to examine the
/// `d` vertex closures. For each, the invariant blocks are the closed
/// communicating classes of the support graph `j -> k` iff
/// `q[a][j][k] > 0` for some `a` in the seed set.
pub fn find_block_witness(q: &Qso) -> Option<BlockWitness> {
    let d = q.dim();
    let mut seen: Vec<Vec<bool>> = Vec::new();
    for m in 0..d {
        let closed = vertex_closure(q, m);
        if seen.contains(&closed) {
            continue;
        }
        let members: Vec<usize> = (0..d).filter(|&a| closed[a]).collect();
        let mut adj = vec![vec![false; d]; d];
        for (j, row) in adj.iter_mut().enumerate() {
            for &a in &members {
                for (k, v) in q.column(a, j).iter().enumerate() {
                    if *v > 0.0 {
                        row[k] = true;
                    }
                }
            }
        }
        let classes = closed_classes(&adj);
        if classes.len() >= 2 {
            return Some(BlockWitness {
                seed_vertex: m,
                seed_set: members,
                block_a: classes[0].clone(),
                block_b: classes[1].clone(),
            });
        }
        seen.push(closed);
    }
    None
}

fn vertex_closure(q: &Qso, m: usize) -> Vec<bool> {
    let d = q.dim();
    let mut inside = vec![false; d];
    inside[m] = true;
    let mut changed = true;
    while changed {
        changed = false;
        let members: Vec<usize> = (0..d).filter(|&a| inside[a]).collect();
        for &a in &members {
            for &b in &members {
                for (k, v) in q.column(a, b).iter().enumerate() {
                    if *v > 0.0 && !inside[k] {
                        inside[k] = true;
                        changed = true;
                    }
                }
            }
        }
    }
    inside
}

/// Closed communicating classes, ordered by their smallest member.
fn closed_classes(adj: &[Vec<bool>]) -> Vec<Vec<usize>> {
    let d = adj.len();
    let mut g = DiGraph::<(), ()>::with_capacity(d, d * d);
    let nodes: Vec<_> = (0..d).map(|_| g.add_node(())).collect();
    for (j, row) in adj.iter().enumerate() {
        for (k, &e) in row.iter().enumerate() {
            if e {
                g.add_edge(nodes[j], nodes[k], ());
            }
        }
    }
    let mut out: Vec<Vec<usize>> = tarjan_scc(&g)
        .into_iter()
        .map(|c| {
            let mut c: Vec<usize> = c.into_iter().map(|n| n.index()).collect();
            c.sort_unstable();
            c
        })
        .filter(|c| {
            c.iter()
                .all(|&j| (0..d).all(|k| !adj[j][k] || c.binary_search(&k).is_ok()))
        })
        .collect();
    out.sort_unstable();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    CertifiedYes,
    CertifiedNo,
    LikelyYes,
    Unknown,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Verdict::CertifiedYes => "CertifiedYes",
            Verdict::CertifiedNo => "CertifiedNo",
            Verdict::LikelyYes => "LikelyYes",
            Verdict::Unknown => "Unknown",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CertificateMethod {
    Delta1Exact,
    Grid { resolution: usize, lipschitz: f64 },
}

/// `delta_horizon <= 2 - gap`. The half-coefficient `delta / 2` is
/// submultiplicative over window products, so
/// `delta_{j horizon} <= 2 (1 - gap/2)^j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuasiCertificate {
    pub horizon: usize,
    pub gap: f64,
    pub method: CertificateMethod,
}

impl QuasiCertificate {
    /// Guaranteed upper bound on `delta_n`.
    pub fn bound(&self, n: usize) -> f64 {
        let blocks = n / self.horizon;
        let rate = (1.0 - self.gap / 2.0).max(0.0);
        2.0 * rate.powi(blocks as i32)
    }
}

/// Certificates that need no search: the exact `delta_1` and the block
/// witness.
#[derive(Debug, Clone, PartialEq)]
pub struct Certification {
    pub delta1: Delta1,
    pub verdict: Option<Verdict>,
    pub certificate: Option<QuasiCertificate>,
    pub refutation: Option<BlockWitness>,
}

pub fn certify(q: &Qso) -> Certification {
    let delta1 = delta1_exact(q);
    if delta1.value < 2.0 - CERTIFY_MARGIN {
        return Certification {
            delta1,
            verdict: Some(Verdict::CertifiedYes),
            certificate: Some(QuasiCertificate {
                horizon: 1,
                gap: 2.0 - delta1.value,
                method: CertificateMethod::Delta1Exact,
            }),
            refutation: None,
        };
    }
    let refutation = find_block_witness(q);
    Certification {
        delta1,
        verdict: refutation.as_ref().map(|_| Verdict::CertifiedNo),
        certificate: None,
        refutation,
    }
}

/// Grid evaluation of `delta_n` with a Lipschitz remainder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridBound {
    pub grid_max: f64,
    /// Lipschitz constant of `f -> delta(P_f^{[0,n]})` in l1: `2 (2^n - 1)`.
    pub lipschitz: f64,
    /// l1 covering radius of the grid: `2 floor(d/2) / resolution`.
    pub radius: f64,
    /// Certified `delta_n <= upper`.
    pub upper: f64,
}

/// Certified upper bound on `delta_n` from the barycentric grid with step
/// `1 / resolution`.
pub fn grid_certify(q: &Qso, n: usize, resolution: usize) -> Result<GridBound> {
    let d = q.dim();
    if d > GRID_MAX_DIM || n == 0 || n > GRID_MAX_HORIZON || resolution == 0 {
        return Err(QsoError::InvalidParameter(format!(
            "grid mode needs d <= {GRID_MAX_DIM}, 1 <= n <= {GRID_MAX_HORIZON}, resolution >= 1"
        )));
    }
    let points = grid_points(d, resolution);
    let grid_max = points
        .par_iter()
        .map(|f| delta_at(q, f, n))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let lipschitz = 2.0 * ((1u64 << n) - 1) as f64;
    let radius = 2.0 * (d / 2) as f64 / resolution as f64;
    Ok(GridBound {
        grid_max,
        lipschitz,
        radius,
        upper: (grid_max + lipschitz * radius).min(2.0),
    })
}

fn grid_points(d: usize, resolution: usize) -> Vec<Density> {
    fn rec(d: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == d - 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in 0..=left {
            prefix.push(k);
            rec(d, left - k, prefix, out);
            prefix.pop();
        }
    }
    let mut raw = Vec::new();
    rec(d, resolution, &mut Vec::new(), &mut raw);
    raw.into_iter()
        .map(|c| {
            Density::normalized(
                c.into_iter()
                    .map(|k| k as f64 / resolution as f64)
                    .collect(),
            )
        })
        .collect()
}

/// Norm-mixing certificate from proximity to a constant operator:
/// `hat_du(Q, Q_diamond(anchor)) = eps < 1/3` makes `Q(f) = Q(f, f)` a
/// `3 eps`-contraction on its image, with
/// `diam Q^n(D) <= 2 (3 eps)^{n-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BallCertificate {
    pub anchor: Density,
    pub epsilon: f64,
    pub rate: f64,
}

impl BallCertificate {
    pub fn diameter_bound(&self, n: usize) -> f64 {
        if n == 0 {
            return 2.0;
        }
        2.0 * self.rate.powi(n as i32 - 1)
    }

    /// Smallest horizon with `2 (3 eps)^{n-1} < tol`.
    pub fn implied_horizon(&self, tol: f64) -> usize {
        ball_implied_horizon(self.epsilon, tol)
    }
}

pub fn ball_implied_horizon(epsilon: f64, tol: f64) -> usize {
    if epsilon == 0.0 {
        return 1;
    }
    let rate = 3.0 * epsilon;
    let mut n = 1usize;
    while 2.0 * rate.powi(n as i32 - 1) >= tol {
        n += 1;
        if n > 100_000 {
            break;
        }
    }
    n
}

pub fn check_diamond_ball(q: &Qso, anchor: &Density) -> Result<Option<BallCertificate>> {
    let diamond = make_q_diamond(anchor)?;
    let eps = hat_du_exact(q, &diamond)?.value;
    Ok((eps < 1.0 / 3.0).then(|| BallCertificate {
        anchor: anchor.clone(),
        epsilon: eps,
        rate: 3.0 * eps,
    }))
}

/// Tries `Q(barycenter)` and every vertex as anchors; returns the certificate
/// with the smallest radius.
pub fn diamond_ball_sweep(q: &Qso) -> Result<Option<BallCertificate>> {
    let d = q.dim();
    let mut anchors = vec![q.diag(&Density::uniform(d))?];
    anchors.extend((0..d).map(|i| Density::vertex(d, i)));
    let mut best: Option<BallCertificate> = None;
    for a in &anchors {
        if let Some(c) = check_diamond_ball(q, a)? {
            if best.as_ref().is_none_or(|b| c.epsilon < b.epsilon) {
                best = Some(c);
            }
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassSummary {
    pub class: &'static str,
    pub residual: f64,
    pub consistent: bool,
}

/// Finite-horizon residuals; these are observations, never certificates.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalSummary {
    pub horizon: usize,
    pub tol: f64,
    pub seeds_used: usize,
    /// Mean of the endpoint iterates, the putative common limit.
    pub limit: Density,
    /// `max_g ||Q^n(g) - limit||_1`.
    pub norm_residual: f64,
    /// `max_{g,h} ||Q^n(g) - Q^n(h)||_1`.
    pub strong_almost_residual: f64,
    /// The `delta_n` estimate at the horizon.
    pub quasi_residual: f64,
    pub classes: Vec<ClassSummary>,
}

fn empirical_seeds(d: usize, seeds: usize, rng_seed: u64) -> Result<Vec<Density>> {
    let mut out: Vec<Density> = (0..d).map(|i| Density::vertex(d, i)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    for _ in 0..seeds {
        out.push(sample_density_with(&mut rng, d, 1.0)?);
    }
    Ok(out)
}

fn mean_density(points: &[Density]) -> Density {
    let d = points[0].dim();
    let mut m = vec![0.0; d];
    for p in points {
        for (a, b) in m.iter_mut().zip(p.values()) {
            *a += b;
        }
    }
    let n = points.len() as f64;
    Density::normalized(m.into_iter().map(|v| v / n).collect())
}

pub fn empirical_mixing(
    q: &Qso,
    horizon: usize,
    seeds: usize,
    rng_seed: u64,
    tol: f64,
) -> Result<EmpiricalSummary> {
    let quasi = delta_n_estimate(q, horizon.max(1), seeds, rng_seed)?;
    empirical_with_quasi(q, horizon, seeds, rng_seed, tol, quasi)
}

fn empirical_with_quasi(
    q: &Qso,
    horizon: usize,
    seeds: usize,
    rng_seed: u64,
    tol: f64,
    quasi_residual: f64,
) -> Result<EmpiricalSummary> {
    if horizon == 0 || tol.is_nan() || tol <= 0.0 {
        return Err(QsoError::InvalidParameter(
            "horizon >= 1 and tol > 0 required".into(),
        ));
    }
    let starts = empirical_seeds(q.dim(), seeds, rng_seed)?;
    let ends = starts
        .par_iter()
        .map(|g| q.iterate_to(g, horizon))
        .collect::<Result<Vec<_>>>()?;
    let limit = mean_density(&ends);
    let mut norm_residual = 0.0f64;
    let mut pair_residual = 0.0f64;
    for (a, x) in ends.iter().enumerate() {
        norm_residual = norm_residual.max(l1_distance(x, &limit)?);
        for y in &ends[a + 1..] {
            pair_residual = pair_residual.max(l1_distance(x, y)?);
        }
    }
    // On a finite seed set uniform and pointwise convergence to a common
    // limit produce the same residual.
    let classes = vec![
        ClassSummary {
            class: "norm_mixing",
            residual: norm_residual,
            consistent: norm_residual <= tol,
        },
        ClassSummary {
            class: "strong_mixing",
            residual: norm_residual,
            consistent: norm_residual <= tol,
        },
        ClassSummary {
            class: "strong_almost_mixing",
            residual: pair_residual,
            consistent: pair_residual <= tol,
        },
        ClassSummary {
            class: "quasi_mixing",
            residual: quasi_residual,
            consistent: quasi_residual <= tol,
        },
    ];
    Ok(EmpiricalSummary {
        horizon,
        tol,
        seeds_used: starts.len(),
        limit,
        norm_residual,
        strong_almost_residual: pair_residual,
        quasi_residual,
        classes,
    })
}

/// Checks that every associated chain started from vertex seeds and vertex
/// arguments, on windows `[0, horizon]`, `[1, 1 + horizon]` and
/// `[2, 2 + horizon]`, lands within `tol` of the common limit of the
/// iterates.
pub fn thm6_spot_check(q: &Qso, horizon: usize, tol: f64) -> Result<bool> {
    if horizon == 0 || tol.is_nan() || tol <= 0.0 {
        return Err(QsoError::InvalidParameter(
            "horizon >= 1 and tol > 0 required".into(),
        ));
    }
    let d = q.dim();
    let mut seeds: Vec<Density> = (0..d).map(|i| Density::vertex(d, i)).collect();
    seeds.push(Density::uniform(d));
    let ends = seeds
        .iter()
        .map(|g| q.iterate_to(g, horizon))
        .collect::<Result<Vec<_>>>()?;
    let limit = mean_density(&ends);
    let residual = ends
        .iter()
        .map(|x| l1_distance(x, &limit))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    if residual > tol {
        return Err(QsoError::NotNormMixing { residual, tol });
    }
    let all_ok = (0..d)
        .into_par_iter()
        .map(|h| -> Result<bool> {
            let seed = Density::vertex(d, h);
            for m in 0..=2 {
                let w = window(q, &seed, m, m + horizon)?;
                for col in w.product.columns() {
                    if l1_distance(col, &limit)? > tol {
                        return Ok(false);
                    }
                }
            }
            Ok(true)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(all_ok.into_iter().all(|b| b))
}

/// `(d_full, d_anchored)`: lower bounds on `delta_n` and on
/// `sup_{f,g} ||P_f^{[0,n]} g - Q^n(f)||_1`. Both objectives are evaluated on
/// the union of the two searches' maximizers, which makes
/// `d_anchored <= d_full <= 2 d_anchored` hold exactly.
pub fn quasi_equiv_check(q: &Qso, n: usize, starts: usize, rng_seed: u64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(QsoError::InvalidParameter("n must be >= 1".into()));
    }
    let anchored = |f: &Density| -> Result<f64> {
        let w = window(q, f, 0, n)?;
        let image = w.product.apply(f)?;
        let mut best = 0.0f64;
        for col in w.product.columns() {
            best = best.max(l1_distance(col, &image)?);
        }
        Ok(best)
    };
    let full = |f: &Density| -> Result<f64> { delta_at(q, f, n) };

    let profile = delta_profile(q, n, starts, rng_seed)?;
    let full_seed = profile.argmax[n - 1].clone();
    let candidates = search_candidates(q.dim(), starts, rng_seed)?;
    let anchored_best = crate::simplex::maximize_from(&anchored, &candidates)?;
    let pool = [full_seed, anchored_best.argmax];
    let mut d_full = profile.at(n);
    let mut d_anchored = 0.0f64;
    for f in &pool {
        d_full = d_full.max(full(f)?);
        d_anchored = d_anchored.max(anchored(f)?);
    }
    Ok((d_full, d_anchored))
}

/// Full classification of one operator.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingReport {
    pub dim: usize,
    pub symmetric: bool,
    pub delta1: Delta1,
    pub delta_n_lower: Vec<(usize, f64)>,
    pub verdict: Verdict,
    pub certificate: Option<QuasiCertificate>,
    pub refutation: Option<BlockWitness>,
    pub norm_mixing_ball: Option<BallCertificate>,
    pub empirical: Option<EmpiricalSummary>,
    pub all_window_check: Option<bool>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyOptions {
    pub horizon: usize,
    pub starts: usize,
    pub seed: u64,
    pub tol: f64,
    /// Grid resolution for the `d <= 3` certification mode; `None` disables it.
    pub grid: Option<usize>,
    pub empirical: bool,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            horizon: 20,
            starts: 4,
            seed: 0,
            tol: 1e-6,
            grid: None,
            empirical: false,
        }
    }
}

/// Verdict with the one-line signature of the library: certificates first,
/// then the pooled `delta_n` profile.
pub fn classify_quasi_mixing(
    q: &Qso,
    horizon: usize,
    starts: usize,
    rng_seed: u64,
) -> Result<MixingReport> {
    classify(
        q,
        &ClassifyOptions {
            horizon,
            starts,
            seed: rng_seed,
            ..ClassifyOptions::default()
        },
    )
}

pub fn classify(q: &Qso, opts: &ClassifyOptions) -> Result<MixingReport> {
    if opts.horizon == 0 {
        return Err(QsoError::InvalidParameter("horizon must be >= 1".into()));
    }
    let cert = certify(q);
    let profile = delta_profile(q, opts.horizon, opts.starts, opts.seed)?;
    let mut verdict = cert.verdict;
    let mut certificate = cert.certificate;
    let mut notes = Vec::new();

    if verdict.is_none() {
        if let Some(resolution) = opts.grid {
            if q.dim() <= GRID_MAX_DIM {
                for n in 2..=opts.horizon.min(GRID_MAX_HORIZON) {
                    let g = grid_certify(q, n, resolution)?;
                    if g.upper < 2.0 - CERTIFY_MARGIN {
                        verdict = Some(Verdict::CertifiedYes);
                        certificate = Some(QuasiCertificate {
                            horizon: n,
                            gap: 2.0 - g.upper,
                            method: CertificateMethod::Grid {
                                resolution,
                                lipschitz: g.lipschitz,
                            },
                        });
                        break;
                    }
                }
            }
        }
    }
    let verdict = verdict.unwrap_or_else(|| {
        if profile.at(opts.horizon) < 2.0 - LIKELY_MARGIN {
            Verdict::LikelyYes
        } else {
            Verdict::Unknown
        }
    });
    let mut verdict = verdict;
    let norm_mixing_ball = diamond_ball_sweep(q)?;
    if !q.is_symmetric() {
        notes.push("nonsymmetric operator: certificates are reported as evidence only".into());
        verdict = match verdict {
            Verdict::CertifiedYes => Verdict::LikelyYes,
            Verdict::CertifiedNo => Verdict::Unknown,
            v => v,
        };
    }
    let empirical = if opts.empirical {
        Some(empirical_with_quasi(
            q,
            opts.horizon,
            opts.starts,
            opts.seed,
            opts.tol,
            profile.at(opts.horizon),
        )?)
    } else {
        None
    };
    Ok(MixingReport {
        dim: q.dim(),
        symmetric: q.is_symmetric(),
        delta1: cert.delta1,
        delta_n_lower: profile
            .estimates
            .iter()
            .enumerate()
            .map(|(i, v)| (i + 1, *v))
            .collect(),
        verdict,
        certificate,
        refutation: cert.refutation,
        norm_mixing_ball,
        empirical,
        all_window_check: None,
        notes,
    })
}

/// Verdict only, skipping the profile when a certificate decides it.
pub fn quick_verdict(
    q: &Qso,
    horizon: usize,
    starts: usize,
    rng_seed: u64,
) -> Result<(Certification, Verdict)> {
    let cert = certify(q);
    let verdict = match cert.verdict {
        Some(v) => v,
        None => {
            let p = delta_profile(q, horizon, starts, rng_seed)?;
            if p.at(horizon) < 2.0 - LIKELY_MARGIN {
                Verdict::LikelyYes
            } else {
                Verdict::Unknown
            }
        }
    };
    let verdict = if q.is_symmetric() {
        verdict
    } else {
        match verdict {
            Verdict::CertifiedYes => Verdict::LikelyYes,
            Verdict::CertifiedNo => Verdict::Unknown,
            v => v,
        }
    };
    Ok((cert, verdict))
}

fn join_indices(v: &[usize]) -> String {
    let parts: Vec<String> = v.iter().map(|i| (i + 1).to_string()).collect();
    format!("{{{}}}", parts.join(","))
}

impl MixingReport {
    /// Flat `key=value` block; indices are one-based.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "dim={}", self.dim);
        let _ = writeln!(s, "symmetric={}", self.symmetric);
        let (m, i, j) = self.delta1.witness;
        let _ = writeln!(s, "delta1_exact={}", self.delta1.value);
        let _ = writeln!(s, "delta1_witness=(m={}, i={}, j={})", m + 1, i + 1, j + 1);
        let _ = writeln!(s, "quasi_mixing={}", self.verdict);
        match &self.certificate {
            Some(c) => {
                let _ = writeln!(s, "certificate_horizon={}", c.horizon);
                let _ = writeln!(s, "certificate_eps={}", c.gap);
                let _ = writeln!(s, "certificate_rate={}", 1.0 - c.gap / 2.0);
                match c.method {
                    CertificateMethod::Delta1Exact => {
                        let _ = writeln!(s, "certificate_method=delta1_exact");
                    }
                    CertificateMethod::Grid {
                        resolution,
                        lipschitz,
                    } => {
                        let _ = writeln!(s, "certificate_method=grid(resolution={resolution}, lipschitz={lipschitz})");
                    }
                }
            }
            None => {
                let _ = writeln!(s, "certificate=none");
            }
        }
        if let Some(w) = &self.refutation {
            let _ = writeln!(s, "refutation_seed_vertex={}", w.seed_vertex + 1);
            let _ = writeln!(s, "refutation_seed_set={}", join_indices(&w.seed_set));
            let _ = writeln!(s, "refutation_block_a={}", join_indices(&w.block_a));
            let _ = writeln!(s, "refutation_block_b={}", join_indices(&w.block_b));
        }
        for (n, v) in &self.delta_n_lower {
            let _ = writeln!(s, "delta_{n}_lower={v}");
        }
        match &self.norm_mixing_ball {
            Some(b) => {
                let _ = writeln!(s, "norm_mixing_ball_eps={}", b.epsilon);
                let _ = writeln!(s, "norm_mixing_ball_rate={}", b.rate);
                let _ = writeln!(
                    s,
                    "norm_mixing_ball_anchor={}",
                    format_vector(b.anchor.values())
                );
            }
            None => {
                let _ = writeln!(s, "norm_mixing_ball=none");
            }
        }
        if let Some(e) = &self.empirical {
            let _ = writeln!(s, "empirical_horizon={}", e.horizon);
            let _ = writeln!(s, "empirical_tol={}", e.tol);
            let _ = writeln!(s, "empirical_seeds={}", e.seeds_used);
            for c in &e.classes {
                let word = if c.consistent {
                    "consistent"
                } else {
                    "inconsistent"
                };
                let _ = writeln!(s, "empirical_{}_residual={}", c.class, c.residual);
                let _ = writeln!(s, "empirical_{}={word}", c.class);
            }
        }
        if let Some(t) = self.all_window_check {
            let _ = writeln!(s, "all_window_check={t}");
        }
        for n in &self.notes {
            let _ = writeln!(s, "note={n}");
        }
        s
    }

    pub fn csv_header() -> &'static str {
        "dim,symmetric,delta1,verdict,certificate_eps,certificate_horizon,delta_horizon_lower,ball_eps,norm_residual,strong_almost_residual,quasi_residual,all_window_check"
    }

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let emp = self.empirical.as_ref();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.dim,
            self.symmetric,
            self.delta1.value,
            self.verdict,
            opt(self.certificate.map(|c| c.gap)),
            self.certificate
                .map(|c| c.horizon.to_string())
                .unwrap_or_default(),
            opt(self.delta_n_lower.last().map(|p| p.1)),
            opt(self.norm_mixing_ball.as_ref().map(|b| b.epsilon)),
            opt(emp.map(|e| e.norm_residual)),
            opt(emp.map(|e| e.strong_almost_residual)),
            opt(emp.map(|e| e.quasi_residual)),
            self.all_window_check
                .map(|t| t.to_string())
                .unwrap_or_default(),
        )
    }
}
