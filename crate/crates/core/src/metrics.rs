//! Uniform distances between operators.
//!
//! `hat_du(Q1, Q2) = sup_{f,g} ||Q1(f,g) - Q2(f,g)||_1` is computed exactly:
//! the objective is convex in each argument, so the supremum sits at a vertex
//! pair `(e_i, e_j)`. The diagonal distance
//! `du(Q1, Q2) = sup_f ||Q1(f,f) - Q2(f,f)||_1` is non-convex and is reported
//! as a certified interval `[max(du_lower, quarter_certificate), hat_du]`.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, QsoError, Result};
use crate::qso::Qso;
use crate::simplex::{l1_distance, l1_slices, maximize_over_simplex, sample_density_with, Density};

/// Default number of random starts for diagonal searches.
pub const DEFAULT_STARTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HatDu {
    pub value: f64,
    /// Lexicographically first vertex pair attaining the value (zero-based).
    pub argmax: (usize, usize),
}

/// Exact `hat_du` by vertex enumeration.
pub fn hat_du_exact(q1: &Qso, q2: &Qso) -> Result<HatDu> {
    check_dim(q1.dim(), q2.dim())?;
    let d = q1.dim();
    let mut best = HatDu {
        value: f64::NEG_INFINITY,
        argmax: (0, 0),
    };
    for i in 0..d {
        for j in 0..d {
            let v = l1_slices(q1.column(i, j), q2.column(i, j));
            if v > best.value {
                best = HatDu {
                    value: v,
                    argmax: (i, j),
                };
            }
        }
    }
    Ok(best)
}

/// `||Q1(f,f) - Q2(f,f)||_1`.
pub fn diagonal_objective(q1: &Qso, q2: &Qso, f: &Density) -> Result<f64> {
    l1_distance(&q1.diag(f)?, &q2.diag(f)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub hat_du: f64,
    pub du_lower: f64,
    pub du_upper: f64,
    /// Largest diagonal objective over `{e_i*, e_j*, (e_i* + e_j*)/2}`;
    /// always at least `hat_du / 4` (in fact `hat_du / 3`).
    pub quarter_certificate: f64,
    pub hat_argmax: (usize, usize),
    pub du_argmax: Density,
    pub symmetric: bool,
}

impl MetricReport {
    /// Certified interval for `du`. The lower end is capped at `hat_du`,
    /// which bounds `du` exactly; search values above it are rounding.
    pub fn du_interval(&self) -> (f64, f64) {
        let lo = self.du_lower.max(self.quarter_certificate);
        (lo.min(self.du_upper), self.du_upper)
    }

    /// Flat `key=value` block; pair indices are one-based.
    pub fn to_key_value(&self) -> String {
        let (lo, hi) = self.du_interval();
        let mut s = String::new();
        let _ = writeln!(s, "hat_du={}", self.hat_du);
        let _ = writeln!(s, "du_lower={}", self.du_lower);
        let _ = writeln!(s, "du_upper={}", self.du_upper);
        let _ = writeln!(s, "du_interval=[{lo}, {hi}]");
        let _ = writeln!(s, "quarter_certificate={}", self.quarter_certificate);
        let _ = writeln!(
            s,
            "hat_argmax=({}, {})",
            self.hat_argmax.0 + 1,
            self.hat_argmax.1 + 1
        );
        let _ = writeln!(s, "du_argmax={}", format_vector(self.du_argmax.values()));
        if !self.symmetric {
            let _ = writeln!(
                s,
                "warning=d_u degenerate for nonsymmetric operators; hat_du is the metric"
            );
        }
        s
    }

    pub fn csv_header() -> &'static str {
        "hat_du,du_lower,du_upper,quarter_certificate,hat_argmax_i,hat_argmax_j"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.hat_du,
            self.du_lower,
            self.du_upper,
            self.quarter_certificate,
            self.hat_argmax.0 + 1,
            self.hat_argmax.1 + 1
        )
    }
}

pub(crate) fn format_vector(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    format!("[{}]", parts.join(", "))
}

/// Certified bounds on `du` together with the exact `hat_du`.
pub fn du_bounds(q1: &Qso, q2: &Qso, starts: usize, rng_seed: u64) -> Result<MetricReport> {
    let hat = hat_du_exact(q1, q2)?;
    let d = q1.dim();
    let (i, j) = hat.argmax;
    let ei = Density::vertex(d, i);
    let ej = Density::vertex(d, j);
    let mid = ei.mix(&ej, 0.5)?;
    let mut quarter = 0.0f64;
    for w in [&ei, &ej, &mid] {
        quarter = quarter.max(diagonal_objective(q1, q2, w)?);
    }
    let search = maximize_over_simplex(|f| diagonal_objective(q1, q2, f), d, starts, rng_seed)?;
    Ok(MetricReport {
        hat_du: hat.value,
        du_lower: search.value,
        du_upper: hat.value,
        quarter_certificate: quarter,
        hat_argmax: hat.argmax,
        du_argmax: search.argmax,
        symmetric: q1.is_symmetric() && q2.is_symmetric(),
    })
}

/// Builds the flat/sharp projection pair and returns `(du_lower, hat_du)`:
/// the diagonal distance vanishes while the bilinear one is 2.
pub fn nonsymmetric_degeneracy_demo(dim: usize) -> Result<(f64, f64)> {
    if dim < 2 {
        return Err(QsoError::InvalidParameter(
            "projection operators coincide for dim < 2".into(),
        ));
    }
    let flat = crate::constructions::make_q_flat(dim)?;
    let sharp = crate::constructions::make_q_sharp(dim)?;
    let r = du_bounds(&flat, &sharp, DEFAULT_STARTS, 0)?;
    Ok((r.du_lower, r.hat_du))
}

/// Largest observed `||Q1(f,g) - Q2(f,g)||_1 / du_certified` over sampled
/// density pairs, where `du_certified` is the certified lower end of the `du`
/// interval. Bounded by 4.
pub fn lipschitz_f_check(q1: &Qso, q2: &Qso, samples: usize, rng_seed: u64) -> Result<f64> {
    let report = du_bounds(q1, q2, DEFAULT_STARTS, rng_seed)?;
    if report.hat_du == 0.0 {
        return Err(QsoError::IdenticalOperators);
    }
    let denom = report.du_interval().0;
    let d = q1.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed ^ 0x5eed_f00d);
    let mut ratio = 0.0f64;
    for _ in 0..samples {
        let f = sample_density_with(&mut rng, d, 1.0)?;
        let g = sample_density_with(&mut rng, d, 1.0)?;
        let num = l1_distance(&q1.apply(&f, &g)?, &q2.apply(&f, &g)?)?;
        ratio = ratio.max(num / denom);
    }
    Ok(ratio)
}
