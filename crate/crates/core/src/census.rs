//! Monte Carlo census of quasi-mixing verdicts over random operators.
//!
//! Row `r` draws its operator from the substream
//! `splitmix64(seed ^ splitmix64(r))`, so any single row can be reproduced
//! by [`row_operator`] without rerunning the census. Rows are computed in
//! parallel and emitted in `sample_id` order.

use std::fmt::Write as _;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;

use crate::constructions::{perturb, sample_qso};
use crate::error::{QsoError, Result};
use crate::metrics::hat_du_exact;
use crate::mixing::{quick_verdict, Verdict, CERTIFY_MARGIN};
use crate::qso::Qso;
use crate::simplex::Density;

/// Perturbation radii at or below this cannot clear the certificate margin
/// reliably and are rejected.
pub const MIN_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct CensusConfig {
    pub dim: usize,
    pub samples: usize,
    pub alpha: f64,
    pub horizon: usize,
    pub starts: usize,
    pub seed: u64,
    pub epsilon_list: Vec<f64>,
    /// Record wall-clock time per row; off keeps the CSV byte-reproducible.
    pub timing: bool,
}

impl CensusConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(QsoError::InvalidParameter(m.into()));
        if self.dim == 0 || self.samples == 0 || self.horizon == 0 || self.starts == 0 {
            return bad("dim, samples, horizon and starts must be positive");
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad("alpha must be positive");
        }
        if self
            .epsilon_list
            .iter()
            .any(|e| !(*e > MIN_EPSILON && *e < 1.0))
        {
            return bad("every epsilon must lie in (1e-8, 1)");
        }
        Ok(())
    }
}

/// The SplitMix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE5_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn row_seed(seed: u64, sample_id: usize) -> u64 {
    splitmix64(seed ^ splitmix64(sample_id as u64))
}

pub fn row_operator(cfg: &CensusConfig, sample_id: usize) -> Result<Qso> {
    sample_qso(cfg.dim, cfg.alpha, row_seed(cfg.seed, sample_id))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CensusRow {
    pub sample_id: usize,
    pub seed: u64,
    pub delta1: f64,
    pub verdict: Verdict,
    pub certificate_eps: Option<f64>,
    /// `hat_du` from the raw operator to its nearest certified variant:
    /// zero when the raw operator is certified, otherwise the smallest
    /// `hat_du(Q, perturb(Q, eps))` over certified perturbations.
    pub nearest_certified_du: Option<f64>,
    pub eps_verdicts: Vec<Verdict>,
    pub wall_time_ms: u128,
}

pub fn census_row(cfg: &CensusConfig, sample_id: usize) -> Result<CensusRow> {
    let start = Instant::now();
    let seed = row_seed(cfg.seed, sample_id);
    let q = sample_qso(cfg.dim, cfg.alpha, seed)?;
    let (cert, verdict) = quick_verdict(&q, cfg.horizon, cfg.starts, seed)?;
    let anchor = Density::uniform(cfg.dim);
    let mut nearest = (verdict == Verdict::CertifiedYes).then_some(0.0f64);
    let mut eps_verdicts = Vec::with_capacity(cfg.epsilon_list.len());
    for &eps in &cfg.epsilon_list {
        let qe = perturb(&q, eps, &anchor)?;
        let (_, v) = quick_verdict(&qe, cfg.horizon, cfg.starts, seed)?;
        if v == Verdict::CertifiedYes {
            let dist = hat_du_exact(&q, &qe)?.value;
            nearest = Some(nearest.map_or(dist, |n| n.min(dist)));
        }
        eps_verdicts.push(v);
    }
    Ok(CensusRow {
        sample_id,
        seed,
        delta1: cert.delta1.value,
        verdict,
        certificate_eps: cert.certificate.map(|c| c.gap),
        nearest_certified_du: nearest,
        eps_verdicts,
        wall_time_ms: if cfg.timing {
            start.elapsed().as_millis()
        } else {
            0
        },
    })
}

/// Runs the census on the current rayon pool.
pub fn run_census(cfg: &CensusConfig) -> Result<Vec<CensusRow>> {
    cfg.validate()?;
    (0..cfg.samples)
        .into_par_iter()
        .map(|id| census_row(cfg, id))
        .collect()
}

pub fn csv_header(cfg: &CensusConfig) -> Vec<String> {
    let mut h: Vec<String> = [
        "sample_id",
        "seed",
        "delta1",
        "verdict",
        "certificate_eps",
        "nearest_certified_du",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend(cfg.epsilon_list.iter().map(|e| format!("eps_{e}_verdict")));
    h.push("wall_time_ms".into());
    h
}

pub fn write_csv(cfg: &CensusConfig, rows: &[CensusRow], out: impl Write) -> Result<()> {
    let err = |e: csv::Error| QsoError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(cfg)).map_err(err)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        let mut rec = vec![
            r.sample_id.to_string(),
            r.seed.to_string(),
            r.delta1.to_string(),
            r.verdict.to_string(),
            opt(r.certificate_eps),
            opt(r.nearest_certified_du),
        ];
        rec.extend(r.eps_verdicts.iter().map(|v| v.to_string()));
        rec.push(r.wall_time_ms.to_string());
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| QsoError::Io(e.to_string()))
}

/// Wilson score interval at 95% for `k` successes in `n` trials.
pub fn wilson_interval(k: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054_f64;
    let n = n as f64;
    let p = k as f64 / n;
    let denom = 1.0 + z * z / n;
    let center = (p + z * z / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CensusSummary {
    pub samples: usize,
    pub raw_certified: usize,
    pub raw_fraction: f64,
    pub raw_wilson: (f64, f64),
    pub verdict_counts: Vec<(Verdict, usize)>,
    /// `(eps, fraction of perturbed samples certified)`.
    pub perturbed_fraction: Vec<(f64, f64)>,
    pub delta1_min: f64,
    pub delta1_mean: f64,
    pub delta1_max: f64,
    /// Counts of `delta1` in the ten bins `[0.2 b, 0.2 (b + 1))`, the last one
    /// closed.
    pub delta1_histogram: [usize; 10],
}

impl CensusSummary {
    pub fn from_rows(cfg: &CensusConfig, rows: &[CensusRow]) -> Self {
        let n = rows.len();
        let count = |v: Verdict| rows.iter().filter(|r| r.verdict == v).count();
        let raw_certified = count(Verdict::CertifiedYes);
        let perturbed_fraction = cfg
            .epsilon_list
            .iter()
            .enumerate()
            .map(|(e, &eps)| {
                let k = rows
                    .iter()
                    .filter(|r| r.eps_verdicts[e] == Verdict::CertifiedYes)
                    .count();
                (eps, k as f64 / n.max(1) as f64)
            })
            .collect();
        let mut hist = [0usize; 10];
        for r in rows {
            let b = ((r.delta1 / 0.2).floor().max(0.0) as usize).min(9);
            hist[b] += 1;
        }
        let d1 = rows.iter().map(|r| r.delta1);
        Self {
            samples: n,
            raw_certified,
            raw_fraction: raw_certified as f64 / n.max(1) as f64,
            raw_wilson: wilson_interval(raw_certified, n),
            verdict_counts: [
                Verdict::CertifiedYes,
                Verdict::CertifiedNo,
                Verdict::LikelyYes,
                Verdict::Unknown,
            ]
            .into_iter()
            .map(|v| (v, count(v)))
            .collect(),
            perturbed_fraction,
            delta1_min: d1.clone().fold(f64::INFINITY, f64::min),
            delta1_mean: d1.clone().sum::<f64>() / n.max(1) as f64,
            delta1_max: d1.fold(f64::NEG_INFINITY, f64::max),
            delta1_histogram: hist,
        }
    }

    /// Every perturbed sample certified, for every radius.
    pub fn density_check_passed(&self) -> bool {
        self.perturbed_fraction.iter().all(|(_, f)| *f == 1.0)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "samples={}", self.samples);
        let _ = writeln!(s, "raw_certified_yes={}", self.raw_certified);
        let _ = writeln!(s, "raw_certified_fraction={}", self.raw_fraction);
        let _ = writeln!(
            s,
            "raw_certified_wilson95=[{}, {}]",
            self.raw_wilson.0, self.raw_wilson.1
        );
        for (v, c) in &self.verdict_counts {
            let _ = writeln!(s, "verdict_{v}={c}");
        }
        for (eps, f) in &self.perturbed_fraction {
            let _ = writeln!(s, "perturbed_eps_{eps}_certified_fraction={f}");
        }
        let _ = writeln!(
            s,
            "density_check={}",
            if self.density_check_passed() {
                "pass"
            } else {
                "FAIL"
            }
        );
        let _ = writeln!(s, "delta1_min={}", self.delta1_min);
        let _ = writeln!(s, "delta1_mean={}", self.delta1_mean);
        let _ = writeln!(s, "delta1_max={}", self.delta1_max);
        for (b, c) in self.delta1_histogram.iter().enumerate() {
            let lo = 0.2 * b as f64;
            let _ = writeln!(s, "delta1_hist[{lo:.1},{:.1})={c}", lo + 0.2);
        }
        let _ = writeln!(s, "certificate_margin={CERTIFY_MARGIN}");
        s
    }
}
