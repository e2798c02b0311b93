//! Large-deviation experiments: exact and Monte-Carlo estimation of
//! deviation-set measures for the base shift and the suspension flow, slope
//! fitting against the variational bounds, and the renormalized-induction
//! demonstration.
//!
//! Monte-Carlo estimation uses an exponential change of measure: samples are
//! drawn from the tilted equilibrium chain whose mean sits at the deviation
//! threshold, and each sample carries its exact likelihood ratio. Hit counts
//! stay integers (Wilson intervals apply to them); the weighted estimator is
//! unbiased for the target probability. Plain (untilted) sampling is
//! available as a cross-check; the two agree within their intervals.

pub mod rng;
pub mod stats;

mod base;
mod flow;
mod teich;

pub use base::{deviate_shift, Mode, ShiftExperiment};
pub use flow::{deviate_flow, lap_deviation, FlowExperiment, LapExperiment};
pub use stats::{slope_fit, wilson, SlopeFit, Z_95};
pub use teich::{teich_demo, LambdaObservable, TeichDemo, TeichReport};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::thermo::MarkovGibbsMeasure;

/// Which estimator drives a deviation experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerKind {
    /// Exponentially tilted importance sampling (the default; reaches far
    /// into the tails).
    Tilted,
    /// Plain sampling from the equilibrium chain.
    Plain,
}

/// One grid point of a deviation report.
#[derive(Debug, Clone, PartialEq)]
pub struct PointEstimate {
    /// The abscissa: `n` for the shift, `T` for flows.
    pub x: f64,
    pub samples_per_side: u64,
    pub hits_ge: u64,
    pub hits_gt: u64,
    pub p_ge: f64,
    pub p_gt: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// `log(p_ge) / x`; absent when the point is dropped.
    pub log_rate: Option<f64>,
    pub dropped: bool,
    pub exact_ge: Option<f64>,
    pub exact_gt: Option<f64>,
}

/// Itemized contribution to a composite bound.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundTerm {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Consistent,
    Inconsistent,
    Inconclusive,
    EmptyDeviationSet,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Verdict::Consistent => "consistent",
            Verdict::Inconsistent => "inconsistent",
            Verdict::Inconclusive => "inconclusive",
            Verdict::EmptyDeviationSet => "empty deviation set",
        };
        write!(f, "{s}")
    }
}

/// The result of a deviation experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationReport {
    pub points: Vec<PointEstimate>,
    pub slope: Option<SlopeFit>,
    /// Variational bound with the non-strict threshold (the limsup form).
    pub bound_upper_ge: Option<f64>,
    /// Same bound with the strict threshold (the liminf form); equal for the
    /// finite model, reported separately on purpose.
    pub bound_upper_gt: Option<f64>,
    /// Flow-mode lower bound (compact support only).
    pub bound_lower: Option<f64>,
    /// Itemized terms when the upper bound is a maximum of several.
    pub bound_terms: Vec<BoundTerm>,
    /// Whether the slope is negative with its CI excluding zero.
    pub slope_excludes_zero: Option<bool>,
    pub verdict: Verdict,
    pub notes: Vec<String>,
}

/// Minimum tilted/plain hits for a point to enter the slope fit.
pub const MIN_HITS_FOR_FIT: u64 = 10;

// ---------------------------------------------------------------------------
// shared machinery

/// Per-side Monte-Carlo accumulator; merged in fixed block order so results
/// are bitwise independent of the worker count.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct SideAcc {
    pub hits_ge: u64,
    pub hits_gt: u64,
    pub w_ge: f64,
    pub w2_ge: f64,
    pub w_gt: f64,
    pub w2_gt: f64,
}

impl SideAcc {
    pub fn merge(mut self, o: SideAcc) -> SideAcc {
        self.hits_ge += o.hits_ge;
        self.hits_gt += o.hits_gt;
        self.w_ge += o.w_ge;
        self.w2_ge += o.w2_ge;
        self.w_gt += o.w_gt;
        self.w2_gt += o.w2_gt;
        self
    }

    pub fn record(&mut self, ge: bool, gt: bool, weight: f64) {
        if ge {
            self.hits_ge += 1;
            self.w_ge += weight;
            self.w2_ge += weight * weight;
        }
        if gt {
            self.hits_gt += 1;
            self.w_gt += weight;
            self.w2_gt += weight * weight;
        }
    }
}

const BLOCK: u64 = 4096;

/// Runs `body` over sample indices `0..samples` on a private pool, reducing
/// per-block accumulators in index order.
pub(crate) fn accumulate_samples<A, M, B>(
    samples: u64,
    workers: usize,
    make: M,
    body: B,
) -> Result<A>
where
    A: Send + Mergeable,
    M: Fn() -> A + Sync + Send,
    B: Fn(&mut A, u64) + Sync + Send,
{
    let workers = workers.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::validation(format!("thread pool: {e}")))?;
    let nblocks = samples.div_ceil(BLOCK);
    let mut partials: Vec<A> = pool.install(|| {
        (0..nblocks)
            .into_par_iter()
            .map(|b| {
                let mut acc = make();
                let lo = b * BLOCK;
                let hi = ((b + 1) * BLOCK).min(samples);
                for i in lo..hi {
                    body(&mut acc, i);
                }
                acc
            })
            .collect()
    });
    let mut out = make();
    for p in partials.drain(..) {
        out = merge_into(out, p);
    }
    Ok(out)
}

// The accumulators used here all expose `merge`; a tiny trait keeps the
// reducer generic without boxing.
pub(crate) trait Mergeable {
    fn merge2(self, other: Self) -> Self;
}

fn merge_into<A: Mergeable>(a: A, b: A) -> A {
    a.merge2(b)
}

/// Sampling view of a Markov measure: cumulative rows for inversion sampling
/// and log tables for likelihood ratios.
#[derive(Debug, Clone)]
pub(crate) struct Chain {
    pub l: usize,
    pub s_len: usize,
    pub n_states: usize,
    stationary_cdf: Vec<f64>,
    row_cdf: Vec<f64>,
}

impl Chain {
    pub fn new(mu: &MarkovGibbsMeasure) -> Chain {
        let l = mu.alphabet();
        let n = mu.n_states();
        let mut stationary_cdf = Vec::with_capacity(n);
        let mut acc = 0.0;
        for &p in mu.stationary() {
            acc += p;
            stationary_cdf.push(acc);
        }
        let mut row_cdf = Vec::with_capacity(n * l);
        for u in 0..n {
            let mut acc = 0.0;
            for c in 0..l {
                acc += mu.step(u, c).1;
                row_cdf.push(acc);
            }
        }
        Chain {
            l,
            s_len: mu.state_len(),
            n_states: n,
            stationary_cdf,
            row_cdf,
        }
    }

    pub fn sample_state(&self, u01: f64) -> usize {
        match self
            .stationary_cdf
            .binary_search_by(|p| p.partial_cmp(&u01).unwrap())
        {
            Ok(i) => (i + 1).min(self.n_states - 1),
            Err(i) => i.min(self.n_states - 1),
        }
    }

    /// Chooses the emitted symbol from state `u`.
    pub fn sample_symbol(&self, u: usize, u01: f64) -> usize {
        let row = &self.row_cdf[u * self.l..(u + 1) * self.l];
        let mut c = self.l - 1;
        for (i, &acc) in row.iter().enumerate() {
            if u01 < acc {
                c = i;
                break;
            }
        }
        c
    }

    pub fn next_state(&self, u: usize, c: usize) -> usize {
        if self.s_len == 1 {
            c
        } else {
            (u % (self.n_states / self.l)) * self.l + c
        }
    }

    /// Decodes a state into its symbol word.
    pub fn state_word(&self, mut u: usize, out: &mut Vec<u8>) {
        let start = out.len();
        out.resize(start + self.s_len, 0);
        for slot in out[start..].iter_mut().rev() {
            *slot = (u % self.l) as u8;
            u /= self.l;
        }
    }
}

/// Log likelihood-ratio tables for `d mu / d nu` along sampled words, where
/// the proposal `nu` has memory at least that of the target `mu`.
#[derive(Debug, Clone)]
pub(crate) struct LogRatio {
    /// `delta[u * l + c] = log T_mu(mu-state(u), c) - log T_nu(u, c)`.
    delta: Vec<f64>,
    mu: MarkovGibbsMeasure,
    nu_stationary: Vec<f64>,
    l: usize,
}

impl LogRatio {
    pub fn new(mu: &MarkovGibbsMeasure, nu: &MarkovGibbsMeasure) -> Result<LogRatio> {
        if mu.alphabet() != nu.alphabet() {
            return Err(Error::validation("alphabet mismatch"));
        }
        if mu.state_len() > nu.state_len() {
            return Err(Error::validation(
                "proposal memory must dominate the target memory",
            ));
        }
        let l = mu.alphabet();
        let n_nu = nu.n_states();
        let mu_state_mod = mu.n_states();
        let mut delta = Vec::with_capacity(n_nu * l);
        for u in 0..n_nu {
            let mu_state = u % mu_state_mod;
            for c in 0..l {
                let p_mu = mu.step(mu_state, c).1;
                let p_nu = nu.step(u, c).1;
                delta.push(p_mu.ln() - p_nu.ln());
            }
        }
        Ok(LogRatio {
            delta,
            mu: mu.clone(),
            nu_stationary: nu.stationary().to_vec(),
            l,
        })
    }

    /// Ratio contribution of the initial `nu`-state (its word under mu versus
    /// its stationary mass under nu).
    pub fn init(&self, nu_state: usize, word: &[u8]) -> f64 {
        let w: Vec<usize> = word.iter().map(|&c| c as usize).collect();
        self.mu.cylinder_mass(&w).ln() - self.nu_stationary[nu_state].ln()
    }

    pub fn step(&self, nu_state: usize, c: usize) -> f64 {
        self.delta[nu_state * self.l + c]
    }
}

/// Builds one report point out of the two one-sided accumulators.
pub(crate) fn make_point(
    x: f64,
    samples: u64,
    plus: SideAcc,
    minus: SideAcc,
    cap_weight: [f64; 2],
) -> PointEstimate {
    let n = samples as f64;
    let side_ci = |acc: &SideAcc, cap: f64| -> (f64, f64, f64) {
        // returns (p_hat, lo, hi) for the ge event of one side
        if acc.hits_ge == 0 {
            let (_, wh) = wilson(0, samples, Z_95);
            return (0.0, 0.0, wh * cap);
        }
        let p = acc.w_ge / n;
        let q = acc.hits_ge as f64 / n;
        let (wl, wh) = wilson(acc.hits_ge, samples, Z_95);
        let var = (acc.w2_ge / n - p * p).max(0.0) / n;
        let sd = var.sqrt();
        let lo = (p - Z_95 * sd).min(p * (wl / q)).max(0.0);
        let hi = (p + Z_95 * sd).max(p * (wh / q));
        (p, lo, hi)
    };
    let (pp, plo, phi_) = side_ci(&plus, cap_weight[0]);
    let (pm, mlo, mhi) = side_ci(&minus, cap_weight[1]);
    let p_ge = pp + pm;
    let p_gt = (plus.w_gt + minus.w_gt) / n;
    let hits_ge = plus.hits_ge + minus.hits_ge;
    let hits_gt = plus.hits_gt + minus.hits_gt;
    let dropped = hits_ge == 0;
    PointEstimate {
        x,
        samples_per_side: samples,
        hits_ge,
        hits_gt,
        p_ge,
        p_gt,
        ci_lo: plo + mlo,
        ci_hi: phi_ + mhi,
        log_rate: if p_ge > 0.0 {
            Some(p_ge.ln() / x)
        } else {
            None
        },
        dropped,
        exact_ge: None,
        exact_gt: None,
    }
}

/// Fits the slope over usable points and renders the verdict against the
/// upper bound.
pub(crate) fn finalize_report(
    points: Vec<PointEstimate>,
    bound_upper_ge: Option<f64>,
    bound_upper_gt: Option<f64>,
    bound_lower: Option<f64>,
    bound_terms: Vec<BoundTerm>,
    mut notes: Vec<String>,
) -> DeviationReport {
    let mut fit_pts = Vec::new();
    for p in &points {
        if !(p.p_ge > 0.0) {
            continue;
        }
        let exact_driven = p.samples_per_side == 0;
        if !exact_driven && (p.dropped || p.hits_ge < MIN_HITS_FOR_FIT) {
            continue;
        }
        let se = if exact_driven {
            1e-9
        } else if p.ci_lo > 0.0 {
            ((p.ci_hi.ln() - p.ci_lo.ln()) / (2.0 * Z_95)).max(1e-9)
        } else {
            ((p.ci_hi / p.p_ge).ln() / Z_95).max(1e-9)
        };
        fit_pts.push((p.x, p.p_ge.ln(), 1.0 / (se * se)));
    }
    let slope = slope_fit(&fit_pts).ok();
    if slope.is_none() && fit_pts.len() < 3 {
        notes.push(format!(
            "slope not fitted: only {} usable points",
            fit_pts.len()
        ));
    }
    let slope_excludes_zero = slope
        .as_ref()
        .map(|s| s.slope < 0.0 && s.slope + s.ci_half_width < 0.0);
    let all_empty = points
        .iter()
        .all(|p| p.hits_ge == 0 && p.exact_ge.unwrap_or(0.0) == 0.0);
    let verdict = if all_empty {
        Verdict::EmptyDeviationSet
    } else {
        match (&slope, bound_upper_ge) {
            (Some(s), Some(b)) => {
                if s.slope <= b + s.ci_half_width {
                    Verdict::Consistent
                } else {
                    Verdict::Inconsistent
                }
            }
            _ => Verdict::Inconclusive,
        }
    };
    DeviationReport {
        points,
        slope,
        bound_upper_ge,
        bound_upper_gt,
        bound_lower,
        bound_terms,
        slope_excludes_zero,
        verdict,
        notes,
    }
}
