//! Demonstration pipeline on the renormalized induction: orbit statistics of
//! the letter process, the roof times, and Birkhoff-average concentration of
//! a Lipschitz observable of the length data. Demonstrational only: the
//! sampled starts are Lebesgue-random, not drawn from any invariant measure.

use super::rng::stream_rng;
use super::stats;
use crate::error::{Error, Result};
use crate::rauzy::{rauzy_class, Permutation};
use crate::zippered::{renormalized_step, sample_zippered, Branch};

/// Built-in Lipschitz observables of the length vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaObservable {
    /// `sum_i lambda_i^2`: tends to 1 along orbits that linger at the
    /// simplex corners.
    SumSquares,
    /// `m^m prod_i lambda_i`, normalized to 1 at the barycenter.
    Product,
}

impl LambdaObservable {
    pub fn eval(&self, lambda: &[f64]) -> f64 {
        match self {
            LambdaObservable::SumSquares => lambda.iter().map(|l| l * l).sum(),
            LambdaObservable::Product => {
                let m = lambda.len() as f64;
                lambda.iter().map(|l| l * m).product()
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct TeichDemo {
    pub pi: Permutation,
    pub steps: u64,
    pub starts: u64,
    pub seed: u64,
    pub epsilon: f64,
    /// Orbit lengths at which the Birkhoff averages are recorded.
    pub lengths: Vec<u64>,
    pub observable: LambdaObservable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeichReport {
    pub class_size: usize,
    pub starts: u64,
    pub steps_per_start: u64,
    pub restarts: u64,
    pub non_finite: u64,
    pub letter_counts: [u64; 2],
    pub roof_min: f64,
    pub roof_mean: f64,
    pub roof_max: f64,
    /// Histogram of roof times: `(upper_edge, count)`.
    pub roof_histogram: Vec<(f64, u64)>,
    /// Per recorded length: fraction of starts whose Birkhoff average sits
    /// more than `epsilon` away from the pooled long-orbit reference.
    pub deviation_masses: Vec<(u64, f64)>,
    pub reference_average: f64,
    pub epsilon: f64,
    /// Fitted decay of roof oscillations over itinerary cylinders:
    /// `(log_prefactor, rate per matched letter)`.
    pub roof_log_holder: Option<(f64, f64)>,
}

/// Number of leading steps per start kept for the cylinder-matched roof fit.
const FIT_PREFIX_STEPS: usize = 1024;
const FIT_MAX_K: usize = 12;

pub fn teich_demo(cfg: &TeichDemo) -> Result<TeichReport> {
    if cfg.lengths.is_empty() || cfg.lengths.iter().any(|&l| l == 0 || l > cfg.steps) {
        return Err(Error::validation(
            "lengths must be positive and bounded by the step count",
        ));
    }
    if cfg.starts == 0 || cfg.steps == 0 {
        return Err(Error::validation("starts and steps must be positive"));
    }
    let class = rauzy_class(&cfg.pi)?;

    let mut letter_counts = [0u64; 2];
    let mut roof_min = f64::INFINITY;
    let mut roof_max: f64 = 0.0;
    let mut roof_sum = 0.0;
    let mut restarts = 0u64;
    let mut non_finite = 0u64;
    // log-spaced roof buckets down to 1e-12
    let edges: Vec<f64> = (0..=14).map(|i| 10f64.powi(i - 12)).collect();
    let mut hist = vec![0u64; edges.len() + 1];
    let mut averages: Vec<Vec<f64>> = vec![Vec::new(); cfg.lengths.len()];
    // (letters, roofs) prefixes for the cylinder-matched fit
    let mut fit_words: Vec<(Vec<u8>, Vec<f64>)> = Vec::new();

    for start in 0..cfg.starts {
        let mut rng = stream_rng(cfg.seed, start);
        let mut x = sample_zippered(&cfg.pi, false, &mut rng);
        let mut acc = 0.0;
        let mut done = 0u64;
        let mut len_cursor = 0usize;
        let keep_fit = fit_words.len() < 64;
        let mut fit_letters: Vec<u8> = Vec::new();
        let mut fit_roofs: Vec<f64> = Vec::new();
        while done < cfg.steps {
            let step = match renormalized_step(&x) {
                Ok(s) => s,
                Err(_) => {
                    restarts += 1;
                    x = sample_zippered(&cfg.pi, false, &mut rng);
                    continue;
                }
            };
            if !step.elapsed.is_finite()
                || step.next.lambda().iter().any(|l| !l.is_finite())
                || step.next.delta().iter().any(|d| !d.is_finite())
            {
                non_finite += 1;
                restarts += 1;
                x = sample_zippered(&cfg.pi, false, &mut rng);
                continue;
            }
            match step.branch {
                Branch::A => letter_counts[0] += 1,
                Branch::B => letter_counts[1] += 1,
            }
            roof_min = roof_min.min(step.elapsed);
            roof_max = roof_max.max(step.elapsed);
            roof_sum += step.elapsed;
            let bucket = edges.partition_point(|&e| e < step.elapsed);
            hist[bucket] += 1;
            if keep_fit && fit_letters.len() < FIT_PREFIX_STEPS {
                fit_letters.push(match step.branch {
                    Branch::A => 0,
                    Branch::B => 1,
                });
                fit_roofs.push(step.elapsed);
            }
            acc += cfg.observable.eval(x.lambda());
            x = step.next;
            done += 1;
            while len_cursor < cfg.lengths.len() && done == cfg.lengths[len_cursor] {
                averages[len_cursor].push(acc / done as f64);
                len_cursor += 1;
            }
        }
        if keep_fit {
            fit_words.push((fit_letters, fit_roofs));
        }
    }

    let total_steps = cfg.starts * cfg.steps;
    let reference = {
        let last = averages.last().unwrap();
        last.iter().sum::<f64>() / last.len() as f64
    };
    let deviation_masses: Vec<(u64, f64)> = cfg
        .lengths
        .iter()
        .zip(averages.iter())
        .map(|(&len, avgs)| {
            let beyond = avgs
                .iter()
                .filter(|&&a| (a - reference).abs() > cfg.epsilon)
                .count();
            (len, beyond as f64 / avgs.len() as f64)
        })
        .collect();

    let roof_log_holder = roof_cylinder_fit(&fit_words);

    let roof_histogram = edges
        .iter()
        .copied()
        .chain(std::iter::once(f64::INFINITY))
        .zip(hist.iter().copied())
        .collect();

    Ok(TeichReport {
        class_size: class.len(),
        starts: cfg.starts,
        steps_per_start: cfg.steps,
        restarts,
        non_finite,
        letter_counts,
        roof_min,
        roof_mean: roof_sum / total_steps as f64,
        roof_max,
        roof_histogram,
        deviation_masses,
        reference_average: reference,
        epsilon: cfg.epsilon,
        roof_log_holder,
    })
}

/// Groups orbit points by their next-k itinerary letters and fits the decay
/// of the worst roof ratio spread against k.
fn roof_cylinder_fit(words: &[(Vec<u8>, Vec<f64>)]) -> Option<(f64, f64)> {
    use std::collections::HashMap;
    let mut pts = Vec::new();
    for k in 1..=FIT_MAX_K {
        let mut groups: HashMap<u64, (f64, f64)> = HashMap::new();
        for (letters, roofs) in words {
            if letters.len() < k {
                continue;
            }
            for t in 0..letters.len() - k {
                let mut key = 0u64;
                for &b in &letters[t..t + k] {
                    key = key << 1 | b as u64;
                }
                let e = groups.entry(key).or_insert((f64::INFINITY, 0.0));
                e.0 = e.0.min(roofs[t]);
                e.1 = e.1.max(roofs[t]);
            }
        }
        let mut worst: f64 = 0.0;
        for (_, (lo, hi)) in groups {
            if lo > 0.0 && hi.is_finite() {
                worst = worst.max(hi / lo - 1.0);
            }
        }
        if worst > 0.0 {
            pts.push((k as f64, worst.ln(), 1.0));
        }
    }
    stats::slope_fit(&pts)
        .ok()
        .filter(|f| f.slope < 0.0)
        .map(|f| (f.intercept, -f.slope))
}
