//! Zippered rectangles `(lambda, pi, delta)`, the scaling flow, the
//! Rauzy-Veech induction step, the roof function of the renormalized
//! induction, and the log-ratio metric.
//!
//! Conventions fixed here (and exercised by the property tests):
//!
//! * The induction branch is decided by the length data: branch `b` when
//!   `lambda_{pi^{-1}m} > lambda_m`, branch `a` when `lambda_m` is larger.
//! * On the `b` branch the step transports `lambda` and `delta` as column
//!   vectors by `matrix_a(pi)^{-1}` and replaces `pi` by `rauzy_a(pi)`; on
//!   the `a` branch it uses `matrix_b(pi)^{-1}` and `rauzy_b(pi)`. This
//!   crossed pairing is the one under which lengths stay positive, `delta`
//!   stays in the cone of the new permutation, and area is invariant; the
//!   straight pairing fails all three for m >= 3. Both choices were tried;
//!   the tests arbitrate.
//! * The roof is `-log((|lambda| - min(lambda_m, lambda_{pi^{-1}m}))/|lambda|)`,
//!   which is positive and scale-invariant, and equals the flow time that
//!   renormalizes the induced length vector back to the unit simplex.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rauzy::{self, rauzy_a, rauzy_b, IntMatrix, Permutation};

/// Tolerance for the cone inequalities on floating-point data.
pub const CONE_TOL: f64 = 1e-12;

/// Induction branch label; `B` is the `lambda_{pi^{-1}m} > lambda_m` side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    A,
    B,
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Branch::A => write!(f, "a"),
            Branch::B => write!(f, "b"),
        }
    }
}

/// A zippered rectangle: positive lengths, an irreducible permutation, and
/// zippering data constrained to the cone `K(pi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZipperedRectangle {
    lambda: Vec<f64>,
    pi: Permutation,
    delta: Vec<f64>,
}

impl ZipperedRectangle {
    pub fn new(lambda: Vec<f64>, pi: Permutation, delta: Vec<f64>) -> Result<Self> {
        let m = pi.size();
        if lambda.len() != m || delta.len() != m {
            return Err(Error::validation(format!(
                "length mismatch: pi has {m} symbols, lambda has {}, delta has {}",
                lambda.len(),
                delta.len()
            )));
        }
        if !pi.is_irreducible() {
            return Err(Error::validation(format!("permutation {pi} is reducible")));
        }
        for &l in &lambda {
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::validation(format!("non-positive length {l}")));
            }
        }
        if !cone_contains(&pi, &delta)? {
            return Err(Error::validation("delta is outside the cone K(pi)"));
        }
        let zr = ZipperedRectangle { lambda, pi, delta };
        if zr.heights().iter().any(|&h| h < -CONE_TOL) {
            return Err(Error::validation("derived heights are negative"));
        }
        Ok(zr)
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn pi(&self) -> &Permutation {
        &self.pi
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn size(&self) -> usize {
        self.pi.size()
    }

    pub fn lambda_total(&self) -> f64 {
        self.lambda.iter().sum()
    }

    /// Rectangle heights `h_r = -sum_{i<r} delta_i + sum_{l<pi(r)} delta_{pi^{-1}l}`.
    pub fn heights(&self) -> Vec<f64> {
        let m = self.size();
        // Prefix sums: top[i] = delta_1 + ... + delta_i, bot[j] in bottom order.
        let mut top = vec![0.0; m + 1];
        for i in 1..=m {
            top[i] = top[i - 1] + self.delta[i - 1];
        }
        let mut bot = vec![0.0; m + 1];
        for l in 1..=m {
            bot[l] = bot[l - 1] + self.delta[self.pi.invert(l) - 1];
        }
        (1..=m)
            .map(|r| -top[r - 1] + bot[self.pi.apply(r) - 1])
            .collect()
    }

    /// `a_i = -(delta_1 + ... + delta_{i-1})`; `a_1 = 0` by the empty-sum convention.
    pub fn a_vector(&self) -> Vec<f64> {
        let m = self.size();
        let mut a = Vec::with_capacity(m);
        let mut s = 0.0;
        for i in 0..m {
            a.push(-s);
            s += self.delta[i];
        }
        a
    }

    /// Area `sum_r lambda_r h_r`.
    pub fn area(&self) -> f64 {
        let h = self.heights();
        self.lambda.iter().zip(h.iter()).map(|(l, h)| l * h).sum()
    }

    /// Area in the dual form `sum_i delta_i (-sum_{r>i} lambda_r + sum_{r>pi(i)} lambda_{pi^{-1}r})`.
    pub fn area_dual(&self) -> f64 {
        let m = self.size();
        let mut suffix_top = vec![0.0; m + 2];
        for r in (1..=m).rev() {
            suffix_top[r] = suffix_top[r + 1] + self.lambda[r - 1];
        }
        let mut suffix_bot = vec![0.0; m + 2];
        for r in (1..=m).rev() {
            suffix_bot[r] = suffix_bot[r + 1] + self.lambda[self.pi.invert(r) - 1];
        }
        (1..=m)
            .map(|i| self.delta[i - 1] * (-suffix_top[i + 1] + suffix_bot[self.pi.apply(i) + 1]))
            .sum()
    }
}

/// Membership in the cone `K(pi)`: top partial sums nonpositive, bottom-order
/// partial sums nonnegative, both up to `i = m-1`, with tolerance `CONE_TOL`.
pub fn cone_contains(pi: &Permutation, delta: &[f64]) -> Result<bool> {
    cone_contains_tol(pi, delta, CONE_TOL)
}

pub fn cone_contains_tol(pi: &Permutation, delta: &[f64], tol: f64) -> Result<bool> {
    let m = pi.size();
    if delta.len() != m {
        return Err(Error::validation(format!(
            "delta has {} entries, expected {m}",
            delta.len()
        )));
    }
    let mut s = 0.0;
    for i in 1..m {
        s += delta[i - 1];
        if s > tol {
            return Ok(false);
        }
    }
    let mut s = 0.0;
    for i in 1..m {
        s += delta[pi.invert(i) - 1];
        if s < -tol {
            return Ok(false);
        }
    }
    Ok(true)
}

/// The scaling flow `(lambda, pi, delta) -> (e^t lambda, pi, e^{-t} delta)`.
pub fn flow(x: &ZipperedRectangle, t: f64) -> ZipperedRectangle {
    let et = t.exp();
    let emt = (-t).exp();
    ZipperedRectangle {
        lambda: x.lambda.iter().map(|l| l * et).collect(),
        pi: x.pi.clone(),
        delta: x.delta.iter().map(|d| d * emt).collect(),
    }
}

/// One induction step.
#[derive(Debug, Clone)]
pub struct Induction {
    pub next: ZipperedRectangle,
    pub branch: Branch,
    /// 1-based index of the longer of the two compared intervals.
    pub winner: usize,
    /// The unimodular matrix whose inverse transports `lambda` and `delta`
    /// (as column vectors) across this step.
    pub matrix: IntMatrix,
}

/// Applies one step of the induction. Errors with `NonInducible` exactly on
/// the measure-zero boundary `lambda_m = lambda_{pi^{-1}m}`.
pub fn induce(x: &ZipperedRectangle) -> Result<Induction> {
    let m = x.size();
    if m < 2 {
        return Err(Error::validation("induction needs at least two symbols"));
    }
    let k = x.pi.invert(m); // 1-based
    let lk = x.lambda[k - 1];
    let lm = x.lambda[m - 1];
    if lk == lm {
        return Err(Error::NonInducible);
    }

    let (branch, winner, pi_next, matrix) = if lk > lm {
        (Branch::B, k, rauzy_a(&x.pi)?, rauzy::matrix_a(&x.pi)?)
    } else {
        (Branch::A, m, rauzy_b(&x.pi)?, rauzy::matrix_b(&x.pi)?)
    };

    let lambda = apply_inverse(branch, k, &x.lambda);
    let delta = apply_inverse(branch, k, &x.delta);

    let next = ZipperedRectangle {
        lambda,
        pi: pi_next,
        delta,
    };
    Ok(Induction {
        next,
        branch,
        winner,
        matrix,
    })
}

/// Closed form for `M^{-1} v` where `M` is the step matrix of the branch.
///
/// Branch `b` (matrix of the `a` operation, `k = pi^{-1}m`):
///   `(v_1, ..., v_{k-1}, v_k - v_m, v_m, v_{k+1}, ..., v_{m-1})`.
/// Branch `a` (matrix of the `b` operation):
///   `(v_1, ..., v_{m-1}, v_m - v_k)`.
fn apply_inverse(branch: Branch, k: usize, v: &[f64]) -> Vec<f64> {
    let m = v.len();
    match branch {
        Branch::B => {
            let mut out = Vec::with_capacity(m);
            out.extend_from_slice(&v[..k - 1]);
            out.push(v[k - 1] - v[m - 1]);
            out.push(v[m - 1]);
            out.extend_from_slice(&v[k..m - 1]);
            out
        }
        Branch::A => {
            let mut out = v.to_vec();
            out[m - 1] -= v[k - 1];
            out
        }
    }
}

/// Roof of the renormalized induction:
/// `-log((|lambda| - min(lambda_m, lambda_{pi^{-1}m})) / |lambda|) > 0`.
pub fn roof(lambda: &[f64], pi: &Permutation) -> Result<f64> {
    let m = pi.size();
    if lambda.len() != m {
        return Err(Error::validation("lambda length does not match pi"));
    }
    if m < 2 {
        return Err(Error::validation("roof needs at least two symbols"));
    }
    for &l in lambda {
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::validation(format!("non-positive length {l}")));
        }
    }
    let total: f64 = lambda.iter().sum();
    let cut = lambda[m - 1].min(lambda[pi.invert(m) - 1]);
    let ratio = (total - cut) / total;
    if !(ratio > 0.0) {
        return Err(Error::validation("degenerate lengths: roof is infinite"));
    }
    Ok(-ratio.ln())
}

/// One renormalized step: induce, then flow for exactly the roof time so the
/// new length vector is back on the unit simplex.
#[derive(Debug, Clone)]
pub struct RenormStep {
    pub next: ZipperedRectangle,
    pub elapsed: f64,
    pub branch: Branch,
    pub winner: usize,
}

pub fn renormalized_step(x: &ZipperedRectangle) -> Result<RenormStep> {
    let tau = roof(&x.lambda, &x.pi)?;
    let ind = induce(x)?;
    let next = flow(&ind.next, tau);
    Ok(RenormStep {
        next,
        elapsed: tau,
        branch: ind.branch,
        winner: ind.winner,
    })
}

/// One entry of a symbolic itinerary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ItineraryStep {
    pub branch: Branch,
    pub winner: usize,
    pub roof: f64,
}

/// Itinerary of `n` renormalized steps; `terminated_early` is set when a
/// non-inducible point interrupted the orbit, leaving a partial word.
#[derive(Debug, Clone, PartialEq)]
pub struct Itinerary {
    pub steps: Vec<ItineraryStep>,
    pub terminated_early: bool,
    pub end: Option<ZipperedRectangleSnapshot>,
}

/// Copyable snapshot of the endpoint, used by itinerary consumers.
#[derive(Debug, Clone, PartialEq)]
pub struct ZipperedRectangleSnapshot {
    pub lambda: Vec<f64>,
    pub pi: Vec<usize>,
}

/// The word of `(branch, winner)` labels and roof times along `n`
/// renormalized steps from `x` (which should satisfy `|lambda| = 1`).
pub fn symbolic_itinerary(x: &ZipperedRectangle, n: usize) -> Itinerary {
    let mut steps = Vec::with_capacity(n);
    let mut cur = x.clone();
    for _ in 0..n {
        match renormalized_step(&cur) {
            Ok(step) => {
                steps.push(ItineraryStep {
                    branch: step.branch,
                    winner: step.winner,
                    roof: step.elapsed,
                });
                cur = step.next;
            }
            Err(_) => {
                return Itinerary {
                    steps,
                    terminated_early: true,
                    end: None,
                };
            }
        }
    }
    Itinerary {
        steps,
        terminated_early: false,
        end: Some(ZipperedRectangleSnapshot {
            lambda: cur.lambda.clone(),
            pi: cur.pi.image().to_vec(),
        }),
    }
}

/// Log-ratio distance between two zippered rectangles with the same number
/// of symbols. Ratios where both entries vanish are skipped; a ratio with
/// exactly one vanishing entry makes the metric undefined at the pair.
///
/// `a_1 = 0` on both sides always, and `h_r - a_r = 0` exactly at the index
/// with `pi(r) = 1`, so same-permutation pairs are always comparable while
/// cross-permutation pairs need their structural zeros to line up.
pub fn distance(x: &ZipperedRectangle, y: &ZipperedRectangle) -> Result<f64> {
    if x.size() != y.size() {
        return Err(Error::validation("different numbers of symbols"));
    }
    let hx = x.heights();
    let hy = y.heights();
    let ax = x.a_vector();
    let ay = y.a_vector();
    let m = x.size();

    let mut max_ratio = f64::NEG_INFINITY;
    let mut min_ratio = f64::INFINITY;
    let mut push = |num: f64, den: f64, what: &str, i: usize| -> Result<()> {
        let (num, den) = (num.abs(), den.abs());
        if num == 0.0 && den == 0.0 {
            return Ok(()); // degenerate in both; carries no information
        }
        if den == 0.0 || num == 0.0 {
            return Err(Error::MetricUndefined(format!(
                "component {what}_{i} vanishes on one side only"
            )));
        }
        let r = num / den;
        max_ratio = max_ratio.max(r);
        min_ratio = min_ratio.min(r);
        Ok(())
    };

    for i in 0..m {
        push(x.lambda[i], y.lambda[i], "lambda", i + 1)?;
        push(hx[i], hy[i], "h", i + 1)?;
        push(ax[i], ay[i], "a", i + 1)?;
        push(hx[i] - ax[i], hy[i] - ay[i], "h-a", i + 1)?;
    }

    let core = (max_ratio / min_ratio).ln();
    let same_component = x.pi == y.pi && ax[m - 1] * ay[m - 1] >= 0.0;
    Ok(if same_component { core } else { 2.0 + core })
}

/// Draws `lambda` uniformly on the unit simplex (normalized exponentials).
pub fn sample_lambda<R: Rng>(m: usize, rng: &mut R) -> Vec<f64> {
    let mut v: Vec<f64> = (0..m)
        .map(|_| {
            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            -u.ln()
        })
        .collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// Draws `delta` in the cone `K(pi)` by rejection from the centered unit box.
pub fn sample_delta<R: Rng>(pi: &Permutation, rng: &mut R) -> Vec<f64> {
    let m = pi.size();
    loop {
        let d: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if cone_contains(pi, &d).unwrap() {
            return d;
        }
    }
}

/// Random valid zippered rectangle with `|lambda| = 1`; when `unit_area` is
/// set, `delta` is rescaled so the area is 1 (resampling if the area vanishes).
pub fn sample_zippered<R: Rng>(
    pi: &Permutation,
    unit_area: bool,
    rng: &mut R,
) -> ZipperedRectangle {
    loop {
        let lambda = sample_lambda(pi.size(), rng);
        let mut delta = sample_delta(pi, rng);
        let zr = ZipperedRectangle::new(lambda.clone(), pi.clone(), delta.clone());
        let zr = match zr {
            Ok(z) => z,
            Err(_) => continue,
        };
        if !unit_area {
            return zr;
        }
        let area = zr.area();
        if area <= 1e-9 {
            continue;
        }
        delta.iter_mut().for_each(|d| *d /= area);
        return ZipperedRectangle::new(lambda, pi.clone(), delta).unwrap();
    }
}
