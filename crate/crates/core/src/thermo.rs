//! Thermodynamic formalism on finite full shifts: transfer matrices for
//! locally constant potentials, pressure via the Perron eigenvalue, Gibbs
//! equilibrium Markov measures, entropy, pressure curves, Legendre rate
//! functions, the variational deviation bound, and exact deviation-set
//! probabilities by word enumeration.

pub mod exact;

use crate::error::{Error, Result};
use crate::shift::{variation, LivsicVerdict, TableObservable};

pub use exact::ExactMarkov;

/// Relative tolerance for the Perron eigenvalue iteration.
pub const PRESSURE_TOL: f64 = 1e-13;
/// Iteration cap for the eigenvalue iterations.
pub const PRESSURE_MAX_ITERS: usize = 200_000;
/// Enumeration budget for exact deviation probabilities, in nats.
pub const ENUMERATION_BUDGET_NATS: f64 = 24.0;

/// A locally constant potential on the shift.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    table: TableObservable,
}

impl Potential {
    pub fn new(table: TableObservable) -> Self {
        Potential { table }
    }

    /// The zero potential on `alphabet` symbols (equilibrium = uniform Bernoulli).
    pub fn zero(alphabet: usize) -> Self {
        Potential {
            table: TableObservable::constant(alphabet, 0.0),
        }
    }

    /// `psi(a) = log p_a` for the given weights, normalized to sum to one,
    /// so the pressure is exactly zero.
    pub fn bernoulli(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::validation("Bernoulli weights must be positive"));
        }
        let total: f64 = weights.iter().sum();
        let values = weights.iter().map(|w| (w / total).ln()).collect();
        Ok(Potential {
            table: TableObservable::new(weights.len(), 1, values)?,
        })
    }

    pub fn table(&self) -> &TableObservable {
        &self.table
    }

    pub fn alphabet(&self) -> usize {
        self.table.alphabet()
    }

    pub fn depth(&self) -> usize {
        self.table.depth()
    }

    /// The tilted potential `psi + t phi`.
    pub fn tilted(&self, phi: &TableObservable, t: f64) -> Result<Potential> {
        Ok(Potential {
            table: self.table.add(&phi.scaled(t))?,
        })
    }

    /// The normalized complement `P - psi`, available once the pressure is known.
    pub fn psi_hat(&self, pressure: f64) -> TableObservable {
        self.table.scaled(-1.0).shifted_by(pressure)
    }
}

/// Dense transfer matrix over `alphabet^{max(1, depth-1)}` states; the entry
/// `(u, v)` is `exp(psi(u . last(v)))` when the states overlap, else zero.
/// Depth-1 potentials are lifted to the one-symbol state space by evaluating
/// on the target symbol (the lift composes with one shift, which changes
/// neither the pressure nor the equilibrium state).
#[derive(Debug, Clone)]
pub struct TransferMatrix {
    pub alphabet: usize,
    pub state_len: usize,
    pub n_states: usize,
    /// Row-major `n_states x n_states`.
    pub data: Vec<f64>,
}

impl TransferMatrix {
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.data[u * self.n_states + v]
    }

    pub fn row(&self, u: usize) -> &[f64] {
        &self.data[u * self.n_states..(u + 1) * self.n_states]
    }
}

fn state_len_for(depth: usize) -> usize {
    depth.saturating_sub(1).max(1)
}

/// The transfer matrix of `psi`, with entries `e^{psi}` (no rescaling).
pub fn transfer_matrix(psi: &Potential) -> Result<TransferMatrix> {
    transfer_matrix_scaled(psi, 0.0)
}

/// Transfer matrix with entries `e^{psi - shift}`, used internally to keep
/// the entries in a safe floating-point range.
fn transfer_matrix_scaled(psi: &Potential, shift: f64) -> Result<TransferMatrix> {
    let l = psi.alphabet();
    let d = psi.depth();
    let s = state_len_for(d);
    let n = l
        .checked_pow(s as u32)
        .filter(|&n| n <= 1 << 22)
        .ok_or_else(|| Error::budget("transfer-matrix state space too large"))?;
    let mut data = vec![0.0; n * n];
    if d == 1 {
        for u in 0..n {
            for v in 0..n {
                data[u * n + v] = (psi.table().value_at(v) - shift).exp();
            }
        }
    } else {
        let tail = n / l; // l^(s-1)
        for u in 0..n {
            let overlap = u % tail;
            for c in 0..l {
                let v = overlap * l + c;
                let word = u * l + c; // the d-word u . c
                data[u * n + v] = (psi.table().value_at(word) - shift).exp();
            }
        }
    }
    Ok(TransferMatrix {
        alphabet: l,
        state_len: s,
        n_states: n,
        data,
    })
}

fn dominant_eigen(m: &TransferMatrix, transpose: bool) -> Result<(f64, Vec<f64>)> {
    let n = m.n_states;
    let mut v = vec![1.0 / n as f64; n];
    let mut lambda_prev = f64::NAN;
    for iter in 0..PRESSURE_MAX_ITERS {
        let mut next = vec![0.0; n];
        if transpose {
            for (i, &vi) in v.iter().enumerate() {
                if vi != 0.0 {
                    let row = m.row(i);
                    for (j, nj) in next.iter_mut().enumerate() {
                        *nj += row[j] * vi;
                    }
                }
            }
        } else {
            for (i, nj) in next.iter_mut().enumerate() {
                let row = m.row(i);
                *nj = row.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            }
        }
        let lambda: f64 = next.iter().sum();
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::Convergence {
                iterations: iter,
                residual: f64::NAN,
            });
        }
        next.iter_mut().for_each(|x| *x /= lambda);
        if (lambda - lambda_prev).abs() <= PRESSURE_TOL * lambda {
            let residual: f64 = {
                let mut r = 0.0;
                for i in 0..n {
                    let mut acc = 0.0;
                    if transpose {
                        for j in 0..n {
                            acc += m.get(j, i) * next[j];
                        }
                    } else {
                        acc = m.row(i).iter().zip(next.iter()).map(|(a, b)| a * b).sum();
                    }
                    r += (acc - lambda * next[i]).abs();
                }
                r
            };
            if residual <= 1e-11 * lambda {
                return Ok((lambda, next));
            }
        }
        lambda_prev = lambda;
        v = next;
    }
    Err(Error::Convergence {
        iterations: PRESSURE_MAX_ITERS,
        residual: f64::NAN,
    })
}

/// Topological pressure: `log` of the Perron eigenvalue of the transfer
/// matrix, computed by deterministic power iteration.
pub fn pressure(psi: &Potential) -> Result<f64> {
    let shift = psi.table().max_value();
    let m = transfer_matrix_scaled(psi, shift)?;
    let (lambda, _) = dominant_eigen(&m, false)?;
    Ok(lambda.ln() + shift)
}

/// A Markov Gibbs equilibrium measure on the full shift.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovGibbsMeasure {
    alphabet: usize,
    state_len: usize,
    n_states: usize,
    transition: Vec<f64>,
    stationary: Vec<f64>,
    pressure: f64,
    gibbs_constant: f64,
    gibbs_checked_len: usize,
    exact: Option<ExactMarkov>,
}

impl MarkovGibbsMeasure {
    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn state_len(&self) -> usize {
        self.state_len
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn pressure(&self) -> f64 {
        self.pressure
    }

    pub fn gibbs_constant(&self) -> f64 {
        self.gibbs_constant
    }

    pub fn gibbs_checked_len(&self) -> usize {
        self.gibbs_checked_len
    }

    pub fn transition(&self, u: usize, v: usize) -> f64 {
        self.transition[u * self.n_states + v]
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn exact(&self) -> Option<&ExactMarkov> {
        self.exact.as_ref()
    }

    /// Loses the exact form (used when reweighting makes it meaningless).
    pub fn without_exact(mut self) -> Self {
        self.exact = None;
        self
    }

    /// Probability that the chain emits symbol `c` from state `u`, together
    /// with the successor state.
    pub fn step(&self, u: usize, c: usize) -> (usize, f64) {
        let v = (u % (self.n_states / self.alphabet.max(1)).max(1)) * self.alphabet + c;
        // state_len == 1 needs no truncation: n_states == alphabet
        let v = if self.state_len == 1 { c } else { v };
        (v, self.transition(u, v))
    }

    /// Mass of the one-sided cylinder given by `word`.
    pub fn cylinder_mass(&self, word: &[usize]) -> f64 {
        let k = word.len();
        if k == 0 {
            return 1.0;
        }
        if k < self.state_len {
            // marginal over all states extending the prefix
            let tail = self.n_states / self.alphabet.pow(k as u32);
            let mut prefix = 0usize;
            for &c in word {
                prefix = prefix * self.alphabet + c;
            }
            return (0..tail)
                .map(|rest| self.stationary[prefix * tail + rest])
                .sum();
        }
        let mut state = 0usize;
        for &c in &word[..self.state_len] {
            state = state * self.alphabet + c;
        }
        let mut mass = self.stationary[state];
        for &c in &word[self.state_len..] {
            let (next, p) = self.step(state, c);
            mass *= p;
            state = next;
        }
        mass
    }
}

/// Entropy rate of the Markov measure.
pub fn entropy(mu: &MarkovGibbsMeasure) -> f64 {
    let n = mu.n_states();
    let mut h = 0.0;
    for u in 0..n {
        let pu = mu.stationary()[u];
        if pu <= 0.0 {
            continue;
        }
        for v in 0..n {
            let t = mu.transition(u, v);
            if t > 0.0 {
                h -= pu * t * t.ln();
            }
        }
    }
    h
}

/// Exact expectation of a locally constant observable under the measure.
pub fn integrate(mu: &MarkovGibbsMeasure, phi: &TableObservable) -> Result<f64> {
    if phi.alphabet() != mu.alphabet() {
        return Err(Error::validation("alphabet mismatch"));
    }
    let k = phi.depth().max(mu.state_len());
    let count = (mu.alphabet() as f64).powi(k as i32);
    if count > 2e7 {
        return Err(Error::budget(format!(
            "refinement to depth {k} needs {count:.0} words"
        )));
    }
    let l = mu.alphabet();
    let d = phi.depth();
    let mut acc = 0.0;
    let mut word = vec![0usize; k];
    // depth-first over words of length k with the running mass
    fn rec(
        mu: &MarkovGibbsMeasure,
        phi: &TableObservable,
        l: usize,
        k: usize,
        d: usize,
        pos: usize,
        word: &mut Vec<usize>,
        acc: &mut f64,
    ) {
        if pos == k {
            let mut pat = 0usize;
            for &c in word[..d].iter() {
                pat = pat * l + c;
            }
            *acc += mu.cylinder_mass(word) * phi.value_at(pat);
            return;
        }
        for c in 0..l {
            word[pos] = c;
            rec(mu, phi, l, k, d, pos + 1, word, acc);
        }
    }
    rec(mu, phi, l, k, d, 0, &mut word, &mut acc);
    Ok(acc)
}

/// Default cylinder length for the Gibbs-constant scan.
pub fn default_gibbs_scan_len(alphabet: usize) -> usize {
    if alphabet <= 4 {
        8
    } else {
        6
    }
}

/// The Gibbs equilibrium state of `psi`, built from the left and right
/// Perron eigenvectors, with the Gibbs constant measured by an exhaustive
/// cylinder scan up to `default_gibbs_scan_len`.
pub fn equilibrium_measure(psi: &Potential) -> Result<MarkovGibbsMeasure> {
    equilibrium_measure_with(psi, default_gibbs_scan_len(psi.alphabet()))
}

pub fn equilibrium_measure_with(psi: &Potential, n_check: usize) -> Result<MarkovGibbsMeasure> {
    let shift = psi.table().max_value();
    let m = transfer_matrix_scaled(psi, shift)?;
    let (lambda, right) = dominant_eigen(&m, false)?;
    let (lambda_l, left) = dominant_eigen(&m, true)?;
    debug_assert!((lambda - lambda_l).abs() <= 1e-9 * lambda);
    let n = m.n_states;

    let mut transition = vec![0.0; n * n];
    for u in 0..n {
        let mut row_sum = 0.0;
        for v in 0..n {
            let t = m.get(u, v) * right[v] / (lambda * right[u]);
            transition[u * n + v] = t;
            row_sum += t;
        }
        // kill the O(eps) drift so row-stochasticity is exact to 1e-15
        for v in 0..n {
            transition[u * n + v] /= row_sum;
        }
    }

    let mut stationary: Vec<f64> = (0..n).map(|u| left[u] * right[u]).collect();
    let total: f64 = stationary.iter().sum();
    stationary.iter_mut().for_each(|x| *x /= total);
    // polish: a few steps of the exact left action of the transition matrix
    for _ in 0..64 {
        let mut next = vec![0.0; n];
        for u in 0..n {
            let pu = stationary[u];
            if pu == 0.0 {
                continue;
            }
            for v in 0..n {
                next[v] += pu * transition[u * n + v];
            }
        }
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= s);
        stationary = next;
    }

    let mut mu = MarkovGibbsMeasure {
        alphabet: m.alphabet,
        state_len: m.state_len,
        n_states: n,
        transition,
        stationary,
        pressure: lambda.ln() + shift,
        gibbs_constant: 1.0,
        gibbs_checked_len: 0,
        exact: None,
    };
    let (k, checked) = gibbs_constant_scan(&mu, psi, n_check)?;
    mu.gibbs_constant = k;
    mu.gibbs_checked_len = checked;

    // the measure must attain the variational supremum
    let gap = (entropy(&mu) + integrate(&mu, psi.table())? - mu.pressure).abs();
    if gap > 1e-9 {
        return Err(Error::Convergence {
            iterations: PRESSURE_MAX_ITERS,
            residual: gap,
        });
    }
    Ok(mu)
}

/// Builds the measure directly from Bernoulli weights (no eigen-solve) and
/// attaches the exact rational form. Weights are normalized exactly.
pub fn bernoulli_measure_rational(weights: &[(i64, i64)]) -> Result<MarkovGibbsMeasure> {
    let exact = ExactMarkov::bernoulli(weights)?;
    let l = exact.alphabet;
    let probs: Vec<f64> = exact.stationary.iter().map(exact::ratio_to_f64).collect();
    let mut transition = vec![0.0; l * l];
    for u in 0..l {
        for v in 0..l {
            transition[u * l + v] = probs[v];
        }
    }
    let psi = Potential::bernoulli(&probs)?;
    let mut mu = MarkovGibbsMeasure {
        alphabet: l,
        state_len: 1,
        n_states: l,
        transition,
        stationary: probs,
        pressure: 0.0,
        gibbs_constant: 1.0,
        gibbs_checked_len: 0,
        exact: Some(exact),
    };
    let (k, checked) = gibbs_constant_scan(&mu, &psi, default_gibbs_scan_len(l))?;
    mu.gibbs_constant = k;
    mu.gibbs_checked_len = checked;
    Ok(mu)
}

/// Measures the Gibbs constant: the smallest `K` with
/// `1/K <= mu([w]_k) / exp(-P k + S_k psi(w-periodic)) <= K`
/// over all words of length `k <= n_check`. Birkhoff sums are taken along the
/// periodic extension of the word, a point of the one-sided cylinder.
pub fn gibbs_constant_scan(
    mu: &MarkovGibbsMeasure,
    psi: &Potential,
    n_check: usize,
) -> Result<(f64, usize)> {
    let l = mu.alphabet();
    let mut total_words = 0usize;
    for k in 1..=n_check {
        total_words = total_words
            .checked_add(l.pow(k as u32))
            .ok_or_else(|| Error::budget("cylinder scan too large"))?;
    }
    if total_words > 20_000_000 {
        return Err(Error::budget(format!(
            "cylinder scan of {total_words} words exceeds the budget"
        )));
    }
    let d = psi.depth();
    let p = mu.pressure();
    let mut worst: f64 = 1.0;
    let mut word = vec![0usize; n_check];

    fn scan(
        mu: &MarkovGibbsMeasure,
        psi: &Potential,
        l: usize,
        d: usize,
        p: f64,
        word: &mut Vec<usize>,
        pos: usize,
        n_check: usize,
        worst: &mut f64,
    ) {
        if pos > 0 {
            let k = pos;
            let mass = mu.cylinder_mass(&word[..k]);
            let mut s = 0.0;
            for i in 0..k {
                let mut pat = 0usize;
                for j in 0..d {
                    pat = pat * l + word[(i + j) % k];
                }
                s += psi.table().value_at(pat);
            }
            let reference = (-p * k as f64 + s).exp();
            if reference > 0.0 && mass > 0.0 {
                let ratio = mass / reference;
                *worst = worst.max(ratio).max(1.0 / ratio);
            }
        }
        if pos == n_check {
            return;
        }
        for c in 0..l {
            word[pos] = c;
            scan(mu, psi, l, d, p, word, pos + 1, n_check, worst);
        }
    }
    scan(mu, psi, l, d, p, &mut word, 0, n_check, &mut worst);
    Ok((worst, n_check))
}

/// The pressure curve `Q(t) = P(psi + t phi) - P(psi)` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureCurve {
    pub ts: Vec<f64>,
    pub q: Vec<f64>,
    pub convex_on_grid: bool,
    pub derivative_at_zero: f64,
    pub mu_phi: f64,
}

pub fn pressure_curve(
    psi: &Potential,
    phi: &TableObservable,
    t_grid: &[f64],
) -> Result<PressureCurve> {
    let p0 = pressure(psi)?;
    let mut q = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        q.push(pressure(&psi.tilted(phi, t)?)? - p0);
    }
    let mut convex = true;
    for w in t_grid.windows(3).zip(q.windows(3)) {
        let (ts, qs) = w;
        let left = (qs[1] - qs[0]) / (ts[1] - ts[0]);
        let right = (qs[2] - qs[1]) / (ts[2] - ts[1]);
        if right < left - 1e-9 {
            convex = false;
        }
    }
    let h = 1e-4;
    let dq = (pressure(&psi.tilted(phi, h)?)? - pressure(&psi.tilted(phi, -h)?)?) / (2.0 * h);
    let mu = equilibrium_measure_with(psi, 1)?;
    let mu_phi = integrate(&mu, phi)?;
    Ok(PressureCurve {
        ts: t_grid.to_vec(),
        q,
        convex_on_grid: convex,
        derivative_at_zero: dq,
        mu_phi,
    })
}

/// Value of the Legendre rate function `I(s) = sup_t (t s - Q(t))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateValue {
    pub value: f64,
    pub argmax: Option<f64>,
    /// Set when the supremum ran away to the cap: `s` lies outside the closed
    /// range of `Q'`, and the true value is `+inf`.
    pub saturated: bool,
}

/// Evaluates `I(s)` by bracketing and golden-section maximization of the
/// concave map `t -> t s - Q(t)`.
pub fn rate_function(psi: &Potential, phi: &TableObservable, s: f64) -> Result<RateValue> {
    let p0 = pressure(psi)?;
    let g = |t: f64| -> Result<f64> { Ok(t * s - (pressure(&psi.tilted(phi, t)?)? - p0)) };

    let spread = (phi.max_value() - phi.min_value()).max(1e-12);
    let t_cap = 2000.0 / spread;

    // direction of ascent away from zero
    let h = 1e-6 / spread.max(1e-6);
    let up = g(h)?;
    let down = g(-h)?;
    let zero = g(0.0)?;
    let dir = if up >= zero && up >= down {
        1.0
    } else if down > zero {
        -1.0
    } else {
        // t = 0 is already the max: I(s) = -Q(0) = 0 up to roundoff
        return Ok(RateValue {
            value: zero.max(0.0),
            argmax: Some(0.0),
            saturated: false,
        });
    };

    // expand a bracket containing the max of the concave map
    let (mut lo, mut hi): (f64, f64);
    {
        let mut t_prev = 0.0f64;
        let mut t_cur = dir / spread;
        let mut g_cur = g(t_cur)?;
        if g_cur < zero {
            // overshot on the first step: the max sits between 0 and t_cur
            lo = t_cur.min(0.0);
            hi = t_cur.max(0.0);
        } else {
            loop {
                let t_next = t_cur * 2.0;
                if t_next.abs() > t_cap {
                    // no interior bracket: either s is at the boundary of the
                    // range of Q' (finite limit) or beyond it (infinite rate)
                    let g1 = g(dir * t_cap * 0.9)?;
                    let g2 = g(dir * t_cap)?;
                    let tail_slope = (g2 - g1) / (t_cap * 0.1);
                    if tail_slope > 1e-8 * (1.0 + s.abs()) {
                        return Ok(RateValue {
                            value: f64::INFINITY,
                            argmax: None,
                            saturated: true,
                        });
                    }
                    return Ok(RateValue {
                        value: g2.max(0.0),
                        argmax: None,
                        saturated: false,
                    });
                }
                let g_next = g(t_next)?;
                if g_next < g_cur {
                    lo = t_prev.min(t_next);
                    hi = t_prev.max(t_next);
                    break;
                }
                t_prev = t_cur;
                t_cur = t_next;
                g_cur = g_next;
            }
        }
    }

    // golden-section maximization on [lo, hi]
    let phi_ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - phi_ratio * (hi - lo);
    let mut x2 = lo + phi_ratio * (hi - lo);
    let mut f1 = g(x1)?;
    let mut f2 = g(x2)?;
    while hi - lo > 1e-10 * (1.0 + lo.abs().max(hi.abs())) {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi_ratio * (hi - lo);
            f2 = g(x2)?;
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi_ratio * (hi - lo);
            f1 = g(x1)?;
        }
    }
    let t_star = 0.5 * (lo + hi);
    let value = g(t_star)?.max(0.0);
    Ok(RateValue {
        value,
        argmax: Some(t_star),
        saturated: false,
    })
}

/// The variational deviation bound
/// `sup { h_nu + nu(psi) - P : |nu(phi - mu(phi))| >= eps } = -min(I(eps), I(-eps))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationBound {
    pub bound: f64,
    pub mu_phi: f64,
    /// The centered observable is (numerically) a coboundary: zero variance.
    pub degenerate: bool,
    /// No invariant measure satisfies the constraint; the supremum over the
    /// empty set is `-inf`.
    pub empty_constraint: bool,
}

pub fn deviation_bound(psi: &Potential, phi: &TableObservable, eps: f64) -> Result<DeviationBound> {
    if eps < 0.0 {
        return Err(Error::validation("epsilon must be nonnegative"));
    }
    let mu = equilibrium_measure_with(psi, 1)?;
    let mu_phi = integrate(&mu, phi)?;
    let centered = phi.shifted_by(-mu_phi);

    if eps == 0.0 {
        return Ok(DeviationBound {
            bound: 0.0,
            mu_phi,
            degenerate: false,
            empty_constraint: false,
        });
    }

    // degenerate boundary: phi cohomologous to a constant has no deviations
    let spread: f64 = (0..centered.depth())
        .map(|k| variation(&centered, k).value)
        .fold(0.0, f64::max);
    let degenerate = if spread < 1e-13 {
        true
    } else {
        let p_max = livsic_budget_p(centered.alphabet());
        matches!(
            crate::shift::livsic_test(&centered, p_max, crate::shift::LIVSIC_TOL)?,
            LivsicVerdict::Coboundary { .. }
        )
    };
    if degenerate {
        return Ok(DeviationBound {
            bound: 0.0,
            mu_phi,
            degenerate: true,
            empty_constraint: false,
        });
    }

    let up = rate_function(psi, &centered, eps)?;
    let down = rate_function(psi, &centered, -eps)?;
    let best = up.value.min(down.value);
    if best.is_infinite() {
        return Ok(DeviationBound {
            bound: f64::NEG_INFINITY,
            mu_phi,
            degenerate: false,
            empty_constraint: true,
        });
    }
    Ok(DeviationBound {
        bound: -best,
        mu_phi,
        degenerate: false,
        empty_constraint: false,
    })
}

fn livsic_budget_p(alphabet: usize) -> usize {
    let mut p = 1usize;
    let mut total = 0usize;
    while p < 8 {
        let next = total + alphabet.pow((p + 1) as u32);
        if next > 2_000_000 {
            break;
        }
        total = next;
        p += 1;
    }
    p
}

/// Exact mass of the deviation set `{ |S_n phi| >= n eps }` (and its strict
/// variant) by full enumeration of one-sided words of length `n + depth - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactDeviation {
    pub p_ge: f64,
    pub p_gt: f64,
    pub exact_ge: Option<num_rational::BigRational>,
    pub exact_gt: Option<num_rational::BigRational>,
    pub words: u64,
}

pub fn exact_deviation_probability(
    mu: &MarkovGibbsMeasure,
    phi: &TableObservable,
    n: usize,
    eps: f64,
) -> Result<ExactDeviation> {
    if n == 0 {
        return Err(Error::validation("n must be positive"));
    }
    if phi.alphabet() != mu.alphabet() {
        return Err(Error::validation("alphabet mismatch"));
    }
    let word_len = n + phi.depth() - 1;
    let nats = word_len as f64 * (mu.alphabet() as f64).ln();
    if nats > ENUMERATION_BUDGET_NATS {
        return Err(Error::budget(format!(
            "{word_len} symbols at alphabet {} is {nats:.1} nats (cap {ENUMERATION_BUDGET_NATS}); use Monte Carlo",
            mu.alphabet()
        )));
    }
    match mu.exact() {
        Some(exact) => {
            let (rge, rgt, words) = exact.deviation_mass(phi, n, eps)?;
            Ok(ExactDeviation {
                p_ge: exact::ratio_to_f64(&rge),
                p_gt: exact::ratio_to_f64(&rgt),
                exact_ge: Some(rge),
                exact_gt: Some(rgt),
                words,
            })
        }
        None => {
            let (p_ge, p_gt, words) = float_deviation_mass(mu, phi, n, eps);
            Ok(ExactDeviation {
                p_ge,
                p_gt,
                exact_ge: None,
                exact_gt: None,
                words,
            })
        }
    }
}

fn float_deviation_mass(
    mu: &MarkovGibbsMeasure,
    phi: &TableObservable,
    n: usize,
    eps: f64,
) -> (f64, f64, u64) {
    let l = mu.alphabet();
    let d = phi.depth();
    let word_len = n + d - 1;
    let threshold = n as f64 * eps;
    let mut p_ge = 0.0;
    let mut p_gt = 0.0;
    let mut words = 0u64;
    let mut word = vec![0usize; word_len];

    struct Ctx<'a> {
        mu: &'a MarkovGibbsMeasure,
        phi: &'a TableObservable,
        l: usize,
        d: usize,
        n: usize,
        word_len: usize,
        threshold: f64,
    }
    fn rec(
        c: &Ctx,
        word: &mut Vec<usize>,
        pos: usize,
        p_ge: &mut f64,
        p_gt: &mut f64,
        words: &mut u64,
    ) {
        if pos == c.word_len {
            let mass = c.mu.cylinder_mass(word);
            let mut s = 0.0;
            for i in 0..c.n {
                let mut pat = 0usize;
                for j in 0..c.d {
                    pat = pat * c.l + word[i + j];
                }
                s += c.phi.value_at(pat);
            }
            *words += 1;
            if s.abs() >= c.threshold {
                *p_ge += mass;
            }
            if s.abs() > c.threshold {
                *p_gt += mass;
            }
            return;
        }
        for sym in 0..c.l {
            word[pos] = sym;
            rec(c, word, pos + 1, p_ge, p_gt, words);
        }
    }
    let ctx = Ctx {
        mu,
        phi,
        l,
        d,
        n,
        word_len,
        threshold,
    };
    rec(&ctx, &mut word, 0, &mut p_ge, &mut p_gt, &mut words);
    (p_ge, p_gt, words)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;
    use num_traits::{FromPrimitive, Signed};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const KL_34_12: f64 = 0.130812035941137; // (3/4)ln(3/2) + (1/4)ln(1/2)

    fn pm_one() -> TableObservable {
        TableObservable::new(2, 1, vec![-1.0, 1.0]).unwrap()
    }

    #[test]
    fn transfer_matrix_examples() {
        let m = transfer_matrix(&Potential::zero(2)).unwrap();
        assert_eq!(m.n_states, 2);
        for u in 0..2 {
            let row_sum: f64 = m.row(u).iter().sum();
            assert!((row_sum - 2.0).abs() < 1e-15);
        }

        let psi = Potential::bernoulli(&[1.0, 2.0]).unwrap();
        let m = transfer_matrix(&psi).unwrap();
        // column-constant: entry (u, v) = p_v
        for v in 0..2 {
            assert!((m.get(0, v) - m.get(1, v)).abs() < 1e-15);
        }
        let (lambda, _) = dominant_eigen(&m, false).unwrap();
        assert!((lambda - 1.0).abs() < 1e-12);
        assert!(m.data.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn pressure_of_zero_potential_is_log_alphabet() {
        for l in 2..=6usize {
            let p = pressure(&Potential::zero(l)).unwrap();
            assert!((p - (l as f64).ln()).abs() < 1e-12, "L = {l}");
        }
    }

    #[test]
    fn normalized_bernoulli_has_zero_pressure() {
        let psi = Potential::bernoulli(&[0.3, 0.2, 0.5]).unwrap();
        assert!(pressure(&psi).unwrap().abs() < 1e-12);
    }

    #[test]
    fn pressure_shift_property() {
        let psi = Potential::new(TableObservable::new(2, 2, vec![0.1, -0.4, 0.7, 0.2]).unwrap());
        let p0 = pressure(&psi).unwrap();
        let shifted = Potential::new(psi.table().shifted_by(1.3));
        assert!((pressure(&shifted).unwrap() - p0 - 1.3).abs() < 1e-12);
    }

    #[test]
    fn equilibrium_of_zero_potential_is_uniform() {
        let mu = equilibrium_measure(&Potential::zero(3)).unwrap();
        for &p in mu.stationary() {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
        assert!((entropy(&mu) - 3f64.ln()).abs() < 1e-12);
        assert!(mu.gibbs_constant() <= 1.0 + 1e-9);
    }

    #[test]
    fn bernoulli_equilibrium_matches_weights() {
        let psi = Potential::bernoulli(&[1.0, 2.0]).unwrap();
        let mu = equilibrium_measure(&psi).unwrap();
        assert!((mu.stationary()[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((mu.stationary()[1] - 2.0 / 3.0).abs() < 1e-12);
        assert!(mu.gibbs_constant() <= 1.0 + 1e-9);
        // entropy of Bernoulli(1/3, 2/3)
        assert!((entropy(&mu) - 0.6365141682948129).abs() < 1e-12);
        // variational identity h + mu(psi) = P
        let p = mu.pressure();
        let mu_psi = integrate(&mu, psi.table()).unwrap();
        assert!((entropy(&mu) + mu_psi - p).abs() < 1e-9);
    }

    #[test]
    fn psi_hat_realigns_the_variational_identity() {
        // h_nu - nu(psi_hat) = h_nu + nu(psi) - P, zero at the equilibrium
        let psi = Potential::new(TableObservable::new(2, 2, vec![0.3, -0.2, 0.8, -1.0]).unwrap());
        let p = pressure(&psi).unwrap();
        let hat = psi.psi_hat(p);
        let mu = equilibrium_measure_with(&psi, 2).unwrap();
        let gap = entropy(&mu) - integrate(&mu, &hat).unwrap();
        assert!(gap.abs() < 1e-9, "gap {gap}");
    }

    #[test]
    fn markov_invariants_hold() {
        let psi = Potential::new(TableObservable::new(2, 2, vec![0.4, -0.3, 0.9, -1.1]).unwrap());
        let mu = equilibrium_measure(&psi).unwrap();
        let n = mu.n_states();
        for u in 0..n {
            let s: f64 = (0..n).map(|v| mu.transition(u, v)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        for v in 0..n {
            let s: f64 = (0..n)
                .map(|u| mu.stationary()[u] * mu.transition(u, v))
                .sum();
            assert!((s - mu.stationary()[v]).abs() < 1e-12);
        }
        let p = mu.pressure();
        let h = entropy(&mu);
        let mu_psi = integrate(&mu, psi.table()).unwrap();
        assert!((h + mu_psi - p).abs() < 1e-9);
    }

    #[test]
    fn gibbs_constant_is_stable_beyond_the_scan() {
        let psi = Potential::new(TableObservable::new(2, 2, vec![0.4, -0.3, 0.9, -1.1]).unwrap());
        let mu = equilibrium_measure_with(&psi, 8).unwrap();
        let k = mu.gibbs_constant();
        assert!(k >= 1.0);
        // the same constant keeps working on longer cylinders
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let len = 11usize;
            let word: Vec<usize> = (0..len).map(|_| rng.gen_range(0..2)).collect();
            let mass = mu.cylinder_mass(&word);
            let mut s = 0.0;
            for i in 0..len {
                let pat = word[i] * 2 + word[(i + 1) % len];
                s += psi.table().value_at(pat);
            }
            let reference = (-mu.pressure() * len as f64 + s).exp();
            let ratio = mass / reference;
            assert!(ratio <= k * (1.0 + 1e-9) && ratio >= 1.0 / (k * (1.0 + 1e-9)));
        }
    }

    #[test]
    fn variational_gap_against_random_markov_measures() {
        let psi = Potential::bernoulli(&[1.0, 3.0]).unwrap();
        let mu = equilibrium_measure(&psi).unwrap();
        let p = mu.pressure();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            // random 2-state row-stochastic matrix
            let q01: f64 = rng.gen_range(0.02..0.98);
            let q10: f64 = rng.gen_range(0.02..0.98);
            let p0 = q10 / (q01 + q10);
            let p1 = 1.0 - p0;
            let hent = |q: f64| -> f64 { -(q * q.ln() + (1.0 - q) * (1.0 - q).ln()) };
            let h = p0 * hent(q01) + p1 * hent(q10);
            let nu_psi = p0 * psi.table().value_at(0) + p1 * psi.table().value_at(1);
            let gap = h + nu_psi - p;
            // strictly below unless the sampled chain reproduces the equilibrium
            let is_equilibrium =
                (q01 - mu.stationary()[1]).abs() < 5e-3 && (q10 - mu.stationary()[0]).abs() < 5e-3;
            if !is_equilibrium {
                assert!(gap < 0.0, "gap {gap} at q01={q01} q10={q10}");
            }
        }
    }

    #[test]
    fn pressure_curve_examples() {
        let psi = Potential::bernoulli(&[1.0, 1.0]).unwrap();
        let zero = TableObservable::constant(2, 0.0);
        let grid: Vec<f64> = (-5..=5).map(|i| i as f64 * 0.4).collect();
        let curve = pressure_curve(&psi, &zero, &grid).unwrap();
        assert!(curve.q.iter().all(|&q| q.abs() < 1e-12));

        let curve = pressure_curve(&psi, &pm_one(), &grid).unwrap();
        for (t, q) in curve.ts.iter().zip(curve.q.iter()) {
            assert!((q - t.cosh().ln()).abs() < 1e-10, "t = {t}");
            assert!(*q >= t * curve.mu_phi - 1e-12);
        }
        assert!(curve.convex_on_grid);
        assert!((curve.derivative_at_zero - curve.mu_phi).abs() < 1e-6);
    }

    #[test]
    fn rate_function_examples() {
        let psi = Potential::bernoulli(&[1.0, 1.0]).unwrap();
        let phi = pm_one();
        let at_mean = rate_function(&psi, &phi, 0.0).unwrap();
        assert!(at_mean.value.abs() < 1e-10);

        let at_half = rate_function(&psi, &phi, 0.5).unwrap();
        assert!((at_half.value - KL_34_12).abs() < 1e-6);

        // monotone on s > mean
        let mut prev = 0.0;
        for i in 1..8 {
            let s = i as f64 * 0.1;
            let v = rate_function(&psi, &phi, s).unwrap().value;
            assert!(v >= prev - 1e-10);
            prev = v;
        }

        // outside the achievable range
        let beyond = rate_function(&psi, &phi, 1.5).unwrap();
        assert!(beyond.saturated && beyond.value.is_infinite());
    }

    #[test]
    fn deviation_bound_examples() {
        let psi = Potential::bernoulli(&[1.0, 1.0]).unwrap();
        let phi = pm_one();
        let at_zero = deviation_bound(&psi, &phi, 0.0).unwrap();
        assert_eq!(at_zero.bound, 0.0);

        let b = deviation_bound(&psi, &phi, 0.5).unwrap();
        assert!((b.bound + KL_34_12).abs() < 1e-4);

        // non-increasing in eps
        let mut prev = 0.0;
        for i in 1..10 {
            let eps = i as f64 * 0.1;
            let b = deviation_bound(&psi, &phi, eps).unwrap();
            if b.empty_constraint {
                continue;
            }
            assert!(b.bound <= prev + 1e-10);
            prev = b.bound;
        }

        // degenerate: a coboundary observable
        let chi = TableObservable::new(2, 1, vec![0.2, -0.7]).unwrap();
        let mut cob_vals = Vec::new();
        for p in 0..4usize {
            let x0 = p >> 1;
            let x1 = p & 1;
            cob_vals.push(chi.value_at(x1) - chi.value_at(x0));
        }
        let cob = TableObservable::new(2, 2, cob_vals).unwrap();
        let b = deviation_bound(&psi, &cob, 0.3).unwrap();
        assert!(b.degenerate);
        assert_eq!(b.bound, 0.0);

        // empty constraint set
        let b = deviation_bound(&psi, &phi, 2.5).unwrap();
        assert!(b.empty_constraint && b.bound == f64::NEG_INFINITY);
    }

    #[test]
    fn legendre_bound_matches_brute_force_two_state_search() {
        // independent oracle: direct search over 2-state Markov measures
        let psi = Potential::bernoulli(&[1.0, 1.0]).unwrap();
        let phi = pm_one();
        for &eps in &[0.3, 0.5, 0.7] {
            let legendre = deviation_bound(&psi, &phi, eps).unwrap().bound;
            let brute = brute_force_two_state(psi.table(), &phi, eps, 400);
            assert!(
                (legendre - brute).abs() < 1e-4,
                "eps={eps}: {legendre} vs {brute}"
            );
        }
    }

    fn brute_force_two_state(
        psi: &TableObservable,
        phi: &TableObservable,
        eps: f64,
        grid: usize,
    ) -> f64 {
        let p_pressure = pressure(&Potential::new(psi.clone())).unwrap();
        let mut best = f64::NEG_INFINITY;
        let eval = |q01: f64, q10: f64| -> f64 {
            let p0 = q10 / (q01 + q10);
            let p1 = 1.0 - p0;
            let hent =
                |q: f64| -> f64 { -(q * q.ln() + (1.0 - q) * (1.0 - q).ln()).max(-f64::MAX) };
            let h = p0 * hent(q01) + p1 * hent(q10);
            let nu_phi = p0 * phi.value_at(0) + p1 * phi.value_at(1);
            let nu_psi = p0 * psi.value_at(0) + p1 * psi.value_at(1);
            if nu_phi.abs() >= eps {
                h + nu_psi - p_pressure
            } else {
                f64::NEG_INFINITY
            }
        };
        let mut best_q = (0.5, 0.5);
        for i in 1..grid {
            for j in 1..grid {
                let q01 = i as f64 / grid as f64;
                let q10 = j as f64 / grid as f64;
                let v = eval(q01, q10);
                if v > best {
                    best = v;
                    best_q = (q01, q10);
                }
            }
        }
        // two rounds of local refinement around the best grid point
        let mut span = 1.0 / grid as f64;
        for _ in 0..2 {
            let (cq01, cq10) = best_q;
            for i in 0..=40 {
                for j in 0..=40 {
                    let q01 = (cq01 - span + i as f64 * span / 20.0).clamp(1e-6, 1.0 - 1e-6);
                    let q10 = (cq10 - span + j as f64 * span / 20.0).clamp(1e-6, 1.0 - 1e-6);
                    let v = eval(q01, q10);
                    if v > best {
                        best = v;
                        best_q = (q01, q10);
                    }
                }
            }
            span /= 20.0;
        }
        best
    }

    #[test]
    fn exact_binomial_deviation_at_n20() {
        let mu = bernoulli_measure_rational(&[(1, 2), (1, 2)]).unwrap();
        let out = exact_deviation_probability(&mu, &pm_one(), 20, 0.5).unwrap();
        let expect = BigRational::new(43400.into(), 1048576.into());
        assert_eq!(out.exact_ge.as_ref().unwrap(), &expect);
        assert!((out.p_ge - 0.04138946533203125).abs() < 1e-15);
        // the strict variant drops the |S| = 10 shell
        let strict = BigRational::new(12392.into(), 1048576.into());
        assert_eq!(out.exact_gt.as_ref().unwrap(), &strict);
        // (1/n) log p, computed from the exact rational
        let rate = out.p_ge.ln() / 20.0;
        assert!((rate - (-0.1592364445555205)).abs() < 1e-12);
    }

    #[test]
    fn exact_deviation_edge_cases() {
        let mu = bernoulli_measure_rational(&[(1, 2), (1, 2)]).unwrap();
        let out = exact_deviation_probability(&mu, &pm_one(), 10, 1.5).unwrap();
        assert_eq!(out.p_ge, 0.0);
        let out = exact_deviation_probability(&mu, &pm_one(), 10, 0.0).unwrap();
        assert_eq!(out.p_ge, 1.0);
        assert!(exact_deviation_probability(&mu, &pm_one(), 60, 0.5).is_err());
    }

    #[test]
    fn float_enumeration_agrees_with_rational() {
        let mu = bernoulli_measure_rational(&[(1, 3), (2, 3)]).unwrap();
        let phi = TableObservable::new(2, 2, vec![0.5, -1.0, 0.25, 1.5]).unwrap();
        // dyadic threshold so both arithmetics resolve ties identically
        let with_exact = exact_deviation_probability(&mu, &phi, 10, 0.375).unwrap();
        let float_only = {
            let mu2 = mu.clone().without_exact();
            exact_deviation_probability(&mu2, &phi, 10, 0.375).unwrap()
        };
        assert!((with_exact.p_ge - float_only.p_ge).abs() < 1e-12);
        let r = with_exact.exact_ge.unwrap();
        let as_f = BigRational::from_f64(float_only.p_ge).unwrap();
        // float accumulation of dyadic-free masses only matches approximately
        let diff = (&r - &as_f).abs();
        assert!(exact::ratio_to_f64(&diff) < 1e-12);
    }
}
