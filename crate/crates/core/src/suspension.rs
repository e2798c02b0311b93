//! Suspension flows over the shift with a positive locally constant roof:
//! lap numbers, flow evolution, fiber integrals and the time-decomposition,
//! the fiber-centered observable, sampling of the induced measure, and
//! exact exponential-tail estimation.

use rand::Rng;

use crate::error::{Error, Result};
use crate::shift::{Configuration, TableObservable};
use crate::thermo::{integrate, MarkovGibbsMeasure};

/// A roof function: a locally constant table bounded below by `r0 > 0`,
/// optionally carrying declared exponential-tail parameters `(eps0, c0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Roof {
    table: TableObservable,
    r0: f64,
    declared_tail: Option<(f64, f64)>,
}

impl Roof {
    pub fn new(table: TableObservable, r0: f64) -> Result<Self> {
        if !(r0 > 0.0) {
            return Err(Error::validation("roof lower bound must be positive"));
        }
        if table.min_value() < r0 {
            return Err(Error::validation(format!(
                "roof value {} below the declared bound {r0}",
                table.min_value()
            )));
        }
        Ok(Roof {
            table,
            r0,
            declared_tail: None,
        })
    }

    /// Declares tail parameters; they take precedence over a fitted tail.
    pub fn with_declared_tail(mut self, eps0: f64, c0: f64) -> Result<Self> {
        if !(eps0 > 0.0) || !(c0 > 0.0) {
            return Err(Error::validation("tail parameters must be positive"));
        }
        self.declared_tail = Some((eps0, c0));
        Ok(self)
    }

    pub fn declared_tail(&self) -> Option<(f64, f64)> {
        self.declared_tail
    }

    /// Constant roof of height `c`.
    pub fn constant(alphabet: usize, c: f64) -> Result<Self> {
        Self::new(TableObservable::constant(alphabet, c), c)
    }

    pub fn table(&self) -> &TableObservable {
        &self.table
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn alphabet(&self) -> usize {
        self.table.alphabet()
    }

    pub fn depth(&self) -> usize {
        self.table.depth()
    }

    pub fn max_value(&self) -> f64 {
        self.table.max_value()
    }

    pub fn eval(&self, x: &Configuration) -> Result<f64> {
        self.table.eval(x)
    }

    pub fn value_at(&self, pattern: usize) -> f64 {
        self.table.value_at(pattern)
    }
}

/// A point of the suspension space: a base configuration and a height
/// `0 <= s < r(base)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SuspensionPoint {
    pub base: Configuration,
    pub height: f64,
}

impl SuspensionPoint {
    pub fn new(base: Configuration, height: f64, roof: &Roof) -> Result<Self> {
        let r = roof.eval(&base)?;
        if !(0.0..r).contains(&height) {
            return Err(Error::validation(format!(
                "height {height} outside [0, {r})"
            )));
        }
        Ok(SuspensionPoint { base, height })
    }
}

/// One fiber of a flow observable: a polynomial below the cut, another at and
/// above it. `cut = +inf` means a single polynomial everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct Fiber {
    pub below: Vec<f64>,
    pub cut: f64,
    pub above: Vec<f64>,
}

impl Fiber {
    pub fn poly(coeffs: Vec<f64>) -> Self {
        Fiber {
            below: coeffs,
            cut: f64::INFINITY,
            above: Vec::new(),
        }
    }

    /// Indicator-style step: `value` on `[0, cut)`, zero afterwards.
    pub fn step(value: f64, cut: f64) -> Self {
        Fiber {
            below: vec![value],
            cut,
            above: Vec::new(),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t < self.cut {
            poly_eval(&self.below, t)
        } else {
            poly_eval(&self.above, t)
        }
    }

    /// `int_0^u` of the fiber.
    pub fn integral_to(&self, u: f64) -> f64 {
        if u <= self.cut {
            poly_integral(&self.below, 0.0, u)
        } else {
            poly_integral(&self.below, 0.0, self.cut) + poly_integral(&self.above, self.cut, u)
        }
    }

    /// Rigorous upper bound for `sup |fiber|` on `[0, hi]`.
    pub fn sup_abs_on(&self, hi: f64) -> f64 {
        let mut worst: f64 = 0.0;
        let lo_cut = self.cut.min(hi);
        if lo_cut > 0.0 {
            worst = worst.max(poly_abs_max(&self.below, 0.0, lo_cut));
        }
        if hi > self.cut {
            worst = worst.max(poly_abs_max(&self.above, self.cut, hi));
        }
        worst
    }
}

fn poly_eval(coeffs: &[f64], t: f64) -> f64 {
    let mut acc = 0.0;
    for &c in coeffs.iter().rev() {
        acc = acc * t + c;
    }
    acc
}

fn poly_integral(coeffs: &[f64], lo: f64, hi: f64) -> f64 {
    let anti = |t: f64| -> f64 {
        let mut acc = 0.0;
        for (k, &c) in coeffs.iter().enumerate().rev() {
            acc += c * t.powi(k as i32 + 1) / (k as f64 + 1.0);
        }
        acc
    };
    anti(hi) - anti(lo)
}

/// Grid maximum of `|p|` padded by a Lipschitz term, so the result is an
/// upper bound for the true sup on `[lo, hi]`.
fn poly_abs_max(coeffs: &[f64], lo: f64, hi: f64) -> f64 {
    if coeffs.is_empty() || hi <= lo {
        return 0.0;
    }
    let scale = lo.abs().max(hi.abs()).max(1.0);
    let dmax: f64 = coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &c)| k as f64 * c.abs() * scale.powi(k as i32 - 1))
        .sum();
    let steps = 512;
    let h = (hi - lo) / steps as f64;
    let mut worst: f64 = 0.0;
    for i in 0..=steps {
        worst = worst.max(poly_eval(coeffs, lo + i as f64 * h).abs());
    }
    worst + dmax * h / 2.0
}

/// A flow observable: per-pattern fibers over a locally constant base.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowObservable {
    alphabet: usize,
    depth: usize,
    fibers: Vec<Fiber>,
}

impl FlowObservable {
    pub fn new(alphabet: usize, depth: usize, fibers: Vec<Fiber>) -> Result<Self> {
        let expect = alphabet
            .checked_pow(depth as u32)
            .ok_or_else(|| Error::budget("alphabet^depth overflows"))?;
        if fibers.len() != expect {
            return Err(Error::validation(format!(
                "{} fibers given, expected {expect}",
                fibers.len()
            )));
        }
        Ok(FlowObservable {
            alphabet,
            depth,
            fibers,
        })
    }

    /// Fiber-constant observable `phi(x, t) = base(x)`.
    pub fn fiber_constant(base: &TableObservable) -> Self {
        FlowObservable {
            alphabet: base.alphabet(),
            depth: base.depth(),
            fibers: base
                .values()
                .iter()
                .map(|&v| Fiber::poly(vec![v]))
                .collect(),
        }
    }

    /// The same polynomial fiber over every base pattern.
    pub fn uniform(alphabet: usize, fiber: Fiber) -> Self {
        FlowObservable {
            alphabet,
            depth: 1,
            fibers: vec![fiber; alphabet],
        }
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn fibers(&self) -> &[Fiber] {
        &self.fibers
    }

    pub fn fiber_at(&self, pattern: usize) -> &Fiber {
        &self.fibers[pattern]
    }

    pub fn eval_at(&self, pattern: usize, t: f64) -> f64 {
        self.fibers[pattern].eval(t)
    }

    pub fn eval(&self, z: &SuspensionPoint) -> Result<f64> {
        let pat = z.base.pattern_index(0, self.depth)?;
        Ok(self.eval_at(pat, z.height))
    }

    /// True when every fiber vanishes at and above a finite cut; returns the
    /// common support bound `r_1`.
    pub fn compact_support(&self) -> Option<f64> {
        let mut r1: f64 = 0.0;
        for f in &self.fibers {
            if !f.cut.is_finite() {
                // an everywhere-zero polynomial is fine
                if f.below.iter().any(|&c| c != 0.0) {
                    return None;
                }
                continue;
            }
            if f.above.iter().any(|&c| c != 0.0) {
                return None;
            }
            r1 = r1.max(f.cut);
        }
        Some(r1)
    }

    /// Rigorous bound for `sup |phi|` over the suspension space with roof `r`.
    pub fn sup_abs(&self, roof: &Roof) -> Result<f64> {
        let depth = self.depth.max(roof.depth());
        let phi = self.refined(depth)?;
        let r = roof.table().refined(depth)?;
        let mut worst: f64 = 0.0;
        for (pat, fiber) in phi.fibers.iter().enumerate() {
            worst = worst.max(fiber.sup_abs_on(r.value_at(pat)));
        }
        Ok(worst)
    }

    /// The same observable at a deeper base table.
    pub fn refined(&self, depth: usize) -> Result<FlowObservable> {
        if depth < self.depth {
            return Err(Error::validation("cannot refine to a shallower depth"));
        }
        let extra = self.alphabet.pow((depth - self.depth) as u32);
        let mut fibers = Vec::with_capacity(self.fibers.len() * extra);
        for f in &self.fibers {
            for _ in 0..extra {
                fibers.push(f.clone());
            }
        }
        FlowObservable::new(self.alphabet, depth, fibers)
    }
}

/// The lap number `n(x, s, T)`: the unique `n` with `S_n r <= s + T < S_{n+1} r`.
pub fn lap_number(x: &Configuration, s: f64, t: f64, roof: &Roof) -> Result<u64> {
    if t < 0.0 {
        return Err(Error::validation("flow time must be nonnegative"));
    }
    let budget = s + t;
    let d = roof.depth();
    let mut acc = 0.0;
    let mut n = 0u64;
    loop {
        let r = roof.value_at(x.pattern_index(n as i64, d)?);
        if acc + r > budget {
            return Ok(n);
        }
        acc += r;
        n += 1;
    }
}

/// Flows `z` for time `t`: `(sigma^n x, s + t - S_n r)`.
pub fn flow_point(z: &SuspensionPoint, t: f64, roof: &Roof) -> Result<SuspensionPoint> {
    if t < 0.0 {
        return Err(Error::validation("flow time must be nonnegative"));
    }
    let budget = z.height + t;
    let d = roof.depth();
    let mut acc = 0.0;
    let mut n = 0i64;
    loop {
        let r = roof.value_at(z.base.pattern_index(n, d)?);
        if acc + r > budget {
            return Ok(SuspensionPoint {
                base: z.base.shifted(n),
                height: budget - acc,
            });
        }
        acc += r;
        n += 1;
    }
}

/// `phi_r(x) = int_0^{r(x)} phi(x, t) dt` at one configuration.
pub fn phi_r(phi: &FlowObservable, x: &Configuration, roof: &Roof) -> Result<f64> {
    let pat = x.pattern_index(0, phi.depth())?;
    let r = roof.eval(x)?;
    Ok(phi.fiber_at(pat).integral_to(r))
}

/// `phi_r` as a locally constant table on the common refinement depth.
pub fn phi_r_table(phi: &FlowObservable, roof: &Roof) -> Result<TableObservable> {
    if phi.alphabet() != roof.alphabet() {
        return Err(Error::validation("alphabet mismatch"));
    }
    let depth = phi.depth().max(roof.depth());
    let phi = phi.refined(depth)?;
    let r = roof.table().refined(depth)?;
    let values: Vec<f64> = phi
        .fibers()
        .iter()
        .enumerate()
        .map(|(pat, fiber)| fiber.integral_to(r.value_at(pat)))
        .collect();
    TableObservable::new(phi.alphabet(), depth, values)
}

/// The decomposition `int_0^T phi(f_t z) dt = S_n phi_r(x) + I_T(x, s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowIntegral {
    pub value: f64,
    /// `S_n phi_r(x)`.
    pub birkhoff_part: f64,
    /// `I_T(x, s)`: the two boundary fiber integrals.
    pub boundary_part: f64,
    pub laps: u64,
    /// `(s + r(sigma^n x)) * sup|phi|` dominates `|I_T|`; callers assert it.
    pub boundary_budget_height: f64,
}

pub fn flow_integral(
    phi: &FlowObservable,
    z: &SuspensionPoint,
    t: f64,
    roof: &Roof,
) -> Result<FlowIntegral> {
    if t < 0.0 {
        return Err(Error::validation("flow time must be nonnegative"));
    }
    let budget = z.height + t;
    let d_r = roof.depth();
    let d_f = phi.depth();
    let mut acc = 0.0;
    let mut birkhoff = 0.0;
    let mut n = 0i64;
    loop {
        let r = roof.value_at(z.base.pattern_index(n, d_r)?);
        if acc + r > budget {
            let u = budget - acc;
            let right = phi.fiber_at(z.base.pattern_index(n, d_f)?).integral_to(u);
            let left = phi
                .fiber_at(z.base.pattern_index(0, d_f)?)
                .integral_to(z.height);
            return Ok(FlowIntegral {
                value: birkhoff + right - left,
                birkhoff_part: birkhoff,
                boundary_part: right - left,
                laps: n as u64,
                boundary_budget_height: z.height + r,
            });
        }
        birkhoff += phi.fiber_at(z.base.pattern_index(n, d_f)?).integral_to(r);
        acc += r;
        n += 1;
    }
}

/// Direct adaptive-Simpson quadrature of `int_0^T phi(f_t z) dt`, used as an
/// independent check of the decomposition. The integrand is evaluated through
/// `flow_point` only.
pub fn flow_integral_quadrature(
    phi: &FlowObservable,
    z: &SuspensionPoint,
    t: f64,
    roof: &Roof,
    tol: f64,
) -> Result<f64> {
    let f = |u: f64| -> Result<f64> {
        let p = flow_point(z, u, roof)?;
        phi.eval(&p)
    };
    adaptive_simpson(&f, 0.0, t, tol, 60)
}

fn adaptive_simpson(
    f: &dyn Fn(f64) -> Result<f64>,
    lo: f64,
    hi: f64,
    tol: f64,
    max_depth: usize,
) -> Result<f64> {
    fn simpson(fl: f64, fm: f64, fr: f64, h: f64) -> f64 {
        h / 6.0 * (fl + 4.0 * fm + fr)
    }
    struct Rec<'a> {
        f: &'a dyn Fn(f64) -> Result<f64>,
        /// Panels wider than this are always refined: the integrand jumps at
        /// roof crossings, and a jump can fake a small Richardson delta at a
        /// coarse scale.
        max_accept_width: f64,
        /// Below this width a panel is accepted regardless: a jump panel of
        /// width w contributes at most O(|f| w).
        floor_width: f64,
    }
    impl Rec<'_> {
        #[allow(clippy::too_many_arguments)]
        fn go(
            &self,
            lo: f64,
            hi: f64,
            fl: f64,
            fm: f64,
            fr: f64,
            whole: f64,
            tol: f64,
            depth: usize,
        ) -> Result<f64> {
            let mid = 0.5 * (lo + hi);
            let lm = 0.5 * (lo + mid);
            let rm = 0.5 * (mid + hi);
            let flm = (self.f)(lm)?;
            let frm = (self.f)(rm)?;
            let left = simpson(fl, flm, fm, mid - lo);
            let right = simpson(fm, frm, fr, hi - mid);
            let delta = left + right - whole;
            let width = hi - lo;
            if width < self.floor_width
                || (delta.abs() <= 15.0 * tol && width <= self.max_accept_width)
            {
                return Ok(left + right + delta / 15.0);
            }
            if depth == 0 {
                return Err(Error::Convergence {
                    iterations: 0,
                    residual: delta.abs(),
                });
            }
            let a = self.go(lo, mid, fl, flm, fm, left, tol / 2.0, depth - 1)?;
            let b = self.go(mid, hi, fm, frm, fr, right, tol / 2.0, depth - 1)?;
            Ok(a + b)
        }
    }
    if hi <= lo {
        return Ok(0.0);
    }
    let fl = f(lo)?;
    let mid = 0.5 * (lo + hi);
    let fm = f(mid)?;
    let fr = f(hi)?;
    let whole = simpson(fl, fm, fr, hi - lo);
    let rec = Rec {
        f,
        max_accept_width: (hi - lo) / 1024.0,
        floor_width: 1e-13 * (1.0 + lo.abs() + hi.abs()),
    };
    rec.go(lo, hi, fl, fm, fr, whole, tol, max_depth)
}

/// The fiber-centered observable `rho(x, s) = phi(x, s) - phi_r(x)` with its
/// bounds, for compactly supported `phi`.
#[derive(Debug, Clone, PartialEq)]
pub struct RhoData {
    pub observable: FlowObservable,
    pub support_bound: f64,
    pub sup_phi: f64,
    pub sup_rho: f64,
    /// `(1 + r_1) sup|phi|`, the a-priori bound for `sup|rho|`.
    pub sup_rho_bound: f64,
    /// `C_1 = 2 r_1 sup|rho|`.
    pub c1: f64,
    /// Measured `rho_r` per refined base pattern (equals `phi_r (1 - r)`).
    pub measured_rho_r: Vec<f64>,
}

pub fn rho(phi: &FlowObservable, roof: &Roof) -> Result<RhoData> {
    let r1 = phi
        .compact_support()
        .ok_or_else(|| Error::validation("rho needs a compactly supported fiber observable"))?;
    let depth = phi.depth().max(roof.depth());
    let phi_ref = phi.refined(depth)?;
    let r_ref = roof.table().refined(depth)?;
    let sup_phi = phi.sup_abs(roof)?;

    let mut fibers = Vec::with_capacity(phi_ref.fibers().len());
    let mut measured = Vec::with_capacity(phi_ref.fibers().len());
    let mut sup_rho: f64 = 0.0;
    for (pat, fiber) in phi_ref.fibers().iter().enumerate() {
        let rv = r_ref.value_at(pat);
        let c = fiber.integral_to(rv); // phi_r at this pattern
        let mut below = fiber.below.clone();
        if below.is_empty() {
            below.push(0.0);
        }
        below[0] -= c;
        let cut = if fiber.cut.is_finite() { fiber.cut } else { rv };
        let rho_fiber = Fiber {
            below,
            cut,
            above: vec![-c],
        };
        sup_rho = sup_rho.max(rho_fiber.sup_abs_on(rv));
        measured.push(c * (1.0 - rv));
        fibers.push(rho_fiber);
    }
    let observable = FlowObservable::new(phi_ref.alphabet(), depth, fibers)?;
    Ok(RhoData {
        observable,
        support_bound: r1,
        sup_phi,
        sup_rho,
        sup_rho_bound: (1.0 + r1) * sup_phi,
        c1: 2.0 * r1 * sup_rho,
        measured_rho_r: measured,
    })
}

/// Exact sampler for the induced measure: the base prefix is drawn from the
/// roof-weighted pattern marginal (exact, since the roof is locally
/// constant), the remaining window symbols follow the chain, and the height
/// is uniform on `[0, r(x))`.
#[derive(Debug, Clone)]
pub struct MuRSampler {
    mu: MarkovGibbsMeasure,
    roof: Roof,
    depth: usize,
    window: usize,
    pattern_cdf: Vec<f64>,
    mean_roof: f64,
}

impl MuRSampler {
    pub fn new(mu: MarkovGibbsMeasure, roof: Roof, window: usize) -> Result<Self> {
        if mu.alphabet() != roof.alphabet() {
            return Err(Error::validation("alphabet mismatch"));
        }
        let depth = roof.depth().max(mu.state_len());
        let count = mu.alphabet().pow(depth as u32);
        if count > 1 << 22 {
            return Err(Error::budget("roof pattern space too large to tabulate"));
        }
        if window < depth {
            return Err(Error::validation("window shorter than the roof depth"));
        }
        let mean_roof = integrate(&mu, roof.table())?;
        let r_ref = roof.table().refined(depth)?;
        let mut cdf = Vec::with_capacity(count);
        let mut acc = 0.0;
        let mut word = vec![0usize; depth];
        for pat in 0..count {
            let mut v = pat;
            for slot in word.iter_mut().rev() {
                *slot = v % mu.alphabet();
                v /= mu.alphabet();
            }
            acc += mu.cylinder_mass(&word) * r_ref.value_at(pat) / mean_roof;
            cdf.push(acc);
        }
        Ok(MuRSampler {
            mu,
            roof,
            depth,
            window,
            pattern_cdf: cdf,
            mean_roof,
        })
    }

    pub fn mean_roof(&self) -> f64 {
        self.mean_roof
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> SuspensionPoint {
        let l = self.mu.alphabet();
        let u: f64 = rng.gen();
        let pat = match self
            .pattern_cdf
            .binary_search_by(|p| p.partial_cmp(&u).unwrap())
        {
            Ok(i) => (i + 1).min(self.pattern_cdf.len() - 1),
            Err(i) => i.min(self.pattern_cdf.len() - 1),
        };
        let mut word = vec![0u8; self.window];
        let mut v = pat;
        for slot in word[..self.depth].iter_mut().rev() {
            *slot = (v % l) as u8;
            v /= l;
        }
        // extend with the chain conditional (the roof weight only sees the prefix)
        let s_len = self.mu.state_len();
        let mut state = 0usize;
        for &c in &word[self.depth - s_len..self.depth] {
            state = state * l + c as usize;
        }
        for pos in self.depth..self.window {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut chosen = l - 1;
            for c in 0..l {
                let (_, p) = self.mu.step(state, c);
                acc += p;
                if u < acc {
                    chosen = c;
                    break;
                }
            }
            word[pos] = chosen as u8;
            state = self.mu.step(state, chosen).0;
        }
        let base = Configuration::new(l, 0, word, crate::shift::Extension::Periodic).unwrap();
        let r = self.roof.eval(&base).unwrap();
        let height = rng.gen_range(0.0..r);
        SuspensionPoint { base, height }
    }
}

/// Batch importance resampling toward a weight function, with the effective
/// sample size of the raw batch reported. This is the generic path for roofs
/// that are not locally constant tables.
pub fn resample_weighted<R: Rng, W: Fn(&[u8]) -> f64>(
    mu: &MarkovGibbsMeasure,
    weight: W,
    window: usize,
    batch: usize,
    out: usize,
    rng: &mut R,
) -> Result<(Vec<Vec<u8>>, f64)> {
    let mut words = Vec::with_capacity(batch);
    let mut weights = Vec::with_capacity(batch);
    for _ in 0..batch {
        let word = sample_chain_word(mu, window, rng);
        let w = weight(&word);
        if !(w >= 0.0) {
            return Err(Error::validation("negative importance weight"));
        }
        words.push(word);
        weights.push(w);
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::validation("all importance weights vanish"));
    }
    let ess = total * total / weights.iter().map(|w| w * w).sum::<f64>();
    // systematic resampling
    let mut picks = Vec::with_capacity(out);
    let step = total / out as f64;
    let mut pointer: f64 = rng.gen_range(0.0..step);
    let mut acc = 0.0;
    let mut idx = 0usize;
    for _ in 0..out {
        while acc + weights[idx] < pointer {
            acc += weights[idx];
            idx += 1;
        }
        picks.push(words[idx].clone());
        pointer += step;
    }
    Ok((picks, ess))
}

/// Draws a window of symbols from the stationary chain.
pub fn sample_chain_word<R: Rng>(mu: &MarkovGibbsMeasure, window: usize, rng: &mut R) -> Vec<u8> {
    let l = mu.alphabet();
    let mut word = vec![0u8; window];
    // stationary state
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut state = mu.n_states() - 1;
    for (i, &p) in mu.stationary().iter().enumerate() {
        acc += p;
        if u < acc {
            state = i;
            break;
        }
    }
    let s_len = mu.state_len();
    let mut digits = vec![0u8; s_len];
    let mut v = state;
    for slot in digits.iter_mut().rev() {
        *slot = (v % l) as u8;
        v /= l;
    }
    let take = s_len.min(window);
    word[..take].copy_from_slice(&digits[..take]);
    for pos in take..window {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut chosen = l - 1;
        for c in 0..l {
            let (_, p) = mu.step(state, c);
            acc += p;
            if u < acc {
                chosen = c;
                break;
            }
        }
        word[pos] = chosen as u8;
        state = mu.step(state, chosen).0;
    }
    word
}

/// Exact tail data for the roof under the base measure.
#[derive(Debug, Clone, PartialEq)]
pub struct TailEstimate {
    /// `(level, mu{r > level})` on the requested grid.
    pub points: Vec<(f64, f64)>,
    pub eps0: f64,
    pub c0: f64,
    /// `int e^{eps0 r} d mu`, exact over patterns.
    pub integral: f64,
    pub certificate: TailCertificate,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TailCertificate {
    /// `eps0` fitted on the decaying range; `c0` makes the bound hold at
    /// every level (the tail is a step function of the distinct roof values).
    FittedDecay { points_used: usize },
    /// Too few decaying levels to fit; any `eps0` works for a bounded roof
    /// and the conventional `eps0 = 1` is reported.
    BoundedSupport { r_max: f64 },
}

pub fn tail_estimate(mu: &MarkovGibbsMeasure, roof: &Roof, levels: &[f64]) -> Result<TailEstimate> {
    let depth = roof.depth().max(mu.state_len());
    let l = mu.alphabet();
    let count = l.pow(depth as u32);
    if count > 1 << 22 {
        return Err(Error::budget("roof pattern space too large"));
    }
    let r_ref = roof.table().refined(depth)?;
    let mut masses: Vec<(f64, f64)> = Vec::with_capacity(count); // (r value, mass)
    let mut word = vec![0usize; depth];
    for pat in 0..count {
        let mut v = pat;
        for slot in word.iter_mut().rev() {
            *slot = v % l;
            v /= l;
        }
        masses.push((r_ref.value_at(pat), mu.cylinder_mass(&word)));
    }
    let tail_mass = |level: f64| -> f64 {
        masses
            .iter()
            .filter(|(r, _)| *r > level)
            .map(|(_, m)| m)
            .sum()
    };
    let points: Vec<(f64, f64)> = levels.iter().map(|&lv| (lv, tail_mass(lv))).collect();

    // fit on the strictly positive, strictly decaying part of the grid
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, m)| *m > 0.0)
        .map(|&(lv, m)| (lv, m.ln()))
        .collect();
    let distinct_levels = {
        let mut seen: Vec<f64> = Vec::new();
        for &(lv, _) in &usable {
            if !seen.iter().any(|&s| s == lv) {
                seen.push(lv);
            }
        }
        seen.len()
    };
    let distinct_masses = {
        let mut seen: Vec<f64> = Vec::new();
        for &(_, m) in &usable {
            if !seen.iter().any(|&s| s == m) {
                seen.push(m);
            }
        }
        seen.len()
    };

    let r_max = r_ref.max_value();
    let (eps0, certificate) = if distinct_levels >= 2 && distinct_masses >= 2 {
        let n = usable.len() as f64;
        let sx: f64 = usable.iter().map(|p| p.0).sum();
        let sy: f64 = usable.iter().map(|p| p.1).sum();
        let sxx: f64 = usable.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = usable.iter().map(|p| p.0 * p.1).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        if slope >= 0.0 {
            return Err(Error::NoFit(
                "tail masses do not decay over the requested levels".into(),
            ));
        }
        (
            -slope,
            TailCertificate::FittedDecay {
                points_used: usable.len(),
            },
        )
    } else {
        (1.0, TailCertificate::BoundedSupport { r_max })
    };

    // certificate constant: the tail is a right-continuous step function of
    // the distinct roof values, so checking just below each jump covers all
    // levels
    let mut jumps: Vec<f64> = masses.iter().map(|(r, _)| *r).collect();
    jumps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    jumps.dedup();
    let mut c0: f64 = 0.0;
    let mut below = 0.0f64;
    for &v in &jumps {
        let m = tail_mass(below); // mass on [below, v): constant = mass just under v
        c0 = c0.max(m * (eps0 * v).exp());
        below = v;
    }
    c0 = c0.max(1.0); // mass <= 1 at level 0

    let integral: f64 = masses.iter().map(|(r, m)| m * (eps0 * r).exp()).sum();
    Ok(TailEstimate {
        points,
        eps0,
        c0,
        integral,
        certificate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shift::Extension;
    use crate::thermo::{bernoulli_measure_rational, equilibrium_measure, Potential};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_roof() -> Roof {
        Roof::constant(2, 1.0).unwrap()
    }

    fn word_config(word: &[u8]) -> Configuration {
        Configuration::periodic(2, word).unwrap()
    }

    #[test]
    fn lap_number_examples() {
        let r = unit_roof();
        let x = word_config(&[0, 1]);
        assert_eq!(lap_number(&x, 0.25, 3.5, &r).unwrap(), 3);
        assert_eq!(lap_number(&x, 0.25, 0.0, &r).unwrap(), 0);

        let r12 = Roof::new(TableObservable::new(2, 1, vec![1.0, 2.0]).unwrap(), 1.0).unwrap();
        let x = word_config(&[0, 1]); // roofs 1, 2, 1, 2, ...
        assert_eq!(lap_number(&x, 0.0, 4.5, &r12).unwrap(), 3);
    }

    #[test]
    fn flow_point_examples() {
        let r = unit_roof();
        let z = SuspensionPoint::new(word_config(&[0, 1]), 0.25, &r).unwrap();
        let same = flow_point(&z, 0.0, &r).unwrap();
        assert_eq!(same.base.symbol(0).unwrap(), 0);
        assert_eq!(same.height, 0.25);

        // integer flow under the unit roof shifts the base only
        let moved = flow_point(&z, 3.0, &r).unwrap();
        assert!((moved.height - 0.25).abs() < 1e-12);
        assert_eq!(moved.base.symbol(0).unwrap(), 1);

        // semigroup law
        let r12 = Roof::new(TableObservable::new(2, 1, vec![1.0, 2.0]).unwrap(), 1.0).unwrap();
        let z = SuspensionPoint::new(word_config(&[0, 1, 1, 0, 1]), 0.7, &r12).unwrap();
        let one = flow_point(&flow_point(&z, 2.3, &r12).unwrap(), 1.9, &r12).unwrap();
        let two = flow_point(&z, 4.2, &r12).unwrap();
        assert!((one.height - two.height).abs() < 1e-10);
        for i in 0..4 {
            assert_eq!(one.base.symbol(i).unwrap(), two.base.symbol(i).unwrap());
        }
    }

    #[test]
    fn phi_r_examples() {
        let ones = FlowObservable::uniform(2, Fiber::poly(vec![1.0]));
        let r = unit_roof();
        let x = word_config(&[0, 1]);
        assert!((phi_r(&ones, &x, &r).unwrap() - 1.0).abs() < 1e-15);

        let r2 = Roof::constant(2, 2.0).unwrap();
        let tpoly = FlowObservable::uniform(2, Fiber::poly(vec![0.0, 1.0]));
        assert!((phi_r(&tpoly, &x, &r2).unwrap() - 2.0).abs() < 1e-15);

        let step = FlowObservable::uniform(2, Fiber::step(1.0, 1.0));
        assert!((phi_r(&step, &x, &r2).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn flow_integral_decomposition_examples() {
        let r = unit_roof();
        let ones = FlowObservable::uniform(2, Fiber::poly(vec![1.0]));
        let z = SuspensionPoint::new(word_config(&[0, 1]), 0.25, &r).unwrap();
        let out = flow_integral(&ones, &z, 3.5, &r).unwrap();
        assert!((out.value - 3.5).abs() < 1e-12);
        assert_eq!(out.laps, 3);
        assert!((out.birkhoff_part - 3.0).abs() < 1e-12);
        assert!((out.boundary_part - 0.5).abs() < 1e-12);

        // T below the first roof crossing: pure fiber integral
        let short = flow_integral(&ones, &z, 0.5, &r).unwrap();
        assert_eq!(short.laps, 0);
        assert_eq!(short.birkhoff_part, 0.0);
        assert!((short.value - 0.5).abs() < 1e-14);
    }

    #[test]
    fn decomposition_matches_quadrature_on_random_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let roof = Roof::new(
            TableObservable::new(2, 2, vec![0.7, 1.3, 1.9, 1.1]).unwrap(),
            0.7,
        )
        .unwrap();
        let phi = FlowObservable::new(
            2,
            1,
            vec![
                Fiber::poly(vec![0.3, -0.8, 0.25]),
                Fiber::poly(vec![-0.5, 0.4]),
            ],
        )
        .unwrap();
        let sup = phi.sup_abs(&roof).unwrap();
        for _ in 0..60 {
            let word: Vec<u8> = (0..64).map(|_| rng.gen_range(0..2u8)).collect();
            let base = Configuration::new(2, 0, word, Extension::Periodic).unwrap();
            let rv = roof.eval(&base).unwrap();
            let z = SuspensionPoint::new(base, rng.gen_range(0.0..rv), &roof).unwrap();
            let t = rng.gen_range(0.0..30.0);
            let split = flow_integral(&phi, &z, t, &roof).unwrap();
            let quad = flow_integral_quadrature(&phi, &z, t, &roof, 1e-11).unwrap();
            assert!(
                (split.value - quad).abs() < 1e-8,
                "decomposition {} vs quadrature {quad}",
                split.value
            );
            assert!(split.boundary_part.abs() <= split.boundary_budget_height * sup + 1e-12);
        }
    }

    #[test]
    fn rho_examples() {
        let r = unit_roof();
        let zero = FlowObservable::uniform(2, Fiber::step(0.0, 1.0));
        let d = rho(&zero, &r).unwrap();
        assert_eq!(d.c1, 0.0);
        assert!(d.measured_rho_r.iter().all(|&v| v == 0.0));

        // under the unit roof rho_r vanishes identically
        let phi =
            FlowObservable::new(2, 1, vec![Fiber::step(0.8, 1.0), Fiber::step(-0.3, 1.0)]).unwrap();
        let d = rho(&phi, &r).unwrap();
        assert!(d.measured_rho_r.iter().all(|&v| v.abs() < 1e-15));
        assert!(d.sup_rho <= d.sup_rho_bound + 1e-12);

        // and the flow integral of rho stays below C1 on sampled cases
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..40 {
            let word: Vec<u8> = (0..40).map(|_| rng.gen_range(0..2u8)).collect();
            let base = Configuration::new(2, 0, word, Extension::Periodic).unwrap();
            let z = SuspensionPoint::new(base, rng.gen_range(0.0..1.0), &r).unwrap();
            let t = rng.gen_range(0.0..12.0);
            let v = flow_integral(&d.observable, &z, t, &r).unwrap().value;
            assert!(v.abs() <= d.c1 + 1e-10, "|{v}| > C1 = {}", d.c1);
        }

        // unbounded fibers are rejected
        let unbounded = FlowObservable::uniform(2, Fiber::poly(vec![1.0]));
        assert!(rho(&unbounded, &r).is_err());
    }

    #[test]
    fn mu_r_sampler_statistics() {
        let mu = bernoulli_measure_rational(&[(1, 2), (1, 2)]).unwrap();
        let roof = Roof::new(TableObservable::new(2, 1, vec![1.0, 2.0]).unwrap(), 1.0).unwrap();
        let sampler = MuRSampler::new(mu.clone(), roof.clone(), 16).unwrap();
        assert!((sampler.mean_roof() - 1.5).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 40_000usize;
        let mut ones = 0usize;
        let mut mean_rel_height = 0.0;
        for _ in 0..n {
            let z = sampler.sample(&mut rng);
            let sym = z.base.symbol(0).unwrap();
            if sym == 1 {
                ones += 1;
            }
            let rv = roof.eval(&z.base).unwrap();
            assert!(z.height >= 0.0 && z.height < rv);
            mean_rel_height += z.height / rv;
        }
        // r-weighted marginal: P(x_0 = 1) = (1/2 * 2) / 1.5 = 2/3
        let frac = ones as f64 / n as f64;
        assert!((frac - 2.0 / 3.0).abs() < 0.01, "frac = {frac}");
        // per-fiber relative height is uniform on [0, 1)
        assert!((mean_rel_height / n as f64 - 0.5).abs() < 0.01);

        // time-average self-consistency: mu_r(phi) = mu(phi_r) / mu(r)
        let phi =
            FlowObservable::fiber_constant(&TableObservable::new(2, 1, vec![1.0, -1.0]).unwrap());
        let phir = phi_r_table(&phi, &roof).unwrap();
        let expect = integrate(&mu, &phir).unwrap() / sampler.mean_roof();
        let mut acc = 0.0;
        for _ in 0..n {
            let z = sampler.sample(&mut rng);
            acc += phi.eval(&z).unwrap();
        }
        let se = 3.0 / (n as f64).sqrt(); // |phi| <= 1
        assert!((acc / n as f64 - expect).abs() < se);
    }

    #[test]
    fn heights_are_uniform_per_fiber() {
        // Kolmogorov-Smirnov on the relative heights
        let mu = bernoulli_measure_rational(&[(1, 2), (1, 2)]).unwrap();
        let roof = unit_roof();
        let sampler = MuRSampler::new(mu, roof, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 100_000usize;
        let mut hs: Vec<f64> = (0..n).map(|_| sampler.sample(&mut rng).height).collect();
        hs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut ks: f64 = 0.0;
        for (i, &h) in hs.iter().enumerate() {
            let emp_hi = (i + 1) as f64 / n as f64;
            let emp_lo = i as f64 / n as f64;
            ks = ks.max((emp_hi - h).abs()).max((h - emp_lo).abs());
        }
        let critical = 1.628 / (n as f64).sqrt(); // 1% level
        assert!(ks < critical, "KS = {ks}, critical = {critical}");
    }

    #[test]
    fn resampler_reports_effective_sample_size() {
        let mu = bernoulli_measure_rational(&[(1, 2), (1, 2)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (picks, ess) = resample_weighted(
            &mu,
            |w| if w[0] == 1 { 2.0 } else { 1.0 },
            8,
            4000,
            2000,
            &mut rng,
        )
        .unwrap();
        assert_eq!(picks.len(), 2000);
        assert!(ess > 3000.0 && ess <= 4000.0);
        let ones = picks.iter().filter(|w| w[0] == 1).count() as f64 / 2000.0;
        assert!((ones - 2.0 / 3.0).abs() < 0.04);
    }

    #[test]
    fn tail_estimate_examples() {
        // constant roof: zero tail beyond the value, bounded-support certificate
        let mu = bernoulli_measure_rational(&[(1, 2), (1, 2)]).unwrap();
        let roof = Roof::constant(2, 1.5).unwrap();
        let t = tail_estimate(&mu, &roof, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(t.points[1].1, 0.0);
        assert!(matches!(
            t.certificate,
            TailCertificate::BoundedSupport { .. }
        ));
        for w in t.points.windows(2) {
            assert!(w[1].1 <= w[0].1);
        }

        // geometric weights with linear roof values
        let mu = bernoulli_measure_rational(&[(1, 2), (1, 4), (1, 8), (1, 8)]).unwrap();
        let roof = Roof::new(
            TableObservable::new(4, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
            1.0,
        )
        .unwrap();
        let levels: Vec<f64> = vec![0.5, 1.5, 2.5, 3.5];
        let t = tail_estimate(&mu, &roof, &levels).unwrap();
        assert!(matches!(t.certificate, TailCertificate::FittedDecay { .. }));
        assert!(t.eps0 > 0.0);
        // the certificate bound holds on the grid
        for &(lv, m) in &t.points {
            assert!(m <= t.c0 * (-t.eps0 * lv).exp() + 1e-12);
        }
        // exact moment: sum of mass * e^{eps0 r}
        let direct: f64 = [(0.5, 1.0), (0.25, 2.0), (0.125, 3.0), (0.125, 4.0)]
            .iter()
            .map(|(m, r)| m * (t.eps0 * r).exp())
            .sum();
        assert!((t.integral - direct).abs() < 1e-12);
    }

    #[test]
    fn lap_numbers_obey_the_law_of_large_numbers() {
        let mu = bernoulli_measure_rational(&[(1, 2), (1, 2)]).unwrap();
        let roof = Roof::new(TableObservable::new(2, 1, vec![1.0, 2.0]).unwrap(), 1.0).unwrap();
        let horizon = 400.0;
        let window = 640usize;
        let sampler = MuRSampler::new(mu, roof.clone(), window).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut acc = 0.0;
        let n = 400usize;
        for _ in 0..n {
            let z = sampler.sample(&mut rng);
            let laps = lap_number(&z.base, z.height, horizon, &roof).unwrap();
            acc += laps as f64 / horizon;
        }
        let mean = acc / n as f64;
        assert!((mean - 1.0 / 1.5).abs() < 2e-2, "mean lap rate {mean}");
    }

    #[test]
    fn equilibrium_measures_feed_the_sampler_too() {
        let psi = Potential::new(TableObservable::new(2, 2, vec![0.2, -0.1, 0.4, -0.6]).unwrap());
        let mu = equilibrium_measure(&psi).unwrap();
        let roof = Roof::new(
            TableObservable::new(2, 2, vec![1.0, 1.5, 2.0, 1.25]).unwrap(),
            1.0,
        )
        .unwrap();
        let sampler = MuRSampler::new(mu, roof, 12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let z = sampler.sample(&mut rng);
            assert!(z.height >= 0.0);
        }
    }
}
