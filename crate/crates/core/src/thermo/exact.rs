//! Exact-rational Markov measures for enumeration-based probabilities.
//!
//! Floating-point tables are dyadic rationals, so a float observable and a
//! float threshold convert losslessly via `BigRational::from_float`; the
//! Birkhoff sums, comparisons, and mass accumulation below are all exact.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{FromPrimitive, One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::shift::TableObservable;

#[derive(Debug, Clone, PartialEq)]
pub struct ExactMarkov {
    pub alphabet: usize,
    pub state_len: usize,
    pub stationary: Vec<BigRational>,
    /// Row-major `n x n` over `alphabet^state_len` states.
    pub transition: Vec<BigRational>,
}

pub fn ratio_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

impl ExactMarkov {
    /// Bernoulli measure from rational weights `(num, den)`, normalized exactly.
    pub fn bernoulli(weights: &[(i64, i64)]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::validation("no weights"));
        }
        let mut ws = Vec::with_capacity(weights.len());
        for &(n, d) in weights {
            if d == 0 || n <= 0 {
                return Err(Error::validation("weights must be positive rationals"));
            }
            ws.push(BigRational::new(BigInt::from(n), BigInt::from(d)));
        }
        let total: BigRational = ws.iter().cloned().sum();
        let stationary: Vec<BigRational> = ws.into_iter().map(|w| w / &total).collect();
        let l = stationary.len();
        let mut transition = Vec::with_capacity(l * l);
        for _u in 0..l {
            transition.extend(stationary.iter().cloned());
        }
        let out = ExactMarkov {
            alphabet: l,
            state_len: 1,
            stationary,
            transition,
        };
        out.validate()?;
        Ok(out)
    }

    /// General rational Markov chain on single-symbol states.
    pub fn markov(stationary: Vec<BigRational>, transition: Vec<BigRational>) -> Result<Self> {
        let l = stationary.len();
        if transition.len() != l * l {
            return Err(Error::validation("transition size mismatch"));
        }
        let out = ExactMarkov {
            alphabet: l,
            state_len: 1,
            stationary,
            transition,
        };
        out.validate()?;
        Ok(out)
    }

    fn validate(&self) -> Result<()> {
        let n = self.stationary.len();
        let one = BigRational::one();
        let total: BigRational = self.stationary.iter().cloned().sum();
        if total != one {
            return Err(Error::validation("stationary vector does not sum to 1"));
        }
        for u in 0..n {
            let row: BigRational = self.transition[u * n..(u + 1) * n].iter().cloned().sum();
            if row != one {
                return Err(Error::validation(format!("row {u} does not sum to 1")));
            }
        }
        for v in 0..n {
            let mut acc = BigRational::zero();
            for u in 0..n {
                acc += &self.stationary[u] * &self.transition[u * n + v];
            }
            if acc != self.stationary[v] {
                return Err(Error::validation("stationary vector is not invariant"));
            }
        }
        Ok(())
    }

    /// Exact masses of `{ |S_n phi| >= n eps }` and `{ |S_n phi| > n eps }`
    /// over words of length `n + depth - 1`.
    ///
    /// When the observable fits a common dyadic grid and the chain entries a
    /// common integer denominator, the enumeration runs in machine integers;
    /// otherwise it falls back to full rational arithmetic.
    pub fn deviation_mass(
        &self,
        phi: &TableObservable,
        n: usize,
        eps: f64,
    ) -> Result<(BigRational, BigRational, u64)> {
        if phi.alphabet() != self.alphabet {
            return Err(Error::validation("alphabet mismatch"));
        }
        if let Some(out) = self.deviation_mass_integer(phi, n, eps) {
            return Ok(out);
        }
        self.deviation_mass_rational(phi, n, eps)
    }

    fn deviation_mass_rational(
        &self,
        phi: &TableObservable,
        n: usize,
        eps: f64,
    ) -> Result<(BigRational, BigRational, u64)> {
        if phi.alphabet() != self.alphabet {
            return Err(Error::validation("alphabet mismatch"));
        }
        let d = phi.depth();
        let word_len = n + d - 1;
        let values: Vec<BigRational> = phi
            .values()
            .iter()
            .map(|&v| {
                BigRational::from_float(v)
                    .ok_or_else(|| Error::validation("non-finite observable value"))
            })
            .collect::<Result<_>>()?;
        let threshold = BigRational::from_float(eps)
            .ok_or_else(|| Error::validation("non-finite epsilon"))?
            * BigRational::from_usize(n).unwrap();

        let l = self.alphabet;
        let mut p_ge = BigRational::zero();
        let mut p_gt = BigRational::zero();
        let mut words = 0u64;
        // per-level stacks so partial sums and masses are reused down the tree
        let mut word = vec![0usize; word_len];
        let mut mass = vec![BigRational::one(); word_len + 1];
        let mut sum = vec![BigRational::zero(); word_len + 1];

        struct Ctx<'a> {
            me: &'a ExactMarkov,
            values: &'a [BigRational],
            l: usize,
            d: usize,
            word_len: usize,
            threshold: BigRational,
        }
        #[allow(clippy::too_many_arguments)]
        fn rec(
            c: &Ctx,
            pos: usize,
            word: &mut Vec<usize>,
            mass: &mut Vec<BigRational>,
            sum: &mut Vec<BigRational>,
            p_ge: &mut BigRational,
            p_gt: &mut BigRational,
            words: &mut u64,
        ) {
            if pos == c.word_len {
                *words += 1;
                let s = sum[pos].abs();
                if s >= c.threshold {
                    *p_ge += &mass[pos];
                }
                if s > c.threshold {
                    *p_gt += &mass[pos];
                }
                return;
            }
            for sym in 0..c.l {
                word[pos] = sym;
                mass[pos + 1] = if pos == 0 {
                    c.me.stationary[sym].clone()
                } else {
                    &mass[pos] * &c.me.transition[word[pos - 1] * c.l + sym]
                };
                sum[pos + 1] = if pos + 1 >= c.d {
                    let mut pat = 0usize;
                    for j in 0..c.d {
                        pat = pat * c.l + word[pos + 1 - c.d + j];
                    }
                    &sum[pos] + &c.values[pat]
                } else {
                    sum[pos].clone()
                };
                rec(c, pos + 1, word, mass, sum, p_ge, p_gt, words);
            }
        }
        let ctx = Ctx {
            me: self,
            values: &values,
            l,
            d,
            word_len,
            threshold,
        };
        rec(
            &ctx, 0, &mut word, &mut mass, &mut sum, &mut p_ge, &mut p_gt, &mut words,
        );
        Ok((p_ge, p_gt, words))
    }
}

/// `x = m * 2^e` exactly, with `m` odd (or zero).
fn dyadic(x: f64) -> Option<(i64, i32)> {
    if !x.is_finite() {
        return None;
    }
    if x == 0.0 {
        return Some((0, 0));
    }
    let bits = x.to_bits();
    let sign = if bits >> 63 == 1 { -1i64 } else { 1 };
    let biased = ((bits >> 52) & 0x7ff) as i32;
    let frac = (bits & ((1u64 << 52) - 1)) as i64;
    let (mut m, mut e) = if biased == 0 {
        (frac, -1074)
    } else {
        (frac | (1 << 52), biased - 1075)
    };
    while m != 0 && m & 1 == 0 {
        m >>= 1;
        e += 1;
    }
    Some((sign * m, e))
}

fn to_u64(r: &BigRational) -> Option<(u64, u64)> {
    Some((r.numer().to_u64()?, r.denom().to_u64()?))
}

fn lcm_u64(a: u64, b: u64) -> Option<u64> {
    fn gcd(mut a: u64, mut b: u64) -> u64 {
        while b != 0 {
            let t = a % b;
            a = b;
            b = t;
        }
        a
    }
    (a / gcd(a, b)).checked_mul(b)
}

impl ExactMarkov {
    /// Integer-arithmetic enumeration; None when the data does not fit.
    fn deviation_mass_integer(
        &self,
        phi: &TableObservable,
        n: usize,
        eps: f64,
    ) -> Option<(BigRational, BigRational, u64)> {
        let d = phi.depth();
        let word_len = n + d - 1;
        let l = self.alphabet;

        // integerize the observable and the threshold on a common dyadic grid
        let mut decomposed = Vec::with_capacity(phi.values().len() + 1);
        for &v in phi.values() {
            decomposed.push(dyadic(v)?);
        }
        let (eps_m, eps_e) = dyadic(eps)?;
        let min_e = decomposed
            .iter()
            .map(|&(_, e)| e)
            .chain(std::iter::once(eps_e))
            .min()?;
        let mut values_int = Vec::with_capacity(decomposed.len());
        let mut max_abs: i128 = 0;
        for &(m, e) in &decomposed {
            let shift = e - min_e;
            if shift > 64 {
                return None;
            }
            let v = (m as i128).checked_shl(shift as u32)?;
            max_abs = max_abs.max(v.abs());
            values_int.push(v);
        }
        let shift = eps_e - min_e;
        if shift > 64 {
            return None;
        }
        let threshold = (eps_m as i128)
            .checked_shl(shift as u32)?
            .checked_mul(n as i128)?;
        // running sums must stay inside i128 with headroom
        max_abs.checked_mul(n as i128 + 1)?.checked_mul(4)?;

        // common denominators for the chain entries
        let mut ds: u64 = 1;
        for p in &self.stationary {
            let (_, den) = to_u64(p)?;
            ds = lcm_u64(ds, den)?;
        }
        let mut dt: u64 = 1;
        for t in &self.transition {
            let (_, den) = to_u64(t)?;
            dt = lcm_u64(dt, den)?;
        }
        let stat_num: Vec<u128> = self
            .stationary
            .iter()
            .map(|p| {
                let (num, den) = to_u64(p).unwrap();
                num as u128 * (ds / den) as u128
            })
            .collect();
        let tr_num: Vec<u128> = self
            .transition
            .iter()
            .map(|t| {
                let (num, den) = to_u64(t).unwrap();
                num as u128 * (dt / den) as u128
            })
            .collect();
        // the largest numerator product must fit u128
        let steps = (word_len - self.state_len) as u32;
        let bits =
            128 - (ds as u128).leading_zeros() + steps * (128 - (dt as u128).leading_zeros());
        if bits > 120 {
            return None;
        }

        let mut acc_ge = BigUint::zero();
        let mut acc_gt = BigUint::zero();
        let mut words = 0u64;
        let mut word = vec![0usize; word_len];
        let mut mass = vec![1u128; word_len + 1];
        let mut sum = vec![0i128; word_len + 1];

        struct Ctx<'a> {
            stat_num: &'a [u128],
            tr_num: &'a [u128],
            values: &'a [i128],
            l: usize,
            d: usize,
            word_len: usize,
            threshold: i128,
        }
        #[allow(clippy::too_many_arguments)]
        fn rec(
            c: &Ctx,
            pos: usize,
            word: &mut Vec<usize>,
            mass: &mut Vec<u128>,
            sum: &mut Vec<i128>,
            acc_ge: &mut BigUint,
            acc_gt: &mut BigUint,
            words: &mut u64,
        ) {
            if pos == c.word_len {
                *words += 1;
                let s = sum[pos].abs();
                if s >= c.threshold {
                    *acc_ge += BigUint::from(mass[pos]);
                }
                if s > c.threshold {
                    *acc_gt += BigUint::from(mass[pos]);
                }
                return;
            }
            for sym in 0..c.l {
                word[pos] = sym;
                mass[pos + 1] = if pos == 0 {
                    c.stat_num[sym]
                } else {
                    mass[pos] * c.tr_num[word[pos - 1] * c.l + sym]
                };
                sum[pos + 1] = if pos + 1 >= c.d {
                    let mut pat = 0usize;
                    for j in 0..c.d {
                        pat = pat * c.l + word[pos + 1 - c.d + j];
                    }
                    sum[pos] + c.values[pat]
                } else {
                    sum[pos]
                };
                rec(c, pos + 1, word, mass, sum, acc_ge, acc_gt, words);
            }
        }
        let ctx = Ctx {
            stat_num: &stat_num,
            tr_num: &tr_num,
            values: &values_int,
            l,
            d,
            word_len,
            threshold,
        };
        rec(
            &ctx,
            0,
            &mut word,
            &mut mass,
            &mut sum,
            &mut acc_ge,
            &mut acc_gt,
            &mut words,
        );

        let denom = BigInt::from(ds) * BigInt::from(dt).pow(steps);
        let p_ge = BigRational::new(BigInt::from(acc_ge), denom.clone());
        let p_gt = BigRational::new(BigInt::from(acc_gt), denom);
        Some((p_ge, p_gt, words))
    }
}
