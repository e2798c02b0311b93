//! Deviation experiments on the suspension flow: time-average deviations of
//! a bounded flow observable, and deviations of the lap count from its
//! almost-sure rate, both against the composite variational bounds.

use rand::Rng;

use super::base::{build_side, McAcc, Side};
use super::rng::{stream_id, stream_rng};
use super::{
    accumulate_samples, finalize_report, make_point, BoundTerm, DeviationReport, SamplerKind,
    SideAcc,
};
use crate::error::{Error, Result};
use crate::suspension::{phi_r_table, tail_estimate, Fiber, FlowObservable, Roof};
use crate::thermo::{deviation_bound, equilibrium_measure_with, integrate, Potential};

#[derive(Debug, Clone)]
pub struct FlowExperiment {
    pub psi: Potential,
    pub phi: FlowObservable,
    pub roof: Roof,
    pub epsilon: f64,
    pub t_grid: Vec<f64>,
    pub samples: u64,
    pub seed: u64,
    pub workers: usize,
    pub sampler: SamplerKind,
    /// Splitting parameter `xi` of the composite bound, in (0, 1).
    pub xi: f64,
    /// Lap-slack parameter `a > 0`.
    pub a: f64,
    /// Lap threshold `zeta`; defaults to `a / ((1 + a) rbar)`.
    pub zeta: Option<f64>,
    /// Residual-set parameter `omega > 0` of the composite bound.
    pub omega: f64,
    /// Levels for the roof-tail fit; defaults to midpoints of the distinct
    /// roof values.
    pub tail_levels: Option<Vec<f64>>,
}

impl FlowExperiment {
    pub fn defaults(
        psi: Potential,
        phi: FlowObservable,
        roof: Roof,
        epsilon: f64,
        t_grid: Vec<f64>,
        samples: u64,
        seed: u64,
    ) -> FlowExperiment {
        FlowExperiment {
            psi,
            phi,
            roof,
            epsilon,
            t_grid,
            samples,
            seed,
            workers: 1,
            sampler: SamplerKind::Tilted,
            xi: 0.1,
            a: 0.05,
            zeta: None,
            omega: 0.05,
            tail_levels: None,
        }
    }
}

fn default_tail_levels(roof: &Roof) -> Vec<f64> {
    let mut vals: Vec<f64> = roof.table().values().to_vec();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    vals.dedup();
    let mut levels = vec![vals[0] / 2.0];
    for w in vals.windows(2) {
        levels.push(0.5 * (w[0] + w[1]));
    }
    levels
}

/// Rigorous sup of `|phi - c|` over the suspension space.
fn centered_sup(phi: &FlowObservable, roof: &Roof, c: f64) -> Result<f64> {
    let depth = phi.depth().max(roof.depth());
    let phi = phi.refined(depth)?;
    let r = roof.table().refined(depth)?;
    let mut worst: f64 = 0.0;
    for (pat, fiber) in phi.fibers().iter().enumerate() {
        let mut below = fiber.below.clone();
        if below.is_empty() {
            below.push(0.0);
        }
        below[0] -= c;
        let mut above = fiber.above.clone();
        if above.is_empty() {
            above.push(0.0);
        }
        above[0] -= c;
        let shifted = Fiber {
            below,
            cut: fiber.cut,
            above,
        };
        worst = worst.max(shifted.sup_abs_on(r.value_at(pat)));
    }
    Ok(worst)
}

fn pat_at(buf: &[u8], j: usize, d: usize, l: usize) -> usize {
    let mut p = 0usize;
    for &sym in &buf[j..j + d] {
        p = p * l + sym as usize;
    }
    p
}

struct FlowWalk<'a> {
    side: &'a Side,
    roof_vals: &'a [f64],
    d_r: usize,
    d_max: usize,
    l: usize,
}

struct WalkOut {
    laps: u64,
    /// Birkhoff sum of the supplied per-lap table.
    lap_sum: f64,
    /// Leftover time above the last crossed roof.
    overshoot: f64,
    /// Index of the base pattern after `laps` crossings.
    end_pos: usize,
    log_weight: f64,
    first_roof: f64,
    height: f64,
}

impl FlowWalk<'_> {
    fn extend_to<R: Rng>(
        &self,
        need: usize,
        buf: &mut Vec<u8>,
        state: &mut usize,
        logw: &mut f64,
        rng: &mut R,
    ) {
        let side = self.side;
        while buf.len() < need {
            let c = side.chain.sample_symbol(*state, rng.gen());
            if !side.plain {
                *logw += side.ratio.step(*state, c);
            }
            *state = side.chain.next_state(*state, c);
            buf.push(c as u8);
        }
    }

    /// Samples a proposal point `(x, s)` and walks the roof sums to the
    /// horizon, accumulating `lap_vals` along the way.
    fn run<R: Rng>(
        &self,
        horizon: f64,
        lap_vals: Option<(&[f64], usize)>,
        buf: &mut Vec<u8>,
        rng: &mut R,
    ) -> WalkOut {
        let side = self.side;
        buf.clear();
        let mut state = side.chain.sample_state(rng.gen());
        side.chain.state_word(state, buf);
        let mut logw = if side.plain {
            0.0
        } else {
            side.ratio.init(state, buf)
        };
        self.extend_to(self.d_max, buf, &mut state, &mut logw, rng);
        let first_roof = self.roof_vals[pat_at(buf, 0, self.d_r, self.l)];
        let height = rng.gen_range(0.0..first_roof);
        let budget = height + horizon;
        let mut s_r = 0.0;
        let mut lap_sum = 0.0;
        let mut j = 0usize;
        loop {
            self.extend_to(j + self.d_max, buf, &mut state, &mut logw, rng);
            let rj = self.roof_vals[pat_at(buf, j, self.d_r, self.l)];
            if s_r + rj > budget {
                return WalkOut {
                    laps: j as u64,
                    lap_sum,
                    overshoot: budget - s_r,
                    end_pos: j,
                    log_weight: logw,
                    first_roof,
                    height,
                };
            }
            if let Some((vals, d)) = lap_vals {
                lap_sum += vals[pat_at(buf, j, d, self.l)];
            }
            s_r += rj;
            j += 1;
        }
    }
}

pub fn deviate_flow(cfg: &FlowExperiment) -> Result<DeviationReport> {
    if !(cfg.epsilon > 0.0) {
        return Err(Error::validation("epsilon must be positive"));
    }
    if cfg.t_grid.is_empty() || cfg.t_grid.windows(2).any(|w| w[1] <= w[0]) || cfg.t_grid[0] <= 0.0
    {
        return Err(Error::validation("t_grid must be positive and increasing"));
    }
    if cfg.samples < 1000 {
        return Err(Error::validation("mc mode needs at least 1000 samples"));
    }
    if !(cfg.xi > 0.0 && cfg.xi < 1.0) || !(cfg.a > 0.0) || !(cfg.omega > 0.0) {
        return Err(Error::validation("need 0 < xi < 1, a > 0, omega > 0"));
    }

    let mut notes = Vec::new();
    let mu = equilibrium_measure_with(&cfg.psi, 1)?;
    let rbar = integrate(&mu, cfg.roof.table())?;
    let phir = phi_r_table(&cfg.phi, &cfg.roof)?;
    let centering = integrate(&mu, &phir)? / rbar;
    // phi centered in the fiber sense: phi_r of (phi - c) is phi_r - c r
    let phirc = phir.add(&cfg.roof.table().scaled(-centering))?;
    if centering != 0.0 {
        notes.push(format!(
            "flow observable centered by mu_r(phi) = {centering:.6e}"
        ));
    }
    let zeta = cfg.zeta.unwrap_or(cfg.a / ((1.0 + cfg.a) * rbar));
    if !(zeta > 0.0 && zeta * rbar < 1.0) {
        return Err(Error::validation("need 0 < zeta < 1/rbar"));
    }

    // ---- composite upper bound -------------------------------------------
    let levels = cfg
        .tail_levels
        .clone()
        .unwrap_or_else(|| default_tail_levels(&cfg.roof));
    let eps0 = match cfg.roof.declared_tail() {
        Some((e0, _)) => e0,
        None => tail_estimate(&mu, &cfg.roof, &levels)?.eps0,
    };
    let r0 = cfg.roof.r0();
    let supc = centered_sup(&cfg.phi, &cfg.roof, centering)?;

    let beta = deviation_bound(
        &cfg.psi,
        &phirc,
        cfg.epsilon * (1.0 - cfg.xi) * (1.0 - cfg.a) * rbar,
    )?;
    if beta.degenerate {
        notes.push("phi_r is cohomologous to a constant: zero-variance experiment".into());
    }
    let term_beta = beta.bound / ((1.0 + cfg.a) * rbar);

    let thresh_gamma = rbar * (1.0 - 1.0 / ((1.0 - cfg.xi) * (1.0 + zeta * rbar)));
    let gamma = if thresh_gamma > 0.0 {
        deviation_bound(&cfg.psi, cfg.roof.table(), thresh_gamma)?.bound
    } else {
        notes.push(format!(
            "lap-rate threshold {thresh_gamma:.3e} <= 0: gamma term vanishes"
        ));
        0.0
    };
    let term_gamma = gamma * (2.0 + cfg.a) / ((1.0 + cfg.a) * rbar);
    let term_lap_tail = -(eps0 / 2.0) * (1.0 - rbar / (r0 * (1.0 - zeta * rbar)));
    let term_it_tail = if supc > 0.0 {
        -eps0 * cfg.epsilon * cfg.xi / (2.0 * supc)
    } else {
        f64::NEG_INFINITY
    };
    let term_omega = if supc > 0.0 {
        -eps0 * cfg.omega / (2.0 * supc)
    } else {
        f64::NEG_INFINITY
    };
    let bound_terms = vec![
        BoundTerm {
            name: "beta/((1+a) rbar)".into(),
            value: term_beta,
        },
        BoundTerm {
            name: "gamma (2+a)/((1+a) rbar)".into(),
            value: term_gamma,
        },
        BoundTerm {
            name: "lap tail -(eps0/2)(1 - rbar/(r0 (1 - zeta rbar)))".into(),
            value: term_lap_tail,
        },
        BoundTerm {
            name: "boundary tail -eps0 eps xi/(2 sup|phi|)".into(),
            value: term_it_tail,
        },
        BoundTerm {
            name: "residual tail -eps0 omega/(2 sup|phi|)".into(),
            value: term_omega,
        },
    ];
    let bound_upper = bound_terms
        .iter()
        .map(|t| t.value)
        .fold(f64::NEG_INFINITY, f64::max);
    let bound_upper = if bound_upper.is_finite() {
        Some(bound_upper)
    } else {
        None
    };

    // compact-support lower bound
    let bound_lower = match cfg.phi.compact_support() {
        Some(_r1) => {
            let omega00 = deviation_bound(&cfg.psi, &phirc, cfg.epsilon * rbar / r0)?;
            if omega00.empty_constraint {
                notes.push("lower-bound constraint set empty".into());
                None
            } else {
                Some(omega00.bound / r0)
            }
        }
        None => {
            notes.push("observable lacks compact fiber support: no lower bound".into());
            None
        }
    };

    // ---- Monte Carlo ------------------------------------------------------
    let plus = build_side(
        &mu,
        &cfg.psi,
        &phirc,
        cfg.epsilon * rbar,
        cfg.sampler,
        beta.degenerate,
        &mut notes,
    )?;
    let minus = build_side(
        &mu,
        &cfg.psi,
        &phirc,
        -cfg.epsilon * rbar,
        cfg.sampler,
        beta.degenerate,
        &mut notes,
    )?;
    let sides = [plus, minus];

    let l = cfg.roof.alphabet();
    let d_r = cfg.roof.depth();
    let d_f = cfg.phi.depth();
    let d_phir = phir.depth();
    let d_max = d_r.max(d_f).max(d_phir);
    let roof_vals = cfg.roof.table().values().to_vec();
    let phir_vals = phir.values().to_vec();

    let mut points = Vec::with_capacity(cfg.t_grid.len());
    for (pt_idx, &horizon) in cfg.t_grid.iter().enumerate() {
        let mut accs = [SideAcc::default(), SideAcc::default()];
        for (side_idx, side) in sides.iter().enumerate() {
            let sign = if side_idx == 0 { 1.0 } else { -1.0 };
            let walk = FlowWalk {
                side,
                roof_vals: &roof_vals,
                d_r,
                d_max,
                l,
            };
            let seed = cfg.seed;
            let threshold = cfg.epsilon * horizon;
            let out = accumulate_samples(
                cfg.samples,
                cfg.workers,
                || McAcc {
                    acc: SideAcc::default(),
                    buf: Vec::with_capacity(256),
                },
                |a: &mut McAcc, i: u64| {
                    let mut rng = stream_rng(seed, stream_id(pt_idx, side_idx, i));
                    let w = walk.run(horizon, Some((&phir_vals, d_phir)), &mut a.buf, &mut rng);
                    let right = cfg
                        .phi
                        .fiber_at(pat_at(&a.buf, w.end_pos, d_f, l))
                        .integral_to(w.overshoot);
                    let left = cfg
                        .phi
                        .fiber_at(pat_at(&a.buf, 0, d_f, l))
                        .integral_to(w.height);
                    let raw = w.lap_sum + right - left;
                    let value = raw - centering * horizon;
                    let weight = w.log_weight.exp() * w.first_roof / rbar;
                    let v = sign * value;
                    a.acc.record(v >= threshold, v > threshold, weight);
                },
            )?;
            accs[side_idx] = out.acc;
        }
        points.push(make_point(
            horizon,
            cfg.samples,
            accs[0],
            accs[1],
            [1.0, 1.0],
        ));
    }

    Ok(finalize_report(
        points,
        bound_upper,
        bound_upper,
        bound_lower,
        bound_terms,
        notes,
    ))
}

#[derive(Debug, Clone)]
pub struct LapExperiment {
    pub psi: Potential,
    pub roof: Roof,
    /// Deviation threshold for `|n/T - 1/rbar|`.
    pub zeta_dev: f64,
    pub t_grid: Vec<f64>,
    pub samples: u64,
    pub seed: u64,
    pub workers: usize,
    pub sampler: SamplerKind,
    pub xi: f64,
}

pub fn lap_deviation(cfg: &LapExperiment) -> Result<DeviationReport> {
    if !(cfg.zeta_dev > 0.0) {
        return Err(Error::validation("zeta must be positive"));
    }
    if cfg.t_grid.is_empty() || cfg.t_grid.windows(2).any(|w| w[1] <= w[0]) || cfg.t_grid[0] <= 0.0
    {
        return Err(Error::validation("t_grid must be positive and increasing"));
    }
    if cfg.samples < 1000 {
        return Err(Error::validation("mc mode needs at least 1000 samples"));
    }
    if !(cfg.xi > 0.0 && cfg.xi < 1.0) {
        return Err(Error::validation("need 0 < xi < 1"));
    }

    let mut notes = Vec::new();
    let mu = equilibrium_measure_with(&cfg.psi, 1)?;
    let rbar = integrate(&mu, cfg.roof.table())?;
    let zeta = cfg.zeta_dev;
    let r0 = cfg.roof.r0();

    // bound from the lap-number analysis
    let eps0 = match cfg.roof.declared_tail() {
        Some((e0, _)) => e0,
        None => tail_estimate(&mu, &cfg.roof, &default_tail_levels(&cfg.roof))?.eps0,
    };
    let zr = zeta * rbar;
    let gamma = if zr < 1.0 {
        let thresh = rbar * (1.0 - 1.0 / ((1.0 - cfg.xi) * (1.0 + zr)));
        if thresh > 0.0 {
            deviation_bound(&cfg.psi, cfg.roof.table(), thresh)?.bound
        } else {
            notes.push(format!("gamma threshold {thresh:.3e} <= 0: term vanishes"));
            0.0
        }
    } else {
        notes.push("zeta >= 1/rbar: the slow side is impossible".into());
        f64::NEG_INFINITY
    };
    let term_gamma = gamma * (1.0 + zr) / rbar;
    let term_tail = if zr < 1.0 {
        -(eps0 / 2.0) * (1.0 - rbar / (r0 * (1.0 - zr)))
    } else {
        f64::NEG_INFINITY
    };
    let bound_terms = vec![
        BoundTerm {
            name: "gamma (1+zeta rbar)/rbar".into(),
            value: term_gamma,
        },
        BoundTerm {
            name: "roof tail -(eps0/2)(1 - rbar/(r0 (1 - zeta rbar)))".into(),
            value: term_tail,
        },
    ];
    let bound_upper = bound_terms
        .iter()
        .map(|t| t.value)
        .fold(f64::NEG_INFINITY, f64::max);
    let bound_upper = if bound_upper.is_finite() {
        Some(bound_upper)
    } else {
        None
    };

    // tilted proposals: fast side pushes the mean roof down, slow side up
    let rc = cfg.roof.table().shifted_by(-rbar);
    let fast_target = 1.0 / (1.0 / rbar + zeta) - rbar; // negative
    let slow_target = if zeta < 1.0 / rbar {
        Some(1.0 / (1.0 / rbar - zeta) - rbar)
    } else {
        None
    };
    let fast = build_side(
        &mu,
        &cfg.psi,
        &rc,
        fast_target,
        cfg.sampler,
        false,
        &mut notes,
    )?;
    let slow = match slow_target {
        Some(st) => Some(build_side(
            &mu,
            &cfg.psi,
            &rc,
            st,
            cfg.sampler,
            false,
            &mut notes,
        )?),
        None => None,
    };

    let l = cfg.roof.alphabet();
    let d_r = cfg.roof.depth();
    let roof_vals = cfg.roof.table().values().to_vec();

    let mut points = Vec::with_capacity(cfg.t_grid.len());
    for (pt_idx, &horizon) in cfg.t_grid.iter().enumerate() {
        let mut accs = [SideAcc::default(), SideAcc::default()];
        let sides: Vec<(usize, &Side, f64)> = match &slow {
            Some(s) => vec![(0usize, &fast, 1.0), (1usize, s, -1.0)],
            None => vec![(0usize, &fast, 1.0)],
        };
        for (side_idx, side, sign) in sides {
            let walk = FlowWalk {
                side,
                roof_vals: &roof_vals,
                d_r,
                d_max: d_r,
                l,
            };
            let seed = cfg.seed;
            let out = accumulate_samples(
                cfg.samples,
                cfg.workers,
                || McAcc {
                    acc: SideAcc::default(),
                    buf: Vec::with_capacity(256),
                },
                |a: &mut McAcc, i: u64| {
                    let mut rng = stream_rng(seed, stream_id(pt_idx, side_idx, i));
                    let w = walk.run(horizon, None, &mut a.buf, &mut rng);
                    let rate = w.laps as f64 / horizon - 1.0 / rbar;
                    let weight = w.log_weight.exp() * w.first_roof / rbar;
                    let v = sign * rate;
                    a.acc.record(v >= zeta, v > zeta, weight);
                },
            )?;
            accs[side_idx] = out.acc;
        }
        // a disabled slow side must not leak a phantom zero-hit interval
        let caps = [1.0, if slow.is_some() { 1.0 } else { 0.0 }];
        points.push(make_point(horizon, cfg.samples, accs[0], accs[1], caps));
    }

    Ok(finalize_report(
        points,
        bound_upper,
        bound_upper,
        None,
        bound_terms,
        notes,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shift::TableObservable;

    fn bernoulli_half() -> Potential {
        Potential::bernoulli(&[1.0, 1.0]).unwrap()
    }

    fn pm_one_flow() -> FlowObservable {
        FlowObservable::fiber_constant(&TableObservable::new(2, 1, vec![-1.0, 1.0]).unwrap())
    }

    #[test]
    fn zero_observable_has_zero_deviations() {
        let cfg = FlowExperiment {
            samples: 2000,
            workers: 2,
            ..FlowExperiment::defaults(
                bernoulli_half(),
                FlowObservable::uniform(2, Fiber::poly(vec![0.0])),
                Roof::constant(2, 1.0).unwrap(),
                0.3,
                vec![20.0, 40.0],
                2000,
                1,
            )
        };
        let r = deviate_flow(&cfg).unwrap();
        assert_eq!(r.verdict, super::super::Verdict::EmptyDeviationSet);
        assert!(r.points.iter().all(|p| p.p_ge == 0.0));
    }

    #[test]
    fn unit_roof_flow_matches_the_base_shift() {
        // With r = 1 and a fiber-constant observable the flow deviation is the
        // base deviation up to O(1) boundary terms.
        let mut cfg = FlowExperiment::defaults(
            bernoulli_half(),
            pm_one_flow(),
            Roof::constant(2, 1.0).unwrap(),
            0.5,
            vec![24.0, 32.0, 40.0],
            40_000,
            11,
        );
        cfg.workers = 2;
        let flow = deviate_flow(&cfg).unwrap();
        let base = crate::ldlab::deviate_shift(&crate::ldlab::ShiftExperiment {
            psi: bernoulli_half(),
            phi: TableObservable::new(2, 1, vec![-1.0, 1.0]).unwrap(),
            epsilon: 0.5,
            n_grid: vec![24, 32, 40],
            samples: 40_000,
            seed: 11,
            mode: crate::ldlab::Mode::Mc,
            sampler: SamplerKind::Tilted,
            workers: 2,
        })
        .unwrap();
        let fs = flow.slope.unwrap();
        let bs = base.slope.unwrap();
        assert!(
            (fs.slope - bs.slope).abs() <= fs.ci_half_width + bs.ci_half_width + 0.05,
            "flow {} vs base {}",
            fs.slope,
            bs.slope
        );
        assert!(!flow.bound_terms.is_empty());
        assert_eq!(flow.verdict, super::super::Verdict::Consistent);
    }

    #[test]
    fn lap_rate_concentrates_for_constant_roofs() {
        let cfg = LapExperiment {
            psi: bernoulli_half(),
            roof: Roof::constant(2, 2.0).unwrap(),
            zeta_dev: 0.2,
            t_grid: vec![50.0, 100.0],
            samples: 2000,
            seed: 5,
            workers: 2,
            sampler: SamplerKind::Tilted,
            xi: 0.1,
        };
        // n/T is deterministic up to edge effects; zeta = 0.2 > edge 1/50
        let r = lap_deviation(&cfg).unwrap();
        assert!(r.points.iter().all(|p| p.p_ge == 0.0));
        assert_eq!(r.verdict, super::super::Verdict::EmptyDeviationSet);
    }

    #[test]
    fn lap_deviation_slope_is_negative_with_ci() {
        let cfg = LapExperiment {
            psi: bernoulli_half(),
            roof: Roof::new(TableObservable::new(2, 1, vec![1.0, 2.0]).unwrap(), 1.0).unwrap(),
            zeta_dev: 0.1,
            t_grid: vec![60.0, 120.0, 180.0, 240.0],
            samples: 20_000,
            seed: 9,
            workers: 2,
            sampler: SamplerKind::Tilted,
            xi: 0.1,
        };
        let r = lap_deviation(&cfg).unwrap();
        let s = r.slope.expect("slope fitted");
        assert!(s.slope < 0.0);
        assert_eq!(r.slope_excludes_zero, Some(true));
        assert_eq!(r.verdict, super::super::Verdict::Consistent);
    }

    #[test]
    fn mixed_depths_walk_correctly() {
        // depth-2 roof, depth-1 fiber: exercises the separate pattern widths
        let psi = Potential::new(TableObservable::new(2, 2, vec![0.2, -0.4, 0.1, -0.3]).unwrap());
        let roof = Roof::new(
            TableObservable::new(2, 2, vec![0.9, 1.7, 1.3, 2.2]).unwrap(),
            0.9,
        )
        .unwrap();
        let phi = FlowObservable::new(
            2,
            1,
            vec![Fiber::poly(vec![1.0, -0.5]), Fiber::poly(vec![-1.0, 0.5])],
        )
        .unwrap();
        let cfg = FlowExperiment {
            samples: 4000,
            workers: 2,
            ..FlowExperiment::defaults(psi, phi, roof, 0.3, vec![30.0, 60.0, 90.0], 4000, 13)
        };
        let r = deviate_flow(&cfg).unwrap();
        assert_eq!(r.points.len(), 3);
        assert!(r
            .points
            .iter()
            .all(|p| p.p_ge.is_finite() && p.ci_hi >= p.ci_lo));
        // tilted estimates must stay plausible probabilities
        assert!(r.points.iter().all(|p| p.p_ge >= 0.0 && p.p_ge < 1.5));
    }

    #[test]
    fn declared_tail_overrides_the_fit() {
        let roof = Roof::new(TableObservable::new(2, 1, vec![1.0, 2.0]).unwrap(), 1.0)
            .unwrap()
            .with_declared_tail(0.25, 3.0)
            .unwrap();
        let cfg = FlowExperiment {
            samples: 1000,
            ..FlowExperiment::defaults(
                bernoulli_half(),
                pm_one_flow(),
                roof,
                0.5,
                vec![20.0, 40.0, 60.0],
                1000,
                4,
            )
        };
        let r = deviate_flow(&cfg).unwrap();
        // the I_T tail term is -eps0 eps xi / (2 sup|phi - c|): the centering
        // c = mu(phi r)/rbar = (1/3) makes the sup 4/3 here, and eps0 = 0.25
        let term = r
            .bound_terms
            .iter()
            .find(|t| t.name.starts_with("boundary tail"))
            .unwrap();
        let expect = -0.25 * 0.5 * 0.1 / (2.0 * (4.0 / 3.0));
        assert!((term.value - expect).abs() < 1e-12, "{}", term.value);
    }

    #[test]
    fn impossible_lap_threshold_is_empty() {
        let cfg = LapExperiment {
            psi: bernoulli_half(),
            roof: Roof::new(TableObservable::new(2, 1, vec![1.0, 2.0]).unwrap(), 1.0).unwrap(),
            zeta_dev: 1.2, // > 1/r0 = 1
            t_grid: vec![40.0, 80.0],
            samples: 2000,
            seed: 2,
            workers: 1,
            sampler: SamplerKind::Tilted,
            xi: 0.1,
        };
        let r = lap_deviation(&cfg).unwrap();
        assert_eq!(r.verdict, super::super::Verdict::EmptyDeviationSet);
    }
}
