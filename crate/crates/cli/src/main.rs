//! `rvlab`: Rauzy-Veech induction, finite-shift thermodynamics, and
//! large-deviation experiments from the command line.
//!
//! Exit codes: 0 success, 2 validation/parse error, 3 convergence error,
//! 4 budget/resource error, 1 I/O error.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};

use rvlab_cli::config::{self, RawConfig};
use rvlab_cli::emit::{self, Envelope, Json};
use rvlab_core::error::Error;
use rvlab_core::ldlab::{
    deviate_flow, deviate_shift, lap_deviation, teich_demo, FlowExperiment, LambdaObservable,
    LapExperiment, Mode, SamplerKind, ShiftExperiment, TeichDemo,
};
use rvlab_core::rauzy::{rauzy_class_capped, DEFAULT_CLASS_CAP};
use rvlab_core::shift::{livsic_test, LivsicVerdict, LIVSIC_TOL};
use rvlab_core::thermo::{
    bernoulli_measure_rational, deviation_bound, entropy, equilibrium_measure, integrate, pressure,
    pressure_curve, rate_function,
};
use rvlab_core::zippered::{renormalized_step, sample_zippered};
use rvlab_core::Permutation;

#[derive(Parser)]
#[command(
    name = "rvlab",
    version,
    about = "Rauzy-Veech induction, shift thermodynamics, and large-deviation experiments"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Enumerate the Rauzy class of a permutation with its edge matrices.
    RauzyClass {
        /// Permutation image, e.g. "3,2,1".
        #[arg(long)]
        pi: String,
        #[arg(long)]
        out: PathBuf,
        /// Abort if the class grows beyond this many members.
        #[arg(long, default_value_t = DEFAULT_CLASS_CAP)]
        cap: usize,
    },
    /// Run a renormalized-induction orbit; one CSV row per step.
    ZrOrbit {
        #[arg(long)]
        pi: String,
        #[arg(long)]
        steps: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Periodic-orbit coboundary test for a locally constant observable.
    Livsic {
        /// Config file holding an [observable] (or [potential]) table.
        #[arg(long)]
        potential: PathBuf,
        #[arg(long)]
        pmax: usize,
        #[arg(long, default_value_t = LIVSIC_TOL)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pressure and Gibbs equilibrium state of a potential.
    Pressure {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set")]
        set: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pressure curve, Legendre rate function, and the deviation bound.
    RateBound {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set")]
        set: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Base-shift deviation experiment (exact and/or Monte Carlo).
    LdShift {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set")]
        set: Vec<String>,
        /// Output prefix: writes PREFIX.json, PREFIX.csv, PREFIX.dat.
        #[arg(long)]
        out: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Suspension-flow deviation experiment.
    LdFlow {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set")]
        set: Vec<String>,
        #[arg(long)]
        out: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Lap-number deviation experiment.
    LapDev {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set")]
        set: Vec<String>,
        #[arg(long)]
        out: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Renormalized-induction demonstration with orbit statistics.
    TeichDemo {
        #[arg(long)]
        pi: String,
        #[arg(long)]
        steps: u64,
        #[arg(long)]
        starts: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0.2)]
        epsilon: f64,
        /// Comma-separated orbit lengths at which averages are recorded.
        #[arg(long, default_value = "1000,10000")]
        lengths: String,
        /// Built-in length observable: product | sumsq.
        #[arg(long, default_value = "product")]
        observable: String,
        #[arg(long)]
        out: String,
    },
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(match &e {
                CliError::Core(Error::Convergence { .. }) => 3,
                CliError::Core(Error::Budget(_)) => 4,
                CliError::Core(_) => 2,
                CliError::Io(_) => 1,
            });
        }
    }
}

enum CliError {
    Core(Error),
    Io(std::io::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o: {e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

type CliResult<T> = Result<T, CliError>;

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(CliError::Io)
}

fn read_config(path: &Path, overrides: &[String]) -> CliResult<RawConfig> {
    let text = std::fs::read_to_string(path).map_err(CliError::Io)?;
    let mut raw = RawConfig::parse(&text)?;
    for spec in overrides {
        raw.apply_override(spec)?;
    }
    Ok(raw)
}

fn parse_pi(spec: &str) -> Result<Permutation, Error> {
    let image = spec
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::validation(format!("bad permutation entry `{t}`")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Permutation::new(image)
}

fn env_workers() -> Option<usize> {
    std::env::var("RVLAB_WORKERS").ok()?.parse().ok()
}

fn emit_envelope(
    command: &str,
    seed: Option<u64>,
    workers: Option<usize>,
    started: Instant,
    echo: Vec<(String, Vec<(String, String)>)>,
    report: Json,
    out: Option<&Path>,
) -> CliResult<()> {
    let doc = emit::envelope_json(
        &Envelope {
            command: command.into(),
            seed,
            workers,
            wall_clock_seconds: started.elapsed().as_secs_f64(),
            config_echo: echo,
        },
        report,
    );
    let text = emit::to_string(&doc);
    match out {
        Some(path) => write_file(path, &text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn provenance(
    command: &str,
    seed: Option<u64>,
    workers: Option<usize>,
    raw: &RawConfig,
) -> Vec<String> {
    let mut lines = vec![format!("rvlab {} ({command})", env!("CARGO_PKG_VERSION"))];
    if let Some(s) = seed {
        lines.push(format!("seed = {s}"));
    }
    if let Some(w) = workers {
        lines.push(format!("workers = {w}"));
    }
    for (section, kv) in raw.echo() {
        for (k, v) in kv {
            lines.push(format!("{section}.{k} = {v}"));
        }
    }
    lines
}

fn run(cli: Cli) -> CliResult<()> {
    let started = Instant::now();
    match cli.cmd {
        Cmd::RauzyClass { pi, out, cap } => {
            let pi = parse_pi(&pi)?;
            let class = rauzy_class_capped(&pi, cap)?;
            let members = Json::Arr(
                class
                    .members
                    .iter()
                    .map(|m| Json::Arr(m.image().iter().map(|&v| Json::U64(v as u64)).collect()))
                    .collect(),
            );
            let edges = Json::Arr(
                class
                    .edges
                    .iter()
                    .map(|e| {
                        let matrix = Json::Arr(
                            (0..e.matrix.size())
                                .map(|i| {
                                    Json::Arr(
                                        e.matrix.row(i).iter().map(|&x| Json::I64(x)).collect(),
                                    )
                                })
                                .collect(),
                        );
                        Json::Obj(vec![
                            ("from".into(), Json::U64(e.from as u64)),
                            ("label".into(), Json::Str(e.label.to_string())),
                            ("to".into(), Json::U64(e.to as u64)),
                            ("det".into(), Json::I64(e.matrix.det() as i64)),
                            ("matrix".into(), matrix),
                        ])
                    })
                    .collect(),
            );
            let report = Json::Obj(vec![
                ("size".into(), Json::U64(class.len() as u64)),
                ("members".into(), members),
                ("edges".into(), edges),
            ]);
            emit_envelope(
                "rauzy-class",
                None,
                None,
                started,
                vec![(
                    "rauzy-class".into(),
                    vec![
                        ("pi".into(), format!("{pi}")),
                        ("cap".into(), cap.to_string()),
                    ],
                )],
                report,
                Some(&out),
            )
        }
        Cmd::ZrOrbit {
            pi,
            steps,
            seed,
            out,
        } => {
            let pi = parse_pi(&pi)?;
            let mut rng = rvlab_core::ldlab::rng::stream_rng(seed, 0);
            let mut x = sample_zippered(&pi, false, &mut rng);
            let area0 = x.area();
            let m = pi.size();
            let mut csv = String::new();
            csv.push_str(&format!(
                "# rvlab {} (zr-orbit) pi = {pi} seed = {seed}\n",
                env!("CARGO_PKG_VERSION")
            ));
            csv.push_str("step,branch,winner,roof,");
            csv.push_str(
                &(1..=m)
                    .map(|i| format!("lambda_{i}"))
                    .collect::<Vec<_>>()
                    .join(","),
            );
            csv.push_str(",area_drift\n");
            let mut done = 0u64;
            let mut total_elapsed = 0.0;
            let mut terminated_early = false;
            for step_idx in 0..steps {
                let step = match renormalized_step(&x) {
                    Ok(s) => s,
                    Err(_) => {
                        terminated_early = true;
                        break;
                    }
                };
                let lambdas = x
                    .lambda()
                    .iter()
                    .map(|&l| emit::fmt_f64(l))
                    .collect::<Vec<_>>()
                    .join(",");
                csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    step_idx,
                    step.branch,
                    step.winner,
                    emit::fmt_f64(step.elapsed),
                    lambdas,
                    emit::fmt_f64(step.next.area() - area0),
                ));
                total_elapsed += step.elapsed;
                x = step.next;
                done += 1;
            }
            write_file(&out, &csv)?;
            let report = Json::Obj(vec![
                ("steps_completed".into(), Json::U64(done)),
                ("terminated_early".into(), Json::Bool(terminated_early)),
                ("total_elapsed".into(), Json::F64(total_elapsed)),
                ("final_area_drift".into(), Json::F64(x.area() - area0)),
            ]);
            emit_envelope(
                "zr-orbit",
                Some(seed),
                None,
                started,
                vec![(
                    "zr-orbit".into(),
                    vec![
                        ("pi".into(), format!("{pi}")),
                        ("steps".into(), steps.to_string()),
                    ],
                )],
                report,
                Some(&out.with_extension("json")),
            )
        }
        Cmd::Livsic {
            potential,
            pmax,
            tol,
            out,
        } => {
            let raw = read_config(&potential, &[])?;
            raw.check_sections(&["observable", "potential"])?;
            let table = if raw.section("observable").is_some() {
                config::read_observable(&raw, 2)?
            } else {
                config::read_potential(&raw)?.potential.table().clone()
            };
            let verdict = livsic_test(&table, pmax, tol)?;
            let report = match verdict {
                LivsicVerdict::Coboundary { checked_to } => Json::Obj(vec![
                    ("verdict".into(), Json::Str("coboundary".into())),
                    ("checked_to".into(), Json::U64(checked_to as u64)),
                    ("tolerance".into(), Json::F64(tol)),
                ]),
                LivsicVerdict::Witness { word, period, sum } => Json::Obj(vec![
                    ("verdict".into(), Json::Str("witness".into())),
                    (
                        "word".into(),
                        Json::Arr(word.iter().map(|&c| Json::U64(c as u64)).collect()),
                    ),
                    ("period".into(), Json::U64(period as u64)),
                    ("sum".into(), Json::F64(sum)),
                ]),
            };
            emit_envelope(
                "livsic",
                None,
                None,
                started,
                raw.echo(),
                report,
                out.as_deref(),
            )
        }
        Cmd::Pressure { config, set, out } => {
            let raw = read_config(&config, &set)?;
            raw.check_sections(&["potential", "pressure"])?;
            let spec = config::read_potential(&raw)?;
            let n_check = match raw.section("pressure") {
                Some(sec) => {
                    let v = sec.opt_usize("n_check")?;
                    sec.finish()?;
                    v
                }
                None => None,
            };
            let mu = match (&spec.bernoulli_weights, n_check) {
                (Some(w), None) => bernoulli_measure_rational(w)?,
                _ => match n_check {
                    Some(n) => rvlab_core::thermo::equilibrium_measure_with(&spec.potential, n)?,
                    None => equilibrium_measure(&spec.potential)?,
                },
            };
            let p = pressure(&spec.potential)?;
            let h = entropy(&mu);
            let report = Json::Obj(vec![
                ("pressure".into(), Json::F64(p)),
                ("entropy".into(), Json::F64(h)),
                (
                    "mu_psi".into(),
                    Json::F64(integrate(&mu, spec.potential.table())?),
                ),
                ("gibbs_constant".into(), Json::F64(mu.gibbs_constant())),
                (
                    "gibbs_checked_len".into(),
                    Json::U64(mu.gibbs_checked_len() as u64),
                ),
                (
                    "stationary".into(),
                    Json::Arr(mu.stationary().iter().map(|&x| Json::F64(x)).collect()),
                ),
                (
                    "transition".into(),
                    Json::Arr(
                        (0..mu.n_states())
                            .map(|u| {
                                Json::Arr(
                                    (0..mu.n_states())
                                        .map(|v| Json::F64(mu.transition(u, v)))
                                        .collect(),
                                )
                            })
                            .collect(),
                    ),
                ),
            ]);
            emit_envelope(
                "pressure",
                None,
                None,
                started,
                raw.echo(),
                report,
                out.as_deref(),
            )
        }
        Cmd::RateBound { config, set, out } => {
            let raw = read_config(&config, &set)?;
            raw.check_sections(&["potential", "observable", "grid"])?;
            let spec = config::read_potential(&raw)?;
            let psi = spec.potential;
            let phi = config::read_observable(&raw, psi.alphabet())?;
            let (t_grid, s_grid, eps) = match raw.section("grid") {
                Some(sec) => {
                    let t = sec.opt_f64_list("t")?;
                    let s = sec.opt_f64_list("s")?;
                    let e = sec.opt_f64("epsilon")?;
                    sec.finish()?;
                    (t, s, e)
                }
                None => (None, None, None),
            };
            let t_grid = t_grid.unwrap_or_else(|| (-12..=12).map(|i| i as f64 * 0.25).collect());
            let curve = pressure_curve(&psi, &phi, &t_grid)?;
            let mu_phi = curve.mu_phi;
            let s_grid = s_grid.unwrap_or_else(|| {
                let spread = (phi.max_value() - phi.min_value()).max(1e-9) / 2.0;
                (-8..=8)
                    .map(|i| mu_phi + i as f64 / 8.0 * 0.9 * spread)
                    .collect()
            });
            let mut rate_vals = Vec::new();
            let mut rate_args = Vec::new();
            let centered = phi.shifted_by(-mu_phi);
            for &s in &s_grid {
                let r = rate_function(&psi, &centered, s - mu_phi)?;
                rate_vals.push(if r.value.is_finite() {
                    Json::F64(r.value)
                } else {
                    Json::Null
                });
                rate_args.push(match r.argmax {
                    Some(t) => Json::F64(t),
                    None => Json::Null,
                });
            }
            let bound = match eps {
                Some(e) => {
                    let b = deviation_bound(&psi, &phi, e)?;
                    Json::Obj(vec![
                        ("epsilon".into(), Json::F64(e)),
                        ("bound".into(), Json::finite_or_null(b.bound)),
                        ("degenerate".into(), Json::Bool(b.degenerate)),
                        ("empty_constraint".into(), Json::Bool(b.empty_constraint)),
                    ])
                }
                None => Json::Null,
            };
            let report = Json::Obj(vec![
                ("mu_phi".into(), Json::F64(mu_phi)),
                (
                    "pressure_curve".into(),
                    Json::Obj(vec![
                        (
                            "t".into(),
                            Json::Arr(curve.ts.iter().map(|&x| Json::F64(x)).collect()),
                        ),
                        (
                            "q".into(),
                            Json::Arr(curve.q.iter().map(|&x| Json::F64(x)).collect()),
                        ),
                        ("convex_on_grid".into(), Json::Bool(curve.convex_on_grid)),
                        (
                            "derivative_at_zero".into(),
                            Json::F64(curve.derivative_at_zero),
                        ),
                    ]),
                ),
                (
                    "rate".into(),
                    Json::Obj(vec![
                        (
                            "s".into(),
                            Json::Arr(s_grid.iter().map(|&x| Json::F64(x)).collect()),
                        ),
                        ("value".into(), Json::Arr(rate_vals)),
                        ("argmax".into(), Json::Arr(rate_args)),
                    ]),
                ),
                ("deviation_bound".into(), bound),
            ]);
            emit_envelope(
                "rate-bound",
                None,
                None,
                started,
                raw.echo(),
                report,
                out.as_deref(),
            )
        }
        Cmd::LdShift {
            config,
            set,
            out,
            seed,
            workers,
        } => {
            let raw = read_config(&config, &set)?;
            raw.check_sections(&["experiment", "potential", "observable"])?;
            let spec = config::read_potential(&raw)?;
            let psi = spec.potential;
            let phi = config::read_observable(&raw, psi.alphabet())?;
            let sec = raw.require("experiment")?;
            let mode = match sec.str_or("mode", "mc").as_str() {
                "exact" => Mode::Exact,
                "mc" => Mode::Mc,
                "both" => Mode::Both,
                other => {
                    return Err(Error::validation(format!(
                        "mode `{other}` (expected exact|mc|both)"
                    ))
                    .into())
                }
            };
            let sampler = parse_sampler(&sec.str_or("sampler", "tilted"))?;
            let epsilon = sec.require_f64("epsilon")?;
            let n_grid = sec
                .opt_usize_list("n_grid")?
                .ok_or_else(|| Error::validation("[experiment] needs n_grid"))?;
            let samples = sec.u64_or("samples", 0)?;
            let cfg_seed = sec.opt_u64("seed")?;
            let cfg_workers = sec.opt_usize("workers")?;
            sec.finish()?;
            let seed = seed.or(cfg_seed).ok_or_else(|| {
                Error::validation(
                    "stochastic subcommand needs a seed (--seed or [experiment] seed)",
                )
            })?;
            let workers = workers.or(cfg_workers).or_else(env_workers).unwrap_or(1);
            let exp = ShiftExperiment {
                psi,
                phi,
                epsilon,
                n_grid,
                samples,
                seed,
                mode,
                sampler,
                workers,
            };
            let report = deviate_shift(&exp)?;
            write_deviation_outputs("ld-shift", &out, seed, workers, started, &raw, &report)
        }
        Cmd::LdFlow {
            config,
            set,
            out,
            seed,
            workers,
        } => {
            let raw = read_config(&config, &set)?;
            raw.check_sections(&["experiment", "potential", "roof", "flow-observable"])?;
            let spec = config::read_potential(&raw)?;
            let psi = spec.potential;
            let roof = config::read_roof(&raw, psi.alphabet())?;
            let phi = config::read_flow_observable(&raw, psi.alphabet())?;
            let sec = raw.require("experiment")?;
            let sampler = parse_sampler(&sec.str_or("sampler", "tilted"))?;
            let epsilon = sec.require_f64("epsilon")?;
            let t_grid = sec
                .opt_f64_list("t_grid")?
                .ok_or_else(|| Error::validation("[experiment] needs t_grid"))?;
            let samples = sec.u64_or("samples", 0)?;
            let cfg_seed = sec.opt_u64("seed")?;
            let cfg_workers = sec.opt_usize("workers")?;
            let xi = sec.f64_or("xi", 0.1)?;
            let a = sec.f64_or("a", 0.05)?;
            let zeta = sec.opt_f64("zeta")?;
            let omega = sec.f64_or("omega", 0.05)?;
            let tail_levels = sec.opt_f64_list("tail_levels")?;
            sec.finish()?;
            let seed = seed.or(cfg_seed).ok_or_else(|| {
                Error::validation(
                    "stochastic subcommand needs a seed (--seed or [experiment] seed)",
                )
            })?;
            let workers = workers.or(cfg_workers).or_else(env_workers).unwrap_or(1);
            let exp = FlowExperiment {
                psi,
                phi,
                roof,
                epsilon,
                t_grid,
                samples,
                seed,
                workers,
                sampler,
                xi,
                a,
                zeta,
                omega,
                tail_levels,
            };
            let report = deviate_flow(&exp)?;
            write_deviation_outputs("ld-flow", &out, seed, workers, started, &raw, &report)
        }
        Cmd::LapDev {
            config,
            set,
            out,
            seed,
            workers,
        } => {
            let raw = read_config(&config, &set)?;
            raw.check_sections(&["experiment", "potential", "roof"])?;
            let spec = config::read_potential(&raw)?;
            let psi = spec.potential;
            let roof = config::read_roof(&raw, psi.alphabet())?;
            let sec = raw.require("experiment")?;
            let sampler = parse_sampler(&sec.str_or("sampler", "tilted"))?;
            let zeta_dev = sec.require_f64("zeta")?;
            let t_grid = sec
                .opt_f64_list("t_grid")?
                .ok_or_else(|| Error::validation("[experiment] needs t_grid"))?;
            let samples = sec.u64_or("samples", 0)?;
            let cfg_seed = sec.opt_u64("seed")?;
            let cfg_workers = sec.opt_usize("workers")?;
            let xi = sec.f64_or("xi", 0.1)?;
            sec.finish()?;
            let seed = seed.or(cfg_seed).ok_or_else(|| {
                Error::validation(
                    "stochastic subcommand needs a seed (--seed or [experiment] seed)",
                )
            })?;
            let workers = workers.or(cfg_workers).or_else(env_workers).unwrap_or(1);
            let exp = LapExperiment {
                psi,
                roof,
                zeta_dev,
                t_grid,
                samples,
                seed,
                workers,
                sampler,
                xi,
            };
            let report = lap_deviation(&exp)?;
            write_deviation_outputs("lap-dev", &out, seed, workers, started, &raw, &report)
        }
        Cmd::TeichDemo {
            pi,
            steps,
            starts,
            seed,
            epsilon,
            lengths,
            observable,
            out,
        } => {
            let pi = parse_pi(&pi)?;
            let lengths = lengths
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<u64>()
                        .map_err(|_| Error::validation(format!("bad length `{t}`")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let observable = match observable.as_str() {
                "sumsq" => LambdaObservable::SumSquares,
                "product" => LambdaObservable::Product,
                other => {
                    return Err(Error::validation(format!(
                        "observable `{other}` (expected sumsq|product)"
                    ))
                    .into())
                }
            };
            let cfg = TeichDemo {
                pi: pi.clone(),
                steps,
                starts,
                seed,
                epsilon,
                lengths,
                observable,
            };
            let report = teich_demo(&cfg)?;
            let echo = vec![(
                "teich-demo".into(),
                vec![
                    ("pi".into(), format!("{pi}")),
                    ("steps".into(), steps.to_string()),
                    ("starts".into(), starts.to_string()),
                    ("epsilon".into(), epsilon.to_string()),
                ],
            )];
            let prov: Vec<String> = echo
                .iter()
                .flat_map(|(s, kv): &(String, Vec<(String, String)>)| {
                    kv.iter().map(move |(k, v)| format!("{s}.{k} = {v}"))
                })
                .collect();
            write_file(
                Path::new(&format!("{out}.csv")),
                &emit::teich_report_csv(&report, &prov),
            )?;
            emit_envelope(
                "teich-demo",
                Some(seed),
                None,
                started,
                echo,
                emit::teich_report_json(&report),
                Some(Path::new(&format!("{out}.json"))),
            )
        }
    }
}

fn parse_sampler(s: &str) -> Result<SamplerKind, Error> {
    match s {
        "tilted" => Ok(SamplerKind::Tilted),
        "plain" => Ok(SamplerKind::Plain),
        other => Err(Error::validation(format!(
            "sampler `{other}` (expected tilted|plain)"
        ))),
    }
}

fn write_deviation_outputs(
    command: &str,
    prefix: &str,
    seed: u64,
    workers: usize,
    started: Instant,
    raw: &RawConfig,
    report: &rvlab_core::ldlab::DeviationReport,
) -> CliResult<()> {
    let prov = provenance(command, Some(seed), Some(workers), raw);
    write_file(
        Path::new(&format!("{prefix}.csv")),
        &emit::deviation_report_csv(report, &prov),
    )?;
    write_file(
        Path::new(&format!("{prefix}.dat")),
        &emit::deviation_report_dat(report),
    )?;
    emit_envelope(
        command,
        Some(seed),
        Some(workers),
        started,
        raw.echo(),
        emit::deviation_report_json(report),
        Some(Path::new(&format!("{prefix}.json"))),
    )
}
