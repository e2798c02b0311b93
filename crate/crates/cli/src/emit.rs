//! Output serialization: a small JSON value with stable field order and
//! floats at 17 significant digits (lossless for f64), plus CSV and
//! gnuplot-ready writers. Reports parse back for round-trip checks.

use rvlab_core::error::{Error, Result};
use rvlab_core::ldlab::{
    BoundTerm, DeviationReport, PointEstimate, SlopeFit, TeichReport, Verdict,
};

pub const SCHEMA_VERSION: u64 = 1;

/// JSON value with insertion-ordered objects.
#[derive(Debug, Clone, PartialEq)]
pub enum Json {
    Null,
    Bool(bool),
    F64(f64),
    U64(u64),
    I64(i64),
    Str(String),
    Arr(Vec<Json>),
    Obj(Vec<(String, Json)>),
}

impl Json {
    pub fn opt_f64(v: Option<f64>) -> Json {
        match v {
            Some(x) if x.is_finite() => Json::F64(x),
            _ => Json::Null,
        }
    }

    pub fn finite_or_null(x: f64) -> Json {
        if x.is_finite() {
            Json::F64(x)
        } else {
            Json::Null
        }
    }
}

/// 17 significant digits: enough to reproduce any f64 exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out
}

pub fn to_string(v: &Json) -> String {
    let mut s = String::new();
    write_json(v, 0, &mut s);
    s
}

fn write_json(v: &Json, indent: usize, out: &mut String) {
    match v {
        Json::Null => out.push_str("null"),
        Json::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Json::F64(x) => out.push_str(&fmt_f64(*x)),
        Json::U64(x) => out.push_str(&x.to_string()),
        Json::I64(x) => out.push_str(&x.to_string()),
        Json::Str(s) => {
            out.push('"');
            out.push_str(&escape(s));
            out.push('"');
        }
        Json::Arr(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push('\n');
                out.push_str(&"  ".repeat(indent + 1));
                write_json(item, indent + 1, out);
            }
            out.push('\n');
            out.push_str(&"  ".repeat(indent));
            out.push(']');
        }
        Json::Obj(fields) => {
            if fields.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push('{');
            for (i, (k, val)) in fields.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push('\n');
                out.push_str(&"  ".repeat(indent + 1));
                out.push('"');
                out.push_str(&escape(k));
                out.push_str("\": ");
                write_json(val, indent + 1, out);
            }
            out.push('\n');
            out.push_str(&"  ".repeat(indent));
            out.push('}');
        }
    }
}

// ---------------------------------------------------------------------------
// deviation reports

pub fn deviation_report_json(r: &DeviationReport) -> Json {
    let points = r
        .points
        .iter()
        .map(|p| {
            Json::Obj(vec![
                ("x".into(), Json::F64(p.x)),
                ("samples_per_side".into(), Json::U64(p.samples_per_side)),
                ("hits_ge".into(), Json::U64(p.hits_ge)),
                ("hits_gt".into(), Json::U64(p.hits_gt)),
                ("p_ge".into(), Json::F64(p.p_ge)),
                ("p_gt".into(), Json::F64(p.p_gt)),
                ("ci_lo".into(), Json::F64(p.ci_lo)),
                ("ci_hi".into(), Json::F64(p.ci_hi)),
                ("log_rate".into(), Json::opt_f64(p.log_rate)),
                ("dropped".into(), Json::Bool(p.dropped)),
                ("exact_ge".into(), Json::opt_f64(p.exact_ge)),
                ("exact_gt".into(), Json::opt_f64(p.exact_gt)),
            ])
        })
        .collect();
    let slope = match &r.slope {
        None => Json::Null,
        Some(s) => Json::Obj(vec![
            ("slope".into(), Json::F64(s.slope)),
            ("intercept".into(), Json::F64(s.intercept)),
            ("ci_half_width".into(), Json::F64(s.ci_half_width)),
            ("points_used".into(), Json::U64(s.points_used as u64)),
            ("residual_rms".into(), Json::F64(s.residual_rms)),
        ]),
    };
    let terms = r
        .bound_terms
        .iter()
        .map(|t| {
            Json::Obj(vec![
                ("name".into(), Json::Str(t.name.clone())),
                ("value".into(), Json::finite_or_null(t.value)),
            ])
        })
        .collect();
    Json::Obj(vec![
        ("points".into(), Json::Arr(points)),
        ("slope".into(), slope),
        ("bound_upper_ge".into(), Json::opt_f64(r.bound_upper_ge)),
        ("bound_upper_gt".into(), Json::opt_f64(r.bound_upper_gt)),
        ("bound_lower".into(), Json::opt_f64(r.bound_lower)),
        ("bound_terms".into(), Json::Arr(terms)),
        (
            "slope_excludes_zero".into(),
            match r.slope_excludes_zero {
                None => Json::Null,
                Some(b) => Json::Bool(b),
            },
        ),
        ("verdict".into(), Json::Str(r.verdict.to_string())),
        (
            "notes".into(),
            Json::Arr(r.notes.iter().map(|n| Json::Str(n.clone())).collect()),
        ),
    ])
}

fn verdict_from(s: &str) -> Result<Verdict> {
    Ok(match s {
        "consistent" => Verdict::Consistent,
        "inconsistent" => Verdict::Inconsistent,
        "inconclusive" => Verdict::Inconclusive,
        "empty deviation set" => Verdict::EmptyDeviationSet,
        other => return Err(Error::validation(format!("unknown verdict `{other}`"))),
    })
}

/// Re-parses an emitted deviation report (round-trip check support).
pub fn deviation_report_from_json(text: &str) -> Result<DeviationReport> {
    let v: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| Error::validation(format!("bad report JSON: {e}")))?;
    let obj = v
        .as_object()
        .ok_or_else(|| Error::validation("report is not an object"))?;
    let f = |x: &serde_json::Value| -> Option<f64> { x.as_f64() };
    let points = obj["points"]
        .as_array()
        .ok_or_else(|| Error::validation("points missing"))?
        .iter()
        .map(|p| -> Result<PointEstimate> {
            Ok(PointEstimate {
                x: f(&p["x"]).ok_or_else(|| Error::validation("x"))?,
                samples_per_side: p["samples_per_side"].as_u64().unwrap_or(0),
                hits_ge: p["hits_ge"].as_u64().unwrap_or(0),
                hits_gt: p["hits_gt"].as_u64().unwrap_or(0),
                p_ge: f(&p["p_ge"]).unwrap_or(0.0),
                p_gt: f(&p["p_gt"]).unwrap_or(0.0),
                ci_lo: f(&p["ci_lo"]).unwrap_or(0.0),
                ci_hi: f(&p["ci_hi"]).unwrap_or(0.0),
                log_rate: f(&p["log_rate"]),
                dropped: p["dropped"].as_bool().unwrap_or(false),
                exact_ge: f(&p["exact_ge"]),
                exact_gt: f(&p["exact_gt"]),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let slope = if obj["slope"].is_null() {
        None
    } else {
        let s = &obj["slope"];
        Some(SlopeFit {
            slope: f(&s["slope"]).unwrap_or(f64::NAN),
            intercept: f(&s["intercept"]).unwrap_or(f64::NAN),
            ci_half_width: f(&s["ci_half_width"]).unwrap_or(f64::NAN),
            points_used: s["points_used"].as_u64().unwrap_or(0) as usize,
            residual_rms: f(&s["residual_rms"]).unwrap_or(f64::NAN),
        })
    };
    let bound_terms = obj["bound_terms"]
        .as_array()
        .map(|arr| {
            arr.iter()
                .map(|t| BoundTerm {
                    name: t["name"].as_str().unwrap_or("").to_string(),
                    value: f(&t["value"]).unwrap_or(f64::NEG_INFINITY),
                })
                .collect()
        })
        .unwrap_or_default();
    Ok(DeviationReport {
        points,
        slope,
        bound_upper_ge: f(&obj["bound_upper_ge"]),
        bound_upper_gt: f(&obj["bound_upper_gt"]),
        bound_lower: f(&obj["bound_lower"]),
        bound_terms,
        slope_excludes_zero: obj["slope_excludes_zero"].as_bool(),
        verdict: verdict_from(
            obj["verdict"]
                .as_str()
                .ok_or_else(|| Error::validation("verdict missing"))?,
        )?,
        notes: obj["notes"]
            .as_array()
            .map(|a| {
                a.iter()
                    .filter_map(|n| n.as_str().map(|s| s.to_string()))
                    .collect()
            })
            .unwrap_or_default(),
    })
}

const POINT_COLUMNS: &str =
    "x,samples_per_side,hits_ge,hits_gt,p_ge,p_gt,ci_lo,ci_hi,log_rate,dropped,exact_ge,exact_gt";

/// CSV with one row per grid point; provenance goes into leading `#` lines.
pub fn deviation_report_csv(r: &DeviationReport, provenance: &[String]) -> String {
    let mut out = String::new();
    for line in provenance {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out.push_str(POINT_COLUMNS);
    out.push('\n');
    for p in &r.points {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            fmt_f64(p.x),
            p.samples_per_side,
            p.hits_ge,
            p.hits_gt,
            fmt_f64(p.p_ge),
            fmt_f64(p.p_gt),
            fmt_f64(p.ci_lo),
            fmt_f64(p.ci_hi),
            opt(p.log_rate),
            p.dropped,
            opt(p.exact_ge),
            opt(p.exact_gt),
        ));
    }
    out
}

/// Space-separated table for gnuplot: `x log_rate p ci_lo ci_hi`.
pub fn deviation_report_dat(r: &DeviationReport) -> String {
    let mut out = String::from("# x log_rate p_ge ci_lo ci_hi\n");
    for p in &r.points {
        if let Some(lr) = p.log_rate {
            out.push_str(&format!(
                "{} {} {} {} {}\n",
                fmt_f64(p.x),
                fmt_f64(lr),
                fmt_f64(p.p_ge),
                fmt_f64(p.ci_lo),
                fmt_f64(p.ci_hi)
            ));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// induction demo reports

pub fn teich_report_json(r: &TeichReport) -> Json {
    Json::Obj(vec![
        ("class_size".into(), Json::U64(r.class_size as u64)),
        ("starts".into(), Json::U64(r.starts)),
        ("steps_per_start".into(), Json::U64(r.steps_per_start)),
        ("restarts".into(), Json::U64(r.restarts)),
        ("non_finite".into(), Json::U64(r.non_finite)),
        (
            "letter_counts".into(),
            Json::Arr(vec![
                Json::U64(r.letter_counts[0]),
                Json::U64(r.letter_counts[1]),
            ]),
        ),
        ("roof_min".into(), Json::F64(r.roof_min)),
        ("roof_mean".into(), Json::F64(r.roof_mean)),
        ("roof_max".into(), Json::F64(r.roof_max)),
        (
            "roof_histogram".into(),
            Json::Arr(
                r.roof_histogram
                    .iter()
                    .map(|(edge, count)| {
                        Json::Obj(vec![
                            ("upper_edge".into(), Json::finite_or_null(*edge)),
                            ("count".into(), Json::U64(*count)),
                        ])
                    })
                    .collect(),
            ),
        ),
        (
            "deviation_masses".into(),
            Json::Arr(
                r.deviation_masses
                    .iter()
                    .map(|(len, mass)| {
                        Json::Obj(vec![
                            ("length".into(), Json::U64(*len)),
                            ("mass_beyond_epsilon".into(), Json::F64(*mass)),
                        ])
                    })
                    .collect(),
            ),
        ),
        ("reference_average".into(), Json::F64(r.reference_average)),
        ("epsilon".into(), Json::F64(r.epsilon)),
        (
            "roof_log_holder".into(),
            match r.roof_log_holder {
                None => Json::Null,
                Some((log_c, rate)) => Json::Obj(vec![
                    ("log_prefactor".into(), Json::F64(log_c)),
                    ("rate".into(), Json::F64(rate)),
                ]),
            },
        ),
    ])
}

pub fn teich_report_csv(r: &TeichReport, provenance: &[String]) -> String {
    let mut out = String::new();
    for line in provenance {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out.push_str("length,mass_beyond_epsilon\n");
    for (len, mass) in &r.deviation_masses {
        out.push_str(&format!("{},{}\n", len, fmt_f64(*mass)));
    }
    out
}

// ---------------------------------------------------------------------------
// envelope

pub struct Envelope {
    pub command: String,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub wall_clock_seconds: f64,
    pub config_echo: Vec<(String, Vec<(String, String)>)>,
}

/// Full output document. The `report` subtree and the CSV/DAT files are
/// deterministic for a fixed seed; the envelope carries the wall clock.
pub fn envelope_json(env: &Envelope, report: Json) -> Json {
    let echo = env
        .config_echo
        .iter()
        .map(|(section, kv)| {
            (
                section.clone(),
                Json::Obj(
                    kv.iter()
                        .map(|(k, v)| (k.clone(), Json::Str(v.clone())))
                        .collect(),
                ),
            )
        })
        .collect();
    Json::Obj(vec![
        ("schema_version".into(), Json::U64(SCHEMA_VERSION)),
        ("artifact".into(), Json::Str("rvlab".into())),
        (
            "version".into(),
            Json::Str(env!("CARGO_PKG_VERSION").into()),
        ),
        ("command".into(), Json::Str(env.command.clone())),
        (
            "seed".into(),
            match env.seed {
                None => Json::Null,
                Some(s) => Json::U64(s),
            },
        ),
        (
            "workers".into(),
            match env.workers {
                None => Json::Null,
                Some(w) => Json::U64(w as u64),
            },
        ),
        (
            "wall_clock_seconds".into(),
            Json::F64(env.wall_clock_seconds),
        ),
        ("config_echo".into(), Json::Obj(echo)),
        ("report".into(), report),
    ])
}

/// Extracts the deterministic `report` subtree from an envelope document.
pub fn report_subtree(text: &str) -> Result<String> {
    let v: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::validation(format!("bad JSON: {e}")))?;
    let report = v
        .get("report")
        .ok_or_else(|| Error::validation("no report subtree"))?;
    Ok(report.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips_exactly() {
        for &x in &[0.1, 1.0 / 3.0, -0.15923644455552051, 1e-300, 6.02e23, -0.0] {
            let s = fmt_f64(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{s}");
        }
    }

    #[test]
    fn empty_report_gives_header_only_csv() {
        let r = DeviationReport {
            points: vec![],
            slope: None,
            bound_upper_ge: None,
            bound_upper_gt: None,
            bound_lower: None,
            bound_terms: vec![],
            slope_excludes_zero: None,
            verdict: Verdict::Inconclusive,
            notes: vec![],
        };
        let csv = deviation_report_csv(&r, &[]);
        assert_eq!(csv.lines().count(), 1);
        assert!(csv.starts_with("x,"));
    }

    #[test]
    fn json_escapes_strings() {
        let j = Json::Str("a\"b\\c\nd".into());
        let s = to_string(&j);
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v.as_str().unwrap(), "a\"b\\c\nd");
    }
}
