//! Structured-text experiment files: `[section]` headers, `key = value`
//! lines, `#` comments, and whitespace-separated numeric tables. Flags
//! override file values through `--set section.key=value`. Unknown sections
//! and keys are rejected by name.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashSet};

use rvlab_core::error::{Error, Result};
use rvlab_core::shift::TableObservable;
use rvlab_core::suspension::{Fiber, FlowObservable, Roof};
use rvlab_core::thermo::Potential;

#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    /// section -> key -> (value, source line)
    sections: BTreeMap<String, BTreeMap<String, (String, usize)>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<RawConfig> {
        let mut cfg = RawConfig::default();
        let mut section = String::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw_line.find('#') {
                Some(p) => &raw_line[..p],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| {
                    Error::validation(format!("line {line_no}: unterminated section header"))
                })?;
                section = name.trim().to_string();
                if section.is_empty() {
                    return Err(Error::validation(format!(
                        "line {line_no}: empty section name"
                    )));
                }
                cfg.sections.entry(section.clone()).or_default();
                continue;
            }
            let eq = line.find('=').ok_or_else(|| {
                Error::validation(format!("line {line_no}: expected `key = value`"))
            })?;
            let key = line[..eq].trim().to_string();
            let value = line[eq + 1..].trim().to_string();
            if key.is_empty() {
                return Err(Error::validation(format!("line {line_no}: empty key")));
            }
            if section.is_empty() {
                return Err(Error::validation(format!(
                    "line {line_no}: `{key}` appears before any [section]"
                )));
            }
            let slot = cfg.sections.get_mut(&section).unwrap();
            if slot.insert(key.clone(), (value, line_no)).is_some() {
                return Err(Error::validation(format!(
                    "line {line_no}: duplicate key `{key}` in [{section}]"
                )));
            }
        }
        Ok(cfg)
    }

    /// Applies a `section.key=value` override (creating the key if absent).
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let eq = spec
            .find('=')
            .ok_or_else(|| Error::validation(format!("override `{spec}`: expected key=value")))?;
        let path = &spec[..eq];
        let value = spec[eq + 1..].trim().to_string();
        let dot = path.find('.').ok_or_else(|| {
            Error::validation(format!("override `{spec}`: expected section.key=value"))
        })?;
        let section = path[..dot].trim().to_string();
        let key = path[dot + 1..].trim().to_string();
        if section.is_empty() || key.is_empty() {
            return Err(Error::validation(format!(
                "override `{spec}`: empty section or key"
            )));
        }
        self.sections
            .entry(section)
            .or_default()
            .insert(key, (value, 0));
        Ok(())
    }

    pub fn section(&self, name: &str) -> Option<SectionReader<'_>> {
        self.sections.get(name).map(|map| SectionReader {
            name: name.to_string(),
            map,
            used: RefCell::new(HashSet::new()),
        })
    }

    pub fn require(&self, name: &str) -> Result<SectionReader<'_>> {
        self.section(name)
            .ok_or_else(|| Error::validation(format!("missing [{name}] section")))
    }

    /// Rejects sections outside the allowed set.
    pub fn check_sections(&self, allowed: &[&str]) -> Result<()> {
        for name in self.sections.keys() {
            if !allowed.contains(&name.as_str()) {
                return Err(Error::validation(format!(
                    "unknown section [{name}] (allowed: {})",
                    allowed.join(", ")
                )));
            }
        }
        Ok(())
    }

    /// The resolved key-value view, for provenance echoes.
    pub fn echo(&self) -> Vec<(String, Vec<(String, String)>)> {
        self.sections
            .iter()
            .map(|(s, kv)| {
                (
                    s.clone(),
                    kv.iter()
                        .map(|(k, (v, _))| (k.clone(), v.clone()))
                        .collect(),
                )
            })
            .collect()
    }
}

pub struct SectionReader<'a> {
    name: String,
    map: &'a BTreeMap<String, (String, usize)>,
    used: RefCell<HashSet<String>>,
}

impl SectionReader<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.used.borrow_mut().insert(key.to_string());
        self.map.get(key).map(|(v, _)| v.as_str())
    }

    pub fn opt_str(&self, key: &str) -> Option<String> {
        self.raw(key).map(|s| s.to_string())
    }

    pub fn str_or(&self, key: &str, default: &str) -> String {
        self.raw(key).unwrap_or(default).to_string()
    }

    pub fn opt_f64(&self, key: &str) -> Result<Option<f64>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse::<f64>().map(Some).map_err(|_| {
                Error::validation(format!("[{}] {key} = `{v}` is not a number", self.name))
            }),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.opt_f64(key)?.unwrap_or(default))
    }

    pub fn require_f64(&self, key: &str) -> Result<f64> {
        self.opt_f64(key)?
            .ok_or_else(|| Error::validation(format!("[{}] is missing the key `{key}`", self.name)))
    }

    pub fn opt_u64(&self, key: &str) -> Result<Option<u64>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse::<u64>().map(Some).map_err(|_| {
                Error::validation(format!("[{}] {key} = `{v}` is not an integer", self.name))
            }),
        }
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        Ok(self.opt_u64(key)?.unwrap_or(default))
    }

    pub fn opt_usize(&self, key: &str) -> Result<Option<usize>> {
        Ok(self.opt_u64(key)?.map(|v| v as usize))
    }

    pub fn require_usize(&self, key: &str) -> Result<usize> {
        Ok(self.opt_u64(key)?.ok_or_else(|| {
            Error::validation(format!("[{}] is missing the key `{key}`", self.name))
        })? as usize)
    }

    pub fn opt_f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => {
                let mut out = Vec::new();
                for tok in v.split_whitespace() {
                    let tok = tok.trim_matches(',');
                    if tok.is_empty() {
                        continue;
                    }
                    out.push(tok.parse::<f64>().map_err(|_| {
                        Error::validation(format!("[{}] {key}: `{tok}` is not a number", self.name))
                    })?);
                }
                Ok(Some(out))
            }
        }
    }

    pub fn opt_usize_list(&self, key: &str) -> Result<Option<Vec<usize>>> {
        match self.opt_f64_list(key)? {
            None => Ok(None),
            Some(v) => {
                let mut out = Vec::new();
                for x in v {
                    if x < 0.0 || x.fract() != 0.0 {
                        return Err(Error::validation(format!(
                            "[{}] {key}: `{x}` is not a nonnegative integer",
                            self.name
                        )));
                    }
                    out.push(x as usize);
                }
                Ok(Some(out))
            }
        }
    }

    /// Keys matching `prefix <suffix>` (for inline fiber tables).
    pub fn prefixed_keys(&self, prefix: &str) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (k, (v, _)) in self.map.iter() {
            if let Some(rest) = k.strip_prefix(prefix) {
                if rest.starts_with(' ') || rest.is_empty() {
                    self.used.borrow_mut().insert(k.clone());
                    out.push((rest.trim().to_string(), v.clone()));
                }
            }
        }
        out
    }

    /// Errors on any key that was never consumed.
    pub fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        for key in self.map.keys() {
            if !used.contains(key) {
                return Err(Error::validation(format!(
                    "unknown key `{key}` in [{}]",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// A parsed rational like `1/2` or `3`.
pub fn parse_rational(tok: &str) -> Result<(i64, i64)> {
    match tok.split_once('/') {
        Some((n, d)) => {
            let n = n.trim().parse::<i64>();
            let d = d.trim().parse::<i64>();
            match (n, d) {
                (Ok(n), Ok(d)) if d != 0 => Ok((n, d)),
                _ => Err(Error::validation(format!("`{tok}` is not a rational"))),
            }
        }
        None => tok
            .trim()
            .parse::<i64>()
            .map(|n| (n, 1))
            .map_err(|_| Error::validation(format!("`{tok}` is not a rational"))),
    }
}

/// The potential plus, when given as exact Bernoulli weights, those weights.
#[derive(Debug, Clone)]
pub struct PotentialSpec {
    pub potential: Potential,
    pub bernoulli_weights: Option<Vec<(i64, i64)>>,
}

pub fn read_potential(raw: &RawConfig) -> Result<PotentialSpec> {
    let sec = raw.require("potential")?;
    let out = if let Some(bern) = sec.opt_str("bernoulli") {
        let mut weights = Vec::new();
        for tok in bern.split_whitespace() {
            weights.push(parse_rational(tok)?);
        }
        if weights.is_empty() {
            return Err(Error::validation("[potential] bernoulli: no weights"));
        }
        let floats: Vec<f64> = weights.iter().map(|&(n, d)| n as f64 / d as f64).collect();
        PotentialSpec {
            potential: Potential::bernoulli(&floats)?,
            bernoulli_weights: Some(weights),
        }
    } else {
        let alphabet = sec.require_usize("alphabet")?;
        let depth = sec.require_usize("depth")?;
        let values = sec
            .opt_f64_list("values")?
            .ok_or_else(|| Error::validation("[potential] needs `values` or `bernoulli`"))?;
        PotentialSpec {
            potential: Potential::new(TableObservable::new(alphabet, depth, values)?),
            bernoulli_weights: None,
        }
    };
    sec.finish()?;
    Ok(out)
}

pub fn read_observable(raw: &RawConfig, default_alphabet: usize) -> Result<TableObservable> {
    let sec = raw.require("observable")?;
    let alphabet = sec.opt_usize("alphabet")?.unwrap_or(default_alphabet);
    let depth = sec.require_usize("depth")?;
    let values = sec
        .opt_f64_list("values")?
        .ok_or_else(|| Error::validation("[observable] needs `values`"))?;
    sec.finish()?;
    TableObservable::new(alphabet, depth, values)
}

pub fn read_roof(raw: &RawConfig, default_alphabet: usize) -> Result<Roof> {
    let sec = raw.require("roof")?;
    let alphabet = sec.opt_usize("alphabet")?.unwrap_or(default_alphabet);
    let depth = sec.require_usize("depth")?;
    let values = sec
        .opt_f64_list("values")?
        .ok_or_else(|| Error::validation("[roof] needs `values`"))?;
    let table = TableObservable::new(alphabet, depth, values)?;
    let r0 = sec.f64_or("r0", table.min_value())?;
    let tail_eps0 = sec.opt_f64("tail_eps0")?;
    let tail_c0 = sec.opt_f64("tail_c0")?;
    sec.finish()?;
    let roof = Roof::new(table, r0)?;
    match (tail_eps0, tail_c0) {
        (Some(e0), Some(c0)) => roof.with_declared_tail(e0, c0),
        (None, None) => Ok(roof),
        _ => Err(Error::validation(
            "[roof] tail_eps0 and tail_c0 must be given together",
        )),
    }
}

pub fn read_flow_observable(raw: &RawConfig, default_alphabet: usize) -> Result<FlowObservable> {
    let sec = raw.require("flow-observable")?;
    let alphabet = sec.opt_usize("alphabet")?.unwrap_or(default_alphabet);
    if alphabet > 10 {
        return Err(Error::validation(
            "fiber patterns use digit strings; alphabet must be at most 10",
        ));
    }
    let depth = sec.require_usize("depth")?;
    let support = match sec.str_or("support", "inf").as_str() {
        "inf" => f64::INFINITY,
        s => s
            .parse::<f64>()
            .map_err(|_| Error::validation(format!("support = `{s}` is not a number")))?,
    };
    let count = alphabet.pow(depth as u32);
    let mut fibers: Vec<Option<Fiber>> = vec![None; count];
    let mut default_fiber: Option<Fiber> = None;
    for (pattern, spec) in sec.prefixed_keys("fiber") {
        let fiber = parse_fiber(&spec, support)?;
        if pattern == "*" {
            default_fiber = Some(fiber);
            continue;
        }
        if pattern.len() != depth || pattern.chars().any(|c| !c.is_ascii_digit()) {
            return Err(Error::validation(format!(
                "fiber pattern `{pattern}` is not a {depth}-digit word"
            )));
        }
        let mut idx = 0usize;
        for c in pattern.chars() {
            let d = c.to_digit(10).unwrap() as usize;
            if d >= alphabet {
                return Err(Error::validation(format!(
                    "fiber pattern `{pattern}` uses a symbol outside the alphabet"
                )));
            }
            idx = idx * alphabet + d;
        }
        fibers[idx] = Some(fiber);
    }
    sec.finish()?;
    let fibers: Vec<Fiber> = fibers
        .into_iter()
        .enumerate()
        .map(|(i, f)| {
            f.or_else(|| default_fiber.clone()).ok_or_else(|| {
                Error::validation(format!(
                    "no fiber for pattern index {i} and no `fiber *` default"
                ))
            })
        })
        .collect::<Result<_>>()?;
    FlowObservable::new(alphabet, depth, fibers)
}

fn parse_fiber(spec: &str, support: f64) -> Result<Fiber> {
    let mut toks = spec.split_whitespace();
    match toks.next() {
        Some("poly") => {
            let coeffs: Vec<f64> = toks
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| Error::validation(format!("fiber coefficient `{t}`")))
                })
                .collect::<Result<_>>()?;
            if coeffs.is_empty() {
                return Err(Error::validation("poly fiber needs coefficients"));
            }
            if support.is_finite() {
                Ok(Fiber {
                    below: coeffs,
                    cut: support,
                    above: Vec::new(),
                })
            } else {
                Ok(Fiber::poly(coeffs))
            }
        }
        Some("step") => {
            let value = toks
                .next()
                .and_then(|t| t.parse::<f64>().ok())
                .ok_or_else(|| Error::validation("step fiber needs `step value cut`"))?;
            let cut = toks
                .next()
                .and_then(|t| t.parse::<f64>().ok())
                .ok_or_else(|| Error::validation("step fiber needs `step value cut`"))?;
            Ok(Fiber::step(value, cut))
        }
        other => Err(Error::validation(format!(
            "fiber kind `{}` (expected poly|step)",
            other.unwrap_or("")
        ))),
    }
}
