//! Population spec files for the `oracle` and `moments` commands.
//!
//! A spec is a flat key-value file with optional per-stratum sections:
//!
//! ```text
//! # five units, one stratum
//! times = 0.5 1.0 1.0 1.5 2.0
//! p1 = 0.5
//! censor1 = 0.75:0.25 1.25:0.25 inf:0.5
//! censor0 = none
//! ```
//!
//! Global keys: `times` (potential event times, whitespace separated),
//! `strata` (per-unit labels, defaulting to all zero), `p1`, `censor1`,
//! `censor0`. A `[stratum N]` section overrides `p1`/`censor1`/`censor0`
//! for that stratum. Censoring values are `none`, `exp:SCALE`, or a list
//! of `VALUE:PROB` atoms whose probabilities sum to one; `inf` is a valid
//! atom value for never-censored mass.

use std::collections::BTreeMap;
use std::str::FromStr;

use lrtest_core::{
    CensoringDist, CensoringModel, DiscreteDist, FinitePopulation, StratumMechanism,
};

use crate::{CliResult, Failure};

#[derive(Default, Clone)]
struct MechanismKeys {
    p1: Option<f64>,
    censor1: Option<CensoringDist>,
    censor0: Option<CensoringDist>,
}

pub fn parse_population(text: &str) -> CliResult<FinitePopulation> {
    let mut times: Option<Vec<f64>> = None;
    let mut strata: Option<Vec<u32>> = None;
    let mut global = MechanismKeys::default();
    let mut sections: BTreeMap<u32, MechanismKeys> = BTreeMap::new();
    let mut current: Option<u32> = None;

    for (index, raw) in text.lines().enumerate() {
        let line = index + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(header) = content.strip_prefix('[') {
            let header = header
                .strip_suffix(']')
                .ok_or_else(|| usage(line, "unterminated section header"))?
                .trim();
            let label = header
                .strip_prefix("stratum")
                .map(str::trim)
                .and_then(|n| u32::from_str(n).ok())
                .ok_or_else(|| usage(line, "expected a [stratum N] section header"))?;
            sections.entry(label).or_default();
            current = Some(label);
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| usage(line, "expected key = value"))?;
        let key = key.trim().to_ascii_lowercase();
        let value = value.trim();
        let scope = match current {
            None => &mut global,
            Some(label) => sections.get_mut(&label).expect("section was created"),
        };
        match key.as_str() {
            "times" if current.is_none() => {
                set_once(&mut times, parse_numbers(value, line, "time")?, &key, line)?
            }
            "strata" if current.is_none() => set_once(
                &mut strata,
                parse_numbers(value, line, "stratum")?,
                &key,
                line,
            )?,
            "times" | "strata" => {
                return Err(usage(
                    line,
                    "times and strata are global keys, not per-stratum",
                ))
            }
            "p1" => {
                let p1 = value
                    .parse()
                    .map_err(|e| usage(line, &format!("p1 {value:?} is invalid: {e}")))?;
                set_once(&mut scope.p1, p1, &key, line)?;
            }
            "censor1" => set_once(
                &mut scope.censor1,
                parse_censoring(value, line)?,
                &key,
                line,
            )?,
            "censor0" => set_once(
                &mut scope.censor0,
                parse_censoring(value, line)?,
                &key,
                line,
            )?,
            other => return Err(usage(line, &format!("unknown key {other:?}"))),
        }
    }

    let times = times.ok_or_else(|| Failure::Usage("population spec sets no times".into()))?;
    let strata = strata.unwrap_or_else(|| vec![0; times.len()]);

    let mut labels: Vec<u32> = strata.clone();
    labels.sort_unstable();
    labels.dedup();
    for section in sections.keys() {
        if !labels.contains(section) {
            return Err(Failure::Usage(format!(
                "section [stratum {section}] matches no unit in strata"
            )));
        }
    }

    let mut mechanisms = BTreeMap::new();
    for label in labels {
        let section = sections.get(&label).cloned().unwrap_or_default();
        let p1 = section.p1.or(global.p1).ok_or_else(|| {
            Failure::Usage(format!(
                "stratum {label}: p1 is not set globally or in a section"
            ))
        })?;
        let treated = section.censor1.or_else(|| global.censor1.clone());
        let control = section.censor0.or_else(|| global.censor0.clone());
        let mechanism = StratumMechanism::new(
            p1,
            CensoringModel {
                treated: treated.unwrap_or(CensoringDist::None),
                control: control.unwrap_or(CensoringDist::None),
            },
        )
        .map_err(|e| Failure::Usage(format!("stratum {label}: {e}")))?;
        mechanisms.insert(label, mechanism);
    }

    FinitePopulation::new(times, strata, mechanisms).map_err(Failure::from)
}

fn usage(line: usize, message: &str) -> Failure {
    Failure::Usage(format!("line {line}: {message}"))
}

fn set_once<T>(slot: &mut Option<T>, value: T, key: &str, line: usize) -> CliResult<()> {
    if slot.is_some() {
        return Err(usage(line, &format!("duplicate key {key:?}")));
    }
    *slot = Some(value);
    Ok(())
}

fn parse_numbers<T: FromStr>(value: &str, line: usize, what: &str) -> CliResult<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split_whitespace()
        .map(|token| {
            token
                .parse()
                .map_err(|e| usage(line, &format!("{what} {token:?} is invalid: {e}")))
        })
        .collect()
}

fn parse_censoring(value: &str, line: usize) -> CliResult<CensoringDist> {
    if value.eq_ignore_ascii_case("none") {
        return Ok(CensoringDist::None);
    }
    if let Some(scale) = value.strip_prefix("exp:") {
        let scale: f64 = scale.trim().parse().map_err(|e| {
            usage(
                line,
                &format!("exponential scale {scale:?} is invalid: {e}"),
            )
        })?;
        return CensoringDist::exponential(scale)
            .map_err(|e| usage(line, &format!("exponential scale: {e}")));
    }
    let mut atoms = Vec::new();
    for token in value.split_whitespace() {
        let (v, p) = token
            .split_once(':')
            .ok_or_else(|| usage(line, &format!("expected VALUE:PROB atom, found {token:?}")))?;
        let v = if v.eq_ignore_ascii_case("inf") {
            f64::INFINITY
        } else {
            v.parse()
                .map_err(|e| usage(line, &format!("atom value {v:?} is invalid: {e}")))?
        };
        let p: f64 = p
            .parse()
            .map_err(|e| usage(line, &format!("atom probability {p:?} is invalid: {e}")))?;
        atoms.push((v, p));
    }
    if atoms.is_empty() {
        return Err(usage(
            line,
            "censoring needs at least one atom (or none / exp:SCALE)",
        ));
    }
    let dist = DiscreteDist::new(atoms).map_err(|e| usage(line, &e.to_string()))?;
    Ok(CensoringDist::Discrete(dist))
}
