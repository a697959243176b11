//! Scenario sources for the `simulate` command: a preset name, or a flat
//! key-value file that starts from a preset and overrides parts of it.
//!
//! ```text
//! # scenario file schema
//! case = table3-case2      # required; any preset name
//! mode = finite            # finite | superpop | random
//! n = 1000
//! reps = 10000
//! seed = 7
//! iz = 1                   # covariate-shifted assignment family, on/off
//! ic = 0                   # covariate-scaled censoring family, on/off
//! strata = 1               # also compute the stratified statistic
//! ```
//!
//! `iz`/`ic` switch the mechanism to the covariate-dependent family with
//! the given flag, so `ic = 0` selects that family's baseline scales
//! (10, 1), which is not the homogeneous model's (2, 1); omit the key to
//! keep the preset's mechanism.

use std::path::Path;

use lrtest_core::simulation::{
    preset, AssignmentScheme, CensoringScheme, ConditioningMode, ScenarioConfig,
};

use crate::{CliResult, Failure};

pub enum ScenarioSource {
    Preset(String),
    File { path: String, bytes: Vec<u8> },
}

pub struct LoadedScenario {
    pub config: ScenarioConfig,
    pub seed_provided: bool,
    pub source: ScenarioSource,
}

pub fn load(source: &str) -> CliResult<LoadedScenario> {
    let path = Path::new(source);
    if path.exists() {
        let bytes = crate::report::read_input(path)?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|_| Failure::Usage(format!("{source}: scenario file is not UTF-8")))?;
        let (config, seed_provided) = parse_scenario(text)?;
        return Ok(LoadedScenario {
            config,
            seed_provided,
            source: ScenarioSource::File {
                path: source.to_string(),
                bytes,
            },
        });
    }
    let config = preset(source, 0).map_err(Failure::from)?;
    let label = config.label.clone();
    Ok(LoadedScenario {
        config,
        seed_provided: false,
        source: ScenarioSource::Preset(label),
    })
}

pub fn parse_mode(name: &str) -> Option<ConditioningMode> {
    match name {
        "finite" => Some(ConditioningMode::FixedEventTimes),
        "superpop" => Some(ConditioningMode::FixedAssignment),
        "random" => Some(ConditioningMode::FullyRandom),
        _ => None,
    }
}

fn parse_scenario(text: &str) -> CliResult<(ScenarioConfig, bool)> {
    let mut pairs: Vec<(usize, String, String)> = Vec::new();
    for (index, raw) in text.lines().enumerate() {
        let line = index + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| usage(line, "expected key = value"))?;
        let key = key.trim().to_ascii_lowercase();
        if pairs.iter().any(|(_, k, _)| *k == key) {
            return Err(usage(line, &format!("duplicate key {key:?}")));
        }
        pairs.push((line, key, value.trim().to_string()));
    }

    let case = pairs
        .iter()
        .find(|(_, key, _)| key == "case")
        .ok_or_else(|| Failure::Usage("scenario file sets no case".into()))?;
    let mut config = preset(&case.2, 0).map_err(|e| usage(case.0, &e.to_string()))?;
    let mut seed_provided = false;

    for (line, key, value) in &pairs {
        let line = *line;
        match key.as_str() {
            "case" => {}
            "mode" => {
                config.mode = parse_mode(value).ok_or_else(|| {
                    usage(
                        line,
                        &format!("mode {value:?} is not finite, superpop, or random"),
                    )
                })?;
            }
            "n" => config.n = parse_number(value, line, "n")?,
            "reps" => config.replications = parse_number(value, line, "reps")?,
            "seed" => {
                config.seed = parse_number(value, line, "seed")?;
                seed_provided = true;
            }
            "iz" => {
                config.assignment = AssignmentScheme::CovariateShift {
                    shifted: parse_flag(value, line, "iz")?,
                };
            }
            "ic" => {
                config.censoring = CensoringScheme::CovariateScale {
                    scaled: parse_flag(value, line, "ic")?,
                };
            }
            "strata" => config.stratified = parse_flag(value, line, "strata")?,
            other => return Err(usage(line, &format!("unknown key {other:?}"))),
        }
    }
    Ok((config, seed_provided))
}

fn usage(line: usize, message: &str) -> Failure {
    Failure::Usage(format!("line {line}: {message}"))
}

fn parse_number<T: std::str::FromStr>(value: &str, line: usize, name: &str) -> CliResult<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| usage(line, &format!("{name} {value:?} is invalid: {e}")))
}

fn parse_flag(value: &str, line: usize, name: &str) -> CliResult<bool> {
    match value {
        "0" | "false" => Ok(false),
        "1" | "true" => Ok(true),
        other => Err(usage(
            line,
            &format!("{name} must be 0, 1, true, or false, found {other:?}"),
        )),
    }
}
