//! CSV dataset ingestion.
//!
//! Expected header: `id,time,event,group` with an optional trailing
//! `stratum` column. Header names are matched case-insensitively but the
//! order is fixed. The header is line 1, so the first data row is line 2
//! in error messages.

use lrtest_core::SurvivalRecord;

use crate::{CliResult, Failure};

pub struct Dataset {
    pub records: Vec<SurvivalRecord>,
    pub has_stratum: bool,
}

pub fn parse_dataset(bytes: &[u8]) -> CliResult<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(bytes);

    let headers = reader
        .headers()
        .map_err(|e| Failure::Usage(format!("line 1: {e}")))?
        .clone();
    let has_stratum = match headers.len() {
        4 => false,
        5 => true,
        len => {
            return Err(Failure::Usage(format!(
                "line 1: expected header id,time,event,group[,stratum], found {len} columns"
            )))
        }
    };
    let mut expected = vec!["id", "time", "event", "group"];
    if has_stratum {
        expected.push("stratum");
    }
    for (found, want) in headers.iter().zip(&expected) {
        if !found.eq_ignore_ascii_case(want) {
            return Err(Failure::Usage(format!(
                "line 1: expected header column {want:?}, found {found:?}"
            )));
        }
    }

    let mut records = Vec::new();
    for (index, row) in reader.records().enumerate() {
        let line = index + 2;
        let row = row.map_err(|e| Failure::Usage(format!("line {line}: {e}")))?;
        let id = &row[0];
        if id.is_empty() {
            return Err(Failure::Usage(format!("line {line}: empty id")));
        }
        let time: f64 = parse_field(&row[1], "time", line)?;
        let event = parse_binary(&row[2], "event", line)?;
        let group = parse_binary(&row[3], "group", line)?;
        let stratum: u32 = if has_stratum {
            parse_field(&row[4], "stratum", line)?
        } else {
            0
        };
        let record = SurvivalRecord::in_stratum(index as u32, time, event == 1, group, stratum)
            .map_err(|e| Failure::Usage(format!("line {line} (id {id:?}): {e}")))?;
        records.push(record);
    }
    Ok(Dataset {
        records,
        has_stratum,
    })
}

fn parse_field<T: std::str::FromStr>(raw: &str, name: &str, line: usize) -> CliResult<T>
where
    T::Err: std::fmt::Display,
{
    raw.parse()
        .map_err(|e| Failure::Usage(format!("line {line}: {name} field {raw:?} is invalid: {e}")))
}

fn parse_binary(raw: &str, name: &str, line: usize) -> CliResult<u8> {
    match raw {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(Failure::Usage(format!(
            "line {line}: {name} field must be 0 or 1, found {other:?}"
        ))),
    }
}
