//! Wide CSV format: one row per subject.
//!
//! `subject_id, l0_<baseline>..., l0_<period-0 time-varying>..., a_0, c_0,
//! l1_<name>..., a_1, c_1, ..., a_K, c_K, y`. Empty cells are missing.
//! Lines starting with `#` are comments.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use super::{DataError, PanelDataset, PeriodRecord, Schema, SubjectRecord};

fn header(schema: &Schema) -> Vec<String> {
    let mut cols = vec!["subject_id".to_string()];
    cols.extend(schema.baseline.iter().map(|n| format!("l0_{n}")));
    for (k, names) in schema.time_varying.iter().enumerate() {
        cols.extend(names.iter().map(|n| format!("l{k}_{n}")));
        cols.push(format!("a_{k}"));
        cols.push(format!("c_{k}"));
    }
    cols.push("y".to_string());
    cols
}

fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        // Display for f64 is the shortest string that parses back exactly.
        format!("{x}")
    }
}

fn fmt_bool(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

pub fn write_panel_csv<W: Write>(d: &PanelDataset, out: W) -> Result<(), DataError> {
    write_panel_csv_with_header(d, out, &[])
}

/// Writes `d`, preceded by `# ` comment lines.
pub fn write_panel_csv_with_header<W: Write>(
    d: &PanelDataset,
    mut out: W,
    comments: &[String],
) -> Result<(), DataError> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let cols = header(&d.schema);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&cols)?;
    let mut row = Vec::with_capacity(cols.len());
    for s in &d.subjects {
        row.clear();
        row.push(s.subject_id.clone());
        row.extend(s.baseline.iter().map(|&x| fmt_num(x)));
        for (k, names) in d.schema.time_varying.iter().enumerate() {
            match s.periods.get(k) {
                Some(p) => {
                    row.extend(p.covariates.iter().map(|&x| fmt_num(x)));
                    row.push(fmt_bool(p.treatment).to_string());
                    row.push(fmt_bool(p.censored).to_string());
                }
                None => row.extend(std::iter::repeat_n(String::new(), names.len() + 2)),
            }
        }
        row.push(s.outcome.map(fmt_num).unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

struct Columns {
    baseline: Vec<usize>,
    periods: Vec<(Vec<usize>, usize, usize)>,
    y: usize,
    id: usize,
}

fn locate(schema: &Schema, found: &csv::StringRecord) -> Result<Columns, DataError> {
    let index: HashMap<&str, usize> = found
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim(), i))
        .collect();
    let get = |name: String| {
        index
            .get(name.as_str())
            .copied()
            .ok_or(DataError::MissingColumn(name))
    };
    Ok(Columns {
        id: get("subject_id".into())?,
        baseline: schema
            .baseline
            .iter()
            .map(|n| get(format!("l0_{n}")))
            .collect::<Result<_, _>>()?,
        periods: schema
            .time_varying
            .iter()
            .enumerate()
            .map(|(k, names)| {
                let cov = names
                    .iter()
                    .map(|n| get(format!("l{k}_{n}")))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok((cov, get(format!("a_{k}"))?, get(format!("c_{k}"))?))
            })
            .collect::<Result<_, DataError>>()?,
        y: get("y".into())?,
    })
}

/// Reads a wide CSV using `schema` for the column layout.
pub fn read_panel_csv<R: Read>(input: R, schema: &Schema) -> Result<PanelDataset, DataError> {
    schema.check()?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    let cols = locate(schema, &headers)?;
    let mut subjects = Vec::new();
    for (row_no, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = row_no + 1;
        let cell = |i: usize| rec.get(i).unwrap_or("");
        let number = |i: usize| -> Result<f64, DataError> {
            let s = cell(i);
            if s.is_empty() {
                return Ok(f64::NAN);
            }
            s.parse::<f64>().map_err(|_| DataError::MalformedValue {
                row,
                column: headers[i].to_string(),
                value: s.to_string(),
            })
        };
        let flag = |i: usize| -> Result<bool, DataError> {
            match cell(i) {
                "0" => Ok(false),
                "1" => Ok(true),
                s => Err(DataError::MalformedValue {
                    row,
                    column: headers[i].to_string(),
                    value: s.to_string(),
                }),
            }
        };
        let subject_id = cell(cols.id).to_string();
        let baseline = cols
            .baseline
            .iter()
            .map(|&i| number(i))
            .collect::<Result<Vec<_>, _>>()?;
        let mut periods = Vec::with_capacity(cols.periods.len());
        let mut dropout: Option<usize> = None;
        for (k, (cov, a, c)) in cols.periods.iter().enumerate() {
            if dropout.is_some() {
                let any = cov.iter().chain([a, c]).any(|&i| !cell(i).is_empty());
                if any {
                    return Err(DataError::NonMonotoneCensoring {
                        subject: subject_id,
                        period: k,
                    });
                }
                continue;
            }
            let covariates = cov
                .iter()
                .map(|&i| number(i))
                .collect::<Result<Vec<_>, _>>()?;
            let p = PeriodRecord {
                covariates,
                treatment: flag(*a)?,
                censored: flag(*c)?,
            };
            if p.censored {
                dropout = Some(k);
            }
            periods.push(p);
        }
        let outcome = match dropout {
            Some(k) => {
                if !cell(cols.y).is_empty() {
                    return Err(DataError::NonMonotoneCensoring {
                        subject: subject_id,
                        period: k,
                    });
                }
                None
            }
            None => {
                let y = number(cols.y)?;
                if !y.is_finite() {
                    return Err(DataError::MalformedValue {
                        row,
                        column: "y".into(),
                        value: cell(cols.y).to_string(),
                    });
                }
                Some(y)
            }
        };
        subjects.push(SubjectRecord {
            subject_id,
            baseline,
            periods,
            outcome,
        });
    }
    PanelDataset::new(schema.clone(), subjects)
}

pub fn load_panel_csv(path: &Path, schema: &Schema) -> Result<PanelDataset, DataError> {
    let file = std::fs::File::open(path)?;
    read_panel_csv(std::io::BufReader::new(file), schema)
}
