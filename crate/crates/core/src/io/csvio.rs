use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::config::ColumnMap;
use crate::model::{validate_dataset, BiomarkerKind, Dataset, Observation, PsiEstimate};
use crate::sim::CoverageRow;

/// Column names with a fixed role; every other column is a covariate
/// unless the map lists covariates explicitly.
pub const RESERVED_COLUMNS: [&str; 6] = ["a", "y", "s", "s_c", "delta", "pi"];

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn data_err(row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Data {
        row: Some(row),
        column: column.into(),
        message: message.into(),
    }
}

fn is_missing(v: &str) -> bool {
    v.is_empty() || v.eq_ignore_ascii_case("na") || v.eq_ignore_ascii_case("nan")
}

fn parse_binary(v: &str, row: usize, column: &str) -> Result<bool> {
    match v {
        "0" => Ok(false),
        "1" => Ok(true),
        other => match other.parse::<f64>() {
            Ok(x) if x == 0.0 => Ok(false),
            Ok(x) if x == 1.0 => Ok(true),
            _ => Err(data_err(row, column, format!("`{other}` is not 0 or 1"))),
        },
    }
}

/// Parse a CSV file into a validated dataset.
pub fn ingest_csv(path: &Path, columns: &ColumnMap, kind: BiomarkerKind) -> Result<Dataset<f64>> {
    read_dataset(std::fs::File::open(path)?, columns, kind)
}

/// Parse CSV text into a validated dataset.
///
/// Empty cells and `NA` are missing. For discrete biomarkers, non-numeric
/// values are category labels, coded by their rank among all labels.
pub fn read_dataset<R: Read>(reader: R, columns: &ColumnMap, kind: BiomarkerKind) -> Result<Dataset<f64>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let find = |name: &str| header.iter().position(|h| h == name);
    let require = |name: &str| {
        find(name).ok_or_else(|| Error::Data {
            row: None,
            column: name.into(),
            message: "mandatory column is missing".into(),
        })
    };
    let ia = require(&columns.a)?;
    let iy = require(&columns.y)?;
    let is = require(&columns.s)?;
    let isc = require(&columns.s_c)?;
    let idelta = find(&columns.delta);
    let ipi = find(&columns.pi);
    let roles = [&columns.a, &columns.y, &columns.s, &columns.s_c, &columns.delta, &columns.pi];
    let iw: Vec<usize> = match &columns.covariates {
        Some(names) => names.iter().map(|n| require(n)).collect::<Result<_>>()?,
        None => (0..header.len())
            .filter(|&j| !roles.iter().any(|r| **r == header[j]))
            .collect(),
    };
    if iw.is_empty() {
        return Err(Error::Data {
            row: None,
            column: "w".into(),
            message: "no covariate columns".into(),
        });
    }

    let records: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>()?;
    let labelled = kind == BiomarkerKind::Discrete
        && records.iter().any(|r| {
            [is, isc]
                .iter()
                .any(|&j| !is_missing(&r[j]) && r[j].parse::<f64>().is_err())
        });
    let labels: Option<Vec<String>> = labelled.then(|| {
        let set: BTreeSet<&str> = records
            .iter()
            .flat_map(|r| [&r[is], &r[isc]])
            .filter(|v| !is_missing(v))
            .collect();
        set.into_iter().map(str::to_owned).collect()
    });

    let mut obs = Vec::with_capacity(records.len());
    for (row, r) in records.iter().enumerate() {
        let col = |j: usize| header[j].as_str();
        let bio = |j: usize| -> Result<Option<f64>> {
            let v = &r[j];
            if is_missing(v) {
                return Ok(None);
            }
            match &labels {
                Some(l) => Ok(Some(l.iter().position(|x| x == v).expect("label collected") as f64)),
                None => v
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|_| data_err(row, col(j), format!("`{v}` is not numeric"))),
            }
        };
        let w = iw
            .iter()
            .map(|&j| {
                r[j].parse::<f64>()
                    .map_err(|_| data_err(row, col(j), format!("`{}` is not numeric", &r[j])))
            })
            .collect::<Result<Vec<f64>>>()?;
        let a = parse_binary(&r[ia], row, col(ia))?;
        let y = parse_binary(&r[iy], row, col(iy))?;
        let delta = match idelta {
            Some(j) if !is_missing(&r[j]) => parse_binary(&r[j], row, col(j))?,
            _ => true,
        };
        let pi = match ipi {
            Some(j) if !is_missing(&r[j]) => r[j]
                .parse::<f64>()
                .map_err(|_| data_err(row, col(j), format!("`{}` is not numeric", &r[j])))?,
            _ => 1.0,
        };
        if !(pi > 0.0 && pi <= 1.0) {
            return Err(data_err(row, &columns.pi, format!("{pi} is outside (0, 1]")));
        }
        obs.push(Observation::new(w, a, bio(is)?, y, bio(isc)?).with_phase_two(delta, pi));
    }
    let mut d = Dataset::new(obs, kind);
    d.labels = labels;
    let violations = validate_dataset(&d);
    if violations.is_empty() {
        Ok(d)
    } else {
        Err(Error::Validation(violations))
    }
}

/// Write a dataset with covariate columns `w1, w2, …` and the reserved
/// columns; missing biomarkers are empty cells.
pub fn write_dataset_csv<W: Write>(d: &Dataset<f64>, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=d.covariate_dim).map(|j| format!("w{j}")).collect();
    header.extend(RESERVED_COLUMNS.iter().map(|s| s.to_string()));
    wtr.write_record(&header)?;
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    for o in d.iter() {
        let mut rec: Vec<String> = o.w.iter().map(|&x| num(x)).collect();
        rec.push((o.a as u8).to_string());
        rec.push((o.y as u8).to_string());
        rec.push(opt(o.s));
        rec.push(opt(o.s_c));
        rec.push((o.delta as u8).to_string());
        rec.push(num(o.pi));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Per-subject influence-function rows.
pub fn write_influence_csv<W: Write>(est: &PsiEstimate<f64>, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["row", "d1", "d2", "d3"])?;
    for (i, r) in est.influence_rows.iter().enumerate() {
        wtr.write_record([i.to_string(), num(r[0]), num(r[1]), num(r[2])])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_coverage_csv<W: Write>(rows: &[CoverageRow], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(CoverageRow::HEADER)?;
    for r in rows {
        wtr.write_record([
            num(r.s1_star),
            num(r.h),
            r.n.to_string(),
            r.reps.to_string(),
            num(r.bias_truth),
            num(r.bias_smoothed),
            num(r.coverage_truth),
            num(r.coverage_smoothed),
            num(r.mean_se),
            num(r.sampling_sd),
            r.failures.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
