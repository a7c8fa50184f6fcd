//! Cohort CSV files.
//!
//! Layout: `id`, the 48 risk-factor columns, the 17 morphometry columns,
//! `ImageProxy0..ImageProxy{m-1}`, `Label` (`case`/`control`) and
//! `YearsToOnset`. Empty cells are MISSING; categorical cells hold level codes.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use super::schema::{
    FieldKind, IncidentLabel, MorphometryVector, RiskFactor, RiskFactorProfile, Subject, Value, MORPHOMETRY_COLUMNS,
    MORPHOMETRY_DIM,
};
use crate::error::{Error, Result};

const ID: &str = "id";
const LABEL: &str = "Label";
const ONSET: &str = "YearsToOnset";
const IMAGE_PREFIX: &str = "ImageProxy";

pub fn header(image_width: usize) -> Vec<String> {
    let mut cols = vec![ID.to_string()];
    cols.extend(RiskFactor::ALL.iter().map(|f| f.column().to_string()));
    cols.extend(MORPHOMETRY_COLUMNS.iter().map(|c| c.to_string()));
    cols.extend((0..image_width).map(|k| format!("{IMAGE_PREFIX}{k}")));
    cols.push(LABEL.to_string());
    cols.push(ONSET.to_string());
    cols
}

fn format_value(v: Value) -> String {
    match v {
        Value::Missing => String::new(),
        Value::Numeric(x) => x.to_string(),
        Value::Code(c) => c.to_string(),
    }
}

pub fn write_cohort<W: std::io::Write>(subjects: &[Subject], writer: W) -> Result<()> {
    let width = subjects.first().map_or(0, |s| s.image_proxy.len());
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header(width))?;
    for s in subjects {
        if s.image_proxy.len() != width {
            return Err(Error::shape(
                format!("image proxy width {width}"),
                format!("{} for subject {}", s.image_proxy.len(), s.id),
            ));
        }
        let mut row = vec![s.id.clone()];
        row.extend(s.profile.iter().map(|(_, v)| format_value(v)));
        row.extend(s.morphometry.0.iter().map(|x| x.to_string()));
        row.extend(s.image_proxy.iter().map(|x| x.to_string()));
        row.push(
            match s.incident_label {
                IncidentLabel::Case => "case",
                IncidentLabel::Control => "control",
            }
            .to_string(),
        );
        row.push(s.years_to_onset.map(|t| t.to_string()).unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn save_cohort_csv(subjects: &[Subject], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_cohort(subjects, std::io::BufWriter::new(file))
}

pub fn load_cohort_csv(path: impl AsRef<Path>) -> Result<Vec<Subject>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_cohort(file)
}

struct Columns {
    id: usize,
    risk: Vec<usize>,
    morph: Vec<usize>,
    image: Vec<usize>,
    label: usize,
    onset: usize,
}

fn resolve_columns(names: &[String]) -> Result<Columns> {
    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let mut missing = Vec::new();
    let mut find = |name: &str| -> usize {
        match index.get(name) {
            Some(&i) => i,
            None => {
                missing.push(name.to_string());
                usize::MAX
            }
        }
    };
    let id = find(ID);
    let risk: Vec<usize> = RiskFactor::ALL.iter().map(|f| find(f.column())).collect();
    let morph: Vec<usize> = MORPHOMETRY_COLUMNS.iter().map(|c| find(c)).collect();
    let label = find(LABEL);
    let onset = find(ONSET);

    let mut image_cols: Vec<(usize, usize)> = Vec::new();
    let mut unknown = Vec::new();
    let known: BTreeSet<&str> = [ID, LABEL, ONSET]
        .into_iter()
        .chain(RiskFactor::ALL.iter().map(|f| f.column()))
        .chain(MORPHOMETRY_COLUMNS.iter().copied())
        .collect();
    for (i, name) in names.iter().enumerate() {
        if known.contains(name.as_str()) {
            continue;
        }
        match name.strip_prefix(IMAGE_PREFIX).and_then(|k| k.parse::<usize>().ok()) {
            Some(k) => image_cols.push((k, i)),
            None => unknown.push(name.clone()),
        }
    }
    image_cols.sort_unstable();
    for (expected, &(k, _)) in image_cols.iter().enumerate() {
        if k != expected {
            missing.push(format!("{IMAGE_PREFIX}{expected}"));
            break;
        }
    }
    if !missing.is_empty() {
        return Err(Error::Schema {
            message: "missing columns".into(),
            columns: missing,
        });
    }
    if !unknown.is_empty() {
        return Err(Error::Schema {
            message: "unknown columns".into(),
            columns: unknown,
        });
    }
    Ok(Columns {
        id,
        risk,
        morph,
        image: image_cols.into_iter().map(|(_, i)| i).collect(),
        label,
        onset,
    })
}

pub fn read_cohort<R: std::io::Read>(reader: R) -> Result<Vec<Subject>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let names: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let cols = resolve_columns(&names)?;

    let mut subjects = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        // data rows start at line 2
        let row = r + 2;
        let cell = |i: usize| record.get(i).unwrap_or("").trim();
        let parse_err = |i: usize, message: String| Error::Parse {
            row,
            column: names[i].clone(),
            message,
        };
        let number = |i: usize| -> Result<f64> {
            let text = cell(i);
            text.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(i, format!("'{text}' is not a finite number")))
        };

        let mut profile = RiskFactorProfile::default();
        for (field, &i) in RiskFactor::ALL.iter().zip(&cols.risk) {
            if cell(i).is_empty() {
                continue;
            }
            let value = match field.kind() {
                FieldKind::Numeric { .. } => Value::Numeric(number(i)?),
                FieldKind::Categorical { levels } => {
                    let text = cell(i);
                    match text.parse::<u8>() {
                        Ok(c) if usize::from(c) < levels.len() => Value::Code(c),
                        _ => {
                            return Err(parse_err(
                                i,
                                format!("'{text}' is not a level code in 0..{}", levels.len()),
                            ))
                        }
                    }
                }
            };
            profile.set(*field, value);
        }

        let mut morph = [0.0; MORPHOMETRY_DIM];
        for (k, &i) in cols.morph.iter().enumerate() {
            morph[k] = number(i)?;
        }
        let image_proxy = cols.image.iter().map(|&i| number(i)).collect::<Result<Vec<_>>>()?;
        let incident_label = match cell(cols.label) {
            "case" => IncidentLabel::Case,
            "control" => IncidentLabel::Control,
            other => return Err(parse_err(cols.label, format!("'{other}' is not 'case' or 'control'"))),
        };
        let years_to_onset = if cell(cols.onset).is_empty() {
            None
        } else {
            Some(number(cols.onset)?)
        };
        if years_to_onset.is_some() != incident_label.is_case() {
            return Err(parse_err(cols.onset, "onset must be present exactly for cases".into()));
        }
        subjects.push(Subject {
            id: cell(cols.id).to_string(),
            profile,
            morphometry: MorphometryVector(morph),
            image_proxy,
            incident_label,
            years_to_onset,
        });
    }
    Ok(subjects)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::generate::{generate_cohort, CohortConfig};

    fn fixture_csv() -> String {
        let mut rows = vec![header(2).join(",")];
        for (k, (label, onset)) in [("control", ""), ("case", "7.5"), ("control", "")].iter().enumerate() {
            let mut row = vec![format!("P{k}")];
            for f in RiskFactor::ALL {
                row.push(match (f, f.kind()) {
                    (RiskFactor::Age, _) => format!("{}", 50 + k),
                    (RiskFactor::Sex, _) => format!("{}", k % 2),
                    (RiskFactor::HbA1c, _) if k == 2 => String::new(),
                    (_, FieldKind::Numeric { min, .. }) => format!("{}", min + 1.0),
                    (_, FieldKind::Categorical { .. }) => "0".into(),
                });
            }
            for m in 0..MORPHOMETRY_DIM {
                row.push(format!("{}", 0.1 + 0.01 * m as f64));
            }
            row.push(format!("{}", k as f64 * 0.5));
            row.push("-1.25".into());
            row.push(label.to_string());
            row.push(onset.to_string());
            rows.push(row.join(","));
        }
        rows.join("\n") + "\n"
    }

    #[test]
    fn parses_handcrafted_fixture() {
        let subjects = read_cohort(fixture_csv().as_bytes()).unwrap();
        assert_eq!(subjects.len(), 3);
        assert_eq!(subjects[0].id, "P0");
        assert_eq!(subjects[1].profile.get(RiskFactor::Age), Value::Numeric(51.0));
        assert_eq!(subjects[1].profile.get(RiskFactor::Sex), Value::Code(1));
        assert_eq!(subjects[1].incident_label, IncidentLabel::Case);
        assert_eq!(subjects[1].years_to_onset, Some(7.5));
        assert_eq!(subjects[0].years_to_onset, None);
        assert!(subjects[2].profile.get(RiskFactor::HbA1c).is_missing());
        assert_eq!(subjects[0].profile.get(RiskFactor::Bmi), Value::Numeric(15.0));
        assert_eq!(subjects[2].image_proxy, vec![1.0, -1.25]);
        assert!((subjects[0].morphometry.0[16] - 0.26).abs() < 1e-15);
    }

    #[test]
    fn missing_column_is_named() {
        let text = fixture_csv();
        let mut lines: Vec<Vec<String>> = text
            .lines()
            .map(|l| l.split(',').map(str::to_string).collect())
            .collect();
        let col = lines[0].iter().position(|c| c == "HbA1C").unwrap();
        for l in &mut lines {
            l.remove(col);
        }
        let body: String = lines.iter().map(|l| l.join(",") + "\n").collect();
        match read_cohort(body.as_bytes()) {
            Err(Error::Schema { columns, .. }) => assert_eq!(columns, vec!["HbA1C".to_string()]),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_column_is_named() {
        let text = fixture_csv().replacen("YearsToOnset", "YearsToOnset,Extra", 1);
        let text: String = text
            .lines()
            .enumerate()
            .map(|(i, l)| if i == 0 { l.to_string() } else { format!("{l},") } + "\n")
            .collect();
        match read_cohort(text.as_bytes()) {
            Err(Error::Schema { columns, message }) => {
                assert_eq!(message, "unknown columns");
                assert_eq!(columns, vec!["Extra".to_string()]);
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell_reports_row_and_column() {
        let text = fixture_csv().replacen("P1,51", "P1,fifty", 1);
        match read_cohort(text.as_bytes()) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "Age");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let subjects = generate_cohort(&CohortConfig {
            n_subjects: 60,
            prevalence: 0.1,
            missing_rate: 0.1,
            ..CohortConfig::default()
        })
        .unwrap();
        let mut first = Vec::new();
        write_cohort(&subjects, &mut first).unwrap();
        let loaded = read_cohort(first.as_slice()).unwrap();
        assert_eq!(loaded, subjects);
        let mut second = Vec::new();
        write_cohort(&loaded, &mut second).unwrap();
        assert_eq!(first, second);
    }
}
