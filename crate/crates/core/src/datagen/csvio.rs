use std::collections::BTreeSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::domain::{ObservedDataset, RowValues, SuperMask, SuperfeatureSchema};
use crate::error::{AfapeError, Result};

/// Reads a CSV with a header row. Cells equal to `sentinel` are unobserved.
///
/// Feature columns are looked up by the schema's column names. Labels are
/// taken verbatim when every label is a non-negative integer, otherwise the
/// sorted distinct strings are numbered from 0.
pub fn load_csv(
    path: impl AsRef<Path>,
    schema: Arc<SuperfeatureSchema>,
    label_column: &str,
    sentinel: &str,
) -> Result<ObservedDataset> {
    read_csv(File::open(path)?, schema, label_column, sentinel)
}

pub fn read_csv<R: Read>(
    input: R,
    schema: Arc<SuperfeatureSchema>,
    label_column: &str,
    sentinel: &str,
) -> Result<ObservedDataset> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| AfapeError::Data(format!("column {name:?} not found in header")))
    };
    let label_pos = find(label_column)?;
    let positions: Vec<usize> = schema.column_names().iter().map(|c| find(c)).collect::<Result<_>>()?;

    let mut cells: Vec<RowValues> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec?;
        let mut row = Vec::with_capacity(positions.len());
        for (c, &pos) in positions.iter().enumerate() {
            let cell = rec.get(pos).unwrap_or("");
            if cell == sentinel {
                row.push(None);
            } else {
                let v: f64 = cell.parse().map_err(|_| AfapeError::Parse {
                    row: r,
                    column: schema.column_names()[c].clone(),
                    value: cell.to_string(),
                })?;
                if !v.is_finite() {
                    return Err(AfapeError::Parse {
                        row: r,
                        column: schema.column_names()[c].clone(),
                        value: cell.to_string(),
                    });
                }
                row.push(Some(v));
            }
        }
        cells.push(row);
        raw_labels.push(rec.get(label_pos).unwrap_or("").to_string());
    }
    let labels = encode_labels(&raw_labels)?;
    ObservedDataset::from_cells(schema, cells, labels)
}

fn encode_labels(raw: &[String]) -> Result<Vec<u32>> {
    if let Ok(ints) = raw.iter().map(|s| s.parse::<u32>()).collect::<Result<Vec<_>, _>>() {
        return Ok(ints);
    }
    let distinct: BTreeSet<&str> = raw.iter().map(String::as_str).collect();
    if distinct.contains("") {
        return Err(AfapeError::Data("empty label cell".into()));
    }
    let order: Vec<&str> = distinct.into_iter().collect();
    Ok(raw
        .iter()
        .map(|s| order.binary_search(&s.as_str()).expect("present") as u32)
        .collect())
}

/// Writes feature columns (empty when unobserved), `label`, and one
/// `mask_<superfeature>` column per superfeature.
pub fn write_dataset_csv<W: Write>(data: &ObservedDataset, out: W) -> Result<()> {
    let schema = data.schema();
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = schema.column_names().to_vec();
    header.push("label".into());
    header.extend(schema.superfeatures().iter().map(|s| format!("mask_{}", s.name)));
    w.write_record(&header)?;
    for r in 0..data.n_rows() {
        let mut rec: Vec<String> = (0..schema.n_raw())
            .map(|c| data.value(r, c).map_or_else(String::new, |v| v.to_string()))
            .collect();
        rec.push(data.label(r).to_string());
        let m = data.mask(r);
        rec.extend((0..schema.n_super()).map(|j| if m.contains(j) { "1" } else { "0" }.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the format produced by [`write_dataset_csv`].
pub fn read_dataset_csv<R: Read>(input: R, schema: Arc<SuperfeatureSchema>) -> Result<ObservedDataset> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| AfapeError::Data(format!("column {name:?} not found in header")))
    };
    let cols: Vec<usize> = schema.column_names().iter().map(|c| find(c)).collect::<Result<_>>()?;
    let label_pos = find("label")?;
    let mask_pos: Vec<usize> = schema
        .superfeatures()
        .iter()
        .map(|s| find(&format!("mask_{}", s.name)))
        .collect::<Result<_>>()?;
    let (mut values, mut masks, mut labels) = (Vec::new(), Vec::new(), Vec::new());
    for (r, rec) in reader.records().enumerate() {
        let rec = rec?;
        let mut m = SuperMask::EMPTY;
        for (j, &p) in mask_pos.iter().enumerate() {
            match rec.get(p) {
                Some("1") => m.insert(j),
                Some("0") => {}
                other => {
                    return Err(AfapeError::Parse {
                        row: r,
                        column: format!("mask_{}", schema.superfeature(j).name),
                        value: other.unwrap_or("").to_string(),
                    })
                }
            }
        }
        for (c, &p) in cols.iter().enumerate() {
            let cell = rec.get(p).unwrap_or("");
            if m.contains(schema.owner(c)) {
                values.push(cell.parse::<f64>().map_err(|_| AfapeError::Parse {
                    row: r,
                    column: schema.column_names()[c].clone(),
                    value: cell.to_string(),
                })?);
            } else {
                values.push(0.0);
            }
        }
        let label = rec.get(label_pos).unwrap_or("");
        labels.push(label.parse::<u32>().map_err(|_| AfapeError::Parse {
            row: r,
            column: "label".into(),
            value: label.to_string(),
        })?);
        masks.push(m);
    }
    ObservedDataset::from_parts(schema, values, masks, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Arc<SuperfeatureSchema> {
        Arc::new(SuperfeatureSchema::synthetic_default())
    }

    #[test]
    fn no_sentinels_means_full_mask() {
        let text = "X0,X1,X2,X3,y\n1,2,3,4,0\n5,6,7,8,1\n0,0,0,0,1\n";
        let d = read_csv(text.as_bytes(), schema(), "y", "?").unwrap();
        assert_eq!(d.n_rows(), 3);
        assert_eq!(d.complete_fraction(), 1.0);
        assert_eq!(d.labels(), &[0, 1, 1]);
    }

    #[test]
    fn whole_superfeature_missing_clears_its_bit() {
        let text = "y,X0,X1,X2,X3\nyes,1,2,?,?\nno,1,?,3,4\n";
        let d = read_csv(text.as_bytes(), schema(), "y", "?").unwrap();
        assert!(!d.mask(0).contains(2));
        assert!(d.mask(0).contains(1));
        assert!(!d.mask(1).contains(1));
        assert_eq!(d.value(1, 2), Some(3.0));
        assert_eq!(d.labels(), &[1, 0]);
    }

    #[test]
    fn partial_superfeature_is_an_error() {
        let text = "X0,X1,X2,X3,y\n1,2,?,4,0\n";
        match read_csv(text.as_bytes(), schema(), "y", "?") {
            Err(AfapeError::PartialObservation { row, superfeature }) => {
                assert_eq!(row, 0);
                assert_eq!(superfeature, "superX2");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_number_is_an_error() {
        let text = "X0,X1,X2,X3,y\n1,abc,3,4,0\n";
        assert!(matches!(
            read_csv(text.as_bytes(), schema(), "y", "?"),
            Err(AfapeError::Parse { row: 0, .. })
        ));
    }

    #[test]
    fn dump_round_trip() {
        let text = "X0,X1,X2,X3,y\n1.5,?,3,4,0\n-1,2,?,?,1\n";
        let d = read_csv(text.as_bytes(), schema(), "y", "?").unwrap();
        let mut buf = Vec::new();
        write_dataset_csv(&d, &mut buf).unwrap();
        let head = String::from_utf8(buf.clone()).unwrap();
        assert!(head.starts_with("X0,X1,X2,X3,label,mask_superX0,mask_superX1,mask_superX2\n"));
        let back = read_dataset_csv(buf.as_slice(), schema()).unwrap();
        assert_eq!(back.masks(), d.masks());
        for r in 0..2 {
            assert_eq!(back.row(r), d.row(r));
        }
    }
}
