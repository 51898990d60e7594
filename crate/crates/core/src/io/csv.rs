//! CSV datasets with a header row naming the schema's features in order.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::schema::{Dataset, FeatureKind, FeatureSchema, FeatureVector};

/// Reads a CSV dataset. Numbers use '.' as the decimal separator whatever
/// the locale; categorical cells are mapped to their vocabulary position.
/// Row indices in errors count data rows from 0.
pub fn read_dataset_csv<R: Read>(reader: R, schema: &FeatureSchema) -> Result<Dataset> {
    let mut rdr = ::csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(::csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Input(format!("cannot read CSV header: {e}")))?;
    let names: Vec<&str> = schema.features().iter().map(|f| f.name.as_str()).collect();
    if header.iter().collect::<Vec<_>>() != names {
        return Err(Error::Schema(format!(
            "CSV header `{}` does not match schema features `{}`",
            header.iter().collect::<Vec<_>>().join(","),
            names.join(",")
        )));
    }

    let mut rows = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Row {
            row,
            message: e.to_string(),
        })?;
        let mut x = FeatureVector::default();
        for (cell, def) in record.iter().zip(schema.features()) {
            match &def.kind {
                FeatureKind::Numeric => {
                    let v: f64 = cell.parse().map_err(|_| Error::Row {
                        row,
                        message: format!("`{cell}` in column `{}` is not a number", def.name),
                    })?;
                    if !v.is_finite() {
                        return Err(Error::Row {
                            row,
                            message: format!("`{cell}` in column `{}` is not finite", def.name),
                        });
                    }
                    x.numeric.push(v);
                }
                FeatureKind::Categorical { vocabulary } => {
                    let id =
                        vocabulary
                            .iter()
                            .position(|w| w == cell)
                            .ok_or_else(|| Error::Row {
                                row,
                                message: format!(
                                    "unknown category `{cell}` in column `{}`",
                                    def.name
                                ),
                            })?;
                    x.categorical.push(id as u32);
                }
            }
        }
        rows.push(x);
    }
    Ok(Dataset {
        schema: schema.clone(),
        rows,
    })
}

pub fn load_dataset_csv(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset_csv(file, schema)
}

/// Writes `dataset` with a header row. Numbers use the shortest text that
/// reads back to the same value.
pub fn write_dataset_csv<W: Write>(writer: W, dataset: &Dataset) -> Result<()> {
    let mut w = ::csv::Writer::from_writer(writer);
    let to_err = |e: ::csv::Error| Error::Input(format!("cannot write CSV: {e}"));
    w.write_record(dataset.schema.features().iter().map(|f| f.name.as_str()))
        .map_err(to_err)?;
    for x in &dataset.rows {
        let (mut num, mut cat) = (x.numeric.iter(), x.categorical.iter());
        let cells: Vec<String> = dataset
            .schema
            .features()
            .iter()
            .map(|f| match &f.kind {
                FeatureKind::Numeric => num.next().map(|v| v.to_string()).unwrap_or_default(),
                FeatureKind::Categorical { vocabulary } => cat
                    .next()
                    .and_then(|&id| vocabulary.get(id as usize).cloned())
                    .unwrap_or_default(),
            })
            .collect();
        w.write_record(&cells).map_err(to_err)?;
    }
    w.flush()
        .map_err(|e| Error::Input(format!("cannot write CSV: {e}")))
}

pub fn save_dataset_csv(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset_csv(file, dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::FeatureDef;

    fn colors() -> FeatureSchema {
        FeatureSchema::new(vec![
            FeatureDef {
                name: "size".into(),
                kind: FeatureKind::Numeric,
            },
            FeatureDef {
                name: "color".into(),
                kind: FeatureKind::Categorical {
                    vocabulary: vec!["red".into(), "green".into()],
                },
            },
        ])
        .unwrap()
    }

    #[test]
    fn figure_one_input() {
        let d = read_dataset_csv(
            "f1,f2,f3,f4\n2,1,2,2".as_bytes(),
            &FeatureSchema::numeric(4),
        )
        .unwrap();
        assert_eq!(
            d.rows,
            vec![FeatureVector::numeric(vec![2.0, 1.0, 2.0, 2.0])]
        );
    }

    #[test]
    fn written_rows_read_back() {
        let d = Dataset {
            schema: colors(),
            rows: vec![
                FeatureVector::new(vec![0.1 + 0.2], vec![1]),
                FeatureVector::new(vec![-1e300], vec![0]),
            ],
        };
        let mut buf = Vec::new();
        write_dataset_csv(&mut buf, &d).unwrap();
        assert_eq!(read_dataset_csv(buf.as_slice(), &colors()).unwrap(), d);
    }

    #[test]
    fn empty_data_section() {
        let d = read_dataset_csv("f1,f2\n".as_bytes(), &FeatureSchema::numeric(2)).unwrap();
        assert!(d.is_empty());
    }

    #[test]
    fn categories_map_to_vocabulary_position() {
        let d =
            read_dataset_csv("size,color\n1.5,red\n-2e1,green\n".as_bytes(), &colors()).unwrap();
        assert_eq!(d.rows[0], FeatureVector::new(vec![1.5], vec![0]));
        assert_eq!(d.rows[1], FeatureVector::new(vec![-20.0], vec![1]));
    }

    #[test]
    fn row_errors_name_the_row() {
        let err =
            read_dataset_csv("size,color\n1,red\n2,blue\n".as_bytes(), &colors()).unwrap_err();
        assert!(matches!(err, Error::Row { row: 1, .. }), "{err}");
        let err = read_dataset_csv("size,color\n1,5,red\n".as_bytes(), &colors()).unwrap_err();
        assert!(matches!(err, Error::Row { row: 0, .. }), "{err}");
        let err = read_dataset_csv("size,color\nx,red\n".as_bytes(), &colors()).unwrap_err();
        assert!(matches!(err, Error::Row { row: 0, .. }), "{err}");
        let err = read_dataset_csv("size,color\nNaN,red\n".as_bytes(), &colors()).unwrap_err();
        assert!(matches!(err, Error::Row { row: 0, .. }), "{err}");
        let err = read_dataset_csv("color,size\n".as_bytes(), &colors()).unwrap_err();
        assert!(matches!(err, Error::Schema(_)), "{err}");
    }
}
