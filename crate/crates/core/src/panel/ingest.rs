use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Deserialize;

use super::{CellFlag, GeoPoint, PanelDataset, Quarter, Variable, RESERVED};
use crate::error::{invalid, Error, Result};

/// Column mapping for a delimited panel file.
///
/// ```toml
/// entity = "rssd"
/// quarter = "qtr"
/// delimiter = ","
///
/// [columns]
/// roa = "ROA"
/// roe = "ROE"
/// log_assets = "ln_assets"
/// latitude = "hq_lat"
/// longitude = "hq_lon"
///
/// [controls]
/// tier1_ratio = "T1"
/// ```
///
/// With `extra_as_controls = true`, every unmapped column is ingested as a
/// control under its own header name. The canonical schema written by
/// [`write_panel`] uses this.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub entity: String,
    pub quarter: String,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default)]
    pub columns: BTreeMap<String, String>,
    #[serde(default)]
    pub controls: BTreeMap<String, String>,
    #[serde(default)]
    pub extra_as_controls: bool,
}

fn default_delimiter() -> char {
    ','
}

const LATITUDE: &str = "latitude";
const LONGITUDE: &str = "longitude";

impl Schema {
    /// The layout produced by [`write_panel`].
    pub fn canonical() -> Self {
        let mut columns: BTreeMap<String, String> = RESERVED
            .iter()
            .map(|k| (k.to_string(), k.to_string()))
            .collect();
        columns.insert(LATITUDE.into(), LATITUDE.into());
        columns.insert(LONGITUDE.into(), LONGITUDE.into());
        Self {
            entity: "entity".into(),
            quarter: "quarter".into(),
            delimiter: ',',
            columns,
            controls: BTreeMap::new(),
            extra_as_controls: true,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Schema = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for k in s.columns.keys() {
            if !RESERVED.contains(&k.as_str()) && k != LATITUDE && k != LONGITUDE {
                return Err(Error::Config(format!(
                    "unknown [columns] key `{k}`; controls go under [controls]"
                )));
            }
        }
        if !s.delimiter.is_ascii() {
            return Err(Error::Config(
                "delimiter must be a single ASCII character".into(),
            ));
        }
        Ok(s)
    }

    pub fn with_delimiter(mut self, d: char) -> Self {
        self.delimiter = d;
        self
    }
}

fn parse_cell(raw: &str) -> Option<Option<f64>> {
    let s = raw.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan") {
        return Some(None);
    }
    s.parse::<f64>().ok().filter(|v| v.is_finite()).map(Some)
}

/// Read a long-format delimited file (one row per entity-quarter) into a
/// rectangular panel. Entities are sorted by key; quarters span the full
/// range between the earliest and latest label, with gaps flagged missing.
pub fn ingest_panel(path: &Path, schema: &Schema) -> Result<PanelDataset> {
    let display = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| invalid(format!("{display}: missing column `{name}`")))
    };
    let entity_col = col(&schema.entity)?;
    let quarter_col = col(&schema.quarter)?;

    // (variable name, column index); optional canonical columns may be absent.
    let mut var_cols: Vec<(String, usize)> = Vec::new();
    let mut lat_col = None;
    let mut lon_col = None;
    let mut used = BTreeSet::from([entity_col, quarter_col]);
    for (name, column) in &schema.columns {
        let idx = match headers.iter().position(|h| h == column) {
            Some(i) => i,
            None if schema.extra_as_controls => continue,
            None => return Err(invalid(format!("{display}: missing column `{column}`"))),
        };
        used.insert(idx);
        match name.as_str() {
            LATITUDE => lat_col = Some(idx),
            LONGITUDE => lon_col = Some(idx),
            _ => var_cols.push((name.clone(), idx)),
        }
    }
    for (name, column) in &schema.controls {
        let idx = col(column)?;
        used.insert(idx);
        var_cols.push((name.clone(), idx));
    }
    if schema.extra_as_controls {
        for (idx, h) in headers.iter().enumerate() {
            if !used.contains(&idx) {
                var_cols.push((h.to_string(), idx));
            }
        }
    }
    if lat_col.is_some() != lon_col.is_some() {
        return Err(invalid("latitude and longitude must be mapped together"));
    }

    struct Row {
        line: usize,
        entity: String,
        quarter: Quarter,
        values: Vec<Option<f64>>,
        coord: Option<(Option<f64>, Option<f64>)>,
    }
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let entity = rec.get(entity_col).unwrap_or("").to_string();
        if entity.is_empty() {
            return Err(invalid(format!(
                "{display}: row {line} has an empty entity key"
            )));
        }
        let quarter: Quarter = rec.get(quarter_col).unwrap_or("").parse()?;
        let cell = |idx: usize, column: &str| -> Result<Option<f64>> {
            let raw = rec.get(idx).unwrap_or("");
            parse_cell(raw).ok_or_else(|| Error::ParseCell {
                path: display.clone(),
                row: line,
                column: column.to_string(),
                value: raw.to_string(),
            })
        };
        let values = var_cols
            .iter()
            .map(|(_, idx)| cell(*idx, &headers[*idx]))
            .collect::<Result<Vec<_>>>()?;
        let coord = match (lat_col, lon_col) {
            (Some(a), Some(b)) => Some((cell(a, &headers[a])?, cell(b, &headers[b])?)),
            _ => None,
        };
        rows.push(Row {
            line,
            entity,
            quarter,
            values,
            coord,
        });
    }
    if rows.is_empty() {
        return Err(Error::Empty(format!("{display}: no data rows")));
    }

    let entities: Vec<String> = rows
        .iter()
        .map(|r| r.entity.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let first = rows.iter().map(|r| r.quarter).min().unwrap();
    let last = rows.iter().map(|r| r.quarter).max().unwrap();
    let quarters = first.range_inclusive(last);
    let (n, t) = (entities.len(), quarters.len());
    let entity_index: HashMap<&str, usize> = entities
        .iter()
        .enumerate()
        .map(|(i, e)| (e.as_str(), i))
        .collect();

    let mut mats: Vec<DMatrix<f64>> = vec![DMatrix::from_element(n, t, f64::NAN); var_cols.len()];
    let mut flags: Vec<DMatrix<CellFlag>> =
        vec![DMatrix::from_element(n, t, CellFlag::Missing); var_cols.len()];
    let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
    let mut coords: Vec<Option<GeoPoint>> = vec![None; n];
    for r in &rows {
        let i = entity_index[r.entity.as_str()];
        let j = first.until(r.quarter) as usize;
        if let Some(prev) = seen.insert((i, j), r.line) {
            return Err(Error::DuplicateRow {
                path: display,
                entity: r.entity.clone(),
                quarter: r.quarter.to_string(),
                first_row: prev,
                second_row: r.line,
            });
        }
        for (k, v) in r.values.iter().enumerate() {
            if let Some(v) = v {
                mats[k][(i, j)] = *v;
                flags[k][(i, j)] = CellFlag::Observed;
            }
        }
        if let Some((Some(lat), Some(lon))) = r.coord {
            let p = GeoPoint { lat, lon };
            match coords[i] {
                None => coords[i] = Some(p),
                Some(prev) if prev != p => {
                    return Err(invalid(format!(
                        "{display}: row {}: entity `{}` has inconsistent coordinates",
                        r.line, r.entity
                    )))
                }
                _ => {}
            }
        }
    }

    let mut panel = PanelDataset::new(entities, quarters)?;
    for ((name, _), (m, f)) in var_cols.iter().zip(mats.into_iter().zip(flags)) {
        panel = panel.with_variable(name, Variable::from_parts(m, f))?;
    }
    if lat_col.is_some() {
        let all: Option<Vec<GeoPoint>> = coords.iter().copied().collect();
        match all {
            Some(c) => panel = panel.with_coordinates(c)?,
            None if coords.iter().all(Option::is_none) => {}
            None => {
                let who = coords.iter().position(Option::is_none).unwrap();
                return Err(invalid(format!(
                    "{display}: entity `{}` has no coordinates",
                    panel.entity_ids()[who]
                )));
            }
        }
    }
    Ok(panel)
}

/// Write the canonical long-format dump read back by [`Schema::canonical`].
pub fn write_panel<W: Write>(panel: &PanelDataset, out: W, delimiter: char) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(delimiter as u8)
        .from_writer(out);
    let names: Vec<&String> = panel.variables().keys().collect();
    let mut header: Vec<String> = vec!["entity".into(), "quarter".into()];
    header.extend(names.iter().map(|s| s.to_string()));
    let coords = panel.coordinates();
    if coords.is_some() {
        header.push(LATITUDE.into());
        header.push(LONGITUDE.into());
    }
    w.write_record(&header)?;
    for (i, e) in panel.entity_ids().iter().enumerate() {
        for (j, q) in panel.quarters().iter().enumerate() {
            let mut rec = vec![e.clone(), q.to_string()];
            for name in &names {
                let v = &panel.variables()[*name];
                rec.push(if v.is_missing(i, j) {
                    String::new()
                } else {
                    v.values()[(i, j)].to_string()
                });
            }
            if let Some(c) = coords {
                rec.push(c[i].lat.to_string());
                rec.push(c[i].lon.to_string());
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Sidecar listing every missing or imputed cell.
pub fn write_missing_report<W: Write>(panel: &PanelDataset, out: W) -> Result<usize> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["entity", "quarter", "variable", "status"])?;
    let mut count = 0;
    for (name, v) in panel.variables() {
        for (i, e) in panel.entity_ids().iter().enumerate() {
            for (j, q) in panel.quarters().iter().enumerate() {
                let status = match v.flags()[(i, j)] {
                    CellFlag::Observed => continue,
                    CellFlag::Missing => "missing",
                    CellFlag::Imputed => "imputed",
                };
                w.write_record([e.as_str(), &q.to_string(), name.as_str(), status])?;
                count += 1;
            }
        }
    }
    w.flush()?;
    Ok(count)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn minimal_rectangle() {
        let f = write_tmp(
            "entity,quarter,roa,roe\n\
             b,2018Q1,1.0,10\na,2018Q1,0.5,5\na,2018Q2,0.6,6\nb,2018Q2,1.1,11\na,2018Q3,0.7,7\nb,2018Q3,1.2,12\n",
        );
        let p = ingest_panel(f.path(), &Schema::canonical()).unwrap();
        assert_eq!((p.n(), p.t()), (2, 3));
        assert_eq!(p.entity_ids(), ["a", "b"]);
        assert_eq!(p.variable("roa").unwrap().values()[(1, 2)], 1.2);
        assert_eq!(p.variable("roa").unwrap().n_missing(), 0);
    }

    #[test]
    fn gap_quarter_is_inserted_missing() {
        let f = write_tmp("entity,quarter,roa\na,2018Q1,1\na,2018Q3,3\n");
        let p = ingest_panel(f.path(), &Schema::canonical()).unwrap();
        assert_eq!(p.t(), 3);
        assert_eq!(p.quarters()[1].to_string(), "2018Q2");
        let roa = p.variable("roa").unwrap();
        assert!(roa.is_missing(0, 1));
        assert!(roa.values()[(0, 1)].is_nan());
    }

    #[test]
    fn duplicate_rows_name_both_lines() {
        let f = write_tmp("entity,quarter,roa\na,2018Q1,1\na,2018Q2,2\na,2018Q1,3\n");
        match ingest_panel(f.path(), &Schema::canonical()) {
            Err(Error::DuplicateRow {
                first_row,
                second_row,
                ..
            }) => assert_eq!((first_row, second_row), (2, 4)),
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn unparseable_cell_is_named() {
        let f = write_tmp("entity,quarter,roa\na,2018Q1,1\na,2018Q2,abc\n");
        match ingest_panel(f.path(), &Schema::canonical()) {
            Err(Error::ParseCell {
                row, column, value, ..
            }) => {
                assert_eq!((row, column.as_str(), value.as_str()), (3, "roa", "abc"))
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn custom_schema_and_delimiter() {
        let f = write_tmp(
            "bank;qtr;R;T1;lat;lon\nx;2020Q1;1.5;12;40.7;-74.0\nx;2020Q2;1.6;12.5;40.7;-74.0\n",
        );
        let schema = Schema::from_toml(
            "entity = \"bank\"\nquarter = \"qtr\"\ndelimiter = \";\"\n[columns]\nroa = \"R\"\nlatitude = \"lat\"\nlongitude = \"lon\"\n[controls]\ntier1_ratio = \"T1\"\n",
        )
        .unwrap();
        let p = ingest_panel(f.path(), &schema).unwrap();
        assert_eq!(p.control_names(), ["tier1_ratio"]);
        assert_eq!(
            p.coordinates().unwrap()[0],
            GeoPoint {
                lat: 40.7,
                lon: -74.0
            }
        );
    }

    #[test]
    fn unknown_schema_column_key_rejected() {
        assert!(
            Schema::from_toml("entity=\"e\"\nquarter=\"q\"\n[columns]\ntier1=\"x\"\n").is_err()
        );
    }

    #[test]
    fn missing_report_lists_cells() {
        let f = write_tmp("entity,quarter,roa\na,2018Q1,1\na,2018Q3,3\nb,2018Q2,\n");
        let p = ingest_panel(f.path(), &Schema::canonical()).unwrap();
        let mut buf = Vec::new();
        let n = write_missing_report(&p, &mut buf).unwrap();
        assert_eq!(n, 4);
        assert!(String::from_utf8(buf)
            .unwrap()
            .contains("a,2018Q2,roa,missing"));
    }
}
