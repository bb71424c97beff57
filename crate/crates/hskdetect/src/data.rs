//! Sample representation, CSV ingestion, covariate rescaling and
//! complete-case extraction.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A regression sample: `n` rows of `m` covariates, a response per row and
/// optional missingness indicators. `delta[j] = 0` marks `y[j]` as
/// unobserved; such responses are never read by any estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    m: usize,
    /// Row-major covariate matrix, length `n * m`.
    x: Vec<f64>,
    y: Vec<f64>,
    delta: Option<Vec<u8>>,
}

impl Dataset {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<f64>, delta: Option<Vec<u8>>) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::EmptyInput("dataset has no rows".into()));
        }
        if x.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: x.len() });
        }
        let m = x[0].len();
        if m == 0 {
            return Err(Error::EmptyInput("dataset has no covariate columns".into()));
        }
        let mut flat = Vec::with_capacity(n * m);
        for (j, row) in x.iter().enumerate() {
            if row.len() != m {
                return Err(Error::DimensionMismatch { expected: m, got: row.len() });
            }
            for &v in row {
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("covariate in row {}", j + 1)));
                }
                flat.push(v);
            }
        }
        if let Some(d) = &delta {
            if d.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: d.len() });
            }
            if let Some(j) = d.iter().position(|&v| v > 1) {
                return Err(Error::NonBinaryIndicator { row: j + 1, value: d[j].to_string() });
            }
        }
        for (j, &v) in y.iter().enumerate() {
            let observed = delta.as_ref().map_or(true, |d| d[j] == 1);
            if observed && !v.is_finite() {
                return Err(Error::NonFinite(format!("response in row {}", j + 1)));
            }
        }
        Ok(Self { n, m, x: flat, y, delta })
    }

    pub fn from_flat(x: Vec<f64>, m: usize, y: Vec<f64>, delta: Option<Vec<u8>>) -> Result<Self> {
        let n = y.len();
        if n == 0 || m == 0 {
            return Err(Error::EmptyInput("dataset has no rows or columns".into()));
        }
        if x.len() != n * m {
            return Err(Error::DimensionMismatch { expected: n * m, got: x.len() });
        }
        if let Some(d) = &delta {
            if d.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: d.len() });
            }
            if let Some(j) = d.iter().position(|&v| v > 1) {
                return Err(Error::NonBinaryIndicator { row: j + 1, value: d[j].to_string() });
            }
        }
        Ok(Self { n, m, x, y, delta })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.x[j * self.m..(j + 1) * self.m]
    }

    pub fn response(&self) -> &[f64] {
        &self.y
    }

    pub fn delta(&self) -> Option<&[u8]> {
        self.delta.as_deref()
    }

    /// True when some response is flagged unobserved.
    pub fn has_missing(&self) -> bool {
        self.delta.as_ref().map_or(false, |d| d.iter().any(|&v| v == 0))
    }

    /// Rows with `delta = 1`, order preserved; the result carries no
    /// indicator (everything observed). Errors when nothing remains.
    pub fn complete_cases(&self) -> Result<Dataset> {
        let delta = self
            .delta
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("complete_cases requires indicators".into()))?;
        let keep: Vec<usize> = (0..self.n).filter(|&j| delta[j] == 1).collect();
        if keep.is_empty() {
            return Err(Error::NoCompleteCases);
        }
        let mut x = Vec::with_capacity(keep.len() * self.m);
        let mut y = Vec::with_capacity(keep.len());
        for &j in &keep {
            x.extend_from_slice(self.row(j));
            y.push(self.y[j]);
        }
        Dataset::from_flat(x, self.m, y, None)
    }

    /// Drops the indicator column without filtering. Only valid when every
    /// row is observed.
    pub fn without_delta(&self) -> Dataset {
        Dataset { delta: None, ..self.clone() }
    }

    /// Affinely maps each covariate dimension onto `[0, 1]` using the
    /// observed min/max. Responses and indicators are unchanged.
    pub fn rescale_to_unit_cube(&self) -> Result<(Dataset, RescaleMap)> {
        let mut lo = vec![f64::INFINITY; self.m];
        let mut hi = vec![f64::NEG_INFINITY; self.m];
        for j in 0..self.n {
            for (k, &v) in self.row(j).iter().enumerate() {
                lo[k] = lo[k].min(v);
                hi[k] = hi[k].max(v);
            }
        }
        for k in 0..self.m {
            if hi[k] <= lo[k] {
                return Err(Error::ConstantCovariate { dim: k });
            }
        }
        let map = RescaleMap { lo, hi };
        let mut x = Vec::with_capacity(self.n * self.m);
        for j in 0..self.n {
            let mut pt = self.row(j).to_vec();
            map.apply_in_place(&mut pt);
            x.extend_from_slice(&pt);
        }
        let scaled = Dataset { n: self.n, m: self.m, x, y: self.y.clone(), delta: self.delta.clone() };
        Ok((scaled, map))
    }

    /// Serializes back to CSV with the given column names.
    pub fn to_csv<W: std::io::Write>(&self, schema: &CsvSchema, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = schema.covariates.iter().map(|s| s.as_str()).collect();
        header.push(&schema.response);
        if let Some(d) = &schema.indicator {
            header.push(d);
        }
        w.write_record(&header)?;
        for j in 0..self.n {
            let mut rec: Vec<String> = self.row(j).iter().map(|v| format!("{v}")).collect();
            rec.push(format!("{}", self.y[j]));
            if schema.indicator.is_some() {
                let d = self.delta.as_ref().map_or(1, |d| d[j]);
                rec.push(d.to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-dimension affine maps taking the observed covariate range to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaleMap {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl RescaleMap {
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn apply_in_place(&self, x: &mut [f64]) {
        for (k, v) in x.iter_mut().enumerate() {
            *v = (*v - self.lo[k]) / (self.hi[k] - self.lo[k]);
        }
    }

    pub fn invert_in_place(&self, x: &mut [f64]) {
        for (k, v) in x.iter_mut().enumerate() {
            *v = self.lo[k] + *v * (self.hi[k] - self.lo[k]);
        }
    }
}

/// Column selection for CSV ingestion.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub covariates: Vec<String>,
    pub response: String,
    pub indicator: Option<String>,
}

/// Reads a header-bearing comma-separated table into a [`Dataset`].
/// Rows keep file order; without an indicator column `delta` is absent.
pub fn ingest_csv<R: Read>(source: R, schema: &CsvSchema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let headers = reader.headers()?.clone();
    let col_index = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let x_idx: Vec<usize> =
        schema.covariates.iter().map(|c| col_index(c)).collect::<Result<_>>()?;
    let y_idx = col_index(&schema.response)?;
    let d_idx = schema.indicator.as_deref().map(col_index).transpose()?;

    let mut x: Vec<Vec<f64>> = Vec::new();
    let mut y: Vec<f64> = Vec::new();
    let mut delta: Vec<u8> = Vec::new();
    for (row_no, record) in reader.records().enumerate() {
        let row = row_no + 1;
        let record = record?;
        let field = |idx: usize, column: &str| -> Result<&str> {
            record.get(idx).ok_or_else(|| Error::MalformedRow {
                row,
                column: column.to_string(),
                detail: "missing field".into(),
            })
        };
        let parse = |idx: usize, column: &str| -> Result<f64> {
            let raw = field(idx, column)?;
            let v: f64 = raw.trim().parse().map_err(|_| Error::MalformedRow {
                row,
                column: column.to_string(),
                detail: format!("cannot parse {raw:?} as a real number"),
            })?;
            if !v.is_finite() {
                return Err(Error::MalformedRow {
                    row,
                    column: column.to_string(),
                    detail: "non-finite value".into(),
                });
            }
            Ok(v)
        };

        let d = match d_idx {
            Some(idx) => {
                let raw = field(idx, schema.indicator.as_deref().unwrap())?.trim();
                match raw {
                    "0" => 0u8,
                    "1" => 1u8,
                    _ => return Err(Error::NonBinaryIndicator { row, value: raw.to_string() }),
                }
            }
            None => 1,
        };
        let mut pt = Vec::with_capacity(x_idx.len());
        for (k, &idx) in x_idx.iter().enumerate() {
            pt.push(parse(idx, &schema.covariates[k])?);
        }
        // An unobserved response cell may be empty or non-numeric.
        let yv = if d == 0 {
            field(y_idx, &schema.response)?.trim().parse().unwrap_or(f64::NAN)
        } else {
            parse(y_idx, &schema.response)?
        };
        x.push(pt);
        y.push(yv);
        delta.push(d);
    }
    if y.is_empty() {
        return Err(Error::EmptyInput("CSV contains no data rows".into()));
    }
    Dataset::new(x, y, d_idx.map(|_| delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn schema(ind: Option<&str>) -> CsvSchema {
        CsvSchema {
            covariates: vec!["x".into()],
            response: "y".into(),
            indicator: ind.map(String::from),
        }
    }

    #[test]
    fn parses_simple_file() {
        let csv = "x,y\n0.1,1.0\n0.2,2.0\n0.3,3.0\n";
        let d = ingest_csv(csv.as_bytes(), &schema(None)).unwrap();
        assert_eq!(d.n(), 3);
        assert_eq!(d.dim(), 1);
        assert!(d.delta().is_none());
        assert_eq!(d.response(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn parses_indicator_column() {
        let csv = "x,y,d\n0.1,1.0,1\n0.2,,0\n0.3,3.0,1\n";
        let d = ingest_csv(csv.as_bytes(), &schema(Some("d"))).unwrap();
        assert_eq!(d.delta(), Some(&[1u8, 0, 1][..]));
    }

    #[test]
    fn malformed_response_names_row_and_column() {
        let csv = "x,y\n0.1,1.0\n0.2,abc\n0.3,3.0\n";
        let err = ingest_csv(csv.as_bytes(), &schema(None)).unwrap_err();
        match err {
            Error::MalformedRow { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "y");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn non_binary_indicator_rejected() {
        let csv = "x,y,d\n0.1,1.0,2\n";
        assert!(matches!(
            ingest_csv(csv.as_bytes(), &schema(Some("d"))),
            Err(Error::NonBinaryIndicator { row: 1, .. })
        ));
    }

    #[test]
    fn empty_file_rejected() {
        let csv = "x,y\n";
        assert!(matches!(ingest_csv(csv.as_bytes(), &schema(None)), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn rescale_maps_range_to_unit_interval() {
        let d = Dataset::new(vec![vec![-1.0], vec![0.0], vec![1.0]], vec![1.0, 2.0, 3.0], None)
            .unwrap();
        let (scaled, map) = d.rescale_to_unit_cube().unwrap();
        assert_eq!(scaled.row(0), &[0.0]);
        assert_eq!(scaled.row(1), &[0.5]);
        assert_eq!(scaled.row(2), &[1.0]);
        assert_eq!(map.lo, vec![-1.0]);
        assert_eq!(map.hi, vec![1.0]);
    }

    #[test]
    fn rescale_identity_on_unit_interval() {
        let d = Dataset::new(vec![vec![0.0], vec![1.0]], vec![1.0, 2.0], None).unwrap();
        let (scaled, map) = d.rescale_to_unit_cube().unwrap();
        assert_eq!(scaled.row(0), &[0.0]);
        assert_eq!(scaled.row(1), &[1.0]);
        assert_eq!((map.lo[0], map.hi[0]), (0.0, 1.0));
    }

    #[test]
    fn constant_covariate_rejected() {
        let d = Dataset::new(vec![vec![5.0], vec![5.0], vec![5.0]], vec![1.0, 2.0, 3.0], None)
            .unwrap();
        assert!(matches!(d.rescale_to_unit_cube(), Err(Error::ConstantCovariate { dim: 0 })));
    }

    #[test]
    fn rescale_round_trips() {
        let d = Dataset::new(
            vec![vec![-3.2, 10.0], vec![1.7, 12.5], vec![0.4, 11.1]],
            vec![1.0, 2.0, 3.0],
            None,
        )
        .unwrap();
        let (scaled, map) = d.rescale_to_unit_cube().unwrap();
        for j in 0..d.n() {
            let mut pt = scaled.row(j).to_vec();
            map.invert_in_place(&mut pt);
            for (a, b) in pt.iter().zip(d.row(j)) {
                assert_relative_eq!(a, b, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn complete_cases_filters_and_preserves_order() {
        let d = Dataset::new(
            vec![vec![0.1], vec![0.2], vec![0.3]],
            vec![1.0, f64::NAN, 3.0],
            Some(vec![1, 0, 1]),
        )
        .unwrap();
        let cc = d.complete_cases().unwrap();
        assert_eq!(cc.n(), 2);
        assert_eq!(cc.response(), &[1.0, 3.0]);
        assert!(cc.delta().is_none());
    }

    #[test]
    fn complete_cases_identity_when_all_observed() {
        let d = Dataset::new(vec![vec![0.1], vec![0.2]], vec![1.0, 2.0], Some(vec![1, 1])).unwrap();
        let cc = d.complete_cases().unwrap();
        assert_eq!(cc, d.without_delta());
    }

    #[test]
    fn complete_cases_all_missing_errors() {
        let d = Dataset::new(vec![vec![0.1], vec![0.2]], vec![1.0, 2.0], Some(vec![0, 0])).unwrap();
        assert!(matches!(d.complete_cases(), Err(Error::NoCompleteCases)));
    }

    #[test]
    fn csv_round_trip_is_fixed_point() {
        let csv = "x,y,d\n0.125,1.5,1\n0.25,0,0\n0.5,3.25,1\n";
        let sch = schema(Some("d"));
        let d1 = ingest_csv(csv.as_bytes(), &sch).unwrap();
        let mut buf = Vec::new();
        d1.to_csv(&sch, &mut buf).unwrap();
        let d2 = ingest_csv(buf.as_slice(), &sch).unwrap();
        assert_eq!(d1.row(0), d2.row(0));
        assert_eq!(d1.delta(), d2.delta());
        assert_eq!(d1.response()[0], d2.response()[0]);
        assert_eq!(d1.response()[2], d2.response()[2]);
    }
}
