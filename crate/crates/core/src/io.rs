//! File formats: forward-curve CSV ingestion, grid-function CSV/JSON, path
//! CSV and law JSON.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::algebra::{AlgebraElement, FilipovicGeometry, GridSpec};
use crate::error::{Error, Result};
use crate::process::{GaussianLaw, OuPath};

/// A raw forward curve: ascending maturities (years) and prices.
#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    pub maturities: Vec<f64>,
    pub prices: Vec<f64>,
}

impl Curve {
    /// Resample onto the grid nodes by linear interpolation, extending the
    /// first/last quote flat beyond the quoted range.
    pub fn to_grid(&self, geometry: &FilipovicGeometry) -> AlgebraElement {
        let values = geometry
            .grid()
            .nodes()
            .iter()
            .map(|&x| self.interpolate(x))
            .collect();
        AlgebraElement::grid(values)
    }

    fn interpolate(&self, x: f64) -> f64 {
        let m = &self.maturities;
        let p = &self.prices;
        if x <= m[0] {
            return p[0];
        }
        if x >= m[m.len() - 1] {
            return p[p.len() - 1];
        }
        let j = m.partition_point(|&v| v <= x) - 1;
        let theta = (x - m[j]) / (m[j + 1] - m[j]);
        (1.0 - theta) * p[j] + theta * p[j + 1]
    }
}

/// Read a curve CSV with header `maturity,price`, maturities ascending.
/// Parse failures carry the 1-based line number.
pub fn read_curve_csv(path: &Path) -> Result<Curve> {
    let text = std::fs::read_to_string(path)?;
    read_curve_csv_str(&text)
}

pub fn read_curve_csv_str(text: &str) -> Result<Curve> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    {
        let headers = reader
            .headers()
            .map_err(|e| Error::Parse {
                line: 1,
                msg: e.to_string(),
            })?
            .clone();
        let names: Vec<&str> = headers.iter().collect();
        if names != ["maturity", "price"] {
            return Err(Error::Parse {
                line: 1,
                msg: format!(
                    "expected header `maturity,price`, got `{}`",
                    names.join(",")
                ),
            });
        }
    }
    let mut maturities = Vec::new();
    let mut prices = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        if record.len() != 2 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 2 fields, got {}", record.len()),
            });
        }
        let m: f64 = record[0].parse().map_err(|e| Error::Parse {
            line,
            msg: format!("bad maturity `{}`: {e}", &record[0]),
        })?;
        let p: f64 = record[1].parse().map_err(|e| Error::Parse {
            line,
            msg: format!("bad price `{}`: {e}", &record[1]),
        })?;
        if let Some(&last) = maturities.last() {
            if m <= last {
                return Err(Error::Parse {
                    line,
                    msg: format!("maturities must be ascending ({m} after {last})"),
                });
            }
        }
        if m < 0.0 {
            return Err(Error::Parse {
                line,
                msg: format!("negative maturity {m}"),
            });
        }
        maturities.push(m);
        prices.push(p);
    }
    if maturities.is_empty() {
        return Err(Error::Parse {
            line: 2,
            msg: "curve has no rows".into(),
        });
    }
    Ok(Curve { maturities, prices })
}

/// Grid function CSV: columns `x,value`.
pub fn write_grid_csv<W: Write>(
    out: &mut W,
    geometry: &FilipovicGeometry,
    g: &AlgebraElement,
) -> Result<()> {
    writeln!(out, "x,value")?;
    for (x, v) in geometry.grid().nodes().iter().zip(g.coords()) {
        writeln!(out, "{x},{v}")?;
    }
    Ok(())
}

/// JSON form of a grid function: `{grid: {…}, values: […]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridFunctionJson {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

pub fn grid_function_json(geometry: &FilipovicGeometry, g: &AlgebraElement) -> GridFunctionJson {
    GridFunctionJson {
        grid: *geometry.grid(),
        values: g.coords().to_vec(),
    }
}

/// Path CSV: columns `t,x0,…,x{n−1}`.
pub fn write_path_csv<W: Write + ?Sized>(out: &mut W, path: &OuPath) -> Result<()> {
    let n = path.states.first().map(|s| s.coords().len()).unwrap_or(0);
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((0..n).map(|i| format!("x{i}")))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for (t, state) in path.times.iter().zip(&path.states) {
        let row: Vec<String> = std::iter::once(t.to_string())
            .chain(state.coords().iter().map(|v| v.to_string()))
            .collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Matrix elements serialize as row-major JSON arrays.
pub fn matrix_json(m: &AlgebraElement) -> serde_json::Value {
    json!(m.coords())
}

/// Law JSON: `{mean: […], cov: [[…]]}`.
pub fn law_json(law: &GaussianLaw) -> serde_json::Value {
    let n = law.dim();
    let cov: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| law.cov_entry(i, j)).collect())
        .collect();
    json!({
        "mean": law.mean().iter().copied().collect::<Vec<f64>>(),
        "cov": cov,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_csv_round_trip() {
        let text = "maturity,price\n0.0,1.0\n1.0,1.1\n3.0,1.25\n";
        let curve = read_curve_csv_str(text).unwrap();
        assert_eq!(curve.maturities, vec![0.0, 1.0, 3.0]);
        assert_eq!(curve.prices, vec![1.0, 1.1, 1.25]);
    }

    #[test]
    fn curve_interpolation_and_flat_ends() {
        let curve = Curve {
            maturities: vec![1.0, 2.0],
            prices: vec![10.0, 20.0],
        };
        let geom = FilipovicGeometry::new(GridSpec::new(4.0, 5, 1.0).unwrap());
        let g = curve.to_grid(&geom);
        // Nodes 0,1,2,3,4 → flat 10 before 1.0, linear between, flat 20 after.
        assert_eq!(g.coords(), &[10.0, 10.0, 20.0, 20.0, 20.0]);
    }

    #[test]
    fn malformed_curves_carry_line_numbers() {
        let bad_header = read_curve_csv_str("time,value\n0,1\n");
        match bad_header {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
        let bad_value = read_curve_csv_str("maturity,price\n0.0,1.0\nxx,2.0\n");
        match bad_value {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let non_ascending = read_curve_csv_str("maturity,price\n1.0,1.0\n0.5,2.0\n");
        match non_ascending {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn matrix_and_law_json_shapes() {
        let m = AlgebraElement::matrix(2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(matrix_json(&m).to_string(), "[1.0,2.0,3.0,4.0]");
        let law = GaussianLaw::zero_mean(nalgebra::DMatrix::identity(2, 2)).unwrap();
        let j = law_json(&law);
        assert_eq!(j["mean"], serde_json::json!([0.0, 0.0]));
        assert_eq!(j["cov"][0][0], 1.0);
    }

    #[test]
    fn grid_csv_format() {
        let geom = FilipovicGeometry::new(GridSpec::new(1.0, 3, 1.0).unwrap());
        let g = AlgebraElement::grid(vec![1.0, 2.0, 3.0]);
        let mut buf = Vec::new();
        write_grid_csv(&mut buf, &geom, &g).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x,value\n0,1\n0.5,2\n"));
    }
}
