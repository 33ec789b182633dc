//! CSV ingestion and serialization for `firms.csv` / `edges.csv`.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use csv::{ReaderBuilder, StringRecord, Trim};

use super::{Firm, Line, NetworkBuilder, NetworkError, ProductionNetwork};
use crate::output::write_atomic;
use crate::scalar::Scalar;

pub const FIRMS_HEADER: [&str; 5] = ["id", "sector", "employees", "co2", "ets_member"];
pub const EDGES_HEADER: [&str; 3] = ["supplier_id", "buyer_id", "weight"];

/// Opens a CSV file whose header must match `expected` exactly.
pub(crate) fn open_csv(path: &Path, expected: &[&str]) -> Result<Vec<(usize, StringRecord)>, NetworkError> {
    let display = path.display().to_string();
    if !path.exists() {
        return Err(NetworkError::MissingFile(display));
    }
    let file = File::open(path).map_err(|source| NetworkError::Io {
        path: display.clone(),
        source,
    })?;
    read_csv(file, &display, expected)
}

/// Parses CSV text whose header must match `expected` exactly, returning
/// `(line, record)` pairs.
pub(crate) fn read_csv<R: Read>(
    source: R,
    display: &str,
    expected: &[&str],
) -> Result<Vec<(usize, StringRecord)>, NetworkError> {
    let mut reader = ReaderBuilder::new()
        .has_headers(true)
        .trim(Trim::All)
        .from_reader(source);
    let schema = |line: Option<usize>, message: String| NetworkError::Schema {
        file: display.to_string(),
        line: Line(line),
        message,
    };
    let header = reader
        .headers()
        .map_err(|e| schema(Some(1), e.to_string()))?
        .clone();
    if header.is_empty() {
        // zero-byte file: treated as header-only
        return Ok(Vec::new());
    }
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        return Err(schema(
            Some(1),
            format!("expected header `{}`, found `{}`", expected.join(","), got.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize);
            schema(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        rows.push((line, record));
    }
    Ok(rows)
}

fn parse_firm(record: &StringRecord, line: usize, file: &str) -> Result<Firm, NetworkError> {
    let err = |message: String| NetworkError::Schema {
        file: file.to_string(),
        line: Line(Some(line)),
        message,
    };
    let id = &record[0];
    if id.is_empty() {
        return Err(err("empty firm id".into()));
    }
    let sector = &record[1];
    if sector.is_empty() {
        return Err(err(format!("empty sector for firm {id:?}")));
    }
    let employees = match &record[2] {
        "" => None,
        s => Some(
            s.parse::<u64>()
                .map_err(|_| err(format!("employees must be a non-negative integer, got {s:?}")))?,
        ),
    };
    let co2 = match &record[3] {
        "" => None,
        s => {
            let v: f64 = s.parse().map_err(|_| err(format!("co2 must be a number, got {s:?}")))?;
            if !(v >= 0.0) || !v.is_finite() {
                return Err(err(format!("co2 must be finite and non-negative, got {s}")));
            }
            Some(v)
        }
    };
    let ets_member = match &record[4] {
        "0" => false,
        "1" => true,
        s => return Err(err(format!("ets_member must be 0 or 1, got {s:?}"))),
    };
    if ets_member && co2.is_none() {
        return Err(err(format!("ETS member {id:?} has no co2 value")));
    }
    Ok(Firm {
        id: id.to_string(),
        sector: super::Sector::new(sector),
        employees,
        co2,
        ets_member,
    })
}

/// Loads and validates a network from a firm file and an edge file.
pub fn load_network<T: Scalar>(
    firm_file: impl AsRef<Path>,
    edge_file: impl AsRef<Path>,
) -> Result<ProductionNetwork<T>, NetworkError> {
    let firm_file = firm_file.as_ref();
    let edge_file = edge_file.as_ref();
    let firm_rows = open_csv(firm_file, &FIRMS_HEADER)?;
    let edge_rows = open_csv(edge_file, &EDGES_HEADER)?;
    build_from_rows(
        firm_rows,
        &firm_file.display().to_string(),
        edge_rows,
        &edge_file.display().to_string(),
    )
}

/// Parses a network from in-memory `firms.csv` and `edges.csv` contents.
pub fn parse_network<T: Scalar>(firms_csv: &str, edges_csv: &str) -> Result<ProductionNetwork<T>, NetworkError> {
    build_from_rows(
        read_csv(firms_csv.as_bytes(), "firms.csv", &FIRMS_HEADER)?,
        "firms.csv",
        read_csv(edges_csv.as_bytes(), "edges.csv", &EDGES_HEADER)?,
        "edges.csv",
    )
}

fn build_from_rows<T: Scalar>(
    firm_rows: Vec<(usize, StringRecord)>,
    firms_name: &str,
    edge_rows: Vec<(usize, StringRecord)>,
    edges_name: &str,
) -> Result<ProductionNetwork<T>, NetworkError> {
    let mut builder = NetworkBuilder::<T>::new();
    for (line, record) in firm_rows {
        let firm = parse_firm(&record, line, firms_name)?;
        builder.add_firm_at(firm, Line(Some(line)))?;
    }
    for (line, record) in edge_rows {
        let raw = &record[2];
        let weight: f64 = raw.parse().map_err(|_| NetworkError::Schema {
            file: edges_name.to_string(),
            line: Line(Some(line)),
            message: format!("weight must be a decimal number, got {raw:?}"),
        })?;
        if !weight.is_finite() {
            return Err(NetworkError::Schema {
                file: edges_name.to_string(),
                line: Line(Some(line)),
                message: format!("weight must be finite, got {raw:?}"),
            });
        }
        builder.add_edge_at(&record[0], &record[1], T::of(weight), Line(Some(line)))?;
    }
    if builder.merged_parallel() > 0 {
        log::warn!(
            "{}: {} parallel edge rows were summed",
            edges_name,
            builder.merged_parallel()
        );
    }
    Ok(builder.build())
}

/// Loads `firms.csv` and `edges.csv` from a directory.
pub fn load_network_dir<T: Scalar>(dir: impl AsRef<Path>) -> Result<ProductionNetwork<T>, NetworkError> {
    let dir = dir.as_ref();
    load_network(dir.join("firms.csv"), dir.join("edges.csv"))
}

fn opt_display<V: std::fmt::Display>(v: Option<V>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_firms_csv<T: Scalar>(net: &ProductionNetwork<T>, path: impl AsRef<Path>) -> std::io::Result<()> {
    let mut out = String::with_capacity(32 * net.len());
    out.push_str(&FIRMS_HEADER.join(","));
    out.push('\n');
    for f in net.firms() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            f.id,
            f.sector,
            opt_display(f.employees),
            opt_display(f.co2),
            u8::from(f.ets_member)
        ));
    }
    write_atomic(path.as_ref(), out.as_bytes())
}

pub fn write_edges_csv<T: Scalar>(net: &ProductionNetwork<T>, path: impl AsRef<Path>) -> std::io::Result<()> {
    let mut out = String::with_capacity(24 * net.edge_count());
    out.push_str(&EDGES_HEADER.join(","));
    out.push('\n');
    for e in net.edges() {
        out.push_str(&format!(
            "{},{},{}\n",
            net.firm(e.supplier).id,
            net.firm(e.buyer).id,
            e.weight
        ));
    }
    write_atomic(path.as_ref(), out.as_bytes())
}

/// Writes `firms.csv` and `edges.csv` into `dir`, creating it if needed.
pub fn write_network<T: Scalar>(net: &ProductionNetwork<T>, dir: impl AsRef<Path>) -> std::io::Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_firms_csv(net, dir.join("firms.csv"))?;
    write_edges_csv(net, dir.join("edges.csv"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_single_firm_with_empty_edges() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "firms.csv", "id,sector,employees,co2,ets_member\nA,C10,4,,0\n");
        let e = write(dir.path(), "edges.csv", "supplier_id,buyer_id,weight\n");
        let net: ProductionNetwork<f64> = load_network(&f, &e).unwrap();
        assert_eq!(net.len(), 1);
        assert_eq!(net.edge_count(), 0);
        assert_eq!(net.firm(0).employees, Some(4));
        assert_eq!(net.firm(0).co2, None);
    }

    #[test]
    fn dangling_edge_names_id_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "firms.csv", "id,sector,employees,co2,ets_member\nA,C,1,,0\nB,C,1,,0\n");
        let e = write(dir.path(), "edges.csv", "supplier_id,buyer_id,weight\nA,B,1\nA,X,2\n");
        let err = load_network::<f64>(&f, &e).unwrap_err();
        match err {
            NetworkError::DanglingEdge { id, line } => {
                assert_eq!(id, "X");
                assert_eq!(line, Line(Some(3)));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn schema_errors_carry_line() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "edges.csv", "supplier_id,buyer_id,weight\n");
        let cases = [
            "id,sector,employees,co2\nA,C,1,2\n",
            "id,sector,employees,co2,ets_member\nA,C,x,,0\n",
            "id,sector,employees,co2,ets_member\nA,C,1,,2\n",
            "id,sector,employees,co2,ets_member\nA,C,1,,1\n",
            "id,sector,employees,co2,ets_member\nA,C,1,-3,0\n",
            "id,sector,employees,co2,ets_member\nA,C,1\n",
        ];
        for body in cases {
            let f = write(dir.path(), "firms.csv", body);
            let err = load_network::<f64>(&f, &e).unwrap_err();
            assert!(matches!(err, NetworkError::Schema { .. }), "{body:?} gave {err}");
        }
    }

    #[test]
    fn missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_network_dir::<f64>(dir.path()).unwrap_err();
        assert!(matches!(err, NetworkError::MissingFile(_)));
    }
}
