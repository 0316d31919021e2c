//! Small CSV tables: header row, comma separated, floats with 17 significant
//! digits. Spot labels on disk are 1-based.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};

pub fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_table<I>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(f);
    let io = |e| anyhow::Error::new(e).context(format!("writing {}", path.display()));
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for row in rows {
        writeln!(w, "{}", row.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Header and data rows of a table written by [`write_table`].
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut lines = BufReader::new(f).lines();
    let header: Vec<String> = match lines.next() {
        Some(l) => l?.split(',').map(|s| s.trim().to_string()).collect(),
        None => bail!("{}: empty file", path.display()),
    };
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
        ensure!(
            row.len() == header.len(),
            "{}: line {}: {} fields, header has {}",
            path.display(),
            k + 2,
            row.len(),
            header.len()
        );
        rows.push(row);
    }
    Ok((header, rows))
}

fn h(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

/// `spot_id,label` with labels shifted to start at 1.
pub fn write_labels(path: &Path, ids: &[String], labels: &[usize]) -> Result<()> {
    write_table(
        path,
        &h(&["spot_id", "label"]),
        ids.iter().zip(labels).map(|(id, l)| vec![id.clone(), (l + 1).to_string()]),
    )
}

/// Reads `spot_id,label` back to 0-based labels.
pub fn read_labels(path: &Path) -> Result<(Vec<String>, Vec<usize>)> {
    let (_, rows) = read_table(path)?;
    let mut ids = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for (k, r) in rows.iter().enumerate() {
        ensure!(r.len() >= 2, "{}: line {}: expected spot_id,label", path.display(), k + 2);
        let l: usize = r[1]
            .parse()
            .with_context(|| format!("{}: line {}: bad label '{}'", path.display(), k + 2, r[1]))?;
        ensure!(l >= 1, "{}: line {}: labels start at 1", path.display(), k + 2);
        ids.push(r[0].clone());
        labels.push(l - 1);
    }
    Ok((ids, labels))
}

/// One value per gene (or spot) under column `name`.
pub fn write_values(path: &Path, id_col: &str, ids: &[String], name: &str, values: &[f64]) -> Result<()> {
    write_table(
        path,
        &h(&[id_col, name]),
        ids.iter().zip(values).map(|(id, v)| vec![id.clone(), fmt_f(*v)]),
    )
}

pub fn read_values(path: &Path) -> Result<(Vec<String>, Vec<f64>)> {
    let (_, rows) = read_table(path)?;
    let mut ids = Vec::with_capacity(rows.len());
    let mut vals = Vec::with_capacity(rows.len());
    for (k, r) in rows.iter().enumerate() {
        ensure!(r.len() >= 2, "{}: line {}: expected two columns", path.display(), k + 2);
        let v: f64 = r[1]
            .parse()
            .with_context(|| format!("{}: line {}: bad number '{}'", path.display(), k + 2, r[1]))?;
        ids.push(r[0].clone());
        vals.push(v);
    }
    Ok((ids, vals))
}

/// 0/1 flags per gene; extra columns are written after the first.
pub fn write_flags(path: &Path, ids: &[String], cols: &[(&str, &[bool])]) -> Result<()> {
    let mut header = vec!["gene_id".to_string()];
    header.extend(cols.iter().map(|(n, _)| n.to_string()));
    write_table(
        path,
        &header,
        ids.iter().enumerate().map(|(j, id)| {
            let mut row = vec![id.clone()];
            row.extend(cols.iter().map(|(_, v)| u8::from(v[j]).to_string()));
            row
        }),
    )
}

/// First flag column of a file written by [`write_flags`].
pub fn read_flags(path: &Path) -> Result<(Vec<String>, Vec<bool>)> {
    let (ids, vals) = read_values(path)?;
    let flags = vals
        .iter()
        .map(|&v| match v {
            x if x == 0.0 => Ok(false),
            x if x == 1.0 => Ok(true),
            x => bail!("{}: flag {x} is not 0 or 1", path.display()),
        })
        .collect::<Result<_>>()?;
    Ok((ids, flags))
}

/// Matrix with labelled rows and columns.
pub fn write_matrix(
    path: &Path,
    corner: &str,
    row_ids: &[String],
    col_ids: &[String],
    rows: &[Vec<f64>],
) -> Result<()> {
    let mut header = vec![corner.to_string()];
    header.extend(col_ids.iter().cloned());
    write_table(
        path,
        &header,
        row_ids.iter().zip(rows).map(|(id, r)| {
            let mut row = vec![id.clone()];
            row.extend(r.iter().map(|v| fmt_f(*v)));
            row
        }),
    )
}

/// Column ids, row ids and values of a [`write_matrix`] table.
pub fn read_matrix(path: &Path) -> Result<(Vec<String>, Vec<String>, Vec<Vec<f64>>)> {
    let (header, rows) = read_table(path)?;
    let cols = header[1..].to_vec();
    let mut ids = Vec::new();
    let mut vals = Vec::new();
    for (k, r) in rows.iter().enumerate() {
        ids.push(r[0].clone());
        vals.push(
            r[1..]
                .iter()
                .map(|c| {
                    c.parse::<f64>()
                        .with_context(|| format!("{}: line {}: bad number '{c}'", path.display(), k + 2))
                })
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok((cols, ids, vals))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let ids: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();

        let p = dir.path().join("z.csv");
        write_labels(&p, &ids, &[0, 2, 1]).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "spot_id,label\na,1\nb,3\nc,2\n");
        assert_eq!(read_labels(&p).unwrap(), (ids.clone(), vec![0, 2, 1]));

        let p = dir.path().join("v.csv");
        let v = [0.1, 1.0 / 3.0, 1e-300];
        write_values(&p, "gene_id", &ids, "ppi", &v).unwrap();
        assert_eq!(read_values(&p).unwrap().1, v.to_vec());

        let p = dir.path().join("g.csv");
        write_flags(&p, &ids, &[("gamma_hat", &[true, false, true]), ("other", &[false; 3])]).unwrap();
        assert_eq!(read_flags(&p).unwrap().1, vec![true, false, true]);

        let p = dir.path().join("m.csv");
        let m = vec![vec![1.5, 2.0, 0.25], vec![3.0, 1e-9, 7.0]];
        let rows = vec!["1".to_string(), "2".to_string()];
        write_matrix(&p, "domain", &rows, &ids, &m).unwrap();
        let (c, r, back) = read_matrix(&p).unwrap();
        assert_eq!((c, r, back), (ids, rows, m));
    }

    #[test]
    fn seventeen_digits() {
        let x = 0.1 + 0.2;
        let s = fmt_f(x);
        assert_eq!(s.parse::<f64>().unwrap(), x);
        assert_eq!(s.split('e').next().unwrap().replace(['.', '-'], "").len(), 17);
    }

    #[test]
    fn bad_rows_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("z.csv");
        std::fs::write(&p, "spot_id,label\na,1\nb\n").unwrap();
        let err = read_labels(&p).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        std::fs::write(&p, "spot_id,label\na,0\n").unwrap();
        assert!(read_labels(&p).is_err());
    }
}
