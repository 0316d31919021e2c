use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CountMatrix;
use crate::error::{Error, Result};

/// On-disk layouts accepted by [`load_counts`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CountFormat {
    /// Comma-separated, header row of gene ids, first column spot ids.
    DenseCsv,
    /// Matrix Market coordinate file (spots x genes) plus `<stem>.spots.txt`
    /// and `<stem>.genes.txt` sidecars, one id per line.
    SparseMtx,
}

pub fn load_counts(path: &Path, format: CountFormat) -> Result<CountMatrix> {
    match format {
        CountFormat::DenseCsv => read_dense_csv(path),
        CountFormat::SparseMtx => {
            let (spots, genes) = sidecar_paths(path);
            read_mtx(path, &spots, &genes)
        }
    }
}

/// Sidecar id files for a Matrix Market path: `counts.mtx` maps to
/// `counts.spots.txt` and `counts.genes.txt`.
pub fn sidecar_paths(mtx: &Path) -> (PathBuf, PathBuf) {
    (mtx.with_extension("spots.txt"), mtx.with_extension("genes.txt"))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_count(path: &Path, line: usize, cell: &str) -> Result<i64> {
    cell.trim()
        .parse::<i64>()
        .map_err(|_| parse_err(path, line, format!("'{}' is not an integer", cell.trim())))
}

fn to_count(v: i64, row: usize, col: usize, spot: &str, gene: &str) -> Result<u32> {
    if v < 0 {
        return Err(Error::NegativeCount {
            row,
            col,
            spot: spot.to_string(),
            gene: gene.to_string(),
        });
    }
    u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("count {v} exceeds u32")))
}

pub fn read_dense_csv(path: &Path) -> Result<CountMatrix> {
    let reader = open(path)?;
    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, Ok(l))) if l.trim().is_empty() => continue,
            Some((_, Ok(l))) => break l,
            Some((ln, Err(e))) => return Err(parse_err(path, ln + 1, e.to_string())),
            None => return Err(parse_err(path, 1, "empty file")),
        }
    };
    let gene_ids: Vec<String> = header
        .split(',')
        .skip(1)
        .map(|s| s.trim().to_string())
        .collect();
    let p = gene_ids.len();
    let mut spot_ids = Vec::new();
    let mut values = Vec::new();
    for (ln, line) in lines {
        let line = line.map_err(|e| parse_err(path, ln + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut cells = line.split(',');
        let spot = cells.next().unwrap_or_default().trim().to_string();
        let row = spot_ids.len();
        let mut width = 0;
        for (col, cell) in cells.enumerate() {
            if col >= p {
                return Err(parse_err(
                    path,
                    ln + 1,
                    format!("row has more than {p} count columns"),
                ));
            }
            let v = parse_count(path, ln + 1, cell)?;
            values.push(to_count(v, row + 1, col + 1, &spot, &gene_ids[col])?);
            width += 1;
        }
        if width != p {
            return Err(parse_err(
                path,
                ln + 1,
                format!("expected {p} count columns, found {width}"),
            ));
        }
        spot_ids.push(spot);
    }
    CountMatrix::new(values, spot_ids, gene_ids)
}

pub fn write_dense_csv(counts: &CountMatrix, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let mut out = || -> std::io::Result<()> {
        write!(w, "spot_id")?;
        for g in counts.gene_ids() {
            write!(w, ",{g}")?;
        }
        writeln!(w)?;
        for i in 0..counts.n() {
            write!(w, "{}", counts.spot_ids()[i])?;
            for y in counts.row(i) {
                write!(w, ",{y}")?;
            }
            writeln!(w)?;
        }
        w.flush()
    };
    out().map_err(|e| Error::io(path, e))
}

fn read_id_list(path: &Path) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for (ln, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| parse_err(path, ln + 1, e.to_string()))?;
        let id = line.trim();
        if !id.is_empty() {
            ids.push(id.to_string());
        }
    }
    Ok(ids)
}

/// Reads a coordinate-format Matrix Market file with spots in rows.
pub fn read_mtx(path: &Path, spots_path: &Path, genes_path: &Path) -> Result<CountMatrix> {
    let spot_ids = read_id_list(spots_path)?;
    let gene_ids = read_id_list(genes_path)?;
    let mut lines = open(path)?.lines().enumerate();

    let (ln, banner) = match lines.next() {
        Some((ln, Ok(l))) => (ln + 1, l),
        Some((ln, Err(e))) => return Err(parse_err(path, ln + 1, e.to_string())),
        None => return Err(parse_err(path, 1, "empty file")),
    };
    let lower = banner.to_ascii_lowercase();
    let fields: Vec<&str> = lower.split_whitespace().collect();
    if fields.len() < 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(parse_err(path, ln, "missing %%MatrixMarket matrix banner"));
    }
    if fields[2] != "coordinate" || fields[3] != "integer" || fields[4] != "general" {
        return Err(parse_err(
            path,
            ln,
            "only 'coordinate integer general' matrices are supported",
        ));
    }

    let mut size: Option<(usize, usize, usize)> = None;
    let mut values: Vec<u32> = Vec::new();
    let mut seen: Vec<bool> = Vec::new();
    let mut entries = 0usize;
    for (ln, line) in lines {
        let ln = ln + 1;
        let line = line.map_err(|e| parse_err(path, ln, e.to_string()))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = t.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(parse_err(path, ln, "expected three fields"));
        }
        let Some((n, p, _)) = size else {
            let n = parse_count(path, ln, parts[0])? as usize;
            let p = parse_count(path, ln, parts[1])? as usize;
            let nnz = parse_count(path, ln, parts[2])? as usize;
            if n != spot_ids.len() || p != gene_ids.len() {
                return Err(Error::Dimension(format!(
                    "matrix is {n} x {p} but sidecars list {} spots and {} genes",
                    spot_ids.len(),
                    gene_ids.len()
                )));
            }
            size = Some((n, p, nnz));
            values = vec![0; n * p];
            seen = vec![false; n * p];
            continue;
        };
        let i = parse_count(path, ln, parts[0])?;
        let j = parse_count(path, ln, parts[1])?;
        if i < 1 || j < 1 || i as usize > n || j as usize > p {
            return Err(parse_err(
                path,
                ln,
                format!("entry ({i}, {j}) outside {n} x {p}"),
            ));
        }
        let (i, j) = (i as usize - 1, j as usize - 1);
        let v = parse_count(path, ln, parts[2])?;
        let v = to_count(v, i + 1, j + 1, &spot_ids[i], &gene_ids[j])?;
        if std::mem::replace(&mut seen[i * p + j], true) {
            return Err(parse_err(path, ln, format!("duplicate entry ({}, {})", i + 1, j + 1)));
        }
        values[i * p + j] = v;
        entries += 1;
    }
    let Some((_, _, nnz)) = size else {
        return Err(parse_err(path, 1, "missing size line"));
    };
    if entries != nnz {
        return Err(Error::Dimension(format!(
            "size line declares {nnz} entries, found {entries}"
        )));
    }
    CountMatrix::new(values, spot_ids, gene_ids)
}

/// Writes the nonzero entries as Matrix Market plus the two id sidecars.
pub fn write_mtx(counts: &CountMatrix, path: &Path) -> Result<()> {
    let (spots_path, genes_path) = sidecar_paths(path);
    for (ids, p) in [(counts.spot_ids(), &spots_path), (counts.gene_ids(), &genes_path)] {
        let mut w = create(p)?;
        ids.iter()
            .try_for_each(|id| writeln!(w, "{id}"))
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(p, e))?;
    }
    let nnz = counts.values().iter().filter(|&&v| v > 0).count();
    let mut w = create(path)?;
    let mut out = || -> std::io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate integer general")?;
        writeln!(w, "{} {} {}", counts.n(), counts.p(), nnz)?;
        for i in 0..counts.n() {
            for (j, &y) in counts.row(i).iter().enumerate() {
                if y > 0 {
                    writeln!(w, "{} {} {}", i + 1, j + 1, y)?;
                }
            }
        }
        w.flush()
    };
    out().map_err(|e| Error::io(path, e))
}

/// Reads `spot_id,x,y` rows; a leading header line is skipped when its
/// coordinate cells are not numeric.
pub fn read_coords(path: &Path) -> Result<Vec<(String, [f64; 2])>> {
    let mut out = Vec::new();
    for (ln, line) in open(path)?.lines().enumerate() {
        let ln = ln + 1;
        let line = line.map_err(|e| parse_err(path, ln, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != 3 {
            return Err(parse_err(path, ln, "expected spot_id,x,y"));
        }
        let parsed = (cells[1].parse::<f64>(), cells[2].parse::<f64>());
        match parsed {
            (Ok(x), Ok(y)) => out.push((cells[0].to_string(), [x, y])),
            _ if out.is_empty() && ln == 1 => continue,
            _ => return Err(parse_err(path, ln, "coordinates must be numbers")),
        }
    }
    Ok(out)
}

pub fn write_coords(spot_ids: &[String], coords: &[[f64; 2]], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let mut out = || -> std::io::Result<()> {
        writeln!(w, "spot_id,x,y")?;
        for (id, c) in spot_ids.iter().zip(coords) {
            writeln!(w, "{id},{},{}", c[0], c[1])?;
        }
        w.flush()
    };
    out().map_err(|e| Error::io(path, e))
}

/// Reorders coordinate records to follow `spot_ids`; every spot must appear.
pub fn align_coords(spot_ids: &[String], records: &[(String, [f64; 2])]) -> Result<Vec<[f64; 2]>> {
    let mut by_id: HashMap<&str, [f64; 2]> = HashMap::with_capacity(records.len());
    for (id, c) in records {
        if by_id.insert(id.as_str(), *c).is_some() {
            return Err(Error::DuplicateId {
                kind: "coordinate",
                id: id.clone(),
            });
        }
    }
    spot_ids
        .iter()
        .map(|id| {
            by_id.get(id.as_str()).copied().ok_or_else(|| {
                Error::Dimension(format!("spot '{id}' has no coordinates"))
            })
        })
        .collect()
}
