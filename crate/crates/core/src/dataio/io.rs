use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::numkit::Matrix;

use super::types::{index_of, Edge, EmbeddingMatrix, ExpressionMatrix, LabeledEdges};

fn parse_error(path: &Path, line: u64, field: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: line as usize,
        column: field + 1,
        message: message.into(),
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => parse_error(path, line, 0, format!("{other:?}")),
    }
}

/// Records of a delimited file with their 1-based line numbers.
fn read_records(path: &Path, delimiter: u8) -> Result<Vec<(u64, csv::StringRecord)>> {
    let file = File::open(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(delimiter)
        .from_reader(file);
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        out.push((line, rec));
    }
    Ok(out)
}

fn parse_real(path: &Path, line: u64, field: usize, text: &str, what: &str) -> Result<f64> {
    let v: f64 = text
        .trim()
        .parse()
        .map_err(|_| parse_error(path, line, field, format!("{what}: `{text}` is not a number")))?;
    if !v.is_finite() {
        return Err(parse_error(path, line, field, format!("{what}: `{text}` is not finite")));
    }
    Ok(v)
}

fn parse_flag(path: &Path, line: u64, field: usize, text: &str) -> Result<bool> {
    match text.trim() {
        "1" | "true" | "TRUE" | "True" => Ok(true),
        "0" | "false" | "FALSE" | "False" => Ok(false),
        other => Err(parse_error(path, line, field, format!("is_tf: `{other}` is not 0/1"))),
    }
}

/// Reads a `gene,is_tf,<cell ids...>` CSV, one gene per row.
pub fn load_expression(path: impl AsRef<Path>) -> Result<ExpressionMatrix> {
    let path = path.as_ref();
    let records = read_records(path, b',')?;
    let Some(((hline, header), rows)) = records.split_first() else {
        return Err(Error::EmptyFile(path.to_path_buf()));
    };
    if header.len() < 3 || header[0].trim() != "gene" || header[1].trim() != "is_tf" {
        return Err(parse_error(
            path,
            *hline,
            0,
            "header must be `gene,is_tf,<cell ids...>`",
        ));
    }
    let cells: Vec<String> = header.iter().skip(2).map(|c| c.trim().to_string()).collect();
    let n = cells.len();
    if rows.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    let mut genes = Vec::with_capacity(rows.len());
    let mut is_tf = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len() * n);
    for (line, rec) in rows {
        if rec.len() != n + 2 {
            return Err(parse_error(
                path,
                *line,
                rec.len().min(n + 2),
                format!("expected {} fields, found {}", n + 2, rec.len()),
            ));
        }
        let gene = rec[0].trim().to_string();
        if gene.is_empty() {
            return Err(parse_error(path, *line, 0, "empty gene symbol"));
        }
        genes.push(gene);
        is_tf.push(parse_flag(path, *line, 1, &rec[1])?);
        for (j, text) in rec.iter().skip(2).enumerate() {
            values.push(parse_real(path, *line, j + 2, text, &format!("cell {}", cells[j]))?);
        }
    }
    let p = genes.len();
    ExpressionMatrix::new(genes, is_tf, cells, Matrix::from_vec(p, n, values)?)
}

pub fn write_expression(x: &ExpressionMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "gene,is_tf")?;
    for c in x.cells() {
        write!(w, ",{c}")?;
    }
    writeln!(w)?;
    for (i, g) in x.genes().iter().enumerate() {
        write!(w, "{g},{}", u8::from(x.is_tf()[i]))?;
        for v in x.values().row(i) {
            write!(w, ",{v:?}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a headerless `tf<TAB>tg<TAB>label` file against a gene list.
pub fn load_labels(path: impl AsRef<Path>, genes: &[String]) -> Result<LabeledEdges> {
    let path = path.as_ref();
    let index = index_of(genes);
    let mut edges = Vec::new();
    for (line, rec) in read_records(path, b'\t')? {
        if rec.len() != 3 {
            return Err(parse_error(
                path,
                line,
                rec.len().min(3),
                format!("expected 3 tab-separated fields, found {}", rec.len()),
            ));
        }
        let lookup = |s: &str| {
            index
                .get(s.trim())
                .copied()
                .ok_or_else(|| Error::UnknownGene(s.trim().to_string()))
        };
        let tf = lookup(&rec[0])?;
        let tg = lookup(&rec[1])?;
        let label = match rec[2].trim() {
            "1" => true,
            "0" => false,
            other => return Err(Error::InvalidLabel(other.to_string())),
        };
        edges.push(Edge::new(tf, tg, label));
    }
    LabeledEdges::new(genes.to_vec(), edges)
}

pub fn write_labels(edges: &LabeledEdges, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let g = edges.genes();
    for e in edges.edges() {
        writeln!(w, "{}\t{}\t{}", g[e.tf], g[e.tg], u8::from(e.label))?;
    }
    w.flush()?;
    Ok(())
}

/// Fails with [`Error::InvalidLabel`] if an edge's regulator is not
/// flagged as a TF.
pub fn check_tf_flags(edges: &LabeledEdges, is_tf: &[bool]) -> Result<()> {
    for e in edges.edges() {
        if !is_tf.get(e.tf).copied().unwrap_or(false) {
            return Err(Error::InvalidLabel(format!(
                "regulator {} is not flagged as a TF",
                edges.genes()[e.tf]
            )));
        }
    }
    Ok(())
}

/// Reads a `gene,v1,...,vd` CSV and aligns its rows to `genes`. Extra
/// genes in the file are ignored.
pub fn load_embeddings(path: impl AsRef<Path>, genes: &[String], d_expected: Option<usize>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let records = read_records(path, b',')?;
    let Some(((hline, header), rows)) = records.split_first() else {
        return Err(Error::EmptyFile(path.to_path_buf()));
    };
    if header.len() < 2 || header[0].trim() != "gene" {
        return Err(parse_error(path, *hline, 0, "header must be `gene,v1,...,vd`"));
    }
    let d = header.len() - 1;
    if let Some(want) = d_expected {
        if want != d {
            return Err(Error::DimensionMismatch(format!(
                "embedding dimension {d}, expected {want}"
            )));
        }
    }
    let mut names = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len() * d);
    for (line, rec) in rows {
        if rec.len() != d + 1 {
            return Err(Error::DimensionMismatch(format!(
                "{}:{line}: {} values, expected {d}",
                path.display(),
                rec.len().saturating_sub(1)
            )));
        }
        names.push(rec[0].trim().to_string());
        for (j, text) in rec.iter().skip(1).enumerate() {
            values.push(parse_real(path, *line, j + 1, text, "embedding value")?);
        }
    }
    let n = names.len();
    let file = EmbeddingMatrix::new(names, Matrix::from_vec(n, d, values)?)?;
    let aligned = file.aligned_to(genes)?;
    let extra = n - genes.len();
    if extra > 0 {
        warn!("{extra} embedding row(s) for genes outside the model ignored");
    }
    EmbeddingMatrix::new(genes.to_vec(), aligned)
}

pub fn write_embeddings(h: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "gene")?;
    for j in 1..=h.dim() {
        write!(w, ",v{j}")?;
    }
    writeln!(w)?;
    for (i, g) in h.genes().iter().enumerate() {
        write!(w, "{g}")?;
        for v in h.values().row(i) {
            write!(w, ",{v:?}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Square gene x gene matrix as CSV with a `gene,<genes...>` header.
pub fn write_matrix(m: &Matrix, genes: &[String], path: impl AsRef<Path>) -> Result<()> {
    if m.shape() != (genes.len(), genes.len()) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} matrix for {} genes",
            m.rows(),
            m.cols(),
            genes.len()
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "gene")?;
    for g in genes {
        write!(w, ",{g}")?;
    }
    writeln!(w)?;
    for (i, g) in genes.iter().enumerate() {
        write!(w, "{g}")?;
        for v in m.row(i) {
            write!(w, ",{v:?}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a matrix written by [`write_matrix`], returning it with its genes.
pub fn load_matrix(path: impl AsRef<Path>) -> Result<(Vec<String>, Matrix)> {
    let path = path.as_ref();
    let records = read_records(path, b',')?;
    let Some(((hline, header), rows)) = records.split_first() else {
        return Err(Error::EmptyFile(path.to_path_buf()));
    };
    if header.is_empty() || header[0].trim() != "gene" {
        return Err(parse_error(path, *hline, 0, "header must be `gene,<genes...>`"));
    }
    let genes: Vec<String> = header.iter().skip(1).map(|g| g.trim().to_string()).collect();
    let p = genes.len();
    if rows.len() != p {
        return Err(Error::DimensionMismatch(format!("{} rows for {p} genes", rows.len())));
    }
    let mut values = Vec::with_capacity(p * p);
    for ((line, rec), g) in rows.iter().zip(&genes) {
        if rec.len() != p + 1 {
            return Err(parse_error(path, *line, rec.len().min(p + 1), format!("expected {} fields", p + 1)));
        }
        if rec[0].trim() != g {
            return Err(parse_error(path, *line, 0, format!("row gene `{}` != column gene `{g}`", &rec[0])));
        }
        for (j, text) in rec.iter().skip(1).enumerate() {
            let v: f64 = text
                .trim()
                .parse()
                .map_err(|_| parse_error(path, *line, j + 1, format!("`{text}` is not a number")))?;
            values.push(v);
        }
    }
    Ok((genes, Matrix::from_vec(p, p, values)?))
}
