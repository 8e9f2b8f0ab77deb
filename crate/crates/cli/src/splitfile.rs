//! Split files: `tf<TAB>tg<TAB>label<TAB>set` with a header row, one edge
//! per line, `set` one of the [`Partition`] names.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use grnsem::dataio::{Edge, LabeledEdges};
use grnsem::evalbench::BenchmarkSplit;
use grnsem::{Error, Result};

const HEADER: &str = "tf\ttg\tlabel\tset";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Partition {
    Train,
    SeenTest,
    UnseenTest,
    Dropped,
}

impl Partition {
    pub const ALL: [Partition; 4] = [
        Partition::Train,
        Partition::SeenTest,
        Partition::UnseenTest,
        Partition::Dropped,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::SeenTest => "seen_test",
            Partition::UnseenTest => "unseen_test",
            Partition::Dropped => "dropped",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == s)
    }

    pub fn of(self, split: &BenchmarkSplit) -> &LabeledEdges {
        match self {
            Partition::Train => &split.train,
            Partition::SeenTest => &split.seen_test,
            Partition::UnseenTest => &split.unseen_test,
            Partition::Dropped => &split.dropped,
        }
    }
}

pub fn write_split(split: &BenchmarkSplit, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{HEADER}")?;
    for part in Partition::ALL {
        let edges = part.of(split);
        let g = edges.genes();
        for e in edges.edges() {
            writeln!(w, "{}\t{}\t{}\t{}", g[e.tf], g[e.tg], u8::from(e.label), part.as_str())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads only the requested partitions; rows of other partitions are
/// skipped before their gene names or labels are parsed.
pub fn read_split(path: &Path, genes: &[String], wanted: &[Partition]) -> Result<Vec<LabeledEdges>> {
    let index: HashMap<&str, usize> = genes.iter().enumerate().map(|(i, g)| (g.as_str(), i)).collect();
    let parse = |line: usize, column: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message,
    };
    let mut out: Vec<Vec<Edge>> = vec![vec![]; wanted.len()];
    let mut lines = BufReader::new(File::open(path)?).lines();
    match lines.next().transpose()? {
        Some(h) if h.trim_end() == HEADER => {}
        _ => return Err(parse(1, 0, format!("header must be `{}`", HEADER.replace('\t', "<TAB>")))),
    }
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(parse(lineno, fields.len().min(4), format!("expected 4 fields, found {}", fields.len())));
        }
        let part = Partition::parse(fields[3].trim())
            .ok_or_else(|| parse(lineno, 3, format!("unknown set `{}`", fields[3])))?;
        let Some(slot) = wanted.iter().position(|w| *w == part) else {
            continue;
        };
        let gene = |s: &str| index.get(s.trim()).copied().ok_or_else(|| Error::UnknownGene(s.trim().into()));
        let label = match fields[2].trim() {
            "1" => true,
            "0" => false,
            other => return Err(Error::InvalidLabel(other.into())),
        };
        out[slot].push(Edge::new(gene(fields[0])?, gene(fields[1])?, label));
    }
    out.into_iter().map(|edges| LabeledEdges::new(genes.to_vec(), edges)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use grnsem::evalbench::make_split;

    fn labels() -> LabeledEdges {
        let genes: Vec<String> = (0..16).map(|i| format!("g{i}")).collect();
        let mut edges = vec![];
        for i in 0..6 {
            for k in 6..16 {
                edges.push(Edge::new(i, k, (i + k) % 3 == 0));
            }
        }
        LabeledEdges::new(genes, edges).unwrap()
    }

    #[test]
    fn round_trip_by_partition() {
        let l = labels();
        let s = make_split(&l, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("split.tsv");
        write_split(&s, &path).unwrap();
        let back = read_split(&path, l.genes(), &Partition::ALL).unwrap();
        for (part, edges) in Partition::ALL.into_iter().zip(&back) {
            assert_eq!(edges, part.of(&s), "{}", part.as_str());
        }
        let train = read_split(&path, l.genes(), &[Partition::Train]).unwrap();
        assert_eq!(train.len(), 1);
        assert_eq!(&train[0], &s.train);
    }

    #[test]
    fn unwanted_rows_are_not_parsed() {
        let genes: Vec<String> = vec!["a".into(), "b".into()];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("split.tsv");
        std::fs::write(&path, format!("{HEADER}\na\tb\t1\ttrain\nzz\tb\tx\tseen_test\n")).unwrap();
        let train = read_split(&path, &genes, &[Partition::Train]).unwrap();
        assert_eq!(train[0].len(), 1);
        assert!(read_split(&path, &genes, &[Partition::SeenTest]).is_err());
    }

    #[test]
    fn bad_header_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("split.tsv");
        std::fs::write(&path, "a\tb\t1\n").unwrap();
        assert!(matches!(read_split(&path, &[], &[Partition::Train]), Err(Error::Parse { .. })));
    }
}
