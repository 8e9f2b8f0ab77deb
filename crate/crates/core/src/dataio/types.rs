use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::Matrix;

/// Genes x cells expression values with per-gene TF flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpressionMatrix {
    genes: Vec<String>,
    is_tf: Vec<bool>,
    cells: Vec<String>,
    values: Matrix,
}

impl ExpressionMatrix {
    pub fn new(genes: Vec<String>, is_tf: Vec<bool>, cells: Vec<String>, values: Matrix) -> Result<Self> {
        if genes.is_empty() || cells.is_empty() {
            return Err(Error::DimensionMismatch(
                "expression needs at least one gene and one cell".into(),
            ));
        }
        if values.shape() != (genes.len(), cells.len()) || is_tf.len() != genes.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} genes, {} flags and {} cells for a {}x{} matrix",
                genes.len(),
                is_tf.len(),
                cells.len(),
                values.rows(),
                values.cols()
            )));
        }
        check_unique(&genes)?;
        if !values.is_finite() {
            return Err(Error::NonFiniteValue("expression values".into()));
        }
        Ok(Self {
            genes,
            is_tf,
            cells,
            values,
        })
    }

    pub fn genes(&self) -> &[String] {
        &self.genes
    }

    pub fn is_tf(&self) -> &[bool] {
        &self.is_tf
    }

    pub fn cells(&self) -> &[String] {
        &self.cells
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn n_genes(&self) -> usize {
        self.genes.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn with_values(&self, values: Matrix) -> Result<Self> {
        Self::new(self.genes.clone(), self.is_tf.clone(), self.cells.clone(), values)
    }

    pub fn gene_index(&self) -> HashMap<&str, usize> {
        index_of(&self.genes)
    }
}

/// One labeled (TF, TG) pair, as gene indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub tf: usize,
    pub tg: usize,
    pub label: bool,
}

impl Edge {
    pub fn new(tf: usize, tg: usize, label: bool) -> Self {
        Self { tf, tg, label }
    }
}

/// Labeled edges over a fixed gene list. Pairs are unique.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledEdges {
    genes: Vec<String>,
    edges: Vec<Edge>,
}

impl LabeledEdges {
    pub fn new(genes: Vec<String>, edges: Vec<Edge>) -> Result<Self> {
        let n = genes.len();
        let mut seen = HashSet::with_capacity(edges.len());
        for e in &edges {
            for idx in [e.tf, e.tg] {
                if idx >= n {
                    return Err(Error::IndexOutOfRange { index: idx, len: n });
                }
            }
            if !seen.insert((e.tf, e.tg)) {
                return Err(Error::DuplicateEdge {
                    tf: genes[e.tf].clone(),
                    tg: genes[e.tg].clone(),
                });
            }
        }
        Ok(Self { genes, edges })
    }

    /// Empty edge set over `genes`.
    pub fn empty(genes: Vec<String>) -> Self {
        Self {
            genes,
            edges: Vec::new(),
        }
    }

    pub fn genes(&self) -> &[String] {
        &self.genes
    }

    pub fn n_genes(&self) -> usize {
        self.genes.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.edges.iter().map(|e| e.label).collect()
    }

    pub fn positives(&self) -> usize {
        self.edges.iter().filter(|e| e.label).count()
    }

    /// Fraction of positive labels; 0 for an empty set.
    pub fn prevalence(&self) -> f64 {
        if self.edges.is_empty() {
            0.0
        } else {
            self.positives() as f64 / self.edges.len() as f64
        }
    }

    pub fn has_both_classes(&self) -> bool {
        let pos = self.positives();
        pos > 0 && pos < self.edges.len()
    }

    /// Edges satisfying `keep`, same gene list.
    pub fn filter(&self, mut keep: impl FnMut(&Edge) -> bool) -> Self {
        Self {
            genes: self.genes.clone(),
            edges: self.edges.iter().copied().filter(|e| keep(e)).collect(),
        }
    }

    /// Replaces the edge list, keeping the gene list.
    pub fn with_edges(&self, edges: Vec<Edge>) -> Result<Self> {
        Self::new(self.genes.clone(), edges)
    }

    pub fn tfs(&self) -> BTreeSet<usize> {
        self.edges.iter().map(|e| e.tf).collect()
    }

    pub fn tgs(&self) -> BTreeSet<usize> {
        self.edges.iter().map(|e| e.tg).collect()
    }

    /// Every gene index touched by some edge, in either role.
    pub fn touched_genes(&self) -> BTreeSet<usize> {
        self.edges.iter().flat_map(|e| [e.tf, e.tg]).collect()
    }

    /// Scores of a `P x P` matrix at each edge, in edge order.
    pub fn gather(&self, scores: &Matrix) -> Vec<f64> {
        self.edges.iter().map(|e| scores[(e.tf, e.tg)]).collect()
    }
}

/// Per-gene embedding rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    genes: Vec<String>,
    values: Matrix,
}

impl EmbeddingMatrix {
    pub fn new(genes: Vec<String>, values: Matrix) -> Result<Self> {
        if values.rows() != genes.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} genes for {} embedding rows",
                genes.len(),
                values.rows()
            )));
        }
        if values.cols() == 0 {
            return Err(Error::DimensionMismatch("embedding dimension must be >= 1".into()));
        }
        check_unique(&genes)?;
        if !values.is_finite() {
            return Err(Error::NonFiniteValue("embedding values".into()));
        }
        Ok(Self { genes, values })
    }

    pub fn genes(&self) -> &[String] {
        &self.genes
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    /// Rows reordered to follow `genes`.
    pub fn aligned_to(&self, genes: &[String]) -> Result<Matrix> {
        let index = index_of(&self.genes);
        let missing: Vec<String> = genes
            .iter()
            .filter(|g| !index.contains_key(g.as_str()))
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingGeneEmbedding(missing));
        }
        let d = self.dim();
        let mut out = Matrix::zeros(genes.len(), d);
        for (i, g) in genes.iter().enumerate() {
            out.row_mut(i).copy_from_slice(self.values.row(index[g.as_str()]));
        }
        Ok(out)
    }
}

fn check_unique(genes: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(genes.len());
    for g in genes {
        if !seen.insert(g.as_str()) {
            return Err(Error::DuplicateGene(g.clone()));
        }
    }
    Ok(())
}

pub(crate) fn index_of(genes: &[String]) -> HashMap<&str, usize> {
    genes.iter().enumerate().map(|(i, g)| (g.as_str(), i)).collect()
}
