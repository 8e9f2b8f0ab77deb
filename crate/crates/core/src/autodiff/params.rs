use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::Matrix;

/// Which family of free variables a segment belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentGroup {
    Adjacency,
    EmbeddingWeights,
    Encoder,
    Decoder,
    LowRank,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub group: SegmentGroup,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Flat parameter vector partitioned into named matrix-shaped segments.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    segments: Vec<Segment>,
    data: Vec<f64>,
}

impl ParamVector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a segment holding a copy of `value`.
    pub fn push(&mut self, name: &str, group: SegmentGroup, value: &Matrix) {
        assert!(
            self.segment(name).is_none(),
            "duplicate parameter segment {name}"
        );
        self.segments.push(Segment {
            name: name.to_string(),
            group,
            rows: value.rows(),
            cols: value.cols(),
            offset: self.data.len(),
        });
        self.data.extend_from_slice(value.as_slice());
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Same layout, new values.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        if data.len() != self.data.len() {
            return Err(Error::DimensionMismatch(format!(
                "parameter data of length {} for layout of length {}",
                data.len(),
                self.data.len()
            )));
        }
        Ok(Self {
            segments: self.segments.clone(),
            data,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            segments: self.segments.clone(),
            data: vec![0.0; self.data.len()],
        }
    }

    pub fn get(&self, name: &str) -> Option<Matrix> {
        let s = self.segment(name)?;
        Some(Matrix::from_vec(s.rows, s.cols, self.data[s.range()].to_vec()).expect("segment shape"))
    }

    pub fn require(&self, name: &str) -> Result<Matrix> {
        self.get(name)
            .ok_or_else(|| Error::MissingInput(format!("parameter segment {name}")))
    }

    pub fn set(&mut self, name: &str, value: &Matrix) -> Result<()> {
        let s = self
            .segment(name)
            .ok_or_else(|| Error::MissingInput(format!("parameter segment {name}")))?
            .clone();
        if (s.rows, s.cols) != value.shape() {
            return Err(Error::DimensionMismatch(format!(
                "segment {name} is {}x{}, value is {}x{}",
                s.rows,
                s.cols,
                value.rows(),
                value.cols()
            )));
        }
        self.data[s.range()].copy_from_slice(value.as_slice());
        Ok(())
    }

    /// Unpacks every segment into a matrix, in layout order.
    pub fn matrices(&self) -> Vec<Matrix> {
        self.segments
            .iter()
            .map(|s| Matrix::from_vec(s.rows, s.cols, self.data[s.range()].to_vec()).expect("segment shape"))
            .collect()
    }

    /// Packs matrices into this layout; inverse of [`ParamVector::matrices`].
    pub fn pack(&self, values: &[Matrix]) -> Result<Self> {
        if values.len() != self.segments.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} matrices for {} segments",
                values.len(),
                self.segments.len()
            )));
        }
        let mut out = self.zeros_like();
        for (s, v) in self.segments.iter().zip(values) {
            if (s.rows, s.cols) != v.shape() {
                return Err(Error::DimensionMismatch(format!("segment {}", s.name)));
            }
            out.data[s.range()].copy_from_slice(v.as_slice());
        }
        Ok(out)
    }

    /// Index of the segment containing flat coordinate `i`.
    pub fn segment_of(&self, i: usize) -> Option<&Segment> {
        self.segments.iter().find(|s| s.range().contains(&i))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}
