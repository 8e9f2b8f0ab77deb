use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamVector, SegmentGroup, Tape, Var};
use crate::error::{Error, Result};
use crate::numkit::{normal_matrix, softplus, softplus_inv, Matrix, Rng};

/// Lower bound added to every scale-head output.
pub const SCALE_FLOOR: f64 = 1e-6;

/// Fully connected layer: `out = input · weight + bias`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `fan_in x fan_out`
    pub weight: Matrix,
    /// `1 x fan_out`
    pub bias: Matrix,
}

impl Dense {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Matrix::zeros(fan_in, fan_out),
            bias: Matrix::zeros(1, fan_out),
        }
    }

    fn random(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        Self {
            weight: normal_matrix(rng, fan_in, fan_out, 1.0 / (fan_in as f64).sqrt()),
            bias: Matrix::zeros(1, fan_out),
        }
    }

    fn apply(&self, input: &Matrix) -> Result<Matrix> {
        let mut out = input.matmul(&self.weight)?;
        for i in 0..out.rows() {
            for (o, b) in out.row_mut(i).iter_mut().zip(self.bias.as_slice()) {
                *o += b;
            }
        }
        Ok(out)
    }
}

/// Scalar-to-scalar network applied entrywise, with a mean head (identity
/// output) and a scale head (softplus output plus [`SCALE_FLOOR`]).
///
/// With no hidden layers both heads are affine in the input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden: Vec<Dense>,
    pub mean_head: Dense,
    pub scale_head: Dense,
}

impl MlpParams {
    /// Hidden and mean-head weights drawn from `N(0, 1/fan_in)` with zero
    /// biases; the scale head starts at a constant output of 1.
    pub fn random(hidden_widths: &[usize], rng: &mut Rng) -> Self {
        let mut fan_in = 1;
        let mut hidden = Vec::with_capacity(hidden_widths.len());
        for &w in hidden_widths {
            hidden.push(Dense::random(fan_in, w, rng));
            fan_in = w;
        }
        Self {
            hidden,
            mean_head: Dense::random(fan_in, 1, rng),
            scale_head: Dense {
                weight: Matrix::zeros(fan_in, 1),
                bias: Matrix::scalar(softplus_inv(1.0 - SCALE_FLOOR)),
            },
        }
    }

    /// Network whose heads output `mean` and `scale` for every input.
    pub fn constant(mean: f64, scale: f64) -> Self {
        assert!(scale > SCALE_FLOOR, "constant scale must exceed the floor");
        let mut mean_head = Dense::zeros(1, 1);
        mean_head.bias = Matrix::scalar(mean);
        let mut scale_head = Dense::zeros(1, 1);
        scale_head.bias = Matrix::scalar(softplus_inv(scale - SCALE_FLOOR));
        Self {
            hidden: Vec::new(),
            mean_head,
            scale_head,
        }
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.hidden.iter().map(|d| d.bias.cols()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.layers().all(|d| d.weight.is_finite() && d.bias.is_finite())
    }

    fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.hidden
            .iter()
            .chain([&self.mean_head, &self.scale_head])
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.hidden
            .iter_mut()
            .chain([&mut self.mean_head, &mut self.scale_head])
    }

    /// Entrywise heads for every entry of `input`.
    pub fn forward(&self, input: &Matrix) -> Result<(Matrix, Matrix)> {
        let (r, c) = input.shape();
        let mut h = input.reshape(r * c, 1)?;
        for layer in &self.hidden {
            h = layer.apply(&h)?.map(f64::tanh);
        }
        let mean = self.mean_head.apply(&h)?.reshape(r, c)?;
        let scale = self
            .scale_head
            .apply(&h)?
            .map(|v| softplus(v) + SCALE_FLOOR)
            .reshape(r, c)?;
        if !mean.is_finite() || !scale.is_finite() {
            return Err(Error::NonFiniteValue("network output".into()));
        }
        Ok((mean, scale))
    }

    /// Appends every weight and bias as a segment named `{prefix}.{layer}.{w|b}`.
    pub fn push_params(&self, prefix: &str, group: SegmentGroup, out: &mut ParamVector) {
        for (name, layer) in self.layer_names().iter().zip(self.layers()) {
            out.push(&format!("{prefix}.{name}.w"), group, &layer.weight);
            out.push(&format!("{prefix}.{name}.b"), group, &layer.bias);
        }
    }

    /// Reads values back from segments written by [`MlpParams::push_params`].
    pub fn load_params(&mut self, prefix: &str, from: &ParamVector) -> Result<()> {
        let names = self.layer_names();
        for (name, layer) in names.iter().zip(self.layers_mut()) {
            layer.weight = from.require(&format!("{prefix}.{name}.w"))?;
            layer.bias = from.require(&format!("{prefix}.{name}.b"))?;
        }
        Ok(())
    }

    fn layer_names(&self) -> Vec<String> {
        (0..self.hidden.len())
            .map(|i| format!("h{i}"))
            .chain(["mean".to_string(), "scale".to_string()])
            .collect()
    }

    pub fn segment_count(&self) -> usize {
        2 * (self.hidden.len() + 2)
    }
}

/// Tape handles for one network, in [`MlpParams::push_params`] order.
#[derive(Clone, Debug)]
pub struct MlpVars {
    hidden: Vec<(Var, Var)>,
    mean_head: (Var, Var),
    scale_head: (Var, Var),
}

impl MlpVars {
    pub fn bind(n_hidden: usize, vars: &[Var]) -> Self {
        assert_eq!(vars.len(), 2 * (n_hidden + 2));
        let pair = |k: usize| (vars[2 * k], vars[2 * k + 1]);
        Self {
            hidden: (0..n_hidden).map(pair).collect(),
            mean_head: pair(n_hidden),
            scale_head: pair(n_hidden + 1),
        }
    }

    /// Entrywise heads on the tape; mirrors [`MlpParams::forward`].
    pub fn forward(&self, t: &mut Tape, input: Var) -> Result<(Var, Var)> {
        let (r, c) = t.value(input).shape();
        let mut h = t.reshape(input, r * c, 1)?;
        for &(w, b) in &self.hidden {
            let z = t.matmul(h, w)?;
            let z = t.add_row(z, b)?;
            h = t.tanh(z)?;
        }
        let m = t.matmul(h, self.mean_head.0)?;
        let m = t.add_row(m, self.mean_head.1)?;
        let mean = t.reshape(m, r, c)?;
        let s = t.matmul(h, self.scale_head.0)?;
        let s = t.add_row(s, self.scale_head.1)?;
        let s = t.softplus(s)?;
        let s = t.offset(s, SCALE_FLOOR)?;
        let scale = t.reshape(s, r, c)?;
        Ok((mean, scale))
    }
}
