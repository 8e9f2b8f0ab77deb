//! Matrix-valued reverse-mode tape.
//!
//! Every node holds its forward value. `backward` walks the nodes in
//! reverse insertion order, so the tape is its own topological sort.

use crate::error::{Error, Result};
use crate::numkit::{lu_factor, sigmoid, softplus, LuFactorization, Matrix};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    AddRow(Var, Var),
    Tanh(Var),
    Softplus(Var),
    Sigmoid(Var),
    Exp(Var),
    Ln(Var),
    Abs(Var),
    Square(Var),
    Sum(Var),
    MaskDiagonal(Var),
    Solve { m: Var, b: Var, lu: LuFactorization },
    LogAbsDet { m: Var, lu: LuFactorization },
    Opaque { name: String, inputs: Vec<Var> },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints of every node after a backward pass.
#[derive(Debug)]
pub struct Adjoints {
    grads: Vec<Option<Matrix>>,
}

impl Adjoints {
    /// Gradient with respect to `v`; zero if `v` did not influence the output.
    pub fn get(&self, v: Var, shape: (usize, usize)) -> Matrix {
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| Matrix::zeros(shape.0, shape.1))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFiniteValue(format!("{} output", op_name(&op))));
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Registers an input (parameter or constant).
    pub fn leaf(&mut self, value: Matrix) -> Result<Var> {
        self.push(value, Op::Leaf)
    }

    pub fn constant_scalar(&mut self, value: f64) -> Result<Var> {
        self.leaf(Matrix::scalar(value))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).add(self.value(b))?;
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).sub(self.value(b))?;
        self.push(v, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).hadamard(self.value(b))?;
        self.push(v, Op::Mul(a, b))
    }

    /// Elementwise quotient.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), |x, y| x / y)?;
        self.push(v, Op::Div(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let v = self.value(a).scale(factor);
        self.push(v, Op::Scale(a, factor))
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -1.0)
    }

    /// Adds a constant to every entry.
    pub fn offset(&mut self, a: Var, c: f64) -> Result<Var> {
        let v = self.value(a).map(|x| x + c);
        self.push(v, Op::Offset(a))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        self.push(v, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let v = self.value(a).reshape(rows, cols)?;
        self.push(v, Op::Reshape(a))
    }

    /// Adds the `1 x c` row `r` to every row of `a`.
    pub fn add_row(&mut self, a: Var, r: Var) -> Result<Var> {
        let (av, rv) = (self.value(a), self.value(r));
        if rv.rows() != 1 || rv.cols() != av.cols() {
            return Err(Error::DimensionMismatch(format!(
                "add_row: {}x{} plus {}x{}",
                av.rows(),
                av.cols(),
                rv.rows(),
                rv.cols()
            )));
        }
        let mut v = av.clone();
        for i in 0..v.rows() {
            for (x, y) in v.row_mut(i).iter_mut().zip(rv.as_slice()) {
                *x += y;
            }
        }
        self.push(v, Op::AddRow(a, r))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(softplus);
        self.push(v, Op::Softplus(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(f64::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(f64::ln);
        self.push(v, Op::Ln(a))
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(f64::abs);
        self.push(v, Op::Abs(a))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a))
    }

    /// Sum of all entries, as a 1x1 node.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let v = Matrix::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    /// Copy of a square node with its diagonal forced to zero.
    pub fn mask_diagonal(&mut self, a: Var) -> Result<Var> {
        let mut v = self.value(a).clone();
        v.zero_diagonal();
        self.push(v, Op::MaskDiagonal(a))
    }

    /// `M⁻¹·B` via LU with partial pivoting.
    pub fn solve(&mut self, m: Var, b: Var) -> Result<Var> {
        let lu = lu_factor(self.value(m))?;
        let v = lu.solve(self.value(b))?;
        self.push(v, Op::Solve { m, b, lu })
    }

    /// `ln|det M|` as a 1x1 node.
    pub fn log_abs_det(&mut self, m: Var) -> Result<Var> {
        let lu = lu_factor(self.value(m))?;
        let v = Matrix::scalar(lu.log_abs_det());
        self.push(v, Op::LogAbsDet { m, lu })
    }

    /// Records a value computed outside the tape. It participates in the
    /// forward pass, but differentiating through it fails with
    /// [`Error::UnregisteredPrimitive`].
    pub fn opaque(&mut self, name: &str, inputs: &[Var], value: Matrix) -> Result<Var> {
        self.push(
            value,
            Op::Opaque {
                name: name.to_string(),
                inputs: inputs.to_vec(),
            },
        )
    }

    /// Convenience: `Σ a`, `a + b` on 1x1 nodes, and similar reductions.
    pub fn add_all(&mut self, terms: &[Var]) -> Result<Var> {
        let mut acc = *terms
            .first()
            .ok_or_else(|| Error::MissingInput("add_all needs at least one term".into()))?;
        for &t in &terms[1..] {
            acc = self.add(acc, t)?;
        }
        Ok(acc)
    }

    /// Reverse sweep from the scalar `output`.
    pub fn backward(&self, output: Var) -> Result<Adjoints> {
        let out_val = self.value(output);
        if out_val.len() != 1 {
            return Err(Error::DimensionMismatch(format!(
                "backward needs a scalar output, got {}x{}",
                out_val.rows(),
                out_val.cols()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.scale(-1.0));
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::Mul(a, b) => {
                    let ga = g.hadamard(self.value(*b))?;
                    let gb = g.hadamard(self.value(*a))?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Div(a, b) => {
                    let bv = self.value(*b);
                    let ga = g.zip_map(bv, |gi, bi| gi / bi)?;
                    let gb = g
                        .hadamard(&node.value)?
                        .zip_map(bv, |gy, bi| -gy / bi)?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Scale(a, c) => accumulate(&mut grads, *a, g.scale(*c)),
                Op::Offset(a) => accumulate(&mut grads, *a, g.clone()),
                Op::MatMul(a, b) => {
                    let ga = g.matmul(&self.value(*b).transpose())?;
                    let gb = self.value(*a).transpose().matmul(&g)?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.transpose()),
                Op::Reshape(a) => {
                    let (r, c) = self.value(*a).shape();
                    accumulate(&mut grads, *a, g.reshape(r, c)?);
                }
                Op::AddRow(a, r) => {
                    let mut gr = Matrix::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (acc, v) in gr.as_mut_slice().iter_mut().zip(g.row(i)) {
                            *acc += v;
                        }
                    }
                    accumulate(&mut grads, *r, gr);
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::Tanh(a) => {
                    let ga = g.zip_map(&node.value, |gi, y| gi * (1.0 - y * y))?;
                    accumulate(&mut grads, *a, ga);
                }
                Op::Softplus(a) => {
                    let ga = g.zip_map(self.value(*a), |gi, x| gi * sigmoid(x))?;
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sigmoid(a) => {
                    let ga = g.zip_map(&node.value, |gi, y| gi * y * (1.0 - y))?;
                    accumulate(&mut grads, *a, ga);
                }
                Op::Exp(a) => accumulate(&mut grads, *a, g.hadamard(&node.value)?),
                Op::Ln(a) => {
                    let ga = g.zip_map(self.value(*a), |gi, x| gi / x)?;
                    accumulate(&mut grads, *a, ga);
                }
                Op::Abs(a) => {
                    let ga = g.zip_map(self.value(*a), |gi, x| {
                        if x > 0.0 {
                            gi
                        } else if x < 0.0 {
                            -gi
                        } else {
                            0.0
                        }
                    })?;
                    accumulate(&mut grads, *a, ga);
                }
                Op::Square(a) => {
                    let ga = g.zip_map(self.value(*a), |gi, x| 2.0 * x * gi)?;
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    accumulate(&mut grads, *a, Matrix::filled(r, c, g.item()));
                }
                Op::MaskDiagonal(a) => {
                    let mut ga = g.clone();
                    ga.zero_diagonal();
                    accumulate(&mut grads, *a, ga);
                }
                Op::Solve { m, b, lu } => {
                    // y = M⁻¹B: B̄ = M⁻ᵀȲ, M̄ = -B̄·yᵀ
                    let gb = lu.solve_transpose(&g)?;
                    let gm = gb.matmul(&node.value.transpose())?.scale(-1.0);
                    accumulate(&mut grads, *m, gm);
                    accumulate(&mut grads, *b, gb);
                }
                Op::LogAbsDet { m, lu } => {
                    let n = lu.dim();
                    let gm = lu.solve_transpose(&Matrix::identity(n))?.scale(g.item());
                    accumulate(&mut grads, *m, gm);
                }
                Op::Opaque { name, inputs } => {
                    if !inputs.is_empty() {
                        return Err(Error::UnregisteredPrimitive(name.clone()));
                    }
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Adjoints { grads })
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Div(..) => "div",
        Op::Scale(..) => "scale",
        Op::Offset(..) => "offset",
        Op::MatMul(..) => "matmul",
        Op::Transpose(..) => "transpose",
        Op::Reshape(..) => "reshape",
        Op::AddRow(..) => "add_row",
        Op::Tanh(..) => "tanh",
        Op::Softplus(..) => "softplus",
        Op::Sigmoid(..) => "sigmoid",
        Op::Exp(..) => "exp",
        Op::Ln(..) => "ln",
        Op::Abs(..) => "abs",
        Op::Square(..) => "square",
        Op::Sum(..) => "sum",
        Op::MaskDiagonal(..) => "mask_diagonal",
        Op::Solve { .. } => "solve",
        Op::LogAbsDet { .. } => "log_abs_det",
        Op::Opaque { .. } => "opaque",
    }
}
