//! Reverse-mode differentiation and a central-difference verifier.
//!
//! Objectives are closures that receive a fresh [`Tape`] plus one leaf per
//! parameter segment and return a scalar node. Random noise used by the
//! objective must be drawn outside the closure (or from a fixed seed) so
//! that repeated evaluations see the same draws.

mod check;
mod params;
mod tape;

pub use check::{finite_diff_check, CoordCheck, GradCheckReport, MAX_CHECKED_COORDS};
pub use params::{ParamVector, Segment, SegmentGroup};
pub use tape::{Adjoints, Tape, Var};

use crate::error::{Error, Result};

/// Forward value of `objective` at `at`.
pub fn evaluate<F>(objective: &F, at: &ParamVector) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let out = build(objective, at, &mut tape)?;
    Ok(tape.scalar(out))
}

/// Value and exact gradient of `objective` at `at`.
pub fn gradient<F>(objective: &F, at: &ParamVector) -> Result<(f64, ParamVector)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let leaves = leaves(at, &mut tape)?;
    let out = objective(&mut tape, &leaves)?;
    check_scalar(&tape, out)?;
    let adj = tape.backward(out)?;
    let mut grad = at.zeros_like();
    for (seg, leaf) in at.segments().iter().zip(&leaves) {
        let g = adj.get(*leaf, (seg.rows, seg.cols));
        grad.as_mut_slice()[seg.range()].copy_from_slice(g.as_slice());
    }
    Ok((tape.scalar(out), grad))
}

fn leaves(at: &ParamVector, tape: &mut Tape) -> Result<Vec<Var>> {
    at.matrices().into_iter().map(|m| tape.leaf(m)).collect()
}

fn build<F>(objective: &F, at: &ParamVector, tape: &mut Tape) -> Result<Var>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let leaves = leaves(at, tape)?;
    let out = objective(tape, &leaves)?;
    check_scalar(tape, out)?;
    Ok(out)
}

fn check_scalar(tape: &Tape, out: Var) -> Result<()> {
    let v = tape.value(out);
    if v.len() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "objective must be scalar, got {}x{}",
            v.rows(),
            v.cols()
        )));
    }
    Ok(())
}
