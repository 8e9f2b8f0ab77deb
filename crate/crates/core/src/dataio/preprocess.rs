use log::warn;

use crate::error::{Error, Result};

use super::types::ExpressionMatrix;

/// Optional `ln(1 + x)` followed by optional per-gene standardization.
/// Constant genes standardize to all zeros.
pub fn preprocess(x: &ExpressionMatrix, log1p: bool, zscore: bool) -> Result<ExpressionMatrix> {
    let mut values = x.values().clone();
    let n = x.n_cells() as f64;
    if log1p {
        for (i, gene) in x.genes().iter().enumerate() {
            if let Some(&v) = values.row(i).iter().find(|&&v| v < 0.0) {
                return Err(Error::NegativeValueWithLog1p { gene: gene.clone(), value: v });
            }
        }
        values = values.map(f64::ln_1p);
    }
    if zscore {
        let mut constant = 0;
        for i in 0..values.rows() {
            let row = values.row_mut(i);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            if sd <= 1e-12 * mean.abs().max(1.0) {
                row.fill(0.0);
                constant += 1;
            } else {
                row.iter_mut().for_each(|v| *v = (*v - mean) / sd);
            }
        }
        if constant > 0 {
            warn!("{constant} constant gene(s) set to zero by standardization");
        }
    }
    x.with_values(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{normal_matrix, Matrix, Rng};

    fn expr(values: Matrix) -> ExpressionMatrix {
        let p = values.rows();
        let n = values.cols();
        ExpressionMatrix::new(
            (0..p).map(|i| format!("g{i}")).collect(),
            vec![false; p],
            (0..n).map(|j| format!("c{j}")).collect(),
            values,
        )
        .unwrap()
    }

    #[test]
    fn identity_when_off() {
        let x = expr(normal_matrix(&mut Rng::seed_from_u64(1), 3, 7, 2.0));
        assert_eq!(preprocess(&x, false, false).unwrap(), x);
    }

    #[test]
    fn zscore_rows() {
        let mut v = normal_matrix(&mut Rng::seed_from_u64(2), 4, 50, 3.0).map(|a| a + 10.0);
        v.row_mut(3).fill(2.5);
        let out = preprocess(&expr(v), false, true).unwrap();
        for i in 0..3 {
            let row = out.values().row(i);
            let mean = row.iter().sum::<f64>() / 50.0;
            let sd = (row.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 50.0).sqrt();
            assert!(mean.abs() < 1e-12);
            assert!((sd - 1.0).abs() < 1e-12);
        }
        assert!(out.values().row(3).iter().all(|&a| a == 0.0));
    }

    #[test]
    fn log1p_values_and_errors() {
        let x = expr(Matrix::from_rows(&[vec![0.0, 1.0], vec![3.0, 0.5]]));
        let out = preprocess(&x, true, false).unwrap();
        assert_eq!(out.values().row(0), &[0.0, 2f64.ln()]);
        let bad = expr(Matrix::from_rows(&[vec![0.0, -1.0]]));
        assert!(matches!(
            preprocess(&bad, true, false),
            Err(Error::NegativeValueWithLog1p { value, .. }) if value == -1.0
        ));
    }
}
