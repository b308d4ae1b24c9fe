use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::poly::{self, C64};
use super::transfer::RationalTransferFunction;
use crate::error::{Error, Result};

/// Continuous-time `(A, B, C, D)` realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSs", into = "RawSs")]
pub struct StateSpaceModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
}

/// Row-major nested arrays for the JSON form.
#[derive(Serialize, Deserialize)]
struct RawSs {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    d: Vec<Vec<f64>>,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>], cols_if_empty: usize) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(cols_if_empty, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidModel("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

impl TryFrom<RawSs> for StateSpaceModel {
    type Error = Error;
    fn try_from(raw: RawSs) -> Result<Self> {
        let a = from_rows(&raw.a, 0)?;
        let b = from_rows(&raw.b, 0)?;
        let c = from_rows(&raw.c, a.nrows())?;
        let d = from_rows(&raw.d, b.ncols())?;
        Self::new(a, b, c, d)
    }
}

impl From<StateSpaceModel> for RawSs {
    fn from(ss: StateSpaceModel) -> Self {
        RawSs {
            a: to_rows(&ss.a),
            b: to_rows(&ss.b),
            c: to_rows(&ss.c),
            d: to_rows(&ss.d),
        }
    }
}

impl StateSpaceModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::InvalidModel(format!("A is {}x{}, not square", n, a.ncols())));
        }
        if b.nrows() != n || c.ncols() != n || d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(Error::InvalidModel(format!(
                "inconsistent dimensions: A {n}x{n}, B {}x{}, C {}x{}, D {}x{}",
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols(),
                d.nrows(),
                d.ncols()
            )));
        }
        if [&a, &b, &c, &d].iter().any(|m| m.iter().any(|x| !x.is_finite())) {
            return Err(Error::InvalidModel("non-finite matrix entry".into()));
        }
        Ok(Self { a, b, c, d })
    }

    /// Single-input single-output convenience constructor.
    pub fn siso(a: DMatrix<f64>, b: DVector<f64>, c: DVector<f64>, d: f64) -> Result<Self> {
        let n = b.len();
        Self::new(
            a,
            DMatrix::from_column_slice(n, 1, b.as_slice()),
            DMatrix::from_row_slice(1, c.len(), c.as_slice()),
            DMatrix::from_element(1, 1, d),
        )
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }
    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }
    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn is_siso(&self) -> bool {
        self.inputs() == 1 && self.outputs() == 1
    }

    fn require_siso(&self) -> Result<()> {
        if self.is_siso() {
            Ok(())
        } else {
            Err(Error::UnsupportedModel(format!(
                "{} inputs / {} outputs; only SISO is supported here",
                self.inputs(),
                self.outputs()
            )))
        }
    }

    /// `C (sI - A)^-1 B + D` for a SISO model; `None` when `sI - A` is singular.
    pub fn eval(&self, s: C64) -> Result<Option<C64>> {
        self.require_siso()?;
        let n = self.order();
        let d = C64::new(self.d[(0, 0)], 0.0);
        if n == 0 {
            return Ok(Some(d));
        }
        let m = DMatrix::from_fn(n, n, |i, j| {
            let diag = if i == j { s } else { C64::new(0.0, 0.0) };
            diag - C64::new(self.a[(i, j)], 0.0)
        });
        let rhs = DVector::from_fn(n, |i, _| C64::new(self.b[(i, 0)], 0.0));
        let lu = m.lu();
        let scale = self.a.norm().max(s.norm()).max(1.0);
        let det = lu.determinant();
        if det.norm() <= 1e-13 * scale.powi(n as i32) {
            return Ok(None);
        }
        let Some(x) = lu.solve(&rhs) else {
            return Ok(None);
        };
        let y = (0..n).fold(d, |acc, i| acc + C64::new(self.c[(0, i)], 0.0) * x[i]);
        Ok(Some(y))
    }

    /// Characteristic polynomial `det(sI - A)` (monic, descending).
    pub fn characteristic_polynomial(&self) -> Vec<f64> {
        faddeev_leverrier(&self.a).0
    }

    /// Eigenvalues of `A`.
    pub fn poles(&self) -> Vec<C64> {
        self.a.complex_eigenvalues().iter().copied().collect()
    }

    /// SISO transfer function via the Faddeev-LeVerrier adjugate expansion.
    pub fn to_transfer_function(&self) -> Result<RationalTransferFunction> {
        self.require_siso()?;
        let (den, adj_terms) = faddeev_leverrier(&self.a);
        let dval = self.d[(0, 0)];
        let mut num = poly::scale(&den, dval);
        for (k, mk) in adj_terms.iter().enumerate() {
            // coefficient of s^(n-1-k), stored at index k+1 of an (n+1)-vector
            let v = (&self.c * mk * &self.b)[(0, 0)];
            num[k + 1] += v;
        }
        RationalTransferFunction::new(num, den)
    }

    /// Continuous-time free plus forced response derivative `A x + B u`.
    pub fn derivative(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }

    pub fn output(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.c * x + &self.d * u
    }
}

/// Returns the monic characteristic polynomial and the adjugate expansion
/// matrices `M_0 .. M_{n-1}` with `adj(sI - A) = sum_k M_k s^(n-1-k)`.
fn faddeev_leverrier(a: &DMatrix<f64>) -> (Vec<f64>, Vec<DMatrix<f64>>) {
    let n = a.nrows();
    let mut coeffs = vec![1.0];
    let mut terms = Vec::with_capacity(n);
    let mut m = DMatrix::<f64>::identity(n, n);
    for k in 1..=n {
        terms.push(m.clone());
        let am = a * &m;
        let ck = -am.trace() / k as f64;
        coeffs.push(ck);
        m = am + DMatrix::identity(n, n) * ck;
    }
    (coeffs, terms)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inconsistent_dimensions() {
        let err = StateSpaceModel::new(
            DMatrix::zeros(2, 2),
            DMatrix::zeros(3, 1),
            DMatrix::zeros(1, 2),
            DMatrix::zeros(1, 1),
        );
        assert!(matches!(err, Err(Error::InvalidModel(_))));
    }

    #[test]
    fn rejects_non_finite_entries() {
        let mut a = DMatrix::zeros(1, 1);
        a[(0, 0)] = f64::NAN;
        assert!(StateSpaceModel::new(a, DMatrix::zeros(1, 1), DMatrix::zeros(1, 1), DMatrix::zeros(1, 1)).is_err());
    }

    #[test]
    fn transfer_function_of_companion_form() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]);
        let ss = StateSpaceModel::siso(a, DVector::from_vec(vec![0.0, 1.0]), DVector::from_vec(vec![5.0, 1.0]), 0.0).unwrap();
        let tf = ss.to_transfer_function().unwrap();
        assert_eq!(tf.denominator(), &[1.0, 3.0, 2.0]);
        assert_eq!(tf.numerator(), &[1.0, 5.0]);
    }

    #[test]
    fn json_round_trip() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]);
        let ss = StateSpaceModel::siso(a, DVector::from_vec(vec![0.0, 1.0]), DVector::from_vec(vec![5.0, 1.0]), 0.5).unwrap();
        let text = serde_json::to_string(&ss).unwrap();
        let back: StateSpaceModel = serde_json::from_str(&text).unwrap();
        assert_eq!(ss, back);
    }
}
