use std::fmt;
use std::ops::Mul;

use serde::{Deserialize, Serialize};

use super::poly::{self, C64};
use crate::error::{Error, Result};

/// Ratio of two real polynomials in the Laplace variable, coefficients in
/// descending powers of `s`. The denominator is kept monic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTf", into = "RawTf")]
pub struct RationalTransferFunction {
    num: Vec<f64>,
    den: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawTf {
    numerator: Vec<f64>,
    denominator: Vec<f64>,
}

impl TryFrom<RawTf> for RationalTransferFunction {
    type Error = Error;
    fn try_from(raw: RawTf) -> Result<Self> {
        Self::new(raw.numerator, raw.denominator)
    }
}

impl From<RationalTransferFunction> for RawTf {
    fn from(tf: RationalTransferFunction) -> Self {
        RawTf {
            numerator: tf.num,
            denominator: tf.den,
        }
    }
}

impl RationalTransferFunction {
    pub fn new(num: impl Into<Vec<f64>>, den: impl Into<Vec<f64>>) -> Result<Self> {
        let num = poly::trim(&num.into());
        let den = poly::trim(&den.into());
        if num.iter().chain(&den).any(|c| !c.is_finite()) {
            return Err(Error::InvalidModel("non-finite coefficient".into()));
        }
        if poly::is_zero(&den) {
            return Err(Error::InvalidModel("denominator is identically zero".into()));
        }
        let lead = den[0];
        Ok(Self {
            num: num.iter().map(|c| c / lead).collect(),
            den: den.iter().map(|c| c / lead).collect(),
        })
    }

    pub fn gain(k: f64) -> Self {
        Self::new(vec![k], vec![1.0]).expect("finite static gain")
    }

    /// `k / s`
    pub fn integrator(k: f64) -> Self {
        Self::new(vec![k], vec![1.0, 0.0]).expect("finite integrator gain")
    }

    pub fn numerator(&self) -> &[f64] {
        &self.num
    }

    pub fn denominator(&self) -> &[f64] {
        &self.den
    }

    pub fn num_degree(&self) -> usize {
        if poly::is_zero(&self.num) {
            0
        } else {
            self.num.len() - 1
        }
    }

    pub fn den_degree(&self) -> usize {
        self.den.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        poly::is_zero(&self.num)
    }

    pub fn is_proper(&self) -> bool {
        self.is_zero() || self.num_degree() <= self.den_degree()
    }

    pub fn is_strictly_proper(&self) -> bool {
        self.is_zero() || self.num_degree() < self.den_degree()
    }

    pub fn eval(&self, s: C64) -> C64 {
        poly::eval(&self.num, s) / poly::eval(&self.den, s)
    }

    /// Value at `s = 0`, `None` when there is a pole at the origin.
    pub fn dc_gain(&self) -> Option<f64> {
        let d = *self.den.last().unwrap();
        (d != 0.0).then(|| self.num.last().unwrap() / d)
    }

    /// Limit of the response as `|s| -> inf` for proper systems.
    pub fn high_frequency_gain(&self) -> Option<f64> {
        if !self.is_proper() {
            None
        } else if !self.is_zero() && self.num_degree() == self.den_degree() {
            Some(self.num[0])
        } else {
            Some(0.0)
        }
    }

    pub fn poles(&self) -> Result<Vec<C64>> {
        poly::roots(&self.den)
    }

    pub fn zeros(&self) -> Result<Vec<C64>> {
        if self.is_zero() {
            return Ok(Vec::new());
        }
        poly::roots(&self.num)
    }

    /// True when every pole lies strictly in the open left half-plane.
    pub fn is_stable(&self) -> Result<bool> {
        Ok(self.poles()?.iter().all(|p| p.re < 0.0))
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::new(poly::scale(&self.num, k), self.den.clone()).expect("scaled tf stays valid")
    }

    /// Parallel connection `self + other`.
    pub fn add(&self, other: &Self) -> Self {
        let num = poly::add(
            &poly::mul(&self.num, &other.den),
            &poly::mul(&other.num, &self.den),
        );
        Self::new(num, poly::mul(&self.den, &other.den)).expect("sum of valid tfs")
    }

    /// Unity negative feedback around `self` as the loop gain: `L / (1 + L)`.
    pub fn unity_feedback(&self) -> Self {
        Self::new(self.num.clone(), poly::add(&self.den, &self.num)).expect("closed loop")
    }

    /// Characteristic polynomial `den + num` of the unity-feedback loop.
    pub fn closed_loop_characteristic(&self) -> Vec<f64> {
        poly::add(&self.den, &self.num)
    }
}

impl Mul for &RationalTransferFunction {
    type Output = RationalTransferFunction;
    fn mul(self, rhs: Self) -> RationalTransferFunction {
        RationalTransferFunction::new(
            poly::mul(&self.num, &rhs.num),
            poly::mul(&self.den, &rhs.den),
        )
        .expect("product of valid tfs")
    }
}

impl fmt::Display for RationalTransferFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}) / ({})", fmt_poly(&self.num), fmt_poly(&self.den))
    }
}

fn fmt_poly(p: &[f64]) -> String {
    let n = p.len() - 1;
    let terms: Vec<String> = p
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(i, c)| match n - i {
            0 => format!("{c}"),
            1 => format!("{c} s"),
            k => format!("{c} s^{k}"),
        })
        .collect();
    if terms.is_empty() {
        "0".into()
    } else {
        terms.join(" + ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn denominator_is_normalized_to_monic() {
        let tf = RationalTransferFunction::new(vec![4.0], vec![2.0, 2.0]).unwrap();
        assert_eq!(tf.numerator(), &[2.0]);
        assert_eq!(tf.denominator(), &[1.0, 1.0]);
    }

    #[test]
    fn zero_denominator_is_invalid() {
        assert!(matches!(
            RationalTransferFunction::new(vec![1.0], vec![0.0, 0.0]),
            Err(Error::InvalidModel(_))
        ));
    }

    #[test]
    fn poles_of_first_order_and_double_integrator() {
        let tf = RationalTransferFunction::new(vec![1.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(tf.poles().unwrap(), vec![C64::new(-1.0, 0.0)]);
        let tf = RationalTransferFunction::new(vec![1.0], vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(tf.poles().unwrap(), vec![C64::new(0.0, 0.0); 2]);
    }

    #[test]
    fn unity_feedback_of_first_order_lag() {
        let l = RationalTransferFunction::new(vec![1.0], vec![1.0, 1.0]).unwrap();
        let t = l.unity_feedback();
        assert_eq!(t.denominator(), &[1.0, 2.0]);
    }

    #[test]
    fn serde_round_trip_keeps_normalization() {
        let tf = RationalTransferFunction::new(vec![1.0, 3.0], vec![2.0, 1.0, 4.0]).unwrap();
        let s = serde_json::to_string(&tf).unwrap();
        let back: RationalTransferFunction = serde_json::from_str(&s).unwrap();
        assert_eq!(tf, back);
        assert!(serde_json::from_str::<RationalTransferFunction>(
            r#"{"numerator":[1.0],"denominator":[0.0]}"#
        )
        .is_err());
    }
}
