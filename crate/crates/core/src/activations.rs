//! Invertible elementwise activations and their clamped inverses.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::Mat;

pub const DEFAULT_CLAMP_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Identity,
    Tanh,
    Sigmoid,
}

impl ActivationKind {
    pub(crate) fn code(self) -> u8 {
        match self {
            ActivationKind::Identity => 0,
            ActivationKind::Tanh => 1,
            ActivationKind::Sigmoid => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(ActivationKind::Identity),
            1 => Some(ActivationKind::Tanh),
            2 => Some(ActivationKind::Sigmoid),
            _ => None,
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActivationKind::Identity => "identity",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Sigmoid => "sigmoid",
        })
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" | "linear" => Ok(ActivationKind::Identity),
            "tanh" => Ok(ActivationKind::Tanh),
            "sigmoid" | "logistic" => Ok(ActivationKind::Sigmoid),
            other => Err(Error::format(format!("unknown activation '{other}'"))),
        }
    }
}

/// An activation together with the margin used to clamp inputs of the
/// inverse into the open range of the forward map.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Activation {
    pub kind: ActivationKind,
    pub clamp_eps: f64,
}

impl Default for Activation {
    fn default() -> Self {
        Activation::new(ActivationKind::Tanh)
    }
}

impl Activation {
    pub fn new(kind: ActivationKind) -> Self {
        Activation {
            kind,
            clamp_eps: DEFAULT_CLAMP_EPS,
        }
    }

    pub fn identity() -> Self {
        Activation::new(ActivationKind::Identity)
    }

    pub fn with_clamp_eps(kind: ActivationKind, clamp_eps: f64) -> Result<Self> {
        if !(clamp_eps > 0.0 && clamp_eps < 0.1) {
            return Err(Error::degenerate(format!(
                "clamp_eps must lie in (0, 0.1), got {clamp_eps}"
            )));
        }
        Ok(Activation { kind, clamp_eps })
    }

    #[inline]
    pub fn forward(&self, x: f64) -> f64 {
        match self.kind {
            ActivationKind::Identity => x,
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }

    /// Inverse of [`forward`](Self::forward) after clamping. The flag is
    /// true when the input had to be clamped.
    #[inline]
    pub fn inverse(&self, y: f64) -> (f64, bool) {
        let eps = self.clamp_eps;
        match self.kind {
            ActivationKind::Identity => (y, false),
            ActivationKind::Tanh => {
                let c = y.clamp(-1.0 + eps, 1.0 - eps);
                (c.atanh(), c != y)
            }
            ActivationKind::Sigmoid => {
                let c = y.clamp(eps, 1.0 - eps);
                ((c / (1.0 - c)).ln(), c != y)
            }
        }
    }

    pub fn apply(&self, m: &Mat) -> Mat {
        m.map(|v| self.forward(v))
    }

    /// Elementwise inverse; returns the number of clamped entries alongside.
    pub fn apply_inverse(&self, m: &Mat) -> (Mat, usize) {
        let mut clamped = 0;
        let out = m.map(|v| {
            let (x, hit) = self.inverse(v);
            clamped += hit as usize;
            x
        });
        (out, clamped)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn forward_reference_points() {
        let m = Mat::from_row_slice(2, 2, &[0.0, 1.5, -2.0, 7.0]);
        assert_eq!(Activation::identity().apply(&m), m);
        assert_eq!(Activation::new(ActivationKind::Tanh).forward(0.0), 0.0);
        assert_eq!(Activation::new(ActivationKind::Sigmoid).forward(0.0), 0.5);
    }

    #[test]
    fn inverse_round_trip_and_clamp() {
        let tanh = Activation::new(ActivationKind::Tanh);
        let (back, hit) = tanh.inverse(tanh.forward(0.5));
        assert!((back - 0.5).abs() < 1e-12);
        assert!(!hit);

        let (x, hit) = tanh.inverse(1.0);
        assert!(hit);
        assert!(x.is_finite());
        assert_eq!(x, (1.0 - DEFAULT_CLAMP_EPS).atanh());

        let m = Mat::from_row_slice(1, 4, &[2.0, -3.0, 0.2, 0.9]);
        let (_, count) = tanh.apply_inverse(&m);
        assert_eq!(count, 2);

        let (same, count) = Activation::identity().apply_inverse(&m);
        assert_eq!(same, m);
        assert_eq!(count, 0);

        let sig = Activation::new(ActivationKind::Sigmoid);
        let (x, hit) = sig.inverse(0.0);
        assert!(hit && x.is_finite() && x < 0.0);
    }

    #[test]
    fn clamp_eps_range_checked() {
        assert!(Activation::with_clamp_eps(ActivationKind::Tanh, 0.0).is_err());
        assert!(Activation::with_clamp_eps(ActivationKind::Tanh, 0.2).is_err());
        assert!(Activation::with_clamp_eps(ActivationKind::Tanh, 1e-3).is_ok());
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("TANH".parse::<ActivationKind>().unwrap(), ActivationKind::Tanh);
        assert!("relu".parse::<ActivationKind>().is_err());
        for k in [ActivationKind::Identity, ActivationKind::Tanh, ActivationKind::Sigmoid] {
            assert_eq!(ActivationKind::from_code(k.code()), Some(k));
            assert_eq!(k.to_string().parse::<ActivationKind>().unwrap(), k);
        }
    }

    fn kinds() -> impl Strategy<Value = ActivationKind> {
        prop_oneof![
            Just(ActivationKind::Identity),
            Just(ActivationKind::Tanh),
            Just(ActivationKind::Sigmoid),
        ]
    }

    proptest! {
        #[test]
        fn round_trip_inside_safe_range(kind in kinds(), x in -5f64..5.0) {
            let a = Activation::new(kind);
            let (back, hit) = a.inverse(a.forward(x));
            prop_assert!(!hit);
            prop_assert!((back - x).abs() < 1e-10, "{} vs {}", back, x);
        }

        #[test]
        fn strictly_increasing(kind in kinds(), x in -8f64..8.0, dx in 1e-3f64..1.0) {
            let a = Activation::new(kind);
            prop_assert!(a.forward(x + dx) > a.forward(x));
        }
    }
}
