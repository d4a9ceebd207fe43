//! polyClip activations, ReLU, and weight discretisation.
//!
//! `polyClip(x, k) = clip(x^(2k+1), -1, 1)`. The odd exponent keeps the
//! function symmetric about the origin, and its saturation values `±1` read as
//! True/False once weights are discretised to `{-1, 0, 1}`.

use core::fmt;

use crate::error::{Error, Result};

/// Largest polyClip exponent parameter accepted by configuration validation.
pub const MAX_POLY_CLIP_K: u32 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum ActivationKind {
    PolyClip { k: u32 },
    Relu,
}

impl Default for ActivationKind {
    fn default() -> Self {
        ActivationKind::PolyClip { k: 1 }
    }
}

impl ActivationKind {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            ActivationKind::PolyClip { k } => poly_clip(x, k),
            ActivationKind::Relu => relu(x),
        }
    }

    #[inline]
    pub fn grad(self, x: f64) -> f64 {
        match self {
            ActivationKind::PolyClip { k } => poly_clip_grad(x, k),
            ActivationKind::Relu => relu_grad(x),
        }
    }

    pub fn validate(self) -> Result<()> {
        match self {
            ActivationKind::PolyClip { k } if k > MAX_POLY_CLIP_K => Err(Error::Config(
                alloc::format!("polyClip k = {k} exceeds the maximum of {MAX_POLY_CLIP_K}"),
            )),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActivationKind::PolyClip { k } => write!(f, "polyclip(k={k})"),
            ActivationKind::Relu => f.write_str("relu"),
        }
    }
}

/// `x^n` by repeated squaring.
#[inline]
fn ipow(mut x: f64, mut n: u32) -> f64 {
    let mut acc = 1.0;
    while n > 0 {
        if n & 1 == 1 {
            acc *= x;
        }
        x *= x;
        n >>= 1;
    }
    acc
}

#[inline]
pub fn poly_clip(x: f64, k: u32) -> f64 {
    if x <= -1.0 {
        -1.0
    } else if x >= 1.0 {
        1.0
    } else if k == 0 {
        x
    } else {
        ipow(x, 2 * k + 1)
    }
}

/// Derivative of [`poly_clip`]; zero on the flat region and at `|x| = 1`.
#[inline]
pub fn poly_clip_grad(x: f64, k: u32) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else if k == 0 {
        1.0
    } else {
        f64::from(2 * k + 1) * ipow(x, 2 * k)
    }
}

#[inline]
pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

#[inline]
pub fn relu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// `round(clip(x, -1, 1))`, rounding halves away from zero.
#[inline]
pub fn discretize(x: f64) -> i8 {
    let clipped = x.clamp(-1.0, 1.0);
    if clipped >= 0.5 {
        1
    } else if clipped <= -0.5 {
        -1
    } else {
        0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poly_clip_examples() {
        for k in 0..5 {
            assert_eq!(poly_clip(2.0, k), 1.0);
            assert_eq!(poly_clip(-2.0, k), -1.0);
        }
        assert_eq!(poly_clip(0.5, 0), 0.5);
        assert_eq!(poly_clip(-0.5, 1), -0.125);
    }

    #[test]
    fn poly_clip_grad_examples() {
        assert_eq!(poly_clip_grad(0.5, 0), 1.0);
        assert_eq!(poly_clip_grad(3.0, 2), 0.0);
        assert_eq!(poly_clip_grad(0.5, 1), 0.75);
        assert_eq!(poly_clip_grad(1.0, 1), 0.0);
        assert_eq!(poly_clip_grad(-1.0, 0), 0.0);
    }

    #[test]
    fn relu_examples() {
        assert_eq!(relu(-2.0), 0.0);
        assert_eq!(relu(3.0), 3.0);
        assert_eq!(relu_grad(0.1), 1.0);
        assert_eq!(relu_grad(0.0), 0.0);
    }

    #[test]
    fn discretize_examples() {
        assert_eq!(discretize(0.7), 1);
        assert_eq!(discretize(-0.2), 0);
        assert_eq!(discretize(-5.0), -1);
        assert_eq!(discretize(0.5), 1);
        assert_eq!(discretize(-0.5), -1);
        assert_eq!(discretize(0.4999), 0);
    }

    #[test]
    fn k_limit_is_validated() {
        assert!(ActivationKind::PolyClip { k: 16 }.validate().is_ok());
        assert!(matches!(
            ActivationKind::PolyClip { k: 17 }.validate(),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn product_of_signs_is_xnor() {
        let truth = |v: i8| v == 1;
        for a in [-1i8, 1] {
            for b in [-1i8, 1] {
                let xnor = truth(a) == truth(b);
                assert_eq!(truth(a * b), xnor, "a={a} b={b}");
            }
        }
    }
}
