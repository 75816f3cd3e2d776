//! Hinge loss with clipping.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Hinge,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSpec {
    #[serde(default = "LossSpec::default_kind")]
    pub kind: LossKind,
    #[serde(default = "LossSpec::default_clip")]
    pub clip_m: f64,
}

impl LossSpec {
    fn default_kind() -> LossKind {
        LossKind::Hinge
    }

    fn default_clip() -> f64 {
        1.0
    }

    pub fn hinge(clip_m: f64) -> Self {
        LossSpec {
            kind: LossKind::Hinge,
            clip_m,
        }
    }

    /// `sup_{t in [-M, M]} loss`.
    pub fn sup(&self) -> f64 {
        1.0 + self.clip_m
    }

    pub fn eval(&self, y: f64, t: f64, clipped: bool) -> f64 {
        if clipped {
            clipped_hinge(y, t, self.clip_m)
        } else {
            hinge(y, t)
        }
    }
}

impl Default for LossSpec {
    fn default() -> Self {
        Self::hinge(1.0)
    }
}

/// `median(-m, t, m)`.
pub fn clip(t: f64, m: f64) -> f64 {
    t.clamp(-m, m)
}

pub fn hinge(y: f64, t: f64) -> f64 {
    (1.0 - y * t).max(0.0)
}

/// `max(1 - y clip(t, M), 0)`.
pub fn clipped_hinge(y: f64, t: f64, m: f64) -> f64 {
    hinge(y, clip(t, m))
}

/// Derivative of [`clipped_hinge`] in `t`; 0 at kinks and outside `(-M, M)`.
pub fn clipped_hinge_slope(y: f64, t: f64, m: f64) -> f64 {
    if t.abs() < m && 1.0 - y * t > 0.0 {
        -y
    } else {
        0.0
    }
}
