//! Prescribed boundary values: time laws with analytic derivatives and
//! arbitrary space–time fields.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;

/// A scalar space–time field with first and second time derivatives.
pub trait Prescribed: Send + Sync {
    fn value(&self, x: Vec2, t: f64) -> f64;

    fn rate(&self, x: Vec2, t: f64) -> f64 {
        let h = 1e-5 * (1.0 + t.abs());
        (self.value(x, t + h) - self.value(x, t - h)) / (2.0 * h)
    }

    fn accel(&self, x: Vec2, t: f64) -> f64 {
        let h = 1e-4 * (1.0 + t.abs());
        (self.value(x, t + h) - 2.0 * self.value(x, t) + self.value(x, t - h)) / (h * h)
    }
}

/// Spatially uniform time law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeLaw {
    Constant {
        value: f64,
    },
    /// amplitude · ½(1 − cos(ω t)) up to `t_end`, frozen afterwards.
    CosineRamp {
        amplitude: f64,
        omega: f64,
        t_end: f64,
    },
    /// offset + amplitude · sin(ω (t − t0)).
    Sine {
        offset: f64,
        amplitude: f64,
        omega: f64,
        t0: f64,
    },
}

impl TimeLaw {
    pub fn zero() -> Self {
        TimeLaw::Constant { value: 0.0 }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            TimeLaw::Constant { value } => value,
            TimeLaw::CosineRamp {
                amplitude,
                omega,
                t_end,
            } => amplitude * 0.5 * (1.0 - (omega * t.min(t_end)).cos()),
            TimeLaw::Sine {
                offset,
                amplitude,
                omega,
                t0,
            } => offset + amplitude * (omega * (t - t0)).sin(),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            TimeLaw::Constant { .. } => 0.0,
            TimeLaw::CosineRamp {
                amplitude,
                omega,
                t_end,
            } => {
                if t < t_end {
                    amplitude * 0.5 * omega * (omega * t).sin()
                } else {
                    0.0
                }
            }
            TimeLaw::Sine {
                amplitude,
                omega,
                t0,
                ..
            } => amplitude * omega * (omega * (t - t0)).cos(),
        }
    }

    pub fn second_derivative(&self, t: f64) -> f64 {
        match *self {
            TimeLaw::Constant { .. } => 0.0,
            TimeLaw::CosineRamp {
                amplitude,
                omega,
                t_end,
            } => {
                if t < t_end {
                    amplitude * 0.5 * omega * omega * (omega * t).cos()
                } else {
                    0.0
                }
            }
            TimeLaw::Sine {
                amplitude,
                omega,
                t0,
                ..
            } => -amplitude * omega * omega * (omega * (t - t0)).sin(),
        }
    }

    /// ½(1 + sin(πt − π/2)) ramp reaching `amplitude` at `t_end` (odd integer).
    pub fn half_sine_ramp(amplitude: f64, t_end: f64) -> Self {
        TimeLaw::CosineRamp {
            amplitude,
            omega: PI,
            t_end,
        }
    }
}

impl Prescribed for TimeLaw {
    fn value(&self, _x: Vec2, t: f64) -> f64 {
        self.eval(t)
    }

    fn rate(&self, _x: Vec2, t: f64) -> f64 {
        self.derivative(t)
    }

    fn accel(&self, _x: Vec2, t: f64) -> f64 {
        self.second_derivative(t)
    }
}

/// Closure-backed field; derivatives by central differences.
pub struct FnField<F>(pub F);

impl<F: Fn(Vec2, f64) -> f64 + Send + Sync> Prescribed for FnField<F> {
    fn value(&self, x: Vec2, t: f64) -> f64 {
        (self.0)(x, t)
    }
}

#[derive(Clone)]
pub struct Field(pub Arc<dyn Prescribed>);

impl Field {
    pub fn law(law: TimeLaw) -> Self {
        Field(Arc::new(law))
    }

    pub fn constant(value: f64) -> Self {
        Field::law(TimeLaw::Constant { value })
    }

    pub fn from_fn<F: Fn(Vec2, f64) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        Field(Arc::new(FnField(f)))
    }
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Field")
    }
}

/// Which mesh a fluid condition refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluidMesh {
    Background,
    Patch,
}

/// Strong condition on one fluid component (0, 1 velocity, 2 pressure) at a node set.
#[derive(Debug, Clone)]
pub struct FluidDirichlet {
    pub mesh: FluidMesh,
    pub nodes: Vec<usize>,
    pub component: usize,
    pub value: Field,
}

/// Strong condition on one solid displacement component at a node set;
/// `value` is the displacement from the reference position.
#[derive(Debug, Clone)]
pub struct SolidDirichlet {
    pub nodes: Vec<usize>,
    pub component: usize,
    pub value: Field,
}
