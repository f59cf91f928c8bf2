use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Pointwise nonlinearity of the hidden layers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Silu,
    Tanh,
    Relu,
    Erf,
    Identity,
}

impl Activation {
    pub const ALL: [Activation; 5] = [
        Activation::Silu,
        Activation::Tanh,
        Activation::Relu,
        Activation::Erf,
        Activation::Identity,
    ];

    #[inline]
    pub fn eval(self, z: f64) -> f64 {
        match self {
            Activation::Silu => z * sigmoid(z),
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Erf => libm::erf(z),
            Activation::Identity => z,
        }
    }

    /// First derivative; ReLU uses 0 at the kink.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Silu => {
                let s = sigmoid(z);
                s * (1.0 + z * (1.0 - s))
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Erf => 2.0 / PI.sqrt() * (-z * z).exp(),
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Silu => "silu",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Erf => "erf",
            Activation::Identity => "identity",
        }
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Activation::ALL
            .into_iter()
            .find(|a| a.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::invalid(format!("unknown activation '{s}'")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_match_central_differences() {
        let h = 1e-6;
        for act in Activation::ALL {
            for &z in &[-2.3, -0.4, 0.3, 1.7] {
                let fd = (act.eval(z + h) - act.eval(z - h)) / (2.0 * h);
                assert!((fd - act.derivative(z)).abs() < 1e-8, "{act} at {z}");
            }
        }
    }

    #[test]
    fn parses_names() {
        assert_eq!("TANH".parse::<Activation>().unwrap(), Activation::Tanh);
        assert!("gelu".parse::<Activation>().is_err());
    }
}
