//! Positivity-augmented activations: zero on `(-inf, 0]`, positive on
//! `(0, inf)`. Any such function selects the same leaf.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};

type ActivationFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied activation that passed the probe-grid check.
#[derive(Clone)]
pub struct CustomActivation {
    name: String,
    f: ActivationFn,
}

impl CustomActivation {
    pub fn name(&self) -> &str {
        &self.name
    }
}

impl fmt::Debug for CustomActivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomActivation")
            .field("name", &self.name)
            .finish()
    }
}

impl PartialEq for CustomActivation {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && Arc::ptr_eq(&self.f, &other.f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Activation {
    /// 1 for positive input, 0 otherwise.
    BinarizedRelu,
    Relu,
    /// `alpha * max(0, x)` with `alpha > 0`.
    ScaledRelu(f64),
    /// `max(0, x)^2`.
    RectifiedQuadratic,
    Custom(CustomActivation),
}

impl Activation {
    pub fn scaled_relu(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!(
                "scaled-relu needs a finite alpha > 0, got {alpha}"
            )));
        }
        Ok(Activation::ScaledRelu(alpha))
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        if x <= 0.0 || x.is_nan() {
            return 0.0;
        }
        match self {
            Activation::BinarizedRelu => 1.0,
            Activation::Relu => x,
            Activation::ScaledRelu(alpha) => alpha * x,
            Activation::RectifiedQuadratic => x * x,
            Activation::Custom(c) => (c.f)(x),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Activation::BinarizedRelu => "binarized-relu".into(),
            Activation::Relu => "relu".into(),
            Activation::ScaledRelu(alpha) => format!("scaled-relu({alpha})"),
            Activation::RectifiedQuadratic => "rectified-quadratic".into(),
            Activation::Custom(c) => c.name.clone(),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    /// Parses the built-in names; `scaled-relu(3.5)` carries its factor.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "binarized-relu" => Ok(Activation::BinarizedRelu),
            "relu" => Ok(Activation::Relu),
            "rectified-quadratic" => Ok(Activation::RectifiedQuadratic),
            other => {
                let alpha = other
                    .strip_prefix("scaled-relu(")
                    .and_then(|rest| rest.strip_suffix(')'))
                    .ok_or_else(|| Error::Config(format!("unknown activation `{other}`")))?;
                let alpha: f64 = alpha.trim().parse().map_err(|_| {
                    Error::Config(format!("scaled-relu factor `{alpha}` is not a number"))
                })?;
                Activation::scaled_relu(alpha)
            }
        }
    }
}

/// Probe inputs used to check the positivity contract at registration.
fn probe_grid() -> Vec<f64> {
    let mut grid = vec![0.0, -0.0, f64::MIN_POSITIVE, -f64::MIN_POSITIVE];
    for e in -12..=12 {
        let m = 10f64.powi(e);
        grid.extend([m, -m, 0.5 * m, -0.5 * m]);
    }
    grid.extend([f64::MAX / 4.0, -f64::MAX / 4.0]);
    grid
}

/// Named activations, built-ins plus registered custom functions.
#[derive(Debug, Clone, Default)]
pub struct ActivationRegistry {
    custom: BTreeMap<String, CustomActivation>,
}

impl ActivationRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `f` under `name` after checking on a probe grid that it is
    /// zero on non-positive inputs and positive on positive ones.
    pub fn register<F>(&mut self, name: &str, f: F) -> Result<Activation>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if name.parse::<Activation>().is_ok() {
            return Err(Error::Config(format!("`{name}` is a built-in activation")));
        }
        for x in probe_grid() {
            let y = f(x);
            let ok = if x > 0.0 {
                y > 0.0 && y.is_finite()
            } else {
                y == 0.0
            };
            if !ok {
                return Err(Error::Config(format!(
                    "activation `{name}` gives {y} at {x}; expected 0 for x <= 0 and a positive finite value for x > 0"
                )));
            }
        }
        let act = CustomActivation {
            name: name.to_string(),
            f: Arc::new(f),
        };
        self.custom.insert(name.to_string(), act.clone());
        Ok(Activation::Custom(act))
    }

    pub fn get(&self, name: &str) -> Result<Activation> {
        match self.custom.get(name) {
            Some(c) => Ok(Activation::Custom(c.clone())),
            None => name.parse(),
        }
    }

    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = [
            "binarized-relu",
            "relu",
            "scaled-relu(<alpha>)",
            "rectified-quadratic",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        names.extend(self.custom.keys().cloned());
        names
    }
}
