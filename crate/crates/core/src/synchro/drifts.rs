//! Built-in componentwise drift fields with analytic constants.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sde::DriftField;

/// Named drift with parameters, as referenced from configuration files.
///
/// The textual form is `name(key=value, ...)`, e.g. `tanh(gain=2, center=0.5)`.
/// Omitted parameters take their defaults.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum DriftKind {
    /// `-rate · x`
    Linear { rate: f64 },
    /// `-gain · tanh(x - center)`; bounded with bounded gradient.
    Tanh { gain: f64, center: f64 },
    /// `linear · x - cubic · x³`; only locally Lipschitz.
    Cubic { linear: f64, cubic: f64 },
    /// `value`
    Constant { value: f64 },
}

pub struct DriftInfo {
    pub name: &'static str,
    pub formula: &'static str,
    pub params: &'static [(&'static str, f64)],
}

const CATALOG: &[DriftInfo] = &[
    DriftInfo {
        name: "linear",
        formula: "-rate*x",
        params: &[("rate", 1.0)],
    },
    DriftInfo {
        name: "tanh",
        formula: "-gain*tanh(x - center)",
        params: &[("gain", 1.0), ("center", 0.0)],
    },
    DriftInfo {
        name: "cubic",
        formula: "linear*x - cubic*x^3",
        params: &[("linear", 1.0), ("cubic", 1.0)],
    },
    DriftInfo {
        name: "constant",
        formula: "value",
        params: &[("value", 0.0)],
    },
];

impl DriftKind {
    pub fn catalog() -> &'static [DriftInfo] {
        CATALOG
    }

    pub fn name(&self) -> &'static str {
        match self {
            DriftKind::Linear { .. } => "linear",
            DriftKind::Tanh { .. } => "tanh",
            DriftKind::Cubic { .. } => "cubic",
            DriftKind::Constant { .. } => "constant",
        }
    }

    fn params(&self) -> Vec<(&'static str, f64)> {
        match *self {
            DriftKind::Linear { rate } => vec![("rate", rate)],
            DriftKind::Tanh { gain, center } => vec![("gain", gain), ("center", center)],
            DriftKind::Cubic { linear, cubic } => vec![("linear", linear), ("cubic", cubic)],
            DriftKind::Constant { value } => vec![("value", value)],
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        let (name, args) = match text.find('(') {
            Some(i) => {
                let rest = text[i + 1..]
                    .strip_suffix(')')
                    .ok_or_else(|| Error::Domain(format!("unbalanced parenthesis in '{text}'")))?;
                (text[..i].trim(), rest)
            }
            None => (text, ""),
        };
        let info = CATALOG
            .iter()
            .find(|d| d.name == name)
            .ok_or_else(|| Error::Domain(format!("unknown drift '{name}'")))?;
        let mut values: Vec<f64> = info.params.iter().map(|(_, v)| *v).collect();
        for arg in args.split(',').map(str::trim).filter(|a| !a.is_empty()) {
            let (key, value) = arg
                .split_once('=')
                .ok_or_else(|| Error::Domain(format!("expected key=value, got '{arg}'")))?;
            let key = key.trim();
            let idx = info
                .params
                .iter()
                .position(|(k, _)| *k == key)
                .ok_or_else(|| Error::Domain(format!("drift '{name}' has no parameter '{key}'")))?;
            values[idx] = value
                .trim()
                .parse()
                .map_err(|_| Error::Domain(format!("parameter '{key}' is not a number: '{value}'")))?;
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite parameter in '{text}'")));
        }
        Ok(match name {
            "linear" => DriftKind::Linear { rate: values[0] },
            "tanh" => DriftKind::Tanh {
                gain: values[0],
                center: values[1],
            },
            "cubic" => DriftKind::Cubic {
                linear: values[0],
                cubic: values[1],
            },
            _ => DriftKind::Constant { value: values[0] },
        })
    }

    pub fn build(&self, dim: usize) -> Arc<dyn DriftField> {
        Arc::new(Componentwise { dim, kind: *self })
    }

    /// Global Lipschitz constant, when one exists.
    pub fn lipschitz(&self) -> Option<f64> {
        match *self {
            DriftKind::Linear { rate } => Some(rate.abs()),
            DriftKind::Tanh { gain, .. } => Some(gain.abs()),
            DriftKind::Cubic { cubic, linear } => (cubic == 0.0).then_some(linear.abs()),
            DriftKind::Constant { .. } => Some(0.0),
        }
    }

    /// `sup |f|`, when finite.
    pub fn sup_norm(&self) -> Option<f64> {
        match *self {
            DriftKind::Linear { rate } => (rate == 0.0).then_some(0.0),
            DriftKind::Tanh { gain, .. } => Some(gain.abs()),
            DriftKind::Cubic { linear, cubic } => (linear == 0.0 && cubic == 0.0).then_some(0.0),
            DriftKind::Constant { value } => Some(value.abs()),
        }
    }

    #[inline]
    fn apply(&self, x: f64) -> f64 {
        match *self {
            DriftKind::Linear { rate } => -rate * x,
            DriftKind::Tanh { gain, center } => -gain * (x - center).tanh(),
            DriftKind::Cubic { linear, cubic } => linear * x - cubic * x * x * x,
            DriftKind::Constant { value } => value,
        }
    }

    fn decay(&self) -> f64 {
        match *self {
            DriftKind::Linear { rate } => rate,
            _ => 0.0,
        }
    }
}

impl fmt::Display for DriftKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let args: Vec<String> = self.params().iter().map(|(k, v)| format!("{k}={v}")).collect();
        write!(f, "{}({})", self.name(), args.join(","))
    }
}

impl std::str::FromStr for DriftKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

struct Componentwise {
    dim: usize,
    kind: DriftKind,
}

impl DriftField for Componentwise {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64], _t: f64, out: &mut [f64]) {
        for (o, &v) in out.iter_mut().zip(x) {
            *o = self.kind.apply(v);
        }
    }

    fn lipschitz(&self) -> Option<f64> {
        self.kind.lipschitz()
    }

    fn linear_decay(&self, out: &mut [f64]) {
        out.fill(self.kind.decay());
    }
}
