//! Fault models and the name-keyed registry that builds them.
//!
//! A [`FaultSpec`] is the serializable description found in configs and
//! plans; the [`FaultRegistry`] turns it into a boxed [`FaultModel`] by
//! looking up `spec.kind`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::bits::{flip_bit, BitSelector, Direction, SignFilter};
use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// Result of corrupting one value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corruption {
    pub value: f32,
    pub bit: Option<u8>,
}

pub trait FaultModel: Send + Sync + fmt::Debug {
    /// Registry name, e.g. `"bitflip"`.
    fn kind(&self) -> &'static str;

    /// Which values may be selected as targets at all.
    fn sign_filter(&self) -> SignFilter {
        SignFilter::Both
    }

    fn corrupt(&self, value: f32, stream: &mut RandomStream) -> Corruption;

    fn spec(&self) -> FaultSpec;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Zeros;

impl FaultModel for Zeros {
    fn kind(&self) -> &'static str {
        "zeros"
    }

    fn corrupt(&self, _: f32, _: &mut RandomStream) -> Corruption {
        Corruption { value: 0.0, bit: None }
    }

    fn spec(&self) -> FaultSpec {
        FaultSpec::zeros()
    }
}

/// Gaussian corruption. Replaces the value with a draw by default; with
/// `additive` the draw is added to the stored value instead.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian {
    pub mean: f32,
    pub std: f32,
    pub additive: bool,
}

impl FaultModel for Gaussian {
    fn kind(&self) -> &'static str {
        "random"
    }

    fn corrupt(&self, value: f32, stream: &mut RandomStream) -> Corruption {
        let draw = stream.gaussian_f32(self.mean, self.std);
        let value = if self.additive { value + draw } else { draw };
        Corruption { value, bit: None }
    }

    fn spec(&self) -> FaultSpec {
        FaultSpec { additive: Some(self.additive), ..FaultSpec::random(self.mean, self.std) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BitFlip {
    pub bit: BitSelector,
    pub direction: Direction,
    pub sign: SignFilter,
}

impl FaultModel for BitFlip {
    fn kind(&self) -> &'static str {
        "bitflip"
    }

    fn sign_filter(&self) -> SignFilter {
        self.sign
    }

    fn corrupt(&self, value: f32, stream: &mut RandomStream) -> Corruption {
        let bit = match self.bit {
            BitSelector::Fixed(b) => b,
            BitSelector::Random => stream.below(32) as u8,
        };
        let (value, _) = flip_bit(value, bit as u32, self.direction);
        Corruption { value, bit: Some(bit) }
    }

    fn spec(&self) -> FaultSpec {
        FaultSpec::bitflip(self.bit, self.direction, self.sign)
    }
}

/// Serializable fault description. Only the fields relevant to `kind` may
/// be present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std: Option<f32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub additive: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bit: Option<BitSelector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sign: Option<SignFilter>,
}

impl FaultSpec {
    fn bare(kind: &str) -> Self {
        Self { kind: kind.to_string(), mean: None, std: None, additive: None, bit: None, direction: None, sign: None }
    }

    pub fn zeros() -> Self {
        Self::bare("zeros")
    }

    pub fn random(mean: f32, std: f32) -> Self {
        Self { mean: Some(mean), std: Some(std), ..Self::bare("random") }
    }

    pub fn bitflip(bit: BitSelector, direction: Direction, sign: SignFilter) -> Self {
        Self { bit: Some(bit), direction: Some(direction), sign: Some(sign), ..Self::bare("bitflip") }
    }

    /// Compact, stable text used inside config ids.
    pub fn label(&self) -> String {
        let mut s = self.kind.clone();
        if let Some(m) = self.mean {
            s.push_str(&format!(":mean={m}"));
        }
        if let Some(sd) = self.std {
            s.push_str(&format!(":std={sd}"));
        }
        if self.additive == Some(true) {
            s.push_str(":additive");
        }
        if let Some(b) = self.bit {
            s.push_str(&format!(":bit={}", b.label()));
        }
        if let Some(d) = self.direction {
            s.push_str(&format!(":dir={}", d.name()));
        }
        if let Some(g) = self.sign {
            s.push_str(&format!(":sign={}", g.name()));
        }
        s
    }

    fn reject_fields(&self, fields: &[(&str, bool)]) -> Result<()> {
        let extra: Vec<&str> = fields.iter().filter(|(_, present)| *present).map(|(n, _)| *n).collect();
        if extra.is_empty() {
            Ok(())
        } else {
            Err(Error::config(format!("fault kind {:?} does not take {}", self.kind, extra.join(", "))))
        }
    }
}

pub type FaultFactory = fn(&FaultSpec) -> Result<Box<dyn FaultModel>>;

fn build_zeros(spec: &FaultSpec) -> Result<Box<dyn FaultModel>> {
    spec.reject_fields(&[
        ("mean", spec.mean.is_some()),
        ("std", spec.std.is_some()),
        ("additive", spec.additive.is_some()),
        ("bit", spec.bit.is_some()),
        ("direction", spec.direction.is_some()),
        ("sign", spec.sign.is_some()),
    ])?;
    Ok(Box::new(Zeros))
}

fn build_random(spec: &FaultSpec) -> Result<Box<dyn FaultModel>> {
    spec.reject_fields(&[
        ("bit", spec.bit.is_some()),
        ("direction", spec.direction.is_some()),
        ("sign", spec.sign.is_some()),
    ])?;
    let mean = spec.mean.unwrap_or(0.0);
    let std = spec.std.unwrap_or(1.0);
    if !mean.is_finite() || !std.is_finite() || std <= 0.0 {
        return Err(Error::config(format!("random fault needs finite mean and std > 0 (got {mean}, {std})")));
    }
    Ok(Box::new(Gaussian { mean, std, additive: spec.additive.unwrap_or(false) }))
}

fn build_bitflip(spec: &FaultSpec) -> Result<Box<dyn FaultModel>> {
    spec.reject_fields(&[
        ("mean", spec.mean.is_some()),
        ("std", spec.std.is_some()),
        ("additive", spec.additive.is_some()),
    ])?;
    Ok(Box::new(BitFlip {
        bit: spec.bit.unwrap_or(BitSelector::Random),
        direction: spec.direction.unwrap_or(Direction::Both),
        sign: spec.sign.unwrap_or(SignFilter::Both),
    }))
}

pub struct FaultRegistry {
    factories: BTreeMap<String, FaultFactory>,
}

impl FaultRegistry {
    pub fn empty() -> Self {
        Self { factories: BTreeMap::new() }
    }

    /// Registers `factory` under `name`, replacing any previous entry.
    pub fn register(&mut self, name: &str, factory: FaultFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn build(&self, spec: &FaultSpec) -> Result<Box<dyn FaultModel>> {
        let factory = self.factories.get(&spec.kind).ok_or_else(|| {
            Error::config(format!("unknown fault kind {:?} (known: {})", spec.kind, self.names().join(", ")))
        })?;
        factory(spec)
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    /// The process-wide registry holding the built-in fault models.
    pub fn builtin() -> &'static FaultRegistry {
        static REGISTRY: OnceLock<FaultRegistry> = OnceLock::new();
        REGISTRY.get_or_init(FaultRegistry::default)
    }
}

impl Default for FaultRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register("zeros", build_zeros);
        r.register("random", build_random);
        r.register("bitflip", build_bitflip);
        r
    }
}

impl fmt::Debug for FaultRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FaultRegistry").field("kinds", &self.names()).finish()
    }
}
