//! IEEE 754 binary32 bit manipulation.
//!
//! Layout: bit 31 is the sign, bits 30..=23 the biased exponent, bits
//! 22..=0 the fraction. Exponent 255 encodes Inf (zero fraction) or NaN.

use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub const SIGN_BIT: u32 = 31;
pub const EXPONENT_MASK: u32 = 0x7F80_0000;
pub const FRACTION_MASK: u32 = 0x007F_FFFF;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    ZeroToOne,
    OneToZero,
    Both,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::ZeroToOne => "zero_to_one",
            Direction::OneToZero => "one_to_zero",
            Direction::Both => "both",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignFilter {
    Positive,
    Negative,
    Both,
}

impl SignFilter {
    /// Uses the raw sign bit, so `+0.0` is positive and `-0.0` negative.
    pub fn accepts(self, value: f32) -> bool {
        let negative = value.to_bits() >> SIGN_BIT == 1;
        match self {
            SignFilter::Positive => !negative,
            SignFilter::Negative => negative,
            SignFilter::Both => true,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SignFilter::Positive => "positive",
            SignFilter::Negative => "negative",
            SignFilter::Both => "both",
        }
    }
}

/// Which bit a flip targets. Serialized as an integer or `"random"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BitSelector {
    Fixed(u8),
    Random,
}

impl BitSelector {
    pub fn fixed(position: u8) -> Option<Self> {
        (position < 32).then_some(BitSelector::Fixed(position))
    }

    pub fn label(self) -> String {
        match self {
            BitSelector::Fixed(b) => b.to_string(),
            BitSelector::Random => "random".to_string(),
        }
    }
}

impl Serialize for BitSelector {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            BitSelector::Fixed(b) => s.serialize_u8(*b),
            BitSelector::Random => s.serialize_str("random"),
        }
    }
}

impl<'de> Deserialize<'de> for BitSelector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct BitVisitor;

        impl Visitor<'_> for BitVisitor {
            type Value = BitSelector;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a bit position in 0..=31 or \"random\"")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<BitSelector, E> {
                u8::try_from(v)
                    .ok()
                    .and_then(BitSelector::fixed)
                    .ok_or_else(|| E::custom(format!("bit position {v} outside 0..=31")))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<BitSelector, E> {
                u64::try_from(v)
                    .map_err(|_| E::custom(format!("bit position {v} outside 0..=31")))
                    .and_then(|v| self.visit_u64(v))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<BitSelector, E> {
                if v == "random" {
                    Ok(BitSelector::Random)
                } else {
                    v.parse::<u64>()
                        .map_err(|_| E::custom(format!("unknown bit selector {v:?}")))
                        .and_then(|v| self.visit_u64(v))
                }
            }
        }

        d.deserialize_any(BitVisitor)
    }
}

/// Flips `bit` of `value` if its current state matches `direction`.
///
/// Returns the new value and whether the flip was masked, i.e. the bit was
/// already in the target state and the value is unchanged.
pub fn flip_bit(value: f32, bit: u32, direction: Direction) -> (f32, bool) {
    assert!(bit < 32, "bit position {bit} outside 0..=31");
    let bits = value.to_bits();
    let set = (bits >> bit) & 1 == 1;
    let applies = match direction {
        Direction::ZeroToOne => !set,
        Direction::OneToZero => set,
        Direction::Both => true,
    };
    if applies {
        (f32::from_bits(bits ^ (1 << bit)), false)
    } else {
        (value, true)
    }
}

pub fn exponent_field(value: f32) -> u32 {
    (value.to_bits() & EXPONENT_MASK) >> 23
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn exponent_msb_turns_one_into_infinity() {
        let (v, masked) = flip_bit(1.0, 30, Direction::ZeroToOne);
        assert_eq!(v, f32::INFINITY);
        assert!(!masked);
    }

    #[test]
    fn clearing_top_fraction_bit() {
        assert_eq!(1.5f32.to_bits(), 0x3FC0_0000);
        let (v, masked) = flip_bit(1.5, 22, Direction::OneToZero);
        assert_eq!(v, 1.0);
        assert!(!masked);
    }

    #[test]
    fn sign_flip() {
        assert_eq!(flip_bit(1.0, 31, Direction::Both), (-1.0, false));
    }

    #[test]
    fn direction_mismatch_is_masked() {
        let (v, masked) = flip_bit(1.0, 5, Direction::OneToZero);
        assert_eq!(v.to_bits(), 1.0f32.to_bits());
        assert!(masked);
    }

    #[test]
    fn sign_filter_on_zeros() {
        assert!(SignFilter::Positive.accepts(0.0));
        assert!(!SignFilter::Negative.accepts(0.0));
        assert!(SignFilter::Negative.accepts(-0.0));
        assert!(SignFilter::Both.accepts(f32::NAN));
    }

    #[test]
    fn bit_selector_serde() {
        let b: BitSelector = serde_json::from_str("30").unwrap();
        assert_eq!(b, BitSelector::Fixed(30));
        let r: BitSelector = serde_json::from_str("\"random\"").unwrap();
        assert_eq!(r, BitSelector::Random);
        assert!(serde_json::from_str::<BitSelector>("32").is_err());
        assert!(serde_json::from_str::<BitSelector>("-1").is_err());
        assert_eq!(serde_json::to_string(&BitSelector::Fixed(7)).unwrap(), "7");
    }

    proptest! {
        #[test]
        fn double_flip_restores(bits in any::<u32>(), pos in 0u32..32) {
            let v = f32::from_bits(bits);
            let (once, _) = flip_bit(v, pos, Direction::Both);
            let (twice, _) = flip_bit(once, pos, Direction::Both);
            prop_assert_eq!(twice.to_bits(), bits);
        }

        #[test]
        fn directed_flip_only_changes_one_bit(bits in any::<u32>(), pos in 0u32..32) {
            let v = f32::from_bits(bits);
            for dir in [Direction::ZeroToOne, Direction::OneToZero] {
                let (out, masked) = flip_bit(v, pos, dir);
                let diff = out.to_bits() ^ bits;
                if masked {
                    prop_assert_eq!(diff, 0);
                } else {
                    prop_assert_eq!(diff, 1 << pos);
                    let now_set = (out.to_bits() >> pos) & 1 == 1;
                    prop_assert_eq!(now_set, dir == Direction::ZeroToOne);
                }
            }
        }

        #[test]
        fn all_ones_exponent_iff_non_finite(bits in any::<u32>(), pos in 0u32..32) {
            let (out, _) = flip_bit(f32::from_bits(bits), pos, Direction::Both);
            prop_assert_eq!(exponent_field(out) == 255, !out.is_finite());
        }
    }
}
