//! `RNVP1` weights file: fixed little-endian header followed by every
//! matrix and bias as little-endian binary32.
//!
//! ```text
//! offset  size  field
//!      0     5  magic "RNVP1"
//!      5     4  input_dim   (u32)
//!      9     4  n_coupling  (u32)
//!     13     4  fc_depth    (u32)
//!     17     4  units       (u32)
//!     21     1  mask scheme (0 = alternating halves)
//!     22     1  threshold present (0 or 1)
//!     23     4  threshold   (f32 bits, zero when absent)
//!     27     -  payload: coupling 0..n, scale net then translation net,
//!               FC 0..depth, weights row-major then bias
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{CouplingLayer, FcLayer, MaskScheme, ModelDefinition, ModelState, NetKind};
use crate::numeric::Matrix;

pub const MAGIC: &[u8; 5] = b"RNVP1";
pub const HEADER_LEN: usize = 27;

/// Number of binary32 values in the payload of a model with `def`.
pub fn payload_values(def: &ModelDefinition) -> usize {
    (0..def.n_coupling).map(|c| def.net_shapes(c).iter().map(|(r, c)| r * c + r).sum::<usize>() * 2).sum()
}

pub fn encode(model: &ModelState) -> Vec<u8> {
    let def = &model.definition;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * payload_values(def));
    out.extend_from_slice(MAGIC);
    for v in [def.input_dim, def.n_coupling, def.fc_depth, def.units] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.push(match def.mask_scheme {
        MaskScheme::AlternatingHalves => 0,
    });
    out.push(model.threshold.is_some() as u8);
    out.extend_from_slice(&model.threshold.map_or(0, f32::to_bits).to_le_bytes());
    for (_, layer) in model.fc_layers() {
        for v in layer.weights.as_slice().iter().chain(&layer.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() < self.pos + n {
            return Err(Error::Load {
                offset: self.bytes.len() as u64,
                reason: format!("truncated while reading {what}"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<(u64, u32)> {
        let at = self.pos as u64;
        let b = self.take(4, what)?;
        Ok((at, u32::from_le_bytes(b.try_into().unwrap())))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let b = self.take(4 * n, what)?;
        Ok(b.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn decode(bytes: &[u8]) -> Result<ModelState> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(MAGIC.len(), "magic")?;
    if magic != MAGIC {
        let reason = if magic.starts_with(b"RNVP") {
            format!("unsupported format version {:?}", magic[4] as char)
        } else {
            "not an RNVP weights file (bad magic)".to_string()
        };
        return Err(Error::Load { offset: 0, reason });
    }
    let mut field = |name: &str| -> Result<usize> {
        let (at, v) = r.u32(name)?;
        if v == 0 || v > 1 << 20 {
            return Err(Error::Load { offset: at, reason: format!("implausible {name} {v}") });
        }
        Ok(v as usize)
    };
    let input_dim = field("input_dim")?;
    let n_coupling = field("n_coupling")?;
    let fc_depth = field("fc_depth")?;
    let units = field("units")?;
    let scheme_at = r.pos as u64;
    let mask_scheme = match r.take(1, "mask scheme")?[0] {
        0 => MaskScheme::AlternatingHalves,
        other => return Err(Error::Load { offset: scheme_at, reason: format!("unknown mask scheme {other}") }),
    };
    let flag_at = r.pos as u64;
    let has_threshold = match r.take(1, "threshold flag")?[0] {
        0 => false,
        1 => true,
        other => return Err(Error::Load { offset: flag_at, reason: format!("bad threshold flag {other}") }),
    };
    let (_, threshold_bits) = r.u32("threshold")?;

    let definition = ModelDefinition { input_dim, n_coupling, fc_depth, units, mask_scheme };
    definition.validate().map_err(|e| Error::Load { offset: 5, reason: e.to_string() })?;

    let expected = HEADER_LEN + 4 * payload_values(&definition);
    if bytes.len() > expected {
        return Err(Error::Load {
            offset: expected as u64,
            reason: format!("header declares {expected} bytes but file has {}", bytes.len()),
        });
    }

    let mut layers = Vec::with_capacity(n_coupling);
    for coupling in 0..n_coupling {
        let shapes = definition.net_shapes(coupling);
        let mut nets = Vec::with_capacity(2);
        for net in [NetKind::Scale, NetKind::Translation] {
            let mut fcs = Vec::with_capacity(fc_depth);
            for (fc, &(rows, cols)) in shapes.iter().enumerate() {
                let what = format!("coupling {coupling} {} fc {fc}", net.name());
                let w = r.f32s(rows * cols, &what)?;
                let bias = r.f32s(rows, &what)?;
                fcs.push(FcLayer {
                    weights: Matrix::new(rows, cols, w)?,
                    bias,
                    activation: definition.activation(net, fc),
                });
            }
            nets.push(fcs);
        }
        let translation_net = nets.pop().unwrap();
        let scale_net = nets.pop().unwrap();
        layers.push(CouplingLayer { mask: definition.mask(coupling), scale_net, translation_net });
    }
    let threshold = has_threshold.then(|| f32::from_bits(threshold_bits));
    ModelState::from_parts(definition, layers, threshold)
}

pub fn save_model(path: impl AsRef<Path>, model: &ModelState) -> Result<()> {
    std::fs::write(path, encode(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelState> {
    decode(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    fn sample() -> ModelState {
        let mut m = ModelState::random_init(ModelDefinition::new(5, 4, 3, 8), &mut derive_stream(8, &[])).unwrap();
        m.threshold = Some(-12.5);
        m
    }

    #[test]
    fn round_trip_is_byte_exact() {
        let m = sample();
        let bytes = encode(&m);
        assert_eq!(bytes.len(), HEADER_LEN + 4 * payload_values(&m.definition));
        let back = decode(&bytes).unwrap();
        assert_eq!(encode(&back), bytes);
        assert_eq!(back.threshold, Some(-12.5));
    }

    #[test]
    fn header_is_little_endian() {
        let bytes = encode(&sample());
        assert_eq!(&bytes[..5], b"RNVP1");
        assert_eq!(&bytes[5..9], &[5, 0, 0, 0]);
        assert_eq!(&bytes[9..13], &[4, 0, 0, 0]);
        assert_eq!(bytes[22], 1);
        assert_eq!(&bytes[23..27], &(-12.5f32).to_bits().to_le_bytes());
    }

    #[test]
    fn truncation_reports_first_missing_offset() {
        let bytes = encode(&sample());
        for cut in [3usize, 20, HEADER_LEN + 10, bytes.len() - 1] {
            match decode(&bytes[..cut]) {
                Err(Error::Load { offset, .. }) => assert_eq!(offset, cut as u64),
                other => panic!("cut at {cut}: {other:?}"),
            }
        }
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = encode(&sample());
        let expected = bytes.len();
        bytes.extend_from_slice(&[0, 0, 0, 0]);
        match decode(&bytes) {
            Err(Error::Load { offset, .. }) => assert_eq!(offset, expected as u64),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn magic_and_version_checked() {
        let mut bytes = encode(&sample());
        bytes[4] = b'2';
        let err = decode(&bytes).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(Error::Load { offset: 0, .. })));
    }

    #[test]
    fn zero_dimension_rejected_at_field_offset() {
        let mut bytes = encode(&sample());
        bytes[13..17].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(decode(&bytes), Err(Error::Load { offset: 13, .. })));
    }
}
