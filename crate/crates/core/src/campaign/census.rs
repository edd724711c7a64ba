//! Per-bit-position counts of set bits across a model's parameters.

use std::io::Write;

use super::rows::csv_writer;
use crate::error::Result;
use crate::model::ModelState;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitCensus {
    /// `weights[b]`: number of weights with bit `b` set.
    pub weights: [u64; 32],
    pub biases: [u64; 32],
    pub n_weights: u64,
    pub n_biases: u64,
}

impl BitCensus {
    pub fn total(&self, bit: usize) -> u64 {
        self.weights[bit] + self.biases[bit]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv_writer(out);
        w.write_record(["bit", "weights", "biases"])?;
        for b in 0..32 {
            w.write_record([b.to_string(), self.weights[b].to_string(), self.biases[b].to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn count_bits(values: &[f32], counts: &mut [u64; 32]) {
    for v in values {
        let mut bits = v.to_bits();
        while bits != 0 {
            counts[bits.trailing_zeros() as usize] += 1;
            bits &= bits - 1;
        }
    }
}

pub fn bit_census(model: &ModelState) -> BitCensus {
    let mut census = BitCensus { weights: [0; 32], biases: [0; 32], n_weights: 0, n_biases: 0 };
    for (_, layer) in model.fc_layers() {
        count_bits(layer.weights.as_slice(), &mut census.weights);
        count_bits(&layer.bias, &mut census.biases);
        census.n_weights += layer.weights.as_slice().len() as u64;
        census.n_biases += layer.bias.len() as u64;
    }
    census
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelDefinition;
    use crate::rng::derive_stream;

    #[test]
    fn counts_match_naive_scan() {
        let values = [1.0f32, -2.5, 0.0, f32::MIN_POSITIVE, 3.0e-40];
        let mut counts = [0; 32];
        count_bits(&values, &mut counts);
        for (b, &c) in counts.iter().enumerate() {
            let naive = values.iter().filter(|v| v.to_bits() >> b & 1 == 1).count() as u64;
            assert_eq!(c, naive, "bit {b}");
        }
    }

    #[test]
    fn census_covers_every_parameter() {
        let model = ModelState::random_init(ModelDefinition::new(6, 4, 3, 8), &mut derive_stream(3, &[])).unwrap();
        let c = bit_census(&model);
        assert_eq!(c.n_weights as usize, model.weight_count());
        assert_eq!(c.n_biases as usize, model.bias_count());
        // Small initial values never reach exponent bit 30.
        assert_eq!(c.total(30), 0);
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 33);
        assert!(text.starts_with("bit,weights,biases\n0,"));
    }
}
