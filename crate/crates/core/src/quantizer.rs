//! Uniform mid-rise edge quantizers.
//!
//! An edge carrying `C_e` bits per use over a block of `L` uses gets
//! `floor(2^(L*C_e))` cells of width `2*q_max / levels` spanning
//! `[-q_max, q_max]`. Inputs are clipped to that range and mapped to the
//! midpoint of their cell; a value on a cell boundary belongs to the upper
//! cell, except `+q_max`, which falls in the top cell.

use crate::error::{QncError, Result};
use crate::network::Deployment;

/// Largest `L * C_e` accepted; keeps the level count exact in a `u64` and
/// the cell index exact in an `f64`.
pub const MAX_BITS_PER_BLOCK: u32 = 52;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformQuantizer {
    q_max: f64,
    levels: u64,
    step: f64,
}

impl UniformQuantizer {
    pub fn new(bits: u32, q_max: f64) -> Result<Self> {
        if bits == 0 || bits > MAX_BITS_PER_BLOCK {
            return Err(QncError::InvalidParameters(format!(
                "bits per block must be in 1..={MAX_BITS_PER_BLOCK}, got {bits}"
            )));
        }
        if !(q_max > 0.0 && q_max.is_finite()) {
            return Err(QncError::InvalidParameters(format!("q_max must be positive, got {q_max}")));
        }
        let levels = 1u64 << bits;
        Ok(UniformQuantizer {
            q_max,
            levels,
            step: 2.0 * q_max / levels as f64,
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn levels(&self) -> u64 {
        self.levels
    }

    pub fn q_max(&self) -> f64 {
        self.q_max
    }

    pub fn quantize(&self, value: f64) -> f64 {
        let y = value.clamp(-self.q_max, self.q_max);
        let cell = ((y + self.q_max) / self.step).floor();
        let cell = cell.clamp(0.0, (self.levels - 1) as f64);
        -self.q_max + (cell + 0.5) * self.step
    }
}

/// Per-edge quantizers for one block length.
///
/// A lossless spec (every step zero) passes values through unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizerSpec {
    block_length: u32,
    q_max: f64,
    edges: Vec<Option<UniformQuantizer>>,
}

impl QuantizerSpec {
    pub fn new(d: &Deployment, block_length: u32, q_max: f64) -> Result<Self> {
        Self::from_capacities(&d.capacities(), block_length, q_max)
    }

    pub fn from_capacities(capacities: &[u32], block_length: u32, q_max: f64) -> Result<Self> {
        if block_length == 0 {
            return Err(QncError::InvalidParameters("block length must be >= 1".into()));
        }
        let edges = capacities
            .iter()
            .map(|&c| {
                let bits = c.checked_mul(block_length).ok_or_else(|| {
                    QncError::InvalidParameters("bits per block overflow".into())
                })?;
                UniformQuantizer::new(bits, q_max).map(Some)
            })
            .collect::<Result<_>>()?;
        Ok(QuantizerSpec {
            block_length,
            q_max,
            edges,
        })
    }

    /// Quantizer-free spec: every `Delta_e = 0`.
    pub fn lossless(d: &Deployment, q_max: f64) -> Self {
        QuantizerSpec {
            block_length: 0,
            q_max,
            edges: vec![None; d.num_edges()],
        }
    }

    pub fn block_length(&self) -> u32 {
        self.block_length
    }

    pub fn q_max(&self) -> f64 {
        self.q_max
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edge_quantizer(&self, e: usize) -> Option<&UniformQuantizer> {
        self.edges[e].as_ref()
    }

    /// `Delta_e` for edge `e` (zero when lossless).
    pub fn step(&self, e: usize) -> f64 {
        self.edges[e].map_or(0.0, |q| q.step())
    }

    /// The vector `[Delta_e : e in E]`.
    pub fn steps(&self) -> Vec<f64> {
        (0..self.edges.len()).map(|e| self.step(e)).collect()
    }

    pub fn quantize(&self, e: usize, value: f64) -> f64 {
        match &self.edges[e] {
            Some(q) => q.quantize(value),
            None => value,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_bit_cells() {
        let q = UniformQuantizer::new(1, 10.0).unwrap();
        assert_eq!(q.step(), 10.0);
        assert_eq!(q.quantize(3.0), 5.0);
        assert_eq!(q.quantize(-3.0), -5.0);
        // boundary value 0 goes to the upper cell
        assert_eq!(q.quantize(0.0), 5.0);
        assert_eq!(q.quantize(10.0), 5.0);
        assert_eq!(q.quantize(25.0), 5.0);
    }

    #[test]
    fn twenty_bit_step() {
        let q = UniformQuantizer::new(20, 10.0).unwrap();
        assert!((q.step() - 1.9073486328125e-5).abs() < 1e-18);
        assert_eq!(q.levels(), 1 << 20);
    }

    #[test]
    fn lower_boundary_maps_to_lowest_midpoint() {
        let q = UniformQuantizer::new(4, 10.0).unwrap();
        assert_eq!(q.quantize(-10.0), -10.0 + q.step() / 2.0);
        assert_eq!(q.quantize(10.0), 10.0 - q.step() / 2.0);
    }

    #[test]
    fn bits_out_of_range() {
        assert!(UniformQuantizer::new(0, 10.0).is_err());
        assert!(UniformQuantizer::new(53, 10.0).is_err());
    }

    proptest! {
        #[test]
        fn in_range_noise_is_half_step(bits in 1u32..=40, y in -10.0f64..=10.0) {
            let q = UniformQuantizer::new(bits, 10.0).unwrap();
            let out = q.quantize(y);
            prop_assert!((out - y).abs() <= q.step() / 2.0 * (1.0 + 1e-9));
            prop_assert!(out.abs() < 10.0);
        }
    }
}
