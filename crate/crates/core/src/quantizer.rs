//! Midtread uniform quantizer sized to an edge's bit budget.
//!
//! An edge of capacity `C_e` carrying blocks of `L` channel uses can hold
//! one symbol from an alphabet of `2^(L*C_e)` values. The quantizer places
//! `2^(L*C_e) - 1` reconstruction levels `i * step` symmetrically around
//! zero, with `step = 2*q_max / (2^(L*C_e) - 1)`, so zero is itself a level
//! and the rounding error never exceeds `step / 2` on `[-q_max, q_max]`.

use thiserror::Error;

use crate::graph::NetworkGraph;

#[derive(Debug, Error)]
pub enum QuantizerError {
    #[error("bit budget L*C_e = {0} is too small; a symmetric midtread grid needs at least 2 bits")]
    BitBudgetTooSmall(u32),
    #[error("bit budget L*C_e = {0} exceeds 52 bits; the grid would be finer than f64 resolution")]
    BitBudgetTooLarge(u32),
    #[error("q_max must be positive, got {0}")]
    NonPositiveQMax(f64),
    #[error("input {value} overflows the quantizer range [-{q_max}, {q_max}]")]
    Overflow { value: f64, q_max: f64 },
}

/// Symmetric midtread uniform quantizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantizer {
    step: f64,
    q_max: f64,
    levels: u64,
    max_index: i64,
}

impl Quantizer {
    /// Step between adjacent reconstruction levels.
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn q_max(&self) -> f64 {
        self.q_max
    }

    /// Number of reconstruction levels, `2^(L*C_e) - 1`.
    pub fn levels(&self) -> u64 {
        self.levels
    }

    /// All reconstruction levels, ascending.
    pub fn reconstruction_levels(&self) -> Vec<f64> {
        (-self.max_index..=self.max_index)
            .map(|i| i as f64 * self.step)
            .collect()
    }

    /// Rounds `u` to the nearest reconstruction level; exact midpoints
    /// round toward zero. Inputs outside `[-q_max, q_max]` are an overflow
    /// bug upstream and fail hard rather than clip.
    pub fn quantize(&self, u: f64) -> Result<f64, QuantizerError> {
        if !(u.abs() <= self.q_max) {
            return Err(QuantizerError::Overflow {
                value: u,
                q_max: self.q_max,
            });
        }
        let r = u / self.step;
        let index = ((r.abs() - 0.5).ceil() as i64).min(self.max_index);
        if index == 0 {
            return Ok(0.0);
        }
        Ok(r.signum() * index as f64 * self.step)
    }
}

/// Quantizer for an edge of capacity `capacity` under block length
/// `block_length`, spanning `[-q_max, q_max]`.
pub fn quantizer_for_edge(
    block_length: u32,
    capacity: u32,
    q_max: f64,
) -> Result<Quantizer, QuantizerError> {
    let bits = block_length
        .checked_mul(capacity)
        .ok_or(QuantizerError::BitBudgetTooLarge(u32::MAX))?;
    if bits < 2 {
        return Err(QuantizerError::BitBudgetTooSmall(bits));
    }
    if bits > 52 {
        return Err(QuantizerError::BitBudgetTooLarge(bits));
    }
    if !(q_max > 0.0) {
        return Err(QuantizerError::NonPositiveQMax(q_max));
    }
    let levels = (1u64 << bits) - 1;
    Ok(Quantizer {
        step: 2.0 * q_max / levels as f64,
        q_max,
        levels,
        max_index: (1i64 << (bits - 1)) - 1,
    })
}

/// One quantizer per edge of `g`, indexed by edge id.
pub fn quantizers_for_graph(
    g: &NetworkGraph,
    block_length: u32,
    q_max: f64,
) -> Result<Vec<Quantizer>, QuantizerError> {
    g.edges()
        .iter()
        .map(|e| quantizer_for_edge(block_length, e.capacity, q_max))
        .collect()
}
