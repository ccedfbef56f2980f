//! AND-gate cost model for evaluating the circuits under generic MPC.
//!
//! One SHA3 permutation block absorbs 1600 bits at 38,400 AND gates, giving 24
//! per input bit; a binary Merkle tree hashes every byte about twice, hence 48.
//! A 32-bit fixed-point multiply costs 185 AND gates per weight bit and the
//! accumulation 6 more.

pub const SHA3_BLOCK_AND_GATES: u64 = 38_400;
pub const SHA3_STATE_BITS: u64 = 1_600;
pub const MULTIPLY_AND_GATES_PER_WEIGHT_BIT: u64 = 185;
pub const ADD_AND_GATES_PER_WEIGHT_BIT: u64 = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct GateCostReport {
    pub hash_and_gates_per_input_bit: f64,
    pub merkle_and_gates_per_input_bit: f64,
    pub merkle_total_and_gates: u64,
    pub inference_and_gates_per_weight_bit: f64,
    pub total_inference_gates: u64,
    /// `None` when there are no weight bits.
    pub overhead_ratio: Option<f64>,
}

impl GateCostReport {
    pub fn overhead_percent(&self) -> Option<f64> {
        self.overhead_ratio.map(|r| 100.0 * r)
    }
}

pub fn estimate_gates(model_byte_count: u64, weight_bit_count: u64) -> GateCostReport {
    let hash_per_bit = SHA3_BLOCK_AND_GATES / SHA3_STATE_BITS;
    let merkle_per_bit = 2 * hash_per_bit;
    let inf_per_bit = MULTIPLY_AND_GATES_PER_WEIGHT_BIT + ADD_AND_GATES_PER_WEIGHT_BIT;
    let merkle_total = merkle_per_bit.saturating_mul(model_byte_count.saturating_mul(8));
    let inference_total = inf_per_bit.saturating_mul(weight_bit_count);
    GateCostReport {
        hash_and_gates_per_input_bit: hash_per_bit as f64,
        merkle_and_gates_per_input_bit: merkle_per_bit as f64,
        merkle_total_and_gates: merkle_total,
        inference_and_gates_per_weight_bit: inf_per_bit as f64,
        total_inference_gates: inference_total,
        overhead_ratio: (inference_total > 0).then(|| merkle_total as f64 / inference_total as f64),
    }
}
