//! Plaintext reference evaluation, used to check protocol outputs.

use privmatch::similarity::{common_attributes, priority_ochiai, tanimoto, weighted_intersection_size, AttributeProfile};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleResult {
    /// Absent when the profiles share no attribute.
    pub tanimoto: Option<f64>,
    pub priority_ochiai: f64,
    pub common_count: usize,
    pub weighted_intersection: u64,
}

pub fn oracle_match(a: &AttributeProfile, b: &AttributeProfile) -> OracleResult {
    let common = common_attributes(a, b);
    OracleResult {
        tanimoto: tanimoto(&common.initiator, &common.responder).ok(),
        priority_ochiai: priority_ochiai(a, b),
        common_count: common.len(),
        weighted_intersection: weighted_intersection_size(a, b),
    }
}
