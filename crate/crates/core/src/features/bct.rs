//! Beam coherence time labels and the three-way grouping used by the BCT
//! classifier and the alignment policy.

/// Length of the run of equal beam labels starting at 1-based position `r`,
/// capped by the end of the sequence. This is the BCT in units of the
/// snapshot interval.
pub fn label_bct(beam_labels: &[u32], r: usize) -> u32 {
    assert!(r >= 1 && r <= beam_labels.len(), "r out of range");
    let start = r - 1;
    let mut m = 1;
    while start + m < beam_labels.len() && beam_labels[start + m] == beam_labels[start] {
        m += 1;
    }
    m as u32
}

/// BCT group: {1}, {2}, {3, 4, ...}.
pub fn group_bct(m: u32) -> u8 {
    assert!(m >= 1);
    match m {
        1 => 1,
        2 => 2,
        _ => 3,
    }
}

/// The BCT the policy adopts for a predicted group: the group minimum.
pub fn group_min(group: u8) -> u32 {
    match group {
        1 => 1,
        2 => 2,
        3 => 3,
        _ => panic!("invalid BCT group {group}"),
    }
}
