//! Run-length encoding of binary masks: alternating run lengths over the
//! row-major pixel sequence, starting with a (possibly empty) run of zeros.

use crate::error::{Error, Result};
use crate::volume::Mask2D;

pub fn encode(mask: &Mask2D) -> Vec<u32> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut len = 0u32;
    for &v in mask.data() {
        if v == current {
            len += 1;
        } else {
            runs.push(len);
            current = v;
            len = 1;
        }
    }
    runs.push(len);
    runs
}

pub fn decode(runs: &[u32], width: usize, height: usize) -> Result<Mask2D> {
    let total: u64 = runs.iter().map(|&r| r as u64).sum();
    if total != (width * height) as u64 {
        return Err(Error::format("rle", format!("runs sum to {total}, expected {}", width * height)));
    }
    let mut data = Vec::with_capacity(width * height);
    for (i, &r) in runs.iter().enumerate() {
        data.extend(std::iter::repeat_n(i % 2 == 1, r as usize));
    }
    Mask2D::from_vec(width, height, data)
}
