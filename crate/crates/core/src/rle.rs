//! COCO-style run-length encoding of binary masks.
//!
//! Runs are taken in column-major order and alternate starting with a run
//! of zeros (possibly empty). The compact string form is the one used by
//! the COCO tooling: each run is delta-coded against the run two places
//! earlier and written as little-endian 5-bit groups offset by ASCII 48.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;

/// `{"size": [h, w], "counts": "..."}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CocoRle {
    pub size: [usize; 2],
    pub counts: String,
}

impl CocoRle {
    pub fn encode(mask: &BinaryMask) -> Self {
        let (h, w) = mask.dims();
        Self { size: [h, w], counts: counts_to_string(&runs(mask)) }
    }

    pub fn decode(&self) -> Result<BinaryMask> {
        decode_counts(&self.counts, self.size[0], self.size[1])
    }
}

/// Column-major alternating run lengths, starting with zeros.
pub fn runs(mask: &BinaryMask) -> Vec<u64> {
    let (h, w) = mask.dims();
    let mut out = Vec::new();
    let mut current = false;
    let mut len = 0u64;
    for c in 0..w {
        for r in 0..h {
            let v = mask.get(r, c);
            if v != current {
                out.push(len);
                current = v;
                len = 0;
            }
            len += 1;
        }
    }
    out.push(len);
    out
}

pub fn counts_to_string(counts: &[u64]) -> String {
    let mut s = String::new();
    for (i, &count) in counts.iter().enumerate() {
        let mut x = count as i64;
        if i > 2 {
            x -= counts[i - 2] as i64;
        }
        loop {
            let mut c = (x & 0x1f) as u8;
            x >>= 5;
            let more = if c & 0x10 != 0 { x != -1 } else { x != 0 };
            if more {
                c |= 0x20;
            }
            s.push(char::from(c + 48));
            if !more {
                break;
            }
        }
    }
    s
}

pub fn counts_from_string(s: &str) -> Result<Vec<u64>> {
    let bytes = s.as_bytes();
    let mut counts: Vec<i64> = Vec::new();
    let mut p = 0;
    while p < bytes.len() {
        let mut x: i64 = 0;
        let mut k = 0;
        loop {
            let b = bytes[p];
            if !(48..48 + 64).contains(&b) {
                return Err(Error::invalid(format!("invalid RLE character {:?}", b as char)));
            }
            if k >= 12 {
                return Err(Error::invalid("RLE run is too long"));
            }
            let c = i64::from(b - 48);
            x |= (c & 0x1f) << (5 * k);
            p += 1;
            k += 1;
            let more = c & 0x20 != 0;
            if !more {
                if c & 0x10 != 0 {
                    x |= -1i64 << (5 * k);
                }
                break;
            }
            if p >= bytes.len() {
                return Err(Error::invalid("truncated RLE string"));
            }
        }
        if counts.len() > 2 {
            x += counts[counts.len() - 2];
        }
        if x < 0 {
            return Err(Error::invalid("negative RLE run"));
        }
        counts.push(x);
    }
    Ok(counts.into_iter().map(|c| c as u64).collect())
}

pub fn decode_runs(counts: &[u64], height: usize, width: usize) -> Result<BinaryMask> {
    let total: u64 = counts.iter().sum();
    if total != (height * width) as u64 {
        return Err(Error::invalid(format!(
            "RLE runs cover {total} cells, mask has {}",
            height * width
        )));
    }
    let mut cells = Array2::from_elem((height, width), false);
    let mut pos = 0usize;
    for (i, &n) in counts.iter().enumerate() {
        let value = i % 2 == 1;
        for j in pos..pos + n as usize {
            if value {
                cells[[j % height, j / height]] = true;
            }
        }
        pos += n as usize;
    }
    BinaryMask::new(cells)
}

pub fn decode_counts(s: &str, height: usize, width: usize) -> Result<BinaryMask> {
    decode_runs(&counts_from_string(s)?, height, width)
}

pub fn encode(mask: &BinaryMask) -> String {
    counts_to_string(&runs(mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_and_full() {
        assert_eq!(runs(&BinaryMask::zeros(3, 3)), vec![9]);
        assert_eq!(runs(&BinaryMask::ones(3, 3)), vec![0, 9]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(decode_counts("9", 3, 4).is_err());
        assert!(decode_counts("\u{7f}", 3, 3).is_err());
        assert!(decode_counts("b", 3, 3).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(h in 1usize..20, w in 1usize..20, bits in proptest::collection::vec(any::<bool>(), 400)) {
            let m = BinaryMask::from_fn(h, w, |r, c| bits[r * 20 + c]);
            let rle = CocoRle::encode(&m);
            prop_assert_eq!(rle.decode().unwrap(), m);
        }
    }
}
