use crate::{Error, Result};

/// Canonical code assignment from a `BITS` count list.
fn code_lengths_and_codes(bits: &[u8; 16]) -> Vec<(u8, u16)> {
    let mut out = Vec::new();
    let mut code: u16 = 0;
    for (len_minus_1, &count) in bits.iter().enumerate() {
        for _ in 0..count {
            out.push((len_minus_1 as u8 + 1, code));
            code = code.wrapping_add(1);
        }
        code <<= 1;
    }
    out
}

/// Symbol -> (length, code) table for the encoder.
#[derive(Clone)]
pub struct EncodeTable {
    codes: [(u8, u16); 256],
}

impl EncodeTable {
    pub fn new(bits: &[u8; 16], vals: &[u8]) -> Self {
        let mut codes = [(0u8, 0u16); 256];
        for (&sym, lc) in vals.iter().zip(code_lengths_and_codes(bits)) {
            codes[sym as usize] = lc;
        }
        Self { codes }
    }

    #[inline]
    pub fn get(&self, sym: u8) -> (u8, u16) {
        self.codes[sym as usize]
    }
}

/// Decoder table (T.81 F.2.2.3 style `maxcode`/`valptr` plus an 8-bit
/// fast lookup).
#[derive(Clone, Debug)]
pub struct DecodeTable {
    maxcode: [i32; 18],
    valptr: [i32; 17],
    mincode: [i32; 17],
    vals: Vec<u8>,
    /// `(length, symbol)` for codes of length <= 8, indexed by the next 8 bits.
    fast: Vec<(u8, u8)>,
}

impl DecodeTable {
    pub fn new(bits: &[u8; 16], vals: Vec<u8>) -> Result<Self> {
        let total: usize = bits.iter().map(|&b| b as usize).sum();
        if total != vals.len() || total > 256 {
            return Err(Error::JpegDecode("huffman table size mismatch".into()));
        }
        let mut maxcode = [-1i32; 18];
        let mut valptr = [0i32; 17];
        let mut mincode = [0i32; 17];
        let mut code = 0i32;
        let mut k = 0i32;
        for l in 1..=16 {
            let n = bits[l - 1] as i32;
            if n > 0 {
                valptr[l] = k;
                mincode[l] = code;
                code += n;
                k += n;
                maxcode[l] = code - 1;
                if code > (1 << l) {
                    return Err(Error::JpegDecode("overfull huffman table".into()));
                }
            }
            code <<= 1;
        }
        maxcode[17] = i32::MAX;
        let mut fast = vec![(0u8, 0u8); 256];
        for ((len, code), &sym) in code_lengths_and_codes(bits).into_iter().zip(&vals) {
            if len <= 8 {
                let shift = 8 - len;
                let base = (code as usize) << shift;
                for slot in fast.iter_mut().skip(base).take(1 << shift) {
                    *slot = (len, sym);
                }
            }
        }
        Ok(Self {
            maxcode,
            valptr,
            mincode,
            vals,
            fast,
        })
    }

    #[inline]
    pub fn fast_lookup(&self, peek8: u32) -> (u8, u8) {
        self.fast[peek8 as usize]
    }

    /// Slow path: `code` holds `len` bits read so far.
    #[inline]
    pub fn lookup(&self, code: i32, len: usize) -> Option<u8> {
        if code <= self.maxcode[len] {
            let idx = self.valptr[len] + code - self.mincode[len];
            self.vals.get(idx as usize).copied()
        } else {
            None
        }
    }
}

/// Number of bits needed to represent `|v|` (the JPEG magnitude category).
#[inline]
pub fn category(v: i32) -> u8 {
    (32 - v.unsigned_abs().leading_zeros()) as u8
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jpeg::tables::*;

    #[test]
    fn categories() {
        assert_eq!(category(0), 0);
        assert_eq!(category(1), 1);
        assert_eq!(category(-1), 1);
        assert_eq!(category(2), 2);
        assert_eq!(category(-3), 2);
        assert_eq!(category(255), 8);
        assert_eq!(category(-1024), 11);
    }

    #[test]
    fn encode_and_decode_tables_agree() {
        let enc = EncodeTable::new(&LUMA_AC_BITS, &LUMA_AC_VALS);
        let dec = DecodeTable::new(&LUMA_AC_BITS, LUMA_AC_VALS.to_vec()).unwrap();
        for &sym in LUMA_AC_VALS.iter() {
            let (len, code) = enc.get(sym);
            assert!((1..=16).contains(&len));
            if len <= 8 {
                let peek = (code as u32) << (8 - len);
                assert_eq!(dec.fast_lookup(peek), (len, sym));
            }
            assert_eq!(dec.lookup(code as i32, len as usize), Some(sym));
        }
        // EOB is 1010 in the standard luma AC table
        assert_eq!(enc.get(0x00), (4, 0b1010));
    }
}
