//! Binary arithmetic coder with 32-bit range registers and carry handling
//! via pending bits. Symbols are coded against integer frequency tables
//! whose totals are a power of two, so encoder and decoder agree exactly.

use crate::error::{Error, Result};

use super::FrequencyTable;

const HALF: u64 = 1 << 31;
const QUARTER: u64 = 1 << 30;
const THREE_QUARTERS: u64 = 3 << 30;
const MASK: u64 = (1 << 32) - 1;

#[derive(Debug, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    current: u8,
    filled: u8,
    bits: u64,
}

impl BitWriter {
    pub fn write_bit(&mut self, bit: bool) {
        self.current = (self.current << 1) | bit as u8;
        self.filled += 1;
        self.bits += 1;
        if self.filled == 8 {
            self.bytes.push(self.current);
            self.current = 0;
            self.filled = 0;
        }
    }

    /// Number of bits written so far (excludes padding).
    pub fn bit_len(&self) -> u64 {
        self.bits
    }

    /// Pads the final partial byte with zeros and returns the buffer.
    pub fn into_bytes(mut self) -> Vec<u8> {
        if self.filled > 0 {
            self.bytes.push(self.current << (8 - self.filled));
        }
        self.bytes
    }
}

#[derive(Debug)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: u64,
    limit: u64,
}

impl<'a> BitReader<'a> {
    /// Reads up to `limit` bits; past the limit the stream continues with
    /// zeros, which the coder termination is designed to tolerate.
    pub fn new(bytes: &'a [u8], limit: u64) -> Self {
        BitReader { bytes, pos: 0, limit }
    }

    pub fn read_bit(&mut self) -> bool {
        if self.pos >= self.limit {
            self.pos += 1;
            return false;
        }
        let byte = self.bytes[(self.pos / 8) as usize];
        let bit = (byte >> (7 - (self.pos % 8))) & 1 == 1;
        self.pos += 1;
        bit
    }
}

/// Streaming arithmetic encoder.
#[derive(Debug)]
pub struct Encoder {
    low: u64,
    high: u64,
    pending: u64,
    writer: BitWriter,
}

impl Encoder {
    pub fn new() -> Self {
        Encoder {
            low: 0,
            high: MASK,
            pending: 0,
            writer: BitWriter::default(),
        }
    }

    fn emit(&mut self, bit: bool) {
        self.writer.write_bit(bit);
        for _ in 0..self.pending {
            self.writer.write_bit(!bit);
        }
        self.pending = 0;
    }

    pub fn encode_symbol(&mut self, table: &FrequencyTable, symbol: usize) -> Result<()> {
        let (c_lo, c_hi) = table.bounds(symbol)?;
        let range = self.high - self.low + 1;
        let total = table.total() as u64;
        self.high = self.low + range * c_hi as u64 / total - 1;
        self.low += range * c_lo as u64 / total;
        debug_assert!(self.low <= self.high);

        loop {
            if self.high < HALF {
                self.emit(false);
            } else if self.low >= HALF {
                self.emit(true);
                self.low -= HALF;
                self.high -= HALF;
            } else if self.low >= QUARTER && self.high < THREE_QUARTERS {
                self.pending += 1;
                self.low -= QUARTER;
                self.high -= QUARTER;
            } else {
                break;
            }
            self.low <<= 1;
            self.high = (self.high << 1) | 1;
        }
        Ok(())
    }

    /// Terminates the stream (at most `2 + pending` extra bits) and returns
    /// the payload and its exact bit length.
    pub fn finish(mut self) -> (Vec<u8>, u64) {
        self.pending += 1;
        if self.low < QUARTER {
            self.emit(false);
        } else {
            self.emit(true);
        }
        let bits = self.writer.bit_len();
        (self.writer.into_bytes(), bits)
    }

    pub fn bit_len(&self) -> u64 {
        self.writer.bit_len()
    }
}

impl Default for Encoder {
    fn default() -> Self {
        Encoder::new()
    }
}

/// Streaming arithmetic decoder; the exact inverse of [`Encoder`] given the
/// same sequence of frequency tables.
#[derive(Debug)]
pub struct Decoder<'a> {
    low: u64,
    high: u64,
    value: u64,
    reader: BitReader<'a>,
}

impl<'a> Decoder<'a> {
    pub fn new(bytes: &'a [u8], bit_limit: u64) -> Self {
        let mut reader = BitReader::new(bytes, bit_limit);
        let mut value = 0u64;
        for _ in 0..32 {
            value = (value << 1) | reader.read_bit() as u64;
        }
        Decoder {
            low: 0,
            high: MASK,
            value,
            reader,
        }
    }

    pub fn decode_symbol(&mut self, table: &FrequencyTable) -> Result<usize> {
        let range = self.high - self.low + 1;
        let total = table.total() as u64;
        let scaled = ((self.value - self.low + 1) * total - 1) / range;
        if scaled >= total {
            return Err(Error::Codec("corrupted stream: scaled value out of range".into()));
        }
        let symbol = table.find(scaled as u32);
        let (c_lo, c_hi) = table.bounds(symbol)?;
        self.high = self.low + range * c_hi as u64 / total - 1;
        self.low += range * c_lo as u64 / total;
        if self.value < self.low || self.value > self.high {
            return Err(Error::Codec("corrupted stream: value left the interval".into()));
        }

        loop {
            if self.high < HALF {
                // nothing
            } else if self.low >= HALF {
                self.low -= HALF;
                self.high -= HALF;
                self.value -= HALF;
            } else if self.low >= QUARTER && self.high < THREE_QUARTERS {
                self.low -= QUARTER;
                self.high -= QUARTER;
                self.value -= QUARTER;
            } else {
                break;
            }
            self.low <<= 1;
            self.high = (self.high << 1) | 1;
            self.value = (self.value << 1) | self.reader.read_bit() as u64;
        }
        Ok(symbol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::quantize;
    use crate::rng::Rng;

    fn random_distribution(rng: &mut Rng, k: usize) -> Vec<f64> {
        let raw: Vec<f64> = (0..k).map(|_| rng.uniform(0.01, 1.0)).collect();
        let sum: f64 = raw.iter().sum();
        raw.into_iter().map(|x| x / sum).collect()
    }

    #[test]
    fn round_trip_random_symbols_random_tables() {
        let mut rng = Rng::from_seed(2024);
        for trial in 0..5 {
            let k = 2 + trial * 3;
            let tables: Vec<FrequencyTable> = (0..1000)
                .map(|_| quantize(&random_distribution(&mut rng, k), 16).unwrap())
                .collect();
            let symbols: Vec<usize> = (0..1000).map(|_| rng.below(k)).collect();

            let mut enc = Encoder::new();
            for (t, &s) in tables.iter().zip(&symbols) {
                enc.encode_symbol(t, s).unwrap();
            }
            let (bytes, bits) = enc.finish();

            let mut dec = Decoder::new(&bytes, bits);
            for (t, &s) in tables.iter().zip(&symbols) {
                assert_eq!(dec.decode_symbol(t).unwrap(), s);
            }
        }
    }

    #[test]
    fn fair_coin_costs_one_bit_per_symbol() {
        let table = quantize(&[0.5, 0.5], 16).unwrap();
        let mut rng = Rng::from_seed(7);
        let n = 10_000;
        let symbols: Vec<usize> = (0..n).map(|_| rng.below(2)).collect();
        let mut enc = Encoder::new();
        for &s in &symbols {
            enc.encode_symbol(&table, s).unwrap();
        }
        let (_, bits) = enc.finish();
        let per_symbol = bits as f64 / n as f64;
        assert!(
            (1.0..1.001).contains(&per_symbol),
            "amortized {per_symbol} bits/symbol"
        );
    }

    #[test]
    fn single_fair_coin_symbol_is_short() {
        let table = quantize(&[0.5, 0.5], 16).unwrap();
        let mut enc = Encoder::new();
        enc.encode_symbol(&table, 1).unwrap();
        let (_, bits) = enc.finish();
        assert!(bits <= 33, "stream used {bits} bits");
    }

    #[test]
    fn near_certain_symbol_is_nearly_free() {
        let k = 4;
        let total = 1u32 << 16;
        let mut freqs = vec![1u32; k];
        freqs[2] = total - (k as u32 - 1);
        let table = FrequencyTable::from_freqs(freqs).unwrap();
        let n = 10_000;
        let mut enc = Encoder::new();
        for _ in 0..n {
            enc.encode_symbol(&table, 2).unwrap();
        }
        let (_, bits) = enc.finish();
        let per_symbol = bits as f64 / n as f64;
        assert!(per_symbol < 0.001, "amortized {per_symbol} bits/symbol");
    }

    #[test]
    fn decoder_detects_gross_corruption() {
        let mut rng = Rng::from_seed(5);
        let table = quantize(&random_distribution(&mut rng, 4), 16).unwrap();
        let symbols: Vec<usize> = (0..200).map(|_| rng.below(4)).collect();
        let mut enc = Encoder::new();
        for &s in &symbols {
            enc.encode_symbol(&table, s).unwrap();
        }
        let (mut bytes, bits) = enc.finish();
        bytes[0] ^= 0xff;
        let mut dec = Decoder::new(&bytes, bits);
        let mut mismatch = false;
        for &s in &symbols {
            match dec.decode_symbol(&table) {
                Ok(got) if got == s => continue,
                _ => {
                    mismatch = true;
                    break;
                }
            }
        }
        assert!(mismatch, "corruption went unnoticed");
    }
}
