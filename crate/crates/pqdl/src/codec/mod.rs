//! Arithmetic coding of label sequences under prequential models.
//!
//! This makes the description-length estimate operational: the encoder walks
//! the same prequential schedule as the estimator, quantizes each calibrated
//! predictive distribution to integer frequencies, and emits an actual
//! bitstream. The decoder retrains the same models on the labels decoded so
//! far and inverts the stream exactly. Both sides cross-check a model hash
//! per block, turning "deterministic training" from an assumption into an
//! enforced contract.
//!
//! Container layout (all integers little-endian):
//! `"PQDL"` magic, `u16` version, `u32` header length, header JSON,
//! payload bytes (final byte zero-padded). The header records everything the
//! receiver needs to reconstruct the models from the inputs alone.

mod coder;

pub use coder::{BitReader, BitWriter, Decoder, Encoder};

use serde::{Deserialize, Serialize};

use crate::data::{make_prefix_chain, Dataset};
use crate::error::{Error, Result};
use crate::nn::ModelSpec;
use crate::optim::TrainingRecipe;
use crate::prequential::{
    fit_prefix, predictive_distributions, uniform_distribution, BlockSchedule,
};
use crate::rng::fnv1a;

pub const MAGIC: &[u8; 4] = b"PQDL";
pub const VERSION: u16 = 1;
pub const DEFAULT_PRECISION: u32 = 16;

/// Integer frequencies summing to `2^precision`, every class at least 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyTable {
    freqs: Vec<u32>,
    /// `cumulative[i] = sum(freqs[..i])`; last entry equals the total.
    cumulative: Vec<u32>,
}

impl FrequencyTable {
    pub fn from_freqs(freqs: Vec<u32>) -> Result<FrequencyTable> {
        if freqs.len() < 2 {
            return Err(Error::Codec("frequency table needs at least 2 symbols".into()));
        }
        if freqs.iter().any(|&f| f == 0) {
            return Err(Error::Codec("frequency table contains a zero".into()));
        }
        let total: u64 = freqs.iter().map(|&f| f as u64).sum();
        if !total.is_power_of_two() || total > u32::MAX as u64 {
            return Err(Error::Codec(format!(
                "frequency total {total} must be a 32-bit power of two"
            )));
        }
        let mut cumulative = Vec::with_capacity(freqs.len() + 1);
        let mut acc = 0u32;
        cumulative.push(0);
        for &f in &freqs {
            acc += f;
            cumulative.push(acc);
        }
        Ok(FrequencyTable { freqs, cumulative })
    }

    pub fn total(&self) -> u32 {
        *self.cumulative.last().unwrap()
    }

    pub fn freqs(&self) -> &[u32] {
        &self.freqs
    }

    pub fn bounds(&self, symbol: usize) -> Result<(u32, u32)> {
        if symbol >= self.freqs.len() {
            return Err(Error::Codec(format!(
                "symbol {symbol} out of range for {} classes",
                self.freqs.len()
            )));
        }
        Ok((self.cumulative[symbol], self.cumulative[symbol + 1]))
    }

    /// Symbol whose cumulative interval contains `scaled`.
    pub fn find(&self, scaled: u32) -> usize {
        // cumulative is strictly increasing; binary search for the interval.
        let mut lo = 0usize;
        let mut hi = self.freqs.len();
        while lo + 1 < hi {
            let mid = (lo + hi) / 2;
            if self.cumulative[mid] <= scaled {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// `-log2(freq / total)`: the ideal code length of a symbol.
    pub fn bits_for(&self, symbol: usize) -> f64 {
        -((self.freqs[symbol] as f64 / self.total() as f64).log2())
    }
}

/// Largest-remainder quantization of a probability vector to integers
/// summing to `2^precision`, with a minimum of 1 per class. Deterministic:
/// remainder ties resolve toward the lower index.
pub fn quantize(probs: &[f64], precision: u32) -> Result<FrequencyTable> {
    let k = probs.len();
    if k < 2 {
        return Err(Error::Codec("need at least 2 classes".into()));
    }
    if precision == 0 || precision > 30 {
        return Err(Error::Codec(format!("unsupported precision {precision}")));
    }
    let total = 1u64 << precision;
    if k as u64 > total / 2 {
        return Err(Error::Codec(format!(
            "{k} classes cannot all receive a positive frequency at precision {precision}"
        )));
    }
    if probs.iter().any(|&p| !p.is_finite() || p < 0.0) {
        return Err(Error::Codec("probabilities must be finite and non-negative".into()));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::Codec(format!("probabilities sum to {sum}, not 1")));
    }

    let mut freqs = vec![0u64; k];
    let mut remainders: Vec<(f64, usize)> = Vec::with_capacity(k);
    let mut assigned = 0u64;
    for (i, &p) in probs.iter().enumerate() {
        let exact = (p / sum) * total as f64;
        let base = (exact.floor() as u64).min(total);
        freqs[i] = base;
        assigned += base;
        remainders.push((exact - base as f64, i));
    }

    // Distribute the leftover units by largest remainder; if float error
    // overshot, take units back from the largest entries.
    if assigned < total {
        remainders.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let mut left = total - assigned;
        let mut i = 0;
        while left > 0 {
            freqs[remainders[i % k].1] += 1;
            left -= 1;
            i += 1;
        }
    } else {
        let mut excess = assigned - total;
        while excess > 0 {
            let (idx, _) = freqs
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                .unwrap();
            freqs[idx] -= 1;
            excess -= 1;
        }
    }

    // Enforce the minimum of 1 by taking from the largest entries.
    loop {
        let zero = freqs.iter().position(|&f| f == 0);
        match zero {
            None => break,
            Some(zi) => {
                let (max_i, _) = freqs
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                    .unwrap();
                freqs[max_i] -= 1;
                freqs[zi] += 1;
            }
        }
    }

    FrequencyTable::from_freqs(freqs.into_iter().map(|f| f as u32).collect())
}

/// Everything the receiver needs besides the inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageHeader {
    pub version: u16,
    pub dataset_name: String,
    pub num_examples: usize,
    pub num_classes: usize,
    pub input_dim: usize,
    pub model_name: String,
    pub model: ModelSpec,
    pub recipe: TrainingRecipe,
    pub schedule: Vec<usize>,
    pub calib_fraction: f64,
    pub seed: u64,
    pub precision: u32,
    pub payload_bits: u64,
    /// Per-block hash of the trained model (weights and temperature), hex.
    pub model_hashes: Vec<String>,
    /// FNV-1a over the label bytes, hex; detects corrupted decodes.
    pub label_checksum: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedMessage {
    pub header: MessageHeader,
    pub payload: Vec<u8>,
}

impl EncodedMessage {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header_json = serde_json::to_vec(&self.header)
            .map_err(|e| Error::Codec(format!("header serialization: {e}")))?;
        let mut out = Vec::with_capacity(10 + header_json.len() + self.payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
        out.extend_from_slice(&header_json);
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<EncodedMessage> {
        if bytes.len() < 10 || &bytes[..4] != MAGIC {
            return Err(Error::Codec("not a PQDL message".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::Codec(format!(
                "unsupported message version {version}, expected {VERSION}"
            )));
        }
        let header_len = u32::from_le_bytes([bytes[6], bytes[7], bytes[8], bytes[9]]) as usize;
        let header_bytes = bytes
            .get(10..10 + header_len)
            .ok_or_else(|| Error::Codec("truncated header".into()))?;
        let header: MessageHeader = serde_json::from_slice(header_bytes)
            .map_err(|e| Error::Codec(format!("header parse: {e}")))?;
        let payload = bytes[10 + header_len..].to_vec();
        if (payload.len() as u64) * 8 < header.payload_bits {
            return Err(Error::Codec("truncated payload".into()));
        }
        Ok(EncodedMessage { header, payload })
    }
}

fn labels_checksum(labels: &[u32]) -> u64 {
    let mut bytes = Vec::with_capacity(labels.len() * 4);
    for &l in labels {
        bytes.extend_from_slice(&l.to_le_bytes());
    }
    fnv1a(&bytes)
}

/// Bit accounting gathered while encoding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodecStats {
    /// Exact payload length in bits.
    pub payload_bits: u64,
    /// Shannon bound w.r.t. the quantized code distributions, in bits.
    pub shannon_bits: f64,
    /// Description length over the floored (pre-quantization)
    /// distributions, in nats.
    pub dl_nats: f64,
    pub num_blocks: usize,
}

/// Encodes the dataset's labels by walking the prequential schedule,
/// training a model per prefix and arithmetic-coding each newly added label
/// under its quantized calibrated prediction.
#[allow(clippy::too_many_arguments)]
pub fn encode_dataset(
    model_name: &str,
    model_spec: &ModelSpec,
    recipe: &TrainingRecipe,
    dataset: &Dataset,
    schedule: &BlockSchedule,
    calib_fraction: f64,
    seed: u64,
) -> Result<(EncodedMessage, CodecStats)> {
    let k = dataset.num_classes;
    let chain = make_prefix_chain(dataset, &schedule.boundaries, seed)?;
    let mut encoder = Encoder::new();
    let mut shannon_bits = 0.0;
    let mut dl_nats = 0.0;
    let mut model_hashes = Vec::new();

    // Block 0: uniform code.
    let uniform = quantize(&uniform_distribution(k), DEFAULT_PRECISION)?;
    let n0 = schedule.boundaries[0];
    for &example in chain.subset_indices(n0) {
        let label = dataset.labels[example] as usize;
        encoder.encode_symbol(&uniform, label)?;
        shannon_bits += uniform.bits_for(label);
        dl_nats += (k as f64).ln();
    }

    for b in 1..schedule.num_blocks() {
        let n_prev = schedule.boundaries[b - 1];
        let n_cur = schedule.boundaries[b];
        let prefix = dataset.subset(chain.subset_indices(n_prev));
        let model = fit_prefix(model_spec, recipe, &prefix, calib_fraction, seed)?;
        model_hashes.push(format!("{:016x}", model.param_hash));

        let added = chain.added_indices(n_prev, n_cur);
        let batch = dataset.batch_of(added);
        let probs = predictive_distributions(&model, &batch)?;
        for (row, &example) in added.iter().enumerate() {
            let table = quantize(probs.row(row), DEFAULT_PRECISION)?;
            let label = dataset.labels[example] as usize;
            encoder.encode_symbol(&table, label)?;
            shannon_bits += table.bits_for(label);
            dl_nats += -probs.get(row, label).ln();
        }
    }

    let (payload, payload_bits) = encoder.finish();
    let header = MessageHeader {
        version: VERSION,
        dataset_name: dataset.name.clone(),
        num_examples: dataset.len(),
        num_classes: k,
        input_dim: dataset.examples.cols(),
        model_name: model_name.to_string(),
        model: model_spec.clone(),
        recipe: recipe.clone(),
        schedule: schedule.boundaries.clone(),
        calib_fraction,
        seed,
        precision: DEFAULT_PRECISION,
        payload_bits,
        model_hashes,
        label_checksum: format!("{:016x}", labels_checksum(&dataset.labels)),
    };
    let stats = CodecStats {
        payload_bits,
        shannon_bits,
        dl_nats,
        num_blocks: schedule.num_blocks(),
    };
    Ok((EncodedMessage { header, payload }, stats))
}

/// Decodes the labels given the same inputs the encoder saw. Retrains the
/// per-prefix models from the labels decoded so far; a hash mismatch against
/// the header aborts (nondeterministic training or wrong inputs), and the
/// final label checksum catches stream corruption.
pub fn decode_dataset(message: &EncodedMessage, inputs: &Dataset) -> Result<Vec<u32>> {
    let h = &message.header;
    if h.num_examples == 0 {
        return Ok(Vec::new());
    }
    if inputs.len() != h.num_examples {
        return Err(Error::Codec(format!(
            "inputs have {} examples, header says {}",
            inputs.len(),
            h.num_examples
        )));
    }
    if inputs.examples.cols() != h.input_dim {
        return Err(Error::Codec(format!(
            "inputs have dim {}, header says {}",
            inputs.examples.cols(),
            h.input_dim
        )));
    }
    if h.precision != DEFAULT_PRECISION {
        return Err(Error::Codec(format!("unsupported precision {}", h.precision)));
    }
    let schedule = BlockSchedule::new(h.schedule.clone(), h.num_examples)?;
    let k = h.num_classes;

    // Working dataset: the true inputs with labels filled in as decoded.
    let mut staged = Dataset {
        name: h.dataset_name.clone(),
        examples: inputs.examples.clone(),
        labels: vec![0; inputs.len()],
        num_classes: k,
        input_shape: inputs.input_shape,
        ids: inputs.ids.clone(),
        provenance: format!("decoded({})", inputs.provenance),
    };

    let chain = make_prefix_chain(&staged, &schedule.boundaries, h.seed)?;
    let mut decoder = Decoder::new(&message.payload, h.payload_bits);

    let uniform = quantize(&uniform_distribution(k), DEFAULT_PRECISION)?;
    let n0 = schedule.boundaries[0];
    for i in 0..n0 {
        let example = chain.permutation[i];
        let symbol = decoder.decode_symbol(&uniform)?;
        staged.labels[example] = symbol as u32;
    }

    for b in 1..schedule.num_blocks() {
        let n_prev = schedule.boundaries[b - 1];
        let n_cur = schedule.boundaries[b];
        let prefix = staged.subset(chain.subset_indices(n_prev));
        let model = fit_prefix(&h.model, &h.recipe, &prefix, h.calib_fraction, h.seed)?;
        let expected = h
            .model_hashes
            .get(b - 1)
            .ok_or_else(|| Error::Codec("header is missing block hashes".into()))?;
        let got = format!("{:016x}", model.param_hash);
        if &got != expected {
            return Err(Error::Codec(format!(
                "model hash mismatch in block {b}: trained {got}, header {expected} \
                 (nondeterministic training or wrong inputs)"
            )));
        }

        let added = chain.added_indices(n_prev, n_cur).to_vec();
        let batch = staged.batch_of(&added);
        let probs = predictive_distributions(&model, &batch)?;
        for (row, &example) in added.iter().enumerate() {
            let table = quantize(probs.row(row), DEFAULT_PRECISION)?;
            let symbol = decoder.decode_symbol(&table)?;
            staged.labels[example] = symbol as u32;
        }
    }

    let checksum = format!("{:016x}", labels_checksum(&staged.labels));
    if checksum != h.label_checksum {
        return Err(Error::Codec(
            "label checksum mismatch after decoding (corrupted payload?)".into(),
        ));
    }
    Ok(staged.labels)
}
