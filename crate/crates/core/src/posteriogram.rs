//! Phoneme posteriograms, vocabularies and blank-frame stripping.

use std::collections::HashSet;
use std::path::Path;

use crate::binio::{read_file, Reader, Writer};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Output classes: 57 phonemes, then space, instrumental and blank.
pub const N_CLASSES: usize = 60;

/// Tolerance on `Σ exp(row) = 1` for a valid log-probability row.
pub const ROW_SUM_TOLERANCE: f64 = 1e-5;

const DEFAULT_PHONEMES: [&str; 57] = [
    "i", "y", "ɪ", "ʏ", "e", "ø", "ɛ", "œ", "æ", "a", "ɑ", "ɒ", "ɔ", "o", "ʊ", "u", "ʌ", "ə", "ɜ", "ɐ", "ɛ̃", "ɑ̃", "ɔ̃",
    "œ̃", "p", "b", "t", "d", "k", "g", "f", "v", "s", "z", "ʃ", "ʒ", "θ", "ð", "x", "ç", "h", "m", "n", "ɲ", "ŋ", "l",
    "ʎ", "r", "ɾ", "ʁ", "j", "w", "ɥ", "tʃ", "dʒ", "ts", "pf",
];

/// Class names. The last three entries are, in order, the space,
/// instrumental and blank tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhonemeVocab {
    tokens: Vec<String>,
}

impl PhonemeVocab {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() != N_CLASSES {
            return Err(Error::Format(format!(
                "vocabulary needs {N_CLASSES} tokens, got {}",
                tokens.len()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = tokens.iter().find(|t| !seen.insert(t.as_str())) {
            return Err(Error::Format(format!("duplicate vocabulary token {dup:?}")));
        }
        Ok(PhonemeVocab { tokens })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn space_index(&self) -> usize {
        self.tokens.len() - 3
    }

    pub fn instrumental_index(&self) -> usize {
        self.tokens.len() - 2
    }

    pub fn blank_index(&self) -> usize {
        self.tokens.len() - 1
    }

    fn write(&self, w: &mut Writer) -> Result<()> {
        for t in &self.tokens {
            w.str16(t)?;
        }
        Ok(())
    }

    fn read(r: &mut Reader<'_>, n: usize) -> Result<Self> {
        let tokens = (0..n)
            .map(|i| r.str16(&format!("vocabulary token {i}")))
            .collect::<Result<Vec<_>>>()?;
        Self::new(tokens)
    }
}

impl Default for PhonemeVocab {
    fn default() -> Self {
        let mut tokens: Vec<String> = DEFAULT_PHONEMES.iter().map(|s| s.to_string()).collect();
        tokens.extend(["<space>", "<instrumental>", "<blank>"].map(String::from));
        PhonemeVocab { tokens }
    }
}

/// `T x 60` per-frame log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Posteriogram {
    data: Matrix,
    frame_period_ms: f64,
    vocab: PhonemeVocab,
}

const PGRM_MAGIC: &[u8] = b"PGRM1";
const PGRS_MAGIC: &[u8] = b"PGRS1";
const FLAG_LOG: u8 = 0;
const FLAG_PROB: u8 = 1;

fn check_log_rows(data: &Matrix) -> Result<()> {
    for (t, row) in data.iter_rows().enumerate() {
        if let Some(v) = row.iter().find(|v| !(**v <= 0.0)) {
            return Err(Error::Format(format!("frame {t}: log-probability {v} is not <= 0")));
        }
        let sum: f64 = row.iter().map(|&v| (v as f64).exp()).sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(Error::Format(format!("frame {t}: probabilities sum to {sum}")));
        }
    }
    Ok(())
}

impl Posteriogram {
    /// Wraps log-probability rows, checking each is a normalized distribution.
    pub fn new(data: Matrix, frame_period_ms: f64, vocab: PhonemeVocab) -> Result<Self> {
        if data.cols() != vocab.len() {
            return Err(Error::shape(
                "posteriogram",
                format!("{} columns", vocab.len()),
                format!("{} columns", data.cols()),
            ));
        }
        if !(frame_period_ms > 0.0) {
            return Err(Error::Format(format!("frame period {frame_period_ms} ms")));
        }
        check_log_rows(&data)?;
        Ok(Posteriogram {
            data,
            frame_period_ms,
            vocab,
        })
    }

    /// Takes the log of probability rows (each renormalized in `f64`).
    pub fn from_probabilities(probs: &Matrix, frame_period_ms: f64, vocab: PhonemeVocab) -> Result<Self> {
        let mut data = Matrix::zeros(probs.rows(), probs.cols());
        for t in 0..probs.rows() {
            let row = probs.row(t);
            let sum: f64 = row.iter().map(|&p| p as f64).sum();
            for (o, &p) in data.row_mut(t).iter_mut().zip(row) {
                *o = ((p as f64 / sum).ln() as f32).min(0.0);
            }
        }
        Self::new(data, frame_period_ms, vocab)
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    pub fn n_frames(&self) -> usize {
        self.data.rows()
    }

    pub fn frame_period_ms(&self) -> f64 {
        self.frame_period_ms
    }

    pub fn vocab(&self) -> &PhonemeVocab {
        &self.vocab
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::new(PGRM_MAGIC);
        w.u32(self.data.rows() as u32);
        w.u32(self.data.cols() as u32);
        w.f64(self.frame_period_ms);
        w.u8(FLAG_LOG);
        w.f32s(self.data.as_slice());
        self.vocab.write(&mut w)?;
        Ok(w.into_bytes())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, PGRM_MAGIC)?;
        let t = r.u32("PGRM1 frame count")? as usize;
        let d = r.u32("PGRM1 class count")? as usize;
        if d != N_CLASSES {
            return Err(Error::Format(format!("PGRM1 has {d} classes, expected {N_CLASSES}")));
        }
        let period = r.f64("PGRM1 frame period")?;
        let flag = r.u8("PGRM1 flag")?;
        if flag != FLAG_LOG {
            return Err(Error::Format(format!(
                "PGRM1 flag {flag} (only log-probabilities are supported)"
            )));
        }
        let values = r.f32s(t * d, "PGRM1 payload")?;
        let vocab = PhonemeVocab::read(&mut r, d)?;
        r.finish("PGRM1")?;
        Self::new(Matrix::from_vec(t, d, values)?, period, vocab)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}

/// Elementwise `exp` of the log-probabilities.
pub fn to_probabilities(pg: &Posteriogram) -> Matrix {
    let mut m = pg.data.clone();
    m.as_mut_slice().iter_mut().for_each(|v| *v = v.exp());
    m
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Frame-at-a-time blank filter for live streams.
#[derive(Debug, Clone)]
pub struct BlankStripper {
    blank_index: usize,
    next_index: usize,
}

impl BlankStripper {
    pub fn new(blank_index: usize) -> Self {
        BlankStripper {
            blank_index,
            next_index: 0,
        }
    }

    /// Returns the original frame index when the frame is kept.
    pub fn push(&mut self, row: &[f32]) -> Option<usize> {
        let idx = self.next_index;
        self.next_index += 1;
        (argmax(row) != self.blank_index).then_some(idx)
    }

    pub fn frames_seen(&self) -> usize {
        self.next_index
    }
}

/// Probability rows with blank-dominated frames removed.
#[derive(Debug, Clone, PartialEq)]
pub struct StrippedPosteriogram {
    pub data: Matrix,
    pub index_map: Vec<usize>,
    pub original_frame_period_ms: f64,
    pub vocab: PhonemeVocab,
}

/// Drops every frame whose argmax is the blank class.
pub fn strip_blanks(pg: &Posteriogram) -> StrippedPosteriogram {
    let probs = to_probabilities(pg);
    let identity: Vec<usize> = (0..probs.rows()).collect();
    strip_rows(&probs, &identity, pg.frame_period_ms, &pg.vocab)
}

fn strip_rows(probs: &Matrix, index_map: &[usize], period: f64, vocab: &PhonemeVocab) -> StrippedPosteriogram {
    let mut stripper = BlankStripper::new(vocab.blank_index());
    let mut data = Matrix::zeros(0, probs.cols());
    let mut map = Vec::new();
    for row in probs.iter_rows() {
        if let Some(i) = stripper.push(row) {
            data.push_row(row).expect("same width");
            map.push(index_map[i]);
        }
    }
    StrippedPosteriogram {
        data,
        index_map: map,
        original_frame_period_ms: period,
        vocab: vocab.clone(),
    }
}

impl StrippedPosteriogram {
    pub fn len(&self) -> usize {
        self.index_map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_map.is_empty()
    }

    /// Re-applies the blank rule; a no-op on an already stripped sequence.
    pub fn strip_blanks(&self) -> StrippedPosteriogram {
        strip_rows(&self.data, &self.index_map, self.original_frame_period_ms, &self.vocab)
    }

    pub fn original_time_ms(&self, stripped_index: usize) -> Result<f64> {
        original_time_ms(self, stripped_index)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::new(PGRS_MAGIC);
        w.u32(self.data.rows() as u32);
        w.u32(self.data.cols() as u32);
        w.f64(self.original_frame_period_ms);
        w.u8(FLAG_PROB);
        w.f32s(self.data.as_slice());
        for &i in &self.index_map {
            let i = u32::try_from(i).map_err(|_| Error::Format(format!("frame index {i} exceeds u32")))?;
            w.u32(i);
        }
        self.vocab.write(&mut w)?;
        Ok(w.into_bytes())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, PGRS_MAGIC)?;
        let t = r.u32("PGRS1 frame count")? as usize;
        let d = r.u32("PGRS1 class count")? as usize;
        if d != N_CLASSES {
            return Err(Error::Format(format!("PGRS1 has {d} classes, expected {N_CLASSES}")));
        }
        let period = r.f64("PGRS1 frame period")?;
        let flag = r.u8("PGRS1 flag")?;
        if flag != FLAG_PROB {
            return Err(Error::Format(format!("PGRS1 flag {flag}, expected probabilities")));
        }
        let values = r.f32s(t * d, "PGRS1 payload")?;
        let index_map = (0..t)
            .map(|_| r.u32("PGRS1 index map").map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        if index_map.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Format("PGRS1 index map is not strictly increasing".into()));
        }
        let vocab = PhonemeVocab::read(&mut r, d)?;
        r.finish("PGRS1")?;
        Ok(StrippedPosteriogram {
            data: Matrix::from_vec(t, d, values)?,
            index_map,
            original_frame_period_ms: period,
            vocab,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}

/// Real time of a stripped frame, in milliseconds.
pub fn original_time_ms(sp: &StrippedPosteriogram, stripped_index: usize) -> Result<f64> {
    sp.index_map
        .get(stripped_index)
        .map(|&i| i as f64 * sp.original_frame_period_ms)
        .ok_or(Error::Index {
            index: stripped_index,
            len: sp.index_map.len(),
        })
}
