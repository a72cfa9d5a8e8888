//! RNA alphabets and the canonical 19-nt siRNA / 57-nt mRNA input pair.
//!
//! Raw inputs may use DNA notation; `T` is read as `U` everywhere. The siRNA
//! is the antisense strand written 5'→3', the mRNA context is the sense strand
//! written 5'→3', so positions 20..=38 of the context are expected to equal
//! the reverse complement of the siRNA.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Length of a normalized siRNA.
pub const SIRNA_LEN: usize = 19;
/// Flank added on each side of the binding site.
pub const FLANK_LEN: usize = 19;
/// Length of the mRNA context window.
pub const MRNA_LEN: usize = SIRNA_LEN + 2 * FLANK_LEN;

/// siRNA alphabet in one-hot slot order.
pub const RNA_ALPHABET: [u8; 4] = *b"AUCG";
/// mRNA alphabet in one-hot slot order; `X` marks positions beyond the transcript.
pub const MRNA_ALPHABET: [u8; 5] = *b"AUCGX";
/// Padding symbol.
pub const PAD: u8 = b'X';

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SeqError {
    #[error("empty sequence")]
    Empty,
    #[error("invalid symbol {symbol:?} at position {position}")]
    InvalidSymbol { symbol: char, position: usize },
    #[error("siRNA has {len} nt, at least 19 are required")]
    TooShort { len: usize },
    #[error("siRNA has {len} nt and does not start with U; cannot pick a 19-mer")]
    AmbiguousLong { len: usize },
    #[error("expected length {expected}, got {actual}")]
    WrongLength { expected: usize, actual: usize },
    #[error("padding symbol X found inside the sequence at position {position}")]
    InteriorPadding { position: usize },
    #[error("binding region starting at {binding_start} does not fit a transcript of {transcript_len} nt")]
    BindingOutOfRange {
        binding_start: usize,
        transcript_len: usize,
    },
}

/// Index of an RNA base in `RNA_ALPHABET`.
#[inline]
pub fn base_index(b: u8) -> Option<usize> {
    match b {
        b'A' => Some(0),
        b'U' => Some(1),
        b'C' => Some(2),
        b'G' => Some(3),
        _ => None,
    }
}

/// Index of an mRNA symbol in `MRNA_ALPHABET`.
#[inline]
pub fn mrna_symbol_index(b: u8) -> Option<usize> {
    match b {
        PAD => Some(4),
        other => base_index(other),
    }
}

#[inline]
fn complement(b: u8) -> Option<u8> {
    match b {
        b'A' => Some(b'U'),
        b'U' => Some(b'A'),
        b'C' => Some(b'G'),
        b'G' => Some(b'C'),
        _ => None,
    }
}

/// Uppercase, trim, and map DNA `T` to `U`. Any symbol outside {A,C,G,U,T}
/// is rejected.
fn to_rna(raw: &str) -> Result<Vec<u8>, SeqError> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Err(SeqError::Empty);
    }
    raw.chars()
        .enumerate()
        .map(|(i, c)| match c.to_ascii_uppercase() {
            'A' => Ok(b'A'),
            'C' => Ok(b'C'),
            'G' => Ok(b'G'),
            'U' | 'T' => Ok(b'U'),
            _ => Err(SeqError::InvalidSymbol {
                symbol: c,
                position: i + 1,
            }),
        })
        .collect()
}

/// Reverse complement over {A,U,C,G}; DNA `T` is accepted as `U`.
pub fn reverse_complement(seq: &str) -> Result<String, SeqError> {
    let bases = to_rna(seq)?;
    Ok(revcomp_bytes(&bases)
        .map(char::from)
        .collect::<String>())
}

fn revcomp_bytes(bases: &[u8]) -> impl Iterator<Item = u8> + '_ {
    // callers guarantee a validated RNA alphabet
    bases.iter().rev().map(|&b| complement(b).unwrap_or(PAD))
}

/// True when `bases` reads the same as its own reverse complement.
pub fn is_self_complementary(bases: &[u8]) -> bool {
    bases.iter().copied().eq(revcomp_bytes(bases))
}

/// A normalized antisense siRNA: exactly 19 nt over {A,U,C,G}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SirnaSeq([u8; SIRNA_LEN]);

impl SirnaSeq {
    /// Parse an already-normalized 19-mer (T accepted as U).
    pub fn new(seq: &str) -> Result<Self, SeqError> {
        let bases = to_rna(seq)?;
        Self::from_bases(&bases)
    }

    fn from_bases(bases: &[u8]) -> Result<Self, SeqError> {
        let arr: [u8; SIRNA_LEN] = bases.try_into().map_err(|_| SeqError::WrongLength {
            expected: SIRNA_LEN,
            actual: bases.len(),
        })?;
        Ok(Self(arr))
    }

    pub fn as_bytes(&self) -> &[u8; SIRNA_LEN] {
        &self.0
    }

    pub fn reverse_complement(&self) -> [u8; SIRNA_LEN] {
        let mut out = [0u8; SIRNA_LEN];
        for (dst, src) in out.iter_mut().zip(revcomp_bytes(&self.0)) {
            *dst = src;
        }
        out
    }
}

impl fmt::Display for SirnaSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // ASCII by construction
        f.write_str(std::str::from_utf8(&self.0).unwrap_or_default())
    }
}

/// Normalize a raw siRNA string to the canonical 19-mer.
///
/// A 19-nt input is kept as is. A longer input must begin with U, which is
/// dropped, and the next 19 nt are kept. Anything shorter is rejected.
pub fn normalize_sirna(raw: &str) -> Result<SirnaSeq, SeqError> {
    let bases = to_rna(raw)?;
    match bases.len() {
        n if n < SIRNA_LEN => Err(SeqError::TooShort { len: n }),
        SIRNA_LEN => SirnaSeq::from_bases(&bases),
        n if bases[0] == b'U' && n > SIRNA_LEN => SirnaSeq::from_bases(&bases[1..=SIRNA_LEN]),
        n => Err(SeqError::AmbiguousLong { len: n }),
    }
}

/// The 57-nt mRNA window around the binding site, `X`-padded at the edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MrnaContext([u8; MRNA_LEN]);

impl MrnaContext {
    /// Parse a ready-made 57-symbol context. `X` may only form a prefix
    /// and/or a suffix.
    pub fn new(seq: &str) -> Result<Self, SeqError> {
        let seq = seq.trim();
        if seq.is_empty() {
            return Err(SeqError::Empty);
        }
        let mut bases = Vec::with_capacity(seq.len());
        for (i, c) in seq.chars().enumerate() {
            let b = match c.to_ascii_uppercase() {
                'T' => b'U',
                c @ ('A' | 'U' | 'C' | 'G' | 'X') => c as u8,
                _ => {
                    return Err(SeqError::InvalidSymbol {
                        symbol: c,
                        position: i + 1,
                    })
                }
            };
            bases.push(b);
        }
        let arr: [u8; MRNA_LEN] = bases
            .as_slice()
            .try_into()
            .map_err(|_| SeqError::WrongLength {
                expected: MRNA_LEN,
                actual: bases.len(),
            })?;
        check_padding(&arr)?;
        Ok(Self(arr))
    }

    pub fn as_bytes(&self) -> &[u8; MRNA_LEN] {
        &self.0
    }

    /// The 19 positions facing the siRNA.
    pub fn binding_site(&self) -> &[u8] {
        &self.0[FLANK_LEN..FLANK_LEN + SIRNA_LEN]
    }

    pub fn pad_count(&self) -> usize {
        self.0.iter().filter(|&&b| b == PAD).count()
    }
}

impl fmt::Display for MrnaContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(std::str::from_utf8(&self.0).unwrap_or_default())
    }
}

fn check_padding(seq: &[u8]) -> Result<(), SeqError> {
    let lead = seq.iter().take_while(|&&b| b == PAD).count();
    let trail = seq[lead..].iter().rev().take_while(|&&b| b == PAD).count();
    let interior = &seq[lead..seq.len() - trail];
    match interior.iter().position(|&b| b == PAD) {
        Some(p) => Err(SeqError::InteriorPadding {
            position: lead + p + 1,
        }),
        None => Ok(()),
    }
}

/// Cut the 57-nt window around a binding site from a full transcript.
///
/// `binding_start` is 1-based; the window spans
/// `[binding_start - 19, binding_start + 37]` and positions outside the
/// transcript become `X`.
pub fn build_mrna_context(transcript: &str, binding_start: usize) -> Result<MrnaContext, SeqError> {
    let bases = to_rna(transcript)?;
    let len = bases.len();
    if binding_start == 0 || binding_start + SIRNA_LEN - 1 > len {
        return Err(SeqError::BindingOutOfRange {
            binding_start,
            transcript_len: len,
        });
    }
    let mut out = [PAD; MRNA_LEN];
    // window position w maps to transcript position binding_start - 19 + w (1-based)
    for (w, slot) in out.iter_mut().enumerate() {
        let pos = (binding_start + w) as isize - FLANK_LEN as isize;
        if pos >= 1 && pos as usize <= len {
            *slot = bases[pos as usize - 1];
        }
    }
    Ok(MrnaContext(out))
}

/// One labelled siRNA/mRNA example.
#[derive(Debug, Clone, PartialEq)]
pub struct SirnaRecord {
    pub sirna: SirnaSeq,
    pub mrna: MrnaContext,
    pub efficacy: f64,
    pub target_id: String,
    pub source_id: String,
}

impl SirnaRecord {
    /// Binding-site positions (1-based within the 19-mer) where the mRNA
    /// disagrees with the siRNA reverse complement, ignoring padding.
    pub fn complementarity_mismatches(&self) -> Vec<usize> {
        self.sirna
            .reverse_complement()
            .iter()
            .zip(self.mrna.binding_site())
            .enumerate()
            .filter(|(_, (&expect, &got))| got != PAD && expect != got)
            .map(|(i, _)| i + 1)
            .collect()
    }
}

/// Serializable form of a record, as stored in dataset files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordRow {
    pub sirna: String,
    pub mrna_context: String,
    pub efficacy: f64,
    pub target_id: String,
    pub source_id: String,
}

impl From<&SirnaRecord> for RecordRow {
    fn from(r: &SirnaRecord) -> Self {
        Self {
            sirna: r.sirna.to_string(),
            mrna_context: r.mrna.to_string(),
            efficacy: r.efficacy,
            target_id: r.target_id.clone(),
            source_id: r.source_id.clone(),
        }
    }
}
