//! Dense storage for K-way binary tensors with missing entries.
//!
//! Entries are signed bytes: `+1` is an observed one, `-1` an observed zero
//! and `0` a missing entry. This is exactly the signed observation `x̃` that
//! enters the full conditionals, so the sampler reads it without conversion.
//! Layout is row-major with the last index fastest.
//!
//! Two file formats are supported:
//!
//! * dense binary: magic `BTNSR1`, `K` as little-endian `u32`, `K` extents as
//!   little-endian `u32`, then one signed byte per entry;
//! * sparse text: `dims: N1 .. NK`, `default: missing|zero`, then one line
//!   `i1 .. iK v` per listed entry with `v ∈ {0, 1}`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Domain};

pub const DENSE_MAGIC: &[u8; 6] = b"BTNSR1";

pub const OBSERVED_ONE: i8 = 1;
pub const OBSERVED_ZERO: i8 = -1;
pub const MISSING: i8 = 0;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObservedTensor {
    dims: Vec<usize>,
    strides: Vec<usize>,
    entries: Vec<i8>,
}

/// Row-major offset of `idx` within a tensor of extents `dims`.
pub fn flat_offset(idx: &[usize], dims: &[usize]) -> Result<usize> {
    if idx.len() != dims.len() || idx.iter().zip(dims).any(|(&i, &n)| i >= n) {
        return Err(Error::OutOfBounds {
            index: idx.to_vec(),
            dims: dims.to_vec(),
        });
    }
    Ok(idx.iter().zip(dims).fold(0, |acc, (&i, &n)| acc * n + i))
}

/// Inverse of [`flat_offset`].
pub fn unflatten(offset: usize, dims: &[usize]) -> Result<Vec<usize>> {
    let total: usize = dims.iter().product();
    if offset >= total {
        return Err(Error::OutOfBounds {
            index: vec![offset],
            dims: dims.to_vec(),
        });
    }
    let mut idx = vec![0; dims.len()];
    let mut rest = offset;
    for (slot, &n) in idx.iter_mut().zip(dims).rev() {
        *slot = rest % n;
        rest /= n;
    }
    Ok(idx)
}

pub(crate) fn strides_for(dims: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    strides
}

fn validate_dims(dims: &[usize]) -> Result<usize> {
    if dims.len() < 2 {
        return Err(Error::arg(format!(
            "tensor needs at least 2 modes, got {}",
            dims.len()
        )));
    }
    if dims.contains(&0) {
        return Err(Error::arg(format!("tensor extents must be positive: {dims:?}")));
    }
    dims.iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .ok_or_else(|| Error::arg(format!("tensor of dims {dims:?} is too large")))
}

impl ObservedTensor {
    pub fn new(dims: Vec<usize>, entries: Vec<i8>) -> Result<Self> {
        let len = validate_dims(&dims)?;
        if entries.len() != len {
            return Err(Error::arg(format!(
                "expected {len} entries for dims {dims:?}, got {}",
                entries.len()
            )));
        }
        if let Some(pos) = entries.iter().position(|v| !(-1..=1).contains(v)) {
            return Err(Error::arg(format!(
                "entry {pos} has value {} outside {{-1, 0, 1}}",
                entries[pos]
            )));
        }
        let strides = strides_for(&dims);
        Ok(Self {
            dims,
            strides,
            entries,
        })
    }

    /// A tensor in which every entry is missing.
    pub fn all_missing(dims: Vec<usize>) -> Result<Self> {
        let len = validate_dims(&dims)?;
        Self::new(dims, vec![MISSING; len])
    }

    /// A fully observed tensor from 0/1 values.
    pub fn from_bits(dims: Vec<usize>, bits: &[bool]) -> Result<Self> {
        let entries = bits
            .iter()
            .map(|&b| if b { OBSERVED_ONE } else { OBSERVED_ZERO })
            .collect();
        Self::new(dims, entries)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[i8] {
        &self.entries
    }

    pub fn offset(&self, idx: &[usize]) -> Result<usize> {
        flat_offset(idx, &self.dims)
    }

    pub fn index_of(&self, offset: usize) -> Result<Vec<usize>> {
        unflatten(offset, &self.dims)
    }

    pub fn get(&self, idx: &[usize]) -> Result<i8> {
        Ok(self.entries[self.offset(idx)?])
    }

    pub fn set(&mut self, idx: &[usize], value: i8) -> Result<()> {
        if !(-1..=1).contains(&value) {
            return Err(Error::arg(format!("value {value} outside {{-1, 0, 1}}")));
        }
        let off = self.offset(idx)?;
        self.entries[off] = value;
        Ok(())
    }

    pub fn observed_count(&self) -> usize {
        self.entries.iter().filter(|&&v| v != MISSING).count()
    }

    pub fn missing_count(&self) -> usize {
        self.len() - self.observed_count()
    }

    /// Same dims with every entry marked missing at the given offsets.
    pub fn with_missing(&self, offsets: &[usize]) -> Result<Self> {
        let mut out = self.clone();
        for &off in offsets {
            let slot = out.entries.get_mut(off).ok_or_else(|| Error::OutOfBounds {
                index: vec![off],
                dims: self.dims.clone(),
            })?;
            *slot = MISSING;
        }
        Ok(out)
    }

    pub fn write_dense<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(DENSE_MAGIC)?;
        w.write_all(&(self.dims.len() as u32).to_le_bytes())?;
        for &n in &self.dims {
            let n = u32::try_from(n).map_err(|_| Error::arg(format!("extent {n} exceeds u32")))?;
            w.write_all(&n.to_le_bytes())?;
        }
        let bytes: Vec<u8> = self.entries.iter().map(|&v| v as u8).collect();
        w.write_all(&bytes)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_dense<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 6];
        read_exact_or(&mut r, &mut magic, "header")?;
        if &magic != DENSE_MAGIC {
            return Err(Error::parse("byte 0", "missing BTNSR1 magic"));
        }
        let mut word = [0u8; 4];
        read_exact_or(&mut r, &mut word, "byte 6")?;
        let k = u32::from_le_bytes(word) as usize;
        if k < 2 {
            return Err(Error::parse("byte 6", format!("tensor order {k} < 2")));
        }
        let mut dims = Vec::with_capacity(k);
        for i in 0..k {
            read_exact_or(&mut r, &mut word, &format!("byte {}", 10 + 4 * i))?;
            dims.push(u32::from_le_bytes(word) as usize);
        }
        let len = validate_dims(&dims).map_err(|e| Error::parse("header", e.to_string()))?;
        let header_len = 10 + 4 * k;
        let mut payload = Vec::with_capacity(len);
        r.by_ref().take(len as u64).read_to_end(&mut payload)?;
        if payload.len() != len {
            return Err(Error::parse(
                format!("byte {}", header_len + payload.len()),
                format!("payload truncated: expected {len} entries, found {}", payload.len()),
            ));
        }
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(Error::parse(
                format!("byte {}", header_len + len),
                "trailing bytes after payload",
            ));
        }
        let mut entries = Vec::with_capacity(len);
        for (i, &b) in payload.iter().enumerate() {
            let v = b as i8;
            if !(-1..=1).contains(&v) {
                return Err(Error::parse(
                    format!("byte {}", header_len + i),
                    format!("value {v} outside {{-1, 0, 1}}"),
                ));
            }
            entries.push(v);
        }
        Self::new(dims, entries)
    }

    /// Writes the sparse coordinate format. With [`SparseDefault::Missing`]
    /// every observed entry is listed; with [`SparseDefault::Zero`] only the
    /// ones are listed and the tensor must not contain missing entries.
    pub fn write_sparse<W: Write>(&self, default: SparseDefault, mut w: W) -> Result<()> {
        if default == SparseDefault::Zero && self.missing_count() > 0 {
            return Err(Error::arg(
                "default `zero` cannot represent a tensor with missing entries",
            ));
        }
        let dims: Vec<String> = self.dims.iter().map(|n| n.to_string()).collect();
        writeln!(w, "dims: {}", dims.join(" "))?;
        writeln!(w, "default: {}", default.as_str())?;
        let mut idx = vec![0usize; self.ndim()];
        for &v in &self.entries {
            let listed = match default {
                SparseDefault::Missing => v != MISSING,
                SparseDefault::Zero => v == OBSERVED_ONE,
            };
            if listed {
                for i in &idx {
                    write!(w, "{i} ")?;
                }
                writeln!(w, "{}", u8::from(v == OBSERVED_ONE))?;
            }
            advance(&mut idx, &self.dims);
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_sparse<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let mut next_line = |what: &str| -> Result<(usize, String)> {
            for (i, line) in lines.by_ref() {
                let line = line?;
                if !line.trim().is_empty() {
                    return Ok((i + 1, line));
                }
            }
            Err(Error::parse("end of input", format!("expected {what}")))
        };

        let (ln, header) = next_line("`dims:` header")?;
        let dims_text = header
            .trim()
            .strip_prefix("dims:")
            .ok_or_else(|| Error::parse(format!("line {ln}"), "expected `dims: N1 .. NK`"))?;
        let dims = dims_text
            .split_whitespace()
            .map(|tok| tok.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(format!("line {ln}"), e.to_string()))?;
        let len = validate_dims(&dims).map_err(|e| Error::parse(format!("line {ln}"), e.to_string()))?;

        let (ln, default_line) = next_line("`default:` header")?;
        let default = default_line
            .trim()
            .strip_prefix("default:")
            .map(str::trim)
            .and_then(SparseDefault::parse)
            .ok_or_else(|| Error::parse(format!("line {ln}"), "expected `default: missing|zero`"))?;

        let fill = match default {
            SparseDefault::Missing => MISSING,
            SparseDefault::Zero => OBSERVED_ZERO,
        };
        let mut entries = vec![fill; len];
        let mut seen = vec![false; len];
        let mut idx = Vec::with_capacity(dims.len());
        for (i, line) in lines {
            let line = line?;
            let ln = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields = line
                .split_whitespace()
                .map(|tok| tok.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(format!("line {ln}"), e.to_string()))?;
            if fields.len() != dims.len() + 1 {
                return Err(Error::parse(
                    format!("line {ln}"),
                    format!("expected {} indices and a value", dims.len()),
                ));
            }
            idx.clear();
            idx.extend_from_slice(&fields[..dims.len()]);
            let off = flat_offset(&idx, &dims)
                .map_err(|e| Error::parse(format!("line {ln}"), e.to_string()))?;
            let value = match fields[dims.len()] {
                0 => OBSERVED_ZERO,
                1 => OBSERVED_ONE,
                v => {
                    return Err(Error::parse(
                        format!("line {ln}"),
                        format!("value {v} outside {{0, 1}}"),
                    ))
                }
            };
            if std::mem::replace(&mut seen[off], true) {
                return Err(Error::parse(format!("line {ln}"), format!("duplicate entry {idx:?}")));
            }
            entries[off] = value;
        }
        Self::new(dims, entries)
    }
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], location: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::parse(location, "unexpected end of input")
        } else {
            Error::Io(e)
        }
    })
}

/// Row-major increment of a multi-index; wraps to all zeros after the last.
pub(crate) fn advance(idx: &mut [usize], dims: &[usize]) {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < dims[k] {
            return;
        }
        idx[k] = 0;
    }
}

/// How unlisted entries of a sparse file are interpreted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SparseDefault {
    Missing,
    Zero,
}

impl SparseDefault {
    pub fn as_str(self) -> &'static str {
        match self {
            SparseDefault::Missing => "missing",
            SparseDefault::Zero => "zero",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "missing" => Some(SparseDefault::Missing),
            "zero" => Some(SparseDefault::Zero),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TensorFormat {
    Dense,
    Sparse(SparseDefault),
}

/// Loads either format, sniffing the dense magic.
pub fn load_tensor(path: impl AsRef<Path>) -> Result<ObservedTensor> {
    let mut reader = BufReader::new(File::open(path)?);
    let head = reader.fill_buf()?;
    if head.starts_with(DENSE_MAGIC) {
        ObservedTensor::read_dense(reader)
    } else {
        ObservedTensor::read_sparse(reader)
    }
}

pub fn save_tensor(t: &ObservedTensor, path: impl AsRef<Path>, format: TensorFormat) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    match format {
        TensorFormat::Dense => t.write_dense(w),
        TensorFormat::Sparse(default) => t.write_sparse(default, w),
    }
}

/// An observed entry withheld from training.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeldOutEntry {
    pub index: Vec<usize>,
    pub offset: usize,
    pub value: bool,
}

/// Hides `round(fraction × #observed)` uniformly chosen observed entries.
///
/// Returns the training tensor and the hidden entries sorted by offset.
/// Entries that were already missing are never selected.
pub fn mask_holdout(
    t: &ObservedTensor,
    fraction: f64,
    seed: u64,
) -> Result<(ObservedTensor, Vec<HeldOutEntry>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::arg(format!("hold-out fraction {fraction} not in [0, 1)")));
    }
    let observed: Vec<usize> = t
        .entries
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != MISSING)
        .map(|(i, _)| i)
        .collect();
    let count = (fraction * observed.len() as f64).round() as usize;
    let mut rng = rng::stream(seed, Domain::Holdout, 0, 0, 0);
    let mut picked: Vec<usize> = index::sample(&mut rng, observed.len(), count)
        .into_iter()
        .map(|i| observed[i])
        .collect();
    picked.sort_unstable();

    let mut train = t.clone();
    let mut heldout = Vec::with_capacity(count);
    for off in picked {
        heldout.push(HeldOutEntry {
            index: t.index_of(off)?,
            offset: off,
            value: t.entries[off] == OBSERVED_ONE,
        });
        train.entries[off] = MISSING;
    }
    Ok((train, heldout))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Counts position in row-major enumeration without arithmetic.
    fn enumerate_position(target: &[usize], dims: &[usize]) -> usize {
        let total: usize = dims.iter().product();
        let mut idx = vec![0; dims.len()];
        for pos in 0..total {
            if idx == target {
                return pos;
            }
            advance(&mut idx, dims);
        }
        panic!("target not reached");
    }

    #[test]
    fn offsets_match_enumeration() {
        assert_eq!(flat_offset(&[0, 0, 0], &[2, 2, 2]).unwrap(), 0);
        assert_eq!(flat_offset(&[1, 1, 1], &[2, 2, 2]).unwrap(), 7);
        assert_eq!(enumerate_position(&[2, 3, 4], &[3, 4, 5]), 59);
        assert_eq!(flat_offset(&[2, 3, 4], &[3, 4, 5]).unwrap(), 59);
    }

    #[test]
    fn out_of_range_index_is_rejected() {
        assert!(matches!(
            flat_offset(&[2, 0], &[2, 2]),
            Err(Error::OutOfBounds { .. })
        ));
        assert!(flat_offset(&[0, 0, 0], &[2, 2]).is_err());
        assert!(unflatten(4, &[2, 2]).is_err());
    }

    #[test]
    fn offset_bijection_up_to_4x4x4x4() {
        for k in 2..=4 {
            for n in 1..=4 {
                let dims = vec![n; k];
                let total: usize = dims.iter().product();
                let mut idx = vec![0; k];
                for off in 0..total {
                    assert_eq!(flat_offset(&idx, &dims).unwrap(), off);
                    assert_eq!(unflatten(off, &dims).unwrap(), idx);
                    advance(&mut idx, &dims);
                }
            }
        }
    }

    #[test]
    fn constructor_checks_invariants() {
        assert!(ObservedTensor::new(vec![2], vec![0, 0]).is_err());
        assert!(ObservedTensor::new(vec![2, 0], vec![]).is_err());
        assert!(ObservedTensor::new(vec![2, 2], vec![0; 3]).is_err());
        assert!(ObservedTensor::new(vec![2, 2], vec![0, 0, 2, 0]).is_err());
    }

    #[test]
    fn dense_decoding() {
        let mut bytes = DENSE_MAGIC.to_vec();
        bytes.extend(2u32.to_le_bytes());
        bytes.extend(2u32.to_le_bytes());
        bytes.extend(2u32.to_le_bytes());
        bytes.extend([1u8, 0xff, 0, 1]);
        let t = ObservedTensor::read_dense(&bytes[..]).unwrap();
        assert_eq!(t.dims(), &[2, 2]);
        assert_eq!(t.entries(), &[1, -1, 0, 1]);
        assert_eq!(t.missing_count(), 1);

        let mut bad = bytes.clone();
        bad[19] = 3;
        let err = ObservedTensor::read_dense(&bad[..]).unwrap_err();
        assert!(err.to_string().contains("byte 19"), "{err}");

        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(ObservedTensor::read_dense(&trailing[..]).is_err());
        assert!(ObservedTensor::read_dense(&bytes[..bytes.len() - 1]).is_err());
        assert!(ObservedTensor::read_dense(&b"BTNSR2"[..]).is_err());
    }

    #[test]
    fn sparse_decoding() {
        let t = ObservedTensor::read_sparse("dims: 2 2\ndefault: missing\n0 0 1\n".as_bytes()).unwrap();
        assert_eq!(t.entries(), &[1, 0, 0, 0]);

        let t = ObservedTensor::read_sparse("dims: 2 2\ndefault: zero\n1 0 1\n".as_bytes()).unwrap();
        assert_eq!(t.entries(), &[-1, -1, 1, -1]);

        let err = ObservedTensor::read_sparse("dims: 2 2\ndefault: missing\n0 2 1\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let err = ObservedTensor::read_sparse("dims: 2 2\ndefault: missing\n0 1 2\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        assert!(ObservedTensor::read_sparse("dims 2 2\n".as_bytes()).is_err());
        assert!(ObservedTensor::read_sparse("dims: 2 2\ndefault: maybe\n".as_bytes()).is_err());
        assert!(ObservedTensor::read_sparse("dims: 2 2\ndefault: zero\n0 0 1\n0 0 0\n".as_bytes()).is_err());
    }

    #[test]
    fn sparse_zero_default_rejects_missing_entries() {
        let t = ObservedTensor::new(vec![2, 2], vec![1, 0, -1, 1]).unwrap();
        assert!(t.write_sparse(SparseDefault::Zero, Vec::new()).is_err());
    }

    #[test]
    fn holdout_counts_and_determinism() {
        let t = ObservedTensor::from_bits(vec![10, 10, 10], &vec![true; 1000]).unwrap();
        let (train, held) = mask_holdout(&t, 0.0, 1).unwrap();
        assert_eq!(train, t);
        assert!(held.is_empty());

        let (train, held) = mask_holdout(&t, 0.2, 1).unwrap();
        assert_eq!(held.len(), 200);
        assert_eq!(train.missing_count(), 200);
        let (_, again) = mask_holdout(&t, 0.2, 1).unwrap();
        assert_eq!(held, again);
        let (_, other) = mask_holdout(&t, 0.2, 2).unwrap();
        assert_ne!(held, other);

        assert!(mask_holdout(&t, 1.0, 1).is_err());
        assert!(mask_holdout(&t, -0.1, 1).is_err());
    }

    fn ternary_tensor() -> impl Strategy<Value = ObservedTensor> {
        prop::collection::vec(1usize..5, 2..5).prop_flat_map(|dims| {
            let len: usize = dims.iter().product();
            prop::collection::vec(-1i8..=1, len)
                .prop_map(move |entries| ObservedTensor::new(dims.clone(), entries).unwrap())
        })
    }

    proptest! {
        #[test]
        fn formats_round_trip(t in ternary_tensor()) {
            let mut dense = Vec::new();
            t.write_dense(&mut dense).unwrap();
            prop_assert_eq!(&ObservedTensor::read_dense(&dense[..]).unwrap(), &t);

            let mut sparse = Vec::new();
            t.write_sparse(SparseDefault::Missing, &mut sparse).unwrap();
            prop_assert_eq!(&ObservedTensor::read_sparse(&sparse[..]).unwrap(), &t);

            if t.missing_count() == 0 {
                let mut sparse = Vec::new();
                t.write_sparse(SparseDefault::Zero, &mut sparse).unwrap();
                prop_assert_eq!(&ObservedTensor::read_sparse(&sparse[..]).unwrap(), &t);
            }
        }

        #[test]
        fn holdout_partitions_observed_entries(t in ternary_tensor(), fraction in 0.0f64..0.99, seed in any::<u64>()) {
            let (train, held) = mask_holdout(&t, fraction, seed).unwrap();
            let expected = (fraction * t.observed_count() as f64).round() as usize;
            prop_assert_eq!(held.len(), expected);
            prop_assert_eq!(train.observed_count() + held.len(), t.observed_count());
            for (off, (&before, &after)) in t.entries().iter().zip(train.entries()).enumerate() {
                if before == MISSING {
                    prop_assert_eq!(after, MISSING);
                }
                if before != after {
                    let h = held.iter().find(|h| h.offset == off).unwrap();
                    prop_assert_eq!(h.value, before == OBSERVED_ONE);
                    prop_assert_eq!(&h.index, &t.index_of(off).unwrap());
                }
            }
        }
    }
}
