//! Key-value dictionary over quantized delay windows, its certification
//! (genericity, closure), and the reference sequence y* defined by induction
//! on dictionary lookups.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::codec::{fnv1a, Grid, QuantizedSeries};
use crate::scalar::Scalar;

/// Gap below which two key cross-sums are considered to collide with L.
pub const GENERICITY_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum DictionaryError {
    #[error("embedding dimension L must be >= 1, got {l}")]
    InvalidL { l: usize },
    #[error("quantized series must end at t = 0 to define the dictionary scan, ends at {t_max}")]
    NotAnchoredAtZero { t_max: i64 },
    #[error("series starting at t = {t_min} holds no full window of length L = {l}")]
    InsufficientData { t_min: i64, l: usize },
    #[error("dictionary entry {n}: {reason}")]
    BadEntry { n: usize, reason: String },
    #[error("dictionary entries {n1} and {n2} share key {key}")]
    DuplicateKey { n1: usize, n2: usize, key: Key },
    #[error("no dictionary entry for key {key} at step t = {t} (closure was not certified)")]
    MissingKey { t: usize, key: Key },
    #[error("bad initial window: {reason}")]
    BadInitWindow { reason: String },
}

/// Quantized delay window `(ȳ(t'-1), ..., ȳ(t'-L))`, most recent lag first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Key(Vec<usize>);

impl Key {
    pub fn new(lags: Vec<usize>) -> Self {
        Key(lags)
    }

    pub fn lags(&self) -> &[usize] {
        &self.0
    }

    pub fn l(&self) -> usize {
        self.0.len()
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, lag) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{lag}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub key: Key,
    /// Grid index of the value observed right after the key's window.
    pub value_index: usize,
    /// The t' whose window realized this key (most recent occurrence).
    pub provenance: i64,
}

/// Ordered key-value entries; position defines n = 1..N.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    entries: Vec<Entry>,
    lookup: HashMap<Key, usize>,
    l: usize,
    k: usize,
    grid_ref: u64,
}

impl Dictionary {
    pub fn n(&self) -> usize {
        self.entries.len()
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn grid_ref(&self) -> u64 {
        self.grid_ref
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    /// 1-based entry access.
    pub fn entry(&self, n: usize) -> &Entry {
        &self.entries[n - 1]
    }

    /// 1-based index of the entry holding `key`.
    pub fn find(&self, key: &Key) -> Option<usize> {
        self.lookup.get(key).copied()
    }

    /// Rebuilds from serialized entries, revalidating the structural
    /// invariants (index ranges, distinct keys, nonpositive provenance).
    pub fn from_entries(
        entries: Vec<Entry>,
        l: usize,
        k: usize,
        grid_ref: u64,
    ) -> Result<Self, DictionaryError> {
        if l == 0 {
            return Err(DictionaryError::InvalidL { l });
        }
        let mut lookup = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            let n = i + 1;
            if e.key.l() != l {
                return Err(DictionaryError::BadEntry {
                    n,
                    reason: format!("key has {} lags, dictionary L is {l}", e.key.l()),
                });
            }
            for &lag in e.key.lags() {
                if lag < 1 || lag > k {
                    return Err(DictionaryError::BadEntry {
                        n,
                        reason: format!("lag index {lag} outside 1..={k}"),
                    });
                }
            }
            if e.value_index < 1 || e.value_index > k {
                return Err(DictionaryError::BadEntry {
                    n,
                    reason: format!("value index {} outside 1..={k}", e.value_index),
                });
            }
            if e.provenance > 0 {
                return Err(DictionaryError::BadEntry {
                    n,
                    reason: format!("provenance {} is positive", e.provenance),
                });
            }
            if let Some(first) = lookup.insert(e.key.clone(), n) {
                return Err(DictionaryError::DuplicateKey {
                    n1: first,
                    n2: n,
                    key: e.key.clone(),
                });
            }
        }
        Ok(Dictionary {
            entries,
            lookup,
            l,
            k,
            grid_ref,
        })
    }

    pub fn fingerprint(&self) -> u64 {
        let words = [self.l as u64, self.k as u64, self.n() as u64]
            .into_iter()
            .chain(self.entries.iter().flat_map(|e| {
                e.key
                    .lags()
                    .iter()
                    .map(|&lag| lag as u64)
                    .chain([e.value_index as u64, e.provenance as u64])
                    .collect::<Vec<_>>()
            }));
        fnv1a(words)
    }
}

/// Scans t' = 0, -1, ... down to t_min + L over the training series; each
/// unseen window key is inserted with the value observed at its t'. A key
/// recurring at several t' keeps the most recent one (first scanned).
pub fn build_dictionary(q: &QuantizedSeries, l: usize) -> Result<Dictionary, DictionaryError> {
    if l == 0 {
        return Err(DictionaryError::InvalidL { l });
    }
    if q.t_max() != 0 {
        return Err(DictionaryError::NotAnchoredAtZero { t_max: q.t_max() });
    }
    let floor = q.t_min() + l as i64;
    if floor > 0 {
        return Err(DictionaryError::InsufficientData {
            t_min: q.t_min(),
            l,
        });
    }

    let mut entries = Vec::new();
    let mut lookup: HashMap<Key, usize> = HashMap::new();
    let mut t = 0i64;
    while t >= floor {
        let key = Key((1..=l as i64)
            .map(|d| q.index_at(t - d).expect("scan range checked"))
            .collect());
        if !lookup.contains_key(&key) {
            let n = entries.len() + 1;
            lookup.insert(key.clone(), n);
            entries.push(Entry {
                key,
                value_index: q.index_at(t).expect("scan range checked"),
                provenance: t,
            });
        }
        t -= 1;
    }

    Ok(Dictionary {
        entries,
        lookup,
        l,
        k: q.k(),
        grid_ref: q.grid_ref(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenericityReport<F> {
    pub ok: bool,
    /// Smallest |cross-sum - L| over ordered pairs; infinite when N <= 1.
    pub min_gap: F,
    pub worst_pair: Option<(usize, usize)>,
}

/// Checks Σ_ℓ σ_{n'}(ℓ)/σ_n(ℓ) ≠ L for all realized ordered pairs n ≠ n',
/// with tolerance [`GENERICITY_TOL`].
pub fn check_genericity<F: Scalar>(dict: &Dictionary, grid: &Grid<F>) -> GenericityReport<F> {
    let l = F::of(dict.l() as f64);
    let mut min_gap = F::infinity();
    let mut worst = None;
    for n in 1..=dict.n() {
        let denom: Vec<F> = dict
            .entry(n)
            .key
            .lags()
            .iter()
            .map(|&lag| grid.point(lag))
            .collect();
        for np in 1..=dict.n() {
            if np == n {
                continue;
            }
            let mut sum = F::zero();
            for (d, &lag) in denom.iter().zip(dict.entry(np).key.lags()) {
                sum = sum + grid.point(lag) / *d;
            }
            let gap = (sum - l).abs();
            if gap < min_gap {
                min_gap = gap;
                worst = Some((n, np));
            }
        }
    }
    GenericityReport {
        ok: min_gap > F::of(GENERICITY_TOL),
        min_gap,
        worst_pair: worst,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClosureReport {
    pub closed: bool,
    /// Entries whose successor key is absent, with the missing key.
    pub failing: Vec<(usize, Key)>,
    /// `successor_map[n-1]` = the entry matching n's successor key.
    pub successor_map: Vec<Option<usize>>,
}

/// Successor key of entry n is `(value_index(n), lags(n)[1..L-1])`: the
/// window one step after n's window. Closure = every successor is present.
pub fn check_closure(dict: &Dictionary) -> ClosureReport {
    let mut failing = Vec::new();
    let mut successor_map = Vec::with_capacity(dict.n());
    for n in 1..=dict.n() {
        let e = dict.entry(n);
        let mut lags = Vec::with_capacity(dict.l());
        lags.push(e.value_index);
        lags.extend_from_slice(&e.key.lags()[..dict.l() - 1]);
        let succ = Key(lags);
        let hit = dict.find(&succ);
        if hit.is_none() {
            failing.push((n, succ));
        }
        successor_map.push(hit);
    }
    ClosureReport {
        closed: failing.is_empty(),
        failing,
        successor_map,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cycle {
    /// Step at which the repeated key first occurred.
    pub enter: usize,
    pub period: usize,
}

/// The reference orbit y*(0..=horizon) with its grid indices and the first
/// detected key recurrence (present whenever horizon exceeds the number of
/// distinct keys used).
#[derive(Debug, Clone, PartialEq)]
pub struct YStar<F> {
    pub indices: Vec<usize>,
    pub values: Vec<F>,
    pub cycle: Option<Cycle>,
}

/// Induction: y*(t) for t <= 0 is the quantized data (`init` holds
/// `ȳ(0), ȳ(-1), ..., ȳ(-L)`); afterwards each step looks up the window
/// `(y*(t-1), ..., y*(t-L))` and emits the stored value.
pub fn generate_ystar<F: Scalar>(
    dict: &Dictionary,
    grid: &Grid<F>,
    init: &[usize],
    horizon: usize,
) -> Result<YStar<F>, DictionaryError> {
    let l = dict.l();
    if init.len() != l + 1 {
        return Err(DictionaryError::BadInitWindow {
            reason: format!("need L+1 = {} indices, got {}", l + 1, init.len()),
        });
    }
    if let Some(&bad) = init.iter().find(|&&i| i < 1 || i > dict.k()) {
        return Err(DictionaryError::BadInitWindow {
            reason: format!("index {bad} outside 1..={}", dict.k()),
        });
    }

    let mut indices = Vec::with_capacity(horizon + 1);
    indices.push(init[0]);
    let mut window: Vec<usize> = init[..l].to_vec();
    let mut first_seen: HashMap<Key, usize> = HashMap::new();
    let mut cycle = None;

    for t in 1..=horizon {
        let key = Key(window.clone());
        let n = dict.find(&key).ok_or_else(|| DictionaryError::MissingKey {
            t,
            key: key.clone(),
        })?;
        if cycle.is_none() {
            if let Some(&enter) = first_seen.get(&key) {
                cycle = Some(Cycle {
                    enter,
                    period: t - enter,
                });
            } else {
                first_seen.insert(key, t);
            }
        }
        let v = dict.entry(n).value_index;
        indices.push(v);
        window.rotate_right(1);
        window[0] = v;
    }

    let values = indices.iter().map(|&i| grid.point(i)).collect();
    Ok(YStar {
        indices,
        values,
        cycle,
    })
}
