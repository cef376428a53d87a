use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::KneadingError;

/// Binary symbol string; each entry is 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Symbols(Vec<u8>);

impl Symbols {
    pub fn new(bits: Vec<u8>) -> Self {
        assert!(bits.iter().all(|&b| b <= 1), "symbols must be 0 or 1");
        Symbols(bits)
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn starts_with(&self, prefix: &str) -> bool {
        self.to_string().starts_with(prefix)
    }

    pub fn negated(&self) -> Symbols {
        Symbols(self.0.iter().map(|b| 1 - b).collect())
    }

    /// Shortest `(preperiod, period)` with `period <= 4` such that the tail
    /// after the preperiod repeats at least three times and covers at least
    /// four symbols.
    pub fn eventual_period(&self) -> Option<(usize, usize)> {
        let s = &self.0;
        let n = s.len();
        (1..=n)
            .flat_map(|total| (1..=4.min(total)).map(move |p| (total - p, p)))
            .find(|&(m, p)| {
                let tail = n.saturating_sub(m);
                tail >= 3 * p && tail >= 4 && (m..n - p).all(|i| s[i] == s[i + p])
            })
    }

    /// Exact kneading invariant of the infinite sequence obtained by
    /// repeating the detected period forever.
    pub fn eventual_limit(&self) -> Option<Ratio<u64>> {
        let (m, p) = self.eventual_period()?;
        let prefix = self.0[..m].iter().fold(0u64, |acc, &b| 2 * acc + b as u64);
        let block = self.0[m..m + p]
            .iter()
            .fold(0u64, |acc, &b| 2 * acc + b as u64);
        let rep = (1u64 << p) - 1;
        Some(Ratio::new(prefix * rep + block, (1u64 << m) * rep))
    }
}

impl fmt::Display for Symbols {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            f.write_str(if *b == 0 { "0" } else { "1" })?;
        }
        Ok(())
    }
}

impl FromStr for Symbols {
    type Err = KneadingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(KneadingError::MalformedPrefix(format!(
                    "invalid symbol {c:?}"
                ))),
            })
            .collect::<Result<Vec<u8>, _>>()
            .map(Symbols)
    }
}

impl Serialize for Symbols {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Symbols {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `K_n = numerator / 2^n`, kept unreduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KneadingInvariant {
    pub numerator: u64,
    pub n: u32,
}

impl KneadingInvariant {
    pub fn ratio(&self) -> Ratio<u64> {
        Ratio::new(self.numerator, 1u64 << self.n)
    }

    pub fn to_f64(&self) -> f64 {
        self.numerator as f64 / (1u64 << self.n) as f64
    }
}

impl fmt::Display for KneadingInvariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.ratio())
    }
}

/// `K_n = sum_k a_k 2^-k` over the first `n` symbols; missing symbols count
/// as 0. `n` is limited to 63.
pub fn kneading_invariant(symbols: &Symbols, n: usize) -> KneadingInvariant {
    assert!(n < 64, "n = {n} exceeds the exact range");
    let numerator = (0..n).fold(0u64, |acc, k| {
        2 * acc + symbols.0.get(k).copied().unwrap_or(0) as u64
    });
    KneadingInvariant {
        numerator,
        n: n as u32,
    }
}

/// Right counterpart of a left sequence at a homoclinic point: the first `k`
/// symbols are kept and the rest, which must start with 1, are negated.
pub fn negate_map(left: &Symbols, k: usize) -> Result<Symbols, KneadingError> {
    match left.0.get(k) {
        Some(1) => {}
        Some(_) => {
            return Err(KneadingError::MalformedPrefix(format!(
                "symbol after the prefix of {left} with length {k} must be 1"
            )))
        }
        None => {
            return Err(KneadingError::MalformedPrefix(format!(
                "prefix length {k} leaves no suffix in {left}"
            )))
        }
    }
    Ok(Symbols(
        left.0
            .iter()
            .enumerate()
            .map(|(i, &b)| if i < k { b } else { 1 - b })
            .collect(),
    ))
}
