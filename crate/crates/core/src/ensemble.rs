//! Restricted signal ensembles: for every support in a family, all
//! two-valued assignments on its entries.
//!
//! Noisy mode places `v_lo = C0*sigma*sqrt(d)/sqrt(2(1-eps))` or
//! `v_hi = v_lo + C0*sigma*sqrt(d)/sqrt(1-eps)` on each support entry;
//! noiseless mode places `+1` or `-1`. Either way a family of `k` supports
//! of size `s` yields exactly `k * 2^s` pairwise distinct members.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::construction::ConstructionSpec;
use crate::graph::Support;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("parameter out of range: {0}")]
    BadParameter(String),
    #[error("support {index} has size {got}, expected {expected}")]
    SupportSizeMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("support index {index} does not fit in dimension {d}")]
    IndexOutOfRange { index: usize, d: usize },
    #[error("ensemble has no members")]
    Empty,
    #[error("ensemble too large to materialize: {members} members (cap {cap})")]
    TooManyMembers { members: u128, cap: u128 },
    #[error("ensemble text parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Observation regime the ensemble is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Noisy,
    Noiseless,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Noisy => write!(f, "noisy"),
            Mode::Noiseless => write!(f, "noiseless"),
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "noisy" => Ok(Mode::Noisy),
            "noiseless" => Ok(Mode::Noiseless),
            other => Err(format!("unknown mode {other:?} (expected noisy|noiseless)")),
        }
    }
}

/// Generation metadata. Noisy carries the value-scale parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum EnsembleMeta {
    Noisy { c0: f64, sigma: f64, epsilon: f64 },
    Noiseless,
}

impl EnsembleMeta {
    pub fn mode(&self) -> Mode {
        match self {
            EnsembleMeta::Noisy { .. } => Mode::Noisy,
            EnsembleMeta::Noiseless => Mode::Noiseless,
        }
    }
}

/// Low support value in noisy mode, `C0*sigma*sqrt(d)/sqrt(2(1-eps))`.
pub fn noisy_low_value(c0: f64, sigma: f64, epsilon: f64, d: usize) -> f64 {
    c0 * sigma * (d as f64).sqrt() / (2.0 * (1.0 - epsilon)).sqrt()
}

/// High support value in noisy mode, `v_lo + C0*sigma*sqrt(d)/sqrt(1-eps)`.
pub fn noisy_high_value(c0: f64, sigma: f64, epsilon: f64, d: usize) -> f64 {
    noisy_low_value(c0, sigma, epsilon, d) + separation_radius(c0, sigma, epsilon, d)
}

/// Separation radius of the noisy ensemble, `C0*sigma*sqrt(d)/sqrt(1-eps)`.
/// Distinct members never come closer than this.
pub fn separation_radius(c0: f64, sigma: f64, epsilon: f64, d: usize) -> f64 {
    c0 * sigma * (d as f64).sqrt() / (1.0 - epsilon).sqrt()
}

/// Members of one distinct channel-parameter value: in noisy mode the
/// squared norm, in noiseless mode the marginal observation mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelClass {
    pub param: f64,
    pub count: usize,
    pub first_index: usize,
}

/// Explicit finite list of candidate coefficient vectors.
///
/// Member `k*2^s + p` lives on support `k`; bit `b` of the pattern `p`
/// selects the second value (`v_hi`, or `-1` in noiseless mode) at the
/// `b`-th smallest support index.
#[derive(Debug, Clone)]
pub struct RestrictedEnsemble {
    meta: EnsembleMeta,
    d: usize,
    s: usize,
    supports: Vec<Support>,
    /// Row-major member storage, `len() * d` values.
    values: Vec<f64>,
}

/// Hard cap on materialized members (memory guard).
const MEMBER_CAP: u128 = 1 << 22;

fn check_supports(supports: &[Support], d: usize) -> Result<usize, EnsembleError> {
    let s = supports
        .first()
        .map(Support::len)
        .ok_or(EnsembleError::Empty)?;
    for (ix, sup) in supports.iter().enumerate() {
        if sup.len() != s {
            return Err(EnsembleError::SupportSizeMismatch {
                index: ix,
                expected: s,
                got: sup.len(),
            });
        }
        if let Some(&bad) = sup.indices().iter().find(|&&i| i >= d) {
            return Err(EnsembleError::IndexOutOfRange { index: bad, d });
        }
    }
    if s >= 63 {
        return Err(EnsembleError::BadParameter(format!(
            "support size {s} too large for pattern enumeration"
        )));
    }
    let members = supports.len() as u128 * (1u128 << s);
    if members > MEMBER_CAP {
        return Err(EnsembleError::TooManyMembers {
            members,
            cap: MEMBER_CAP,
        });
    }
    Ok(s)
}

fn materialize(
    supports: Vec<Support>,
    d: usize,
    s: usize,
    low: f64,
    high: f64,
    meta: EnsembleMeta,
) -> RestrictedEnsemble {
    let patterns = 1usize << s;
    let mut values = vec![0.0f64; supports.len() * patterns * d];
    let mut row = 0usize;
    for sup in &supports {
        for pattern in 0..patterns {
            let base = row * d;
            for (bit, &ix) in sup.indices().iter().enumerate() {
                values[base + ix] = if pattern >> bit & 1 == 1 { high } else { low };
            }
            row += 1;
        }
    }
    RestrictedEnsemble {
        meta,
        d,
        s,
        supports,
        values,
    }
}

/// All `|supports| * 2^s` two-valued noisy members.
pub fn build_noisy_ensemble(
    supports: &[Support],
    c0: f64,
    sigma: f64,
    epsilon: f64,
    d: usize,
) -> Result<RestrictedEnsemble, EnsembleError> {
    if !epsilon.is_finite() || epsilon <= 0.0 || epsilon >= 1.0 {
        return Err(EnsembleError::BadParameter(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    if !c0.is_finite() || c0 <= 0.0 {
        return Err(EnsembleError::BadParameter(format!("C0 must be > 0, got {c0}")));
    }
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(EnsembleError::BadParameter(format!(
            "sigma must be > 0, got {sigma}"
        )));
    }
    let s = check_supports(supports, d)?;
    let low = noisy_low_value(c0, sigma, epsilon, d);
    let high = noisy_high_value(c0, sigma, epsilon, d);
    Ok(materialize(
        supports.to_vec(),
        d,
        s,
        low,
        high,
        EnsembleMeta::Noisy { c0, sigma, epsilon },
    ))
}

/// All `|supports| * 2^s` sign-valued noiseless members.
pub fn build_noiseless_ensemble(
    supports: &[Support],
    d: usize,
) -> Result<RestrictedEnsemble, EnsembleError> {
    let s = check_supports(supports, d)?;
    Ok(materialize(
        supports.to_vec(),
        d,
        s,
        1.0,
        -1.0,
        EnsembleMeta::Noiseless,
    ))
}

impl RestrictedEnsemble {
    pub fn meta(&self) -> EnsembleMeta {
        self.meta
    }

    pub fn mode(&self) -> Mode {
        self.meta.mode()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn len(&self) -> usize {
        self.supports.len() << self.s
    }

    pub fn is_empty(&self) -> bool {
        self.supports.is_empty()
    }

    pub fn supports(&self) -> &[Support] {
        &self.supports
    }

    pub fn member(&self, index: usize) -> &[f64] {
        &self.values[index * self.d..(index + 1) * self.d]
    }

    pub fn members(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.d)
    }

    pub fn support_of(&self, index: usize) -> &Support {
        &self.supports[index >> self.s]
    }

    /// Bit pattern of the member within its support block.
    pub fn pattern_of(&self, index: usize) -> usize {
        index & ((1 << self.s) - 1)
    }

    /// Uniform member index; consumes exactly one `random_range` call.
    pub fn sample_index(&self, rng: &mut impl Rng) -> Result<usize, EnsembleError> {
        if self.is_empty() {
            return Err(EnsembleError::Empty);
        }
        Ok(rng.random_range(0..self.len()))
    }

    /// Uniform member drawn from the ensemble.
    pub fn sample_beta(&self, rng: &mut impl Rng) -> Result<&[f64], EnsembleError> {
        Ok(self.member(self.sample_index(rng)?))
    }

    /// Distinct channel parameters with member counts, ordered by first
    /// occurrence. Noisy: squared Euclidean norm. Noiseless: marginal mean
    /// `sum(beta) / (s * sqrt 2)`.
    ///
    /// Values are accumulated in sorted order so that members with the same
    /// value multiset land in the same class bit-for-bit.
    pub fn channel_classes(&self) -> Vec<ChannelClass> {
        let mut by_bits: std::collections::HashMap<u64, (usize, usize)> =
            std::collections::HashMap::new();
        for (ix, member) in self.members().enumerate() {
            let param = match self.meta {
                EnsembleMeta::Noisy { .. } => canonical_sq_norm(member),
                EnsembleMeta::Noiseless => {
                    canonical_sum(member) / (self.s as f64 * std::f64::consts::SQRT_2)
                }
            };
            let entry = by_bits.entry(param.to_bits()).or_insert((0, ix));
            entry.0 += 1;
        }
        let mut classes: Vec<ChannelClass> = by_bits
            .into_iter()
            .map(|(bits, (count, first_index))| ChannelClass {
                param: f64::from_bits(bits),
                count,
                first_index,
            })
            .collect();
        classes.sort_by_key(|c| c.first_index);
        classes
    }

    /// Serialize to the columnar text format: key/value header, then one
    /// line per member with the support indices followed by the support
    /// values.
    pub fn to_text(&self, spec: &ConstructionSpec) -> String {
        let mut out = String::new();
        out.push_str("# restricted ensemble v1\n");
        out.push_str(&format!("mode {}\n", self.mode()));
        out.push_str(&format!("d {}\n", self.d));
        out.push_str(&format!("s {}\n", self.s));
        out.push_str(&format!("g {}\n", spec.g()));
        out.push_str(&format!("B {}\n", spec.budget()));
        out.push_str(&format!("rho {}\n", spec.rho()));
        if let EnsembleMeta::Noisy { c0, sigma, epsilon } = self.meta {
            out.push_str(&format!("C0 {}\n", format_float(c0)));
            out.push_str(&format!("sigma {}\n", format_float(sigma)));
            out.push_str(&format!("epsilon {}\n", format_float(epsilon)));
        }
        out.push_str(&format!("members {}\n", self.len()));
        for ix in 0..self.len() {
            let support = self.support_of(ix);
            let member = self.member(ix);
            let mut first = true;
            for &i in support.indices() {
                if !first {
                    out.push(' ');
                }
                out.push_str(&i.to_string());
                first = false;
            }
            for &i in support.indices() {
                out.push(' ');
                out.push_str(&format_float(member[i]));
            }
            out.push('\n');
        }
        out
    }

    /// Parse the columnar text format back into an ensemble plus the spec
    /// echoed in its header. Member values are taken as-is, so damaged
    /// files surface through the downstream checks rather than here.
    pub fn from_text(text: &str) -> Result<(RestrictedEnsemble, ConstructionSpec), EnsembleError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        });
        let mut header: std::collections::HashMap<String, String> = std::collections::HashMap::new();
        let mut member_count = None;
        for (line_ix, raw) in lines.by_ref() {
            let mut parts = raw.trim().splitn(2, char::is_whitespace);
            let key = parts.next().unwrap_or_default().to_string();
            let value = parts
                .next()
                .ok_or(EnsembleError::Parse {
                    line: line_ix + 1,
                    message: format!("header line {raw:?} has no value"),
                })?
                .trim()
                .to_string();
            if key == "members" {
                member_count = Some(value.parse::<usize>().map_err(|_| EnsembleError::Parse {
                    line: line_ix + 1,
                    message: format!("bad member count {value:?}"),
                })?);
                break;
            }
            header.insert(key, value);
        }
        let member_count = member_count.ok_or(EnsembleError::Parse {
            line: 0,
            message: "missing `members` header line".into(),
        })?;

        let get = |key: &str| {
            header.get(key).cloned().ok_or(EnsembleError::Parse {
                line: 0,
                message: format!("missing header key {key:?}"),
            })
        };
        let parse_usize = |key: &str| -> Result<usize, EnsembleError> {
            get(key)?.parse().map_err(|_| EnsembleError::Parse {
                line: 0,
                message: format!("header key {key:?} is not an integer"),
            })
        };
        let parse_f64 = |key: &str| -> Result<f64, EnsembleError> {
            get(key)?.parse().map_err(|_| EnsembleError::Parse {
                line: 0,
                message: format!("header key {key:?} is not a float"),
            })
        };

        let mode: Mode = get("mode")?.parse().map_err(|e| EnsembleError::Parse {
            line: 0,
            message: e,
        })?;
        let d = parse_usize("d")?;
        let s = parse_usize("s")?;
        let g = parse_usize("g")?;
        let budget = parse_usize("B")? as u64;
        let rho = parse_usize("rho")?;
        let spec = ConstructionSpec::new(d, s, g, budget, rho).map_err(|e| EnsembleError::Parse {
            line: 0,
            message: format!("header spec invalid: {e}"),
        })?;
        let meta = match mode {
            Mode::Noisy => EnsembleMeta::Noisy {
                c0: parse_f64("C0")?,
                sigma: parse_f64("sigma")?,
                epsilon: parse_f64("epsilon")?,
            },
            Mode::Noiseless => EnsembleMeta::Noiseless,
        };

        let mut supports: Vec<Support> = Vec::new();
        let mut values = vec![0.0f64; member_count * d];
        let mut row = 0usize;
        let per_support = 1usize << s;
        for (line_ix, raw) in lines {
            if row >= member_count {
                return Err(EnsembleError::Parse {
                    line: line_ix + 1,
                    message: "more member lines than the declared count".into(),
                });
            }
            let toks: Vec<&str> = raw.split_whitespace().collect();
            if toks.len() != 2 * s {
                return Err(EnsembleError::Parse {
                    line: line_ix + 1,
                    message: format!("expected {} fields, got {}", 2 * s, toks.len()),
                });
            }
            let mut indices = Vec::with_capacity(s);
            for tok in &toks[..s] {
                indices.push(tok.parse::<usize>().map_err(|_| EnsembleError::Parse {
                    line: line_ix + 1,
                    message: format!("bad support index {tok:?}"),
                })?);
            }
            let support = Support::new(indices).map_err(|e| EnsembleError::Parse {
                line: line_ix + 1,
                message: e.to_string(),
            })?;
            if let Some(&bad) = support.indices().iter().find(|&&i| i >= d) {
                return Err(EnsembleError::IndexOutOfRange { index: bad, d });
            }
            if row.is_multiple_of(per_support) {
                supports.push(support.clone());
            }
            let base = row * d;
            for (k, tok) in toks[s..].iter().enumerate() {
                let v = tok.parse::<f64>().map_err(|_| EnsembleError::Parse {
                    line: line_ix + 1,
                    message: format!("bad value {tok:?}"),
                })?;
                values[base + support.indices()[k]] = v;
            }
            row += 1;
        }
        if row != member_count {
            return Err(EnsembleError::Parse {
                line: 0,
                message: format!("declared {member_count} members, found {row}"),
            });
        }
        if supports.len() << s != member_count {
            return Err(EnsembleError::Parse {
                line: 0,
                message: format!(
                    "member count {member_count} is not |supports| * 2^s = {}",
                    supports.len() << s
                ),
            });
        }
        Ok((
            RestrictedEnsemble {
                meta,
                d,
                s,
                supports,
                values,
            },
            spec,
        ))
    }
}

/// 17 significant digits: enough for bit-stable f64 round trips.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Sum of squares over nonzero entries, accumulated in sorted order so the
/// result is a pure function of the value multiset.
pub(crate) fn canonical_sq_norm(v: &[f64]) -> f64 {
    let mut nz: Vec<f64> = v.iter().copied().filter(|x| *x != 0.0).collect();
    nz.sort_by(f64::total_cmp);
    nz.iter().map(|x| x * x).sum()
}

/// Signed sum over nonzero entries in sorted order.
pub(crate) fn canonical_sum(v: &[f64]) -> f64 {
    let mut nz: Vec<f64> = v.iter().copied().filter(|x| *x != 0.0).collect();
    nz.sort_by(f64::total_cmp);
    nz.iter().sum()
}
