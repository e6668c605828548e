//! Length-ratio hallucination check for prompted transcriptions.

use serde::{Deserialize, Serialize};

use crate::backends::{Flag, Hypothesis};
use crate::error::{Error, Result};
use crate::ratio::Rational;
use crate::textnorm::TokenSeq;

/// A hypothesis is flagged when it is strictly longer than
/// `upper_ratio * |read|` or strictly shorter than `lower_ratio * |read|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HallucinationPolicy {
    #[serde(alias = "upper")]
    pub upper_ratio: Rational,
    #[serde(alias = "lower")]
    pub lower_ratio: Rational,
}

impl Default for HallucinationPolicy {
    /// 20% longer or 5% shorter than the read text.
    fn default() -> Self {
        HallucinationPolicy {
            upper_ratio: Rational::new(6, 5).expect("nonzero denominator"),
            lower_ratio: Rational::new(19, 20).expect("nonzero denominator"),
        }
    }
}

impl HallucinationPolicy {
    pub fn new(upper_ratio: Rational, lower_ratio: Rational) -> Result<Self> {
        let policy = HallucinationPolicy {
            upper_ratio,
            lower_ratio,
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower_ratio.is_zero()
            || self.lower_ratio >= Rational::ONE
            || self.upper_ratio <= Rational::ONE
        {
            return Err(Error::Config(format!(
                "hallucination ratios must satisfy 0 < lower < 1 < upper (lower={}, upper={})",
                self.lower_ratio, self.upper_ratio
            )));
        }
        Ok(())
    }

    /// Length-only form of [`is_hallucination`].
    pub fn flags_length(&self, hyp_len: usize, read_len: usize) -> Result<bool> {
        if read_len == 0 {
            return Err(Error::EmptyReference);
        }
        let (h, r) = (hyp_len as u64, read_len as u64);
        Ok(self.upper_ratio.cmp_scaled(h, r).is_gt() || self.lower_ratio.cmp_scaled(h, r).is_lt())
    }
}

pub fn is_hallucination(hypothesis: &TokenSeq, read_text: &TokenSeq, policy: &HallucinationPolicy) -> Result<bool> {
    policy.flags_length(hypothesis.len(), read_text.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuardOutcome {
    Kept,
    Replaced,
    ReplacedFallbackAlsoFlagged,
}

/// Keeps `primary` unless it is flagged, in which case `fallback` is
/// returned. A flagged fallback is still returned, marked as such.
pub fn guard(
    primary: Hypothesis,
    fallback: Hypothesis,
    read_text: &TokenSeq,
    policy: &HallucinationPolicy,
) -> Result<(Hypothesis, GuardOutcome)> {
    if !is_hallucination(&primary.tokens, read_text, policy)? {
        let mut kept = primary;
        kept.flags.insert(Flag::Kept);
        return Ok((kept, GuardOutcome::Kept));
    }
    let mut replaced = fallback;
    replaced.flags.insert(Flag::Replaced);
    if is_hallucination(&replaced.tokens, read_text, policy)? {
        replaced.flags.insert(Flag::FallbackAlsoFlagged);
        return Ok((replaced, GuardOutcome::ReplacedFallbackAlsoFlagged));
    }
    Ok((replaced, GuardOutcome::Replaced))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::HypothesisSource;
    use proptest::prelude::*;

    fn words(n: usize) -> TokenSeq {
        (0..n).map(|i| format!("w{i}")).collect()
    }

    fn hyp(n: usize, source: HypothesisSource) -> Hypothesis {
        Hypothesis::new("r1", words(n), source)
    }

    #[test]
    fn boundaries_are_strict() {
        let p = HallucinationPolicy::default();
        let read = words(100);
        assert!(is_hallucination(&words(121), &read, &p).unwrap());
        assert!(!is_hallucination(&words(120), &read, &p).unwrap());
        assert!(!is_hallucination(&words(100), &read, &p).unwrap());
        assert!(!is_hallucination(&words(95), &read, &p).unwrap());
        assert!(is_hallucination(&words(94), &read, &p).unwrap());
    }

    #[test]
    fn empty_read_text_is_an_error() {
        let p = HallucinationPolicy::default();
        assert!(is_hallucination(&words(1), &TokenSeq::new(), &p).is_err());
    }

    #[test]
    fn policy_validation() {
        let r = |s: &str| s.parse::<Rational>().unwrap();
        assert!(HallucinationPolicy::new(r("1.2"), r("0.95")).is_ok());
        assert!(HallucinationPolicy::new(r("1"), r("0.95")).is_err());
        assert!(HallucinationPolicy::new(r("1.2"), r("1")).is_err());
        assert!(HallucinationPolicy::new(r("1.2"), r("0")).is_err());
        assert_eq!(HallucinationPolicy::default().upper_ratio, r("1.20"));
        assert_eq!(HallucinationPolicy::default().lower_ratio, r("0.95"));
    }

    #[test]
    fn guard_outcomes() {
        let p = HallucinationPolicy::default();
        let read = words(10);
        let (h, o) = guard(hyp(10, HypothesisSource::WhisperPrompted), hyp(10, HypothesisSource::WhisperPlain), &read, &p).unwrap();
        assert_eq!(o, GuardOutcome::Kept);
        assert_eq!(h.source, HypothesisSource::WhisperPrompted);
        assert!(h.flags.contains(&Flag::Kept));

        let (h, o) = guard(hyp(13, HypothesisSource::WhisperPrompted), hyp(10, HypothesisSource::WhisperPlain), &read, &p).unwrap();
        assert_eq!(o, GuardOutcome::Replaced);
        assert_eq!(h.source, HypothesisSource::WhisperPlain);
        assert!(h.flags.contains(&Flag::Replaced));

        let (h, o) = guard(hyp(13, HypothesisSource::WhisperPrompted), hyp(2, HypothesisSource::WhisperPlain), &read, &p).unwrap();
        assert_eq!(o, GuardOutcome::ReplacedFallbackAlsoFlagged);
        assert_eq!(h.tokens, words(2));
        assert!(h.flags.contains(&Flag::Replaced) && h.flags.contains(&Flag::FallbackAlsoFlagged));
    }

    proptest! {
        #[test]
        fn unflagged_lengths_form_one_interval(read_len in 1usize..400) {
            let p = HallucinationPolicy::default();
            let ok: Vec<usize> = (0..=read_len * 2)
                .filter(|&h| !p.flags_length(h, read_len).unwrap())
                .collect();
            prop_assert!(!ok.is_empty());
            prop_assert_eq!(ok.last().unwrap() - ok[0] + 1, ok.len());
        }

        #[test]
        fn guard_returns_one_of_its_inputs(a in 0usize..30, b in 0usize..30, r in 1usize..30) {
            let p = HallucinationPolicy::default();
            let primary = hyp(a, HypothesisSource::WhisperPrompted);
            let fallback = hyp(b, HypothesisSource::WhisperPlain);
            let (out, _) = guard(primary.clone(), fallback.clone(), &words(r), &p).unwrap();
            prop_assert!(out.tokens == primary.tokens && out.source == primary.source
                || out.tokens == fallback.tokens && out.source == fallback.source);
        }
    }
}
