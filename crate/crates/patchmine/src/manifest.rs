//! Dataset-mixture manifest.
//!
//! Stores the training-mixture sources with exact integer counts, derives
//! stage totals on demand, scales deterministically to desk size with
//! largest-remainder rounding, and validates a manifest against the
//! published aggregates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::fnv1a64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Pretrain,
    Instruct,
    Generation,
}

pub const STAGES: [Stage; 3] = [Stage::Pretrain, Stage::Instruct, Stage::Generation];

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Pretrain => "pretrain",
            Stage::Instruct => "instruct",
            Stage::Generation => "generation",
        })
    }
}

/// One named data source. Counts are exact items, never K-rounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub name: String,
    pub count: u64,
    pub stage: Stage,
    pub tags: Vec<String>,
}

impl SourceSpec {
    fn new(name: &str, count: u64, stage: Stage, tags: &[&str]) -> Self {
        SourceSpec {
            name: name.to_string(),
            count,
            stage,
            tags: tags.iter().map(|t| t.to_string()).collect(),
        }
    }
}

/// A mixture manifest. Stage totals are always recomputed from the
/// sources, never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub sources: Vec<SourceSpec>,
}

impl Manifest {
    pub fn stage_total(&self, stage: Stage) -> u64 {
        self.sources
            .iter()
            .filter(|s| s.stage == stage)
            .map(|s| s.count)
            .sum()
    }

    pub fn total(&self) -> u64 {
        self.sources.iter().map(|s| s.count).sum()
    }

    /// Instruction-stage total excluding the generation stage (1,487,000
    /// for the published manifest).
    pub fn instruct_total_exclusive(&self) -> u64 {
        self.stage_total(Stage::Instruct)
    }

    /// Instruction-stage total with the generation pairs folded in
    /// (1,500,000 for the published manifest); the published "about 1.5M"
    /// does not say which it means, so both are reported.
    pub fn instruct_total_inclusive(&self) -> u64 {
        self.stage_total(Stage::Instruct) + self.stage_total(Stage::Generation)
    }
}

/// Published aggregate counts the validator checks against.
pub mod published {
    pub const PRETRAIN_TOTAL: u64 = 1_253_000;
    pub const INSTRUCT_TOTAL_EXCLUSIVE: u64 = 1_487_000;
    pub const INSTRUCT_TOTAL_INCLUSIVE: u64 = 1_500_000;
    pub const OCR_TOTAL: u64 = 28_000;
    pub const GENERATION_TOTAL: u64 = 13_000;
}

/// The published training mixture, exact counts.
pub fn build_published_manifest() -> Manifest {
    use Stage::*;
    Manifest {
        sources: vec![
            SourceSpec::new("llava-cc3m-captions", 558_000, Pretrain, &["caption"]),
            SourceSpec::new("allava-captions", 695_000, Pretrain, &["caption"]),
            SourceSpec::new(
                "llava-mix",
                643_000,
                Instruct,
                &["conversation", "textcaps-21k-excluded"],
            ),
            SourceSpec::new("sharegpt4v", 100_000, Instruct, &["qa"]),
            SourceSpec::new("laion-gpt4v", 10_000, Instruct, &["caption"]),
            SourceSpec::new("allava-instruct", 700_000, Instruct, &["instruction"]),
            SourceSpec::new("lima-openassistant2", 6_000, Instruct, &["text-only"]),
            SourceSpec::new("docvqa", 10_000, Instruct, &["ocr"]),
            SourceSpec::new("chartqa", 4_000, Instruct, &["ocr"]),
            SourceSpec::new("dvqa", 10_000, Instruct, &["ocr"]),
            SourceSpec::new("ai2d", 4_000, Instruct, &["ocr"]),
            SourceSpec::new(
                "gen-recaption",
                8_000,
                Generation,
                &["generation", "recaption"],
            ),
            SourceSpec::new(
                "gen-incontext",
                5_000,
                Generation,
                &["generation", "incontext"],
            ),
        ],
    }
}

/// Exact scaling factor as a rational number.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fraction {
    pub num: u64,
    pub den: u64,
}

impl Fraction {
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if den == 0 {
            return Err(Error::Range {
                what: "scale factor denominator",
                value: "0".into(),
            });
        }
        Ok(Fraction { num, den })
    }

    /// Parse "a/b", a bare integer, or a plain decimal like "0.25".
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::Range {
            what: "scale factor",
            value: s.to_string(),
        };
        let s = s.trim();
        if let Some((a, b)) = s.split_once('/') {
            let num: u64 = a.trim().parse().map_err(|_| bad())?;
            let den: u64 = b.trim().parse().map_err(|_| bad())?;
            return Fraction::new(num, den);
        }
        if let Some((int, frac)) = s.split_once('.') {
            let digits = frac.len() as u32;
            if digits == 0 || digits > 9 || !frac.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            let int: u64 = if int.is_empty() {
                0
            } else {
                int.parse().map_err(|_| bad())?
            };
            let frac: u64 = frac.parse().map_err(|_| bad())?;
            let den = 10u64.pow(digits);
            return Fraction::new(int * den + frac, den);
        }
        let num: u64 = s.parse().map_err(|_| bad())?;
        Fraction::new(num, 1)
    }
}

impl std::fmt::Display for Fraction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

/// Scale every count by `factor`, preserving stage totals exactly.
///
/// Per stage, the target total is T = round(factor · stage_total), and
/// counts are apportioned by largest remainder against the exact quotas
/// count_i · T / stage_total (Hamilton apportionment, u128 arithmetic).
/// Every scaled count is within 1 of its quota, which bounds the ratio
/// drift by 1/T. Remainder ties break by a seeded per-source rank.
pub fn scale_manifest(m: &Manifest, factor: Fraction, seed: u64) -> Result<Manifest> {
    if factor.num == 0 || factor.num > factor.den {
        return Err(Error::Range {
            what: "scale factor",
            value: format!("{factor} (must satisfy 0 < factor <= 1)"),
        });
    }
    let mut out = m.clone();
    for stage in STAGES {
        let total = m.stage_total(stage) as u128;
        if total == 0 {
            continue;
        }
        // T = round(num·total/den), half away from zero.
        let num = factor.num as u128;
        let den = factor.den as u128;
        let target = (num * total * 2 + den) / (den * 2);

        let members: Vec<usize> = m
            .sources
            .iter()
            .enumerate()
            .filter(|(_, s)| s.stage == stage)
            .map(|(i, _)| i)
            .collect();

        // Quotas w.r.t. the integer target: q_i = count_i · T / total.
        let mut assigned: u128 = 0;
        let mut remainders: Vec<(u128, u64, usize)> = Vec::with_capacity(members.len());
        for &i in &members {
            let count = m.sources[i].count as u128;
            let exact_num = count * target;
            let floor = exact_num / total;
            let rem = exact_num % total;
            out.sources[i].count = floor as u64;
            assigned += floor;
            let tie_rank = seeded_rank(seed, &m.sources[i].name);
            remainders.push((rem, tie_rank, i));
        }

        // Hand out the leftover units by descending remainder; ties go to
        // the lower seeded rank, then input order.
        let leftover = (target - assigned) as usize;
        remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        for &(_, _, i) in remainders.iter().take(leftover) {
            out.sources[i].count += 1;
        }
        debug_assert_eq!(out.stage_total(stage) as u128, target);
    }
    Ok(out)
}

fn seeded_rank(seed: u64, name: &str) -> u64 {
    let mut rng = crate::tensor::Rng::new(seed ^ fnv1a64(name.as_bytes()));
    rng.next_u64()
}

/// A non-fatal observation produced by the validator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub kind: FindingKind,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FindingKind {
    DuplicateName,
    ZeroCount,
    AggregateMismatch,
    RoundingNote,
}

/// Report duplicate names, zero counts, and (when the source names match
/// the published manifest, i.e. the manifest claims to be it) divergence
/// from the published aggregates. The published pretrain sum 1,253,000 is
/// reported as a rounding note against the published rounding "about 1.2M".
pub fn validate_manifest(m: &Manifest) -> Vec<Finding> {
    let mut findings = Vec::new();

    let mut names: Vec<&str> = m.sources.iter().map(|s| s.name.as_str()).collect();
    names.sort_unstable();
    for pair in names.windows(2) {
        if pair[0] == pair[1] {
            findings.push(Finding {
                kind: FindingKind::DuplicateName,
                message: format!("duplicate source name {:?}", pair[0]),
            });
        }
    }
    for s in &m.sources {
        if s.count == 0 {
            findings.push(Finding {
                kind: FindingKind::ZeroCount,
                message: format!("source {:?} has zero items", s.name),
            });
        }
    }

    let published = build_published_manifest();
    let mut published_names: Vec<&str> = published.sources.iter().map(|s| s.name.as_str()).collect();
    published_names.sort_unstable();
    if names == published_names {
        let checks = [
            (Stage::Pretrain, published::PRETRAIN_TOTAL),
            (Stage::Instruct, published::INSTRUCT_TOTAL_EXCLUSIVE),
            (Stage::Generation, published::GENERATION_TOTAL),
        ];
        for (stage, want) in checks {
            let got = m.stage_total(stage);
            if got != want {
                findings.push(Finding {
                    kind: FindingKind::AggregateMismatch,
                    message: format!("{stage} total {got} diverges from published {want}"),
                });
            }
        }
        let ocr: u64 = m
            .sources
            .iter()
            .filter(|s| s.tags.iter().any(|t| t == "ocr"))
            .map(|s| s.count)
            .sum();
        if ocr != published::OCR_TOTAL {
            findings.push(Finding {
                kind: FindingKind::AggregateMismatch,
                message: format!("OCR subtotal {ocr} diverges from published 28,000"),
            });
        }
        if m.stage_total(Stage::Pretrain) == published::PRETRAIN_TOTAL {
            findings.push(Finding {
                kind: FindingKind::RoundingNote,
                message: "pretrain total is exactly 1,253,000; the published text rounds it to \
                          \"about 1.2M\""
                    .to_string(),
            });
        }
    }
    findings
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_manifest_totals() {
        let m = build_published_manifest();
        assert_eq!(m.stage_total(Stage::Pretrain), 1_253_000);
        assert_eq!(m.instruct_total_exclusive(), 1_487_000);
        assert_eq!(m.instruct_total_inclusive(), 1_500_000);
        assert_eq!(m.stage_total(Stage::Generation), 13_000);

        let ocr: u64 = m
            .sources
            .iter()
            .filter(|s| s.tags.iter().any(|t| t == "ocr"))
            .map(|s| s.count)
            .sum();
        assert_eq!(ocr, 28_000);
        let ocr_counts: Vec<u64> = m
            .sources
            .iter()
            .filter(|s| s.tags.iter().any(|t| t == "ocr"))
            .map(|s| s.count)
            .collect();
        assert_eq!(ocr_counts, vec![10_000, 4_000, 10_000, 4_000]);
    }

    #[test]
    fn published_manifest_is_constant() {
        assert_eq!(build_published_manifest(), build_published_manifest());
    }

    #[test]
    fn manifest_json_shape() {
        let m = build_published_manifest();
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.starts_with("{\"sources\":[{"));
        for key in ["\"name\"", "\"count\"", "\"stage\"", "\"tags\""] {
            assert!(json.contains(key));
        }
        assert!(json.contains("\"pretrain\""));
        let back: Manifest = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn negative_counts_are_unrepresentable() {
        let err = serde_json::from_str::<Manifest>(
            r#"{"sources":[{"name":"x","count":-5,"stage":"pretrain","tags":[]}]}"#,
        );
        assert!(err.is_err());
    }

    #[test]
    fn scale_identity() {
        let m = build_published_manifest();
        let scaled = scale_manifest(&m, Fraction::new(1, 1).unwrap(), 0).unwrap();
        assert_eq!(scaled, m);
    }

    #[test]
    fn scale_one_thousandth() {
        let m = build_published_manifest();
        let scaled = scale_manifest(&m, Fraction::new(1, 1000).unwrap(), 0).unwrap();
        assert_eq!(scaled.stage_total(Stage::Pretrain), 1_253);
        assert_eq!(scaled.stage_total(Stage::Instruct), 1_487);
        assert_eq!(scaled.stage_total(Stage::Generation), 13);
    }

    #[test]
    fn scale_preserves_totals_and_bounds_ratio_drift() {
        let m = build_published_manifest();
        let mut rng = crate::tensor::Rng::new(404);
        for trial in 0..100 {
            let den = 1 + (rng.next_u64() % 10_000);
            let num = 1 + (rng.next_u64() % den);
            let f = Fraction::new(num, den).unwrap();
            let scaled = scale_manifest(&m, f, trial).unwrap();
            for stage in STAGES {
                let total = m.stage_total(stage) as u128;
                let target = (f.num as u128 * total * 2 + f.den as u128) / (f.den as u128 * 2);
                assert_eq!(scaled.stage_total(stage) as u128, target, "factor {f}");
                if target == 0 {
                    continue;
                }
                for (orig, new) in m
                    .sources
                    .iter()
                    .zip(scaled.sources.iter())
                    .filter(|(o, _)| o.stage == stage)
                {
                    let drift =
                        (new.count as f64 / target as f64 - orig.count as f64 / total as f64).abs();
                    assert!(
                        drift <= 1.0 / target as f64 + 1e-12,
                        "drift {drift} for {} at {f}",
                        orig.name
                    );
                }
            }
        }
    }

    #[test]
    fn scale_is_deterministic_per_seed() {
        let m = build_published_manifest();
        let f = Fraction::new(7, 9999).unwrap();
        let a = scale_manifest(&m, f, 5).unwrap();
        let b = scale_manifest(&m, f, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scale_rejects_out_of_range() {
        let m = build_published_manifest();
        assert!(scale_manifest(&m, Fraction { num: 0, den: 5 }, 0).is_err());
        assert!(scale_manifest(&m, Fraction { num: 3, den: 2 }, 0).is_err());
        assert!(Fraction::new(1, 0).is_err());
    }

    #[test]
    fn fraction_parsing() {
        assert_eq!(
            Fraction::parse("1/1000").unwrap(),
            Fraction { num: 1, den: 1000 }
        );
        assert_eq!(Fraction::parse("1").unwrap(), Fraction { num: 1, den: 1 });
        assert_eq!(
            Fraction::parse("0.25").unwrap(),
            Fraction { num: 25, den: 100 }
        );
        assert_eq!(Fraction::parse("0").unwrap(), Fraction { num: 0, den: 1 });
        assert!(Fraction::parse("x").is_err());
        assert!(Fraction::parse("1/0").is_err());
    }

    #[test]
    fn validator_on_published_manifest_only_notes_rounding() {
        let findings = validate_manifest(&build_published_manifest());
        assert_eq!(findings.len(), 1);
        assert_eq!(findings[0].kind, FindingKind::RoundingNote);
    }

    #[test]
    fn validator_flags_duplicates_and_zero_counts() {
        let mut m = build_published_manifest();
        m.sources[1].name = m.sources[0].name.clone();
        m.sources[2].count = 0;
        let findings = validate_manifest(&m);
        assert!(findings
            .iter()
            .any(|f| f.kind == FindingKind::DuplicateName));
        assert!(findings.iter().any(|f| f.kind == FindingKind::ZeroCount));
    }

    #[test]
    fn validator_flags_aggregate_divergence() {
        let mut m = build_published_manifest();
        m.sources[0].count += 1;
        let findings = validate_manifest(&m);
        assert!(findings
            .iter()
            .any(|f| f.kind == FindingKind::AggregateMismatch));
    }
}
