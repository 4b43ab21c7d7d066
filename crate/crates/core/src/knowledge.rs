//! Declarative knowledge about the true target, the groundings extracted from
//! each noisy label sample, and the rule check that scores their violations.
//!
//! For 1-D segmentation the grounding vocabulary is maximal positive runs,
//! the zero gaps strictly between consecutive runs, and the positive fraction.
//! Rules constrain those: a minimum run length, a minimum gap width, and
//! bounds on the positive fraction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_binary, InstanceSample, Label, NoisyLabelSample, NoisySampleDnls};

/// Half-open stretch `[start, start + len)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub len: usize,
}

impl Span {
    pub fn new(start: usize, len: usize) -> Self {
        Self { start, len }
    }

    /// One past the last covered index.
    pub fn end(&self) -> usize {
        self.start + self.len
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RuleKind {
    MinRunLength { l_min: usize },
    MinGap { g_min: usize },
    PositiveFractionBounds { p_min: f64, p_max: f64 },
}

impl RuleKind {
    fn tag(&self) -> &'static str {
        match self {
            RuleKind::MinRunLength { .. } => "min_run_length",
            RuleKind::MinGap { .. } => "min_gap",
            RuleKind::PositiveFractionBounds { .. } => "positive_fraction_bounds",
        }
    }

    fn check(&self) -> std::result::Result<(), String> {
        match *self {
            RuleKind::MinRunLength { l_min } if l_min == 0 => Err("l_min must be >= 1".into()),
            RuleKind::MinGap { g_min } if g_min == 0 => Err("g_min must be >= 1".into()),
            RuleKind::PositiveFractionBounds { p_min, p_max }
                if !(0.0 <= p_min && p_min <= p_max && p_max <= 1.0) =>
            {
                Err(format!("fraction bounds must satisfy 0 <= p_min <= p_max <= 1, got [{p_min}, {p_max}]"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeRule {
    pub rule_id: usize,
    #[serde(flatten)]
    pub kind: RuleKind,
}

#[derive(Debug, Deserialize)]
struct RuleRecord {
    rule_id: Option<usize>,
    #[serde(flatten)]
    kind: RuleKind,
}

/// An ordered list of rules with unique ids and at most one rule per kind.
///
/// In JSON a rule's `rule_id` may be omitted; it then defaults to the rule's
/// position in the array.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<RuleRecord>", into = "Vec<KnowledgeRule>")]
pub struct KnowledgeBase {
    rules: Vec<KnowledgeRule>,
}

impl TryFrom<Vec<RuleRecord>> for KnowledgeBase {
    type Error = Error;

    fn try_from(records: Vec<RuleRecord>) -> Result<Self> {
        let rules = records
            .into_iter()
            .enumerate()
            .map(|(pos, r)| KnowledgeRule { rule_id: r.rule_id.unwrap_or(pos), kind: r.kind })
            .collect();
        KnowledgeBase::new(rules)
    }
}

impl From<KnowledgeBase> for Vec<KnowledgeRule> {
    fn from(kb: KnowledgeBase) -> Self {
        kb.rules
    }
}

impl KnowledgeBase {
    pub fn new(rules: Vec<KnowledgeRule>) -> Result<Self> {
        for (i, rule) in rules.iter().enumerate() {
            rule.kind
                .check()
                .map_err(|e| Error::InvalidKnowledgeBase(format!("rule {}: {e}", rule.rule_id)))?;
            for other in &rules[..i] {
                if other.rule_id == rule.rule_id {
                    return Err(Error::InvalidKnowledgeBase(format!(
                        "duplicate rule_id {}",
                        rule.rule_id
                    )));
                }
                if other.kind.tag() == rule.kind.tag() {
                    return Err(Error::InvalidKnowledgeBase(format!(
                        "more than one {} rule",
                        rule.kind.tag()
                    )));
                }
            }
        }
        Ok(Self { rules })
    }

    /// The knowledge base used by the reference segmentation task.
    pub fn reference() -> Self {
        Self::new(vec![
            KnowledgeRule { rule_id: 0, kind: RuleKind::MinRunLength { l_min: 3 } },
            KnowledgeRule { rule_id: 1, kind: RuleKind::MinGap { g_min: 2 } },
            KnowledgeRule {
                rule_id: 2,
                kind: RuleKind::PositiveFractionBounds { p_min: 0.02, p_max: 0.7 },
            },
        ])
        .expect("reference knowledge base is valid")
    }

    pub fn rules(&self) -> &[KnowledgeRule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn min_run_length(&self) -> Option<usize> {
        self.rules.iter().find_map(|r| match r.kind {
            RuleKind::MinRunLength { l_min } => Some(l_min),
            _ => None,
        })
    }

    pub fn min_gap(&self) -> Option<usize> {
        self.rules.iter().find_map(|r| match r.kind {
            RuleKind::MinGap { g_min } => Some(g_min),
            _ => None,
        })
    }

    pub fn fraction_bounds(&self) -> Option<(f64, f64)> {
        self.rules.iter().find_map(|r| match r.kind {
            RuleKind::PositiveFractionBounds { p_min, p_max } => Some((p_min, p_max)),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroundingKind {
    PositiveRun { start: usize, len: usize },
    Gap { start: usize, len: usize },
    PositiveFraction { value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grounding {
    pub source: usize,
    #[serde(flatten)]
    pub kind: GroundingKind,
}

/// Logical facts extracted from one branch.
///
/// `runs` are maximal, sorted and separated by at least one zero; `gaps` are
/// exactly the zero stretches between consecutive runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GroundingSetRecord", into = "GroundingSetRecord")]
pub struct GroundingSet {
    pub source: usize,
    pub n: usize,
    runs: Vec<Span>,
    gaps: Vec<Span>,
    positive_count: usize,
}

/// Serialized form; `gaps` and `positive_count` are checked against `runs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroundingSetRecord {
    source: usize,
    n: usize,
    runs: Vec<Span>,
    gaps: Vec<Span>,
    positive_count: usize,
    positive_fraction: f64,
}

impl From<GroundingSet> for GroundingSetRecord {
    fn from(gs: GroundingSet) -> Self {
        let positive_fraction = gs.positive_fraction();
        Self { source: gs.source, n: gs.n, runs: gs.runs, gaps: gs.gaps, positive_count: gs.positive_count, positive_fraction }
    }
}

impl TryFrom<GroundingSetRecord> for GroundingSet {
    type Error = Error;

    fn try_from(r: GroundingSetRecord) -> Result<Self> {
        let gs = GroundingSet::from_runs(r.source, r.n, r.runs)?;
        if gs.gaps != r.gaps || gs.positive_count != r.positive_count {
            return Err(Error::InvalidInstances("gaps or positive count disagree with runs".into()));
        }
        Ok(gs)
    }
}

impl GroundingSet {
    /// Builds a set from sorted, maximal, in-range runs.
    pub fn from_runs(source: usize, n: usize, runs: Vec<Span>) -> Result<Self> {
        let mut prev_end: Option<usize> = None;
        for r in &runs {
            if r.len == 0 || r.end() > n {
                return Err(Error::InvalidInstances(format!(
                    "run ({}, {}) is empty or outside [0, {n})",
                    r.start, r.len
                )));
            }
            if let Some(end) = prev_end {
                if r.start <= end {
                    return Err(Error::InvalidInstances(format!(
                        "run starting at {} overlaps or touches its predecessor",
                        r.start
                    )));
                }
            }
            prev_end = Some(r.end());
        }
        let gaps = runs
            .windows(2)
            .map(|w| Span::new(w[0].end(), w[1].start - w[0].end()))
            .collect();
        let positive_count = runs.iter().map(|r| r.len).sum();
        Ok(Self { source, n, runs, gaps, positive_count })
    }

    pub fn runs(&self) -> &[Span] {
        &self.runs
    }

    pub fn gaps(&self) -> &[Span] {
        &self.gaps
    }

    /// Number of positive positions (sum of run lengths).
    pub fn positive_count(&self) -> usize {
        self.positive_count
    }

    pub fn positive_fraction(&self) -> f64 {
        self.positive_count as f64 / self.n as f64
    }

    /// All groundings: runs, then gaps, then the positive fraction.
    pub fn groundings(&self) -> Vec<Grounding> {
        let source = self.source;
        let runs = self.runs.iter().map(|r| GroundingKind::PositiveRun { start: r.start, len: r.len });
        let gaps = self.gaps.iter().map(|g| GroundingKind::Gap { start: g.start, len: g.len });
        runs.chain(gaps)
            .chain(std::iter::once(GroundingKind::PositiveFraction { value: self.positive_fraction() }))
            .map(|kind| Grounding { source, kind })
            .collect()
    }

    pub fn rasterize(&self) -> Vec<Label> {
        rasterize(&self.runs, self.n)
    }
}

/// Maximal positive runs of a 0/1 sequence, left to right.
pub fn positive_runs(labels: &[Label]) -> Vec<Span> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, &v) in labels.iter().enumerate() {
        match (v != 0, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push(Span::new(s, i - s));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push(Span::new(s, labels.len() - s));
    }
    runs
}

/// 0/1 mask of length `n` with ones on the given spans.
pub fn rasterize(runs: &[Span], n: usize) -> Vec<Label> {
    let mut mask = vec![0; n];
    for r in runs {
        mask[r.start..r.end().min(n)].fill(1);
    }
    mask
}

pub fn extract_from_labels(labels: &[Label], source: usize) -> Result<GroundingSet> {
    if labels.is_empty() {
        return Err(Error::EmptySample);
    }
    check_binary(labels)?;
    GroundingSet::from_runs(source, labels.len(), positive_runs(labels))
}

pub fn extract_groundings(is: &InstanceSample, nls: &NoisyLabelSample, source: usize) -> Result<GroundingSet> {
    if nls.len() != is.len() {
        return Err(Error::LengthMismatch { expected: is.len(), found: nls.len() });
    }
    extract_from_labels(&nls.labels, source)
}

/// One grounding set per branch, in branch order.
pub fn extract_groundings_all(ns: &NoisySampleDnls) -> Result<Vec<GroundingSet>> {
    ns.ensure_valid()?;
    ns.dnls
        .samples
        .iter()
        .enumerate()
        .map(|(i, nls)| extract_groundings(&ns.instance_sample, nls, i))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InconsistencyKind {
    ShortRun { run_start: usize, len: usize, deficit: usize },
    NarrowGap { gap_start: usize, len: usize, deficit: usize },
    ExcessFraction { value: f64, excess: f64 },
    DeficitFraction { value: f64, deficit: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inconsistency {
    pub rule_id: usize,
    #[serde(flatten)]
    pub kind: InconsistencyKind,
    /// Elements for run/gap rules, fraction units for bound rules.
    pub severity: f64,
}

impl Inconsistency {
    pub fn is_fraction(&self) -> bool {
        matches!(
            self.kind,
            InconsistencyKind::ExcessFraction { .. } | InconsistencyKind::DeficitFraction { .. }
        )
    }
}

pub fn total_severity(ics: &[Inconsistency]) -> f64 {
    ics.iter().map(|ic| ic.severity).sum()
}

/// Scores every rule violation of `gs`, ordered by rule id then position.
pub fn reason(gs: &GroundingSet, kb: &KnowledgeBase) -> Vec<Inconsistency> {
    let mut rules: Vec<&KnowledgeRule> = kb.rules().iter().collect();
    rules.sort_by_key(|r| r.rule_id);
    let mut out = Vec::new();
    for rule in rules {
        let rule_id = rule.rule_id;
        match rule.kind {
            RuleKind::MinRunLength { l_min } => {
                out.extend(gs.runs().iter().filter(|r| r.len < l_min).map(|r| {
                    let deficit = l_min - r.len;
                    Inconsistency {
                        rule_id,
                        kind: InconsistencyKind::ShortRun { run_start: r.start, len: r.len, deficit },
                        severity: deficit as f64,
                    }
                }));
            }
            RuleKind::MinGap { g_min } => {
                out.extend(gs.gaps().iter().filter(|g| g.len < g_min).map(|g| {
                    let deficit = g_min - g.len;
                    Inconsistency {
                        rule_id,
                        kind: InconsistencyKind::NarrowGap { gap_start: g.start, len: g.len, deficit },
                        severity: deficit as f64,
                    }
                }));
            }
            RuleKind::PositiveFractionBounds { p_min, p_max } => {
                let value = gs.positive_fraction();
                if value > p_max {
                    let excess = value - p_max;
                    out.push(Inconsistency {
                        rule_id,
                        kind: InconsistencyKind::ExcessFraction { value, excess },
                        severity: excess,
                    });
                } else if value < p_min {
                    let deficit = p_min - value;
                    out.push(Inconsistency {
                        rule_id,
                        kind: InconsistencyKind::DeficitFraction { value, deficit },
                        severity: deficit,
                    });
                }
            }
        }
    }
    out
}

pub fn reason_all(gsets: &[GroundingSet], kb: &KnowledgeBase) -> Vec<Vec<Inconsistency>> {
    gsets.iter().map(|gs| reason(gs, kb)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DiverseNoisyLabelSamples;

    fn kb(rules: &[RuleKind]) -> KnowledgeBase {
        KnowledgeBase::new(
            rules.iter().enumerate().map(|(i, &kind)| KnowledgeRule { rule_id: i, kind }).collect(),
        )
        .unwrap()
    }

    #[test]
    fn extract_examples() {
        let gs = extract_from_labels(&[0, 1, 1, 0, 1], 0).unwrap();
        assert_eq!(gs.runs(), &[Span::new(1, 2), Span::new(4, 1)]);
        assert_eq!(gs.gaps(), &[Span::new(3, 1)]);
        assert_eq!(gs.positive_fraction(), 0.6);

        let empty = extract_from_labels(&[0, 0, 0], 0).unwrap();
        assert!(empty.runs().is_empty() && empty.gaps().is_empty());
        assert_eq!(empty.positive_fraction(), 0.0);

        let full = extract_from_labels(&[1, 1, 1, 1], 0).unwrap();
        assert_eq!(full.runs(), &[Span::new(0, 4)]);
        assert!(full.gaps().is_empty());
        assert_eq!(full.positive_fraction(), 1.0);
    }

    #[test]
    fn groundings_list_has_one_fraction() {
        let gs = extract_from_labels(&[0, 1, 1, 0, 1], 3).unwrap();
        let g = gs.groundings();
        assert_eq!(g.len(), 4);
        assert!(g.iter().all(|x| x.source == 3));
        let fractions = g.iter().filter(|x| matches!(x.kind, GroundingKind::PositiveFraction { .. })).count();
        assert_eq!(fractions, 1);
    }

    #[test]
    fn extract_length_mismatch() {
        let is = InstanceSample::from_features(vec![vec![0.0]; 3]).unwrap();
        let nls = NoisyLabelSample::new("a", vec![0, 1]).unwrap();
        assert!(matches!(extract_groundings(&is, &nls, 0), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn extract_all_per_branch() {
        let labels: [&[u8]; 3] = [&[0, 1, 1, 0, 1], &[0, 0, 0, 0, 0], &[1, 1, 0, 0, 0]];
        let ns = NoisySampleDnls {
            instance_sample: InstanceSample::from_features(vec![vec![0.0]; 5]).unwrap(),
            dnls: DiverseNoisyLabelSamples {
                samples: labels.iter().map(|l| NoisyLabelSample::new("x", l.to_vec()).unwrap()).collect(),
                tau_div: 0.0,
            },
            true_labels: None,
        };
        let all = extract_groundings_all(&ns).unwrap();
        assert_eq!(all.len(), 3);
        for (i, gs) in all.iter().enumerate() {
            assert_eq!(gs.source, i);
            assert_eq!(gs, &extract_groundings(&ns.instance_sample, &ns.dnls.samples[i], i).unwrap());
        }
        assert!(all[1].runs().is_empty());

        let mut dup = ns.clone();
        dup.dnls.samples[1] = dup.dnls.samples[0].clone();
        assert!(matches!(extract_groundings_all(&dup), Err(Error::InvalidDnls(_))));
    }

    #[test]
    fn reason_examples() {
        let gs = extract_from_labels(&[0, 1, 1, 0, 1], 0).unwrap();
        let kb1 = kb(&[
            RuleKind::MinRunLength { l_min: 2 },
            RuleKind::PositiveFractionBounds { p_min: 0.1, p_max: 0.5 },
        ]);
        let ics = reason(&gs, &kb1);
        assert_eq!(ics.len(), 2);
        assert_eq!(ics[0].kind, InconsistencyKind::ShortRun { run_start: 4, len: 1, deficit: 1 });
        assert_eq!(ics[0].severity, 1.0);
        match ics[1].kind {
            InconsistencyKind::ExcessFraction { value, excess } => {
                assert_eq!(value, 0.6);
                assert!((excess - 0.1).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }

        let ok = kb(&[RuleKind::MinRunLength { l_min: 1 }, RuleKind::MinGap { g_min: 1 }]);
        assert!(reason(&gs, &ok).is_empty());

        let zero = extract_from_labels(&[0; 10], 0).unwrap();
        let kb3 = kb(&[RuleKind::PositiveFractionBounds { p_min: 0.05, p_max: 0.4 }]);
        let ics = reason(&zero, &kb3);
        assert_eq!(ics.len(), 1);
        assert_eq!(ics[0].kind, InconsistencyKind::DeficitFraction { value: 0.0, deficit: 0.05 });
    }

    #[test]
    fn reason_orders_by_rule_id_then_position() {
        let gs = extract_from_labels(&[1, 0, 1, 0, 0, 1, 0, 1], 0).unwrap();
        let kb = KnowledgeBase::new(vec![
            KnowledgeRule { rule_id: 5, kind: RuleKind::MinRunLength { l_min: 2 } },
            KnowledgeRule { rule_id: 1, kind: RuleKind::MinGap { g_min: 2 } },
        ])
        .unwrap();
        let ics = reason(&gs, &kb);
        let keys: Vec<(usize, usize)> = ics
            .iter()
            .map(|ic| match ic.kind {
                InconsistencyKind::ShortRun { run_start, .. } => (ic.rule_id, run_start),
                InconsistencyKind::NarrowGap { gap_start, .. } => (ic.rule_id, gap_start),
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(keys, vec![(1, 1), (1, 6), (5, 0), (5, 2), (5, 5), (5, 7)]);
    }

    #[test]
    fn reason_all_examples() {
        let a = extract_from_labels(&[0, 1, 0, 1], 0).unwrap();
        let b = extract_from_labels(&[1, 1, 0, 0], 1).unwrap();
        let c = extract_from_labels(&[0, 1, 0, 1], 2).unwrap();
        let kb = kb(&[RuleKind::MinRunLength { l_min: 2 }]);
        let all = reason_all(&[a.clone(), b.clone(), c.clone()], &kb);
        assert_eq!(all.len(), 3);
        assert_eq!(all[1], reason(&b, &kb));
        assert_eq!(all[0], all[2]);
        let none = reason_all(&[a, b, c], &KnowledgeBase::default());
        assert!(none.iter().all(Vec::is_empty));
    }

    #[test]
    fn kb_json() {
        let kb: KnowledgeBase = serde_json::from_str(
            r#"[{"rule_id":0,"kind":"min_run_length","l_min":3},
                {"kind":"positive_fraction_bounds","p_min":0.05,"p_max":0.4},
                {"kind":"min_gap","g_min":2}]"#,
        )
        .unwrap();
        assert_eq!(kb.min_run_length(), Some(3));
        assert_eq!(kb.min_gap(), Some(2));
        assert_eq!(kb.fraction_bounds(), Some((0.05, 0.4)));
        assert_eq!(kb.rules()[1].rule_id, 1);
        let back: KnowledgeBase = serde_json::from_str(&serde_json::to_string(&kb).unwrap()).unwrap();
        assert_eq!(back, kb);
    }

    #[test]
    fn kb_rejects_bad_rules() {
        let bad = [
            r#"[{"kind":"min_run_length","l_min":0}]"#,
            r#"[{"kind":"min_gap","g_min":0}]"#,
            r#"[{"kind":"positive_fraction_bounds","p_min":0.5,"p_max":0.4}]"#,
            r#"[{"kind":"min_gap","g_min":1},{"kind":"min_gap","g_min":2}]"#,
            r#"[{"rule_id":1,"kind":"min_gap","g_min":1},{"rule_id":1,"kind":"min_run_length","l_min":2}]"#,
        ];
        for json in bad {
            assert!(serde_json::from_str::<KnowledgeBase>(json).is_err(), "{json}");
        }
    }

    #[test]
    fn from_runs_rejects_touching_runs() {
        assert!(GroundingSet::from_runs(0, 6, vec![Span::new(0, 2), Span::new(2, 1)]).is_err());
        assert!(GroundingSet::from_runs(0, 6, vec![Span::new(4, 3)]).is_err());
        assert!(GroundingSet::from_runs(0, 6, vec![Span::new(0, 2), Span::new(3, 1)]).is_ok());
    }
}
