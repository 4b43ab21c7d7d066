//! Logical abduction over extracted groundings and construction of the
//! multiple abduced targets.
//!
//! Abduction is a fixed three-stage revision of each branch's runs:
//! prune runs shorter than `l_min`, bridge gaps narrower than `g_min`, then
//! erode or dilate one element at a time until the positive fraction is
//! inside its bounds. Targets are then built from the revised runs by a
//! declarative list of [`TargetSpec`]s.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knowledge::{
    extract_groundings_all, rasterize, reason, reason_all, GroundingSet, Inconsistency, KnowledgeBase, Span,
};
use crate::model::NoisySampleDnls;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbductionPolicy {
    pub prune_short_runs: bool,
    pub bridge_narrow_gaps: bool,
    pub enforce_fraction_bounds: bool,
}

impl Default for AbductionPolicy {
    fn default() -> Self {
        Self { prune_short_runs: true, bridge_narrow_gaps: true, enforce_fraction_bounds: true }
    }
}

impl AbductionPolicy {
    pub fn any(&self) -> bool {
        self.prune_short_runs || self.bridge_narrow_gaps || self.enforce_fraction_bounds
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevisedGroundingSet {
    pub source: usize,
    pub n: usize,
    pub runs: Vec<Span>,
    /// Inconsistencies that remain after revision.
    pub residuals: Vec<Inconsistency>,
    /// Position of this branch's revised groundings in the flattened list
    /// over all branches.
    pub revision_range: Range<usize>,
}

impl RevisedGroundingSet {
    pub fn mask(&self) -> Vec<u8> {
        rasterize(&self.runs, self.n)
    }

    pub fn positive_count(&self) -> usize {
        self.runs.iter().map(|r| r.len).sum()
    }

    /// Runs plus gaps plus the single fraction grounding.
    pub fn grounding_count(&self) -> usize {
        self.runs.len() + self.runs.len().saturating_sub(1) + 1
    }
}

/// Revises one branch's groundings so that the knowledge base holds.
///
/// `ics` must be exactly `reason(gs, kb)`.
pub fn logically_abduce(
    gs: &GroundingSet,
    ics: &[Inconsistency],
    kb: &KnowledgeBase,
    policy: &AbductionPolicy,
) -> Result<RevisedGroundingSet> {
    if reason(gs, kb) != ics {
        return Err(Error::PreconditionViolation);
    }
    let n = gs.n;
    let mut runs = gs.runs().to_vec();

    if policy.prune_short_runs {
        if let Some(l_min) = kb.min_run_length() {
            runs.retain(|r| r.len >= l_min);
        }
    }
    if policy.bridge_narrow_gaps {
        if let Some(g_min) = kb.min_gap() {
            runs = bridge(&runs, g_min);
        }
    }
    if policy.enforce_fraction_bounds {
        if let Some((p_min, p_max)) = kb.fraction_bounds() {
            let bounds = FractionWindow { n, p_min, p_max };
            let floor = kb.min_run_length().unwrap_or(1);
            let g_min = kb.min_gap().unwrap_or(1);
            erode_to_bound(&mut runs, bounds, floor);
            dilate_to_bound(&mut runs, bounds, g_min);
            if bounds.under(count(&runs)) && !runs.is_empty() {
                // Every remaining step was a merge that overshoots p_max:
                // take the overshoot, then erode back one element at a time.
                dilate_to_bound(&mut runs, FractionWindow { p_max: 1.0, ..bounds }, g_min);
                erode_to_bound(&mut runs, bounds, floor);
            }
        }
    }

    let revised = GroundingSet::from_runs(gs.source, n, runs)?;
    let residuals = reason(&revised, kb);
    let runs = revised.runs().to_vec();
    let z = runs.len() + runs.len().saturating_sub(1) + 1;
    Ok(RevisedGroundingSet { source: gs.source, n, runs, residuals, revision_range: 0..z })
}

/// Abduces every branch; revision ranges are laid out consecutively in branch
/// order.
pub fn logically_abduce_all(
    gsets: &[GroundingSet],
    ics: &[Vec<Inconsistency>],
    kb: &KnowledgeBase,
    policy: &AbductionPolicy,
) -> Result<Vec<RevisedGroundingSet>> {
    if gsets.len() != ics.len() {
        return Err(Error::DimensionMismatch { expected: gsets.len(), found: ics.len() });
    }
    let mut revised = gsets
        .par_iter()
        .zip(ics.par_iter())
        .map(|(gs, ic)| logically_abduce(gs, ic, kb, policy))
        .collect::<Result<Vec<_>>>()?;
    let mut offset = 0;
    for r in &mut revised {
        let z = r.grounding_count();
        r.revision_range = offset..offset + z;
        offset += z;
    }
    Ok(revised)
}

fn bridge(runs: &[Span], g_min: usize) -> Vec<Span> {
    let mut out: Vec<Span> = Vec::with_capacity(runs.len());
    for &r in runs {
        match out.last_mut() {
            Some(last) if r.start - last.end() < g_min => last.len = r.end() - last.start,
            _ => out.push(r),
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct FractionWindow {
    n: usize,
    p_min: f64,
    p_max: f64,
}

impl FractionWindow {
    // Same arithmetic as `reason`, so stage decisions agree with re-reasoning.
    fn over(&self, count: usize) -> bool {
        count as f64 / self.n as f64 > self.p_max
    }

    fn under(&self, count: usize) -> bool {
        (count as f64 / self.n as f64) < self.p_min
    }
}

fn count(runs: &[Span]) -> usize {
    runs.iter().map(|r| r.len).sum()
}

/// Shrinks runs from their ends, alternating left and right end per pass,
/// never below `floor`. Once nothing can shrink, deletes the smallest run
/// (ties by start) and continues.
fn erode_to_bound(runs: &mut Vec<Span>, bounds: FractionWindow, floor: usize) {
    let mut total = count(runs);
    let mut pass = 0usize;
    while bounds.over(total) && !runs.is_empty() {
        let from_left = pass % 2 == 0;
        let mut changed = false;
        for r in runs.iter_mut() {
            if !bounds.over(total) {
                break;
            }
            if r.len > floor {
                if from_left {
                    r.start += 1;
                }
                r.len -= 1;
                total -= 1;
                changed = true;
            }
        }
        if !changed {
            let (idx, _) = runs
                .iter()
                .enumerate()
                .min_by_key(|(_, r)| (r.len, r.start))
                .expect("runs is nonempty");
            total -= runs.remove(idx).len;
        }
        pass += 1;
    }
}

enum Growth {
    Blocked,
    Grew,
    /// The run at this index was absorbed into its left neighbour.
    MergedLeft,
}

/// Grows runs by one element at a time, alternating left and right end per
/// pass, until the fraction reaches `p_min`. A step that would leave a gap
/// narrower than `g_min` merges the two runs; steps that would push the
/// fraction above `p_max` are skipped.
fn dilate_to_bound(runs: &mut Vec<Span>, bounds: FractionWindow, g_min: usize) {
    let n = bounds.n;
    let mut total = count(runs);
    let mut pass = 0usize;
    let mut idle_passes = 0;
    while bounds.under(total) && !runs.is_empty() && idle_passes < 2 {
        let from_left = pass % 2 == 0;
        let mut changed = false;
        let mut idx = 0;
        while idx < runs.len() && bounds.under(total) {
            match grow(runs, idx, from_left, n, g_min, bounds, &mut total) {
                Growth::Blocked => idx += 1,
                Growth::Grew => {
                    changed = true;
                    idx += 1;
                }
                Growth::MergedLeft => changed = true,
            }
        }
        idle_passes = if changed { 0 } else { idle_passes + 1 };
        pass += 1;
    }
}

fn grow(
    runs: &mut Vec<Span>,
    idx: usize,
    from_left: bool,
    n: usize,
    g_min: usize,
    bounds: FractionWindow,
    total: &mut usize,
) -> Growth {
    let r = runs[idx];
    if from_left {
        if r.start == 0 {
            return Growth::Blocked;
        }
        match idx.checked_sub(1).map(|p| runs[p]) {
            Some(prev) if r.start - 1 - prev.end() < g_min => {
                let added = r.start - prev.end();
                if bounds.over(*total + added) {
                    return Growth::Blocked;
                }
                runs[idx - 1].len = r.end() - prev.start;
                runs.remove(idx);
                *total += added;
                Growth::MergedLeft
            }
            _ => {
                if bounds.over(*total + 1) {
                    return Growth::Blocked;
                }
                runs[idx].start -= 1;
                runs[idx].len += 1;
                *total += 1;
                Growth::Grew
            }
        }
    } else {
        if r.end() == n {
            return Growth::Blocked;
        }
        match runs.get(idx + 1).copied() {
            Some(next) if next.start - (r.end() + 1) < g_min => {
                let added = next.start - r.end();
                if bounds.over(*total + added) {
                    return Growth::Blocked;
                }
                runs[idx].len = next.end() - r.start;
                runs.remove(idx + 1);
                *total += added;
                Growth::Grew
            }
            _ => {
                if bounds.over(*total + 1) {
                    return Growth::Blocked;
                }
                runs[idx].len += 1;
                *total += 1;
                Growth::Grew
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combiner {
    PerBranch,
    Intersection,
    Union,
    SoftVote,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub target_id: usize,
    pub branches: Vec<usize>,
    pub combiner: Combiner,
    #[serde(default = "default_soft_boundary_width")]
    pub soft_boundary_width: usize,
}

fn default_soft_boundary_width() -> usize {
    1
}

impl TargetSpec {
    fn check(&self, d: usize, n: usize) -> Result<()> {
        let target_id = self.target_id;
        if self.branches.is_empty() {
            return Err(Error::InvalidSpec { target_id, reason: "no branches".into() });
        }
        if self.combiner == Combiner::PerBranch && self.branches.len() != 1 {
            return Err(Error::InvalidSpec {
                target_id,
                reason: "per_branch needs exactly one branch".into(),
            });
        }
        if let Some(&branch) = self.branches.iter().find(|&&b| b >= d) {
            return Err(Error::SpecOutOfRange { target_id, branch, d });
        }
        if self.soft_boundary_width >= n {
            return Err(Error::WidthTooLarge { width: self.soft_boundary_width, n });
        }
        Ok(())
    }
}

/// One per-branch target per branch, then the intersection and the union of
/// all branches (`m = d + 2`).
pub fn default_specs(d: usize, soft_boundary_width: usize) -> Vec<TargetSpec> {
    let all: Vec<usize> = (0..d).collect();
    let mut specs: Vec<TargetSpec> = (0..d)
        .map(|b| TargetSpec {
            target_id: b,
            branches: vec![b],
            combiner: Combiner::PerBranch,
            soft_boundary_width,
        })
        .collect();
    specs.push(TargetSpec {
        target_id: d,
        branches: all.clone(),
        combiner: Combiner::Intersection,
        soft_boundary_width,
    });
    specs.push(TargetSpec { target_id: d + 1, branches: all, combiner: Combiner::Union, soft_boundary_width });
    specs
}

/// `m` abduced targets over `n` instances, one row per target.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetMatrix {
    rows: Vec<Vec<f64>>,
}

impl TargetMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.first().map(Vec::len).ok_or(Error::EmptySample)?;
        for row in &rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: row.len() });
            }
            if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidConfig("target entries must lie in [0, 1]".into()));
            }
        }
        Ok(Self { rows })
    }

    pub fn m(&self) -> usize {
        self.rows.len()
    }

    pub fn n(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, c: usize) -> &[f64] {
        &self.rows[c]
    }
}

/// The same targets regrouped per instance: `n` rows of width `m`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerInstanceTargets {
    rows: Vec<Vec<f64>>,
}

impl PerInstanceTargets {
    /// Builds directly from per-instance tuples, e.g. for single-target baselines.
    pub fn from_tuples(rows: Vec<Vec<f64>>) -> Result<Self> {
        TargetMatrix::from_rows(rows).map(|tm| Self { rows: tm.rows })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn m(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn targets(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Transposes back to the target-major matrix.
    pub fn to_matrix(&self) -> TargetMatrix {
        TargetMatrix { rows: transpose(&self.rows) }
    }
}

fn transpose(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let width = rows.first().map_or(0, Vec::len);
    (0..width).map(|j| rows.iter().map(|r| r[j]).collect()).collect()
}

pub fn rearrange(tm: &TargetMatrix) -> PerInstanceTargets {
    PerInstanceTargets { rows: transpose(&tm.rows) }
}

/// Builds one target row per spec from the revised branches.
pub fn abduce_targets(revised: &[RevisedGroundingSet], specs: &[TargetSpec], n: usize) -> Result<TargetMatrix> {
    if specs.is_empty() {
        return Err(Error::InvalidConfig("at least one target spec is required".into()));
    }
    if let Some(r) = revised.iter().find(|r| r.n != n) {
        return Err(Error::LengthMismatch { expected: n, found: r.n });
    }
    let d = revised.len();
    let masks: Vec<Vec<u8>> = revised.iter().map(RevisedGroundingSet::mask).collect();
    let mut rows = Vec::with_capacity(specs.len());
    for spec in specs {
        spec.check(d, n)?;
        let mut row = combine(&masks, spec, n);
        soften(&mut row, spec.soft_boundary_width);
        rows.push(row);
    }
    Ok(TargetMatrix { rows })
}

fn combine(masks: &[Vec<u8>], spec: &TargetSpec, n: usize) -> Vec<f64> {
    let picked: Vec<&Vec<u8>> = spec.branches.iter().map(|&b| &masks[b]).collect();
    (0..n)
        .map(|i| {
            let mut values = picked.iter().map(|m| f64::from(m[i]));
            match spec.combiner {
                Combiner::PerBranch => values.next().unwrap_or(0.0),
                Combiner::Intersection => values.fold(1.0, f64::min),
                Combiner::Union => values.fold(0.0, f64::max),
                Combiner::SoftVote => values.sum::<f64>() / picked.len() as f64,
            }
        })
        .collect()
}

/// Zero positions within `width` of a positive position become 0.5.
fn soften(row: &mut [f64], width: usize) {
    if width == 0 {
        return;
    }
    let n = row.len();
    // distance to the nearest positive position, capped at width + 1
    let cap = width + 1;
    let mut dist = vec![cap; n];
    let mut last: Option<usize> = None;
    for i in 0..n {
        if row[i] > 0.0 {
            last = Some(i);
        }
        if let Some(p) = last {
            dist[i] = (i - p).min(cap);
        }
    }
    last = None;
    for i in (0..n).rev() {
        if row[i] > 0.0 {
            last = Some(i);
        }
        if let Some(p) = last {
            dist[i] = dist[i].min(p - i);
        }
    }
    for (v, &dd) in row.iter_mut().zip(&dist) {
        if *v == 0.0 && dd <= width {
            *v = 0.5;
        }
    }
}

/// Every intermediate product of the one-step reasoning procedure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Abduction {
    pub groundings: Vec<GroundingSet>,
    pub inconsistencies: Vec<Vec<Inconsistency>>,
    pub revised: Vec<RevisedGroundingSet>,
    pub specs: Vec<TargetSpec>,
    pub targets: TargetMatrix,
}

impl Abduction {
    pub fn per_instance(&self) -> PerInstanceTargets {
        rearrange(&self.targets)
    }
}

/// Extracts groundings, reasons, abduces revised groundings and builds the
/// targets for a validated noisy sample.
pub fn one_step_reasoning(
    ns: &NoisySampleDnls,
    kb: &KnowledgeBase,
    policy: &AbductionPolicy,
    specs: &[TargetSpec],
) -> Result<Abduction> {
    let groundings = extract_groundings_all(ns)?;
    let inconsistencies = reason_all(&groundings, kb);
    if inconsistencies.iter().any(|ics| !ics.is_empty()) && !policy.any() {
        return Err(Error::InvalidConfig(
            "abduction policy disables every stage but inconsistencies exist".into(),
        ));
    }
    let revised = logically_abduce_all(&groundings, &inconsistencies, kb, policy)?;
    let targets = abduce_targets(&revised, specs, ns.n())?;
    Ok(Abduction { groundings, inconsistencies, revised, specs: specs.to_vec(), targets })
}
