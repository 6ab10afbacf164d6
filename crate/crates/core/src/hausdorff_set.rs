//! rho-Hausdorff measures and family dimensions of sets given by iterated covers.
//!
//! Only the construction's own generation covers are used. Deep generations are
//! kept as groups `(log_len, ln count)`; interval endpoints are materialized only
//! while they are representable and few.

use crate::error::{Error, Result};
use crate::gauge::{family_dimension_from_alpha, CompleteFamily, DimensionValue, GaugeFunction};
use crate::logmath::log_sum_exp;
use crate::trend::{self, TrendClass, TrendConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Closed interval stored as left endpoint and ln(1/length).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub left: f64,
    pub log_len: f64,
}

impl Interval {
    pub fn len(&self) -> f64 {
        (-self.log_len).exp()
    }

    pub fn right(&self) -> f64 {
        self.left + self.len()
    }
}

/// `ln_count` intervals, all of log-length `log_len`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub log_len: f64,
    pub ln_count: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub groups: Vec<Group>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intervals: Option<Vec<Interval>>,
}

impl Generation {
    pub fn from_intervals(intervals: Vec<Interval>) -> Self {
        let groups = intervals.iter().map(|i| Group { log_len: i.log_len, ln_count: 0.0 }).collect();
        Generation { groups, intervals: Some(intervals) }
    }
}

/// Lazy construction rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoverRule {
    /// keep the two outer pieces of relative length `ratio`
    Cantor {
        #[serde(default = "third")]
        ratio: f64,
    },
    /// generation k: 2^k intervals of length e^{-2^k}
    LogCantor,
    /// generation k: counts[k] intervals of ln(1/length) = log_lens[k]
    CustomLengths { counts: Vec<f64>, log_lens: Vec<f64> },
}

fn third() -> f64 {
    1.0 / 3.0
}

/// Endpoints are materialized for rule generations up to this index.
const MATERIALIZE_MAX: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeSpec {
    Explicit { generations: Vec<Vec<Interval>> },
    Rule(CoverRule),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverTree {
    generations: Vec<Generation>,
    rule: Option<CoverRule>,
}

impl CoverTree {
    pub fn from_spec(spec: TreeSpec) -> Result<Self> {
        match spec {
            TreeSpec::Explicit { generations } => {
                Self::explicit(generations.into_iter().map(Generation::from_intervals).collect())
            }
            TreeSpec::Rule(r) => Self::from_rule(r),
        }
    }

    pub fn from_rule(rule: CoverRule) -> Result<Self> {
        match &rule {
            CoverRule::Cantor { ratio } if !(*ratio > 0.0 && *ratio < 0.5) => {
                return Err(Error::BadParams(format!("cantor ratio {ratio} must lie in (0, 1/2)")))
            }
            CoverRule::CustomLengths { counts, log_lens } => {
                if counts.len() != log_lens.len() || counts.iter().any(|c| !(*c >= 1.0)) {
                    return Err(Error::BadParams("custom_lengths needs matching counts >= 1 and log_lens".into()));
                }
            }
            _ => {}
        }
        Ok(CoverTree { generations: Vec::new(), rule: Some(rule) })
    }

    pub fn cantor(ratio: f64) -> Self {
        Self::from_rule(CoverRule::Cantor { ratio }).expect("ratio in (0, 1/2)")
    }

    pub fn middle_thirds() -> Self {
        Self::cantor(1.0 / 3.0)
    }

    pub fn log_cantor() -> Self {
        CoverTree { generations: Vec::new(), rule: Some(CoverRule::LogCantor) }
    }

    /// Materialized generations, checked for finiteness and nesting.
    pub fn explicit(generations: Vec<Generation>) -> Result<Self> {
        for (k, g) in generations.iter().enumerate() {
            for gr in &g.groups {
                if !gr.log_len.is_finite() || (k > 0 && gr.log_len <= 0.0) {
                    return Err(Error::BadParams(format!("generation {k}: log-length {} invalid", gr.log_len)));
                }
            }
        }
        for (k, w) in generations.windows(2).enumerate() {
            if let (Some(a), Some(b)) = (&w[0].intervals, &w[1].intervals) {
                for iv in b {
                    let inside = a.iter().any(|p| {
                        let tol = 1e-12 * (1.0 + p.left.abs());
                        iv.left >= p.left - tol && iv.right() <= p.right() + tol
                    });
                    if !inside {
                        return Err(Error::BadParams(format!(
                            "generation {} interval at {} not contained in generation {k}",
                            k + 1,
                            iv.left
                        )));
                    }
                }
            }
        }
        Ok(CoverTree { generations, rule: None })
    }

    pub fn rule(&self) -> Option<&CoverRule> {
        self.rule.as_ref()
    }

    pub fn generation(&self, k: usize) -> Result<Generation> {
        if let Some(g) = self.generations.get(k) {
            return Ok(g.clone());
        }
        let ln2 = 2f64.ln();
        match &self.rule {
            None => Err(Error::GenerationUnavailable(k)),
            Some(CoverRule::Cantor { ratio }) => {
                let log_len = k as f64 * -ratio.ln();
                let intervals = (k <= MATERIALIZE_MAX).then(|| cantor_intervals(*ratio, k));
                Ok(Generation { groups: vec![Group { log_len, ln_count: k as f64 * ln2 }], intervals })
            }
            Some(CoverRule::LogCantor) => {
                let log_len = 2f64.powi(k as i32);
                Ok(Generation { groups: vec![Group { log_len, ln_count: k as f64 * ln2 }], intervals: None })
            }
            Some(CoverRule::CustomLengths { counts, log_lens }) => match (counts.get(k), log_lens.get(k)) {
                (Some(c), Some(l)) => Ok(Generation { groups: vec![Group { log_len: *l, ln_count: c.ln() }], intervals: None }),
                _ => Err(Error::GenerationUnavailable(k)),
            },
        }
    }
}

fn cantor_intervals(r: f64, k: usize) -> Vec<Interval> {
    let mut lefts = vec![0.0f64];
    let mut len = 1.0f64;
    for _ in 0..k {
        let next = len * r;
        lefts = lefts.iter().flat_map(|a| [*a, a + len - next]).collect();
        len = next;
    }
    let log_len = k as f64 * -r.ln();
    lefts.into_iter().map(|left| Interval { left, log_len }).collect()
}

/// ln sum_i rho(|F_i|) over generation k.
pub fn cover_sum(tree: &CoverTree, rho: &GaugeFunction, k: usize) -> Result<f64> {
    let g = tree.generation(k)?;
    let terms = |gr: &Group| gr.ln_count + rho.log_form(gr.log_len);
    if g.groups.len() > 4096 {
        let v: Vec<f64> = g.groups.par_iter().map(terms).collect();
        Ok(log_sum_exp(v))
    } else {
        Ok(log_sum_exp(g.groups.iter().map(terms)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Zero,
    Infinite,
    Finite,
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerdictConfig {
    /// required fitted change of the cover sum across the tail, in log units
    pub delta: f64,
    pub trend: TrendConfig,
}

impl Default for VerdictConfig {
    fn default() -> Self {
        VerdictConfig { delta: 0.3, trend: TrendConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictReport {
    pub verdict: Verdict,
    /// (k, ln cover sum)
    pub sums: Vec<(usize, f64)>,
    pub slope: f64,
}

/// Zero is rigorous for the construction (cover sums bound mu^rho from above);
/// Infinite is a heuristic.
pub fn measure_verdict_report(
    tree: &CoverTree,
    rho: &GaugeFunction,
    k_min: usize,
    k_max: usize,
    cfg: &VerdictConfig,
) -> Result<VerdictReport> {
    if k_max < k_min + 4 {
        return Err(Error::BadParams("k_max must be >= k_min + 4".into()));
    }
    let sums: Vec<(usize, f64)> = (k_min..=k_max).map(|k| Ok((k, cover_sum(tree, rho, k)?))).collect::<Result<_>>()?;
    let x: Vec<f64> = sums.iter().map(|s| s.0 as f64).collect();
    let y: Vec<f64> = sums.iter().map(|s| s.1).collect();
    let t = trend::classify_total(&x, &y, cfg.delta, &cfg.trend);
    let verdict = match t.class {
        TrendClass::Increasing => Verdict::Infinite,
        TrendClass::Decreasing => Verdict::Zero,
        TrendClass::Stable => Verdict::Finite,
        TrendClass::Undetermined => Verdict::Undetermined,
    };
    Ok(VerdictReport { verdict, sums, slope: t.slope })
}

pub fn measure_verdict(tree: &CoverTree, rho: &GaugeFunction, k_min: usize, k_max: usize) -> Result<Verdict> {
    Ok(measure_verdict_report(tree, rho, k_min, k_max, &VerdictConfig::default())?.verdict)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetDimensionReport {
    pub value: DimensionValue,
    /// last index with an Infinite verdict and first with a Zero verdict
    pub bracket: (f64, f64),
    pub scan: Vec<(f64, Verdict)>,
}

/// Probe range inside the family's index interval. Unbounded intervals are
/// probed up to `lo + 10`.
pub(crate) fn probe_range(family: &CompleteFamily, tol: f64) -> (f64, f64) {
    let iv = family.interval;
    let lo = if iv.lo_closed { iv.lo } else { iv.lo + tol / 4.0 };
    let hi = if iv.hi.is_infinite() {
        lo + 10.0
    } else if iv.hi_closed {
        iv.hi
    } else {
        iv.hi - tol / 4.0
    };
    (lo, hi)
}

fn rank(v: Verdict) -> Option<u8> {
    match v {
        Verdict::Infinite => Some(0),
        Verdict::Finite => Some(1),
        Verdict::Zero => Some(2),
        Verdict::Undetermined => None,
    }
}

pub fn set_dimension_report(
    tree: &CoverTree,
    family: &CompleteFamily,
    k_range: (usize, usize),
    tol: f64,
    cfg: &VerdictConfig,
) -> Result<SetDimensionReport> {
    if !(tol > 0.0) {
        return Err(Error::BadParams("alpha tolerance must be positive".into()));
    }
    let verdict = |a: f64| -> Result<Verdict> {
        Ok(measure_verdict_report(tree, &family.member(a)?, k_range.0, k_range.1, cfg)?.verdict)
    };
    let (lo, hi) = probe_range(family, tol);
    let alphas = crate::logmath::linspace(lo, hi, 17);
    let scan: Vec<(f64, Verdict)> = alphas.iter().map(|a| Ok((*a, verdict(*a)?))).collect::<Result<_>>()?;
    let ranked: Vec<(f64, u8)> = scan.iter().filter_map(|(a, v)| rank(*v).map(|r| (*a, r))).collect();
    if ranked.is_empty() {
        return Err(Error::Undetermined("every probed verdict is undetermined".into()));
    }
    for w in ranked.windows(2) {
        if w[1].1 < w[0].1 {
            return Err(Error::Undetermined(format!("verdict order breaks between alpha = {} and {}", w[0].0, w[1].0)));
        }
    }
    let last_inf = ranked.iter().filter(|r| r.1 == 0).map(|r| r.0).last();
    let first_zero = ranked.iter().find(|r| r.1 == 2).map(|r| r.0);
    let (a, b) = match (last_inf, first_zero) {
        (None, _) if ranked[0].1 == 2 => {
            return Ok(SetDimensionReport {
                value: family_dimension_from_alpha(family, f64::NEG_INFINITY),
                bracket: (f64::NEG_INFINITY, lo),
                scan,
            })
        }
        (Some(x), None) if x == hi => {
            let top = if family.interval.hi.is_infinite() { f64::INFINITY } else { hi };
            return Ok(SetDimensionReport { value: family_dimension_from_alpha(family, top), bracket: (hi, f64::INFINITY), scan });
        }
        (Some(x), Some(y)) => (x, y),
        (x, y) => (x.unwrap_or(lo), y.unwrap_or(hi)),
    };
    // edges of the Infinite and Zero regions; a Finite window may sit between them
    let mut inf_edge = (a, b);
    while inf_edge.1 - inf_edge.0 > tol / 2.0 {
        let m = 0.5 * (inf_edge.0 + inf_edge.1);
        if verdict(m)? == Verdict::Infinite {
            inf_edge.0 = m;
        } else {
            inf_edge.1 = m;
        }
    }
    let mut zero_edge = (inf_edge.0, b);
    while zero_edge.1 - zero_edge.0 > tol / 2.0 {
        let m = 0.5 * (zero_edge.0 + zero_edge.1);
        if verdict(m)? == Verdict::Zero {
            zero_edge.1 = m;
        } else {
            zero_edge.0 = m;
        }
    }
    let alpha = 0.5 * (inf_edge.0 + zero_edge.1);
    Ok(SetDimensionReport { value: family_dimension_from_alpha(family, alpha), bracket: (inf_edge.0, zero_edge.1), scan })
}

pub fn set_dimension(tree: &CoverTree, family: &CompleteFamily, k_range: (usize, usize), tol: f64) -> Result<DimensionValue> {
    Ok(set_dimension_report(tree, family, k_range, tol, &VerdictConfig::default())?.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cantor_sums() {
        let t = CoverTree::middle_thirds();
        let d = 2f64.ln() / 3f64.ln();
        let g = GaugeFunction::power(d).unwrap();
        for k in [1, 3, 20, 200] {
            assert!(cover_sum(&t, &g, k).unwrap().abs() < 1e-9);
        }
        let g = GaugeFunction::power(0.7).unwrap();
        let v = cover_sum(&t, &g, 20).unwrap();
        assert!((v - (20.0 * 2f64.ln() - 14.0 * 3f64.ln())).abs() < 1e-9);
        assert!((v + 1.518).abs() < 1e-3);
    }

    #[test]
    fn log_cantor_sums() {
        let t = CoverTree::log_cantor();
        for a in [0.5, 1.0, 2.0] {
            let g = GaugeFunction::log_power(a).unwrap();
            let v = cover_sum(&t, &g, 12).unwrap();
            assert!((v - 12.0 * (1.0 - a) * 2f64.ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn materialized_generation_matches_groups() {
        let t = CoverTree::middle_thirds();
        let g = t.generation(4).unwrap();
        let iv = g.intervals.unwrap();
        assert_eq!(iv.len(), 16);
        assert!((iv[1].left - 2.0 / 81.0).abs() < 1e-15);
        let e = CoverTree::explicit(vec![
            Generation::from_intervals(cantor_intervals(1.0 / 3.0, 1)),
            Generation::from_intervals(cantor_intervals(1.0 / 3.0, 2)),
        ]);
        assert!(e.is_ok());
        assert!(matches!(e.unwrap().generation(2), Err(Error::GenerationUnavailable(2))));
        let bad = CoverTree::explicit(vec![
            Generation::from_intervals(vec![Interval { left: 0.0, log_len: 1.0 }]),
            Generation::from_intervals(vec![Interval { left: 0.9, log_len: 2.0 }]),
        ]);
        assert!(bad.is_err());
    }

    #[test]
    fn verdicts() {
        let c = CoverTree::middle_thirds();
        let v = |t: &CoverTree, g: GaugeFunction| measure_verdict(t, &g, 5, 60).unwrap();
        assert_eq!(v(&c, GaugeFunction::power(0.7).unwrap()), Verdict::Zero);
        assert_eq!(v(&c, GaugeFunction::power(0.5).unwrap()), Verdict::Infinite);
        assert_eq!(v(&CoverTree::log_cantor(), GaugeFunction::log_power(1.0).unwrap()), Verdict::Finite);
    }

    #[test]
    fn dimensions() {
        let c = CoverTree::middle_thirds();
        let d = set_dimension(&c, &CompleteFamily::power(), (5, 60), 0.005).unwrap();
        assert!((d.alpha().unwrap() - 2f64.ln() / 3f64.ln()).abs() < 0.02, "{d:?}");
        assert_eq!(set_dimension(&c, &CompleteFamily::log_power(), (5, 60), 0.01).unwrap(), DimensionValue::One);
        let d = set_dimension(&CoverTree::log_cantor(), &CompleteFamily::log_power(), (5, 60), 0.005).unwrap();
        assert!((d.alpha().unwrap() - 1.0).abs() < 0.02, "{d:?}");
    }

    #[test]
    fn refinement_monotone_above_dimension() {
        let c = CoverTree::middle_thirds();
        let g = GaugeFunction::power(0.64).unwrap();
        for k in 1..50 {
            assert!(cover_sum(&c, &g, k + 1).unwrap() <= cover_sum(&c, &g, k).unwrap());
        }
    }
}
