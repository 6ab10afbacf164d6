//! Hausdorff dimension functions, the order they carry, and complete families.
//!
//! A gauge is evaluated through `log_form(s) = ln rho(e^{-s})` with `s = ln(1/t)`,
//! so arguments like `t = e^{-1e9}` are ordinary numbers here.
//!
//! Order convention: `rho` precedes `xi` when `rho(t)/xi(t) -> inf` as `t -> 0`.
//! In particular `t^a` precedes `t^b` for `a < b`.

use crate::error::{Error, Result};
use crate::sparse_barrier::BetaSpec;
use crate::trend::{self, TrendClass, TrendConfig};
use serde::{Deserialize, Serialize};

/// Growth function `f` given through `u -> ln f(e^u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GrowthSpec {
    /// f(L) = e^{cL}
    Exp { c: f64 },
    /// f(L) = L^p
    Power { p: f64 },
    /// f(L) = L^p (ln L)^q
    PowerLog { p: f64, q: f64 },
}

impl GrowthSpec {
    /// ln f(e^u)
    pub fn ln_f_of_log(&self, u: f64) -> f64 {
        match *self {
            GrowthSpec::Exp { c } => c * u.exp(),
            GrowthSpec::Power { p } => p * u,
            GrowthSpec::PowerLog { p, q } => p * u + q * u.ln(),
        }
    }

    /// ln f(L)
    pub fn ln_f(&self, l: f64) -> f64 {
        self.ln_f_of_log(l.ln())
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            GrowthSpec::Exp { c } => c > 0.0,
            GrowthSpec::Power { p } => p > 0.0,
            GrowthSpec::PowerLog { p, q } => p > 0.0 && q >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::NonInvertible(format!("{self:?} is not increasing")))
        }
    }

    /// Smallest u on which the log form is defined and increasing.
    fn u_min(&self) -> f64 {
        match self {
            GrowthSpec::PowerLog { .. } => 0.0,
            _ => f64::NEG_INFINITY,
        }
    }

    /// u with ln f(e^u) = y.
    pub fn inverse_log(&self, y: f64) -> Result<f64> {
        match *self {
            GrowthSpec::Exp { c } => {
                if y <= 0.0 {
                    return Err(Error::NonInvertible(format!("e^(cL) never reaches e^{y} for L > 0")));
                }
                Ok((y / c).ln())
            }
            GrowthSpec::Power { p } => Ok(y / p),
            GrowthSpec::PowerLog { .. } => {
                let mut lo = 1e-300f64;
                let mut hi = 1.0f64;
                while self.ln_f_of_log(hi) < y {
                    hi *= 2.0;
                    if hi > 1e300 {
                        return Err(Error::NonInvertible("no preimage".into()));
                    }
                }
                if self.ln_f_of_log(lo) > y {
                    return Err(Error::NonInvertible("value below range".into()));
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.ln_f_of_log(mid) < y {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Ok(0.5 * (lo + hi))
            }
        }
    }
}

fn one() -> f64 {
    1.0
}

/// Serializable gauge descriptor: `{"name": "...", "params": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", content = "params", deny_unknown_fields)]
pub enum GaugeSpec {
    /// t^alpha
    #[serde(rename = "power")]
    Power { alpha: f64 },
    /// ln(1/t)^{-alpha}
    #[serde(rename = "log_power")]
    LogPower { alpha: f64 },
    /// 1 / (ln(1/t) (ln ln(1/t))^{1+delta})
    #[serde(rename = "f_delta")]
    FDelta { delta: f64 },
    /// t^{2/(1+beta)} / ln(1/t)^{2 beta/(1+beta)}
    #[serde(rename = "rho_beta")]
    RhoBeta { beta: f64 },
    /// 1 / beta^{-1}(1/t^2)
    #[serde(rename = "G_beta", alias = "g_beta")]
    GBeta { beta: BetaSpec },
    /// g(f^{-1}(c t^{-2})) with g(x) = 1/(x (ln x)^{1+delta})
    #[serde(rename = "gensing")]
    GenSing {
        f: GrowthSpec,
        delta: f64,
        #[serde(default = "one")]
        c: f64,
    },
    /// e^{log_const} * inner(t^{s_scale})^{exponent}
    #[serde(rename = "transform")]
    Transform {
        inner: Box<GaugeSpec>,
        #[serde(default = "one")]
        s_scale: f64,
        #[serde(default = "one")]
        exponent: f64,
        #[serde(default)]
        log_const: f64,
    },
}

/// A validated gauge function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GaugeSpec", into = "GaugeSpec")]
pub struct GaugeFunction {
    spec: GaugeSpec,
    s_min: f64,
}

impl TryFrom<GaugeSpec> for GaugeFunction {
    type Error = Error;
    fn try_from(spec: GaugeSpec) -> Result<Self> {
        GaugeFunction::new(spec)
    }
}

impl From<GaugeFunction> for GaugeSpec {
    fn from(g: GaugeFunction) -> Self {
        g.spec
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::BadParams(msg.into())
}

impl GaugeSpec {
    fn check_params(&self) -> Result<()> {
        match self {
            GaugeSpec::Power { alpha } if !(*alpha > 0.0) => Err(bad("power needs alpha > 0")),
            GaugeSpec::LogPower { alpha } if !(*alpha > 0.0) => Err(bad("log_power needs alpha > 0")),
            GaugeSpec::FDelta { delta } if !(*delta > 0.0) => Err(bad("f_delta needs delta > 0")),
            GaugeSpec::RhoBeta { beta } if !(*beta > 0.0) => Err(bad("rho_beta needs beta > 0")),
            GaugeSpec::GBeta { beta } => beta.validate(),
            GaugeSpec::GenSing { f, delta, c } => {
                if !(*delta >= 0.0) || !(*c > 0.0) {
                    return Err(bad("gensing needs delta >= 0 and c > 0"));
                }
                f.validate()
            }
            GaugeSpec::Transform { inner, s_scale, exponent, log_const } => {
                if !(*s_scale > 0.0) || !(*exponent > 0.0) || !log_const.is_finite() {
                    return Err(bad("transform needs s_scale > 0, exponent > 0, finite log_const"));
                }
                inner.check_params()
            }
            _ => Ok(()),
        }
    }

    /// Lower end of the s-domain (exclusive).
    fn s_min(&self) -> f64 {
        match self {
            GaugeSpec::FDelta { .. } => 1.0,
            GaugeSpec::GBeta { beta } => beta.s_min_for_gauge(),
            GaugeSpec::GenSing { f, c, .. } => {
                // need u = f^{-1}(c e^{2s}) > max(0, u_min)
                let u0 = f.u_min().max(0.0);
                ((f.ln_f_of_log(u0) - c.ln()) / 2.0).max(0.0)
            }
            GaugeSpec::Transform { inner, s_scale, .. } => inner.s_min() / s_scale,
            _ => 0.0,
        }
    }

    fn eval(&self, s: f64) -> f64 {
        match self {
            GaugeSpec::Power { alpha } => -alpha * s,
            GaugeSpec::LogPower { alpha } => -alpha * s.ln(),
            GaugeSpec::FDelta { delta } => -s.ln() - (1.0 + delta) * s.ln().ln(),
            GaugeSpec::RhoBeta { beta } => -2.0 * s / (1.0 + beta) - 2.0 * beta / (1.0 + beta) * s.ln(),
            GaugeSpec::GBeta { beta } => -beta.inv_from_log(2.0 * s).ln(),
            GaugeSpec::GenSing { f, delta, c } => match f.inverse_log(c.ln() + 2.0 * s) {
                Ok(u) if u > 0.0 => -u - (1.0 + delta) * u.ln(),
                _ => f64::NAN,
            },
            GaugeSpec::Transform { inner, s_scale, exponent, log_const } => {
                exponent * inner.eval(s_scale * s) + log_const
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            GaugeSpec::Power { alpha } => format!("power({alpha})"),
            GaugeSpec::LogPower { alpha } => format!("log_power({alpha})"),
            GaugeSpec::FDelta { delta } => format!("f_delta({delta})"),
            GaugeSpec::RhoBeta { beta } => format!("rho_beta({beta})"),
            GaugeSpec::GBeta { beta } => format!("G_beta({})", beta.name()),
            GaugeSpec::GenSing { f, delta, c } => format!("gensing({f:?}, delta={delta}, c={c})"),
            GaugeSpec::Transform { inner, s_scale, exponent, log_const } => {
                format!("e^{log_const}*{}(t^{s_scale})^{exponent}", inner.name())
            }
        }
    }
}

impl GaugeFunction {
    pub fn new(spec: GaugeSpec) -> Result<Self> {
        spec.check_params()?;
        let s_min = spec.s_min();
        let g = GaugeFunction { spec, s_min };
        g.check_invariants()?;
        Ok(g)
    }

    pub fn power(alpha: f64) -> Result<Self> {
        Self::new(GaugeSpec::Power { alpha })
    }

    pub fn log_power(alpha: f64) -> Result<Self> {
        Self::new(GaugeSpec::LogPower { alpha })
    }

    pub fn f_delta(delta: f64) -> Result<Self> {
        Self::new(GaugeSpec::FDelta { delta })
    }

    pub fn rho_beta(beta: f64) -> Result<Self> {
        Self::new(GaugeSpec::RhoBeta { beta })
    }

    pub fn spec(&self) -> &GaugeSpec {
        &self.spec
    }

    pub fn name(&self) -> String {
        self.spec.name()
    }

    /// Domain is s > s_min, i.e. t < e^{-s_min}.
    pub fn s_min(&self) -> f64 {
        self.s_min
    }

    /// ln rho(e^{-s}); NaN outside the domain.
    pub fn log_form(&self, s: f64) -> f64 {
        if !(s > self.s_min) {
            return f64::NAN;
        }
        self.spec.eval(s)
    }

    /// rho(t) for t in (0, e^{-s_min}).
    pub fn direct_form(&self, t: f64) -> f64 {
        self.log_form(-t.ln()).exp()
    }

    /// ln rho(eps) for a length eps.
    pub fn ln_at(&self, eps: f64) -> f64 {
        self.log_form(-eps.ln())
    }

    /// rho(t^a)^g scaled by e^c.
    pub fn transformed(&self, s_scale: f64, exponent: f64, log_const: f64) -> Result<Self> {
        Self::new(GaugeSpec::Transform {
            inner: Box::new(self.spec.clone()),
            s_scale,
            exponent,
            log_const,
        })
    }

    /// Inverse gauge in log form: the s with log_form(s) = y (so rho^{-1}(e^y) = e^{-s}).
    pub fn inverse_log(&self, y: f64) -> Option<f64> {
        let mut lo = self.s_min + 1e-12 * (1.0 + self.s_min.abs());
        if !(self.log_form(lo) >= y) {
            // y above the range near s_min
            if self.log_form(lo) < y {
                return None;
            }
        }
        let mut hi = (2.0 * lo).max(1.0);
        while self.log_form(hi) > y {
            lo = hi;
            hi *= 2.0;
            if hi > 1e300 {
                return None;
            }
        }
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.log_form(mid) > y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }

    /// Strict decrease of log_form on a sampled grid and divergence to -inf.
    fn check_invariants(&self) -> Result<()> {
        let start = self.s_min.max(0.0) + 1e-3 * (1.0 + self.s_min.abs());
        let grid: Vec<f64> = (0..60).map(|i| start * 10f64.powf(i as f64 * 0.25)).collect();
        let vals: Vec<f64> = grid.iter().map(|s| self.log_form(*s)).collect();
        if vals.iter().any(|v| v.is_nan()) {
            return Err(bad(format!("{} undefined on its domain", self.name())));
        }
        for w in vals.windows(2) {
            if !(w[1] < w[0]) {
                return Err(bad(format!("{} is not strictly increasing in t", self.name())));
            }
        }
        Ok(())
    }
}

/// Result of comparing two gauges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ordering {
    Precedes,
    Equivalent,
    Succeeds,
    Undetermined,
}

/// Default s grid: 40 points from 10 to 1e8.
pub fn default_s_grid() -> Vec<f64> {
    crate::logmath::geomspace(10.0, 1e8, 40)
}

/// Compare by the trend of `ln rho - ln xi` against log10(s).
pub fn compare(rho: &GaugeFunction, xi: &GaugeFunction, s_grid: &[f64], cfg: &TrendConfig) -> Result<Ordering> {
    if s_grid.len() < 8 {
        return Err(Error::InvalidGrid(format!("need >= 8 points, got {}", s_grid.len())));
    }
    if s_grid.windows(2).any(|w| !(w[1] > w[0])) || !(s_grid[0] > 0.0) {
        return Err(Error::InvalidGrid("s grid must be positive and strictly increasing".into()));
    }
    if s_grid[s_grid.len() - 1] / s_grid[0] < 1e4 {
        return Err(Error::InvalidGrid("s grid must span at least 4 decades".into()));
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    for &s in s_grid {
        let d = rho.log_form(s) - xi.log_form(s);
        if d.is_finite() {
            x.push(s.log10());
            y.push(d);
        }
    }
    if x.len() < 8 {
        return Err(Error::InvalidGrid("fewer than 8 grid points inside both gauge domains".into()));
    }
    Ok(match trend::classify(&x, &y, cfg).class {
        TrendClass::Increasing => Ordering::Precedes,
        TrendClass::Decreasing => Ordering::Succeeds,
        TrendClass::Stable => Ordering::Equivalent,
        TrendClass::Undetermined => Ordering::Undetermined,
    })
}

/// Build a gauge from a template name and a JSON parameter object.
pub fn build_named(name: &str, params: serde_json::Value) -> Result<GaugeFunction> {
    const NAMES: [&str; 8] = ["power", "log_power", "f_delta", "rho_beta", "G_beta", "g_beta", "gensing", "transform"];
    if !NAMES.contains(&name) {
        return Err(Error::UnknownName(name.to_string()));
    }
    let v = serde_json::json!({ "name": name, "params": params });
    let spec: GaugeSpec = serde_json::from_value(v).map_err(|e| bad(e.to_string()))?;
    GaugeFunction::new(spec)
}

/// Index interval of a complete family; endpoints may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexInterval {
    pub lo: f64,
    pub hi: f64,
    #[serde(default)]
    pub lo_closed: bool,
    #[serde(default)]
    pub hi_closed: bool,
}

impl IndexInterval {
    pub fn new(lo: f64, hi: f64, lo_closed: bool, hi_closed: bool) -> Self {
        IndexInterval { lo, hi, lo_closed: lo_closed && lo.is_finite(), hi_closed: hi_closed && hi.is_finite() }
    }

    /// (0, 1]
    pub fn unit() -> Self {
        Self::new(0.0, 1.0, false, true)
    }

    /// (0, inf)
    pub fn positive() -> Self {
        Self::new(0.0, f64::INFINITY, false, false)
    }

    pub fn contains(&self, a: f64) -> bool {
        let above = if self.lo_closed { a >= self.lo } else { a > self.lo };
        let below = if self.hi_closed { a <= self.hi } else { a < self.hi };
        above && below
    }

    pub fn scaled(&self, c: f64) -> Self {
        IndexInterval { lo: self.lo * c, hi: self.hi * c, ..*self }
    }
}

/// Family template; `member(alpha)` is defined per variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    /// t^alpha
    Power,
    /// ln(1/t)^{-alpha}
    LogPower,
    /// G_beta(t)^alpha
    GPower { beta: BetaSpec },
    /// base(t)^alpha
    PowerOf { base: GaugeSpec },
    /// f(t^alpha)
    Composed { f: GaugeSpec },
    /// member(alpha) = inner.member(alpha / scale)
    Reindexed { inner: Box<FamilySpec>, scale: f64 },
}

impl FamilySpec {
    fn member_spec(&self, alpha: f64) -> GaugeSpec {
        match self {
            FamilySpec::Power => GaugeSpec::Power { alpha },
            FamilySpec::LogPower => GaugeSpec::LogPower { alpha },
            FamilySpec::GPower { beta } => GaugeSpec::Transform {
                inner: Box::new(GaugeSpec::GBeta { beta: beta.clone() }),
                s_scale: 1.0,
                exponent: alpha,
                log_const: 0.0,
            },
            FamilySpec::PowerOf { base } => GaugeSpec::Transform {
                inner: Box::new(base.clone()),
                s_scale: 1.0,
                exponent: alpha,
                log_const: 0.0,
            },
            FamilySpec::Composed { f } => GaugeSpec::Transform {
                inner: Box::new(f.clone()),
                s_scale: alpha,
                exponent: 1.0,
                log_const: 0.0,
            },
            FamilySpec::Reindexed { inner, scale } => inner.member_spec(alpha / scale),
        }
    }

    pub fn name(&self) -> String {
        match self {
            FamilySpec::Power => "power".into(),
            FamilySpec::LogPower => "log_power".into(),
            FamilySpec::GPower { beta } => format!("G_power({})", beta.name()),
            FamilySpec::PowerOf { base } => format!("powers_of({})", base.name()),
            FamilySpec::Composed { f } => format!("composed({})", f.name()),
            FamilySpec::Reindexed { inner, scale } => format!("{}[alpha*{scale}]", inner.name()),
        }
    }
}

/// Interval-indexed, order-monotone family of gauges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompleteFamily {
    pub spec: FamilySpec,
    pub interval: IndexInterval,
}

impl CompleteFamily {
    pub fn new(spec: FamilySpec, interval: IndexInterval) -> Result<Self> {
        if !(interval.lo < interval.hi) {
            return Err(bad("family interval must have lo < hi"));
        }
        if let FamilySpec::Reindexed { scale, .. } = &spec {
            if !(*scale > 0.0) {
                return Err(bad("reindexing scale must be positive"));
            }
        }
        Ok(CompleteFamily { spec, interval })
    }

    pub fn power() -> Self {
        CompleteFamily { spec: FamilySpec::Power, interval: IndexInterval::unit() }
    }

    pub fn log_power() -> Self {
        CompleteFamily { spec: FamilySpec::LogPower, interval: IndexInterval::positive() }
    }

    /// The same family with alpha replaced by c * alpha.
    pub fn reindexed(&self, c: f64) -> Self {
        CompleteFamily {
            spec: FamilySpec::Reindexed { inner: Box::new(self.spec.clone()), scale: c },
            interval: self.interval.scaled(c),
        }
    }

    pub fn name(&self) -> String {
        self.spec.name()
    }

    pub fn member(&self, alpha: f64) -> Result<GaugeFunction> {
        if !self.interval.contains(alpha) {
            return Err(bad(format!("alpha = {alpha} outside the index interval of {}", self.name())));
        }
        GaugeFunction::new(self.spec.member_spec(alpha))
    }

    /// Order monotonicity on sampled index pairs.
    pub fn check_monotone(&self, alphas: &[f64], s_grid: &[f64], cfg: &TrendConfig) -> Result<bool> {
        for w in alphas.windows(2) {
            let a = self.member(w[0])?;
            let b = self.member(w[1])?;
            if compare(&a, &b, s_grid, cfg)? != Ordering::Precedes {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// dim value in a family: a member index, or one of the two boundary values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DimensionValue {
    Member(f64),
    Zero,
    One,
}

impl DimensionValue {
    /// Order position for comparisons: Zero < Member(a) < One.
    pub fn rank(&self) -> f64 {
        match self {
            DimensionValue::Zero => f64::NEG_INFINITY,
            DimensionValue::Member(a) => *a,
            DimensionValue::One => f64::INFINITY,
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match self {
            DimensionValue::Member(a) => Some(*a),
            _ => None,
        }
    }
}

/// Map an extended-real critical index to a dimension value.
pub fn family_dimension_from_alpha(family: &CompleteFamily, alpha: f64) -> DimensionValue {
    let iv = &family.interval;
    if iv.contains(alpha) {
        DimensionValue::Member(alpha)
    } else if alpha <= iv.lo || alpha == f64::NEG_INFINITY {
        DimensionValue::Zero
    } else {
        DimensionValue::One
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Vec<f64> {
        default_s_grid()
    }

    #[test]
    fn named_log_forms() {
        let p = build_named("power", serde_json::json!({"alpha": 1.0})).unwrap();
        assert_eq!(p.log_form(3.0), -3.0);
        let lp = build_named("log_power", serde_json::json!({"alpha": 2.0})).unwrap();
        assert!((lp.log_form(std::f64::consts::E) + 2.0).abs() < 1e-15);
        let fd = GaugeFunction::f_delta(1.0).unwrap();
        let s = 10f64.exp();
        assert!((fd.log_form(s) - (-10.0 - 2.0 * 10f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn unknown_and_bad() {
        assert!(matches!(build_named("powr", serde_json::json!({})), Err(Error::UnknownName(_))));
        assert!(matches!(build_named("power", serde_json::json!({"alpha": -1.0})), Err(Error::BadParams(_))));
        assert!(matches!(build_named("power", serde_json::json!({"beta": 1.0})), Err(Error::BadParams(_))));
    }

    #[test]
    fn json_shape() {
        let g = GaugeFunction::power(0.5).unwrap();
        let v = serde_json::to_value(&g).unwrap();
        assert_eq!(v, serde_json::json!({"name": "power", "params": {"alpha": 0.5}}));
        let back: GaugeFunction = serde_json::from_value(v).unwrap();
        assert_eq!(back, g);
        let bad: std::result::Result<GaugeFunction, _> =
            serde_json::from_value(serde_json::json!({"name": "power", "params": {"alpha": 0.0}}));
        assert!(bad.is_err());
    }

    #[test]
    fn compare_examples() {
        let cfg = TrendConfig::default();
        let g = GaugeFunction::log_power(1.0).unwrap();
        let h = GaugeFunction::power(0.5).unwrap();
        assert_eq!(compare(&g, &h, &grid(), &cfg).unwrap(), Ordering::Precedes);
        assert_eq!(compare(&h, &h, &grid(), &cfg).unwrap(), Ordering::Equivalent);
        let f = GaugeFunction::f_delta(0.5).unwrap();
        // f_delta / g -> 0, so g precedes f_delta
        assert_eq!(compare(&f, &g, &grid(), &cfg).unwrap(), Ordering::Succeeds);
        assert_eq!(compare(&g, &f, &grid(), &cfg).unwrap(), Ordering::Precedes);
    }

    #[test]
    fn grid_errors() {
        let g = GaugeFunction::power(1.0).unwrap();
        let cfg = TrendConfig::default();
        assert!(compare(&g, &g, &[1.0, 2.0, 3.0], &cfg).is_err());
        let short_span: Vec<f64> = (1..20).map(|i| i as f64).collect();
        assert!(compare(&g, &g, &short_span, &cfg).is_err());
        let mut unsorted = grid();
        unsorted.swap(3, 4);
        assert!(compare(&g, &g, &unsorted, &cfg).is_err());
    }

    #[test]
    fn rho_beta_one_is_t_over_log() {
        let r = GaugeFunction::rho_beta(1.0).unwrap();
        for s in [2.0, 10.0, 1e5] {
            assert!((r.log_form(s) - (-s - s.ln())).abs() < 1e-9 * s);
        }
    }

    #[test]
    fn power_direct_form() {
        let g = GaugeFunction::power(0.37).unwrap();
        for t in crate::logmath::geomspace(1e-12, 0.1, 50) {
            let rel = (g.direct_form(t) - t.powf(0.37)).abs() / t.powf(0.37);
            assert!(rel < 1e-12);
        }
    }

    #[test]
    fn family_boundaries() {
        let f = CompleteFamily::power();
        assert_eq!(family_dimension_from_alpha(&f, 0.5), DimensionValue::Member(0.5));
        assert_eq!(family_dimension_from_alpha(&f, f64::NEG_INFINITY), DimensionValue::Zero);
        let open = CompleteFamily::new(FamilySpec::Power, IndexInterval::new(0.0, 1.0, false, false)).unwrap();
        assert_eq!(family_dimension_from_alpha(&open, 1.0), DimensionValue::One);
        assert_eq!(family_dimension_from_alpha(&open, 0.0), DimensionValue::Zero);
    }

    #[test]
    fn family_is_monotone() {
        let cfg = TrendConfig::default();
        assert!(CompleteFamily::power().check_monotone(&[0.1, 0.4, 0.9], &grid(), &cfg).unwrap());
        assert!(CompleteFamily::log_power().check_monotone(&[0.5, 1.0, 4.0], &grid(), &cfg).unwrap());
    }

    #[test]
    fn reindexed_members_coincide() {
        let f = CompleteFamily::power();
        let r = f.reindexed(2.0);
        let a = f.member(0.3).unwrap();
        let b = r.member(0.6).unwrap();
        for s in [1.0, 10.0, 1e6] {
            assert_eq!(a.log_form(s), b.log_form(s));
        }
    }

    #[test]
    fn inverse_round_trip() {
        let g = GaugeFunction::f_delta(0.5).unwrap();
        let y = g.log_form(1234.5);
        let s = g.inverse_log(y).unwrap();
        assert!((s - 1234.5).abs() < 1e-8);
    }
}
