//! Sparse barrier potentials: profile beta, length scales, the potential
//! itself, the transfer-norm sandwich, the lower-bound functional F_{n,delta}
//! and the Green-function factorization through a barrier.

use crate::error::{Error, Result};
use crate::halfline::{self, HalfLineOperator, Potential, PotValue};
use crate::logmath::{log_add, log_sub};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Scales with ln L above ln(cap) are kept symbolically.
pub const DEFAULT_CAP: f64 = 9.007_199_254_740_992e15;

/// beta in closed form; `{"kind": "exp"}`, `{"kind": "exp_scaled", "c": ...}`, ...
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BetaSpec {
    /// e^x
    Exp,
    /// e^{cx}
    ExpScaled { c: f64 },
    /// x^p (ln beta concave; only useful as a rejected example)
    Power { p: f64 },
    /// e^{x^a}
    ExpPower { a: f64 },
}

impl BetaSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            BetaSpec::Exp => true,
            BetaSpec::ExpScaled { c } => c > 0.0,
            BetaSpec::Power { p } => p > 0.0,
            BetaSpec::ExpPower { a } => a > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::BadParams(format!("invalid beta parameters {self:?}")))
        }
    }

    pub fn name(&self) -> String {
        match self {
            BetaSpec::Exp => "exp".into(),
            BetaSpec::ExpScaled { c } => format!("exp({c}x)"),
            BetaSpec::Power { p } => format!("x^{p}"),
            BetaSpec::ExpPower { a } => format!("exp(x^{a})"),
        }
    }

    /// ln beta(x)
    pub fn ln_beta(&self, x: f64) -> f64 {
        match *self {
            BetaSpec::Exp => x,
            BetaSpec::ExpScaled { c } => c * x,
            BetaSpec::Power { p } => p * x.ln(),
            BetaSpec::ExpPower { a } => x.powf(a),
        }
    }

    /// beta^{-1}(y) from ln y.
    pub fn inv_from_log(&self, ln_y: f64) -> f64 {
        match *self {
            BetaSpec::Exp => ln_y,
            BetaSpec::ExpScaled { c } => ln_y / c,
            BetaSpec::Power { p } => (ln_y / p).exp(),
            BetaSpec::ExpPower { a } => ln_y.max(0.0).powf(1.0 / a),
        }
    }

    /// beta^{-1}(y) by monotone bisection on ln beta, for cross-checking the closed form.
    pub fn inv_bisect(&self, ln_y: f64) -> f64 {
        let (mut lo, mut hi) = (1e-300f64, 1.0f64);
        while self.ln_beta(hi) < ln_y {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..2000 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.ln_beta(mid) < ln_y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    pub(crate) fn s_min_for_gauge(&self) -> f64 {
        0.0
    }

    /// alpha(x) with beta(x) = x^{alpha(x)}
    pub fn alpha(&self, x: f64) -> f64 {
        self.ln_beta(x) / x.ln()
    }
}

/// `{"beta": {...}, "eta": ...}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    pub beta: BetaSpec,
    #[serde(default = "one")]
    pub eta: f64,
}

fn one() -> f64 {
    1.0
}

/// Validated profile: ln beta increasing and convex on the test grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierProfile {
    pub beta: BetaSpec,
    pub eta: f64,
}

impl BarrierProfile {
    pub fn new(spec: ProfileSpec) -> Result<Self> {
        spec.beta.validate()?;
        if !(spec.eta > 0.0) {
            return Err(Error::BadParams("eta must be positive".into()));
        }
        let grid: Vec<f64> = (0..400).map(|i| 1.0 + 0.25 * i as f64).collect();
        let v: Vec<f64> = grid.iter().map(|x| spec.beta.ln_beta(*x)).collect();
        for (i, w) in v.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(Error::ConvexityViolation(format!("ln beta not increasing at x = {}", grid[i])));
            }
        }
        for (i, w) in v.windows(3).enumerate() {
            let d2 = w[2] - 2.0 * w[1] + w[0];
            if d2 < -1e-9 * (1.0 + w[1].abs()) {
                return Err(Error::ConvexityViolation(format!(
                    "second difference {d2:e} of ln beta at x = {}",
                    grid[i + 1]
                )));
            }
        }
        Ok(BarrierProfile { beta: spec.beta, eta: spec.eta })
    }

    pub fn exp(eta: f64) -> Result<Self> {
        Self::new(ProfileSpec { beta: BetaSpec::Exp, eta })
    }

    pub fn spec(&self) -> ProfileSpec {
        ProfileSpec { beta: self.beta.clone(), eta: self.eta }
    }

    /// beta^{-1}(xy) <= beta^{-1}(x) + beta^{-1}(y) + tol, with x, y given by their logs.
    pub fn subadditive(&self, ln_x: f64, ln_y: f64, tol: f64) -> bool {
        let b = &self.beta;
        b.inv_from_log(ln_x + ln_y) <= b.inv_from_log(ln_x) + b.inv_from_log(ln_y) + tol
    }
}

/// Length scales L_1 = 2, L_{n+1} = ceil(beta(L_n)^n).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseScales {
    /// ln L_n for every scale, symbolic or not
    pub ln_l: Vec<f64>,
    /// integer value when materializable
    pub l: Vec<Option<u64>>,
}

impl SparseScales {
    pub fn len(&self) -> usize {
        self.ln_l.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ln_l.is_empty()
    }

    /// L_n, 1-based.
    pub fn get(&self, n: usize) -> Result<u64> {
        self.l.get(n - 1).copied().flatten().ok_or(Error::ScaleNotMaterializable(n))
    }

    pub fn ln_get(&self, n: usize) -> f64 {
        self.ln_l[n - 1]
    }

    pub fn materialized(&self) -> Vec<u64> {
        self.l.iter().flatten().copied().collect()
    }
}

pub fn build_scales(profile: &BarrierProfile, k: usize, cap: f64) -> Result<SparseScales> {
    if k == 0 {
        return Err(Error::BadParams("K must be >= 1".into()));
    }
    let ln_cap = cap.ln();
    let mut ln_l = vec![2f64.ln()];
    let mut l = vec![Some(2u64)];
    for n in 1..k {
        let prev = l[n - 1];
        let ln_next = match prev {
            Some(p) => n as f64 * profile.beta.ln_beta(p as f64),
            // beta of a symbolic scale: exp(L) overflows, only exp-type profiles are closed
            None => match profile.beta {
                BetaSpec::Exp => n as f64 * ln_l[n - 1].exp(),
                BetaSpec::ExpScaled { c } => n as f64 * c * ln_l[n - 1].exp(),
                _ => f64::INFINITY,
            },
        };
        let val = if ln_next <= ln_cap {
            let raw = ln_next.exp().ceil();
            Some(raw as u64)
        } else {
            None
        };
        if let (Some(v), Some(p)) = (val, prev) {
            if v <= p {
                return Err(Error::DegenerateProfile(format!("L_{} = {v} does not exceed L_{} = {p}", n + 1, n)));
            }
        }
        ln_l.push(val.map(|v| (v as f64).ln()).unwrap_or(ln_next));
        l.push(val);
    }
    Ok(SparseScales { ln_l, l })
}

/// V(n) = beta(L_k)^eta at n = L_k, else 0.
#[derive(Debug, Clone)]
pub struct SparsePotential {
    pub profile: BarrierProfile,
    pub scales: SparseScales,
    sites: Vec<u64>,
    /// ln V at each materialized site
    ln_v: Vec<f64>,
}

impl SparsePotential {
    pub fn new(profile: BarrierProfile, scales: SparseScales) -> Self {
        let sites = scales.materialized();
        let ln_v = sites.iter().map(|&s| profile.eta * profile.beta.ln_beta(s as f64)).collect();
        SparsePotential { profile, scales, sites, ln_v }
    }

    pub fn value(&self, n: usize) -> PotValue {
        match self.sites.binary_search(&(n as u64)) {
            Ok(i) => {
                let lv = self.ln_v[i];
                if lv < 700.0 {
                    PotValue::Finite(lv.exp())
                } else {
                    PotValue::Log { ln_abs: lv, sign: 1.0 }
                }
            }
            Err(_) => PotValue::Finite(0.0),
        }
    }

    /// Like `value`, but errors when n lies beyond the materialized scales.
    pub fn value_checked(&self, n: u64) -> Result<PotValue> {
        if let Some(first_symbolic) = self.scales.l.iter().position(|x| x.is_none()) {
            if (n as f64).ln() >= self.scales.ln_l[first_symbolic] {
                return Err(Error::ScaleNotMaterializable(first_symbolic + 1));
            }
        }
        Ok(self.value(n as usize))
    }

    /// ln V(L_k)
    pub fn ln_barrier(&self, k: usize) -> f64 {
        self.profile.eta * self.profile.beta.ln_beta(self.scales.ln_get(k).exp())
    }

    pub fn operator(&self, theta: f64) -> Result<HalfLineOperator> {
        HalfLineOperator::new(Potential::Sparse(self.clone()), theta)
    }
}

pub fn potential(profile: &BarrierProfile, scales: &SparseScales) -> SparsePotential {
    SparsePotential::new(profile.clone(), scales.clone())
}

/// Log-domain bounds for ||Phi_m|| with L_n <= m < L_{n+1}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpBounds {
    pub lower: f64,
    pub upper: f64,
}

pub fn exp_bounds(profile: &BarrierProfile, ln_ln: f64, eps: f64) -> ExpBounds {
    let l = ln_ln.exp();
    let alpha = profile.beta.alpha(l);
    let ln_binv = profile.beta.inv_from_log(ln_ln).ln();
    ExpBounds {
        lower: alpha * (ln_ln - ln_binv) - eps * ln_binv,
        upper: alpha * (ln_ln + ln_binv) + eps * ln_binv,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpBoundRow {
    pub n: usize,
    pub m: u64,
    pub energy: f64,
    pub ln_norm: f64,
    pub lower: f64,
    pub upper: f64,
    pub satisfied: bool,
    /// min(ln||Phi|| - lower, upper - ln||Phi||) / (upper - lower); negative when violated
    pub margin: f64,
}

/// Sandwich check for every n in `n_range` and every sampled m in [L_n, L_{n+1}).
/// Violations are reported, not raised: the bound is asymptotic.
pub fn expbound_check(
    profile: &BarrierProfile,
    scales: &SparseScales,
    energies: &[f64],
    eps: f64,
    n_range: std::ops::RangeInclusive<usize>,
    m_per_scale: usize,
    m_cap: u64,
) -> Result<Vec<ExpBoundRow>> {
    use rayon::prelude::*;
    let pot = potential(profile, scales);
    let h = pot.operator(0.0)?;
    let mut jobs = Vec::new();
    for n in n_range {
        let ln = scales.get(n)?;
        let next = scales.l.get(n).copied().flatten().unwrap_or(u64::MAX);
        let hi = next.min(ln.saturating_add(m_cap)).max(ln + 1);
        let ms: Vec<u64> = if m_per_scale <= 1 {
            vec![ln]
        } else {
            let mut v: Vec<u64> = (0..m_per_scale)
                .map(|i| {
                    let f = i as f64 / (m_per_scale - 1) as f64;
                    ((ln as f64).ln() + f * ((hi - 1) as f64 / ln as f64).ln()).exp().round() as u64
                })
                .map(|m| m.clamp(ln, hi - 1))
                .collect();
            v.dedup();
            v
        };
        for &e in energies {
            jobs.push((n, ms.clone(), e));
        }
    }
    let rows: Vec<Vec<ExpBoundRow>> = jobs
        .par_iter()
        .map(|(n, ms, e)| {
            let b = exp_bounds(profile, scales.ln_get(*n), eps);
            let mut p = halfline::FactoredPair::initial(&h);
            let mut k = 0u64;
            let mut out = Vec::new();
            for &m in ms {
                while k < m {
                    k += 1;
                    p.step(*e, h.v(k as usize));
                }
                let ln_norm = p.ln_sigma_max();
                let margin = (ln_norm - b.lower).min(b.upper - ln_norm) / (b.upper - b.lower);
                out.push(ExpBoundRow {
                    n: *n,
                    m,
                    energy: *e,
                    ln_norm,
                    lower: b.lower,
                    upper: b.upper,
                    satisfied: margin >= 0.0,
                    margin,
                });
            }
            out
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleStepRow {
    pub k: usize,
    pub energy: f64,
    pub ln_v: f64,
    pub ln_norm: f64,
    pub ln_lower: f64,
    pub ln_upper: f64,
    pub holds: bool,
}

/// ln ||[[a, -1], [1, 0]]|| for a given in log form.
fn ln_norm_t(e: f64, v: PotValue) -> f64 {
    match v {
        PotValue::Finite(vv) if vv.abs() < 1e150 => {
            let a = e - vv;
            let f2 = a * a + 2.0;
            0.5 * (0.5 * (f2 + (f2 * f2 - 4.0).max(0.0).sqrt())).ln()
        }
        _ => {
            // |a| is beta^eta up to relative 1e-150; the correction is below f64 resolution
            let la = v.ln_abs();
            la
        }
    }
}

/// max{1, V - 2} <= ||T_{L_k}(E)|| <= V + 3 at every materialized barrier.
pub fn single_step_check(profile: &BarrierProfile, scales: &SparseScales, energies: &[f64]) -> Vec<SingleStepRow> {
    let pot = potential(profile, scales);
    let mut rows = Vec::new();
    for (k, site) in scales.l.iter().enumerate() {
        let Some(site) = site else { continue };
        let v = pot.value(*site as usize);
        let ln_v = v.ln_abs();
        for &e in energies {
            let ln_norm = ln_norm_t(e, v);
            let (ln_lower, ln_upper) = match v {
                PotValue::Finite(vv) if vv.abs() < 1e150 => ((vv - 2.0).max(1.0).ln(), (vv + 3.0).ln()),
                _ => (log_sub(ln_v, 2f64.ln()), log_add(ln_v, 3f64.ln())),
            };
            rows.push(SingleStepRow {
                k: k + 1,
                energy: e,
                ln_v,
                ln_norm,
                ln_lower,
                ln_upper,
                holds: ln_lower <= ln_norm && ln_norm <= ln_upper,
            });
        }
    }
    rows
}

/// ||T^j|| <= cond(S) for the free matrix T(E) = S D S^{-1}, |E| < 2.
pub fn free_bound(e: f64) -> f64 {
    let c = (e / 2.0).abs();
    ((1.0 + c) / (1.0 - c)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeStretchRow {
    pub k: usize,
    pub energy: f64,
    pub c_i: f64,
    pub min_norm: f64,
    pub max_norm: f64,
    pub holds: bool,
}

/// 1 <= ||Phi_{L_k + 1, m}|| <= C_I for all m up to min(L_{k+1} - 1, L_k + m_cap).
pub fn free_stretch_check(
    profile: &BarrierProfile,
    scales: &SparseScales,
    energies: &[f64],
    k: usize,
    m_cap: u64,
) -> Result<Vec<FreeStretchRow>> {
    let pot = potential(profile, scales);
    let h = pot.operator(0.0)?;
    let lk = scales.get(k)?;
    let next = scales.l.get(k).copied().flatten().unwrap_or(u64::MAX);
    let end = (next - 1).min(lk + m_cap);
    let mut rows = Vec::new();
    for &e in energies {
        let c_i = free_bound(e);
        let mut p = halfline::FactoredPair::identity();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for m in (lk + 1)..=end {
            p.step(e, h.v(m as usize));
            let nrm = p.ln_sigma_max().exp();
            lo = lo.min(nrm);
            hi = hi.max(nrm);
        }
        rows.push(FreeStretchRow {
            k,
            energy: e,
            c_i,
            min_norm: lo,
            max_norm: hi,
            holds: lo >= 1.0 - 1e-12 && hi <= c_i * (1.0 + 1e-9),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FCase {
    /// l B_n <= A_n
    One,
    Two,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FRow {
    pub ln_l: f64,
    pub ln_f: f64,
    pub case: FCase,
    /// position relative to l* = D_n C_n L_n^{-2 eps}
    pub below_boundary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FReport {
    pub n: usize,
    pub delta: f64,
    pub ln_a: f64,
    pub ln_b: f64,
    pub ln_c: f64,
    pub ln_d: f64,
    pub ln_boundary: f64,
    pub rows: Vec<FRow>,
    pub ln_min: f64,
}

/// F_{n,delta}(l) = (A_n + l B_n) / beta^{-1}((C_n + l D_n)(l + L_n - 1) ln(l + L_n - 1)^2)^{1-delta},
/// evaluated with l given through ln l.
pub fn f_n_delta(profile: &BarrierProfile, scales: &SparseScales, n: usize, delta: f64, ln_l_grid: &[f64], eps: f64) -> Result<FReport> {
    if n == 0 || n > scales.len() {
        return Err(Error::ScaleNotMaterializable(n));
    }
    let ln_ln = scales.ln_get(n);
    if !ln_ln.is_finite() {
        return Err(Error::ScaleNotMaterializable(n));
    }
    let l_n = scales.get(n)? as f64;
    let b = &profile.beta;
    let alpha = b.alpha(l_n);
    let ln_binv = b.inv_from_log(ln_ln).ln();
    let ln_a = ln_ln - ln_binv;
    let ln_b = -2.0 * alpha * ln_a;
    let ln_c = ln_ln + ln_binv;
    let ln_d = 2.0 * alpha * ln_c;
    let ln_boundary = ln_d + ln_c - 2.0 * eps * ln_ln;
    let mut rows = Vec::with_capacity(ln_l_grid.len());
    for &ll in ln_l_grid {
        let num = log_add(ln_a, ll + ln_b);
        // m = l + L_n - 1 in log form
        let ln_m = log_add(ll, (l_n - 1.0).ln());
        let ln_arg = log_add(ln_c, ll + ln_d) + ln_m + 2.0 * ln_m.ln();
        let den = (1.0 - delta) * b.inv_from_log(ln_arg).ln();
        rows.push(FRow {
            ln_l: ll,
            ln_f: num - den,
            case: if ll + ln_b <= ln_a { FCase::One } else { FCase::Two },
            below_boundary: ll <= ln_boundary,
        });
    }
    let ln_min = rows.iter().map(|r| r.ln_f).fold(f64::INFINITY, f64::min);
    Ok(FReport { n, delta, ln_a, ln_b, ln_c, ln_d, ln_boundary, rows, ln_min })
}

/// x solving (H_trunc - z) x = rhs for the tridiagonal operator on sites
/// first..=last (1-based), hopping 1, diagonal V(n) - z.
fn tridiag_solve(h: &HalfLineOperator, first: usize, last: usize, z: Complex64, rhs_site: usize) -> Vec<Complex64> {
    let n = last - first + 1;
    let diag: Vec<Complex64> = (first..=last).map(|s| Complex64::new(h.v(s).as_f64(), 0.0) - z).collect();
    // Thomas algorithm with unit off-diagonals
    let mut c = vec![Complex64::new(0.0, 0.0); n];
    let mut d = vec![Complex64::new(0.0, 0.0); n];
    let one = Complex64::new(1.0, 0.0);
    for i in 0..n {
        let rhs = if first + i == rhs_site { one } else { Complex64::new(0.0, 0.0) };
        let (cprev, dprev) = if i == 0 { (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)) } else { (c[i - 1], d[i - 1]) };
        let denom = diag[i] - cprev;
        c[i] = one / denom;
        d[i] = (rhs - dprev) / denom;
    }
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreenConfig {
    pub tol: f64,
    pub max_sites: usize,
}

impl Default for GreenConfig {
    fn default() -> Self {
        GreenConfig { tol: 1e-10, max_sites: 1 << 22 }
    }
}

/// Truncation size at which G(1, n, z) has converged.
pub fn converged_truncation(h: &HalfLineOperator, n: usize, z: Complex64, cfg: &GreenConfig) -> Result<usize> {
    if !(z.im > 0.0) {
        return Err(Error::BadParams("Im z must be positive".into()));
    }
    let mut size = (4 * n).max(64);
    let mut prev = tridiag_solve(h, 1, size, z, 1)[n - 1];
    loop {
        let next_size = size * 2;
        if next_size > cfg.max_sites {
            return Err(Error::TruncationNotConverged(format!("G(1,{n}) still changing at {size} sites")));
        }
        let cur = tridiag_solve(h, 1, next_size, z, 1)[n - 1];
        if (cur - prev).norm() <= cfg.tol * cur.norm().max(1e-300) {
            return Ok(next_size);
        }
        prev = cur;
        size = next_size;
    }
}

/// G(1, n, z) with adaptive truncation.
pub fn green_function(h: &HalfLineOperator, n: usize, z: Complex64, cfg: &GreenConfig) -> Result<Complex64> {
    let size = converged_truncation(h, n, z, cfg)?;
    Ok(tridiag_solve(h, 1, size, z, 1)[n - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenIdentityRow {
    pub n: usize,
    pub truncation: usize,
    pub g_1n: Complex64,
    /// G(1, L_k - 1) G'_k(L_k + 1, n) / (V(L_k) - z)
    pub factored: Complex64,
    pub rel_err: f64,
    /// G'_k(L_k, n) against -G'_k(L_k + 1, n) / (V(L_k) - z)
    pub var_lhs: Complex64,
    pub var_rhs: Complex64,
    pub var_rel_err: f64,
}

/// Both Green-function factorizations through the barrier at L_k, computed by
/// separate tridiagonal solves on the same truncation.
pub fn green_identity_check(h: &HalfLineOperator, lk: usize, ns: &[usize], z: Complex64, cfg: &GreenConfig) -> Result<Vec<GreenIdentityRow>> {
    if lk < 2 {
        return Err(Error::BadParams("barrier site must be >= 2".into()));
    }
    let mut rows = Vec::new();
    for &n in ns {
        if n <= lk {
            return Err(Error::BadParams(format!("n = {n} must exceed L_k = {lk}")));
        }
        let size = converged_truncation(h, n, z, cfg)?;
        let full = tridiag_solve(h, 1, size, z, 1);
        let g_1n = full[n - 1];
        let g_left = full[lk - 2];
        // right block starting at L_k, hopping L_k - 1 <-> L_k removed; symmetric, so
        // G'(L_k + 1, n) = G'(n, L_k + 1) is column L_k + 1
        let right = tridiag_solve(h, lk, size, z, lk + 1);
        let gp_next = right[n - lk];
        let right_at_lk = tridiag_solve(h, lk, size, z, lk);
        let gp_lk = right_at_lk[n - lk];
        let denom = Complex64::new(h.v(lk).as_f64(), 0.0) - z;
        let factored = g_left * gp_next / denom;
        let var_rhs = -gp_next / denom;
        rows.push(GreenIdentityRow {
            n,
            truncation: size,
            g_1n,
            factored,
            rel_err: (g_1n - factored).norm() / g_1n.norm(),
            var_lhs: gp_lk,
            var_rhs,
            var_rel_err: (gp_lk - var_rhs).norm() / gp_lk.norm(),
        });
    }
    Ok(rows)
}

/// |G(1, n, E + i eps)| <= f^j(L_k)^gamma / (V(L_k) - 2) with f = beta^{-1}.
pub fn green_bound_check(sp: &SparsePotential, k: usize, j: usize, gamma: f64, e: f64, eps: f64, cfg: &GreenConfig) -> Result<(f64, f64, bool)> {
    let lk = sp.scales.get(k)? as usize;
    let h = sp.operator(0.0)?;
    let mut ln_f = sp.scales.ln_get(k);
    for _ in 0..j {
        ln_f = sp.profile.beta.inv_from_log(ln_f).ln();
    }
    let ln_v = sp.ln_barrier(k);
    let ln_bound = gamma * ln_f - log_sub(ln_v, 2f64.ln());
    let mut worst = f64::NEG_INFINITY;
    for n in [lk + 1, lk + 2] {
        let g = green_function(&h, n, Complex64::new(e, eps), cfg)?;
        worst = worst.max(g.norm().ln());
    }
    Ok((worst, ln_bound, worst <= ln_bound))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scales_exp() {
        let p = BarrierProfile::exp(1.0).unwrap();
        let s = build_scales(&p, 4, DEFAULT_CAP).unwrap();
        assert_eq!(s.l[..3], [Some(2), Some(8), Some(8886111)]);
        assert!(s.l[3].is_none());
        assert!((s.ln_l[3] - 3.0 * 8886111.0).abs() < 1e-6);
    }

    #[test]
    fn rejected_profiles() {
        let sq = BarrierProfile::new(ProfileSpec { beta: BetaSpec::Power { p: 2.0 }, eta: 1.0 });
        assert!(matches!(sq, Err(Error::ConvexityViolation(_))));
        let slow = BarrierProfile::new(ProfileSpec { beta: BetaSpec::ExpScaled { c: 0.25 }, eta: 1.0 }).unwrap();
        assert!(matches!(build_scales(&slow, 4, DEFAULT_CAP), Err(Error::DegenerateProfile(_))));
    }

    #[test]
    fn desk_profile_scales() {
        let p = BarrierProfile::new(ProfileSpec { beta: BetaSpec::ExpScaled { c: 0.5 }, eta: 1.0 }).unwrap();
        let s = build_scales(&p, 4, DEFAULT_CAP).unwrap();
        assert_eq!(s.materialized()[..3], [2, 3, 21]);
        assert!((s.ln_l[3] - 31.5).abs() < 1e-9);
    }

    #[test]
    fn potential_values() {
        let p = BarrierProfile::exp(1.0).unwrap();
        let s = build_scales(&p, 3, DEFAULT_CAP).unwrap();
        let v = potential(&p, &s);
        assert!((v.value(2).as_f64() - 2f64.exp()).abs() < 1e-12);
        assert!((v.value(8).as_f64() - 8f64.exp()).abs() < 1e-9);
        assert_eq!(v.value(5).as_f64(), 0.0);
        assert!(matches!(v.value(8886111), PotValue::Log { .. }));
        let p2 = BarrierProfile::exp(2.0).unwrap();
        let v2 = potential(&p2, &s);
        assert!((v2.value(2).as_f64() - 4f64.exp()).abs() < 1e-10);
    }

    #[test]
    fn inverse_closed_form_matches_bisection() {
        for b in [BetaSpec::Exp, BetaSpec::ExpScaled { c: 0.5 }, BetaSpec::ExpPower { a: 1.5 }] {
            for ln_y in [0.5, 3.0, 40.0] {
                let a = b.inv_from_log(ln_y);
                let c = b.inv_bisect(ln_y);
                assert!((a - c).abs() < 1e-9 * a.max(1.0), "{b:?} {ln_y}");
            }
        }
    }

    fn desk() -> (BarrierProfile, SparseScales) {
        let p = BarrierProfile::new(ProfileSpec { beta: BetaSpec::ExpScaled { c: 0.5 }, eta: 1.0 }).unwrap();
        let s = build_scales(&p, 4, DEFAULT_CAP).unwrap();
        (p, s)
    }

    #[test]
    fn expbound_at_second_scale() {
        let p = BarrierProfile::exp(1.0).unwrap();
        let s = build_scales(&p, 3, DEFAULT_CAP).unwrap();
        let b = exp_bounds(&p, s.ln_get(2), 0.5);
        assert!((b.lower - 4.82).abs() < 0.01 && (b.upper - 11.19).abs() < 0.01);
        let rows = expbound_check(&p, &s, &[0.0], 0.5, 2..=2, 1, 1).unwrap();
        assert!(rows[0].satisfied, "{rows:?}");
    }

    #[test]
    fn single_step_and_free_stretch() {
        let p = BarrierProfile::exp(1.0).unwrap();
        let s = build_scales(&p, 3, DEFAULT_CAP).unwrap();
        let es: Vec<f64> = crate::logmath::linspace(-2.0, 2.0, 9);
        assert!(single_step_check(&p, &s, &es).iter().all(|r| r.holds));
        let es: Vec<f64> = crate::logmath::linspace(-1.9, 1.9, 9);
        let rows = free_stretch_check(&p, &s, &es, 2, 20_000).unwrap();
        assert!(rows.iter().all(|r| r.holds), "{rows:?}");
    }

    #[test]
    fn free_green_function() {
        let h = HalfLineOperator::free();
        let z = Complex64::new(0.0, 3.0);
        let g = green_function(&h, 1, z, &GreenConfig::default()).unwrap();
        // m^2 + z m + 1 = 0, Im m > 0
        let d = (z * z - 4.0).sqrt();
        let m = [(-z + d) / 2.0, (-z - d) / 2.0].into_iter().find(|m| m.im > 0.0).unwrap();
        assert!((g - m).norm() < 1e-10, "{g} {m}");
    }

    #[test]
    fn green_factorization() {
        let (p, s) = desk();
        let h = potential(&p, &s).operator(0.0).unwrap();
        let lk = s.get(2).unwrap() as usize;
        let rows = green_identity_check(&h, lk, &[lk + 1, lk + 3, lk + 10], Complex64::new(0.3, 1e-3), &GreenConfig::default()).unwrap();
        for r in rows {
            assert!(r.rel_err < 1e-6 && r.var_rel_err < 1e-6, "{r:?}");
        }
    }

    #[test]
    fn f_functional_grows_with_n() {
        let p = BarrierProfile::exp(1.0).unwrap();
        let s = build_scales(&p, 3, DEFAULT_CAP).unwrap();
        // the n = 3 minimum sits near ln l ~ 1.4e7
        let mut grid = vec![0.0];
        grid.extend(crate::logmath::geomspace(0.01, 1e9, 400));
        let f2 = f_n_delta(&p, &s, 2, 0.5, &grid, 0.1).unwrap();
        let f3 = f_n_delta(&p, &s, 3, 0.5, &grid, 0.1).unwrap();
        assert!(f3.ln_min > f2.ln_min);
        assert!(f_n_delta(&p, &s, 3, 0.0, &grid, 0.1).unwrap().ln_min.is_finite());
    }
}
