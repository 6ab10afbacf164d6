//! Borel transforms, the scaling comparison between ball masses and
//! (eps / rho(eps)) Im F(x + i eps), and Boole's level-set equality.

use crate::error::{Error, Result};
use crate::gauge::{compare, GaugeFunction, Ordering};
use crate::measure::{self, ScalingReport, ScalingVerdict, SpectralMeasure};
use crate::trend::{self, TrendConfig};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub const DEFAULT_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BorelEvaluation {
    pub z: Complex64,
    pub value: Complex64,
}

/// F(z) = int dmu(x) / (x - z). Real z must keep `margin` away from atoms,
/// density edges and the Cantor hull; inside a density it returns the
/// boundary value from the upper half plane.
pub fn borel_transform_with_margin(mu: &SpectralMeasure, z: Complex64, margin: f64) -> Result<BorelEvaluation> {
    if z.im < 0.0 || !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::BadParams(format!("z = {z} must lie in the closed upper half plane")));
    }
    if z.im == 0.0 {
        let x = z.re;
        let atoms = mu.atoms();
        let i = atoms.partition_point(|a| a.0 < x);
        let near_atom = [i.checked_sub(1), Some(i)]
            .into_iter()
            .flatten()
            .filter_map(|j| atoms.get(j))
            .any(|a| (a.0 - x).abs() < margin);
        let near_edge = mu.density_edges().iter().any(|e| (e - x).abs() < margin);
        let in_hull = mu.cantor_hull().map(|(a, b)| x > a - margin && x < b + margin).unwrap_or(false);
        if near_atom || near_edge || in_hull {
            return Err(Error::PoleProximity { x, margin });
        }
    }
    Ok(BorelEvaluation { z, value: mu.stieltjes(z, 0) })
}

pub fn borel_transform(mu: &SpectralMeasure, z: Complex64) -> Result<BorelEvaluation> {
    borel_transform_with_margin(mu, z, DEFAULT_MARGIN)
}

/// F(x + i0): exact real formula off atoms for purely atomic measures,
/// otherwise F(x + i eps0) with eps0 = 1e-9 times the distance to the nearest atom.
pub fn boundary_value(mu: &SpectralMeasure, x: f64) -> Result<Complex64> {
    if mu.is_purely_atomic() {
        return Ok(borel_transform_with_margin(mu, Complex64::new(x, 0.0), 0.0)?.value);
    }
    let atoms = mu.atoms();
    let i = atoms.partition_point(|a| a.0 < x);
    let spacing = [i.checked_sub(1), Some(i)]
        .into_iter()
        .flatten()
        .filter_map(|j| atoms.get(j))
        .map(|a| (a.0 - x).abs())
        .fold(1.0f64, f64::min);
    if spacing == 0.0 {
        return Err(Error::PoleProximity { x, margin: 0.0 });
    }
    Ok(mu.stieltjes(Complex64::new(x, 1e-9 * spacing), 0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScalingClass {
    /// {0}
    A0,
    /// (0, inf)
    A1,
    /// {inf}
    A2,
    Unresolved,
}

fn class_of(v: ScalingVerdict) -> ScalingClass {
    match v {
        ScalingVerdict::TendsToZero => ScalingClass::A0,
        ScalingVerdict::BoundedNonzero => ScalingClass::A1,
        ScalingVerdict::DivergesToInfinity => ScalingClass::A2,
        ScalingVerdict::Undetermined => ScalingClass::Unresolved,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HausBorelReport {
    /// ln(M_mu^eps(x) / rho(eps))
    pub mass: ScalingReport,
    /// ln((eps / rho(eps)) Im F(x + i eps)) on the same grid
    pub borel: ScalingReport,
    /// same with |F| in place of Im F
    pub borel_abs_verdict: ScalingVerdict,
    pub mass_class: ScalingClass,
    pub borel_class: ScalingClass,
    /// the two classes agree, or at least one is unresolved
    pub consistent: bool,
    /// both resolved and equal
    pub resolved_agreement: bool,
}

pub fn hausborel_compare_with(
    mu: &SpectralMeasure,
    x: f64,
    rho: &GaugeFunction,
    eps_grid: &[f64],
    cfg: &TrendConfig,
) -> Result<HausBorelReport> {
    let t = GaugeFunction::power(1.0)?;
    if compare(rho, &t, &crate::gauge::default_s_grid(), cfg)? != Ordering::Precedes {
        return Err(Error::GaugeNotSubLinear);
    }
    let mass = measure::local_scaling_with(mu, x, rho, eps_grid, cfg)?;
    let eps = mass.epsilons.clone();
    let xs: Vec<f64> = eps.iter().map(|e| -e.log10()).collect();
    let vals: Vec<Complex64> = eps.iter().map(|e| mu.stieltjes(Complex64::new(x, *e), 0)).collect();
    let base: Vec<f64> = eps.iter().map(|e| e.ln() - rho.ln_at(*e)).collect();
    let im: Vec<f64> = vals.iter().zip(&base).map(|(f, b)| b + f.im.ln()).collect();
    let ab: Vec<f64> = vals.iter().zip(&base).map(|(f, b)| b + f.norm().ln()).collect();
    let bv = measure::scaling_verdict(trend::classify(&xs, &im, cfg).class);
    let av = measure::scaling_verdict(trend::classify(&xs, &ab, cfg).class);
    let borel = ScalingReport { point: x, epsilons: eps, log_ratios: im, verdict: bv, resolved: mass.resolved };
    let (mc, bc) = (class_of(mass.verdict), class_of(bv));
    let resolved = mc != ScalingClass::Unresolved && bc != ScalingClass::Unresolved;
    Ok(HausBorelReport {
        mass,
        borel,
        borel_abs_verdict: av,
        mass_class: mc,
        borel_class: bc,
        consistent: !resolved || mc == bc,
        resolved_agreement: resolved && mc == bc,
    })
}

pub fn hausborel_compare(mu: &SpectralMeasure, x: f64, rho: &GaugeFunction, eps_grid: &[f64]) -> Result<HausBorelReport> {
    hausborel_compare_with(mu, x, rho, eps_grid, &TrendConfig::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BooleRow {
    pub lambda: f64,
    pub measured: f64,
    pub exact: f64,
    pub rel_err: f64,
}

fn f_real(atoms: &[(f64, f64)], e: f64) -> f64 {
    atoms.iter().map(|(en, a)| a / (en - e)).sum()
}

/// Root of the increasing function F(E) - target on (a, b).
fn branch_root(atoms: &[(f64, f64)], mut a: f64, mut b: f64, target: f64) -> Result<f64> {
    let (fa, fb) = (f_real(atoms, a) - target, f_real(atoms, b) - target);
    if !(fa < 0.0 && fb > 0.0) {
        return Err(Error::UnresolvedLevelSet(format!("no sign change for F = {target} on ({a}, {b})")));
    }
    for _ in 0..2000 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if f_real(atoms, m) < target {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Points just inside (lo, hi), where F is still dominated by the nearby pole.
fn inner_point(lo: f64, hi: f64) -> (f64, f64) {
    let d = ((hi - lo) * 1e-15).max(4.0 * f64::EPSILON * lo.abs().max(hi.abs()));
    (lo + d, hi - d)
}

/// Lebesgue measure of {E : |F(E)| > lambda} by branch-wise bisection.
pub fn level_set_measure(mu: &SpectralMeasure, lambda: f64) -> Result<f64> {
    if !mu.is_purely_atomic() || mu.atoms().is_empty() {
        return Err(Error::InvalidMeasure("level sets need a purely atomic measure".into()));
    }
    if !(lambda > 0.0) {
        return Err(Error::BadParams("lambda must be positive".into()));
    }
    let atoms = mu.atoms();
    let n = atoms.len();
    let mut total = 0.0;
    // left of the first atom F > 0 rises to +inf
    let e1 = atoms[0].0;
    let mut h = 1.0;
    while f_real(atoms, e1 - h) >= lambda {
        h *= 2.0;
    }
    let (_, near) = inner_point(e1 - h, e1);
    total += e1 - branch_root(atoms, e1 - h, near, lambda)?;
    // right of the last atom F < 0 rises from -inf to 0
    let en = atoms[n - 1].0;
    let mut h = 1.0;
    while f_real(atoms, en + h) <= -lambda {
        h *= 2.0;
    }
    let (near, _) = inner_point(en, en + h);
    total += branch_root(atoms, near, en + h, -lambda)? - en;
    for w in atoms.windows(2) {
        let (a, b) = (w[0].0, w[1].0);
        let (ia, ib) = inner_point(a, b);
        let r1 = branch_root(atoms, ia, ib, -lambda)?;
        let r2 = branch_root(atoms, ia, ib, lambda)?;
        if !(r1 < r2) {
            return Err(Error::UnresolvedLevelSet(format!("branches overlap in ({a}, {b})")));
        }
        total += (r1 - a) + (b - r2);
    }
    Ok(total)
}

pub fn boole_check(mu: &SpectralMeasure, lambdas: &[f64]) -> Result<Vec<BooleRow>> {
    if !mu.is_probability() {
        return Err(Error::InvalidMeasure(format!("total mass {} is not 1", mu.total_mass())));
    }
    lambdas
        .iter()
        .map(|&l| {
            let measured = level_set_measure(mu, l)?;
            let exact = 2.0 / l;
            Ok(BooleRow { lambda: l, measured, exact, rel_err: (measured - exact).abs() / exact })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::SpectralMeasure;

    #[test]
    fn point_mass_values() {
        let d = SpectralMeasure::dirac(0.0);
        let v = borel_transform(&d, Complex64::new(0.0, 1.0)).unwrap().value;
        assert!((v - Complex64::new(0.0, 1.0)).norm() < 1e-15);
        let v = borel_transform(&d, Complex64::new(2.0, 0.0)).unwrap().value;
        assert!((v.re + 0.5).abs() < 1e-15 && v.im == 0.0);
        assert!(matches!(borel_transform(&d, Complex64::new(1e-12, 0.0)), Err(Error::PoleProximity { .. })));
        let two = SpectralMeasure::atomic(&[(-1.0, 0.5), (1.0, 0.5)]).unwrap();
        let v = borel_transform(&two, Complex64::new(0.0, 1.0)).unwrap().value;
        assert!((v - Complex64::new(0.0, 0.5)).norm() < 1e-15);
    }

    #[test]
    fn lebesgue_boundary_value() {
        let m = SpectralMeasure::lebesgue(-1.0, 1.0).unwrap();
        let v = borel_transform(&m, Complex64::new(0.3, 0.0)).unwrap().value;
        assert!((v.im - std::f64::consts::PI).abs() < 1e-12);
        let w = borel_transform(&m, Complex64::new(0.3, 1e-10)).unwrap().value;
        assert!((v - w).norm() < 1e-8);
    }

    #[test]
    fn hausborel_examples() {
        let g = crate::logmath::geomspace(0.1, 1e-8, 22);
        let half = GaugeFunction::power(0.5).unwrap();
        let r = hausborel_compare(&SpectralMeasure::dirac(0.0), 0.0, &half, &g).unwrap();
        assert_eq!((r.mass_class, r.borel_class), (ScalingClass::A2, ScalingClass::A2));
        let leb = SpectralMeasure::lebesgue(-1.0, 1.0).unwrap();
        let r = hausborel_compare(&leb, 0.0, &half, &g).unwrap();
        assert_eq!((r.mass_class, r.borel_class), (ScalingClass::A0, ScalingClass::A0));
        let r = hausborel_compare(&leb, 0.0, &GaugeFunction::power(0.999).unwrap(), &g).unwrap();
        assert!(r.resolved_agreement);
        assert!(matches!(
            hausborel_compare(&leb, 0.0, &GaugeFunction::power(1.0).unwrap(), &g),
            Err(Error::GaugeNotSubLinear)
        ));
    }

    #[test]
    fn boole_small_cases() {
        let r = boole_check(&SpectralMeasure::dirac(0.0), &[10.0]).unwrap();
        assert!((r[0].measured - 0.2).abs() < 1e-12);
        let two = SpectralMeasure::atomic(&[(-1.0, 0.5), (1.0, 0.5)]).unwrap();
        let r = boole_check(&two, &[100.0]).unwrap();
        assert!(r[0].rel_err < 1e-9);
    }
}
