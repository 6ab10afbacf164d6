//! Rank-one perturbations A + lambda <phi, .> phi of a cyclic spectral measure,
//! interval-cover dimension bounds for atomic measures, and SULE models.

use crate::borel::borel_transform;
use crate::error::{Error, Result};
use crate::gauge::{CompleteFamily, DimensionValue, FamilySpec, GaugeFunction, GaugeSpec, IndexInterval};
use crate::hausdorff_set::{measure_verdict_report, CoverTree, Generation, Interval, Verdict, VerdictConfig};
use crate::linalg;
use crate::measure::SpectralMeasure;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankOnePerturbation {
    pub base: SpectralMeasure,
    pub coupling: f64,
}

impl RankOnePerturbation {
    pub fn new(base: SpectralMeasure, coupling: f64) -> Result<Self> {
        if !base.is_probability() {
            return Err(Error::InvalidMeasure(format!("base mass {} is not 1", base.total_mass())));
        }
        if !coupling.is_finite() {
            return Err(Error::BadParams("coupling must be finite".into()));
        }
        Ok(RankOnePerturbation { base, coupling })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbedTransform {
    pub z: Complex64,
    pub f: Complex64,
    /// F / (1 + lambda F)
    pub value: Complex64,
    /// Im F / |1 + lambda F|^2
    pub im: f64,
}

pub const RESONANCE_TOL: f64 = 1e-12;

pub fn perturbed_transform(p: &RankOnePerturbation, z: Complex64) -> Result<PerturbedTransform> {
    let f = borel_transform(&p.base, z)?.value;
    let d = 1.0 + p.coupling * f;
    if z.im == 0.0 && d.norm() < RESONANCE_TOL {
        return Err(Error::Resonance(z.re));
    }
    Ok(PerturbedTransform { z, f, value: f / d, im: f.im / d.norm_sqr() })
}

fn f_atoms(atoms: &[(f64, f64)], x: f64) -> f64 {
    atoms.iter().map(|(e, a)| a / (e - x)).sum()
}

fn g_atoms(atoms: &[(f64, f64)], x: f64) -> f64 {
    atoms.iter().map(|(e, a)| a / ((x - e) * (x - e))).sum()
}

fn just_inside(lo: f64, hi: f64) -> (f64, f64) {
    let d = ((hi - lo) * 1e-15).max(4.0 * f64::EPSILON * lo.abs().max(hi.abs()));
    (lo + d, hi - d)
}

/// Eigenvalues of A_lambda: roots of F(x) = -1/lambda, one per monotone branch.
pub fn perturbed_eigenvalues(p: &RankOnePerturbation) -> Result<Vec<f64>> {
    if !p.base.is_purely_atomic() {
        return Err(Error::InvalidMeasure("perturbed_eigenvalues needs an atomic base".into()));
    }
    let lam = p.coupling;
    if lam == 0.0 {
        return Err(Error::BadParams("coupling must be nonzero".into()));
    }
    let atoms = p.base.atoms();
    let n = atoms.len();
    let h = |x: f64| f_atoms(atoms, x) + 1.0 / lam;
    let mut brackets: Vec<(f64, f64)> = atoms.windows(2).map(|w| just_inside(w[0].0, w[1].0)).collect();
    if lam > 0.0 {
        let e = atoms[n - 1].0;
        brackets.push((just_inside(e, e + lam).0, e + lam));
    } else {
        let e = atoms[0].0;
        brackets.insert(0, (e - lam.abs(), just_inside(e - lam.abs(), e).1));
    }
    Ok(brackets.par_iter().map(|&(lo, hi)| crate::logmath::bisect_increasing(lo, hi, h)).collect())
}

/// Eigenvalues of A_lambda with weights 1/(lambda^2 G(x_k)).
pub fn perturbed_spectrum(p: &RankOnePerturbation) -> Result<Vec<(f64, f64)>> {
    let lam2 = p.coupling * p.coupling;
    let atoms = p.base.atoms();
    Ok(perturbed_eigenvalues(p)?.into_iter().map(|x| (x, 1.0 / (lam2 * g_atoms(atoms, x)))).collect())
}

/// Direct diagonalization of diag(E) + lambda sqrt(a) sqrt(a)^T:
/// eigenvalues and the weights |<sqrt(a), v_k>|^2.
pub fn rank_one_matrix_oracle(atoms: &[(f64, f64)], lambda: f64) -> Result<Vec<(f64, f64)>> {
    let n = atoms.len();
    let s: Vec<f64> = atoms.iter().map(|a| a.1.sqrt()).collect();
    let e = linalg::sym_eigen(n, |i, j| lambda * s[i] * s[j] + if i == j { atoms[i].0 } else { 0.0 })?;
    Ok(e.values
        .iter()
        .zip(&e.vectors)
        .map(|(x, v)| {
            let c: f64 = v.iter().zip(&s).map(|(a, b)| a * b).sum();
            (*x, c * c)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GValue {
    Finite(f64),
    Infinite,
}

/// G(x) = int dmu(y) / (x - y)^2.
pub fn g_function(mu: &SpectralMeasure, x: f64) -> GValue {
    if mu.atoms().iter().any(|a| a.0 == x) {
        return GValue::Infinite;
    }
    // interior density points and density edges make the integral diverge
    if mu.density_at(x) > 0.0 || mu.density_edges().contains(&x) {
        return GValue::Infinite;
    }
    if let Some((a, b)) = mu.cantor_hull() {
        if x >= a && x <= b && mu.ball_mass(x, mu.resolution_floor().max(f64::MIN_POSITIVE)) > 0.0 {
            return GValue::Infinite;
        }
    }
    GValue::Finite(mu.stieltjes(Complex64::new(x, 0.0), 1).re)
}

/// Summable (or not) majorant sequence b_n, n >= 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BSequence {
    /// scale / n^p
    PowerLaw {
        p: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// scale / n
    Harmonic {
        #[serde(default = "one")]
        scale: f64,
    },
    Explicit { values: Vec<f64> },
}

fn one() -> f64 {
    1.0
}

impl BSequence {
    pub fn ln_at(&self, n: usize) -> Result<f64> {
        let ln_n = (n as f64).ln();
        match self {
            BSequence::PowerLaw { p, scale } => Ok(scale.ln() - p * ln_n),
            BSequence::Harmonic { scale } => Ok(scale.ln() - ln_n),
            BSequence::Explicit { values } => values
                .get(n - 1)
                .map(|v| v.ln())
                .ok_or_else(|| Error::BadParams(format!("b sequence has no entry {n}"))),
        }
    }

    /// Is sum b_n^power finite? Explicit data use the tail slope of ln b_n against ln n.
    pub fn summable_with_power(&self, power: f64) -> bool {
        match self {
            BSequence::PowerLaw { p, .. } => p * power > 1.0,
            BSequence::Harmonic { .. } => power > 1.0,
            BSequence::Explicit { values } => {
                let n = values.len();
                if n < 8 || values.iter().any(|v| !(*v > 0.0)) {
                    return false;
                }
                let x: Vec<f64> = (1..=n).map(|k| (k as f64).ln()).collect();
                let y: Vec<f64> = values.iter().map(|v| power * v.ln()).collect();
                crate::trend::fit_tail(&x, &y, 0.5).slope < -1.05
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BoundMode {
    /// family {f(t^alpha)}, b summable
    Standard,
    /// family {f(t^alpha)^beta}; b_n = 1/n is allowed, members tested with exponent `beta` > 1
    LargerFamily { beta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsCheck {
    pub eps: f64,
    /// t exponent 2/(1 - 2 eps) of the tested member
    pub exponent: f64,
    pub member: String,
    pub verdict: Verdict,
    /// (generation, ln cover sum)
    pub sums: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverBound {
    /// f(t^2)
    pub bound: GaugeFunction,
    pub family: CompleteFamily,
    pub value: DimensionValue,
    pub checks: Vec<EpsCheck>,
}

/// lim sup of A_n = [E_n - c_n, E_n + c_n], c_n = a_n^{1/2 - eps} / 2, with
/// generation m = {A_n : n >= 2^m}. Atoms are in label order.
pub fn limsup_cover(atoms: &[(f64, f64)], eps: f64) -> Result<CoverTree> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::BadParams("eps must lie in (0, 1/2)".into()));
    }
    if atoms.iter().any(|a| !(a.1 > 0.0 && a.1 < 1.0)) {
        return Err(Error::BadParams("cover weights must lie in (0, 1)".into()));
    }
    let ivs: Vec<Interval> = atoms
        .iter()
        .map(|(e, a)| {
            let log_len = -(0.5 - eps) * a.ln();
            Interval { left: e - 0.5 * (-log_len).exp(), log_len }
        })
        .collect();
    let mut gens = Vec::new();
    let mut start = 1usize;
    while start <= atoms.len() {
        gens.push(Generation::from_intervals(ivs[start - 1..].to_vec()));
        start *= 2;
    }
    CoverTree::explicit(gens)
}

/// Dimension bound dim <= f(t^2) for atomic weights with a_n <= f^{-1}(b_n).
pub fn cover_dimension_bound(
    atoms: &[(f64, f64)],
    f: &GaugeFunction,
    b: &BSequence,
    mode: BoundMode,
    eps_list: &[f64],
) -> Result<CoverBound> {
    let beta = match mode {
        BoundMode::Standard => 1.0,
        BoundMode::LargerFamily { beta } if beta > 1.0 => beta,
        BoundMode::LargerFamily { .. } => return Err(Error::BadParams("larger-family exponent must exceed 1".into())),
    };
    if !b.summable_with_power(beta) {
        return Err(Error::HypothesisViolated("b_n is not summable for the chosen family".into()));
    }
    for (i, (_, a)) in atoms.iter().enumerate() {
        let n = i + 1;
        let ok = match f.inverse_log(b.ln_at(n)?) {
            Some(s) => a.ln() <= -s + 1e-9 * (1.0 + s.abs()),
            None => a.ln() < -f.s_min(),
        };
        if !ok {
            return Err(Error::HypothesisViolated(format!("a_{n} = {a:e} exceeds f^-1(b_{n})")));
        }
    }
    let k_max = (atoms.len() as f64).log2().floor() as usize;
    let checks = eps_list
        .iter()
        .map(|&eps| {
            let tree = limsup_cover(atoms, eps)?;
            let s = 2.0 / (1.0 - 2.0 * eps);
            let member = f.transformed(s, beta, 0.0)?;
            let r = measure_verdict_report(&tree, &member, 1, k_max, &VerdictConfig::default())?;
            Ok(EpsCheck { eps, exponent: s, member: member.name(), verdict: r.verdict, sums: r.sums })
        })
        .collect::<Result<Vec<_>>>()?;
    let bound = f.transformed(2.0, 1.0, 0.0)?;
    let family = CompleteFamily::new(FamilySpec::PowerOf { base: bound.spec().clone() }, IndexInterval::positive())?;
    Ok(CoverBound { bound, family, value: DimensionValue::Member(1.0), checks })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GCoverRow {
    pub x: f64,
    pub g: f64,
    /// sum over n < n0
    pub head: f64,
    /// head + sum_{n >= n0} 4 a_n^{2 eps}, the bound implied by |x - E_n| >= c_n
    pub bound: f64,
    /// head + sum_{n >= n0} 2 a_n^{2 eps}, the constant as printed in the source argument
    pub bound_half: f64,
    pub outside: bool,
}

/// G(x) against the cover-complement bound at points x outside the union of A_n, n >= n0.
pub fn g_cover_check(atoms: &[(f64, f64)], eps: f64, n0: usize, xs: &[f64]) -> Vec<GCoverRow> {
    let n0 = n0.max(1);
    let tail: f64 = atoms[n0 - 1..].iter().map(|a| a.1.powf(2.0 * eps)).sum();
    xs.iter()
        .map(|&x| {
            let outside = atoms[n0 - 1..].iter().all(|(e, a)| (x - e).abs() > 0.5 * a.powf(0.5 - eps));
            let head = g_atoms(&atoms[..n0 - 1], x);
            GCoverRow { x, g: g_atoms(atoms, x), head, bound: head + 4.0 * tail, bound_half: head + 2.0 * tail, outside }
        })
        .collect()
}

/// Fit |v_n| <= C exp(-D n^{1/nu}) to values sorted by decreasing magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub c: f64,
    pub d: f64,
    pub n_used: usize,
}

pub fn decay_fit(values: &[f64], nu: usize) -> Result<DecayFit> {
    let mut v: Vec<f64> = values.iter().map(|x| x.abs()).filter(|x| *x > 0.0).collect();
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if v.len() < 3 {
        return Err(Error::BadParams("decay fit needs at least 3 nonzero values".into()));
    }
    let x: Vec<f64> = (1..=v.len()).map(|n| (n as f64).powf(1.0 / nu as f64)).collect();
    let y: Vec<f64> = v.iter().map(|a| a.ln()).collect();
    let d = -crate::trend::fit_tail(&x, &y, 1.0).slope;
    let ln_c = x.iter().zip(&y).map(|(x, y)| y + d * x).fold(f64::NEG_INFINITY, f64::max);
    Ok(DecayFit { c: ln_c.exp(), d, n_used: v.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuleEigen {
    pub energy: f64,
    pub center: Vec<i64>,
    pub vector: Vec<f64>,
}

/// Eigenvectors on a finite box with the fitted SULE constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuleModel {
    pub nu: usize,
    pub sites: Vec<Vec<i64>>,
    /// declared decay rate
    pub alpha: f64,
    /// rate the stored vectors satisfy with constant `c_delta`
    pub alpha_fit: f64,
    pub delta: f64,
    pub c_delta: f64,
    pub eigen: Vec<SuleEigen>,
}

fn norm_i(m: &[i64]) -> f64 {
    m.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt()
}

fn dist(a: &[i64], b: &[i64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| ((x - y) as f64).powi(2)).sum::<f64>().sqrt()
}

impl SuleModel {
    /// Checks orthonormality and fits (alpha_fit, C_delta): the largest rate on
    /// alpha * {1, 0.95, ..} whose constant stays below `c_cap`.
    pub fn new(nu: usize, sites: Vec<Vec<i64>>, alpha: f64, delta: f64, eigen: Vec<SuleEigen>) -> Result<Self> {
        if nu == 0 || sites.iter().any(|s| s.len() != nu) || eigen.iter().any(|e| e.vector.len() != sites.len() || e.center.len() != nu) {
            return Err(Error::BadParams("inconsistent SULE dimensions".into()));
        }
        if !(alpha > 0.0) || !(delta >= 0.0) {
            return Err(Error::BadParams("SULE needs alpha > 0 and delta >= 0".into()));
        }
        for (i, a) in eigen.iter().enumerate() {
            for b in &eigen[i..] {
                let d: f64 = a.vector.iter().zip(&b.vector).map(|(x, y)| x * y).sum();
                let want = if std::ptr::eq(a, b) { 1.0 } else { 0.0 };
                if (d - want).abs() > 1e-10 {
                    return Err(Error::BadParams(format!("eigenvectors not orthonormal: <.,.> = {d}")));
                }
            }
        }
        let c_of = |rate: f64| {
            eigen
                .par_iter()
                .map(|e| {
                    let shift = delta * norm_i(&e.center);
                    e.vector
                        .iter()
                        .zip(&sites)
                        .filter(|(v, _)| **v != 0.0)
                        .map(|(v, m)| v.abs().ln() + rate * dist(m, &e.center) - shift)
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .reduce(|| f64::NEG_INFINITY, f64::max)
                .exp()
        };
        const C_CAP: f64 = 100.0;
        let mut alpha_fit = alpha * 0.05;
        for k in 0..20 {
            let r = alpha * (1.0 - 0.05 * k as f64);
            if c_of(r) <= C_CAP {
                alpha_fit = r;
                break;
            }
        }
        let c_delta = c_of(alpha_fit);
        Ok(SuleModel { nu, sites, alpha, alpha_fit, delta, c_delta, eigen })
    }

    /// |phi_n(m)| <= C_delta e^{delta |m_n| - alpha_fit |m - m_n|} on every stored entry.
    pub fn check_bound(&self) -> bool {
        self.eigen.iter().all(|e| {
            let shift = self.delta * norm_i(&e.center);
            e.vector.iter().zip(&self.sites).all(|(v, m)| {
                v.abs() <= self.c_delta * (shift - self.alpha_fit * dist(m, &e.center)).exp() * (1.0 + 1e-12)
            })
        })
    }

    fn origin(&self) -> Option<usize> {
        self.sites.iter().position(|m| m.iter().all(|x| *x == 0))
    }

    /// phi_n(0) in label order.
    pub fn origin_amplitudes(&self) -> Vec<f64> {
        match self.origin() {
            Some(o) => self.eigen.iter().map(|e| e.vector[o]).collect(),
            None => vec![0.0; self.eigen.len()],
        }
    }

    /// H = diag(v) on sites 0..n: phi_n = delta_n.
    pub fn diagonal(v: &[f64]) -> Result<Self> {
        let n = v.len();
        let sites: Vec<Vec<i64>> = (0..n as i64).map(|i| vec![i]).collect();
        let eigen = (0..n)
            .map(|k| {
                let mut vector = vec![0.0; n];
                vector[k] = 1.0;
                SuleEigen { energy: v[k], center: vec![k as i64], vector }
            })
            .collect();
        Self::new(1, sites, 1.0, 0.0, eigen)
    }
}

fn centered_sites(n: usize) -> Vec<Vec<i64>> {
    let h = (n / 2) as i64;
    (0..n as i64).map(|i| vec![i - h]).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuleGenerator {
    #[serde(default = "default_sites")]
    pub sites: usize,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default)]
    pub delta: f64,
    /// energies uniform in [-energy_width, energy_width]
    #[serde(default = "one")]
    pub energy_width: f64,
}

fn default_sites() -> usize {
    256
}

impl Default for SuleGenerator {
    fn default() -> Self {
        SuleGenerator { sites: 256, alpha: 1.0, delta: 0.0, energy_width: 1.0 }
    }
}

/// Synthetic nu = 1 SULE model: one normalized exponential e^{-alpha |m - m_n|} per
/// site, orthonormalized by a Cholesky pass, with random energies.
pub fn generate_sule(g: &SuleGenerator, seed: u64) -> Result<SuleModel> {
    if g.sites < 2 {
        return Err(Error::BadParams("generator needs at least 2 sites".into()));
    }
    let sites = centered_sites(g.sites);
    let raw: Vec<Vec<f64>> = sites
        .iter()
        .map(|c| {
            let v: Vec<f64> = sites.iter().map(|m| (-g.alpha * (m[0] - c[0]).abs() as f64).exp()).collect();
            let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / nrm).collect()
        })
        .collect();
    let q = linalg::cholesky_orthonormalize(&raw)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eigen = q
        .into_iter()
        .zip(&sites)
        .map(|(vector, c)| SuleEigen { energy: rng.random_range(-g.energy_width..=g.energy_width), center: c.clone(), vector })
        .collect();
    SuleModel::new(1, sites, g.alpha, g.delta, eigen)
}

/// Anderson model on `n` sites: hopping 1, V uniform in [-w/2, w/2], diagonalized directly.
pub fn anderson_model(n: usize, w: f64, seed: u64) -> Result<SuleModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5 * w..=0.5 * w)).collect();
    let e = linalg::sym_eigen(n, |i, j| if i == j { v[i] } else if i.abs_diff(j) == 1 { 1.0 } else { 0.0 })?;
    let sites = centered_sites(n);
    let eigen = e
        .values
        .into_iter()
        .zip(e.vectors)
        .map(|(energy, vector)| {
            let k = (0..n).max_by(|a, b| vector[*a].abs().partial_cmp(&vector[*b].abs()).unwrap()).unwrap();
            SuleEigen { energy, center: sites[k].clone(), vector }
        })
        .collect();
    SuleModel::new(1, sites, 1.0, 0.0, eigen)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuleMeasure {
    pub measure: SpectralMeasure,
    /// sum |phi_n(0)|^2 before normalization
    pub raw_mass: f64,
    pub renormalized: bool,
}

/// Atomic measure sum |phi_n(0)|^2 delta_{E_n}; incomplete bases are renormalized and flagged.
pub fn sule_spectral_measure(model: &SuleModel) -> Result<SuleMeasure> {
    let atoms: Vec<(f64, f64)> = model
        .eigen
        .iter()
        .zip(model.origin_amplitudes())
        .map(|(e, a)| (e.energy, a * a))
        .filter(|a| a.1 > 0.0)
        .collect();
    let raw_mass: f64 = atoms.iter().map(|a| a.1).sum();
    if !(raw_mass > 0.0) {
        return Err(Error::InvalidMeasure("origin is orthogonal to every stored eigenvector".into()));
    }
    let renormalized = (raw_mass - 1.0).abs() > 1e-10;
    let atoms: Vec<(f64, f64)> = atoms.into_iter().map(|(e, a)| (e, a / raw_mass)).collect();
    Ok(SuleMeasure { measure: SpectralMeasure::atomic(&atoms)?, raw_mass, renormalized })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuleBound {
    /// fit of the weights a_n = |phi_n(0)|^2 sorted by decreasing size
    pub fit: DecayFit,
    /// f(t) = (ln(1/t) / D)^{-nu}
    pub f: GaugeFunction,
    /// b_n = scale / n
    pub b: BSequence,
    pub cover: CoverBound,
}

/// Weights relabeled by size, fitted to C e^{-D n^{1/nu}}, then bounded with
/// f(t) = (ln(1/t)/D)^{-nu} and b_n = K/n in the larger family.
pub fn sule_dimension_bound(model: &SuleModel, eps_list: &[f64], beta: f64) -> Result<SuleBound> {
    let sm = sule_spectral_measure(model)?;
    let mut atoms: Vec<(f64, f64)> = sm.measure.atoms().to_vec();
    atoms.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    if atoms.iter().any(|a| a.1 >= 1.0) {
        return Err(Error::HypothesisViolated("a single atom carries all the mass".into()));
    }
    let w: Vec<f64> = atoms.iter().map(|a| a.1).collect();
    let fit = decay_fit(&w, model.nu)?;
    if !(fit.d > 0.0) {
        return Err(Error::HypothesisViolated(format!("fitted decay rate {} is not positive", fit.d)));
    }
    let nu = model.nu as f64;
    let f = GaugeFunction::new(GaugeSpec::Transform {
        inner: Box::new(GaugeSpec::LogPower { alpha: nu }),
        s_scale: 1.0,
        exponent: 1.0,
        log_const: nu * fit.d.ln(),
    })?;
    // a_n <= exp(-D (n/K)^{1/nu}) for every n
    let k = w
        .iter()
        .enumerate()
        .map(|(i, a)| (i + 1) as f64 / ((-a.ln()) / fit.d).powf(nu))
        .fold(0.0f64, f64::max)
        * (1.0 + 1e-9);
    let b = BSequence::Harmonic { scale: k };
    let cover = cover_dimension_bound(&atoms, &f, &b, BoundMode::LargerFamily { beta }, eps_list)?;
    Ok(SuleBound { fit, f, b, cover })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauge::{compare, default_s_grid, Ordering};
    use crate::trend::TrendConfig;

    fn random_atoms(rng: &mut ChaCha8Rng, n: usize) -> Vec<(f64, f64)> {
        let mut w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
        (0..n).map(|i| (rng.random_range(-3.0..3.0), w[i])).collect()
    }

    #[test]
    fn point_mass_shifts() {
        let p = RankOnePerturbation::new(SpectralMeasure::dirac(0.0), 2.0).unwrap();
        let z = Complex64::new(0.7, 0.3);
        let t = perturbed_transform(&p, z).unwrap();
        assert!((t.value + 1.0 / (z - 2.0)).norm() < 1e-14);
        assert_eq!(perturbed_eigenvalues(&p).unwrap().len(), 1);
        assert!((perturbed_eigenvalues(&p).unwrap()[0] - 2.0).abs() < 1e-14);
        let p0 = RankOnePerturbation::new(SpectralMeasure::dirac(0.0), 0.0).unwrap();
        assert_eq!(perturbed_transform(&p0, z).unwrap().value, perturbed_transform(&p0, z).unwrap().f);
    }

    #[test]
    fn im_identity_two_atoms() {
        let two = SpectralMeasure::atomic(&[(-1.0, 0.5), (1.0, 0.5)]).unwrap();
        let p = RankOnePerturbation::new(two, 1.0).unwrap();
        let t = perturbed_transform(&p, Complex64::new(0.0, 1.0)).unwrap();
        assert!((t.value.im - t.im).abs() < 1e-12);
        // F(i) = i/2, F_1 = (i/2)/(1 + i/2)
        let want = Complex64::new(0.0, 0.5) / Complex64::new(1.0, 0.5);
        assert!((t.value - want).norm() < 1e-15);
    }

    #[test]
    fn resonance_at_real_root() {
        let p = RankOnePerturbation::new(SpectralMeasure::dirac(0.0), 2.0).unwrap();
        assert!(matches!(perturbed_transform(&p, Complex64::new(2.0, 0.0)), Err(Error::Resonance(_))));
    }

    #[test]
    fn eigenvalues_match_diagonalization() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for inst in 0..16 {
            let n = 1 + inst * 4;
            let atoms = random_atoms(&mut rng, n);
            let lam = rng.random_range(-5.0..5.0);
            let mu = SpectralMeasure::atomic(&atoms).unwrap();
            let p = RankOnePerturbation::new(mu.clone(), lam).unwrap();
            let got = perturbed_spectrum(&p).unwrap();
            let want = rank_one_matrix_oracle(mu.atoms(), lam).unwrap();
            assert_eq!(got.len(), want.len());
            for (g, w) in got.iter().zip(&want) {
                assert!((g.0 - w.0).abs() < 1e-10, "eig {} vs {}", g.0, w.0);
                assert!((g.1 - w.1).abs() < 1e-10);
            }
            let mass: f64 = got.iter().map(|g| g.1).sum();
            assert!((mass - 1.0).abs() < 1e-10);
            // interlacing
            let e: Vec<f64> = mu.atoms().iter().map(|a| a.0).collect();
            for (k, x) in got.iter().enumerate() {
                if lam > 0.0 {
                    assert!(x.0 > e[k] && (k + 1 == e.len() || x.0 < e[k + 1]));
                } else {
                    assert!(x.0 < e[k] && (k == 0 || x.0 > e[k - 1]));
                }
            }
        }
    }

    #[test]
    fn g_values() {
        assert_eq!(g_function(&SpectralMeasure::dirac(0.0), 2.0), GValue::Finite(0.25));
        assert_eq!(g_function(&SpectralMeasure::dirac(0.0), 0.0), GValue::Infinite);
        let q = SpectralMeasure::atomic(&[(-1.0, 0.25), (-0.5, 0.25), (0.5, 0.25), (1.0, 0.25)]).unwrap();
        match g_function(&q, 0.0) {
            GValue::Finite(g) => assert!((g - 2.5).abs() < 1e-14),
            _ => panic!(),
        }
        let leb = SpectralMeasure::lebesgue(0.0, 1.0).unwrap();
        assert_eq!(g_function(&leb, 0.5), GValue::Infinite);
        match g_function(&leb, 2.0) {
            GValue::Finite(g) => assert!((g - (1.0 - 0.5)).abs() < 1e-12),
            _ => panic!(),
        }
    }

    #[test]
    fn hypothesis_gate_both_ways() {
        // a_n = e^{-n}, f = 1/ln(1/t), b_n = scale/n^2: passes iff scale >= N
        let atoms: Vec<(f64, f64)> = (1..=64).map(|n| (n as f64 * 0.01, (-(n as f64)).exp())).collect();
        let f = GaugeFunction::log_power(1.0).unwrap();
        let ok = cover_dimension_bound(&atoms, &f, &BSequence::PowerLaw { p: 2.0, scale: 64.0 }, BoundMode::Standard, &[0.1]);
        let r = ok.unwrap();
        assert_eq!(r.checks[0].verdict, Verdict::Zero);
        let bad = cover_dimension_bound(&atoms, &f, &BSequence::PowerLaw { p: 2.0, scale: 63.0 }, BoundMode::Standard, &[0.1]);
        assert!(matches!(bad, Err(Error::HypothesisViolated(_))));
        let harmonic = cover_dimension_bound(&atoms, &f, &BSequence::Harmonic { scale: 1.0 }, BoundMode::Standard, &[0.1]);
        assert!(matches!(harmonic, Err(Error::HypothesisViolated(_))));
    }

    #[test]
    fn g_bound_off_cover() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let atoms: Vec<(f64, f64)> = (1..=1000).map(|n| (rng.random_range(-1.0..1.0), (-(n as f64) * 0.05).exp() * 0.05)).collect();
        let eps = 0.25;
        let xs: Vec<f64> = (0..200).map(|i| -1.5 + 3.0 * i as f64 / 199.0).collect();
        let rows = g_cover_check(&atoms, eps, 50, &xs);
        let mut tested = 0;
        for r in rows.iter().filter(|r| r.outside) {
            assert!(r.g <= r.bound);
            tested += 1;
        }
        assert!(tested > 0);
    }

    #[test]
    fn diagonal_model_is_point_mass() {
        let m = SuleModel::diagonal(&[0.3, -0.2, 1.1]).unwrap();
        let s = sule_spectral_measure(&m).unwrap();
        assert_eq!(s.measure.atoms(), &[(0.3, 1.0)]);
        assert!(!s.renormalized);
    }

    #[test]
    fn sule_chain() {
        let m = generate_sule(&SuleGenerator::default(), 11).unwrap();
        assert!(m.check_bound());
        let s = sule_spectral_measure(&m).unwrap();
        assert!((s.raw_mass - 1.0).abs() < 1e-10);
        let fit = decay_fit(&m.origin_amplitudes(), 1).unwrap();
        assert!(fit.d > 0.0);
        let b = sule_dimension_bound(&m, &[0.25, 0.1, 0.05], 1.5).unwrap();
        assert!(b.cover.checks.iter().all(|c| c.verdict == Verdict::Zero));
        let ord = compare(&b.cover.bound, &GaugeFunction::log_power(1.0).unwrap(), &default_s_grid(), &TrendConfig::default()).unwrap();
        assert_eq!(ord, Ordering::Equivalent);
    }

    #[test]
    fn anderson_decay() {
        let m = anderson_model(256, 20.0, 5).unwrap();
        let fit = decay_fit(&m.origin_amplitudes(), 1).unwrap();
        assert!(fit.d > 0.0);
    }
}
