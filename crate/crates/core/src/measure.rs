//! Spectral measures: atoms, piecewise densities and an optional deep
//! Cantor-type component, with local scaling, the singular/continuous
//! classification and family dimensions.

use crate::error::{Error, Result};
use crate::gauge::{compare, family_dimension_from_alpha, CompleteFamily, DimensionValue, GaugeFunction, Ordering};
use crate::trend::{self, TrendClass, TrendConfig};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensityKind {
    Const { value: f64 },
    /// equally spaced samples across the interval, linear in between
    Table { values: Vec<f64> },
    /// scale * sqrt(4 - x^2) / (2 pi), on [-2, 2] only
    Semicircle {
        #[serde(default = "one")]
        scale: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityPiece {
    pub interval: [f64; 2],
    #[serde(flatten)]
    pub kind: DensityKind,
}

fn semicircle_cdf(x: f64) -> f64 {
    let x = x.clamp(-2.0, 2.0);
    (x * (4.0 - x * x).sqrt() / 2.0 + 2.0 * (x / 2.0).asin()) / (2.0 * PI) + 0.5
}

fn csqrt_branch(z: Complex64) -> Complex64 {
    // sqrt(z^2 - 4) with the branch ~ z at infinity
    (z - 2.0).sqrt() * (z + 2.0).sqrt()
}

impl DensityPiece {
    fn validate(&self) -> Result<()> {
        let [a, b] = self.interval;
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidMeasure(format!("density interval [{a}, {b}]")));
        }
        match &self.kind {
            DensityKind::Const { value } if !(*value >= 0.0 && value.is_finite()) => {
                Err(Error::InvalidMeasure("const density must be >= 0".into()))
            }
            DensityKind::Table { values } if values.len() < 2 || values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) => {
                Err(Error::InvalidMeasure("table density needs >= 2 nonnegative values".into()))
            }
            DensityKind::Semicircle { scale } if a != -2.0 || b != 2.0 || !(*scale > 0.0) => {
                Err(Error::InvalidMeasure("semicircle density lives on [-2, 2] with scale > 0".into()))
            }
            _ => Ok(()),
        }
    }

    fn table_nodes(&self, values: &[f64]) -> impl Iterator<Item = (f64, f64, f64, f64)> + '_ {
        let [a, b] = self.interval;
        let h = (b - a) / (values.len() - 1) as f64;
        let owned: Vec<f64> = values.to_vec();
        (0..values.len() - 1).map(move |i| (a + h * i as f64, a + h * (i + 1) as f64, owned[i], owned[i + 1]))
    }

    pub fn value_at(&self, x: f64) -> f64 {
        let [a, b] = self.interval;
        if x < a || x > b {
            return 0.0;
        }
        match &self.kind {
            DensityKind::Const { value } => *value,
            DensityKind::Semicircle { scale } => scale * (4.0 - x * x).max(0.0).sqrt() / (2.0 * PI),
            DensityKind::Table { values } => {
                let h = (b - a) / (values.len() - 1) as f64;
                let i = (((x - a) / h).floor() as usize).min(values.len() - 2);
                let t = (x - a) / h - i as f64;
                values[i] * (1.0 - t) + values[i + 1] * t
            }
        }
    }

    /// Mass on [lo, hi] in closed form.
    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        let [a, b] = self.interval;
        let (lo, hi) = (lo.max(a), hi.min(b));
        if lo >= hi {
            return 0.0;
        }
        match &self.kind {
            DensityKind::Const { value } => value * (hi - lo),
            DensityKind::Semicircle { scale } => scale * (semicircle_cdf(hi) - semicircle_cdf(lo)),
            DensityKind::Table { .. } => {
                // trapezoids on the clipped segments are exact for linear pieces
                let DensityKind::Table { values } = &self.kind else { unreachable!() };
                let mut m = 0.0;
                for (y0, y1, _, _) in self.table_nodes(values) {
                    let (u, v) = (lo.max(y0), hi.min(y1));
                    if u < v {
                        m += 0.5 * (self.value_at(u) + self.value_at(v)) * (v - u);
                    }
                }
                m
            }
        }
    }

    pub fn mass(&self) -> f64 {
        self.mass_between(self.interval[0], self.interval[1])
    }

    /// int w(y) / (y - z)^{order + 1} dy for order 0 or 1.
    fn stieltjes(&self, z: Complex64, order: u32) -> Complex64 {
        let [a, b] = self.interval;
        let lg = |y: f64| -> Complex64 {
            // ln(y - z) on the branch continuous from the upper half plane
            let d = Complex64::new(y - z.re, -z.im);
            let d = if d.im == 0.0 { Complex64::new(d.re, -0.0) } else { d };
            d.ln()
        };
        let inv = |y: f64| Complex64::new(1.0, 0.0) / (Complex64::new(y, 0.0) - z);
        match &self.kind {
            DensityKind::Const { value } => {
                if order == 0 {
                    (lg(b) - lg(a)) * *value
                } else {
                    (inv(a) - inv(b)) * *value
                }
            }
            DensityKind::Semicircle { scale } => {
                let r = csqrt_branch(z);
                if order == 0 {
                    (-z + r) / 2.0 * *scale
                } else {
                    (z / r - 1.0) / 2.0 * *scale
                }
            }
            DensityKind::Table { values } => {
                let mut acc = Complex64::new(0.0, 0.0);
                for (y0, y1, w0, w1) in self.table_nodes(values) {
                    let s = (w1 - w0) / (y1 - y0);
                    let c = Complex64::new(w0, 0.0) + (z - y0) * s;
                    if order == 0 {
                        acc += Complex64::new(s * (y1 - y0), 0.0) + c * (lg(y1) - lg(y0));
                    } else {
                        acc += (lg(y1) - lg(y0)) * s + c * (inv(y0) - inv(y1));
                    }
                }
                acc
            }
        }
    }
}

/// Equal-weight atoms at the midpoints of the depth-`depth` intervals of a
/// Cantor construction on [left, left + width]. Never materialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CantorSpec {
    #[serde(default)]
    pub left: f64,
    #[serde(default = "one")]
    pub width: f64,
    #[serde(default = "third")]
    pub ratio: f64,
    pub depth: u32,
    #[serde(default = "one")]
    pub mass: f64,
}

fn third() -> f64 {
    1.0 / 3.0
}

const MULTIPOLE_TERMS: usize = 30;

#[derive(Debug, Clone)]
struct Cantor {
    spec: CantorSpec,
    /// moments[d][k] of a unit-width, unit-mass node with d levels below it, about its center
    moments: Vec<[f64; MULTIPOLE_TERMS]>,
}

impl Cantor {
    fn new(spec: CantorSpec) -> Result<Self> {
        if !(spec.ratio > 0.0 && spec.ratio < 0.5) || !(spec.width > 0.0) || !(spec.mass > 0.0) || spec.depth > 60 {
            return Err(Error::InvalidMeasure("cantor needs ratio in (0, 1/2), width > 0, mass > 0, depth <= 60".into()));
        }
        let r = spec.ratio;
        let off = (1.0 - r) / 2.0;
        let mut moments = vec![[0.0; MULTIPOLE_TERMS]];
        moments[0][0] = 1.0;
        let mut binom = [[0.0f64; MULTIPOLE_TERMS]; MULTIPOLE_TERMS];
        for n in 0..MULTIPOLE_TERMS {
            binom[n][0] = 1.0;
            for k in 1..=n {
                binom[n][k] = binom[n - 1][k - 1] + if k < n { binom[n - 1][k] } else { 0.0 };
            }
        }
        for d in 1..=spec.depth as usize {
            let prev = moments[d - 1];
            let mut m = [0.0; MULTIPOLE_TERMS];
            for k in 0..MULTIPOLE_TERMS {
                let mut acc = 0.0;
                for i in 0..=k {
                    let sym = off.powi((k - i) as i32) * (1.0 + if (k - i) % 2 == 0 { 1.0 } else { -1.0 });
                    acc += binom[k][i] * r.powi(i as i32) * prev[i] * sym;
                }
                m[k] = 0.5 * acc;
            }
            moments.push(m);
        }
        Ok(Cantor { spec, moments })
    }

    fn floor(&self) -> f64 {
        self.spec.width * self.spec.ratio.powi(self.spec.depth as i32)
    }

    /// Mass of atoms inside (lo, hi) (open) or [lo, hi] (closed).
    fn mass_in(&self, lo: f64, hi: f64, closed: bool) -> f64 {
        let s = &self.spec;
        let leaf_half = 0.5 * self.floor();
        fn rec(c: &Cantor, left: f64, w: f64, level: u32, lo: f64, hi: f64, closed: bool, leaf_half: f64) -> f64 {
            let s = &c.spec;
            let mass = s.mass * 0.5f64.powi(level as i32);
            let (a, b) = (left + leaf_half, left + w - leaf_half);
            let inside = |x: f64| if closed { x >= lo && x <= hi } else { x > lo && x < hi };
            if inside(a) && inside(b) {
                return mass;
            }
            let outside = if closed { b < lo || a > hi } else { b <= lo || a >= hi };
            if outside {
                return 0.0;
            }
            if level == s.depth {
                return if inside(left + w / 2.0) { mass } else { 0.0 };
            }
            let cw = w * s.ratio;
            rec(c, left, cw, level + 1, lo, hi, closed, leaf_half)
                + rec(c, left + w - cw, cw, level + 1, lo, hi, closed, leaf_half)
        }
        rec(self, s.left, s.width, 0, lo, hi, closed, leaf_half)
    }

    fn stieltjes(&self, z: Complex64, order: u32) -> Complex64 {
        fn rec(c: &Cantor, left: f64, w: f64, level: u32, z: Complex64, order: u32) -> Complex64 {
            let s = &c.spec;
            let mass = s.mass * 0.5f64.powi(level as i32);
            let center = left + w / 2.0;
            let dz = z - center;
            let d = (s.depth - level) as usize;
            if d == 0 {
                let inv = -1.0 / dz;
                return if order == 0 { inv * mass } else { inv * inv * mass };
            }
            if dz.norm() > 2.0 * w {
                // 1/(y - z) = -sum_k (y - c)^k / (z - c)^{k+1}
                let m = &c.moments[d];
                let q = Complex64::new(w, 0.0) / dz;
                let mut qk = Complex64::new(1.0, 0.0);
                let mut acc = Complex64::new(0.0, 0.0);
                for (k, mk) in m.iter().enumerate() {
                    let term = qk * *mk;
                    acc += if order == 0 { term } else { term * (k as f64 + 1.0) };
                    qk *= q;
                }
                return if order == 0 { -acc / dz * mass } else { acc / (dz * dz) * mass };
            }
            let cw = w * s.ratio;
            rec(c, left, cw, level + 1, z, order) + rec(c, left + w - cw, cw, level + 1, z, order)
        }
        rec(self, self.spec.left, self.spec.width, 0, z, order)
    }

    /// Atom reached by following the binary digits of u in (0, 1).
    fn quantile(&self, mut u: f64) -> f64 {
        let s = &self.spec;
        let (mut left, mut w) = (s.left, s.width);
        for _ in 0..s.depth {
            let cw = w * s.ratio;
            if u < 0.5 {
                u *= 2.0;
            } else {
                left += w - cw;
                u = 2.0 * u - 1.0;
            }
            w = cw;
        }
        left + w / 2.0
    }
}

/// JSON shape of a measure.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    #[serde(default)]
    pub atoms: Vec<[f64; 2]>,
    #[serde(default)]
    pub density: Vec<DensityPiece>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cantor: Option<CantorSpec>,
    /// smallest scale at which the measure is trusted; defaults to the Cantor floor, else 0
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "MeasureSpec", into = "MeasureSpec")]
pub struct SpectralMeasure {
    atoms: Vec<(f64, f64)>,
    prefix: Vec<f64>,
    density: Vec<DensityPiece>,
    cantor: Option<Cantor>,
    resolution: Option<f64>,
}

impl PartialEq for SpectralMeasure {
    fn eq(&self, other: &Self) -> bool {
        self.spec() == other.spec()
    }
}

impl TryFrom<MeasureSpec> for SpectralMeasure {
    type Error = Error;
    fn try_from(s: MeasureSpec) -> Result<Self> {
        SpectralMeasure::new(s)
    }
}

impl From<SpectralMeasure> for MeasureSpec {
    fn from(m: SpectralMeasure) -> Self {
        m.spec()
    }
}

impl SpectralMeasure {
    pub fn new(spec: MeasureSpec) -> Result<Self> {
        let mut atoms: Vec<(f64, f64)> = Vec::with_capacity(spec.atoms.len());
        for [e, a] in &spec.atoms {
            if !e.is_finite() || !(*a > 0.0 && a.is_finite()) {
                return Err(Error::InvalidMeasure(format!("atom ({e}, {a}) needs finite position and positive weight")));
            }
            atoms.push((*e, *a));
        }
        atoms.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        // coincident atoms are merged
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (e, a) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == e => last.1 += a,
                _ => merged.push((e, a)),
            }
        }
        for p in &spec.density {
            p.validate()?;
        }
        let cantor = spec.cantor.map(Cantor::new).transpose()?;
        let mut prefix = Vec::with_capacity(merged.len() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for (_, a) in &merged {
            acc += a;
            prefix.push(acc);
        }
        if let Some(r) = spec.resolution {
            if !(r >= 0.0) {
                return Err(Error::InvalidMeasure("resolution must be >= 0".into()));
            }
        }
        Ok(SpectralMeasure { atoms: merged, prefix, density: spec.density, cantor, resolution: spec.resolution })
    }

    pub fn spec(&self) -> MeasureSpec {
        MeasureSpec {
            atoms: self.atoms.iter().map(|(e, a)| [*e, *a]).collect(),
            density: self.density.clone(),
            cantor: self.cantor.as_ref().map(|c| c.spec.clone()),
            resolution: self.resolution,
        }
    }

    pub fn atomic(atoms: &[(f64, f64)]) -> Result<Self> {
        Self::new(MeasureSpec { atoms: atoms.iter().map(|(e, a)| [*e, *a]).collect(), ..Default::default() })
    }

    pub fn dirac(e: f64) -> Self {
        Self::atomic(&[(e, 1.0)]).expect("valid atom")
    }

    /// Uniform density `value` on [a, b].
    pub fn uniform(a: f64, b: f64, value: f64) -> Result<Self> {
        Self::new(MeasureSpec {
            density: vec![DensityPiece { interval: [a, b], kind: DensityKind::Const { value } }],
            ..Default::default()
        })
    }

    pub fn lebesgue(a: f64, b: f64) -> Result<Self> {
        Self::uniform(a, b, 1.0)
    }

    pub fn semicircle() -> Self {
        Self::new(MeasureSpec {
            density: vec![DensityPiece { interval: [-2.0, 2.0], kind: DensityKind::Semicircle { scale: 1.0 } }],
            ..Default::default()
        })
        .expect("valid semicircle")
    }

    /// Cantor-Lebesgue type measure on [0, 1] at finite depth.
    pub fn cantor(ratio: f64, depth: u32) -> Result<Self> {
        Self::new(MeasureSpec {
            cantor: Some(CantorSpec { left: 0.0, width: 1.0, ratio, depth, mass: 1.0 }),
            ..Default::default()
        })
    }

    /// Sum of two measures with weights.
    pub fn combine(&self, wa: f64, other: &SpectralMeasure, wb: f64) -> Result<Self> {
        let scale = |m: &SpectralMeasure, w: f64| -> MeasureSpec {
            let mut s = m.spec();
            for a in &mut s.atoms {
                a[1] *= w;
            }
            for p in &mut s.density {
                match &mut p.kind {
                    DensityKind::Const { value } => *value *= w,
                    DensityKind::Table { values } => values.iter_mut().for_each(|v| *v *= w),
                    DensityKind::Semicircle { scale } => *scale *= w,
                }
            }
            if let Some(c) = &mut s.cantor {
                c.mass *= w;
            }
            s
        };
        let (mut a, b) = (scale(self, wa), scale(other, wb));
        if a.cantor.is_some() && b.cantor.is_some() {
            return Err(Error::InvalidMeasure("at most one Cantor component".into()));
        }
        a.atoms.extend(b.atoms);
        a.density.extend(b.density);
        a.cantor = a.cantor.or(b.cantor);
        a.resolution = match (a.resolution, b.resolution) {
            (Some(x), Some(y)) => Some(x.max(y)),
            (x, y) => x.or(y),
        };
        Self::new(a)
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn density(&self) -> &[DensityPiece] {
        &self.density
    }

    pub fn has_cantor(&self) -> bool {
        self.cantor.is_some()
    }

    pub fn is_purely_atomic(&self) -> bool {
        self.density.is_empty() && self.cantor.is_none()
    }

    pub fn total_mass(&self) -> f64 {
        self.prefix.last().copied().unwrap_or(0.0)
            + self.density.iter().map(|p| p.mass()).sum::<f64>()
            + self.cantor.as_ref().map(|c| c.spec.mass).unwrap_or(0.0)
    }

    pub fn is_probability(&self) -> bool {
        (self.total_mass() - 1.0).abs() < 1e-12
    }

    /// Smallest trusted scale.
    pub fn resolution_floor(&self) -> f64 {
        self.resolution.unwrap_or_else(|| self.cantor.as_ref().map(|c| c.floor()).unwrap_or(0.0))
    }

    pub fn density_at(&self, x: f64) -> f64 {
        self.density.iter().map(|p| p.value_at(x)).sum()
    }

    /// Edges of density pieces, for proximity checks.
    pub fn density_edges(&self) -> Vec<f64> {
        self.density.iter().flat_map(|p| p.interval).collect()
    }

    /// Cantor hull [left, left + width], if any.
    pub fn cantor_hull(&self) -> Option<(f64, f64)> {
        self.cantor.as_ref().map(|c| (c.spec.left, c.spec.left + c.spec.width))
    }

    fn atom_mass(&self, lo: f64, hi: f64, closed: bool) -> f64 {
        let i = if closed {
            self.atoms.partition_point(|a| a.0 < lo)
        } else {
            self.atoms.partition_point(|a| a.0 <= lo)
        };
        let j = if closed {
            self.atoms.partition_point(|a| a.0 <= hi)
        } else {
            self.atoms.partition_point(|a| a.0 < hi)
        };
        if j > i {
            self.prefix[j] - self.prefix[i]
        } else {
            0.0
        }
    }

    fn mass_range(&self, lo: f64, hi: f64, closed: bool) -> f64 {
        self.atom_mass(lo, hi, closed)
            + self.density.iter().map(|p| p.mass_between(lo, hi)).sum::<f64>()
            + self.cantor.as_ref().map(|c| c.mass_in(lo, hi, closed)).unwrap_or(0.0)
    }

    /// mu((lo, hi))
    pub fn mass_open(&self, lo: f64, hi: f64) -> f64 {
        self.mass_range(lo, hi, false)
    }

    /// mu([lo, hi])
    pub fn mass_closed(&self, lo: f64, hi: f64) -> f64 {
        self.mass_range(lo, hi, true)
    }

    /// M_mu^eps(x) = mu((x - eps, x + eps))
    pub fn ball_mass(&self, x: f64, eps: f64) -> f64 {
        self.mass_open(x - eps, x + eps)
    }

    /// int dmu(y) / (y - z)^{order + 1}, order 0 or 1, without proximity checks.
    pub(crate) fn stieltjes(&self, z: Complex64, order: u32) -> Complex64 {
        let term = |(e, a): &(f64, f64)| {
            let inv = Complex64::new(1.0, 0.0) / (Complex64::new(*e, 0.0) - z);
            if order == 0 {
                inv * *a
            } else {
                inv * inv * *a
            }
        };
        let atoms: Complex64 = if self.atoms.len() > 8192 {
            self.atoms.par_iter().map(term).collect::<Vec<Complex64>>().iter().sum()
        } else {
            self.atoms.iter().map(term).sum()
        };
        atoms
            + self.density.iter().map(|p| p.stieltjes(z, order)).sum::<Complex64>()
            + self.cantor.as_ref().map(|c| c.stieltjes(z, order)).unwrap_or_default()
    }

    /// x with continuous-part CDF equal to u * (continuous mass), by bisection.
    fn density_quantile(&self, u: f64) -> f64 {
        let lo = self.density.iter().map(|p| p.interval[0]).fold(f64::INFINITY, f64::min);
        let hi = self.density.iter().map(|p| p.interval[1]).fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = self.density.iter().map(|p| p.mass()).sum();
        let target = u * total;
        crate::logmath::bisect_increasing(lo, hi, |x| self.density.iter().map(|p| p.mass_between(lo, x)).sum::<f64>() - target)
    }

    /// mu-proportional sample points with weights summing to the total mass.
    /// Atoms heavier than 1e-4 are always included with their own mass.
    pub fn sample_points(&self, n: usize) -> Vec<(f64, f64)> {
        let mut pts: Vec<(f64, f64)> = self.atoms.iter().filter(|a| a.1 > 1e-4).copied().collect();
        let small: Vec<(f64, f64)> = self.atoms.iter().filter(|a| a.1 <= 1e-4).copied().collect();
        let m_small: f64 = small.iter().map(|a| a.1).sum();
        let m_dens: f64 = self.density.iter().map(|p| p.mass()).sum();
        let m_cant = self.cantor.as_ref().map(|c| c.spec.mass).unwrap_or(0.0);
        let rest = m_small + m_dens + m_cant;
        if rest <= 0.0 {
            return pts;
        }
        let share = |m: f64| if m > 0.0 { ((n as f64 * m / rest).round() as usize).max(1) } else { 0 };
        let (n_small, n_dens, n_cant) = (share(m_small), share(m_dens), share(m_cant));
        let mids = |k: usize| (0..k).map(move |i| (i as f64 + 0.5) / k as f64);
        if n_small > 0 {
            let mut cum = 0.0;
            let mut it = mids(n_small).peekable();
            for a in &small {
                cum += a.1;
                while let Some(u) = it.peek() {
                    if *u * m_small <= cum {
                        pts.push((a.0, m_small / n_small as f64));
                        it.next();
                    } else {
                        break;
                    }
                }
            }
        }
        for u in mids(n_dens) {
            pts.push((self.density_quantile(u), m_dens / n_dens as f64));
        }
        if let Some(c) = &self.cantor {
            for u in mids(n_cant) {
                pts.push((c.quantile(u), m_cant / n_cant as f64));
            }
        }
        pts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScalingVerdict {
    DivergesToInfinity,
    BoundedNonzero,
    TendsToZero,
    Undetermined,
}

pub(crate) fn scaling_verdict(class: TrendClass) -> ScalingVerdict {
    match class {
        TrendClass::Increasing => ScalingVerdict::DivergesToInfinity,
        TrendClass::Stable => ScalingVerdict::BoundedNonzero,
        TrendClass::Decreasing => ScalingVerdict::TendsToZero,
        TrendClass::Undetermined => ScalingVerdict::Undetermined,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub point: f64,
    /// strictly decreasing, restricted to the resolved range
    pub epsilons: Vec<f64>,
    pub log_ratios: Vec<f64>,
    pub verdict: ScalingVerdict,
    /// (smallest, largest) eps used
    pub resolved: (f64, f64),
}

/// Decreasing eps grid restricted to scales above the resolution floor.
pub(crate) fn resolved_grid(mu: &SpectralMeasure, eps_grid: &[f64]) -> Result<Vec<f64>> {
    let mut g: Vec<f64> = eps_grid.to_vec();
    g.sort_by(|a, b| b.partial_cmp(a).unwrap());
    g.dedup();
    if g.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidGrid("eps values must be positive".into()));
    }
    let floor = mu.resolution_floor();
    let g: Vec<f64> = g.into_iter().filter(|e| *e >= floor).collect();
    if g.len() < 12 {
        return Err(Error::InvalidGrid(format!("{} resolved eps values, need >= 12", g.len())));
    }
    Ok(g)
}

/// Default eps grid: 25 geometric points from 0.1 down to the resolution floor (or 1e-7).
pub fn default_eps_grid(mu: &SpectralMeasure) -> Vec<f64> {
    let lo = mu.resolution_floor().max(1e-7);
    crate::logmath::geomspace(0.1, lo, 25)
}

fn trend_x(eps: &[f64]) -> Vec<f64> {
    eps.iter().map(|e| -e.log10()).collect()
}

/// Verdict for ln M - ln rho. A ball mass that is constant over the whole tail
/// is an atom at the resolved scales; rho -> 0 then forces divergence for every gauge.
fn ratio_verdict(x: &[f64], ln_mass: &[f64], ln_rho: &[f64], cfg: &TrendConfig) -> ScalingVerdict {
    let n = ln_mass.len();
    let start = n - ((n as f64 * cfg.tail_fraction).ceil() as usize).clamp(2.min(n), n);
    let tail = &ln_mass[start..];
    if tail[0].is_finite() && tail.iter().all(|v| (v - tail[0]).abs() < 1e-12) {
        return ScalingVerdict::DivergesToInfinity;
    }
    let y: Vec<f64> = ln_mass.iter().zip(ln_rho).map(|(a, b)| a - b).collect();
    scaling_verdict(trend::classify(x, &y, cfg).class)
}

pub fn local_scaling_with(mu: &SpectralMeasure, x: f64, rho: &GaugeFunction, eps_grid: &[f64], cfg: &TrendConfig) -> Result<ScalingReport> {
    let eps = resolved_grid(mu, eps_grid)?;
    let ln_mass: Vec<f64> = eps.iter().map(|e| mu.ball_mass(x, *e).ln()).collect();
    let ln_rho: Vec<f64> = eps.iter().map(|e| rho.ln_at(*e)).collect();
    let log_ratios: Vec<f64> = ln_mass.iter().zip(&ln_rho).map(|(a, b)| a - b).collect();
    let verdict = ratio_verdict(&trend_x(&eps), &ln_mass, &ln_rho, cfg);
    let resolved = (*eps.last().unwrap(), eps[0]);
    Ok(ScalingReport { point: x, epsilons: eps, log_ratios, verdict, resolved })
}

pub fn local_scaling(mu: &SpectralMeasure, x: f64, rho: &GaugeFunction, eps_grid: &[f64]) -> Result<ScalingReport> {
    local_scaling_with(mu, x, rho, eps_grid, &TrendConfig::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeasureClass {
    Singular,
    Continuous,
    Mixed,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyReport {
    pub class: MeasureClass,
    pub singular_fraction: f64,
    pub continuous_fraction: f64,
    /// statements concern these sampled points only
    pub points: Vec<(f64, f64, ScalingVerdict)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifyConfig {
    pub eta: f64,
    pub n_samples: usize,
    pub trend: TrendConfig,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig { eta: 0.05, n_samples: 64, trend: TrendConfig::default() }
    }
}

/// ln M_mu^eps(x) at each sample point, reused across gauges.
#[derive(Debug, Clone)]
pub struct MassTable {
    pub eps: Vec<f64>,
    /// (x, weight, ln masses)
    pub rows: Vec<(f64, f64, Vec<f64>)>,
}

impl MassTable {
    pub fn new(mu: &SpectralMeasure, points: &[(f64, f64)], eps_grid: &[f64]) -> Result<Self> {
        let eps = resolved_grid(mu, eps_grid)?;
        let rows = points
            .par_iter()
            .map(|(x, w)| (*x, *w, eps.iter().map(|e| mu.ball_mass(*x, *e).ln()).collect()))
            .collect();
        Ok(MassTable { eps, rows })
    }

    pub fn classify(&self, rho: &GaugeFunction, eta: f64, cfg: &TrendConfig) -> ClassifyReport {
        let x = trend_x(&self.eps);
        let lr: Vec<f64> = self.eps.iter().map(|e| rho.ln_at(*e)).collect();
        let mut total = 0.0;
        let (mut sing, mut cont) = (0.0, 0.0);
        let mut points = Vec::with_capacity(self.rows.len());
        for (p, w, lm) in &self.rows {
            let v = ratio_verdict(&x, lm, &lr, cfg);
            total += w;
            match v {
                ScalingVerdict::DivergesToInfinity => sing += w,
                ScalingVerdict::BoundedNonzero | ScalingVerdict::TendsToZero => cont += w,
                ScalingVerdict::Undetermined => {}
            }
            points.push((*p, *w, v));
        }
        let (sf, cf) = if total > 0.0 { (sing / total, cont / total) } else { (0.0, 0.0) };
        let class = if sf > 1.0 - eta {
            MeasureClass::Singular
        } else if cf > 1.0 - eta {
            MeasureClass::Continuous
        } else if sf > eta && cf > eta {
            MeasureClass::Mixed
        } else {
            MeasureClass::Undetermined
        };
        ClassifyReport { class, singular_fraction: sf, continuous_fraction: cf, points }
    }
}

pub fn classify_with(mu: &SpectralMeasure, rho: &GaugeFunction, points: &[(f64, f64)], eps_grid: &[f64], cfg: &ClassifyConfig) -> Result<ClassifyReport> {
    Ok(MassTable::new(mu, points, eps_grid)?.classify(rho, cfg.eta, &cfg.trend))
}

/// Classification on the default mu-proportional sample and eps grid.
pub fn classify(mu: &SpectralMeasure, rho: &GaugeFunction) -> Result<ClassifyReport> {
    let cfg = ClassifyConfig::default();
    classify_with(mu, rho, &mu.sample_points(cfg.n_samples), &default_eps_grid(mu), &cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DimensionConfig {
    pub tol: f64,
    /// slope threshold of the trend test used inside the dimension search
    pub tau: f64,
    pub eta: f64,
    pub n_samples: usize,
}

impl Default for DimensionConfig {
    fn default() -> Self {
        DimensionConfig { tol: 0.005, tau: 0.02, eta: 0.05, n_samples: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureDimension {
    pub upper: DimensionValue,
    pub lower: DimensionValue,
    pub beta: f64,
    pub gamma: f64,
    pub scan: Vec<(f64, MeasureClass)>,
}

fn class_rank(c: MeasureClass) -> Option<u8> {
    match c {
        MeasureClass::Continuous => Some(0),
        MeasureClass::Mixed => Some(1),
        MeasureClass::Singular => Some(2),
        MeasureClass::Undetermined => None,
    }
}

/// (dim+, dim-) by bisection on the classification along the family.
pub fn measure_dimension_with(
    mu: &SpectralMeasure,
    family: &CompleteFamily,
    eps_grid: &[f64],
    cfg: &DimensionConfig,
) -> Result<MeasureDimension> {
    let table = MassTable::new(mu, &mu.sample_points(cfg.n_samples), eps_grid)?;
    let tcfg = TrendConfig { tau: cfg.tau, ..TrendConfig::default() };
    let class_at = |a: f64| -> Result<MeasureClass> { Ok(table.classify(&family.member(a)?, cfg.eta, &tcfg).class) };
    let (lo, hi) = crate::hausdorff_set::probe_range(family, cfg.tol);
    let alphas = crate::logmath::linspace(lo, hi, 17);
    let scan: Vec<(f64, MeasureClass)> = alphas.iter().map(|a| Ok((*a, class_at(*a)?))).collect::<Result<_>>()?;
    let ranked: Vec<(f64, u8)> = scan.iter().filter_map(|(a, c)| class_rank(*c).map(|r| (*a, r))).collect();
    for w in ranked.windows(2) {
        if w[1].1 < w[0].1 {
            return Err(Error::NonMonotoneVerdicts { lo: w[0].0, hi: w[1].0 });
        }
    }
    let is_sing = |c: MeasureClass| c == MeasureClass::Singular;
    let is_cont = |c: MeasureClass| c == MeasureClass::Continuous;
    let top_unbounded = family.interval.hi.is_infinite();
    // beta' = inf of singular indices
    let beta = match scan.iter().position(|(_, c)| is_sing(*c)) {
        None => {
            // nothing singular up to the top of I: the top itself when continuity there is only bounded
            let top = scan.last().unwrap().0;
            let bounded_at_top = table
                .classify(&family.member(top)?, cfg.eta, &tcfg)
                .points
                .iter()
                .filter(|p| p.2 == ScalingVerdict::BoundedNonzero)
                .map(|p| p.1)
                .sum::<f64>()
                > 0.5 * mu.total_mass();
            if bounded_at_top && !top_unbounded {
                family.interval.hi
            } else {
                f64::INFINITY
            }
        }
        Some(0) => f64::NEG_INFINITY,
        Some(i) => bisect_edge(scan[i - 1].0, scan[i].0, cfg.tol, |a| Ok(is_sing(class_at(a)?)))?,
    };
    // gamma' = sup of continuous indices
    let gamma = match scan.iter().rposition(|(_, c)| is_cont(*c)) {
        None => f64::NEG_INFINITY,
        Some(i) if i == scan.len() - 1 => {
            if top_unbounded {
                f64::INFINITY
            } else {
                family.interval.hi
            }
        }
        Some(i) => bisect_edge(scan[i].0, scan[i + 1].0, cfg.tol, |a| Ok(!is_cont(class_at(a)?)))?,
    };
    let upper = if beta == f64::NEG_INFINITY {
        family_dimension_from_alpha(family, f64::NEG_INFINITY)
    } else {
        family_dimension_from_alpha(family, beta)
    };
    let lower = family_dimension_from_alpha(family, gamma);
    Ok(MeasureDimension { upper, lower, beta, gamma, scan })
}

pub fn measure_dimension(mu: &SpectralMeasure, family: &CompleteFamily) -> Result<MeasureDimension> {
    measure_dimension_with(mu, family, &default_eps_grid(mu), &DimensionConfig::default())
}

/// Smallest point where `pred` turns true inside [a, b] (false at a, true at b).
fn bisect_edge(mut a: f64, mut b: f64, tol: f64, pred: impl Fn(f64) -> Result<bool>) -> Result<f64> {
    while b - a > tol {
        let m = 0.5 * (a + b);
        if pred(m)? {
            b = m;
        } else {
            a = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// dim- precedes-or-equals dim+, decided through the gauge order when both are members.
pub fn dimension_order_ok(family: &CompleteFamily, lower: DimensionValue, upper: DimensionValue) -> Result<bool> {
    match (lower, upper) {
        (DimensionValue::Member(a), DimensionValue::Member(b)) => {
            if (a - b).abs() < 1e-12 {
                return Ok(true);
            }
            let o = compare(&family.member(a)?, &family.member(b)?, &crate::gauge::default_s_grid(), &TrendConfig::default())?;
            Ok(matches!(o, Ordering::Precedes | Ordering::Equivalent))
        }
        (l, u) => Ok(l.rank() <= u.rank()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(a: f64) -> GaugeFunction {
        GaugeFunction::power(a).unwrap()
    }

    #[test]
    fn ball_masses() {
        assert_eq!(SpectralMeasure::dirac(0.0).ball_mass(0.0, 1e-9), 1.0);
        let leb = SpectralMeasure::lebesgue(0.0, 1.0).unwrap();
        assert!((leb.ball_mass(0.5, 0.1) - 0.2).abs() < 1e-15);
        let mix = SpectralMeasure::dirac(0.0).combine(0.5, &leb, 0.5).unwrap();
        assert!((mix.ball_mass(0.0, 0.1) - 0.55).abs() < 1e-15);
        assert!(mix.is_probability());
    }

    #[test]
    fn semicircle_mass_and_transform() {
        let s = SpectralMeasure::semicircle();
        assert!((s.total_mass() - 1.0).abs() < 1e-14);
        let z = Complex64::new(0.3, 0.7);
        // compare with a midpoint rule
        let n = 200_000;
        let h = 4.0 / n as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            let y = -2.0 + (i as f64 + 0.5) * h;
            acc += Complex64::new(s.density_at(y) * h, 0.0) / (Complex64::new(y, 0.0) - z);
        }
        assert!((s.stieltjes(z, 0) - acc).norm() < 1e-6);
    }

    #[test]
    fn table_density_transform() {
        let m = SpectralMeasure::new(MeasureSpec {
            density: vec![DensityPiece { interval: [0.0, 2.0], kind: DensityKind::Table { values: vec![0.0, 1.0, 0.5] } }],
            ..Default::default()
        })
        .unwrap();
        assert!((m.total_mass() - 1.25).abs() < 1e-15);
        let z = Complex64::new(0.7, 0.2);
        let n = 400_000;
        let h = 2.0 / n as f64;
        let (mut a0, mut a1) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        for i in 0..n {
            let y = (i as f64 + 0.5) * h;
            let inv = Complex64::new(1.0, 0.0) / (Complex64::new(y, 0.0) - z);
            a0 += inv * (m.density_at(y) * h);
            a1 += inv * inv * (m.density_at(y) * h);
        }
        assert!((m.stieltjes(z, 0) - a0).norm() < 1e-6);
        assert!((m.stieltjes(z, 1) - a1).norm() < 1e-5);
    }

    #[test]
    fn cantor_component_matches_explicit_atoms() {
        let depth = 10;
        let c = SpectralMeasure::cantor(1.0 / 3.0, depth).unwrap();
        let mut atoms = Vec::new();
        let k = 1usize << depth;
        for i in 0..k {
            atoms.push((c.cantor.as_ref().unwrap().quantile((i as f64 + 0.5) / k as f64), 1.0 / k as f64));
        }
        let e = SpectralMeasure::atomic(&atoms).unwrap();
        for (x, eps) in [(0.0, 0.1), (0.5, 0.3), (0.2222, 0.01), (0.9, 1e-3)] {
            assert!((c.ball_mass(x, eps) - e.ball_mass(x, eps)).abs() < 1e-12);
        }
        for z in [Complex64::new(0.5, 0.01), Complex64::new(0.1, 1e-4), Complex64::new(3.0, 0.0)] {
            let (a, b) = (c.stieltjes(z, 0), e.stieltjes(z, 0));
            assert!((a - b).norm() < 1e-10 * b.norm(), "{a} {b}");
            let (a, b) = (c.stieltjes(z, 1), e.stieltjes(z, 1));
            assert!((a - b).norm() < 1e-9 * b.norm(), "{a} {b}");
        }
    }

    #[test]
    fn local_scaling_examples() {
        let g = crate::logmath::geomspace(0.1, 1e-8, 20);
        let r = local_scaling(&SpectralMeasure::dirac(0.0), 0.0, &p(1.0), &g).unwrap();
        assert_eq!(r.verdict, ScalingVerdict::DivergesToInfinity);
        let r = local_scaling(&SpectralMeasure::lebesgue(0.0, 1.0).unwrap(), 0.5, &p(1.0), &g).unwrap();
        assert_eq!(r.verdict, ScalingVerdict::BoundedNonzero);
        assert!((r.log_ratios[5] - 2f64.ln()).abs() < 1e-9);
        let c = SpectralMeasure::cantor(1.0 / 3.0, 25).unwrap();
        let g = crate::logmath::geomspace(1.0, 3f64.powi(-25), 40);
        let r = local_scaling(&c, 0.0, &p(0.63), &g).unwrap();
        assert_eq!(r.verdict, ScalingVerdict::BoundedNonzero);
    }

    #[test]
    fn classification() {
        let atoms: Vec<(f64, f64)> = (0..100).map(|i| (i as f64 * 0.037 - 1.3, 0.01)).collect();
        let pp = SpectralMeasure::atomic(&atoms).unwrap();
        assert_eq!(classify(&pp, &p(1.0)).unwrap().class, MeasureClass::Singular);
        let leb = SpectralMeasure::lebesgue(0.0, 1.0).unwrap();
        assert_eq!(classify(&leb, &p(1.0)).unwrap().class, MeasureClass::Continuous);
        let mix = SpectralMeasure::dirac(0.0).combine(0.5, &leb, 0.5).unwrap();
        assert_eq!(classify(&mix, &p(1.0)).unwrap().class, MeasureClass::Mixed);
    }

    #[test]
    fn dimensions() {
        let f = CompleteFamily::power();
        let d = measure_dimension(&SpectralMeasure::dirac(0.0), &f).unwrap();
        assert_eq!((d.upper, d.lower), (DimensionValue::Zero, DimensionValue::Zero));
        let d = measure_dimension(&SpectralMeasure::lebesgue(0.0, 1.0).unwrap(), &f).unwrap();
        assert!((d.upper.alpha().unwrap() - 1.0).abs() < 0.02, "{d:?}");
        assert!((d.lower.alpha().unwrap() - 1.0).abs() < 0.02, "{d:?}");
        let c = SpectralMeasure::cantor(1.0 / 3.0, 25).unwrap();
        let d = measure_dimension(&c, &f).unwrap();
        let t = 2f64.ln() / 3f64.ln();
        assert!((d.upper.alpha().unwrap() - t).abs() < 0.04, "{d:?}");
        assert!((d.lower.alpha().unwrap() - t).abs() < 0.04, "{d:?}");
        assert!(dimension_order_ok(&f, d.lower, d.upper).unwrap());
    }
}
