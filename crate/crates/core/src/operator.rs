//! Hopping kernels and finite-volume assembly of
//! `H(x) = tan π(Tᵐx)₁ δₘₙ + ε S_φ`, `S_φ(m, n) = φ̂(m − n)`.

use std::collections::BTreeMap;

use num_complex::Complex;
use serde::Serialize;

use crate::dynamics::{iterate_closed, Frequency, Guard, Orbit, TorusPoint};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::scalar::{dist_to_int, Real, C};

/// Inclusive integer interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Window {
    pub lo: i64,
    pub hi: i64,
}

impl Window {
    pub fn new(lo: i64, hi: i64) -> Result<Self> {
        if lo > hi {
            return Err(Error::InvalidInput(format!("empty window [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    /// `[0, n]`, which holds `n + 1` sites.
    pub fn upto(n: usize) -> Self {
        Self { lo: 0, hi: n as i64 }
    }

    /// Window of `len` sites starting at `lo`.
    pub fn with_len(lo: i64, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidInput("window of zero sites".into()));
        }
        Ok(Self {
            lo,
            hi: lo + len as i64 - 1,
        })
    }

    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, m: i64) -> bool {
        self.lo <= m && m <= self.hi
    }

    pub fn contains_window(&self, other: &Window) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn sites(&self) -> std::ops::RangeInclusive<i64> {
        self.lo..=self.hi
    }

    pub fn shift(&self, by: i64) -> Self {
        Self {
            lo: self.lo + by,
            hi: self.hi + by,
        }
    }

    /// Local index of site `m`.
    pub fn index(&self, m: i64) -> usize {
        debug_assert!(self.contains(m));
        (m - self.lo) as usize
    }
}

impl std::fmt::Display for Window {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// Toeplitz coefficients `φ̂(n)`, `|n| ≤ band`, with decay rate `ρ` and
/// coupling `ε`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HoppingKernel<T> {
    /// `coeffs[band + n] = φ̂(n)`.
    coeffs: Vec<C<T>>,
    band: usize,
    pub rho: T,
    pub eps: T,
}

/// Built-in coefficient families.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelProfile<T> {
    /// `φ̂(±1) = θ`, `φ̂(0) = θ₀`, zero elsewhere.
    SingleCosine { theta: T, theta0: T },
    /// `φ̂(n) = amplitude · e^{−rate |n|}`.
    Geometric { rate: T, amplitude: T },
    /// Explicit `(n, φ̂(n))` pairs; offsets not listed are zero.
    Table(Vec<(i64, C<T>)>),
}

impl<T: Real> KernelProfile<T> {
    /// Geometric family at twice the decay rate with amplitude 1/2.
    pub fn default_geometric(rho: T) -> Self {
        Self::Geometric {
            rate: T::two() * rho,
            amplitude: T::half(),
        }
    }
}

/// Band beyond which `amplitude · e^{−rate n}` is below `1e-18` of the amplitude.
pub fn negligible_band<T: Real>(rate: T) -> usize {
    let cut = T::lit(18.0) * T::LN_10() / rate;
    cut.ceil().to_usize().unwrap_or(usize::MAX).max(1)
}

impl<T: Real> HoppingKernel<T> {
    /// Validates decay and hermitian symmetry.
    pub fn from_map(rho: T, entries: &BTreeMap<i64, C<T>>) -> Result<Self> {
        if !(rho > T::zero()) {
            return Err(Error::InvalidInput("rho must be positive".into()));
        }
        let band = entries.keys().map(|n| n.unsigned_abs() as usize).max().unwrap_or(0);
        let mut coeffs = vec![C::new(T::zero(), T::zero()); 2 * band + 1];
        for (&n, &v) in entries {
            coeffs[(band as i64 + n) as usize] = v;
        }
        let k = Self {
            coeffs,
            band,
            rho,
            eps: T::zero(),
        };
        k.validate()?;
        Ok(k)
    }

    pub fn with_coupling(mut self, eps: T) -> Result<Self> {
        if !(eps >= T::zero()) {
            return Err(Error::InvalidInput("coupling eps must be nonnegative".into()));
        }
        self.eps = eps;
        Ok(self)
    }

    pub fn band(&self) -> usize {
        self.band
    }

    /// `φ̂(n)`, zero outside the band.
    pub fn coeff(&self, n: i64) -> C<T> {
        if n.unsigned_abs() as usize > self.band {
            C::new(T::zero(), T::zero())
        } else {
            self.coeffs[(self.band as i64 + n) as usize]
        }
    }

    /// `ε φ̂(n)`.
    pub fn hopping(&self, n: i64) -> C<T> {
        self.coeff(n).scale(self.eps)
    }

    /// `ε φ̂(0)`, real by validation.
    pub fn diagonal_shift(&self) -> T {
        self.eps * self.coeff(0).re
    }

    pub fn entries(&self) -> impl Iterator<Item = (i64, C<T>)> + '_ {
        let band = self.band as i64;
        self.coeffs.iter().enumerate().map(move |(i, &v)| (i as i64 - band, v))
    }

    /// Checks `|φ̂(n)| < e^{−ρ|n|}` and `φ̂(−n) = conj φ̂(n)` (so `φ̂(0)` is real).
    pub fn validate(&self) -> Result<()> {
        for (n, v) in self.entries() {
            let bound = (-self.rho * T::from_i64_exact(n.abs())).exp();
            if !(v.norm() < bound) {
                return Err(Error::DecayViolation {
                    offset: n,
                    modulus: v.norm().as_f64(),
                    bound: bound.as_f64(),
                });
            }
        }
        for n in 0..=self.band as i64 {
            if self.coeff(-n) != self.coeff(n).conj() {
                return Err(Error::SymmetryViolation { offset: n });
            }
        }
        Ok(())
    }
}

/// Builds a kernel from a named family, truncated at `|n| ≤ band`.
pub fn kernel_from_profile<T: Real>(
    rho: T,
    band: usize,
    profile: &KernelProfile<T>,
) -> Result<HoppingKernel<T>> {
    let mut map = BTreeMap::new();
    let zero = T::zero();
    match profile {
        KernelProfile::SingleCosine { theta, theta0 } => {
            map.insert(0, Complex::new(*theta0, zero));
            if band >= 1 {
                map.insert(1, Complex::new(*theta, zero));
                map.insert(-1, Complex::new(*theta, zero));
            }
        }
        KernelProfile::Geometric { rate, amplitude } => {
            if !(*rate > rho) {
                return Err(Error::InvalidInput(
                    "geometric kernel rate must exceed rho".into(),
                ));
            }
            for n in -(band as i64)..=band as i64 {
                let v = *amplitude * (-*rate * T::from_i64_exact(n.abs())).exp();
                map.insert(n, Complex::new(v, zero));
            }
        }
        KernelProfile::Table(rows) => {
            for &(n, v) in rows {
                if n.unsigned_abs() as usize <= band {
                    map.insert(n, v);
                }
            }
        }
    }
    HoppingKernel::from_map(rho, &map)
}

/// Parses a kernel table (`n re im` per line, `#` comments) and validates it.
/// Every failure carries the 1-based line number it refers to.
pub fn parse_kernel_table<T: Real>(text: &str, rho: T) -> Result<HoppingKernel<T>> {
    let mut map = BTreeMap::new();
    let mut lines_of = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::KernelTable {
                line,
                message: format!("expected 3 fields `n re im`, found {}", fields.len()),
            });
        }
        let n: i64 = fields[0].parse().map_err(|_| Error::KernelTable {
            line,
            message: format!("bad offset `{}`", fields[0]),
        })?;
        let parse = |s: &str| -> Result<T> {
            let v: f64 = s.parse().map_err(|_| Error::KernelTable {
                line,
                message: format!("bad number `{s}`"),
            })?;
            Ok(T::lit(v))
        };
        let v = Complex::new(parse(fields[1])?, parse(fields[2])?);
        if map.insert(n, v).is_some() {
            return Err(Error::KernelTable {
                line,
                message: format!("duplicate offset {n}"),
            });
        }
        lines_of.insert(n, line);
    }
    HoppingKernel::from_map(rho, &map).map_err(|e| {
        let offending = match &e {
            Error::DecayViolation { offset, .. } => Some(*offset),
            Error::SymmetryViolation { offset } => {
                // point at whichever partner is present
                lines_of
                    .get(offset)
                    .map(|_| *offset)
                    .or(Some(-*offset))
            }
            _ => None,
        };
        match offending.and_then(|n| lines_of.get(&n).or(lines_of.get(&-n))) {
            Some(&line) => Error::KernelTable {
                line,
                message: e.to_string(),
            },
            None => e,
        }
    })
}

/// `tan π(Tᵐx)₁`, refusing sites within the guard of the pole.
pub fn potential<T: Real>(m: i64, x: TorusPoint<T>, freq: &Frequency<T>, guard: Guard<T>) -> Result<T> {
    let y = iterate_closed(x, freq, m).x1;
    guarded_tan(m, y, guard)
}

fn guarded_tan<T: Real>(m: i64, y: T, guard: Guard<T>) -> Result<T> {
    let d = dist_to_int(y - T::half());
    if d < guard.tau || d == T::zero() {
        return Err(Error::SingularityGuard {
            site: m,
            distance: d.as_f64(),
            tolerance: guard.tau.as_f64(),
        });
    }
    Ok((T::PI() * y).tan())
}

/// First coordinates `(Tᵐx)₁` for every site of the window.
pub fn orbit_phases<T: Real>(window: Window, x: TorusPoint<T>, freq: &Frequency<T>) -> Vec<T> {
    Orbit::starting_at(x, *freq, window.lo)
        .take(window.len())
        .map(|p| p.x1)
        .collect()
}

/// Dense `H` restricted to a window.
#[derive(Clone, Debug)]
pub struct LatticeOperator<T: Real> {
    pub window: Window,
    pub entries: Mat<T>,
    pub x: TorusPoint<T>,
    pub freq: Frequency<T>,
    pub kernel: HoppingKernel<T>,
}

impl<T: Real> LatticeOperator<T> {
    pub fn dim(&self) -> usize {
        self.window.len()
    }

    /// Real diagonal potential values.
    pub fn potentials(&self) -> Vec<T> {
        let shift = self.kernel.diagonal_shift();
        (0..self.dim()).map(|i| self.entries[(i, i)].re - shift).collect()
    }

    /// `H − E` on the window.
    pub fn shifted(&self, energy: T) -> Mat<T> {
        let mut m = self.entries.clone();
        for i in 0..self.dim() {
            m[(i, i)].re = m[(i, i)].re - energy;
        }
        m
    }
}

/// Assembles `H(x)` on a window.
pub fn assemble<T: Real>(
    window: Window,
    x: TorusPoint<T>,
    freq: &Frequency<T>,
    kernel: &HoppingKernel<T>,
    guard: Guard<T>,
) -> Result<LatticeOperator<T>> {
    let phases = orbit_phases(window, x, freq);
    let diag = phases
        .iter()
        .zip(window.sites())
        .map(|(&y, m)| guarded_tan(m, y, guard))
        .collect::<Result<Vec<T>>>()?;
    let n = window.len();
    let entries = Mat::from_fn(n, n, |i, j| {
        let hop = kernel.hopping(i as i64 - j as i64);
        if i == j {
            Complex::new(diag[i] + hop.re, hop.im)
        } else {
            hop
        }
    });
    Ok(LatticeOperator {
        window,
        entries,
        x,
        freq: *freq,
        kernel: kernel.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::step;

    fn geometric(eps: f64) -> HoppingKernel<f64> {
        kernel_from_profile(1.0, 20, &KernelProfile::default_geometric(1.0))
            .unwrap()
            .with_coupling(eps)
            .unwrap()
    }

    #[test]
    fn window_basics() {
        assert!(Window::new(3, 2).is_err());
        let w = Window::new(-2, 2).unwrap();
        assert_eq!(w.len(), 5);
        assert_eq!(w.index(0), 2);
        assert_eq!(Window::upto(4).len(), 5);
        assert_eq!(Window::with_len(3, 4).unwrap(), Window::new(3, 6).unwrap());
    }

    #[test]
    fn potential_examples() {
        let f = Frequency::new(0.0f64);
        let g = Guard::default();
        assert_eq!(potential(0, TorusPoint::new(0.0, 0.0), &f, g).unwrap(), 0.0);
        let v = potential(0, TorusPoint::new(0.25, 0.0), &f, g).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
        assert!(matches!(
            potential(0, TorusPoint::new(0.5, 0.0), &f, g),
            Err(Error::SingularityGuard { site: 0, .. })
        ));
        // the pole is rejected even by a relaxed guard
        assert!(potential(0, TorusPoint::new(0.5, 0.0), &f, Guard::relaxed()).is_err());
    }

    #[test]
    fn kernel_profile_examples() {
        let k = kernel_from_profile(1.0, 20, &KernelProfile::Geometric { rate: 2.0, amplitude: 0.5 });
        assert!(k.is_ok());
        let table = KernelProfile::Table(vec![(1, C::new(1.0, 0.0)), (-1, C::new(1.0, 0.0))]);
        assert!(matches!(
            kernel_from_profile(1.0, 5, &table),
            Err(Error::DecayViolation { offset: -1, .. })
        ));
        let table = KernelProfile::Table(vec![(1, C::new(0.0, 0.1)), (-1, C::new(0.0, 0.1))]);
        assert!(matches!(
            kernel_from_profile(1.0, 5, &table),
            Err(Error::SymmetryViolation { offset: 1 })
        ));
        // complex φ̂(0) is a symmetry violation at offset 0
        let table = KernelProfile::Table(vec![(0, C::new(0.1, 0.1))]);
        assert!(matches!(
            kernel_from_profile(1.0, 5, &table),
            Err(Error::SymmetryViolation { offset: 0 })
        ));
        let cos = kernel_from_profile(1.0, 1, &KernelProfile::SingleCosine { theta: 0.3, theta0: 0.1 }).unwrap();
        assert_eq!(cos.coeff(1), C::new(0.3, 0.0));
        assert_eq!(cos.coeff(2), C::new(0.0, 0.0));
    }

    #[test]
    fn unit_amplitude_geometric_fails_strict_decay_at_zero() {
        let k = kernel_from_profile(1.0, 3, &KernelProfile::Geometric { rate: 2.0, amplitude: 1.0 });
        assert!(matches!(k, Err(Error::DecayViolation { offset: 0, .. })));
    }

    #[test]
    fn table_parsing_reports_lines() {
        let text = "# offset re im\n0 0.5 0\n1 0.1 0.05\n-1 0.1 -0.05\n";
        let k = parse_kernel_table(text, 1.0).unwrap();
        assert_eq!(k.coeff(-1), C::new(0.1, -0.05));

        let bad = "0 0.5 0\n1 0.9 0\n-1 0.9 0\n";
        match parse_kernel_table::<f64>(bad, 1.0) {
            Err(Error::KernelTable { line, .. }) => assert!(line == 2 || line == 3),
            other => panic!("unexpected {other:?}"),
        }
        let asym = "0 0.5 0\n\n1 0.1 0\n";
        assert!(matches!(
            parse_kernel_table::<f64>(asym, 1.0),
            Err(Error::KernelTable { line: 3, .. })
        ));
        assert!(matches!(
            parse_kernel_table::<f64>("0 0.5\n", 1.0),
            Err(Error::KernelTable { line: 1, .. })
        ));
        assert!(matches!(
            parse_kernel_table::<f64>("0 0.5 0\n0 0.1 0\n", 1.0),
            Err(Error::KernelTable { line: 2, .. })
        ));
    }

    #[test]
    fn assemble_examples() {
        let f = Frequency::golden();
        let x = TorusPoint::new(0.1234, 0.5678);
        let w = Window::new(0, 15).unwrap();
        let op = assemble(w, x, &f, &geometric(0.0), Guard::default()).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                if i != j {
                    assert_eq!(op.entries[(i, j)], C::new(0.0, 0.0));
                }
            }
            let v = potential(i as i64, x, &f, Guard::default()).unwrap();
            assert!((op.entries[(i, i)].re - v).abs() <= 1e-12 * (1.0 + v.abs()));
        }

        let k = kernel_from_profile(1.0, 0, &KernelProfile::Table(vec![(0, C::new(1.0 - 1e-15, 0.0))]))
            .unwrap()
            .with_coupling(0.5)
            .unwrap();
        let op = assemble(Window::new(0, 0).unwrap(), TorusPoint::new(0.25, 0.0), &f, &k, Guard::default()).unwrap();
        assert!((op.entries[(0, 0)].re - 1.5).abs() < 1e-14);
    }

    #[test]
    fn assembled_operator_is_hermitian() {
        let table = KernelProfile::Table(vec![
            (0, C::new(0.3, 0.0)),
            (1, C::new(0.1, 0.2)),
            (-1, C::new(0.1, -0.2)),
            (3, C::new(-0.01, 0.02)),
            (-3, C::new(-0.01, -0.02)),
        ]);
        let k = kernel_from_profile(1.0, 5, &table).unwrap().with_coupling(0.7).unwrap();
        let op = assemble(Window::new(0, 63).unwrap(), TorusPoint::new(0.3, 0.4), &Frequency::golden(), &k, Guard::default())
            .unwrap();
        assert_eq!(op.entries.hermitian_residual(), 0.0);
    }

    #[test]
    fn shift_covariance_at_operator_level() {
        let f = Frequency::golden();
        let k = geometric(1e-2);
        let x = TorusPoint::new(0.71, 0.13);
        let a = assemble(Window::new(1, 40).unwrap(), x, &f, &k, Guard::default()).unwrap();
        let b = assemble(Window::new(0, 39).unwrap(), step(x, &f), &f, &k, Guard::default()).unwrap();
        assert!(a.entries.sub(&b.entries).max_abs() < 1e-12);
    }
}
