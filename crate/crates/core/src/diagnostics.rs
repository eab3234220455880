//! Eigenpairs of the truncated operator and localization observables.

use serde::Serialize;

use crate::dynamics::{Frequency, FrequencyClass, Guard, TorusPoint};
use crate::error::{Error, Result};
use crate::green::{fit_decay_beyond, DecayFit, DEFAULT_CUTOFF_FRACTION};
use crate::linalg::{hermitian_eigen, Lu, Mat};
use crate::operator::{assemble, HoppingKernel, LatticeOperator, Window};
use crate::sampling::ordered_map;
use crate::scalar::{Real, C};

/// Largest diagonal magnitude accepted by [`spectrum`].
pub const DIAGONAL_LIMIT: f64 = 1e10;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EigenPair<T> {
    pub eigenvalue: T,
    #[serde(skip)]
    pub vector: Vec<C<T>>,
    /// Site (global index) of the largest `|ξ_j|`.
    pub center: i64,
}

/// `argmax |ξ_j|`, ties broken toward the midpoint of the window.
pub fn center_of<T: Real>(v: &[C<T>]) -> usize {
    let n = v.len();
    let mut best = 0usize;
    let mut best_val = T::neg_infinity();
    for (j, z) in v.iter().enumerate() {
        let a = z.norm_sqr();
        let closer = (2 * j).abs_diff(n.saturating_sub(1)) < (2 * best).abs_diff(n.saturating_sub(1));
        if a > best_val || (a == best_val && closer) {
            best = j;
            best_val = a;
        }
    }
    best
}

/// `max |H_mm|` check; rejects potentials beyond [`DIAGONAL_LIMIT`].
pub fn check_diagonal<T: Real>(op: &LatticeOperator<T>) -> Result<()> {
    for (i, m) in op.window.sites().enumerate() {
        let v = op.entries[(i, i)].re.abs();
        if !(v <= T::lit(DIAGONAL_LIMIT)) {
            return Err(Error::PotentialOverflow {
                site: m,
                value: v.as_f64(),
                limit: DIAGONAL_LIMIT,
            });
        }
    }
    Ok(())
}

/// Full eigen-decomposition, sorted by eigenvalue.
///
/// Each Householder eigenvector is polished by two steps of inverse
/// iteration started from the coordinate vector at its center, which resolves
/// the exponentially small tails far below the rounding level of the dense
/// solver. The polished vector replaces the original only if the two agree.
pub fn spectrum<T: Real>(op: &LatticeOperator<T>) -> Result<Vec<EigenPair<T>>> {
    check_diagonal(op)?;
    let h = &op.entries;
    let (vals, vecs) = hermitian_eigen(h)?;
    let n = vals.len();
    let hnorm = vals.iter().fold(T::zero(), |a, v| a.max(v.abs()));
    let idx: Vec<usize> = (0..n).collect();
    let pairs = ordered_map(&idx, |_, &k| {
        let lambda = vals[k];
        let raw = vecs.column(k);
        let vector = polish(h, lambda, &raw, hnorm).unwrap_or(raw);
        let center = op.window.lo + center_of(&vector) as i64;
        EigenPair {
            eigenvalue: lambda,
            vector,
            center,
        }
    });
    Ok(pairs)
}

fn polish<T: Real>(h: &Mat<T>, lambda: T, raw: &[C<T>], hnorm: T) -> Option<Vec<C<T>>> {
    let n = raw.len();
    let scale = hnorm.max(T::one());
    let mut shifted = h.clone();
    let lu = {
        let mut attempt = None;
        for bump in [T::zero(), T::lit(1e-14), T::lit(1e-12)] {
            let mu = lambda + bump * scale;
            for i in 0..n {
                shifted[(i, i)] = h[(i, i)] - C::new(mu, T::zero());
            }
            if let Ok(lu) = Lu::factor(&shifted) {
                attempt = Some(lu);
                break;
            }
        }
        attempt?
    };
    let mut y = vec![C::new(T::zero(), T::zero()); n];
    y[center_of(raw)] = C::new(T::one(), T::zero());
    for _ in 0..2 {
        lu.solve_in_place(&mut y);
        let norm = y.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
        if !norm.is_finite() || norm == T::zero() {
            return None;
        }
        y.iter_mut().for_each(|z| *z = z.unscale(norm));
    }
    // align the phase with the raw vector and require agreement
    let overlap = raw.iter().zip(&y).fold(C::new(T::zero(), T::zero()), |acc, (a, b)| acc + a.conj() * b);
    let mag = overlap.norm();
    if !(mag >= T::one() - T::lit(1e-10)) {
        return None;
    }
    let phase = overlap.conj().unscale(mag);
    y.iter_mut().for_each(|z| *z = *z * phase);
    let hy = h.mul_vec(&y);
    let res = hy
        .iter()
        .zip(&y)
        .map(|(a, b)| (*a - b.scale(lambda)).norm_sqr())
        .sum::<T>()
        .sqrt();
    if res <= T::lit(1e-8) * scale {
        Some(y)
    } else {
        None
    }
}

/// `‖Hξ − λξ‖₂`.
pub fn eigen_residual<T: Real>(h: &Mat<T>, pair: &EigenPair<T>) -> T {
    h.mul_vec(&pair.vector)
        .iter()
        .zip(&pair.vector)
        .map(|(a, b)| (*a - b.scale(pair.eigenvalue)).norm_sqr())
        .sum::<T>()
        .sqrt()
}

/// Tail rate of `|ξ_j|` in `|j − center|` beyond a tenth of the window.
///
/// The profile at distance `d` is the larger of the two sides. Compactly
/// supported vectors give `+∞`; negative slopes are reported as 0.
pub fn eigenvector_decay<T: Real>(v: &[C<T>], center: usize) -> Result<DecayFit<T>> {
    let n = v.len();
    let reach = center.max(n - 1 - center);
    let profile: Vec<T> = (0..=reach)
        .map(|d| {
            let left = center.checked_sub(d).map_or(T::zero(), |j| v[j].norm());
            let right = v.get(center + d).map_or(T::zero(), |z| z.norm());
            left.max(right)
        })
        .collect();
    let cutoff = T::lit(DEFAULT_CUTOFF_FRACTION) * T::from_len(n.saturating_sub(1));
    let mut fit = fit_decay_beyond(&profile, cutoff)?;
    fit.rate = fit.rate.max(T::zero());
    Ok(fit)
}

/// `Σ|ξ_j|⁴`.
pub fn ipr<T: Real>(v: &[C<T>]) -> T {
    v.iter().map(|z| z.norm_sqr().powi(2)).sum()
}

/// `min_λ |E − λ|`.
pub fn distance_to_spectrum<T: Real>(energy: T, eigenvalues: &[T]) -> T {
    eigenvalues.iter().fold(T::infinity(), |d, &l| d.min((energy - l).abs()))
}

pub fn spectral_distance<T: Real>(energy: T, op: &LatticeOperator<T>) -> Result<T> {
    check_diagonal(op)?;
    let (vals, _) = hermitian_eigen(&op.entries)?;
    Ok(distance_to_spectrum(energy, &vals))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EigenSummary {
    pub index: usize,
    pub eigenvalue: f64,
    pub center: i64,
    /// Tail rate; `NaN` when the window is too small to fit.
    pub rate: f64,
    pub fit_residual: f64,
    pub ipr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Quantiles {
    pub q10: f64,
    pub q50: f64,
    pub q90: f64,
}

impl Quantiles {
    /// Nearest-rank quantiles ignoring NaN.
    pub fn of(values: &[f64]) -> Self {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
        v.sort_by(f64::total_cmp);
        let pick = |q: f64| {
            if v.is_empty() {
                f64::NAN
            } else {
                v[((q * (v.len() - 1) as f64).round() as usize).min(v.len() - 1)]
            }
        };
        Self {
            q10: pick(0.1),
            q50: pick(0.5),
            q90: pick(0.9),
        }
    }
}

/// Median with the midpoint convention for even counts, ignoring NaN.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        let (a, b) = (v[k / 2 - 1], v[k / 2]);
        if a == b {
            a
        } else {
            0.5 * (a + b)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalizationReport {
    pub window: Window,
    pub pairs: Vec<EigenSummary>,
    pub rate: Quantiles,
    pub ipr: Quantiles,
    /// `1/rate` quantiles (in reverse order of the rates).
    pub localization_length: Quantiles,
}

pub fn localization_report<T: Real>(window: Window, pairs: &[EigenPair<T>]) -> LocalizationReport {
    let rows: Vec<EigenSummary> = pairs
        .iter()
        .enumerate()
        .map(|(index, p)| {
            let fit = eigenvector_decay(&p.vector, window.index(p.center)).ok();
            EigenSummary {
                index,
                eigenvalue: p.eigenvalue.as_f64(),
                center: p.center,
                rate: fit.map_or(f64::NAN, |f| f.rate.as_f64()),
                fit_residual: fit.map_or(f64::NAN, |f| f.residual.as_f64()),
                ipr: ipr(&p.vector).as_f64(),
            }
        })
        .collect();
    let rates: Vec<f64> = rows.iter().map(|r| r.rate).collect();
    let iprs: Vec<f64> = rows.iter().map(|r| r.ipr).collect();
    let lengths: Vec<f64> = rates.iter().map(|r| 1.0 / r).collect();
    LocalizationReport {
        window,
        rate: Quantiles::of(&rates),
        ipr: Quantiles::of(&iprs),
        localization_length: Quantiles::of(&lengths),
        pairs: rows,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrequencyRow {
    pub omega: f64,
    pub class: FrequencyClass,
    pub samples: usize,
    /// Starting points rejected by the guard or the diagonal limit.
    pub rejected: usize,
    pub median_rate: f64,
    pub median_ipr: f64,
    pub rate: Quantiles,
    pub ipr: Quantiles,
}

/// Localization statistics per frequency over shared starting points.
pub fn frequency_comparison<T: Real>(
    freqs: &[Frequency<T>],
    starts: &[TorusPoint<T>],
    window: Window,
    kernel: &HoppingKernel<T>,
    guard: Guard<T>,
) -> Vec<FrequencyRow> {
    freqs
        .iter()
        .map(|freq| {
            let reports: Vec<Option<LocalizationReport>> = ordered_map(starts, |_, &x| {
                let op = assemble(window, x, freq, kernel, guard).ok()?;
                let pairs = spectrum(&op).ok()?;
                Some(localization_report(window, &pairs))
            });
            let ok: Vec<&LocalizationReport> = reports.iter().flatten().collect();
            let rates: Vec<f64> = ok.iter().flat_map(|r| r.pairs.iter().map(|p| p.rate)).collect();
            let iprs: Vec<f64> = ok.iter().flat_map(|r| r.pairs.iter().map(|p| p.ipr)).collect();
            FrequencyRow {
                omega: freq.omega.as_f64(),
                class: freq.class,
                samples: ok.len(),
                rejected: starts.len() - ok.len(),
                median_rate: median(&rates),
                median_ipr: median(&iprs),
                rate: Quantiles::of(&rates),
                ipr: Quantiles::of(&iprs),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::green::{factorize, green_factorized};
    use crate::operator::{kernel_from_profile, KernelProfile};

    fn kernel(eps: f64) -> HoppingKernel<f64> {
        kernel_from_profile(1.0, 21, &KernelProfile::default_geometric(1.0))
            .unwrap()
            .with_coupling(eps)
            .unwrap()
    }

    fn op(n: usize, eps: f64, x: TorusPoint<f64>) -> LatticeOperator<f64> {
        assemble(Window::upto(n - 1), x, &Frequency::golden(), &kernel(eps), Guard::default()).unwrap()
    }

    #[test]
    fn decoupled_spectrum_is_the_potential() {
        let o = op(40, 0.0, TorusPoint::new(0.31, 0.47));
        let pairs = spectrum(&o).unwrap();
        let mut pot = o.potentials();
        pot.sort_by(f64::total_cmp);
        for (p, v) in pairs.iter().zip(&pot) {
            assert!((p.eigenvalue - v).abs() <= 1e-12 * (1.0 + v.abs()));
            assert!((ipr(&p.vector) - 1.0).abs() < 1e-12);
            assert_eq!(eigenvector_decay(&p.vector, o.window.index(p.center)).unwrap().rate, f64::INFINITY);
        }
    }

    #[test]
    fn residuals_trace_and_orthonormality() {
        let o = op(128, 0.05, TorusPoint::new(0.123, 0.456));
        let pairs = spectrum(&o).unwrap();
        assert_eq!(pairs.len(), 128);
        let hnorm = pairs.iter().fold(0.0f64, |a, p| a.max(p.eigenvalue.abs()));
        for p in &pairs {
            assert!(eigen_residual(&o.entries, p) <= 1e-8 * hnorm);
            let n2: f64 = p.vector.iter().map(|z| z.norm_sqr()).sum();
            assert!((n2 - 1.0).abs() < 1e-12);
        }
        let tr: f64 = (0..128).map(|i| o.entries[(i, i)].re).sum();
        let sum: f64 = pairs.iter().map(|p| p.eigenvalue).sum();
        assert!((tr - sum).abs() <= 1e-8 * tr.abs().max(1.0));
        for i in (0..128).step_by(17) {
            for j in (0..128).step_by(13) {
                let dot = pairs[i]
                    .vector
                    .iter()
                    .zip(&pairs[j].vector)
                    .fold(C::new(0.0, 0.0), |a, (x, y)| a + x.conj() * y);
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((dot - C::new(target, 0.0)).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn tiny_coupling_is_continuous() {
        let o = op(100, 1e-8, TorusPoint::new(0.777, 0.222));
        let pairs = spectrum(&o).unwrap();
        let mut pot = o.potentials();
        pot.sort_by(f64::total_cmp);
        for (p, v) in pairs.iter().zip(&pot) {
            assert!((p.eigenvalue - v).abs() < 1e-6);
            assert!(ipr(&p.vector) >= 0.99);
        }
    }

    #[test]
    fn exponential_vector_rate() {
        let v: Vec<C<f64>> = (0..201).map(|j| C::new((-0.2 * (j as f64 - 80.0).abs()).exp(), 0.0)).collect();
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let v: Vec<C<f64>> = v.iter().map(|z| z / norm).collect();
        assert_eq!(center_of(&v), 80);
        let fit = eigenvector_decay(&v, 80).unwrap();
        assert!((fit.rate - 0.2).abs() < 1e-9);
    }

    #[test]
    fn ipr_examples() {
        let n = 50;
        let u = vec![C::new(1.0 / (n as f64).sqrt(), 0.0); n];
        assert!((ipr(&u) - 1.0 / n as f64).abs() < 1e-15);
        assert_eq!(center_of(&u), 24);
        let mut e = vec![C::new(0.0, 0.0); n];
        e[7] = C::new(1.0, 0.0);
        assert_eq!(ipr(&e), 1.0);
    }

    #[test]
    fn spectral_distance_examples() {
        let o = op(20, 0.01, TorusPoint::new(0.4, 0.3));
        let pairs = spectrum(&o).unwrap();
        let vals: Vec<f64> = pairs.iter().map(|p| p.eigenvalue).collect();
        assert_eq!(distance_to_spectrum(vals[3], &vals), 0.0);
        let top = *vals.last().unwrap();
        assert!((spectral_distance(top + 2.5, &o).unwrap() - 2.5).abs() < 1e-9);
    }

    #[test]
    fn big_window_eigenvalue_is_near_half_window_spectrum() {
        let x = TorusPoint::new(0.6061, 0.1414);
        let big = op(200, 1e-3, x);
        let pairs = spectrum(&big).unwrap();
        let small = assemble(Window::new(50, 149).unwrap(), x, &Frequency::golden(), &kernel(1e-3), Guard::default())
            .unwrap();
        // an eigenvector centred well inside the small window
        let p = pairs.iter().find(|p| (90..110).contains(&p.center)).unwrap();
        assert!(spectral_distance(p.eigenvalue, &small).unwrap() < 1e-12);
    }

    #[test]
    fn rejects_huge_potential() {
        let f = Frequency::new(0.0);
        let o = assemble(Window::upto(3), TorusPoint::new(0.5 - 1e-12, 0.0), &f, &kernel(0.0), Guard::relaxed()).unwrap();
        assert!(matches!(spectrum(&o), Err(Error::PotentialOverflow { .. })));
    }

    #[test]
    fn localized_tails_are_resolved() {
        let o = op(256, 1e-3, TorusPoint::new(0.2718, 0.3141));
        let pairs = spectrum(&o).unwrap();
        let rep = localization_report(o.window, &pairs);
        assert!(rep.rate.q50 >= 1.0 / 300.0, "{:?}", rep.rate);
        assert!(rep.ipr.q50 > 0.9);
    }

    #[test]
    fn green_and_eigenvector_rates_agree_roughly() {
        let eps = 0.05;
        let x = TorusPoint::new(0.3819, 0.5772);
        let o = op(200, eps, x);
        let pairs = spectrum(&o).unwrap();
        let rep = localization_report(o.window, &pairs);
        let fac = factorize(o.window, x, &Frequency::golden(), &kernel(eps), 0.0);
        let (g, _) = green_factorized(&fac, 1e12).unwrap();
        let g_rate = g.decay_rate().unwrap().rate;
        let ratio = rep.rate.q50 / g_rate;
        assert!((1.0 / 3.0..=3.0).contains(&ratio), "eig {} green {}", rep.rate.q50, g_rate);
    }

    #[test]
    fn single_frequency_comparison_matches_report() {
        let k = kernel(1e-3);
        let f = Frequency::golden();
        let starts = vec![TorusPoint::new(0.11, 0.0), TorusPoint::new(0.37, 0.0)];
        let w = Window::upto(63);
        let rows = frequency_comparison(&[f], &starts, w, &k, Guard::default());
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].samples + rows[0].rejected, 2);
        let reports: Vec<LocalizationReport> = starts
            .iter()
            .map(|&x| localization_report(w, &spectrum(&assemble(w, x, &f, &k, Guard::default()).unwrap()).unwrap()))
            .collect();
        let iprs: Vec<f64> = reports.iter().flat_map(|r| r.pairs.iter().map(|p| p.ipr)).collect();
        assert_eq!(rows[0].median_ipr, median(&iprs));
        // the rotation case is handled without assertions on its statistics
        let rows = frequency_comparison(&[Frequency::new(0.0)], &starts, w, &k, Guard::default());
        assert_eq!(rows.len(), 1);
    }
}
