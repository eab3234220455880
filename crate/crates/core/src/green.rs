//! The factorization `H − E = D·B` and the Green's function
//! `G = B⁻¹ D⁻¹` on a finite window.
//!
//! `D` carries the `1/cos` singularity of the potential; `B` is bounded
//! uniformly in `x` and `E`:
//!
//! ```text
//! s     = √(1 + (εφ̂(0) − E)²)
//! D_mm  = s / cos π y_m
//! B_mm  = (sin π y_m + (εφ̂(0) − E) cos π y_m) / s
//! B_mn  = εφ̂(m − n) cos π y_m / s
//! ```
//!
//! with `y_m = (Tᵐx)₁`.

use serde::Serialize;

use crate::dynamics::{Frequency, Guard, TorusPoint};
use crate::error::{Error, Result};
use crate::linalg::{inverse_residual, Lu, Mat};
use crate::operator::{orbit_phases, HoppingKernel, LatticeOperator, Window};
use crate::scalar::{dist_to_int, Real, C};

/// Default cap on the condition estimate of `B` (or `H − E`).
pub const DEFAULT_CONDITION_CAP: f64 = 1e12;

/// `H − E = D·B` on a window.
#[derive(Clone, Debug)]
pub struct Factorization<T: Real> {
    pub window: Window,
    pub energy: T,
    /// `s = √(1 + (εφ̂(0) − E)²) ≥ 1`.
    pub s: T,
    pub b_matrix: Mat<T>,
    /// `(Tᵐx)₁` per site.
    pub phases: Vec<T>,
    /// `cos π(Tᵐx)₁` per site.
    pub cos_vector: Vec<T>,
}

/// Shift `K = εφ̂(0) − E` and normalizer `s`.
fn shift_and_norm<T: Real>(kernel: &HoppingKernel<T>, energy: T) -> (T, T) {
    let k = kernel.diagonal_shift() - energy;
    (k, T::one().hypot(k))
}

/// Phase `α ∈ (0, 1)` with `sin πy + K cos πy = s cos π(y − α)`.
pub(crate) fn phase_alpha<T: Real>(k: T) -> T {
    T::one().atan2(k) / T::PI()
}

/// `B_mm` as a function of the site phase `y`.
pub(crate) fn b_diagonal<T: Real>(y: T, k: T, s: T) -> T {
    let t = T::PI() * y;
    (t.sin() + k * t.cos()) / s
}

/// Builds the factorization. Never fails: `B` is entire in `x`.
pub fn factorize<T: Real>(
    window: Window,
    x: TorusPoint<T>,
    freq: &Frequency<T>,
    kernel: &HoppingKernel<T>,
    energy: T,
) -> Factorization<T> {
    let phases = orbit_phases(window, x, freq);
    factorize_phases(window, phases, kernel, energy)
}

pub(crate) fn factorize_phases<T: Real>(
    window: Window,
    phases: Vec<T>,
    kernel: &HoppingKernel<T>,
    energy: T,
) -> Factorization<T> {
    let (k, s) = shift_and_norm(kernel, energy);
    let n = window.len();
    let cos_vector: Vec<T> = phases.iter().map(|&y| (T::PI() * y).cos()).collect();
    let zero = C::new(T::zero(), T::zero());
    let band = kernel.band();
    let b_matrix = Mat::from_fn(n, n, |i, j| {
        if i == j {
            C::new(b_diagonal(phases[i], k, s), T::zero())
        } else if i.abs_diff(j) > band {
            zero
        } else {
            kernel.hopping(i as i64 - j as i64).scale(cos_vector[i] / s)
        }
    });
    Factorization {
        window,
        energy,
        s,
        b_matrix,
        phases,
        cos_vector,
    }
}

impl<T: Real> Factorization<T> {
    pub fn dim(&self) -> usize {
        self.window.len()
    }

    /// `D_mm = s / cos π(Tᵐx)₁`, refusing guarded sites.
    pub fn d_diag(&self, guard: Guard<T>) -> Result<Vec<T>> {
        self.phases
            .iter()
            .zip(&self.cos_vector)
            .zip(self.window.sites())
            .map(|((&y, &c), m)| {
                let d = dist_to_int(y - T::half());
                if d < guard.tau || c == T::zero() {
                    Err(Error::SingularityGuard {
                        site: m,
                        distance: d.as_f64(),
                        tolerance: guard.tau.as_f64(),
                    })
                } else {
                    Ok(self.s / c)
                }
            })
            .collect()
    }

    /// Dense `D·B`.
    pub fn product_db(&self, guard: Guard<T>) -> Result<Mat<T>> {
        let d = self.d_diag(guard)?;
        let n = self.dim();
        Ok(Mat::from_fn(n, n, |i, j| self.b_matrix[(i, j)].scale(d[i])))
    }

    /// `min_m |B_mm|`.
    pub fn min_diagonal(&self) -> T {
        (0..self.dim())
            .map(|i| self.b_matrix[(i, i)].re.abs())
            .fold(T::infinity(), T::min)
    }
}

/// `B⁻¹` with its diagnostics.
#[derive(Clone, Debug)]
pub struct BInverse<T> {
    pub inverse: Mat<T>,
    /// 1-norm condition estimate of `B`.
    pub condition: T,
    /// `max |B·B⁻¹ − I|`.
    pub residual: T,
}

/// Inverts `B` by LU with one refinement step; `cap` bounds the condition estimate.
pub fn invert_b<T: Real>(f: &Factorization<T>, cap: T) -> Result<BInverse<T>> {
    let (inverse, condition) = checked_inverse(&f.b_matrix, cap)?;
    let residual = inverse_residual(&f.b_matrix, &inverse);
    Ok(BInverse {
        inverse,
        condition,
        residual,
    })
}

/// Same as [`invert_b`] without forming the residual, for sampling loops.
pub fn invert_b_fast<T: Real>(f: &Factorization<T>, cap: T) -> Result<(Mat<T>, T)> {
    checked_inverse(&f.b_matrix, cap)
}

fn checked_inverse<T: Real>(a: &Mat<T>, cap: T) -> Result<(Mat<T>, T)> {
    let lu = Lu::factor(a).map_err(|e| match e {
        Error::IllConditioned { condition, .. } => Error::IllConditioned {
            condition,
            cap: cap.as_f64(),
        },
        other => other,
    })?;
    let condition = lu.condition_estimate();
    if !(condition <= cap) {
        return Err(Error::IllConditioned {
            condition: condition.as_f64(),
            cap: cap.as_f64(),
        });
    }
    Ok((lu.inverse(Some(a)), condition))
}

/// Finite-volume Green's function `(H − E)⁻¹` on a window.
#[derive(Clone, Debug, Serialize)]
pub struct GreenMatrix<T: Real> {
    pub window: Window,
    pub energy: T,
    #[serde(skip)]
    pub entries: Mat<T>,
    /// Condition estimate of the matrix actually inverted.
    pub condition: T,
}

/// `G(m, n) = cos π(Tⁿx)₁ · B⁻¹(m, n) / s` (column scaling).
pub fn green<T: Real>(f: &Factorization<T>, b_inv: &Mat<T>) -> GreenMatrix<T> {
    green_with_condition(f, b_inv, T::nan())
}

pub(crate) fn green_with_condition<T: Real>(
    f: &Factorization<T>,
    b_inv: &Mat<T>,
    condition: T,
) -> GreenMatrix<T> {
    let n = f.dim();
    let scale: Vec<T> = f.cos_vector.iter().map(|&c| c / f.s).collect();
    let entries = Mat::from_fn(n, n, |i, j| b_inv[(i, j)].scale(scale[j]));
    GreenMatrix {
        window: f.window,
        energy: f.energy,
        entries,
        condition,
    }
}

/// Factorized route end to end: `factorize`, `invert_b`, `green`.
pub fn green_factorized<T: Real>(f: &Factorization<T>, cap: T) -> Result<(GreenMatrix<T>, Mat<T>)> {
    let (inv, cond) = invert_b_fast(f, cap)?;
    Ok((green_with_condition(f, &inv, cond), inv))
}

/// Direct inverse of `H − E`.
pub fn green_direct<T: Real>(op: &LatticeOperator<T>, energy: T, cap: T) -> Result<GreenMatrix<T>> {
    let a = op.shifted(energy);
    let (entries, condition) = checked_inverse(&a, cap)?;
    Ok(GreenMatrix {
        window: op.window,
        energy,
        entries,
        condition,
    })
}

impl<T: Real> GreenMatrix<T> {
    pub fn decay_profile(&self) -> Vec<T> {
        decay_profile(&self.entries)
    }

    /// Tail decay rate with the default cutoff.
    pub fn decay_rate(&self) -> Result<DecayFit<T>> {
        fit_decay(&self.decay_profile(), T::lit(DEFAULT_CUTOFF_FRACTION))
    }
}

/// `p(d) = max_{|m−n|=d} |A(m, n)|`, `d = 0..n`.
pub fn decay_profile<T: Real>(a: &Mat<T>) -> Vec<T> {
    let n = a.rows();
    let mut p = vec![T::zero(); n];
    for i in 0..n {
        for (j, z) in a.row(i).iter().enumerate() {
            let d = i.abs_diff(j);
            p[d] = p[d].max(z.norm());
        }
    }
    p
}

pub const DEFAULT_CUTOFF_FRACTION: f64 = 0.1;
pub const MIN_FIT_CLASSES: usize = 8;

/// Least-squares exponential tail fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecayFit<T> {
    /// `γ` in `p(d) ≈ C e^{−γ d}`; `+∞` when the tail vanishes.
    pub rate: T,
    /// RMS residual of the log-linear fit.
    pub residual: T,
    /// Number of distance classes used.
    pub points: usize,
}

/// Fits `log p(d)` against `d` over `d > cutoff_fraction · (len − 1)`.
///
/// Classes whose value underflowed to zero carry no slope information and
/// are left out; if fewer than two positive values remain the tail is
/// reported as vanishing (`rate = +∞`).
pub fn fit_decay<T: Real>(profile: &[T], cutoff_fraction: T) -> Result<DecayFit<T>> {
    if profile.is_empty() {
        return Err(Error::InsufficientData {
            needed: MIN_FIT_CLASSES,
            available: 0,
        });
    }
    let big_n = T::from_len(profile.len() - 1);
    fit_decay_beyond(profile, cutoff_fraction * big_n)
}

/// Fits `log p(d)` against `d` over `d > cutoff`.
pub fn fit_decay_beyond<T: Real>(profile: &[T], cutoff: T) -> Result<DecayFit<T>> {
    let tail: Vec<(T, T)> = profile
        .iter()
        .enumerate()
        .map(|(d, &v)| (T::from_len(d), v))
        .filter(|&(d, _)| d > cutoff)
        .collect();
    if tail.len() < MIN_FIT_CLASSES {
        return Err(Error::InsufficientData {
            needed: MIN_FIT_CLASSES,
            available: tail.len(),
        });
    }
    let pts: Vec<(T, T)> = tail
        .iter()
        .filter(|&&(_, v)| v >= T::min_positive_value())
        .map(|&(d, v)| (d, v.ln()))
        .collect();
    if pts.len() < 2 {
        return Ok(DecayFit {
            rate: T::infinity(),
            residual: T::zero(),
            points: pts.len(),
        });
    }
    let np = T::from_len(pts.len());
    let mean_d = pts.iter().map(|p| p.0).sum::<T>() / np;
    let mean_l = pts.iter().map(|p| p.1).sum::<T>() / np;
    let sxx: T = pts.iter().map(|p| (p.0 - mean_d).powi(2)).sum();
    let sxy: T = pts.iter().map(|p| (p.0 - mean_d) * (p.1 - mean_l)).sum();
    let slope = sxy / sxx;
    let icpt = mean_l - slope * mean_d;
    let sse: T = pts.iter().map(|p| (p.1 - icpt - slope * p.0).powi(2)).sum();
    Ok(DecayFit {
        rate: -slope,
        residual: (sse / np).sqrt(),
        points: pts.len(),
    })
}

/// Largest relative disagreement `max|G₁ − G₂| / max|G₂|`.
pub fn relative_difference<T: Real>(a: &Mat<T>, b: &Mat<T>) -> T {
    let scale = b.max_abs();
    let diff = a.sub(b).max_abs();
    if scale == T::zero() {
        diff
    } else {
        diff / scale
    }
}

/// Largest violation of `|G(m, n)| ≤ |B⁻¹(m, n)|`, zero when dominated.
pub fn domination_excess<T: Real>(g: &Mat<T>, b_inv: &Mat<T>) -> T {
    g.as_slice()
        .iter()
        .zip(b_inv.as_slice())
        .map(|(x, y)| x.norm() - y.norm())
        .fold(T::zero(), T::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::step;
    use crate::operator::{assemble, kernel_from_profile, KernelProfile};

    fn kernel(eps: f64) -> HoppingKernel<f64> {
        kernel_from_profile(1.0, 21, &KernelProfile::default_geometric(1.0))
            .unwrap()
            .with_coupling(eps)
            .unwrap()
    }

    #[test]
    fn one_site_identity() {
        let f = Frequency::golden();
        let k = kernel(0.3);
        let x = TorusPoint::new(0.17, 0.4);
        let w = Window::new(0, 0).unwrap();
        let fac = factorize(w, x, &f, &k, 0.7);
        let db = fac.product_db(Guard::default()).unwrap();
        let expected = (std::f64::consts::PI * 0.17).tan() + 0.3 * 0.5 - 0.7;
        assert!((db[(0, 0)].re - expected).abs() < 1e-14);
    }

    #[test]
    fn energy_at_shift_gives_sine_diagonal() {
        let f = Frequency::golden();
        let k = kernel(0.2);
        let e = k.diagonal_shift();
        let fac = factorize(Window::new(0, 9).unwrap(), TorusPoint::new(0.3, 0.1), &f, &k, e);
        assert_eq!(fac.s, 1.0);
        for (i, &y) in fac.phases.iter().enumerate() {
            assert!((fac.b_matrix[(i, i)].re - (std::f64::consts::PI * y).sin()).abs() < 1e-15);
        }
    }

    #[test]
    fn factorization_reproduces_operator() {
        let f = Frequency::golden();
        let k = kernel(0.05);
        let x = TorusPoint::new(0.611, 0.289);
        let w = Window::new(0, 63).unwrap();
        let fac = factorize(w, x, &f, &k, -1.3);
        let db = fac.product_db(Guard::default()).unwrap();
        let h = assemble(w, x, &f, &k, Guard::default()).unwrap().shifted(-1.3);
        let tol = 1e-10 * (1.0 + h.max_abs());
        assert!(db.sub(&h).max_abs() < tol);
    }

    #[test]
    fn b_bounds() {
        let f = Frequency::golden();
        let k = kernel(0.5);
        for &e in &[-1e6, -3.0, 0.0, 2.5, 1e8] {
            let fac = factorize(Window::new(0, 40).unwrap(), TorusPoint::new(0.2, 0.7), &f, &k, e);
            assert!(fac.s >= 1.0);
            for i in 0..41 {
                assert!(fac.b_matrix[(i, i)].norm() <= 1.0 + 1e-14);
                for j in 0..41 {
                    if i != j {
                        let bound = 0.5 * (-(i.abs_diff(j) as f64)).exp() / fac.s;
                        assert!(fac.b_matrix[(i, j)].norm() <= bound);
                    }
                    assert!(fac.b_matrix[(i, j)].norm() <= 1.0f64.max(0.5) + 1e-14);
                }
            }
        }
    }

    #[test]
    fn diagonal_case() {
        let f = Frequency::golden();
        let k = kernel(0.0);
        let x = TorusPoint::new(0.12, 0.34);
        let w = Window::new(0, 7).unwrap();
        let fac = factorize(w, x, &f, &k, 0.4);
        let inv = invert_b(&fac, 1e12).unwrap();
        let g = green(&fac, &inv.inverse);
        for i in 0..8 {
            let y = fac.phases[i];
            let t = std::f64::consts::PI * y;
            let b_inv = fac.s / (t.sin() - 0.4 * t.cos());
            assert!((inv.inverse[(i, i)].re - b_inv).abs() < 1e-12 * b_inv.abs());
            let expected = 1.0 / (t.tan() - 0.4);
            assert!((g.entries[(i, i)].re - expected).abs() < 1e-12 * expected.abs());
            for j in 0..8 {
                if i != j {
                    assert_eq!(g.entries[(i, j)], C::new(0.0, 0.0));
                }
            }
        }
        let p = g.decay_profile();
        assert!(p[1..].iter().all(|&v| v == 0.0));
        assert_eq!(fit_decay(&decay_profile(&Mat::<f64>::identity(100)), 0.1).unwrap().rate, f64::INFINITY);
    }

    #[test]
    fn identity_inverse() {
        let f = Factorization {
            window: Window::new(0, 4).unwrap(),
            energy: 0.0,
            s: 1.0,
            b_matrix: Mat::<f64>::identity(5),
            phases: vec![0.5; 5],
            cos_vector: vec![0.0; 5],
        };
        let inv = invert_b(&f, 1e12).unwrap();
        assert_eq!(inv.inverse, Mat::identity(5));
        assert_eq!(inv.residual, 0.0);
    }

    #[test]
    fn factorized_matches_direct() {
        let f = Frequency::golden();
        let k = kernel(1e-2);
        let x = TorusPoint::new(0.913, 0.271);
        let w = Window::new(0, 127).unwrap();
        let fac = factorize(w, x, &f, &k, 0.3);
        let inv = invert_b(&fac, 1e12).unwrap();
        assert!(inv.residual < 1e-8);
        let g = green(&fac, &inv.inverse);
        let op = assemble(w, x, &f, &k, Guard::default()).unwrap();
        let gd = green_direct(&op, 0.3, 1e12).unwrap();
        assert!(gd.condition < 1e8);
        assert!(relative_difference(&g.entries, &gd.entries) < 1e-6);
        assert!(domination_excess(&g.entries, &inv.inverse) <= 1e-14);
        assert!(g.entries.norm_2(50) <= inv.inverse.norm_2(50) * (1.0 + 1e-9));
    }

    #[test]
    fn near_pole_factorized_route_stays_bounded() {
        let f = Frequency::new(0.0);
        let k = kernel(1e-3);
        let x = TorusPoint::new(0.5 - 1e-6, 0.0);
        let w = Window::new(0, 0).unwrap();
        let fac = factorize(w, x, &f, &k, 0.0);
        let inv = invert_b(&fac, 1e12).unwrap();
        assert!(inv.inverse.max_abs() < 2.0);
        let d = fac.d_diag(Guard::relaxed()).unwrap();
        assert!(1.0 / d[0].abs() < 1e-5);
        assert!(fac.d_diag(Guard::default()).is_ok());
        assert!(fac.d_diag(Guard::new(1e-3)).is_err());
        let op = assemble(w, x, &f, &k, Guard::relaxed()).unwrap();
        let gd = green_direct(&op, 0.0, 1e12).unwrap();
        assert!(gd.entries.max_abs() < 1e-5);
    }

    #[test]
    fn ill_conditioned_b_is_refused() {
        let k = kernel(0.0);
        let alpha = phase_alpha(k.diagonal_shift() - 0.0);
        let y0 = alpha + 0.5;
        let f = Frequency::new(0.0);
        let fac = factorize(Window::new(0, 3).unwrap(), TorusPoint::new(y0, 0.0), &f, &k, 0.0);
        assert!(fac.min_diagonal() < 1e-14);
        assert!(matches!(invert_b(&fac, 1e12), Err(Error::IllConditioned { .. })));
    }

    #[test]
    fn phase_identity() {
        for &k in &[-5.0, -0.3, 0.0, 0.7, 40.0] {
            let s = (1.0f64 + k * k).sqrt();
            let a = phase_alpha(k);
            assert!(a > 0.0 && a < 1.0);
            for &y in &[0.0, 0.13, 0.5, 0.77] {
                let lhs = b_diagonal(y, k, s);
                let rhs = (std::f64::consts::PI * (y - a)).cos();
                assert!((lhs - rhs).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn shift_covariance_of_b() {
        let f = Frequency::golden();
        let k = kernel(0.1);
        let x = TorusPoint::new(0.41, 0.83);
        let a = factorize(Window::new(5, 30).unwrap(), x, &f, &k, 1.0);
        let b = factorize(Window::new(4, 29).unwrap(), step(x, &f), &f, &k, 1.0);
        assert!(a.b_matrix.sub(&b.b_matrix).max_abs() <= 1e-12);
    }

    #[test]
    fn fit_examples() {
        let p: Vec<f64> = (0..200).map(|d| (-0.3 * d as f64).exp()).collect();
        let fit = fit_decay(&p, 0.1).unwrap();
        assert!((fit.rate - 0.3).abs() < 1e-9);
        assert!(fit.residual < 1e-9);
        assert!(matches!(fit_decay(&p[..8], 0.1), Err(Error::InsufficientData { .. })));
        let mut m = Mat::<f64>::zeros(30, 30);
        for i in 0..30 {
            for j in 0..30 {
                m[(i, j)] = C::new((-0.7 * i.abs_diff(j) as f64).exp(), 0.0);
            }
        }
        let prof = decay_profile(&m);
        assert!((prof[4] - (-2.8f64).exp()).abs() < 1e-15);
        assert!((fit_decay(&prof, 0.1).unwrap().rate - 0.7).abs() < 1e-9);
    }

    #[test]
    fn typical_decay_rate_exceeds_threshold() {
        let f = Frequency::golden();
        let k = kernel(1e-3);
        let fac = factorize(Window::upto(256), TorusPoint::new(0.377, 0.152), &f, &k, 0.0);
        let (g, _) = green_factorized(&fac, 1e12).unwrap();
        assert!(g.decay_rate().unwrap().rate >= 0.01);
    }
}
