//! Green's function bounds on a long interval from overlapping sub-windows,
//! via the resolvent identity
//!
//! ```text
//! G_I(m, n) = G_{I_α}(m, n)·[n ∈ I_α]
//!           − Σ_{n₁ ∈ I_α, n₂ ∉ I_α} G_{I_α}(m, n₁) εφ̂(n₁ − n₂) G_I(n₂, n)
//! ```
//!
//! for `m ∈ I_α`.

use serde::Serialize;

use crate::dynamics::{Frequency, Guard, TorusPoint};
use crate::error::{Error, Result};
use crate::green::{decay_profile, factorize, fit_decay, green_direct, green_factorized, GreenMatrix};
use crate::green::{DEFAULT_CONDITION_CAP, DEFAULT_CUTOFF_FRACTION};
use crate::linalg::Mat;
use crate::multiscale::pointwise_decay;
use crate::operator::{assemble, HoppingKernel, Window};
use crate::sampling::ordered_map;
use crate::scalar::Real;

/// Windows of size `M` covering `I` so that every `k` has
/// `[k − M/4, k + M/4] ∩ I` inside one of them.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Cover {
    pub interval: Window,
    pub m: usize,
    pub windows: Vec<Window>,
}

impl Cover {
    /// `[k − M/4, k + M/4] ∩ I`.
    pub fn neighbourhood(&self, k: i64) -> Window {
        let r = (self.m / 4) as i64;
        Window {
            lo: (k - r).max(self.interval.lo),
            hi: (k + r).min(self.interval.hi),
        }
    }

    /// Index of the first window containing the neighbourhood of `k`.
    pub fn window_for(&self, k: i64) -> Option<usize> {
        let nb = self.neighbourhood(k);
        self.windows.iter().position(|w| w.contains_window(&nb))
    }

    /// Exhaustive check of the covering property.
    pub fn is_sound(&self) -> bool {
        self.interval.sites().all(|k| self.window_for(k).is_some())
    }
}

/// Sliding windows with stride `M/2`; the last one is clamped to end at
/// the right edge of `I`.
pub fn build_cover(interval: Window, m: usize) -> Result<Cover> {
    if m == 0 || m % 4 != 0 {
        return Err(Error::InvalidInput(format!("cover size {m} must be a positive multiple of 4")));
    }
    let len = interval.len();
    if len < m {
        return Err(Error::InfeasibleCover { len, size: m });
    }
    let stride = (m / 2) as i64;
    let size = m as i64;
    let mut windows = Vec::new();
    let mut lo = interval.lo;
    while lo + size - 1 <= interval.hi {
        windows.push(Window { lo, hi: lo + size - 1 });
        lo += stride;
    }
    if windows.last().is_some_and(|w| w.hi < interval.hi) {
        windows.push(Window {
            lo: interval.hi - size + 1,
            hi: interval.hi,
        });
    }
    let cover = Cover { interval, m, windows };
    if !cover.is_sound() {
        return Err(Error::InfeasibleCover { len, size: m });
    }
    Ok(cover)
}

/// Right side of the one-step resolvent expansion at `(m, n)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExpansionBound<T> {
    /// `|G_{I_α}(m, n)|` if `n ∈ I_α`, else 0.
    pub additive: T,
    /// `Σ |G_{I_α}(m, n₁)| |εφ̂(n₁ − n₂)| |G_I(n₂, n)|`.
    pub multiplicative: T,
    /// Part of the multiplicative sum with `|m − n₁| ≤ M/8`.
    pub near: T,
    /// Part with `|m − n₁| > M/8`.
    pub far: T,
}

impl<T: Real> ExpansionBound<T> {
    pub fn total(&self) -> T {
        self.additive + self.multiplicative
    }
}

/// Evaluates the expansion with measured `G_{I_α}` (`g_sub`) and `G_I` (`g_full`).
pub fn resolvent_step<T: Real>(
    g_sub: &GreenMatrix<T>,
    kernel: &HoppingKernel<T>,
    g_full: &GreenMatrix<T>,
    m: i64,
    n: i64,
) -> ExpansionBound<T> {
    let sub = g_sub.window;
    let full = g_full.window;
    assert!(sub.contains(m) && full.contains_window(&sub) && full.contains(n));
    let near_radius = (sub.len() / 8) as i64;
    let im = sub.index(m);
    let additive = if sub.contains(n) {
        g_sub.entries[(im, sub.index(n))].norm()
    } else {
        T::zero()
    };
    let jn = full.index(n);
    let (mut near, mut far) = (T::zero(), T::zero());
    let band = kernel.band() as i64;
    for n1 in sub.sites() {
        let g1 = g_sub.entries[(im, sub.index(n1))].norm();
        if g1 == T::zero() {
            continue;
        }
        let mut s = T::zero();
        for n2 in (n1 - band).max(full.lo)..=(n1 + band).min(full.hi) {
            if sub.contains(n2) {
                continue;
            }
            s = s + kernel.hopping(n1 - n2).norm() * g_full.entries[(full.index(n2), jn)].norm();
        }
        if (m - n1).abs() <= near_radius {
            near = near + g1 * s;
        } else {
            far = far + g1 * s;
        }
    }
    ExpansionBound {
        additive,
        multiplicative: near + far,
        near,
        far,
    }
}

/// Measured contraction factor `Σ_{n₁ ∈ I_α, n₂ ∈ I∖I_α} |G_{I_α}(m, n₁)| |εφ̂(n₁ − n₂)|`
/// split into near and far parts, maximized over `m ∈ I_α` whose
/// neighbourhood `I_α` serves.
pub fn contraction_factor<T: Real>(g_sub: &GreenMatrix<T>, kernel: &HoppingKernel<T>, interval: Window) -> (T, T) {
    let sub = g_sub.window;
    let near_radius = (sub.len() / 8) as i64;
    let band = kernel.band() as i64;
    let weight: Vec<T> = sub
        .sites()
        .map(|n1| {
            ((n1 - band).max(interval.lo)..=(n1 + band).min(interval.hi))
                .filter(|n2| !sub.contains(*n2))
                .map(|n2| kernel.hopping(n1 - n2).norm())
                .sum()
        })
        .collect();
    let (mut near_max, mut far_max) = (T::zero(), T::zero());
    for m in sub.sites() {
        let im = sub.index(m);
        let (mut near, mut far) = (T::zero(), T::zero());
        for (j, n1) in sub.sites().enumerate() {
            let t = g_sub.entries[(im, j)].norm() * weight[j];
            if (m - n1).abs() <= near_radius {
                near = near + t;
            } else {
                far = far + t;
            }
        }
        near_max = near_max.max(near);
        far_max = far_max.max(far);
    }
    (near_max, far_max)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ContractionReport {
    pub m: usize,
    pub rho: f64,
    pub measured_norm: f64,
    pub tail_rate: f64,
    /// `M · norm · e^{−ρM/8}`.
    pub near_term: f64,
    /// `e^{−γ M/10}` with `γ` the sub-window tail rate.
    pub far_term: f64,
    pub near_pass: bool,
    pub far_pass: bool,
    /// `1/4 − term`, negative on failure.
    pub near_margin: f64,
    pub far_margin: f64,
}

impl ContractionReport {
    pub fn passes(&self) -> bool {
        self.near_pass && self.far_pass
    }
}

/// Evaluates the two contraction constants against `1/4`. The far term with
/// `γ = ρ/100` is `e^{−ρM/1000}`.
pub fn contraction_check(m: usize, rho: f64, measured_norm: f64, tail_rate: Option<f64>) -> ContractionReport {
    let gamma = tail_rate.unwrap_or(rho / 100.0);
    let mf = m as f64;
    let near_term = mf * measured_norm * (-rho * mf / 8.0).exp();
    let far_term = (-gamma * mf / 10.0).exp();
    let near_term = if near_term.is_nan() { f64::INFINITY } else { near_term };
    ContractionReport {
        m,
        rho,
        measured_norm,
        tail_rate: gamma,
        near_term,
        far_term,
        near_pass: near_term < 0.25,
        far_pass: far_term < 0.25,
        near_margin: 0.25 - near_term,
        far_margin: 0.25 - far_term,
    }
}

/// Iterates `v ← M Σ_{|m−n₁| > M/4} e^{−γ|m−n₁|} v(n₁)` `t` times on an
/// interval of `v.len()` sites. Experimental: reproduces the multi-step
/// bound chain for fixed `n` from per-site bounds on `|G_I(·, n)|`.
pub fn propagate_bounds<T: Real>(initial: &[T], m: usize, gamma: T, t: usize) -> Vec<T> {
    let len = initial.len();
    let gap = m / 4;
    let mf = T::from_len(m);
    let kernel: Vec<T> = (0..len).map(|d| (-gamma * T::from_len(d)).exp()).collect();
    let mut v = initial.to_vec();
    for _ in 0..t {
        v = (0..len)
            .map(|i| {
                let s: T = (0..len)
                    .filter(|&j| i.abs_diff(j) > gap)
                    .map(|j| kernel[i.abs_diff(j)] * v[j])
                    .sum();
                mf * s
            })
            .collect();
    }
    v
}

/// Thresholds for the sub-window hypotheses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PatchOptions {
    /// `‖G_{I_α}‖` cap; defaults to `e^{√M}`.
    pub norm_cap: f64,
    /// Required pointwise sub-window rate; defaults to `ρ/100`.
    pub sub_rate: f64,
    /// Required full-interval rate; defaults to `ρ/200`.
    pub full_rate: f64,
    pub condition_cap: f64,
}

impl PatchOptions {
    pub fn standard(m: usize, rho: f64) -> Self {
        Self {
            norm_cap: (m as f64).sqrt().exp(),
            sub_rate: rho / 100.0,
            full_rate: rho / 200.0,
            condition_cap: DEFAULT_CONDITION_CAP,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SubWindowReport {
    pub window: Window,
    /// `√(‖G‖₁‖G‖∞)`, infinite if the window could not be inverted.
    pub norm: f64,
    /// Largest `c` with `|G(n₁, n₂)| ≤ e^{−c|n₁−n₂|}` for `|n₁ − n₂| > M/10`.
    pub rate: f64,
    pub norm_ok: bool,
    pub rate_ok: bool,
}

impl SubWindowReport {
    pub fn passes(&self) -> bool {
        self.norm_ok && self.rate_ok
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Conclusion {
    /// `max |G_I|`.
    pub max_entry: f64,
    /// `e^M`.
    pub entry_bound: f64,
    pub c3_holds: bool,
    /// Largest `c` with `|G_I(n₁, n₂)| ≤ e^{−c|n₁−n₂|}` for `|n₁ − n₂| > N/10`.
    pub pointwise_rate: f64,
    /// Least-squares tail rate of the distance profile beyond `N/10`.
    pub fitted_rate: f64,
    pub c4_holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PatchReport {
    pub interval: Window,
    pub m: usize,
    pub hypotheses: Vec<SubWindowReport>,
    pub contraction: ContractionReport,
    /// Measured `(near, far)` contraction sums, maximized over windows.
    pub measured_contraction: (f64, f64),
    pub conclusion: Conclusion,
}

impl PatchReport {
    pub fn failed_windows(&self) -> Vec<Window> {
        self.hypotheses.iter().filter(|h| !h.passes()).map(|h| h.window).collect()
    }

    pub fn hypotheses_hold(&self) -> bool {
        self.hypotheses.iter().all(SubWindowReport::passes)
    }
}

/// Sub-window reports and the measured `(near, far)` contraction sums.
#[allow(clippy::too_many_arguments)]
pub fn sub_window_reports<T: Real>(
    cover: &Cover,
    x: TorusPoint<T>,
    freq: &Frequency<T>,
    kernel: &HoppingKernel<T>,
    energy: T,
    opts: &PatchOptions,
) -> (Vec<SubWindowReport>, (f64, f64)) {
    let cap = T::lit(opts.condition_cap);
    let subs = ordered_map(&cover.windows, |_, &w| {
        let f = factorize(w, x, freq, kernel, energy);
        green_factorized(&f, cap).ok().map(|(g, _)| g)
    });
    let min_dist = cover.m / 10;
    let mut hypotheses = Vec::with_capacity(subs.len());
    let mut sums = (0.0f64, 0.0f64);
    for (w, g) in cover.windows.iter().zip(&subs) {
        let (norm, rate) = match g {
            Some(g) => {
                let (near, far) = contraction_factor(g, kernel, cover.interval);
                sums.0 = sums.0.max(near.as_f64());
                sums.1 = sums.1.max(far.as_f64());
                (g.entries.norm_bound().as_f64(), pointwise_decay(&g.entries, min_dist).as_f64())
            }
            None => (f64::INFINITY, 0.0),
        };
        hypotheses.push(SubWindowReport {
            window: *w,
            norm,
            rate,
            norm_ok: norm <= opts.norm_cap,
            rate_ok: rate >= opts.sub_rate,
        });
    }
    (hypotheses, sums)
}

#[allow(clippy::too_many_arguments)]
fn complete_report<T: Real>(
    cover: &Cover,
    hypotheses: Vec<SubWindowReport>,
    measured_contraction: (f64, f64),
    x: TorusPoint<T>,
    freq: &Frequency<T>,
    kernel: &HoppingKernel<T>,
    energy: T,
    rho: f64,
    opts: &PatchOptions,
    guard: Guard<T>,
) -> Result<PatchReport> {
    let worst_norm = hypotheses.iter().map(|h| h.norm).fold(0.0, f64::max);
    let worst_rate = hypotheses.iter().map(|h| h.rate).fold(f64::INFINITY, f64::min);
    let contraction = contraction_check(cover.m, rho, worst_norm, Some(worst_rate));

    let op = assemble(cover.interval, x, freq, kernel, guard)?;
    let g = green_direct(&op, energy, T::lit(opts.condition_cap))?;
    let max_entry = g.entries.max_abs().as_f64();
    let entry_bound = (cover.m as f64).exp();
    let n_scale = cover.interval.len() - 1;
    let pointwise_rate = pointwise_decay(&g.entries, n_scale / 10).as_f64();
    let fitted_rate = fit_decay(&decay_profile(&g.entries), T::lit(DEFAULT_CUTOFF_FRACTION))
        .map(|f| f.rate.as_f64())
        .unwrap_or(f64::NAN);
    Ok(PatchReport {
        interval: cover.interval,
        m: cover.m,
        hypotheses,
        contraction,
        measured_contraction,
        conclusion: Conclusion {
            max_entry,
            entry_bound,
            c3_holds: max_entry < entry_bound,
            pointwise_rate,
            fitted_rate,
            c4_holds: pointwise_rate >= opts.full_rate,
        },
    })
}

/// Measures every hypothesis and conclusion without judging them.
#[allow(clippy::too_many_arguments)]
pub fn patch_report<T: Real>(
    cover: &Cover,
    x: TorusPoint<T>,
    freq: &Frequency<T>,
    kernel: &HoppingKernel<T>,
    energy: T,
    rho: f64,
    opts: &PatchOptions,
    guard: Guard<T>,
) -> Result<PatchReport> {
    let (hypotheses, sums) = sub_window_reports(cover, x, freq, kernel, energy, opts);
    complete_report(cover, hypotheses, sums, x, freq, kernel, energy, rho, opts, guard)
}

/// Like [`patch_report`], but refuses instances whose sub-windows violate
/// the hypotheses before touching the full interval.
#[allow(clippy::too_many_arguments)]
pub fn patch_verify<T: Real>(
    cover: &Cover,
    x: TorusPoint<T>,
    freq: &Frequency<T>,
    kernel: &HoppingKernel<T>,
    energy: T,
    rho: f64,
    opts: &PatchOptions,
    guard: Guard<T>,
) -> Result<PatchReport> {
    let (hypotheses, sums) = sub_window_reports(cover, x, freq, kernel, energy, opts);
    let failed: Vec<Window> = hypotheses.iter().filter(|h| !h.passes()).map(|h| h.window).collect();
    if !failed.is_empty() {
        return Err(Error::HypothesisFailed { windows: failed });
    }
    complete_report(cover, hypotheses, sums, x, freq, kernel, energy, rho, opts, guard)
}

/// `G_I` as a plain matrix over a window, for callers that already hold one.
pub fn green_on<T: Real>(window: Window, entries: Mat<T>, energy: T) -> GreenMatrix<T> {
    GreenMatrix {
        window,
        energy,
        entries,
        condition: T::nan(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multiscale::resonant_point;
    use crate::operator::{kernel_from_profile, KernelProfile};
    use crate::scalar::C;

    fn kernel(eps: f64) -> HoppingKernel<f64> {
        kernel_from_profile(1.0, 21, &KernelProfile::default_geometric(1.0))
            .unwrap()
            .with_coupling(eps)
            .unwrap()
    }

    #[test]
    fn cover_examples() {
        let c = build_cover(Window::new(0, 19).unwrap(), 20).unwrap();
        assert_eq!(c.windows, vec![Window::new(0, 19).unwrap()]);
        let c = build_cover(Window::new(0, 100).unwrap(), 20).unwrap();
        let los: Vec<i64> = c.windows.iter().map(|w| w.lo).collect();
        assert_eq!(los, vec![0, 10, 20, 30, 40, 50, 60, 70, 80, 81]);
        assert!(c.is_sound());
        assert!(build_cover(Window::new(0, 100).unwrap(), 18).is_err());
        assert!(matches!(
            build_cover(Window::new(0, 10).unwrap(), 20),
            Err(Error::InfeasibleCover { len: 11, size: 20 })
        ));
        let c = build_cover(Window::new(0, 99).unwrap(), 20).unwrap();
        assert_eq!(c.windows.last().unwrap().lo, 80);
    }

    #[test]
    fn contraction_examples() {
        let r = contraction_check(40, 1.0, 1.0, None);
        assert!((r.near_term - 40.0 * (-5.0f64).exp()).abs() < 1e-12);
        assert!(!r.near_pass && r.near_term < 0.3);
        assert!(contraction_check(48, 1.0, 1.0, None).near_pass);
        // the tail term at the hypothesis rate ρ/100 is e^{−ρM/1000}
        let r = contraction_check(48, 1.0, 1.0, None);
        assert!((r.far_term - (-0.048f64).exp()).abs() < 1e-15);
        assert!(contraction_check(48, 1e6, 1.0, Some(1e4)).passes());
        let r = contraction_check(48, 1.0, 1e30, Some(5.0));
        assert!(!r.near_pass && r.near_margin < 0.0);
    }

    #[test]
    fn decoupled_expansion_is_additive() {
        let f = Frequency::golden();
        let k = kernel(0.0);
        let x = TorusPoint::new(0.21, 0.63);
        let full = Window::new(0, 39).unwrap();
        let sub = Window::new(0, 19).unwrap();
        let (gs, _) = green_factorized(&factorize(sub, x, &f, &k, 0.0), 1e12).unwrap();
        let gf = green_direct(&assemble(full, x, &f, &k, Guard::default()).unwrap(), 0.0, 1e12).unwrap();
        let b = resolvent_step(&gs, &k, &gf, 5, 5);
        assert_eq!(b.multiplicative, 0.0);
        assert_eq!(b.additive, gs.entries[(5, 5)].norm());
    }

    #[test]
    fn expansion_matches_geometric_sum() {
        // G_sub(m, n₁) = e^{−a|m−n₁|}, εφ̂(d) = ½e^{−2|d|}, G_full ≡ 1
        let a = 0.4;
        let mm = 8usize;
        let r = 5usize;
        let sub = Window::new(0, mm as i64 - 1).unwrap();
        let full = Window::new(0, (mm + r) as i64 - 1).unwrap();
        let gs = green_on(sub, Mat::from_fn(mm, mm, |i, j| C::new((-a * i.abs_diff(j) as f64).exp(), 0.0)), 0.0);
        let gf = green_on(full, Mat::from_fn(mm + r, mm + r, |_, _| C::new(1.0, 0.0)), 0.0);
        let k = kernel(1.0);
        let b = resolvent_step(&gs, &k, &gf, mm as i64 - 1, 0);
        let eb = (-2.0f64).exp();
        let ratio = (-(a + 2.0)).exp();
        let closed = (1.0 - ratio.powi(mm as i32)) / (1.0 - ratio) * 0.5 * eb * (1.0 - eb.powi(r as i32)) / (1.0 - eb);
        assert!((b.multiplicative - closed).abs() < 1e-12 * closed);
    }

    #[test]
    fn expansion_bounds_direct_values() {
        let f = Frequency::golden();
        let k = kernel(0.05);
        let x = TorusPoint::new(0.77, 0.31);
        let full = Window::new(0, 63).unwrap();
        let cover = build_cover(full, 16).unwrap();
        let gf = green_direct(&assemble(full, x, &f, &k, Guard::default()).unwrap(), 0.2, 1e12).unwrap();
        for m in [0i64, 7, 20, 41, 63] {
            let w = cover.windows[cover.window_for(m).unwrap()];
            let (gs, _) = green_factorized(&factorize(w, x, &f, &k, 0.2), 1e12).unwrap();
            for n in [0i64, 3, 30, 63] {
                let b = resolvent_step(&gs, &k, &gf, m, n);
                let direct = gf.entries[(m as usize, n as usize)].norm();
                assert!(b.total() >= direct * (1.0 - 1e-10), "m={m} n={n}");
            }
        }
    }

    #[test]
    fn propagation_reduces_to_single_sum() {
        let init: Vec<f64> = (0..30).map(|i| 1.0 + 0.1 * i as f64).collect();
        let one = propagate_bounds(&init, 8, 0.3, 1);
        for i in 0..30usize {
            let mut s = 0.0;
            for j in 0..30usize {
                if i.abs_diff(j) > 2 {
                    s += (-0.3 * i.abs_diff(j) as f64).exp() * init[j];
                }
            }
            assert!((one[i] - 8.0 * s).abs() < 1e-12 * one[i]);
        }
        let two = propagate_bounds(&init, 8, 0.3, 2);
        let i = 11usize;
        let mut chain = 0.0;
        for j in 0..30usize {
            for l in 0..30usize {
                if i.abs_diff(j) > 2 && j.abs_diff(l) > 2 {
                    chain += (-0.3 * (i.abs_diff(j) + j.abs_diff(l)) as f64).exp() * init[l];
                }
            }
        }
        assert!((two[i] - 64.0 * chain).abs() < 1e-10 * two[i]);
    }

    #[test]
    fn diagonal_instance_passes_vacuously() {
        let f = Frequency::golden();
        let k = kernel(0.0);
        let cover = build_cover(Window::new(0, 127).unwrap(), 32).unwrap();
        let opts = PatchOptions {
            norm_cap: 1e300,
            ..PatchOptions::standard(32, 1.0)
        };
        let r = patch_verify(&cover, TorusPoint::new(0.4123, 0.1357), &f, &k, 0.0, 1.0, &opts, Guard::default()).unwrap();
        assert_eq!(r.conclusion.pointwise_rate, f64::INFINITY);
        assert!(r.conclusion.c4_holds);
    }

    #[test]
    fn good_instance_decays_and_bad_instance_is_named() {
        let f = Frequency::golden();
        let k = kernel(1e-3);
        let cover = build_cover(Window::new(0, 255).unwrap(), 64).unwrap();
        let opts = PatchOptions::standard(64, 1.0);
        let x = TorusPoint::new(0.1357, 0.2468);
        if let Ok(r) = patch_verify(&cover, x, &f, &k, 0.0, 1.0, &opts, Guard::default()) {
            assert!(r.conclusion.c4_holds);
            assert!(r.conclusion.fitted_rate >= 0.005);
        }
        let bad = resonant_point(0.2468, &f, &k, 0.0, 100, 1e-10);
        match patch_verify(&cover, bad, &f, &k, 0.0, 1.0, &opts, Guard::default()) {
            Err(Error::HypothesisFailed { windows }) => {
                assert!(!windows.is_empty());
                assert!(windows.iter().all(|w| w.contains(100)));
            }
            other => panic!("{other:?}"),
        }
    }
}
