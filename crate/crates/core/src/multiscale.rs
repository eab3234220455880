//! Good/bad sites, the initial-scale Neumann estimate, bad-window density and
//! Monte-Carlo estimates of the bad set `Ω_N(E)`.
//!
//! All asymptotic thresholds are explicit parameters. Norm caps follow the
//! shape `e^{√L}` for a window of `L + 1` sites unless configured otherwise.

use serde::Serialize;

use crate::dynamics::{Frequency, TorusPoint};
use crate::error::{Error, Result};
use crate::green::{
    b_diagonal, decay_profile, factorize_phases, fit_decay, invert_b_fast, phase_alpha, Factorization,
    DEFAULT_CONDITION_CAP, DEFAULT_CUTOFF_FRACTION,
};
use crate::linalg::Mat;
use crate::operator::{orbit_phases, HoppingKernel, Window};
use crate::sampling::{ordered_map, Proportion, Sampler, Z99};
use crate::scalar::Real;

/// Cap on `‖B⁻¹‖` as a function of the window scale `L`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum NormCap {
    /// `e^{√L}`.
    SqrtExp,
    Fixed(f64),
}

impl NormCap {
    pub fn at(&self, scale: usize) -> f64 {
        match *self {
            NormCap::SqrtExp => (scale as f64).sqrt().exp(),
            NormCap::Fixed(c) => c,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScaleSchedule<T> {
    pub n: usize,
    pub m: usize,
    pub l0: usize,
    pub delta: T,
    pub c3: T,
    pub norm_cap: T,
}

pub const DEFAULT_DELTA: f64 = 0.3;

impl<T: Real> ScaleSchedule<T> {
    /// `(L₀, M, N) = (8, 32, 256)·2^k`, `c₃ = ρ/100`, cap `e^{√M}`.
    pub fn standard(k: u32, rho: T) -> Self {
        let f = 1usize << k;
        Self::with_scales(8 * f, 32 * f, 256 * f, rho)
    }

    pub fn with_scales(l0: usize, m: usize, n: usize, rho: T) -> Self {
        Self {
            n,
            m,
            l0,
            delta: T::lit(DEFAULT_DELTA),
            c3: rho / T::lit(100.0),
            norm_cap: T::lit(NormCap::SqrtExp.at(m)),
        }
    }

    pub fn validate(&self, rho: T) -> Result<()> {
        if !(self.l0 < self.m && self.m < self.n) {
            return Err(Error::InvalidInput(format!(
                "schedule must satisfy L0 < M < N, got ({}, {}, {})",
                self.l0, self.m, self.n
            )));
        }
        if self.m % 2 != 0 {
            return Err(Error::InvalidInput("site-window scale M must be even".into()));
        }
        if !(self.delta > T::zero() && self.delta < T::one()) {
            return Err(Error::InvalidInput("delta must lie in (0, 1)".into()));
        }
        if !(self.c3 > T::zero() && self.c3 < rho / T::lit(10.0)) {
            return Err(Error::InvalidInput("c3 must lie in (0, rho/10)".into()));
        }
        if !(self.norm_cap > T::zero()) {
            return Err(Error::InvalidInput("norm cap must be positive".into()));
        }
        Ok(())
    }

    /// `⌈N^{δ/5}⌉`, at least 2.
    pub fn default_minlen(&self) -> usize {
        let v = T::from_len(self.n).powf(self.delta / T::lit(5.0)).ceil();
        v.to_usize().unwrap_or(2).max(2)
    }
}

/// Weighted-norm Neumann certificate for `B = Δ + R`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NeumannCertificate<T> {
    /// `min |B_mm|`.
    pub mu: T,
    /// Decay weight used in the weighted norm.
    pub kappa: T,
    /// `max_m Σ_n |R_mn| e^{κ|m−n|} / |B_mm|`, below 1.
    pub q: T,
    /// Largest ratio of a computed `|B⁻¹(m, n)|` to its certified bound.
    pub max_ratio: T,
    /// Whether every computed entry respects its bound.
    pub verified: bool,
}

impl<T: Real> NeumannCertificate<T> {
    /// Certified bound on `|B⁻¹(m, n)|` at distance `d`.
    pub fn bound(&self, d: usize, diag: T) -> T {
        let tail = self.q / (self.mu * (T::one() - self.q));
        if d == 0 {
            T::one() / diag + tail
        } else {
            tail * (-self.kappa * T::from_len(d)).exp()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum NeumannOutcome<T> {
    Certified(NeumannCertificate<T>),
    /// Some `|B_mm| ≤ ε₀`: `x` lies in the initial-scale exceptional set.
    DiagonalTooSmall { mu: T },
    /// Off-diagonal mass too large for the series.
    SeriesDiverges { mu: T, q: T },
}

impl<T> NeumannOutcome<T> {
    pub fn is_certified(&self) -> bool {
        matches!(self, NeumannOutcome::Certified(_))
    }
}

/// Initial-scale estimate on `[0, N₀]`: if `min|B_mm| > ε₀` the off-diagonal
/// part is summed as a Neumann series in the norm weighted by `e^{κ|m−n|}`,
/// `κ = ρ/2`, and the resulting entrywise bound is checked against `B⁻¹`.
pub fn neumann_initial<T: Real>(
    n0: usize,
    x: TorusPoint<T>,
    freq: &Frequency<T>,
    kernel: &HoppingKernel<T>,
    energy: T,
    eps0: T,
) -> Result<NeumannOutcome<T>> {
    if !(kernel.eps < eps0) {
        return Err(Error::InvalidInput("neumann_initial needs eps < eps0".into()));
    }
    let w = Window::upto(n0);
    let f = factorize_phases(w, orbit_phases(w, x, freq), kernel, energy);
    Ok(neumann_for(&f, kernel.rho / T::two(), eps0))
}

pub(crate) fn neumann_for<T: Real>(f: &Factorization<T>, kappa: T, eps0: T) -> NeumannOutcome<T> {
    let n = f.dim();
    let b = &f.b_matrix;
    let mu = f.min_diagonal();
    if !(mu > eps0) {
        return NeumannOutcome::DiagonalTooSmall { mu };
    }
    let mut q = T::zero();
    for i in 0..n {
        let row: T = (0..n)
            .filter(|&j| j != i)
            .map(|j| b[(i, j)].norm() * (kappa * T::from_len(i.abs_diff(j))).exp())
            .sum();
        q = q.max(row / b[(i, i)].re.abs());
    }
    if !(q < T::one()) {
        return NeumannOutcome::SeriesDiverges { mu, q };
    }
    let mut cert = NeumannCertificate {
        mu,
        kappa,
        q,
        max_ratio: T::zero(),
        verified: true,
    };
    if let Ok((inv, _)) = invert_b_fast(f, T::lit(DEFAULT_CONDITION_CAP)) {
        for i in 0..n {
            for j in 0..n {
                let bound = cert.bound(i.abs_diff(j), b[(j, j)].re.abs());
                let v = inv[(i, j)].norm();
                if bound > T::zero() {
                    cert.max_ratio = cert.max_ratio.max(v / bound);
                } else if v > T::zero() {
                    cert.max_ratio = T::infinity();
                }
            }
        }
        // one rounding-level slack for the computed inverse
        cert.verified = cert.max_ratio <= T::one() + T::lit(1e3) * T::epsilon();
    } else {
        cert.verified = false;
    }
    NeumannOutcome::Certified(cert)
}

/// Empirical measure of `{x : min_{0≤m≤N₀} |B_mm(x)| < ε₀}` with its bound
/// `max(N₀, 1)·ε₀`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SmallnessMeasure {
    pub n0: usize,
    pub eps0: f64,
    pub measure: Proportion,
    pub bound: f64,
    /// Whether the bound lies at or above the lower 99% confidence limit.
    pub within_bound: bool,
}

pub fn diag_smallness_measure<T: Real>(
    energy: T,
    n0: usize,
    eps0: T,
    freq: &Frequency<T>,
    kernel: &HoppingKernel<T>,
    sampler: &Sampler,
    samples: usize,
) -> SmallnessMeasure {
    let k = kernel.diagonal_shift() - energy;
    let s = T::one().hypot(k);
    let pts = sampler.points::<T>(samples);
    let w = Window::upto(n0);
    let hits = ordered_map(&pts, |_, &x| {
        orbit_phases(w, x, freq)
            .into_iter()
            .any(|y| b_diagonal(y, k, s).abs() < eps0)
    });
    let count = hits.into_iter().filter(|&h| h).count();
    let measure = Proportion::wilson(count, samples, Z99);
    let bound = n0.max(1) as f64 * eps0.as_f64();
    SmallnessMeasure {
        n0,
        eps0: eps0.as_f64(),
        measure,
        bound,
        within_bound: measure.ci_lo <= bound,
    }
}

/// Exact single-site measure `(2/π) arcsin ε₀`.
pub fn single_site_measure(eps0: f64) -> f64 {
    if eps0 >= 1.0 {
        1.0
    } else {
        2.0 / std::f64::consts::PI * eps0.asin()
    }
}

/// Why a site or sample was classified bad.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Failure {
    /// `B` could not be inverted within the condition cap.
    IllConditioned,
    /// `‖B⁻¹‖` above the norm cap.
    Norm,
    /// Off-diagonal decay below `c₃`.
    Decay,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SiteVerdict<T> {
    pub site: i64,
    /// `√(‖B⁻¹‖₁ ‖B⁻¹‖∞)` on `I₀`, an upper bound on the operator norm.
    pub norm: T,
    /// `min_{|m−n| > M/10} (−log|B⁻¹(m, n)|)/|m−n|`.
    pub decay: T,
    pub failure: Option<Failure>,
}

impl<T> SiteVerdict<T> {
    pub fn good(&self) -> bool {
        self.failure.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SiteClassification<T> {
    pub n: usize,
    pub m: usize,
    /// Verdicts for `n₀ ∈ [M/2, N − M/2]`; other sites are unclassified.
    pub verdicts: Vec<SiteVerdict<T>>,
    /// `Ω(x)`.
    pub bad: Vec<i64>,
}

impl<T> SiteClassification<T> {
    pub fn bad_fraction(&self) -> f64 {
        if self.verdicts.is_empty() {
            0.0
        } else {
            self.bad.len() as f64 / self.verdicts.len() as f64
        }
    }
}

/// Verdict for one site given the phases of its window `I₀`.
fn verdict_from_phases<T: Real>(
    site: i64,
    window: Window,
    phases: Vec<T>,
    kernel: &HoppingKernel<T>,
    energy: T,
    schedule: &ScaleSchedule<T>,
) -> SiteVerdict<T> {
    let f = factorize_phases(window, phases, kernel, energy);
    let inv = match invert_b_fast(&f, T::lit(DEFAULT_CONDITION_CAP)) {
        Ok((inv, _)) => inv,
        Err(_) => {
            return SiteVerdict {
                site,
                norm: T::infinity(),
                decay: T::zero(),
                failure: Some(Failure::IllConditioned),
            }
        }
    };
    let norm = inv.norm_bound();
    let decay = pointwise_decay(&inv, schedule.m / 10);
    let failure = if !(norm <= schedule.norm_cap) {
        Some(Failure::Norm)
    } else if !(decay >= schedule.c3) {
        Some(Failure::Decay)
    } else {
        None
    };
    SiteVerdict {
        site,
        norm,
        decay,
        failure,
    }
}

/// Largest `c` with `|A(m, n)| ≤ e^{−c|m−n|}` for every `|m−n| > min_dist`.
pub fn pointwise_decay<T: Real>(a: &Mat<T>, min_dist: usize) -> T {
    let n = a.rows();
    let mut c = T::infinity();
    for i in 0..n {
        for (j, z) in a.row(i).iter().enumerate() {
            let d = i.abs_diff(j);
            if d > min_dist {
                let v = z.norm();
                if v > T::zero() {
                    c = c.min(-v.ln() / T::from_len(d));
                }
            }
        }
    }
    c
}

/// Classifies one site `n₀` via `B` on `I₀ = [n₀ − M/2, n₀ + M/2]`.
pub fn classify_site<T: Real>(
    x: TorusPoint<T>,
    freq: &Frequency<T>,
    kernel: &HoppingKernel<T>,
    energy: T,
    schedule: &ScaleSchedule<T>,
    n0: i64,
) -> SiteVerdict<T> {
    let half = (schedule.m / 2) as i64;
    let w = Window {
        lo: n0 - half,
        hi: n0 + half,
    };
    verdict_from_phases(n0, w, orbit_phases(w, x, freq), kernel, energy, schedule)
}

/// Classifies every site of `[0, N]` whose window `I₀` fits inside it.
pub fn classify_sites<T: Real>(
    x: TorusPoint<T>,
    freq: &Frequency<T>,
    kernel: &HoppingKernel<T>,
    energy: T,
    schedule: &ScaleSchedule<T>,
) -> Result<SiteClassification<T>> {
    if schedule.m % 2 != 0 || schedule.m > schedule.n {
        return Err(Error::InvalidInput("need even M ≤ N".into()));
    }
    let outer = Window::upto(schedule.n);
    let phases = orbit_phases(outer, x, freq);
    let half = schedule.m / 2;
    let sites: Vec<usize> = (half..=schedule.n - half).collect();
    let verdicts = ordered_map(&sites, |_, &n0| {
        let w = Window {
            lo: (n0 - half) as i64,
            hi: (n0 + half) as i64,
        };
        let local = phases[n0 - half..=n0 + half].to_vec();
        verdict_from_phases(n0 as i64, w, local, kernel, energy, schedule)
    });
    let bad = verdicts.iter().filter(|v| !v.good()).map(|v| v.site).collect();
    Ok(SiteClassification {
        n: schedule.n,
        m: schedule.m,
        verdicts,
        bad,
    })
}

/// Worst ratio `|J ∩ Ω| / |J|^{1−δ}` over intervals `J ⊂ [0, N]` with at
/// least `minlen` sites, together with the maximizing interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DensityReport {
    pub ratio: f64,
    pub worst: Option<Window>,
}

pub fn window_density<T: Real>(cls: &SiteClassification<T>, minlen: usize, delta: f64) -> Result<DensityReport> {
    if minlen < 2 {
        return Err(Error::InvalidInput("minlen must be at least 2".into()));
    }
    let total = cls.n + 1;
    let mut prefix = vec![0usize; total + 1];
    let mut is_bad = vec![false; total];
    for &b in &cls.bad {
        is_bad[b as usize] = true;
    }
    for i in 0..total {
        prefix[i + 1] = prefix[i] + is_bad[i] as usize;
    }
    let mut best = DensityReport {
        ratio: 0.0,
        worst: None,
    };
    if cls.bad.is_empty() {
        return Ok(best);
    }
    for len in minlen..=total {
        let denom = (len as f64).powf(1.0 - delta);
        let mut max_count = 0;
        let mut at = 0;
        for start in 0..=total - len {
            let c = prefix[start + len] - prefix[start];
            if c > max_count {
                max_count = c;
                at = start;
            }
        }
        let r = max_count as f64 / denom;
        if r > best.ratio {
            best = DensityReport {
                ratio: r,
                worst: Some(Window {
                    lo: at as i64,
                    hi: (at + len - 1) as i64,
                }),
            };
        }
    }
    Ok(best)
}

/// Outcome of the bad-set criteria for one sample at scale `N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SampleVerdict {
    pub norm: f64,
    pub rate: f64,
    pub failure: Option<Failure>,
}

/// Applies the scale-`N` criteria (`‖B⁻¹‖ ≤ cap`, fitted tail rate `≥ c₃`)
/// on `[0, N]`.
pub fn bad_set_verdict<T: Real>(
    x: TorusPoint<T>,
    freq: &Frequency<T>,
    kernel: &HoppingKernel<T>,
    energy: T,
    n: usize,
    cap: f64,
    c3: T,
) -> SampleVerdict {
    let w = Window::upto(n);
    let f = factorize_phases(w, orbit_phases(w, x, freq), kernel, energy);
    let inv = match invert_b_fast(&f, T::lit(DEFAULT_CONDITION_CAP)) {
        Ok((inv, _)) => inv,
        Err(_) => {
            return SampleVerdict {
                norm: f64::INFINITY,
                rate: f64::NAN,
                failure: Some(Failure::IllConditioned),
            }
        }
    };
    let norm = inv.norm_bound().as_f64();
    // the tail criterion is about G; |G| ≤ |B⁻¹| entrywise with equality up
    // to the column factor cos π y_n / s
    let g = crate::green::green(&f, &inv);
    let rate = match fit_decay(&decay_profile(&g.entries), T::lit(DEFAULT_CUTOFF_FRACTION)) {
        Ok(fit) => fit.rate.as_f64(),
        Err(_) => f64::NAN,
    };
    let failure = if !(norm <= cap) {
        Some(Failure::Norm)
    } else if !(rate >= c3.as_f64()) {
        Some(Failure::Decay)
    } else {
        None
    };
    SampleVerdict { norm, rate, failure }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScaleMeasure {
    pub n: usize,
    pub samples: usize,
    pub failures: usize,
    pub measure: Proportion,
    pub norm_cap: f64,
    pub ill_conditioned: usize,
    pub norm_failures: usize,
    pub decay_failures: usize,
}

/// Monte-Carlo estimate of `mes Ω_N(E)` at each scale. The same sample
/// points are reused across scales.
#[allow(clippy::too_many_arguments)]
pub fn bad_set_measure<T: Real>(
    energy: T,
    scales: &[usize],
    cap: NormCap,
    c3: T,
    freq: &Frequency<T>,
    kernel: &HoppingKernel<T>,
    sampler: &Sampler,
    samples: usize,
) -> Vec<ScaleMeasure> {
    let pts = sampler.points::<T>(samples);
    scales
        .iter()
        .map(|&n| {
            let norm_cap = cap.at(n);
            let verdicts = ordered_map(&pts, |_, &x| bad_set_verdict(x, freq, kernel, energy, n, norm_cap, c3));
            let count = |f: Failure| verdicts.iter().filter(|v| v.failure == Some(f)).count();
            let failures = verdicts.iter().filter(|v| v.failure.is_some()).count();
            ScaleMeasure {
                n,
                samples,
                failures,
                measure: Proportion::wilson(failures, samples, Z99),
                norm_cap,
                ill_conditioned: count(Failure::IllConditioned),
                norm_failures: count(Failure::Norm),
                decay_failures: count(Failure::Decay),
            }
        })
        .collect()
}

/// Starting point whose orbit site `site` lies at `offset` (in `x₁`) from
/// the zero set of `B_mm`.
pub fn resonant_point<T: Real>(
    x2: T,
    freq: &Frequency<T>,
    kernel: &HoppingKernel<T>,
    energy: T,
    site: i64,
    offset: T,
) -> TorusPoint<T> {
    let alpha = phase_alpha(kernel.diagonal_shift() - energy);
    let target = alpha + T::half() + offset;
    // (Tᵐx)₁ = x₁ + m x₂ + m(m−1)/2 ω, solved for x₁
    let shifted = crate::dynamics::iterate_closed(TorusPoint::new(T::zero(), x2), freq, site).x1;
    TorusPoint::new(target - shifted, x2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::step;
    use crate::operator::{kernel_from_profile, KernelProfile};

    fn kernel(eps: f64) -> HoppingKernel<f64> {
        kernel_from_profile(1.0, 21, &KernelProfile::default_geometric(1.0))
            .unwrap()
            .with_coupling(eps)
            .unwrap()
    }

    #[test]
    fn schedule_validation() {
        let s = ScaleSchedule::<f64>::standard(0, 1.0);
        assert_eq!((s.l0, s.m, s.n), (8, 32, 256));
        assert!(s.validate(1.0).is_ok());
        assert!((s.norm_cap - 32f64.sqrt().exp()).abs() < 1e-9);
        assert_eq!(s.default_minlen(), 2);
        let mut bad = s;
        bad.c3 = 0.2;
        assert!(bad.validate(1.0).is_err());
        let mut bad = s;
        bad.m = 300;
        assert!(bad.validate(1.0).is_err());
    }

    #[test]
    fn neumann_diagonal_case_is_exact() {
        let f = Frequency::golden();
        let out = neumann_initial(16, TorusPoint::new(0.3, 0.2), &f, &kernel(0.0), 0.5, 1e-3).unwrap();
        match out {
            NeumannOutcome::Certified(c) => {
                assert_eq!(c.q, 0.0);
                assert!(c.verified);
                assert_eq!(c.bound(3, 0.5), 0.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn neumann_eps0_one_always_fails() {
        let f = Frequency::golden();
        for i in 0..20 {
            let x = TorusPoint::new(0.05 * i as f64, 0.37);
            let out = neumann_initial(8, x, &f, &kernel(1e-6), 0.0, 1.0).unwrap();
            assert!(matches!(out, NeumannOutcome::DiagonalTooSmall { .. }));
        }
        assert!(neumann_initial(8, TorusPoint::new(0.1, 0.1), &f, &kernel(0.5), 0.0, 1e-3).is_err());
    }

    #[test]
    fn neumann_certificate_holds_typically() {
        let f = Frequency::golden();
        let k = kernel(1e-6);
        let pts = Sampler::new(5).points::<f64>(2000);
        let mut certified = 0;
        for x in &pts {
            let out = neumann_initial(32, *x, &f, &k, 0.0, 1e-3).unwrap();
            if let NeumannOutcome::Certified(c) = out {
                assert!(c.verified, "{c:?}");
                certified += 1;
            }
        }
        assert!(certified as f64 / 2000.0 >= 1.0 - 32.0 * 1e-3);
    }

    #[test]
    fn single_site_measure_matches_oracle() {
        let f = Frequency::golden();
        let k = kernel(1e-3);
        let m = diag_smallness_measure(0.3, 0, 0.05, &f, &k, &Sampler::new(1), 20_000);
        let oracle = single_site_measure(0.05);
        assert!((m.measure.estimate - oracle).abs() < 3.0 * (oracle * (1.0 - oracle) / 20_000f64).sqrt());
        let all = diag_smallness_measure(0.3, 4, 1.0, &f, &k, &Sampler::new(1), 1000);
        assert_eq!(all.measure.estimate, 1.0);
    }

    #[test]
    fn all_good_when_diagonal_bounded() {
        let f = Frequency::golden();
        let mut s = ScaleSchedule::with_scales(4, 16, 64, 1.0);
        s.norm_cap = 1e300;
        let cls = classify_sites(TorusPoint::new(0.2, 0.3), &f, &kernel(0.0), 0.0, &s).unwrap();
        assert_eq!(cls.verdicts.len(), 64 - 16 + 1);
        assert!(cls.bad.is_empty());
        assert_eq!(window_density(&cls, 2, 0.3).unwrap().ratio, 0.0);
    }

    #[test]
    fn planted_resonance_makes_site_bad() {
        let f = Frequency::golden();
        let k = kernel(1e-3);
        let s = ScaleSchedule::with_scales(4, 16, 64, 1.0);
        let x = resonant_point(0.3172, &f, &k, 0.0, 30, 1e-9);
        let cls = classify_sites(x, &f, &k, 0.0, &s).unwrap();
        assert!(cls.bad.contains(&30));
        let v = classify_site(x, &f, &k, 0.0, &s, 30);
        assert!(!v.good());
    }

    #[test]
    fn classification_is_shift_covariant() {
        let f = Frequency::golden();
        let k = kernel(1e-3);
        let s = ScaleSchedule::with_scales(4, 16, 64, 1.0);
        for (i, x) in Sampler::new(9).points::<f64>(30).into_iter().enumerate() {
            let n0 = 8 + (i as i64 % 40);
            let a = classify_site(x, &f, &k, 0.0, &s, n0 + 1);
            let b = classify_site(step(x, &f), &f, &k, 0.0, &s, n0);
            assert_eq!(a.good(), b.good());
            assert!((a.norm - b.norm).abs() <= 1e-9 * a.norm);
        }
    }

    #[test]
    fn density_examples() {
        let full = SiteClassification::<f64> {
            n: 99,
            m: 2,
            verdicts: Vec::new(),
            bad: (0..100).collect(),
        };
        let r = window_density(&full, 2, 1e-9).unwrap();
        assert!((r.ratio - 1.0).abs() < 1e-6);
        let one = SiteClassification::<f64> {
            n: 9,
            m: 2,
            verdicts: Vec::new(),
            bad: vec![4],
        };
        let r = window_density(&one, 2, 0.3).unwrap();
        assert!((r.ratio - 2f64.powf(-0.7)).abs() < 1e-12);
        assert!(window_density(&one, 1, 0.3).is_err());
    }

    #[test]
    fn density_matches_brute_force() {
        let bad = vec![3i64, 4, 9, 17, 18, 19, 30];
        let cls = SiteClassification::<f64> {
            n: 40,
            m: 2,
            verdicts: Vec::new(),
            bad: bad.clone(),
        };
        let mut brute: f64 = 0.0;
        for a in 0..=40i64 {
            for b in a + 2..=41 {
                let len = (b - a) as f64;
                let c = bad.iter().filter(|&&s| a <= s && s < b).count() as f64;
                brute = brute.max(c / len.powf(0.7));
            }
        }
        let r = window_density(&cls, 2, 0.3).unwrap();
        assert!((r.ratio - brute).abs() < 1e-12);
    }

    #[test]
    fn diagonal_bad_set_reduces_to_smallness() {
        let f = Frequency::golden();
        let k = kernel(0.0);
        let sampler = Sampler::new(17);
        let cap = 50.0;
        let bad = bad_set_measure(0.4, &[64], NormCap::Fixed(cap), 0.01, &f, &k, &sampler, 3000);
        let small = diag_smallness_measure(0.4, 64, 1.0 / cap, &f, &k, &sampler, 3000);
        assert_eq!(bad[0].failures, small.measure.successes);
    }
}
