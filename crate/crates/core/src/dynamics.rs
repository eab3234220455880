//! Skew-shift dynamics on the two-torus.
//!
//! `T(x₁, x₂) = (x₁ + x₂, x₂ + ω)` with the closed-form iterate
//! `Tᵐx = (x₁ + m x₂ + m(m−1)/2 ω, x₂ + m ω)`. Long orbits are carried in
//! two-word arithmetic ([`TwoFold`]); plain `f64` stepping drifts by about
//! `1e-7` after `1e5` steps, which is far above the accuracy the Green's
//! function experiments need.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::operator::Window;
use crate::scalar::{dist_to_int, int_times_mod1, mod1, Real, TwoFold};

/// Point of `𝕋² = [0,1)²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TorusPoint<T> {
    pub x1: T,
    pub x2: T,
}

impl<T: Real> TorusPoint<T> {
    /// Builds a point, reducing both coordinates modulo 1.
    pub fn new(x1: T, x2: T) -> Self {
        Self {
            x1: mod1(x1),
            x2: mod1(x2),
        }
    }

    pub fn origin() -> Self {
        Self::new(T::zero(), T::zero())
    }

    /// `‖x − y‖ = ‖x₁ − y₁‖ + ‖x₂ − y₂‖`.
    pub fn distance(&self, other: &Self) -> T {
        dist_to_int(self.x1 - other.x1) + dist_to_int(self.x2 - other.x2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyClass {
    /// Passed [`check_dc`] on its stored range.
    Diophantine,
    Rational,
    Untagged,
}

/// Skew-shift frequency together with the diophantine data it is judged by.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Frequency<T> {
    pub omega: T,
    /// The `c` in `‖kω‖ > c |k|⁻²`.
    pub dc_constant: T,
    /// Largest `|k|` checked.
    pub dc_range: u64,
    pub class: FrequencyClass,
}

pub const DEFAULT_DC_CONSTANT: f64 = 0.25;
pub const DEFAULT_DC_RANGE: u64 = 1024;

impl<T: Real> Frequency<T> {
    /// Untagged frequency with the default diophantine parameters.
    pub fn new(omega: T) -> Self {
        Self {
            omega: mod1(omega),
            dc_constant: T::lit(DEFAULT_DC_CONSTANT),
            dc_range: DEFAULT_DC_RANGE,
            class: FrequencyClass::Untagged,
        }
    }

    pub fn rational(omega: T) -> Self {
        Self {
            class: FrequencyClass::Rational,
            ..Self::new(omega)
        }
    }

    /// Checks the diophantine condition on `0 < |k| ≤ range` and tags the
    /// frequency as verified, or fails with the worst offender.
    pub fn diophantine(omega: T, constant: T, range: u64) -> Result<Self> {
        let f = Self {
            omega: mod1(omega),
            dc_constant: constant,
            dc_range: range,
            class: FrequencyClass::Untagged,
        };
        let report = check_dc(&f)?;
        if !report.holds {
            return Err(Error::InvalidInput(format!(
                "omega = {} fails the diophantine condition at k = {} (k²‖kω‖ = {:e} ≤ c = {})",
                omega, report.worst_k, report.worst_margin.as_f64(), constant
            )));
        }
        Ok(Self {
            class: FrequencyClass::Diophantine,
            ..f
        })
    }

    /// The golden-mean frequency `(√5 − 1)/2`, verified with the defaults.
    pub fn golden() -> Self {
        let omega = (T::lit(5.0).sqrt() - T::one()) / T::two();
        Self::diophantine(omega, T::lit(DEFAULT_DC_CONSTANT), DEFAULT_DC_RANGE)
            .expect("golden mean is diophantine")
    }
}

/// Singularity guard tolerance `τ_sing`, shared by every assembly routine.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Guard<T> {
    pub tau: T,
}

impl<T: Real> Default for Guard<T> {
    fn default() -> Self {
        Self { tau: T::lit(1e-8) }
    }
}

impl<T: Real> Guard<T> {
    pub fn new(tau: T) -> Self {
        Self { tau }
    }

    /// A guard that only rejects the pole itself.
    pub fn relaxed() -> Self {
        Self { tau: T::zero() }
    }
}

/// Orbit segment `{Tᵐ x : m ∈ range}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OrbitSpec<T> {
    pub start: TorusPoint<T>,
    pub freq: Frequency<T>,
    pub range: Window,
}

impl<T: Real> OrbitSpec<T> {
    pub fn new(start: TorusPoint<T>, freq: Frequency<T>, range: Window) -> Self {
        Self { start, freq, range }
    }

    /// Verifies the singularity condition on the whole range.
    pub fn check_guard(&self, guard: Guard<T>) -> Result<()> {
        let mut orbit = Orbit::starting_at(self.start, self.freq, self.range.lo);
        for m in self.range.sites() {
            let p = orbit.next_point();
            let d = dist_to_int(p.x1 - T::half());
            if d < guard.tau || d == T::zero() {
                return Err(Error::SingularityGuard {
                    site: m,
                    distance: d.as_f64(),
                    tolerance: guard.tau.as_f64(),
                });
            }
        }
        Ok(())
    }
}

/// One application of the skew shift.
pub fn step<T: Real>(p: TorusPoint<T>, freq: &Frequency<T>) -> TorusPoint<T> {
    TorusPoint::new(p.x1 + p.x2, p.x2 + freq.omega)
}

fn iterate_twofold<T: Real>(p: TorusPoint<T>, omega: T, m: i64) -> (TwoFold<T>, TwoFold<T>) {
    let m = m as i128;
    let tri = m * (m - 1) / 2;
    let x1 = int_times_mod1(m, p.x2)
        .add(int_times_mod1(tri, omega))
        .add_scalar(p.x1)
        .mod1();
    let x2 = int_times_mod1(m, omega).add_scalar(p.x2).mod1();
    (x1, x2)
}

/// `Tᵐ p` from the closed form; valid for negative `m`.
pub fn iterate_closed<T: Real>(p: TorusPoint<T>, freq: &Frequency<T>, m: i64) -> TorusPoint<T> {
    let (x1, x2) = iterate_twofold(p, freq.omega, m);
    TorusPoint {
        x1: x1.to_unit(),
        x2: x2.to_unit(),
    }
}

/// Forward orbit carried in two-word arithmetic.
#[derive(Clone, Debug)]
pub struct Orbit<T> {
    x1: TwoFold<T>,
    x2: TwoFold<T>,
    omega: T,
}

impl<T: Real> Orbit<T> {
    pub fn new(p: TorusPoint<T>, freq: Frequency<T>) -> Self {
        Self::starting_at(p, freq, 0)
    }

    /// Orbit positioned at `Tᵐ p`.
    pub fn starting_at(p: TorusPoint<T>, freq: Frequency<T>, m: i64) -> Self {
        let (x1, x2) = iterate_twofold(p, freq.omega, m);
        Self {
            x1,
            x2,
            omega: freq.omega,
        }
    }

    pub fn current(&self) -> TorusPoint<T> {
        TorusPoint {
            x1: self.x1.to_unit(),
            x2: self.x2.to_unit(),
        }
    }

    /// Returns the current point and advances by one step.
    pub fn next_point(&mut self) -> TorusPoint<T> {
        let p = self.current();
        self.x1 = self.x1.add(self.x2).mod1();
        self.x2 = self.x2.add_scalar(self.omega).mod1();
        p
    }
}

impl<T: Real> Iterator for Orbit<T> {
    type Item = TorusPoint<T>;

    fn next(&mut self) -> Option<Self::Item> {
        Some(self.next_point())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DcReport<T> {
    pub holds: bool,
    /// Minimizer of `k² ‖kω‖` over `1 ≤ k ≤ range`.
    pub worst_k: u64,
    pub worst_margin: T,
}

/// Finite-range diophantine check `‖kω‖ > c |k|⁻²` for `0 < |k| ≤ K`.
pub fn check_dc<T: Real>(freq: &Frequency<T>) -> Result<DcReport<T>> {
    if freq.dc_range == 0 {
        return Err(Error::InvalidInput("dc_range must be at least 1".into()));
    }
    let mut worst_k = 1;
    let mut worst_margin = T::infinity();
    // ‖−kω‖ = ‖kω‖, so positive k suffice
    for k in 1..=freq.dc_range {
        let frac = int_times_mod1(k as i128, freq.omega).to_unit();
        let kf = T::from_u64(k).expect("k representable");
        let margin = dist_to_int(frac) * kf * kf;
        if margin < worst_margin {
            worst_margin = margin;
            worst_k = k;
        }
    }
    Ok(DcReport {
        holds: worst_margin > freq.dc_constant,
        worst_k,
        worst_margin,
    })
}

/// `min_{m ∈ range} ‖(Tᵐx)₁ − 1/2‖`.
pub fn singularity_distance<T: Real>(spec: &OrbitSpec<T>) -> T {
    Orbit::starting_at(spec.start, spec.freq, spec.range.lo)
        .take(spec.range.len())
        .map(|p| dist_to_int(p.x1 - T::half()))
        .fold(T::infinity(), T::min)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VisitCount<T> {
    pub count: u64,
    pub steps: u64,
    /// `count / (ε² L)`; zero when nothing was counted.
    pub ratio: T,
}

/// Counts `n ∈ {1, …, L}` with `‖Tⁿx − a‖ < ε`.
pub fn visit_count<T: Real>(
    spec: &OrbitSpec<T>,
    target: &TorusPoint<T>,
    eps: T,
    steps: u64,
) -> VisitCount<T> {
    let mut orbit = Orbit::starting_at(spec.start, spec.freq, 1);
    let mut count = 0;
    for _ in 0..steps {
        if orbit.next_point().distance(target) < eps {
            count += 1;
        }
    }
    let ratio = if count == 0 {
        T::zero()
    } else {
        T::from_u64(count).unwrap() / (eps * eps * T::from_u64(steps).unwrap())
    };
    VisitCount {
        count,
        steps,
        ratio,
    }
}
