//! Quantum kicked rotor in momentum space.
//!
//! One Floquet period is `W = e^{i(a d²/dx² + i b d/dx)} e^{iκ cos 2πx}`;
//! by default the kick acts first, then the kinetic phases.

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::ordered_map;
use crate::scalar::{Real, C};

/// Boundary weight above which a run is rejected.
pub const LEAKAGE_LIMIT: f64 = 1e-12;
pub const DEFAULT_N_MAX: usize = 1024;

/// `e^{i(−4π²an² − 2πbn)}`, evaluated as a reduced number of turns.
pub fn kinetic_phase<T: Real>(n: i64, a: T, b: T) -> C<T> {
    let nf = T::from_i64_exact(n);
    // θ/2π = −2πa n² − b n
    let turns = -(T::two() * T::PI() * a * nf * nf).fract() - (b * nf).fract();
    C::from_polar(T::one(), T::two() * T::PI() * turns)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepOrder {
    /// Kick, then kinetic phases.
    KickFirst,
    KineticFirst,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KickRoute {
    /// Multiply on a position grid of `4·n_max` points.
    Grid,
    /// Convolve with the Jacobi–Anger coefficients `iᵏ J_k(κ)`.
    Bessel,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RotorParams<T> {
    pub a: T,
    pub b: T,
    pub kappa: T,
    pub order: StepOrder,
    pub route: KickRoute,
}

impl<T: Real> RotorParams<T> {
    pub fn new(a: T, b: T, kappa: T) -> Self {
        Self {
            a,
            b,
            kappa,
            order: StepOrder::KickFirst,
            route: KickRoute::Grid,
        }
    }
}

/// Amplitudes `ψ̂(n)`, `|n| ≤ n_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct RotorState<T> {
    coeffs: Vec<C<T>>,
    n_max: usize,
    pub t: usize,
}

impl<T: Real> RotorState<T> {
    /// `ψ̂(n) = δ_{n0}`.
    pub fn ground(n_max: usize) -> Self {
        let mut coeffs = vec![C::new(T::zero(), T::zero()); 2 * n_max + 1];
        coeffs[n_max] = C::new(T::one(), T::zero());
        Self { coeffs, n_max, t: 0 }
    }

    pub fn from_coeffs(coeffs: Vec<C<T>>) -> Result<Self> {
        if coeffs.len() % 2 == 0 {
            return Err(Error::InvalidInput("rotor state needs 2·n_max + 1 amplitudes".into()));
        }
        let n_max = coeffs.len() / 2;
        Ok(Self { coeffs, n_max, t: 0 })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn coeffs(&self) -> &[C<T>] {
        &self.coeffs
    }

    pub fn amplitude(&self, n: i64) -> C<T> {
        self.coeffs[(n + self.n_max as i64) as usize]
    }

    pub fn momenta(&self) -> impl Iterator<Item = i64> {
        let m = self.n_max as i64;
        -m..=m
    }

    pub fn norm_sqr(&self) -> T {
        self.coeffs.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `Σ n² |ψ̂(n)|²`.
    pub fn second_moment(&self) -> T {
        self.momenta()
            .zip(&self.coeffs)
            .map(|(n, z)| T::from_i64_exact(n * n) * z.norm_sqr())
            .sum()
    }

    /// `max(|ψ̂(−n_max)|², |ψ̂(n_max)|²)`.
    pub fn leakage(&self) -> T {
        self.coeffs[0].norm_sqr().max(self.coeffs[2 * self.n_max].norm_sqr())
    }

    /// Same state embedded with a larger cutoff.
    pub fn widened(&self, n_max: usize) -> Self {
        assert!(n_max >= self.n_max);
        let mut coeffs = vec![C::new(T::zero(), T::zero()); 2 * n_max + 1];
        let off = n_max - self.n_max;
        coeffs[off..off + self.coeffs.len()].copy_from_slice(&self.coeffs);
        Self { coeffs, n_max, t: self.t }
    }
}

/// `J_k(κ)` for `k = 0..=k_max` by Miller's backward recurrence.
pub fn bessel_j<T: Real>(kappa: T, k_max: usize) -> Vec<T> {
    let mut out = vec![T::zero(); k_max + 1];
    let x = kappa.abs();
    if x == T::zero() {
        out[0] = T::one();
        return out;
    }
    let reach = k_max.max(x.to_usize().unwrap_or(0));
    let mut start = reach + 20 + (40.0 * (reach.max(1) as f64)).sqrt() as usize;
    start += start % 2;
    let big = T::lit(1e250);
    let mut jp1 = T::zero();
    let mut j = T::lit(1e-300);
    let mut even_sum = T::zero();
    let mut vals = vec![T::zero(); start + 1];
    vals[start] = j;
    for k in (1..=start).rev() {
        let jm1 = T::from_len(2 * k) / x * j - jp1;
        jp1 = j;
        j = jm1;
        vals[k - 1] = j;
        if j.abs() > big {
            for v in vals[k - 1..].iter_mut() {
                *v = *v / big;
            }
            j = j / big;
            jp1 = jp1 / big;
        }
    }
    for k in (2..=start).step_by(2) {
        even_sum = even_sum + vals[k];
    }
    let norm = vals[0] + T::two() * even_sum;
    for k in 0..=k_max {
        let v = vals[k] / norm;
        // J_k(−κ) = (−1)^k J_k(κ)
        out[k] = if kappa < T::zero() && k % 2 == 1 { -v } else { v };
    }
    out
}

/// Reusable workspace for kicks and steps.
pub struct Propagator<T: Real> {
    params: RotorParams<T>,
    n_max: usize,
    grid: usize,
    fwd: Arc<dyn Fft<T>>,
    inv: Arc<dyn Fft<T>>,
    kick_phase: Vec<C<T>>,
    kinetic: Vec<C<T>>,
    bessel: Vec<C<T>>,
    buf: Vec<C<T>>,
    scratch: Vec<C<T>>,
}

impl<T: Real> Propagator<T> {
    pub fn new(params: RotorParams<T>, n_max: usize) -> Self {
        let grid = 4 * n_max.max(1);
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(grid);
        let inv = planner.plan_fft_inverse(grid);
        let two_pi = T::two() * T::PI();
        let kick_phase = (0..grid)
            .map(|j| {
                let c = (two_pi * T::from_len(j) / T::from_len(grid)).cos();
                C::from_polar(T::one(), params.kappa * c)
            })
            .collect();
        let m = n_max as i64;
        let kinetic = (-m..=m).map(|n| kinetic_phase(n, params.a, params.b)).collect();
        let k_max = (2 * n_max).min(params.kappa.abs().to_usize().unwrap_or(0) + 80);
        let i_pow = [C::new(T::one(), T::zero()), C::new(T::zero(), T::one()), C::new(-T::one(), T::zero()), C::new(T::zero(), -T::one())];
        let bessel = bessel_j(params.kappa, k_max)
            .into_iter()
            .enumerate()
            .map(|(k, j)| i_pow[k % 4].scale(j))
            .collect();
        let scratch_len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        Self {
            params,
            n_max,
            grid,
            fwd,
            inv,
            kick_phase,
            kinetic,
            bessel,
            buf: vec![C::new(T::zero(), T::zero()); grid],
            scratch: vec![C::new(T::zero(), T::zero()); scratch_len],
        }
    }

    pub fn params(&self) -> &RotorParams<T> {
        &self.params
    }

    /// Multiplication by `e^{iκ cos 2πx}` (by `e^{−iκ cos 2πx}` when `inverse`).
    pub fn kick(&mut self, state: &mut RotorState<T>, inverse: bool) {
        assert_eq!(state.n_max, self.n_max);
        if self.params.kappa == T::zero() {
            return;
        }
        match self.params.route {
            KickRoute::Grid => self.kick_grid(state, inverse),
            KickRoute::Bessel => self.kick_bessel(state, inverse),
        }
    }

    fn kick_grid(&mut self, state: &mut RotorState<T>, inverse: bool) {
        let g = self.grid;
        let m = self.n_max as i64;
        self.buf.iter_mut().for_each(|z| *z = C::new(T::zero(), T::zero()));
        for (n, &z) in (-m..=m).zip(&state.coeffs) {
            self.buf[n.rem_euclid(g as i64) as usize] = z;
        }
        self.inv.process_with_scratch(&mut self.buf, &mut self.scratch);
        for (z, &p) in self.buf.iter_mut().zip(&self.kick_phase) {
            *z = *z * if inverse { p.conj() } else { p };
        }
        self.fwd.process_with_scratch(&mut self.buf, &mut self.scratch);
        let scale = T::from_len(g);
        for (n, z) in (-m..=m).zip(state.coeffs.iter_mut()) {
            *z = self.buf[n.rem_euclid(g as i64) as usize].unscale(scale);
        }
    }

    fn kick_bessel(&mut self, state: &mut RotorState<T>, inverse: bool) {
        let len = state.coeffs.len();
        let kb = self.bessel.len() as i64 - 1;
        let coeff = |k: i64| {
            let c = self.bessel[k.unsigned_abs() as usize];
            // conjugate multiplier: coefficients of e^{−iκcos} are conj(c_{−k}) = conj(c_k)
            if inverse {
                c.conj()
            } else {
                c
            }
        };
        let old = state.coeffs.clone();
        for i in 0..len as i64 {
            let mut s = C::new(T::zero(), T::zero());
            for k in (-kb).max(i - len as i64 + 1)..=kb.min(i) {
                s = s + coeff(k) * old[(i - k) as usize];
            }
            state.coeffs[i as usize] = s;
        }
    }

    fn kinetic(&self, state: &mut RotorState<T>, inverse: bool) {
        for (z, &p) in state.coeffs.iter_mut().zip(&self.kinetic) {
            *z = *z * if inverse { p.conj() } else { p };
        }
    }

    /// One application of `W`.
    pub fn step(&mut self, state: &mut RotorState<T>) {
        match self.params.order {
            StepOrder::KickFirst => {
                self.kick(state, false);
                self.kinetic(state, false);
            }
            StepOrder::KineticFirst => {
                self.kinetic(state, false);
                self.kick(state, false);
            }
        }
        state.t += 1;
    }

    /// One application of `W⁻¹`.
    pub fn step_back(&mut self, state: &mut RotorState<T>) {
        match self.params.order {
            StepOrder::KickFirst => {
                self.kinetic(state, true);
                self.kick(state, true);
            }
            StepOrder::KineticFirst => {
                self.kick(state, true);
                self.kinetic(state, true);
            }
        }
        state.t = state.t.saturating_sub(1);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Observation {
    pub t: usize,
    /// `⟨n²⟩`.
    pub n2: f64,
    pub norm: f64,
    pub leakage: f64,
}

fn observe<T: Real>(s: &RotorState<T>) -> Observation {
    Observation {
        t: s.t,
        n2: s.second_moment().as_f64(),
        norm: s.norm_sqr().as_f64(),
        leakage: s.leakage().as_f64(),
    }
}

/// Applies `W` `steps` times, recording observables at every kick count
/// including the initial one.
pub fn evolve<T: Real>(
    state: RotorState<T>,
    params: &RotorParams<T>,
    steps: usize,
) -> Result<(RotorState<T>, Vec<Observation>)> {
    let mut prop = Propagator::new(*params, state.n_max);
    let mut s = state;
    let mut series = Vec::with_capacity(steps + 1);
    series.push(observe(&s));
    for _ in 0..steps {
        prop.step(&mut s);
        let obs = observe(&s);
        if !(obs.leakage < LEAKAGE_LIMIT) {
            return Err(Error::TruncationBreach {
                step: s.t,
                leakage: obs.leakage,
            });
        }
        series.push(obs);
    }
    Ok((s, series))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScanRow {
    pub a: f64,
    /// Growth exponent of `⟨n²⟩(t) ~ t^γ`.
    pub gamma: f64,
    pub fit_residual: f64,
    pub final_n2: f64,
    pub max_leakage: f64,
    pub norm_drift: f64,
}

/// Least-squares slope of `log ⟨n²⟩` against `log t` over
/// `t ∈ [⌈steps/10⌉, steps]`. A series constant to rounding has `γ = 0`.
pub fn growth_exponent(series: &[Observation]) -> (f64, f64) {
    let steps = series.last().map_or(0, |o| o.t);
    let first = steps.div_ceil(10).max(1);
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|o| o.t >= first && o.n2 > 0.0)
        .map(|o| ((o.t as f64).ln(), o.n2.ln()))
        .collect();
    let (lo, hi) = series
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), o| (lo.min(o.n2), hi.max(o.n2)));
    if pts.len() < 2 || hi - lo <= 1e-12 * hi.abs() {
        return (0.0, 0.0);
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let sse: f64 = pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
    (slope, (sse / n).sqrt())
}

/// Runs one evolution from the ground state per value of `a`.
pub fn resonance_scan<T: Real>(
    a_values: &[T],
    b: T,
    kappa: T,
    steps: usize,
    n_max: usize,
    order: StepOrder,
) -> Result<Vec<ScanRow>> {
    let rows = ordered_map(a_values, |_, &a| {
        let params = RotorParams {
            order,
            ..RotorParams::new(a, b, kappa)
        };
        let (_, series) = evolve(RotorState::ground(n_max), &params, steps)?;
        let (gamma, fit_residual) = growth_exponent(&series);
        let last = series.last().copied().expect("series has the initial point");
        Ok(ScanRow {
            a: a.as_f64(),
            gamma,
            fit_residual,
            final_n2: last.n2,
            max_leakage: series.iter().map(|o| o.leakage).fold(0.0, f64::max),
            norm_drift: series.iter().map(|o| (o.norm - 1.0).abs()).fold(0.0, f64::max),
        })
    });
    rows.into_iter().collect()
}

/// `a = 1/(2π)` and `a = 1/π`: kinetic phases are identically 1.
pub fn resonant_values() -> [f64; 2] {
    [1.0 / (2.0 * std::f64::consts::PI), 1.0 / std::f64::consts::PI]
}

/// Values with irrational `4πa`.
pub fn generic_values() -> [f64; 3] {
    let four_pi = 4.0 * std::f64::consts::PI;
    [
        (5f64.sqrt() - 1.0) / 2.0 / four_pi,
        2f64.sqrt() / four_pi,
        (3f64.sqrt() - 1.0) / four_pi,
    ]
}
