//! One function per subcommand; each returns tables and a JSON result.

use serde_json::json;

use skewloc::diagnostics::{eigen_residual, frequency_comparison, localization_report, spectrum};
use skewloc::dynamics::{check_dc, singularity_distance, visit_count, OrbitSpec};
use skewloc::green::{
    decay_profile, domination_excess, factorize, fit_decay, green_factorized, DEFAULT_CUTOFF_FRACTION,
};
use skewloc::multiscale::{
    bad_set_measure, classify_sites, diag_smallness_measure, neumann_initial, single_site_measure, window_density,
    NormCap,
};
use skewloc::operator::assemble;
use skewloc::patching::{build_cover, patch_report, PatchOptions};
use skewloc::rotor::{evolve, growth_exponent, resonance_scan, RotorParams, RotorState};
use skewloc::scalar::{dist_to_int, int_times_mod1};
use skewloc::{Frequency64, ScaleSchedule64, TorusPoint64, Window};

use crate::config::ExperimentConfig;
use crate::output::{RunOutput, Table};
use crate::{row, CliError};

pub fn orbit(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let freq = cfg.frequency()?;
    let start = cfg.start();
    let spec = OrbitSpec::new(start, freq, Window::upto(cfg.n));
    spec.check_guard(cfg.guard())?;
    let mut t = Table::new(
        "orbit",
        &[
            ("m", "site"),
            ("x1", "first coordinate of T^m x"),
            ("x2", "second coordinate of T^m x"),
            ("pole_distance", "distance of x1 to 1/2 on the circle"),
            ("potential", "tan(pi x1)"),
        ],
    );
    for (m, p) in Window::upto(cfg.n).sites().zip(skewloc::Orbit::new(start, freq)) {
        let potential = (std::f64::consts::PI * p.x1).tan();
        t.push(row![m, p.x1, p.x2, dist_to_int(p.x1 - 0.5), potential]);
    }
    let target = TorusPoint64::new(cfg.target_x1, cfg.target_x2);
    let visits = visit_count(&spec, &target, cfg.visit_eps, cfg.visit_steps);
    Ok(RunOutput::new(json!({
        "start": start,
        "frequency": freq,
        "singularity_distance": singularity_distance(&spec),
        "visits": visits,
    }))
    .with(t))
}

pub fn dc_check(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let freq = Frequency64 {
        dc_constant: cfg.dc_constant,
        dc_range: cfg.dc_range,
        ..Frequency64::new(cfg.omega)
    };
    let report = check_dc(&freq)?;
    let mut t = Table::new(
        "dc_check",
        &[
            ("k", "denominator"),
            ("norm_k_omega", "distance of k*omega to the integers"),
            ("margin", "k^2 * norm_k_omega"),
            ("ok", "margin > c"),
        ],
    );
    let mut first_offender = None;
    for k in 1..=freq.dc_range {
        let d = dist_to_int(int_times_mod1(k as i128, freq.omega).to_unit());
        let margin = d * (k as f64) * (k as f64);
        let ok = margin > freq.dc_constant;
        if !ok && first_offender.is_none() {
            first_offender = Some(k);
        }
        t.push(row![k, d, margin, ok]);
    }
    Ok(RunOutput::new(json!({
        "omega": freq.omega,
        "c": freq.dc_constant,
        "range": freq.dc_range,
        "holds": report.holds,
        "worst_k": report.worst_k,
        "worst_margin": report.worst_margin,
        "first_offender": first_offender,
    }))
    .with(t))
}

pub fn green(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let freq = cfg.frequency()?;
    let kernel = cfg.kernel()?;
    let start = cfg.start();
    let w = Window::upto(cfg.n);
    let f = factorize(w, start, &freq, &kernel, cfg.energy);
    let (g, inv) = green_factorized(&f, cfg.condition_cap)?;
    let profile = decay_profile(&g.entries);
    let fit = fit_decay(&profile, DEFAULT_CUTOFF_FRACTION)?;
    let mut decay = Table::new(
        "green_decay",
        &[
            ("distance", "|m - n|"),
            ("max_abs", "max |G(m, n)| over pairs at this distance"),
        ],
    );
    for (d, v) in profile.iter().enumerate() {
        decay.push(row![d, *v]);
    }
    let mut out = RunOutput::new(json!({
        "start": start,
        "window": w,
        "energy": cfg.energy,
        "condition": g.condition,
        "norm_bound": g.entries.norm_bound(),
        "max_entry": g.entries.max_abs(),
        "domination_excess": domination_excess(&g.entries, &inv),
        "fit": fit,
    }))
    .with(decay);
    if cfg.matrix {
        let mut t = Table::new(
            "green_matrix",
            &[("m", "row site"), ("n", "column site"), ("re", "Re G(m, n)"), ("im", "Im G(m, n)")],
        );
        for (i, m) in w.sites().enumerate() {
            for (j, n) in w.sites().enumerate() {
                let z = g.entries[(i, j)];
                t.push(row![m, n, z.re, z.im]);
            }
        }
        out = out.with(t);
    }
    Ok(out)
}

fn c3(cfg: &ExperimentConfig) -> f64 {
    cfg.c3.unwrap_or(cfg.rho / 100.0)
}

pub fn scan_measure(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let freq = cfg.frequency()?;
    let kernel = cfg.kernel()?;
    let sampler = cfg.sampler();
    let cap = cfg.norm_cap.map_or(NormCap::SqrtExp, NormCap::Fixed);
    let mut small = Table::new(
        "scan_smallness",
        &[
            ("energy", "E"),
            ("n0", "sites 0..=n0 are tested"),
            ("eps0", "threshold on |B_mm|"),
            ("samples", "sample count"),
            ("hits", "samples with some |B_mm| < eps0"),
            ("estimate", "hits / samples"),
            ("std_err", "binomial standard error"),
            ("ci_lo", "99% Wilson lower limit"),
            ("ci_hi", "99% Wilson upper limit"),
            ("bound", "max(n0, 1) * eps0"),
            ("single_site", "(2/pi) arcsin(eps0)"),
        ],
    );
    let mut bad = Table::new(
        "scan_bad_set",
        &[
            ("energy", "E"),
            ("N", "window [0, N]"),
            ("samples", "sample count"),
            ("failures", "samples in the bad set"),
            ("empirical_measure", "failures / samples"),
            ("ci_lo", "99% Wilson lower limit"),
            ("ci_hi", "99% Wilson upper limit"),
            ("norm_cap", "cap on the norm of B^-1 at this scale"),
            ("ill_conditioned", "failures by condition cap"),
            ("norm_failures", "failures by norm cap"),
            ("decay_failures", "failures by tail rate below c3"),
        ],
    );
    let mut per_energy = Vec::new();
    for &e in &cfg.energies {
        let sm = diag_smallness_measure(e, cfg.n0, cfg.eps0, &freq, &kernel, &sampler, cfg.samples);
        small.push(row![
            e,
            sm.n0,
            sm.eps0,
            sm.measure.trials,
            sm.measure.successes,
            sm.measure.estimate,
            sm.measure.std_err,
            sm.measure.ci_lo,
            sm.measure.ci_hi,
            sm.bound,
            single_site_measure(sm.eps0),
        ]);
        let scales = bad_set_measure(e, &cfg.scales, cap, c3(cfg), &freq, &kernel, &sampler, cfg.samples);
        for s in &scales {
            bad.push(row![
                e,
                s.n,
                s.samples,
                s.failures,
                s.measure.estimate,
                s.measure.ci_lo,
                s.measure.ci_hi,
                s.norm_cap,
                s.ill_conditioned,
                s.norm_failures,
                s.decay_failures,
            ]);
        }
        let decreasing = scales.windows(2).all(|p| p[1].measure.estimate < p[0].measure.estimate);
        per_energy.push(json!({
            "energy": e,
            "smallness": sm,
            "bad_set": scales,
            "strictly_decreasing": decreasing,
        }));
    }
    Ok(RunOutput::new(json!({ "c3": c3(cfg), "norm_cap": cap, "energies": per_energy }))
        .with(small)
        .with(bad))
}

fn schedule(cfg: &ExperimentConfig) -> Result<ScaleSchedule64, CliError> {
    let mut s = ScaleSchedule64::with_scales(cfg.l0, cfg.m, cfg.n, cfg.rho);
    s.delta = cfg.delta;
    s.c3 = c3(cfg);
    if let Some(cap) = cfg.norm_cap {
        s.norm_cap = cap;
    }
    s.validate(cfg.rho).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(s)
}

pub fn multiscale(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let freq = cfg.frequency()?;
    let kernel = cfg.kernel()?;
    let sched = schedule(cfg)?;
    let start = cfg.start();
    let cls = classify_sites(start, &freq, &kernel, cfg.energy, &sched)?;
    let minlen = cfg.minlen.unwrap_or_else(|| sched.default_minlen());
    let density = window_density(&cls, minlen, sched.delta)?;
    let neumann = if kernel.eps < cfg.eps0 {
        Some(neumann_initial(sched.l0, start, &freq, &kernel, cfg.energy, cfg.eps0)?)
    } else {
        None
    };
    let mut t = Table::new(
        "multiscale_sites",
        &[
            ("site", "n0, centre of the window [n0 - M/2, n0 + M/2]"),
            ("norm", "sqrt(|B^-1|_1 |B^-1|_inf) on the window"),
            ("decay", "pointwise off-diagonal rate beyond M/10"),
            ("good", "both bounds hold"),
            ("failure", "reason for a bad verdict, empty if good"),
        ],
    );
    for v in &cls.verdicts {
        let failure = v.failure.map_or(String::new(), |f| {
            serde_json::to_value(f).unwrap().as_str().unwrap_or_default().to_string()
        });
        t.push(row![v.site, v.norm, v.decay, v.good(), failure.as_str()]);
    }
    Ok(RunOutput::new(json!({
        "start": start,
        "schedule": sched,
        "classified": cls.verdicts.len(),
        "bad": cls.bad.len(),
        "bad_fraction": cls.bad_fraction(),
        "minlen": minlen,
        "density": density,
        "neumann": neumann,
    }))
    .with(t))
}

pub fn patch(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let freq = cfg.frequency()?;
    let kernel = cfg.kernel()?;
    let start = cfg.start();
    let cover = build_cover(Window::upto(cfg.n), cfg.m)?;
    let mut opts = PatchOptions::standard(cfg.m, cfg.rho);
    opts.condition_cap = cfg.condition_cap;
    if let Some(cap) = cfg.norm_cap {
        opts.norm_cap = cap;
    }
    if let Some(c) = cfg.c3 {
        opts.sub_rate = c;
    }
    let report = patch_report(&cover, start, &freq, &kernel, cfg.energy, cfg.rho, &opts, cfg.guard())?;
    let mut t = Table::new(
        "patch_windows",
        &[
            ("lo", "first site of the sub-window"),
            ("hi", "last site of the sub-window"),
            ("norm", "sqrt(|G|_1 |G|_inf)"),
            ("rate", "pointwise decay beyond M/10"),
            ("norm_ok", "norm within the cap"),
            ("rate_ok", "rate at least the sub-window threshold"),
        ],
    );
    for h in &report.hypotheses {
        t.push(row![h.window.lo, h.window.hi, h.norm, h.rate, h.norm_ok, h.rate_ok]);
    }
    let c = &report.conclusion;
    Ok(RunOutput::new(json!({
        "start": start,
        "options": opts,
        "hypotheses": report.hypotheses,
        "hypotheses_hold": report.hypotheses_hold(),
        "failed_windows": report.failed_windows(),
        "contraction": report.contraction,
        "measured_contraction": report.measured_contraction,
        "conclusion": { "c3": c.c3_holds, "c4": c.c4_holds, "detail": c },
        "margins": {
            "near": report.contraction.near_margin,
            "far": report.contraction.far_margin,
            "c3_log": c.entry_bound.ln() - c.max_entry.ln(),
            "c4": c.pointwise_rate - opts.full_rate,
        },
    }))
    .with(t))
}

pub fn eig(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let freq = cfg.frequency()?;
    let kernel = cfg.kernel()?;
    let start = cfg.start();
    let w = Window::upto(cfg.n);
    let op = assemble(w, start, &freq, &kernel, cfg.guard())?;
    let pairs = spectrum(&op)?;
    let report = localization_report(w, &pairs);
    let mut t = Table::new(
        "eig_pairs",
        &[
            ("index", "eigenvalue rank, ascending"),
            ("eigenvalue", "lambda"),
            ("center", "site of the largest amplitude"),
            ("rate", "fitted tail rate around the center"),
            ("residual", "|H v - lambda v|"),
            ("fit_residual", "rms residual of the tail fit"),
            ("ipr", "sum |v_j|^4"),
        ],
    );
    for (s, p) in report.pairs.iter().zip(&pairs) {
        t.push(row![
            s.index,
            s.eigenvalue,
            s.center,
            s.rate,
            eigen_residual(&op.entries, p),
            s.fit_residual,
            s.ipr
        ]);
    }
    let mut out_rows = Vec::new();
    let mut ft = Table::new(
        "eig_frequencies",
        &[
            ("omega", "frequency"),
            ("class", "diophantine, rational or untagged"),
            ("samples", "starting points solved"),
            ("rejected", "starting points refused by the guard or diagonal limit"),
            ("median_rate", "median eigenvector tail rate"),
            ("median_ipr", "median inverse participation ratio"),
            ("rate_q10", "10% quantile of the rate"),
            ("rate_q90", "90% quantile of the rate"),
            ("ipr_q10", "10% quantile of the ipr"),
            ("ipr_q90", "90% quantile of the ipr"),
        ],
    );
    if !cfg.compare.is_empty() {
        let mut freqs = vec![freq];
        freqs.extend(cfg.compare.iter().map(|&o| Frequency64::rational(o)));
        // x₂ = 0 makes the rational-ω potential periodic in m
        let starts: Vec<TorusPoint64> = cfg
            .sampler()
            .unit_pairs(cfg.compare_samples)
            .into_iter()
            .map(|(u, _)| TorusPoint64::new(u, 0.0))
            .collect();
        for r in frequency_comparison(&freqs, &starts, w, &kernel, cfg.guard()) {
            let class = serde_json::to_value(r.class).unwrap();
            ft.push(row![
                r.omega,
                class.as_str().unwrap_or_default(),
                r.samples,
                r.rejected,
                r.median_rate,
                r.median_ipr,
                r.rate.q10,
                r.rate.q90,
                r.ipr.q10,
                r.ipr.q90
            ]);
            out_rows.push(r);
        }
    }
    let mut out = RunOutput::new(json!({
        "start": start,
        "window": w,
        "rate": report.rate,
        "ipr": report.ipr,
        "localization_length": report.localization_length,
        "comparison": out_rows,
    }))
    .with(t);
    if !cfg.compare.is_empty() {
        out = out.with(ft);
    }
    Ok(out)
}

pub fn rotor(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let params = RotorParams {
        order: cfg.order,
        route: cfg.route,
        ..RotorParams::new(cfg.a, cfg.b, cfg.kappa)
    };
    let (_, series) = evolve(RotorState::ground(cfg.n_max), &params, cfg.steps)?;
    let mut t = Table::new(
        "rotor_series",
        &[
            ("t", "kick count"),
            ("n2", "<n^2>"),
            ("norm", "sum |psi(n)|^2"),
            ("leakage", "max of |psi(-n_max)|^2 and |psi(n_max)|^2"),
        ],
    );
    for o in &series {
        t.push(row![o.t, o.n2, o.norm, o.leakage]);
    }
    let (gamma, fit_residual) = growth_exponent(&series);
    let drift = series.iter().map(|o| (o.norm - 1.0).abs()).fold(0.0, f64::max);
    let scan = resonance_scan(&cfg.a_values, cfg.b, cfg.kappa, cfg.steps, cfg.n_max, cfg.order)?;
    let mut st = Table::new(
        "rotor_scan",
        &[
            ("a", "kinetic coefficient"),
            ("gamma", "growth exponent of <n^2> ~ t^gamma"),
            ("fit_residual", "rms residual of the log-log fit"),
            ("final_n2", "<n^2> after the last kick"),
            ("max_leakage", "largest boundary weight seen"),
            ("norm_drift", "largest |norm - 1| seen"),
        ],
    );
    for r in &scan {
        st.push(row![r.a, r.gamma, r.fit_residual, r.final_n2, r.max_leakage, r.norm_drift]);
    }
    Ok(RunOutput::new(json!({
        "params": params,
        "gamma": gamma,
        "fit_residual": fit_residual,
        "final": series.last(),
        "norm_drift": drift,
        "scan": scan,
    }))
    .with(t)
    .with(st))
}
