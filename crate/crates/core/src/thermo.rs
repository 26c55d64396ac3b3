//! Thermodynamic bookkeeping for driven runs.
//!
//! Heat is computed twice on every Fock-backend run: once from the energy
//! balance (its definition) and once from the interaction-picture cocycle,
//!
//! `Q_T = Tr(ρ_0 · [H_1 − Σ_λ μ_λ N_λ^{(1)}, Γ_T] Γ_T†)`,
//!
//! which is the theorem being checked. The sign/prefactor of the cocycle
//! form was fixed once against the balance form on a reference model (see
//! `COCYCLE_HEAT_SIGN` and the calibration test) and is frozen here.

use crate::error::{CoreError, Result};
use crate::evolve::{DrivenHamiltonian, PropagatorTrace};
use crate::fock::ModelSpec;
use crate::linalg::{
    commutator, dagger, eigh, max_abs_diff, trace_pair, CMat, DensityMatrix,
    HermitianOperator, C64,
};
use crate::numeric;

/// Calibrated prefactor of the cocycle heat formula.
pub const COCYCLE_HEAT_SIGN: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Fock,
    Quadratic,
}

/// Accumulated thermodynamic quantities for one protocol run.
#[derive(Debug, Clone)]
pub struct ThermoLedger {
    /// Mass-flow energy `Σ_λ μ_λ Δ⟨N_λ^S⟩`.
    pub z_t: f64,
    /// Work `∫ ⟨dW/dt⟩ dt`.
    pub w_t: f64,
    /// Heat from the balance definition.
    pub q_balance: f64,
    /// Heat from the cocycle formula (Fock backend only).
    pub q_cocycle: Option<f64>,
    /// `Δ⟨W(T)⊗1 + κV⟩`, kept so the first law closes by construction.
    pub delta_e_system: f64,
    /// Step boundaries of the drive during the run.
    pub stage_bounds: Vec<f64>,
    /// Quadrature + propagation error estimate.
    pub numeric_error: f64,
    pub backend: BackendKind,
}

impl ThermoLedger {
    /// First-law residual `ΔE_S − (W_T + Q_T + Z_T)`; zero by construction
    /// up to floating-point roundoff.
    pub fn first_law_residual(&self) -> f64 {
        self.delta_e_system - (self.w_t + self.q_balance + self.z_t)
    }

    /// Cross-formula disagreement, when both heats are available.
    pub fn heat_disagreement(&self) -> Option<f64> {
        self.q_cocycle.map(|qc| (self.q_balance - qc).abs())
    }
}

/// Work integral over the drive, evaluated on the trace's ramp grids by
/// composite Simpson with a coarse/fine Richardson error estimate.
///
/// `dW/dt` vanishes on waits, so only ramp segments contribute.
pub fn work_integral(
    driven: &DrivenHamiltonian,
    trace: &PropagatorTrace,
    rho0: &DensityMatrix,
    t_end: f64,
) -> Result<(f64, f64)> {
    let mut total = 0.0;
    let mut err = 0.0;
    for seg in crate::evolve::clip_segments(driven.schedule, t_end) {
        if !seg.is_ramp {
            continue;
        }
        let idx: Vec<usize> = trace
            .times
            .iter()
            .enumerate()
            .filter(|(_, &t)| t >= seg.start - 1e-12 && t <= seg.end + 1e-12)
            .map(|(i, _)| i)
            .collect();
        if idx.len() < 3 || !(idx.len() - 1).is_multiple_of(2) {
            return Err(CoreError::numerical(format!(
                "ramp [{}, {}] grid unsuitable for Simpson ({} points)",
                seg.start,
                seg.end,
                idx.len()
            )));
        }
        let f: Vec<f64> = idx
            .iter()
            .map(|&i| {
                let u = &trace.mats[i];
                let rho_t = u.dot(rho0.entries()).dot(&dagger(u));
                trace_pair(&rho_t, &driven.dw_dt_full(trace.times[i])).re
            })
            .collect();
        let h = (seg.end - seg.start) / (idx.len() - 1) as f64;
        let fine = simpson_uniform(&f, h);
        // Half-resolution Simpson for the error estimate.
        let coarse_pts: Vec<f64> = f.iter().step_by(2).copied().collect();
        let coarse = if coarse_pts.len() >= 3 && (coarse_pts.len() - 1).is_multiple_of(2) {
            simpson_uniform(&coarse_pts, 2.0 * h)
        } else {
            fine
        };
        total += fine;
        err += (fine - coarse).abs() / 15.0;
    }
    Ok((total, err))
}

fn simpson_uniform(f: &[f64], h: f64) -> f64 {
    let n = f.len() - 1;
    debug_assert!(n >= 2 && n.is_multiple_of(2));
    let mut acc = f[0] + f[n];
    for (k, &v) in f.iter().enumerate().take(n).skip(1) {
        acc += if k % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    acc * h / 3.0
}

/// Heat by its defining balance:
/// `Q_T = Δ⟨W(T)⊗1 + κV⟩ − W_T − Z_T`, with
/// `Z_T = Σ_λ μ_λ Δ⟨N_λ^S⟩`.
///
/// Returns `(q_balance, z_t, delta_e_system)`.
pub fn heat_by_balance(
    driven: &DrivenHamiltonian,
    rho0: &DensityMatrix,
    rho_t: &CMat,
    w_t: f64,
    t_end: f64,
) -> (f64, f64, f64) {
    let model = driven.model;
    let kv = model.v.mapv(|x| x * C64::new(model.kappa, 0.0));
    let obs_start = model.embed_system(&driven.w_folded_s(0.0)) + &kv;
    let obs_end = model.embed_system(&driven.w_folded_s(t_end)) + &kv;
    let delta_e = trace_pair(rho_t, &obs_end).re - rho0.expect(&obs_start);

    let mut z_t = 0.0;
    for (lam, &mu) in model.mu[0].iter().enumerate() {
        if mu != 0.0 {
            let n_s = &model.n_system[lam];
            z_t += mu * (trace_pair(rho_t, n_s).re - rho0.expect(n_s));
        }
    }
    (delta_e - w_t - z_t, z_t, delta_e)
}

/// Heat from the cocycle formula (single-reservoir models).
pub fn heat_by_cocycle(model: &ModelSpec, rho0: &DensityMatrix, gamma_t: &CMat) -> Result<f64> {
    if model.reservoir_count() != 1 {
        return Err(CoreError::Config("cocycle heat needs a single reservoir".into()));
    }
    let mut r = model.h_reservoir[0].clone();
    for (lam, &mu) in model.mu[0].iter().enumerate() {
        if mu != 0.0 {
            r = r - model.n_reservoir[0][lam].mapv(|x| x * C64::new(mu, 0.0));
        }
    }
    let val = trace_pair(rho0.entries(), &commutator(&r, gamma_t).dot(&dagger(gamma_t)));
    if val.im.abs() > 1e-6 * val.re.abs().max(1.0) {
        return Err(CoreError::Consistency(format!(
            "cocycle heat has a non-real value: {val}"
        )));
    }
    Ok(COCYCLE_HEAT_SIGN * val.re)
}

/// Heat-current operators `J_j^q = κ(−i[H_j, V] + Σ_λ μ_λ^{(j)} i[N_λ^{(j)}, V])`,
/// one per reservoir; each is Hermitian.
pub fn heat_current_ops(model: &ModelSpec) -> Result<Vec<HermitianOperator>> {
    let i = C64::new(0.0, 1.0);
    let mut out = Vec::with_capacity(model.reservoir_count());
    for j in 0..model.reservoir_count() {
        let mut op = commutator(&model.h_reservoir[j], &model.v).mapv(|x| -i * x);
        for (lam, &mu) in model.mu[j].iter().enumerate() {
            if mu != 0.0 {
                op = op + commutator(&model.n_reservoir[j][lam], &model.v).mapv(|x| i * mu * x);
            }
        }
        out.push(HermitianOperator::from_hermitized(
            op.mapv(|x| x * C64::new(model.kappa, 0.0)),
        )?);
    }
    Ok(out)
}

/// `Σ_j β_j J_j^q`: the steady-state average of this operator is the
/// entropy production rate.
pub fn entropy_production_op(model: &ModelSpec) -> Result<HermitianOperator> {
    let dim = model.dim();
    let mut acc = CMat::zeros((dim, dim));
    for (j, current) in heat_current_ops(model)?.into_iter().enumerate() {
        acc = acc + current.entries().mapv(|x| x * C64::new(model.beta[j], 0.0));
    }
    HermitianOperator::from_hermitized(acc)
}

/// Operator identity behind the MacLennan–Zubarev ensemble, checked at the
/// matrix level: conjugating `Σ_j β_j (H_j − Σ_λ μ_λ N_λ^{(j)})` backwards
/// in time equals the same operator minus the time integral of the evolved
/// entropy-production operator,
///
/// `τ_{−t}(X) = X − ∫_{−t}^0 τ_s(Σ_j β_j J_j^q) ds`.
///
/// The left side uses the exact propagator; the right side integrates the
/// conjugated current by composite Gauss–Legendre panels refined until the
/// quadrature self-difference falls below `qtol`. Returns the max-entry
/// residual between the two sides.
pub fn maclennan_zubarev_identity(
    model: &ModelSpec,
    w_s: &CMat,
    t: f64,
    qtol: f64,
) -> Result<f64> {
    let s_modes: Vec<usize> = (0..model.layout.system_mode_count()).collect();
    let s_basis = crate::fock::OperatorBasis::with_modes(s_modes.len());
    let w_full = model.embed_system(&s_basis.quadratic_form(w_s, &s_modes));
    let h_full = model.h_total_undriven() + w_full;
    let spec = eigh(&HermitianOperator::from_hermitized(h_full)?)?;
    let q = &spec.eigenvectors;

    let dim = model.dim();
    let mut x = CMat::zeros((dim, dim));
    for j in 0..model.reservoir_count() {
        let mut term = model.h_reservoir[j].clone();
        for (lam, &mu) in model.mu[j].iter().enumerate() {
            term = term - model.n_reservoir[j][lam].mapv(|v| v * C64::new(mu, 0.0));
        }
        x = x + term.mapv(|v| v * C64::new(model.beta[j], 0.0));
    }

    // τ_s(A) = Q (Ã ∘ e^{i(λ_r−λ_c)s}) Q†, evaluated in the eigenbasis.
    let conj_in = |a: &CMat| dagger(q).dot(a).dot(q);
    let conj_out = |a: &CMat| q.dot(a).dot(&dagger(q));
    let phase_apply = |a_tilde: &CMat, s: f64| -> CMat {
        let mut out = a_tilde.clone();
        for r in 0..dim {
            for c in 0..dim {
                out[[r, c]] *= C64::new(0.0, (spec.eigenvalues[r] - spec.eigenvalues[c]) * s).exp();
            }
        }
        out
    };

    let x_tilde = conj_in(&x);
    let lhs = conj_out(&phase_apply(&x_tilde, -t));

    let e_tilde = conj_in(entropy_production_op(model)?.entries());
    let integral_tilde = |panels: usize| -> CMat {
        let mut acc = CMat::zeros((dim, dim));
        let h = t / panels as f64;
        for p in 0..panels {
            let a = -t + p as f64 * h;
            for (node, weight) in numeric::scale_rule(numeric::gl16(), a, a + h) {
                acc = acc + phase_apply(&e_tilde, node).mapv(|v| v * C64::new(weight, 0.0));
            }
        }
        acc
    };

    let spread = spec.eigenvalues[dim - 1] - spec.eigenvalues[0];
    let mut panels = ((t * spread / 6.0).ceil() as usize).clamp(1, 64);
    let mut coarse = integral_tilde(panels);
    loop {
        panels *= 2;
        let fine = integral_tilde(panels);
        let diff = max_abs_diff(&coarse, &fine);
        if diff <= qtol {
            coarse = fine;
            break;
        }
        if panels > 4096 {
            return Err(CoreError::numerical(format!(
                "quadrature for the ensemble identity stalled at {diff:.3e} (target {qtol:.1e})"
            )));
        }
        coarse = fine;
    }
    let rhs = &x - &conj_out(&coarse);
    Ok(max_abs_diff(&lhs, &rhs))
}

/// Expectations of the weighted current `Σ_j β_j J_j^q` along the autonomous
/// evolution from `ρ_0`, sampled on `grid`.
pub fn weighted_current_samples(
    model: &ModelSpec,
    w_s: &CMat,
    rho0: &DensityMatrix,
    grid: &[f64],
) -> Result<Vec<f64>> {
    let s_modes: Vec<usize> = (0..model.layout.system_mode_count()).collect();
    let s_basis = crate::fock::OperatorBasis::with_modes(s_modes.len());
    let w_full = model.embed_system(&s_basis.quadratic_form(w_s, &s_modes));
    let h_full = model.h_total_undriven() + w_full;
    let spec = eigh(&HermitianOperator::from_hermitized(h_full)?)?;
    let q = &spec.eigenvectors;
    let e_tilde = dagger(q).dot(entropy_production_op(model)?.entries()).dot(q);
    let rho_tilde = dagger(q).dot(rho0.entries()).dot(q);
    let dim = model.dim();
    let mut out = Vec::with_capacity(grid.len());
    for &t in grid {
        // ⟨τ_t(E)⟩ = Σ_{rc} ρ̃_{cr} Ẽ_{rc} e^{i(λ_r−λ_c)t}
        let mut acc = C64::new(0.0, 0.0);
        for r in 0..dim {
            for c in 0..dim {
                let phase = C64::new(0.0, (spec.eigenvalues[r] - spec.eigenvalues[c]) * t).exp();
                acc += rho_tilde[[c, r]] * e_tilde[[r, c]] * phase;
            }
        }
        out.push(acc.re);
    }
    Ok(out)
}

/// Growth diagnostic for the entropy-production integral
/// `G(t) = ∫_0^t ⟨τ_s(Σ_j β_j J_j^q)⟩ ds`.
///
/// With unequal reservoir temperatures the integral grows linearly on the
/// pre-recurrence plateau with slope equal to the plateau entropy production
/// rate; an equal-temperature control must give a near-zero slope.
#[derive(Debug, Clone)]
pub struct GrowthReport {
    pub times: Vec<f64>,
    pub integrand: Vec<f64>,
    pub integral: Vec<f64>,
    /// Linear-fit slope of `G(t)` over the plateau window.
    pub fit_slope: f64,
    /// Direct time average of the integrand over the same window.
    pub plateau_mean: f64,
    /// Std/|mean| of the integrand over the window.
    pub plateau_scatter: f64,
    /// Set when no usable plateau was detected; never a silent pass.
    pub inconclusive: Option<String>,
}

pub fn growth_report(times: &[f64], integrand: &[f64], window: (f64, f64)) -> GrowthReport {
    assert_eq!(times.len(), integrand.len());
    // Cumulative trapezoid.
    let mut integral = vec![0.0];
    for k in 1..times.len() {
        let h = times[k] - times[k - 1];
        integral.push(integral[k - 1] + 0.5 * h * (integrand[k] + integrand[k - 1]));
    }
    let in_window: Vec<usize> = times
        .iter()
        .enumerate()
        .filter(|(_, &t)| t >= window.0 && t <= window.1)
        .map(|(i, _)| i)
        .collect();
    if in_window.len() < 4 {
        return GrowthReport {
            times: times.to_vec(),
            integrand: integrand.to_vec(),
            integral,
            fit_slope: f64::NAN,
            plateau_mean: f64::NAN,
            plateau_scatter: f64::INFINITY,
            inconclusive: Some("plateau window contains fewer than 4 samples".into()),
        };
    }
    let xs: Vec<f64> = in_window.iter().map(|&i| times[i]).collect();
    let ys: Vec<f64> = in_window.iter().map(|&i| integral[i]).collect();
    let (slope, _, _) = numeric::fit_line(&xs, &ys);
    let vals: Vec<f64> = in_window.iter().map(|&i| integrand[i]).collect();
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
    let scatter = var.sqrt() / mean.abs().max(1e-300);
    GrowthReport {
        times: times.to_vec(),
        integrand: integrand.to_vec(),
        integral,
        fit_slope: slope,
        plateau_mean: mean,
        plateau_scatter: scatter,
        inconclusive: None,
    }
}

/// Fock-side divergence diagnostic: evolves the local-equilibrium state of a
/// multi-reservoir model and reports the growth of the entropy-production
/// integral against its plateau average.
pub fn divergence_diagnostic(
    model: &ModelSpec,
    w_s: &CMat,
    grid: &[f64],
    window: (f64, f64),
) -> Result<GrowthReport> {
    if model.reservoir_count() < 2 {
        return Err(CoreError::Config("divergence diagnostic needs ≥ 2 reservoirs".into()));
    }
    let k = crate::states::ModularGenerator::local_equilibrium(model)?;
    let rho0 = crate::states::gibbs_state(&k)?;
    let samples = weighted_current_samples(model, w_s, &rho0, grid)?;
    Ok(growth_report(grid, &samples, window))
}

/// One-off calibration of the cocycle heat sign against the balance form on
/// a small reference model; the frozen result is [`COCYCLE_HEAT_SIGN`].
pub fn calibrate_cocycle_heat_sign() -> Result<f64> {
    use crate::schedule::DriveSchedule;
    let recipe = crate::fock::TightBindingRecipe::single_reservoir(1, 3, 1.0, 1.2, 0.15, 0.3);
    let model = crate::fock::build_tight_binding_model(&recipe)?;
    let sched = DriveSchedule::stepwise(
        ndarray::array![[C64::new(-0.4, 0.0)]],
        ndarray::array![[C64::new(0.6, 0.0)]],
        0.4,
        2.5,
    )?;
    let driven = DrivenHamiltonian::new(&model, &sched)?;
    let ctrl = crate::evolve::StepControl::default();
    let rho0 = crate::states::initial_state_protocol(&model, &sched.w0)?;
    let trace = crate::evolve::propagate_driven(&driven, 2.5, &[], &ctrl)?;
    let gamma = crate::evolve::cocycle(&driven, 2.5, &[], &ctrl)?;
    let u = trace.last();
    let rho_t = u.dot(rho0.entries()).dot(&dagger(u));
    let (w_t, _) = work_integral(&driven, &trace, &rho0, 2.5)?;
    let (q_bal, _, _) = heat_by_balance(&driven, &rho0, &rho_t, w_t, 2.5);
    let raw = trace_pair(
        rho0.entries(),
        &{
            let mut r = model.h_reservoir[0].clone();
            r = r - model.n_reservoir[0][0].mapv(|x| x * C64::new(model.mu[0][0], 0.0));
            commutator(&r, gamma.last()).dot(&dagger(gamma.last()))
        },
    )
    .re;
    if raw.abs() < 1e-6 {
        return Err(CoreError::numerical("calibration run produced negligible heat"));
    }
    Ok((q_bal / raw).signum())
}

/// Convenience wrapper: assemble a ledger for a Fock-backend run.
#[allow(clippy::too_many_arguments)]
pub fn assemble_ledger(
    driven: &DrivenHamiltonian,
    rho0: &DensityMatrix,
    trace: &PropagatorTrace,
    gamma: Option<&CMat>,
    t_end: f64,
) -> Result<ThermoLedger> {
    let u = trace
        .at(t_end)
        .ok_or_else(|| CoreError::numerical("trace does not contain final time"))?;
    let rho_t = u.dot(rho0.entries()).dot(&dagger(u));
    let (w_t, w_err) = work_integral(driven, trace, rho0, t_end)?;
    let (q_balance, z_t, delta_e) = heat_by_balance(driven, rho0, &rho_t, w_t, t_end);
    let q_cocycle = match gamma {
        Some(g) => Some(heat_by_cocycle(driven.model, rho0, g)?),
        None => None,
    };
    Ok(ThermoLedger {
        z_t,
        w_t,
        q_balance,
        q_cocycle,
        delta_e_system: delta_e,
        stage_bounds: driven.schedule.boundaries(),
        numeric_error: w_err + trace.error_estimate,
        backend: BackendKind::Fock,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{build_tight_binding_model, ReservoirRecipe, TightBindingRecipe};
    use crate::linalg::{identity, max_abs};
    use ndarray::array;

    fn one_level(e: f64) -> CMat {
        array![[C64::new(e, 0.0)]]
    }

    #[test]
    fn heat_currents_are_hermitian_and_vanish_when_commuting() {
        let recipe = TightBindingRecipe {
            system_sites: 1,
            system_onsite: vec![0.0],
            system_hopping: 0.0,
            reservoirs: vec![
                ReservoirRecipe { sites: 2, hopping: 1.0, onsite: 0.0, beta: 0.7, mu: 0.2 },
                ReservoirRecipe { sites: 2, hopping: 0.5, onsite: 0.1, beta: 1.9, mu: -0.1 },
            ],
            kappa: 0.6,
            interaction_u: 0.0,
            dim_cap: crate::fock::DEFAULT_DIM_CAP,
        };
        let model = build_tight_binding_model(&recipe).unwrap();
        let currents = heat_current_ops(&model).unwrap();
        assert_eq!(currents.len(), 2);
        // Hermiticity is enforced by construction; verify the raw commutator
        // form explicitly for the first reservoir.
        let i = C64::new(0.0, 1.0);
        let mut expected = commutator(&model.h_reservoir[0], &model.v).mapv(|x| -i * x);
        expected = expected
            + commutator(&model.n_reservoir[0][0], &model.v).mapv(|x| i * model.mu[0][0] * x);
        expected = expected.mapv(|x| x * C64::new(model.kappa, 0.0));
        assert!(max_abs_diff(currents[0].entries(), &expected) < 1e-13);

        // V commuting with H_j and N_j ⇒ zero current: decouple by removing
        // the bond (κ = 0 gives the commuting case trivially through κV).
        let mut decoupled = model.clone();
        decoupled.v = identity(model.dim());
        let zero = heat_current_ops(&decoupled).unwrap();
        assert!(max_abs(zero[0].entries()) < 1e-12);
    }

    #[test]
    fn current_matches_finite_difference_of_reservoir_energy() {
        let recipe = TightBindingRecipe::single_reservoir(1, 3, 1.0, 1.3, 0.2, 0.45);
        let model = build_tight_binding_model(&recipe).unwrap();
        let w = one_level(0.3);
        let k = crate::states::protocol_generator(&model, &w).unwrap();
        let rho0 = crate::states::gibbs_state(&k).unwrap();
        // d/dt ⟨H_1 − μN^{(1)}⟩ at t — computed by finite differences of the
        // conjugated observable — equals ⟨J_1^q⟩_t... with the sign of heat
        // flowing *into* the reservoir.
        let s_basis = crate::fock::OperatorBasis::with_modes(1);
        let w_full = model.embed_system(&s_basis.quadratic_form(&w, &[0]));
        let h_full = model.h_total_undriven() + w_full;
        let spec = eigh(&HermitianOperator::from_hermitized(h_full).unwrap()).unwrap();
        let q = &spec.eigenvectors;
        let mut r_op = model.h_reservoir[0].clone();
        r_op = r_op - model.n_reservoir[0][0].mapv(|x| x * C64::new(model.mu[0][0], 0.0));
        let observable_at = |t: f64| -> f64 {
            let mut a = dagger(q).dot(&r_op).dot(q);
            for rr in 0..model.dim() {
                for cc in 0..model.dim() {
                    a[[rr, cc]] *=
                        C64::new(0.0, (spec.eigenvalues[rr] - spec.eigenvalues[cc]) * t).exp();
                }
            }
            trace_pair(rho0.entries(), &q.dot(&a).dot(&dagger(q))).re
        };
        let t = 0.8;
        let dt = 1e-4;
        let fd = (observable_at(t + dt) - observable_at(t - dt)) / (2.0 * dt);
        let current = heat_current_ops(&model).unwrap().remove(0);
        let mut a = dagger(q).dot(current.entries()).dot(q);
        for rr in 0..model.dim() {
            for cc in 0..model.dim() {
                a[[rr, cc]] *= C64::new(0.0, (spec.eigenvalues[rr] - spec.eigenvalues[cc]) * t).exp();
            }
        }
        let j_t = trace_pair(rho0.entries(), &q.dot(&a).dot(&dagger(q))).re;
        assert!((fd - j_t).abs() < 1e-6, "fd {fd} vs ⟨J⟩ {j_t}");
    }

    #[test]
    fn ensemble_identity_trivial_cases() {
        let recipe = TightBindingRecipe::single_reservoir(1, 2, 1.0, 1.0, 0.0, 0.4);
        let model = build_tight_binding_model(&recipe).unwrap();
        let w = one_level(0.2);
        // t = 0: both sides equal X.
        assert!(maclennan_zubarev_identity(&model, &w, 0.0, 1e-10).unwrap() < 1e-12);
        // V = 0 (κ = 0): currents vanish, both sides stay constant.
        let mut decoupled = model.clone();
        decoupled.kappa = 0.0;
        assert!(maclennan_zubarev_identity(&decoupled, &w, 2.0, 1e-10).unwrap() < 1e-10);
    }

    #[test]
    fn cocycle_heat_sign_calibration_matches_frozen_constant() {
        let sign = calibrate_cocycle_heat_sign().unwrap();
        assert_eq!(sign, COCYCLE_HEAT_SIGN);
    }
}
