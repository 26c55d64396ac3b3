//! Exact time evolution for `H(t) = H_S + Σ_j H_j + κV + W(t)⊗1`, the
//! interaction-picture cocycle `Γ_t`, its Dyson-series counterpart, and the
//! small-system unitaries `u_t`.
//!
//! Conventions (one conversion point for the whole crate): states evolve in
//! the Schrödinger picture with `dU/dt = −iH(t)U`; Heisenberg observables
//! are `U†AU` on demand. The cocycle solves the right-multiplication ODE
//! `dΓ/dt = iΓ·e^{iH_f t}(P(t))e^{−iH_f t}` with `H_f` the decoupled
//! reservoir Hamiltonian and `P(t) = H_S + W(t)⊗1 + κV`, so that
//! `Γ_t τ̃_t(A) Γ_t† = U(t)† A U(t)`.
//!
//! The integrator is the midpoint-exponential rule: every step is a true
//! unitary `exp(−ih H(t+h/2))`, with Richardson step-halving for error
//! control; constant-drive segments are propagated by one exact exponential.

use std::collections::HashMap;

use crate::error::{CoreError, Result};
use crate::fock::{ModelSpec, OperatorBasis};
use crate::linalg::{
    self, dagger, eigh, identity, max_abs_diff, CMat, HermitianOperator, SpectralDecomposition,
    C64,
};
use crate::numeric;
use crate::schedule::{DriveSchedule, Segment};

/// Step-size control for ramp segments.
#[derive(Debug, Clone, Copy)]
pub struct StepControl {
    /// Target max-entry error per segment (Richardson estimate).
    pub tol: f64,
    /// Starting step size for ramps.
    pub initial_dt: f64,
    /// Refinement limit.
    pub max_halvings: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        Self { tol: 1e-9, initial_dt: 0.02, max_halvings: 12 }
    }
}

/// Time-ordered family of unitaries on a grid, `mats[k] = X(times[k] ← 0)`.
#[derive(Debug, Clone)]
pub struct UnitaryTrace {
    pub times: Vec<f64>,
    pub mats: Vec<CMat>,
    /// Summed Richardson estimates over all ramp segments.
    pub error_estimate: f64,
}

pub type PropagatorTrace = UnitaryTrace;
pub type CocycleTrace = UnitaryTrace;

impl UnitaryTrace {
    pub fn last(&self) -> &CMat {
        self.mats.last().expect("trace is never empty")
    }

    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&x| (x - t).abs() <= 1e-10 * t.abs().max(1.0))
    }

    pub fn at(&self, t: f64) -> Option<&CMat> {
        self.index_of(t).map(|i| &self.mats[i])
    }
}

/// Drive segmentation covering `[0, t_end]`; extends the final wait if the
/// requested span outlives the schedule.
pub fn clip_segments(schedule: &DriveSchedule, t_end: f64) -> Vec<Segment> {
    let mut out = Vec::new();
    for seg in schedule.segments() {
        if seg.start >= t_end {
            break;
        }
        let end = seg.end.min(t_end);
        if end - seg.start > 1e-14 {
            out.push(Segment { end, ..seg });
        }
    }
    let total = schedule.total_time();
    if t_end > total + 1e-14 {
        out.push(Segment { start: total, end: t_end, step: schedule.steps - 1, is_ramp: false });
    }
    out
}

/// The model + drive pair, with the static system Hamiltonian folded into
/// the drive (the protocol treats `H_S + W(t)` as one system operator).
pub struct DrivenHamiltonian<'a> {
    pub model: &'a ModelSpec,
    pub schedule: &'a DriveSchedule,
    s_basis: OperatorBasis,
    h_static: CMat,
    h_free: CMat,
}

impl<'a> DrivenHamiltonian<'a> {
    pub fn new(model: &'a ModelSpec, schedule: &'a DriveSchedule) -> Result<Self> {
        let ns = model.layout.system_mode_count();
        if schedule.n_system_modes() != ns {
            return Err(CoreError::Dimension(format!(
                "drive acts on {} modes but the system has {ns}",
                schedule.n_system_modes()
            )));
        }
        let h_free = model.h_reservoir_total();
        let h_static = &h_free
            + &model.h_system
            + model.v.mapv(|x| x * C64::new(model.kappa, 0.0));
        Ok(Self { model, schedule, s_basis: OperatorBasis::with_modes(ns), h_static, h_free })
    }

    /// Second-quantised drive on the system factor.
    pub fn w_fock_s(&self, t: f64) -> CMat {
        let modes: Vec<usize> = (0..self.model.layout.system_mode_count()).collect();
        self.s_basis.quadratic_form(&self.schedule.w_at(t), &modes)
    }

    /// `H_S^{(s)} + W(t)` on the system factor: the generator of `u_t`.
    pub fn w_folded_s(&self, t: f64) -> CMat {
        self.model.h_system_s.clone() + self.w_fock_s(t)
    }

    pub fn dw_dt_full(&self, t: f64) -> CMat {
        let modes: Vec<usize> = (0..self.model.layout.system_mode_count()).collect();
        let dw = self.s_basis.quadratic_form(&self.schedule.dw_dt(t), &modes);
        self.model.embed_system(&dw)
    }

    /// Full Hamiltonian `H(t)`.
    pub fn h_at(&self, t: f64) -> CMat {
        &self.h_static + &self.model.embed_system(&self.w_fock_s(t))
    }

    /// Interaction-picture perturbation `P(t) = H_S + W(t)⊗1 + κV`.
    pub fn pert_at(&self, t: f64) -> CMat {
        &self.h_static - &self.h_free + self.model.embed_system(&self.w_fock_s(t))
    }

    pub fn h_free(&self) -> &CMat {
        &self.h_free
    }
}

fn expm_i(m: &CMat, scale: f64) -> Result<CMat> {
    linalg::expm_h(&HermitianOperator::from_hermitized(m.clone())?, C64::new(0.0, scale))
}

/// One midpoint sweep of the Schrödinger propagator over a ramp.
fn sweep_left(h_at: &dyn Fn(f64) -> CMat, seg: (f64, f64), n: usize, u0: &CMat) -> Result<Vec<CMat>> {
    let h = (seg.1 - seg.0) / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut u = u0.clone();
    for k in 0..n {
        let mid = seg.0 + (k as f64 + 0.5) * h;
        let step = expm_i(&h_at(mid), -h)?;
        u = step.dot(&u);
        out.push(u.clone());
    }
    Ok(out)
}

/// Propagates `dU/dt = −iH(t)U` across the schedule segmentation.
///
/// Wait segments use a single exact exponential (cached per drive level);
/// ramp segments use midpoint-exponential steps, refined by halving until
/// the Richardson estimate meets `ctrl.tol`. `samples` are extra times at
/// which the trace must contain the propagator; samples inside ramps are
/// snapped to the ramp grid only if they coincide with a grid point.
pub fn propagate(
    h_at: &dyn Fn(f64) -> CMat,
    segments: &[Segment],
    samples: &[f64],
    ctrl: &StepControl,
) -> Result<PropagatorTrace> {
    let dim = h_at(0.0).nrows();
    let mut times = vec![0.0];
    let mut mats = vec![identity(dim)];
    let mut err_acc = 0.0;
    let mut wait_cache: HashMap<usize, SpectralDecomposition> = HashMap::new();

    for seg in segments {
        let u_start = mats.last().unwrap().clone();
        if seg.is_ramp {
            let mut n =
                (((seg.end - seg.start) / ctrl.initial_dt).ceil() as usize).max(2);
            let mut coarse = sweep_left(h_at, (seg.start, seg.end), n, &u_start)?;
            let mut err = f64::INFINITY;
            for halving in 0..=ctrl.max_halvings {
                let fine = sweep_left(h_at, (seg.start, seg.end), 2 * n, &u_start)?;
                let new_err = max_abs_diff(coarse.last().unwrap(), fine.last().unwrap());
                if new_err <= ctrl.tol {
                    err = new_err;
                    n *= 2;
                    coarse = fine;
                    break;
                }
                if halving == ctrl.max_halvings {
                    return Err(CoreError::numerical(format!(
                        "step control exhausted on ramp [{}, {}]: error {new_err:.3e} > tol {:.1e}",
                        seg.start, seg.end, ctrl.tol
                    )));
                }
                if new_err > 0.9 * err {
                    return Err(CoreError::numerical(format!(
                        "step halving not converging on ramp [{}, {}]: {err:.3e} → {new_err:.3e}",
                        seg.start, seg.end
                    )));
                }
                err = new_err;
                n *= 2;
                coarse = fine;
            }
            err_acc += err;
            let h = (seg.end - seg.start) / n as f64;
            for (k, u) in coarse.into_iter().enumerate() {
                times.push(seg.start + (k + 1) as f64 * h);
                mats.push(u);
            }
        } else {
            let spec = match wait_cache.get(&seg.step) {
                Some(s) => s.clone(),
                None => {
                    let mid = 0.5 * (seg.start + seg.end);
                    let s = eigh(&HermitianOperator::from_hermitized(h_at(mid))?)?;
                    wait_cache.insert(seg.step, s.clone());
                    s
                }
            };
            // Exact propagation to each requested sample inside the wait,
            // then to the segment end.
            let mut marks: Vec<f64> = samples
                .iter()
                .copied()
                .filter(|&t| t > seg.start + 1e-14 && t < seg.end - 1e-14)
                .collect();
            marks.push(seg.end);
            marks.sort_by(f64::total_cmp);
            marks.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
            for t in marks {
                let u = spec.map(|l| (C64::new(0.0, -(t - seg.start)) * l).exp()).dot(&u_start);
                times.push(t);
                mats.push(u);
            }
        }
    }
    Ok(UnitaryTrace { times, mats, error_estimate: err_acc })
}

/// Propagator for a model + drive on `[0, t_end]`.
pub fn propagate_driven(
    driven: &DrivenHamiltonian,
    t_end: f64,
    samples: &[f64],
    ctrl: &StepControl,
) -> Result<PropagatorTrace> {
    let segs = clip_segments(driven.schedule, t_end);
    propagate(&|t| driven.h_at(t), &segs, samples, ctrl)
}

/// Interaction-picture cocycle `Γ_t` solving
/// `dΓ/dt = iΓ·e^{iH_f t} P(t) e^{−iH_f t}`, `Γ_0 = 1`.
///
/// Ramp steps use `exp(ih·e^{iH_f s}P(s)e^{−iH_f s}) = e^{iH_f s} exp(ihP(s)) e^{−iH_f s}`;
/// wait segments are integrated in closed form through
/// `Γ(t+Δ) = Γ(t)·e^{iH_f t} e^{i(H_f+P)Δ} e^{−iH_f (t+Δ)}`.
pub fn cocycle(
    driven: &DrivenHamiltonian,
    t_end: f64,
    samples: &[f64],
    ctrl: &StepControl,
) -> Result<CocycleTrace> {
    let dim = driven.h_free().nrows();
    let free_spec = eigh(&HermitianOperator::from_hermitized(driven.h_free().clone())?)?;
    let free_phase = |s: f64| free_spec.map(|l| (C64::new(0.0, s) * l).exp());

    let segs = clip_segments(driven.schedule, t_end);
    let mut times = vec![0.0];
    let mut mats = vec![identity(dim)];
    let mut err_acc = 0.0;
    let mut wait_cache: HashMap<usize, SpectralDecomposition> = HashMap::new();

    let ramp_sweep = |seg: (f64, f64), n: usize, g0: &CMat| -> Result<Vec<CMat>> {
        let h = (seg.1 - seg.0) / n as f64;
        let mut out = Vec::with_capacity(n);
        let mut g = g0.clone();
        for k in 0..n {
            let mid = seg.0 + (k as f64 + 0.5) * h;
            let inner = expm_i(&driven.pert_at(mid), h)?;
            let step = free_phase(mid).dot(&inner).dot(&free_phase(-mid));
            g = g.dot(&step);
            out.push(g.clone());
        }
        Ok(out)
    };

    for seg in &segs {
        let g_start = mats.last().unwrap().clone();
        if seg.is_ramp {
            let mut n =
                (((seg.end - seg.start) / ctrl.initial_dt).ceil() as usize).max(2);
            let mut coarse = ramp_sweep((seg.start, seg.end), n, &g_start)?;
            let mut err = f64::INFINITY;
            for halving in 0..=ctrl.max_halvings {
                let fine = ramp_sweep((seg.start, seg.end), 2 * n, &g_start)?;
                let new_err = max_abs_diff(coarse.last().unwrap(), fine.last().unwrap());
                if new_err <= ctrl.tol {
                    err = new_err;
                    n *= 2;
                    coarse = fine;
                    break;
                }
                if halving == ctrl.max_halvings {
                    return Err(CoreError::numerical(format!(
                        "cocycle step control exhausted on [{}, {}]: {new_err:.3e}",
                        seg.start, seg.end
                    )));
                }
                if new_err > 0.9 * err {
                    return Err(CoreError::numerical(
                        "cocycle step halving not converging".to_string(),
                    ));
                }
                err = new_err;
                n *= 2;
                coarse = fine;
            }
            err_acc += err;
            let h = (seg.end - seg.start) / n as f64;
            for (k, g) in coarse.into_iter().enumerate() {
                times.push(seg.start + (k + 1) as f64 * h);
                mats.push(g);
            }
        } else {
            let spec = match wait_cache.get(&seg.step) {
                Some(s) => s.clone(),
                None => {
                    let mid = 0.5 * (seg.start + seg.end);
                    let shifted = driven.h_free() + &driven.pert_at(mid);
                    let s = eigh(&HermitianOperator::from_hermitized(shifted)?)?;
                    wait_cache.insert(seg.step, s.clone());
                    s
                }
            };
            let mut marks: Vec<f64> = samples
                .iter()
                .copied()
                .filter(|&t| t > seg.start + 1e-14 && t < seg.end - 1e-14)
                .collect();
            marks.push(seg.end);
            marks.sort_by(f64::total_cmp);
            marks.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
            let lead = free_phase(seg.start);
            for t in marks {
                let delta = t - seg.start;
                let mid_exp = spec.map(|l| (C64::new(0.0, delta) * l).exp());
                let g = g_start.dot(&lead).dot(&mid_exp).dot(&free_phase(-t));
                times.push(t);
                mats.push(g);
            }
        }
    }
    Ok(UnitaryTrace { times, mats, error_estimate: err_acc })
}

/// Midpoint integrator for right-multiplication ODEs `dX/dt = iX·B(t)`,
/// with Richardson halving. Used for the small-system unitaries and the
/// Dyson-series cross-checks.
pub fn right_ode_midpoint(
    b_at: &dyn Fn(f64) -> CMat,
    span: (f64, f64),
    ctrl: &StepControl,
) -> Result<CMat> {
    let dim = b_at(span.0).nrows();
    let sweep = |n: usize| -> Result<CMat> {
        let h = (span.1 - span.0) / n as f64;
        let mut x = identity(dim);
        for k in 0..n {
            let mid = span.0 + (k as f64 + 0.5) * h;
            x = x.dot(&expm_i(&b_at(mid), h)?);
        }
        Ok(x)
    };
    let mut n = (((span.1 - span.0).abs() / ctrl.initial_dt).ceil() as usize).max(2);
    let mut coarse = sweep(n)?;
    let mut err = f64::INFINITY;
    for halving in 0..=ctrl.max_halvings {
        let fine = sweep(2 * n)?;
        let new_err = max_abs_diff(&coarse, &fine);
        if new_err <= ctrl.tol {
            return Ok(fine);
        }
        if halving == ctrl.max_halvings || new_err > 0.9 * err {
            return Err(CoreError::numerical(format!(
                "right-multiplication ODE not converging: error {new_err:.3e}"
            )));
        }
        err = new_err;
        n *= 2;
        coarse = fine;
    }
    Ok(coarse)
}

/// Small-system unitary `u_t` solving `du/dt = iu·(H_S^{(s)} + W(t))` on
/// the bare system factor, evaluated at `t`. `h_s` is the static system
/// Hamiltonian on that factor (dim `2^{n_S}`).
pub fn small_system_unitary(
    h_s: &CMat,
    schedule: &DriveSchedule,
    t_end: f64,
    ctrl: &StepControl,
) -> Result<CMat> {
    let ns = schedule.n_system_modes();
    let s_basis = OperatorBasis::with_modes(ns);
    let modes: Vec<usize> = (0..ns).collect();
    let w_at = |t: f64| -> CMat { h_s + &s_basis.quadratic_form(&schedule.w_at(t), &modes) };
    let dim = h_s.nrows();
    let mut u = identity(dim);
    for seg in clip_segments(schedule, t_end) {
        if seg.is_ramp {
            let seg_u = right_ode_midpoint(&w_at, (seg.start, seg.end), ctrl)?;
            u = u.dot(&seg_u);
        } else {
            let mid = 0.5 * (seg.start + seg.end);
            u = u.dot(&expm_i(&w_at(mid), seg.end - seg.start)?);
        }
    }
    Ok(u)
}

/// Per-step ramp unitary `ũ^{(j)}` of a staircase: solves
/// `dũ/dt = iũ·(H_S^{(s)} + W_{j−1} + φ(t/t₀)ΔW)` up to `t₀`
/// (steps are 1-based to match the `W_j` levels).
pub fn staircase_step_unitary(
    h_s: &CMat,
    schedule: &DriveSchedule,
    j: usize,
    ctrl: &StepControl,
) -> Result<CMat> {
    debug_assert!(j >= 1 && j <= schedule.steps);
    let ns = schedule.n_system_modes();
    let s_basis = OperatorBasis::with_modes(ns);
    let modes: Vec<usize> = (0..ns).collect();
    let w_level = schedule.w_level(j - 1);
    let dw = schedule.delta_w();
    let b_at = move |t: f64| -> CMat {
        let phi = schedule.ramp.phi(t / schedule.t0);
        let w = &w_level + &dw.mapv(|x| x * C64::new(phi, 0.0));
        h_s + &s_basis.quadratic_form(&w, &modes)
    };
    right_ode_midpoint(&b_at, (0.0, schedule.t0), ctrl)
}

/// Truncated Dyson series
/// `Y_t = 1 + Σ_{n≥1} iⁿ ∫₀ᵗ dt₁ ∫₀^{t₁} dt₂ … τ_{−t_n}(V)⋯τ_{−t_1}(V)`
/// for the autonomous evolution generated by `h_full`, i.e. the solution of
/// `dY/dt = iY·τ_{−t}(V)`.
///
/// Each nested level is integrated with composite 16-node Gauss–Legendre
/// collocation panels in the eigenbasis of `h_full`; the reported bound is
/// `(‖V‖t)^{n_max+1}/(n_max+1)!`.
#[derive(Debug, Clone)]
pub struct DysonResult {
    pub y: CMat,
    pub truncation_bound: f64,
}

pub fn dyson_series(
    h_full: &HermitianOperator,
    v: &HermitianOperator,
    t: f64,
    n_max: usize,
    tol: f64,
) -> Result<DysonResult> {
    let v_norm = v.op_norm()?;
    let x = v_norm * t.abs();
    let bound = |n: usize| -> f64 {
        let mut b = 1.0;
        for k in 1..=(n + 1) {
            b *= x / k as f64;
        }
        b
    };
    let truncation_bound = bound(n_max);
    if truncation_bound > tol {
        let needed = (n_max..200).find(|&n| bound(n) <= tol);
        return Err(CoreError::Parameter(match needed {
            Some(n) => format!(
                "truncation bound {truncation_bound:.3e} exceeds tol {tol:.1e}; need n_max ≥ {n}"
            ),
            None => format!("‖V‖t = {x:.3} too large for a convergent truncation"),
        }));
    }

    let spec = eigh(h_full)?;
    let dim = h_full.dim();
    let q = &spec.eigenvectors;
    let v_tilde = dagger(q).dot(v.entries()).dot(q);

    // Panel count keyed to the spectral spread so the degree-15 collocation
    // resolves the fastest phase.
    let spread = spec.eigenvalues[dim - 1] - spec.eigenvalues[0];
    let panels = ((t.abs() * (spread + v_norm) / 4.0).ceil() as usize).clamp(2, 256);

    let rule = numeric::gl16();
    let s_matrix = numeric::gl16_integration_matrix();
    let m = rule.len();

    // i·τ_{−s}(V) in the eigenbasis.
    let integrand = |s: f64| -> CMat {
        let mut out = v_tilde.clone();
        for r in 0..dim {
            for c in 0..dim {
                let phase = C64::new(0.0, -(spec.eigenvalues[r] - spec.eigenvalues[c]) * s).exp();
                out[[r, c]] *= C64::new(0.0, 1.0) * phase;
            }
        }
        out
    };

    // Cumulative values of each order at the current panel start.
    let mut at_start: Vec<CMat> = (0..=n_max)
        .map(|k| if k == 0 { identity(dim) } else { CMat::zeros((dim, dim)) })
        .collect();
    let h_panel = t / panels as f64;
    for p in 0..panels {
        let a = p as f64 * h_panel;
        let half = 0.5 * h_panel;
        let nodes: Vec<f64> = rule.iter().map(|&(xq, _)| a + half * (xq + 1.0)).collect();
        let phis: Vec<CMat> = nodes.iter().map(|&s| integrand(s)).collect();

        // Node values per order, built from the previous order's nodes.
        let mut prev_nodes: Vec<CMat> = vec![identity(dim); m];
        let mut ends: Vec<CMat> = Vec::with_capacity(n_max + 1);
        ends.push(identity(dim));
        for k in 1..=n_max {
            let products: Vec<CMat> =
                (0..m).map(|r| prev_nodes[r].dot(&phis[r])).collect();
            let mut node_vals: Vec<CMat> = Vec::with_capacity(m);
            for qn in 0..m {
                let mut acc = at_start[k].clone();
                for r in 0..m {
                    let w = half * s_matrix[qn][r];
                    if w != 0.0 {
                        acc = acc + products[r].mapv(|x| x * C64::new(w, 0.0));
                    }
                }
                node_vals.push(acc);
            }
            let mut end = at_start[k].clone();
            for r in 0..m {
                let w = half * rule[r].1;
                end = end + products[r].mapv(|x| x * C64::new(w, 0.0));
            }
            ends.push(end);
            prev_nodes = node_vals;
        }
        at_start = ends;
    }

    let mut y_tilde = CMat::zeros((dim, dim));
    for term in &at_start {
        y_tilde += term;
    }
    let y = q.dot(&y_tilde).dot(&dagger(q));
    Ok(DysonResult { y, truncation_bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::TightBindingRecipe;
    use crate::linalg::{max_abs, random_hermitian};
    use ndarray::array;

    fn two_level_drive(e0: f64, ef: f64, t0: f64, total: f64) -> DriveSchedule {
        DriveSchedule::stepwise(
            array![[C64::new(e0, 0.0)]],
            array![[C64::new(ef, 0.0)]],
            t0,
            total,
        )
        .unwrap()
    }

    #[test]
    fn constant_hamiltonian_matches_exact_exponential() {
        let recipe = TightBindingRecipe::single_reservoir(1, 2, 1.0, 1.0, 0.0, 0.3);
        let model = crate::fock::build_tight_binding_model(&recipe).unwrap();
        let sched = two_level_drive(0.4, 0.4, 0.5, 3.0);
        let driven = DrivenHamiltonian::new(&model, &sched).unwrap();
        let trace =
            propagate_driven(&driven, 3.0, &[], &StepControl::default()).unwrap();
        let h = driven.h_at(0.0);
        let exact = expm_i(&h, -3.0).unwrap();
        assert!(max_abs_diff(trace.last(), &exact) < 1e-10);
    }

    #[test]
    fn driven_propagator_self_converges() {
        let recipe = TightBindingRecipe::single_reservoir(1, 1, 1.0, 1.0, 0.0, 0.4);
        let model = crate::fock::build_tight_binding_model(&recipe).unwrap();
        let sched = two_level_drive(-0.5, 0.8, 1.0, 2.0);
        let driven = DrivenHamiltonian::new(&model, &sched).unwrap();
        let coarse = propagate_driven(
            &driven,
            2.0,
            &[],
            &StepControl { tol: 1e-8, initial_dt: 0.05, max_halvings: 10 },
        )
        .unwrap();
        let fine = propagate_driven(
            &driven,
            2.0,
            &[],
            &StepControl { tol: 1e-12, initial_dt: 0.005, max_halvings: 12 },
        )
        .unwrap();
        assert!(max_abs_diff(coarse.last(), fine.last()) < 1e-8);
        // Unitarity over the span.
        for u in &coarse.mats {
            assert!(max_abs_diff(&u.dot(&dagger(u)), &identity(u.nrows())) < 1e-9);
        }
    }

    #[test]
    fn composition_consistency_on_stored_points() {
        let recipe = TightBindingRecipe::single_reservoir(1, 2, 1.0, 2.0, 0.1, 0.3);
        let model = crate::fock::build_tight_binding_model(&recipe).unwrap();
        let sched = two_level_drive(0.0, 1.0, 0.6, 4.0);
        let driven = DrivenHamiltonian::new(&model, &sched).unwrap();
        let trace = propagate_driven(&driven, 4.0, &[2.2], &StepControl::default()).unwrap();
        let i1 = trace.index_of(2.2).expect("sample stored");
        let u_t1 = &trace.mats[i1];
        // Re-propagate from scratch to the final time with the same control:
        // U(T ← 0) must equal U(T ← t1)·U(t1 ← 0) built from the wait-exact
        // segments.
        let u_t2 = trace.last();
        let h_final = driven.h_at(3.9);
        let u_seg = expm_i(&h_final, -(4.0 - 2.2)).unwrap();
        assert!(max_abs_diff(u_t2, &u_seg.dot(u_t1)) < 1e-9);
    }

    #[test]
    fn cocycle_identities() {
        let recipe = TightBindingRecipe::single_reservoir(1, 2, 1.0, 1.5, 0.0, 0.35);
        let model = crate::fock::build_tight_binding_model(&recipe).unwrap();
        let sched = two_level_drive(0.2, 0.9, 0.5, 2.0);
        let driven = DrivenHamiltonian::new(&model, &sched).unwrap();
        let ctrl = StepControl::default();
        let t = 2.0;
        let gamma = cocycle(&driven, t, &[], &ctrl).unwrap();
        let u = propagate_driven(&driven, t, &[], &ctrl).unwrap();

        // Γ_t = U(t)† e^{−iH_f t} up to integration error.
        let free = expm_i(driven.h_free(), -t).unwrap();
        let expected = dagger(u.last()).dot(&free);
        assert!(max_abs_diff(gamma.last(), &expected) < 1e-8);

        // Defining identity on an observable: Γ_t τ̃_t(A) Γ_t† = U† A U.
        let a = model.basis.number(0);
        let free_fwd = expm_i(driven.h_free(), t).unwrap();
        let a_free = free_fwd.dot(&a).dot(&dagger(&free_fwd));
        let lhs = gamma.last().dot(&a_free).dot(&dagger(gamma.last()));
        let rhs = dagger(u.last()).dot(&a).dot(u.last());
        assert!(max_abs_diff(&lhs, &rhs) < 1e-8);

        // κ = 0 and constant W: Γ reduces to the system phase alone; with
        // W = 0 as well it is the identity.
        let mut free_recipe = recipe.clone();
        free_recipe.kappa = 0.0;
        let free_model = crate::fock::build_tight_binding_model(&free_recipe).unwrap();
        let zero_sched = two_level_drive(0.0, 0.0, 0.5, 2.0);
        let free_driven = DrivenHamiltonian::new(&free_model, &zero_sched).unwrap();
        let gamma0 = cocycle(&free_driven, 2.0, &[], &ctrl).unwrap();
        assert!(max_abs_diff(gamma0.last(), &identity(model.dim())) < 1e-9);
    }

    #[test]
    fn small_unitary_constant_drive_sign_convention() {
        let sched = two_level_drive(0.7, 0.7, 0.5, 2.0);
        let h_s = CMat::zeros((2, 2));
        let u = small_system_unitary(&h_s, &sched, 2.0, &StepControl::default()).unwrap();
        // du/dt = iuW ⇒ u_t = e^{iWt} for constant W.
        let s_basis = OperatorBasis::with_modes(1);
        let w = s_basis.quadratic_form(&sched.w_at(0.0), &[0]);
        let exact = expm_i(&w, 2.0).unwrap();
        assert!(max_abs_diff(&u, &exact) < 1e-10);
    }

    #[test]
    fn dyson_trivial_and_first_order() {
        let h = random_hermitian(6, 3);
        let v0 = HermitianOperator::zero(6);
        let r = dyson_series(&h, &v0, 1.0, 3, 1e-9).unwrap();
        assert!(max_abs_diff(&r.y, &identity(6)) < 1e-12);

        // dY/dt|₀ = iV: finite difference at small t with n_max = 1.
        let v = random_hermitian(6, 4);
        let dt = 1e-4;
        let r = dyson_series(&h, &v, dt, 4, 1.0).unwrap();
        let fd = (&r.y - &identity(6)).mapv(|x| x / C64::new(dt, 0.0));
        let expected = v.entries().mapv(|x| x * C64::new(0.0, 1.0));
        assert!(max_abs(&(&fd - &expected)) < 1e-3);
    }

    #[test]
    fn dyson_matches_right_ode_and_closed_form() {
        // Y solves dY/dt = iY τ_{−t}(V); closed form e^{−i(H−V)t} e^{iHt}.
        let h = random_hermitian(6, 9);
        let v_op = random_hermitian(6, 10);
        // Normalise ‖V‖ ≈ 0.5 so n_max = 12 is comfortably convergent at t = 2.
        let vn = v_op.op_norm().unwrap();
        let v = HermitianOperator::from_hermitized(v_op.entries().mapv(|x| x * C64::new(0.5 / vn, 0.0)))
            .unwrap();
        let t = 2.0;
        let r = dyson_series(&h, &v, t, 12, 1e-8).unwrap();

        let h_minus_v = HermitianOperator::from_hermitized(h.entries() - v.entries()).unwrap();
        let closed = linalg::expm_h(&h_minus_v, C64::new(0.0, -t))
            .unwrap()
            .dot(&linalg::expm_h(&h, C64::new(0.0, t)).unwrap());
        assert!(
            max_abs_diff(&r.y, &closed) < 1e-9,
            "series vs closed form: {:.3e}",
            max_abs_diff(&r.y, &closed)
        );

        let spec = eigh(&h).unwrap();
        let b_at = |s: f64| -> CMat {
            let q = &spec.eigenvectors;
            let mut vt = dagger(q).dot(v.entries()).dot(q);
            for r in 0..6 {
                for c in 0..6 {
                    vt[[r, c]] *=
                        C64::new(0.0, -(spec.eigenvalues[r] - spec.eigenvalues[c]) * s).exp();
                }
            }
            q.dot(&vt).dot(&dagger(q))
        };
        let ode = right_ode_midpoint(
            &b_at,
            (0.0, t),
            &StepControl { tol: 1e-10, initial_dt: 0.01, max_halvings: 12 },
        )
        .unwrap();
        assert!(max_abs_diff(&r.y, &ode) < 1e-8);
    }

    #[test]
    fn dyson_refuses_undersized_truncation() {
        let h = random_hermitian(4, 11);
        let v = random_hermitian(4, 12);
        let err = dyson_series(&h, &v, 5.0, 2, 1e-10).unwrap_err();
        match err {
            CoreError::Parameter(msg) => assert!(msg.contains("n_max"), "{msg}"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn moller_cocycle_derivative_calibration() {
        // Pins the series convention: γ_t(A) = Y_t A Y_t† with
        // d/dt γ_t(A) = iγ_t([τ_{−t}(V), A]).
        let h = random_hermitian(5, 21);
        let v_raw = random_hermitian(5, 22);
        let vn = v_raw.op_norm().unwrap();
        let v = HermitianOperator::from_hermitized(
            v_raw.entries().mapv(|x| x * C64::new(0.4 / vn, 0.0)),
        )
        .unwrap();
        let a = random_hermitian(5, 23);
        let t = 0.8;
        let dt = 1e-5;

        let gamma = |tt: f64| -> CMat {
            let y = dyson_series(&h, &v, tt, 12, 1e-9).unwrap().y;
            y.dot(a.entries()).dot(&dagger(&y))
        };
        let fd = (&gamma(t + dt) - &gamma(t - dt)).mapv(|x| x / C64::new(2.0 * dt, 0.0));

        let spec = eigh(&h).unwrap();
        let q = &spec.eigenvectors;
        let mut vt = dagger(q).dot(v.entries()).dot(q);
        for r in 0..5 {
            for c in 0..5 {
                vt[[r, c]] *= C64::new(0.0, -(spec.eigenvalues[r] - spec.eigenvalues[c]) * t).exp();
            }
        }
        let v_t = q.dot(&vt).dot(&dagger(q));
        let y = dyson_series(&h, &v, t, 12, 1e-9).unwrap().y;
        let comm = linalg::commutator(&v_t, a.entries());
        let rhs = y
            .dot(&comm)
            .dot(&dagger(&y))
            .mapv(|x| x * C64::new(0.0, 1.0));
        assert!(
            max_abs_diff(&fd, &rhs) < 1e-6,
            "derivative calibration failed: {:.3e}",
            max_abs_diff(&fd, &rhs)
        );
    }
}
