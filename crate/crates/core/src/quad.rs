//! Correlation-matrix backend for quadratic models.
//!
//! Number-conserving Gaussian states are represented by the n×n matrix
//! `C_{mn} = ⟨c_n†c_m⟩`, so expectations of bilinears are `⟨c†Xc⟩ = tr(XC)`
//! and dynamics costs `O(n³)` instead of `O(8^n)`. The midpoint-exponential
//! stepping is shared with the Fock backend (a single code path in
//! [`crate::evolve`]), so for the same drive both backends apply the second
//! quantisation of identical single-particle steps and agree to
//! eigensolver precision.

use ndarray::prelude::*;

use crate::error::{CoreError, Result};
use crate::evolve::{self, StepControl};
use crate::fock::{OperatorBasis, Region, TightBindingRecipe};
use crate::linalg::{
    dagger, eigh, trace_pair, CMat, DensityMatrix, HermitianOperator, C64,
};
use crate::schedule::DriveSchedule;
use crate::states::ModularGenerator;
use crate::thermo::{BackendKind, ThermoLedger};

/// Single-particle model data mirroring the Fock-side recipe.
#[derive(Debug, Clone)]
pub struct QuadraticModel {
    pub n: usize,
    /// Static single-particle Hamiltonian: system + reservoir blocks
    /// (no coupling, no drive).
    pub h0: CMat,
    /// Reservoir-only part of `h0`.
    pub h_free: CMat,
    /// Single-particle coupling (enters dynamics as κ·v).
    pub v: CMat,
    pub kappa: f64,
    pub region_of: Vec<Region>,
    pub beta: Vec<f64>,
    pub mu: Vec<f64>,
    pub recipe: TightBindingRecipe,
}

impl QuadraticModel {
    pub fn from_recipe(recipe: &TightBindingRecipe) -> Result<Self> {
        if !recipe.is_quadratic() {
            return Err(CoreError::Capability(format!(
                "correlation-matrix backend requires a quadratic model (u = {})",
                recipe.interaction_u
            )));
        }
        let ns = recipe.system_sites;
        let n = recipe.n_modes();
        let mut h0 = CMat::zeros((n, n));
        let mut h_free = CMat::zeros((n, n));
        let mut region_of = vec![Region::System; n];
        for k in 0..ns {
            let eps = recipe.system_onsite.get(k).copied().unwrap_or(0.0);
            h0[[k, k]] = C64::new(eps, 0.0);
            if recipe.system_hopping != 0.0 && k + 1 < ns {
                h0[[k, k + 1]] = C64::new(-recipe.system_hopping, 0.0);
                h0[[k + 1, k]] = C64::new(-recipe.system_hopping, 0.0);
            }
        }
        let mut offset = ns;
        let mut v = CMat::zeros((n, n));
        for (j, res) in recipe.reservoirs.iter().enumerate() {
            for k in 0..res.sites {
                let m = offset + k;
                region_of[m] = Region::Reservoir(j);
                if res.onsite != 0.0 {
                    h0[[m, m]] = C64::new(res.onsite, 0.0);
                    h_free[[m, m]] = C64::new(res.onsite, 0.0);
                }
                if k + 1 < res.sites {
                    h0[[m, m + 1]] = C64::new(-res.hopping, 0.0);
                    h0[[m + 1, m]] = C64::new(-res.hopping, 0.0);
                    h_free[[m, m + 1]] = C64::new(-res.hopping, 0.0);
                    h_free[[m + 1, m]] = C64::new(-res.hopping, 0.0);
                }
            }
            // Contact bond: last system mode to the reservoir's first site.
            v[[ns - 1, offset]] = C64::new(1.0, 0.0);
            v[[offset, ns - 1]] = C64::new(1.0, 0.0);
            offset += res.sites;
        }
        Ok(Self {
            n,
            h0,
            h_free,
            v,
            kappa: recipe.kappa,
            region_of,
            beta: recipe.reservoirs.iter().map(|r| r.beta).collect(),
            mu: recipe.reservoirs.iter().map(|r| r.mu).collect(),
            recipe: recipe.clone(),
        })
    }

    pub fn system_modes(&self) -> Vec<usize> {
        (0..self.n).filter(|&m| self.region_of[m] == Region::System).collect()
    }

    pub fn reservoir_modes(&self, j: usize) -> Vec<usize> {
        (0..self.n)
            .filter(|&m| self.region_of[m] == Region::Reservoir(j))
            .collect()
    }

    /// Embeds a system-block matrix into the full single-particle space.
    pub fn embed_system(&self, w: &CMat) -> CMat {
        let sys = self.system_modes();
        assert_eq!(w.nrows(), sys.len());
        let mut out = CMat::zeros((self.n, self.n));
        for (a, &ma) in sys.iter().enumerate() {
            for (b, &mb) in sys.iter().enumerate() {
                out[[ma, mb]] = w[[a, b]];
            }
        }
        out
    }

    /// System block of `h0` (the static system Hamiltonian).
    pub fn h_system_block(&self) -> CMat {
        let sys = self.system_modes();
        let k = sys.len();
        let mut out = CMat::zeros((k, k));
        for (a, &ma) in sys.iter().enumerate() {
            for (b, &mb) in sys.iter().enumerate() {
                out[[a, b]] = self.h0[[ma, mb]];
            }
        }
        out
    }

    /// Full single-particle Hamiltonian at drive value `w` (system block).
    pub fn h_with_drive(&self, w: &CMat) -> CMat {
        &self.h0 + &self.v.mapv(|x| x * C64::new(self.kappa, 0.0)) + self.embed_system(w)
    }

    /// Projector onto the modes of a region (diagonal single-particle).
    pub fn region_projector(&self, region: Region) -> CMat {
        let mut out = CMat::zeros((self.n, self.n));
        for m in 0..self.n {
            if self.region_of[m] == region {
                out[[m, m]] = C64::new(1.0, 0.0);
            }
        }
        out
    }

    /// Single-particle heat-current matrices
    /// `j_r = κ(−i[h_r, v] + μ_r i[p_r, v])`, exact counterparts of the
    /// many-body currents for bilinears.
    pub fn heat_current_sp(&self) -> Vec<CMat> {
        let i = C64::new(0.0, 1.0);
        (0..self.beta.len())
            .map(|j| {
                let h_r = self.region_block_full(Region::Reservoir(j));
                let p_r = self.region_projector(Region::Reservoir(j));
                let mut op = crate::linalg::commutator(&h_r, &self.v).mapv(|x| -i * x);
                if self.mu[j] != 0.0 {
                    op = op
                        + crate::linalg::commutator(&p_r, &self.v).mapv(|x| i * self.mu[j] * x);
                }
                op.mapv(|x| x * C64::new(self.kappa, 0.0))
            })
            .collect()
    }

    /// The part of `h0` supported on a region.
    pub fn region_block_full(&self, region: Region) -> CMat {
        let mut out = CMat::zeros((self.n, self.n));
        for r in 0..self.n {
            for c in 0..self.n {
                if self.region_of[r] == region && self.region_of[c] == region {
                    out[[r, c]] = self.h0[[r, c]];
                }
            }
        }
        out
    }
}

/// `C_{mn} = ⟨c_n†c_m⟩`: Hermitian with spectrum in [0, 1].
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    entries: CMat,
}

impl CorrelationMatrix {
    pub fn new(entries: CMat) -> Result<Self> {
        let herm = HermitianOperator::new(entries.clone())
            .map_err(|_| CoreError::structural("correlation matrix must be Hermitian"))?;
        let spec = eigh(&herm)?;
        let (lo, hi) = (spec.eigenvalues[0], spec.eigenvalues[spec.eigenvalues.len() - 1]);
        if lo < -1e-10 || hi > 1.0 + 1e-10 {
            return Err(CoreError::structural(format!(
                "correlation spectrum [{lo:.3e}, {hi:.3e}] escapes [0, 1]"
            )));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &CMat {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// `⟨c†Xc⟩ = tr(X C)`.
    pub fn expect(&self, x: &CMat) -> f64 {
        trace_pair(x, &self.entries).re
    }

    pub fn occupation(&self, mode: usize) -> f64 {
        self.entries[[mode, mode]].re
    }

    pub fn sub_block(&self, modes: &[usize]) -> CMat {
        let k = modes.len();
        let mut out = CMat::zeros((k, k));
        for (a, &ma) in modes.iter().enumerate() {
            for (b, &mb) in modes.iter().enumerate() {
                out[[a, b]] = self.entries[[ma, mb]];
            }
        }
        out
    }
}

/// Fermi function with a numerically stable logistic evaluation.
fn fermi(x: f64) -> f64 {
    if x >= 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// Grand-canonical correlation matrix `C = (1 + e^{β(h−μ)})^{-1}`.
pub fn gibbs_correlation(h: &CMat, beta: f64, mu: f64) -> Result<CorrelationMatrix> {
    let spec = eigh(&HermitianOperator::from_hermitized(h.clone())?)?;
    let c = spec.map(|e| C64::new(fermi(beta * (e - mu)), 0.0));
    CorrelationMatrix::new(c)
}

/// Block-diagonal local-equilibrium state: each reservoir at its own
/// `(β_j, μ_j)`, the system maximally mixed (no system term in the
/// modular generator).
pub fn local_equilibrium_correlation(model: &QuadraticModel) -> Result<CorrelationMatrix> {
    let mut c = CMat::zeros((model.n, model.n));
    for (a, m) in model.system_modes().iter().enumerate() {
        let _ = a;
        c[[*m, *m]] = C64::new(0.5, 0.0);
    }
    for j in 0..model.beta.len() {
        let modes = model.reservoir_modes(j);
        let k = modes.len();
        let mut block = CMat::zeros((k, k));
        for (a, &ma) in modes.iter().enumerate() {
            for (b, &mb) in modes.iter().enumerate() {
                block[[a, b]] = model.h_free[[ma, mb]];
            }
        }
        let cb = gibbs_correlation(&block, model.beta[j], model.mu[j])?;
        for (a, &ma) in modes.iter().enumerate() {
            for (b, &mb) in modes.iter().enumerate() {
                c[[ma, mb]] = cb.entries()[[a, b]];
            }
        }
    }
    CorrelationMatrix::new(c)
}

/// Coupled-ensemble initial state for driven runs: Fermi function of the
/// full single-particle Hamiltonian with the initial drive.
pub fn initial_correlation_protocol(
    model: &QuadraticModel,
    w0: &CMat,
) -> Result<CorrelationMatrix> {
    if model.beta.len() != 1 {
        return Err(CoreError::Config("driven protocol requires exactly one reservoir".into()));
    }
    gibbs_correlation(&model.h_with_drive(w0), model.beta[0], model.mu[0])
}

/// Time-resolved correlation matrices along a driven evolution.
#[derive(Debug, Clone)]
pub struct CorrelationTrace {
    pub times: Vec<f64>,
    pub mats: Vec<CMat>,
    pub propagators: Vec<CMat>,
    pub error_estimate: f64,
}

impl CorrelationTrace {
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&x| (x - t).abs() <= 1e-10 * t.abs().max(1.0))
    }

    pub fn at(&self, t: f64) -> Option<CorrelationMatrix> {
        self.index_of(t).map(|i| CorrelationMatrix { entries: self.mats[i].clone() })
    }

    pub fn last(&self) -> CorrelationMatrix {
        CorrelationMatrix { entries: self.mats.last().unwrap().clone() }
    }
}

/// Evolves `C(t) = u(t) C_0 u(t)†` with the shared midpoint/exact-segment
/// propagation of the single-particle Hamiltonian.
pub fn evolve_correlation(
    model: &QuadraticModel,
    schedule: &DriveSchedule,
    c0: &CorrelationMatrix,
    t_end: f64,
    samples: &[f64],
    ctrl: &StepControl,
) -> Result<CorrelationTrace> {
    let segs = evolve::clip_segments(schedule, t_end);
    let h_at = |t: f64| model.h_with_drive(&schedule.w_at(t));
    let u_trace = evolve::propagate(&h_at, &segs, samples, ctrl)?;
    let mats: Vec<CMat> = u_trace
        .mats
        .iter()
        .map(|u| u.dot(c0.entries()).dot(&dagger(u)))
        .collect();
    Ok(CorrelationTrace {
        times: u_trace.times,
        mats,
        propagators: u_trace.mats,
        error_estimate: u_trace.error_estimate,
    })
}

/// Entanglement entropy of a mode subset from the correlation spectrum:
/// `S = −Σ_k [λ_k ln λ_k + (1−λ_k) ln(1−λ_k)]`.
pub fn entropy_from_correlation(c: &CorrelationMatrix, modes: &[usize]) -> Result<f64> {
    let block = c.sub_block(modes);
    let spec = eigh(&HermitianOperator::from_hermitized(block)?)?;
    let mut s = 0.0;
    for &l in spec.eigenvalues.iter() {
        let l = l.clamp(0.0, 1.0);
        if l > 0.0 {
            s -= l * l.ln();
        }
        if l < 1.0 {
            s -= (1.0 - l) * (1.0 - l).ln();
        }
    }
    Ok(s)
}

/// Reconstructs the (small) Fock density matrix of a Gaussian state from a
/// correlation block: the state is the Gibbs state of
/// `c† ln((1−C)/C) c`. Eigenvalues are clamped away from {0, 1} so pure
/// occupations stay representable.
pub fn density_matrix_from_block(block: &CMat) -> Result<DensityMatrix> {
    let k = block.nrows();
    if k > 12 {
        return Err(CoreError::Capacity { required: 1 << k, allowed: 1 << 12 });
    }
    let spec = eigh(&HermitianOperator::from_hermitized(block.clone())?)?;
    const CLAMP: f64 = 1e-14;
    let k_sp = spec.map(|l| {
        let l = l.clamp(CLAMP, 1.0 - CLAMP);
        C64::new(((1.0 - l) / l).ln(), 0.0)
    });
    let basis = OperatorBasis::with_modes(k);
    let modes: Vec<usize> = (0..k).collect();
    let k_fock = basis.quadratic_form(&k_sp, &modes);
    crate::states::gibbs_state(&ModularGenerator::new(HermitianOperator::from_hermitized(
        k_fock,
    )?))
}

/// Ledger for a quadratic-backend run. The cocycle heat form is Fock-only;
/// requesting it on this backend is a capability error, so the ledger
/// records `None` and the balance form alone.
pub fn ledger_from_correlation(
    model: &QuadraticModel,
    schedule: &DriveSchedule,
    trace: &CorrelationTrace,
    t_end: f64,
) -> Result<ThermoLedger> {
    let c_end = trace
        .at(t_end)
        .ok_or_else(|| CoreError::numerical("correlation trace does not contain final time"))?;
    let c0 = CorrelationMatrix { entries: trace.mats[0].clone() };

    let h_s_embed = model.embed_system(&model.h_system_block());
    let w_fold = |t: f64| -> CMat { &h_s_embed + &model.embed_system(&schedule.w_at(t)) };
    let kv = model.v.mapv(|x| x * C64::new(model.kappa, 0.0));

    // Work: Simpson over the ramp grids of the trace.
    let mut w_t = 0.0;
    let mut w_err = 0.0;
    for seg in evolve::clip_segments(schedule, t_end) {
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
            return Err(CoreError::numerical("ramp grid unsuitable for Simpson"));
        }
        let f: Vec<f64> = idx
            .iter()
            .map(|&i| {
                let dw = model.embed_system(&schedule.dw_dt(trace.times[i]));
                trace_pair(&dw, &trace.mats[i]).re
            })
            .collect();
        let h = (seg.end - seg.start) / (idx.len() - 1) as f64;
        let n = f.len() - 1;
        let simpson = |vals: &[f64], hh: f64| -> f64 {
            let m = vals.len() - 1;
            let mut acc = vals[0] + vals[m];
            for (k, &v) in vals.iter().enumerate().take(m).skip(1) {
                acc += if k % 2 == 1 { 4.0 * v } else { 2.0 * v };
            }
            acc * hh / 3.0
        };
        let fine = simpson(&f, h);
        let coarse_pts: Vec<f64> = f.iter().step_by(2).copied().collect();
        let coarse = if coarse_pts.len() >= 3 && (coarse_pts.len() - 1).is_multiple_of(2) {
            simpson(&coarse_pts, 2.0 * h)
        } else {
            fine
        };
        let _ = n;
        w_t += fine;
        w_err += (fine - coarse).abs() / 15.0;
    }

    let obs_end = w_fold(t_end) + &kv;
    let obs_start = w_fold(0.0) + &kv;
    let delta_e = c_end.expect(&obs_end) - c0.expect(&obs_start);

    let p_sys = model.region_projector(Region::System);
    let z_t = model.mu[0] * (c_end.expect(&p_sys) - c0.expect(&p_sys));

    Ok(ThermoLedger {
        z_t,
        w_t,
        q_balance: delta_e - w_t - z_t,
        q_cocycle: None,
        delta_e_system: delta_e,
        stage_bounds: schedule.boundaries(),
        numeric_error: w_err + trace.error_estimate,
        backend: BackendKind::Quadratic,
    })
}

/// Explicit capability error for the Fock-only heat formula.
pub fn heat_by_cocycle_unsupported() -> CoreError {
    CoreError::Capability("cocycle heat is only defined on the Fock backend".into())
}

/// Expectations of the weighted current `Σ_j β_j J_j^q` along the autonomous
/// evolution from `c0`, sampled on `grid` (single-particle exact dynamics).
pub fn weighted_current_samples(
    model: &QuadraticModel,
    w: &CMat,
    c0: &CorrelationMatrix,
    grid: &[f64],
) -> Result<Vec<f64>> {
    let h = model.h_with_drive(w);
    let spec = eigh(&HermitianOperator::from_hermitized(h)?)?;
    let q = &spec.eigenvectors;
    let currents = model.heat_current_sp();
    let mut e_sp = CMat::zeros((model.n, model.n));
    for (j, cur) in currents.iter().enumerate() {
        e_sp = e_sp + cur.mapv(|x| x * C64::new(model.beta[j], 0.0));
    }
    let e_tilde = dagger(q).dot(&e_sp).dot(q);
    let c_tilde = dagger(q).dot(c0.entries()).dot(q);
    let mut out = Vec::with_capacity(grid.len());
    for &t in grid {
        // ⟨c†τ_t(e)c⟩ = tr(τ_t(e)·C) with τ_t(e)_{rc} = ẽ_{rc} e^{i(λ_r−λ_c)t}.
        let mut acc = C64::new(0.0, 0.0);
        for r in 0..model.n {
            for c in 0..model.n {
                let phase = C64::new(0.0, (spec.eigenvalues[r] - spec.eigenvalues[c]) * t).exp();
                acc += e_tilde[[r, c]] * phase * c_tilde[[c, r]];
            }
        }
        out.push(acc.re);
    }
    Ok(out)
}

/// Correlation-matrix divergence diagnostic (multi-reservoir NESS growth).
pub fn divergence_diagnostic(
    model: &QuadraticModel,
    w: &CMat,
    grid: &[f64],
    window: (f64, f64),
) -> Result<crate::thermo::GrowthReport> {
    if model.beta.len() < 2 {
        return Err(CoreError::Config("divergence diagnostic needs ≥ 2 reservoirs".into()));
    }
    let c0 = local_equilibrium_correlation(model)?;
    let samples = weighted_current_samples(model, w, &c0, grid)?;
    Ok(crate::thermo::growth_report(grid, &samples, window))
}

/// A linear combination of annihilation or creation operators, used by the
/// Wick-expansion helpers for higher-point Gaussian expectations.
#[derive(Debug, Clone)]
pub struct LinearOp {
    pub dag: bool,
    pub coeff: Array1<C64>,
}

impl LinearOp {
    pub fn annihilation(n: usize, mode: usize) -> Self {
        let mut coeff = Array1::zeros(n);
        coeff[mode] = C64::new(1.0, 0.0);
        Self { dag: false, coeff }
    }

    pub fn creation(n: usize, mode: usize) -> Self {
        let mut coeff = Array1::zeros(n);
        coeff[mode] = C64::new(1.0, 0.0);
        Self { dag: true, coeff }
    }

    /// Heisenberg evolution under the single-particle propagator `u`:
    /// `c_m(t) = Σ_k u_{mk} c_k`, `c_m†(t) = Σ_k u*_{mk} c_k†`.
    pub fn evolve(&self, u: &CMat) -> Self {
        let coeff = if self.dag {
            u.t().mapv(|x| x.conj()).dot(&self.coeff)
        } else {
            u.t().dot(&self.coeff)
        };
        Self { dag: self.dag, coeff }
    }
}

/// Pair contraction ⟨a b⟩ in the Gaussian state `c`.
fn contract(c: &CorrelationMatrix, a: &LinearOp, b: &LinearOp) -> C64 {
    match (a.dag, b.dag) {
        (false, false) | (true, true) => C64::new(0.0, 0.0),
        // ⟨c_m† c_n⟩ = C_{nm}
        (true, false) => {
            let mut acc = C64::new(0.0, 0.0);
            for m in 0..a.coeff.len() {
                for n in 0..b.coeff.len() {
                    acc += a.coeff[m] * b.coeff[n] * c.entries()[[n, m]];
                }
            }
            acc
        }
        // ⟨c_m c_n†⟩ = δ_{mn} − C_{mn}
        (false, true) => {
            let mut acc = C64::new(0.0, 0.0);
            for m in 0..a.coeff.len() {
                for n in 0..b.coeff.len() {
                    let delta = if m == n { 1.0 } else { 0.0 };
                    acc += a.coeff[m] * b.coeff[n] * (C64::new(delta, 0.0) - c.entries()[[m, n]]);
                }
            }
            acc
        }
    }
}

/// Wick expansion of ⟨a_1 a_2 ⋯ a_{2k}⟩ for a Gaussian state.
pub fn wick_expectation(c: &CorrelationMatrix, ops: &[LinearOp]) -> C64 {
    if !ops.len().is_multiple_of(2) {
        return C64::new(0.0, 0.0);
    }
    if ops.is_empty() {
        return C64::new(1.0, 0.0);
    }
    let mut acc = C64::new(0.0, 0.0);
    for j in 1..ops.len() {
        let pair = contract(c, &ops[0], &ops[j]);
        if pair.norm() == 0.0 {
            continue;
        }
        let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
        let rest: Vec<LinearOp> = ops
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != 0 && *i != j)
            .map(|(_, o)| o.clone())
            .collect();
        acc += C64::new(sign, 0.0) * pair * wick_expectation(c, &rest);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::build_tight_binding_model;
    use crate::linalg::{identity, max_abs_diff};

    #[test]
    fn infinite_temperature_is_half_filling() {
        let h = crate::linalg::random_hermitian(4, 5).into_entries();
        let c = gibbs_correlation(&h, 0.0, 0.3).unwrap();
        assert!(max_abs_diff(c.entries(), &identity(4).mapv(|x| x * C64::new(0.5, 0.0))) < 1e-12);
    }

    #[test]
    fn zero_temperature_projects_below_mu() {
        let mut h = CMat::zeros((3, 3));
        h[[0, 0]] = C64::new(-1.0, 0.0);
        h[[1, 1]] = C64::new(0.4, 0.0);
        h[[2, 2]] = C64::new(2.0, 0.0);
        let c = gibbs_correlation(&h, 600.0, 1.0).unwrap();
        assert!((c.occupation(0) - 1.0).abs() < 1e-12);
        assert!((c.occupation(1) - 1.0).abs() < 1e-12);
        assert!(c.occupation(2) < 1e-12);
    }

    #[test]
    fn occupations_match_fock_gibbs() {
        let recipe = TightBindingRecipe::single_reservoir(1, 2, 1.0, 1.0, 0.0, 0.4);
        let qm = QuadraticModel::from_recipe(&recipe).unwrap();
        let model = build_tight_binding_model(&recipe).unwrap();
        let w0 = CMat::zeros((1, 1));
        let cq = initial_correlation_protocol(&qm, &w0).unwrap();
        let rho = crate::states::initial_state_protocol(&model, &w0).unwrap();
        for m in 0..3 {
            let n_m = model.basis.number(m);
            assert!(
                (cq.occupation(m) - rho.expect(&n_m)).abs() < 1e-10,
                "mode {m} occupation mismatch"
            );
        }
    }

    #[test]
    fn stationary_state_stays_put_and_trace_is_conserved() {
        let recipe = TightBindingRecipe::single_reservoir(1, 3, 1.0, 1.4, 0.1, 0.3);
        let qm = QuadraticModel::from_recipe(&recipe).unwrap();
        let w0 = CMat::zeros((1, 1));
        let sched = DriveSchedule::stepwise(w0.clone(), w0.clone(), 0.5, 6.0).unwrap();
        let c0 = initial_correlation_protocol(&qm, &w0).unwrap();
        let trace =
            evolve_correlation(&qm, &sched, &c0, 6.0, &[3.0], &StepControl::default()).unwrap();
        // The coupled Gibbs state is stationary under the undriven evolution.
        assert!(max_abs_diff(&trace.last().entries, c0.entries()) < 1e-10);
        let tr0: C64 = c0.entries().diag().sum();
        let tr1: C64 = trace.last().entries.diag().sum();
        assert!((tr0 - tr1).norm() < 1e-10);
    }

    #[test]
    fn evolved_spectrum_stays_in_unit_interval() {
        let recipe = TightBindingRecipe::single_reservoir(1, 4, 1.0, 2.0, 0.0, 0.5);
        let qm = QuadraticModel::from_recipe(&recipe).unwrap();
        let w0 = CMat::zeros((1, 1));
        let wf = ndarray::array![[C64::new(0.8, 0.0)]];
        let sched = DriveSchedule::stepwise(w0.clone(), wf, 0.4, 4.0).unwrap();
        let c0 = initial_correlation_protocol(&qm, &w0).unwrap();
        let trace =
            evolve_correlation(&qm, &sched, &c0, 4.0, &[], &StepControl::default()).unwrap();
        for m in &trace.mats {
            // The constructor enforces the [−1e-10, 1+1e-10] window.
            CorrelationMatrix::new(m.clone()).unwrap();
        }
    }

    #[test]
    fn block_entropies() {
        // Pure occupations → zero entropy; half filling → ln 2 per mode.
        let mut c = CMat::zeros((3, 3));
        c[[0, 0]] = C64::new(1.0, 0.0);
        c[[2, 2]] = C64::new(0.5, 0.0);
        let cm = CorrelationMatrix::new(c).unwrap();
        assert!(entropy_from_correlation(&cm, &[0, 1]).unwrap().abs() < 1e-12);
        assert!((entropy_from_correlation(&cm, &[2]).unwrap() - (2.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn density_matrix_reconstruction_matches_entropy() {
        let recipe = TightBindingRecipe::single_reservoir(2, 2, 1.0, 1.1, 0.2, 0.35);
        let qm = QuadraticModel::from_recipe(&recipe).unwrap();
        let w0 = CMat::zeros((2, 2));
        let c = initial_correlation_protocol(&qm, &w0).unwrap();
        let block = c.sub_block(&qm.system_modes());
        let rho = density_matrix_from_block(&block).unwrap();
        let s_fock = crate::states::vn_entropy(&rho);
        let s_corr = entropy_from_correlation(&c, &qm.system_modes()).unwrap();
        assert!((s_fock - s_corr).abs() < 1e-9, "{s_fock} vs {s_corr}");
        // Occupations agree too.
        let basis = OperatorBasis::with_modes(2);
        for m in 0..2 {
            assert!((rho.expect(&basis.number(m)) - c.occupation(m)).abs() < 1e-10);
        }
    }

    #[test]
    fn wick_reproduces_bilinear_and_quartic_expectations() {
        let recipe = TightBindingRecipe::single_reservoir(1, 2, 1.0, 0.9, 0.0, 0.5);
        let qm = QuadraticModel::from_recipe(&recipe).unwrap();
        let w0 = CMat::zeros((1, 1));
        let c = initial_correlation_protocol(&qm, &w0).unwrap();
        let n = qm.n;
        // ⟨c_0†c_0⟩ from Wick = C_00.
        let ops = vec![LinearOp::creation(n, 0), LinearOp::annihilation(n, 0)];
        assert!((wick_expectation(&c, &ops).re - c.occupation(0)).abs() < 1e-12);
        // ⟨n_0 n_1⟩ against the Fock backend.
        let model = build_tight_binding_model(&recipe).unwrap();
        let rho = crate::states::initial_state_protocol(&model, &w0).unwrap();
        let ops = vec![
            LinearOp::creation(n, 0),
            LinearOp::annihilation(n, 0),
            LinearOp::creation(n, 1),
            LinearOp::annihilation(n, 1),
        ];
        let wick = wick_expectation(&c, &ops).re;
        let fock = rho.expect(&model.basis.density_density(0, 1));
        assert!((wick - fock).abs() < 1e-10, "wick {wick} vs fock {fock}");
    }

    #[test]
    fn interacting_recipe_is_rejected() {
        let mut recipe = TightBindingRecipe::single_reservoir(1, 2, 1.0, 1.0, 0.0, 0.4);
        recipe.interaction_u = 0.3;
        assert!(matches!(
            QuadraticModel::from_recipe(&recipe),
            Err(CoreError::Capability(_))
        ));
    }
}
