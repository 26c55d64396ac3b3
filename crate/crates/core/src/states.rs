//! Equilibrium and reference states: Gibbs/grand-canonical ensembles, the
//! finite-dimensional KMS boundary-condition check, and entropies.
//!
//! The modular convention is temperature −1: the flow generated by `K`
//! is `σ_x(B) = e^{−iKx} B e^{iKx}`, and its KMS state is `e^{−K}/Z`.
//! Physical inverse temperatures enter once, through
//! `K = Σ_j β_j (H_j − Σ_λ μ_λ^{(j)} N_λ^{(j)}) − D_S`.


use crate::error::{CoreError, Result};
use crate::fock::ModelSpec;
use crate::linalg::{
    self, dagger, eigh, max_abs_diff, partial_trace, trace_pair, CMat, DensityMatrix,
    HermitianOperator, C64,
};
use crate::numeric::extrapolate_to_zero;

/// Relative eigenvalue threshold below which a direction counts as outside
/// the support of a state.
const SUPPORT_FLOOR: f64 = 1e-14;
/// Probability weight outside the support that triggers the +∞ marker.
const SUPPORT_WEIGHT_TOL: f64 = 1e-12;

/// Generator of the modular flow, `ρ ∝ e^{−K}`.
#[derive(Debug, Clone)]
pub struct ModularGenerator {
    k: HermitianOperator,
}

impl ModularGenerator {
    pub fn new(k: HermitianOperator) -> Self {
        Self { k }
    }

    /// `K_ω = Σ_j β_j (H_j − Σ_λ μ_λ^{(j)} N_λ^{(j)}) − D_S` for the model's
    /// local-equilibrium ensemble.
    pub fn local_equilibrium(model: &ModelSpec) -> Result<Self> {
        let dim = model.dim();
        let mut k = CMat::zeros((dim, dim));
        for (j, h_j) in model.h_reservoir.iter().enumerate() {
            let mut term = h_j.clone();
            for (lam, n) in model.n_reservoir[j].iter().enumerate() {
                term = term - n.mapv(|x| x * C64::new(model.mu[j][lam], 0.0));
            }
            k = k + term.mapv(|x| x * C64::new(model.beta[j], 0.0));
        }
        if let Some(d) = &model.d_system {
            k -= d;
        }
        Ok(Self { k: HermitianOperator::from_hermitized(k)? })
    }

    pub fn k(&self) -> &HermitianOperator {
        &self.k
    }
}

/// `ρ = e^{−K}/Tr e^{−K}`, computed through the eigenbasis of `K` with the
/// spectrum shifted by its minimum so the exponentials never overflow.
pub fn gibbs_state(k: &ModularGenerator) -> Result<DensityMatrix> {
    let spec = eigh(k.k())?;
    let min = spec.eigenvalues[0];
    let max = spec.eigenvalues[spec.eigenvalues.len() - 1];
    if max - min > linalg::EXP_LIMIT {
        return Err(CoreError::Range { exponent: max - min, limit: linalg::EXP_LIMIT });
    }
    let weights: Vec<f64> = spec.eigenvalues.iter().map(|&l| (-(l - min)).exp()).collect();
    let z: f64 = weights.iter().sum();
    let rho = spec.map(|l| C64::new((-(l - min)).exp() / z, 0.0));
    DensityMatrix::new(rho)
}

/// Driven-protocol initial state for a single-reservoir model:
/// `ρ ∝ exp(−β(H_1 + H_S + W_0⊗1 + κV − Σ_λ μ_λ N_λ^tot))`.
///
/// `w0_sp` is the initial drive as a single-particle matrix on the system
/// modes; the static system Hamiltonian is folded in, so the drive and
/// `H_S` act as one system operator throughout the protocol machinery.
pub fn initial_state_protocol(model: &ModelSpec, w0_sp: &CMat) -> Result<DensityMatrix> {
    let k = protocol_generator(model, w0_sp)?;
    gibbs_state(&k)
}

pub fn protocol_generator(model: &ModelSpec, w0_sp: &CMat) -> Result<ModularGenerator> {
    if model.reservoir_count() != 1 {
        return Err(CoreError::Config(format!(
            "driven protocol requires exactly one reservoir, model has {}",
            model.reservoir_count()
        )));
    }
    let beta = model.beta[0];
    let sys_modes = model.layout.mode_indices(crate::fock::Region::System);
    let mut k = model.h_reservoir[0].clone()
        + &model.h_system
        + model.basis.quadratic_form(w0_sp, &sys_modes)
        + model.v.mapv(|x| x * C64::new(model.kappa, 0.0));
    for (lam, mu) in model.mu[0].iter().enumerate() {
        if *mu != 0.0 {
            k = k - model.n_total(lam).mapv(|x| x * C64::new(*mu, 0.0));
        }
    }
    Ok(ModularGenerator::new(HermitianOperator::from_hermitized(
        k.mapv(|x| x * C64::new(beta, 0.0)),
    )?))
}

/// Bare-system reference data: enough to build the reference Gibbs chain
/// `ρ_j ∝ exp(−β(H_S + W_j − Σ_λ μ_λ N_λ^S))` without ever constructing the
/// full Fock space (so it also serves the correlation-matrix backend).
#[derive(Debug, Clone)]
pub struct SystemReference {
    /// Static system Hamiltonian on the system factor.
    pub h_s: CMat,
    /// Species number operators on the system factor.
    pub n_s: Vec<CMat>,
    pub beta: f64,
    pub mu: Vec<f64>,
    basis: crate::fock::OperatorBasis,
}

impl SystemReference {
    pub fn from_model(model: &ModelSpec) -> Self {
        Self {
            h_s: model.h_system_s.clone(),
            n_s: model.n_system_s.clone(),
            beta: model.beta[0],
            mu: model.mu[0].clone(),
            basis: crate::fock::OperatorBasis::with_modes(model.layout.system_mode_count()),
        }
    }

    pub fn from_recipe(recipe: &crate::fock::TightBindingRecipe) -> Self {
        let ns = recipe.system_sites;
        let basis = crate::fock::OperatorBasis::with_modes(ns);
        let dim = basis.dim();
        let mut h_s = CMat::zeros((dim, dim));
        let mut n_s = CMat::zeros((dim, dim));
        for k in 0..ns {
            let eps = recipe.system_onsite.get(k).copied().unwrap_or(0.0);
            if eps != 0.0 {
                h_s = h_s + basis.number(k).mapv(|x| x * C64::new(eps, 0.0));
            }
            if recipe.system_hopping != 0.0 && k + 1 < ns {
                h_s = h_s + basis.bond(k, k + 1, -recipe.system_hopping);
            }
            n_s = n_s + basis.number(k);
        }
        Self {
            h_s,
            n_s: vec![n_s],
            beta: recipe.reservoirs[0].beta,
            mu: vec![recipe.reservoirs[0].mu],
            basis,
        }
    }

    /// Gibbs state of the system factor at drive level `w_sp`
    /// (single-particle system matrix).
    pub fn gibbs(&self, w_sp: &CMat) -> Result<DensityMatrix> {
        let modes: Vec<usize> = (0..self.basis.n_modes()).collect();
        let mut k = self.h_s.clone() + self.basis.quadratic_form(w_sp, &modes);
        for (lam, mu) in self.mu.iter().enumerate() {
            if *mu != 0.0 {
                k = k - self.n_s[lam].mapv(|x| x * C64::new(*mu, 0.0));
            }
        }
        gibbs_state(&ModularGenerator::new(HermitianOperator::from_hermitized(
            k.mapv(|x| x * C64::new(self.beta, 0.0)),
        )?))
    }
}

/// Reference Gibbs state of the bare system factor for a drive value `w_s`
/// (single-particle system matrix).
pub fn system_reference_state(model: &ModelSpec, w_s: &CMat) -> Result<DensityMatrix> {
    let ns = model.layout.system_mode_count();
    let basis = crate::fock::OperatorBasis::with_modes(ns);
    let modes: Vec<usize> = (0..ns).collect();
    let beta = model.beta[0];
    let mut k = model.h_system_s.clone() + basis.quadratic_form(w_s, &modes);
    for (lam, mu) in model.mu[0].iter().enumerate() {
        if *mu != 0.0 {
            k = k - model.n_system_s[lam].mapv(|x| x * C64::new(*mu, 0.0));
        }
    }
    gibbs_state(&ModularGenerator::new(HermitianOperator::from_hermitized(
        k.mapv(|x| x * C64::new(beta, 0.0)),
    )?))
}

/// KMS boundary residual `|Tr(ρ A σ_{−i}(B)) − Tr(ρ B A)|` at x = 0, where
/// `σ_x(B) = e^{−iKx} B e^{iKx}`.
///
/// Errors if `ρ` is not the Gibbs state of `K` to 1e-10.
pub fn kms_boundary_check(
    rho: &DensityMatrix,
    k: &ModularGenerator,
    a: &HermitianOperator,
    b: &HermitianOperator,
) -> Result<f64> {
    let gibbs = gibbs_state(k)?;
    let dev = max_abs_diff(rho.entries(), gibbs.entries());
    if dev > 1e-10 {
        return Err(CoreError::Consistency(format!(
            "state is not the KMS state of the given generator (deviation {dev:.3e})"
        )));
    }
    let spec = eigh(k.k())?;
    // σ_{−i}(B) = e^{−K} B e^{K}: elementwise e^{−(λ_a−λ_b)} in the K basis.
    let q = &spec.eigenvectors;
    let bt = dagger(q).dot(b.entries()).dot(q);
    let n = bt.nrows();
    let mut scaled = bt;
    for r in 0..n {
        for c in 0..n {
            let arg = -(spec.eigenvalues[r] - spec.eigenvalues[c]);
            scaled[[r, c]] *= C64::new(arg.exp(), 0.0);
        }
    }
    let sigma_b = q.dot(&scaled).dot(&dagger(q));
    let lhs = trace_pair(rho.entries(), &a.entries().dot(&sigma_b));
    let rhs = trace_pair(rho.entries(), &b.entries().dot(a.entries()));
    Ok((lhs - rhs).norm())
}

/// Von Neumann entropy in nats, with `0·ln 0 := 0`.
pub fn vn_entropy(rho: &DensityMatrix) -> f64 {
    let spec = eigh(&rho.as_hermitian()).expect("density matrix is Hermitian");
    spec.eigenvalues
        .iter()
        .map(|&p| if p > 0.0 { -p * p.ln() } else { 0.0 })
        .sum()
}

/// Relative entropy `S(ρ‖σ) = Tr ρ(ln ρ − ln σ)` in nats.
///
/// Returns `+∞` when `ρ` carries weight (> 1e-12) outside the support of
/// `σ`; never a finite garbage value.
pub fn relative_entropy(rho: &DensityMatrix, sigma: &DensityMatrix) -> f64 {
    let spec_r = eigh(&rho.as_hermitian()).expect("density matrix is Hermitian");
    let spec_s = eigh(&sigma.as_hermitian()).expect("density matrix is Hermitian");
    let s_max = spec_s.eigenvalues.iter().fold(0.0f64, |m, &x| m.max(x));
    // Weight of ρ on the null directions of σ.
    let qs = &spec_s.eigenvectors;
    let overlap = dagger(qs).dot(rho.entries()).dot(qs);
    let mut null_weight = 0.0;
    for (k, &s) in spec_s.eigenvalues.iter().enumerate() {
        if s < SUPPORT_FLOOR * s_max {
            null_weight += overlap[[k, k]].re;
        }
    }
    if null_weight > SUPPORT_WEIGHT_TOL {
        return f64::INFINITY;
    }
    let tr_rho_ln_rho: f64 = spec_r
        .eigenvalues
        .iter()
        .map(|&p| if p > 0.0 { p * p.ln() } else { 0.0 })
        .sum();
    let mut tr_rho_ln_sigma = 0.0;
    for (k, &s) in spec_s.eigenvalues.iter().enumerate() {
        let p = overlap[[k, k]].re;
        let s_clamped = s.max(linalg::LOG_FLOOR);
        tr_rho_ln_sigma += p * s_clamped.ln();
    }
    tr_rho_ln_rho - tr_rho_ln_sigma
}

/// Entropy summary for a state (and optionally its distance to a reference).
#[derive(Debug, Clone)]
pub struct EntropyReport {
    pub vn_entropy: f64,
    pub relative_entropy: f64,
    pub spectrum: Vec<f64>,
}

pub fn entropy_report(rho: &DensityMatrix, reference: Option<&DensityMatrix>) -> EntropyReport {
    let spec = eigh(&rho.as_hermitian()).expect("density matrix is Hermitian");
    EntropyReport {
        vn_entropy: vn_entropy(rho),
        relative_entropy: reference.map(|s| relative_entropy(rho, s)).unwrap_or(0.0),
        spectrum: spec.eigenvalues.to_vec(),
    }
}

/// Weak-coupling consistency of the coupled Gibbs ensemble: the system
/// marginal of the `κV`-perturbed state, extrapolated `κ → 0`, must land on
/// the bare system Gibbs state.
#[derive(Debug, Clone)]
pub struct PerturbedKmsReport {
    pub kappas: Vec<f64>,
    /// `‖ρ_S(κ) − ρ_ref‖_max` per κ.
    pub deviations: Vec<f64>,
    /// Same metric for the κ → 0 polynomial extrapolation of `ρ_S(κ)`.
    pub extrapolated_deviation: f64,
    /// Whether the deviations decrease monotonically with κ. A `false` here
    /// is a diagnostic (reservoir too small), not a failure.
    pub monotone: bool,
}

pub fn perturbed_kms_limit_check(
    model: &ModelSpec,
    w_s: &CMat,
    kappas: &[f64],
) -> Result<PerturbedKmsReport> {
    if model.reservoir_count() != 1 {
        return Err(CoreError::Config("perturbed-KMS check needs a single reservoir".into()));
    }
    if kappas.is_empty() {
        return Err(CoreError::Parameter("kappa list must be non-empty".into()));
    }
    let ns = model.layout.system_mode_count();
    let dim_s = 1usize << ns;
    let reference = system_reference_state(model, w_s)?;

    let mut marginals: Vec<CMat> = Vec::with_capacity(kappas.len());
    let mut deviations = Vec::with_capacity(kappas.len());
    for &kappa in kappas {
        let mut m = model.clone();
        m.kappa = kappa;
        let rho = initial_state_protocol(&m, w_s)?;
        let marginal = model.system_marginal(rho.entries())?;
        deviations.push(max_abs_diff(&marginal, reference.entries()));
        marginals.push(marginal);
    }

    // Entrywise polynomial extrapolation in κ² (perturbative corrections to
    // the marginal are even in κ: flipping the bond sign is a gauge
    // transform).
    let xs: Vec<f64> = kappas.iter().map(|k| k * k).collect();
    let mut extrap = CMat::zeros((dim_s, dim_s));
    for r in 0..dim_s {
        for c in 0..dim_s {
            let re: Vec<f64> = marginals.iter().map(|m| m[[r, c]].re).collect();
            let im: Vec<f64> = marginals.iter().map(|m| m[[r, c]].im).collect();
            extrap[[r, c]] =
                C64::new(extrapolate_to_zero(&xs, &re), extrapolate_to_zero(&xs, &im));
        }
    }
    let extrapolated_deviation = max_abs_diff(&extrap, reference.entries());

    let mut order: Vec<usize> = (0..kappas.len()).collect();
    order.sort_by(|&i, &j| kappas[i].abs().total_cmp(&kappas[j].abs()));
    let monotone = order
        .windows(2)
        .all(|w| deviations[w[0]] <= deviations[w[1]] + 1e-12);

    Ok(PerturbedKmsReport { kappas: kappas.to_vec(), deviations, extrapolated_deviation, monotone })
}
