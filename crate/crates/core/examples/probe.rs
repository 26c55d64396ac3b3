use mzlab_core::evolve::StepControl;
use mzlab_core::fock::*;
use mzlab_core::process::*;
use mzlab_core::quad;
use ndarray::array;
use num_complex::Complex64 as C64;
use std::time::Instant;

fn lv(e: f64) -> ndarray::Array2<C64> { array![[C64::new(e, 0.0)]] }

fn main() {
    // C5 final check (quad backend, kappa^2 extrapolation).
    let t = Instant::now();
    let recipe = TightBindingRecipe::single_reservoir(1, 8, 0.4, 6.0, -0.05, 0.1);
    let sched = schedule_with_wait_policy(&recipe, lv(0.25), lv(-0.05), 1.0, 1, 0.5).unwrap();
    let opts = ProtocolOptions { backend: BackendChoice::Quadratic, ..Default::default() };
    let v = run_stepwise(&recipe, &sched, &opts).unwrap();
    println!("C5 quad: dS={:+.5} KL={:.5} bQ={:+.5} res={:.2e} budg={:.2e} cap={:.2e} Z-exercised gap={:+.4} ({:?})",
        v.delta_s, v.deficits[0], v.beta_q, v.residual, v.budget.total(), 0.05*v.delta_s.abs(), v.clausius_gap, t.elapsed());

    // C5 on the Fock backend (runtime check).
    let t = Instant::now();
    let opts_f = ProtocolOptions { backend: BackendChoice::Fock, ..Default::default() };
    let vf = run_stepwise(&recipe, &sched, &opts_f).unwrap();
    println!("C5 fock: bQ={:+.5} res={:.2e} budg={:.2e} |bQq-bQf|={:.1e} ({:?})",
        vf.beta_q, vf.residual, vf.budget.total(), (v.beta_q - vf.beta_q).abs(), t.elapsed());

    // C7 final check.
    let t = Instant::now();
    let recipe7 = TightBindingRecipe::single_reservoir(1, 64, 0.15, 12.0, 0.0, 0.1);
    let opts7 = ProtocolOptions {
        backend: BackendChoice::Quadratic,
        kappas: vec![0.2, 0.1, 0.05],
        ctrl: StepControl { tol: 1e-6, initial_dt: 0.02, max_halvings: 12 },
        plateau_offsets: vec![-0.03, 0.0, 0.03],
    };
    let rep = convergence_study(&recipe7, &lv(0.12), &lv(-0.06), 0.2, 0.5, &[2, 4, 8, 16], &opts7).unwrap();
    println!("C7: slope={:?} gaps={:?} ({:?})", rep.slope, rep.gaps.iter().map(|g| format!("{g:.3e}")).collect::<Vec<_>>(), t.elapsed());

    // C9 final check: kappa = 0.6.
    let t = Instant::now();
    let mk = |b1: f64, b2: f64| TightBindingRecipe {
        system_sites: 1, system_onsite: vec![0.0], system_hopping: 0.0,
        reservoirs: vec![
            ReservoirRecipe { sites: 6, hopping: 0.45, onsite: 0.0, beta: b1, mu: 0.0 },
            ReservoirRecipe { sites: 6, hopping: 0.45, onsite: 0.0, beta: b2, mu: 0.0 },
        ],
        kappa: 0.6, interaction_u: 0.0, dim_cap: DEFAULT_DIM_CAP,
    };
    let recipe = mk(0.5, 2.0);
    let t_rec = recipe.t_rec();
    let grid: Vec<f64> = (0..=800).map(|k| k as f64 * 2.0 * t_rec / 800.0).collect();
    let window = (0.5 * t_rec, 1.7 * t_rec);
    let es = 0.445 * 0.45;
    let qm = quad::QuadraticModel::from_recipe(&recipe).unwrap();
    let rep = quad::divergence_diagnostic(&qm, &lv(es), &grid, window).unwrap();
    let qe = quad::QuadraticModel::from_recipe(&mk(0.5, 0.5)).unwrap();
    let req = quad::divergence_diagnostic(&qe, &lv(es), &grid, window).unwrap();
    println!("C9: slope={:+.4} mean={:+.4} match={:.3} eq_ratio={:.4} ({:?})",
        rep.fit_slope, rep.plateau_mean,
        (rep.fit_slope - rep.plateau_mean).abs() / rep.plateau_mean.abs(),
        req.fit_slope.abs() / rep.fit_slope.abs(), t.elapsed());
}
