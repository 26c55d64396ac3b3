//! Dense complex kernels: Hermitian eigendecomposition and everything the
//! rest of the crate derives from it.
//!
//! The eigendecomposition is the single primitive; `expm_h` and `logm_pd`
//! are spectral functions of it, so there is exactly one tested code path
//! and results are reproducible bit-for-bit for identical inputs.

use ndarray::prelude::*;
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64;

use crate::error::{CoreError, Result};

pub type C64 = Complex64;
pub type CMat = Array2<C64>;

/// Relative Hermiticity tolerance (against the max absolute entry).
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Max-entry tolerance for `U U† = 1`.
pub const UNITARITY_TOL: f64 = 1e-10;
/// Trace-one tolerance for density matrices.
pub const TRACE_TOL: f64 = 1e-12;
/// Smallest admissible density-matrix eigenvalue.
pub const EIG_FLOOR: f64 = -1e-12;
/// Relative reconstruction tolerance for spectral decompositions.
pub const RECONSTRUCTION_TOL: f64 = 1e-10;
/// Default eigenvalue clamp for logarithms of density matrices.
pub const LOG_FLOOR: f64 = 1e-300;
/// Largest safe real exponent in `expm_h`.
pub const EXP_LIMIT: f64 = 700.0;

pub fn identity(dim: usize) -> CMat {
    Array2::eye(dim)
}

pub fn dagger(a: &CMat) -> CMat {
    a.t().mapv(|x| x.conj())
}

/// Max-entry norm `‖A‖_max`.
pub fn max_abs(a: &CMat) -> f64 {
    a.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn scale(a: &CMat, s: C64) -> CMat {
    a.mapv(|x| x * s)
}

/// `(A + A†)/2`; used to strip roundoff off operators that are Hermitian by
/// construction.
pub fn hermitize(a: &CMat) -> CMat {
    let ad = dagger(a);
    (a + &ad).mapv(|x| x * C64::new(0.5, 0.0))
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a.dot(b) - b.dot(a)
}

pub fn anticommutator(a: &CMat, b: &CMat) -> CMat {
    a.dot(b) + b.dot(a)
}

/// `Tr(ρ A)` without forming the product matrix.
pub fn trace_pair(rho: &CMat, a: &CMat) -> C64 {
    let n = rho.nrows();
    debug_assert_eq!(a.nrows(), n);
    let mut acc = C64::new(0.0, 0.0);
    for k in 0..n {
        for l in 0..n {
            acc += rho[[k, l]] * a[[l, k]];
        }
    }
    acc
}

pub fn trace(a: &CMat) -> C64 {
    a.diag().sum()
}

/// Kronecker product with the first factor owning the most significant index.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    let mut out = CMat::zeros((ra * rb, ca * cb));
    for i in 0..ra {
        for j in 0..ca {
            let aij = a[[i, j]];
            if aij == C64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..rb {
                for l in 0..cb {
                    out[[i * rb + k, j * cb + l]] = aij * b[[k, l]];
                }
            }
        }
    }
    out
}

/// Partial trace over the factors *not* listed in `keep`.
///
/// `dims` are the factor dimensions in tensor order (first factor = most
/// significant index, matching [`kron`]); `keep` must be strictly ascending.
pub fn partial_trace(a: &CMat, dims: &[usize], keep: &[usize]) -> Result<CMat> {
    let total: usize = dims.iter().product();
    if a.nrows() != total || a.ncols() != total {
        return Err(CoreError::Dimension(format!(
            "operator is {}x{} but factor dims multiply to {}",
            a.nrows(),
            a.ncols(),
            total
        )));
    }
    if keep.windows(2).any(|w| w[0] >= w[1]) || keep.iter().any(|&k| k >= dims.len()) {
        return Err(CoreError::Parameter(
            "keep set must be strictly ascending factor indices".into(),
        ));
    }
    let traced: Vec<usize> = (0..dims.len()).filter(|i| !keep.contains(i)).collect();
    let mut stride = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        stride[i] = stride[i + 1] * dims[i + 1];
    }
    let kd: usize = keep.iter().map(|&i| dims[i]).product();
    let td: usize = traced.iter().map(|&i| dims[i]).product();
    let mut out = CMat::zeros((kd, kd));

    // Flat offsets of every kept and traced multi-index.
    let offsets = |set: &[usize], count: usize| -> Vec<usize> {
        let mut offs = vec![0usize; count];
        for (flat, off) in offs.iter_mut().enumerate() {
            let mut rem = flat;
            for &f in set.iter().rev() {
                *off += (rem % dims[f]) * stride[f];
                rem /= dims[f];
            }
        }
        offs
    };
    let keep_offs = offsets(keep, kd);
    let tr_offs = offsets(&traced, td);

    for (r, &ro) in keep_offs.iter().enumerate() {
        for (c, &co) in keep_offs.iter().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for &to in &tr_offs {
                acc += a[[ro + to, co + to]];
            }
            out[[r, c]] = acc;
        }
    }
    Ok(out)
}

fn check_square(entries: &CMat) -> Result<usize> {
    let (r, c) = entries.dim();
    if r != c || r == 0 {
        return Err(CoreError::Dimension(format!("expected square nonempty matrix, got {r}x{c}")));
    }
    Ok(r)
}

/// Dense Hermitian operator; construction verifies `A = A†` to
/// [`HERMITICITY_TOL`] relative to the largest entry.
#[derive(Debug, Clone)]
pub struct HermitianOperator {
    dim: usize,
    entries: CMat,
}

impl HermitianOperator {
    pub fn new(entries: CMat) -> Result<Self> {
        let dim = check_square(&entries)?;
        let scale = max_abs(&entries).max(1.0);
        let dev = max_abs_diff(&entries, &dagger(&entries));
        if dev > HERMITICITY_TOL * scale {
            return Err(CoreError::structural(format!(
                "HermitianOperator: ‖A − A†‖_max = {dev:.3e} exceeds {HERMITICITY_TOL:.1e}·‖A‖_max"
            )));
        }
        Ok(Self { dim, entries })
    }

    /// For operators Hermitian by construction: symmetrise roundoff away
    /// instead of re-validating.
    pub fn from_hermitized(entries: CMat) -> Result<Self> {
        let dim = check_square(&entries)?;
        Ok(Self { dim, entries: hermitize(&entries) })
    }

    pub fn zero(dim: usize) -> Self {
        Self { dim, entries: CMat::zeros((dim, dim)) }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &CMat {
        &self.entries
    }

    pub fn into_entries(self) -> CMat {
        self.entries
    }

    /// Spectral norm (largest |eigenvalue|).
    pub fn op_norm(&self) -> Result<f64> {
        let s = eigh(self)?;
        Ok(s.eigenvalues.iter().map(|x| x.abs()).fold(0.0, f64::max))
    }
}

/// Unitary operator; construction verifies `U U† = 1` to [`UNITARITY_TOL`].
#[derive(Debug, Clone)]
pub struct UnitaryOperator {
    dim: usize,
    entries: CMat,
}

impl UnitaryOperator {
    pub fn new(entries: CMat) -> Result<Self> {
        let dim = check_square(&entries)?;
        let dev = max_abs_diff(&entries.dot(&dagger(&entries)), &identity(dim));
        if dev > UNITARITY_TOL {
            return Err(CoreError::structural(format!(
                "UnitaryOperator: ‖UU† − 1‖_max = {dev:.3e} exceeds {UNITARITY_TOL:.1e}"
            )));
        }
        Ok(Self { dim, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &CMat {
        &self.entries
    }

    pub fn into_entries(self) -> CMat {
        self.entries
    }

    /// `U A U†`.
    pub fn conjugate(&self, a: &CMat) -> CMat {
        self.entries.dot(a).dot(&dagger(&self.entries))
    }
}

/// Density matrix; Hermitian, unit trace, spectrum ≥ [`EIG_FLOOR`].
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    dim: usize,
    entries: CMat,
}

impl DensityMatrix {
    pub fn new(entries: CMat) -> Result<Self> {
        let dim = check_square(&entries)?;
        let scale = max_abs(&entries).max(1.0);
        let herm_dev = max_abs_diff(&entries, &dagger(&entries));
        if herm_dev > HERMITICITY_TOL * scale {
            return Err(CoreError::structural(format!(
                "DensityMatrix: hermiticity deviation {herm_dev:.3e}"
            )));
        }
        let tr = trace(&entries);
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(CoreError::structural(format!(
                "DensityMatrix: trace = {tr} differs from 1 beyond {TRACE_TOL:.1e}"
            )));
        }
        let herm = HermitianOperator { dim, entries: hermitize(&entries) };
        let spec = eigh(&herm)?;
        let min = spec.eigenvalues[0];
        if min < EIG_FLOOR {
            return Err(CoreError::structural(format!(
                "DensityMatrix: minimum eigenvalue {min:.3e} below {EIG_FLOOR:.1e}"
            )));
        }
        Ok(Self { dim, entries: herm.entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &CMat {
        &self.entries
    }

    pub fn as_hermitian(&self) -> HermitianOperator {
        HermitianOperator { dim: self.dim, entries: self.entries.clone() }
    }

    /// Expectation value `Tr(ρ A)`; result should be real for Hermitian `A`.
    pub fn expect(&self, a: &CMat) -> f64 {
        trace_pair(&self.entries, a).re
    }
}

/// Eigensystem of a Hermitian operator: ascending eigenvalues, orthonormal
/// eigenvector columns, deterministic ordering and phases.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Array1<f64>,
    pub eigenvectors: CMat,
}

impl SpectralDecomposition {
    /// `Q f(Λ) Q†` for a complex-valued spectral function `f`.
    pub fn map(&self, f: impl Fn(f64) -> C64) -> CMat {
        let d = self.eigenvalues.len();
        let mut scaled = self.eigenvectors.clone();
        for k in 0..d {
            let w = f(self.eigenvalues[k]);
            scaled.column_mut(k).mapv_inplace(|x| x * w);
        }
        scaled.dot(&dagger(&self.eigenvectors))
    }

    pub fn reconstruct(&self) -> CMat {
        self.map(|x| C64::new(x, 0.0))
    }
}

/// Fix each eigenvector's global phase: the first component whose magnitude
/// exceeds `1e-12` of the column maximum is made real and positive.
fn fix_phases(vecs: &mut CMat) {
    let (n, cols) = vecs.dim();
    for c in 0..cols {
        let col_max = (0..n).map(|r| vecs[[r, c]].norm()).fold(0.0, f64::max);
        if col_max == 0.0 {
            continue;
        }
        let lead = (0..n).find(|&r| vecs[[r, c]].norm() > 1e-12 * col_max);
        if let Some(r) = lead {
            let v = vecs[[r, c]];
            let phase = v.conj() / v.norm();
            vecs.column_mut(c).mapv_inplace(|x| x * phase);
        }
    }
}

/// Lexicographic comparison of two eigenvector columns by (re, im) pairs.
fn lex_le(vecs: &CMat, a: usize, b: usize) -> bool {
    for r in 0..vecs.nrows() {
        let (x, y) = (vecs[[r, a]], vecs[[r, b]]);
        match x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => continue,
        }
    }
    true
}

/// Hermitian eigendecomposition.
///
/// Eigenvalues ascend; ties (within `1e-12` of the spectral scale) are broken
/// by lexicographic comparison of the phase-fixed eigenvector entries, so two
/// calls on the same matrix are bit-identical.
pub fn eigh(a: &HermitianOperator) -> Result<SpectralDecomposition> {
    let (vals, vecs) = a
        .entries
        .eigh(UPLO::Lower)
        .map_err(|e| CoreError::numerical(format!("eigh backend failure: {e}")))?;
    // This LAPACK binding hands back the conjugates of the eigenvector
    // columns for complex input (A = V* Λ Vᵀ); undo that so columns are
    // eigenvectors in the usual A = Q Λ Q† sense. Pinned by a unit test.
    let mut vecs = vecs.mapv(|x| x.conj());
    fix_phases(&mut vecs);

    let n = vals.len();
    let scale = vals.iter().fold(0.0f64, |m, &x| m.max(x.abs())).max(1.0);
    let tie = 1e-12 * scale;
    let mut order: Vec<usize> = (0..n).collect();
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (vals[end] - vals[end - 1]).abs() <= tie {
            end += 1;
        }
        if end - start > 1 {
            order[start..end].sort_by(|&i, &j| {
                if lex_le(&vecs, i, j) {
                    std::cmp::Ordering::Less
                } else {
                    std::cmp::Ordering::Greater
                }
            });
        }
        start = end;
    }

    let mut sorted_vals = Array1::zeros(n);
    let mut sorted_vecs = CMat::zeros((n, n));
    for (pos, &idx) in order.iter().enumerate() {
        sorted_vals[pos] = vals[idx];
        sorted_vecs.column_mut(pos).assign(&vecs.column(idx));
    }
    Ok(SpectralDecomposition { eigenvalues: sorted_vals, eigenvectors: sorted_vecs })
}

/// `Q e^{scale·Λ} Q†`. For purely imaginary `scale` the result is unitary.
///
/// Errors with the offending exponent if `Re(scale)·λ` exceeds
/// [`EXP_LIMIT`] for any eigenvalue.
pub fn expm_h(a: &HermitianOperator, scale: C64) -> Result<CMat> {
    if !scale.re.is_finite() || !scale.im.is_finite() {
        return Err(CoreError::Parameter("expm_h: scale must be finite".into()));
    }
    let spec = eigh(a)?;
    let worst = spec
        .eigenvalues
        .iter()
        .map(|&l| scale.re * l)
        .fold(f64::NEG_INFINITY, f64::max);
    if worst > EXP_LIMIT {
        return Err(CoreError::Range { exponent: worst, limit: EXP_LIMIT });
    }
    Ok(spec.map(|l| (scale * l).exp()))
}

/// Matrix logarithm of a density matrix with the spectrum clamped below at
/// `floor` (default [`LOG_FLOOR`]), so rank-deficient states stay finite.
pub fn logm_pd(a: &DensityMatrix, floor: f64) -> Result<HermitianOperator> {
    if !(floor > 0.0) {
        return Err(CoreError::Parameter(format!("logm_pd: floor must be positive, got {floor}")));
    }
    let spec = eigh(&a.as_hermitian())?;
    let logm = spec.map(|l| C64::new(l.max(floor).ln(), 0.0));
    HermitianOperator::from_hermitized(logm)
}

/// Seeded dense Hermitian test matrix (GUE-style), entries `O(1)`.
pub fn random_hermitian(dim: usize, seed: u64) -> HermitianOperator {
    // Small deterministic xorshift so callers don't need an RNG crate.
    let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        // Map to (-1, 1).
        (state >> 11) as f64 / (1u64 << 52) as f64 - 1.0
    };
    let mut m = CMat::zeros((dim, dim));
    for i in 0..dim {
        for j in 0..dim {
            m[[i, j]] = C64::new(next(), next());
        }
    }
    HermitianOperator::from_hermitized(hermitize(&m)).expect("square by construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigh_identity_and_diagonal() {
        let id = HermitianOperator::new(identity(2)).unwrap();
        let s = eigh(&id).unwrap();
        assert_eq!(s.eigenvalues.to_vec(), vec![1.0, 1.0]);

        let pauli_z =
            HermitianOperator::new(Array2::from_diag(&array![C64::new(1.0, 0.0), C64::new(-1.0, 0.0)]))
                .unwrap();
        let s = eigh(&pauli_z).unwrap();
        assert_eq!(s.eigenvalues.to_vec(), vec![-1.0, 1.0]);
    }

    #[test]
    fn eigh_reconstructs_random_matrix() {
        let a = random_hermitian(6, 42);
        let s = eigh(&a).unwrap();
        let err = max_abs_diff(&s.reconstruct(), a.entries());
        assert!(err <= RECONSTRUCTION_TOL * max_abs(a.entries()), "err = {err:e}");
    }

    #[test]
    fn eigh_is_bit_deterministic() {
        let a = random_hermitian(8, 7);
        let s1 = eigh(&a).unwrap();
        let s2 = eigh(&a).unwrap();
        assert_eq!(s1.eigenvalues.to_vec(), s2.eigenvalues.to_vec());
        assert!(s1
            .eigenvectors
            .iter()
            .zip(s2.eigenvectors.iter())
            .all(|(x, y)| x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits()));
    }

    #[test]
    fn eigh_rejects_non_hermitian() {
        let mut m = identity(3);
        m[[0, 1]] = C64::new(0.5, 0.2);
        let err = HermitianOperator::new(m).unwrap_err();
        assert!(matches!(err, CoreError::Structural(_)));
    }

    #[test]
    fn expm_trivial_cases() {
        let zero = HermitianOperator::zero(3);
        let e = expm_h(&zero, C64::new(-2.0, 1.0)).unwrap();
        assert!(max_abs_diff(&e, &identity(3)) < 1e-14);

        let d = HermitianOperator::new(Array2::from_diag(&array![
            C64::new(1.0, 0.0),
            C64::new(2.0, 0.0)
        ]))
        .unwrap();
        let e = expm_h(&d, C64::new(-1.0, 0.0)).unwrap();
        assert!((e[[0, 0]].re - (-1.0f64).exp()).abs() < 1e-15);
        assert!((e[[1, 1]].re - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn expm_matches_taylor_series() {
        let a = random_hermitian(4, 3);
        let scale = C64::new(0.0, -0.3);
        let e = expm_h(&a, scale).unwrap();
        // 20-term Taylor series oracle.
        let mut taylor = identity(4);
        let mut term = identity(4);
        for k in 1..=20 {
            term = term.dot(a.entries()).mapv(|x| x * scale / C64::new(k as f64, 0.0));
            taylor = taylor + &term;
        }
        assert!(max_abs_diff(&e, &taylor) < 1e-12);
        // Imaginary scale gives a unitary.
        assert!(UnitaryOperator::new(e).is_ok());
    }

    #[test]
    fn expm_group_property() {
        let a = random_hermitian(5, 11);
        for (t, s) in [(0.7, 1.9), (10.0, -4.0), (-10.0, 10.0)] {
            let ut = expm_h(&a, C64::new(0.0, -t)).unwrap();
            let us = expm_h(&a, C64::new(0.0, -s)).unwrap();
            let uts = expm_h(&a, C64::new(0.0, -(t + s))).unwrap();
            assert!(max_abs_diff(&ut.dot(&us), &uts) < 1e-10);
        }
    }

    #[test]
    fn expm_overflow_is_range_error() {
        let d = HermitianOperator::new(Array2::from_diag(&array![
            C64::new(1000.0, 0.0),
            C64::new(0.0, 0.0)
        ]))
        .unwrap();
        match expm_h(&d, C64::new(1.0, 0.0)) {
            Err(CoreError::Range { exponent, .. }) => assert!((exponent - 1000.0).abs() < 1e-9),
            other => panic!("expected range error, got {other:?}"),
        }
    }

    #[test]
    fn logm_basics_and_roundtrip() {
        let half = DensityMatrix::new(Array2::from_diag(&array![
            C64::new(0.5, 0.0),
            C64::new(0.5, 0.0)
        ]))
        .unwrap();
        let l = logm_pd(&half, LOG_FLOOR).unwrap();
        assert!((l.entries()[[0, 0]].re - 0.5f64.ln()).abs() < 1e-14);

        let pure = DensityMatrix::new(Array2::from_diag(&array![
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0)
        ]))
        .unwrap();
        let l = logm_pd(&pure, 1e-300).unwrap();
        assert!((l.entries()[[1, 1]].re - 1e-300f64.ln()).abs() < 1e-9);

        assert!(matches!(logm_pd(&pure, 0.0), Err(CoreError::Parameter(_))));

        // Full-rank round trip: expm(logm(ρ)) = ρ.
        let k = random_hermitian(4, 19);
        let ek = expm_h(&k, C64::new(-1.0, 0.0)).unwrap();
        let z = trace(&ek).re;
        let rho = DensityMatrix::new(ek.mapv(|x| x / z)).unwrap();
        let back = expm_h(&logm_pd(&rho, LOG_FLOOR).unwrap(), C64::new(1.0, 0.0)).unwrap();
        assert!(max_abs_diff(&back, rho.entries()) < 1e-10);
    }

    #[test]
    fn kron_and_partial_trace() {
        let i2 = identity(2);
        assert!(max_abs_diff(&kron(&i2, &i2), &identity(4)) < 1e-16);

        let a = random_hermitian(2, 5);
        let b = random_hermitian(3, 6);
        let ab = kron(a.entries(), b.entries());
        let tr_b = trace(b.entries());
        let red = partial_trace(&ab, &[2, 3], &[0]).unwrap();
        assert!(max_abs_diff(&red, &a.entries().mapv(|x| x * tr_b)) < 1e-12);
        let red2 = partial_trace(&ab, &[2, 3], &[1]).unwrap();
        let tr_a = trace(a.entries());
        assert!(max_abs_diff(&red2, &b.entries().mapv(|x| x * tr_a)) < 1e-12);
    }

    #[test]
    fn partial_trace_dimension_mismatch() {
        let a = identity(6);
        assert!(matches!(
            partial_trace(&a, &[2, 2], &[0]),
            Err(CoreError::Dimension(_))
        ));
    }

    #[test]
    fn trace_pair_matches_explicit_loop() {
        let rho = random_hermitian(5, 1).into_entries();
        let a = random_hermitian(5, 2).into_entries();
        let fast = trace_pair(&rho, &a);
        let slow = trace(&rho.dot(&a));
        assert!((fast - slow).norm() < 1e-12);
    }

    #[test]
    fn cyclicity_under_conjugation() {
        let a = random_hermitian(6, 21);
        let b = random_hermitian(6, 22);
        let h = random_hermitian(6, 23);
        let u = UnitaryOperator::new(expm_h(&h, C64::new(0.0, -0.9)).unwrap()).unwrap();
        let lhs = trace(&u.conjugate(a.entries()).dot(b.entries()));
        let udag = dagger(u.entries());
        let rhs = trace(&a.entries().dot(&udag.dot(b.entries()).dot(u.entries())));
        assert!((lhs - rhs).norm() < 1e-10);
    }
}
