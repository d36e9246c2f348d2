//! Finite-dimensional reduced Hartree-Fock problem.
//!
//! One-particle space is ℝⁿ with the orthonormal site basis, so the density
//! of an operator is its diagonal. The interaction is an arbitrary SPD kernel
//! `K`, giving `D(f, g) = fᵀ K g`, the Coulomb norm `‖ρ‖²_C = ρᵀ K ρ` and the
//! dual norm `‖w‖²_C' = wᵀ K⁻¹ w`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{asymmetry, sym_eigen};

/// Numerical tolerances shared by the model checks.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub spd: f64,
    pub psd: f64,
    pub trace: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            spd: 1e-10,
            psd: 1e-9,
            trace: 1e-9,
        }
    }
}

/// Symmetric matrix with spectrum in `[0, 1]` (up to `psd` tolerance).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(DMatrix<f64>);

impl DensityMatrix {
    pub fn new(gamma: DMatrix<f64>, tol: &Tolerances) -> Result<Self> {
        if !gamma.is_square() {
            return Err(Error::Dimension("density matrix must be square".into()));
        }
        let scale = gamma.norm().max(1.0);
        if asymmetry(&gamma) > 1e-10 * scale {
            return Err(Error::Input("density matrix is not symmetric".into()));
        }
        let eig = sym_eigen(&gamma);
        let n = eig.values.len();
        if n > 0 && (eig.values[0] < -tol.psd || eig.values[n - 1] > 1.0 + tol.psd) {
            return Err(Error::Input(format!(
                "density matrix spectrum [{:e}, {:e}] leaves [0, 1]",
                eig.values[0],
                eig.values[n - 1]
            )));
        }
        Ok(DensityMatrix(gamma))
    }

    /// Checked constructor for elements of `K_N` (fixed trace).
    pub fn in_k_n(gamma: DMatrix<f64>, n_electrons: usize, tol: &Tolerances) -> Result<Self> {
        let dm = Self::new(gamma, tol)?;
        let tr = dm.0.trace();
        if (tr - n_electrons as f64).abs() > tol.trace {
            return Err(Error::Input(format!(
                "trace {tr} differs from electron count {n_electrons}"
            )));
        }
        Ok(dm)
    }

    pub fn from_matrix_unchecked(gamma: DMatrix<f64>) -> Self {
        DensityMatrix(gamma)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

/// Borrow of the underlying dense matrix, for functions that accept both raw
/// matrices and checked density matrices.
pub trait AsMatrix {
    fn as_matrix(&self) -> &DMatrix<f64>;
}

impl AsMatrix for DMatrix<f64> {
    fn as_matrix(&self) -> &DMatrix<f64> {
        self
    }
}

impl AsMatrix for DensityMatrix {
    fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// External perturbing potential, one value per site.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential(DVector<f64>);

impl Potential {
    pub fn new(w: DVector<f64>) -> Result<Self> {
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::Input("potential has non-finite entries".into()));
        }
        Ok(Potential(w))
    }

    pub fn from_slice(w: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(w))
    }

    pub fn zeros(n: usize) -> Self {
        Potential(DVector::zeros(n))
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scaled(&self, beta: f64) -> Potential {
        Potential(&self.0 * beta)
    }
}

impl AsRef<DVector<f64>> for Potential {
    fn as_ref(&self) -> &DVector<f64> {
        &self.0
    }
}

/// Discretized rHF problem.
#[derive(Debug, Clone)]
pub struct LatticeSystem {
    kinetic: DMatrix<f64>,
    v_ext: DVector<f64>,
    kernel: DMatrix<f64>,
    kernel_chol: Cholesky<f64, Dyn>,
    n_electrons: usize,
}

impl LatticeSystem {
    pub fn new(
        kinetic: DMatrix<f64>,
        v_ext: DVector<f64>,
        kernel: DMatrix<f64>,
        n_electrons: usize,
        tol: &Tolerances,
    ) -> Result<Self> {
        let n = kinetic.nrows();
        if n == 0 {
            return Err(Error::Input("empty system".into()));
        }
        if !kinetic.is_square() || kernel.shape() != (n, n) || v_ext.len() != n {
            return Err(Error::Dimension(format!(
                "kinetic {:?}, kernel {:?}, v_ext {} are inconsistent",
                kinetic.shape(),
                kernel.shape(),
                v_ext.len()
            )));
        }
        if n_electrons == 0 || n_electrons > n {
            return Err(Error::Input(format!(
                "electron count {n_electrons} must lie in 1..={n}"
            )));
        }
        let sym_tol = 1e-12 * kinetic.norm().max(1.0);
        if asymmetry(&kinetic) > sym_tol {
            return Err(Error::Input("kinetic matrix is not symmetric".into()));
        }
        if asymmetry(&kernel) > 1e-12 * kernel.norm().max(1.0) {
            return Err(Error::Input("interaction kernel is not symmetric".into()));
        }
        let kmin = sym_eigen(&kernel).values[0];
        if kmin <= tol.spd {
            return Err(Error::Input(format!(
                "interaction kernel is not positive definite (min eigenvalue {kmin:e})"
            )));
        }
        let kernel = crate::linalg::symmetrize(&kernel);
        let kernel_chol = Cholesky::new(kernel.clone())
            .ok_or_else(|| Error::Input("kernel Cholesky factorization failed".into()))?;
        Ok(LatticeSystem {
            kinetic: crate::linalg::symmetrize(&kinetic),
            v_ext,
            kernel,
            kernel_chol,
            n_electrons,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.kinetic.nrows()
    }

    pub fn n_electrons(&self) -> usize {
        self.n_electrons
    }

    pub fn kinetic(&self) -> &DMatrix<f64> {
        &self.kinetic
    }

    pub fn v_ext(&self) -> &DVector<f64> {
        &self.v_ext
    }

    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    /// `kinetic + diag(v_ext)`.
    pub fn core_hamiltonian(&self) -> DMatrix<f64> {
        let mut h = self.kinetic.clone();
        for i in 0..self.n_sites() {
            h[(i, i)] += self.v_ext[i];
        }
        h
    }

    /// Hartree potential `K ρ`.
    pub fn hartree(&self, rho: &DVector<f64>) -> DVector<f64> {
        &self.kernel * rho
    }

    /// `D(f, g) = fᵀ K g`.
    pub fn coulomb_pairing(&self, f: &DVector<f64>, g: &DVector<f64>) -> f64 {
        f.dot(&(&self.kernel * g))
    }

    pub fn coulomb_norm(&self, rho: &DVector<f64>) -> f64 {
        self.coulomb_pairing(rho, rho).max(0.0).sqrt()
    }

    /// `K⁻¹ w`.
    pub fn inverse_hartree(&self, w: &DVector<f64>) -> DVector<f64> {
        self.kernel_chol.solve(w)
    }

    pub fn dual_norm(&self, w: &DVector<f64>) -> f64 {
        w.dot(&self.inverse_hartree(w)).max(0.0).sqrt()
    }

    /// Gaussian random potential rescaled to the requested dual norm.
    pub fn random_potential<R: Rng + ?Sized>(&self, rng: &mut R, dual_norm: f64) -> Potential {
        let n = self.n_sites();
        let raw = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let norm = self.dual_norm(&raw);
        Potential(raw * (dual_norm / norm))
    }

    fn check_dim(&self, len: usize, what: &str) -> Result<()> {
        if len != self.n_sites() {
            return Err(Error::Dimension(format!(
                "{what} has dimension {len}, system has {} sites",
                self.n_sites()
            )));
        }
        Ok(())
    }
}

/// Site density `ρ_i = γ_ii`.
pub fn density_of<M: AsMatrix>(gamma: &M) -> DVector<f64> {
    gamma.as_matrix().diagonal()
}

/// Density with a dimension check against the system.
pub fn density_checked<M: AsMatrix>(
    sys: &LatticeSystem,
    gamma: &M,
) -> Result<DVector<f64>> {
    let g = gamma.as_matrix();
    if !g.is_square() {
        return Err(Error::Dimension("density matrix must be square".into()));
    }
    sys.check_dim(g.nrows(), "density matrix")?;
    Ok(density_of(gamma))
}

/// rHF energy `Tr(T γ) + v_extᵀρ + ½ ρᵀKρ + wᵀρ`.
pub fn energy<M: AsMatrix>(sys: &LatticeSystem, gamma: &M, w: &Potential) -> Result<f64> {
    let rho = density_checked(sys, gamma)?;
    sys.check_dim(w.len(), "potential")?;
    let kinetic = crate::linalg::trace_product(sys.kinetic(), gamma.as_matrix());
    if !kinetic.is_finite() {
        return Err(Error::NumericOverflow { term: "kinetic" });
    }
    let external = sys.v_ext().dot(&rho);
    if !external.is_finite() {
        return Err(Error::NumericOverflow { term: "external" });
    }
    let hartree = 0.5 * sys.coulomb_pairing(&rho, &rho);
    if !hartree.is_finite() {
        return Err(Error::NumericOverflow { term: "hartree" });
    }
    let perturbation = w.values().dot(&rho);
    if !perturbation.is_finite() {
        return Err(Error::NumericOverflow { term: "perturbation" });
    }
    Ok(kinetic + external + hartree + perturbation)
}

/// Mean-field Hamiltonian `kinetic + diag(v_ext + Kρ + w)`.
pub fn mean_field(sys: &LatticeSystem, rho: &DVector<f64>, w: &Potential) -> Result<DMatrix<f64>> {
    sys.check_dim(rho.len(), "density")?;
    sys.check_dim(w.len(), "potential")?;
    let diag = sys.v_ext() + sys.hartree(rho) + w.values();
    let mut h = sys.kinetic().clone();
    for i in 0..sys.n_sites() {
        h[(i, i)] += diag[i];
    }
    Ok(h)
}

/// Translation-invariant periodic chain.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RingParams {
    pub n_sites: usize,
    pub n_electrons: usize,
    #[serde(default = "one")]
    pub hopping: f64,
    #[serde(default = "one")]
    pub yukawa_mass: f64,
    #[serde(default = "one")]
    pub coupling: f64,
    /// Constant external potential; keeps the Fermi level negative.
    #[serde(default = "default_background")]
    pub background: f64,
}

/// Periodic chain with two Gaussian wells of different depth.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DoubleWellParams {
    pub n_sites: usize,
    pub n_electrons: usize,
    #[serde(default = "one")]
    pub hopping: f64,
    #[serde(default = "one")]
    pub yukawa_mass: f64,
    #[serde(default = "one")]
    pub coupling: f64,
    #[serde(default = "default_background")]
    pub background: f64,
    pub depths: [f64; 2],
    pub centers: [f64; 2],
    #[serde(default = "default_width")]
    pub width: f64,
}

/// Prescribed mean-field spectrum with an `n_partial`-fold Fermi cluster.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SyntheticParams {
    pub n_sites: usize,
    pub n_full: usize,
    pub n_partial: usize,
    #[serde(default = "default_fermi")]
    pub fermi_level: f64,
    #[serde(default = "default_gap")]
    pub gap_below: f64,
    #[serde(default = "default_gap")]
    pub gap_above: f64,
    #[serde(default = "default_spacing")]
    pub spacing: f64,
    #[serde(default = "default_kernel_scale")]
    pub kernel_scale: f64,
    /// Fermi-shell occupation eigenvalues; defaults to an even spread in (0, 1)
    /// with integer sum.
    #[serde(default)]
    pub occupations: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}
fn default_background() -> f64 {
    -3.0
}
fn default_width() -> f64 {
    1.5
}
fn default_fermi() -> f64 {
    -1.0
}
fn default_gap() -> f64 {
    0.5
}
fn default_spacing() -> f64 {
    0.3
}
fn default_kernel_scale() -> f64 {
    0.2
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DemoKind {
    Ring(RingParams),
    DoubleWell(DoubleWellParams),
    SyntheticDegenerate(SyntheticParams),
}

pub fn build_demo_system(kind: &DemoKind) -> Result<LatticeSystem> {
    match kind {
        DemoKind::Ring(p) => ring(p),
        DemoKind::DoubleWell(p) => double_well(p),
        DemoKind::SyntheticDegenerate(p) => Ok(synthetic_degenerate(p)?.system),
    }
}

fn check_counts(n_sites: usize, n_electrons: usize) -> Result<()> {
    if n_sites < 2 {
        return Err(Error::Input("at least two sites are required".into()));
    }
    if n_electrons == 0 || n_electrons >= n_sites {
        return Err(Error::Input(format!(
            "electron count {n_electrons} must lie in 1..{n_sites}"
        )));
    }
    Ok(())
}

/// Periodic finite-difference kinetic matrix `t (2δ_ij − δ_{i,j±1})`.
pub fn ring_kinetic(n: usize, hopping: f64) -> DMatrix<f64> {
    let mut t = DMatrix::zeros(n, n);
    for i in 0..n {
        t[(i, i)] += 2.0 * hopping;
        t[(i, (i + 1) % n)] -= hopping;
        t[((i + 1) % n, i)] -= hopping;
    }
    t
}

/// Circulant screened kernel with Fourier multiplier `coupling / (k² + m²)`.
pub fn yukawa_ring_kernel(n: usize, mass: f64, coupling: f64) -> DMatrix<f64> {
    let multipliers: Vec<(f64, f64)> = (0..n)
        .map(|j| {
            let wrapped = j.min(n - j) as f64;
            let k = 2.0 * std::f64::consts::PI * wrapped / n as f64;
            (2.0 * std::f64::consts::PI * j as f64 / n as f64, coupling / (k * k + mass * mass))
        })
        .collect();
    DMatrix::from_fn(n, n, |a, b| {
        let d = a as f64 - b as f64;
        multipliers.iter().map(|&(k, m)| m * (k * d).cos()).sum::<f64>() / n as f64
    })
}

fn validate_positive(name: &str, x: f64) -> Result<()> {
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::Input(format!("{name} must be positive, got {x}")));
    }
    Ok(())
}

fn ring(p: &RingParams) -> Result<LatticeSystem> {
    check_counts(p.n_sites, p.n_electrons)?;
    validate_positive("yukawa_mass", p.yukawa_mass)?;
    validate_positive("coupling", p.coupling)?;
    let n = p.n_sites;
    LatticeSystem::new(
        ring_kinetic(n, p.hopping),
        DVector::from_element(n, p.background),
        yukawa_ring_kernel(n, p.yukawa_mass, p.coupling),
        p.n_electrons,
        &Tolerances::default(),
    )
}

fn double_well(p: &DoubleWellParams) -> Result<LatticeSystem> {
    check_counts(p.n_sites, p.n_electrons)?;
    validate_positive("yukawa_mass", p.yukawa_mass)?;
    validate_positive("coupling", p.coupling)?;
    validate_positive("width", p.width)?;
    let n = p.n_sites;
    let v_ext = DVector::from_fn(n, |i, _| {
        let x = i as f64;
        p.background
            + p
                .depths
                .iter()
                .zip(p.centers.iter())
                .map(|(&d, &c)| {
                    // periodic distance
                    let mut dx = (x - c).abs() % n as f64;
                    if dx > n as f64 / 2.0 {
                        dx = n as f64 - dx;
                    }
                    -d * (-dx * dx / (2.0 * p.width * p.width)).exp()
                })
                .sum::<f64>()
    });
    LatticeSystem::new(
        ring_kinetic(n, p.hopping),
        v_ext,
        yukawa_ring_kernel(n, p.yukawa_mass, p.coupling),
        p.n_electrons,
        &Tolerances::default(),
    )
}

/// Output of the synthetic degenerate construction: the system together with
/// the exact ground-state data it was built from.
#[derive(Debug, Clone)]
pub struct SyntheticConstruction {
    pub system: LatticeSystem,
    /// Mean-field Hamiltonian at the ground state.
    pub h0: DMatrix<f64>,
    pub eigvals: DVector<f64>,
    pub eigvecs: DMatrix<f64>,
    /// Fermi-shell occupation matrix in the `eigvecs` cluster columns.
    pub lambda: DMatrix<f64>,
    pub gamma0: DMatrix<f64>,
    pub n_full: usize,
    pub n_partial: usize,
}

pub fn default_occupations(n_partial: usize) -> Vec<f64> {
    if n_partial == 1 {
        return vec![0.5];
    }
    let m = (n_partial / 2).max(1) as f64;
    let base = m / n_partial as f64;
    let spread = 0.4 * base.min(1.0 - base);
    (0..n_partial)
        .map(|i| base + spread * (2.0 * i as f64 / (n_partial - 1) as f64 - 1.0))
        .collect()
}

pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let (q, r) = qr.unpack();
    // fix column signs so the distribution is Haar
    let mut q = q;
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            let mut c = q.column_mut(j);
            c.neg_mut();
        }
    }
    q
}

pub fn synthetic_degenerate(p: &SyntheticParams) -> Result<SyntheticConstruction> {
    let n = p.n_sites;
    if p.n_partial == 0 {
        return Err(Error::Input("n_partial must be at least 1".into()));
    }
    if p.n_full + p.n_partial >= n {
        return Err(Error::Input(format!(
            "n_full + n_partial = {} leaves no unoccupied level on {n} sites",
            p.n_full + p.n_partial
        )));
    }
    validate_positive("kernel_scale", p.kernel_scale)?;
    validate_positive("gap_below", p.gap_below)?;
    validate_positive("gap_above", p.gap_above)?;
    let occ = p
        .occupations
        .clone()
        .unwrap_or_else(|| default_occupations(p.n_partial));
    if occ.len() != p.n_partial {
        return Err(Error::Input(format!(
            "{} occupations given for a {}-fold shell",
            occ.len(),
            p.n_partial
        )));
    }
    if occ.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
        return Err(Error::Input("occupations must lie in [0, 1]".into()));
    }
    let shell_count = occ.iter().sum::<f64>();
    if (shell_count - shell_count.round()).abs() > 1e-12 || shell_count.round() < 1.0 {
        return Err(Error::Input(format!(
            "Fermi-shell occupations sum to {shell_count}, not a positive integer"
        )));
    }
    let n_electrons = p.n_full + shell_count.round() as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let q = random_orthogonal(n, &mut rng);
    let n_o = p.n_full + p.n_partial;
    let eigvals = DVector::from_fn(n, |i, _| {
        if i < p.n_full {
            p.fermi_level - p.gap_below - p.spacing * (p.n_full - 1 - i) as f64
        } else if i < n_o {
            p.fermi_level
        } else {
            p.fermi_level + p.gap_above + p.spacing * (i - n_o) as f64
        }
    });
    let rot = random_orthogonal(p.n_partial, &mut rng);
    let lambda = &rot * DMatrix::from_diagonal(&DVector::from_vec(occ)) * rot.transpose();
    let lambda = crate::linalg::symmetrize(&lambda);

    let phi_f = q.columns(0, p.n_full);
    let phi_p = q.columns(p.n_full, p.n_partial);
    let gamma0 = crate::linalg::symmetrize(&(phi_f * phi_f.transpose() + phi_p * &lambda * phi_p.transpose()));
    let rho0 = gamma0.diagonal();

    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let kernel = (&g * g.transpose() / n as f64 + DMatrix::identity(n, n)) * p.kernel_scale;
    let kernel = crate::linalg::symmetrize(&kernel);

    let h0 = crate::linalg::symmetrize(&(&q * DMatrix::from_diagonal(&eigvals) * q.transpose()));
    let kinetic = &h0 - DMatrix::from_diagonal(&(&kernel * &rho0));
    let system = LatticeSystem::new(
        kinetic,
        DVector::zeros(n),
        kernel,
        n_electrons,
        &Tolerances::default(),
    )?;
    Ok(SyntheticConstruction {
        system,
        h0,
        eigvals,
        eigvecs: q,
        lambda,
        gamma0,
        n_full: p.n_full,
        n_partial: p.n_partial,
    })
}
