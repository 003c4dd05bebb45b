//! Momentum-mode decomposition of the driven Ising environment.
//!
//! The chain of `N` spins with periodic boundaries reduces, in each odd-parity
//! momentum sector, to an independent two-level problem described by the
//! Bloch parameter pair
//!
//! ```text
//!   h_k(t) = -(h(t) + s*delta - cos k),   d_k = sin k,
//! ```
//!
//! where `h(t)` is the drive field, `delta` the qubit coupling, and
//! `s = +1/-1` labels the branch conditioned on the qubit state. The
//! generator of the actual mode dynamics carries the fermionic doubling of
//! the ring Hamiltonian `-sum(sx sx + h sz)`:
//!
//! ```text
//!   H_k(t) = MODE_ENERGY_SCALE * [[ h_k, d_k ], [ d_k, -h_k ]],
//! ```
//!
//! which is what gives the chain its dispersion `2 sqrt(1 + h^2 - 2h cos k)`
//! and the usual sweep-excitation exponent `exp(-2 pi tau_q sin^2 k)`.
//! Eigenvectors, and hence every ground state and overlap, do not feel the
//! scale; time-dependent solvers must. All values here are immutable after
//! construction and safe to share across threads.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::mat2::Mat2;

/// Energy scale between the Bloch parameter pair `(h_k, d_k)` and the mode
/// generator: `H_k = MODE_ENERGY_SCALE (h_k sz + d_k sx)`. The drive-noise
/// coupling operator scales identically, `dH/dh = -MODE_ENERGY_SCALE sz`.
pub const MODE_ENERGY_SCALE: f64 = 2.0;

/// Linear drive protocol `h(t) = t / tau_q`, swept from `h_i` to `h_f`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RampProtocol {
    pub tau_q: f64,
    pub h_i: f64,
    pub h_f: f64,
}

impl RampProtocol {
    pub fn new(tau_q: f64, h_i: f64, h_f: f64) -> Result<Self> {
        if !(tau_q > 0.0) || !tau_q.is_finite() {
            return Err(Error::invalid(format!("ramp time scale must be positive, got {tau_q}")));
        }
        if !(h_i < h_f) {
            return Err(Error::invalid(format!(
                "ramp requires h_i < h_f, got h_i = {h_i}, h_f = {h_f}"
            )));
        }
        Ok(RampProtocol { tau_q, h_i, h_f })
    }

    /// Start time `t_i = h_i * tau_q`.
    pub fn t_i(&self) -> f64 {
        self.h_i * self.tau_q
    }

    /// End time `t_f = h_f * tau_q`.
    pub fn t_f(&self) -> f64 {
        self.h_f * self.tau_q
    }

    /// Drive field at time `t`.
    pub fn field_at(&self, t: f64) -> f64 {
        t / self.tau_q
    }

    /// Time at which the drive reaches field value `h`.
    pub fn time_at(&self, h: f64) -> f64 {
        h * self.tau_q
    }
}

/// Static data of one momentum sector: `k = (2m - 1) pi / N`, `d_k = sin k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KMode {
    pub k: f64,
    /// Gap parameter `sin k`. Tests may override this to zero to probe the
    /// pure-dephasing limit, which is why the field stays public.
    pub delta_k: f64,
    /// 1-based sector index `m` in `[1, N/2]`.
    pub index: usize,
    /// Chain length the grid was built for.
    pub n: usize,
}

/// All `N/2` momentum modes of an even-length chain, in increasing `k`.
pub fn k_grid(n: usize) -> Result<Vec<KMode>> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "chain length must be even and >= 2, got {n}"
        )));
    }
    Ok((1..=n / 2)
        .map(|m| {
            let k = (2 * m - 1) as f64 * std::f64::consts::PI / n as f64;
            KMode { k, delta_k: k.sin(), index: m, n }
        })
        .collect())
}

/// Which qubit branch the environment evolves under: effective field
/// `h(t) + sign * delta`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BranchSign {
    Plus,
    Minus,
}

impl BranchSign {
    pub fn as_f64(&self) -> f64 {
        match self {
            BranchSign::Plus => 1.0,
            BranchSign::Minus => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BranchSpec {
    pub sign: BranchSign,
    pub delta: f64,
}

impl BranchSpec {
    pub fn plus(delta: f64) -> Self {
        BranchSpec { sign: BranchSign::Plus, delta }
    }

    pub fn minus(delta: f64) -> Self {
        BranchSpec { sign: BranchSign::Minus, delta }
    }

    /// Decoupled branch (`delta = 0`); both qubit states see the bare drive.
    pub fn none() -> Self {
        BranchSpec { sign: BranchSign::Plus, delta: 0.0 }
    }

    /// Effective field shift `sign * delta`.
    pub fn shift(&self) -> f64 {
        self.sign.as_f64() * self.delta
    }
}

/// Traceless 2x2 mode Hamiltonian `[[hk, dk], [dk, -hk]]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlochHamiltonian {
    pub hk: f64,
    pub dk: f64,
}

impl BlochHamiltonian {
    /// Half-gap `sqrt(hk^2 + dk^2)`; eigenvalues are `+-gap()`.
    pub fn gap(&self) -> f64 {
        self.hk.hypot(self.dk)
    }

    pub fn matrix(&self) -> Mat2 {
        Mat2::new(
            C64::new(self.hk, 0.0),
            C64::new(self.dk, 0.0),
            C64::new(self.dk, 0.0),
            C64::new(-self.hk, 0.0),
        )
    }
}

/// Mode Hamiltonian at drive field `h` for the given branch.
pub fn bloch_hamiltonian(mode: &KMode, h: f64, branch: BranchSpec) -> BlochHamiltonian {
    BlochHamiltonian {
        hk: -(h + branch.shift() - mode.k.cos()),
        dk: mode.delta_k,
    }
}

/// Complex spinor `(v, u)` of one branch of one mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BranchState {
    pub v: C64,
    pub u: C64,
}

impl BranchState {
    pub fn new(v: C64, u: C64) -> Self {
        BranchState { v, u }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.v.norm_sqr() + self.u.norm_sqr()
    }

    /// Inner product `<self|other>`.
    pub fn overlap(&self, other: &BranchState) -> C64 {
        self.v.conj() * other.v + self.u.conj() * other.u
    }

    /// Density matrix `|psi><psi|` in the `(v, u)` ordering.
    pub fn projector(&self) -> Mat2 {
        Mat2::outer([self.v, self.u], [self.v, self.u])
    }

    pub fn scaled(&self, s: C64) -> Self {
        BranchState { v: self.v * s, u: self.u * s }
    }
}

/// Threshold below which a mode gap is treated as exactly degenerate.
const DEGENERACY_EPS: f64 = 1e-13;

/// Normalized lower-eigenvalue eigenvector of the mode Hamiltonian.
///
/// The gauge is fixed by making the first component of nonnegligible
/// magnitude real and positive, so cross-branch overlaps are reproducible.
/// Always computed from the eigenproblem rather than assumed to be a basis
/// vector, which keeps it exact at finite starting fields.
pub fn ground_state(mode: &KMode, h: f64, branch: BranchSpec) -> Result<BranchState> {
    let ham = bloch_hamiltonian(mode, h, branch);
    let e = ham.gap();
    if e <= DEGENERACY_EPS {
        return Err(Error::DegenerateHamiltonian { k: mode.k, h, gap: e });
    }
    // Two algebraically equivalent eigenvector forms; pick the one whose
    // large component is free of cancellation.
    let (v, u) = if ham.hk >= 0.0 {
        (ham.dk, -(ham.hk + e))
    } else {
        (ham.hk - e, ham.dk)
    };
    let norm = v.hypot(u);
    let (mut v, mut u) = (v / norm, u / norm);
    // Gauge: leading component real positive (components are real here).
    let lead = if v.abs() > 1e-8 { v } else { u };
    if lead < 0.0 {
        v = -v;
        u = -u;
    }
    Ok(BranchState::new(C64::new(v, 0.0), C64::new(u, 0.0)))
}
