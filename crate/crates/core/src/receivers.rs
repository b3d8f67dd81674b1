//! Semi-blind receivers.
//!
//! * PAKRON: bilinear ALS on the third-order PARAFAC view
//!   `Z = 𝓘 ×₀ Ω ×₁ Ψ ×₂ Ḡ` with `Ω = X ⊗ HS`, followed by a rank-1
//!   Kronecker factorization of the `Ω` estimate.
//! * TALS-TUCKER: trilinear ALS on the fourth-order TUCKER view
//!   `Q = C ×₀ HS ×₁ X ×₂ Ψ ×₃ Ḡ` with known `Ψ` and core `C`.
//! * A zero-forcing symbol detector with perfect channel knowledge.
//!
//! Both channel estimates carry the model's diagonal ambiguities
//! (`HS·D` against `D⁻¹` in `Ḡ`, `X·E` against `E⁻¹` in `Ḡ`). The per-stream
//! symbol ambiguity `E` is removed with the known reference row by
//! [`resolve_and_detect`]; `D` is left for evaluation-time alignment.

use std::str::FromStr;
use std::time::Instant;

use crate::config::SolverKnobs;
use crate::error::{Error, Result};
use crate::identifiability::{require_pakron, require_tucker, Dims};
use crate::seed::{complex_normal_matrix, rng};
use crate::signal::{
    reshape_views, ChannelSet, Constellation, ReceivedTensor, ScatteringDesign,
};
use crate::tensor::{
    best_rank1, c64, khatri_rao, kron, pinv_with_rank, unfold, unvec, ComplexMatrix,
    ComplexTensor, PINV_TOL,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ReceiverKind {
    Pakron,
    Tucker,
    ZfOracle,
}

impl ReceiverKind {
    pub fn name(&self) -> &'static str {
        match self {
            ReceiverKind::Pakron => "pakron",
            ReceiverKind::Tucker => "tucker",
            ReceiverKind::ZfOracle => "zf-oracle",
        }
    }
}

impl std::fmt::Display for ReceiverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ReceiverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pakron" => Ok(ReceiverKind::Pakron),
            "tucker" => Ok(ReceiverKind::Tucker),
            "zf-oracle" => Ok(ReceiverKind::ZfOracle),
            "hybrid" => Err(Error::Config(
                "receiver name `hybrid` is reserved and not implemented".into(),
            )),
            other => Err(Error::Config(format!(
                "unknown receiver `{other}` (expected pakron, tucker or zf-oracle)"
            ))),
        }
    }
}

/// Estimates produced by a receiver.
#[derive(Clone, Debug)]
pub struct ReceiverOutput {
    /// `M_R × N`.
    pub h_hat: ComplexMatrix,
    /// Effective channel `HS`, `M_R × N`.
    pub hs_hat: ComplexMatrix,
    /// `I × M_T·N`.
    pub gbar_hat: ComplexMatrix,
    /// `T × M_T`; after [`resolve_and_detect`] the stream ambiguity is removed.
    pub x_hat: ComplexMatrix,
    /// Hard decisions (constellation indices, `T` rows of `M_T`), set by
    /// [`resolve_and_detect`].
    pub detected: Option<Vec<Vec<usize>>>,
    pub iterations: usize,
    /// Normalized reconstruction error after every sweep.
    pub residual_trajectory: Vec<f64>,
    pub converged: bool,
    /// Seconds.
    pub wall_time: f64,
}

impl ReceiverOutput {
    /// Compares everything except wall time.
    pub fn same_estimates(&self, other: &ReceiverOutput) -> bool {
        self.h_hat == other.h_hat
            && self.hs_hat == other.hs_hat
            && self.gbar_hat == other.gbar_hat
            && self.x_hat == other.x_hat
            && self.detected == other.detected
            && self.iterations == other.iterations
            && self.residual_trajectory == other.residual_trajectory
            && self.converged == other.converged
    }
}

/// Row/column structure of `Ω = X ⊗ HS`: rows `(t, r)` with the receive
/// antenna `r` fastest, columns `(m, n)` with the surface element `n` fastest.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OmegaShape {
    pub t: usize,
    pub m_r: usize,
    pub m_t: usize,
    pub n: usize,
}

#[derive(Clone, Debug)]
pub struct Stage1Output {
    /// `T·M_R × M_T·N`.
    pub omega: ComplexMatrix,
    pub gbar: ComplexMatrix,
    pub trajectory: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Normalized residual of the structure-projected model, when the
    /// projection ran.
    pub projected_error: Option<f64>,
}

fn has_converged(trajectory: &[f64], delta: f64) -> bool {
    match trajectory {
        [.., prev, last] => (last - prev).abs() <= delta,
        _ => false,
    }
}

/// `argmin_A ‖B − A M‖_F`, i.e. `B · M†`, with the retained rank of `M`.
fn solve_right(b: &ComplexMatrix, m: &ComplexMatrix) -> Result<(ComplexMatrix, usize)> {
    let (p, rank) = pinv_with_rank(m, PINV_TOL)?;
    Ok((b * p, rank))
}

fn data_energy(t: &ComplexTensor) -> Result<f64> {
    let e = t.frobenius_norm_sqr();
    if e > 0.0 && e.is_finite() {
        Ok(e)
    } else {
        Err(Error::Numerical("received tensor has zero or non-finite energy".into()))
    }
}

/// Stage I of PAKRON: alternate `Ω̂ = [Z]_(0)·((Ḡ ⋄ Ψ)ᵀ)†` and
/// `Ḡ̂ = [Z]_(2)·((Ψ ⋄ Ω̂)ᵀ)†` from a `CN(0, 1)` start.
///
/// The fit only pins `Ω` up to an arbitrary per-column scaling, which is in
/// general not Kronecker structured. With `knobs.structure_projection` the
/// converged `Ω̂` is replaced by [`separable_projection`] and `Ḡ̂` is refit
/// once against it.
pub fn pakron_stage1(
    z: &ComplexTensor,
    psi: &ComplexMatrix,
    shape: OmegaShape,
    knobs: &SolverKnobs,
    seed: u64,
) -> Result<Stage1Output> {
    let r = shape.m_t * shape.n;
    let dims = z.dims();
    if dims.len() != 3 || dims[0] != shape.t * shape.m_r || dims[1] != psi.nrows() || psi.ncols() != r {
        return Err(Error::Dimension(format!(
            "Z {dims:?} and Psi {:?} do not match {shape:?}",
            psi.shape()
        )));
    }
    let (k, i_frames) = (dims[1], dims[2]);
    require_pakron(Dims {
        m_t: shape.m_t,
        m_r: shape.m_r,
        n: shape.n,
        k,
        t: shape.t,
        i: i_frames,
    })?;
    let energy = data_energy(z)?;
    let z1 = unfold(z, 0)?;
    let z3 = unfold(z, 2)?;
    let mut r_ng = rng(seed);
    let mut gbar = complex_normal_matrix(&mut r_ng, i_frames, r);
    let mut omega = ComplexMatrix::zeros(z1.nrows(), r);
    let mut trajectory = Vec::new();
    let mut converged = false;
    for _ in 0..knobs.max_iters {
        let (o, rank) = solve_right(&z1, &khatri_rao(&gbar, psi)?.transpose())?;
        if rank < r {
            return Err(Error::Identifiability {
                receiver: "pakron".into(),
                inequality: format!("rank(Gbar <> Psi) = {rank} < M_T*N = {r}"),
            });
        }
        omega = o;
        let mixing = khatri_rao(psi, &omega)?.transpose();
        gbar = solve_right(&z3, &mixing)?.0;
        trajectory.push((&z3 - &gbar * &mixing).norm_squared() / energy);
        if has_converged(&trajectory, knobs.delta) {
            converged = true;
            break;
        }
    }
    let iterations = trajectory.len();
    let mut projected_error = None;
    if knobs.structure_projection {
        omega = separable_projection(&omega, shape)?;
        let mixing = khatri_rao(psi, &omega)?.transpose();
        gbar = solve_right(&z3, &mixing)?.0;
        projected_error = Some((&z3 - &gbar * &mixing).norm_squared() / energy);
    }
    Ok(Stage1Output {
        omega,
        gbar,
        trajectory,
        iterations,
        converged,
        projected_error,
    })
}

/// Kronecker-structured matrix `X̂ ⊗ ĤS` closest to `omega` modulo a
/// per-column scaling.
///
/// Column `(m, n)` of `X ⊗ HS` reshaped to `T × M_R` is `x_m hs_nᵀ`, so the
/// columns sharing `m` have a common left factor and those sharing `n` a
/// common right factor. Each factor column is the dominant singular vector of
/// the corresponding concatenation.
pub fn separable_projection(omega: &ComplexMatrix, shape: OmegaShape) -> Result<ComplexMatrix> {
    let OmegaShape { t, m_r, m_t, n } = shape;
    if omega.shape() != (t * m_r, m_t * n) {
        return Err(Error::Dimension(format!(
            "Omega is {:?}, expected {}x{}",
            omega.shape(),
            t * m_r,
            m_t * n
        )));
    }
    let entry = |tt: usize, rr: usize, m: usize, nn: usize| omega[(tt * m_r + rr, m * n + nn)];
    let mut x = ComplexMatrix::zeros(t, m_t);
    for m in 0..m_t {
        let a = ComplexMatrix::from_fn(t, m_r * n, |tt, c| entry(tt, c % m_r, m, c / m_r));
        x.set_column(m, &best_rank1(&a)?.u);
    }
    let mut hs = ComplexMatrix::zeros(m_r, n);
    for nn in 0..n {
        let b = ComplexMatrix::from_fn(m_r, t * m_t, |rr, c| entry(c % t, rr, c / t, nn));
        hs.set_column(nn, &best_rank1(&b)?.u);
    }
    Ok(kron(&x, &hs))
}

/// Stage II of PAKRON: `Δ = Ω̂ (I ⊗ Sᴴ)` rearranged to the rank-1 matrix
/// `vec(X) vec(H)ᵀ`, whose dominant singular pair gives `x̂ = √σ u` and
/// `ĥ = √σ v*`. Returns `(X̂, Ĥ)`.
pub fn kron_factorize(
    omega: &ComplexMatrix,
    s: &ComplexMatrix,
    m_r: usize,
) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let delta_t = rearrange_for_kron(omega, s, m_r)?;
    let n = s.nrows();
    let m_t = omega.ncols() / n;
    let t = omega.nrows() / m_r;
    let (x, h) = best_rank1(&delta_t)?.balanced_factors();
    Ok((unvec(&x, t, m_t)?, unvec(&h, m_r, n)?))
}

/// The `T·M_T × M_R·N` rearrangement `Δ̃` of `Δ = Ω̂ (I ⊗ Sᴴ)`.
pub fn rearrange_for_kron(
    omega: &ComplexMatrix,
    s: &ComplexMatrix,
    m_r: usize,
) -> Result<ComplexMatrix> {
    let n = s.nrows();
    if s.ncols() != n || n == 0 || m_r == 0 || !omega.ncols().is_multiple_of(n) || !omega.nrows().is_multiple_of(m_r) {
        return Err(Error::Dimension(format!(
            "Omega {:?} cannot be split with N = {n}, M_R = {m_r}",
            omega.shape()
        )));
    }
    let m_t = omega.ncols() / n;
    let t = omega.nrows() / m_r;
    let eye = ComplexMatrix::identity(m_t, m_t);
    let delta = omega * kron(&eye, &s.adjoint());
    Ok(ComplexMatrix::from_fn(t * m_t, m_r * n, |row, col| {
        let (tt, m) = (row % t, row / t);
        let (rr, nn) = (col % m_r, col / m_r);
        delta[(tt * m_r + rr, m * n + nn)]
    }))
}

/// Full PAKRON pipeline with reference-row ambiguity removal and detection.
pub fn pakron(
    y: &ReceivedTensor,
    sc: &ScatteringDesign,
    knobs: &SolverKnobs,
    seed: u64,
    constellation: &Constellation,
) -> Result<ReceiverOutput> {
    let start = Instant::now();
    let views = reshape_views(y, sc)?;
    let dims = y.y.dims();
    let shape = OmegaShape {
        t: dims[1],
        m_r: dims[0],
        m_t: sc.m_t(),
        n: sc.n(),
    };
    let stage1 = pakron_stage1(&views.z, &sc.psi, shape, knobs, seed)?;
    let (x_hat, h_hat) = kron_factorize(&stage1.omega, &sc.s, shape.m_r)?;
    let out = ReceiverOutput {
        hs_hat: &h_hat * &sc.s,
        h_hat,
        gbar_hat: stage1.gbar,
        x_hat,
        detected: None,
        iterations: stage1.iterations,
        residual_trajectory: stage1.trajectory,
        converged: stage1.converged,
        wall_time: 0.0,
    };
    let mut out = resolve_and_detect(out, constellation)?;
    out.wall_time = start.elapsed().as_secs_f64();
    Ok(out)
}

/// Non-zero entries of a TUCKER core, `(n, m, a, b, value)` for modes
/// `(HS, X, Ψ, Ḡ)`.
#[derive(Clone, Debug)]
pub struct SparseCore {
    dims: [usize; 4],
    entries: Vec<([usize; 4], c64)>,
}

impl SparseCore {
    pub fn from_dense(core: &ComplexTensor) -> Result<Self> {
        let d = core.dims();
        if d.len() != 4 {
            return Err(Error::Dimension(format!("TUCKER core must be order 4, got {d:?}")));
        }
        let dims = [d[0], d[1], d[2], d[3]];
        let mut entries = Vec::new();
        for (lin, v) in core.data().iter().enumerate() {
            if v.norm_sqr() != 0.0 {
                let (a0, r0) = (lin % dims[0], lin / dims[0]);
                let (a1, r1) = (r0 % dims[1], r0 / dims[1]);
                let (a2, a3) = (r1 % dims[2], r1 / dims[2]);
                entries.push(([a0, a1, a2, a3], *v));
            }
        }
        Ok(Self { dims, entries })
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    /// `[C]_(0) (Ḡ ⊗ Ψ ⊗ X)ᵀ`, `N × T·K·I`.
    pub fn mixing_hs(&self, gbar: &ComplexMatrix, psi: &ComplexMatrix, x: &ComplexMatrix) -> ComplexMatrix {
        let (t, k, i) = (x.nrows(), psi.nrows(), gbar.nrows());
        let mut v = ComplexMatrix::zeros(self.dims[0], t * k * i);
        for &([n, m, a, b], c) in &self.entries {
            for ii in 0..i {
                let g = c * gbar[(ii, b)];
                for kk in 0..k {
                    let gp = g * psi[(kk, a)];
                    let base = t * (kk + k * ii);
                    for tt in 0..t {
                        v[(n, base + tt)] += gp * x[(tt, m)];
                    }
                }
            }
        }
        v
    }

    /// `[C]_(1) (Ḡ ⊗ Ψ ⊗ HS)ᵀ`, `M_T × M_R·K·I`.
    pub fn mixing_x(&self, gbar: &ComplexMatrix, psi: &ComplexMatrix, hs: &ComplexMatrix) -> ComplexMatrix {
        let (m_r, k, i) = (hs.nrows(), psi.nrows(), gbar.nrows());
        let mut v = ComplexMatrix::zeros(self.dims[1], m_r * k * i);
        for &([n, m, a, b], c) in &self.entries {
            for ii in 0..i {
                let g = c * gbar[(ii, b)];
                for kk in 0..k {
                    let gp = g * psi[(kk, a)];
                    let base = m_r * (kk + k * ii);
                    for rr in 0..m_r {
                        v[(m, base + rr)] += gp * hs[(rr, n)];
                    }
                }
            }
        }
        v
    }

    /// `[C]_(3) (Ψ ⊗ X ⊗ HS)ᵀ`, `M_T·N × M_R·T·K`.
    pub fn mixing_gbar(&self, psi: &ComplexMatrix, x: &ComplexMatrix, hs: &ComplexMatrix) -> ComplexMatrix {
        let (m_r, t, k) = (hs.nrows(), x.nrows(), psi.nrows());
        let mut v = ComplexMatrix::zeros(self.dims[3], m_r * t * k);
        for &([n, m, a, b], c) in &self.entries {
            for kk in 0..k {
                let p = c * psi[(kk, a)];
                for tt in 0..t {
                    let px = p * x[(tt, m)];
                    let base = m_r * (tt + t * kk);
                    for rr in 0..m_r {
                        v[(b, base + rr)] += px * hs[(rr, n)];
                    }
                }
            }
        }
        v
    }
}

/// TALS-TUCKER: cycle the exact conditional LS updates of `HS`, `X` and `Ḡ`
/// from `CN(0, 1)` starts for `X` and `Ḡ`. `Ĥ = ĤS·Sᴴ`. Detection is not
/// applied here; see [`tucker`].
pub fn tucker_tals(
    q4: &ComplexTensor,
    core: &ComplexTensor,
    psi: &ComplexMatrix,
    s: &ComplexMatrix,
    knobs: &SolverKnobs,
    seed: u64,
) -> Result<ReceiverOutput> {
    let start = Instant::now();
    let sparse = SparseCore::from_dense(core)?;
    let [n, m_t, ra, rb] = sparse.dims();
    let d = q4.dims();
    if d.len() != 4 || d[2] != psi.nrows() || psi.ncols() != ra || rb != m_t * n || s.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "Q {d:?}, core {:?}, Psi {:?} and S {:?} are inconsistent",
            sparse.dims(),
            psi.shape(),
            s.shape()
        )));
    }
    let (m_r, t, k, i_frames) = (d[0], d[1], d[2], d[3]);
    require_tucker(Dims { m_t, m_r, n, k, t, i: i_frames })?;
    let energy = data_energy(q4)?;
    let q1 = unfold(q4, 0)?;
    let q2 = unfold(q4, 1)?;
    let q4u = unfold(q4, 3)?;

    let mut r_ng = rng(seed);
    let mut x = complex_normal_matrix(&mut r_ng, t, m_t);
    let mut gbar = complex_normal_matrix(&mut r_ng, i_frames, rb);
    let mut hs = ComplexMatrix::zeros(m_r, n);
    let mut trajectory = Vec::new();
    let mut converged = false;
    for _ in 0..knobs.max_iters {
        hs = solve_right(&q1, &sparse.mixing_hs(&gbar, psi, &x))?.0;
        x = solve_right(&q2, &sparse.mixing_x(&gbar, psi, &hs))?.0;
        let v4 = sparse.mixing_gbar(psi, &x, &hs);
        gbar = solve_right(&q4u, &v4)?.0;
        trajectory.push((&q4u - &gbar * &v4).norm_squared() / energy);
        if has_converged(&trajectory, knobs.delta) {
            converged = true;
            break;
        }
    }
    Ok(ReceiverOutput {
        h_hat: &hs * s.adjoint(),
        hs_hat: hs,
        gbar_hat: gbar,
        x_hat: x,
        detected: None,
        iterations: trajectory.len(),
        residual_trajectory: trajectory,
        converged,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// TALS-TUCKER on a received tensor, with ambiguity removal and detection.
pub fn tucker(
    y: &ReceivedTensor,
    sc: &ScatteringDesign,
    knobs: &SolverKnobs,
    seed: u64,
    constellation: &Constellation,
) -> Result<ReceiverOutput> {
    let start = Instant::now();
    let views = reshape_views(y, sc)?;
    let out = tucker_tals(&views.q4, &views.core, &sc.psi, &sc.s, knobs, seed)?;
    let mut out = resolve_and_detect(out, constellation)?;
    out.wall_time = start.elapsed().as_secs_f64();
    Ok(out)
}

/// Zero-forcing symbol estimate with the true channels:
/// `X̂ = [Q]_(1) · ([C]_(1) (Ḡ ⊗ Ψ ⊗ HS)ᵀ)†`.
pub fn zf_perfect_csi(
    q4: &ComplexTensor,
    core: &ComplexTensor,
    truth: &ChannelSet,
    sc: &ScatteringDesign,
) -> Result<ComplexMatrix> {
    let sparse = SparseCore::from_dense(core)?;
    let hs = &truth.h * &sc.s;
    let v2 = sparse.mixing_x(&truth.gbar, &sc.psi, &hs);
    let q2 = unfold(q4, 1)?;
    if q2.ncols() != v2.ncols() {
        return Err(Error::Dimension(format!(
            "[Q]_(1) has {} columns, mixing matrix {}",
            q2.ncols(),
            v2.ncols()
        )));
    }
    let (x, rank) = solve_right(&q2, &v2)?;
    if rank < v2.nrows() {
        return Err(Error::Identifiability {
            receiver: "zf-oracle".into(),
            inequality: format!("rank of the known mixing matrix {rank} < M_T = {}", v2.nrows()),
        });
    }
    Ok(x)
}

/// Zero-forcing receiver output (true channels echoed as the estimates).
pub fn zf_oracle(
    y: &ReceivedTensor,
    truth: &ChannelSet,
    sc: &ScatteringDesign,
    constellation: &Constellation,
) -> Result<ReceiverOutput> {
    let start = Instant::now();
    let views = reshape_views(y, sc)?;
    let x_hat = zf_perfect_csi(&views.q4, &views.core, truth, sc)?;
    let out = ReceiverOutput {
        h_hat: truth.h.clone(),
        hs_hat: &truth.h * &sc.s,
        gbar_hat: truth.gbar.clone(),
        x_hat,
        detected: None,
        iterations: 0,
        residual_trajectory: Vec::new(),
        converged: true,
        wall_time: 0.0,
    };
    let mut out = resolve_and_detect(out, constellation)?;
    out.wall_time = start.elapsed().as_secs_f64();
    Ok(out)
}

/// Scales column `m` of `X̂` by `reference / X̂[0, m]`, cancelling the
/// per-stream ambiguity, then hard-decides every row. Row 0 is decided as the
/// reference symbol. `Ĥ` and `Ḡ̂` are left untouched.
pub fn resolve_and_detect(
    mut out: ReceiverOutput,
    constellation: &Constellation,
) -> Result<ReceiverOutput> {
    let reference = constellation.reference();
    for (m, mut col) in out.x_hat.column_iter_mut().enumerate() {
        let anchor = col[0];
        let scale = col.norm().max(f64::MIN_POSITIVE);
        if anchor.norm() <= 1e-12 * scale || !anchor.norm().is_finite() {
            return Err(Error::DegenerateScaling { stream: m });
        }
        col *= reference / anchor;
    }
    let detected = (0..out.x_hat.nrows())
        .map(|t| {
            (0..out.x_hat.ncols())
                .map(|m| if t == 0 { 0 } else { constellation.decide(out.x_hat[(t, m)]) })
                .collect()
        })
        .collect();
    out.detected = Some(detected);
    Ok(out)
}
