//! Ground-truth generation and synthesis of the received-signal tensor.
//!
//! The noiseless slice for frame `i` and block `k` is
//! `Y_{i,k} = H S D_k(P) G_i D_k(W) Xᵀ`, collected into an
//! `M_R × T × K × I` tensor.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::Rng;

use crate::config::{perfect_square_root, ChannelKind, DesignKind, SystemConfig};
use crate::error::{Error, Result};
use crate::seed::{complex_normal, complex_normal_matrix, rng, unit_phase};
use crate::tensor::{c64, khatri_rao, ComplexMatrix, ComplexTensor, ComplexVector};

/// Known surface and transmitter quantities.
#[derive(Clone, Debug, PartialEq)]
pub struct ScatteringDesign {
    /// Block-diagonal unitary static scattering matrix, `N × N`.
    pub s: ComplexMatrix,
    /// Unit-modulus rotations, `K × N`; row `k` is `p_k`.
    pub p: ComplexMatrix,
    /// Coding matrix, `K × M_T`; row `k` is `w_k`.
    pub w: ComplexMatrix,
    /// `K × M_T·N`, row `k` equal to `w_k ⊗ p_k`.
    pub psi: ComplexMatrix,
}

impl ScatteringDesign {
    pub fn from_parts(s: ComplexMatrix, p: ComplexMatrix, w: ComplexMatrix) -> Result<Self> {
        let n = s.nrows();
        if s.ncols() != n || p.ncols() != n || p.nrows() != w.nrows() {
            return Err(Error::Dimension(format!(
                "inconsistent design: S {:?}, P {:?}, W {:?}",
                s.shape(),
                p.shape(),
                w.shape()
            )));
        }
        let psi = khatri_rao(&w.transpose(), &p.transpose())?.transpose();
        Ok(Self { s, p, w, psi })
    }

    pub fn n(&self) -> usize {
        self.s.nrows()
    }

    pub fn k(&self) -> usize {
        self.p.nrows()
    }

    pub fn m_t(&self) -> usize {
        self.w.ncols()
    }
}

/// Unitary `n × n` DFT matrix.
pub fn dft_matrix(n: usize) -> ComplexMatrix {
    let scale = 1.0 / (n as f64).sqrt();
    ComplexMatrix::from_fn(n, n, |a, b| {
        c64::from_polar(scale, -TAU * ((a * b) % n) as f64 / n as f64)
    })
}

/// `bdiag(F, …, F)` with `q` normalized DFT blocks of size `n / q`.
pub fn block_dft(n: usize, q: usize) -> ComplexMatrix {
    let nb = n / q;
    let f = dft_matrix(nb);
    let mut s = ComplexMatrix::zeros(n, n);
    for g in 0..q {
        s.view_mut((g * nb, g * nb), (nb, nb)).copy_from(&f);
    }
    s
}

pub fn design_scattering(cfg: &SystemConfig, seed: u64) -> Result<ScatteringDesign> {
    if cfg.q == 0 || !cfg.n.is_multiple_of(cfg.q) {
        return Err(Error::Config(format!(
            "q = {} does not divide n = {}",
            cfg.q, cfg.n
        )));
    }
    let s = block_dft(cfg.n, cfg.q);
    let (p, w) = match cfg.design {
        DesignKind::Random => {
            let mut r = rng(seed);
            let p = ComplexMatrix::from_fn(cfg.k, cfg.n, |_, _| unit_phase(&mut r));
            let w = ComplexMatrix::from_fn(cfg.k, cfg.m_t, |_, _| unit_phase(&mut r));
            (p, w)
        }
        DesignKind::Dft => {
            let k = cfg.k as f64;
            let phase = |e: usize| c64::from_polar(1.0, -TAU * e as f64 / k);
            let p = ComplexMatrix::from_fn(cfg.k, cfg.n, |kk, nn| phase((kk * nn) % cfg.k));
            let w = ComplexMatrix::from_fn(cfg.k, cfg.m_t, |kk, m| phase((kk * m * cfg.n) % cfg.k));
            (p, w)
        }
    };
    ScatteringDesign::from_parts(s, p, w)
}

/// Ground-truth channels.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSet {
    /// Surface to BS, `M_R × N`.
    pub h: ComplexMatrix,
    /// UT to surface per frame, each `N × M_T`.
    pub g: Vec<ComplexMatrix>,
    /// `I × M_T·N`; row `i` is `vec(G_i)ᵀ`.
    pub gbar: ComplexMatrix,
}

impl ChannelSet {
    pub fn from_parts(h: ComplexMatrix, g: Vec<ComplexMatrix>) -> Result<Self> {
        let n = h.ncols();
        let m_t = g.first().map(|gi| gi.ncols()).unwrap_or(0);
        if g.is_empty() || g.iter().any(|gi| gi.shape() != (n, m_t)) {
            return Err(Error::Dimension(
                "every G_i must be N x M_T with N matching H".into(),
            ));
        }
        let gbar = ComplexMatrix::from_fn(g.len(), n * m_t, |i, r| g[i].as_slice()[r]);
        Ok(Self { h, g, gbar })
    }

    /// Rebuilds the per-frame matrices from a stacked `Ḡ`.
    pub fn unstack_gbar(gbar: &ComplexMatrix, n: usize) -> Vec<ComplexMatrix> {
        let m_t = gbar.ncols() / n;
        gbar.row_iter()
            .map(|row| ComplexMatrix::from_iterator(n, m_t, row.iter().copied()))
            .collect()
    }
}

/// Half-wavelength uniform linear array response.
fn ula(len: usize, angle: f64) -> ComplexVector {
    ComplexVector::from_fn(len, |m, _| c64::from_polar(1.0, PI * m as f64 * angle.sin()))
}

/// Half-wavelength `side × side` uniform planar array response, first axis
/// fastest.
fn upa(side: usize, azimuth: f64, elevation: f64) -> ComplexVector {
    let ux = elevation.sin() * azimuth.cos();
    let uy = elevation.sin() * azimuth.sin();
    ComplexVector::from_fn(side * side, |n, _| {
        let (x, y) = ((n % side) as f64, (n / side) as f64);
        c64::from_polar(1.0, PI * (x * ux + y * uy))
    })
}

fn azimuth(r: &mut impl Rng) -> f64 {
    r.random_range(-FRAC_PI_2..=FRAC_PI_2)
}

fn elevation(r: &mut impl Rng) -> f64 {
    r.random_range(0.0..=FRAC_PI_2)
}

pub fn gen_channels(cfg: &SystemConfig, seed: u64) -> Result<ChannelSet> {
    let mut r = rng(seed);
    match cfg.channel.model {
        ChannelKind::Rayleigh => {
            let h = complex_normal_matrix(&mut r, cfg.m_r, cfg.n);
            let g = (0..cfg.i)
                .map(|_| complex_normal_matrix(&mut r, cfg.n, cfg.m_t))
                .collect();
            ChannelSet::from_parts(h, g)
        }
        ChannelKind::Geometric => {
            let side = perfect_square_root(cfg.n).ok_or_else(|| {
                Error::Config(format!("geometric model needs a square n, got {}", cfg.n))
            })?;
            let paths = cfg.channel.paths.max(1);
            let gain_var = 1.0 / paths as f64;
            let mut h = ComplexMatrix::zeros(cfg.m_r, cfg.n);
            for _ in 0..paths {
                let alpha = complex_normal(&mut r, gain_var);
                let bs = ula(cfg.m_r, azimuth(&mut r));
                let ris = upa(side, azimuth(&mut r), elevation(&mut r));
                h += bs * ris.adjoint() * alpha;
            }
            let g = (0..cfg.i)
                .map(|_| {
                    let mut gi = ComplexMatrix::zeros(cfg.n, cfg.m_t);
                    for _ in 0..paths {
                        let alpha = complex_normal(&mut r, gain_var);
                        let ris = upa(side, azimuth(&mut r), elevation(&mut r));
                        let ut = ula(cfg.m_t, azimuth(&mut r));
                        gi += ris * ut.adjoint() * alpha;
                    }
                    gi
                })
                .collect();
            ChannelSet::from_parts(h, g)
        }
    }
}

/// Unit-energy M-PSK alphabet `{e^{jπ(2m+1)/M}}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Constellation {
    order: usize,
}

impl Constellation {
    pub fn psk(order: usize) -> Result<Self> {
        if order < 2 {
            return Err(Error::Config(format!("PSK order {order} is below 2")));
        }
        Ok(Self { order })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn point(&self, index: usize) -> c64 {
        c64::from_polar(1.0, PI * (2 * index + 1) as f64 / self.order as f64)
    }

    pub fn points(&self) -> Vec<c64> {
        (0..self.order).map(|m| self.point(m)).collect()
    }

    /// The index-0 point, used as the known reference symbol.
    pub fn reference(&self) -> c64 {
        self.point(0)
    }

    /// Nearest point by Euclidean distance; ties go to the smaller index.
    pub fn decide(&self, z: c64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for m in 0..self.order {
            let d = (z - self.point(m)).norm_sqr();
            if d < best_d {
                best = m;
                best_d = d;
            }
        }
        best
    }
}

/// Transmitted symbols; row 0 is the known reference row.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolBlock {
    /// `T × M_T`, row `t` is `x_tᵀ`.
    pub x: ComplexMatrix,
    /// Constellation index of every entry of `x`.
    pub indices: Vec<Vec<usize>>,
    pub constellation: Constellation,
}

impl SymbolBlock {
    pub fn from_indices(indices: Vec<Vec<usize>>, constellation: Constellation) -> Result<Self> {
        let t = indices.len();
        let m_t = indices.first().map(Vec::len).unwrap_or(0);
        if t == 0 || m_t == 0 || indices.iter().any(|r| r.len() != m_t) {
            return Err(Error::Dimension("symbol indices must form a T x M_T grid".into()));
        }
        if indices.iter().flatten().any(|&ix| ix >= constellation.order()) {
            return Err(Error::Dimension("symbol index outside the alphabet".into()));
        }
        let x = ComplexMatrix::from_fn(t, m_t, |r, c| constellation.point(indices[r][c]));
        Ok(Self {
            x,
            indices,
            constellation,
        })
    }
}

pub fn gen_symbols(cfg: &SystemConfig, seed: u64) -> Result<SymbolBlock> {
    let constellation = Constellation::psk(cfg.modulation_order)?;
    let mut r = rng(seed);
    let indices = (0..cfg.t)
        .map(|t| {
            (0..cfg.m_t)
                .map(|_| if t == 0 { 0 } else { r.random_range(0..cfg.modulation_order) })
                .collect()
        })
        .collect();
    SymbolBlock::from_indices(indices, constellation)
}

/// Received-signal tensor, `M_R × T × K × I`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReceivedTensor {
    pub y: ComplexTensor,
    pub noiseless: Option<ComplexTensor>,
    /// `None` for a noiseless tensor.
    pub achieved_snr_db: Option<f64>,
}

pub fn synthesize_received(
    ch: &ChannelSet,
    sc: &ScatteringDesign,
    sym: &SymbolBlock,
) -> Result<ReceivedTensor> {
    let (m_r, n) = ch.h.shape();
    let m_t = sym.x.ncols();
    let t = sym.x.nrows();
    let k = sc.k();
    let i_frames = ch.g.len();
    if sc.n() != n || sc.m_t() != m_t || ch.g.iter().any(|g| g.shape() != (n, m_t)) {
        return Err(Error::Dimension(format!(
            "H {:?}, G {:?}, S {:?}, W {:?} and X {:?} are inconsistent",
            ch.h.shape(),
            ch.g.first().map(|g| g.shape()),
            sc.s.shape(),
            sc.w.shape(),
            sym.x.shape()
        )));
    }
    let hs = &ch.h * &sc.s;
    let xt = sym.x.transpose();
    let mut y = ComplexTensor::zeros(&[m_r, t, k, i_frames]);
    let slice_len = m_r * t;
    for (i, g) in ch.g.iter().enumerate() {
        for kk in 0..k {
            // H S D_k(P) G_i D_k(W)
            let mut inner = g.clone();
            for (mut row, p) in inner.row_iter_mut().zip(sc.p.row(kk).iter()) {
                row *= *p;
            }
            for (mut col, w) in inner.column_iter_mut().zip(sc.w.row(kk).iter()) {
                col *= *w;
            }
            let slice = &hs * inner * &xt;
            let off = slice_len * (kk + k * i);
            y.data_mut()[off..off + slice_len].copy_from_slice(slice.as_slice());
        }
    }
    Ok(ReceivedTensor {
        y: y.clone(),
        noiseless: Some(y),
        achieved_snr_db: None,
    })
}

/// Adds circular white Gaussian noise at `snr_db`, defined as the ratio of
/// the tensor's mean signal power to the noise variance. A non-finite SNR
/// leaves the tensor untouched.
pub fn add_noise(y: &ReceivedTensor, snr_db: f64, seed: u64) -> ReceivedTensor {
    let clean = y.noiseless.clone().unwrap_or_else(|| y.y.clone());
    if !snr_db.is_finite() {
        return ReceivedTensor {
            y: clean.clone(),
            noiseless: Some(clean),
            achieved_snr_db: None,
        };
    }
    let signal = clean.frobenius_norm_sqr();
    let variance = signal / (clean.numel() as f64 * 10f64.powf(snr_db / 10.0));
    let mut r = rng(seed);
    let mut noisy = clean.clone();
    let mut noise_energy = 0.0;
    for v in noisy.data_mut() {
        let z = complex_normal(&mut r, variance);
        noise_energy += z.norm_sqr();
        *v += z;
    }
    ReceivedTensor {
        y: noisy,
        noiseless: Some(clean),
        achieved_snr_db: Some(10.0 * (signal / noise_energy).log10()),
    }
}

/// The re-indexed views the receivers consume.
#[derive(Clone, Debug)]
pub struct TensorViews {
    /// `T·M_R × K × I`; frontal slice `i` is `[Y_i]_(3)ᵀ`.
    pub z: ComplexTensor,
    /// `M_R × T × K × I`, with `[Q]_([0,1],[2,3]) = [Z]_(0)`.
    pub q4: ComplexTensor,
    /// Structured TUCKER core, `N × M_T × M_T·N × M_T·N`.
    pub core: ComplexTensor,
}

/// Core tensor with `[C]_([0,1],[2,3]) = (I ⋄ I)ᵀ`: entry `(n, m, a, b)` is one
/// exactly when `a = b = n + N·m`.
pub fn tucker_core(n: usize, m_t: usize) -> ComplexTensor {
    let r = n * m_t;
    let mut c = ComplexTensor::zeros(&[n, m_t, r, r]);
    for m in 0..m_t {
        for nn in 0..n {
            let col = nn + n * m;
            c.set(&[nn, m, col, col], c64::new(1.0, 0.0));
        }
    }
    c
}

pub fn reshape_views(y: &ReceivedTensor, sc: &ScatteringDesign) -> Result<TensorViews> {
    let dims = y.y.dims().to_vec();
    if dims.len() != 4 || dims[2] != sc.k() {
        return Err(Error::Dimension(format!(
            "received tensor {dims:?} does not match K = {}",
            sc.k()
        )));
    }
    let (m_r, t, k, i) = (dims[0], dims[1], dims[2], dims[3]);
    // With the first-mode-fastest layout, [Y_i]_(3)ᵀ stacked along frames is
    // the same memory re-read as a T·M_R × K × I tensor.
    let z = y.y.clone().reshape(&[t * m_r, k, i])?;
    Ok(TensorViews {
        z,
        q4: y.y.clone(),
        core: tucker_core(sc.n(), sc.m_t()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{kron, nmode_product, numerical_rank, rel_error, selection_matrix, unfold, unfold_modes};

    fn small_cfg() -> SystemConfig {
        SystemConfig {
            m_r: 2,
            m_t: 2,
            n: 4,
            q: 2,
            k: 3,
            t: 2,
            i: 2,
            ..SystemConfig::default()
        }
    }

    fn instance(cfg: &SystemConfig, seed: u64) -> (ChannelSet, ScatteringDesign, SymbolBlock, ReceivedTensor) {
        let ch = gen_channels(cfg, seed).unwrap();
        let sc = design_scattering(cfg, seed + 1).unwrap();
        let sym = gen_symbols(cfg, seed + 2).unwrap();
        let y = synthesize_received(&ch, &sc, &sym).unwrap();
        (ch, sc, sym, y)
    }

    /// Per-group, per-slot scalar loop over the block sum model.
    fn loop_oracle(cfg: &SystemConfig, ch: &ChannelSet, sc: &ScatteringDesign, sym: &SymbolBlock) -> ComplexTensor {
        let nb = cfg.group_size();
        let zero = c64::new(0.0, 0.0);
        ComplexTensor::from_fn(&[cfg.m_r, cfg.t, cfg.k, cfg.i], |ix| {
            let (r, t, k, i) = (ix[0], ix[1], ix[2], ix[3]);
            let mut acc = zero;
            for q in 0..cfg.q {
                let off = q * nb;
                for a in 0..nb {
                    for b in 0..nb {
                        // S_k^(q) = S0^(q) diag(p̄_k^(q))
                        let skq = sc.s[(off + a, off + b)] * sc.p[(k, off + b)];
                        for m in 0..cfg.m_t {
                            acc += ch.h[(r, off + a)] * skq * ch.g[i][(off + b, m)] * sc.w[(k, m)] * sym.x[(t, m)];
                        }
                    }
                }
            }
            acc
        })
    }

    #[test]
    fn static_scattering_is_unitary() {
        let s = block_dft(2, 1);
        let h = 1.0 / 2f64.sqrt();
        let expected = ComplexMatrix::from_row_slice(2, 2, &[c64::new(h, 0.), c64::new(h, 0.), c64::new(h, 0.), c64::new(-h, 0.)]);
        assert!((&s - expected).norm() < 1e-15);
        for (n, q) in [(2, 1), (16, 4), (12, 3), (8, 8)] {
            let s = block_dft(n, q);
            assert!((&s * s.adjoint() - ComplexMatrix::identity(n, n)).norm() <= 1e-12 * n as f64);
        }
    }

    #[test]
    fn rotated_blocks_stay_unitary() {
        let cfg = small_cfg();
        let sc = design_scattering(&cfg, 9).unwrap();
        let nb = cfg.group_size();
        for k in 0..cfg.k {
            for q in 0..cfg.q {
                let s0 = sc.s.view((q * nb, q * nb), (nb, nb)).into_owned();
                let d = ComplexMatrix::from_diagonal(&sc.p.row(k).columns(q * nb, nb).transpose());
                let sk = s0 * d;
                assert!((sk.adjoint() * &sk - ComplexMatrix::identity(nb, nb)).norm() < 1e-12);
            }
        }
        let ones = sc.p.map(|z| z.conj()).component_mul(&sc.p);
        assert!((ones - ComplexMatrix::from_element(cfg.k, cfg.n, c64::new(1.0, 0.0))).norm() < 1e-12);
    }

    #[test]
    fn psi_is_transposed_khatri_rao_and_full_rank() {
        for design in [DesignKind::Random, DesignKind::Dft] {
            let cfg = SystemConfig { design, k: 10, n: 4, q: 2, ..small_cfg() };
            let sc = design_scattering(&cfg, 4).unwrap();
            for k in 0..cfg.k {
                let row = kron(&ComplexMatrix::from_row_slice(1, sc.m_t(), sc.w.row(k).transpose().as_slice()), &ComplexMatrix::from_row_slice(1, sc.n(), sc.p.row(k).transpose().as_slice()));
                assert_eq!(row, sc.psi.row(k).into_owned());
            }
            assert_eq!(numerical_rank(&sc.psi, 1e-10).unwrap(), (cfg.k).min(cfg.m_t * cfg.n));
        }
    }

    #[test]
    fn q_must_divide_n() {
        let cfg = SystemConfig { q: 3, ..small_cfg() };
        assert!(design_scattering(&cfg, 0).is_err());
    }

    #[test]
    fn rayleigh_entries_have_unit_power() {
        let cfg = SystemConfig { m_r: 100, n: 500, i: 10, m_t: 20, t: 20, ..SystemConfig::default() };
        let ch = gen_channels(&cfg, 3).unwrap();
        let mut total = ch.h.norm_squared();
        let mut count = ch.h.len();
        for g in &ch.g {
            total += g.norm_squared();
            count += g.len();
        }
        assert!(count >= 100_000);
        let p = total / count as f64;
        assert!((p - 1.0).abs() < 0.05, "mean power {p}");
    }

    #[test]
    fn geometric_single_path_is_rank_one() {
        let mut cfg = SystemConfig { n: 16, ..SystemConfig::default() };
        cfg.channel.model = ChannelKind::Geometric;
        cfg.channel.paths = 1;
        let ch = gen_channels(&cfg, 8).unwrap();
        assert_eq!(numerical_rank(&ch.h, 1e-10).unwrap(), 1);
        for g in &ch.g {
            assert_eq!(numerical_rank(g, 1e-10).unwrap(), 1);
        }
        cfg.n = 8;
        assert!(gen_channels(&cfg, 8).is_err());
    }

    #[test]
    fn generators_are_deterministic() {
        let mut cfg = small_cfg();
        assert_eq!(gen_channels(&cfg, 5).unwrap(), gen_channels(&cfg, 5).unwrap());
        assert_ne!(gen_channels(&cfg, 5).unwrap(), gen_channels(&cfg, 6).unwrap());
        cfg.channel.model = ChannelKind::Geometric;
        assert_eq!(gen_channels(&cfg, 5).unwrap(), gen_channels(&cfg, 5).unwrap());
        assert_eq!(gen_symbols(&cfg, 1).unwrap(), gen_symbols(&cfg, 1).unwrap());
        assert_eq!(design_scattering(&cfg, 1).unwrap(), design_scattering(&cfg, 1).unwrap());
    }

    #[test]
    fn gbar_rows_unstack_to_frames() {
        let cfg = small_cfg();
        let ch = gen_channels(&cfg, 2).unwrap();
        assert_eq!(ChannelSet::unstack_gbar(&ch.gbar, cfg.n), ch.g);
    }

    #[test]
    fn psk_alphabets() {
        let c4 = Constellation::psk(4).unwrap();
        for (m, z) in c4.points().iter().enumerate() {
            let expect = c64::from_polar(1.0, PI * (2 * m + 1) as f64 / 4.0);
            assert!((z - expect).norm() < 1e-15);
            assert_eq!(c4.decide(*z), m);
        }
        let c64_ = Constellation::psk(64).unwrap();
        let pts = c64_.points();
        assert_eq!(pts.len(), 64);
        for (a, pa) in pts.iter().enumerate() {
            assert!((pa.norm() - 1.0).abs() < 1e-15);
            for pb in &pts[a + 1..] {
                assert!((pa - pb).norm() > 1e-3);
            }
        }
        // Equidistant from points 0 and 1: the smaller index wins.
        let mid = c64::from_polar(1.0, PI / 2.0);
        assert_eq!(c4.decide(mid), 0);
    }

    #[test]
    fn symbols_carry_reference_row() {
        let cfg = SystemConfig { t: 6, modulation_order: 8, ..small_cfg() };
        let sym = gen_symbols(&cfg, 4).unwrap();
        let refp = sym.constellation.reference();
        assert!(sym.x.row(0).iter().all(|z| *z == refp));
        let pts = sym.constellation.points();
        assert!(sym.x.iter().all(|z| pts.contains(z)));
        let power = sym.x.norm_squared() / sym.x.len() as f64;
        assert!((power - 1.0).abs() < 1e-12);
    }

    #[test]
    fn synthesis_matches_group_loop() {
        for seed in 0..5 {
            let cfg = small_cfg();
            let (ch, sc, sym, y) = instance(&cfg, seed * 10);
            let oracle = loop_oracle(&cfg, &ch, &sc, &sym);
            let err = y.y.distance_sqr(&oracle).unwrap().sqrt() / oracle.frobenius_norm();
            assert!(err < 1e-12, "{err}");
        }
        let cfg = SystemConfig { q: 1, ..small_cfg() };
        let (ch, sc, sym, y) = instance(&cfg, 77);
        let oracle = loop_oracle(&cfg, &ch, &sc, &sym);
        assert!(y.y.distance_sqr(&oracle).unwrap().sqrt() < 1e-12 * oracle.frobenius_norm());
    }

    #[test]
    fn frame_unfolding_matches_kronecker_form() {
        let cfg = small_cfg();
        let (ch, sc, sym, y) = instance(&cfg, 21);
        let omega = kron(&sym.x, &(&ch.h * &sc.s));
        let psit = khatri_rao(&sc.w.transpose(), &sc.p.transpose()).unwrap();
        for i in 0..cfg.i {
            let yi = ComplexTensor::new(
                vec![cfg.m_r, cfg.t, cfg.k],
                y.y.data()[i * cfg.m_r * cfg.t * cfg.k..(i + 1) * cfg.m_r * cfg.t * cfg.k].to_vec(),
            )
            .unwrap();
            let lhs = unfold(&yi, 2).unwrap().transpose();
            let dg = ComplexMatrix::from_diagonal(&ch.gbar.row(i).transpose());
            let rhs = &omega * dg * &psit;
            for c in 0..cfg.k {
                assert!((lhs.column(c) - rhs.column(c)).norm() < 1e-12 * rhs.norm());
            }
        }
    }

    #[test]
    fn views_satisfy_unfolding_identities() {
        let cfg = small_cfg();
        let (ch, sc, sym, y) = instance(&cfg, 31);
        let v = reshape_views(&y, &sc).unwrap();
        let hs = &ch.h * &sc.s;
        let omega = kron(&sym.x, &hs);
        let z1 = unfold(&v.z, 0).unwrap();
        let rhs = &omega * khatri_rao(&ch.gbar, &sc.psi).unwrap().transpose();
        assert!(rel_error(&z1, &rhs) < 1e-12);
        let z3 = unfold(&v.z, 2).unwrap();
        let rhs3 = &ch.gbar * khatri_rao(&sc.psi, &omega).unwrap().transpose();
        assert!(rel_error(&z3, &rhs3) < 1e-12);

        assert_eq!(unfold_modes(&v.q4, &[0, 1], &[2, 3]).unwrap(), z1);
        let r = cfg.m_t * cfg.n;
        assert_eq!(
            unfold_modes(&v.core, &[0, 1], &[2, 3]).unwrap(),
            selection_matrix(r).transpose()
        );

        let rebuilt = [(&hs, 0), (&sym.x, 1), (&sc.psi, 2), (&ch.gbar, 3)]
            .iter()
            .try_fold(v.core.clone(), |acc, (m, n)| nmode_product(&acc, m, *n))
            .unwrap();
        let err = rebuilt.distance_sqr(&v.q4).unwrap().sqrt() / v.q4.frobenius_norm();
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn noise_hits_target_snr() {
        let cfg = SystemConfig { m_r: 10, t: 10, k: 100, i: 100, m_t: 2, n: 4, q: 2, ..SystemConfig::default() };
        let (_, _, _, y) = instance(&cfg, 1);
        assert!(y.y.numel() >= 1_000_000);
        let noisy = add_noise(&y, 10.0, 99);
        let clean = noisy.noiseless.as_ref().unwrap();
        let empirical = 10.0 * (clean.frobenius_norm_sqr() / noisy.y.distance_sqr(clean).unwrap()).log10();
        assert!((empirical - 10.0).abs() < 0.2, "{empirical}");
        assert!((noisy.achieved_snr_db.unwrap() - empirical).abs() < 1e-9);
    }

    #[test]
    fn noise_is_seeded_and_infinite_snr_is_identity() {
        let (_, _, _, y) = instance(&small_cfg(), 2);
        assert_eq!(add_noise(&y, 5.0, 7), add_noise(&y, 5.0, 7));
        assert_ne!(add_noise(&y, 5.0, 7).y, add_noise(&y, 5.0, 8).y);
        let same = add_noise(&y, f64::INFINITY, 7);
        assert_eq!(same.y, y.y);
        assert_eq!(same.achieved_snr_db, None);
    }

    #[test]
    fn diagonal_rescaling_preserves_signal_energy() {
        let cfg = small_cfg();
        let (ch, sc, sym, y) = instance(&cfg, 41);
        let mut r = rng(5);
        let d: Vec<c64> = (0..cfg.n).map(|_| unit_phase(&mut r)).collect();
        let dm = ComplexMatrix::from_diagonal(&ComplexVector::from_vec(d.clone()));
        let dinv = ComplexMatrix::from_diagonal(&ComplexVector::from_vec(d.iter().map(|z| z.inv()).collect()));
        // D acts on the effective channel HS: H' = H S D Sᴴ, G_i' = D⁻¹ G_i.
        let h2 = &ch.h * &sc.s * &dm * sc.s.adjoint();
        let ch2 = ChannelSet::from_parts(h2, ch.g.iter().map(|g| &dinv * g).collect()).unwrap();
        let y2 = synthesize_received(&ch2, &sc, &sym).unwrap();
        assert!((y2.y.frobenius_norm() - y.y.frobenius_norm()).abs() < 1e-12 * y.y.frobenius_norm());
        assert!(y2.y.distance_sqr(&y.y).unwrap().sqrt() < 1e-12 * y.y.frobenius_norm());
    }
}
