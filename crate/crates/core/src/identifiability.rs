//! Closed-form feasibility checks and per-iteration cost estimates.
//!
//! PAKRON needs `(Ḡ ⋄ Ψ)` and `(Ψ ⋄ Ω)` to have full column rank, i.e.
//! `I·K ≥ M_T·N` and `K·T·M_R ≥ M_T·N`. TALS-TUCKER needs its three mixing
//! matrices to have full row rank: `I·K·T ≥ N`, `I·K·M_R ≥ M_T` and
//! `K·T·M_R ≥ M_T·N`. The Kruskal check evaluates the parameterized
//! sufficient condition `K + T·rank(H) + min(I, M_T·N) ≥ 2·M_T·N + 2`.

use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub m_t: usize,
    pub m_r: usize,
    pub n: usize,
    pub k: usize,
    pub t: usize,
    pub i: usize,
}

impl From<&SystemConfig> for Dims {
    fn from(c: &SystemConfig) -> Self {
        Self {
            m_t: c.m_t,
            m_r: c.m_r,
            n: c.n,
            k: c.k,
            t: c.t,
            i: c.i,
        }
    }
}

/// One necessary inequality `lhs ≥ rhs`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inequality {
    pub receiver: String,
    pub name: String,
    pub lhs: u64,
    pub rhs: u64,
    pub holds: bool,
}

impl Inequality {
    fn new(receiver: &str, name: &str, lhs: usize, rhs: usize) -> Self {
        Self {
            receiver: receiver.into(),
            name: name.into(),
            lhs: lhs as u64,
            rhs: rhs as u64,
            holds: lhs >= rhs,
        }
    }

    fn describe(&self) -> String {
        format!("{} ({} < {})", self.name, self.lhs, self.rhs)
    }
}

pub fn pakron_inequalities(d: Dims) -> Vec<Inequality> {
    let r = d.m_t * d.n;
    vec![
        Inequality::new("pakron", "I*K >= M_T*N", d.i * d.k, r),
        Inequality::new("pakron", "K*T*M_R >= M_T*N", d.k * d.t * d.m_r, r),
    ]
}

pub fn tucker_inequalities(d: Dims) -> Vec<Inequality> {
    vec![
        Inequality::new("tucker", "I*K*T >= N", d.i * d.k * d.t, d.n),
        Inequality::new("tucker", "I*K*M_R >= M_T", d.i * d.k * d.m_r, d.m_t),
        Inequality::new("tucker", "K*T*M_R >= M_T*N", d.k * d.t * d.m_r, d.m_t * d.n),
    ]
}

fn require(receiver: &str, ineqs: Vec<Inequality>) -> Result<()> {
    match ineqs.into_iter().find(|q| !q.holds) {
        Some(q) => Err(Error::Identifiability {
            receiver: receiver.into(),
            inequality: q.describe(),
        }),
        None => Ok(()),
    }
}

pub fn require_pakron(d: Dims) -> Result<()> {
    require("pakron", pakron_inequalities(d))
}

pub fn require_tucker(d: Dims) -> Result<()> {
    require("tucker", tucker_inequalities(d))
}

fn ceil_div(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KminBounds {
    pub kmin_pakron: usize,
    pub kmin_tucker: usize,
}

/// Smallest integer `K` meeting each receiver's necessary bound.
pub fn kmin_bounds(d: Dims) -> KminBounds {
    let r = d.m_t * d.n;
    KminBounds {
        kmin_pakron: ceil_div(r, d.i).max(ceil_div(r, d.t * d.m_r)),
        kmin_tucker: ceil_div(d.n, d.i * d.t)
            .max(ceil_div(d.m_t, d.i * d.m_r))
            .max(ceil_div(r, d.t * d.m_r)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KruskalCheck {
    pub lhs: u64,
    pub rhs: u64,
    pub ok: bool,
}

/// `rank_h` replaces the rich-scattering `min(M_R, N)` when the surface-to-BS
/// channel is known to be rank deficient.
pub fn kruskal_check(d: Dims, rank_h: Option<usize>) -> KruskalCheck {
    let full = d.m_r.min(d.n);
    let rank = rank_h.map_or(full, |r| r.min(full));
    let r = d.m_t * d.n;
    let lhs = d.k + d.t * rank + d.i.min(r);
    let rhs = 2 * r + 2;
    KruskalCheck {
        lhs: lhs as u64,
        rhs: rhs as u64,
        ok: lhs >= rhs,
    }
}

/// Dominant per-iteration flop terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Complexity {
    pub pakron: u128,
    pub tucker: u128,
}

pub fn complexity_dominant(d: Dims) -> Complexity {
    let [m_t, m_r, n, k, t, i] = [d.m_t, d.m_r, d.n, d.k, d.t, d.i].map(|v| v as u128);
    let r = m_t * n;
    Complexity {
        pakron: (r * r * i * k).max(r * r * k * t * m_r).max(r * t * m_r),
        tucker: (n * n * i * k * t).max(i * k * m_r * m_t * m_t).max(k * t * m_r * r * r),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentReport {
    pub kmin_pakron: usize,
    pub kmin_tucker: usize,
    pub kruskal_lhs: u64,
    pub kruskal_rhs: u64,
    pub kruskal_ok: bool,
    pub inequalities: Vec<Inequality>,
    pub complexity: Complexity,
}

pub fn report(cfg: &SystemConfig, rank_h: Option<usize>) -> IdentReport {
    let d = Dims::from(cfg);
    let kmin = kmin_bounds(d);
    let kr = kruskal_check(d, rank_h);
    let mut inequalities = pakron_inequalities(d);
    inequalities.extend(tucker_inequalities(d));
    IdentReport {
        kmin_pakron: kmin.kmin_pakron,
        kmin_tucker: kmin.kmin_tucker,
        kruskal_lhs: kr.lhs,
        kruskal_rhs: kr.rhs,
        kruskal_ok: kr.ok,
        inequalities,
        complexity: complexity_dominant(d),
    }
}
