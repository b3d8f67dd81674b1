//! Self-contained JSON snapshot of a noiseless instance (tensor plus truth)
//! for cross-implementation testing.
//!
//! Arrays are stored as `{"dims": [...], "data": [re0, im0, re1, im1, ...]}`
//! with the first index fastest.

use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::experiments::{instance_seed, noiseless_instance, Instance};
use crate::signal::{
    synthesize_received, ChannelSet, Constellation, ReceivedTensor, ScatteringDesign, SymbolBlock,
};
use crate::tensor::{c64, ComplexMatrix, ComplexTensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawArray {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl RawArray {
    pub fn from_tensor(t: &ComplexTensor) -> Self {
        Self {
            dims: t.dims().to_vec(),
            data: t.data().iter().flat_map(|v| [v.re, v.im]).collect(),
        }
    }

    pub fn from_matrix(m: &ComplexMatrix) -> Self {
        Self::from_tensor(&ComplexTensor::from_matrix(m))
    }

    pub fn to_tensor(&self) -> Result<ComplexTensor> {
        if !self.data.len().is_multiple_of(2) {
            return Err(Error::Parse("interleaved data has odd length".into()));
        }
        let data = self.data.chunks_exact(2).map(|p| c64::new(p[0], p[1])).collect();
        ComplexTensor::new(self.dims.clone(), data)
    }

    pub fn to_matrix(&self) -> Result<ComplexMatrix> {
        self.to_tensor()?.to_matrix()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub config: SystemConfig,
    pub seed: u64,
    /// Noiseless `M_R × T × K × I` tensor.
    pub y: RawArray,
    pub h: RawArray,
    /// `N × M_T × I`.
    pub g: RawArray,
    pub x: RawArray,
    pub symbol_indices: Vec<Vec<usize>>,
    pub s: RawArray,
    pub p: RawArray,
    pub w: RawArray,
    pub psi: RawArray,
}

impl Fixture {
    /// Deterministic for a given config (its master seed picks the instance).
    pub fn generate(cfg: &SystemConfig) -> Result<Self> {
        cfg.validate()?;
        let seed = instance_seed(cfg.seed, 0);
        let inst = noiseless_instance(cfg, seed)?;
        let (n, m_t) = (cfg.n, cfg.m_t);
        let mut g = ComplexTensor::zeros(&[n, m_t, cfg.i]);
        for (i, gi) in inst.channels.g.iter().enumerate() {
            g.data_mut()[i * n * m_t..(i + 1) * n * m_t].copy_from_slice(gi.as_slice());
        }
        Ok(Self {
            config: cfg.clone(),
            seed,
            y: RawArray::from_tensor(&inst.received.y),
            h: RawArray::from_matrix(&inst.channels.h),
            g: RawArray::from_tensor(&g),
            x: RawArray::from_matrix(&inst.symbols.x),
            symbol_indices: inst.symbols.indices.clone(),
            s: RawArray::from_matrix(&inst.design.s),
            p: RawArray::from_matrix(&inst.design.p),
            w: RawArray::from_matrix(&inst.design.w),
            psi: RawArray::from_matrix(&inst.design.psi),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Rebuilds the instance, taking the recorded tensor as the observation.
    pub fn instance(&self) -> Result<Instance> {
        let h = self.h.to_matrix()?;
        let g = self.g.to_tensor()?;
        let gd = g.dims().to_vec();
        if gd.len() != 3 {
            return Err(Error::Dimension(format!("G must be order 3, got {gd:?}")));
        }
        let block = gd[0] * gd[1];
        let gs = (0..gd[2])
            .map(|i| ComplexMatrix::from_column_slice(gd[0], gd[1], &g.data()[i * block..(i + 1) * block]))
            .collect();
        let channels = ChannelSet::from_parts(h, gs)?;
        let design = ScatteringDesign::from_parts(self.s.to_matrix()?, self.p.to_matrix()?, self.w.to_matrix()?)?;
        let constellation = Constellation::psk(self.config.modulation_order)?;
        let symbols = SymbolBlock::from_indices(self.symbol_indices.clone(), constellation)?;
        let y = self.y.to_tensor()?;
        Ok(Instance {
            channels,
            design,
            symbols,
            received: ReceivedTensor {
                y: y.clone(),
                noiseless: Some(y),
                achieved_snr_db: None,
            },
        })
    }

    /// Relative distance between the recorded tensor and one re-synthesized
    /// from the recorded truth.
    pub fn resynthesis_error(&self) -> Result<f64> {
        let inst = self.instance()?;
        let again = synthesize_received(&inst.channels, &inst.design, &inst.symbols)?;
        let energy = inst.received.y.frobenius_norm_sqr();
        Ok((again.y.distance_sqr(&inst.received.y)? / energy).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SystemConfig {
        SystemConfig::parse("n = 4\nk = 8\ni = 4\nq = 2\nseed = 9\n", &[]).unwrap()
    }

    #[test]
    fn fixture_round_trip() {
        let f = Fixture::generate(&cfg()).unwrap();
        let text = f.to_json().unwrap();
        let back = Fixture::from_json(&text).unwrap();
        assert_eq!(f, back);
        assert!(back.resynthesis_error().unwrap() <= 1e-12);
        assert_eq!(Fixture::generate(&cfg()).unwrap().to_json().unwrap(), text);
        let inst = back.instance().unwrap();
        assert_eq!(inst.design.psi, back.psi.to_matrix().unwrap());
    }
}
