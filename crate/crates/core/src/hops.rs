//! Topology of an n-hop route: per-hop SNR, transport and channel uses.

use crate::channel::NoiseSpec;
use crate::digital::LinkMode;

#[derive(Debug, Clone)]
pub enum Transport {
    /// Real-valued symbols forwarded by an analog relay.
    Analog,
    /// Bits carried by coded modulation or the ideal bit pipe.
    Digital(LinkMode),
}

#[derive(Debug, Clone)]
pub struct LinkSpec {
    pub noise: NoiseSpec,
    pub transport: Transport,
}

impl LinkSpec {
    pub fn analog(snr_db: f64) -> Self {
        LinkSpec {
            noise: NoiseSpec::from_snr_db(snr_db),
            transport: Transport::Analog,
        }
    }

    pub fn digital(snr_db: f64, mode: LinkMode) -> Self {
        LinkSpec {
            noise: NoiseSpec::from_snr_db(snr_db),
            transport: Transport::Digital(mode),
        }
    }

    pub fn is_analog(&self) -> bool {
        matches!(self.transport, Transport::Analog)
    }
}

/// Links from the source `S` through relays `R_1..R_{n-1}` to `D`.
#[derive(Debug, Clone)]
pub struct HopChain {
    pub links: Vec<LinkSpec>,
}

impl HopChain {
    /// `n` analog hops: the first at `snr_s_db`, the rest at `snr_n_db`.
    pub fn analog(snr_s_db: f64, snr_n_db: f64, n: usize) -> Self {
        let links = (0..n)
            .map(|i| LinkSpec::analog(if i == 0 { snr_s_db } else { snr_n_db }))
            .collect();
        HopChain { links }
    }

    /// Analog first hop, digital core network.
    pub fn hybrid(snr_s_db: f64, snr_n_db: f64, n: usize, core: LinkMode) -> Self {
        let mut links = vec![LinkSpec::analog(snr_s_db)];
        links.extend((1..n).map(|_| LinkSpec::digital(snr_n_db, core.clone())));
        HopChain { links }
    }

    /// Fully digital route: `first` on the source hop, `core` afterwards.
    pub fn digital(snr_s_db: f64, snr_n_db: f64, n: usize, first: LinkMode, core: LinkMode) -> Self {
        let mut links = vec![LinkSpec::digital(snr_s_db, first)];
        links.extend((1..n).map(|_| LinkSpec::digital(snr_n_db, core.clone())));
        HopChain { links }
    }

    pub fn n_hops(&self) -> usize {
        self.links.len()
    }

    pub fn sigma2s(&self) -> Vec<f64> {
        self.links.iter().map(|l| l.noise.sigma2).collect()
    }

    pub fn all_analog(&self) -> bool {
        self.links.iter().all(LinkSpec::is_analog)
    }

    /// Hops after the first.
    pub fn core(&self) -> &[LinkSpec] {
        &self.links[1.min(self.links.len())..]
    }
}
