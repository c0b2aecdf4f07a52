use crate::env::Vertex;
use crate::seed::{unit_exponential, KeyHasher};

const REMOVAL_DOMAIN: u64 = 0x7265_6d6f_7661_6c01;
const TRANSMIT_DOMAIN: u64 = 0x7472_616e_736d_6902;

/// The graphical randomness of one realisation.
///
/// `t_removal(x)` is the infectious period of `x` and `e_unit(x, y)` the
/// unit-rate transmission clock on the directed pair `x -> y`; the
/// transmission delay at infection rate `lambda` is `e_unit / lambda`. Both
/// are pure keyed draws, so the oracle is `Copy` and every query is
/// reproducible without a memo table. Sharing an oracle across several
/// `lambda` values realises the basic coupling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClockOracle {
    seed: u64,
}

impl ClockOracle {
    pub fn new(seed: u64) -> Self {
        ClockOracle { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn t_removal(&self, x: &Vertex) -> f64 {
        unit_exponential(
            KeyHasher::new(self.seed, REMOVAL_DOMAIN)
                .absorb_coords(x.coords())
                .finish(),
        )
    }

    pub fn e_unit(&self, x: &Vertex, y: &Vertex) -> f64 {
        self.sender(x).e_unit(y)
    }

    pub fn u_lambda(&self, x: &Vertex, y: &Vertex, lambda: f64) -> f64 {
        self.e_unit(x, y) / lambda
    }

    /// Clocks owned by `x` as a sender, with the key prefix for `x` absorbed once.
    pub fn sender(&self, x: &Vertex) -> SenderClocks {
        SenderClocks {
            removal: self.t_removal(x),
            prefix: KeyHasher::new(self.seed, TRANSMIT_DOMAIN)
                .absorb(x.dim() as u64)
                .absorb_coords(x.coords()),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SenderClocks {
    pub removal: f64,
    prefix: KeyHasher,
}

impl SenderClocks {
    #[inline]
    pub fn e_unit(&self, y: &Vertex) -> f64 {
        unit_exponential(self.prefix.absorb_coords(y.coords()).finish())
    }
}
