//! Per-user encoder/decoder networks and the multi-user forward pass.
//!
//! Each user `k` owns four stages: a semantic encoder `α_k`, a JSC encoder
//! `β_k`, a JSC decoder `γ_k` and a semantic decoder `θ_k`. The variant
//! decides where channel state enters the networks and which channel the
//! symbols cross.

mod checkpoint;
mod forward;
mod params;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use forward::{
    bind, forward_pass, jsc_decode, jsc_encode, power_normalize_reshape, reconstruct, semantic_decode, semantic_encode,
    BoundParams, BoundUser, ForwardOutput, LayerVars, PassOptions,
};
pub use params::{Layer, TransceiverParams, UserParams};

use std::fmt;
use std::str::FromStr;

use crate::channel::csi_len;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// No channel state anywhere.
    CsiFree,
    /// Channel state at the receivers only.
    Csir,
    /// Channel state at both ends.
    Csitr,
    /// Identity channel, no noise, no channel state.
    InterferenceFree,
    /// CSI-free networks around classical precoders and receive filters.
    SemiConventional,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::CsiFree,
        Variant::Csir,
        Variant::Csitr,
        Variant::InterferenceFree,
        Variant::SemiConventional,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::CsiFree => "csi_free",
            Variant::Csir => "csir",
            Variant::Csitr => "csitr",
            Variant::InterferenceFree => "interference_free",
            Variant::SemiConventional => "semi_conventional",
        }
    }

    /// Stable numeric tag used in checkpoints.
    pub fn tag(self) -> u32 {
        match self {
            Variant::CsiFree => 0,
            Variant::Csir => 1,
            Variant::Csitr => 2,
            Variant::InterferenceFree => 3,
            Variant::SemiConventional => 4,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.tag() == tag)
    }

    pub fn csi_at_transmitter(self) -> bool {
        self == Variant::Csitr
    }

    pub fn csi_at_receiver(self) -> bool {
        matches!(self, Variant::Csir | Variant::Csitr)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::config("variant", format!("unknown variant `{s}`")))
    }
}

/// Network and link dimensions shared by every user.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ModelDims {
    pub users: usize,
    pub tx: usize,
    pub rx: usize,
    /// Symbols per block `N_B`.
    pub block_len: usize,
    pub hidden: usize,
    /// Pixels per image `n`.
    pub image_len: usize,
}

impl ModelDims {
    pub fn validate(&self, variant: Variant) -> Result<()> {
        for (name, v) in [
            ("users", self.users),
            ("tx", self.tx),
            ("rx", self.rx),
            ("block_len", self.block_len),
            ("hidden", self.hidden),
            ("image_len", self.image_len),
        ] {
            if v == 0 {
                return Err(Error::config(name, "must be at least 1"));
            }
        }
        if variant == Variant::SemiConventional && self.tx < self.rx {
            return Err(Error::config(
                "tx",
                format!("semi_conventional sends N_r = {} streams and needs N_t ≥ N_r, got {}", self.rx, self.tx),
            ));
        }
        Ok(())
    }

    /// Complex rows of the transmitted block (streams for the precoded variant).
    pub fn symbol_rows(&self, variant: Variant) -> usize {
        match variant {
            Variant::SemiConventional => self.rx,
            _ => self.tx,
        }
    }

    /// Complex rows of the block a decoder receives.
    pub fn received_rows(&self, variant: Variant) -> usize {
        match variant {
            Variant::InterferenceFree => self.tx,
            _ => self.rx,
        }
    }

    /// Real width of the encoder output `2·rows·N_B`.
    pub fn symbol_width(&self, variant: Variant) -> usize {
        2 * self.symbol_rows(variant) * self.block_len
    }

    pub fn received_width(&self, variant: Variant) -> usize {
        2 * self.received_rows(variant) * self.block_len
    }

    pub fn csi_len(&self) -> usize {
        csi_len(self.users, self.tx, self.rx)
    }

    /// Two-user, 2×2, `N_B = 16`, 256 hidden units, 28×28 images.
    pub fn standard() -> Self {
        ModelDims {
            users: 2,
            tx: 2,
            rx: 2,
            block_len: 16,
            hidden: 256,
            image_len: 784,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
            assert_eq!(Variant::from_tag(v.tag()), Some(v));
        }
        assert!("csi".parse::<Variant>().is_err());
    }

    #[test]
    fn standard_widths() {
        let d = ModelDims::standard();
        assert_eq!(d.symbol_width(Variant::Csir), 64);
        assert_eq!(d.symbol_width(Variant::SemiConventional), 64);
        assert_eq!(d.received_width(Variant::Csir) + d.csi_len(), 96);
    }

    #[test]
    fn semi_conventional_needs_enough_transmit_antennas() {
        let d = ModelDims { tx: 1, ..ModelDims::standard() };
        assert!(d.validate(Variant::SemiConventional).is_err());
        assert!(d.validate(Variant::Csir).is_ok());
    }
}
