//! Convolutional encoder-decoder with gated linear units, per-layer attention and
//! token representations shared between encoder, decoder and output layer.

mod checkpoint;
mod config;
mod forward;
mod incremental;
mod params;

pub use config::{AttentionPattern, ModelConfig, PositionSets};
pub use forward::{teacher_forcing, EncoderVars};
pub use incremental::{DecoderCache, EncoderStates};
pub use params::{TieAudit, TOKEN_USE_SITES};

use crate::error::{Error, Result};
use crate::numeric::ParamStore;
use crate::tokenization::READ_BOUNDARY_ID;
use params::ParamIds;

/// Position-table slot of one source token.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PositionSlot {
    pub read: bool,
    pub position: usize,
}

#[derive(Clone, Debug)]
pub struct ConvSeq2Seq {
    config: ModelConfig,
    store: ParamStore,
    ids: ParamIds,
}

impl ConvSeq2Seq {
    /// Freshly initialized network, deterministic in `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let (store, ids) = params::build(&config, seed)?;
        Ok(ConvSeq2Seq { config, store, ids })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn num_parameters(&self) -> usize {
        self.store.num_scalars()
    }

    pub fn tied_weight_audit(&self) -> TieAudit {
        params::audit(&self.store, &self.ids)
    }

    /// Name of the parameter holding the token table.
    pub fn token_table_name(&self) -> &str {
        &self.store.get(self.ids.encoder_tokens).name
    }

    fn check_ids(&self, ids: &[usize]) -> Result<()> {
        if ids.is_empty() {
            return Err(Error::Empty("token sequence"));
        }
        match ids.iter().find(|&&i| i >= self.config.vocab_size) {
            Some(bad) => Err(Error::Contract(format!(
                "token id {bad} outside vocabulary of {}",
                self.config.vocab_size
            ))),
            None => Ok(()),
        }
    }

    /// Table and index for each source position. With a read/remainder split the
    /// tokens through the first `@readBoundary` use the read table and positions
    /// restart after it.
    pub fn position_assignment(&self, source: &[usize]) -> Result<Vec<PositionSlot>> {
        let split = match self.ids.read_positions {
            Some(_) => source.iter().position(|&t| t == READ_BOUNDARY_ID).map(|i| i + 1),
            None => None,
        };
        let slots: Vec<PositionSlot> = source
            .iter()
            .enumerate()
            .map(|(i, _)| match split {
                Some(s) if i < s => PositionSlot {
                    read: true,
                    position: i,
                },
                Some(s) => PositionSlot {
                    read: false,
                    position: i - s,
                },
                None => PositionSlot {
                    read: false,
                    position: i,
                },
            })
            .collect();
        if let Some(slot) = slots.iter().find(|s| s.position >= self.config.max_positions) {
            return Err(Error::PositionOverflow {
                position: slot.position,
                max: self.config.max_positions,
            });
        }
        Ok(slots)
    }
}

impl crate::numeric::HasParams for ConvSeq2Seq {
    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
}
