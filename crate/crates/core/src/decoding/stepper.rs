use super::beam::StepModel;
use crate::error::Result;
use crate::model::{ConvSeq2Seq, DecoderCache, EncoderStates};
use crate::numeric::Real;
use crate::tokenization::{BOS_ID, EOS_ID};

/// A trained network bound to one encoded source.
pub struct ConvStepper<'m> {
    model: &'m ConvSeq2Seq,
    encoded: EncoderStates,
    banned: Vec<usize>,
}

impl<'m> ConvStepper<'m> {
    pub fn new(model: &'m ConvSeq2Seq, source: &[usize], banned: Vec<usize>) -> Result<Self> {
        Ok(ConvStepper {
            model,
            encoded: model.encode_states(source)?,
            banned,
        })
    }
}

impl StepModel for ConvStepper<'_> {
    type State = DecoderCache;

    fn vocab_size(&self) -> usize {
        self.model.config().vocab_size
    }

    fn bos(&self) -> usize {
        BOS_ID
    }

    fn eos(&self) -> usize {
        EOS_ID
    }

    fn banned(&self) -> &[usize] {
        &self.banned
    }

    fn initial_state(&self) -> DecoderCache {
        DecoderCache::new()
    }

    fn step(&self, state: &mut DecoderCache, prefix: &[usize]) -> Result<Vec<Real>> {
        self.model.decode_step(&self.encoded, state, prefix)
    }
}
