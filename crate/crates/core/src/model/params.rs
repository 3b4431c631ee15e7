use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{ModelConfig, PositionSets};
use crate::error::{Error, Result};
use crate::numeric::{ParamId, ParamStore, Real, Tensor};

#[derive(Clone, Copy, Debug)]
pub(crate) struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvBlock {
    pub kernel: ParamId,
    pub bias: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct DecoderLayer {
    pub conv: ConvBlock,
    pub attn_in: Linear,
    pub attn_out: Linear,
}

/// Handles into the store for every weight of the network.
#[derive(Clone, Debug)]
pub(crate) struct ParamIds {
    pub encoder_tokens: ParamId,
    pub decoder_tokens: ParamId,
    pub output_tokens: ParamId,
    pub output_bias: ParamId,
    pub encoder_positions: ParamId,
    pub read_positions: Option<ParamId>,
    pub decoder_positions: ParamId,
    pub encoder_in: Option<Linear>,
    pub encoder_layers: Vec<ConvBlock>,
    pub encoder_out: Linear,
    pub decoder_in: Option<Linear>,
    pub decoder_layers: Vec<DecoderLayer>,
    pub decoder_out: Linear,
}

/// Places where the token table is consumed.
pub const TOKEN_USE_SITES: [&str; 3] = ["encoder input", "decoder input", "output projection"];

struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    fn normal(&mut self, shape: &[usize], std: Real) -> Tensor {
        let dist = Normal::new(0.0, std).expect("positive standard deviation");
        let mut t = Tensor::zeros(shape);
        for v in t.data_mut() {
            *v = dist.sample(&mut self.rng);
        }
        t
    }
}

fn linear(store: &mut ParamStore, init: &mut Init, name: &str, inp: usize, out: usize) -> Result<Linear> {
    let std = (1.0 / inp as Real).sqrt();
    Ok(Linear {
        weight: store.add(format!("{name}.weight"), init.normal(&[inp, out], std))?,
        bias: store.add(format!("{name}.bias"), Tensor::zeros(&[out]))?,
    })
}

fn conv(store: &mut ParamStore, init: &mut Init, name: &str, cfg: &ModelConfig) -> Result<ConvBlock> {
    let (w, h) = (cfg.kernel_width, cfg.hidden_size);
    let std = (4.0 * (1.0 - cfg.dropout_rate) / (w * h) as Real).sqrt();
    Ok(ConvBlock {
        kernel: store.add(format!("{name}.conv.weight"), init.normal(&[w, h, 2 * h], std))?,
        bias: store.add(format!("{name}.conv.bias"), Tensor::zeros(&[2 * h]))?,
    })
}

pub(crate) fn build(cfg: &ModelConfig, seed: u64) -> Result<(ParamStore, ParamIds)> {
    cfg.validate()?;
    let mut store = ParamStore::new();
    let mut init = Init {
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let (v, e, h, p) = (cfg.vocab_size, cfg.embed_size, cfg.hidden_size, cfg.max_positions);
    let emb_std = 0.1;

    let encoder_tokens = store.add("tokens", init.normal(&[v, e], emb_std))?;
    let (decoder_tokens, output_tokens) = if cfg.tie_embeddings {
        (encoder_tokens, encoder_tokens)
    } else {
        (
            store.add("decoder.tokens", init.normal(&[v, e], emb_std))?,
            store.add("output.tokens", init.normal(&[v, e], emb_std))?,
        )
    };
    let encoder_positions = store.add("encoder.positions", init.normal(&[p, e], emb_std))?;
    let read_positions = match cfg.position_sets {
        PositionSets::Single => None,
        PositionSets::ReadRemainder => Some(store.add("encoder.positions.read", init.normal(&[p, e], emb_std))?),
    };
    let decoder_positions = store.add("decoder.positions", init.normal(&[p, e], emb_std))?;

    let encoder_in = match cfg.needs_adapters() {
        true => Some(linear(&mut store, &mut init, "encoder.in", e, h)?),
        false => None,
    };
    let encoder_layers = (0..cfg.encoder_layers)
        .map(|i| conv(&mut store, &mut init, &format!("encoder.layer{i}"), cfg))
        .collect::<Result<Vec<_>>>()?;
    let encoder_out = linear(&mut store, &mut init, "encoder.out", h, e)?;

    let decoder_in = match cfg.needs_adapters() {
        true => Some(linear(&mut store, &mut init, "decoder.in", e, h)?),
        false => None,
    };
    let mut decoder_layers = Vec::with_capacity(cfg.decoder_layers);
    for i in 0..cfg.decoder_layers {
        let name = format!("decoder.layer{i}");
        decoder_layers.push(DecoderLayer {
            conv: conv(&mut store, &mut init, &name, cfg)?,
            attn_in: linear(&mut store, &mut init, &format!("{name}.attn_in"), h, e)?,
            attn_out: linear(&mut store, &mut init, &format!("{name}.attn_out"), e, h)?,
        });
    }
    let decoder_out = linear(&mut store, &mut init, "decoder.out", h, e)?;
    let output_bias = store.add("output.bias", Tensor::zeros(&[v]))?;

    let ids = ParamIds {
        encoder_tokens,
        decoder_tokens,
        output_tokens,
        output_bias,
        encoder_positions,
        read_positions,
        decoder_positions,
        encoder_in,
        encoder_layers,
        encoder_out,
        decoder_in,
        decoder_layers,
        decoder_out,
    };
    Ok((store, ids))
}

/// Which parameter each token-table use site resolves to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TieAudit {
    pub sites: Vec<(&'static str, String)>,
    pub distinct_tables: usize,
}

impl TieAudit {
    pub fn is_tied(&self) -> bool {
        self.distinct_tables == 1
    }

    pub fn check(&self) -> Result<()> {
        if self.is_tied() {
            Ok(())
        } else {
            Err(Error::Contract(format!(
                "token representations are not shared: {:?}",
                self.sites
            )))
        }
    }
}

pub(crate) fn audit(store: &ParamStore, ids: &ParamIds) -> TieAudit {
    let used = [ids.encoder_tokens, ids.decoder_tokens, ids.output_tokens];
    let sites = TOKEN_USE_SITES
        .iter()
        .zip(used)
        .map(|(&site, id)| (site, store.get(id).name.clone()))
        .collect();
    let mut distinct = used.to_vec();
    distinct.sort();
    distinct.dedup();
    TieAudit {
        sites,
        distinct_tables: distinct.len(),
    }
}
