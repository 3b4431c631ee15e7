use super::forward::SQRT_HALF;
use super::params::Linear;
use super::ConvSeq2Seq;
use crate::error::{Error, Result};
use crate::numeric::kernels::{gemm_acc, gemm_bt_acc, log_softmax_in_place, masked_softmax_in_place, sigmoid};
use crate::numeric::{Real, Tape, Tensor};

/// Eval-mode encoder outputs detached from any tape.
#[derive(Clone, Debug)]
pub struct EncoderStates {
    pub keys: Tensor,
    pub values: Tensor,
}

impl EncoderStates {
    pub fn len(&self) -> usize {
        self.keys.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-layer history needed to extend a decoder prefix by one token.
#[derive(Clone, Debug, Default)]
pub struct DecoderCache {
    tokens: Vec<usize>,
    layer_inputs: Vec<Vec<Real>>,
    self_states: Vec<Vec<Real>>,
}

impl DecoderCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Tokens already folded into the cache.
    pub fn tokens(&self) -> &[usize] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

impl ConvSeq2Seq {
    fn linear_row(&self, x: &[Real], l: Linear) -> Vec<Real> {
        let w = self.store.value(l.weight);
        let (inp, out) = w.matrix_dims();
        let mut y = vec![0.0; out];
        gemm_acc(1, inp, out, x, w.data(), &mut y);
        for (a, b) in y.iter_mut().zip(self.store.value(l.bias).data()) {
            *a += b;
        }
        y
    }

    pub fn encode_states(&self, source: &[usize]) -> Result<EncoderStates> {
        let mut tape = Tape::new(&self.store);
        let enc = self.encode::<rand_chacha::ChaCha8Rng>(&mut tape, source, None)?;
        Ok(EncoderStates {
            keys: tape.tensor(enc.keys),
            values: tape.tensor(enc.values),
        })
    }

    /// Next-token log-probabilities after `prefix`, which starts with `<s>`.
    /// `cache` must hold exactly `prefix[..prefix.len() - 1]`; it is advanced by
    /// the final token.
    pub fn decode_step(&self, enc: &EncoderStates, cache: &mut DecoderCache, prefix: &[usize]) -> Result<Vec<Real>> {
        let Some((&token, done)) = prefix.split_last() else {
            return Err(Error::Contract("decode_step needs a nonempty prefix".into()));
        };
        if cache.tokens != done {
            return Err(Error::StaleCache(format!(
                "cache holds {} tokens {:?}, prefix expects {:?}",
                cache.tokens.len(),
                cache.tokens,
                done
            )));
        }
        self.check_ids(&[token])?;
        let cfg = &self.config;
        let t = done.len();
        if t >= cfg.max_positions {
            return Err(Error::PositionOverflow {
                position: t,
                max: cfg.max_positions,
            });
        }
        let (e, h, w) = (cfg.embed_size, cfg.hidden_size, cfg.kernel_width);
        let layers = self.ids.decoder_layers.len();
        if cache.layer_inputs.is_empty() {
            cache.layer_inputs = vec![Vec::new(); layers];
            cache.self_states = vec![Vec::new(); layers];
        }

        let tok = self.store.value(self.ids.decoder_tokens).row(token);
        let pos = self.store.value(self.ids.decoder_positions).row(t);
        let g: Vec<Real> = tok.iter().zip(pos).map(|(a, b)| a + b).collect();
        let mut x = match self.ids.decoder_in {
            Some(l) => self.linear_row(&g, l),
            None => g.clone(),
        };

        for (i, layer) in self.ids.decoder_layers.iter().enumerate() {
            let inputs = &mut cache.layer_inputs[i];
            inputs.extend_from_slice(&x);
            let kernel = self.store.value(layer.conv.kernel).data();
            let mut c = self.store.value(layer.conv.bias).data().to_vec();
            for tap in 0..w {
                let Some(src) = (t + tap).checked_sub(w - 1) else {
                    continue;
                };
                let k = &kernel[tap * h * 2 * h..(tap + 1) * h * 2 * h];
                gemm_acc(1, h, 2 * h, &inputs[src * h..(src + 1) * h], k, &mut c);
            }
            let hid: Vec<Real> = (0..h).map(|j| c[j] * sigmoid(c[h + j])).collect();
            let q = self.linear_row(&hid, layer.attn_in);
            let d: Vec<Real> = q.iter().zip(&g).map(|(a, b)| (a + b) * SQRT_HALF).collect();

            let mut ctx = vec![0.0; e];
            if cfg.attends_source(i) {
                attend(&d, enc.keys.data(), enc.values.data(), e, &mut ctx);
            } else {
                let states = &mut cache.self_states[i];
                if t == 0 {
                    attend(&d, &d, &d, e, &mut ctx);
                } else {
                    attend(&d, states, states, e, &mut ctx);
                }
                states.extend_from_slice(&d);
            }
            let ctx = self.linear_row(&ctx, layer.attn_out);
            let hid: Vec<Real> = hid.iter().zip(&ctx).map(|(a, b)| (a + b) * SQRT_HALF).collect();
            x = hid.iter().zip(&x).map(|(a, b)| (a + b) * SQRT_HALF).collect();
        }

        let out = self.linear_row(&x, self.ids.decoder_out);
        let emb = self.store.value(self.ids.output_tokens);
        let v = cfg.vocab_size;
        let mut logits = self.store.value(self.ids.output_bias).data().to_vec();
        let mut proj = vec![0.0; v];
        gemm_bt_acc(1, e, v, &out, emb.data(), &mut proj);
        for (a, b) in logits.iter_mut().zip(&proj) {
            *a += b;
        }
        log_softmax_in_place(&mut logits);
        cache.tokens.push(token);
        Ok(logits)
    }
}

fn attend(q: &[Real], keys: &[Real], values: &[Real], dim: usize, ctx: &mut [Real]) {
    let n = keys.len() / dim;
    let mut scores = vec![0.0; n];
    gemm_bt_acc(1, dim, n, q, keys, &mut scores);
    masked_softmax_in_place(&mut scores, None);
    gemm_acc(1, n, dim, &scores, values, ctx);
}
