use rand::Rng;

use super::params::{ConvBlock, Linear};
use super::ConvSeq2Seq;
use crate::error::{Error, Result};
use crate::numeric::{Padding, Tape, Tensor, Var};

pub(crate) const SQRT_HALF: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Encoder outputs on a tape: attention keys and (key + input embedding) values.
#[derive(Clone, Copy, Debug)]
pub struct EncoderVars {
    pub keys: Var,
    pub values: Var,
    pub len: usize,
}

fn linear(tape: &mut Tape<'_>, x: Var, l: Linear) -> Result<Var> {
    let w = tape.param(l.weight);
    let y = tape.matmul(x, w)?;
    let b = tape.param(l.bias);
    tape.add_row(y, b)
}

fn conv_glu(tape: &mut Tape<'_>, x: Var, c: ConvBlock, padding: Padding) -> Result<Var> {
    let k = tape.param(c.kernel);
    let y = tape.conv1d(x, k, padding)?;
    let b = tape.param(c.bias);
    let y = tape.add_row(y, b)?;
    tape.glu(y)
}

fn residual(tape: &mut Tape<'_>, a: Var, b: Var) -> Result<Var> {
    let s = tape.add(a, b)?;
    Ok(tape.scale(s, SQRT_HALF))
}

impl ConvSeq2Seq {
    fn check_tape(&self, tape: &Tape<'_>) -> Result<()> {
        if std::ptr::eq(tape.params(), &self.store) {
            Ok(())
        } else {
            Err(Error::Contract(
                "tape was built over a different parameter store".into(),
            ))
        }
    }

    fn position_vars(&self, tape: &mut Tape<'_>, source: &[usize]) -> Result<Var> {
        let assignment = self.position_assignment(source)?;
        let read: Vec<usize> = assignment.iter().filter(|a| a.read).map(|a| a.position).collect();
        let rest: Vec<usize> = assignment.iter().filter(|a| !a.read).map(|a| a.position).collect();
        let main = tape.param(self.ids.encoder_positions);
        match (read.is_empty(), self.ids.read_positions) {
            (false, Some(table)) => {
                let table = tape.param(table);
                let r = tape.embedding(table, &read)?;
                if rest.is_empty() {
                    Ok(r)
                } else {
                    let m = tape.embedding(main, &rest)?;
                    tape.concat_rows(r, m)
                }
            }
            _ => tape.embedding(main, &rest),
        }
    }

    /// Runs the encoder. `rng` drives dropout; `None` is evaluation mode.
    pub fn encode<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<'_>,
        source: &[usize],
        mut rng: Option<&mut R>,
    ) -> Result<EncoderVars> {
        self.check_tape(tape)?;
        self.check_ids(source)?;
        let p = self.config.dropout_rate;
        let table = tape.param(self.ids.encoder_tokens);
        let tok = tape.embedding(table, source)?;
        let pos = self.position_vars(tape, source)?;
        let e = tape.add(tok, pos)?;
        let e = tape.dropout(e, p, rng.as_deref_mut());
        let mut x = match self.ids.encoder_in {
            Some(l) => linear(tape, e, l)?,
            None => e,
        };
        for &layer in &self.ids.encoder_layers {
            let r = x;
            let xd = tape.dropout(x, p, rng.as_deref_mut());
            let y = conv_glu(tape, xd, layer, Padding::Symmetric)?;
            x = residual(tape, y, r)?;
        }
        let keys = linear(tape, x, self.ids.encoder_out)?;
        let values = residual(tape, keys, e)?;
        Ok(EncoderVars {
            keys,
            values,
            len: source.len(),
        })
    }

    /// Teacher-forced decoder pass over `inputs` (the target shifted right behind
    /// `<s>`). Returns log-probabilities `[inputs.len(), vocab]`.
    pub fn decode_train<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<'_>,
        enc: &EncoderVars,
        inputs: &[usize],
        mut rng: Option<&mut R>,
    ) -> Result<Var> {
        self.check_tape(tape)?;
        self.check_ids(inputs)?;
        let t = inputs.len();
        if t > self.config.max_positions {
            return Err(Error::PositionOverflow {
                position: t - 1,
                max: self.config.max_positions,
            });
        }
        let p = self.config.dropout_rate;
        let table = tape.param(self.ids.decoder_tokens);
        let tok = tape.embedding(table, inputs)?;
        let pos_table = tape.param(self.ids.decoder_positions);
        let positions: Vec<usize> = (0..t).collect();
        let pos = tape.embedding(pos_table, &positions)?;
        let g = tape.add(tok, pos)?;
        let g = tape.dropout(g, p, rng.as_deref_mut());
        let mut x = match self.ids.decoder_in {
            Some(l) => linear(tape, g, l)?,
            None => g,
        };
        let causal_mask = self_attention_mask(t);
        for (i, layer) in self.ids.decoder_layers.iter().enumerate() {
            let r = x;
            let xd = tape.dropout(x, p, rng.as_deref_mut());
            let h = conv_glu(tape, xd, layer.conv, Padding::Causal)?;
            let q = linear(tape, h, layer.attn_in)?;
            let d = residual(tape, q, g)?;
            let att = if self.config.attends_source(i) {
                tape.attention(d, enc.keys, enc.values, None)?
            } else {
                tape.attention(d, d, d, Some(&causal_mask))?
            };
            let ctx = linear(tape, att.context, layer.attn_out)?;
            let h = residual(tape, h, ctx)?;
            x = residual(tape, h, r)?;
        }
        let out = linear(tape, x, self.ids.decoder_out)?;
        let out = tape.dropout(out, p, rng);
        let emb = tape.param(self.ids.output_tokens);
        let logits = tape.matmul_bt(out, emb)?;
        let bias = tape.param(self.ids.output_bias);
        let logits = tape.add_row(logits, bias)?;
        tape.log_softmax(logits)
    }

    /// Summed target NLL of one (source, target) pair. `target` excludes `<s>` and
    /// `</s>`; both are added here. Returns the loss node and the token count.
    pub fn example_loss<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<'_>,
        source: &[usize],
        target: &[usize],
        mut rng: Option<&mut R>,
    ) -> Result<(Var, usize)> {
        let (inputs, outputs) = teacher_forcing(target);
        let enc = self.encode(tape, source, rng.as_deref_mut())?;
        let logp = self.decode_train(tape, &enc, &inputs, rng)?;
        Ok((tape.nll(logp, &outputs)?, outputs.len()))
    }

    /// Eval-mode log-probability matrix for a full target, without gradients.
    pub fn score_target(&self, source: &[usize], inputs: &[usize]) -> Result<Tensor> {
        let mut tape = Tape::new(&self.store);
        let enc = self.encode::<rand_chacha::ChaCha8Rng>(&mut tape, source, None)?;
        let logp = self.decode_train::<rand_chacha::ChaCha8Rng>(&mut tape, &enc, inputs, None)?;
        Ok(tape.tensor(logp))
    }
}

/// Decoder inputs `<s> y…` and outputs `y… </s>` for a target sequence.
pub fn teacher_forcing(target: &[usize]) -> (Vec<usize>, Vec<usize>) {
    use crate::tokenization::{BOS_ID, EOS_ID};
    let mut inputs = Vec::with_capacity(target.len() + 1);
    inputs.push(BOS_ID);
    inputs.extend_from_slice(target);
    let mut outputs = target.to_vec();
    outputs.push(EOS_ID);
    (inputs, outputs)
}

/// Position `t` sees `j < t`; position 0 sees only itself.
pub(crate) fn self_attention_mask(t: usize) -> Vec<bool> {
    let mut mask = vec![false; t * t];
    for i in 0..t {
        if i == 0 {
            mask[0] = true;
        }
        for j in 0..i {
            mask[i * t + j] = true;
        }
    }
    mask
}
