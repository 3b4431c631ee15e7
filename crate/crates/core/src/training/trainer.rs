use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::batching::length_bucketed_batches;
use super::optim::{clip_gradients, nesterov_step, LrSchedule};
use crate::error::{Error, Result};
use crate::model::ConvSeq2Seq;
use crate::numeric::{Gradients, Real, Tape};

/// One encoded training pair. `target` holds the summary ids without `<s>`/`</s>`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
}

impl Example {
    pub fn new(source: Vec<usize>, target: Vec<usize>) -> Self {
        Example { source, target }
    }

    fn tokens(&self) -> usize {
        self.source.len() + self.target.len() + 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: Real,
    pub momentum: Real,
    pub clip_norm: Real,
    pub min_lr: Real,
    pub max_epochs: usize,
    /// Upper bound on source+target tokens per batch.
    pub batch_tokens: usize,
    /// Validations without improvement tolerated before each learning-rate cut.
    #[serde(default)]
    pub lr_patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.2,
            momentum: 0.99,
            clip_norm: 0.1,
            min_lr: 1e-5,
            max_epochs: 100,
            batch_tokens: 4000,
            lr_patience: 0,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-token training NLL, in nats.
    pub train_nll: Real,
    pub val_ppl: Real,
    /// Learning rate used during the epoch.
    pub lr: Real,
}

impl EpochLog {
    pub fn tsv_line(&self) -> String {
        format!(
            "{}\t{:.6}\t{:.6}\t{:e}",
            self.epoch, self.train_nll, self.val_ppl, self.lr
        )
    }
}

pub const TRAIN_LOG_HEADER: &str = "epoch\ttrain_nll\tval_ppl\tlr";

pub fn format_train_log(logs: &[EpochLog]) -> String {
    let mut out = String::from(TRAIN_LOG_HEADER);
    out.push('\n');
    for l in logs {
        let _ = writeln!(out, "{}", l.tsv_line());
    }
    out
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    pub best_val_ppl: Real,
    pub final_lr: Real,
}

/// Summed NLL and token count of a target under teacher forcing.
pub trait TargetScorer: Sync {
    fn target_nll(&self, example: &Example) -> Result<(Real, usize)>;
}

impl TargetScorer for ConvSeq2Seq {
    fn target_nll(&self, example: &Example) -> Result<(Real, usize)> {
        let mut tape = Tape::new(self.store());
        let (loss, n) = self.example_loss::<ChaCha8Rng>(&mut tape, &example.source, &example.target, None)?;
        Ok((tape.value(loss)[0], n))
    }
}

/// Perplexity `exp(total NLL / total tokens)` over `dev`, with dropout off.
pub fn validate<S: TargetScorer>(scorer: &S, dev: &[Example]) -> Result<Real> {
    if dev.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    let parts: Vec<(Real, usize)> = dev.par_iter().map(|ex| scorer.target_nll(ex)).collect::<Result<_>>()?;
    let (nll, count) = parts.iter().fold((0.0, 0usize), |(a, n), &(b, m)| (a + b, n + m));
    Ok((nll / count as Real).exp())
}

/// Seed of the dropout stream for one example in one epoch.
pub fn example_seed(seed: u64, epoch: usize, index: usize) -> u64 {
    let mut z = seed
        .wrapping_add((epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((index as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mean per-token loss of a batch and its gradient.
pub fn batch_gradients(
    model: &ConvSeq2Seq,
    examples: &[Example],
    batch: &[usize],
    seed: u64,
    epoch: usize,
) -> Result<(Real, usize, Gradients)> {
    let parts: Vec<(Real, usize, Gradients)> = batch
        .par_iter()
        .map(|&i| {
            let ex = &examples[i];
            let mut rng = ChaCha8Rng::seed_from_u64(example_seed(seed, epoch, i));
            let mut tape = Tape::new(model.store());
            let (loss, n) = model.example_loss(&mut tape, &ex.source, &ex.target, Some(&mut rng))?;
            let value = tape.value(loss)[0];
            Ok((value, n, tape.backward(loss)?))
        })
        .collect::<Result<_>>()?;
    let mut total = Gradients::zeros_like(model.store());
    let mut nll = 0.0;
    let mut tokens = 0;
    for (l, n, g) in &parts {
        nll += l;
        tokens += n;
        total.add_assign(g);
    }
    if !nll.is_finite() {
        return Err(Error::NonFinite(format!("batch loss {nll}")));
    }
    total.scale(1.0 / tokens as Real);
    Ok((nll / tokens as Real, tokens, total))
}

/// Trains `model` in place. After each epoch `on_epoch` sees the log line and the
/// current weights (for checkpointing). On a non-finite loss the weights of the
/// last completed epoch are restored and the error is returned.
pub fn train<F>(
    model: &mut ConvSeq2Seq,
    train_set: &[Example],
    dev: &[Example],
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainReport>
where
    F: FnMut(&EpochLog, &ConvSeq2Seq) -> Result<()>,
{
    if train_set.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut velocity = Gradients::zeros_like(model.store());
    let mut schedule = LrSchedule::new(cfg.lr, cfg.min_lr).with_patience(cfg.lr_patience);
    let lengths: Vec<usize> = train_set.iter().map(Example::tokens).collect();
    let mut logs = Vec::new();
    let mut last_good = model.store().clone();
    if dev.is_empty() {
        log::warn!("no validation set; the schedule monitors training perplexity");
    }

    for epoch in 1..=cfg.max_epochs {
        let batches = length_bucketed_batches(&lengths, cfg.batch_tokens, &mut rng);
        let lr = schedule.lr;
        let mut nll_sum = 0.0;
        let mut token_sum = 0;
        for batch in &batches {
            let mut seen = 0;
            let step = nesterov_step(model, &mut velocity, lr, cfg.momentum, |m| {
                let (loss, n, mut g) = batch_gradients(m, train_set, batch, cfg.seed, epoch)?;
                clip_gradients(&mut g, cfg.clip_norm)?;
                seen = n;
                Ok((loss, g))
            });
            match step {
                Ok(loss) => {
                    nll_sum += loss * seen as Real;
                    token_sum += seen;
                }
                Err(e @ Error::NonFinite(_)) => {
                    log::error!("epoch {epoch}: {e}; restoring weights of the last completed epoch");
                    *model.store_mut() = last_good;
                    return Err(e);
                }
                Err(e) => return Err(e),
            }
        }
        let dev_set = if dev.is_empty() { train_set } else { dev };
        let val_ppl = validate(&*model, dev_set)?;
        let entry = EpochLog {
            epoch,
            train_nll: nll_sum / token_sum as Real,
            val_ppl,
            lr,
        };
        log::info!("{}", entry.tsv_line());
        on_epoch(&entry, model)?;
        logs.push(entry);
        last_good = model.store().clone();
        if !val_ppl.is_finite() {
            return Err(Error::NonFinite(format!("validation perplexity {val_ppl}")));
        }
        if schedule.observe(val_ppl) {
            break;
        }
        if schedule.lr != lr {
            // velocity is measured in units of the old learning rate
            velocity.scale(schedule.lr / lr);
        }
    }
    Ok(TrainReport {
        epochs: logs,
        best_val_ppl: schedule.best_val_ppl,
        final_lr: schedule.lr,
    })
}
