use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Real;

/// Anything that yields next-token log-probabilities for a growing prefix.
pub trait StepModel {
    type State: Clone;

    fn vocab_size(&self) -> usize;
    fn bos(&self) -> usize;
    fn eos(&self) -> usize;
    /// Ids that are never generated.
    fn banned(&self) -> &[usize] {
        &[]
    }
    fn initial_state(&self) -> Self::State;
    /// Log-probabilities of the token after `prefix`, which starts with `bos`.
    /// `state` has seen `prefix` minus its last token and is advanced past it.
    fn step(&self, state: &mut Self::State, prefix: &[usize]) -> Result<Vec<Real>>;
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeConstraints {
    pub beam_size: usize,
    /// Fewest tokens before the end token (the end token itself not counted).
    pub min_len: usize,
    /// Most tokens; the end token is forced once a hypothesis reaches it.
    pub max_len: usize,
    pub block_trigrams: bool,
}

impl Default for DecodeConstraints {
    fn default() -> Self {
        DecodeConstraints {
            beam_size: 5,
            min_len: 0,
            max_len: 200,
            block_trigrams: true,
        }
    }
}

impl DecodeConstraints {
    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 {
            return Err(Error::Config("beam_size must be at least 1".into()));
        }
        if self.min_len > self.max_len {
            return Err(Error::Config(format!(
                "min_len {} exceeds max_len {}",
                self.min_len, self.max_len
            )));
        }
        Ok(())
    }
}

/// A live hypothesis. `tokens` exclude the begin token.
#[derive(Clone, Debug)]
pub struct BeamHypothesis<S> {
    pub tokens: Vec<usize>,
    pub score: Real,
    pub trigrams: HashSet<[usize; 3]>,
    /// Set when every continuation was blocked and the end token was forced.
    pub fallback: bool,
    state: S,
}

impl<S> BeamHypothesis<S> {
    fn would_repeat(&self, token: usize) -> bool {
        match self.tokens[..] {
            [.., a, b] => self.trigrams.contains(&[a, b, token]),
            _ => false,
        }
    }

    fn extended(&self, token: usize, score: Real, state: S) -> Self {
        let mut trigrams = self.trigrams.clone();
        if let [.., a, b] = self.tokens[..] {
            trigrams.insert([a, b, token]);
        }
        let mut tokens = self.tokens.clone();
        tokens.push(token);
        BeamHypothesis {
            tokens,
            score,
            trigrams,
            fallback: false,
            state,
        }
    }
}

/// Result of a search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decoded {
    pub tokens: Vec<usize>,
    pub score: Real,
    pub fallback: bool,
}

impl<S> From<BeamHypothesis<S>> for Decoded {
    fn from(h: BeamHypothesis<S>) -> Self {
        Decoded {
            tokens: h.tokens,
            score: h.score,
            fallback: h.fallback,
        }
    }
}

/// Higher score first; among equal scores shorter, then lexicographically smaller.
fn rank(a: &Decoded, b: &Decoded) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.tokens.len().cmp(&b.tokens.len()))
        .then(a.tokens.cmp(&b.tokens))
}

struct Candidate {
    parent: usize,
    token: usize,
    score: Real,
}

/// The tokens a hypothesis may emit next, by the length and trigram rules.
fn allowed<S>(h: &BeamHypothesis<S>, token: usize, eos: usize, c: &DecodeConstraints) -> bool {
    let len = h.tokens.len();
    if token == eos {
        return len >= c.min_len;
    }
    len < c.max_len && !(c.block_trigrams && h.would_repeat(token))
}

fn prefix_of<S>(bos: usize, h: &BeamHypothesis<S>) -> Vec<usize> {
    let mut p = Vec::with_capacity(h.tokens.len() + 1);
    p.push(bos);
    p.extend_from_slice(&h.tokens);
    p
}

/// Beam search ranked by cumulative log-probability. Each step keeps the
/// `beam_size` best expansions over all live hypotheses; expansions ending in the
/// end token leave the beam as finished hypotheses. The search stops once no
/// live hypothesis can beat the best finished one.
pub fn beam_search<M: StepModel>(model: &M, c: &DecodeConstraints) -> Result<Decoded> {
    c.validate()?;
    let (bos, eos, vocab) = (model.bos(), model.eos(), model.vocab_size());
    let mut banned = vec![false; vocab];
    for &b in model.banned() {
        if b < vocab && b != eos {
            banned[b] = true;
        }
    }
    let mut live = vec![BeamHypothesis {
        tokens: Vec::new(),
        score: 0.0,
        trigrams: HashSet::new(),
        fallback: false,
        state: model.initial_state(),
    }];
    let mut finished: Vec<Decoded> = Vec::new();

    while !live.is_empty() {
        let mut candidates = Vec::new();
        let mut states = Vec::with_capacity(live.len());
        for (i, h) in live.iter_mut().enumerate() {
            let prefix = prefix_of(bos, h);
            let logp = model.step(&mut h.state, &prefix)?;
            if logp.len() != vocab {
                return Err(Error::shape(
                    "beam_search",
                    format!("{} scores for vocab {vocab}", logp.len()),
                ));
            }
            let before = candidates.len();
            for (token, &lp) in logp.iter().enumerate() {
                if banned[token] || lp == Real::NEG_INFINITY || !allowed(h, token, eos, c) {
                    continue;
                }
                candidates.push(Candidate {
                    parent: i,
                    token,
                    score: h.score + lp,
                });
            }
            if candidates.len() == before {
                log::warn!(
                    "every continuation blocked after {} tokens; forcing end",
                    h.tokens.len()
                );
                finished.push(Decoded {
                    tokens: h.tokens.clone(),
                    score: h.score + logp[eos],
                    fallback: true,
                });
            }
            states.push(h.state.clone());
        }
        candidates.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then(a.parent.cmp(&b.parent))
                .then(a.token.cmp(&b.token))
        });
        candidates.truncate(c.beam_size);

        let mut next = Vec::new();
        for cand in candidates {
            let parent = &live[cand.parent];
            if cand.token == eos {
                finished.push(Decoded {
                    tokens: parent.tokens.clone(),
                    score: cand.score,
                    fallback: false,
                });
            } else {
                next.push(parent.extended(cand.token, cand.score, states[cand.parent].clone()));
            }
        }
        live = next;
        let best_finished = finished.iter().map(|d| d.score).fold(Real::NEG_INFINITY, Real::max);
        let best_live = live.iter().map(|h| h.score).fold(Real::NEG_INFINITY, Real::max);
        if best_finished >= best_live {
            break;
        }
    }
    finished.sort_by(rank);
    finished
        .into_iter()
        .next()
        .ok_or_else(|| Error::Contract("beam search produced no hypothesis".into()))
}

/// Greedy decoding under the same length and blocking rules.
pub fn greedy<M: StepModel>(model: &M, c: &DecodeConstraints) -> Result<Decoded> {
    c.validate()?;
    let (bos, eos) = (model.bos(), model.eos());
    let banned = model.banned();
    let mut h = BeamHypothesis {
        tokens: Vec::new(),
        score: 0.0,
        trigrams: HashSet::new(),
        fallback: false,
        state: model.initial_state(),
    };
    loop {
        let prefix = prefix_of(bos, &h);
        let logp = model.step(&mut h.state, &prefix)?;
        let best = logp
            .iter()
            .enumerate()
            .filter(|&(t, &lp)| {
                (t == eos || !banned.contains(&t)) && lp != Real::NEG_INFINITY && allowed(&h, t, eos, c)
            })
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)));
        match best {
            None => {
                return Ok(Decoded {
                    tokens: h.tokens,
                    score: h.score + logp[eos],
                    fallback: true,
                })
            }
            Some((t, &lp)) if t == eos => {
                return Ok(Decoded {
                    tokens: h.tokens,
                    score: h.score + lp,
                    fallback: false,
                })
            }
            Some((t, &lp)) => {
                let state = h.state.clone();
                h = h.extended(t, h.score + lp, state);
            }
        }
    }
}

/// Whether `tokens` contain some trigram twice.
pub fn has_repeated_trigram(tokens: &[usize]) -> bool {
    let mut seen = HashSet::new();
    tokens.windows(3).any(|w| !seen.insert([w[0], w[1], w[2]]))
}
