use ctrlsum::decoding::{
    beam_search, greedy, has_repeated_trigram, ConvStepper, DecodeConstraints, Decoded, StepModel,
};
use ctrlsum::model::{ConvSeq2Seq, ModelConfig};
use ctrlsum::numeric::kernels::log_softmax_in_place;
use ctrlsum::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BOS: usize = 99;

/// Next-token distribution drawn afresh for every distinct prefix.
struct TableModel {
    vocab: usize,
    eos: usize,
    seed: u64,
    sharpness: f64,
}

fn prefix_seed(seed: u64, prefix: &[usize]) -> u64 {
    prefix.iter().fold(seed ^ 0x5151, |h, &t| {
        (h ^ t as u64).wrapping_mul(0x100_0000_01B3).rotate_left(17)
    })
}

impl StepModel for TableModel {
    type State = ();

    fn vocab_size(&self) -> usize {
        self.vocab
    }
    fn bos(&self) -> usize {
        BOS
    }
    fn eos(&self) -> usize {
        self.eos
    }
    fn initial_state(&self) {}
    fn step(&self, _: &mut (), prefix: &[usize]) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(prefix_seed(self.seed, prefix));
        let mut logits: Vec<f64> = (0..self.vocab)
            .map(|_| self.sharpness * rng.random_range(-1.0..1.0))
            .collect();
        log_softmax_in_place(&mut logits);
        Ok(logits)
    }
}

/// Scores every admissible sequence directly and returns the best.
fn exhaustive<M: StepModel>(model: &M, c: &DecodeConstraints) -> Decoded {
    let symbols: Vec<usize> = (0..model.vocab_size())
        .filter(|t| *t != model.eos() && !model.banned().contains(t))
        .collect();
    let mut best: Option<Decoded> = None;
    let mut stack: Vec<Vec<usize>> = vec![vec![]];
    while let Some(seq) = stack.pop() {
        if seq.len() < c.max_len {
            for &s in &symbols {
                let mut next = seq.clone();
                next.push(s);
                stack.push(next);
            }
        }
        if seq.len() < c.min_len || (c.block_trigrams && has_repeated_trigram(&seq)) {
            continue;
        }
        let mut prefix = vec![model.bos()];
        let mut score = 0.0;
        let mut state = model.initial_state();
        for &t in seq.iter().chain([model.eos()].iter()) {
            score += model.step(&mut state, &prefix).unwrap()[t];
            prefix.push(t);
        }
        let cand = Decoded {
            tokens: seq,
            score,
            fallback: false,
        };
        let better = match &best {
            None => true,
            Some(b) => {
                cand.score > b.score
                    || (cand.score == b.score && (cand.tokens.len(), &cand.tokens) < (b.tokens.len(), &b.tokens))
            }
        };
        if better {
            best = Some(cand);
        }
    }
    best.unwrap()
}

fn constraints(beam: usize, min_len: usize, max_len: usize, block: bool) -> DecodeConstraints {
    DecodeConstraints {
        beam_size: beam,
        min_len,
        max_len,
        block_trigrams: block,
    }
}

#[test]
fn wide_beam_equals_exhaustive_search() {
    // symbols {eos, a, b} and max_len 4 give 1 + 2 + 4 + 8 + 16 = 31 sequences
    for seed in 0..50 {
        let m = TableModel {
            vocab: 3,
            eos: 0,
            seed,
            sharpness: 3.0,
        };
        for c in [constraints(31, 0, 4, false), constraints(31, 1, 4, true)] {
            let got = beam_search(&m, &c).unwrap();
            let want = exhaustive(&m, &c);
            assert_eq!(got.tokens, want.tokens, "seed {seed} {c:?}");
            assert!((got.score - want.score).abs() < 1e-12);
        }
    }
}

#[test]
fn wide_beam_equals_exhaustive_search_on_conv_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..10 {
        let mut cfg = ModelConfig::toy(5);
        cfg.hidden_size = 8;
        cfg.embed_size = 8;
        let model = ConvSeq2Seq::new(cfg, seed).unwrap();
        let src: Vec<usize> = (0..5).map(|_| rng.random_range(3..5)).collect();
        let step = ConvStepper::new(&model, &src, vec![0, 1]).unwrap();
        let c = constraints(31, 0, 4, false);
        let got = beam_search(&step, &c).unwrap();
        let want = exhaustive(&step, &c);
        assert_eq!(got.tokens, want.tokens);
        assert!((got.score - want.score).abs() < 1e-9);
    }
}

/// Strongly prefers the token at `script[position]` and ends only after the script.
/// Before position `strict` nothing else is possible.
struct Scripted {
    script: Vec<usize>,
    vocab: usize,
    strict: usize,
}

impl StepModel for Scripted {
    type State = ();
    fn vocab_size(&self) -> usize {
        self.vocab
    }
    fn bos(&self) -> usize {
        BOS
    }
    fn eos(&self) -> usize {
        0
    }
    fn initial_state(&self) {}
    fn step(&self, _: &mut (), prefix: &[usize]) -> Result<Vec<f64>> {
        let pos = prefix.len() - 1;
        let want = self.script.get(pos).copied().unwrap_or(0);
        let other = if pos < self.strict { f64::NEG_INFINITY } else { 0.0 };
        let mut logits = vec![other; self.vocab];
        logits[0] = logits[0].min(-20.0);
        logits[want] = 10.0;
        log_softmax_in_place(&mut logits);
        Ok(logits)
    }
}

#[test]
fn blocking_masks_the_repeated_trigram() {
    let (a, b, cc) = (1, 2, 3);
    let m = Scripted {
        script: vec![a, b, cc, a, b, cc, a, b],
        vocab: 5,
        strict: 5,
    };
    let out = beam_search(&m, &constraints(5, 0, 10, true)).unwrap();
    assert_eq!(&out.tokens[..5], &[a, b, cc, a, b]);
    assert_ne!(out.tokens.get(5), Some(&cc));
    assert!(!has_repeated_trigram(&out.tokens));

    let free = beam_search(&m, &constraints(5, 0, 10, false)).unwrap();
    assert_eq!(free.tokens, [a, b, cc, a, b, cc, a, b]);
}

#[test]
fn lengths_stay_within_bounds() {
    for seed in 0..100 {
        let m = TableModel {
            vocab: 6,
            eos: 0,
            seed,
            sharpness: 2.0,
        };
        let out = beam_search(&m, &constraints(5, 5, 9, true)).unwrap();
        assert!(!out.fallback);
        assert!((5..=9).contains(&out.tokens.len()), "{:?}", out.tokens);
        assert!(!out.tokens.contains(&0));
    }
}

#[test]
fn no_repeated_trigrams_with_blocking() {
    for seed in 0..100 {
        let m = TableModel {
            vocab: 4,
            eos: 0,
            seed,
            sharpness: 0.5,
        };
        let out = beam_search(&m, &constraints(5, 10, 14, true)).unwrap();
        assert!(!has_repeated_trigram(&out.tokens), "seed {seed}: {:?}", out.tokens);
    }
}

#[test]
fn unit_beam_is_greedy() {
    for seed in 0..100 {
        let m = TableModel {
            vocab: 7,
            eos: 0,
            seed,
            sharpness: 2.0,
        };
        for c in [constraints(1, 0, 12, true), constraints(1, 3, 6, false)] {
            let b = beam_search(&m, &c).unwrap();
            let g = greedy(&m, &c).unwrap();
            assert_eq!(b, g);
        }
    }
}

#[test]
fn no_beam_beats_the_exhaustive_optimum() {
    for seed in 0..30 {
        let m = TableModel {
            vocab: 3,
            eos: 0,
            seed,
            sharpness: 3.0,
        };
        let c = constraints(1, 1, 5, true);
        let best = exhaustive(&m, &c).score;
        for k in 1..=8 {
            let out = beam_search(
                &m,
                &DecodeConstraints {
                    beam_size: k,
                    ..c.clone()
                },
            )
            .unwrap();
            assert!(out.score <= best + 1e-12);
        }
    }
}

#[test]
fn fully_blocked_hypothesis_falls_back_to_end() {
    // one symbol: "a a a" exhausts it, then "a" repeats a trigram and the end is
    // too early
    let m = TableModel {
        vocab: 2,
        eos: 0,
        seed: 1,
        sharpness: 1.0,
    };
    let out = beam_search(&m, &constraints(3, 5, 9, true)).unwrap();
    assert!(out.fallback);
    assert_eq!(out.tokens, [1, 1, 1]);
}

#[test]
fn invalid_constraints_are_rejected() {
    let m = TableModel {
        vocab: 3,
        eos: 0,
        seed: 0,
        sharpness: 1.0,
    };
    assert!(beam_search(&m, &constraints(0, 0, 3, true)).is_err());
    assert!(beam_search(&m, &constraints(2, 4, 3, true)).is_err());
}

#[test]
fn widening_the_beam_can_lower_the_returned_score() {
    // A wider beam may finish a hypothesis early whose score then wins, even
    // though the narrower beam went on to complete a better sequence.
    let m = TableModel {
        vocab: 4,
        eos: 0,
        seed: 27,
        sharpness: 2.0,
    };
    let c = constraints(1, 2, 8, true);
    let one = beam_search(&m, &c).unwrap();
    let two = beam_search(
        &m,
        &DecodeConstraints {
            beam_size: 2,
            ..c.clone()
        },
    )
    .unwrap();
    assert!(two.score < one.score);
    let wide = beam_search(&m, &DecodeConstraints { beam_size: 6, ..c }).unwrap();
    assert!(wide.score >= one.score);
}
