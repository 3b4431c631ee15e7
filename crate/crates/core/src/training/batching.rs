use rand::seq::SliceRandom;
use rand::Rng;

/// Groups example indices into batches of similar total length. Each batch holds
/// at most `token_budget` source+target tokens, except that an oversized example
/// forms a batch on its own. Ties in length and the batch order are shuffled.
pub fn length_bucketed_batches<R: Rng + ?Sized>(
    lengths: &[usize],
    token_budget: usize,
    rng: &mut R,
) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.shuffle(rng);
    order.sort_by_key(|&i| lengths[i]);
    let mut batches = Vec::new();
    let mut current = Vec::new();
    let mut tokens = 0;
    for i in order {
        if !current.is_empty() && tokens + lengths[i] > token_budget {
            batches.push(std::mem::take(&mut current));
            tokens = 0;
        }
        current.push(i);
        tokens += lengths[i];
    }
    if !current.is_empty() {
        batches.push(current);
    }
    batches.shuffle(rng);
    batches
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn batches_cover_every_example_once_within_budget() {
        let lengths: Vec<usize> = (0..57).map(|i| 3 + (i * 7) % 23).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batches = length_bucketed_batches(&lengths, 60, &mut rng);
        let mut seen: Vec<usize> = batches.iter().flatten().copied().collect();
        seen.sort();
        assert_eq!(seen, (0..57).collect::<Vec<_>>());
        for b in &batches {
            assert!(b.iter().map(|&i| lengths[i]).sum::<usize>() <= 60);
        }
    }

    #[test]
    fn oversized_example_is_alone() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let batches = length_bucketed_batches(&[5, 100, 5], 10, &mut rng);
        assert!(batches.contains(&vec![1]));
        assert_eq!(batches.len(), 2);
    }

    #[test]
    fn same_seed_same_batches() {
        let lengths = [4, 4, 4, 9, 9, 2, 7];
        let a = length_bucketed_batches(&lengths, 12, &mut ChaCha8Rng::seed_from_u64(3));
        let b = length_bucketed_batches(&lengths, 12, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
    }
}
