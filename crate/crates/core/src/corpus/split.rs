use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Corpus, SplitTag};
use crate::error::{contract, Result};

/// Train/validation/test fractions; nonnegative and summing to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl SplitFractions {
    pub fn new(train: f64, validation: f64, test: f64) -> Result<Self> {
        let parts = [train, validation, test];
        if parts.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return contract("split fractions must be finite and nonnegative");
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return contract("split fractions must sum to 1");
        }
        Ok(Self {
            train,
            validation,
            test,
        })
    }

    fn as_array(&self) -> [f64; 3] {
        [self.train, self.validation, self.test]
    }
}

/// Part sizes by largest remainder, each non-zero fraction getting at least one.
fn part_sizes(total: usize, fractions: [f64; 3]) -> [usize; 3] {
    let exact = fractions.map(|f| f * total as f64);
    let mut sizes = exact.map(|x| x.floor() as usize);
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut assigned: usize = sizes.iter().sum();
    for &i in order.iter().cycle() {
        if assigned >= total {
            break;
        }
        if fractions[i] > 0.0 {
            sizes[i] += 1;
            assigned += 1;
        }
    }
    for i in 0..3 {
        if fractions[i] > 0.0 && sizes[i] == 0 {
            let donor = (0..3)
                .max_by_key(|&j| (sizes[j], std::cmp::Reverse(j)))
                .unwrap();
            sizes[donor] -= 1;
            sizes[i] += 1;
        }
    }
    sizes
}

/// Partitions abstracts into train/validation/test parts. The assignment is
/// a seeded shuffle; each part keeps the corpus order of its abstracts.
pub fn split_corpus(
    corpus: &Corpus,
    fractions: SplitFractions,
    seed: u64,
) -> Result<(Corpus, Corpus, Corpus)> {
    let parts = fractions.as_array();
    let nonzero = parts.iter().filter(|&&f| f > 0.0).count();
    if corpus.len() < nonzero {
        return contract(format!(
            "cannot split {} abstracts into {nonzero} non-empty parts",
            corpus.len()
        ));
    }
    let sizes = part_sizes(corpus.len(), parts);

    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut offset = 0;
    let tags = [SplitTag::Train, SplitTag::Validation, SplitTag::Test];
    let mut out = Vec::with_capacity(3);
    for (size, tag) in sizes.into_iter().zip(tags) {
        let mut picked = order[offset..offset + size].to_vec();
        picked.sort_unstable();
        offset += size;
        let abstracts = picked
            .into_iter()
            .map(|i| corpus.abstracts()[i].clone())
            .collect();
        out.push(Corpus::new(corpus.schema().clone(), abstracts, tag)?);
    }
    let test = out.pop().unwrap();
    let validation = out.pop().unwrap();
    let train = out.pop().unwrap();
    Ok((train, validation, test))
}
