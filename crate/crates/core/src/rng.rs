//! Seeded random streams and table-driven discrete samplers.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The generator used everywhere a random stream is needed.
pub type Stream = ChaCha8Rng;

/// A reproducible stream: ChaCha8 keyed by `seed`, on sub-stream `stream`.
///
/// Independent consumers of one replication (source, channel, policy coin)
/// take distinct stream ids so their draws never interleave.
pub fn stream(seed: u64, stream: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Cumulative distribution over a finite set of outcomes.
#[derive(Debug, Clone)]
pub struct Categorical {
    cumulative: Vec<f64>,
}

impl Categorical {
    pub fn new(weights: impl IntoIterator<Item = f64>) -> Self {
        let mut total = 0.0;
        let cumulative = weights
            .into_iter()
            .map(|w| {
                total += w;
                total
            })
            .collect();
        Self { cumulative }
    }

    /// Index of the outcome hit by `u` in `[0, 1)`. Round-off mass past the
    /// last cumulative value falls on the last outcome with positive weight.
    #[inline]
    pub fn pick(&self, u: f64) -> usize {
        for (i, c) in self.cumulative.iter().enumerate() {
            if u < *c {
                return i;
            }
        }
        let last = *self.cumulative.last().expect("non-empty");
        self.cumulative
            .iter()
            .position(|c| *c == last)
            .expect("non-empty")
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.pick(rng.random::<f64>())
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }
}

/// One [`Categorical`] per row of `[left | right]`.
pub(crate) fn row_samplers(left: &DMatrix<f64>, right: &DMatrix<f64>) -> Vec<Categorical> {
    (0..left.nrows())
        .map(|i| {
            Categorical::new(
                left.row(i)
                    .iter()
                    .chain(right.row(i).iter())
                    .copied()
                    .collect::<Vec<_>>(),
            )
        })
        .collect()
}
