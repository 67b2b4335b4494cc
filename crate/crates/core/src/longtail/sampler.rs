//! Instance- and class-balanced minibatch samplers.
//!
//! Each (seed, epoch) pair owns a separate ChaCha stream, so an epoch's batches
//! can be regenerated independently of what came before.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const INSTANCE_STREAM: u64 = 0;
const CLASS_STREAM: u64 = 1;

fn epoch_rng(seed: u64, epoch: usize, kind: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 1) | kind);
    rng
}

/// One pass over `0..n` in a random order, cut into batches of `batch_size`
/// (the last batch may be shorter).
pub fn instance_balanced_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Result<Vec<Vec<usize>>> {
    if n == 0 {
        return Err(Error::Precondition("cannot sample from an empty dataset".into()));
    }
    if batch_size == 0 {
        return Err(Error::Precondition("batch size must be positive".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut epoch_rng(seed, epoch, INSTANCE_STREAM));
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// `n_batches` batches; each draw picks a class uniformly, then an instance of
/// that class uniformly, with replacement.
pub fn class_balanced_batches(
    class_indices: &[Vec<usize>],
    batch_size: usize,
    seed: u64,
    epoch: usize,
    n_batches: usize,
) -> Result<Vec<Vec<usize>>> {
    if class_indices.is_empty() {
        return Err(Error::Precondition("no classes to sample from".into()));
    }
    if let Some(j) = class_indices.iter().position(Vec::is_empty) {
        return Err(Error::Precondition(format!("class {j} has no instances")));
    }
    if batch_size == 0 {
        return Err(Error::Precondition("batch size must be positive".into()));
    }
    let mut rng = epoch_rng(seed, epoch, CLASS_STREAM);
    let c = class_indices.len();
    Ok((0..n_batches)
        .map(|_| {
            (0..batch_size)
                .map(|_| {
                    let members = &class_indices[rng.random_range(0..c)];
                    members[rng.random_range(0..members.len())]
                })
                .collect()
        })
        .collect())
}
