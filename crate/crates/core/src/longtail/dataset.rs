use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the synthetic long-tailed benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub classes: usize,
    pub input_dim: usize,
    /// Training count of the most frequent class.
    pub max_count: usize,
    /// Imbalance factor, max count over min count.
    pub beta: f64,
    /// Distance of every class mean from the origin.
    pub class_separation: f64,
    /// Per-coordinate standard deviation of the isotropic noise.
    pub noise_sigma: f64,
    pub test_per_class: usize,
    pub data_seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            classes: 20,
            input_dim: 32,
            max_count: 500,
            beta: 100.0,
            class_separation: 1.0,
            noise_sigma: 0.7,
            test_per_class: 100,
            data_seed: 0,
        }
    }
}

/// Features and labels for one split.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Row indices of each class.
    pub fn class_indices(&self, classes: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); classes];
        for (i, &y) in self.labels.iter().enumerate() {
            out[y].push(i);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LongTailDataset {
    pub train: Split,
    /// Balanced across classes.
    pub test: Split,
    pub class_counts: Vec<usize>,
    pub class_means: Array2<f64>,
    pub beta: f64,
    pub seed: u64,
}

impl LongTailDataset {
    pub fn classes(&self) -> usize {
        self.class_counts.len()
    }
}

/// Exponentially decaying counts `round(M_max · β^(−j/(C−1)))`.
pub fn class_counts(classes: usize, max_count: usize, beta: f64) -> Result<Vec<usize>> {
    if classes < 2 {
        return Err(Error::InfeasibleDataset(format!("need at least 2 classes, got {classes}")));
    }
    if !(beta >= 1.0 && beta.is_finite()) {
        return Err(Error::InfeasibleDataset(format!("imbalance factor must be ≥ 1, got {beta}")));
    }
    if (max_count as f64) < 2.0 * beta {
        return Err(Error::InfeasibleDataset(format!(
            "max count {max_count} is below 2·β = {}",
            2.0 * beta
        )));
    }
    let counts: Vec<usize> = (0..classes)
        .map(|j| {
            let e = -(j as f64) / (classes - 1) as f64;
            (max_count as f64 * beta.powf(e)).round() as usize
        })
        .collect();
    if let Some(&min) = counts.iter().min() {
        if min < 2 {
            return Err(Error::InfeasibleDataset(format!("smallest class would have {min} samples")));
        }
    }
    Ok(counts)
}

/// Gaussian blobs around `classes` random directions, with long-tailed
/// training counts and a balanced test split.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<LongTailDataset> {
    let counts = class_counts(spec.classes, spec.max_count, spec.beta)?;
    if spec.input_dim == 0 {
        return Err(Error::InfeasibleDataset("input dimension must be positive".into()));
    }
    if spec.test_per_class == 0 {
        return Err(Error::InfeasibleDataset("test split needs at least one sample per class".into()));
    }
    if !(spec.noise_sigma >= 0.0 && spec.class_separation.is_finite()) {
        return Err(Error::InfeasibleDataset("noise and separation must be finite, noise ≥ 0".into()));
    }
    let d = spec.input_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.data_seed);

    let mut means = Array2::<f64>::zeros((spec.classes, d));
    for mut row in means.rows_mut() {
        loop {
            row.mapv_inplace(|_| rng.sample(StandardNormal));
            let n = row.dot(&row).sqrt();
            if n > 1e-6 {
                row *= spec.class_separation / n;
                break;
            }
        }
    }

    let mut draw = |per_class: &dyn Fn(usize) -> usize| -> Split {
        let total: usize = (0..spec.classes).map(per_class).sum();
        let mut features = Array2::<f64>::zeros((total, d));
        let mut labels = Vec::with_capacity(total);
        let mut row = 0;
        for j in 0..spec.classes {
            for _ in 0..per_class(j) {
                for k in 0..d {
                    let z: f64 = rng.sample(StandardNormal);
                    features[[row, k]] = means[[j, k]] + spec.noise_sigma * z;
                }
                labels.push(j);
                row += 1;
            }
        }
        Split { features, labels }
    };
    let train = draw(&|j| counts[j]);
    let test = draw(&|_| spec.test_per_class);

    Ok(LongTailDataset {
        train,
        test,
        class_counts: counts,
        class_means: means,
        beta: spec.beta,
        seed: spec.data_seed,
    })
}
