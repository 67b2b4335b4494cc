//! Central finite-difference verification of [`Head::loss_and_backward`].

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::Result;
use crate::wcdas::head::{Head, HeadGradients, HeadKind};

/// Step used for the central differences.
pub const FD_STEP: f64 = 1e-6;

/// Acceptance gate on the relative error.
pub const REL_TOL: f64 = 1e-5;

/// Magnitudes below this are compared on an absolute scale: the relative error
/// is `|a − n| / max(|a|, |n|, REL_FLOOR)`.
pub const REL_FLOOR: f64 = 1e-3;

/// Worst relative error per gradient block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockErrors {
    pub weights: f64,
    pub w_conc: f64,
    pub s: f64,
    pub features: f64,
}

impl BlockErrors {
    pub fn worst(&self) -> f64 {
        self.weights.max(self.w_conc).max(self.s).max(self.features)
    }

    fn merge(self, o: BlockErrors) -> BlockErrors {
        BlockErrors {
            weights: self.weights.max(o.weights),
            w_conc: self.w_conc.max(o.w_conc),
            s: self.s.max(o.s),
            features: self.features.max(o.features),
        }
    }
}

#[inline]
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// A random problem instance.
#[derive(Debug, Clone)]
pub struct Instance {
    pub head: Head,
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
}

/// Builds a reproducible instance of the given shape.
pub fn random_instance(kind: HeadKind, batch: usize, classes: usize, dim: usize, seed: u64) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.sample(StandardNormal)).collect() };
    let features = Array2::from_shape_vec((batch, dim), normal(batch * dim)).expect("shape");
    let weights = Array2::from_shape_vec((classes, dim), normal(classes * dim)).expect("shape");
    let w_conc: Array1<f64> = match kind {
        // ρ mostly in (0.1, 0.75)
        HeadKind::Wcdas => normal(classes).into_iter().map(|z| -0.5 + 0.8 * z).collect(),
        HeadKind::Vmf => normal(classes).into_iter().map(|z| 0.5 * z).collect(),
        HeadKind::Angular => Array1::zeros(classes),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let s = rng.random_range(1.0..8.0);
    let labels = (0..batch).map(|_| rng.random_range(0..classes)).collect();
    Ok(Instance {
        head: Head::new(kind, weights, w_conc, s)?,
        features,
        labels,
    })
}

/// Compares analytic and numeric gradients on one instance.
pub fn check_instance(inst: &Instance, analytic: &HeadGradients) -> Result<BlockErrors> {
    let loss_at = |head: &Head, x: &Array2<f64>| head.loss(x.view(), &inst.labels, None);
    let mut errs = BlockErrors {
        weights: 0.0,
        w_conc: 0.0,
        s: 0.0,
        features: 0.0,
    };

    let mut head = inst.head.clone();
    for idx in 0..head.weights.len() {
        let (r, c) = (idx / head.dim(), idx % head.dim());
        let orig = head.weights[[r, c]];
        head.weights[[r, c]] = orig + FD_STEP;
        let up = loss_at(&head, &inst.features)?;
        head.weights[[r, c]] = orig - FD_STEP;
        let down = loss_at(&head, &inst.features)?;
        head.weights[[r, c]] = orig;
        let num = (up - down) / (2.0 * FD_STEP);
        errs.weights = errs.weights.max(rel_err(analytic.d_weights[[r, c]], num));
    }
    for j in 0..head.w_conc.len() {
        let orig = head.w_conc[j];
        head.w_conc[j] = orig + FD_STEP;
        let up = loss_at(&head, &inst.features)?;
        head.w_conc[j] = orig - FD_STEP;
        let down = loss_at(&head, &inst.features)?;
        head.w_conc[j] = orig;
        let num = (up - down) / (2.0 * FD_STEP);
        errs.w_conc = errs.w_conc.max(rel_err(analytic.d_w_conc[j], num));
    }
    {
        let orig = head.s;
        head.s = orig + FD_STEP;
        let up = loss_at(&head, &inst.features)?;
        head.s = orig - FD_STEP;
        let down = loss_at(&head, &inst.features)?;
        head.s = orig;
        let num = (up - down) / (2.0 * FD_STEP);
        errs.s = rel_err(analytic.d_s, num);
    }
    let mut x = inst.features.clone();
    for idx in 0..x.len() {
        let (r, c) = (idx / x.ncols(), idx % x.ncols());
        let orig = x[[r, c]];
        x[[r, c]] = orig + FD_STEP;
        let up = loss_at(&head, &x)?;
        x[[r, c]] = orig - FD_STEP;
        let down = loss_at(&head, &x)?;
        x[[r, c]] = orig;
        let num = (up - down) / (2.0 * FD_STEP);
        errs.features = errs.features.max(rel_err(analytic.d_features[[r, c]], num));
    }
    Ok(errs)
}

/// Summary of a multi-seed gradient check for one head kind.
#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub kind: HeadKind,
    pub seeds: usize,
    pub worst: BlockErrors,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.worst.worst() < REL_TOL
    }
}

/// Runs the check over `seeds`. With `corrupt`, the analytic weight gradient is
/// perturbed before comparison, which must make the check fail.
pub fn gradcheck(
    kind: HeadKind,
    batch: usize,
    classes: usize,
    dim: usize,
    seeds: impl IntoIterator<Item = u64>,
    corrupt: bool,
) -> Result<GradcheckReport> {
    let mut worst = BlockErrors {
        weights: 0.0,
        w_conc: 0.0,
        s: 0.0,
        features: 0.0,
    };
    let mut count = 0;
    for seed in seeds {
        let inst = random_instance(kind, batch, classes, dim, seed)?;
        let (_, mut grads) = inst
            .head
            .loss_and_backward(inst.features.view(), &inst.labels, None)?;
        if corrupt {
            grads.d_weights.mapv_inplace(|g| g * 1.01 + 1e-3);
        }
        worst = worst.merge(check_instance(&inst, &grads)?);
        count += 1;
    }
    Ok(GradcheckReport {
        kind,
        seeds: count,
        worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_heads_pass_on_default_shape() {
        for kind in HeadKind::ALL {
            let r = gradcheck(kind, 4, 5, 8, 0..3, false).unwrap();
            assert!(r.passed(), "{kind}: {:?}", r.worst);
        }
    }

    #[test]
    fn smallest_instance_passes() {
        for kind in HeadKind::ALL {
            assert!(gradcheck(kind, 1, 2, 2, 0..5, false).unwrap().passed());
        }
    }

    #[test]
    fn corrupted_gradient_fails() {
        let r = gradcheck(HeadKind::Wcdas, 4, 5, 8, 0..1, true).unwrap();
        assert!(!r.passed());
    }

    #[test]
    fn class_weighted_gradients_match() {
        let inst = random_instance(HeadKind::Wcdas, 6, 4, 5, 9).unwrap();
        let cw = ndarray::array![0.5, 2.0, 1.0, 3.0];
        let (_, g) = inst
            .head
            .loss_and_backward(inst.features.view(), &inst.labels, Some(cw.view()))
            .unwrap();
        let mut head = inst.head.clone();
        for j in 0..head.classes() {
            let orig = head.w_conc[j];
            head.w_conc[j] = orig + FD_STEP;
            let up = head.loss(inst.features.view(), &inst.labels, Some(cw.view())).unwrap();
            head.w_conc[j] = orig - FD_STEP;
            let down = head.loss(inst.features.view(), &inst.labels, Some(cw.view())).unwrap();
            head.w_conc[j] = orig;
            assert!(rel_err(g.d_w_conc[j], (up - down) / (2.0 * FD_STEP)) < REL_TOL);
        }
    }
}
