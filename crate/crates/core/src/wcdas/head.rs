use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows shorter than this cannot be normalized.
pub const MIN_ROW_NORM: f64 = 1e-12;

/// Concentrations are capped here so the wrapped Cauchy logit stays finite.
pub const RHO_CAP: f64 = 1.0 - 1e-6;

/// Which density turns `cos θ` into a logit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    /// `s · (1 − ρ²) / (2π (1 + ρ² − 2ρ cos θ))`, ρ = sigmoid(w_ρ) per class.
    Wcdas,
    /// `s · cos θ`.
    Angular,
    /// `s · exp(κ (cos θ − 1))`, κ = exp(w) per class.
    Vmf,
}

impl HeadKind {
    pub const ALL: [HeadKind; 3] = [HeadKind::Wcdas, HeadKind::Angular, HeadKind::Vmf];

    pub fn name(self) -> &'static str {
        match self {
            HeadKind::Wcdas => "wcdas",
            HeadKind::Angular => "angular",
            HeadKind::Vmf => "vmf",
        }
    }
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wcdas" | "wc" => Ok(HeadKind::Wcdas),
            "angular" | "cos" => Ok(HeadKind::Angular),
            "vmf" | "wndas" => Ok(HeadKind::Vmf),
            other => Err(Error::Format(format!("unknown head kind {other:?}"))),
        }
    }
}

/// Whether the density is multiplied by the scale `s` to form the logit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogitScale {
    #[default]
    Scaled,
    /// The logit is the density itself; `s` is carried but unused.
    Unscaled,
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Cosine classifier head with a per-class concentration.
///
/// `w_conc` holds unconstrained pre-activations: for [`HeadKind::Wcdas`] they are
/// `w_ρ` with `ρ = sigmoid(w_ρ)`, for [`HeadKind::Vmf`] they are `ln κ`, and the
/// angular head ignores them.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub kind: HeadKind,
    pub weights: Array2<f64>,
    pub w_conc: Array1<f64>,
    pub s: f64,
    pub logit_scale: LogitScale,
}

/// Intermediates kept by [`Head::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub logits: Array2<f64>,
    pub probs: Array2<f64>,
    pub cos: Array2<f64>,
    /// Per-class density `f` before scaling, B×C.
    pub density: Array2<f64>,
    x_hat: Array2<f64>,
    x_norm: Array1<f64>,
    w_hat: Array2<f64>,
    w_norm: Array1<f64>,
    conc: Array1<f64>,
    conc_grad: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradients {
    pub d_weights: Array2<f64>,
    pub d_w_conc: Array1<f64>,
    pub d_s: f64,
    pub d_features: Array2<f64>,
}

fn normalize_rows(m: ArrayView2<f64>, what: &'static str) -> Result<(Array2<f64>, Array1<f64>)> {
    let norms: Array1<f64> = m.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    if let Some((row, &norm)) = norms.iter().enumerate().find(|(_, &n)| !(n > MIN_ROW_NORM)) {
        return Err(Error::DegenerateRow { what, row, norm });
    }
    let mut hat = m.to_owned();
    Zip::from(hat.rows_mut()).and(&norms).for_each(|mut r, &n| r /= n);
    Ok((hat, norms))
}

/// Pulls a gradient with respect to a normalized row back to the raw row:
/// `(g − (g·v̂) v̂) / ‖v‖`.
fn through_normalization(mut g: Array2<f64>, hat: &Array2<f64>, norm: &Array1<f64>) -> Array2<f64> {
    Zip::from(g.rows_mut())
        .and(hat.rows())
        .and(norm)
        .for_each(|mut gr, h, &n| {
            let proj = gr.dot(&h);
            gr.scaled_add(-proj, &h);
            gr /= n;
        });
    g
}

impl Head {
    pub fn new(kind: HeadKind, weights: Array2<f64>, w_conc: Array1<f64>, s: f64) -> Result<Self> {
        if weights.nrows() != w_conc.len() {
            return Err(Error::Shape(format!(
                "{} weight rows but {} concentration entries",
                weights.nrows(),
                w_conc.len()
            )));
        }
        if weights.nrows() == 0 || weights.ncols() == 0 {
            return Err(Error::Shape("head needs at least one class and one dimension".into()));
        }
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Domain {
                name: "s",
                value: s,
                domain: "(0, ∞)",
            });
        }
        Ok(Self {
            kind,
            weights,
            w_conc,
            s,
            logit_scale: LogitScale::Scaled,
        })
    }

    pub fn with_logit_scale(mut self, scale: LogitScale) -> Self {
        self.logit_scale = scale;
        self
    }

    pub fn classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    /// Per-class ρ for a wrapped Cauchy head, capped at [`RHO_CAP`].
    pub fn rho(&self) -> Array1<f64> {
        self.w_conc.mapv(|w| sigmoid(w).min(RHO_CAP))
    }

    /// Per-class κ for a von Mises–Fisher head.
    pub fn kappa(&self) -> Array1<f64> {
        self.w_conc.mapv(f64::exp)
    }

    /// Concentration values and their derivative with respect to `w_conc`.
    fn concentration(&self) -> (Array1<f64>, Array1<f64>) {
        match self.kind {
            HeadKind::Wcdas => {
                let rho = self.rho();
                let d = Zip::from(&rho).and(&self.w_conc).map_collect(|&r, &w| {
                    if sigmoid(w) > RHO_CAP {
                        0.0
                    } else {
                        r * (1.0 - r)
                    }
                });
                (rho, d)
            }
            HeadKind::Vmf => {
                let k = self.kappa();
                (k.clone(), k)
            }
            HeadKind::Angular => {
                let z = Array1::zeros(self.classes());
                (z.clone(), z)
            }
        }
    }

    fn scale(&self) -> f64 {
        match self.logit_scale {
            LogitScale::Scaled => self.s,
            LogitScale::Unscaled => 1.0,
        }
    }

    /// Logits and row-softmax probabilities for a B×D batch.
    pub fn forward(&self, features: ArrayView2<f64>) -> Result<ForwardCache> {
        if features.ncols() != self.dim() {
            return Err(Error::Shape(format!(
                "features have {} columns, head expects {}",
                features.ncols(),
                self.dim()
            )));
        }
        let (x_hat, x_norm) = normalize_rows(features, "feature")?;
        let (w_hat, w_norm) = normalize_rows(self.weights.view(), "weight")?;
        let cos = x_hat.dot(&w_hat.t()).mapv(|c| c.clamp(-1.0, 1.0));
        let (conc, conc_grad) = self.concentration();

        let mut density = cos.clone();
        match self.kind {
            HeadKind::Wcdas => {
                Zip::from(density.columns_mut())
                    .and(&conc)
                    .for_each(|mut col, &rho| col.mapv_inplace(|c| wc_logit_density(rho, c)));
            }
            HeadKind::Vmf => {
                Zip::from(density.columns_mut())
                    .and(&conc)
                    .for_each(|mut col, &k| col.mapv_inplace(|c| (k * (c - 1.0)).exp()));
            }
            HeadKind::Angular => {}
        }
        let logits = &density * self.scale();
        let probs = softmax_rows(logits.view());
        Ok(ForwardCache {
            logits,
            probs,
            cos,
            density,
            x_hat,
            x_norm,
            w_hat,
            w_norm,
            conc,
            conc_grad,
        })
    }

    /// Mean cross-entropy and its gradient with respect to all head parameters
    /// and to the input features.
    ///
    /// With `class_weights`, each row's loss is weighted by its label's weight and
    /// the mean is taken over the total weight in the batch.
    pub fn loss_and_backward(
        &self,
        features: ArrayView2<f64>,
        labels: &[usize],
        class_weights: Option<ArrayView1<f64>>,
    ) -> Result<(f64, HeadGradients)> {
        let cache = self.forward(features)?;
        self.backward(&cache, labels, class_weights)
    }

    /// Loss only, used by finite-difference checks.
    pub fn loss(
        &self,
        features: ArrayView2<f64>,
        labels: &[usize],
        class_weights: Option<ArrayView1<f64>>,
    ) -> Result<f64> {
        let cache = self.forward(features)?;
        let row_w = self.row_weights(labels, class_weights)?;
        Ok(cross_entropy(&cache.logits, labels, &row_w))
    }

    fn row_weights(&self, labels: &[usize], class_weights: Option<ArrayView1<f64>>) -> Result<Vec<f64>> {
        let c = self.classes();
        for (row, &label) in labels.iter().enumerate() {
            if label >= c {
                return Err(Error::LabelOutOfRange {
                    row,
                    label,
                    classes: c,
                });
            }
        }
        let raw: Vec<f64> = match class_weights {
            None => vec![1.0; labels.len()],
            Some(w) => {
                if w.len() != c {
                    return Err(Error::Shape(format!(
                        "{} class weights for {} classes",
                        w.len(),
                        c
                    )));
                }
                if w.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
                    return Err(Error::Precondition("class weights must be finite and non-negative".into()));
                }
                labels.iter().map(|&y| w[y]).collect()
            }
        };
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Precondition("batch has zero total class weight".into()));
        }
        Ok(raw.into_iter().map(|v| v / total).collect())
    }

    /// Backward pass from a forward cache.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        labels: &[usize],
        class_weights: Option<ArrayView1<f64>>,
    ) -> Result<(f64, HeadGradients)> {
        let b = cache.logits.nrows();
        if labels.len() != b {
            return Err(Error::Shape(format!("{} labels for {} rows", labels.len(), b)));
        }
        let row_w = self.row_weights(labels, class_weights)?;
        let loss = cross_entropy(&cache.logits, labels, &row_w);

        // dL/dlogit = w_b (p − onehot)
        let mut d_logits = cache.probs.clone();
        for (i, (mut row, &y)) in d_logits.rows_mut().into_iter().zip(labels).enumerate() {
            row[y] -= 1.0;
            row *= row_w[i];
        }
        let scale = self.scale();
        let d_s = match self.logit_scale {
            LogitScale::Scaled => (&d_logits * &cache.density).sum(),
            LogitScale::Unscaled => 0.0,
        };
        let d_density = d_logits * scale;

        let (d_cos, d_conc) = match self.kind {
            HeadKind::Wcdas => {
                let mut d_cos = d_density.clone();
                let mut d_rho = Array1::zeros(self.classes());
                Zip::from(d_cos.columns_mut())
                    .and(d_density.columns())
                    .and(cache.cos.columns())
                    .and(&cache.conc)
                    .and(&mut d_rho)
                    .for_each(|mut dc, dd, cos, &rho, dr| {
                        let mut acc = 0.0;
                        Zip::from(&mut dc).and(&dd).and(&cos).for_each(|dc, &dd, &c| {
                            *dc = dd * wc_dcos(rho, c);
                            acc += dd * wc_drho(rho, c);
                        });
                        *dr = acc;
                    });
                (d_cos, d_rho)
            }
            HeadKind::Vmf => {
                let mut d_cos = d_density.clone();
                let mut d_k = Array1::zeros(self.classes());
                Zip::from(d_cos.columns_mut())
                    .and(d_density.columns())
                    .and(cache.cos.columns())
                    .and(cache.density.columns())
                    .and(&cache.conc)
                    .and(&mut d_k)
                    .for_each(|mut dc, dd, cos, f, &k, dk| {
                        let mut acc = 0.0;
                        Zip::from(&mut dc).and(&dd).and(&cos).and(&f).for_each(|dc, &dd, &c, &f| {
                            *dc = dd * k * f;
                            acc += dd * (c - 1.0) * f;
                        });
                        *dk = acc;
                    });
                (d_cos, d_k)
            }
            HeadKind::Angular => (d_density, Array1::zeros(self.classes())),
        };
        let d_w_conc = d_conc * &cache.conc_grad;

        let d_x_hat = d_cos.dot(&cache.w_hat);
        let d_w_hat = d_cos.t().dot(&cache.x_hat);
        let d_features = through_normalization(d_x_hat, &cache.x_hat, &cache.x_norm);
        let d_weights = through_normalization(d_w_hat, &cache.w_hat, &cache.w_norm);

        Ok((
            loss,
            HeadGradients {
                d_weights,
                d_w_conc,
                d_s,
                d_features,
            },
        ))
    }

    /// Index of the largest logit per row.
    pub fn predict(&self, features: ArrayView2<f64>) -> Result<Vec<usize>> {
        let cache = self.forward(features)?;
        Ok(argmax_rows(&cache.logits))
    }
}

/// Wrapped Cauchy density at `cos θ`.
#[inline]
pub fn wc_logit_density(rho: f64, c: f64) -> f64 {
    (1.0 - rho * rho) / (TAU * (1.0 + rho * rho - 2.0 * rho * c))
}

/// ∂f/∂ρ of the wrapped Cauchy density at `cos θ = c`.
#[inline]
pub fn wc_drho(rho: f64, c: f64) -> f64 {
    let den = 1.0 + rho * rho - 2.0 * rho * c;
    (-2.0 * rho + (1.0 + rho * rho) * c) / (PI * den * den)
}

/// ∂f/∂cos θ of the wrapped Cauchy density.
#[inline]
pub fn wc_dcos(rho: f64, c: f64) -> f64 {
    let den = 1.0 + rho * rho - 2.0 * rho * c;
    rho * (1.0 - rho * rho) / (PI * den * den)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        row /= z;
    }
    out
}

fn cross_entropy(logits: &Array2<f64>, labels: &[usize], row_w: &[f64]) -> f64 {
    logits
        .axis_iter(Axis(0))
        .zip(labels)
        .zip(row_w)
        .map(|((row, &y), &w)| {
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
            w * (lse - row[y])
        })
        .sum()
}

pub fn argmax_rows(m: &Array2<f64>) -> Vec<usize> {
    m.rows()
        .into_iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
                .0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    fn two_class(kind: HeadKind, w_conc: [f64; 2], s: f64) -> Head {
        Head::new(kind, array![[1.0, 0.0], [0.0, 1.0]], array![w_conc[0], w_conc[1]], s).unwrap()
    }

    #[test]
    fn aligned_and_orthogonal_classes() {
        // sigmoid(0) = 0.5 for both classes
        let head = two_class(HeadKind::Wcdas, [0.0, 0.0], 1.0);
        let out = head.forward(array![[2.0, 0.0]].view()).unwrap();
        assert_relative_eq!(out.density[[0, 0]], 0.477_464_829_275_686, epsilon = 1e-12);
        assert_relative_eq!(out.density[[0, 1]], 0.095_492_965_855_137_21, epsilon = 1e-12);
        assert_relative_eq!(out.probs[[0, 0]], 0.594_348_604_242_683_3, epsilon = 1e-12);
        assert_relative_eq!(out.probs[[0, 1]], 0.405_651_395_757_316_7, epsilon = 1e-12);
    }

    #[test]
    fn vanishing_concentration_flattens() {
        let head = two_class(HeadKind::Wcdas, [-60.0, -60.0], 5.0);
        let out = head.forward(array![[0.3, 0.9], [-1.0, 0.2]].view()).unwrap();
        for p in out.probs.iter() {
            assert_relative_eq!(*p, 0.5, epsilon = 1e-12);
        }
        for f in out.density.iter() {
            assert_relative_eq!(*f, 1.0 / TAU, epsilon = 1e-12);
        }
    }

    #[test]
    fn angular_baseline_probs() {
        let head = two_class(HeadKind::Angular, [0.0, 0.0], 1.0);
        let out = head.forward(array![[1.0, 0.0]].view()).unwrap();
        assert_relative_eq!(out.probs[[0, 0]], 0.731_058_578_630_004_9, epsilon = 1e-12);
        assert_relative_eq!(out.probs[[0, 1]], 0.268_941_421_369_995_1, epsilon = 1e-12);
    }

    #[test]
    fn vmf_without_concentration_is_uniform() {
        let head = two_class(HeadKind::Vmf, [-60.0, -60.0], 3.0);
        let out = head.forward(array![[1.0, 0.0], [0.3, -0.7]].view()).unwrap();
        for p in out.probs.iter() {
            assert_relative_eq!(*p, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn degenerate_rows_are_rejected() {
        let head = two_class(HeadKind::Wcdas, [0.0, 0.0], 1.0);
        let err = head.forward(array![[0.0, 0.0]].view()).unwrap_err();
        assert!(matches!(err, Error::DegenerateRow { what: "feature", row: 0, .. }));
        let bad = Head::new(HeadKind::Wcdas, array![[1.0, 0.0], [0.0, 0.0]], array![0.0, 0.0], 1.0).unwrap();
        let err = bad.forward(array![[1.0, 0.0]].view()).unwrap_err();
        assert!(matches!(err, Error::DegenerateRow { what: "weight", row: 1, .. }));
    }

    #[test]
    fn label_range_is_checked() {
        let head = two_class(HeadKind::Wcdas, [0.0, 0.0], 1.0);
        let err = head.loss_and_backward(array![[1.0, 0.0]].view(), &[2], None).unwrap_err();
        assert!(matches!(err, Error::LabelOutOfRange { label: 2, .. }));
    }

    #[test]
    fn density_gradient_signs() {
        for rho in [0.1, 0.5, 0.9] {
            assert_relative_eq!(wc_drho(rho, 1.0), 1.0 / (PI * (1.0 - rho) * (1.0 - rho)), max_relative = 1e-12);
            assert!(wc_drho(rho, 1.0) > 0.0);
            assert!(wc_drho(rho, -1.0) < 0.0);
        }
        assert_relative_eq!(wc_drho(0.5, -1.0), -0.141_471_060_526_129_2, max_relative = 1e-12);
    }

    #[test]
    fn unscaled_logits_ignore_s() {
        let head = two_class(HeadKind::Wcdas, [0.0, 0.0], 7.0).with_logit_scale(LogitScale::Unscaled);
        let x = array![[2.0, 0.0]];
        let out = head.forward(x.view()).unwrap();
        assert_eq!(out.logits, out.density);
        let (_, g) = head.loss_and_backward(x.view(), &[0], None).unwrap();
        assert_eq!(g.d_s, 0.0);
    }

    #[test]
    fn class_weights_change_the_mean() {
        let head = two_class(HeadKind::Angular, [0.0, 0.0], 2.0);
        let x = array![[1.0, 0.2], [0.1, 1.0]];
        let plain = head.loss(x.view(), &[0, 1], None).unwrap();
        let uniform = head.loss(x.view(), &[0, 1], Some(array![3.0, 3.0].view())).unwrap();
        assert_relative_eq!(plain, uniform, epsilon = 1e-15);
        let skewed = head.loss(x.view(), &[0, 1], Some(array![1.0, 0.0].view())).unwrap();
        let first_only = head.loss(x.slice(ndarray::s![0..1, ..]), &[0], None).unwrap();
        assert_relative_eq!(skewed, first_only, epsilon = 1e-15);
    }

    #[test]
    fn parse_kinds() {
        assert_eq!("wcdas".parse::<HeadKind>().unwrap(), HeadKind::Wcdas);
        assert_eq!("Angular".parse::<HeadKind>().unwrap(), HeadKind::Angular);
        assert!("arcface".parse::<HeadKind>().is_err());
    }
}
