//! Temporal graph-convolutional predictor for appearance features.
//!
//! A track's last `C` appearance features form the node features of a
//! small graph whose adjacency `A = Q + P` combines a fixed prior `Q`
//! (each frame feeds its successor) with a learned row-stochastic matrix
//! `P` encoding which past frame best explains which. `L` graph
//! convolutions `X^(l+1) = relu(A X^(l) W^(l))` (final layer linear)
//! produce per-frame scores; their normalized row sums weight the input
//! frames into a prediction of the next frame's feature. Both the layer
//! weights and the logits behind `P` are trained by full-batch gradient
//! descent on the squared prediction error.

use nalgebra::DMatrix;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use thiserror::Error;

use crate::types::AppearanceFeature;

/// Row sums with absolute value at or below this fall back to uniform
/// frame weights in [`TgcnModel::predict_feature`].
const WEIGHT_NORMALIZER_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum TgcnError {
    #[error("expected shape {expected_rows}x{expected_cols}, got {rows}x{cols}")]
    DimensionMismatch {
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("malformed model data: {0}")]
    ModelFormat(String),
}

/// Ordered window of the `C` most recent appearance features; row 0 is
/// the oldest frame, row `C - 1` the most recent.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureWindow {
    data: DMatrix<f64>,
}

impl FeatureWindow {
    /// Builds a window from per-frame features, oldest first. All
    /// features must share one dimension.
    pub fn from_features(rows: &[AppearanceFeature]) -> Result<Self, TgcnError> {
        assert!(!rows.is_empty(), "feature window cannot be empty");
        let d = rows[0].dim();
        for r in rows {
            if r.dim() != d {
                return Err(TgcnError::DimensionMismatch {
                    expected_rows: rows.len(),
                    expected_cols: d,
                    rows: rows.len(),
                    cols: r.dim(),
                });
            }
        }
        let data = DMatrix::from_fn(rows.len(), d, |i, j| rows[i].values()[j]);
        Ok(Self { data })
    }

    pub fn from_matrix(data: DMatrix<f64>) -> Self {
        Self { data }
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }
}

/// Hyperparameters of the gradient-descent trainer. The seed controls
/// weight initialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(learning_rate: f64, epochs: usize, seed: u64) -> Self {
        assert!(learning_rate > 0.0, "learning rate must be positive");
        Self {
            learning_rate,
            epochs,
            seed,
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::new(0.05, 200, 0)
    }
}

/// The temporal GCN: window size `C`, feature dimension `d`, `L` layer
/// weight matrices and the free logits that generate `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct TgcnModel {
    pub window_c: usize,
    pub feature_dim: usize,
    pub weights: Vec<DMatrix<f64>>,
    pub p_logits: DMatrix<f64>,
}

/// Activations `X^(0) .. X^(L)` paired with the pre-activation of every
/// layer, kept for the backward pass.
type ForwardTrace = (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>);

/// Fixed prior adjacency: ones on the superdiagonal, so node `i`
/// aggregates from node `i + 1`.
pub fn build_q(c: usize) -> DMatrix<f64> {
    assert!(c >= 1);
    DMatrix::from_fn(c, c, |i, j| if j == i + 1 { 1.0 } else { 0.0 })
}

fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

impl TgcnModel {
    /// Seeded initialization: layer weights uniform in `[-1/sqrt(d),
    /// 1/sqrt(d)]`, logits zero (uniform `P`).
    pub fn init(window_c: usize, feature_dim: usize, layers: usize, seed: u64) -> Self {
        assert!(window_c >= 1 && feature_dim >= 1 && layers >= 1);
        let mut rng = StdRng::seed_from_u64(seed);
        let bound = 1.0 / (feature_dim as f64).sqrt();
        let weights = (0..layers)
            .map(|_| {
                DMatrix::from_fn(feature_dim, feature_dim, |_, _| rng.gen_range(-bound..bound))
            })
            .collect();
        Self {
            window_c,
            feature_dim,
            weights,
            p_logits: DMatrix::zeros(window_c, window_c),
        }
    }

    pub fn layers(&self) -> usize {
        self.weights.len()
    }

    /// Learned frame-affinity matrix: row-wise softmax of the logits.
    /// Every row sums to 1 with strictly positive entries.
    pub fn p_matrix(&self) -> DMatrix<f64> {
        let c = self.window_c;
        let mut p = DMatrix::zeros(c, c);
        for i in 0..c {
            let row_max = (0..c).fold(f64::NEG_INFINITY, |m, j| m.max(self.p_logits[(i, j)]));
            let mut denom = 0.0;
            for j in 0..c {
                let e = (self.p_logits[(i, j)] - row_max).exp();
                p[(i, j)] = e;
                denom += e;
            }
            for j in 0..c {
                p[(i, j)] /= denom;
            }
        }
        p
    }

    /// `A = Q + P`, used unnormalized in propagation.
    pub fn adjacency(&self) -> DMatrix<f64> {
        build_q(self.window_c) + self.p_matrix()
    }

    fn check_window(&self, x0: &FeatureWindow) -> Result<(), TgcnError> {
        if x0.len() != self.window_c || x0.dim() != self.feature_dim {
            return Err(TgcnError::DimensionMismatch {
                expected_rows: self.window_c,
                expected_cols: self.feature_dim,
                rows: x0.len(),
                cols: x0.dim(),
            });
        }
        Ok(())
    }

    /// Layer activations and pre-activations. Hidden layers apply relu;
    /// the output layer is linear.
    fn forward_full(&self, x0: &FeatureWindow) -> Result<ForwardTrace, TgcnError> {
        self.check_window(x0)?;
        let a = self.adjacency();
        let layers = self.layers();
        let mut activations = Vec::with_capacity(layers + 1);
        let mut preactivations = Vec::with_capacity(layers);
        activations.push(x0.matrix().clone());
        for (l, w) in self.weights.iter().enumerate() {
            let z = &a * activations.last().unwrap() * w;
            let x = if l + 1 < layers {
                z.map(relu)
            } else {
                z.clone()
            };
            preactivations.push(z);
            activations.push(x);
        }
        Ok((activations, preactivations))
    }

    /// All layer activations `X^(0) .. X^(L)`, each `C x d`.
    pub fn forward(&self, x0: &FeatureWindow) -> Result<Vec<DMatrix<f64>>, TgcnError> {
        Ok(self.forward_full(x0)?.0)
    }

    /// Frame weights derived from the top activation: row sums of `X^(L)`
    /// scaled by `1/d`, normalized to sum to 1, or uniform when the
    /// normalizer vanishes.
    fn frame_weights(&self, top: &DMatrix<f64>) -> Vec<f64> {
        let c = self.window_c;
        let d = self.feature_dim as f64;
        let raw: Vec<f64> = (0..c).map(|i| top.row(i).sum() / d).collect();
        let normalizer: f64 = raw.iter().sum();
        if normalizer.abs() <= WEIGHT_NORMALIZER_FLOOR {
            vec![1.0 / c as f64; c]
        } else {
            raw.iter().map(|r| r / normalizer).collect()
        }
    }

    /// Predicted next-frame feature: the frame-weighted sum of the input
    /// window rows.
    pub fn predict_feature(&self, x0: &FeatureWindow) -> Result<AppearanceFeature, TgcnError> {
        let (activations, _) = self.forward_full(x0)?;
        let weights = self.frame_weights(activations.last().unwrap());
        let x = x0.matrix();
        let mut out = vec![0.0; self.feature_dim];
        for (i, w) in weights.iter().enumerate() {
            for (k, o) in out.iter_mut().enumerate() {
                *o += w * x[(i, k)];
            }
        }
        Ok(AppearanceFeature::new(out))
    }

    /// Squared L2 error between the observed next-frame feature and the
    /// prediction.
    pub fn loss(
        &self,
        x0: &FeatureWindow,
        m_next: &AppearanceFeature,
    ) -> Result<f64, TgcnError> {
        if m_next.dim() != self.feature_dim {
            return Err(TgcnError::DimensionMismatch {
                expected_rows: 1,
                expected_cols: self.feature_dim,
                rows: 1,
                cols: m_next.dim(),
            });
        }
        let predicted = self.predict_feature(x0)?;
        Ok(m_next
            .values()
            .iter()
            .zip(predicted.values())
            .map(|(t, p)| (t - p) * (t - p))
            .sum())
    }

    /// Analytic gradients of [`Self::loss`] with respect to every layer
    /// weight and every logit. Relu subgradient at 0 is 0; the uniform
    /// fallback branch of the frame weights is locally constant, so it
    /// contributes zero gradient.
    pub fn gradients(
        &self,
        x0: &FeatureWindow,
        m_next: &AppearanceFeature,
    ) -> Result<(Vec<DMatrix<f64>>, DMatrix<f64>), TgcnError> {
        if m_next.dim() != self.feature_dim {
            return Err(TgcnError::DimensionMismatch {
                expected_rows: 1,
                expected_cols: self.feature_dim,
                rows: 1,
                cols: m_next.dim(),
            });
        }
        let (activations, preactivations) = self.forward_full(x0)?;
        let c = self.window_c;
        let d = self.feature_dim;
        let layers = self.layers();
        let a = self.adjacency();
        let p = self.p_matrix();
        let top = activations.last().unwrap();
        let x = x0.matrix();

        // Forward tail: weights, prediction, residual.
        let raw: Vec<f64> = (0..c).map(|i| top.row(i).sum() / d as f64).collect();
        let normalizer: f64 = raw.iter().sum();
        let fallback = normalizer.abs() <= WEIGHT_NORMALIZER_FLOOR;
        let weights: Vec<f64> = if fallback {
            vec![1.0 / c as f64; c]
        } else {
            raw.iter().map(|r| r / normalizer).collect()
        };
        let mut prediction = vec![0.0; d];
        for (i, w) in weights.iter().enumerate() {
            for (k, pr) in prediction.iter_mut().enumerate() {
                *pr += w * x[(i, k)];
            }
        }
        // dL/df_k = -2 (target_k - f_k)
        let grad_prediction: Vec<f64> = m_next
            .values()
            .iter()
            .zip(&prediction)
            .map(|(t, f)| -2.0 * (t - f))
            .collect();

        // dL/dw_i = <dL/df, X^0 row i>
        let grad_weights_vec: Vec<f64> = (0..c)
            .map(|i| (0..d).map(|k| grad_prediction[k] * x[(i, k)]).sum())
            .collect();

        // Through the normalization and the 1/d row-sum scaling down to
        // dL/dX^L (constant across each row).
        let mut grad_top = DMatrix::zeros(c, d);
        if !fallback {
            let weighted: f64 = grad_weights_vec
                .iter()
                .zip(&weights)
                .map(|(g, w)| g * w)
                .sum();
            for i in 0..c {
                let grad_raw_i = (grad_weights_vec[i] - weighted) / normalizer;
                let grad_row_sum = grad_raw_i / d as f64;
                for k in 0..d {
                    grad_top[(i, k)] = grad_row_sum;
                }
            }
        }

        // Standard backward pass through the graph convolutions. A is
        // shared by every layer, so its gradient accumulates.
        let mut grad_w: Vec<DMatrix<f64>> = Vec::with_capacity(layers);
        let mut grad_a: DMatrix<f64> = DMatrix::zeros(c, c);
        let mut grad_x = grad_top;
        for l in (0..layers).rev() {
            let grad_z = if l + 1 < layers {
                let z = &preactivations[l];
                DMatrix::from_fn(c, d, |i, k| if z[(i, k)] > 0.0 { grad_x[(i, k)] } else { 0.0 })
            } else {
                grad_x.clone()
            };
            let propagated = &a * &activations[l]; // A X^l
            grad_w.push(propagated.transpose() * &grad_z);
            grad_a += &grad_z * (&activations[l] * &self.weights[l]).transpose();
            grad_x = a.transpose() * grad_z * self.weights[l].transpose();
        }
        grad_w.reverse();

        // A = Q + P with Q constant; through the row-wise softmax.
        let mut grad_logits = DMatrix::zeros(c, c);
        for i in 0..c {
            let dot: f64 = (0..c).map(|j| grad_a[(i, j)] * p[(i, j)]).sum();
            for j in 0..c {
                grad_logits[(i, j)] = p[(i, j)] * (grad_a[(i, j)] - dot);
            }
        }

        Ok((grad_w, grad_logits))
    }

    /// Mean loss over a dataset of (window, next feature) pairs.
    pub fn dataset_mse(
        &self,
        dataset: &[(FeatureWindow, AppearanceFeature)],
    ) -> Result<f64, TgcnError> {
        if dataset.is_empty() {
            return Err(TgcnError::EmptyDataset);
        }
        let mut total = 0.0;
        for (window, target) in dataset {
            total += self.loss(window, target)?;
        }
        Ok(total / dataset.len() as f64)
    }

    /// Full-batch gradient descent. Returns the parameters with the
    /// lowest training loss seen at any epoch, including the initial and
    /// final ones. Deterministic: the dataset is always visited in order.
    pub fn train(
        &self,
        dataset: &[(FeatureWindow, AppearanceFeature)],
        cfg: &TrainConfig,
    ) -> Result<TgcnModel, TgcnError> {
        if dataset.is_empty() {
            return Err(TgcnError::EmptyDataset);
        }
        let n = dataset.len() as f64;
        let mut current = self.clone();
        let mut best = current.clone();
        let mut best_loss = current.dataset_mse(dataset)?;

        for _ in 0..cfg.epochs {
            let mut grad_w: Vec<DMatrix<f64>> = current
                .weights
                .iter()
                .map(|w| DMatrix::zeros(w.nrows(), w.ncols()))
                .collect();
            let mut grad_p = DMatrix::zeros(current.window_c, current.window_c);
            let mut total = 0.0;
            for (window, target) in dataset {
                total += current.loss(window, target)?;
                let (gw, gp) = current.gradients(window, target)?;
                for (acc, g) in grad_w.iter_mut().zip(gw) {
                    *acc += g;
                }
                grad_p += gp;
            }
            let mean_loss = total / n;
            if mean_loss < best_loss {
                best_loss = mean_loss;
                best = current.clone();
            }
            for (w, g) in current.weights.iter_mut().zip(&grad_w) {
                *w -= g * (cfg.learning_rate / n);
            }
            current.p_logits -= &grad_p * (cfg.learning_rate / n);
        }

        let final_loss = current.dataset_mse(dataset)?;
        if final_loss < best_loss {
            best = current;
        }
        Ok(best)
    }

    /// Serializes the model as a text header plus row-major decimals with
    /// 17 significant digits, enough for value-exact round trips.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "TGCN v1 C={} d={} L={}\n",
            self.window_c,
            self.feature_dim,
            self.layers()
        );
        let write_matrix = |m: &DMatrix<f64>, out: &mut String| {
            for i in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.16e}", m[(i, j)])).collect();
                out.push_str(&row.join(" "));
                out.push('\n');
            }
        };
        for w in &self.weights {
            write_matrix(w, &mut out);
        }
        write_matrix(&self.p_logits, &mut out);
        out
    }

    /// Parses the [`Self::to_text`] format.
    pub fn from_text(text: &str) -> Result<Self, TgcnError> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| TgcnError::ModelFormat("empty model file".into()))?;
        let mut window_c = None;
        let mut feature_dim = None;
        let mut layers = None;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("TGCN") || parts.next() != Some("v1") {
            return Err(TgcnError::ModelFormat(
                "header must start with 'TGCN v1'".into(),
            ));
        }
        for part in parts {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| TgcnError::ModelFormat(format!("bad header field '{part}'")))?;
            let value: usize = value
                .parse()
                .map_err(|_| TgcnError::ModelFormat(format!("bad header value '{part}'")))?;
            match key {
                "C" => window_c = Some(value),
                "d" => feature_dim = Some(value),
                "L" => layers = Some(value),
                _ => return Err(TgcnError::ModelFormat(format!("unknown header key '{key}'"))),
            }
        }
        let (c, d, l) = match (window_c, feature_dim, layers) {
            (Some(c), Some(d), Some(l)) if c >= 1 && d >= 1 && l >= 1 => (c, d, l),
            _ => return Err(TgcnError::ModelFormat("incomplete header".into())),
        };

        let mut values = Vec::with_capacity(l * d * d + c * c);
        for line in lines {
            for token in line.split_whitespace() {
                let v: f64 = token
                    .parse()
                    .map_err(|_| TgcnError::ModelFormat(format!("bad number '{token}'")))?;
                if !v.is_finite() {
                    return Err(TgcnError::ModelFormat(format!("non-finite value '{token}'")));
                }
                values.push(v);
            }
        }
        let expected = l * d * d + c * c;
        if values.len() != expected {
            return Err(TgcnError::ModelFormat(format!(
                "expected {expected} values, found {}",
                values.len()
            )));
        }

        let mut cursor = 0;
        let mut take_matrix = |rows: usize, cols: usize| {
            let m = DMatrix::from_fn(rows, cols, |i, j| values[cursor + i * cols + j]);
            cursor += rows * cols;
            m
        };
        let weights = (0..l).map(|_| take_matrix(d, d)).collect();
        let p_logits = take_matrix(c, c);
        Ok(Self {
            window_c: c,
            feature_dim: d,
            weights,
            p_logits,
        })
    }
}
