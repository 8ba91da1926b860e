//! Source attribution: multinomial logistic regression on pooled log-DCT
//! features, evaluated with confusion matrices whose precision row follows
//! the column-normalized-diagonal convention of the published attribution
//! tables this toolkit mirrors.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::spectral::SpectralFeature;

/// Trained classifier: weights over standardized features, plus the
/// standardization statistics frozen from the training split.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierParams {
    /// (K+1) x d weight matrix, row per class.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub class_names: Vec<String>,
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub l2_reg: f64,
}

impl ClassifierParams {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_mean.len()
    }

    fn standardize(&self, feature: &[f64]) -> Vec<f64> {
        feature
            .iter()
            .zip(&self.feature_mean)
            .zip(&self.feature_std)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }

    fn logits(&self, standardized: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(standardized).map(|(w, x)| w * x).sum::<f64>())
            .collect()
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Train by full-batch gradient descent on softmax cross-entropy with an L2
/// penalty on the weights. Weights start at zero, features are standardized
/// per dimension on the training set, and the label order is first
/// appearance; the run is deterministic. The `seed` parameter is kept for
/// interface stability; zero-initialized full-batch descent does not
/// consume randomness.
pub fn train_classifier(
    data: &[(SpectralFeature, String)],
    l2_reg: f64,
    epochs: usize,
    learning_rate: f64,
    _seed: u64,
) -> Result<ClassifierParams> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dim = data[0].0.values.len();
    for (f, _) in data {
        if f.values.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: f.values.len(),
            });
        }
    }

    let mut class_names: Vec<String> = Vec::new();
    let labels: Vec<usize> = data
        .iter()
        .map(|(_, label)| {
            if let Some(idx) = class_names.iter().position(|c| c == label) {
                idx
            } else {
                class_names.push(label.clone());
                class_names.len() - 1
            }
        })
        .collect();
    if class_names.len() < 2 {
        return Err(Error::SingleClass);
    }
    let k = class_names.len();
    let n = data.len();

    // Per-dimension standardization from the training split.
    let mut mean = vec![0.0; dim];
    for (f, _) in data {
        for (m, v) in mean.iter_mut().zip(&f.values) {
            *m += v / n as f64;
        }
    }
    let mut std = vec![0.0; dim];
    for (f, _) in data {
        for (s, (v, m)) in std.iter_mut().zip(f.values.iter().zip(&mean)) {
            *s += (v - m) * (v - m) / n as f64;
        }
    }
    for s in &mut std {
        *s = s.sqrt().max(1e-9);
    }

    let standardized: Vec<Vec<f64>> = data
        .iter()
        .map(|(f, _)| {
            f.values
                .iter()
                .zip(&mean)
                .zip(&std)
                .map(|((x, m), s)| (x - m) / s)
                .collect()
        })
        .collect();

    let mut params = ClassifierParams {
        weights: vec![vec![0.0; dim]; k],
        bias: vec![0.0; k],
        class_names,
        feature_mean: mean,
        feature_std: std,
        l2_reg,
    };

    for _epoch in 0..epochs {
        let mut grad_w = vec![vec![0.0; dim]; k];
        let mut grad_b = vec![0.0; k];
        for (x, &y) in standardized.iter().zip(&labels) {
            let probs = softmax(&params.logits(x));
            for c in 0..k {
                let delta = probs[c] - if c == y { 1.0 } else { 0.0 };
                grad_b[c] += delta / n as f64;
                for (gw, xv) in grad_w[c].iter_mut().zip(x) {
                    *gw += delta * xv / n as f64;
                }
            }
        }
        for c in 0..k {
            params.bias[c] -= learning_rate * grad_b[c];
            for (w, g) in params.weights[c].iter_mut().zip(&grad_w[c]) {
                *w -= learning_rate * (g + l2_reg * *w);
            }
        }
    }
    Ok(params)
}

/// Training-set cross-entropy plus the L2 penalty, for convergence checks.
pub fn training_loss(params: &ClassifierParams, data: &[(SpectralFeature, String)]) -> Result<f64> {
    let mut loss = 0.0;
    for (f, label) in data {
        let y = params
            .class_names
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| Error::UnknownLabel(label.clone()))?;
        let probs = softmax(&params.logits(&params.standardize(&f.values)));
        loss -= probs[y].max(1e-300).ln() / data.len() as f64;
    }
    let penalty: f64 = params
        .weights
        .iter()
        .flatten()
        .map(|w| w * w)
        .sum::<f64>();
    Ok(loss + 0.5 * params.l2_reg * penalty)
}

/// Predict a label and the class probability vector. Ties break to the
/// lowest class index.
pub fn predict(params: &ClassifierParams, feature: &SpectralFeature) -> Result<(String, Vec<f64>)> {
    if feature.values.len() != params.feature_dim() {
        return Err(Error::DimensionMismatch {
            expected: params.feature_dim(),
            got: feature.values.len(),
        });
    }
    let probs = softmax(&params.logits(&params.standardize(&feature.values)));
    let mut best = 0usize;
    for (i, p) in probs.iter().enumerate() {
        if *p > probs[best] {
            best = i;
        }
    }
    Ok((params.class_names[best].clone(), probs))
}

/// Confusion counts: rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
    pub class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn column_sums(&self) -> Vec<u64> {
        let k = self.class_names.len();
        let mut sums = vec![0u64; k];
        for row in &self.counts {
            for (s, v) in sums.iter_mut().zip(row) {
                *s += v;
            }
        }
        sums
    }

    pub fn accuracy(&self) -> f64 {
        let correct: u64 = (0..self.class_names.len()).map(|i| self.counts[i][i]).sum();
        correct as f64 / self.total() as f64
    }
}

/// Per-class precision: the column-normalized diagonal. Empty columns give
/// NaN and are flagged rather than raised.
#[derive(Clone, Debug)]
pub struct PrecisionRow {
    pub values: Vec<f64>,
    pub empty_columns: Vec<bool>,
}

pub fn precision_row(matrix: &ConfusionMatrix) -> PrecisionRow {
    let sums = matrix.column_sums();
    let mut values = Vec::with_capacity(sums.len());
    let mut empty = Vec::with_capacity(sums.len());
    for (c, &sum) in sums.iter().enumerate() {
        if sum == 0 {
            values.push(f64::NAN);
            empty.push(true);
        } else {
            values.push(matrix.counts[c][c] as f64 / sum as f64);
            empty.push(false);
        }
    }
    PrecisionRow {
        values,
        empty_columns: empty,
    }
}

/// Tally predictions over a labeled test set.
pub fn evaluate(
    params: &ClassifierParams,
    test: &[(SpectralFeature, String)],
) -> Result<ConfusionMatrix> {
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let k = params.num_classes();
    let mut counts = vec![vec![0u64; k]; k];
    for (f, label) in test {
        let row = params
            .class_names
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| Error::UnknownLabel(label.clone()))?;
        let (predicted, _) = predict(params, f)?;
        let col = params
            .class_names
            .iter()
            .position(|c| *c == predicted)
            .expect("prediction is one of the class names");
        counts[row][col] += 1;
    }
    Ok(ConfusionMatrix {
        counts,
        class_names: params.class_names.clone(),
    })
}

/// Per-family mean log-spectrum grids (for spectral-imprint figures).
/// Input: (family label, features) groups; every family needs at least one
/// feature and all features must share one length.
pub fn spectrum_figure_data(
    groups: &[(String, Vec<SpectralFeature>)],
) -> Result<Vec<(String, Vec<f64>)>> {
    let mut out = Vec::with_capacity(groups.len());
    for (family, features) in groups {
        if features.is_empty() {
            return Err(Error::InvalidArgument(format!("family '{family}' has no images")));
        }
        let dim = features[0].values.len();
        let mut mean = vec![0.0; dim];
        for f in features {
            if f.values.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: f.values.len(),
                });
            }
            for (m, v) in mean.iter_mut().zip(&f.values) {
                *m += v / features.len() as f64;
            }
        }
        out.push((family.clone(), mean));
    }
    Ok(out)
}

/// Published reference confusion matrices for full-scale GAN detectors,
/// kept here to regression-check the precision arithmetic against their
/// printed precision rows.
pub mod reference_tables {
    use super::ConfusionMatrix;

    /// Translation-model attribution counts (4 classes).
    pub fn translation_confusion() -> ConfusionMatrix {
        ConfusionMatrix {
            counts: vec![
                vec![209, 3, 0, 25],
                vec![5, 221, 7, 4],
                vec![0, 2, 233, 2],
                vec![19, 2, 0, 216],
            ],
            class_names: vec![
                "AttGAN".into(),
                "CUT".into(),
                "CycleGAN".into(),
                "Real".into(),
            ],
        }
    }

    /// Printed precision row of the translation table.
    pub const TRANSLATION_PRECISIONS: [&str; 4] = ["0.8970", "0.9693", "0.9708", "0.8745"];

    /// Generation-model attribution counts (6 classes).
    pub fn generation_confusion() -> ConfusionMatrix {
        ConfusionMatrix {
            counts: vec![
                vec![934, 13, 0, 33, 0, 20],
                vec![4, 996, 0, 0, 0, 0],
                vec![0, 1, 992, 0, 3, 4],
                vec![3, 1, 0, 992, 2, 2],
                vec![0, 0, 12, 10, 962, 16],
                vec![36, 6, 43, 61, 77, 777],
            ],
            class_names: vec![
                "DD-GAN".into(),
                "StarGAN".into(),
                "StarGANv2".into(),
                "StyleGANv2".into(),
                "StyleSwin".into(),
                "Real".into(),
            ],
        }
    }

    /// Printed precision row of the generation table.
    pub const GENERATION_PRECISIONS: [&str; 6] =
        ["0.956", "0.9794", "0.9475", "0.9051", "0.9215", "0.9487"];

    /// Format `value` with the same number of decimals as `printed`.
    pub fn format_like(value: f64, printed: &str) -> String {
        let decimals = printed.split('.').nth(1).map_or(0, str::len);
        format!("{value:.decimals$}")
    }
}

const CLASSIFIER_MAGIC: &[u8; 4] = b"GPCL";
const CLASSIFIER_VERSION: u16 = 1;

/// Save a classifier: versioned header, class names, standardization stats,
/// then bias and weights as little-endian f32.
pub fn save_classifier(params: &ClassifierParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    bytes.extend_from_slice(CLASSIFIER_MAGIC);
    bytes.extend_from_slice(&CLASSIFIER_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(params.num_classes() as u32).to_le_bytes());
    bytes.extend_from_slice(&(params.feature_dim() as u32).to_le_bytes());
    bytes.extend_from_slice(&params.l2_reg.to_le_bytes());
    for name in &params.class_names {
        let raw = name.as_bytes();
        bytes.extend_from_slice(&(raw.len() as u32).to_le_bytes());
        bytes.extend_from_slice(raw);
    }
    let push_f32s = |bytes: &mut Vec<u8>, values: &[f64]| {
        for v in values {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    };
    push_f32s(&mut bytes, &params.feature_mean);
    push_f32s(&mut bytes, &params.feature_std);
    push_f32s(&mut bytes, &params.bias);
    for row in &params.weights {
        push_f32s(&mut bytes, row);
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_classifier(path: impl AsRef<Path>) -> Result<ClassifierParams> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(Error::MalformedModel("classifier file truncated".into()));
        }
        let slice = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(slice)
    };
    if take(&mut pos, 4)? != CLASSIFIER_MAGIC {
        return Err(Error::MalformedModel("bad classifier magic".into()));
    }
    let version = u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap());
    if version != CLASSIFIER_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let k = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let l2_reg = f64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
    let mut class_names = Vec::with_capacity(k);
    for _ in 0..k {
        let len = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(take(&mut pos, len)?)
            .map_err(|_| Error::MalformedModel("class name not utf-8".into()))?;
        class_names.push(name.to_string());
    }
    let read_f32s = |pos: &mut usize, n: usize| -> Result<Vec<f64>> {
        let raw = take(pos, n * 4)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    };
    let feature_mean = read_f32s(&mut pos, dim)?;
    let feature_std = read_f32s(&mut pos, dim)?;
    let bias = read_f32s(&mut pos, k)?;
    let mut weights = Vec::with_capacity(k);
    for _ in 0..k {
        weights.push(read_f32s(&mut pos, dim)?);
    }
    if pos != bytes.len() {
        return Err(Error::MalformedModel("trailing bytes in classifier file".into()));
    }
    Ok(ClassifierParams {
        weights,
        bias,
        class_names,
        feature_mean,
        feature_std,
        l2_reg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn feature(values: Vec<f64>) -> SpectralFeature {
        SpectralFeature { values }
    }

    /// Two tight, linearly separable clusters at ±(5, 5).
    fn separable_clusters(seed: u64) -> Vec<(SpectralFeature, String)> {
        let mut rng = SeededRng::new(seed);
        let mut data = Vec::new();
        for _ in 0..50 {
            data.push((
                feature(vec![5.0 + 0.1 * rng.normal(), 5.0 + 0.1 * rng.normal()]),
                "pos".to_string(),
            ));
            data.push((
                feature(vec![-5.0 + 0.1 * rng.normal(), -5.0 + 0.1 * rng.normal()]),
                "neg".to_string(),
            ));
        }
        data
    }

    #[test]
    fn zero_epochs_predicts_uniformly() {
        let data = separable_clusters(1);
        let params = train_classifier(&data, 1e-4, 0, 0.5, 0).unwrap();
        let (label, probs) = predict(&params, &data[0].0).unwrap();
        assert_eq!(label, "pos"); // first class by tie-break
        for p in probs {
            assert!((p - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn separable_clusters_reach_perfect_training_accuracy() {
        let data = separable_clusters(2);
        let params = train_classifier(&data, 1e-4, 200, 0.5, 0).unwrap();
        let matrix = evaluate(&params, &data).unwrap();
        assert_eq!(matrix.accuracy(), 1.0);
    }

    #[test]
    fn training_is_deterministic() {
        let data = separable_clusters(3);
        let a = train_classifier(&data, 1e-4, 50, 0.5, 1).unwrap();
        let b = train_classifier(&data, 1e-4, 50, 0.5, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_class_is_rejected() {
        let data = vec![
            (feature(vec![1.0]), "only".to_string()),
            (feature(vec![2.0]), "only".to_string()),
        ];
        assert!(matches!(
            train_classifier(&data, 0.0, 10, 0.1, 0),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn probabilities_form_a_simplex() {
        let data = separable_clusters(4);
        let params = train_classifier(&data, 1e-4, 100, 0.5, 0).unwrap();
        for (f, _) in data.iter().take(10) {
            let (_, probs) = predict(&params, f).unwrap();
            assert!(probs.iter().all(|p| *p >= 0.0));
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn logit_shift_invariance() {
        let data = separable_clusters(5);
        let mut params = train_classifier(&data, 1e-4, 100, 0.5, 0).unwrap();
        let before = predict(&params, &data[0].0).unwrap();
        for b in &mut params.bias {
            *b += 7.5;
        }
        let after = predict(&params, &data[0].0).unwrap();
        assert_eq!(before.0, after.0);
        for (p, q) in before.1.iter().zip(&after.1) {
            assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn full_batch_loss_is_nonincreasing() {
        let data = separable_clusters(6);
        let mut last = f64::INFINITY;
        for epochs in [0usize, 5, 10, 20, 40] {
            let params = train_classifier(&data, 1e-4, epochs, 0.5, 0).unwrap();
            let loss = training_loss(&params, &data).unwrap();
            assert!(loss <= last + 1e-12, "loss {loss} after {epochs} epochs");
            last = loss;
        }
    }

    #[test]
    fn perfect_predictor_confusion_is_diagonal() {
        let data = separable_clusters(7);
        let params = train_classifier(&data, 1e-4, 200, 0.5, 0).unwrap();
        let matrix = evaluate(&params, &data).unwrap();
        assert_eq!(matrix.total(), data.len() as u64);
        let precision = precision_row(&matrix);
        for (v, empty) in precision.values.iter().zip(&precision.empty_columns) {
            assert!(!empty);
            assert_eq!(*v, 1.0);
        }
    }

    #[test]
    fn constant_predictor_leaves_empty_columns() {
        let matrix = ConfusionMatrix {
            counts: vec![vec![30, 0], vec![70, 0]],
            class_names: vec!["a".into(), "b".into()],
        };
        let precision = precision_row(&matrix);
        assert!((precision.values[0] - 0.3).abs() < 1e-12);
        assert!(precision.values[1].is_nan());
        assert_eq!(precision.empty_columns, vec![false, true]);
    }

    #[test]
    fn unknown_label_is_an_error() {
        let data = separable_clusters(8);
        let params = train_classifier(&data, 1e-4, 10, 0.5, 0).unwrap();
        let test = vec![(feature(vec![0.0, 0.0]), "mystery".to_string())];
        assert!(matches!(
            evaluate(&params, &test),
            Err(Error::UnknownLabel(_))
        ));
    }

    #[test]
    fn reference_precision_rows_reproduce_printed_values() {
        use reference_tables::*;
        let translation = precision_row(&translation_confusion());
        for (value, printed) in translation.values.iter().zip(TRANSLATION_PRECISIONS) {
            assert_eq!(format_like(*value, printed), printed);
        }
        let generation = precision_row(&generation_confusion());
        for (value, printed) in generation.values.iter().zip(GENERATION_PRECISIONS) {
            assert_eq!(format_like(*value, printed), printed);
        }
    }

    #[test]
    fn reference_specific_columns() {
        use reference_tables::*;
        // CycleGAN column (0, 7, 233, 0): 233/240.
        let t = precision_row(&translation_confusion());
        assert!((t.values[2] - 233.0 / 240.0).abs() < 1e-12);
        // AttGAN column (209, 5, 0, 19): 209/233.
        assert!((t.values[0] - 209.0 / 233.0).abs() < 1e-12);
        // Real column of the generation table (20, 0, 4, 2, 16, 777): 777/819.
        let g = precision_row(&generation_confusion());
        assert!((g.values[5] - 777.0 / 819.0).abs() < 1e-12);
    }

    #[test]
    fn spectrum_figure_mean_of_single_image_is_itself() {
        let f = feature(vec![1.0, 2.0, 3.0]);
        let groups = vec![("solo".to_string(), vec![f.clone()])];
        let means = spectrum_figure_data(&groups).unwrap();
        assert_eq!(means[0].1, f.values);

        let dup = vec![("dup".to_string(), vec![f.clone(), f.clone()])];
        let means = spectrum_figure_data(&dup).unwrap();
        for (a, b) in means[0].1.iter().zip(&f.values) {
            assert!((a - b).abs() < 1e-12);
        }

        assert!(spectrum_figure_data(&[("empty".to_string(), vec![])]).is_err());
    }

    #[test]
    fn classifier_file_roundtrip() {
        let data = separable_clusters(9);
        let params = train_classifier(&data, 1e-4, 50, 0.5, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clf.gpcl");
        save_classifier(&params, &path).unwrap();
        let back = load_classifier(&path).unwrap();
        assert_eq!(back.class_names, params.class_names);
        // f32 storage rounds the doubles.
        for (a, b) in back.weights.iter().flatten().zip(params.weights.iter().flatten()) {
            assert!((a - b).abs() < 1e-6);
        }
        // Predictions survive the roundtrip.
        for (f, _) in data.iter().take(5) {
            assert_eq!(predict(&back, f).unwrap().0, predict(&params, f).unwrap().0);
        }
    }
}
