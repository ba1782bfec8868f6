//! Labeled feature datasets for the four- and five-class tasks, stratified
//! splitting, and finite-measurement feature vectors.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, RngExt};
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{feature_vector, FeatureVector, QuadratureSpec};
use crate::noise::{self, NoiseClass, NoiseSpec, ETA_MAX, ETA_MIN, SIGMA1_DEFAULT};
use crate::quantum::{single_trajectory_efficiency, DriveCondition};
use crate::rng::{derive_rng, salt};
use crate::surface::SurfaceSet;

/// Which classification task a dataset serves. The four-class task merges
/// the two Markovian signs into one class; the five-class task keeps them
/// separate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Four,
    Five,
}

impl Task {
    pub fn classes(self) -> &'static [NoiseClass] {
        match self {
            Task::Four => &[
                NoiseClass::QuasistaticCorrelated,
                NoiseClass::QuasistaticAnticorrelated,
                NoiseClass::QuasistaticUncorrelated,
                NoiseClass::Markovian,
            ],
            Task::Five => &[
                NoiseClass::QuasistaticCorrelated,
                NoiseClass::QuasistaticAnticorrelated,
                NoiseClass::QuasistaticUncorrelated,
                NoiseClass::MarkovianCorrelated,
                NoiseClass::MarkovianAnticorrelated,
            ],
        }
    }

    pub fn n_classes(self) -> usize {
        self.classes().len()
    }

    pub fn label_index(self, class: NoiseClass) -> Result<usize> {
        self.classes()
            .iter()
            .position(|&c| c == class)
            .ok_or_else(|| {
                Error::InvalidArgument(format!("{:?} is not a {self:?}-task class", class))
            })
    }
}

/// One feature vector with its one-hot label and generating noise spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub features: FeatureVector,
    pub label: Vec<u8>,
    pub provenance: NoiseSpec,
}

impl LabeledSample {
    pub fn label_index(&self) -> usize {
        self.label.iter().position(|&b| b == 1).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        self.provenance.validate()?;
        validate_one_hot(&self.label)?;
        Ok(())
    }
}

fn validate_one_hot(label: &[u8]) -> Result<()> {
    if !(label.len() == 4 || label.len() == 5) {
        return Err(Error::InvalidArgument(format!(
            "label must have 4 or 5 entries, got {}",
            label.len()
        )));
    }
    if label.iter().any(|&b| b > 1) || label.iter().map(|&b| b as usize).sum::<usize>() != 1 {
        return Err(Error::InvalidArgument(format!(
            "label {label:?} is not one-hot"
        )));
    }
    Ok(())
}

/// Stratified train/validation/test partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<LabeledSample>,
    pub validation: Vec<LabeledSample>,
    pub test: Vec<LabeledSample>,
}

/// Draws the class's free parameter uniformly from its interval; sigma1 is
/// pinned at the reference width and gamma is recorded as given (it only
/// drives the Markovian classes).
pub fn sample_noise_spec<R: Rng>(class: NoiseClass, gamma: f64, rng: &mut R) -> Result<NoiseSpec> {
    match class {
        NoiseClass::QuasistaticCorrelated => {
            let eta = rng.random_range(ETA_MIN..=ETA_MAX);
            NoiseSpec::new(class, eta, SIGMA1_DEFAULT, 0.0, gamma)
        }
        NoiseClass::QuasistaticAnticorrelated => {
            let eta = rng.random_range(-ETA_MAX..=-ETA_MIN);
            NoiseSpec::new(class, eta, SIGMA1_DEFAULT, 0.0, gamma)
        }
        NoiseClass::QuasistaticUncorrelated => {
            // The interval is half-open at zero: map [0, 1) to (0, 5 sigma1].
            let u: f64 = rng.random();
            let sigma2 = 5.0 * SIGMA1_DEFAULT * (1.0 - u);
            NoiseSpec::new(class, 0.0, SIGMA1_DEFAULT, sigma2, gamma)
        }
        NoiseClass::MarkovianCorrelated => {
            let eta = rng.random_range(ETA_MIN..=ETA_MAX);
            NoiseSpec::new(class, eta, SIGMA1_DEFAULT, 0.0, gamma)
        }
        NoiseClass::MarkovianAnticorrelated => {
            let eta = rng.random_range(-ETA_MAX..=-ETA_MIN);
            NoiseSpec::new(class, eta, SIGMA1_DEFAULT, 0.0, gamma)
        }
        NoiseClass::Markovian => {
            let eta = rng.random_range(-ETA_MAX..=ETA_MAX);
            NoiseSpec::new(class, eta, SIGMA1_DEFAULT, 0.0, gamma)
        }
    }
}

/// Generates `per_class` labeled samples for every class of the task, in
/// class-major order. Each sample draws from its own derived random stream,
/// so the result is deterministic for a given seed regardless of thread
/// count.
pub fn generate_dataset(
    task: Task,
    per_class: usize,
    quad: &QuadratureSpec,
    gamma: f64,
    seed: u64,
    surfaces: &SurfaceSet,
) -> Result<Vec<LabeledSample>> {
    if per_class == 0 {
        return Err(Error::InvalidArgument("per_class must be at least 1".into()));
    }
    quad.validate()?;
    let classes = task.classes();
    let jobs: Vec<(usize, NoiseClass, usize)> = classes
        .iter()
        .enumerate()
        .flat_map(|(ci, &class)| (0..per_class).map(move |idx| (ci, class, idx)))
        .collect();
    jobs.into_par_iter()
        .map(|(ci, class, idx)| {
            let mut rng = derive_rng(seed, &[salt::DATASET_SAMPLE, class.stream_code(), idx as u64]);
            let spec = sample_noise_spec(class, gamma, &mut rng)?;
            let features = feature_vector(&spec, surfaces, quad)?;
            let mut label = vec![0u8; classes.len()];
            label[ci] = 1;
            Ok(LabeledSample {
                features,
                label,
                provenance: spec,
            })
        })
        .collect()
}

/// Stratified shuffle-split. Per class, validation and test sizes round to
/// nearest and the remainder goes to train.
pub fn split_dataset(
    data: &[LabeledSample],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetSplit> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("cannot split an empty dataset".into()));
    }
    let (rt, rv, rs) = ratios;
    if !(rt >= 0.0 && rv >= 0.0 && rs >= 0.0) || ((rt + rv + rs) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split ratios must be nonnegative and sum to 1, got {ratios:?}"
        )));
    }
    let mut by_class: Vec<(NoiseClass, Vec<usize>)> = Vec::new();
    for (i, sample) in data.iter().enumerate() {
        sample.validate()?;
        let class = sample.provenance.class;
        match by_class.iter_mut().find(|(c, _)| *c == class) {
            Some((_, v)) => v.push(i),
            None => by_class.push((class, vec![i])),
        }
    }
    let mut split = DatasetSplit {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for (class, mut indices) in by_class {
        let mut rng = derive_rng(seed, &[salt::SPLIT, class.stream_code()]);
        indices.shuffle(&mut rng);
        let n = indices.len();
        let n_val = (rv * n as f64).round() as usize;
        let n_test = ((rs * n as f64).round() as usize).min(n - n_val);
        let n_train = n - n_val - n_test;
        for (k, &i) in indices.iter().enumerate() {
            let bucket = if k < n_train {
                &mut split.train
            } else if k < n_train + n_val {
                &mut split.validation
            } else {
                &mut split.test
            };
            bucket.push(data[i].clone());
        }
    }
    Ok(split)
}

/// Feature vector built from M projective measurements per driving
/// condition. Quasistatic classes redraw the frozen shifts for every
/// measurement and read the success probability off the cached surfaces;
/// Markovian measurements are Bernoulli draws at the ensemble value, taken
/// from the exact features.
pub fn finite_measurement_features<R: Rng>(
    spec: &NoiseSpec,
    exact: &FeatureVector,
    m: usize,
    surfaces: &SurfaceSet,
    rng: &mut R,
) -> Result<FeatureVector> {
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one measurement".into()));
    }
    spec.validate()?;
    let mut out = [0.0f64; 3];
    if spec.class.is_markovian() {
        for (k, p) in exact.as_array().into_iter().enumerate() {
            let binomial = Binomial::new(m as u64, p.clamp(0.0, 1.0))
                .map_err(|e| Error::InvalidArgument(format!("binomial draw: {e}")))?;
            out[k] = binomial.sample(rng) as f64 / m as f64;
        }
    } else {
        for (k, surface) in surfaces.surfaces().into_iter().enumerate() {
            let mut hits = 0usize;
            for _ in 0..m {
                let r = noise::sample_quasistatic(spec, rng)?;
                let p = surface.value(r.x1, r.x2).clamp(0.0, 1.0);
                if rng.random::<f64>() < p {
                    hits += 1;
                }
            }
            out[k] = hits as f64 / m as f64;
        }
    }
    FeatureVector::from_array(out)
}

/// Spot-check variant of `finite_measurement_features` that propagates every
/// quasistatic measurement directly instead of reading the surface. Orders of
/// magnitude slower; meant for validating the cached path at small M.
pub fn finite_measurement_features_direct<R: Rng>(
    spec: &NoiseSpec,
    exact: &FeatureVector,
    m: usize,
    rng: &mut R,
) -> Result<FeatureVector> {
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one measurement".into()));
    }
    spec.validate()?;
    if spec.class.is_markovian() {
        let mut out = [0.0f64; 3];
        for (k, p) in exact.as_array().into_iter().enumerate() {
            let binomial = Binomial::new(m as u64, p.clamp(0.0, 1.0))
                .map_err(|e| Error::InvalidArgument(format!("binomial draw: {e}")))?;
            out[k] = binomial.sample(rng) as f64 / m as f64;
        }
        return FeatureVector::from_array(out);
    }
    let drives = DriveCondition::standard_three();
    let mut out = [0.0f64; 3];
    for (k, drive) in drives.iter().enumerate() {
        let mut hits = 0usize;
        for _ in 0..m {
            let r = noise::sample_quasistatic(spec, rng)?;
            let p = single_trajectory_efficiency(drive, r.x1, r.x2);
            if rng.random::<f64>() < p {
                hits += 1;
            }
        }
        out[k] = hits as f64 / m as f64;
    }
    FeatureVector::from_array(out)
}

/// On-disk record: one JSON object per line.
#[derive(Debug, Serialize, Deserialize)]
struct Record {
    features: [f64; 3],
    label: Vec<u8>,
    class_tag: String,
    params: RecordParams,
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordParams {
    eta: f64,
    sigma1: f64,
    sigma2: f64,
    gamma: f64,
}

/// Writes one line-delimited JSON record per sample.
pub fn save_dataset(path: &Path, data: &[LabeledSample]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for sample in data {
        let record = Record {
            features: sample.features.as_array(),
            label: sample.label.clone(),
            class_tag: sample.provenance.class.tag().to_string(),
            params: RecordParams {
                eta: sample.provenance.eta,
                sigma1: sample.provenance.sigma1,
                sigma2: sample.provenance.sigma2,
                gamma: sample.provenance.gamma,
            },
        };
        serde_json::to_writer(&mut w, &record)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads a `save_dataset` file back, validating every record. An empty file
/// is an empty dataset. Errors name the offending line.
pub fn load_dataset(path: &Path) -> Result<Vec<LabeledSample>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    let mut label_len: Option<usize> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let number = idx + 1;
        let parse = |message: String| Error::DatasetParse {
            line: number,
            message,
        };
        let record: Record =
            serde_json::from_str(&line).map_err(|e| parse(format!("bad record: {e}")))?;
        let class = NoiseClass::from_tag(&record.class_tag)
            .map_err(|e| parse(e.to_string()))?;
        let provenance = NoiseSpec::new(
            class,
            record.params.eta,
            record.params.sigma1,
            record.params.sigma2,
            record.params.gamma,
        )
        .map_err(|e| parse(e.to_string()))?;
        let features =
            FeatureVector::from_array(record.features).map_err(|e| parse(e.to_string()))?;
        validate_one_hot(&record.label).map_err(|e| parse(e.to_string()))?;
        match label_len {
            None => label_len = Some(record.label.len()),
            Some(k) if k != record.label.len() => {
                return Err(parse(format!(
                    "label length {} differs from earlier records ({k})",
                    record.label.len()
                )));
            }
            _ => {}
        }
        let task = if record.label.len() == 4 { Task::Four } else { Task::Five };
        let expected = task
            .label_index(class)
            .map_err(|e| parse(e.to_string()))?;
        let sample = LabeledSample {
            features,
            label: record.label,
            provenance,
        };
        if sample.label_index() != expected {
            return Err(parse(format!(
                "label marks class {}, but params describe {}",
                sample.label_index(),
                expected
            )));
        }
        out.push(sample);
    }
    Ok(out)
}

/// Sidecar metadata written next to a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub task: Task,
    pub per_class: usize,
    pub seed: u64,
    pub gamma: f64,
    pub quadrature: QuadratureSpec,
    pub drives: [DriveCondition; 3],
    pub version: String,
}

impl DatasetMeta {
    pub fn new(task: Task, per_class: usize, seed: u64, gamma: f64, quad: QuadratureSpec) -> Self {
        Self {
            task,
            per_class,
            seed,
            gamma,
            quadrature: quad,
            drives: DriveCondition::standard_three(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    /// `data.jsonl` gets its sidecar at `data.meta.json`.
    pub fn sidecar_path(dataset_path: &Path) -> PathBuf {
        dataset_path.with_extension("meta.json")
    }

    pub fn save_beside(&self, dataset_path: &Path) -> Result<()> {
        let path = Self::sidecar_path(dataset_path);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_beside(dataset_path: &Path) -> Result<Self> {
        let path = Self::sidecar_path(dataset_path);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_fixtures::SURFACES;

    fn small_quad() -> QuadratureSpec {
        // Plenty for structural tests on the coarse fixture surfaces.
        QuadratureSpec::new(301, 101).unwrap()
    }

    #[test]
    fn sampled_parameters_stay_in_class_intervals() {
        let mut rng = derive_rng(11, &[salt::DATASET_SAMPLE]);
        let mut sum = 0.0;
        for _ in 0..10_000 {
            let spec = sample_noise_spec(NoiseClass::QuasistaticCorrelated, 1.0, &mut rng).unwrap();
            assert!((ETA_MIN..=ETA_MAX).contains(&spec.eta));
            sum += spec.eta;
        }
        // Uniform on [0.1, 5]: mean 2.55, sd of the mean 4.9/sqrt(12e4).
        let mean = sum / 10_000.0;
        assert!((mean - 2.55).abs() < 3.0 * 4.9 / (12.0f64 * 10_000.0).sqrt());

        let (mut neg, mut pos) = (0usize, 0usize);
        for _ in 0..10_000 {
            let spec = sample_noise_spec(NoiseClass::Markovian, 1.0, &mut rng).unwrap();
            assert!((-ETA_MAX..=ETA_MAX).contains(&spec.eta));
            if spec.eta < 0.0 {
                neg += 1;
            } else {
                pos += 1;
            }
        }
        assert!(neg > 1000 && pos > 1000, "merged class spans both signs");

        for _ in 0..10_000 {
            let spec =
                sample_noise_spec(NoiseClass::QuasistaticUncorrelated, 1.0, &mut rng).unwrap();
            assert!(spec.sigma2 > 0.0 && spec.sigma2 <= 5.0 * SIGMA1_DEFAULT);
            assert_eq!(spec.eta, 0.0);
        }
    }

    #[test]
    fn generation_is_deterministic_and_correctly_labeled() {
        let quad = small_quad();
        let a = generate_dataset(Task::Four, 6, &quad, 1.0, 42, &SURFACES).unwrap();
        let b = generate_dataset(Task::Four, 6, &quad, 1.0, 42, &SURFACES).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 24);
        for (i, sample) in a.iter().enumerate() {
            sample.validate().unwrap();
            assert_eq!(sample.label.len(), 4);
            assert_eq!(sample.label_index(), i / 6);
            assert_eq!(
                Task::Four.label_index(sample.provenance.class).unwrap(),
                i / 6
            );
        }
        let c = generate_dataset(Task::Four, 6, &quad, 1.0, 43, &SURFACES).unwrap();
        assert_ne!(a, c, "different seeds give different datasets");
    }

    #[test]
    fn five_class_datasets_split_the_markovian_signs() {
        let quad = small_quad();
        let data = generate_dataset(Task::Five, 3, &quad, 1.0, 7, &SURFACES).unwrap();
        assert_eq!(data.len(), 15);
        for sample in &data[9..12] {
            assert_eq!(sample.provenance.class, NoiseClass::MarkovianCorrelated);
            assert!(sample.provenance.eta >= ETA_MIN);
        }
        for sample in &data[12..] {
            assert_eq!(sample.provenance.class, NoiseClass::MarkovianAnticorrelated);
            assert!(sample.provenance.eta <= -ETA_MIN);
        }
    }

    fn synthetic(class: NoiseClass, task: Task, n: usize) -> Vec<LabeledSample> {
        let idx = task.label_index(class).unwrap();
        let spec = match class {
            NoiseClass::QuasistaticCorrelated => NoiseSpec::quasistatic_correlated(1.0, 17.6),
            NoiseClass::QuasistaticAnticorrelated => {
                NoiseSpec::quasistatic_anticorrelated(-1.0, 17.6)
            }
            NoiseClass::QuasistaticUncorrelated => NoiseSpec::quasistatic_uncorrelated(17.6, 17.6),
            NoiseClass::Markovian => NoiseSpec::markovian_merged(1.0, 1.0),
            NoiseClass::MarkovianCorrelated => NoiseSpec::markovian_correlated(1.0, 1.0),
            NoiseClass::MarkovianAnticorrelated => NoiseSpec::markovian_anticorrelated(-1.0, 1.0),
        }
        .unwrap();
        let mut label = vec![0u8; task.n_classes()];
        label[idx] = 1;
        (0..n)
            .map(|_| LabeledSample {
                features: FeatureVector::from_array([0.5, 0.4, 0.6]).unwrap(),
                label: label.clone(),
                provenance: spec,
            })
            .collect()
    }

    #[test]
    fn split_sizes_and_stratification() {
        let mut data = Vec::new();
        for &class in Task::Five.classes() {
            data.extend(synthetic(class, Task::Five, 500));
        }
        let split = split_dataset(&data, (0.6, 0.2, 0.2), 5).unwrap();
        assert_eq!(split.train.len(), 1500);
        assert_eq!(split.validation.len(), 500);
        assert_eq!(split.test.len(), 500);
        for part in [&split.train, &split.validation, &split.test] {
            for &class in Task::Five.classes() {
                let count = part
                    .iter()
                    .filter(|s| s.provenance.class == class)
                    .count();
                let expected = part.len() / 5;
                assert!(
                    count.abs_diff(expected) <= 1,
                    "{class:?}: {count} of {}",
                    part.len()
                );
            }
        }

        let ten = synthetic(NoiseClass::QuasistaticCorrelated, Task::Four, 10);
        let split = split_dataset(&ten, (0.6, 0.2, 0.2), 1).unwrap();
        assert_eq!(
            (split.train.len(), split.validation.len(), split.test.len()),
            (6, 2, 2)
        );

        assert!(split_dataset(&ten, (0.5, 0.2, 0.2), 1).is_err());
        assert!(split_dataset(&[], (0.6, 0.2, 0.2), 1).is_err());
    }

    #[test]
    fn splits_are_disjoint_and_exhaustive() {
        let quad = small_quad();
        let data = generate_dataset(Task::Four, 10, &quad, 1.0, 3, &SURFACES).unwrap();
        let split = split_dataset(&data, (0.6, 0.2, 0.2), 9).unwrap();
        let mut seen: Vec<&LabeledSample> = Vec::new();
        for part in [&split.train, &split.validation, &split.test] {
            for sample in part {
                assert!(!seen.contains(&sample), "sample appears in two splits");
                seen.push(sample);
            }
        }
        assert_eq!(seen.len(), data.len());
        for sample in &data {
            assert!(seen.contains(&sample));
        }
    }

    #[test]
    fn dataset_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        let quad = small_quad();
        let data = generate_dataset(Task::Five, 4, &quad, 1.0, 21, &SURFACES).unwrap();
        save_dataset(&path, &data).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back, data);

        let meta = DatasetMeta::new(Task::Five, 4, 21, 1.0, quad);
        meta.save_beside(&path).unwrap();
        assert_eq!(DatasetMeta::load_beside(&path).unwrap(), meta);
        assert_eq!(
            DatasetMeta::sidecar_path(&path).file_name().unwrap(),
            "data.meta.json"
        );
    }

    #[test]
    fn loader_rejects_malformed_records_by_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let good = r#"{"features":[0.5,0.5,0.5],"label":[1,0,0,0],"class_tag":"quasistatic-correlated","params":{"eta":1.0,"sigma1":17.6,"sigma2":0.0,"gamma":1.0}}"#;
        let double_hot = good.replace("[1,0,0,0]", "[1,1,0,0]");
        std::fs::write(&path, format!("{good}\n{double_hot}\n")).unwrap();
        match load_dataset(&path) {
            Err(Error::DatasetParse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected line-2 parse error, got {other:?}"),
        }

        let mislabeled = good.replace("[1,0,0,0]", "[0,1,0,0]");
        std::fs::write(&path, format!("{mislabeled}\n")).unwrap();
        assert!(matches!(
            load_dataset(&path),
            Err(Error::DatasetParse { line: 1, .. })
        ));

        std::fs::write(&path, "").unwrap();
        assert_eq!(load_dataset(&path).unwrap(), Vec::new());
    }

    #[test]
    fn single_measurement_features_are_binary() {
        let quad = small_quad();
        let spec = NoiseSpec::quasistatic_correlated(1.0, 17.6).unwrap();
        let exact = feature_vector(&spec, &SURFACES, &quad).unwrap();
        let mut rng = derive_rng(1, &[salt::FINITE_M]);
        for _ in 0..20 {
            let f = finite_measurement_features(&spec, &exact, 1, &SURFACES, &mut rng).unwrap();
            for c in f.as_array() {
                assert!(c == 0.0 || c == 1.0, "M = 1 produced {c}");
            }
        }
        assert!(finite_measurement_features(&spec, &exact, 0, &SURFACES, &mut rng).is_err());
    }

    #[test]
    fn many_measurements_recover_the_exact_features() {
        let quad = small_quad();
        let m = 1_000_000usize;
        for spec in [
            NoiseSpec::quasistatic_correlated(1.0, 17.6).unwrap(),
            NoiseSpec::markovian_merged(1.0, 1.0).unwrap(),
        ] {
            let exact = feature_vector(&spec, &SURFACES, &quad).unwrap();
            let mut rng = derive_rng(5, &[salt::FINITE_M, spec.class.stream_code()]);
            let f = finite_measurement_features(&spec, &exact, m, &SURFACES, &mut rng).unwrap();
            for (got, want) in f.as_array().into_iter().zip(exact.as_array()) {
                let bound = 3.0 * (want * (1.0 - want) / m as f64).sqrt() + 1e-4;
                assert!(
                    (got - want).abs() <= bound,
                    "{:?}: {got} vs {want}",
                    spec.class
                );
            }
        }
    }

    #[test]
    fn measurement_error_scales_with_the_square_root_of_m() {
        // Error at M should fall like 1 / sqrt(M): comparing M = 25 against
        // M = 400 the ratio is 4, asserted within a factor of 2.
        let quad = small_quad();
        let spec = NoiseSpec::markovian_merged(2.0, 1.0).unwrap();
        let exact = feature_vector(&spec, &SURFACES, &quad).unwrap();
        let mut rng = derive_rng(17, &[salt::FINITE_M]);
        let rms_err = |m: usize, rng: &mut crate::rng::SeededRng| {
            let reps = 2000;
            let mut sq = 0.0;
            for _ in 0..reps {
                let f = finite_measurement_features(&spec, &exact, m, &SURFACES, rng).unwrap();
                sq += (f.xi_eq - exact.xi_eq).powi(2);
            }
            (sq / reps as f64).sqrt()
        };
        let e25 = rms_err(25, &mut rng);
        let e400 = rms_err(400, &mut rng);
        let ratio = e25 / e400;
        assert!(
            (2.0..=8.0).contains(&ratio),
            "error ratio {ratio} should be near 4"
        );

        // Bernoulli variance bound at M = 100, with slack for estimating a
        // variance from 1000 repetitions.
        let mut var = 0.0;
        let reps = 1000;
        for _ in 0..reps {
            let f = finite_measurement_features(&spec, &exact, 100, &SURFACES, &mut rng).unwrap();
            var += (f.xi_eq - exact.xi_eq).powi(2);
        }
        var /= reps as f64;
        assert!(var <= 1.0 / 400.0 + 3e-4, "variance {var} above the bound");
    }

    #[test]
    fn direct_sampling_agrees_with_the_cached_surface_path() {
        let quad = small_quad();
        let spec = NoiseSpec::quasistatic_correlated(1.0, 17.6).unwrap();
        let exact = feature_vector(&spec, &SURFACES, &quad).unwrap();
        // Small M keeps the direct path affordable; agreement is statistical.
        let m = 60;
        let mut rng = derive_rng(3, &[salt::FINITE_M, 1]);
        let direct = finite_measurement_features_direct(&spec, &exact, m, &mut rng).unwrap();
        let se = (0.25f64 / m as f64).sqrt();
        for (got, want) in direct.as_array().into_iter().zip(exact.as_array()) {
            assert!(
                (got - want).abs() <= 4.0 * se,
                "direct path {got} vs exact {want}"
            );
        }
    }
}
