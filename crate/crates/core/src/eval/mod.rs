//! Classification experiments on real, generated and mixed training data:
//! stratified cross-validation and deception of a classifier trained on
//! real recordings.

pub mod mlp;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{augment, AugmentKind};
use crate::error::{Error, Result};
use crate::features::{FeatureSpec, FeatureVector};
use crate::gaze::{Dataset, GazeRecording};
use crate::generator::{generate_batch, GeneratorConfig};
use crate::model::{generate_model, BuildConfig};
use crate::rng;

pub use mlp::{train_mlp, Mlp, TrainingChoice};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    NearestCentroid,
    Mlp,
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "centroid" | "nearest_centroid" => Ok(ClassifierKind::NearestCentroid),
            "mlp" => Ok(ClassifierKind::Mlp),
            other => Err(Error::Config(format!("unknown classifier '{other}' (expected centroid or mlp)"))),
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassifierKind::NearestCentroid => "nearest centroid",
            ClassifierKind::Mlp => "mlp",
        })
    }
}

/// Anything that maps a feature vector to a class index.
pub trait Predict {
    fn classes(&self) -> &[String];
    fn predict(&self, features: &FeatureVector) -> Result<usize>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ClassifierModel {
    NearestCentroid { centroids: Vec<Vec<f64>> },
    Mlp(Mlp),
}

/// A trained classifier, tied to the feature geometry and class list it was
/// trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub spec: FeatureSpec,
    pub classes: Vec<String>,
    pub model: ClassifierModel,
}

impl Classifier {
    pub fn kind(&self) -> ClassifierKind {
        match self.model {
            ClassifierModel::NearestCentroid { .. } => ClassifierKind::NearestCentroid,
            ClassifierModel::Mlp(_) => ClassifierKind::Mlp,
        }
    }
}

impl Predict for Classifier {
    fn classes(&self) -> &[String] {
        &self.classes
    }

    fn predict(&self, features: &FeatureVector) -> Result<usize> {
        if features.spec != self.spec {
            return Err(Error::Feature(format!("classifier expects {} features, got {}", self.spec, features.spec)));
        }
        Ok(match &self.model {
            ClassifierModel::NearestCentroid { centroids } => {
                let mut best = (0, f64::INFINITY);
                for (i, c) in centroids.iter().enumerate() {
                    let d = crate::clustering::sq_dist(c, &features.values);
                    if d < best.1 {
                        best = (i, d);
                    }
                }
                best.0
            }
            ClassifierModel::Mlp(net) => net.predict(&features.values),
        })
    }
}

/// Trains a classifier on labelled feature vectors; `labels` index into
/// `classes`.
pub fn train_classifier(
    kind: ClassifierKind,
    features: &[FeatureVector],
    labels: &[usize],
    classes: &[String],
    seed: u64,
) -> Result<Classifier> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(Error::Argument("training needs one label per feature vector".into()));
    }
    let spec = features[0].spec;
    if features.iter().any(|f| f.spec != spec) {
        return Err(Error::Argument("training features mix geometries".into()));
    }
    if labels.iter().any(|&l| l >= classes.len()) {
        return Err(Error::Argument("label outside the class list".into()));
    }
    let model =
        match kind {
            ClassifierKind::NearestCentroid => {
                // classes without training data get an unreachable centroid
                let dim = spec.len();
                let mut sums = vec![vec![0.0; dim]; classes.len()];
                let mut counts = vec![0usize; classes.len()];
                for (f, &l) in features.iter().zip(labels) {
                    counts[l] += 1;
                    for (s, v) in sums[l].iter_mut().zip(&f.values) {
                        *s += v;
                    }
                }
                let centroids =
                    sums.into_iter()
                        .zip(&counts)
                        .map(|(s, &n)| {
                            if n == 0 {
                                vec![f64::INFINITY; dim]
                            } else {
                                s.into_iter().map(|v| v / n as f64).collect()
                            }
                        })
                        .collect();
                ClassifierModel::NearestCentroid { centroids }
            }
            ClassifierKind::Mlp => {
                let xs: Vec<Vec<f64>> = features.iter().map(|f| f.values.clone()).collect();
                let (net, _) = train_mlp(&xs, labels, classes.len(), mlp::DEFAULT_HIDDEN, seed)?;
                ClassifierModel::Mlp(net)
            }
        };
    Ok(Classifier { spec, classes: classes.to_vec(), model })
}

/// Which data the classifier is trained on in each fold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TrainingSource {
    #[default]
    Real,
    Generated,
    Mixed,
}

impl FromStr for TrainingSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(TrainingSource::Real),
            "generated" => Ok(TrainingSource::Generated),
            "mixed" => Ok(TrainingSource::Mixed),
            other => Err(Error::Config(format!("unknown training source '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub feature: FeatureSpec,
    pub classifier: ClassifierKind,
    pub folds: usize,
    pub training: TrainingSource,
    /// Augment the real training recordings of every fold.
    pub augment: bool,
    /// Augmented copies per real training recording.
    pub augment_copies: usize,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            feature: FeatureSpec::heatmap(),
            classifier: ClassifierKind::NearestCentroid,
            folds: 5,
            training: TrainingSource::Real,
            augment: false,
            augment_copies: 1,
            seed: 0,
        }
    }
}

/// Generator setup for producing synthetic training data inside each fold
/// from that fold's real training recordings only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerFoldGeneration {
    pub build: BuildConfig,
    pub generator: GeneratorConfig,
    pub per_class: usize,
}

/// Synthetic recordings added to training folds (never to test folds).
#[derive(Debug, Clone, Copy)]
pub enum ExtraTraining<'a> {
    None,
    /// Pre-generated recordings, labelled with the dataset's class key.
    Fixed(&'a [GazeRecording]),
    PerFold(&'a PerFoldGeneration),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    /// Dataset indices of the test recordings.
    pub test_indices: Vec<usize>,
    /// Dataset indices of the real recordings used for training.
    pub train_indices: Vec<usize>,
    /// Dataset indices whose augmented copies entered training.
    pub augment_sources: Vec<usize>,
    pub augmented_count: usize,
    pub generated_count: usize,
    /// Rows: true class, columns: predicted class.
    pub confusion: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub classes: Vec<String>,
    pub feature: FeatureSpec,
    pub classifier: ClassifierKind,
    pub training: TrainingSource,
    pub folds: Vec<FoldReport>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_balanced_accuracy: f64,
    pub chance_level: f64,
    /// Summed over folds.
    pub confusion: Vec<Vec<usize>>,
}

fn balanced_accuracy(confusion: &[Vec<usize>]) -> f64 {
    let recalls: Vec<f64> = confusion
        .iter()
        .enumerate()
        .filter_map(|(i, row)| {
            let n: usize = row.iter().sum();
            (n > 0).then(|| row[i] as f64 / n as f64)
        })
        .collect();
    if recalls.is_empty() {
        0.0
    } else {
        recalls.iter().sum::<f64>() / recalls.len() as f64
    }
}

/// Splits indices into `folds` test folds, dealing each class's shuffled
/// members round-robin so every fold gets `n_c / folds` (±1) of class c.
pub fn stratified_folds(labels: &[usize], classes: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::Config("cross-validation needs at least 2 folds".into()));
    }
    let mut out = vec![Vec::new(); folds];
    let mut r = rng::seeded(seed);
    for class in 0..classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < folds {
            return Err(Error::Config(format!(
                "class {class} has {} recordings, fewer than {folds} folds",
                members.len()
            )));
        }
        members.shuffle(&mut r);
        // rotate the starting fold so remainders spread across folds
        let start = r.gen_range(0..folds);
        for (j, idx) in members.into_iter().enumerate() {
            out[(start + j) % folds].push(idx);
        }
    }
    for f in out.iter_mut() {
        f.sort_unstable();
    }
    Ok(out)
}

fn class_index(classes: &[String], label: &str) -> Result<usize> {
    classes
        .iter()
        .position(|c| c == label)
        .ok_or_else(|| Error::Config(format!("class '{label}' does not occur in the real data")))
}

/// Featurizes training recordings, skipping ones the descriptor cannot
/// describe (a single point has no HOV).
fn training_features(spec: &FeatureSpec, recs: &[(GazeRecording, usize)]) -> (Vec<FeatureVector>, Vec<usize>) {
    recs.iter().filter_map(|(r, l)| spec.extract(r).ok().map(|f| (f, *l))).unzip()
}

fn augmented_copies(
    dataset: &Dataset,
    train: &[usize],
    labels: &[usize],
    copies: usize,
    seed: u64,
) -> Result<Vec<(GazeRecording, usize)>> {
    let mut r = rng::seeded(seed);
    let mut out = Vec::new();
    for &i in train {
        let rec = &dataset.recordings[i];
        let pool: Vec<GazeRecording> =
            train.iter().filter(|&&j| labels[j] == labels[i]).map(|&j| dataset.recordings[j].clone()).collect();
        for _ in 0..copies {
            let mut kind = *AugmentKind::ALL.choose(&mut r).expect("non-empty");
            if kind == AugmentKind::Crop && rec.len() < 4 {
                kind = AugmentKind::ALL[1];
            }
            out.push((augment(rec, kind, &mut r, &pool)?, labels[i]));
        }
    }
    Ok(out)
}

/// Stratified k-fold cross-validation over the real recordings.
///
/// Test folds hold real recordings only. Augmented copies come from the
/// fold's real training recordings, and synthetic recordings only ever join
/// the training side.
pub fn cross_validate(dataset: &Dataset, config: &CvConfig, extra: ExtraTraining<'_>) -> Result<CvReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let classes = dataset.classes()?;
    let labels: Vec<usize> =
        dataset.recordings.iter().map(|r| class_index(&classes, dataset.label_of(r))).collect::<Result<_>>()?;
    let folds = stratified_folds(&labels, classes.len(), config.folds, config.seed)?;

    let fixed_extra: Vec<(GazeRecording, usize)> = match extra {
        ExtraTraining::Fixed(recs) => recs
            .iter()
            .map(|r| Ok((r.clone(), class_index(&classes, r.label(dataset.class_key))?)))
            .collect::<Result<_>>()?,
        _ => Vec::new(),
    };
    let uses_generated = matches!(config.training, TrainingSource::Generated | TrainingSource::Mixed);
    if uses_generated && matches!(extra, ExtraTraining::None) {
        return Err(Error::Config(format!("{:?} training needs generated recordings", config.training)));
    }

    let reports: Vec<Result<FoldReport>> = folds
        .par_iter()
        .enumerate()
        .map(|(fold, test)| {
            let fold_seed = rng::derive_seed(config.seed, &[fold as u64]);
            let train: Vec<usize> = (0..dataset.len()).filter(|i| test.binary_search(i).is_err()).collect();

            let mut training: Vec<(GazeRecording, usize)> = Vec::new();
            let mut augment_sources = Vec::new();
            let mut augmented_count = 0;
            if config.training != TrainingSource::Generated {
                training.extend(train.iter().map(|&i| (dataset.recordings[i].clone(), labels[i])));
                if config.augment {
                    let copies = augmented_copies(
                        dataset,
                        &train,
                        &labels,
                        config.augment_copies,
                        rng::derive_seed(fold_seed, &[1]),
                    )?;
                    augmented_count = copies.len();
                    augment_sources = train.clone();
                    training.extend(copies);
                }
            }
            let mut generated_count = 0;
            if uses_generated {
                let generated = match extra {
                    ExtraTraining::Fixed(_) => fixed_extra.clone(),
                    ExtraTraining::PerFold(setup) => {
                        generate_for_fold(dataset, &train, &labels, &classes, setup, rng::derive_seed(fold_seed, &[2]))?
                    }
                    ExtraTraining::None => unreachable!("checked above"),
                };
                generated_count = generated.len();
                training.extend(generated);
            }

            let (xs, ys) = training_features(&config.feature, &training);
            if xs.is_empty() {
                return Err(Error::Feature(format!("fold {} has no usable training recordings", fold + 1)));
            }
            let clf = train_classifier(config.classifier, &xs, &ys, &classes, rng::derive_seed(fold_seed, &[3]))?;

            let mut confusion = vec![vec![0usize; classes.len()]; classes.len()];
            for &i in test {
                let f = config.feature.extract(&dataset.recordings[i])?;
                confusion[labels[i]][clf.predict(&f)?] += 1;
            }
            let hits: usize = (0..classes.len()).map(|c| confusion[c][c]).sum();
            Ok(FoldReport {
                fold: fold + 1,
                accuracy: hits as f64 / test.len() as f64,
                balanced_accuracy: balanced_accuracy(&confusion),
                test_indices: test.clone(),
                train_indices: if config.training == TrainingSource::Generated { Vec::new() } else { train },
                augment_sources,
                augmented_count,
                generated_count,
                confusion,
            })
        })
        .collect();
    let folds: Vec<FoldReport> = reports.into_iter().collect::<Result<_>>()?;

    let n = folds.len() as f64;
    let mean_accuracy = folds.iter().map(|f| f.accuracy).sum::<f64>() / n;
    let std_accuracy = (folds.iter().map(|f| (f.accuracy - mean_accuracy).powi(2)).sum::<f64>() / n).sqrt();
    let mean_balanced_accuracy = folds.iter().map(|f| f.balanced_accuracy).sum::<f64>() / n;
    let mut confusion = vec![vec![0usize; classes.len()]; classes.len()];
    for f in &folds {
        for (row, frow) in confusion.iter_mut().zip(&f.confusion) {
            for (c, v) in row.iter_mut().zip(frow) {
                *c += v;
            }
        }
    }
    Ok(CvReport {
        chance_level: 1.0 / classes.len() as f64,
        classes,
        feature: config.feature,
        classifier: config.classifier,
        training: config.training,
        folds,
        mean_accuracy,
        std_accuracy,
        mean_balanced_accuracy,
        confusion,
    })
}

fn generate_for_fold(
    dataset: &Dataset,
    train: &[usize],
    labels: &[usize],
    classes: &[String],
    setup: &PerFoldGeneration,
    seed: u64,
) -> Result<Vec<(GazeRecording, usize)>> {
    let mut out = Vec::new();
    for (c, class) in classes.iter().enumerate() {
        let recs: Vec<GazeRecording> =
            train.iter().filter(|&&i| labels[i] == c).map(|&i| dataset.recordings[i].clone()).collect();
        let subset = Dataset::new(recs, dataset.class_key);
        let build = BuildConfig { seed: rng::derive_seed(seed, &[c as u64, 0]), ..setup.build.clone() };
        let model = generate_model(&subset, &build)?;
        let gen = GeneratorConfig { seed: rng::derive_seed(seed, &[c as u64, 1]), ..setup.generator.clone() };
        for mut rec in generate_batch(&model, &gen, setup.per_class)? {
            rec.set_label(dataset.class_key, class.clone());
            out.push((rec, c));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDeception {
    pub class: String,
    pub generated: usize,
    pub deceived: usize,
    /// Recordings the feature could not describe; counted as not deceiving.
    pub unusable: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeceptionReport {
    pub feature: FeatureSpec,
    pub classifier: Option<ClassifierKind>,
    pub per_class: Vec<ClassDeception>,
    pub overall_rate: f64,
    pub chance_level: f64,
}

/// Trains on all real recordings, then counts how many generated recordings
/// the classifier attributes to the class their generator was trained on.
pub fn deception_rate(
    real: &Dataset,
    generated: &BTreeMap<String, Vec<GazeRecording>>,
    feature: FeatureSpec,
    kind: ClassifierKind,
    seed: u64,
) -> Result<DeceptionReport> {
    let classes = real.classes()?;
    for class in generated.keys() {
        class_index(&classes, class)?;
    }
    let labelled: Vec<(GazeRecording, usize)> = real
        .recordings
        .iter()
        .map(|r| Ok((r.clone(), class_index(&classes, real.label_of(r))?)))
        .collect::<Result<_>>()?;
    let (xs, ys) = training_features(&feature, &labelled);
    if xs.is_empty() {
        return Err(Error::Feature("no real recording could be featurized".into()));
    }
    let clf = train_classifier(kind, &xs, &ys, &classes, seed)?;
    let mut report = deception_with(&clf, generated, feature)?;
    report.classifier = Some(kind);
    Ok(report)
}

/// Deception of an already trained classifier.
pub fn deception_with(
    classifier: &dyn Predict,
    generated: &BTreeMap<String, Vec<GazeRecording>>,
    feature: FeatureSpec,
) -> Result<DeceptionReport> {
    let classes = classifier.classes();
    let mut per_class = Vec::new();
    let (mut total, mut deceived_total) = (0usize, 0usize);
    for (class, recs) in generated {
        let target = class_index(classes, class)?;
        let mut deceived = 0;
        let mut unusable = 0;
        for rec in recs {
            match feature.extract(rec) {
                Ok(f) => deceived += usize::from(classifier.predict(&f)? == target),
                Err(Error::Feature(_)) => unusable += 1,
                Err(e) => return Err(e),
            }
        }
        total += recs.len();
        deceived_total += deceived;
        per_class.push(ClassDeception {
            class: class.clone(),
            generated: recs.len(),
            deceived,
            unusable,
            rate: if recs.is_empty() { 0.0 } else { deceived as f64 / recs.len() as f64 },
        });
    }
    Ok(DeceptionReport {
        feature,
        classifier: None,
        per_class,
        overall_rate: if total == 0 { 0.0 } else { deceived_total as f64 / total as f64 },
        chance_level: 1.0 / classes.len().max(1) as f64,
    })
}

/// Groups recordings by their label under `key`.
pub fn group_by_class(recs: &[GazeRecording], key: crate::gaze::ClassKey) -> BTreeMap<String, Vec<GazeRecording>> {
    let mut out: BTreeMap<String, Vec<GazeRecording>> = BTreeMap::new();
    for r in recs {
        out.entry(r.label(key).to_string()).or_default().push(r.clone());
    }
    out
}

fn write_confusion(f: &mut fmt::Formatter<'_>, classes: &[String], confusion: &[Vec<usize>]) -> fmt::Result {
    writeln!(f, "confusion (rows true, columns predicted):")?;
    write!(f, "  {:>12}", "")?;
    for c in classes {
        write!(f, " {c:>10}")?;
    }
    writeln!(f)?;
    for (c, row) in classes.iter().zip(confusion) {
        write!(f, "  {c:>12}")?;
        for v in row {
            write!(f, " {v:>10}")?;
        }
        writeln!(f)?;
    }
    Ok(())
}

impl fmt::Display for CvReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "cross-validation: {} folds, {} classes, feature {}, classifier {}, training {:?}",
            self.folds.len(),
            self.classes.len(),
            self.feature,
            self.classifier,
            self.training
        )?;
        for fold in &self.folds {
            writeln!(
                f,
                "fold {}: accuracy {:.4} balanced {:.4} (test {}, train {} real + {} augmented + {} generated)",
                fold.fold,
                fold.accuracy,
                fold.balanced_accuracy,
                fold.test_indices.len(),
                fold.train_indices.len(),
                fold.augmented_count,
                fold.generated_count
            )?;
        }
        writeln!(f, "mean accuracy: {:.4} (std {:.4})", self.mean_accuracy, self.std_accuracy)?;
        writeln!(f, "mean balanced accuracy: {:.4}", self.mean_balanced_accuracy)?;
        writeln!(f, "chance level: {:.4}", self.chance_level)?;
        write_confusion(f, &self.classes, &self.confusion)
    }
}

impl fmt::Display for DeceptionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let clf = self.classifier.map_or_else(|| "custom".to_string(), |k| k.to_string());
        writeln!(f, "deception: feature {}, classifier {}", self.feature, clf)?;
        for c in &self.per_class {
            writeln!(
                f,
                "class {}: {}/{} deceived, rate {:.4}{}",
                c.class,
                c.deceived,
                c.generated,
                c.rate,
                if c.unusable > 0 { format!(" ({} unusable)", c.unusable) } else { String::new() }
            )?;
        }
        writeln!(f, "overall deception rate: {:.4}", self.overall_rate)?;
        writeln!(f, "chance level: {:.4}", self.chance_level)
    }
}
