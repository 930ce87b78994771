//! Prequential (test-then-train) evaluation and classification metrics.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{OnlineClassifier, StepRecord};
use crate::stream::Example;

/// `counts[true][pred]`
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_counts(counts: &[Vec<u64>]) -> Result<Self> {
        let k = counts.len();
        if counts.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidInput("confusion matrix must be square".into()));
        }
        Ok(ConfusionMatrix {
            classes: k,
            counts: counts.concat(),
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.classes + pred]
    }

    /// Row-major counts.
    pub fn as_slice(&self) -> &[u64] {
        &self.counts
    }

    pub fn record(&mut self, truth: usize, pred: usize) -> Result<()> {
        if truth >= self.classes || pred >= self.classes {
            return Err(Error::InvalidInput(format!(
                "pair ({truth}, {pred}) out of range for {} classes",
                self.classes
            )));
        }
        self.counts[truth * self.classes + pred] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.classes).map(|k| self.get(k, k)).sum()
    }

    /// Relabels class `k` as `perm[k]` in both rows and columns.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.classes {
            return Err(Error::shape("ConfusionMatrix::permuted", self.classes, perm.len()));
        }
        let mut out = ConfusionMatrix::new(self.classes);
        for t in 0..self.classes {
            for p in 0..self.classes {
                out.counts[perm[t] * self.classes + perm[p]] = self.get(t, p);
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindowPoint {
    /// Number of examples seen at the end of the window.
    pub window_end_t: u64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub n: u64,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub hamming_loss: f64,
    pub window: Option<u64>,
    pub windowed_accuracy: Vec<WindowPoint>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Macro-averaged metrics; a zero denominator makes that class's metric 0.
pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::InvalidInput("no examples were evaluated".into()));
    }
    let k = cm.classes();
    let (mut p_sum, mut r_sum, mut f_sum) = (0.0, 0.0, 0.0);
    for c in 0..k {
        let tp = cm.get(c, c);
        let predicted: u64 = (0..k).map(|t| cm.get(t, c)).sum();
        let actual: u64 = (0..k).map(|p| cm.get(c, p)).sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, actual);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        p_sum += precision;
        r_sum += recall;
        f_sum += f1;
    }
    let accuracy = ratio(cm.correct(), total);
    Ok(MetricsReport {
        n: total,
        accuracy,
        macro_precision: p_sum / k as f64,
        macro_recall: r_sum / k as f64,
        macro_f1: f_sum / k as f64,
        hamming_loss: 1.0 - accuracy,
        window: None,
        windowed_accuracy: Vec::new(),
    })
}

/// Running state of a prequential evaluation. Every field is public so a
/// checkpoint can capture and restore it.
#[derive(Clone, Debug, PartialEq)]
pub struct PrequentialEvaluator {
    pub confusion: ConfusionMatrix,
    pub window: u64,
    pub window_correct: u64,
    pub window_seen: u64,
    pub series: Vec<WindowPoint>,
    /// Examples consumed so far, including any that were skipped on resume.
    pub seen: u64,
}

impl PrequentialEvaluator {
    pub fn new(classes: usize, window: u64) -> Result<Self> {
        if classes == 0 {
            return Err(Error::Config("at least one class is required".into()));
        }
        if window == 0 {
            return Err(Error::Config("window must be at least 1".into()));
        }
        Ok(PrequentialEvaluator {
            confusion: ConfusionMatrix::new(classes),
            window,
            window_correct: 0,
            window_seen: 0,
            series: Vec::new(),
            seen: 0,
        })
    }

    pub fn observe(&mut self, truth: usize, pred: usize) -> Result<()> {
        self.confusion.record(truth, pred)?;
        self.seen += 1;
        self.window_seen += 1;
        if truth == pred {
            self.window_correct += 1;
        }
        if self.window_seen == self.window {
            self.series.push(WindowPoint {
                window_end_t: self.seen,
                accuracy: ratio(self.window_correct, self.window_seen),
            });
            self.window_seen = 0;
            self.window_correct = 0;
        }
        Ok(())
    }

    pub fn report(&self) -> Result<MetricsReport> {
        let mut r = compute_metrics(&self.confusion)?;
        r.window = Some(self.window);
        r.windowed_accuracy = self.series.clone();
        Ok(r)
    }

    /// Test-then-train over `stream`, stopping after `max_steps` examples when
    /// given. Each example's prediction is scored before the model sees its
    /// label. `on_step` receives every step record.
    pub fn run<M, I, F>(
        &mut self,
        model: &mut M,
        stream: I,
        max_steps: Option<u64>,
        mut on_step: F,
    ) -> Result<u64>
    where
        M: OnlineClassifier + ?Sized,
        I: IntoIterator<Item = Result<Example>>,
        F: FnMut(&StepRecord) -> Result<()>,
    {
        let classes = self.confusion.classes();
        let mut done = 0;
        let mut items = stream.into_iter();
        while max_steps.is_none_or(|m| done < m) {
            let Some(item) = items.next() else {
                break;
            };
            let record = self.seen as usize;
            let ex = item?;
            if ex.y >= classes {
                return Err(Error::data_at_record(
                    record,
                    format!("label {} out of range for {classes} classes", ex.y),
                ));
            }
            let yhat = model.predict(&ex.x)?;
            self.observe(ex.y, yhat.argmax())?;
            let rec = model.learn(ex.y)?;
            on_step(&rec)?;
            done += 1;
        }
        Ok(done)
    }
}

/// Runs a fresh evaluation over the whole stream.
pub fn prequential_run<M, I>(
    stream: I,
    model: &mut M,
    window: u64,
) -> Result<(MetricsReport, Vec<StepRecord>)>
where
    M: OnlineClassifier + ?Sized,
    I: IntoIterator<Item = Result<Example>>,
{
    let mut eval = PrequentialEvaluator::new(model.num_classes(), window)?;
    let mut records = Vec::new();
    eval.run(model, stream, None, |r| {
        records.push(r.clone());
        Ok(())
    })?;
    Ok((eval.report()?, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Rng, Vector};
    use proptest::prelude::*;

    #[test]
    fn two_class_example() {
        let cm = ConfusionMatrix::from_counts(&[vec![3, 1], vec![2, 4]]).unwrap();
        let m = compute_metrics(&cm).unwrap();
        assert!((m.accuracy - 0.7).abs() < 1e-15);
        assert!((m.macro_precision - 0.7).abs() < 1e-15);
        let (r0, r1) = (0.75, 4.0 / 6.0);
        assert!((m.macro_recall - (r0 + r1) / 2.0).abs() < 1e-15);
        let f0 = 2.0 * 0.6 * r0 / (0.6 + r0);
        let f1 = 2.0 * 0.8 * r1 / (0.8 + r1);
        assert!((m.macro_f1 - (f0 + f1) / 2.0).abs() < 1e-15);
        assert_eq!(m.hamming_loss, 1.0 - m.accuracy);
    }

    #[test]
    fn diagonal_is_perfect() {
        let cm = ConfusionMatrix::from_counts(&[vec![4, 0, 0], vec![0, 2, 0], vec![0, 0, 9]]).unwrap();
        let m = compute_metrics(&cm).unwrap();
        assert_eq!((m.accuracy, m.macro_precision, m.macro_f1, m.hamming_loss), (1.0, 1.0, 1.0, 0.0));
    }

    #[test]
    fn absent_class_counts_as_zero() {
        let cm = ConfusionMatrix::from_counts(&[vec![5, 0, 0], vec![0, 5, 0], vec![0, 0, 0]]).unwrap();
        let m = compute_metrics(&cm).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert!((m.macro_precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.macro_f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_matrix_is_rejected() {
        assert!(matches!(
            compute_metrics(&ConfusionMatrix::new(3)),
            Err(Error::InvalidInput(_))
        ));
    }

    /// Predicts a fixed class and records the order of calls.
    struct Spy {
        class: usize,
        classes: usize,
        log: Vec<String>,
        labels_seen: Vec<usize>,
    }

    impl OnlineClassifier for Spy {
        fn input_dim(&self) -> usize {
            1
        }
        fn num_classes(&self) -> usize {
            self.classes
        }
        fn predict(&mut self, x: &[f64]) -> Result<Vector> {
            self.log.push(format!("predict {} after {:?}", x[0], self.labels_seen));
            Ok(Vector::basis(self.classes, self.class))
        }
        fn learn(&mut self, y: usize) -> Result<StepRecord> {
            self.log.push(format!("learn {y}"));
            self.labels_seen.push(y);
            Ok(StepRecord::default())
        }
    }

    fn ex(v: f64, y: usize) -> Result<Example> {
        Ok(Example { x: Vector::from_vec(vec![v]), y })
    }

    #[test]
    fn predicts_before_learning_each_example() {
        let mut spy = Spy { class: 0, classes: 2, log: vec![], labels_seen: vec![] };
        let stream = vec![ex(0.0, 1), ex(1.0, 0), ex(2.0, 1)];
        prequential_run(stream, &mut spy, 10).unwrap();
        assert_eq!(
            spy.log,
            vec![
                "predict 0 after []",
                "learn 1",
                "predict 1 after [1]",
                "learn 0",
                "predict 2 after [1, 0]",
                "learn 1"
            ]
        );
    }

    #[test]
    fn constant_model_on_constant_stream() {
        let mut spy = Spy { class: 0, classes: 3, log: vec![], labels_seen: vec![] };
        let stream: Vec<_> = (0..50).map(|i| ex(i as f64, 0)).collect();
        let (m, recs) = prequential_run(stream, &mut spy, 10).unwrap();
        assert_eq!((m.accuracy, m.hamming_loss, m.n), (1.0, 0.0, 50));
        assert_eq!(recs.len(), 50);
        assert_eq!(m.windowed_accuracy.len(), 5);
        assert_eq!(m.windowed_accuracy[4].window_end_t, 50);
    }

    #[test]
    fn constant_model_on_coin_flips() {
        let mut rng = Rng::new(77);
        let mut spy = Spy { class: 1, classes: 2, log: vec![], labels_seen: vec![] };
        let stream: Vec<_> = (0..10_000).map(|_| ex(0.0, rng.below(2))).collect();
        let (m, _) = prequential_run(stream, &mut spy, 1000).unwrap();
        assert!((m.accuracy - 0.5).abs() <= 0.02, "{}", m.accuracy);
    }

    #[test]
    fn bad_label_names_the_record() {
        let mut spy = Spy { class: 0, classes: 2, log: vec![], labels_seen: vec![] };
        let err = prequential_run(vec![ex(0.0, 0), ex(0.0, 5)], &mut spy, 1).unwrap_err();
        assert!(matches!(err, Error::Data { record: Some(1), .. }), "{err:?}");
    }

    fn oracle(truth: &[usize], pred: &[usize], k: usize) -> (f64, f64, f64) {
        let n = truth.len() as f64;
        let acc = truth.iter().zip(pred).filter(|(t, p)| t == p).count() as f64 / n;
        let (mut ps, mut fs) = (0.0, 0.0);
        for c in 0..k {
            let tp = truth.iter().zip(pred).filter(|(t, p)| **t == c && **p == c).count() as f64;
            let fp = truth.iter().zip(pred).filter(|(t, p)| **t != c && **p == c).count() as f64;
            let fnn = truth.iter().zip(pred).filter(|(t, p)| **t == c && **p != c).count() as f64;
            let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let r = if tp + fnn > 0.0 { tp / (tp + fnn) } else { 0.0 };
            ps += p;
            fs += if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        }
        (acc, ps / k as f64, fs / k as f64)
    }

    proptest! {
        #[test]
        fn matches_brute_force(pairs in proptest::collection::vec((0usize..5, 0usize..5), 1..200)) {
            let mut cm = ConfusionMatrix::new(5);
            for &(t, p) in &pairs {
                cm.record(t, p).unwrap();
            }
            let m = compute_metrics(&cm).unwrap();
            let (t, p): (Vec<usize>, Vec<usize>) = pairs.iter().cloned().unzip();
            let (a, pr, f) = oracle(&t, &p, 5);
            prop_assert!((m.accuracy - a).abs() <= 1e-12);
            prop_assert!((m.macro_precision - pr).abs() <= 1e-12);
            prop_assert!((m.macro_f1 - f).abs() <= 1e-12);
            prop_assert_eq!(m.hamming_loss, 1.0 - m.accuracy);
            prop_assert_eq!(cm.total(), pairs.len() as u64);
            for v in [m.accuracy, m.macro_precision, m.macro_recall, m.macro_f1, m.hamming_loss] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn invariant_under_relabeling(pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..100), seed in any::<u64>()) {
            let mut cm = ConfusionMatrix::new(4);
            for &(t, p) in &pairs {
                cm.record(t, p).unwrap();
            }
            let perm = Rng::new(seed).permutation(4);
            let a = compute_metrics(&cm).unwrap();
            let b = compute_metrics(&cm.permuted(&perm).unwrap()).unwrap();
            prop_assert!((a.accuracy - b.accuracy).abs() <= 1e-12);
            prop_assert!((a.macro_precision - b.macro_precision).abs() <= 1e-12);
            prop_assert!((a.macro_recall - b.macro_recall).abs() <= 1e-12);
            prop_assert!((a.macro_f1 - b.macro_f1).abs() <= 1e-12);
        }
    }
}
