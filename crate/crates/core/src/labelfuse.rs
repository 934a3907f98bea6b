//! Ground-truth label construction from per-modality class probabilities and
//! threshold-confidence filtering.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::fmt_f64;
use crate::predictor::{ClassProbs, Emotion, NUM_CLASSES};

/// Tolerance on the sum of ingested probability rows.
pub const INGEST_SUM_TOLERANCE: f64 = 1e-6;

/// Default confidence threshold.
pub const DEFAULT_TAU: f64 = 0.55;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityProbRecord {
    pub id: Option<String>,
    pub image: ClassProbs,
    pub speech: ClassProbs,
    pub text: ClassProbs,
}

impl ModalityProbRecord {
    pub fn new(id: Option<String>, image: ClassProbs, speech: ClassProbs, text: ClassProbs) -> Result<Self> {
        for (name, p) in [("image", &image), ("speech", &speech), ("text", &text)] {
            if !p.is_distribution(INGEST_SUM_TOLERANCE) {
                return Err(Error::Config(format!("{name} probabilities {:?} are not a distribution", p.values())));
            }
        }
        Ok(ModalityProbRecord { id, image, speech, text })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedLabel {
    pub id: Option<String>,
    pub averaged: ClassProbs,
    pub label: Emotion,
    pub confidence: f64,
}

/// Element-wise mean of the three modality distributions and its argmax.
pub fn fuse_label(rec: &ModalityProbRecord) -> FusedLabel {
    let mut avg = [0.0; NUM_CLASSES];
    for (c, a) in avg.iter_mut().enumerate() {
        *a = (rec.image.get(c) + rec.speech.get(c) + rec.text.get(c)) / 3.0;
    }
    let averaged = ClassProbs(avg);
    let label = Emotion::ALL[averaged.argmax()];
    FusedLabel {
        id: rec.id.clone(),
        averaged,
        label,
        confidence: averaged.get(label.index()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassFilterStats {
    pub class: Emotion,
    pub total: usize,
    pub kept: usize,
    pub max_confidence: f64,
    /// Kept records of this class over all records.
    pub kept_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub tau: f64,
    /// Only classes that occur in the input.
    pub classes: Vec<ClassFilterStats>,
    pub skipped: Vec<Emotion>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    /// Parallel to the input records.
    pub kept: Vec<bool>,
    pub report: ThresholdReport,
}

impl FilterOutcome {
    pub fn kept_indices(&self) -> Vec<usize> {
        self.kept.iter().enumerate().filter(|(_, k)| **k).map(|(i, _)| i).collect()
    }
}

/// Keeps a record iff its confidence is at least `tau` times the largest
/// confidence among records with the same label.
pub fn threshold_filter(records: &[FusedLabel], tau: f64) -> Result<FilterOutcome> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Config(format!("tau {tau} must lie in [0, 1]")));
    }
    let mut max = [f64::NEG_INFINITY; NUM_CLASSES];
    let mut total = [0usize; NUM_CLASSES];
    for r in records {
        let c = r.label.index();
        max[c] = max[c].max(r.confidence);
        total[c] += 1;
    }
    let kept: Vec<bool> = records
        .iter()
        .map(|r| r.confidence >= tau * max[r.label.index()])
        .collect();
    let mut kept_count = [0usize; NUM_CLASSES];
    for (r, &k) in records.iter().zip(&kept) {
        if k {
            kept_count[r.label.index()] += 1;
        }
    }
    let mut classes = Vec::new();
    let mut skipped = Vec::new();
    for class in Emotion::ALL {
        let c = class.index();
        if total[c] == 0 {
            log::info!("class {class} has no records; skipped");
            skipped.push(class);
            continue;
        }
        classes.push(ClassFilterStats {
            class,
            total: total[c],
            kept: kept_count[c],
            max_confidence: max[c],
            kept_ratio: kept_count[c] as f64 / records.len() as f64,
        });
    }
    Ok(FilterOutcome {
        kept,
        report: ThresholdReport { tau, classes, skipped },
    })
}

/// Labels of the source annotations before folding into four classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtendedLabel {
    Angry,
    Happy,
    Hate,
    Sad,
    Excitement,
    Disgust,
}

impl std::str::FromStr for ExtendedLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "angry" => ExtendedLabel::Angry,
            "happy" => ExtendedLabel::Happy,
            "hate" => ExtendedLabel::Hate,
            "sad" => ExtendedLabel::Sad,
            "excitement" => ExtendedLabel::Excitement,
            "disgust" => ExtendedLabel::Disgust,
            other => return Err(Error::Config(format!("unknown emotion label {other:?}"))),
        })
    }
}

/// Folds excitement into happy and disgust into hate.
pub fn relabel(label: ExtendedLabel) -> Emotion {
    match label {
        ExtendedLabel::Angry => Emotion::Angry,
        ExtendedLabel::Happy | ExtendedLabel::Excitement => Emotion::Happy,
        ExtendedLabel::Hate | ExtendedLabel::Disgust => Emotion::Hate,
        ExtendedLabel::Sad => Emotion::Sad,
    }
}

const PREFIXES: [&str; 3] = ["img", "sp", "txt"];

fn input_header() -> Vec<String> {
    let mut h = vec!["id".to_string()];
    for p in PREFIXES {
        for c in 0..NUM_CLASSES {
            h.push(format!("{p}_p{c}"));
        }
    }
    h
}

/// Reads `id,img_p0..img_p3,sp_p0..sp_p3,txt_p0..txt_p3`. Empty or missing
/// probability cells are errors.
pub fn read_records<R: Read>(reader: R) -> Result<Vec<ModalityProbRecord>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let expected = input_header();
    if header.iter().map(str::trim).ne(expected.iter().map(String::as_str)) {
        return Err(Error::Parse(format!(
            "expected header {}, got {}",
            expected.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = row + 2;
        if rec.len() != expected.len() {
            return Err(Error::Parse(format!("line {line}: expected {} cells, got {}", expected.len(), rec.len())));
        }
        let cell = |i: usize| -> Result<f64> {
            let raw = rec[i].trim();
            if raw.is_empty() {
                return Err(Error::Parse(format!("line {line}: missing value for {}", expected[i])));
            }
            raw.parse::<f64>()
                .map_err(|e| Error::Parse(format!("line {line}, {}: {e}", expected[i])))
        };
        let mut probs = [[0.0; NUM_CLASSES]; 3];
        for (m, p) in probs.iter_mut().enumerate() {
            for (c, v) in p.iter_mut().enumerate() {
                *v = cell(1 + m * NUM_CLASSES + c)?;
            }
        }
        let id = rec[0].trim();
        let id = (!id.is_empty()).then(|| id.to_string());
        out.push(
            ModalityProbRecord::new(id, ClassProbs(probs[0]), ClassProbs(probs[1]), ClassProbs(probs[2]))
                .map_err(|e| Error::Parse(format!("line {line}: {e}")))?,
        );
    }
    Ok(out)
}

/// Input columns followed by `label,confidence,kept`.
pub fn write_fused<W: Write>(
    writer: W,
    records: &[ModalityProbRecord],
    fused: &[FusedLabel],
    kept: &[bool],
) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    let mut header = input_header();
    header.extend(["label", "confidence", "kept"].map(String::from));
    w.write_record(&header)?;
    for ((r, f), k) in records.iter().zip(fused).zip(kept) {
        let mut row = vec![r.id.clone().unwrap_or_default()];
        for p in [&r.image, &r.speech, &r.text] {
            row.extend(p.values().iter().map(|&v| fmt_f64(v)));
        }
        row.push(f.label.to_string());
        row.push(fmt_f64(f.confidence));
        row.push(k.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `tau,class,kept_ratio` rows, one per (tau, present class).
pub fn write_sweep<W: Write>(writer: W, reports: &[ThresholdReport]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(["tau", "class", "kept_ratio"])?;
    for r in reports {
        for c in &r.classes {
            w.write_record([fmt_f64(r.tau), c.class.to_string(), fmt_f64(c.kept_ratio)])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_record() -> ModalityProbRecord {
        ModalityProbRecord::new(
            Some("ref".into()),
            ClassProbs([0.1, 0.6, 0.2, 0.1]),
            ClassProbs([0.3, 0.4, 0.1, 0.2]),
            ClassProbs([0.3, 0.5, 0.1, 0.1]),
        )
        .unwrap()
    }

    fn fused(label: Emotion, confidence: f64) -> FusedLabel {
        let mut p = [0.0; 4];
        p[label.index()] = confidence;
        FusedLabel {
            id: None,
            averaged: ClassProbs(p),
            label,
            confidence,
        }
    }

    #[test]
    fn label_example_averages() {
        let f = fuse_label(&reference_record());
        assert_eq!(f.label, Emotion::Happy);
        let rounded: Vec<f64> = f.averaged.values().iter().map(|v| (v * 1000.0).round() / 1000.0).collect();
        assert_eq!(rounded, vec![0.233, 0.5, 0.133, 0.133]);
        assert!((f.confidence - 0.5).abs() < 1e-15);
    }

    #[test]
    fn one_hot_and_uniform() {
        let hot = ClassProbs([0.0, 0.0, 1.0, 0.0]);
        let f = fuse_label(&ModalityProbRecord::new(None, hot, hot, hot).unwrap());
        assert_eq!((f.label, f.confidence), (Emotion::Hate, 1.0));
        let u = ClassProbs::UNIFORM;
        let f = fuse_label(&ModalityProbRecord::new(None, u, u, u).unwrap());
        assert_eq!((f.label, f.confidence), (Emotion::Angry, 0.25));
    }

    #[test]
    fn threshold_rule() {
        let recs = vec![fused(Emotion::Sad, 1.0), fused(Emotion::Sad, 0.6), fused(Emotion::Sad, 0.5)];
        let out = threshold_filter(&recs, 0.55).unwrap();
        assert_eq!(out.kept, vec![true, true, false]);
        assert!(threshold_filter(&recs, 0.0).unwrap().kept.iter().all(|&k| k));
        assert_eq!(threshold_filter(&recs, 1.0).unwrap().kept, vec![true, false, false]);
        assert_eq!(out.report.skipped, vec![Emotion::Angry, Emotion::Happy, Emotion::Hate]);
        assert!(threshold_filter(&recs, 1.2).is_err());
    }

    #[test]
    fn relabel_folds() {
        assert_eq!(relabel("excitement".parse().unwrap()), Emotion::Happy);
        assert_eq!(relabel("disgust".parse().unwrap()), Emotion::Hate);
        assert_eq!(relabel("sad".parse().unwrap()), Emotion::Sad);
        assert!("fear".parse::<ExtendedLabel>().is_err());
    }

    #[test]
    fn csv_ingest_and_missing_cells() {
        let ok = "id,img_p0,img_p1,img_p2,img_p3,sp_p0,sp_p1,sp_p2,sp_p3,txt_p0,txt_p1,txt_p2,txt_p3\n\
                  a,0.1,0.6,0.2,0.1,0.3,0.4,0.1,0.2,0.3,0.5,0.1,0.1\n";
        let recs = read_records(ok.as_bytes()).unwrap();
        assert_eq!(recs, vec![ModalityProbRecord { id: Some("a".into()), ..reference_record() }]);
        let missing = ok.replace("0.4,0.1,0.2", "0.4,,0.2");
        assert!(matches!(read_records(missing.as_bytes()), Err(Error::Parse(_))));
        let short = ok.replace(",0.1\n", "\n");
        assert!(read_records(short.as_bytes()).is_err());
        let bad_header = ok.replace("txt_p3", "t3");
        assert!(read_records(bad_header.as_bytes()).is_err());
    }
}
