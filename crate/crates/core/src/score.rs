//! Score representation: note/rest events with exact-rational timing,
//! signature events, cadence annotations, beat arithmetic, and labeling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::Rational;

/// One note or rest. Onset and duration are in quarter-note units.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoteEvent {
    pub id: usize,
    pub onset: Rational,
    pub duration: Rational,
    /// MIDI pitch 0..=127; `None` exactly when `is_rest`.
    pub midi_pitch: Option<u8>,
    pub voice: u32,
    pub is_rest: bool,
}

impl NoteEvent {
    pub fn end(&self) -> Rational {
        self.onset + self.duration
    }

    pub fn pitch_class(&self) -> Option<u8> {
        self.midi_pitch.map(|p| p % 12)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeSignature {
    pub num: u32,
    pub den: u32,
}

impl TimeSignature {
    /// Beat length in quarter notes (4 / denominator).
    pub fn beat_len(&self) -> Rational {
        Rational::new(4, self.den as i64)
    }

    /// Measure length in quarter notes.
    pub fn measure_len(&self) -> Rational {
        Rational::int(self.num as i64) * self.beat_len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignatureKind {
    Time(TimeSignature),
    /// Key signature as number of fifths, -7..=7 (sharps positive).
    Key { fifths: i8 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureEvent {
    pub onset: Rational,
    pub kind: SignatureKind,
}

/// Cadence classes covered by the annotated corpora.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CadenceClass {
    Pac,
    Riac,
    Hc,
}

impl CadenceClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            CadenceClass::Pac => "PAC",
            CadenceClass::Riac => "rIAC",
            CadenceClass::Hc => "HC",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "PAC" => Ok(CadenceClass::Pac),
            "RIAC" => Ok(CadenceClass::Riac),
            "HC" => Ok(CadenceClass::Hc),
            _ => Err(Error::Data(format!("unknown cadence class {s:?}"))),
        }
    }
}

/// A cadence marked on its arrival beat.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CadenceAnnotation {
    pub beat_onset: Rational,
    pub cadence_class: CadenceClass,
}

/// A parsed piece. Immutable after construction; `validate` checks invariants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub piece_id: String,
    pub notes: Vec<NoteEvent>,
    pub signatures: Vec<SignatureEvent>,
    pub annotations: Vec<CadenceAnnotation>,
}

/// Result of locating an onset on the metrical grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BeatRef {
    /// 1-indexed measure; measure 1 starts at onset 0 (no anacrusis handling).
    pub measure: i64,
    /// 0-indexed beat within the measure.
    pub beat: i64,
    pub beat_start: Rational,
    pub beat_len: Rational,
}

impl BeatRef {
    pub fn beat_end(&self) -> Rational {
        self.beat_start + self.beat_len
    }

    pub fn contains(&self, onset: Rational) -> bool {
        onset >= self.beat_start && onset < self.beat_end()
    }
}

/// Labeling scheme for cadence nodes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelScheme {
    /// Positive = 1 for nodes in an arrival beat of the target class
    /// (`None` = any class).
    Binary { target: Option<CadenceClass> },
    /// 0 = no cadence; class `classes[i]` gets label `i + 1`.
    Multiclass { classes: Vec<CadenceClass> },
}

impl LabelScheme {
    pub fn num_classes(&self) -> usize {
        match self {
            LabelScheme::Binary { .. } => 2,
            LabelScheme::Multiclass { classes } => classes.len() + 1,
        }
    }

    fn label_for(&self, class: CadenceClass) -> Option<u8> {
        match self {
            LabelScheme::Binary { target: None } => Some(1),
            LabelScheme::Binary { target: Some(t) } => (class == *t).then_some(1),
            LabelScheme::Multiclass { classes } => classes
                .iter()
                .position(|c| *c == class)
                .map(|i| (i + 1) as u8),
        }
    }
}

impl std::str::FromStr for LabelScheme {
    type Err = Error;

    /// `binary`, `binary:pac` (or `riac`/`hc`), or `multiclass`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "binary" => Ok(LabelScheme::Binary { target: None }),
            "multiclass" => Ok(LabelScheme::Multiclass {
                classes: vec![CadenceClass::Pac, CadenceClass::Riac, CadenceClass::Hc],
            }),
            other => match other.strip_prefix("binary:") {
                Some(t) => Ok(LabelScheme::Binary {
                    target: Some(CadenceClass::parse(t)?),
                }),
                None => Err(Error::Data(format!("unknown label scheme {s:?}"))),
            },
        }
    }
}

impl Score {
    /// Sort notes into canonical order (onset, then pitch with rests first,
    /// then voice) and reassign contiguous ids.
    pub fn normalize(&mut self) {
        self.notes.sort_by(|a, b| {
            (a.onset, a.midi_pitch.map_or(-1, i16::from), a.voice).cmp(&(
                b.onset,
                b.midi_pitch.map_or(-1, i16::from),
                b.voice,
            ))
        });
        for (i, n) in self.notes.iter_mut().enumerate() {
            n.id = i;
        }
        self.signatures.sort_by_key(|s| s.onset);
        self.annotations.sort_by_key(|a| a.beat_onset);
    }

    pub fn validate(&self) -> Result<()> {
        if !self
            .signatures
            .iter()
            .any(|s| s.onset.is_zero() && matches!(s.kind, SignatureKind::Time(_)))
        {
            return Err(Error::Data(format!(
                "piece {:?}: no time signature at onset 0",
                self.piece_id
            )));
        }
        for (i, n) in self.notes.iter().enumerate() {
            if n.id != i {
                return Err(Error::Data(format!("note ids not contiguous at {i}")));
            }
            if n.duration <= Rational::zero() {
                return Err(Error::Data(format!("note {i}: non-positive duration")));
            }
            if n.onset.is_negative() {
                return Err(Error::Data(format!("note {i}: negative onset")));
            }
            match (n.is_rest, n.midi_pitch) {
                (false, Some(p)) if p <= 127 => {}
                (true, None) => {}
                _ => {
                    return Err(Error::Data(format!(
                        "note {i}: midi_pitch must be present (0..=127) iff not a rest"
                    )))
                }
            }
        }
        for w in self.notes.windows(2) {
            if w[0].onset > w[1].onset {
                return Err(Error::Data("notes not sorted by onset".into()));
            }
        }
        for a in &self.annotations {
            if a.beat_onset.is_negative() {
                return Err(Error::Data("annotation before onset 0".into()));
            }
        }
        Ok(())
    }

    /// Active time signatures as (onset, sig), sorted, first at onset 0.
    pub fn time_signatures(&self) -> Vec<(Rational, TimeSignature)> {
        let mut out: Vec<(Rational, TimeSignature)> = self
            .signatures
            .iter()
            .filter_map(|s| match s.kind {
                SignatureKind::Time(ts) => Some((s.onset, ts)),
                SignatureKind::Key { .. } => None,
            })
            .collect();
        out.sort_by_key(|(o, _)| *o);
        // later signature at the same onset wins
        out.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 = b.1;
                true
            } else {
                false
            }
        });
        out
    }

    /// Key signature (fifths) in effect at `onset`; 0 when none declared.
    pub fn key_fifths_at(&self, onset: Rational) -> i8 {
        let mut fifths = 0;
        for s in &self.signatures {
            if let SignatureKind::Key { fifths: f } = s.kind {
                if s.onset <= onset {
                    fifths = f;
                }
            }
        }
        fifths
    }

    /// Locate `onset` on the metrical grid by accumulating time-signature
    /// spans from onset 0. A signature change always starts a new measure;
    /// a partial measure before a change still counts as one measure.
    pub fn beat_of(&self, onset: Rational) -> Result<BeatRef> {
        if onset.is_negative() {
            return Err(Error::Data(format!("onset {onset} before 0")));
        }
        let sigs = self.time_signatures();
        if sigs.is_empty() || !sigs[0].0.is_zero() {
            return Err(Error::Data("no time signature at onset 0".into()));
        }
        let mut measure: i64 = 1;
        for (k, (span_start, sig)) in sigs.iter().enumerate() {
            let span_end = sigs.get(k + 1).map(|(o, _)| *o);
            let in_span = match span_end {
                Some(end) => onset < end,
                None => true,
            };
            let mlen = sig.measure_len();
            if in_span {
                let offset = onset - *span_start;
                let m_idx = (offset / mlen).floor();
                let measure_start = *span_start + Rational::int(m_idx) * mlen;
                let blen = sig.beat_len();
                let beat = ((onset - measure_start) / blen).floor();
                let beat_start = measure_start + Rational::int(beat) * blen;
                return Ok(BeatRef {
                    measure: measure + m_idx,
                    beat,
                    beat_start,
                    beat_len: blen,
                });
            }
            let span_len = span_end.unwrap() - *span_start;
            let full = (span_len / mlen).floor();
            let partial = !(span_len / mlen).is_integer();
            measure += full + i64::from(partial);
        }
        unreachable!("last span is unbounded");
    }

    /// All distinct beat starts covered by `[0, end_onset]`, in order.
    pub fn beat_starts_until(&self, end_onset: Rational) -> Result<Vec<Rational>> {
        let mut out = Vec::new();
        let mut t = Rational::zero();
        while t <= end_onset {
            let b = self.beat_of(t)?;
            out.push(b.beat_start);
            t = b.beat_end();
        }
        Ok(out)
    }

    pub fn last_offset(&self) -> Rational {
        self.notes
            .iter()
            .map(|n| n.end())
            .max()
            .unwrap_or_else(Rational::zero)
    }
}

/// Per-node labels plus any alignment warnings.
pub struct Labeling {
    pub labels: Vec<u8>,
    pub warnings: Vec<String>,
}

/// Label every node (rests included) by the arrival-beat rule: a node is
/// positive iff its onset lies in `[beat_start, beat_start + beat_len)` of an
/// annotated beat. Misaligned annotations snap to the enclosing beat with a
/// warning.
pub fn assign_labels(score: &Score, scheme: &LabelScheme) -> Result<Labeling> {
    let mut labels = vec![0u8; score.notes.len()];
    let mut warnings = Vec::new();
    for ann in &score.annotations {
        let Some(label) = scheme.label_for(ann.cadence_class) else {
            continue;
        };
        let beat = score.beat_of(ann.beat_onset)?;
        if beat.beat_start != ann.beat_onset {
            warnings.push(format!(
                "piece {:?}: annotation at {} not beat-aligned, snapped to {}",
                score.piece_id, ann.beat_onset, beat.beat_start
            ));
        }
        for n in &score.notes {
            if beat.contains(n.onset) {
                labels[n.id] = label;
            }
        }
    }
    Ok(Labeling { labels, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    fn sig(onset: Rational, num: u32, den: u32) -> SignatureEvent {
        SignatureEvent {
            onset,
            kind: SignatureKind::Time(TimeSignature { num, den }),
        }
    }

    fn note(id: usize, onset: Rational, dur: Rational) -> NoteEvent {
        NoteEvent {
            id,
            onset,
            duration: dur,
            midi_pitch: Some(60),
            voice: 0,
            is_rest: false,
        }
    }

    fn base_score(notes: Vec<NoteEvent>) -> Score {
        Score {
            piece_id: "test".into(),
            notes,
            signatures: vec![sig(Rational::zero(), 4, 4)],
            annotations: vec![],
        }
    }

    #[test]
    fn beat_of_origin() {
        let s = base_score(vec![]);
        let b = s.beat_of(Rational::zero()).unwrap();
        assert_eq!(
            (b.measure, b.beat, b.beat_start, b.beat_len),
            (1, 0, r(0, 1), r(1, 1))
        );
    }

    #[test]
    fn beat_of_accumulates() {
        let s = base_score(vec![]);
        let b = s.beat_of(Rational::int(5)).unwrap();
        assert_eq!(
            (b.measure, b.beat, b.beat_start, b.beat_len),
            (2, 1, r(5, 1), r(1, 1))
        );
    }

    #[test]
    fn beat_of_across_signature_change() {
        let mut s = base_score(vec![]);
        s.signatures = vec![sig(Rational::zero(), 3, 4), sig(Rational::int(3), 4, 4)];
        let b = s.beat_of(Rational::int(4)).unwrap();
        assert_eq!(
            (b.measure, b.beat, b.beat_start, b.beat_len),
            (2, 1, r(4, 1), r(1, 1))
        );
    }

    #[test]
    fn beat_of_partial_measure_counts() {
        let mut s = base_score(vec![]);
        // 4/4 cut short after 2 quarters, then 3/4
        s.signatures = vec![sig(Rational::zero(), 4, 4), sig(Rational::int(2), 3, 4)];
        let b = s.beat_of(Rational::int(2)).unwrap();
        assert_eq!(b.measure, 2);
        assert_eq!(b.beat, 0);
    }

    #[test]
    fn beat_of_rejects_negative() {
        let s = base_score(vec![]);
        assert!(s.beat_of(r(-1, 2)).is_err());
    }

    #[test]
    fn labels_by_arrival_beat() {
        let mut s = base_score(vec![
            note(0, Rational::int(8), Rational::int(1)),
            note(1, r(17, 2), r(1, 2)),
            note(2, Rational::int(9), Rational::int(1)),
        ]);
        s.annotations = vec![CadenceAnnotation {
            beat_onset: Rational::int(8),
            cadence_class: CadenceClass::Pac,
        }];
        let l = assign_labels(&s, &LabelScheme::Binary { target: None }).unwrap();
        assert_eq!(l.labels, vec![1, 1, 0]);
        assert!(l.warnings.is_empty());
    }

    #[test]
    fn no_annotations_all_zero() {
        let s = base_score(vec![note(0, Rational::zero(), Rational::int(1))]);
        let l = assign_labels(&s, &LabelScheme::Binary { target: None }).unwrap();
        assert_eq!(l.labels, vec![0]);
    }

    #[test]
    fn multiclass_labels() {
        let mut s = base_score(vec![
            note(0, Rational::int(0), Rational::int(1)),
            note(1, Rational::int(4), Rational::int(1)),
        ]);
        s.annotations = vec![
            CadenceAnnotation {
                beat_onset: Rational::int(0),
                cadence_class: CadenceClass::Pac,
            },
            CadenceAnnotation {
                beat_onset: Rational::int(4),
                cadence_class: CadenceClass::Hc,
            },
        ];
        let scheme = LabelScheme::Multiclass {
            classes: vec![CadenceClass::Pac, CadenceClass::Hc],
        };
        let l = assign_labels(&s, &scheme).unwrap();
        assert_eq!(l.labels, vec![1, 2]);
    }

    #[test]
    fn misaligned_annotation_snaps_with_warning() {
        let mut s = base_score(vec![note(0, r(1, 3), Rational::int(1))]);
        s.annotations = vec![CadenceAnnotation {
            beat_onset: r(1, 3),
            cadence_class: CadenceClass::Pac,
        }];
        let l = assign_labels(&s, &LabelScheme::Binary { target: None }).unwrap();
        assert_eq!(l.labels, vec![1]);
        assert_eq!(l.warnings.len(), 1);
    }

    #[test]
    fn binary_target_filters_class() {
        let mut s = base_score(vec![note(0, Rational::int(0), Rational::int(1))]);
        s.annotations = vec![CadenceAnnotation {
            beat_onset: Rational::int(0),
            cadence_class: CadenceClass::Hc,
        }];
        let l = assign_labels(
            &s,
            &LabelScheme::Binary {
                target: Some(CadenceClass::Pac),
            },
        )
        .unwrap();
        assert_eq!(l.labels, vec![0]);
    }

    #[test]
    fn validate_catches_bad_scores() {
        let mut s = base_score(vec![note(0, Rational::zero(), Rational::zero())]);
        assert!(s.validate().is_err()); // zero duration
        s.notes[0].duration = Rational::int(1);
        assert!(s.validate().is_ok());
        s.signatures.clear();
        assert!(s.validate().is_err()); // no time signature at 0
    }
}
