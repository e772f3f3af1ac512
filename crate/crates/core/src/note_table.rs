//! The Note-Table interchange format: a UTF-8 TSV of note events plus a JSON
//! sidecar carrying signatures and cadence annotations.
//!
//! TSV header: `onset	duration	midi_pitch	voice	is_rest`, rationals written
//! as `a/b` or a bare integer, `midi_pitch` empty for rests.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::Rational;
use crate::score::{
    CadenceAnnotation, CadenceClass, NoteEvent, Score, SignatureEvent, SignatureKind,
    TimeSignature,
};

pub const HEADER: &str = "onset\tduration\tmidi_pitch\tvoice\tis_rest";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetaTimeSig {
    pub onset: Rational,
    pub num: u32,
    pub den: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetaKeySig {
    pub onset: Rational,
    pub fifths: i8,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetaCadence {
    pub onset: Rational,
    #[serde(rename = "type")]
    pub cadence_type: String,
}

/// Sidecar schema (`<piece>.meta.json`).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScoreMeta {
    #[serde(default)]
    pub time_signatures: Vec<MetaTimeSig>,
    #[serde(default)]
    pub key_signatures: Vec<MetaKeySig>,
    #[serde(default)]
    pub cadences: Vec<MetaCadence>,
}

/// Parse a Note-Table TSV and its meta sidecar into a `Score`.
pub fn parse_note_table(tsv: &str, meta_json: &str, piece_id: &str) -> Result<Score> {
    let meta: ScoreMeta = serde_json::from_str(meta_json)?;
    let mut lines = tsv.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == HEADER => {}
        _ => return Err(Error::parse(1, format!("expected header {HEADER:?}"))),
    }
    let mut notes = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(Error::parse(lineno, format!("expected 5 columns, got {}", cols.len())));
        }
        let onset: Rational = cols[0]
            .parse()
            .map_err(|e| Error::parse(lineno, format!("onset: {e}")))?;
        let duration: Rational = cols[1]
            .parse()
            .map_err(|e| Error::parse(lineno, format!("duration: {e}")))?;
        if duration <= Rational::zero() {
            return Err(Error::parse(lineno, "duration must be > 0"));
        }
        if onset.is_negative() {
            return Err(Error::parse(lineno, "onset must be >= 0"));
        }
        let is_rest = match cols[4].trim() {
            "1" | "true" => true,
            "0" | "false" => false,
            v => return Err(Error::parse(lineno, format!("is_rest: invalid value {v:?}"))),
        };
        let midi_pitch = match cols[2].trim() {
            "" => None,
            v => {
                let p: u8 = v
                    .parse()
                    .map_err(|_| Error::parse(lineno, format!("midi_pitch: invalid {v:?}")))?;
                if p > 127 {
                    return Err(Error::parse(lineno, "midi_pitch out of range 0..=127"));
                }
                Some(p)
            }
        };
        if is_rest != midi_pitch.is_none() {
            return Err(Error::parse(lineno, "midi_pitch must be empty iff is_rest"));
        }
        let voice: u32 = cols[3]
            .trim()
            .parse()
            .map_err(|_| Error::parse(lineno, "voice: invalid"))?;
        notes.push(NoteEvent {
            id: 0,
            onset,
            duration,
            midi_pitch,
            voice,
            is_rest,
        });
    }

    let mut signatures: Vec<SignatureEvent> = meta
        .time_signatures
        .iter()
        .map(|t| SignatureEvent {
            onset: t.onset,
            kind: SignatureKind::Time(TimeSignature { num: t.num, den: t.den }),
        })
        .chain(meta.key_signatures.iter().map(|k| SignatureEvent {
            onset: k.onset,
            kind: SignatureKind::Key { fifths: k.fifths },
        }))
        .collect();
    signatures.sort_by_key(|s| s.onset);

    let annotations = meta
        .cadences
        .iter()
        .map(|c| {
            Ok(CadenceAnnotation {
                beat_onset: c.onset,
                cadence_class: CadenceClass::parse(&c.cadence_type)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut score = Score {
        piece_id: piece_id.to_string(),
        notes,
        signatures,
        annotations,
    };
    score.normalize();
    score.validate()?;
    Ok(score)
}

/// Serialize a `Score` back to (TSV, meta JSON). Round-trips exactly.
pub fn serialize_note_table(score: &Score) -> (String, String) {
    let mut tsv = String::from(HEADER);
    tsv.push('\n');
    for n in &score.notes {
        let pitch = n.midi_pitch.map_or(String::new(), |p| p.to_string());
        tsv.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            n.onset,
            n.duration,
            pitch,
            n.voice,
            u8::from(n.is_rest)
        ));
    }
    let meta = ScoreMeta {
        time_signatures: score
            .signatures
            .iter()
            .filter_map(|s| match s.kind {
                SignatureKind::Time(t) => Some(MetaTimeSig {
                    onset: s.onset,
                    num: t.num,
                    den: t.den,
                }),
                _ => None,
            })
            .collect(),
        key_signatures: score
            .signatures
            .iter()
            .filter_map(|s| match s.kind {
                SignatureKind::Key { fifths } => Some(MetaKeySig { onset: s.onset, fifths }),
                _ => None,
            })
            .collect(),
        cadences: score
            .annotations
            .iter()
            .map(|a| MetaCadence {
                onset: a.beat_onset,
                cadence_type: a.cadence_class.as_str().to_string(),
            })
            .collect(),
    };
    let meta_json = serde_json::to_string_pretty(&meta).expect("meta serializes");
    (tsv, meta_json)
}
