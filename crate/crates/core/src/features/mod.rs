//! Node feature engineering: general note-wise features, spectral graph
//! features, and local cadence-oriented features, concatenated into the node
//! feature matrix with a named manifest.

pub mod pcset;
pub mod spectral;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::Adjacency;
use crate::rational::Rational;
use crate::score::Score;

use pcset::{chord_template_flags, interval_vector, PcSet, CHORD_TEMPLATES};

pub const GENERAL_WIDTH: usize = 51;
pub const SPECTRAL_WIDTH: usize = spectral::DEFAULT_K;
pub const CADENCE_LOCAL_WIDTH: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureCategory {
    General,
    Spectral,
    CadenceLocal,
}

/// Ordered, named description of the feature matrix columns.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub entries: Vec<(String, FeatureCategory)>,
}

impl FeatureManifest {
    pub fn new(entries: Vec<(String, FeatureCategory)>) -> Self {
        FeatureManifest { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn category_counts(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for (_, cat) in &self.entries {
            match cat {
                FeatureCategory::General => c.0 += 1,
                FeatureCategory::Spectral => c.1 += 1,
                FeatureCategory::CadenceLocal => c.2 += 1,
            }
        }
        c
    }

    /// Stable content hash, recorded in checkpoints so a model cannot be
    /// applied to features it was not trained on.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("manifest serializes");
        let mut h = Sha256::new();
        h.update(&json);
        format!("{:x}", h.finalize())
    }
}

/// Which feature categories to compute.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSet {
    /// General + spectral + cadence-local (d = 83).
    All,
    /// General + spectral only (d = 71).
    General,
}

impl std::str::FromStr for FeatureSet {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(FeatureSet::All),
            "general" => Ok(FeatureSet::General),
            _ => Err(Error::Data(format!("unknown feature set {s:?} (all|general)"))),
        }
    }
}

/// Notes sounding at one distinct onset: starts plus held notes.
#[derive(Clone, Debug)]
pub struct OnsetSlice {
    pub onset: Rational,
    pub node_ids: Vec<usize>,
    pub pcset: PcSet,
    pub lowest: Option<u8>,
    pub highest: Option<u8>,
    /// Sounding non-rest notes.
    pub voice_count: usize,
}

/// Build the ordered slice list for a piece.
pub fn onset_slices(score: &Score) -> Vec<OnsetSlice> {
    let mut onsets: Vec<Rational> = score.notes.iter().map(|n| n.onset).collect();
    onsets.dedup();
    onsets
        .into_iter()
        .map(|t| {
            let node_ids: Vec<usize> = score
                .notes
                .iter()
                .filter(|n| n.onset <= t && t < n.end())
                .map(|n| n.id)
                .collect();
            let pitches: Vec<u8> = node_ids
                .iter()
                .filter_map(|&i| score.notes[i].midi_pitch)
                .collect();
            OnsetSlice {
                onset: t,
                pcset: PcSet::from_classes(pitches.iter().map(|p| p % 12)),
                lowest: pitches.iter().copied().min(),
                highest: pitches.iter().copied().max(),
                voice_count: pitches.len(),
                node_ids,
            }
        })
        .collect()
}

fn clip(v: f64, lo: f64, hi: f64) -> f64 {
    v.max(lo).min(hi)
}

/// General note-wise features: 51 columns per node, all in [0,1] or [-1,1].
pub fn general_features(score: &Score) -> Result<(Vec<f64>, Vec<(String, FeatureCategory)>)> {
    let mut names: Vec<String> = vec![
        "onset_norm".into(),
        "duration_norm".into(),
        "pitch_norm".into(),
        "octave_norm".into(),
    ];
    for pc in 0..12 {
        names.push(format!("pc_is_{pc}"));
    }
    names.push("beat_position".into());
    names.push("is_downbeat".into());
    for v in [2, 3, 4, 6, 9, 12] {
        names.push(format!("ts_num_is_{v}"));
    }
    names.push("ts_num_other".into());
    for v in [2, 4, 8] {
        names.push(format!("ts_den_is_{v}"));
    }
    names.push("ts_den_other".into());
    names.push("is_rest".into());
    names.push("voice_norm".into());
    names.push("polyphony_norm".into());
    names.push("key_fifths_norm".into());
    names.push("melodic_interval_norm".into());
    names.push("is_step".into());
    names.push("is_leap".into());
    for ic in 1..=6 {
        names.push(format!("iv_{ic}_norm"));
    }
    for (name, _) in CHORD_TEMPLATES {
        names.push(format!("chord_is_{name}"));
    }
    assert_eq!(names.len(), GENERAL_WIDTH);

    let n = score.notes.len();
    let slices = onset_slices(score);
    let slice_index: std::collections::HashMap<Rational, usize> = slices
        .iter()
        .enumerate()
        .map(|(i, s)| (s.onset, i))
        .collect();
    let piece_len = score.last_offset().to_f64().max(1.0);
    let sigs = score.time_signatures();

    // previous same-voice non-rest pitch, by walking onsets in order
    let mut mel_interval: Vec<Option<i32>> = vec![None; n];
    {
        use std::collections::HashMap;
        // previous pitch = last same-voice pitched note at a strictly smaller onset
        let mut by_voice: HashMap<u32, Vec<(Rational, u8)>> = HashMap::new();
        for note in &score.notes {
            if let Some(p) = note.midi_pitch {
                by_voice.entry(note.voice).or_default().push((note.onset, p));
            }
        }
        for note in &score.notes {
            let Some(p) = note.midi_pitch else { continue };
            if let Some(events) = by_voice.get(&note.voice) {
                let prev = events
                    .iter()
                    .rev()
                    .find(|(o, _)| *o < note.onset)
                    .map(|&(_, lp)| lp);
                mel_interval[note.id] = prev.map(|lp| p as i32 - lp as i32);
            }
        }
    }

    let mut rows = vec![0.0f64; n * GENERAL_WIDTH];
    for note in &score.notes {
        let r = &mut rows[note.id * GENERAL_WIDTH..(note.id + 1) * GENERAL_WIDTH];
        let mut c = 0;
        let push = |r: &mut [f64], c: &mut usize, v: f64| {
            r[*c] = v;
            *c += 1;
        };
        push(r, &mut c, clip(note.onset.to_f64() / piece_len, 0.0, 1.0));
        push(r, &mut c, clip(note.duration.to_f64() / 8.0, 0.0, 1.0));
        let pitch = note.midi_pitch.map(|p| p as f64).unwrap_or(0.0);
        push(r, &mut c, if note.is_rest { 0.0 } else { pitch / 127.0 });
        push(r, &mut c, if note.is_rest { 0.0 } else { (pitch / 12.0) / 10.0 });
        for pc in 0..12u8 {
            push(r, &mut c, f64::from(note.pitch_class() == Some(pc)));
        }
        let beat = score.beat_of(note.onset)?;
        let ts = sigs
            .iter()
            .rev()
            .find(|(o, _)| *o <= note.onset)
            .map(|(_, ts)| *ts)
            .ok_or_else(|| Error::Data("no active time signature".into()))?;
        let mlen = ts.measure_len();
        let measure_start = beat.beat_start - Rational::int(beat.beat) * beat.beat_len;
        let beat_pos = ((note.onset - measure_start) / mlen).to_f64();
        push(r, &mut c, clip(beat_pos, 0.0, 1.0));
        push(r, &mut c, f64::from(note.onset == measure_start));
        for v in [2, 3, 4, 6, 9, 12] {
            push(r, &mut c, f64::from(ts.num == v));
        }
        push(r, &mut c, f64::from(![2, 3, 4, 6, 9, 12].contains(&ts.num)));
        for v in [2, 4, 8] {
            push(r, &mut c, f64::from(ts.den == v));
        }
        push(r, &mut c, f64::from(![2, 4, 8].contains(&ts.den)));
        push(r, &mut c, f64::from(note.is_rest));
        push(r, &mut c, clip(note.voice as f64 / 16.0, 0.0, 1.0));
        let slice = &slices[slice_index[&note.onset]];
        push(r, &mut c, clip(slice.voice_count as f64 / 8.0, 0.0, 1.0));
        push(r, &mut c, score.key_fifths_at(note.onset) as f64 / 7.0);
        let mi = mel_interval[note.id];
        push(
            r,
            &mut c,
            mi.map_or(0.0, |d| clip(d as f64, -12.0, 12.0) / 12.0),
        );
        push(r, &mut c, f64::from(matches!(mi, Some(d) if d.abs() == 1 || d.abs() == 2)));
        push(r, &mut c, f64::from(matches!(mi, Some(d) if d.abs() >= 3)));
        let iv = interval_vector(slice.pcset);
        for v in iv {
            push(r, &mut c, clip(v as f64 / 4.0, 0.0, 1.0));
        }
        for flag in chord_template_flags(slice.pcset) {
            push(r, &mut c, f64::from(flag));
        }
        debug_assert_eq!(c, GENERAL_WIDTH);
    }
    Ok((
        rows,
        names
            .into_iter()
            .map(|n| (n, FeatureCategory::General))
            .collect(),
    ))
}

/// Cadence-oriented local features: 12 columns using only the node's onset
/// slice and the immediately preceding distinct onset slice.
pub fn cadence_local_features(score: &Score) -> Result<(Vec<f64>, Vec<(String, FeatureCategory)>)> {
    let names: Vec<String> = [
        "is_lowest_at_onset",
        "is_highest_at_onset",
        "bass_fifth_motion",
        "bass_step_motion",
        "soprano_desc_step",
        "leading_tone_resolution",
        "dissonance_prev",
        "voice_count_delta_norm",
        "rest_follows_in_voice",
        "metr_downbeat",
        "metr_on_beat",
        "metr_off_beat",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    assert_eq!(names.len(), CADENCE_LOCAL_WIDTH);

    let n = score.notes.len();
    let slices = onset_slices(score);
    let slice_index: std::collections::HashMap<Rational, usize> = slices
        .iter()
        .enumerate()
        .map(|(i, s)| (s.onset, i))
        .collect();

    // next same-voice event after each node
    let mut rest_follows = vec![false; n];
    {
        use std::collections::HashMap;
        let mut by_voice: HashMap<u32, Vec<usize>> = HashMap::new();
        for note in &score.notes {
            by_voice.entry(note.voice).or_default().push(note.id);
        }
        for ids in by_voice.values() {
            for &id in ids {
                let onset = score.notes[id].onset;
                let next = ids
                    .iter()
                    .map(|&j| &score.notes[j])
                    .filter(|m| m.onset > onset)
                    .min_by_key(|m| m.onset);
                rest_follows[id] = next.is_some_and(|m| m.is_rest);
            }
        }
    }

    let mut rows = vec![0.0f64; n * CADENCE_LOCAL_WIDTH];
    for note in &score.notes {
        let si = slice_index[&note.onset];
        let slice = &slices[si];
        let prev = (si > 0).then(|| &slices[si - 1]);
        let r = &mut rows[note.id * CADENCE_LOCAL_WIDTH..(note.id + 1) * CADENCE_LOCAL_WIDTH];
        let pitch = note.midi_pitch;
        r[0] = f64::from(pitch.is_some() && pitch == slice.lowest);
        r[1] = f64::from(pitch.is_some() && pitch == slice.highest);
        if let Some(prev) = prev {
            if let (Some(lo), Some(plo)) = (slice.lowest, prev.lowest) {
                let delta = lo as i32 - plo as i32;
                r[2] = f64::from(delta.rem_euclid(12) == 5);
                r[3] = f64::from(delta.abs() == 1 || delta.abs() == 2);
            }
            if let (Some(hi), Some(phi)) = (slice.highest, prev.highest) {
                let d = hi as i32 - phi as i32;
                r[4] = f64::from(d == -1 || d == -2);
            }
            let fifths = score.key_fifths_at(note.onset);
            let tonic = ((fifths as i32 * 7).rem_euclid(12)) as u8;
            let leading = (tonic + 11) % 12;
            r[5] = f64::from(
                prev.pcset.contains(leading) && note.pitch_class() == Some(tonic),
            );
            let piv = interval_vector(prev.pcset);
            r[6] = f64::from(piv[0] + piv[1] > 0);
            r[7] = clip(
                (slice.voice_count as f64 - prev.voice_count as f64) / 4.0,
                -1.0,
                1.0,
            );
        }
        r[8] = f64::from(rest_follows[note.id]);
        let beat = score.beat_of(note.onset)?;
        let measure_start = beat.beat_start - Rational::int(beat.beat) * beat.beat_len;
        let on_beat = note.onset == beat.beat_start;
        let downbeat = on_beat && note.onset == measure_start;
        r[9] = f64::from(downbeat);
        r[10] = f64::from(on_beat && !downbeat);
        r[11] = f64::from(!on_beat);
    }
    Ok((
        rows,
        names
            .into_iter()
            .map(|n| (n, FeatureCategory::CadenceLocal))
            .collect(),
    ))
}

/// Concatenate the computed categories (column order GENERAL, SPECTRAL,
/// CADENCE_LOCAL) and verify every cell is finite.
pub fn assemble(
    n: usize,
    parts: Vec<(Vec<f64>, Vec<(String, FeatureCategory)>)>,
) -> Result<(Vec<f64>, FeatureManifest)> {
    let widths: Vec<usize> = parts.iter().map(|(_, names)| names.len()).collect();
    for ((rows, _), w) in parts.iter().zip(&widths) {
        if rows.len() != n * w {
            return Err(Error::Dimension(format!(
                "feature block has {} cells, expected {}",
                rows.len(),
                n * w
            )));
        }
    }
    let d: usize = widths.iter().sum();
    let mut out = vec![0.0f64; n * d];
    let mut entries = Vec::with_capacity(d);
    let mut col0 = 0;
    for ((rows, names), w) in parts.into_iter().zip(&widths) {
        for i in 0..n {
            out[i * d + col0..i * d + col0 + w].copy_from_slice(&rows[i * w..(i + 1) * w]);
        }
        entries.extend(names);
        col0 += w;
    }
    let manifest = FeatureManifest::new(entries);
    for i in 0..n {
        for c in 0..d {
            let v = out[i * d + c];
            if !v.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite feature {:?} at node {i}",
                    manifest.entries[c].0
                )));
            }
        }
    }
    Ok((out, manifest))
}

/// Full per-piece feature pipeline for the given feature set.
pub fn compute_features(
    score: &Score,
    adj: &Adjacency,
    set: FeatureSet,
) -> Result<(Vec<f32>, FeatureManifest)> {
    let n = score.notes.len();
    let general = general_features(score)?;
    let spectral_rows = spectral::spectral_features(adj, SPECTRAL_WIDTH, &score.piece_id)?;
    let spectral_names: Vec<(String, FeatureCategory)> = (0..SPECTRAL_WIDTH)
        .map(|i| (format!("lap_eig_{i}"), FeatureCategory::Spectral))
        .collect();
    let mut parts = vec![general, (spectral_rows, spectral_names)];
    if set == FeatureSet::All {
        parts.push(cadence_local_features(score)?);
    }
    let (rows, manifest) = assemble(n, parts)?;
    Ok((rows.into_iter().map(|v| v as f32).collect(), manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_edges;
    use crate::score::{
        CadenceAnnotation, CadenceClass, NoteEvent, SignatureEvent, SignatureKind, TimeSignature,
    };

    fn note(id: usize, onset: Rational, dur: i64, pitch: Option<u8>, voice: u32) -> NoteEvent {
        NoteEvent {
            id,
            onset,
            duration: Rational::int(dur),
            midi_pitch: pitch,
            voice,
            is_rest: pitch.is_none(),
        }
    }

    fn score(notes: Vec<NoteEvent>) -> Score {
        let mut s = Score {
            piece_id: "t".into(),
            notes,
            signatures: vec![SignatureEvent {
                onset: Rational::zero(),
                kind: SignatureKind::Time(TimeSignature { num: 4, den: 4 }),
            }],
            annotations: vec![],
        };
        s.normalize();
        s
    }

    fn col(manifest: &FeatureManifest, name: &str) -> usize {
        manifest.names().position(|n| n == name).unwrap()
    }

    fn full(s: &Score) -> (Vec<f32>, FeatureManifest) {
        let e = build_edges(s);
        let adj = Adjacency::from_edges(s.notes.len(), &e).unwrap();
        compute_features(s, &adj, FeatureSet::All).unwrap()
    }

    #[test]
    fn widths_and_categories() {
        let s = score(vec![note(0, Rational::zero(), 1, Some(60), 0)]);
        let (rows, manifest) = full(&s);
        assert_eq!(manifest.len(), 83);
        assert_eq!(manifest.category_counts(), (51, 20, 12));
        assert_eq!(rows.len(), 83);
    }

    #[test]
    fn general_only_width() {
        let s = score(vec![note(0, Rational::zero(), 1, Some(60), 0)]);
        let e = build_edges(&s);
        let adj = Adjacency::from_edges(1, &e).unwrap();
        let (_, manifest) = compute_features(&s, &adj, FeatureSet::General).unwrap();
        assert_eq!(manifest.len(), 71);
        assert_eq!(manifest.category_counts(), (51, 20, 0));
    }

    #[test]
    fn rest_node_pitch_fields_zero() {
        let s = score(vec![
            note(0, Rational::zero(), 1, None, 0),
            note(1, Rational::zero(), 1, Some(64), 1),
        ]);
        let (rows, m) = full(&s);
        let rest_row = &rows[0..83];
        assert_eq!(rest_row[col(&m, "is_rest")], 1.0);
        assert_eq!(rest_row[col(&m, "pitch_norm")], 0.0);
        for pc in 0..12 {
            assert_eq!(rest_row[col(&m, &format!("pc_is_{pc}"))], 0.0);
        }
    }

    #[test]
    fn downbeat_flags() {
        let s = score(vec![
            note(0, Rational::zero(), 1, Some(60), 0),
            note(1, Rational::int(1), 1, Some(62), 0),
        ]);
        let (rows, m) = full(&s);
        assert_eq!(rows[col(&m, "is_downbeat")], 1.0);
        assert_eq!(rows[col(&m, "beat_position")], 0.0);
        assert_eq!(rows[83 + col(&m, "is_downbeat")], 0.0);
        assert_eq!(rows[83 + col(&m, "metr_on_beat")], 1.0);
    }

    #[test]
    fn c_major_triad_chord_flags() {
        let s = score(vec![
            note(0, Rational::zero(), 1, Some(60), 0),
            note(1, Rational::zero(), 1, Some(64), 1),
            note(2, Rational::zero(), 1, Some(67), 2),
        ]);
        let (rows, m) = full(&s);
        assert_eq!(rows[col(&m, "chord_is_major")], 1.0);
        assert_eq!(rows[col(&m, "iv_3_norm")], 0.25);
        assert_eq!(rows[col(&m, "iv_4_norm")], 0.25);
        assert_eq!(rows[col(&m, "iv_5_norm")], 0.25);
        assert_eq!(rows[col(&m, "iv_1_norm")], 0.0);
    }

    #[test]
    fn first_onset_has_no_prev_slice_features() {
        let s = score(vec![note(0, Rational::zero(), 1, Some(43), 0)]);
        let (rows, m) = full(&s);
        assert_eq!(rows[col(&m, "bass_fifth_motion")], 0.0);
    }

    #[test]
    fn bass_fifth_motion_up_fourth() {
        // G2 bass then C3 bass: +5 semitones
        let s = score(vec![
            note(0, Rational::zero(), 1, Some(43), 0),
            note(1, Rational::int(1), 1, Some(48), 0),
        ]);
        let (rows, m) = full(&s);
        assert_eq!(rows[83 + col(&m, "bass_fifth_motion")], 1.0);
        // and G3 -> C3 (-7) too
        let s = score(vec![
            note(0, Rational::zero(), 1, Some(55), 0),
            note(1, Rational::int(1), 1, Some(48), 0),
        ]);
        let (rows, m) = full(&s);
        assert_eq!(rows[83 + col(&m, "bass_fifth_motion")], 1.0);
    }

    #[test]
    fn leading_tone_resolution_in_c() {
        let s = score(vec![
            note(0, Rational::zero(), 1, Some(59), 0), // B3
            note(1, Rational::int(1), 1, Some(60), 0), // C4
        ]);
        let (rows, m) = full(&s);
        assert_eq!(rows[83 + col(&m, "leading_tone_resolution")], 1.0);
    }

    #[test]
    fn deterministic_extraction() {
        let s = score(vec![
            note(0, Rational::zero(), 2, Some(60), 0),
            note(1, Rational::int(1), 1, Some(67), 1),
            note(2, Rational::int(2), 1, Some(64), 1),
        ]);
        let (a, _) = full(&s);
        let (b, _) = full(&s);
        assert_eq!(a, b);
    }

    #[test]
    fn all_values_in_documented_range() {
        let mut s = score(vec![
            note(0, Rational::zero(), 4, Some(36), 0),
            note(1, Rational::zero(), 1, None, 1),
            note(2, Rational::int(1), 1, Some(96), 2),
            note(3, Rational::int(2), 2, Some(60), 3),
        ]);
        s.annotations = vec![CadenceAnnotation {
            beat_onset: Rational::int(2),
            cadence_class: CadenceClass::Pac,
        }];
        let (rows, _) = full(&s);
        for v in rows {
            assert!(v.is_finite() && (-1.0..=1.0).contains(&(v as f64)));
        }
    }

    #[test]
    fn manifest_hash_changes_with_content() {
        let a = FeatureManifest::new(vec![("x".into(), FeatureCategory::General)]);
        let b = FeatureManifest::new(vec![("y".into(), FeatureCategory::General)]);
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), a.clone().hash());
    }
}
