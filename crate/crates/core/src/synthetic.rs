//! Synthetic corpora with planted patterns, used by the evaluation harness.
//!
//! Both generators emit four-voice quarter-note textures in 4/4 so every
//! onset is a beat. `motif_corpus` plants a cadence-like arrival readable
//! from a node's own context features; `context_corpus` plants a pattern
//! readable only from the previous onset's chord, so detecting it requires
//! graph convolution.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::rational::Rational;
use crate::score::{
    CadenceAnnotation, CadenceClass, NoteEvent, Score, SignatureEvent, SignatureKind,
    TimeSignature,
};

const VOICE_RANGES: [(u8, u8); 4] = [(67, 79), (60, 72), (52, 64), (40, 54)];

fn four_four(piece_id: &str, pitches: &[[u8; 4]], cadence_beats: &[i64]) -> Score {
    let mut notes = Vec::new();
    for (t, chord) in pitches.iter().enumerate() {
        for (v, &p) in chord.iter().enumerate() {
            notes.push(NoteEvent {
                id: 0,
                onset: Rational::int(t as i64),
                duration: Rational::int(1),
                midi_pitch: Some(p),
                voice: v as u32,
                is_rest: false,
            });
        }
    }
    let mut score = Score {
        piece_id: piece_id.into(),
        notes,
        signatures: vec![SignatureEvent {
            onset: Rational::int(0),
            kind: SignatureKind::Time(TimeSignature { num: 4, den: 4 }),
        }],
        annotations: cadence_beats
            .iter()
            .map(|&t| CadenceAnnotation {
                beat_onset: Rational::int(t),
                cadence_class: CadenceClass::Pac,
            })
            .collect(),
    };
    score.normalize();
    score
}

fn random_chord<R: Rng>(rng: &mut R) -> [u8; 4] {
    let mut chord = [0u8; 4];
    for (v, &(lo, hi)) in VOICE_RANGES.iter().enumerate() {
        chord[v] = rng.gen_range(lo..=hi);
    }
    chord
}

/// Pick distinct beats with the given spacing from the candidate list.
fn pick_spaced<R: Rng>(candidates: &[i64], count: usize, min_gap: i64, rng: &mut R) -> Vec<i64> {
    let mut picked: Vec<i64> = Vec::new();
    let mut pool: Vec<i64> = candidates.to_vec();
    while picked.len() < count && !pool.is_empty() {
        let t = pool[rng.gen_range(0..pool.len())];
        picked.push(t);
        pool.retain(|&u| (u - t).abs() >= min_gap);
    }
    picked.sort_unstable();
    picked
}

/// Corpus where the positive class is a cadence-like arrival: dominant
/// sonority with the bass a fifth above the target, then on the next
/// downbeat a fifth-down bass, a descending soprano step, and a complete
/// major triad. Positives sit at roughly `rate` of all nodes.
pub fn motif_corpus(n_pieces: usize, measures: usize, rate: f64, seed: u64) -> Vec<Score> {
    (0..n_pieces)
        .map(|pi| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(pi as u64));
            let beats = measures as i64 * 4;
            // downbeats with a full preceding beat available
            let candidates: Vec<i64> = (1..measures as i64).map(|m| m * 4).collect();
            let want = ((beats as f64 * rate).round() as usize).max(1);
            let cadences = pick_spaced(&candidates, want, 8, &mut rng);
            let mut pitches: Vec<[u8; 4]> = (0..beats).map(|_| random_chord(&mut rng)).collect();
            for &t in &cadences {
                // G dominant into a complete C major arrival
                pitches[(t - 1) as usize] = [74, 67, 59, 43]; // D5 G4 B3 G2
                pitches[t as usize] = [72, 67, 64, 48]; // C5 G4 E4 C3
            }
            four_four(&format!("motif{pi:02}"), &pitches, &cadences)
        })
        .collect()
}

const DIM7_MASKS: [u16; 3] = [
    // the three transpositions of {0, 3, 6, 9}
    0b0000_0010_0100_1001,
    0b0000_0100_1001_0010,
    0b0000_1001_0010_0100,
];

fn is_dim7(chord: &[u8; 4]) -> bool {
    let mut mask = 0u16;
    for &p in chord {
        mask |= 1 << (p % 12);
    }
    DIM7_MASKS.contains(&mask)
}

/// Corpus where the positive class at beat `t` is announced only by a fully
/// diminished seventh chord at beat `t - 1`; the labeled onset itself is
/// drawn from the same distribution as every negative onset, so the pattern
/// is invisible without neighboring-onset context.
pub fn context_corpus(n_pieces: usize, beats_per_piece: usize, seed: u64) -> Vec<Score> {
    (0..n_pieces)
        .map(|pi| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5EED).wrapping_add(pi as u64));
            let beats = beats_per_piece as i64;
            let candidates: Vec<i64> = (2..beats - 1).collect();
            let want = ((beats as f64) * 0.06).round() as usize;
            let plants = pick_spaced(&candidates, want.max(2), 3, &mut rng);
            let mut pitches: Vec<[u8; 4]> = (0..beats)
                .map(|_| loop {
                    let c = random_chord(&mut rng);
                    if !is_dim7(&c) {
                        break c;
                    }
                })
                .collect();
            for &t in &plants {
                // B D F Ab stacked through the voices
                pitches[(t - 1) as usize] = [71, 68, 62, 41]; // B4 Ab4 D4 F2
            }
            four_four(&format!("ctx{pi:02}"), &pitches, &plants)
        })
        .collect()
}
