//! Parser for a subset of the Humdrum **kern format.
//!
//! Supported: `**kern` spines (one voice each), `*M` time signatures,
//! `*k[...]` key signatures, barlines, notes/rests/chords with recip
//! durations and dots, and tie merging. Spine splits/merges (`*^`, `*v`)
//! are rejected as unsupported.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::rational::Rational;
use crate::score::{
    NoteEvent, Score, SignatureEvent, SignatureKind, TimeSignature,
};

/// Performance/editorial marks that carry no timing or pitch information.
const IGNORABLE: &str = "LJKkj(){};'`~^&\\Xxy\"<>,nN$Mm:uvwW@+|";

pub fn parse_kern(text: &str, piece_id: &str) -> Result<Score> {
    let mut spine_is_kern: Option<Vec<bool>> = None;
    let mut clocks: Vec<Rational> = Vec::new();
    let mut notes: Vec<NoteEvent> = Vec::new();
    let mut signatures: Vec<SignatureEvent> = Vec::new();
    // open tie per (voice, midi pitch) -> index into notes
    let mut open_ties: HashMap<(u32, u8), usize> = HashMap::new();

    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('!') {
            continue;
        }
        let tokens: Vec<&str> = line.split('\t').collect();

        if line.starts_with("**") {
            if spine_is_kern.is_some() {
                return Err(Error::parse(lineno, "second exclusive interpretation line"));
            }
            let flags: Vec<bool> = tokens.iter().map(|t| *t == "**kern").collect();
            clocks = vec![Rational::zero(); flags.len()];
            spine_is_kern = Some(flags);
            continue;
        }
        let Some(flags) = &spine_is_kern else {
            return Err(Error::parse(lineno, "data before exclusive interpretation"));
        };
        if tokens.len() != flags.len() {
            return Err(Error::parse(
                lineno,
                format!("expected {} spines, got {}", flags.len(), tokens.len()),
            ));
        }

        if line.starts_with('*') {
            for (si, tok) in tokens.iter().enumerate() {
                if *tok == "*^" || *tok == "*v" {
                    return Err(Error::Unsupported {
                        line: lineno,
                        msg: format!("spine split/merge token {tok:?}"),
                    });
                }
                if !flags[si] {
                    continue;
                }
                let now = clocks[si];
                if let Some(ts) = tok
                    .strip_prefix("*M")
                    .filter(|r| r.chars().next().is_some_and(|c| c.is_ascii_digit()))
                {
                    let (n, d) = ts.split_once('/').ok_or_else(|| {
                        Error::parse(lineno, format!("bad time signature {tok:?}"))
                    })?;
                    let num: u32 = n
                        .parse()
                        .map_err(|_| Error::parse(lineno, format!("bad time signature {tok:?}")))?;
                    let den: u32 = d
                        .parse()
                        .map_err(|_| Error::parse(lineno, format!("bad time signature {tok:?}")))?;
                    if si == first_kern(flags) {
                        signatures.push(SignatureEvent {
                            onset: now,
                            kind: SignatureKind::Time(TimeSignature { num, den }),
                        });
                    }
                } else if let Some(body) = tok.strip_prefix("*k[") {
                    let body = body.trim_end_matches(']');
                    let fifths = parse_key_sig(body, lineno)?;
                    if si == first_kern(flags) {
                        signatures.push(SignatureEvent {
                            onset: now,
                            kind: SignatureKind::Key { fifths },
                        });
                    }
                }
                // other tandem interpretations (clefs, tempo, instrument) ignored
            }
            continue;
        }
        if line.starts_with('=') {
            continue; // barline
        }

        // data line
        let mut voice = 0u32;
        for (si, tok) in tokens.iter().enumerate() {
            if !flags[si] {
                continue;
            }
            let v = voice;
            voice += 1;
            if *tok == "." {
                continue;
            }
            let col = line.find(tok).map(|c| c + 1).unwrap_or(0);
            let mut advance: Option<Rational> = None;
            for sub in tok.split(' ') {
                if sub.is_empty() {
                    continue;
                }
                let ev = parse_token(sub, lineno, col)?;
                if advance.is_none() {
                    advance = Some(ev.duration);
                }
                let onset = clocks[si];
                match ev.kind {
                    TokenKind::Rest => notes.push(NoteEvent {
                        id: 0,
                        onset,
                        duration: ev.duration,
                        midi_pitch: None,
                        voice: v,
                        is_rest: true,
                    }),
                    TokenKind::Note { midi, tie } => match tie {
                        Tie::None => notes.push(NoteEvent {
                            id: 0,
                            onset,
                            duration: ev.duration,
                            midi_pitch: Some(midi),
                            voice: v,
                            is_rest: false,
                        }),
                        Tie::Open => {
                            notes.push(NoteEvent {
                                id: 0,
                                onset,
                                duration: ev.duration,
                                midi_pitch: Some(midi),
                                voice: v,
                                is_rest: false,
                            });
                            open_ties.insert((v, midi), notes.len() - 1);
                        }
                        Tie::Continue | Tie::Close => {
                            if let Some(&i) = open_ties.get(&(v, midi)) {
                                notes[i].duration = notes[i].duration + ev.duration;
                                if tie == Tie::Close {
                                    open_ties.remove(&(v, midi));
                                }
                            } else {
                                // unmatched tie end: keep the note rather than drop it
                                notes.push(NoteEvent {
                                    id: 0,
                                    onset,
                                    duration: ev.duration,
                                    midi_pitch: Some(midi),
                                    voice: v,
                                    is_rest: false,
                                });
                            }
                        }
                    },
                }
            }
            if let Some(d) = advance {
                clocks[si] = clocks[si] + d;
            }
        }
    }

    if spine_is_kern.is_none() {
        return Err(Error::parse(0, "no **kern exclusive interpretation found"));
    }
    let mut score = Score {
        piece_id: piece_id.to_string(),
        notes,
        signatures,
        annotations: vec![],
    };
    score.normalize();
    score.validate()?;
    Ok(score)
}

fn first_kern(flags: &[bool]) -> usize {
    flags.iter().position(|f| *f).unwrap_or(0)
}

#[derive(PartialEq, Clone, Copy)]
enum Tie {
    None,
    Open,
    Continue,
    Close,
}

enum TokenKind {
    Rest,
    Note { midi: u8, tie: Tie },
}

struct ParsedToken {
    duration: Rational,
    kind: TokenKind,
}

/// Parse one note/rest subtoken: recip digits + dots + pitch letters +
/// accidentals, with optional tie marks.
fn parse_token(tok: &str, lineno: usize, col: usize) -> Result<ParsedToken> {
    let mut digits = String::new();
    let mut dots = 0u32;
    let mut letter: Option<char> = None;
    let mut letter_count = 0u32;
    let mut accidental = 0i32;
    let mut is_rest = false;
    let mut tie = Tie::None;

    for ch in tok.chars() {
        match ch {
            '0'..='9' => digits.push(ch),
            '.' => dots += 1,
            'r' => is_rest = true,
            'a'..='g' | 'A'..='G' => {
                match letter {
                    None => {
                        letter = Some(ch);
                        letter_count = 1;
                    }
                    Some(l) if l == ch => letter_count += 1,
                    Some(_) => {
                        return Err(Error::parse(
                            lineno,
                            format!("col {col}: mixed pitch letters in token {tok:?}"),
                        ))
                    }
                }
            }
            '#' => accidental += 1,
            '-' => accidental -= 1,
            '[' => tie = Tie::Open,
            ']' => tie = Tie::Close,
            '_' => tie = Tie::Continue,
            c if IGNORABLE.contains(c) => {}
            c => {
                return Err(Error::parse(
                    lineno,
                    format!("col {col}: unparseable character {c:?} in token {tok:?}"),
                ))
            }
        }
    }

    if digits.is_empty() {
        return Err(Error::parse(
            lineno,
            format!("col {col}: token {tok:?} has no duration"),
        ));
    }
    let recip: i64 = digits
        .parse()
        .map_err(|_| Error::parse(lineno, format!("col {col}: bad duration in {tok:?}")))?;
    if recip == 0 {
        return Err(Error::Unsupported {
            line: lineno,
            msg: format!("col {col}: breve durations not supported ({tok:?})"),
        });
    }
    // recip d -> 4/d quarters; each dot adds half of the previous value
    let mut duration = Rational::new(4, recip);
    let mut add = duration;
    for _ in 0..dots {
        add = add * Rational::new(1, 2);
        duration = duration + add;
    }

    if is_rest {
        return Ok(ParsedToken {
            duration,
            kind: TokenKind::Rest,
        });
    }
    let Some(l) = letter else {
        return Err(Error::parse(
            lineno,
            format!("col {col}: token {tok:?} has neither pitch nor rest"),
        ));
    };
    let step = match l.to_ascii_lowercase() {
        'c' => 0,
        'd' => 2,
        'e' => 4,
        'f' => 5,
        'g' => 7,
        'a' => 9,
        'b' => 11,
        _ => unreachable!(),
    };
    let octave: i32 = if l.is_ascii_lowercase() {
        4 + (letter_count as i32 - 1)
    } else {
        3 - (letter_count as i32 - 1)
    };
    let midi = (octave + 1) * 12 + step + accidental;
    if !(0..=127).contains(&midi) {
        return Err(Error::parse(
            lineno,
            format!("col {col}: pitch out of MIDI range in {tok:?}"),
        ));
    }
    Ok(ParsedToken {
        duration,
        kind: TokenKind::Note { midi: midi as u8, tie },
    })
}

/// `*k[f#c#]` body -> fifths (sharps count positive, flats negative).
fn parse_key_sig(body: &str, lineno: usize) -> Result<i8> {
    let mut fifths: i32 = 0;
    let mut chars = body.chars().peekable();
    while let Some(c) = chars.next() {
        if !c.is_ascii_alphabetic() {
            return Err(Error::parse(lineno, format!("bad key signature body {body:?}")));
        }
        match chars.next() {
            Some('#') => fifths += 1,
            Some('-') => fifths -= 1,
            Some(other) => {
                return Err(Error::parse(
                    lineno,
                    format!("bad accidental {other:?} in key signature"),
                ))
            }
            None if fifths == 0 => {} // lone letter, treat as C major oddity
            None => {}
        }
    }
    if !(-7..=7).contains(&fifths) {
        return Err(Error::parse(lineno, "key signature out of range"));
    }
    Ok(fifths as i8)
}
