//! Pitch-class set descriptors: interval vectors and chord-template flags.

/// A pitch-class set as a 12-bit mask (bit k = pitch class k present).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PcSet(pub u16);

impl PcSet {
    pub fn empty() -> Self {
        PcSet(0)
    }

    pub fn from_classes<I: IntoIterator<Item = u8>>(iter: I) -> Self {
        let mut mask = 0u16;
        for pc in iter {
            debug_assert!(pc < 12);
            mask |= 1 << (pc % 12);
        }
        PcSet(mask)
    }

    pub fn contains(&self, pc: u8) -> bool {
        self.0 >> (pc % 12) & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn classes(&self) -> impl Iterator<Item = u8> + '_ {
        (0u8..12).filter(|&pc| self.contains(pc))
    }

    fn transposed(&self, by: u8) -> Self {
        let m = self.0 & 0xFFF;
        PcSet(((m << by) | (m >> (12 - by))) & 0xFFF)
    }
}

/// Count of unordered pairs per interval class 1..=6
/// (interval class = min(d, 12 - d)).
pub fn interval_vector(pcset: PcSet) -> [u32; 6] {
    let mut iv = [0u32; 6];
    let classes: Vec<u8> = pcset.classes().collect();
    for a in 0..classes.len() {
        for b in a + 1..classes.len() {
            let d = (classes[b] - classes[a]) % 12;
            let ic = d.min(12 - d);
            if ic > 0 {
                iv[ic as usize - 1] += 1;
            }
        }
    }
    iv
}

/// Chord templates checked for transpositional equivalence, in flag order.
pub const CHORD_TEMPLATES: [(&str, &[u8]); 9] = [
    ("major", &[0, 4, 7]),
    ("minor", &[0, 3, 7]),
    ("diminished", &[0, 3, 6]),
    ("augmented", &[0, 4, 8]),
    ("dominant7", &[0, 4, 7, 10]),
    ("major7", &[0, 4, 7, 11]),
    ("minor7", &[0, 3, 7, 10]),
    ("half_diminished7", &[0, 3, 6, 10]),
    ("diminished7", &[0, 3, 6, 9]),
];

/// Flag k is true iff `pcset` is some transposition of template k.
pub fn chord_template_flags(pcset: PcSet) -> [bool; 9] {
    let mut flags = [false; 9];
    for (k, (_, tpl)) in CHORD_TEMPLATES.iter().enumerate() {
        let tset = PcSet::from_classes(tpl.iter().copied());
        flags[k] = (0..12).any(|t| pcset.transposed(t) == tset);
    }
    flags
}
