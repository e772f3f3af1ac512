//! Score graph construction: the three temporal edge sets over note/rest
//! nodes, a symmetric CSR adjacency, and the binary graph file format.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureManifest;
use crate::rational::Rational;
use crate::score::Score;

const GRAPH_MAGIC: &[u8; 4] = b"SGGR";
const GRAPH_VERSION: u16 = 1;

/// Why an edge exists. The model is homogeneous; tags are diagnostic only.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeTag {
    /// Same onset.
    On = 0,
    /// Consecutive: `on(i) + dur(i) = on(j)`.
    Cons = 1,
    /// Overlap: `on(i) < on(j) < on(i) + dur(i)`.
    Dur = 2,
}

impl EdgeTag {
    fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(EdgeTag::On),
            1 => Ok(EdgeTag::Cons),
            2 => Ok(EdgeTag::Dur),
            _ => Err(Error::Format(format!("invalid edge tag {v}"))),
        }
    }
}

/// Undirected edges as unordered pairs with a single tag each.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EdgeList {
    pub pairs: Vec<(u32, u32, EdgeTag)>,
}

/// Build the union of the three edge sets with exact-rational predicates.
/// A pair qualifying for several sets is stored once, tag priority
/// ON > CONS > DUR. Rests participate exactly like notes.
pub fn build_edges(score: &Score) -> EdgeList {
    let notes = &score.notes;
    let n = notes.len();
    // onsets are sorted; index ranges of equal onset
    let mut by_onset: BTreeMap<Rational, Vec<u32>> = BTreeMap::new();
    for note in notes {
        by_onset.entry(note.onset).or_default().push(note.id as u32);
    }
    let mut edges: BTreeMap<(u32, u32), EdgeTag> = BTreeMap::new();
    let mut add = |i: u32, j: u32, tag: EdgeTag| {
        if i == j {
            return;
        }
        let key = (i.min(j), i.max(j));
        edges
            .entry(key)
            .and_modify(|t| {
                if tag < *t {
                    *t = tag;
                }
            })
            .or_insert(tag);
    };

    // E_on: clique within each onset group
    for ids in by_onset.values() {
        for a in 0..ids.len() {
            for b in a + 1..ids.len() {
                add(ids[a], ids[b], EdgeTag::On);
            }
        }
    }
    // E_cons and E_dur via onset lookups
    for i in 0..n {
        let end = notes[i].end();
        if let Some(ids) = by_onset.get(&end) {
            for &j in ids {
                add(notes[i].id as u32, j, EdgeTag::Cons);
            }
        }
        for (_, ids) in by_onset.range((
            std::ops::Bound::Excluded(notes[i].onset),
            std::ops::Bound::Excluded(end),
        )) {
            for &j in ids {
                add(notes[i].id as u32, j, EdgeTag::Dur);
            }
        }
    }
    EdgeList {
        pairs: edges.into_iter().map(|((i, j), t)| (i, j, t)).collect(),
    }
}

/// Symmetric CSR adjacency with both directions materialized, neighbor lists
/// sorted ascending, tags parallel to neighbors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Adjacency {
    pub n: usize,
    pub offsets: Vec<u32>,
    pub neighbors: Vec<u32>,
    pub tags: Vec<u8>,
}

impl Adjacency {
    pub fn from_edges(n: usize, edges: &EdgeList) -> Result<Self> {
        let mut deg = vec![0u32; n];
        for &(i, j, _) in &edges.pairs {
            if i as usize >= n || j as usize >= n || i == j {
                return Err(Error::Data(format!("invalid edge ({i},{j}) for n={n}")));
            }
            deg[i as usize] += 1;
            deg[j as usize] += 1;
        }
        let mut offsets = vec![0u32; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + deg[i];
        }
        let total = offsets[n] as usize;
        let mut neighbors = vec![0u32; total];
        let mut tags = vec![0u8; total];
        let mut cursor: Vec<u32> = offsets[..n].to_vec();
        let push = |cursor: &mut Vec<u32>, neighbors: &mut Vec<u32>, tags: &mut Vec<u8>, i: u32, j: u32, t: EdgeTag| {
            let c = cursor[i as usize] as usize;
            neighbors[c] = j;
            tags[c] = t as u8;
            cursor[i as usize] += 1;
        };
        // edges arrive sorted by (i, j); inserting both directions keeps each
        // row sorted except for the reversed direction, so sort rows after
        for &(i, j, t) in &edges.pairs {
            push(&mut cursor, &mut neighbors, &mut tags, i, j, t);
            push(&mut cursor, &mut neighbors, &mut tags, j, i, t);
        }
        for i in 0..n {
            let (s, e) = (offsets[i] as usize, offsets[i + 1] as usize);
            let mut row: Vec<(u32, u8)> = neighbors[s..e]
                .iter()
                .copied()
                .zip(tags[s..e].iter().copied())
                .collect();
            row.sort_unstable();
            for (k, (nb, tg)) in row.into_iter().enumerate() {
                neighbors[s + k] = nb;
                tags[s + k] = tg;
            }
        }
        Ok(Adjacency {
            n,
            offsets,
            neighbors,
            tags,
        })
    }

    pub fn neighbors_of(&self, i: usize) -> &[u32] {
        &self.neighbors[self.offsets[i] as usize..self.offsets[i + 1] as usize]
    }

    pub fn degree(&self, i: usize) -> usize {
        (self.offsets[i + 1] - self.offsets[i]) as usize
    }

    /// Undirected edge count.
    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| {
            self.neighbors_of(i)
                .iter()
                .all(|&j| self.neighbors_of(j as usize).binary_search(&(i as u32)).is_ok())
        })
    }
}

/// A complete per-piece graph: adjacency, features, labels, and the
/// onset/beat group maps used for aggregated evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreGraph {
    pub piece_id: String,
    pub adj: Adjacency,
    /// Row-major `n x d`.
    pub features: Vec<f32>,
    pub d: usize,
    pub manifest: FeatureManifest,
    pub labels: Vec<u8>,
    pub onset_group: Vec<u32>,
    pub beat_group: Vec<u32>,
}

/// Assemble a `ScoreGraph`, computing onset and beat groups from the score.
pub fn to_graph(
    score: &Score,
    edges: &EdgeList,
    features: Vec<f32>,
    manifest: FeatureManifest,
    labels: Vec<u8>,
) -> Result<ScoreGraph> {
    let n = score.notes.len();
    let d = manifest.len();
    if features.len() != n * d {
        return Err(Error::Dimension(format!(
            "feature matrix {} != n*d = {}*{}",
            features.len(),
            n,
            d
        )));
    }
    if labels.len() != n {
        return Err(Error::Dimension(format!("labels {} != n {}", labels.len(), n)));
    }
    let adj = Adjacency::from_edges(n, edges)?;
    let mut onset_group = vec![0u32; n];
    let mut beat_group = vec![0u32; n];
    let mut onset_ids: BTreeMap<Rational, u32> = BTreeMap::new();
    let mut beat_ids: BTreeMap<Rational, u32> = BTreeMap::new();
    for note in &score.notes {
        let next = onset_ids.len() as u32;
        let og = *onset_ids.entry(note.onset).or_insert(next);
        onset_group[note.id] = og;
        let beat = score.beat_of(note.onset)?;
        let next = beat_ids.len() as u32;
        let bg = *beat_ids.entry(beat.beat_start).or_insert(next);
        beat_group[note.id] = bg;
    }
    Ok(ScoreGraph {
        piece_id: score.piece_id.clone(),
        adj,
        features,
        d,
        manifest,
        labels,
        onset_group,
        beat_group,
    })
}

#[derive(Serialize, Deserialize)]
struct GraphTrailer {
    piece_id: String,
    feature_manifest: FeatureManifest,
}

impl ScoreGraph {
    /// Write the little-endian binary graph file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        w.write_all(GRAPH_MAGIC)?;
        w.write_all(&GRAPH_VERSION.to_le_bytes())?;
        let n = self.adj.n as u32;
        let d = self.d as u32;
        let m = self.adj.num_edges() as u64;
        w.write_all(&n.to_le_bytes())?;
        w.write_all(&d.to_le_bytes())?;
        w.write_all(&m.to_le_bytes())?;
        for v in &self.adj.offsets {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.adj.neighbors {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.adj.tags)?;
        for v in &self.features {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.labels)?;
        for v in &self.onset_group {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.beat_group {
            w.write_all(&v.to_le_bytes())?;
        }
        let trailer = serde_json::to_vec(&GraphTrailer {
            piece_id: self.piece_id.clone(),
            feature_manifest: self.manifest.clone(),
        })?;
        w.write_all(&(trailer.len() as u32).to_le_bytes())?;
        w.write_all(&trailer)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        let mut c = Cursor::new(&buf, path);
        let magic = c.bytes(4)?;
        if magic != GRAPH_MAGIC {
            return Err(Error::Format(format!(
                "{}: bad magic bytes (not a graph file)",
                path.display()
            )));
        }
        let version = u16::from_le_bytes(c.bytes(2)?.try_into().unwrap());
        if version != GRAPH_VERSION {
            return Err(Error::Format(format!(
                "{}: unsupported graph version {version}",
                path.display()
            )));
        }
        let n = c.u32()? as usize;
        let d = c.u32()? as usize;
        let m = u64::from_le_bytes(c.bytes(8)?.try_into().unwrap()) as usize;
        let offsets = c.u32_vec(n + 1)?;
        let neighbors = c.u32_vec(2 * m)?;
        let tags = c.bytes(2 * m)?.to_vec();
        for &t in &tags {
            EdgeTag::from_u8(t)?;
        }
        let mut features = Vec::with_capacity(n * d);
        for _ in 0..n * d {
            features.push(f32::from_le_bytes(c.bytes(4)?.try_into().unwrap()));
        }
        let labels = c.bytes(n)?.to_vec();
        let onset_group = c.u32_vec(n)?;
        let beat_group = c.u32_vec(n)?;
        let tlen = c.u32()? as usize;
        let trailer: GraphTrailer = serde_json::from_slice(c.bytes(tlen)?)?;
        if trailer.feature_manifest.len() != d {
            return Err(Error::Format(format!(
                "{}: manifest width {} != d {}",
                path.display(),
                trailer.feature_manifest.len(),
                d
            )));
        }
        let adj = Adjacency {
            n,
            offsets,
            neighbors,
            tags,
        };
        if adj.offsets[n] as usize != 2 * m {
            return Err(Error::Format(format!(
                "{}: CSR offsets inconsistent with edge count",
                path.display()
            )));
        }
        Ok(ScoreGraph {
            piece_id: trailer.piece_id,
            adj,
            features,
            d,
            manifest: trailer.feature_manifest,
            labels,
            onset_group,
            beat_group,
        })
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8], path: &'a Path) -> Self {
        Cursor { buf, pos: 0, path }
    }

    fn bytes(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.pos + len > self.buf.len() {
            return Err(Error::Format(format!(
                "{}: truncated file (wanted {} bytes at {})",
                self.path.display(),
                len,
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    fn u32_vec(&mut self, len: usize) -> Result<Vec<u32>> {
        let raw = self.bytes(4 * len)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Several per-piece graphs merged as a disjoint union for training.
/// Group ids are offset so they stay unique across pieces.
#[derive(Clone, Debug)]
pub struct MergedCorpus {
    pub adj: Adjacency,
    /// Row-major `n x d`, widened to f64 for the model.
    pub features: Vec<f64>,
    pub d: usize,
    pub labels: Vec<u8>,
    pub onset_group: Vec<u32>,
    pub beat_group: Vec<u32>,
    /// Piece index per node.
    pub piece_of: Vec<u32>,
    pub piece_ids: Vec<String>,
    /// First node id of each piece, plus total n at the end.
    pub node_offsets: Vec<usize>,
}

pub fn disjoint_union(graphs: &[&ScoreGraph]) -> Result<MergedCorpus> {
    if graphs.is_empty() {
        return Err(Error::Data("cannot merge an empty corpus".into()));
    }
    let d = graphs[0].d;
    for g in graphs {
        if g.d != d {
            return Err(Error::Dimension(format!(
                "piece {:?} has d={}, expected {}",
                g.piece_id, g.d, d
            )));
        }
    }
    let total: usize = graphs.iter().map(|g| g.adj.n).sum();
    let mut adj = Adjacency {
        n: total,
        offsets: vec![0u32; total + 1],
        neighbors: Vec::new(),
        tags: Vec::new(),
    };
    let mut features = Vec::with_capacity(total * d);
    let mut labels = Vec::with_capacity(total);
    let mut onset_group = Vec::with_capacity(total);
    let mut beat_group = Vec::with_capacity(total);
    let mut piece_of = Vec::with_capacity(total);
    let mut node_offsets = vec![0usize];
    let (mut node_off, mut og_off, mut bg_off) = (0u32, 0u32, 0u32);
    for (pi, g) in graphs.iter().enumerate() {
        // offsets are cumulative over the whole merged neighbor array
        let base = adj.neighbors.len() as u32;
        for i in 0..g.adj.n {
            adj.offsets[node_off as usize + i + 1] = base + g.adj.offsets[i + 1];
        }
        adj.neighbors
            .extend(g.adj.neighbors.iter().map(|&j| j + node_off));
        adj.tags.extend_from_slice(&g.adj.tags);
        features.extend(g.features.iter().map(|&v| v as f64));
        labels.extend_from_slice(&g.labels);
        onset_group.extend(g.onset_group.iter().map(|&v| v + og_off));
        beat_group.extend(g.beat_group.iter().map(|&v| v + bg_off));
        piece_of.extend(std::iter::repeat(pi as u32).take(g.adj.n));
        og_off += g.onset_group.iter().copied().max().map_or(0, |m| m + 1);
        bg_off += g.beat_group.iter().copied().max().map_or(0, |m| m + 1);
        node_off += g.adj.n as u32;
        node_offsets.push(node_off as usize);
    }
    Ok(MergedCorpus {
        adj,
        features,
        d,
        labels,
        onset_group,
        beat_group,
        piece_of,
        piece_ids: graphs.iter().map(|g| g.piece_id.clone()).collect(),
        node_offsets,
    })
}
