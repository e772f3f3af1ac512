//! Layered neighbor sampling for stochastic minibatch training.
//!
//! Hop 1 (adjacent to the seeds) uses the last fanout, the outermost hop the
//! first, so `fanouts[l]` is the cap for encoder layer `l + 1`.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::graph::Adjacency;

/// One message-passing layer's bipartite structure.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    /// Global node ids feeding this layer (sorted, deduplicated).
    pub src_ids: Vec<u32>,
    /// Global node ids produced by this layer; every dst appears in src.
    pub dst_ids: Vec<u32>,
    /// Per dst: positions of its sampled neighbors within `src_ids`.
    pub neighbor_idx: Vec<Vec<u32>>,
    /// Per dst: its own position within `src_ids`.
    pub self_idx: Vec<u32>,
}

/// Sampled computation blocks for one batch; `blocks[0]` is applied first
/// (outermost hop), the last block outputs the seeds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchBlocks {
    pub seeds: Vec<u32>,
    pub blocks: Vec<Block>,
}

impl BatchBlocks {
    /// Nodes whose raw feature rows are required (sources of the first block).
    pub fn input_ids(&self) -> &[u32] {
        match self.blocks.first() {
            Some(b) => &b.src_ids,
            None => &self.seeds,
        }
    }
}

/// Sample up to `fanout` neighbors per hop, without replacement, all
/// neighbors when the degree does not exceed the fanout. `fanouts.len()`
/// hops are sampled; an empty `fanouts` yields zero blocks (seeds only).
pub fn sample_neighbors<R: Rng>(
    adj: &Adjacency,
    seeds: &[u32],
    fanouts: &[usize],
    rng: &mut R,
) -> BatchBlocks {
    let mut blocks: Vec<Block> = Vec::with_capacity(fanouts.len());
    let mut frontier: Vec<u32> = seeds.to_vec();
    // hop 1 uses the last fanout
    for &fanout in fanouts.iter().rev() {
        let dst_ids = frontier.clone();
        let mut sampled: Vec<Vec<u32>> = Vec::with_capacity(dst_ids.len());
        let mut src_set: Vec<u32> = dst_ids.clone();
        for &v in &dst_ids {
            let nbrs = adj.neighbors_of(v as usize);
            let chosen: Vec<u32> = if nbrs.len() <= fanout {
                nbrs.to_vec()
            } else {
                let mut pool: Vec<u32> = nbrs.to_vec();
                pool.partial_shuffle(rng, fanout);
                let mut pick = pool[..fanout].to_vec();
                pick.sort_unstable();
                pick
            };
            src_set.extend_from_slice(&chosen);
            sampled.push(chosen);
        }
        src_set.sort_unstable();
        src_set.dedup();
        let pos = |id: u32| src_set.binary_search(&id).unwrap() as u32;
        let neighbor_idx = sampled
            .iter()
            .map(|ns| ns.iter().map(|&j| pos(j)).collect())
            .collect();
        let self_idx = dst_ids.iter().map(|&v| pos(v)).collect();
        frontier = src_set.clone();
        blocks.push(Block {
            src_ids: src_set,
            dst_ids,
            neighbor_idx,
            self_idx,
        });
    }
    blocks.reverse();
    BatchBlocks {
        seeds: seeds.to_vec(),
        blocks,
    }
}

/// Full-neighborhood blocks (no fanout cap), used at inference.
pub fn full_blocks(adj: &Adjacency, seeds: &[u32], layers: usize) -> BatchBlocks {
    // the rng is never consulted when every neighborhood fits the fanout
    let mut rng = rand::rngs::mock::StepRng::new(0, 1);
    sample_neighbors(adj, seeds, &vec![usize::MAX; layers], &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EdgeList, EdgeTag};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn path_graph(n: usize) -> Adjacency {
        let pairs = (0..n as u32 - 1).map(|i| (i, i + 1, EdgeTag::Cons)).collect();
        Adjacency::from_edges(n, &EdgeList { pairs }).unwrap()
    }

    #[test]
    fn full_fanout_covers_two_hops() {
        let adj = path_graph(6);
        let b = full_blocks(&adj, &[3], 2);
        assert_eq!(b.blocks.len(), 2);
        assert_eq!(b.input_ids(), &[1, 2, 3, 4, 5]);
        assert_eq!(b.blocks[1].dst_ids, vec![3]);
        // every dst of a layer appears among its sources
        for blk in &b.blocks {
            for d in &blk.dst_ids {
                assert!(blk.src_ids.contains(d));
            }
        }
    }

    #[test]
    fn isolated_seed_stays_alone() {
        let adj = Adjacency::from_edges(3, &EdgeList::default()).unwrap();
        let b = full_blocks(&adj, &[1], 2);
        assert_eq!(b.input_ids(), &[1]);
        assert!(b.blocks[0].neighbor_idx[0].is_empty());
    }

    #[test]
    fn deterministic_under_seed() {
        let adj = path_graph(30);
        let seeds = vec![5, 14, 22];
        let a = sample_neighbors(&adj, &seeds, &[1, 2], &mut ChaCha8Rng::seed_from_u64(9));
        let b = sample_neighbors(&adj, &seeds, &[1, 2], &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn fanout_caps_neighbor_count() {
        // star graph: node 0 connected to 1..=9
        let pairs = (1..10u32).map(|i| (0, i, EdgeTag::On)).collect();
        let adj = Adjacency::from_edges(10, &EdgeList { pairs }).unwrap();
        let b = sample_neighbors(&adj, &[0], &[3], &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(b.blocks[0].neighbor_idx[0].len(), 3);
    }
}
