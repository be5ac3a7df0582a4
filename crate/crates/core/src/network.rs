//! Network model: how the channels of the network-wide signal are split
//! across sensor nodes, and how the stacked filter is partitioned to match.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{DasfError, Result};

/// Contiguous block partition of a dimension. Knows the size and offset of
/// every block; blocks are ordered and cover `[0, total)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl Partition {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(DasfError::InvalidModel("partition needs at least one block".into()));
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(DasfError::InvalidModel("partition blocks must be non-empty".into()));
        }
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        let mut acc = 0;
        for &s in &sizes {
            offsets.push(acc);
            acc += s;
        }
        offsets.push(acc);
        Ok(Self { sizes, offsets })
    }

    pub fn block_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn total(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn size(&self, k: usize) -> usize {
        self.sizes[k]
    }

    pub fn range(&self, k: usize) -> Range<usize> {
        self.offsets[k]..self.offsets[k + 1]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn iter_ranges(&self) -> impl Iterator<Item = (usize, Range<usize>)> + '_ {
        (0..self.block_count()).map(|k| (k, self.range(k)))
    }
}

/// A fully-connected sensor network: `K` nodes, node `k` owning `M_k`
/// contiguous channels of the `M`-channel network-wide signal, cooperating to
/// compute an `M × Q` spatial filter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkModel {
    channels: Partition,
    outputs: usize,
}

impl NetworkModel {
    /// Build a network from per-node channel counts `M_k` and the filter
    /// output dimension `Q`. Requires `Q ≥ 1` and `Q < Σ M_k` so that
    /// network-wide compression is meaningful.
    pub fn new(channels_per_node: &[usize], outputs: usize) -> Result<Self> {
        let channels = Partition::new(channels_per_node.to_vec())?;
        if outputs == 0 {
            return Err(DasfError::InvalidModel("output dimension Q must be at least 1".into()));
        }
        if outputs >= channels.total() {
            return Err(DasfError::InvalidModel(format!(
                "output dimension Q={} must be smaller than total channels M={}",
                outputs,
                channels.total()
            )));
        }
        Ok(Self { channels, outputs })
    }

    pub fn node_count(&self) -> usize {
        self.channels.block_count()
    }

    /// Total channel count M = Σ M_k.
    pub fn total_channels(&self) -> usize {
        self.channels.total()
    }

    /// Filter output dimension Q.
    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn node_channels(&self, k: usize) -> usize {
        self.channels.size(k)
    }

    pub fn channel_range(&self, k: usize) -> Range<usize> {
        self.channels.range(k)
    }

    pub fn partition(&self) -> &Partition {
        &self.channels
    }

    /// The per-node channel ranges, ordered by node index. Ranges are
    /// disjoint, contiguous and cover `[0, M)`.
    pub fn partition_channels(&self) -> Vec<(usize, Range<usize>)> {
        self.channels.iter_ranges().collect()
    }

    /// Dimension of the local problem at updating node `q`:
    /// `M_q + (K − 1)·Q`.
    pub fn local_dim(&self, q: usize) -> usize {
        self.node_channels(q) + (self.node_count() - 1) * self.outputs
    }

    /// Block sizes of the local problem at updating node `q`: node q's own
    /// channels first, then one Q-sized block per other node in ascending
    /// node order.
    pub fn local_partition(&self, q: usize) -> Partition {
        let mut sizes = Vec::with_capacity(self.node_count());
        sizes.push(self.node_channels(q));
        for _ in 0..self.node_count() - 1 {
            sizes.push(self.outputs);
        }
        Partition::new(sizes).expect("local partition is non-empty by construction")
    }

    /// Original node index of each local block at updating node `q`:
    /// `[q, 0, 1, …, q−1, q+1, …, K−1]`.
    pub fn local_block_nodes(&self, q: usize) -> Vec<usize> {
        let mut nodes = Vec::with_capacity(self.node_count());
        nodes.push(q);
        nodes.extend((0..self.node_count()).filter(|&k| k != q));
        nodes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_node_covers_all_channels() {
        let net = NetworkModel::new(&[4], 1).unwrap();
        assert_eq!(net.partition_channels(), vec![(0, 0..4)]);
    }

    #[test]
    fn uniform_three_node_split() {
        let net = NetworkModel::new(&[2, 2, 2], 1).unwrap();
        assert_eq!(
            net.partition_channels(),
            vec![(0, 0..2), (1, 2..4), (2, 4..6)]
        );
    }

    #[test]
    fn ten_node_split_places_seventh_node() {
        // K=10, M_k=10: the seventh node (index 6) owns channels 60..70.
        let net = NetworkModel::new(&[10; 10], 1).unwrap();
        assert_eq!(net.channel_range(6), 60..70);
        assert_eq!(net.total_channels(), 100);
    }

    #[test]
    fn partition_is_disjoint_and_complete() {
        let net = NetworkModel::new(&[3, 1, 5, 2], 2).unwrap();
        let ranges = net.partition_channels();
        let mut covered = vec![false; net.total_channels()];
        for (_, r) in &ranges {
            for i in r.clone() {
                assert!(!covered[i], "channel {i} covered twice");
                covered[i] = true;
            }
        }
        assert!(covered.iter().all(|&c| c));
    }

    #[test]
    fn rejects_degenerate_models() {
        assert!(NetworkModel::new(&[], 1).is_err());
        assert!(NetworkModel::new(&[2, 0], 1).is_err());
        assert!(NetworkModel::new(&[2, 2], 0).is_err());
        // Q must be strictly smaller than M.
        assert!(NetworkModel::new(&[2, 2], 4).is_err());
    }

    #[test]
    fn local_dims_and_block_nodes() {
        let net = NetworkModel::new(&[2, 2, 2], 1).unwrap();
        assert_eq!(net.local_dim(1), 2 + 2);
        assert_eq!(net.local_block_nodes(1), vec![1, 0, 2]);
        let local = net.local_partition(1);
        assert_eq!(local.sizes(), &[2, 1, 1]);
    }
}
