use std::ops::Range;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MergePolicyKind {
    /// Size-tiered merging decided per tree.
    Tiering,
    /// The tree follows its group leader's merge decisions.
    CorrelatedFollower,
    /// Never merges.
    None,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MergePolicy {
    pub kind: MergePolicyKind,
    pub size_ratio: f64,
    pub max_mergeable_bytes: u64,
}

impl Default for MergePolicy {
    fn default() -> Self {
        MergePolicy {
            kind: MergePolicyKind::Tiering,
            size_ratio: 1.2,
            max_mergeable_bytes: 1 << 30,
        }
    }
}

impl MergePolicy {
    pub fn tiering(size_ratio: f64, max_mergeable_bytes: u64) -> Self {
        MergePolicy {
            kind: MergePolicyKind::Tiering,
            size_ratio,
            max_mergeable_bytes,
        }
    }

    pub fn none() -> Self {
        MergePolicy {
            kind: MergePolicyKind::None,
            ..Default::default()
        }
    }

    /// Tiering rule over component sizes listed oldest first. Returns the
    /// range to merge, which always extends to the newest component: the
    /// oldest component `i` whose younger components sum to more than
    /// `size_ratio * size[i]`. Components above `max_mergeable_bytes` are
    /// never selected.
    pub fn pick_tiering(&self, sizes_oldest_first: &[u64]) -> Option<Range<usize>> {
        let n = sizes_oldest_first.len();
        let start = sizes_oldest_first
            .iter()
            .rposition(|&s| s > self.max_mergeable_bytes)
            .map_or(0, |i| i + 1);
        if n < start + 2 {
            return None;
        }
        let mut younger: u64 = sizes_oldest_first[start + 1..].iter().sum();
        for i in start..n - 1 {
            if younger as f64 > self.size_ratio * sizes_oldest_first[i] as f64 {
                return Some(i..n);
            }
            younger -= sizes_oldest_first[i + 1];
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> MergePolicy {
        MergePolicy::tiering(1.2, 1000)
    }

    #[test]
    fn single_component_never_merges() {
        assert_eq!(p().pick_tiering(&[100]), None);
        assert_eq!(p().pick_tiering(&[]), None);
    }

    #[test]
    fn younger_total_above_ratio_merges_all() {
        // 70 + 60 = 130 > 1.2 * 100
        assert_eq!(p().pick_tiering(&[100, 70, 60]), Some(0..3));
    }

    #[test]
    fn younger_total_below_ratio_does_not_merge() {
        // 110 < 120, and 60 is not > 1.2 * 50
        assert_eq!(p().pick_tiering(&[100, 50, 60]), None);
    }

    #[test]
    fn suffix_is_chosen_when_oldest_too_big() {
        // 300 vs 1.2*1000 fails; 100+150 > 1.2*100
        assert_eq!(
            MergePolicy::tiering(1.2, 10_000).pick_tiering(&[1000, 100, 100, 150]),
            Some(1..4)
        );
    }

    #[test]
    fn oversized_components_are_excluded() {
        assert_eq!(p().pick_tiering(&[5000, 10, 20]), Some(1..3));
        assert_eq!(p().pick_tiering(&[10, 5000, 20]), None);
    }
}
