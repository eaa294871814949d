use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};

use super::Palette;

pub const DEFAULT_GROUPING_THRESHOLD: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColorGroup {
    /// Sorted ascending.
    pub members: Vec<[u8; 3]>,
    /// Rounded unweighted mean of the members.
    pub centroid: [u8; 3],
    pub total_frequency: u64,
}

impl ColorGroup {
    fn from_members(mut members: Vec<[u8; 3]>, total_frequency: u64) -> Self {
        members.sort_unstable();
        let n = members.len() as u64;
        let centroid = [0, 1, 2].map(|c| {
            let sum: u64 = members.iter().map(|m| m[c] as u64).sum();
            ((sum * 2 + n) / (2 * n)) as u8
        });
        Self {
            members,
            centroid,
            total_frequency,
        }
    }
}

pub fn distance2(a: [u8; 3], b: [u8; 3]) -> u32 {
    (0..3).map(|c| (a[c] as i32 - b[c] as i32).pow(2) as u32).sum()
}

/// Whether two colors at squared distance `d2` are closer than `threshold`.
fn within(d2: u32, threshold: f64) -> bool {
    (d2 as f64) < threshold * threshold
}

struct Cluster {
    members: Vec<[u8; 3]>,
    frequency: u64,
    /// Smallest member; used for tie-breaking.
    key: [u8; 3],
    generation: u32,
    alive: bool,
    /// Complete-linkage squared distance to every cluster that could still be
    /// merged with this one. Pairs at or beyond the threshold never merge, so
    /// they are not tracked.
    neighbors: BTreeMap<usize, u32>,
}

type HeapEntry = Reverse<(u32, [u8; 3], [u8; 3], usize, usize, u32, u32)>;

fn entry(clusters: &[Cluster], a: usize, b: usize, d2: u32) -> HeapEntry {
    let (a, b) = if clusters[a].key <= clusters[b].key {
        (a, b)
    } else {
        (b, a)
    };
    Reverse((
        d2,
        clusters[a].key,
        clusters[b].key,
        a,
        b,
        clusters[a].generation,
        clusters[b].generation,
    ))
}

/// Complete-linkage agglomerative clustering. The closest pair of groups
/// (largest member distance) merges first, ties broken by the groups'
/// smallest colors; merging stops when every remaining pair has some
/// members at distance `>= threshold`.
///
/// Groups come back ordered by descending total frequency, then by their
/// smallest color.
pub fn group_colors(palette: &Palette, threshold: f64) -> Vec<ColorGroup> {
    assert!(threshold > 0.0, "grouping threshold must be positive");
    let entries = palette.entries();
    let mut clusters: Vec<Cluster> = entries
        .iter()
        .map(|e| Cluster {
            members: vec![e.color],
            frequency: e.frequency,
            key: e.color,
            generation: 0,
            alive: true,
            neighbors: BTreeMap::new(),
        })
        .collect();

    for i in 0..entries.len() {
        for j in i + 1..entries.len() {
            let d2 = distance2(entries[i].color, entries[j].color);
            if within(d2, threshold) {
                clusters[i].neighbors.insert(j, d2);
                clusters[j].neighbors.insert(i, d2);
            }
        }
    }

    let mut heap: BinaryHeap<HeapEntry> = BinaryHeap::new();
    for i in 0..clusters.len() {
        for (&j, &d2) in &clusters[i].neighbors {
            if i < j {
                heap.push(entry(&clusters, i, j, d2));
            }
        }
    }

    while let Some(Reverse((_, _, _, a, b, ga, gb))) = heap.pop() {
        if !clusters[a].alive || !clusters[b].alive || clusters[a].generation != ga || clusters[b].generation != gb {
            continue;
        }
        // Merge b into a; a keeps only neighbors shared with b.
        let b_neighbors = std::mem::take(&mut clusters[b].neighbors);
        let a_neighbors = std::mem::take(&mut clusters[a].neighbors);
        let mut merged = BTreeMap::new();
        for (&c, &da) in &a_neighbors {
            if c == b {
                continue;
            }
            if let Some(&db) = b_neighbors.get(&c) {
                merged.insert(c, da.max(db));
            }
        }
        for &c in a_neighbors.keys().chain(b_neighbors.keys()) {
            if c != a && c != b {
                clusters[c].neighbors.remove(&a);
                clusters[c].neighbors.remove(&b);
            }
        }
        let moved = std::mem::take(&mut clusters[b].members);
        clusters[b].alive = false;
        let fb = clusters[b].frequency;
        let kb = clusters[b].key;
        let ca = &mut clusters[a];
        ca.members.extend(moved);
        ca.frequency += fb;
        ca.key = ca.key.min(kb);
        ca.generation += 1;
        for (&c, &d2) in &merged {
            clusters[c].neighbors.insert(a, d2);
        }
        clusters[a].neighbors = merged;
        let fresh: Vec<HeapEntry> = clusters[a]
            .neighbors
            .iter()
            .map(|(&c, &d2)| entry(&clusters, a, c, d2))
            .collect();
        heap.extend(fresh);
    }

    let mut groups: Vec<ColorGroup> = clusters
        .into_iter()
        .filter(|c| c.alive)
        .map(|c| ColorGroup::from_members(c.members, c.frequency))
        .collect();
    groups.sort_by(|x, y| {
        y.total_frequency
            .cmp(&x.total_frequency)
            .then_with(|| x.members[0].cmp(&y.members[0]))
    });
    groups
}
