//! Location-only baseline: k-nearest-neighbour voting over beam labels by
//! Euclidean distance on the MS plane coordinates.

use crate::geometry::Vec2;

#[derive(Debug, Clone)]
pub struct LocationKnn {
    k: usize,
    num_classes: usize,
    points: Vec<Vec2>,
    labels: Vec<usize>,
    /// Classes ordered by descending training frequency, then index; used to
    /// complete rankings past the voted classes.
    freq_order: Vec<usize>,
}

impl LocationKnn {
    pub fn fit(points: Vec<Vec2>, labels: Vec<usize>, num_classes: usize, k: usize) -> Self {
        assert!(!points.is_empty(), "empty training set");
        assert_eq!(points.len(), labels.len());
        assert!(k >= 1);
        let mut freq = vec![0usize; num_classes];
        for &l in &labels {
            freq[l] += 1;
        }
        let mut freq_order: Vec<usize> = (0..num_classes).collect();
        freq_order.sort_by(|&a, &b| freq[b].cmp(&freq[a]).then(a.cmp(&b)));
        LocationKnn { k, num_classes, points, labels, freq_order }
    }

    /// All classes ranked: voted classes by (votes, nearest distance, index),
    /// the rest by training frequency.
    pub fn rank(&self, query: Vec2) -> Vec<usize> {
        let mut dist: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let dx = p.x - query.x;
                let dy = p.y - query.y;
                (dx * dx + dy * dy, i)
            })
            .collect();
        let k = self.k.min(dist.len());
        dist.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut neighbours = dist[..k].to_vec();
        neighbours.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let mut votes = vec![0usize; self.num_classes];
        let mut nearest = vec![f64::INFINITY; self.num_classes];
        for &(d2, idx) in &neighbours {
            let label = self.labels[idx];
            votes[label] += 1;
            if d2 < nearest[label] {
                nearest[label] = d2;
            }
        }
        let mut voted: Vec<usize> = (0..self.num_classes).filter(|&c| votes[c] > 0).collect();
        voted.sort_by(|&a, &b| {
            votes[b]
                .cmp(&votes[a])
                .then(nearest[a].total_cmp(&nearest[b]))
                .then(a.cmp(&b))
        });
        let mut ranking = voted.clone();
        for &c in &self.freq_order {
            if votes[c] == 0 {
                ranking.push(c);
            }
        }
        ranking
    }
}
