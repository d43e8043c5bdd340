//! Virtual phones: mean-pooled segment embeddings grouped by a single-pass
//! threshold procedure that grows clusters around running centroids.

use crate::error::{Error, Result};
use crate::numerics::{dot, norm, Matrix};
use crate::segmentation::Segment;

/// Cluster id reserved for segments whose pooled embedding is all zeros.
pub const ZERO_CLUSTER: u32 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    /// Unit-norm centroids; centroid `c` belongs to cluster id `c + 1`.
    pub centroids: Vec<Vec<f64>>,
    pub member_counts: Vec<usize>,
    pub threshold: f64,
    sums: Vec<Vec<f64>>,
}

impl ClusterModel {
    pub fn new(threshold: f64) -> Self {
        Self {
            centroids: Vec::new(),
            member_counts: Vec::new(),
            threshold,
            sums: Vec::new(),
        }
    }

    pub fn num_clusters(&self) -> usize {
        self.centroids.len()
    }

    /// Assigns one embedding, updating or opening a cluster.
    pub fn assign(&mut self, e: &[f64]) -> u32 {
        let n = norm(e);
        if n == 0.0 {
            return ZERO_CLUSTER;
        }
        let mut best: Option<(usize, f64)> = None;
        for (c, centroid) in self.centroids.iter().enumerate() {
            let cos = dot(e, centroid) / n;
            // strict comparison keeps the lowest id on ties
            if best.map_or(true, |(_, b)| cos > b) {
                best = Some((c, cos));
            }
        }
        match best {
            Some((c, cos)) if cos >= self.threshold => {
                for (s, &v) in self.sums[c].iter_mut().zip(e) {
                    *s += v;
                }
                let sn = norm(&self.sums[c]);
                self.centroids[c] = self.sums[c].iter().map(|v| v / sn).collect();
                self.member_counts[c] += 1;
                c as u32 + 1
            }
            _ => {
                self.sums.push(e.to_vec());
                self.centroids.push(e.iter().map(|v| v / n).collect());
                self.member_counts.push(1);
                self.centroids.len() as u32
            }
        }
    }
}

/// Mean of rows `[start, end)`, length-normalized; zero stays zero.
pub fn segment_embedding(z: &Matrix<f32>, seg: &Segment) -> Result<Vec<f64>> {
    if seg.start_frame >= seg.end_frame || seg.end_frame > z.rows() {
        return Err(Error::Range {
            start: seg.start_frame,
            end: seg.end_frame,
            frames: z.rows(),
        });
    }
    let mut mean = vec![0.0f64; z.cols()];
    for i in seg.start_frame..seg.end_frame {
        for (m, &v) in mean.iter_mut().zip(z.row(i)) {
            *m += v as f64;
        }
    }
    let len = seg.len() as f64;
    mean.iter_mut().for_each(|m| *m /= len);
    let n = norm(&mean);
    if n > 0.0 {
        mean.iter_mut().for_each(|m| *m /= n);
    }
    Ok(mean)
}

/// Clusters embeddings in the given order (utt_id, then start frame).
pub fn grow_clusters(embeddings: &[Vec<f64>], threshold: f64) -> (Vec<u32>, ClusterModel) {
    let mut model = ClusterModel::new(threshold);
    let ids = embeddings.iter().map(|e| model.assign(e)).collect();
    (ids, model)
}

pub fn label_segments(segments: &[Segment], ids: &[u32]) -> Result<Vec<Segment>> {
    if segments.len() != ids.len() {
        return Err(Error::LengthMismatch {
            left: segments.len(),
            right: ids.len(),
        });
    }
    Ok(segments
        .iter()
        .zip(ids)
        .map(|(s, &id)| Segment {
            cluster_id: Some(id),
            ..s.clone()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn embedding_examples() {
        let z = Matrix::from_rows(&[[3.0, 4.0], [1.0, 0.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0]]);
        let e = segment_embedding(&z, &Segment::new("u", 0, 1)).unwrap();
        assert!((e[0] - 0.6).abs() < 1e-7 && (e[1] - 0.8).abs() < 1e-7);
        let e = segment_embedding(&z, &Segment::new("u", 1, 3)).unwrap();
        assert!((e[0] - 0.70711).abs() < 1e-5 && (e[1] - 0.70711).abs() < 1e-5);
        assert_eq!(
            segment_embedding(&z, &Segment::new("u", 3, 5)).unwrap(),
            vec![0.0, 0.0]
        );
        assert!(matches!(
            segment_embedding(&z, &Segment::new("u", 4, 6)),
            Err(Error::Range { .. })
        ));
        assert!(segment_embedding(&z, &Segment::new("u", 2, 2)).is_err());
    }

    #[test]
    fn grow_examples() {
        let (ids, _) = grow_clusters(&[vec![1.0, 0.0], vec![1.0, 0.0]], 0.9);
        assert_eq!(ids, vec![1, 1]);
        let (ids, _) = grow_clusters(&[vec![1.0, 0.0], vec![0.0, 1.0]], 0.5);
        assert_eq!(ids, vec![1, 2]);
        let (ids, model) = grow_clusters(&[vec![1.0, 0.0], vec![0.8, 0.6]], 0.75);
        assert_eq!(ids, vec![1, 1]);
        let c = &model.centroids[0];
        assert!((c[0] - 0.9487).abs() < 1e-4 && (c[1] - 0.3162).abs() < 1e-4);
        assert_eq!(model.member_counts, vec![2]);
    }

    #[test]
    fn zero_embeddings_use_reserved_cluster() {
        let (ids, model) = grow_clusters(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 0.0]], 0.5);
        assert_eq!(ids, vec![ZERO_CLUSTER, 1, ZERO_CLUSTER]);
        assert_eq!(model.num_clusters(), 1);
    }

    #[test]
    fn ties_go_to_lowest_id() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let (ids, _) = grow_clusters(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![s, s]], 0.5);
        assert_eq!(ids, vec![1, 2, 1]);
    }

    #[test]
    fn label_examples() {
        let segs = vec![
            Segment::new("u", 0, 2),
            Segment::new("u", 2, 4),
            Segment::new("u", 4, 7),
        ];
        let out = label_segments(&segs, &[1, 1, 2]).unwrap();
        assert_eq!(
            out.iter().map(|s| s.cluster_id).collect::<Vec<_>>(),
            vec![Some(1), Some(1), Some(2)]
        );
        assert!(label_segments(&[], &[]).unwrap().is_empty());
        assert!(matches!(
            label_segments(&segs, &[1]),
            Err(Error::LengthMismatch { left: 3, right: 1 })
        ));
    }

    fn unit_vectors() -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 1..40).prop_map(|vs| {
            vs.into_iter()
                .map(|v| {
                    let n = norm(&v);
                    if n == 0.0 {
                        v
                    } else {
                        v.iter().map(|x| x / n).collect()
                    }
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn centroids_stay_unit_norm(es in unit_vectors(), theta in 0.0f64..1.0) {
            let (ids, model) = grow_clusters(&es, theta);
            prop_assert_eq!(ids.len(), es.len());
            for c in &model.centroids {
                prop_assert!((norm(c) - 1.0).abs() < 1e-6);
            }
            prop_assert!(model.member_counts.iter().all(|&c| c >= 1));
            let nonzero = es.iter().filter(|e| norm(e) > 0.0).count();
            prop_assert_eq!(model.member_counts.iter().sum::<usize>(), nonzero);
            prop_assert_eq!(grow_clusters(&es, theta).0, ids);
        }

        #[test]
        fn threshold_extremes(es in unit_vectors()) {
            let nonzero: Vec<_> = es.iter().filter(|e| norm(e) > 0.0).cloned().collect();
            let (ids, _) = grow_clusters(&nonzero, 1.0 + 1e-9);
            let expected: Vec<u32> = (1..=nonzero.len() as u32).collect();
            prop_assert_eq!(ids, expected);
            let (ids, _) = grow_clusters(&nonzero, 0.0);
            prop_assert!(ids.iter().all(|&i| i == 1));
        }
    }
}
