use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 30;

/// Bin edges discretizing follow-up time; bins are left-closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    edges: Vec<f64>,
    midpoints: Vec<f64>,
}

impl TimeGrid {
    /// Builds a grid from explicit edges (`edges[0] = 0`, strictly increasing).
    pub fn from_edges(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 3 {
            return Err(Error::InvalidArgument("a time grid needs at least 2 bins".into()));
        }
        if edges[0] != 0.0 {
            return Err(Error::InvalidArgument("first grid edge must be 0".into()));
        }
        if edges.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::InvalidArgument(
                "grid edges must be finite and strictly increasing".into(),
            ));
        }
        let midpoints = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        Ok(Self { edges, midpoints })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn midpoints(&self) -> &[f64] {
        &self.midpoints
    }

    pub fn n_bins(&self) -> usize {
        self.midpoints.len()
    }
}

/// Linear-interpolation empirical quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Quantile-based grid over pooled event and censoring times.
///
/// Interior edges sit at the `j/K` empirical quantiles; the last edge is
/// `max(times) * (1 + 1e-6)`. Coincident quantiles are collapsed and the
/// widest bins split in half until `K` bins remain.
pub fn build_time_grid(times: &[f64], n_bins: usize) -> Result<TimeGrid> {
    if n_bins < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 bins, got {n_bins}")));
    }
    if times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::InvalidArgument("times must be positive and finite".into()));
    }
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    if sorted.len() < 2 {
        return Err(Error::InvalidArgument(
            "need at least 2 distinct times to build a grid".into(),
        ));
    }
    let mut all = times.to_vec();
    all.sort_by(f64::total_cmp);

    let last = all[all.len() - 1] * (1.0 + 1e-6);
    let mut edges = vec![0.0];
    for j in 1..n_bins {
        edges.push(quantile(&all, j as f64 / n_bins as f64));
    }
    edges.push(last);
    edges.dedup();

    while edges.len() < n_bins + 1 {
        let widest = (0..edges.len() - 1)
            .max_by(|&a, &b| (edges[a + 1] - edges[a]).total_cmp(&(edges[b + 1] - edges[b])))
            .expect("at least one bin");
        let mid = 0.5 * (edges[widest] + edges[widest + 1]);
        edges.insert(widest + 1, mid);
    }
    TimeGrid::from_edges(edges)
}

/// The bin holding `time`; times past the last edge clamp to the final bin.
pub fn bin_index(time: f64, grid: &TimeGrid) -> usize {
    let edges = grid.edges();
    let k = grid.n_bins();
    edges.partition_point(|&e| e <= time).saturating_sub(1).min(k - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scan_oracle(time: f64, grid: &TimeGrid) -> usize {
        let e = grid.edges();
        for k in 0..grid.n_bins() {
            if e[k] <= time && time < e[k + 1] {
                return k;
            }
        }
        grid.n_bins() - 1
    }

    fn occupancy(times: &[f64], grid: &TimeGrid) -> Vec<usize> {
        let mut counts = vec![0; grid.n_bins()];
        for &t in times {
            counts[bin_index(t, grid)] += 1;
        }
        counts
    }

    #[test]
    fn four_times_two_bins() {
        let times = [10.0, 20.0, 30.0, 40.0];
        let g = build_time_grid(&times, 2).unwrap();
        assert_eq!(g.edges()[0], 0.0);
        assert!((g.edges()[1] - 25.0).abs() < 1e-12);
        assert!((g.edges()[2] - 40.0 * (1.0 + 1e-6)).abs() < 1e-12);
        assert_eq!(occupancy(&times, &g), vec![2, 2]);
    }

    #[test]
    fn uniform_times_fill_bins_evenly() {
        let times: Vec<f64> = (1..=300).map(f64::from).collect();
        let g = build_time_grid(&times, DEFAULT_BINS).unwrap();
        assert_eq!(g.n_bins(), 30);
        assert_eq!(occupancy(&times, &g), vec![10; 30]);
    }

    #[test]
    fn boundary_and_clamp() {
        let g = TimeGrid::from_edges(vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(bin_index(1.0, &g), 1);
        assert_eq!(bin_index(0.5, &g), 0);
        assert_eq!(bin_index(2.999, &g), 2);
        assert_eq!(bin_index(3.0, &g), 2);
        assert_eq!(bin_index(1e9, &g), 2);
        assert_eq!(g.midpoints(), &[0.5, 1.5, 2.5]);
    }

    #[test]
    fn heavy_ties_are_padded() {
        let mut times = vec![5.0; 40];
        times.extend([1.0, 9.0]);
        let g = build_time_grid(&times, 10).unwrap();
        assert_eq!(g.n_bins(), 10);
        assert!(g.edges().windows(2).all(|w| w[1] > w[0]));
        assert_eq!(occupancy(&times, &g).iter().sum::<usize>(), times.len());
    }

    #[test]
    fn errors() {
        assert!(build_time_grid(&[3.0, 3.0], 2).is_err());
        assert!(build_time_grid(&[1.0, 2.0], 1).is_err());
        assert!(build_time_grid(&[], 2).is_err());
        assert!(build_time_grid(&[1.0, -2.0], 2).is_err());
        assert!(TimeGrid::from_edges(vec![0.0, 1.0, 1.0]).is_err());
        assert!(TimeGrid::from_edges(vec![0.5, 1.0, 2.0]).is_err());
    }

    #[test]
    fn random_times_match_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let times: Vec<f64> = (0..200).map(|_| rng.random_range(0.1..120.0)).collect();
        let g = build_time_grid(&times, 30).unwrap();
        for _ in 0..2000 {
            let t: f64 = rng.random_range(1e-3..200.0);
            assert_eq!(bin_index(t, &g), scan_oracle(t, &g));
        }
        for &e in g.edges() {
            if e > 0.0 {
                assert_eq!(bin_index(e, &g), scan_oracle(e, &g));
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn every_time_lands_in_a_bin(
                times in proptest::collection::vec(0.01f64..500.0, 2..120),
                k in 2usize..40,
            ) {
                prop_assume!(times.iter().any(|&t| t != times[0]));
                let g = build_time_grid(&times, k).unwrap();
                prop_assert_eq!(g.n_bins(), k);
                prop_assert!(g.edges().windows(2).all(|w| w[1] > w[0]));
                let occ = occupancy(&times, &g);
                prop_assert_eq!(occ.iter().sum::<usize>(), times.len());
                for &t in &times {
                    let b = bin_index(t, &g);
                    prop_assert!(g.edges()[b] <= t && t < g.edges()[b + 1]);
                }
            }
        }
    }
}
