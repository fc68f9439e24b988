use crate::error::{Error, Result};

/// Pair counts behind Harrell's C.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Concordance {
    pub c_index: f64,
    pub comparable: u64,
    pub concordant: u64,
    pub tied_risk: u64,
}

/// Fenwick tree over risk ranks.
struct Counts(Vec<u64>);

impl Counts {
    fn add(&mut self, mut i: usize) {
        i += 1;
        while i < self.0.len() {
            self.0[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Number of inserted ranks `< i`.
    fn below(&self, mut i: usize) -> u64 {
        let mut s = 0;
        while i > 0 {
            s += self.0[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Harrell's concordance with pair counts.
///
/// A pair `(i, j)` is comparable when `i` had the event and
/// `times[i] < times[j]`; it is concordant when `risks[i] > risks[j]` and
/// counts one half when the risks tie. Runs in `O(n log n)`.
pub fn concordance(risks: &[f64], times: &[f64], events: &[bool]) -> Result<Concordance> {
    let n = risks.len();
    if times.len() != n || events.len() != n {
        return Err(Error::DimensionMismatch {
            context: "c-index inputs",
            expected: n,
            actual: if times.len() != n { times.len() } else { events.len() },
        });
    }
    if risks.iter().chain(times).any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("NaN in c-index input".into()));
    }

    // dense ranks of the risk scores
    let mut by_risk: Vec<usize> = (0..n).collect();
    by_risk.sort_by(|&a, &b| risks[a].total_cmp(&risks[b]));
    let mut rank = vec![0usize; n];
    let mut r = 0;
    for w in 0..n {
        if w > 0 && risks[by_risk[w]] != risks[by_risk[w - 1]] {
            r += 1;
        }
        rank[by_risk[w]] = r;
    }

    let mut by_time: Vec<usize> = (0..n).collect();
    by_time.sort_by(|&a, &b| times[b].total_cmp(&times[a]));

    let mut tree = Counts(vec![0; r + 2]);
    let mut inserted = 0u64;
    let (mut comparable, mut concordant, mut tied) = (0u64, 0u64, 0u64);
    let mut start = 0;
    while start < n {
        let t = times[by_time[start]];
        let mut end = start;
        while end < n && times[by_time[end]] == t {
            end += 1;
        }
        // tree holds exactly the patients with strictly later times
        for &i in &by_time[start..end] {
            if events[i] {
                let lower = tree.below(rank[i]);
                let equal = tree.below(rank[i] + 1) - lower;
                comparable += inserted;
                concordant += lower;
                tied += equal;
            }
        }
        for &i in &by_time[start..end] {
            tree.add(rank[i]);
            inserted += 1;
        }
        start = end;
    }

    if comparable == 0 {
        return Err(Error::CIndexUndefined);
    }
    Ok(Concordance {
        c_index: (2 * concordant + tied) as f64 / (2 * comparable) as f64,
        comparable,
        concordant,
        tied_risk: tied,
    })
}

/// Harrell's C-index (higher risk should mean earlier event).
pub fn c_index(risks: &[f64], times: &[f64], events: &[bool]) -> Result<f64> {
    concordance(risks, times, events).map(|c| c.c_index)
}
