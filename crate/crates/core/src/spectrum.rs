use serde::{Deserialize, Serialize};

/// Relative tolerance under which two eigenvalues are treated as one.
pub const MERGE_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEntry {
    pub lambda: f64,
    pub multiplicity: usize,
    /// Bound on the error of `lambda`.
    pub residual: f64,
}

/// Sorted eigenvalues with multiplicities, complete up to `cutoff`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub entries: Vec<SpectrumEntry>,
    pub cutoff: f64,
}

fn same_value(a: f64, b: f64, rtol: f64) -> bool {
    (a - b).abs() <= rtol * a.abs().max(b.abs()).max(1.0)
}

impl Spectrum {
    pub fn empty(cutoff: f64) -> Self {
        Spectrum { entries: Vec::new(), cutoff }
    }

    /// Groups sorted-or-not `(lambda, residual)` pairs, one per eigenfunction,
    /// into entries. Values within `rtol` of the first member of a run are
    /// merged; the entry keeps the run mean and the largest residual.
    pub fn from_values(values: &[(f64, f64)], cutoff: f64, rtol: f64) -> Self {
        let mut v: Vec<(f64, f64)> = values.iter().copied().filter(|(l, _)| *l <= cutoff).collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut entries: Vec<SpectrumEntry> = Vec::new();
        let mut i = 0;
        while i < v.len() {
            let first = v[i].0;
            let mut j = i;
            let mut sum = 0.0;
            let mut res: f64 = 0.0;
            while j < v.len() && same_value(first, v[j].0, rtol) {
                sum += v[j].0;
                res = res.max(v[j].1);
                j += 1;
            }
            let n = j - i;
            entries.push(SpectrumEntry { lambda: sum / n as f64, multiplicity: n, residual: res });
            i = j;
        }
        Spectrum { entries, cutoff }
    }

    /// Eigenvalues repeated according to multiplicity.
    pub fn expanded(&self) -> Vec<f64> {
        self.entries
            .iter()
            .flat_map(|e| std::iter::repeat(e.lambda).take(e.multiplicity))
            .collect()
    }

    /// Total count including multiplicities.
    pub fn count(&self) -> usize {
        self.entries.iter().map(|e| e.multiplicity).sum()
    }

    /// Counting function `N(lambda)`: eigenvalues `<= lambda`.
    pub fn counting(&self, lambda: f64) -> usize {
        self.entries.iter().filter(|e| e.lambda <= lambda).map(|e| e.multiplicity).sum()
    }

    pub fn truncated(&self, cutoff: f64) -> Spectrum {
        Spectrum {
            entries: self.entries.iter().copied().filter(|e| e.lambda <= cutoff).collect(),
            cutoff: cutoff.min(self.cutoff),
        }
    }

    /// Multiset union. The cutoff is the smaller of the two.
    pub fn merge(&self, other: &Spectrum) -> Spectrum {
        let cutoff = self.cutoff.min(other.cutoff);
        let mut all: Vec<SpectrumEntry> =
            self.entries.iter().chain(other.entries.iter()).copied().filter(|e| e.lambda <= cutoff).collect();
        all.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
        let mut out: Vec<SpectrumEntry> = Vec::new();
        for e in all {
            match out.last_mut() {
                Some(last) if same_value(last.lambda, e.lambda, MERGE_RTOL) => {
                    let m = last.multiplicity + e.multiplicity;
                    last.lambda = (last.lambda * last.multiplicity as f64 + e.lambda * e.multiplicity as f64) / m as f64;
                    last.multiplicity = m;
                    last.residual = last.residual.max(e.residual);
                }
                _ => out.push(e),
            }
        }
        Spectrum { entries: out, cutoff }
    }

    /// Checks the structural invariants: increasing values, positive
    /// multiplicities, nonnegative residuals, values below the cutoff.
    pub fn is_well_formed(&self) -> bool {
        self.entries.windows(2).all(|w| w[0].lambda < w[1].lambda)
            && self
                .entries
                .iter()
                .all(|e| e.multiplicity >= 1 && e.residual >= 0.0 && e.lambda <= self.cutoff)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grouping_and_expansion() {
        let s = Spectrum::from_values(&[(1.0, 0.0), (0.0, 0.0), (1.0 + 1e-12, 1e-3), (5.0, 0.0)], 4.0, 1e-9);
        assert_eq!(s.entries.len(), 2);
        assert_eq!(s.entries[1].multiplicity, 2);
        assert_eq!(s.entries[1].residual, 1e-3);
        assert_eq!(s.count(), 3);
        assert_eq!(s.expanded().len(), 3);
        assert!(s.is_well_formed());
    }

    #[test]
    fn merge_adds_multiplicities() {
        let a = Spectrum::from_values(&[(0.0, 0.0), (2.0, 0.0)], 10.0, 1e-9);
        let b = Spectrum::from_values(&[(0.0, 0.0), (3.0, 0.0)], 5.0, 1e-9);
        let m = a.merge(&b);
        assert_eq!(m.cutoff, 5.0);
        assert_eq!(m.expanded(), vec![0.0, 0.0, 2.0, 3.0]);
        assert_eq!(m.counting(2.5), 3);
    }
}
