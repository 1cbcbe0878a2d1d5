//! Classifier comparison statistics: per-dataset ranking, the Friedman test
//! with its Fisher refinement, the Nemenyi critical difference and the
//! paired t-test.

use std::fmt::Write as _;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{KrvError, Result};

/// Two-tailed Nemenyi `q` values at alpha = 0.05 for 2..=10 learners.
const NEMENYI_Q_05: [f64; 9] = [
    1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164,
];

/// Upper chi-square critical values for 1..=10 degrees of freedom.
const CHI2_CRIT_05: [f64; 10] = [
    3.8415, 5.9915, 7.8147, 9.4877, 11.0705, 12.5916, 14.0671, 15.5073, 16.9190, 18.3070,
];
const CHI2_CRIT_01: [f64; 10] = [
    6.6349, 9.2103, 11.3449, 13.2767, 15.0863, 16.8119, 18.4753, 20.0902, 21.6660, 23.2093,
];

/// Ranks of one row of accuracies: 1 for the highest, ties averaged.
pub fn rank_row(accuracies: &[f64]) -> Vec<f64> {
    let g = accuracies.len();
    let mut idx: Vec<usize> = (0..g).collect();
    idx.sort_by(|&a, &b| accuracies[b].total_cmp(&accuracies[a]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; g];
    let mut start = 0;
    while start < g {
        let mut end = start + 1;
        while end < g && accuracies[idx[end]] == accuracies[idx[start]] {
            end += 1;
        }
        // positions start..end share ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

pub fn average_ranks(ranks: &[Vec<f64>]) -> Vec<f64> {
    let g = ranks.first().map_or(0, Vec::len);
    let s = ranks.len() as f64;
    (0..g)
        .map(|j| ranks.iter().map(|r| r[j]).sum::<f64>() / s)
        .collect()
}

fn rank_matrix_shape(ranks: &[Vec<f64>]) -> Result<(usize, usize)> {
    let s = ranks.len();
    let g = ranks.first().map_or(0, Vec::len);
    if s < 2 || g < 2 {
        return Err(KrvError::invalid(format!(
            "friedman test needs at least 2 datasets and 2 learners, got {s}x{g}"
        )));
    }
    if ranks.iter().any(|r| r.len() != g) {
        return Err(KrvError::invalid("ragged rank matrix"));
    }
    Ok((s, g))
}

/// Friedman statistic `12S/(G(G+1)) (sum_j R_j^2 - G(G+1)^2/4)` over an
/// S x G rank matrix.
pub fn friedman_chi2(ranks: &[Vec<f64>]) -> Result<f64> {
    let (s, g) = rank_matrix_shape(ranks)?;
    let (s, g) = (s as f64, g as f64);
    let sum_sq: f64 = average_ranks(ranks).iter().map(|r| r * r).sum();
    Ok(12.0 * s / (g * (g + 1.0)) * (sum_sq - g * (g + 1.0) * (g + 1.0) / 4.0))
}

/// Fisher refinement `(S-1) chi2 / (S(G-1) - chi2)`.
pub fn fisher_f(chi2: f64, s: usize, g: usize) -> Result<f64> {
    let denom = (s * (g.saturating_sub(1))) as f64 - chi2;
    if !(denom > 0.0) {
        return Err(KrvError::invalid(format!(
            "fisher statistic undefined: S(G-1) - chi2 = {denom}"
        )));
    }
    Ok((s as f64 - 1.0) * chi2 / denom)
}

/// Nemenyi critical difference `q sqrt(G(G+1)/(6S))`.
pub fn nemenyi_cd(g: usize, s: usize, q_alpha: f64) -> f64 {
    let (g, s) = (g as f64, s as f64);
    q_alpha * (g * (g + 1.0) / (6.0 * s)).sqrt()
}

/// Tabulated two-tailed Nemenyi `q` at alpha = 0.05.
pub fn nemenyi_q(g: usize, alpha: f64) -> Result<f64> {
    if alpha != 0.05 || !(2..=10).contains(&g) {
        return Err(KrvError::invalid(format!(
            "nemenyi q tabulated for 2..=10 learners at alpha 0.05, got {g} at {alpha}"
        )));
    }
    Ok(NEMENYI_Q_05[g - 2])
}

/// Tabulated upper chi-square critical value.
pub fn chi2_critical(df: usize, alpha: f64) -> Result<f64> {
    let table = if alpha == 0.05 {
        &CHI2_CRIT_05
    } else if alpha == 0.01 {
        &CHI2_CRIT_01
    } else {
        return Err(KrvError::invalid(format!(
            "no chi-square table for alpha {alpha}"
        )));
    };
    if !(1..=10).contains(&df) {
        return Err(KrvError::invalid(format!(
            "no chi-square table for df {df}"
        )));
    }
    Ok(table[df - 1])
}

/// True iff `chi2` strictly exceeds the chi-square critical value with
/// `G - 1` degrees of freedom.
pub fn friedman_decision(chi2: f64, g: usize, _s: usize, alpha: f64) -> Result<bool> {
    let crit = chi2_critical(g.saturating_sub(1), alpha)?;
    Ok(chi2 > crit)
}

/// Maximal runs of learners (sorted by average rank) whose extreme ranks
/// differ by less than `cd`. Groups may overlap. Learner indices within a
/// group are in rank order.
pub fn group_by_cd(avg_ranks: &[f64], cd: f64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..avg_ranks.len()).collect();
    idx.sort_by(|&a, &b| avg_ranks[a].total_cmp(&avg_ranks[b]).then(a.cmp(&b)));
    let mut groups = Vec::new();
    let mut last_end = None;
    for i in 0..idx.len() {
        let mut end = i;
        while end + 1 < idx.len() && avg_ranks[idx[end + 1]] - avg_ranks[idx[i]] < cd {
            end += 1;
        }
        if last_end != Some(end) {
            groups.push(idx[i..=end].to_vec());
            last_end = Some(end);
        }
    }
    groups
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedTTest {
    /// t statistic of the differences; infinite for zero-variance nonzero
    /// differences, 0 when every difference is zero.
    pub statistic: f64,
    pub df: usize,
    pub critical: f64,
    pub significant: bool,
}

impl PairedTTest {
    /// 1 when the null hypothesis of equal means is rejected, 0 otherwise.
    pub fn decision(&self) -> u8 {
        u8::from(self.significant)
    }
}

/// Two-tailed Student-t critical value `t_{1 - alpha/2, df}`.
pub fn student_t_critical(df: usize, alpha: f64) -> Result<f64> {
    if df == 0 || !(alpha > 0.0 && alpha < 1.0) {
        return Err(KrvError::invalid(format!(
            "student t critical needs df >= 1 and alpha in (0,1), got {df}, {alpha}"
        )));
    }
    let dist = StudentsT::new(0.0, 1.0, df as f64)
        .map_err(|e| KrvError::Numerical(format!("student t: {e}")))?;
    Ok(dist.inverse_cdf(1.0 - alpha / 2.0))
}

pub fn paired_t_test(a: &[f64], b: &[f64], alpha: f64) -> Result<PairedTTest> {
    if a.len() != b.len() {
        return Err(KrvError::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(KrvError::invalid("paired t-test needs at least 2 pairs"));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64;
    let df = n - 1;
    let critical = student_t_critical(df, alpha)?;
    let all_zero = diffs.iter().all(|&d| d == 0.0);
    let statistic = if all_zero {
        0.0
    } else if var <= f64::EPSILON * mean * mean {
        f64::INFINITY.copysign(mean)
    } else {
        mean / (var / n as f64).sqrt()
    };
    Ok(PairedTTest {
        statistic,
        df,
        critical,
        significant: statistic.abs() > critical,
    })
}

/// Ranking and Friedman/Nemenyi summary of a learner x dataset accuracy
/// table.
#[derive(Debug, Clone, PartialEq)]
pub struct RankReport {
    pub learners: Vec<String>,
    pub datasets: Vec<String>,
    /// S x G
    pub accuracies: Vec<Vec<f64>>,
    pub ranks: Vec<Vec<f64>>,
    pub avg_ranks: Vec<f64>,
    pub chi2_f: f64,
    /// `None` when the Fisher denominator is not positive.
    pub fisher_f: Option<f64>,
    pub q_alpha: f64,
    pub cd: f64,
    pub critical: f64,
    pub groups: Vec<Vec<usize>>,
    pub rejected: bool,
    pub alpha: f64,
}

impl RankReport {
    pub fn new(
        learners: Vec<String>,
        datasets: Vec<String>,
        accuracies: Vec<Vec<f64>>,
        alpha: f64,
    ) -> Result<Self> {
        if accuracies.len() != datasets.len() {
            return Err(KrvError::DimensionMismatch {
                expected: datasets.len(),
                found: accuracies.len(),
            });
        }
        if let Some(row) = accuracies.iter().find(|r| r.len() != learners.len()) {
            return Err(KrvError::DimensionMismatch {
                expected: learners.len(),
                found: row.len(),
            });
        }
        if accuracies.iter().flatten().any(|v| !v.is_finite()) {
            return Err(KrvError::invalid("accuracies must be finite"));
        }
        let ranks: Vec<Vec<f64>> = accuracies.iter().map(|r| rank_row(r)).collect();
        let chi2_f = friedman_chi2(&ranks)?;
        let (s, g) = (datasets.len(), learners.len());
        let avg_ranks = average_ranks(&ranks);
        let q_alpha = nemenyi_q(g, alpha)?;
        let cd = nemenyi_cd(g, s, q_alpha);
        let critical = chi2_critical(g - 1, alpha)?;
        Ok(RankReport {
            fisher_f: fisher_f(chi2_f, s, g).ok(),
            groups: group_by_cd(&avg_ranks, cd),
            rejected: chi2_f > critical,
            learners,
            datasets,
            accuracies,
            ranks,
            avg_ranks,
            chi2_f,
            q_alpha,
            cd,
            critical,
            alpha,
        })
    }

    /// CSV block: accuracies, ranks, average ranks, statistics and groups.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header = std::iter::once("dataset".to_string())
            .chain(self.learners.iter().cloned())
            .collect::<Vec<_>>()
            .join(",");
        out.push_str("# accuracies\n");
        out.push_str(&header);
        out.push('\n');
        for (name, row) in self.datasets.iter().zip(&self.accuracies) {
            let _ = writeln!(out, "{name},{}", join_floats(row));
        }
        out.push_str("# ranks\n");
        out.push_str(&header);
        out.push('\n');
        for (name, row) in self.datasets.iter().zip(&self.ranks) {
            let _ = writeln!(out, "{name},{}", join_floats(row));
        }
        let _ = writeln!(out, "average,{}", join_floats(&self.avg_ranks));
        out.push_str("# statistics\nstatistic,value\n");
        let _ = writeln!(out, "chi2_f,{}", self.chi2_f);
        let _ = writeln!(
            out,
            "fisher_f,{}",
            self.fisher_f
                .map_or("undefined".to_string(), |f| f.to_string())
        );
        let _ = writeln!(out, "critical_chi2,{}", self.critical);
        let _ = writeln!(out, "alpha,{}", self.alpha);
        let _ = writeln!(out, "rejected,{}", u8::from(self.rejected));
        let _ = writeln!(out, "q_alpha,{}", self.q_alpha);
        let _ = writeln!(out, "cd,{}", self.cd);
        out.push_str("# groups\ngroup,members\n");
        for (i, g) in self.groups.iter().enumerate() {
            let names: Vec<&str> = g.iter().map(|&j| self.learners[j].as_str()).collect();
            let _ = writeln!(out, "{i},{}", names.join(" "));
        }
        out
    }

    pub fn to_text(&self) -> String {
        let width = self
            .datasets
            .iter()
            .map(String::len)
            .chain(std::iter::once(8))
            .max()
            .unwrap_or(8);
        let col = self
            .learners
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(6)
            .max(8);
        let mut out = String::new();
        let _ = write!(out, "{:<width$}", "dataset");
        for l in &self.learners {
            let _ = write!(out, " {l:>col$}");
        }
        out.push('\n');
        for (name, row) in self.datasets.iter().zip(&self.ranks) {
            let _ = write!(out, "{name:<width$}");
            for r in row {
                let _ = write!(out, " {r:>col$.2}");
            }
            out.push('\n');
        }
        let _ = write!(out, "{:<width$}", "average");
        for r in &self.avg_ranks {
            let _ = write!(out, " {r:>col$.3}");
        }
        out.push('\n');
        let _ = writeln!(
            out,
            "\nchi2_F = {:.4} (critical {:.4} at alpha {}), {}",
            self.chi2_f,
            self.critical,
            self.alpha,
            if self.rejected {
                "rejected"
            } else {
                "not rejected"
            }
        );
        if let Some(f) = self.fisher_f {
            let _ = writeln!(out, "F_F = {f:.4}");
        }
        let _ = writeln!(out, "CD = {:.4} (q = {})", self.cd, self.q_alpha);
        for (i, g) in self.groups.iter().enumerate() {
            let names: Vec<&str> = g.iter().map(|&j| self.learners[j].as_str()).collect();
            let _ = writeln!(out, "group {i}: {}", names.join(", "));
        }
        out
    }
}

fn join_floats(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks() {
        assert_eq!(rank_row(&[0.9, 0.8, 0.7]), vec![1.0, 2.0, 3.0]);
        assert_eq!(rank_row(&[0.9, 0.9, 0.7]), vec![1.5, 1.5, 3.0]);
        assert_eq!(
            rank_row(&[0.9011, 0.9302, 0.9267, 0.9419, 0.6964, 0.9490]),
            vec![5.0, 3.0, 4.0, 2.0, 6.0, 1.0]
        );
        assert_eq!(rank_row(&[0.5, 0.5, 0.5, 0.5]), vec![2.5; 4]);
    }

    #[test]
    fn friedman_examples() {
        let same = vec![vec![1.5, 1.5]; 3];
        assert_eq!(friedman_chi2(&same).unwrap(), 0.0);
        let dominant = vec![vec![1.0, 2.0]; 4];
        assert!((friedman_chi2(&dominant).unwrap() - 4.0).abs() < 1e-12);
        assert!(friedman_chi2(&[vec![1.0, 2.0]]).is_err());
        assert!(friedman_chi2(&[vec![1.0], vec![1.0]]).is_err());
    }

    #[test]
    fn fisher_examples() {
        assert_eq!(fisher_f(0.0, 20, 6).unwrap(), 0.0);
        let f = fisher_f(19.6571, 20, 6).unwrap();
        assert!((f - 19.0 * 19.6571 / (100.0 - 19.6571)).abs() < 1e-12);
        assert!((f - 4.6487).abs() < 1e-3);
        assert!(fisher_f(99.999, 20, 6).unwrap() > 1e5);
        assert!(fisher_f(100.0, 20, 6).is_err());
        assert!(fisher_f(100.5, 20, 6).is_err());
    }

    #[test]
    fn nemenyi_examples() {
        assert_eq!(nemenyi_cd(6, 20, 0.0), 0.0);
        assert!((nemenyi_cd(6, 20, 2.850) - 1.6861).abs() < 1e-3);
        assert!((nemenyi_cd(2, 9, 1.96) - 1.96 / 3.0).abs() < 1e-12);
        assert_eq!(nemenyi_q(6, 0.05).unwrap(), 2.850);
        assert!(nemenyi_q(11, 0.05).is_err());
    }

    #[test]
    fn decision_examples() {
        assert!(friedman_decision(19.6571, 6, 20, 0.05).unwrap());
        assert!(!friedman_decision(0.0, 6, 20, 0.05).unwrap());
        assert!(!friedman_decision(11.0705, 6, 20, 0.05).unwrap());
        assert!(friedman_decision(15.1, 6, 20, 0.01).unwrap());
        assert!(friedman_decision(1.0, 12, 20, 0.05).is_err());
        assert!(friedman_decision(1.0, 6, 20, 0.10).is_err());
    }

    #[test]
    fn grouping_examples() {
        assert_eq!(group_by_cd(&[3.0, 3.0, 3.0], 1.0), vec![vec![0, 1, 2]]);
        assert_eq!(
            group_by_cd(&[1.0, 2.0, 3.0], 0.0),
            vec![vec![0], vec![1], vec![2]]
        );
        assert_eq!(group_by_cd(&[2.0, 2.0], 0.0), vec![vec![0], vec![1]]);
        // k-RV, RVM-G, RVM-B, then the k-NN family
        let ranks = [2.0, 3.45, 3.45, 4.3, 4.6, 5.2];
        let groups = group_by_cd(&ranks, 1.6861);
        assert_eq!(groups[0], vec![0, 1, 2]);
        assert!(groups.iter().skip(1).all(|g| !g.contains(&0)));
        assert!(groups
            .iter()
            .any(|g| [3, 4, 5].iter().all(|m| g.contains(m))));
    }

    #[test]
    fn t_test_examples() {
        let a = [0.8, 0.9, 0.85, 0.7];
        assert_eq!(paired_t_test(&a, &a, 0.05).unwrap().decision(), 0);
        let b: Vec<f64> = vec![0.5; 100];
        let c: Vec<f64> = b.iter().map(|v| v + 0.01).collect();
        let r = paired_t_test(&c, &b, 0.05).unwrap();
        assert_eq!(r.decision(), 1);
        assert!(paired_t_test(&a, &a[..3], 0.05).is_err());
        assert!(paired_t_test(&a[..1], &a[..1], 0.05).is_err());
    }

    #[test]
    fn student_t_critical_values() {
        // two-tailed 95% critical values
        assert!((student_t_critical(1, 0.05).unwrap() - 12.7062).abs() < 1e-3);
        assert!((student_t_critical(10, 0.05).unwrap() - 2.2281).abs() < 1e-3);
        assert!((student_t_critical(99, 0.05).unwrap() - 1.9842).abs() < 1e-3);
    }
}
