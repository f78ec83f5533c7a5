//! One-way ANOVA and the Tukey HSD post-hoc comparison.

use super::dist::{f_sf, studentized_range_critical, studentized_range_sf};
use super::StatsError;

#[derive(Debug, Clone, PartialEq)]
pub struct AnovaResult {
    pub f: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub p: f64,
    pub ms_between: f64,
    pub ms_within: f64,
}

fn check_groups(groups: &[Vec<f64>]) -> Result<(), StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::DegenerateGroup(format!(
            "need at least 2 groups, got {}",
            groups.len()
        )));
    }
    for (i, g) in groups.iter().enumerate() {
        if g.len() < 2 {
            return Err(StatsError::DegenerateGroup(format!(
                "group {i} has {} observations, need at least 2",
                g.len()
            )));
        }
    }
    Ok(())
}

/// Classical one-way ANOVA: F = MS_between / MS_within with the p-value
/// from the F distribution. A zero within-group mean square yields
/// F = +inf, p = 0 when group means differ and F = 0, p = 1 when all
/// observations are identical.
pub fn anova_oneway(groups: &[Vec<f64>]) -> Result<AnovaResult, StatsError> {
    check_groups(groups)?;
    let k = groups.len();
    let n: usize = groups.iter().map(Vec::len).sum();
    let grand_mean: f64 = groups.iter().flatten().sum::<f64>() / n as f64;

    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in groups {
        let m: f64 = g.iter().sum::<f64>() / g.len() as f64;
        ss_between += g.len() as f64 * (m - grand_mean).powi(2);
        ss_within += g.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    }
    let df_between = k - 1;
    let df_within = n - k;
    let ms_between = ss_between / df_between as f64;
    let ms_within = ss_within / df_within as f64;

    let (f, p) = if ms_within == 0.0 {
        if ms_between == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY, 0.0)
        }
    } else {
        let f = ms_between / ms_within;
        (f, f_sf(f, df_between as f64, df_within as f64))
    };
    Ok(AnovaResult {
        f,
        df_between,
        df_within,
        p,
        ms_between,
        ms_within,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TukeyPair {
    pub group_i: usize,
    pub group_j: usize,
    pub mean_diff: f64,
    pub q: f64,
    pub p_adj: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TukeyResult {
    pub pairs: Vec<TukeyPair>,
    pub alpha: f64,
    pub q_critical: f64,
    pub k: usize,
    pub df_within: usize,
}

/// All-pairs Tukey HSD after a one-way ANOVA. Unequal group sizes use
/// the Tukey-Kramer denominator sqrt(MS_within (1/n_i + 1/n_j) / 2);
/// adjusted p-values come from the studentized range distribution.
pub fn tukey_hsd(groups: &[Vec<f64>], alpha: f64) -> Result<TukeyResult, StatsError> {
    let anova = anova_oneway(groups)?;
    let k = groups.len();
    let df = anova.df_within;
    let means: Vec<f64> = groups
        .iter()
        .map(|g| g.iter().sum::<f64>() / g.len() as f64)
        .collect();

    let q_critical = studentized_range_critical(alpha, k, df as f64);
    let mut pairs = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in (i + 1)..k {
            let mean_diff = means[i] - means[j];
            let se = (anova.ms_within
                * (1.0 / groups[i].len() as f64 + 1.0 / groups[j].len() as f64)
                / 2.0)
                .sqrt();
            let q = if se > 0.0 {
                mean_diff.abs() / se
            } else if mean_diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            let p_adj = if q == 0.0 {
                1.0
            } else {
                studentized_range_sf(q, k, df as f64)
            };
            pairs.push(TukeyPair {
                group_i: i,
                group_j: j,
                mean_diff,
                q,
                p_adj,
                significant: p_adj < alpha,
            });
        }
    }
    Ok(TukeyResult {
        pairs,
        alpha,
        q_critical,
        k,
        df_within: df,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_observations_give_f_zero_p_one() {
        let groups = vec![vec![2.0, 2.0, 2.0], vec![2.0, 2.0], vec![2.0, 2.0, 2.0]];
        let a = anova_oneway(&groups).unwrap();
        assert_eq!(a.f, 0.0);
        assert_eq!(a.p, 1.0);
    }

    #[test]
    fn perfect_separation_gives_infinite_f() {
        let groups = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let a = anova_oneway(&groups).unwrap();
        assert!(a.f.is_infinite());
        assert_eq!(a.p, 0.0);
    }

    #[test]
    fn single_group_rejected() {
        assert!(matches!(
            anova_oneway(&[vec![1.0, 2.0]]),
            Err(StatsError::DegenerateGroup(_))
        ));
        assert!(matches!(
            anova_oneway(&[vec![1.0, 2.0], vec![3.0]]),
            Err(StatsError::DegenerateGroup(_))
        ));
    }

    #[test]
    fn two_group_f_equals_pooled_t_squared() {
        let a = vec![3.1, 2.7, 3.5, 3.0, 2.9];
        let b = vec![3.8, 4.1, 3.6, 4.4];
        let anova = anova_oneway(&[a.clone(), b.clone()]).unwrap();
        // pooled two-sample t
        let (na, nb) = (a.len() as f64, b.len() as f64);
        let (ma, mb) = (
            a.iter().sum::<f64>() / na,
            b.iter().sum::<f64>() / nb,
        );
        let ssa: f64 = a.iter().map(|v| (v - ma).powi(2)).sum();
        let ssb: f64 = b.iter().map(|v| (v - mb).powi(2)).sum();
        let sp2 = (ssa + ssb) / (na + nb - 2.0);
        let t = (ma - mb) / (sp2 * (1.0 / na + 1.0 / nb)).sqrt();
        assert!((anova.f - t * t).abs() < 1e-10 * anova.f);
    }

    #[test]
    fn identical_groups_tukey_all_p_one() {
        let groups = vec![vec![1.0, 1.0, 1.0], vec![1.0, 1.0, 1.0], vec![1.0, 1.0, 1.0]];
        let t = tukey_hsd(&groups, 0.05).unwrap();
        assert!(t.pairs.iter().all(|p| p.q == 0.0 && p.p_adj == 1.0 && !p.significant));
    }

    #[test]
    fn tukey_p_monotone_in_q() {
        let groups = vec![
            vec![1.0, 1.2, 0.8, 1.1],
            vec![1.5, 1.4, 1.7, 1.6],
            vec![3.0, 3.2, 2.9, 3.1],
        ];
        let t = tukey_hsd(&groups, 0.05).unwrap();
        let mut pairs = t.pairs.clone();
        pairs.sort_by(|a, b| a.q.partial_cmp(&b.q).unwrap());
        for w in pairs.windows(2) {
            assert!(w[0].p_adj >= w[1].p_adj - 1e-12);
        }
        // the far group must separate
        let far = t
            .pairs
            .iter()
            .find(|p| p.group_i == 0 && p.group_j == 2)
            .unwrap();
        assert!(far.significant);
        assert!(far.q > t.q_critical);
    }

    #[test]
    fn tukey_kramer_uses_per_pair_sizes() {
        let groups = vec![vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 4.0, 5.0, 6.0], vec![4.0, 5.0]];
        let t = tukey_hsd(&groups, 0.05).unwrap();
        let anova = anova_oneway(&groups).unwrap();
        let p01 = &t.pairs[0];
        let se = (anova.ms_within * (1.0 / 3.0 + 1.0 / 5.0) / 2.0).sqrt();
        assert!((p01.q - p01.mean_diff.abs() / se).abs() < 1e-12);
    }
}
