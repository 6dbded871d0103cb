//! Selection groups: several squared-distance targets for one task map, of
//! which an l0 level reaches at most one.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{ConstraintBlock, ConstraintFn, LevelRows, SquaredDistance, TaskMap};

#[derive(Debug, Clone)]
pub struct SelectionGroup {
    pub group_id: usize,
    pub task: Arc<dyn TaskMap>,
    pub targets: Vec<DVector<f64>>,
}

impl SelectionGroup {
    /// Fails on duplicate targets or targets of the wrong length.
    pub fn new(group_id: usize, task: Arc<dyn TaskMap>, targets: Vec<DVector<f64>>) -> Result<Self> {
        for (i, t) in targets.iter().enumerate() {
            if t.len() != task.dim() {
                return Err(Error::Dimension(format!("target {i} has {} entries, task has {}", t.len(), task.dim())));
            }
            if targets[..i].iter().any(|s| s == t) {
                return Err(Error::Domain(format!("target {i} duplicates an earlier target")));
            }
        }
        Ok(Self { group_id, task, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Equality block `||g(x) - target_i||^2 = v_i` tagged with the group id.
    pub fn block(&self) -> ConstraintBlock {
        ConstraintBlock::equality(SquaredDistance::new(self.task.clone(), self.targets.clone()))
            .in_group(self.group_id)
            .labeled(format!("group {}", self.group_id))
    }

    /// Task-space distance of `g(x)` to every target.
    pub fn distances(&self, x: &DVector<f64>) -> Vec<f64> {
        let (g, _) = self.task.eval(x);
        self.targets.iter().map(|t| (&g - t).norm()).collect()
    }
}

/// Squared distances and their Jacobian rows at `x`.
pub fn group_rows(sg: &SelectionGroup, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    SquaredDistance::new(sg.task.clone(), sg.targets.clone()).eval(x)
}

/// Members kept after a level with slack `v_star` is finalized.
///
/// All members within `eps` of zero are kept. Without any, the single member
/// with the smallest `|v|` is kept, the lowest index winning ties.
pub fn prune(v_star: &[f64], eps: f64) -> Vec<usize> {
    let feasible: Vec<usize> = (0..v_star.len()).filter(|&i| v_star[i].abs() <= eps).collect();
    if !feasible.is_empty() || v_star.is_empty() {
        return feasible;
    }
    let mut best = 0;
    for i in 1..v_star.len() {
        if v_star[i].abs() < v_star[best].abs() {
            best = i;
        }
    }
    vec![best]
}

/// Row indices of a level after pruning every group. Rows outside any group
/// are always kept.
pub fn prune_level(rows: &LevelRows, v_star: &DVector<f64>, eps: f64) -> Vec<usize> {
    let mut kept = Vec::new();
    let mut seen = Vec::new();
    for (i, info) in rows.info.iter().enumerate() {
        match info.group {
            None => kept.push(i),
            Some(g) if !seen.contains(&g) => {
                seen.push(g);
                let members: Vec<usize> = (0..rows.len()).filter(|&k| rows.info[k].group == Some(g)).collect();
                let v: Vec<f64> = members.iter().map(|&k| v_star[k]).collect();
                kept.extend(prune(&v, eps).into_iter().map(|k| members[k]));
            }
            Some(_) => {}
        }
    }
    kept.sort_unstable();
    kept
}

/// Recomputed squared distance of every member other than `active`.
pub fn slack_consistency(sg: &SelectionGroup, x: &DVector<f64>, active: usize) -> Vec<(usize, f64)> {
    let (f, _) = group_rows(sg, x);
    (0..sg.len()).filter(|&j| j != active).map(|j| (j, f[j])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug)]
    struct Ident(usize);

    impl TaskMap for Ident {
        fn dim(&self) -> usize {
            self.0
        }
        fn eval(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
            (x.clone(), DMatrix::identity(self.0, x.len()))
        }
    }

    #[test]
    fn identity_map_at_origin_target() {
        let sg = SelectionGroup::new(0, Arc::new(Ident(2)), vec![DVector::zeros(2)]).unwrap();
        let x = DVector::from_vec(vec![0.5, -2.0]);
        let (f, j) = group_rows(&sg, &x);
        assert_eq!(f[0], 4.25);
        assert_eq!(j.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, -4.0]);
    }

    #[test]
    fn row_vanishes_at_its_target() {
        let targets = vec![DVector::from_vec(vec![1.0, 1.0]), DVector::from_vec(vec![0.3, -0.7])];
        let sg = SelectionGroup::new(0, Arc::new(Ident(2)), targets.clone()).unwrap();
        let (f, j) = group_rows(&sg, &targets[1]);
        assert_eq!(f[1], 0.0);
        assert!(j.row(1).iter().all(|v| *v == 0.0));
        assert!(f[0] > 0.0);
    }

    #[test]
    fn pruning_rules() {
        assert_eq!(prune(&[0.0, 4.0], 1e-6), vec![0]);
        assert_eq!(prune(&[2.0, 3.0], 1e-6), vec![0]);
        assert_eq!(prune(&[3.0, -2.0], 1e-6), vec![1]);
        assert_eq!(prune(&[1e-9, 1e-9], 1e-6), vec![0, 1]);
        assert_eq!(prune(&[2.0, 2.0], 1e-6), vec![0]);
        assert!(prune(&[], 1e-6).is_empty());
    }

    #[test]
    fn duplicate_targets_rejected() {
        let t = DVector::from_vec(vec![1.0, 0.0]);
        assert!(SelectionGroup::new(0, Arc::new(Ident(2)), vec![t.clone(), t]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn prune_depends_only_on_slack(v in prop::collection::vec(-3.0..3.0f64, 1..8), eps in 1e-9..0.5f64) {
                let kept = prune(&v, eps);
                prop_assert_eq!(&kept, &prune(&v.clone(), eps));
                prop_assert!(!kept.is_empty());
                prop_assert!(kept.windows(2).all(|w| w[0] < w[1]));
                if v.iter().any(|x| x.abs() <= eps) {
                    prop_assert!(kept.iter().all(|&i| v[i].abs() <= eps));
                    prop_assert_eq!(kept.len(), v.iter().filter(|x| x.abs() <= eps).count());
                } else {
                    prop_assert_eq!(kept.len(), 1);
                    prop_assert!(v.iter().all(|x| x.abs() >= v[kept[0]].abs()));
                }
            }
        }
    }
}
