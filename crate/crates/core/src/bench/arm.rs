//! Planar serial arm used as a small inverse-kinematics testbed.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector2};

use crate::error::{Error, Result};
use crate::model::TaskMap;

#[derive(Debug, Clone, PartialEq)]
pub struct PlanarArm {
    pub link_lengths: Vec<f64>,
    /// `(lower, upper)` per joint, radians.
    pub joint_limits: Vec<(f64, f64)>,
}

impl PlanarArm {
    pub fn new(link_lengths: Vec<f64>, joint_limits: Vec<(f64, f64)>) -> Result<Self> {
        if link_lengths.is_empty() || link_lengths.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::Domain("link lengths must be positive and finite".into()));
        }
        if joint_limits.len() != link_lengths.len() {
            return Err(Error::Dimension(format!(
                "{} joint limits for {} links",
                joint_limits.len(),
                link_lengths.len()
            )));
        }
        if joint_limits.iter().any(|(lo, hi)| lo.partial_cmp(hi) != Some(std::cmp::Ordering::Less)) {
            return Err(Error::Domain("joint limits need lower < upper".into()));
        }
        Ok(Self { link_lengths, joint_limits })
    }

    /// Unit links with limits of +-`limit` on every joint.
    pub fn uniform(links: usize, limit: f64) -> Self {
        Self::new(vec![1.0; links], vec![(-limit, limit); links]).expect("uniform arm is valid")
    }

    pub fn dof(&self) -> usize {
        self.link_lengths.len()
    }

    pub fn reach(&self) -> f64 {
        self.link_lengths.iter().sum()
    }

    pub fn lower(&self) -> Vec<f64> {
        self.joint_limits.iter().map(|l| l.0).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.joint_limits.iter().map(|l| l.1).collect()
    }
}

/// End-effector position and its `2 x N` Jacobian.
pub fn arm_fk(arm: &PlanarArm, q: &DVector<f64>) -> (Vector2<f64>, DMatrix<f64>) {
    let n = arm.dof();
    let mut pos = Vector2::zeros();
    let mut angle = 0.0;
    // link tips, accumulated so that column j sums the links from j outwards
    let mut tips = Vec::with_capacity(n);
    for i in 0..n {
        angle += q[i];
        tips.push(Vector2::new(angle.cos(), angle.sin()) * arm.link_lengths[i]);
        pos += tips[i];
    }
    let mut j = DMatrix::zeros(2, n);
    let mut tail = Vector2::zeros();
    for i in (0..n).rev() {
        tail += tips[i];
        j[(0, i)] = -tail.y;
        j[(1, i)] = tail.x;
    }
    (pos, j)
}

/// End-effector position as a task map.
#[derive(Debug, Clone)]
pub struct EndEffector(pub Arc<PlanarArm>);

impl TaskMap for EndEffector {
    fn dim(&self) -> usize {
        2
    }

    fn accepts(&self, n: usize) -> bool {
        n == self.0.dof()
    }

    fn eval(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let (p, j) = arm_fk(&self.0, x);
        (DVector::from_column_slice(p.as_slice()), j)
    }

    /// The second derivative of either coordinate with respect to joints
    /// `a` and `b` only involves links beyond `max(a, b)`.
    fn weighted_hessian(&self, x: &DVector<f64>, weights: &DVector<f64>) -> Option<DMatrix<f64>> {
        let arm = &self.0;
        let n = arm.dof();
        let mut angle = 0.0;
        let mut tips = Vec::with_capacity(n);
        for i in 0..n {
            angle += x[i];
            tips.push(Vector2::new(angle.cos(), angle.sin()) * arm.link_lengths[i]);
        }
        let mut tail = vec![Vector2::zeros(); n + 1];
        for i in (0..n).rev() {
            tail[i] = tail[i + 1] + tips[i];
        }
        let w = Vector2::new(weights[0], weights[1]);
        Some(DMatrix::from_fn(n, n, |a, b| -w.dot(&tail[a.max(b)])))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn zero_posture_is_stretched_along_x() {
        let arm = PlanarArm::uniform(3, 2.0);
        let (p, _) = arm_fk(&arm, &DVector::zeros(3));
        assert_eq!(p, Vector2::new(3.0, 0.0));
    }

    #[test]
    fn quarter_turn_points_up() {
        let arm = PlanarArm::uniform(2, 2.0);
        let (p, _) = arm_fk(&arm, &DVector::from_vec(vec![FRAC_PI_2, 0.0]));
        assert!(p.x.abs() < 1e-15 && (p.y - 2.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_arms_are_rejected() {
        assert!(PlanarArm::new(vec![1.0, -1.0], vec![(-1.0, 1.0); 2]).is_err());
        assert!(PlanarArm::new(vec![1.0], vec![(1.0, -1.0)]).is_err());
        assert!(PlanarArm::new(vec![1.0], vec![]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn jacobian_matches_central_differences(
                links in prop::collection::vec(0.2..2.0f64, 1..6),
                seed in prop::collection::vec(-3.0..3.0f64, 6),
            ) {
                let n = links.len();
                let arm = PlanarArm::new(links, vec![(-3.5, 3.5); n]).unwrap();
                let q = DVector::from_fn(n, |i, _| seed[i]);
                let (_, j) = arm_fk(&arm, &q);
                let h = 1e-6;
                for c in 0..n {
                    let mut qp = q.clone();
                    let mut qm = q.clone();
                    qp[c] += h;
                    qm[c] -= h;
                    let d = (arm_fk(&arm, &qp).0 - arm_fk(&arm, &qm).0) / (2.0 * h);
                    prop_assert!((d[0] - j[(0, c)]).abs() <= 1e-6 && (d[1] - j[(1, c)]).abs() <= 1e-6);
                }
            }
        }
    }
}
