//! Step filter for the level currently being certified.
//!
//! A filter point is `(f, h)`: `f` is the violation of the current level,
//! `h` the summed deviation of all finished levels from their optimal slack.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterOptions {
    /// A point is acceptable when `h <= gamma_h * h_j` ...
    pub gamma_h: f64,
    /// ... or `f <= f_j - gamma_f * h`.
    pub gamma_f: f64,
    /// Minimum ratio of actual to predicted decrease for an optimality step.
    pub eta1: f64,
    /// Ratio above which the radius grows.
    pub eta2: f64,
    pub gamma_inc: f64,
    pub gamma_dec: f64,
    /// Steps with `pred >= switching * h^2` are optimality steps.
    pub switching: f64,
    pub rho_max: f64,
}

impl Default for FilterOptions {
    fn default() -> Self {
        Self {
            gamma_h: 0.99,
            gamma_f: 1e-4,
            eta1: 0.01,
            eta2: 0.7,
            gamma_inc: 2.0,
            gamma_dec: 0.5,
            switching: 1e-4,
            rho_max: 1e6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterPoint {
    pub f: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub entries: Vec<FilterPoint>,
    pub rho: f64,
    pub current_level: usize,
    /// Candidates with `h` above this are never optimality steps.
    pub h_max: f64,
}

impl FilterState {
    pub fn new(current_level: usize, rho: f64, h_start: f64) -> Self {
        Self { entries: Vec::new(), rho, current_level, h_max: (1.25 * h_start).max(1.0) }
    }

    pub fn acceptable(&self, f: f64, h: f64, opts: &FilterOptions) -> bool {
        self.entries.iter().all(|e| acceptable_to(e, f, h, opts))
    }

    /// Adds a point and drops the entries it dominates.
    pub fn insert(&mut self, p: FilterPoint) {
        self.entries.retain(|e| !(p.f <= e.f && p.h <= e.h));
        if !self.entries.iter().any(|e| e.f <= p.f && e.h <= p.h) {
            self.entries.push(p);
        }
    }
}

fn acceptable_to(e: &FilterPoint, f: f64, h: f64, opts: &FilterOptions) -> bool {
    h <= opts.gamma_h * e.h || f <= e.f - opts.gamma_f * h
}

/// Measured quantities of one trial step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trial {
    pub f_current: f64,
    pub h_current: f64,
    pub f_candidate: f64,
    pub h_candidate: f64,
    /// Decrease predicted by the sub-problem model of the current level.
    pub predicted: f64,
    /// Decrease of the same weighted cost on the non-linear functions.
    pub actual: f64,
}

impl Trial {
    pub fn ratio(&self) -> f64 {
        if self.predicted > 0.0 {
            self.actual / self.predicted
        } else {
            0.0
        }
    }

    fn finite(&self) -> bool {
        [self.f_current, self.h_current, self.f_candidate, self.h_candidate, self.predicted, self.actual]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Accepts or rejects a trial step and updates the radius.
///
/// Steps whose predicted decrease dominates the infeasibility must pass the
/// filter and the ratio test and leave the filter unchanged. Other steps only
/// need to improve on the filter extended by the current point, which is then
/// added.
pub fn hsf_step(fs: &FilterState, trial: &Trial, opts: &FilterOptions) -> (bool, FilterState) {
    let mut next = fs.clone();
    if !trial.finite() {
        next.rho *= opts.gamma_dec;
        return (false, next);
    }
    let ratio = trial.ratio();
    let optimality = trial.predicted > 0.0 && trial.predicted >= opts.switching * trial.h_current * trial.h_current;
    let accept = if optimality {
        fs.acceptable(trial.f_candidate, trial.h_candidate, opts) && trial.h_candidate <= fs.h_max && ratio >= opts.eta1
    } else {
        let current = FilterPoint { f: trial.f_current, h: trial.h_current };
        let ok = fs.acceptable(trial.f_candidate, trial.h_candidate, opts)
            && acceptable_to(&current, trial.f_candidate, trial.h_candidate, opts);
        if ok {
            next.insert(current);
        }
        ok
    };
    if !accept {
        next.rho *= opts.gamma_dec;
    } else if ratio >= opts.eta2 {
        next.rho = (next.rho * opts.gamma_inc).min(opts.rho_max);
    }
    (accept, next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial(f_c: f64, h_c: f64, pred: f64, actual: f64) -> Trial {
        Trial { f_current: 1.0, h_current: 0.0, f_candidate: f_c, h_candidate: h_c, predicted: pred, actual }
    }

    #[test]
    fn empty_filter_accepts_a_good_step() {
        let fs = FilterState::new(0, 1.0, 0.0);
        let (ok, next) = hsf_step(&fs, &trial(0.5, 0.0, 0.5, 0.5), &FilterOptions::default());
        assert!(ok);
        assert_eq!(next.rho, 2.0);
        assert!(next.entries.is_empty());
    }

    #[test]
    fn dominated_candidate_is_rejected() {
        let mut fs = FilterState::new(0, 1.0, 0.0);
        fs.insert(FilterPoint { f: 0.2, h: 0.1 });
        let (ok, next) = hsf_step(&fs, &trial(0.3, 0.2, 0.5, 0.5), &FilterOptions::default());
        assert!(!ok);
        assert_eq!(next.rho, 0.5);
    }

    #[test]
    fn poor_ratio_is_rejected() {
        let fs = FilterState::new(0, 1.0, 0.0);
        let (ok, _) = hsf_step(&fs, &trial(0.999, 0.0, 0.5, 0.001), &FilterOptions::default());
        assert!(!ok);
    }

    #[test]
    fn feasibility_step_enters_the_filter() {
        let fs = FilterState::new(0, 1.0, 1.0);
        let t =
            Trial { f_current: 1.0, h_current: 1.0, f_candidate: 1.2, h_candidate: 0.5, predicted: -0.1, actual: -0.2 };
        let (ok, next) = hsf_step(&fs, &t, &FilterOptions::default());
        assert!(ok);
        assert_eq!(next.entries, vec![FilterPoint { f: 1.0, h: 1.0 }]);
        // the same move again from the stored point is now blocked
        let (again, _) = hsf_step(&next, &Trial { h_candidate: 1.0, f_candidate: 1.0, ..t }, &FilterOptions::default());
        assert!(!again);
    }

    #[test]
    fn insert_purges_dominated_points() {
        let mut fs = FilterState::new(0, 1.0, 0.0);
        fs.insert(FilterPoint { f: 1.0, h: 2.0 });
        fs.insert(FilterPoint { f: 2.0, h: 1.0 });
        fs.insert(FilterPoint { f: 0.5, h: 0.5 });
        assert_eq!(fs.entries, vec![FilterPoint { f: 0.5, h: 0.5 }]);
        fs.insert(FilterPoint { f: 0.7, h: 0.7 });
        assert_eq!(fs.entries.len(), 1);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn point() -> impl Strategy<Value = FilterPoint> {
            (-5.0..5.0f64, 0.0..5.0f64).prop_map(|(f, h)| FilterPoint { f, h })
        }

        proptest! {
            #[test]
            fn entries_stay_mutually_non_dominated(points in prop::collection::vec(point(), 1..20)) {
                let mut fs = FilterState::new(0, 1.0, 0.0);
                for p in &points {
                    fs.insert(*p);
                }
                for (i, a) in fs.entries.iter().enumerate() {
                    for (k, b) in fs.entries.iter().enumerate() {
                        prop_assert!(i == k || !(a.f <= b.f && a.h <= b.h));
                    }
                }
                // every inserted point is covered by some entry
                for p in &points {
                    prop_assert!(fs.entries.iter().any(|e| e.f <= p.f && e.h <= p.h));
                }
            }

            #[test]
            fn rejection_survives_later_inserts(
                first in prop::collection::vec(point(), 1..10),
                later in prop::collection::vec(point(), 0..10),
                q in point(),
            ) {
                let opts = FilterOptions::default();
                let mut fs = FilterState::new(0, 1.0, 0.0);
                first.iter().for_each(|p| fs.insert(*p));
                prop_assume!(!fs.acceptable(q.f, q.h, &opts));
                later.iter().for_each(|p| fs.insert(*p));
                prop_assert!(!fs.acceptable(q.f, q.h, &opts));
            }
        }
    }
}
