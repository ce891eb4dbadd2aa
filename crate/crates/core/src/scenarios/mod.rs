//! Concrete experiments built on the constraint builders.

pub mod baselines;
pub mod coverage;
pub mod formation;
pub mod navigation;
pub mod shared;
pub mod signals;
pub mod single;

pub use baselines::{baseline_pairwise, PairwiseCost, PairwiseScenario};
pub use coverage::{baseline_peragent_tv, coverage_clf, coverage_total, CoverageScenario, CoverageSpec, GradientTerms};
pub use formation::{formation_clf, formation_terms, formation_total, formation_value, FormationScenario, FormationSpec};
pub use navigation::{navigation_constraints, NavigationScenario, NavigationSpec, Obstacle};
pub use shared::SharedTracking;
pub use signals::{LeaderPath, SizeLaw};
pub use single::{SingleAgent, SingleFormulation};
