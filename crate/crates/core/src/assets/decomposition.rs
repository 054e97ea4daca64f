use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;

/// Default distance for `near` when the instruction gives none, in meters.
pub const DEFAULT_NEAR_DISTANCE: f64 = 0.3;

/// The closed set of spatial predicates the judge can evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    On,
    Above,
    LeftOf,
    RightOf,
    InFrontOf,
    Behind,
    Near,
    Inside,
}

impl Predicate {
    pub const ALL: [Predicate; 8] = [
        Predicate::On,
        Predicate::Above,
        Predicate::LeftOf,
        Predicate::RightOf,
        Predicate::InFrontOf,
        Predicate::Behind,
        Predicate::Near,
        Predicate::Inside,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Predicate::On => "on",
            Predicate::Above => "above",
            Predicate::LeftOf => "left_of",
            Predicate::RightOf => "right_of",
            Predicate::InFrontOf => "in_front_of",
            Predicate::Behind => "behind",
            Predicate::Near => "near",
            Predicate::Inside => "inside",
        }
    }

    /// Predicates whose meaning depends on a viewpoint.
    pub fn is_view_relative(&self) -> bool {
        matches!(
            self,
            Predicate::LeftOf | Predicate::RightOf | Predicate::InFrontOf | Predicate::Behind
        )
    }

    /// Predicates that make the subject rest on (or in) the reference.
    pub fn is_support(&self) -> bool {
        matches!(self, Predicate::On | Predicate::Inside)
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A spatial relation between two labelled objects.
///
/// View-relative predicates are anchored in `reference_view` (view 0 unless
/// stated otherwise).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpatialConstraint {
    pub predicate: Predicate,
    pub subject: String,
    pub reference: String,
    #[serde(default)]
    pub param: Option<f64>,
    #[serde(default)]
    pub reference_view: Option<u32>,
}

impl SpatialConstraint {
    /// Fills in the defaults: `near` distance and the reference view for
    /// view-relative predicates.
    pub fn new(predicate: Predicate, subject: impl Into<String>, reference: impl Into<String>) -> Self {
        Self {
            predicate,
            subject: subject.into(),
            reference: reference.into(),
            param: (predicate == Predicate::Near).then_some(DEFAULT_NEAR_DISTANCE),
            reference_view: predicate.is_view_relative().then_some(0),
        }
    }

    pub fn with_param(mut self, param: f64) -> Self {
        self.param = Some(param);
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.subject.is_empty() || self.reference.is_empty() {
            return Err(format!("{self}: empty subject or reference"));
        }
        if self.subject == self.reference {
            return Err(format!("{self}: subject and reference must differ"));
        }
        if let Some(p) = self.param {
            if !(p.is_finite() && p > 0.0) {
                return Err(format!("{self}: param must be a positive distance"));
            }
        }
        if self.predicate == Predicate::Near && self.param.is_none() {
            return Err(format!("{self}: near requires a distance"));
        }
        Ok(())
    }

    /// Stable key, e.g. `on(cup_1,table)`.
    pub fn key(&self) -> String {
        format!("{}({},{})", self.predicate, self.subject, self.reference)
    }
}

impl fmt::Display for SpatialConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}, {})", self.predicate, self.subject, self.reference)
    }
}

/// One requested object. `label` names the instance in constraints;
/// `asset_id` is filled by retrieval or pinned by explicit input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetRequest {
    pub label: String,
    pub query: String,
    #[serde(default)]
    pub asset_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitPlacement {
    pub label: String,
    pub target: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubScene {
    pub description: String,
    pub requested_assets: Vec<AssetRequest>,
    #[serde(default)]
    pub constraints: Vec<SpatialConstraint>,
    #[serde(default)]
    pub explicit_placements: Vec<ExplicitPlacement>,
}

/// Ordered sub-scenes, each with a description, asset list and constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDecomposition {
    pub sub_scenes: Vec<SubScene>,
}

impl SceneDecomposition {
    pub fn validate(&self) -> Result<(), String> {
        if self.sub_scenes.is_empty() {
            return Err("at least one sub_scene is required".into());
        }
        for (i, sub) in self.sub_scenes.iter().enumerate() {
            if sub.requested_assets.is_empty() {
                return Err(format!("sub_scene {i}: no requested assets"));
            }
            let mut labels = BTreeSet::new();
            for a in &sub.requested_assets {
                if a.label.is_empty() || a.query.trim().is_empty() {
                    return Err(format!("sub_scene {i}: empty label or query"));
                }
                if !labels.insert(a.label.as_str()) {
                    return Err(format!("sub_scene {i}: duplicate label {}", a.label));
                }
            }
            for c in &sub.constraints {
                c.validate().map_err(|e| format!("sub_scene {i}: {e}"))?;
                for l in [&c.subject, &c.reference] {
                    if !labels.contains(l.as_str()) {
                        return Err(format!("sub_scene {i}: {c} references unknown label {l}"));
                    }
                }
            }
            for p in &sub.explicit_placements {
                if !labels.contains(p.label.as_str()) {
                    return Err(format!("sub_scene {i}: placement for unknown label {}", p.label));
                }
                if !p.target.is_finite() {
                    return Err(format!("sub_scene {i}: non-finite placement target"));
                }
            }
        }
        Ok(())
    }

    pub fn labels(&self) -> impl Iterator<Item = &AssetRequest> {
        self.sub_scenes.iter().flat_map(|s| s.requested_assets.iter())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_cups() -> SceneDecomposition {
        SceneDecomposition {
            sub_scenes: vec![SubScene {
                description: "two cups on a table".into(),
                requested_assets: vec![
                    AssetRequest {
                        label: "cup_1".into(),
                        query: "cup".into(),
                        asset_id: None,
                    },
                    AssetRequest {
                        label: "table".into(),
                        query: "table".into(),
                        asset_id: None,
                    },
                ],
                constraints: vec![SpatialConstraint::new(Predicate::On, "cup_1", "table")],
                explicit_placements: vec![],
            }],
        }
    }

    #[test]
    fn constraint_defaults() {
        let near = SpatialConstraint::new(Predicate::Near, "mug", "laptop");
        assert_eq!(near.param, Some(DEFAULT_NEAR_DISTANCE));
        assert_eq!(near.reference_view, None);
        let left = SpatialConstraint::new(Predicate::LeftOf, "mug", "laptop");
        assert_eq!(left.reference_view, Some(0));
        assert_eq!(left.key(), "left_of(mug,laptop)");
    }

    #[test]
    fn constraint_validation() {
        assert!(SpatialConstraint::new(Predicate::On, "a", "a").validate().is_err());
        assert!(SpatialConstraint::new(Predicate::Near, "a", "b").with_param(-1.0).validate().is_err());
        let mut c = SpatialConstraint::new(Predicate::Near, "a", "b");
        c.param = None;
        assert!(c.validate().is_err());
    }

    #[test]
    fn predicate_set_is_closed_in_json() {
        let c: Result<SpatialConstraint, _> =
            serde_json::from_str(r#"{"predicate": "under", "subject": "a", "reference": "b"}"#);
        assert!(c.is_err());
        for p in Predicate::ALL {
            let s = serde_json::to_string(&p).unwrap();
            assert_eq!(s, format!("\"{}\"", p.as_str()));
        }
    }

    #[test]
    fn decomposition_validation() {
        let mut d = two_cups();
        assert!(d.validate().is_ok());
        d.sub_scenes[0].constraints.push(SpatialConstraint::new(Predicate::On, "cup_2", "table"));
        assert!(d.validate().unwrap_err().contains("unknown label cup_2"));

        let mut d = two_cups();
        d.sub_scenes[0].explicit_placements.push(ExplicitPlacement {
            label: "lamp".into(),
            target: Vec3::ZERO,
        });
        assert!(d.validate().is_err());

        assert!(SceneDecomposition { sub_scenes: vec![] }.validate().is_err());
    }
}
