//! Multi-view verification: render, judge every constraint per view, average,
//! and move the worst offender until every constraint clears the threshold.

mod judge;
mod relocate;
mod rig;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use judge::{
    coverage, geometric_judge, holds_between, holds_in_world, judge_request, Coverage, GatewayJudge, GeometricJudge, Judge,
    JudgeVerdict, ON_FALLOFF_PX, ON_TOLERANCE_PX, UNINFORMATIVE_SCORE,
};
pub use relocate::{apply_relocation, locator_request, propose_relocation, GatewayLocator, Locator, OfflineLocator};
pub use rig::{
    aligned_camera, aligned_rig, camera_ring, fitted_intrinsics, scene_sphere, CameraRig, RING_ELEVATION_DEG,
    RING_RADIUS_FACTOR,
};

use crate::assets::{Predicate, SpatialConstraint};
use crate::gateway::GatewayError;
use crate::geometry::{GeometryError, Vec3};
use crate::layout::{LayoutError, SceneLayout};
use crate::render::{render_view, RenderError, RenderedView};

pub const DEFAULT_THRESHOLD: f64 = 0.8;
pub const DEFAULT_MAX_ITER: u32 = 5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OptimizeError {
    #[error("no verdicts to aggregate")]
    NoVerdicts,
    #[error("unknown instance `{0}`")]
    UnknownInstance(String),
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
    #[error("judge reply mismatch: {0}")]
    VerdictMismatch(String),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Mean of per-view scores, kept inside `[min, max]` of its inputs.
pub fn aggregate_scores(scores: &[f64]) -> Result<f64, OptimizeError> {
    if scores.is_empty() {
        return Err(OptimizeError::NoVerdicts);
    }
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    Ok(mean.clamp(lo, hi))
}

/// Pass iff every aggregated score reaches the threshold.
pub fn passes(scores: impl IntoIterator<Item = f64>, threshold: f64) -> bool {
    scores.into_iter().all(|s| s >= threshold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeConfig {
    pub threshold: f64,
    pub max_iter: u32,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl OptimizeConfig {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(OptimizeError::InvalidConfig(format!("threshold must be in (0, 1], got {}", self.threshold)));
        }
        if self.max_iter < 1 {
            return Err(OptimizeError::InvalidConfig("max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relocation {
    pub iteration: u32,
    pub instance_id: String,
    pub constraint: String,
    pub old_position: Vec3,
    pub new_position: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u32,
    pub scores: BTreeMap<String, f64>,
    pub violations: usize,
    /// Whether this iteration's layout became the best seen so far.
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub iterations: u32,
    pub threshold: f64,
    pub passed: bool,
    /// Aggregated score per constraint key, for the returned layout.
    pub per_constraint_scores: BTreeMap<String, f64>,
    /// Per-view scores per constraint key, for the returned layout.
    pub per_view_scores: BTreeMap<String, Vec<f64>>,
    pub relocations: Vec<Relocation>,
    pub history: Vec<IterationRecord>,
    /// Bottom height minus support height for each `on` subject in the returned layout.
    pub support_gaps: BTreeMap<String, f64>,
    pub errors: Vec<String>,
}

/// Renders every rig in parallel; views come back in rig order.
pub fn render_rigs(layout: &SceneLayout, rigs: &[CameraRig]) -> Vec<RenderedView> {
    rigs.par_iter()
        .enumerate()
        .map(|(i, r)| render_view(layout, &r.intrinsics, &r.pose, i as u32))
        .collect()
}

struct Evaluation {
    scores: BTreeMap<String, f64>,
    per_view: BTreeMap<String, Vec<f64>>,
    /// (constraint, aggregated score) in constraint order.
    ordered: Vec<(SpatialConstraint, f64)>,
}

impl Evaluation {
    fn violations(&self, t: f64) -> usize {
        self.ordered.iter().filter(|(_, s)| *s < t).count()
    }

    fn total(&self) -> f64 {
        self.ordered.iter().map(|(_, s)| s).sum()
    }
}

fn evaluate(layout: &SceneLayout, rigs: &[CameraRig], judge: &dyn Judge) -> Result<Evaluation, OptimizeError> {
    let views = render_rigs(layout, rigs);
    let results: Vec<Result<Vec<JudgeVerdict>, OptimizeError>> = layout
        .constraints()
        .par_iter()
        .map(|c| judge.judge(layout, &views, c))
        .collect();
    let mut eval = Evaluation {
        scores: BTreeMap::new(),
        per_view: BTreeMap::new(),
        ordered: Vec::new(),
    };
    for (c, verdicts) in layout.constraints().iter().zip(results) {
        let mut verdicts = verdicts?;
        verdicts.sort_by_key(|v| v.view_index);
        let scores: Vec<f64> = verdicts.iter().map(|v| v.score).collect();
        let s = aggregate_scores(&scores)?;
        eval.scores.insert(c.key(), s);
        eval.per_view.insert(c.key(), scores);
        eval.ordered.push((c.clone(), s));
    }
    Ok(eval)
}

fn support_gaps(layout: &SceneLayout) -> BTreeMap<String, f64> {
    layout
        .constraints()
        .iter()
        .filter(|c| c.predicate == Predicate::On)
        .filter_map(|c| {
            let a = layout.instance(&c.subject)?;
            let b = layout.instance(&c.reference)?;
            Some((c.subject.clone(), a.bottom_z() - b.support_height()))
        })
        .collect()
}

/// Verifies `layout` from every rig and relocates the subject of the
/// worst-scoring constraint, one object per iteration.
///
/// Returns the best layout seen (fewest violations, then highest total
/// score). Relocation and judge failures are recorded in the report; they end
/// the loop but are not returned as errors.
pub fn optimize_layout(
    layout: &SceneLayout,
    rigs: &[CameraRig],
    judge: &dyn Judge,
    locator: &dyn Locator,
    config: &OptimizeConfig,
) -> Result<(SceneLayout, OptimizationReport), OptimizeError> {
    config.validate()?;
    if rigs.is_empty() {
        return Err(OptimizeError::InvalidConfig("at least one camera is required".into()));
    }
    let t = config.threshold;
    let mut current = layout.clone();
    let mut best: Option<(SceneLayout, Evaluation)> = None;
    let mut history = Vec::new();
    let mut relocations = Vec::new();
    let mut errors = Vec::new();
    let mut iterations = 0;

    for iteration in 1..=config.max_iter {
        iterations = iteration;
        let eval = match evaluate(&current, rigs, judge) {
            Ok(e) => e,
            Err(e) => {
                errors.push(format!("iteration {iteration}: judge failed: {e}"));
                break;
            }
        };
        let violations = eval.violations(t);
        let accepted = match &best {
            None => true,
            Some((_, b)) => {
                let bv = b.violations(t);
                violations < bv || (violations == bv && eval.total() > b.total())
            }
        };
        history.push(IterationRecord {
            iteration,
            scores: eval.scores.clone(),
            violations,
            accepted,
        });
        let worst = eval
            .ordered
            .iter()
            .filter(|(_, s)| *s < t)
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .map(|(c, _)| c.clone());
        if accepted {
            best = Some((current.clone(), eval));
        }
        let Some(worst) = worst else { break };
        if iteration == config.max_iter {
            break;
        }
        let old = current.instance(&worst.subject).map(|i| i.position());
        match locator
            .propose(&current, &worst, rigs)
            .and_then(|p| apply_relocation(&mut current, &worst, p).map(|_| p))
        {
            Ok(new_position) => relocations.push(Relocation {
                iteration,
                instance_id: worst.subject.clone(),
                constraint: worst.key(),
                old_position: old.unwrap_or(new_position),
                new_position,
            }),
            Err(e) => {
                errors.push(format!("iteration {iteration}: relocating {} failed: {e}", worst.subject));
                break;
            }
        }
    }

    let (best_layout, eval) = match best {
        Some(b) => b,
        None => {
            // The very first evaluation failed; report the input unchanged.
            let report = OptimizationReport {
                iterations,
                threshold: t,
                passed: false,
                per_constraint_scores: BTreeMap::new(),
                per_view_scores: BTreeMap::new(),
                relocations,
                history,
                support_gaps: support_gaps(layout),
                errors,
            };
            return Ok((layout.clone(), report));
        }
    };
    let report = OptimizationReport {
        iterations,
        threshold: t,
        passed: eval.violations(t) == 0,
        per_constraint_scores: eval.scores,
        per_view_scores: eval.per_view,
        relocations,
        history,
        support_gaps: support_gaps(&best_layout),
        errors,
    };
    Ok((best_layout, report))
}
