//! End-to-end orchestration: collect, layout, optimize, plan, refine,
//! render and export, for one scene or a seeded batch.
//!
//! Scenes in a batch run concurrently and share only the asset repository
//! and the gateway handle. Every stage failure is recorded in the manifest
//! together with an exit code instead of aborting the batch.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::assets::{collect, AssetError, AssetRepository, InstructionInput, SceneDecomposition, DEFAULT_TOP_K};
use crate::canonical::to_canonical_bytes;
use crate::export::{
    export_depth, export_json, export_mask, export_poses, export_scene, export_trajectory, sha256_hex, write_files,
    write_manifest, BundleFile, ExportError, FileEntry, Manifest, SceneEntry, MANIFEST_SCHEMA,
};
use crate::gateway::{mock_gateway, GatewayConfig, GatewayError, GatewayHandle, HttpBackend};
use crate::geometry::{CameraIntrinsics, Rotation, Vec3};
use crate::layout::{InsertRequest, LayoutConfig, LayoutError, SceneLayout, SupportSpec};
use crate::optimize::{
    aligned_rig, camera_ring, fitted_intrinsics, optimize_layout, scene_sphere, CameraRig, GatewayJudge, GatewayLocator,
    GeometricJudge, Judge, Locator, OfflineLocator, OptimizationReport, OptimizeConfig, OptimizeError,
    DEFAULT_MAX_ITER, DEFAULT_THRESHOLD, RING_RADIUS_FACTOR,
};
use crate::planner::{
    plan_from_instruction, pose_layout, refine_plan, ActionPlan, GatewayRefiner, OfflineRefiner, PlanError,
    PlanRefiner, RefineOutcome, SmoothnessBudget, DEFAULT_FPS,
};
use crate::render::render_view;

pub const EXIT_OK: i32 = 0;
pub const EXIT_OPTIMIZATION_FAILED: i32 = 2;
pub const EXIT_NON_CONVERGENT: i32 = 3;
pub const EXIT_GATEWAY: i32 = 4;
pub const EXIT_CONFIG: i32 = 5;

pub const DEFAULT_INSTRUCTION: &str = "Place two cups on a table.";
pub const DEFAULT_MOTION: &str = "the camera orbits 90 degrees for 2 seconds";
pub const DEFAULT_RESOLUTION: u32 = 128;
pub const DEFAULT_VIEWS: usize = 2;
pub const DEFAULT_MAX_ROUNDS: u32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Export(#[from] ExportError),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Gateway(_) => EXIT_GATEWAY,
            PipelineError::Config(_) | PipelineError::Export(_) => EXIT_CONFIG,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backing {
    /// Analytic judge, offline locator or offline stretch refiner.
    #[default]
    Offline,
    /// The gateway role (mock or live, whichever backs the run).
    Gateway,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalSection {
    pub top_k: usize,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        Self { top_k: DEFAULT_TOP_K }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlacementSection {
    /// Uniform random yaw per object from the scene seed; identity otherwise.
    pub random_yaw: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSection {
    pub width: u32,
    pub height: u32,
}

impl Default for RenderSection {
    fn default() -> Self {
        Self {
            width: DEFAULT_RESOLUTION,
            height: DEFAULT_RESOLUTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeSection {
    pub views: usize,
    pub threshold: f64,
    pub max_iter: u32,
    pub judge: Backing,
    pub locator: Backing,
    /// Replace the first ring camera with one looking down the vertical
    /// through `aligned_target` (or the perturbed instance).
    pub aligned_camera: bool,
    pub aligned_target: Option<String>,
    pub aligned_tilt_deg: f64,
    pub aligned_azimuth_deg: f64,
}

impl Default for OptimizeSection {
    fn default() -> Self {
        Self {
            views: DEFAULT_VIEWS,
            threshold: DEFAULT_THRESHOLD,
            max_iter: DEFAULT_MAX_ITER,
            judge: Backing::Offline,
            locator: Backing::Offline,
            aligned_camera: false,
            aligned_target: None,
            aligned_tilt_deg: 3.0,
            aligned_azimuth_deg: 0.0,
        }
    }
}

/// Lifts an instance after layout to inject a support violation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbSection {
    pub instance: String,
    pub lift_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerSection {
    pub fps: u32,
    pub max_rounds: u32,
    pub refiner: Backing,
    pub budget: SmoothnessBudget,
}

impl Default for PlannerSection {
    fn default() -> Self {
        Self {
            fps: DEFAULT_FPS,
            max_rounds: DEFAULT_MAX_ROUNDS,
            refiner: Backing::Offline,
            budget: SmoothnessBudget::default(),
        }
    }
}

/// The run configuration; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub instruction: String,
    /// Motion instruction for the planner.
    pub motion: String,
    /// Asset ids that bypass retrieval.
    pub explicit_assets: Vec<String>,
    /// Batch size; scene `i` uses seed `seed + i`.
    pub scenes: usize,
    /// Asset manifest path, relative to the config file; the demo manifest otherwise.
    pub asset_manifest: Option<PathBuf>,
    pub retrieval: RetrievalSection,
    pub layout: LayoutConfig,
    pub placement: PlacementSection,
    pub render: RenderSection,
    pub optimize: OptimizeSection,
    pub perturb: Option<PerturbSection>,
    pub planner: PlannerSection,
    pub gateway: GatewayConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            instruction: DEFAULT_INSTRUCTION.into(),
            motion: DEFAULT_MOTION.into(),
            explicit_assets: Vec::new(),
            scenes: 1,
            asset_manifest: None,
            retrieval: RetrievalSection::default(),
            layout: LayoutConfig::default(),
            placement: PlacementSection::default(),
            render: RenderSection::default(),
            optimize: OptimizeSection::default(),
            perturb: None,
            planner: PlannerSection::default(),
            gateway: GatewayConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let config: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Parses the file; a relative `asset_manifest` is resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        if let (Some(m), Some(dir)) = (&config.asset_manifest, path.parent()) {
            if m.is_relative() {
                config.asset_manifest = Some(dir.join(m));
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.instruction.trim().is_empty() && self.explicit_assets.is_empty() {
            return bad("instruction is empty".into());
        }
        if self.scenes < 1 {
            return bad("scenes must be >= 1".into());
        }
        if self.retrieval.top_k < 1 {
            return bad("retrieval.top_k must be >= 1".into());
        }
        if self.render.width < 1 || self.render.height < 1 {
            return bad("render size must be positive".into());
        }
        if self.optimize.views < 1 {
            return bad("optimize.views must be >= 1".into());
        }
        if !(self.optimize.aligned_tilt_deg.is_finite() && self.optimize.aligned_azimuth_deg.is_finite()) {
            return bad("aligned camera angles must be finite".into());
        }
        if let Some(p) = &self.perturb {
            if !p.lift_m.is_finite() {
                return bad("perturb.lift_m must be finite".into());
            }
        }
        if self.planner.fps < 1 || self.planner.max_rounds < 1 {
            return bad("planner.fps and planner.max_rounds must be >= 1".into());
        }
        self.layout.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.optimize_config().validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.planner.budget.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.gateway.validate()?;
        Ok(())
    }

    pub fn optimize_config(&self) -> OptimizeConfig {
        OptimizeConfig {
            threshold: self.optimize.threshold,
            max_iter: self.optimize.max_iter,
        }
    }

    /// SHA-256 of the canonical JSON form; the API key is never serialized.
    pub fn hash(&self) -> String {
        sha256_hex(&to_canonical_bytes(self).expect("config serializes"))
    }
}

/// How far [`run_scene`] goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Collect,
    Layout,
    Optimize,
    Plan,
    Export,
}

/// Shared, read-only state of a run.
pub struct RunContext {
    pub config: PipelineConfig,
    pub repo: AssetRepository,
    pub gateway: GatewayHandle,
    pub live: bool,
}

impl RunContext {
    /// Loads the asset manifest and builds the gateway: the live HTTP client
    /// when `live`, the rule-based mocks otherwise.
    pub fn new(config: PipelineConfig, seed: u64, live: bool) -> Result<Self, PipelineError> {
        config.validate()?;
        let repo = match &config.asset_manifest {
            Some(path) => AssetRepository::load(path).map_err(|e| PipelineError::Config(e.to_string()))?,
            None => AssetRepository::demo(),
        };
        let gateway = if live {
            let gw_config = config.gateway.clone().with_env();
            let backend = HttpBackend::new(&gw_config)?;
            GatewayHandle::new(Arc::new(backend), gw_config)?
        } else {
            mock_gateway(seed)
        };
        Ok(Self {
            config,
            repo,
            gateway,
            live,
        })
    }
}

/// Everything one scene produced, as far as it got.
#[derive(Debug, Clone, Default)]
pub struct SceneRun {
    pub name: String,
    pub seed: u64,
    pub decomposition: Option<SceneDecomposition>,
    pub layout: Option<SceneLayout>,
    pub rigs: Vec<CameraRig>,
    pub report: Option<OptimizationReport>,
    pub plan: Option<ActionPlan>,
    pub refinement: Option<RefineOutcome>,
    pub files: Vec<BundleFile>,
    pub errors: Vec<String>,
    pub exit_code: i32,
}

impl SceneRun {
    fn fail(&mut self, code: i32, message: String) {
        if self.exit_code == EXIT_OK {
            self.exit_code = code;
        }
        self.errors.push(message);
    }

    pub fn entry(&self) -> SceneEntry {
        SceneEntry {
            name: self.name.clone(),
            seed: self.seed,
            passed: self.report.as_ref().is_some_and(|r| r.passed),
            converged: self.refinement.as_ref().is_some_and(|r| r.converged),
            frames: self.refinement.as_ref().map_or(0, |r| r.sequence.frames.len()),
            exit_code: self.exit_code,
            errors: self.errors.clone(),
        }
    }
}

fn asset_exit(e: &AssetError) -> i32 {
    match e {
        AssetError::Gateway(_) => EXIT_GATEWAY,
        _ => EXIT_CONFIG,
    }
}

fn optimize_exit(e: &OptimizeError) -> i32 {
    match e {
        OptimizeError::Gateway(_) | OptimizeError::VerdictMismatch(_) => EXIT_GATEWAY,
        _ => EXIT_CONFIG,
    }
}

fn plan_exit(e: &PlanError) -> i32 {
    match e {
        PlanError::Gateway(_) | PlanError::UnknownActor(_) | PlanError::InvalidPlan(_) => EXIT_GATEWAY,
        _ => EXIT_CONFIG,
    }
}

/// Instantiates every requested asset of a decomposition into one layout.
///
/// Supports are inserted before the objects resting on them; explicit
/// targets are kept verbatim, everything else is auto-placed. Labels that
/// repeat across sub-scenes get a `_s{index}` suffix.
pub fn compose_layout(
    decomposition: &SceneDecomposition,
    repo: &AssetRepository,
    config: &LayoutConfig,
    mut yaw_rng: Option<&mut ChaCha8Rng>,
) -> Result<SceneLayout, LayoutError> {
    struct Pending<'a> {
        id: String,
        asset_id: &'a str,
        target: Option<Vec3>,
        support: Option<SupportSpec>,
    }
    let mut layout = SceneLayout::new(config.clone())?;
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    for sub in &decomposition.sub_scenes {
        for a in &sub.requested_assets {
            *seen.entry(a.label.as_str()).or_default() += 1;
        }
    }
    let mut pending = Vec::new();
    let mut constraints = Vec::new();
    for (i, sub) in decomposition.sub_scenes.iter().enumerate() {
        let id_of = |label: &str| {
            if seen.get(label).copied().unwrap_or(0) > 1 {
                format!("{label}_s{i}")
            } else {
                label.to_string()
            }
        };
        for c in &sub.constraints {
            let mut c = c.clone();
            c.subject = id_of(&c.subject);
            c.reference = id_of(&c.reference);
            constraints.push(c);
        }
        for a in &sub.requested_assets {
            let id = id_of(&a.label);
            let support = constraints
                .iter()
                .filter(|c| c.subject == id)
                .find_map(SupportSpec::from_constraint);
            pending.push(Pending {
                asset_id: a.asset_id.as_deref().unwrap_or_default(),
                target: sub.explicit_placements.iter().find(|p| p.label == a.label).map(|p| p.target),
                support,
                id,
            });
        }
    }
    // Insert in dependency order; a support cycle is broken by dropping the support.
    while !pending.is_empty() {
        let ready = pending
            .iter()
            .position(|p| p.support.as_ref().is_none_or(|s| layout.instance(&s.support_id).is_some()))
            .or_else(|| {
                pending
                    .iter()
                    .position(|p| p.support.as_ref().is_some_and(|s| !pending.iter().any(|q| q.id == s.support_id)))
            });
        let mut p = match ready {
            Some(i) => pending.remove(i),
            None => {
                let mut p = pending.remove(0);
                p.support = None;
                p
            }
        };
        if p.support.as_ref().is_some_and(|s| layout.instance(&s.support_id).is_none()) {
            p.support = None;
        }
        let asset = repo
            .get(p.asset_id)
            .ok_or_else(|| LayoutError::UnknownInstance(format!("asset `{}` of {}", p.asset_id, p.id)))?;
        let rotation = match yaw_rng.as_deref_mut() {
            Some(rng) => Rotation::from_yaw(rng.gen_range(0.0..std::f64::consts::TAU)),
            None => Rotation::IDENTITY,
        };
        let mut req = InsertRequest::new(p.id, asset).with_support(p.support).rotated(rotation);
        if let Some(t) = p.target {
            req = req.at(t);
        }
        layout.insert_object(req)?;
    }
    for c in constraints {
        layout.add_constraint(c)?;
    }
    Ok(layout)
}

/// Raises an instance (and anything resting on it) by `lift_m`.
pub fn lift_instance(layout: &mut SceneLayout, id: &str, lift_m: f64) -> Result<(), LayoutError> {
    let pos = layout.instance(id).ok_or_else(|| LayoutError::UnknownInstance(id.into()))?.position();
    layout.relocate(id, pos + Vec3::Z * lift_m)
}

/// The optimization cameras: an equal-azimuth ring, or an aligned camera
/// above `target` followed by ring cameras.
pub fn build_rigs(layout: &SceneLayout, config: &PipelineConfig) -> Result<Vec<CameraRig>, OptimizeError> {
    let o = &config.optimize;
    let (w, h) = (config.render.width, config.render.height);
    let target = o
        .aligned_target
        .as_deref()
        .or(config.perturb.as_ref().map(|p| p.instance.as_str()));
    match (o.aligned_camera, target) {
        (true, Some(id)) => {
            let inst = layout.instance(id).ok_or_else(|| OptimizeError::UnknownInstance(id.into()))?;
            aligned_rig(layout, inst.world_center(), o.views, w, h, o.aligned_tilt_deg, o.aligned_azimuth_deg)
        }
        (true, None) => Err(OptimizeError::InvalidConfig("aligned_camera needs aligned_target or perturb".into())),
        (false, _) => camera_ring(layout, o.views, w, h, 0.0),
    }
}

/// Intrinsics for frame rendering, fitted like the ring cameras.
pub fn frame_intrinsics(layout: &SceneLayout, width: u32, height: u32) -> Result<CameraIntrinsics, OptimizeError> {
    let (_, diag) = scene_sphere(layout);
    fitted_intrinsics(width, height, diag / 2.0, RING_RADIUS_FACTOR * diag)
}

fn json_file(dir: &str, name: &str, bytes: Result<Vec<u8>, ExportError>, run: &mut SceneRun) {
    match bytes {
        Ok(b) => run.files.push(BundleFile::new(format!("{dir}/{name}"), b)),
        Err(e) => run.fail(EXIT_CONFIG, format!("export {name}: {e}")),
    }
}

fn refinement_value(r: &RefineOutcome) -> serde_json::Value {
    json!({
        "rounds_used": r.rounds_used,
        "converged": r.converged,
        "violations_before": r.violations_before,
        "violations_after": r.violations_after,
        "history": r.history,
        "errors": r.errors,
    })
}

/// Runs one scene up to `until`, collecting every produced file in memory.
pub fn run_scene(ctx: &RunContext, index: usize, seed: u64, until: Stage) -> SceneRun {
    let config = &ctx.config;
    let name = format!("scene_{index:03}");
    let mut run = SceneRun {
        name: name.clone(),
        seed,
        ..SceneRun::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let input = InstructionInput {
        text: config.instruction.clone(),
        explicit_assets: config.explicit_assets.clone(),
    };
    let decomposition = match collect(&input, &ctx.repo, &ctx.gateway, config.retrieval.top_k) {
        Ok(d) => d,
        Err(e) => {
            run.fail(asset_exit(&e), format!("collect: {e}"));
            return run;
        }
    };
    run.decomposition = Some(decomposition.clone());
    if until == Stage::Collect {
        return run;
    }

    let yaw = config.placement.random_yaw.then_some(&mut rng);
    let mut layout = match compose_layout(&decomposition, &ctx.repo, &config.layout, yaw) {
        Ok(l) => l,
        Err(e) => {
            run.fail(EXIT_CONFIG, format!("layout: {e}"));
            return run;
        }
    };
    if let Some(p) = &config.perturb {
        if let Err(e) = lift_instance(&mut layout, &p.instance, p.lift_m) {
            run.fail(EXIT_CONFIG, format!("perturb: {e}"));
            return run;
        }
    }
    run.layout = Some(layout.clone());
    if until == Stage::Layout {
        run.files.push(BundleFile::new(format!("{name}/scene.json"), export_scene(&layout)));
        return run;
    }

    let rigs = match build_rigs(&layout, config) {
        Ok(r) => r,
        Err(e) => {
            run.fail(optimize_exit(&e), format!("cameras: {e}"));
            return run;
        }
    };
    run.rigs = rigs.clone();
    let (geometric, offline) = (GeometricJudge, OfflineLocator);
    let gateway_judge = GatewayJudge::new(&ctx.gateway);
    let gateway_locator = GatewayLocator::new(&ctx.gateway);
    let judge: &dyn Judge = match config.optimize.judge {
        Backing::Offline => &geometric,
        Backing::Gateway => &gateway_judge,
    };
    let locator: &dyn Locator = match config.optimize.locator {
        Backing::Offline => &offline,
        Backing::Gateway => &gateway_locator,
    };
    match optimize_layout(&layout, &rigs, judge, locator, &config.optimize_config()) {
        Ok((optimized, report)) => {
            if !report.passed {
                run.fail(EXIT_OPTIMIZATION_FAILED, format!("optimization did not pass after {} iterations", report.iterations));
            }
            layout = optimized;
            run.report = Some(report);
        }
        Err(e) => {
            run.fail(optimize_exit(&e), format!("optimize: {e}"));
            return run;
        }
    }
    run.layout = Some(layout.clone());
    run.files.push(BundleFile::new(format!("{name}/scene.json"), export_scene(&layout)));
    if until == Stage::Optimize {
        return run;
    }

    let plan = match plan_from_instruction(&config.motion, &layout, &ctx.gateway, config.planner.fps) {
        Ok(p) => p,
        Err(e) => {
            run.fail(plan_exit(&e), format!("plan: {e}"));
            return finish_report(run);
        }
    };
    run.plan = Some(plan.clone());
    let intrinsics = match frame_intrinsics(&layout, config.render.width, config.render.height) {
        Ok(k) => k,
        Err(e) => {
            run.fail(EXIT_CONFIG, format!("frame intrinsics: {e}"));
            return finish_report(run);
        }
    };
    let gateway_refiner = GatewayRefiner::new(&ctx.gateway, Some(intrinsics));
    let refiner: &dyn PlanRefiner = match config.planner.refiner {
        Backing::Offline => &OfflineRefiner,
        Backing::Gateway => &gateway_refiner,
    };
    let outcome = match refine_plan(&plan, &layout, &config.planner.budget, refiner, config.planner.max_rounds) {
        Ok(o) => o,
        Err(e) => {
            run.fail(plan_exit(&e), format!("refine: {e}"));
            return finish_report(run);
        }
    };
    if !outcome.converged {
        run.fail(
            EXIT_NON_CONVERGENT,
            format!("refinement left {} violations after {} rounds", outcome.violations_after, outcome.rounds_used),
        );
    }
    json_file(&name, "plan.json", export_json(&outcome.plan), &mut run);
    run.refinement = Some(outcome);
    if until == Stage::Plan {
        return finish_report(run);
    }

    let seq = &run.refinement.as_ref().expect("set above").sequence;
    let rendered: Vec<Result<(Vec<u8>, Vec<u8>), String>> = seq
        .frames
        .par_iter()
        .map(|frame| {
            let posed = pose_layout(&layout, frame).map_err(|e| e.to_string())?;
            let view = render_view(&posed, &intrinsics, &frame.camera.pose, 0);
            let mask = export_mask(&view).map_err(|e| e.to_string())?;
            Ok((export_depth(&view), mask))
        })
        .collect();
    let mut frame_files = Vec::new();
    for (i, r) in rendered.into_iter().enumerate() {
        match r {
            Ok((depth, mask)) => {
                frame_files.push(BundleFile::new(format!("{name}/depth_{i:04}.pfm"), depth));
                frame_files.push(BundleFile::new(format!("{name}/mask_{i:04}.pgm"), mask));
            }
            Err(e) => {
                run.fail(EXIT_CONFIG, format!("frame {i}: {e}"));
                break;
            }
        }
    }
    run.files.extend(frame_files);
    let seq = &run.refinement.as_ref().expect("set above").sequence;
    let trajectory = export_trajectory(seq, &intrinsics);
    let poses = export_poses(seq);
    run.files.push(BundleFile::new(format!("{name}/trajectory.json"), trajectory));
    run.files.push(BundleFile::new(format!("{name}/poses.json"), poses));
    finish_report(run)
}

fn finish_report(mut run: SceneRun) -> SceneRun {
    let value = json!({
        "optimization": run.report,
        "refinement": run.refinement.as_ref().map(refinement_value),
        "cameras": run.rigs,
        "errors": run.errors,
        "exit_code": run.exit_code,
    });
    let name = run.name.clone();
    json_file(&name, "report.json", export_json(&value), &mut run);
    run
}

/// What a finished batch wrote.
#[derive(Debug, Clone)]
pub struct BundleOutcome {
    pub manifest: Manifest,
    pub manifest_bytes: Vec<u8>,
    pub exit_code: i32,
}

/// Runs every scene of the batch concurrently, writes each scene's files
/// as soon as it finishes and then the verified manifest.
pub fn run_batch(ctx: &RunContext, seed: u64, out_dir: &Path) -> Result<BundleOutcome, PipelineError> {
    let results: Vec<Result<(SceneEntry, Vec<FileEntry>), ExportError>> = (0..ctx.config.scenes)
        .into_par_iter()
        .map(|i| {
            let run = run_scene(ctx, i, seed.wrapping_add(i as u64), Stage::Export);
            let entries = write_files(out_dir, &run.files)?;
            Ok((run.entry(), entries))
        })
        .collect();
    let mut scenes = Vec::new();
    let mut files = Vec::new();
    for r in results {
        let (entry, entries) = r?;
        scenes.push(entry);
        files.extend(entries);
    }
    let exit_code = scenes.iter().map(|s| s.exit_code).find(|&c| c != EXIT_OK).unwrap_or(EXIT_OK);
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA,
        config_hash: ctx.config.hash(),
        scenes,
        files,
        exit_code,
    };
    let (manifest, manifest_bytes) = write_manifest(out_dir, manifest)?;
    Ok(BundleOutcome {
        manifest,
        manifest_bytes,
        exit_code,
    })
}

/// Loads `config_path` (defaults when `None`) and runs the batch offline.
pub fn run_pipeline(config_path: Option<&Path>, seed: u64, out_dir: &Path) -> Result<BundleOutcome, PipelineError> {
    let config = match config_path {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    run_batch(&RunContext::new(config, seed, false)?, seed, out_dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let config = PipelineConfig::default();
        let text = toml::to_string(&config).unwrap();
        assert_eq!(PipelineConfig::from_toml(&text).unwrap(), config);
        assert_eq!(PipelineConfig::from_toml("").unwrap(), config);
    }

    #[test]
    fn bad_config_is_rejected() {
        assert!(PipelineConfig::from_toml("scenes = 0").is_err());
        assert!(PipelineConfig::from_toml("colour = 3").is_err());
        assert!(PipelineConfig::from_toml("[optimize]\nthreshold = 1.5").is_err());
        let e = PipelineConfig::from_toml("[render]\nwidth = 0").unwrap_err();
        assert_eq!(e.exit_code(), EXIT_CONFIG);
    }

    #[test]
    fn api_key_never_reaches_the_hash() {
        let mut a = PipelineConfig::default();
        let h = a.hash();
        a.gateway.api_key = Some("secret".into());
        assert_eq!(a.hash(), h);
        assert!(!String::from_utf8(to_canonical_bytes(&a).unwrap()).unwrap().contains("secret"));
    }

    #[test]
    fn two_cups_compose_on_the_table() {
        let ctx = RunContext::new(PipelineConfig::default(), 7, false).unwrap();
        let run = run_scene(&ctx, 0, 7, Stage::Layout);
        assert!(run.errors.is_empty(), "{:?}", run.errors);
        let layout = run.layout.unwrap();
        let table = layout.instance("table").unwrap();
        for cup in ["cup_1", "cup_2"] {
            let c = layout.instance(cup).unwrap();
            assert!((c.bottom_z() - table.support_height()).abs() < 1e-9);
        }
        assert!(layout.overlapping_pairs().is_empty());
    }

    #[test]
    fn unknown_noun_is_a_config_failure() {
        let config = PipelineConfig {
            instruction: "a zorblax on a table".into(),
            ..PipelineConfig::default()
        };
        let ctx = RunContext::new(config, 0, false).unwrap();
        let run = run_scene(&ctx, 0, 0, Stage::Export);
        assert_eq!(run.exit_code, EXIT_CONFIG);
        assert!(run.errors[0].contains("zorblax"));
    }
}
