//! Scenario configuration files.
//!
//! A scenario is a TOML document with top-level `name`, `mode`, `seed` and optional
//! `output`, followed by `[domain]`, `[region]`, `[grid]` and at least one of
//! `[flow]` and `[translator]`. Checks are enabled by their `[checks.*]` tables.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::elliptic::TranslatorParams;
use crate::error::{FlowError, Result};
use crate::geometry::{BarrierDomain, BarrierShape, Bounds, InitialRegion, Mode, RegionShape, Vec2};
use crate::levelset::FlowConfig;

fn planar() -> Mode {
    Mode::Planar
}
fn yes() -> bool {
    true
}
fn dt_factor() -> f64 {
    0.2
}
fn band_width() -> usize {
    8
}
fn reinit_every() -> usize {
    10
}
fn outputs() -> usize {
    10
}
fn blowup_threshold() -> f64 {
    0.25
}
fn tau() -> f64 {
    0.1
}
fn one() -> f64 {
    1.0
}
fn kappa_step() -> f64 {
    0.1
}
fn kappa_floor() -> f64 {
    1.0 / 256.0
}
fn newton_tol() -> f64 {
    1e-10
}
fn max_newton() -> usize {
    40
}
fn lambda_f() -> f64 {
    10.0
}
fn theta_f() -> f64 {
    100.0
}
fn five_percent() -> f64 {
    0.05
}
fn two_percent() -> f64 {
    0.02
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default = "planar")]
    pub mode: Mode,
    /// Seed of the randomized competitor and perturbation generators.
    #[serde(default)]
    pub seed: u64,
    /// Output root; the CLI flag and `FBFLOW_OUT` take precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    pub domain: DomainSpec,
    pub region: RegionSpec,
    pub grid: GridSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translator: Option<TranslatorSpec>,
    #[serde(default)]
    pub checks: CheckSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DomainSpec {
    Disc {
        #[serde(default)]
        center: [f64; 2],
        radius: f64,
    },
    Annulus {
        #[serde(default)]
        center: [f64; 2],
        inner: f64,
        outer: f64,
    },
    Halfplane {
        normal: [f64; 2],
        #[serde(default)]
        offset: f64,
    },
    Slab {
        normal: [f64; 2],
        #[serde(default)]
        center: f64,
        half_width: f64,
    },
    Ball {
        radius: f64,
    },
    /// Two lobes joined by a neck; every field defaults to the standard dumbbell.
    Dumbbell {
        #[serde(default = "one")]
        lobe_radius: f64,
        #[serde(default = "Dumbbell::offset")]
        lobe_offset: f64,
        #[serde(default = "Dumbbell::neck")]
        neck_radius: f64,
        #[serde(default = "Dumbbell::waist")]
        waist: f64,
        #[serde(default = "Dumbbell::blend")]
        blend: f64,
    },
}

struct Dumbbell;

impl Dumbbell {
    fn offset() -> f64 {
        1.8
    }
    fn neck() -> f64 {
        0.35
    }
    fn waist() -> f64 {
        0.02
    }
    fn blend() -> f64 {
        0.15
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RegionSpec {
    Disc {
        #[serde(default)]
        center: [f64; 2],
        radius: f64,
    },
    /// Disc meeting the barrier orthogonally, centred near the barrier point `foot`.
    HalfDisc { foot: [f64; 2], radius: f64 },
    Band { normal: [f64; 2], lo: f64, hi: f64 },
    Torus {
        core_radius: f64,
        tube_radius: f64,
        #[serde(default)]
        height: f64,
    },
    HalfTorus { core_radius: f64, tube_radius: f64 },
    /// Tubular neighbourhood of a barrier cross-section.
    BarrierOffset {
        normal: [f64; 2],
        #[serde(default)]
        offset: f64,
        thickness: f64,
        #[serde(default = "yes")]
        two_sided: bool,
    },
    AnnularShell {
        #[serde(default)]
        center: [f64; 2],
        inner: f64,
        outer: f64,
    },
    /// Horizontal band of half-width `half_width` with a disc hole at the origin.
    SlabWithHole { half_width: f64, hole_radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub h: f64,
    /// Computational box `[[x0, y0], [x1, y1]]`, required for unbounded barriers.
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    pub window: Option<[[f64; 2]; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub horizon: f64,
    #[serde(default = "dt_factor")]
    pub dt_factor: f64,
    #[serde(default = "band_width")]
    pub band_width: usize,
    #[serde(default = "reinit_every")]
    pub reinit_every: usize,
    /// Number of evenly spaced snapshots.
    #[serde(default = "outputs")]
    pub outputs: usize,
    #[serde(default = "yes")]
    pub stop_at_extinction: bool,
    #[serde(default = "blowup_threshold")]
    pub blowup_threshold: f64,
    #[serde(default = "yes")]
    pub mean_convex: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslatorSpec {
    pub eps: f64,
    pub sigma: f64,
    #[serde(default = "tau")]
    pub tau: f64,
    #[serde(default = "one")]
    pub kappa: f64,
    #[serde(default = "kappa_step")]
    pub kappa_step: f64,
    #[serde(default = "kappa_floor")]
    pub kappa_floor: f64,
    #[serde(default = "newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "max_newton")]
    pub max_newton: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(default = "lambda_f")]
    pub lambda_f: f64,
    #[serde(default = "theta_f")]
    pub theta_f: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_ext: Option<f64>,
    /// Additional `eps` and `sigma` values solved on the same region, for the
    /// monotonicity and stability checks.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep_eps: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep_sigma: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extinction: Option<ExtinctionCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius_law: Option<RadiusLawCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contact_angle: Option<ContactAngleCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio_ah: Option<RatioCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub singular_event: Option<EventCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tangent: Option<TangentCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<DensityCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noncollapsing: Option<NoncollapsingCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub one_sided: Option<OneSidedCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub long_time: Option<LongTimeCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translator: Option<TranslatorCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtinctionCheck {
    pub expected: f64,
    #[serde(default = "five_percent")]
    pub rel_tol: f64,
}

/// Radius of a circle fitted to the interface against `sqrt(r0^2 - 2t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadiusLawCheck {
    pub r0: f64,
    /// Tolerance in cells.
    #[serde(default = "RadiusLawCheck::cells")]
    pub tol_cells: f64,
}

impl RadiusLawCheck {
    fn cells() -> f64 {
        3.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactAngleCheck {
    /// Radians.
    #[serde(default = "five_percent")]
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatioCheck {
    pub expected: f64,
    #[serde(default = "five_percent")]
    pub rel_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Boundary,
    Interior,
    Pop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventCheck {
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TangentCheck {
    /// Expected model, e.g. `shrinking-halfcylinder`.
    pub kind: String,
    pub lambda: f64,
    #[serde(default = "TangentCheck::residual")]
    pub max_residual: f64,
    /// Use the first popping event instead of the first singular event.
    #[serde(default)]
    pub at_pop: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multiplicity: Option<u32>,
}

impl TangentCheck {
    fn residual() -> f64 {
        0.05
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityCheck {
    pub expected: f64,
    #[serde(default = "two_percent")]
    pub rel_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoncollapsingCheck {
    #[serde(default = "NoncollapsingCheck::min")]
    pub min: f64,
    /// Expected exact value of `min(r_in H, r_out H)` for round scenarios.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<f64>,
    #[serde(default = "five_percent")]
    pub rel_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h0: Option<f64>,
}

impl NoncollapsingCheck {
    fn min() -> f64 {
        0.5
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OneSidedCheck {
    #[serde(default = "OneSidedCheck::competitors")]
    pub competitors: usize,
    /// Number of snapshots tested, evenly spread over the resolved regime.
    #[serde(default = "OneSidedCheck::snapshots")]
    pub snapshots: usize,
}

impl OneSidedCheck {
    fn competitors() -> usize {
        10
    }
    fn snapshots() -> usize {
        3
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LongTimeCheck {
    pub max_h: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sheets: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslatorCheck {
    #[serde(default = "TranslatorCheck::residual")]
    pub max_residual: f64,
    #[serde(default = "yes")]
    pub v_bound: bool,
    #[serde(default = "yes")]
    pub h_lower: bool,
    #[serde(default = "yes")]
    pub monitor: bool,
    /// `max|B(X,N)| <= b_cells h` at the junctions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_cells: Option<f64>,
    /// Lower bound on `max|A(X,N)|`, showing the perturbation is not vacuous.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_min: Option<f64>,
}

impl TranslatorCheck {
    fn residual() -> f64 {
        1e-8
    }
}

fn vec2(a: [f64; 2]) -> Vec2 {
    Vec2::new(a[0], a[1])
}

fn invalid(path: &str, message: impl Into<String>) -> FlowError {
    FlowError::Validation { path: path.into(), message: message.into() }
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(path, format!("must be positive, got {v}")))
    }
}

fn nonnegative(path: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(invalid(path, format!("must be nonnegative, got {v}")))
    }
}

fn unit(path: &str, n: [f64; 2]) -> Result<()> {
    let l = vec2(n).norm();
    if l.is_finite() && l > 0.0 {
        Ok(())
    } else {
        Err(invalid(path, "must be a nonzero vector"))
    }
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig> {
    let de = toml::Deserializer::parse(text).map_err(|e| FlowError::Parse(e.to_string().trim().to_string()))?;
    let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let mut path = e.path().to_string();
        let message = e.inner().message().trim().to_string();
        if let Some(field) = message.strip_prefix("unknown field `").and_then(|r| r.split('`').next()) {
            if path == "." {
                path = field.to_string();
            } else if path.rsplit('.').next() != Some(field) {
                path = format!("{path}.{field}");
            }
        }
        FlowError::Validation { path, message }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads a scenario from `path`.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| FlowError::Io(format!("{}: {e}", path.display())))?;
    parse_scenario(&text)
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(invalid("name", "must not be empty"));
        }
        if self.name.contains(['/', '\\']) {
            return Err(invalid("name", "must not contain path separators"));
        }
        match &self.domain {
            DomainSpec::Disc { radius, .. } => positive("domain.radius", *radius)?,
            DomainSpec::Annulus { inner, outer, .. } => {
                positive("domain.inner", *inner)?;
                if !(outer > inner) {
                    return Err(invalid("domain.outer", "must exceed domain.inner"));
                }
            }
            DomainSpec::Halfplane { normal, .. } => unit("domain.normal", *normal)?,
            DomainSpec::Slab { normal, half_width, .. } => {
                unit("domain.normal", *normal)?;
                positive("domain.half_width", *half_width)?;
            }
            DomainSpec::Ball { radius } => positive("domain.radius", *radius)?,
            DomainSpec::Dumbbell { lobe_radius, lobe_offset, neck_radius, waist, blend } => {
                positive("domain.lobe_radius", *lobe_radius)?;
                positive("domain.lobe_offset", *lobe_offset)?;
                positive("domain.neck_radius", *neck_radius)?;
                nonnegative("domain.waist", *waist)?;
                nonnegative("domain.blend", *blend)?;
            }
        }
        if self.mode == Mode::Axisym && !matches!(self.domain, DomainSpec::Ball { .. } | DomainSpec::Dumbbell { .. }) {
            return Err(invalid("mode", "axisymmetric scenarios need a ball or dumbbell domain"));
        }
        match &self.region {
            RegionSpec::Disc { radius, .. } | RegionSpec::HalfDisc { radius, .. } => positive("region.radius", *radius)?,
            RegionSpec::Band { normal, lo, hi } => {
                unit("region.normal", *normal)?;
                if !(hi > lo) {
                    return Err(invalid("region.hi", "must exceed region.lo"));
                }
            }
            RegionSpec::Torus { core_radius, tube_radius, .. } | RegionSpec::HalfTorus { core_radius, tube_radius } => {
                positive("region.core_radius", *core_radius)?;
                positive("region.tube_radius", *tube_radius)?;
            }
            RegionSpec::BarrierOffset { normal, thickness, .. } => {
                unit("region.normal", *normal)?;
                positive("region.thickness", *thickness)?;
            }
            RegionSpec::AnnularShell { inner, outer, .. } => {
                nonnegative("region.inner", *inner)?;
                if !(outer > inner) {
                    return Err(invalid("region.outer", "must exceed region.inner"));
                }
            }
            RegionSpec::SlabWithHole { half_width, hole_radius } => {
                positive("region.half_width", *half_width)?;
                positive("region.hole_radius", *hole_radius)?;
            }
        }
        positive("grid.h", self.grid.h)?;
        if let Some([lo, hi]) = self.grid.window {
            if !(hi[0] > lo[0] && hi[1] > lo[1]) || lo.iter().chain(&hi).any(|v| !v.is_finite()) {
                return Err(invalid("grid.box", "needs finite corners with lo < hi"));
            }
        }
        if self.flow.is_none() && self.translator.is_none() {
            return Err(invalid("flow", "a scenario needs a [flow] or a [translator] section"));
        }
        if let Some(f) = &self.flow {
            positive("flow.horizon", f.horizon)?;
            positive("flow.dt_factor", f.dt_factor)?;
            if f.dt_factor > 0.25 {
                return Err(invalid("flow.dt_factor", format!("exceeds the stability limit 0.25, got {}", f.dt_factor)));
            }
            if f.band_width < 3 {
                return Err(invalid("flow.band_width", "must be at least 3 cells"));
            }
            if f.reinit_every == 0 {
                return Err(invalid("flow.reinit_every", "must be positive"));
            }
            positive("flow.blowup_threshold", f.blowup_threshold)?;
        }
        if let Some(t) = &self.translator {
            positive("translator.eps", t.eps)?;
            positive("translator.sigma", t.sigma)?;
            nonnegative("translator.tau", t.tau)?;
            positive("translator.kappa", t.kappa)?;
            if t.tau > 1.0 {
                return Err(invalid("translator.tau", format!("must be at most 1, got {}", t.tau)));
            }
            if t.kappa > 1.0 {
                return Err(invalid("translator.kappa", format!("must be at most 1, got {}", t.kappa)));
            }
            positive("translator.kappa_step", t.kappa_step)?;
            positive("translator.kappa_floor", t.kappa_floor)?;
            positive("translator.newton_tol", t.newton_tol)?;
            positive("translator.lambda_f", t.lambda_f)?;
            positive("translator.theta_f", t.theta_f)?;
            for (name, v) in [("translator.a", t.a), ("translator.b", t.b), ("translator.m", t.m)] {
                if let Some(v) = v {
                    nonnegative(name, v)?;
                }
            }
            if let Some(r) = t.r_ext {
                positive("translator.r_ext", r)?;
            }
            for &e in &t.sweep_eps {
                positive("translator.sweep_eps", e)?;
            }
            for &s in &t.sweep_sigma {
                positive("translator.sweep_sigma", s)?;
            }
        }
        let c = &self.checks;
        if let Some(x) = &c.extinction {
            positive("checks.extinction.expected", x.expected)?;
            positive("checks.extinction.rel_tol", x.rel_tol)?;
        }
        if let Some(x) = &c.radius_law {
            positive("checks.radius_law.r0", x.r0)?;
            positive("checks.radius_law.tol_cells", x.tol_cells)?;
        }
        if let Some(x) = &c.tangent {
            positive("checks.tangent.lambda", x.lambda)?;
            positive("checks.tangent.max_residual", x.max_residual)?;
        }
        if let Some(x) = &c.one_sided {
            if x.competitors == 0 || x.snapshots == 0 {
                return Err(invalid("checks.one_sided", "needs at least one competitor and one snapshot"));
            }
        }
        if c.translator.is_some() && self.translator.is_none() {
            return Err(invalid("checks.translator", "requires a [translator] section"));
        }
        let flow_checks = c.extinction.is_some()
            || c.radius_law.is_some()
            || c.contact_angle.is_some()
            || c.ratio_ah.is_some()
            || c.singular_event.is_some()
            || c.tangent.is_some()
            || c.density.is_some()
            || c.noncollapsing.is_some()
            || c.one_sided.is_some()
            || c.long_time.is_some();
        if flow_checks && self.flow.is_none() {
            return Err(invalid("checks", "flow checks require a [flow] section"));
        }
        Ok(())
    }

    /// Applies a grid spacing override to the flow and the translator.
    pub fn with_resolution(mut self, h: f64) -> Result<Self> {
        self.grid.h = h;
        self.validate()?;
        Ok(self)
    }

    /// Overrides the flow horizon.
    pub fn with_horizon(mut self, t: f64) -> Result<Self> {
        match &mut self.flow {
            Some(f) => f.horizon = t,
            None => return Err(invalid("flow.horizon", "scenario has no [flow] section")),
        }
        self.validate()?;
        Ok(self)
    }

    pub fn domain(&self) -> BarrierDomain {
        let shape = match &self.domain {
            DomainSpec::Disc { center, radius } => BarrierShape::Disc { center: vec2(*center), radius: *radius },
            DomainSpec::Annulus { center, inner, outer } => {
                BarrierShape::Annulus { center: vec2(*center), inner: *inner, outer: *outer }
            }
            DomainSpec::Halfplane { normal, offset } => {
                BarrierShape::Halfplane { normal: vec2(*normal).normalize(), offset: *offset }
            }
            DomainSpec::Slab { normal, center, half_width } => {
                BarrierShape::Slab { normal: vec2(*normal).normalize(), center: *center, half_width: *half_width }
            }
            DomainSpec::Ball { radius } => BarrierShape::Ball { radius: *radius },
            DomainSpec::Dumbbell { lobe_radius, lobe_offset, neck_radius, waist, blend } => BarrierShape::Dumbbell {
                lobe_radius: *lobe_radius,
                lobe_offset: *lobe_offset,
                neck_radius: *neck_radius,
                waist: *waist,
                blend: *blend,
            },
        };
        BarrierDomain::new(shape, self.mode)
    }

    pub fn region(&self) -> InitialRegion {
        let mean_convex = self.flow.as_ref().is_none_or(|f| f.mean_convex);
        let shape = match &self.region {
            RegionSpec::Disc { center, radius } => RegionShape::Disc { center: vec2(*center), radius: *radius },
            RegionSpec::HalfDisc { foot, radius } => RegionShape::HalfDisc { foot: vec2(*foot), radius: *radius },
            RegionSpec::Band { normal, lo, hi } => RegionShape::Band { normal: vec2(*normal).normalize(), lo: *lo, hi: *hi },
            RegionSpec::Torus { core_radius, tube_radius, height } => {
                RegionShape::TorusProfile { core_radius: *core_radius, tube_radius: *tube_radius, height: *height }
            }
            RegionSpec::HalfTorus { core_radius, tube_radius } => {
                RegionShape::HalfTorusProfile { core_radius: *core_radius, tube_radius: *tube_radius }
            }
            RegionSpec::BarrierOffset { normal, offset, thickness, two_sided } => RegionShape::BarrierOffset {
                normal: vec2(*normal).normalize(),
                offset: *offset,
                thickness: *thickness,
                two_sided: *two_sided,
            },
            RegionSpec::AnnularShell { center, inner, outer } => {
                RegionShape::AnnularShell { center: vec2(*center), inner: *inner, outer: *outer }
            }
            RegionSpec::SlabWithHole { half_width, hole_radius } => {
                let slab = RegionShape::Band { normal: Vec2::new(0.0, 1.0), lo: -half_width, hi: *half_width };
                let hole = RegionShape::Disc { center: Vec2::zeros(), radius: *hole_radius };
                RegionShape::Difference(Box::new(slab), Box::new(hole))
            }
        };
        InitialRegion::new(shape, mean_convex)
    }

    pub fn window(&self) -> Option<Bounds> {
        self.grid.window.map(|[lo, hi]| Bounds::new(vec2(lo), vec2(hi)))
    }

    pub fn flow_config(&self) -> Option<FlowConfig> {
        let f = self.flow.as_ref()?;
        let mut c = FlowConfig::new(self.grid.h, f.horizon).with_uniform_outputs(f.outputs);
        c.dt_factor = f.dt_factor;
        c.band_width = f.band_width;
        c.reinit_every = f.reinit_every;
        c.stop_at_extinction = f.stop_at_extinction;
        c.blowup_threshold = f.blowup_threshold;
        c.window = self.window();
        Some(c)
    }

    /// Translator parameters at `(eps, sigma)`, defaulting to the configured pair.
    pub fn translator_params(&self, eps: Option<f64>, sigma: Option<f64>) -> Option<TranslatorParams> {
        let t = self.translator.as_ref()?;
        let mut p = TranslatorParams::new(eps.unwrap_or(t.eps), sigma.unwrap_or(t.sigma)).with_h(self.grid.h).with_tau(t.tau);
        p.kappa = t.kappa;
        p.kappa_step = t.kappa_step;
        p.kappa_floor = t.kappa_floor;
        p.newton_tol = t.newton_tol;
        p.max_newton = t.max_newton;
        p.a = t.a;
        p.b = t.b;
        p.m = t.m;
        p.lambda_f = t.lambda_f;
        p.theta_f = t.theta_f;
        p.r_ext = t.r_ext;
        p.window = self.window();
        Some(p)
    }

    /// Fully resolved configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario configs always serialize")
    }
}
