//! Experiment configuration: JSON schema, validation with field-path error
//! messages, and explicit recording of every defaulted field.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use wnlab_core::kernels::KernelProfile;
use wnlab_core::nikolskii::ClassSpec;

/// What a run computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    RatesTable,
    RiskCurve,
    OracleCheck,
    UpperFunctionCheck,
    TestbedExport,
    MembershipCheck,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridDef {
    pub d: usize,
    pub b: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelDef {
    pub profile: KernelProfile,
    pub ell: u32,
}

/// How the bandwidth family is assembled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum HRecipe {
    /// All level tuples from the cartesian product of `levels` per axis.
    ConstLattice { levels: Vec<u32> },
    /// Constant fields from `levels` plus every single-cell refinement on
    /// the dyadic partition at `partition_level`, capped by the family cap.
    DyadicVarying { partition_level: u32, levels: Vec<u32> },
    /// The oracle bandwidth grid of the (class, p) pair at each eps.
    OracleGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapsDef {
    pub family_cap: usize,
    pub r_cap: u32,
    pub level_cap: u32,
    pub max_vectors: usize,
    /// Half-width cap (in cells) of strong-maximal boxes.
    pub maximal_box_cap: usize,
    /// Members exported by testbed_export.
    pub export_members: usize,
}

impl Default for CapsDef {
    fn default() -> Self {
        CapsDef {
            family_cap: 256,
            r_cap: 64,
            level_cap: 40,
            max_vectors: 10_000,
            maximal_box_cap: 31,
            export_members: 8,
        }
    }
}

/// Per-axis factor of a separable test signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AxisProfile {
    /// (1 - (x/b)^2)^2: twice-differentiable, vanishing at the boundary.
    QuarticBump,
    /// sin(pi frequency x / b) (1 - (x/b)^2)^2.
    SineBump { frequency: f64 },
    /// Triangle wave with `teeth` periods over (-b, b): Lipschitz with
    /// dense kinks, zero at the boundary.
    TentWave { teeth: u32 },
    /// Constant 1.
    Flat,
}

impl AxisProfile {
    pub fn eval(&self, x: f64, b: f64) -> f64 {
        let u = x / b;
        match self {
            AxisProfile::QuarticBump => {
                let w = 1.0 - u * u;
                if w <= 0.0 {
                    0.0
                } else {
                    w * w
                }
            }
            AxisProfile::SineBump { frequency } => {
                let w = 1.0 - u * u;
                if w <= 0.0 {
                    0.0
                } else {
                    (core::f64::consts::PI * frequency * u).sin() * w * w
                }
            }
            AxisProfile::TentWave { teeth } => {
                let phase = (u + 1.0) / 2.0 * *teeth as f64;
                let frac = phase - phase.floor();
                1.0 - 2.0 * (frac - 0.5).abs()
            }
            AxisProfile::Flat => 1.0,
        }
    }
}

/// A separable test signal amplitude * prod_j profile_j(x_j).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalDef {
    pub amplitude: f64,
    pub axes: Vec<AxisProfile>,
}

impl SignalDef {
    pub fn render(&self, grid: &wnlab_core::grid::Grid) -> wnlab_core::grid::GridFunction {
        let b = grid.half_width();
        wnlab_core::grid::GridFunction::from_fn(*grid, |x| {
            let mut v = self.amplitude;
            for (axis, xi) in x.iter().enumerate() {
                v *= self.axes[axis].eval(*xi, b);
            }
            v
        })
    }
}

/// Constant overrides; every present entry is recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Overrides {
    /// Explicit C2(r) entries (default rule: C2(r) = r).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2_table: Option<BTreeMap<u32, f64>>,
    /// Multiplier on the computed C1 (robustness experiments).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub membership_slack: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_eps: Option<f64>,
    /// Class-membership safety factor of the lower-bound family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1_lb: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2_lb: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c3_lb: Option<f64>,
}

mod maybe_inf {
    use serde::{Deserialize, Deserializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        let raw = Option::<Raw>::deserialize(d)?;
        Ok(match raw {
            None => None,
            Some(Raw::Num(v)) => Some(v),
            Some(Raw::Text(t)) => match t.as_str() {
                "inf" | "+inf" | "Infinity" => Some(f64::INFINITY),
                _ => t.parse::<f64>().ok(),
            },
        })
    }
}

/// The configuration as written by the user; optional fields resolve to
/// defaults recorded in the manifest.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub grid: Option<GridDef>,
    #[serde(default)]
    pub class: Option<ClassSpec>,
    #[serde(default)]
    pub classes: Option<Vec<ClassSpec>>,
    #[serde(default, deserialize_with = "maybe_inf::deserialize")]
    pub p: Option<f64>,
    #[serde(default)]
    pub q: Option<f64>,
    #[serde(default)]
    pub kernel: Option<KernelDef>,
    #[serde(default)]
    pub eps_list: Option<Vec<f64>>,
    #[serde(default)]
    pub signal: Option<SignalDef>,
    #[serde(default)]
    pub h_recipe: Option<HRecipe>,
    #[serde(default)]
    pub reps: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub caps: Option<CapsDef>,
    #[serde(default)]
    pub overrides: Option<Overrides>,
}

/// A validated configuration with every default made explicit.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedConfig {
    pub kind: ExperimentKind,
    pub grid: GridDef,
    pub classes: Vec<ClassSpec>,
    #[serde(with = "wnlab_core::serde_util::float")]
    pub p: f64,
    pub q: f64,
    pub kernel: KernelDef,
    pub eps_list: Vec<f64>,
    pub signal: SignalDef,
    pub h_recipe: HRecipe,
    pub reps: usize,
    pub seed: u64,
    pub caps: CapsDef,
    pub overrides: Overrides,
    /// Field paths that were filled from defaults.
    pub defaulted: Vec<String>,
}

fn fail(path: &str, msg: &str) -> String {
    format!("{path}: {msg}")
}

/// Parse and validate a JSON configuration.
pub fn parse_and_validate(text: &str) -> Result<ResolvedConfig, String> {
    let raw: RawConfig =
        serde_json::from_str(text).map_err(|e| fail("<config>", &e.to_string()))?;
    resolve(raw)
}

pub fn resolve(raw: RawConfig) -> Result<ResolvedConfig, String> {
    let mut defaulted = Vec::new();
    let kind = raw.kind;

    let grid = match raw.grid {
        Some(g) => g,
        None => {
            defaulted.push("grid".into());
            GridDef {
                d: 1,
                b: 1.0,
                n: 256,
            }
        }
    };
    wnlab_core::grid::Grid::new(grid.d, grid.b, grid.n).map_err(|e| fail("grid", &e.to_string()))?;

    let classes: Vec<ClassSpec> = match (&raw.class, &raw.classes) {
        (Some(c), None) => vec![c.clone()],
        (None, Some(cs)) if !cs.is_empty() => cs.clone(),
        (Some(_), Some(_)) => return Err(fail("class", "give either class or classes, not both")),
        (None, Some(_)) => return Err(fail("classes", "must not be empty")),
        (None, None) => {
            if kind == ExperimentKind::UpperFunctionCheck {
                // pure-noise experiment; a class is not required
                defaulted.push("class".into());
                vec![ClassSpec::isotropic(grid.d, 2.0, f64::INFINITY, 1.0)
                    .map_err(|e| fail("class", &e.to_string()))?]
            } else {
                return Err(fail("class", "required for this experiment kind"));
            }
        }
    };
    for (i, c) in classes.iter().enumerate() {
        if kind != ExperimentKind::RatesTable && c.dim() != grid.d {
            return Err(fail(
                &format!("classes[{i}]"),
                "class dimension does not match the grid",
            ));
        }
    }

    let p = match raw.p {
        Some(p) if p >= 1.0 => p,
        Some(_) => return Err(fail("p", "must be >= 1")),
        None => {
            defaulted.push("p".into());
            2.0
        }
    };
    let q = match raw.q {
        Some(q) if q >= 1.0 => q,
        Some(_) => return Err(fail("q", "must be >= 1")),
        None => {
            defaulted.push("q".into());
            2.0
        }
    };

    let kernel = match raw.kernel {
        Some(k) if k.ell >= 1 => k,
        Some(_) => return Err(fail("kernel.ell", "must be >= 1")),
        None => {
            defaulted.push("kernel".into());
            let max_beta = classes[0]
                .beta()
                .iter()
                .fold(0.0f64, |a, b| a.max(*b));
            KernelDef {
                profile: KernelProfile::CosineBump,
                ell: max_beta.floor() as u32 + 1,
            }
        }
    };

    let needs_eps = !matches!(kind, ExperimentKind::RatesTable | ExperimentKind::MembershipCheck);
    let eps_list = match raw.eps_list {
        Some(list) => {
            if needs_eps && list.is_empty() {
                return Err(fail("eps_list", "must not be empty"));
            }
            for (i, e) in list.iter().enumerate() {
                if !(*e > 0.0 && *e < 1.0) {
                    return Err(fail(&format!("eps_list[{i}]"), "must lie in (0, 1)"));
                }
            }
            list
        }
        None => {
            if needs_eps {
                return Err(fail("eps_list", "required for this experiment kind"));
            }
            defaulted.push("eps_list".into());
            vec![0.05]
        }
    };

    let signal = match raw.signal {
        Some(s) => {
            if s.axes.len() != grid.d {
                return Err(fail("signal.axes", "must have one profile per grid axis"));
            }
            if !s.amplitude.is_finite() {
                return Err(fail("signal.amplitude", "must be finite"));
            }
            s
        }
        None => {
            defaulted.push("signal".into());
            SignalDef {
                amplitude: 1.0,
                axes: vec![AxisProfile::QuarticBump; grid.d],
            }
        }
    };

    let h_recipe = match raw.h_recipe {
        Some(r) => {
            if let HRecipe::ConstLattice { levels } | HRecipe::DyadicVarying { levels, .. } = &r {
                if levels.is_empty() {
                    return Err(fail("h_recipe.levels", "must not be empty"));
                }
            }
            r
        }
        None => {
            defaulted.push("h_recipe".into());
            let g = wnlab_core::grid::Grid::new(grid.d, grid.b, grid.n).unwrap();
            let floor = wnlab_core::estimator::resolvability_floor(&g).min(5);
            HRecipe::ConstLattice {
                levels: (0..=floor).collect(),
            }
        }
    };

    let reps = match raw.reps {
        Some(r) => r,
        None => {
            defaulted.push("reps".into());
            100
        }
    };
    match kind {
        ExperimentKind::RiskCurve | ExperimentKind::OracleCheck if reps < 30 => {
            return Err(fail("reps", "risk experiments need at least 30 replications"));
        }
        ExperimentKind::UpperFunctionCheck if reps < 100 => {
            return Err(fail(
                "reps",
                "the upper-function check needs at least 100 replications",
            ));
        }
        _ => {}
    }

    let seed = match raw.seed {
        Some(s) => s,
        None => {
            defaulted.push("seed".into());
            0
        }
    };
    let caps = match raw.caps {
        Some(c) => c,
        None => {
            defaulted.push("caps".into());
            CapsDef::default()
        }
    };
    let overrides = match raw.overrides {
        Some(o) => o,
        None => {
            defaulted.push("overrides".into());
            Overrides::default()
        }
    };
    if let Some(table) = &overrides.c2_table {
        for (r, v) in table {
            if !(*v > 0.0) {
                return Err(fail(&format!("overrides.c2_table.{r}"), "must be positive"));
            }
        }
    }
    if let Some(s) = overrides.c1_scale {
        if !(s > 0.0) {
            return Err(fail("overrides.c1_scale", "must be positive"));
        }
    }

    Ok(ResolvedConfig {
        kind,
        grid,
        classes,
        p,
        q,
        kernel,
        eps_list,
        signal,
        h_recipe,
        reps,
        seed,
        caps,
        overrides,
        defaulted,
    })
}
