//! Run configuration: a single TOML schema with strict field validation
//! (unknown keys are rejected), decimal number parsing, and no
//! environment-dependent defaults except the output directory.

use crate::geometry::Manifold;
use crate::moser::{DiffeoFamily, OmegaKind};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub id: String,
    pub manifold: ManifoldConfig,
    pub tube: TubeConfig,
    #[serde(default)]
    pub resolution: ResolutionConfig,
    #[serde(default)]
    pub form: Option<FormConfig>,
    #[serde(default)]
    pub diffeo: Option<DiffeoConfig>,
    #[serde(default)]
    pub omega: Option<OmegaConfig>,
    #[serde(default)]
    pub flow: Option<FlowConfig>,
    #[serde(default)]
    pub holder: HolderConfig,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldConfig {
    pub kind: String,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub window: Option<(f64, f64)>,
    #[serde(default)]
    pub guard: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TubeConfig {
    pub deltas: Vec<f64>,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_c_prime")]
    pub c_prime: f64,
    #[serde(default = "default_a")]
    pub a: f64,
}

fn default_c() -> f64 {
    0.5
}
fn default_c_prime() -> f64 {
    0.75
}
fn default_a() -> f64 {
    0.25
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolutionConfig {
    #[serde(default = "default_tangential")]
    pub tangential: usize,
    #[serde(default = "default_normal")]
    pub normal: usize,
    #[serde(default = "default_one")]
    pub quad_scale: f64,
    #[serde(default = "default_one")]
    pub interp_scale: f64,
}

fn default_tangential() -> usize {
    48
}
fn default_normal() -> usize {
    8
}
fn default_one() -> f64 {
    1.0
}

impl Default for ResolutionConfig {
    fn default() -> Self {
        ResolutionConfig {
            tangential: default_tangential(),
            normal: default_normal(),
            quad_scale: 1.0,
            interp_scale: 1.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormConfig {
    /// Name from the built-in registry, or a JSON form descriptor.
    #[serde(default)]
    pub registry: Option<String>,
    #[serde(default)]
    pub descriptor: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffeoConfig {
    pub family: String,
    #[serde(default = "default_magnitude")]
    pub magnitude: f64,
    #[serde(default = "default_k")]
    pub k: usize,
}

fn default_magnitude() -> f64 {
    0.3
}
fn default_k() -> usize {
    2
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmegaConfig {
    pub kind: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    #[serde(default = "default_samples")]
    pub time_samples: usize,
}

fn default_samples() -> usize {
    8
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HolderConfig {
    #[serde(default = "default_s")]
    pub s: f64,
}

fn default_s() -> f64 {
    0.5
}

impl Default for HolderConfig {
    fn default() -> Self {
        HolderConfig { s: default_s() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerance_scale: Option<f64>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let manifold = self.build_manifold()?;
        let d0 = manifold.delta0();
        if self.tube.deltas.is_empty() {
            return Err(Error::Config("tube.deltas must be nonempty".into()));
        }
        for &d in &self.tube.deltas {
            if !(d > 0.0 && d <= d0) {
                return Err(Error::Config(format!(
                    "delta {d} outside (0, delta0 = {d0}] for manifold `{}`",
                    self.manifold.kind
                )));
            }
        }
        if !(0.0 < self.tube.c && self.tube.c < self.tube.c_prime && self.tube.c_prime < 1.0) {
            return Err(Error::Config("need 0 < c < c' < 1".into()));
        }
        if !(self.tube.a > 0.0 && self.tube.a < self.tube.c) {
            return Err(Error::Config("need 0 < a < c".into()));
        }
        if !(0.0 < self.holder.s && self.holder.s < 1.0) {
            return Err(Error::Config("holder s must lie in (0, 1)".into()));
        }
        if let Some(f) = &self.form {
            if f.registry.is_none() && f.descriptor.is_none() {
                return Err(Error::Config("form needs a registry name or descriptor".into()));
            }
        }
        if let Some(d) = &self.diffeo {
            self.build_family(d)?;
        }
        if let Some(o) = &self.omega {
            self.build_omega_kind(o)?;
        }
        Ok(())
    }

    pub fn build_manifold(&self) -> Result<Manifold> {
        match self.manifold.kind.as_str() {
            "circle" => Ok(Manifold::CircleInC),
            "torus" => Ok(Manifold::TorusInC2),
            "flat" => {
                let m = self.manifold.m.unwrap_or(1);
                let n = self.manifold.n.unwrap_or(1);
                if m == 0 || m > n || n > 2 {
                    return Err(Error::Config(format!(
                        "flat manifold needs 1 <= m <= n <= 2, got m = {m}, n = {n}"
                    )));
                }
                Ok(Manifold::FlatRmInCn {
                    m,
                    n,
                    window: self.manifold.window.unwrap_or((0.0, 1.0)),
                    guard: self.manifold.guard.unwrap_or(0.3),
                })
            }
            other => Err(Error::Config(format!("unknown manifold kind `{other}`"))),
        }
    }

    pub fn build_family(&self, d: &DiffeoConfig) -> Result<DiffeoFamily> {
        match d.family.as_str() {
            "circle_rotation" => Ok(DiffeoFamily::CircleRotation { a: d.magnitude }),
            "torus_shear" => Ok(DiffeoFamily::TorusShear { eps: d.magnitude }),
            "torus_rotation_flow" => Ok(DiffeoFamily::TorusRotationFlow { a: d.magnitude }),
            other => Err(Error::Config(format!("unknown diffeo family `{other}`"))),
        }
    }

    pub fn build_omega_kind(&self, o: &OmegaConfig) -> Result<OmegaKind> {
        match o.kind.as_str() {
            "volume" => Ok(OmegaKind::Volume),
            "symplectic" => Ok(OmegaKind::Symplectic),
            other => Err(Error::Config(format!("unknown omega kind `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_config() {
        let cfg = RunConfig::parse(
            r#"
id = "circle_dzbar"
[manifold]
kind = "circle"
[tube]
deltas = [0.2, 0.1, 0.05]
[form]
registry = "dzbar"
"#,
        )
        .unwrap();
        assert_eq!(cfg.id, "circle_dzbar");
        assert_eq!(cfg.tube.c, 0.5);
        assert!(matches!(cfg.build_manifold().unwrap(), Manifold::CircleInC));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(RunConfig::parse(
            "id = \"x\"\nbogus = 1\n[manifold]\nkind = \"circle\"\n[tube]\ndeltas = [0.1]"
        )
        .is_err());
        let over =
            RunConfig::parse("id = \"x\"\n[manifold]\nkind = \"circle\"\n[tube]\ndeltas = [0.9]");
        assert!(over.is_err(), "delta beyond delta0 must be rejected");
    }
}
