//! JSON run configuration. Field names carry their units; values are
//! converted to SI when the model is built.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Mask image (PGM P2/P5 or ASCII 0/1), relative to the config file.
    pub mask: PathBuf,
    /// Output directory, relative to the config file.
    pub output_dir: PathBuf,
    pub grid: GridConfig,
    pub material: MaterialConfig,
    pub environment: EnvironmentConfig,
    pub limits: LimitsConfig,
    pub beam: BeamConfig,
    pub schedule: ScheduleConfig,
    pub solver: SolverConfig,
    pub approximation: ApproximationConfig,
    pub seeds: SeedConfig,
    /// Times at which top-layer heatmaps are written.
    #[serde(default)]
    pub snapshots_us: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub voxel_size_um: f64,
    /// Voxel layers below and including the melted one.
    pub layers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub conductivity_w_per_m_k: f64,
    pub density_kg_per_m3: f64,
    pub specific_heat_j_per_kg_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    pub convection_w_per_m2_k: f64,
    pub ambient_k: f64,
    pub baseplate_k: f64,
    pub initial_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsConfig {
    pub solidus_k: f64,
    pub liquidus_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamConfig {
    /// Total power, held constant while building.
    pub power_w: f64,
    pub fwhm_um: f64,
    pub time_constant_us: f64,
    pub max_speed_m_per_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub dt_us: u64,
    /// Knots in the build period of each cycle.
    pub build_steps: usize,
    /// Knots in the cooling period of each cycle.
    #[serde(default)]
    pub cool_steps: usize,
    #[serde(default = "one")]
    pub cycles: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub kkt_tolerance: f64,
    pub max_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproximationConfig {
    pub dwell_us: u64,
    /// Trailing time-average of the greedy tracker.
    pub window_us: u64,
    /// Thermal substeps per knot interval when simulating.
    pub substeps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedConfig {
    pub random_spot: u64,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads the file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.mask = base.join(&cfg.mask);
        cfg.output_dir = base.join(&cfg.output_dir);
        if !cfg.mask.is_file() {
            return Err(CliError::Config(format!(
                "mask file {} does not exist",
                cfg.mask.display()
            )));
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let positive = [
            ("grid.voxel_size_um", self.grid.voxel_size_um),
            ("material.conductivity_w_per_m_k", self.material.conductivity_w_per_m_k),
            ("material.density_kg_per_m3", self.material.density_kg_per_m3),
            ("material.specific_heat_j_per_kg_k", self.material.specific_heat_j_per_kg_k),
            ("environment.ambient_k", self.environment.ambient_k),
            ("environment.baseplate_k", self.environment.baseplate_k),
            ("environment.initial_k", self.environment.initial_k),
            ("limits.solidus_k", self.limits.solidus_k),
            ("limits.liquidus_k", self.limits.liquidus_k),
            ("beam.power_w", self.beam.power_w),
            ("beam.fwhm_um", self.beam.fwhm_um),
            ("beam.time_constant_us", self.beam.time_constant_us),
            ("beam.max_speed_m_per_s", self.beam.max_speed_m_per_s),
            ("solver.kkt_tolerance", self.solver.kkt_tolerance),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(CliError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let counts = [
            ("grid.layers", self.grid.layers),
            ("schedule.build_steps", self.schedule.build_steps),
            ("schedule.cycles", self.schedule.cycles),
            ("solver.max_iterations", self.solver.max_iterations),
            ("approximation.substeps", self.approximation.substeps),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(CliError::Config(format!("{name} must be at least 1")));
            }
        }
        for (name, v) in [
            ("schedule.dt_us", self.schedule.dt_us),
            ("approximation.dwell_us", self.approximation.dwell_us),
            ("approximation.window_us", self.approximation.window_us),
        ] {
            if v == 0 {
                return Err(CliError::Config(format!("{name} must be at least 1")));
            }
        }
        if self.environment.convection_w_per_m2_k < 0.0 {
            return Err(CliError::Config(
                "environment.convection_w_per_m2_k must be nonnegative".into(),
            ));
        }
        if self.limits.solidus_k > self.limits.liquidus_k {
            return Err(CliError::Config("limits: solidus above liquidus".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn sample() -> RunConfig {
        RunConfig {
            mask: "mask.txt".into(),
            output_dir: "out".into(),
            grid: GridConfig {
                voxel_size_um: 200.0,
                layers: 2,
            },
            material: MaterialConfig {
                conductivity_w_per_m_k: 31.1,
                density_kg_per_m3: 7269.0,
                specific_heat_j_per_kg_k: 720.0,
            },
            environment: EnvironmentConfig {
                convection_w_per_m2_k: 10.0,
                ambient_k: 1100.0,
                baseplate_k: 1100.0,
                initial_k: 1100.0,
            },
            limits: LimitsConfig {
                solidus_k: 1658.0,
                liquidus_k: 1723.0,
            },
            beam: BeamConfig {
                power_w: 750.0,
                fwhm_um: 250.0,
                time_constant_us: 1.0,
                max_speed_m_per_s: 4000.0,
            },
            schedule: ScheduleConfig {
                dt_us: 100,
                build_steps: 40,
                cool_steps: 0,
                cycles: 1,
            },
            solver: SolverConfig {
                kkt_tolerance: 1e-6,
                max_iterations: 100,
            },
            approximation: ApproximationConfig {
                dwell_us: 1,
                window_us: 100,
                substeps: 10,
            },
            seeds: SeedConfig { random_spot: 7 },
            snapshots_us: vec![1000, 3900],
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let cfg = sample();
        let text = cfg.to_json();
        let back = RunConfig::from_json(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn rejects_nonpositive_and_unknown() {
        let mut cfg = sample();
        cfg.beam.power_w = 0.0;
        assert!(matches!(cfg.validate(), Err(CliError::Config(m)) if m.contains("beam.power_w")));
        let text = sample().to_json().replacen("{", "{\n  \"bogus\": 1,", 1);
        assert!(RunConfig::from_json(&text).is_err());
    }

    #[test]
    fn defaults_fill_optional_fields() {
        let mut v: serde_json::Value = serde_json::from_str(&sample().to_json()).unwrap();
        let s = v["schedule"].as_object_mut().unwrap();
        s.remove("cool_steps");
        s.remove("cycles");
        v.as_object_mut().unwrap().remove("snapshots_us");
        let cfg = RunConfig::from_json(&v.to_string()).unwrap();
        assert_eq!(cfg.schedule.cycles, 1);
        assert_eq!(cfg.schedule.cool_steps, 0);
        assert!(cfg.snapshots_us.is_empty());
    }
}
