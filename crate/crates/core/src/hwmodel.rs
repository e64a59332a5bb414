//! Device capability and classic Roofline geometry.
//!
//! A [`HardwareProfile`] holds one peak compute throughput per engine class and a
//! single DRAM bandwidth. The roof at arithmetic intensity `ai` is
//! `min(peak_flops, ai * peak_mem_bw)`, and the knee is where both terms meet.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use crate::error::{Error, Result};

/// The compute unit a kernel runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EngineClass {
    /// General-purpose scalar/SIMT cores (CUDA cores).
    ScalarCore,
    /// Dense matrix-multiply units (tensor cores).
    MatrixUnit,
    /// Matrix units with hardware N:M sparsity support.
    SparseMatrixUnit,
}

impl EngineClass {
    pub const ALL: [EngineClass; 3] = [
        EngineClass::ScalarCore,
        EngineClass::MatrixUnit,
        EngineClass::SparseMatrixUnit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EngineClass::ScalarCore => "scalar",
            EngineClass::MatrixUnit => "matrix",
            EngineClass::SparseMatrixUnit => "sparse_matrix",
        }
    }
}

impl fmt::Display for EngineClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EngineClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "scalar" | "scalar_core" | "cuda" => Ok(EngineClass::ScalarCore),
            "matrix" | "matrix_unit" | "tensor" => Ok(EngineClass::MatrixUnit),
            "sparse_matrix" | "sparse-matrix" | "sparse_matrix_unit" | "sparse_tensor" => {
                Ok(EngineClass::SparseMatrixUnit)
            }
            other => Err(Error::InvalidArgument(format!(
                "unknown engine class `{other}` (expected scalar, matrix or sparse_matrix)"
            ))),
        }
    }
}

/// Peak throughputs and bandwidth of one device. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct HardwareProfile {
    name: String,
    peak_flops: BTreeMap<EngineClass, f64>,
    peak_mem_bw: f64,
}

impl HardwareProfile {
    /// Builds a validated profile.
    ///
    /// A missing `SparseMatrixUnit` peak is filled from the `MatrixUnit` peak, so
    /// hypothetical sparse formats are evaluated at the same matrix-unit throughput.
    pub fn new(
        name: impl Into<String>,
        peak_flops: impl IntoIterator<Item = (EngineClass, f64)>,
        peak_mem_bw: f64,
    ) -> Result<Self> {
        let mut peaks: BTreeMap<EngineClass, f64> = peak_flops.into_iter().collect();
        for (engine, &value) in &peaks {
            check_positive(&format!("peak_flops.{engine}"), value)?;
        }
        check_positive("peak_mem_bw_bytes_per_s", peak_mem_bw)?;
        if let (Some(&scalar), Some(&matrix)) = (
            peaks.get(&EngineClass::ScalarCore),
            peaks.get(&EngineClass::MatrixUnit),
        ) {
            if matrix < scalar {
                return Err(Error::invalid_field(
                    "peak_flops.matrix",
                    format!("matrix peak {matrix:e} is below scalar peak {scalar:e}"),
                ));
            }
        }
        if let Some(&matrix) = peaks.get(&EngineClass::MatrixUnit) {
            peaks.entry(EngineClass::SparseMatrixUnit).or_insert(matrix);
        }
        Ok(Self {
            name: name.into(),
            peak_flops: peaks,
            peak_mem_bw,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawProfile = toml::from_str(text).map_err(|e| Error::Parse {
            context: "hardware profile".into(),
            message: e.to_string(),
        })?;
        raw.validate()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Peak DRAM bandwidth in bytes/s.
    pub fn peak_mem_bw(&self) -> f64 {
        self.peak_mem_bw
    }

    /// Peak throughput of `engine` in FLOP/s.
    pub fn peak_flops(&self, engine: EngineClass) -> Result<f64> {
        self.peak_flops
            .get(&engine)
            .copied()
            .ok_or(Error::MissingEngine(engine))
    }

    pub fn engines(&self) -> impl Iterator<Item = (EngineClass, f64)> + '_ {
        self.peak_flops.iter().map(|(&e, &p)| (e, p))
    }

    /// Arithmetic intensity (FLOP/byte) where the roof turns from the bandwidth
    /// slope to the compute plateau.
    pub fn knee_ai(&self, engine: EngineClass) -> Result<f64> {
        Ok(self.peak_flops(engine)? / self.peak_mem_bw)
    }

    /// Height of the roof (FLOP/s) at arithmetic intensity `ai`.
    pub fn roof_throughput(&self, engine: EngineClass, ai: f64) -> Result<f64> {
        let peak = self.peak_flops(engine)?;
        if !(ai >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "arithmetic intensity must be >= 0, got {ai}"
            )));
        }
        Ok(peak.min(ai * self.peak_mem_bw))
    }
}

/// Reads and validates a TOML hardware profile.
pub fn load_profile(path: impl AsRef<Path>) -> Result<HardwareProfile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    HardwareProfile::from_toml_str(&text).map_err(|e| match e {
        Error::Parse { message, .. } => Error::Parse {
            context: path.display().to_string(),
            message,
        },
        other => other,
    })
}

fn check_positive(field: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid_field(
            field,
            format!("must be a positive finite number, got {value}"),
        ))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfile {
    name: Option<String>,
    peak_flops: Option<RawPeaks>,
    peak_mem_bw_bytes_per_s: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPeaks {
    scalar: Option<f64>,
    matrix: Option<f64>,
    sparse_matrix: Option<f64>,
}

impl RawProfile {
    fn validate(self) -> Result<HardwareProfile> {
        let name = self.name.ok_or_else(|| Error::MissingField("name".into()))?;
        let peaks = self
            .peak_flops
            .ok_or_else(|| Error::MissingField("peak_flops".into()))?;
        let scalar = peaks
            .scalar
            .ok_or_else(|| Error::MissingField("peak_flops.scalar".into()))?;
        let matrix = peaks
            .matrix
            .ok_or_else(|| Error::MissingField("peak_flops.matrix".into()))?;
        let bw = self
            .peak_mem_bw_bytes_per_s
            .ok_or_else(|| Error::MissingField("peak_mem_bw_bytes_per_s".into()))?;
        let mut map = vec![
            (EngineClass::ScalarCore, scalar),
            (EngineClass::MatrixUnit, matrix),
        ];
        if let Some(sparse) = peaks.sparse_matrix {
            map.push((EngineClass::SparseMatrixUnit, sparse));
        }
        HardwareProfile::new(name, map, bw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> HardwareProfile {
        HardwareProfile::new(
            "toy",
            [
                (EngineClass::ScalarCore, 1.0e12),
                (EngineClass::MatrixUnit, 1.6e13),
            ],
            1.0e11,
        )
        .unwrap()
    }

    #[test]
    fn parses_profile_with_sixteen_x_ratio() {
        let p = HardwareProfile::from_toml_str(
            r#"
            name = "toy"
            peak_mem_bw_bytes_per_s = 1.0e11
            [peak_flops]
            scalar = 1.0e12
            matrix = 1.6e13
            "#,
        )
        .unwrap();
        let ratio = p.peak_flops(EngineClass::MatrixUnit).unwrap()
            / p.peak_flops(EngineClass::ScalarCore).unwrap();
        assert_eq!(ratio, 16.0);
        // sparse matrix unit inherits the matrix peak
        assert_eq!(p.peak_flops(EngineClass::SparseMatrixUnit).unwrap(), 1.6e13);
    }

    #[test]
    fn integer_and_dotted_keys_are_accepted() {
        let p = HardwareProfile::from_toml_str(
            "name = \"x\"\npeak_flops.scalar = 1000\npeak_flops.matrix = 2000\npeak_flops.sparse_matrix = 4000\npeak_mem_bw_bytes_per_s = 10\n",
        )
        .unwrap();
        assert_eq!(p.peak_flops(EngineClass::SparseMatrixUnit).unwrap(), 4000.0);
        assert_eq!(p.knee_ai(EngineClass::ScalarCore).unwrap(), 100.0);
    }

    #[test]
    fn missing_bandwidth_names_the_field() {
        let err = HardwareProfile::from_toml_str(
            "name = \"x\"\n[peak_flops]\nscalar = 1e12\nmatrix = 1e13\n",
        )
        .unwrap_err();
        assert!(matches!(err, Error::MissingField(ref f) if f == "peak_mem_bw_bytes_per_s"));
    }

    #[test]
    fn zero_bandwidth_is_rejected() {
        let err = HardwareProfile::from_toml_str(
            "name = \"x\"\npeak_mem_bw_bytes_per_s = 0\n[peak_flops]\nscalar = 1e12\nmatrix = 1e13\n",
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidField { ref field, .. } if field == "peak_mem_bw_bytes_per_s"));
    }

    #[test]
    fn negative_peak_is_rejected() {
        let err = HardwareProfile::new("x", [(EngineClass::ScalarCore, -1.0)], 1.0).unwrap_err();
        assert!(matches!(err, Error::InvalidField { ref field, .. } if field == "peak_flops.scalar"));
    }

    #[test]
    fn matrix_slower_than_scalar_is_rejected() {
        let err = HardwareProfile::new(
            "x",
            [(EngineClass::ScalarCore, 2.0), (EngineClass::MatrixUnit, 1.0)],
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidField { .. }));
    }

    #[test]
    fn knee_values() {
        let p = toy();
        assert_eq!(p.knee_ai(EngineClass::ScalarCore).unwrap(), 10.0);
        assert_eq!(p.knee_ai(EngineClass::MatrixUnit).unwrap(), 160.0);
        let unit = HardwareProfile::new("u", [(EngineClass::ScalarCore, 5.0)], 5.0).unwrap();
        assert_eq!(unit.knee_ai(EngineClass::ScalarCore).unwrap(), 1.0);
    }

    #[test]
    fn unknown_engine_errors() {
        let p = HardwareProfile::new("s", [(EngineClass::ScalarCore, 5.0)], 5.0).unwrap();
        assert!(matches!(
            p.knee_ai(EngineClass::MatrixUnit),
            Err(Error::MissingEngine(EngineClass::MatrixUnit))
        ));
        assert!(p.roof_throughput(EngineClass::SparseMatrixUnit, 1.0).is_err());
    }

    #[test]
    fn roof_at_knee_half_knee_and_plateau() {
        let p = toy();
        for engine in [EngineClass::ScalarCore, EngineClass::MatrixUnit] {
            let knee = p.knee_ai(engine).unwrap();
            let peak = p.peak_flops(engine).unwrap();
            assert_eq!(p.roof_throughput(engine, knee).unwrap(), peak);
            assert_eq!(p.roof_throughput(engine, knee / 2.0).unwrap(), peak / 2.0);
            assert_eq!(p.roof_throughput(engine, 10.0 * knee).unwrap(), peak);
        }
        assert!(p.roof_throughput(EngineClass::ScalarCore, -1.0).is_err());
    }

    #[test]
    fn engine_names_round_trip() {
        for e in EngineClass::ALL {
            assert_eq!(e.as_str().parse::<EngineClass>().unwrap(), e);
        }
        assert!("gpu".parse::<EngineClass>().is_err());
    }
}
