//! Self-describing JSON model files.
//!
//! Floats are written in their shortest round-trip decimal form, so a
//! save/load/save cycle reproduces the file byte for byte.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::data::Target;
use crate::error::{Error, Result};
use crate::nn::{Dense, DenseNetwork};
use crate::operator::{DeepOnetModel, FourierMap, Normalization, Operator, OperatorVariant, PhysicsGuidedModel, TrunkKind};

use super::model::{BiFidelityModel, ConfigLabel, TrainingProvenance};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    schema_version: u32,
    kind: String,
    config_label: String,
    target: Target,
    normalization: Normalization,
    low: OperatorDto,
    residual: OperatorDto,
    provenance: ProvenanceDto,
}

/// A single trained operator, as written after low-fidelity training.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OperatorFile {
    schema_version: u32,
    kind: String,
    target: Target,
    normalization: Normalization,
    operator: OperatorDto,
    provenance: TrainingProvenance,
}

#[derive(Deserialize)]
struct KindProbe {
    kind: String,
}

const BIFIDELITY_KIND: &str = "bifidelity";
const OPERATOR_KIND: &str = "operator";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProvenanceDto {
    low: TrainingProvenance,
    residual: TrainingProvenance,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OperatorDto {
    variant: OperatorVariant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    deeponet: Option<DeepOnetDto>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    amplitude: Option<DeepOnetDto>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    frequency: Option<DeepOnetDto>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    phase: Option<DeepOnetDto>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeepOnetDto {
    trunk_kind: TrunkKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fourier: Option<FourierDto>,
    branch: NetworkDto,
    trunk: NetworkDto,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FourierDto {
    m: usize,
    sigma: f64,
    seed: u64,
    b: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkDto {
    seed: u64,
    layers: Vec<LayerDto>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDto {
    /// Row-major, one row per output unit.
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
}

fn format_err(field: impl Into<String>, message: impl ToString) -> Error {
    Error::ModelFormat {
        field: field.into(),
        message: message.to_string(),
    }
}

fn matrix_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn matrix_from_rows(rows: Vec<Vec<f64>>, field: &str) -> Result<Array2<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if let Some(k) = rows.iter().position(|r| r.len() != cols) {
        return Err(format_err(
            format!("{field}[{k}]"),
            format!("row has {} entries, expected {cols}", rows[k].len()),
        ));
    }
    let n = rows.len();
    Array2::from_shape_vec((n, cols), rows.into_iter().flatten().collect()).map_err(|e| format_err(field, e))
}

impl NetworkDto {
    fn from_network(net: &DenseNetwork) -> Self {
        Self {
            seed: net.spec().seed,
            layers: net
                .layers()
                .iter()
                .map(|l| LayerDto {
                    weights: matrix_rows(&l.weight),
                    biases: l.bias.to_vec(),
                })
                .collect(),
        }
    }

    fn into_network(self, field: &str) -> Result<DenseNetwork> {
        let layers = self
            .layers
            .into_iter()
            .enumerate()
            .map(|(k, l)| {
                Ok(Dense {
                    weight: matrix_from_rows(l.weights, &format!("{field}.layers[{k}].weights"))?,
                    bias: Array1::from(l.biases),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        DenseNetwork::from_layers(layers, self.seed).map_err(|e| format_err(format!("{field}.layers"), e))
    }
}

impl DeepOnetDto {
    fn from_model(m: &DeepOnetModel) -> Self {
        Self {
            trunk_kind: m.trunk_kind(),
            fourier: m.fourier().map(|f| FourierDto {
                m: f.num_features(),
                sigma: f.sigma(),
                seed: f.seed(),
                b: matrix_rows(f.matrix()),
            }),
            branch: NetworkDto::from_network(m.branch()),
            trunk: NetworkDto::from_network(m.trunk()),
        }
    }

    fn into_model(self, normalization: Normalization, field: &str) -> Result<DeepOnetModel> {
        let fourier = match (self.trunk_kind, self.fourier) {
            (TrunkKind::Vanilla, None) => None,
            (TrunkKind::Vanilla, Some(_)) => {
                return Err(format_err(format!("{field}.fourier"), "vanilla trunk must not carry a fourier map"))
            }
            (TrunkKind::Fourier, None) => return Err(format_err(format!("{field}.fourier"), "missing for fourier trunk")),
            (TrunkKind::Fourier, Some(f)) => {
                let b = matrix_from_rows(f.b, &format!("{field}.fourier.b"))?;
                if b.nrows() != f.m {
                    return Err(format_err(
                        format!("{field}.fourier.m"),
                        format!("m = {} but b has {} rows", f.m, b.nrows()),
                    ));
                }
                Some(FourierMap::from_matrix(b, f.sigma, f.seed).map_err(|e| format_err(format!("{field}.fourier.b"), e))?)
            }
        };
        let branch = self.branch.into_network(&format!("{field}.branch"))?;
        let trunk = self.trunk.into_network(&format!("{field}.trunk"))?;
        DeepOnetModel::from_parts(branch, trunk, fourier, normalization).map_err(|e| format_err(field, e))
    }
}

impl OperatorDto {
    fn from_operator(op: &Operator) -> Self {
        match op {
            Operator::DataDriven(m) => Self {
                variant: OperatorVariant::DataDriven,
                deeponet: Some(DeepOnetDto::from_model(m)),
                amplitude: None,
                frequency: None,
                phase: None,
            },
            Operator::PhysicsGuided(p) => Self {
                variant: OperatorVariant::PhysicsGuided,
                deeponet: None,
                amplitude: Some(DeepOnetDto::from_model(p.chi())),
                frequency: Some(DeepOnetDto::from_model(p.omega())),
                phase: Some(DeepOnetDto::from_model(p.delta())),
            },
        }
    }

    fn into_operator(self, normalization: Normalization, field: &str) -> Result<Operator> {
        let take = |dto: Option<DeepOnetDto>, name: &str| -> Result<DeepOnetModel> {
            let path = format!("{field}.{name}");
            dto.ok_or_else(|| format_err(&path, "missing"))?.into_model(normalization, &path)
        };
        let forbid = |present: bool, name: &str| -> Result<()> {
            if present {
                Err(format_err(format!("{field}.{name}"), format!("not allowed for variant {:?}", self.variant)))
            } else {
                Ok(())
            }
        };
        match self.variant {
            OperatorVariant::DataDriven => {
                forbid(self.amplitude.is_some(), "amplitude")?;
                forbid(self.frequency.is_some(), "frequency")?;
                forbid(self.phase.is_some(), "phase")?;
                Ok(Operator::DataDriven(take(self.deeponet, "deeponet")?))
            }
            OperatorVariant::PhysicsGuided => {
                forbid(self.deeponet.is_some(), "deeponet")?;
                let chi = take(self.amplitude, "amplitude")?;
                let omega = take(self.frequency, "frequency")?;
                let delta = take(self.phase, "phase")?;
                Ok(Operator::PhysicsGuided(
                    PhysicsGuidedModel::from_parts(chi, omega, delta).map_err(|e| format_err(field, e))?,
                ))
            }
        }
    }
}

/// Serializes a model to its JSON text, newline-terminated.
pub fn model_to_string(model: &BiFidelityModel) -> String {
    let file = ModelFile {
        schema_version: MODEL_SCHEMA_VERSION,
        kind: BIFIDELITY_KIND.into(),
        config_label: model.config_label.to_string(),
        target: model.target,
        normalization: *model.low.normalization(),
        low: OperatorDto::from_operator(&model.low),
        residual: OperatorDto::from_operator(&model.residual),
        provenance: ProvenanceDto {
            low: model.low_provenance.clone(),
            residual: model.residual_provenance.clone(),
        },
    };
    let mut text = serde_json::to_string(&file).expect("model serialization cannot fail");
    text.push('\n');
    text
}

fn parse<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        format_err(if path == "." { "<root>".to_string() } else { path }, e.into_inner())
    })
}

fn check_header(version: u32, kind: &str, expected: &str) -> Result<()> {
    if version != MODEL_SCHEMA_VERSION {
        return Err(format_err(
            "schema_version",
            format!("unsupported version {version} (expected {MODEL_SCHEMA_VERSION})"),
        ));
    }
    if kind != expected {
        return Err(format_err("kind", format!("expected {expected:?}, found {kind:?}")));
    }
    Ok(())
}

pub fn model_from_str(text: &str) -> Result<BiFidelityModel> {
    let file: ModelFile = parse(text)?;
    check_header(file.schema_version, &file.kind, BIFIDELITY_KIND)?;
    let label: ConfigLabel = file.config_label.parse().map_err(|e| format_err("config_label", e))?;
    file.normalization.validate().map_err(|e| format_err("normalization", e))?;
    let low = file.low.into_operator(file.normalization, "low")?;
    let residual = file.residual.into_operator(file.normalization, "residual")?;
    let model = BiFidelityModel::from_parts(low, residual, file.target, file.provenance.low, file.provenance.residual)?;
    if model.config_label != label {
        return Err(format_err(
            "config_label",
            format!("{label} does not match the stored variants ({})", model.config_label),
        ));
    }
    Ok(model)
}

/// A trained operator together with what it was trained for.
#[derive(Debug, Clone)]
pub struct StoredOperator {
    pub operator: Operator,
    pub target: Target,
    pub provenance: TrainingProvenance,
}

pub fn operator_to_string(stored: &StoredOperator) -> String {
    let file = OperatorFile {
        schema_version: MODEL_SCHEMA_VERSION,
        kind: OPERATOR_KIND.into(),
        target: stored.target,
        normalization: *stored.operator.normalization(),
        operator: OperatorDto::from_operator(&stored.operator),
        provenance: stored.provenance.clone(),
    };
    let mut text = serde_json::to_string(&file).expect("operator serialization cannot fail");
    text.push('\n');
    text
}

pub fn operator_from_str(text: &str) -> Result<StoredOperator> {
    let file: OperatorFile = parse(text)?;
    check_header(file.schema_version, &file.kind, OPERATOR_KIND)?;
    file.normalization.validate().map_err(|e| format_err("normalization", e))?;
    Ok(StoredOperator {
        operator: file.operator.into_operator(file.normalization, "operator")?,
        target: file.target,
        provenance: file.provenance,
    })
}

/// Either kind of model file.
#[derive(Debug, Clone)]
pub enum StoredModel {
    BiFidelity(BiFidelityModel),
    Operator(StoredOperator),
}

impl StoredModel {
    pub fn target(&self) -> Target {
        match self {
            StoredModel::BiFidelity(m) => m.target,
            StoredModel::Operator(o) => o.target,
        }
    }

    /// Model output along one trajectory.
    pub fn predict(&self, u_bar: f64, times: &[f64]) -> Result<Vec<f64>> {
        match self {
            StoredModel::BiFidelity(m) => Ok(super::model::predict_bifidelity(m, u_bar, times)?.combined),
            StoredModel::Operator(o) => o.operator.predict_trajectory(u_bar, times),
        }
    }

    pub fn label(&self) -> String {
        match self {
            StoredModel::BiFidelity(m) => m.config_label.to_string(),
            StoredModel::Operator(o) => o.operator.variant().letter().to_string(),
        }
    }
}

pub fn stored_model_from_str(text: &str) -> Result<StoredModel> {
    let probe: KindProbe = parse(text)?;
    match probe.kind.as_str() {
        BIFIDELITY_KIND => model_from_str(text).map(StoredModel::BiFidelity),
        OPERATOR_KIND => operator_from_str(text).map(StoredModel::Operator),
        other => Err(format_err("kind", format!("unknown model kind {other:?}"))),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn save_operator(stored: &StoredOperator, path: &Path) -> Result<()> {
    fs::write(path, operator_to_string(stored)).map_err(|e| Error::io(path, e))
}

pub fn load_operator(path: &Path) -> Result<StoredOperator> {
    operator_from_str(&read(path)?)
}

pub fn load_stored_model(path: &Path) -> Result<StoredModel> {
    stored_model_from_str(&read(path)?)
}

pub fn save_model(model: &BiFidelityModel, path: &Path) -> Result<()> {
    fs::write(path, model_to_string(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<BiFidelityModel> {
    model_from_str(&read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::ArchitectureConfig;

    fn arch() -> ArchitectureConfig {
        ArchitectureConfig {
            hidden_layers: 1,
            width: 5,
            basis_size: 3,
            fourier_features: 4,
            fourier_sigma: 7.0,
        }
    }

    fn provenance(seed: u64) -> TrainingProvenance {
        TrainingProvenance {
            seed,
            dataset_fingerprint: "00ff".into(),
            epochs_run: 3,
            best_epoch: 2,
        }
    }

    fn model(low: OperatorVariant, residual: OperatorVariant, trunk: TrunkKind) -> BiFidelityModel {
        let norm = Normalization::default();
        BiFidelityModel::from_parts(
            Operator::new(low, &arch(), trunk, norm, 1).unwrap(),
            Operator::new(residual, &arch(), trunk, norm, 2).unwrap(),
            Target::Lift,
            provenance(1),
            provenance(2),
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_byte_identical_and_bit_faithful() {
        use OperatorVariant::*;
        for (l, r) in [(PhysicsGuided, PhysicsGuided), (DataDriven, PhysicsGuided), (DataDriven, DataDriven), (PhysicsGuided, DataDriven)] {
            for trunk in [TrunkKind::Fourier, TrunkKind::Vanilla] {
                let m = model(l, r, trunk);
                let text = model_to_string(&m);
                let back = model_from_str(&text).unwrap();
                assert_eq!(model_to_string(&back), text);
                assert_eq!(back.config_label, m.config_label);
                for u in [0.93, 1.07] {
                    for t in [0.0, 3.3, 8.0] {
                        assert_eq!(back.low.eval(u, t).unwrap().to_bits(), m.low.eval(u, t).unwrap().to_bits());
                        assert_eq!(back.residual.eval(u, t).unwrap().to_bits(), m.residual.eval(u, t).unwrap().to_bits());
                    }
                }
            }
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let m = model(OperatorVariant::PhysicsGuided, OperatorVariant::PhysicsGuided, TrunkKind::Fourier);
        save_model(&m, &path).unwrap();
        let first = fs::read(&path).unwrap();
        save_model(&load_model(&path).unwrap(), &path).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);
    }

    #[test]
    fn operator_file_round_trip() {
        for variant in [OperatorVariant::PhysicsGuided, OperatorVariant::DataDriven] {
            let stored = StoredOperator {
                operator: Operator::new(variant, &arch(), TrunkKind::Fourier, Normalization::default(), 5).unwrap(),
                target: Target::Drag,
                provenance: provenance(5),
            };
            let text = operator_to_string(&stored);
            let back = operator_from_str(&text).unwrap();
            assert_eq!(operator_to_string(&back), text);
            assert!(matches!(stored_model_from_str(&text).unwrap(), StoredModel::Operator(_)));
            assert!(matches!(model_from_str(&text), Err(Error::ModelFormat { .. })));
        }
        let m = model(OperatorVariant::DataDriven, OperatorVariant::DataDriven, TrunkKind::Vanilla);
        assert!(matches!(stored_model_from_str(&model_to_string(&m)).unwrap(), StoredModel::BiFidelity(_)));
    }

    fn field_of(text: &str) -> String {
        match model_from_str(text) {
            Err(Error::ModelFormat { field, .. }) => field,
            other => panic!("expected a format error, got {other:?}"),
        }
    }

    #[test]
    fn corrupt_files_name_the_field() {
        let m = model(OperatorVariant::PhysicsGuided, OperatorVariant::DataDriven, TrunkKind::Fourier);
        let mut v: serde_json::Value = serde_json::from_str(&model_to_string(&m)).unwrap();

        let mut bad = v.clone();
        bad["low"]["frequency"]["branch"]["layers"][0]["weights"][1][0] = "oops".into();
        assert_eq!(field_of(&bad.to_string()), "low.frequency.branch.layers[0].weights[1][0]");

        let mut bad = v.clone();
        bad["config_label"] = "DD".into();
        assert_eq!(field_of(&bad.to_string()), "config_label");

        let mut bad = v.clone();
        bad["residual"]["deeponet"]["fourier"]["b"][2] = serde_json::json!([1.0, 2.0]);
        assert_eq!(field_of(&bad.to_string()), "residual.deeponet.fourier.b[2]");

        let mut bad = v.clone();
        bad["low"].as_object_mut().unwrap().remove("phase");
        assert_eq!(field_of(&bad.to_string()), "low.phase");

        let mut bad = v.clone();
        bad["schema_version"] = 7.into();
        assert_eq!(field_of(&bad.to_string()), "schema_version");

        v["residual"]["deeponet"]["trunk"]["layers"][1]["biases"] = serde_json::json!([0.0]);
        assert!(field_of(&v.to_string()).starts_with("residual.deeponet"));

        assert!(matches!(model_from_str("{\"schema_version\": 1"), Err(Error::ModelFormat { .. })));
    }
}
