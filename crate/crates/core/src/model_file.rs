//! Model files: `{"kind": ..., "config": {...}, "weights": [tensor records]}`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::fusionnet::{FusionConfig, FusionNet};
use crate::predictor::{ClassProbs, InputSpec, MultimodalSample, Predictor, NUM_CLASSES};
use crate::tensor::Tensor;
use crate::toy::{AdditiveModel, ConstantModel, OutputMode, TableGame, TableGameModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub kind: String,
    pub config: Value,
    #[serde(default)]
    pub weights: Vec<Tensor>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantConfig {
    values: [f64; NUM_CLASSES],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdditiveConfig {
    output: OutputMode,
    image_shape: [usize; 3],
    speech_shape: [usize; 2],
    text_len: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableGameConfig {
    table: Vec<f64>,
    #[serde(default)]
    class: usize,
}

/// Any of the built-in predictors.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum ToyModel {
    Constant(ConstantModel),
    Additive(AdditiveModel),
    TableGame(TableGameModel),
    Fusion(Box<FusionNet>),
}

fn config<T: serde::de::DeserializeOwned>(kind: &str, value: &Value) -> Result<T> {
    serde_json::from_value(value.clone()).map_err(|e| Error::Config(format!("{kind} config: {e}")))
}

fn expect_weights(kind: &str, weights: &[Tensor], n: usize) -> Result<()> {
    if weights.len() != n {
        return Err(Error::Config(format!("{kind} model needs {n} weight tensors, got {}", weights.len())));
    }
    Ok(())
}

/// Builds a predictor of the named kind: `constant`, `additive`,
/// `table-game` or `fusion`.
pub fn make_toy_model(kind: &str, config_value: &Value, weights: &[Tensor]) -> Result<ToyModel> {
    match kind {
        "constant" => {
            let c: ConstantConfig = config(kind, config_value)?;
            expect_weights(kind, weights, 0)?;
            Ok(ToyModel::Constant(ConstantModel::new(ClassProbs(c.values))?))
        }
        "additive" => {
            let c: AdditiveConfig = config(kind, config_value)?;
            expect_weights(kind, weights, 4)?;
            let bias: [f64; NUM_CLASSES] = weights[0]
                .data()
                .try_into()
                .map_err(|_| Error::shape("additive bias", [NUM_CLASSES], weights[0].shape()))?;
            Ok(ToyModel::Additive(AdditiveModel::new(
                bias,
                c.image_shape,
                weights[1].clone(),
                c.speech_shape,
                weights[2].clone(),
                c.text_len,
                weights[3].clone(),
                c.output,
            )?))
        }
        "table-game" => {
            let c: TableGameConfig = config(kind, config_value)?;
            expect_weights(kind, weights, 0)?;
            Ok(ToyModel::TableGame(TableGameModel::new(TableGame::new(c.table)?, c.class)?))
        }
        "fusion" => {
            let c: FusionConfig = config(kind, config_value)?;
            let mut net = FusionNet::new(c)?;
            if !weights.is_empty() {
                net.params_mut().load(weights.to_vec())?;
            }
            Ok(ToyModel::Fusion(Box::new(net)))
        }
        other => Err(Error::Config(format!("unknown model kind {other:?}"))),
    }
}

impl ToyModel {
    pub fn from_file(file: &ModelFile) -> Result<Self> {
        make_toy_model(&file.kind, &file.config, &file.weights)
    }

    pub fn to_file(&self) -> ModelFile {
        match self {
            ToyModel::Constant(m) => ModelFile {
                kind: "constant".into(),
                config: to_value(&ConstantConfig { values: m.scores().0 }),
                weights: vec![],
            },
            ToyModel::Additive(m) => {
                let spec = m.input_spec();
                ModelFile {
                    kind: "additive".into(),
                    config: to_value(&AdditiveConfig {
                        output: m.output_mode(),
                        image_shape: spec.image_shape.expect("additive image shape"),
                        speech_shape: spec.speech_shape.expect("additive speech shape"),
                        text_len: spec.text_len.expect("additive text length"),
                    }),
                    weights: vec![
                        Tensor::new(vec![NUM_CLASSES], m.bias().to_vec()).expect("finite bias"),
                        m.image_weights().clone(),
                        m.speech_weights().clone(),
                        m.text_embedding().clone(),
                    ],
                }
            }
            ToyModel::TableGame(m) => ModelFile {
                kind: "table-game".into(),
                config: to_value(&TableGameConfig {
                    table: m.game().values().to_vec(),
                    class: m.class(),
                }),
                weights: vec![],
            },
            ToyModel::Fusion(net) => ModelFile {
                kind: "fusion".into(),
                config: to_value(net.config()),
                weights: net.params().tensors().to_vec(),
            },
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: ModelFile = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("model file: {e}")))?;
        Self::from_file(&file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, crate::fmt::to_json_string(&self.to_file())?)?;
        Ok(())
    }

    fn inner(&self) -> &dyn Predictor {
        match self {
            ToyModel::Constant(m) => m,
            ToyModel::Additive(m) => m,
            ToyModel::TableGame(m) => m,
            ToyModel::Fusion(m) => m.as_ref(),
        }
    }
}

fn to_value<T: Serialize>(config: &T) -> Value {
    serde_json::to_value(config).expect("config serializes")
}

impl Predictor for ToyModel {
    fn forward(&self, sample: &MultimodalSample) -> Result<ClassProbs> {
        self.inner().forward(sample)
    }

    fn input_spec(&self) -> InputSpec {
        self.inner().input_spec()
    }

    fn is_probabilistic(&self) -> bool {
        self.inner().is_probabilistic()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusionnet::Variant;
    use serde_json::json;

    #[test]
    fn unknown_kind_is_config_error() {
        assert!(matches!(make_toy_model("resnet", &json!({}), &[]), Err(Error::Config(_))));
    }

    #[test]
    fn constant_from_json() {
        let m = make_toy_model("constant", &json!({"values": [0.25, 0.25, 0.25, 0.25]}), &[]).unwrap();
        let s = MultimodalSample::new(Tensor::zeros(&[1, 1, 1]), Tensor::zeros(&[1, 1]), vec![], None).unwrap();
        assert_eq!(m.predict(&s).unwrap(), ClassProbs::UNIFORM);
        assert!(make_toy_model("constant", &json!({"values": [1.0], "extra": 1}), &[]).is_err());
    }

    #[test]
    fn fusion_file_round_trip() {
        let cfg = FusionConfig {
            d: 2,
            image_shape: [2, 2, 1],
            speech_shape: [2, 2],
            text_len: 2,
            vocab: 5,
            embed_dim: 2,
            variant: Variant::Baseline(3),
            seed: 9,
        };
        let model = ToyModel::Fusion(Box::new(FusionNet::new(cfg).unwrap()));
        let text = crate::fmt::to_json_string(&model.to_file()).unwrap();
        let back = ToyModel::from_file(&serde_json::from_str(&text).unwrap()).unwrap();
        let (ToyModel::Fusion(a), ToyModel::Fusion(b)) = (&model, &back) else { unreachable!() };
        assert_eq!(a.params(), b.params());
        assert_eq!(a.config(), b.config());
    }

    #[test]
    fn fusion_rejects_wrong_weights() {
        let cfg = serde_json::to_value(FusionConfig::default()).unwrap();
        assert!(make_toy_model("fusion", &cfg, &[Tensor::zeros(&[1])]).is_err());
        let mut bad = cfg.clone();
        bad["variant"] = json!("baseline#1");
        assert!(make_toy_model("fusion", &bad, &[]).is_err());
    }

    #[test]
    fn table_game_file() {
        let m = make_toy_model("table-game", &json!({"table": [0, 0, 0, 1, 0, 1, 1, 1]}), &[]).unwrap();
        let file = m.to_file();
        assert_eq!(file.kind, "table-game");
        assert_eq!(file.config["class"], 0);
    }
}
