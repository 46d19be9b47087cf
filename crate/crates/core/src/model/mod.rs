//! The decoupled belief tracker: encoder, context gate and slot-value
//! decoder sharing one parameter set.

pub mod encoder;
pub mod forward;
pub mod gate;
pub mod lexicon;
pub mod score;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{BatchNormState, Checkpoint, ParameterSet, Tensor};

pub use encoder::{encode_utterance, EncodedBatch};
pub use forward::{forward_batch, ForwardOutput, TurnInput, TurnLabels};
pub use gate::context_gate;
pub use lexicon::{ActVectors, Candidate, Lexicon, WordMatrix};
pub use score::{cumulative_score, predict_state, turn_score, ScoreTable};

/// Parameter names inside a [`ParameterSet`].
pub mod names {
    pub const ENCODER_WEIGHTS: [&str; 3] = ["encoder.w1", "encoder.w2", "encoder.w3"];
    pub const ENCODER_BIASES: [&str; 3] = ["encoder.b1", "encoder.b2", "encoder.b3"];
    pub const GATE_W_CS: &str = "gate.w_cs";
    pub const GATE_B_CS: &str = "gate.b_cs";
    pub const GATE_W_TQ: &str = "gate.w_tq";
    pub const GATE_W_TS: &str = "gate.w_ts";
    pub const GATE_W_TV: &str = "gate.w_tv";
    pub const DECODER_W_Y: &str = "decoder.w_y";
    pub(crate) const BN_MEAN: &str = "bn.running_mean";
    pub(crate) const BN_VAR: &str = "bn.running_var";

    pub fn is_encoder(name: &str) -> bool {
        name.starts_with("encoder.")
    }

    pub fn is_gate(name: &str) -> bool {
        name.starts_with("gate.")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub hidden: usize,
    pub lambda: f64,
    pub theta_inf: f64,
    pub theta_req: f64,
    pub dropout: f64,
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 300,
            lambda: 0.5,
            theta_inf: 0.5,
            theta_req: 0.5,
            dropout: 0.5,
            bn_momentum: 0.1,
            bn_epsilon: 1e-5,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must be in [0,1], got {v}")))
            }
        };
        if self.hidden == 0 {
            return Err(Error::InvalidArgument("hidden size must be positive".into()));
        }
        unit("lambda", self.lambda)?;
        unit("theta_inf", self.theta_inf)?;
        unit("theta_req", self.theta_req)?;
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!("dropout must be in [0,1), got {}", self.dropout)));
        }
        Ok(())
    }
}

/// One language's tracker. The embedding table is not owned here; it lives
/// in the [`Lexicon`] used alongside the model.
#[derive(Debug, Clone)]
pub struct NbtModel {
    pub config: ModelConfig,
    pub language: String,
    pub ontology_fingerprint: String,
    pub params: ParameterSet,
    pub bn: BatchNormState,
}

impl NbtModel {
    /// Random initialisation: He-scaled filters, `1/sqrt(H)` gate and decoder
    /// weights, zero biases.
    pub fn init(config: ModelConfig, language: &str, ontology_fingerprint: &str, seed: u64) -> Result<Self> {
        config.validate()?;
        let h = config.hidden;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = |n: usize, std: f64| -> Vec<f64> {
            let d = Normal::new(0.0, std).expect("positive std");
            (0..n).map(|_| d.sample(&mut rng)).collect()
        };
        let hf = h as f64;
        let mut params = ParameterSet::new();
        for (k, n) in encoder::WIDTHS.iter().enumerate() {
            let fan_in = (n * h) as f64;
            params.insert(
                names::ENCODER_WEIGHTS[k],
                Tensor::matrix(h, n * h, normal(h * n * h, (2.0 / fan_in).sqrt()))?,
                true,
            )?;
            params.insert(names::ENCODER_BIASES[k], Tensor::zeros(&[h]), true)?;
        }
        params.insert(names::GATE_W_CS, Tensor::matrix(h, h, normal(h * h, 1.0 / hf.sqrt()))?, true)?;
        params.insert(names::GATE_B_CS, Tensor::zeros(&[h]), true)?;
        for name in [names::GATE_W_TQ, names::GATE_W_TS, names::GATE_W_TV] {
            params.insert(name, Tensor::matrix(h, h, normal(h * h, 1.0 / hf))?, true)?;
        }
        params.insert(names::DECODER_W_Y, Tensor::vector(normal(h, 1.0 / hf.sqrt()))?, true)?;
        Ok(NbtModel {
            config,
            language: language.to_string(),
            ontology_fingerprint: ontology_fingerprint.to_string(),
            params,
            bn: BatchNormState::new(h, config.bn_momentum, config.bn_epsilon)?,
        })
    }

    pub fn hidden(&self) -> usize {
        self.config.hidden
    }

    pub fn w_y(&self) -> &[f64] {
        self.params.data(names::DECODER_W_Y).expect("decoder present")
    }

    pub fn freeze_decoder(&mut self) {
        self.params
            .set_trainable(names::DECODER_W_Y, false)
            .expect("decoder present");
    }

    /// Fails unless the lexicon has this model's width and ontology.
    pub fn check_lexicon(&self, lexicon: &Lexicon) -> Result<()> {
        if lexicon.dim() != self.hidden() {
            return Err(Error::Shape(format!(
                "embeddings are {}-d but the model has H={}",
                lexicon.dim(),
                self.hidden()
            )));
        }
        let fp = lexicon.ontology().fingerprint();
        if fp != self.ontology_fingerprint {
            return Err(Error::Ontology(format!(
                "model was trained on ontology {} but got {fp}",
                self.ontology_fingerprint
            )));
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut params = self.params.clone();
        params.insert(names::BN_MEAN, Tensor::vector(self.bn.running_mean.clone())?, false)?;
        params.insert(names::BN_VAR, Tensor::vector(self.bn.running_var.clone())?, false)?;
        let c = &self.config;
        Ok(Checkpoint::new(params)
            .with_meta("kind", "nbt")
            .with_meta("hidden", c.hidden)
            .with_meta("lambda", c.lambda)
            .with_meta("theta_inf", c.theta_inf)
            .with_meta("theta_req", c.theta_req)
            .with_meta("dropout", c.dropout)
            .with_meta("bn_momentum", c.bn_momentum)
            .with_meta("bn_epsilon", c.bn_epsilon)
            .with_meta("language", &self.language)
            .with_meta("ontology", &self.ontology_fingerprint))
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.meta_str("kind") != Some("nbt") {
            return Err(Error::InvalidArgument("checkpoint does not hold a tracker".into()));
        }
        let hidden = ckpt.meta_f64("hidden")?;
        if hidden < 1.0 || hidden.fract() != 0.0 {
            return Err(Error::InvalidArgument(format!("bad hidden size {hidden}")));
        }
        let config = ModelConfig {
            hidden: hidden as usize,
            lambda: ckpt.meta_f64("lambda")?,
            theta_inf: ckpt.meta_f64("theta_inf")?,
            theta_req: ckpt.meta_f64("theta_req")?,
            dropout: ckpt.meta_f64("dropout")?,
            bn_momentum: ckpt.meta_f64("bn_momentum")?,
            bn_epsilon: ckpt.meta_f64("bn_epsilon")?,
        };
        config.validate()?;
        let mut params = ParameterSet::new();
        let mut bn = BatchNormState::new(config.hidden, config.bn_momentum, config.bn_epsilon)?;
        for (name, p) in ckpt.params.iter() {
            match name {
                names::BN_MEAN => bn.running_mean = p.tensor.data().to_vec(),
                names::BN_VAR => bn.running_var = p.tensor.data().to_vec(),
                _ => params.insert(name, p.tensor.clone(), p.trainable)?,
            }
        }
        if bn.running_mean.len() != config.hidden || bn.running_var.len() != config.hidden {
            return Err(Error::Shape("batch-norm statistics do not match H".into()));
        }
        let model = NbtModel {
            config,
            language: ckpt.meta_str("language").unwrap_or_default().to_string(),
            ontology_fingerprint: ckpt.meta_str("ontology").unwrap_or_default().to_string(),
            params,
            bn,
        };
        encoder::EncoderView::new(&model.params, config.hidden)?;
        gate::GateView::new(&model.params, config.hidden)?;
        if model.params.data(names::DECODER_W_Y)?.len() != config.hidden {
            return Err(Error::Shape("decoder does not match H".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}
