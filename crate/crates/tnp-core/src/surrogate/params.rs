//! Parameters of the neural-process surrogate and their checkpoint format.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::nn::{seed_stream, GradientMap, Mlp, MlpDoc, MlpVars, RealArray, Tape, Var};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::SurrogateError;

/// Divisor of the pre-softmax attention logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum AttentionScale {
    /// Divide by the square root of the shared embedding width.
    #[default]
    #[serde(rename = "sqrt_r")]
    SqrtEmbed,
    /// Divide by the square root of the per-head width.
    #[serde(rename = "sqrt_dh")]
    SqrtHead,
}

/// Architecture of the surrogate. The embedding width must be divisible by the
/// head count; hidden layers apply to all three networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpConfig {
    pub input_dim: usize,
    pub embed_dim: usize,
    pub num_heads: usize,
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub attention_scale: AttentionScale,
}

impl NpConfig {
    /// Full-scale defaults: 128-wide embeddings, four heads, two 128-unit
    /// hidden layers. Desk-scale work overrides the widths.
    pub fn new(input_dim: usize) -> Self {
        Self {
            input_dim,
            embed_dim: 128,
            num_heads: 4,
            hidden: vec![128, 128],
            attention_scale: AttentionScale::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SurrogateError> {
        if self.input_dim == 0 || self.embed_dim == 0 || self.num_heads == 0 {
            return Err(SurrogateError::InvalidConfig(
                "dimensions must be positive".into(),
            ));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(SurrogateError::InvalidConfig(
                "hidden widths must be positive".into(),
            ));
        }
        if self.embed_dim % self.num_heads != 0 {
            return Err(SurrogateError::InvalidConfig(format!(
                "embedding width {} is not divisible by head count {}",
                self.embed_dim, self.num_heads
            )));
        }
        Ok(())
    }

    fn dims(&self, input: usize, output: usize) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(input);
        dims.extend_from_slice(&self.hidden);
        dims.push(output);
        dims
    }
}

/// Projection matrices of one attention head, each `r x (r / H)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub wq: RealArray,
    pub wk: RealArray,
    pub wv: RealArray,
}

/// All learnable parameters of the surrogate.
///
/// The canonical flattening order — encoder, key network, decoder (weights
/// then bias per layer), then per head query/key/value projections — is shared
/// by every optimizer-facing code path.
#[derive(Debug, Clone, PartialEq)]
pub struct NpParams {
    encoder: Mlp,
    key_net: Mlp,
    decoder: Mlp,
    heads: Vec<HeadParams>,
    input_dim: usize,
    embed_dim: usize,
    attention_scale: AttentionScale,
}

/// Tape handles for every parameter array, mirroring [`NpParams`].
pub struct NpVars {
    pub encoder: MlpVars,
    pub key_net: MlpVars,
    pub decoder: MlpVars,
    pub heads: Vec<HeadVars>,
}

pub struct HeadVars {
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
}

impl NpParams {
    /// Seeded initialization: each network and head gets an independent
    /// stream derived from `seed`, so the whole bundle is reproducible.
    pub fn init(cfg: &NpConfig, seed: u64) -> Result<Self, SurrogateError> {
        cfg.validate()?;
        let d = cfg.input_dim;
        let r = cfg.embed_dim;
        let dh = r / cfg.num_heads;
        let encoder = Mlp::xavier(&cfg.dims(d + 1, r), seed_stream(seed, "encoder"));
        let key_net = Mlp::xavier(&cfg.dims(d, r), seed_stream(seed, "key-net"));
        let decoder = Mlp::xavier(&cfg.dims(r + d, 2), seed_stream(seed, "decoder"));
        let limit = (6.0 / (r + dh) as f64).sqrt();
        let heads = (0..cfg.num_heads)
            .map(|h| {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(seed_stream(seed, &format!("head-{h}")));
                let draw = |rng: &mut ChaCha8Rng| {
                    RealArray::new(
                        r,
                        dh,
                        (0..r * dh).map(|_| rng.random_range(-limit..limit)).collect(),
                    )
                };
                HeadParams {
                    wq: draw(&mut rng),
                    wk: draw(&mut rng),
                    wv: draw(&mut rng),
                }
            })
            .collect();
        Ok(Self {
            encoder,
            key_net,
            decoder,
            heads,
            input_dim: d,
            embed_dim: r,
            attention_scale: cfg.attention_scale,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn num_heads(&self) -> usize {
        self.heads.len()
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads.len()
    }

    pub fn attention_scale(&self) -> AttentionScale {
        self.attention_scale
    }

    pub fn set_attention_scale(&mut self, scale: AttentionScale) {
        self.attention_scale = scale;
    }

    pub fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    pub fn key_net(&self) -> &Mlp {
        &self.key_net
    }

    pub fn decoder(&self) -> &Mlp {
        &self.decoder
    }

    pub fn heads(&self) -> &[HeadParams] {
        &self.heads
    }

    /// Mutable access for tests that plant hand-built parameter values.
    pub fn parts_mut(&mut self) -> (&mut Mlp, &mut Mlp, &mut Mlp, &mut [HeadParams]) {
        (
            &mut self.encoder,
            &mut self.key_net,
            &mut self.decoder,
            &mut self.heads,
        )
    }

    pub fn num_params(&self) -> usize {
        self.encoder.num_params()
            + self.key_net.num_params()
            + self.decoder.num_params()
            + self
                .heads
                .iter()
                .map(|h| h.wq.len() + h.wk.len() + h.wv.len())
                .sum::<usize>()
    }

    /// Flattens all parameters in canonical order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.num_params());
        self.encoder.append_flat(&mut flat);
        self.key_net.append_flat(&mut flat);
        self.decoder.append_flat(&mut flat);
        for h in &self.heads {
            flat.extend_from_slice(h.wq.data());
            flat.extend_from_slice(h.wk.data());
            flat.extend_from_slice(h.wv.data());
        }
        flat
    }

    /// Writes a flat vector (in canonical order) back into the structure.
    pub fn set_from_flat(&mut self, flat: &[f64]) -> Result<(), SurrogateError> {
        if flat.len() != self.num_params() {
            return Err(SurrogateError::InvalidConfig(format!(
                "flat parameter vector has {} entries, expected {}",
                flat.len(),
                self.num_params()
            )));
        }
        let mut offset = self.encoder.read_flat(flat);
        offset += self.key_net.read_flat(&flat[offset..]);
        offset += self.decoder.read_flat(&flat[offset..]);
        for h in &mut self.heads {
            for arr in [&mut h.wq, &mut h.wk, &mut h.wv] {
                let len = arr.len();
                arr.data_mut().copy_from_slice(&flat[offset..offset + len]);
                offset += len;
            }
        }
        debug_assert_eq!(offset, flat.len());
        Ok(())
    }

    /// Registers every parameter array on `tape`, in canonical order.
    pub fn bind(&self, tape: &mut Tape) -> NpVars {
        NpVars {
            encoder: self.encoder.bind(tape),
            key_net: self.key_net.bind(tape),
            decoder: self.decoder.bind(tape),
            heads: self
                .heads
                .iter()
                .map(|h| HeadVars {
                    wq: tape.leaf(h.wq.clone()),
                    wk: tape.leaf(h.wk.clone()),
                    wv: tape.leaf(h.wv.clone()),
                })
                .collect(),
        }
    }

    /// Collects gradients for bound parameters into canonical flat order.
    pub fn grads_to_flat(&self, vars: &NpVars, grads: &GradientMap) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.num_params());
        for mlp_vars in [&vars.encoder, &vars.key_net, &vars.decoder] {
            for &(w, b) in &mlp_vars.layers {
                flat.extend_from_slice(grads.get(w).data());
                flat.extend_from_slice(grads.get(b).data());
            }
        }
        for h in &vars.heads {
            flat.extend_from_slice(grads.get(h.wq).data());
            flat.extend_from_slice(grads.get(h.wk).data());
            flat.extend_from_slice(grads.get(h.wv).data());
        }
        flat
    }

    pub fn save(&self, path: &Path) -> Result<(), SurrogateError> {
        let file = File::create(path).map_err(|e| SurrogateError::Io(e.to_string()))?;
        serde_json::to_writer(BufWriter::new(file), &NpParamsDoc::from(self))
            .map_err(|e| SurrogateError::Io(e.to_string()))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SurrogateError> {
        let file = File::open(path).map_err(|e| SurrogateError::Io(e.to_string()))?;
        let doc: NpParamsDoc = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| SurrogateError::Io(e.to_string()))?;
        Self::try_from(doc)
    }
}

/// Portable JSON image: the three networks under named sections, the head
/// projections as flat row-major arrays, and the structural sizes.
#[derive(Debug, Serialize, Deserialize)]
pub struct NpParamsDoc {
    pub r: usize,
    #[serde(rename = "H")]
    pub heads_count: usize,
    pub d: usize,
    pub encoder: MlpDoc,
    pub key_net: MlpDoc,
    pub decoder: MlpDoc,
    pub heads: Vec<HeadDoc>,
    #[serde(default)]
    pub attention_scale: AttentionScale,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HeadDoc {
    pub wq: Vec<f64>,
    pub wk: Vec<f64>,
    pub wv: Vec<f64>,
}

impl From<&NpParams> for NpParamsDoc {
    fn from(p: &NpParams) -> Self {
        NpParamsDoc {
            r: p.embed_dim,
            heads_count: p.heads.len(),
            d: p.input_dim,
            encoder: MlpDoc::from(&p.encoder),
            key_net: MlpDoc::from(&p.key_net),
            decoder: MlpDoc::from(&p.decoder),
            heads: p
                .heads
                .iter()
                .map(|h| HeadDoc {
                    wq: h.wq.data().to_vec(),
                    wk: h.wk.data().to_vec(),
                    wv: h.wv.data().to_vec(),
                })
                .collect(),
            attention_scale: p.attention_scale,
        }
    }
}

impl TryFrom<NpParamsDoc> for NpParams {
    type Error = SurrogateError;

    fn try_from(doc: NpParamsDoc) -> Result<Self, SurrogateError> {
        let bad = |msg: String| SurrogateError::InvalidConfig(msg);
        if doc.heads_count == 0 || doc.r % doc.heads_count != 0 {
            return Err(bad(format!(
                "checkpoint head count {} does not divide width {}",
                doc.heads_count, doc.r
            )));
        }
        if doc.heads.len() != doc.heads_count {
            return Err(bad(format!(
                "checkpoint lists {} heads, expected {}",
                doc.heads.len(),
                doc.heads_count
            )));
        }
        let dh = doc.r / doc.heads_count;
        let encoder = Mlp::try_from(doc.encoder).map_err(|e| bad(format!("encoder: {e}")))?;
        let key_net = Mlp::try_from(doc.key_net).map_err(|e| bad(format!("key net: {e}")))?;
        let decoder = Mlp::try_from(doc.decoder).map_err(|e| bad(format!("decoder: {e}")))?;
        let checks = [
            (encoder.input_dim() == doc.d + 1, "encoder input"),
            (encoder.output_dim() == doc.r, "encoder output"),
            (key_net.input_dim() == doc.d, "key net input"),
            (key_net.output_dim() == doc.r, "key net output"),
            (decoder.input_dim() == doc.r + doc.d, "decoder input"),
            (decoder.output_dim() == 2, "decoder output"),
        ];
        for (ok, what) in checks {
            if !ok {
                return Err(bad(format!("checkpoint {what} width is inconsistent")));
            }
        }
        let heads = doc
            .heads
            .into_iter()
            .enumerate()
            .map(|(i, h)| {
                if h.wq.len() != doc.r * dh || h.wk.len() != doc.r * dh || h.wv.len() != doc.r * dh
                {
                    return Err(bad(format!("head {i} projection size is inconsistent")));
                }
                Ok(HeadParams {
                    wq: RealArray::new(doc.r, dh, h.wq),
                    wk: RealArray::new(doc.r, dh, h.wk),
                    wv: RealArray::new(doc.r, dh, h.wv),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(NpParams {
            encoder,
            key_net,
            decoder,
            heads,
            input_dim: doc.d,
            embed_dim: doc.r,
            attention_scale: doc.attention_scale,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> NpConfig {
        NpConfig {
            input_dim: 2,
            embed_dim: 8,
            num_heads: 2,
            hidden: vec![6],
            attention_scale: AttentionScale::default(),
        }
    }

    #[test]
    fn init_is_deterministic_and_shaped() {
        let cfg = small_cfg();
        let a = NpParams::init(&cfg, 3).unwrap();
        let b = NpParams::init(&cfg, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.encoder().input_dim(), 3);
        assert_eq!(a.key_net().input_dim(), 2);
        assert_eq!(a.decoder().input_dim(), 10);
        assert_eq!(a.decoder().output_dim(), 2);
        assert_eq!(a.heads().len(), 2);
        assert_eq!(a.heads()[0].wq.shape(), [8, 4]);
    }

    #[test]
    fn indivisible_head_count_is_rejected() {
        let mut cfg = small_cfg();
        cfg.num_heads = 3;
        assert!(NpParams::init(&cfg, 0).is_err());
    }

    #[test]
    fn flat_round_trip_is_identity() {
        let params = NpParams::init(&small_cfg(), 11).unwrap();
        let flat = params.to_flat();
        assert_eq!(flat.len(), params.num_params());
        let mut other = NpParams::init(&small_cfg(), 99).unwrap();
        other.set_from_flat(&flat).unwrap();
        // the flat vector carries parameter values only, not seed metadata
        assert_eq!(other.to_flat(), flat);
        assert_eq!(other.heads()[1].wv, params.heads()[1].wv);
    }

    #[test]
    fn checkpoint_round_trip_preserves_everything() {
        let params = NpParams::init(&small_cfg(), 21).unwrap();
        let json = serde_json::to_string(&NpParamsDoc::from(&params)).unwrap();
        for key in ["\"r\":8", "\"H\":2", "\"d\":2", "\"encoder\"", "\"key_net\"", "\"decoder\"", "\"heads\""] {
            assert!(json.contains(key), "missing {key} in {json}");
        }
        let doc: NpParamsDoc = serde_json::from_str(&json).unwrap();
        let back = NpParams::try_from(doc).unwrap();
        assert_eq!(params, back);
    }

    #[test]
    fn inconsistent_checkpoint_is_rejected() {
        let params = NpParams::init(&small_cfg(), 21).unwrap();
        let mut doc = NpParamsDoc::from(&params);
        doc.heads[0].wq.pop();
        assert!(NpParams::try_from(doc).is_err());
    }
}
