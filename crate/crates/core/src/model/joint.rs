//! The assembled model: classification, label-conditioned generation, checkpoints.

use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor, Var, D};
use candle_nn::ops::log_softmax;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::networks::{Bridge, Decoder, Encoder, MlmHead};
use super::nn::{ForwardCtx, ParamInit, Result};
use super::template::{build_input, Slot, TemplateInput, SCAFFOLD_TEXT};
use super::tokenizer::{Tokenizer, BOS_ID, EOS_ID, UNK_ID};
use super::verbalizer::{Aggregation, VerbalizerMap};
use super::{LabelWordMode, ModelConfig, ModelError, TeacherLabel};
use crate::corpus::{DiscourseInstance, RelationLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Encoder,
    /// Masked-LM head, used only by classification.
    ClassifierHead,
    Bridge,
    Decoder,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 4] = [Self::Encoder, Self::ClassifierHead, Self::Bridge, Self::Decoder];

    fn prefix(self) -> &'static str {
        match self {
            Self::Encoder => "encoder",
            Self::ClassifierHead => "mlm_head",
            Self::Bridge => "bridge",
            Self::Decoder => "decoder",
        }
    }

    fn file(self) -> &'static str {
        match self {
            Self::Encoder | Self::ClassifierHead => "encoder.safetensors",
            Self::Bridge => "bridge.safetensors",
            Self::Decoder => "decoder.safetensors",
        }
    }
}

#[derive(Clone)]
pub struct Param {
    pub name: String,
    pub group: ParamGroup,
    pub var: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierOutput {
    /// Probability of each verbalizer connective at the mask, in verbalizer order.
    pub connective_scores: Vec<f64>,
    pub relation_scores: [f64; 4],
    pub predicted: RelationLabel,
    pub predicted_connective: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub max_new_tokens: usize,
    /// 1 is greedy.
    pub beam_width: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            max_new_tokens: 48,
            beam_width: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generated {
    pub ids: Vec<u32>,
    pub text: String,
    /// The budget ran out before an end token.
    pub truncated: bool,
}

/// Classification followed by generation conditioned on the prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Explained {
    pub classifier: ClassifierOutput,
    pub label_word: String,
    pub generated: Generated,
}

pub struct JointOutput {
    pub classifier: ClassifierOutput,
    /// Negative log-probability of the gold relation.
    pub class_loss: Tensor,
    /// Log-likelihood of each target token, end token included.
    pub token_loglik: Tensor,
    /// Mean negative log-likelihood over target tokens.
    pub gen_loss: Tensor,
}

/// An instance tokenized once for repeated training passes.
#[derive(Debug, Clone)]
pub struct PreparedInstance {
    pub id: String,
    pub arg1: Vec<u32>,
    pub arg2: Vec<u32>,
    pub gold: RelationLabel,
    pub gold_word: String,
    pub target: Vec<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    config: ModelConfig,
    aggregation: Aggregation,
    tie_order: Vec<RelationLabel>,
    label_word: LabelWordMode,
}

pub struct JointModel {
    pub config: ModelConfig,
    pub tokenizer: Tokenizer,
    pub verbalizer: VerbalizerMap,
    pub encoder: Encoder,
    head: MlmHead,
    bridge: Bridge,
    decoder: Decoder,
    params: Vec<Param>,
    connective_ids: Tensor,
    groups: [Tensor; 4],
    device: Device,
}

impl JointModel {
    /// A vocabulary covering the templates, the verbalizer and every text in `instances`.
    pub fn build_tokenizer(instances: &[DiscourseInstance], verbalizer: &VerbalizerMap) -> Tokenizer {
        let mut texts: Vec<String> = SCAFFOLD_TEXT.iter().map(|s| s.to_string()).collect();
        texts.extend(verbalizer.entries().iter().map(|(c, _)| c.clone()));
        texts.extend(RelationLabel::ALL.iter().map(|l| l.as_str().to_string()));
        for inst in instances {
            texts.push(inst.arg1.clone());
            texts.push(inst.arg2.clone());
            if let Some(c) = &inst.connective {
                texts.push(c.clone());
            }
            if let Some(e) = &inst.explanation {
                texts.push(e.text());
            }
        }
        Tokenizer::build(texts.iter().map(String::as_str))
    }

    /// Randomly initialized weights; each component draws from its own seeded stream.
    pub fn new(config: ModelConfig, tokenizer: Tokenizer, verbalizer: VerbalizerMap, seed: u64) -> Result<Self> {
        config.validate()?;
        let device = Device::Cpu;
        let dtype = config.precision.dtype();
        let vocab = tokenizer.len();
        let c = &config;
        let mut params = Vec::new();
        let mut build = |group: ParamGroup| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(group as u64);
            let mut init = ParamInit::new(&mut rng, dtype, &device);
            init.push(group.prefix());
            let module = match group {
                ParamGroup::Encoder => Module::Encoder(Encoder::new(
                    &mut init,
                    vocab,
                    c.hidden,
                    c.heads,
                    c.ffn,
                    c.encoder_layers,
                    c.max_len,
                )?),
                ParamGroup::ClassifierHead => Module::Head(MlmHead::new(&mut init, c.hidden, vocab)?),
                ParamGroup::Bridge => Module::Bridge(Bridge::new(
                    &mut init,
                    c.hidden,
                    c.heads,
                    c.ffn,
                    c.bridge_layers,
                    c.decoder_hidden,
                )?),
                ParamGroup::Decoder => Module::Decoder(Decoder::new(
                    &mut init,
                    vocab,
                    c.decoder_hidden,
                    c.decoder_heads,
                    c.decoder_ffn,
                    c.decoder_layers,
                    c.max_target_len,
                )?),
            };
            params.extend(init.vars.into_iter().map(|(name, var)| Param { name, group, var }));
            Ok::<_, ModelError>(module)
        };
        let Module::Encoder(encoder) = build(ParamGroup::Encoder)? else { unreachable!() };
        let Module::Head(head) = build(ParamGroup::ClassifierHead)? else { unreachable!() };
        let Module::Bridge(bridge) = build(ParamGroup::Bridge)? else { unreachable!() };
        let Module::Decoder(decoder) = build(ParamGroup::Decoder)? else { unreachable!() };

        let mut conn = Vec::with_capacity(verbalizer.len());
        for (word, _) in verbalizer.entries() {
            // multi-token connectives are scored by their first token
            match tokenizer.encode(word).first() {
                Some(&id) if id != UNK_ID => conn.push(id),
                _ => return Err(ModelError::Vocab(format!("connective {word:?} is not in the vocabulary"))),
            }
        }
        let connective_ids = Tensor::new(conn.as_slice(), &device)?;
        let groups = verbalizer.groups().map(|g| {
            let idx: Vec<u32> = g.iter().map(|&i| i as u32).collect();
            Tensor::new(idx.as_slice(), &device).expect("index tensor")
        });
        Ok(Self {
            config,
            tokenizer,
            verbalizer,
            encoder,
            head,
            bridge,
            decoder,
            params,
            connective_ids,
            groups,
            device,
        })
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn dtype(&self) -> DType {
        self.config.precision.dtype()
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn vars(&self, group: ParamGroup) -> Vec<Var> {
        self.params
            .iter()
            .filter(|p| p.group == group)
            .map(|p| p.var.clone())
            .collect()
    }

    pub fn snapshot(&self) -> Result<Vec<Tensor>> {
        Ok(self
            .params
            .iter()
            .map(|p| p.var.as_tensor().copy())
            .collect::<candle_core::Result<_>>()?)
    }

    pub fn restore(&self, snapshot: &[Tensor]) -> Result<()> {
        for (p, t) in self.params.iter().zip(snapshot) {
            p.var.set(t)?;
        }
        Ok(())
    }

    pub fn arg_tokens(&self, text: &str) -> Vec<u32> {
        self.tokenizer.encode(text.trim())
    }

    pub fn classification_input(&self, arg1: &[u32], arg2: &[u32]) -> Result<TemplateInput> {
        build_input(&self.tokenizer, arg1, arg2, Slot::Mask, self.config.max_len)
    }

    pub fn generation_input(&self, arg1: &[u32], arg2: &[u32], label_word: &str) -> Result<TemplateInput> {
        let word = self.tokenizer.encode(label_word);
        if word.is_empty() {
            return Err(ModelError::Vocab("label word is empty".into()));
        }
        build_input(&self.tokenizer, arg1, arg2, Slot::LabelWord(&word), self.config.max_len)
    }

    /// The word placed in the generation template for `label`.
    pub fn label_word(&self, label: RelationLabel, connective: Option<&str>) -> String {
        match self.config.label_word {
            LabelWordMode::Relation => label.as_str().to_string(),
            LabelWordMode::Connective => match connective {
                Some(c) if self.verbalizer.relation_of(c) == Some(label) => c.to_string(),
                _ => self.verbalizer.canonical_connective(label).to_string(),
            },
        }
    }

    /// `(H_last, h_mask)` for a classification input.
    pub fn encode(&self, input: &TemplateInput, ctx: &mut ForwardCtx) -> Result<(Tensor, Tensor)> {
        let h = self.encoder.forward(&input.ids, ctx)?;
        let h_mask = h.get(input.slot)?;
        Ok((h, h_mask))
    }

    /// Log-probabilities of the verbalizer connectives at the slot, from token embeddings.
    pub fn connective_logprobs(&self, input: &TemplateInput, tok_emb: &Tensor, ctx: &mut ForwardCtx) -> Result<Tensor> {
        let h = self.encoder.forward_embeddings(tok_emb, ctx)?;
        let logits = self.head.forward(&h.narrow(0, input.slot, 1)?)?.squeeze(0)?;
        Ok(log_softmax(&logits, 0)?.index_select(&self.connective_ids, 0)?)
    }

    /// Relation log-scores `[4]` aggregated from connective log-probabilities.
    pub fn relation_logscores(&self, conn_logprobs: &Tensor) -> Result<Tensor> {
        let per = self
            .groups
            .iter()
            .map(|idx| {
                let sub = conn_logprobs.index_select(idx, 0)?;
                match self.verbalizer.aggregation {
                    Aggregation::Max => sub.max(0),
                    Aggregation::Sum => sub.log_sum_exp(0),
                }
            })
            .collect::<candle_core::Result<Vec<_>>>()?;
        Ok(Tensor::stack(&per, 0)?)
    }

    fn output_from(&self, conn_logprobs: &Tensor) -> Result<ClassifierOutput> {
        let scores: Vec<f64> = conn_logprobs
            .to_dtype(DType::F64)?
            .to_vec1::<f64>()?
            .into_iter()
            .map(f64::exp)
            .collect();
        let d = self.verbalizer.decide(&scores);
        Ok(ClassifierOutput {
            relation_scores: d.relation_scores,
            predicted: d.predicted,
            predicted_connective: self.verbalizer.connective(d.predicted_connective).to_string(),
            connective_scores: scores,
        })
    }

    pub fn classify_tokens(&self, arg1: &[u32], arg2: &[u32], ctx: &mut ForwardCtx) -> Result<ClassifierOutput> {
        let input = self.classification_input(arg1, arg2)?;
        let emb = self.encoder.token_embeddings(&input.ids)?;
        self.output_from(&self.connective_logprobs(&input, &emb, ctx)?)
    }

    pub fn classify(&self, arg1: &str, arg2: &str) -> Result<ClassifierOutput> {
        self.classify_tokens(&self.arg_tokens(arg1), &self.arg_tokens(arg2), &mut ForwardCtx::eval())
    }

    pub fn classify_instance(&self, inst: &DiscourseInstance) -> Result<ClassifierOutput> {
        self.classify(&inst.arg1, &inst.arg2).map_err(|e| e.for_instance(&inst.id))
    }

    /// Bridge output for a generation input, from token embeddings.
    pub fn memory(&self, tok_emb: &Tensor, ctx: &mut ForwardCtx) -> Result<Tensor> {
        let h = self.encoder.forward_embeddings(tok_emb, ctx)?;
        self.bridge.forward(&h, ctx)
    }

    pub fn bridge_forward(&self, h: &Tensor, ctx: &mut ForwardCtx) -> Result<Tensor> {
        self.bridge.forward(h, ctx)
    }

    /// Teacher-forced log-likelihood of each token of `target` followed by the end token.
    pub fn score(&self, memory: &Tensor, target: &[u32], ctx: &mut ForwardCtx) -> Result<Tensor> {
        let mut input = Vec::with_capacity(target.len() + 1);
        input.push(BOS_ID);
        input.extend_from_slice(target);
        let mut labels = target.to_vec();
        labels.push(EOS_ID);
        let logits = self.decoder.forward(&input, memory, ctx)?;
        let lp = log_softmax(&logits, D::Minus1)?;
        let vocab = lp.dim(1)?;
        let mut onehot = vec![0.0f64; labels.len() * vocab];
        for (i, &l) in labels.iter().enumerate() {
            onehot[i * vocab + l as usize] = 1.0;
        }
        let onehot = Tensor::from_vec(onehot, (labels.len(), vocab), &self.device)?.to_dtype(lp.dtype())?;
        Ok((lp * onehot)?.sum(1)?)
    }

    pub fn generate(&self, memory: &Tensor, cfg: &DecodeConfig) -> Result<Generated> {
        let budget = cfg.max_new_tokens.min(self.decoder.max_len() - 1);
        let (ids, finished) = if cfg.beam_width <= 1 {
            self.greedy(memory, budget)?
        } else {
            self.beam(memory, budget, cfg.beam_width)?
        };
        Ok(Generated {
            text: self.tokenizer.decode(&ids),
            ids,
            truncated: !finished,
        })
    }

    fn next_logprobs(&self, prefix: &[u32], memory: &Tensor) -> Result<Vec<f64>> {
        let logits = self.decoder.forward(prefix, memory, &mut ForwardCtx::eval())?;
        let last = logits.get(prefix.len() - 1)?;
        Ok(log_softmax(&last, 0)?.to_dtype(DType::F64)?.to_vec1::<f64>()?)
    }

    fn greedy(&self, memory: &Tensor, budget: usize) -> Result<(Vec<u32>, bool)> {
        let mut prefix = vec![BOS_ID];
        for _ in 0..budget {
            let lp = self.next_logprobs(&prefix, memory)?;
            let next = argmax(&lp) as u32;
            if next == EOS_ID {
                return Ok((prefix[1..].to_vec(), true));
            }
            prefix.push(next);
        }
        Ok((prefix[1..].to_vec(), false))
    }

    fn beam(&self, memory: &Tensor, budget: usize, width: usize) -> Result<(Vec<u32>, bool)> {
        // (prefix, summed log-prob, finished)
        let mut beams: Vec<(Vec<u32>, f64, bool)> = vec![(vec![BOS_ID], 0.0, false)];
        for _ in 0..budget {
            if beams.iter().all(|b| b.2) {
                break;
            }
            let mut cand = Vec::new();
            for (prefix, score, done) in &beams {
                if *done {
                    cand.push((prefix.clone(), *score, true));
                    continue;
                }
                let lp = self.next_logprobs(prefix, memory)?;
                let mut order: Vec<usize> = (0..lp.len()).collect();
                order.sort_by(|&a, &b| lp[b].total_cmp(&lp[a]).then(a.cmp(&b)));
                for &tok in order.iter().take(width) {
                    let mut p = prefix.clone();
                    let done = tok as u32 == EOS_ID;
                    if !done {
                        p.push(tok as u32);
                    }
                    cand.push((p, score + lp[tok], done));
                }
            }
            cand.sort_by(|a, b| b.1.total_cmp(&a.1));
            cand.truncate(width);
            beams = cand;
        }
        let (prefix, _, done) = beams.into_iter().next().expect("at least one beam");
        Ok((prefix[1..].to_vec(), done))
    }

    pub fn generate_explanation(&self, arg1: &str, arg2: &str, label_word: &str, cfg: &DecodeConfig) -> Result<Generated> {
        let input = self.generation_input(&self.arg_tokens(arg1), &self.arg_tokens(arg2), label_word)?;
        let emb = self.encoder.token_embeddings(&input.ids)?;
        let memory = self.memory(&emb, &mut ForwardCtx::eval())?;
        self.generate(&memory, cfg)
    }

    /// Classifies, then explains conditioned on the prediction.
    pub fn explain_tokens(&self, arg1: &[u32], arg2: &[u32], cfg: &DecodeConfig, ctx: &mut ForwardCtx) -> Result<Explained> {
        let classifier = self.classify_tokens(arg1, arg2, ctx)?;
        let label_word = self.label_word(classifier.predicted, Some(&classifier.predicted_connective));
        let input = self.generation_input(arg1, arg2, &label_word)?;
        let emb = self.encoder.token_embeddings(&input.ids)?;
        let memory = self.memory(&emb, ctx)?;
        let generated = self.generate(&memory, cfg)?;
        Ok(Explained {
            classifier,
            label_word,
            generated,
        })
    }

    pub fn explain(&self, arg1: &str, arg2: &str, cfg: &DecodeConfig) -> Result<Explained> {
        self.explain_tokens(&self.arg_tokens(arg1), &self.arg_tokens(arg2), cfg, &mut ForwardCtx::eval())
    }

    pub fn prepare(&self, inst: &DiscourseInstance) -> Result<PreparedInstance> {
        let gold = inst.label.ok_or_else(|| ModelError::MissingLabel(inst.id.clone()))?;
        let expl = inst
            .explanation
            .as_ref()
            .ok_or_else(|| ModelError::MissingExplanation(inst.id.clone()))?;
        let mut target = self.tokenizer.encode(&expl.text());
        target.truncate(self.config.max_target_len - 1);
        Ok(PreparedInstance {
            id: inst.id.clone(),
            arg1: self.arg_tokens(&inst.arg1),
            arg2: self.arg_tokens(&inst.arg2),
            gold,
            gold_word: self.label_word(gold, inst.connective.as_deref()),
            target,
        })
    }

    /// Training losses; a branch that is not requested is not computed at all.
    pub fn losses(
        &self,
        inst: &PreparedInstance,
        classification: bool,
        generation: bool,
        ctx: &mut ForwardCtx,
    ) -> Result<(Option<Tensor>, Option<Tensor>)> {
        let need_pred = generation && self.config.teacher_label == TeacherLabel::Predicted;
        let mut class_loss = None;
        let mut word = inst.gold_word.clone();
        if classification || need_pred {
            let input = self.classification_input(&inst.arg1, &inst.arg2)?;
            let emb = self.encoder.token_embeddings(&input.ids)?;
            let clp = self.connective_logprobs(&input, &emb, ctx)?;
            if need_pred {
                let out = self.output_from(&clp)?;
                word = self.label_word(out.predicted, Some(&out.predicted_connective));
            }
            if classification {
                let rel = log_softmax(&self.relation_logscores(&clp)?, 0)?;
                class_loss = Some(rel.get(inst.gold.index())?.neg()?);
            }
        }
        let gen_loss = if generation {
            let input = self.generation_input(&inst.arg1, &inst.arg2, &word)?;
            let emb = self.encoder.token_embeddings(&input.ids)?;
            let memory = self.memory(&emb, ctx)?;
            Some(self.score(&memory, &inst.target, ctx)?.mean_all()?.neg()?)
        } else {
            None
        };
        Ok((class_loss, gen_loss))
    }

    /// Both passes on one instance, teacher-forced against its explanation.
    pub fn forward_joint(&self, inst: &DiscourseInstance, ctx: &mut ForwardCtx) -> Result<JointOutput> {
        let p = self.prepare(inst)?;
        let input = self.classification_input(&p.arg1, &p.arg2).map_err(|e| e.for_instance(&p.id))?;
        let emb = self.encoder.token_embeddings(&input.ids)?;
        let clp = self.connective_logprobs(&input, &emb, ctx)?;
        let classifier = self.output_from(&clp)?;
        let class_loss = log_softmax(&self.relation_logscores(&clp)?, 0)?.get(p.gold.index())?.neg()?;
        let word = match self.config.teacher_label {
            TeacherLabel::Gold => p.gold_word.clone(),
            TeacherLabel::Predicted => self.label_word(classifier.predicted, Some(&classifier.predicted_connective)),
        };
        let ginput = self.generation_input(&p.arg1, &p.arg2, &word).map_err(|e| e.for_instance(&p.id))?;
        let gemb = self.encoder.token_embeddings(&ginput.ids)?;
        let memory = self.memory(&gemb, ctx)?;
        let token_loglik = self.score(&memory, &p.target, ctx)?;
        let gen_loss = token_loglik.mean_all()?.neg()?;
        Ok(JointOutput {
            classifier,
            class_loss,
            token_loglik,
            gen_loss,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| ModelError::io(dir, e))?;
        let mut files: HashMap<&str, HashMap<String, Tensor>> =
            ParamGroup::ALL.iter().map(|g| (g.file(), HashMap::new())).collect();
        for p in &self.params {
            files
                .entry(p.group.file())
                .or_default()
                .insert(p.name.clone(), p.var.as_tensor().clone());
        }
        for (file, tensors) in &files {
            candle_core::safetensors::save(tensors, dir.join(file))?;
        }
        let vpath = dir.join("verbalizer.tsv");
        std::fs::write(&vpath, self.verbalizer.to_tsv()).map_err(|e| ModelError::io(&vpath, e))?;
        self.tokenizer.save(&dir.join("vocab.txt"))?;
        let manifest = Manifest {
            format_version: 1,
            config: self.config.clone(),
            aggregation: self.verbalizer.aggregation,
            tie_order: RelationLabel::ALL.to_vec(),
            label_word: self.config.label_word,
        };
        let mpath = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&mpath, text).map_err(|e| ModelError::io(&mpath, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mpath = dir.join("manifest.json");
        let text = std::fs::read_to_string(&mpath).map_err(|e| ModelError::io(&mpath, e))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| ModelError::Checkpoint(format!("{}: {e}", mpath.display())))?;
        if manifest.tie_order != RelationLabel::ALL {
            return Err(ModelError::Checkpoint(format!(
                "unsupported tie order {:?}",
                manifest.tie_order
            )));
        }
        let tokenizer = Tokenizer::load(&dir.join("vocab.txt"))?;
        let verbalizer = VerbalizerMap::load(&dir.join("verbalizer.tsv"), manifest.aggregation)?;
        let model = Self::new(manifest.config, tokenizer, verbalizer, 0)?;
        let mut loaded: HashMap<&str, HashMap<String, Tensor>> = HashMap::new();
        for group in ParamGroup::ALL {
            if !loaded.contains_key(group.file()) {
                let t = candle_core::safetensors::load(dir.join(group.file()), &model.device)?;
                loaded.insert(group.file(), t);
            }
        }
        for p in &model.params {
            let t = loaded[p.group.file()]
                .get(&p.name)
                .ok_or_else(|| ModelError::Checkpoint(format!("missing tensor {}", p.name)))?;
            if t.dims() != p.var.dims() {
                return Err(ModelError::Shape {
                    expected: p.var.dims().to_vec(),
                    got: t.dims().to_vec(),
                });
            }
            p.var.set(&t.to_dtype(model.dtype())?)?;
        }
        Ok(model)
    }
}

enum Module {
    Encoder(Encoder),
    Head(MlmHead),
    Bridge(Bridge),
    Decoder(Decoder),
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}
