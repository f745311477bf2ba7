use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    AdapterDescriptor, Availability, OutputKind, PayloadDialect, RawSupplierResponse, ResponseStatus, Supplier,
    SupplierBehaviorScript, SupplierDraft,
};
use crate::digest::Hasher;
use crate::ingest::TaskEnvelope;
use crate::types::AdapterId;

const WORDS: &[&str] = &[
    "route", "sector", "convoy", "relay", "signal", "pattern", "corridor", "window", "asset", "track", "cluster",
    "baseline", "shift", "report", "logistics", "weather",
];

/// A simulated supplier. Its answers are a pure function of
/// `(model_seed, script, envelope, step)`; two suppliers sharing a model seed
/// and script give the same analytical content in whatever dialect they speak.
#[derive(Debug)]
pub struct ScriptedSupplier {
    adapter_id: AdapterId,
    base_version: String,
    dialect: PayloadDialect,
    model_seed: u64,
    script: SupplierBehaviorScript,
    step: Mutex<u64>,
}

impl ScriptedSupplier {
    pub fn new(descriptor: &AdapterDescriptor, model_seed: u64, script: SupplierBehaviorScript) -> Self {
        ScriptedSupplier {
            adapter_id: descriptor.adapter_id.clone(),
            base_version: descriptor.advertised_version.clone(),
            dialect: descriptor.dialect,
            model_seed,
            script,
            step: Mutex::new(0),
        }
    }

    /// Number of invocations served so far.
    pub fn step(&self) -> u64 {
        *self.step.lock().expect("supplier step lock")
    }

    pub fn script(&self) -> &SupplierBehaviorScript {
        &self.script
    }
}

/// The analytical content a mock model produces for an envelope.
pub(crate) fn draft_for(model_seed: u64, envelope: &TaskEnvelope, perturbation: f64) -> SupplierDraft {
    let mut h = Hasher::new();
    h.field(b"mock-model")
        .update(&model_seed.to_be_bytes())
        .update(envelope.payload_digest.as_bytes())
        .field(envelope.domain_tag.as_str().as_bytes());
    let mut rng = ChaCha8Rng::from_seed(*h.finish().as_bytes());
    let kind = OutputKind::for_domain(&envelope.domain_tag);
    let n = rng.random_range(1..=4);
    let options = (1..=n)
        .map(|i| {
            let text: Vec<&str> = (0..3).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect();
            let score = rng.random_range(0..=1000) as f64 / 1000.0;
            (format!("o{i}"), text.join(" "), (score + perturbation).clamp(0.0, 1.0))
        })
        .collect();
    let confidence = rng.random_range(350..=1000) as f64 / 1000.0;
    let rationale = format!("basis {:08x}", rng.random::<u32>());
    SupplierDraft { kind, options, confidence: (confidence + perturbation).clamp(0.0, 1.0), rationale: Some(rationale) }
}

impl Supplier for ScriptedSupplier {
    fn invoke(&self, envelope: &TaskEnvelope) -> RawSupplierResponse {
        let mut step = self.step.lock().expect("supplier step lock");
        let state = self.script.state_at(*step);
        *step += 1;
        drop(step);

        let (version, perturbation) = match &state.drift {
            Some((v, p)) => (v.clone(), *p),
            None => (self.base_version.clone(), 0.0),
        };
        let response = |status, refusal_reason: Option<&str>, body: String, rationale| RawSupplierResponse {
            adapter_id: self.adapter_id.clone(),
            reported_version: version.clone(),
            status,
            refusal_reason: refusal_reason.map(str::to_owned),
            body,
            rationale_fields_present: rationale,
        };
        if state.withdrawn {
            return response(ResponseStatus::Unavailable, None, String::new(), false);
        }
        if state.refused_domains.contains(&envelope.domain_tag) {
            return response(ResponseStatus::Refused, Some("policy"), String::new(), false);
        }
        let mut draft = draft_for(self.model_seed, envelope, perturbation);
        if state.omit_rationale {
            draft.rationale = None;
        }
        let present = draft.rationale.is_some();
        response(ResponseStatus::Ok, None, self.dialect.encode(&draft), present)
    }

    fn probe(&self) -> Availability {
        let state = self.script.state_at(self.step());
        if state.withdrawn {
            Availability::Withdrawn
        } else if state.omit_rationale {
            Availability::Degraded
        } else {
            Availability::Available
        }
    }
}
