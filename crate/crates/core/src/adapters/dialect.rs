//! Supplier payload dialects. Each mock supplier encodes its answers in one of
//! these shapes; the normalizer decodes according to the descriptor.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::OutputKind;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadDialect {
    /// `{"kind":..,"items":[{"key":..,"text":..,"p":..}],"certainty":..,"explanation":..}`
    #[default]
    Json,
    /// `kind <k>` / `conf <x>` / `opt <id> <score> <text>` / `why <text>` lines.
    LineKv,
}

/// A supplier's answer before it is put on the wire.
#[derive(Clone, Debug, PartialEq)]
pub struct SupplierDraft {
    pub kind: OutputKind,
    /// `(option_id, description, score)`
    pub options: Vec<(String, String, f64)>,
    pub confidence: f64,
    pub rationale: Option<String>,
}

impl PayloadDialect {
    pub fn encode(self, draft: &SupplierDraft) -> String {
        match self {
            PayloadDialect::Json => {
                let items: Vec<Value> =
                    draft.options.iter().map(|(k, t, p)| json!({"key": k, "text": t, "p": p})).collect();
                let mut v = json!({"kind": draft.kind.as_str(), "items": items, "certainty": draft.confidence});
                if let Some(r) = &draft.rationale {
                    v["explanation"] = Value::String(r.clone());
                }
                v.to_string()
            }
            PayloadDialect::LineKv => {
                let mut out = format!("kind {}\nconf {}\n", draft.kind.as_str(), draft.confidence);
                for (k, t, p) in &draft.options {
                    out.push_str(&format!("opt {k} {p} {t}\n"));
                }
                if let Some(r) = &draft.rationale {
                    out.push_str(&format!("why {r}\n"));
                }
                out
            }
        }
    }

    pub fn decode(self, body: &str) -> Result<SupplierDraft, String> {
        match self {
            PayloadDialect::Json => decode_json(body),
            PayloadDialect::LineKv => decode_lines(body),
        }
    }
}

fn parse_kind(s: &str) -> Result<OutputKind, String> {
    OutputKind::parse(s).ok_or_else(|| format!("unsupported output kind `{s}`"))
}

fn decode_json(body: &str) -> Result<SupplierDraft, String> {
    let v: Value = serde_json::from_str(body).map_err(|e| format!("json: {e}"))?;
    let kind = parse_kind(v["kind"].as_str().ok_or("missing kind")?)?;
    let confidence = v["certainty"].as_f64().ok_or("missing certainty")?;
    let mut options = Vec::new();
    for item in v["items"].as_array().ok_or("missing items")? {
        let key = item["key"].as_str().ok_or("item without key")?;
        let text = item["text"].as_str().ok_or("item without text")?;
        let p = item["p"].as_f64().ok_or("item without p")?;
        options.push((key.to_owned(), text.to_owned(), p));
    }
    let rationale = match &v["explanation"] {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        _ => return Err("explanation is not a string".into()),
    };
    Ok(SupplierDraft { kind, options, confidence, rationale })
}

fn decode_lines(body: &str) -> Result<SupplierDraft, String> {
    let (mut kind, mut confidence, mut rationale) = (None, None, None);
    let mut options = Vec::new();
    for line in body.lines().filter(|l| !l.is_empty()) {
        let (tag, rest) = line.split_once(' ').ok_or_else(|| format!("bad line `{line}`"))?;
        match tag {
            "kind" => kind = Some(parse_kind(rest)?),
            "conf" => confidence = Some(rest.parse::<f64>().map_err(|e| format!("conf: {e}"))?),
            "why" => rationale = Some(rest.to_owned()),
            "opt" => {
                let mut parts = rest.splitn(3, ' ');
                let (Some(id), Some(score), text) = (parts.next(), parts.next(), parts.next().unwrap_or("")) else {
                    return Err(format!("bad option `{rest}`"));
                };
                let score = score.parse::<f64>().map_err(|e| format!("score: {e}"))?;
                options.push((id.to_owned(), text.to_owned(), score));
            }
            other => return Err(format!("unknown field `{other}`")),
        }
    }
    Ok(SupplierDraft {
        kind: kind.ok_or("missing kind")?,
        options,
        confidence: confidence.ok_or("missing conf")?,
        rationale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn dialects_agree_on_every_draft(
            conf in 0.0f64..=1.0,
            opts in prop::collection::vec(("[a-z][a-z0-9]{0,6}", "[a-zA-Z ]{0,20}", 0.0f64..=1.0), 0..5),
            why in prop::option::of("[a-zA-Z ]{1,20}"),
            k in 0usize..4,
        ) {
            let draft = SupplierDraft { kind: OutputKind::ALL[k], options: opts, confidence: conf, rationale: why };
            for d in [PayloadDialect::Json, PayloadDialect::LineKv] {
                prop_assert_eq!(d.decode(&d.encode(&draft)).unwrap(), draft.clone());
            }
        }
    }

    #[test]
    fn garbage_is_rejected() {
        assert!(PayloadDialect::Json.decode("{not json").is_err());
        assert!(PayloadDialect::LineKv.decode("conf 0.5\n").is_err());
        assert!(PayloadDialect::LineKv.decode("kind summary\nconf x\n").is_err());
    }
}
