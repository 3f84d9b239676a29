use serde_json::{json, Value};

fn number(min: f64, default: f64) -> Value {
    json!({"type": "number", "minimum": min, "default": default})
}

fn integer(min: u64, default: u64) -> Value {
    json!({"type": "integer", "minimum": min, "default": default})
}

fn session_config() -> Value {
    json!({
        "type": "object",
        "additionalProperties": false,
        "properties": {
            "omega": number(0.0, 1.0),
            "nu": number(0.0, 0.5),
            "lambda0": {"type": "number", "exclusiveMinimum": 0.0, "default": 1.0},
            "reg": number(0.0, 1.0),
            "k": integer(1, 40),
            "M": integer(1, 128),
            "T": integer(0, 100),
            "seed": integer(0, 0),
            "gradient_mode": {"enum": ["last-layer", "full"], "default": "last-layer"},
            "cov_mode": {"enum": ["full", "diagonal"], "default": "full"},
            "cov_update_mode": {"enum": ["per-position", "per-round"], "default": "per-position"},
            "feedback_mode": {"enum": ["deterministic", "btl-stochastic"], "default": "deterministic"},
            "use_log_prob": {"type": "boolean", "default": false},
            "hidden": integer(1, 64),
            "embed_dim": integer(1, 32),
            "train_opts": {
                "type": "object",
                "additionalProperties": false,
                "properties": {
                    "lr": {"type": "number", "exclusiveMinimum": 0.0, "default": 5e-4},
                    "batch_size": integer(1, 8),
                    "epochs": integer(0, 50),
                    "beta1": number(0.0, 0.9),
                    "beta2": number(0.0, 0.999),
                    "eps": {"type": "number", "exclusiveMinimum": 0.0, "default": 1e-8},
                    "weight_decay": {"type": "boolean", "default": true}
                }
            },
            "model": {
                "oneOf": [
                    {"type": "object", "required": ["kind"], "properties": {
                        "kind": {"const": "synthetic"},
                        "vocab_size": integer(4, 64),
                        "embed_dim": integer(1, 16),
                        "context_window": integer(1, 2),
                        "seed": integer(0, 7)}},
                    {"type": "object", "required": ["kind", "corpus"], "properties": {
                        "kind": {"const": "ngram"},
                        "corpus": {"type": "string"},
                        "order": {"enum": [2, 3], "default": 2},
                        "alpha": {"type": "number", "exclusiveMinimum": 0.0, "default": 0.1}}},
                    {"type": "object", "required": ["kind", "path"], "properties": {
                        "kind": {"const": "dump"},
                        "path": {"type": "string"}}}
                ]
            },
            "oracle": {
                "type": "object",
                "required": ["kind"],
                "properties": {
                    "kind": {"enum": ["linear", "concise", "verbose", "lexicon"]},
                    "seed": {"type": "integer"},
                    "words": {"type": "array", "items": {"type": "string"}},
                    "file": {"type": "string"},
                    "temperature": {"type": "number", "exclusiveMinimum": 0.0, "default": 1.0}
                }
            }
        }
    })
}

/// Request and response schemas of every route.
pub fn document() -> Value {
    let error = json!({
        "type": "object",
        "required": ["code", "message"],
        "properties": {"code": {"type": "string"}, "message": {"type": "string"}, "field": {"type": "string"}}
    });
    let query =
        json!({"type": "object", "required": ["query"], "properties": {"query": {"type": "string", "minLength": 1}}});
    json!({
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "error": error,
        "routes": {
            "POST /sessions": {
                "request": session_config(),
                "response": {"type": "object", "required": ["session_id", "config_hash", "created_at"], "properties": {
                    "session_id": {"type": "string"}, "config_hash": {"type": "string"}, "created_at": {"type": "integer"}}}
            },
            "POST /sessions/{id}/query": {
                "request": query.clone(),
                "response": {"type": "object", "required": ["pair_id", "response_a", "response_b"], "properties": {
                    "pair_id": {"type": "string"}, "response_a": {"type": "string"}, "response_b": {"type": "string"}}}
            },
            "POST /sessions/{id}/feedback": {
                "request": {"type": "object", "required": ["pair_id", "preferred"], "properties": {
                    "pair_id": {"type": "string"}, "preferred": {"enum": ["a", "b"]}}},
                "response": {"type": "object", "required": ["round", "train_loss"], "properties": {
                    "round": {"type": "integer"}, "train_loss": {"type": "number"}}}
            },
            "GET /sessions/{id}/metrics": {
                "response": {"type": "object", "required": ["rows", "theta_rounds"], "properties": {
                    "rows": {"type": "array", "items": {"type": "object", "required": ["round", "train_loss", "mean_bonus"], "properties": {
                        "round": {"type": "integer"}, "train_loss": {"type": "number"}, "mean_bonus": {"type": "number"}}}},
                    "theta_rounds": {"type": "integer"},
                    "config_hash": {"type": "string"},
                    "pending_pair_id": {"type": ["string", "null"]}}}
            },
            "POST /sessions/{id}/deploy": {
                "request": query,
                "response": {"type": "object", "required": ["response"], "properties": {"response": {"type": "string"}}}
            }
        }
    })
}
